//! Import of CASIA `.pot` online character records.
//!
//! Record layout, little-endian:
//!
//! | field        | type      | notes                                  |
//! |--------------|-----------|----------------------------------------|
//! | sample_size  | u16       | total record bytes, header included    |
//! | tag          | [u8; 4]   | GB code in the first two bytes         |
//! | stroke_count | u16       |                                        |
//! | points       | (i16,i16) | `(-1, 0)` ends a stroke, `(-1,-1)` ends the character |

use thiserror::Error;

use crate::ink::{Dataset, InkCharacter, LabelAlphabet, Point, Stroke};

const HEADER_BYTES: usize = 8;
const STROKE_END: (i16, i16) = (-1, 0);
const CHAR_END: (i16, i16) = (-1, -1);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PotError {
    #[error("record at offset {offset}: declares {declared} bytes, {available} available")]
    TruncatedRecord {
        offset: usize,
        declared: usize,
        available: usize,
    },
    #[error("record at offset {offset}: no character terminator before record end")]
    MissingTerminator { offset: usize },
    #[error("record at offset {offset}: declared size {declared}, consumed {consumed}")]
    SizeMismatch {
        offset: usize,
        declared: usize,
        consumed: usize,
    },
    #[error("record at offset {offset}: header says {declared} strokes, found {found}")]
    StrokeCountMismatch {
        offset: usize,
        declared: usize,
        found: usize,
    },
    #[error("record at offset {offset}: character has no points")]
    EmptyCharacter { offset: usize },
}

/// Decodes the significant two tag bytes as GBK, falling back to a hex
/// spelling for codes that do not decode to a single character.
pub fn decode_tag(tag: [u8; 4]) -> String {
    let code = &tag[..2];
    let (text, _, had_errors) = encoding_rs::GBK.decode(code);
    let text = text.trim_end_matches('\0');
    if had_errors || text.chars().count() != 1 || text.chars().any(char::is_whitespace) {
        format!("0x{:02X}{:02X}", code[0], code[1])
    } else {
        text.to_string()
    }
}

fn read_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn read_i16(b: &[u8], at: usize) -> i16 {
    i16::from_le_bytes([b[at], b[at + 1]])
}

/// Parses a stream of concatenated records.
pub fn import_pot(bytes: &[u8]) -> Result<Dataset, PotError> {
    let mut alphabet = LabelAlphabet::default();
    let mut samples = Vec::new();
    let mut offset = 0;
    while offset < bytes.len() {
        let available = bytes.len() - offset;
        if available < 2 {
            return Err(PotError::TruncatedRecord {
                offset,
                declared: HEADER_BYTES,
                available,
            });
        }
        let declared = read_u16(bytes, offset) as usize;
        if declared > available || available < HEADER_BYTES {
            return Err(PotError::TruncatedRecord {
                offset,
                declared,
                available,
            });
        }
        if declared < HEADER_BYTES {
            return Err(PotError::SizeMismatch {
                offset,
                declared,
                consumed: HEADER_BYTES,
            });
        }
        let rec = &bytes[offset..offset + declared];
        let (ink, consumed) = parse_record(rec, offset)?;
        if consumed != declared {
            return Err(PotError::SizeMismatch {
                offset,
                declared,
                consumed,
            });
        }
        let label = decode_tag([rec[2], rec[3], rec[4], rec[5]]);
        let id = alphabet.intern(&label);
        samples.push(ink.with_label(id));
        offset += declared;
    }
    Ok(Dataset { samples, alphabet })
}

fn parse_record(rec: &[u8], offset: usize) -> Result<(InkCharacter, usize), PotError> {
    let declared_strokes = read_u16(rec, 6) as usize;
    let mut strokes = Vec::with_capacity(declared_strokes);
    let mut current = Vec::new();
    let mut strokes_seen = 0;
    let mut at = HEADER_BYTES;
    loop {
        if at + 4 > rec.len() {
            return Err(PotError::MissingTerminator { offset });
        }
        let pair = (read_i16(rec, at), read_i16(rec, at + 2));
        at += 4;
        if pair == CHAR_END {
            break;
        }
        if pair == STROKE_END {
            strokes_seen += 1;
            // Empty strokes carry no ink; dropping them keeps the result valid.
            if !current.is_empty() {
                strokes.push(Stroke::new(std::mem::take(&mut current)));
            }
            continue;
        }
        current.push(Point::new(pair.0 as f64, pair.1 as f64));
    }
    if !current.is_empty() {
        strokes_seen += 1;
        strokes.push(Stroke::new(current));
    }
    if strokes_seen != declared_strokes {
        return Err(PotError::StrokeCountMismatch {
            offset,
            declared: declared_strokes,
            found: strokes_seen,
        });
    }
    if strokes.is_empty() {
        return Err(PotError::EmptyCharacter { offset });
    }
    Ok((InkCharacter::new(strokes), at))
}

/// Encodes one record in the layout above; used for fixtures and export.
pub fn encode_record(tag: [u8; 4], strokes: &[Vec<(i16, i16)>]) -> Vec<u8> {
    let mut body = Vec::new();
    body.extend_from_slice(&tag);
    body.extend_from_slice(&(strokes.len() as u16).to_le_bytes());
    for s in strokes {
        for &(x, y) in s {
            body.extend_from_slice(&x.to_le_bytes());
            body.extend_from_slice(&y.to_le_bytes());
        }
        body.extend_from_slice(&STROKE_END.0.to_le_bytes());
        body.extend_from_slice(&STROKE_END.1.to_le_bytes());
    }
    body.extend_from_slice(&CHAR_END.0.to_le_bytes());
    body.extend_from_slice(&CHAR_END.1.to_le_bytes());
    let mut rec = ((body.len() + 2) as u16).to_le_bytes().to_vec();
    rec.extend_from_slice(&body);
    rec
}
