//! Ink data model and the canonical text format.
//!
//! An [`InkCharacter`] is an ordered list of strokes, each an ordered list of
//! points in device units (x rightward, y downward). Labels are indices into
//! a shared [`LabelAlphabet`].

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Stroke {
    pub points: Vec<Point>,
}

impl Stroke {
    pub fn new(points: Vec<Point>) -> Self {
        Stroke { points }
    }

    pub fn from_xy(xy: &[(f64, f64)]) -> Self {
        Stroke {
            points: xy.iter().map(|&(x, y)| Point::new(x, y)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct InkCharacter {
    pub strokes: Vec<Stroke>,
    pub label: Option<usize>,
    pub writer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InkError {
    #[error("character has no strokes")]
    EmptyCharacter,
    #[error("stroke {stroke} has no points")]
    EmptyStroke { stroke: usize },
    #[error("non-finite coordinate at stroke {stroke}, point {point}")]
    NonFiniteCoordinate { stroke: usize, point: usize },
}

impl InkCharacter {
    pub fn new(strokes: Vec<Stroke>) -> Self {
        InkCharacter {
            strokes,
            label: None,
            writer: None,
        }
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = Some(label);
        self
    }

    /// Builds an unlabeled character from nested `[x, y]` lists.
    pub fn from_nested(strokes: &[Vec<[f64; 2]>]) -> Self {
        InkCharacter::new(
            strokes
                .iter()
                .map(|s| Stroke::new(s.iter().map(|p| Point::new(p[0], p[1])).collect()))
                .collect(),
        )
    }

    pub fn validate(self) -> Result<Self, InkError> {
        self.check()?;
        Ok(self)
    }

    pub fn check(&self) -> Result<(), InkError> {
        if self.strokes.is_empty() {
            return Err(InkError::EmptyCharacter);
        }
        for (si, stroke) in self.strokes.iter().enumerate() {
            if stroke.points.is_empty() {
                return Err(InkError::EmptyStroke { stroke: si });
            }
            for (pi, p) in stroke.points.iter().enumerate() {
                if !p.x.is_finite() || !p.y.is_finite() {
                    return Err(InkError::NonFiniteCoordinate {
                        stroke: si,
                        point: pi,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn points(&self) -> impl Iterator<Item = &Point> {
        self.strokes.iter().flat_map(|s| s.points.iter())
    }

    pub fn point_count(&self) -> usize {
        self.strokes.iter().map(Stroke::len).sum()
    }

    /// Tight axis-aligned box `(min_x, min_y, max_x, max_y)`; `None` for an
    /// ink without points.
    pub fn bounding_box(&self) -> Option<BoundingBox> {
        let mut it = self.points();
        let first = it.next()?;
        let init = BoundingBox {
            min_x: first.x,
            min_y: first.y,
            max_x: first.x,
            max_y: first.y,
        };
        Some(it.fold(init, |b, p| BoundingBox {
            min_x: b.min_x.min(p.x),
            min_y: b.min_y.min(p.y),
            max_x: b.max_x.max(p.x),
            max_y: b.max_y.max(p.y),
        }))
    }

    /// Applies `f` to every point, keeping stroke structure and metadata.
    pub fn map_points(&self, mut f: impl FnMut(Point) -> Point) -> InkCharacter {
        InkCharacter {
            strokes: self
                .strokes
                .iter()
                .map(|s| Stroke::new(s.points.iter().map(|&p| f(p)).collect()))
                .collect(),
            label: self.label,
            writer: self.writer.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl BoundingBox {
    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn as_tuple(&self) -> (f64, f64, f64, f64) {
        (self.min_x, self.min_y, self.max_x, self.max_y)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlphabetError {
    #[error("duplicate alphabet entry {0:?}")]
    Duplicate(String),
}

/// Ordered class names with a reverse index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelAlphabet {
    entries: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelAlphabet {
    pub fn new<I, S>(entries: I) -> Result<Self, AlphabetError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut alphabet = LabelAlphabet::default();
        for e in entries {
            let e = e.into();
            if alphabet.index.contains_key(&e) {
                return Err(AlphabetError::Duplicate(e));
            }
            alphabet.push_new(e);
        }
        Ok(alphabet)
    }

    fn push_new(&mut self, entry: String) -> usize {
        let id = self.entries.len();
        self.index.insert(entry.clone(), id);
        self.entries.push(entry);
        id
    }

    /// Returns the index of `entry`, appending it when absent.
    pub fn intern(&mut self, entry: &str) -> usize {
        match self.index.get(entry) {
            Some(&id) => id,
            None => self.push_new(entry.to_string()),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.entries.get(id).map(String::as_str)
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub samples: Vec<InkCharacter>,
    pub alphabet: LabelAlphabet,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DatasetError {
    #[error("sample {sample}: {source}")]
    InvalidInk { sample: usize, source: InkError },
    #[error("sample {sample}: label {label} outside alphabet of {classes}")]
    LabelOutOfRange {
        sample: usize,
        label: usize,
        classes: usize,
    },
}

impl Dataset {
    pub fn new(samples: Vec<InkCharacter>, alphabet: LabelAlphabet) -> Result<Self, DatasetError> {
        let ds = Dataset { samples, alphabet };
        ds.check()?;
        Ok(ds)
    }

    pub fn check(&self) -> Result<(), DatasetError> {
        for (i, s) in self.samples.iter().enumerate() {
            s.check()
                .map_err(|source| DatasetError::InvalidInk { sample: i, source })?;
            if let Some(label) = s.label {
                if label >= self.alphabet.len() {
                    return Err(DatasetError::LabelOutOfRange {
                        sample: i,
                        label,
                        classes: self.alphabet.len(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Canonical text format

pub const CANONICAL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    MalformedFile { line: usize, message: String },
    #[error("unknown canonical ink version {0}")]
    UnknownVersion(u32),
    #[error("{0:?} cannot be written: contains whitespace or is empty")]
    UnwritableToken(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

fn malformed(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::MalformedFile {
        line,
        message: message.into(),
    }
}

/// Formats a coordinate with a decimal point and no exponent.
fn format_coord(out: &mut String, v: f64) {
    let start = out.len();
    write!(out, "{v}").unwrap();
    if !out[start..].contains('.') {
        out.push_str(".0");
    }
}

fn check_token(s: &str) -> Result<(), FormatError> {
    if s.is_empty() || s.chars().any(char::is_whitespace) {
        return Err(FormatError::UnwritableToken(s.to_string()));
    }
    Ok(())
}

pub fn write_canonical(ds: &Dataset) -> Result<Vec<u8>, FormatError> {
    ds.check()?;
    let mut out = String::new();
    writeln!(out, "INKv{} {}", CANONICAL_VERSION, ds.alphabet.len()).unwrap();
    for e in ds.alphabet.entries() {
        check_token(e)?;
        out.push_str(e);
        out.push('\n');
    }
    for s in &ds.samples {
        out.push_str("S ");
        match s.label {
            Some(l) => write!(out, "{l}").unwrap(),
            None => out.push('-'),
        }
        out.push(' ');
        match &s.writer {
            Some(w) => {
                check_token(w)?;
                if w == "-" {
                    return Err(FormatError::UnwritableToken(w.clone()));
                }
                out.push_str(w);
            }
            None => out.push('-'),
        }
        writeln!(out, " {}", s.strokes.len()).unwrap();
        for stroke in &s.strokes {
            for (i, p) in stroke.points.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                format_coord(&mut out, p.x);
                out.push(',');
                format_coord(&mut out, p.y);
            }
            out.push('\n');
        }
    }
    Ok(out.into_bytes())
}

pub fn read_canonical(bytes: &[u8]) -> Result<Dataset, FormatError> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let line = bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
        malformed(line, "invalid UTF-8")
    })?;
    // Blank lines carry no data anywhere in the format.
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let (hline, header) = lines.next().ok_or_else(|| malformed(1, "missing header"))?;
    let mut head = header.split_whitespace();
    let magic = head.next().unwrap_or_default();
    let version: u32 = magic
        .strip_prefix("INKv")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| malformed(hline, format!("expected INKv<version>, found {magic:?}")))?;
    if version != CANONICAL_VERSION {
        return Err(FormatError::UnknownVersion(version));
    }
    let n_classes: usize = head
        .next()
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| malformed(hline, "expected class count"))?;
    if head.next().is_some() {
        return Err(malformed(hline, "trailing tokens in header"));
    }

    let mut entries = Vec::with_capacity(n_classes);
    for _ in 0..n_classes {
        let (_, l) = lines
            .next()
            .ok_or_else(|| malformed(hline, "alphabet shorter than declared"))?;
        entries.push(l.to_string());
    }
    let alphabet = LabelAlphabet::new(entries).map_err(|e| malformed(hline, e.to_string()))?;

    let mut samples = Vec::new();
    while let Some((ln, l)) = lines.next() {
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 4 || toks[0] != "S" {
            return Err(malformed(ln, "expected `S <class|-> <writer|-> <n_strokes>`"));
        }
        let label = match toks[1] {
            "-" => None,
            t => Some(
                t.parse::<usize>()
                    .map_err(|_| malformed(ln, format!("bad class id {t:?}")))?,
            ),
        };
        let writer = match toks[2] {
            "-" => None,
            w => Some(w.to_string()),
        };
        let n_strokes: usize = toks[3]
            .parse()
            .map_err(|_| malformed(ln, format!("bad stroke count {:?}", toks[3])))?;
        let mut strokes = Vec::with_capacity(n_strokes);
        for _ in 0..n_strokes {
            let (sl, line) = lines
                .next()
                .ok_or_else(|| malformed(ln, "unexpected end of file inside sample"))?;
            let mut points = Vec::new();
            for pair in line.split_whitespace() {
                let (xs, ys) = pair
                    .split_once(',')
                    .ok_or_else(|| malformed(sl, format!("bad point {pair:?}")))?;
                let x: f64 = xs
                    .trim()
                    .parse()
                    .map_err(|_| malformed(sl, format!("bad x in {pair:?}")))?;
                let y: f64 = ys
                    .trim()
                    .parse()
                    .map_err(|_| malformed(sl, format!("bad y in {pair:?}")))?;
                points.push(Point::new(x, y));
            }
            strokes.push(Stroke::new(points));
        }
        samples.push(InkCharacter {
            strokes,
            label,
            writer,
        });
    }
    Ok(Dataset::new(samples, alphabet)?)
}
