//! Architecture strings such as `28*32*32 -100C3ReLU -MP2 -N100Sig -N3755`.
//!
//! ```text
//! spec  := input layer*
//! input := INT ('*' INT)*
//! layer := '-' ( INT 'C' INT 'ReLU' | 'MP' INT | 'N' INT 'Sig'? )
//! ```
//!
//! Whitespace may appear between any two tokens. `-N<k>` without `Sig` is a
//! linear layer.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Sigmoid,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerDesc {
    /// Valid (no padding) stride-1 convolution with ReLU.
    Conv { filters: usize, window: usize },
    /// Non-overlapping max pooling.
    MaxPool { window: usize },
    Full { units: usize, activation: Activation },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NetSpec {
    pub input: Vec<usize>,
    pub layers: Vec<LayerDesc>,
}

pub type Shape = Vec<usize>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpecError {
    #[error("empty architecture string")]
    EmptySpec,
    #[error("syntax error at byte {position}: expected {expected}, found {found:?}")]
    SyntaxError {
        position: usize,
        expected: String,
        found: String,
    },
    #[error("layer {layer}: {message}")]
    ShapeError { layer: usize, message: String },
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos >= self.src.len()
    }

    fn error(&self, expected: &str) -> SpecError {
        let found = match self.src[self.pos..].chars().next() {
            Some(c) => c.to_string(),
            None => "end of input".to_string(),
        };
        SpecError::SyntaxError {
            position: self.pos,
            expected: expected.to_string(),
            found,
        }
    }

    fn eat(&mut self, lit: &str) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(lit) {
            self.pos += lit.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, lit: &str) -> Result<(), SpecError> {
        if self.eat(lit) {
            Ok(())
        } else {
            Err(self.error(&format!("`{lit}`")))
        }
    }

    fn positive(&mut self) -> Result<usize, SpecError> {
        self.skip_ws();
        let start = self.pos;
        let digits = self.src[start..]
            .bytes()
            .take_while(u8::is_ascii_digit)
            .count();
        if digits == 0 {
            return Err(self.error("positive integer"));
        }
        let value: usize = self.src[start..start + digits]
            .parse()
            .map_err(|_| self.error("positive integer"))?;
        if value == 0 {
            return Err(self.error("positive integer"));
        }
        self.pos += digits;
        Ok(value)
    }

    fn layer(&mut self) -> Result<LayerDesc, SpecError> {
        self.expect("-")?;
        if self.eat("MP") {
            return Ok(LayerDesc::MaxPool {
                window: self.positive()?,
            });
        }
        if self.eat("N") {
            let units = self.positive()?;
            let activation = if self.eat("Sig") {
                Activation::Sigmoid
            } else {
                Activation::Linear
            };
            return Ok(LayerDesc::Full { units, activation });
        }
        self.skip_ws();
        if !self.src[self.pos..].starts_with(|c: char| c.is_ascii_digit()) {
            return Err(self.error("`MP`, `N` or filter count"));
        }
        let filters = self.positive()?;
        self.expect("C")?;
        let window = self.positive()?;
        self.expect("ReLU")?;
        Ok(LayerDesc::Conv { filters, window })
    }
}

pub fn parse(text: &str) -> Result<NetSpec, SpecError> {
    let mut p = Parser { src: text, pos: 0 };
    if p.at_end() {
        return Err(SpecError::EmptySpec);
    }
    let mut input = vec![p.positive()?];
    while p.eat("*") {
        input.push(p.positive()?);
    }
    if input.len() > 3 {
        return Err(p.error("at most three input dimensions"));
    }
    let mut layers = Vec::new();
    while !p.at_end() {
        layers.push(p.layer()?);
    }
    Ok(NetSpec { input, layers })
}

impl std::str::FromStr for NetSpec {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, SpecError> {
        parse(s)
    }
}

impl fmt::Display for LayerDesc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerDesc::Conv { filters, window } => write!(f, "-{filters}C{window}ReLU"),
            LayerDesc::MaxPool { window } => write!(f, "-MP{window}"),
            LayerDesc::Full {
                units,
                activation: Activation::Sigmoid,
            } => write!(f, "-N{units}Sig"),
            LayerDesc::Full {
                units,
                activation: Activation::Linear,
            } => write!(f, "-N{units}"),
        }
    }
}

impl fmt::Display for NetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dims: Vec<String> = self.input.iter().map(usize::to_string).collect();
        f.write_str(&dims.join("*"))?;
        for l in &self.layers {
            write!(f, " {l}")?;
        }
        Ok(())
    }
}

/// Canonical single-space form.
pub fn render(spec: &NetSpec) -> String {
    spec.to_string()
}

/// Input shape followed by every layer's output shape. Two-dimensional
/// inputs are reported as a single channel.
pub fn infer_shapes(spec: &NetSpec) -> Result<Vec<Shape>, SpecError> {
    let mut shape: Shape = match spec.input[..] {
        [h, w] => vec![1, h, w],
        _ => spec.input.clone(),
    };
    let mut shapes = vec![shape.clone()];
    for (i, layer) in spec.layers.iter().enumerate() {
        let err = |message: String| SpecError::ShapeError { layer: i, message };
        shape = match *layer {
            LayerDesc::Conv { filters, window } => {
                let [_, h, w] = shape[..] else {
                    return Err(err(format!("convolution needs (c,h,w) input, got {shape:?}")));
                };
                if window > h || window > w {
                    return Err(err(format!("window {window} exceeds input {h}x{w}")));
                }
                vec![filters, h - window + 1, w - window + 1]
            }
            LayerDesc::MaxPool { window } => {
                let [c, h, w] = shape[..] else {
                    return Err(err(format!("pooling needs (c,h,w) input, got {shape:?}")));
                };
                if h % window != 0 || w % window != 0 {
                    return Err(err(format!("{h}x{w} not divisible by pooling window {window}")));
                }
                vec![c, h / window, w / window]
            }
            LayerDesc::Full { units, .. } => vec![units],
        };
        shapes.push(shape.clone());
    }
    Ok(shapes)
}

impl NetSpec {
    pub fn input_len(&self) -> usize {
        self.input.iter().product()
    }

    /// Flattened width of the final shape.
    pub fn output_len(&self) -> Result<usize, SpecError> {
        Ok(infer_shapes(self)?.last().map(|s| s.iter().product()).unwrap_or(0))
    }

    /// Splits before the first fully connected layer. The tail takes the
    /// flattened head output as its input.
    pub fn split_at_first_full(&self) -> Result<(NetSpec, NetSpec), SpecError> {
        let cut = self
            .layers
            .iter()
            .position(|l| matches!(l, LayerDesc::Full { .. }))
            .unwrap_or(self.layers.len());
        let head = NetSpec {
            input: self.input.clone(),
            layers: self.layers[..cut].to_vec(),
        };
        let tail = NetSpec {
            input: vec![head.output_len()?],
            layers: self.layers[cut..].to_vec(),
        };
        Ok((head, tail))
    }

    /// Replaces the width of the final fully connected layer.
    pub fn with_output_units(mut self, units: usize) -> NetSpec {
        if let Some(LayerDesc::Full { units: u, .. }) = self.layers.last_mut() {
            *u = units;
        }
        self
    }
}

/// Architecture strings of the four model variants, 3755-class output.
pub mod standard {
    pub const IMDCNN: &str =
        "32*32 -100C3ReLU -MP2 -100C2ReLU -MP2 -100C2ReLU -MP2 -200C2ReLU -MP2 -N100Sig -N3755";
    pub const SSDCNN8: &str =
        "28*32*32 -100C3ReLU -MP2 -100C2ReLU -MP2 -100C2ReLU -MP2 -200C2ReLU -MP2 -N100Sig -N3755";
    pub const NN8: &str = "512 -N300Sig -N200Sig -N3755";
    pub const SSDCNN_DCNN: &str =
        "28*32*32 -100C3ReLU -MP2 -100C2ReLU -MP2 -100C2ReLU -MP2 -200C2ReLU -MP2 -N200Sig";
    pub const SSDCNN_DIR: &str = "512-N512Sig";
    pub const SSDCNN_HEAD: &str = "712 -N300Sig -N200Sig -N3755";
}
