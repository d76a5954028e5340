//! The four recognizer variants assembled from [`Network`] components.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::netspec::{self, standard, LayerDesc, NetSpec, SpecError};
use crate::nn::{mismatch, softmax, NnError, Network, Scalar, Tensor, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VariantKind {
    /// Convolutional network on the static bitmap.
    Imdcnn,
    /// Convolutional network on the stroke-map stack.
    Ssdcnn8,
    /// Perceptron on eight-direction features.
    Nn8,
    /// Stroke-map network fused with eight-direction features.
    Ssdcnn,
}

impl VariantKind {
    pub const ALL: [VariantKind; 4] = [
        VariantKind::Imdcnn,
        VariantKind::Ssdcnn8,
        VariantKind::Nn8,
        VariantKind::Ssdcnn,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            VariantKind::Imdcnn => "imdcnn",
            VariantKind::Ssdcnn8 => "ssdcnn8",
            VariantKind::Nn8 => "nn8",
            VariantKind::Ssdcnn => "ssdcnn",
        }
    }

    pub fn code(&self) -> u8 {
        match self {
            VariantKind::Imdcnn => 0,
            VariantKind::Ssdcnn8 => 1,
            VariantKind::Nn8 => 2,
            VariantKind::Ssdcnn => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn uses_static_image(&self) -> bool {
        *self == VariantKind::Imdcnn
    }

    pub fn uses_stack(&self) -> bool {
        matches!(self, VariantKind::Ssdcnn8 | VariantKind::Ssdcnn)
    }

    pub fn uses_dir(&self) -> bool {
        matches!(self, VariantKind::Nn8 | VariantKind::Ssdcnn)
    }
}

impl fmt::Display for VariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown model variant {0:?} (expected imdcnn, ssdcnn8, nn8 or ssdcnn)")]
pub struct UnknownVariant(pub String);

impl FromStr for VariantKind {
    type Err = UnknownVariant;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace(['-', '_'], "");
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| UnknownVariant(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("{kind} architecture: {message}")]
    Wiring { kind: VariantKind, message: String },
    #[error("a model needs at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Component specs of one variant. `dcnn` holds the convolutional part (and,
/// for SSDCNN, its sigmoid representation layer); `dir_proj` and `rep_proj`
/// are the SSDCNN fusion projections.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub kind: VariantKind,
    pub dcnn: Option<NetSpec>,
    pub dir_proj: Option<NetSpec>,
    pub rep_proj: Option<NetSpec>,
    pub head: NetSpec,
}

impl Architecture {
    /// The published architectures with the output width set to `classes`.
    pub fn standard(kind: VariantKind, classes: usize) -> Result<Self, ModelError> {
        if classes < 2 {
            return Err(ModelError::TooFewClasses(classes));
        }
        let arch = match kind {
            VariantKind::Imdcnn | VariantKind::Ssdcnn8 => {
                let text = if kind == VariantKind::Imdcnn {
                    standard::IMDCNN
                } else {
                    standard::SSDCNN8
                };
                let (dcnn, head) = netspec::parse(text)?.split_at_first_full()?;
                Architecture {
                    kind,
                    dcnn: Some(dcnn),
                    dir_proj: None,
                    rep_proj: None,
                    head: head.with_output_units(classes),
                }
            }
            VariantKind::Nn8 => Architecture {
                kind,
                dcnn: None,
                dir_proj: None,
                rep_proj: None,
                head: netspec::parse(standard::NN8)?.with_output_units(classes),
            },
            VariantKind::Ssdcnn => Architecture {
                kind,
                dcnn: Some(netspec::parse(standard::SSDCNN_DCNN)?),
                dir_proj: Some(netspec::parse(standard::SSDCNN_DIR)?),
                rep_proj: Some(netspec::parse("200 -N200Sig")?),
                head: netspec::parse(standard::SSDCNN_HEAD)?.with_output_units(classes),
            },
        };
        arch.check()?;
        Ok(arch)
    }

    /// Builds from architecture strings; `None` entries are absent components.
    pub fn from_strings(
        kind: VariantKind,
        dcnn: Option<&str>,
        dir_proj: Option<&str>,
        rep_proj: Option<&str>,
        head: &str,
    ) -> Result<Self, ModelError> {
        let p = |s: Option<&str>| s.map(netspec::parse).transpose();
        let arch = Architecture {
            kind,
            dcnn: p(dcnn)?,
            dir_proj: p(dir_proj)?,
            rep_proj: p(rep_proj)?,
            head: netspec::parse(head)?,
        };
        arch.check()?;
        Ok(arch)
    }

    pub fn classes(&self) -> usize {
        self.head.output_len().unwrap_or(0)
    }

    /// Input shape `(channels, h, w)` of the convolutional branch.
    pub fn image_shape(&self) -> Option<[usize; 3]> {
        self.dcnn.as_ref().map(|d| match d.input[..] {
            [h, w] => [1, h, w],
            [c, h, w] => [c, h, w],
            _ => [1, 1, d.input_len()],
        })
    }

    /// Length of the eight-direction input.
    pub fn dir_len(&self) -> Option<usize> {
        match self.kind {
            VariantKind::Nn8 => Some(self.head.input_len()),
            VariantKind::Ssdcnn => self.dir_proj.as_ref().map(NetSpec::input_len),
            _ => None,
        }
    }

    /// `(role, spec)` in parameter order.
    pub fn components(&self) -> Vec<(&'static str, &NetSpec)> {
        let mut out = Vec::new();
        if let Some(d) = &self.dcnn {
            out.push(("dcnn", d));
        }
        if let Some(d) = &self.dir_proj {
            out.push(("dir_proj", d));
        }
        if let Some(r) = &self.rep_proj {
            out.push(("rep_proj", r));
        }
        out.push(("head", &self.head));
        out
    }

    pub fn check(&self) -> Result<(), ModelError> {
        let kind = self.kind;
        let wiring = |message: String| ModelError::Wiring { kind, message };
        for (_, spec) in self.components() {
            netspec::infer_shapes(spec)?;
        }
        if self.head.layers.is_empty() || !matches!(self.head.layers.last(), Some(LayerDesc::Full { .. })) {
            return Err(wiring("head must end in a fully connected layer".into()));
        }
        let has = (
            self.dcnn.is_some(),
            self.dir_proj.is_some(),
            self.rep_proj.is_some(),
        );
        let expected = match kind {
            VariantKind::Imdcnn | VariantKind::Ssdcnn8 => (true, false, false),
            VariantKind::Nn8 => (false, false, false),
            VariantKind::Ssdcnn => (true, true, true),
        };
        if has != expected {
            return Err(wiring(format!(
                "components (dcnn, dir_proj, rep_proj) present = {has:?}, expected {expected:?}"
            )));
        }
        if let Some(d) = &self.dcnn {
            let channels = match d.input[..] {
                [_, _] => 1,
                [c, _, _] => c,
                _ => return Err(wiring(format!("image input must be 2-D or 3-D, got {:?}", d.input))),
            };
            if kind == VariantKind::Imdcnn && channels != 1 {
                return Err(wiring("static-image input has one channel".into()));
            }
        }
        let out = |s: &NetSpec| s.output_len().map_err(ModelError::from);
        match kind {
            VariantKind::Imdcnn | VariantKind::Ssdcnn8 => {
                let d = out(self.dcnn.as_ref().unwrap())?;
                if d != self.head.input_len() {
                    return Err(wiring(format!("dcnn emits {d} values, head expects {}", self.head.input_len())));
                }
            }
            VariantKind::Nn8 => {}
            VariantKind::Ssdcnn => {
                let d = out(self.dcnn.as_ref().unwrap())?;
                let rep = self.rep_proj.as_ref().unwrap();
                if d != rep.input_len() {
                    return Err(wiring(format!("dcnn emits {d} values, rep_proj expects {}", rep.input_len())));
                }
                let fused = out(self.dir_proj.as_ref().unwrap())? + out(rep)?;
                if fused != self.head.input_len() {
                    return Err(wiring(format!(
                        "fused width {fused} differs from head input {}",
                        self.head.input_len()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Inputs for one sample: the channels-last image (static bitmap or stroke
/// stack) and/or the eight-direction vector.
#[derive(Debug, Clone, Copy, Default)]
pub struct ModelInput<'a, T> {
    pub image: Option<&'a [T]>,
    pub dir: Option<&'a [T]>,
}

#[derive(Debug, Clone)]
pub struct ModelTrace<T> {
    dcnn: Option<Trace<T>>,
    encoded: Option<Vec<T>>,
    dir: Option<Trace<T>>,
    rep: Option<Trace<T>>,
    head: Trace<T>,
}

impl<T> ModelTrace<T> {
    pub fn scores(&self) -> &[T] {
        self.head.output()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    arch: Architecture,
    dcnn: Option<Network<T>>,
    dir_proj: Option<Network<T>>,
    rep_proj: Option<Network<T>>,
    head: Network<T>,
}

impl<T: Scalar> Model<T> {
    /// Initializes every component from one seeded stream, in parameter order.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self, ModelError> {
        arch.check()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut build = |s: &Option<NetSpec>| s.as_ref().map(|s| Network::init(s, &mut rng)).transpose();
        let dcnn = build(&arch.dcnn)?;
        let dir_proj = build(&arch.dir_proj)?;
        let rep_proj = build(&arch.rep_proj)?;
        let head = Network::init(&arch.head, &mut rng)?;
        Ok(Model {
            arch,
            dcnn,
            dir_proj,
            rep_proj,
            head,
        })
    }

    pub fn kind(&self) -> VariantKind {
        self.arch.kind
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn classes(&self) -> usize {
        self.head.output_len()
    }

    fn parts(&self) -> Vec<(&'static str, &Network<T>)> {
        let mut out = Vec::new();
        if let Some(d) = &self.dcnn {
            out.push(("dcnn", d));
        }
        if let Some(d) = &self.dir_proj {
            out.push(("dir_proj", d));
        }
        if let Some(r) = &self.rep_proj {
            out.push(("rep_proj", r));
        }
        out.push(("head", &self.head));
        out
    }

    /// All parameter tensors: the convolutional branch (θ1) first, then the
    /// fusion projections and classifier (θ2).
    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.parts().into_iter().flat_map(|(_, n)| n.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for net in [&mut self.dcnn, &mut self.dir_proj, &mut self.rep_proj]
            .into_iter()
            .flatten()
        {
            out.extend(net.params_mut());
        }
        out.extend(self.head.params_mut());
        out
    }

    pub fn param_names(&self) -> Vec<String> {
        self.parts()
            .into_iter()
            .flat_map(|(role, n)| n.param_names().into_iter().map(move |p| format!("{role}.{p}")))
            .collect()
    }

    /// Number of leading tensors in [`Self::params`] that form θ1.
    pub fn theta1_len(&self) -> usize {
        self.dcnn.as_ref().map_or(0, |d| d.params().len())
    }

    pub fn zero_grads(&self) -> Vec<Vec<T>> {
        self.params().iter().map(|p| vec![T::zero(); p.len()]).collect()
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            arch: self.arch.clone(),
            dcnn: self.dcnn.as_ref().map(Network::cast),
            dir_proj: self.dir_proj.as_ref().map(Network::cast),
            rep_proj: self.rep_proj.as_ref().map(Network::cast),
            head: self.head.cast(),
        }
    }

    fn take<'a>(&self, what: &str, x: Option<&'a [T]>, len: usize) -> Result<&'a [T], NnError> {
        let x = x.ok_or_else(|| mismatch((what, len), "missing"))?;
        if x.len() != len {
            return Err(mismatch((what, len), x.len()));
        }
        Ok(x)
    }

    /// Output of the convolutional branch, reusable across Phase II epochs.
    pub fn encode(&self, image: &[T]) -> Result<Vec<T>, NnError> {
        match &self.dcnn {
            Some(d) => Ok(d.forward(self.take("image", Some(image), d.input_len())?)),
            None => Ok(Vec::new()),
        }
    }

    /// Class scores (pre-softmax).
    pub fn forward(&self, input: ModelInput<'_, T>) -> Result<Vec<T>, NnError> {
        Ok(self.forward_trace(input, None)?.head.output().to_vec())
    }

    /// Full forward pass keeping activations. A precomputed `encoded` branch
    /// output skips the convolutional network (no θ1 gradient is then
    /// available).
    pub fn forward_trace(
        &self,
        input: ModelInput<'_, T>,
        encoded: Option<Vec<T>>,
    ) -> Result<ModelTrace<T>, NnError> {
        let mut dcnn_trace = None;
        let enc = match (&self.dcnn, encoded) {
            (None, _) => None,
            (Some(_), Some(e)) => Some(e),
            (Some(d), None) => {
                let x = self.take("image", input.image, d.input_len())?;
                let t = d.forward_trace(x.to_vec());
                let out = t.output().to_vec();
                dcnn_trace = Some(t);
                Some(out)
            }
        };
        let (head_in, dir, rep, encoded) = match self.arch.kind {
            VariantKind::Imdcnn | VariantKind::Ssdcnn8 => {
                let e = enc.unwrap();
                (e.clone(), None, None, Some(e))
            }
            VariantKind::Nn8 => {
                let x = self.take("dir", input.dir, self.head.input_len())?;
                (x.to_vec(), None, None, None)
            }
            VariantKind::Ssdcnn => {
                let dp = self.dir_proj.as_ref().unwrap();
                let rp = self.rep_proj.as_ref().unwrap();
                let x = self.take("dir", input.dir, dp.input_len())?;
                let e = enc.unwrap();
                if e.len() != rp.input_len() {
                    return Err(mismatch(("encoded", rp.input_len()), e.len()));
                }
                let dt = dp.forward_trace(x.to_vec());
                let rt = rp.forward_trace(e.clone());
                let mut h = dt.output().to_vec();
                h.extend_from_slice(rt.output());
                (h, Some(dt), Some(rt), Some(e))
            }
        };
        Ok(ModelTrace {
            dcnn: dcnn_trace,
            encoded,
            dir,
            rep,
            head: self.head.forward_trace(head_in),
        })
    }

    /// Accumulates parameter gradients for `dscores`. θ1 gradients are only
    /// produced when `theta1` is set and the trace ran the convolutional
    /// branch.
    pub fn backward(&self, trace: &ModelTrace<T>, dscores: &[T], grads: &mut [Vec<T>], theta1: bool) {
        let n1 = self.theta1_len();
        let (g1, g2) = grads.split_at_mut(n1);
        let mut split = g2;
        let mut next = |net: &Network<T>| {
            let (a, b) = std::mem::take(&mut split).split_at_mut(net.params().len());
            split = b;
            a
        };
        let g_dir = self.dir_proj.as_ref().map(&mut next);
        let g_rep = self.rep_proj.as_ref().map(&mut next);
        let g_head = next(&self.head);
        let run_theta1 = theta1 && trace.dcnn.is_some();
        let need_h = match self.arch.kind {
            VariantKind::Nn8 => false,
            VariantKind::Ssdcnn => true,
            _ => run_theta1,
        };
        let dh = self.head.backward(&trace.head, dscores, g_head, need_h);
        let d_enc = match self.arch.kind {
            VariantKind::Ssdcnn => {
                let dp = self.dir_proj.as_ref().unwrap();
                let rp = self.rep_proj.as_ref().unwrap();
                let dh = dh.unwrap();
                let (d_dir, d_rep) = dh.split_at(dp.output_len());
                dp.backward(trace.dir.as_ref().unwrap(), d_dir, g_dir.unwrap(), false);
                rp.backward(trace.rep.as_ref().unwrap(), d_rep, g_rep.unwrap(), run_theta1)
            }
            _ => dh,
        };
        if let (true, Some(d), Some(t), Some(de)) = (run_theta1, &self.dcnn, &trace.dcnn, d_enc) {
            d.backward(t, &de, g1, false);
        }
    }

    /// Softmax over the class scores, ranked.
    pub fn predict(&self, input: ModelInput<'_, T>) -> Result<crate::eval::Prediction, NnError> {
        let scores = self.forward(input)?;
        crate::eval::Prediction::from_scores(&scores)
    }

    pub fn encoded_of<'a>(&self, trace: &'a ModelTrace<T>) -> Option<&'a [T]> {
        trace.encoded.as_deref()
    }
}

/// Softmax probabilities of `scores` as `f64`.
pub fn probabilities<T: Scalar>(scores: &[T]) -> Result<Vec<f64>, NnError> {
    Ok(softmax(scores)?.into_iter().map(Scalar::to_f64).collect())
}

/// The published architecture of `kind` for `classes` outputs, initialized
/// from `seed`.
pub fn build_model(kind: VariantKind, classes: usize, seed: u64) -> Result<Model<f32>, ModelError> {
    Model::new(Architecture::standard(kind, classes)?, seed)
}
