use rand::Rng;

use super::kernels::{
    conv_backward, conv_forward_hwc, full_backward_slice, full_forward_slice, maxpool_forward_hwc,
    ConvGeometry,
};
use super::{Scalar, Tensor};
use crate::netspec::{infer_shapes, Activation, LayerDesc, NetSpec, SpecError};

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv {
        geom: ConvGeometry,
        weight: Tensor<T>,
        bias: Tensor<T>,
    },
    Pool {
        height: usize,
        width: usize,
        channels: usize,
        window: usize,
    },
    Full {
        activation: Activation,
        /// `(out, in)`
        weight: Tensor<T>,
        /// Present for sigmoid layers; linear layers carry no bias.
        bias: Option<Tensor<T>>,
    },
}

impl<T: Scalar> Layer<T> {
    fn params(&self) -> Vec<(&'static str, &Tensor<T>)> {
        match self {
            Layer::Conv { weight, bias, .. } => vec![("weight", weight), ("bias", bias)],
            Layer::Pool { .. } => vec![],
            Layer::Full { weight, bias, .. } => {
                let mut v = vec![("weight", weight)];
                if let Some(b) = bias {
                    v.push(("bias", b));
                }
                v
            }
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::Conv { weight, bias, .. } => vec![weight, bias],
            Layer::Pool { .. } => vec![],
            Layer::Full { weight, bias, .. } => {
                let mut v = vec![weight];
                if let Some(b) = bias {
                    v.push(b);
                }
                v
            }
        }
    }
}

/// A linear chain of layers described by a [`NetSpec`]. Inputs with three
/// dimensions are read channels-last.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    spec: NetSpec,
    layers: Vec<Layer<T>>,
}

/// Activations from a forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    /// `acts[0]` is the input, `acts[i + 1]` the output of layer `i`.
    pub acts: Vec<Vec<T>>,
    argmax: Vec<Vec<u32>>,
}

impl<T> Trace<T> {
    pub fn output(&self) -> &[T] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl<T: Scalar> Network<T> {
    /// Builds the layer chain with zero-valued parameters.
    pub fn zeros(spec: &NetSpec) -> Result<Self, SpecError> {
        let shapes = infer_shapes(spec)?;
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (i, desc) in spec.layers.iter().enumerate() {
            let input = &shapes[i];
            let layer = match *desc {
                LayerDesc::Conv { filters, window } => {
                    let geom = ConvGeometry {
                        channels: input[0],
                        height: input[1],
                        width: input[2],
                        window,
                        filters,
                    };
                    Layer::Conv {
                        weight: Tensor::zeros(&geom.weight_shape()),
                        bias: Tensor::zeros(&[filters]),
                        geom,
                    }
                }
                LayerDesc::MaxPool { window } => Layer::Pool {
                    channels: input[0],
                    height: input[1],
                    width: input[2],
                    window,
                },
                LayerDesc::Full { units, activation } => {
                    let n_in: usize = input.iter().product();
                    Layer::Full {
                        activation,
                        weight: Tensor::zeros(&[units, n_in]),
                        bias: (activation == Activation::Sigmoid).then(|| Tensor::zeros(&[units])),
                    }
                }
            };
            layers.push(layer);
        }
        Ok(Network {
            spec: spec.clone(),
            layers,
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng>(spec: &NetSpec, rng: &mut R) -> Result<Self, SpecError> {
        let mut net = Self::zeros(spec)?;
        for layer in &mut net.layers {
            let (fan_in, fan_out, weight) = match layer {
                Layer::Conv { geom, weight, .. } => {
                    let kk = geom.window * geom.window;
                    (geom.channels * kk, geom.filters * kk, weight)
                }
                Layer::Full { weight, .. } => {
                    let (o, i) = (weight.shape()[0], weight.shape()[1]);
                    (i, o, weight)
                }
                Layer::Pool { .. } => continue,
            };
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in weight.data_mut() {
                *w = T::of((rng.random::<f64>() * 2.0 - 1.0) * bound);
            }
        }
        Ok(net)
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn input_len(&self) -> usize {
        self.spec.input_len()
    }

    pub fn output_len(&self) -> usize {
        match self.layers.last() {
            Some(Layer::Conv { geom, .. }) => geom.output_len(),
            Some(Layer::Pool {
                height,
                width,
                channels,
                window,
            }) => (height / window) * (width / window) * channels,
            Some(Layer::Full { weight, .. }) => weight.shape()[0],
            None => self.input_len(),
        }
    }

    /// Parameter tensors in layer order, weight before bias.
    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.layers
            .iter()
            .flat_map(|l| l.params().into_iter().map(|(_, t)| t))
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    /// `"<layer index>.weight"` / `"<layer index>.bias"`, aligned with [`Self::params`].
    pub fn param_names(&self) -> Vec<String> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.params().into_iter().map(move |(n, _)| format!("{i}.{n}")))
            .collect()
    }

    pub fn zero_grads(&self) -> Vec<Vec<T>> {
        self.params().iter().map(|p| vec![T::zero(); p.len()]).collect()
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Conv { geom, weight, bias } => Layer::Conv {
                    geom: *geom,
                    weight: weight.cast(),
                    bias: bias.cast(),
                },
                Layer::Pool {
                    height,
                    width,
                    channels,
                    window,
                } => Layer::Pool {
                    height: *height,
                    width: *width,
                    channels: *channels,
                    window: *window,
                },
                Layer::Full {
                    activation,
                    weight,
                    bias,
                } => Layer::Full {
                    activation: *activation,
                    weight: weight.cast(),
                    bias: bias.as_ref().map(Tensor::cast),
                },
            })
            .collect();
        Network {
            spec: self.spec.clone(),
            layers,
        }
    }

    pub fn forward(&self, input: &[T]) -> Vec<T> {
        let mut x = input.to_vec();
        let mut scratch = Vec::new();
        for layer in &self.layers {
            x = self.apply(layer, &x, &mut scratch);
        }
        x
    }

    pub fn forward_trace(&self, input: Vec<T>) -> Trace<T> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut argmax = Vec::with_capacity(self.layers.len());
        acts.push(input);
        for layer in &self.layers {
            let mut arg = Vec::new();
            let y = self.apply(layer, acts.last().unwrap(), &mut arg);
            acts.push(y);
            argmax.push(arg);
        }
        Trace { acts, argmax }
    }

    fn apply(&self, layer: &Layer<T>, x: &[T], argmax: &mut Vec<u32>) -> Vec<T> {
        match layer {
            Layer::Conv { geom, weight, bias } => {
                let mut out = vec![T::zero(); geom.output_len()];
                conv_forward_hwc(geom, x, weight.data(), bias.data(), &mut out);
                out
            }
            Layer::Pool {
                height,
                width,
                channels,
                window,
            } => {
                let n = (height / window) * (width / window) * channels;
                let mut out = vec![T::zero(); n];
                argmax.clear();
                argmax.resize(n, 0);
                maxpool_forward_hwc(x, *height, *width, *channels, *window, &mut out, argmax);
                out
            }
            Layer::Full {
                activation,
                weight,
                bias,
            } => {
                let mut out = vec![T::zero(); weight.shape()[0]];
                full_forward_slice(x, weight.data(), bias.as_ref().map(|b| b.data()), *activation, &mut out);
                out
            }
        }
    }

    /// Accumulates parameter gradients into `grads` (aligned with
    /// [`Self::params`]) given the gradient of the loss with respect to the
    /// network output. Returns the input gradient when `want_input` is set.
    pub fn backward(
        &self,
        trace: &Trace<T>,
        dout: &[T],
        grads: &mut [Vec<T>],
        want_input: bool,
    ) -> Option<Vec<T>> {
        let mut slot = grads.len();
        let mut delta = dout.to_vec();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let need_dx = li > 0 || want_input;
            let x = &trace.acts[li];
            let y = &trace.acts[li + 1];
            let mut dx = if need_dx { vec![T::zero(); x.len()] } else { Vec::new() };
            match layer {
                Layer::Conv { geom, weight, .. } => {
                    slot -= 2;
                    let (gw, gb) = grads[slot..slot + 2].split_at_mut(1);
                    conv_backward(
                        geom,
                        x,
                        y,
                        &delta,
                        weight.data(),
                        &mut gw[0],
                        &mut gb[0],
                        need_dx.then_some(dx.as_mut_slice()),
                    );
                }
                Layer::Pool { .. } => {
                    if need_dx {
                        for (&a, &d) in trace.argmax[li].iter().zip(&delta) {
                            dx[a as usize] += d;
                        }
                    }
                }
                Layer::Full {
                    activation,
                    weight,
                    bias,
                } => {
                    let n = if bias.is_some() { 2 } else { 1 };
                    slot -= n;
                    let (gw, gb) = grads[slot..slot + n].split_at_mut(1);
                    full_backward_slice(
                        x,
                        y,
                        &delta,
                        weight.data(),
                        *activation,
                        &mut gw[0],
                        gb.first_mut().map(Vec::as_mut_slice),
                        need_dx.then_some(dx.as_mut_slice()),
                    );
                }
            }
            if !need_dx {
                return None;
            }
            delta = dx;
        }
        want_input.then_some(delta)
    }
}
