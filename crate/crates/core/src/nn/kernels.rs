use super::{axpy, dot, mismatch, sigmoid, NnError, Scalar, Tensor};
use crate::netspec::Activation;

/// Valid, stride-1 convolution over a channels-last `(height, width,
/// channels)` input. Weights are laid out `(channels, window, window,
/// filters)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub window: usize,
    pub filters: usize,
}

impl ConvGeometry {
    pub fn out_height(&self) -> usize {
        self.height + 1 - self.window
    }

    pub fn out_width(&self) -> usize {
        self.width + 1 - self.window
    }

    pub fn input_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn output_len(&self) -> usize {
        self.out_height() * self.out_width() * self.filters
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.channels, self.window, self.window, self.filters]
    }

    /// Marks output positions whose receptive window holds any nonzero input.
    fn open_windows<T: Scalar>(&self, x: &[T]) -> Vec<bool> {
        let (w, c, k) = (self.width, self.channels, self.window);
        let occupied: Vec<bool> = x
            .chunks_exact(c)
            .map(|px| px.iter().any(|v| !v.is_zero()))
            .collect();
        let (oh, ow) = (self.out_height(), self.out_width());
        let mut open = vec![false; oh * ow];
        for i in 0..oh {
            for j in 0..ow {
                open[i * ow + j] = (0..k).any(|ki| occupied[(i + ki) * w + j..][..k].contains(&true));
            }
        }
        open
    }
}

/// `out[i, j, f] = gate * relu(sum_{c, ki, kj} x[i+ki, j+kj, c] * w[c, ki, kj, f] + b[f])`
///
/// The gate is 0 when every input in the receptive window is zero, else 1.
/// Each output sums its terms in `(c, ki, kj)` order starting from zero and
/// adds the bias last; zero inputs are skipped.
pub fn conv_forward_hwc<T: Scalar>(
    g: &ConvGeometry,
    x: &[T],
    weight: &[T],
    bias: &[T],
    out: &mut [T],
) {
    let (w, c, k, f) = (g.width, g.channels, g.window, g.filters);
    let (oh, ow) = (g.out_height(), g.out_width());
    debug_assert_eq!(x.len(), g.input_len());
    debug_assert_eq!(out.len(), g.output_len());
    let open = g.open_windows(x);
    out.iter_mut().for_each(|v| *v = T::zero());
    for i in 0..oh {
        for j in 0..ow {
            if !open[i * ow + j] {
                continue;
            }
            let acc = &mut out[(i * ow + j) * f..][..f];
            for ci in 0..c {
                for ki in 0..k {
                    let row = ((i + ki) * w + j) * c + ci;
                    for kj in 0..k {
                        let xv = x[row + kj * c];
                        if xv.is_zero() {
                            continue;
                        }
                        axpy(acc, xv, &weight[((ci * k + ki) * k + kj) * f..][..f]);
                    }
                }
            }
            for (a, &b) in acc.iter_mut().zip(bias) {
                *a = (*a + b).max(T::zero());
            }
        }
    }
}

/// Accumulates weight, bias and (optionally) input gradients. The gate acts
/// as a constant mask; the ReLU derivative at zero is zero, so only strictly
/// positive outputs pass gradient.
#[allow(clippy::too_many_arguments)]
pub fn conv_backward<T: Scalar>(
    g: &ConvGeometry,
    x: &[T],
    out: &[T],
    dout: &[T],
    weight: &[T],
    dweight: &mut [T],
    dbias: &mut [T],
    mut dx: Option<&mut [T]>,
) {
    let (w, c, k, f) = (g.width, g.channels, g.window, g.filters);
    let (oh, ow) = (g.out_height(), g.out_width());
    let mut dz = vec![T::zero(); f];
    for i in 0..oh {
        for j in 0..ow {
            let o = &out[(i * ow + j) * f..][..f];
            let d = &dout[(i * ow + j) * f..][..f];
            let mut live = false;
            for ((z, &ov), &dv) in dz.iter_mut().zip(o).zip(d) {
                *z = if ov > T::zero() { dv } else { T::zero() };
                live |= !z.is_zero();
            }
            if !live {
                continue;
            }
            axpy(dbias, T::one(), &dz);
            for ci in 0..c {
                for ki in 0..k {
                    for kj in 0..k {
                        let xi = ((i + ki) * w + j + kj) * c + ci;
                        let wi = ((ci * k + ki) * k + kj) * f;
                        let xv = x[xi];
                        if !xv.is_zero() {
                            axpy(&mut dweight[wi..wi + f], xv, &dz);
                        }
                        if let Some(dx) = dx.as_deref_mut() {
                            dx[xi] += dot(&weight[wi..wi + f], &dz);
                        }
                    }
                }
            }
        }
    }
}

/// Non-overlapping max pooling on channels-last input. Returns the flat
/// input index of each maximum; ties go to the first element in window
/// row-major order.
pub fn maxpool_forward_hwc<T: Scalar>(
    x: &[T],
    height: usize,
    width: usize,
    channels: usize,
    window: usize,
    out: &mut [T],
    argmax: &mut [u32],
) {
    let (oh, ow) = (height / window, width / window);
    for oi in 0..oh {
        for oj in 0..ow {
            let base = (oi * ow + oj) * channels;
            let first = ((oi * window) * width + oj * window) * channels;
            out[base..base + channels].copy_from_slice(&x[first..first + channels]);
            for (a, idx) in argmax[base..base + channels].iter_mut().zip(first..) {
                *a = idx as u32;
            }
            for di in 0..window {
                for dj in 0..window {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let start = ((oi * window + di) * width + oj * window + dj) * channels;
                    for ch in 0..channels {
                        let v = x[start + ch];
                        if v > out[base + ch] {
                            out[base + ch] = v;
                            argmax[base + ch] = (start + ch) as u32;
                        }
                    }
                }
            }
        }
    }
}

/// `y = act(W x + b)` with `W` shaped `(out, in)`.
pub(crate) fn full_forward_slice<T: Scalar>(
    x: &[T],
    weight: &[T],
    bias: Option<&[T]>,
    activation: Activation,
    out: &mut [T],
) {
    let n_in = x.len();
    for (o, y) in out.iter_mut().enumerate() {
        let mut z = dot(&weight[o * n_in..(o + 1) * n_in], x);
        if let Some(b) = bias {
            z += b[o];
        }
        *y = match activation {
            Activation::Sigmoid => sigmoid(z),
            Activation::Linear => z,
        };
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn full_backward_slice<T: Scalar>(
    x: &[T],
    y: &[T],
    dy: &[T],
    weight: &[T],
    activation: Activation,
    dweight: &mut [T],
    mut dbias: Option<&mut [T]>,
    mut dx: Option<&mut [T]>,
) {
    let n_in = x.len();
    for (o, (&yo, &dyo)) in y.iter().zip(dy).enumerate() {
        let dz = match activation {
            Activation::Sigmoid => dyo * yo * (T::one() - yo),
            Activation::Linear => dyo,
        };
        if dz.is_zero() {
            continue;
        }
        axpy(&mut dweight[o * n_in..(o + 1) * n_in], dz, x);
        if let Some(db) = dbias.as_deref_mut() {
            db[o] += dz;
        }
        if let Some(dx) = dx.as_deref_mut() {
            axpy(dx, dz, &weight[o * n_in..(o + 1) * n_in]);
        }
    }
}

pub fn chw_to_hwc<T: Copy>(x: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(x.len());
    for i in 0..h {
        for j in 0..w {
            for ch in 0..c {
                out.push(x[(ch * h + i) * w + j]);
            }
        }
    }
    out
}

pub fn hwc_to_chw<T: Copy>(x: &[T], h: usize, w: usize, c: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(x.len());
    for ch in 0..c {
        for i in 0..h {
            for j in 0..w {
                out.push(x[(i * w + j) * c + ch]);
            }
        }
    }
    out
}

fn chw_dims(t: &[usize]) -> Result<(usize, usize, usize), NnError> {
    match *t {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(mismatch("(c, h, w)", t)),
    }
}

/// Gated ReLU convolution on a `(c, h, w)` tensor. `weight` is
/// `(c, k, k, filters)`, `bias` is `(filters)`; the result is
/// `(filters, h-k+1, w-k+1)`.
pub fn conv_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>, NnError> {
    let (c, h, w) = chw_dims(input.shape())?;
    let [wc, k, k2, f] = weight.shape()[..] else {
        return Err(mismatch("(c, k, k, filters)", weight.shape()));
    };
    if wc != c || k != k2 || k == 0 || k > h || k > w {
        return Err(mismatch(("channels", c, "window <=", h.min(w)), weight.shape()));
    }
    if bias.shape() != [f] {
        return Err(mismatch([f], bias.shape()));
    }
    let g = ConvGeometry {
        height: h,
        width: w,
        channels: c,
        window: k,
        filters: f,
    };
    let x = chw_to_hwc(input.data(), c, h, w);
    let mut out = vec![T::zero(); g.output_len()];
    conv_forward_hwc(&g, &x, weight.data(), bias.data(), &mut out);
    let (oh, ow) = (g.out_height(), g.out_width());
    Tensor::from_vec(&[f, oh, ow], hwc_to_chw(&out, oh, ow, f))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolOutput<T> {
    pub output: Tensor<T>,
    /// Flat `(c, h, w)` input index of each output's maximum.
    pub argmax: Vec<usize>,
}

pub fn maxpool_forward<T: Scalar>(input: &Tensor<T>, window: usize) -> Result<PoolOutput<T>, NnError> {
    let (c, h, w) = chw_dims(input.shape())?;
    if window == 0 || h % window != 0 || w % window != 0 {
        return Err(mismatch(("divisible by", window), input.shape()));
    }
    let (oh, ow) = (h / window, w / window);
    let x = chw_to_hwc(input.data(), c, h, w);
    let mut out = vec![T::zero(); oh * ow * c];
    let mut arg = vec![0u32; oh * ow * c];
    maxpool_forward_hwc(&x, h, w, c, window, &mut out, &mut arg);
    let argmax = hwc_to_chw(&arg, oh, ow, c)
        .into_iter()
        .map(|hwc| {
            let hwc = hwc as usize;
            let (pos, ch) = (hwc / c, hwc % c);
            (ch * h + pos / w) * w + pos % w
        })
        .collect();
    Ok(PoolOutput {
        output: Tensor::from_vec(&[c, oh, ow], hwc_to_chw(&out, oh, ow, c))?,
        argmax,
    })
}

/// Fully connected layer on a flattened input; `weight` is `(out, in)`.
pub fn full_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    activation: Activation,
) -> Result<Tensor<T>, NnError> {
    let [n_out, n_in] = weight.shape()[..] else {
        return Err(mismatch("(out, in)", weight.shape()));
    };
    if input.len() != n_in {
        return Err(mismatch(n_in, input.len()));
    }
    if let Some(b) = bias {
        if b.shape() != [n_out] {
            return Err(mismatch([n_out], b.shape()));
        }
    }
    let mut out = vec![T::zero(); n_out];
    full_forward_slice(
        input.data(),
        weight.data(),
        bias.map(|b| b.data()),
        activation,
        &mut out,
    );
    Tensor::from_vec(&[n_out], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f32]) -> Tensor<f32> {
        Tensor::from_vec(shape, v.to_vec()).unwrap()
    }

    #[test]
    fn conv_sums_window() {
        let x = t(&[1, 2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let w = t(&[1, 2, 2, 1], &[1.0; 4]);
        let y = conv_forward(&x, &w, &t(&[1], &[0.0])).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1]);
        assert_eq!(y.data(), &[10.0]);
    }

    #[test]
    fn closed_gate_suppresses_bias() {
        let x = t(&[1, 2, 2], &[0.0; 4]);
        let w = t(&[1, 2, 2, 1], &[1.0; 4]);
        let y = conv_forward(&x, &w, &t(&[1], &[5.0])).unwrap();
        assert_eq!(y.data(), &[0.0]);
    }

    #[test]
    fn relu_clamps_negative() {
        let x = t(&[1, 2, 2], &[1.0, 0.0, 0.0, 0.0]);
        let w = t(&[1, 2, 2, 1], &[0.0; 4]);
        let y = conv_forward(&x, &w, &t(&[1], &[-1.0])).unwrap();
        assert_eq!(y.data(), &[0.0]);
    }

    #[test]
    fn conv_rejects_bad_shapes() {
        let x = t(&[2, 3, 3], &[0.0; 18]);
        let w = t(&[1, 2, 2, 1], &[0.0; 4]);
        assert!(matches!(
            conv_forward(&x, &w, &t(&[1], &[0.0])),
            Err(NnError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn pool_examples() {
        let p = maxpool_forward(&t(&[1, 2, 2], &[1.0, 2.0, 3.0, 4.0]), 2).unwrap();
        assert_eq!(p.output.data(), &[4.0]);
        assert_eq!(p.argmax, vec![3]);
        let p = maxpool_forward(&t(&[1, 4, 4], &[7.0; 16]), 2).unwrap();
        assert_eq!(p.output.data(), &[7.0; 4]);
        // ties resolve to the first element of each window
        assert_eq!(p.argmax, vec![0, 2, 8, 10]);
        assert!(maxpool_forward(&t(&[1, 3, 3], &[0.0; 9]), 2).is_err());
    }

    #[test]
    fn full_examples() {
        let eye = t(&[3, 3], &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let zero = t(&[3], &[0.0; 3]);
        let y = full_forward(&zero, &eye, Some(&zero), Activation::Sigmoid).unwrap();
        assert_eq!(y.data(), &[0.5; 3]);
        let x = t(&[3], &[-2.5, 0.0, 1e6]);
        let y = full_forward(&x, &eye, None, Activation::Linear).unwrap();
        assert_eq!(y.data(), x.data());
        let y = full_forward(&t(&[3], &[-40.0, 3.0, 40.0]), &eye, None, Activation::Sigmoid).unwrap();
        assert!(y.data().iter().all(|&v| v > 0.0 && v <= 1.0));
        assert!(full_forward(&t(&[2], &[0.0; 2]), &eye, None, Activation::Linear).is_err());
    }

    #[test]
    fn layout_round_trip() {
        let x: Vec<u32> = (0..24).collect();
        assert_eq!(hwc_to_chw(&chw_to_hwc(&x, 2, 3, 4), 3, 4, 2), x);
    }
}
