//! Tensors, the three layer kinds, softmax/NLL and AdaGrad.
//!
//! Layer kernels work on channels-last activations (`h, w, c` row-major) so
//! the inner loops run over contiguous filter vectors. The public
//! `*_forward` functions accept the conventional `(c, h, w)` layout and
//! transpose around the same kernels.

mod adagrad;
mod kernels;
mod loss;
mod network;
mod tensor;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;
use thiserror::Error;

pub use adagrad::{adagrad_step, GradState, DEFAULT_ETA, DEFAULT_FUDGE};
pub use kernels::{
    chw_to_hwc, conv_backward, conv_forward, conv_forward_hwc, full_forward, hwc_to_chw,
    maxpool_forward, maxpool_forward_hwc, ConvGeometry, PoolOutput,
};
pub use loss::{log_softmax, nll_loss, softmax, softmax_nll_grad};
pub use network::{Layer, Network, Trace};
pub use tensor::Tensor;

/// Floating point element type: `f32` for training and serving, `f64` for
/// finite-difference checks.
pub trait Scalar:
    Float + AddAssign + SubAssign + MulAssign + Sum + Default + Send + Sync + Debug + Display + 'static
{
    fn of(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn of(v: f64) -> Self {
        v as f32
    }

    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn of(v: f64) -> Self {
        v
    }

    fn to_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },
    #[error("non-finite score at index {0}")]
    NonFiniteScore(usize),
    #[error("index {index} out of range for {len} classes")]
    IndexOutOfRange { index: usize, len: usize },
}

pub(crate) fn mismatch(expected: impl Debug, found: impl Debug) -> NnError {
    NnError::ShapeMismatch {
        expected: format!("{expected:?}"),
        found: format!("{found:?}"),
    }
}

/// `y += a * x`
#[inline]
pub(crate) fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Dot product with eight interleaved partial sums.
#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 8];
    let chunks = n / 8;
    for c in 0..chunks {
        let (ca, cb) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for l in 0..8 {
            acc[l] += ca[l] * cb[l];
        }
    }
    let mut tail = T::zero();
    for i in chunks * 8..n {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

pub(crate) fn sigmoid<T: Scalar>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}
