use super::{mismatch, NnError, Scalar};

pub const DEFAULT_ETA: f64 = 0.01;
pub const DEFAULT_FUDGE: f64 = 1e-6;

/// Per-parameter squared-gradient accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct GradState<T> {
    pub historical_grad: Vec<Vec<T>>,
    pub eta: T,
    pub fudge_factor: T,
}

impl<T: Scalar> GradState<T> {
    /// Zeroed accumulators shaped like `params`.
    pub fn new(params: &[&[T]], eta: f64, fudge_factor: f64) -> Self {
        GradState {
            historical_grad: params.iter().map(|p| vec![T::zero(); p.len()]).collect(),
            eta: T::of(eta),
            fudge_factor: T::of(fudge_factor),
        }
    }

    pub fn reset(&mut self) {
        for h in &mut self.historical_grad {
            h.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    /// Updates parameter tensor `index` in place.
    pub fn step_one(&mut self, index: usize, param: &mut [T], grad: &[T]) -> Result<(), NnError> {
        let hist = self
            .historical_grad
            .get_mut(index)
            .ok_or_else(|| mismatch(("parameter index", index), "missing accumulator"))?;
        if hist.len() != param.len() || grad.len() != param.len() {
            return Err(mismatch(param.len(), (hist.len(), grad.len())));
        }
        let (eta, fudge) = (self.eta, self.fudge_factor);
        for ((p, &g), h) in param.iter_mut().zip(grad).zip(hist.iter_mut()) {
            *h += g * g;
            *p -= eta * g / (fudge + h.sqrt());
        }
        Ok(())
    }
}

/// One AdaGrad descent step over every parameter tensor.
pub fn adagrad_step<T: Scalar>(
    params: &mut [&mut [T]],
    grads: &[&[T]],
    state: &mut GradState<T>,
) -> Result<(), NnError> {
    if params.len() != grads.len() || params.len() != state.historical_grad.len() {
        return Err(mismatch(params.len(), (grads.len(), state.historical_grad.len())));
    }
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        state.step_one(i, p, g)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_closed_form() {
        let mut p = vec![1.0f64];
        let mut st = GradState::new(&[&p], 0.01, 1e-6);
        adagrad_step(&mut [&mut p], &[&[0.5]], &mut st).unwrap();
        assert_eq!(st.historical_grad[0][0], 0.25);
        let delta = p[0] - 1.0;
        let expected = -0.01 * 0.5 / (1e-6 + 0.5);
        assert!((delta - expected).abs() < 1e-15);
        assert!((delta + 0.0099999800000399).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_changes_nothing() {
        let mut p = vec![3.0f32, -2.0];
        let mut st = GradState::new(&[&p], 0.01, 1e-6);
        adagrad_step(&mut [&mut p], &[&[0.0, 0.0]], &mut st).unwrap();
        assert_eq!(p, vec![3.0, -2.0]);
        assert_eq!(st.historical_grad[0], vec![0.0, 0.0]);
    }

    #[test]
    fn equal_gradients_shrink_steps() {
        let mut p = vec![0.0f64];
        let mut st = GradState::new(&[&p], 0.01, 1e-6);
        adagrad_step(&mut [&mut p], &[&[0.3]], &mut st).unwrap();
        let first = p[0];
        adagrad_step(&mut [&mut p], &[&[0.3]], &mut st).unwrap();
        let second = p[0] - first;
        assert!(second.abs() < first.abs());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut p = vec![0.0f64; 2];
        let mut st = GradState::new(&[&p], 0.01, 1e-6);
        assert!(adagrad_step(&mut [&mut p], &[&[0.0]], &mut st).is_err());
    }
}
