use super::{NnError, Scalar};

fn check_finite<T: Scalar>(scores: &[T]) -> Result<T, NnError> {
    let mut max = T::neg_infinity();
    for (i, &s) in scores.iter().enumerate() {
        if !s.is_finite() {
            return Err(NnError::NonFiniteScore(i));
        }
        max = max.max(s);
    }
    Ok(max)
}

/// Max-shifted softmax.
pub fn softmax<T: Scalar>(scores: &[T]) -> Result<Vec<T>, NnError> {
    let max = check_finite(scores)?;
    let exps: Vec<T> = scores.iter().map(|&s| (s - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

pub fn log_softmax<T: Scalar>(scores: &[T]) -> Result<Vec<T>, NnError> {
    let max = check_finite(scores)?;
    let lse = scores.iter().map(|&s| (s - max).exp()).sum::<T>().ln() + max;
    Ok(scores.iter().map(|&s| s - lse).collect())
}

/// `-ln p[label]`.
pub fn nll_loss<T: Scalar>(probabilities: &[T], label: usize) -> Result<T, NnError> {
    probabilities
        .get(label)
        .map(|p| -p.ln())
        .ok_or(NnError::IndexOutOfRange {
            index: label,
            len: probabilities.len(),
        })
}

/// Loss `-log softmax(scores)[label]` and its gradient with respect to the
/// scores, `softmax(scores) - onehot(label)`.
pub fn softmax_nll_grad<T: Scalar>(scores: &[T], label: usize) -> Result<(T, Vec<T>), NnError> {
    if label >= scores.len() {
        return Err(NnError::IndexOutOfRange {
            index: label,
            len: scores.len(),
        });
    }
    let logp = log_softmax(scores)?;
    let loss = -logp[label];
    let mut grad = softmax(scores)?;
    grad[label] -= T::one();
    Ok((loss, grad))
}
