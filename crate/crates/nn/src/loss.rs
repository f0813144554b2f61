use crate::{ops, Error, Result, Scalar, Tensor};

pub const PROB_CLAMP: f64 = 1e-7;

/// Binary cross-entropy over softmax probabilities of shape `(B, 2)`.
///
/// Returns the mean of `-ln p[label]` (probabilities clamped to
/// `[1e-7, 1 - 1e-7]`) and the gradient with respect to the *logits* that
/// produced `probs`, i.e. the fused softmax-cross-entropy gradient
/// `(p - onehot) / B`.
pub fn bce_loss<T: Scalar>(probs: &Tensor<T>, labels: &[u8]) -> Result<(f64, Tensor<T>)> {
    let [n, k] = probs.dims2()?;
    if k != 2 {
        return Err(Error::Shape(format!("expected 2 classes, got {k}")));
    }
    if labels.len() != n || n == 0 {
        return Err(Error::Invalid(format!(
            "{} labels for {n} probability rows",
            labels.len()
        )));
    }
    let mut grad = probs.clone();
    let mut loss = 0.0;
    let inv_n = T::lit(1.0 / n as f64);
    for (i, &label) in labels.iter().enumerate() {
        if label > 1 {
            return Err(Error::Invalid(format!("label {label} is not 0 or 1")));
        }
        let row = &probs.data()[i * 2..i * 2 + 2];
        let total = row[0].as_f64() + row[1].as_f64();
        if (total - 1.0).abs() > 1e-5 {
            return Err(Error::Invalid(format!("probability row {i} sums to {total}")));
        }
        let p = row[label as usize].as_f64().clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        loss -= p.ln();
        let g = &mut grad.data_mut()[i * 2..i * 2 + 2];
        g[label as usize] -= T::one();
        g[0] *= inv_n;
        g[1] *= inv_n;
    }
    Ok((loss / n as f64, grad))
}

/// Convenience: softmax then [`bce_loss`]. Returns `(loss, probs, grad_logits)`.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[u8]) -> Result<(f64, Tensor<T>, Tensor<T>)> {
    let probs = ops::softmax(logits)?;
    let (loss, grad) = bce_loss(&probs, labels)?;
    Ok((loss, probs, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_prediction_costs_ln2() {
        let p = Tensor::full(&[4, 2], 0.5f64);
        let (loss, _) = bce_loss(&p, &[0, 1, 1, 0]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn perfect_prediction_is_clamped() {
        let p = Tensor::from_vec(&[2, 2], vec![1.0f64, 0.0, 0.0, 1.0]).unwrap();
        let (loss, _) = bce_loss(&p, &[0, 1]).unwrap();
        assert!(loss > 0.0 && loss < 2e-7, "{loss}");
    }

    #[test]
    fn bad_labels_and_rows_are_rejected() {
        let p = Tensor::full(&[1, 2], 0.5f32);
        assert!(bce_loss(&p, &[2]).is_err());
        assert!(bce_loss(&p, &[0, 1]).is_err());
        let q = Tensor::full(&[1, 2], 0.6f32);
        assert!(bce_loss(&q, &[0]).is_err());
    }
}
