//! Losses, computed on logits for numerical stability.

use ndarray::Array2;

use super::layers::sigmoid;

/// Binary cross-entropy summed over independent sigmoid units and averaged
/// over the batch. Targets are one-hot rows. Returns (loss, dL/dlogits).
///
/// Uses the identity BCE(σ(z), t) = softplus(z) − t·z with a stable
/// softplus, so large logits never produce infinities.
pub fn bce_with_logits(logits: &Array2<f64>, targets: &Array2<f64>) -> (f64, Array2<f64>) {
    assert_eq!(logits.shape(), targets.shape(), "logit/target shape mismatch");
    let n = logits.shape()[0] as f64;
    let mut loss = 0.0;
    let mut grad = Array2::zeros(logits.raw_dim());
    for ((i, j), &z) in logits.indexed_iter() {
        let t = targets[[i, j]];
        let softplus = z.max(0.0) + (-z.abs()).exp().ln_1p();
        loss += softplus - t * z;
        grad[[i, j]] = (sigmoid(z) - t) / n;
    }
    (loss / n, grad)
}

/// Softmax cross-entropy against integer class targets, averaged over the
/// batch. Returns (loss, dL/dlogits).
pub fn softmax_cross_entropy(logits: &Array2<f64>, targets: &[usize]) -> (f64, Array2<f64>) {
    let (n, k) = (logits.shape()[0], logits.shape()[1]);
    assert_eq!(n, targets.len(), "logit/target count mismatch");
    let mut loss = 0.0;
    let mut grad = Array2::zeros(logits.raw_dim());
    for i in 0..n {
        let row = logits.row(i);
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut denom = 0.0;
        for &z in row.iter() {
            denom += (z - max).exp();
        }
        let log_denom = denom.ln() + max;
        let target = targets[i];
        assert!(target < k, "class index out of range");
        loss += log_denom - logits[[i, target]];
        for j in 0..k {
            let p = (logits[[i, j]] - log_denom).exp();
            grad[[i, j]] = (p - if j == target { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    (loss / n as f64, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn bce_matches_direct_formula() {
        let logits = arr2(&[[0.3, -1.2], [2.0, 0.0]]);
        let targets = arr2(&[[0.0, 1.0], [1.0, 0.0]]);
        let (loss, _) = bce_with_logits(&logits, &targets);
        // Direct -[t ln s + (1-t) ln(1-s)] accumulation.
        let mut expected = 0.0;
        for ((i, j), &z) in logits.indexed_iter() {
            let s = sigmoid(z);
            let t = targets[[i, j]];
            expected += -(t * s.ln() + (1.0 - t) * (1.0 - s).ln());
        }
        expected /= 2.0;
        assert!((loss - expected).abs() < 1e-12);
    }

    #[test]
    fn bce_gradient_matches_finite_differences() {
        let mut logits = arr2(&[[0.3, -1.2], [2.0, 0.5]]);
        let targets = arr2(&[[0.0, 1.0], [1.0, 0.0]]);
        let (_, grad) = bce_with_logits(&logits, &targets);
        let h = 1e-7;
        for idx in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let orig = logits[idx];
            logits[idx] = orig + h;
            let (lp, _) = bce_with_logits(&logits, &targets);
            logits[idx] = orig - h;
            let (lm, _) = bce_with_logits(&logits, &targets);
            logits[idx] = orig;
            let fd = (lp - lm) / (2.0 * h);
            assert!((grad[idx] - fd).abs() < 1e-6, "{idx:?}");
        }
    }

    #[test]
    fn bce_is_finite_for_extreme_logits() {
        let logits = arr2(&[[500.0, -500.0]]);
        let targets = arr2(&[[0.0, 1.0]]);
        let (loss, grad) = bce_with_logits(&logits, &targets);
        assert!(loss.is_finite());
        assert!(grad.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn softmax_ce_gradient_matches_finite_differences() {
        let mut logits = arr2(&[[0.3, -1.2, 0.7], [2.0, 0.5, -0.1]]);
        let targets = vec![2usize, 0usize];
        let (_, grad) = softmax_cross_entropy(&logits, &targets);
        let h = 1e-7;
        for i in 0..2 {
            for j in 0..3 {
                let orig = logits[[i, j]];
                logits[[i, j]] = orig + h;
                let (lp, _) = softmax_cross_entropy(&logits, &targets);
                logits[[i, j]] = orig - h;
                let (lm, _) = softmax_cross_entropy(&logits, &targets);
                logits[[i, j]] = orig;
                let fd = (lp - lm) / (2.0 * h);
                assert!((grad[[i, j]] - fd).abs() < 1e-6);
            }
        }
    }
}
