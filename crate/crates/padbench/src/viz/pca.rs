//! Two-component PCA baseline via power iteration with deflation.

use crate::error::{PadError, Result};

/// Projects feature vectors onto their top two principal components.
/// Deterministic (fixed iteration budget and start vectors).
pub fn pca_project(features: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
    let n = features.len();
    if n < 3 {
        return Err(PadError::Domain(format!(
            "PCA needs at least 3 samples, got {n}"
        )));
    }
    let dim = features[0].len();
    if dim < 2 || features.iter().any(|f| f.len() != dim) {
        return Err(PadError::Domain(
            "all feature vectors must share one dimension of at least 2".into(),
        ));
    }

    let mut mean = vec![0.0; dim];
    for f in features {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let centered: Vec<Vec<f64>> = features
        .iter()
        .map(|f| f.iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();

    // Power iteration on the covariance operator X'X without forming it:
    // w ← Xᵀ(Xw), renormalized, with deflation for the second component.
    let mut components: Vec<Vec<f64>> = Vec::new();
    for comp in 0..2 {
        let mut w: Vec<f64> = (0..dim)
            .map(|i| if i % 2 == comp % 2 { 1.0 } else { -0.5 } / (i + 1) as f64)
            .collect();
        for _ in 0..300 {
            // t = Xw
            let t: Vec<f64> = centered
                .iter()
                .map(|row| row.iter().zip(&w).map(|(a, b)| a * b).sum())
                .collect();
            // w' = Xᵀt
            let mut next = vec![0.0; dim];
            for (row, &ti) in centered.iter().zip(&t) {
                for (nj, &rj) in next.iter_mut().zip(row) {
                    *nj += rj * ti;
                }
            }
            // Deflate against earlier components.
            for prev in &components {
                let dot: f64 = next.iter().zip(prev).map(|(a, b)| a * b).sum();
                for (nj, pj) in next.iter_mut().zip(prev) {
                    *nj -= dot * pj;
                }
            }
            let norm: f64 = next.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-300 {
                break; // degenerate direction (e.g. constant data)
            }
            for (wj, nj) in w.iter_mut().zip(&next) {
                *wj = nj / norm;
            }
        }
        components.push(w);
    }

    Ok(centered
        .iter()
        .map(|row| {
            [
                row.iter().zip(&components[0]).map(|(a, b)| a * b).sum(),
                row.iter().zip(&components[1]).map(|(a, b)| a * b).sum(),
            ]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_dominant_axis() {
        // Points along a diagonal line with small orthogonal noise.
        let features: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let t = i as f64 / 4.0;
                let wiggle = if i % 2 == 0 { 0.01 } else { -0.01 };
                vec![t + wiggle, t - wiggle, 0.5 * t]
            })
            .collect();
        let proj = pca_project(&features).unwrap();
        // First component should capture nearly all variance.
        let var1: f64 = proj.iter().map(|p| p[0] * p[0]).sum();
        let var2: f64 = proj.iter().map(|p| p[1] * p[1]).sum();
        assert!(var1 > 100.0 * var2, "var1 {var1} var2 {var2}");
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(pca_project(&[vec![1.0, 2.0]]).is_err());
        assert!(pca_project(&[vec![1.0], vec![2.0], vec![3.0]]).is_err());
        let ragged = vec![vec![1.0, 2.0], vec![1.0], vec![0.0, 1.0]];
        assert!(pca_project(&ragged).is_err());
    }

    #[test]
    fn constant_data_stays_finite() {
        let features = vec![vec![3.0, 3.0, 3.0]; 10];
        let proj = pca_project(&features).unwrap();
        assert!(proj.iter().all(|p| p[0].is_finite() && p[1].is_finite()));
        assert!(proj.iter().all(|p| p[0].abs() < 1e-9 && p[1].abs() < 1e-9));
    }
}
