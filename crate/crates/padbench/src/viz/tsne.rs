//! Exact t-SNE: perplexity-calibrated Gaussian affinities in the input
//! space, Student-t affinities in 2-D, gradient descent with momentum,
//! adaptive gains, and early exaggeration. O(n²) per iteration, which is
//! ample at the dataset sizes this crate visualizes.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::error::{PadError, Result};

pub const DEFAULT_PERPLEXITY: f64 = 30.0;
pub const DEFAULT_ITERATIONS: usize = 1000;

const EXAGGERATION: f64 = 12.0;
const EXAGGERATION_ITERS: usize = 250;
const INITIAL_MOMENTUM: f64 = 0.5;
const FINAL_MOMENTUM: f64 = 0.8;
const LEARNING_RATE: f64 = 200.0;

/// Content hash of one feature row (FNV-1a over the f64 bit patterns).
fn fnv1a_row(row: &[f64]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for v in row {
        for b in v.to_bits().to_le_bytes() {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x100_0000_01b3);
        }
    }
    hash
}

fn pairwise_sq_distances(features: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = features.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let dist: f64 = features[i]
                .iter()
                .zip(&features[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d[i][j] = dist;
            d[j][i] = dist;
        }
    }
    d
}

/// Binary-searches the Gaussian precision for one row so the conditional
/// distribution hits the requested perplexity (entropy = ln perplexity).
fn calibrate_row(distances: &[f64], row: usize, perplexity: f64) -> Vec<f64> {
    let n = distances.len();
    let target_entropy = perplexity.ln();
    let mut beta = 1.0;
    let mut beta_min = f64::NEG_INFINITY;
    let mut beta_max = f64::INFINITY;
    let mut p = vec![0.0; n];

    for _ in 0..64 {
        let mut sum = 0.0;
        for j in 0..n {
            p[j] = if j == row { 0.0 } else { (-beta * distances[j]).exp() };
            sum += p[j];
        }
        if sum <= 0.0 {
            // All mass collapsed; relax beta.
            beta /= 2.0;
            continue;
        }
        let mut entropy = 0.0;
        for pj in p.iter_mut() {
            *pj /= sum;
            if *pj > 1e-300 {
                entropy -= *pj * pj.ln();
            }
        }
        let diff = entropy - target_entropy;
        if diff.abs() < 1e-7 {
            break;
        }
        if diff > 0.0 {
            beta_min = beta;
            beta = if beta_max.is_finite() { (beta + beta_max) / 2.0 } else { beta * 2.0 };
        } else {
            beta_max = beta;
            beta = if beta_min.is_finite() { (beta + beta_min) / 2.0 } else { beta / 2.0 };
        }
    }
    p
}

/// Projects feature vectors to 2-D. Requires at least `3·perplexity`
/// samples and a consistent feature dimension; deterministic per seed.
pub fn tsne_project(features: &[Vec<f64>], perplexity: f64, seed: u64) -> Result<Vec<[f64; 2]>> {
    tsne_project_with_iters(features, perplexity, seed, DEFAULT_ITERATIONS)
}

pub fn tsne_project_with_iters(
    features: &[Vec<f64>],
    perplexity: f64,
    seed: u64,
    iterations: usize,
) -> Result<Vec<[f64; 2]>> {
    let n = features.len();
    if perplexity <= 0.0 || !perplexity.is_finite() {
        return Err(PadError::Domain(format!(
            "perplexity must be positive, got {perplexity}"
        )));
    }
    if (n as f64) < 3.0 * perplexity {
        return Err(PadError::Domain(format!(
            "too few samples for perplexity {perplexity}: need at least {}, got {n}",
            (3.0 * perplexity).ceil() as usize
        )));
    }
    let dim = features[0].len();
    if dim == 0 || features.iter().any(|f| f.len() != dim) {
        return Err(PadError::Domain(
            "all feature vectors must share one nonzero dimension".into(),
        ));
    }

    // Symmetrized joint affinities.
    let distances = pairwise_sq_distances(features);
    let mut p = vec![vec![0.0; n]; n];
    for i in 0..n {
        p[i] = calibrate_row(&distances[i], i, perplexity);
    }
    let mut joint = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            joint[i][j] = ((p[i][j] + p[j][i]) / (2.0 * n as f64)).max(1e-12);
        }
    }

    // Tiny Gaussian init keyed by (seed, row content): identical rows get
    // identical starting points, receive identical gradients, and stay
    // exactly coincident throughout.
    let mut y: Vec<[f64; 2]> = features
        .iter()
        .map(|row| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a_row(row));
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen::<f64>();
            let r = (-2.0 * u1.ln()).sqrt();
            let theta = std::f64::consts::TAU * u2;
            [1e-4 * r * theta.cos(), 1e-4 * r * theta.sin()]
        })
        .collect();
    let mut velocity = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];

    let mut q_num = vec![vec![0.0; n]; n];
    for iter in 0..iterations {
        let exaggeration = if iter < EXAGGERATION_ITERS { EXAGGERATION } else { 1.0 };
        let momentum = if iter < EXAGGERATION_ITERS {
            INITIAL_MOMENTUM
        } else {
            FINAL_MOMENTUM
        };

        // Student-t numerators and their total.
        let mut q_sum = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                let num = 1.0 / (1.0 + dx * dx + dy * dy);
                q_num[i][j] = num;
                q_num[j][i] = num;
                q_sum += 2.0 * num;
            }
        }
        let q_sum = q_sum.max(1e-12);

        for i in 0..n {
            let mut grad = [0.0f64; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let q = (q_num[i][j] / q_sum).max(1e-12);
                let mult = (exaggeration * joint[i][j] - q) * q_num[i][j];
                grad[0] += 4.0 * mult * (y[i][0] - y[j][0]);
                grad[1] += 4.0 * mult * (y[i][1] - y[j][1]);
            }
            for d in 0..2 {
                let sign_match = grad[d].signum() == -velocity[i][d].signum();
                gains[i][d] = if sign_match {
                    gains[i][d] + 0.2
                } else {
                    (gains[i][d] * 0.8).max(0.01)
                };
                velocity[i][d] =
                    momentum * velocity[i][d] - LEARNING_RATE * gains[i][d] * grad[d];
            }
        }
        let mut mean = [0.0f64; 2];
        for i in 0..n {
            y[i][0] += velocity[i][0];
            y[i][1] += velocity[i][1];
            mean[0] += y[i][0];
            mean[1] += y[i][1];
        }
        mean[0] /= n as f64;
        mean[1] /= n as f64;
        for point in y.iter_mut() {
            point[0] -= mean[0];
            point[1] -= mean[1];
        }
    }

    if y.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(PadError::Domain(
            "t-SNE diverged to non-finite coordinates".into(),
        ));
    }
    Ok(y)
}

/// Fraction of points whose k nearest neighbors (in 2-D) share their label,
/// averaged over all points.
pub fn knn_label_purity(points: &[[f64; 2]], labels: &[usize], k: usize) -> f64 {
    let n = points.len();
    assert_eq!(n, labels.len());
    let mut total = 0.0;
    for i in 0..n {
        let mut dists: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let dx = points[i][0] - points[j][0];
                let dy = points[i][1] - points[j][1];
                (dx * dx + dy * dy, j)
            })
            .collect();
        dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let hits = dists
            .iter()
            .take(k)
            .filter(|&&(_, j)| labels[j] == labels[i])
            .count();
        total += hits as f64 / k.min(n - 1) as f64;
    }
    total / n as f64
}
