//! Optimizers. State is index-aligned with the parameter list, which the
//! trainer presents in the same order every step.

use ndarray::ArrayD;

use super::Param;

/// Adam with the usual defaults (β₁ 0.9, β₂ 0.999, ε 1e-8).
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<ArrayD<f64>>,
    v: Vec<ArrayD<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }
}

/// Stochastic gradient descent with classical momentum:
/// v ← μ·v − lr·g, θ ← θ + v.
#[derive(Debug, Clone)]
pub struct SgdMomentum {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Vec<ArrayD<f64>>,
}

impl SgdMomentum {
    pub fn new(learning_rate: f64, momentum: f64) -> Self {
        SgdMomentum {
            learning_rate,
            momentum,
            velocity: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Optimizer {
    Adam(Adam),
    SgdMomentum(SgdMomentum),
}

impl Optimizer {
    pub fn adam(learning_rate: f64) -> Self {
        Optimizer::Adam(Adam::new(learning_rate))
    }

    pub fn sgd_momentum(learning_rate: f64, momentum: f64) -> Self {
        Optimizer::SgdMomentum(SgdMomentum::new(learning_rate, momentum))
    }

    /// Applies one update from the accumulated gradients. The parameter
    /// list must be identical (count and shapes) across steps.
    pub fn step(&mut self, params: &mut [&mut Param]) {
        match self {
            Optimizer::Adam(state) => {
                if state.m.is_empty() {
                    state.m = params.iter().map(|p| ArrayD::zeros(p.value.raw_dim())).collect();
                    state.v = params.iter().map(|p| ArrayD::zeros(p.value.raw_dim())).collect();
                }
                assert_eq!(state.m.len(), params.len(), "parameter set changed mid-run");
                state.step += 1;
                let t = state.step as i32;
                let bias1 = 1.0 - state.beta1.powi(t);
                let bias2 = 1.0 - state.beta2.powi(t);
                for (i, p) in params.iter_mut().enumerate() {
                    let m = &mut state.m[i];
                    let v = &mut state.v[i];
                    ndarray::Zip::from(m)
                        .and(v)
                        .and(&mut p.value)
                        .and(&p.grad)
                        .for_each(|m, v, value, &g| {
                            *m = state.beta1 * *m + (1.0 - state.beta1) * g;
                            *v = state.beta2 * *v + (1.0 - state.beta2) * g * g;
                            let m_hat = *m / bias1;
                            let v_hat = *v / bias2;
                            *value -= state.learning_rate * m_hat / (v_hat.sqrt() + state.eps);
                        });
                }
            }
            Optimizer::SgdMomentum(state) => {
                if state.velocity.is_empty() {
                    state.velocity =
                        params.iter().map(|p| ArrayD::zeros(p.value.raw_dim())).collect();
                }
                assert_eq!(
                    state.velocity.len(),
                    params.len(),
                    "parameter set changed mid-run"
                );
                for (i, p) in params.iter_mut().enumerate() {
                    let v = &mut state.velocity[i];
                    ndarray::Zip::from(v)
                        .and(&mut p.value)
                        .and(&p.grad)
                        .for_each(|v, value, &g| {
                            *v = state.momentum * *v - state.learning_rate * g;
                            *value += *v;
                        });
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic_param() -> Param {
        Param::new("theta", ndarray::ArrayD::from_elem(vec![1], 5.0))
    }

    #[test]
    fn adam_minimizes_quadratic() {
        // f(θ) = θ², ∇f = 2θ.
        let mut p = quadratic_param();
        let mut opt = Optimizer::adam(0.1);
        for _ in 0..500 {
            p.zero_grad();
            p.grad[[0]] = 2.0 * p.value[[0]];
            opt.step(&mut [&mut p]);
        }
        assert!(p.value[[0]].abs() < 1e-3, "theta = {}", p.value[[0]]);
    }

    #[test]
    fn sgd_momentum_minimizes_quadratic() {
        let mut p = quadratic_param();
        let mut opt = Optimizer::sgd_momentum(0.05, 0.9);
        for _ in 0..300 {
            p.zero_grad();
            p.grad[[0]] = 2.0 * p.value[[0]];
            opt.step(&mut [&mut p]);
        }
        assert!(p.value[[0]].abs() < 1e-3, "theta = {}", p.value[[0]]);
    }

    #[test]
    fn adam_first_step_magnitude_is_learning_rate() {
        // With bias correction the first update is exactly lr·sign(g).
        let mut p = quadratic_param();
        let mut opt = Optimizer::adam(0.01);
        p.grad[[0]] = 3.7;
        opt.step(&mut [&mut p]);
        assert!((p.value[[0]] - (5.0 - 0.01)).abs() < 1e-6);
    }
}
