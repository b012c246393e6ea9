//! Minimal CPU neural-network stack used by the PADNet models.
//!
//! Everything runs in `f64` with NCHW feature maps. Each layer owns its
//! parameters and caches exactly what its backward pass needs; caching is
//! skipped for frozen layers and at inference, so frozen prefixes cost no
//! memory and training backpropagates only as deep as the lowest trainable
//! layer.

pub mod backbone;
pub mod layers;
pub mod loss;
pub mod optim;

use ndarray::ArrayD;

/// A parameter tensor with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: ArrayD<f64>,
    pub grad: ArrayD<f64>,
}

impl Param {
    pub fn new(name: impl Into<String>, value: ArrayD<f64>) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        Param {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Per-layer execution mode resolved by the trainer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerCtx {
    /// Batch statistics and gradient caching apply (trainable layer during
    /// a training pass). Frozen layers always run in inference form.
    pub train: bool,
    /// Whether batch-norm running statistics are updated this pass.
    /// Disabled for loss re-evaluation (e.g. finite-difference checks).
    pub update_running: bool,
    /// Whether to cache activations for a later backward pass.
    pub cache: bool,
}

impl LayerCtx {
    pub const INFERENCE: LayerCtx = LayerCtx {
        train: false,
        update_running: false,
        cache: false,
    };

    pub fn training() -> Self {
        LayerCtx {
            train: true,
            update_running: true,
            cache: true,
        }
    }

    /// Training-mode forward that leaves no trace: batch statistics are
    /// used but not persisted, nothing is cached.
    pub fn loss_probe() -> Self {
        LayerCtx {
            train: true,
            update_running: false,
            cache: false,
        }
    }
}
