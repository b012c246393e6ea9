//! MobileNetV2-style convolutional backbone with 28 indexed conv layers.
//!
//! Structure: a stride-2 stem (layer 1), nine inverted-residual bottleneck
//! blocks (layers 2–27; expansion 1×1 → depthwise 3×3 → linear projection
//! 1×1, with a skip connection whenever stride is 1 and the channel count
//! is preserved), and a final 1×1 conv (layer 28) feeding global average
//! pooling into a 1280-wide feature vector. Every conv is followed by batch
//! norm; expansion/depthwise/stem/final convs use ReLU, projections are
//! linear.
//!
//! Freeze plans address these 28 layers. A frozen layer runs its batch norm
//! in inference form and is never visited by backward; backpropagation
//! stops at the lowest trainable layer.

use ndarray::{Array2, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PadError, Result};

use super::layers::{relu, relu_backward, BatchNorm2d, Conv2d, DepthwiseConv2d, GlobalAvgPool};
use super::{LayerCtx, Param};

/// Total conv layers in the backbone; freeze plans index 1..=28.
pub const CONV_LAYERS: usize = 28;

/// Width of the pooled feature vector.
pub const FEATURE_DIM: usize = 1280;

/// Expected square input resolution.
pub const INPUT_SIZE: usize = 224;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneConfig {
    /// Scales internal channel widths (the 1280 feature width is fixed).
    pub width_multiplier: f64,
    /// Seed the synthetic pretrained weights were drawn from.
    pub seed: u64,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            width_multiplier: 1.0,
            seed: 0x7ad,
        }
    }
}

/// MobileNet channel rounding: nearest multiple of 8, never below 8 and
/// never more than 10% under the requested width.
fn make_divisible(v: f64) -> usize {
    let rounded = (((v + 4.0) / 8.0).floor() * 8.0).max(8.0);
    let adjusted = if rounded < 0.9 * v { rounded + 8.0 } else { rounded };
    adjusted as usize
}

#[derive(Debug, Clone)]
pub enum ConvOp {
    Full(Conv2d),
    Depthwise(DepthwiseConv2d),
}

/// One indexed conv layer: conv → batch norm → optional ReLU.
#[derive(Debug, Clone)]
pub struct ConvUnit {
    pub index: usize,
    pub op: ConvOp,
    pub bn: BatchNorm2d,
    pub relu: bool,
    pub trainable: bool,
    cached_output: Option<Array4<f64>>,
}

impl ConvUnit {
    #[allow(clippy::too_many_arguments)]
    fn full(
        index: usize,
        rng: &mut ChaCha8Rng,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        relu: bool,
    ) -> Self {
        let name = format!("backbone.u{index:02}");
        ConvUnit {
            index,
            op: ConvOp::Full(Conv2d::new(
                &format!("{name}.conv"),
                rng,
                in_ch,
                out_ch,
                kernel,
                stride,
                padding,
            )),
            bn: BatchNorm2d::new(&format!("{name}.bn"), out_ch),
            relu,
            trainable: true,
            cached_output: None,
        }
    }

    fn depthwise(index: usize, rng: &mut ChaCha8Rng, channels: usize, stride: usize) -> Self {
        let name = format!("backbone.u{index:02}");
        ConvUnit {
            index,
            op: ConvOp::Depthwise(DepthwiseConv2d::new(
                &format!("{name}.conv"),
                rng,
                channels,
                stride,
            )),
            bn: BatchNorm2d::new(&format!("{name}.bn"), channels),
            relu: true,
            trainable: true,
            cached_output: None,
        }
    }

    fn ctx(&self, base: LayerCtx, lowest_trainable: usize) -> LayerCtx {
        LayerCtx {
            train: base.train && self.trainable,
            update_running: base.update_running && self.trainable,
            cache: base.cache && self.index >= lowest_trainable,
        }
    }

    fn forward(&mut self, x: &Array4<f64>, base: LayerCtx, lowest_trainable: usize) -> Array4<f64> {
        let ctx = self.ctx(base, lowest_trainable);
        let y = match &mut self.op {
            ConvOp::Full(conv) => conv.forward(x, ctx),
            ConvOp::Depthwise(conv) => conv.forward(x, ctx),
        };
        let mut y = self.bn.forward(&y, ctx);
        if self.relu {
            relu(&mut y);
        }
        if ctx.cache {
            self.cached_output = Some(y.clone());
        }
        y
    }

    fn backward(&mut self, dy: &Array4<f64>, need_dx: bool) -> Option<Array4<f64>> {
        let mut dy = dy.clone();
        if self.relu {
            let y = self
                .cached_output
                .as_ref()
                .expect("backward without cached forward");
            relu_backward(&mut dy, y);
        }
        let d_conv = self
            .bn
            .backward(&dy, true)
            .expect("batch norm always feeds its conv gradient");
        match &mut self.op {
            ConvOp::Full(conv) => conv.backward(&d_conv, need_dx),
            ConvOp::Depthwise(conv) => conv.backward(&d_conv, need_dx),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::with_capacity(3);
        match &mut self.op {
            ConvOp::Full(conv) => out.push(&mut conv.weight),
            ConvOp::Depthwise(conv) => out.push(&mut conv.weight),
        }
        out.push(&mut self.bn.gamma);
        out.push(&mut self.bn.beta);
        out
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut out = Vec::with_capacity(3);
        match &self.op {
            ConvOp::Full(conv) => out.push(&conv.weight),
            ConvOp::Depthwise(conv) => out.push(&conv.weight),
        }
        out.push(&self.bn.gamma);
        out.push(&self.bn.beta);
        out
    }

    fn clear_cache(&mut self) {
        match &mut self.op {
            ConvOp::Full(conv) => conv.clear_cache(),
            ConvOp::Depthwise(conv) => conv.clear_cache(),
        }
        self.bn.clear_cache();
        self.cached_output = None;
    }
}

/// Inverted residual block: optional expansion, depthwise, projection.
#[derive(Debug, Clone)]
pub struct Bottleneck {
    pub units: Vec<ConvUnit>,
    pub residual: bool,
}

impl Bottleneck {
    fn forward(&mut self, x: &Array4<f64>, base: LayerCtx, lowest_trainable: usize) -> Array4<f64> {
        let mut y = x.clone();
        for unit in &mut self.units {
            y = unit.forward(&y, base, lowest_trainable);
        }
        if self.residual {
            y += x;
        }
        y
    }

    fn backward(
        &mut self,
        dy: &Array4<f64>,
        need_dx: bool,
        lowest_trainable: usize,
    ) -> Option<Array4<f64>> {
        let mut flowing = Some(dy.clone());
        for unit in self.units.iter_mut().rev() {
            if unit.index < lowest_trainable {
                flowing = None;
                break;
            }
            let d = flowing.expect("gradient reaches every trainable unit");
            flowing = unit.backward(&d, unit.index > lowest_trainable);
        }
        if need_dx {
            let mut dx = flowing.expect("need_dx implies a fully trainable block");
            if self.residual {
                dx += dy;
            }
            Some(dx)
        } else {
            None
        }
    }
}

/// The full backbone. `forward` yields pooled (N, 1280) features.
#[derive(Debug, Clone)]
pub struct Backbone {
    pub config: BackboneConfig,
    pub stem: ConvUnit,
    pub blocks: Vec<Bottleneck>,
    pub last: ConvUnit,
    pool: GlobalAvgPool,
}

/// (out_channels, stride, expansion) per bottleneck block.
const BLOCK_TABLE: [(usize, usize, usize); 9] = [
    (16, 1, 1),
    (24, 2, 6),
    (24, 1, 6),
    (32, 2, 6),
    (32, 1, 6),
    (64, 2, 6),
    (64, 1, 6),
    (96, 1, 6),
    (160, 2, 6),
];

impl Backbone {
    /// Builds the backbone with seeded He-uniform weights and identity
    /// batch-norm statistics.
    pub fn build(config: &BackboneConfig) -> Result<Self> {
        if config.width_multiplier <= 0.0 || !config.width_multiplier.is_finite() {
            return Err(PadError::Domain(format!(
                "width_multiplier must be positive, got {}",
                config.width_multiplier
            )));
        }
        let alpha = config.width_multiplier;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

        let stem_ch = make_divisible(32.0 * alpha);
        let mut index = 1;
        let stem = ConvUnit::full(index, &mut rng, 3, stem_ch, 3, 2, 1, true);

        let mut blocks = Vec::new();
        let mut in_ch = stem_ch;
        for &(out, stride, expansion) in &BLOCK_TABLE {
            let out_ch = make_divisible(out as f64 * alpha);
            let mut units = Vec::new();
            let expanded = in_ch * expansion;
            if expansion != 1 {
                index += 1;
                units.push(ConvUnit::full(index, &mut rng, in_ch, expanded, 1, 1, 0, true));
            }
            index += 1;
            units.push(ConvUnit::depthwise(index, &mut rng, expanded, stride));
            index += 1;
            // Linear projection back down to the block width.
            let mut project = ConvUnit::full(index, &mut rng, expanded, out_ch, 1, 1, 0, false);
            project.relu = false;
            units.push(project);
            blocks.push(Bottleneck {
                units,
                residual: stride == 1 && in_ch == out_ch,
            });
            in_ch = out_ch;
        }

        index += 1;
        let last = ConvUnit::full(index, &mut rng, in_ch, FEATURE_DIM, 1, 1, 0, true);
        debug_assert_eq!(index, CONV_LAYERS);

        Ok(Backbone {
            config: config.clone(),
            stem,
            blocks,
            last,
            pool: GlobalAvgPool::default(),
        })
    }

    /// Builds the backbone and calibrates batch-norm running statistics on
    /// a seeded batch of procedural images, standing in for a pretrained
    /// checkpoint when a real one is unavailable.
    pub fn synthesize_pretrained(config: &BackboneConfig) -> Result<Self> {
        let mut backbone = Backbone::build(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xca11b8);
        let n = 8;
        let size = 64; // calibration statistics are resolution-independent
        let mut batch = Array4::zeros((n, 3, size, size));
        for i in 0..n {
            let (fx, fy) = (rng.gen_range(1.0..6.0), rng.gen_range(1.0..6.0));
            let (px, py) = (rng.gen::<f64>(), rng.gen::<f64>());
            let noise_amp = rng.gen_range(0.1..0.3);
            for c in 0..3 {
                let shift = rng.gen_range(-0.2..0.2);
                for h in 0..size {
                    for w in 0..size {
                        let u = w as f64 / size as f64;
                        let v = h as f64 / size as f64;
                        let s = (std::f64::consts::TAU * (fx * u + px)).sin()
                            * (std::f64::consts::TAU * (fy * v + py)).cos();
                        batch[[i, c, h, w]] = (0.5 * s + shift
                            + noise_amp * rng.gen_range(-1.0..1.0))
                        .clamp(-1.0, 1.0);
                    }
                }
            }
        }
        // One pass with momentum 0: running statistics become the batch
        // statistics, layer by layer in forward order.
        for unit in backbone.units_mut() {
            unit.bn.momentum = 0.0;
        }
        backbone.forward(&batch, LayerCtx::training());
        for unit in backbone.units_mut() {
            unit.bn.momentum = 0.9;
            unit.clear_cache();
        }
        Ok(backbone)
    }

    /// Conv units in layer order 1..=28.
    pub fn units(&self) -> Vec<&ConvUnit> {
        let mut out = Vec::with_capacity(CONV_LAYERS);
        out.push(&self.stem);
        for block in &self.blocks {
            out.extend(block.units.iter());
        }
        out.push(&self.last);
        out
    }

    pub fn units_mut(&mut self) -> Vec<&mut ConvUnit> {
        let mut out = Vec::with_capacity(CONV_LAYERS);
        out.push(&mut self.stem);
        for block in &mut self.blocks {
            out.extend(block.units.iter_mut());
        }
        out.push(&mut self.last);
        out
    }

    /// Marks layers `1..trainable_from` frozen and the rest trainable.
    pub fn set_trainable_from(&mut self, trainable_from: usize) {
        for unit in self.units_mut() {
            unit.trainable = unit.index >= trainable_from;
        }
    }

    pub fn lowest_trainable(&self) -> Option<usize> {
        self.units()
            .iter()
            .find(|u| u.trainable)
            .map(|u| u.index)
    }

    /// (trainable, frozen) parameter counts over conv weights and batch
    /// norm affine parameters.
    pub fn parameter_counts(&self) -> (usize, usize) {
        let mut trainable = 0;
        let mut frozen = 0;
        for unit in self.units() {
            let count: usize = unit.params().iter().map(|p| p.value.len()).sum();
            if unit.trainable {
                trainable += count;
            } else {
                frozen += count;
            }
        }
        (trainable, frozen)
    }

    pub fn forward(&mut self, x: &Array4<f64>, ctx: LayerCtx) -> Array2<f64> {
        let lowest = self.lowest_trainable().unwrap_or(usize::MAX);
        let mut y = self.stem.forward(x, ctx, lowest);
        for block in &mut self.blocks {
            y = block.forward(&y, ctx, lowest);
        }
        y = self.last.forward(&y, ctx, lowest);
        self.pool.forward(
            &y,
            LayerCtx {
                cache: ctx.cache,
                ..ctx
            },
        )
    }

    /// Accumulates gradients for trainable layers. Propagation stops at the
    /// lowest trainable layer; frozen layers are never visited.
    pub fn backward(&mut self, dfeat: &Array2<f64>) {
        let lowest = match self.lowest_trainable() {
            Some(l) => l,
            None => return,
        };
        let mut d = self.pool.backward(dfeat);
        match self.last.backward(&d, self.last.index > lowest) {
            Some(next) => d = next,
            None => return,
        }
        for block in self.blocks.iter_mut().rev() {
            let block_min = block.units[0].index;
            let block_max = block.units.last().expect("blocks are non-empty").index;
            if block_max < lowest {
                return;
            }
            match block.backward(&d, block_min > lowest, lowest) {
                Some(next) => d = next,
                None => return,
            }
        }
        if self.stem.index >= lowest {
            self.stem.backward(&d, false);
        }
    }

    /// Trainable parameters in layer order.
    pub fn trainable_params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::new();
        for unit in self.units_mut() {
            if unit.trainable {
                out.extend(unit.params_mut());
            }
        }
        out
    }

    pub fn clear_caches(&mut self) {
        for unit in self.units_mut() {
            unit.clear_cache();
        }
    }

    /// All tensors (parameters and batch-norm statistics) by name.
    pub fn tensors(&self) -> Vec<(String, ndarray::ArrayD<f64>)> {
        let mut out = Vec::new();
        for unit in self.units() {
            for p in unit.params() {
                out.push((p.name.clone(), p.value.clone()));
            }
            let prefix = format!("backbone.u{:02}.bn", unit.index);
            out.push((
                format!("{prefix}.running_mean"),
                unit.bn.running_mean.clone().into_dyn(),
            ));
            out.push((
                format!("{prefix}.running_var"),
                unit.bn.running_var.clone().into_dyn(),
            ));
        }
        out
    }

    /// Restores tensors exported by [`Backbone::tensors`]; shapes must match.
    pub fn load_tensors(
        &mut self,
        tensors: &std::collections::BTreeMap<String, ndarray::ArrayD<f64>>,
    ) -> Result<()> {
        for unit in self.units_mut() {
            let prefix = format!("backbone.u{:02}.bn", unit.index);
            for p in unit.params_mut() {
                let t = tensors.get(&p.name).ok_or_else(|| {
                    PadError::Format(format!("checkpoint is missing tensor `{}`", p.name))
                })?;
                if t.shape() != p.value.shape() {
                    return Err(PadError::Format(format!(
                        "tensor `{}` has shape {:?}, expected {:?}",
                        p.name,
                        t.shape(),
                        p.value.shape()
                    )));
                }
                p.value.assign(t);
            }
            for (suffix, target) in [
                ("running_mean", &mut unit.bn.running_mean),
                ("running_var", &mut unit.bn.running_var),
            ] {
                let name = format!("{prefix}.{suffix}");
                let t = tensors.get(&name).ok_or_else(|| {
                    PadError::Format(format!("checkpoint is missing tensor `{name}`"))
                })?;
                let t = t
                    .view()
                    .into_dimensionality::<ndarray::Ix1>()
                    .map_err(|_| {
                        PadError::Format(format!("tensor `{name}` is not 1-D"))
                    })?;
                if t.len() != target.len() {
                    return Err(PadError::Format(format!(
                        "tensor `{name}` has length {}, expected {}",
                        t.len(),
                        target.len()
                    )));
                }
                target.assign(&t);
            }
        }
        Ok(())
    }
}
