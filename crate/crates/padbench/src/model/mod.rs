//! PADNet transfer-learning models: a pretrained backbone with a frozen
//! prefix plus a trainable dense head scoring presentations as bona fide
//! or attack.
//!
//! Output convention, fixed in the model file schema: unit 0 = bona fide,
//! unit 1 = attack. The reported score renormalizes the two sigmoid
//! outputs, `score = s_attack / (s_attack + s_bonafide)`, so thresholding
//! at τ is well defined even though the units are independent sigmoids.

mod archive;
pub mod preprocess;

pub use archive::{load_backbone, load_model, save_backbone, save_model, ARCHIVE_SCHEMA_VERSION};

use ndarray::{Array2, Array4, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Manifest, SampleRecord};
use crate::error::{PadError, Result};
use crate::metrics::{GroundTruth, ScoreRecord};
use crate::nn::backbone::{Backbone, BackboneConfig, CONV_LAYERS, FEATURE_DIM};
use crate::nn::layers::{sigmoid, Linear};
use crate::nn::loss::bce_with_logits;
use crate::nn::optim::Optimizer;
use crate::nn::{LayerCtx, Param};

/// Contiguous frozen prefix / trainable suffix over the backbone's 28
/// conv layers. Head layers are always trainable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreezePlan {
    /// Inclusive frozen interval, always starting at layer 1.
    pub frozen: (usize, usize),
    /// Inclusive trainable interval, always ending at layer 28.
    pub trainable: (usize, usize),
}

impl FreezePlan {
    /// Freezes layers `1..=frozen_upto`, leaving the rest trainable.
    pub fn freeze_through(frozen_upto: usize) -> Result<Self> {
        let plan = FreezePlan {
            frozen: (1, frozen_upto),
            trainable: (frozen_upto + 1, CONV_LAYERS),
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        let (f0, f1) = self.frozen;
        let (t0, t1) = self.trainable;
        let ok = f0 == 1
            && f1 >= f0
            && t0 == f1 + 1
            && t1 == CONV_LAYERS
            && t0 <= t1
            && f1 < CONV_LAYERS;
        if !ok {
            return Err(PadError::Domain(format!(
                "freeze plan {:?}/{:?} must split 1..={CONV_LAYERS} into a frozen prefix \
                 and a non-empty trainable suffix",
                self.frozen, self.trainable
            )));
        }
        Ok(())
    }

    pub fn first_trainable(&self) -> usize {
        self.trainable.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadLayer {
    pub width: usize,
    pub activation: Activation,
}

/// Dense head shape. The final layer is two sigmoid units; hidden layers
/// are ReLU.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub layers: Vec<HeadLayer>,
}

impl HeadSpec {
    /// 1024-ReLU, 1024-ReLU, 512-ReLU, 2-sigmoid.
    pub fn standard() -> Self {
        HeadSpec {
            layers: vec![
                HeadLayer { width: 1024, activation: Activation::Relu },
                HeadLayer { width: 1024, activation: Activation::Relu },
                HeadLayer { width: 512, activation: Activation::Relu },
                HeadLayer { width: 2, activation: Activation::Sigmoid },
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let last = self.layers.last().ok_or_else(|| {
            PadError::Domain("head must have at least the output layer".into())
        })?;
        if last.width != 2 || last.activation != Activation::Sigmoid {
            return Err(PadError::Domain(format!(
                "final head layer must be 2 sigmoid units, got {} {:?}",
                last.width, last.activation
            )));
        }
        for layer in &self.layers[..self.layers.len() - 1] {
            if layer.activation != Activation::Relu {
                return Err(PadError::Domain(
                    "hidden head layers must use ReLU".into(),
                ));
            }
            if layer.width == 0 {
                return Err(PadError::Domain("head layer width must be positive".into()));
            }
        }
        Ok(())
    }

    /// Parameter count for a given input width: Σ (in·out + out).
    pub fn parameter_count(&self, input_dim: usize) -> usize {
        let mut input = input_dim;
        let mut total = 0;
        for layer in &self.layers {
            total += input * layer.width + layer.width;
            input = layer.width;
        }
        total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    SgdMomentum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    /// Used by SGD only.
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// (height, width, channels); images are resized to exactly this.
    pub input_size: (usize, usize, usize),
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(PadError::Domain("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(PadError::Domain("momentum must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(PadError::Domain(
                "batch_size and epochs must be positive".into(),
            ));
        }
        let expected = (preprocess::INPUT_HW, preprocess::INPUT_HW, 3);
        if self.input_size != expected {
            return Err(PadError::Domain(format!(
                "input_size must be {expected:?}, got {:?}",
                self.input_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "padnet1")]
    PadNet1,
    #[serde(rename = "padnet2")]
    PadNet2,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::PadNet1 => "padnet1",
            Variant::PadNet2 => "padnet2",
        }
    }
}

/// Full model recipe: variant, freeze plan, head shape, training config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PadNetSpec {
    pub variant: Variant,
    pub freeze_plan: FreezePlan,
    pub head: HeadSpec,
    pub train: TrainConfig,
}

impl PadNetSpec {
    /// Layers 1–26 frozen, Adam (lr 1e-3 default), batch 32, 50 epochs.
    pub fn padnet1(seed: u64) -> Self {
        PadNetSpec {
            variant: Variant::PadNet1,
            freeze_plan: FreezePlan::freeze_through(26).expect("26 is a valid prefix"),
            head: HeadSpec::standard(),
            train: TrainConfig {
                optimizer: OptimizerKind::Adam,
                learning_rate: 1e-3,
                momentum: 0.0,
                batch_size: 32,
                epochs: 50,
                input_size: (preprocess::INPUT_HW, preprocess::INPUT_HW, 3),
                seed,
            },
        }
    }

    /// Layers 1–16 frozen, SGD (lr 1e-4, momentum 0.9), batch 64, 50 epochs.
    pub fn padnet2(seed: u64) -> Self {
        PadNetSpec {
            variant: Variant::PadNet2,
            freeze_plan: FreezePlan::freeze_through(16).expect("16 is a valid prefix"),
            head: HeadSpec::standard(),
            train: TrainConfig {
                optimizer: OptimizerKind::SgdMomentum,
                learning_rate: 1e-4,
                momentum: 0.9,
                batch_size: 64,
                epochs: 50,
                input_size: (preprocess::INPUT_HW, preprocess::INPUT_HW, 3),
                seed,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.freeze_plan.validate()?;
        self.head.validate()?;
        self.train.validate()?;
        let coherent = match self.variant {
            Variant::PadNet1 => {
                self.freeze_plan.frozen == (1, 26)
                    && self.train.optimizer == OptimizerKind::Adam
            }
            Variant::PadNet2 => {
                self.freeze_plan.frozen == (1, 16)
                    && self.train.optimizer == OptimizerKind::SgdMomentum
            }
        };
        if !coherent {
            return Err(PadError::Domain(format!(
                "{} requires its canonical freeze plan and optimizer",
                self.variant.as_str()
            )));
        }
        Ok(())
    }
}

/// Trainable vs frozen parameter breakdown emitted by [`build_padnet`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterReport {
    pub backbone_frozen: usize,
    pub backbone_trainable: usize,
    pub head_trainable: usize,
}

impl ParameterReport {
    pub fn total_trainable(&self) -> usize {
        self.backbone_trainable + self.head_trainable
    }
}

/// A backbone with freeze plan applied plus the dense head.
#[derive(Debug, Clone)]
pub struct PadNet {
    pub spec: PadNetSpec,
    pub backbone: Backbone,
    head: Vec<Linear>,
    /// Post-ReLU activations per hidden head layer, for backward.
    head_relu_cache: Vec<Option<Array2<f64>>>,
}

/// Assembles a PADNet from a loaded backbone. The freeze plan is applied
/// to the backbone; the head is seeded from `spec.train.seed`.
pub fn build_padnet(spec: &PadNetSpec, mut backbone: Backbone) -> Result<PadNet> {
    spec.validate()?;
    backbone.set_trainable_from(spec.freeze_plan.first_trainable());

    let mut rng = ChaCha8Rng::seed_from_u64(spec.train.seed ^ 0x4ead);
    let mut head = Vec::new();
    let mut input = FEATURE_DIM;
    for (i, layer) in spec.head.layers.iter().enumerate() {
        head.push(Linear::new(
            &format!("head.dense{}", i + 1),
            &mut rng,
            input,
            layer.width,
        ));
        input = layer.width;
    }

    let head_relu_cache = vec![None; head.len().saturating_sub(1)];
    Ok(PadNet {
        spec: spec.clone(),
        backbone,
        head,
        head_relu_cache,
    })
}

impl PadNet {
    pub fn parameter_report(&self) -> ParameterReport {
        let (backbone_trainable, backbone_frozen) = self.backbone.parameter_counts();
        let head_trainable = self
            .head
            .iter()
            .flat_map(|l| [l.weight.value.len(), l.bias.value.len()])
            .sum();
        ParameterReport {
            backbone_frozen,
            backbone_trainable,
            head_trainable,
        }
    }

    fn head_forward(&mut self, features: &Array2<f64>, ctx: LayerCtx) -> Array2<f64> {
        let n_layers = self.head.len();
        let head = &mut self.head;
        let relu_cache = &mut self.head_relu_cache;
        let mut y = features.clone();
        for (i, layer) in head.iter_mut().enumerate() {
            y = layer.forward(&y, ctx);
            if i + 1 < n_layers {
                y.mapv_inplace(|v| v.max(0.0));
                if ctx.cache {
                    relu_cache[i] = Some(y.clone());
                }
            }
        }
        y
    }

    fn head_backward(&mut self, dlogits: &Array2<f64>) -> Array2<f64> {
        let mut d = dlogits.clone();
        for i in (0..self.head.len()).rev() {
            if i + 1 < self.head.len() {
                let y = self.head_relu_cache[i]
                    .as_ref()
                    .expect("backward without cached forward");
                ndarray::Zip::from(&mut d).and(y).for_each(|g, &yv| {
                    if yv <= 0.0 {
                        *g = 0.0;
                    }
                });
            }
            d = self.head[i]
                .backward(&d, true)
                .expect("head layers always propagate");
        }
        d
    }

    /// Logits for a preprocessed batch.
    pub fn forward_logits(&mut self, x: &Array4<f64>, ctx: LayerCtx) -> Array2<f64> {
        let features = self.backbone.forward(x, ctx);
        self.head_forward(&features, ctx)
    }

    /// Renormalized attack score per row of a logit matrix.
    pub fn scores_from_logits(logits: &Array2<f64>) -> Vec<f64> {
        logits
            .axis_iter(Axis(0))
            .map(|row| {
                let s_bona = sigmoid(row[0]);
                let s_attack = sigmoid(row[1]);
                s_attack / (s_attack + s_bona)
            })
            .collect()
    }

    fn trainable_params_mut(&mut self) -> Vec<&mut Param> {
        let mut params = self.backbone.trainable_params_mut();
        for layer in &mut self.head {
            params.push(&mut layer.weight);
            params.push(&mut layer.bias);
        }
        params
    }

    fn zero_grads(&mut self) {
        for p in self.trainable_params_mut() {
            p.zero_grad();
        }
    }

    pub fn clear_caches(&mut self) {
        self.backbone.clear_caches();
        for layer in &mut self.head {
            layer.clear_cache();
        }
        for slot in &mut self.head_relu_cache {
            *slot = None;
        }
    }

    /// Head parameters in layer order (weights and biases interleaved).
    pub fn head_params(&self) -> Vec<&Param> {
        self.head
            .iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    pub(crate) fn from_parts(spec: PadNetSpec, backbone: Backbone, head: Vec<Linear>) -> PadNet {
        let head_relu_cache = vec![None; head.len().saturating_sub(1)];
        PadNet {
            spec,
            backbone,
            head,
            head_relu_cache,
        }
    }
}

/// Per-epoch training history entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub loss: f64,
    pub accuracy: f64,
}

/// One-hot targets with the fixed class convention.
fn one_hot(labels: &[GroundTruth]) -> Array2<f64> {
    let mut t = Array2::zeros((labels.len(), 2));
    for (i, label) in labels.iter().enumerate() {
        match label {
            GroundTruth::BonaFide => t[[i, 0]] = 1.0,
            GroundTruth::Attack => t[[i, 1]] = 1.0,
        }
    }
    t
}

fn load_batch(samples: &[&SampleRecord]) -> Result<(Array4<f64>, Array2<f64>)> {
    let hw = preprocess::INPUT_HW;
    let mut x = Array4::zeros((samples.len(), 3, hw, hw));
    for (i, sample) in samples.iter().enumerate() {
        let img = preprocess::load_and_preprocess(&sample.path)?;
        x.index_axis_mut(Axis(0), i).assign(&img);
    }
    let labels: Vec<GroundTruth> = samples.iter().map(|s| s.label).collect();
    Ok((x, one_hot(&labels)))
}

/// Trains the model on a manifest. Fixed seed ⇒ reproducible history.
/// Frozen backbone layers are untouched bit for bit. After the epoch
/// loop, trainable-layer batch-norm statistics are re-estimated over the
/// training set so inference-mode predictions match training behavior.
pub fn train(
    model: &mut PadNet,
    manifest: &Manifest,
    config: &TrainConfig,
) -> Result<Vec<EpochStats>> {
    config.validate()?;
    let n_bona = manifest.bona_fide_count();
    let n_attack = manifest.samples.len() - n_bona;
    if n_bona == 0 || n_attack == 0 {
        return Err(PadError::Domain(format!(
            "training needs both classes, manifest has {n_bona} bona fide and {n_attack} attacks"
        )));
    }

    let mut optimizer = match config.optimizer {
        OptimizerKind::Adam => Optimizer::adam(config.learning_rate),
        OptimizerKind::SgdMomentum => {
            Optimizer::sgd_momentum(config.learning_rate, config.momentum)
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut history = Vec::with_capacity(config.epochs);
    let n = manifest.samples.len();
    // A trailing micro-batch produces violent batch statistics and
    // optimizer steps; drop it whenever at least one full batch exists.
    // Shuffling cycles every sample through training across epochs.
    let usable = if n > config.batch_size {
        (n / config.batch_size) * config.batch_size
    } else {
        n
    };

    for _epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        let mut correct = 0usize;
        for chunk in order[..usable].chunks(config.batch_size) {
            let batch: Vec<&SampleRecord> =
                chunk.iter().map(|&i| &manifest.samples[i]).collect();
            let (x, targets) = load_batch(&batch)?;

            model.zero_grads();
            let logits = model.forward_logits(&x, LayerCtx::training());
            let (loss, dlogits) = bce_with_logits(&logits, &targets);
            let dfeat = model.head_backward(&dlogits);
            model.backbone.backward(&dfeat);
            optimizer.step(&mut model.trainable_params_mut());

            epoch_loss += loss * chunk.len() as f64;
            for (row, sample) in logits.axis_iter(Axis(0)).zip(batch.iter()) {
                let predicted_attack = row[1] >= row[0];
                let is_attack = sample.label == GroundTruth::Attack;
                if predicted_attack == is_attack {
                    correct += 1;
                }
            }
        }
        history.push(EpochStats {
            loss: epoch_loss / usable as f64,
            accuracy: correct as f64 / usable as f64,
        });
    }

    // Re-estimate trainable-layer batch-norm statistics under the final
    // weights (sample-weighted running average over the training set in
    // manifest order), so inference matches training behavior. Frozen
    // layers never update.
    let sample_refs: Vec<&SampleRecord> = manifest.samples.iter().collect();
    let mut samples_seen = 0usize;
    for chunk in sample_refs.chunks(config.batch_size) {
        let (x, _) = load_batch(chunk)?;
        let keep = samples_seen as f64 / (samples_seen + chunk.len()) as f64;
        for unit in model.backbone.units_mut() {
            if unit.trainable {
                unit.bn.momentum = keep;
            }
        }
        model.backbone.forward(
            &x,
            LayerCtx {
                train: true,
                update_running: true,
                cache: false,
            },
        );
        samples_seen += chunk.len();
    }
    for unit in model.backbone.units_mut() {
        unit.bn.momentum = 0.9;
    }

    model.clear_caches();
    Ok(history)
}

/// Scores samples in order. Deterministic in inference mode; an untrained
/// model yields valid (if meaningless) scores.
pub fn predict(model: &mut PadNet, samples: &[SampleRecord]) -> Result<Vec<ScoreRecord>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(8) {
        let refs: Vec<&SampleRecord> = chunk.iter().collect();
        let (x, _) = load_batch(&refs)?;
        let logits = model.forward_logits(&x, LayerCtx::INFERENCE);
        for (score, sample) in PadNet::scores_from_logits(&logits).iter().zip(chunk) {
            out.push(ScoreRecord {
                sample_id: sample.path.display().to_string(),
                ground_truth: sample.label,
                pais: sample.pais.clone(),
                score: *score,
            });
        }
    }
    Ok(out)
}

/// One sampled parameter's backprop-vs-finite-difference comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckEntry {
    pub name: String,
    pub offset: usize,
    pub backprop: f64,
    pub finite_diff: f64,
    pub rel_error: f64,
}

/// Checks backpropagated head gradients against central finite differences
/// on a fixed batch. Samples `count` parameters (seeded) among head
/// coordinates carrying non-negligible gradient.
pub fn head_gradient_check(
    model: &mut PadNet,
    manifest: &Manifest,
    count: usize,
    seed: u64,
) -> Result<Vec<GradCheckEntry>> {
    let batch: Vec<&SampleRecord> = manifest.samples.iter().take(8).collect();
    if batch.is_empty() {
        return Err(PadError::Domain("gradient check needs at least one sample".into()));
    }
    let (x, targets) = load_batch(&batch)?;

    // Backbone features are unaffected by head perturbations, so they are
    // computed once; the probe loss re-runs only the head.
    let probe = LayerCtx {
        train: true,
        update_running: false,
        cache: true,
    };
    let features = model.backbone.forward(&x, probe);

    model.zero_grads();
    let logits = model.head_forward(&features, probe);
    let (_, dlogits) = bce_with_logits(&logits, &targets);
    model.head_backward(&dlogits);

    // Candidate coordinates: |g| within 1e-3 of the largest head gradient.
    let mut candidates: Vec<(usize, usize, f64)> = Vec::new();
    let mut g_max = 0.0f64;
    for (li, p) in model.head_params().iter().enumerate() {
        for (off, &g) in p.grad.iter().enumerate() {
            g_max = g_max.max(g.abs());
            candidates.push((li, off, g));
        }
    }
    let floor = g_max * 1e-3;
    candidates.retain(|&(_, _, g)| g.abs() >= floor);
    if candidates.len() < count {
        return Err(PadError::Domain(format!(
            "only {} head coordinates carry usable gradient",
            candidates.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = Vec::with_capacity(count);
    let mut used = std::collections::BTreeSet::new();
    while picks.len() < count {
        let i = rng.gen_range(0..candidates.len());
        if used.insert(i) {
            picks.push(candidates[i]);
        }
    }

    let mut entries = Vec::with_capacity(count);
    for (li, off, backprop) in picks {
        let (name, orig) = {
            let params = model.head_params();
            let p = params[li];
            (p.name.clone(), *p.value.iter().nth(off).unwrap())
        };
        let h = 1e-6 * orig.abs().max(1.0);
        let mut loss_at = |value: f64| -> f64 {
            {
                let mut flat_index = 0;
                for layer in &mut model.head {
                    for p in [&mut layer.weight, &mut layer.bias] {
                        if flat_index == li {
                            *p.value.iter_mut().nth(off).unwrap() = value;
                        }
                        flat_index += 1;
                    }
                }
            }
            let logits = model.head_forward(&features, LayerCtx::loss_probe());
            bce_with_logits(&logits, &targets).0
        };
        let lp = loss_at(orig + h);
        let lm = loss_at(orig - h);
        loss_at(orig);
        let finite_diff = (lp - lm) / (2.0 * h);
        let rel_error =
            (backprop - finite_diff).abs() / backprop.abs().max(finite_diff.abs()).max(1e-12);
        entries.push(GradCheckEntry {
            name,
            offset: off,
            backprop,
            finite_diff,
            rel_error,
        });
    }
    model.clear_caches();
    Ok(entries)
}

/// Resolves the pretrained backbone checkpoint for model building: the
/// explicit path wins, else the `PADBENCH_CACHE` environment variable.
/// A missing checkpoint is a configuration error.
pub fn resolve_backbone(explicit: Option<&std::path::Path>) -> Result<Backbone> {
    let path = match explicit {
        Some(p) => p.to_path_buf(),
        None => match std::env::var_os("PADBENCH_CACHE") {
            Some(dir) => std::path::PathBuf::from(dir).join("backbone.padbench"),
            None => {
                return Err(PadError::Config(
                    "no backbone checkpoint: pass --backbone or set PADBENCH_CACHE".into(),
                ))
            }
        },
    };
    if !path.is_file() {
        return Err(PadError::Config(format!(
            "backbone checkpoint {} not found; generate one with `padbench backbone`",
            path.display()
        )));
    }
    load_backbone(&path)
}

/// Writes a synthetic stand-in pretrained checkpoint (seeded weights with
/// calibrated batch-norm statistics).
pub fn synthesize_backbone_checkpoint(
    path: &std::path::Path,
    config: &BackboneConfig,
) -> Result<()> {
    let backbone = Backbone::synthesize_pretrained(config)?;
    save_backbone(&backbone, path)
}
