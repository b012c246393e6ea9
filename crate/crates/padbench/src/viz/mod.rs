//! Embedding visualization: a trained two-neuron embedding, t-SNE and PCA
//! projections, and scatter-plot rendering.

mod pca;
mod plot;
mod tsne;

pub use pca::pca_project;
pub use plot::scatter_plot;
pub use tsne::{
    knn_label_purity, tsne_project, tsne_project_with_iters, DEFAULT_ITERATIONS,
    DEFAULT_PERPLEXITY,
};

use ndarray::{Array2, Array4, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Manifest, SampleRecord};
use crate::error::{PadError, Result};
use crate::metrics::GroundTruth;
use crate::model::preprocess;
use crate::nn::backbone::{Backbone, FEATURE_DIM};
use crate::nn::layers::Linear;
use crate::nn::loss::softmax_cross_entropy;
use crate::nn::optim::Optimizer;
use crate::nn::LayerCtx;

/// One projected sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingPoint {
    pub sample_id: String,
    pub coords: [f64; 2],
    pub label: String,
}

/// Pooled backbone features for each sample, in order.
pub fn extract_features(backbone: &mut Backbone, samples: &[&SampleRecord]) -> Result<Array2<f64>> {
    let hw = preprocess::INPUT_HW;
    let mut features = Array2::zeros((samples.len(), FEATURE_DIM));
    for (chunk_start, chunk) in samples.chunks(8).enumerate().map(|(i, c)| (i * 8, c)) {
        let mut x = Array4::zeros((chunk.len(), 3, hw, hw));
        for (i, sample) in chunk.iter().enumerate() {
            x.index_axis_mut(Axis(0), i)
                .assign(&preprocess::load_and_preprocess(&sample.path)?);
        }
        let pooled = backbone.forward(&x, LayerCtx::INFERENCE);
        features
            .slice_mut(ndarray::s![chunk_start..chunk_start + chunk.len(), ..])
            .assign(&pooled);
    }
    Ok(features)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedderConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig {
            epochs: 60,
            learning_rate: 1e-3,
            batch_size: 32,
            seed: 0,
        }
    }
}

/// A frozen backbone plus a trained two-unit embedding layer.
pub struct Embedder {
    embedding: Linear,
}

impl Embedder {
    /// 2-D coordinates for pooled feature rows.
    pub fn embed(&mut self, features: &Array2<f64>) -> Vec<[f64; 2]> {
        let out = self.embedding.forward(features, LayerCtx::INFERENCE);
        out.axis_iter(Axis(0)).map(|row| [row[0], row[1]]).collect()
    }
}

/// Trains the two-neuron embedding on bona-fide samples, targeting subject
/// identity through a temporary classification layer that is discarded
/// afterwards. The backbone stays fully frozen. Returns the embedder and
/// one point per bona-fide sample, labeled by subject.
pub fn build_embedder(
    backbone: &mut Backbone,
    manifest: &Manifest,
    config: &EmbedderConfig,
) -> Result<(Embedder, Vec<EmbeddingPoint>)> {
    let samples: Vec<&SampleRecord> = manifest
        .samples
        .iter()
        .filter(|s| s.label == GroundTruth::BonaFide && s.subject_id.is_some())
        .collect();
    let subjects = {
        let mut ids: Vec<String> = samples
            .iter()
            .filter_map(|s| s.subject_id.clone())
            .collect();
        ids.sort();
        ids.dedup();
        ids
    };
    if subjects.len() < 2 {
        return Err(PadError::Domain(format!(
            "embedding training needs at least 2 subject classes, found {}",
            subjects.len()
        )));
    }

    backbone.set_trainable_from(crate::nn::backbone::CONV_LAYERS + 1);
    let features = extract_features(backbone, &samples)?;
    let targets: Vec<usize> = samples
        .iter()
        .map(|s| {
            subjects
                .iter()
                .position(|id| Some(id) == s.subject_id.as_ref())
                .expect("subject list covers every sample")
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xe3bed);
    let mut embedding = Linear::new("embed.dense1", &mut rng, FEATURE_DIM, 2);
    let mut classifier = Linear::new("embed.classifier", &mut rng, 2, subjects.len());
    let mut optimizer = Optimizer::adam(config.learning_rate);

    let n = samples.len();
    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x0bde5);
    for _epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut order_rng);
        for chunk in order.chunks(config.batch_size) {
            let mut x = Array2::zeros((chunk.len(), FEATURE_DIM));
            let mut t = Vec::with_capacity(chunk.len());
            for (row, &i) in chunk.iter().enumerate() {
                x.row_mut(row).assign(&features.row(i));
                t.push(targets[i]);
            }
            embedding.weight.zero_grad();
            embedding.bias.zero_grad();
            classifier.weight.zero_grad();
            classifier.bias.zero_grad();

            let ctx = LayerCtx::training();
            let embedded = embedding.forward(&x, ctx);
            let logits = classifier.forward(&embedded, ctx);
            let (_, dlogits) = softmax_cross_entropy(&logits, &t);
            let d_embedded = classifier
                .backward(&dlogits, true)
                .expect("classifier propagates");
            embedding.backward(&d_embedded, false);

            optimizer.step(&mut [
                &mut embedding.weight,
                &mut embedding.bias,
                &mut classifier.weight,
                &mut classifier.bias,
            ]);
        }
    }
    embedding.clear_cache();

    // The temporary classifier is dropped here; only the embedding remains.
    let mut embedder = Embedder { embedding };
    let coords = embedder.embed(&features);
    let points = samples
        .iter()
        .zip(coords)
        .map(|(sample, coords)| EmbeddingPoint {
            sample_id: sample.path.display().to_string(),
            coords,
            label: sample
                .subject_id
                .clone()
                .expect("bona-fide samples carry subjects"),
        })
        .collect();
    Ok((embedder, points))
}
