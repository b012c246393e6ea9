//! Ear presentation-attack-detection (PAD) benchmark toolkit.
//!
//! The crate is organized around five subsystems:
//!
//! - [`metrics`] — ISO/IEC 30107-3 error rates (APCER, BPCER, HTER) with
//!   per-PAIS breakdown, computed from thresholded attack-likelihood scores.
//! - [`dataset`] — manifest construction, validation, and splitting for
//!   bona-fide / attack image collections following the WUT-Ear naming
//!   taxonomy, plus a deterministic synthetic-fixture generator.
//! - [`model`] — PADNet transfer-learning variants: a MobileNetV2-style
//!   convolutional backbone with configurable frozen-layer plans and a dense
//!   head, trained to score presentations as bona fide or attack.
//! - [`viz`] — two-neuron embedding, t-SNE and PCA projections, and scatter
//!   plot rendering.
//! - [`report`] — table rendering in error-rate or accuracy presentation and
//!   the APCER/HTER cross-consistency audit.
//!
//! The `padbench` binary exposes all of it as subcommands; see the README.

pub mod dataset;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod report;
pub mod viz;

pub use error::{PadError, Result};
