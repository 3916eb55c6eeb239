//! Textless spoken question answering on discrete speech units.
//!
//! The pipeline: frame-level features are quantized to discrete units by a
//! k-means codebook, repeated units are merged into dense sequences, and a
//! sparse-attention span model predicts answer positions that convert back
//! to time intervals. Evaluation (FF1/AOS/WER), a simulated ASR+QA cascade
//! baseline, and synthetic dataset tooling round out the toolkit.

pub mod cascade;
pub mod dataset;
pub mod error;
pub mod featio;
pub mod metrics;
pub mod model;
pub mod quantizer;
pub mod tensor;
pub mod trainer;
pub mod units;

pub use error::{Error, Result};
pub use featio::{Anchors, FeatureMatrix};
pub use model::{ModelConfig, ModelInput, ModelParams};
pub use quantizer::Codebook;
pub use units::{IndexSpan, TimeSpan, UnitSequence};
