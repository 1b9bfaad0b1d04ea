//! Open-vocabulary music tag harvesting from listener comments.
//!
//! The core is generic over the scalar type ([`num::Real`], implemented for
//! `f32` and `f64`); the aliases below fix it to `f64`.

pub mod classifier;
pub mod cli;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod fingerprint;
pub mod metrics;
pub mod num;
pub mod pipeline;
pub mod rng;
pub mod scoring;

pub use error::{DivaError, Result};

pub type Embeddings = embedding::EmbeddingTable<f64>;
pub type Classifier = classifier::BinaryClassifier<f64>;
pub type DocVectors = classifier::DocVectors<f64>;
pub type JointScore = scoring::JointScoreBreakdown<f64>;
pub type RunOutput = pipeline::RunOutput<f64>;
pub type MlcModel = pipeline::MlcModel<f64>;
