//! Conditional normalizing-flow feature generation for generalized zero-shot
//! learning.
//!
//! The numerical modules are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix the scalar to `f64`, which is what the
//! pipeline, the file formats and the CLI use.

pub mod augment;
pub mod data;
pub mod error;
pub mod flow;
pub mod gradcheck;
pub mod numcore;
pub mod pipeline;
pub mod rng;
pub mod semantics;
mod scalar;
pub mod serial;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix = numcore::Matrix<f64>;
pub type Mlp = numcore::Mlp<f64>;
pub type GradTape = numcore::GradTape<f64>;
pub type AdamState = numcore::AdamState<f64>;
pub type CouplingLayer = flow::CouplingLayer<f64>;
pub type FlowModel = flow::FlowModel<f64>;
pub type SemanticEmbedder = semantics::SemanticEmbedder<f64>;
pub type ContrastiveNet = augment::ContrastiveNet<f64>;
pub type Dataset = data::Dataset<f64>;
pub type TrainedModel = pipeline::TrainedModel<f64>;
pub type Classifier = pipeline::Classifier<f64>;
