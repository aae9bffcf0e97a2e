//! Training, generation, classification and evaluation.
//!
//! [`train_gsmflow`] runs the two training stages (boundary mining, then
//! flow fitting), [`generate_unseen`] samples features for unseen classes,
//! [`train_classifier`] fits the softmax classifier on real seen plus
//! synthetic unseen features, and [`run_gzsl`] / [`run_zsl`] chain all of it
//! into an [`EvalReport`].

mod ablation;
mod classifier;
mod config;
mod eval;
mod model;
mod train;

pub use ablation::{run_ablation, AblationEntry, Variant};
pub use classifier::{train_classifier, Classifier, ClassifierConfig};
pub use config::{MiningSchedule, SweepRanges, TrainConfig, DEFAULT_SWEEPS};
pub use eval::{
    evaluate, harmonic_mean, per_class_accuracy, run_gzsl, run_pipeline, run_seen_only_baseline, run_zsl, ClassAccuracy,
    EvalMode, EvalReport, PipelineRun,
};
pub use model::{ModelJson, TrainedModel, MODEL_FORMAT_VERSION};
pub use train::{generate_unseen, train_gsmflow, EpochLog, MiningLog, TrainingLog};

#[cfg(test)]
mod tests;
