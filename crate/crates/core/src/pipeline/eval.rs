use serde::{Deserialize, Serialize};

use super::classifier::{train_classifier, Classifier};
use super::config::TrainConfig;
use super::model::TrainedModel;
use super::train::{generate_unseen, train_gsmflow, TrainingLog};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// Test seen and unseen samples, arg-max over all classes.
    Gzsl,
    /// Test unseen samples only, arg-max over unseen classes (T1).
    Zsl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub class_id: usize,
    pub accuracy: f64,
}

/// Evaluation summary. Seen-side metrics are absent in ZSL mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub acc_seen: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub acc_unseen: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub harmonic_mean: Option<f64>,
    pub zsl_t1: f64,
    pub per_class: Vec<ClassAccuracy>,
    pub config_echo: TrainConfig,
    pub seed: u64,
}

/// Class-balanced top-1 accuracy: the fraction of correct predictions is
/// computed per class in `classes`, then averaged with equal weight.
pub fn per_class_accuracy(predictions: &[usize], labels: &[usize], classes: &[usize]) -> Result<(Vec<f64>, f64)> {
    if predictions.len() != labels.len() {
        return Err(Error::Config("predictions and labels differ in length".into()));
    }
    if classes.is_empty() {
        return Err(Error::input("accuracy over an empty class set"));
    }
    let mut per = Vec::with_capacity(classes.len());
    for &c in classes {
        let (mut hit, mut n) = (0usize, 0usize);
        for (&p, &l) in predictions.iter().zip(labels) {
            if l == c {
                n += 1;
                hit += usize::from(p == c);
            }
        }
        if n == 0 {
            return Err(Error::input(format!("class {c} has no test samples")));
        }
        per.push(hit as f64 / n as f64);
    }
    let mean = per.iter().sum::<f64>() / per.len() as f64;
    Ok((per, mean))
}

/// `2·s·u / (s + u)`, and 0 when both are 0.
pub fn harmonic_mean(acc_seen: f64, acc_unseen: f64) -> f64 {
    let denom = acc_seen + acc_unseen;
    if denom == 0.0 {
        0.0
    } else {
        2.0 * acc_seen * acc_unseen / denom
    }
}

fn evaluate_with<T: Scalar>(
    clf: &Classifier<T>,
    ds: &Dataset<T>,
    mode: EvalMode,
    gzsl_candidates: Option<&[usize]>,
    cfg: &TrainConfig,
) -> Result<EvalReport> {
    let (xu, lu) = ds.subset(&ds.split.test_unseen);
    let t1_pred = clf.predict(&xu, Some(&ds.unseen_classes))?;
    let (t1_per, zsl_t1) = per_class_accuracy(&t1_pred, &lu, &ds.unseen_classes)?;
    let mut report = EvalReport {
        acc_seen: None,
        acc_unseen: None,
        harmonic_mean: None,
        zsl_t1,
        per_class: Vec::new(),
        config_echo: cfg.clone(),
        seed: cfg.seed,
    };
    let table = |classes: &[usize], acc: &[f64]| {
        classes.iter().zip(acc).map(|(&class_id, &accuracy)| ClassAccuracy { class_id, accuracy }).collect::<Vec<_>>()
    };
    match mode {
        EvalMode::Zsl => report.per_class = table(&ds.unseen_classes, &t1_per),
        EvalMode::Gzsl => {
            let (xs, ls) = ds.subset(&ds.split.test_seen);
            let seen_pred = clf.predict(&xs, gzsl_candidates)?;
            let (seen_per, acc_s) = per_class_accuracy(&seen_pred, &ls, &ds.seen_classes)?;
            let unseen_pred = clf.predict(&xu, gzsl_candidates)?;
            let (unseen_per, acc_u) = per_class_accuracy(&unseen_pred, &lu, &ds.unseen_classes)?;
            report.acc_seen = Some(acc_s);
            report.acc_unseen = Some(acc_u);
            report.harmonic_mean = Some(harmonic_mean(acc_s, acc_u));
            report.per_class = table(&ds.seen_classes, &seen_per);
            report.per_class.extend(table(&ds.unseen_classes, &unseen_per));
        }
    }
    Ok(report)
}

/// Scores a classifier on the test splits of `ds`.
pub fn evaluate<T: Scalar>(clf: &Classifier<T>, ds: &Dataset<T>, mode: EvalMode, cfg: &TrainConfig) -> Result<EvalReport> {
    evaluate_with(clf, ds, mode, None, cfg)
}

/// Everything one end-to-end run produces.
#[derive(Debug, Clone)]
pub struct PipelineRun<T> {
    pub model: TrainedModel<T>,
    pub log: TrainingLog,
    pub classifier: Classifier<T>,
    pub classifier_loss: Vec<f64>,
    pub report: EvalReport,
}

/// Train the generator, synthesize unseen features, train the classifier on
/// real seen plus synthetic unseen features, and evaluate.
pub fn run_pipeline<T: Scalar>(ds: &Dataset<T>, cfg: &TrainConfig, mode: EvalMode) -> Result<PipelineRun<T>> {
    let (model, log) = train_gsmflow(ds, cfg)?;
    let (syn_x, syn_y) =
        generate_unseen(&model, &ds.unseen_attributes(), &ds.unseen_classes, cfg.n_syn_per_unseen, cfg.seed)?;
    let (real_x, mut labels) = ds.subset(&ds.split.train_seen);
    let xs = real_x.vcat(&syn_x)?;
    labels.extend(syn_y);
    let (classifier, classifier_loss) = train_classifier(&xs, &labels, ds.num_classes(), &cfg.classifier, cfg.seed)?;
    let report = evaluate(&classifier, ds, mode, cfg)?;
    Ok(PipelineRun { model, log, classifier, classifier_loss, report })
}

pub fn run_gzsl<T: Scalar>(ds: &Dataset<T>, cfg: &TrainConfig) -> Result<EvalReport> {
    Ok(run_pipeline(ds, cfg, EvalMode::Gzsl)?.report)
}

pub fn run_zsl<T: Scalar>(ds: &Dataset<T>, cfg: &TrainConfig) -> Result<EvalReport> {
    Ok(run_pipeline(ds, cfg, EvalMode::Zsl)?.report)
}

/// Reference point without any generation: a classifier trained on real seen
/// features only, which can therefore only ever predict seen classes.
pub fn run_seen_only_baseline<T: Scalar>(ds: &Dataset<T>, cfg: &TrainConfig) -> Result<EvalReport> {
    let (xs, labels) = ds.subset(&ds.split.train_seen);
    let (clf, _) = train_classifier(&xs, &labels, ds.num_classes(), &cfg.classifier, cfg.seed)?;
    evaluate_with(&clf, ds, EvalMode::Gzsl, Some(&ds.seen_classes), cfg)
}
