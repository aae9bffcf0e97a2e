use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{Activation, AdamConfig, AdamState, GradTape, Matrix, Mlp};
use crate::rng::{self, streams};
use crate::serial::MlpJson;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig { epochs: 50, lr: 1e-3, batch_size: 64, weight_decay: 0.0 }
    }
}

/// Linear softmax classifier over every class id `0..num_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier<T> {
    pub net: Mlp<T>,
}

impl<T: Scalar> Classifier<T> {
    /// All-zero weights: every class starts equally likely.
    pub fn zeros(d_v: usize, num_classes: usize) -> Result<Self> {
        Ok(Classifier { net: Mlp::zeros(&[d_v, num_classes], &[Activation::Identity])? })
    }

    pub fn num_classes(&self) -> usize {
        self.net.output_dim()
    }

    pub fn logits(&self, xs: &Matrix<T>) -> Result<Matrix<T>> {
        self.net.forward(xs)
    }

    /// Arg-max class per row, optionally restricted to `allowed` class ids.
    /// Ties resolve to the lowest class id.
    pub fn predict(&self, xs: &Matrix<T>, allowed: Option<&[usize]>) -> Result<Vec<usize>> {
        let logits = self.logits(xs)?;
        let all: Vec<usize> = (0..self.num_classes()).collect();
        let mut candidates = allowed.map_or(all, <[usize]>::to_vec);
        candidates.sort_unstable();
        if candidates.is_empty() || candidates.iter().any(|&c| c >= self.num_classes()) {
            return Err(Error::Config("prediction candidates must be valid class ids".into()));
        }
        Ok(logits
            .iter_rows()
            .map(|row| {
                let mut best = candidates[0];
                for &c in &candidates[1..] {
                    if row[c] > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect())
    }

    /// Mean softmax cross-entropy and its gradient (flat parameter order).
    pub fn loss_and_grad(&self, xs: &Matrix<T>, labels: &[usize]) -> Result<(T, Vec<T>)> {
        if labels.len() != xs.rows() || labels.iter().any(|&l| l >= self.num_classes()) {
            return Err(Error::Config("classifier labels do not match the batch".into()));
        }
        let mut tape = GradTape::new(&self.net);
        let logits = self.net.forward_taped(xs, &mut tape)?;
        let n = T::lit(xs.rows() as f64);
        let mut loss = T::zero();
        let mut upstream = Matrix::zeros(logits.rows(), logits.cols());
        for (r, row) in logits.iter_rows().enumerate() {
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let sum: T = row.iter().map(|&v| (v - m).exp()).sum();
            let lse = m + sum.ln();
            loss += lse - row[labels[r]];
            for (k, g) in upstream.row_mut(r).iter_mut().enumerate() {
                let p = (row[k] - lse).exp();
                *g = (p - if k == labels[r] { T::one() } else { T::zero() }) / n;
            }
        }
        self.net.backward(&mut tape, &upstream)?;
        Ok((loss / n, tape.flat()))
    }

    pub fn to_json(&self) -> MlpJson {
        MlpJson::from_mlp(&self.net, false)
    }

    pub fn from_json(doc: &MlpJson) -> Result<Self> {
        Ok(Classifier { net: doc.to_mlp(&[Activation::Identity])? })
    }
}

/// Orders samples by label, then by feature bit patterns, so that training
/// does not depend on how the caller ordered its inputs.
fn canonical_order<T: Scalar>(xs: &Matrix<T>, labels: &[usize]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..xs.rows()).collect();
    idx.sort_by(|&a, &b| {
        labels[a].cmp(&labels[b]).then_with(|| {
            let ka = xs.row(a).iter().map(|v| v.as_f64().to_bits());
            let kb = xs.row(b).iter().map(|v| v.as_f64().to_bits());
            ka.cmp(kb)
        })
    });
    idx
}

/// Fits a classifier over `num_classes` classes on the given samples
/// (typically real seen features stacked with synthetic unseen ones).
/// Returns the classifier and the mean loss of each epoch.
pub fn train_classifier<T: Scalar>(
    xs: &Matrix<T>,
    labels: &[usize],
    num_classes: usize,
    cfg: &ClassifierConfig,
    seed: u64,
) -> Result<(Classifier<T>, Vec<f64>)> {
    if xs.rows() == 0 {
        return Err(Error::input("classifier training set is empty"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("classifier batch_size must be positive".into()));
    }
    let canon = canonical_order(xs, labels);
    let xs = xs.select_rows(&canon);
    let labels: Vec<usize> = canon.iter().map(|&i| labels[i]).collect();

    let mut clf = Classifier::zeros(xs.cols(), num_classes)?;
    let mut params = clf.net.params();
    let mut adam = AdamState::new(params.len(), AdamConfig::with_lr(cfg.lr));
    let mut r = rng::stream(seed, streams::INIT_CLASSIFIER);
    let wd = T::lit(cfg.weight_decay);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let order = rng::permutation(&mut r, xs.rows());
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let xb = xs.select_rows(chunk);
            let lb: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let (loss, mut grad) = clf.loss_and_grad(&xb, &lb)?;
            if !loss.is_finite() {
                return Err(Error::Divergence(format!("classifier loss non-finite in epoch {epoch}")));
            }
            for (g, &p) in grad.iter_mut().zip(&params) {
                *g += wd * p;
            }
            total += loss.as_f64() * chunk.len() as f64;
            adam.step(&mut params, &grad)?;
            clf.net.set_params(&params)?;
        }
        history.push(total / xs.rows() as f64);
    }
    Ok((clf, history))
}
