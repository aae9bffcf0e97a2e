use serde::{Deserialize, Serialize};

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::numcore::Matrix;
use crate::rng::{self, streams};
use crate::Scalar;

/// Parameters of the synthetic benchmark.
///
/// Class attributes are `a_c ~ U(0, attr_scale)^{d_a}`; a shared random
/// linear map `W` (entries `N(0, 1/d_a)`) gives class means
/// `μ_c = W a_c + map_noise · ξ_c`; samples are `N(μ_c, within_class_std² I)`.
/// Classes `0..C_s` are seen, the remaining `C_u` unseen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    #[serde(rename = "C_s")]
    pub num_seen: usize,
    #[serde(rename = "C_u")]
    pub num_unseen: usize,
    pub d_v: usize,
    pub d_a: usize,
    pub samples_per_class: usize,
    #[serde(default = "defaults::attr_scale")]
    pub attr_scale: f64,
    #[serde(default = "defaults::map_noise")]
    pub map_noise: f64,
    #[serde(default = "defaults::within_class_std")]
    pub within_class_std: f64,
    #[serde(default)]
    pub seed: u64,
}

mod defaults {
    pub fn attr_scale() -> f64 {
        1.0
    }
    pub fn map_noise() -> f64 {
        0.05
    }
    pub fn within_class_std() -> f64 {
        0.1
    }
}

impl Default for SynthConfig {
    /// The desk-scale benchmark: 10 seen and 5 unseen classes, 32-d features,
    /// 16-d attributes, 100 samples per class.
    fn default() -> Self {
        SynthConfig {
            num_seen: 10,
            num_unseen: 5,
            d_v: 32,
            d_a: 16,
            samples_per_class: 100,
            attr_scale: defaults::attr_scale(),
            map_noise: defaults::map_noise(),
            within_class_std: defaults::within_class_std(),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_seen < 3 {
            return Err(Error::Config(format!("C_s must be at least 3, got {}", self.num_seen)));
        }
        for (name, v) in [("C_u", self.num_unseen), ("d_v", self.d_v), ("d_a", self.d_a), ("samples_per_class", self.samples_per_class)] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        for (name, v) in [("attr_scale", self.attr_scale), ("map_noise", self.map_noise), ("within_class_std", self.within_class_std)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if !(self.attr_scale > 0.0) {
            return Err(Error::Config("attr_scale must be positive".into()));
        }
        Ok(())
    }

    /// Number of training samples drawn from each seen class (80 %, at least one).
    pub fn train_per_class(&self) -> usize {
        ((self.samples_per_class as f64 * 0.8).round() as usize).clamp(1, self.samples_per_class)
    }
}

/// Deterministic in `cfg.seed`.
pub fn generate_synthetic<T: Scalar>(cfg: &SynthConfig) -> Result<Dataset<T>> {
    cfg.validate()?;
    let mut r = rng::stream(cfg.seed, streams::SYNTH);
    let c = cfg.num_seen + cfg.num_unseen;
    let attributes: Matrix<T> = Matrix::from_fn(c, cfg.d_a, |_, _| rng::uniform(&mut r, 0.0, cfg.attr_scale));
    let w_scale = T::lit(1.0 / (cfg.d_a as f64).sqrt());
    let w: Matrix<T> = Matrix::from_fn(cfg.d_v, cfg.d_a, |_, _| rng::normal::<T, _>(&mut r) * w_scale);
    let mut means = attributes.matmul_t(&w)?;
    let noise = T::lit(cfg.map_noise);
    for v in means.as_mut_slice() {
        *v += noise * rng::normal::<T, _>(&mut r);
    }

    let n = c * cfg.samples_per_class;
    let std = T::lit(cfg.within_class_std);
    let mut features = Matrix::zeros(n, cfg.d_v);
    let mut labels = Vec::with_capacity(n);
    let mut split = Split::default();
    let n_train = cfg.train_per_class();
    for class in 0..c {
        for j in 0..cfg.samples_per_class {
            let i = labels.len();
            for (k, f) in features.row_mut(i).iter_mut().enumerate() {
                *f = means.get(class, k) + std * rng::normal::<T, _>(&mut r);
            }
            labels.push(class);
            if class >= cfg.num_seen {
                split.test_unseen.push(i);
            } else if j < n_train {
                split.train_seen.push(i);
            } else {
                split.test_seen.push(i);
            }
        }
    }
    Dataset::new(
        features,
        labels,
        attributes,
        (0..cfg.num_seen).collect(),
        (cfg.num_seen..c).collect(),
        split,
    )
}
