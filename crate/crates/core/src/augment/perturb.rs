use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Matrix;
use crate::rng;
use crate::Scalar;

/// Gaussian visual perturbation `x_vir = x + λ (e ⊙ m)`, `e ~ N(0, I)`,
/// `m_j ~ Bernoulli(p_drop)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbConfig {
    pub lambda_perturb: f64,
    /// Probability of keeping the noise in each dimension.
    pub p_drop: f64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        PerturbConfig { lambda_perturb: 0.15, p_drop: 1.0 }
    }
}

impl PerturbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_perturb >= 0.0) {
            return Err(Error::Config(format!("lambda_perturb must be non-negative, got {}", self.lambda_perturb)));
        }
        if !(0.0..=1.0).contains(&self.p_drop) {
            return Err(Error::Config(format!("p_drop must lie in [0, 1], got {}", self.p_drop)));
        }
        Ok(())
    }
}

pub fn perturb<T: Scalar, R: Rng + ?Sized>(x: &[T], cfg: &PerturbConfig, rng: &mut R) -> Vec<T> {
    let lambda = T::lit(cfg.lambda_perturb);
    x.iter()
        .map(|&v| {
            let e: T = rng::normal(rng);
            let keep = rng.random_bool(cfg.p_drop);
            if keep {
                v + lambda * e
            } else {
                v
            }
        })
        .collect()
}

pub fn perturb_rows<T: Scalar, R: Rng + ?Sized>(xs: &Matrix<T>, cfg: &PerturbConfig, rng: &mut R) -> Matrix<T> {
    let data = perturb(xs.as_slice(), cfg, rng);
    Matrix::from_vec(xs.rows(), xs.cols(), data).expect("same shape")
}
