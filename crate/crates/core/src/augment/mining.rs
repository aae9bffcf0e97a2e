use serde::{Deserialize, Serialize};

use super::contrastive::ContrastiveNet;
use crate::error::{Error, Result};
use crate::numcore::Matrix;
use crate::Scalar;

/// How the boundary-mining update is signed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignMode {
    /// `x ← x − η ∇(L_con + λ H)`: descends the matching loss while raising
    /// entropy (H is a negative entropy).
    #[default]
    Intent,
    /// `x ← x + η ∇(L_con − λ H)`, the literal signed form.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MiningConfig {
    pub eta: f64,
    #[serde(rename = "K")]
    pub steps: usize,
    pub lambda_ent: f64,
    pub sign_mode: SignMode,
    /// Fraction of training samples that get a mined copy.
    pub cap_fraction: f64,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig { eta: 0.05, steps: 20, lambda_ent: 1.0, sign_mode: SignMode::Intent, cap_fraction: 1.0 }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) {
            return Err(Error::Config(format!("mining eta must be positive, got {}", self.eta)));
        }
        if self.steps == 0 {
            return Err(Error::Config("mining needs K ≥ 1 steps".into()));
        }
        if !(self.lambda_ent >= 0.0) {
            return Err(Error::Config(format!("lambda_ent must be non-negative, got {}", self.lambda_ent)));
        }
        if !(0.0..=1.0).contains(&self.cap_fraction) {
            return Err(Error::Config(format!("cap_fraction must lie in [0, 1], got {}", self.cap_fraction)));
        }
        Ok(())
    }
}

/// One update of every row of `xs`.
fn mining_step<T: Scalar>(
    cn: &ContrastiveNet<T>,
    xs: &Matrix<T>,
    targets: &[usize],
    seen_attributes: &Matrix<T>,
    cfg: &MiningConfig,
) -> Result<Matrix<T>> {
    let eta = T::lit(cfg.eta);
    let lambda = T::lit(cfg.lambda_ent);
    let (weight, sign) = match cfg.sign_mode {
        SignMode::Intent => (lambda, -T::one()),
        SignMode::Literal => (-lambda, T::one()),
    };
    let (_, grad) = cn.objective_input_grad(xs, targets, seen_attributes, weight)?;
    Ok(xs.zip_map(&grad, |x, g| x + sign * eta * g))
}

/// Runs K mining steps on a batch of samples with the network frozen.
pub fn mine_batch<T: Scalar>(
    cn: &ContrastiveNet<T>,
    xs: &Matrix<T>,
    targets: &[usize],
    seen_attributes: &Matrix<T>,
    cfg: &MiningConfig,
) -> Result<Matrix<T>> {
    cfg.validate()?;
    if targets.len() != xs.rows() || targets.iter().any(|&t| t >= seen_attributes.rows()) {
        return Err(Error::Config("mining targets do not match the samples".into()));
    }
    let mut cur = xs.clone();
    for step in 0..cfg.steps {
        cur = mining_step(cn, &cur, targets, seen_attributes, cfg)?;
        if !cur.all_finite() {
            return Err(Error::Mining { step, detail: "sample became non-finite".into() });
        }
    }
    Ok(cur)
}

/// Mines one boundary sample `x⁺` from `x`.
pub fn mine_boundary<T: Scalar>(
    cn: &ContrastiveNet<T>,
    x: &[T],
    true_class: usize,
    seen_attributes: &Matrix<T>,
    cfg: &MiningConfig,
) -> Result<Vec<T>> {
    Ok(mine_batch(cn, &Matrix::row_vector(x), &[true_class], seen_attributes, cfg)?.into_vec())
}
