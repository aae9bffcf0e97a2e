use serde::{Deserialize, Serialize};

use super::classifier::ClassifierConfig;
use crate::augment::{ContrastiveConfig, MiningConfig, PerturbConfig, SignMode};
use crate::error::{Error, Result};

/// Boundary-mining schedule. The entropy weight lives on [`TrainConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiningSchedule {
    pub eta: f64,
    #[serde(rename = "K")]
    pub steps: usize,
    pub sign_mode: SignMode,
    pub cap_fraction: f64,
}

impl Default for MiningSchedule {
    fn default() -> Self {
        let m = MiningConfig::default();
        MiningSchedule { eta: m.eta, steps: m.steps, sign_mode: m.sign_mode, cap_fraction: m.cap_fraction }
    }
}

/// Everything that shapes one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    #[serde(rename = "L")]
    pub n_layers: usize,
    pub hidden_dim: usize,
    /// Width of the global semantic vectors. Ignored (the raw attribute
    /// width is used) when `relative_positioning` is off.
    pub d_g: usize,
    /// Bound on each coupling log-scale; `null` disables the clamp.
    pub s_cap: Option<f64>,
    pub relative_positioning: bool,
    pub lambda_ent: f64,
    pub lambda_perturb: f64,
    pub lambda_proto: f64,
    pub weight_decay: f64,
    /// `null` together with `lambda_ent = 0` skips boundary mining.
    pub mining: Option<MiningSchedule>,
    /// Probability that a feature dimension receives perturbation noise.
    pub p_drop: f64,
    pub n_syn_per_unseen: usize,
    pub seed: u64,
    pub contrastive: ContrastiveConfig,
    pub classifier: ClassifierConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            batch_size: 256,
            lr: 3e-4,
            n_layers: 3,
            hidden_dim: 64,
            d_g: 32,
            s_cap: Some(5.0),
            relative_positioning: true,
            lambda_ent: 1.0,
            lambda_perturb: 0.15,
            lambda_proto: 10.0,
            weight_decay: 1e-4,
            mining: Some(MiningSchedule::default()),
            p_drop: 1.0,
            n_syn_per_unseen: 300,
            seed: 0,
            contrastive: ContrastiveConfig::default(),
            classifier: ClassifierConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("L", self.n_layers),
            ("hidden_dim", self.hidden_dim),
            ("d_g", self.d_g),
            ("contrastive.hidden_dim", self.contrastive.hidden_dim),
            ("contrastive.batch_size", self.contrastive.batch_size),
            ("classifier.batch_size", self.classifier.batch_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        for (name, v) in [("lr", self.lr), ("contrastive.lr", self.contrastive.lr), ("classifier.lr", self.classifier.lr)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("lambda_ent", self.lambda_ent),
            ("lambda_proto", self.lambda_proto),
            ("weight_decay", self.weight_decay),
            ("classifier.weight_decay", self.classifier.weight_decay),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if let Some(cap) = self.s_cap {
            if !(cap > 0.0 && cap.is_finite()) {
                return Err(Error::Config(format!("s_cap must be positive, got {cap}")));
            }
        }
        self.perturb_config().validate()?;
        if let Some(m) = self.mining_config() {
            m.validate()?;
        }
        Ok(())
    }

    pub fn perturb_config(&self) -> PerturbConfig {
        PerturbConfig { lambda_perturb: self.lambda_perturb, p_drop: self.p_drop }
    }

    /// The mining configuration, or `None` when stage 1 is skipped.
    pub fn mining_config(&self) -> Option<MiningConfig> {
        if self.mining.is_none() && self.lambda_ent == 0.0 {
            return None;
        }
        let s = self.mining.unwrap_or_default();
        Some(MiningConfig {
            eta: s.eta,
            steps: s.steps,
            lambda_ent: self.lambda_ent,
            sign_mode: s.sign_mode,
            cap_fraction: s.cap_fraction,
        })
    }
}

/// Hyper-parameter values explored in the original sensitivity study, kept
/// for sweep tooling.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SweepRanges {
    pub lambda_ent: (f64, f64),
    pub lambda_perturb: &'static [f64],
    pub lambda_proto: &'static [f64],
    pub d_g: &'static [usize],
    #[serde(rename = "L")]
    pub n_layers: &'static [usize],
    #[serde(rename = "K")]
    pub mining_steps: &'static [usize],
}

pub const DEFAULT_SWEEPS: SweepRanges = SweepRanges {
    lambda_ent: (0.1, 20.0),
    lambda_perturb: &[0.02, 0.05, 0.15, 0.3, 0.5],
    lambda_proto: &[1.0, 3.0, 10.0, 20.0, 30.0],
    d_g: &[128, 256, 512, 1024, 2048],
    n_layers: &[1, 3, 5, 10, 20],
    mining_steps: &[20, 30],
};
