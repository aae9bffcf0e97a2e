use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::eval::{run_gzsl, EvalReport};
use crate::data::Dataset;
use crate::error::Result;
use crate::Scalar;

/// Component ablations. EM is boundary mining, VP is visual perturbation
/// together with the prototype loss, RP is relative positioning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "GSMFlow w/o constraints")]
    WithoutConstraints,
    #[serde(rename = "GSMFlow w/o EM&VP")]
    WithoutEmVp,
    #[serde(rename = "GSMFlow w/o EM&RP")]
    WithoutEmRp,
    #[serde(rename = "GSMFlow w/o EM")]
    WithoutEm,
    #[serde(rename = "GSMFlow w/o VP")]
    WithoutVp,
    #[serde(rename = "GSMFlow w/o RP")]
    WithoutRp,
    #[serde(rename = "GSMFlow")]
    Full,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::WithoutConstraints,
        Variant::WithoutEmVp,
        Variant::WithoutEmRp,
        Variant::WithoutEm,
        Variant::WithoutVp,
        Variant::WithoutRp,
        Variant::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::WithoutConstraints => "GSMFlow w/o constraints",
            Variant::WithoutEmVp => "GSMFlow w/o EM&VP",
            Variant::WithoutEmRp => "GSMFlow w/o EM&RP",
            Variant::WithoutEm => "GSMFlow w/o EM",
            Variant::WithoutVp => "GSMFlow w/o VP",
            Variant::WithoutRp => "GSMFlow w/o RP",
            Variant::Full => "GSMFlow",
        }
    }

    /// `(mining, perturbation + prototype loss, relative positioning)`.
    fn components(self) -> (bool, bool, bool) {
        match self {
            Variant::WithoutConstraints => (false, false, false),
            Variant::WithoutEmVp => (false, false, true),
            Variant::WithoutEmRp => (false, true, false),
            Variant::WithoutEm => (false, true, true),
            Variant::WithoutVp => (true, false, true),
            Variant::WithoutRp => (true, true, false),
            Variant::Full => (true, true, true),
        }
    }

    /// `base` with this variant's components switched off.
    pub fn apply(self, base: &TrainConfig) -> TrainConfig {
        let (em, vp, rp) = self.components();
        let mut cfg = base.clone();
        if !em {
            cfg.lambda_ent = 0.0;
            cfg.mining = None;
        }
        if !vp {
            cfg.lambda_perturb = 0.0;
            cfg.lambda_proto = 0.0;
        }
        if !rp {
            cfg.relative_positioning = false;
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationEntry {
    pub variant: Variant,
    pub report: EvalReport,
}

/// GZSL reports for every variant, in [`Variant::ALL`] order.
pub fn run_ablation<T: Scalar>(ds: &Dataset<T>, base: &TrainConfig) -> Result<Vec<AblationEntry>> {
    Variant::ALL
        .iter()
        .map(|&variant| Ok(AblationEntry { variant, report: run_gzsl(ds, &variant.apply(base))? }))
        .collect()
}
