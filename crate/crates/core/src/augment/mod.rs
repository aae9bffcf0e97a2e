//! Visual-space enrichment: entropy-maximizing boundary mining against a
//! frozen contrastive network, and masked Gaussian perturbation.

mod contrastive;
mod mining;
mod perturb;

pub use contrastive::{
    contrastive_loss, prediction_entropy, shannon_entropy, train_contrastive, ContrastiveConfig, ContrastiveJson,
    ContrastiveNet, SCORE_EPS,
};
pub use mining::{mine_batch, mine_boundary, MiningConfig, SignMode};
pub use perturb::{perturb, perturb_rows, PerturbConfig};

#[cfg(test)]
mod tests;
