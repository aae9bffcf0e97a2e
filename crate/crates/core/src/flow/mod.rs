//! Conditional generative flow: coupling layers, their composition, and the
//! likelihood / prior / prototype objectives.

mod coupling;
mod loss;
mod model;
mod serial;

pub use coupling::{split_dims, CouplingLayer, CouplingTrace, MAX_LOG_SCALE};
pub use loss::{
    log_prob, nll_loss, nll_loss_grad, prior_penalty, prior_penalty_grad, prototype_loss, prototype_loss_grad, FlowLoss,
};
pub use model::{FlowGradients, FlowModel, FlowTrace};
pub use serial::{CouplingJson, FlowJson, FLOW_FORMAT_VERSION};
