//! Dense numerical kernel: matrices, small MLPs with analytic gradients, Adam.

mod adam;
mod matrix;
mod mlp;

pub use adam::{AdamConfig, AdamState};
pub use matrix::Matrix;
pub use mlp::{sigmoid, Activation, Dense, GradTape, Mlp, LEAKY_SLOPE};
