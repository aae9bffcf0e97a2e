use serde::{Deserialize, Serialize};

use super::model::{FlowGradients, FlowModel};
use crate::error::{Error, Result};
use crate::numcore::Matrix;
use crate::Scalar;

/// Terms of the flow objective for one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowLoss {
    pub nll: f64,
    pub prior_penalty: f64,
    pub proto: f64,
    pub total: f64,
}

impl FlowLoss {
    pub fn combine(nll: f64, prior_penalty: f64, proto: f64, lambda_proto: f64) -> Self {
        FlowLoss { nll, prior_penalty, proto, total: nll + prior_penalty + lambda_proto * proto }
    }
}

fn half_log_two_pi<T: Scalar>() -> T {
    T::lit(0.5 * (2.0 * std::f64::consts::PI).ln())
}

/// Per-row `log p_X(x | c) = log N(f(x; c); 0, I) + log|det ∂f/∂x|`.
pub fn log_prob<T: Scalar>(model: &FlowModel<T>, x: &Matrix<T>, c: &Matrix<T>) -> Result<Vec<T>> {
    let (z, logdet) = model.forward(x, c)?;
    let d = T::lit(z.cols() as f64);
    Ok(z.iter_rows()
        .zip(logdet)
        .map(|(zr, ld)| {
            let sq: T = zr.iter().map(|&v| v * v).sum();
            -T::lit(0.5) * sq - d * half_log_two_pi::<T>() + ld
        })
        .collect())
}

fn check_finite<T: Scalar>(v: T, what: &str) -> Result<T> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Divergence(format!("{what} is not finite")))
    }
}

/// Mean negative log-likelihood over the batch.
pub fn nll_loss<T: Scalar>(model: &FlowModel<T>, x: &Matrix<T>, c: &Matrix<T>) -> Result<T> {
    if x.rows() == 0 {
        return Err(Error::input("negative log-likelihood of an empty batch"));
    }
    let lp = log_prob(model, x, c)?;
    let n = T::lit(lp.len() as f64);
    check_finite(-lp.into_iter().sum::<T>() / n, "negative log-likelihood")
}

/// [`nll_loss`] together with its gradients.
pub fn nll_loss_grad<T: Scalar>(model: &FlowModel<T>, x: &Matrix<T>, c: &Matrix<T>) -> Result<(T, FlowGradients<T>)> {
    if x.rows() == 0 {
        return Err(Error::input("negative log-likelihood of an empty batch"));
    }
    let (z, logdet, mut trace) = model.forward_traced(x, c)?;
    let n = T::lit(x.rows() as f64);
    let d = T::lit(z.cols() as f64);
    let mut total = T::zero();
    for (zr, &ld) in z.iter_rows().zip(&logdet) {
        let sq: T = zr.iter().map(|&v| v * v).sum();
        total += T::lit(0.5) * sq + d * half_log_two_pi::<T>() - ld;
    }
    let loss = check_finite(total / n, "negative log-likelihood")?;
    let grad_z = z.map(|v| v / n);
    let grad_ld = vec![-T::one() / n; x.rows()];
    let grads = model.backward_forward(&mut trace, &grad_z, &grad_ld)?;
    Ok((loss, grads))
}

/// Gaussian prior on the parameters, as a penalty: `wd · ½ Σ θ²`.
pub fn prior_penalty<T: Scalar>(model: &FlowModel<T>, weight_decay: T) -> T {
    weight_decay * T::lit(0.5) * model.sum_squared_params()
}

/// Gradient of [`prior_penalty`]: `wd · θ`.
pub fn prior_penalty_grad<T: Scalar>(model: &FlowModel<T>, weight_decay: T) -> Vec<T> {
    model.params().into_iter().map(|p| weight_decay * p).collect()
}

fn check_proto_shapes<T: Scalar>(model: &FlowModel<T>, prototypes: &Matrix<T>, conditions: &Matrix<T>) -> Result<()> {
    if prototypes.rows() != conditions.rows() {
        return Err(Error::Config(format!(
            "{} prototypes but {} condition rows",
            prototypes.rows(),
            conditions.rows()
        )));
    }
    if prototypes.cols() != model.d_v() {
        return Err(Error::Config("prototype width differs from d_v".into()));
    }
    if prototypes.rows() == 0 {
        return Err(Error::input("prototype loss over zero classes"));
    }
    Ok(())
}

/// `(1/C) Σ_c ‖f⁻¹(0; c) − prototype_c‖²`.
pub fn prototype_loss<T: Scalar>(model: &FlowModel<T>, prototypes: &Matrix<T>, conditions: &Matrix<T>) -> Result<T> {
    check_proto_shapes(model, prototypes, conditions)?;
    let z = Matrix::zeros(prototypes.rows(), model.d_v());
    let x = model.generate(&z, conditions)?;
    let sq = x.zip_map(prototypes, |a, b| a - b).sum_squares();
    Ok(sq / T::lit(prototypes.rows() as f64))
}

pub fn prototype_loss_grad<T: Scalar>(
    model: &FlowModel<T>,
    prototypes: &Matrix<T>,
    conditions: &Matrix<T>,
) -> Result<(T, FlowGradients<T>)> {
    check_proto_shapes(model, prototypes, conditions)?;
    let n = T::lit(prototypes.rows() as f64);
    let z = Matrix::zeros(prototypes.rows(), model.d_v());
    let (x, mut trace) = model.generate_traced(&z, conditions)?;
    let diff = x.zip_map(prototypes, |a, b| a - b);
    let loss = check_finite(diff.sum_squares() / n, "prototype loss")?;
    let two_over_n = T::lit(2.0) / n;
    let grads = model.backward_generate(&mut trace, &diff.map(|d| d * two_over_n))?;
    Ok((loss, grads))
}
