//! JSON encodings shared by every serialized network.
//!
//! Values are widened to `f64` and written with the shortest decimal that
//! parses back to the same bits, so `f64` parameters round-trip exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{Activation, Dense, Matrix, Mlp};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpJson {
    /// Per layer, `out × in` nested rows.
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activations: Option<Vec<Activation>>,
}

pub fn matrix_to_rows<T: Scalar>(m: &Matrix<T>) -> Vec<Vec<f64>> {
    m.iter_rows().map(|r| r.iter().map(|v| v.as_f64()).collect()).collect()
}

pub fn rows_to_matrix<T: Scalar>(rows: &[Vec<f64>], cols_if_empty: usize) -> Result<Matrix<T>> {
    if rows.is_empty() {
        return Ok(Matrix::zeros(0, cols_if_empty));
    }
    let cols = rows[0].len();
    let mut data = Vec::with_capacity(rows.len() * cols);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != cols {
            return Err(Error::Format(format!("row {i} has {} entries, expected {cols}", r.len())));
        }
        data.extend(r.iter().map(|&v| T::lit(v)));
    }
    Matrix::from_vec_finite(rows.len(), cols, data)
}

impl MlpJson {
    pub fn from_mlp<T: Scalar>(net: &Mlp<T>, with_activations: bool) -> Self {
        MlpJson {
            weights: net.layers().iter().map(|l| matrix_to_rows(&l.weight)).collect(),
            biases: net.layers().iter().map(|l| l.bias.iter().map(|v| v.as_f64()).collect()).collect(),
            activations: with_activations.then(|| net.layers().iter().map(|l| l.activation).collect()),
        }
    }

    /// Rebuilds the network. `default_activations` is used when the document
    /// does not carry its own.
    pub fn to_mlp<T: Scalar>(&self, default_activations: &[Activation]) -> Result<Mlp<T>> {
        let acts = self.activations.as_deref().unwrap_or(default_activations);
        if acts.len() != self.weights.len() || self.biases.len() != self.weights.len() {
            return Err(Error::Format(format!(
                "network has {} weight matrices, {} bias vectors and {} activations",
                self.weights.len(),
                self.biases.len(),
                acts.len()
            )));
        }
        let layers = self
            .weights
            .iter()
            .zip(&self.biases)
            .zip(acts)
            .map(|((w, b), &activation)| {
                Ok(Dense { weight: rows_to_matrix(w, 0)?, bias: b.iter().map(|&v| T::lit(v)).collect(), activation })
            })
            .collect::<Result<Vec<_>>>()?;
        Mlp::new(layers).map_err(|e| Error::Format(e.to_string()))
    }
}
