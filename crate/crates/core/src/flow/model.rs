use rand::Rng;

use super::coupling::{CouplingLayer, CouplingTrace};
use crate::error::{Error, Result};
use crate::numcore::Matrix;
use crate::Scalar;

/// Composition of conditional affine coupling layers with a standard normal
/// prior on the latent space.
///
/// `forward` maps features to latents (`z = f(x; c)`); `generate` is the
/// exact inverse (`x = f⁻¹(z; c)`), applying the layers in reverse order.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowModel<T> {
    layers: Vec<CouplingLayer<T>>,
    d_v: usize,
    d_g: usize,
    hidden_dim: usize,
    s_cap: Option<T>,
}

/// Per-layer activations of one pass through a [`FlowModel`].
#[derive(Debug, Clone)]
pub struct FlowTrace<T> {
    layers: Vec<CouplingTrace<T>>,
    inverse: bool,
}

/// Gradients produced by a backward pass through the flow.
#[derive(Debug, Clone)]
pub struct FlowGradients<T> {
    /// Flat, in [`FlowModel::params`] order.
    pub params: Vec<T>,
    /// Gradient w.r.t. the pass input (x for forward, z for generate).
    pub input: Matrix<T>,
    /// Gradient w.r.t. the condition rows.
    pub condition: Matrix<T>,
}

fn tag_layer(i: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Divergence(msg) => Error::Divergence(format!("coupling layer {i}: {msg}")),
        other => other,
    }
}

impl<T: Scalar> FlowModel<T> {
    pub fn init<R: Rng>(d_v: usize, d_g: usize, n_layers: usize, hidden_dim: usize, s_cap: Option<T>, rng: &mut R) -> Result<Self> {
        Self::check_count(n_layers)?;
        let layers = (0..n_layers)
            .map(|_| CouplingLayer::init(d_v, d_g, hidden_dim, s_cap, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(FlowModel { layers, d_v, d_g, hidden_dim, s_cap })
    }

    /// Flow whose every internal net is zero: `f` is the identity.
    pub fn identity(d_v: usize, d_g: usize, n_layers: usize, hidden_dim: usize, s_cap: Option<T>) -> Result<Self> {
        Self::check_count(n_layers)?;
        let layers = (0..n_layers)
            .map(|_| CouplingLayer::identity(d_v, d_g, hidden_dim, s_cap))
            .collect::<Result<Vec<_>>>()?;
        Ok(FlowModel { layers, d_v, d_g, hidden_dim, s_cap })
    }

    pub fn from_layers(layers: Vec<CouplingLayer<T>>, hidden_dim: usize) -> Result<Self> {
        Self::check_count(layers.len())?;
        let (d_v, d_g, s_cap) = (layers[0].d_v(), layers[0].d_g(), layers[0].s_cap());
        if layers.iter().any(|l| l.d_v() != d_v || l.d_g() != d_g || l.s_cap() != s_cap) {
            return Err(Error::Config("coupling layers disagree on d_v, d_g or s_cap".into()));
        }
        Ok(FlowModel { layers, d_v, d_g, hidden_dim, s_cap })
    }

    fn check_count(n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::Config("a flow needs at least one coupling layer".into()));
        }
        Ok(())
    }

    pub fn layers(&self) -> &[CouplingLayer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [CouplingLayer<T>] {
        &mut self.layers
    }

    pub fn d_v(&self) -> usize {
        self.d_v
    }

    pub fn d_g(&self) -> usize {
        self.d_g
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn s_cap(&self) -> Option<T> {
        self.s_cap
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// `z = f(x; c)` and the summed per-row log-determinant.
    pub fn forward(&self, x: &Matrix<T>, c: &Matrix<T>) -> Result<(Matrix<T>, Vec<T>)> {
        let mut h = x.clone();
        let mut total = vec![T::zero(); x.rows()];
        for (i, layer) in self.layers.iter().enumerate() {
            let (v, ld) = layer.forward(&h, c).map_err(tag_layer(i))?;
            total.iter_mut().zip(ld).for_each(|(t, l)| *t += l);
            h = v;
        }
        Ok((h, total))
    }

    /// `x = f⁻¹(z; c)`.
    pub fn generate(&self, z: &Matrix<T>, c: &Matrix<T>) -> Result<Matrix<T>> {
        let mut h = z.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            h = layer.inverse(&h, c).map_err(tag_layer(i))?;
        }
        Ok(h)
    }

    pub fn forward_traced(&self, x: &Matrix<T>, c: &Matrix<T>) -> Result<(Matrix<T>, Vec<T>, FlowTrace<T>)> {
        let mut h = x.clone();
        let mut total = vec![T::zero(); x.rows()];
        let mut traces = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let (v, ld, tr) = layer.forward_traced(&h, c).map_err(tag_layer(i))?;
            total.iter_mut().zip(ld).for_each(|(t, l)| *t += l);
            traces.push(tr);
            h = v;
        }
        Ok((h, total, FlowTrace { layers: traces, inverse: false }))
    }

    pub fn generate_traced(&self, z: &Matrix<T>, c: &Matrix<T>) -> Result<(Matrix<T>, FlowTrace<T>)> {
        let mut h = z.clone();
        let mut traces = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let (u, tr) = layer.inverse_traced(&h, c).map_err(tag_layer(i))?;
            traces.push(tr);
            h = u;
        }
        // stored in layer order
        traces.reverse();
        Ok((h, FlowTrace { layers: traces, inverse: true }))
    }

    fn layer_offsets(&self) -> Vec<usize> {
        let mut offs = Vec::with_capacity(self.layers.len() + 1);
        let mut acc = 0;
        offs.push(0);
        for l in &self.layers {
            acc += l.num_params();
            offs.push(acc);
        }
        offs
    }

    fn check_trace(&self, trace: &FlowTrace<T>, inverse: bool) -> Result<()> {
        if trace.inverse != inverse || trace.layers.len() != self.layers.len() {
            return Err(Error::State("trace does not belong to this pass".into()));
        }
        Ok(())
    }

    /// Back-propagates ∂L/∂z and per-row ∂L/∂(total logdet) through a
    /// forward trace. Every layer's logdet shares the same upstream.
    pub fn backward_forward(&self, trace: &mut FlowTrace<T>, grad_z: &Matrix<T>, grad_logdet: &[T]) -> Result<FlowGradients<T>> {
        self.check_trace(trace, false)?;
        let offs = self.layer_offsets();
        let mut params = vec![T::zero(); offs[self.layers.len()]];
        let mut g = grad_z.clone();
        let mut gc = Matrix::zeros(grad_z.rows(), self.d_g);
        for (i, (layer, tr)) in self.layers.iter().zip(trace.layers.iter_mut()).enumerate().rev() {
            let (gu, gci) = layer.backward_forward(tr, &g, grad_logdet)?;
            tr.add_param_grads_into(&mut params[offs[i]..offs[i + 1]]);
            gc.add_assign(&gci);
            g = gu;
        }
        Ok(FlowGradients { params, input: g, condition: gc })
    }

    /// Back-propagates ∂L/∂x through a generate trace.
    pub fn backward_generate(&self, trace: &mut FlowTrace<T>, grad_x: &Matrix<T>) -> Result<FlowGradients<T>> {
        self.check_trace(trace, true)?;
        let offs = self.layer_offsets();
        let mut params = vec![T::zero(); offs[self.layers.len()]];
        let mut g = grad_x.clone();
        let mut gc = Matrix::zeros(grad_x.rows(), self.d_g);
        for (i, (layer, tr)) in self.layers.iter().zip(trace.layers.iter_mut()).enumerate() {
            let (gv, gci) = layer.backward_inverse(tr, &g)?;
            tr.add_param_grads_into(&mut params[offs[i]..offs[i + 1]]);
            gc.add_assign(&gci);
            g = gv;
        }
        Ok(FlowGradients { params, input: g, condition: gc })
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(CouplingLayer::num_params).sum()
    }

    pub fn params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            l.extend_params(&mut out);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Config(format!(
                "flow has {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let mut off = 0;
        for l in &mut self.layers {
            off += l.set_params(&flat[off..])?;
        }
        Ok(())
    }

    pub fn sum_squared_params(&self) -> T {
        self.layers.iter().map(CouplingLayer::sum_squared_params).sum()
    }
}
