use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};
use crate::Scalar;

pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// LeakyReLU with slope [`LEAKY_SLOPE`] on the negative side.
    LeakyRelu,
    Relu,
    Identity,
    Sigmoid,
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::LeakyRelu => {
                if x > T::zero() {
                    x
                } else {
                    x * T::lit(LEAKY_SLOPE)
                }
            }
            Activation::Relu => x.max(T::zero()),
            Activation::Identity => x,
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed in terms of the pre-activation and the output.
    #[inline]
    fn derivative<T: Scalar>(self, pre: T, out: T) -> T {
        match self {
            Activation::LeakyRelu => {
                if pre > T::zero() {
                    T::one()
                } else {
                    T::lit(LEAKY_SLOPE)
                }
            }
            Activation::Relu => {
                if pre > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Identity => T::one(),
            Activation::Sigmoid => out * (T::one() - out),
        }
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// One fully connected layer: `act(x · Wᵀ + b)` with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
    pub activation: Activation,
}

impl<T: Scalar> Dense<T> {
    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    fn num_params(&self) -> usize {
        self.weight.rows() * self.weight.cols() + self.bias.len()
    }
}

/// Small feed-forward network with analytic backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    layers: Vec<Dense<T>>,
}

#[derive(Debug, Clone)]
struct LayerCache<T> {
    input: Matrix<T>,
    pre: Matrix<T>,
    out: Matrix<T>,
}

/// Gradient buffers for one [`Mlp`], plus the activations recorded by the
/// most recent [`Mlp::forward_taped`].
///
/// Parameter gradients are overwritten by [`Mlp::backward`] unless the tape
/// was created with [`GradTape::accumulating`].
#[derive(Debug, Clone)]
pub struct GradTape<T> {
    pub weights: Vec<Matrix<T>>,
    pub biases: Vec<Vec<T>>,
    pub input: Matrix<T>,
    accumulate: bool,
    cache: Option<Vec<LayerCache<T>>>,
}

impl<T: Scalar> GradTape<T> {
    pub fn new(net: &Mlp<T>) -> Self {
        GradTape {
            weights: net.layers.iter().map(|l| Matrix::zeros(l.weight.rows(), l.weight.cols())).collect(),
            biases: net.layers.iter().map(|l| vec![T::zero(); l.bias.len()]).collect(),
            input: Matrix::zeros(0, net.input_dim()),
            accumulate: false,
            cache: None,
        }
    }

    /// A tape whose parameter gradients sum across successive backward calls.
    pub fn accumulating(net: &Mlp<T>) -> Self {
        GradTape { accumulate: true, ..Self::new(net) }
    }

    pub fn zero(&mut self) {
        for w in &mut self.weights {
            w.scale(T::zero());
        }
        for b in &mut self.biases {
            b.iter_mut().for_each(|v| *v = T::zero());
        }
        self.input = Matrix::zeros(0, self.input.cols());
    }

    pub fn has_forward(&self) -> bool {
        self.cache.is_some()
    }

    /// Parameter gradients flattened in [`Mlp::params`] order.
    pub fn flat(&self) -> Vec<T> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out
    }

    /// Adds the flattened parameter gradients into `out`.
    pub fn add_flat_into(&self, out: &mut [T]) {
        let mut off = 0;
        for (w, b) in self.weights.iter().zip(&self.biases) {
            for (o, &g) in out[off..].iter_mut().zip(w.as_slice().iter().chain(b)) {
                *o += g;
            }
            off += w.as_slice().len() + b.len();
        }
    }

    fn mirrors(&self, net: &Mlp<T>) -> bool {
        self.weights.len() == net.layers.len()
            && self.weights.iter().zip(&net.layers).all(|(g, l)| g.shape() == l.weight.shape())
    }
}

impl<T: Scalar> Mlp<T> {
    pub fn new(layers: Vec<Dense<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("mlp needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.output_dim() {
                return Err(Error::Config(format!(
                    "layer {i}: bias length {} but {} outputs",
                    l.bias.len(),
                    l.output_dim()
                )));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::Config(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].output_dim(),
                    i + 1,
                    pair[1].input_dim()
                )));
            }
        }
        Ok(Mlp { layers })
    }

    /// Network with layer widths `dims` (input first) and one activation per
    /// layer, every parameter drawn from `U(-1/√fan_in, 1/√fan_in)`.
    pub fn init<R: Rng + ?Sized>(dims: &[usize], activations: &[Activation], rng: &mut R) -> Result<Self> {
        Self::build(dims, activations, |fan_in| {
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            T::lit(rng.random_range(-bound..=bound))
        })
    }

    pub fn zeros(dims: &[usize], activations: &[Activation]) -> Result<Self> {
        Self::build(dims, activations, |_| T::zero())
    }

    fn build(dims: &[usize], activations: &[Activation], mut draw: impl FnMut(usize) -> T) -> Result<Self> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(Error::Config(format!(
                "{} layer widths need {} activations, got {}",
                dims.len(),
                dims.len().saturating_sub(1),
                activations.len()
            )));
        }
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(d, &activation)| {
                let (fan_in, fan_out) = (d[0], d[1]);
                let weight = Matrix::from_fn(fan_out, fan_in, |_, _| draw(fan_in));
                let bias = (0..fan_out).map(|_| draw(fan_in)).collect();
                Dense { weight, bias, activation }
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense<T>] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    fn check_input(&self, input: &Matrix<T>) -> Result<()> {
        if input.cols() != self.input_dim() {
            return Err(Error::Config(format!(
                "mlp expects {} input columns, got {}",
                self.input_dim(),
                input.cols()
            )));
        }
        Ok(())
    }

    fn layer_forward(layer: &Dense<T>, input: &Matrix<T>) -> Result<(Matrix<T>, Matrix<T>)> {
        let mut pre = input.matmul_t(&layer.weight)?;
        pre.add_row_broadcast(&layer.bias);
        let act = layer.activation;
        let out = pre.map(|v| act.apply(v));
        Ok((pre, out))
    }

    pub fn forward(&self, input: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(input)?;
        let mut x = input.clone();
        for layer in &self.layers {
            x = Self::layer_forward(layer, &x)?.1;
        }
        Ok(x)
    }

    /// Forward pass that records what [`Mlp::backward`] needs on `tape`.
    pub fn forward_taped(&self, input: &Matrix<T>, tape: &mut GradTape<T>) -> Result<Matrix<T>> {
        self.check_input(input)?;
        if !tape.mirrors(self) {
            return Err(Error::Config("gradient tape does not mirror this network".into()));
        }
        let mut cache = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for layer in &self.layers {
            let (pre, out) = Self::layer_forward(layer, &x)?;
            cache.push(LayerCache { input: x, pre, out: out.clone() });
            x = out;
        }
        tape.cache = Some(cache);
        Ok(x)
    }

    /// Back-propagates `upstream` (∂loss/∂output) through the recorded pass.
    /// Fills parameter gradients and `tape.input`.
    pub fn backward(&self, tape: &mut GradTape<T>, upstream: &Matrix<T>) -> Result<()> {
        let cache = tape
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("mlp backward called before a taped forward pass".into()))?;
        let last = &cache[cache.len() - 1].out;
        if upstream.shape() != last.shape() {
            return Err(Error::Config(format!(
                "upstream gradient shape {:?} does not match output shape {:?}",
                upstream.shape(),
                last.shape()
            )));
        }
        let mut grad = upstream.clone();
        let mut weight_grads = Vec::with_capacity(self.layers.len());
        let mut bias_grads = Vec::with_capacity(self.layers.len());
        for (layer, c) in self.layers.iter().zip(cache).rev() {
            let act = layer.activation;
            let mut g_pre = grad;
            for ((g, &p), &o) in g_pre.as_mut_slice().iter_mut().zip(c.pre.as_slice()).zip(c.out.as_slice()) {
                *g *= act.derivative(p, o);
            }
            weight_grads.push(g_pre.t_matmul(&c.input)?);
            bias_grads.push(g_pre.sum_rows());
            grad = g_pre.matmul(&layer.weight)?;
        }
        weight_grads.reverse();
        bias_grads.reverse();
        if tape.accumulate {
            for (acc, g) in tape.weights.iter_mut().zip(&weight_grads) {
                acc.add_assign(g);
            }
            for (acc, g) in tape.biases.iter_mut().zip(&bias_grads) {
                acc.iter_mut().zip(g).for_each(|(a, &b)| *a += b);
            }
        } else {
            tape.weights = weight_grads;
            tape.biases = bias_grads;
        }
        tape.input = grad;
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Dense::num_params).sum()
    }

    /// All parameters flattened: per layer, row-major weights then bias.
    pub fn params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.num_params());
        self.extend_params(&mut out);
        out
    }

    pub fn extend_params(&self, out: &mut Vec<T>) {
        for l in &self.layers {
            out.extend_from_slice(l.weight.as_slice());
            out.extend_from_slice(&l.bias);
        }
    }

    /// Inverse of [`Mlp::params`]; returns how many values were consumed.
    pub fn set_params(&mut self, flat: &[T]) -> Result<usize> {
        if flat.len() < self.num_params() {
            return Err(Error::Config(format!(
                "need {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let n = l.weight.as_slice().len();
            l.weight.as_mut_slice().copy_from_slice(&flat[off..off + n]);
            off += n;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&flat[off..off + nb]);
            off += nb;
        }
        Ok(off)
    }

    pub fn sum_squared_params(&self) -> T {
        self.layers
            .iter()
            .map(|l| l.weight.sum_squares() + l.bias.iter().map(|&b| b * b).sum::<T>())
            .sum()
    }
}
