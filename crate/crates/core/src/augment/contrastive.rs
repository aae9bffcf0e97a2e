use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{Activation, AdamConfig, AdamState, GradTape, Matrix, Mlp};
use crate::rng;
use crate::serial::MlpJson;
use crate::Scalar;

/// Clamp applied to scores before taking logs.
pub const SCORE_EPS: f64 = 1e-12;

const ACTIVATIONS: [Activation; 2] = [Activation::Relu, Activation::Sigmoid];

/// Scores visual–semantic pairs: `g(x, a) = σ(W₂ · relu(W₁ [x, a] + b₁) + b₂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveNet<T> {
    pub net: Mlp<T>,
    d_v: usize,
    d_a: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContrastiveConfig {
    pub hidden_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        ContrastiveConfig { hidden_dim: 64, epochs: 30, batch_size: 64, lr: 1e-3 }
    }
}

/// Squared error against the one-hot target: `Σ_i (score_i − [i = true])²`.
pub fn contrastive_loss<T: Scalar>(scores: &[T], true_class: usize) -> T {
    assert!(true_class < scores.len(), "class {true_class} out of range");
    scores
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let d = s - if i == true_class { T::one() } else { T::zero() };
            d * d
        })
        .sum()
}

fn clamp_score<T: Scalar>(s: T) -> T {
    s.max(T::lit(SCORE_EPS)).min(T::lit(1.0 - SCORE_EPS))
}

/// `H = Σ_i g_i log g_i` over clamped scores. This is the negative of the
/// usual entropy; see [`shannon_entropy`].
pub fn prediction_entropy<T: Scalar>(scores: &[T]) -> T {
    scores
        .iter()
        .map(|&s| {
            let g = clamp_score(s);
            g * g.ln()
        })
        .sum()
}

/// `−Σ_i g_i log g_i`, the quantity boundary mining raises.
pub fn shannon_entropy<T: Scalar>(scores: &[T]) -> T {
    -prediction_entropy(scores)
}

/// ∂H/∂g_i; zero where the clamp is active.
pub(crate) fn prediction_entropy_grad<T: Scalar>(s: T) -> T {
    if s <= T::lit(SCORE_EPS) || s >= T::lit(1.0 - SCORE_EPS) {
        T::zero()
    } else {
        s.ln() + T::one()
    }
}

impl<T: Scalar> ContrastiveNet<T> {
    pub fn init<R: Rng + ?Sized>(d_v: usize, d_a: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        let net = Mlp::init(&[d_v + d_a, hidden, 1], &ACTIVATIONS, rng)?;
        Ok(ContrastiveNet { net, d_v, d_a })
    }

    pub fn from_mlp(net: Mlp<T>, d_v: usize) -> Result<Self> {
        if net.output_dim() != 1 || net.input_dim() <= d_v {
            return Err(Error::Config("contrastive net must map [d_v + d_a] → 1".into()));
        }
        if net.layers().last().map(|l| l.activation) != Some(Activation::Sigmoid) {
            return Err(Error::Config("contrastive net must end in a sigmoid".into()));
        }
        let d_a = net.input_dim() - d_v;
        Ok(ContrastiveNet { net, d_v, d_a })
    }

    pub fn d_v(&self) -> usize {
        self.d_v
    }

    pub fn d_a(&self) -> usize {
        self.d_a
    }

    /// Rows `[x_n, a_i]` for every sample n and seen class i, sample-major.
    pub(crate) fn pair_rows(&self, xs: &Matrix<T>, seen_attributes: &Matrix<T>) -> Result<Matrix<T>> {
        if xs.cols() != self.d_v || seen_attributes.cols() != self.d_a {
            return Err(Error::Config(format!(
                "contrastive net expects d_v = {}, d_a = {}; got {} and {}",
                self.d_v,
                self.d_a,
                xs.cols(),
                seen_attributes.cols()
            )));
        }
        let c = seen_attributes.rows();
        let width = self.d_v + self.d_a;
        let mut data = Vec::with_capacity(xs.rows() * c * width);
        for x in xs.iter_rows() {
            for a in seen_attributes.iter_rows() {
                data.extend_from_slice(x);
                data.extend_from_slice(a);
            }
        }
        Matrix::from_vec(xs.rows() * c, width, data)
    }

    /// Matching probability of `x` against every seen class.
    pub fn scores(&self, x: &[T], seen_attributes: &Matrix<T>) -> Result<Vec<T>> {
        Ok(self.scores_batch(&Matrix::row_vector(x), seen_attributes)?.into_vec())
    }

    /// `N × C_s` score matrix.
    pub fn scores_batch(&self, xs: &Matrix<T>, seen_attributes: &Matrix<T>) -> Result<Matrix<T>> {
        let pairs = self.pair_rows(xs, seen_attributes)?;
        let out = self.net.forward(&pairs)?;
        Matrix::from_vec(xs.rows(), seen_attributes.rows(), out.into_vec())
    }

    /// Mean contrastive loss over the batch and its parameter gradient.
    /// `targets` are positions into `seen_attributes`.
    pub fn loss_and_grad(&self, xs: &Matrix<T>, targets: &[usize], seen_attributes: &Matrix<T>) -> Result<(T, Vec<T>)> {
        let c = seen_attributes.rows();
        if targets.len() != xs.rows() || targets.iter().any(|&t| t >= c) {
            return Err(Error::Config("contrastive targets do not match the batch".into()));
        }
        let pairs = self.pair_rows(xs, seen_attributes)?;
        let mut tape = GradTape::new(&self.net);
        let out = self.net.forward_taped(&pairs, &mut tape)?;
        let n = T::lit(xs.rows() as f64);
        let mut loss = T::zero();
        let upstream = Matrix::from_fn(out.rows(), 1, |r, _| {
            let y = if targets[r / c] == r % c { T::one() } else { T::zero() };
            let d = out.get(r, 0) - y;
            loss += d * d;
            T::lit(2.0) * d / n
        });
        self.net.backward(&mut tape, &upstream)?;
        Ok((loss / n, tape.flat()))
    }

    /// Per-sample objective `L_con + weight · H` and its gradient w.r.t. each
    /// sample, with the network frozen.
    pub fn objective_input_grad(
        &self,
        xs: &Matrix<T>,
        targets: &[usize],
        seen_attributes: &Matrix<T>,
        entropy_weight: T,
    ) -> Result<(Vec<T>, Matrix<T>)> {
        let c = seen_attributes.rows();
        let pairs = self.pair_rows(xs, seen_attributes)?;
        let mut tape = GradTape::new(&self.net);
        let out = self.net.forward_taped(&pairs, &mut tape)?;
        let mut objective = vec![T::zero(); xs.rows()];
        let upstream = Matrix::from_fn(out.rows(), 1, |r, _| {
            let (n, i) = (r / c, r % c);
            let g = out.get(r, 0);
            let y = if targets[n] == i { T::one() } else { T::zero() };
            let gc = clamp_score(g);
            objective[n] += (g - y) * (g - y) + entropy_weight * gc * gc.ln();
            T::lit(2.0) * (g - y) + entropy_weight * prediction_entropy_grad(g)
        });
        self.net.backward(&mut tape, &upstream)?;
        let grad = Matrix::from_fn(xs.rows(), self.d_v, |n, k| {
            (0..c).map(|i| tape.input.get(n * c + i, k)).sum()
        });
        Ok((objective, grad))
    }

    /// Stable 64-bit FNV-1a digest of every parameter's bit pattern.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for p in self.net.params() {
            for b in p.as_f64().to_bits().to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }

    pub fn to_json(&self) -> ContrastiveJson {
        ContrastiveJson { d_v: self.d_v, d_a: self.d_a, net: MlpJson::from_mlp(&self.net, false) }
    }

    pub fn from_json(doc: &ContrastiveJson) -> Result<Self> {
        let net = doc.net.to_mlp(&ACTIVATIONS)?;
        let cn = Self::from_mlp(net, doc.d_v)?;
        if cn.d_a != doc.d_a {
            return Err(Error::Format("contrastive net input width disagrees with d_a".into()));
        }
        Ok(cn)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveJson {
    pub d_v: usize,
    pub d_a: usize,
    pub net: MlpJson,
}

/// Minimizes the mean contrastive loss with Adam. Returns the per-epoch mean
/// loss; the first entry is the loss before any update.
pub fn train_contrastive<T: Scalar, R: Rng + ?Sized>(
    cn: &mut ContrastiveNet<T>,
    features: &Matrix<T>,
    targets: &[usize],
    seen_attributes: &Matrix<T>,
    cfg: &ContrastiveConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if features.rows() == 0 {
        return Err(Error::input("contrastive training on an empty seen set"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("contrastive batch_size must be positive".into()));
    }
    let mut history = vec![cn.loss_and_grad(features, targets, seen_attributes)?.0.as_f64()];
    let mut adam = AdamState::new(cn.net.num_params(), AdamConfig::with_lr(cfg.lr));
    let mut params = cn.net.params();
    for epoch in 0..cfg.epochs {
        let order = rng::permutation(rng, features.rows());
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let xb = features.select_rows(chunk);
            let tb: Vec<usize> = chunk.iter().map(|&i| targets[i]).collect();
            let (loss, grad) = cn.loss_and_grad(&xb, &tb, seen_attributes)?;
            if !loss.is_finite() {
                return Err(Error::Divergence(format!("contrastive loss non-finite in epoch {epoch}")));
            }
            total += loss.as_f64() * chunk.len() as f64;
            adam.step(&mut params, &grad)?;
            cn.net.set_params(&params)?;
        }
        history.push(total / features.rows() as f64);
    }
    Ok(history)
}
