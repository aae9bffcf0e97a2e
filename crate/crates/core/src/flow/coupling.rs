use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::numcore::{Activation, GradTape, Matrix, Mlp};
use crate::Scalar;

/// Largest admissible |s| after clamping; beyond this `exp` is not trusted.
pub const MAX_LOG_SCALE: f64 = 80.0;

/// Conditional affine coupling layer.
///
/// The input `u` is split into `u1` (first ⌈d_v/2⌉ columns) and `u2`
/// (the rest). With condition `c`:
///
/// ```text
/// v1 = u1 ⊙ exp(s1([u2, c])) + t1([u2, c])
/// v2 = u2 ⊙ exp(s2([v1, c])) + t2([v1, c])
/// log|det J| = Σ s1 + Σ s2
/// ```
///
/// The scale outputs pass through `cap · tanh(s / cap)` when a cap is set.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingLayer<T> {
    pub s1: Mlp<T>,
    pub t1: Mlp<T>,
    pub s2: Mlp<T>,
    pub t2: Mlp<T>,
    d_v: usize,
    d_g: usize,
    s_cap: Option<T>,
}

/// Activations of one coupling layer recorded for back-propagation.
#[derive(Debug, Clone)]
pub struct CouplingTrace<T> {
    u1: Matrix<T>,
    u2: Matrix<T>,
    /// exp(+S) for a forward trace, exp(−S) for an inverse trace.
    e1: Matrix<T>,
    e2: Matrix<T>,
    s1: Matrix<T>,
    s2: Matrix<T>,
    tapes: [GradTape<T>; 4],
    inverse: bool,
}

fn internal_net<T: Scalar>(n_in: usize, hidden: usize, n_out: usize, rng: Option<&mut dyn RngCore>) -> Result<Mlp<T>> {
    let dims = [n_in, hidden, n_out];
    let acts = [Activation::LeakyRelu, Activation::Identity];
    match rng {
        Some(r) => Mlp::init(&dims, &acts, r),
        None => Mlp::zeros(&dims, &acts),
    }
}

impl<T: Scalar> CouplingLayer<T> {
    /// Randomly initialised layer; each internal net is `in → hidden → out`
    /// with LeakyReLU after the first layer.
    pub fn init<R: Rng>(d_v: usize, d_g: usize, hidden: usize, s_cap: Option<T>, rng: &mut R) -> Result<Self> {
        Self::check_dims(d_v, hidden)?;
        let (n1, n2) = split_dims(d_v);
        Ok(CouplingLayer {
            s1: internal_net(n2 + d_g, hidden, n1, Some(&mut *rng as &mut dyn RngCore))?,
            t1: internal_net(n2 + d_g, hidden, n1, Some(&mut *rng as &mut dyn RngCore))?,
            s2: internal_net(n1 + d_g, hidden, n2, Some(&mut *rng as &mut dyn RngCore))?,
            t2: internal_net(n1 + d_g, hidden, n2, Some(&mut *rng as &mut dyn RngCore))?,
            d_v,
            d_g,
            s_cap,
        })
    }

    /// Layer whose four nets are identically zero, i.e. the identity map.
    pub fn identity(d_v: usize, d_g: usize, hidden: usize, s_cap: Option<T>) -> Result<Self> {
        Self::check_dims(d_v, hidden)?;
        let (n1, n2) = split_dims(d_v);
        Ok(CouplingLayer {
            s1: internal_net(n2 + d_g, hidden, n1, None)?,
            t1: internal_net(n2 + d_g, hidden, n1, None)?,
            s2: internal_net(n1 + d_g, hidden, n2, None)?,
            t2: internal_net(n1 + d_g, hidden, n2, None)?,
            d_v,
            d_g,
            s_cap,
        })
    }

    /// Assembles a layer from explicit nets, validating their shapes.
    pub fn from_nets(nets: [Mlp<T>; 4], d_v: usize, d_g: usize, s_cap: Option<T>) -> Result<Self> {
        let [s1, t1, s2, t2] = nets;
        let (n1, n2) = split_dims(d_v);
        let expect = [(n2 + d_g, n1), (n2 + d_g, n1), (n1 + d_g, n2), (n1 + d_g, n2)];
        for ((name, net), (i, o)) in ["s1", "t1", "s2", "t2"].iter().zip([&s1, &t1, &s2, &t2]).zip(expect) {
            if net.input_dim() != i || net.output_dim() != o {
                return Err(Error::Config(format!(
                    "{name} maps {}→{}, expected {i}→{o}",
                    net.input_dim(),
                    net.output_dim()
                )));
            }
        }
        if d_v < 2 {
            return Err(Error::Config("coupling layers need d_v ≥ 2".into()));
        }
        Ok(CouplingLayer { s1, t1, s2, t2, d_v, d_g, s_cap })
    }

    fn check_dims(d_v: usize, hidden: usize) -> Result<()> {
        if d_v < 2 {
            return Err(Error::Config("coupling layers need d_v ≥ 2".into()));
        }
        if hidden == 0 {
            return Err(Error::Config("hidden_dim must be positive".into()));
        }
        Ok(())
    }

    pub fn d_v(&self) -> usize {
        self.d_v
    }

    pub fn d_g(&self) -> usize {
        self.d_g
    }

    pub fn s_cap(&self) -> Option<T> {
        self.s_cap
    }

    pub fn nets(&self) -> [&Mlp<T>; 4] {
        [&self.s1, &self.t1, &self.s2, &self.t2]
    }

    pub fn nets_mut(&mut self) -> [&mut Mlp<T>; 4] {
        [&mut self.s1, &mut self.t1, &mut self.s2, &mut self.t2]
    }

    fn check_inputs(&self, x: &Matrix<T>, c: &Matrix<T>) -> Result<()> {
        if x.cols() != self.d_v {
            return Err(Error::Config(format!("expected {} feature columns, got {}", self.d_v, x.cols())));
        }
        if c.cols() != self.d_g {
            return Err(Error::Config(format!("expected {} condition columns, got {}", self.d_g, c.cols())));
        }
        if x.rows() != c.rows() {
            return Err(Error::Config(format!(
                "feature rows ({}) and condition rows ({}) differ",
                x.rows(),
                c.rows()
            )));
        }
        Ok(())
    }

    /// Applies the scale clamp and validates the result.
    fn clamp(&self, raw: &Matrix<T>, which: &str) -> Result<Matrix<T>> {
        let s = match self.s_cap {
            Some(cap) => raw.map(|r| cap * (r / cap).tanh()),
            None => raw.clone(),
        };
        let limit = T::lit(MAX_LOG_SCALE);
        if s.as_slice().iter().any(|v| !v.is_finite() || v.abs() > limit) {
            return Err(Error::Divergence(format!("scale net {which} produced a log-scale outside ±{MAX_LOG_SCALE}")));
        }
        Ok(s)
    }

    /// dS/dR of the clamp, given the clamped values.
    fn clamp_grad(&self, s: T) -> T {
        match self.s_cap {
            Some(cap) => {
                let t = s / cap;
                T::one() - t * t
            }
            None => T::one(),
        }
    }

    fn run(net: &Mlp<T>, input: &Matrix<T>, tape: Option<&mut GradTape<T>>) -> Result<Matrix<T>> {
        match tape {
            Some(t) => net.forward_taped(input, t),
            None => net.forward(input),
        }
    }

    fn new_tapes(&self) -> [GradTape<T>; 4] {
        [GradTape::new(&self.s1), GradTape::new(&self.t1), GradTape::new(&self.s2), GradTape::new(&self.t2)]
    }

    fn forward_impl(&self, u: &Matrix<T>, c: &Matrix<T>, record: bool) -> Result<(Matrix<T>, Vec<T>, Option<CouplingTrace<T>>)> {
        self.check_inputs(u, c)?;
        let (n1, _) = split_dims(self.d_v);
        let (u1, u2) = u.split_cols(n1);
        let mut tapes = if record { Some(self.new_tapes()) } else { None };

        let in1 = u2.hcat(c)?;
        let raw1 = Self::run(&self.s1, &in1, tapes.as_mut().map(|t| &mut t[0]))?;
        let t1 = Self::run(&self.t1, &in1, tapes.as_mut().map(|t| &mut t[1]))?;
        let s1 = self.clamp(&raw1, "s1")?;
        let e1 = s1.map(T::exp);
        let mut v1 = u1.zip_map(&e1, |a, b| a * b);
        v1.add_assign(&t1);

        let in2 = v1.hcat(c)?;
        let raw2 = Self::run(&self.s2, &in2, tapes.as_mut().map(|t| &mut t[2]))?;
        let t2 = Self::run(&self.t2, &in2, tapes.as_mut().map(|t| &mut t[3]))?;
        let s2 = self.clamp(&raw2, "s2")?;
        let e2 = s2.map(T::exp);
        let mut v2 = u2.zip_map(&e2, |a, b| a * b);
        v2.add_assign(&t2);

        let logdet: Vec<T> = s1.row_sums().into_iter().zip(s2.row_sums()).map(|(a, b)| a + b).collect();
        let v = v1.hcat(&v2)?;
        let trace = tapes.map(|tapes| CouplingTrace { u1, u2, e1, e2, s1, s2, tapes, inverse: false });
        Ok((v, logdet, trace))
    }

    /// Forward map; returns `v` and the per-row log-determinant.
    pub fn forward(&self, u: &Matrix<T>, c: &Matrix<T>) -> Result<(Matrix<T>, Vec<T>)> {
        let (v, ld, _) = self.forward_impl(u, c, false)?;
        Ok((v, ld))
    }

    pub fn forward_traced(&self, u: &Matrix<T>, c: &Matrix<T>) -> Result<(Matrix<T>, Vec<T>, CouplingTrace<T>)> {
        let (v, ld, tr) = self.forward_impl(u, c, true)?;
        Ok((v, ld, tr.expect("recorded")))
    }

    fn inverse_impl(&self, v: &Matrix<T>, c: &Matrix<T>, record: bool) -> Result<(Matrix<T>, Option<CouplingTrace<T>>)> {
        self.check_inputs(v, c)?;
        let (n1, _) = split_dims(self.d_v);
        let (v1, v2) = v.split_cols(n1);
        let mut tapes = if record { Some(self.new_tapes()) } else { None };

        let in2 = v1.hcat(c)?;
        let raw2 = Self::run(&self.s2, &in2, tapes.as_mut().map(|t| &mut t[2]))?;
        let t2 = Self::run(&self.t2, &in2, tapes.as_mut().map(|t| &mut t[3]))?;
        let s2 = self.clamp(&raw2, "s2")?;
        let inv_e2 = s2.map(|s| (-s).exp());
        let u2 = v2.zip_map(&t2, |a, b| a - b).zip_map(&inv_e2, |a, b| a * b);

        let in1 = u2.hcat(c)?;
        let raw1 = Self::run(&self.s1, &in1, tapes.as_mut().map(|t| &mut t[0]))?;
        let t1 = Self::run(&self.t1, &in1, tapes.as_mut().map(|t| &mut t[1]))?;
        let s1 = self.clamp(&raw1, "s1")?;
        let inv_e1 = s1.map(|s| (-s).exp());
        let u1 = v1.zip_map(&t1, |a, b| a - b).zip_map(&inv_e1, |a, b| a * b);

        let u = u1.hcat(&u2)?;
        let trace = tapes.map(|tapes| CouplingTrace {
            u1,
            u2,
            e1: inv_e1,
            e2: inv_e2,
            s1,
            s2,
            tapes,
            inverse: true,
        });
        Ok((u, trace))
    }

    /// Exact inverse: recovers `u2` from `v1`, then `u1` from `u2`.
    pub fn inverse(&self, v: &Matrix<T>, c: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(self.inverse_impl(v, c, false)?.0)
    }

    pub fn inverse_traced(&self, v: &Matrix<T>, c: &Matrix<T>) -> Result<(Matrix<T>, CouplingTrace<T>)> {
        let (u, tr) = self.inverse_impl(v, c, true)?;
        Ok((u, tr.expect("recorded")))
    }

    /// ∂/∂S → ∂/∂raw through the clamp, in place.
    fn through_clamp(&self, grad_s: &mut Matrix<T>, s: &Matrix<T>) {
        for (g, &sv) in grad_s.as_mut_slice().iter_mut().zip(s.as_slice()) {
            *g *= self.clamp_grad(sv);
        }
    }

    /// Back-propagates through a pair of nets sharing input `[h, c]`; returns
    /// the gradient w.r.t. that input.
    fn backprop_pair(
        &self,
        nets: (&Mlp<T>, &Mlp<T>),
        tapes: (&mut GradTape<T>, &mut GradTape<T>),
        grad_s_raw: &Matrix<T>,
        grad_t: &Matrix<T>,
    ) -> Result<Matrix<T>> {
        nets.0.backward(tapes.0, grad_s_raw)?;
        nets.1.backward(tapes.1, grad_t)?;
        let mut g = tapes.0.input.clone();
        g.add_assign(&tapes.1.input);
        Ok(g)
    }

    /// Gradients of a forward trace. `grad_v` is ∂L/∂v and `grad_logdet[r]`
    /// is ∂L/∂logdet for row r. Returns (∂L/∂u, ∂L/∂c); parameter gradients
    /// stay on the trace.
    pub fn backward_forward(
        &self,
        trace: &mut CouplingTrace<T>,
        grad_v: &Matrix<T>,
        grad_logdet: &[T],
    ) -> Result<(Matrix<T>, Matrix<T>)> {
        if trace.inverse {
            return Err(Error::State("forward backward pass given an inverse trace".into()));
        }
        let (n1, _) = split_dims(self.d_v);
        let (gv1_direct, gv2) = grad_v.split_cols(n1);
        let [tp_s1, tp_t1, tp_s2, tp_t2] = &mut trace.tapes;

        // v2 = u2 ⊙ e2 + t2
        let gu2_direct = gv2.zip_map(&trace.e2, |g, e| g * e);
        let mut gs2 = Matrix::from_fn(gv2.rows(), gv2.cols(), |r, k| {
            gv2.get(r, k) * trace.u2.get(r, k) * trace.e2.get(r, k) + grad_logdet[r]
        });
        self.through_clamp(&mut gs2, &trace.s2);
        let g_in2 = self.backprop_pair((&self.s2, &self.t2), (tp_s2, tp_t2), &gs2, &gv2)?;
        let (g_v1_from2, mut g_c) = g_in2.split_cols(n1);
        let mut gv1 = gv1_direct;
        gv1.add_assign(&g_v1_from2);

        // v1 = u1 ⊙ e1 + t1
        let gu1 = gv1.zip_map(&trace.e1, |g, e| g * e);
        let mut gs1 = Matrix::from_fn(gv1.rows(), gv1.cols(), |r, k| {
            gv1.get(r, k) * trace.u1.get(r, k) * trace.e1.get(r, k) + grad_logdet[r]
        });
        self.through_clamp(&mut gs1, &trace.s1);
        let g_in1 = self.backprop_pair((&self.s1, &self.t1), (tp_s1, tp_t1), &gs1, &gv1)?;
        let (g_u2_from1, g_c1) = g_in1.split_cols(trace.u2.cols());
        let mut gu2 = gu2_direct;
        gu2.add_assign(&g_u2_from1);
        g_c.add_assign(&g_c1);

        Ok((gu1.hcat(&gu2)?, g_c))
    }

    /// Gradients of an inverse trace given ∂L/∂u. Returns (∂L/∂v, ∂L/∂c).
    pub fn backward_inverse(&self, trace: &mut CouplingTrace<T>, grad_u: &Matrix<T>) -> Result<(Matrix<T>, Matrix<T>)> {
        if !trace.inverse {
            return Err(Error::State("inverse backward pass given a forward trace".into()));
        }
        let (n1, _) = split_dims(self.d_v);
        let (gu1, gu2_direct) = grad_u.split_cols(n1);
        let [tp_s1, tp_t1, tp_s2, tp_t2] = &mut trace.tapes;

        // u1 = (v1 − t1) ⊙ exp(−s1)
        let gv1_direct = gu1.zip_map(&trace.e1, |g, e| g * e);
        let gt1 = gv1_direct.map(|g| -g);
        let mut gs1 = gu1.zip_map(&trace.u1, |g, u| -g * u);
        self.through_clamp(&mut gs1, &trace.s1);
        let g_in1 = self.backprop_pair((&self.s1, &self.t1), (tp_s1, tp_t1), &gs1, &gt1)?;
        let (g_u2_from1, mut g_c) = g_in1.split_cols(trace.u2.cols());
        let mut gu2 = gu2_direct;
        gu2.add_assign(&g_u2_from1);

        // u2 = (v2 − t2) ⊙ exp(−s2)
        let gv2 = gu2.zip_map(&trace.e2, |g, e| g * e);
        let gt2 = gv2.map(|g| -g);
        let mut gs2 = gu2.zip_map(&trace.u2, |g, u| -g * u);
        self.through_clamp(&mut gs2, &trace.s2);
        let g_in2 = self.backprop_pair((&self.s2, &self.t2), (tp_s2, tp_t2), &gs2, &gt2)?;
        let (g_v1_from2, g_c2) = g_in2.split_cols(n1);
        let mut gv1 = gv1_direct;
        gv1.add_assign(&g_v1_from2);
        g_c.add_assign(&g_c2);

        Ok((gv1.hcat(&gv2)?, g_c))
    }

    pub fn num_params(&self) -> usize {
        self.nets().iter().map(|n| n.num_params()).sum()
    }

    pub fn extend_params(&self, out: &mut Vec<T>) {
        for n in self.nets() {
            n.extend_params(out);
        }
    }

    pub fn set_params(&mut self, flat: &[T]) -> Result<usize> {
        let mut off = 0;
        for n in self.nets_mut() {
            off += n.set_params(&flat[off..])?;
        }
        Ok(off)
    }

    pub fn sum_squared_params(&self) -> T {
        self.nets().iter().map(|n| n.sum_squared_params()).sum()
    }
}

impl<T: Scalar> CouplingTrace<T> {
    /// Adds parameter gradients into `out`, laid out as [`CouplingLayer::extend_params`].
    pub fn add_param_grads_into(&self, out: &mut [T]) {
        let mut off = 0;
        for t in &self.tapes {
            let n: usize = t.weights.iter().map(|w| w.as_slice().len()).sum::<usize>()
                + t.biases.iter().map(Vec::len).sum::<usize>();
            t.add_flat_into(&mut out[off..off + n]);
            off += n;
        }
    }
}

/// (⌈d/2⌉, ⌊d/2⌋)
pub fn split_dims(d_v: usize) -> (usize, usize) {
    let n1 = d_v.div_ceil(2);
    (n1, d_v - n1)
}
