//! Relative positioning of class semantics.
//!
//! Seen-class attribute vectors form a cosine-similarity graph; the classes
//! with the highest, lowest and median similarity sums become anchors, and
//! every class is re-expressed through learned responses to its offsets from
//! those anchors.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{Activation, GradTape, Matrix, Mlp};
use crate::serial::MlpJson;
use crate::Scalar;

/// Cosine-similarity graph over seen-class attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticGraph<T> {
    pub attributes: Matrix<T>,
    pub edges: Matrix<T>,
    /// `sums[i] = Σ_j edges[i][j]`, self-similarity included.
    pub sums: Vec<T>,
}

/// The three anchor classes, as row indices into the seen attribute matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorIndices {
    pub max: usize,
    pub min: usize,
    pub med: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Anchors<T> {
    pub indices: AnchorIndices,
    pub a_max: Vec<T>,
    pub a_min: Vec<T>,
    pub a_med: Vec<T>,
}

pub fn build_graph<T: Scalar>(seen_attributes: &Matrix<T>) -> Result<SemanticGraph<T>> {
    let c = seen_attributes.rows();
    if c < 3 {
        return Err(Error::input(format!("anchor selection needs at least 3 seen classes, got {c}")));
    }
    let norms: Vec<T> = seen_attributes
        .iter_rows()
        .map(|r| r.iter().map(|&v| v * v).sum::<T>().sqrt())
        .collect();
    if let Some(i) = norms.iter().position(|n| !(*n > T::zero())) {
        return Err(Error::input(format!("seen class {i} has an all-zero attribute vector")));
    }
    let edges = Matrix::from_fn(c, c, |i, j| {
        let dot: T = seen_attributes.row(i).iter().zip(seen_attributes.row(j)).map(|(&a, &b)| a * b).sum();
        dot / (norms[i] * norms[j])
    });
    let sums = edges.row_sums();
    Ok(SemanticGraph { attributes: seen_attributes.clone(), edges, sums })
}

fn first_index_of<T: Scalar>(values: &[T], target: T) -> usize {
    values.iter().position(|&v| v == target).expect("target drawn from values")
}

/// Picks the max-, min- and median-sum classes. Ties resolve to the lowest
/// class index; the median is the lower median, position ⌊(C−1)/2⌋.
pub fn select_anchors<T: Scalar>(graph: &SemanticGraph<T>) -> Anchors<T> {
    let d = &graph.sums;
    let max_v = d.iter().copied().fold(T::neg_infinity(), T::max);
    let min_v = d.iter().copied().fold(T::infinity(), T::min);
    let mut sorted = d.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite similarity sums"));
    let med_v = sorted[(d.len() - 1) / 2];
    let indices = AnchorIndices {
        max: first_index_of(d, max_v),
        min: first_index_of(d, min_v),
        med: first_index_of(d, med_v),
    };
    let row = |i: usize| graph.attributes.row(i).to_vec();
    Anchors { indices, a_max: row(indices.max), a_min: row(indices.min), a_med: row(indices.med) }
}

/// Maps raw class attributes to global semantic vectors:
/// `a_g = h_max(a − a_max) + h_min(a − a_min) + h_med(a − a_med)`,
/// each `h` a single fully connected layer followed by ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticEmbedder<T> {
    anchors: Anchors<T>,
    pub h_max: Mlp<T>,
    pub h_min: Mlp<T>,
    pub h_med: Mlp<T>,
    d_g: usize,
}

/// Recorded pass through the three response maps.
#[derive(Debug, Clone)]
pub struct EmbedTrace<T> {
    tapes: [GradTape<T>; 3],
}

impl<T: Scalar> SemanticEmbedder<T> {
    /// Chooses anchors from the seen classes and initializes the maps.
    pub fn fit<R: Rng + ?Sized>(seen_attributes: &Matrix<T>, d_g: usize, rng: &mut R) -> Result<Self> {
        let anchors = select_anchors(&build_graph(seen_attributes)?);
        let d_a = seen_attributes.cols();
        let mut h = || Mlp::init(&[d_a, d_g], &[Activation::Relu], rng);
        let (h_max, h_min, h_med) = (h()?, h()?, h()?);
        Self::from_parts(anchors, [h_max, h_min, h_med])
    }

    pub fn from_parts(anchors: Anchors<T>, maps: [Mlp<T>; 3]) -> Result<Self> {
        let d_a = anchors.a_max.len();
        let d_g = maps[0].output_dim();
        for m in &maps {
            if m.input_dim() != d_a || m.output_dim() != d_g {
                return Err(Error::Config(format!(
                    "response map {}→{} does not fit d_a = {d_a}, d_g = {d_g}",
                    m.input_dim(),
                    m.output_dim()
                )));
            }
        }
        let [h_max, h_min, h_med] = maps;
        Ok(SemanticEmbedder { anchors, h_max, h_min, h_med, d_g })
    }

    pub fn anchors(&self) -> &Anchors<T> {
        &self.anchors
    }

    pub fn d_a(&self) -> usize {
        self.anchors.a_max.len()
    }

    pub fn d_g(&self) -> usize {
        self.d_g
    }

    fn maps(&self) -> [&Mlp<T>; 3] {
        [&self.h_max, &self.h_min, &self.h_med]
    }

    fn offsets(&self, attrs: &Matrix<T>) -> Result<[Matrix<T>; 3]> {
        if attrs.cols() != self.d_a() {
            return Err(Error::Config(format!(
                "expected {} attribute columns, got {}",
                self.d_a(),
                attrs.cols()
            )));
        }
        let off = |anchor: &[T]| Matrix::from_fn(attrs.rows(), attrs.cols(), |r, c| attrs.get(r, c) - anchor[c]);
        Ok([off(&self.anchors.a_max), off(&self.anchors.a_min), off(&self.anchors.a_med)])
    }

    /// Global semantic vectors for each attribute row.
    pub fn embed_rows(&self, attrs: &Matrix<T>) -> Result<Matrix<T>> {
        let offs = self.offsets(attrs)?;
        let mut out = Matrix::zeros(attrs.rows(), self.d_g);
        for (net, off) in self.maps().into_iter().zip(&offs) {
            out.add_assign(&net.forward(off)?);
        }
        Ok(out)
    }

    pub fn embed(&self, a: &[T]) -> Result<Vec<T>> {
        Ok(self.embed_rows(&Matrix::row_vector(a))?.into_vec())
    }

    pub fn embed_traced(&self, attrs: &Matrix<T>) -> Result<(Matrix<T>, EmbedTrace<T>)> {
        let offs = self.offsets(attrs)?;
        let mut tapes = [GradTape::new(&self.h_max), GradTape::new(&self.h_min), GradTape::new(&self.h_med)];
        let mut out = Matrix::zeros(attrs.rows(), self.d_g);
        for ((net, off), tape) in self.maps().into_iter().zip(&offs).zip(tapes.iter_mut()) {
            out.add_assign(&net.forward_taped(off, tape)?);
        }
        Ok((out, EmbedTrace { tapes }))
    }

    /// Parameter gradients (flat, [`SemanticEmbedder::params`] order) given
    /// ∂L/∂a_g for every embedded row.
    pub fn backward(&self, trace: &mut EmbedTrace<T>, grad_out: &Matrix<T>) -> Result<Vec<T>> {
        let mut flat = Vec::with_capacity(self.num_params());
        for (net, tape) in self.maps().into_iter().zip(trace.tapes.iter_mut()) {
            net.backward(tape, grad_out)?;
            flat.extend(tape.flat());
        }
        Ok(flat)
    }

    pub fn num_params(&self) -> usize {
        self.maps().iter().map(|m| m.num_params()).sum()
    }

    pub fn params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.num_params());
        for m in self.maps() {
            m.extend_params(&mut out);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Config(format!(
                "embedder has {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let mut off = 0;
        for m in [&mut self.h_max, &mut self.h_min, &mut self.h_med] {
            off += m.set_params(&flat[off..])?;
        }
        Ok(())
    }

    pub fn sum_squared_params(&self) -> T {
        self.maps().iter().map(|m| m.sum_squared_params()).sum()
    }

    pub fn to_json(&self) -> EmbedderJson {
        let v = |x: &[T]| x.iter().map(|v| v.as_f64()).collect();
        EmbedderJson {
            d_g: self.d_g,
            anchor_indices: self.anchors.indices,
            a_max: v(&self.anchors.a_max),
            a_min: v(&self.anchors.a_min),
            a_med: v(&self.anchors.a_med),
            h_max: MlpJson::from_mlp(&self.h_max, false),
            h_min: MlpJson::from_mlp(&self.h_min, false),
            h_med: MlpJson::from_mlp(&self.h_med, false),
        }
    }

    pub fn from_json(doc: &EmbedderJson) -> Result<Self> {
        let v = |x: &[f64]| x.iter().map(|&v| T::lit(v)).collect();
        let anchors = Anchors { indices: doc.anchor_indices, a_max: v(&doc.a_max), a_min: v(&doc.a_min), a_med: v(&doc.a_med) };
        let relu = [Activation::Relu];
        Self::from_parts(anchors, [doc.h_max.to_mlp(&relu)?, doc.h_min.to_mlp(&relu)?, doc.h_med.to_mlp(&relu)?])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderJson {
    pub d_g: usize,
    pub anchor_indices: AnchorIndices,
    pub a_max: Vec<f64>,
    pub a_min: Vec<f64>,
    pub a_med: Vec<f64>,
    pub h_max: MlpJson,
    pub h_min: MlpJson,
    pub h_med: MlpJson,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Dense;
    use crate::rng;
    use crate::gradcheck::{central_diff, rel_err};

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn three_class() -> Matrix<f64> {
        let s = 1.0 / 2f64.sqrt();
        m(&[&[1.0, 0.0], &[0.0, 1.0], &[s, s]])
    }

    #[test]
    fn cosine_edges() {
        let g = build_graph(&m(&[&[1.0, 2.0], &[1.0, 2.0], &[-2.0, 1.0]])).unwrap();
        assert!((g.edges.get(0, 1) - 1.0).abs() < 1e-15);
        assert!(g.edges.get(0, 2).abs() < 1e-15);
        for i in 0..3 {
            assert!((g.edges.get(i, i) - 1.0).abs() < 1e-15);
            for j in 0..3 {
                assert_eq!(g.edges.get(i, j), g.edges.get(j, i));
            }
        }
    }

    #[test]
    fn hand_computed_sums() {
        let g = build_graph(&three_class()).unwrap();
        let expect = [1.0 + 0.5f64.sqrt(), 1.0 + 0.5f64.sqrt(), 1.0 + 2f64.sqrt()];
        for (a, b) in g.sums.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((g.sums[0] - 1.7071).abs() < 1e-4 && (g.sums[2] - 2.4142).abs() < 1e-4);
    }

    #[test]
    fn tie_rule_picks_lowest_index() {
        let a = select_anchors(&build_graph(&three_class()).unwrap());
        assert_eq!(a.indices, AnchorIndices { max: 2, min: 0, med: 0 });
        assert_eq!(a.a_min, vec![1.0, 0.0]);
        assert_eq!(a.a_med, vec![1.0, 0.0]);
    }

    #[test]
    fn lower_median_for_even_counts() {
        let graph = SemanticGraph {
            attributes: m(&[&[1.0], &[2.0], &[3.0], &[4.0]]),
            edges: Matrix::zeros(4, 4),
            sums: vec![3.0, 1.0, 4.0, 2.0],
        };
        let a = select_anchors(&graph);
        assert_eq!(a.indices, AnchorIndices { max: 2, min: 1, med: 3 });
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(matches!(build_graph(&m(&[&[1.0], &[2.0]])), Err(Error::Input { .. })));
        let err = build_graph(&m(&[&[1.0, 0.0], &[0.0, 0.0], &[1.0, 1.0]])).unwrap_err();
        assert!(err.to_string().contains("class 1"), "{err}");
    }

    #[test]
    fn distinct_sums_use_all_three_classes() {
        let a = select_anchors(&build_graph(&m(&[&[1.0, 0.1], &[0.2, 1.0], &[1.0, 0.9]])).unwrap());
        let mut idx = [a.indices.max, a.indices.min, a.indices.med];
        idx.sort_unstable();
        assert_eq!(idx, [0, 1, 2]);
    }

    fn identity_map(d: usize) -> Mlp<f64> {
        Mlp::new(vec![Dense {
            weight: Matrix::from_fn(d, d, |r, c| if r == c { 1.0 } else { 0.0 }),
            bias: vec![0.0; d],
            activation: Activation::Relu,
        }])
        .unwrap()
    }

    #[test]
    fn zero_maps_embed_to_zero() {
        let anchors = select_anchors(&build_graph(&three_class()).unwrap());
        let z = || Mlp::zeros(&[2, 4], &[Activation::Relu]).unwrap();
        let e = SemanticEmbedder::from_parts(anchors, [z(), z(), z()]).unwrap();
        assert!(e.embed(&[0.3, -2.0]).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn anchor_input_with_zero_bias_embeds_to_zero() {
        let mut r = rng::seeded(3);
        let attrs = m(&[&[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]]);
        let mut e = SemanticEmbedder::<f64>::fit(&attrs, 5, &mut r).unwrap();
        for h in [&mut e.h_max, &mut e.h_min, &mut e.h_med] {
            h.layers_mut()[0].bias = vec![0.0; 5];
        }
        assert!(e.embed(&[1.0, 1.0]).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_maps_sum_relu_offsets() {
        let attrs = three_class();
        let anchors = select_anchors(&build_graph(&attrs).unwrap());
        let e = SemanticEmbedder::from_parts(anchors.clone(), [identity_map(2), identity_map(2), identity_map(2)]).unwrap();
        let a = [0.2, 0.9];
        let got = e.embed(&a).unwrap();
        for k in 0..2 {
            let expect = (a[k] - anchors.a_max[k]).max(0.0) + (a[k] - anchors.a_min[k]).max(0.0) + (a[k] - anchors.a_med[k]).max(0.0);
            assert!((got[k] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn anchors_come_from_seen_rows_and_are_permutation_invariant() {
        let mut r = rng::seeded(9);
        let attrs = Matrix::<f64>::from_fn(7, 4, |_, _| rng::uniform(&mut r, 0.0, 1.0));
        let a = select_anchors(&build_graph(&attrs).unwrap());
        for v in [&a.a_max, &a.a_min, &a.a_med] {
            assert!(attrs.iter_rows().any(|row| row == v.as_slice()));
        }
        let perm = rng::permutation(&mut r, 7);
        let b = select_anchors(&build_graph(&attrs.select_rows(&perm)).unwrap());
        assert_eq!((a.a_max.clone(), a.a_min.clone(), a.a_med.clone()), (b.a_max, b.a_min, b.a_med));
    }

    #[test]
    fn embedding_is_monotone_in_weights_for_positive_offsets() {
        let attrs = three_class();
        let anchors = select_anchors(&build_graph(&attrs).unwrap());
        let base = [identity_map(2), identity_map(2), identity_map(2)];
        let e0 = SemanticEmbedder::from_parts(anchors.clone(), base.clone()).unwrap();
        let far = [10.0, 10.0];
        let y0 = e0.embed(&far).unwrap();
        let mut bumped = base;
        bumped[1].layers_mut()[0].weight.set(0, 1, 0.5);
        let e1 = SemanticEmbedder::from_parts(anchors, bumped).unwrap();
        let y1 = e1.embed(&far).unwrap();
        assert!(y1[0] > y0[0] && y1[1] == y0[1]);
    }

    #[test]
    fn embed_gradients_match_finite_differences() {
        let mut r = rng::seeded(12);
        let attrs = Matrix::<f64>::from_fn(5, 4, |_, _| rng::uniform(&mut r, 0.0, 1.0));
        let e = SemanticEmbedder::<f64>::fit(&attrs, 6, &mut r).unwrap();
        let w = Matrix::<f64>::from_fn(5, 6, |_, _| rng::normal(&mut r));
        let loss = |emb: &SemanticEmbedder<f64>| -> f64 {
            emb.embed_rows(&attrs).unwrap().zip_map(&w, |a, b| a * b).as_slice().iter().sum()
        };
        let (_, mut tr) = e.embed_traced(&attrs).unwrap();
        let g = e.backward(&mut tr, &w).unwrap();
        let numeric = central_diff(&e.params(), 1e-6, |p| {
            let mut f = e.clone();
            f.set_params(p).unwrap();
            loss(&f)
        });
        for (a, n) in g.iter().zip(&numeric) {
            assert!(rel_err(*a, *n) < 1e-4, "{a} vs {n}");
        }
    }

    #[test]
    fn json_roundtrip() {
        let mut r = rng::seeded(1);
        let attrs = Matrix::<f64>::from_fn(4, 3, |_, _| rng::uniform(&mut r, 0.1, 1.0));
        let e = SemanticEmbedder::<f64>::fit(&attrs, 5, &mut r).unwrap();
        let text = serde_json::to_string(&e.to_json()).unwrap();
        let back = SemanticEmbedder::<f64>::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, e);
    }
}
