//! Dataset model, the synthetic benchmark generator, and file formats.

mod io;
mod synth;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Matrix;
use crate::Scalar;

pub use io::{
    load_dataset, load_dir, read_attributes, read_features, read_split, save_dataset, write_attributes, write_features,
    write_features_binary, ATTRIBUTES_FILE, FEATURES_FILE, SPLIT_FILE, ZSF1_MAGIC,
};
pub use synth::{generate_synthetic, SynthConfig};

/// Sample indices of each evaluation partition.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Split {
    pub train_seen: Vec<usize>,
    pub test_seen: Vec<usize>,
    pub test_unseen: Vec<usize>,
}

/// Features, labels and class semantics with a seen/unseen split.
///
/// Class ids index rows of `attributes`; sample indices index rows of
/// `features`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub features: Matrix<T>,
    pub labels: Vec<usize>,
    pub attributes: Matrix<T>,
    pub seen_classes: Vec<usize>,
    pub unseen_classes: Vec<usize>,
    pub split: Split,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(
        features: Matrix<T>,
        labels: Vec<usize>,
        attributes: Matrix<T>,
        seen_classes: Vec<usize>,
        unseen_classes: Vec<usize>,
        split: Split,
    ) -> Result<Self> {
        let ds = Dataset { features, labels, attributes, seen_classes, unseen_classes, split };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.features.rows();
        let c = self.attributes.rows();
        if self.labels.len() != n {
            return Err(Error::input(format!("{} labels for {n} feature rows", self.labels.len())));
        }
        if let Some((i, &l)) = self.labels.iter().enumerate().find(|(_, &l)| l >= c) {
            return Err(Error::input(format!("sample {i} has label {l} but only {c} classes have attributes")));
        }
        let mut role = vec![0u8; c];
        for (set, bit) in [(&self.seen_classes, 1u8), (&self.unseen_classes, 2u8)] {
            for &k in set {
                if k >= c {
                    return Err(Error::input(format!("class id {k} has no attribute row")));
                }
                if role[k] & bit != 0 {
                    return Err(Error::input(format!("class {k} listed twice")));
                }
                role[k] |= bit;
            }
        }
        if let Some(k) = role.iter().position(|&r| r == 3) {
            return Err(Error::input(format!("class {k} is both seen and unseen")));
        }
        let mut owner = vec![0u8; n];
        let parts = [
            ("train_seen", &self.split.train_seen, 1u8),
            ("test_seen", &self.split.test_seen, 1u8),
            ("test_unseen", &self.split.test_unseen, 2u8),
        ];
        for (pi, (name, idx, want)) in parts.iter().enumerate() {
            for &i in idx.iter() {
                if i >= n {
                    return Err(Error::input(format!("{name} lists sample {i}, but there are only {n}")));
                }
                if owner[i] != 0 {
                    return Err(Error::input(format!("sample {i} appears in more than one split list")));
                }
                owner[i] = pi as u8 + 1;
                if role[self.labels[i]] != *want {
                    return Err(Error::input(format!(
                        "{name} sample {i} has class {} which is not {}",
                        self.labels[i],
                        if *want == 1 { "seen" } else { "unseen" }
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.attributes.rows()
    }

    pub fn d_v(&self) -> usize {
        self.features.cols()
    }

    pub fn d_a(&self) -> usize {
        self.attributes.cols()
    }

    pub fn seen_attributes(&self) -> Matrix<T> {
        self.attributes.select_rows(&self.seen_classes)
    }

    pub fn unseen_attributes(&self) -> Matrix<T> {
        self.attributes.select_rows(&self.unseen_classes)
    }

    /// Features and labels of the listed samples.
    pub fn subset(&self, indices: &[usize]) -> (Matrix<T>, Vec<usize>) {
        (self.features.select_rows(indices), indices.iter().map(|&i| self.labels[i]).collect())
    }

    /// Position of `class` within `seen_classes`.
    pub fn seen_position(&self, class: usize) -> Option<usize> {
        self.seen_classes.iter().position(|&k| k == class)
    }
}

/// Mean feature vector of every seen class over the samples in `over`,
/// one row per class in `seen_classes` order.
pub fn class_prototypes<T: Scalar>(ds: &Dataset<T>, over: &[usize]) -> Result<Matrix<T>> {
    class_means(&ds.features, &ds.labels, &ds.seen_classes, over)
}

/// Per-class means of `features[over]`, rows ordered as `classes`.
pub fn class_means<T: Scalar>(features: &Matrix<T>, labels: &[usize], classes: &[usize], over: &[usize]) -> Result<Matrix<T>> {
    let mut sums = Matrix::zeros(classes.len(), features.cols());
    let mut counts = vec![0usize; classes.len()];
    let max_class = classes.iter().copied().max().map_or(0, |m| m + 1);
    let mut slot = vec![usize::MAX; max_class];
    for (pos, &k) in classes.iter().enumerate() {
        slot[k] = pos;
    }
    for &i in over {
        let l = labels[i];
        if l < max_class && slot[l] != usize::MAX {
            let p = slot[l];
            counts[p] += 1;
            for (s, &v) in sums.row_mut(p).iter_mut().zip(features.row(i)) {
                *s += v;
            }
        }
    }
    for (p, &n) in counts.iter().enumerate() {
        if n == 0 {
            return Err(Error::input(format!("class {} has no samples", classes[p])));
        }
        let inv = T::one() / T::lit(n as f64);
        sums.row_mut(p).iter_mut().for_each(|v| *v *= inv);
    }
    Ok(sums)
}
