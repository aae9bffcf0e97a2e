//! On-disk formats.
//!
//! * `features.csv`: header `label,f0,...,f{d-1}`, one sample per line.
//! * `attributes.csv`: header `class_id,a0,...`, one class per line; ids
//!   must be `0..C` in order.
//! * `split.json`: `{"seen", "unseen", "train_seen", "test_seen", "test_unseen"}`.
//! * Binary features (`ZSF1`): the 4 magic bytes, then little-endian `u64`
//!   rows, `u64` cols, then `rows` labels as `u64` and `rows × cols` `f64`
//!   values in row-major order.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! save/load cycle reproduces every value bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::numcore::Matrix;
use crate::Scalar;

pub const FEATURES_FILE: &str = "features.csv";
pub const ATTRIBUTES_FILE: &str = "attributes.csv";
pub const SPLIT_FILE: &str = "split.json";
pub const ZSF1_MAGIC: &[u8; 4] = b"ZSF1";

#[derive(Serialize, Deserialize)]
struct SplitJson {
    seen: Vec<usize>,
    unseen: Vec<usize>,
    train_seen: Vec<usize>,
    test_seen: Vec<usize>,
    test_unseen: Vec<usize>,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn fmt_row<T: Scalar>(out: &mut String, lead: usize, row: &[T]) {
    let _ = write!(out, "{lead}");
    for v in row {
        let _ = write!(out, ",{}", v);
    }
    out.push('\n');
}

/// Parses `id,v0,v1,...` lines after a header. Returns ids and a matrix.
fn parse_table<T: Scalar>(text: &str, what: &str, header_lead: &str) -> Result<(Vec<usize>, Matrix<T>)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::input(format!("{what} file is empty")))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.first() != Some(&header_lead) {
        return Err(Error::input_at(1, format!("{what} header must start with `{header_lead}`")));
    }
    let width = cols.len() - 1;
    let mut ids = Vec::new();
    let mut data = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let mut fields = line.split(',').map(str::trim);
        let id = fields.next().unwrap_or_default();
        let id: usize = id
            .parse()
            .map_err(|_| Error::input_at(lineno, format!("`{id}` is not a class id")))?;
        let start = data.len();
        for f in fields {
            let v: f64 = f.parse().map_err(|_| Error::input_at(lineno, format!("`{f}` is not a number")))?;
            if !v.is_finite() {
                return Err(Error::input_at(lineno, format!("non-finite value `{f}`")));
            }
            data.push(T::lit(v));
        }
        if data.len() - start != width {
            return Err(Error::input_at(
                lineno,
                format!("expected {width} values after the id, found {}", data.len() - start),
            ));
        }
        ids.push(id);
    }
    let m = Matrix::from_vec(ids.len(), width, data)?;
    Ok((ids, m))
}

/// Reads a feature file, CSV or `ZSF1` binary (detected by the magic bytes).
pub fn read_features<T: Scalar>(path: &Path) -> Result<(Matrix<T>, Vec<usize>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(ZSF1_MAGIC) {
        return parse_binary(&bytes);
    }
    let text = String::from_utf8(bytes).map_err(|_| Error::input("feature file is neither UTF-8 CSV nor ZSF1"))?;
    let (labels, m) = parse_table(&text, "feature", "label")?;
    Ok((m, labels))
}

fn parse_binary<T: Scalar>(bytes: &[u8]) -> Result<(Matrix<T>, Vec<usize>)> {
    let mut pos = 4;
    let mut take8 = |what: &str| -> Result<[u8; 8]> {
        let chunk = bytes
            .get(pos..pos + 8)
            .ok_or_else(|| Error::input(format!("ZSF1 file truncated while reading {what}")))?;
        pos += 8;
        Ok(chunk.try_into().expect("8-byte slice"))
    };
    let rows = u64::from_le_bytes(take8("the row count")?) as usize;
    let cols = u64::from_le_bytes(take8("the column count")?) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|rc| rc.checked_add(rows))
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(20))
        .ok_or_else(|| Error::input("ZSF1 dimensions overflow"))?;
    if bytes.len() != expected {
        return Err(Error::input(format!(
            "ZSF1 file has {} bytes, expected {expected} for {rows}×{cols}",
            bytes.len()
        )));
    }
    let mut labels = Vec::with_capacity(rows);
    for _ in 0..rows {
        labels.push(u64::from_le_bytes(take8("labels")?) as usize);
    }
    let mut data = Vec::with_capacity(rows * cols);
    for k in 0..rows * cols {
        let v = f64::from_le_bytes(take8("values")?);
        if !v.is_finite() {
            return Err(Error::input(format!("ZSF1 value {k} (row {}) is not finite", k / cols.max(1))));
        }
        data.push(T::lit(v));
    }
    Ok((Matrix::from_vec(rows, cols, data)?, labels))
}

pub fn write_features<T: Scalar>(path: &Path, features: &Matrix<T>, labels: &[usize]) -> Result<()> {
    let mut out = String::from("label");
    for k in 0..features.cols() {
        let _ = write!(out, ",f{k}");
    }
    out.push('\n');
    for (row, &l) in features.iter_rows().zip(labels) {
        fmt_row(&mut out, l, row);
    }
    write_file(path, out.as_bytes())
}

pub fn write_features_binary<T: Scalar>(path: &Path, features: &Matrix<T>, labels: &[usize]) -> Result<()> {
    let mut out = Vec::with_capacity(20 + 8 * (labels.len() + features.as_slice().len()));
    out.extend_from_slice(ZSF1_MAGIC);
    out.extend_from_slice(&(features.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(features.cols() as u64).to_le_bytes());
    for &l in labels {
        out.extend_from_slice(&(l as u64).to_le_bytes());
    }
    for v in features.as_slice() {
        out.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    write_file(path, &out)
}

/// Reads attributes; row `k` must carry class id `k`.
pub fn read_attributes<T: Scalar>(path: &Path) -> Result<Matrix<T>> {
    let (ids, m) = parse_table(&read_text(path)?, "attribute", "class_id")?;
    if let Some((row, &id)) = ids.iter().enumerate().find(|&(row, &id)| row != id) {
        return Err(Error::input_at(row + 2, format!("attribute rows must list class ids 0,1,2,... in order; found {id} at row {row}")));
    }
    Ok(m)
}

pub fn write_attributes<T: Scalar>(path: &Path, attributes: &Matrix<T>) -> Result<()> {
    let mut out = String::from("class_id");
    for k in 0..attributes.cols() {
        let _ = write!(out, ",a{k}");
    }
    out.push('\n');
    for (id, row) in attributes.iter_rows().enumerate() {
        fmt_row(&mut out, id, row);
    }
    write_file(path, out.as_bytes())
}

/// Returns `(seen, unseen, split)`.
pub fn read_split(path: &Path) -> Result<(Vec<usize>, Vec<usize>, Split)> {
    let text = read_text(path)?;
    let s: SplitJson = serde_json::from_str(&text).map_err(|e| Error::Input {
        msg: format!("split file: {e}"),
        line: Some(e.line()),
    })?;
    let key_line = |key: &str| {
        let needle = format!("\"{key}\"");
        text.lines().position(|l| l.contains(&needle)).map_or(1, |i| i + 1)
    };
    let lists = [
        ("seen", &s.seen),
        ("unseen", &s.unseen),
        ("train_seen", &s.train_seen),
        ("test_seen", &s.test_seen),
        ("test_unseen", &s.test_unseen),
    ];
    // Classes (first two lists) and samples (last three) are checked separately.
    for group in [&lists[..2], &lists[2..]] {
        let mut first_owner = std::collections::HashMap::new();
        for (name, list) in group {
            for &v in list.iter() {
                if let Some(prev) = first_owner.insert(v, *name) {
                    return Err(Error::input_at(
                        key_line(name),
                        format!("index {v} appears in both `{prev}` and `{name}`"),
                    ));
                }
            }
        }
    }
    Ok((s.seen, s.unseen, Split { train_seen: s.train_seen, test_seen: s.test_seen, test_unseen: s.test_unseen }))
}

/// Loads and validates a dataset. Labels that reference a class without an
/// attribute row are reported with the offending feature-file line.
pub fn load_dataset<T: Scalar>(features_path: &Path, attributes_path: &Path, split_path: &Path) -> Result<Dataset<T>> {
    let (features, labels) = read_features::<T>(features_path)?;
    let attributes = read_attributes::<T>(attributes_path)?;
    let c = attributes.rows();
    if let Some(i) = labels.iter().position(|&l| l >= c) {
        return Err(Error::input_at(
            i + 2,
            format!("label {} references an unknown class; attributes cover ids 0..{c}", labels[i]),
        ));
    }
    let (seen, unseen, split) = read_split(split_path)?;
    Dataset::new(features, labels, attributes, seen, unseen, split)
}

/// Loads `features.csv`, `attributes.csv` and `split.json` from `dir`.
pub fn load_dir<T: Scalar>(dir: &Path) -> Result<Dataset<T>> {
    load_dataset(&dir.join(FEATURES_FILE), &dir.join(ATTRIBUTES_FILE), &dir.join(SPLIT_FILE))
}

pub fn save_dataset<T: Scalar>(ds: &Dataset<T>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_features(&dir.join(FEATURES_FILE), &ds.features, &ds.labels)?;
    write_attributes(&dir.join(ATTRIBUTES_FILE), &ds.attributes)?;
    let split = SplitJson {
        seen: ds.seen_classes.clone(),
        unseen: ds.unseen_classes.clone(),
        train_seen: ds.split.train_seen.clone(),
        test_seen: ds.split.test_seen.clone(),
        test_unseen: ds.split.test_unseen.clone(),
    };
    let json = serde_json::to_string_pretty(&split).expect("split serializes");
    write_file(&dir.join(SPLIT_FILE), json.as_bytes())
}
