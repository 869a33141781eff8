//! LIBSVM-format binary classification data.
//!
//! Lines look like `<label> <idx>:<val> ...` with 1-based, strictly
//! increasing feature indices. Rows are stored sparse with 0-based indices.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How raw labels map onto `{−1, +1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelPolicy {
    /// `0 → −1`, `1 → +1`
    ZeroOne,
    /// `1 → −1`, `2 → +1`
    OneTwo,
    /// `±1` passed through
    PlusMinusOne,
    /// Infer one of the above from the set of labels present.
    Auto,
}

impl FromStr for LabelPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "01" | "zero-one" | "zeroone" => Ok(Self::ZeroOne),
            "12" | "one-two" | "onetwo" => Ok(Self::OneTwo),
            "pm1" | "plus-minus-one" | "+-1" | "signed" => Ok(Self::PlusMinusOne),
            "auto" => Ok(Self::Auto),
            other => Err(Error::Config(format!("unknown label policy {other:?}"))),
        }
    }
}

impl LabelPolicy {
    fn map(self, raw: f64) -> Option<f64> {
        match (self, raw) {
            (Self::ZeroOne, 0.0) => Some(-1.0),
            (Self::ZeroOne, 1.0) => Some(1.0),
            (Self::OneTwo, 1.0) => Some(-1.0),
            (Self::OneTwo, 2.0) => Some(1.0),
            (Self::PlusMinusOne, v) if v == 1.0 || v == -1.0 => Some(v),
            _ => None,
        }
    }

    fn infer(raw: &[f64]) -> Self {
        let has = |v: f64| raw.contains(&v);
        if has(0.0) {
            Self::ZeroOne
        } else if has(2.0) {
            Self::OneTwo
        } else {
            Self::PlusMinusOne
        }
    }
}

/// Where a dataset came from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: Option<PathBuf>,
    pub label_policy: Option<LabelPolicy>,
    pub dim_override: Option<usize>,
}

/// Sparse binary-labelled rows. Each row keeps the id it had in the parsed
/// source, so splits can be traced back.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    d: usize,
    rows: Vec<Vec<(usize, f64)>>,
    labels: Vec<f64>,
    ids: Vec<usize>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(d: usize, rows: Vec<Vec<(usize, f64)>>, labels: Vec<f64>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::NoRows);
        }
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                found: labels.len(),
            });
        }
        for (r, row) in rows.iter().enumerate() {
            let mut prev = None;
            for &(j, _) in row {
                if j >= d {
                    return Err(Error::InvalidParameter(format!(
                        "row {r}: index {j} outside dimension {d}"
                    )));
                }
                if prev.is_some_and(|p| j <= p) {
                    return Err(Error::InvalidParameter(format!(
                        "row {r}: indices not strictly increasing"
                    )));
                }
                prev = Some(j);
            }
        }
        if let Some(y) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
            return Err(Error::InvalidParameter(format!("label {y} is not +1/-1")));
        }
        let ids = (0..rows.len()).collect();
        Ok(Self {
            d,
            rows,
            labels,
            ids,
            provenance: Provenance::default(),
        })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Original row ids in the parsed source.
    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn dense_rows(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|row| {
                let mut dense = vec![0.0; self.d];
                for &(j, v) in row {
                    dense[j] = v;
                }
                dense
            })
            .collect()
    }

    fn subset(&self, picks: &[usize]) -> Self {
        Self {
            d: self.d,
            rows: picks.iter().map(|&k| self.rows[k].clone()).collect(),
            labels: picks.iter().map(|&k| self.labels[k]).collect(),
            ids: picks.iter().map(|&k| self.ids[k]).collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// Serializes back to LIBSVM text, one row per line.
    pub fn to_libsvm(&self) -> String {
        let mut out = String::new();
        for (row, y) in self.rows.iter().zip(&self.labels) {
            out.push_str(if *y > 0.0 { "+1" } else { "-1" });
            for &(j, v) in row {
                let _ = write!(out, " {}:{}", j + 1, v);
            }
            out.push('\n');
        }
        out
    }
}

/// Parses LIBSVM text. `d` is the largest index seen unless `dim` overrides
/// it; the override must cover every index present.
pub fn parse_libsvm<R: BufRead>(source: R, policy: LabelPolicy, dim: Option<usize>) -> Result<Dataset> {
    let mut raw_labels = Vec::new();
    let mut rows = Vec::new();
    let mut label_lines = Vec::new();
    let mut max_index = 0usize;

    for (lineno, line) in source.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let content = line.split('#').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        let mut tokens = tokens_with_columns(content);
        let (col, label_tok) = tokens.next().expect("non-empty line has a token");
        let label: f64 = label_tok.parse().map_err(|_| Error::Parse {
            line: lineno,
            column: col,
            message: format!("bad label {label_tok:?}"),
        })?;
        let mut row: Vec<(usize, f64)> = Vec::new();
        for (col, tok) in tokens {
            let bad = |message: String| Error::Parse {
                line: lineno,
                column: col,
                message,
            };
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| bad(format!("expected <index>:<value>, got {tok:?}")))?;
            let idx: usize = idx.parse().map_err(|_| bad(format!("bad index {idx:?}")))?;
            if idx == 0 {
                return Err(bad("indices are 1-based".into()));
            }
            let val: f64 = val.parse().map_err(|_| bad(format!("bad value {val:?}")))?;
            if !val.is_finite() {
                return Err(bad(format!("non-finite value {val}")));
            }
            if row.last().is_some_and(|&(p, _)| idx - 1 <= p) {
                return Err(bad(format!("index {idx} is not increasing")));
            }
            max_index = max_index.max(idx);
            row.push((idx - 1, val));
        }
        raw_labels.push(label);
        label_lines.push((lineno, label_tok.to_string()));
        rows.push(row);
    }

    if rows.is_empty() {
        return Err(Error::NoRows);
    }

    let resolved = match policy {
        LabelPolicy::Auto => LabelPolicy::infer(&raw_labels),
        p => p,
    };
    let labels = raw_labels
        .iter()
        .zip(&label_lines)
        .map(|(&raw, (line, tok))| {
            resolved.map(raw).ok_or_else(|| Error::UnmappableLabel {
                line: *line,
                label: tok.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let d = match dim {
        Some(d) if d < max_index => {
            return Err(Error::InvalidParameter(format!(
                "dimension override {d} is smaller than max index {max_index}"
            )))
        }
        Some(d) => d,
        None => max_index,
    };
    if d == 0 {
        return Err(Error::InvalidParameter("no features present".into()));
    }

    let mut dataset = Dataset::new(d, rows, labels)?;
    dataset.provenance = Provenance {
        source: None,
        label_policy: Some(resolved),
        dim_override: dim,
    };
    Ok(dataset)
}

pub fn read_libsvm(path: &Path, policy: LabelPolicy, dim: Option<usize>) -> Result<Dataset> {
    let file = File::open(path)?;
    let mut dataset = parse_libsvm(BufReader::new(file), policy, dim)?;
    dataset.provenance.source = Some(path.to_path_buf());
    Ok(dataset)
}

// 1-based character columns of whitespace-separated tokens.
fn tokens_with_columns(line: &str) -> impl Iterator<Item = (usize, &str)> {
    line.split_whitespace().map(move |tok| {
        let offset = tok.as_ptr() as usize - line.as_ptr() as usize;
        (line[..offset].chars().count() + 1, tok)
    })
}

/// Seeded shuffle, then the first `round(ratio·n)` rows become the train set.
pub fn split(dataset: &Dataset, ratio: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "split ratio must be in (0, 1), got {ratio}"
        )));
    }
    let n = dataset.n();
    let n_train = (ratio * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::DegenerateSplit {
            train: n_train,
            test: n - n_train,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((dataset.subset(&order[..n_train]), dataset.subset(&order[n_train..])))
}

/// Per-feature affine map fitted on a training set, treating absent entries
/// as zeros. Features with zero variance are left untouched.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub active: Vec<bool>,
}

impl Standardizer {
    pub fn fit(train: &Dataset) -> Self {
        let d = train.d();
        let n = train.n() as f64;
        let mut sum = vec![0.0; d];
        for row in train.rows() {
            for &(j, v) in row {
                sum[j] += v;
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let mut var = vec![0.0; d];
        let mut present = vec![0usize; d];
        for row in train.rows() {
            for &(j, v) in row {
                var[j] += (v - mean[j]).powi(2);
                present[j] += 1;
            }
        }
        // implicit zeros
        for j in 0..d {
            var[j] += (train.n() - present[j]) as f64 * mean[j] * mean[j];
            var[j] /= n;
        }
        let active: Vec<bool> = var.iter().map(|&v| v > 1e-300).collect();
        let scale = var
            .iter()
            .zip(&active)
            .map(|(&v, &a)| if a { v.sqrt() } else { 1.0 })
            .collect();
        let mean = mean
            .into_iter()
            .zip(&active)
            .map(|(m, &a)| if a { m } else { 0.0 })
            .collect();
        Self { mean, scale, active }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }

    pub fn transform(&self, dataset: &Dataset) -> Dataset {
        let rows = dataset
            .dense_rows()
            .iter()
            .map(|dense| {
                self.apply(dense)
                    .into_iter()
                    .enumerate()
                    .filter(|&(_, v)| v != 0.0)
                    .collect()
            })
            .collect();
        Dataset {
            d: dataset.d,
            rows,
            labels: dataset.labels.clone(),
            ids: dataset.ids.clone(),
            provenance: dataset.provenance.clone(),
        }
    }
}

/// Fits on `train` and applies the same map to both sets.
pub fn standardize(train: &Dataset, test: &Dataset) -> Result<(Dataset, Dataset, Standardizer)> {
    if train.d() != test.d() {
        return Err(Error::DimensionMismatch {
            expected: train.d(),
            found: test.d(),
        });
    }
    let transform = Standardizer::fit(train);
    Ok((transform.transform(train), transform.transform(test), transform))
}
