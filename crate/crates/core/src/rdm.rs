//! RDM construction from activation matrices.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_finite, Rdm};

/// Dissimilarity between two condition patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DissimilarityMetric {
    /// `1 - pearson(a, b)`
    #[default]
    Correlation,
    /// L2 distance
    Euclidean,
    /// `1 - cos(a, b)`
    Cosine,
}

impl DissimilarityMetric {
    /// Single-feature rows are only meaningful for euclidean distance.
    pub fn min_features(self) -> usize {
        match self {
            DissimilarityMetric::Euclidean => 1,
            DissimilarityMetric::Correlation | DissimilarityMetric::Cosine => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DissimilarityMetric::Correlation => "correlation",
            DissimilarityMetric::Euclidean => "euclidean",
            DissimilarityMetric::Cosine => "cosine",
        }
    }
}

impl fmt::Display for DissimilarityMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DissimilarityMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "correlation" => Ok(DissimilarityMetric::Correlation),
            "euclidean" => Ok(DissimilarityMetric::Euclidean),
            "cosine" => Ok(DissimilarityMetric::Cosine),
            other => Err(Error::UnknownMetric(other.to_string())),
        }
    }
}

/// Rows transformed once so each pair costs a single dot product or
/// difference loop. Correlation rows are centred and scaled to unit norm;
/// cosine rows are scaled to unit norm.
fn prepare_rows(matrix: ArrayView2<'_, f64>, metric: DissimilarityMetric) -> Result<Array2<f64>> {
    let mut rows = matrix.to_owned();
    match metric {
        DissimilarityMetric::Euclidean => {}
        DissimilarityMetric::Correlation => {
            let d = rows.ncols() as f64;
            for (i, mut row) in rows.outer_iter_mut().enumerate() {
                let mean = row.sum() / d;
                row.mapv_inplace(|x| x - mean);
                let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm == 0.0 {
                    return Err(Error::ConstantRow(i));
                }
                row.mapv_inplace(|x| x / norm);
            }
        }
        DissimilarityMetric::Cosine => {
            for (i, mut row) in rows.outer_iter_mut().enumerate() {
                let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm == 0.0 {
                    return Err(Error::ZeroNormRow(i));
                }
                row.mapv_inplace(|x| x / norm);
            }
        }
    }
    Ok(rows)
}

fn pair_value(rows: &Array2<f64>, i: usize, j: usize, metric: DissimilarityMetric) -> f64 {
    let a = rows.row(i);
    let b = rows.row(j);
    match metric {
        DissimilarityMetric::Euclidean => {
            a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
        }
        DissimilarityMetric::Correlation | DissimilarityMetric::Cosine => {
            let sim: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
            1.0 - sim.clamp(-1.0, 1.0)
        }
    }
}

fn check_shape(matrix: ArrayView2<'_, f64>, metric: DissimilarityMetric, n_ids: usize) -> Result<()> {
    let (n, d) = matrix.dim();
    if n != n_ids {
        return Err(Error::Shape(format!("{n} rows but {n_ids} condition ids")));
    }
    if n < 3 {
        return Err(Error::TooFewConditions(n));
    }
    if d < metric.min_features() {
        return Err(Error::TooFewFeatures(d));
    }
    Ok(())
}

/// Computes the RDM of a `[n_conditions x n_features]` matrix.
///
/// Each pair is evaluated once and mirrored, so the output is exactly
/// symmetric with a zero diagonal. Work is spread over rayon's current pool;
/// per-pair arithmetic is sequential so results do not depend on the number
/// of workers.
pub fn compute_rdm(
    matrix: ArrayView2<'_, f64>,
    metric: DissimilarityMetric,
    condition_ids: Vec<String>,
) -> Result<Rdm> {
    check_shape(matrix, metric, condition_ids.len())?;
    check_finite(matrix, "activation matrix")?;
    let rows = prepare_rows(matrix, metric)?;
    let n = rows.nrows();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| ((i + 1)..n).map(|j| pair_value(&rows, i, j, metric)).collect())
        .collect();
    let mut values = Array2::zeros((n, n));
    for (i, row) in upper.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let j = i + 1 + off;
            values[[i, j]] = v;
            values[[j, i]] = v;
        }
    }
    Rdm::new(condition_ids, values)
}

/// Sequential variant of [`compute_rdm`] returning only the upper triangle.
/// Used by the searchlight, which parallelises over centres instead.
pub(crate) fn upper_triangle_seq(matrix: ArrayView2<'_, f64>, metric: DissimilarityMetric) -> Result<Vec<f64>> {
    let (n, d) = matrix.dim();
    if n < 3 {
        return Err(Error::TooFewConditions(n));
    }
    if d < metric.min_features() {
        return Err(Error::TooFewFeatures(d));
    }
    let rows = prepare_rows(matrix, metric)?;
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            out.push(pair_value(&rows, i, j, metric));
        }
    }
    Ok(out)
}

/// Row-major upper triangle: `(0,1), (0,2), ..., (0,n-1), (1,2), ...`.
pub fn flatten_upper(rdm: &Rdm) -> Vec<f64> {
    let n = rdm.n_conditions();
    let v = rdm.values();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            out.push(v[[i, j]]);
        }
    }
    out
}

/// Element-wise mean of RDMs over identical condition lists.
pub fn average_rdms(rdms: &[Rdm]) -> Result<Rdm> {
    let first = rdms.first().ok_or_else(|| Error::EmptyInput("no RDMs to average".into()))?;
    for (k, r) in rdms.iter().enumerate().skip(1) {
        if r.condition_ids() != first.condition_ids() {
            return Err(Error::ConditionMismatch(format!("RDM 0 and RDM {k}")));
        }
    }
    Ok(Rdm::from_parts_unchecked(first.condition_ids().to_vec(), mean_values(rdms.iter())))
}

/// Element-wise mean in input order; the sum for each cell is accumulated
/// in the same order so symmetric cells stay bit-identical.
pub(crate) fn mean_values<'a>(rdms: impl Iterator<Item = &'a Rdm> + Clone) -> Array2<f64> {
    let count = rdms.clone().count() as f64;
    let mut rdms = rdms;
    let mut acc = rdms.next().map(|r| r.values().clone()).unwrap_or_default();
    for r in rdms {
        acc += r.values();
    }
    acc.mapv_inplace(|x| x / count);
    acc
}
