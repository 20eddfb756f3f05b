//! Pairwise posterior similarity matrices.
//!
//! Entry `(i, j)` is the fraction of MCMC draws that put observations `i`
//! and `j` in the same cluster. The diagonal is stored explicitly as 1.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};
pub use crate::partition::Partition;

/// `M` MCMC draws of the `n`-vector of cluster labels.
///
/// Labels are arbitrary integers; only equality within a draw is meaningful.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSampleSet {
    draws: Vec<Vec<i64>>,
    n: usize,
}

impl LabelSampleSet {
    pub fn new(draws: Vec<Vec<i64>>) -> Result<Self> {
        let first = draws.first().ok_or(Error::NoDraws)?;
        let n = first.len();
        if let Some((m, row)) = draws.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(Error::InputShape(format!(
                "draw {m} has {} labels, draw 0 has {n}",
                row.len()
            )));
        }
        if n < 2 {
            return Err(Error::InputShape(format!(
                "need at least 2 observations per draw, got {n}"
            )));
        }
        Ok(LabelSampleSet { draws, n })
    }

    pub fn draws(&self) -> &[Vec<i64>] {
        &self.draws
    }

    /// Number of draws `M`.
    pub fn n_draws(&self) -> usize {
        self.draws.len()
    }

    /// Number of observations `n`.
    pub fn n_obs(&self) -> usize {
        self.n
    }
}

/// Symmetric `n x n` matrix of co-clustering probabilities with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    values: Array2<f64>,
}

impl SimilarityMatrix {
    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.values
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    /// Sum of the strict upper triangle.
    pub fn upper_sum(&self) -> f64 {
        let n = self.n();
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += self.values[[i, j]];
            }
        }
        s
    }

    /// Frobenius distance to another `n x n` matrix, diagonal included.
    pub fn frobenius_distance(&self, other: ArrayView2<'_, f64>) -> Result<f64> {
        if other.dim() != self.values.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                found: other.nrows(),
            });
        }
        Ok(self
            .values
            .iter()
            .zip(other.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }
}

/// Estimates the similarity matrix as the co-assignment frequency over all draws.
pub fn build_similarity(samples: &LabelSampleSet) -> SimilarityMatrix {
    let n = samples.n_obs();
    let m = samples.n_draws() as f64;
    let draws = samples.draws();

    let rows: Vec<Vec<u64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut counts = vec![0u64; n];
            for draw in draws {
                let li = draw[i];
                for (j, &lj) in draw.iter().enumerate().skip(i + 1) {
                    counts[j] += u64::from(li == lj);
                }
            }
            counts
        })
        .collect();

    let mut values = Array2::<f64>::eye(n);
    for (i, counts) in rows.iter().enumerate() {
        for j in (i + 1)..n {
            let v = counts[j] as f64 / m;
            values[[i, j]] = v;
            values[[j, i]] = v;
        }
    }
    SimilarityMatrix { values }
}

/// Binary co-clustering matrix of a single partition.
pub fn partition_affinity(c: &Partition) -> SimilarityMatrix {
    let n = c.len();
    let labels = c.labels();
    let values = Array2::from_shape_fn((n, n), |(i, j)| {
        if labels[i] == labels[j] {
            1.0
        } else {
            0.0
        }
    });
    SimilarityMatrix { values }
}

/// Checks a raw matrix against the similarity invariants, repairing
/// deviations no larger than `tolerance`.
///
/// Off-diagonal pairs are averaged, the diagonal is set to 1 and entries are
/// clamped to `[0, 1]`. Anything further out than `tolerance` is an error
/// naming the entry.
pub fn validate_similarity(values: Array2<f64>, tolerance: f64) -> Result<SimilarityMatrix> {
    let (rows, cols) = values.dim();
    if rows != cols {
        return Err(Error::InputShape(format!(
            "similarity matrix must be square, got {rows}x{cols}"
        )));
    }
    if rows == 0 {
        return Err(Error::InputShape("similarity matrix is empty".into()));
    }
    if let Some(((row, col), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite { row, col });
    }

    let n = rows;
    let mut values = values;
    for i in 0..n {
        let d = values[[i, i]];
        if (d - 1.0).abs() > tolerance {
            return Err(Error::Validation {
                row: i,
                col: i,
                reason: format!("diagonal entry {d} is not 1"),
            });
        }
        values[[i, i]] = 1.0;
        for j in (i + 1)..n {
            let (a, b) = (values[[i, j]], values[[j, i]]);
            if (a - b).abs() > tolerance {
                return Err(Error::Validation {
                    row: i,
                    col: j,
                    reason: format!("asymmetric pair {a} vs {b}"),
                });
            }
            let mut v = if a == b { a } else { 0.5 * (a + b) };
            if v < -tolerance || v > 1.0 + tolerance {
                return Err(Error::Validation {
                    row: i,
                    col: j,
                    reason: format!("value {v} outside [0, 1]"),
                });
            }
            v = v.clamp(0.0, 1.0);
            values[[i, j]] = v;
            values[[j, i]] = v;
        }
    }
    Ok(SimilarityMatrix { values })
}
