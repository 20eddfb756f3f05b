//! External comparison of two partitions: Rand, adjusted Rand and
//! variation of information.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::partition::{pairs, Partition};
use crate::similarity::SimilarityMatrix;

/// Logarithm base shared by the VI metric and the VI penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    Natural,
    Two,
}

impl LogBase {
    #[inline]
    pub fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Natural => x.ln(),
            LogBase::Two => x.log2(),
        }
    }
}

/// `x log x` with the `0 log 0 = 0` convention.
#[inline]
fn xlogx(x: f64, base: LogBase) -> f64 {
    if x > 0.0 {
        x * base.log(x)
    } else {
        0.0
    }
}

/// Binder loss with unit weights, generalized to a fractional reference.
///
/// `together(i, j)` is the (possibly expected) indicator that `i` and `j`
/// share a cluster in the reference; the loss counts, over pairs `i < j`,
/// reference co-clustering that `candidate` splits plus candidate
/// co-clustering that the reference splits.
pub fn binder_loss_with<F>(candidate: &Partition, together: F) -> f64
where
    F: Fn(usize, usize) -> f64,
{
    let n = candidate.len();
    let mut loss = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let t = together(i, j);
            if candidate.same_cluster(i, j) {
                loss += 1.0 - t;
            } else {
                loss += t;
            }
        }
    }
    loss
}

/// Number of pairs on which `a` and `b` disagree about co-clustering.
pub fn binder_loss(a: &Partition, b: &Partition) -> Result<f64> {
    a.check_len(b.len())?;
    Ok(binder_loss_with(b, |i, j| f64::from(u8::from(a.same_cluster(i, j)))))
}

/// Rand index, computed as `1 - L / C(n, 2)` from the Binder loss `L`.
pub fn rand(a: &Partition, b: &Partition) -> Result<f64> {
    let loss = binder_loss(a, b)?;
    let n = a.len();
    if n < 2 {
        return Ok(1.0);
    }
    Ok(1.0 - loss / pairs(n))
}

/// Rand index of `c` against the posterior, with each pairwise indicator
/// replaced by its posterior co-clustering probability.
pub fn expected_rand(pi: &SimilarityMatrix, c: &Partition) -> Result<f64> {
    c.check_len(pi.n())?;
    let loss = binder_loss_with(c, |i, j| pi.get(i, j));
    Ok(1.0 - loss / pairs(c.len()))
}

/// Contingency table: entry `(r, s)` counts observations in cluster `r` of
/// `a` and cluster `s` of `b` (canonical labels).
pub fn contingency(a: &Partition, b: &Partition) -> Result<Array2<usize>> {
    a.check_len(b.len())?;
    let mut table = Array2::zeros((a.n_clusters(), b.n_clusters()));
    for (&r, &s) in a.labels().iter().zip(b.labels()) {
        table[[r, s]] += 1;
    }
    Ok(table)
}

/// Sum of `C(x, 2)` over counts.
fn pair_count<'a>(counts: impl IntoIterator<Item = &'a usize>) -> f64 {
    counts.into_iter().map(|&x| pairs(x)).sum()
}

/// Adjusted Rand index.
///
/// When the chance-corrected denominator vanishes (both partitions
/// all-singletons, or both one cluster) the index is 1 for identical
/// groupings and 0 otherwise.
pub fn adjusted_rand(a: &Partition, b: &Partition) -> Result<f64> {
    let table = contingency(a, b)?;
    let n = a.len();
    let total = pairs(n);
    let index = pair_count(table.iter());
    let sum_a = pair_count(a.cluster_sizes().iter());
    let sum_b = pair_count(b.cluster_sizes().iter());
    let expected = if total > 0.0 { sum_a * sum_b / total } else { 0.0 };
    let denom = 0.5 * (sum_a + sum_b) - expected;
    if denom == 0.0 {
        return Ok(if a == b { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / denom)
}

/// Variation of information between two partitions.
pub fn variation_of_information(a: &Partition, b: &Partition) -> Result<f64> {
    variation_of_information_base(a, b, LogBase::Natural)
}

pub fn variation_of_information_base(a: &Partition, b: &Partition, base: LogBase) -> Result<f64> {
    let table = contingency(a, b)?;
    let n = a.len() as f64;
    if a.is_empty() {
        return Ok(0.0);
    }
    let h_a: f64 = a.cluster_sizes().iter().map(|&x| xlogx(x as f64 / n, base)).sum();
    let h_b: f64 = b.cluster_sizes().iter().map(|&x| xlogx(x as f64 / n, base)).sum();
    let joint: f64 = table.iter().map(|&x| xlogx(x as f64 / n, base)).sum();
    // Rounding can leave a tiny negative value for identical partitions.
    Ok((h_a + h_b - 2.0 * joint).max(0.0))
}

/// The three external metrics bundled together, as emitted by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub rand: f64,
    pub adjusted_rand: f64,
    pub vi: f64,
}

pub fn score(estimate: &Partition, truth: &Partition, base: LogBase) -> Result<Scores> {
    Ok(Scores {
        rand: rand(truth, estimate)?,
        adjusted_rand: adjusted_rand(truth, estimate)?,
        vi: variation_of_information_base(truth, estimate, base)?,
    })
}
