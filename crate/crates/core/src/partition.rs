use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A hard assignment of `n` observations to clusters.
///
/// Labels are always stored in canonical form: relabeled `0, 1, 2, ...` in
/// order of first appearance. Two partitions therefore compare equal exactly
/// when they induce the same grouping, whatever labels they were built from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Partition {
    labels: Vec<usize>,
    n_clusters: usize,
}

impl Partition {
    /// Builds a partition from arbitrary labels; only equality between labels matters.
    pub fn from_labels<T: Eq + Hash + Copy>(labels: &[T]) -> Self {
        let mut seen: HashMap<T, usize> = HashMap::new();
        let canonical = labels
            .iter()
            .map(|l| {
                let next = seen.len();
                *seen.entry(*l).or_insert(next)
            })
            .collect();
        Partition {
            labels: canonical,
            n_clusters: seen.len(),
        }
    }

    /// Accepts labels that are already a restricted growth string
    /// (`labels[0] == 0`, each label at most one above the running maximum).
    pub(crate) fn from_canonical_unchecked(labels: Vec<usize>) -> Self {
        let n_clusters = labels.iter().max().map_or(0, |m| m + 1);
        debug_assert!(Partition::from_labels(&labels).labels == labels);
        Partition { labels, n_clusters }
    }

    pub fn singletons(n: usize) -> Self {
        Partition::from_canonical_unchecked((0..n).collect())
    }

    pub fn one_cluster(n: usize) -> Self {
        Partition::from_canonical_unchecked(vec![0; n])
    }

    /// Canonical 0-based labels.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Canonical labels shifted to start at 1, the form written to files.
    pub fn labels_one_based(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l + 1).collect()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of distinct clusters actually used.
    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    #[inline]
    pub fn same_cluster(&self, i: usize, j: usize) -> bool {
        self.labels[i] == self.labels[j]
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_clusters];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    pub(crate) fn check_len(&self, n: usize) -> Result<()> {
        if self.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: self.len(),
            });
        }
        Ok(())
    }
}

/// Number of unordered pairs among `n` items, as a float.
#[inline]
pub(crate) fn pairs(n: usize) -> f64 {
    (n as f64) * (n as f64 - 1.0) / 2.0
}
