//! Conventional estimators: the best partition in a search space under a
//! penalty (MinBinder, MaxPEAR, MinVI over dendrogram cuts), the
//! Medvedovic complete-linkage cut, and exhaustive enumeration for small `n`.

use std::collections::HashSet;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::Partition;
use crate::penalties::{evaluate, PenaltyKind};
use crate::similarity::SimilarityMatrix;

/// Largest `n` accepted by [`enumerate_partitions`] (`Bell(12) = 4,213,597`).
pub const MAX_ENUMERATION: usize = 12;

/// Default Medvedovic cut height on the dissimilarity `1 - pi`.
pub const DEFAULT_MEDVEDOVIC_CUT: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Average,
    Complete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    DendrogramAverage,
    DendrogramComplete,
    Exhaustive,
    UserSupplied,
}

/// A search space of distinct partitions of the same `n` items.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    partitions: Vec<Partition>,
    provenance: Provenance,
}

impl CandidateSet {
    /// Drops repeated groupings, keeping first occurrences in order.
    pub fn new(partitions: Vec<Partition>, provenance: Provenance) -> Result<Self> {
        if let Some(first) = partitions.first() {
            let n = first.len();
            for p in &partitions {
                p.check_len(n)?;
            }
        }
        let mut seen = HashSet::new();
        let partitions = partitions
            .into_iter()
            .filter(|p| seen.insert(p.clone()))
            .collect();
        Ok(CandidateSet {
            partitions,
            provenance,
        })
    }

    pub fn partitions(&self) -> &[Partition] {
        &self.partitions
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.partitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partitions.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    /// Smallest observation index in each merged cluster, `left < right`.
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

/// Agglomerative clustering history: `n - 1` merges in order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    n: usize,
    merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    /// Partition after applying the first `steps` merges.
    pub fn partition_after(&self, steps: usize) -> Partition {
        let mut labels: Vec<usize> = (0..self.n).collect();
        for m in &self.merges[..steps] {
            for l in labels.iter_mut() {
                if *l == m.right {
                    *l = m.left;
                }
            }
        }
        Partition::from_labels(&labels)
    }

    /// All `n` cuts, from all-singletons to one cluster.
    pub fn cuts(&self) -> Vec<Partition> {
        let mut labels: Vec<usize> = (0..self.n).collect();
        let mut out = Vec::with_capacity(self.n);
        out.push(Partition::from_labels(&labels));
        for m in &self.merges {
            for l in labels.iter_mut() {
                if *l == m.right {
                    *l = m.left;
                }
            }
            out.push(Partition::from_labels(&labels));
        }
        out
    }

    /// Groups formed by every merge up to the first one above `height`.
    pub fn cut_at(&self, height: f64) -> Partition {
        let steps = self
            .merges
            .iter()
            .position(|m| m.height > height)
            .unwrap_or(self.merges.len());
        self.partition_after(steps)
    }
}

/// Agglomerative clustering of a dissimilarity matrix.
///
/// Each cluster is identified by its smallest member. Among pairs at the
/// minimum distance, the lexicographically smallest pair of identifiers merges.
pub fn hierarchical(dissimilarity: &Array2<f64>, linkage: Linkage) -> Dendrogram {
    let n = dissimilarity.nrows();
    let mut dist = dissimilarity.clone();
    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));

    for _ in 1..n {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in (0..n).filter(|&i| active[i]) {
            for j in ((i + 1)..n).filter(|&j| active[j]) {
                let d = dist[[i, j]];
                if best.is_none_or(|(_, _, bd)| d < bd) {
                    best = Some((i, j, d));
                }
            }
        }
        let (i, j, height) = best.expect("two active clusters remain");
        let (si, sj) = (size[i] as f64, size[j] as f64);
        for k in (0..n).filter(|&k| active[k] && k != i && k != j) {
            let (dik, djk) = (dist[[i.min(k), i.max(k)]], dist[[j.min(k), j.max(k)]]);
            let d = match linkage {
                Linkage::Average => (si * dik + sj * djk) / (si + sj),
                Linkage::Complete => dik.max(djk),
            };
            dist[[i.min(k), i.max(k)]] = d;
        }
        active[j] = false;
        size[i] += size[j];
        merges.push(Merge {
            left: i,
            right: j,
            height,
            size: size[i],
        });
    }
    Dendrogram { n, merges }
}

fn dissimilarity(pi: &SimilarityMatrix) -> Array2<f64> {
    pi.values().mapv(|v| 1.0 - v)
}

/// Every distinct cut of the dendrogram built on `1 - pi`.
pub fn hclust_candidates(pi: &SimilarityMatrix, linkage: Linkage) -> CandidateSet {
    let tree = hierarchical(&dissimilarity(pi), linkage);
    let provenance = match linkage {
        Linkage::Average => Provenance::DendrogramAverage,
        Linkage::Complete => Provenance::DendrogramComplete,
    };
    CandidateSet::new(tree.cuts(), provenance).expect("cuts share one length")
}

/// Relative width within which two penalty values count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

fn tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

/// Running minimizer with the shared tie rule: fewest clusters, then the
/// smallest canonical labels.
#[derive(Debug, Default)]
struct Best {
    best: Option<(Partition, f64)>,
}

impl Best {
    fn offer(&mut self, p: &Partition, v: f64) {
        let better = match &self.best {
            None => true,
            Some((bp, bv)) => {
                if tied(v, *bv) {
                    (p.n_clusters(), p.labels()) < (bp.n_clusters(), bp.labels())
                } else {
                    v < *bv
                }
            }
        };
        if better {
            self.best = Some((p.clone(), v));
        }
    }
}

/// Candidate minimizing the penalty. Values within a relative `1e-12` are
/// ties, resolved toward fewer clusters, then smaller canonical labels.
pub fn best_in_set(
    pi: &SimilarityMatrix,
    set: &CandidateSet,
    penalty: PenaltyKind,
) -> Result<(Partition, f64)> {
    if set.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let values: Vec<f64> = set
        .partitions()
        .par_iter()
        .map(|p| evaluate(penalty, pi, p))
        .collect::<Result<_>>()?;
    let mut best = Best::default();
    for (p, &v) in set.partitions().iter().zip(&values) {
        best.offer(p, v);
    }
    Ok(best.best.expect("non-empty set"))
}

/// Exhaustive minimizer over all partitions of `pi`'s items, without
/// materializing the search space.
pub fn oracle(pi: &SimilarityMatrix, penalty: PenaltyKind) -> Result<(Partition, f64)> {
    let mut best = Best::default();
    for p in SetPartitions::new(pi.n())? {
        best.offer(&p, evaluate(penalty, pi, &p)?);
    }
    best.best.ok_or(Error::EmptyCandidates)
}

/// Complete-linkage dendrogram on `1 - pi` cut at height `cut`.
pub fn medvedovic(pi: &SimilarityMatrix, cut: f64) -> Result<Partition> {
    if !(cut > 0.0 && cut <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "Medvedovic cut must lie in (0, 1], got {cut}"
        )));
    }
    Ok(hierarchical(&dissimilarity(pi), Linkage::Complete).cut_at(cut))
}

/// Iterator over all set partitions of `n` items as restricted growth
/// strings, in lexicographic order.
#[derive(Debug, Clone)]
pub struct SetPartitions {
    labels: Vec<usize>,
    /// `maxes[i]` is the largest label among `labels[..=i]`.
    maxes: Vec<usize>,
    done: bool,
}

impl SetPartitions {
    pub fn new(n: usize) -> Result<Self> {
        if n > MAX_ENUMERATION {
            return Err(Error::EnumerationLimit {
                n,
                max: MAX_ENUMERATION,
            });
        }
        Ok(SetPartitions {
            labels: vec![0; n],
            maxes: vec![0; n],
            done: false,
        })
    }
}

impl Iterator for SetPartitions {
    type Item = Partition;

    fn next(&mut self) -> Option<Partition> {
        if self.done {
            return None;
        }
        let current = Partition::from_canonical_unchecked(self.labels.clone());
        // Advance: bump the rightmost position that may still grow, reset the tail.
        let n = self.labels.len();
        let mut pos = None;
        for i in (1..n).rev() {
            if self.labels[i] <= self.maxes[i - 1] {
                pos = Some(i);
                break;
            }
        }
        match pos {
            None => self.done = true,
            Some(i) => {
                self.labels[i] += 1;
                self.maxes[i] = self.maxes[i - 1].max(self.labels[i]);
                for k in (i + 1)..n {
                    self.labels[k] = 0;
                    self.maxes[k] = self.maxes[i];
                }
            }
        }
        Some(current)
    }
}

/// All partitions of `n` items (`Bell(n)` of them).
pub fn enumerate_partitions(n: usize) -> Result<CandidateSet> {
    let partitions: Vec<Partition> = SetPartitions::new(n)?.collect();
    Ok(CandidateSet {
        partitions,
        provenance: Provenance::Exhaustive,
    })
}

fn overflow(what: &str) -> Error {
    Error::Overflow(what.to_string())
}

/// Stirling number of the second kind, from the alternating binomial sum in
/// exact integer arithmetic.
pub fn stirling2(n: usize, k: usize) -> Result<u128> {
    let exp = u32::try_from(n).map_err(|_| overflow("stirling2 exponent"))?;
    let mut sum: i128 = 0;
    let mut binom: i128 = 1;
    for j in 0..=k {
        if j > 0 {
            binom = binom
                .checked_mul((k - j + 1) as i128)
                .ok_or_else(|| overflow("binomial coefficient"))?
                / j as i128;
        }
        let power = (j as i128)
            .checked_pow(exp)
            .ok_or_else(|| overflow("stirling2 power"))?;
        let term = binom
            .checked_mul(power)
            .ok_or_else(|| overflow("stirling2 term"))?;
        sum = if (k - j) % 2 == 0 {
            sum.checked_add(term)
        } else {
            sum.checked_sub(term)
        }
        .ok_or_else(|| overflow("stirling2 sum"))?;
    }
    let mut factorial: i128 = 1;
    for f in 2..=k as i128 {
        factorial = factorial
            .checked_mul(f)
            .ok_or_else(|| overflow("factorial"))?;
    }
    Ok((sum / factorial) as u128)
}

/// Bell number as the sum of Stirling numbers over all block counts.
pub fn bell(n: usize) -> Result<u128> {
    (0..=n).try_fold(0u128, |acc, k| {
        acc.checked_add(stirling2(n, k)?)
            .ok_or_else(|| overflow("bell"))
    })
}
