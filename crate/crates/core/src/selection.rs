//! Rank selection: factorize across a range of ranks, harden each best
//! factorization and keep the rank whose partition scores the lowest penalty.

use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::LogBase;
use crate::nmf::{extract_hard, extract_soft, multi_start, NmfConfig, NmfSolution, NmfSummary, NmfVariant, SoftAssignment};
use crate::partition::Partition;
use crate::penalties::{evaluate_base, PenaltyKind};
use crate::similarity::SimilarityMatrix;

pub const DEFAULT_K_MIN: usize = 2;
pub const DEFAULT_K_MAX: usize = 12;
pub const DEFAULT_STARTS: usize = 10;

#[derive(Debug, Clone)]
pub struct SelectionOptions {
    pub k_range: RangeInclusive<usize>,
    pub variant: NmfVariant,
    pub penalty: PenaltyKind,
    pub starts: usize,
    pub config: NmfConfig,
    pub log_base: LogBase,
    /// Keep the best solution of every rank, not only the chosen one.
    pub keep_all: bool,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        SelectionOptions {
            k_range: DEFAULT_K_MIN..=DEFAULT_K_MAX,
            variant: NmfVariant::LeastSquares,
            penalty: PenaltyKind::Binder,
            starts: DEFAULT_STARTS,
            config: NmfConfig::default(),
            log_base: LogBase::Natural,
            keep_all: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RankResult {
    pub rank: usize,
    pub summary: NmfSummary,
    pub partition: Partition,
    pub penalty: f64,
    /// Best solution at this rank; kept for the chosen rank, or for every
    /// rank when `keep_all` is set.
    pub solution: Option<NmfSolution>,
}

impl RankResult {
    /// Clusters actually used by the hardened partition (may be below the rank).
    pub fn realized_clusters(&self) -> usize {
        self.partition.n_clusters()
    }
}

#[derive(Debug, Clone)]
pub struct SelectionReport {
    pub per_k: Vec<RankResult>,
    pub chosen_k: usize,
    pub chosen_partition: Partition,
    pub chosen_soft: SoftAssignment,
    pub chosen_solution: NmfSolution,
    pub penalty_kind: PenaltyKind,
    pub variant: NmfVariant,
}

impl SelectionReport {
    pub fn chosen(&self) -> &RankResult {
        self.per_k
            .iter()
            .find(|r| r.rank == self.chosen_k)
            .expect("chosen rank is in the report")
    }

    pub fn chosen_penalty(&self) -> f64 {
        self.chosen().penalty
    }
}

/// One point of a penalty curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub k: usize,
    pub penalty: f64,
    pub clusters: usize,
}

/// Fits every rank in the range, scores the hardened partitions, and picks
/// the minimum penalty (ties go to the smaller rank).
pub fn select(pi: &SimilarityMatrix, options: &SelectionOptions) -> Result<SelectionReport> {
    let (lo, hi) = (*options.k_range.start(), *options.k_range.end());
    if lo > hi {
        return Err(Error::EmptyRange { min: lo, max: hi });
    }
    if lo == 0 || hi > pi.n() {
        return Err(Error::InvalidRank {
            rank: if lo == 0 { 0 } else { hi },
            n: pi.n(),
        });
    }

    let mut per_k: Vec<RankResult> = options
        .k_range
        .clone()
        .into_par_iter()
        .map(|rank| {
            let solution = multi_start(pi, rank, options.variant, options.starts, &options.config)?;
            let partition = extract_hard(&solution);
            let penalty = evaluate_base(options.penalty, pi, &partition, options.log_base)?;
            Ok(RankResult {
                rank,
                summary: solution.summary(),
                partition,
                penalty,
                solution: Some(solution),
            })
        })
        .collect::<Result<_>>()?;

    let chosen_idx = per_k
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            a.penalty
                .total_cmp(&b.penalty)
                .then(a.rank.cmp(&b.rank))
                .then(a.summary.seed.cmp(&b.summary.seed))
        })
        .map(|(i, _)| i)
        .expect("non-empty range");

    let chosen_solution = per_k[chosen_idx].solution.clone().expect("solution retained");
    if !options.keep_all {
        for (i, r) in per_k.iter_mut().enumerate() {
            if i != chosen_idx {
                r.solution = None;
            }
        }
    }
    let chosen = &per_k[chosen_idx];
    Ok(SelectionReport {
        chosen_k: chosen.rank,
        chosen_partition: chosen.partition.clone(),
        chosen_soft: extract_soft(&chosen_solution),
        chosen_solution,
        penalty_kind: options.penalty,
        variant: options.variant,
        per_k,
    })
}

/// `(K, penalty)` pairs in rank order.
pub fn penalty_curve(report: &SelectionReport) -> Vec<CurvePoint> {
    report
        .per_k
        .iter()
        .map(|r| CurvePoint {
            k: r.rank,
            penalty: r.penalty,
            clusters: r.realized_clusters(),
        })
        .collect()
}
