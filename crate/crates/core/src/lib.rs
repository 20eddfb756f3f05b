//! Point estimates of clustering partitions from posterior similarity
//! matrices.
//!
//! Given MCMC draws of cluster labels, [`build_similarity`] forms the matrix
//! of co-clustering frequencies. That matrix is factorized with non-negative
//! matrix factorization ([`nmf`]); each rank's weight matrix yields a hard
//! partition, and [`select`] keeps the rank whose partition minimizes a
//! decision-theoretic penalty ([`penalties`]). The weights themselves give a
//! soft clustering. Dendrogram-based estimators and an exhaustive oracle live
//! in [`baselines`]; [`simulate`] reproduces the synthetic mixture study.

pub mod baselines;
pub mod error;
pub mod io;
pub mod metrics;
pub mod nmf;
pub mod partition;
pub mod penalties;
pub mod selection;
pub mod similarity;
pub mod simulate;

pub use baselines::{best_in_set, hclust_candidates, medvedovic, oracle, CandidateSet, Linkage};
pub use error::{Error, Result};
pub use metrics::{adjusted_rand, rand, score, variation_of_information, LogBase, Scores};
pub use nmf::{
    extract_hard, extract_soft, factorize, multi_start, NmfConfig, NmfSolution, NmfVariant,
    SoftAssignment,
};
pub use partition::Partition;
pub use penalties::PenaltyKind;
pub use selection::{penalty_curve, select, SelectionOptions, SelectionReport};
pub use similarity::{
    build_similarity, partition_affinity, validate_similarity, LabelSampleSet, SimilarityMatrix,
};
