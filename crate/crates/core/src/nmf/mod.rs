//! Non-negative factorization of a similarity matrix, `pi ~ W H`, and the
//! hard and soft partitions read off the weight matrix `H`.
//!
//! Four models are supported:
//!
//! * least squares, `||pi - W H||_F^2`;
//! * generalized Kullback-Leibler divergence `D(pi || W H)`;
//! * non-smooth, `||pi - W S H||_F^2` with the smoothing matrix
//!   `S = (1 - theta) I + (theta / K) 11'`;
//! * offset, `||pi - W H - b 1'||_F^2` with a non-negative intercept `b`.
//!
//! All are fitted with multiplicative updates from a seeded random start,
//! which keeps every factor non-negative and the objective non-increasing.

mod updates;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::Partition;
use crate::similarity::SimilarityMatrix;

pub use updates::{
    kl_divergence, offset_reconstruction, smoothing_matrix, squared_error, update_step_kl,
    update_step_ls, update_step_ns, update_step_offset, EPSILON_FLOOR,
};

/// Default smoothing strength of the non-smooth model.
pub const DEFAULT_THETA: f64 = 0.5;

/// Number of iterations the relative-decrease stopping rule looks back over.
pub const CONVERGENCE_WINDOW: usize = 10;

/// Objective values at or below this multiple of `||pi||_F^2` count as an
/// exact fit.
const EXACT_FIT: f64 = 1e-20;

/// Below this multiple of `||pi||_F^2` the squared error is recomputed from
/// the reconstruction instead of the expanded trace form.
const NEAR_EXACT: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum NmfVariant {
    #[serde(rename = "ls")]
    LeastSquares,
    #[serde(rename = "kl")]
    KullbackLeibler,
    #[serde(rename = "ns")]
    NonSmooth { theta: f64 },
    Offset,
}

impl NmfVariant {
    pub fn name(&self) -> &'static str {
        match self {
            NmfVariant::LeastSquares => "ls",
            NmfVariant::KullbackLeibler => "kl",
            NmfVariant::NonSmooth { .. } => "ns",
            NmfVariant::Offset => "offset",
        }
    }

    /// All four models, the non-smooth one at the default theta.
    pub fn all() -> [NmfVariant; 4] {
        [
            NmfVariant::LeastSquares,
            NmfVariant::KullbackLeibler,
            NmfVariant::NonSmooth {
                theta: DEFAULT_THETA,
            },
            NmfVariant::Offset,
        ]
    }

    /// Parses `ls|kl|ns|offset`; `theta` applies to `ns` only.
    pub fn parse(name: &str, theta: f64) -> Result<Self> {
        let v = match name.to_ascii_lowercase().as_str() {
            "ls" => NmfVariant::LeastSquares,
            "kl" => NmfVariant::KullbackLeibler,
            "ns" => NmfVariant::NonSmooth { theta },
            "offset" => NmfVariant::Offset,
            other => {
                return Err(Error::InvalidParameter(format!("unknown NMF variant '{other}'")))
            }
        };
        v.validate()?;
        Ok(v)
    }

    fn validate(&self) -> Result<()> {
        if let NmfVariant::NonSmooth { theta } = *self {
            if !(0.0..=1.0).contains(&theta) {
                return Err(Error::InvalidParameter(format!(
                    "theta must lie in [0, 1], got {theta}"
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for NmfVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "nmf-{}", self.name())
    }
}

impl FromStr for NmfVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NmfVariant::parse(s, DEFAULT_THETA)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NmfConfig {
    pub max_iters: usize,
    pub rel_tolerance: f64,
    pub seed: u64,
}

impl Default for NmfConfig {
    fn default() -> Self {
        NmfConfig {
            max_iters: 2000,
            rel_tolerance: 1e-6,
            seed: 0,
        }
    }
}

impl NmfConfig {
    pub fn with_seed(self, seed: u64) -> Self {
        NmfConfig { seed, ..self }
    }
}

/// Starting point for a factorization run.
#[derive(Debug, Clone, PartialEq)]
pub struct Factors {
    pub w: Array2<f64>,
    pub h: Array2<f64>,
    /// Offset model only.
    pub offset: Option<Array1<f64>>,
}

impl Factors {
    /// Uniform `(0, 1]` entries scaled by `sqrt(mean(pi) / K)`, drawn from a
    /// generator seeded with `seed`: `W` row-major, then `H` row-major.
    /// The offset model starts its intercept at a tenth of the row means.
    pub fn random(pi: &SimilarityMatrix, rank: usize, variant: &NmfVariant, seed: u64) -> Self {
        let n = pi.n();
        let values = pi.values();
        let scale = (values.mean().unwrap_or(1.0) / rank as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || (1.0 - rng.random::<f64>()) * scale;
        let w = Array2::from_shape_simple_fn((n, rank), &mut draw);
        let h = Array2::from_shape_simple_fn((rank, n), &mut draw);
        let offset = matches!(variant, NmfVariant::Offset)
            .then(|| values.mean_axis(Axis(1)).unwrap() * 0.1);
        Factors { w, h, offset }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmfSolution {
    pub w: Array2<f64>,
    pub h: Array2<f64>,
    pub variant: NmfVariant,
    pub offset: Option<Array1<f64>>,
    /// Objective at the start and after every iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
}

impl NmfSolution {
    pub fn rank(&self) -> usize {
        self.h.nrows()
    }

    /// Final value of the model's own objective.
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the initial value")
    }

    pub fn reconstruction(&self) -> Array2<f64> {
        reconstruct(&self.variant, &self.w, &self.h, self.offset.as_ref())
    }

    pub fn summary(&self) -> NmfSummary {
        NmfSummary {
            rank: self.rank(),
            objective: self.objective(),
            iterations: self.iterations,
            converged: self.converged,
            seed: self.seed,
        }
    }
}

/// The scalar facts of a run, as carried in reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NmfSummary {
    pub rank: usize,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
}

fn reconstruct(
    variant: &NmfVariant,
    w: &Array2<f64>,
    h: &Array2<f64>,
    offset: Option<&Array1<f64>>,
) -> Array2<f64> {
    match *variant {
        NmfVariant::LeastSquares | NmfVariant::KullbackLeibler => updates::matmul(w.view(), h.view()),
        NmfVariant::NonSmooth { theta } => {
            let s = smoothing_matrix(h.nrows(), theta);
            updates::matmul(updates::matmul(w.view(), s.view()).view(), h.view())
        }
        NmfVariant::Offset => {
            offset_reconstruction(w.view(), h.view(), offset.expect("offset model").view())
        }
    }
}

fn objective(variant: &NmfVariant, pi: ArrayView2<f64>, recon: &Array2<f64>) -> f64 {
    match variant {
        NmfVariant::KullbackLeibler => kl_divergence(pi, recon),
        _ => squared_error(pi, recon),
    }
}

fn check_rank(n: usize, rank: usize) -> Result<()> {
    if rank == 0 || rank > n {
        return Err(Error::InvalidRank { rank, n });
    }
    Ok(())
}

/// Fits one model from a seeded random start.
///
/// Stops when the objective has dropped by less than `rel_tolerance` relative
/// to its value [`CONVERGENCE_WINDOW`] iterations earlier, or when the fit is
/// exact. Hitting `max_iters` first is not an error: the solution comes back
/// with `converged == false`.
pub fn factorize(
    pi: &SimilarityMatrix,
    rank: usize,
    variant: NmfVariant,
    config: &NmfConfig,
) -> Result<NmfSolution> {
    check_rank(pi.n(), rank)?;
    variant.validate()?;
    let init = Factors::random(pi, rank, &variant, config.seed);
    factorize_from(pi, init, variant, config)
}

/// Fits one model from the given starting factors.
pub fn factorize_from(
    pi: &SimilarityMatrix,
    init: Factors,
    variant: NmfVariant,
    config: &NmfConfig,
) -> Result<NmfSolution> {
    let n = pi.n();
    let rank = init.h.nrows();
    check_rank(n, rank)?;
    variant.validate()?;
    if init.w.dim() != (n, rank) || init.h.dim() != (rank, n) {
        return Err(Error::InputShape(format!(
            "factors {:?} x {:?} do not fit a {n}x{n} matrix",
            init.w.dim(),
            init.h.dim()
        )));
    }
    let Factors { mut w, mut h, offset } = init;
    let mut offset = match variant {
        NmfVariant::Offset => Some(offset.unwrap_or_else(|| Array1::from_elem(n, EPSILON_FLOOR))),
        _ => None,
    };
    for m in [&w, &h] {
        if let Some(((row, col), _)) = m.indexed_iter().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(Error::NonFinite { row, col });
        }
    }

    let values = pi.values();
    let pi_sq = values.iter().map(|v| v * v).sum::<f64>();
    let scale = pi_sq.max(1.0);
    let smoothing = match variant {
        NmfVariant::NonSmooth { theta } => Some(smoothing_matrix(rank, theta)),
        _ => None,
    };

    let mut trace = Vec::with_capacity(config.max_iters.min(4096) + 1);
    trace.push(objective(&variant, values, &reconstruct(&variant, &w, &h, offset.as_ref())));
    let mut converged = has_converged(&trace, config.rel_tolerance, scale);

    while !converged && trace.len() <= config.max_iters {
        let fast = match variant {
            NmfVariant::LeastSquares => updates::ls_step_with_error(values, &mut w, &mut h, Some(pi_sq), true),
            NmfVariant::KullbackLeibler => {
                updates::kl_step_in_place(values, &mut w, &mut h);
                None
            }
            NmfVariant::NonSmooth { .. } => updates::ns_step_with_error(
                values,
                &mut w,
                &mut h,
                smoothing.as_ref().expect("set for non-smooth").view(),
                Some(pi_sq),
                true,
            ),
            NmfVariant::Offset => {
                updates::offset_step_in_place(
                    values,
                    &mut w,
                    &mut h,
                    offset.as_mut().expect("set for offset"),
                );
                None
            }
        };
        // the expanded form cancels badly near an exact fit
        let obj = match fast {
            Some(v) if v > NEAR_EXACT * pi_sq => v,
            _ => objective(&variant, values, &reconstruct(&variant, &w, &h, offset.as_ref())),
        };
        if !obj.is_finite() {
            return Err(Error::NonFinite { row: 0, col: 0 });
        }
        trace.push(obj);
        converged = has_converged(&trace, config.rel_tolerance, scale);
    }

    Ok(NmfSolution {
        w,
        h,
        variant,
        offset,
        iterations: trace.len() - 1,
        objective_trace: trace,
        converged,
        seed: config.seed,
    })
}

fn has_converged(trace: &[f64], rel_tolerance: f64, scale: f64) -> bool {
    let last = *trace.last().unwrap();
    if last <= EXACT_FIT * scale {
        return true;
    }
    let t = trace.len() - 1;
    if t < CONVERGENCE_WINDOW {
        return false;
    }
    let earlier = trace[t - CONVERGENCE_WINDOW];
    earlier - last <= rel_tolerance * earlier
}

/// Runs `starts` factorizations with seeds `seed, seed + 1, ...` and keeps
/// the one with the lowest objective (ties go to the smaller seed).
/// Runs execute in parallel; the result does not depend on the thread count.
pub fn multi_start(
    pi: &SimilarityMatrix,
    rank: usize,
    variant: NmfVariant,
    starts: usize,
    config: &NmfConfig,
) -> Result<NmfSolution> {
    if starts == 0 {
        return Err(Error::InvalidParameter("starts must be at least 1".into()));
    }
    let runs: Vec<NmfSolution> = (0..starts as u64)
        .into_par_iter()
        .map(|s| factorize(pi, rank, variant, &config.with_seed(config.seed.wrapping_add(s))))
        .collect::<Result<_>>()?;
    Ok(runs
        .into_iter()
        .min_by(|a, b| {
            a.objective()
                .total_cmp(&b.objective())
                .then(a.seed.cmp(&b.seed))
        })
        .expect("at least one start"))
}

/// Hard partition: each observation goes to the row of its `H` column with
/// the largest weight, the lowest row winning ties. Empty components vanish.
pub fn extract_hard(solution: &NmfSolution) -> Partition {
    Partition::from_labels(&argmax_columns(solution.h.view()))
}

fn argmax_columns(h: ArrayView2<f64>) -> Vec<usize> {
    h.columns()
        .into_iter()
        .map(|col| {
            let mut best = 0;
            for (k, &v) in col.iter().enumerate() {
                if v > col[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// `n x K` matrix of cluster membership probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftAssignment {
    probs: Array2<f64>,
}

impl SoftAssignment {
    pub fn probs(&self) -> ArrayView2<'_, f64> {
        self.probs.view()
    }

    pub fn n(&self) -> usize {
        self.probs.nrows()
    }

    pub fn n_components(&self) -> usize {
        self.probs.ncols()
    }

    /// Component with the highest probability per observation, lowest index on ties.
    pub fn argmax(&self) -> Vec<usize> {
        argmax_columns(self.probs.t())
    }

    pub fn max_membership(&self, i: usize) -> f64 {
        self.probs.row(i).iter().copied().fold(0.0, f64::max)
    }
}

/// Soft partition: the columns of `H` normalized to sum to one.
pub fn extract_soft(solution: &NmfSolution) -> SoftAssignment {
    let h = &solution.h;
    let mut probs = h.t().to_owned();
    for mut row in probs.rows_mut() {
        let total = row.sum();
        row /= total;
    }
    SoftAssignment { probs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::similarity::{partition_affinity, validate_similarity};
    use ndarray::array;

    fn blocks() -> SimilarityMatrix {
        partition_affinity(&Partition::from_labels(&[1, 1, 2, 2]))
    }

    fn solution_with_h(h: Array2<f64>) -> NmfSolution {
        let n = h.ncols();
        let k = h.nrows();
        NmfSolution {
            w: Array2::ones((n, k)),
            h,
            variant: NmfVariant::LeastSquares,
            offset: None,
            objective_trace: vec![0.0],
            iterations: 0,
            converged: true,
            seed: 0,
        }
    }

    #[test]
    fn rank_one_all_ones_is_exact() {
        let pi = validate_similarity(Array2::ones((5, 5)), 0.0).unwrap();
        let sol = factorize(&pi, 1, NmfVariant::LeastSquares, &NmfConfig::default()).unwrap();
        assert!(sol.objective() < 1e-8);
        assert!(sol.converged);
        for v in sol.reconstruction().iter() {
            assert!((v - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn block_matrix_recovered_by_multi_start() {
        let sol = multi_start(&blocks(), 2, NmfVariant::LeastSquares, 10, &NmfConfig::default())
            .unwrap();
        assert!(sol.objective() < 1e-8, "objective {}", sol.objective());
        assert_eq!(extract_hard(&sol), Partition::from_labels(&[1, 1, 2, 2]));
    }

    #[test]
    fn exact_start_is_a_fixed_point() {
        let pi = blocks();
        let init = Factors {
            w: array![[1.0, 1e-12], [1.0, 1e-12], [1e-12, 1.0], [1e-12, 1.0]],
            h: array![[1.0, 1.0, 1e-12, 1e-12], [1e-12, 1e-12, 1.0, 1.0]],
            offset: None,
        };
        let cfg = NmfConfig {
            max_iters: 1,
            ..NmfConfig::default()
        };
        let sol = factorize_from(&pi, init, NmfVariant::LeastSquares, &cfg).unwrap();
        let t = &sol.objective_trace;
        assert!((t[t.len() - 1] - t[0]).abs() < 1e-12);
    }

    #[test]
    fn rank_checks() {
        let pi = blocks();
        assert!(matches!(
            factorize(&pi, 5, NmfVariant::LeastSquares, &NmfConfig::default()),
            Err(Error::InvalidRank { rank: 5, n: 4 })
        ));
        assert!(matches!(
            factorize(&pi, 0, NmfVariant::LeastSquares, &NmfConfig::default()),
            Err(Error::InvalidRank { .. })
        ));
        assert!(NmfVariant::parse("ns", 1.5).is_err());
        assert!(NmfVariant::parse("bogus", 0.5).is_err());
    }

    #[test]
    fn max_iters_reached_is_not_an_error() {
        let pi = validate_similarity(
            array![[1.0, 0.3, 0.7], [0.3, 1.0, 0.2], [0.7, 0.2, 1.0]],
            0.0,
        )
        .unwrap();
        let cfg = NmfConfig {
            max_iters: 3,
            rel_tolerance: 0.0,
            seed: 1,
        };
        let sol = factorize(&pi, 2, NmfVariant::KullbackLeibler, &cfg).unwrap();
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 3);
        assert_eq!(sol.objective_trace.len(), 4);
    }

    #[test]
    fn hard_extraction_argmax_and_ties() {
        let sol = solution_with_h(array![[0.1, 0.5, 0.3], [0.7, 0.5, 0.3], [0.2, 0.0, 0.3]]);
        // column 0 -> row 1, column 1 tie rows 0/1 -> row 0, column 2 three-way tie -> row 0
        assert_eq!(extract_hard(&sol), Partition::from_labels(&[1, 0, 0]));
    }

    #[test]
    fn soft_extraction_normalizes_columns() {
        let sol = solution_with_h(array![[0.1, 2.0], [0.7, 2.0], [0.2, 0.0]]);
        let soft = extract_soft(&sol);
        let p = soft.probs();
        assert!((p[[0, 0]] - 0.1).abs() < 1e-15);
        assert!((p[[0, 1]] - 0.7).abs() < 1e-15);
        assert!((p[[0, 2]] - 0.2).abs() < 1e-15);
        assert_eq!(p.row(1).to_vec(), vec![0.5, 0.5, 0.0]);
        assert_eq!(soft.argmax(), vec![1, 0]);
    }

    #[test]
    fn single_start_matches_factorize() {
        let cfg = NmfConfig::default().with_seed(42);
        let a = multi_start(&blocks(), 2, NmfVariant::KullbackLeibler, 1, &cfg).unwrap();
        let b = factorize(&blocks(), 2, NmfVariant::KullbackLeibler, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_smooth_without_smoothing_is_least_squares() {
        let pi = blocks();
        let cfg = NmfConfig::default().with_seed(3);
        let ls = factorize(&pi, 2, NmfVariant::LeastSquares, &cfg).unwrap();
        let ns = factorize(&pi, 2, NmfVariant::NonSmooth { theta: 0.0 }, &cfg).unwrap();
        assert_eq!(ls.objective_trace, ns.objective_trace);
        assert_eq!((ls.w, ls.h), (ns.w, ns.h));
    }

    #[test]
    fn offset_variant_carries_offset() {
        let sol = factorize(&blocks(), 2, NmfVariant::Offset, &NmfConfig::default()).unwrap();
        let b = sol.offset.as_ref().unwrap();
        assert_eq!(b.len(), 4);
        assert!(b.iter().all(|&v| v >= 0.0));
        let plain = factorize(&blocks(), 2, NmfVariant::LeastSquares, &NmfConfig::default())
            .unwrap();
        assert!(plain.offset.is_none());
    }
}
