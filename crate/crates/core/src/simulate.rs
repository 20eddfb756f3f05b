//! Synthetic Gaussian-mixture study: data generation for the eight
//! (separateness, balancedness, sphericity) configurations, a collapsed
//! Gibbs sampler producing label chains, and the end-to-end benchmark that
//! scores every estimator against the generating partition.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::baselines::{best_in_set, hclust_candidates, medvedovic, oracle, Linkage};
use crate::error::{Error, Result};
use crate::metrics::{score, LogBase, Scores};
use crate::nmf::{factorize, NmfConfig, NmfVariant};
use crate::partition::Partition;
use crate::penalties::{binder_penalty, PenaltyKind};
use crate::selection::{select, SelectionOptions, DEFAULT_K_MAX, DEFAULT_K_MIN, DEFAULT_STARTS};
use crate::similarity::{build_similarity, validate_similarity, LabelSampleSet, SimilarityMatrix};

/// One of the eight mixture settings, each flag choosing the easy (`T`) or
/// hard (`F`) level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MixtureConfig {
    pub separated: bool,
    pub balanced: bool,
    pub spherical: bool,
}

impl MixtureConfig {
    /// All eight settings in panel order `a-TTT` through `h-FFF`.
    pub fn all() -> Vec<MixtureConfig> {
        let mut out = Vec::with_capacity(8);
        for separated in [true, false] {
            for balanced in [true, false] {
                for spherical in [true, false] {
                    out.push(MixtureConfig {
                        separated,
                        balanced,
                        spherical,
                    });
                }
            }
        }
        out
    }

    pub fn code(&self) -> String {
        [self.separated, self.balanced, self.spherical]
            .iter()
            .map(|&b| if b { 'T' } else { 'F' })
            .collect()
    }

    /// Code prefixed with its panel letter, e.g. `a-TTT`.
    pub fn panel(&self) -> String {
        let idx = MixtureConfig::all().iter().position(|c| c == self).unwrap();
        format!("{}-{}", (b'a' + idx as u8) as char, self.code())
    }

    pub fn means(&self) -> [[f64; 2]; 4] {
        let m = if self.separated { 3.0 } else { 1.5 };
        [[m, m], [-m, m], [-m, -m], [m, -m]]
    }

    pub fn sizes(&self) -> [usize; 4] {
        if self.balanced {
            [100, 100, 100, 100]
        } else {
            [150, 50, 100, 30]
        }
    }

    pub fn covariances(&self) -> [[[f64; 2]; 2]; 4] {
        if self.spherical {
            [[[1.0, 0.0], [0.0, 1.0]]; 4]
        } else {
            [
                [[2.0, -0.8], [-0.8, 1.0]],
                [[1.0, 0.8], [0.8, 2.0]],
                [[1.0, 0.4], [0.4, 1.0]],
                [[2.0, 0.0], [0.0, 2.0]],
            ]
        }
    }

    pub fn n(&self) -> usize {
        self.sizes().iter().sum()
    }
}

impl fmt::Display for MixtureConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code())
    }
}

impl FromStr for MixtureConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let code = s.rsplit('-').next().unwrap_or(s).to_ascii_uppercase();
        let flags: Vec<bool> = code
            .chars()
            .map(|c| match c {
                'T' => Ok(true),
                'F' => Ok(false),
                _ => Err(Error::InvalidParameter(format!("bad mixture config '{s}'"))),
            })
            .collect::<Result<_>>()?;
        match flags[..] {
            [separated, balanced, spherical] => Ok(MixtureConfig {
                separated,
                balanced,
                spherical,
            }),
            _ => Err(Error::InvalidParameter(format!("bad mixture config '{s}'"))),
        }
    }
}

/// A Gaussian component: mean, covariance and number of draws.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub size: usize,
}

impl Component {
    pub fn spherical(mean: &[f64], sd: f64, size: usize) -> Self {
        let d = mean.len();
        let covariance = (0..d)
            .map(|i| (0..d).map(|j| if i == j { sd * sd } else { 0.0 }).collect())
            .collect();
        Component {
            mean: mean.to_vec(),
            covariance,
            size,
        }
    }
}

fn cholesky_lower(cov: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let d = cov.len();
    let m = DMatrix::from_fn(d, d, |i, j| cov[i][j]);
    m.cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::InvalidParameter("covariance is not positive definite".into()))
}

/// Draws each component's points as `mean + L z` with `L` the lower Cholesky
/// factor of its covariance and `z` seeded standard normals. Observations
/// are grouped by component, in order.
pub fn generate_components(components: &[Component], seed: u64) -> Result<(Array2<f64>, Partition)> {
    let d = components
        .first()
        .map(|c| c.mean.len())
        .ok_or_else(|| Error::InvalidParameter("no components".into()))?;
    let n: usize = components.iter().map(|c| c.size).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    let mut row = 0;
    for (k, comp) in components.iter().enumerate() {
        if comp.mean.len() != d || comp.covariance.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: comp.mean.len(),
            });
        }
        let l = cholesky_lower(&comp.covariance)?;
        for _ in 0..comp.size {
            let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            for i in 0..d {
                let mut v = comp.mean[i];
                for (j, zj) in z.iter().enumerate().take(i + 1) {
                    v += l[(i, j)] * zj;
                }
                data[[row, i]] = v;
            }
            labels.push(k);
            row += 1;
        }
    }
    Ok((data, Partition::from_labels(&labels)))
}

/// Draws a data set for one of the eight mixture settings.
pub fn generate(config: &MixtureConfig, seed: u64) -> Result<(Array2<f64>, Partition)> {
    let components: Vec<Component> = config
        .means()
        .iter()
        .zip(config.covariances())
        .zip(config.sizes())
        .map(|((mean, cov), size)| Component {
            mean: mean.to_vec(),
            covariance: cov.iter().map(|r| r.to_vec()).collect(),
            size,
        })
        .collect();
    generate_components(&components, seed)
}

/// Two 15-point groups plus two tight 3-point minor groups lying between
/// them, the first nearer the second major group and vice versa.
pub fn soft_demo_components() -> Vec<Component> {
    vec![
        Component::spherical(&[-2.5, 0.0], 0.7, 15),
        Component::spherical(&[2.5, 0.0], 0.7, 15),
        Component::spherical(&[0.3, 1.5], 0.3, 3),
        Component::spherical(&[-0.3, -1.5], 0.3, 3),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GibbsConfig {
    /// Fixed number of mixture components; some may be empty in any draw.
    pub components: usize,
    pub burn_in: usize,
    pub kept: usize,
    pub thin: usize,
    pub seed: u64,
    /// Total Dirichlet concentration, split evenly over components.
    pub concentration: f64,
    /// Prior precision multiplier on component means.
    pub mean_precision: f64,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        GibbsConfig {
            components: 8,
            burn_in: 500,
            kept: 2000,
            thin: 1,
            seed: 0,
            concentration: 1.0,
            mean_precision: 0.1,
        }
    }
}

impl GibbsConfig {
    fn validate(&self) -> Result<()> {
        if self.components == 0 || self.kept == 0 || self.thin == 0 {
            return Err(Error::InvalidParameter(
                "components, kept and thin must be at least 1".into(),
            ));
        }
        if !(self.concentration > 0.0 && self.mean_precision > 0.0) {
            return Err(Error::InvalidParameter(
                "concentration and mean precision must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Normal-inverse-Wishart prior on (mean, covariance).
struct NiwPrior {
    mean: Vec<f64>,
    kappa: f64,
    nu: f64,
    /// Row-major `d x d` scale matrix.
    scale: Vec<f64>,
}

impl NiwPrior {
    /// Mean at the data centroid; covariance scale twice the empirical
    /// covariance (a Wishart on the precision with half its inverse as the
    /// scale); `d + 2` degrees of freedom.
    fn from_data(data: ArrayView2<f64>, kappa: f64) -> Self {
        let (n, d) = data.dim();
        let mean: Vec<f64> = (0..d).map(|j| data.column(j).sum() / n as f64).collect();
        let mut scale = vec![0.0; d * d];
        for row in data.rows() {
            for a in 0..d {
                for b in 0..d {
                    scale[a * d + b] += (row[a] - mean[a]) * (row[b] - mean[b]);
                }
            }
        }
        let denom = (n.max(2) - 1) as f64;
        for v in scale.iter_mut() {
            *v = 2.0 * *v / denom;
        }
        // a singular empirical covariance (e.g. duplicated points) still needs a proper prior
        for a in 0..d {
            scale[a * d + a] += 1e-9;
        }
        NiwPrior {
            mean,
            kappa,
            nu: d as f64 + 2.0,
            scale,
        }
    }
}

#[derive(Clone)]
struct SuffStats {
    count: usize,
    sum: Vec<f64>,
    outer: Vec<f64>,
}

impl SuffStats {
    fn new(d: usize) -> Self {
        SuffStats {
            count: 0,
            sum: vec![0.0; d],
            outer: vec![0.0; d * d],
        }
    }

    fn add(&mut self, x: &[f64], sign: f64) {
        let d = x.len();
        if sign > 0.0 {
            self.count += 1;
        } else {
            self.count -= 1;
        }
        for a in 0..d {
            self.sum[a] += sign * x[a];
            for b in 0..d {
                self.outer[a * d + b] += sign * x[a] * x[b];
            }
        }
    }
}

/// Multivariate Student-t posterior predictive of one component.
struct Predictive {
    loc: Vec<f64>,
    /// Lower Cholesky factor of the scale, row-major.
    chol: Vec<f64>,
    df: f64,
    log_norm: f64,
}

impl Predictive {
    fn new(prior: &NiwPrior, stats: &SuffStats) -> Self {
        let d = prior.mean.len();
        let n = stats.count as f64;
        let kappa_n = prior.kappa + n;
        let nu_n = prior.nu + n;
        let xbar: Vec<f64> = if stats.count > 0 {
            stats.sum.iter().map(|s| s / n).collect()
        } else {
            prior.mean.clone()
        };
        let loc: Vec<f64> = (0..d)
            .map(|a| (prior.kappa * prior.mean[a] + n * xbar[a]) / kappa_n)
            .collect();
        let shrink = prior.kappa * n / kappa_n;
        let df = nu_n - d as f64 + 1.0;
        let factor = (kappa_n + 1.0) / (kappa_n * df);
        let scale = DMatrix::from_fn(d, d, |a, b| {
            let scatter = stats.outer[a * d + b] - n * xbar[a] * xbar[b];
            let dev = (xbar[a] - prior.mean[a]) * (xbar[b] - prior.mean[b]);
            (prior.scale[a * d + b] + scatter + shrink * dev) * factor
        });
        // symmetrize away rounding before factoring
        let scale = (&scale + scale.transpose()) * 0.5;
        let l = scale
            .cholesky()
            .expect("posterior scale is positive definite")
            .l();
        let log_det: f64 = (0..d).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0;
        let df_d = (df + d as f64) / 2.0;
        let log_norm = ln_gamma(df_d)
            - ln_gamma(df / 2.0)
            - 0.5 * d as f64 * (df * std::f64::consts::PI).ln()
            - 0.5 * log_det;
        let chol = (0..d * d).map(|k| l[(k / d, k % d)]).collect();
        Predictive {
            loc,
            chol,
            df,
            log_norm,
        }
    }

    fn log_density(&self, x: &[f64], work: &mut [f64]) -> f64 {
        let d = x.len();
        // forward substitution: L y = x - loc
        let mut q = 0.0;
        for i in 0..d {
            let mut v = x[i] - self.loc[i];
            for (l, y) in self.chol[i * d..i * d + i].iter().zip(&work[..i]) {
                v -= l * y;
            }
            v /= self.chol[i * d + i];
            work[i] = v;
            q += v * v;
        }
        self.log_norm - 0.5 * (self.df + d as f64) * (q / self.df).ln_1p()
    }
}

/// Collapsed Gibbs sampler for a finite Gaussian mixture with a symmetric
/// Dirichlet prior on the weights and a conjugate normal-inverse-Wishart
/// prior on each component. Returns the kept label draws.
pub fn gibbs_labels(data: ArrayView2<f64>, gc: &GibbsConfig) -> Result<LabelSampleSet> {
    gc.validate()?;
    let (n, d) = data.dim();
    if n < gc.components {
        return Err(Error::InvalidParameter(format!(
            "{n} observations cannot fill {} components",
            gc.components
        )));
    }
    if let Some(((row, col), _)) = data.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite { row, col });
    }
    let k = gc.components;
    let prior = NiwPrior::from_data(data, gc.mean_precision);
    let alpha_k = gc.concentration / k as f64;
    let rows: Vec<Vec<f64>> = data.rows().into_iter().map(|r| r.to_vec()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(gc.seed);
    let mut labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
    let mut stats = vec![SuffStats::new(d); k];
    for (x, &z) in rows.iter().zip(&labels) {
        stats[z].add(x, 1.0);
    }
    let mut predictive: Vec<Predictive> = stats.iter().map(|s| Predictive::new(&prior, s)).collect();

    let total = gc.burn_in + gc.kept * gc.thin;
    let mut draws = Vec::with_capacity(gc.kept);
    let mut logp = vec![0.0; k];
    let mut work = vec![0.0; d];

    for sweep in 0..total {
        for (i, x) in rows.iter().enumerate() {
            let old = labels[i];
            stats[old].add(x, -1.0);
            predictive[old] = Predictive::new(&prior, &stats[old]);

            for c in 0..k {
                logp[c] = (stats[c].count as f64 + alpha_k).ln()
                    + predictive[c].log_density(x, &mut work);
            }
            let max = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total_w = 0.0;
            for lp in logp.iter_mut() {
                *lp = (*lp - max).exp();
                total_w += *lp;
            }
            let mut u = rng.random::<f64>() * total_w;
            let mut new = k - 1;
            for (c, &w) in logp.iter().enumerate() {
                if u < w {
                    new = c;
                    break;
                }
                u -= w;
            }

            labels[i] = new;
            stats[new].add(x, 1.0);
            predictive[new] = Predictive::new(&prior, &stats[new]);
        }
        if sweep >= gc.burn_in && (sweep - gc.burn_in) % gc.thin == gc.thin - 1 {
            draws.push(labels.iter().map(|&l| l as i64).collect());
        }
    }
    LabelSampleSet::new(draws)
}

/// An estimator compared in the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Method {
    /// NMF rank selection under a penalty.
    Nmf { variant: NmfVariant, penalty: PenaltyKind },
    MinBinder,
    MaxPear,
    MinVi,
    Medvedovic { cut: f64 },
    /// Exhaustive search; only for tiny (at most 12 observation) instances.
    Oracle { penalty: PenaltyKind },
    /// The generating partition itself, as a reference row.
    Truth,
}

impl Method {
    /// NMF-ls/kl/ns/offset (Binder), MinBinder, MaxPEAR, MinVI, Medvedovic.
    pub fn standard() -> Vec<Method> {
        let mut out: Vec<Method> = NmfVariant::all()
            .into_iter()
            .map(|variant| Method::Nmf {
                variant,
                penalty: PenaltyKind::Binder,
            })
            .collect();
        out.extend([
            Method::MinBinder,
            Method::MaxPear,
            Method::MinVi,
            Method::Medvedovic {
                cut: crate::baselines::DEFAULT_MEDVEDOVIC_CUT,
            },
        ]);
        out
    }

    pub fn name(&self) -> String {
        match self {
            Method::Nmf { variant, penalty } => match penalty {
                PenaltyKind::Binder => format!("nmf-{}", variant.name()),
                other => format!("nmf-{}:{}", variant.name(), other),
            },
            Method::MinBinder => "minbinder".into(),
            Method::MaxPear => "maxpear".into(),
            Method::MinVi => "minvi".into(),
            Method::Medvedovic { .. } => "medv".into(),
            Method::Oracle { penalty } => format!("oracle:{penalty}"),
            Method::Truth => "truth".into(),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    /// `nmf-<variant>[:<loss>]`, `minbinder`, `maxpear`, `minvi`, `medv`,
    /// `oracle[:<loss>]` or `truth`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase();
        let (head, loss) = match s.split_once(':') {
            Some((h, l)) => (h, Some(l.parse::<PenaltyKind>()?)),
            None => (s.as_str(), None),
        };
        let penalty = loss.unwrap_or(PenaltyKind::Binder);
        Ok(match head {
            "minbinder" => Method::MinBinder,
            "maxpear" => Method::MaxPear,
            "minvi" => Method::MinVi,
            "medv" => Method::Medvedovic {
                cut: crate::baselines::DEFAULT_MEDVEDOVIC_CUT,
            },
            "oracle" => Method::Oracle { penalty },
            "truth" => Method::Truth,
            other => match other.strip_prefix("nmf-") {
                Some(v) => Method::Nmf {
                    variant: v.parse()?,
                    penalty,
                },
                None => return Err(Error::InvalidParameter(format!("unknown method '{s}'"))),
            },
        })
    }
}

/// Settings shared by every NMF method in a benchmark run.
#[derive(Debug, Clone)]
pub struct NmfSettings {
    pub k_min: usize,
    pub k_max: usize,
    pub starts: usize,
    pub config: NmfConfig,
}

impl Default for NmfSettings {
    fn default() -> Self {
        NmfSettings {
            k_min: DEFAULT_K_MIN,
            k_max: DEFAULT_K_MAX,
            starts: DEFAULT_STARTS,
            config: NmfConfig::default(),
        }
    }
}

/// Applies one estimator to a similarity matrix.
pub fn estimate(
    pi: &SimilarityMatrix,
    method: &Method,
    truth: &Partition,
    nmf: &NmfSettings,
    seed: u64,
) -> Result<Partition> {
    let dendrogram_best = |kind| -> Result<Partition> {
        Ok(best_in_set(pi, &hclust_candidates(pi, Linkage::Average), kind)?.0)
    };
    match *method {
        Method::Nmf { variant, penalty } => {
            let options = SelectionOptions {
                k_range: nmf.k_min.min(pi.n())..=nmf.k_max.min(pi.n()),
                variant,
                penalty,
                starts: nmf.starts,
                config: nmf.config.with_seed(seed),
                log_base: LogBase::Natural,
                keep_all: false,
            };
            Ok(select(pi, &options)?.chosen_partition)
        }
        Method::MinBinder => dendrogram_best(PenaltyKind::Binder),
        Method::MaxPear => dendrogram_best(PenaltyKind::Pear),
        Method::MinVi => dendrogram_best(PenaltyKind::ViLowerBound),
        Method::Medvedovic { cut } => medvedovic(pi, cut),
        Method::Oracle { penalty } => Ok(oracle(pi, penalty)?.0),
        Method::Truth => Ok(truth.clone()),
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkOptions {
    pub configs: Vec<MixtureConfig>,
    pub reps: usize,
    pub methods: Vec<Method>,
    pub gibbs: GibbsConfig,
    pub nmf: NmfSettings,
    /// Keep a random subset of this many observations from each data set.
    pub subsample: Option<usize>,
    pub seed: u64,
}

/// Outcome of one method on one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkRecord {
    pub config: String,
    pub rep: usize,
    pub method: String,
    pub rand: f64,
    pub adjusted_rand: f64,
    pub vi: f64,
    pub clusters: usize,
    /// Binder penalty of the estimate against the replication's similarity matrix.
    pub binder: f64,
}

/// Mean and standard error of each metric for one (config, method) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub config: String,
    pub method: String,
    pub reps: usize,
    pub rand_mean: f64,
    pub rand_se: f64,
    pub ar_mean: f64,
    pub ar_se: f64,
    pub vi_mean: f64,
    pub vi_se: f64,
}

/// Largest cluster count shown separately in the K distribution.
pub const K_DISPLAY_CAP: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KCount {
    pub config: String,
    pub method: String,
    /// Cluster count, with everything at or above the cap folded into it.
    pub k: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkTable {
    pub records: Vec<BenchmarkRecord>,
    pub summary: Vec<SummaryRow>,
    pub k_distribution: Vec<KCount>,
}

impl BenchmarkTable {
    /// Cluster counts chosen by a method in a configuration, in replication order.
    pub fn chosen_clusters(&self, config: &str, method: &str) -> Vec<usize> {
        self.records
            .iter()
            .filter(|r| r.config == config && r.method == method)
            .map(|r| r.clusters)
            .collect()
    }

    pub fn summary_row(&self, config: &str, method: &str) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|r| r.config == config && r.method == method)
    }
}

/// SplitMix64 finalizer, used to derive independent stream seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}

fn subsample(
    data: Array2<f64>,
    truth: Partition,
    keep: usize,
    seed: u64,
) -> (Array2<f64>, Partition) {
    use rand::seq::index::sample;
    let n = data.nrows();
    if keep >= n {
        return (data, truth);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, n, keep).into_vec();
    idx.sort_unstable();
    let sub = data.select(ndarray::Axis(0), &idx);
    let labels: Vec<usize> = idx.iter().map(|&i| truth.labels()[i]).collect();
    (sub, Partition::from_labels(&labels))
}

/// Runs one replication: generate, sample, build the similarity matrix,
/// then score every method.
pub fn run_replication(
    config: &MixtureConfig,
    rep: usize,
    options: &BenchmarkOptions,
) -> Result<Vec<BenchmarkRecord>> {
    let cfg_id = MixtureConfig::all().iter().position(|c| c == config).unwrap() as u64;
    let seed = |stream: u64| derive_seed(options.seed, &[cfg_id, rep as u64, stream]);
    let (data, truth) = generate(config, seed(0))?;
    let (data, truth) = match options.subsample {
        Some(keep) => subsample(data, truth, keep, seed(1)),
        None => (data, truth),
    };
    let gibbs = GibbsConfig {
        seed: seed(2),
        components: options.gibbs.components.min(data.nrows()),
        ..options.gibbs
    };
    let pi = build_similarity(&gibbs_labels(data.view(), &gibbs)?);
    options
        .methods
        .iter()
        .map(|method| {
            let estimate = estimate(&pi, method, &truth, &options.nmf, seed(3))?;
            let Scores {
                rand,
                adjusted_rand,
                vi,
            } = score(&estimate, &truth, LogBase::Natural)?;
            Ok(BenchmarkRecord {
                config: config.panel(),
                rep,
                method: method.name(),
                rand,
                adjusted_rand,
                vi,
                clusters: estimate.n_clusters(),
                binder: binder_penalty(&pi, &estimate)?,
            })
        })
        .collect()
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Replicated comparison of every method on every configuration.
/// Replications run in parallel; the table is assembled in a fixed order.
pub fn run_benchmark(options: &BenchmarkOptions) -> Result<BenchmarkTable> {
    if options.reps == 0 {
        return Err(Error::InvalidParameter("reps must be at least 1".into()));
    }
    let jobs: Vec<(MixtureConfig, usize)> = options
        .configs
        .iter()
        .flat_map(|c| (0..options.reps).map(move |r| (*c, r)))
        .collect();
    let records: Vec<BenchmarkRecord> = jobs
        .par_iter()
        .map(|(c, r)| run_replication(c, *r, options))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let mut summary = Vec::new();
    let mut k_distribution = Vec::new();
    for config in &options.configs {
        for method in &options.methods {
            let (cname, mname) = (config.panel(), method.name());
            let cell: Vec<&BenchmarkRecord> = records
                .iter()
                .filter(|r| r.config == cname && r.method == mname)
                .collect();
            let collect = |f: fn(&BenchmarkRecord) -> f64| cell.iter().map(|r| f(r)).collect::<Vec<_>>();
            let (rand_mean, rand_se) = mean_se(&collect(|r| r.rand));
            let (ar_mean, ar_se) = mean_se(&collect(|r| r.adjusted_rand));
            let (vi_mean, vi_se) = mean_se(&collect(|r| r.vi));
            summary.push(SummaryRow {
                config: cname.clone(),
                method: mname.clone(),
                reps: cell.len(),
                rand_mean,
                rand_se,
                ar_mean,
                ar_se,
                vi_mean,
                vi_se,
            });
            for k in 1..=K_DISPLAY_CAP {
                let count = cell
                    .iter()
                    .filter(|r| r.clusters.min(K_DISPLAY_CAP) == k)
                    .count();
                k_distribution.push(KCount {
                    config: cname.clone(),
                    method: mname.clone(),
                    k,
                    count,
                });
            }
        }
    }
    Ok(BenchmarkTable {
        records,
        summary,
        k_distribution,
    })
}

/// Random symmetric similarity matrix with unit diagonal and independent
/// uniform off-diagonal entries.
pub fn random_similarity(n: usize, seed: u64) -> SimilarityMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = Array2::eye(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v: f64 = rng.random();
            m[[i, j]] = v;
            m[[j, i]] = v;
        }
    }
    validate_similarity(m, 0.0).expect("symmetric unit-diagonal matrix in [0, 1]")
}

/// Wall time of exactly `iterations` update steps from a seeded start.
/// Convergence checks are disabled so every call does the same work.
pub fn time_iterations(
    pi: &SimilarityMatrix,
    rank: usize,
    variant: NmfVariant,
    iterations: usize,
    seed: u64,
) -> Result<Duration> {
    let config = NmfConfig {
        max_iters: iterations,
        rel_tolerance: f64::NEG_INFINITY,
        seed,
    };
    let start = Instant::now();
    let solution = factorize(pi, rank, variant, &config)?;
    let elapsed = start.elapsed();
    debug_assert_eq!(solution.iterations, iterations);
    Ok(elapsed)
}
