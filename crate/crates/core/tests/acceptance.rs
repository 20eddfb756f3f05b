//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line
//! before asserting, so `cargo test --test acceptance -- --nocapture`
//! gives a one-screen report.

use std::sync::{Mutex, MutexGuard};
use std::time::Instant;

use nmfpart::baselines::{best_in_set, hclust_candidates, medvedovic, oracle, CandidateSet, Linkage};
use nmfpart::metrics::{binder_loss, rand, score, variation_of_information};
use nmfpart::nmf::{extract_soft, factorize, multi_start, squared_error, kl_divergence, offset_reconstruction};
use nmfpart::penalties::{binder_penalty, dahl_penalty};
use nmfpart::simulate::{
    generate_components, gibbs_labels, random_similarity, run_benchmark, soft_demo_components,
    time_iterations, BenchmarkOptions, GibbsConfig, Method, NmfSettings,
};
use nmfpart::{
    adjusted_rand, build_similarity, partition_affinity, select, LabelSampleSet, LogBase, NmfConfig,
    NmfVariant, Partition, PenaltyKind, SelectionOptions, SimilarityMatrix,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria carry runtime limits, so tests run one at a time rather than
/// sharing cores.
static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

fn report(n: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "criterion {n} [{name}]: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
}

/// Similarity matrix of a synthetic chain: each draw perturbs a base
/// partition by reassigning every observation with probability `noise`.
fn chain_similarity(rng: &mut ChaCha8Rng, n: usize, k: usize, draws: usize, noise: f64) -> SimilarityMatrix {
    let base: Vec<i64> = (0..n).map(|_| rng.random_range(0..k as i64)).collect();
    let chain = (0..draws)
        .map(|_| {
            base.iter()
                .map(|&l| if rng.random::<f64>() < noise { rng.random_range(0..=k as i64) } else { l })
                .collect()
        })
        .collect();
    build_similarity(&LabelSampleSet::new(chain).unwrap())
}

fn random_partition(rng: &mut ChaCha8Rng, n: usize) -> Partition {
    let k = rng.random_range(1..=n);
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
    Partition::from_labels(&labels)
}

// Criterion 1 -------------------------------------------------------------

#[test]
fn criterion_01_oracle_equivalence() {
    let _serial = serial();
    const INSTANCES: u64 = 200;
    const REL_TOL: f64 = 1e-12;
    // every derived partition is checked, whichever start produced it
    const NMF_STARTS: usize = 3;
    let start = Instant::now();
    let mut failures = Vec::new();
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(4..=8);
        let pi = if seed % 2 == 0 {
            random_similarity(n, seed)
        } else {
            chain_similarity(&mut rng, n, 3, 25, 0.3)
        };
        let (binder_best, binder_min) = oracle(&pi, PenaltyKind::Binder).unwrap();
        let (dahl_best, _) = oracle(&pi, PenaltyKind::DahlQuadratic).unwrap();
        if binder_best != dahl_best {
            failures.push(format!("seed {seed}: Binder and Dahl argmins differ"));
        }
        let floor = binder_min - REL_TOL * binder_min.abs().max(1.0);

        let mut derived: Vec<Partition> = Vec::new();
        for linkage in [Linkage::Average, Linkage::Complete] {
            derived.extend(hclust_candidates(&pi, linkage).partitions().iter().cloned());
        }
        for variant in NmfVariant::all() {
            let options = SelectionOptions {
                k_range: 1..=n,
                variant,
                starts: NMF_STARTS,
                ..SelectionOptions::default()
            };
            let report = select(&pi, &options).unwrap();
            derived.extend(report.per_k.iter().map(|r| r.partition.clone()));
        }
        for p in &derived {
            let b = binder_penalty(&pi, p).unwrap();
            if b < floor {
                failures.push(format!("seed {seed}: derived partition beats the oracle ({b} < {binder_min})"));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = failures.is_empty() && secs < 120.0;
    report(1, "oracle equivalence", pass, &format!("{INSTANCES} matrices, {} failures, {secs:.1}s", failures.len()));
    assert!(pass, "{failures:?}");
}

// Criterion 2 -------------------------------------------------------------

#[test]
fn criterion_02_rand_binder_identity() {
    let _serial = serial();
    const PAIRS: u64 = 1000;
    const TOL: f64 = 1e-12;
    let mut worst: f64 = 0.0;
    for seed in 0..PAIRS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..=50);
        let a = random_partition(&mut rng, n);
        let b = random_partition(&mut rng, n);
        // independent pair counting
        let (mut agree, mut disagree) = (0usize, 0usize);
        for i in 0..n {
            for j in (i + 1)..n {
                if a.same_cluster(i, j) == b.same_cluster(i, j) {
                    agree += 1;
                } else {
                    disagree += 1;
                }
            }
        }
        let total = (n * (n - 1) / 2) as f64;
        let loss = binder_loss(&a, &b).unwrap();
        assert_eq!(loss, disagree as f64);
        let r = rand(&a, &b).unwrap();
        worst = worst
            .max((r - (1.0 - loss / total)).abs())
            .max((r - agree as f64 / total).abs());
    }
    let pass = worst <= TOL;
    report(2, "Rand/Binder identity", pass, &format!("{PAIRS} pairs, max deviation {worst:.2e}"));
    assert!(pass);
}

// Criterion 3 -------------------------------------------------------------

#[test]
fn criterion_03_nmf_monotonicity() {
    let _serial = serial();
    const INSTANCES: u64 = 1000;
    const STEP_TOL: f64 = 1e-10;
    const FINAL_REL_TOL: f64 = 1e-9;
    let start = Instant::now();
    let mut violations = 0usize;
    let mut worst_step: f64 = 0.0;
    let mut final_mismatch = 0usize;
    for variant in NmfVariant::all() {
        for seed in 0..INSTANCES {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(2..=20);
            let k = rng.random_range(1..=n.min(5));
            let pi = if seed % 2 == 0 {
                random_similarity(n, seed)
            } else {
                chain_similarity(&mut rng, n, 4, 30, 0.25)
            };
            let sol = factorize(&pi, k, variant, &NmfConfig::default().with_seed(seed)).unwrap();
            for pair in sol.objective_trace.windows(2) {
                let rise = pair[1] - pair[0];
                worst_step = worst_step.max(rise);
                if rise > STEP_TOL {
                    violations += 1;
                }
            }
            // recompute the final objective from the returned factors
            let recon = match variant {
                NmfVariant::Offset => {
                    offset_reconstruction(sol.w.view(), sol.h.view(), sol.offset.as_ref().unwrap().view())
                }
                NmfVariant::NonSmooth { theta } => {
                    let s = nmfpart::nmf::smoothing_matrix(k, theta);
                    sol.w.dot(&s).dot(&sol.h)
                }
                _ => sol.w.dot(&sol.h),
            };
            let direct = match variant {
                NmfVariant::KullbackLeibler => kl_divergence(pi.values(), &recon),
                _ => squared_error(pi.values(), &recon),
            };
            if (direct - sol.objective()).abs() > FINAL_REL_TOL * direct.max(1.0) {
                final_mismatch += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = violations == 0 && final_mismatch == 0 && secs < 300.0;
    report(
        3,
        "NMF monotonicity",
        pass,
        &format!(
            "4 variants x {INSTANCES} instances, {violations} step violations, largest rise {worst_step:.2e}, \
             {final_mismatch} trace/objective mismatches, {secs:.1}s"
        ),
    );
    assert!(pass);
}

// Criterion 4 -------------------------------------------------------------

#[test]
fn criterion_04_block_recovery() {
    let _serial = serial();
    const INSTANCES: u64 = 12;
    let mut methods: Vec<Method> = Vec::new();
    for variant in NmfVariant::all() {
        for penalty in PenaltyKind::ALL {
            methods.push(Method::Nmf { variant, penalty });
        }
    }
    methods.extend([
        Method::MinBinder,
        Method::MaxPear,
        Method::MinVi,
        "medv".parse().unwrap(),
    ]);
    let mut failures = Vec::new();
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blocks = 2 + (seed as usize % 4);
        let sizes: Vec<usize> = (0..blocks).map(|_| rng.random_range(1..=6)).collect();
        let mut labels: Vec<usize> = sizes.iter().enumerate().flat_map(|(b, &s)| vec![b; s]).collect();
        // interleave the blocks so recovery cannot lean on observation order
        for i in (1..labels.len()).rev() {
            let j = rng.random_range(0..=i);
            labels.swap(i, j);
        }
        let truth = Partition::from_labels(&labels);
        let pi = partition_affinity(&truth);
        for method in &methods {
            let est = nmfpart::simulate::estimate(&pi, method, &truth, &NmfSettings::default(), seed).unwrap();
            let s = score(&est, &truth, LogBase::Natural).unwrap();
            if est != truth || s.adjusted_rand != 1.0 || s.vi != 0.0 {
                failures.push(format!("seed {seed} {}: {:?}", method.name(), est.labels()));
            }
        }
    }
    let pass = failures.is_empty();
    report(
        4,
        "block recovery",
        pass,
        &format!("{INSTANCES} block matrices x {} methods, {} misses", methods.len(), failures.len()),
    );
    assert!(pass, "{failures:?}");
}

// Criterion 5 -------------------------------------------------------------

fn reconstruction_corpus() -> Vec<(String, SimilarityMatrix)> {
    let mut corpus = Vec::new();
    for seed in 0..16u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(10..=40);
        let k = rng.random_range(2..=5);
        let noise = [0.05, 0.15, 0.3, 0.5][seed as usize % 4];
        corpus.push((format!("chain-{seed}"), chain_similarity(&mut rng, n, k, 200, noise)));
    }
    for seed in 0..3u64 {
        let (data, _) = generate_components(&soft_demo_components(), seed).unwrap();
        let chain = gibbs_labels(data.view(), &GibbsConfig { seed, ..GibbsConfig::default() }).unwrap();
        corpus.push((format!("gibbs-demo-{seed}"), build_similarity(&chain)));
    }
    corpus
}

#[test]
fn criterion_05_reconstruction_dominance() {
    let _serial = serial();
    const SLACK: f64 = 1e-9;
    let mut failures = Vec::new();
    let corpus = reconstruction_corpus();
    for (name, pi) in &corpus {
        let report = select(
            pi,
            &SelectionOptions {
                k_range: 2..=12.min(pi.n()),
                ..SelectionOptions::default()
            },
        )
        .unwrap();
        let nmf = pi.frobenius_distance(report.chosen_solution.reconstruction().view()).unwrap();
        let candidates: CandidateSet = hclust_candidates(pi, Linkage::Average);
        let binary = candidates
            .partitions()
            .iter()
            .map(|c| pi.frobenius_distance(partition_affinity(c).values()).unwrap())
            .fold(f64::INFINITY, f64::min);
        if nmf > binary + SLACK {
            failures.push(format!("{name}: nmf {nmf:.4} > binary {binary:.4} (K={})", report.chosen_k));
        }
    }
    let pass = failures.is_empty();
    report(
        5,
        "reconstruction dominance",
        pass,
        &format!("{} matrices, {} where a binary affinity fits better", corpus.len(), failures.len()),
    );
    assert!(pass, "{failures:?}");
}

// Criteria 6 and 7 --------------------------------------------------------

/// Restart count for the replicated benchmark runs; the full ten restarts
/// per rank at n = 400 do not fit the runtime budget on one core.
const BENCH_STARTS: usize = 3;

fn bench_options(config: &str) -> BenchmarkOptions {
    BenchmarkOptions {
        configs: vec![config.parse().unwrap()],
        reps: 10,
        methods: vec![
            "nmf-ls".parse().unwrap(),
            Method::MinBinder,
            Method::MaxPear,
            Method::MinVi,
        ],
        gibbs: GibbsConfig {
            kept: 2000,
            ..GibbsConfig::default()
        },
        nmf: NmfSettings {
            starts: BENCH_STARTS,
            ..NmfSettings::default()
        },
        subsample: None,
        seed: 2024,
    }
}

#[test]
fn criterion_06_easy_setting_accuracy() {
    let _serial = serial();
    const MIN_MEAN_AR: f64 = 0.85;
    let start = Instant::now();
    let table = run_benchmark(&bench_options("a-TTT")).unwrap();
    let mut parts = Vec::new();
    let mut pass = true;
    for method in ["nmf-ls", "minbinder", "maxpear", "minvi"] {
        let row = table.summary_row("a-TTT", method).unwrap();
        assert_eq!(row.reps, 10);
        pass &= row.ar_mean >= MIN_MEAN_AR;
        parts.push(format!("{method} AR {:.3}±{:.3}", row.ar_mean, row.ar_se));
    }
    report(
        6,
        "a-TTT accuracy",
        pass,
        &format!("{}; {:.0}s", parts.join(", "), start.elapsed().as_secs_f64()),
    );
    assert!(pass);
}

fn median(mut v: Vec<usize>) -> f64 {
    v.sort_unstable();
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        (v[m - 1] + v[m]) as f64 / 2.0
    } else {
        v[m] as f64
    }
}

#[test]
fn criterion_07_cluster_count_tendency() {
    let _serial = serial();
    let table = run_benchmark(&bench_options("e-FTT")).unwrap();
    let med = |m: &str| median(table.chosen_clusters("e-FTT", m));
    let (nmf, binder, pear, vi) = (med("nmf-ls"), med("minbinder"), med("maxpear"), med("minvi"));
    let upper = binder.max(pear);
    let pass = binder >= vi && pear >= vi && vi <= nmf && nmf <= upper;
    report(
        7,
        "e-FTT cluster-count tendency",
        pass,
        &format!("median K: minbinder {binder}, maxpear {pear}, minvi {vi}, nmf-ls {nmf}"),
    );
    assert!(pass);
}

// Criterion 8 -------------------------------------------------------------

#[test]
fn criterion_08_soft_structure() {
    let _serial = serial();
    const MAX_MEMBERSHIP_K2: f64 = 0.9;
    let (data, truth) = generate_components(&soft_demo_components(), 0).unwrap();
    let chain = gibbs_labels(data.view(), &GibbsConfig::default()).unwrap();
    let pi = build_similarity(&chain);
    let fit = |k| extract_soft(&multi_start(&pi, k, NmfVariant::LeastSquares, 10, &NmfConfig::default()).unwrap());

    let soft4 = fit(4);
    let dominant = soft4.argmax();
    let group = |c: usize| -> Vec<usize> { (0..truth.len()).filter(|&i| truth.labels()[i] == c).collect() };
    let mode = |idx: &[usize]| {
        let mut counts = [0usize; 4];
        for &i in idx {
            counts[dominant[i]] += 1;
        }
        (0..4).max_by_key(|&c| (counts[c], std::cmp::Reverse(c))).unwrap()
    };
    let (major_a, major_b) = (mode(&group(0)), mode(&group(1)));
    let minor_c = group(2);
    let minor_d = group(3);
    let own = |idx: &[usize]| idx.iter().all(|&i| dominant[i] == dominant[idx[0]]);
    let mut comps = vec![major_a, major_b, dominant[minor_c[0]], dominant[minor_d[0]]];
    comps.sort_unstable();
    comps.dedup();
    let k4_ok = own(&minor_c) && own(&minor_d) && comps.len() == 4;

    let soft2 = fit(2);
    let minor: Vec<usize> = minor_c.iter().chain(&minor_d).copied().collect();
    let max_k2 = minor.iter().map(|&i| soft2.max_membership(i)).fold(0.0, f64::max);
    let k2_ok = max_k2 < MAX_MEMBERSHIP_K2;

    let pass = k4_ok && k2_ok;
    report(
        8,
        "soft-clustering structure",
        pass,
        &format!("K=4 minor groups own components: {k4_ok}; K=2 largest minor membership {max_k2:.3}"),
    );
    assert!(pass);
}

// Criterion 9 -------------------------------------------------------------

/// The real-data table needs its original chain. This checks the property
/// that stands in for it: the offset model recovers a crabs-sized
/// four-group structure exactly.
#[test]
fn criterion_09_offset_exact_recovery() {
    let _serial = serial();
    let labels: Vec<usize> = (0..200).map(|i| (i * 7 % 200) / 50).collect();
    let truth = Partition::from_labels(&labels);
    let pi = partition_affinity(&truth);
    let options = SelectionOptions {
        k_range: 2..=6,
        variant: NmfVariant::Offset,
        ..SelectionOptions::default()
    };
    let est = select(&pi, &options).unwrap().chosen_partition;
    let (r, ar, vi) = (
        rand(&est, &truth).unwrap(),
        adjusted_rand(&est, &truth).unwrap(),
        variation_of_information(&est, &truth).unwrap(),
    );
    let pass = r == 1.0 && ar == 1.0 && vi == 0.0;
    report(
        9,
        "substitute: offset exact recovery (n = 200, 4 groups)",
        pass,
        &format!("Rand {r}, AR {ar}, VI {vi}; oracle and block suites under criteria 1 and 4"),
    );
    assert!(pass);
}

// Criterion 10 ------------------------------------------------------------

#[test]
fn criterion_10_timing_scaling() {
    let _serial = serial();
    const RANK: usize = 6;
    const ITERATIONS: usize = 200;
    const REPEATS: usize = 9;
    const BAND: (f64, f64) = (3.0, 6.0);
    let start = Instant::now();
    let sizes = [200usize, 400, 800];
    let per_iter: Vec<f64> = sizes
        .iter()
        .map(|&n| {
            let pi = random_similarity(n, n as u64);
            // the minimum over repeats filters scheduler noise
            (0..REPEATS)
                .map(|r| {
                    time_iterations(&pi, RANK, NmfVariant::LeastSquares, ITERATIONS, r as u64)
                        .unwrap()
                        .as_secs_f64()
                        / ITERATIONS as f64
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let ratios: Vec<f64> = per_iter.windows(2).map(|w| w[1] / w[0]).collect();
    let secs = start.elapsed().as_secs_f64();
    let pass = ratios.iter().all(|r| (BAND.0..=BAND.1).contains(r)) && secs < 600.0;
    report(
        10,
        "timing scaling",
        pass,
        &format!(
            "per-iteration ms {:?}, ratios {:?}",
            per_iter.iter().map(|t| format!("{:.3}", t * 1e3)).collect::<Vec<_>>(),
            ratios.iter().map(|r| format!("{r:.2}")).collect::<Vec<_>>()
        ),
    );
    assert!(pass);
}

#[test]
fn dahl_and_binder_differ_by_constant() {
    let _serial = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pi = chain_similarity(&mut rng, 9, 3, 40, 0.3);
    let constant = |c: &Partition| dahl_penalty(&pi, c).unwrap() - binder_penalty(&pi, c).unwrap();
    let c0 = constant(&Partition::singletons(9));
    for _ in 0..50 {
        let c = random_partition(&mut rng, 9);
        assert!((constant(&c) - c0).abs() < 1e-12);
    }
    let best = best_in_set(&pi, &hclust_candidates(&pi, Linkage::Complete), PenaltyKind::Binder).unwrap();
    assert!(best.1 >= oracle(&pi, PenaltyKind::Binder).unwrap().1 - 1e-12);
    assert!(medvedovic(&pi, 0.5).is_ok());
}
