use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use nmfpart::baselines::{best_in_set, hclust_candidates, medvedovic, oracle, Linkage};
use nmfpart::io::{format_f64, read_labels, read_matrix, read_partition, write_matrix, write_partition};
use nmfpart::metrics::{score, LogBase};
use nmfpart::nmf::{extract_hard, extract_soft, multi_start, NmfConfig, NmfVariant};
use nmfpart::penalties::{evaluate_base, PenaltyKind};
use nmfpart::selection::{penalty_curve, select, SelectionOptions, SelectionReport};
use nmfpart::simulate::{
    random_similarity, run_benchmark, time_iterations, BenchmarkOptions, GibbsConfig,
    MixtureConfig, Method, NmfSettings,
};
use nmfpart::{build_similarity, validate_similarity, Partition, SimilarityMatrix};

use crate::manifest::RunManifest;
use crate::{
    BaselineArgs, Command, EvaluateArgs, FitArgs, InputError, NmfArgs, PsmArgs, PsmInput,
    ReplayArgs, SelectArgs, SimulateArgs, Status, TimingArgs,
};

pub fn dispatch(command: Command, args: Vec<String>) -> Result<Status> {
    match command {
        Command::Psm(a) => psm(a, args),
        Command::Nmf(a) => nmf(a, args),
        Command::Select(a) => select_cmd(a, args),
        Command::Baseline(a) => baseline(a, args),
        Command::Evaluate(a) => evaluate(a, args),
        Command::Simulate(a) => simulate(a, args),
        Command::Timing(a) => timing(a, args),
        Command::Replay(a) => replay(a),
    }
}

fn input_err(e: impl Into<anyhow::Error>) -> anyhow::Error {
    anyhow::Error::new(InputError(e.into()))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| input_err(anyhow!("opening {}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| anyhow!("creating {}: {e}", dir.display()))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| anyhow!("creating {}: {e}", path.display()))
}

/// Wraps a write so failures name the path and do not count as input errors.
fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::result::Result<(), Box<dyn std::error::Error>>,
{
    let mut w = create(path)?;
    f(&mut w).map_err(|e| anyhow!("writing {}: {e}", path.display()))?;
    w.flush().map_err(|e| anyhow!("writing {}: {e}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_with(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

fn load_psm(input: &PsmInput, manifest: &mut RunManifest) -> Result<SimilarityMatrix> {
    let raw = read_matrix(open(&input.psm)?)
        .with_context(|| format!("reading {}", input.psm.display()))
        .map_err(input_err)?;
    manifest.add_input(&input.psm)?;
    validate_similarity(raw, input.tolerance)
        .with_context(|| format!("validating {}", input.psm.display()))
        .map_err(input_err)
}

fn parse_variant(name: &str, theta: f64) -> Result<NmfVariant> {
    NmfVariant::parse(name, theta).map_err(input_err)
}

fn parse_base(name: &str) -> Result<LogBase> {
    match name {
        "e" | "natural" => Ok(LogBase::Natural),
        "2" | "two" => Ok(LogBase::Two),
        other => Err(input_err(anyhow!("unknown log base '{other}'; use e or 2"))),
    }
}

fn nmf_config(fit: &FitArgs) -> NmfConfig {
    NmfConfig {
        max_iters: fit.max_iters,
        rel_tolerance: fit.tol,
        seed: fit.seed,
    }
}

fn finish(mut manifest: RunManifest, outputs: &[&Path], status: Status) -> Result<Status> {
    for o in outputs {
        manifest.add_output(o);
    }
    manifest.write(&RunManifest::path_for(outputs[0]))?;
    Ok(status)
}

fn psm(a: PsmArgs, args: Vec<String>) -> Result<Status> {
    let mut manifest = RunManifest::new("psm", args, None);
    let samples = read_labels(open(&a.labels)?, a.header)
        .with_context(|| format!("reading {}", a.labels.display()))
        .map_err(input_err)?;
    manifest.add_input(&a.labels)?;
    let pi = build_similarity(&samples);
    write_with(&a.out, |w| Ok(write_matrix(w, pi.values())?))?;
    finish(manifest, &[&a.out], Status::Done)
}

#[derive(Serialize)]
struct NmfOutput {
    variant: NmfVariant,
    rank: usize,
    labels: Vec<usize>,
    soft_matrix: Vec<Vec<f64>>,
    objective: f64,
    iterations: usize,
    converged: bool,
    seed: u64,
}

fn soft_rows(soft: &nmfpart::SoftAssignment) -> Vec<Vec<f64>> {
    soft.probs().rows().into_iter().map(|r| r.to_vec()).collect()
}

fn nmf(a: NmfArgs, args: Vec<String>) -> Result<Status> {
    let mut manifest = RunManifest::new("nmf", args, Some(a.fit.seed));
    let pi = load_psm(&a.input, &mut manifest)?;
    let variant = parse_variant(&a.fit.variant, a.fit.theta)?;
    let solution = multi_start(&pi, a.rank, variant, a.fit.starts, &nmf_config(&a.fit))?;
    let out = NmfOutput {
        variant,
        rank: a.rank,
        labels: extract_hard(&solution).labels_one_based(),
        soft_matrix: soft_rows(&extract_soft(&solution)),
        objective: solution.objective(),
        iterations: solution.iterations,
        converged: solution.converged,
        seed: solution.seed,
    };
    write_json(&a.out, &out)?;
    let status = if solution.converged { Status::Done } else { Status::NotConverged };
    finish(manifest, &[&a.out], status)
}

#[derive(Serialize)]
struct RankEntry {
    k: usize,
    penalty: f64,
    clusters: usize,
    objective: f64,
    iterations: usize,
    converged: bool,
    seed: u64,
}

#[derive(Serialize)]
struct SelectionOutput {
    variant: NmfVariant,
    loss: PenaltyKind,
    chosen_k: usize,
    chosen_penalty: f64,
    labels: Vec<usize>,
    soft_matrix: Vec<Vec<f64>>,
    per_k: Vec<RankEntry>,
}

impl From<&SelectionReport> for SelectionOutput {
    fn from(r: &SelectionReport) -> Self {
        SelectionOutput {
            variant: r.variant,
            loss: r.penalty_kind,
            chosen_k: r.chosen_k,
            chosen_penalty: r.chosen_penalty(),
            labels: r.chosen_partition.labels_one_based(),
            soft_matrix: soft_rows(&r.chosen_soft),
            per_k: r
                .per_k
                .iter()
                .map(|x| RankEntry {
                    k: x.rank,
                    penalty: x.penalty,
                    clusters: x.realized_clusters(),
                    objective: x.summary.objective,
                    iterations: x.summary.iterations,
                    converged: x.summary.converged,
                    seed: x.summary.seed,
                })
                .collect(),
        }
    }
}

fn select_cmd(a: SelectArgs, args: Vec<String>) -> Result<Status> {
    let mut manifest = RunManifest::new("select", args, Some(a.fit.seed));
    let pi = load_psm(&a.input, &mut manifest)?;
    let options = SelectionOptions {
        k_range: a.kmin..=a.kmax,
        variant: parse_variant(&a.fit.variant, a.fit.theta)?,
        penalty: a.loss.parse().map_err(input_err)?,
        starts: a.fit.starts,
        config: nmf_config(&a.fit),
        log_base: parse_base(&a.log_base)?,
        keep_all: false,
    };
    let report = select(&pi, &options)?;
    write_json(&a.out, &SelectionOutput::from(&report))?;
    let mut outputs: Vec<&Path> = vec![&a.out];

    if let Some(path) = &a.curve {
        write_with(path, |w| {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(["k", "penalty", "clusters"])?;
            for p in penalty_curve(&report) {
                csv.write_record([p.k.to_string(), format_f64(p.penalty), p.clusters.to_string()])?;
            }
            csv.flush()?;
            Ok(())
        })?;
        outputs.push(path);
    }
    if let Some(path) = &a.labels_out {
        write_with(path, |w| Ok(write_partition(w, &report.chosen_partition)?))?;
        outputs.push(path);
    }
    if let Some(path) = &a.soft_out {
        write_with(path, |w| Ok(write_matrix(w, report.chosen_soft.probs())?))?;
        outputs.push(path);
    }
    let status = if report.per_k.iter().all(|r| r.summary.converged) {
        Status::Done
    } else {
        Status::NotConverged
    };
    finish(manifest, &outputs, status)
}

fn baseline(a: BaselineArgs, args: Vec<String>) -> Result<Status> {
    let mut manifest = RunManifest::new("baseline", args, None);
    let pi = load_psm(&a.input, &mut manifest)?;
    let linkage = match a.linkage.as_str() {
        "average" => Linkage::Average,
        "complete" => Linkage::Complete,
        other => return Err(input_err(anyhow!("unknown linkage '{other}'"))),
    };
    let dendrogram = |kind| -> Result<Partition> {
        Ok(best_in_set(&pi, &hclust_candidates(&pi, linkage), kind)?.0)
    };
    let estimate = match a.method.to_ascii_lowercase().as_str() {
        "minbinder" => dendrogram(PenaltyKind::Binder)?,
        "maxpear" => dendrogram(PenaltyKind::Pear)?,
        "minvi" => dendrogram(PenaltyKind::ViLowerBound)?,
        "medv" => medvedovic(&pi, a.cut)?,
        "oracle" => oracle(&pi, a.loss.parse().map_err(input_err)?)?.0,
        other => return Err(input_err(anyhow!("unknown baseline '{other}'"))),
    };
    let binder = evaluate_base(PenaltyKind::Binder, &pi, &estimate, LogBase::Natural)?;
    eprintln!(
        "{}: {} clusters, Binder penalty {}",
        a.method,
        estimate.n_clusters(),
        format_f64(binder)
    );
    write_with(&a.out, |w| Ok(write_partition(w, &estimate)?))?;
    finish(manifest, &[&a.out], Status::Done)
}

fn evaluate(a: EvaluateArgs, args: Vec<String>) -> Result<Status> {
    let mut manifest = RunManifest::new("evaluate", args, None);
    let read = |path: &PathBuf| -> Result<Partition> {
        read_partition(open(path)?, a.header)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(input_err)
    };
    let (estimate, truth) = (read(&a.estimate)?, read(&a.truth)?);
    manifest.add_input(&a.estimate)?;
    manifest.add_input(&a.truth)?;
    let scores = score(&estimate, &truth, parse_base(&a.log_base)?).map_err(input_err)?;
    match &a.out {
        Some(path) => {
            write_json(path, &scores)?;
            finish(manifest, &[path], Status::Done)
        }
        None => {
            println!("{}", serde_json::to_string_pretty(&scores)?);
            Ok(Status::Done)
        }
    }
}

fn simulate(a: SimulateArgs, args: Vec<String>) -> Result<Status> {
    let manifest = RunManifest::new("simulate", args, Some(a.seed));
    let configs = a
        .config
        .iter()
        .map(|c| c.parse::<MixtureConfig>())
        .collect::<nmfpart::Result<Vec<_>>>()
        .map_err(input_err)?;
    let methods = if a.methods.is_empty() {
        Method::standard()
    } else {
        a.methods
            .iter()
            .map(|m| m.parse::<Method>())
            .collect::<nmfpart::Result<Vec<_>>>()
            .map_err(input_err)?
    };
    let options = BenchmarkOptions {
        configs,
        reps: a.reps,
        methods,
        gibbs: GibbsConfig {
            components: a.components,
            burn_in: a.burnin,
            kept: a.kept,
            ..GibbsConfig::default()
        },
        nmf: NmfSettings {
            k_min: a.kmin,
            k_max: a.kmax,
            starts: a.starts,
            ..NmfSettings::default()
        },
        subsample: a.subsample,
        seed: a.seed,
    };
    let table = run_benchmark(&options)?;

    let bench = a.out_dir.join("benchmark.csv");
    let kdist = a.out_dir.join("kdist.csv");
    let records = a.out_dir.join("records.csv");
    write_with(&bench, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record([
            "config", "method", "reps", "rand_mean", "rand_se", "ar_mean", "ar_se", "vi_mean", "vi_se",
        ])?;
        for r in &table.summary {
            csv.write_record([
                r.config.clone(),
                r.method.clone(),
                r.reps.to_string(),
                format_f64(r.rand_mean),
                format_f64(r.rand_se),
                format_f64(r.ar_mean),
                format_f64(r.ar_se),
                format_f64(r.vi_mean),
                format_f64(r.vi_se),
            ])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    write_with(&kdist, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["config", "method", "k", "count"])?;
        for r in &table.k_distribution {
            csv.write_record([r.config.clone(), r.method.clone(), r.k.to_string(), r.count.to_string()])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    write_with(&records, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["config", "rep", "method", "rand", "adjusted_rand", "vi", "clusters", "binder"])?;
        for r in &table.records {
            csv.write_record([
                r.config.clone(),
                r.rep.to_string(),
                r.method.clone(),
                format_f64(r.rand),
                format_f64(r.adjusted_rand),
                format_f64(r.vi),
                r.clusters.to_string(),
                format_f64(r.binder),
            ])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    finish(manifest, &[&bench, &kdist, &records], Status::Done)
}

fn timing(a: TimingArgs, args: Vec<String>) -> Result<Status> {
    let manifest = RunManifest::new("timing", args, Some(a.seed));
    let variant = parse_variant(&a.variant, a.theta)?;
    if a.iterations == 0 || a.repeats == 0 {
        return Err(input_err(anyhow!("iterations and repeats must be at least 1")));
    }
    let mut rows = Vec::new();
    for &n in &a.sizes {
        let pi = random_similarity(n, a.seed.wrapping_add(n as u64));
        for &k in &a.ranks {
            let mut best = f64::INFINITY;
            for r in 0..a.repeats {
                let t = time_iterations(&pi, k, variant, a.iterations, a.seed.wrapping_add(r as u64))?;
                best = best.min(t.as_secs_f64());
            }
            rows.push((n, k, best));
        }
    }
    write_with(&a.out, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["n", "k", "variant", "iterations", "seconds", "seconds_per_iteration"])?;
        for &(n, k, secs) in &rows {
            csv.write_record([
                n.to_string(),
                k.to_string(),
                variant.name().to_string(),
                a.iterations.to_string(),
                format_f64(secs),
                format_f64(secs / a.iterations as f64),
            ])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    finish(manifest, &[&a.out], Status::Done)
}

fn replay(a: ReplayArgs) -> Result<Status> {
    let manifest = RunManifest::read(&a.manifest).map_err(input_err)?;
    if manifest.subcommand == "replay" {
        bail!("a manifest cannot record a replay");
    }
    manifest.verify_inputs().map_err(input_err)?;
    crate::run_args(manifest.args)
}
