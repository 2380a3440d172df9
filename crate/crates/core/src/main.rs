use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use gnnav::config::RunConfig;
use gnnav::estimator::{Estimator, FitOptions, Metrics, MIN_RECORDS};
use gnnav::explorer::{explore, rank_report, write_report, Guideline};
use gnnav::graph::{Graph, GraphProfile};
use gnnav::runtime::{read_csv, simulate, write_csv, write_jsonl, MemoryBreakdown, Perf, ProfileRecord, SimOptions};
use gnnav::Error;

#[derive(Parser)]
#[command(name = "gnnav", version, about = "Mini-batch GNN training simulator, estimator and design-space explorer")]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Single seed; overrides the config's seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for profiling and exploration.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build every configured graph and write it in binary form.
    GenGraph,
    /// Simulate candidates on every graph and append profiling records.
    Profile,
    /// Fit the estimator and validate it on the held-out target graph.
    Fit,
    /// Search the design space for a guideline on the target graph.
    Explore,
    /// Run the chosen guideline on the simulator and compare with the estimate.
    Verify,
}

const RECORDS_CSV: &str = "records.csv";
const RECORDS_JSONL: &str = "records.jsonl";
const PROFILES: &str = "graph_profiles.json";
const ESTIMATOR: &str = "estimator.json";
const METRICS: &str = "metrics.json";
const GUIDELINE: &str = "guideline.json";
const REPORT: &str = "report.csv";
const VERIFY: &str = "verify.json";

/// Exit status for requirements no candidate can meet.
const EXIT_INFEASIBLE: u8 = 2;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let infeasible = matches!(e.downcast_ref::<Error>(), Some(Error::NoFeasible { .. } | Error::Infeasible { .. }));
            ExitCode::from(if infeasible { EXIT_INFEASIBLE } else { 1 })
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let path = cli.config.as_ref().context("--config is required")?;
    let mut cfg = RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            bail!("--jobs must be positive");
        }
        // fails only if a pool already exists, which never happens here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    fs::create_dir_all(&cfg.out)?;
    match cli.cmd {
        Cmd::GenGraph => gen_graph(&cfg, cli.force),
        Cmd::Profile => profile(&cfg),
        Cmd::Fit => fit(&cfg),
        Cmd::Explore => explore_cmd(&cfg),
        Cmd::Verify => verify(&cfg),
    }
}

fn out(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.out.join(name)
}

/// The stored graph when `gen-graph` has run, else a fresh build.
fn graph(cfg: &RunConfig, tag: &str) -> anyhow::Result<Graph> {
    let file = cfg.graph_file(tag);
    if file.exists() {
        return Ok(Graph::load(&file).with_context(|| format!("loading {}", file.display()))?);
    }
    let entry = cfg.graph(tag).with_context(|| format!("unknown graph {tag}"))?;
    Ok(entry.build()?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let s = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&s)?)
}

fn gen_graph(cfg: &RunConfig, force: bool) -> anyhow::Result<()> {
    fs::create_dir_all(cfg.out.join("graphs"))?;
    let mut profiles = BTreeMap::new();
    for entry in &cfg.graphs {
        let file = cfg.graph_file(&entry.tag);
        if file.exists() && !force {
            bail!("{} exists; pass --force to overwrite", file.display());
        }
        let g = entry.build()?;
        g.save(&file)?;
        let p = GraphProfile::of(&g);
        info!("{}: {} vertices, {} edges -> {}", entry.tag, p.num_vertices, p.num_edges, file.display());
        profiles.insert(entry.tag.clone(), p);
    }
    write_json(&out(cfg, PROFILES), &profiles)
}

fn profile(cfg: &RunConfig) -> anyhow::Result<()> {
    let csv = out(cfg, RECORDS_CSV);
    let existing = if csv.exists() { read_csv(&csv)? } else { Vec::new() };
    let done: BTreeSet<_> = existing.iter().map(ProfileRecord::key).collect();
    let mut profiles = BTreeMap::new();
    let mut fresh = Vec::new();
    for entry in &cfg.graphs {
        let g = graph(cfg, &entry.tag)?;
        let p = GraphProfile::of(&g);
        let jobs: Vec<(u64, u64)> = cfg
            .profile_ids(&p)
            .into_iter()
            .flat_map(|id| cfg.seeds.iter().map(move |&s| (id, s)))
            .filter(|&(id, s)| !done.contains(&(entry.tag.clone(), id, s)))
            .collect();
        info!("{}: profiling {} runs ({} already recorded)", entry.tag, jobs.len(), done.iter().filter(|k| k.0 == entry.tag).count());
        let runs: Vec<Option<ProfileRecord>> = jobs
            .par_iter()
            .map(|&(id, seed)| {
                let cand = cfg.space.candidate(id, &p);
                match simulate(&g, &cand, &cfg.hardware, &SimOptions::new(cfg.epochs, seed)) {
                    Ok(sim) => Ok(Some(sim.record.with_graph(&entry.tag))),
                    Err(e @ Error::Infeasible { .. }) => {
                        warn!("{}: skipping candidate {id} seed {seed}: {e}", entry.tag);
                        Ok(None)
                    }
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<_, Error>>()?;
        fresh.extend(runs.into_iter().flatten());
        profiles.insert(entry.tag.clone(), p);
    }
    fresh.sort_by_key(ProfileRecord::key);
    write_csv(&csv, &fresh)?;
    write_jsonl(out(cfg, RECORDS_JSONL), &fresh)?;
    write_json(&out(cfg, PROFILES), &profiles)?;
    info!("appended {} records to {}", fresh.len(), csv.display());
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct FitReport {
    kind: String,
    /// `held_out` when the target graph's records were kept out of fitting.
    split: String,
    fit_graphs: Vec<String>,
    validated_on: String,
    metrics: Metrics,
}

fn profiles(cfg: &RunConfig) -> anyhow::Result<BTreeMap<String, GraphProfile>> {
    let path = out(cfg, PROFILES);
    if path.exists() {
        return read_json(&path);
    }
    cfg.graphs.iter().map(|e| Ok((e.tag.clone(), GraphProfile::of(&graph(cfg, &e.tag)?)))).collect()
}

fn fit(cfg: &RunConfig) -> anyhow::Result<()> {
    let records = read_csv(out(cfg, RECORDS_CSV)).context("no records; run `profile` first")?;
    let graphs = profiles(cfg)?;
    let target = graphs.get(&cfg.target).with_context(|| format!("no profile for {}", cfg.target))?.clone();
    let (held, rest): (Vec<_>, Vec<_>) = records.iter().cloned().partition(|r| r.graph == cfg.target);
    // leave the target graph out when the other graphs can carry the fit
    let (train, val, split) = if rest.len() >= MIN_RECORDS && held.len() >= 5 {
        (rest, held, "held_out")
    } else {
        warn!("too few records off the target graph; validating in sample");
        (records.clone(), records, "in_sample")
    };
    let opts = FitOptions { graphs: graphs.clone(), target, kind: cfg.fit.kind };
    let est = Estimator::fit(&train, &opts)?;
    let metrics = est.validate(&val)?;
    let fit_graphs: BTreeSet<String> = train.iter().map(|r| r.graph.clone()).collect();
    let report = FitReport {
        kind: cfg.fit.kind.as_str().to_string(),
        split: split.to_string(),
        fit_graphs: fit_graphs.into_iter().collect(),
        validated_on: if split == "held_out" { cfg.target.clone() } else { "all".to_string() },
        metrics,
    };
    est.save(out(cfg, ESTIMATOR))?;
    write_json(&out(cfg, METRICS), &report)?;
    println!(
        "r2_time {:.4}  r2_memory {:.4}  mse_accuracy {:.5}  mare_batch_size {:.4}  ({} records, {split})",
        metrics.r2_time, metrics.r2_memory, metrics.mse_accuracy, metrics.mare_batch_size, metrics.count
    );
    Ok(())
}

fn explore_cmd(cfg: &RunConfig) -> anyhow::Result<()> {
    let est = Estimator::load(out(cfg, ESTIMATOR)).context("no estimator; run `fit` first")?;
    let guideline = explore(&cfg.space, &est, &cfg.hardware, &cfg.requirements)?;
    fs::write(out(cfg, GUIDELINE), guideline.to_json()?)?;
    write_report(out(cfg, REPORT), &rank_report(&guideline))?;
    let e = guideline.estimated;
    println!(
        "chosen {} ({}): {}\n  estimated time {:.4e} s  memory {:.0} B  accuracy {:.4}\n  pareto {}  evaluated {}  pruned {} of {}",
        guideline.chosen_id,
        guideline.provenance,
        guideline.chosen.describe(),
        e.time,
        e.memory,
        e.accuracy,
        guideline.pareto_set.len(),
        guideline.evaluated,
        guideline.pruned,
        guideline.space_size
    );
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct Verification {
    candidate_id: u64,
    seed: u64,
    estimated: Perf,
    measured: Perf,
    measured_memory: MemoryBreakdown,
    relative_error: Perf,
}

fn relative(est: f64, measured: f64) -> f64 {
    if measured == 0.0 {
        if est == 0.0 { 0.0 } else { f64::INFINITY }
    } else {
        (est - measured).abs() / measured.abs()
    }
}

fn verify(cfg: &RunConfig) -> anyhow::Result<()> {
    let s = fs::read_to_string(out(cfg, GUIDELINE)).context("no guideline; run `explore` first")?;
    let guideline = Guideline::from_json(&s)?;
    let g = graph(cfg, &cfg.target)?;
    let seed = cfg.seeds[0];
    let sim = simulate(&g, &guideline.chosen, &cfg.hardware, &SimOptions::new(cfg.epochs, seed))?;
    let (e, m) = (guideline.estimated, sim.perf);
    let v = Verification {
        candidate_id: guideline.chosen_id,
        seed,
        estimated: e,
        measured: m,
        measured_memory: sim.memory,
        relative_error: Perf {
            time: relative(e.time, m.time),
            memory: relative(e.memory, m.memory),
            accuracy: relative(e.accuracy, m.accuracy),
        },
    };
    write_json(&out(cfg, VERIFY), &v)?;
    println!("{:<10} {:>14} {:>14} {:>10}", "metric", "estimated", "measured", "rel_err");
    println!("{:<10} {:>14.6e} {:>14.6e} {:>10.4}", "time", e.time, m.time, v.relative_error.time);
    println!("{:<10} {:>14.0} {:>14.0} {:>10.4}", "memory", e.memory, m.memory, v.relative_error.memory);
    println!("{:<10} {:>14.4} {:>14.4} {:>10.4}", "accuracy", e.accuracy, m.accuracy, v.relative_error.accuracy);
    println!(
        "measured memory: model {} + cache {} + runtime {} = {}",
        sim.memory.model,
        sim.memory.cache,
        sim.memory.runtime,
        sim.memory.total()
    );
    Ok(())
}
