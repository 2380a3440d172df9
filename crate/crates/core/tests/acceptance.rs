//! Acceptance criteria 1 to 6. Every criterion prints one PASS/FAIL line;
//! the test fails if any of them fails.
//!
//! Run alone with `cargo test -p gnnav-core --test acceptance -- --nocapture`.

mod support;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::Instant;

use gnnav::estimator::{mare, BlackBoxBatchSize, Estimator, FitOptions, ModelKind};
use gnnav::explorer::{explore, search, templates, DesignSpace, Priority, Requirements};
use gnnav::graph::{generate_power_law, Graph, GraphProfile};
use gnnav::runtime::{sample_batch_sizes, simulate, transfer_volume, HardwareSpec, Perf, ProfileRecord, SimOptions};
use gnnav::Error;
use proptest::test_runner::{Config, TestRunner};
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

const SIZES: [usize; 3] = [2000, 5000, 10000];
const PER_GRAPH: usize = 80;
const EPOCHS: usize = 2;
const MC_SAMPLES: usize = 10_000;
const SWEEP: usize = 100;

struct Bench {
    graphs: BTreeMap<String, Graph>,
    profiles: BTreeMap<String, GraphProfile>,
    records: Vec<ProfileRecord>,
}

fn tag(n: usize) -> String {
    format!("g{n}")
}

fn bench() -> Bench {
    let space = DesignSpace::default();
    let hw = HardwareSpec::default();
    let mut graphs = BTreeMap::new();
    let mut profiles = BTreeMap::new();
    let mut records = Vec::new();
    for (i, &n) in SIZES.iter().enumerate() {
        let g = generate_power_law(n, 4, 32, 4, 100 + i as u64).unwrap();
        let p = GraphProfile::of(&g);
        let mut r = gnnav::rng::rng(7 + i as u64);
        let ids: Vec<u64> = index::sample(&mut r, space.size() as usize, PER_GRAPH).into_iter().map(|x| x as u64).collect();
        let recs: Vec<ProfileRecord> = ids
            .par_iter()
            .map(|&id| {
                let c = space.candidate(id, &p);
                simulate(&g, &c, &hw, &SimOptions::new(EPOCHS, 1)).unwrap().record.with_graph(tag(n))
            })
            .collect();
        records.extend(recs);
        profiles.insert(tag(n), p);
        graphs.insert(tag(n), g);
    }
    Bench { graphs, profiles, records }
}

fn fit_without(b: &Bench, held: &str) -> Estimator {
    let train: Vec<ProfileRecord> = b.records.iter().filter(|r| r.graph != held).cloned().collect();
    let opts = FitOptions {
        graphs: b.profiles.clone(),
        target: b.profiles[held].clone(),
        kind: ModelKind::LinearLeastSquares,
    };
    Estimator::fit(&train, &opts).unwrap()
}

/// Leave-one-graph-out R^2 of time and memory and MSE of accuracy.
fn criterion_1(b: &Bench) -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for &n in &SIZES {
        let held = tag(n);
        let est = fit_without(b, &held);
        let val: Vec<ProfileRecord> = b.records.iter().filter(|r| r.graph == held).cloned().collect();
        let m = est.validate(&val).unwrap();
        ok &= m.count >= 50 && m.r2_time >= 0.70 && m.r2_memory >= 0.70 && m.mse_accuracy <= 0.05;
        parts.push(format!(
            "{held}: n={} r2_time={:.3} r2_memory={:.3} mse_acc={:.4}",
            m.count, m.r2_time, m.r2_memory, m.mse_accuracy
        ));
    }
    (ok, parts.join("; "))
}

/// Gray-box vs black-box batch size against a Monte-Carlo oracle on a
/// held-out graph.
fn criterion_2(b: &Bench) -> (bool, String) {
    let held = tag(SIZES[0]);
    let est = fit_without(b, &held);
    let train: Vec<ProfileRecord> = b.records.iter().filter(|r| r.graph != held).cloned().collect();
    let black = BlackBoxBatchSize::fit(&train, &b.profiles).unwrap();
    let g = &b.graphs[&held];
    let p = &b.profiles[&held];
    let space = DesignSpace::default();
    let mut r = gnnav::rng::rng(0xC2);
    let ids: Vec<u64> = index::sample(&mut r, space.size() as usize, SWEEP).into_iter().map(|x| x as u64).collect();
    let rows: Vec<(f64, f64, f64)> = ids
        .par_iter()
        .map(|&id| {
            let c = space.candidate(id, p);
            let truth = sample_batch_sizes(g, &c, MC_SAMPLES, id).unwrap();
            (truth, est.predict_batch_size(&c).unwrap(), black.predict(&c, p))
        })
        .collect();
    let gray = mare(&rows.iter().map(|r| (r.1, r.0)).collect::<Vec<_>>());
    let bb = mare(&rows.iter().map(|r| (r.2, r.0)).collect::<Vec<_>>());
    (gray <= 0.10 && gray < bb, format!("held out {held}, {SWEEP} candidates: gray MARE {gray:.4}, black-box MARE {bb:.4}"))
}

fn brute_front(points: &[(u64, Perf)]) -> BTreeSet<u64> {
    let dom = |a: &Perf, b: &Perf| {
        a.time <= b.time
            && a.memory <= b.memory
            && a.accuracy >= b.accuracy
            && (a.time < b.time || a.memory < b.memory || a.accuracy > b.accuracy)
    };
    points
        .iter()
        .filter(|(id, p)| !points.iter().any(|(j, q)| dom(q, p) || (q == p && j < id)))
        .map(|(id, _)| *id)
        .collect()
}

fn brute_choice(front: &[(u64, Perf)], priority: Priority) -> u64 {
    let w = priority.weights();
    let span = |f: fn(&Perf) -> f64| {
        let lo = front.iter().map(|p| f(&p.1)).fold(f64::INFINITY, f64::min);
        let hi = front.iter().map(|p| f(&p.1)).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    let norm = |x: f64, (lo, hi): (f64, f64)| if hi > lo { (x - lo) / (hi - lo) } else { 0.0 };
    let (t, m, a) = (span(|p| p.time), span(|p| p.memory), span(|p| -p.accuracy));
    let mut scored: Vec<(f64, Perf, u64)> = front
        .iter()
        .map(|&(id, p)| (w[0] * norm(p.time, t) + w[1] * norm(p.memory, m) + w[2] * norm(-p.accuracy, a), p, id))
        .collect();
    scored.sort_by(|x, y| {
        x.0.total_cmp(&y.0)
            .then(x.1.time.total_cmp(&y.1.time))
            .then(x.1.memory.total_cmp(&y.1.memory))
            .then(y.1.accuracy.total_cmp(&x.1.accuracy))
            .then(x.2.cmp(&y.2))
    });
    scored[0].2
}

/// Explorer output equals exhaustive enumeration; pruning never removes a
/// feasible candidate.
fn criterion_3(b: &Bench) -> (bool, String) {
    let est = fit_without(b, &tag(SIZES[1]));
    let hw = HardwareSpec::default();
    let space = DesignSpace::default();
    assert!(space.size() <= 10_000);
    let all: Vec<(u64, Perf)> = (0..space.size()).map(|id| (id, est.predict(&space.candidate(id, &est.graph), &hw).unwrap())).collect();
    let quantile = |f: fn(&Perf) -> f64, q: f64| {
        let mut v: Vec<f64> = all.iter().map(|p| f(&p.1)).collect();
        v.sort_by(f64::total_cmp);
        v[((v.len() - 1) as f64 * q) as usize]
    };
    let mut r = gnnav::rng::rng(0xC3);
    let priorities = [Priority::Bal, Priority::ExTm, Priority::ExMa, Priority::ExTa];
    let (mut mismatches, mut false_prunes, mut pruned_total, mut infeasible) = (0, 0u64, 0u64, 0);
    for _ in 0..20 {
        let mut pick = |f: fn(&Perf) -> f64| r.random_bool(0.7).then(|| quantile(f, r.random_range(0.02..0.9)));
        let req = Requirements {
            max_time: pick(|p| p.time),
            max_memory: pick(|p| p.memory),
            min_accuracy: pick(|p| -p.accuracy).map(|x| -x),
            priority: priorities[r.random_range(0..4)],
        };
        let ex = search(&space, &est, &hw, &req).unwrap();
        let tpl: BTreeSet<u64> = ex.templates.iter().map(|t| t.1).collect();
        for &(lo, hi) in &ex.pruned {
            for id in (lo..hi).filter(|id| !tpl.contains(id)) {
                pruned_total += 1;
                false_prunes += req.admits(&all[id as usize].1) as u64;
            }
        }
        let feasible: Vec<(u64, Perf)> = all.iter().filter(|p| req.admits(&p.1)).copied().collect();
        match explore(&space, &est, &hw, &req) {
            Err(Error::NoFeasible { .. }) => {
                infeasible += 1;
                mismatches += !feasible.is_empty() as usize;
            }
            Ok(gl) => {
                let want = brute_front(&feasible);
                let got: BTreeSet<u64> = gl.pareto_set.iter().map(|e| e.id).collect();
                let front: Vec<(u64, Perf)> = feasible.iter().filter(|p| want.contains(&p.0)).copied().collect();
                mismatches += (got != want || gl.chosen_id != brute_choice(&front, req.priority)) as usize;
            }
            Err(e) => panic!("{e}"),
        }
    }
    (
        mismatches == 0 && false_prunes == 0,
        format!(
            "space {}: 20 settings, {mismatches} mismatches, {false_prunes} false prunes of {pruned_total} pruned, {infeasible} infeasible settings",
            space.size()
        ),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Directional trade-offs between the templates, by the sign of the median
/// paired difference over 5 seeds.
fn criterion_4(b: &Bench) -> (bool, String) {
    let key = tag(SIZES[0]);
    let g = &b.graphs[&key];
    let p = &b.profiles[&key];
    let hw = HardwareSpec::default();
    let by_name: BTreeMap<String, _> = templates().into_iter().map(|t| (t.name.clone(), t.candidate(p))).collect();
    let pyg = &by_name["pyg-like"];
    let full = &by_name["pagraph-full"];
    let two = &by_name["2pgraph-like"];
    // the unbiased static cache at the 2pgraph ratio
    let mut same_ratio = two.clone();
    same_ratio.sampler.locality_bias = 0.0;
    let mut d = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    for seed in 0..5 {
        let run = |c| simulate(g, c, &hw, &SimOptions::new(EPOCHS, seed)).unwrap();
        let volume = |s: &gnnav::runtime::Simulation| s.iterations.iter().map(|i| transfer_volume(i.misses, g.n_attr())).sum::<u64>() as f64;
        let (a, f, t, u) = (run(pyg), run(full), run(two), run(&same_ratio));
        d[0].push(volume(&f) - volume(&a));
        d[1].push(f.perf.memory - a.perf.memory);
        d[2].push(t.record.hit_rate - u.record.hit_rate);
        d[3].push(t.perf.accuracy - a.perf.accuracy);
    }
    let m: Vec<f64> = d.into_iter().map(median).collect();
    (
        m[0] < 0.0 && m[1] > 0.0 && m[2] > 0.0 && m[3] < 0.0,
        format!(
            "median diffs on {key}: transfer(pagraph-full - pyg) {:.3e} B, memory {:.3e} B, hit(2pgraph - static@0.3) {:+.4}, accuracy(2pgraph - pyg) {:+.4}",
            m[0], m[1], m[2], m[3]
        ),
    )
}

/// Property suites over 200 random instances each.
fn criterion_5() -> (bool, String) {
    fn run<S: proptest::strategy::Strategy>(
        name: &str,
        strategy: S,
        check: impl Fn(&S::Value) -> Result<(), proptest::test_runner::TestCaseError>,
    ) -> Result<String, String> {
        let mut runner = TestRunner::new(Config {
            cases: support::CASES,
            failure_persistence: None,
            ..Config::default()
        });
        runner.run(&strategy, |v| check(&v)).map(|_| format!("{name} ok")).map_err(|e| format!("{name}: {e}"))
    }
    let results = [
        run("pipeline law", support::sim_case(), support::pipeline_law),
        run("memory additivity", support::sim_case(), support::memory_additivity),
        run("cache capacity", support::cache_case(), support::cache_capacity),
        run("sampler soundness", support::sampler_sound_case(), support::sampler_soundness),
        run("gradient vs finite differences", support::grad_case(), support::gradient_check),
    ];
    let ok = results.iter().all(Result::is_ok);
    let text: Vec<String> = results.into_iter().map(|r| r.unwrap_or_else(|e| e)).collect();
    (ok, format!("{} cases each: {}", support::CASES, text.join(", ")))
}

fn pipeline(dir: &std::path::Path) -> Vec<u8> {
    let cfg = serde_json::json!({
        "graphs": [
            {"tag": "a", "synthetic": {"num_vertices": 800, "m": 4, "n_attr": 16, "seed": 21}},
            {"tag": "b", "synthetic": {"num_vertices": 1200, "m": 4, "n_attr": 16, "seed": 22}}
        ],
        "target": "b",
        "space": {
            "batch_sizes": [64, 128], "fanouts": [[5], [10, 5]],
            "modes": ["node_wise", "layer_wise", "subgraph_wise"], "locality_biases": [0.0, 1.0],
            "cache_ratios": [0.1, 0.3, 0.9], "cache_policies": ["none", "static_degree", "fifo", "lru"],
            "hidden_dims": [16, 32], "walk_hops": [4]
        },
        "requirements": {"priority": "bal"},
        "profile": {"candidates": 40},
        "epochs": 1,
        "seeds": [3],
        "out": dir.join("out")
    });
    let path = dir.join("config.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    for cmd in ["gen-graph", "profile", "fit", "explore", "verify"] {
        let out = Command::new(env!("CARGO_BIN_EXE_gnnav")).arg("--config").arg(&path).arg(cmd).output().unwrap();
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    std::fs::read(dir.join("out/guideline.json")).unwrap()
}

/// Two full command-line runs give byte-identical guidelines.
fn criterion_6() -> (bool, String) {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (x, y) = (pipeline(a.path()), pipeline(b.path()));
    (x == y && !x.is_empty(), format!("guideline.json {} bytes, identical: {}", x.len(), x == y))
}

fn report(n: usize, name: &str, f: impl FnOnce() -> (bool, String)) -> bool {
    let start = Instant::now();
    let (ok, detail) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(e) => {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            (false, format!("panicked: {}", msg.unwrap_or_default()))
        }
    };
    println!(
        "criterion {n} {name}: {} ({detail}) [{:.1}s]",
        if ok { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64()
    );
    ok
}

#[test]
fn acceptance_criteria() {
    let start = Instant::now();
    let b = bench();
    println!("profiled {} records on {} graphs in {:.1}s", b.records.len(), b.graphs.len(), start.elapsed().as_secs_f64());
    let results = [
        report(1, "estimator quality", || criterion_1(&b)),
        report(2, "batch-size fidelity", || criterion_2(&b)),
        report(3, "explorer correctness", || criterion_3(&b)),
        report(4, "template trade-offs", || criterion_4(&b)),
        report(5, "simulator and analytic invariants", criterion_5),
        report(6, "pipeline determinism", criterion_6),
    ];
    let failed: Vec<usize> = results.iter().enumerate().filter(|r| !r.1).map(|r| r.0 + 1).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
