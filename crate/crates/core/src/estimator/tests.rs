use super::*;
use crate::cache::{CacheConfig, CachePolicy};
use crate::gnn::ModelSpec;
use crate::graph::tests::{path_graph, star};
use crate::graph::{generate_power_law, Graph};
use crate::runtime::{sample_batch_sizes, simulate, SimOptions};
use crate::sampler::SamplerConfig;

fn candidates(g: &Graph, batches: &[u32], fanouts: &[Vec<u32>]) -> Vec<Candidate> {
    let mut out = Vec::new();
    let policies = [
        (CachePolicy::None, 0.0),
        (CachePolicy::StaticDegree, 0.2),
        (CachePolicy::StaticDegree, 0.6),
        (CachePolicy::Fifo, 0.3),
        (CachePolicy::Lru, 0.4),
    ];
    for &b in batches {
        for f in fanouts {
            for (p, &(policy, ratio)) in policies.iter().enumerate() {
                let bias = [0.0, 0.5, 1.0][(out.len() + p) % 3];
                out.push(Candidate {
                    id: out.len() as u64,
                    sampler: SamplerConfig::node_wise(b, f.clone()).with_bias(bias),
                    cache: CacheConfig::with_policy(policy, ratio),
                    model: ModelSpec::uniform(g.n_attr(), 8, g.num_classes(), f.len()).unwrap(),
                });
            }
        }
    }
    out
}

fn profile(g: &Graph, tag: &str, cands: &[Candidate], seeds: &[u64]) -> Vec<ProfileRecord> {
    let hw = HardwareSpec::default();
    let mut out = Vec::new();
    for c in cands {
        for &s in seeds {
            let sim = simulate(g, c, &hw, &SimOptions::new(1, s).without_accuracy()).unwrap();
            out.push(sim.record.with_graph(tag));
        }
    }
    out
}

fn fitted(g: &Graph, kind: ModelKind) -> (Estimator, Vec<ProfileRecord>) {
    fitted_on(g, kind, &[16, 32, 64], &[vec![2], vec![4], vec![3, 2]])
}

fn fitted_on(g: &Graph, kind: ModelKind, batches: &[u32], fanouts: &[Vec<u32>]) -> (Estimator, Vec<ProfileRecord>) {
    let cands = candidates(g, batches, fanouts);
    let records = profile(g, "g", &cands, &[0]);
    let opts = FitOptions {
        graphs: BTreeMap::from([("g".to_string(), GraphProfile::of(g))]),
        target: GraphProfile::of(g),
        kind,
    };
    (Estimator::fit(&records, &opts).unwrap(), records)
}

fn power_law() -> Graph {
    generate_power_law(500, 3, 8, 4, 21).unwrap()
}

#[test]
fn needs_enough_records() {
    let g = power_law();
    let cands = candidates(&g, &[64], &[vec![2]]);
    let records = profile(&g, "g", &cands, &[0]);
    let opts = FitOptions {
        graphs: BTreeMap::from([("g".to_string(), GraphProfile::of(&g))]),
        target: GraphProfile::of(&g),
        kind: ModelKind::LinearLeastSquares,
    };
    assert!(matches!(Estimator::fit(&records, &opts), Err(Error::Fit { .. })));
}

#[test]
fn unknown_graph_is_a_fit_error() {
    let g = power_law();
    let records = profile(&g, "other", &candidates(&g, &[16, 32, 64], &[vec![2], vec![4]]), &[0]);
    let opts = FitOptions {
        graphs: BTreeMap::from([("g".to_string(), GraphProfile::of(&g))]),
        target: GraphProfile::of(&g),
        kind: ModelKind::LinearLeastSquares,
    };
    assert!(matches!(Estimator::fit(&records, &opts), Err(Error::Fit { .. })));
}

#[test]
fn duplicated_records_give_identical_estimator() {
    let g = power_law();
    let (est, records) = fitted(&g, ModelKind::LinearLeastSquares);
    let mut doubled = records.clone();
    doubled.extend(records.iter().rev().cloned());
    let opts = FitOptions {
        graphs: BTreeMap::from([("g".to_string(), GraphProfile::of(&g))]),
        target: GraphProfile::of(&g),
        kind: ModelKind::LinearLeastSquares,
    };
    assert_eq!(Estimator::fit(&doubled, &opts).unwrap(), est);
}

#[test]
fn zero_ratio_has_no_cache_memory() {
    let g = power_law();
    let (est, _) = fitted(&g, ModelKind::LinearLeastSquares);
    let mut c = candidates(&g, &[32], &[vec![3]])[1].clone();
    c.cache.ratio = 0.0;
    let p = est.predict_detailed(&c, &HardwareSpec::default()).unwrap();
    assert_eq!(p.gamma_cache, 0.0);
    assert_eq!(p.hit_rate, 0.0);
}

#[test]
fn n_iter_is_analytic() {
    let g = generate_power_law(1024, 3, 8, 4, 2).unwrap();
    let (est, _) = fitted(&g, ModelKind::LinearLeastSquares);
    let hw = HardwareSpec::default();
    let mut c = candidates(&g, &[64], &[vec![3]])[0].clone();
    let a = est.predict_detailed(&c, &hw).unwrap().n_iter;
    c.sampler.batch_target_size = 128;
    let b = est.predict_detailed(&c, &hw).unwrap().n_iter;
    assert_eq!((a, b), (16, 8));
}

#[test]
fn predictions_non_negative_and_bounded() {
    let g = power_law();
    let hw = HardwareSpec::default();
    for kind in [ModelKind::LinearLeastSquares, ModelKind::Knn] {
        let (est, _) = fitted(&g, kind);
        for c in candidates(&g, &[8, 16, 50, 128, 500], &[vec![1], vec![2], vec![6], vec![10, 10], vec![2, 2]]) {
            let p = est.predict_detailed(&c, &hw).unwrap();
            assert!(p.perf.time >= 0.0 && p.perf.memory >= 0.0);
            assert!((0.0..=1.0).contains(&p.perf.accuracy));
            assert!((0.0..=1.0).contains(&p.hit_rate));
            let b0 = c.sampler.batch_target_size as f64;
            let product: f64 = c.sampler.fanouts.iter().map(|&k| 1.0 + k as f64).product();
            assert!(p.batch_size <= b0 * product + 1e-9, "{} > {}", p.batch_size, b0 * product);
            assert!(p.batch_size <= g.num_vertices() as f64);
            assert!(p.batch_size >= 1.0);
        }
    }
}

#[test]
fn path_prediction_respects_product_bound() {
    let g = path_graph(40);
    let (est, _) = fitted_on(&g, ModelKind::LinearLeastSquares, &[1, 2, 4, 8], &[vec![1], vec![2]]);
    let c = Candidate {
        id: 0,
        sampler: SamplerConfig::node_wise(1, vec![2]),
        cache: CacheConfig::none(),
        model: ModelSpec::uniform(g.n_attr(), 8, g.num_classes(), 1).unwrap(),
    };
    assert!(est.predict_batch_size(&c).unwrap() <= 3.0);
}

#[test]
fn star_prediction_matches_monte_carlo() {
    let g = star(10);
    let (est, _) = fitted_on(&g, ModelKind::LinearLeastSquares, &[1, 2, 3, 5], &[vec![1], vec![2], vec![3], vec![5]]);
    let c = Candidate {
        id: 0,
        sampler: SamplerConfig::node_wise(1, vec![3]),
        cache: CacheConfig::none(),
        model: ModelSpec::uniform(g.n_attr(), 8, g.num_classes(), 1).unwrap(),
    };
    let mc = sample_batch_sizes(&g, &c, 10_000, 5).unwrap();
    // centre target: 4 vertices; leaf target: leaf and centre
    assert!((mc - 24.0 / 11.0).abs() < 0.05, "{mc}");
    let p = est.predict_batch_size(&c).unwrap();
    assert!((p - mc).abs() / mc < 0.10, "{p} vs {mc}");
}

#[test]
fn composition_is_exact_up_to_component_residuals() {
    let g = power_law();
    let (est, records) = fitted(&g, ModelKind::LinearLeastSquares);
    for rec in &records {
        let given = Intermediates {
            batch_size: Some(rec.mean_batch_size),
            hit_rate: Some(rec.hit_rate),
        };
        let p = est.predict_with(&rec.candidate().unwrap(), &rec.hardware(), given).unwrap();
        let ds = (p.t_sample - rec.t_sample).abs();
        let dt = (p.t_transfer - rec.t_transfer).abs();
        let dr = (p.t_replace - rec.t_replace).abs();
        let dc = (p.t_compute - rec.t_compute).abs();
        let slack = rec.n_iter as f64 * (ds + dt).max(dr + dc);
        assert!((p.perf.time - rec.time).abs() <= slack * (1.0 + 1e-9) + 1e-15);
        assert_eq!(p.n_iter, rec.n_iter);
        assert_eq!(p.gamma_model, rec.gamma_model as f64);
    }
}

#[test]
fn exact_components_are_recovered() {
    let g = power_law();
    let (est, records) = fitted(&g, ModelKind::LinearLeastSquares);
    for rec in &records {
        let given = Intermediates {
            batch_size: Some(rec.mean_batch_size),
            hit_rate: Some(rec.hit_rate),
        };
        let p = est.predict_with(&rec.candidate().unwrap(), &rec.hardware(), given).unwrap();
        // sampling, transfer and cache size are exact functions of the
        // measured intermediates
        assert!((p.t_sample - rec.t_sample).abs() <= 1e-9 * rec.t_sample.max(1e-12));
        assert!((p.t_transfer - rec.t_transfer).abs() <= 1e-9 * rec.t_transfer);
        assert!((p.gamma_cache - rec.gamma_cache as f64).abs() <= 1e-6);
    }
}

#[test]
fn floors_never_exceed_predictions() {
    let g = power_law();
    let hw = HardwareSpec::default();
    let (est, _) = fitted(&g, ModelKind::LinearLeastSquares);
    for c in candidates(&g, &[8, 16, 50, 128, 500], &[vec![1], vec![6], vec![10, 10]]) {
        let p = est.predict(&c, &hw).unwrap();
        assert!(est.time_floor(&c, &hw).unwrap() <= p.time * (1.0 + 1e-12));
        let mf = est.memory_floor(&c).unwrap();
        assert!(mf <= p.memory * (1.0 + 1e-12));
        assert!(mf >= gamma_model_of(&c));
    }
}

fn gamma_model_of(c: &Candidate) -> f64 {
    crate::runtime::gamma_model(&c.model) as f64
}

#[test]
fn json_round_trip_and_state_checks() {
    let g = power_law();
    let (est, _) = fitted(&g, ModelKind::Knn);
    let back = Estimator::from_json(&est.to_json().unwrap()).unwrap();
    assert_eq!(back, est);
    let mut broken = est.clone();
    broken.components.pop();
    let c = candidates(&g, &[32], &[vec![2]])[0].clone();
    assert!(matches!(broken.predict(&c, &HardwareSpec::default()), Err(Error::State(_))));
    assert!(Estimator::from_json(&broken.to_json().unwrap()).is_err());
}

#[test]
fn retarget_changes_only_the_graph() {
    let g = power_law();
    let (est, _) = fitted(&g, ModelKind::LinearLeastSquares);
    let other = GraphProfile::of(&generate_power_law(900, 3, 8, 4, 1).unwrap());
    let moved = est.retarget(other.clone());
    assert_eq!(moved.graph, other);
    assert_eq!(moved.components, est.components);
}

#[test]
fn metric_definitions() {
    let perfect = [(1.0, 1.0), (2.0, 2.0), (4.0, 4.0)];
    assert_eq!(r2(&perfect), 1.0);
    assert_eq!(mse(&perfect), 0.0);
    assert_eq!(mare(&perfect), 0.0);
    let mean_only = [(1.0, 2.0), (3.0, 2.0)];
    assert_eq!(r2(&mean_only), 0.0);
    assert_eq!(mse(&mean_only), 1.0);
    assert!((mare(&[(2.0, 3.0), (4.0, 3.0)]) - 0.375).abs() < 1e-12);
}

#[test]
fn validate_reports_all_metrics() {
    let g = power_law();
    let (est, records) = fitted(&g, ModelKind::LinearLeastSquares);
    let m = est.validate(&records).unwrap();
    assert_eq!(m.count, records.len());
    assert!(m.r2_time.is_finite() && m.r2_memory.is_finite() && m.mse_accuracy >= 0.0);
    assert!(est.validate(&records[..3]).is_err());
}
