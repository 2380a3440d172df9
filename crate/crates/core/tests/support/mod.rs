//! Randomised instances and property checks shared by the property suite
//! and the acceptance runner.

#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};

use gnnav::cache::{CacheConfig, CachePolicy, CacheState};
use gnnav::gnn::{loss_and_gradient, Aggregate, ModelSpec, Params};
use gnnav::graph::{generate_power_law, Graph};
use gnnav::runtime::{simulate, Candidate, HardwareSpec, SimOptions};
use gnnav::sampler::{partition_targets, sample_minibatch, MiniBatch, SamplerConfig, SamplerMode, Selection};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub const CASES: u32 = 200;

#[derive(Debug, Clone)]
pub struct GraphCase {
    pub n: usize,
    pub m: usize,
    pub n_attr: usize,
    pub classes: usize,
    pub seed: u64,
}

impl GraphCase {
    pub fn build(&self) -> Graph {
        generate_power_law(self.n, self.m, self.n_attr, self.classes, self.seed).unwrap()
    }
}

pub fn graph_case() -> impl Strategy<Value = GraphCase> {
    (40usize..240, 1usize..5, 2usize..12, 2usize..5, any::<u64>()).prop_map(|(n, m, n_attr, classes, seed)| GraphCase {
        n,
        m,
        n_attr,
        classes,
        seed,
    })
}

#[derive(Debug, Clone)]
pub struct SamplerCase {
    pub mode: SamplerMode,
    pub batch: u32,
    pub fanouts: Vec<u32>,
    pub budgets: Vec<u32>,
    pub hops: u32,
    pub bias: f64,
    pub bernoulli: bool,
}

impl SamplerCase {
    pub fn config(&self, n: usize) -> SamplerConfig {
        let batch = self.batch.min(n as u32);
        let cfg = match self.mode {
            SamplerMode::NodeWise => SamplerConfig::node_wise(batch, self.fanouts.clone()),
            SamplerMode::LayerWise => SamplerConfig::layer_wise(batch, self.budgets.clone()),
            SamplerMode::SubgraphWise => SamplerConfig::subgraph_wise(batch, self.fanouts.len(), self.hops),
        };
        let sel = if self.bernoulli { Selection::Bernoulli } else { Selection::ExactK };
        cfg.with_bias(self.bias).with_selection(sel)
    }
}

pub fn sampler_case() -> impl Strategy<Value = SamplerCase> {
    (
        prop_oneof![Just(SamplerMode::NodeWise), Just(SamplerMode::LayerWise), Just(SamplerMode::SubgraphWise)],
        1u32..64,
        prop::collection::vec(1u32..9, 1..4),
        prop::collection::vec(1u32..80, 3),
        1u32..7,
        prop_oneof![Just(0.0), Just(1.0), 0.0f64..=1.0],
        any::<bool>(),
    )
        .prop_map(|(mode, batch, fanouts, budgets, hops, bias, bernoulli)| {
            let layers = fanouts.len();
            SamplerCase {
                mode,
                batch,
                fanouts,
                budgets: budgets[..layers].to_vec(),
                hops,
                bias,
                bernoulli,
            }
        })
}

pub fn cache_config() -> impl Strategy<Value = CacheConfig> {
    (0usize..4, 0.0f64..=1.0, any::<bool>()).prop_map(|(p, ratio, update)| {
        let policy = CachePolicy::ALL[p];
        CacheConfig {
            ratio,
            policy,
            update_enabled: update && policy.updates(),
        }
    })
}

#[derive(Debug, Clone)]
pub struct SimCase {
    pub graph: GraphCase,
    pub sampler: SamplerCase,
    pub cache: CacheConfig,
    pub hidden: usize,
    /// log10 multipliers of the four default hardware rates
    pub scales: [f64; 4],
    pub seed: u64,
}

impl SimCase {
    pub fn candidate(&self, g: &Graph) -> Candidate {
        let sampler = self.sampler.config(g.num_vertices());
        let model = ModelSpec::uniform(g.n_attr(), self.hidden, g.num_classes(), sampler.num_layers).unwrap();
        Candidate {
            id: self.seed % 1000,
            sampler,
            cache: self.cache,
            model,
        }
    }

    pub fn hardware(&self) -> HardwareSpec {
        let d = HardwareSpec::default();
        let s = |i: usize| 10f64.powf(self.scales[i]);
        HardwareSpec {
            host_sample_rate: d.host_sample_rate * s(0),
            link_bandwidth: d.link_bandwidth * s(1),
            replace_rate: d.replace_rate * s(2),
            device_flops: d.device_flops * s(3),
            device_memory: u64::MAX / 4,
            ..d
        }
    }
}

pub fn sim_case() -> impl Strategy<Value = SimCase> {
    (graph_case(), sampler_case(), cache_config(), 1usize..24, [-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0], any::<u64>())
        .prop_map(|(graph, sampler, cache, hidden, scales, seed)| SimCase {
            graph,
            sampler,
            cache,
            hidden,
            scales,
            seed,
        })
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Epoch time is `n_iter * max(host stage, device stage)`, with every stage
/// time recomputed here from the raw per-iteration counters.
pub fn pipeline_law(case: &SimCase) -> Result<(), TestCaseError> {
    let g = case.graph.build();
    let cand = case.candidate(&g);
    let hw = case.hardware();
    let sim = simulate(&g, &cand, &hw, &SimOptions::new(1, case.seed).without_accuracy()).unwrap();
    let n = g.num_vertices();
    let b = cand.sampler.batch_target_size as usize;
    let iters = n.div_ceil(b);
    prop_assert_eq!(sim.record.n_iter, iters);
    prop_assert_eq!(sim.iterations.len(), iters);
    let dims = &cand.model.dims;
    let (mut host, mut dev) = (0.0, 0.0);
    for s in &sim.iterations {
        let flops: u64 = (0..dims.len() - 1)
            .map(|l| 2 * (s.vertices * dims[l] * dims[l + 1]) as u64 + 2 * (s.edges * dims[l]) as u64)
            .sum();
        prop_assert_eq!(s.flops, flops);
        let ts = (s.vertices - s.targets) as f64 / hw.host_sample_rate;
        let tt = hw.link_latency + (s.misses * g.n_attr() * 4) as f64 / hw.link_bandwidth;
        let tr = s.replaced as f64 / hw.replace_rate;
        let tc = flops as f64 / hw.device_flops;
        host += ts + tt;
        dev += tr + tc;
    }
    host /= iters as f64;
    dev /= iters as f64;
    let t = sim.perf.time;
    prop_assert!(close(t, iters as f64 * host.max(dev), 1e-9), "T {} vs {}", t, iters as f64 * host.max(dev));
    prop_assert!(t >= iters as f64 * host * (1.0 - 1e-12));
    prop_assert!(t >= iters as f64 * dev * (1.0 - 1e-12));
    Ok(())
}

/// `Gamma = 12|Phi| + cap * n_attr * 4 + width_sum * max|V_i| * 4`.
pub fn memory_additivity(case: &SimCase) -> Result<(), TestCaseError> {
    let g = case.graph.build();
    let cand = case.candidate(&g);
    let sim = simulate(&g, &cand, &case.hardware(), &SimOptions::new(1, case.seed).without_accuracy()).unwrap();
    let dims = &cand.model.dims;
    let phi: usize = dims.windows(2).map(|w| w[0] * w[1]).sum();
    let width: usize = dims.iter().sum();
    let cap = if cand.cache.policy == CachePolicy::None {
        0
    } else {
        (cand.cache.ratio * g.num_vertices() as f64).floor() as usize
    };
    let peak = sim.iterations.iter().map(|s| s.vertices).max().unwrap();
    let r = &sim.record;
    prop_assert_eq!(r.gamma_model, 12 * phi as u64);
    prop_assert_eq!(r.gamma_cache, (cap * g.n_attr() * 4) as u64);
    prop_assert_eq!(r.gamma_runtime, (width * peak * 4) as u64);
    prop_assert_eq!(r.gamma, r.gamma_model + r.gamma_cache + r.gamma_runtime);
    prop_assert_eq!(sim.perf.memory, r.gamma as f64);
    prop_assert_eq!(sim.memory.total(), r.gamma);
    Ok(())
}

/// Reference cache: plain queues, linear scans.
struct RefCache {
    policy: CachePolicy,
    update: bool,
    cap: usize,
    /// FIFO: insertion order; LRU: recency order, oldest first.
    order: VecDeque<u32>,
    fixed: BTreeSet<u32>,
}

impl RefCache {
    fn new(g: &Graph, cfg: CacheConfig) -> Self {
        let cap = if cfg.policy == CachePolicy::None {
            0
        } else {
            (cfg.ratio * g.num_vertices() as f64).floor() as usize
        };
        let mut fixed = BTreeSet::new();
        if cfg.policy == CachePolicy::StaticDegree {
            let mut by_degree: Vec<u32> = (0..g.num_vertices() as u32).collect();
            by_degree.sort_by_key(|&v| (std::cmp::Reverse(g.degree(v)), v));
            fixed.extend(by_degree.into_iter().take(cap));
        }
        Self {
            policy: cfg.policy,
            update: cfg.update_enabled,
            cap,
            order: VecDeque::new(),
            fixed,
        }
    }

    fn holds(&self, v: u32) -> bool {
        self.fixed.contains(&v) || self.order.contains(&v)
    }

    /// Returns (hits, misses, evictions).
    fn access(&mut self, batch: &[u32]) -> (usize, usize, usize) {
        let (mut hits, mut misses, mut evicted) = (0, 0, 0);
        let mut missed = Vec::new();
        for &v in batch {
            if self.holds(v) {
                hits += 1;
                if self.policy == CachePolicy::Lru {
                    let at = self.order.iter().position(|&x| x == v).unwrap();
                    self.order.remove(at);
                    self.order.push_back(v);
                }
            } else {
                misses += 1;
                missed.push(v);
            }
        }
        let dynamic = matches!(self.policy, CachePolicy::Fifo | CachePolicy::Lru);
        if dynamic && self.update && self.cap > 0 {
            for v in missed {
                if self.order.len() == self.cap {
                    self.order.pop_front();
                    evicted += 1;
                }
                self.order.push_back(v);
            }
        }
        (hits, misses, evicted)
    }

    fn resident(&self) -> BTreeSet<u32> {
        self.fixed.iter().chain(&self.order).copied().collect()
    }
}

#[derive(Debug, Clone)]
pub struct CacheCase {
    pub graph: GraphCase,
    pub config: CacheConfig,
    /// Batches as (size fraction, seed).
    pub batches: Vec<(f64, u64)>,
}

pub fn cache_case() -> impl Strategy<Value = CacheCase> {
    (graph_case(), cache_config(), prop::collection::vec((0.01f64..0.6, any::<u64>()), 1..12))
        .prop_map(|(graph, config, batches)| CacheCase { graph, config, batches })
}

/// Residency never exceeds `floor(r |V|)`, counters add up, and every
/// policy agrees access by access with the reference cache.
pub fn cache_capacity(case: &CacheCase) -> Result<(), TestCaseError> {
    let g = case.graph.build();
    let n = g.num_vertices();
    let mut c = CacheState::new(&g, case.config).unwrap();
    let mut reference = RefCache::new(&g, case.config);
    prop_assert_eq!(c.capacity(), reference.cap);
    let mut total = 0u64;
    for &(frac, seed) in &case.batches {
        let size = ((frac * n as f64) as usize).clamp(1, n);
        let batch = partition_targets(&g, size, seed).unwrap().swap_remove(0);
        total += batch.len() as u64;
        let out = c.access_batch(&batch);
        let (h, m, e) = reference.access(&batch);
        prop_assert_eq!((out.hit_count, out.miss_count, out.replaced_count), (h, m, e));
        prop_assert!(c.len() <= c.capacity());
        prop_assert_eq!(c.resident().into_iter().collect::<BTreeSet<_>>(), reference.resident());
        prop_assert_eq!(c.hits() + c.misses(), total);
        if !case.config.update_enabled {
            prop_assert_eq!(out.replaced_count, 0);
        }
    }
    let rate = c.hit_rate();
    prop_assert!((0.0..=1.0).contains(&rate));
    prop_assert!(close(rate, c.hits() as f64 / total as f64, 1e-12));
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SamplerSoundCase {
    pub graph: GraphCase,
    pub sampler: SamplerCase,
    pub cached_seed: u64,
    pub seed: u64,
}

pub fn sampler_sound_case() -> impl Strategy<Value = SamplerSoundCase> {
    (graph_case(), sampler_case(), any::<u64>(), any::<u64>()).prop_map(|(graph, sampler, cached_seed, seed)| SamplerSoundCase {
        graph,
        sampler,
        cached_seed,
        seed,
    })
}

/// Structural soundness of a sampled mini-batch, checked without the
/// sampler's own `check`.
pub fn sampler_soundness(case: &SamplerSoundCase) -> Result<(), TestCaseError> {
    let g = case.graph.build();
    let n = g.num_vertices();
    let cfg = case.sampler.config(n);
    let targets = partition_targets(&g, cfg.batch_target_size as usize, case.seed).unwrap().swap_remove(0);
    let cached: Vec<bool> = {
        let marks = partition_targets(&g, n.div_ceil(3), case.cached_seed).unwrap().swap_remove(0);
        let mut v = vec![false; n];
        for u in marks {
            v[u as usize] = true;
        }
        v
    };
    let b: MiniBatch = sample_minibatch(&g, &cfg, &targets, &cached, case.seed).unwrap();
    let set: BTreeSet<u32> = b.vertices.iter().copied().collect();
    prop_assert_eq!(set.len(), b.vertices.len(), "duplicate vertices");
    prop_assert!(b.vertices.iter().all(|&v| (v as usize) < n));
    prop_assert_eq!(&b.vertices[..targets.len()], &targets[..]);
    prop_assert_eq!(&b.targets, &targets);
    for &(x, y) in &b.edges {
        prop_assert!(x < y && set.contains(&x) && set.contains(&y));
        prop_assert!(g.neighbors(x).contains(&y), "({}, {}) not an edge", x, y);
    }
    prop_assert!(b.edges.windows(2).all(|w| w[0] < w[1]));
    let t = targets.len() as f64;
    match cfg.mode {
        SamplerMode::NodeWise | SamplerMode::LayerWise => {
            let union: BTreeSet<u32> = b.frontiers.iter().flatten().copied().collect();
            prop_assert_eq!(&union, &set);
            prop_assert_eq!(b.frontiers.len(), cfg.num_layers + 1);
            for l in 0..cfg.num_layers {
                let prev: BTreeSet<u32> = b.frontiers[l].iter().copied().collect();
                for &u in &b.frontiers[l + 1] {
                    prop_assert!(g.neighbors(u).iter().any(|w| prev.contains(w)), "{} not adjacent to step {}", u, l);
                }
                // Bernoulli selection meets budgets and fanouts only in expectation
                if cfg.selection == Selection::ExactK {
                    let cap = match cfg.mode {
                        SamplerMode::LayerWise => cfg.layer_budgets[l] as usize,
                        _ => b.frontiers[l].len() * cfg.fanouts[l] as usize,
                    };
                    prop_assert!(b.frontiers[l + 1].len() <= cap);
                }
            }
            if cfg.mode == SamplerMode::NodeWise && cfg.selection == Selection::ExactK {
                prop_assert!(b.vertices.len() as f64 <= t * cfg.fanout_product() + 1e-9);
            }
        }
        SamplerMode::SubgraphWise => {
            prop_assert!(b.vertices.len() as f64 <= t * (1.0 + cfg.walk_hops as f64));
            // induced subgraph: every graph edge inside V_i is present
            let induced: usize = b.vertices.iter().map(|&v| g.neighbors(v).iter().filter(|&&u| v < u && set.contains(&u)).count()).sum();
            prop_assert_eq!(induced, b.edges.len());
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct GradCase {
    pub n: usize,
    pub edges: Vec<(u32, u32)>,
    pub dims: Vec<usize>,
    pub sum: bool,
    pub targets: Vec<usize>,
    pub seed: u64,
}

pub fn grad_case() -> impl Strategy<Value = GradCase> {
    (3usize..10, prop::collection::vec(1usize..6, 2..4), any::<bool>(), any::<u64>())
        .prop_flat_map(|(n, dims, sum, seed)| {
            (
                Just(n),
                prop::collection::vec((0..n as u32, 0..n as u32), 0..3 * n),
                Just(dims),
                Just(sum),
                prop::collection::vec(0..n, 1..=n),
                Just(seed),
            )
        })
        .prop_map(|(n, raw, mut dims, sum, targets, seed)| {
            let edges: BTreeSet<(u32, u32)> = raw.into_iter().filter(|(a, b)| a != b).map(|(a, b)| (a.min(b), a.max(b))).collect();
            // at least two classes
            let last = dims.len() - 1;
            dims[last] = dims[last].max(2);
            GradCase {
                n,
                edges: edges.into_iter().collect(),
                dims,
                sum,
                targets,
                seed,
            }
        })
}

/// Analytic gradient agrees with central finite differences to 1e-4
/// relative error on every weight.
pub fn gradient_check(case: &GradCase) -> Result<(), TestCaseError> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(case.seed);
    let n_attr = case.dims[0];
    let classes = *case.dims.last().unwrap();
    let features: Vec<f32> = (0..case.n * n_attr).map(|_| rng.random_range(-1.0..1.0f32)).collect();
    let labels: Vec<u32> = (0..case.n).map(|_| rng.random_range(0..classes as u32)).collect();
    let g = Graph::from_edges(case.n, &case.edges, n_attr, features, labels, classes).unwrap();
    let aggregate = if case.sum { Aggregate::Sum } else { Aggregate::Mean };
    let spec = ModelSpec::new(case.dims.clone(), aggregate).unwrap();
    let params = Params::init(&spec, case.seed);
    let targets: Vec<u32> = case.targets.iter().map(|&t| t as u32).collect::<BTreeSet<_>>().into_iter().collect();
    let mut vertices = targets.clone();
    vertices.extend((0..case.n as u32).filter(|v| !targets.contains(v)));
    let batch = MiniBatch {
        frontiers: vec![targets.clone(), vertices[targets.len()..].to_vec()],
        vertices,
        edges: case.edges.clone(),
        targets,
    };
    let (_, grads) = loss_and_gradient(&batch, &g, &spec, &params, None).unwrap();
    let loss = |p: &Params| loss_and_gradient(&batch, &g, &spec, p, None).unwrap().0;
    for (l, grad) in grads.iter().enumerate() {
        for ((i, j), &an) in grad.indexed_iter() {
            let fd_at = |h: f64| {
                let mut plus = params.clone();
                plus.weights[l][[i, j]] += h;
                let mut minus = params.clone();
                minus.weights[l][[i, j]] -= h;
                (loss(&plus) - loss(&minus)) / (2.0 * h)
            };
            let fd = fd_at(1e-6);
            let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
            prop_assert!(err <= 1e-4, "layer {} ({}, {}): fd {} analytic {}", l, i, j, fd, an);
        }
    }
    Ok(())
}
