//! Unified mini-batch sampler.
//!
//! Every mode expands a set of target vertices outward, one frontier at a
//! time, picking neighbours with a probability that may favour vertices that
//! currently sit in the device cache.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::graph::{Graph, VertexId};
use crate::rng::{self, Rng};

/// Scale applied to `locality_bias` when weighting cached neighbours:
/// a cached neighbour has weight `1 + LOCALITY_WEIGHT * bias`.
pub const LOCALITY_WEIGHT: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMode {
    NodeWise,
    LayerWise,
    SubgraphWise,
}

impl SamplerMode {
    pub const ALL: [SamplerMode; 3] = [Self::NodeWise, Self::LayerWise, Self::SubgraphWise];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::NodeWise => "node_wise",
            Self::LayerWise => "layer_wise",
            Self::SubgraphWise => "subgraph_wise",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

/// How a fanout of `k` out of `deg` neighbours is realised.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Exactly `min(k, deg)` distinct neighbours, without replacement.
    #[default]
    ExactK,
    /// Each neighbour kept independently with probability `min(1, k * w / sum w)`.
    Bernoulli,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub mode: SamplerMode,
    pub num_layers: usize,
    /// Per-layer fanout (node-wise).
    pub fanouts: Vec<u32>,
    /// Per-layer vertex budget (layer-wise).
    pub layer_budgets: Vec<u32>,
    pub batch_target_size: u32,
    /// 0 = unbiased; 1 = strongest preference for cached neighbours.
    pub locality_bias: f64,
    /// Random-walk length (subgraph-wise).
    pub walk_hops: u32,
    #[serde(default)]
    pub selection: Selection,
}

impl SamplerConfig {
    pub fn node_wise(batch_target_size: u32, fanouts: Vec<u32>) -> Self {
        Self {
            mode: SamplerMode::NodeWise,
            num_layers: fanouts.len(),
            fanouts,
            layer_budgets: Vec::new(),
            batch_target_size,
            locality_bias: 0.0,
            walk_hops: 0,
            selection: Selection::ExactK,
        }
    }

    pub fn layer_wise(batch_target_size: u32, budgets: Vec<u32>) -> Self {
        Self {
            mode: SamplerMode::LayerWise,
            num_layers: budgets.len(),
            fanouts: Vec::new(),
            layer_budgets: budgets,
            batch_target_size,
            locality_bias: 0.0,
            walk_hops: 0,
            selection: Selection::ExactK,
        }
    }

    pub fn subgraph_wise(batch_target_size: u32, num_layers: usize, walk_hops: u32) -> Self {
        Self {
            mode: SamplerMode::SubgraphWise,
            num_layers,
            fanouts: Vec::new(),
            layer_budgets: Vec::new(),
            batch_target_size,
            locality_bias: 0.0,
            walk_hops,
            selection: Selection::ExactK,
        }
    }

    pub fn with_bias(mut self, bias: f64) -> Self {
        self.locality_bias = bias;
        self
    }

    pub fn with_selection(mut self, selection: Selection) -> Self {
        self.selection = selection;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers < 1 {
            return param("sampler needs at least one layer");
        }
        if self.batch_target_size < 1 {
            return param("batch_target_size must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.locality_bias) {
            return param(format!("locality_bias {} outside [0, 1]", self.locality_bias));
        }
        if self.fanouts.contains(&0) || self.layer_budgets.contains(&0) {
            return param("fanouts and budgets must be at least 1");
        }
        match self.mode {
            SamplerMode::NodeWise if self.fanouts.len() != self.num_layers => {
                param("node-wise sampling needs one fanout per layer")
            }
            SamplerMode::LayerWise if self.layer_budgets.len() != self.num_layers => {
                param("layer-wise sampling needs one budget per layer")
            }
            SamplerMode::SubgraphWise if self.walk_hops < 1 => param("subgraph sampling needs walk_hops >= 1"),
            _ => Ok(()),
        }
    }

    /// `prod (1 + k^l)` for node-wise fanouts; the vertex-count bound per target.
    pub fn fanout_product(&self) -> f64 {
        self.fanouts.iter().map(|&k| 1.0 + k as f64).product()
    }
}

/// Answers whether a vertex is resident in the device cache.
pub trait CacheOracle {
    fn is_cached(&self, v: VertexId) -> bool;
}

/// Oracle for an empty cache.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoCache;

impl CacheOracle for NoCache {
    fn is_cached(&self, _: VertexId) -> bool {
        false
    }
}

impl CacheOracle for [bool] {
    fn is_cached(&self, v: VertexId) -> bool {
        self.get(v as usize).copied().unwrap_or(false)
    }
}

impl CacheOracle for Vec<bool> {
    fn is_cached(&self, v: VertexId) -> bool {
        self.as_slice().is_cached(v)
    }
}

impl<T: CacheOracle + ?Sized> CacheOracle for &T {
    fn is_cached(&self, v: VertexId) -> bool {
        (**self).is_cached(v)
    }
}

/// A sampled subgraph `G_i(V_i, E_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiniBatch {
    /// `V_i` in discovery order; targets come first.
    pub vertices: Vec<VertexId>,
    /// Undirected edges `(a, b)` with `a < b`, sorted.
    pub edges: Vec<(VertexId, VertexId)>,
    pub targets: Vec<VertexId>,
    /// `B^0, B^1, ...`: the vertices reached at each expansion step.
    pub frontiers: Vec<Vec<VertexId>>,
}

impl MiniBatch {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Check the structural invariants against the source graph.
    pub fn check(&self, g: &Graph) -> Result<()> {
        let mut member = vec![false; g.num_vertices()];
        for &v in &self.vertices {
            if v as usize >= g.num_vertices() {
                return param(format!("vertex {v} out of range"));
            }
            if member[v as usize] {
                return param(format!("vertex {v} listed twice"));
            }
            member[v as usize] = true;
        }
        if let Some(t) = self.targets.iter().find(|&&t| !member[t as usize]) {
            return param(format!("target {t} missing from V_i"));
        }
        for &(a, b) in &self.edges {
            if !member[a as usize] || !member[b as usize] {
                return param(format!("edge ({a}, {b}) leaves V_i"));
            }
            if !g.has_edge(a, b) {
                return param(format!("edge ({a}, {b}) is not in G"));
            }
        }
        Ok(())
    }
}

/// Per-step bookkeeping used to measure neighbour overlap.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LayerTrace {
    /// Sum over frontier vertices of the neighbours they selected.
    pub selected: usize,
    /// Distinct vertices among those selections.
    pub distinct: usize,
}

/// Shuffle all vertices with `seed` and cut them into batches of `batch_size`
/// (the last one may be short).
pub fn partition_targets(g: &Graph, batch_size: usize, seed: u64) -> Result<Vec<Vec<VertexId>>> {
    let n = g.num_vertices();
    if batch_size < 1 || batch_size > n {
        return param(format!("batch size {batch_size} outside [1, {n}]"));
    }
    let mut order: Vec<VertexId> = (0..n as u32).collect();
    order.shuffle(&mut rng::rng(seed));
    Ok(order.chunks(batch_size).map(<[u32]>::to_vec).collect())
}

/// Conversion of a layer budget into an expected per-vertex fanout.
pub fn expected_fanout_from_budget(budget: f64, frontier_size: f64, mu: f64) -> Result<f64> {
    if frontier_size < 1.0 {
        return param("frontier must contain at least one vertex");
    }
    if !(mu > 0.0 && mu <= 1.0) {
        return param(format!("overlap coefficient {mu} outside (0, 1]"));
    }
    Ok(budget / frontier_size * mu)
}

pub fn sample_minibatch<C: CacheOracle + ?Sized>(
    g: &Graph,
    cfg: &SamplerConfig,
    targets: &[VertexId],
    cached: &C,
    seed: u64,
) -> Result<MiniBatch> {
    sample_traced(g, cfg, targets, cached, seed).map(|(b, _)| b)
}

/// Like [`sample_minibatch`] but also returns the per-step selection counts.
pub fn sample_traced<C: CacheOracle + ?Sized>(
    g: &Graph,
    cfg: &SamplerConfig,
    targets: &[VertexId],
    cached: &C,
    seed: u64,
) -> Result<(MiniBatch, Vec<LayerTrace>)> {
    cfg.validate()?;
    if targets.is_empty() {
        return param("targets must be non-empty");
    }
    let n = g.num_vertices();
    if let Some(&t) = targets.iter().find(|&&t| t as usize >= n) {
        return param(format!("target {t} out of range"));
    }
    let mut state = Expansion::new(g, targets);
    let mut rng = rng::rng(seed);
    let picker = Picker {
        bias: cfg.locality_bias,
        selection: cfg.selection,
        cached,
    };
    let traces = match cfg.mode {
        SamplerMode::NodeWise => state.node_wise(&cfg.fanouts, &picker, &mut rng),
        SamplerMode::LayerWise => state.layer_wise(&cfg.layer_budgets, &picker, &mut rng),
        SamplerMode::SubgraphWise => state.subgraph_wise(cfg.walk_hops, &picker, &mut rng),
    };
    Ok((state.finish(), traces))
}

/// Monte-Carlo overlap coefficient per layer for a fixed target set:
/// the mean over trials of `distinct / selected`.
pub fn overlap_coefficient_for(
    g: &Graph,
    cfg: &SamplerConfig,
    targets: &[VertexId],
    trials: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if trials < 1 {
        return param("trials must be at least 1");
    }
    let mut sums: Vec<f64> = Vec::new();
    for t in 0..trials {
        let (_, traces) = sample_traced(g, cfg, targets, &NoCache, rng::derive(seed, t as u64))?;
        accumulate_overlap(&mut sums, &traces);
    }
    Ok(sums.into_iter().map(|s| s / trials as f64).collect())
}

/// Monte-Carlo overlap coefficient with a fresh random target set of
/// `batch_target_size` vertices per trial.
pub fn estimate_overlap_coefficient(g: &Graph, cfg: &SamplerConfig, trials: usize, seed: u64) -> Result<Vec<f64>> {
    if trials < 1 {
        return param("trials must be at least 1");
    }
    let size = (cfg.batch_target_size as usize).min(g.num_vertices());
    let mut sums: Vec<f64> = Vec::new();
    for t in 0..trials {
        let trial_seed = rng::derive(seed, t as u64);
        let mut rng = rng::rng(trial_seed);
        let targets: Vec<u32> = rand::seq::index::sample(&mut rng, g.num_vertices(), size)
            .into_iter()
            .map(|i| i as u32)
            .collect();
        let (_, traces) = sample_traced(g, cfg, &targets, &NoCache, rng::derive(trial_seed, 1))?;
        accumulate_overlap(&mut sums, &traces);
    }
    Ok(sums.into_iter().map(|s| s / trials as f64).collect())
}

fn accumulate_overlap(sums: &mut Vec<f64>, traces: &[LayerTrace]) {
    if sums.len() < traces.len() {
        sums.resize(traces.len(), 0.0);
    }
    for (s, t) in sums.iter_mut().zip(traces) {
        *s += if t.selected == 0 {
            1.0
        } else {
            t.distinct as f64 / t.selected as f64
        };
    }
}

struct Picker<'a, C: ?Sized> {
    bias: f64,
    selection: Selection,
    cached: &'a C,
}

impl<C: CacheOracle + ?Sized> Picker<'_, C> {
    fn weight(&self, u: VertexId) -> f64 {
        if self.bias > 0.0 && self.cached.is_cached(u) {
            1.0 + LOCALITY_WEIGHT * self.bias
        } else {
            1.0
        }
    }

    /// Choose up to `k` entries of `pool`, appending them to `out`.
    fn choose(&self, pool: &[VertexId], k: usize, rng: &mut Rng, out: &mut Vec<VertexId>) {
        if pool.is_empty() || k == 0 {
            return;
        }
        let weights: Option<Vec<f64>> = if self.bias > 0.0 {
            let w: Vec<f64> = pool.iter().map(|&u| self.weight(u)).collect();
            (w.iter().any(|&x| x != w[0])).then_some(w)
        } else {
            None
        };
        match self.selection {
            Selection::ExactK => {
                if k >= pool.len() {
                    out.extend_from_slice(pool);
                    return;
                }
                match weights {
                    None => {
                        out.extend(rand::seq::index::sample(rng, pool.len(), k).into_iter().map(|i| pool[i]));
                    }
                    Some(w) => {
                        // Efraimidis-Spirakis: keep the k largest ln(u)/w keys.
                        let mut keyed: Vec<(f64, usize)> = w
                            .iter()
                            .enumerate()
                            .map(|(i, &wi)| (rng.random::<f64>().ln() / wi, i))
                            .collect();
                        keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                        out.extend(keyed[..k].iter().map(|&(_, i)| pool[i]));
                    }
                }
            }
            Selection::Bernoulli => {
                let total: f64 = weights.as_ref().map_or(pool.len() as f64, |w| w.iter().sum());
                for (i, &u) in pool.iter().enumerate() {
                    let w = weights.as_ref().map_or(1.0, |w| w[i]);
                    let p = (k as f64 * w / total).min(1.0);
                    if rng.random::<f64>() < p {
                        out.push(u);
                    }
                }
            }
        }
    }

    fn choose_one(&self, pool: &[VertexId], rng: &mut Rng) -> Option<VertexId> {
        if pool.is_empty() {
            return None;
        }
        if self.bias == 0.0 {
            return Some(pool[rng.random_range(0..pool.len())]);
        }
        let total: f64 = pool.iter().map(|&u| self.weight(u)).sum();
        let mut x = rng.random::<f64>() * total;
        for &u in pool {
            x -= self.weight(u);
            if x < 0.0 {
                return Some(u);
            }
        }
        pool.last().copied()
    }
}

struct Expansion<'g> {
    g: &'g Graph,
    in_batch: Vec<bool>,
    /// step stamp per vertex, used for per-step distinct counts
    stamp: Vec<u32>,
    vertices: Vec<VertexId>,
    targets: Vec<VertexId>,
    frontiers: Vec<Vec<VertexId>>,
    edges: Vec<(VertexId, VertexId)>,
    induced: bool,
}

impl<'g> Expansion<'g> {
    fn new(g: &'g Graph, targets: &[VertexId]) -> Self {
        let mut in_batch = vec![false; g.num_vertices()];
        let mut unique = Vec::with_capacity(targets.len());
        for &t in targets {
            if !in_batch[t as usize] {
                in_batch[t as usize] = true;
                unique.push(t);
            }
        }
        Self {
            g,
            in_batch,
            stamp: vec![0; g.num_vertices()],
            vertices: unique.clone(),
            targets: unique.clone(),
            frontiers: vec![unique],
            edges: Vec::new(),
            induced: false,
        }
    }

    fn admit(&mut self, u: VertexId) -> bool {
        if self.in_batch[u as usize] {
            false
        } else {
            self.in_batch[u as usize] = true;
            self.vertices.push(u);
            true
        }
    }

    fn push_edge(&mut self, a: VertexId, b: VertexId) {
        self.edges.push((a.min(b), a.max(b)));
    }

    fn node_wise<C: CacheOracle + ?Sized>(&mut self, fanouts: &[u32], picker: &Picker<C>, rng: &mut Rng) -> Vec<LayerTrace> {
        let mut traces = Vec::with_capacity(fanouts.len());
        let mut picked = Vec::new();
        for (l, &k) in fanouts.iter().enumerate() {
            let step = l as u32 + 1;
            let frontier = self.frontiers.last().cloned().unwrap_or_default();
            let mut next = Vec::new();
            let mut trace = LayerTrace::default();
            for &v in &frontier {
                picked.clear();
                picker.choose(self.g.neighbors(v), k as usize, rng, &mut picked);
                trace.selected += picked.len();
                for &u in &picked {
                    self.push_edge(v, u);
                    if self.stamp[u as usize] != step {
                        self.stamp[u as usize] = step;
                        trace.distinct += 1;
                    }
                    if self.admit(u) {
                        next.push(u);
                    }
                }
            }
            traces.push(trace);
            self.frontiers.push(next);
        }
        traces
    }

    fn layer_wise<C: CacheOracle + ?Sized>(&mut self, budgets: &[u32], picker: &Picker<C>, rng: &mut Rng) -> Vec<LayerTrace> {
        let mut traces = Vec::with_capacity(budgets.len());
        let mut chosen = Vec::new();
        for (l, &budget) in budgets.iter().enumerate() {
            // Two stamps per layer: odd marks candidates, even marks chosen.
            let cand_mark = 2 * l as u32 + 1;
            let chosen_mark = 2 * l as u32 + 2;
            let frontier = self.frontiers.last().cloned().unwrap_or_default();
            let mut candidates = Vec::new();
            for &v in &frontier {
                for &u in self.g.neighbors(v) {
                    if !self.in_batch[u as usize] && self.stamp[u as usize] != cand_mark {
                        self.stamp[u as usize] = cand_mark;
                        candidates.push(u);
                    }
                }
            }
            chosen.clear();
            picker.choose(&candidates, budget as usize, rng, &mut chosen);
            for &u in &chosen {
                self.stamp[u as usize] = chosen_mark;
                self.admit(u);
            }
            let mut trace = LayerTrace {
                selected: 0,
                distinct: chosen.len(),
            };
            for &v in &frontier {
                for &u in self.g.neighbors(v) {
                    if self.stamp[u as usize] == chosen_mark {
                        trace.selected += 1;
                        self.edges.push((v.min(u), v.max(u)));
                    }
                }
            }
            traces.push(trace);
            self.frontiers.push(chosen.clone());
        }
        traces
    }

    fn subgraph_wise<C: CacheOracle + ?Sized>(&mut self, hops: u32, picker: &Picker<C>, rng: &mut Rng) -> Vec<LayerTrace> {
        self.induced = true;
        let mut positions = self.targets.clone();
        let mut traces = Vec::with_capacity(hops as usize);
        for h in 0..hops {
            let step = h + 1;
            let mut reached = Vec::new();
            let mut trace = LayerTrace::default();
            for p in positions.iter_mut() {
                let Some(u) = picker.choose_one(self.g.neighbors(*p), rng) else {
                    continue;
                };
                *p = u;
                trace.selected += 1;
                if self.stamp[u as usize] != step {
                    self.stamp[u as usize] = step;
                    trace.distinct += 1;
                    reached.push(u);
                }
                self.admit(u);
            }
            traces.push(trace);
            self.frontiers.push(reached);
        }
        traces
    }

    fn finish(mut self) -> MiniBatch {
        if self.induced {
            self.edges.clear();
            for &v in &self.vertices {
                for &u in self.g.neighbors(v) {
                    if v < u && self.in_batch[u as usize] {
                        self.edges.push((v, u));
                    }
                }
            }
        }
        self.edges.sort_unstable();
        self.edges.dedup();
        MiniBatch {
            vertices: self.vertices,
            edges: self.edges,
            targets: self.targets,
            frontiers: self.frontiers,
        }
    }
}
