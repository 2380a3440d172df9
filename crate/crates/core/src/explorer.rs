//! Design-space exploration.
//!
//! The space is the Cartesian product of a few named value lists. [`explore`]
//! walks it depth-first in dimension order, cutting every subtree whose
//! analytic lower bounds on time or memory already break a constraint, asks
//! the estimator for the performance of each surviving candidate, keeps the
//! Pareto-optimal ones and picks one by a weighted score.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cache::{CacheConfig, CachePolicy};
use crate::error::{param, Error, Result};
use crate::estimator::Estimator;
use crate::gnn::{Aggregate, ModelSpec};
use crate::graph::GraphProfile;
use crate::runtime::{Candidate, HardwareSpec, Perf};
use crate::sampler::{SamplerConfig, SamplerMode};

/// Number of dimensions of a [`DesignSpace`].
pub const DIMENSIONS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpace {
    pub batch_sizes: Vec<u32>,
    /// Per-layer fanouts; the list length sets the number of layers.
    /// Layer-wise candidates use `fanout * batch` as the layer budget.
    pub fanouts: Vec<Vec<u32>>,
    pub modes: Vec<SamplerMode>,
    pub locality_biases: Vec<f64>,
    pub cache_ratios: Vec<f64>,
    pub cache_policies: Vec<CachePolicy>,
    pub hidden_dims: Vec<usize>,
    /// Random-walk length, used by subgraph-wise candidates only.
    pub walk_hops: Vec<u32>,
    #[serde(default)]
    pub aggregate: Aggregate,
}

impl Default for DesignSpace {
    fn default() -> Self {
        Self {
            batch_sizes: vec![64, 128, 256, 512],
            fanouts: vec![vec![5], vec![10], vec![5, 5], vec![10, 5], vec![10, 10]],
            modes: SamplerMode::ALL.to_vec(),
            locality_biases: vec![0.0, 0.5, 1.0],
            cache_ratios: vec![0.1, 0.3, 0.5, 0.9],
            cache_policies: CachePolicy::ALL.to_vec(),
            hidden_dims: vec![16, 32],
            walk_hops: vec![4],
            aggregate: Aggregate::Mean,
        }
    }
}

/// Index of each dimension's chosen value, in declaration order.
pub type Point = [usize; DIMENSIONS];

impl DesignSpace {
    pub fn radices(&self) -> [usize; DIMENSIONS] {
        [
            self.batch_sizes.len(),
            self.fanouts.len(),
            self.modes.len(),
            self.locality_biases.len(),
            self.cache_ratios.len(),
            self.cache_policies.len(),
            self.hidden_dims.len(),
            self.walk_hops.len(),
        ]
    }

    pub fn size(&self) -> u64 {
        self.radices().iter().map(|&r| r as u64).product()
    }

    pub fn validate(&self) -> Result<()> {
        const NAMES: [&str; DIMENSIONS] = [
            "batch_sizes",
            "fanouts",
            "modes",
            "locality_biases",
            "cache_ratios",
            "cache_policies",
            "hidden_dims",
            "walk_hops",
        ];
        for (name, r) in NAMES.iter().zip(self.radices()) {
            if r == 0 {
                return param(format!("design-space dimension {name} is empty"));
            }
        }
        if self.batch_sizes.contains(&0) {
            return param("batch sizes must be positive");
        }
        if self.fanouts.iter().any(|f| f.is_empty() || f.contains(&0)) {
            return param("fanout lists must be non-empty and positive");
        }
        if self.hidden_dims.contains(&0) || self.walk_hops.contains(&0) {
            return param("hidden dims and walk hops must be positive");
        }
        if self.locality_biases.iter().any(|b| !(0.0..=1.0).contains(b)) {
            return param("locality biases must lie in [0, 1]");
        }
        if self.cache_ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return param("cache ratios must lie in [0, 1]");
        }
        Ok(())
    }

    /// Mixed-radix decoding of a lexicographic rank.
    pub fn point(&self, id: u64) -> Point {
        let radices = self.radices();
        let mut rest = id;
        let mut p = [0; DIMENSIONS];
        for d in (0..DIMENSIONS).rev() {
            p[d] = (rest % radices[d] as u64) as usize;
            rest /= radices[d] as u64;
        }
        p
    }

    pub fn id(&self, p: &Point) -> u64 {
        self.radices()
            .iter()
            .zip(p)
            .fold(0, |acc, (&r, &i)| acc * r as u64 + i as u64)
    }

    pub fn candidate(&self, id: u64, g: &GraphProfile) -> Candidate {
        let p = self.point(id);
        let batch = self.batch_sizes[p[0]];
        let fanouts = &self.fanouts[p[1]];
        let layers = fanouts.len();
        let sampler = match self.modes[p[2]] {
            SamplerMode::NodeWise => SamplerConfig::node_wise(batch, fanouts.clone()),
            SamplerMode::LayerWise => SamplerConfig::layer_wise(batch, fanouts.iter().map(|k| k * batch).collect()),
            SamplerMode::SubgraphWise => SamplerConfig::subgraph_wise(batch, layers, self.walk_hops[p[7]]),
        }
        .with_bias(self.locality_biases[p[3]]);
        let mut dims = vec![g.n_attr];
        dims.extend(std::iter::repeat_n(self.hidden_dims[p[6]], layers - 1));
        dims.push(g.num_classes);
        Candidate {
            id,
            sampler,
            cache: CacheConfig::with_policy(self.cache_policies[p[5]], self.cache_ratios[p[4]]),
            model: ModelSpec {
                dims,
                aggregate: self.aggregate,
            },
        }
    }

    /// Id of the point whose values equal the template's, if the space has one.
    pub fn locate(&self, t: &Template) -> Option<u64> {
        fn pos<T: PartialEq>(xs: &[T], x: &T) -> Option<usize> {
            xs.iter().position(|v| v == x)
        }
        let ratio = if t.policy == CachePolicy::None {
            // a cache without a policy holds nothing whatever its ratio
            Some(0)
        } else {
            pos(&self.cache_ratios, &t.ratio)
        };
        let p = [
            pos(&self.batch_sizes, &t.batch_size)?,
            pos(&self.fanouts, &t.fanouts)?,
            pos(&self.modes, &SamplerMode::NodeWise)?,
            pos(&self.locality_biases, &t.locality_bias)?,
            ratio?,
            pos(&self.cache_policies, &t.policy)?,
            pos(&self.hidden_dims, &t.hidden)?,
            0,
        ];
        Some(self.id(&p))
    }
}

/// Preset reproducing the strategy of an existing training system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub name: String,
    pub batch_size: u32,
    pub fanouts: Vec<u32>,
    pub locality_bias: f64,
    pub ratio: f64,
    pub policy: CachePolicy,
    pub hidden: usize,
}

impl Template {
    pub fn candidate(&self, g: &GraphProfile) -> Candidate {
        let layers = self.fanouts.len();
        let mut dims = vec![g.n_attr];
        dims.extend(std::iter::repeat_n(self.hidden, layers - 1));
        dims.push(g.num_classes);
        Candidate {
            id: 0,
            sampler: SamplerConfig::node_wise(self.batch_size, self.fanouts.clone()).with_bias(self.locality_bias),
            cache: CacheConfig::with_policy(self.policy, self.ratio),
            model: ModelSpec {
                dims,
                aggregate: Aggregate::Mean,
            },
        }
    }
}

/// Unbiased uncached sampling, static degree caches with a generous and a
/// small budget, and a static cache with locality-biased sampling.
pub fn templates() -> Vec<Template> {
    let base = |name: &str, policy, ratio, bias| Template {
        name: name.into(),
        batch_size: 256,
        fanouts: vec![10, 5],
        locality_bias: bias,
        ratio,
        policy,
        hidden: 32,
    };
    vec![
        base("pyg-like", CachePolicy::None, 0.0, 0.0),
        base("pagraph-full", CachePolicy::StaticDegree, 0.9, 0.0),
        base("pagraph-low", CachePolicy::StaticDegree, 0.1, 0.0),
        base("2pgraph-like", CachePolicy::StaticDegree, 0.3, 1.0),
    ]
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Priority {
    #[default]
    Bal,
    ExTm,
    ExMa,
    ExTa,
    Weighted { time: f64, memory: f64, accuracy: f64 },
}

impl Priority {
    /// Weights on normalised (time, memory, accuracy loss).
    pub fn weights(self) -> [f64; 3] {
        match self {
            Self::Bal => [1.0, 1.0, 1.0],
            Self::ExTm => [1.0, 1.0, 0.1],
            Self::ExMa => [0.1, 1.0, 1.0],
            Self::ExTa => [1.0, 0.1, 1.0],
            Self::Weighted { time, memory, accuracy } => [time, memory, accuracy],
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bal" => Some(Self::Bal),
            "ex-tm" => Some(Self::ExTm),
            "ex-ma" => Some(Self::ExMa),
            "ex-ta" => Some(Self::ExTa),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Requirements {
    #[serde(default)]
    pub max_time: Option<f64>,
    #[serde(default)]
    pub max_memory: Option<f64>,
    #[serde(default)]
    pub min_accuracy: Option<f64>,
    #[serde(default)]
    pub priority: Priority,
}

impl Requirements {
    pub fn validate(&self) -> Result<()> {
        let w = self.priority.weights();
        if w.iter().any(|x| !(*x >= 0.0 && x.is_finite())) || w.iter().all(|&x| x == 0.0) {
            return param("priority weights must be non-negative and not all zero");
        }
        Ok(())
    }

    /// Which constraints `p` breaks: (time, memory, accuracy).
    pub fn violations(&self, p: &Perf) -> [bool; 3] {
        [
            self.max_time.is_some_and(|m| p.time > m),
            self.max_memory.is_some_and(|m| p.memory > m),
            self.min_accuracy.is_some_and(|m| p.accuracy < m),
        ]
    }

    pub fn admits(&self, p: &Perf) -> bool {
        !self.violations(p).iter().any(|&v| v)
    }
}

/// `a` is no worse than `b` everywhere and better somewhere.
pub fn dominates(a: &Perf, b: &Perf) -> bool {
    let no_worse = a.time <= b.time && a.memory <= b.memory && a.accuracy >= b.accuracy;
    let better = a.time < b.time || a.memory < b.memory || a.accuracy > b.accuracy;
    no_worse && better
}

fn metric_order(a: &(u64, Perf), b: &(u64, Perf)) -> Ordering {
    a.1.time
        .total_cmp(&b.1.time)
        .then(a.1.memory.total_cmp(&b.1.memory))
        .then(b.1.accuracy.total_cmp(&a.1.accuracy))
        .then(a.0.cmp(&b.0))
}

/// Non-dominated points under (min time, min memory, max accuracy); of
/// points with identical performance only the lowest id survives. The result
/// is sorted by time, memory, falling accuracy, then id.
pub fn pareto_front(points: &[(u64, Perf)]) -> Vec<(u64, Perf)> {
    let mut sorted = points.to_vec();
    sorted.sort_by(metric_order);
    let mut front: Vec<(u64, Perf)> = Vec::new();
    for p in sorted {
        // anything that beats or equals p sorts before it
        if !front.iter().any(|q| dominates(&q.1, &p.1) || q.1 == p.1) {
            front.push(p);
        }
    }
    front
}

/// Weighted sum of min-max normalised metrics over `front`, accuracy negated.
pub fn scores(front: &[(u64, Perf)], priority: Priority) -> Vec<f64> {
    let w = priority.weights();
    let range = |f: fn(&Perf) -> f64| {
        let lo = front.iter().map(|p| f(&p.1)).fold(f64::INFINITY, f64::min);
        let hi = front.iter().map(|p| f(&p.1)).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    let norm = |x: f64, (lo, hi): (f64, f64)| if hi > lo { (x - lo) / (hi - lo) } else { 0.0 };
    let t = range(|p| p.time);
    let m = range(|p| p.memory);
    let a = range(|p| -p.accuracy);
    front
        .iter()
        .map(|(_, p)| w[0] * norm(p.time, t) + w[1] * norm(p.memory, m) + w[2] * norm(-p.accuracy, a))
        .collect()
}

/// Front indices ordered best first: score, then time, memory, falling
/// accuracy, then id.
pub fn ranking(front: &[(u64, Perf)], priority: Priority) -> Vec<usize> {
    let s = scores(front, priority);
    let mut order: Vec<usize> = (0..front.len()).collect();
    order.sort_by(|&i, &j| s[i].total_cmp(&s[j]).then(metric_order(&front[i], &front[j])));
    order
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoEntry {
    pub id: u64,
    pub candidate: Candidate,
    pub estimated: Perf,
    /// Evaluated feasible candidates this entry dominates.
    pub dominates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Guideline {
    pub chosen_id: u64,
    pub chosen: Candidate,
    pub estimated: Perf,
    /// Template name when the choice reproduces one, else `explored`.
    pub provenance: String,
    pub requirements: Requirements,
    pub pareto_set: Vec<ParetoEntry>,
    pub space_size: u64,
    pub evaluated: usize,
    pub pruned: u64,
}

impl Guideline {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Per-leaf lower bounds on (time, memory), conservative by construction.
fn floors(space: &DesignSpace, est: &Estimator, hw: &HardwareSpec) -> Result<Vec<(f64, f64)>> {
    (0..space.size())
        .into_par_iter()
        .map(|id| {
            let c = space.candidate(id, &est.graph);
            Ok((est.time_floor(&c, hw)?, est.memory_floor(&c)?))
        })
        .collect()
}

struct Search<'a> {
    req: &'a Requirements,
    radices: [usize; DIMENSIONS],
    floors: Vec<(f64, f64)>,
    leaves: Vec<u64>,
    pruned: Vec<(u64, u64)>,
    cut: [u64; 2],
}

impl Search<'_> {
    fn visit(&mut self, depth: usize, prefix: u64, skip: &[u64]) {
        let width: u64 = self.radices[depth..].iter().map(|&r| r as u64).product();
        let lo = prefix * width;
        let hi = lo + width;
        if depth > 0 {
            let (mut t, mut m) = (f64::INFINITY, f64::INFINITY);
            for &(ft, fm) in &self.floors[lo as usize..hi as usize] {
                t = t.min(ft);
                m = m.min(fm);
            }
            let over_t = self.req.max_time.is_some_and(|x| t > x);
            let over_m = self.req.max_memory.is_some_and(|x| m > x);
            if over_t || over_m {
                let templates = skip.iter().filter(|&&id| (lo..hi).contains(&id)).count() as u64;
                self.pruned.push((lo, hi));
                self.cut[0] += over_t as u64 * (width - templates);
                self.cut[1] += over_m as u64 * (width - templates);
                return;
            }
        }
        if depth == DIMENSIONS {
            if !skip.contains(&prefix) {
                self.leaves.push(prefix);
            }
            return;
        }
        for i in 0..self.radices[depth] {
            self.visit(depth + 1, prefix * self.radices[depth] as u64 + i as u64, skip);
        }
    }
}

/// Everything the depth-first search saw.
#[derive(Debug, Clone)]
pub struct Exploration {
    /// Templates found in the space, by name.
    pub templates: Vec<(String, u64)>,
    /// Predicted performance of every visited leaf, templates first.
    pub evaluated: Vec<(u64, Perf)>,
    /// Half-open id ranges cut by a bound.
    pub pruned: Vec<(u64, u64)>,
    /// Leaves cut by the time bound and by the memory bound.
    pub cut: [u64; 2],
}

impl Exploration {
    pub fn pruned_count(&self) -> u64 {
        let templates: Vec<u64> = self.templates.iter().map(|t| t.1).collect();
        self.pruned
            .iter()
            .map(|&(lo, hi)| hi - lo - templates.iter().filter(|id| (lo..hi).contains(id)).count() as u64)
            .sum()
    }
}

/// Depth-first traversal with bound pruning; no selection.
pub fn search(space: &DesignSpace, est: &Estimator, hw: &HardwareSpec, req: &Requirements) -> Result<Exploration> {
    space.validate()?;
    req.validate()?;
    hw.validate()?;
    let g = &est.graph;
    let located: Vec<(String, u64)> = templates()
        .into_iter()
        .filter_map(|t| space.locate(&t).map(|id| (t.name, id)))
        .collect();
    let mut template_ids: Vec<u64> = located.iter().map(|(_, id)| *id).collect();
    template_ids.sort_unstable();
    template_ids.dedup();

    let mut walk = Search {
        req,
        radices: space.radices(),
        floors: floors(space, est, hw)?,
        leaves: template_ids.clone(),
        pruned: Vec::new(),
        cut: [0, 0],
    };
    walk.visit(0, 0, &template_ids);

    let evaluated = walk
        .leaves
        .par_iter()
        .map(|&id| Ok((id, est.predict(&space.candidate(id, g), hw)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Exploration {
        templates: located,
        evaluated,
        pruned: walk.pruned,
        cut: walk.cut,
    })
}

/// Search `space` for the candidate best matching `req` according to `est`.
pub fn explore(space: &DesignSpace, est: &Estimator, hw: &HardwareSpec, req: &Requirements) -> Result<Guideline> {
    let ex = search(space, est, hw, req)?;
    let g = &est.graph;
    let feasible: Vec<(u64, Perf)> = ex.evaluated.iter().filter(|p| req.admits(&p.1)).copied().collect();

    if feasible.is_empty() {
        let mut counts = [ex.cut[0], ex.cut[1], 0];
        for (_, p) in &ex.evaluated {
            for (c, v) in counts.iter_mut().zip(req.violations(p)) {
                *c += v as u64;
            }
        }
        let names = ["max_time", "max_memory", "min_accuracy"];
        let k = (0..3).max_by_key(|&k| (counts[k], std::cmp::Reverse(k))).unwrap();
        return Err(Error::NoFeasible {
            tightest: names[k].into(),
            detail: format!(
                "violations over {} candidates: max_time {}, max_memory {}, min_accuracy {}",
                space.size(),
                counts[0],
                counts[1],
                counts[2]
            ),
        });
    }

    let front = pareto_front(&feasible);
    let best = ranking(&front, req.priority)[0];
    let (chosen_id, estimated) = front[best];
    let provenance = ex
        .templates
        .iter()
        .find(|(_, id)| *id == chosen_id)
        .map_or_else(|| "explored".to_string(), |(name, _)| name.clone());
    let pareto_set = front
        .iter()
        .map(|&(id, perf)| ParetoEntry {
            id,
            candidate: space.candidate(id, g),
            estimated: perf,
            dominates: feasible.iter().filter(|q| dominates(&perf, &q.1)).count(),
        })
        .collect();
    Ok(Guideline {
        chosen_id,
        chosen: space.candidate(chosen_id, g),
        estimated,
        provenance,
        requirements: *req,
        pareto_set,
        space_size: space.size(),
        evaluated: ex.evaluated.len(),
        pruned: ex.pruned_count(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub rank: usize,
    pub id: u64,
    pub settings: String,
    pub time: f64,
    pub memory: f64,
    pub accuracy: f64,
    pub score: f64,
    /// Other Pareto-set members dominating this one.
    pub dominated_by: usize,
    pub dominates: usize,
    pub chosen: bool,
}

/// The Pareto set ordered by score, best first.
pub fn rank_report(guideline: &Guideline) -> Vec<RankRow> {
    let front: Vec<(u64, Perf)> = guideline.pareto_set.iter().map(|e| (e.id, e.estimated)).collect();
    let s = scores(&front, guideline.requirements.priority);
    ranking(&front, guideline.requirements.priority)
        .into_iter()
        .enumerate()
        .map(|(rank, i)| {
            let e = &guideline.pareto_set[i];
            RankRow {
                rank: rank + 1,
                id: e.id,
                settings: e.candidate.describe(),
                time: e.estimated.time,
                memory: e.estimated.memory,
                accuracy: e.estimated.accuracy,
                score: s[i],
                dominated_by: front.iter().filter(|q| dominates(&q.1, &e.estimated)).count(),
                dominates: e.dominates,
                chosen: e.id == guideline.chosen_id,
            }
        })
        .collect()
}

pub fn write_report(path: impl AsRef<std::path::Path>, rows: &[RankRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
