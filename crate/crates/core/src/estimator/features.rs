//! Analytic inputs of the component functions.
//!
//! Everything here is computed from the candidate, the hardware and a graph
//! profile alone. The two learned intermediates, the batch size `vi` and the
//! hit rate, are passed in explicitly so fitting can use measured values and
//! prediction can use predicted ones.

use crate::cache::CachePolicy;
use crate::graph::GraphProfile;
use crate::runtime::{gamma_model, n_iter, Candidate, HardwareSpec};
use crate::sampler::SamplerMode;
use crate::FEATURE_BYTES;

/// Cache behaviour actually in effect.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Residency {
    Empty,
    Static,
    Fifo,
    Lru,
}

#[derive(Debug, Clone)]
pub(crate) struct Inputs<'a> {
    pub cand: &'a Candidate,
    pub hw: &'a HardwareSpec,
    pub g: &'a GraphProfile,
    pub n: f64,
    pub n_iter: usize,
    pub epochs: f64,
    /// mean number of targets per batch
    pub b0: f64,
    /// expanded batch size before any overlap
    pub raw: f64,
    pub cap: f64,
    pub residency: Residency,
    /// share of edge endpoints on vertices the static cache would hold
    pub mass: f64,
    pub bias: f64,
}

impl<'a> Inputs<'a> {
    pub fn new(cand: &'a Candidate, hw: &'a HardwareSpec, g: &'a GraphProfile, epochs: usize) -> Self {
        let nv = g.num_vertices;
        let n = nv as f64;
        let iters = n_iter(nv, cand.sampler.batch_target_size as usize);
        let b0 = n / iters as f64;
        let capacity = cand.cache.capacity(nv);
        let residency = match cand.cache.policy {
            _ if capacity == 0 => Residency::Empty,
            CachePolicy::None => Residency::Empty,
            CachePolicy::StaticDegree => Residency::Static,
            CachePolicy::Fifo if cand.cache.update_enabled => Residency::Fifo,
            CachePolicy::Lru if cand.cache.update_enabled => Residency::Lru,
            _ => Residency::Empty,
        };
        Self {
            cand,
            hw,
            g,
            n,
            n_iter: iters,
            epochs: epochs as f64,
            b0,
            raw: expanded_size(cand, g, b0),
            cap: capacity as f64,
            residency,
            mass: g.top_degree_mass(capacity),
            bias: cand.sampler.locality_bias,
        }
    }

    fn mode(&self, m: SamplerMode) -> f64 {
        (self.cand.sampler.mode == m) as u8 as f64
    }

    fn bias_static(&self) -> f64 {
        if self.residency == Residency::Static {
            self.bias * self.cand.cache.ratio
        } else {
            0.0
        }
    }

    fn bias_dynamic(&self) -> f64 {
        if matches!(self.residency, Residency::Fifo | Residency::Lru) {
            self.bias * self.cand.cache.ratio
        } else {
            0.0
        }
    }

    /// Smallest batch size any prediction may take.
    pub fn vi_floor(&self) -> f64 {
        self.b0.min(self.n)
    }

    /// Largest batch size any prediction may take.
    pub fn vi_ceiling(&self) -> f64 {
        self.raw.min(self.n).max(self.vi_floor())
    }

    pub fn gamma_model(&self) -> f64 {
        gamma_model(&self.cand.model) as f64
    }

    fn combine_flops(&self) -> f64 {
        self.cand.model.dims.windows(2).map(|d| 2.0 * (d[0] * d[1]) as f64).sum()
    }

    fn message_flops(&self) -> f64 {
        let l = self.cand.model.num_layers();
        2.0 * self.cand.model.dims[..l].iter().sum::<usize>() as f64
    }

    fn width_bytes(&self) -> f64 {
        self.cand.model.width_sum() as f64 * FEATURE_BYTES as f64
    }

    fn row_bytes(&self) -> f64 {
        self.g.n_attr as f64 * FEATURE_BYTES as f64
    }
}

/// Frontier-by-frontier expansion size with degree-truncated fanouts:
/// `b0 (1 + k1 (1 + k2 (...)))`, which never exceeds `b0 prod (1 + k_l)`.
pub(crate) fn expanded_size(cand: &Candidate, g: &GraphProfile, b0: f64) -> f64 {
    let s = &cand.sampler;
    match s.mode {
        SamplerMode::NodeWise => {
            let mut frontier = b0;
            let mut total = b0;
            for (l, &k) in s.fanouts.iter().enumerate() {
                let k = k as f64;
                let eff = if l == 0 {
                    g.mean_capped_degree(k)
                } else {
                    g.edge_biased_capped_degree(k)
                };
                frontier *= eff;
                total += frontier;
            }
            total
        }
        SamplerMode::LayerWise => {
            let mut frontier = b0;
            let mut total = b0;
            for (l, &budget) in s.layer_budgets.iter().enumerate() {
                let deg = if l == 0 {
                    g.mean_degree
                } else {
                    g.edge_biased_mean_degree()
                };
                frontier = (budget as f64).min(frontier * deg);
                total += frontier;
            }
            total
        }
        SamplerMode::SubgraphWise => b0 * (1.0 + s.walk_hops as f64),
    }
}

pub(crate) const SAMPLE: &[&str] = &["new_vertices_per_rate"];

pub(crate) fn sample(i: &Inputs, vi: f64) -> Vec<f64> {
    vec![(vi - i.b0).max(0.0) / i.hw.host_sample_rate]
}

pub(crate) const TRANSFER: &[&str] = &["miss_bytes_per_bandwidth", "latency"];

pub(crate) fn transfer(i: &Inputs, vi: f64, hit: f64) -> Vec<f64> {
    vec![vi * (1.0 - hit) * i.row_bytes() / i.hw.link_bandwidth, i.hw.link_latency]
}

pub(crate) const REPLACE: &[&str] = &["evictions_per_rate"];

pub(crate) fn replace(i: &Inputs, vi: f64, hit: f64) -> Vec<f64> {
    let dynamic = matches!(i.residency, Residency::Fifo | Residency::Lru);
    if !dynamic {
        return vec![0.0];
    }
    let fill_per_iter = i.cap / (i.n_iter as f64 * i.epochs);
    vec![(vi * (1.0 - hit) - fill_per_iter).max(0.0) / i.hw.replace_rate]
}

pub(crate) const COMPUTE: &[&str] = &[
    "combine",
    "node_new",
    "node_selected",
    "layer_new",
    "layer_dense",
    "subgraph_new",
    "subgraph_dense",
];

pub(crate) fn compute(i: &Inputs, vi: f64) -> Vec<f64> {
    let dev = i.hw.device_flops;
    let msg = i.message_flops() / dev;
    let new = (vi - i.b0).max(0.0);
    let dense = new * vi * i.g.mean_degree / i.n;
    let node = i.mode(SamplerMode::NodeWise);
    let layer = i.mode(SamplerMode::LayerWise);
    let sub = i.mode(SamplerMode::SubgraphWise);
    vec![
        vi * i.combine_flops() / dev,
        node * msg * new,
        node * msg * (i.raw - i.b0).max(0.0),
        layer * msg * new,
        layer * msg * dense,
        sub * msg * new,
        sub * msg * dense,
    ]
}

pub(crate) const CACHE: &[&str] = &["capacity_bytes"];

pub(crate) fn cache(i: &Inputs) -> Vec<f64> {
    vec![i.cap * i.row_bytes()]
}

pub(crate) const RUNTIME: &[&str] = &["activation_bytes", "activation_spread"];

pub(crate) fn runtime(i: &Inputs, vi: f64) -> Vec<f64> {
    vec![i.width_bytes() * vi, i.width_bytes() * vi.sqrt()]
}

pub(crate) const HIT: &[&str] = &[
    "static_reach",
    "static_bias_gain",
    "fifo",
    "fifo_ratio",
    "fifo_mass",
    "fifo_bias",
    "lru",
    "lru_ratio",
    "lru_mass",
    "lru_bias",
];

/// `None` when nothing can ever be resident, in which case the hit rate is 0.
pub(crate) fn hit(i: &Inputs, vi: f64) -> Option<Vec<f64>> {
    let r = i.cand.cache.ratio;
    let reach = if vi > 0.0 {
        (i.b0 * r + (vi - i.b0).max(0.0) * i.mass) / vi
    } else {
        0.0
    };
    let mut x = vec![0.0; HIT.len()];
    match i.residency {
        Residency::Empty => return None,
        Residency::Static => {
            x[0] = reach;
            x[1] = i.bias * (1.0 - reach);
        }
        Residency::Fifo | Residency::Lru => {
            let o = if i.residency == Residency::Fifo { 2 } else { 6 };
            x[o] = 1.0;
            x[o + 1] = r;
            x[o + 2] = i.mass;
            x[o + 3] = i.bias * r;
        }
    }
    Some(x)
}

pub(crate) const OVERLAP: &[&str] = &[
    "log_reach",
    "log_reach_sq",
    "log_expansion",
    "layer_wise",
    "subgraph_wise",
    "layer_wise_log_reach",
    "subgraph_wise_log_reach",
    "node_wise_layers",
    "layer_wise_layers",
    "bias_static",
    "bias_dynamic",
];

pub(crate) fn overlap(i: &Inputs) -> Vec<f64> {
    let x = (i.raw / i.n).ln();
    let e = (i.raw / i.b0.max(1.0)).ln();
    let lw = i.mode(SamplerMode::LayerWise);
    let sw = i.mode(SamplerMode::SubgraphWise);
    let layers = i.cand.sampler.num_layers as f64;
    vec![
        x,
        x * x,
        e,
        lw,
        sw,
        lw * x,
        sw * x,
        i.mode(SamplerMode::NodeWise) * layers,
        lw * layers,
        i.bias_static(),
        i.bias_dynamic(),
    ]
}

/// Saturating coverage model: `vi = |V| (1 - exp(-c raw / |V|))`.
pub(crate) fn coverage(i: &Inputs, log_c: f64) -> f64 {
    let vi = i.n * (1.0 - (-log_c.exp() * i.raw / i.n).exp());
    vi.clamp(i.vi_floor(), i.vi_ceiling())
}

/// Inverse of [`coverage`]; `None` when the batch saturates the graph.
pub(crate) fn log_coverage_scale(i: &Inputs, vi: f64) -> Option<f64> {
    if vi >= i.n || i.raw <= 0.0 || vi <= 0.0 {
        return None;
    }
    let c = -i.n * (1.0 - vi / i.n).ln() / i.raw;
    (c > 0.0 && c.is_finite()).then(|| c.ln())
}

pub(crate) const ACCURACY: &[&str] = &[
    "log_steps",
    "log_expansion",
    "degree_ratio",
    "bias_static",
    "bias_dynamic",
    "log_width",
    "layers",
    "target_share",
];

pub(crate) fn accuracy(i: &Inputs, vi: f64) -> Vec<f64> {
    let steps = i.n_iter as f64 * i.epochs;
    // mean degree of the sampled subgraph, from the expansion tree
    let sampled_degree = if i.raw > 0.0 { 2.0 * (i.raw - i.b0) / i.raw } else { 0.0 };
    vec![
        steps.ln(),
        (vi / i.b0).ln(),
        sampled_degree / i.g.mean_degree.max(1e-9),
        i.bias_static(),
        i.bias_dynamic(),
        (i.cand.model.width_sum() as f64).ln(),
        i.cand.model.num_layers() as f64,
        i.b0 / i.n,
    ]
}

/// Raw configuration features of the black-box batch-size comparator.
pub(crate) fn black_box(i: &Inputs) -> Vec<f64> {
    let s = &i.cand.sampler;
    vec![
        s.batch_target_size as f64,
        s.fanouts.iter().map(|&k| 1.0 + k as f64).product::<f64>(),
        s.layer_budgets.iter().map(|&b| b as f64).sum::<f64>(),
        s.walk_hops as f64,
        i.mode(SamplerMode::LayerWise),
        i.mode(SamplerMode::SubgraphWise),
        s.num_layers as f64,
        i.bias,
        i.cand.cache.effective_ratio(),
        i.n,
        i.g.mean_degree,
        i.g.skew,
    ]
}

pub(crate) const BLACK_BOX: &[&str] = &[
    "batch_target_size",
    "fanout_product",
    "budget_sum",
    "walk_hops",
    "layer_wise",
    "subgraph_wise",
    "layers",
    "locality_bias",
    "cache_ratio",
    "num_vertices",
    "mean_degree",
    "skew",
];
