//! Ground-truth simulator of mini-batch training on a host/device platform.
//!
//! Each iteration samples a mini-batch on the host, looks it up in the
//! device cache, ships the missing features over the link, updates the cache
//! and runs the GNN on the device. Stage times come from a [`HardwareSpec`];
//! the epoch time follows the two-stage pipeline law
//! `T = n_iter * max(t_sample + t_transfer, t_replace + t_compute)`.

mod record;

pub use record::{read_csv, read_jsonl, write_csv, write_jsonl, ProfileRecord, RecordKey};

use serde::{Deserialize, Serialize};

use crate::cache::{CacheConfig, CacheState};
use crate::error::{param, Error, Result};
use crate::gnn::{self, AccuracyOracle, ModelSpec};
use crate::graph::{Graph, GraphProfile};
use crate::rng;
use crate::sampler::{partition_targets, sample_minibatch, MiniBatch, SamplerConfig};
use crate::FEATURE_BYTES;

/// Bytes of device state per model parameter: weight, gradient and one
/// optimiser moment, 4 bytes each.
pub const MODEL_BYTES_PER_PARAM: u64 = 3 * FEATURE_BYTES;
/// Independent training seeds behind every accuracy measurement.
pub const ACCURACY_SEEDS: usize = 3;
/// Learning rate of the accuracy oracle.
pub const ACCURACY_LR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareSpec {
    /// vertices per second
    pub host_sample_rate: f64,
    /// bytes per second
    pub link_bandwidth: f64,
    /// seconds per transfer
    pub link_latency: f64,
    /// flop per second
    pub device_flops: f64,
    /// vertices per second
    pub replace_rate: f64,
    /// bytes
    pub device_memory: u64,
}

impl Default for HardwareSpec {
    /// A desk-scale platform where sampling, transfer, replacement and
    /// compute are all within an order of magnitude of each other.
    fn default() -> Self {
        Self {
            host_sample_rate: 4.0e6,
            link_bandwidth: 1.0e9,
            link_latency: 5.0e-5,
            device_flops: 2.0e10,
            replace_rate: 2.0e6,
            device_memory: 256 << 20,
        }
    }
}

impl HardwareSpec {
    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("host_sample_rate", self.host_sample_rate),
            ("link_bandwidth", self.link_bandwidth),
            ("device_flops", self.device_flops),
            ("replace_rate", self.replace_rate),
        ];
        for (name, r) in rates {
            if !(r > 0.0 && r.is_finite()) {
                return param(format!("{name} must be positive"));
            }
        }
        if !(self.link_latency >= 0.0 && self.link_latency.is_finite()) {
            return param("link_latency must be non-negative");
        }
        if self.device_memory == 0 {
            return param("device_memory must be positive");
        }
        Ok(())
    }
}

/// One point of the design space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: u64,
    pub sampler: SamplerConfig,
    pub cache: CacheConfig,
    pub model: ModelSpec,
}

impl Candidate {
    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        self.cache.validate()?;
        self.model.validate()?;
        if self.model.num_layers() != self.sampler.num_layers {
            return param(format!(
                "model has {} layers but the sampler expands {}",
                self.model.num_layers(),
                self.sampler.num_layers
            ));
        }
        Ok(())
    }

    pub fn validate_for(&self, g: &GraphProfile) -> Result<()> {
        self.validate()?;
        if self.model.dims[0] != g.n_attr || *self.model.dims.last().unwrap() != g.num_classes {
            return param("model widths do not match the graph's n_attr / num_classes");
        }
        if self.sampler.batch_target_size as usize > g.num_vertices {
            return param("batch larger than the graph");
        }
        Ok(())
    }

    /// Compact human-readable summary of the settings.
    pub fn describe(&self) -> String {
        let s = &self.sampler;
        let expansion = match s.mode {
            crate::sampler::SamplerMode::NodeWise => format!("k={}", join(&s.fanouts)),
            crate::sampler::SamplerMode::LayerWise => format!("budget={}", join(&s.layer_budgets)),
            crate::sampler::SamplerMode::SubgraphWise => format!("hops={}", s.walk_hops),
        };
        format!(
            "{} B0={} {} bias={} cache={}@{} dims={}",
            s.mode.as_str(),
            s.batch_target_size,
            expansion,
            s.locality_bias,
            self.cache.policy.as_str(),
            self.cache.ratio,
            join(&self.model.dims),
        )
    }
}

pub(crate) fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join("-")
}

/// Epoch time (seconds), peak device memory (bytes) and accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perf {
    pub time: f64,
    pub memory: f64,
    pub accuracy: f64,
}

/// `Gamma = Gamma_model + Gamma_cache + Gamma_runtime`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MemoryBreakdown {
    pub model: u64,
    pub cache: u64,
    pub runtime: u64,
}

impl MemoryBreakdown {
    pub fn total(&self) -> u64 {
        self.model + self.cache + self.runtime
    }
}

pub fn gamma_model(spec: &ModelSpec) -> u64 {
    MODEL_BYTES_PER_PARAM * spec.phi_count()
}

pub fn gamma_cache(capacity: usize, n_attr: usize) -> u64 {
    capacity as u64 * n_attr as u64 * FEATURE_BYTES
}

/// Activation footprint of one mini-batch: every layer width times `|V_i|`.
pub fn gamma_runtime(batch_vertices: usize, spec: &ModelSpec) -> u64 {
    spec.width_sum() * batch_vertices as u64 * FEATURE_BYTES
}

/// Bytes moved over the link for `misses` vertices.
pub fn transfer_volume(misses: usize, n_attr: usize) -> u64 {
    misses as u64 * n_attr as u64 * FEATURE_BYTES
}

/// Number of mini-batches per epoch.
pub fn n_iter(num_vertices: usize, batch_size: usize) -> usize {
    num_vertices.div_ceil(batch_size)
}

/// Counters and stage times of one simulated iteration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub targets: usize,
    pub vertices: usize,
    pub edges: usize,
    pub hits: usize,
    pub misses: usize,
    pub replaced: usize,
    pub flops: u64,
    pub t_sample: f64,
    pub t_transfer: f64,
    pub t_replace: f64,
    pub t_compute: f64,
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub epochs: usize,
    pub seed: u64,
    /// Train the accuracy oracle; when false the reported accuracy is 0.
    pub train_accuracy: bool,
    pub accuracy_seeds: usize,
    pub learning_rate: f64,
}

impl SimOptions {
    pub fn new(epochs: usize, seed: u64) -> Self {
        Self {
            epochs,
            seed,
            train_accuracy: true,
            accuracy_seeds: ACCURACY_SEEDS,
            learning_rate: ACCURACY_LR,
        }
    }

    pub fn without_accuracy(mut self) -> Self {
        self.train_accuracy = false;
        self
    }
}

/// Everything a simulation run produces.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub perf: Perf,
    pub record: ProfileRecord,
    pub memory: MemoryBreakdown,
    pub iterations: Vec<IterationStats>,
    /// Accuracy of each oracle seed, in seed order.
    pub accuracies: Vec<f64>,
}

fn partition_seed(seed: u64, epoch: usize) -> u64 {
    rng::derive(seed, 0x5A3D_0000 + epoch as u64)
}

fn sample_seed(seed: u64, epoch: usize, iter: usize) -> u64 {
    rng::derive(rng::derive(seed, 0x0B47_0000 + epoch as u64), iter as u64)
}

/// Simulate `epochs` epochs of `cand` on `g` and report measured performance.
pub fn run_epochs(g: &Graph, cand: &Candidate, hw: &HardwareSpec, epochs: usize, seed: u64) -> Result<(Perf, ProfileRecord)> {
    let sim = simulate(g, cand, hw, &SimOptions::new(epochs, seed))?;
    Ok((sim.perf, sim.record))
}

pub fn simulate(g: &Graph, cand: &Candidate, hw: &HardwareSpec, opts: &SimOptions) -> Result<Simulation> {
    let profile = GraphProfile::of(g);
    cand.validate_for(&profile)?;
    hw.validate()?;
    if opts.epochs < 1 {
        return param("epochs must be at least 1");
    }
    let n = g.num_vertices();
    let batch_size = cand.sampler.batch_target_size as usize;
    let iters = n_iter(n, batch_size);
    let mut cache = CacheState::new(g, cand.cache)?;

    let mut memory = MemoryBreakdown {
        model: gamma_model(&cand.model),
        cache: gamma_cache(cache.capacity(), g.n_attr()),
        runtime: 0,
    };
    let infeasible = |gamma: u64| Error::Infeasible {
        id: cand.id,
        gamma,
        capacity: hw.device_memory,
    };
    if memory.total() > hw.device_memory {
        return Err(infeasible(memory.total()));
    }

    let mut stats = Vec::with_capacity(iters * opts.epochs);
    let mut batches: Vec<MiniBatch> = Vec::new();
    for epoch in 0..opts.epochs {
        let parts = partition_targets(g, batch_size, partition_seed(opts.seed, epoch))?;
        for (i, targets) in parts.iter().enumerate() {
            let batch = sample_minibatch(g, &cand.sampler, targets, &cache, sample_seed(opts.seed, epoch, i))?;
            let access = cache.access_batch(&batch.vertices);
            let flops = gnn::flop_count(&gnn::batch_work(&batch, &cand.model), &cand.model);
            let st = IterationStats {
                targets: targets.len(),
                vertices: batch.num_vertices(),
                edges: batch.num_edges(),
                hits: access.hit_count,
                misses: access.miss_count,
                replaced: access.replaced_count,
                flops,
                t_sample: (batch.num_vertices() - targets.len()) as f64 / hw.host_sample_rate,
                t_transfer: hw.link_latency + transfer_volume(access.miss_count, g.n_attr()) as f64 / hw.link_bandwidth,
                t_replace: access.replaced_count as f64 / hw.replace_rate,
                t_compute: flops as f64 / hw.device_flops,
            };
            memory.runtime = memory.runtime.max(gamma_runtime(st.vertices, &cand.model));
            if memory.total() > hw.device_memory {
                return Err(infeasible(memory.total()));
            }
            stats.push(st);
            if opts.train_accuracy {
                batches.push(batch);
            }
        }
    }

    let count = stats.len() as f64;
    let mean = |f: fn(&IterationStats) -> f64| stats.iter().map(f).sum::<f64>() / count;
    let t_sample = mean(|s| s.t_sample);
    let t_transfer = mean(|s| s.t_transfer);
    let t_replace = mean(|s| s.t_replace);
    let t_compute = mean(|s| s.t_compute);
    let time = iters as f64 * (t_sample + t_transfer).max(t_replace + t_compute);

    let accuracies = if opts.train_accuracy {
        let oracle = AccuracyOracle::new(g, &batches, &cand.model)?;
        (0..opts.accuracy_seeds)
            .map(|s| {
                oracle
                    .run(batches.len(), opts.learning_rate, rng::derive(opts.seed, 0xACC0 + s as u64))
                    .map(|r| r.heldout_accuracy)
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let accuracy = median(&accuracies);

    let perf = Perf {
        time,
        memory: memory.total() as f64,
        accuracy,
    };
    let record = ProfileRecord::new(
        cand,
        hw,
        &profile,
        opts,
        RecordMeasurements {
            mean_batch_size: mean(|s| s.vertices as f64),
            hit_rate: cache.hit_rate(),
            t_sample,
            t_transfer,
            t_replace,
            t_compute,
            n_iter: iters,
            memory,
            accuracy,
            time,
        },
    );
    Ok(Simulation {
        perf,
        record,
        memory,
        iterations: stats,
        accuracies,
    })
}

pub(crate) struct RecordMeasurements {
    pub mean_batch_size: f64,
    pub hit_rate: f64,
    pub t_sample: f64,
    pub t_transfer: f64,
    pub t_replace: f64,
    pub t_compute: f64,
    pub n_iter: usize,
    pub memory: MemoryBreakdown,
    pub accuracy: f64,
    pub time: f64,
}

fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Mean `|V_i|` over `samples` consecutive simulated iterations, with the
/// cache evolving exactly as in [`simulate`] but no GNN work.
pub fn sample_batch_sizes(g: &Graph, cand: &Candidate, samples: usize, seed: u64) -> Result<f64> {
    cand.validate_for(&GraphProfile::of(g))?;
    if samples < 1 {
        return param("samples must be at least 1");
    }
    let batch_size = cand.sampler.batch_target_size as usize;
    let mut cache = CacheState::new(g, cand.cache)?;
    let mut total = 0usize;
    let mut taken = 0usize;
    let mut epoch = 0;
    while taken < samples {
        let parts = partition_targets(g, batch_size, partition_seed(seed, epoch))?;
        for (i, targets) in parts.iter().enumerate() {
            if taken == samples {
                break;
            }
            let batch = sample_minibatch(g, &cand.sampler, targets, &cache, sample_seed(seed, epoch, i))?;
            cache.access_batch(&batch.vertices);
            total += batch.num_vertices();
            taken += 1;
        }
        epoch += 1;
    }
    Ok(total as f64 / samples as f64)
}
