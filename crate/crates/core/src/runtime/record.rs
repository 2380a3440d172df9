//! Flat profiling record shared by the simulator, the CSV/JSON-lines files
//! and the estimator.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{join, Candidate, HardwareSpec, MemoryBreakdown, RecordMeasurements, SimOptions};
use crate::cache::{CacheConfig, CachePolicy};
use crate::error::{Error, Result};
use crate::gnn::{Aggregate, ModelSpec};
use crate::graph::GraphProfile;
use crate::sampler::{SamplerConfig, SamplerMode, Selection};

/// One row per (graph, candidate, seed).
///
/// The leading columns are the measured quantities; the trailing ones carry
/// the full candidate and hardware so a record can be re-ingested without
/// the design space that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRecord {
    pub candidate_id: u64,
    pub mean_batch_size: f64,
    pub hit_rate: f64,
    pub t_sample: f64,
    pub t_transfer: f64,
    pub t_replace: f64,
    pub t_compute: f64,
    pub n_iter: usize,
    pub gamma_model: u64,
    pub gamma_cache: u64,
    pub gamma_runtime: u64,
    pub accuracy: f64,
    pub num_vertices: usize,
    pub mean_degree: f64,
    pub skew: f64,
    pub n_attr: usize,

    pub gamma: u64,
    pub time: f64,
    pub graph: String,
    pub seed: u64,
    pub epochs: usize,
    pub num_edges: usize,
    pub num_classes: usize,
    pub mode: SamplerMode,
    pub batch_size: u32,
    pub num_layers: usize,
    /// Dash-separated, e.g. `10-5`.
    pub fanouts: String,
    pub layer_budgets: String,
    pub walk_hops: u32,
    pub locality_bias: f64,
    pub selection: Selection,
    pub cache_ratio: f64,
    pub cache_policy: CachePolicy,
    pub cache_update: bool,
    pub dims: String,
    pub aggregate: Aggregate,
    pub host_sample_rate: f64,
    pub link_bandwidth: f64,
    pub link_latency: f64,
    pub device_flops: f64,
    pub replace_rate: f64,
    pub device_memory: u64,
}

/// Identity of a record for resumable profiling.
pub type RecordKey = (String, u64, u64);

fn split<T: std::str::FromStr>(s: &str) -> Result<Vec<T>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split('-')
        .map(|x| x.parse().map_err(|_| Error::Format(format!("bad list element {x:?} in {s:?}"))))
        .collect()
}

impl ProfileRecord {
    pub(crate) fn new(
        cand: &Candidate,
        hw: &HardwareSpec,
        g: &GraphProfile,
        opts: &SimOptions,
        m: RecordMeasurements,
    ) -> Self {
        let s = &cand.sampler;
        Self {
            candidate_id: cand.id,
            mean_batch_size: m.mean_batch_size,
            hit_rate: m.hit_rate,
            t_sample: m.t_sample,
            t_transfer: m.t_transfer,
            t_replace: m.t_replace,
            t_compute: m.t_compute,
            n_iter: m.n_iter,
            gamma_model: m.memory.model,
            gamma_cache: m.memory.cache,
            gamma_runtime: m.memory.runtime,
            accuracy: m.accuracy,
            num_vertices: g.num_vertices,
            mean_degree: g.mean_degree,
            skew: g.skew,
            n_attr: g.n_attr,
            gamma: m.memory.total(),
            time: m.time,
            graph: String::new(),
            seed: opts.seed,
            epochs: opts.epochs,
            num_edges: g.num_edges,
            num_classes: g.num_classes,
            mode: s.mode,
            batch_size: s.batch_target_size,
            num_layers: s.num_layers,
            fanouts: join(&s.fanouts),
            layer_budgets: join(&s.layer_budgets),
            walk_hops: s.walk_hops,
            locality_bias: s.locality_bias,
            selection: s.selection,
            cache_ratio: cand.cache.ratio,
            cache_policy: cand.cache.policy,
            cache_update: cand.cache.update_enabled,
            dims: join(&cand.model.dims),
            aggregate: cand.model.aggregate,
            host_sample_rate: hw.host_sample_rate,
            link_bandwidth: hw.link_bandwidth,
            link_latency: hw.link_latency,
            device_flops: hw.device_flops,
            replace_rate: hw.replace_rate,
            device_memory: hw.device_memory,
        }
    }

    pub fn with_graph(mut self, tag: impl Into<String>) -> Self {
        self.graph = tag.into();
        self
    }

    pub fn key(&self) -> RecordKey {
        (self.graph.clone(), self.candidate_id, self.seed)
    }

    pub fn memory(&self) -> MemoryBreakdown {
        MemoryBreakdown {
            model: self.gamma_model,
            cache: self.gamma_cache,
            runtime: self.gamma_runtime,
        }
    }

    pub fn candidate(&self) -> Result<Candidate> {
        let sampler = SamplerConfig {
            mode: self.mode,
            num_layers: self.num_layers,
            fanouts: split(&self.fanouts)?,
            layer_budgets: split(&self.layer_budgets)?,
            batch_target_size: self.batch_size,
            locality_bias: self.locality_bias,
            walk_hops: self.walk_hops,
            selection: self.selection,
        };
        let cand = Candidate {
            id: self.candidate_id,
            sampler,
            cache: CacheConfig {
                ratio: self.cache_ratio,
                policy: self.cache_policy,
                update_enabled: self.cache_update,
            },
            model: ModelSpec {
                dims: split(&self.dims)?,
                aggregate: self.aggregate,
            },
        };
        cand.validate()?;
        Ok(cand)
    }

    pub fn hardware(&self) -> HardwareSpec {
        HardwareSpec {
            host_sample_rate: self.host_sample_rate,
            link_bandwidth: self.link_bandwidth,
            link_latency: self.link_latency,
            device_flops: self.device_flops,
            replace_rate: self.replace_rate,
            device_memory: self.device_memory,
        }
    }
}

/// Append `records` to a CSV file, writing the header only for a new file.
pub fn write_csv(path: impl AsRef<Path>, records: &[ProfileRecord]) -> Result<()> {
    let path = path.as_ref();
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<ProfileRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|x| x.map_err(Error::from)).collect()
}

/// Append `records` as JSON lines.
pub fn write_jsonl(path: impl AsRef<Path>, records: &[ProfileRecord]) -> Result<()> {
    let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<ProfileRecord>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}
