//! Run configuration for the command-line pipeline.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::estimator::ModelKind;
use crate::explorer::{templates, DesignSpace, Requirements};
use crate::graph::{generate_power_law, load_edge_list_with_classes, Graph, GraphProfile};
use crate::rng;
use crate::runtime::HardwareSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSource {
    pub num_vertices: usize,
    /// Edges attached per new vertex.
    pub m: usize,
    pub n_attr: usize,
    #[serde(default = "default_classes")]
    pub num_classes: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeListSource {
    pub path: PathBuf,
    pub n_attr: usize,
    #[serde(default = "default_classes")]
    pub num_classes: usize,
    pub seed: u64,
}

fn default_classes() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSource {
    Synthetic(SyntheticSource),
    EdgeList(EdgeListSource),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphEntry {
    /// Short name used in file names and record rows.
    pub tag: String,
    #[serde(flatten)]
    pub source: GraphSource,
}

impl GraphEntry {
    pub fn build(&self) -> Result<Graph> {
        match &self.source {
            GraphSource::Synthetic(s) => generate_power_law(s.num_vertices, s.m, s.n_attr, s.num_classes, s.seed),
            GraphSource::EdgeList(e) => load_edge_list_with_classes(&e.path, e.n_attr, e.num_classes, e.seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSettings {
    /// Candidates profiled per graph; `None` profiles the whole space.
    #[serde(default)]
    pub candidates: Option<usize>,
    /// Seed of the candidate subsample.
    #[serde(default)]
    pub sample_seed: u64,
}

impl Default for ProfileSettings {
    fn default() -> Self {
        Self { candidates: Some(80), sample_seed: 0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSettings {
    #[serde(default)]
    pub kind: ModelKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub graphs: Vec<GraphEntry>,
    /// Graph that exploration and verification run on. Its records are
    /// held out of fitting whenever other graphs have records.
    pub target: String,
    #[serde(default)]
    pub space: DesignSpace,
    #[serde(default)]
    pub hardware: HardwareSpec,
    #[serde(default)]
    pub requirements: Requirements,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub profile: ProfileSettings,
    #[serde(default)]
    pub fit: FitSettings,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_epochs() -> usize {
    2
}

fn default_seeds() -> Vec<u64> {
    vec![1]
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.graphs.is_empty() {
            return param("config lists no graphs");
        }
        let mut tags = BTreeSet::new();
        for g in &self.graphs {
            let ok = !g.tag.is_empty() && g.tag.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
            if !ok {
                return param(format!("graph tag {:?} must be non-empty [A-Za-z0-9_-]", g.tag));
            }
            if !tags.insert(g.tag.as_str()) {
                return param(format!("duplicate graph tag {}", g.tag));
            }
        }
        if !tags.contains(self.target.as_str()) {
            return param(format!("target {} is not a listed graph", self.target));
        }
        if self.epochs == 0 {
            return param("epochs must be positive");
        }
        if self.seeds.is_empty() {
            return param("seeds must be non-empty");
        }
        if self.profile.candidates == Some(0) {
            return param("profile.candidates must be positive");
        }
        self.space.validate()?;
        self.hardware.validate()?;
        self.requirements.validate()
    }

    pub fn graph(&self, tag: &str) -> Option<&GraphEntry> {
        self.graphs.iter().find(|g| g.tag == tag)
    }

    /// Candidate ids profiled on `g`: the templates that the space holds plus
    /// a seeded subsample, ascending.
    pub fn profile_ids(&self, g: &GraphProfile) -> Vec<u64> {
        let size = self.space.size();
        let mut ids: BTreeSet<u64> = templates().iter().filter_map(|t| self.space.locate(t)).collect();
        match self.profile.candidates {
            Some(k) if (k as u64) < size => {
                let mut r = rng::rng(rng::derive(self.profile.sample_seed, g.num_vertices as u64));
                // the space may exceed usize on 32-bit targets; sample within it
                let pool = size.min(usize::MAX as u64) as usize;
                ids.extend(index::sample(&mut r, pool, k).into_iter().map(|i| i as u64));
            }
            _ => ids.extend(0..size),
        }
        ids.into_iter().collect()
    }

    pub fn graph_file(&self, tag: &str) -> PathBuf {
        self.out.join("graphs").join(format!("{tag}.gnav"))
    }
}
