//! Device-side feature cache.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::graph::{Graph, VertexId};
use crate::sampler::CacheOracle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CachePolicy {
    None,
    /// Preload the highest-degree vertices and never update.
    StaticDegree,
    Fifo,
    Lru,
}

impl CachePolicy {
    pub const ALL: [CachePolicy; 4] = [Self::None, Self::StaticDegree, Self::Fifo, Self::Lru];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::StaticDegree => "static_degree",
            Self::Fifo => "fifo",
            Self::Lru => "lru",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == s)
    }

    /// Whether misses are admitted under this policy by default.
    pub fn updates(self) -> bool {
        matches!(self, Self::Fifo | Self::Lru)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CacheConfig {
    pub ratio: f64,
    pub policy: CachePolicy,
    pub update_enabled: bool,
}

impl CacheConfig {
    pub fn none() -> Self {
        Self {
            ratio: 0.0,
            policy: CachePolicy::None,
            update_enabled: false,
        }
    }

    /// Config with `update_enabled` implied by the policy.
    pub fn with_policy(policy: CachePolicy, ratio: f64) -> Self {
        Self {
            ratio,
            policy,
            update_enabled: policy.updates(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.ratio) {
            return param(format!("cache ratio {} outside [0, 1]", self.ratio));
        }
        if self.policy == CachePolicy::StaticDegree && self.update_enabled {
            return param("static_degree caches cannot be updated");
        }
        Ok(())
    }

    /// Ratio actually in effect (`none` caches hold nothing).
    pub fn effective_ratio(&self) -> f64 {
        if self.policy == CachePolicy::None {
            0.0
        } else {
            self.ratio
        }
    }

    /// `floor(r * |V|)` resident vertices at most.
    pub fn capacity(&self, num_vertices: usize) -> usize {
        (self.effective_ratio() * num_vertices as f64).floor() as usize
    }

    fn admits(&self) -> bool {
        self.update_enabled && matches!(self.policy, CachePolicy::Fifo | CachePolicy::Lru)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessOutcome {
    pub hit_count: usize,
    pub miss_count: usize,
    pub replaced_count: usize,
}

#[derive(Debug, Clone)]
pub struct CacheState {
    config: CacheConfig,
    capacity: usize,
    resident: Vec<bool>,
    len: usize,
    fifo: VecDeque<VertexId>,
    /// (last access tick, vertex), oldest first
    lru: BTreeSet<(u64, VertexId)>,
    last_access: Vec<u64>,
    tick: u64,
    hits: u64,
    misses: u64,
    replaced: u64,
}

impl CacheState {
    pub fn new(g: &Graph, config: CacheConfig) -> Result<Self> {
        config.validate()?;
        let n = g.num_vertices();
        let capacity = config.capacity(n);
        let mut state = Self {
            config,
            capacity,
            resident: vec![false; n],
            len: 0,
            fifo: VecDeque::new(),
            lru: BTreeSet::new(),
            last_access: vec![0; if config.policy == CachePolicy::Lru { n } else { 0 }],
            tick: 0,
            hits: 0,
            misses: 0,
            replaced: 0,
        };
        if config.policy == CachePolicy::StaticDegree {
            let mut order: Vec<VertexId> = (0..n as u32).collect();
            order.sort_by(|&a, &b| g.degree(b).cmp(&g.degree(a)).then(a.cmp(&b)));
            for &v in order.iter().take(capacity) {
                state.resident[v as usize] = true;
            }
            state.len = capacity;
        }
        Ok(state)
    }

    pub fn config(&self) -> &CacheConfig {
        &self.config
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn contains(&self, v: VertexId) -> bool {
        self.resident.get(v as usize).copied().unwrap_or(false)
    }

    /// Resident vertices in ascending id order.
    pub fn resident(&self) -> Vec<VertexId> {
        (0..self.resident.len() as u32).filter(|&v| self.resident[v as usize]).collect()
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }

    pub fn replaced(&self) -> u64 {
        self.replaced
    }

    /// Cumulative hit rate over every access so far (0 before any access).
    pub fn hit_rate(&self) -> f64 {
        let total = self.hits + self.misses;
        if total == 0 {
            0.0
        } else {
            self.hits as f64 / total as f64
        }
    }

    /// Look up a batch of distinct vertices, then admit the misses if the
    /// policy updates.
    pub fn access_batch(&mut self, batch: &[VertexId]) -> AccessOutcome {
        let mut out = AccessOutcome::default();
        let mut missed = Vec::new();
        for &v in batch {
            if self.contains(v) {
                out.hit_count += 1;
                if self.config.policy == CachePolicy::Lru {
                    self.touch(v);
                }
            } else {
                out.miss_count += 1;
                missed.push(v);
            }
        }
        if self.config.admits() && self.capacity > 0 {
            for v in missed {
                if self.contains(v) {
                    continue;
                }
                if self.len == self.capacity {
                    self.evict();
                    out.replaced_count += 1;
                }
                self.insert(v);
            }
        }
        self.hits += out.hit_count as u64;
        self.misses += out.miss_count as u64;
        self.replaced += out.replaced_count as u64;
        debug_assert!(self.len <= self.capacity);
        out
    }

    fn touch(&mut self, v: VertexId) {
        let old = self.last_access[v as usize];
        self.lru.remove(&(old, v));
        self.tick += 1;
        self.last_access[v as usize] = self.tick;
        self.lru.insert((self.tick, v));
    }

    fn insert(&mut self, v: VertexId) {
        self.resident[v as usize] = true;
        self.len += 1;
        match self.config.policy {
            CachePolicy::Fifo => self.fifo.push_back(v),
            CachePolicy::Lru => {
                self.tick += 1;
                self.last_access[v as usize] = self.tick;
                self.lru.insert((self.tick, v));
            }
            _ => {}
        }
    }

    fn evict(&mut self) {
        let victim = match self.config.policy {
            CachePolicy::Fifo => self.fifo.pop_front(),
            CachePolicy::Lru => self.lru.pop_first().map(|(_, v)| v),
            _ => None,
        };
        if let Some(v) = victim {
            self.resident[v as usize] = false;
            self.len -= 1;
        }
    }
}

impl CacheOracle for CacheState {
    fn is_cached(&self, v: VertexId) -> bool {
        self.contains(v)
    }
}
