//! Undirected graphs in compressed sparse row form, plus the synthetic
//! generator and statistics used by the estimator.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::rng;

/// Vertex identifier.
pub type VertexId = u32;

/// Magic bytes at the start of a serialized graph.
pub const MAGIC: &[u8; 5] = b"GNAV1";

/// Fraction of vertices whose label is flipped away from their planted community.
pub const LABEL_NOISE: f64 = 0.05;

/// Probability that a new vertex attaches inside its own community rather
/// than to the whole graph. Gives the synthetic graphs homophily so that
/// neighbourhood aggregation carries label signal.
pub const HOMOPHILY: f64 = 0.8;

/// Number of classes used when loading an edge list without an explicit count.
pub const DEFAULT_NUM_CLASSES: usize = 4;

/// Immutable undirected graph with per-vertex features and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    offsets: Vec<u64>,
    neighbors: Vec<VertexId>,
    n_attr: usize,
    features: Vec<f32>,
    labels: Vec<u32>,
    num_classes: usize,
}

impl Graph {
    /// Assemble a graph from raw CSR parts, checking every structural invariant.
    pub fn from_parts(
        offsets: Vec<u64>,
        neighbors: Vec<VertexId>,
        n_attr: usize,
        features: Vec<f32>,
        labels: Vec<u32>,
        num_classes: usize,
    ) -> Result<Self> {
        if offsets.is_empty() || offsets[0] != 0 {
            return param("csr offsets must start at 0");
        }
        let n = offsets.len() - 1;
        if *offsets.last().unwrap() as usize != neighbors.len() {
            return param("last csr offset must equal the neighbour count");
        }
        if offsets.windows(2).any(|w| w[0] > w[1]) {
            return param("csr offsets must be non-decreasing");
        }
        if n_attr == 0 {
            return param("n_attr must be at least 1");
        }
        if features.len() != n * n_attr {
            return param(format!(
                "expected {} feature values, got {}",
                n * n_attr,
                features.len()
            ));
        }
        if labels.len() != n {
            return param("one label per vertex required");
        }
        if num_classes < 2 {
            return param("num_classes must be at least 2");
        }
        if labels.iter().any(|&l| l as usize >= num_classes) {
            return param("label out of range");
        }
        for v in 0..n {
            let list = &neighbors[offsets[v] as usize..offsets[v + 1] as usize];
            if list.iter().any(|&u| u as usize >= n) {
                return param(format!("vertex {v} has an out-of-range neighbour"));
            }
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return param(format!("neighbour list of {v} must be sorted and unique"));
            }
        }
        Ok(Self {
            offsets,
            neighbors,
            n_attr,
            features,
            labels,
            num_classes,
        })
    }

    /// Build a graph from an undirected edge list: symmetrize, drop self loops
    /// and duplicates, then attach the given features and labels.
    pub fn from_edges(
        num_vertices: usize,
        edges: &[(VertexId, VertexId)],
        n_attr: usize,
        features: Vec<f32>,
        labels: Vec<u32>,
        num_classes: usize,
    ) -> Result<Self> {
        let (offsets, neighbors) = build_csr(num_vertices, edges)?;
        Self::from_parts(offsets, neighbors, n_attr, features, labels, num_classes)
    }

    pub fn num_vertices(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    /// Number of directed adjacency entries (twice the undirected edge count).
    pub fn num_directed_edges(&self) -> usize {
        self.neighbors.len()
    }

    pub fn n_attr(&self) -> usize {
        self.n_attr
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn offsets(&self) -> &[u64] {
        &self.offsets
    }

    pub fn neighbor_array(&self) -> &[VertexId] {
        &self.neighbors
    }

    /// Sorted neighbours of `v`.
    pub fn neighbors(&self, v: VertexId) -> &[VertexId] {
        let v = v as usize;
        &self.neighbors[self.offsets[v] as usize..self.offsets[v + 1] as usize]
    }

    pub fn degree(&self, v: VertexId) -> usize {
        let v = v as usize;
        (self.offsets[v + 1] - self.offsets[v]) as usize
    }

    pub fn has_edge(&self, u: VertexId, v: VertexId) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    /// Feature row of `v`.
    pub fn feature(&self, v: VertexId) -> &[f32] {
        let start = v as usize * self.n_attr;
        &self.features[start..start + self.n_attr]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, v: VertexId) -> u32 {
        self.labels[v as usize]
    }

    /// Write the graph in the little-endian `GNAV1` binary layout.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        for count in [
            self.num_vertices() as u64,
            self.neighbors.len() as u64,
            self.n_attr as u64,
            self.num_classes as u64,
        ] {
            w.write_all(&count.to_le_bytes())?;
        }
        for &o in &self.offsets {
            w.write_all(&o.to_le_bytes())?;
        }
        for &u in &self.neighbors {
            w.write_all(&u.to_le_bytes())?;
        }
        for &f in &self.features {
            w.write_all(&f.to_le_bytes())?;
        }
        for &l in &self.labels {
            w.write_all(&l.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Format("truncated header".into()))?;
        if &magic != MAGIC {
            return Err(Error::Format("missing GNAV1 magic".into()));
        }
        let read_u64 = |r: &mut R| -> Result<u64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)
                .map_err(|_| Error::Format("truncated file".into()))?;
            Ok(u64::from_le_bytes(b))
        };
        let n = read_u64(&mut r)? as usize;
        let nnz = read_u64(&mut r)? as usize;
        let n_attr = read_u64(&mut r)? as usize;
        let num_classes = read_u64(&mut r)? as usize;
        let mut offsets = Vec::with_capacity(n + 1);
        for _ in 0..=n {
            offsets.push(read_u64(&mut r)?);
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        let expected = 4 * (nnz + n * n_attr + n);
        if rest.len() != expected {
            return Err(Error::Format(format!(
                "expected {expected} payload bytes, found {}",
                rest.len()
            )));
        }
        let mut words = rest
            .chunks_exact(4)
            .map(|c| [c[0], c[1], c[2], c[3]]);
        let neighbors: Vec<u32> = words.by_ref().take(nnz).map(u32::from_le_bytes).collect();
        let features: Vec<f32> = words
            .by_ref()
            .take(n * n_attr)
            .map(f32::from_le_bytes)
            .collect();
        let labels: Vec<u32> = words.map(u32::from_le_bytes).collect();
        Self::from_parts(offsets, neighbors, n_attr, features, labels, num_classes)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = fs::File::open(path)?;
        Self::read_from(BufReader::new(file))
    }
}

fn build_csr(num_vertices: usize, edges: &[(VertexId, VertexId)]) -> Result<(Vec<u64>, Vec<VertexId>)> {
    let mut adj: Vec<(VertexId, VertexId)> = Vec::with_capacity(edges.len() * 2);
    for &(a, b) in edges {
        if a as usize >= num_vertices || b as usize >= num_vertices {
            return param(format!("edge ({a}, {b}) references a vertex >= {num_vertices}"));
        }
        if a != b {
            adj.push((a, b));
            adj.push((b, a));
        }
    }
    adj.sort_unstable();
    adj.dedup();
    let mut offsets = vec![0u64; num_vertices + 1];
    for &(a, _) in &adj {
        offsets[a as usize + 1] += 1;
    }
    for i in 0..num_vertices {
        offsets[i + 1] += offsets[i];
    }
    Ok((offsets, adj.into_iter().map(|(_, b)| b).collect()))
}

/// Planted community of `v` when `n` vertices are split into `k` contiguous blocks.
pub fn community(v: usize, n: usize, k: usize) -> usize {
    (v * k) / n
}

/// Labels from contiguous community blocks, each flipped to another class
/// with probability [`LABEL_NOISE`]; features are the one-hot community
/// signal plus unit-variance Gaussian noise.
fn synthetic_attributes(n: usize, n_attr: usize, num_classes: usize, rng: &mut rng::Rng) -> (Vec<f32>, Vec<u32>) {
    let mut labels = Vec::with_capacity(n);
    for v in 0..n {
        let block = community(v, n, num_classes);
        let label = if rng.random::<f64>() < LABEL_NOISE {
            let shift = rng.random_range(1..num_classes);
            (block + shift) % num_classes
        } else {
            block
        };
        labels.push(label as u32);
    }
    let mut features = Vec::with_capacity(n * n_attr);
    for v in 0..n {
        let hot = community(v, n, num_classes) % n_attr;
        for j in 0..n_attr {
            let noise: f64 = StandardNormal.sample(rng);
            let signal = if j == hot { 1.0 } else { 0.0 };
            features.push((signal + noise) as f32);
        }
    }
    (features, labels)
}

/// Barabasi-Albert style preferential attachment over planted communities.
///
/// A clique on `min(n, m + 1)` vertices seeds the process; every later vertex
/// attaches to `m` distinct earlier vertices chosen with probability
/// proportional to degree, drawn from its own community with probability
/// [`HOMOPHILY`] and from the whole graph otherwise.
pub fn generate_power_law(n: usize, m: usize, n_attr: usize, num_classes: usize, seed: u64) -> Result<Graph> {
    if m < 1 || n < m {
        return param(format!("power-law generator needs n >= m >= 1 (n={n}, m={m})"));
    }
    if n_attr < 1 {
        return param("n_attr must be at least 1");
    }
    if num_classes < 2 {
        return param("num_classes must be at least 2");
    }
    if n > u32::MAX as usize {
        return param("too many vertices");
    }
    let mut rng = rng::rng(seed);
    let clique = n.min(m + 1);
    let mut edges = Vec::with_capacity(clique * clique / 2 + (n - clique) * m);
    // Every edge contributes both endpoints, so uniform draws from these
    // pools are degree-proportional draws over vertices.
    let mut global: Vec<VertexId> = Vec::new();
    let mut by_block: Vec<Vec<VertexId>> = vec![Vec::new(); num_classes];
    let push = |a: usize, b: usize, edges: &mut Vec<(u32, u32)>, global: &mut Vec<VertexId>, by_block: &mut [Vec<VertexId>]| {
        edges.push((a as u32, b as u32));
        for v in [a, b] {
            global.push(v as u32);
            by_block[community(v, n, num_classes)].push(v as u32);
        }
    };
    for a in 0..clique {
        for b in a + 1..clique {
            push(a, b, &mut edges, &mut global, &mut by_block);
        }
    }
    let mut chosen: Vec<usize> = Vec::with_capacity(m);
    for v in clique..n {
        let block = community(v, n, num_classes);
        chosen.clear();
        while chosen.len() < m {
            let local = &by_block[block];
            let pool = if !local.is_empty() && rng.random::<f64>() < HOMOPHILY {
                local
            } else {
                &global
            };
            let u = pool[rng.random_range(0..pool.len())] as usize;
            if !chosen.contains(&u) {
                chosen.push(u);
            }
        }
        for &u in &chosen {
            push(v, u, &mut edges, &mut global, &mut by_block);
        }
    }
    let (features, labels) = synthetic_attributes(n, n_attr, num_classes, &mut rng);
    Graph::from_edges(n, &edges, n_attr, features, labels, num_classes)
}

/// Read a whitespace-separated `src dst` edge list with 0-based ids.
pub fn load_edge_list(path: impl AsRef<Path>, n_attr: usize, seed: u64) -> Result<Graph> {
    load_edge_list_with_classes(path, n_attr, DEFAULT_NUM_CLASSES, seed)
}

pub fn load_edge_list_with_classes(
    path: impl AsRef<Path>,
    n_attr: usize,
    num_classes: usize,
    seed: u64,
) -> Result<Graph> {
    let path = path.as_ref();
    if n_attr < 1 {
        return param("n_attr must be at least 1");
    }
    if num_classes < 2 {
        return param("num_classes must be at least 2");
    }
    let reader = BufReader::new(fs::File::open(path)?);
    let mut edges = Vec::new();
    let mut max_id = 0u32;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            msg,
        };
        let mut tokens = trimmed.split_whitespace();
        let (Some(a), Some(b), None) = (tokens.next(), tokens.next(), tokens.next()) else {
            return Err(parse_err(format!("expected `src dst`, got {trimmed:?}")));
        };
        let parse_id = |tok: &str| -> Result<u32> {
            let id: u64 = tok
                .parse()
                .map_err(|_| parse_err(format!("invalid vertex id {tok:?}")))?;
            if id >= u32::MAX as u64 {
                return Err(parse_err(format!("vertex id {id} overflows")));
            }
            Ok(id as u32)
        };
        let (a, b) = (parse_id(a)?, parse_id(b)?);
        max_id = max_id.max(a).max(b);
        edges.push((a, b));
    }
    if edges.is_empty() {
        return Err(Error::NoEdges(path.to_path_buf()));
    }
    let n = max_id as usize + 1;
    let mut rng = rng::rng(seed);
    let (features, labels) = synthetic_attributes(n, n_attr, num_classes, &mut rng);
    Graph::from_edges(n, &edges, n_attr, features, labels, num_classes)
}

/// Exact degree statistics of a graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeStats {
    pub mean_degree: f64,
    /// degree -> number of vertices with that degree
    pub degree_histogram: BTreeMap<usize, usize>,
    /// Power-law exponent from a log-log least-squares fit of the histogram.
    pub skew: f64,
}

pub fn degree_stats(g: &Graph) -> DegreeStats {
    let n = g.num_vertices();
    let mut hist = BTreeMap::new();
    for v in 0..n {
        *hist.entry(g.degree(v as u32)).or_insert(0) += 1;
    }
    let mean_degree = if n == 0 {
        0.0
    } else {
        g.num_directed_edges() as f64 / n as f64
    };
    let skew = power_law_exponent(&hist);
    DegreeStats {
        mean_degree,
        degree_histogram: hist,
        skew,
    }
}

/// Negative slope of `ln count` against `ln degree` over non-zero degrees.
/// Zero when fewer than two distinct positive degrees exist.
pub fn power_law_exponent(hist: &BTreeMap<usize, usize>) -> f64 {
    let pts: Vec<(f64, f64)> = hist
        .iter()
        .filter(|(&d, &c)| d > 0 && c > 0)
        .map(|(&d, &c)| ((d as f64).ln(), (c as f64).ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    -sxy / sxx
}

/// Graph-level summary the estimator needs to make predictions for a graph
/// without holding the graph itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphProfile {
    pub num_vertices: usize,
    pub num_edges: usize,
    pub n_attr: usize,
    pub num_classes: usize,
    pub mean_degree: f64,
    pub skew: f64,
    pub degree_histogram: BTreeMap<usize, usize>,
}

impl GraphProfile {
    pub fn of(g: &Graph) -> Self {
        let stats = degree_stats(g);
        Self {
            num_vertices: g.num_vertices(),
            num_edges: g.num_edges(),
            n_attr: g.n_attr(),
            num_classes: g.num_classes(),
            mean_degree: stats.mean_degree,
            skew: stats.skew,
            degree_histogram: stats.degree_histogram,
        }
    }

    /// Expected `min(k, deg)` for a uniformly drawn vertex.
    pub fn mean_capped_degree(&self, k: f64) -> f64 {
        let n = self.num_vertices.max(1) as f64;
        self.degree_histogram
            .iter()
            .map(|(&d, &c)| c as f64 * (d as f64).min(k))
            .sum::<f64>()
            / n
    }

    /// Expected `min(k, deg)` for a vertex reached by following a random edge
    /// (degree-biased), which is how frontier vertices past the targets arise.
    pub fn edge_biased_capped_degree(&self, k: f64) -> f64 {
        let total: f64 = self
            .degree_histogram
            .iter()
            .map(|(&d, &c)| (c * d) as f64)
            .sum();
        if total == 0.0 {
            return 0.0;
        }
        self.degree_histogram
            .iter()
            .map(|(&d, &c)| (c * d) as f64 * (d as f64).min(k))
            .sum::<f64>()
            / total
    }

    /// Mean degree of a vertex reached by following a random edge.
    pub fn edge_biased_mean_degree(&self) -> f64 {
        self.edge_biased_capped_degree(f64::INFINITY)
    }

    /// Share of all edge endpoints owned by the `count` highest-degree vertices.
    pub fn top_degree_mass(&self, count: usize) -> f64 {
        let total: f64 = self
            .degree_histogram
            .iter()
            .map(|(&d, &c)| (c * d) as f64)
            .sum();
        if total == 0.0 {
            return 0.0;
        }
        let mut left = count;
        let mut mass = 0.0;
        for (&d, &c) in self.degree_histogram.iter().rev() {
            if left == 0 {
                break;
            }
            let take = left.min(c);
            mass += (take * d) as f64;
            left -= take;
        }
        mass / total
    }
}
