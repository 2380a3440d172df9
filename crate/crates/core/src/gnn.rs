//! A minimal message-passing GNN trained with plain gradient descent.
//!
//! Layer `l` aggregates `h^{l-1}` over each vertex's batch-local neighbours
//! plus itself, then applies a linear map followed by ReLU (no ReLU on the
//! last layer). It serves two purposes: an accuracy oracle for sampled
//! mini-batches and a FLOP model for the compute cost.

use ndarray::{Array2, Axis};
use rand::Rng as _;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::graph::{Graph, VertexId};
use crate::rng;
use crate::sampler::MiniBatch;

/// Seed of the fixed held-out vertex split shared by every accuracy run.
pub const HELDOUT_SEED: u64 = 0x5EED_0020;
/// Fraction of vertices held out for evaluation.
pub const HELDOUT_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    #[default]
    Mean,
    Sum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Layer widths `d_0 .. d_L`; `d_0 = n_attr`, `d_L = num_classes`.
    pub dims: Vec<usize>,
    #[serde(default)]
    pub aggregate: Aggregate,
}

impl ModelSpec {
    pub fn new(dims: Vec<usize>, aggregate: Aggregate) -> Result<Self> {
        let spec = Self { dims, aggregate };
        spec.validate()?;
        Ok(spec)
    }

    /// `n_attr -> hidden -> ... -> num_classes` with `layers` layers.
    pub fn uniform(n_attr: usize, hidden: usize, num_classes: usize, layers: usize) -> Result<Self> {
        if layers < 1 {
            return param("model needs at least one layer");
        }
        let mut dims = vec![n_attr];
        dims.extend(std::iter::repeat_n(hidden, layers - 1));
        dims.push(num_classes);
        Self::new(dims, Aggregate::Mean)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.len() < 2 {
            return param("model needs at least one layer");
        }
        if self.dims.contains(&0) {
            return param("layer widths must be positive");
        }
        Ok(())
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    /// `|Phi| = sum_l d_{l-1} * d_l`.
    pub fn phi_count(&self) -> u64 {
        self.dims.windows(2).map(|w| (w[0] * w[1]) as u64).sum()
    }

    /// Sum of all layer widths including input and output.
    pub fn width_sum(&self) -> u64 {
        self.dims.iter().map(|&d| d as u64).sum()
    }
}

/// Weight matrices `W_l` of shape `d_{l-1} x d_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub weights: Vec<Array2<f64>>,
}

impl Params {
    /// Glorot-uniform initialisation.
    pub fn init(spec: &ModelSpec, seed: u64) -> Self {
        let mut rng = rng::rng(seed);
        let weights = spec
            .dims
            .windows(2)
            .map(|w| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                Array2::from_shape_fn((w[0], w[1]), |_| rng.random_range(-limit..limit))
            })
            .collect();
        Self { weights }
    }

    pub fn identity(spec: &ModelSpec) -> Self {
        Self {
            weights: spec
                .dims
                .windows(2)
                .map(|w| Array2::from_shape_fn((w[0], w[1]), |(i, j)| if i == j { 1.0 } else { 0.0 }))
                .collect(),
        }
    }

    fn check(&self, spec: &ModelSpec) -> Result<()> {
        if self.weights.len() != spec.num_layers() {
            return param(format!(
                "expected {} weight matrices, got {}",
                spec.num_layers(),
                self.weights.len()
            ));
        }
        for (l, (w, d)) in self.weights.iter().zip(spec.dims.windows(2)).enumerate() {
            if w.dim() != (d[0], d[1]) {
                return param(format!("layer {l}: weight shape {:?}, expected ({}, {})", w.dim(), d[0], d[1]));
            }
        }
        Ok(())
    }
}

/// Work of one layer for the FLOP model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerWork {
    /// Vertices whose embedding the layer computes.
    pub vertices: usize,
    /// Directed neighbour messages summed during aggregation (self excluded).
    pub messages: usize,
}

/// `sum_l 2 |V_l| d_{l-1} d_l + |E_l| d_{l-1}`.
pub fn flop_count(layers: &[LayerWork], spec: &ModelSpec) -> u64 {
    layers
        .iter()
        .zip(spec.dims.windows(2))
        .map(|(work, d)| 2 * (work.vertices * d[0] * d[1]) as u64 + (work.messages * d[0]) as u64)
        .sum()
}

/// Per-layer work of running `spec` on `batch`: every layer touches all of
/// `V_i` and every edge in both directions.
pub fn batch_work(batch: &MiniBatch, spec: &ModelSpec) -> Vec<LayerWork> {
    vec![
        LayerWork {
            vertices: batch.num_vertices(),
            messages: 2 * batch.num_edges(),
        };
        spec.num_layers()
    ]
}

/// Row-normalised aggregation operator over a vertex subset, stored as CSR.
#[derive(Debug, Clone)]
struct AggPlan {
    /// global ids of the local rows
    vertices: Vec<VertexId>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    coef: Vec<f64>,
}

impl AggPlan {
    fn build(vertices: Vec<VertexId>, local_adj: Vec<Vec<usize>>, aggregate: Aggregate) -> Self {
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut coef = Vec::new();
        for (v, nbrs) in local_adj.iter().enumerate() {
            let c = match aggregate {
                Aggregate::Mean => 1.0 / (nbrs.len() + 1) as f64,
                Aggregate::Sum => 1.0,
            };
            cols.push(v);
            coef.push(c);
            for &u in nbrs {
                cols.push(u);
                coef.push(c);
            }
            row_ptr.push(cols.len());
        }
        Self {
            vertices,
            row_ptr,
            cols,
            coef,
        }
    }

    /// Plan over `V_i` plus the local row of each target.
    fn for_batch(g: &Graph, batch: &MiniBatch, aggregate: Aggregate) -> (Self, Vec<usize>) {
        let mut local = vec![usize::MAX; g.num_vertices()];
        for (i, &v) in batch.vertices.iter().enumerate() {
            local[v as usize] = i;
        }
        let mut adj = vec![Vec::new(); batch.vertices.len()];
        for &(a, b) in &batch.edges {
            let (la, lb) = (local[a as usize], local[b as usize]);
            adj[la].push(lb);
            adj[lb].push(la);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        let target_rows = batch.targets.iter().map(|&t| local[t as usize]).collect();
        (Self::build(batch.vertices.clone(), adj, aggregate), target_rows)
    }

    fn full(g: &Graph, aggregate: Aggregate) -> Self {
        let n = g.num_vertices();
        let adj = (0..n as u32)
            .map(|v| g.neighbors(v).iter().map(|&u| u as usize).collect())
            .collect();
        Self::build((0..n as u32).collect(), adj, aggregate)
    }

    fn len(&self) -> usize {
        self.vertices.len()
    }

    fn apply(&self, h: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(h.raw_dim());
        for v in 0..self.len() {
            let mut row = out.row_mut(v);
            for k in self.row_ptr[v]..self.row_ptr[v + 1] {
                row.scaled_add(self.coef[k], &h.row(self.cols[k]));
            }
        }
        out
    }

    fn apply_transpose(&self, g: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(g.raw_dim());
        for v in 0..self.len() {
            let src = g.row(v);
            for k in self.row_ptr[v]..self.row_ptr[v + 1] {
                out.row_mut(self.cols[k]).scaled_add(self.coef[k], &src);
            }
        }
        out
    }

    fn gather_features(&self, g: &Graph) -> Array2<f64> {
        let d = g.n_attr();
        Array2::from_shape_fn((self.len(), d), |(i, j)| g.feature(self.vertices[i])[j] as f64)
    }
}

struct ForwardCache {
    aggregated: Vec<Array2<f64>>,
    pre_activation: Vec<Array2<f64>>,
}

fn forward_plan(plan: &AggPlan, x0: Array2<f64>, params: &Params) -> (Array2<f64>, ForwardCache) {
    let layers = params.weights.len();
    let mut h = x0;
    let mut cache = ForwardCache {
        aggregated: Vec::with_capacity(layers),
        pre_activation: Vec::with_capacity(layers),
    };
    for (l, w) in params.weights.iter().enumerate() {
        let a = plan.apply(&h);
        let z = a.dot(w);
        h = if l + 1 < layers { z.mapv(|x| x.max(0.0)) } else { z.clone() };
        cache.aggregated.push(a);
        cache.pre_activation.push(z);
    }
    (h, cache)
}

/// Class scores for the batch's targets, in target order.
pub fn forward(batch: &MiniBatch, g: &Graph, spec: &ModelSpec, params: &Params) -> Result<Array2<f64>> {
    spec.validate()?;
    params.check(spec)?;
    if spec.dims[0] != g.n_attr() {
        return param(format!("input width {} does not match n_attr {}", spec.dims[0], g.n_attr()));
    }
    let (plan, rows) = AggPlan::for_batch(g, batch, spec.aggregate);
    let x0 = plan.gather_features(g);
    let (out, _) = forward_plan(&plan, x0, params);
    Ok(out.select(Axis(0), &rows))
}

/// Mean softmax cross-entropy over `rows` of `scores` and its gradient.
fn softmax_xent(scores: &Array2<f64>, rows: &[usize], labels: &[u32]) -> (f64, Array2<f64>) {
    let mut grad = Array2::zeros(scores.raw_dim());
    if rows.is_empty() {
        return (0.0, grad);
    }
    let n = rows.len() as f64;
    let mut loss = 0.0;
    for (&r, &y) in rows.iter().zip(labels) {
        let row = scores.row(r);
        let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        let exps: Vec<f64> = row.iter().map(|&x| (x - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        loss -= (exps[y as usize] / sum).ln();
        for (c, e) in exps.iter().enumerate() {
            let p = e / sum;
            grad[[r, c]] = (p - if c == y as usize { 1.0 } else { 0.0 }) / n;
        }
    }
    (loss / n, grad)
}

fn backward(plan: &AggPlan, cache: &ForwardCache, params: &Params, mut dz: Array2<f64>) -> Vec<Array2<f64>> {
    let layers = params.weights.len();
    let mut grads = vec![Array2::zeros((0, 0)); layers];
    for l in (0..layers).rev() {
        grads[l] = cache.aggregated[l].t().dot(&dz);
        if l > 0 {
            let da = dz.dot(&params.weights[l].t());
            let mut dh = plan.apply_transpose(&da);
            dh.zip_mut_with(&cache.pre_activation[l - 1], |g, &z| {
                if z <= 0.0 {
                    *g = 0.0
                }
            });
            dz = dh;
        }
    }
    grads
}

/// Loss over the batch targets not excluded by `exclude` (global vertex mask),
/// and the gradient with respect to every weight matrix.
pub fn loss_and_gradient(
    batch: &MiniBatch,
    g: &Graph,
    spec: &ModelSpec,
    params: &Params,
    exclude: Option<&[bool]>,
) -> Result<(f64, Vec<Array2<f64>>)> {
    params.check(spec)?;
    let (plan, target_rows) = AggPlan::for_batch(g, batch, spec.aggregate);
    let (rows, labels) = train_rows(g, &batch.targets, &target_rows, exclude);
    Ok(step_gradient(&plan, g, params, &rows, &labels))
}

fn train_rows(g: &Graph, targets: &[VertexId], rows: &[usize], exclude: Option<&[bool]>) -> (Vec<usize>, Vec<u32>) {
    targets
        .iter()
        .zip(rows)
        .filter(|(&t, _)| !exclude.is_some_and(|m| m[t as usize]))
        .map(|(&t, &r)| (r, g.label(t)))
        .unzip()
}

fn step_gradient(plan: &AggPlan, g: &Graph, params: &Params, rows: &[usize], labels: &[u32]) -> (f64, Vec<Array2<f64>>) {
    let (scores, cache) = forward_plan(plan, plan.gather_features(g), params);
    let (loss, dz) = softmax_xent(&scores, rows, labels);
    (loss, backward(plan, &cache, params, dz))
}

/// The fixed held-out split: `true` marks an evaluation vertex.
pub fn heldout_mask(num_vertices: usize) -> Vec<bool> {
    let mut order: Vec<usize> = (0..num_vertices).collect();
    order.shuffle(&mut rng::rng(HELDOUT_SEED));
    let count = (num_vertices as f64 * HELDOUT_FRACTION).round() as usize;
    let mut mask = vec![false; num_vertices];
    for &v in &order[..count] {
        mask[v] = true;
    }
    mask
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub train_accuracy: f64,
    pub heldout_accuracy: f64,
    /// Mini-batch loss before each step.
    pub losses: Vec<f64>,
}

/// Trains on a fixed sequence of mini-batches and evaluates on the full graph.
/// Aggregation plans are built once so several seeds can reuse them.
pub struct AccuracyOracle<'g> {
    g: &'g Graph,
    spec: ModelSpec,
    plans: Vec<(AggPlan, Vec<usize>, Vec<u32>)>,
    full: AggPlan,
    heldout: Vec<bool>,
}

impl<'g> AccuracyOracle<'g> {
    pub fn new(g: &'g Graph, batches: &[MiniBatch], spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        if spec.dims[0] != g.n_attr() || *spec.dims.last().unwrap() != g.num_classes() {
            return param("model input/output widths must match n_attr and num_classes");
        }
        let heldout = heldout_mask(g.num_vertices());
        let plans = batches
            .iter()
            .map(|b| {
                let (plan, target_rows) = AggPlan::for_batch(g, b, spec.aggregate);
                let (rows, labels) = train_rows(g, &b.targets, &target_rows, Some(&heldout));
                (plan, rows, labels)
            })
            .collect();
        Ok(Self {
            g,
            spec: spec.clone(),
            plans,
            full: AggPlan::full(g, spec.aggregate),
            heldout,
        })
    }

    pub fn run(&self, steps: usize, lr: f64, seed: u64) -> Result<TrainReport> {
        if steps < 1 {
            return param("steps must be at least 1");
        }
        let mut params = Params::init(&self.spec, seed);
        let mut losses = Vec::with_capacity(steps);
        if !self.plans.is_empty() {
            for step in 0..steps {
                let (plan, rows, labels) = &self.plans[step % self.plans.len()];
                let (loss, grads) = step_gradient(plan, self.g, &params, rows, labels);
                losses.push(loss);
                if lr != 0.0 {
                    for (w, gw) in params.weights.iter_mut().zip(&grads) {
                        w.scaled_add(-lr, gw);
                    }
                }
            }
        }
        let (scores, _) = forward_plan(&self.full, self.full.gather_features(self.g), &params);
        let (mut train_ok, mut train_n, mut held_ok, mut held_n) = (0usize, 0usize, 0usize, 0usize);
        for (v, row) in scores.outer_iter().enumerate() {
            let pred = argmax(row.iter().copied());
            let ok = pred == self.g.label(v as u32) as usize;
            if self.heldout[v] {
                held_n += 1;
                held_ok += ok as usize;
            } else {
                train_n += 1;
                train_ok += ok as usize;
            }
        }
        let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        Ok(TrainReport {
            train_accuracy: frac(train_ok, train_n),
            heldout_accuracy: frac(held_ok, held_n),
            losses,
        })
    }
}

fn argmax(it: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, x) in it.enumerate() {
        if x > best.1 {
            best = (i, x);
        }
    }
    best.0
}

/// Train for `steps` gradient steps cycling through `batches`; return
/// held-out accuracy on the fixed 20% split.
pub fn train_and_eval(g: &Graph, batches: &[MiniBatch], spec: &ModelSpec, steps: usize, lr: f64, seed: u64) -> Result<f64> {
    Ok(AccuracyOracle::new(g, batches, spec)?.run(steps, lr, seed)?.heldout_accuracy)
}
