//! Gray-box performance estimator.
//!
//! The epoch time and memory are composed analytically from per-stage
//! component functions, each a small learned model over features derived
//! from the candidate, the hardware and the graph. Two intermediates are
//! predicted first and feed every other component: the expected mini-batch
//! size (an expansion-tree size shrunk by a learned overlap penalty) and the
//! cache hit rate.

mod component;
mod features;
mod linear;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use component::{Component, ComponentModel, ModelKind, KNN_K};
pub use linear::least_squares;

use component::Shape;
use features::Inputs;

use crate::error::{Error, Result};
use crate::graph::GraphProfile;
use crate::runtime::{Candidate, HardwareSpec, Perf, ProfileRecord};

pub const VERSION: &str = "gnnav-estimator/1";

/// Minimum number of distinct records accepted by [`Estimator::fit`].
pub const MIN_RECORDS: usize = 20;

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Profiles of every graph the records refer to, by graph tag.
    pub graphs: BTreeMap<String, GraphProfile>,
    /// Graph the fitted estimator predicts for.
    pub target: GraphProfile,
    pub kind: ModelKind,
}

/// Measured values to use in place of the learned intermediates.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Intermediates {
    pub batch_size: Option<f64>,
    pub hit_rate: Option<f64>,
}

/// A prediction with all of its parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub perf: Perf,
    pub batch_size: f64,
    pub hit_rate: f64,
    pub n_iter: usize,
    pub t_sample: f64,
    pub t_transfer: f64,
    pub t_replace: f64,
    pub t_compute: f64,
    pub gamma_model: f64,
    pub gamma_cache: f64,
    pub gamma_runtime: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub r2_time: f64,
    pub r2_memory: f64,
    pub mse_accuracy: f64,
    /// Mean absolute relative error of the predicted mini-batch size.
    pub mare_batch_size: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimator {
    pub version: String,
    pub kind: ModelKind,
    /// Graph predictions are made for.
    pub graph: GraphProfile,
    /// Epochs per profiled run, which fixes how the cache fill is amortised.
    pub epochs: usize,
    /// Accuracy of unbiased sampling on the fitting graphs.
    pub baseline_accuracy: f64,
    pub components: Vec<ComponentModel>,
}

struct Row<'a> {
    rec: &'a ProfileRecord,
    cand: Candidate,
    hw: HardwareSpec,
    graph: &'a GraphProfile,
}

/// Sorted, de-duplicated by (graph, candidate, seed).
fn canonical(records: &[ProfileRecord]) -> Vec<&ProfileRecord> {
    let mut recs: Vec<&ProfileRecord> = records.iter().collect();
    recs.sort_by(|a, b| a.key().cmp(&b.key()));
    recs.dedup_by(|a, b| a.key() == b.key());
    recs
}

impl Estimator {
    pub fn fit(records: &[ProfileRecord], opts: &FitOptions) -> Result<Self> {
        let recs = canonical(records);
        if recs.len() < MIN_RECORDS {
            return Err(Error::Fit {
                component: "records".into(),
                reason: format!("{} distinct records, need at least {MIN_RECORDS}", recs.len()),
            });
        }
        let rows = recs
            .iter()
            .map(|&rec| {
                let graph = opts.graphs.get(&rec.graph).ok_or_else(|| Error::Fit {
                    component: "records".into(),
                    reason: format!("no profile for graph {:?}", rec.graph),
                })?;
                Ok(Row {
                    rec,
                    cand: rec.candidate()?,
                    hw: rec.hardware(),
                    graph,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for r in &rows {
            *counts.entry(r.rec.epochs).or_default() += 1;
        }
        let epochs = counts.iter().max_by_key(|(e, c)| (**c, std::cmp::Reverse(**e))).map(|(e, _)| *e).unwrap_or(1);

        let unbiased: Vec<f64> = rows.iter().filter(|r| r.cand.sampler.locality_bias == 0.0).map(|r| r.rec.accuracy).collect();
        let pool: Vec<f64> = if unbiased.is_empty() {
            rows.iter().map(|r| r.rec.accuracy).collect()
        } else {
            unbiased
        };
        let baseline_accuracy = pool.iter().sum::<f64>() / pool.len() as f64;

        let kind = opts.kind;
        let mut data: BTreeMap<Component, (Vec<Vec<f64>>, Vec<f64>)> = BTreeMap::new();
        for r in &rows {
            let i = Inputs::new(&r.cand, &r.hw, r.graph, r.rec.epochs);
            let vi = r.rec.mean_batch_size;
            let hit = r.rec.hit_rate;
            let mut push = |c: Component, x: Vec<f64>, y: f64| {
                let e = data.entry(c).or_default();
                e.0.push(x);
                e.1.push(y);
            };
            push(Component::FSample, features::sample(&i, vi), r.rec.t_sample);
            push(Component::FTransfer, features::transfer(&i, vi, hit), r.rec.t_transfer);
            push(Component::FReplace, features::replace(&i, vi, hit), r.rec.t_replace);
            push(Component::FCompute, features::compute(&i, vi), r.rec.t_compute);
            push(Component::FCache, features::cache(&i), r.rec.gamma_cache as f64);
            push(Component::FRuntime, features::runtime(&i, vi), r.rec.gamma_runtime as f64);
            push(Component::FAccuracy, features::accuracy(&i, vi), r.rec.accuracy - baseline_accuracy);
            if let Some(x) = features::hit(&i, vi) {
                push(Component::FHit, x, hit);
            }
            if let Some(y) = features::log_coverage_scale(&i, vi) {
                push(Component::FOverlapping, features::overlap(&i), y);
            }
        }

        let components = Component::ALL
            .iter()
            .map(|&c| {
                let (names, shape) = layout(c);
                let (x, y) = data.remove(&c).unwrap_or_default();
                ComponentModel::fit(c, kind, names, &x, &y, shape)
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(Self {
            version: VERSION.into(),
            kind,
            graph: opts.target.clone(),
            epochs,
            baseline_accuracy,
            components,
        })
    }

    /// Same learned components, predicting for another graph.
    pub fn retarget(&self, graph: GraphProfile) -> Self {
        Self {
            graph,
            ..self.clone()
        }
    }

    fn check(&self) -> Result<()> {
        if self.version != VERSION {
            return Err(Error::State(format!("unsupported estimator version {:?}", self.version)));
        }
        for (k, c) in Component::ALL.iter().enumerate() {
            let ok = self.components.get(k).is_some_and(|m| {
                m.component == *c && m.features.len() == layout(*c).0.len() && m.kind == self.kind
            });
            if !ok {
                return Err(Error::State(format!("component {} missing or malformed", c.as_str())));
            }
        }
        Ok(())
    }

    fn model(&self, c: Component) -> &ComponentModel {
        &self.components[c as usize]
    }

    fn batch_size_for(&self, i: &Inputs) -> f64 {
        let log_c = self.model(Component::FOverlapping).raw(&features::overlap(i));
        features::coverage(i, log_c)
    }

    /// Expected `|V_i|` for `cand` on the estimator's graph.
    pub fn predict_batch_size(&self, cand: &Candidate) -> Result<f64> {
        self.check()?;
        let hw = HardwareSpec::default();
        let i = Inputs::new(cand, &hw, &self.graph, self.epochs);
        Ok(self.batch_size_for(&i))
    }

    pub fn predict(&self, cand: &Candidate, hw: &HardwareSpec) -> Result<Perf> {
        Ok(self.predict_detailed(cand, hw)?.perf)
    }

    pub fn predict_detailed(&self, cand: &Candidate, hw: &HardwareSpec) -> Result<Prediction> {
        self.predict_with(cand, hw, Intermediates::default())
    }

    /// Prediction with measured intermediates substituted where given.
    pub fn predict_with(&self, cand: &Candidate, hw: &HardwareSpec, given: Intermediates) -> Result<Prediction> {
        self.check()?;
        let i = Inputs::new(cand, hw, &self.graph, self.epochs);
        let vi = given.batch_size.unwrap_or_else(|| self.batch_size_for(&i));
        let hit = given.hit_rate.unwrap_or_else(|| {
            features::hit(&i, vi).map_or(0.0, |x| self.model(Component::FHit).predict(&x))
        });
        let t_sample = self.model(Component::FSample).predict(&features::sample(&i, vi));
        let t_transfer = self.model(Component::FTransfer).predict(&features::transfer(&i, vi, hit));
        let t_replace = self.model(Component::FReplace).predict(&features::replace(&i, vi, hit));
        let t_compute = self.model(Component::FCompute).predict(&features::compute(&i, vi));
        let time = i.n_iter as f64 * (t_sample + t_transfer).max(t_replace + t_compute);
        let gamma_model = i.gamma_model();
        let gamma_cache = self.model(Component::FCache).predict(&features::cache(&i));
        let gamma_runtime = self.model(Component::FRuntime).predict(&features::runtime(&i, vi));
        let delta = self.model(Component::FAccuracy).predict(&features::accuracy(&i, vi));
        Ok(Prediction {
            perf: Perf {
                time,
                memory: gamma_model + gamma_cache + gamma_runtime,
                accuracy: (self.baseline_accuracy + delta).clamp(0.0, 1.0),
            },
            batch_size: vi,
            hit_rate: hit,
            n_iter: i.n_iter,
            t_sample,
            t_transfer,
            t_replace,
            t_compute,
            gamma_model,
            gamma_cache,
            gamma_runtime,
        })
    }

    /// A value the predicted epoch time of `cand` can never fall below.
    ///
    /// Uses only the linear components that are monotone in their inputs at
    /// the smallest admissible batch size; zero otherwise.
    pub fn time_floor(&self, cand: &Candidate, hw: &HardwareSpec) -> Result<f64> {
        self.check()?;
        let i = Inputs::new(cand, hw, &self.graph, self.epochs);
        let vi = i.vi_floor();
        let transfer = self
            .model(Component::FTransfer)
            .lower_bound(&[0.0, hw.link_latency])
            .unwrap_or(0.0);
        let compute = self
            .model(Component::FCompute)
            .lower_bound(&features::compute(&i, vi))
            .unwrap_or(0.0);
        Ok(i.n_iter as f64 * transfer.max(compute))
    }

    /// A value the predicted memory of `cand` can never fall below.
    pub fn memory_floor(&self, cand: &Candidate) -> Result<f64> {
        self.check()?;
        let hw = HardwareSpec::default();
        let i = Inputs::new(cand, &hw, &self.graph, self.epochs);
        let cache = self.model(Component::FCache).predict(&features::cache(&i));
        let runtime = self
            .model(Component::FRuntime)
            .lower_bound(&features::runtime(&i, i.vi_floor()))
            .unwrap_or(0.0);
        Ok(i.gamma_model() + cache + runtime)
    }

    /// Score predictions against held-out measurements on the estimator's graph.
    pub fn validate(&self, records: &[ProfileRecord]) -> Result<Metrics> {
        let recs = canonical(records);
        if recs.len() < 5 {
            return Err(Error::Param(format!("validation needs at least 5 records, got {}", recs.len())));
        }
        let mut t = Vec::new();
        let mut m = Vec::new();
        let mut a = Vec::new();
        let mut v = Vec::new();
        for rec in recs {
            let p = self.predict_detailed(&rec.candidate()?, &rec.hardware())?;
            t.push((rec.time, p.perf.time));
            m.push((rec.gamma as f64, p.perf.memory));
            a.push((rec.accuracy, p.perf.accuracy));
            v.push((rec.mean_batch_size, p.batch_size));
        }
        Ok(Metrics {
            r2_time: r2(&t),
            r2_memory: r2(&m),
            mse_accuracy: mse(&a),
            mare_batch_size: mare(&v),
            count: t.len(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let est: Self = serde_json::from_str(s)?;
        est.check()?;
        Ok(est)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn layout(c: Component) -> (&'static [&'static str], Shape) {
    let origin = Shape {
        intercept: false,
        nonneg: true,
    };
    let free = Shape {
        intercept: true,
        nonneg: false,
    };
    match c {
        Component::FSample => (features::SAMPLE, origin),
        Component::FTransfer => (features::TRANSFER, origin),
        Component::FReplace => (features::REPLACE, origin),
        Component::FCompute => (features::COMPUTE, origin),
        Component::FCache => (features::CACHE, origin),
        Component::FRuntime => (features::RUNTIME, origin),
        Component::FHit => (
            features::HIT,
            Shape {
                intercept: false,
                nonneg: false,
            },
        ),
        Component::FOverlapping => (features::OVERLAP, free),
        Component::FAccuracy => (features::ACCURACY, free),
    }
}

/// Knn regressor of `|V_i|` on raw configuration features, the black-box
/// baseline the gray-box batch-size model is compared with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlackBoxBatchSize {
    pub model: ComponentModel,
}

impl BlackBoxBatchSize {
    pub fn fit(records: &[ProfileRecord], graphs: &BTreeMap<String, GraphProfile>) -> Result<Self> {
        let hw = HardwareSpec::default();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for rec in canonical(records) {
            let g = graphs.get(&rec.graph).ok_or_else(|| Error::Fit {
                component: "black_box".into(),
                reason: format!("no profile for graph {:?}", rec.graph),
            })?;
            let cand = rec.candidate()?;
            x.push(features::black_box(&Inputs::new(&cand, &hw, g, rec.epochs)));
            y.push(rec.mean_batch_size);
        }
        let shape = Shape {
            intercept: false,
            nonneg: false,
        };
        let model = ComponentModel::fit(Component::FOverlapping, ModelKind::Knn, features::BLACK_BOX, &x, &y, shape)?;
        Ok(Self { model })
    }

    pub fn predict(&self, cand: &Candidate, graph: &GraphProfile) -> f64 {
        let hw = HardwareSpec::default();
        self.model.raw(&features::black_box(&Inputs::new(cand, &hw, graph, 1)))
    }
}

/// Coefficient of determination of `(measured, predicted)` pairs.
pub fn r2(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let mean = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let ss_res: f64 = pairs.iter().map(|(y, f)| (y - f).powi(2)).sum();
    let ss_tot: f64 = pairs.iter().map(|(y, _)| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return if ss_res == 0.0 { 1.0 } else { 0.0 };
    }
    1.0 - ss_res / ss_tot
}

pub fn mse(pairs: &[(f64, f64)]) -> f64 {
    pairs.iter().map(|(y, f)| (y - f).powi(2)).sum::<f64>() / pairs.len() as f64
}

/// Mean absolute relative error; pairs with a zero measurement are skipped.
pub fn mare(pairs: &[(f64, f64)]) -> f64 {
    let rel: Vec<f64> = pairs.iter().filter(|p| p.0 != 0.0).map(|(y, f)| ((f - y) / y).abs()).collect();
    if rel.is_empty() {
        return 0.0;
    }
    rel.iter().sum::<f64>() / rel.len() as f64
}

#[cfg(test)]
mod tests;
