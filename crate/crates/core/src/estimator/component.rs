//! Learned component functions: a linear model or a k-nearest-neighbour
//! regressor over a named feature vector.

use serde::{Deserialize, Serialize};

use super::linear::least_squares;
use crate::error::{Error, Result};

/// Neighbours consulted by the knn regressor.
pub const KNN_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    FSample,
    FTransfer,
    FReplace,
    FCompute,
    FCache,
    FRuntime,
    FAccuracy,
    FOverlapping,
    FHit,
}

impl Component {
    pub const ALL: [Component; 9] = [
        Self::FSample,
        Self::FTransfer,
        Self::FReplace,
        Self::FCompute,
        Self::FCache,
        Self::FRuntime,
        Self::FAccuracy,
        Self::FOverlapping,
        Self::FHit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::FSample => "f_sample",
            Self::FTransfer => "f_transfer",
            Self::FReplace => "f_replace",
            Self::FCompute => "f_compute",
            Self::FCache => "f_cache",
            Self::FRuntime => "f_runtime",
            Self::FAccuracy => "f_accuracy",
            Self::FOverlapping => "f_overlapping",
            Self::FHit => "f_hit",
        }
    }

    /// Output range of the component.
    pub fn bounds(self) -> (f64, f64) {
        match self {
            Self::FAccuracy => (-1.0, 1.0),
            Self::FHit => (0.0, 1.0),
            // log of the overlap scale; the clamp on the batch size itself
            // keeps the prediction inside its analytic range
            Self::FOverlapping => (f64::NEG_INFINITY, f64::INFINITY),
            _ => (0.0, f64::INFINITY),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    LinearLeastSquares,
    Knn,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::LinearLeastSquares => "linear_least_squares",
            Self::Knn => "knn",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "linear" | "linear_least_squares" => Some(Self::LinearLeastSquares),
            "knn" => Some(Self::Knn),
            _ => None,
        }
    }
}

/// How a linear component is constrained during fitting.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Shape {
    pub intercept: bool,
    pub nonneg: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentModel {
    pub component: Component,
    pub kind: ModelKind,
    pub features: Vec<String>,
    /// Linear: feature coefficients, then the intercept if present.
    #[serde(default)]
    pub coefficients: Vec<f64>,
    #[serde(default)]
    pub intercept: bool,
    /// Knn: standardised exemplars with their targets.
    #[serde(default)]
    pub exemplars: Vec<(Vec<f64>, f64)>,
    #[serde(default)]
    pub center: Vec<f64>,
    #[serde(default)]
    pub scale: Vec<f64>,
}

impl ComponentModel {
    pub(crate) fn fit(
        component: Component,
        kind: ModelKind,
        features: &[&str],
        x: &[Vec<f64>],
        y: &[f64],
        shape: Shape,
    ) -> Result<Self> {
        let fail = |reason: String| Error::Fit {
            component: component.as_str().into(),
            reason,
        };
        let p = features.len() + shape.intercept as usize;
        let needed = match kind {
            ModelKind::LinearLeastSquares => p.max(2),
            ModelKind::Knn => KNN_K,
        };
        if x.len() < needed {
            return Err(fail(format!("{} usable records, need at least {needed}", x.len())));
        }
        let mut model = Self {
            component,
            kind,
            features: features.iter().map(|s| s.to_string()).collect(),
            coefficients: Vec::new(),
            intercept: false,
            exemplars: Vec::new(),
            center: Vec::new(),
            scale: Vec::new(),
        };
        match kind {
            ModelKind::LinearLeastSquares => {
                model.coefficients = least_squares(x, y, shape.intercept, shape.nonneg).map_err(fail)?;
                model.intercept = shape.intercept;
            }
            ModelKind::Knn => {
                if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
                    return Err(fail("non-finite training data".into()));
                }
                let d = features.len();
                let n = x.len() as f64;
                model.center = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
                model.scale = (0..d)
                    .map(|j| {
                        let var = x.iter().map(|r| (r[j] - model.center[j]).powi(2)).sum::<f64>() / n;
                        if var > 0.0 {
                            var.sqrt()
                        } else {
                            1.0
                        }
                    })
                    .collect();
                let mut ex: Vec<(Vec<f64>, f64)> = x.iter().map(|r| model.standardise(r)).zip(y.iter().copied()).collect();
                // canonical order so the fitted model does not depend on record order
                ex.sort_by(|a, b| {
                    a.0.iter()
                        .zip(&b.0)
                        .map(|(p, q)| p.total_cmp(q))
                        .find(|o| o.is_ne())
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then(a.1.total_cmp(&b.1))
                });
                model.exemplars = ex;
            }
        }
        Ok(model)
    }

    fn standardise(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.center.iter().zip(&self.scale))
            .map(|(v, (c, s))| (v - c) / s)
            .collect()
    }

    /// Unclamped model output.
    pub fn raw(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.features.len());
        match self.kind {
            ModelKind::LinearLeastSquares => {
                let p = self.features.len();
                let mut v: f64 = x.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum();
                if self.intercept {
                    v += self.coefficients[p];
                }
                v
            }
            ModelKind::Knn => {
                let q = self.standardise(x);
                let mut d: Vec<(f64, usize)> = self
                    .exemplars
                    .iter()
                    .enumerate()
                    .map(|(i, (e, _))| (e.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum(), i))
                    .collect();
                let k = KNN_K.min(d.len());
                d.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                d[..k].iter().map(|&(_, i)| self.exemplars[i].1).sum::<f64>() / k as f64
            }
        }
    }

    /// Model output clamped to the component's range.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let (lo, hi) = self.component.bounds();
        self.raw(x).clamp(lo, hi)
    }

    /// A value no prediction can undercut when every feature is at least
    /// `lo`, or `None` when the model is not monotone in its features.
    pub fn lower_bound(&self, lo: &[f64]) -> Option<f64> {
        if self.kind != ModelKind::LinearLeastSquares {
            return None;
        }
        let p = self.features.len();
        if self.coefficients[..p].iter().any(|&c| c < 0.0) {
            return None;
        }
        Some(self.predict(lo))
    }
}
