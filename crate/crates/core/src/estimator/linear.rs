//! Least squares with optional intercept and non-negative coefficients.

use nalgebra::{DMatrix, DVector};

/// Singular values below this (after column normalisation) are treated as zero.
const RANK_EPS: f64 = 1e-10;

/// Solve `min |X b + c - y|^2`.
///
/// Returns the feature coefficients followed by the intercept when
/// `intercept` is set. With `nonneg`, any negative feature coefficient is
/// pinned to zero and the rest refit until none remain negative.
pub fn least_squares(x: &[Vec<f64>], y: &[f64], intercept: bool, nonneg: bool) -> Result<Vec<f64>, String> {
    let rows = x.len();
    if rows == 0 || rows != y.len() {
        return Err(format!("{} feature rows for {} targets", rows, y.len()));
    }
    let p = x[0].len();
    if x.iter().any(|r| r.len() != p) {
        return Err("ragged feature rows".into());
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err("non-finite training data".into());
    }
    let mut free: Vec<bool> = vec![true; p];
    loop {
        let coef = solve(x, y, intercept, &free);
        if !nonneg {
            return Ok(coef);
        }
        let worst = (0..p)
            .filter(|&j| free[j] && coef[j] < 0.0)
            .min_by(|&a, &b| coef[a].total_cmp(&coef[b]));
        match worst {
            Some(j) => free[j] = false,
            None => return Ok(coef),
        }
    }
}

fn solve(x: &[Vec<f64>], y: &[f64], intercept: bool, free: &[bool]) -> Vec<f64> {
    let p = free.len();
    let cols: Vec<usize> = (0..p).filter(|&j| free[j]).collect();
    let width = cols.len() + intercept as usize;
    let mut out = vec![0.0; p + intercept as usize];
    if width == 0 {
        return out;
    }
    let rows = x.len();
    let mut a = DMatrix::<f64>::zeros(rows, width);
    for (i, row) in x.iter().enumerate() {
        for (c, &j) in cols.iter().enumerate() {
            a[(i, c)] = row[j];
        }
        if intercept {
            a[(i, width - 1)] = 1.0;
        }
    }
    let scale: Vec<f64> = (0..width)
        .map(|c| {
            let n = a.column(c).norm();
            if n > 0.0 {
                n
            } else {
                1.0
            }
        })
        .collect();
    for (c, s) in scale.iter().enumerate() {
        a.column_mut(c).unscale_mut(*s);
    }
    let b = DVector::from_column_slice(y);
    let svd = a.svd(true, true);
    let max_sv = svd.singular_values.max();
    let sol = svd
        .solve(&b, RANK_EPS * max_sv.max(f64::MIN_POSITIVE))
        .expect("svd computed with both factors");
    for (c, &j) in cols.iter().enumerate() {
        out[j] = sol[c] / scale[c];
    }
    if intercept {
        out[p] = sol[width - 1] / scale[width - 1];
    }
    out
}
