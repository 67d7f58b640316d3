//! Fit-and-apply outlier repair (Tukey fences with median replacement) and
//! min-max normalization. Fitted state is persisted with the model so the
//! same transforms apply at inference time.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Per-feature Tukey boxplot statistics fitted on training data.
#[derive(Debug, Clone, PartialEq)]
pub struct OutlierModel {
    pub q1: Vec<f64>,
    pub q3: Vec<f64>,
    pub median: Vec<f64>,
    pub lower_fence: Vec<f64>,
    pub upper_fence: Vec<f64>,
}

impl OutlierModel {
    pub fn cols(&self) -> usize {
        self.q1.len()
    }
}

/// Per-feature training min/max for Eq-7 style scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub x_min: Vec<f64>,
    pub x_max: Vec<f64>,
}

impl Scaler {
    pub fn cols(&self) -> usize {
        self.x_min.len()
    }
}

/// Linear-interpolation quantile (type-7) of already-sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 < n {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[lo]
    }
}

/// Fit quartiles, median and 1.5*IQR fences per feature.
pub fn fit_outlier_bounds(x: &Matrix) -> Result<OutlierModel> {
    if x.rows() < 4 {
        return Err(Error::data(format!(
            "outlier fitting needs at least 4 rows, got {}",
            x.rows()
        )));
    }
    let cols = x.cols();
    let mut m = OutlierModel {
        q1: Vec::with_capacity(cols),
        q3: Vec::with_capacity(cols),
        median: Vec::with_capacity(cols),
        lower_fence: Vec::with_capacity(cols),
        upper_fence: Vec::with_capacity(cols),
    };
    for c in 0..cols {
        let mut col = x.column(c);
        col.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q1 = quantile_sorted(&col, 0.25);
        let q3 = quantile_sorted(&col, 0.75);
        let iqr = q3 - q1;
        m.q1.push(q1);
        m.q3.push(q3);
        m.median.push(quantile_sorted(&col, 0.5));
        m.lower_fence.push(q1 - 1.5 * iqr);
        m.upper_fence.push(q3 + 1.5 * iqr);
    }
    Ok(m)
}

/// Replace every value outside its feature's fences with the training median.
pub fn repair_outliers(m: &OutlierModel, x: &Matrix) -> Result<Matrix> {
    if x.cols() != m.cols() {
        return Err(Error::shape(format!(
            "outlier model has {} features, matrix {}",
            m.cols(),
            x.cols()
        )));
    }
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        for (c, v) in row.iter_mut().enumerate() {
            if *v < m.lower_fence[c] || *v > m.upper_fence[c] {
                *v = m.median[c];
            }
        }
    }
    Ok(out)
}

/// Record per-feature training min and max.
pub fn fit_scaler(x: &Matrix) -> Result<Scaler> {
    if x.rows() == 0 {
        return Err(Error::data("cannot fit scaler on empty matrix"));
    }
    let cols = x.cols();
    let mut x_min = vec![f64::INFINITY; cols];
    let mut x_max = vec![f64::NEG_INFINITY; cols];
    for r in 0..x.rows() {
        for (c, &v) in x.row(r).iter().enumerate() {
            x_min[c] = x_min[c].min(v);
            x_max[c] = x_max[c].max(v);
        }
    }
    Ok(Scaler { x_min, x_max })
}

/// Map to (x - min)/(max - min). Constant features map to 0; out-of-range
/// values are clamped to [0, 1] so downstream chi-square inputs stay
/// non-negative.
pub fn scale(s: &Scaler, x: &Matrix) -> Result<Matrix> {
    if x.cols() != s.cols() {
        return Err(Error::shape(format!(
            "scaler has {} features, matrix {}",
            s.cols(),
            x.cols()
        )));
    }
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        for (c, v) in row.iter_mut().enumerate() {
            let span = s.x_max[c] - s.x_min[c];
            *v = if span == 0.0 {
                0.0
            } else {
                ((*v - s.x_min[c]) / span).clamp(0.0, 1.0)
            };
        }
    }
    Ok(out)
}
