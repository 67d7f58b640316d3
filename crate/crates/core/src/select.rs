//! Four-stage feature selection filter bank:
//! variance -> chi-square -> KDE train/test overlap -> Spearman.
//!
//! Each stage operates only on survivors of the previous one; the resulting
//! mask records which stage dropped every discarded feature and is persisted
//! with the model.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Which filter stage removed a feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropStage {
    Variance,
    Chi2,
    Kde,
    Spearman,
}

impl DropStage {
    pub fn name(self) -> &'static str {
        match self {
            DropStage::Variance => "variance",
            DropStage::Chi2 => "chi2",
            DropStage::Kde => "kde",
            DropStage::Spearman => "spearman",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            DropStage::Variance => 1,
            DropStage::Chi2 => 2,
            DropStage::Kde => 3,
            DropStage::Spearman => 4,
        }
    }

    pub fn from_code(c: u8) -> Option<DropStage> {
        match c {
            1 => Some(DropStage::Variance),
            2 => Some(DropStage::Chi2),
            3 => Some(DropStage::Kde),
            4 => Some(DropStage::Spearman),
            _ => None,
        }
    }
}

/// Persisted per-feature keep/drop decision with drop provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionMask {
    pub keep: Vec<bool>,
    /// For each dropped feature, the stage that dropped it. `None` for kept
    /// features.
    pub provenance: Vec<Option<DropStage>>,
}

impl SelectionMask {
    pub fn kept_count(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    pub fn kept_indices(&self) -> Vec<usize> {
        (0..self.keep.len()).filter(|&i| self.keep[i]).collect()
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        x.select_cols(&self.keep)
    }
}

/// Filter thresholds, all config-visible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectConfig {
    pub variance_threshold: f64,
    pub chi2_top_k: usize,
    pub kde_overlap_threshold: f64,
    pub spearman_threshold: f64,
}

impl Default for SelectConfig {
    fn default() -> Self {
        SelectConfig {
            variance_threshold: 0.02,
            chi2_top_k: 60,
            kde_overlap_threshold: 0.75,
            spearman_threshold: 0.08,
        }
    }
}

/// Population variance of a column.
pub fn population_variance(col: &[f64]) -> f64 {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Keep feature j iff its population variance >= threshold. Boundary scores
/// are kept.
pub fn variance_filter(x: &Matrix, threshold: f64) -> Result<Vec<bool>> {
    if x.rows() == 0 || x.cols() == 0 {
        return Err(Error::data("empty matrix".to_string()));
    }
    Ok((0..x.cols())
        .map(|c| population_variance(&x.column(c)) >= threshold)
        .collect())
}

/// Chi-square score of one non-negative feature against class labels.
/// Observed O_c is the feature total over class-c rows; expected E_c is the
/// class row fraction times the grand feature total.
pub fn chi2_score(col: &[f64], y: &[usize], n_classes: usize) -> Result<f64> {
    if col.iter().any(|&v| v < 0.0) {
        return Err(Error::data("chi-square input must be non-negative".to_string()));
    }
    let n = col.len() as f64;
    let total: f64 = col.iter().sum();
    if total == 0.0 {
        return Ok(0.0);
    }
    let mut observed = vec![0.0; n_classes];
    let mut class_rows = vec![0.0; n_classes];
    for (v, &c) in col.iter().zip(y) {
        observed[c] += v;
        class_rows[c] += 1.0;
    }
    let mut score = 0.0;
    for c in 0..n_classes {
        let expected = class_rows[c] / n * total;
        if expected > 0.0 {
            let d = expected - observed[c];
            score += d * d / expected;
        }
    }
    Ok(score)
}

/// Keep the k features with the largest chi-square scores, ties broken by
/// lower feature index. If k is at least the feature count, everything is
/// kept.
pub fn chi2_filter(x: &Matrix, y: &[usize], k: usize) -> Result<Vec<bool>> {
    if k == 0 {
        return Err(Error::data("chi2 top-k must be at least 1".to_string()));
    }
    let cols = x.cols();
    let n_classes = y.iter().max().map_or(0, |&m| m + 1);
    let mut scored: Vec<(usize, f64)> = (0..cols)
        .map(|c| Ok((c, chi2_score(&x.column(c), y, n_classes)?)))
        .collect::<Result<_>>()?;
    // descending by score, ascending by index on ties
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut keep = vec![false; cols];
    for &(idx, _) in scored.iter().take(k) {
        keep[idx] = true;
    }
    Ok(keep)
}

/// Gaussian kernel density estimate at a query point.
pub fn kde_estimate(samples: &[f64], h: f64, x: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::data("kde needs at least one sample".to_string()));
    }
    if h <= 0.0 {
        return Err(Error::data(format!("non-positive bandwidth {h}")));
    }
    let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt());
    let sum: f64 = samples
        .iter()
        .map(|&xi| {
            let u = (x - xi) / h;
            norm * (-0.5 * u * u).exp()
        })
        .sum();
    Ok(sum / (samples.len() as f64 * h))
}

/// Silverman's rule bandwidth: 0.9 * min(sd, IQR/1.34) * n^(-1/5).
/// Returns `None` for zero-spread data.
pub fn silverman_bandwidth(samples: &[f64]) -> Option<f64> {
    let n = samples.len();
    if n < 2 {
        return None;
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let sd = (samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0))
        .sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| {
        let h = (n - 1) as f64 * p;
        let lo = h.floor() as usize;
        let frac = h - lo as f64;
        if lo + 1 < n {
            sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
        } else {
            sorted[lo]
        }
    };
    let iqr = q(0.75) - q(0.25);
    let mut spread = sd.min(iqr / 1.34);
    if spread <= 0.0 {
        spread = sd; // heavy ties can zero the IQR while the sd is still useful
    }
    if spread <= 0.0 {
        return None;
    }
    Some(0.9 * spread * (n as f64).powf(-0.2))
}

/// Overlap coefficient between train and test densities of one feature:
/// the min-integral of the two Gaussian KDEs on a 512-point grid over the
/// pooled range. Degenerate (zero-spread) features compare point values.
pub fn kde_overlap(train: &[f64], test: &[f64]) -> Result<f64> {
    let h_tr = silverman_bandwidth(train);
    let h_te = silverman_bandwidth(test);
    let (h_tr, h_te) = match (h_tr, h_te) {
        (Some(a), Some(b)) => (a, b),
        (Some(a), None) => (a, a),
        (None, Some(b)) => (b, b),
        (None, None) => {
            // both sides single-valued: overlap 1 iff they share the value
            let same = (train[0] - test[0]).abs() < 1e-12
                && train.iter().all(|&v| (v - train[0]).abs() < 1e-12)
                && test.iter().all(|&v| (v - test[0]).abs() < 1e-12);
            return Ok(if same { 1.0 } else { 0.0 });
        }
    };
    let lo = train
        .iter()
        .chain(test)
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let hi = train
        .iter()
        .chain(test)
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    // pad so the kernels' mass is (almost) fully inside the grid
    let pad = 4.0 * h_tr.max(h_te);
    let (lo, hi) = (lo - pad, hi + pad);
    const GRID: usize = 512;
    let dx = (hi - lo) / (GRID as f64 - 1.0);
    let mut overlap = 0.0;
    for g in 0..GRID {
        let x = lo + g as f64 * dx;
        let f_tr = kde_estimate(train, h_tr, x)?;
        let f_te = kde_estimate(test, h_te, x)?;
        overlap += f_tr.min(f_te) * dx;
    }
    Ok(overlap.clamp(0.0, 1.0))
}

/// Keep features whose train/test density overlap is at least `threshold`.
pub fn kde_overlap_filter(
    x_train: &Matrix,
    x_test: &Matrix,
    threshold: f64,
) -> Result<Vec<bool>> {
    if x_train.cols() != x_test.cols() {
        return Err(Error::shape(format!(
            "train has {} features, test {}",
            x_train.cols(),
            x_test.cols()
        )));
    }
    (0..x_train.cols())
        .map(|c| Ok(kde_overlap(&x_train.column(c), &x_test.column(c))? >= threshold))
        .collect()
}

/// Average ranks (1-based, ties averaged).
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation on mean-centered average ranks. Constant input
/// on either side yields 0.
pub fn spearman(feature: &[f64], labels: &[f64]) -> f64 {
    let n = feature.len() as f64;
    let rx = average_ranks(feature);
    let ry = average_ranks(labels);
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for i in 0..feature.len() {
        let a = rx[i] - mx;
        let b = ry[i] - my;
        num += a * b;
        dx += a * a;
        dy += b * b;
    }
    if dx == 0.0 || dy == 0.0 {
        return 0.0;
    }
    num / (dx * dy).sqrt()
}

/// Keep features whose |Spearman correlation| with ordinal-coded labels is at
/// least `threshold`. Boundary scores are kept.
pub fn spearman_filter(x: &Matrix, y: &[usize], threshold: f64) -> Result<Vec<bool>> {
    let labels: Vec<f64> = y.iter().map(|&c| c as f64).collect();
    Ok((0..x.cols())
        .map(|c| spearman(&x.column(c), &labels).abs() >= threshold)
        .collect())
}

/// Run the four filters in fixed order, each on the survivors of the
/// previous stage, recording drop provenance.
pub fn run_filter_bank(
    x_train: &Matrix,
    y_train: &[usize],
    x_test: &Matrix,
    cfg: &SelectConfig,
) -> Result<SelectionMask> {
    let total = x_train.cols();
    let mut keep = vec![true; total];
    let mut provenance: Vec<Option<DropStage>> = vec![None; total];

    let apply_stage = |keep: &mut Vec<bool>,
                           provenance: &mut Vec<Option<DropStage>>,
                           stage: DropStage,
                           verdicts: Vec<bool>|
     -> Result<()> {
        let active: Vec<usize> = (0..total).filter(|&i| keep[i]).collect();
        debug_assert_eq!(active.len(), verdicts.len());
        for (slot, &feat) in active.iter().enumerate() {
            if !verdicts[slot] {
                keep[feat] = false;
                provenance[feat] = Some(stage);
            }
        }
        if keep.iter().all(|&k| !k) {
            return Err(Error::data(format!(
                "no features survive the {} filter; relax its threshold",
                stage.name()
            )));
        }
        Ok(())
    };

    let sub = |m: &Matrix, keep: &[bool]| m.select_cols(keep);

    let v = variance_filter(&sub(x_train, &keep)?, cfg.variance_threshold)?;
    apply_stage(&mut keep, &mut provenance, DropStage::Variance, v)?;

    let v = chi2_filter(&sub(x_train, &keep)?, y_train, cfg.chi2_top_k)?;
    apply_stage(&mut keep, &mut provenance, DropStage::Chi2, v)?;

    let v = kde_overlap_filter(
        &sub(x_train, &keep)?,
        &sub(x_test, &keep)?,
        cfg.kde_overlap_threshold,
    )?;
    apply_stage(&mut keep, &mut provenance, DropStage::Kde, v)?;

    let v = spearman_filter(&sub(x_train, &keep)?, y_train, cfg.spearman_threshold)?;
    apply_stage(&mut keep, &mut provenance, DropStage::Spearman, v)?;

    Ok(SelectionMask { keep, provenance })
}

/// Human-readable per-feature report: name, kept/dropped and dropping stage.
pub fn selection_report(mask: &SelectionMask, names: &[String]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "feature selection: kept {} of {}\n",
        mask.kept_count(),
        mask.keep.len()
    ));
    for (i, &kept) in mask.keep.iter().enumerate() {
        let name = names.get(i).map_or("?", |s| s.as_str());
        if kept {
            out.push_str(&format!("{name}\tkept\n"));
        } else {
            let stage = mask.provenance[i].map_or("?", |s| s.name());
            out.push_str(&format!("{name}\tdropped\t{stage}\n"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variance_drops_constant_keeps_alternating() {
        // constant column 0, alternating 0/1 column 1 (variance 0.25)
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|i| vec![0.5, (i % 2) as f64])
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        assert_eq!(variance_filter(&x, 0.02).unwrap(), vec![false, true]);
        assert_eq!(variance_filter(&x, 0.0).unwrap(), vec![true, true]);
    }

    #[test]
    fn variance_boundary_is_kept() {
        // alternating 0/1 has variance exactly 0.25
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![(i % 2) as f64]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        assert_eq!(variance_filter(&x, 0.25).unwrap(), vec![true]);
    }

    #[test]
    fn chi2_hand_example() {
        // feature 1 on class-2 rows, 0 elsewhere; 3 classes x 10 rows each
        let mut col = Vec::new();
        let mut y = Vec::new();
        for class in 0..3usize {
            for _ in 0..10 {
                col.push(if class == 2 { 1.0 } else { 0.0 });
                y.push(class);
            }
        }
        let score = chi2_score(&col, &y, 3).unwrap();
        // O = (0,0,10), E = (10/3, 10/3, 10/3) -> chi2 = 20
        assert!((score - 20.0).abs() < 1e-12);
    }

    #[test]
    fn chi2_independent_feature_scores_zero() {
        let col = vec![2.0; 12];
        let y: Vec<usize> = (0..12).map(|i| i % 3).collect();
        assert_eq!(chi2_score(&col, &y, 3).unwrap(), 0.0);
    }

    #[test]
    fn chi2_rejects_negatives_and_k_covers_all() {
        let x = Matrix::from_rows(&[vec![-1.0], vec![1.0]]).unwrap();
        assert!(chi2_filter(&x, &[0, 1], 1).is_err());

        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(chi2_filter(&x, &[0, 1], 5).unwrap(), vec![true, true]);
    }

    #[test]
    fn kde_single_sample_peak() {
        let h = 0.3;
        let v = kde_estimate(&[1.0], h, 1.0).unwrap();
        assert!((v - 1.0 / (h * (2.0 * std::f64::consts::PI).sqrt())).abs() < 1e-12);
    }

    #[test]
    fn kde_integrates_to_one() {
        let samples = [0.1, 0.4, 0.5, 0.9, 1.3];
        let h = 0.2;
        let (lo, hi) = (-3.0, 5.0);
        let n = 4000;
        let dx = (hi - lo) / n as f64;
        let integral: f64 = (0..=n)
            .map(|i| kde_estimate(&samples, h, lo + i as f64 * dx).unwrap() * dx)
            .sum();
        assert!((integral - 1.0).abs() < 1e-3);
    }

    #[test]
    fn kde_symmetric_about_center() {
        let samples = [-1.0, 1.0];
        let h = 0.5;
        for d in [0.2, 0.7, 1.5] {
            let a = kde_estimate(&samples, h, d).unwrap();
            let b = kde_estimate(&samples, h, -d).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn kde_rejects_bad_bandwidth() {
        assert!(kde_estimate(&[1.0], 0.0, 0.0).is_err());
    }

    #[test]
    fn overlap_identical_columns_is_one() {
        let col: Vec<f64> = (0..40).map(|i| (i as f64 * 0.7).sin() * 0.5 + 0.5).collect();
        let ov = kde_overlap(&col, &col).unwrap();
        assert!(ov > 0.999, "overlap {ov}");
    }

    #[test]
    fn overlap_disjoint_supports_near_zero() {
        let train: Vec<f64> = (0..30).map(|i| 0.05 * ((i % 3) as f64) / 3.0).collect();
        let test: Vec<f64> = (0..30).map(|i| 0.9 + 0.05 * ((i % 3) as f64) / 3.0).collect();
        let ov = kde_overlap(&train, &test).unwrap();
        assert!(ov < 0.05, "overlap {ov}");
    }

    #[test]
    fn overlap_bounded() {
        let a: Vec<f64> = (0..25).map(|i| (i as f64 * 1.37).sin()).collect();
        let b: Vec<f64> = (0..25).map(|i| (i as f64 * 2.11).cos()).collect();
        let ov = kde_overlap(&a, &b).unwrap();
        assert!((0.0..=1.0).contains(&ov));
    }

    #[test]
    fn overlap_degenerate_features() {
        assert_eq!(kde_overlap(&[0.5; 10], &[0.5; 8]).unwrap(), 1.0);
        assert_eq!(kde_overlap(&[0.5; 10], &[0.7; 8]).unwrap(), 0.0);
    }

    #[test]
    fn spearman_monotone_and_sign_symmetric() {
        let y: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let labels: Vec<f64> = y.iter().map(|&c| c as f64).collect();
        let feat: Vec<f64> = y.iter().map(|&c| c as f64 * 2.0 + 1.0).collect();
        // strictly increasing with label gives rho = 1 (ties averaged)
        let r = spearman(&feat, &labels);
        assert!((r - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = feat.iter().map(|v| -v).collect();
        assert!((spearman(&neg, &labels) + r).abs() < 1e-12);
    }

    #[test]
    fn spearman_constant_is_zero_and_dropped() {
        let x = Matrix::from_rows(&(0..9).map(|_| vec![3.0]).collect::<Vec<_>>()).unwrap();
        let y: Vec<usize> = (0..9).map(|i| i % 3).collect();
        assert_eq!(spearman_filter(&x, &y, 0.08).unwrap(), vec![false]);
    }

    #[test]
    fn filter_bank_monotone_and_provenance_complete() {
        // 6 informative-ish features + 1 constant + 1 noise
        let mut rows = Vec::new();
        let mut y = Vec::new();
        let mut state = 99u64;
        let mut rnd = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 33) as f64 / (1u64 << 31) as f64
        };
        for i in 0..60 {
            let c = i % 3;
            let base = c as f64 / 3.0;
            let mut row: Vec<f64> = (0..6).map(|j| base + 0.05 * rnd() + j as f64 * 0.001).collect();
            row.push(0.5); // constant
            row.push(rnd()); // noise
            rows.push(row);
            y.push(c);
        }
        let x = Matrix::from_rows(&rows).unwrap();
        let x_test = x.select_rows(&(0..20).collect::<Vec<_>>());
        let mask = run_filter_bank(&x, &y, &x_test, &SelectConfig::default()).unwrap();
        assert!(mask.kept_count() >= 1);
        assert!(!mask.keep[6], "constant feature must be dropped");
        for i in 0..mask.keep.len() {
            assert_eq!(mask.keep[i], mask.provenance[i].is_none());
        }
    }

    #[test]
    fn chi2_stage_caps_survivors() {
        // 195 features, survivors after chi2 must be <= 60
        let mut rows = Vec::new();
        let mut y = Vec::new();
        let mut state = 7u64;
        let mut rnd = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 33) as f64 / (1u64 << 31) as f64
        };
        for i in 0..90 {
            let c = i % 3;
            let row: Vec<f64> = (0..195)
                .map(|j| 0.3 * rnd() + if j % 3 == c { 0.5 } else { 0.0 })
                .collect();
            rows.push(row);
            y.push(c);
        }
        let x = Matrix::from_rows(&rows).unwrap();
        let keep_var = variance_filter(&x, 0.02).unwrap();
        let x_v = x.select_cols(&keep_var).unwrap();
        let keep_chi = chi2_filter(&x_v, &y, 60).unwrap();
        assert!(keep_chi.iter().filter(|&&k| k).count() <= 60);
    }
}
