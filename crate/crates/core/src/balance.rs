//! NearMiss undersampling: equalize class counts by removing majority
//! samples closest to the minority distribution first.

use crate::error::{Error, Result};
use crate::matrix::{sq_dist, Matrix};

/// What the balancing pass did, for the run log.
#[derive(Debug, Clone)]
pub struct BalanceReport {
    pub before_counts: Vec<usize>,
    pub after_counts: Vec<usize>,
    /// Removed row indices into the input matrix, ascending.
    pub removed: Vec<usize>,
}

impl BalanceReport {
    pub fn render(&self) -> String {
        let mut s = String::from("class balancing (NearMiss-1)\n");
        for (c, (&b, &a)) in self.before_counts.iter().zip(&self.after_counts).enumerate() {
            s.push_str(&format!("  class {c}: {b} -> {a}\n"));
        }
        s.push_str(&format!("  removed {} rows\n", self.removed.len()));
        s
    }
}

/// NearMiss version-1: for each majority class, rank samples by mean
/// Euclidean distance to their `k` nearest minority-class samples and remove
/// the closest ones first until every class matches the minority count.
/// Deterministic; ties broken by row index.
pub fn near_miss(x: &Matrix, y: &[usize], k: usize) -> Result<(Matrix, Vec<usize>, BalanceReport)> {
    if x.rows() != y.len() {
        return Err(Error::shape(format!(
            "{} rows vs {} labels",
            x.rows(),
            y.len()
        )));
    }
    let n_classes = y.iter().max().map_or(0, |&m| m + 1);
    let mut counts = vec![0usize; n_classes];
    for &c in y {
        counts[c] += 1;
    }
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::data("balancing needs at least 2 classes present"));
    }
    let target = counts.iter().filter(|&&c| c > 0).min().copied().unwrap();
    let minority = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .min_by_key(|(_, &c)| c)
        .map(|(i, _)| i)
        .unwrap();
    let minority_rows: Vec<usize> = (0..y.len()).filter(|&i| y[i] == minority).collect();

    let mut removed = Vec::new();
    for class in 0..n_classes {
        if counts[class] <= target || class == minority {
            continue;
        }
        let rows: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        // mean distance to the k nearest minority samples
        let mut ranked: Vec<(usize, f64)> = rows
            .iter()
            .map(|&r| {
                let mut dists: Vec<f64> = minority_rows
                    .iter()
                    .map(|&m| sq_dist(x.row(r), x.row(m)).sqrt())
                    .collect();
                dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let kk = k.min(dists.len());
                let mean = dists[..kk].iter().sum::<f64>() / kk as f64;
                (r, mean)
            })
            .collect();
        // closest to the minority distribution removed first; index tie-break
        ranked.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        let excess = counts[class] - target;
        removed.extend(ranked[..excess].iter().map(|&(r, _)| r));
    }
    removed.sort_unstable();

    let keep: Vec<usize> = (0..y.len()).filter(|i| !removed.contains(i)).collect();
    let x_out = x.select_rows(&keep);
    let y_out: Vec<usize> = keep.iter().map(|&i| y[i]).collect();
    let mut after = vec![0usize; n_classes];
    for &c in &y_out {
        after[c] += 1;
    }
    let report = BalanceReport {
        before_counts: counts,
        after_counts: after,
        removed,
    };
    Ok((x_out, y_out, report))
}
