//! Hyperparameter search: stratified K-fold splitting, grid search with
//! iterative range refinement, nested cross-validation, and LOOCV.
//!
//! Search drivers are generic over the trained model type so fit counting
//! can be verified with stub learners.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::eval::{accuracy, confusion_matrix, precision_recall_f1};
use crate::matrix::Matrix;
use crate::svm::SvmHyper;

/// Candidate C and gamma axes, each strictly ascending and positive.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub c_values: Vec<f64>,
    pub gamma_values: Vec<f64>,
}

impl Grid {
    pub fn new(c_values: Vec<f64>, gamma_values: Vec<f64>) -> Result<Grid> {
        for (name, axis) in [("C", &c_values), ("gamma", &gamma_values)] {
            if axis.is_empty() {
                return Err(Error::config(format!("empty {name} axis")));
            }
            if axis.iter().any(|&v| v <= 0.0) {
                return Err(Error::config(format!("{name} axis must be positive")));
            }
            if axis.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::config(format!("{name} axis must be strictly ascending")));
            }
        }
        Ok(Grid { c_values, gamma_values })
    }

    /// All (C, gamma) pairs, C-major then gamma; this order realizes the
    /// smaller-C-then-smaller-gamma tie rule via first-argmax selection.
    pub fn combinations(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.len());
        for &c in &self.c_values {
            for &g in &self.gamma_values {
                out.push((c, g));
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.c_values.len() * self.gamma_values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// The published round-1 search scope: eight candidates per axis in [0.1, 10],
/// denser toward the low end.
pub fn round1_grid() -> Grid {
    let axis = vec![0.1, 0.5, 1.0, 2.0, 3.0, 5.0, 7.0, 10.0];
    Grid::new(axis.clone(), axis).unwrap()
}

/// Split 0..n into k disjoint folds. Unlabeled: shuffled chunks with the
/// remainder spread over the leading folds. Labeled: stratified, preserving
/// per-class proportions per fold.
pub fn kfold_split(n: usize, k: usize, seed: u64, labels: Option<&[usize]>) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::config(format!("k = {k} must be >= 2")));
    }
    if k > n {
        return Err(Error::config(format!("k = {k} exceeds sample count {n}")));
    }
    if let Some(l) = labels {
        if l.len() != n {
            return Err(Error::shape(format!("{n} samples vs {} labels", l.len())));
        }
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    match labels {
        None => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let base = n / k;
            let extra = n % k;
            let mut cursor = 0;
            for (f, fold) in folds.iter_mut().enumerate() {
                let size = base + usize::from(f < extra);
                fold.extend_from_slice(&idx[cursor..cursor + size]);
                cursor += size;
            }
        }
        Some(labels) => {
            let n_classes = labels.iter().max().map_or(0, |&m| m + 1);
            // deal each class round-robin, carrying the fold pointer across
            // classes so total sizes stay balanced
            let mut next_fold = 0;
            for class in 0..n_classes {
                let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
                members.shuffle(&mut rng);
                for m in members {
                    folds[next_fold].push(m);
                    next_fold = (next_fold + 1) % k;
                }
            }
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

/// One grid-search round: every combination's CV accuracy plus the winner.
#[derive(Debug, Clone)]
pub struct RoundResult {
    pub grid: Grid,
    /// Mean CV accuracy per combination, in `Grid::combinations` order.
    pub scores: Vec<f64>,
    pub best: (f64, f64),
    pub best_accuracy: f64,
    /// Pooled out-of-fold (P, R, F1) per class for the winning combination.
    pub per_class: [(f64, f64, f64); 3],
    /// Models trained during this round.
    pub fits: usize,
}

/// All rounds of one search, in order.
#[derive(Debug, Clone, Default)]
pub struct GridLedger {
    pub rounds: Vec<RoundResult>,
}

impl GridLedger {
    pub fn best(&self) -> Option<(f64, f64)> {
        self.rounds.last().map(|r| r.best)
    }

    /// Text report mirroring the round/scope/result table layout.
    pub fn render(&self, title: &str) -> String {
        let fmt_axis = |axis: &[f64]| {
            let items: Vec<String> = axis.iter().map(|v| format!("{v}")).collect();
            format!("[{}]", items.join(", "))
        };
        let mut s = format!("{title}\n");
        for (i, r) in self.rounds.iter().enumerate() {
            s.push_str(&format!(
                "round {}: C scope {}, gamma scope {}\n",
                i + 1,
                fmt_axis(&r.grid.c_values),
                fmt_axis(&r.grid.gamma_values)
            ));
            s.push_str(&format!(
                "  best C = {}, gamma = {} (cv accuracy {:.2}, {} fits)\n",
                r.best.0, r.best.1, r.best_accuracy, r.fits
            ));
            for (name, (p, rc, f1)) in ["G", "N", "B"].iter().zip([
                r.per_class[2],
                r.per_class[1],
                r.per_class[0],
            ]) {
                s.push_str(&format!("  {name}  P {p:.2}  R {rc:.2}  F1 {f1:.2}\n"));
            }
        }
        s
    }
}

/// Exhaustive CV evaluation of every grid combination. `train` is called
/// exactly `grid.len() * folds.len()` times.
pub fn grid_search<M>(
    grid: &Grid,
    x: &Matrix,
    y: &[usize],
    folds: &[Vec<usize>],
    train: &mut dyn FnMut(&Matrix, &[usize], SvmHyper) -> Result<M>,
    predict: &dyn Fn(&M, &[f64]) -> Result<usize>,
) -> Result<RoundResult> {
    if folds.len() < 2 {
        return Err(Error::config("grid search needs >= 2 folds".to_string()));
    }
    let combos = grid.combinations();
    let mut scores = Vec::with_capacity(combos.len());
    let mut pooled: Vec<(Vec<usize>, Vec<usize>)> = Vec::with_capacity(combos.len());
    let mut fits = 0;
    for &(c, g) in &combos {
        let hyper = SvmHyper::new(c, g)?;
        let mut y_true = Vec::new();
        let mut y_pred = Vec::new();
        for (f, fold) in folds.iter().enumerate() {
            let train_idx: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|&(g2, _)| g2 != f)
                .flat_map(|(_, v)| v.iter().copied())
                .collect();
            let tx = x.select_rows(&train_idx);
            let ty: Vec<usize> = train_idx.iter().map(|&i| y[i]).collect();
            let model = train(&tx, &ty, hyper).map_err(|e| {
                Error::training("grid-search", format!("C={c}, gamma={g}: {e}"))
            })?;
            fits += 1;
            for &i in fold {
                y_true.push(y[i]);
                y_pred.push(predict(&model, x.row(i))?);
            }
        }
        let cm = confusion_matrix(&y_true, &y_pred)?;
        scores.push(accuracy(&cm)?);
        pooled.push((y_true, y_pred));
    }
    // first strict maximum = smallest C then smallest gamma on ties
    let mut best_i = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best_i] {
            best_i = i;
        }
    }
    let (bt, bp) = &pooled[best_i];
    let cm = confusion_matrix(bt, bp)?;
    Ok(RoundResult {
        grid: grid.clone(),
        scores: scores.clone(),
        best: combos[best_i],
        best_accuracy: scores[best_i],
        per_class: [
            precision_recall_f1(&cm, 0),
            precision_recall_f1(&cm, 1),
            precision_recall_f1(&cm, 2),
        ],
        fits,
    })
}

/// How each refinement round tightens the search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShrinkSpec {
    /// Half-span of the new axis as a fraction of the incumbent value.
    pub span_fraction: f64,
    /// Points per axis, odd so the incumbent sits at the center.
    pub points: usize,
    /// Stop refining once both absolute half-spans fall below this.
    pub min_span: f64,
}

impl Default for ShrinkSpec {
    fn default() -> Self {
        ShrinkSpec {
            span_fraction: 0.25,
            points: 3,
            min_span: 1e-3,
        }
    }
}

/// New grid bracketing the incumbent best with tighter spacing, or None
/// when both axes' spans have shrunk below the epsilon (search done).
pub fn refine_grid(best: (f64, f64), spec: &ShrinkSpec) -> Result<Option<Grid>> {
    if spec.points < 2 || spec.points % 2 == 0 {
        return Err(Error::config("refinement points must be odd and >= 3".to_string()));
    }
    if !(spec.span_fraction > 0.0 && spec.span_fraction < 1.0) {
        return Err(Error::config("span fraction outside (0,1)".to_string()));
    }
    let (c, g) = best;
    if c * spec.span_fraction < spec.min_span && g * spec.span_fraction < spec.min_span {
        return Ok(None);
    }
    let axis = |center: f64| -> Vec<f64> {
        let half = spec.points / 2;
        (0..spec.points)
            .map(|i| {
                let offset = i as isize - half as isize;
                center * (1.0 + spec.span_fraction * offset as f64 / half as f64)
            })
            .filter(|&v| v > 0.0)
            .collect()
    };
    Ok(Some(Grid::new(axis(c), axis(g))?))
}

/// Multi-round K-fold grid search: the published scope for round 1, then
/// refinement around each round's winner.
pub fn iterative_grid_search<M>(
    x: &Matrix,
    y: &[usize],
    k: usize,
    rounds: usize,
    seed: u64,
    train: &mut dyn FnMut(&Matrix, &[usize], SvmHyper) -> Result<M>,
    predict: &dyn Fn(&M, &[f64]) -> Result<usize>,
) -> Result<GridLedger> {
    let folds = kfold_split(x.rows(), k, seed, Some(y))?;
    let mut ledger = GridLedger::default();
    let mut grid = round1_grid();
    let mut spec = ShrinkSpec::default();
    for _ in 0..rounds {
        let round = grid_search(&grid, x, y, &folds, train, predict)?;
        let best = round.best;
        ledger.rounds.push(round);
        match refine_grid(best, &spec)? {
            Some(g) => grid = g,
            None => break,
        }
        spec.span_fraction /= 2.0;
    }
    Ok(ledger)
}

/// Nested cross-validation: inner grid search per outer fold, outer scoring
/// of the inner winner. Exactly k_outer * k_inner * grid.len() + k_outer
/// fits.
pub struct NestedResult {
    /// Winning (C, gamma) per outer fold, in fold order.
    pub per_fold_best: Vec<(f64, f64)>,
    /// Pooled outer-fold accuracy.
    pub accuracy: f64,
    pub fits: usize,
}

pub fn nested_cv<M>(
    x: &Matrix,
    y: &[usize],
    grid: &Grid,
    k_outer: usize,
    k_inner: usize,
    seed: u64,
    train: &mut dyn FnMut(&Matrix, &[usize], SvmHyper) -> Result<M>,
    predict: &dyn Fn(&M, &[f64]) -> Result<usize>,
) -> Result<NestedResult> {
    if k_outer * k_inner > x.rows() {
        return Err(Error::config(format!(
            "nested cv k_outer*k_inner = {} exceeds sample count {}",
            k_outer * k_inner,
            x.rows()
        )));
    }
    let outer = kfold_split(x.rows(), k_outer, seed, Some(y))?;
    let mut per_fold_best = Vec::with_capacity(k_outer);
    let mut fits = 0;
    let mut y_true = Vec::new();
    let mut y_pred = Vec::new();
    for (f, fold) in outer.iter().enumerate() {
        let train_idx: Vec<usize> = outer
            .iter()
            .enumerate()
            .filter(|&(g2, _)| g2 != f)
            .flat_map(|(_, v)| v.iter().copied())
            .collect();
        let tx = x.select_rows(&train_idx);
        let ty: Vec<usize> = train_idx.iter().map(|&i| y[i]).collect();
        let inner_folds = kfold_split(tx.rows(), k_inner, seed ^ (f as u64 + 1), Some(&ty))?;
        let inner = grid_search(grid, &tx, &ty, &inner_folds, train, predict)?;
        fits += inner.fits;
        let hyper = SvmHyper::new(inner.best.0, inner.best.1)?;
        let model = train(&tx, &ty, hyper)?;
        fits += 1;
        for &i in fold {
            y_true.push(y[i]);
            y_pred.push(predict(&model, x.row(i))?);
        }
        per_fold_best.push(inner.best);
    }
    let acc = accuracy(&confusion_matrix(&y_true, &y_pred)?)?;
    Ok(NestedResult {
        per_fold_best,
        accuracy: acc,
        fits,
    })
}

/// Leave-one-out CV: exactly n fits, each scored on its held-out sample.
pub fn loocv<M>(
    x: &Matrix,
    y: &[usize],
    train: &mut dyn FnMut(&Matrix, &[usize]) -> Result<M>,
    predict: &dyn Fn(&M, &[f64]) -> Result<usize>,
) -> Result<(f64, usize)> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::data(format!("loocv needs >= 2 samples, got {n}")));
    }
    let mut hits = 0;
    let mut fits = 0;
    for held in 0..n {
        let train_idx: Vec<usize> = (0..n).filter(|&i| i != held).collect();
        let tx = x.select_rows(&train_idx);
        let ty: Vec<usize> = train_idx.iter().map(|&i| y[i]).collect();
        let model = train(&tx, &ty)?;
        fits += 1;
        if predict(&model, x.row(held))? == y[held] {
            hits += 1;
        }
    }
    Ok((hits as f64 / n as f64, fits))
}
