//! Stacking: 15 tagged base learners (9 SVMs, 3 BPNN snapshots, 3 CNN
//! snapshots) feed per-class score triples into an RBF-SVM meta learner
//! trained on a held-out split via LOOCV grid search.

use crate::dataio::{Emotion, Segment};
use crate::error::{Error, Result};
use crate::features::{FeatureExtractor, FrameParams};
use crate::hash_row;
use crate::matrix::Matrix;
use crate::nn::NnModel;
use crate::preprocess::{fit_scaler, repair_outliers, scale, OutlierModel, Scaler};
use crate::select::SelectionMask;
use crate::svm::{svm_train_multiclass, SvmHyper, SvmModel};
use crate::tuning::{loocv, Grid};

/// Canonical provenance tags, fixing both the bank order and the meta
/// feature layout.
pub const CANONICAL_TAGS: [&str; 15] = [
    "svm-kfold-r1",
    "svm-kfold-r2",
    "svm-kfold-r3",
    "svm-kfold-r4",
    "svm-nested-r1",
    "svm-nested-r2",
    "svm-nested-r3",
    "svm-nested-r4",
    "svm-nested-r5",
    "bpnn-e140",
    "bpnn-e200",
    "bpnn-e300",
    "cnn-e140",
    "cnn-e200",
    "cnn-e300",
];

/// A trained base learner of either family.
#[derive(Debug, Clone)]
pub enum BaseLearner {
    Svm(SvmModel),
    Nn(NnModel),
}

impl BaseLearner {
    pub fn input_dim(&self) -> usize {
        match self {
            BaseLearner::Svm(m) => m.input_dim(),
            BaseLearner::Nn(m) => m.arch.input_width,
        }
    }

    /// Per-class score triple consumed as meta features.
    pub fn scores(&self, x: &[f64]) -> Result<[f64; 3]> {
        match self {
            BaseLearner::Svm(m) => m.scores(x),
            BaseLearner::Nn(m) => m.scores(x),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        match self {
            BaseLearner::Svm(m) => m.predict(x),
            BaseLearner::Nn(m) => m.predict(x),
        }
    }
}

/// One bank slot: learner plus its provenance.
#[derive(Debug, Clone)]
pub struct TaggedLearner {
    pub tag: String,
    pub learner: BaseLearner,
    /// FNV hashes of the learner's training rows, for purity audits.
    pub train_hashes: Vec<u64>,
}

/// The ordered 15-member base bank.
#[derive(Debug, Clone)]
pub struct BaseBank {
    members: Vec<TaggedLearner>,
}

impl BaseBank {
    /// Validate count, canonical tag order, and a shared input dimension.
    pub fn new(members: Vec<TaggedLearner>) -> Result<BaseBank> {
        for (i, expected) in CANONICAL_TAGS.iter().enumerate() {
            match members.get(i) {
                Some(m) if m.tag == *expected => {}
                Some(m) => {
                    return Err(Error::data(format!(
                        "bank slot {i}: expected tag {expected}, found {}",
                        m.tag
                    )))
                }
                None => {
                    return Err(Error::data(format!(
                        "bank slot {i} missing: expected tag {expected}"
                    )))
                }
            }
        }
        if members.len() != CANONICAL_TAGS.len() {
            return Err(Error::data(format!(
                "bank has {} members, expected {}",
                members.len(),
                CANONICAL_TAGS.len()
            )));
        }
        let dim = members[0].learner.input_dim();
        for m in &members {
            if m.learner.input_dim() != dim {
                return Err(Error::shape(format!(
                    "learner {} input dim {} differs from {}",
                    m.tag,
                    m.learner.input_dim(),
                    dim
                )));
            }
        }
        Ok(BaseBank { members })
    }

    pub fn members(&self) -> &[TaggedLearner] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.members[0].learner.input_dim()
    }

    /// Meta feature width: 3 scores per member.
    pub fn meta_width(&self) -> usize {
        3 * self.members.len()
    }

    /// One meta row: the concatenated score triples in canonical order.
    pub fn meta_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut row = Vec::with_capacity(self.meta_width());
        for m in &self.members {
            let s = m
                .learner
                .scores(x)
                .map_err(|e| Error::shape(format!("learner {}: {e}", m.tag)))?;
            row.extend_from_slice(&s);
        }
        Ok(row)
    }

    /// Plain majority vote over base predictions — a baseline comparator
    /// only, never the prediction path.
    pub fn majority_vote(&self, x: &[f64]) -> Result<usize> {
        let mut votes = [0usize; 3];
        for m in &self.members {
            votes[m.learner.predict(x)?] += 1;
        }
        Ok((0..3).max_by_key(|&c| votes[c]).unwrap())
    }
}

/// Meta-training rows: base-learner outputs on the shared holdout.
#[derive(Debug, Clone)]
pub struct MetaDataset {
    pub x: Matrix,
    pub y: Vec<usize>,
    /// FNV hashes of the originating holdout feature rows.
    pub row_hashes: Vec<u64>,
}

/// Score the bank on every holdout row, preserving row order.
pub fn build_meta_dataset(bank: &BaseBank, holdout_x: &Matrix, holdout_y: &[usize]) -> Result<MetaDataset> {
    if holdout_x.rows() != holdout_y.len() {
        return Err(Error::shape(format!(
            "{} holdout rows vs {} labels",
            holdout_x.rows(),
            holdout_y.len()
        )));
    }
    let mut rows = Vec::with_capacity(holdout_x.rows());
    let mut hashes = Vec::with_capacity(holdout_x.rows());
    for r in 0..holdout_x.rows() {
        rows.push(bank.meta_row(holdout_x.row(r))?);
        hashes.push(hash_row(holdout_x.row(r)));
    }
    Ok(MetaDataset {
        x: Matrix::from_rows(&rows)?,
        y: holdout_y.to_vec(),
        row_hashes: hashes,
    })
}

/// The meta learner's search grid, spanning [0.1, 3] on both axes.
pub fn meta_grid() -> Grid {
    let axis = vec![0.1, 0.5, 1.0, 2.0, 3.0];
    Grid::new(axis.clone(), axis).unwrap()
}

/// Outcome of meta training, with the selected point and its LOOCV score.
#[derive(Debug, Clone)]
pub struct MetaTraining {
    pub model: SvmModel,
    /// Min-max scaler fitted on the meta rows; the SVM requires scaled
    /// inputs and raw network activations drift in magnitude off-holdout.
    pub scaler: Scaler,
    pub best: (f64, f64),
    pub loocv_accuracy: f64,
}

/// Grid-search the meta SVM by LOOCV over the min-max scaled meta rows,
/// then train the winner on all rows. Ties prefer smaller C then smaller
/// gamma.
pub fn train_meta(md: &MetaDataset, grid: &Grid) -> Result<MetaTraining> {
    for class in 0..3 {
        if md.y.iter().filter(|&&c| c == class).count() < 2 {
            return Err(Error::data(format!(
                "meta training needs >= 2 rows of class {class}"
            )));
        }
    }
    let scaler = fit_scaler(&md.x)?;
    let scaled = scale(&scaler, &md.x)?;
    let mut best: Option<((f64, f64), f64)> = None;
    for (c, g) in grid.combinations() {
        let hyper = SvmHyper::new(c, g)?;
        let mut train = |x: &Matrix, y: &[usize]| svm_train_multiclass(x, y, hyper, 1e-3);
        let predict = |m: &SvmModel, row: &[f64]| m.predict(row);
        let (acc, _) = loocv(&scaled, &md.y, &mut train, &predict)?;
        if best.as_ref().map_or(true, |&(_, b)| acc > b) {
            best = Some(((c, g), acc));
        }
    }
    let ((c, g), acc) = best.unwrap();
    let model = svm_train_multiclass(&scaled, &md.y, SvmHyper::new(c, g)?, 1e-3)?;
    Ok(MetaTraining {
        model,
        scaler,
        best: (c, g),
        loocv_accuracy: acc,
    })
}

/// Frozen preprocessing state shipped with the model.
#[derive(Debug, Clone)]
pub struct PreprocState {
    pub frame_params: FrameParams,
    pub sample_rate: u32,
    pub outlier: OutlierModel,
    pub scaler: Scaler,
    pub mask: SelectionMask,
}

/// The deployable stacking model.
#[derive(Debug, Clone)]
pub struct EnsembleModel {
    pub bank: BaseBank,
    pub meta: SvmModel,
    pub meta_scaler: Scaler,
    pub preproc: PreprocState,
    pub meta_best: (f64, f64),
}

/// Validate widths and holdout purity, then freeze the model.
pub fn assemble(
    bank: BaseBank,
    meta: MetaTraining,
    preproc: PreprocState,
    meta_row_hashes: &[u64],
) -> Result<EnsembleModel> {
    if bank.input_dim() != preproc.mask.kept_count() {
        return Err(Error::shape(format!(
            "bank input dim {} vs selection mask keeping {}",
            bank.input_dim(),
            preproc.mask.kept_count()
        )));
    }
    if meta.model.input_dim() != bank.meta_width() {
        return Err(Error::shape(format!(
            "meta learner input dim {} vs bank meta width {}",
            meta.model.input_dim(),
            bank.meta_width()
        )));
    }
    for m in bank.members() {
        if m.train_hashes.iter().any(|h| meta_row_hashes.contains(h)) {
            return Err(Error::data(format!(
                "holdout purity violation: learner {} trained on a meta row",
                m.tag
            )));
        }
    }
    Ok(EnsembleModel {
        bank,
        meta: meta.model,
        meta_scaler: meta.scaler,
        preproc,
        meta_best: meta.best,
    })
}

impl EnsembleModel {
    /// Apply the frozen repair/scale/mask chain to raw segment features.
    pub fn preprocess_features(&self, raw: &[f64]) -> Result<Vec<f64>> {
        let m = Matrix::from_rows(&[raw.to_vec()])?;
        let repaired = repair_outliers(&self.preproc.outlier, &m)
            .map_err(|e| Error::data(format!("outlier repair: {e}")))?;
        let scaled = scale(&self.preproc.scaler, &repaired)
            .map_err(|e| Error::data(format!("scaling: {e}")))?;
        let masked = self
            .preproc
            .mask
            .apply(&scaled)
            .map_err(|e| Error::data(format!("feature mask: {e}")))?;
        Ok(masked.row(0).to_vec())
    }

    /// Classify preprocessed (masked) features.
    pub fn predict_features(&self, masked: &[f64]) -> Result<usize> {
        let row = self.bank.meta_row(masked)?;
        let m = Matrix::from_rows(&[row])?;
        let scaled = scale(&self.meta_scaler, &m)
            .map_err(|e| Error::data(format!("meta scaling: {e}")))?;
        self.meta.predict(scaled.row(0))
    }

    /// End-to-end: segment -> features -> preprocess -> stacked prediction.
    pub fn predict(&self, segment: &Segment) -> Result<Emotion> {
        let extractor = FeatureExtractor::new(self.preproc.frame_params, self.preproc.sample_rate)
            .map_err(|e| Error::data(format!("feature extraction: {e}")))?;
        let raw = extractor
            .extract(&segment.samples)
            .map_err(|e| Error::data(format!("feature extraction: {e}")))?;
        let masked = self.preprocess_features(&raw)?;
        let code = self.predict_features(&masked)?;
        Emotion::from_code(code)
    }
}
