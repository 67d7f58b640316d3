//! End-to-end orchestration: corpus synthesis, feature extraction, the full
//! training pipeline (preprocess, select, balance, base learners, meta
//! learner), and evaluation/prediction against a saved bundle.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::balance::{near_miss, BalanceReport};
use crate::bundle;
use crate::config::RunConfig;
use crate::dataio::{
    load_audio, load_dataset, mix, segment, write_audio, write_manifest, Dataset, Emotion,
};
use crate::ensemble::{
    assemble, build_meta_dataset, meta_grid, train_meta, BaseBank, BaseLearner, EnsembleModel,
    PreprocState, TaggedLearner,
};
use crate::error::{Error, Result};
use crate::eval::EvaluationReport;
use crate::features::{feature_names, FeatureExtractor};
use crate::hash_row;
use crate::matrix::Matrix;
use crate::nn::{bpnn_arch, cnn_arch, nn_train, LearningCurve};
use crate::preprocess::{fit_outlier_bounds, fit_scaler, repair_outliers, scale};
use crate::select::{run_filter_bank, selection_report};
use crate::stage_seed;
use crate::svm::{svm_train_multiclass, SvmHyper, SvmModel};
use crate::tuning::{
    iterative_grid_search, nested_cv, refine_grid, round1_grid, GridLedger, ShrinkSpec,
};

/// SMO stopping gap / KKT slack used throughout the pipeline.
const SVM_TOL: f64 = 1e-3;

/// Everything a training run produces besides the bundle file itself.
pub struct TrainOutput {
    pub model: EnsembleModel,
    /// Evaluation on the untouched test split.
    pub report: EvaluationReport,
    pub kfold_ledger: GridLedger,
    pub nested_bests: Vec<(f64, f64)>,
    pub nested_accuracies: Vec<f64>,
    pub balance: BalanceReport,
    pub curves: Vec<(String, LearningCurve)>,
    /// Per base learner, accuracy on the test split (canonical order).
    pub base_test_accuracy: Vec<(String, f64)>,
    pub ensemble_test_accuracy: f64,
    pub meta_loocv_accuracy: f64,
    /// FNV hashes of the raw test feature rows, for purity audits.
    pub test_row_hashes: Vec<u64>,
}

/// Round-half-up count split of 0..n: (rest, taken).
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::config(format!("split fraction {fraction} outside (0,1)")));
    }
    let taken_n = (fraction * n as f64 + 0.5).floor() as usize;
    if taken_n == 0 || taken_n >= n {
        return Err(Error::data(format!(
            "split of {n} rows at fraction {fraction} leaves an empty side"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let (taken, rest) = idx.split_at(taken_n);
    let mut taken = taken.to_vec();
    let mut rest = rest.to_vec();
    taken.sort_unstable();
    rest.sort_unstable();
    Ok((rest, taken))
}

/// Stratified split: per class, round-half-up with a floor of 2 taken rows
/// (the meta learner needs at least 2 per class). Returns (rest, taken).
pub fn stratified_split(y: &[usize], fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::config(format!("split fraction {fraction} outside (0,1)")));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let n_classes = y.iter().max().map_or(0, |&m| m + 1);
    let mut taken = Vec::new();
    let mut rest = Vec::new();
    for class in 0..n_classes {
        let mut members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        let k = ((fraction * members.len() as f64 + 0.5).floor() as usize).max(2);
        if k >= members.len() {
            return Err(Error::data(format!(
                "class {class} has only {} rows; cannot hold out {k}",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        taken.extend_from_slice(&members[..k]);
        rest.extend_from_slice(&members[k..]);
    }
    taken.sort_unstable();
    rest.sort_unstable();
    Ok((rest, taken))
}

/// The most frequent parameter pair; ties prefer smaller C then gamma.
fn modal_params(pairs: &[(f64, f64)]) -> (f64, f64) {
    let mut counts: BTreeMap<(u64, u64), (usize, (f64, f64))> = BTreeMap::new();
    for &(c, g) in pairs {
        let key = (c.to_bits(), g.to_bits());
        counts.entry(key).or_insert((0, (c, g))).0 += 1;
    }
    let mut best: Option<(usize, (f64, f64))> = None;
    for &(count, (c, g)) in counts.values() {
        let better = match best {
            None => true,
            Some((bc, (bcv, bgv))) => {
                count > bc
                    || (count == bc && (c < bcv || (c == bcv && g < bgv)))
            }
        };
        if better {
            best = Some((count, (c, g)));
        }
    }
    best.unwrap().1
}

/// Extract the 195-wide feature matrix for every segment of a dataset.
pub fn extract_features(ds: &Dataset, cfg: &RunConfig) -> Result<(Matrix, Vec<usize>)> {
    let extractor = FeatureExtractor::new(cfg.frame_params(), cfg.sample_rate)?;
    let mut rows = Vec::with_capacity(ds.len());
    for seg in &ds.segments {
        rows.push(extractor.extract(&seg.samples).map_err(|e| {
            Error::data(format!("feature extraction for '{}': {e}", seg.source_id))
        })?);
    }
    let y = ds.labels()?;
    Ok((Matrix::from_rows(&rows)?, y))
}

/// Full training pipeline over raw (unscaled) 195-wide feature rows.
pub fn train_from_features(x_raw: &Matrix, y: &[usize], cfg: &RunConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    if x_raw.rows() != y.len() {
        return Err(Error::shape(format!(
            "{} feature rows vs {} labels",
            x_raw.rows(),
            y.len()
        )));
    }
    let seed = cfg.seed;

    // held-out test split, untouched until final evaluation
    let (train_idx, test_idx) = split_indices(x_raw.rows(), cfg.test_fraction, stage_seed(seed, "partition"))?;
    let y_train: Vec<usize> = train_idx.iter().map(|&i| y[i]).collect();
    let y_test: Vec<usize> = test_idx.iter().map(|&i| y[i]).collect();
    for class in 0..3 {
        if !y_train.contains(&class) || !y_test.contains(&class) {
            return Err(Error::data(format!(
                "class {class} missing from the train or test split; need more data"
            )));
        }
    }
    let x_train_raw = x_raw.select_rows(&train_idx);
    let x_test_raw = x_raw.select_rows(&test_idx);
    let test_row_hashes: Vec<u64> = (0..x_test_raw.rows())
        .map(|r| hash_row(x_test_raw.row(r)))
        .collect();

    // preprocessing fitted on training rows only
    let outlier = fit_outlier_bounds(&x_train_raw)
        .map_err(|e| Error::training("preprocess", e.to_string()))?;
    let x_train_rep = repair_outliers(&outlier, &x_train_raw)?;
    let scaler = fit_scaler(&x_train_rep)?;
    let x_train = scale(&scaler, &x_train_rep)?;
    let x_test = scale(&scaler, &repair_outliers(&outlier, &x_test_raw)?)?;

    // four-stage filter bank
    let mask = run_filter_bank(&x_train, &y_train, &x_test, &cfg.select_config())
        .map_err(|e| Error::training("select", e.to_string()))?;
    let xt = mask.apply(&x_train)?;
    let xte = mask.apply(&x_test)?;

    // class balancing on the training side
    let (bal_x, bal_y, balance) = near_miss(&xt, &y_train, cfg.near_miss_k)
        .map_err(|e| Error::training("balance", e.to_string()))?;

    // shared stratified holdout for meta training
    let (base_idx, hold_idx) =
        stratified_split(&bal_y, cfg.holdout_fraction, stage_seed(seed, "holdout"))?;
    let base_x = bal_x.select_rows(&base_idx);
    let base_y: Vec<usize> = base_idx.iter().map(|&i| bal_y[i]).collect();
    let hold_x = bal_x.select_rows(&hold_idx);
    let hold_y: Vec<usize> = hold_idx.iter().map(|&i| bal_y[i]).collect();
    let base_hashes: Vec<u64> = (0..base_x.rows()).map(|r| hash_row(base_x.row(r))).collect();

    let mut train_fn =
        |x: &Matrix, ly: &[usize], h: SvmHyper| svm_train_multiclass(x, ly, h, SVM_TOL);
    let predict_fn = |m: &SvmModel, row: &[f64]| m.predict(row);

    // K-fold iterative grid search: one SVM per round
    let kfold_ledger = iterative_grid_search(
        &base_x,
        &base_y,
        cfg.tuning.cv_folds,
        cfg.tuning.kfold_rounds,
        stage_seed(seed, "kfold-search"),
        &mut train_fn,
        &predict_fn,
    )
    .map_err(|e| Error::training("kfold-search", e.to_string()))?;
    let mut members = Vec::with_capacity(15);
    for (i, round) in kfold_ledger.rounds.iter().enumerate() {
        let hyper = SvmHyper::new(round.best.0, round.best.1)?;
        let model = svm_train_multiclass(&base_x, &base_y, hyper, SVM_TOL)
            .map_err(|e| Error::training("kfold-search", e.to_string()))?;
        members.push(TaggedLearner {
            tag: format!("svm-kfold-r{}", i + 1),
            learner: BaseLearner::Svm(model),
            train_hashes: base_hashes.clone(),
        });
    }

    // nested CV rounds: one SVM per round, refining around the modal winner
    let mut nested_bests = Vec::new();
    let mut nested_accuracies = Vec::new();
    let mut grid = round1_grid();
    let mut shrink = ShrinkSpec::default();
    for r in 0..cfg.tuning.nested_rounds {
        let res = nested_cv(
            &base_x,
            &base_y,
            &grid,
            cfg.tuning.nested_outer,
            cfg.tuning.nested_inner,
            stage_seed(seed, &format!("nested-r{}", r + 1)),
            &mut train_fn,
            &predict_fn,
        )
        .map_err(|e| Error::training("nested-search", e.to_string()))?;
        let best = modal_params(&res.per_fold_best);
        let model = svm_train_multiclass(&base_x, &base_y, SvmHyper::new(best.0, best.1)?, SVM_TOL)
            .map_err(|e| Error::training("nested-search", e.to_string()))?;
        members.push(TaggedLearner {
            tag: format!("svm-nested-r{}", r + 1),
            learner: BaseLearner::Svm(model),
            train_hashes: base_hashes.clone(),
        });
        nested_bests.push(best);
        nested_accuracies.push(res.accuracy);
        if let Some(g) = refine_grid(best, &shrink)? {
            grid = g;
        }
        shrink.span_fraction /= 2.0;
    }

    // neural networks: snapshots of one seeded run each
    let width = mask.kept_count();
    let mut curves = Vec::new();
    for (family, arch) in [("bpnn", bpnn_arch(width)?), ("cnn", cnn_arch(width)?)] {
        let mut nn_cfg = cfg.train_config();
        nn_cfg.seed = stage_seed(seed, family);
        let snapshots = nn_train(arch, &base_x, &base_y, &nn_cfg, &hold_x, &hold_y)
            .map_err(|e| Error::training(family, e.to_string()))?;
        for (model, curve) in snapshots {
            let tag = format!("{family}-e{}", model.epochs_trained);
            curves.push((tag.clone(), curve));
            members.push(TaggedLearner {
                tag,
                learner: BaseLearner::Nn(model),
                train_hashes: base_hashes.clone(),
            });
        }
    }

    let bank = BaseBank::new(members).map_err(|e| Error::training("ensemble", e.to_string()))?;

    // meta learner on the shared holdout
    let md = build_meta_dataset(&bank, &hold_x, &hold_y)?;
    let mt = train_meta(&md, &meta_grid()).map_err(|e| Error::training("meta", e.to_string()))?;
    let meta_loocv_accuracy = mt.loocv_accuracy;

    let preproc = PreprocState {
        frame_params: cfg.frame_params(),
        sample_rate: cfg.sample_rate,
        outlier,
        scaler,
        mask: mask.clone(),
    };
    let model = assemble(bank, mt, preproc, &md.row_hashes)
        .map_err(|e| Error::training("ensemble", e.to_string()))?;

    // final evaluation on the untouched test split
    let mut y_pred = Vec::with_capacity(xte.rows());
    for r in 0..xte.rows() {
        y_pred.push(model.predict_features(xte.row(r))?);
    }
    let report = EvaluationReport::from_labels(&y_test, &y_pred, &format!("ensemble(seed={seed})"))?;
    let ensemble_test_accuracy = report.accuracy;

    let mut base_test_accuracy = Vec::with_capacity(model.bank.len());
    for m in model.bank.members() {
        let mut hits = 0;
        for r in 0..xte.rows() {
            if m.learner.predict(xte.row(r))? == y_test[r] {
                hits += 1;
            }
        }
        base_test_accuracy.push((m.tag.clone(), hits as f64 / xte.rows() as f64));
    }

    Ok(TrainOutput {
        model,
        report,
        kfold_ledger,
        nested_bests,
        nested_accuracies,
        balance,
        curves,
        base_test_accuracy,
        ensemble_test_accuracy,
        meta_loocv_accuracy,
        test_row_hashes,
    })
}

/// Train from a manifest and write the bundle plus all text reports under
/// `out_dir`. Returns the output and the bundle path.
pub fn run_train(cfg: &RunConfig, manifest: &Path, out_dir: &Path) -> Result<(TrainOutput, PathBuf)> {
    let ds = load_dataset(manifest, cfg.sample_rate, cfg.window_seconds)?;
    let (x, y) = extract_features(&ds, cfg)?;
    let out = train_from_features(&x, &y, cfg)?;
    fs::create_dir_all(out_dir)?;
    let bundle_path = out_dir.join("model.afe");
    bundle::save(&out.model, &bundle_path)?;
    fs::write(out_dir.join("evaluation.txt"), out.report.render())?;
    fs::write(out_dir.join("evaluation_machine.txt"), out.report.render_machine())?;
    fs::write(
        out_dir.join("kfold_search.txt"),
        out.kfold_ledger.render("k-fold grid search"),
    )?;
    let mut nested = String::from("nested cross-validation search\n");
    for (i, (b, a)) in out.nested_bests.iter().zip(&out.nested_accuracies).enumerate() {
        nested.push_str(&format!(
            "round {}: best C = {}, gamma = {} (outer accuracy {:.3})\n",
            i + 1,
            b.0,
            b.1,
            a
        ));
    }
    fs::write(out_dir.join("nested_search.txt"), nested)?;
    fs::write(out_dir.join("balance.txt"), out.balance.render())?;
    fs::write(
        out_dir.join("selection.txt"),
        selection_report(&out.model.preproc.mask, &feature_names()),
    )?;
    let mut curves = String::from("learner\tepoch\ttrain_accuracy\tval_accuracy\tmean_loss\n");
    for (tag, curve) in &out.curves {
        for e in 0..curve.train_accuracy.len() {
            curves.push_str(&format!(
                "{tag}\t{}\t{}\t{}\t{}\n",
                e + 1,
                curve.train_accuracy[e],
                curve.validation_accuracy[e],
                curve.mean_loss[e]
            ));
        }
    }
    fs::write(out_dir.join("curves.tsv"), curves)?;
    Ok((out, bundle_path))
}

/// Extract features for a manifest into a TSV (one row per segment).
pub fn run_extract(cfg: &RunConfig, manifest: &Path, out_path: &Path) -> Result<usize> {
    let ds = load_dataset(manifest, cfg.sample_rate, cfg.window_seconds)?;
    let extractor = FeatureExtractor::new(cfg.frame_params(), cfg.sample_rate)?;
    let names = feature_names();
    let mut text = String::from("segment\tlabel\t");
    text.push_str(&names.join("\t"));
    text.push('\n');
    for seg in &ds.segments {
        let row = extractor.extract(&seg.samples)?;
        text.push_str(&seg.source_id);
        text.push('\t');
        text.push_str(seg.label.map_or("?", |l| l.name()));
        for v in row {
            text.push_str(&format!("\t{v}"));
        }
        text.push('\n');
    }
    if let Some(parent) = out_path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(out_path, text)?;
    Ok(ds.len())
}

/// Classify one audio file against a saved bundle: one label per window
/// plus a class-proportion summary.
pub fn run_predict(bundle_path: &Path, wav_path: &Path, window_seconds: f64) -> Result<(Vec<Emotion>, String)> {
    let model = bundle::load(bundle_path)?;
    let wave = load_audio(wav_path, model.preproc.sample_rate)?;
    let segments = segment(&wave, window_seconds, &wav_path.display().to_string(), None)?;
    if segments.is_empty() {
        return Err(Error::data(format!(
            "audio shorter than one {window_seconds} s window"
        )));
    }
    let mut labels = Vec::with_capacity(segments.len());
    for seg in &segments {
        labels.push(model.predict(seg)?);
    }
    let mut counts = [0usize; 3];
    for l in &labels {
        counts[l.code()] += 1;
    }
    let total = labels.len() as f64;
    let mut summary = String::new();
    for class in [Emotion::Good, Emotion::Neutral, Emotion::Bad] {
        summary.push_str(&format!(
            "{}: {:.0}% ({} of {})\n",
            class.name(),
            100.0 * counts[class.code()] as f64 / total,
            counts[class.code()],
            labels.len()
        ));
    }
    Ok((labels, summary))
}

/// Evaluate a saved bundle against a labeled manifest.
pub fn run_evaluate(bundle_path: &Path, manifest: &Path, window_seconds: f64) -> Result<EvaluationReport> {
    let model = bundle::load(bundle_path)?;
    let ds = load_dataset(manifest, model.preproc.sample_rate, window_seconds)?;
    let y_true = ds.labels()?;
    let mut y_pred = Vec::with_capacity(ds.len());
    for seg in &ds.segments {
        y_pred.push(model.predict(seg)?.code());
    }
    EvaluationReport::from_labels(
        &y_true,
        &y_pred,
        &format!("bundle {}", bundle_path.display()),
    )
}

/// Human-readable description of a saved bundle.
pub fn run_report(bundle_path: &Path) -> Result<String> {
    let model = bundle::load(bundle_path)?;
    let mut s = String::new();
    s.push_str(&format!("bundle: {}\n", bundle_path.display()));
    s.push_str(&format!(
        "engine: {} Hz, frame {} hop {}\n",
        model.preproc.sample_rate,
        model.preproc.frame_params.frame_length,
        model.preproc.frame_params.hop
    ));
    s.push_str(&format!(
        "features: {} kept of {}\n",
        model.preproc.mask.kept_count(),
        model.preproc.mask.keep.len()
    ));
    s.push_str(&format!(
        "meta learner: RBF-SVM, C = {}, gamma = {}\n",
        model.meta_best.0, model.meta_best.1
    ));
    s.push_str("base learners:\n");
    for m in model.bank.members() {
        let kind = match &m.learner {
            BaseLearner::Svm(s) => format!(
                "svm (C = {}, gamma = {}, {} SVs)",
                s.hyper.c,
                s.hyper.gamma,
                s.machines.iter().map(|b| b.support_vectors.len()).sum::<usize>()
            ),
            BaseLearner::Nn(n) => format!(
                "{} ({} epochs, {} params)",
                n.arch.name,
                n.epochs_trained,
                n.param_count()
            ),
        };
        s.push_str(&format!("  {:<14} {kind}\n", m.tag));
    }
    Ok(s)
}

/// Source categories of the fused-corpus recipe.
const GOOD_MUSIC: &str = "happy";
const GOOD_SPEECH: [&str; 2] = ["relax", "surprised"];
const BAD_MUSIC: &str = "angry";
const BAD_SPEECH: [&str; 2] = ["sad", "fearful"];
const NEUTRAL_MUSIC: &str = "neutral";

/// Read a two-column source manifest: `relative_path \t category`.
pub fn read_source_manifest(path: &Path) -> Result<Vec<(PathBuf, String)>> {
    let dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let text = fs::read_to_string(path)
        .map_err(|e| Error::data(format!("cannot read source manifest {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 2 {
            return Err(Error::data(format!(
                "{}:{}: expected 2 tab-separated fields",
                path.display(),
                lineno + 1
            )));
        }
        out.push((dir.join(parts[0]), parts[1].to_ascii_lowercase()));
    }
    if out.is_empty() {
        return Err(Error::data(format!("source manifest {} is empty", path.display())));
    }
    Ok(out)
}

fn category_pool<'a>(
    entries: &'a [(PathBuf, String)],
    category: &str,
    manifest_name: &str,
) -> Result<Vec<&'a PathBuf>> {
    let pool: Vec<&PathBuf> = entries
        .iter()
        .filter(|(_, c)| c == category)
        .map(|(p, _)| p)
        .collect();
    if pool.is_empty() {
        return Err(Error::data(format!(
            "no '{category}' samples in the {manifest_name} manifest"
        )));
    }
    Ok(pool)
}

/// Fuse music and speech sources into a labeled corpus: Good from happy
/// music mixed with relax/surprised speech, Bad from angry music mixed with
/// sad/fearful speech, Neutral copied from neutral music untouched.
/// Returns the written manifest path.
pub fn run_synth_mix(
    music_manifest: &Path,
    speech_manifest: &Path,
    out_dir: &Path,
    per_class: usize,
    sample_rate: u32,
    seed: u64,
) -> Result<PathBuf> {
    let music = read_source_manifest(music_manifest)?;
    let speech = read_source_manifest(speech_manifest)?;
    fs::create_dir_all(out_dir)?;
    let mut rng = ChaCha20Rng::seed_from_u64(stage_seed(seed, "synth-mix"));
    let mut entries = Vec::with_capacity(3 * per_class);

    for (label, music_cat, speech_cats) in [
        (Emotion::Good, GOOD_MUSIC, &GOOD_SPEECH),
        (Emotion::Bad, BAD_MUSIC, &BAD_SPEECH),
    ] {
        let music_pool = category_pool(&music, music_cat, "music")?;
        let speech_pools: Vec<Vec<&PathBuf>> = speech_cats
            .iter()
            .map(|c| category_pool(&speech, c, "speech"))
            .collect::<Result<_>>()?;
        for i in 0..per_class {
            let m_path = music_pool[rng.gen_range(0..music_pool.len())];
            // alternate between the two paired speech categories
            let pool = &speech_pools[i % 2];
            let s_path = pool[rng.gen_range(0..pool.len())];
            let a = load_audio(m_path, sample_rate)?;
            let b = load_audio(s_path, sample_rate)?;
            let fused = mix(&a, &b)?;
            let file = format!("{}-{i:02}.wav", label.name());
            write_audio(&out_dir.join(&file), &fused)?;
            entries.push((file, label, format!("{music_cat}+{}", speech_cats[i % 2])));
        }
    }

    // neutral passthrough: byte-identical copies
    let neutral_pool = category_pool(&music, NEUTRAL_MUSIC, "music")?;
    for i in 0..per_class {
        let src = neutral_pool[rng.gen_range(0..neutral_pool.len())];
        let file = format!("neutral-{i:02}.wav");
        fs::copy(src, out_dir.join(&file))?;
        entries.push((file, Emotion::Neutral, "neutral".to_string()));
    }

    let manifest = out_dir.join("manifest.tsv");
    write_manifest(&manifest, &entries)?;
    Ok(manifest)
}
