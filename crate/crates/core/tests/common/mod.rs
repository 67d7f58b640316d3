//! Shared oracles for the integration and acceptance suites: independent
//! reimplementations of the numerics under test, plus counting stubs.

#![allow(dead_code)]

use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use afe_core::features::descriptors::{chroma, spectral_centroid, spectral_rolloff, zcr};
use afe_core::features::mel::{build_mel_bank, mel_spectrogram, mfcc, LOG_FLOOR};
use afe_core::features::stft::Spectrogram;
use afe_core::matrix::Matrix;
use afe_core::nn::{nn_gradients, Mode, NnArch, NnModel};
use afe_core::svm::{dual_objective, rbf_kernel, smo_solve, SvmHyper};

pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1.0)
}

// ---- DSP oracles -------------------------------------------------------

pub fn random_frame(rng: &mut ChaCha20Rng, len: usize, non_negative: bool) -> Vec<f64> {
    (0..len)
        .map(|_| {
            let v: f64 = rng.gen_range(-1.0..1.0);
            if non_negative {
                v.abs()
            } else {
                v
            }
        })
        .collect()
}

pub fn random_spectrogram(rng: &mut ChaCha20Rng, frames: usize, bins: usize) -> Spectrogram {
    Spectrogram {
        magnitudes: (0..frames * bins).map(|_| rng.gen_range(0.0..2.0)).collect(),
        frame_count: frames,
        bin_count: bins,
        bin_freqs: (0..bins)
            .map(|i| i as f64 * (11025.0 / (bins - 1) as f64))
            .collect(),
    }
}

/// Worst relative error of `zcr` against a naive counting loop.
pub fn zcr_oracle_sweep(trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let len = rng.gen_range(2..64);
        let frame = random_frame(&mut rng, len, false);
        let mut changes = 0usize;
        for i in 1..len {
            if (frame[i - 1] >= 0.0) != (frame[i] >= 0.0) {
                changes += 1;
            }
        }
        let want = changes as f64 / (len - 1) as f64;
        worst = worst.max(rel_err(zcr(&frame).unwrap(), want));
    }
    worst
}

/// Worst relative error of `spectral_centroid` against a weighted-mean loop.
pub fn centroid_oracle_sweep(trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let len = rng.gen_range(2..64);
        let mags = random_frame(&mut rng, len, true);
        let freqs: Vec<f64> = (0..len).map(|i| i as f64 * 43.066).collect();
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..len {
            num += mags[i] * freqs[i];
            den += mags[i];
        }
        let want = if den > 0.0 { num / den } else { 0.0 };
        worst = worst.max(rel_err(spectral_centroid(&mags, &freqs), want));
    }
    worst
}

/// Worst relative error of `spectral_rolloff` against a cumulative loop.
pub fn rolloff_oracle_sweep(trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let len = rng.gen_range(2..64);
        let mags = random_frame(&mut rng, len, true);
        let freqs: Vec<f64> = (0..len).map(|i| i as f64 * 43.066).collect();
        let total: f64 = mags.iter().map(|m| m * m).sum();
        let mut want = freqs[len - 1];
        let mut acc = 0.0;
        for i in 0..len {
            acc += mags[i] * mags[i];
            if acc >= 0.85 * total {
                want = freqs[i];
                break;
            }
        }
        worst = worst.max(rel_err(spectral_rolloff(&mags, &freqs, 0.85).unwrap(), want));
    }
    worst
}

/// Worst relative error of `mfcc` against an explicit double-loop DCT.
pub fn mfcc_oracle_sweep(trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let k_count = 24;
        let energies: Vec<f64> = (0..k_count).map(|_| rng.gen_range(0.0..5.0)).collect();
        let got = mfcc(&energies);
        for (n, &g) in got.iter().enumerate() {
            let mut want = 0.0;
            for (k, &s) in energies.iter().enumerate() {
                let ls = s.max(LOG_FLOOR).ln();
                want += ls
                    * (n as f64 * (k as f64 + 0.5) * std::f64::consts::PI / k_count as f64).cos();
            }
            worst = worst.max(rel_err(g, want));
        }
    }
    worst
}

/// Worst relative error of `mel_spectrogram` against a triple loop over
/// `frames` random frames.
pub fn mel_oracle_sweep(frames: usize, seed: u64) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let bins = 65;
    let sp = random_spectrogram(&mut rng, frames, bins);
    let bank = build_mel_bank(26, &sp.bin_freqs, 0.0, 11025.0).unwrap();
    let got = mel_spectrogram(&sp, &bank).unwrap();
    let mut worst = 0.0f64;
    for t in 0..sp.frame_count {
        let frame = sp.frame(t);
        for k in 0..bank.n_filters {
            let mut want = 0.0;
            for l in 0..bins {
                want += bank.weights[k * bins + l] * frame[l] * frame[l];
            }
            worst = worst.max(rel_err(got[t * bank.n_filters + k], want));
        }
    }
    worst
}

/// Worst relative error of `chroma` against an independent folding loop.
pub fn chroma_oracle_sweep(frames: usize, seed: u64) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let bins = 65;
    let sp = random_spectrogram(&mut rng, frames, bins);
    let got = chroma(&sp);
    let mut worst = 0.0f64;
    for t in 0..sp.frame_count {
        let frame = sp.frame(t);
        let mut want = [0.0f64; 12];
        for l in 0..bins {
            let f = sp.bin_freqs[l];
            if f <= 0.0 {
                continue;
            }
            let cls = (12.0 * (f / 440.0).log2()).round() as i64;
            want[cls.rem_euclid(12) as usize] += frame[l] * frame[l];
        }
        for c in 0..12 {
            worst = worst.max(rel_err(got[t * 12 + c], want[c]));
        }
    }
    worst
}

// ---- SVM dual QP oracle ------------------------------------------------

/// Project `v` onto {alpha : 0 <= alpha <= c, sum alpha_i y_i = 0} by
/// bisecting on the multiplier of the equality constraint.
pub fn project_box_hyperplane(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let clipped = |lambda: f64| -> Vec<f64> {
        v.iter()
            .zip(y)
            .map(|(&vi, &yi)| (vi - lambda * yi).clamp(0.0, c))
            .collect()
    };
    let residual = |lambda: f64| -> f64 {
        clipped(lambda).iter().zip(y).map(|(&a, &yi)| a * yi).sum()
    };
    let bound = v.iter().fold(0.0f64, |m, &x| m.max(x.abs())) + c + 1.0;
    let (mut lo, mut hi) = (-bound, bound);
    // residual is nonincreasing in lambda
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    clipped(0.5 * (lo + hi))
}

/// Maximize the SVM dual by projected gradient ascent. Independent of SMO.
pub fn qp_oracle(x: &Matrix, y: &[f64], hyper: SvmHyper) -> Vec<f64> {
    let n = x.rows();
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            gram[i * n + j] = rbf_kernel(x.row(i), x.row(j), hyper.gamma).unwrap();
        }
    }
    let mut alpha = vec![0.0; n];
    let step = 1.0 / (n as f64);
    let mut last = f64::NEG_INFINITY;
    for it in 0..200_000 {
        let mut grad = vec![1.0; n];
        for i in 0..n {
            for j in 0..n {
                grad[i] -= y[i] * y[j] * gram[i * n + j] * alpha[j];
            }
        }
        let trial: Vec<f64> = alpha.iter().zip(&grad).map(|(&a, &g)| a + step * g).collect();
        alpha = project_box_hyperplane(&trial, y, hyper.c);
        if it % 500 == 0 {
            let obj = dual_objective(x, y, &alpha, hyper.gamma).unwrap();
            if (obj - last).abs() < 1e-13 {
                break;
            }
            last = obj;
        }
    }
    alpha
}

/// A random binary problem of at most 8 points with both labels present.
pub fn random_svm_problem(rng: &mut ChaCha20Rng) -> (Matrix, Vec<f64>, SvmHyper) {
    let n = rng.gen_range(2..=8);
    let dim = rng.gen_range(1..=3);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    let mut y: Vec<f64> = (0..n)
        .map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    y[0] = 1.0;
    y[n - 1] = -1.0;
    let hyper = SvmHyper::new(rng.gen_range(0.5..10.0), rng.gen_range(0.1..2.0)).unwrap();
    (Matrix::from_rows(&rows).unwrap(), y, hyper)
}

/// Largest |SMO dual − oracle dual| over random small problems.
pub fn smo_dual_gap_sweep(trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let (x, y, hyper) = random_svm_problem(&mut rng);
        let sol = smo_solve(&x, &y, hyper, 1e-8).unwrap();
        let smo_obj = dual_objective(&x, &y, &sol.alpha, hyper.gamma).unwrap();
        let oracle_obj = dual_objective(&x, &y, &qp_oracle(&x, &y, hyper), hyper.gamma).unwrap();
        worst = worst.max((smo_obj - oracle_obj).abs());
    }
    worst
}

// ---- NN gradient oracle ------------------------------------------------

/// Central-difference gradient check on smooth parameters. Returns the worst
/// relative error and how many parameters were checked; parameters where the
/// FD itself is unstable (a ReLU/max-pool kink inside the step) are skipped.
pub fn fd_gradient_check(arch: NnArch, seed: u64, want_checked: usize) -> (f64, usize) {
    const H: f64 = 1e-5;
    let width = arch.input_width;
    let model = NnModel::init(arch, seed);
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0xabcd);
    let rows: Vec<Vec<f64>> = (0..6)
        .map(|r| (0..width).map(|j| ((r * 31 + j * 7) % 13) as f64 / 13.0 - 0.4).collect())
        .collect();
    let batch = Matrix::from_rows(&rows).unwrap();
    let labels: Vec<usize> = (0..6).map(|r| r % 3).collect();

    let (analytic, _) = nn_gradients(&model, &batch, &labels, Mode::Eval, None).unwrap();
    let base = model.param_vector();
    let mut idx: Vec<usize> = (0..base.len()).collect();
    idx.shuffle(&mut rng);
    let fd_at = |p: usize, h: f64| -> f64 {
        let mut probe = model.clone();
        let mut v = base.clone();
        v[p] = base[p] + h;
        probe.set_param_vector(&v).unwrap();
        let (_, plus) = nn_gradients(&probe, &batch, &labels, Mode::Eval, None).unwrap();
        v[p] = base[p] - h;
        probe.set_param_vector(&v).unwrap();
        let (_, minus) = nn_gradients(&probe, &batch, &labels, Mode::Eval, None).unwrap();
        (plus - minus) / (2.0 * h)
    };
    let mut worst = 0.0f64;
    let mut checked = 0;
    for &p in &idx {
        if checked >= want_checked {
            break;
        }
        let fd = fd_at(p, H);
        let fine = fd_at(p, H / 10.0);
        if (fd - fine).abs() > 1e-3 * fd.abs().max(fine.abs()).max(1e-6) {
            continue;
        }
        let denom = analytic[p].abs().max(fd.abs()).max(1e-6);
        worst = worst.max((analytic[p] - fd).abs() / denom);
        checked += 1;
    }
    (worst, checked)
}

// ---- Feature-selection oracles -----------------------------------------

pub fn oracle_variance(col: &[f64]) -> f64 {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

pub fn oracle_chi2(col: &[f64], y: &[usize]) -> f64 {
    let n = col.len() as f64;
    let total: f64 = col.iter().sum();
    let mut score = 0.0;
    for c in 0..3 {
        let observed: f64 = col.iter().zip(y).filter(|&(_, &yi)| yi == c).map(|(&v, _)| v).sum();
        let frac = y.iter().filter(|&&yi| yi == c).count() as f64 / n;
        let expected = total * frac;
        if expected > 0.0 {
            score += (observed - expected) * (observed - expected) / expected;
        }
    }
    score
}

pub fn oracle_ranks(values: &[f64]) -> Vec<f64> {
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

pub fn oracle_spearman(col: &[f64], y: &[usize]) -> f64 {
    let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
    let a = oracle_ranks(col);
    let b = oracle_ranks(&yf);
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for i in 0..a.len() {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

pub fn random_matrix(rng: &mut ChaCha20Rng, rows: usize, cols: usize, non_negative: bool) -> Matrix {
    let data: Vec<Vec<f64>> = (0..rows)
        .map(|_| {
            (0..cols)
                .map(|_| {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    if non_negative {
                        v.abs()
                    } else {
                        v
                    }
                })
                .collect()
        })
        .collect();
    Matrix::from_rows(&data).unwrap()
}

pub fn shuffled_labels(rows: usize, rng: &mut ChaCha20Rng) -> Vec<usize> {
    let mut y: Vec<usize> = (0..rows).map(|i| i % 3).collect();
    for i in (1..rows).rev() {
        y.swap(i, rng.gen_range(0..=i));
    }
    y
}

// ---- Counting stub learner ---------------------------------------------

/// A trivially consistent learner: predicts the label of the nearest
/// training row. Used purely to count `train` invocations.
pub struct Nearest {
    pub x: Matrix,
    pub y: Vec<usize>,
}

pub fn nearest_train(x: &Matrix, y: &[usize]) -> Nearest {
    Nearest {
        x: x.clone(),
        y: y.to_vec(),
    }
}

pub fn nearest_predict(m: &Nearest, row: &[f64]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for r in 0..m.x.rows() {
        let d: f64 = m.x.row(r).iter().zip(row).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.0 {
            best = (d, m.y[r]);
        }
    }
    best.1
}
