//! Mel scale conversion, triangular filter banks, mel spectrogram and MFCC.

use crate::error::{Error, Result};
use crate::features::stft::Spectrogram;

/// Energies below this are floored before taking logs.
pub const LOG_FLOOR: f64 = 1e-10;

/// Mel(f) = 2595 * log10(1 + f/700).
pub fn hz_to_mel(f: f64) -> Result<f64> {
    if f < 0.0 {
        return Err(Error::data(format!("negative frequency {f}")));
    }
    Ok(2595.0 * (1.0 + f / 700.0).log10())
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters with peaks at mel-equispaced centers.
#[derive(Debug, Clone)]
pub struct MelFilterBank {
    pub n_filters: usize,
    pub bin_count: usize,
    /// Row-major n_filters x bin_count non-negative weights.
    pub weights: Vec<f64>,
    /// Filter center frequencies in Hz (strictly increasing).
    pub centers_hz: Vec<f64>,
}

impl MelFilterBank {
    pub fn filter(&self, k: usize) -> &[f64] {
        &self.weights[k * self.bin_count..(k + 1) * self.bin_count]
    }
}

/// Build `n_filters` triangular filters over the given STFT bin frequencies,
/// with peaks mel-equispaced between `f_min` and `f_max`. Each filter is zero
/// outside its two neighbors' centers.
pub fn build_mel_bank(
    n_filters: usize,
    bin_freqs: &[f64],
    f_min: f64,
    f_max: f64,
) -> Result<MelFilterBank> {
    if n_filters == 0 {
        return Err(Error::data("need at least one mel filter"));
    }
    if !(f_min >= 0.0 && f_min < f_max) {
        return Err(Error::data(format!(
            "degenerate frequency range [{f_min}, {f_max}]"
        )));
    }
    let mel_lo = hz_to_mel(f_min)?;
    let mel_hi = hz_to_mel(f_max)?;
    // n_filters + 2 edge points; filter k spans points k..k+2 peaking at k+1
    let points: Vec<f64> = (0..n_filters + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_filters + 1) as f64))
        .collect();

    let bin_count = bin_freqs.len();
    let mut weights = vec![0.0; n_filters * bin_count];
    for k in 0..n_filters {
        let (lo, mid, hi) = (points[k], points[k + 1], points[k + 2]);
        for (l, &f) in bin_freqs.iter().enumerate() {
            let w = if f > lo && f < mid {
                (f - lo) / (mid - lo)
            } else if (f - mid).abs() < 1e-12 {
                1.0
            } else if f > mid && f < hi {
                (hi - f) / (hi - mid)
            } else {
                0.0
            };
            weights[k * bin_count + l] = w;
        }
        if weights[k * bin_count..(k + 1) * bin_count]
            .iter()
            .all(|&w| w == 0.0)
        {
            // narrow filter fell between bins; give it its nearest bin so the
            // row invariant (at least one positive weight) holds
            let nearest = bin_freqs
                .iter()
                .enumerate()
                .min_by(|a, b| {
                    (a.1 - mid).abs().partial_cmp(&(b.1 - mid).abs()).unwrap()
                })
                .map(|(i, _)| i)
                .unwrap();
            weights[k * bin_count + nearest] = 1.0;
        }
    }
    Ok(MelFilterBank {
        n_filters,
        bin_count,
        weights,
        centers_hz: points[1..=n_filters].to_vec(),
    })
}

/// S_mel(k, t) = sum_l m_k(l) * |S(l, t)|^2. Returns row-major
/// frames x n_filters energies.
pub fn mel_spectrogram(sp: &Spectrogram, bank: &MelFilterBank) -> Result<Vec<f64>> {
    if bank.bin_count != sp.bin_count {
        return Err(Error::shape(format!(
            "filter bank has {} bins, spectrogram {}",
            bank.bin_count, sp.bin_count
        )));
    }
    let mut out = vec![0.0; sp.frame_count * bank.n_filters];
    for t in 0..sp.frame_count {
        let frame = sp.frame(t);
        for k in 0..bank.n_filters {
            let filt = bank.filter(k);
            let mut acc = 0.0;
            for l in 0..sp.bin_count {
                let m = frame[l];
                acc += filt[l] * m * m;
            }
            out[t * bank.n_filters + k] = acc;
        }
    }
    Ok(out)
}

/// DCT of floored log mel energies:
/// C_n = sum_{k=1..K} log(S_k) * cos(n * (k - 1/2) * pi / K), n = 0..K-1.
pub fn mfcc(mel_energies: &[f64]) -> Vec<f64> {
    let k_count = mel_energies.len();
    let logs: Vec<f64> = mel_energies
        .iter()
        .map(|&s| s.max(LOG_FLOOR).ln())
        .collect();
    (0..k_count)
        .map(|n| {
            let mut acc = 0.0;
            for (k, &ls) in logs.iter().enumerate() {
                let angle =
                    n as f64 * (k as f64 + 0.5) * std::f64::consts::PI / k_count as f64;
                acc += ls * angle.cos();
            }
            acc
        })
        .collect()
}
