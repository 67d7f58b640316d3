//! Time- and frequency-domain frame descriptors: zero-crossing rate,
//! spectral centroid, spectral roll-off and chroma.

use crate::error::{Error, Result};
use crate::features::stft::Spectrogram;

/// Zero-crossing rate of one frame, in [0, 1]. Transitions are counted
/// strictly within the frame (the first sample has no predecessor), with the
/// normalization length being the effective transition count.
pub fn zcr(frame: &[f64]) -> Result<f64> {
    if frame.len() < 2 {
        return Err(Error::data("zcr frame needs at least 2 samples"));
    }
    let sgn = |x: f64| -> f64 {
        if x >= 0.0 {
            1.0
        } else {
            -1.0
        }
    };
    let w = (frame.len() - 1) as f64;
    let mut acc = 0.0;
    for n in 1..frame.len() {
        acc += (sgn(frame[n]) - sgn(frame[n - 1])).abs();
    }
    Ok(acc / (2.0 * w))
}

/// Magnitude-weighted mean frequency. An all-zero spectrum yields 0 Hz.
pub fn spectral_centroid(magnitudes: &[f64], bin_freqs: &[f64]) -> f64 {
    let total: f64 = magnitudes.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let weighted: f64 = magnitudes.iter().zip(bin_freqs).map(|(m, f)| m * f).sum();
    weighted / total
}

/// Smallest bin frequency below which at least `fraction` of the spectral
/// energy (squared magnitude) lies. An all-zero spectrum yields 0 Hz.
pub fn spectral_rolloff(magnitudes: &[f64], bin_freqs: &[f64], fraction: f64) -> Result<f64> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::data(format!("rolloff fraction {fraction} outside (0,1)")));
    }
    let total: f64 = magnitudes.iter().map(|m| m * m).sum();
    if total <= 0.0 {
        return Ok(0.0);
    }
    let target = fraction * total;
    let mut acc = 0.0;
    for (m, &f) in magnitudes.iter().zip(bin_freqs) {
        acc += m * m;
        if acc >= target {
            return Ok(f);
        }
    }
    Ok(*bin_freqs.last().unwrap())
}

/// Pitch class of a frequency: round(12*log2(f/440)) mod 12, A = class 0.
pub fn pitch_class(freq: f64) -> usize {
    let steps = (12.0 * (freq / 440.0).log2()).round() as i64;
    steps.rem_euclid(12) as usize
}

/// Octave-folded pitch-class energy per frame: `frames x 12`, squared
/// magnitudes accumulated per class. The DC bin is ignored.
pub fn chroma(sp: &Spectrogram) -> Vec<f64> {
    let mut out = vec![0.0; sp.frame_count * 12];
    let classes: Vec<Option<usize>> = sp
        .bin_freqs
        .iter()
        .map(|&f| if f > 0.0 { Some(pitch_class(f)) } else { None })
        .collect();
    for t in 0..sp.frame_count {
        let frame = sp.frame(t);
        for (l, cls) in classes.iter().enumerate() {
            if let Some(c) = cls {
                out[t * 12 + c] += frame[l] * frame[l];
            }
        }
    }
    out
}
