//! Short-time Fourier transform on fixed-length frames.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::features::{FrameParams, WindowKind};

/// Magnitude spectrogram: `frames x bins`, bins 0..frame_length/2.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    /// Row-major frames x bins magnitudes, all >= 0.
    pub magnitudes: Vec<f64>,
    pub frame_count: usize,
    pub bin_count: usize,
    /// Center frequency of each bin in Hz.
    pub bin_freqs: Vec<f64>,
}

impl Spectrogram {
    pub fn frame(&self, t: usize) -> &[f64] {
        &self.magnitudes[t * self.bin_count..(t + 1) * self.bin_count]
    }
}

pub fn window_taper(kind: WindowKind, len: usize) -> Vec<f64> {
    match kind {
        WindowKind::Hann => (0..len)
            .map(|n| {
                0.5 - 0.5
                    * (2.0 * std::f64::consts::PI * n as f64 / (len as f64 - 1.0)).cos()
            })
            .collect(),
    }
}

/// Compute the magnitude spectrogram of `samples`. Frame `t` covers samples
/// `[t*hop, t*hop + frame_length)`; `frame_count = floor((len - frame_length)/hop) + 1`.
pub fn stft(samples: &[f64], sample_rate: u32, p: &FrameParams) -> Result<Spectrogram> {
    if samples.len() < p.frame_length {
        return Err(Error::data(format!(
            "segment of {} samples shorter than one frame ({})",
            samples.len(),
            p.frame_length
        )));
    }
    let frame_count = (samples.len() - p.frame_length) / p.hop + 1;
    let bin_count = p.frame_length / 2 + 1;
    let taper = window_taper(p.window, p.frame_length);

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(p.frame_length);
    let mut magnitudes = Vec::with_capacity(frame_count * bin_count);
    let mut buf = vec![Complex::new(0.0, 0.0); p.frame_length];
    for t in 0..frame_count {
        let start = t * p.hop;
        for (i, c) in buf.iter_mut().enumerate() {
            *c = Complex::new(samples[start + i] * taper[i], 0.0);
        }
        fft.process(&mut buf);
        for bin in buf.iter().take(bin_count) {
            magnitudes.push(bin.norm());
        }
    }
    let bin_freqs = (0..bin_count)
        .map(|l| l as f64 * sample_rate as f64 / p.frame_length as f64)
        .collect();
    Ok(Spectrogram {
        magnitudes,
        frame_count,
        bin_count,
        bin_freqs,
    })
}
