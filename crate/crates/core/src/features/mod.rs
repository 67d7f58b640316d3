//! Frame-level cepstral/time/frequency features and their aggregation into
//! the 195-dimensional per-segment feature vector.
//!
//! Per frame, 65 values in fixed order: 24 MFCCs, 26 mel-band energies,
//! 12 chroma energies, zero-crossing rate, spectral centroid, spectral
//! roll-off. Per segment, each frame feature is summarized by its mean,
//! range and mean absolute deviation: 65 x 3 = 195 values, ordered
//! `[all means, all ranges, all MADs]`.

pub mod descriptors;
pub mod mel;
pub mod stft;

pub use descriptors::{chroma, pitch_class, spectral_centroid, spectral_rolloff, zcr};
pub use mel::{build_mel_bank, hz_to_mel, mel_spectrogram, mel_to_hz, mfcc, MelFilterBank};
pub use stft::{stft, Spectrogram};

use crate::error::{Error, Result};

/// Number of MFCCs per frame (coefficients 0..=23).
pub const MFCC_COUNT: usize = 24;
/// Mel-spectrogram band count. Chosen so 65 frame features x 3 aggregates
/// gives the 195-wide segment vector.
pub const MEL_BANDS: usize = 26;
/// Chroma pitch classes.
pub const CHROMA_BINS: usize = 12;
/// Frame features: MFCCs + mel bands + chroma + zcr + centroid + rolloff.
pub const FRAME_FEATURE_COUNT: usize = MFCC_COUNT + MEL_BANDS + CHROMA_BINS + 3;
/// Segment vector width.
pub const FEATURE_VECTOR_LEN: usize = FRAME_FEATURE_COUNT * 3;

/// Window taper kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    Hann,
}

/// STFT framing parameters, persisted with trained models so extraction is
/// reproducible at inference time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameParams {
    pub frame_length: usize,
    pub hop: usize,
    pub window: WindowKind,
    /// Spectral roll-off energy fraction.
    pub rolloff_fraction: f64,
}

impl Default for FrameParams {
    fn default() -> Self {
        FrameParams {
            frame_length: 2048,
            hop: 512,
            window: WindowKind::Hann,
            rolloff_fraction: 0.85,
        }
    }
}

impl FrameParams {
    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.hop > self.frame_length {
            return Err(Error::config(format!(
                "hop {} must satisfy 0 < hop <= frame_length {}",
                self.hop, self.frame_length
            )));
        }
        if !(self.rolloff_fraction > 0.0 && self.rolloff_fraction < 1.0) {
            return Err(Error::config("rolloff fraction outside (0,1)".to_string()));
        }
        Ok(())
    }
}

/// Per-segment feature extractor with prebuilt mel banks for one sample rate.
pub struct FeatureExtractor {
    params: FrameParams,
    sample_rate: u32,
    mfcc_bank: MelFilterBank,
    mel_bank: MelFilterBank,
}

impl FeatureExtractor {
    pub fn new(params: FrameParams, sample_rate: u32) -> Result<FeatureExtractor> {
        params.validate()?;
        let nyquist = sample_rate as f64 / 2.0;
        let bin_count = params.frame_length / 2 + 1;
        let bin_freqs: Vec<f64> = (0..bin_count)
            .map(|l| l as f64 * sample_rate as f64 / params.frame_length as f64)
            .collect();
        Ok(FeatureExtractor {
            params,
            sample_rate,
            mfcc_bank: build_mel_bank(MFCC_COUNT, &bin_freqs, 0.0, nyquist)?,
            mel_bank: build_mel_bank(MEL_BANDS, &bin_freqs, 0.0, nyquist)?,
        })
    }

    pub fn params(&self) -> &FrameParams {
        &self.params
    }

    /// Per-frame 65-value feature rows for one segment.
    pub fn frame_features(&self, samples: &[f64]) -> Result<Vec<Vec<f64>>> {
        let sp = stft(samples, self.sample_rate, &self.params)?;
        let mel26 = mel_spectrogram(&sp, &self.mel_bank)?;
        let mel24 = mel_spectrogram(&sp, &self.mfcc_bank)?;
        let chroma_grid = chroma(&sp);

        let mut rows = Vec::with_capacity(sp.frame_count);
        for t in 0..sp.frame_count {
            let mut row = Vec::with_capacity(FRAME_FEATURE_COUNT);
            row.extend(mfcc(&mel24[t * MFCC_COUNT..(t + 1) * MFCC_COUNT]));
            row.extend_from_slice(&mel26[t * MEL_BANDS..(t + 1) * MEL_BANDS]);
            row.extend_from_slice(&chroma_grid[t * CHROMA_BINS..(t + 1) * CHROMA_BINS]);
            let frame = &samples[t * self.params.hop..t * self.params.hop + self.params.frame_length];
            row.push(zcr(frame)?);
            row.push(spectral_centroid(sp.frame(t), &sp.bin_freqs));
            row.push(spectral_rolloff(
                sp.frame(t),
                &sp.bin_freqs,
                self.params.rolloff_fraction,
            )?);
            debug_assert_eq!(row.len(), FRAME_FEATURE_COUNT);
            rows.push(row);
        }
        Ok(rows)
    }

    /// The full 195-value segment descriptor.
    pub fn extract(&self, samples: &[f64]) -> Result<Vec<f64>> {
        aggregate(&self.frame_features(samples)?)
    }
}

/// Summarize frame feature rows: per column, mean, range (max - min) and
/// mean absolute deviation, emitted as `[all means, all ranges, all MADs]`.
pub fn aggregate(frames: &[Vec<f64>]) -> Result<Vec<f64>> {
    if frames.len() < 2 {
        return Err(Error::data(format!(
            "aggregation needs at least 2 frames, got {}",
            frames.len()
        )));
    }
    let width = frames[0].len();
    let n = frames.len() as f64;
    let mut means = vec![0.0; width];
    let mut mins = vec![f64::INFINITY; width];
    let mut maxs = vec![f64::NEG_INFINITY; width];
    for row in frames {
        if row.len() != width {
            return Err(Error::shape("ragged frame features".to_string()));
        }
        for (j, &v) in row.iter().enumerate() {
            means[j] += v;
            mins[j] = mins[j].min(v);
            maxs[j] = maxs[j].max(v);
        }
    }
    for m in &mut means {
        *m /= n;
    }
    let mut mads = vec![0.0; width];
    for row in frames {
        for (j, &v) in row.iter().enumerate() {
            mads[j] += (v - means[j]).abs();
        }
    }
    for m in &mut mads {
        *m /= n;
    }
    let mut out = Vec::with_capacity(width * 3);
    out.extend_from_slice(&means);
    for j in 0..width {
        out.push(maxs[j] - mins[j]);
    }
    out.extend_from_slice(&mads);
    Ok(out)
}

/// Names of the 65 frame features, in vector order.
pub fn frame_feature_names() -> Vec<String> {
    let mut names = Vec::with_capacity(FRAME_FEATURE_COUNT);
    for i in 0..MFCC_COUNT {
        names.push(format!("mfcc{i:02}"));
    }
    for i in 0..MEL_BANDS {
        names.push(format!("mel{i:02}"));
    }
    for i in 0..CHROMA_BINS {
        names.push(format!("chroma{i:02}"));
    }
    names.push("zcr".to_string());
    names.push("centroid".to_string());
    names.push("rolloff".to_string());
    names
}

/// Names of the 195 segment features: `<frame>_mean`, `<frame>_range`,
/// `<frame>_mad` in aggregate order.
pub fn feature_names() -> Vec<String> {
    let base = frame_feature_names();
    let mut names = Vec::with_capacity(FEATURE_VECTOR_LEN);
    for suffix in ["mean", "range", "mad"] {
        for b in &base {
            names.push(format!("{b}_{suffix}"));
        }
    }
    names
}
