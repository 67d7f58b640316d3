//! Audio loading, segmentation, mixing, labeling and dataset partitioning.
//!
//! The on-disk dataset index is a UTF-8 manifest with one record per line:
//! `relative_path \t label \t source_tag`, labels `good|neutral|bad`.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};

/// Engine-wide sample rate. All corpora are resampled to this on ingestion so
/// the window length in samples is uniform.
pub const ENGINE_SAMPLE_RATE: u32 = 22050;

/// Analysis window length in seconds.
pub const WINDOW_SECONDS: f64 = 7.0;

/// The three emotion classes with fixed ordinal codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Emotion {
    Bad,
    Neutral,
    Good,
}

impl Emotion {
    pub const ALL: [Emotion; 3] = [Emotion::Bad, Emotion::Neutral, Emotion::Good];

    /// Ordinal code: Bad=0, Neutral=1, Good=2. Fixed across the whole system.
    pub fn code(self) -> usize {
        match self {
            Emotion::Bad => 0,
            Emotion::Neutral => 1,
            Emotion::Good => 2,
        }
    }

    pub fn from_code(code: usize) -> Result<Emotion> {
        match code {
            0 => Ok(Emotion::Bad),
            1 => Ok(Emotion::Neutral),
            2 => Ok(Emotion::Good),
            other => Err(Error::data(format!("invalid emotion code {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Emotion::Bad => "bad",
            Emotion::Neutral => "neutral",
            Emotion::Good => "good",
        }
    }

    pub fn parse(s: &str) -> Result<Emotion> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bad" | "b" => Ok(Emotion::Bad),
            "neutral" | "n" => Ok(Emotion::Neutral),
            "good" | "g" => Ok(Emotion::Good),
            other => Err(Error::data(format!("unknown emotion label '{other}'"))),
        }
    }
}

impl std::fmt::Display for Emotion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Mono PCM audio with samples in [-1, 1].
#[derive(Debug, Clone)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Waveform> {
        if samples.is_empty() {
            return Err(Error::audio("zero-length audio"));
        }
        if sample_rate == 0 {
            return Err(Error::audio("sample rate must be positive"));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::audio("non-finite sample"));
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// A fixed-duration analysis unit cut from a waveform.
#[derive(Debug, Clone)]
pub struct Segment {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub source_id: String,
    pub label: Option<Emotion>,
}

/// A labeled collection of segments, all at one sample rate.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub segments: Vec<Segment>,
    pub manifest_path: Option<PathBuf>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn labels(&self) -> Result<Vec<usize>> {
        self.segments
            .iter()
            .map(|s| {
                s.label
                    .map(|l| l.code())
                    .ok_or_else(|| Error::data(format!("segment '{}' unlabeled", s.source_id)))
            })
            .collect()
    }

    pub fn class_counts(&self) -> [usize; 3] {
        let mut counts = [0usize; 3];
        for s in &self.segments {
            if let Some(l) = s.label {
                counts[l.code()] += 1;
            }
        }
        counts
    }
}

/// One manifest record.
#[derive(Debug, Clone)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: Emotion,
    pub source_tag: String,
}

/// Read a tab-separated manifest (`relative_path \t label \t source_tag`).
/// Paths are resolved relative to the manifest file's directory.
pub fn read_manifest(manifest: &Path) -> Result<Vec<ManifestEntry>> {
    let dir = manifest.parent().unwrap_or(Path::new(".")).to_path_buf();
    let file = std::fs::File::open(manifest)
        .map_err(|e| Error::data(format!("cannot open manifest {}: {e}", manifest.display())))?;
    let mut entries = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 3 {
            return Err(Error::data(format!(
                "{}:{}: expected 3 tab-separated fields, got {}",
                manifest.display(),
                lineno + 1,
                parts.len()
            )));
        }
        entries.push(ManifestEntry {
            path: dir.join(parts[0]),
            label: Emotion::parse(parts[1])?,
            source_tag: parts[2].to_string(),
        });
    }
    if entries.is_empty() {
        return Err(Error::data(format!(
            "manifest {} has no records",
            manifest.display()
        )));
    }
    Ok(entries)
}

/// Write a manifest. Paths are written as given (callers pass relative paths).
pub fn write_manifest(path: &Path, entries: &[(String, Emotion, String)]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    for (rel, label, tag) in entries {
        writeln!(f, "{rel}\t{}\t{tag}", label.name())?;
    }
    Ok(())
}

/// Load a PCM WAV (8/16/24-bit int or 32-bit float, mono or stereo), average
/// channels to mono, resample to `target_rate` and normalize to [-1, 1].
pub fn load_audio(path: &Path, target_rate: u32) -> Result<Waveform> {
    let mut reader = hound::WavReader::open(path)
        .map_err(|e| Error::audio(format!("cannot read {}: {e}", path.display())))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::audio("zero channels"));
    }

    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => {
            if spec.bits_per_sample != 32 {
                return Err(Error::audio(format!(
                    "unsupported float bit depth {}",
                    spec.bits_per_sample
                )));
            }
            reader
                .samples::<f32>()
                .map(|s| s.map(|v| v as f64))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::audio(format!("decode failure: {e}")))?
        }
        hound::SampleFormat::Int => {
            let bits = spec.bits_per_sample;
            if !matches!(bits, 8 | 16 | 24) {
                return Err(Error::audio(format!("unsupported int bit depth {bits}")));
            }
            let scale = (1i64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::audio(format!("decode failure: {e}")))?
        }
    };
    if interleaved.is_empty() {
        return Err(Error::audio(format!("{} is zero-length", path.display())));
    }

    let frames = interleaved.len() / channels;
    let mut mono = Vec::with_capacity(frames);
    for f in 0..frames {
        let mut acc = 0.0;
        for c in 0..channels {
            acc += interleaved[f * channels + c];
        }
        mono.push(acc / channels as f64);
    }

    let resampled = if spec.sample_rate == target_rate {
        mono
    } else {
        resample(&mono, spec.sample_rate, target_rate)
    };
    Waveform::new(resampled, target_rate)
}

/// Write a mono waveform as 16-bit PCM WAV.
pub fn write_audio(path: &Path, w: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)
        .map_err(|e| Error::audio(format!("cannot write {}: {e}", path.display())))?;
    for &s in &w.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer
            .write_sample(v)
            .map_err(|e| Error::audio(format!("write failure: {e}")))?;
    }
    writer
        .finalize()
        .map_err(|e| Error::audio(format!("finalize failure: {e}")))?;
    Ok(())
}

/// Windowed-sinc resampler. Output length is `ceil(n * to / from)`; the
/// low-pass cutoff tracks the lower of the two Nyquist rates.
pub fn resample(samples: &[f64], from: u32, to: u32) -> Vec<f64> {
    if from == to {
        return samples.to_vec();
    }
    let ratio = to as f64 / from as f64;
    let out_len = (samples.len() as f64 * ratio).ceil() as usize;
    // cutoff as a fraction of the input Nyquist
    let fc = ratio.min(1.0);
    let half_taps: usize = 24;
    let width = (half_taps as f64 / fc).ceil() as isize;
    let mut out = Vec::with_capacity(out_len);
    for t in 0..out_len {
        let pos = t as f64 / ratio;
        let center = pos.floor() as isize;
        let mut acc = 0.0;
        let mut norm = 0.0;
        for j in (center - width)..=(center + width) {
            if j < 0 || j as usize >= samples.len() {
                continue;
            }
            let d = pos - j as f64;
            let s = sinc(fc * d);
            // Hann taper over the tap span
            let w = 0.5 + 0.5 * (std::f64::consts::PI * d / (width as f64 + 1.0)).cos();
            let k = s * w;
            acc += samples[j as usize] * k;
            norm += k;
        }
        let v = if norm.abs() > 1e-12 { acc / norm } else { 0.0 };
        out.push(v.clamp(-1.0, 1.0));
    }
    out
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Cut a waveform into consecutive non-overlapping windows of
/// `window_seconds`. A trailing remainder shorter than one window is
/// discarded. Sub-window input yields an empty list.
pub fn segment(
    w: &Waveform,
    window_seconds: f64,
    source_id: &str,
    label: Option<Emotion>,
) -> Result<Vec<Segment>> {
    if window_seconds <= 0.0 {
        return Err(Error::data("window_seconds must be positive"));
    }
    let win = (window_seconds * w.sample_rate as f64).round() as usize;
    if win == 0 {
        return Err(Error::data("window shorter than one sample"));
    }
    let count = w.samples.len() / win;
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        out.push(Segment {
            samples: w.samples[i * win..(i + 1) * win].to_vec(),
            sample_rate: w.sample_rate,
            source_id: format!("{source_id}#{i}"),
            label,
        });
    }
    Ok(out)
}

/// Element-wise sum of two waveforms, truncated to the shorter length and
/// hard-clipped to [-1, 1]. Used to fuse music and speech into simulated
/// emotion samples.
pub fn mix(a: &Waveform, b: &Waveform) -> Result<Waveform> {
    if a.sample_rate != b.sample_rate {
        return Err(Error::audio(format!(
            "sample-rate mismatch: {} vs {}",
            a.sample_rate, b.sample_rate
        )));
    }
    let n = a.samples.len().min(b.samples.len());
    let samples = (0..n)
        .map(|i| (a.samples[i] + b.samples[i]).clamp(-1.0, 1.0))
        .collect();
    Waveform::new(samples, a.sample_rate)
}

/// Split a labeled dataset into train/test. The test set holds
/// `round_half_up(test_fraction * N)` samples drawn uniformly at random under
/// `seed`; the split is a disjoint cover and deterministic for a fixed seed.
pub fn partition(d: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::data(format!(
            "test_fraction {test_fraction} outside (0,1)"
        )));
    }
    let counts = d.class_counts();
    if counts.iter().any(|&c| c == 0) {
        return Err(Error::data("every class needs at least one sample"));
    }
    let n = d.len();
    // round-half-up
    let test_n = (test_fraction * n as f64 + 0.5).floor() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let (test_idx, train_idx) = idx.split_at(test_n);
    let mut test_idx = test_idx.to_vec();
    let mut train_idx = train_idx.to_vec();
    test_idx.sort_unstable();
    train_idx.sort_unstable();
    let pick = |ids: &[usize]| Dataset {
        segments: ids.iter().map(|&i| d.segments[i].clone()).collect(),
        manifest_path: d.manifest_path.clone(),
    };
    Ok((pick(&train_idx), pick(&test_idx)))
}

/// Load every manifest entry, segment it and collect the labeled dataset.
/// Assembly follows manifest order so downstream seeding is reproducible.
pub fn load_dataset(manifest: &Path, engine_rate: u32, window_seconds: f64) -> Result<Dataset> {
    let entries = read_manifest(manifest)?;
    let mut segments = Vec::new();
    for e in &entries {
        let w = load_audio(&e.path, engine_rate)?;
        let id = e.path.file_stem().map_or_else(
            || e.path.display().to_string(),
            |s| s.to_string_lossy().into_owned(),
        );
        segments.extend(segment(&w, window_seconds, &id, Some(e.label))?);
    }
    if segments.is_empty() {
        return Err(Error::data("no segments: all inputs shorter than one window"));
    }
    Ok(Dataset {
        segments,
        manifest_path: Some(manifest.to_path_buf()),
    })
}
