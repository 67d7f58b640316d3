//! Deterministic synthetic test corpus: 90 seven-second segments in three
//! classes separated by tone register, noise band, and amplitude-modulation
//! rate. Built to be nearest-centroid separable in feature space so
//! end-to-end benchmarks have a known-learnable target.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::dataio::{write_audio, write_manifest, Dataset, Emotion, Segment, Waveform};
use crate::error::Result;
use crate::stage_seed;

/// Per-class signal recipe.
struct ClassRecipe {
    label: Emotion,
    /// Carrier tone register (Hz).
    tone: f64,
    /// Band of the additive noise partials (Hz).
    noise_band: (f64, f64),
    /// Amplitude-modulation rate (Hz).
    am_rate: f64,
}

const RECIPES: [ClassRecipe; 3] = [
    ClassRecipe {
        label: Emotion::Good,
        tone: 880.0,
        noise_band: (4000.0, 6000.0),
        am_rate: 8.0,
    },
    ClassRecipe {
        label: Emotion::Neutral,
        tone: 440.0,
        noise_band: (1000.0, 2000.0),
        am_rate: 2.0,
    },
    ClassRecipe {
        label: Emotion::Bad,
        tone: 220.0,
        noise_band: (120.0, 400.0),
        am_rate: 0.5,
    },
];

/// One synthetic segment: AM tone plus band-limited noise partials, with
/// seeded per-sample jitter in pitch, level and noise mix.
fn render(recipe: &ClassRecipe, rng: &mut ChaCha20Rng, sample_rate: u32, seconds: f64) -> Vec<f64> {
    let n = (seconds * sample_rate as f64) as usize;
    let tone = recipe.tone * (1.0 + rng.gen_range(-0.05..0.05));
    let amp = rng.gen_range(0.35..0.5);
    let noise_amp = rng.gen_range(0.08..0.15);
    let am_rate = recipe.am_rate * (1.0 + rng.gen_range(-0.1..0.1));
    // noise as random-phase partials inside the class band
    let partials: Vec<(f64, f64)> = (0..24)
        .map(|_| {
            (
                rng.gen_range(recipe.noise_band.0..recipe.noise_band.1),
                rng.gen_range(0.0..2.0 * PI),
            )
        })
        .collect();
    let dt = 1.0 / sample_rate as f64;
    (0..n)
        .map(|i| {
            let t = i as f64 * dt;
            let env = 1.0 + 0.8 * (2.0 * PI * am_rate * t).sin();
            let carrier = (2.0 * PI * tone * t).sin();
            let noise: f64 = partials
                .iter()
                .map(|&(f, ph)| (2.0 * PI * f * t + ph).sin())
                .sum::<f64>()
                / 24.0;
            (0.5 * amp * env * carrier + noise_amp * noise).clamp(-1.0, 1.0)
        })
        .collect()
}

/// Generate the in-memory corpus: `per_class` segments per class.
pub fn generate_corpus(seed: u64, per_class: usize, sample_rate: u32, seconds: f64) -> Dataset {
    let mut rng = ChaCha20Rng::seed_from_u64(stage_seed(seed, "synthetic-corpus"));
    let mut segments = Vec::with_capacity(3 * per_class);
    for recipe in &RECIPES {
        for i in 0..per_class {
            let samples = render(recipe, &mut rng, sample_rate, seconds);
            segments.push(Segment {
                samples,
                sample_rate,
                source_id: format!("synth-{}-{i:02}", recipe.label.name()),
                label: Some(recipe.label),
            });
        }
    }
    Dataset {
        segments,
        manifest_path: None,
    }
}

/// Write the corpus as WAV files plus a manifest in `dir`; returns the
/// manifest path.
pub fn write_corpus(
    dir: &Path,
    seed: u64,
    per_class: usize,
    sample_rate: u32,
    seconds: f64,
) -> Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir)?;
    let ds = generate_corpus(seed, per_class, sample_rate, seconds);
    let mut entries = Vec::with_capacity(ds.len());
    for seg in &ds.segments {
        let file = format!("{}.wav", seg.source_id);
        let w = Waveform::new(seg.samples.clone(), seg.sample_rate)?;
        write_audio(&dir.join(&file), &w)?;
        entries.push((file, seg.label.unwrap(), "synth".to_string()));
    }
    let manifest = dir.join("manifest.tsv");
    write_manifest(&manifest, &entries)?;
    Ok(manifest)
}
