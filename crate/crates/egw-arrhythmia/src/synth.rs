//! Deterministic synthetic beat generator.
//!
//! Each class gets a distinct morphology template (presence, position, width
//! and polarity of P/QRS/T-like bumps) with per-record jitter in timing,
//! amplitude and additive noise. Beats are min-max normalized to [0, 1] like
//! the standard preprocessed single-lead dataset, and emitted grouped by
//! class (the published per-class count table is grouped the same way).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::{BeatRecord, NUM_CLASSES};

/// Per-class training counts from the published sample table.
pub const PAPER_TRAIN_COUNTS: [usize; NUM_CLASSES] = [72471, 2223, 5788, 641, 6431];
/// Per-class test counts from the published sample table.
pub const PAPER_TEST_COUNTS: [usize; NUM_CLASSES] = [18118, 1608, 1448, 556, 162];

/// One morphology component: a Gaussian bump in normalized time.
struct Bump {
    center: f64,
    width: f64,
    amplitude: f64,
}

fn template(class: usize) -> Vec<Bump> {
    let b = |center: f64, width: f64, amplitude: f64| Bump { center, width, amplitude };
    match class {
        // Normal: small P, sharp R, rounded T.
        0 => vec![b(0.18, 0.030, 0.18), b(0.42, 0.020, 1.00), b(0.68, 0.060, 0.30)],
        // Fusion of paced and normal: narrow pacing spike before a broad R.
        1 => vec![b(0.30, 0.012, 0.85), b(0.45, 0.045, 0.90), b(0.72, 0.055, 0.32)],
        // Premature ventricular contraction: wide R, no P, inverted T.
        2 => vec![b(0.40, 0.070, 1.10), b(0.70, 0.065, -0.45)],
        // Atrial premature: early prominent P, early R, early T.
        3 => vec![b(0.10, 0.025, 0.30), b(0.32, 0.020, 1.00), b(0.55, 0.050, 0.28)],
        // Fusion of ventricular and normal: double-humped R complex.
        4 => vec![b(0.38, 0.025, 0.80), b(0.46, 0.025, 0.80), b(0.72, 0.055, 0.30)],
        _ => unreachable!("class out of range"),
    }
}

fn render(class: usize, len: usize, rng: &mut ChaCha12Rng) -> Vec<f64> {
    let bumps = template(class);
    let shift: f64 = rng.gen_range(-0.02..0.02);
    let scale: f64 = rng.gen_range(0.9..1.1);
    let mut samples: Vec<f64> = (0..len)
        .map(|t| {
            let u = t as f64 / len as f64;
            let mut v = 0.0;
            for bump in &bumps {
                let d = (u - bump.center - shift) / bump.width;
                v += bump.amplitude * (-0.5 * d * d).exp();
            }
            v * scale + rng.gen_range(-0.03..0.03)
        })
        .collect();
    // Min-max normalize to [0, 1], matching the preprocessed dataset shape.
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in &samples {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    for v in &mut samples {
        *v = (*v - lo) / span;
    }
    samples
}

/// Generate `counts[c]` beats of each class, deterministically for a seed.
pub fn synth_beats(counts: &[usize; NUM_CLASSES], seed: u64, len: usize) -> Vec<BeatRecord> {
    assert!(len >= 8, "beat length too short to carry morphology");
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(counts.iter().sum());
    for (class, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            records.push(BeatRecord { samples: render(class, len, &mut rng), label: class as u8 });
        }
    }
    records
}

/// The standard training file: paper counts, default length.
pub fn paper_train_set(seed: u64, len: usize) -> Vec<BeatRecord> {
    synth_beats(&PAPER_TRAIN_COUNTS, seed, len)
}

/// The standard test file: paper counts, default length.
pub fn paper_test_set(seed: u64, len: usize) -> Vec<BeatRecord> {
    synth_beats(&PAPER_TEST_COUNTS, seed, len)
}
