//! Signal file I/O and a deterministic ECG synthesizer for demos and tests.
//!
//! Signal files are plain text: a `fs=<Hz>` header line followed by one
//! millivolt sample per line. The synthesizer renders a P-QRS-T beat train
//! as triangular bumps whose widths are chosen so the wave detector and the
//! feature extractor see realistic timing after band-pass preprocessing.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::GatewayError;

/// One constant-rate stretch of synthesized signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSegment {
    pub seconds: f64,
    pub bpm: f64,
}

/// Peak offsets and triangle half-widths, in milliseconds. The triangle
/// `a·(1 − |t|/(h+1))` has full width ≈ `h` at half amplitude, so these
/// half-widths directly set the durations the feature extractor measures.
const P_OFFSET_MS: f64 = -160.0;
const T_OFFSET_MS: f64 = 210.0;
const QRS_HALF_MS: f64 = 88.0;
const P_HALF_MS: f64 = 44.0;
const T_HALF_MS: f64 = 80.0;
const R_AMP: f64 = 2.0;
const P_AMP: f64 = 0.25;
const T_AMP: f64 = 0.5;
/// Uniform baseline noise, well under every detection threshold.
const NOISE_MV: f64 = 0.008;

fn add_bump(x: &mut [f64], center: i64, half_width: usize, amp: f64) {
    let h = half_width as i64;
    for off in -h..=h {
        let idx = center + off;
        if idx >= 0 && (idx as usize) < x.len() {
            let w = 1.0 - off.abs() as f64 / (h as f64 + 1.0);
            x[idx as usize] += amp * w;
        }
    }
}

/// Renders a beat train covering the given segments back to back. The beat
/// clock is continuous across segment boundaries, so a rate change reads as
/// an arrhythmia onset inside one uninterrupted recording. Deterministic per
/// seed; an empty segment list yields an empty stream.
pub fn synth_ecg(
    sampling_rate: u32,
    segments: &[SynthSegment],
    seed: u64,
) -> Result<Vec<f64>, GatewayError> {
    if sampling_rate == 0 {
        return Err(GatewayError::Config("sampling_rate must be > 0".into()));
    }
    for seg in segments {
        if !(seg.seconds.is_finite() && seg.seconds > 0.0) {
            return Err(GatewayError::Config("segment duration must be positive".into()));
        }
        if !(20.0..=200.0).contains(&seg.bpm) {
            return Err(GatewayError::Config(format!(
                "segment rate {} bpm outside the supported 20–200 range",
                seg.bpm
            )));
        }
    }
    let fs = sampling_rate as f64;
    let total_s: f64 = segments.iter().map(|s| s.seconds).sum();
    let n = (total_s * fs).round() as usize;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-NOISE_MV..NOISE_MV)).collect();

    // Beat centers: walk the segment schedule with a continuous clock.
    let mut centers_s = Vec::new();
    let mut t = 0.4;
    let mut seg_start = 0.0;
    for seg in segments {
        let seg_end = seg_start + seg.seconds;
        while t < seg_end {
            centers_s.push(t);
            t += 60.0 / seg.bpm;
        }
        seg_start = seg_end;
    }

    let half = |ms: f64| (ms / 1000.0 * fs).round() as usize;
    for &c in &centers_s {
        let at = |offset_ms: f64| ((c + offset_ms / 1000.0) * fs).round() as i64;
        add_bump(&mut x, at(0.0), half(QRS_HALF_MS), R_AMP);
        add_bump(&mut x, at(P_OFFSET_MS), half(P_HALF_MS), P_AMP);
        add_bump(&mut x, at(T_OFFSET_MS), half(T_HALF_MS), T_AMP);
    }
    Ok(x)
}

/// Writes `fs=<Hz>` then one sample per line (shortest round-trip float
/// form, so reading back reproduces the samples bit-exactly).
pub fn write_signal_csv(
    path: &Path,
    samples: &[f64],
    sampling_rate: u32,
) -> Result<(), GatewayError> {
    let mut out = format!("fs={sampling_rate}\n");
    for v in samples {
        out.push_str(&format!("{v}\n"));
    }
    std::fs::write(path, out).map_err(|source| GatewayError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads a signal file; returns the samples and the header sampling rate.
/// An empty body (header only) is a valid empty stream.
pub fn read_signal_csv(path: &Path) -> Result<(Vec<f64>, u32), GatewayError> {
    let text = std::fs::read_to_string(path).map_err(|source| GatewayError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let path_str = path.display().to_string();
    let mut lines = text.lines().enumerate();
    let sampling_rate = loop {
        match lines.next() {
            Some((_, line)) if line.trim().is_empty() => continue,
            Some((i, line)) => {
                let rate = line
                    .trim()
                    .strip_prefix("fs=")
                    .and_then(|v| v.parse::<u32>().ok())
                    .filter(|&v| v > 0)
                    .ok_or_else(|| GatewayError::Malformed {
                        path: path_str.clone(),
                        reason: format!("line {}: expected header fs=<Hz>, got {line:?}", i + 1),
                    })?;
                break rate;
            }
            None => {
                return Err(GatewayError::Malformed {
                    path: path_str,
                    reason: "missing fs=<Hz> header".into(),
                })
            }
        }
    };
    let mut samples = Vec::new();
    for (i, line) in lines {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let v: f64 = trimmed.parse().map_err(|_| GatewayError::Malformed {
            path: path_str.clone(),
            reason: format!("line {}: unparseable sample {trimmed:?}", i + 1),
        })?;
        if !v.is_finite() {
            return Err(GatewayError::Malformed {
                path: path_str.clone(),
                reason: format!("line {}: non-finite sample", i + 1),
            });
        }
        samples.push(v);
    }
    Ok((samples, sampling_rate))
}
