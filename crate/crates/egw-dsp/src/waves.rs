//! Threshold-based P/R/T wave detection.

use serde::{Deserialize, Serialize};

use crate::{validate_samples, DspError, EcgSignal};

/// Detection thresholds in millivolts plus the R-R refractory period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveThresholds {
    pub r_mv: f64,
    pub p_mv: f64,
    pub t_mv: f64,
    pub refractory_ms: f64,
}

impl Default for WaveThresholds {
    fn default() -> Self {
        WaveThresholds { r_mv: 1.0, p_mv: 0.08, t_mv: 0.1, refractory_ms: 200.0 }
    }
}

/// Sample indices of detected waves, each list strictly increasing.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaveMarks {
    pub r_peaks: Vec<usize>,
    pub p_peaks: Vec<usize>,
    pub t_peaks: Vec<usize>,
}

/// P-wave search window relative to the R peak, in milliseconds.
const P_WINDOW_MS: (f64, f64) = (-240.0, -40.0);
/// T-wave search window relative to the R peak, in milliseconds.
const T_WINDOW_MS: (f64, f64) = (80.0, 400.0);

/// Finds R peaks above `thresholds.r_mv` (refractory-limited), then searches
/// the fixed windows before/after each R for the largest local maximum above
/// the P/T thresholds. A signal with no qualifying peaks yields empty marks.
pub fn detect_waves(signal: &EcgSignal, thresholds: &WaveThresholds) -> Result<WaveMarks, DspError> {
    validate_samples(&signal.samples)?;
    if !(thresholds.refractory_ms >= 0.0
        && thresholds.r_mv.is_finite()
        && thresholds.p_mv.is_finite()
        && thresholds.t_mv.is_finite())
    {
        return Err(DspError::InvalidParameter("thresholds must be finite, refractory >= 0".into()));
    }
    let x = &signal.samples;
    let fs = signal.sampling_rate as f64;
    let refractory = (thresholds.refractory_ms / 1000.0 * fs).round() as usize;

    let mut r_peaks: Vec<usize> = Vec::new();
    for i in 0..x.len() {
        if !(is_local_max(x, i) && x[i] > thresholds.r_mv) {
            continue;
        }
        match r_peaks.last().copied() {
            Some(last) if i - last < refractory.max(1) => {
                // Keep the taller of two peaks closer than the refractory period.
                if x[i] > x[last] {
                    *r_peaks.last_mut().unwrap() = i;
                }
            }
            _ => r_peaks.push(i),
        }
    }

    let ms_to_offset = |ms: f64| (ms / 1000.0 * fs).round() as i64;
    let mut p_peaks = std::collections::BTreeSet::new();
    let mut t_peaks = std::collections::BTreeSet::new();
    for &r in &r_peaks {
        if let Some(p) = best_peak_in_window(
            x,
            r as i64 + ms_to_offset(P_WINDOW_MS.0),
            r as i64 + ms_to_offset(P_WINDOW_MS.1),
            thresholds.p_mv,
        ) {
            p_peaks.insert(p);
        }
        if let Some(t) = best_peak_in_window(
            x,
            r as i64 + ms_to_offset(T_WINDOW_MS.0),
            r as i64 + ms_to_offset(T_WINDOW_MS.1),
            thresholds.t_mv,
        ) {
            t_peaks.insert(t);
        }
    }

    Ok(WaveMarks {
        r_peaks,
        p_peaks: p_peaks.into_iter().collect(),
        t_peaks: t_peaks.into_iter().collect(),
    })
}

/// Instantaneous heart rate per R-R interval: `60 / rr_seconds`, one value per
/// consecutive R pair. Fewer than two peaks yield an empty series.
pub fn heart_rate(r_peaks: &[usize], sampling_rate: u32) -> Result<Vec<f64>, DspError> {
    if sampling_rate == 0 {
        return Err(DspError::InvalidParameter("sampling_rate must be > 0".into()));
    }
    let fs = sampling_rate as f64;
    r_peaks
        .windows(2)
        .map(|pair| {
            if pair[1] <= pair[0] {
                return Err(DspError::InvalidParameter(
                    "r_peaks must be strictly increasing".into(),
                ));
            }
            let rr_s = (pair[1] - pair[0]) as f64 / fs;
            Ok(60.0 / rr_s)
        })
        .collect()
}

fn is_local_max(x: &[f64], i: usize) -> bool {
    let left_ok = i == 0 || x[i] > x[i - 1];
    let right_ok = i + 1 == x.len() || x[i] >= x[i + 1];
    // Interior plateaus count once, at their left edge; lone boundary samples
    // only count when they dominate their single neighbor.
    left_ok && right_ok && x.len() > 1
}

fn best_peak_in_window(x: &[f64], lo: i64, hi: i64, threshold: f64) -> Option<usize> {
    let lo = lo.max(0) as usize;
    let hi = (hi.min(x.len() as i64 - 1)).max(-1);
    if hi < 0 {
        return None;
    }
    let mut best: Option<usize> = None;
    for i in lo..=hi as usize {
        if is_local_max(x, i) && x[i] > threshold {
            if best.map_or(true, |b| x[i] > x[b]) {
                best = Some(i);
            }
        }
    }
    best
}
