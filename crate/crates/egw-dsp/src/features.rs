//! Per-beat timing features derived from wave marks.

use serde::{Deserialize, Serialize};

use crate::{validate_samples, DspError, EcgSignal, WaveMarks};

/// Timing features for one complete beat (an R peak and its successor).
///
/// Durations that cannot be measured — missing P/T mark, half-amplitude edge
/// not found within its search span, or a negative interval — are `None`
/// rather than zero, so downstream consumers can tell "absent" from "tiny".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatFeatures {
    pub qrs_ms: Option<f64>,
    pub t_ms: Option<f64>,
    pub rr_s: f64,
    pub pr_ms: Option<f64>,
    pub st_ms: Option<f64>,
    pub hr_bpm: f64,
}

/// How far from a peak the half-amplitude edge search walks before giving up.
const QRS_EDGE_SPAN_MS: f64 = 120.0;
const T_EDGE_SPAN_MS: f64 = 200.0;
/// Maximum P-to-R separation considered part of the same beat.
const PR_MAX_MS: f64 = 240.0;

/// Computes one [`BeatFeatures`] per consecutive R-peak pair.
///
/// QRS and T-wave durations are half-amplitude widths around the respective
/// peak; PR spans the P peak to the R peak; ST spans the QRS offset to the
/// T-wave onset. `heart_rate = 60 / rr` always holds for the returned beats.
pub fn extract_features(signal: &EcgSignal, marks: &WaveMarks) -> Result<Vec<BeatFeatures>, DspError> {
    validate_samples(&signal.samples)?;
    let x = &signal.samples;
    let fs = signal.sampling_rate as f64;
    for list in [&marks.r_peaks, &marks.p_peaks, &marks.t_peaks] {
        if list.iter().any(|&i| i >= x.len()) {
            return Err(DspError::InvalidParameter("wave mark out of signal bounds".into()));
        }
        if list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DspError::InvalidParameter("wave marks must be strictly increasing".into()));
        }
    }

    let ms = |samples: f64| samples / fs * 1000.0;
    let span = |span_ms: f64| (span_ms / 1000.0 * fs).round() as usize;

    let mut beats = Vec::new();
    for pair in marks.r_peaks.windows(2) {
        let (r, next_r) = (pair[0], pair[1]);
        let rr_s = (next_r - r) as f64 / fs;
        let hr_bpm = 60.0 / rr_s;

        let qrs = half_amplitude_width(x, r, span(QRS_EDGE_SPAN_MS));
        let qrs_ms = qrs.map(|(lo, hi)| ms((hi - lo) as f64));

        let t_peak = marks.t_peaks.iter().copied().find(|&t| t > r && t < next_r);
        let t_edges = t_peak.and_then(|t| half_amplitude_width(x, t, span(T_EDGE_SPAN_MS)));
        let t_ms = t_edges.map(|(lo, hi)| ms((hi - lo) as f64));

        let p_peak = marks
            .p_peaks
            .iter()
            .copied()
            .filter(|&p| p < r && (r - p) <= span(PR_MAX_MS))
            .last();
        let pr_ms = p_peak.map(|p| ms((r - p) as f64));

        let st_ms = match (qrs, t_edges) {
            (Some((_, qrs_end)), Some((t_start, _))) if t_start >= qrs_end => {
                Some(ms((t_start - qrs_end) as f64))
            }
            _ => None,
        };

        beats.push(BeatFeatures { qrs_ms, t_ms, rr_s, pr_ms, st_ms, hr_bpm });
    }
    Ok(beats)
}

/// Walks outward from `peak` while samples stay at or above half the peak
/// amplitude. Returns `(first, last)` sample indices of the above-half region,
/// or `None` when either side fails to drop below half within `max_walk`
/// samples (e.g. a flat signal has no measurable width).
fn half_amplitude_width(x: &[f64], peak: usize, max_walk: usize) -> Option<(usize, usize)> {
    let half = x[peak] / 2.0;
    if !half.is_finite() || x[peak] <= 0.0 {
        return None;
    }

    let mut lo = peak;
    loop {
        if peak - lo > max_walk {
            return None;
        }
        if lo == 0 {
            break;
        }
        if x[lo - 1] < half {
            break;
        }
        lo -= 1;
    }

    let mut hi = peak;
    loop {
        if hi - peak > max_walk {
            return None;
        }
        if hi + 1 == x.len() {
            break;
        }
        if x[hi + 1] < half {
            break;
        }
        hi += 1;
    }
    Some((lo, hi))
}

/// Renders features as CSV with header `qrs_ms,t_ms,rr_s,pr_ms,st_ms,hr_bpm`;
/// absent durations become empty fields.
pub fn features_to_csv(beats: &[BeatFeatures]) -> String {
    let mut out = String::from("qrs_ms,t_ms,rr_s,pr_ms,st_ms,hr_bpm\n");
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for b in beats {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            cell(b.qrs_ms),
            cell(b.t_ms),
            b.rr_s,
            cell(b.pr_ms),
            cell(b.st_ms),
            b.hr_bpm
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(samples: Vec<f64>, fs: u32) -> EcgSignal {
        EcgSignal::new(samples, fs).unwrap()
    }

    fn marks(r: Vec<usize>, p: Vec<usize>, t: Vec<usize>) -> WaveMarks {
        WaveMarks { r_peaks: r, p_peaks: p, t_peaks: t }
    }

    #[test]
    fn test_two_r_peaks_without_p_t_give_rr_and_hr_only() {
        // Flat signal: half-amplitude edges never drop below half, so every
        // width-based duration is absent; only RR/HR are measurable.
        let s = sig(vec![1.0; 1200], 500);
        let beats = extract_features(&s, &marks(vec![100, 600], vec![], vec![])).unwrap();
        assert_eq!(beats.len(), 1);
        let b = &beats[0];
        assert_eq!(b.rr_s, 1.0);
        assert_eq!(b.hr_bpm, 60.0);
        assert_eq!(b.qrs_ms, None);
        assert_eq!(b.t_ms, None);
        assert_eq!(b.pr_ms, None);
        assert_eq!(b.st_ms, None);
    }

    #[test]
    fn test_heart_rate_is_sixty_over_rr() {
        let s = sig(vec![0.0; 4000], 500);
        let beats = extract_features(&s, &marks(vec![0, 375, 1125], vec![], vec![])).unwrap();
        assert_eq!(beats.len(), 2);
        for b in &beats {
            assert_eq!(b.hr_bpm, 60.0 / b.rr_s);
        }
        assert_eq!(beats[0].hr_bpm, 80.0);
        assert_eq!(beats[1].rr_s, 1.5);
    }

    #[test]
    fn test_half_amplitude_widths_on_shaped_beat() {
        let fs = 500u32;
        let mut x = vec![0.0; 1500];
        // Rectangular-ish QRS: 5 samples (10 ms) above half amplitude.
        for i in 300..305 {
            x[i] = 1.5;
        }
        // T bump: 11 samples (22 ms) wide plateau at 0.3.
        for i in 400..411 {
            x[i] = 0.3;
        }
        // P bump 39 samples before the first R (P belongs to the beat whose
        // R it precedes).
        for i in 260..263 {
            x[i] = 0.2;
        }
        for i in 700..705 {
            x[i] = 1.5;
        }
        let m = marks(vec![300, 700], vec![261], vec![405]);
        let beats = extract_features(&sig(x, fs), &m).unwrap();
        let b = &beats[0];
        assert_eq!(b.qrs_ms, Some(8.0)); // indices 300..=304 -> 4 intervals
        assert_eq!(b.t_ms, Some(20.0)); // indices 400..=410 -> 10 intervals
        assert_eq!(b.pr_ms, Some((300.0 - 261.0) / 500.0 * 1000.0));
        // ST: QRS ends at 304, T starts at 400 -> 96 samples = 192 ms.
        assert_eq!(b.st_ms, Some(192.0));
        assert!(b.st_ms.unwrap() >= 0.0);
    }

    #[test]
    fn test_t_mark_outside_beat_is_ignored() {
        let mut x = vec![0.0; 2000];
        x[100] = 1.5;
        x[900] = 1.5;
        x[950] = 0.4; // after the second R: belongs to no complete beat here
        let m = marks(vec![100, 900], vec![], vec![950]);
        let beats = extract_features(&sig(x, 500), &m).unwrap();
        assert_eq!(beats[0].t_ms, None);
        assert_eq!(beats[0].st_ms, None);
    }

    #[test]
    fn test_mark_validation() {
        let s = sig(vec![0.0; 100], 500);
        assert!(extract_features(&s, &marks(vec![5, 200], vec![], vec![])).is_err());
        assert!(extract_features(&s, &marks(vec![7, 7], vec![], vec![])).is_err());
        // No complete beat -> empty features, not an error.
        assert!(extract_features(&s, &marks(vec![50], vec![], vec![])).unwrap().is_empty());
    }

    #[test]
    fn test_csv_rendering_with_absent_fields() {
        let beats = vec![BeatFeatures {
            qrs_ms: Some(8.0),
            t_ms: None,
            rr_s: 0.75,
            pr_ms: None,
            st_ms: None,
            hr_bpm: 80.0,
        }];
        let csv = features_to_csv(&beats);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "qrs_ms,t_ms,rr_s,pr_ms,st_ms,hr_bpm");
        assert_eq!(lines.next().unwrap(), "8,,0.75,,,80");
    }
}
