//! Baseline-wander and power-line filtering.
//!
//! `preprocess` applies a single-pole RC high-pass at `band_low` followed by a
//! centered moving average of width `ma_window`. The moving average has
//! spectral nulls at multiples of `sampling_rate / ma_window`, so choosing
//! `ma_window = fs / f_mains` rejects mains interference exactly while leaving
//! the sub-`band_high` passband nearly untouched.

use crate::{validate_samples, DspError, EcgSignal};

/// Filters `signal` to the `[band_low, band_high]` passband.
///
/// `band_high` bounds the usable passband: the moving-average first null
/// `fs / ma_window` should sit at or above it. Output length equals input
/// length; a constant input maps to an exactly-zero output.
pub fn preprocess(
    signal: &EcgSignal,
    band_low: f64,
    band_high: f64,
    ma_window: usize,
) -> Result<EcgSignal, DspError> {
    validate_samples(&signal.samples)?;
    let fs = signal.sampling_rate as f64;
    if !(band_low > 0.0 && band_low < band_high && band_high < fs / 2.0) {
        return Err(DspError::InvalidParameter(format!(
            "band must satisfy 0 < low < high < fs/2 (got low={band_low}, high={band_high}, fs={fs})"
        )));
    }
    if ma_window == 0 {
        return Err(DspError::InvalidParameter("ma_window must be >= 1".into()));
    }
    if ma_window > signal.samples.len() {
        return Err(DspError::InvalidParameter(format!(
            "ma_window {} exceeds signal length {}",
            ma_window,
            signal.samples.len()
        )));
    }

    let high_passed = high_pass(&signal.samples, fs, band_low);
    let smoothed = moving_average(&high_passed, ma_window);
    Ok(EcgSignal { samples: smoothed, sampling_rate: signal.sampling_rate })
}

/// Single-pole RC high-pass, state primed so that constant input yields an
/// exactly zero output from the first sample.
fn high_pass(x: &[f64], fs: f64, cutoff_hz: f64) -> Vec<f64> {
    let rc = 1.0 / (2.0 * std::f64::consts::PI * cutoff_hz);
    let dt = 1.0 / fs;
    let alpha = rc / (rc + dt);
    let mut out = Vec::with_capacity(x.len());
    let mut prev_in = x[0];
    let mut prev_out = 0.0;
    for &v in x {
        let y = alpha * (prev_out + v - prev_in);
        out.push(y);
        prev_in = v;
        prev_out = y;
    }
    out
}

/// Centered moving average of width `window`; the window shrinks at the edges
/// so the output keeps the input length.
fn moving_average(x: &[f64], window: usize) -> Vec<f64> {
    let n = x.len();
    let left = (window - 1) / 2;
    let right = window / 2;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(left);
        let hi = (i + right).min(n - 1);
        let sum: f64 = x[lo..=hi].iter().sum();
        out.push(sum / (hi - lo + 1) as f64);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signal(samples: Vec<f64>, fs: u32) -> EcgSignal {
        EcgSignal::new(samples, fs).unwrap()
    }

    #[test]
    fn test_constant_input_maps_to_exact_zero() {
        let s = signal(vec![3.7; 400], 500);
        let out = preprocess(&s, 0.5, 40.0, 10).unwrap();
        assert_eq!(out.samples.len(), 400);
        assert!(out.samples.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn test_output_length_preserved() {
        let s = signal((0..777).map(|i| (i as f64 * 0.21).sin()).collect(), 360);
        let out = preprocess(&s, 0.5, 40.0, 7).unwrap();
        assert_eq!(out.samples.len(), 777);
    }

    #[test]
    fn test_parameter_validation() {
        let s = signal(vec![0.0; 100], 500);
        assert!(matches!(preprocess(&s, 0.0, 40.0, 10), Err(DspError::InvalidParameter(_))));
        assert!(matches!(preprocess(&s, 40.0, 0.5, 10), Err(DspError::InvalidParameter(_))));
        assert!(matches!(preprocess(&s, 0.5, 250.0, 10), Err(DspError::InvalidParameter(_))));
        assert!(matches!(preprocess(&s, 0.5, 40.0, 0), Err(DspError::InvalidParameter(_))));
        assert!(matches!(preprocess(&s, 0.5, 40.0, 101), Err(DspError::InvalidParameter(_))));
    }

    #[test]
    fn test_moving_average_window_one_is_identity() {
        let x = vec![1.0, -2.0, 3.0, 0.5];
        assert_eq!(moving_average(&x, 1), x);
    }

    #[test]
    fn test_moving_average_interior_value() {
        let x = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let out = moving_average(&x, 3);
        assert_eq!(out[2], 3.0);
        // Edge windows shrink instead of zero-padding.
        assert_eq!(out[0], 1.5);
        assert_eq!(out[4], 4.5);
    }
}
