//! Spectral behavior of `preprocess`, measured with a direct single-bin DFT
//! so the check does not depend on any filter internals.

use egw_dsp::{preprocess, EcgSignal};

/// Magnitude of the DFT of `x` at frequency `hz` (direct correlation).
fn dft_magnitude(x: &[f64], fs: f64, hz: f64) -> f64 {
    let n = x.len() as f64;
    let mut re = 0.0;
    let mut im = 0.0;
    for (i, &v) in x.iter().enumerate() {
        let phase = 2.0 * std::f64::consts::PI * hz * i as f64 / fs;
        re += v * phase.cos();
        im -= v * phase.sin();
    }
    (re * re + im * im).sqrt() / n
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

fn db(ratio: f64) -> f64 {
    20.0 * ratio.log10()
}

/// DC + in-band 8 Hz tone + 50 Hz mains on a 10 s, 500 Hz trace.
fn contaminated_signal() -> EcgSignal {
    let fs = 500u32;
    let samples: Vec<f64> = (0..5000)
        .map(|i| {
            let t = i as f64 / fs as f64;
            0.8 + (2.0 * std::f64::consts::PI * 8.0 * t).sin()
                + 0.6 * (2.0 * std::f64::consts::PI * 50.0 * t).sin()
        })
        .collect();
    EcgSignal::new(samples, fs).unwrap()
}

#[test]
fn test_mains_and_dc_attenuated_at_least_20_db() {
    let raw = contaminated_signal();
    let fs = raw.sampling_rate as f64;
    // ma_window = fs / 50 puts the moving-average null exactly on mains.
    let filtered = preprocess(&raw, 0.5, 40.0, 10).unwrap();

    let mains_before = dft_magnitude(&raw.samples, fs, 50.0);
    let mains_after = dft_magnitude(&filtered.samples, fs, 50.0);
    let mains_drop = db(mains_after / mains_before);
    assert!(mains_drop <= -20.0, "50 Hz only dropped {mains_drop:.1} dB");

    let dc_before = dft_magnitude(&raw.samples, fs, 0.0);
    let dc_after = dft_magnitude(&filtered.samples, fs, 0.0);
    let dc_drop = db(dc_after / dc_before);
    assert!(dc_drop <= -20.0, "DC only dropped {dc_drop:.1} dB");
}

#[test]
fn test_in_band_tone_survives() {
    let raw = contaminated_signal();
    let fs = raw.sampling_rate as f64;
    let filtered = preprocess(&raw, 0.5, 40.0, 10).unwrap();
    let before = dft_magnitude(&raw.samples, fs, 8.0);
    let after = dft_magnitude(&filtered.samples, fs, 8.0);
    let change = db(after / before);
    assert!(change > -3.0, "8 Hz passband tone dropped {change:.1} dB");
}

#[test]
fn test_pure_mains_tone_rms_drops_to_tenth() {
    let fs = 500u32;
    let samples: Vec<f64> = (0..5000)
        .map(|i| (2.0 * std::f64::consts::PI * 50.0 * i as f64 / fs as f64).sin())
        .collect();
    let raw = EcgSignal::new(samples, fs).unwrap();
    let filtered = preprocess(&raw, 0.5, 40.0, 10).unwrap();
    assert!(rms(&filtered.samples) <= 0.1 * rms(&raw.samples));
}

#[test]
fn test_in_band_tone_rms_mostly_retained() {
    let fs = 500u32;
    let samples: Vec<f64> = (0..5000)
        .map(|i| (2.0 * std::f64::consts::PI * 5.0 * i as f64 / fs as f64).sin())
        .collect();
    let raw = EcgSignal::new(samples, fs).unwrap();
    let filtered = preprocess(&raw, 0.5, 40.0, 10).unwrap();
    assert!(rms(&filtered.samples) >= 0.7 * rms(&raw.samples));
}

#[test]
fn test_double_preprocess_is_nearly_idempotent() {
    // A tone well inside the passband: filtering an already-filtered signal
    // changes its RMS by under 1%.
    let fs = 500u32;
    let samples: Vec<f64> = (0..5000)
        .map(|i| {
            let t = i as f64 / fs as f64;
            (2.0 * std::f64::consts::PI * 10.0 * t).sin()
                + 0.4 * (2.0 * std::f64::consts::PI * 17.0 * t).sin()
        })
        .collect();
    let raw = EcgSignal::new(samples, fs).unwrap();
    let once = preprocess(&raw, 0.1, 45.0, 2).unwrap();
    let twice = preprocess(&once, 0.1, 45.0, 2).unwrap();
    let rel = (rms(&twice.samples) - rms(&once.samples)).abs() / rms(&once.samples);
    assert!(rel < 0.01, "double filter moved RMS by {:.3}%", rel * 100.0);
}
