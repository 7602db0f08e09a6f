//! ECG digital signal processing for the edge gateway.
//!
//! The pipeline is: [`preprocess`] (baseline high-pass + moving-average
//! low-pass), [`dwt`]/[`idwt`] (periodized db4 wavelet analysis used for
//! storage compression), [`detect_waves`] (threshold P/R/T detection) and
//! [`extract_features`] (per-beat durations and heart rate).
//!
//! All routines are deterministic and operate on plain `f64` sample buffers;
//! amplitudes are interpreted as millivolts.

mod features;
mod filter;
mod wavelet;
mod waves;

pub use features::{extract_features, features_to_csv, BeatFeatures};
pub use filter::preprocess;
pub use wavelet::{dwt, idwt, payload_reduction, retained_lengths, WaveletCoeffs, WaveletLevel, DB4_WAVELET_ID};
pub use waves::{detect_waves, heart_rate, WaveMarks, WaveThresholds};

#[derive(Debug, thiserror::Error)]
pub enum DspError {
    #[error("signal is empty")]
    EmptyInput,
    #[error("signal contains a non-finite sample at index {0}")]
    NonFiniteSample(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("signal too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("malformed wavelet coefficients: {0}")]
    MalformedCoefficients(String),
    #[error("unsupported wavelet id {0:?} (this build understands {1:?})")]
    UnsupportedWavelet(String, &'static str),
}

/// A sampled single-lead ECG trace. Amplitudes in millivolts.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EcgSignal {
    pub samples: Vec<f64>,
    pub sampling_rate: u32,
}

impl EcgSignal {
    pub fn new(samples: Vec<f64>, sampling_rate: u32) -> Result<Self, DspError> {
        if sampling_rate == 0 {
            return Err(DspError::InvalidParameter("sampling_rate must be > 0".into()));
        }
        validate_samples(&samples)?;
        Ok(EcgSignal { samples, sampling_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Duration covered by the samples, in seconds.
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sampling_rate as f64
    }
}

pub(crate) fn validate_samples(samples: &[f64]) -> Result<(), DspError> {
    if samples.is_empty() {
        return Err(DspError::EmptyInput);
    }
    if let Some(idx) = samples.iter().position(|v| !v.is_finite()) {
        return Err(DspError::NonFiniteSample(idx));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_signal_constructor_validates() {
        assert!(matches!(EcgSignal::new(vec![], 500), Err(DspError::EmptyInput)));
        assert!(matches!(EcgSignal::new(vec![1.0], 0), Err(DspError::InvalidParameter(_))));
        assert!(matches!(
            EcgSignal::new(vec![0.0, f64::NAN], 500),
            Err(DspError::NonFiniteSample(1))
        ));
        let s = EcgSignal::new(vec![0.0; 1000], 500).unwrap();
        assert_eq!(s.duration_s(), 2.0);
    }
}
