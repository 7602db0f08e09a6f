//! Periodized Daubechies-4 discrete wavelet transform.
//!
//! The analysis operator treats each level's input as circular. Because the
//! db4 scaling filter is orthonormal to its even translates, the circular
//! analysis matrix is orthogonal for every even input length, so the adjoint
//! reconstructs exactly (up to f64 rounding). Odd-length inputs are extended
//! by repeating the final sample before analysis and trimmed after synthesis,
//! which keeps every band at exactly `ceil(n / 2)` coefficients.

use serde::{Deserialize, Serialize};

use crate::{validate_samples, DspError};

pub const DB4_WAVELET_ID: &str = "db4";

/// db4 scaling (low-pass) filter, orthonormal form: sum = sqrt(2), norm = 1.
const DB4_LO: [f64; 8] = [
    0.230_377_813_308_896_53,
    0.714_846_570_552_915_7,
    0.630_880_767_929_858_9,
    -0.027_983_769_416_859_854,
    -0.187_034_811_719_093_09,
    0.030_841_381_835_560_764,
    0.032_883_011_666_885_2,
    -0.010_597_401_785_069_032,
];

/// Quadrature-mirror high-pass filter: `g[i] = (-1)^i * lo[7 - i]`.
const DB4_HI: [f64; 8] = [
    -0.010_597_401_785_069_032,
    -0.032_883_011_666_885_2,
    0.030_841_381_835_560_764,
    0.187_034_811_719_093_09,
    -0.027_983_769_416_859_854,
    -0.630_880_767_929_858_9,
    0.714_846_570_552_915_7,
    -0.230_377_813_308_896_53,
];

/// One decomposition level. Both bands hold `ceil(input_len / 2)` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveletLevel {
    pub approx: Vec<f64>,
    pub detail: Vec<f64>,
}

/// Multi-level decomposition of a signal.
///
/// `levels[0]` is the first (finest) level; each deeper level decomposes the
/// previous approximation band. `original_length` lets [`idwt`] trim the
/// odd-length padding back off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveletCoeffs {
    pub levels: Vec<WaveletLevel>,
    pub wavelet_id: String,
    pub original_length: usize,
}

impl WaveletCoeffs {
    /// The final approximation band: the payload retained for storage.
    pub fn final_approx(&self) -> &[f64] {
        &self.levels.last().expect("levels is never empty").approx
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }
}

/// Expected input length of each level for a signal of `n` samples, followed
/// by the band length of the deepest level. `retained_lengths(10, 2) == [10, 5, 3]`.
pub fn retained_lengths(n: usize, num_levels: usize) -> Vec<usize> {
    let mut lens = Vec::with_capacity(num_levels + 1);
    lens.push(n);
    let mut cur = n;
    for _ in 0..num_levels {
        cur = cur.div_ceil(2);
        lens.push(cur);
    }
    lens
}

/// Fraction of samples shed when only the deepest approximation band is
/// stored: `1 - ceil_halved(n, levels) / n`.
pub fn payload_reduction(n: usize, num_levels: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let retained = *retained_lengths(n, num_levels).last().unwrap();
    1.0 - retained as f64 / n as f64
}

/// Decomposes `signal` into `num_levels` wavelet levels.
pub fn dwt(signal: &[f64], num_levels: usize) -> Result<WaveletCoeffs, DspError> {
    validate_samples(signal)?;
    if num_levels == 0 {
        return Err(DspError::InvalidParameter("num_levels must be >= 1".into()));
    }
    let needed = 1usize << num_levels.min(63);
    if signal.len() < needed {
        return Err(DspError::TooShort { needed, got: signal.len() });
    }

    let mut levels = Vec::with_capacity(num_levels);
    let mut current = signal.to_vec();
    for _ in 0..num_levels {
        let (approx, detail) = analyze_level(&current);
        current = approx.clone();
        levels.push(WaveletLevel { approx, detail });
    }
    Ok(WaveletCoeffs {
        levels,
        wavelet_id: DB4_WAVELET_ID.to_string(),
        original_length: signal.len(),
    })
}

/// Inverts [`dwt`]. Validates band lengths against `original_length` before
/// reconstructing.
pub fn idwt(coeffs: &WaveletCoeffs) -> Result<Vec<f64>, DspError> {
    if coeffs.wavelet_id != DB4_WAVELET_ID {
        return Err(DspError::UnsupportedWavelet(coeffs.wavelet_id.clone(), DB4_WAVELET_ID));
    }
    if coeffs.levels.is_empty() {
        return Err(DspError::MalformedCoefficients("no levels".into()));
    }
    if coeffs.original_length == 0 {
        return Err(DspError::MalformedCoefficients("original_length is zero".into()));
    }
    let lens = retained_lengths(coeffs.original_length, coeffs.levels.len());
    for (i, level) in coeffs.levels.iter().enumerate() {
        let want = lens[i + 1];
        if level.approx.len() != want || level.detail.len() != want {
            return Err(DspError::MalformedCoefficients(format!(
                "level {} bands must each hold {} coefficients (got approx {}, detail {})",
                i,
                want,
                level.approx.len(),
                level.detail.len()
            )));
        }
        for v in level.approx.iter().chain(level.detail.iter()) {
            if !v.is_finite() {
                return Err(DspError::MalformedCoefficients(format!(
                    "level {i} contains a non-finite coefficient"
                )));
            }
        }
    }

    let mut current = coeffs.levels.last().unwrap().approx.clone();
    for (i, level) in coeffs.levels.iter().enumerate().rev() {
        current = synthesize_level(&current, &level.detail, lens[i]);
    }
    Ok(current)
}

fn analyze_level(input: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = input.len();
    let m = if n % 2 == 0 { n } else { n + 1 };
    let half = m / 2;
    // Odd lengths: repeat the last sample (index n counts as index n-1).
    let sample = |j: usize| -> f64 {
        let j = j % m;
        if j < n {
            input[j]
        } else {
            input[n - 1]
        }
    };
    let mut approx = vec![0.0; half];
    let mut detail = vec![0.0; half];
    for k in 0..half {
        let mut a = 0.0;
        let mut d = 0.0;
        for (i, (&lo, &hi)) in DB4_LO.iter().zip(DB4_HI.iter()).enumerate() {
            let v = sample(2 * k + i);
            a += lo * v;
            d += hi * v;
        }
        approx[k] = a;
        detail[k] = d;
    }
    (approx, detail)
}

fn synthesize_level(approx: &[f64], detail: &[f64], out_len: usize) -> Vec<f64> {
    let half = approx.len();
    let m = half * 2;
    let mut out = vec![0.0; m];
    for k in 0..half {
        let a = approx[k];
        let d = detail[k];
        for (i, (&lo, &hi)) in DB4_LO.iter().zip(DB4_HI.iter()).enumerate() {
            let j = (2 * k + i) % m;
            out[j] += lo * a + hi * d;
        }
    }
    out.truncate(out_len);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_db4_filter_identities() {
        let sum: f64 = DB4_LO.iter().sum();
        assert!((sum - std::f64::consts::SQRT_2).abs() < 1e-12);
        let norm: f64 = DB4_LO.iter().map(|v| v * v).sum();
        assert!((norm - 1.0).abs() < 1e-12);
        let hi_sum: f64 = DB4_HI.iter().sum();
        assert!(hi_sum.abs() < 1e-12);
        // Orthogonality to even shifts, which is what makes the circular
        // transform invertible.
        for lag in [2usize, 4, 6] {
            let auto: f64 = (0..8 - lag).map(|i| DB4_LO[i] * DB4_LO[i + lag]).sum();
            assert!(auto.abs() < 1e-12, "lag {lag}: {auto}");
        }
        let cross: f64 = (0..8).map(|i| DB4_LO[i] * DB4_HI[i]).sum();
        assert!(cross.abs() < 1e-12);
    }

    #[test]
    fn test_single_level_roundtrip_even_and_odd() {
        for n in [2usize, 8, 9, 16, 17, 100, 101] {
            let x: Vec<f64> = (0..n).map(|i| ((i * 37 + 11) % 23) as f64 * 0.1 - 1.0).collect();
            let (a, d) = analyze_level(&x);
            assert_eq!(a.len(), n.div_ceil(2));
            assert_eq!(d.len(), n.div_ceil(2));
            let back = synthesize_level(&a, &d, n);
            for (orig, rec) in x.iter().zip(back.iter()) {
                assert!((orig - rec).abs() < 1e-12, "n={n}");
            }
        }
    }

    #[test]
    fn test_band_halving_per_level() {
        let x: Vec<f64> = (0..1024).map(|i| (i as f64 * 0.01).sin()).collect();
        let coeffs = dwt(&x, 3).unwrap();
        assert_eq!(coeffs.levels[0].approx.len(), 512);
        assert_eq!(coeffs.levels[0].detail.len(), 512);
        assert_eq!(coeffs.levels[1].approx.len(), 256);
        assert_eq!(coeffs.levels[2].approx.len(), 128);
        assert_eq!(coeffs.final_approx().len(), 128);

        // Odd-length chain rounds up at every level.
        let y: Vec<f64> = (0..101).map(|i| i as f64).collect();
        let coeffs = dwt(&y, 3).unwrap();
        assert_eq!(coeffs.levels[0].detail.len(), 51);
        assert_eq!(coeffs.levels[1].detail.len(), 26);
        assert_eq!(coeffs.levels[2].detail.len(), 13);
    }

    #[test]
    fn test_constant_signal_has_zero_detail() {
        let x = vec![2.5; 512];
        let coeffs = dwt(&x, 3).unwrap();
        for level in &coeffs.levels {
            for d in &level.detail {
                assert!(d.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn test_zero_coefficients_give_zero_signal() {
        let x = vec![0.0; 64];
        let coeffs = dwt(&x, 2).unwrap();
        let back = idwt(&coeffs).unwrap();
        assert!(back.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn test_dwt_input_validation() {
        assert!(matches!(dwt(&[], 1), Err(DspError::EmptyInput)));
        assert!(matches!(dwt(&[1.0; 16], 0), Err(DspError::InvalidParameter(_))));
        assert!(matches!(
            dwt(&[1.0; 7], 3),
            Err(DspError::TooShort { needed: 8, got: 7 })
        ));
        assert!(matches!(dwt(&[1.0, f64::INFINITY], 1), Err(DspError::NonFiniteSample(1))));
    }

    #[test]
    fn test_idwt_rejects_malformed_structures() {
        let x: Vec<f64> = (0..32).map(|i| i as f64).collect();
        let good = dwt(&x, 2).unwrap();

        let mut wrong_id = good.clone();
        wrong_id.wavelet_id = "haar".into();
        assert!(matches!(idwt(&wrong_id), Err(DspError::UnsupportedWavelet(..))));

        let mut truncated = good.clone();
        truncated.levels[1].detail.pop();
        assert!(matches!(idwt(&truncated), Err(DspError::MalformedCoefficients(_))));

        // 31 ceil-halves identically to 32, so it is structurally consistent;
        // 30 is not (first level would need 15 coefficients, not 16).
        let mut bad_len = good.clone();
        bad_len.original_length = 30;
        assert!(matches!(idwt(&bad_len), Err(DspError::MalformedCoefficients(_))));

        let mut nan = good;
        nan.levels[0].approx[0] = f64::NAN;
        assert!(matches!(idwt(&nan), Err(DspError::MalformedCoefficients(_))));
    }

    #[test]
    fn test_payload_reduction_figures() {
        assert!((payload_reduction(5000, 1) - 0.5).abs() < 1e-12);
        assert!((payload_reduction(5000, 2) - 0.75).abs() < 1e-12);
        // Ceil rounding keeps the figure just under the power-of-two ratio
        // for awkward lengths, never over-reports.
        assert!(payload_reduction(187, 1) >= 0.49);
        assert!(payload_reduction(187, 1) <= 0.5);
        assert_eq!(retained_lengths(10, 2), vec![10, 5, 3]);
    }
}
