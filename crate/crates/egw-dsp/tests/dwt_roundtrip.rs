//! Reconstruction and band-size guarantees for the wavelet transform,
//! checked against brute-force expectations rather than the transform's own
//! bookkeeping.

use egw_dsp::{dwt, idwt, payload_reduction};
use proptest::prelude::*;

/// Deterministic pseudo-random signal, independent of the crate's RNG choices.
fn lcg_signal(len: usize, seed: u64) -> Vec<f64> {
    let mut state = seed.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
    (0..len)
        .map(|_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            // Map the top bits to [-2, 2).
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 4.0 - 2.0
        })
        .collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn test_roundtrip_across_lengths_and_levels() {
    let mut lengths: Vec<usize> = (32..=64).collect();
    lengths.extend([100, 187, 333, 1000, 1024, 2047, 4095, 4096]);
    for &n in &lengths {
        for levels in 1..=3 {
            let x = lcg_signal(n, (n * 10 + levels) as u64);
            let coeffs = dwt(&x, levels).unwrap();
            let back = idwt(&coeffs).unwrap();
            let err = max_abs_diff(&x, &back);
            assert!(err < 1e-8, "n={n} levels={levels}: max err {err}");
        }
    }
}

#[test]
fn test_band_lengths_follow_ceil_halving() {
    for &n in &[32usize, 33, 187, 500, 501, 4096] {
        let x = lcg_signal(n, n as u64);
        let coeffs = dwt(&x, 3).unwrap();
        let mut expect = n;
        for level in &coeffs.levels {
            expect = expect.div_ceil(2);
            assert_eq!(level.approx.len(), expect, "n={n}");
            assert_eq!(level.detail.len(), expect, "n={n}");
        }
    }
}

#[test]
fn test_payload_reduction_meets_storage_targets() {
    // A 10 s chunk at 500 Hz: one level halves, two levels quarter.
    assert!((payload_reduction(5000, 1) - 0.5).abs() < 1e-12);
    assert!((payload_reduction(5000, 2) - 0.75).abs() < 1e-12);
    for n in [187usize, 999, 5000] {
        assert!(payload_reduction(n, 1) >= 0.49, "n={n}");
        assert!(payload_reduction(n, 2) >= 0.74, "n={n}");
    }
}

#[test]
fn test_energy_is_preserved_on_even_lengths() {
    // The periodized analysis operator is orthogonal for even lengths, so
    // coefficient energy must match signal energy (Parseval).
    for &n in &[64usize, 500, 1024] {
        let x = lcg_signal(n, 99 + n as u64);
        let coeffs = dwt(&x, 1).unwrap();
        let sig_energy: f64 = x.iter().map(|v| v * v).sum();
        let coeff_energy: f64 = coeffs.levels[0]
            .approx
            .iter()
            .chain(coeffs.levels[0].detail.iter())
            .map(|v| v * v)
            .sum();
        assert!((sig_energy - coeff_energy).abs() < 1e-8 * sig_energy.max(1.0), "n={n}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn prop_roundtrip_within_tolerance(
        len in 8usize..512,
        levels in 1usize..=3,
        seed in any::<u32>(),
    ) {
        prop_assume!(len >= (1 << levels));
        let x = lcg_signal(len, seed as u64);
        let coeffs = dwt(&x, levels).unwrap();
        let back = idwt(&coeffs).unwrap();
        prop_assert!(max_abs_diff(&x, &back) < 1e-8);
    }
}
