//! Micro-benchmarks for the pluggable KEM and signature schemes.

use std::time::Instant;

use egw_canon::sha256_parts;
use serde::{Deserialize, Serialize};

use crate::schemes::{KemScheme, SignatureScheme};
use crate::AccessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub operation: String,
    pub iterations: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub kem_algorithm: String,
    pub signature_algorithm: String,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    /// Stable JSON form (object keys sorted).
    pub fn to_json(&self) -> String {
        serde_json::to_value(self).expect("report serializes").to_string()
    }

    /// Plain-text table for terminal output.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "kem={} signature={}\n{:<18} {:>10} {:>12} {:>12} {:>12}\n",
            self.kem_algorithm,
            self.signature_algorithm,
            "operation",
            "iterations",
            "mean_ms",
            "p50_ms",
            "p95_ms"
        );
        for row in &self.rows {
            out.push_str(&format!(
                "{:<18} {:>10} {:>12.4} {:>12.4} {:>12.4}\n",
                row.operation, row.iterations, row.mean_ms, row.p50_ms, row.p95_ms
            ));
        }
        out
    }
}

/// Mean and nearest-rank percentiles (p50, p95) of a non-empty sample set.
pub fn summarize(samples: &[f64]) -> (f64, f64, f64) {
    assert!(!samples.is_empty(), "summarize requires at least one sample");
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let rank = |p: f64| -> f64 {
        let idx = (p * sorted.len() as f64).ceil() as usize;
        sorted[idx.clamp(1, sorted.len()) - 1]
    };
    (mean, rank(0.50), rank(0.95))
}

fn time_op<F: FnMut(usize)>(iterations: usize, mut op: F) -> Vec<f64> {
    (0..iterations)
        .map(|i| {
            let start = Instant::now();
            op(i);
            start.elapsed().as_secs_f64() * 1e3
        })
        .collect()
}

fn row(operation: &str, samples: &[f64]) -> BenchRow {
    let (mean_ms, p50_ms, p95_ms) = summarize(samples);
    BenchRow {
        operation: operation.to_string(),
        iterations: samples.len(),
        mean_ms,
        p50_ms,
        p95_ms,
    }
}

/// Time keygen/encapsulate/decapsulate for `kem` and keygen/sign/verify for
/// `sig`, `iterations` times each, seeding every keypair deterministically
/// from `seed`.
pub fn bench_crypto(
    kem: &dyn KemScheme,
    sig: &dyn SignatureScheme,
    iterations: usize,
    seed: &[u8; 32],
) -> Result<BenchReport, AccessError> {
    if iterations == 0 {
        return Err(AccessError::InvalidParameter(
            "bench_crypto requires iterations >= 1".into(),
        ));
    }
    let subseed = |label: &[u8], i: usize| sha256_parts(&[label, seed, &i.to_be_bytes()]).0;

    let kem_keygen = time_op(iterations, |i| {
        kem.generate(&subseed(b"bench/kem-keygen", i)).expect("kem keygen");
    });
    let keypair = kem.generate(&subseed(b"bench/kem-fixed", 0))?;
    let kem_encapsulate = time_op(iterations, |i| {
        kem.encapsulate(&keypair.public_key, &subseed(b"bench/kem-encap", i))
            .expect("kem encapsulate");
    });
    let encapsulations: Vec<_> = (0..iterations)
        .map(|i| kem.encapsulate(&keypair.public_key, &subseed(b"bench/kem-encap", i)))
        .collect::<Result<_, _>>()?;
    let kem_decapsulate = time_op(iterations, |i| {
        kem.decapsulate(&keypair, &encapsulations[i].ciphertext).expect("kem decapsulate");
    });

    let sig_keygen = time_op(iterations, |i| {
        sig.generate(&subseed(b"bench/sig-keygen", i)).expect("sig keygen");
    });
    let signer = sig.generate(&subseed(b"bench/sig-fixed", 0))?;
    let messages: Vec<Vec<u8>> =
        (0..iterations).map(|i| subseed(b"bench/message", i).to_vec()).collect();
    let sig_sign = time_op(iterations, |i| {
        sig.sign(&signer, &messages[i]).expect("sign");
    });
    let signatures: Vec<Vec<u8>> = messages
        .iter()
        .map(|m| sig.sign(&signer, m))
        .collect::<Result<_, _>>()?;
    let sig_verify = time_op(iterations, |i| {
        assert!(sig.verify(&signer.verification_key, &messages[i], &signatures[i]));
    });

    Ok(BenchReport {
        kem_algorithm: kem.algorithm_id().to_string(),
        signature_algorithm: sig.algorithm_id().to_string(),
        rows: vec![
            row("kem_keygen", &kem_keygen),
            row("kem_encapsulate", &kem_encapsulate),
            row("kem_decapsulate", &kem_decapsulate),
            row("sig_keygen", &sig_keygen),
            row("sig_sign", &sig_sign),
            row("sig_verify", &sig_verify),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schemes::{BuiltinKem, BuiltinSignature};

    #[test]
    fn test_summarize_fixed_numbers() {
        // Nearest-rank on [1..10]: p50 -> 5th value, p95 -> ceil(9.5)=10th.
        let samples: Vec<f64> = (1..=10).map(f64::from).collect();
        let (mean, p50, p95) = summarize(&samples);
        assert!((mean - 5.5).abs() < 1e-12);
        assert_eq!(p50, 5.0);
        assert_eq!(p95, 10.0);

        let (mean, p50, p95) = summarize(&[4.0]);
        assert_eq!((mean, p50, p95), (4.0, 4.0, 4.0));

        // Unsorted input is handled.
        let (_, p50, p95) = summarize(&[9.0, 1.0, 5.0]);
        assert_eq!(p50, 5.0);
        assert_eq!(p95, 9.0);
    }

    #[test]
    fn test_bench_report_structure() {
        let report = bench_crypto(&BuiltinKem, &BuiltinSignature, 1, &[3u8; 32]).unwrap();
        let names: Vec<&str> = report.rows.iter().map(|r| r.operation.as_str()).collect();
        assert_eq!(
            names,
            [
                "kem_keygen",
                "kem_encapsulate",
                "kem_decapsulate",
                "sig_keygen",
                "sig_sign",
                "sig_verify"
            ]
        );
        for r in &report.rows {
            assert_eq!(r.iterations, 1);
            // With a single sample all three statistics coincide.
            assert_eq!(r.mean_ms, r.p50_ms);
            assert_eq!(r.p50_ms, r.p95_ms);
            assert!(r.mean_ms > 0.0);
        }
        let json = report.to_json();
        assert!(json.contains("\"kem_algorithm\":"));
        let table = report.to_table();
        assert!(table.contains("kem_decapsulate"));
    }

    #[test]
    fn test_bench_rejects_zero_iterations() {
        assert!(matches!(
            bench_crypto(&BuiltinKem, &BuiltinSignature, 0, &[0u8; 32]),
            Err(AccessError::InvalidParameter(_))
        ));
    }
}
