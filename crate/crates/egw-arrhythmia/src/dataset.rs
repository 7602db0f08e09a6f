//! CSV beat datasets and sampling strategies.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::{ArrhythmiaError, NUM_CLASSES};

/// One labelled heartbeat: a fixed-length amplitude vector plus a class label.
#[derive(Debug, Clone, PartialEq)]
pub struct BeatRecord {
    pub samples: Vec<f64>,
    pub label: u8,
}

impl BeatRecord {
    pub fn new(samples: Vec<f64>, label: u8) -> Result<Self, ArrhythmiaError> {
        if label as usize >= NUM_CLASSES {
            return Err(ArrhythmiaError::Data(format!(
                "label {label} out of range 0..{NUM_CLASSES}"
            )));
        }
        if samples.is_empty() {
            return Err(ArrhythmiaError::Data("beat has no samples".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(ArrhythmiaError::Data(format!("non-finite sample at index {i}")));
        }
        Ok(BeatRecord { samples, label })
    }
}

/// Parse a headerless CSV of `sample_len` float columns plus an integer label
/// column. Every malformed row is reported with its 1-based row number.
pub fn load_beats(path: &Path, sample_len: usize) -> Result<Vec<BeatRecord>, ArrhythmiaError> {
    let text = std::fs::read_to_string(path).map_err(|e| ArrhythmiaError::io(path, e))?;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let row = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let fail = |reason: String| ArrhythmiaError::Format {
            path: path.display().to_string(),
            row,
            reason,
        };
        if fields.len() != sample_len + 1 {
            return Err(fail(format!(
                "expected {} columns ({sample_len} samples + label), found {}",
                sample_len + 1,
                fields.len()
            )));
        }
        let mut samples = Vec::with_capacity(sample_len);
        for (col, field) in fields[..sample_len].iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| fail(format!("column {}: not a number: {field:?}", col + 1)))?;
            if !v.is_finite() {
                return Err(fail(format!("column {}: non-finite sample", col + 1)));
            }
            samples.push(v);
        }
        let label_field = fields[sample_len].trim();
        // Tolerate float-formatted labels ("4.0"): several published exports
        // of this dataset write the class column that way.
        let label_value: f64 = label_field
            .parse()
            .map_err(|_| fail(format!("label column: not a number: {label_field:?}")))?;
        let label = label_value as u8;
        if label as f64 != label_value || label as usize >= NUM_CLASSES {
            return Err(fail(format!(
                "label column: {label_field:?} is not an integer in 0..{NUM_CLASSES}"
            )));
        }
        records.push(BeatRecord { samples, label });
    }
    Ok(records)
}

/// Write beats in the same CSV shape `load_beats` reads.
pub fn write_beats(path: &Path, records: &[BeatRecord]) -> Result<(), ArrhythmiaError> {
    let mut out = String::new();
    for rec in records {
        for s in &rec.samples {
            // Shortest roundtrip form keeps files compact and reload-exact.
            out.push_str(&format!("{s}"));
            out.push(',');
        }
        out.push_str(&rec.label.to_string());
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| ArrhythmiaError::io(path, e))
}

/// Per-class record counts, indexed by label.
pub fn class_histogram(records: &[BeatRecord]) -> [usize; NUM_CLASSES] {
    let mut counts = [0usize; NUM_CLASSES];
    for rec in records {
        counts[rec.label as usize] += 1;
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SamplingKind {
    Unbalanced,
    Oversampled,
    Undersampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingStrategy {
    pub kind: SamplingKind,
    pub seed: u64,
}

/// Rebalance class counts. `Unbalanced` is the identity; `Oversampled` draws
/// with replacement until every class matches the majority count;
/// `Undersampled` randomly reduces every class to the minority count. The
/// resampled output is grouped by class and fully determined by the seed.
pub fn resample(
    records: &[BeatRecord],
    strategy: &SamplingStrategy,
    num_classes: usize,
) -> Result<Vec<BeatRecord>, ArrhythmiaError> {
    if strategy.kind == SamplingKind::Unbalanced {
        return Ok(records.to_vec());
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, rec) in records.iter().enumerate() {
        let c = rec.label as usize;
        if c >= num_classes {
            return Err(ArrhythmiaError::Data(format!(
                "label {c} out of range for {num_classes} classes"
            )));
        }
        by_class[c].push(i);
    }
    if let Some(empty) = by_class.iter().position(|ids| ids.is_empty()) {
        return Err(ArrhythmiaError::Data(format!(
            "class {empty} has no records; resampling needs every class populated"
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(strategy.seed);
    let mut out = Vec::new();
    match strategy.kind {
        SamplingKind::Unbalanced => unreachable!("handled above"),
        SamplingKind::Oversampled => {
            let majority = by_class.iter().map(Vec::len).max().unwrap_or(0);
            for ids in &by_class {
                out.extend(ids.iter().map(|&i| records[i].clone()));
                for _ in ids.len()..majority {
                    let pick = ids[rng.gen_range(0..ids.len())];
                    out.push(records[pick].clone());
                }
            }
        }
        SamplingKind::Undersampled => {
            let minority = by_class.iter().map(Vec::len).min().unwrap_or(0);
            for ids in &by_class {
                let mut ids = ids.clone();
                ids.shuffle(&mut rng);
                ids.truncate(minority);
                ids.sort_unstable(); // keep original relative order within the class
                out.extend(ids.into_iter().map(|i| records[i].clone()));
            }
        }
    }
    Ok(out)
}

/// Deterministic stratified subset: keeps `fraction` of each class (at least
/// one record per populated class), preserving original relative order.
pub fn stratified_subset(
    records: &[BeatRecord],
    fraction: f64,
    seed: u64,
) -> Result<Vec<BeatRecord>, ArrhythmiaError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(ArrhythmiaError::Data(format!(
            "subset fraction must lie in [0, 1], got {fraction}"
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); NUM_CLASSES];
    for (i, rec) in records.iter().enumerate() {
        by_class[rec.label as usize].push(i);
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut keep = Vec::new();
    for ids in &by_class {
        if ids.is_empty() {
            continue;
        }
        let want = ((ids.len() as f64 * fraction).round() as usize).clamp(1, ids.len());
        let mut ids = ids.clone();
        ids.shuffle(&mut rng);
        ids.truncate(want);
        keep.extend(ids);
    }
    keep.sort_unstable();
    Ok(keep.into_iter().map(|i| records[i].clone()).collect())
}
