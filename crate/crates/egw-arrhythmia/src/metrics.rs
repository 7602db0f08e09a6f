//! Confusion-matrix evaluation metrics.

use serde::{Deserialize, Serialize};

use crate::ArrhythmiaError;

/// One-vs-rest metrics for a single class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    /// (TP + TN) / total — one-vs-rest accuracy.
    pub accuracy: f64,
    /// TP / (TP + FP); 0 when the class is never predicted.
    pub precision: f64,
    /// TP / (TP + FN); 0 when the class has no test examples.
    pub recall: f64,
    /// Harmonic mean of precision and recall; 0 when both are 0.
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `confusion_matrix[true_class][predicted_class]` counts.
    pub confusion_matrix: Vec<Vec<u64>>,
    /// Row sums: number of test examples per true class.
    pub support: Vec<u64>,
    pub per_class: Vec<ClassMetrics>,
    /// Unweighted mean of the per-class metrics.
    pub macro_avg: ClassMetrics,
    /// Support-weighted mean of the per-class metrics.
    pub weighted_avg: ClassMetrics,
    /// Diagonal sum over total count.
    pub overall_accuracy: f64,
    pub total: u64,
}

/// Derive all metrics from a square confusion matrix
/// (`matrix[true][predicted]`).
pub fn metrics_from_confusion(matrix: &[Vec<u64>]) -> Result<Metrics, ArrhythmiaError> {
    let n = matrix.len();
    if n == 0 || matrix.iter().any(|row| row.len() != n) {
        return Err(ArrhythmiaError::Data("confusion matrix must be square and non-empty".into()));
    }
    let support: Vec<u64> = matrix.iter().map(|row| row.iter().sum()).collect();
    let col_sums: Vec<u64> = (0..n).map(|j| matrix.iter().map(|row| row[j]).sum()).collect();
    let total: u64 = support.iter().sum();
    if total == 0 {
        return Err(ArrhythmiaError::Data("confusion matrix has no observations".into()));
    }
    let diag: u64 = (0..n).map(|i| matrix[i][i]).sum();

    let per_class: Vec<ClassMetrics> = (0..n)
        .map(|c| {
            let tp = matrix[c][c];
            let fp = col_sums[c] - tp;
            let fneg = support[c] - tp;
            let tn = total - tp - fp - fneg;
            let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
            let precision = ratio(tp, col_sums[c]);
            let recall = ratio(tp, support[c]);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics { accuracy: (tp + tn) as f64 / total as f64, precision, recall, f1 }
        })
        .collect();

    let mean = |f: fn(&ClassMetrics) -> f64| -> f64 {
        per_class.iter().map(f).sum::<f64>() / n as f64
    };
    let weighted = |f: fn(&ClassMetrics) -> f64| -> f64 {
        per_class
            .iter()
            .zip(&support)
            .map(|(m, &s)| f(m) * s as f64)
            .sum::<f64>()
            / total as f64
    };
    let macro_avg = ClassMetrics {
        accuracy: mean(|m| m.accuracy),
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
    };
    let weighted_avg = ClassMetrics {
        accuracy: weighted(|m| m.accuracy),
        precision: weighted(|m| m.precision),
        recall: weighted(|m| m.recall),
        f1: weighted(|m| m.f1),
    };

    Ok(Metrics {
        confusion_matrix: matrix.to_vec(),
        support,
        per_class,
        macro_avg,
        weighted_avg,
        overall_accuracy: diag as f64 / total as f64,
        total,
    })
}

/// Machine-readable JSON with alphabetically sorted keys at every level.
pub fn metrics_to_json(metrics: &Metrics) -> String {
    // serde_json's default map is ordered, so converting through `Value`
    // sorts every object's keys.
    let value = serde_json::to_value(metrics).expect("metrics serialize to JSON");
    value.to_string()
}

/// Human-readable report table.
pub fn metrics_report(metrics: &Metrics, class_names: &[&str]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "overall accuracy: {:.4} ({} examples)\n",
        metrics.overall_accuracy, metrics.total
    ));
    out.push_str(&format!(
        "{:<38} {:>8} {:>10} {:>8} {:>8} {:>8}\n",
        "class", "support", "accuracy", "prec", "recall", "f1"
    ));
    for (c, m) in metrics.per_class.iter().enumerate() {
        let name = class_names.get(c).copied().unwrap_or("?");
        out.push_str(&format!(
            "{c}={name:<36} {:>8} {:>10.4} {:>8.4} {:>8.4} {:>8.4}\n",
            metrics.support[c], m.accuracy, m.precision, m.recall, m.f1
        ));
    }
    for (tag, m) in [("macro avg", &metrics.macro_avg), ("weighted avg", &metrics.weighted_avg)] {
        out.push_str(&format!(
            "{tag:<38} {:>8} {:>10.4} {:>8.4} {:>8.4} {:>8.4}\n",
            metrics.total, m.accuracy, m.precision, m.recall, m.f1
        ));
    }
    out.push_str("confusion matrix (rows = true, cols = predicted):\n");
    for row in &metrics.confusion_matrix {
        for cell in row {
            out.push_str(&format!("{cell:>8}"));
        }
        out.push('\n');
    }
    out
}

/// Per-class soft targets from the reference study's performance table
/// (accuracy, precision, recall, F1), in class order, with the short names
/// used there. Printed side by side with measured values; never gated on,
/// because the study leaves training hyperparameters unspecified.
pub const PUBLISHED_CLASS_METRICS: [(&str, [f64; 4]); 5] = [
    ("N", [0.996, 0.991, 0.996, 0.994]),
    ("FPNs", [0.981, 0.992, 0.997, 0.991]),
    ("PVCs", [0.990, 0.989, 0.991, 0.994]),
    ("AP", [0.989, 0.997, 0.996, 0.990]),
    ("FVNs", [0.998, 0.986, 1.000, 0.999]),
];

/// Published macro averages (accuracy, precision, recall, F1).
pub const PUBLISHED_MACRO_AVG: [f64; 4] = [0.9908, 0.991, 0.996, 0.9938];
/// Published weighted averages (accuracy, precision, recall, F1).
pub const PUBLISHED_WEIGHTED_AVG: [f64; 4] = [0.9904, 0.9852, 0.9911, 0.9895];

/// Measured-versus-published side-by-side table. Informational only: the
/// published numbers are soft targets, not a pass/fail gate.
pub fn published_comparison(metrics: &Metrics) -> String {
    let mut out = String::from(
        "per-class comparison against the published table (soft targets, no gate)\n",
    );
    out.push_str(&format!(
        "{:<10} {:>9} {:>9}   {:>9} {:>9}   {:>9} {:>9}   {:>9} {:>9}\n",
        "class",
        "acc", "acc*", "prec", "prec*", "recall", "recall*", "f1", "f1*"
    ));
    let mut row = |name: &str, measured: &ClassMetrics, published: &[f64; 4]| {
        out.push_str(&format!(
            "{name:<10} {:>9.4} {:>9.4}   {:>9.4} {:>9.4}   {:>9.4} {:>9.4}   {:>9.4} {:>9.4}\n",
            measured.accuracy,
            published[0],
            measured.precision,
            published[1],
            measured.recall,
            published[2],
            measured.f1,
            published[3],
        ));
    };
    for ((name, published), measured) in PUBLISHED_CLASS_METRICS.iter().zip(&metrics.per_class) {
        row(name, measured, published);
    }
    row("macro", &metrics.macro_avg, &PUBLISHED_MACRO_AVG);
    row("weighted", &metrics.weighted_avg, &PUBLISHED_WEIGHTED_AVG);
    out.push_str("(* = published value)\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    /// Fixed 5×5 matrix with every metric checked against hand arithmetic.
    #[test]
    fn test_metrics_match_hand_arithmetic_on_fixed_matrix() {
        let m = vec![
            vec![50, 2, 1, 0, 0],
            vec![3, 40, 0, 2, 0],
            vec![0, 1, 30, 0, 4],
            vec![2, 0, 0, 25, 1],
            vec![0, 0, 5, 0, 20],
        ];
        let metrics = metrics_from_confusion(&m).unwrap();
        assert_eq!(metrics.total, 186);
        assert_eq!(metrics.support, vec![53, 45, 35, 28, 25]);
        close(metrics.overall_accuracy, 0.8870967741935484);

        close(metrics.per_class[0].accuracy, 0.956989247311828);
        close(metrics.per_class[0].precision, 0.9090909090909091);
        close(metrics.per_class[0].recall, 0.9433962264150944);
        close(metrics.per_class[0].f1, 0.9259259259259259);

        close(metrics.per_class[1].precision, 0.9302325581395349);
        close(metrics.per_class[1].recall, 0.8888888888888888);
        close(metrics.per_class[1].f1, 0.9090909090909092);

        close(metrics.per_class[2].accuracy, 0.9408602150537635);
        close(metrics.per_class[2].precision, 0.8333333333333334);
        close(metrics.per_class[2].recall, 0.8571428571428571);
        close(metrics.per_class[2].f1, 0.8450704225352113);

        close(metrics.per_class[3].accuracy, 0.9731182795698925);
        close(metrics.per_class[3].precision, 0.9259259259259259);
        close(metrics.per_class[3].recall, 0.8928571428571429);
        close(metrics.per_class[3].f1, 0.9090909090909091);

        close(metrics.per_class[4].precision, 0.8);
        close(metrics.per_class[4].recall, 0.8);
        close(metrics.per_class[4].f1, 0.8000000000000002);

        close(metrics.macro_avg.accuracy, 0.9548387096774194);
        close(metrics.macro_avg.precision, 0.8797165452979406);
        close(metrics.macro_avg.recall, 0.8764570230607965);
        close(metrics.macro_avg.f1, 0.8778356333285912);

        close(metrics.weighted_avg.accuracy, 0.9549369869349058);
        close(metrics.weighted_avg.precision, 0.8878219133908056);
        close(metrics.weighted_avg.recall, 0.8870967741935484);
        close(metrics.weighted_avg.f1, 0.8871783614324882);
    }

    #[test]
    fn test_macro_f1_is_unweighted_mean_of_per_class_f1() {
        let m = vec![
            vec![9, 1, 0, 0, 0],
            vec![0, 7, 3, 0, 0],
            vec![1, 0, 8, 1, 0],
            vec![0, 0, 0, 10, 0],
            vec![2, 0, 0, 0, 8],
        ];
        let metrics = metrics_from_confusion(&m).unwrap();
        let mean: f64 = metrics.per_class.iter().map(|c| c.f1).sum::<f64>() / 5.0;
        close(metrics.macro_avg.f1, mean);
    }

    #[test]
    fn test_perfect_diagonal_gives_all_ones() {
        let m = vec![
            vec![5, 0, 0, 0, 0],
            vec![0, 4, 0, 0, 0],
            vec![0, 0, 3, 0, 0],
            vec![0, 0, 0, 2, 0],
            vec![0, 0, 0, 0, 1],
        ];
        let metrics = metrics_from_confusion(&m).unwrap();
        close(metrics.overall_accuracy, 1.0);
        for c in &metrics.per_class {
            close(c.accuracy, 1.0);
            close(c.precision, 1.0);
            close(c.recall, 1.0);
            close(c.f1, 1.0);
        }
        close(metrics.macro_avg.f1, 1.0);
        close(metrics.weighted_avg.f1, 1.0);
    }

    #[test]
    fn test_rejects_ragged_or_empty_matrix() {
        assert!(metrics_from_confusion(&[]).is_err());
        assert!(metrics_from_confusion(&[vec![1, 2], vec![3]]).is_err());
        assert!(metrics_from_confusion(&[vec![0, 0], vec![0, 0]]).is_err());
    }

    #[test]
    fn test_json_report_has_sorted_keys() {
        let m = vec![vec![3, 1], vec![0, 4]];
        let metrics = metrics_from_confusion(&m).unwrap();
        let json = metrics_to_json(&metrics);
        let conf = json.find("\"confusion_matrix\"").unwrap();
        let macro_pos = json.find("\"macro_avg\"").unwrap();
        let overall = json.find("\"overall_accuracy\"").unwrap();
        let weighted = json.find("\"weighted_avg\"").unwrap();
        assert!(conf < macro_pos && macro_pos < overall && overall < weighted);
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed["total"], 8);
    }

    #[test]
    fn test_published_comparison_pairs_every_row() {
        let mineye = |n: usize| -> Vec<Vec<u64>> {
            (0..n).map(|i| (0..n).map(|j| u64::from(i == j) * 10).collect()).collect()
        };
        let metrics = metrics_from_confusion(&mineye(5)).unwrap();
        let table = published_comparison(&metrics);
        for (name, published) in PUBLISHED_CLASS_METRICS {
            assert!(table.contains(name), "missing row {name}");
            assert!(table.contains(&format!("{:.4}", published[0])), "missing target for {name}");
        }
        assert!(table.contains("macro") && table.contains("weighted"));
        assert!(table.contains("soft targets, no gate"));
    }
}
