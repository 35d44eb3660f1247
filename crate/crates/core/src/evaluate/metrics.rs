use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{ForgeError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: u32,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
    pub n: usize,
    /// Count matrix, rows = true class, columns = predicted class, in
    /// `per_class` order. Empty for reports rebuilt from stored summaries.
    pub confusion_counts: Vec<Vec<u64>>,
    /// `100 * count / n` per cell.
    pub confusion_percent: Vec<Vec<f64>>,
    /// Metrics that were set to 0 because their denominator was 0.
    pub zero_division: Vec<String>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

fn averages(per_class: &[ClassMetrics]) -> (Averages, Averages) {
    let c = per_class.len() as f64;
    let total: usize = per_class.iter().map(|m| m.support).sum();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / c;
    let weighted = |f: fn(&ClassMetrics) -> f64| {
        if total == 0 {
            0.0
        } else {
            per_class.iter().map(|m| f(m) * m.support as f64).sum::<f64>() / total as f64
        }
    };
    (
        Averages {
            precision: mean(|m| m.precision),
            recall: mean(|m| m.recall),
            f1: mean(|m| m.f1),
        },
        Averages {
            precision: weighted(|m| m.precision),
            recall: weighted(|m| m.recall),
            f1: weighted(|m| m.f1),
        },
    )
}

/// Per-class precision, recall, F1 and support over the union of classes
/// seen in either input, plus accuracy, averages and the confusion matrix.
pub fn metrics(truth: &[u32], predicted: &[u32]) -> Result<EvaluationReport> {
    if truth.len() != predicted.len() {
        return Err(ForgeError::LengthMismatch {
            left: truth.len(),
            right: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(ForgeError::Empty);
    }
    let mut classes: Vec<u32> = truth.iter().chain(predicted).copied().collect();
    classes.sort_unstable();
    classes.dedup();
    let c = classes.len();
    let pos = |l: u32| classes.binary_search(&l).expect("class present");
    let mut counts = vec![vec![0u64; c]; c];
    for (&t, &p) in truth.iter().zip(predicted) {
        counts[pos(t)][pos(p)] += 1;
    }

    let n = truth.len();
    let mut zero_division = Vec::new();
    let mut per_class = Vec::with_capacity(c);
    for (i, &class) in classes.iter().enumerate() {
        let tp = counts[i][i];
        let predicted_i: u64 = counts.iter().map(|row| row[i]).sum();
        let actual_i: u64 = counts[i].iter().sum();
        let precision = ratio(tp, predicted_i).unwrap_or_else(|| {
            zero_division.push(format!("precision of class {class}"));
            0.0
        });
        let recall = ratio(tp, actual_i).unwrap_or_else(|| {
            zero_division.push(format!("recall of class {class}"));
            0.0
        });
        per_class.push(ClassMetrics {
            class,
            precision,
            recall,
            f1: harmonic(precision, recall),
            support: actual_i as usize,
        });
    }
    let trace: u64 = (0..c).map(|i| counts[i][i]).sum();
    let (macro_avg, weighted_avg) = averages(&per_class);
    let confusion_percent = counts
        .iter()
        .map(|row| row.iter().map(|&v| 100.0 * v as f64 / n as f64).collect())
        .collect();
    Ok(EvaluationReport {
        per_class,
        accuracy: trace as f64 / n as f64,
        macro_avg,
        weighted_avg,
        n,
        confusion_counts: counts,
        confusion_percent,
        zero_division,
    })
}

impl EvaluationReport {
    /// Rebuilds a report from published per-class rows and accuracy. The
    /// averages are recomputed from the rows; no confusion matrix is kept.
    pub fn from_summary(rows: &[(u32, f64, f64, f64, usize)], accuracy: f64) -> Self {
        let per_class: Vec<ClassMetrics> = rows
            .iter()
            .map(|&(class, precision, recall, f1, support)| ClassMetrics {
                class,
                precision,
                recall,
                f1,
                support,
            })
            .collect();
        let (macro_avg, weighted_avg) = averages(&per_class);
        EvaluationReport {
            n: per_class.iter().map(|m| m.support).sum(),
            per_class,
            accuracy,
            macro_avg,
            weighted_avg,
            confusion_counts: Vec::new(),
            confusion_percent: Vec::new(),
            zero_division: Vec::new(),
        }
    }

    pub fn classes(&self) -> Vec<u32> {
        self.per_class.iter().map(|m| m.class).collect()
    }

    pub fn class(&self, class: u32) -> Option<&ClassMetrics> {
        self.per_class.iter().find(|m| m.class == class)
    }

    /// Text table in the usual precision / recall / f1-score / support
    /// layout, two decimals.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>12} {:>9} {:>9} {:>9} {:>9}\n",
            "", "precision", "recall", "f1-score", "support"
        );
        for m in &self.per_class {
            let _ = writeln!(
                out,
                "{:>12} {:>9.2} {:>9.2} {:>9.2} {:>9}",
                m.class, m.precision, m.recall, m.f1, m.support
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "{:>12} {:>9} {:>9} {:>9.2} {:>9}", "accuracy", "", "", self.accuracy, self.n);
        for (name, a) in [("macro avg", self.macro_avg), ("weighted avg", self.weighted_avg)] {
            let _ = writeln!(
                out,
                "{:>12} {:>9.2} {:>9.2} {:>9.2} {:>9}",
                name, a.precision, a.recall, a.f1, self.n
            );
        }
        if !self.confusion_percent.is_empty() {
            let _ = writeln!(out, "\nconfusion matrix (% of all test rows; rows true, columns predicted)\n");
            let _ = write!(out, "{:>12}", "");
            for m in &self.per_class {
                let _ = write!(out, " {:>7}", m.class);
            }
            let _ = writeln!(out);
            for (m, row) in self.per_class.iter().zip(&self.confusion_percent) {
                let _ = write!(out, "{:>12}", m.class);
                for v in row {
                    let _ = write!(out, " {:>7.2}", v);
                }
                let _ = writeln!(out);
            }
        }
        if !self.zero_division.is_empty() {
            let _ = writeln!(out, "\nset to 0 (zero denominator): {}", self.zero_division.join(", "));
        }
        out
    }

    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for m in &self.per_class {
            let _ = write!(out, ",{}", m.class);
        }
        out.push('\n');
        for (m, row) in self.per_class.iter().zip(&self.confusion_percent) {
            let _ = write!(out, "{}", m.class);
            for v in row {
                let _ = write!(out, ",{v:.4}");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDelta {
    pub class: u32,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDelta {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub per_class: Vec<ClassDelta>,
    /// Classes whose F1 change is at least half the largest absolute
    /// per-class F1 change; empty when nothing changed.
    pub drivers: Vec<u32>,
}

/// Change from report `a` to report `b`.
pub fn compare_reports(a: &EvaluationReport, b: &EvaluationReport) -> Result<ReportDelta> {
    if a.classes() != b.classes() {
        return Err(ForgeError::ClassSetMismatch(a.classes(), b.classes()));
    }
    let per_class: Vec<ClassDelta> = a
        .per_class
        .iter()
        .zip(&b.per_class)
        .map(|(x, y)| ClassDelta {
            class: x.class,
            precision: y.precision - x.precision,
            recall: y.recall - x.recall,
            f1: y.f1 - x.f1,
        })
        .collect();
    let largest = per_class.iter().map(|d| d.f1.abs()).fold(0.0, f64::max);
    let drivers = if largest > 0.0 {
        per_class
            .iter()
            .filter(|d| d.f1.abs() >= 0.5 * largest)
            .map(|d| d.class)
            .collect()
    } else {
        Vec::new()
    };
    Ok(ReportDelta {
        accuracy: b.accuracy - a.accuracy,
        macro_f1: b.macro_avg.f1 - a.macro_avg.f1,
        weighted_f1: b.weighted_avg.f1 - a.weighted_avg.f1,
        per_class,
        drivers,
    })
}

impl ReportDelta {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:>12} {:>9} {:>9} {:>9}", "", "precision", "recall", "f1-score");
        for d in &self.per_class {
            let _ = writeln!(out, "{:>12} {:>+9.2} {:>+9.2} {:>+9.2}", d.class, d.precision, d.recall, d.f1);
        }
        let _ = writeln!(out, "\naccuracy {:+.2}, macro f1 {:+.2}, weighted f1 {:+.2}", self.accuracy, self.macro_f1, self.weighted_f1);
        let drivers: Vec<String> = self.drivers.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(out, "change driven by classes: {}", drivers.join(", "));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_sample_hand_case() {
        let r = metrics(&[1, 1, 2, 2], &[1, 2, 2, 2]).unwrap();
        let c1 = r.class(1).unwrap();
        assert_eq!((c1.precision, c1.recall), (1.0, 0.5));
        assert!((c1.f1 - 2.0 / 3.0).abs() < 1e-15);
        let c2 = r.class(2).unwrap();
        assert!((c2.precision - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(c2.recall, 1.0);
        assert!((c2.f1 - 0.8).abs() < 1e-15);
        assert_eq!(r.accuracy, 0.75);
        assert!(r.zero_division.is_empty());
    }

    #[test]
    fn perfect_predictions() {
        let y = [1, 2, 3, 3, 2];
        let r = metrics(&y, &y).unwrap();
        assert!(r.per_class.iter().all(|m| m.precision == 1.0 && m.recall == 1.0 && m.f1 == 1.0));
        assert_eq!(r.accuracy, 1.0);
        for (i, row) in r.confusion_counts.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v > 0, i == j);
            }
        }
    }

    #[test]
    fn never_predicted_class_is_flagged() {
        let r = metrics(&[1, 2], &[1, 1]).unwrap();
        assert_eq!(r.class(2).unwrap().precision, 0.0);
        assert_eq!(r.zero_division, vec!["precision of class 2"]);
    }

    #[test]
    fn errors() {
        assert!(matches!(metrics(&[1], &[1, 2]), Err(ForgeError::LengthMismatch { .. })));
        assert!(matches!(metrics(&[], &[]), Err(ForgeError::Empty)));
    }

    #[test]
    fn weighted_average_identity_and_percent_sum() {
        let truth = [1, 1, 1, 2, 2, 3, 3, 3, 3, 4];
        let pred = [1, 2, 1, 2, 3, 3, 3, 1, 4, 4];
        let r = metrics(&truth, &pred).unwrap();
        let n: usize = r.per_class.iter().map(|m| m.support).sum();
        assert_eq!(n, truth.len());
        let w: f64 = r.per_class.iter().map(|m| m.f1 * m.support as f64).sum::<f64>() / n as f64;
        assert!((w - r.weighted_avg.f1).abs() < 1e-9);
        let total: f64 = r.confusion_percent.iter().flatten().sum();
        assert!((total - 100.0).abs() < 0.01);
    }

    #[test]
    fn identical_reports_have_zero_delta() {
        let r = metrics(&[1, 2, 2], &[1, 2, 1]).unwrap();
        let d = compare_reports(&r, &r).unwrap();
        assert_eq!(d.accuracy, 0.0);
        assert!(d.per_class.iter().all(|c| c.f1 == 0.0));
        assert!(d.drivers.is_empty());
    }

    #[test]
    fn class_set_mismatch() {
        let a = metrics(&[1, 2], &[1, 2]).unwrap();
        let b = metrics(&[1, 3], &[1, 3]).unwrap();
        assert!(matches!(compare_reports(&a, &b), Err(ForgeError::ClassSetMismatch(..))));
    }

    #[test]
    fn text_rendering_has_two_decimals() {
        let r = metrics(&[1, 1, 2, 2], &[1, 2, 2, 2]).unwrap();
        let text = r.to_text();
        assert!(text.contains("0.67"));
        assert!(text.contains("accuracy"));
        assert!(text.contains("weighted avg"));
    }
}
