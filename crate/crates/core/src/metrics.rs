//! Classification metrics and embedding-norm histograms.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::geometry::{norm, CurvatureSpace};

/// `classes x classes` counts; rows are observed classes, columns predicted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn record(&mut self, observed: usize, predicted: usize) {
        self.counts[observed][predicted] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }

    /// Adds another shard's counts.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes() != self.classes() {
            return Err(Error::DimensionMismatch {
                expected: self.classes(),
                found: other.classes(),
            });
        }
        for (row, orow) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in row.iter_mut().zip(orow) {
                *x += y;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub samples: usize,
    pub classes: usize,
    pub accuracy: f64,
    /// Binary tasks only; entailment (class 0) is the positive class.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    pub confusion: ConfusionMatrix,
    /// Set when some metric had a zero denominator and was reported as 0.
    pub zero_division: bool,
}

fn ratio(num: u64, den: u64, flag: &mut bool) -> f64 {
    if den == 0 {
        *flag = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricsReport {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Result<Self> {
        let total = confusion.total();
        if total == 0 {
            return Err(Error::EmptySequence);
        }
        let classes = confusion.classes();
        let mut zero_division = false;
        let accuracy = confusion.trace() as f64 / total as f64;
        let (mut precision, mut recall, mut f1) = (None, None, None);
        if classes == 2 {
            let tp = confusion.counts[0][0];
            let fn_ = confusion.counts[0][1];
            let fp = confusion.counts[1][0];
            let p = ratio(tp, tp + fp, &mut zero_division);
            let r = ratio(tp, tp + fn_, &mut zero_division);
            let f = if p + r > 0.0 {
                2.0 * p * r / (p + r)
            } else {
                zero_division = true;
                0.0
            };
            precision = Some(p);
            recall = Some(r);
            f1 = Some(f);
        }
        Ok(Self {
            samples: total as usize,
            classes,
            accuracy,
            precision,
            recall,
            f1,
            confusion,
            zero_division,
        })
    }
}

/// Accuracy and confusion matrix for `classes`-way predictions, plus
/// precision, recall and F1 of class 0 when `classes == 2`.
pub fn evaluate(predictions: &[usize], gold: &[usize], classes: usize) -> Result<MetricsReport> {
    if predictions.len() != gold.len() {
        return Err(Error::DimensionMismatch {
            expected: gold.len(),
            found: predictions.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::EmptySequence);
    }
    if classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 classes, got {classes}"
        )));
    }
    let mut cm = ConfusionMatrix::new(classes);
    for (&p, &g) in predictions.iter().zip(gold) {
        if p >= classes || g >= classes {
            return Err(Error::InvalidArgument(format!(
                "class index out of range for {classes} classes"
            )));
        }
        cm.record(g, p);
    }
    MetricsReport::from_confusion(cm)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    /// Lower edge of the bin.
    pub edge: f64,
    pub count: usize,
}

/// Equal-width histogram of embedding norms over `[0, 1/sqrt(c))`, or over
/// `[0, max norm]` in flat space.
pub fn norm_histogram(table: &EmbeddingTable, bins: usize, space: &CurvatureSpace) -> Result<Vec<HistogramBin>> {
    if bins == 0 {
        return Err(Error::InvalidArgument("histogram needs at least one bin".into()));
    }
    let norms: Vec<f64> = table.iter().map(norm).collect();
    let upper = if space.is_euclidean() {
        norms.iter().copied().fold(0.0, f64::max)
    } else {
        space.radius()
    };
    let width = upper / bins as f64;
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|i| HistogramBin {
            edge: i as f64 * width,
            count: 0,
        })
        .collect();
    for n in norms {
        let idx = if width > 0.0 {
            ((n / width) as usize).min(bins - 1)
        } else {
            0
        };
        out[idx].count += 1;
    }
    Ok(out)
}

pub fn histogram_csv(bins: &[HistogramBin]) -> String {
    let mut s = String::from("bin_start,count\n");
    for b in bins {
        writeln!(s, "{},{}", b.edge, b.count).expect("writing to a String");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary(tp: usize, fp: usize, fn_: usize, tn: usize) -> MetricsReport {
        let mut pred = Vec::new();
        let mut gold = Vec::new();
        for (n, p, g) in [(tp, 0, 0), (fp, 0, 1), (fn_, 1, 0), (tn, 1, 1)] {
            pred.extend(std::iter::repeat_n(p, n));
            gold.extend(std::iter::repeat_n(g, n));
        }
        evaluate(&pred, &gold, 2).unwrap()
    }

    #[test]
    fn perfect_single() {
        let r = binary(1, 0, 0, 0);
        assert_eq!((r.precision, r.recall, r.f1), (Some(1.0), Some(1.0), Some(1.0)));
        assert!(!r.zero_division);
    }

    #[test]
    fn all_wrong() {
        let r = binary(0, 3, 2, 0);
        assert_eq!(r.accuracy, 0.0);
        assert_eq!(r.f1, Some(0.0));
        assert!(r.zero_division);
    }

    #[test]
    fn mixed_counts() {
        let r = binary(3, 1, 2, 4);
        assert!((r.precision.unwrap() - 0.75).abs() < 1e-15);
        assert!((r.recall.unwrap() - 0.6).abs() < 1e-15);
        assert!((r.f1.unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.accuracy - 0.7).abs() < 1e-15);
        assert_eq!(r.confusion.counts, vec![vec![3, 2], vec![1, 4]]);
    }

    #[test]
    fn no_positive_predictions_flags_zero_division() {
        let r = binary(0, 0, 3, 2);
        assert_eq!(r.precision, Some(0.0));
        assert!(r.zero_division);
    }

    #[test]
    fn three_class_has_no_f1() {
        let r = evaluate(&[0, 1, 2, 2], &[0, 2, 2, 1], 3).unwrap();
        assert_eq!(r.accuracy, 0.5);
        assert!(r.f1.is_none());
        let json = serde_json::to_string(&r).unwrap();
        assert!(!json.contains("f1"));
        let row_sums: Vec<u64> = r.confusion.counts.iter().map(|r| r.iter().sum()).collect();
        assert_eq!(row_sums, vec![1, 1, 2]);
    }

    #[test]
    fn input_errors() {
        assert!(evaluate(&[], &[], 2).is_err());
        assert!(evaluate(&[0], &[0, 1], 2).is_err());
        assert!(evaluate(&[2], &[0], 2).is_err());
    }

    #[test]
    fn merging_shards_equals_whole() {
        let pred = [0, 1, 1, 0, 2, 1];
        let gold = [0, 1, 2, 2, 2, 0];
        let whole = evaluate(&pred, &gold, 3).unwrap();
        let mut a = evaluate(&pred[..3], &gold[..3], 3).unwrap().confusion;
        a.merge(&evaluate(&pred[3..], &gold[3..], 3).unwrap().confusion)
            .unwrap();
        assert_eq!(a, whole.confusion);
    }

    #[test]
    fn histogram_origin_and_totals() {
        let space = CurvatureSpace::unit_ball(2).unwrap();
        let t = EmbeddingTable::zeros(1, 2);
        let h = norm_histogram(&t, 10, &space).unwrap();
        assert_eq!(h[0].count, 1);
        assert_eq!(h.iter().map(|b| b.count).sum::<usize>(), 1);
        let t = EmbeddingTable::from_rows(vec![vec![0.05, 0.0], vec![0.0, 0.95], vec![0.5, 0.0]]).unwrap();
        let h = norm_histogram(&t, 4, &space).unwrap();
        assert_eq!(h.iter().map(|b| b.count).collect::<Vec<_>>(), vec![1, 0, 1, 1]);
        assert_eq!(h[1].edge, 0.25);
        assert!(norm_histogram(&t, 0, &space).is_err());
        let csv = histogram_csv(&h);
        assert_eq!(csv.lines().count(), 5);
        assert_eq!(csv.lines().nth(2), Some("0.25,0"));
    }

    #[test]
    fn flat_histogram_spans_max_norm() {
        let space = CurvatureSpace::euclidean(1).unwrap();
        let t = EmbeddingTable::from_rows(vec![vec![0.0], vec![2.0], vec![4.0]]).unwrap();
        let h = norm_histogram(&t, 2, &space).unwrap();
        assert_eq!(h.iter().map(|b| b.count).collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn uniform_norms_give_flat_counts() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..5000).map(|_| vec![rng.gen_range(0.0..1.0), 0.0]).collect();
        let t = EmbeddingTable::from_rows(rows).unwrap();
        let space = CurvatureSpace::unit_ball(2).unwrap();
        let h = norm_histogram(&t, 10, &space).unwrap();
        let expected = 500.0;
        let chi2: f64 = h.iter().map(|b| (b.count as f64 - expected).powi(2) / expected).sum();
        // 9 degrees of freedom; 27.88 is the 0.999 quantile
        assert!(chi2 < 27.88, "{chi2}");
    }
}
