use std::fmt;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::detect::Stage;
use crate::ingest::{AttackCategory, Class, FlowLabel};
use crate::preprocess::OovStats;

/// Confusion counts with Anomaly as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub fp: usize,
}

impl Confusion {
    pub fn record(&mut self, predicted: Class, truth: Class) {
        match (predicted, truth) {
            (Class::Anomaly, Class::Anomaly) => self.tp += 1,
            (Class::Normal, Class::Anomaly) => self.fn_ += 1,
            (Class::Normal, Class::Normal) => self.tn += 1,
            (Class::Anomaly, Class::Normal) => self.fp += 1,
        }
    }

    /// `None` when the slices differ in length.
    pub fn from_classes(predicted: &[Class], truth: &[Class]) -> Option<Self> {
        if predicted.len() != truth.len() {
            return None;
        }
        let mut c = Self::default();
        for (p, t) in predicted.iter().zip(truth) {
            c.record(*p, *t);
        }
        Some(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fn_ + self.tn + self.fp
    }

    pub fn anomalies(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn normals(&self) -> usize {
        self.tn + self.fp
    }
}

/// Counts predictions against ground truth.
pub fn confusion(predicted: &[Class], truth: &[Class]) -> Result<Confusion, EvalError> {
    Confusion::from_classes(predicted, truth).ok_or(EvalError::LengthMismatch {
        predicted: predicted.len(),
        truth: truth.len(),
    })
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Scalar scores. Ratios with a zero denominator are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f_score: Option<f64>,
    /// FP / (FN + FP).
    pub fpr_fn_fp: Option<f64>,
    /// FP / (FP + TN).
    pub fpr_std: Option<f64>,
}

pub fn metrics(c: &Confusion) -> Result<Metrics, EvalError> {
    if c.total() == 0 {
        return Err(EvalError::EmptyConfusion);
    }
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f_score = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    Ok(Metrics {
        accuracy: (c.tp + c.tn) as f64 / c.total() as f64,
        precision,
        recall,
        f_score,
        fpr_fn_fp: ratio(c.fp, c.fn_ + c.fp),
        fpr_std: ratio(c.fp, c.fp + c.tn),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryRecall {
    pub category: AttackCategory,
    pub total: usize,
    pub detected: usize,
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub confusion: Confusion,
    pub metrics: Metrics,
    /// DoS, Probing, R2L, U2R, then attacks missing from the category table.
    pub per_category: Vec<CategoryRecall>,
    /// Flows decided by each stage; `None` for single-stage detectors.
    pub d1_decided: Option<usize>,
    pub d2_decided: Option<usize>,
    pub escalation_fraction: Option<f64>,
    pub oov: OovStats,
}

impl MetricReport {
    pub fn build(
        predicted: &[Class],
        truth: &[FlowLabel],
        stages: Option<&[Stage]>,
        oov: OovStats,
    ) -> Result<Self, EvalError> {
        let classes: Vec<Class> = truth.iter().map(|l| l.class()).collect();
        let confusion = confusion(predicted, &classes)?;
        let metrics = metrics(&confusion)?;
        let per_category = AttackCategory::KNOWN
            .iter()
            .chain([&AttackCategory::Unknown])
            .map(|&category| {
                let mut total = 0;
                let mut detected = 0;
                for (p, t) in predicted.iter().zip(truth) {
                    if *t == FlowLabel::Anomaly(category) {
                        total += 1;
                        detected += usize::from(*p == Class::Anomaly);
                    }
                }
                CategoryRecall {
                    category,
                    total,
                    detected,
                    recall: ratio(detected, total),
                }
            })
            .collect();
        let (d1_decided, d2_decided, escalation_fraction) = match stages {
            Some(stages) => {
                if stages.len() != predicted.len() {
                    return Err(EvalError::LengthMismatch {
                        predicted: predicted.len(),
                        truth: stages.len(),
                    });
                }
                let d2 = stages.iter().filter(|s| **s == Stage::D2).count();
                (Some(stages.len() - d2), Some(d2), ratio(d2, stages.len()))
            }
            None => (None, None, None),
        };
        Ok(Self {
            confusion,
            metrics,
            per_category,
            d1_decided,
            d2_decided,
            escalation_fraction,
            oov,
        })
    }
}

pub(crate) fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{:.2}", 100.0 * v))
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = &self.metrics;
        let c = &self.confusion;
        writeln!(f, "{:<22}{:>10}", "Accuracy (%)", pct(Some(m.accuracy)))?;
        writeln!(f, "{:<22}{:>10}", "Precision (%)", pct(m.precision))?;
        writeln!(f, "{:<22}{:>10}", "Recall (%)", pct(m.recall))?;
        writeln!(f, "{:<22}{:>10}", "F-score (%)", pct(m.f_score))?;
        writeln!(f, "{:<22}{:>10}", "FPR FP/(FN+FP) (%)", pct(m.fpr_fn_fp))?;
        writeln!(f, "{:<22}{:>10}", "FPR FP/(FP+TN) (%)", pct(m.fpr_std))?;
        writeln!(f, "TP {}  FN {}  TN {}  FP {}", c.tp, c.fn_, c.tn, c.fp)?;
        for cat in &self.per_category {
            if cat.total > 0 {
                writeln!(
                    f,
                    "  recall {:<16}{:>8} {:>6}/{}",
                    cat.category.to_string(),
                    pct(cat.recall),
                    cat.detected,
                    cat.total
                )?;
            }
        }
        if let (Some(d1), Some(d2)) = (self.d1_decided, self.d2_decided) {
            writeln!(
                f,
                "D1 decided {d1}, escalated to D2 {d2} ({} %)",
                pct(self.escalation_fraction)
            )?;
        }
        write!(f, "out-of-vocabulary tokens {}", self.oov.total())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: Option<f64>, b: f64) -> bool {
        a.is_some_and(|a| (a - b).abs() < 1e-12)
    }

    #[test]
    fn symmetric_case() {
        let m = metrics(&Confusion {
            tp: 25,
            fn_: 25,
            tn: 25,
            fp: 25,
        })
        .unwrap();
        assert_eq!(m.accuracy, 0.5);
        for v in [m.precision, m.recall, m.f_score, m.fpr_fn_fp, m.fpr_std] {
            assert!(close(v, 0.5));
        }
    }

    #[test]
    fn two_fpr_definitions_diverge() {
        let m = metrics(&Confusion {
            tp: 92,
            fn_: 8,
            tn: 88,
            fp: 12,
        })
        .unwrap();
        // Independent float64 evaluation of the formulas.
        assert!(close(m.recall, 0.92));
        assert!(close(m.precision, 0.8846153846153846));
        assert!((m.accuracy - 0.9).abs() < 1e-12);
        assert!(close(m.fpr_std, 0.12));
        assert!(close(m.fpr_fn_fp, 0.6));
        assert!(close(m.f_score, 0.9019607843137256));
    }

    #[test]
    fn no_false_positives() {
        let m = metrics(&Confusion {
            tp: 3,
            fn_: 1,
            tn: 4,
            fp: 0,
        })
        .unwrap();
        assert_eq!(m.fpr_std, Some(0.0));
        assert_eq!(m.fpr_fn_fp, Some(0.0));
    }

    #[test]
    fn undefined_ratios_are_absent() {
        let m = metrics(&Confusion {
            tp: 0,
            fn_: 0,
            tn: 5,
            fp: 0,
        })
        .unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.precision, None);
        assert_eq!(m.recall, None);
        assert_eq!(m.f_score, None);
        assert_eq!(m.fpr_fn_fp, None);
        assert!(matches!(metrics(&Confusion::default()), Err(EvalError::EmptyConfusion)));
    }

    #[test]
    fn confusion_examples() {
        use Class::{Anomaly as A, Normal as N};
        assert_eq!(
            confusion(&[A, N, A], &[A, N, A]).unwrap(),
            Confusion {
                tp: 2,
                fn_: 0,
                tn: 1,
                fp: 0
            }
        );
        assert_eq!(confusion(&[N; 4], &[A; 4]).unwrap().fn_, 4);
        // Ten mixed records, counted by hand: TP 3, FN 2, TN 4, FP 1.
        let predicted = [A, A, A, N, N, N, N, N, N, A];
        let truth = [A, A, A, A, A, N, N, N, N, N];
        assert_eq!(
            confusion(&predicted, &truth).unwrap(),
            Confusion {
                tp: 3,
                fn_: 2,
                tn: 4,
                fp: 1
            }
        );
        assert!(confusion(&[A], &[A, N]).is_err());
    }

    #[test]
    fn report_counts_categories_and_stages() {
        use AttackCategory::*;
        use Class::{Anomaly as A, Normal as N};
        let truth = [
            FlowLabel::Anomaly(DoS),
            FlowLabel::Anomaly(DoS),
            FlowLabel::Anomaly(U2R),
            FlowLabel::Anomaly(Unknown),
            FlowLabel::Normal,
        ];
        let predicted = [A, N, A, A, N];
        let stages = [Stage::D1, Stage::D2, Stage::D1, Stage::D2, Stage::D1];
        let r = MetricReport::build(&predicted, &truth, Some(&stages), OovStats::default()).unwrap();
        let dos = r.per_category[0];
        assert_eq!((dos.total, dos.detected, dos.recall), (2, 1, Some(0.5)));
        assert_eq!(r.per_category[1].recall, None);
        assert_eq!(r.per_category[4].detected, 1);
        assert_eq!((r.d1_decided, r.d2_decided), (Some(3), Some(2)));
        assert_eq!(r.escalation_fraction, Some(0.4));
        let text = r.to_string();
        assert!(text.contains("UnknownCategory"));
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"fn\":1"));
        assert_eq!(serde_json::from_str::<MetricReport>(&json).unwrap(), r);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn formulas_match_recount(pairs in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..200)) {
            let cls = |b: bool| if b { Class::Anomaly } else { Class::Normal };
            let predicted: Vec<Class> = pairs.iter().map(|p| cls(p.0)).collect();
            let truth: Vec<Class> = pairs.iter().map(|p| cls(p.1)).collect();
            let c = confusion(&predicted, &truth).unwrap();
            let m = metrics(&c).unwrap();

            let (mut tp, mut fn_, mut tn, mut fp) = (0u32, 0u32, 0u32, 0u32);
            for (p, t) in &pairs {
                match (p, t) {
                    (true, true) => tp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => tn += 1,
                    (true, false) => fp += 1,
                }
            }
            prop_assert_eq!((c.tp, c.fn_, c.tn, c.fp), (tp as usize, fn_ as usize, tn as usize, fp as usize));
            let (tp, fn_, tn, fp) = (tp as f64, fn_ as f64, tn as f64, fp as f64);
            let div = |a: f64, b: f64| (b > 0.0).then(|| a / b);
            prop_assert_eq!(m.accuracy, (tp + tn) / (tp + tn + fp + fn_));
            let pr = div(tp, tp + fp);
            let re = div(tp, tp + fn_);
            prop_assert_eq!(m.precision, pr);
            prop_assert_eq!(m.recall, re);
            prop_assert_eq!(m.fpr_fn_fp, div(fp, fn_ + fp));
            prop_assert_eq!(m.fpr_std, div(fp, fp + tn));
            let fs = match (pr, re) {
                (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
                _ => None,
            };
            prop_assert_eq!(m.f_score, fs);
            prop_assert_eq!(c.anomalies() + c.normals(), pairs.len());
        }
    }
}
