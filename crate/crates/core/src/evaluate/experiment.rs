use std::fmt;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{pct, Confusion, MetricReport};
use super::EvalError;
use crate::calibrate::{self, reconstruction_scores};
use crate::detect::{d2_decide, Cascade, LatentEncoder, ReconstructionScorer, Stage, Verdict};
use crate::ingest::{Class, Dataset, FlowLabel};
use crate::nn::Scratch;
use crate::pipeline::{self, encode, select, Artifacts, Detectors, Encoded, ExperimentConfig};
use crate::preprocess::{FeatureVector, TransformSpec};

/// Cascade verdicts for every vector, in input order.
pub fn classify_all<E, S>(cascade: &Cascade<E, S>, vectors: &[FeatureVector]) -> Result<Vec<Verdict>, EvalError>
where
    E: LatentEncoder + Sync,
    S: ReconstructionScorer + Sync,
{
    Ok(vectors
        .par_iter()
        .map_init(Scratch::new, |scratch, x| cascade.classify_with(x, scratch))
        .collect::<Result<_, _>>()?)
}

/// The cascade next to each detector on its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub seed: u64,
    pub records: usize,
    pub cascade: MetricReport,
    pub d2_standalone: MetricReport,
    /// The sparse network scored by its own reconstruction error.
    pub d1_reconstruction: MetricReport,
}

impl fmt::Display for AblationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cols = [&self.cascade, &self.d2_standalone, &self.d1_reconstruction];
        writeln!(f, "{} records, seed {}", self.records, self.seed)?;
        writeln!(f, "{:<22}{:>12}{:>12}{:>12}", "", "cascade", "D2 alone", "D1 (recon)")?;
        let row = |f: &mut fmt::Formatter<'_>, name: &str, get: &dyn Fn(&MetricReport) -> Option<f64>| {
            write!(f, "{name:<22}")?;
            for c in cols {
                write!(f, "{:>12}", pct(get(c)))?;
            }
            writeln!(f)
        };
        row(f, "Accuracy (%)", &|r| Some(r.metrics.accuracy))?;
        row(f, "Precision (%)", &|r| r.metrics.precision)?;
        row(f, "Recall (%)", &|r| r.metrics.recall)?;
        row(f, "F-score (%)", &|r| r.metrics.f_score)?;
        row(f, "FPR FP/(FN+FP) (%)", &|r| r.metrics.fpr_fn_fp)?;
        row(f, "FPR FP/(FP+TN) (%)", &|r| r.metrics.fpr_std)?;
        write!(
            f,
            "cascade: D1 decided {}, escalated {} ({} %)",
            self.cascade.d1_decided.unwrap_or(0),
            self.cascade.d2_decided.unwrap_or(0),
            pct(self.cascade.escalation_fraction)
        )
    }
}

/// Scores `test` with all three detectors built from `art`.
pub fn evaluate_artifacts(art: &Artifacts, test: &Encoded) -> Result<AblationReport, EvalError> {
    if test.vectors.is_empty() {
        return Err(EvalError::NoFlows);
    }
    let cascade = art.cascade();
    let verdicts = classify_all(&cascade, &test.vectors)?;
    let predicted: Vec<Class> = verdicts.iter().map(|v| v.label).collect();
    let stages: Vec<Stage> = verdicts.iter().map(|v| v.stage).collect();
    let cascade_report = MetricReport::build(&predicted, &test.labels, Some(&stages), test.oov)?;

    let thr = art.calibration.thresholds.thr_ae;
    let plain_scores = reconstruction_scores(&art.plain, &test.vectors)?;
    let d2: Vec<Class> = plain_scores.iter().map(|s| d2_decide(*s, thr)).collect();
    let d2_report = MetricReport::build(&d2, &test.labels, None, test.oov)?;

    let thr_sparse = art.calibration.thr_sparse_reconstruction;
    let sparse_scores = reconstruction_scores(&art.sparse, &test.vectors)?;
    let d1r: Vec<Class> = sparse_scores.iter().map(|s| d2_decide(*s, thr_sparse)).collect();
    let d1r_report = MetricReport::build(&d1r, &test.labels, None, test.oov)?;

    Ok(AblationReport {
        seed: art.calibration.seed,
        records: test.vectors.len(),
        cascade: cascade_report,
        d2_standalone: d2_report,
        d1_reconstruction: d1r_report,
    })
}

/// Trained artifacts, their training histories and the evaluation.
#[derive(Debug, Clone)]
pub struct ExperimentOutput<R> {
    pub artifacts: Artifacts,
    pub detectors: Detectors,
    pub report: R,
}

/// Fits the transform, trains on normals, calibrates on a labeled validation
/// part, all within `train_records`.
fn build_artifacts(
    spec: TransformSpec,
    encoded: &Encoded,
    split: &pipeline::Split,
    config: &ExperimentConfig,
) -> Result<(Artifacts, Detectors), EvalError> {
    let hash = spec.content_hash();
    let train = select(&encoded.vectors, &split.train);
    let monitor: Vec<FeatureVector> = split
        .validation
        .iter()
        .filter(|&&i| encoded.labels[i] == FlowLabel::Normal)
        .map(|&i| encoded.vectors[i].clone())
        .collect();
    let detectors = pipeline::train_detectors(&train, &monitor, config, hash)?;

    let validation = select(&encoded.vectors, &split.validation);
    let labels: Vec<Class> = split.validation.iter().map(|&i| encoded.labels[i].class()).collect();
    let calibration = calibrate::calibrate(
        &detectors.sparse,
        &detectors.plain,
        &validation,
        &labels,
        &config.band,
        config.eps_active,
        config.seed,
    )?;
    let artifacts = Artifacts {
        spec,
        sparse: detectors.sparse.clone(),
        plain: detectors.plain.clone(),
        calibration,
    };
    Ok((artifacts, detectors))
}

/// Train on the normals of `train` (minus a validation part), evaluate on all of `test`.
pub fn run_kddtest_experiment(
    train: &Dataset,
    test: &Dataset,
    config: &ExperimentConfig,
) -> Result<ExperimentOutput<AblationReport>, EvalError> {
    let spec = TransformSpec::fit(train.records.iter().map(|r| &r.flow))?;
    let encoded = encode(&spec, &train.records);
    let split = pipeline::holdout_split(&encoded.labels, config.seed, false)?;
    let (artifacts, detectors) = build_artifacts(spec, &encoded, &split, config)?;
    let test_encoded = encode(&artifacts.spec, &test.records);
    let report = evaluate_artifacts(&artifacts, &test_encoded)?;
    Ok(ExperimentOutput {
        artifacts,
        detectors,
        report,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train_normal: usize,
    pub validation_normal: usize,
    pub validation_anomaly: usize,
    pub test_normal: usize,
    pub test_anomaly: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub sizes: SplitSizes,
    pub evaluation: AblationReport,
}

impl fmt::Display for SplitReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = &self.sizes;
        writeln!(f, "{:<12}{:>10}{:>10}", "", "normal", "anomaly")?;
        writeln!(f, "{:<12}{:>10}{:>10}", "train", s.train_normal, 0)?;
        writeln!(f, "{:<12}{:>10}{:>10}", "validation", s.validation_normal, s.validation_anomaly)?;
        writeln!(f, "{:<12}{:>10}{:>10}", "test", s.test_normal, s.test_anomaly)?;
        write!(f, "{}", self.evaluation)
    }
}

/// Train, validate and test within one labeled file. The transform is fit
/// on everything except the test part.
pub fn run_split_experiment(
    data: &Dataset,
    config: &ExperimentConfig,
) -> Result<ExperimentOutput<SplitReport>, EvalError> {
    let labels: Vec<FlowLabel> = data.records.iter().map(|r| r.label).collect();
    let split = pipeline::holdout_split(&labels, config.seed, true)?;
    let mut in_test = vec![false; data.len()];
    for &i in &split.test {
        in_test[i] = true;
    }
    let spec = TransformSpec::fit(
        data.records
            .iter()
            .zip(&in_test)
            .filter(|(_, t)| !**t)
            .map(|(r, _)| &r.flow),
    )?;
    let encoded = encode(&spec, &data.records);
    let (artifacts, detectors) = build_artifacts(spec, &encoded, &split, config)?;

    let test = Encoded {
        vectors: select(&encoded.vectors, &split.test),
        labels: select(&encoded.labels, &split.test),
        oov: Default::default(),
    };
    let count = |idx: &[usize], normal: bool| {
        idx.iter()
            .filter(|&&i| (labels[i] == FlowLabel::Normal) == normal)
            .count()
    };
    let sizes = SplitSizes {
        train_normal: split.train.len(),
        validation_normal: count(&split.validation, true),
        validation_anomaly: count(&split.validation, false),
        test_normal: count(&split.test, true),
        test_anomaly: count(&split.test, false),
    };
    let evaluation = evaluate_artifacts(&artifacts, &test)?;
    Ok(ExperimentOutput {
        artifacts,
        detectors,
        report: SplitReport { sizes, evaluation },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioPoint {
    /// Anomalies as a percentage of the normal count.
    pub ratio: u32,
    pub normals: usize,
    pub anomalies: usize,
    pub confusion: Confusion,
    pub f_score: Option<f64>,
}

/// F-score of the cascade on all test normals plus a seeded subsample of
/// anomalies sized `ratio`% of the normal count, for each ratio.
pub fn ratio_sweep(
    art: &Artifacts,
    test: &Encoded,
    ratios: &[u32],
    seed: u64,
) -> Result<Vec<RatioPoint>, EvalError> {
    if let Some(&bad) = ratios.iter().find(|r| **r == 0) {
        return Err(EvalError::InvalidRatio(bad));
    }
    let normals: Vec<usize> = (0..test.labels.len())
        .filter(|&i| test.labels[i] == FlowLabel::Normal)
        .collect();
    let anomalies: Vec<usize> = (0..test.labels.len())
        .filter(|&i| test.labels[i] != FlowLabel::Normal)
        .collect();
    if normals.is_empty() {
        return Err(EvalError::NoFlows);
    }
    let needed: Vec<usize> = ratios
        .iter()
        .map(|&r| (normals.len() as f64 * f64::from(r) / 100.0).round() as usize)
        .collect();
    for (&ratio, &n) in ratios.iter().zip(&needed) {
        if n == 0 || n > anomalies.len() {
            return Err(EvalError::InsufficientAnomalies {
                ratio,
                needed: n.max(1),
                available: anomalies.len(),
            });
        }
    }

    let verdicts = classify_all(&art.cascade(), &test.vectors)?;
    let mut base = Confusion::default();
    for &i in &normals {
        base.record(verdicts[i].label, Class::Normal);
    }
    ratios
        .iter()
        .zip(&needed)
        .map(|(&ratio, &n)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(u64::from(ratio));
            let mut c = base;
            for &i in anomalies.choose_multiple(&mut rng, n) {
                c.record(verdicts[i].label, Class::Anomaly);
            }
            let m = super::metrics(&c)?;
            Ok(RatioPoint {
                ratio,
                normals: normals.len(),
                anomalies: n,
                confusion: c,
                f_score: m.f_score,
            })
        })
        .collect()
}
