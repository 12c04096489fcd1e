//! Threshold selection on a labeled validation set.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::{Cascade, DetectError, LatentEncoder, ReconstructionScorer, Thresholds};
use crate::evaluate::Confusion;
use crate::ingest::Class;
use crate::nn::{AeModel, ModelError, Scratch};
use crate::preprocess::{FeatureVector, SpecHash};

#[derive(Debug, Error)]
pub enum CalibrateError {
    #[error("calibration needs both normal and anomalous validation flows")]
    SingleClass,
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("non-finite score at index {0}")]
    NonFinite(usize),
    #[error("invalid band search configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Flows with `score >= threshold` are called anomalous.
    pub threshold: f64,
    pub recall: f64,
    /// FP / (FP + TN).
    pub fpr: f64,
}

fn check(scores: &[f64], labels: &[Class]) -> Result<(usize, usize), CalibrateError> {
    if scores.len() != labels.len() {
        return Err(CalibrateError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(CalibrateError::NonFinite(i));
    }
    let anomalies = labels.iter().filter(|l| **l == Class::Anomaly).count();
    let normals = labels.len() - anomalies;
    if anomalies == 0 || normals == 0 {
        return Err(CalibrateError::SingleClass);
    }
    Ok((anomalies, normals))
}

fn sorted_pairs(scores: &[f64], labels: &[Class]) -> Vec<(f64, Class)> {
    let mut pairs: Vec<(f64, Class)> = scores.iter().copied().zip(labels.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

/// One point per distinct score, from the strictest threshold down, framed by
/// the (0, 0) and (1, 1) sentinels.
pub fn roc_curve(scores: &[f64], labels: &[Class]) -> Result<Vec<RocPoint>, CalibrateError> {
    let (pos, neg) = check(scores, labels)?;
    let pairs = sorted_pairs(scores, labels);
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        recall: 0.0,
        fpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = pairs.len();
    while i > 0 {
        let t = pairs[i - 1].0;
        while i > 0 && pairs[i - 1].0 == t {
            match pairs[i - 1].1 {
                Class::Anomaly => tp += 1,
                Class::Normal => fp += 1,
            }
            i -= 1;
        }
        points.push(RocPoint {
            threshold: t,
            recall: tp as f64 / pos as f64,
            fpr: fp as f64 / neg as f64,
        });
    }
    points.push(RocPoint {
        threshold: f64::NEG_INFINITY,
        recall: 1.0,
        fpr: 1.0,
    });
    Ok(points)
}

/// The threshold where recall is closest to 1 − FPR, with `score > t` called
/// anomalous. Candidates are midpoints between consecutive distinct scores
/// plus one sentinel below and above; ties go to the larger threshold.
pub fn select_thr_ae(scores: &[f64], labels: &[Class]) -> Result<f64, CalibrateError> {
    let (pos, neg) = check(scores, labels)?;
    let pairs = sorted_pairs(scores, labels);
    let n = pairs.len();
    // Start above everything: nothing flagged.
    let mut best_t = pairs[n - 1].0 + 1.0;
    let mut best_gap = 1.0;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = n;
    while i > 0 {
        let t = pairs[i - 1].0;
        while i > 0 && pairs[i - 1].0 == t {
            match pairs[i - 1].1 {
                Class::Anomaly => tp += 1,
                Class::Normal => fp += 1,
            }
            i -= 1;
        }
        let candidate = if i > 0 {
            pairs[i - 1].0 + (t - pairs[i - 1].0) / 2.0
        } else {
            pairs[0].0 - 1.0
        };
        let recall = tp as f64 / pos as f64;
        let specificity = 1.0 - fp as f64 / neg as f64;
        let gap = (recall - specificity).abs();
        // Candidates arrive in decreasing order, so only a strict win moves us down.
        if gap < best_gap {
            best_gap = gap;
            best_t = candidate;
        }
    }
    Ok(best_t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandObjective {
    /// Prefer bands whose D1 decisions are correct more often.
    #[default]
    MaxAccuracy,
    /// Prefer bands with the higher F-score over D1 decisions.
    MaxFScore,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BandSearchConfig {
    /// Number of quantiles used as candidate cut points.
    pub resolution: usize,
    /// Minimum share of correct decisions in each decided region.
    pub purity: f64,
    pub objective: BandObjective,
}

impl Default for BandSearchConfig {
    fn default() -> Self {
        Self {
            resolution: 101,
            purity: 0.95,
            objective: BandObjective::MaxAccuracy,
        }
    }
}

impl BandSearchConfig {
    pub fn validate(&self) -> Result<(), CalibrateError> {
        if self.resolution < 2 {
            return Err(CalibrateError::Config("resolution must be at least 2".into()));
        }
        if !(self.purity > 0.0 && self.purity <= 1.0) {
            return Err(CalibrateError::Config("purity must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Candidate cut points: 0, 1, `resolution` quantiles of the values and the
/// midpoints between consecutive distinct quantiles. Sorted, deduplicated.
pub fn band_candidates(values: &[f64], resolution: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut qs: Vec<f64> = (0..resolution)
        .map(|k| quantile(&sorted, k as f64 / (resolution - 1) as f64).clamp(0.0, 1.0))
        .collect();
    qs.dedup();
    let mids: Vec<f64> = qs.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0).collect();
    let mut out = vec![0.0, 1.0];
    out.extend(qs);
    out.extend(mids);
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// Counts for one (τ_min, τ_max) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BandCounts {
    /// Flows with s < τ_min, and the anomalies among them.
    pub below: usize,
    pub below_anomalies: usize,
    /// Flows with s > τ_max, and the normals among them.
    pub above: usize,
    pub above_normals: usize,
}

impl BandCounts {
    pub fn decided(&self) -> usize {
        self.below + self.above
    }

    pub fn errors(&self) -> usize {
        self.below_anomalies + self.above_normals
    }

    pub fn feasible(&self, purity: f64) -> bool {
        let slack = 1.0 - purity;
        self.below_anomalies as f64 <= slack * self.below as f64
            && self.above_normals as f64 <= slack * self.above as f64
    }

    pub fn objective(&self, objective: BandObjective) -> f64 {
        match objective {
            BandObjective::MaxAccuracy => (self.decided() - self.errors()) as f64,
            BandObjective::MaxFScore => {
                let tp = (self.above - self.above_normals) as f64;
                let denom = 2.0 * tp + self.above_normals as f64 + self.below_anomalies as f64;
                if denom == 0.0 {
                    0.0
                } else {
                    2.0 * tp / denom
                }
            }
        }
    }
}

/// Selection order: more D1 decisions, then the objective, then the wider
/// band, then the smaller τ_min. `Greater` means `a` wins.
pub fn compare_bands(
    a: (f64, f64, BandCounts),
    b: (f64, f64, BandCounts),
    objective: BandObjective,
) -> Ordering {
    a.2.decided()
        .cmp(&b.2.decided())
        .then_with(|| a.2.objective(objective).total_cmp(&b.2.objective(objective)))
        .then_with(|| (a.1 - a.0).total_cmp(&(b.1 - b.0)))
        .then_with(|| b.0.total_cmp(&a.0))
}

/// Chooses (τ_min, τ_max). Feasible bands keep the error share at or below
/// `1 − purity` in each decided region. The (0, 1) band decides nothing and is
/// always feasible, so it is the fallback.
pub fn select_tau_band(
    values: &[f64],
    labels: &[Class],
    config: &BandSearchConfig,
) -> Result<(f64, f64), CalibrateError> {
    config.validate()?;
    check(values, labels)?;
    let pairs = sorted_pairs(values, labels);
    if pairs[0].0 == pairs[pairs.len() - 1].0 {
        return Ok((0.0, 1.0));
    }
    let candidates = band_candidates(values, config.resolution);

    let sorted: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut anomalies_before = Vec::with_capacity(pairs.len() + 1);
    anomalies_before.push(0usize);
    for p in &pairs {
        let last = *anomalies_before.last().unwrap();
        anomalies_before.push(last + usize::from(p.1 == Class::Anomaly));
    }
    let total_anomalies = anomalies_before[pairs.len()];
    let n = pairs.len();

    // Per cut point: (flows below, anomalies below, flows above, normals above).
    let per_cut: Vec<(usize, usize, usize, usize)> = candidates
        .iter()
        .map(|&c| {
            let lt = sorted.partition_point(|v| *v < c);
            let le = sorted.partition_point(|v| *v <= c);
            let above = n - le;
            let anomalies_above = total_anomalies - anomalies_before[le];
            (lt, anomalies_before[lt], above, above - anomalies_above)
        })
        .collect();

    let mut best: Option<(f64, f64, BandCounts)> = None;
    for (i, &lo) in candidates.iter().enumerate() {
        let (below, below_anomalies, _, _) = per_cut[i];
        for (j, &hi) in candidates.iter().enumerate().skip(i) {
            let (_, _, above, above_normals) = per_cut[j];
            let counts = BandCounts {
                below,
                below_anomalies,
                above,
                above_normals,
            };
            if !counts.feasible(config.purity) {
                continue;
            }
            let cand = (lo, hi, counts);
            if best.map_or(true, |b| compare_bands(cand, b, config.objective) == Ordering::Greater) {
                best = Some(cand);
            }
        }
    }
    Ok(best.map_or((0.0, 1.0), |b| (b.0, b.1)))
}

/// Reconstruction errors of `vectors`, computed in parallel.
pub fn reconstruction_scores<S: ReconstructionScorer + Sync>(
    scorer: &S,
    vectors: &[FeatureVector],
) -> Result<Vec<f64>, ModelError> {
    vectors
        .par_iter()
        .map_init(Scratch::new, |scratch, x| scorer.score(x, scratch))
        .collect()
}

/// Sparsity values of `vectors` under `encoder`, computed in parallel.
pub fn sparsity_scores<E: LatentEncoder + Sync>(
    encoder: &E,
    vectors: &[FeatureVector],
    eps_active: f64,
) -> Result<Vec<f64>, DetectError> {
    vectors
        .par_iter()
        .map_init(Scratch::new, |scratch, x| {
            let latent = encoder.encode_into(x, scratch)?;
            crate::detect::sparsity_value(latent, eps_active)
        })
        .collect()
}

pub const REPORT_FORMAT: &str = "cascade-ids/calibration";
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub spec_hash: SpecHash,
    pub thresholds: Thresholds,
    /// Threshold on the sparse network's own reconstruction error, used only
    /// by the D1-by-reconstruction ablation.
    pub thr_sparse_reconstruction: f64,
    pub band_search: BandSearchConfig,
    pub validation_normal: usize,
    pub validation_anomaly: usize,
    /// Cascade verdicts on the validation set.
    pub validation_confusion: Confusion,
    pub escalation_fraction: f64,
}

impl CalibrationReport {
    pub fn validate(&self) -> Result<(), String> {
        if self.format != REPORT_FORMAT {
            return Err(format!("not a calibration report (format {:?})", self.format));
        }
        if self.version != REPORT_VERSION {
            return Err(format!(
                "unsupported calibration report version {} (expected {REPORT_VERSION})",
                self.version
            ));
        }
        self.thresholds.validate().map_err(|e| e.to_string())
    }
}

/// Picks all thresholds on a labeled validation set and records how the
/// resulting cascade does on it.
pub fn calibrate(
    sparse: &AeModel,
    plain: &AeModel,
    validation: &[FeatureVector],
    labels: &[Class],
    band: &BandSearchConfig,
    eps_active: f64,
    seed: u64,
) -> Result<CalibrationReport, CalibrateError> {
    check(&vec![0.0; validation.len()], labels)?;
    let plain_scores = reconstruction_scores(plain, validation)?;
    let thr_ae = select_thr_ae(&plain_scores, labels)?.max(0.0);
    let sparsity = sparsity_scores(sparse, validation, eps_active)?;
    let (tau_min, tau_max) = select_tau_band(&sparsity, labels, band)?;
    let sparse_scores = reconstruction_scores(sparse, validation)?;
    let thr_sparse_reconstruction = select_thr_ae(&sparse_scores, labels)?.max(0.0);

    let thresholds = Thresholds::new(tau_min, tau_max, thr_ae)?.with_eps_active(eps_active)?;
    let cascade = Cascade::new(sparse, plain, thresholds)?;
    let verdicts: Vec<_> = validation
        .par_iter()
        .map_init(Scratch::new, |scratch, x| cascade.classify_with(x, scratch))
        .collect::<Result<_, _>>()?;
    let predicted: Vec<Class> = verdicts.iter().map(|v| v.label).collect();
    let escalated = verdicts
        .iter()
        .filter(|v| v.stage == crate::detect::Stage::D2)
        .count();
    let confusion = Confusion::from_classes(&predicted, labels).expect("equal lengths");

    Ok(CalibrationReport {
        format: REPORT_FORMAT.into(),
        version: REPORT_VERSION,
        seed,
        spec_hash: sparse.spec_hash().unwrap_or(SpecHash([0; 32])),
        thresholds,
        thr_sparse_reconstruction,
        band_search: *band,
        validation_normal: confusion.tn + confusion.fp,
        validation_anomaly: confusion.tp + confusion.fn_,
        validation_confusion: confusion,
        escalation_fraction: escalated as f64 / validation.len() as f64,
    })
}
