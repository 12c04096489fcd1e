//! The sparsity detector (D1), the reconstruction detector (D2) and the
//! cascade that escalates D1's undecided flows to D2.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::format::g6;
use crate::ingest::Class;
use crate::nn::{AeModel, ModelError, Scratch};
use crate::preprocess::SpecHash;

pub const DEFAULT_EPS_ACTIVE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("empty latent vector")]
    EmptyLatent,
    #[error("invalid thresholds: {0}")]
    Thresholds(String),
    #[error("sparse model expects {sparse} inputs but plain model expects {plain}")]
    InputMismatch { sparse: usize, plain: usize },
    #[error("models were trained against different transform specs ({sparse} vs {plain})")]
    SpecMismatch { sparse: String, plain: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub tau_min: f64,
    pub tau_max: f64,
    pub thr_ae: f64,
    #[serde(default = "default_eps_active")]
    pub eps_active: f64,
}

fn default_eps_active() -> f64 {
    DEFAULT_EPS_ACTIVE
}

impl Thresholds {
    pub fn new(tau_min: f64, tau_max: f64, thr_ae: f64) -> Result<Self, DetectError> {
        let t = Self {
            tau_min,
            tau_max,
            thr_ae,
            eps_active: DEFAULT_EPS_ACTIVE,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn with_eps_active(mut self, eps_active: f64) -> Result<Self, DetectError> {
        self.eps_active = eps_active;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), DetectError> {
        let unit = 0.0..=1.0;
        if !unit.contains(&self.tau_min) || !unit.contains(&self.tau_max) {
            return Err(DetectError::Thresholds(format!(
                "tau_min {} and tau_max {} must lie in [0, 1]",
                self.tau_min, self.tau_max
            )));
        }
        if self.tau_min > self.tau_max {
            return Err(DetectError::Thresholds(format!(
                "tau_min {} exceeds tau_max {}",
                self.tau_min, self.tau_max
            )));
        }
        if !(self.thr_ae >= 0.0) {
            return Err(DetectError::Thresholds(format!(
                "thr_ae {} must be non-negative",
                self.thr_ae
            )));
        }
        if !(self.eps_active >= 0.0) || !self.eps_active.is_finite() {
            return Err(DetectError::Thresholds(format!(
                "eps_active {} must be finite and non-negative",
                self.eps_active
            )));
        }
        Ok(())
    }
}

/// Fraction of latent units above `eps_active`.
pub fn sparsity_value(latent: &[f64], eps_active: f64) -> Result<f64, DetectError> {
    if latent.is_empty() {
        return Err(DetectError::EmptyLatent);
    }
    let active = latent.iter().filter(|z| **z > eps_active).count();
    Ok(active as f64 / latent.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum D1Outcome {
    Normal,
    Unknown,
    Anomaly,
}

/// Band rule: below `tau_min` is normal, above `tau_max` anomalous, the
/// closed band in between (boundaries included) undecided.
pub fn d1_decide(s: f64, tau_min: f64, tau_max: f64) -> D1Outcome {
    if s < tau_min {
        D1Outcome::Normal
    } else if s > tau_max {
        D1Outcome::Anomaly
    } else {
        D1Outcome::Unknown
    }
}

pub fn d2_decide(error: f64, thr_ae: f64) -> Class {
    if error > thr_ae {
        Class::Anomaly
    } else {
        Class::Normal
    }
}

/// Squared reconstruction error of `x` under `model` (either kind).
pub fn reconstruction_error(model: &AeModel, x: &[f64]) -> Result<f64, ModelError> {
    model.reconstruction_error(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    D1,
    D2,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::D1 => "D1",
            Stage::D2 => "D2",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub label: Class,
    pub stage: Stage,
    /// Sparsity value for D1 verdicts, reconstruction error for D2.
    pub score: f64,
}

impl Verdict {
    /// `id,label,stage,score[,true label]` with the score to 6 significant digits.
    pub fn to_line(&self, id: &str, truth: Option<&str>) -> String {
        let mut line = format!("{id},{},{},{}", self.label, self.stage, g6(self.score));
        if let Some(truth) = truth {
            line.push(',');
            line.push_str(truth);
        }
        line
    }
}

/// The encoder half of a sparse network, as seen by the cascade.
pub trait LatentEncoder {
    fn input_dim(&self) -> usize;
    fn spec_hash(&self) -> Option<SpecHash>;
    fn encode_into<'s>(&self, x: &[f64], scratch: &'s mut Scratch) -> Result<&'s [f64], ModelError>;
}

/// Anything that scores a flow by reconstruction error.
pub trait ReconstructionScorer {
    fn input_dim(&self) -> usize;
    fn spec_hash(&self) -> Option<SpecHash>;
    fn score(&self, x: &[f64], scratch: &mut Scratch) -> Result<f64, ModelError>;
}

impl LatentEncoder for AeModel {
    fn input_dim(&self) -> usize {
        AeModel::input_dim(self)
    }

    fn spec_hash(&self) -> Option<SpecHash> {
        AeModel::spec_hash(self)
    }

    fn encode_into<'s>(&self, x: &[f64], scratch: &'s mut Scratch) -> Result<&'s [f64], ModelError> {
        self.encode_with(x, scratch)
    }
}

impl ReconstructionScorer for AeModel {
    fn input_dim(&self) -> usize {
        AeModel::input_dim(self)
    }

    fn spec_hash(&self) -> Option<SpecHash> {
        AeModel::spec_hash(self)
    }

    fn score(&self, x: &[f64], scratch: &mut Scratch) -> Result<f64, ModelError> {
        self.reconstruction_error_with(x, scratch)
    }
}

impl<T: LatentEncoder + ?Sized> LatentEncoder for &T {
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }

    fn spec_hash(&self) -> Option<SpecHash> {
        (**self).spec_hash()
    }

    fn encode_into<'s>(&self, x: &[f64], scratch: &'s mut Scratch) -> Result<&'s [f64], ModelError> {
        (**self).encode_into(x, scratch)
    }
}

impl<T: ReconstructionScorer + ?Sized> ReconstructionScorer for &T {
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }

    fn spec_hash(&self) -> Option<SpecHash> {
        (**self).spec_hash()
    }

    fn score(&self, x: &[f64], scratch: &mut Scratch) -> Result<f64, ModelError> {
        (**self).score(x, scratch)
    }
}

/// Two-stage classifier. Only the sparse encoder runs for every flow; the
/// plain network runs only for flows D1 leaves undecided.
#[derive(Debug, Clone)]
pub struct Cascade<E = AeModel, S = AeModel> {
    encoder: E,
    scorer: S,
    thresholds: Thresholds,
}

impl<E: LatentEncoder, S: ReconstructionScorer> Cascade<E, S> {
    pub fn new(encoder: E, scorer: S, thresholds: Thresholds) -> Result<Self, DetectError> {
        thresholds.validate()?;
        if encoder.input_dim() != scorer.input_dim() {
            return Err(DetectError::InputMismatch {
                sparse: encoder.input_dim(),
                plain: scorer.input_dim(),
            });
        }
        let (a, b) = (encoder.spec_hash(), scorer.spec_hash());
        if a != b {
            let show = |h: Option<SpecHash>| h.map_or_else(|| "none".to_string(), |h| h.to_string());
            return Err(DetectError::SpecMismatch {
                sparse: show(a),
                plain: show(b),
            });
        }
        Ok(Self {
            encoder,
            scorer,
            thresholds,
        })
    }

    pub fn thresholds(&self) -> &Thresholds {
        &self.thresholds
    }

    pub fn encoder(&self) -> &E {
        &self.encoder
    }

    pub fn scorer(&self) -> &S {
        &self.scorer
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    /// Sparsity value of `x` under the sparse encoder.
    pub fn sparsity_with(&self, x: &[f64], scratch: &mut Scratch) -> Result<f64, DetectError> {
        let latent = self.encoder.encode_into(x, scratch)?;
        sparsity_value(latent, self.thresholds.eps_active)
    }

    pub fn classify_with(&self, x: &[f64], scratch: &mut Scratch) -> Result<Verdict, DetectError> {
        let t = &self.thresholds;
        let s = self.sparsity_with(x, scratch)?;
        let label = match d1_decide(s, t.tau_min, t.tau_max) {
            D1Outcome::Normal => Class::Normal,
            D1Outcome::Anomaly => Class::Anomaly,
            D1Outcome::Unknown => return self.classify_d2_with(x, scratch),
        };
        Ok(Verdict {
            label,
            stage: Stage::D1,
            score: s,
        })
    }

    pub fn classify(&self, x: &[f64]) -> Result<Verdict, DetectError> {
        self.classify_with(x, &mut Scratch::new())
    }

    /// D2 alone, skipping the sparse stage.
    pub fn classify_d2_with(&self, x: &[f64], scratch: &mut Scratch) -> Result<Verdict, DetectError> {
        let error = self.scorer.score(x, scratch)?;
        Ok(Verdict {
            label: d2_decide(error, self.thresholds.thr_ae),
            stage: Stage::D2,
            score: error,
        })
    }
}

/// Running totals for a stream of verdicts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictCounts {
    pub normal: u64,
    pub anomaly: u64,
    pub d1: u64,
    pub d2: u64,
    pub invalid: u64,
}

impl VerdictCounts {
    pub fn record(&mut self, verdict: &Verdict) {
        match verdict.label {
            Class::Normal => self.normal += 1,
            Class::Anomaly => self.anomaly += 1,
        }
        match verdict.stage {
            Stage::D1 => self.d1 += 1,
            Stage::D2 => self.d2 += 1,
        }
    }

    pub fn classified(&self) -> u64 {
        self.d1 + self.d2
    }

    /// Share of classified flows sent to D2; zero for an empty stream.
    pub fn escalation_fraction(&self) -> f64 {
        match self.classified() {
            0 => 0.0,
            n => self.d2 as f64 / n as f64,
        }
    }
}

impl fmt::Display for VerdictCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "# total={} normal={} anomaly={} d1={} d2={} invalid={} escalation={}",
            self.classified(),
            self.normal,
            self.anomaly,
            self.d1,
            self.d2,
            self.invalid,
            g6(self.escalation_fraction())
        )
    }
}
