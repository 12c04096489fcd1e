use std::fmt;
use std::hint::black_box;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::detect::{d2_decide, Cascade, Stage, Thresholds};
use crate::nn::{AeModel, Scratch};
use crate::preprocess::FeatureVector;

/// Mean wall-clock cost per flow, in nanoseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub flows: usize,
    pub repetitions: usize,
    pub cascade_ns: f64,
    pub d2_standalone_ns: f64,
    pub d1_reconstruction_ns: f64,
    /// cascade / D2 standalone.
    pub ratio: f64,
    pub escalation_fraction: f64,
    pub hardware: Option<String>,
    pub os: String,
    pub arch: String,
}

impl fmt::Display for TimingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} flows x {} repetitions, single thread ({} {}{})",
            self.flows,
            self.repetitions,
            self.os,
            self.arch,
            self.hardware.as_deref().map(|h| format!(", {h}")).unwrap_or_default()
        )?;
        writeln!(f, "{:<26}{:>12.3}", "cascade (us/flow)", self.cascade_ns / 1e3)?;
        writeln!(f, "{:<26}{:>12.3}", "D2 alone (us/flow)", self.d2_standalone_ns / 1e3)?;
        writeln!(f, "{:<26}{:>12.3}", "D1 recon alone (us/flow)", self.d1_reconstruction_ns / 1e3)?;
        writeln!(f, "{:<26}{:>12.3}", "cascade / D2", self.ratio)?;
        write!(f, "{:<26}{:>12.3}", "escalation fraction", self.escalation_fraction)
    }
}

fn run_cascade(c: &Cascade<&AeModel, &AeModel>, flows: &[FeatureVector], scratch: &mut Scratch) -> usize {
    let mut escalated = 0;
    for x in flows {
        let v = c.classify_with(x, scratch).expect("dimensions checked");
        escalated += usize::from(v.stage == Stage::D2);
        black_box(v);
    }
    escalated
}

fn run_single(model: &AeModel, thr: f64, flows: &[FeatureVector], scratch: &mut Scratch) {
    for x in flows {
        let e = model.reconstruction_error_with(x, scratch).expect("dimensions checked");
        black_box(d2_decide(e, thr));
    }
}

/// Sequential timing of the three detectors on identical flows. Each
/// repetition runs every mode once, in rotating order, after one warm-up pass.
pub fn bench_inference(
    sparse: &AeModel,
    plain: &AeModel,
    thresholds: Thresholds,
    thr_sparse_reconstruction: f64,
    flows: &[FeatureVector],
    repetitions: usize,
    hardware: Option<String>,
) -> Result<TimingReport, EvalError> {
    if flows.is_empty() {
        return Err(EvalError::NoFlows);
    }
    if repetitions < 3 {
        return Err(EvalError::Repetitions(repetitions));
    }
    let cascade = Cascade::new(sparse, plain, thresholds)?;
    for x in flows {
        if x.len() != cascade.input_dim() {
            return Err(crate::nn::ModelError::Dimension {
                expected: cascade.input_dim(),
                found: x.len(),
            }
            .into());
        }
    }
    let mut scratch = Scratch::new();
    let escalated = run_cascade(&cascade, flows, &mut scratch);
    run_single(plain, thresholds.thr_ae, flows, &mut scratch);
    run_single(sparse, thr_sparse_reconstruction, flows, &mut scratch);

    let mut totals = [Duration::ZERO; 3];
    for rep in 0..repetitions {
        for k in 0..3 {
            let mode = (rep + k) % 3;
            let start = Instant::now();
            match mode {
                0 => {
                    black_box(run_cascade(&cascade, flows, &mut scratch));
                }
                1 => run_single(plain, thresholds.thr_ae, flows, &mut scratch),
                _ => run_single(sparse, thr_sparse_reconstruction, flows, &mut scratch),
            }
            totals[mode] += start.elapsed();
        }
    }
    let per_flow = |d: Duration| d.as_nanos() as f64 / (repetitions * flows.len()) as f64;
    let cascade_ns = per_flow(totals[0]);
    let d2_standalone_ns = per_flow(totals[1]);
    Ok(TimingReport {
        flows: flows.len(),
        repetitions,
        cascade_ns,
        d2_standalone_ns,
        d1_reconstruction_ns: per_flow(totals[2]),
        ratio: cascade_ns / d2_standalone_ns,
        escalation_fraction: escalated as f64 / flows.len() as f64,
        hardware,
        os: std::env::consts::OS.into(),
        arch: std::env::consts::ARCH.into(),
    })
}
