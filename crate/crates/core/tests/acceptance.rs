//! Acceptance harness. Prints one line per criterion and exits nonzero if any
//! fails. The dataset criteria run only when `NSL_KDD_DIR` points at a
//! directory holding `KDDTrain+.txt` and `KDDTest+.txt`.

mod common;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use cascade_ids::evaluate::{
    bench_inference, ratio_sweep, run_kddtest_experiment, run_split_experiment, AblationReport,
    ExperimentOutput,
};
use cascade_ids::ingest::{CategoryMap, ColumnSchema, Dataset, ParseMode};
use cascade_ids::pipeline::{encode, Encoded, ExperimentConfig};

const SEED: u64 = 20_190_801;

const DATASET_CRITERIA: [&str; 5] = [
    "1 end-to-end test-set reproduction",
    "2 ablation ordering",
    "3 in-file split experiment",
    "4 ratio sweep",
    "5 relative timing",
];

#[derive(Default)]
struct Tally {
    failed: usize,
}

impl Tally {
    fn report(&mut self, name: &str, outcome: Result<String, String>) {
        match outcome {
            Ok(detail) => println!("PASS    {name}: {detail}"),
            Err(detail) => {
                self.failed += 1;
                println!("FAIL    {name}: {detail}");
            }
        }
    }

    fn skip(&self, name: &str, why: &str) {
        println!("SKIPPED {name}: {why}");
    }

    fn timed(&mut self, name: &str, check: impl FnOnce() -> common::Check) {
        let start = Instant::now();
        let outcome = check().map(|s| format!("{s} [{:.1}s]", start.elapsed().as_secs_f64()));
        self.report(name, outcome);
    }
}

fn within(name: &str, got: f64, target: f64, tol: f64) -> Result<String, String> {
    let line = format!("{name} {got:.2} (target {target} +/- {tol})");
    if (got - target).abs() <= tol {
        Ok(line)
    } else {
        Err(line)
    }
}

fn all(parts: Vec<Result<String, String>>) -> Result<String, String> {
    let failed = parts.iter().any(|p| p.is_err());
    let text = parts
        .into_iter()
        .map(|p| p.unwrap_or_else(|e| format!("{e} <- out of range")))
        .collect::<Vec<_>>()
        .join("; ");
    if failed {
        Err(text)
    } else {
        Ok(text)
    }
}

fn load(dir: &Path, file: &str) -> Result<Dataset, String> {
    Dataset::from_path(
        &dir.join(file),
        ColumnSchema::NSL_KDD,
        &CategoryMap::standard(),
        ParseMode::Strict,
    )
    .map_err(|e| e.to_string())
}

fn pct(x: Option<f64>) -> f64 {
    x.map_or(f64::NAN, |v| v * 100.0)
}

fn end_to_end(out: &ExperimentOutput<AblationReport>, test_len: usize) -> Result<String, String> {
    let c = &out.report.cascade;
    let decided = c.d1_decided.unwrap_or(0) + c.d2_decided.unwrap_or(0);
    let mut parts = vec![
        within("ACC", c.metrics.accuracy * 100.0, 90.17, 2.0),
        within("RE", pct(c.metrics.recall), 92.05, 3.0),
        within("FS", pct(c.metrics.f_score), 91.42, 2.5),
    ];
    if decided != test_len {
        parts.push(Err(format!("{decided} verdicts for {test_len} records")));
    }
    parts.push(Ok(format!("seed {}", out.artifacts.calibration.seed)));
    all(parts)
}

fn ablation(r: &AblationReport) -> Result<String, String> {
    let (c, d2, d1) = (
        r.cascade.metrics.accuracy * 100.0,
        r.d2_standalone.metrics.accuracy * 100.0,
        r.d1_reconstruction.metrics.accuracy * 100.0,
    );
    let order = format!("cascade {c:.2} > D2 {d2:.2} > D1-recon {d1:.2}");
    all(vec![
        if c > d2 && d2 > d1 { Ok(order) } else { Err(order) },
        within("D2 ACC", d2, 89.14, 2.0),
    ])
}

fn dataset_criteria(tally: &mut Tally, dir: &Path) {
    let names = DATASET_CRITERIA;
    let (train, test) = match (load(dir, "KDDTrain+.txt"), load(dir, "KDDTest+.txt")) {
        (Ok(a), Ok(b)) => (a, b),
        (a, b) => {
            let why = a.err().or(b.err()).unwrap_or_default();
            for n in names {
                tally.report(n, Err(format!("cannot load dataset: {why}")));
            }
            return;
        }
    };
    let config = ExperimentConfig {
        seed: SEED,
        ..ExperimentConfig::default()
    };

    let start = Instant::now();
    let out = match run_kddtest_experiment(&train, &test, &config) {
        Ok(o) => o,
        Err(e) => {
            for n in &names[..2] {
                tally.report(n, Err(e.to_string()));
            }
            return;
        }
    };
    let minutes = start.elapsed().as_secs_f64() / 60.0;
    println!("{}", out.report);
    tally.report(
        names[0],
        end_to_end(&out, test.len()).map(|s| format!("{s}, {minutes:.1} min")),
    );
    tally.report(names[1], ablation(&out.report));

    let split = run_split_experiment(&train, &config).map_err(|e| e.to_string());
    tally.report(
        names[2],
        split.and_then(|s| {
            let sz = s.report.sizes;
            let m = &s.report.evaluation.cascade.metrics;
            let sizes = (sz.train_normal, sz.validation_normal + sz.validation_anomaly, sz.test_normal + sz.test_anomaly);
            let size_line = format!("sizes {}/{}/{}", sizes.0, sizes.1, sizes.2);
            all(vec![
                within("ACC", m.accuracy * 100.0, 96.45, 1.5),
                within("FS", pct(m.f_score), 96.49, 1.5),
                if sizes == (53_873, 6_735, 6_735) { Ok(size_line) } else { Err(size_line) },
            ])
        }),
    );

    let encoded: Encoded = encode(&out.artifacts.spec, &test.records);
    let sweep = ratio_sweep(&out.artifacts, &encoded, &[10, 20, 30, 40, 50], SEED).map_err(|e| e.to_string());
    tally.report(
        names[3],
        sweep.and_then(|points| {
            let f: Vec<f64> = points.iter().map(|p| p.f_score.unwrap_or(f64::NAN)).collect();
            let series = f.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(" ");
            all(vec![
                if f.windows(2).all(|w| w[1] > w[0]) {
                    Ok(format!("increasing {series}"))
                } else {
                    Err(format!("not increasing {series}"))
                },
                within("F at 10%", f[0], 0.58, 0.07),
                within("F at 50%", f[4], 0.85, 0.05),
            ])
        }),
    );

    let art = &out.artifacts;
    let timing = bench_inference(
        &art.sparse,
        &art.plain,
        art.calibration.thresholds,
        art.calibration.thr_sparse_reconstruction,
        &encoded.vectors,
        5,
        None,
    )
    .map_err(|e| e.to_string());
    tally.report(
        names[4],
        timing.and_then(|t| {
            let line = format!(
                "cascade/D2 {:.3} (limit 0.9), escalation {:.3}",
                t.ratio, t.escalation_fraction
            );
            if t.ratio <= 0.9 {
                Ok(line)
            } else {
                Err(line)
            }
        }),
    );
}

fn main() -> ExitCode {
    let mut tally = Tally::default();

    tally.timed("6 gradient check", || common::gradient_check(100, 2024));
    tally.timed("6 preprocessing", || common::preprocessing_properties(1));
    tally.timed("6 detection", || common::detection_properties(2));
    tally.timed("6 calibration", || common::calibration_properties(3));
    tally.timed("6 metrics", || common::metrics_properties(1000, 4));
    tally.timed("fixture smoke (2000 records)", || common::smoke_pipeline(2000, 5));

    match std::env::var_os("NSL_KDD_DIR").map(PathBuf::from) {
        Some(dir) => dataset_criteria(&mut tally, &dir),
        None => {
            for n in DATASET_CRITERIA {
                tally.skip(n, "NSL_KDD_DIR not set");
            }
        }
    }

    if tally.failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{} criteria failed", tally.failed);
        ExitCode::FAILURE
    }
}
