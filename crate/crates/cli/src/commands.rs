use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use cascade_ids::calibrate::calibrate;
use cascade_ids::detect::VerdictCounts;
use cascade_ids::evaluate::{
    bench_inference, evaluate_artifacts, ratio_sweep, run_kddtest_experiment, run_split_experiment,
    MetricReport, RatioPoint,
};
use cascade_ids::ingest::{CategoryMap, Class, ColumnSchema, Dataset, LineOutcome, ParseMode, RecordReader};
use cascade_ids::nn::{self, ModelKind, Scratch};
use cascade_ids::pipeline::{
    encode, holdout_split, normal_holdout, select, ArtifactPaths, Encoded, ExperimentConfig, SplitError,
};
use cascade_ids::preprocess::TransformSpec;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::{Cli, Command, Schema, TrainingOverrides};

pub struct Context {
    config: RunConfig,
    paths: ArtifactPaths,
    categories: CategoryMap,
    mode: ParseMode,
}

impl Context {
    pub fn new(
        config_path: Option<&Path>,
        artifacts: Option<PathBuf>,
        categories: Option<PathBuf>,
        lenient: bool,
    ) -> Result<Self, CliError> {
        let config = RunConfig::load(config_path, |k| std::env::var(k).ok())?;
        let categories = match categories.or_else(|| config.categories.clone()) {
            Some(p) => CategoryMap::from_path(&p)?,
            None => CategoryMap::standard(),
        };
        let mode = if lenient || config.lenient {
            ParseMode::Lenient
        } else {
            ParseMode::Strict
        };
        Ok(Self {
            paths: ArtifactPaths::new(config.artifacts(artifacts)),
            config,
            categories,
            mode,
        })
    }

    fn dataset(&self, path: &Path, schema: Schema) -> Result<Dataset, CliError> {
        if schema == Schema::Unlabeled {
            return Err(CliError::Usage("this command needs labeled records".into()));
        }
        log::info!("reading {}", path.display());
        let data = Dataset::from_path(path, schema.into(), &self.categories, self.mode)?;
        for e in &data.skipped {
            log::warn!("{}: skipped {e}", path.display());
        }
        Ok(data)
    }

    fn experiment(&self, seed: u64, overrides: &TrainingOverrides) -> ExperimentConfig {
        let mut exp = self.config.experiment(seed);
        if let Some(epochs) = overrides.epochs {
            exp.sparse.epochs = epochs;
            exp.plain.epochs = epochs;
        }
        if let Some(r) = overrides.regularizer {
            exp.sparse.regularizer = r.into();
        }
        exp
    }

    fn write_report<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.paths.report(name);
        self.paths.save_json(&path, value)?;
        eprintln!("wrote {}", path.display());
        Ok(())
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let ctx = cli.context()?;
    match cli.command {
        Command::Preprocess { data, out } => {
            let train = ctx.config.train_path(data.train)?;
            preprocess(&ctx, &train, data.schema, out)
        }
        Command::Train {
            kind,
            seed,
            data,
            overrides,
        } => {
            let seed = ctx.config.seed(seed)?;
            let train_path = ctx.config.train_path(data.train)?;
            train(&ctx, kind.into(), seed, &train_path, data.schema, &overrides)
        }
        Command::Calibrate { seed, data } => {
            let seed = ctx.config.seed(seed)?;
            let train_path = ctx.config.train_path(data.train)?;
            calibrate_cmd(&ctx, seed, &train_path, data.schema)
        }
        Command::Evaluate { data } => {
            let test = ctx.config.test_path(data.test)?;
            evaluate(&ctx, &test, data.schema, false)
        }
        Command::Ablate { data } => {
            let test = ctx.config.test_path(data.test)?;
            evaluate(&ctx, &test, data.schema, true)
        }
        Command::Classify { input, schema } => classify(&ctx, input.as_deref(), schema.into()),
        Command::Bench {
            data,
            repetitions,
            hardware,
        } => {
            let test = ctx.config.test_path(data.test)?;
            bench(&ctx, &test, data.schema, repetitions, hardware)
        }
        Command::RatioSweep { seed, data, ratios } => {
            let seed = ctx.config.seed(seed)?;
            let test = ctx.config.test_path(data.test)?;
            sweep(&ctx, seed, &test, data.schema, &ratios)
        }
        Command::SplitExperiment {
            seed,
            data,
            overrides,
        } => {
            let seed = ctx.config.seed(seed)?;
            let train_path = ctx.config.train_path(data.train)?;
            let data = ctx.dataset(&train_path, data.schema)?;
            let out = run_split_experiment(&data, &ctx.experiment(seed, &overrides))?;
            println!("{}", out.report);
            ctx.write_report("split.json", &out.report)
        }
        Command::Experiment {
            seed,
            train,
            test,
            overrides,
        } => {
            let seed = ctx.config.seed(seed)?;
            let train_path = ctx.config.train_path(train.train)?;
            let test_path = ctx.config.test_path(test)?;
            let train_data = ctx.dataset(&train_path, train.schema)?;
            let test_data = ctx.dataset(&test_path, train.schema)?;
            let out = run_kddtest_experiment(&train_data, &test_data, &ctx.experiment(seed, &overrides))?;
            out.artifacts.save(&ctx.paths)?;
            ctx.paths.save_detectors(&out.detectors)?;
            println!("{}", out.report);
            ctx.write_report("ablation.json", &out.report)
        }
    }
}

fn preprocess(ctx: &Context, train: &Path, schema: Schema, out: Option<PathBuf>) -> Result<(), CliError> {
    let data = ctx.dataset(train, schema)?;
    let spec = TransformSpec::fit(data.records.iter().map(|r| &r.flow))?;
    let out = match out {
        None => {
            ctx.paths.save_spec(&spec)?;
            ctx.paths.spec()
        }
        Some(out) => {
            let fail = |e: &dyn std::fmt::Display| CliError::Artifact(format!("{}: {e}", out.display()));
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| fail(&e))?;
            }
            let file = File::create(&out).map_err(|e| fail(&e))?;
            spec.save(BufWriter::new(file)).map_err(|e| fail(&e))?;
            out
        }
    };
    println!("dimension {}", spec.dimension());
    println!("spec {}", spec.content_hash());
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn no_normals(path: &Path) -> impl Fn(SplitError) -> CliError + '_ {
    move |e| match e {
        SplitError::NoNormals => CliError::Data(format!("no normal flows in {}", path.display())),
        other => other.into(),
    }
}

fn train(
    ctx: &Context,
    kind: ModelKind,
    seed: u64,
    train_path: &Path,
    schema: Schema,
    overrides: &TrainingOverrides,
) -> Result<(), CliError> {
    let spec = ctx.paths.load_spec()?;
    let data = ctx.dataset(train_path, schema)?;
    let labels: Vec<_> = data.records.iter().map(|r| r.label).collect();
    let (train_idx, monitor_idx) = normal_holdout(&labels, seed).map_err(no_normals(train_path))?;
    let flows = |idx: &[usize]| spec.apply_all(idx.iter().map(|&i| &data.records[i].flow).collect::<Vec<_>>()).0;
    let (train_set, monitor) = (flows(&train_idx), flows(&monitor_idx));

    let (sparse_cfg, plain_cfg) = ctx.experiment(seed, overrides).train_configs();
    let cfg = match kind {
        ModelKind::Sparse => sparse_cfg,
        ModelKind::Plain => plain_cfg,
    };
    log::info!(
        "training {} network on {} normal flows, monitoring {}",
        kind.name(),
        train_set.len(),
        monitor.len()
    );
    let (mut model, history) = nn::train(kind, &train_set, &monitor, &cfg)?;
    model.set_spec_hash(spec.content_hash());
    ctx.paths.save_model(&model)?;
    ctx.paths.save_json(&ctx.paths.history(kind), &history)?;
    println!(
        "{} network {} -> {} -> {}",
        kind.name(),
        model.input_dim(),
        model.hidden_dim(),
        model.input_dim()
    );
    if let (Some(t), Some(v)) = (history.train_loss.last(), history.validation_loss.last()) {
        println!("final loss {t:.6} (monitor {v:.6})");
    }
    eprintln!("wrote {}", ctx.paths.model(kind).display());
    Ok(())
}

fn calibrate_cmd(ctx: &Context, seed: u64, train_path: &Path, schema: Schema) -> Result<(), CliError> {
    let spec = ctx.paths.load_spec()?;
    let sparse = ctx.paths.load_model(ModelKind::Sparse, &spec)?;
    let plain = ctx.paths.load_model(ModelKind::Plain, &spec)?;
    let data = ctx.dataset(train_path, schema)?;
    let encoded = encode(&spec, &data.records);
    let split = holdout_split(&encoded.labels, seed, false).map_err(no_normals(train_path))?;
    let validation = select(&encoded.vectors, &split.validation);
    let labels: Vec<Class> = split.validation.iter().map(|&i| encoded.labels[i].class()).collect();
    let report = calibrate(
        &sparse,
        &plain,
        &validation,
        &labels,
        &ctx.config.band,
        ctx.config.eps_active,
        seed,
    )?;
    ctx.paths.save_json(&ctx.paths.calibration(), &report)?;
    let t = report.thresholds;
    println!("tau_min {} tau_max {} thr_ae {}", t.tau_min, t.tau_max, t.thr_ae);
    println!(
        "validation {} normal / {} anomalous, escalation {:.4}",
        report.validation_normal, report.validation_anomaly, report.escalation_fraction
    );
    eprintln!("wrote {}", ctx.paths.calibration().display());
    Ok(())
}

#[derive(Serialize)]
struct EvaluationReport<'a> {
    seed: u64,
    test: String,
    #[serde(flatten)]
    report: &'a MetricReport,
}

fn load_test(ctx: &Context, test: &Path, schema: Schema, spec: &TransformSpec) -> Result<Encoded, CliError> {
    let data = ctx.dataset(test, schema)?;
    Ok(encode(spec, &data.records))
}

fn evaluate(ctx: &Context, test: &Path, schema: Schema, ablate: bool) -> Result<(), CliError> {
    let art = ctx.paths.load_all()?;
    let encoded = load_test(ctx, test, schema, &art.spec)?;
    let report = evaluate_artifacts(&art, &encoded)?;
    if ablate {
        println!("{report}");
        return ctx.write_report("ablation.json", &report);
    }
    println!("{} records, seed {}", report.records, report.seed);
    println!("{}", report.cascade);
    ctx.write_report(
        "evaluation.json",
        &EvaluationReport {
            seed: report.seed,
            test: test.display().to_string(),
            report: &report.cascade,
        },
    )
}

fn open_input(path: Option<&Path>) -> Result<Box<dyn BufRead>, CliError> {
    match path {
        None => Ok(Box::new(io::stdin().lock())),
        Some(p) if p.as_os_str() == "-" => Ok(Box::new(io::stdin().lock())),
        Some(p) => File::open(p)
            .map(|f| Box::new(BufReader::new(f)) as Box<dyn BufRead>)
            .map_err(|e| CliError::Data(format!("cannot open {}: {e}", p.display()))),
    }
}

fn classify(ctx: &Context, input: Option<&Path>, schema: ColumnSchema) -> Result<(), CliError> {
    let art = ctx.paths.load_all()?;
    let cascade = art.cascade();
    let reader = open_input(input)?;
    let mut out = BufWriter::new(io::stdout().lock());
    let write_err = |e: io::Error| CliError::Data(format!("cannot write output: {e}"));
    let mut counts = VerdictCounts::default();
    let mut scratch = Scratch::new();
    for outcome in RecordReader::new(reader, schema, &ctx.categories) {
        match outcome.map_err(|e| CliError::Data(format!("read failure: {e}")))? {
            LineOutcome::Record(r) => {
                let x = art.spec.apply(&r.flow);
                let v = cascade
                    .classify_with(&x, &mut scratch)
                    .map_err(|e| CliError::Artifact(e.to_string()))?;
                counts.record(&v);
                writeln!(out, "{}", v.to_line(&r.line.to_string(), r.flow.label.as_deref())).map_err(write_err)?;
            }
            LineOutcome::Invalid(e) => match ctx.mode {
                ParseMode::Strict => {
                    out.flush().map_err(write_err)?;
                    return Err(CliError::Data(e.to_string()));
                }
                ParseMode::Lenient => {
                    counts.invalid += 1;
                    writeln!(out, "# {e}").map_err(write_err)?;
                }
            },
        }
    }
    writeln!(out, "{counts}").map_err(write_err)?;
    out.flush().map_err(write_err)
}

fn bench(
    ctx: &Context,
    test: &Path,
    schema: Schema,
    repetitions: Option<usize>,
    hardware: Option<String>,
) -> Result<(), CliError> {
    let art = ctx.paths.load_all()?;
    let encoded = load_test(ctx, test, schema, &art.spec)?;
    let report = bench_inference(
        &art.sparse,
        &art.plain,
        art.calibration.thresholds,
        art.calibration.thr_sparse_reconstruction,
        &encoded.vectors,
        repetitions.unwrap_or(ctx.config.bench.repetitions),
        hardware.or_else(|| ctx.config.bench.hardware.clone()),
    )?;
    println!("{report}");
    ctx.write_report("bench.json", &report)
}

#[derive(Serialize)]
struct SweepReport<'a> {
    seed: u64,
    points: &'a [RatioPoint],
}

fn sweep(ctx: &Context, seed: u64, test: &Path, schema: Schema, ratios: &[u32]) -> Result<(), CliError> {
    let art = ctx.paths.load_all()?;
    let encoded = load_test(ctx, test, schema, &art.spec)?;
    let points = ratio_sweep(&art, &encoded, ratios, seed)?;
    println!("{:>8}{:>10}{:>11}{:>10}", "ratio %", "normal", "anomalous", "F-score");
    for p in &points {
        let f = p.f_score.map_or_else(|| "-".to_string(), |f| format!("{f:.4}"));
        println!("{:>8}{:>10}{:>11}{:>10}", p.ratio, p.normals, p.anomalies, f);
    }
    ctx.write_report("ratio_sweep.json", &SweepReport { seed, points: &points })
}
