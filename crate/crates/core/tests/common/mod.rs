//! Checks shared by the integration tests and the acceptance harness. Each
//! returns a short summary on success and a diagnostic on failure.
#![allow(dead_code)]

use std::cell::Cell;

use cascade_ids::calibrate::{
    band_candidates, compare_bands, roc_curve, select_tau_band, select_thr_ae, BandCounts,
    BandObjective, BandSearchConfig,
};
use cascade_ids::detect::{
    d1_decide, sparsity_value, Cascade, D1Outcome, ReconstructionScorer, Stage, Thresholds,
};
use cascade_ids::evaluate::{confusion, metrics, Confusion};
use cascade_ids::ingest::{CategoryMap, Class, ColumnSchema, Dataset, ParseMode};
use cascade_ids::nn::{batch_gradients, batch_loss, AeModel, Matrix, ModelError, ModelKind, Objective, Scratch};
use cascade_ids::pipeline::encode;
use cascade_ids::preprocess::{FeatureVector, SpecHash, TransformSpec};
use cascade_ids_fixtures::FixtureConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<String, String>;

pub fn synthetic_dataset(config: &FixtureConfig) -> Dataset {
    let text = cascade_ids_fixtures::csv(config);
    Dataset::from_reader(
        text.as_bytes(),
        ColumnSchema::NSL_KDD,
        &CategoryMap::standard(),
        ParseMode::Strict,
    )
    .expect("fixture records parse")
}

/// Encoded normal flows, split 90/10.
pub fn synthetic_normals(records: usize, seed: u64) -> (Vec<FeatureVector>, Vec<FeatureVector>) {
    let data = synthetic_dataset(&FixtureConfig {
        records,
        anomaly_fraction: 0.0,
        seed,
        ..FixtureConfig::default()
    });
    let spec = TransformSpec::fit(data.records.iter().map(|r| &r.flow)).unwrap();
    let mut vectors = encode(&spec, &data.records).vectors;
    let monitor = vectors.split_off(records * 9 / 10);
    (vectors, monitor)
}

fn random_model(rng: &mut ChaCha8Rng, kind: ModelKind, n: usize, h: usize) -> AeModel {
    let mut u = |scale: f64| rng.random_range(-scale..scale);
    let w1 = Matrix::from_fn(h, n, |_, _| u(1.0));
    let b1 = (0..h).map(|_| u(0.5)).collect();
    let w2 = Matrix::from_fn(n, h, |_, _| u(1.0));
    let b2 = (0..n).map(|_| u(0.5)).collect();
    AeModel::from_parameters(kind, w1, b1, w2, b2).unwrap()
}

fn random_inputs(rng: &mut ChaCha8Rng, count: usize, n: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            (0..n)
                .map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random::<f64>() })
                .collect()
        })
        .collect()
}

/// Analytic gradients against central differences with step 1e-8 on random
/// 5-4-5 networks. The error measure is ‖a − d‖ / (‖a‖ + ‖d‖) over the
/// full gradient of each model.
pub fn gradient_check(models: usize, seed: u64) -> Check {
    const STEP: f64 = 1e-8;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let objectives = [
        ("plain", ModelKind::Plain, Objective::Reconstruction),
        (
            "kl",
            ModelKind::Sparse,
            Objective::KlSparsity {
                rho: 0.05,
                beta: 0.5,
            },
        ),
        ("l1", ModelKind::Sparse, Objective::L1Activity { coefficient: 0.1 }),
    ];
    let mut worst = 0.0f64;
    for m in 0..models {
        for (name, kind, objective) in objectives {
            let mut model = random_model(&mut rng, kind, 5, 4);
            let batch = random_inputs(&mut rng, 3, 5);
            let (_, grads) = batch_gradients(&model, &batch, objective).map_err(|e| e.to_string())?;
            let analytic: Vec<f64> = grads.tensors().iter().flat_map(|t| t.iter().copied()).collect();
            let mut numeric = Vec::with_capacity(analytic.len());
            for t in 0..4 {
                for k in 0..model.parameters()[t].len() {
                    let original = model.parameters()[t][k];
                    model.parameters_mut()[t][k] = original + STEP;
                    let up = batch_loss(&model, &batch, objective).unwrap();
                    model.parameters_mut()[t][k] = original - STEP;
                    let down = batch_loss(&model, &batch, objective).unwrap();
                    model.parameters_mut()[t][k] = original;
                    numeric.push((up - down) / (2.0 * STEP));
                }
            }
            let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
            let diff = norm(&mut analytic.iter().zip(&numeric).map(|(a, d)| a - d));
            let scale = norm(&mut analytic.iter().copied()) + norm(&mut numeric.iter().copied());
            let rel = if scale == 0.0 { 0.0 } else { diff / scale };
            worst = worst.max(rel);
            if rel >= 1e-4 {
                return Err(format!("model {m} ({name}): relative error {rel:.3e}"));
            }
        }
    }
    Ok(format!("{models} models x 3 objectives, worst relative error {worst:.2e}"))
}

/// Min/max scaling, one-hot structure, constant columns and bit-exact
/// persistence, over several synthetic datasets.
pub fn preprocessing_properties(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for round in 0..5 {
        let data = synthetic_dataset(&FixtureConfig {
            records: 300,
            seed: rng.random(),
            unlisted_fraction: 0.05,
            ..FixtureConfig::default()
        });
        let flows: Vec<_> = data.records.iter().map(|r| &r.flow).collect();
        let spec = TransformSpec::fit(flows.iter().copied()).map_err(|e| e.to_string())?;
        let (vectors, _) = spec.apply_all(flows.clone());
        let d = spec.dimension();
        for k in 0..d {
            let col = vectors.iter().map(|v| v[k]);
            let (lo, hi) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
            if spec.std()[k] == 0.0 || spec.max()[k] == spec.min()[k] {
                if lo != 0.0 || hi != 0.0 {
                    return Err(format!("round {round}: constant column {k} maps to [{lo}, {hi}]"));
                }
            } else if lo != 0.0 || hi != 1.0 {
                return Err(format!("round {round}: column {k} spans [{lo}, {hi}]"));
            }
        }
        let blocks = [spec.protocols().len(), spec.services().len(), spec.flags().len()];
        for flow in &flows {
            let (raw, oov) = spec.one_hot(flow);
            let mut start = 0;
            for (b, len) in blocks.iter().enumerate() {
                let block = &raw[start..start + len];
                let ones = block.iter().filter(|v| **v == 1.0).count();
                let others = block.iter().filter(|v| **v != 0.0 && **v != 1.0).count();
                if ones != 1 || others != 0 || oov.total() != 0 {
                    return Err(format!("round {round}: block {b} not single-hot"));
                }
                start += len;
            }
        }
        // num_outbound_cmds is always 0 in the fixtures.
        let outbound = blocks.iter().sum::<usize>() + 16;
        if spec.std()[outbound] != 0.0 || vectors.iter().any(|v| v[outbound] != 0.0) {
            return Err(format!("round {round}: zero-variance column not mapped to 0"));
        }

        let mut bytes = Vec::new();
        spec.save(&mut bytes).map_err(|e| e.to_string())?;
        let back = TransformSpec::load(bytes.as_slice()).map_err(|e| e.to_string())?;
        let bits = |s: &TransformSpec| -> Vec<u64> {
            [s.mean(), s.std(), s.min(), s.max()]
                .iter()
                .flat_map(|a| a.iter().map(|v| v.to_bits()))
                .collect()
        };
        if bits(&back) != bits(&spec) || back.content_hash() != spec.content_hash() {
            return Err(format!("round {round}: transform spec round trip not bit-exact"));
        }

        let mut model = AeModel::init(ModelKind::Sparse, d, 7, rng.random()).map_err(|e| e.to_string())?;
        model.set_spec_hash(spec.content_hash());
        let loaded = AeModel::from_bytes(&model.to_bytes()).map_err(|e| e.to_string())?;
        let same = model
            .parameters()
            .iter()
            .zip(loaded.parameters())
            .all(|(a, b)| a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        if !same || loaded.spec_hash() != model.spec_hash() || loaded.kind() != model.kind() {
            return Err(format!("round {round}: model round trip not bit-exact"));
        }
        for v in &vectors {
            if model.forward(v).unwrap() != loaded.forward(v).unwrap() {
                return Err(format!("round {round}: reloaded model computes differently"));
            }
        }
    }
    Ok("5 synthetic datasets".into())
}

pub struct CountingScorer<'a> {
    pub model: &'a AeModel,
    pub calls: Cell<usize>,
}

impl<'a> CountingScorer<'a> {
    pub fn new(model: &'a AeModel) -> Self {
        Self {
            model,
            calls: Cell::new(0),
        }
    }
}

impl ReconstructionScorer for CountingScorer<'_> {
    fn input_dim(&self) -> usize {
        self.model.input_dim()
    }

    fn spec_hash(&self) -> Option<SpecHash> {
        self.model.spec_hash()
    }

    fn score(&self, x: &[f64], scratch: &mut Scratch) -> Result<f64, ModelError> {
        self.calls.set(self.calls.get() + 1);
        self.model.score(x, scratch)
    }
}

fn outcome_rank(o: D1Outcome) -> u8 {
    match o {
        D1Outcome::Normal => 0,
        D1Outcome::Unknown => 1,
        D1Outcome::Anomaly => 2,
    }
}

/// Decision-rule partition and monotonicity, sparsity bounds, the (0, 1)
/// band equivalence and the early-exit call count.
pub fn detection_properties(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..20_000 {
        let (a, b) = (rng.random::<f64>(), rng.random::<f64>());
        let (lo, hi) = (a.min(b), a.max(b));
        let s: f64 = if rng.random_bool(0.2) { pick(&mut rng, &[lo, hi]) } else { rng.random() };
        let hits = [s < lo, (lo..=hi).contains(&s), s > hi];
        let expected = hits.iter().position(|h| *h).unwrap();
        if hits.iter().filter(|h| **h).count() != 1 || outcome_rank(d1_decide(s, lo, hi)) as usize != expected {
            return Err(format!("partition fails at s={s}, band=({lo}, {hi})"));
        }
        let s2: f64 = rng.random_range(s..=1.0);
        if outcome_rank(d1_decide(s2, lo, hi)) < outcome_rank(d1_decide(s, lo, hi)) {
            return Err(format!("not monotone between {s} and {s2}"));
        }
    }
    for _ in 0..2_000 {
        let m = rng.random_range(1..200);
        let eps = rng.random_range(0.0..0.1);
        let z: Vec<f64> = (0..m)
            .map(|_| if rng.random_bool(0.5) { 0.0 } else { rng.random_range(-0.2..1.0) })
            .collect();
        let s = sparsity_value(&z, eps).unwrap();
        if !(0.0..=1.0).contains(&s) || (s == 1.0) != z.iter().all(|v| *v > eps) {
            return Err(format!("sparsity {s} out of contract"));
        }
    }
    let mut plain_calls = 0;
    let mut unknowns = 0;
    for _ in 0..50 {
        let sparse = random_model(&mut rng, ModelKind::Sparse, 8, 12);
        let plain = random_model(&mut rng, ModelKind::Plain, 8, 4);
        let flows = random_inputs(&mut rng, 40, 8);

        let counter = CountingScorer::new(&plain);
        let full = Cascade::new(&sparse, &counter, Thresholds::new(0.0, 1.0, rng.random_range(0.0..3.0)).unwrap())
            .unwrap();
        let mut scratch = Scratch::new();
        for x in &flows {
            let v = full.classify_with(x, &mut scratch).unwrap();
            let d2 = full.classify_d2_with(x, &mut scratch).unwrap();
            if v != d2 {
                return Err("band (0, 1) differs from D2 alone".into());
            }
        }

        let (a, b) = (rng.random::<f64>(), rng.random::<f64>());
        let t = Thresholds::new(a.min(b), a.max(b), 1.0).unwrap();
        let counter = CountingScorer::new(&plain);
        let cascade = Cascade::new(&sparse, &counter, t).unwrap();
        let mut expected_unknown = 0;
        for x in &flows {
            let s = sparsity_value(&sparse.encode(x).unwrap(), t.eps_active).unwrap();
            if d1_decide(s, t.tau_min, t.tau_max) == D1Outcome::Unknown {
                expected_unknown += 1;
            }
            let v = cascade.classify_with(x, &mut scratch).unwrap();
            if v.stage == Stage::D1 && !(0.0..=1.0).contains(&v.score) {
                return Err("D1 verdict without a sparsity score".into());
            }
        }
        if counter.calls.get() != expected_unknown {
            return Err(format!(
                "plain model ran {} times for {expected_unknown} undecided flows",
                counter.calls.get()
            ));
        }
        plain_calls += counter.calls.get();
        unknowns += expected_unknown;
    }
    Ok(format!("partition/monotonicity 20000 draws, early exit {plain_calls} calls = {unknowns} undecided"))
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, items: &[T]) -> T {
    items[rng.random_range(0..items.len())]
}

fn random_labeled(rng: &mut ChaCha8Rng, n: usize, levels: f64) -> (Vec<f64>, Vec<Class>) {
    loop {
        let mut scores = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let anomalous = rng.random_bool(0.4);
            let centre = if anomalous { 0.6 } else { 0.3 };
            let s: f64 = (centre + rng.random_range(-0.35..0.35f64)).clamp(0.0, 1.0);
            scores.push((s * levels).round() / levels);
            labels.push(if anomalous { Class::Anomaly } else { Class::Normal });
        }
        if labels.contains(&Class::Anomaly) && labels.contains(&Class::Normal) {
            return (scores, labels);
        }
    }
}

fn band_oracle(values: &[f64], labels: &[Class], cfg: &BandSearchConfig) -> (f64, f64) {
    if values.iter().all(|v| *v == values[0]) {
        return (0.0, 1.0);
    }
    let grid = band_candidates(values, cfg.resolution);
    let mut best: Option<(f64, f64, BandCounts)> = None;
    for &lo in &grid {
        for &hi in grid.iter().filter(|h| **h >= lo) {
            let mut k = BandCounts::default();
            for (s, l) in values.iter().zip(labels) {
                if *s < lo {
                    k.below += 1;
                    k.below_anomalies += usize::from(*l == Class::Anomaly);
                } else if *s > hi {
                    k.above += 1;
                    k.above_normals += usize::from(*l == Class::Normal);
                }
            }
            if k.feasible(cfg.purity)
                && best.map_or(true, |b| compare_bands((lo, hi, k), b, cfg.objective).is_gt())
            {
                best = Some((lo, hi, k));
            }
        }
    }
    best.map_or((0.0, 1.0), |b| (b.0, b.1))
}

/// Threshold order invariance, ROC monotonicity and the band search against
/// an exhaustive recount.
pub fn calibration_properties(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for round in 0..300 {
        let n = rng.random_range(2..200);
        let (scores, labels) = random_labeled(&mut rng, n, 40.0);
        let scores: Vec<f64> = scores.iter().map(|s| s * 30.0).collect();
        let t = select_thr_ae(&scores, &labels).map_err(|e| e.to_string())?;
        let transforms: [fn(f64) -> f64; 3] = [|x| x.exp(), |x| 3.0 * x - 7.0, |x| x.powi(3) + x];
        for f in transforms {
            let mapped: Vec<f64> = scores.iter().map(|s| f(*s)).collect();
            let tm = select_thr_ae(&mapped, &labels).map_err(|e| e.to_string())?;
            if scores.iter().zip(&mapped).any(|(s, m)| (*s > t) != (*m > tm)) {
                return Err(format!("round {round}: decisions change under an increasing transform"));
            }
        }
        let roc = roc_curve(&scores, &labels).map_err(|e| e.to_string())?;
        if roc
            .windows(2)
            .any(|w| w[1].threshold >= w[0].threshold || w[1].recall < w[0].recall || w[1].fpr < w[0].fpr)
        {
            return Err(format!("round {round}: ROC not monotone"));
        }
    }
    let mut checked = 0;
    for round in 0..200 {
        let n = rng.random_range(2..80);
        let (values, labels) = random_labeled(&mut rng, n, 20.0);
        let cfg = BandSearchConfig {
            resolution: rng.random_range(2..16),
            purity: pick(&mut rng, &[0.7, 0.8, 0.9, 0.95, 1.0]),
            objective: pick(&mut rng, &[BandObjective::MaxAccuracy, BandObjective::MaxFScore]),
        };
        let got = select_tau_band(&values, &labels, &cfg).map_err(|e| e.to_string())?;
        let want = band_oracle(&values, &labels, &cfg);
        if got != want {
            return Err(format!("round {round}: band {got:?}, exhaustive search {want:?}"));
        }
        checked += 1;
    }
    Ok(format!("300 threshold rounds, {checked} band searches match the oracle"))
}

/// Metric formulas against a direct recount on random verdict/label pairs.
pub fn metrics_properties(count: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cls = |b: bool| if b { Class::Anomaly } else { Class::Normal };
    for round in 0..count {
        let n = rng.random_range(1..300);
        let p_anomaly = rng.random::<f64>();
        let p_flip = rng.random::<f64>();
        let truth: Vec<Class> = (0..n).map(|_| cls(rng.random_bool(p_anomaly))).collect();
        let predicted: Vec<Class> = truth
            .iter()
            .map(|t| if rng.random_bool(p_flip) { cls(*t == Class::Normal) } else { *t })
            .collect();
        let c = confusion(&predicted, &truth).map_err(|e| e.to_string())?;
        let m = metrics(&c).map_err(|e| e.to_string())?;

        let mut r = Confusion::default();
        for (p, t) in predicted.iter().zip(&truth) {
            match (p, t) {
                (Class::Anomaly, Class::Anomaly) => r.tp += 1,
                (Class::Normal, Class::Anomaly) => r.fn_ += 1,
                (Class::Normal, Class::Normal) => r.tn += 1,
                (Class::Anomaly, Class::Normal) => r.fp += 1,
            }
        }
        let (tp, fn_, tn, fp) = (r.tp as f64, r.fn_ as f64, r.tn as f64, r.fp as f64);
        let div = |a: f64, b: f64| (b > 0.0).then(|| a / b);
        let pr = div(tp, tp + fp);
        let re = div(tp, tp + fn_);
        let fs = match (pr, re) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            _ => None,
        };
        let ok = c == r
            && m.accuracy == (tp + tn) / n as f64
            && m.precision == pr
            && m.recall == re
            && m.f_score == fs
            && m.fpr_fn_fp == div(fp, fn_ + fp)
            && m.fpr_std == div(fp, fp + tn);
        if !ok {
            return Err(format!("round {round}: {c:?} gives {m:?}"));
        }
    }
    Ok(format!("{count} random confusions, exact"))
}

/// Full pipeline on synthetic records: train, calibrate, evaluate, persist,
/// reload, sweep ratios, time and run the in-file split.
pub fn smoke_pipeline(records: usize, seed: u64) -> Check {
    use cascade_ids::evaluate::{
        bench_inference, evaluate_artifacts, ratio_sweep, run_kddtest_experiment, run_split_experiment,
    };
    use cascade_ids::pipeline::{ArtifactPaths, ExperimentConfig};

    let err = |e: &dyn std::fmt::Display| e.to_string();
    let train = synthetic_dataset(&FixtureConfig {
        records,
        seed,
        ..FixtureConfig::default()
    });
    let test = synthetic_dataset(&FixtureConfig {
        records,
        seed: seed.wrapping_add(1),
        overlap: 0.1,
        unlisted_fraction: 0.05,
        ..FixtureConfig::default()
    });
    let config = ExperimentConfig {
        seed,
        ..ExperimentConfig::default()
    };
    let out = run_kddtest_experiment(&train, &test, &config).map_err(|e| err(&e))?;
    let report = &out.report;
    let cascade = &report.cascade;
    let decided = cascade.d1_decided.unwrap_or(0) + cascade.d2_decided.unwrap_or(0);
    if report.records != test.len() || decided != test.len() {
        return Err(format!("{decided} verdicts for {} records", test.len()));
    }
    if cascade.confusion.total() != test.len() || cascade.per_category[4].total == 0 {
        return Err("confusion does not cover every record".into());
    }
    let acc = [
        cascade.metrics.accuracy,
        report.d2_standalone.metrics.accuracy,
        report.d1_reconstruction.metrics.accuracy,
    ];
    if acc.iter().any(|a| *a < 0.8) {
        return Err(format!("accuracy too low on separable fixtures: {acc:?}"));
    }
    for h in [&out.detectors.sparse_history, &out.detectors.plain_history] {
        if h.train_loss.last() >= h.train_loss.first() || h.validation_loss.len() != h.train_loss.len() {
            return Err("training loss did not decrease".into());
        }
    }

    let dir = tempfile::tempdir().map_err(|e| err(&e))?;
    let paths = ArtifactPaths::new(dir.path());
    out.artifacts.save(&paths).map_err(|e| err(&e))?;
    let loaded = paths.load_all().map_err(|e| err(&e))?;
    let encoded = encode(&loaded.spec, &test.records);
    let again = evaluate_artifacts(&loaded, &encoded).map_err(|e| err(&e))?;
    if &again != report {
        return Err("reloaded artifacts give a different report".into());
    }

    let ratios = [10, 20, 30, 40, 50];
    let sweep = ratio_sweep(&loaded, &encoded, &ratios, seed).map_err(|e| err(&e))?;
    if sweep != ratio_sweep(&loaded, &encoded, &ratios, seed).map_err(|e| err(&e))? {
        return Err("ratio sweep not deterministic".into());
    }
    if sweep.iter().any(|p| p.f_score.is_none()) {
        return Err("undefined f-score in ratio sweep".into());
    }

    let t = loaded.calibration.thresholds;
    let timing = bench_inference(
        &loaded.sparse,
        &loaded.plain,
        t,
        loaded.calibration.thr_sparse_reconstruction,
        &encoded.vectors,
        3,
        None,
    )
    .map_err(|e| err(&e))?;
    if !(timing.ratio.is_finite() && timing.ratio > 0.0) {
        return Err(format!("timing ratio {}", timing.ratio));
    }

    let split = run_split_experiment(&train, &config).map_err(|e| err(&e))?;
    let s = split.report.sizes;
    let normals = train.summary().normal;
    if s.train_normal + s.validation_normal + s.test_normal != normals
        || s.validation_normal != normals.div_ceil(10)
        || s.test_normal != s.validation_normal
        || split.report.evaluation.records != s.test_normal + s.test_anomaly
    {
        return Err(format!("split sizes {s:?} for {normals} normals"));
    }

    Ok(format!(
        "accuracy cascade {:.4} / D2 {:.4} / D1-recon {:.4}, escalation {:.3}, band ({:.3}, {:.3}), f-score at 10%..50% {}, timing ratio {:.2}, split accuracy {:.4}",
        acc[0],
        acc[1],
        acc[2],
        cascade.escalation_fraction.unwrap_or(0.0),
        t.tau_min,
        t.tau_max,
        sweep
            .iter()
            .map(|p| format!("{:.3}", p.f_score.unwrap()))
            .collect::<Vec<_>>()
            .join(" "),
        timing.ratio,
        split.report.evaluation.cascade.metrics.accuracy
    ))
}
