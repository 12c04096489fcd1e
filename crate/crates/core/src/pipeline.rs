//! Glue between the stages: data splits, training both detectors, and the
//! on-disk artifact directory.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibrate::{BandSearchConfig, CalibrationReport};
use crate::detect::{Cascade, DEFAULT_EPS_ACTIVE};
use crate::ingest::{FlowLabel, LabeledFlow};
use crate::nn::{self, AeModel, ModelError, ModelKind, TrainConfig, TrainError, TrainHistory};
use crate::preprocess::{FeatureVector, OovStats, PreprocessError, SpecHash, TransformSpec};

/// Everything that shapes an experiment besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub sparse: TrainConfig,
    pub plain: TrainConfig,
    pub band: BandSearchConfig,
    pub eps_active: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            sparse: TrainConfig::default(),
            plain: TrainConfig::default(),
            band: BandSearchConfig::default(),
            eps_active: DEFAULT_EPS_ACTIVE,
        }
    }
}

impl ExperimentConfig {
    /// Training configs with seeds derived from the experiment seed.
    pub fn train_configs(&self) -> (TrainConfig, TrainConfig) {
        let sparse = TrainConfig {
            seed: self.seed,
            ..self.sparse
        };
        let plain = TrainConfig {
            seed: self.seed.wrapping_add(1),
            ..self.plain
        };
        (sparse, plain)
    }
}

/// Record indices of a seeded holdout split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    /// Normal flows only.
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    /// Empty unless a test part was requested.
    pub test: Vec<usize>,
}

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("no normal flows to train on")]
    NoNormals,
    #[error("need at least {needed} normal flows for the requested split, found {found}")]
    TooFewNormals { needed: usize, found: usize },
    #[error("no anomalous flows available for validation")]
    NoAnomalies,
}

/// Holds out one tenth of the normal flows (rounded up) for validation,
/// paired with as many anomalies, and optionally a second equal-sized
/// part for testing. All remaining normals form the training set.
pub fn holdout_split(labels: &[FlowLabel], seed: u64, with_test: bool) -> Result<Split, SplitError> {
    let mut normals: Vec<usize> = Vec::new();
    let mut anomalies: Vec<usize> = Vec::new();
    for (i, l) in labels.iter().enumerate() {
        match l {
            FlowLabel::Normal => normals.push(i),
            FlowLabel::Anomaly(_) => anomalies.push(i),
        }
    }
    if normals.is_empty() {
        return Err(SplitError::NoNormals);
    }
    if anomalies.is_empty() {
        return Err(SplitError::NoAnomalies);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    normals.shuffle(&mut rng);
    anomalies.shuffle(&mut rng);

    let k = normals.len().div_ceil(10);
    let parts = if with_test { 2 } else { 1 };
    if normals.len() <= parts * k {
        return Err(SplitError::TooFewNormals {
            needed: parts * k + 1,
            found: normals.len(),
        });
    }
    let take = |pool: &[usize], part: usize| -> Vec<usize> {
        let start = (part * k).min(pool.len());
        let end = ((part + 1) * k).min(pool.len());
        pool[start..end].to_vec()
    };
    let mut validation = take(&normals, 0);
    validation.extend(take(&anomalies, 0));
    validation.sort_unstable();
    let mut test = Vec::new();
    if with_test {
        test = take(&normals, 1);
        test.extend(take(&anomalies, 1));
        test.sort_unstable();
    }
    let mut train = normals[parts * k..].to_vec();
    train.sort_unstable();
    Ok(Split {
        train,
        validation,
        test,
    })
}

/// The normal half of `holdout_split(labels, seed, false)`: training
/// normals and the held-out normal tenth. Works without anomalies.
pub fn normal_holdout(labels: &[FlowLabel], seed: u64) -> Result<(Vec<usize>, Vec<usize>), SplitError> {
    let mut normals: Vec<usize> = (0..labels.len())
        .filter(|&i| labels[i] == FlowLabel::Normal)
        .collect();
    if normals.is_empty() {
        return Err(SplitError::NoNormals);
    }
    normals.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let k = normals.len().div_ceil(10);
    if normals.len() <= k {
        return Err(SplitError::TooFewNormals {
            needed: k + 1,
            found: normals.len(),
        });
    }
    let mut train = normals.split_off(k);
    train.sort_unstable();
    normals.sort_unstable();
    Ok((train, normals))
}

/// Encoded flows with their labels.
#[derive(Debug, Clone, Default)]
pub struct Encoded {
    pub vectors: Vec<FeatureVector>,
    pub labels: Vec<FlowLabel>,
    pub oov: OovStats,
}

pub fn encode(spec: &TransformSpec, flows: &[LabeledFlow]) -> Encoded {
    let raw: Vec<_> = flows.iter().map(|f| &f.flow).collect();
    let (vectors, oov) = spec.apply_all(raw);
    Encoded {
        vectors,
        labels: flows.iter().map(|f| f.label).collect(),
        oov,
    }
}

pub fn select<T: Clone>(items: &[T], indices: &[usize]) -> Vec<T> {
    indices.iter().map(|&i| items[i].clone()).collect()
}

#[derive(Debug, Clone)]
pub struct Detectors {
    pub sparse: AeModel,
    pub plain: AeModel,
    pub sparse_history: TrainHistory,
    pub plain_history: TrainHistory,
}

/// Trains both networks on normal vectors and stamps them with `spec_hash`.
/// `monitor` is an optional normal-only set for per-epoch validation loss.
pub fn train_detectors(
    train: &[FeatureVector],
    monitor: &[FeatureVector],
    config: &ExperimentConfig,
    spec_hash: SpecHash,
) -> Result<Detectors, TrainError> {
    let (sparse_cfg, plain_cfg) = config.train_configs();
    log::info!("training sparse network on {} flows", train.len());
    let (mut sparse, sparse_history) = nn::train(ModelKind::Sparse, train, monitor, &sparse_cfg)?;
    log::info!("training plain network on {} flows", train.len());
    let (mut plain, plain_history) = nn::train(ModelKind::Plain, train, monitor, &plain_cfg)?;
    sparse.set_spec_hash(spec_hash);
    plain.set_spec_hash(spec_hash);
    Ok(Detectors {
        sparse,
        plain,
        sparse_history,
        plain_history,
    })
}

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("missing artifact {}", .0.display())]
    Missing(PathBuf),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Spec {
        path: PathBuf,
        #[source]
        source: PreprocessError,
    },
    #[error("{}: {source}", path.display())]
    Model {
        path: PathBuf,
        #[source]
        source: ModelError,
    },
    #[error("{}: {message}", path.display())]
    Invalid { path: PathBuf, message: String },
    #[error("{} was built for transform spec {found}, but the spec is {expected}", path.display())]
    HashMismatch {
        path: PathBuf,
        expected: SpecHash,
        found: String,
    },
}

/// Layout of an artifact directory.
#[derive(Debug, Clone)]
pub struct ArtifactPaths {
    pub root: PathBuf,
}

impl ArtifactPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn spec(&self) -> PathBuf {
        self.root.join("spec.json")
    }

    pub fn model(&self, kind: ModelKind) -> PathBuf {
        self.root.join(format!("{}.model", kind.name()))
    }

    pub fn history(&self, kind: ModelKind) -> PathBuf {
        self.root.join(format!("{}.history.json", kind.name()))
    }

    pub fn calibration(&self) -> PathBuf {
        self.root.join("calibration.json")
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn report(&self, name: &str) -> PathBuf {
        self.reports().join(name)
    }

    fn open(path: &Path) -> Result<BufReader<File>, ArtifactError> {
        match File::open(path) {
            Ok(f) => Ok(BufReader::new(f)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(ArtifactError::Missing(path.to_path_buf())),
            Err(source) => Err(ArtifactError::Io {
                path: path.to_path_buf(),
                source,
            }),
        }
    }

    fn create(path: &Path) -> Result<BufWriter<File>, ArtifactError> {
        let io = |source| ArtifactError::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io)?;
        }
        File::create(path).map(BufWriter::new).map_err(io)
    }

    pub fn load_spec(&self) -> Result<TransformSpec, ArtifactError> {
        let path = self.spec();
        TransformSpec::load(Self::open(&path)?).map_err(|source| ArtifactError::Spec { path, source })
    }

    pub fn save_spec(&self, spec: &TransformSpec) -> Result<(), ArtifactError> {
        let path = self.spec();
        spec.save(Self::create(&path)?)
            .map_err(|source| ArtifactError::Spec { path, source })
    }

    /// Loads a model and checks it against `spec`.
    pub fn load_model(&self, kind: ModelKind, spec: &TransformSpec) -> Result<AeModel, ArtifactError> {
        let path = self.model(kind);
        let model = AeModel::load_expecting(Self::open(&path)?, kind, Some(spec.dimension()))
            .map_err(|source| ArtifactError::Model {
                path: path.clone(),
                source,
            })?;
        let expected = spec.content_hash();
        if model.spec_hash() != Some(expected) {
            return Err(ArtifactError::HashMismatch {
                path,
                expected,
                found: model.spec_hash().map_or_else(|| "none".into(), |h| h.to_string()),
            });
        }
        Ok(model)
    }

    pub fn save_model(&self, model: &AeModel) -> Result<(), ArtifactError> {
        let path = self.model(model.kind());
        let mut w = Self::create(&path)?;
        model
            .save(&mut w)
            .map_err(|source| ArtifactError::Model { path, source })
    }

    pub fn save_json<T: Serialize>(&self, path: &Path, value: &T) -> Result<(), ArtifactError> {
        let mut w = Self::create(path)?;
        let io = |source| ArtifactError::Io {
            path: path.to_path_buf(),
            source,
        };
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| io(e.into()))?;
        w.write_all(b"\n").map_err(io)?;
        w.flush().map_err(io)
    }

    pub fn load_json<T: for<'de> Deserialize<'de>>(&self, path: &Path) -> Result<T, ArtifactError> {
        serde_json::from_reader(Self::open(path)?).map_err(|e| ArtifactError::Invalid {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn load_calibration(&self, spec: &TransformSpec) -> Result<CalibrationReport, ArtifactError> {
        let path = self.calibration();
        let report: CalibrationReport = self.load_json(&path)?;
        report.validate().map_err(|message| ArtifactError::Invalid {
            path: path.clone(),
            message,
        })?;
        let expected = spec.content_hash();
        if report.spec_hash != expected {
            return Err(ArtifactError::HashMismatch {
                path,
                expected,
                found: report.spec_hash.to_string(),
            });
        }
        Ok(report)
    }

    pub fn save_detectors(&self, d: &Detectors) -> Result<(), ArtifactError> {
        self.save_model(&d.sparse)?;
        self.save_model(&d.plain)?;
        self.save_json(&self.history(ModelKind::Sparse), &d.sparse_history)?;
        self.save_json(&self.history(ModelKind::Plain), &d.plain_history)
    }

    /// Spec, both models and calibration, all checked for consistency.
    pub fn load_all(&self) -> Result<Artifacts, ArtifactError> {
        let spec = self.load_spec()?;
        let sparse = self.load_model(ModelKind::Sparse, &spec)?;
        let plain = self.load_model(ModelKind::Plain, &spec)?;
        let calibration = self.load_calibration(&spec)?;
        Ok(Artifacts {
            spec,
            sparse,
            plain,
            calibration,
        })
    }
}

/// A complete, consistent set of trained artifacts.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub spec: TransformSpec,
    pub sparse: AeModel,
    pub plain: AeModel,
    pub calibration: CalibrationReport,
}

impl Artifacts {
    pub fn cascade(&self) -> Cascade<&AeModel, &AeModel> {
        Cascade::new(&self.sparse, &self.plain, self.calibration.thresholds)
            .expect("artifacts are checked for consistency on load")
    }

    pub fn save(&self, paths: &ArtifactPaths) -> Result<(), ArtifactError> {
        paths.save_spec(&self.spec)?;
        paths.save_model(&self.sparse)?;
        paths.save_model(&self.plain)?;
        paths.save_json(&paths.calibration(), &self.calibration)
    }
}
