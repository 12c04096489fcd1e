//! Run configuration: a TOML file, environment overrides for paths, then
//! command-line flags on top.

use std::path::{Path, PathBuf};

use cascade_ids::calibrate::BandSearchConfig;
use cascade_ids::detect::DEFAULT_EPS_ACTIVE;
use cascade_ids::nn::TrainConfig;
use cascade_ids::pipeline::ExperimentConfig;
use serde::Deserialize;

use crate::error::CliError;

pub const ENV_TRAIN: &str = "CASCADE_IDS_TRAIN";
pub const ENV_TEST: &str = "CASCADE_IDS_TEST";
pub const ENV_ARTIFACTS: &str = "CASCADE_IDS_ARTIFACTS";

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub repetitions: usize,
    /// Free-form CPU/machine description copied into timing reports.
    pub hardware: Option<String>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            repetitions: 5,
            hardware: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub artifacts: Option<PathBuf>,
    /// Attack-name to category table replacing the built-in one.
    pub categories: Option<PathBuf>,
    pub lenient: bool,
    pub eps_active: f64,
    pub sparse: TrainConfig,
    pub plain: TrainConfig,
    pub band: BandSearchConfig,
    pub bench: BenchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            train: None,
            test: None,
            artifacts: None,
            categories: None,
            lenient: false,
            eps_active: DEFAULT_EPS_ACTIVE,
            sparse: TrainConfig::default(),
            plain: TrainConfig::default(),
            band: BandSearchConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

impl RunConfig {
    /// Reads `path` (if given) and applies path overrides from `env`.
    /// Relative paths in the file are taken from the file's directory.
    pub fn load(path: Option<&Path>, env: impl Fn(&str) -> Option<String>) -> Result<Self, CliError> {
        let mut config = match path {
            None => RunConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
                let mut c: RunConfig = toml::from_str(&text)
                    .map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))?;
                let base = p.parent().unwrap_or(Path::new(""));
                for slot in [&mut c.train, &mut c.test, &mut c.artifacts, &mut c.categories] {
                    if let Some(v) = slot.as_mut() {
                        if v.is_relative() {
                            *v = base.join(&*v);
                        }
                    }
                }
                c
            }
        };
        for (key, slot) in [
            (ENV_TRAIN, &mut config.train),
            (ENV_TEST, &mut config.test),
            (ENV_ARTIFACTS, &mut config.artifacts),
        ] {
            if let Some(v) = env(key).filter(|v| !v.is_empty()) {
                *slot = Some(PathBuf::from(v));
            }
        }
        Ok(config)
    }

    pub fn seed(&self, flag: Option<u64>) -> Result<u64, CliError> {
        flag.or(self.seed)
            .ok_or_else(|| CliError::Usage("a seed is required: pass --seed or set `seed` in the config file".into()))
    }

    pub fn artifacts(&self, flag: Option<PathBuf>) -> PathBuf {
        flag.or_else(|| self.artifacts.clone())
            .unwrap_or_else(|| PathBuf::from("artifacts"))
    }

    pub fn train_path(&self, flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
        flag.or_else(|| self.train.clone()).ok_or_else(|| {
            CliError::Usage(format!("no training file: pass --train, set `train` or {ENV_TRAIN}"))
        })
    }

    pub fn test_path(&self, flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
        flag.or_else(|| self.test.clone()).ok_or_else(|| {
            CliError::Usage(format!("no test file: pass --test, set `test` or {ENV_TEST}"))
        })
    }

    pub fn experiment(&self, seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            seed,
            sparse: self.sparse,
            plain: self.plain,
            band: self.band,
            eps_active: self.eps_active,
        }
    }
}
