//! Feature encoding: one-hot expansion of the categorical attributes,
//! per-feature standardization, then min-max scaling into `[0, 1]`.
//!
//! Layout of an encoded vector: the protocol block, the service block, the
//! flag block, then the 38 numeric attributes in file order. Every column
//! (one-hot columns included) is standardized with the training mean and
//! population standard deviation, then scaled with the training minimum and
//! maximum of the standardized values. Columns with zero spread encode as 0,
//! and values outside the training range are clamped.

use std::collections::HashMap;
use std::fmt;
use std::io::{self, Read, Write};
use std::ops::Deref;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ingest::{RawFlow, NUMERIC_COUNT};

const SPEC_FORMAT: &str = "cascade-ids/transform-spec";
const SPEC_VERSION: u32 = 1;

/// Fixed relative order for the three well-known protocols, so that
/// icmp, udp and tcp encode as `(1,0,0)`, `(0,1,0)` and `(0,0,1)`.
const PROTOCOL_ORDER: [&str; 3] = ["icmp", "udp", "tcp"];

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("unsupported transform spec version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("corrupt transform spec: {0}")]
    Corrupt(String),
    #[error("transform spec i/o: {0}")]
    Io(#[from] io::Error),
}

/// SHA-256 of a transform spec's canonical serialization. Models and
/// calibration files record it so artifacts from different fits are never mixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpecHash(pub [u8; 32]);

impl fmt::Display for SpecHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl FromStr for SpecHash {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = hex::decode(s).map_err(|e| e.to_string())?;
        let bytes: [u8; 32] = bytes
            .try_into()
            .map_err(|_| "spec hash must be 32 bytes".to_string())?;
        Ok(SpecHash(bytes))
    }
}

impl Serialize for SpecHash {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for SpecHash {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// An encoded flow, ready for either network.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for FeatureVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for FeatureVector {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

/// Out-of-vocabulary token counts, per categorical attribute.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OovStats {
    pub protocol: u64,
    pub service: u64,
    pub flag: u64,
}

impl OovStats {
    pub fn total(&self) -> u64 {
        self.protocol + self.service + self.flag
    }

    fn absorb(&mut self, other: OovStats) {
        self.protocol += other.protocol;
        self.service += other.service;
        self.flag += other.flag;
    }
}

#[derive(Debug, Clone, Default)]
struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Result<Self, PreprocessError> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, token) in tokens.iter().enumerate() {
            if index.insert(token.clone(), i).is_some() {
                return Err(PreprocessError::Corrupt(format!(
                    "duplicate vocabulary token {token:?}"
                )));
            }
        }
        Ok(Self { tokens, index })
    }

    fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    fn len(&self) -> usize {
        self.tokens.len()
    }
}

fn first_seen<'a, I: Iterator<Item = &'a str>>(tokens: I) -> Vec<String> {
    let mut seen = Vec::<String>::new();
    for token in tokens {
        if !seen.iter().any(|t| t == token) {
            seen.push(token.to_string());
        }
    }
    seen
}

/// Fitted preprocessing state. Immutable after [`TransformSpec::fit`].
#[derive(Debug, Clone)]
pub struct TransformSpec {
    protocols: Vocabulary,
    services: Vocabulary,
    flags: Vocabulary,
    mean: Vec<f64>,
    std: Vec<f64>,
    min: Vec<f64>,
    max: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SpecFile {
    format: String,
    version: u32,
    dimension: usize,
    protocols: Vec<String>,
    services: Vec<String>,
    flags: Vec<String>,
    mean: Vec<f64>,
    std: Vec<f64>,
    min: Vec<f64>,
    max: Vec<f64>,
}

impl TransformSpec {
    /// Fits vocabularies and scaling statistics on training flows only.
    /// The iterator is traversed several times.
    pub fn fit<'a, I>(flows: I) -> Result<Self, PreprocessError>
    where
        I: IntoIterator<Item = &'a RawFlow>,
        I::IntoIter: Clone,
    {
        let flows = flows.into_iter();
        let count = flows.clone().count();
        if count == 0 {
            return Err(PreprocessError::EmptyTrainingSet);
        }
        let mut protocols = first_seen(flows.clone().map(|f| f.protocol.as_str()));
        // Stable sort keeps first-seen order for anything outside PROTOCOL_ORDER.
        protocols.sort_by_key(|p| {
            PROTOCOL_ORDER
                .iter()
                .position(|known| known == p)
                .unwrap_or(PROTOCOL_ORDER.len())
        });
        let services = first_seen(flows.clone().map(|f| f.service.as_str()));
        let flags = first_seen(flows.clone().map(|f| f.flag.as_str()));

        let mut spec = TransformSpec {
            protocols: Vocabulary::from_tokens(protocols)?,
            services: Vocabulary::from_tokens(services)?,
            flags: Vocabulary::from_tokens(flags)?,
            mean: Vec::new(),
            std: Vec::new(),
            min: Vec::new(),
            max: Vec::new(),
        };
        let dim = spec.dimension();
        let count = count as f64;

        let mut sum = vec![0.0; dim];
        for flow in flows.clone() {
            let (raw, _) = spec.one_hot(flow);
            sum.iter_mut().zip(&raw).for_each(|(s, v)| *s += v);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count).collect();

        let mut sq = vec![0.0; dim];
        for flow in flows.clone() {
            let (raw, _) = spec.one_hot(flow);
            for ((acc, v), m) in sq.iter_mut().zip(&raw).zip(&mean) {
                *acc += (v - m) * (v - m);
            }
        }
        spec.std = sq.iter().map(|s| (s / count).sqrt()).collect();
        spec.mean = mean;

        let mut min = vec![f64::INFINITY; dim];
        let mut max = vec![f64::NEG_INFINITY; dim];
        for flow in flows {
            let (raw, _) = spec.one_hot(flow);
            let standardized = spec.standardize(&raw)?;
            for (i, v) in standardized.iter().enumerate() {
                min[i] = min[i].min(*v);
                max[i] = max[i].max(*v);
            }
        }
        spec.min = min;
        spec.max = max;
        Ok(spec)
    }

    pub fn dimension(&self) -> usize {
        self.protocols.len() + self.services.len() + self.flags.len() + NUMERIC_COUNT
    }

    pub fn protocols(&self) -> &[String] {
        &self.protocols.tokens
    }

    pub fn services(&self) -> &[String] {
        &self.services.tokens
    }

    pub fn flags(&self) -> &[String] {
        &self.flags.tokens
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    pub fn min(&self) -> &[f64] {
        &self.min
    }

    pub fn max(&self) -> &[f64] {
        &self.max
    }

    /// Expands the categorical attributes. Unknown tokens leave their block
    /// all-zero and are reported in the returned counts.
    pub fn one_hot(&self, flow: &RawFlow) -> (Vec<f64>, OovStats) {
        let mut out = vec![0.0; self.dimension()];
        let mut oov = OovStats::default();
        let mut offset = 0;
        for (vocab, token, counter) in [
            (&self.protocols, &flow.protocol, &mut oov.protocol),
            (&self.services, &flow.service, &mut oov.service),
            (&self.flags, &flow.flag, &mut oov.flag),
        ] {
            match vocab.get(token) {
                Some(i) => out[offset + i] = 1.0,
                None => *counter += 1,
            }
            offset += vocab.len();
        }
        out[offset..].copy_from_slice(&flow.numeric);
        (out, oov)
    }

    fn check_dim(&self, found: usize) -> Result<(), PreprocessError> {
        let expected = self.dimension();
        if found == expected {
            Ok(())
        } else {
            Err(PreprocessError::DimensionMismatch { expected, found })
        }
    }

    pub fn standardize(&self, values: &[f64]) -> Result<Vec<f64>, PreprocessError> {
        self.check_dim(values.len())?;
        Ok(values
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| if *s > 0.0 { (v - m) / s } else { 0.0 })
            .collect())
    }

    pub fn normalize(&self, values: &[f64]) -> Result<FeatureVector, PreprocessError> {
        self.check_dim(values.len())?;
        Ok(values
            .iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(v, (lo, hi))| {
                let range = hi - lo;
                if range > 0.0 {
                    ((v - lo) / range).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect::<Vec<_>>()
            .into())
    }

    /// Full pipeline: `normalize(standardize(one_hot(flow)))`.
    pub fn apply(&self, flow: &RawFlow) -> FeatureVector {
        self.apply_counted(flow).0
    }

    pub fn apply_counted(&self, flow: &RawFlow) -> (FeatureVector, OovStats) {
        let (raw, oov) = self.one_hot(flow);
        let standardized = self.standardize(&raw).expect("one_hot matches dimension");
        let vector = self.normalize(&standardized).expect("standardize preserves dimension");
        (vector, oov)
    }

    /// Encodes many flows in parallel. Output order follows input order.
    pub fn apply_all<'a, I>(&self, flows: I) -> (Vec<FeatureVector>, OovStats)
    where
        I: IntoParallelIterator<Item = &'a RawFlow>,
        I::Iter: IndexedParallelIterator,
    {
        let encoded: Vec<(FeatureVector, OovStats)> = flows
            .into_par_iter()
            .map(|flow| self.apply_counted(flow))
            .collect();
        let mut stats = OovStats::default();
        let vectors = encoded
            .into_iter()
            .map(|(v, oov)| {
                stats.absorb(oov);
                v
            })
            .collect();
        (vectors, stats)
    }

    fn to_file(&self) -> SpecFile {
        SpecFile {
            format: SPEC_FORMAT.to_string(),
            version: SPEC_VERSION,
            dimension: self.dimension(),
            protocols: self.protocols.tokens.clone(),
            services: self.services.tokens.clone(),
            flags: self.flags.tokens.clone(),
            mean: self.mean.clone(),
            std: self.std.clone(),
            min: self.min.clone(),
            max: self.max.clone(),
        }
    }

    /// Content hash over the canonical (compact JSON) serialization.
    pub fn content_hash(&self) -> SpecHash {
        let bytes = serde_json::to_vec(&self.to_file()).expect("spec serializes");
        SpecHash(Sha256::digest(&bytes).into())
    }

    pub fn save<W: Write>(&self, mut sink: W) -> Result<(), PreprocessError> {
        serde_json::to_writer_pretty(&mut sink, &self.to_file())
            .map_err(|e| PreprocessError::Io(e.into()))?;
        sink.write_all(b"\n")?;
        Ok(())
    }

    pub fn load<R: Read>(source: R) -> Result<Self, PreprocessError> {
        let file: SpecFile = serde_json::from_reader(source).map_err(|e| {
            if e.is_io() {
                PreprocessError::Io(e.into())
            } else {
                PreprocessError::Corrupt(e.to_string())
            }
        })?;
        if file.format != SPEC_FORMAT {
            return Err(PreprocessError::Corrupt(format!(
                "unexpected format tag {:?}",
                file.format
            )));
        }
        if file.version != SPEC_VERSION {
            return Err(PreprocessError::Version {
                found: file.version,
                expected: SPEC_VERSION,
            });
        }
        let spec = TransformSpec {
            protocols: Vocabulary::from_tokens(file.protocols)?,
            services: Vocabulary::from_tokens(file.services)?,
            flags: Vocabulary::from_tokens(file.flags)?,
            mean: file.mean,
            std: file.std,
            min: file.min,
            max: file.max,
        };
        let dim = spec.dimension();
        if file.dimension != dim {
            return Err(PreprocessError::Corrupt(format!(
                "header dimension {} disagrees with vocabularies ({dim})",
                file.dimension
            )));
        }
        for (name, array) in [
            ("mean", &spec.mean),
            ("std", &spec.std),
            ("min", &spec.min),
            ("max", &spec.max),
        ] {
            if array.len() != dim {
                return Err(PreprocessError::Corrupt(format!(
                    "{name} has {} entries, expected {dim}",
                    array.len()
                )));
            }
        }
        Ok(spec)
    }
}
