//! Binary model files. Layout (all integers and floats little-endian):
//!
//! ```text
//! magic        8 bytes  "CIDSMODL"
//! version      u32      1
//! kind         u8       1 = sparse, 2 = plain
//! encoder act  u8       1 = rectifier
//! decoder act  u8       2 = logistic sigmoid
//! has hash     u8       0 or 1
//! spec hash    32 bytes (zeros when absent)
//! input dim    u32
//! hidden dim   u32
//! config len   u32      length of the JSON training configuration
//! config       bytes
//! W1           f64 × hidden·input   (row-major, hidden rows)
//! b1           f64 × hidden
//! W2           f64 × input·hidden   (row-major, input rows)
//! b2           f64 × input
//! checksum     32 bytes SHA-256 of everything above
//! ```

use std::io::{Read, Write};

use sha2::{Digest, Sha256};

use super::{AeModel, Matrix, ModelError, ModelKind, TrainConfig};
use crate::preprocess::SpecHash;

const MAGIC: &[u8; 8] = b"CIDSMODL";
const VERSION: u32 = 1;
const ACT_RELU: u8 = 1;
const ACT_SIGMOID: u8 = 2;
const CHECKSUM_LEN: usize = 32;

fn kind_id(kind: ModelKind) -> u8 {
    match kind {
        ModelKind::Sparse => 1,
        ModelKind::Plain => 2,
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self
            .at
            .checked_add(n)
            .filter(|end| *end <= self.bytes.len())
            .ok_or_else(|| ModelError::Corrupt("unexpected end of payload".into()))?;
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, ModelError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64s(&mut self, count: usize) -> Result<Vec<f64>, ModelError> {
        let len = count
            .checked_mul(8)
            .ok_or_else(|| ModelError::Corrupt("parameter count overflow".into()))?;
        Ok(self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

impl AeModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let config = serde_json::to_vec(&self.config).expect("config serializes");
        let mut out = Vec::with_capacity(96 + config.len() + 8 * self.parameter_count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(kind_id(self.kind));
        out.push(ACT_RELU);
        out.push(ACT_SIGMOID);
        out.push(u8::from(self.spec_hash.is_some()));
        out.extend_from_slice(&self.spec_hash.map(|h| h.0).unwrap_or([0; 32]));
        out.extend_from_slice(&(self.input_dim() as u32).to_le_bytes());
        out.extend_from_slice(&(self.hidden_dim() as u32).to_le_bytes());
        out.extend_from_slice(&(config.len() as u32).to_le_bytes());
        out.extend_from_slice(&config);
        for tensor in self.parameters() {
            for v in tensor {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let checksum = Sha256::digest(&out);
        out.extend_from_slice(&checksum);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        if bytes.len() < MAGIC.len() + CHECKSUM_LEN {
            return Err(ModelError::Corrupt("file too short".into()));
        }
        if &bytes[..MAGIC.len()] != MAGIC {
            return Err(ModelError::Corrupt("not a model file (bad magic)".into()));
        }
        let (payload, checksum) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
        if Sha256::digest(payload).as_slice() != checksum {
            return Err(ModelError::Corrupt("checksum mismatch".into()));
        }

        let mut cur = Cursor {
            bytes: payload,
            at: MAGIC.len(),
        };
        let version = cur.u32()?;
        if version != VERSION {
            return Err(ModelError::Version {
                found: version,
                expected: VERSION,
            });
        }
        let kind = match cur.u8()? {
            1 => ModelKind::Sparse,
            2 => ModelKind::Plain,
            other => return Err(ModelError::Corrupt(format!("unknown model kind {other}"))),
        };
        let (enc_act, dec_act) = (cur.u8()?, cur.u8()?);
        if enc_act != ACT_RELU || dec_act != ACT_SIGMOID {
            return Err(ModelError::Corrupt(format!(
                "unsupported activations ({enc_act}, {dec_act})"
            )));
        }
        let has_hash = cur.u8()?;
        let hash: [u8; 32] = cur.take(32)?.try_into().unwrap();
        let spec_hash = match has_hash {
            0 => None,
            1 => Some(SpecHash(hash)),
            other => return Err(ModelError::Corrupt(format!("bad hash flag {other}"))),
        };
        let input = cur.u32()? as usize;
        let hidden = cur.u32()? as usize;
        if input == 0 || hidden == 0 {
            return Err(ModelError::InvalidDims { input, hidden });
        }
        let config_len = cur.u32()? as usize;
        let config: TrainConfig = serde_json::from_slice(cur.take(config_len)?)
            .map_err(|e| ModelError::Corrupt(format!("training config: {e}")))?;

        let w1 = cur.f64s(hidden * input)?;
        let b1 = cur.f64s(hidden)?;
        let w2 = cur.f64s(input * hidden)?;
        let b2 = cur.f64s(input)?;
        if cur.at != payload.len() {
            return Err(ModelError::Corrupt(format!(
                "{} trailing bytes",
                payload.len() - cur.at
            )));
        }
        if w1.iter().chain(&b1).chain(&w2).chain(&b2).any(|v| !v.is_finite()) {
            return Err(ModelError::Corrupt("non-finite parameter".into()));
        }

        let mut model = AeModel::from_parameters(
            kind,
            Matrix::from_vec(hidden, input, w1)?,
            b1,
            Matrix::from_vec(input, hidden, w2)?,
            b2,
        )?;
        model.spec_hash = spec_hash;
        model.config = config;
        Ok(model)
    }

    pub fn save<W: Write>(&self, mut sink: W) -> Result<(), ModelError> {
        sink.write_all(&self.to_bytes())?;
        sink.flush()?;
        Ok(())
    }

    pub fn load<R: Read>(mut source: R) -> Result<Self, ModelError> {
        let mut bytes = Vec::new();
        source.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    /// Loads a model and checks its kind and input dimension.
    pub fn load_expecting<R: Read>(
        source: R,
        kind: ModelKind,
        input_dim: Option<usize>,
    ) -> Result<Self, ModelError> {
        let model = Self::load(source)?;
        if model.kind != kind {
            return Err(ModelError::KindMismatch {
                expected: kind,
                found: model.kind,
            });
        }
        if let Some(expected) = input_dim {
            if model.input_dim() != expected {
                return Err(ModelError::Dimension {
                    expected,
                    found: model.input_dim(),
                });
            }
        }
        Ok(model)
    }
}
