//! Binary checkpoint layout (all integers little-endian):
//!
//! ```text
//! "SKRD" | version u32 | kind u32 | vocab_hash u64
//! config_len u32 | config (UTF-8 JSON)
//! n_params u32 | n_params × (name_len u32 | name | ndim u32 | ndim × dim u64)
//! parameter blobs (f64, manifest order)
//! crc32 u32 over every preceding byte
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::EmbeddingTable;
use crate::nn::{Activation, BiLstm, Dense, LstmCell, Parameter, Tensor};

use super::{BowClassifier, BowTrunk, DecisionNet, LstmClassifier, ModelDims, ModelError, Result, Trainable};

pub const MAGIC: &[u8; 4] = b"SKRD";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Bow,
    Lstm,
    Decision,
}

impl ModelKind {
    fn tag(self) -> u32 {
        match self {
            ModelKind::Bow => 1,
            ModelKind::Lstm => 2,
            ModelKind::Decision => 3,
        }
    }

    fn from_tag(tag: u32) -> Result<Self> {
        match tag {
            1 => Ok(ModelKind::Bow),
            2 => Ok(ModelKind::Lstm),
            3 => Ok(ModelKind::Decision),
            other => Err(ModelError::Format(format!("unknown model kind tag {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub vocab_hash: u64,
    /// JSON echo of the architecture.
    pub config: String,
    pub params: Vec<(String, Tensor)>,
}

#[derive(Serialize, Deserialize)]
struct ArchEcho {
    dims: ModelDims,
    embeddings_trainable: bool,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| ModelError::Format(format!("unexpected end of data at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| ModelError::Format(e.to_string()))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.kind.tag().to_le_bytes());
        out.extend_from_slice(&self.vocab_hash.to_le_bytes());
        out.extend_from_slice(&(self.config.len() as u32).to_le_bytes());
        out.extend_from_slice(self.config.as_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in &self.params {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
        }
        for (_, t) in &self.params {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(ModelError::Integrity(format!("file too short ({} bytes)", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(ModelError::Format("missing SKRD magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(ModelError::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        if bytes.len() < 12 {
            return Err(ModelError::Integrity("missing checksum".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        let actual = crc32fast::hash(body);
        if stored != actual {
            return Err(ModelError::Integrity(format!(
                "crc32 mismatch (stored {stored:08x}, computed {actual:08x})"
            )));
        }
        let mut r = Reader { buf: body, pos: 8 };
        let kind = ModelKind::from_tag(r.u32()?)?;
        let vocab_hash = r.u64()?;
        let config = r.string()?;
        let n = r.u32()? as usize;
        let mut manifest = Vec::with_capacity(n);
        for _ in 0..n {
            let name = r.string()?;
            let ndim = r.u32()? as usize;
            let shape = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            manifest.push((name, shape));
        }
        let mut params = Vec::with_capacity(n);
        for (name, shape) in manifest {
            let count: usize = shape.iter().product();
            let raw = r.take(count * 8)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            params.push((name, Tensor::new(shape, data)?));
        }
        if r.pos != body.len() {
            return Err(ModelError::Format(format!("{} trailing bytes", body.len() - r.pos)));
        }
        Ok(Self {
            kind,
            vocab_hash,
            config,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|source| ModelError::Io {
            path: path.to_owned(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| ModelError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }

    fn new<M: Trainable>(kind: ModelKind, model: &M, vocab_hash: u64, echo: ArchEcho) -> Self {
        Self {
            kind,
            vocab_hash,
            config: serde_json::to_string(&echo).expect("serializable"),
            params: model
                .parameters()
                .into_iter()
                .map(|p| (p.name.clone(), p.value.clone()))
                .collect(),
        }
    }

    fn expect_kind(&self, kind: ModelKind) -> Result<ArchEcho> {
        if self.kind != kind {
            return Err(ModelError::Format(format!("expected a {kind:?} checkpoint, found {:?}", self.kind)));
        }
        serde_json::from_str(&self.config).map_err(|e| ModelError::Format(format!("config echo: {e}")))
    }

    fn take(&self, name: &str, shape: &[usize]) -> Result<Parameter> {
        let (_, t) = self
            .params
            .iter()
            .find(|(n, _)| n == name)
            .ok_or_else(|| ModelError::Format(format!("missing parameter {name}")))?;
        if t.shape() != shape {
            return Err(ModelError::Format(format!(
                "parameter {name} has shape {:?}, expected {shape:?}",
                t.shape()
            )));
        }
        Ok(Parameter::new(name, t.clone()))
    }

    fn embeddings(&self, trainable: bool) -> Result<EmbeddingTable> {
        let (_, t) = self
            .params
            .iter()
            .find(|(n, _)| n == "embeddings")
            .ok_or_else(|| ModelError::Format("missing parameter embeddings".into()))?;
        if t.shape().len() != 2 {
            return Err(ModelError::Format("embeddings must be a matrix".into()));
        }
        Ok(EmbeddingTable::new(t.clone(), trainable))
    }

    fn dense(&self, name: &str, n_in: usize, n_out: usize, activation: Activation) -> Result<Dense> {
        Ok(Dense {
            weight: self.take(&format!("{name}.weight"), &[n_out, n_in])?,
            bias: self.take(&format!("{name}.bias"), &[n_out])?,
            activation,
        })
    }

    fn cell(&self, name: &str, input: usize, hidden: usize) -> Result<LstmCell> {
        Ok(LstmCell::from_parameters(
            self.take(&format!("{name}.w_ih"), &[4 * hidden, input])?,
            self.take(&format!("{name}.w_hh"), &[4 * hidden, hidden])?,
            self.take(&format!("{name}.bias"), &[4 * hidden])?,
        )?)
    }

    fn trunk(&self, dims: &ModelDims, trainable: bool) -> Result<BowTrunk> {
        let embeddings = self.embeddings(trainable)?;
        let hidden = self.dense("hidden", embeddings.dim(), dims.bow_hidden, Activation::Relu)?;
        Ok(BowTrunk { embeddings, hidden })
    }
}

impl BowClassifier {
    pub fn to_checkpoint(&self, vocab_hash: u64) -> Checkpoint {
        let dims = ModelDims {
            embedding_dim: self.trunk.embeddings.dim(),
            bow_hidden: self.hidden_width(),
            dropout: self.dropout,
            ..Default::default()
        };
        Checkpoint::new(
            ModelKind::Bow,
            self,
            vocab_hash,
            ArchEcho {
                dims,
                embeddings_trainable: self.trunk.embeddings.trainable,
            },
        )
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let echo = ck.expect_kind(ModelKind::Bow)?;
        let trunk = ck.trunk(&echo.dims, echo.embeddings_trainable)?;
        Ok(Self {
            trunk,
            output: ck.dense("output", echo.dims.bow_hidden, 2, Activation::Identity)?,
            dropout: echo.dims.dropout,
        })
    }
}

impl LstmClassifier {
    pub fn to_checkpoint(&self, vocab_hash: u64) -> Checkpoint {
        let dims = ModelDims {
            embedding_dim: self.embeddings.dim(),
            lstm_projection: self.projection.n_out(),
            lstm_hidden: self.bilstm.hidden(),
            lstm_mlp_hidden: self.hidden.n_out(),
            dropout: self.dropout,
            ..Default::default()
        };
        Checkpoint::new(
            ModelKind::Lstm,
            self,
            vocab_hash,
            ArchEcho {
                dims,
                embeddings_trainable: self.embeddings.trainable,
            },
        )
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let echo = ck.expect_kind(ModelKind::Lstm)?;
        let d = echo.dims;
        let embeddings = ck.embeddings(echo.embeddings_trainable)?;
        Ok(Self {
            projection: ck.dense("projection", embeddings.dim(), d.lstm_projection, Activation::Identity)?,
            bilstm: BiLstm {
                forward: ck.cell("bilstm.fwd", d.lstm_projection, d.lstm_hidden)?,
                backward: ck.cell("bilstm.bwd", d.lstm_projection, d.lstm_hidden)?,
            },
            hidden: ck.dense("hidden", 4 * d.lstm_hidden, d.lstm_mlp_hidden, Activation::Relu)?,
            output: ck.dense("output", d.lstm_mlp_hidden, 2, Activation::Identity)?,
            embeddings,
            dropout: d.dropout,
        })
    }
}

impl DecisionNet {
    pub fn to_checkpoint(&self, vocab_hash: u64) -> Checkpoint {
        let dims = ModelDims {
            embedding_dim: self.trunk.embeddings.dim(),
            bow_hidden: self.trunk.hidden.n_out(),
            decision_hidden: self.head_hidden.n_out(),
            dropout: self.dropout,
            ..Default::default()
        };
        Checkpoint::new(
            ModelKind::Decision,
            self,
            vocab_hash,
            ArchEcho {
                dims,
                embeddings_trainable: self.trunk.embeddings.trainable,
            },
        )
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let echo = ck.expect_kind(ModelKind::Decision)?;
        let d = echo.dims;
        Ok(Self {
            trunk: ck.trunk(&d, echo.embeddings_trainable)?,
            head_hidden: ck.dense("head_hidden", d.bow_hidden, d.decision_hidden, Activation::Relu)?,
            head_output: ck.dense("head_output", d.decision_hidden, 2, Activation::Identity)?,
            dropout: d.dropout,
        })
    }
}
