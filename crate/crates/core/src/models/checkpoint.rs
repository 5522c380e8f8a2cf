//! Binary model container.
//!
//! Layout (little-endian): magic `XLABCKPT`, `u32` version, kind string,
//! `u32` metadata count and key/value strings, `u32` tensor count and for
//! each tensor its name plus `u64` rows and cols, then every tensor's
//! `f64` payload in table order. Strings are `u32` length plus UTF-8 bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::models::{CenModel, Dictionary, LogisticModel, Model, ModelKind, MoeModel};
use crate::numkit::{Dense, Matrix, MlpParams};

const MAGIC: &[u8; 8] = b"XLABCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub meta: BTreeMap<String, String>,
    /// Named tensors: the model's own, followed by any extras.
    pub tensors: Vec<(String, Matrix)>,
}

fn mlp_tensors(prefix: &str, net: &MlpParams, out: &mut Vec<(String, Matrix)>) {
    for (i, layer) in net.layers().iter().enumerate() {
        out.push((format!("{prefix}.{i}.weight"), layer.weight.clone()));
        out.push((format!("{prefix}.{i}.bias"), layer.bias.clone()));
    }
}

impl Checkpoint {
    pub fn from_model(model: &Model) -> Self {
        let mut tensors = Vec::new();
        match model {
            Model::Logistic(m) => {
                tensors.push(("weights".into(), m.weights.clone()));
                tensors.push(("bias".into(), m.bias.clone()));
            }
            Model::Mlp(m) => mlp_tensors("network", m, &mut tensors),
            Model::Moe(m) => {
                mlp_tensors("gate", &m.gate, &mut tensors);
                tensors.push(("dictionary.bias".into(), m.experts.bias.clone()));
                tensors.push(("dictionary.weights".into(), m.experts.weights.clone()));
            }
            Model::Cen(m) => {
                mlp_tensors("encoder", &m.encoder, &mut tensors);
                tensors.push(("dictionary.bias".into(), m.dictionary.bias.clone()));
                tensors.push(("dictionary.weights".into(), m.dictionary.weights.clone()));
            }
        }
        Checkpoint {
            kind: model.kind(),
            meta: BTreeMap::new(),
            tensors,
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&Matrix> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn push_tensor(&mut self, name: impl Into<String>, value: Matrix) {
        self.tensors.push((name.into(), value));
    }

    fn require(&self, name: &str) -> Result<Matrix> {
        self.tensor(name)
            .cloned()
            .ok_or_else(|| Error::Parameter(format!("checkpoint has no tensor `{name}`")))
    }

    fn mlp(&self, prefix: &str) -> Result<MlpParams> {
        let mut layers = Vec::new();
        while let Some(weight) = self.tensor(&format!("{prefix}.{}.weight", layers.len())) {
            let bias = self.require(&format!("{prefix}.{}.bias", layers.len()))?;
            layers.push(Dense {
                weight: weight.clone(),
                bias,
            });
        }
        MlpParams::from_layers(layers)
    }

    pub fn to_model(&self) -> Result<Model> {
        Ok(match self.kind {
            ModelKind::Logistic => Model::Logistic(LogisticModel {
                weights: self.require("weights")?,
                bias: self.require("bias")?,
            }),
            ModelKind::Mlp => Model::Mlp(self.mlp("network")?),
            ModelKind::Moe => Model::Moe(MoeModel::new(
                self.mlp("gate")?,
                Dictionary::new(self.require("dictionary.bias")?, self.require("dictionary.weights")?)?,
            )?),
            ModelKind::Cen => Model::Cen(CenModel::new(
                self.mlp("encoder")?,
                Dictionary::new(self.require("dictionary.bias")?, self.require("dictionary.weights")?)?,
            )?),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        fn put_str(out: &mut Vec<u8>, s: &str) {
            out.extend((s.len() as u32).to_le_bytes());
            out.extend(s.as_bytes());
        }
        let mut out = Vec::from(&MAGIC[..]);
        out.extend(VERSION.to_le_bytes());
        put_str(&mut out, self.kind.as_str());
        out.extend((self.meta.len() as u32).to_le_bytes());
        for (k, v) in &self.meta {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        out.extend((self.tensors.len() as u32).to_le_bytes());
        for (name, m) in &self.tensors {
            put_str(&mut out, name);
            out.extend((m.rows() as u64).to_le_bytes());
            out.extend((m.cols() as u64).to_le_bytes());
        }
        for (_, m) in &self.tensors {
            for v in m.as_slice() {
                out.extend(v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        if r.take(8)? != MAGIC {
            return Err(r.fail(0, "not a model checkpoint (bad magic)"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.fail(8, format!("unsupported checkpoint version {version}")));
        }
        let at = r.pos;
        let kind: ModelKind = r.string()?.parse().map_err(|_| r.fail(at, "unknown model kind"))?;
        let mut meta = BTreeMap::new();
        for _ in 0..r.u32()? {
            let k = r.string()?;
            meta.insert(k, r.string()?);
        }
        let count = r.u32()? as usize;
        let mut table = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name = r.string()?;
            let rows = r.u64()? as usize;
            let cols = r.u64()? as usize;
            table.push((name, rows, cols));
        }
        let mut tensors = Vec::with_capacity(table.len());
        for (name, rows, cols) in table {
            let len = rows
                .checked_mul(cols)
                .filter(|l| l.checked_mul(8).is_some_and(|b| b <= bytes.len()))
                .ok_or_else(|| r.fail(r.pos, format!("tensor `{name}` is too large")))?;
            let at = r.pos;
            let raw = r.take(len * 8)?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            let m = Matrix::from_vec(rows, cols, data).map_err(|e| r.fail(at, format!("tensor `{name}`: {e}")))?;
            tensors.push((name, m));
        }
        if r.pos != bytes.len() {
            return Err(r.fail(r.pos, "trailing bytes after payload"));
        }
        Ok(Checkpoint { kind, meta, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes, path)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn fail(&self, offset: usize, message: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            offset: offset as u64,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| self.fail(self.pos, "unexpected end of file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let at = self.pos;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| self.fail(at, "invalid UTF-8"))
    }
}
