//! Versioned binary checkpoint container.
//!
//! Layout (all little-endian):
//!
//! ```text
//! magic   "DD3C"
//! version u32 (currently 1)
//! kind    string       -- "teacher" | "pepd" | "train-state"
//! seed    u64
//! descriptor string    -- JSON architecture/config snapshot
//! n_tables u32         -- named f64 tables (e.g. the noise schedule)
//!   per table: name string, len u32, f64 data
//! n_params u32
//!   per param: name string, shape header, f32 data
//! ```

use std::path::Path;

use crate::error::{DdError, Result};
use crate::io::{BinReader, BinWriter};
use crate::nn::ParamStore;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DD3C";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub kind: String,
    pub seed: u64,
    pub descriptor: String,
    pub tables: Vec<(String, Vec<f64>)>,
    pub params: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn new(kind: &str, seed: u64, descriptor: String) -> Self {
        Checkpoint {
            kind: kind.to_string(),
            seed,
            descriptor,
            tables: Vec::new(),
            params: Vec::new(),
        }
    }

    pub fn from_store(kind: &str, seed: u64, descriptor: String, store: &ParamStore<f32>) -> Self {
        let mut ck = Self::new(kind, seed, descriptor);
        for (name, value) in store.entries() {
            ck.params.push((name.to_string(), value.clone()));
        }
        ck
    }

    /// Load all parameters into an already-constructed store; names and
    /// shapes must match exactly.
    pub fn load_into_store(&self, store: &mut ParamStore<f32>) -> Result<()> {
        if self.params.len() != store.len() {
            return Err(DdError::Incompatible(format!(
                "checkpoint has {} params, model expects {}",
                self.params.len(),
                store.len()
            )));
        }
        for (name, value) in &self.params {
            let id = store.lookup(name).ok_or_else(|| {
                DdError::Incompatible(format!("checkpoint param `{name}` unknown to the model"))
            })?;
            if store.value(id).shape() != value.shape() {
                return Err(DdError::Incompatible(format!(
                    "param `{name}` shape {:?} != model {:?}",
                    value.shape(),
                    store.value(id).shape()
                )));
            }
            *store.value_mut(id) = value.clone();
        }
        Ok(())
    }

    pub fn table(&self, name: &str) -> Option<&[f64]> {
        self.tables
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = BinWriter::new(Vec::new());
        w.magic(CHECKPOINT_MAGIC)?;
        w.u32(CHECKPOINT_VERSION)?;
        w.string(&self.kind)?;
        w.u64(self.seed)?;
        w.string(&self.descriptor)?;
        w.u32(self.tables.len() as u32)?;
        for (name, data) in &self.tables {
            w.string(name)?;
            w.u32(data.len() as u32)?;
            w.f64_slice(data)?;
        }
        w.u32(self.params.len() as u32)?;
        for (name, t) in &self.params {
            w.string(name)?;
            w.shape(t.shape())?;
            w.f32_slice(t.data())?;
        }
        Ok(w.into_inner())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = BinReader::new(bytes);
        r.expect_magic(CHECKPOINT_MAGIC)?;
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(DdError::Format(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let kind = r.string()?;
        let seed = r.u64()?;
        let descriptor = r.string()?;
        let n_tables = r.u32()? as usize;
        let mut tables = Vec::with_capacity(n_tables);
        for _ in 0..n_tables {
            let name = r.string()?;
            let len = r.u32()? as usize;
            tables.push((name, r.f64_vec(len)?));
        }
        let n_params = r.u32()? as usize;
        let mut params = Vec::with_capacity(n_params);
        for _ in 0..n_params {
            let name = r.string()?;
            let shape = r.shape()?;
            let len: usize = shape.iter().product();
            params.push((name, Tensor::new(&shape, r.f32_vec(len)?)));
        }
        Ok(Checkpoint { kind, seed, descriptor, tables, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::atomic_write(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(DdError::Missing(format!(
                "checkpoint not found: {}",
                path.display()
            )));
        }
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Hex SHA-256 of the serialized container (provenance key).
    pub fn content_hash(&self) -> Result<String> {
        Ok(crate::io::sha256_hex(&self.to_bytes()?))
    }
}
