//! Binary vector store.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic   8 bytes  "TPVSTORE"
//! version u32      1
//! dim     u32
//! count   u64
//! index   count x (trajectory_id u64, role u8)   role: 0 = key, 1 = query
//! data    count x dim x f32, row-major, in index order
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use trajprompt_core::retrieval::VectorSource;
use trajprompt_core::{EmbeddingVector, Role};

use crate::error::{Error, IoContext, Result};

pub const MAGIC: &[u8; 8] = b"TPVSTORE";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 4 + 8;
const INDEX_ENTRY_LEN: usize = 9;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct VectorStore {
    dim: usize,
    rows: BTreeMap<(u64, Role), Vec<f32>>,
}

impl VectorStore {
    pub fn new(dim: usize) -> Self {
        VectorStore { dim, rows: BTreeMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn insert(&mut self, v: EmbeddingVector) -> Result<()> {
        if v.dim() != self.dim {
            return Err(Error::Consistency(format!(
                "vector for trajectory {} has dim {}, store has dim {}",
                v.source_id,
                v.dim(),
                self.dim
            )));
        }
        let key = (v.source_id, v.role);
        if self.rows.contains_key(&key) {
            return Err(Error::Consistency(format!("duplicate {:?} vector for trajectory {}", v.role, v.source_id)));
        }
        self.rows.insert(key, v.into_values());
        Ok(())
    }

    pub fn get(&self, trajectory_id: u64, role: Role) -> Option<&[f32]> {
        self.rows.get(&(trajectory_id, role)).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, Role, &[f32])> {
        self.rows.iter().map(|(&(id, role), v)| (id, role, v.as_slice()))
    }

    /// Rows are written in (trajectory_id, role) order, so equal stores
    /// serialise to equal bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.rows.len() * (INDEX_ENTRY_LEN + 4 * self.dim));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.rows.len() as u64).to_le_bytes());
        for &(id, role) in self.rows.keys() {
            out.extend_from_slice(&id.to_le_bytes());
            out.push(role.code());
        }
        for v in self.rows.values() {
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let format = |msg: String| Error::Format { path: path.into(), msg };
        let corrupt = |msg: String| Error::Corrupt { path: path.into(), msg };
        if bytes.len() < HEADER_LEN {
            return Err(format(format!("file too short for header ({} bytes)", bytes.len())));
        }
        if &bytes[..8] != MAGIC {
            return Err(format("not a vector store (bad magic)".into()));
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
        let version = u32_at(8);
        if version != VERSION {
            return Err(format(format!("unsupported vector store version {version}")));
        }
        let dim = u32_at(12) as usize;
        let count = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes"));
        let expected = usize::try_from(count)
            .ok()
            .and_then(|c| c.checked_mul(INDEX_ENTRY_LEN + 4 * dim))
            .and_then(|b| b.checked_add(HEADER_LEN))
            .ok_or_else(|| corrupt(format!("implausible row count {count}")))?;
        if bytes.len() != expected {
            return Err(corrupt(format!("expected {expected} bytes for {count} rows of dim {dim}, found {}", bytes.len())));
        }
        let count = count as usize;
        let data_start = HEADER_LEN + count * INDEX_ENTRY_LEN;
        let mut store = VectorStore::new(dim);
        for i in 0..count {
            let at = HEADER_LEN + i * INDEX_ENTRY_LEN;
            let id = u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
            let role = Role::from_code(bytes[at + 8]).ok_or_else(|| corrupt(format!("row {i}: bad role byte {}", bytes[at + 8])))?;
            let row = &bytes[data_start + i * 4 * dim..data_start + (i + 1) * 4 * dim];
            let values: Vec<f32> = row.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
            if store.rows.insert((id, role), values).is_some() {
                return Err(Error::Consistency(format!("{}: duplicate {role:?} row for trajectory {id}", path.display())));
            }
        }
        Ok(store)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).at(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).at(path)?;
        Self::from_bytes(&bytes, path)
    }
}

impl VectorSource for VectorStore {
    fn vector(&self, trajectory_id: u64, role: Role) -> Option<&[f32]> {
        self.get(trajectory_id, role)
    }
}
