//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "PRCGCKPT"
//! version      u32      1
//! entry count  u32
//! entry*:
//!   name length u32, name bytes (UTF-8)
//!   dim count   u32, dims u32*   network: [input, hidden.., output]; vector: [len]
//!   value count u64, values f64*
//! ```
//!
//! Values are stored as raw IEEE-754 bits, so a round trip is bit-exact.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::mlp::{MlpSpec, ParamVector};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"PRCGCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub dims: Vec<u32>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub entries: Vec<CheckpointEntry>,
}

impl Checkpoint {
    pub fn push_network(&mut self, name: &str, spec: &MlpSpec, params: &ParamVector) {
        self.entries.push(CheckpointEntry {
            name: name.to_owned(),
            dims: spec.layer_sizes().iter().map(|&d| d as u32).collect(),
            values: params.to_vec(),
        });
    }

    pub fn push_vector(&mut self, name: &str, values: &[f64]) {
        self.entries.push(CheckpointEntry {
            name: name.to_owned(),
            dims: vec![values.len() as u32],
            values: values.to_vec(),
        });
    }

    pub fn entry(&self, name: &str) -> Result<&CheckpointEntry> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing entry `{name}`")))
    }

    /// Rebuilds a tanh/linear network stored under `name`.
    pub fn network(&self, name: &str) -> Result<(MlpSpec, ParamVector)> {
        let e = self.entry(name)?;
        if e.dims.len() < 3 {
            return Err(Error::Checkpoint(format!("entry `{name}` is not a network")));
        }
        let dims: Vec<usize> = e.dims.iter().map(|&d| d as usize).collect();
        let spec = MlpSpec::new(dims[0], dims[1..dims.len() - 1].to_vec(), dims[dims.len() - 1])?;
        if spec.param_count() != e.values.len() {
            return Err(Error::Checkpoint(format!(
                "entry `{name}` holds {} values, architecture needs {}",
                e.values.len(),
                spec.param_count()
            )));
        }
        Ok((spec, ParamVector(e.values.clone())))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for e in &self.entries {
            w.write_all(&(e.name.len() as u32).to_le_bytes())?;
            w.write_all(e.name.as_bytes())?;
            w.write_all(&(e.dims.len() as u32).to_le_bytes())?;
            for d in &e.dims {
                w.write_all(&d.to_le_bytes())?;
            }
            w.write_all(&(e.values.len() as u64).to_le_bytes())?;
            for v in &e.values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let count = read_u32(r)?;
        let mut entries = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let name_len = read_u32(r)? as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| Error::Checkpoint("entry name is not UTF-8".into()))?;
            let ndims = read_u32(r)?;
            let dims = (0..ndims).map(|_| read_u32(r)).collect::<Result<Vec<_>>>()?;
            let nvalues = read_u64(r)?;
            let mut values = Vec::with_capacity(nvalues.min(1 << 24) as usize);
            let mut buf = [0u8; 8];
            for _ in 0..nvalues {
                r.read_exact(&mut buf)?;
                values.push(f64::from_le_bytes(buf));
            }
            entries.push(CheckpointEntry { name, dims, values });
        }
        Ok(Self { entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::new();
        self.write_to(&mut bytes)?;
        fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::read_from(&mut bytes.as_slice())
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
