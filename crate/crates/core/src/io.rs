//! File formats and atomic writes.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::NkInstance;

pub const INSTANCE_FORMAT_VERSION: u32 = 1;

/// Canonical on-disk form of an instance. Tables are written as shortest
/// round-trip decimals, so reading a file back reproduces every `f64`
/// bit for bit.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct InstanceFile {
    pub format_version: u32,
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    pub neighbors: Vec<Vec<usize>>,
    pub tables: Vec<Vec<f64>>,
}

impl From<&NkInstance> for InstanceFile {
    fn from(inst: &NkInstance) -> Self {
        Self {
            format_version: INSTANCE_FORMAT_VERSION,
            n: inst.n(),
            k: inst.k(),
            seed: inst.seed(),
            neighbors: inst.all_neighbors().to_vec(),
            tables: inst.all_tables().to_vec(),
        }
    }
}

impl TryFrom<InstanceFile> for NkInstance {
    type Error = Error;

    fn try_from(f: InstanceFile) -> Result<Self> {
        if f.format_version != INSTANCE_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: f.format_version,
                expected: INSTANCE_FORMAT_VERSION,
            });
        }
        NkInstance::from_parts(f.n, f.k, f.seed, f.neighbors, f.tables)
    }
}

pub fn instance_to_json(inst: &NkInstance) -> Result<String> {
    Ok(serde_json::to_string_pretty(&InstanceFile::from(inst))?)
}

pub fn instance_from_json(s: &str) -> Result<NkInstance> {
    let file: InstanceFile = serde_json::from_str(s)?;
    file.try_into()
}

pub fn write_instance(path: &Path, inst: &NkInstance) -> Result<()> {
    let mut s = instance_to_json(inst)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_instance(path: &Path) -> Result<NkInstance> {
    instance_from_json(&fs::read_to_string(path)?)
}

/// Writes `contents` to a temporary file next to `path` and renames it into
/// place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}
