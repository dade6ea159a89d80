//! On-disk form of a [`DatasetSplit`]: `train.jsonl`, `validation.jsonl` and
//! `test.jsonl` (one trajectory per line) plus an `id_maps.json` sidecar.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use trajprompt_core::ingest::{IdMaps, SplitStats};
use trajprompt_core::{DatasetSplit, Trajectory};

use crate::error::{Error, IoContext, Result};

pub const SPLIT_FORMAT: &str = "trajprompt-split";
pub const SPLIT_VERSION: u32 = 1;
pub const SPLIT_FILES: [&str; 3] = ["train.jsonl", "validation.jsonl", "test.jsonl"];
pub const SIDECAR: &str = "id_maps.json";
pub const ID_RANGE_CONVENTION: &str = "inclusive upper bound M-1 where M is the number of remapped POIs";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format: String,
    pub version: u32,
    pub id_range: u32,
    pub id_range_convention: String,
    pub id_maps: IdMaps,
    pub stats: SplitStats,
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let file = File::create(path).at(path)?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, &item).map_err(|e| Error::Format { path: path.into(), msg: e.to_string() })?;
        w.write_all(b"\n").at(path)?;
    }
    w.flush().at(path)
}

/// Strict reader: the first malformed line aborts with its 1-based number.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).at(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.at(path)?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line).map_err(|e| Error::Line { path: path.into(), line: i + 1, msg: e.to_string() })?;
        out.push(v);
    }
    Ok(out)
}

pub fn write_split(dir: &Path, split: &DatasetSplit) -> Result<()> {
    fs::create_dir_all(dir).at(dir)?;
    for (name, part) in SPLIT_FILES.iter().zip([&split.train, &split.validation, &split.test]) {
        write_jsonl(&dir.join(name), part.iter())?;
    }
    let sidecar = Sidecar {
        format: SPLIT_FORMAT.into(),
        version: SPLIT_VERSION,
        id_range: split.id_range(),
        id_range_convention: ID_RANGE_CONVENTION.into(),
        id_maps: split.id_maps.clone(),
        stats: split.stats.clone(),
    };
    let path = dir.join(SIDECAR);
    let bytes = serde_json::to_vec_pretty(&sidecar).map_err(|e| Error::Format { path: path.clone(), msg: e.to_string() })?;
    fs::write(&path, bytes).at(&path)
}

pub fn read_split(dir: &Path) -> Result<DatasetSplit> {
    let path = dir.join(SIDECAR);
    let sidecar = read_sidecar(dir)?;
    if sidecar.format != SPLIT_FORMAT || sidecar.version != SPLIT_VERSION {
        return Err(Error::Format {
            path,
            msg: format!("expected {SPLIT_FORMAT} v{SPLIT_VERSION}, found {} v{}", sidecar.format, sidecar.version),
        });
    }
    let mut parts: Vec<Vec<Trajectory>> = Vec::with_capacity(3);
    for name in SPLIT_FILES {
        let p = dir.join(name);
        let part: Vec<Trajectory> = read_jsonl(&p)?;
        for t in &part {
            Trajectory::new(t.trajectory_id, t.checkins.clone())
                .map_err(|e| Error::Corrupt { path: p.clone(), msg: format!("trajectory {}: {e}", t.trajectory_id) })?;
        }
        parts.push(part);
    }
    let test = parts.pop().unwrap_or_default();
    let validation = parts.pop().unwrap_or_default();
    let train = parts.pop().unwrap_or_default();
    Ok(DatasetSplit { train, validation, test, id_maps: sidecar.id_maps, stats: sidecar.stats })
}

/// Reads only the sidecar, without loading trajectories.
pub fn read_sidecar(dir: &Path) -> Result<Sidecar> {
    let path = dir.join(SIDECAR);
    let bytes = fs::read(&path).at(&path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Format { path, msg: e.to_string() })
}
