//! Parallel corpus assembly and the JSON-lines corpus format.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use trajprompt_core::corpus::AssemblyContext;
use trajprompt_core::prompt::mask_context;
use trajprompt_core::{
    assemble_record, PromptRecord, PromptTemplate, RetrievalResult, TokenBudget, TokenCounter, Trajectory, Variant,
};

use crate::error::{Error, IoContext, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedRecord {
    pub trajectory_id: u64,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AssembledSplit {
    /// Ascending trajectory id.
    pub records: Vec<PromptRecord>,
    pub skipped: Vec<SkippedRecord>,
}

/// Everything a split's records share.
pub struct CorpusSpec<'a> {
    pub template: &'a PromptTemplate,
    pub budget: &'a TokenBudget,
    pub counter: &'a (dyn TokenCounter + Sync),
    pub id_range: u32,
    pub variant: Variant,
    /// Seed for category-name masking; `None` leaves names intact.
    pub mask_seed: Option<u64>,
}

/// Assembles one record per key on the current rayon pool. With
/// [`Variant::NoHistory`] retrieval results are ignored; otherwise a missing
/// result is a consistency error.
pub fn assemble_split(
    keys: &[Trajectory],
    retrievals: &BTreeMap<u64, RetrievalResult>,
    lookup: &HashMap<u64, &Trajectory>,
    spec: &CorpusSpec<'_>,
) -> Result<AssembledSplit> {
    if spec.variant == Variant::MaskedContext {
        return Err(Error::Config("masking is requested through the mask seed, not the variant".into()));
    }
    let mut keyed: Vec<&Trajectory> = keys.iter().collect();
    keyed.sort_by_key(|t| t.trajectory_id);
    let built: Vec<Result<std::result::Result<PromptRecord, SkippedRecord>>> = keyed
        .par_iter()
        .map(|key| {
            let empty;
            let retrieval = if spec.variant == Variant::NoHistory {
                empty = RetrievalResult::empty(key.trajectory_id);
                &empty
            } else {
                retrievals.get(&key.trajectory_id).ok_or_else(|| {
                    Error::Consistency(format!("no retrieval result for trajectory {}", key.trajectory_id))
                })?
            };
            let ctx = AssemblyContext {
                template: spec.template,
                budget: spec.budget,
                counter: spec.counter,
                id_range: spec.id_range,
                variant: spec.variant,
            };
            let record = match assemble_record(key, retrieval, |id| lookup.get(&id).copied(), &ctx) {
                Ok(r) => r,
                Err(e @ trajprompt_core::AssembleError::DoesNotFit { .. }) => {
                    return Ok(Err(SkippedRecord { trajectory_id: key.trajectory_id, reason: e.to_string() }))
                }
                Err(e) => return Err(e.into()),
            };
            Ok(Ok(match spec.mask_seed {
                Some(seed) => mask_context(&record, spec.template, seed)?,
                None => record,
            }))
        })
        .collect();
    let mut out = AssembledSplit::default();
    for r in built {
        match r? {
            Ok(rec) => out.records.push(rec),
            Err(skip) => out.skipped.push(skip),
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct PlainRecord<'a> {
    question: &'a str,
    answer: &'a str,
}

/// Writes one JSON object per line (UTF-8, LF). Plain mode keeps only
/// `question` and `answer`.
pub fn emit_jsonl(records: &[PromptRecord], path: &Path, include_metadata: bool) -> Result<()> {
    let file = File::create(path).at(path)?;
    let mut w = BufWriter::new(file);
    for r in records {
        let res = if include_metadata {
            serde_json::to_writer(&mut w, r)
        } else {
            serde_json::to_writer(&mut w, &PlainRecord { question: &r.question, answer: &r.answer })
        };
        res.map_err(|e| Error::Format { path: path.into(), msg: e.to_string() })?;
        w.write_all(b"\n").at(path)?;
    }
    w.flush().at(path)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineError {
    /// 1-based.
    pub line: usize,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LoadedCorpus {
    pub records: Vec<PromptRecord>,
    pub skipped: Vec<LineError>,
}

/// Strict mode aborts on the first malformed line; lenient mode skips and
/// reports it.
pub fn load_jsonl(path: &Path, strict: bool) -> Result<LoadedCorpus> {
    let file = File::open(path).at(path)?;
    let mut out = LoadedCorpus::default();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.at(path)?;
        if line.is_empty() {
            continue;
        }
        match serde_json::from_str::<PromptRecord>(&line) {
            Ok(r) => out.records.push(r),
            Err(e) if strict => return Err(Error::Line { path: path.into(), line: i + 1, msg: e.to_string() }),
            Err(e) => {
                log::warn!("{}:{}: skipping malformed record: {e}", path.display(), i + 1);
                out.skipped.push(LineError { line: i + 1, message: e.to_string() });
            }
        }
    }
    Ok(out)
}
