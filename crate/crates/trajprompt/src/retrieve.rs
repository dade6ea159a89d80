//! Parallel history retrieval and its JSON-lines cache format.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use trajprompt_core::retrieval::{index_for_split, RetrievalOutput, VectorSource};
use trajprompt_core::{DatasetSplit, RetrievalConfig, RetrievalResult, Trajectory};

use crate::error::{Error, Result};
use crate::split_io::{read_jsonl, write_jsonl};

pub fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {threads} worker threads: {e}")))
}

/// Same output as the sequential core routine, computed on `threads` workers
/// (0 = one per CPU). Output order never depends on the worker count.
pub fn build_retrievals(
    split: &DatasetSplit,
    vectors: Option<&(dyn VectorSource + Sync)>,
    config: &RetrievalConfig,
    threads: usize,
) -> Result<RetrievalOutput> {
    let index = index_for_split(split, vectors, config)?;
    let keys: Vec<&Trajectory> = split.all_trajectories().collect();
    let computed: Vec<_> =
        thread_pool(threads)?.install(|| keys.par_iter().map(|k| (k.trajectory_id, index.retrieve(k))).collect());
    let mut out = RetrievalOutput { errors: index.pool_errors.clone(), ..Default::default() };
    for (id, r) in computed {
        let r = r.unwrap_or_else(|e| {
            out.errors.push((id, e));
            RetrievalResult::empty(id)
        });
        out.results.insert(id, r);
    }
    out.errors.sort_by_key(|(id, _)| *id);
    for (id, e) in &out.errors {
        log::warn!("retrieval for trajectory {id}: {e}");
    }
    Ok(out)
}

/// One result per line, ascending key id.
pub fn write_retrievals(path: &Path, results: &BTreeMap<u64, RetrievalResult>) -> Result<()> {
    write_jsonl(path, results.values())
}

pub fn read_retrievals(path: &Path) -> Result<BTreeMap<u64, RetrievalResult>> {
    let rows: Vec<RetrievalResult> = read_jsonl(path)?;
    let mut out = BTreeMap::new();
    for r in rows {
        let id = r.key_trajectory_id;
        if out.insert(id, r).is_some() {
            return Err(Error::Consistency(format!("{}: duplicate result for trajectory {id}", path.display())));
        }
    }
    Ok(out)
}
