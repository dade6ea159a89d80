//! Batch prediction with bounded concurrency and a resumable checkpoint.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;
use std::time::Instant;

use trajprompt_core::{PredictionRecord, PromptRecord};

use crate::endpoint::CompletionClient;
use crate::error::{IoContext, Result};

/// Text generator queried once per evaluation question.
pub trait Completer: Sync {
    fn complete(&self, question: &str) -> Result<String>;
}

impl Completer for CompletionClient {
    fn complete(&self, question: &str) -> Result<String> {
        CompletionClient::complete(self, question)
    }
}

/// Offline baseline: answers with the POI id mentioned most often in the
/// question, ties going to the id mentioned last.
#[derive(Clone, Copy, Debug, Default)]
pub struct FrequencyPredictor;

impl FrequencyPredictor {
    pub fn predict(question: &str) -> Option<u32> {
        const MARK: &str = "POI id ";
        let mut counts: HashMap<u32, (usize, usize)> = HashMap::new();
        for (n, (at, _)) in question.match_indices(MARK).enumerate() {
            let digits: String = question[at + MARK.len()..].chars().take_while(char::is_ascii_digit).collect();
            if let Ok(id) = digits.parse::<u32>() {
                let e = counts.entry(id).or_default();
                e.0 += 1;
                e.1 = n;
            }
        }
        counts.into_iter().max_by_key(|&(id, (count, last))| (count, last, std::cmp::Reverse(id))).map(|(id, _)| id)
    }
}

impl Completer for FrequencyPredictor {
    fn complete(&self, question: &str) -> Result<String> {
        Ok(match Self::predict(question) {
            Some(id) => format!("<answer>: will visit POI id {id}."),
            None => "no prediction".to_string(),
        })
    }
}

/// Reads completed predictions. A torn final line is dropped; any other
/// malformed line discards the whole checkpoint.
fn load_checkpoint(path: &Path) -> Result<BTreeMap<u64, PredictionRecord>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(BTreeMap::new()),
        Err(e) => {
            log::warn!("checkpoint {} unreadable ({e}); starting fresh", path.display());
            return Ok(BTreeMap::new());
        }
    };
    let torn_tail = !text.is_empty() && !text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    let mut done = BTreeMap::new();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<PredictionRecord>(line) {
            Ok(p) => {
                done.insert(p.trajectory_id, p);
            }
            Err(_) if torn_tail && i + 1 == lines.len() => {
                log::warn!("checkpoint {}: dropping incomplete final line", path.display());
            }
            Err(e) => {
                log::warn!("checkpoint {} corrupt at line {} ({e}); starting fresh", path.display(), i + 1);
                return Ok(BTreeMap::new());
            }
        }
    }
    Ok(done)
}

/// One prediction per record, in input order. Records already present in
/// `checkpoint` are not re-sent; new successes are appended to it by a single
/// writer. Hard failures yield [`PredictionRecord::failed`] and are not
/// checkpointed, so a later run retries them.
pub fn run_predictions(
    records: &[PromptRecord],
    completer: &dyn Completer,
    id_range: u32,
    concurrency: usize,
    checkpoint: Option<&Path>,
) -> Result<Vec<PredictionRecord>> {
    let mut done = match checkpoint {
        Some(p) => load_checkpoint(p)?,
        None => BTreeMap::new(),
    };
    done.retain(|id, _| records.iter().any(|r| r.meta.trajectory_id == *id));
    let pending: Vec<&PromptRecord> = records.iter().filter(|r| !done.contains_key(&r.meta.trajectory_id)).collect();
    if !done.is_empty() {
        log::info!("resuming: {} of {} predictions already checkpointed", done.len(), records.len());
    }

    let mut writer = match checkpoint {
        Some(p) => {
            // Rewrite the surviving entries so a discarded or torn file is healed.
            let mut w = BufWriter::new(File::create(p).at(p)?);
            for rec in done.values() {
                serde_json::to_writer(&mut w, rec).expect("prediction serialises");
                w.write_all(b"\n").at(p)?;
            }
            w.flush().at(p)?;
            drop(w);
            Some((p, BufWriter::new(OpenOptions::new().append(true).open(p).at(p)?)))
        }
        None => None,
    };

    let next = AtomicUsize::new(0);
    let workers = concurrency.max(1).min(pending.len().max(1));
    let (tx, rx) = mpsc::channel::<(PredictionRecord, bool)>();
    let mut write_err = None;
    thread::scope(|s| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, pending) = (&next, &pending);
            s.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(rec) = pending.get(i) else { break };
                let id = rec.meta.trajectory_id;
                let start = Instant::now();
                let outcome = completer.complete(&rec.question);
                let ms = start.elapsed().as_millis() as u64;
                let msg = match outcome {
                    Ok(text) => (PredictionRecord::from_output(id, text, id_range, ms), true),
                    Err(e) => {
                        log::error!("trajectory {id}: prediction failed: {e}");
                        (PredictionRecord::failed(id, ms), false)
                    }
                };
                if tx.send(msg).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (pred, ok) in rx {
            if let (true, Some((path, w)), None) = (ok, writer.as_mut(), write_err.as_ref()) {
                let line = serde_json::to_string(&pred).expect("prediction serialises");
                if let Err(e) = w.write_all(line.as_bytes()).and_then(|_| w.write_all(b"\n")).and_then(|_| w.flush()) {
                    write_err = Some(crate::Error::Io { path: path.to_path_buf(), source: e });
                }
            }
            done.insert(pred.trajectory_id, pred);
        }
    });
    if let Some(e) = write_err {
        return Err(e);
    }
    Ok(records.iter().map(|r| done[&r.meta.trajectory_id].clone()).collect())
}

/// Share of predictions that parsed to some POI id.
pub fn parse_rate(predictions: &[PredictionRecord]) -> f64 {
    if predictions.is_empty() {
        return 0.0;
    }
    predictions.iter().filter(|p| p.predicted_poi_id.is_some()).count() as f64 / predictions.len() as f64
}

