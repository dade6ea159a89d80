//! Stage orchestration with content-hash caching.
//!
//! Output layout under `output_dir`:
//!
//! ```text
//! split/{train,validation,test}.jsonl, split/id_maps.json, split/ingest_report.json
//! vectors.tpvs
//! retrieval/{similarity|recent}-b{budget}.jsonl
//! corpus/{tag}/{train,validation,test}.jsonl, corpus/{tag}/manifest.json [, corpus/{tag}/plain/*.jsonl]
//! predictions/{tag}.jsonl
//! reports/{tag}/report.{json,txt}, reports/summary.txt
//! .stages/{stage}.json   provenance: cache key, config fingerprint, output hashes
//! ```
//!
//! A stage is skipped when its recorded key matches and every recorded output
//! still hashes to the recorded value.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use trajprompt_core::embedding::EmbeddingBackend;
use trajprompt_core::ingest::preprocess;
use trajprompt_core::eval::{partition_trajectories_by_length, partition_users_by_activity, Partition};
use trajprompt_core::prompt::{build_key_prompt, build_query_prompt};
use trajprompt_core::retrieval::VectorSource;
use trajprompt_core::{
    answer_in_question_rate, EmbeddingVector, EvalReport, HashingEmbedder, PromptRecord, PromptTemplate,
    RetrievalConfig, Role, Trajectory, Variant,
};

use crate::config::{EmbeddingBackendKind, InferenceBackendKind, PartitionChoice, PipelineConfig};
use crate::corpus::{assemble_split, emit_jsonl, load_jsonl, CorpusSpec, SkippedRecord};
use crate::csv_source::parse_checkins_path;
use crate::endpoint::{CompletionClient, RemoteEmbedder};
use crate::error::{Error, IoContext, Result};
use crate::fingerprint::{hash_file, hash_json};
use crate::predict::{parse_rate, run_predictions, Completer, FrequencyPredictor};
use crate::report::{read_report, write_report};
use crate::retrieve::{build_retrievals, read_retrievals, thread_pool, write_retrievals};
use crate::split_io::{read_jsonl, read_sidecar, read_split, write_jsonl, write_split, ID_RANGE_CONVENTION, SIDECAR, SPLIT_FILES};
use crate::store::VectorStore;

pub const CORPUS_FILES: [&str; 3] = SPLIT_FILES;

/// One (variant, history budget, masking) combination.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunSpec {
    pub variant: Variant,
    pub budget: usize,
    pub mask: bool,
}

impl RunSpec {
    /// A zero budget admits no history, which is the no-history variant.
    pub fn new(variant: Variant, budget: usize, mask: bool) -> Self {
        let variant = if budget == 0 { Variant::NoHistory } else { variant };
        RunSpec { variant, budget, mask }
    }

    pub fn tag(&self) -> String {
        let masked = if self.mask { "-masked" } else { "" };
        match self.variant {
            Variant::NoHistory => format!("no_history{masked}"),
            v => format!("{}{masked}-b{}", v.as_str(), self.budget),
        }
    }

    fn retrieval_tag(&self) -> Option<String> {
        match self.variant {
            Variant::NoHistory => None,
            Variant::SelfHistoryOnly => Some(format!("recent-b{}", self.budget)),
            _ => Some(format!("similarity-b{}", self.budget)),
        }
    }

    fn needs_vectors(&self) -> bool {
        self.variant == Variant::Full
    }
}

/// Fixed file locations below the output directory.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn split_dir(&self) -> PathBuf {
        self.root.join("split")
    }
    pub fn vectors(&self) -> PathBuf {
        self.root.join("vectors.tpvs")
    }
    pub fn retrieval(&self, rtag: &str) -> PathBuf {
        self.root.join("retrieval").join(format!("{rtag}.jsonl"))
    }
    pub fn corpus_dir(&self, tag: &str) -> PathBuf {
        self.root.join("corpus").join(tag)
    }
    pub fn predictions(&self, tag: &str) -> PathBuf {
        self.root.join("predictions").join(format!("{tag}.jsonl"))
    }
    pub fn checkpoint(&self, tag: &str) -> PathBuf {
        self.root.join("predictions").join(format!("{tag}.checkpoint.jsonl"))
    }
    pub fn report_dir(&self, tag: &str) -> PathBuf {
        self.root.join("reports").join(tag)
    }
    fn provenance(&self, stage: &str) -> PathBuf {
        self.root.join(".stages").join(format!("{stage}.json"))
    }
    fn split_files(&self) -> Vec<PathBuf> {
        let dir = self.split_dir();
        SPLIT_FILES.iter().map(|f| dir.join(f)).chain([dir.join(SIDECAR)]).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Provenance {
    stage: String,
    key: String,
    config_fingerprint: String,
    tool_version: String,
    /// Path relative to the output directory → sha256.
    outputs: BTreeMap<String, String>,
}

/// Stage names that ran and that were served from cache.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub executed: Vec<String>,
    pub skipped: Vec<String>,
}

impl RunSummary {
    fn note(&mut self, stage: String, executed: bool) {
        if executed {
            self.executed.push(stage);
        } else {
            self.skipped.push(stage);
        }
    }
}

#[derive(Serialize)]
struct CorpusManifest<'a> {
    tag: String,
    variant: Variant,
    masked: bool,
    history_budget: usize,
    id_range: u32,
    id_range_convention: &'static str,
    config_fingerprint: &'a str,
    records: BTreeMap<&'static str, usize>,
    skipped: BTreeMap<&'static str, Vec<SkippedRecord>>,
}

pub struct Pipeline {
    config: PipelineConfig,
    template: PromptTemplate,
    fingerprint: String,
    layout: Layout,
    pool: rayon::ThreadPool,
    force: bool,
}

fn require(path: &Path, command: &'static str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingArtifact { path: path.to_path_buf(), command })
    }
}

fn hash_all(paths: &[PathBuf]) -> Result<Vec<String>> {
    paths.iter().map(|p| hash_file(p)).collect()
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let template = config.template()?;
        let fingerprint = config.fingerprint()?;
        let pool = thread_pool(config.threads)?;
        let layout = Layout { root: config.output_dir.clone() };
        Ok(Pipeline { config, template, fingerprint, layout, pool, force: false })
    }

    /// Recompute every stage even when its cache entry is valid.
    pub fn force(mut self, force: bool) -> Self {
        self.force = force;
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn config_fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn runs(&self) -> Vec<RunSpec> {
        let mut seen = BTreeSet::new();
        self.config
            .budgets()
            .into_iter()
            .map(|b| RunSpec::new(self.base_variant(), b, self.config.prompting.mask))
            .filter(|r| seen.insert(r.tag()))
            .collect()
    }

    fn base_variant(&self) -> Variant {
        match self.config.prompting.variant {
            Variant::Full if self.config.retrieval.self_only => Variant::SelfHistoryOnly,
            v => v,
        }
    }

    fn retrieval_config(&self, run: &RunSpec) -> RetrievalConfig {
        RetrievalConfig {
            history_checkin_budget: run.budget,
            self_only: run.variant == Variant::SelfHistoryOnly,
            ..self.config.retrieval.clone()
        }
    }

    fn cached(&self, stage: &str, key: &str) -> bool {
        if self.force {
            return false;
        }
        let Ok(bytes) = fs::read(self.layout.provenance(stage)) else { return false };
        let Ok(prov) = serde_json::from_slice::<Provenance>(&bytes) else { return false };
        prov.key == key
            && prov.outputs.iter().all(|(rel, h)| hash_file(&self.layout.root.join(rel)).is_ok_and(|x| &x == h))
    }

    fn record(&self, stage: &str, key: &str, outputs: &[PathBuf]) -> Result<()> {
        let mut hashes = BTreeMap::new();
        for p in outputs {
            let rel = p.strip_prefix(&self.layout.root).unwrap_or(p).to_string_lossy().replace('\\', "/");
            hashes.insert(rel, hash_file(p)?);
        }
        let prov = Provenance {
            stage: stage.into(),
            key: key.into(),
            config_fingerprint: self.fingerprint.clone(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            outputs: hashes,
        };
        let path = self.layout.provenance(stage);
        fs::create_dir_all(path.parent().expect("stage dir")).at(&path)?;
        fs::write(&path, serde_json::to_vec_pretty(&prov).expect("provenance serialises")).at(&path)
    }

    fn split_hash(&self) -> Result<Vec<String>> {
        let files = self.layout.split_files();
        require(&files[3], "preprocess")?;
        hash_all(&files)
    }

    pub fn preprocess(&self) -> Result<bool> {
        let ingest = &self.config.ingest;
        if ingest.input.as_os_str().is_empty() {
            return Err(Error::Config("ingest.input is not set".into()));
        }
        let schema = ingest.column_schema();
        let seg = ingest.segmentation.to_config()?;
        let key = hash_json(&json!({
            "stage": "preprocess",
            "input": hash_file(&ingest.input)?,
            "schema": schema,
            "segmentation": seg,
        }));
        if self.cached("preprocess", &key) {
            return Ok(false);
        }
        let parsed = parse_checkins_path(&ingest.input, &schema)?;
        let parsed_rows = parsed.checkins.len();
        let split = preprocess(parsed.checkins, &seg)?;
        let dir = self.layout.split_dir();
        write_split(&dir, &split)?;
        let report_path = dir.join("ingest_report.json");
        let report = json!({
            "rows_parsed": parsed_rows,
            "rows_rejected": parsed.rejected.len(),
            "first_rejections": parsed.rejected.iter().take(100).collect::<Vec<_>>(),
            "stats": split.stats,
        });
        fs::write(&report_path, serde_json::to_vec_pretty(&report).expect("report serialises")).at(&report_path)?;
        log::info!(
            "preprocess: {} users, {} POIs, {} train / {} validation / {} test trajectories",
            split.stats.users,
            split.stats.pois,
            split.train.len(),
            split.validation.len(),
            split.test.len()
        );
        let mut outputs = self.layout.split_files();
        outputs.push(report_path);
        self.record("preprocess", &key, &outputs)?;
        Ok(true)
    }

    pub fn embed(&self) -> Result<bool> {
        let section = &self.config.embedding;
        let endpoint = section.endpoint.as_ref().map(|e| json!({"url": e.url, "model": e.model}));
        let key = hash_json(&json!({
            "stage": "embed",
            "split": self.split_hash()?,
            "template": self.template,
            "backend": section.backend,
            "dim": section.dim,
            "endpoint": endpoint,
            "seed": self.config.seed,
        }));
        if self.cached("embed", &key) {
            return Ok(false);
        }
        let split = read_split(&self.layout.split_dir())?;
        let mut trajectories: Vec<&Trajectory> = split.all_trajectories().collect();
        trajectories.sort_by_key(|t| t.trajectory_id);
        let texts: Vec<(String, String)> = self.pool.install(|| {
            trajectories
                .par_iter()
                .map(|t| Ok((build_key_prompt(t, &self.template)?, build_query_prompt(t, &self.template)?)))
                .collect::<Result<_>>()
        })?;
        let vectors: Vec<(Vec<f32>, Vec<f32>)> = match section.backend {
            EmbeddingBackendKind::Hashing => {
                let embedder = HashingEmbedder::new(section.dim, self.config.seed);
                self.pool.install(|| {
                    texts
                        .par_iter()
                        .map(|(k, q)| Ok((embedder.embed_one(k)?, embedder.embed_one(q)?)))
                        .collect::<Result<_>>()
                })?
            }
            EmbeddingBackendKind::Endpoint => {
                let ep = section.endpoint.clone().expect("validated");
                let embedder = RemoteEmbedder::new(ep, section.dim)?;
                let flat: Vec<&str> = texts.iter().flat_map(|(k, q)| [k.as_str(), q.as_str()]).collect();
                let mut out = embedder.embed(&flat)?.into_iter();
                let mut pairs = Vec::with_capacity(texts.len());
                while let (Some(k), Some(q)) = (out.next(), out.next()) {
                    pairs.push((k, q));
                }
                pairs
            }
        };
        let mut store = VectorStore::new(section.dim);
        for (t, (k, q)) in trajectories.iter().zip(vectors) {
            store.insert(EmbeddingVector::new(k, t.trajectory_id, Role::Key)?)?;
            store.insert(EmbeddingVector::new(q, t.trajectory_id, Role::Query)?)?;
        }
        let path = self.layout.vectors();
        fs::create_dir_all(&self.layout.root).at(&self.layout.root)?;
        store.write(&path)?;
        log::info!("embed: {} vectors of dim {}", store.len(), store.dim());
        self.record("embed", &key, &[path])?;
        Ok(true)
    }

    pub fn retrieve(&self, run: &RunSpec) -> Result<bool> {
        let Some(rtag) = run.retrieval_tag() else { return Ok(false) };
        let stage = format!("retrieve-{rtag}");
        let rcfg = self.retrieval_config(run);
        let split_hash = self.split_hash()?;
        let vectors_hash = if run.needs_vectors() {
            let p = self.layout.vectors();
            require(&p, "embed")?;
            Some(hash_file(&p)?)
        } else {
            None
        };
        let key = hash_json(&json!({
            "stage": "retrieve", "split": split_hash, "vectors": vectors_hash, "retrieval": rcfg,
        }));
        if self.cached(&stage, &key) {
            return Ok(false);
        }
        let split = read_split(&self.layout.split_dir())?;
        let store = if run.needs_vectors() { Some(VectorStore::read(&self.layout.vectors())?) } else { None };
        let source = store.as_ref().map(|s| s as &(dyn VectorSource + Sync));
        let out = build_retrievals(&split, source, &rcfg, self.config.threads)?;
        let path = self.layout.retrieval(&rtag);
        fs::create_dir_all(path.parent().expect("retrieval dir")).at(&path)?;
        write_retrievals(&path, &out.results)?;
        log::info!("retrieve {rtag}: {} keys, {} errors", out.results.len(), out.errors.len());
        self.record(&stage, &key, &[path])?;
        Ok(true)
    }

    pub fn emit(&self, run: &RunSpec) -> Result<bool> {
        let tag = run.tag();
        let stage = format!("emit-{tag}");
        let split_hash = self.split_hash()?;
        let retrieval_path = run.retrieval_tag().map(|r| self.layout.retrieval(&r));
        let retrieval_hash = match &retrieval_path {
            Some(p) => {
                require(p, "retrieve")?;
                Some(hash_file(p)?)
            }
            None => None,
        };
        let key = hash_json(&json!({
            "stage": "emit",
            "split": split_hash,
            "retrieval": retrieval_hash,
            "template": self.template,
            "budget": self.config.corpus.budget,
            "plain": self.config.corpus.plain,
            "variant": run.variant,
            "mask": run.mask,
            "seed": self.config.seed,
            "config": self.fingerprint,
        }));
        if self.cached(&stage, &key) {
            return Ok(false);
        }
        let split = read_split(&self.layout.split_dir())?;
        let retrievals = match &retrieval_path {
            Some(p) => read_retrievals(p)?,
            None => BTreeMap::new(),
        };
        let lookup: HashMap<u64, &Trajectory> = split.all_trajectories().map(|t| (t.trajectory_id, t)).collect();
        let counter = self.config.corpus.budget.heuristic();
        let spec = CorpusSpec {
            template: &self.template,
            budget: &self.config.corpus.budget,
            counter: &counter,
            id_range: split.id_range(),
            variant: run.variant,
            mask_seed: run.mask.then_some(self.config.seed),
        };
        let dir = self.layout.corpus_dir(&tag);
        fs::create_dir_all(&dir).at(&dir)?;
        if self.config.corpus.plain {
            fs::create_dir_all(dir.join("plain")).at(&dir)?;
        }
        let mut manifest = CorpusManifest {
            tag: tag.clone(),
            variant: run.variant,
            masked: run.mask,
            history_budget: run.budget,
            id_range: split.id_range(),
            id_range_convention: ID_RANGE_CONVENTION,
            config_fingerprint: &self.fingerprint,
            records: BTreeMap::new(),
            skipped: BTreeMap::new(),
        };
        let mut outputs = Vec::new();
        for (name, part) in CORPUS_FILES.iter().zip([&split.train, &split.validation, &split.test]) {
            let built = self.pool.install(|| assemble_split(part, &retrievals, &lookup, &spec))?;
            let path = dir.join(name);
            emit_jsonl(&built.records, &path, true)?;
            outputs.push(path);
            if self.config.corpus.plain {
                let plain = dir.join("plain").join(name);
                emit_jsonl(&built.records, &plain, false)?;
                outputs.push(plain);
            }
            if !built.skipped.is_empty() {
                log::warn!("emit {tag}/{name}: {} record(s) skipped as over budget", built.skipped.len());
            }
            manifest.records.insert(name, built.records.len());
            manifest.skipped.insert(name, built.skipped);
        }
        let mpath = dir.join("manifest.json");
        fs::write(&mpath, serde_json::to_vec_pretty(&manifest).expect("manifest serialises")).at(&mpath)?;
        outputs.push(mpath);
        log::info!("emit {tag}: {:?}", manifest.records);
        self.record(&stage, &key, &outputs)?;
        Ok(true)
    }

    fn test_records(&self, tag: &str) -> Result<Vec<PromptRecord>> {
        let path = self.layout.corpus_dir(tag).join("test.jsonl");
        require(&path, "emit")?;
        let mut records = load_jsonl(&path, true)?.records;
        if let Some(n) = self.config.inference.limit {
            records.truncate(n);
        }
        Ok(records)
    }

    fn completer(&self) -> Result<Box<dyn Completer>> {
        let inf = &self.config.inference;
        Ok(match inf.backend {
            InferenceBackendKind::Frequency => Box::new(FrequencyPredictor),
            InferenceBackendKind::Endpoint => {
                let ep = inf.endpoint.clone().expect("validated");
                Box::new(CompletionClient::new(ep, inf.api, inf.max_new_tokens)?)
            }
        })
    }

    pub fn predict(&self, run: &RunSpec) -> Result<bool> {
        let tag = run.tag();
        let stage = format!("predict-{tag}");
        let corpus = self.layout.corpus_dir(&tag).join("test.jsonl");
        require(&corpus, "emit")?;
        let inf = &self.config.inference;
        let key = hash_json(&json!({
            "stage": "predict",
            "corpus": hash_file(&corpus)?,
            "backend": inf.backend,
            "api": inf.api,
            "max_new_tokens": inf.max_new_tokens,
            "endpoint": inf.endpoint.as_ref().map(|e| json!({"url": e.url, "model": e.model})),
            "limit": inf.limit,
        }));
        if self.cached(&stage, &key) {
            return Ok(false);
        }
        let records = self.test_records(&tag)?;
        let id_range = read_sidecar(&self.layout.split_dir())?.id_range;
        let completer = self.completer()?;
        let concurrency = inf.endpoint.as_ref().map_or(1, |e| e.concurrency);
        let checkpoint = self.layout.checkpoint(&tag);
        fs::create_dir_all(checkpoint.parent().expect("predictions dir")).at(&checkpoint)?;
        let preds = run_predictions(&records, completer.as_ref(), id_range, concurrency, Some(&checkpoint))?;
        let path = self.layout.predictions(&tag);
        write_jsonl(&path, preds.iter())?;
        let failed = preds.iter().filter(|p| p.raw_output.is_empty()).count();
        log::info!("predict {tag}: {} predictions, parse rate {:.3}, {failed} failed", preds.len(), parse_rate(&preds));
        if failed == 0 {
            let _ = fs::remove_file(&checkpoint);
            self.record(&stage, &key, &[path])?;
        } else {
            log::warn!("predict {tag}: {failed} request(s) failed; rerun to retry them");
        }
        Ok(true)
    }

    pub fn evaluate(&self, run: &RunSpec) -> Result<bool> {
        let tag = run.tag();
        let stage = format!("evaluate-{tag}");
        let pred_path = self.layout.predictions(&tag);
        require(&pred_path, "predict")?;
        let corpus = self.layout.corpus_dir(&tag).join("test.jsonl");
        require(&corpus, "emit")?;
        let key = hash_json(&json!({
            "stage": "evaluate",
            "predictions": hash_file(&pred_path)?,
            "corpus": hash_file(&corpus)?,
            "split": self.split_hash()?,
            "evaluation": self.config.evaluation,
            "limit": self.config.inference.limit,
            "config": self.fingerprint,
        }));
        if self.cached(&stage, &key) {
            return Ok(false);
        }
        let records = self.test_records(&tag)?;
        let predictions = read_jsonl(&pred_path)?;
        let split = read_split(&self.layout.split_dir())?;
        let report = build_report(&records, &predictions, &split.train, &split.test, &self.config.evaluation.partitions, &self.fingerprint)?;
        let dir = self.layout.report_dir(&tag);
        write_report(&dir, &report)?;
        log::info!("evaluate {tag}: acc@1 {:.4} over {} records", report.overall_acc1, report.n_test);
        self.record(&stage, &key, &[dir.join(crate::report::REPORT_JSON), dir.join(crate::report::REPORT_TXT)])?;
        Ok(true)
    }

    /// Every stage for every run, in order.
    pub fn run_all(&self) -> Result<RunSummary> {
        let mut summary = RunSummary::default();
        summary.note("preprocess".into(), self.preprocess()?);
        let runs = self.runs();
        if runs.iter().any(RunSpec::needs_vectors) {
            summary.note("embed".into(), self.embed()?);
        }
        for run in &runs {
            if let Some(r) = run.retrieval_tag() {
                summary.note(format!("retrieve-{r}"), self.retrieve(run)?);
            }
            let tag = run.tag();
            summary.note(format!("emit-{tag}"), self.emit(run)?);
            summary.note(format!("predict-{tag}"), self.predict(run)?);
            summary.note(format!("evaluate-{tag}"), self.evaluate(run)?);
        }
        self.write_summary(&runs)?;
        Ok(summary)
    }

    /// `reports/summary.txt`: one row per run.
    pub fn write_summary(&self, runs: &[RunSpec]) -> Result<()> {
        let mut s = String::new();
        let _ = writeln!(s, "{:<32} {:>8} {:>8} {:>10}", "run", "n_test", "acc@1", "ans-in-q");
        for run in runs {
            let report = read_report(&self.layout.report_dir(&run.tag()))?;
            let _ = writeln!(
                s,
                "{:<32} {:>8} {:>8.4} {:>10.4}",
                run.tag(),
                report.n_test,
                report.overall_acc1,
                report.answer_in_question_rate
            );
        }
        let path = self.layout.root.join("reports").join("summary.txt");
        fs::write(&path, s).at(&path)
    }
}

/// Fingerprint of the evaluated (trajectory id, gold POI) pairs.
pub fn test_set_fingerprint(records: &[PromptRecord]) -> String {
    let pairs: Vec<(u64, u32)> = records.iter().map(|r| (r.meta.trajectory_id, r.meta.target_poi_id)).collect();
    hash_json(&pairs)
}

/// Report over the records that were actually predicted.
pub fn build_report(
    records: &[PromptRecord],
    predictions: &[trajprompt_core::PredictionRecord],
    train: &[Trajectory],
    test: &[Trajectory],
    choices: &[PartitionChoice],
    config_fingerprint: &str,
) -> Result<EvalReport> {
    let gold: BTreeMap<u64, u32> = records.iter().map(|r| (r.meta.trajectory_id, r.meta.target_poi_id)).collect();
    let evaluated: Vec<&Trajectory> = test.iter().filter(|t| gold.contains_key(&t.trajectory_id)).collect();
    if evaluated.len() != gold.len() {
        return Err(Error::Consistency("test corpus references trajectories missing from the test split".into()));
    }
    let mut partitions: Vec<Partition> = Vec::new();
    let mut choices = choices.to_vec();
    choices.sort();
    choices.dedup();
    for c in choices {
        partitions.push(match c {
            PartitionChoice::UserActivity => partition_users_by_activity(train, &evaluated)?,
            PartitionChoice::TrajectoryLength => partition_trajectories_by_length(&evaluated),
        });
    }
    Ok(EvalReport::build(
        predictions,
        &gold,
        &partitions,
        answer_in_question_rate(records),
        config_fingerprint.to_string(),
        test_set_fingerprint(records),
    )?)
}
