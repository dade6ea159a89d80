//! Declarative pipeline configuration (TOML).
//!
//! Unknown keys are rejected and relative paths resolve against the config
//! file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use trajprompt_core::{PromptTemplate, RetrievalConfig, SegmentationConfig, TokenBudget, Variant};

use crate::csv_source::ColumnSchema;
use crate::endpoint::{CompletionApi, EndpointConfig};
use crate::error::{Error, IoContext, Result};
use crate::fingerprint::{hash_file, hash_json};
use crate::template_io::load_template;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaPreset {
    /// Header-less tab-separated Foursquare NYC/TKY dumps.
    FoursquareTsmc,
    #[default]
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentationSection {
    pub delta_t_hours: f64,
    pub min_poi_visits: usize,
    pub min_user_records: usize,
    pub split_ratios: [f64; 3],
}

impl Default for SegmentationSection {
    fn default() -> Self {
        let d = SegmentationConfig::default();
        SegmentationSection {
            delta_t_hours: d.delta_t_secs as f64 / 3600.0,
            min_poi_visits: d.min_poi_visits,
            min_user_records: d.min_user_records,
            split_ratios: d.split_ratios,
        }
    }
}

impl SegmentationSection {
    pub fn to_config(&self) -> Result<SegmentationConfig> {
        if !(self.delta_t_hours.is_finite() && self.delta_t_hours > 0.0) {
            return Err(Error::Config("ingest.segmentation.delta_t_hours must be positive".into()));
        }
        let cfg = SegmentationConfig {
            delta_t_secs: (self.delta_t_hours * 3600.0).round() as i64,
            min_poi_visits: self.min_poi_visits,
            min_user_records: self.min_user_records,
            split_ratios: self.split_ratios,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestSection {
    pub input: PathBuf,
    pub preset: SchemaPreset,
    pub schema: ColumnSchema,
    pub segmentation: SegmentationSection,
}

impl IngestSection {
    pub fn column_schema(&self) -> ColumnSchema {
        match self.preset {
            SchemaPreset::FoursquareTsmc => ColumnSchema::foursquare_tsmc(),
            SchemaPreset::Custom => self.schema.clone(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PromptingSection {
    /// TOML template; `None` uses the built-in wording.
    pub template: Option<PathBuf>,
    pub variant: Variant,
    pub mask: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingBackendKind {
    #[default]
    Hashing,
    Endpoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingSection {
    pub backend: EmbeddingBackendKind,
    pub dim: usize,
    pub endpoint: Option<EndpointConfig>,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        EmbeddingSection {
            backend: EmbeddingBackendKind::Hashing,
            dim: trajprompt_core::HashingEmbedder::DEFAULT_DIM,
            endpoint: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSection {
    pub budget: TokenBudget,
    /// Emit question/answer only, without metadata, in an extra `plain/` copy.
    pub plain: bool,
    /// History check-in budgets to sweep; empty uses `retrieval.history_checkin_budget`.
    pub budget_sweep: Vec<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceBackendKind {
    /// Offline baseline predicting the most-mentioned POI id.
    #[default]
    Frequency,
    Endpoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceSection {
    pub backend: InferenceBackendKind,
    pub api: CompletionApi,
    pub max_new_tokens: u32,
    pub endpoint: Option<EndpointConfig>,
    /// Evaluate only the first N test records (ascending trajectory id).
    pub limit: Option<usize>,
}

impl Default for InferenceSection {
    fn default() -> Self {
        InferenceSection {
            backend: InferenceBackendKind::Frequency,
            api: CompletionApi::Completions,
            max_new_tokens: 48,
            endpoint: None,
            limit: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionChoice {
    UserActivity,
    TrajectoryLength,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    pub partitions: Vec<PartitionChoice>,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection { partitions: vec![PartitionChoice::UserActivity, PartitionChoice::TrajectoryLength] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Worker threads; 0 means one per CPU. Never affects outputs.
    pub threads: usize,
    pub output_dir: PathBuf,
    pub ingest: IngestSection,
    pub prompting: PromptingSection,
    pub embedding: EmbeddingSection,
    pub retrieval: RetrievalConfig,
    pub corpus: CorpusSection,
    pub inference: InferenceSection,
    pub evaluation: EvaluationSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            threads: 0,
            output_dir: PathBuf::from("out"),
            ingest: IngestSection::default(),
            prompting: PromptingSection::default(),
            embedding: EmbeddingSection::default(),
            retrieval: RetrievalConfig::default(),
            corpus: CorpusSection::default(),
            inference: InferenceSection::default(),
            evaluation: EvaluationSection::default(),
        }
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() || p.as_os_str().is_empty() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.ingest.input = resolve(base_dir, &cfg.ingest.input);
        cfg.output_dir = resolve(base_dir, &cfg.output_dir);
        cfg.prompting.template = cfg.prompting.template.map(|t| resolve(base_dir, &t));
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).at(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.ingest.segmentation.to_config()?;
        self.retrieval.validate()?;
        self.corpus.budget.validate()?;
        if self.prompting.variant == Variant::MaskedContext {
            return Err(Error::Config("prompting.variant: use `mask = true` to mask category names".into()));
        }
        if self.ingest.preset != SchemaPreset::Custom && self.ingest.schema != ColumnSchema::default() {
            return Err(Error::Config("ingest: set either `preset` or `schema`, not both".into()));
        }
        if self.embedding.dim == 0 {
            return Err(Error::Config("embedding.dim must be positive".into()));
        }
        if self.embedding.backend == EmbeddingBackendKind::Endpoint && self.embedding.endpoint.is_none() {
            return Err(Error::Config("embedding.backend = \"endpoint\" needs an [embedding.endpoint] table".into()));
        }
        if self.inference.backend == InferenceBackendKind::Endpoint && self.inference.endpoint.is_none() {
            return Err(Error::Config("inference.backend = \"endpoint\" needs an [inference.endpoint] table".into()));
        }
        Ok(())
    }

    pub fn template(&self) -> Result<PromptTemplate> {
        match &self.prompting.template {
            Some(p) => load_template(p),
            None => Ok(PromptTemplate::default()),
        }
    }

    /// History budgets to run, in the given order.
    pub fn budgets(&self) -> Vec<usize> {
        if self.corpus.budget_sweep.is_empty() {
            vec![self.retrieval.history_checkin_budget]
        } else {
            self.corpus.budget_sweep.clone()
        }
    }

    /// Hash of everything that can change an output. Execution knobs (thread
    /// counts, output location, endpoint timeouts, retry and concurrency
    /// settings, secrets) are excluded; input and template files contribute
    /// their contents rather than their paths.
    pub fn fingerprint(&self) -> Result<String> {
        let mut v = serde_json::to_value(self).expect("config serialises");
        let obj = v.as_object_mut().expect("config is a table");
        obj.remove("threads");
        obj.remove("output_dir");
        let input_hash = if self.ingest.input.as_os_str().is_empty() {
            Value::Null
        } else {
            match hash_file(&self.ingest.input) {
                Ok(h) => Value::String(h),
                Err(_) => Value::String(format!("missing:{}", self.ingest.input.display())),
            }
        };
        obj["ingest"]["input"] = input_hash;
        obj["prompting"]["template"] = serde_json::to_value(self.template()?).expect("template serialises");
        for section in ["embedding", "inference"] {
            if let Some(ep) = obj[section].get_mut("endpoint").and_then(Value::as_object_mut) {
                ep.retain(|k, _| k == "url" || k == "model");
            }
        }
        obj.insert("format_version".into(), Value::from(env!("CARGO_PKG_VERSION")));
        Ok(hash_json(&v))
    }
}
