//! Key-query similarity retrieval of historical trajectories.
//!
//! Every trajectory acts as a key (its prompt without the last check-in) and
//! as a query (its full prompt). For a key, the eligible queries are the
//! trajectories that ended strictly before the key started. They are ranked by
//! cosine similarity and admitted greedily under a check-in budget.
//!
//! [`RetrievalIndex`] normalises every query vector once and keeps the pool
//! sorted by end time, so the eligible set of a key is a prefix found by binary
//! search and each similarity is a single dot product.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::embedding::Role;
use crate::ingest::{DatasetSplit, Trajectory};
use crate::time::Timestamp;

#[derive(Clone, Debug, PartialEq)]
pub enum RetrievalError {
    DimensionMismatch { expected: usize, found: usize },
    ZeroVector { trajectory_id: u64, role: Role },
    MissingVector { trajectory_id: u64, role: Role },
    InvalidConfig(&'static str),
}

impl fmt::Display for RetrievalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RetrievalError::DimensionMismatch { expected, found } => {
                write!(f, "vector dimension mismatch: expected {expected}, found {found}")
            }
            RetrievalError::ZeroVector { trajectory_id, role } => {
                write!(f, "zero {role:?} vector for trajectory {trajectory_id}")
            }
            RetrievalError::MissingVector { trajectory_id, role } => {
                write!(f, "no {role:?} vector for trajectory {trajectory_id}")
            }
            RetrievalError::InvalidConfig(msg) => write!(f, "invalid retrieval config: {msg}"),
        }
    }
}

impl core::error::Error for RetrievalError {}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateScope {
    #[default]
    AllUsers,
    SameUser,
}

/// Which trajectories may serve as history at all.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidatePool {
    /// Any trajectory of any split that ended before the key started.
    #[default]
    AllSplits,
    TrainOnly,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrievalConfig {
    pub history_checkin_budget: usize,
    pub top_k_cap: Option<usize>,
    /// Own-user history ordered by recency, no similarity ranking.
    pub self_only: bool,
    pub candidate_scope: CandidateScope,
    pub candidate_pool: CandidatePool,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            history_checkin_budget: 300,
            top_k_cap: None,
            self_only: false,
            candidate_scope: CandidateScope::AllUsers,
            candidate_pool: CandidatePool::AllSplits,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.top_k_cap == Some(0) {
            return Err(RetrievalError::InvalidConfig("top_k_cap must be at least 1"));
        }
        Ok(())
    }

    fn same_user_only(&self) -> bool {
        self.self_only || self.candidate_scope == CandidateScope::SameUser
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selected {
    pub trajectory_id: u64,
    /// Cosine similarity to the key; absent for recency-ordered selection.
    pub similarity: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub key_trajectory_id: u64,
    pub selected: Vec<Selected>,
    pub total_checkins_selected: usize,
    /// Set when a single selected trajectory alone exceeds the budget: render
    /// only its most recent `n` check-ins.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncate_to: Option<usize>,
}

impl RetrievalResult {
    pub fn empty(key_trajectory_id: u64) -> Self {
        RetrievalResult { key_trajectory_id, selected: Vec::new(), total_checkins_selected: 0, truncate_to: None }
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.selected.iter().map(|s| s.trajectory_id)
    }
}

/// Trajectories that ended strictly before `key` started, optionally limited
/// to the key's own user. The key itself is never eligible.
pub fn eligible_queries<'a>(key: &Trajectory, all: &'a [Trajectory], config: &RetrievalConfig) -> Vec<&'a Trajectory> {
    all.iter()
        .filter(|q| q.trajectory_id != key.trajectory_id)
        .filter(|q| q.end_time < key.start_time)
        .filter(|q| !config.same_user_only() || q.user_id == key.user_id)
        .collect()
}

/// `a·b / (‖a‖‖b‖)`, accumulated in f64.
pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64, RetrievalError> {
    if a.len() != b.len() {
        return Err(RetrievalError::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    let (mut dot, mut na, mut nb) = (0f64, 0f64, 0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(RetrievalError::ZeroVector { trajectory_id: u64::MAX, role: Role::Key });
    }
    Ok(dot / (libm::sqrt(na) * libm::sqrt(nb)))
}

/// A scored, eligible history candidate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub trajectory_id: u64,
    pub end_time: Timestamp,
    pub len: usize,
    pub similarity: f64,
}

/// Similarity descending, then earlier end time, then lower id.
fn by_similarity(a: &Candidate, b: &Candidate) -> Ordering {
    b.similarity
        .total_cmp(&a.similarity)
        .then(a.end_time.cmp(&b.end_time))
        .then(a.trajectory_id.cmp(&b.trajectory_id))
}

/// Most recent first, then lower id.
fn by_recency(a: &Candidate, b: &Candidate) -> Ordering {
    b.end_time.cmp(&a.end_time).then(a.trajectory_id.cmp(&b.trajectory_id))
}

/// Greedy admission over an already ranked list: accept while the next
/// candidate fits the remaining budget, stop at the first that does not.
fn admit(key_id: u64, ranked: &[Candidate], config: &RetrievalConfig, with_similarity: bool) -> RetrievalResult {
    let budget = config.history_checkin_budget;
    let cap = config.top_k_cap.unwrap_or(usize::MAX);
    let mut out = RetrievalResult::empty(key_id);
    if budget == 0 {
        return out;
    }
    for c in ranked {
        if out.selected.len() >= cap {
            break;
        }
        if out.total_checkins_selected + c.len > budget {
            if out.selected.is_empty() {
                out.truncate_to = Some(budget);
                out.total_checkins_selected = c.len;
                out.selected.push(Selected { trajectory_id: c.trajectory_id, similarity: with_similarity.then_some(c.similarity) });
            }
            break;
        }
        out.total_checkins_selected += c.len;
        out.selected.push(Selected { trajectory_id: c.trajectory_id, similarity: with_similarity.then_some(c.similarity) });
    }
    out
}

/// Ranks `candidates` by similarity and admits them under the budget.
pub fn select_history(key_trajectory_id: u64, mut candidates: Vec<Candidate>, config: &RetrievalConfig) -> RetrievalResult {
    candidates.sort_by(by_similarity);
    admit(key_trajectory_id, &candidates, config, true)
}

/// Own-user history, most recent first, under the same budget rule.
pub fn select_recent_history(key_trajectory_id: u64, mut candidates: Vec<Candidate>, config: &RetrievalConfig) -> RetrievalResult {
    candidates.sort_by(by_recency);
    admit(key_trajectory_id, &candidates, config, false)
}

/// Lookup of raw embedding rows by trajectory and role.
pub trait VectorSource {
    fn vector(&self, trajectory_id: u64, role: Role) -> Option<&[f32]>;
}

impl VectorSource for BTreeMap<(u64, Role), alloc::vec::Vec<f32>> {
    fn vector(&self, trajectory_id: u64, role: Role) -> Option<&[f32]> {
        self.get(&(trajectory_id, role)).map(Vec::as_slice)
    }
}

#[derive(Clone, Copy, Debug)]
struct PoolRow {
    trajectory_id: u64,
    user_id: u32,
    end_time: Timestamp,
    len: usize,
    /// Row in `units`, or `None` when the query vector was unusable.
    unit: Option<usize>,
}

fn normalise(v: &[f32]) -> Option<Vec<f64>> {
    let norm = libm::sqrt(v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>());
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    Some(v.iter().map(|&x| f64::from(x) / norm).collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut lanes = [0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        lanes[0] += x[0] * y[0];
        lanes[1] += x[1] * y[1];
        lanes[2] += x[2] * y[2];
        lanes[3] += x[3] * y[3];
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail
}

/// Pre-normalised candidate pool shared read-only across keys.
pub struct RetrievalIndex<'a> {
    config: RetrievalConfig,
    rows: Vec<PoolRow>,
    units: Vec<f64>,
    dim: usize,
    vectors: Option<&'a (dyn VectorSource + Sync)>,
    /// Pool trajectories whose query vector could not be used.
    pub pool_errors: Vec<(u64, RetrievalError)>,
}

impl<'a> RetrievalIndex<'a> {
    /// `vectors` may be `None` only for recency (`self_only`) retrieval.
    pub fn new<'t>(
        pool: impl IntoIterator<Item = &'t Trajectory>,
        vectors: Option<&'a (dyn VectorSource + Sync)>,
        config: &RetrievalConfig,
    ) -> Result<Self, RetrievalError> {
        config.validate()?;
        if vectors.is_none() && !config.self_only {
            return Err(RetrievalError::InvalidConfig("similarity retrieval requires embedding vectors"));
        }
        let mut rows = Vec::new();
        let mut units = Vec::new();
        let mut dim = 0usize;
        let mut pool_errors = Vec::new();
        for t in pool {
            let mut row = PoolRow {
                trajectory_id: t.trajectory_id,
                user_id: t.user_id,
                end_time: t.end_time,
                len: t.len(),
                unit: None,
            };
            if let (false, Some(src)) = (config.self_only, vectors) {
                match src.vector(t.trajectory_id, Role::Query) {
                    None => pool_errors.push((t.trajectory_id, RetrievalError::MissingVector { trajectory_id: t.trajectory_id, role: Role::Query })),
                    Some(v) if dim != 0 && v.len() != dim => {
                        pool_errors.push((t.trajectory_id, RetrievalError::DimensionMismatch { expected: dim, found: v.len() }))
                    }
                    Some(v) => match normalise(v) {
                        None => pool_errors.push((t.trajectory_id, RetrievalError::ZeroVector { trajectory_id: t.trajectory_id, role: Role::Query })),
                        Some(u) => {
                            dim = v.len();
                            row.unit = Some(units.len() / dim);
                            units.extend(u);
                        }
                    },
                }
                if row.unit.is_none() {
                    continue;
                }
            }
            rows.push(row);
        }
        rows.sort_by_key(|r| (r.end_time, r.trajectory_id));
        Ok(RetrievalIndex { config: config.clone(), rows, units, dim, vectors, pool_errors })
    }

    pub fn config(&self) -> &RetrievalConfig {
        &self.config
    }

    fn eligible_rows(&self, key: &Trajectory) -> impl Iterator<Item = &PoolRow> + '_ {
        let n = self.rows.partition_point(|r| r.end_time < key.start_time);
        let same_user = self.config.same_user_only();
        let (uid, kid) = (key.user_id, key.trajectory_id);
        self.rows[..n].iter().filter(move |r| r.trajectory_id != kid && (!same_user || r.user_id == uid))
    }

    pub fn retrieve(&self, key: &Trajectory) -> Result<RetrievalResult, RetrievalError> {
        if self.config.self_only {
            let candidates = self
                .eligible_rows(key)
                .map(|r| Candidate { trajectory_id: r.trajectory_id, end_time: r.end_time, len: r.len, similarity: 0.0 })
                .collect();
            return Ok(select_recent_history(key.trajectory_id, candidates, &self.config));
        }

        let src = self.vectors.ok_or(RetrievalError::InvalidConfig("no vectors"))?;
        let raw = src
            .vector(key.trajectory_id, Role::Key)
            .ok_or(RetrievalError::MissingVector { trajectory_id: key.trajectory_id, role: Role::Key })?;
        if self.dim != 0 && raw.len() != self.dim {
            return Err(RetrievalError::DimensionMismatch { expected: self.dim, found: raw.len() });
        }
        let unit = normalise(raw).ok_or(RetrievalError::ZeroVector { trajectory_id: key.trajectory_id, role: Role::Key })?;

        let mut candidates: Vec<Candidate> = self
            .eligible_rows(key)
            .filter_map(|r| {
                let row = r.unit?;
                let q = &self.units[row * self.dim..(row + 1) * self.dim];
                Some(Candidate { trajectory_id: r.trajectory_id, end_time: r.end_time, len: r.len, similarity: dot(&unit, q) })
            })
            .collect();

        // Only the head of the ranking can be admitted: at most
        // budget / shortest + 1 candidates (or top_k_cap) are ever inspected.
        let budget = self.config.history_checkin_budget;
        if budget == 0 || candidates.is_empty() {
            return Ok(RetrievalResult::empty(key.trajectory_id));
        }
        let shortest = candidates.iter().map(|c| c.len).min().unwrap_or(1).max(1);
        let mut head = budget / shortest + 1;
        if let Some(cap) = self.config.top_k_cap {
            head = head.min(cap);
        }
        if head < candidates.len() {
            candidates.select_nth_unstable_by(head - 1, by_similarity);
            candidates.truncate(head);
        }
        Ok(select_history(key.trajectory_id, candidates, &self.config))
    }
}

/// Retrieval results for every trajectory of a split, keyed by trajectory id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RetrievalOutput {
    pub results: BTreeMap<u64, RetrievalResult>,
    /// Per-trajectory failures; those keys fall back to an empty history.
    pub errors: Vec<(u64, RetrievalError)>,
}

/// Builds the index for `split` according to `config.candidate_pool`.
pub fn index_for_split<'a>(
    split: &DatasetSplit,
    vectors: Option<&'a (dyn VectorSource + Sync)>,
    config: &RetrievalConfig,
) -> Result<RetrievalIndex<'a>, RetrievalError> {
    match config.candidate_pool {
        CandidatePool::AllSplits => RetrievalIndex::new(split.all_trajectories(), vectors, config),
        CandidatePool::TrainOnly => RetrievalIndex::new(split.train.iter(), vectors, config),
    }
}

/// Sequential retrieval over every trajectory of the split.
pub fn build_all_retrievals(
    split: &DatasetSplit,
    vectors: Option<&(dyn VectorSource + Sync)>,
    config: &RetrievalConfig,
) -> Result<RetrievalOutput, RetrievalError> {
    let index = index_for_split(split, vectors, config)?;
    let mut out = RetrievalOutput { errors: index.pool_errors.clone(), ..Default::default() };
    for key in split.all_trajectories() {
        let result = index.retrieve(key).unwrap_or_else(|e| {
            out.errors.push((key.trajectory_id, e));
            RetrievalResult::empty(key.trajectory_id)
        });
        out.results.insert(key.trajectory_id, result);
    }
    out.errors.sort_by_key(|(id, _)| *id);
    Ok(out)
}
