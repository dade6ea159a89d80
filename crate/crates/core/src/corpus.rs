//! Prompt-record assembly under a context-length token budget.

use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::ingest::{CheckIn, Trajectory};
use crate::prompt::{build_answer, render_question, PromptError, PromptMeta, PromptRecord, PromptTemplate, Variant};
use crate::retrieval::RetrievalResult;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TokenBudget {
    pub max_tokens: usize,
    pub chars_per_token: f64,
    pub reserve_for_answer: usize,
}

impl Default for TokenBudget {
    fn default() -> Self {
        TokenBudget { max_tokens: 32_768, chars_per_token: 4.0, reserve_for_answer: 64 }
    }
}

impl TokenBudget {
    pub fn validate(&self) -> Result<(), AssembleError> {
        if self.max_tokens <= self.reserve_for_answer {
            return Err(AssembleError::InvalidBudget("max_tokens must exceed reserve_for_answer"));
        }
        if !(self.chars_per_token > 0.0 && self.chars_per_token.is_finite()) {
            return Err(AssembleError::InvalidBudget("chars_per_token must be positive"));
        }
        Ok(())
    }

    /// Tokens available to the question.
    pub fn question_limit(&self) -> usize {
        self.max_tokens - self.reserve_for_answer
    }

    pub fn heuristic(&self) -> CharRatio {
        CharRatio(self.chars_per_token)
    }
}

/// Token counting hook. Implementations must be monotone in text length for
/// the budget search in [`assemble_record`] to find the largest fitting prompt.
pub trait TokenCounter {
    fn count(&self, text: &str) -> usize;
}

/// `ceil(chars / chars_per_token)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CharRatio(pub f64);

impl TokenCounter for CharRatio {
    fn count(&self, text: &str) -> usize {
        estimate_tokens(text, self.0)
    }
}

pub fn estimate_tokens(text: &str, chars_per_token: f64) -> usize {
    let chars = text.chars().count();
    if chars == 0 {
        return 0;
    }
    libm::ceil(chars as f64 / chars_per_token) as usize
}

#[derive(Clone, Debug, PartialEq)]
pub enum AssembleError {
    InvalidBudget(&'static str),
    Prompt(PromptError),
    RetrievalMismatch { key: u64, retrieval: u64 },
    UnknownHistory(u64),
    /// A history trajectory does not end strictly before the key starts.
    Leakage { key: u64, history: u64 },
    /// Not even the most recent check-in plus the instruction fits.
    DoesNotFit { trajectory_id: u64, tokens: usize, limit: usize },
}

impl fmt::Display for AssembleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AssembleError::InvalidBudget(msg) => write!(f, "invalid token budget: {msg}"),
            AssembleError::Prompt(e) => write!(f, "{e}"),
            AssembleError::RetrievalMismatch { key, retrieval } => {
                write!(f, "retrieval result for trajectory {retrieval} passed for key {key}")
            }
            AssembleError::UnknownHistory(id) => write!(f, "history trajectory {id} not found"),
            AssembleError::Leakage { key, history } => {
                write!(f, "history trajectory {history} does not end before key {key} starts")
            }
            AssembleError::DoesNotFit { trajectory_id, tokens, limit } => write!(
                f,
                "trajectory {trajectory_id}: minimal question needs {tokens} tokens, limit is {limit}"
            ),
        }
    }
}

impl core::error::Error for AssembleError {}

impl From<PromptError> for AssembleError {
    fn from(e: PromptError) -> Self {
        AssembleError::Prompt(e)
    }
}

/// Inputs shared by every record of one corpus.
pub struct AssemblyContext<'a> {
    pub template: &'a PromptTemplate,
    pub budget: &'a TokenBudget,
    pub counter: &'a dyn TokenCounter,
    pub id_range: u32,
    pub variant: Variant,
}

/// Largest `n` in `0..=hi` with `fits(n)`, assuming `fits` is monotone
/// decreasing in `n`.
fn largest_fitting(hi: usize, mut fits: impl FnMut(usize) -> bool) -> Option<usize> {
    if fits(hi) {
        return Some(hi);
    }
    if !fits(0) {
        return None;
    }
    let (mut lo, mut hi) = (0, hi); // fits(lo) && !fits(hi)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if fits(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}

/// Builds the record for `key` from its retrieval result.
///
/// History is rendered in retrieval order. While the question exceeds the
/// budget, whole history trajectories are dropped from the end (least
/// similar); with no history left, the oldest current check-ins are dropped,
/// always keeping at least one.
pub fn assemble_record<'t>(
    key: &Trajectory,
    retrieval: &RetrievalResult,
    lookup: impl Fn(u64) -> Option<&'t Trajectory>,
    ctx: &AssemblyContext<'_>,
) -> Result<PromptRecord, AssembleError> {
    ctx.budget.validate()?;
    if key.len() < 2 {
        return Err(PromptError::TrajectoryTooShort(key.len()).into());
    }
    if retrieval.key_trajectory_id != key.trajectory_id {
        return Err(AssembleError::RetrievalMismatch { key: key.trajectory_id, retrieval: retrieval.key_trajectory_id });
    }

    let mut history: Vec<(u64, &[CheckIn])> = Vec::with_capacity(retrieval.selected.len());
    for sel in &retrieval.selected {
        let t = lookup(sel.trajectory_id).ok_or(AssembleError::UnknownHistory(sel.trajectory_id))?;
        if t.end_time >= key.start_time {
            return Err(AssembleError::Leakage { key: key.trajectory_id, history: t.trajectory_id });
        }
        let checkins = match retrieval.truncate_to {
            Some(n) if retrieval.selected.len() == 1 && n < t.len() => &t.checkins[t.len() - n..],
            _ => &t.checkins[..],
        };
        history.push((t.trajectory_id, checkins));
    }
    let slices: Vec<&[CheckIn]> = history.iter().map(|(_, s)| *s).collect();

    let limit = ctx.budget.question_limit();
    let context = key.context();
    let target = key.target();
    let render = |h: usize, skip: usize| {
        render_question(ctx.template, key.user_id, &context[skip..], &slices[..h], target, ctx.id_range)
    };
    let record = |question: alloc::string::String, kept: usize| PromptRecord {
        question,
        answer: build_answer(target, ctx.template),
        meta: PromptMeta {
            trajectory_id: key.trajectory_id,
            user_id: key.user_id,
            target_poi_id: target.poi_id,
            target_time: target.timestamp,
            variant: ctx.variant,
            history_trajectory_ids: history[..kept].iter().map(|(id, _)| *id).collect(),
        },
    };
    let fits = |h: usize, skip: usize| ctx.counter.count(&render(h, skip)) <= limit;

    let full = render(slices.len(), 0);
    if ctx.counter.count(&full) <= limit {
        return Ok(record(full, slices.len()));
    }
    let (kept, skip) = match largest_fitting(slices.len(), |h| fits(h, 0)) {
        Some(h) => (h, 0),
        None => {
            // Current block: drop the fewest oldest check-ins that makes it fit.
            let max_drop = context.len() - 1;
            match largest_fitting(max_drop, |extra| fits(0, max_drop - extra)) {
                Some(extra) => (0, max_drop - extra),
                None => {
                    let tokens = ctx.counter.count(&render(0, max_drop));
                    return Err(AssembleError::DoesNotFit { trajectory_id: key.trajectory_id, tokens, limit });
                }
            }
        }
    };

    Ok(record(render(kept, skip), kept))
}
