//! Question/answer prompt rendering for next-POI prediction.
//!
//! A question is `<question>` followed by the current-trajectory block (all
//! check-ins but the last), an optional historical block, and the instruction
//! block. The answer is the target block. Key and query prompts used for
//! similarity are the current-trajectory block over the trajectory without and
//! with its last check-in respectively.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::hash::{Fnv1a, SplitMix64};
use crate::ingest::{CheckIn, Trajectory};
use crate::time::Timestamp;

pub const QUESTION_TAG: &str = "<question>";
pub const ANSWER_TAG: &str = "<answer>:";

pub const TIME: &str = "[time]";
pub const USER_ID: &str = "[user id]";
pub const POI_ID: &str = "[poi id]";
pub const CATEGORY_NAME: &str = "[poi category name]";
pub const CATEGORY_ID: &str = "[category id]";
pub const ID_RANGE: &str = "[id range]";
/// Literal article slot in the check-in sentence, resolved to "a" or "an".
pub const ARTICLE: &str = "a/an";

const PLACEHOLDERS: [&str; 6] = [TIME, USER_ID, POI_ID, CATEGORY_NAME, CATEGORY_ID, ID_RANGE];

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PromptError {
    TrajectoryTooShort(usize),
    InvalidTemplate(String),
    AlreadyMasked,
    UnmaskableTemplate,
}

impl fmt::Display for PromptError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PromptError::TrajectoryTooShort(n) => write!(f, "trajectory has {n} check-ins, at least 2 required"),
            PromptError::InvalidTemplate(msg) => write!(f, "invalid prompt template: {msg}"),
            PromptError::AlreadyMasked => f.write_str("record is already context-masked"),
            PromptError::UnmaskableTemplate => {
                f.write_str("check-in sentence has no literal text around the category name; cannot locate it for masking")
            }
        }
    }
}

impl core::error::Error for PromptError {}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PromptTemplate {
    pub checkin_sentence: String,
    pub current_block_header: String,
    pub history_block_header: String,
    pub instruction_text: String,
    pub target_text: String,
    /// strftime subset, see [`Timestamp::format_into`].
    pub time_format: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            checkin_sentence: "At [time], user [user id] visited POI id [poi id] which is a/an [poi category name] with category id [category id]."
                .into(),
            current_block_header: "The following is a trajectory of user [user id]:".into(),
            history_block_header: "There is also historical data:".into(),
            instruction_text: "Given the data, at [time], which POI id will user [user id] visit? Note that POI id is an integer in the range from 0 to [id range]."
                .into(),
            target_text: "<answer>: At [time], user [user id] will visit POI id [poi id].".into(),
            time_format: "%Y-%m-%d %H:%M".into(),
        }
    }
}

fn check_pattern(name: &str, pattern: &str, required: &[&str]) -> Result<(), PromptError> {
    for p in PLACEHOLDERS {
        let n = pattern.matches(p).count();
        let want = usize::from(required.contains(&p));
        if n != want {
            return Err(PromptError::InvalidTemplate(alloc::format!(
                "{name} must contain {p} exactly {want} time(s), found {n}"
            )));
        }
    }
    Ok(())
}

impl PromptTemplate {
    pub fn validate(&self) -> Result<(), PromptError> {
        check_pattern(
            "checkin_sentence",
            &self.checkin_sentence,
            &[TIME, USER_ID, POI_ID, CATEGORY_NAME, CATEGORY_ID],
        )?;
        check_pattern("current_block_header", &self.current_block_header, &[USER_ID])?;
        check_pattern("history_block_header", &self.history_block_header, &[])?;
        check_pattern("instruction_text", &self.instruction_text, &[TIME, USER_ID, ID_RANGE])?;
        check_pattern("target_text", &self.target_text, &[TIME, USER_ID, POI_ID])?;
        if !self.target_text.starts_with(ANSWER_TAG) {
            return Err(PromptError::InvalidTemplate(alloc::format!("target_text must start with {ANSWER_TAG}")));
        }
        if self.time_format.is_empty() {
            return Err(PromptError::InvalidTemplate("time_format is empty".into()));
        }
        Ok(())
    }

    fn time(&self, t: Timestamp) -> String {
        t.format(&self.time_format)
    }

    /// Literal text immediately around `[poi category name]` in the check-in
    /// sentence, with the article slot expanded to each concrete article.
    fn category_anchors(&self) -> Result<(Vec<String>, String), PromptError> {
        let s = &self.checkin_sentence;
        let at = s.find(CATEGORY_NAME).ok_or(PromptError::UnmaskableTemplate)?;
        let prev_end = PLACEHOLDERS
            .iter()
            .filter_map(|p| s[..at].rfind(p).map(|i| i + p.len()))
            .max()
            .unwrap_or(0);
        let after_start = at + CATEGORY_NAME.len();
        let next_start = PLACEHOLDERS
            .iter()
            .filter_map(|p| s[after_start..].find(p).map(|i| i + after_start))
            .min()
            .unwrap_or(s.len());
        let before = &s[prev_end..at];
        let after = &s[after_start..next_start];
        if before.is_empty() || after.is_empty() {
            return Err(PromptError::UnmaskableTemplate);
        }
        let befores = if before.contains(ARTICLE) {
            alloc::vec![before.replacen(ARTICLE, "a", 1), before.replacen(ARTICLE, "an", 1)]
        } else {
            alloc::vec![before.into()]
        };
        Ok((befores, after.into()))
    }
}

/// Writes `pattern` with each placeholder in `slots` replaced. Scans the
/// pattern once, so substituted values are never re-expanded.
fn fill(out: &mut String, pattern: &str, slots: &[(&str, &str)]) {
    let bytes = pattern.as_bytes();
    let mut starts = [false; 256];
    for (token, _) in slots {
        if let Some(&b) = token.as_bytes().first() {
            starts[usize::from(b)] = true;
        }
    }
    let (mut literal, mut i) = (0, 0);
    while i < bytes.len() {
        if !starts[usize::from(bytes[i])] {
            i += 1;
            continue;
        }
        let hit = slots.iter().find(|(token, _)| !token.is_empty() && bytes[i..].starts_with(token.as_bytes()));
        match hit {
            // Every token starts with an ASCII byte, so `i` is a char boundary.
            Some((token, value)) => {
                out.push_str(&pattern[literal..i]);
                out.push_str(value);
                i += token.len();
                literal = i;
            }
            None => i += 1,
        }
    }
    out.push_str(&pattern[literal..]);
}

/// "an" before a vowel-initial category name, "a" otherwise.
pub fn article_for(category_name: &str) -> &'static str {
    match category_name.trim_start().chars().next() {
        Some(c) if matches!(c.to_ascii_lowercase(), 'a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

fn push_checkin(out: &mut String, c: &CheckIn, template: &PromptTemplate) {
    let time = template.time(c.local_time());
    let user = alloc::format!("{}", c.user_id);
    let poi = alloc::format!("{}", c.poi_id);
    let cat = alloc::format!("{}", c.category_id);
    fill(
        out,
        &template.checkin_sentence,
        &[
            (TIME, &time),
            (USER_ID, &user),
            (POI_ID, &poi),
            (CATEGORY_NAME, &c.category_name),
            (CATEGORY_ID, &cat),
            (ARTICLE, article_for(&c.category_name)),
        ],
    );
}

/// One check-in sentence. Coordinates are never rendered.
pub fn render_checkin(c: &CheckIn, template: &PromptTemplate) -> String {
    let mut s = String::new();
    push_checkin(&mut s, c, template);
    s
}

fn push_sentences<'a>(out: &mut String, checkins: impl IntoIterator<Item = &'a CheckIn>, template: &PromptTemplate) {
    for c in checkins {
        out.push(' ');
        push_checkin(out, c, template);
    }
}

fn push_current_block(out: &mut String, user_id: u32, checkins: &[CheckIn], template: &PromptTemplate) {
    let user = alloc::format!("{user_id}");
    fill(out, &template.current_block_header, &[(USER_ID, &user)]);
    push_sentences(out, checkins, template);
}

/// Key prompt: current-trajectory block over every check-in but the last.
pub fn build_key_prompt(t: &Trajectory, template: &PromptTemplate) -> Result<String, PromptError> {
    if t.len() < 2 {
        return Err(PromptError::TrajectoryTooShort(t.len()));
    }
    let mut s = String::new();
    push_current_block(&mut s, t.user_id, t.context(), template);
    Ok(s)
}

/// Query prompt: current-trajectory block over the whole trajectory.
pub fn build_query_prompt(t: &Trajectory, template: &PromptTemplate) -> Result<String, PromptError> {
    if t.len() < 2 {
        return Err(PromptError::TrajectoryTooShort(t.len()));
    }
    let mut s = String::new();
    push_current_block(&mut s, t.user_id, &t.checkins, template);
    Ok(s)
}

/// Low-level question renderer. `context` is the (possibly truncated) current
/// block, `history` the historical check-ins in presentation order; empty
/// history omits the historical block entirely.
pub fn render_question(
    template: &PromptTemplate,
    user_id: u32,
    context: &[CheckIn],
    history: &[&[CheckIn]],
    target: &CheckIn,
    id_range: u32,
) -> String {
    let mut s = String::from(QUESTION_TAG);
    s.push(' ');
    push_current_block(&mut s, user_id, context, template);
    if history.iter().any(|h| !h.is_empty()) {
        s.push(' ');
        s.push_str(&template.history_block_header);
        for h in history {
            push_sentences(&mut s, h.iter(), template);
        }
    }
    s.push(' ');
    let time = template.time(target.local_time());
    let user = alloc::format!("{user_id}");
    let range = alloc::format!("{id_range}");
    fill(&mut s, &template.instruction_text, &[(TIME, &time), (USER_ID, &user), (ID_RANGE, &range)]);
    s
}

pub fn build_question(
    current: &Trajectory,
    history: &[&Trajectory],
    id_range: u32,
    template: &PromptTemplate,
) -> Result<String, PromptError> {
    if current.len() < 2 {
        return Err(PromptError::TrajectoryTooShort(current.len()));
    }
    let slices: Vec<&[CheckIn]> = history.iter().map(|t| t.checkins.as_slice()).collect();
    Ok(render_question(template, current.user_id, current.context(), &slices, current.target(), id_range))
}

pub fn build_answer(target: &CheckIn, template: &PromptTemplate) -> String {
    let time = template.time(target.local_time());
    let user = alloc::format!("{}", target.user_id);
    let poi = alloc::format!("{}", target.poi_id);
    let mut s = String::new();
    fill(&mut s, &template.target_text, &[(TIME, &time), (USER_ID, &user), (POI_ID, &poi)]);
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Full,
    NoHistory,
    SelfHistoryOnly,
    MaskedContext,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoHistory => "no_history",
            Variant::SelfHistoryOnly => "self_history_only",
            Variant::MaskedContext => "masked_context",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptMeta {
    pub trajectory_id: u64,
    pub user_id: u32,
    pub target_poi_id: u32,
    pub target_time: Timestamp,
    pub variant: Variant,
    pub history_trajectory_ids: Vec<u64>,
}

/// A rendered question/answer pair plus the ground truth it was built from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub question: String,
    pub answer: String,
    pub meta: PromptMeta,
}

fn mask_for(name: &str, seed: u64) -> String {
    let mut h = Fnv1a::with_seed(seed);
    h.write(name.as_bytes());
    let mut rng = SplitMix64::new(h.finish());
    name.chars()
        .map(|c| if c.is_ascii_digit() { c } else { char::from(b'a' + rng.below(26) as u8) })
        .collect()
}

/// Replaces every category name in the question with a same-length string of
/// pseudo-random letters (digits inside a name are kept). The replacement for
/// a given name depends only on the name and `seed`.
pub fn mask_context(record: &PromptRecord, template: &PromptTemplate, seed: u64) -> Result<PromptRecord, PromptError> {
    if record.meta.variant == Variant::MaskedContext {
        return Err(PromptError::AlreadyMasked);
    }
    let (befores, after) = template.category_anchors()?;
    let q = record.question.as_str();
    let mut out = String::with_capacity(q.len());
    let mut pos = 0;
    loop {
        let next = befores
            .iter()
            .filter_map(|b| q[pos..].find(b.as_str()).map(|i| (pos + i, b.len())))
            .min_by_key(|&(i, len)| (i, core::cmp::Reverse(len)));
        let Some((at, len)) = next else { break };
        let name_start = at + len;
        let Some(rel_end) = q[name_start..].find(after.as_str()) else { break };
        let name_end = name_start + rel_end;
        out.push_str(&q[pos..name_start]);
        out.push_str(&mask_for(&q[name_start..name_end], seed));
        pos = name_end;
    }
    out.push_str(&q[pos..]);

    let mut masked = record.clone();
    masked.question = out;
    masked.meta.variant = Variant::MaskedContext;
    Ok(masked)
}
