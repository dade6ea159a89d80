//! Acc@1 and the analysis breakdowns: user-activity and trajectory-length
//! groups, answer-in-question rate, and run-to-run comparison.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::{self, Write};

use serde::{Deserialize, Serialize};

use crate::inference::{ParseStatus, PredictionRecord};
use crate::ingest::Trajectory;
use crate::prompt::PromptRecord;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EvalError {
    Alignment { missing_predictions: Vec<u64>, unexpected_predictions: Vec<u64> },
    DuplicatePrediction(u64),
    UnknownUser { user_id: u32 },
    EmptyTrain,
    FingerprintMismatch { left: String, right: String },
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::Alignment { missing_predictions, unexpected_predictions } => write!(
                f,
                "predictions and gold are not aligned: {} gold trajectories without prediction (first: {:?}), {} predictions without gold (first: {:?})",
                missing_predictions.len(),
                missing_predictions.first(),
                unexpected_predictions.len(),
                unexpected_predictions.first()
            ),
            EvalError::DuplicatePrediction(id) => write!(f, "trajectory {id} has more than one prediction"),
            EvalError::UnknownUser { user_id } => write!(f, "test user {user_id} has no training trajectories"),
            EvalError::EmptyTrain => f.write_str("training set is empty"),
            EvalError::FingerprintMismatch { left, right } => {
                write!(f, "reports were computed on different test sets ({left} vs {right}); refusing to compare")
            }
        }
    }
}

impl core::error::Error for EvalError {}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccResult {
    pub acc1: f64,
    pub hits: usize,
    pub misses: usize,
    pub parse_failures: usize,
    pub m: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn is_hit(p: &PredictionRecord, gold: u32) -> bool {
    p.parse_status == ParseStatus::Ok && p.predicted_poi_id == Some(gold)
}

/// Fraction of test items whose single prediction equals the gold POI.
/// Unparseable and out-of-range outputs count as misses.
pub fn acc_at_1(predictions: &[PredictionRecord], gold: &BTreeMap<u64, u32>) -> Result<AccResult, EvalError> {
    let mut seen = BTreeSet::new();
    let mut unexpected = Vec::new();
    for p in predictions {
        if !seen.insert(p.trajectory_id) {
            return Err(EvalError::DuplicatePrediction(p.trajectory_id));
        }
        if !gold.contains_key(&p.trajectory_id) {
            unexpected.push(p.trajectory_id);
        }
    }
    let missing: Vec<u64> = gold.keys().filter(|id| !seen.contains(id)).copied().collect();
    if !missing.is_empty() || !unexpected.is_empty() {
        return Err(EvalError::Alignment { missing_predictions: missing, unexpected_predictions: unexpected });
    }
    let hits = predictions.iter().filter(|p| is_hit(p, gold[&p.trajectory_id])).count();
    let parse_failures = predictions.iter().filter(|p| p.parse_status != ParseStatus::Ok).count();
    let m = predictions.len();
    Ok(AccResult { acc1: ratio(hits, m), hits, misses: m - hits, parse_failures, m })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionKind {
    UserActivity,
    TrajectoryLength,
}

impl PartitionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PartitionKind::UserActivity => "user_activity",
            PartitionKind::TrajectoryLength => "trajectory_length",
        }
    }

    /// (top, middle, bottom) group labels.
    pub fn labels(self) -> [&'static str; 3] {
        match self {
            PartitionKind::UserActivity => ["very_active", "normal", "inactive"],
            PartitionKind::TrajectoryLength => ["long", "middle", "short"],
        }
    }
}

/// How a partition was cut: `floor(0.3 * ranked)` items at each end.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionThresholds {
    pub ranked: usize,
    pub top_count: usize,
    pub bottom_count: usize,
    /// Smallest ranking value inside the top group.
    pub top_min_value: Option<usize>,
    /// Largest ranking value inside the bottom group.
    pub bottom_max_value: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub kind: PartitionKind,
    /// Test trajectory id → group label.
    pub labels: BTreeMap<u64, String>,
    pub thresholds: PartitionThresholds,
}

impl Partition {
    pub fn group_sizes(&self) -> BTreeMap<&str, usize> {
        let mut out = BTreeMap::new();
        for label in self.labels.values() {
            *out.entry(label.as_str()).or_default() += 1;
        }
        out
    }
}

pub fn cut_30(n: usize) -> usize {
    n * 3 / 10
}

/// Splits a ranked list (best first) into top/middle/bottom label per position.
fn rank_labels(n: usize, kind: PartitionKind) -> impl Fn(usize) -> &'static str {
    let k = cut_30(n);
    let [top, mid, bottom] = kind.labels();
    move |pos| {
        if pos < k {
            top
        } else if pos >= n - k {
            bottom
        } else {
            mid
        }
    }
}

fn thresholds(values_ranked: &[usize]) -> PartitionThresholds {
    let n = values_ranked.len();
    let k = cut_30(n);
    PartitionThresholds {
        ranked: n,
        top_count: k,
        bottom_count: k,
        top_min_value: (k > 0).then(|| values_ranked[k - 1]),
        bottom_max_value: (k > 0).then(|| values_ranked[n - k]),
    }
}

/// Ranks training users by their number of training trajectories (ties by
/// lower user id first) and labels each test trajectory by its user's group.
pub fn partition_users_by_activity(train: &[Trajectory], test: &[&Trajectory]) -> Result<Partition, EvalError> {
    if train.is_empty() {
        return Err(EvalError::EmptyTrain);
    }
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for t in train {
        *counts.entry(t.user_id).or_default() += 1;
    }
    let mut ranked: Vec<(u32, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let label_at = rank_labels(ranked.len(), PartitionKind::UserActivity);
    let user_label: BTreeMap<u32, &str> = ranked.iter().enumerate().map(|(pos, (u, _))| (*u, label_at(pos))).collect();

    let mut labels = BTreeMap::new();
    for t in test {
        let label = user_label.get(&t.user_id).ok_or(EvalError::UnknownUser { user_id: t.user_id })?;
        labels.insert(t.trajectory_id, (*label).to_string());
    }
    let values: Vec<usize> = ranked.iter().map(|(_, c)| *c).collect();
    Ok(Partition { kind: PartitionKind::UserActivity, labels, thresholds: thresholds(&values) })
}

/// Ranks test trajectories by check-in count (ties by lower id first).
pub fn partition_trajectories_by_length(test: &[&Trajectory]) -> Partition {
    let mut ranked: Vec<(u64, usize)> = test.iter().map(|t| (t.trajectory_id, t.len())).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let label_at = rank_labels(ranked.len(), PartitionKind::TrajectoryLength);
    let labels = ranked.iter().enumerate().map(|(pos, (id, _))| (*id, label_at(pos).to_string())).collect();
    let values: Vec<usize> = ranked.iter().map(|(_, l)| *l).collect();
    Partition { kind: PartitionKind::TrajectoryLength, labels, thresholds: thresholds(&values) }
}

/// True when `text` contains "POI id <poi>" with `<poi>` as a whole number.
pub fn mentions_poi(text: &str, poi: u32) -> bool {
    const ANCHOR: &str = "POI id ";
    let want = format!("{poi}");
    let mut rest = text;
    while let Some(i) = rest.find(ANCHOR) {
        rest = &rest[i + ANCHOR.len()..];
        let run = rest.bytes().take_while(u8::is_ascii_digit).count();
        if &rest[..run] == want.as_str() {
            return true;
        }
    }
    false
}

/// Fraction of records whose question already mentions the gold POI id.
pub fn answer_in_question_rate(records: &[PromptRecord]) -> f64 {
    let n = records.iter().filter(|r| mentions_poi(&r.question, r.meta.target_poi_id)).count();
    ratio(n, records.len())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupStat {
    pub count: usize,
    pub hits: usize,
    pub acc1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall_acc1: f64,
    pub n_test: usize,
    pub hits: usize,
    pub parse_failures: usize,
    /// "<partition>/<group>" → stats.
    pub group_acc1: BTreeMap<String, GroupStat>,
    pub partitions: BTreeMap<String, PartitionThresholds>,
    pub answer_in_question_rate: f64,
    pub config_fingerprint: String,
    pub test_set_fingerprint: String,
}

impl EvalReport {
    pub fn build(
        predictions: &[PredictionRecord],
        gold: &BTreeMap<u64, u32>,
        partitions: &[Partition],
        answer_in_question_rate: f64,
        config_fingerprint: String,
        test_set_fingerprint: String,
    ) -> Result<Self, EvalError> {
        let acc = acc_at_1(predictions, gold)?;
        let mut group_acc1 = BTreeMap::new();
        let mut summary = BTreeMap::new();
        for part in partitions {
            let mut stats: BTreeMap<String, (usize, usize)> =
                part.kind.labels().iter().map(|l| (format!("{}/{}", part.kind.as_str(), l), (0, 0))).collect();
            for p in predictions {
                let Some(label) = part.labels.get(&p.trajectory_id) else {
                    return Err(EvalError::Alignment {
                        missing_predictions: Vec::new(),
                        unexpected_predictions: alloc::vec![p.trajectory_id],
                    });
                };
                let e = stats.entry(format!("{}/{}", part.kind.as_str(), label)).or_default();
                e.0 += 1;
                e.1 += usize::from(is_hit(p, gold[&p.trajectory_id]));
            }
            for (k, (count, hits)) in stats {
                group_acc1.insert(k, GroupStat { count, hits, acc1: ratio(hits, count) });
            }
            summary.insert(part.kind.as_str().to_string(), part.thresholds.clone());
        }
        Ok(EvalReport {
            overall_acc1: acc.acc1,
            n_test: acc.m,
            hits: acc.hits,
            parse_failures: acc.parse_failures,
            group_acc1,
            partitions: summary,
            answer_in_question_rate,
            config_fingerprint,
            test_set_fingerprint,
        })
    }

    /// Aligned plain-text rendering.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<32} {:>8} {:>8} {:>8}", "group", "count", "hits", "acc@1");
        let _ = writeln!(s, "{:<32} {:>8} {:>8} {:>8.4}", "overall", self.n_test, self.hits, self.overall_acc1);
        for (k, g) in &self.group_acc1 {
            let _ = writeln!(s, "{:<32} {:>8} {:>8} {:>8.4}", k, g.count, g.hits, g.acc1);
        }
        let _ = writeln!(s, "{:<32} {:>8}", "parse failures", self.parse_failures);
        let _ = writeln!(s, "{:<32} {:>8.4}", "answer-in-question rate", self.answer_in_question_rate);
        let _ = writeln!(s, "{:<32} {}", "config fingerprint", self.config_fingerprint);
        let _ = writeln!(s, "{:<32} {}", "test-set fingerprint", self.test_set_fingerprint);
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub metric: String,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub absolute: Option<f64>,
    /// (b - a) / a; absent when a is zero or either side is missing.
    pub relative: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub rows: Vec<DeltaRow>,
}

fn delta(metric: String, a: Option<f64>, b: Option<f64>) -> DeltaRow {
    let absolute = a.zip(b).map(|(a, b)| b - a);
    let relative = a.zip(b).and_then(|(a, b)| (a != 0.0).then(|| (b - a) / a));
    DeltaRow { metric, a, b, absolute, relative }
}

/// Per-metric and per-group deltas of `b` relative to `a`. Both reports must
/// come from the same test set.
pub fn compare_runs(a: &EvalReport, b: &EvalReport) -> Result<DeltaReport, EvalError> {
    if a.test_set_fingerprint != b.test_set_fingerprint {
        return Err(EvalError::FingerprintMismatch {
            left: a.test_set_fingerprint.clone(),
            right: b.test_set_fingerprint.clone(),
        });
    }
    let mut rows = alloc::vec![
        delta("overall_acc1".into(), Some(a.overall_acc1), Some(b.overall_acc1)),
        delta(
            "parse_failure_rate".into(),
            Some(ratio(a.parse_failures, a.n_test)),
            Some(ratio(b.parse_failures, b.n_test))
        ),
        delta("answer_in_question_rate".into(), Some(a.answer_in_question_rate), Some(b.answer_in_question_rate)),
    ];
    let groups: BTreeSet<&String> = a.group_acc1.keys().chain(b.group_acc1.keys()).collect();
    for g in groups {
        rows.push(delta(
            format!("acc1[{g}]"),
            a.group_acc1.get(g).map(|s| s.acc1),
            b.group_acc1.get(g).map(|s| s.acc1),
        ));
    }
    Ok(DeltaReport { rows })
}

impl DeltaReport {
    pub fn to_table(&self) -> String {
        let opt = |v: Option<f64>, signed: bool, pct: bool| match v {
            None => String::from("-"),
            Some(v) if pct => format!("{:+.2}%", v * 100.0),
            Some(v) if signed => format!("{v:+.4}"),
            Some(v) => format!("{v:.4}"),
        };
        let mut s = String::new();
        let _ = writeln!(s, "{:<40} {:>9} {:>9} {:>9} {:>9}", "metric", "a", "b", "abs", "rel");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<40} {:>9} {:>9} {:>9} {:>9}",
                r.metric,
                opt(r.a, false, false),
                opt(r.b, false, false),
                opt(r.absolute, true, false),
                opt(r.relative, true, true)
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::CheckIn;
    use crate::time::Timestamp;
    use alloc::vec;

    fn pred(id: u64, poi: Option<u32>) -> PredictionRecord {
        PredictionRecord {
            trajectory_id: id,
            raw_output: String::new(),
            predicted_poi_id: poi,
            parse_status: if poi.is_some() { ParseStatus::Ok } else { ParseStatus::NoMatch },
            latency_ms: 0,
        }
    }

    fn traj(id: u64, user: u32, len: usize) -> Trajectory {
        let cs = (0..len)
            .map(|i| CheckIn {
                user_id: user,
                poi_id: 0,
                category_id: 0,
                category_name: "Bar".into(),
                timestamp: Timestamp(i as i64),
                utc_offset_minutes: 0,
                latitude: 0.0,
                longitude: 0.0,
                raw_user_key: String::new(),
                raw_poi_key: String::new(),
                seq: 0,
            })
            .collect();
        Trajectory::new(id, cs).unwrap()
    }

    #[test]
    fn acc_direct_count() {
        let gold: BTreeMap<u64, u32> = [(0, 5), (1, 7)].into_iter().collect();
        let r = acc_at_1(&[pred(0, Some(5)), pred(1, Some(3))], &gold).unwrap();
        assert_eq!(r.acc1, 0.5);
        assert_eq!((r.hits, r.misses, r.parse_failures), (1, 1, 0));
    }

    #[test]
    fn acc_all_no_match() {
        let gold: BTreeMap<u64, u32> = (0..4).map(|i| (i, 1)).collect();
        let preds: Vec<_> = (0..4).map(|i| pred(i, None)).collect();
        let r = acc_at_1(&preds, &gold).unwrap();
        assert_eq!(r.acc1, 0.0);
        assert_eq!(r.parse_failures, 4);
    }

    #[test]
    fn acc_alignment_errors() {
        let gold: BTreeMap<u64, u32> = [(0, 5), (1, 7)].into_iter().collect();
        assert!(matches!(acc_at_1(&[pred(0, Some(5))], &gold), Err(EvalError::Alignment { .. })));
        assert!(matches!(
            acc_at_1(&[pred(0, Some(5)), pred(0, Some(5))], &gold),
            Err(EvalError::DuplicatePrediction(0))
        ));
        assert!(matches!(
            acc_at_1(&[pred(0, Some(5)), pred(1, Some(5)), pred(9, None)], &gold),
            Err(EvalError::Alignment { .. })
        ));
    }

    #[test]
    fn user_partition_ten_users() {
        // user u has (10 - u) training trajectories.
        let mut train = Vec::new();
        let mut id = 0;
        for u in 0..10u32 {
            for _ in 0..(10 - u) {
                train.push(traj(id, u, 2));
                id += 1;
            }
        }
        let test: Vec<Trajectory> = (0..10).map(|u| traj(1000 + u as u64, u, 2)).collect();
        let refs: Vec<&Trajectory> = test.iter().collect();
        let p = partition_users_by_activity(&train, &refs).unwrap();
        let sizes = p.group_sizes();
        assert_eq!((sizes["very_active"], sizes["normal"], sizes["inactive"]), (3, 4, 3));
        assert_eq!(p.labels[&1000], "very_active");
        assert_eq!(p.labels[&1009], "inactive");
        assert_eq!(p.thresholds.top_min_value, Some(8));
    }

    #[test]
    fn user_partition_ties_and_tiny_n() {
        let train: Vec<Trajectory> = (0..3).map(|u| traj(u as u64, u, 2)).collect();
        let refs: Vec<&Trajectory> = train.iter().collect();
        let p = partition_users_by_activity(&train, &refs).unwrap();
        assert!(p.labels.values().all(|l| l == "normal"));

        let train: Vec<Trajectory> = (0..10).map(|u| traj(u as u64, u, 2)).collect();
        let refs: Vec<&Trajectory> = train.iter().collect();
        let p = partition_users_by_activity(&train, &refs).unwrap();
        assert_eq!(p.labels[&0], "very_active");
        assert_eq!(p.labels[&9], "inactive");

        let stranger = traj(99, 42, 2);
        assert!(matches!(
            partition_users_by_activity(&train, &[&stranger]),
            Err(EvalError::UnknownUser { user_id: 42 })
        ));
        assert_eq!(partition_users_by_activity(&[], &[]), Err(EvalError::EmptyTrain));
    }

    #[test]
    fn length_partition() {
        let test: Vec<Trajectory> = (0..10).map(|i| traj(i, 0, 2 + i as usize)).collect();
        let refs: Vec<&Trajectory> = test.iter().collect();
        let p = partition_trajectories_by_length(&refs);
        let sizes = p.group_sizes();
        assert_eq!((sizes["long"], sizes["middle"], sizes["short"]), (3, 4, 3));
        assert_eq!(p.labels[&9], "long");
        assert_eq!(p.labels[&0], "short");
        let tiny: Vec<&Trajectory> = refs[..3].to_vec();
        assert!(partition_trajectories_by_length(&tiny).labels.values().all(|l| l == "middle"));
    }

    #[test]
    fn whole_number_mentions() {
        assert!(!mentions_poi("user 1 visited POI id 384 which", 38));
        assert!(mentions_poi("user 1 visited POI id 38 which", 38));
        assert!(mentions_poi("POI id 38.", 38));
        assert!(!mentions_poi("POI id is an integer in the range from 0 to 38.", 38));
    }

    fn report(acc: f64, fp: &str) -> EvalReport {
        EvalReport {
            overall_acc1: acc,
            n_test: 100,
            hits: (acc * 100.0) as usize,
            parse_failures: 0,
            group_acc1: BTreeMap::new(),
            partitions: BTreeMap::new(),
            answer_in_question_rate: 0.5,
            config_fingerprint: "c".into(),
            test_set_fingerprint: fp.into(),
        }
    }

    #[test]
    fn compare_identical_and_shifted() {
        let a = report(0.30, "t");
        let d = compare_runs(&a, &a).unwrap();
        assert!(d.rows.iter().all(|r| r.absolute == Some(0.0)));
        let d = compare_runs(&a, &report(0.33, "t")).unwrap();
        let row = &d.rows[0];
        assert!((row.absolute.unwrap() - 0.03).abs() < 1e-12);
        assert!((row.relative.unwrap() - 0.10).abs() < 1e-12);
        assert!(d.to_table().contains("+0.0300") && d.to_table().contains("+10.00%"));
        assert!(matches!(compare_runs(&a, &report(0.3, "other")), Err(EvalError::FingerprintMismatch { .. })));
    }

    #[test]
    fn report_groups_sum_to_n() {
        let test: Vec<Trajectory> = (0..10).map(|i| traj(i, i as u32, 2 + i as usize)).collect();
        let refs: Vec<&Trajectory> = test.iter().collect();
        let gold: BTreeMap<u64, u32> = (0..10).map(|i| (i, 0)).collect();
        let preds: Vec<_> = (0..10).map(|i| pred(i, Some((i % 2) as u32))).collect();
        let parts = vec![partition_users_by_activity(&test, &refs).unwrap(), partition_trajectories_by_length(&refs)];
        let r = EvalReport::build(&preds, &gold, &parts, 0.0, "c".into(), "t".into()).unwrap();
        assert_eq!(r.hits, 5);
        for kind in ["user_activity", "trajectory_length"] {
            let total: usize = r.group_acc1.iter().filter(|(k, _)| k.starts_with(kind)).map(|(_, g)| g.count).sum();
            assert_eq!(total, 10);
        }
        assert!(r.to_table().contains("overall"));
    }
}
