//! Check-in records, filtering, ID remapping, trajectory segmentation and
//! chronological train/validation/test splitting.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::time::Timestamp;

#[derive(Clone, Debug, PartialEq)]
pub enum IngestError {
    InvalidConfig(String),
    InvalidRecord { seq: u64, reason: &'static str },
    InvalidTrajectory(&'static str),
}

impl fmt::Display for IngestError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IngestError::InvalidConfig(msg) => write!(f, "invalid segmentation config: {msg}"),
            IngestError::InvalidRecord { seq, reason } => write!(f, "invalid check-in (row {seq}): {reason}"),
            IngestError::InvalidTrajectory(reason) => write!(f, "invalid trajectory: {reason}"),
        }
    }
}

impl core::error::Error for IngestError {}

/// A parsed check-in that still carries its source identifiers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawCheckIn {
    pub raw_user_key: String,
    pub raw_poi_key: String,
    pub raw_category_key: String,
    pub category_name: String,
    pub timestamp: Timestamp,
    #[serde(default)]
    pub utc_offset_minutes: i32,
    pub latitude: f64,
    pub longitude: f64,
    /// Position in the source; breaks timestamp ties.
    pub seq: u64,
}

impl RawCheckIn {
    pub fn validate(&self) -> Result<(), IngestError> {
        let bad = |reason| Err(IngestError::InvalidRecord { seq: self.seq, reason });
        if !(-90.0..=90.0).contains(&self.latitude) {
            return bad("latitude outside [-90, 90]");
        }
        if !(-180.0..=180.0).contains(&self.longitude) {
            return bad("longitude outside [-180, 180]");
        }
        if self.category_name.trim().is_empty() {
            return bad("empty category name");
        }
        if self.raw_user_key.is_empty() || self.raw_poi_key.is_empty() {
            return bad("empty user or POI key");
        }
        Ok(())
    }
}

/// One visit: user, POI, category, time and coordinates, with contiguous ids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckIn {
    pub user_id: u32,
    pub poi_id: u32,
    pub category_id: u32,
    pub category_name: String,
    pub timestamp: Timestamp,
    pub utc_offset_minutes: i32,
    pub latitude: f64,
    pub longitude: f64,
    pub raw_user_key: String,
    pub raw_poi_key: String,
    pub seq: u64,
}

impl CheckIn {
    /// Wall-clock time at the check-in's own UTC offset.
    pub fn local_time(&self) -> Timestamp {
        self.timestamp.with_offset_minutes(self.utc_offset_minutes)
    }

    fn order_key(&self) -> (Timestamp, u64) {
        (self.timestamp, self.seq)
    }
}

/// Time-ordered check-ins of a single user spanning at most `delta_t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub trajectory_id: u64,
    pub user_id: u32,
    pub checkins: Vec<CheckIn>,
    pub start_time: Timestamp,
    pub end_time: Timestamp,
}

impl Trajectory {
    pub fn new(trajectory_id: u64, checkins: Vec<CheckIn>) -> Result<Self, IngestError> {
        if checkins.len() < 2 {
            return Err(IngestError::InvalidTrajectory("fewer than two check-ins"));
        }
        let user_id = checkins[0].user_id;
        if checkins.iter().any(|c| c.user_id != user_id) {
            return Err(IngestError::InvalidTrajectory("check-ins from more than one user"));
        }
        if checkins.windows(2).any(|w| w[0].timestamp > w[1].timestamp) {
            return Err(IngestError::InvalidTrajectory("check-ins not in time order"));
        }
        Ok(Trajectory {
            trajectory_id,
            user_id,
            start_time: checkins[0].timestamp,
            end_time: checkins[checkins.len() - 1].timestamp,
            checkins,
        })
    }

    pub fn len(&self) -> usize {
        self.checkins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checkins.is_empty()
    }

    /// The final check-in, i.e. the prediction target.
    pub fn target(&self) -> &CheckIn {
        &self.checkins[self.checkins.len() - 1]
    }

    /// Everything before the target.
    pub fn context(&self) -> &[CheckIn] {
        &self.checkins[..self.checkins.len() - 1]
    }

    pub fn span_secs(&self) -> i64 {
        self.end_time.0 - self.start_time.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentationConfig {
    pub delta_t_secs: i64,
    pub min_poi_visits: usize,
    pub min_user_records: usize,
    /// train / validation / test fractions of the total check-in count.
    pub split_ratios: [f64; 3],
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            delta_t_secs: 24 * 3600,
            min_poi_visits: 10,
            min_user_records: 10,
            split_ratios: [0.8, 0.1, 0.1],
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.delta_t_secs <= 0 {
            return Err(IngestError::InvalidConfig("delta_t must be positive".into()));
        }
        if self.split_ratios.iter().any(|r| !(*r > 0.0 && *r < 1.0)) {
            return Err(IngestError::InvalidConfig("each split ratio must lie in (0, 1)".into()));
        }
        let sum: f64 = self.split_ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(IngestError::InvalidConfig(alloc::format!("split ratios sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

/// Bijective table between raw source keys and contiguous ids.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct IdTable {
    keys: Vec<String>,
    index: BTreeMap<String, u32>,
}

impl From<Vec<String>> for IdTable {
    fn from(keys: Vec<String>) -> Self {
        let index = keys.iter().enumerate().map(|(i, k)| (k.clone(), i as u32)).collect();
        IdTable { keys, index }
    }
}

impl From<IdTable> for Vec<String> {
    fn from(t: IdTable) -> Self {
        t.keys
    }
}

impl IdTable {
    /// Returns the id for `key`, allocating the next one on first sight.
    pub fn intern(&mut self, key: &str) -> u32 {
        if let Some(&id) = self.index.get(key) {
            return id;
        }
        let id = self.keys.len() as u32;
        self.keys.push(key.into());
        self.index.insert(key.into(), id);
        id
    }

    pub fn id(&self, key: &str) -> Option<u32> {
        self.index.get(key).copied()
    }

    pub fn key(&self, id: u32) -> Option<&str> {
        self.keys.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IdMaps {
    pub users: IdTable,
    pub pois: IdTable,
    pub categories: IdTable,
}

impl IdMaps {
    /// Largest valid POI id (`M - 1`); the inclusive upper bound quoted in prompts.
    pub fn id_range(&self) -> u32 {
        (self.pois.len() as u32).saturating_sub(1)
    }
}

/// Drops check-ins at POIs with fewer than `min_poi_visits` visits, then
/// check-ins of users left with fewer than `min_user_records`. One pass,
/// in that order; not iterated to a fixed point.
pub fn filter_dataset(checkins: Vec<RawCheckIn>, config: &SegmentationConfig) -> Vec<RawCheckIn> {
    let mut poi_visits: BTreeMap<&str, usize> = BTreeMap::new();
    for c in &checkins {
        *poi_visits.entry(c.raw_poi_key.as_str()).or_default() += 1;
    }
    let keep_poi: BTreeSet<String> = poi_visits
        .into_iter()
        .filter(|&(_, n)| n >= config.min_poi_visits)
        .map(|(k, _)| String::from(k))
        .collect();
    let checkins: Vec<RawCheckIn> = checkins.into_iter().filter(|c| keep_poi.contains(&c.raw_poi_key)).collect();

    let mut user_records: BTreeMap<&str, usize> = BTreeMap::new();
    for c in &checkins {
        *user_records.entry(c.raw_user_key.as_str()).or_default() += 1;
    }
    let keep_user: BTreeSet<String> = user_records
        .into_iter()
        .filter(|&(_, n)| n >= config.min_user_records)
        .map(|(k, _)| String::from(k))
        .collect();
    checkins.into_iter().filter(|c| keep_user.contains(&c.raw_user_key)).collect()
}

/// Assigns contiguous user, POI and category ids in order of first
/// chronological appearance (timestamp, then source order). Output keeps the
/// input order.
pub fn remap_ids(checkins: Vec<RawCheckIn>) -> (Vec<CheckIn>, IdMaps) {
    let mut order: Vec<usize> = (0..checkins.len()).collect();
    order.sort_by_key(|&i| (checkins[i].timestamp, checkins[i].seq));

    let mut maps = IdMaps::default();
    let mut ids = alloc::vec![(0u32, 0u32, 0u32); checkins.len()];
    for &i in &order {
        let c = &checkins[i];
        ids[i] = (
            maps.users.intern(&c.raw_user_key),
            maps.pois.intern(&c.raw_poi_key),
            maps.categories.intern(&c.raw_category_key),
        );
    }

    let out = checkins
        .into_iter()
        .zip(ids)
        .map(|(c, (user_id, poi_id, category_id))| CheckIn {
            user_id,
            poi_id,
            category_id,
            category_name: c.category_name,
            timestamp: c.timestamp,
            utc_offset_minutes: c.utc_offset_minutes,
            latitude: c.latitude,
            longitude: c.longitude,
            raw_user_key: c.raw_user_key,
            raw_poi_key: c.raw_poi_key,
            seq: c.seq,
        })
        .collect();
    (out, maps)
}

/// Greedy per-user segmentation: a check-in joins the open trajectory while its
/// timestamp is within `delta_t` (inclusive) of the trajectory's first one.
/// Single-check-in groups are dropped. Ids follow (user_id, start_time).
pub fn segment_trajectories(checkins: Vec<CheckIn>, config: &SegmentationConfig) -> Vec<Trajectory> {
    let mut by_user: BTreeMap<u32, Vec<CheckIn>> = BTreeMap::new();
    for c in checkins {
        by_user.entry(c.user_id).or_default().push(c);
    }

    let mut out = Vec::new();
    let mut next_id = 0u64;
    for (_, mut visits) in by_user {
        visits.sort_by_key(CheckIn::order_key);
        let mut current: Vec<CheckIn> = Vec::new();
        let mut flush = |group: Vec<CheckIn>, out: &mut Vec<Trajectory>| {
            if group.len() >= 2 {
                // Invariants hold by construction: single user, sorted, len >= 2.
                if let Ok(t) = Trajectory::new(next_id, group) {
                    out.push(t);
                    next_id += 1;
                }
            }
        };
        for c in visits {
            let starts_new = current
                .first()
                .is_some_and(|first| c.timestamp.0 - first.timestamp.0 > config.delta_t_secs);
            if starts_new {
                flush(core::mem::take(&mut current), &mut out);
            }
            current.push(c);
        }
        flush(current, &mut out);
    }
    out
}

/// Train/validation/test trajectory lists.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitSets {
    pub train: Vec<Trajectory>,
    pub validation: Vec<Trajectory>,
    pub test: Vec<Trajectory>,
}

/// Orders trajectories by (end_time, trajectory_id) and cuts where the running
/// check-in count passes the train and train+validation shares of the total.
pub fn split_chronologically(mut trajectories: Vec<Trajectory>, config: &SegmentationConfig) -> Result<SplitSets, IngestError> {
    config.validate()?;
    trajectories.sort_by_key(|t| (t.end_time, t.trajectory_id));
    let total: usize = trajectories.iter().map(Trajectory::len).sum();
    let [r_train, r_val, _] = config.split_ratios;
    // The epsilon absorbs representation error in products like 0.8 * 20.
    let train_cut = libm::floor(r_train * total as f64 + 1e-9) as usize;
    let val_cut = libm::floor((r_train + r_val) * total as f64 + 1e-9) as usize;

    let mut sets = SplitSets::default();
    let mut running = 0usize;
    for t in trajectories {
        running += t.len();
        if running <= train_cut {
            sets.train.push(t);
        } else if running <= val_cut {
            sets.validation.push(t);
        } else {
            sets.test.push(t);
        }
    }
    Ok(sets)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneReport {
    pub validation_removed: usize,
    pub test_removed: usize,
}

/// Removes validation/test trajectories that mention a user or POI never seen
/// in the training set.
pub fn prune_unseen(mut sets: SplitSets) -> (SplitSets, PruneReport) {
    let users: BTreeSet<u32> = sets.train.iter().map(|t| t.user_id).collect();
    let pois: BTreeSet<u32> = sets.train.iter().flat_map(|t| t.checkins.iter().map(|c| c.poi_id)).collect();
    let seen = |t: &Trajectory| users.contains(&t.user_id) && t.checkins.iter().all(|c| pois.contains(&c.poi_id));

    let before = (sets.validation.len(), sets.test.len());
    sets.validation.retain(|t| seen(t));
    sets.test.retain(|t| seen(t));
    let report = PruneReport {
        validation_removed: before.0 - sets.validation.len(),
        test_removed: before.1 - sets.test.len(),
    };
    (sets, report)
}

/// [`split_chronologically`] followed by [`prune_unseen`].
pub fn chronological_split(trajectories: Vec<Trajectory>, config: &SegmentationConfig) -> Result<(SplitSets, PruneReport), IngestError> {
    Ok(prune_unseen(split_chronologically(trajectories, config)?))
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitStats {
    pub users: usize,
    pub pois: usize,
    pub categories: usize,
    pub checkins: usize,
    pub train_trajectories: usize,
    pub validation_trajectories: usize,
    pub test_trajectories: usize,
    pub validation_pruned: usize,
    pub test_pruned: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<Trajectory>,
    pub validation: Vec<Trajectory>,
    pub test: Vec<Trajectory>,
    pub id_maps: IdMaps,
    pub stats: SplitStats,
}

impl DatasetSplit {
    pub fn all_trajectories(&self) -> impl Iterator<Item = &Trajectory> {
        self.train.iter().chain(&self.validation).chain(&self.test)
    }

    pub fn id_range(&self) -> u32 {
        self.id_maps.id_range()
    }
}

/// Runs the full preprocessing chain: filter, remap, segment, split, prune.
pub fn preprocess(raw: Vec<RawCheckIn>, config: &SegmentationConfig) -> Result<DatasetSplit, IngestError> {
    config.validate()?;
    let filtered = filter_dataset(raw, config);
    let checkins = filtered.len();
    let (remapped, id_maps) = remap_ids(filtered);
    let trajectories = segment_trajectories(remapped, config);
    let (sets, prune) = chronological_split(trajectories, config)?;
    let stats = SplitStats {
        users: id_maps.users.len(),
        pois: id_maps.pois.len(),
        categories: id_maps.categories.len(),
        checkins,
        train_trajectories: sets.train.len(),
        validation_trajectories: sets.validation.len(),
        test_trajectories: sets.test.len(),
        validation_pruned: prune.validation_removed,
        test_pruned: prune.test_removed,
    };
    Ok(DatasetSplit { train: sets.train, validation: sets.validation, test: sets.test, id_maps, stats })
}
