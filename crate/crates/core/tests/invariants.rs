use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use trajprompt_core::corpus::{assemble_record, AssemblyContext, TokenBudget};
use trajprompt_core::ingest::{chronological_split, remap_ids, segment_trajectories, RawCheckIn, SegmentationConfig};
use trajprompt_core::prompt::{build_answer, mask_context, PromptTemplate, Variant};
use trajprompt_core::retrieval::{select_history, select_recent_history, Candidate, RetrievalConfig, RetrievalResult, Selected};
use trajprompt_core::{parse_poi_id, CheckIn, ParseStatus, Timestamp, Trajectory};

const T0: i64 = 1_333_238_400;

fn raw_rows(rows: &[(u8, u8, u32)]) -> Vec<RawCheckIn> {
    rows.iter()
        .enumerate()
        .map(|(i, &(u, p, minutes))| RawCheckIn {
            raw_user_key: format!("u{u}"),
            raw_poi_key: format!("p{p}"),
            raw_category_key: format!("c{}", p % 5),
            category_name: ["Bar", "Office", "Art Museum", "Park", "Ice Rink"][usize::from(p % 5)].into(),
            timestamp: Timestamp(T0 + i64::from(minutes) * 60),
            utc_offset_minutes: 0,
            latitude: 0.0,
            longitude: 0.0,
            seq: i as u64,
        })
        .collect()
}

fn rows() -> impl Strategy<Value = Vec<(u8, u8, u32)>> {
    prop::collection::vec((0u8..6, 0u8..12, 0u32..20_000), 0..200)
}

fn candidates() -> impl Strategy<Value = Vec<Candidate>> {
    prop::collection::vec((0u64..50, -1000i64..0, 2usize..12, -1.0f64..1.0), 0..40).prop_map(|v| {
        let mut seen = BTreeSet::new();
        v.into_iter()
            .filter(|(id, ..)| seen.insert(*id))
            .map(|(id, end, len, sim)| Candidate { trajectory_id: id, end_time: Timestamp(end), len, similarity: sim })
            .collect()
    })
}

fn admitted_respects_budget(r: &RetrievalResult, lens: &BTreeMap<u64, usize>, budget: usize) -> bool {
    let sum: usize = r.ids().map(|id| lens[&id]).sum();
    sum == r.total_checkins_selected && (sum <= budget || (r.selected.len() == 1 && r.truncate_to == Some(budget)))
}

fn checkin(user: u32, poi: u32, name: &str, minute: i64) -> CheckIn {
    CheckIn {
        user_id: user,
        poi_id: poi,
        category_id: poi % 7,
        category_name: name.into(),
        timestamp: Timestamp(T0 + minute * 60),
        utc_offset_minutes: 0,
        latitude: 0.0,
        longitude: 0.0,
        raw_user_key: String::new(),
        raw_poi_key: String::new(),
        seq: minute as u64,
    }
}

proptest! {
    #[test]
    fn segments_are_short_single_user_and_ordered(rows in rows(), hours in 1i64..48) {
        let cfg = SegmentationConfig { delta_t_secs: hours * 3600, ..Default::default() };
        let (checkins, _) = remap_ids(raw_rows(&rows));
        let n = checkins.len();
        let ts = segment_trajectories(checkins, &cfg);
        let mut seqs = BTreeSet::new();
        for (i, t) in ts.iter().enumerate() {
            prop_assert_eq!(t.trajectory_id, i as u64);
            prop_assert!(t.len() >= 2);
            prop_assert!(t.span_secs() <= cfg.delta_t_secs);
            prop_assert!(t.checkins.iter().all(|c| c.user_id == t.user_id));
            for c in &t.checkins {
                prop_assert!(seqs.insert(c.seq));
            }
        }
        prop_assert!(seqs.len() <= n);
        prop_assert!(ts.windows(2).all(|w| (w[0].user_id, w[0].start_time) <= (w[1].user_id, w[1].start_time)));
    }

    #[test]
    fn split_is_disjoint_chronological_and_pruned(rows in rows()) {
        let cfg = SegmentationConfig::default();
        let (checkins, _) = remap_ids(raw_rows(&rows));
        let ts = segment_trajectories(checkins, &cfg);
        let total = ts.len();
        let (sets, report) = chronological_split(ts, &cfg).unwrap();
        prop_assert_eq!(
            sets.train.len() + sets.validation.len() + sets.test.len() + report.validation_removed + report.test_removed,
            total
        );
        let last = |s: &[Trajectory]| s.iter().map(|t| (t.end_time, t.trajectory_id)).max();
        let first = |s: &[Trajectory]| s.iter().map(|t| (t.end_time, t.trajectory_id)).min();
        if let (Some(a), Some(b)) = (last(&sets.train), first(&sets.validation)) { prop_assert!(a < b); }
        if let (Some(a), Some(b)) = (last(&sets.validation), first(&sets.test)) { prop_assert!(a < b); }
        let users: BTreeSet<u32> = sets.train.iter().map(|t| t.user_id).collect();
        let pois: BTreeSet<u32> = sets.train.iter().flat_map(|t| t.checkins.iter().map(|c| c.poi_id)).collect();
        for t in sets.validation.iter().chain(&sets.test) {
            prop_assert!(users.contains(&t.user_id));
            prop_assert!(t.checkins.iter().all(|c| pois.contains(&c.poi_id)));
        }
    }

    #[test]
    fn similarity_selection_is_ranked_and_within_budget(cands in candidates(), budget in 0usize..60) {
        let lens: BTreeMap<u64, usize> = cands.iter().map(|c| (c.trajectory_id, c.len)).collect();
        let cfg = RetrievalConfig { history_checkin_budget: budget, ..Default::default() };
        let r = select_history(99, cands, &cfg);
        prop_assert!(admitted_respects_budget(&r, &lens, budget));
        let sims: Vec<f64> = r.selected.iter().map(|s| s.similarity.unwrap()).collect();
        prop_assert!(sims.windows(2).all(|w| w[0] >= w[1]));
        if budget == 0 { prop_assert!(r.selected.is_empty()); }
    }

    #[test]
    fn recency_selection_is_newest_first(cands in candidates(), budget in 1usize..60) {
        let lens: BTreeMap<u64, usize> = cands.iter().map(|c| (c.trajectory_id, c.len)).collect();
        let ends: BTreeMap<u64, Timestamp> = cands.iter().map(|c| (c.trajectory_id, c.end_time)).collect();
        let cfg = RetrievalConfig { history_checkin_budget: budget, self_only: true, ..Default::default() };
        let r = select_recent_history(99, cands, &cfg);
        prop_assert!(admitted_respects_budget(&r, &lens, budget));
        prop_assert!(r.selected.iter().all(|s| s.similarity.is_none()));
        let e: Vec<Timestamp> = r.ids().map(|id| ends[&id]).collect();
        prop_assert!(e.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn answer_round_trips(poi in 0u32..u32::MAX, user in 0u32..1_000_000, minute in 0i64..10_000_000) {
        let c = checkin(user, poi, "Bar", minute);
        prop_assert_eq!(parse_poi_id(&build_answer(&c, &PromptTemplate::default()), poi), (Some(poi), ParseStatus::Ok));
    }

    #[test]
    fn masking_keeps_length_digits_and_answer(
        names in prop::collection::vec("[A-Za-z0-9 &'/-]{1,24}", 3..8),
        seed in any::<u64>(),
    ) {
        let names: Vec<String> = names.into_iter().map(|n| n.trim().to_string()).filter(|n| !n.is_empty()).collect();
        prop_assume!(names.len() >= 3);
        let cs: Vec<CheckIn> = names.iter().enumerate().map(|(i, n)| checkin(4, 10 + i as u32, n, i as i64 * 30)).collect();
        let key = Trajectory::new(7, cs).unwrap();
        let tpl = PromptTemplate::default();
        let budget = TokenBudget::default();
        let ctx = AssemblyContext { template: &tpl, budget: &budget, counter: &budget.heuristic(), id_range: 100, variant: Variant::Full };
        let rec = assemble_record(&key, &RetrievalResult::empty(7), |_| None, &ctx).unwrap();
        let masked = mask_context(&rec, &tpl, seed).unwrap();
        let digits = |s: &str| s.chars().filter(char::is_ascii_digit).collect::<String>();
        prop_assert_eq!(masked.question.chars().count(), rec.question.chars().count());
        prop_assert_eq!(digits(&masked.question), digits(&rec.question));
        prop_assert_eq!(&masked.answer, &rec.answer);
        prop_assert_eq!(masked.meta.variant, Variant::MaskedContext);
    }

    #[test]
    fn assembled_question_fits_budget(
        context_len in 2usize..40,
        history in prop::collection::vec(2usize..30, 0..12),
        max_tokens in 200usize..3000,
    ) {
        let key_checkins: Vec<CheckIn> = (0..context_len).map(|i| checkin(1, i as u32, "Office", 100_000 + i as i64)).collect();
        let key = Trajectory::new(1000, key_checkins).unwrap();
        let pool: BTreeMap<u64, Trajectory> = history
            .iter()
            .enumerate()
            .map(|(h, &len)| {
                let cs = (0..len).map(|i| checkin(2 + h as u32, 50 + i as u32, "Park", h as i64 * 100 + i as i64)).collect();
                (h as u64, Trajectory::new(h as u64, cs).unwrap())
            })
            .collect();
        let retrieval = RetrievalResult {
            key_trajectory_id: 1000,
            selected: pool.keys().map(|&id| Selected { trajectory_id: id, similarity: Some(0.0) }).collect(),
            total_checkins_selected: history.iter().sum(),
            truncate_to: None,
        };
        let tpl = PromptTemplate::default();
        let budget = TokenBudget { max_tokens, ..Default::default() };
        let ctx = AssemblyContext { template: &tpl, budget: &budget, counter: &budget.heuristic(), id_range: 999, variant: Variant::Full };
        match assemble_record(&key, &retrieval, |id| pool.get(&id), &ctx) {
            Ok(r) => {
                prop_assert!(r.question.chars().count().div_ceil(4) <= max_tokens - budget.reserve_for_answer);
                let kept = &r.meta.history_trajectory_ids;
                prop_assert!(kept.iter().zip(pool.keys()).all(|(a, b)| a == b));
            }
            Err(e) => {
                let does_not_fit = matches!(e, trajprompt_core::AssembleError::DoesNotFit { .. });
                prop_assert!(does_not_fit, "unexpected error {}", e);
            }
        }
    }
}
