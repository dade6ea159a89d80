//! Prediction records and extraction of the predicted POI id from a
//! generation.

use alloc::string::String;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    Ok,
    NoMatch,
    OutOfRange,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub trajectory_id: u64,
    pub raw_output: String,
    pub predicted_poi_id: Option<u32>,
    pub parse_status: ParseStatus,
    pub latency_ms: u64,
}

impl PredictionRecord {
    pub fn from_output(trajectory_id: u64, raw_output: String, id_range: u32, latency_ms: u64) -> Self {
        let (predicted_poi_id, parse_status) = parse_poi_id(&raw_output, id_range);
        PredictionRecord { trajectory_id, raw_output, predicted_poi_id, parse_status, latency_ms }
    }

    /// Transport failure after retries: empty output, scored as a miss.
    pub fn failed(trajectory_id: u64, latency_ms: u64) -> Self {
        PredictionRecord {
            trajectory_id,
            raw_output: String::new(),
            predicted_poi_id: None,
            parse_status: ParseStatus::NoMatch,
            latency_ms,
        }
    }
}

const ANCHOR: &[u8] = b"poi id";

fn find_anchor(s: &[u8]) -> Option<usize> {
    s.windows(ANCHOR.len()).position(|w| w.eq_ignore_ascii_case(ANCHOR))
}

/// Value of the digit run starting at `start`; `None` on u32 overflow.
fn digits_at(s: &[u8], start: usize) -> (Option<u32>, usize) {
    let end = s[start..].iter().position(|b| !b.is_ascii_digit()).map_or(s.len(), |n| start + n);
    let mut v: u32 = 0;
    for &d in &s[start..end] {
        match v.checked_mul(10).and_then(|v| v.checked_add(u32::from(d - b'0'))) {
            Some(n) => v = n,
            None => return (None, end),
        }
    }
    (Some(v), end)
}

fn classify(value: Option<u32>, id_range: u32) -> (Option<u32>, ParseStatus) {
    match value {
        Some(v) if v <= id_range => (Some(v), ParseStatus::Ok),
        _ => (None, ParseStatus::OutOfRange),
    }
}

/// Extracts a POI id from model output.
///
/// Takes the first integer after the first case-insensitive "POI id"; failing
/// that, the first integer not glued to a letter or digit. Values above
/// `id_range` are `OutOfRange`; no integer at all is `NoMatch`.
pub fn parse_poi_id(raw_output: &str, id_range: u32) -> (Option<u32>, ParseStatus) {
    let s = raw_output.as_bytes();
    if let Some(at) = find_anchor(s) {
        let from = at + ANCHOR.len();
        if let Some(off) = s[from..].iter().position(u8::is_ascii_digit) {
            return classify(digits_at(s, from + off).0, id_range);
        }
    }
    let mut i = 0;
    while i < s.len() {
        if !s[i].is_ascii_digit() {
            i += 1;
            continue;
        }
        let (value, end) = digits_at(s, i);
        let glued_before = i > 0 && s[i - 1].is_ascii_alphabetic();
        let glued_after = end < s.len() && s[end].is_ascii_alphabetic();
        if !glued_before && !glued_after {
            return classify(value, id_range);
        }
        i = end;
    }
    (None, ParseStatus::NoMatch)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_grammar() {
        assert_eq!(
            parse_poi_id("<answer>: At 2012-05-01 09:00, user 12 will visit POI id 384.", 1000),
            (Some(384), ParseStatus::Ok)
        );
        assert_eq!(parse_poi_id("poi ID: 7", 10), (Some(7), ParseStatus::Ok));
    }

    #[test]
    fn fallback_to_first_standalone_integer() {
        assert_eq!(parse_poi_id("I think maybe 77 or 78", 100), (Some(77), ParseStatus::Ok));
        assert_eq!(parse_poi_id("room b12 then 5", 100), (Some(5), ParseStatus::Ok));
    }

    #[test]
    fn no_match_and_out_of_range() {
        assert_eq!(parse_poi_id("no idea", 100), (None, ParseStatus::NoMatch));
        assert_eq!(parse_poi_id("", 100), (None, ParseStatus::NoMatch));
        assert_eq!(parse_poi_id("POI id 101", 100), (None, ParseStatus::OutOfRange));
        assert_eq!(parse_poi_id("POI id 99999999999999", 100), (None, ParseStatus::OutOfRange));
        assert_eq!(parse_poi_id("POI id 100", 100), (Some(100), ParseStatus::Ok));
    }

    #[test]
    fn failed_record_is_no_match() {
        let r = PredictionRecord::failed(3, 10);
        assert_eq!(r.parse_status, ParseStatus::NoMatch);
        assert!(r.predicted_poi_id.is_none() && r.raw_output.is_empty());
    }

    proptest::proptest! {
        #[test]
        fn parsing_is_total(s in ".*", range in 0u32..10_000) {
            let (v, st) = parse_poi_id(&s, range);
            proptest::prop_assert_eq!(v.is_some(), st == ParseStatus::Ok);
            if let Some(v) = v { proptest::prop_assert!(v <= range); }
        }
    }
}
