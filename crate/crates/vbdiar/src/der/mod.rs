//! Diarization error rate with interval-exact arithmetic.
//!
//! Scoring excises a no-score collar around every reference turn boundary,
//! finds the one-to-one speaker mapping that maximizes correctly attributed
//! scored time, and reports miss, false alarm and speaker error as exact
//! interval lengths — no frame grid is involved. Reference turns must not
//! overlap; the telephone protocol this scorer serves has exactly one
//! active speaker at a time.

mod rttm;

pub use rttm::{read_rttm, rttm_to_string, write_rttm};

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Default no-score collar half-width in seconds.
pub const DEFAULT_COLLAR: f64 = 0.25;

/// One speaker turn.
#[derive(Clone, Debug, PartialEq)]
pub struct Turn {
    pub start: f64,
    pub end: f64,
    pub speaker: String,
}

impl Turn {
    pub fn new(start: f64, end: f64, speaker: impl Into<String>) -> Self {
        Self {
            start,
            end,
            speaker: speaker.into(),
        }
    }
}

/// An ordered, non-overlapping list of turns for one recording.
#[derive(Clone, Debug, PartialEq)]
pub struct TurnList {
    recording_id: String,
    turns: Vec<Turn>,
}

impl TurnList {
    /// Validates and sorts the turns. Turns may touch but not overlap.
    pub fn new(recording_id: impl Into<String>, mut turns: Vec<Turn>) -> Result<Self> {
        let recording_id = recording_id.into();
        for t in &turns {
            if !t.start.is_finite() || !t.end.is_finite() || t.end <= t.start {
                return Err(Error::InvalidInput(format!(
                    "turn [{}, {}) for {:?} is empty or non-finite",
                    t.start, t.end, t.speaker
                )));
            }
        }
        turns.sort_by(|a, b| {
            a.start
                .partial_cmp(&b.start)
                .expect("finite turn times")
                .then(a.end.partial_cmp(&b.end).expect("finite turn times"))
        });
        for pair in turns.windows(2) {
            if pair[1].start < pair[0].end - 1e-12 {
                return Err(Error::InvalidInput(format!(
                    "overlapping turns at {:.3}: [{:.3}, {:.3}) and [{:.3}, {:.3})",
                    pair[1].start, pair[0].start, pair[0].end, pair[1].start, pair[1].end
                )));
            }
        }
        Ok(Self {
            recording_id,
            turns,
        })
    }

    pub fn recording_id(&self) -> &str {
        &self.recording_id
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    /// Distinct speaker names, sorted.
    pub fn speakers(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self.turns.iter().map(|t| t.speaker.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        names
    }

    fn speaker_intervals(&self) -> BTreeMap<&str, Vec<Interval>> {
        let mut map: BTreeMap<&str, Vec<Interval>> = BTreeMap::new();
        for t in &self.turns {
            map.entry(t.speaker.as_str()).or_default().push((t.start, t.end));
        }
        for intervals in map.values_mut() {
            *intervals = normalize(intervals.clone());
        }
        map
    }

    fn all_intervals(&self) -> Vec<Interval> {
        normalize(self.turns.iter().map(|t| (t.start, t.end)).collect())
    }
}

/// DER scoring breakdown. Times are seconds; `der` is a fraction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerReport {
    pub scored_time: f64,
    pub miss_time: f64,
    pub false_alarm_time: f64,
    pub speaker_error_time: f64,
    pub der: f64,
}

/// Scores a hypothesis against a reference.
///
/// No-score zones of width `2·collar` centered on every reference turn
/// boundary are removed from the scored time and from every error term.
/// The part of a zone that falls outside the recording simply never
/// intersects anything.
pub fn compute_der(reference: &TurnList, hypothesis: &TurnList, collar: f64) -> Result<DerReport> {
    if reference.recording_id != hypothesis.recording_id {
        return Err(Error::InvalidInput(format!(
            "recording ids differ: {:?} vs {:?}",
            reference.recording_id, hypothesis.recording_id
        )));
    }
    if !collar.is_finite() || collar < 0.0 {
        return Err(Error::InvalidInput(format!("collar must be >= 0, got {collar}")));
    }
    if reference.turns.is_empty() {
        return Err(Error::InvalidInput("reference has no turns".into()));
    }

    let noscore = boundary_collars(reference, collar);
    let ref_by_speaker: BTreeMap<&str, Vec<Interval>> = reference
        .speaker_intervals()
        .into_iter()
        .map(|(name, iv)| (name, subtract(&iv, &noscore)))
        .collect();
    let hyp_by_speaker: BTreeMap<&str, Vec<Interval>> = hypothesis
        .speaker_intervals()
        .into_iter()
        .map(|(name, iv)| (name, subtract(&iv, &noscore)))
        .collect();

    let scored_time: f64 = ref_by_speaker.values().map(|iv| total_length(iv)).sum();
    if scored_time <= 0.0 {
        return Err(Error::InvalidInput(
            "no scored reference time remains after collar removal".into(),
        ));
    }

    let overlap = overlap_matrix(&ref_by_speaker, &hyp_by_speaker);
    let mapping = best_mapping(&overlap);

    let both_present: f64 = overlap.values().copied().sum();
    let correct: f64 = mapping
        .iter()
        .map(|(hyp, reference)| {
            overlap
                .get(&(reference.as_str(), hyp.as_str()))
                .copied()
                .unwrap_or(0.0)
        })
        .sum();

    let ref_union = subtract(&reference.all_intervals(), &noscore);
    let hyp_union = subtract(&hypothesis.all_intervals(), &noscore);
    let false_alarm_time = total_length(&subtract(&hyp_union, &ref_union)).max(0.0);
    let miss_time = (scored_time - both_present).max(0.0);
    let speaker_error_time = (both_present - correct).max(0.0);

    Ok(DerReport {
        scored_time,
        miss_time,
        false_alarm_time,
        speaker_error_time,
        der: (miss_time + false_alarm_time + speaker_error_time) / scored_time,
    })
}

/// Optimal one-to-one mapping from hypothesis speakers to reference
/// speakers, maximizing raw overlapped time (no collar). Exposed for
/// diagnostics; [`compute_der`] applies the same optimization on scored
/// (collar-excised) time.
pub fn map_speakers(
    reference: &TurnList,
    hypothesis: &TurnList,
) -> Result<BTreeMap<String, String>> {
    if reference.turns.is_empty() || hypothesis.turns.is_empty() {
        return Err(Error::InvalidInput("map_speakers needs non-empty turn lists".into()));
    }
    let overlap = overlap_matrix(&reference.speaker_intervals(), &hypothesis.speaker_intervals());
    Ok(best_mapping(&overlap))
}

type Interval = (f64, f64);

/// Collar zones `[b − collar, b + collar]` around every reference boundary.
fn boundary_collars(reference: &TurnList, collar: f64) -> Vec<Interval> {
    if collar == 0.0 {
        return Vec::new();
    }
    let mut zones: Vec<Interval> = Vec::new();
    for t in &reference.turns {
        zones.push((t.start - collar, t.start + collar));
        zones.push((t.end - collar, t.end + collar));
    }
    normalize(zones)
}

fn overlap_matrix<'a>(
    reference: &BTreeMap<&'a str, Vec<Interval>>,
    hypothesis: &BTreeMap<&'a str, Vec<Interval>>,
) -> BTreeMap<(&'a str, &'a str), f64> {
    let mut matrix = BTreeMap::new();
    for (&r, ref_iv) in reference {
        for (&h, hyp_iv) in hypothesis {
            let shared = total_length(&intersect(ref_iv, hyp_iv));
            if shared > 0.0 {
                matrix.insert((r, h), shared);
            }
        }
    }
    matrix
}

/// Exhaustively maximizes total overlap over injective partial mappings
/// hypothesis → reference. Speaker counts here are tiny, so enumeration is
/// exact and cheap. Ties prefer, per hypothesis speaker in lexicographic
/// order, the lexicographically smallest reference name (mapped before
/// unmapped).
fn best_mapping(overlap: &BTreeMap<(&str, &str), f64>) -> BTreeMap<String, String> {
    let mut ref_names: Vec<&str> = overlap.keys().map(|(r, _)| *r).collect();
    ref_names.sort_unstable();
    ref_names.dedup();
    let mut hyp_names: Vec<&str> = overlap.keys().map(|(_, h)| *h).collect();
    hyp_names.sort_unstable();
    hyp_names.dedup();

    struct Search<'a> {
        overlap: &'a BTreeMap<(&'a str, &'a str), f64>,
        ref_names: Vec<&'a str>,
        hyp_names: Vec<&'a str>,
        best_total: f64,
        best: Vec<Option<usize>>,
    }

    impl<'a> Search<'a> {
        fn recurse(&mut self, depth: usize, used: &mut Vec<bool>, current: &mut Vec<Option<usize>>, total: f64) {
            if depth == self.hyp_names.len() {
                if total > self.best_total {
                    self.best_total = total;
                    self.best = current.clone();
                }
                return;
            }
            let hyp = self.hyp_names[depth];
            // candidate order fixes the tie-break: references in lex order,
            // then "unmapped"; the first maximum found is kept
            for r in 0..self.ref_names.len() {
                if used[r] {
                    continue;
                }
                let gain = self
                    .overlap
                    .get(&(self.ref_names[r], hyp))
                    .copied()
                    .unwrap_or(0.0);
                used[r] = true;
                current[depth] = Some(r);
                self.recurse(depth + 1, used, current, total + gain);
                used[r] = false;
                current[depth] = None;
            }
            self.recurse(depth + 1, used, current, total);
        }
    }

    let hyp_count = hyp_names.len();
    let ref_count = ref_names.len();
    let mut search = Search {
        overlap,
        ref_names,
        hyp_names,
        best_total: f64::NEG_INFINITY,
        best: vec![None; hyp_count],
    };
    let mut used = vec![false; ref_count];
    let mut current = vec![None; hyp_count];
    search.recurse(0, &mut used, &mut current, 0.0);

    let mut mapping = BTreeMap::new();
    for (h, slot) in search.best.iter().enumerate() {
        if let Some(r) = slot {
            mapping.insert(
                search.hyp_names[h].to_string(),
                search.ref_names[*r].to_string(),
            );
        }
    }
    mapping
}

/// Sorts, drops empties, and merges touching or overlapping intervals.
fn normalize(mut intervals: Vec<Interval>) -> Vec<Interval> {
    intervals.retain(|&(s, e)| e > s);
    intervals.sort_by(|a, b| a.partial_cmp(b).expect("finite interval bounds"));
    let mut merged: Vec<Interval> = Vec::with_capacity(intervals.len());
    for (s, e) in intervals {
        match merged.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => merged.push((s, e)),
        }
    }
    merged
}

fn intersect(a: &[Interval], b: &[Interval]) -> Vec<Interval> {
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if hi > lo {
            out.push((lo, hi));
        }
        if a[i].1 <= b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

/// `a` minus `b`; both must be normalized.
fn subtract(a: &[Interval], b: &[Interval]) -> Vec<Interval> {
    let mut out = Vec::new();
    let mut j = 0;
    for &(start, end) in a {
        let mut cursor = start;
        while j < b.len() && b[j].1 <= cursor {
            j += 1;
        }
        let mut k = j;
        while k < b.len() && b[k].0 < end {
            if b[k].0 > cursor {
                out.push((cursor, b[k].0));
            }
            cursor = cursor.max(b[k].1);
            if cursor >= end {
                break;
            }
            k += 1;
        }
        if cursor < end {
            out.push((cursor, end));
        }
    }
    normalize(out)
}

fn total_length(intervals: &[Interval]) -> f64 {
    intervals.iter().map(|&(s, e)| e - s).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(id: &str, turns: &[(f64, f64, &str)]) -> TurnList {
        TurnList::new(
            id,
            turns
                .iter()
                .map(|&(s, e, spk)| Turn::new(s, e, spk))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn identical_hypothesis_scores_zero() {
        let reference = list("rec", &[(0.0, 5.0, "A"), (5.0, 10.0, "B")]);
        let report = compute_der(&reference, &reference.clone(), 0.25).unwrap();
        assert_eq!(report.der, 0.0);
        assert_eq!(report.miss_time, 0.0);
        assert_eq!(report.false_alarm_time, 0.0);
        assert_eq!(report.speaker_error_time, 0.0);
    }

    #[test]
    fn swapped_speaker_names_score_zero() {
        let reference = list("rec", &[(0.0, 5.0, "A"), (5.0, 10.0, "B")]);
        let hypothesis = list("rec", &[(0.0, 5.0, "B"), (5.0, 10.0, "A")]);
        let report = compute_der(&reference, &hypothesis, 0.25).unwrap();
        assert_eq!(report.der, 0.0);
    }

    #[test]
    fn worked_example_with_a_misplaced_boundary() {
        // boundaries at 0, 5, 10 excise [0, 0.25), [4.75, 5.25), [9.75, 10);
        // scored = 9.0; the erroneous [5, 6) shrinks to [5.25, 6) = 0.75
        let reference = list("rec", &[(0.0, 5.0, "A"), (5.0, 10.0, "B")]);
        let hypothesis = list("rec", &[(0.0, 6.0, "A"), (6.0, 10.0, "B")]);
        let report = compute_der(&reference, &hypothesis, 0.25).unwrap();
        assert_eq!(report.scored_time, 9.0);
        assert_eq!(report.speaker_error_time, 0.75);
        assert_eq!(report.miss_time, 0.0);
        assert_eq!(report.false_alarm_time, 0.0);
        assert_eq!(report.der, 0.75 / 9.0);
    }

    #[test]
    fn miss_and_false_alarm_are_detected() {
        let reference = list("rec", &[(0.0, 10.0, "A")]);
        // hypothesis is silent over [4, 6) and talks past the end
        let hypothesis = list("rec", &[(0.0, 4.0, "X"), (6.0, 12.0, "X")]);
        let report = compute_der(&reference, &hypothesis, 0.0).unwrap();
        assert_eq!(report.scored_time, 10.0);
        assert_eq!(report.miss_time, 2.0);
        assert_eq!(report.false_alarm_time, 2.0);
        assert_eq!(report.speaker_error_time, 0.0);
        assert_eq!(report.der, 0.4);
    }

    #[test]
    fn renaming_hypothesis_speakers_never_changes_der() {
        let reference = list("rec", &[(0.0, 3.0, "A"), (3.0, 7.0, "B"), (7.0, 9.0, "A")]);
        let hypothesis = list("rec", &[(0.0, 3.5, "u"), (3.5, 7.0, "v"), (7.0, 9.0, "u")]);
        let renamed = list("rec", &[(0.0, 3.5, "zz"), (3.5, 7.0, "qq"), (7.0, 9.0, "zz")]);
        let a = compute_der(&reference, &hypothesis, 0.25).unwrap();
        let b = compute_der(&reference, &renamed, 0.25).unwrap();
        assert_eq!(a.der, b.der);
        assert_eq!(a.speaker_error_time, b.speaker_error_time);
    }

    #[test]
    fn splitting_a_hypothesis_turn_changes_nothing() {
        let reference = list("rec", &[(0.0, 4.0, "A"), (4.0, 8.0, "B")]);
        let hypothesis = list("rec", &[(0.0, 4.2, "X"), (4.2, 8.0, "Y")]);
        let split = list(
            "rec",
            &[(0.0, 2.0, "X"), (2.0, 4.2, "X"), (4.2, 6.0, "Y"), (6.0, 8.0, "Y")],
        );
        let a = compute_der(&reference, &hypothesis, 0.25).unwrap();
        let b = compute_der(&reference, &split, 0.25).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn growing_the_collar_shrinks_scored_time_and_errors() {
        let reference = list("rec", &[(0.0, 4.0, "A"), (4.0, 8.0, "B")]);
        let hypothesis = list("rec", &[(0.0, 4.5, "X"), (4.5, 8.0, "Y")]);
        let mut last = compute_der(&reference, &hypothesis, 0.0).unwrap();
        for collar in [0.1, 0.25, 0.5, 1.0] {
            let report = compute_der(&reference, &hypothesis, collar).unwrap();
            assert!(report.scored_time <= last.scored_time);
            assert!(report.miss_time <= last.miss_time + 1e-12);
            assert!(report.false_alarm_time <= last.false_alarm_time + 1e-12);
            assert!(report.speaker_error_time <= last.speaker_error_time + 1e-12);
            last = report;
        }
    }

    #[test]
    fn collar_consuming_everything_is_an_error() {
        let reference = list("rec", &[(0.0, 1.0, "A")]);
        let hypothesis = list("rec", &[(0.0, 1.0, "A")]);
        assert!(compute_der(&reference, &hypothesis, 0.6).is_err());
    }

    #[test]
    fn overlapping_turns_are_rejected() {
        let turns = vec![Turn::new(0.0, 5.0, "A"), Turn::new(4.0, 6.0, "B")];
        assert!(TurnList::new("rec", turns).is_err());
        // touching is fine
        let turns = vec![Turn::new(0.0, 5.0, "A"), Turn::new(5.0, 6.0, "B")];
        assert!(TurnList::new("rec", turns).is_ok());
    }

    #[test]
    fn mismatched_recordings_are_rejected() {
        let reference = list("a", &[(0.0, 1.0, "A")]);
        let hypothesis = list("b", &[(0.0, 1.0, "A")]);
        assert!(compute_der(&reference, &hypothesis, 0.0).is_err());
    }

    #[test]
    fn identity_and_swap_mappings() {
        let reference = list("rec", &[(0.0, 5.0, "A"), (5.0, 10.0, "B")]);
        let mapping = map_speakers(&reference, &reference.clone()).unwrap();
        assert_eq!(mapping["A"], "A");
        assert_eq!(mapping["B"], "B");

        let swapped = list("rec", &[(0.0, 5.0, "B"), (5.0, 10.0, "A")]);
        let mapping = map_speakers(&reference, &swapped).unwrap();
        assert_eq!(mapping["B"], "A");
        assert_eq!(mapping["A"], "B");
    }

    #[test]
    fn three_to_two_mapping_matches_brute_force() {
        let reference = list(
            "rec",
            &[(0.0, 4.0, "A"), (4.0, 6.0, "B"), (6.0, 9.0, "C")],
        );
        let hypothesis = list("rec", &[(0.0, 5.0, "x"), (5.0, 9.0, "y")]);
        let mapping = map_speakers(&reference, &hypothesis).unwrap();

        // oracle: enumerate the injective mappings {x,y} → {A,B,C,∅} directly
        let overlap = |r: &str, h: &str| -> f64 {
            let ref_iv: Vec<Interval> = reference
                .turns()
                .iter()
                .filter(|t| t.speaker == r)
                .map(|t| (t.start, t.end))
                .collect();
            let hyp_iv: Vec<Interval> = hypothesis
                .turns()
                .iter()
                .filter(|t| t.speaker == h)
                .map(|t| (t.start, t.end))
                .collect();
            total_length(&intersect(&normalize(ref_iv), &normalize(hyp_iv)))
        };
        let refs = ["A", "B", "C"];
        let mut best_total = f64::NEG_INFINITY;
        let mut best_pairs: Vec<(&str, &str)> = Vec::new();
        for x_choice in [Some(0usize), Some(1), Some(2), None] {
            for y_choice in [Some(0usize), Some(1), Some(2), None] {
                if x_choice.is_some() && x_choice == y_choice {
                    continue;
                }
                let total = x_choice.map_or(0.0, |r| overlap(refs[r], "x"))
                    + y_choice.map_or(0.0, |r| overlap(refs[r], "y"));
                if total > best_total {
                    best_total = total;
                    best_pairs = Vec::new();
                    if let Some(r) = x_choice {
                        best_pairs.push(("x", refs[r]));
                    }
                    if let Some(r) = y_choice {
                        best_pairs.push(("y", refs[r]));
                    }
                }
            }
        }
        let got_total: f64 = mapping.iter().map(|(h, r)| overlap(r, h)).sum();
        assert_eq!(got_total, best_total);
        for (h, r) in best_pairs {
            assert_eq!(mapping[h], r);
        }
    }

    #[test]
    fn der_can_exceed_one_with_rampant_false_alarms() {
        let reference = list("rec", &[(0.0, 1.0, "A")]);
        let hypothesis = list("rec", &[(0.0, 1.0, "A"), (1.0, 5.0, "B")]);
        let report = compute_der(&reference, &hypothesis, 0.0).unwrap();
        assert!(report.der > 1.0);
    }
}
