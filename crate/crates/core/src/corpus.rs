//! Transcript ingestion and (guest, host) pair extraction.
//!
//! Transcripts arrive as line-oriented JSON records in the MediaSum layout
//! (`{id, program, date, summary, utt: [...], speaker: [...]}`). This module
//! canonicalizes speaker labels, keeps usable two-person interviews, trims
//! opening and closing exchanges, and emits adjacent (guest, host) utterance
//! pairs with stable ids. It also provides seeded sampling of consecutive
//! pair windows and a seeded train/dev/test split.
//!
//! All operations are pure functions of their inputs and the seed.

use std::collections::{BTreeMap, HashSet};

use chrono::NaiveDate;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{item_rng, run_rng};
use crate::text::word_count;

/// Word-count bounds applied to both sides of an emitted pair (inclusive).
pub const MIN_WORDS: usize = 3;
/// Upper word-count bound (inclusive).
pub const MAX_WORDS: usize = 200;

/// Broadcast network an interview came from, derived from the interview id
/// prefix with the record's program string as a fallback.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Program {
    #[serde(rename = "NPR")]
    Npr,
    #[serde(rename = "CNN")]
    Cnn,
    #[serde(rename = "OTHER")]
    Other,
}

/// One turn of an interview: an index into the interview's speaker labels
/// plus the uttered text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker_index: usize,
    pub text: String,
}

/// One transcript: ordered speaker labels plus ordered turns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interview {
    pub interview_id: String,
    pub program: Program,
    pub date: Option<NaiveDate>,
    pub summary: String,
    /// Distinct speaker labels in order of first appearance.
    pub speaker_labels: Vec<String>,
    pub turns: Vec<Turn>,
}

/// A (guest, host) adjacent turn pair, the unit of annotation.
///
/// `pair_id` is `<interview_id>-<guest_turn_index>` where the index is the
/// position of the start of the guest turn in the original turn list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtterancePair {
    pub pair_id: String,
    pub interview_id: String,
    pub guest_turn_index: usize,
    pub guest_speaker: String,
    pub host_speaker: String,
    pub guest_text: String,
    pub host_text: String,
    pub summary: String,
    pub date: Option<NaiveDate>,
}

impl UtterancePair {
    /// Builds the stable pair id for an interview and guest turn index.
    pub fn make_id(interview_id: &str, guest_turn_index: usize) -> String {
        format!("{interview_id}-{guest_turn_index}")
    }

    /// Splits a pair id back into `(interview_id, guest_turn_index)`.
    ///
    /// Interview ids contain dashes themselves (`NPR-4`), so the split
    /// happens at the last dash.
    pub fn parse_id(pair_id: &str) -> Result<(&str, usize)> {
        let (interview, index) = pair_id
            .rsplit_once('-')
            .ok_or_else(|| Error::invalid(format!("malformed pair id: {pair_id:?}")))?;
        if interview.is_empty() {
            return Err(Error::invalid(format!("malformed pair id: {pair_id:?}")));
        }
        let index = index
            .parse::<usize>()
            .map_err(|_| Error::invalid(format!("malformed pair id: {pair_id:?}")))?;
        Ok((interview, index))
    }
}

// ---------------------------------------------------------------------------
// Transcript records (MediaSum layout)
// ---------------------------------------------------------------------------

/// Raw transcript record as found in the input file. Unknown fields (url,
/// title, ...) are ignored.
#[derive(Debug, Clone, Deserialize)]
pub struct TranscriptRecord {
    pub id: String,
    #[serde(default)]
    pub program: Option<String>,
    #[serde(default)]
    pub date: Option<String>,
    #[serde(default)]
    pub summary: String,
    pub utt: Vec<String>,
    pub speaker: Vec<String>,
}

impl TranscriptRecord {
    /// Converts the parallel `utt`/`speaker` arrays into an [`Interview`].
    ///
    /// Dates that do not lead with `YYYY-MM-DD` are dropped rather than
    /// rejected; the date is optional context only.
    pub fn into_interview(self) -> Result<Interview> {
        if self.utt.is_empty() {
            return Err(Error::invalid(format!("interview {} has no turns", self.id)));
        }
        if self.utt.len() != self.speaker.len() {
            return Err(Error::invalid(format!(
                "interview {}: {} utterances but {} speakers",
                self.id,
                self.utt.len(),
                self.speaker.len()
            )));
        }
        let program = classify_program(&self.id, self.program.as_deref());
        let date = self.date.as_deref().and_then(parse_date);

        let mut speaker_labels: Vec<String> = Vec::new();
        let mut turns = Vec::with_capacity(self.utt.len());
        for (speaker, text) in self.speaker.into_iter().zip(self.utt) {
            let speaker_index = match speaker_labels.iter().position(|s| *s == speaker) {
                Some(i) => i,
                None => {
                    speaker_labels.push(speaker);
                    speaker_labels.len() - 1
                }
            };
            turns.push(Turn { speaker_index, text });
        }
        Ok(Interview {
            interview_id: self.id,
            program,
            date,
            summary: self.summary,
            speaker_labels,
            turns,
        })
    }
}

fn classify_program(id: &str, program: Option<&str>) -> Program {
    let prefix = id.split('-').next().unwrap_or("");
    match prefix.to_ascii_uppercase().as_str() {
        "NPR" => Program::Npr,
        "CNN" => Program::Cnn,
        _ => {
            let p = program.unwrap_or("").to_ascii_uppercase();
            if p.contains("NPR") {
                Program::Npr
            } else if p.contains("CNN") {
                Program::Cnn
            } else {
                Program::Other
            }
        }
    }
}

fn parse_date(raw: &str) -> Option<NaiveDate> {
    let head: String = raw.trim().chars().take(10).collect();
    NaiveDate::parse_from_str(&head, "%Y-%m-%d").ok()
}

// ---------------------------------------------------------------------------
// Speaker canonicalization
// ---------------------------------------------------------------------------

/// Merges speaker labels that refer to the same person.
///
/// Two labels end up with the same canonical label iff one is a
/// case-insensitive substring of the other after trimming, closed
/// transitively. The canonical label of a merged group is its longest
/// member (earliest occurrence breaks length ties), so `"PROFFITT"` and
/// `"STEVE PROFFITT"` both map to `"STEVE PROFFITT"`.
pub fn canonicalize_speakers(labels: &[String]) -> BTreeMap<String, String> {
    let trimmed_lower: Vec<String> = labels
        .iter()
        .map(|l| l.trim().to_lowercase())
        .collect();

    // Union-find over label positions.
    let mut parent: Vec<usize> = (0..labels.len()).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    for i in 0..labels.len() {
        for j in (i + 1)..labels.len() {
            let (a, b) = (&trimmed_lower[i], &trimmed_lower[j]);
            if a.contains(b.as_str()) || b.contains(a.as_str()) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[rj] = ri;
                }
            }
        }
    }

    // Longest trimmed member wins; first occurrence breaks ties.
    let mut canonical_of_root: BTreeMap<usize, usize> = BTreeMap::new();
    for i in 0..labels.len() {
        let root = find(&mut parent, i);
        let best = canonical_of_root.entry(root).or_insert(i);
        let len = |k: usize| labels[k].trim().chars().count();
        if len(i) > len(*best) {
            *best = i;
        }
    }

    let mut mapping = BTreeMap::new();
    for i in 0..labels.len() {
        let root = find(&mut parent, i);
        mapping.insert(labels[i].clone(), labels[canonical_of_root[&root]].clone());
    }
    mapping
}

/// Rewrites an interview onto its canonical speaker labels.
///
/// Turn boundaries are untouched; only the label list and turn indices
/// change. Canonical labels are ordered by their first turn.
pub fn canonicalize_interview(interview: &Interview) -> Interview {
    let mapping = canonicalize_speakers(&interview.speaker_labels);
    let canonical_of_old: Vec<&String> = interview
        .speaker_labels
        .iter()
        .map(|l| &mapping[l])
        .collect();

    // Order canonical labels by first appearance in the turn sequence so
    // "first speaker" means the speaker of the first turn.
    let mut canonical_labels: Vec<String> = Vec::new();
    for turn in &interview.turns {
        let canonical = canonical_of_old[turn.speaker_index];
        if !canonical_labels.iter().any(|c| c == canonical) {
            canonical_labels.push(canonical.clone());
        }
    }
    for canonical in &canonical_of_old {
        if !canonical_labels.iter().any(|c| c == *canonical) {
            canonical_labels.push((*canonical).clone());
        }
    }

    Interview {
        interview_id: interview.interview_id.clone(),
        program: interview.program,
        date: interview.date,
        summary: interview.summary.clone(),
        turns: interview
            .turns
            .iter()
            .map(|t| Turn {
                speaker_index: canonical_labels
                    .iter()
                    .position(|c| c == canonical_of_old[t.speaker_index])
                    .expect("canonical label registered above"),
                text: t.text.clone(),
            })
            .collect(),
        speaker_labels: canonical_labels,
    }
}

// ---------------------------------------------------------------------------
// Two-person filter
// ---------------------------------------------------------------------------

/// Keeps canonical two-person interviews whose first speaker can be taken
/// as the host.
///
/// Interviews are dropped when they have more or fewer than two canonical
/// speakers, or when the second speaker's label contains "host" or
/// "anchor" (case-insensitive), which contradicts the host-first
/// assumption.
pub fn filter_two_person(interviews: Vec<Interview>) -> Vec<Interview> {
    interviews
        .into_iter()
        .filter(|iv| {
            if iv.speaker_labels.len() != 2 {
                return false;
            }
            let second = iv.speaker_labels[1].to_lowercase();
            !(second.contains("host") || second.contains("anchor"))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Pair extraction
// ---------------------------------------------------------------------------

/// Extracts annotatable (guest, host) pairs from a canonical two-person
/// interview.
///
/// Consecutive turns by the same speaker are concatenated with a single
/// space first; a merged turn keeps the original index of its first turn,
/// which is what pair ids refer to. Interviews with fewer than five merged
/// turns produce nothing. Of the remaining adjacent (guest turn, following
/// host turn) pairs, the first two and last two are removed, and pairs
/// where either side has fewer than three or more than 200 whitespace
/// words are discarded.
pub fn extract_pairs(interview: &Interview) -> Vec<UtterancePair> {
    if interview.speaker_labels.len() != 2 {
        return Vec::new();
    }
    let host_index = 0;

    // Merge consecutive same-speaker turns, remembering where each merged
    // turn started in the original list.
    struct Merged {
        speaker_index: usize,
        start: usize,
        text: String,
    }
    let mut merged: Vec<Merged> = Vec::new();
    for (i, turn) in interview.turns.iter().enumerate() {
        match merged.last_mut() {
            Some(last) if last.speaker_index == turn.speaker_index => {
                last.text.push(' ');
                last.text.push_str(turn.text.trim());
            }
            _ => merged.push(Merged {
                speaker_index: turn.speaker_index,
                start: i,
                text: turn.text.trim().to_string(),
            }),
        }
    }

    if merged.len() < 5 {
        return Vec::new();
    }

    // All adjacent (guest, host) candidates in turn order.
    let mut candidates: Vec<(usize, &Merged, &Merged)> = Vec::new();
    for w in merged.windows(2) {
        let (guest, host) = (&w[0], &w[1]);
        if guest.speaker_index != host_index && host.speaker_index == host_index {
            candidates.push((guest.start, guest, host));
        }
    }

    // Trim welcoming and goodbye exchanges: first two and last two pairs.
    if candidates.len() <= 4 {
        return Vec::new();
    }
    let kept = &candidates[2..candidates.len() - 2];

    kept.iter()
        .filter(|(_, guest, host)| {
            let g = word_count(&guest.text);
            let h = word_count(&host.text);
            (MIN_WORDS..=MAX_WORDS).contains(&g) && (MIN_WORDS..=MAX_WORDS).contains(&h)
        })
        .map(|(start, guest, host)| UtterancePair {
            pair_id: UtterancePair::make_id(&interview.interview_id, *start),
            interview_id: interview.interview_id.clone(),
            guest_turn_index: *start,
            guest_speaker: interview.speaker_labels[1].clone(),
            host_speaker: interview.speaker_labels[0].clone(),
            guest_text: guest.text.clone(),
            host_text: host.text.clone(),
            summary: interview.summary.clone(),
            date: interview.date,
        })
        .collect()
}

/// Full preprocessing pass: canonicalize, filter to two-person interviews,
/// extract pairs. Returns the number of kept interviews and their pairs.
pub fn preprocess(interviews: Vec<Interview>) -> Result<(usize, Vec<UtterancePair>)> {
    let mut seen_ids = HashSet::new();
    for iv in &interviews {
        if !seen_ids.insert(iv.interview_id.clone()) {
            return Err(Error::invalid(format!(
                "duplicate interview id: {}",
                iv.interview_id
            )));
        }
    }
    let canonical: Vec<Interview> = interviews.iter().map(canonicalize_interview).collect();
    let kept = filter_two_person(canonical);
    let n_kept = kept.len();
    use rayon::prelude::*;
    let pairs: Vec<UtterancePair> = kept
        .par_iter()
        .map(extract_pairs)
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    Ok((n_kept, pairs))
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// Uniformly samples interviews without replacement, then takes at most
/// `max_consecutive` consecutive pairs from each sampled interview.
///
/// Interview selection and window placement each draw from a stream
/// derived from `(seed, interview_id)`, so the result is independent of
/// input order and scheduling. When an interview holds more than
/// `max_consecutive` pairs, a uniformly placed window of exactly
/// `max_consecutive` consecutive pairs is taken. Output pairs keep their
/// input order.
pub fn sample_pairs(
    pairs: &[UtterancePair],
    n_interviews: usize,
    max_consecutive: usize,
    seed: u64,
) -> Result<Vec<UtterancePair>> {
    if max_consecutive == 0 {
        return Err(Error::invalid("max_consecutive must be at least 1"));
    }

    // Group by interview, preserving first-appearance order.
    let mut order: Vec<&str> = Vec::new();
    let mut by_interview: BTreeMap<&str, Vec<&UtterancePair>> = BTreeMap::new();
    for pair in pairs {
        let entry = by_interview.entry(&pair.interview_id).or_default();
        if entry.is_empty() {
            order.push(&pair.interview_id);
        }
        entry.push(pair);
    }

    let n_take = if n_interviews > order.len() {
        log::warn!(
            "requested {n_interviews} interviews but only {} available; taking all",
            order.len()
        );
        order.len()
    } else {
        n_interviews
    };

    // Uniform subset without replacement: random key per interview, keep
    // the n smallest.
    let mut keyed: Vec<(u64, &str)> = order
        .iter()
        .map(|id| (item_rng(seed, "sample-select", id).random::<u64>(), *id))
        .collect();
    keyed.sort_unstable();
    let selected: HashSet<&str> = keyed.iter().take(n_take).map(|(_, id)| *id).collect();

    let mut out = Vec::new();
    for id in order {
        if !selected.contains(id) {
            continue;
        }
        let group = &by_interview[id];
        if group.len() <= max_consecutive {
            out.extend(group.iter().map(|p| (*p).clone()));
        } else {
            let mut rng = item_rng(seed, "sample-window", id);
            let start = rng.random_range(0..=group.len() - max_consecutive);
            out.extend(
                group[start..start + max_consecutive]
                    .iter()
                    .map(|p| (*p).clone()),
            );
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Dataset split
// ---------------------------------------------------------------------------

/// Deterministic train/dev/test partition along unique pairs.
///
/// Dev and test sizes are floored from their ratios; the remainder goes to
/// train. 600 pairs at (0.70, 0.15, 0.15) give 420/90/90.
pub fn split_dataset(
    pairs: &[UtterancePair],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(Vec<UtterancePair>, Vec<UtterancePair>, Vec<UtterancePair>)> {
    let (r_train, r_dev, r_test) = ratios;
    if r_train < 0.0 || r_dev < 0.0 || r_test < 0.0 {
        return Err(Error::invalid("split ratios must be non-negative"));
    }
    if (r_train + r_dev + r_test - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split ratios must sum to 1, got {}",
            r_train + r_dev + r_test
        )));
    }
    if pairs.len() < 3 {
        return Err(Error::invalid(format!(
            "need at least 3 pairs to split, got {}",
            pairs.len()
        )));
    }
    let mut seen = HashSet::new();
    for p in pairs {
        if !seen.insert(p.pair_id.as_str()) {
            return Err(Error::invalid(format!(
                "duplicate pair id in split input: {}",
                p.pair_id
            )));
        }
    }

    let n = pairs.len();
    let n_dev = (n as f64 * r_dev).floor() as usize;
    let n_test = (n as f64 * r_test).floor() as usize;
    let n_train = n - n_dev - n_test;

    let mut indices: Vec<usize> = (0..n).collect();
    use rand::seq::SliceRandom;
    indices.shuffle(&mut run_rng(seed));

    let pick = |slice: &[usize]| -> Vec<UtterancePair> {
        slice.iter().map(|&i| pairs[i].clone()).collect()
    };
    let train = pick(&indices[..n_train]);
    let dev = pick(&indices[n_train..n_train + n_dev]);
    let test = pick(&indices[n_train + n_dev..]);
    Ok((train, dev, test))
}
