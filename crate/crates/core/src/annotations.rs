//! Annotation data model, validation, and majority-vote aggregation.
//!
//! An [`Annotation`] is one rater's binary paraphrase classification for a
//! (guest, host) pair plus word-index highlight sets for both sides. A
//! well-formed annotation highlights both sides exactly when it classifies
//! a paraphrase. [`aggregate`] turns the annotations of each pair into an
//! [`AggregatedPair`]: majority gold label, vote counts, vote entropy, and
//! majority gold highlights.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::UtterancePair;
use crate::error::{Error, Result};
use crate::metrics::entropy_binary;
use crate::text::word_count;

/// Which utterance of a pair a highlight refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Guest,
    Host,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Guest => write!(f, "guest"),
            Side::Host => write!(f, "host"),
        }
    }
}

/// One rater's judgment of one pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub pair_id: String,
    /// Anonymized rater id; opaque.
    pub annotator_id: String,
    pub is_paraphrase: bool,
    /// 0-based indices into the whitespace tokens of the guest utterance.
    pub guest_highlight: BTreeSet<usize>,
    /// 0-based indices into the whitespace tokens of the host utterance.
    pub host_highlight: BTreeSet<usize>,
}

impl Annotation {
    /// Highlight set for one side.
    pub fn highlight(&self, side: Side) -> &BTreeSet<usize> {
        match side {
            Side::Guest => &self.guest_highlight,
            Side::Host => &self.host_highlight,
        }
    }
}

/// Majority-aggregated gold record for one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedPair {
    pub pair_id: String,
    pub n_annotations: usize,
    pub positive_votes: usize,
    pub is_paraphrase: bool,
    /// Entropy of the vote split, in bits.
    pub vote_entropy: f64,
    /// Empty whenever `is_paraphrase` is false.
    pub guest_gold: BTreeSet<usize>,
    pub host_gold: BTreeSet<usize>,
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// Whether validation failures abort or are merely reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValidationMode {
    Strict,
    Lenient,
}

/// A single validation finding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Violation {
    /// A highlight index is not a valid word position.
    OutOfRangeIndex {
        pair_id: String,
        annotator_id: String,
        side: Side,
        index: usize,
        word_count: usize,
    },
    /// A paraphrase vote with an empty highlight on some side.
    EmptyHighlightParaphrase {
        pair_id: String,
        annotator_id: String,
        side: Side,
    },
    /// A non-paraphrase vote that still highlighted words.
    HighlightWithoutParaphrase {
        pair_id: String,
        annotator_id: String,
        side: Side,
    },
    /// The same (pair, annotator) combination appeared more than once.
    DuplicateAnnotation {
        pair_id: String,
        annotator_id: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::OutOfRangeIndex { pair_id, annotator_id, side, index, word_count } => {
                write!(
                    f,
                    "{pair_id}/{annotator_id}: {side} highlight index {index} out of range \
                     (utterance has {word_count} words)"
                )
            }
            Violation::EmptyHighlightParaphrase { pair_id, annotator_id, side } => {
                write!(f, "{pair_id}/{annotator_id}: paraphrase vote with empty {side} highlight")
            }
            Violation::HighlightWithoutParaphrase { pair_id, annotator_id, side } => {
                write!(f, "{pair_id}/{annotator_id}: {side} highlight on a non-paraphrase vote")
            }
            Violation::DuplicateAnnotation { pair_id, annotator_id } => {
                write!(f, "{pair_id}/{annotator_id}: duplicate annotation record")
            }
        }
    }
}

/// Everything [`validate`] found.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    fn render(&self) -> String {
        self.violations
            .iter()
            .map(|v| format!("  - {v}"))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Checks annotations against their pairs.
///
/// Reports out-of-range highlight indices, classification/highlight
/// mismatches in both directions, and duplicate (pair, annotator) records.
/// An annotation referencing an unknown pair id is always a hard error. In
/// strict mode any violation is an error; in lenient mode the report is
/// returned for the caller to surface.
pub fn validate(
    annotations: &[Annotation],
    pairs: &[UtterancePair],
    mode: ValidationMode,
) -> Result<ValidationReport> {
    let word_counts: BTreeMap<&str, (usize, usize)> = pairs
        .iter()
        .map(|p| {
            (
                p.pair_id.as_str(),
                (word_count(&p.guest_text), word_count(&p.host_text)),
            )
        })
        .collect();

    let mut report = ValidationReport::default();
    let mut seen: HashSet<(&str, &str)> = HashSet::new();

    for ann in annotations {
        let &(guest_wc, host_wc) = word_counts
            .get(ann.pair_id.as_str())
            .ok_or_else(|| Error::UnknownPairId(ann.pair_id.clone()))?;

        if !seen.insert((&ann.pair_id, &ann.annotator_id)) {
            report.violations.push(Violation::DuplicateAnnotation {
                pair_id: ann.pair_id.clone(),
                annotator_id: ann.annotator_id.clone(),
            });
        }

        for (side, wc) in [(Side::Guest, guest_wc), (Side::Host, host_wc)] {
            for &index in ann.highlight(side) {
                if index >= wc {
                    report.violations.push(Violation::OutOfRangeIndex {
                        pair_id: ann.pair_id.clone(),
                        annotator_id: ann.annotator_id.clone(),
                        side,
                        index,
                        word_count: wc,
                    });
                }
            }
            if ann.is_paraphrase && ann.highlight(side).is_empty() {
                report.violations.push(Violation::EmptyHighlightParaphrase {
                    pair_id: ann.pair_id.clone(),
                    annotator_id: ann.annotator_id.clone(),
                    side,
                });
            }
            if !ann.is_paraphrase && !ann.highlight(side).is_empty() {
                report.violations.push(Violation::HighlightWithoutParaphrase {
                    pair_id: ann.pair_id.clone(),
                    annotator_id: ann.annotator_id.clone(),
                    side,
                });
            }
        }
    }

    if mode == ValidationMode::Strict && !report.is_clean() {
        return Err(Error::ValidationFailed {
            count: report.violations.len(),
            report: report.render(),
        });
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Majority aggregation
// ---------------------------------------------------------------------------

/// Majority classification: true iff strictly more than half vote true.
/// Exact ties resolve to false. Returns `(label, positive_votes, n)`.
pub fn majority_label(votes: &[bool]) -> Result<(bool, usize, usize)> {
    if votes.is_empty() {
        return Err(Error::invalid("majority_label needs at least one vote"));
    }
    let positive = votes.iter().filter(|v| **v).count();
    Ok((2 * positive > votes.len(), positive, votes.len()))
}

/// Whose highlights count toward the highlight majority.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HighlightDenominator {
    /// Majority over every annotator of the pair, mirroring the
    /// classification rule.
    #[default]
    AllAnnotators,
    /// Majority over only the annotators who classified a paraphrase.
    ParaphraseVoters,
}

/// Word positions highlighted by a strict majority of the pair's raters on
/// one side.
pub fn majority_highlight(
    annotations: &[&Annotation],
    side: Side,
    denominator: HighlightDenominator,
) -> BTreeSet<usize> {
    let voters: Vec<&&Annotation> = match denominator {
        HighlightDenominator::AllAnnotators => annotations.iter().collect(),
        HighlightDenominator::ParaphraseVoters => {
            annotations.iter().filter(|a| a.is_paraphrase).collect()
        }
    };
    let n = voters.len();
    if n == 0 {
        return BTreeSet::new();
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for ann in &voters {
        for &w in ann.highlight(side) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
        .into_iter()
        .filter(|&(_, c)| 2 * c > n)
        .map(|(w, _)| w)
        .collect()
}

/// Options for [`aggregate`].
#[derive(Debug, Clone, Copy, Default)]
pub struct AggregateOptions {
    pub highlight_denominator: HighlightDenominator,
}

/// Aggregates the annotations of each pair into gold labels and highlights.
///
/// One [`AggregatedPair`] is produced per annotated pair, in the order the
/// pairs appear in `pairs`; pairs without annotations are skipped. The
/// classification and highlight majorities are computed independently, so
/// a majority-paraphrase pair can still end up with empty gold highlights.
/// Gold highlights are forced empty when the majority label is false.
pub fn aggregate(
    pairs: &[UtterancePair],
    annotations: &[Annotation],
    options: AggregateOptions,
) -> Result<Vec<AggregatedPair>> {
    let known: HashSet<&str> = pairs.iter().map(|p| p.pair_id.as_str()).collect();
    let mut grouped: BTreeMap<&str, Vec<&Annotation>> = BTreeMap::new();
    let mut seen: HashSet<(&str, &str)> = HashSet::new();
    for ann in annotations {
        if !known.contains(ann.pair_id.as_str()) {
            return Err(Error::UnknownPairId(ann.pair_id.clone()));
        }
        if !seen.insert((&ann.pair_id, &ann.annotator_id)) {
            return Err(Error::invalid(format!(
                "duplicate annotation for pair {} by annotator {}",
                ann.pair_id, ann.annotator_id
            )));
        }
        grouped.entry(&ann.pair_id).or_default().push(ann);
    }

    let mut out = Vec::new();
    for pair in pairs {
        let Some(group) = grouped.get(pair.pair_id.as_str()) else {
            continue;
        };
        let votes: Vec<bool> = group.iter().map(|a| a.is_paraphrase).collect();
        let (is_paraphrase, positive_votes, n_annotations) = majority_label(&votes)?;
        let vote_entropy = entropy_binary(positive_votes, n_annotations)?;
        let (guest_gold, host_gold) = if is_paraphrase {
            (
                majority_highlight(group, Side::Guest, options.highlight_denominator),
                majority_highlight(group, Side::Host, options.highlight_denominator),
            )
        } else {
            (BTreeSet::new(), BTreeSet::new())
        };
        out.push(AggregatedPair {
            pair_id: pair.pair_id.clone(),
            n_annotations,
            positive_votes,
            is_paraphrase,
            vote_entropy,
            guest_gold,
            host_gold,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(id: &str, guest_text: &str, host_text: &str) -> UtterancePair {
        UtterancePair {
            pair_id: id.to_string(),
            interview_id: "X".into(),
            guest_turn_index: 1,
            guest_speaker: "G".into(),
            host_speaker: "H".into(),
            guest_text: guest_text.to_string(),
            host_text: host_text.to_string(),
            summary: String::new(),
            date: None,
        }
    }

    fn ann(
        pair_id: &str,
        annotator_id: &str,
        is_paraphrase: bool,
        guest: &[usize],
        host: &[usize],
    ) -> Annotation {
        Annotation {
            pair_id: pair_id.to_string(),
            annotator_id: annotator_id.to_string(),
            is_paraphrase,
            guest_highlight: guest.iter().copied().collect(),
            host_highlight: host.iter().copied().collect(),
        }
    }

    fn forty_words() -> String {
        (0..40).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn validate_reports_out_of_range_index() {
        let pairs = vec![pair("X-1", &forty_words(), "a b c d e")];
        let anns = vec![ann("X-1", "r1", true, &[999], &[0])];
        let report = validate(&anns, &pairs, ValidationMode::Lenient).unwrap();
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::OutOfRangeIndex { index: 999, word_count: 40, .. })));
        assert!(validate(&anns, &pairs, ValidationMode::Strict).is_err());
    }

    #[test]
    fn validate_reports_duplicates() {
        let pairs = vec![pair("X-1", "a b c", "d e f")];
        let anns = vec![
            ann("X-1", "r1", true, &[0], &[0]),
            ann("X-1", "r1", true, &[1], &[1]),
        ];
        let report = validate(&anns, &pairs, ValidationMode::Lenient).unwrap();
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::DuplicateAnnotation { .. })));
    }

    #[test]
    fn validate_accepts_well_formed_fixture() {
        let pairs = vec![pair("X-1", "a b c", "d e f")];
        let anns = vec![
            ann("X-1", "r1", true, &[0, 2], &[1]),
            ann("X-1", "r2", false, &[], &[]),
        ];
        let report = validate(&anns, &pairs, ValidationMode::Strict).unwrap();
        assert!(report.is_clean());
    }

    #[test]
    fn validate_errors_on_unknown_pair() {
        let pairs = vec![pair("X-1", "a b c", "d e f")];
        let anns = vec![ann("X-9", "r1", false, &[], &[])];
        let err = validate(&anns, &pairs, ValidationMode::Lenient).unwrap_err();
        assert!(err.to_string().contains("X-9"));
    }

    #[test]
    fn validate_flags_highlight_mismatches_both_ways() {
        let pairs = vec![pair("X-1", "a b c", "d e f")];
        let anns = vec![
            ann("X-1", "r1", true, &[], &[0]),
            ann("X-1", "r2", false, &[1], &[]),
        ];
        let report = validate(&anns, &pairs, ValidationMode::Lenient).unwrap();
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::EmptyHighlightParaphrase { side: Side::Guest, .. })));
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::HighlightWithoutParaphrase { side: Side::Guest, .. })));
    }

    #[test]
    fn majority_label_examples() {
        // 9 of 20 is not a majority.
        let votes: Vec<bool> = (0..20).map(|i| i < 9).collect();
        assert_eq!(majority_label(&votes).unwrap(), (false, 9, 20));
        let votes: Vec<bool> = (0..20).map(|i| i < 11).collect();
        assert_eq!(majority_label(&votes).unwrap(), (true, 11, 20));
        // Exact ties resolve to false.
        let votes: Vec<bool> = (0..6).map(|i| i < 3).collect();
        assert_eq!(majority_label(&votes).unwrap(), (false, 3, 6));
        assert!(majority_label(&[]).is_err());
    }

    #[test]
    fn majority_highlight_strict_majority() {
        // 5 annotators: word 0 by all, word 1 by 3, word 2 by 2.
        let anns: Vec<Annotation> = (0..5)
            .map(|i| {
                let mut guest = vec![0usize];
                if i < 3 {
                    guest.push(1);
                }
                if i < 2 {
                    guest.push(2);
                }
                ann("X-1", &format!("r{i}"), true, &guest, &[0])
            })
            .collect();
        let refs: Vec<&Annotation> = anns.iter().collect();
        let gold = majority_highlight(&refs, Side::Guest, HighlightDenominator::AllAnnotators);
        assert_eq!(gold, [0, 1].iter().copied().collect());
    }

    #[test]
    fn majority_highlight_minority_selection_excluded() {
        // Three annotators highlight the core span, one extends it; the
        // extension stays out of the gold highlight.
        let anns = [ann("X-1", "r1", true, &[4, 5], &[0]),
            ann("X-1", "r2", true, &[4, 5], &[0]),
            ann("X-1", "r3", true, &[4, 5, 6, 7], &[0])];
        let refs: Vec<&Annotation> = anns.iter().collect();
        let gold = majority_highlight(&refs, Side::Guest, HighlightDenominator::AllAnnotators);
        assert_eq!(gold, [4, 5].iter().copied().collect());
    }

    #[test]
    fn majority_highlight_denominator_switch() {
        // 2 of 5 classified a paraphrase and both highlighted word 3.
        let anns = [ann("X-1", "r1", true, &[3], &[0]),
            ann("X-1", "r2", true, &[3], &[0]),
            ann("X-1", "r3", false, &[], &[]),
            ann("X-1", "r4", false, &[], &[]),
            ann("X-1", "r5", false, &[], &[])];
        let refs: Vec<&Annotation> = anns.iter().collect();
        let all = majority_highlight(&refs, Side::Guest, HighlightDenominator::AllAnnotators);
        assert!(all.is_empty());
        let voters = majority_highlight(&refs, Side::Guest, HighlightDenominator::ParaphraseVoters);
        assert_eq!(voters, [3].iter().copied().collect());
    }

    #[test]
    fn aggregate_single_annotation_mirrors_it() {
        let pairs = vec![pair("X-1", "a b c d", "e f g h")];
        let anns = vec![ann("X-1", "r1", true, &[1, 2], &[0])];
        let agg = aggregate(&pairs, &anns, AggregateOptions::default()).unwrap();
        assert_eq!(agg.len(), 1);
        let a = &agg[0];
        assert!(a.is_paraphrase);
        assert_eq!((a.positive_votes, a.n_annotations), (1, 1));
        assert_eq!(a.vote_entropy, 0.0);
        assert_eq!(a.guest_gold, [1, 2].iter().copied().collect());
        assert_eq!(a.host_gold, [0].iter().copied().collect());
    }

    #[test]
    fn aggregate_matches_hand_computed_fixture() {
        // Five annotators, 3-2 in favor. Hand aggregation:
        //   label: true (3 > 5/2); entropy: H(3/5) = 0.970950...
        //   guest: word 0 by r1,r2,r3 (3 of 5 -> in), word 1 by r1,r2 (out)
        //   host:  word 2 by r1,r2,r3 (in), word 0 by r3 (out)
        let pairs = vec![pair("X-1", "a b c d", "e f g h")];
        let anns = vec![
            ann("X-1", "r1", true, &[0, 1], &[2]),
            ann("X-1", "r2", true, &[0, 1], &[2]),
            ann("X-1", "r3", true, &[0], &[0, 2]),
            ann("X-1", "r4", false, &[], &[]),
            ann("X-1", "r5", false, &[], &[]),
        ];
        let agg = aggregate(&pairs, &anns, AggregateOptions::default()).unwrap();
        let a = &agg[0];
        assert!(a.is_paraphrase);
        assert_eq!((a.positive_votes, a.n_annotations), (3, 5));
        let expected_entropy = -(0.6f64 * 0.6f64.log2() + 0.4 * 0.4f64.log2());
        assert!((a.vote_entropy - expected_entropy).abs() < 1e-12);
        assert_eq!(a.guest_gold, [0].iter().copied().collect());
        assert_eq!(a.host_gold, [2].iter().copied().collect());
    }

    #[test]
    fn aggregate_forces_empty_gold_on_negative_majority() {
        let pairs = vec![pair("X-1", "a b c d", "e f g h")];
        let anns = vec![
            ann("X-1", "r1", true, &[0], &[0]),
            ann("X-1", "r2", false, &[], &[]),
        ];
        // 1 of 2 is a tie -> false -> gold forced empty even though r1
        // highlighted.
        let agg = aggregate(&pairs, &anns, AggregateOptions::default()).unwrap();
        assert!(!agg[0].is_paraphrase);
        assert!(agg[0].guest_gold.is_empty());
        assert!(agg[0].host_gold.is_empty());
    }

    #[test]
    fn aggregate_positive_label_can_have_empty_gold() {
        // Classification and highlight majorities are independent: three
        // of five vote paraphrase, but no single word reaches a strict
        // majority of the five annotators.
        let pairs = vec![pair("X-1", "a b c d e f", "g h i j")];
        let anns = vec![
            ann("X-1", "r1", true, &[0, 1], &[0]),
            ann("X-1", "r2", true, &[2, 3], &[1]),
            ann("X-1", "r3", true, &[4, 5], &[2]),
            ann("X-1", "r4", false, &[], &[]),
            ann("X-1", "r5", false, &[], &[]),
        ];
        let agg = aggregate(&pairs, &anns, AggregateOptions::default()).unwrap();
        assert!(agg[0].is_paraphrase);
        assert!(agg[0].guest_gold.is_empty());
        assert!(agg[0].host_gold.is_empty());
    }

    #[test]
    fn aggregate_is_permutation_invariant() {
        let pairs = vec![pair("X-1", "a b c d", "e f g h"), pair("X-2", "a b c", "d e f")];
        let mut anns = vec![
            ann("X-1", "r1", true, &[0], &[1]),
            ann("X-1", "r2", true, &[0, 1], &[1]),
            ann("X-1", "r3", false, &[], &[]),
            ann("X-2", "r1", false, &[], &[]),
        ];
        let a = aggregate(&pairs, &anns, AggregateOptions::default()).unwrap();
        anns.reverse();
        let b = aggregate(&pairs, &anns, AggregateOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn aggregate_rejects_duplicates_and_unknown_pairs() {
        let pairs = vec![pair("X-1", "a b c", "d e f")];
        let dup = vec![
            ann("X-1", "r1", true, &[0], &[0]),
            ann("X-1", "r1", false, &[], &[]),
        ];
        assert!(aggregate(&pairs, &dup, AggregateOptions::default()).is_err());
        let unknown = vec![ann("X-2", "r1", false, &[], &[])];
        assert!(aggregate(&pairs, &unknown, AggregateOptions::default()).is_err());
    }
}
