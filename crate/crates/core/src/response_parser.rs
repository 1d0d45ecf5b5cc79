//! Parsing generative-model responses and resolving quoted spans.
//!
//! Responses are expected to end in three fields, one per line:
//!
//! ```text
//! Verbatim Quote Guest: "..." "..."   (or: None.)
//! Verbatim Quote Host: "..."          (or: None.)
//! Classification: Yes.                (or: No.)
//! ```
//!
//! [`parse_response`] pulls those fields out of free-form text,
//! [`match_quote`] locates a quoted span in its source utterance as word
//! indices, [`resolve`] combines both into a [`Prediction`] or a typed
//! [`ExtractionError`], and [`self_consistency`] majority-votes a batch of
//! responses for the same pair.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::UtterancePair;
use crate::text::{normalize_token, normalized_tokens};

/// Why no prediction could be extracted from a response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// No usable `Classification:` field.
    MissingClassification,
    /// Classified a paraphrase but did not quote both utterances.
    InconsistentHighlighting,
    /// A quoted span does not exist in its source utterance.
    HallucinatedQuote,
    /// No recognizable fields at all.
    Unparseable,
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ErrorKind::MissingClassification => "missing_classification",
            ErrorKind::InconsistentHighlighting => "inconsistent_highlighting",
            ErrorKind::HallucinatedQuote => "hallucinated_quote",
            ErrorKind::Unparseable => "unparseable",
        };
        write!(f, "{name}")
    }
}

/// A typed extraction failure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionError {
    pub kind: ErrorKind,
    pub detail: String,
}

impl ExtractionError {
    pub fn new(kind: ErrorKind, detail: impl Into<String>) -> Self {
        ExtractionError { kind, detail: detail.into() }
    }
}

impl fmt::Display for ExtractionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.detail)
    }
}

/// The three answer fields of one response. The explanation is carried but
/// ignored downstream.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub classification: Option<bool>,
    pub guest_quotes: Vec<String>,
    pub host_quotes: Vec<String>,
    pub explanation: String,
}

impl ParsedResponse {
    /// Renders the response back into the line format [`parse_response`]
    /// reads. Parsing the rendering of a response reproduces it as long as
    /// the quotes themselves contain no double quotes or newlines.
    pub fn render(&self) -> String {
        let quote_field = |quotes: &[String]| {
            if quotes.is_empty() {
                "None.".to_string()
            } else {
                quotes
                    .iter()
                    .map(|q| format!("\"{q}\""))
                    .collect::<Vec<_>>()
                    .join(" ")
            }
        };
        let mut out = String::new();
        out.push_str(&format!("Explanation: {}\n", self.explanation));
        out.push_str(&format!("Verbatim Quote Guest: {}\n", quote_field(&self.guest_quotes)));
        out.push_str(&format!("Verbatim Quote Host: {}\n", quote_field(&self.host_quotes)));
        match self.classification {
            Some(true) => out.push_str("Classification: Yes.\n"),
            Some(false) => out.push_str("Classification: No.\n"),
            None => {}
        }
        out
    }
}

/// A resolved model prediction for one pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub pair_id: String,
    pub label: bool,
    pub guest_words: BTreeSet<usize>,
    pub host_words: BTreeSet<usize>,
}

impl Prediction {
    pub fn negative(pair_id: impl Into<String>) -> Self {
        Prediction {
            pair_id: pair_id.into(),
            label: false,
            guest_words: BTreeSet::new(),
            host_words: BTreeSet::new(),
        }
    }

    pub fn total_matched_tokens(&self) -> usize {
        self.guest_words.len() + self.host_words.len()
    }
}

// ---------------------------------------------------------------------------
// Field parsing
// ---------------------------------------------------------------------------

/// Remainder of `line` after `prefix`, matched case-insensitively against
/// the start of the trimmed line.
fn field_value<'a>(line: &'a str, prefix: &str) -> Option<&'a str> {
    let trimmed = line.trim_start();
    if trimmed.len() >= prefix.len() && trimmed[..prefix.len()].eq_ignore_ascii_case(prefix) {
        Some(trimmed[prefix.len()..].trim())
    } else {
        None
    }
}

/// Splits the text between the first and last double quote into segments,
/// treating `"` + whitespace + `"` as the separator. Inner quotes that are
/// not followed by whitespace and another quote stay part of the segment,
/// so `"I'm like, "X", what is that?"` stays one quote while
/// `"She" "Talked."` splits in two.
fn split_quote_segments(inner: &str) -> Vec<String> {
    let chars: Vec<char> = inner.chars().collect();
    let mut segments = Vec::new();
    let mut current = String::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i] == '"' {
            let mut j = i + 1;
            while j < chars.len() && chars[j].is_whitespace() {
                j += 1;
            }
            if j > i + 1 && j < chars.len() && chars[j] == '"' {
                segments.push(current.trim().to_string());
                current.clear();
                i = j + 1;
                continue;
            }
        }
        current.push(chars[i]);
        i += 1;
    }
    segments.push(current.trim().to_string());
    segments.into_iter().filter(|s| !s.is_empty()).collect()
}

/// Parses one quote field value into a list of quotes.
fn parse_quote_field(value: &str) -> Vec<String> {
    let trimmed = value.trim();
    if trimmed.eq_ignore_ascii_case("none.") || trimmed.eq_ignore_ascii_case("none") {
        return Vec::new();
    }
    let first = trimmed.find('"');
    let last = trimmed.rfind('"');
    match (first, last) {
        (Some(a), Some(b)) if b > a => split_quote_segments(&trimmed[a + 1..b]),
        // No quoted segments: the remainder itself is the quote.
        _ => {
            let bare = trimmed.trim_matches('"').trim();
            if bare.is_empty() {
                Vec::new()
            } else {
                vec![bare.to_string()]
            }
        }
    }
}

/// Extracts the answer fields from a raw model response.
///
/// The last occurrence of each field line wins, so few-shot prompt echoes
/// earlier in the response are ignored. A response without any recognizable
/// field is `unparseable`; one with fields but no usable classification is
/// `missing_classification`.
pub fn parse_response(raw: &str) -> Result<ParsedResponse, ExtractionError> {
    let mut classification_value: Option<&str> = None;
    let mut guest_value: Option<&str> = None;
    let mut host_value: Option<&str> = None;
    let mut explanation: Option<&str> = None;

    for line in raw.lines() {
        if let Some(v) = field_value(line, "classification:") {
            classification_value = Some(v);
        } else if let Some(v) = field_value(line, "verbatim quote guest:") {
            guest_value = Some(v);
        } else if let Some(v) = field_value(line, "verbatim quote host:") {
            host_value = Some(v);
        } else if let Some(v) = field_value(line, "explanation:") {
            explanation = Some(v);
        }
    }

    if classification_value.is_none()
        && guest_value.is_none()
        && host_value.is_none()
        && explanation.is_none()
    {
        return Err(ExtractionError::new(
            ErrorKind::Unparseable,
            "no recognizable fields in response",
        ));
    }

    let classification = match classification_value {
        None => {
            return Err(ExtractionError::new(
                ErrorKind::MissingClassification,
                "no Classification line",
            ))
        }
        Some(v) => {
            let lower = v.trim().trim_start_matches('"').to_lowercase();
            if lower.starts_with("yes") {
                Some(true)
            } else if lower.starts_with("no") {
                Some(false)
            } else {
                return Err(ExtractionError::new(
                    ErrorKind::MissingClassification,
                    format!("unrecognized classification value: {v:?}"),
                ));
            }
        }
    };

    Ok(ParsedResponse {
        classification,
        guest_quotes: guest_value.map(parse_quote_field).unwrap_or_default(),
        host_quotes: host_value.map(parse_quote_field).unwrap_or_default(),
        explanation: explanation.unwrap_or("").to_string(),
    })
}

// ---------------------------------------------------------------------------
// Quote matching
// ---------------------------------------------------------------------------

/// Alignment thresholds for [`match_quote`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchParams {
    /// Skipped source tokens allowed between consecutive matched tokens.
    pub max_gap: usize,
    /// Minimum share of quote tokens that must match.
    pub min_coverage: f64,
}

impl Default for MatchParams {
    fn default() -> Self {
        MatchParams { max_gap: 3, min_coverage: 0.8 }
    }
}

/// Locates `quote` in `source` and returns the matched source word indices
/// (positions in the original whitespace tokenization), or `None`.
///
/// Both sides are lowercased and stripped of punctuation first. An exact
/// contiguous token run is always preferred (leftmost occurrence); failing
/// that, a monotone alignment is searched that matches as many quote
/// tokens as possible, allowing at most `max_gap` skipped source tokens
/// between consecutive matches and requiring coverage of at least
/// `min_coverage` of the quote tokens. Among maximal alignments, earlier
/// quote tokens match at the smallest possible source position.
pub fn match_quote(quote: &str, source: &str, params: &MatchParams) -> Option<BTreeSet<usize>> {
    let source_tokens = normalized_tokens(source);
    let quote_tokens: Vec<String> = quote
        .split_whitespace()
        .map(normalize_token)
        .filter(|t| !t.is_empty())
        .collect();
    if quote_tokens.is_empty() || source_tokens.is_empty() {
        return None;
    }
    let m = source_tokens.len();
    let n = quote_tokens.len();

    // Exact contiguous run, leftmost.
    if n <= m {
        for start in 0..=(m - n) {
            if (0..n).all(|j| source_tokens[start + j] == quote_tokens[j]) {
                return Some((start..start + n).collect());
            }
        }
    }

    // Gapped alignment: best[j][p] = max further matches from quote token j
    // onward when the previous match sat at source position p-1 (p = 0
    // means no match yet).
    let mut best = vec![vec![0u32; m + 1]; n + 1];
    for j in (0..n).rev() {
        for p in 0..=m {
            let skip = best[j + 1][p];
            let mut take = 0u32;
            let (lo, hi) = if p == 0 {
                (0, m)
            } else {
                (p, (p + params.max_gap + 1).min(m))
            };
            for candidate in lo..hi {
                if source_tokens[candidate] == quote_tokens[j] {
                    let value = 1 + best[j + 1][candidate + 1];
                    if value > take {
                        take = value;
                    }
                }
            }
            best[j][p] = skip.max(take);
        }
    }

    let matched = best[0][0];
    if (matched as f64) < params.min_coverage * n as f64 {
        return None;
    }

    // Reconstruct, matching each quote token at the smallest source
    // position that still achieves the optimum; a quote token is skipped
    // only when no match does.
    let mut indices = BTreeSet::new();
    let mut p = 0usize;
    for j in 0..n {
        let target = best[j][p];
        if target == 0 {
            break;
        }
        let (lo, hi) = if p == 0 { (0, m) } else { (p, (p + params.max_gap + 1).min(m)) };
        let candidate = (lo..hi)
            .find(|&c| source_tokens[c] == quote_tokens[j] && 1 + best[j + 1][c + 1] == target);
        match candidate {
            Some(c) => {
                indices.insert(c);
                p = c + 1;
            }
            None => debug_assert_eq!(best[j + 1][p], target),
        }
    }

    debug_assert_eq!(indices.len(), matched as usize);
    Some(indices)
}

// ---------------------------------------------------------------------------
// Resolution
// ---------------------------------------------------------------------------

/// Resolves a parsed response against its pair: quotes are matched into
/// word indices and combined with the classification.
///
/// A `false` classification yields a negative prediction with empty word
/// sets. A `true` classification requires quotes on both sides
/// (`inconsistent_highlighting` otherwise) and every quote to match its
/// source (`hallucinated_quote` otherwise).
pub fn resolve(
    parsed: &ParsedResponse,
    pair: &UtterancePair,
    params: &MatchParams,
) -> Result<Prediction, ExtractionError> {
    let Some(classification) = parsed.classification else {
        return Err(ExtractionError::new(
            ErrorKind::MissingClassification,
            "response carries no classification",
        ));
    };
    if !classification {
        return Ok(Prediction::negative(&pair.pair_id));
    }

    if parsed.guest_quotes.is_empty() || parsed.host_quotes.is_empty() {
        let side = if parsed.guest_quotes.is_empty() { "guest" } else { "host" };
        return Err(ExtractionError::new(
            ErrorKind::InconsistentHighlighting,
            format!("paraphrase classification without {side} quotes"),
        ));
    }

    let match_side = |quotes: &[String], source: &str, side: &str| {
        let mut words = BTreeSet::new();
        for quote in quotes {
            match match_quote(quote, source, params) {
                Some(indices) => words.extend(indices),
                None => {
                    return Err(ExtractionError::new(
                        ErrorKind::HallucinatedQuote,
                        format!("{side} quote not found in utterance: {quote:?}"),
                    ))
                }
            }
        }
        Ok(words)
    };

    let guest_words = match_side(&parsed.guest_quotes, &pair.guest_text, "guest")?;
    let host_words = match_side(&parsed.host_quotes, &pair.host_text, "host")?;

    Ok(Prediction {
        pair_id: pair.pair_id.clone(),
        label: true,
        guest_words,
        host_words,
    })
}

/// Majority vote over several resolutions of the same pair.
///
/// The label is the majority over successfully resolved responses (ties
/// resolve to false); highlights come from the winning-label response with
/// the most matched tokens (ties keep the first). When nothing resolved,
/// the most frequent error kind is returned (ties keep the kind seen
/// first).
pub fn self_consistency(
    outcomes: &[Result<Prediction, ExtractionError>],
) -> Result<Prediction, ExtractionError> {
    if outcomes.is_empty() {
        return Err(ExtractionError::new(ErrorKind::Unparseable, "no responses"));
    }
    let resolved: Vec<&Prediction> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
    if resolved.is_empty() {
        let mut counts: Vec<(ErrorKind, usize)> = Vec::new();
        for error in outcomes.iter().filter_map(|o| o.as_ref().err()) {
            match counts.iter_mut().find(|(k, _)| *k == error.kind) {
                Some((_, c)) => *c += 1,
                None => counts.push((error.kind, 1)),
            }
        }
        let (kind, count) = counts
            .iter()
            .copied()
            .max_by_key(|&(_, c)| c)
            .expect("at least one error when nothing resolved");
        return Err(ExtractionError::new(
            kind,
            format!("{count} of {} responses failed with {kind}", outcomes.len()),
        ));
    }

    let positive = resolved.iter().filter(|p| p.label).count();
    let label = 2 * positive > resolved.len();
    let mut winner: Option<&Prediction> = None;
    for p in resolved.iter().filter(|p| p.label == label) {
        let better = winner
            .map(|w| p.total_matched_tokens() > w.total_matched_tokens())
            .unwrap_or(true);
        if better {
            winner = Some(p);
        }
    }
    Ok(winner.expect("winning label has at least one prediction").clone())
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

    fn set(indices: &[usize]) -> BTreeSet<usize> {
        indices.iter().copied().collect()
    }

    const WORKED_EXAMPLE: &str = "\
Explanation: Let's think step by step.
Terrence Ferguson says at the end of his turn that he didn't know Fortnite.
Quest, the host of the interview, repeats that the guest doesn't know Fortnite.
So they both say that the guest didn't know Fortnite. Therefore, the answer is yes, the host is paraphrasing the guest.
Verbatim Quote Guest: \"I'm like, \"Fortnite\", what is that?  I don't even know what it is\"
Verbatim Quote Host: \"you weren't even familiar?\"
Classification: Yes.
";

    #[test]
    fn parses_worked_example() {
        let parsed = parse_response(WORKED_EXAMPLE).unwrap();
        assert_eq!(parsed.classification, Some(true));
        assert_eq!(parsed.guest_quotes.len(), 1);
        assert_eq!(
            parsed.guest_quotes[0],
            "I'm like, \"Fortnite\", what is that?  I don't even know what it is"
        );
        assert_eq!(parsed.host_quotes, vec!["you weren't even familiar?"]);
        assert!(parsed.explanation.starts_with("Let's think"));
    }

    #[test]
    fn parses_negative_response_with_none_fields() {
        let raw = "Explanation: ...\nVerbatim Quote Guest: None.\nVerbatim Quote Host: None.\nClassification: No.\n";
        let parsed = parse_response(raw).unwrap();
        assert_eq!(parsed.classification, Some(false));
        assert!(parsed.guest_quotes.is_empty());
        assert!(parsed.host_quotes.is_empty());
    }

    #[test]
    fn splits_multiple_quote_segments() {
        let raw = "Verbatim Quote Guest: \"She\" \"Talked about family life.\" \"errands they need to run and things like that.\"\nVerbatim Quote Host: \"she talked\"\nClassification: Yes.";
        let parsed = parse_response(raw).unwrap();
        assert_eq!(
            parsed.guest_quotes,
            vec![
                "She",
                "Talked about family life.",
                "errands they need to run and things like that."
            ]
        );
    }

    #[test]
    fn free_text_is_unparseable() {
        let err = parse_response("the model rambled about something else entirely").unwrap_err();
        assert_eq!(err.kind, ErrorKind::Unparseable);
    }

    #[test]
    fn quote_lines_without_classification_are_missing_classification() {
        let raw = "Verbatim Quote Guest: \"a b c\"\nVerbatim Quote Host: \"d\"\n";
        let err = parse_response(raw).unwrap_err();
        assert_eq!(err.kind, ErrorKind::MissingClassification);
        let raw = "Explanation: maybe\nClassification: Perhaps.\n";
        let err = parse_response(raw).unwrap_err();
        assert_eq!(err.kind, ErrorKind::MissingClassification);
    }

    #[test]
    fn last_field_occurrence_wins() {
        let raw = "Classification: No.\nsome text\nClassification: Yes.\nVerbatim Quote Guest: \"x y z\"\nVerbatim Quote Host: \"w\"";
        let parsed = parse_response(raw).unwrap();
        assert_eq!(parsed.classification, Some(true));
    }

    #[test]
    fn unquoted_remainder_is_a_single_quote() {
        let raw = "Verbatim Quote Guest: plain words without quote marks\nVerbatim Quote Host: None.\nClassification: Yes.";
        let parsed = parse_response(raw).unwrap();
        assert_eq!(parsed.guest_quotes, vec!["plain words without quote marks"]);
    }

    #[test]
    fn render_parse_round_trip() {
        let original = ParsedResponse {
            classification: Some(true),
            guest_quotes: vec!["first quote".into(), "second one.".into()],
            host_quotes: vec!["a reply".into()],
            explanation: "because the host repeats it".into(),
        };
        let reparsed = parse_response(&original.render()).unwrap();
        assert_eq!(reparsed, original);

        let negative = ParsedResponse {
            classification: Some(false),
            guest_quotes: vec![],
            host_quotes: vec![],
            explanation: "no overlap".into(),
        };
        assert_eq!(parse_response(&negative.render()).unwrap(), negative);
    }

    #[test]
    fn match_finds_exact_span() {
        // "you weren't even familiar?" in "So you weren't even familiar?"
        let got = match_quote(
            "you weren't even familiar?",
            "So you weren't even familiar?",
            &MatchParams::default(),
        );
        assert_eq!(got, Some(set(&[1, 2, 3, 4])));
    }

    #[test]
    fn match_bridges_dropped_token() {
        // The model dropped "daryn" from the source span.
        let source = "we are coming back daryn to a normal winter pattern";
        let got = match_quote("coming back to a normal winter", source, &MatchParams::default());
        assert_eq!(got, Some(set(&[2, 3, 5, 6, 7, 8])));
    }

    #[test]
    fn match_rejects_unrelated_quote() {
        let got = match_quote(
            "completely different words",
            "So you weren't even familiar?",
            &MatchParams::default(),
        );
        assert_eq!(got, None);
    }

    #[test]
    fn match_prefers_exact_over_earlier_gapped() {
        // A gapped occurrence starts at 0, an exact run starts at 5.
        let source = "alpha beta gap gamma x alpha beta gamma";
        let got = match_quote("alpha beta gamma", source, &MatchParams::default());
        assert_eq!(got, Some(set(&[5, 6, 7])));
    }

    #[test]
    fn match_is_leftmost_for_exact_runs() {
        let source = "a b c x a b c";
        let got = match_quote("a b c", source, &MatchParams::default());
        assert_eq!(got, Some(set(&[0, 1, 2])));
    }

    #[test]
    fn match_respects_gap_budget() {
        let params = MatchParams { max_gap: 3, min_coverage: 0.8 };
        // Gap of 4 between "start" and "end" exceeds the budget and the
        // leftover coverage (1 of 2 tokens) misses 0.8.
        let got = match_quote("start end", "start w w w w end", &params);
        assert_eq!(got, None);
        let relaxed = MatchParams { max_gap: 4, min_coverage: 0.8 };
        assert_eq!(
            match_quote("start end", "start w w w w end", &relaxed),
            Some(set(&[0, 5]))
        );
    }

    #[test]
    fn match_coverage_threshold_applies() {
        let params = MatchParams { max_gap: 3, min_coverage: 0.8 };
        // 3 of 5 quote tokens present: coverage 0.6 < 0.8.
        assert_eq!(match_quote("one two three four five", "one two three", &params), None);
        let lenient = MatchParams { max_gap: 3, min_coverage: 0.5 };
        assert_eq!(
            match_quote("one two three four five", "one two three", &lenient),
            Some(set(&[0, 1, 2]))
        );
    }

    #[test]
    fn match_ignores_punctuation_and_case() {
        let got = match_quote(
            "he's counterpuncher",
            "Look, he's a counterpuncher. Really.",
            &MatchParams::default(),
        );
        // "he's" matches token 1, "counterpuncher" matches token 3 ("a" skipped).
        assert_eq!(got, Some(set(&[1, 3])));
    }

    #[test]
    fn match_indices_are_valid_and_increasing() {
        let source = "the quick brown fox jumps over the lazy dog";
        let got = match_quote("quick fox jumps dog", source, &MatchParams { max_gap: 3, min_coverage: 0.5 })
            .unwrap();
        let indices: Vec<usize> = got.iter().copied().collect();
        assert!(indices.windows(2).all(|w| w[0] < w[1]));
        assert!(indices.iter().all(|&i| i < 9));
    }

    #[test]
    fn resolve_worked_example_end_to_end() {
        let guest_text = "I guess it was season 5 when they premiered it in the game. A bunch of DMs, a bunch of Twitter requests, e-mails, everything was like, you, your game is in the dance, you need to sue, \"Fortnite\" stole it. Even like big artists, major artists like Joe Buttons and stuff, they have their own like show, daily struggle, they say, you, you must sue \"Fortnite\", and I'm like, \"Fortnite\", what is that? I don't even know what it is --";
        let host_text = "So you weren't even familiar?";
        let p = pair("CNN-42-7", guest_text, host_text);
        let parsed = parse_response(WORKED_EXAMPLE).unwrap();
        let prediction = resolve(&parsed, &p, &MatchParams::default()).unwrap();
        assert!(prediction.label);
        assert!(!prediction.guest_words.is_empty());
        assert_eq!(prediction.host_words, set(&[1, 2, 3, 4]));
    }

    #[test]
    fn resolve_negative_classification() {
        let parsed = ParsedResponse {
            classification: Some(false),
            ..ParsedResponse::default()
        };
        let p = pair("X-1", "a b c", "d e f");
        let prediction = resolve(&parsed, &p, &MatchParams::default()).unwrap();
        assert!(!prediction.label);
        assert!(prediction.guest_words.is_empty());
    }

    #[test]
    fn resolve_flags_inconsistent_highlighting() {
        let parsed = ParsedResponse {
            classification: Some(true),
            guest_quotes: vec!["a b".into()],
            host_quotes: vec![],
            explanation: String::new(),
        };
        let p = pair("X-1", "a b c", "d e f");
        let err = resolve(&parsed, &p, &MatchParams::default()).unwrap_err();
        assert_eq!(err.kind, ErrorKind::InconsistentHighlighting);
    }

    #[test]
    fn resolve_flags_hallucinated_quote() {
        let parsed = ParsedResponse {
            classification: Some(true),
            guest_quotes: vec!["completely absent words".into()],
            host_quotes: vec!["d e".into()],
            explanation: String::new(),
        };
        let p = pair("X-1", "a b c", "d e f");
        let err = resolve(&parsed, &p, &MatchParams::default()).unwrap_err();
        assert_eq!(err.kind, ErrorKind::HallucinatedQuote);
        assert!(err.detail.contains("guest"));
    }

    #[test]
    fn resolve_never_returns_true_with_empty_side() {
        let parsed = ParsedResponse {
            classification: Some(true),
            guest_quotes: vec!["a b".into()],
            host_quotes: vec!["d e".into()],
            explanation: String::new(),
        };
        let p = pair("X-1", "a b c", "d e f");
        let prediction = resolve(&parsed, &p, &MatchParams::default()).unwrap();
        assert!(prediction.label);
        assert!(!prediction.guest_words.is_empty());
        assert!(!prediction.host_words.is_empty());
    }

    fn prediction(label: bool, guest: &[usize], host: &[usize]) -> Prediction {
        Prediction {
            pair_id: "X-1".into(),
            label,
            guest_words: set(guest),
            host_words: set(host),
        }
    }

    #[test]
    fn self_consistency_majority_vote() {
        let outcomes = vec![
            Ok(prediction(true, &[0], &[0])),
            Ok(prediction(true, &[0, 1], &[0])),
            Ok(prediction(false, &[], &[])),
        ];
        let result = self_consistency(&outcomes).unwrap();
        assert!(result.label);
        // Winner is the truest response with the most matched tokens.
        assert_eq!(result.guest_words, set(&[0, 1]));
    }

    #[test]
    fn self_consistency_tie_resolves_to_false() {
        let outcomes = vec![
            Ok(prediction(true, &[0], &[0])),
            Ok(prediction(false, &[], &[])),
        ];
        let result = self_consistency(&outcomes).unwrap();
        assert!(!result.label);
    }

    #[test]
    fn self_consistency_all_errors_returns_most_frequent_kind() {
        let outcomes: Vec<Result<Prediction, ExtractionError>> = vec![
            Err(ExtractionError::new(ErrorKind::Unparseable, "x")),
            Err(ExtractionError::new(ErrorKind::HallucinatedQuote, "y")),
            Err(ExtractionError::new(ErrorKind::Unparseable, "z")),
        ];
        let err = self_consistency(&outcomes).unwrap_err();
        assert_eq!(err.kind, ErrorKind::Unparseable);
    }

    #[test]
    fn self_consistency_errors_do_not_outvote_resolutions() {
        let outcomes = vec![
            Err(ExtractionError::new(ErrorKind::Unparseable, "x")),
            Err(ExtractionError::new(ErrorKind::Unparseable, "y")),
            Ok(prediction(true, &[2], &[3])),
        ];
        let result = self_consistency(&outcomes).unwrap();
        assert!(result.label);
    }

    #[test]
    fn self_consistency_ties_keep_first_winner() {
        let first = prediction(true, &[0, 1], &[0]);
        let second = prediction(true, &[5, 6], &[7]);
        let outcomes = vec![Ok(first.clone()), Ok(second)];
        let result = self_consistency(&outcomes).unwrap();
        assert_eq!(result, first);
    }
}
