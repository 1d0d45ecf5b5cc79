//! Scoring predictions against aggregated gold.
//!
//! Predictions arrive either resolved from model responses (see
//! [`crate::response_parser`]) or as per-word token probabilities that are
//! thresholded here. Scores follow the gold majority: classification
//! precision/recall/F1 with paraphrase as the positive class, highlight
//! Jaccard averaged over gold-positive pairs, and the share of items lost
//! to extraction errors.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::annotations::AggregatedPair;
use crate::corpus::UtterancePair;
use crate::error::{Error, Result};
use crate::metrics::jaccard;
use crate::response_parser::{ErrorKind, ExtractionError, Prediction};
use crate::text::word_count;

/// Final outcome for one pair: a resolved prediction or the extraction
/// error that ended it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ItemOutcome {
    Resolved(Prediction),
    Failed { pair_id: String, error: ExtractionError },
}

impl ItemOutcome {
    pub fn pair_id(&self) -> &str {
        match self {
            ItemOutcome::Resolved(p) => &p.pair_id,
            ItemOutcome::Failed { pair_id, .. } => pair_id,
        }
    }

    /// Label used for scoring; failed extractions count as negative.
    pub fn label(&self) -> bool {
        match self {
            ItemOutcome::Resolved(p) => p.label,
            ItemOutcome::Failed { .. } => false,
        }
    }

    /// Word set used for scoring; negatives and failures contribute the
    /// empty set.
    pub fn words(&self, guest: bool) -> BTreeSet<usize> {
        match self {
            ItemOutcome::Resolved(p) if guest => p.guest_words.clone(),
            ItemOutcome::Resolved(p) => p.host_words.clone(),
            ItemOutcome::Failed { .. } => BTreeSet::new(),
        }
    }
}

/// Per-word model probabilities for one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenProbPrediction {
    pub pair_id: String,
    pub guest_probs: Vec<f64>,
    pub host_probs: Vec<f64>,
}

/// Which pairs enter the highlight-Jaccard average.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JaccardDenominator {
    /// Every gold-positive pair; negative or failed predictions contribute
    /// empty sets.
    #[default]
    GoldPositive,
    /// Only pairs where gold and prediction are both positive.
    BothPositive,
}

/// Classification scores with paraphrase as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
}

/// Full evaluation of one system against one gold set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_items: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `null` when no pair enters the Jaccard denominator.
    pub jaccard_guest: Option<f64>,
    pub jaccard_host: Option<f64>,
    /// Share of items whose final outcome is an extraction error.
    pub extraction_error_rate: f64,
}

fn index_outcomes<'a>(
    outcomes: &'a [ItemOutcome],
    gold: &[AggregatedPair],
) -> Result<BTreeMap<&'a str, &'a ItemOutcome>> {
    let mut by_id: BTreeMap<&str, &ItemOutcome> = BTreeMap::new();
    for outcome in outcomes {
        if by_id.insert(outcome.pair_id(), outcome).is_some() {
            return Err(Error::invalid(format!(
                "duplicate prediction for pair {}",
                outcome.pair_id()
            )));
        }
    }
    let missing: Vec<&str> = gold
        .iter()
        .map(|g| g.pair_id.as_str())
        .filter(|id| !by_id.contains_key(id))
        .collect();
    if !missing.is_empty() {
        return Err(Error::invalid(format!(
            "missing predictions for {} gold pair(s): {}",
            missing.len(),
            missing.join(", ")
        )));
    }
    Ok(by_id)
}

/// Precision, recall, and F1 of the predicted classifications.
///
/// Every gold pair needs exactly one outcome; extraction errors score as
/// negative predictions. Both 0/0 ratios resolve to 0, and F1 is 0 when
/// precision and recall are both 0.
pub fn classification_metrics(
    outcomes: &[ItemOutcome],
    gold: &[AggregatedPair],
) -> Result<ClassificationScores> {
    let by_id = index_outcomes(outcomes, gold)?;
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for g in gold {
        let predicted = by_id[g.pair_id.as_str()].label();
        match (predicted, g.is_paraphrase) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(ClassificationScores {
        precision,
        recall,
        f1,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        true_negatives: tn,
    })
}

/// Mean highlight Jaccard per side over the denominator pairs.
pub fn highlight_jaccard(
    outcomes: &[ItemOutcome],
    gold: &[AggregatedPair],
    denominator: JaccardDenominator,
) -> Result<(Option<f64>, Option<f64>)> {
    let by_id = index_outcomes(outcomes, gold)?;
    let mut guest_values = Vec::new();
    let mut host_values = Vec::new();
    for g in gold.iter().filter(|g| g.is_paraphrase) {
        let outcome = by_id[g.pair_id.as_str()];
        if denominator == JaccardDenominator::BothPositive && !outcome.label() {
            continue;
        }
        guest_values.push(jaccard(&outcome.words(true), &g.guest_gold));
        host_values.push(jaccard(&outcome.words(false), &g.host_gold));
    }
    let mean = |values: &[f64]| {
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    };
    Ok((mean(&guest_values), mean(&host_values)))
}

/// Share of items whose final outcome is an extraction error.
pub fn extraction_error_rate(outcomes: &[ItemOutcome]) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::invalid("extraction_error_rate needs at least one item"));
    }
    let errors = outcomes
        .iter()
        .filter(|o| matches!(o, ItemOutcome::Failed { .. }))
        .count();
    Ok(errors as f64 / outcomes.len() as f64)
}

/// Share of items whose extraction error prevented even a classification
/// (`missing_classification` or `unparseable`). Highlight-level errors
/// (hallucinated or inconsistent quotes) do not count here.
pub fn classification_error_rate(outcomes: &[ItemOutcome]) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::invalid("classification_error_rate needs at least one item"));
    }
    let errors = outcomes
        .iter()
        .filter(|o| {
            matches!(
                o,
                ItemOutcome::Failed { error, .. }
                    if matches!(error.kind, ErrorKind::MissingClassification | ErrorKind::Unparseable)
            )
        })
        .count();
    Ok(errors as f64 / outcomes.len() as f64)
}

/// Thresholds token probabilities into a prediction.
///
/// The pair is classified positive iff some guest probability and some
/// host probability reach `tau_cls`; highlight sets are the indices
/// reaching `tau_hl`. `tau_hl` may sit below `tau_cls` to widen the
/// highlights but not above it, which could classify a paraphrase with
/// nothing highlighted.
pub fn threshold_token_probs(
    probs: &TokenProbPrediction,
    pair: &UtterancePair,
    tau_cls: f64,
    tau_hl: f64,
) -> Result<Prediction> {
    if !(tau_cls > 0.0 && tau_cls <= 1.0) || !(tau_hl > 0.0 && tau_hl <= 1.0) {
        return Err(Error::invalid("thresholds must lie in (0, 1]"));
    }
    if tau_hl > tau_cls {
        return Err(Error::invalid(format!(
            "tau_hl ({tau_hl}) must not exceed tau_cls ({tau_cls})"
        )));
    }
    let guest_wc = word_count(&pair.guest_text);
    let host_wc = word_count(&pair.host_text);
    if probs.guest_probs.len() != guest_wc || probs.host_probs.len() != host_wc {
        return Err(Error::invalid(format!(
            "pair {}: probability vectors ({}, {}) do not match word counts ({}, {})",
            probs.pair_id,
            probs.guest_probs.len(),
            probs.host_probs.len(),
            guest_wc,
            host_wc
        )));
    }
    if probs
        .guest_probs
        .iter()
        .chain(&probs.host_probs)
        .any(|p| !(0.0..=1.0).contains(p))
    {
        return Err(Error::invalid(format!(
            "pair {}: probabilities must lie in [0, 1]",
            probs.pair_id
        )));
    }

    let reaches = |values: &[f64], tau: f64| values.iter().any(|&p| p >= tau);
    let label = reaches(&probs.guest_probs, tau_cls) && reaches(&probs.host_probs, tau_cls);
    if !label {
        return Ok(Prediction::negative(&probs.pair_id));
    }
    let pick = |values: &[f64]| -> BTreeSet<usize> {
        values
            .iter()
            .enumerate()
            .filter(|&(_, &p)| p >= tau_hl)
            .map(|(i, _)| i)
            .collect()
    };
    Ok(Prediction {
        pair_id: probs.pair_id.clone(),
        label: true,
        guest_words: pick(&probs.guest_probs),
        host_words: pick(&probs.host_probs),
    })
}

/// Builds the full [`EvalReport`] for one system.
pub fn evaluate(
    outcomes: &[ItemOutcome],
    gold: &[AggregatedPair],
    denominator: JaccardDenominator,
) -> Result<EvalReport> {
    let gold_ids: HashSet<&str> = gold.iter().map(|g| g.pair_id.as_str()).collect();
    if gold_ids.len() != gold.len() {
        return Err(Error::invalid("duplicate pair ids in gold"));
    }
    let scores = classification_metrics(outcomes, gold)?;
    let (jaccard_guest, jaccard_host) = highlight_jaccard(outcomes, gold, denominator)?;
    // Error rate is over the gold items being scored.
    let scored: Vec<&ItemOutcome> = outcomes
        .iter()
        .filter(|o| gold_ids.contains(o.pair_id()))
        .collect();
    let errors = scored
        .iter()
        .filter(|o| matches!(o, ItemOutcome::Failed { .. }))
        .count();
    Ok(EvalReport {
        n_items: gold.len(),
        precision: scores.precision,
        recall: scores.recall,
        f1: scores.f1,
        jaccard_guest,
        jaccard_host,
        extraction_error_rate: errors as f64 / gold.len() as f64,
    })
}

/// Renders reports as a plain-text table with one row per system:
/// extraction-error columns for classification and highlighting, then F1,
/// precision, recall, and the two highlight Jaccard means.
pub fn render_table(rows: &[(String, EvalReport, f64)]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<24} {:>8} {:>6} {:>6} {:>6} {:>8} {:>11} {:>10}\n",
        "Model", "Extract", "F1", "Prec", "Rec", "Extract", "Jacc Guest", "Jacc Host"
    ));
    let fmt_opt = |v: Option<f64>| match v {
        Some(v) => format!("{v:.2}"),
        None => "-".to_string(),
    };
    for (name, report, cls_error_rate) in rows {
        out.push_str(&format!(
            "{:<24} {:>7.0}% {:>6.2} {:>6.2} {:>6.2} {:>7.0}% {:>11} {:>10}\n",
            name,
            cls_error_rate * 100.0,
            report.f1,
            report.precision,
            report.recall,
            report.extraction_error_rate * 100.0,
            fmt_opt(report.jaccard_guest),
            fmt_opt(report.jaccard_host),
        ));
    }
    out
}
