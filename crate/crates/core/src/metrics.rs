//! Inter-annotator agreement and reliability statistics.
//!
//! Includes set-overlap Jaccard, Krippendorff's alpha for nominal data with
//! missing values, leave-one-out majority accuracy, per-word unitizing
//! alpha, mean pairwise highlight Jaccard, binary vote entropy (bits), and
//! k-rater reliability. Statistics that have no defined value (for example
//! alpha when only one label value was ever observed) come back as `None`
//! and are serialized as `null`, never silently as 0 or NaN.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::annotations::{Annotation, Side};
use crate::corpus::UtterancePair;
use crate::error::{Error, Result};
use crate::seed::item_rng;
use crate::text::word_count;

// ---------------------------------------------------------------------------
// Label matrix
// ---------------------------------------------------------------------------

/// Items x raters matrix of optional binary labels.
///
/// Built from annotation records; items and raters keep their order of
/// first appearance. Missing cells are raters who did not judge an item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMatrix {
    items: Vec<String>,
    raters: Vec<String>,
    /// Row-major: `cells[item * raters.len() + rater]`.
    cells: Vec<Option<bool>>,
}

impl LabelMatrix {
    /// Builds the matrix from flat annotation records.
    pub fn from_annotations(annotations: &[Annotation]) -> Result<Self> {
        let mut items: Vec<String> = Vec::new();
        let mut raters: Vec<String> = Vec::new();
        let mut item_index: BTreeMap<&str, usize> = BTreeMap::new();
        let mut rater_index: BTreeMap<&str, usize> = BTreeMap::new();
        for ann in annotations {
            if !item_index.contains_key(ann.pair_id.as_str()) {
                item_index.insert(&ann.pair_id, items.len());
                items.push(ann.pair_id.clone());
            }
            if !rater_index.contains_key(ann.annotator_id.as_str()) {
                rater_index.insert(&ann.annotator_id, raters.len());
                raters.push(ann.annotator_id.clone());
            }
        }
        let mut cells = vec![None; items.len() * raters.len()];
        for ann in annotations {
            let i = item_index[ann.pair_id.as_str()];
            let r = rater_index[ann.annotator_id.as_str()];
            let cell = &mut cells[i * raters.len() + r];
            if cell.is_some() {
                return Err(Error::invalid(format!(
                    "duplicate label for item {} by rater {}",
                    ann.pair_id, ann.annotator_id
                )));
            }
            *cell = Some(ann.is_paraphrase);
        }
        Ok(LabelMatrix { items, raters, cells })
    }

    /// Builds a matrix from explicit rows; `cells[i][r]` labels item `i`
    /// by rater `r`. Every item needs at least one label.
    pub fn from_rows(
        items: Vec<String>,
        raters: Vec<String>,
        rows: Vec<Vec<Option<bool>>>,
    ) -> Result<Self> {
        if rows.len() != items.len() || rows.iter().any(|r| r.len() != raters.len()) {
            return Err(Error::invalid("label matrix shape mismatch"));
        }
        if let Some(empty) = rows.iter().position(|r| r.iter().all(|c| c.is_none())) {
            return Err(Error::invalid(format!(
                "item {} has no labels",
                items[empty]
            )));
        }
        let cells = rows.into_iter().flatten().collect();
        Ok(LabelMatrix { items, raters, cells })
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_raters(&self) -> usize {
        self.raters.len()
    }

    pub fn item_id(&self, item: usize) -> &str {
        &self.items[item]
    }

    pub fn cell(&self, item: usize, rater: usize) -> Option<bool> {
        self.cells[item * self.raters.len() + rater]
    }

    /// Non-missing labels of one item, in rater order.
    pub fn item_values(&self, item: usize) -> Vec<bool> {
        (0..self.raters.len())
            .filter_map(|r| self.cell(item, r))
            .collect()
    }

    /// Rater indices with a label on this item, in rater order.
    pub fn item_raters(&self, item: usize) -> Vec<usize> {
        (0..self.raters.len())
            .filter(|&r| self.cell(item, r).is_some())
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Jaccard
// ---------------------------------------------------------------------------

/// Set overlap `|a ∩ b| / |a ∪ b|`; two empty sets count as identical (1.0).
pub fn jaccard(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

// ---------------------------------------------------------------------------
// Binary entropy
// ---------------------------------------------------------------------------

/// Entropy of a binary vote split in bits, with `0·log2(0) = 0`.
pub fn entropy_binary(positive: usize, total: usize) -> Result<f64> {
    if total == 0 {
        return Err(Error::invalid("entropy_binary needs at least one vote"));
    }
    if positive > total {
        return Err(Error::invalid(format!(
            "positive votes {positive} exceed total {total}"
        )));
    }
    let p = positive as f64 / total as f64;
    let term = |x: f64| if x == 0.0 { 0.0 } else { -x * x.log2() };
    Ok(term(p) + term(1.0 - p))
}

// ---------------------------------------------------------------------------
// Krippendorff's alpha (nominal, missing data allowed)
// ---------------------------------------------------------------------------

/// Alpha over an iterator of units, each unit being the labels it received.
/// Units with fewer than two labels are ignored. `None` when expected
/// disagreement is zero (a single observed value) or nothing is pairable.
fn alpha_from_units<I>(units: I) -> Option<f64>
where
    I: IntoIterator<Item = Vec<bool>>,
{
    // Coincidence counts: within each unit every ordered pair of labels
    // from different raters contributes 1/(m-1).
    let mut o_mismatch = 0.0f64;
    let mut n_pos = 0.0f64;
    let mut n_neg = 0.0f64;
    let mut pairable = false;
    for values in units {
        let m = values.len();
        if m < 2 {
            continue;
        }
        pairable = true;
        let pos = values.iter().filter(|v| **v).count();
        let neg = m - pos;
        let w = 1.0 / (m as f64 - 1.0);
        o_mismatch += 2.0 * (pos * neg) as f64 * w;
        n_pos += pos as f64;
        n_neg += neg as f64;
    }
    if !pairable {
        return None;
    }
    let n = n_pos + n_neg;
    let expected = 2.0 * n_pos * n_neg; // sum over c != k of n_c * n_k
    if expected == 0.0 {
        return None;
    }
    Some(1.0 - (n - 1.0) * o_mismatch / expected)
}

/// Krippendorff's alpha for nominal data with missing values, computed
/// from the coincidence matrix.
///
/// Requires at least two items carrying two or more labels. `None` when
/// every pairable label has the same value (zero expected disagreement).
pub fn alpha_nominal(matrix: &LabelMatrix) -> Result<Option<f64>> {
    let pairable_items = (0..matrix.n_items())
        .filter(|&i| matrix.item_values(i).len() >= 2)
        .count();
    if pairable_items < 2 {
        return Err(Error::invalid(format!(
            "alpha_nominal needs at least 2 items with at least 2 labels, found {pairable_items}"
        )));
    }
    Ok(alpha_from_units(
        (0..matrix.n_items()).map(|i| matrix.item_values(i)),
    ))
}

// ---------------------------------------------------------------------------
// Leave-one-out majority accuracy
// ---------------------------------------------------------------------------

/// Mean agreement of each label with the majority of the item's remaining
/// raters. A tie in the leave-one-out majority counts as half a match.
/// Items with a single rater are skipped; `None` if nothing is scorable.
pub fn loo_majority_accuracy(matrix: &LabelMatrix) -> Option<f64> {
    let mut total = 0.0f64;
    let mut count = 0usize;
    for item in 0..matrix.n_items() {
        let values = matrix.item_values(item);
        if values.len() < 2 {
            continue;
        }
        let positives = values.iter().filter(|v| **v).count();
        for &value in &values {
            let rest_pos = positives - usize::from(value);
            let rest_n = values.len() - 1;
            let score = if 2 * rest_pos > rest_n {
                if value { 1.0 } else { 0.0 }
            } else if 2 * rest_pos < rest_n {
                if value { 0.0 } else { 1.0 }
            } else {
                0.5
            };
            total += score;
            count += 1;
        }
    }
    (count > 0).then(|| total / count as f64)
}

// ---------------------------------------------------------------------------
// Highlight agreement
// ---------------------------------------------------------------------------

fn group_by_pair(annotations: &[Annotation]) -> BTreeMap<&str, Vec<&Annotation>> {
    let mut grouped: BTreeMap<&str, Vec<&Annotation>> = BTreeMap::new();
    for ann in annotations {
        grouped.entry(&ann.pair_id).or_default().push(ann);
    }
    grouped
}

fn qualifies(group: &[&Annotation]) -> bool {
    group.iter().filter(|a| a.is_paraphrase).count() >= 2
}

/// Per-word unitizing alpha over highlight agreement.
///
/// Restricted to pairs where at least two annotators classified a
/// paraphrase. Every (pair, word position) becomes one binary unit rated
/// by all of the pair's annotators (highlighted or not); units are pooled
/// across qualifying pairs and nominal alpha is computed over the pool.
/// `None` when no pair qualifies or the pooled labels never vary.
pub fn unitizing_alpha_words(
    pairs: &[UtterancePair],
    annotations: &[Annotation],
    side: Side,
) -> Result<Option<f64>> {
    let word_counts: BTreeMap<&str, usize> = pairs
        .iter()
        .map(|p| {
            let text = match side {
                Side::Guest => &p.guest_text,
                Side::Host => &p.host_text,
            };
            (p.pair_id.as_str(), word_count(text))
        })
        .collect();

    let mut units: Vec<Vec<bool>> = Vec::new();
    for (pair_id, group) in group_by_pair(annotations) {
        if !qualifies(&group) {
            continue;
        }
        let &wc = word_counts
            .get(pair_id)
            .ok_or_else(|| Error::UnknownPairId(pair_id.to_string()))?;
        for w in 0..wc {
            units.push(group.iter().map(|a| a.highlight(side).contains(&w)).collect());
        }
    }
    Ok(alpha_from_units(units))
}

/// How pairwise highlight Jaccard values are combined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JaccardAggregation {
    /// Mean per pair first, then unweighted mean over pairs.
    #[default]
    PerPairMean,
    /// One global mean over every annotator pair of every qualifying pair.
    Pooled,
}

/// Mean pairwise Jaccard between annotator highlights on one side.
///
/// Uses the same qualifying rule as [`unitizing_alpha_words`]; within a
/// pair only annotators with a nonempty highlight on that side are
/// compared. `None` when no qualifying pair has two such annotators.
pub fn mean_pairwise_jaccard(
    annotations: &[Annotation],
    side: Side,
    aggregation: JaccardAggregation,
) -> Option<f64> {
    let mut per_pair_means: Vec<f64> = Vec::new();
    let mut pooled: Vec<f64> = Vec::new();
    for (_, group) in group_by_pair(annotations) {
        if !qualifies(&group) {
            continue;
        }
        let highlighted: Vec<&BTreeSet<usize>> = group
            .iter()
            .map(|a| a.highlight(side))
            .filter(|h| !h.is_empty())
            .collect();
        if highlighted.len() < 2 {
            continue;
        }
        let mut values = Vec::new();
        for i in 0..highlighted.len() {
            for j in (i + 1)..highlighted.len() {
                values.push(jaccard(highlighted[i], highlighted[j]));
            }
        }
        per_pair_means.push(values.iter().sum::<f64>() / values.len() as f64);
        pooled.extend(values);
    }
    let chosen = match aggregation {
        JaccardAggregation::PerPairMean => per_pair_means,
        JaccardAggregation::Pooled => pooled,
    };
    (!chosen.is_empty()).then(|| chosen.iter().sum::<f64>() / chosen.len() as f64)
}

// ---------------------------------------------------------------------------
// k-rater reliability
// ---------------------------------------------------------------------------

/// Agreement share between majority votes of two disjoint k-subsets of an
/// item's labels, estimated over `resamples` draws from `rng`.
///
/// The labels are sorted first: a uniform draw of positions only ever
/// depends on the multiset of labels, and sorting makes the realized
/// estimate invariant to rater order as well.
fn krr_item(values: &[bool], k: usize, resamples: usize, rng: &mut impl rand::Rng) -> f64 {
    let mut values = values.to_vec();
    values.sort_unstable_by(|a, b| b.cmp(a));
    let values = values;
    let mut indices: Vec<usize> = (0..values.len()).collect();
    let mut agreements = 0usize;
    for _ in 0..resamples {
        // Partial Fisher-Yates: the first 2k slots become a uniform draw
        // of 2k distinct labels.
        for slot in 0..(2 * k) {
            let j = rng.random_range(slot..indices.len());
            indices.swap(slot, j);
        }
        let majority = |slice: &[usize]| {
            let pos = slice.iter().filter(|&&i| values[i]).count();
            2 * pos > slice.len() // tie -> negative
        };
        if majority(&indices[0..k]) == majority(&indices[k..2 * k]) {
            agreements += 1;
        }
    }
    agreements as f64 / resamples as f64
}

/// k-rater reliability: how often the majority votes of two disjoint
/// k-rater subsets agree, averaged over items and resamples.
///
/// Items with fewer than `2k` labels are skipped; `None` when no item is
/// usable. Each item draws from its own `(seed, item)` stream, so the
/// estimate is independent of item order.
pub fn k_rater_reliability(
    matrix: &LabelMatrix,
    k: usize,
    resamples: usize,
    seed: u64,
) -> Result<Option<f64>> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if resamples == 0 {
        return Err(Error::invalid("resamples must be at least 1"));
    }
    let mut per_item = Vec::new();
    for item in 0..matrix.n_items() {
        let values = matrix.item_values(item);
        if values.len() < 2 * k {
            continue;
        }
        let mut rng = item_rng(seed, "krr", matrix.item_id(item));
        per_item.push(krr_item(&values, k, resamples, &mut rng));
    }
    Ok((!per_item.is_empty()).then(|| per_item.iter().sum::<f64>() / per_item.len() as f64))
}

/// k-rater reliability with a per-item k for pools where items carry
/// different numbers of labels: `k = min(floor(m/2), k_cap)` for an item
/// with `m` labels. Items with fewer than two labels are skipped.
pub fn k_rater_reliability_varying<'a, I>(
    items: I,
    resamples: usize,
    seed: u64,
    k_cap: usize,
) -> Result<Option<f64>>
where
    I: IntoIterator<Item = (&'a str, &'a [bool])>,
{
    if resamples == 0 {
        return Err(Error::invalid("resamples must be at least 1"));
    }
    if k_cap == 0 {
        return Err(Error::invalid("k_cap must be at least 1"));
    }
    let mut per_item = Vec::new();
    for (item_id, values) in items {
        let k = (values.len() / 2).min(k_cap);
        if k == 0 {
            continue;
        }
        let mut rng = item_rng(seed, "krr", item_id);
        per_item.push(krr_item(values, k, resamples, &mut rng));
    }
    Ok((!per_item.is_empty()).then(|| per_item.iter().sum::<f64>() / per_item.len() as f64))
}

// ---------------------------------------------------------------------------
// Agreement report
// ---------------------------------------------------------------------------

/// Settings for [`agreement_report`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgreementConfig {
    /// Subset size for k-rater reliability.
    pub krr_k: usize,
    /// Resamples per item for k-rater reliability.
    pub krr_resamples: usize,
    pub seed: u64,
    pub jaccard_aggregation: JaccardAggregation,
}

impl Default for AgreementConfig {
    fn default() -> Self {
        AgreementConfig {
            krr_k: 2,
            krr_resamples: 1000,
            seed: 0,
            jaccard_aggregation: JaccardAggregation::default(),
        }
    }
}

/// Agreement statistics for one dataset. Undefined values serialize as
/// `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub n_pairs: usize,
    pub n_annotations: usize,
    pub alpha_nominal: Option<f64>,
    pub loo_accuracy: Option<f64>,
    pub unitizing_alpha_guest: Option<f64>,
    pub unitizing_alpha_host: Option<f64>,
    pub mean_jaccard_guest: Option<f64>,
    pub mean_jaccard_host: Option<f64>,
    pub krr: Option<f64>,
}

/// Computes the full agreement report for one set of annotations.
///
/// Alpha is reported as undefined (rather than erroring) when the dataset
/// is too small to pair labels.
pub fn agreement_report(
    pairs: &[UtterancePair],
    annotations: &[Annotation],
    config: &AgreementConfig,
) -> Result<AgreementReport> {
    let matrix = LabelMatrix::from_annotations(annotations)?;
    let alpha = match alpha_nominal(&matrix) {
        Ok(a) => a,
        Err(Error::InvalidInput(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(AgreementReport {
        n_pairs: matrix.n_items(),
        n_annotations: annotations.len(),
        alpha_nominal: alpha,
        loo_accuracy: loo_majority_accuracy(&matrix),
        unitizing_alpha_guest: unitizing_alpha_words(pairs, annotations, Side::Guest)?,
        unitizing_alpha_host: unitizing_alpha_words(pairs, annotations, Side::Host)?,
        mean_jaccard_guest: mean_pairwise_jaccard(
            annotations,
            Side::Guest,
            config.jaccard_aggregation,
        ),
        mean_jaccard_host: mean_pairwise_jaccard(
            annotations,
            Side::Host,
            config.jaccard_aggregation,
        ),
        krr: k_rater_reliability(&matrix, config.krr_k, config.krr_resamples, config.seed)?,
    })
}
