//! Annotator-allocation strategy simulation.
//!
//! Given a recorded pool of labels (a [`LabelMatrix`]), [`simulate`] replays
//! an allocation strategy against each item: raters are consumed in a
//! seeded per-item random order, and the strategy decides when to stop
//! recruiting. The result is scored on cost (average raters consumed) and
//! fidelity (agreement of the simulated majority with the full-pool
//! majority, plus k-rater reliability of the consumed labels).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{entropy_binary, k_rater_reliability_varying, LabelMatrix};
use crate::seed::item_rng;

/// Cap applied to the per-item subset size used for k-rater reliability of
/// consumed labels.
pub const KRR_K_CAP: usize = 7;

/// Default resamples per item for the reliability estimate.
pub const DEFAULT_KRR_RESAMPLES: usize = 200;

/// How many annotators an item receives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AllocationStrategy {
    /// The same number of raters for every item.
    Fixed { n: usize },
    /// Recruit until some label has at least `n` votes, up to `max` raters.
    Agree { n: usize, max: usize },
    /// Recruit `min` raters, then keep recruiting while the binary vote
    /// entropy exceeds `threshold` bits, up to `max` raters.
    Entropy { threshold: f64, min: usize, max: usize },
}

impl AllocationStrategy {
    /// Checks the strategy's own parameter invariants.
    pub fn validate(&self) -> Result<()> {
        match *self {
            AllocationStrategy::Fixed { n } if n >= 1 => Ok(()),
            AllocationStrategy::Fixed { .. } => {
                Err(Error::invalid("fixed strategy needs n >= 1"))
            }
            AllocationStrategy::Agree { n, max } if n >= 1 && n <= max => Ok(()),
            AllocationStrategy::Agree { .. } => {
                Err(Error::invalid("agree strategy needs 1 <= n <= max"))
            }
            AllocationStrategy::Entropy { threshold, min, max }
                if min >= 1 && min <= max && threshold >= 0.0 =>
            {
                Ok(())
            }
            AllocationStrategy::Entropy { .. } => Err(Error::invalid(
                "entropy strategy needs min >= 1, min <= max, threshold >= 0",
            )),
        }
    }

    /// Raters an item must have available before simulation starts.
    fn required(&self) -> usize {
        match *self {
            AllocationStrategy::Fixed { n } => n,
            AllocationStrategy::Agree { n, .. } => n,
            AllocationStrategy::Entropy { min, .. } => min,
        }
    }
}

impl fmt::Display for AllocationStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            AllocationStrategy::Fixed { n } => write!(f, "fixed:{n}"),
            AllocationStrategy::Agree { n, max } => write!(f, "agree:{n}:{max}"),
            AllocationStrategy::Entropy { threshold, min, max } => {
                write!(f, "entropy:{threshold}:{min}:{max}")
            }
        }
    }
}

impl FromStr for AllocationStrategy {
    type Err = Error;

    /// Parses the compact colon syntax: `fixed:20`, `agree:4:15`,
    /// `entropy:0.8:3:15`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::invalid(format!(
            "cannot parse strategy {s:?}; expected fixed:N, agree:N:MAX, or entropy:T:MIN:MAX"
        ));
        let strategy = match parts.as_slice() {
            ["fixed", n] => AllocationStrategy::Fixed { n: n.parse().map_err(|_| bad())? },
            ["agree", n, max] => AllocationStrategy::Agree {
                n: n.parse().map_err(|_| bad())?,
                max: max.parse().map_err(|_| bad())?,
            },
            ["entropy", t, min, max] => AllocationStrategy::Entropy {
                threshold: t.parse().map_err(|_| bad())?,
                min: min.parse().map_err(|_| bad())?,
                max: max.parse().map_err(|_| bad())?,
            },
            _ => return Err(bad()),
        };
        strategy.validate()?;
        Ok(strategy)
    }
}

/// Outcome of replaying one strategy against a pool with one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub avg_annotators: f64,
    /// Share of items whose simulated majority matches the full-pool
    /// majority (ties resolve to negative on both sides).
    pub accuracy_vs_full: f64,
    /// k-rater reliability of the consumed labels, per-item
    /// `k = min(floor(consumed/2), 7)`.
    pub krr: Option<f64>,
    pub per_item_counts: BTreeMap<String, usize>,
}

/// The order in which an item's raters are consumed: a random permutation
/// of the item's rater positions, derived from `(seed, pair_id)`.
///
/// Every strategy consumes a prefix of this permutation.
pub fn consumption_order(seed: u64, pair_id: &str, n_raters: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n_raters).collect();
    let mut rng = item_rng(seed, "allocation-order", pair_id);
    // Fisher-Yates.
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    order
}

/// Number of labels a strategy consumes given the labels in consumption
/// order.
fn consumed_count(strategy: AllocationStrategy, ordered: &[bool]) -> usize {
    let total = ordered.len();
    match strategy {
        AllocationStrategy::Fixed { n } => n.min(total),
        AllocationStrategy::Agree { n, max } => {
            let cap = max.min(total);
            let mut pos = 0usize;
            for (taken, &vote) in ordered[..cap].iter().enumerate() {
                pos += usize::from(vote);
                let neg = taken + 1 - pos;
                if pos >= n || neg >= n {
                    return taken + 1;
                }
            }
            cap
        }
        AllocationStrategy::Entropy { threshold, min, max } => {
            let cap = max.min(total);
            let mut count = min.min(cap);
            let mut pos = ordered[..count].iter().filter(|v| **v).count();
            while count < cap {
                let entropy = entropy_binary(pos, count).expect("count >= 1");
                if entropy <= threshold {
                    break;
                }
                pos += usize::from(ordered[count]);
                count += 1;
            }
            count
        }
    }
}

/// Replays `strategy` against every item of `pool`.
///
/// Raters are consumed as a prefix of [`consumption_order`]. Errors when an
/// item has fewer raters than the strategy's minimum requirement.
pub fn simulate(
    strategy: AllocationStrategy,
    pool: &LabelMatrix,
    seed: u64,
) -> Result<SimulationResult> {
    simulate_with(strategy, pool, seed, DEFAULT_KRR_RESAMPLES)
}

/// [`simulate`] with an explicit resample count for the reliability
/// estimate.
pub fn simulate_with(
    strategy: AllocationStrategy,
    pool: &LabelMatrix,
    seed: u64,
    krr_resamples: usize,
) -> Result<SimulationResult> {
    strategy.validate()?;
    if pool.n_items() == 0 {
        return Err(Error::invalid("allocation pool has no items"));
    }

    use rayon::prelude::*;
    struct ItemOutcome {
        id: String,
        consumed: Vec<bool>,
        matches_full: bool,
    }
    let outcomes: Vec<ItemOutcome> = (0..pool.n_items())
        .into_par_iter()
        .map(|item| {
            let values = pool.item_values(item);
            let id = pool.item_id(item).to_string();
            if values.len() < strategy.required() {
                return Err(Error::StrategyBounds {
                    item: id,
                    required: strategy.required(),
                    available: values.len(),
                });
            }
            let order = consumption_order(seed, &id, values.len());
            let ordered: Vec<bool> = order.iter().map(|&i| values[i]).collect();
            let count = consumed_count(strategy, &ordered);
            let consumed = ordered[..count].to_vec();

            let majority = |votes: &[bool]| {
                2 * votes.iter().filter(|v| **v).count() > votes.len()
            };
            let matches_full = majority(&consumed) == majority(&values);
            Ok(ItemOutcome { id, consumed, matches_full })
        })
        .collect::<Result<Vec<_>>>()?;

    let per_item_counts: BTreeMap<String, usize> = outcomes
        .iter()
        .map(|o| (o.id.clone(), o.consumed.len()))
        .collect();
    let avg_annotators =
        per_item_counts.values().sum::<usize>() as f64 / per_item_counts.len() as f64;
    let accuracy_vs_full =
        outcomes.iter().filter(|o| o.matches_full).count() as f64 / outcomes.len() as f64;
    let krr = k_rater_reliability_varying(
        outcomes.iter().map(|o| (o.id.as_str(), o.consumed.as_slice())),
        krr_resamples,
        seed,
        KRR_K_CAP,
    )?;

    Ok(SimulationResult {
        avg_annotators,
        accuracy_vs_full,
        krr,
        per_item_counts,
    })
}

// ---------------------------------------------------------------------------
// Strategy grids
// ---------------------------------------------------------------------------

/// Admissibility thresholds for strategy rows: maximum average cost,
/// minimum accuracy against the full pool, minimum reliability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityCaps {
    pub cost: f64,
    pub accuracy: f64,
    pub krr: f64,
}

impl Default for AdmissibilityCaps {
    fn default() -> Self {
        AdmissibilityCaps { cost: 8.0, accuracy: 0.90, krr: 0.70 }
    }
}

/// One strategy's scores averaged over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub strategy: AllocationStrategy,
    pub avg_annotators: f64,
    pub accuracy_vs_full: f64,
    /// Mean over the seeds where reliability was defined.
    pub krr: Option<f64>,
    pub admissible: bool,
}

/// Scores every strategy in `grid` against `pool`, averaging over `seeds`.
///
/// A row is admissible when its average cost is at most `caps.cost`, its
/// accuracy at least `caps.accuracy`, and its reliability defined and at
/// least `caps.krr`.
pub fn evaluate_strategies(
    grid: &[AllocationStrategy],
    pool: &LabelMatrix,
    seeds: &[u64],
    caps: AdmissibilityCaps,
    krr_resamples: usize,
) -> Result<Vec<StrategyRow>> {
    if grid.is_empty() {
        return Err(Error::invalid("strategy grid is empty"));
    }
    if seeds.is_empty() {
        return Err(Error::invalid("need at least one seed"));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for &strategy in grid {
        let mut avg = 0.0;
        let mut acc = 0.0;
        let mut krr_sum = 0.0;
        let mut krr_n = 0usize;
        for &seed in seeds {
            let result = simulate_with(strategy, pool, seed, krr_resamples)?;
            avg += result.avg_annotators;
            acc += result.accuracy_vs_full;
            if let Some(k) = result.krr {
                krr_sum += k;
                krr_n += 1;
            }
        }
        let avg_annotators = avg / seeds.len() as f64;
        let accuracy_vs_full = acc / seeds.len() as f64;
        let krr = (krr_n > 0).then(|| krr_sum / krr_n as f64);
        let admissible = avg_annotators <= caps.cost
            && accuracy_vs_full >= caps.accuracy
            && krr.is_some_and(|k| k >= caps.krr);
        rows.push(StrategyRow {
            strategy,
            avg_annotators,
            accuracy_vs_full,
            krr,
            admissible,
        });
    }
    Ok(rows)
}
