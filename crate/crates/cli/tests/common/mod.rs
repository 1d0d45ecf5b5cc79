//! Shared fixtures and independent oracles for the CLI test suites.
//!
//! The oracles here recompute statistics from the raw record files with
//! straightforward enumeration, on purpose not sharing any code with the
//! library implementations they check.

// Compiled once per test target; each target uses a different subset.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use parapipe::annotations::Annotation;
use parapipe::corpus::UtterancePair;

// ---------------------------------------------------------------------------
// CLI runner
// ---------------------------------------------------------------------------

pub fn cli_binary() -> &'static str {
    env!("CARGO_BIN_EXE_parapipe")
}

/// Runs the CLI in `dir`, asserting success.
pub fn run_cli(dir: &Path, args: &[&str]) -> Output {
    let output = Command::new(cli_binary())
        .args(args)
        .current_dir(dir)
        .env_remove("PARAPIPE_OUT_DIR")
        .output()
        .expect("failed to spawn CLI");
    assert!(
        output.status.success(),
        "parapipe {:?} failed:\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

/// Runs the CLI expecting a failure; returns the exit code.
pub fn run_cli_expect_failure(dir: &Path, args: &[&str]) -> (i32, String) {
    let output = Command::new(cli_binary())
        .args(args)
        .current_dir(dir)
        .env_remove("PARAPIPE_OUT_DIR")
        .output()
        .expect("failed to spawn CLI");
    assert!(!output.status.success(), "parapipe {args:?} unexpectedly succeeded");
    (
        output.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&output.stderr).into_owned(),
    )
}

// ---------------------------------------------------------------------------
// Fixture data
// ---------------------------------------------------------------------------

pub fn words(prefix: &str, n: usize) -> String {
    (0..n).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>().join(" ")
}

pub fn make_pair(interview: &str, index: usize, guest_words: usize, host_words: usize) -> UtterancePair {
    UtterancePair {
        pair_id: format!("{interview}-{index}"),
        interview_id: interview.to_string(),
        guest_turn_index: index,
        guest_speaker: "GUEST".into(),
        host_speaker: "HOST".into(),
        guest_text: words("g", guest_words),
        host_text: words("h", host_words),
        summary: "synthetic interview".into(),
        date: None,
    }
}

fn annotation(
    pair_id: &str,
    annotator: usize,
    is_paraphrase: bool,
    guest_wc: usize,
    host_wc: usize,
    salt: usize,
) -> Annotation {
    // Deterministic, arithmetic highlights: valid indices, nonempty for
    // paraphrase votes, empty otherwise.
    let pick = |wc: usize, k: usize| -> BTreeSet<usize> {
        (0..k).map(|j| (salt + annotator * 3 + j * 2) % wc).collect()
    };
    Annotation {
        pair_id: pair_id.to_string(),
        annotator_id: format!("a{annotator}"),
        is_paraphrase,
        guest_highlight: if is_paraphrase { pick(guest_wc, 3) } else { BTreeSet::new() },
        host_highlight: if is_paraphrase { pick(host_wc, 2) } else { BTreeSet::new() },
    }
}

/// A dataset shaped like the released corpus: three annotation sets over
/// 600 pairs with known aggregate statistics.
///
/// Targets (pairs / majority-paraphrases / mean annotations per pair):
/// BALANCED 100/54/20.1, RANDOM 100/13/5.7, PARA 400/254/7.5,
/// total 600/321/9.3.
pub struct ReleasedShape {
    pub pairs: Vec<UtterancePair>,
    pub sets: Vec<(String, Vec<Annotation>)>,
}

pub fn released_shape_fixture() -> ReleasedShape {
    let mut pairs = Vec::new();
    let mut sets = Vec::new();

    // (set name, interview prefix, per-item annotation counts, positives)
    let balanced_sizes: Vec<usize> = (0..100).map(|i| if i < 10 { 21 } else { 20 }).collect();
    let random_sizes: Vec<usize> = (0..100)
        .map(|i| if i < 80 { 4 } else if i < 95 { 10 } else { 20 })
        .collect();
    let para_sizes: Vec<usize> = (0..400).map(|i| if i % 2 == 0 { 5 } else { 10 }).collect();
    debug_assert_eq!(balanced_sizes.iter().sum::<usize>(), 2010);
    debug_assert_eq!(random_sizes.iter().sum::<usize>(), 570);
    debug_assert_eq!(para_sizes.iter().sum::<usize>(), 3000);

    let plans: Vec<(&str, &str, Vec<usize>, usize)> = vec![
        ("BALANCED", "BAL", balanced_sizes, 54),
        ("RANDOM", "RAN", random_sizes, 13),
        ("PARA", "PAR", para_sizes, 254),
    ];

    for (set_name, prefix, sizes, positives) in plans {
        let mut annotations = Vec::new();
        for (i, &n) in sizes.iter().enumerate() {
            let guest_wc = 8 + (i % 9);
            let host_wc = 5 + (i % 6);
            let interview = format!("{prefix}-{i}");
            let pair = make_pair(&interview, 1, guest_wc, host_wc);
            let pair_id = pair.pair_id.clone();
            pairs.push(pair);

            let positive_item = i < positives;
            let pos_votes = if positive_item {
                // Strict majority, with varied margins.
                (n / 2 + 1 + i % 3).min(n)
            } else {
                // At most a tie, including 9-of-20 style splits.
                (i * 7 % (n / 2 + 1)).min(n / 2)
            };
            for annotator in 0..n {
                annotations.push(annotation(
                    &pair_id,
                    annotator,
                    annotator < pos_votes,
                    guest_wc,
                    host_wc,
                    i,
                ));
            }
        }
        sets.push((set_name.to_string(), annotations));
    }

    ReleasedShape { pairs, sets }
}

pub fn write_jsonl<T: serde::Serialize>(path: &Path, records: &[T]) {
    let mut bytes = Vec::new();
    for r in records {
        serde_json::to_writer(&mut bytes, r).unwrap();
        bytes.push(b'\n');
    }
    std::fs::write(path, bytes).unwrap();
}

/// Writes the released-shape fixture into `dir`; returns
/// (pairs path, [(set name, annotations path)]).
pub fn write_released_shape(dir: &Path) -> (PathBuf, Vec<(String, PathBuf)>) {
    let fixture = released_shape_fixture();
    let pairs_path = dir.join("pairs.jsonl");
    write_jsonl(&pairs_path, &fixture.pairs);
    let mut set_paths = Vec::new();
    for (name, annotations) in &fixture.sets {
        let path = dir.join(format!("annotations_{}.jsonl", name.to_lowercase()));
        write_jsonl(&path, annotations);
        set_paths.push((name.clone(), path));
    }
    (pairs_path, set_paths)
}

// ---------------------------------------------------------------------------
// Independent oracles
// ---------------------------------------------------------------------------

/// Recounts aggregate statistics directly from annotation records:
/// (n pairs, majority-paraphrase count, mean annotations per pair).
pub fn oracle_aggregate_counts(annotations: &[Annotation]) -> (usize, usize, f64) {
    let mut votes: BTreeMap<&str, Vec<bool>> = BTreeMap::new();
    for a in annotations {
        votes.entry(&a.pair_id).or_default().push(a.is_paraphrase);
    }
    let n_pairs = votes.len();
    let positives = votes
        .values()
        .filter(|v| 2 * v.iter().filter(|x| **x).count() > v.len())
        .count();
    let mean = annotations.len() as f64 / n_pairs as f64;
    (n_pairs, positives, mean)
}

/// Definitional Krippendorff alpha over units (vectors of labels):
/// observed disagreement from explicit ordered pairs within units,
/// expected disagreement from explicit ordered pairs over the pooled
/// labels.
pub fn oracle_alpha(units: &[Vec<bool>]) -> Option<f64> {
    let pairable: Vec<&Vec<bool>> = units.iter().filter(|u| u.len() >= 2).collect();
    if pairable.is_empty() {
        return None;
    }
    let pooled: Vec<bool> = pairable.iter().flat_map(|u| u.iter().copied()).collect();
    let n = pooled.len() as f64;

    let mut observed = 0.0;
    for unit in &pairable {
        let m = unit.len();
        let mut disagreeing = 0usize;
        for i in 0..m {
            for j in 0..m {
                if i != j && unit[i] != unit[j] {
                    disagreeing += 1;
                }
            }
        }
        observed += disagreeing as f64 / (m as f64 - 1.0);
    }
    let d_o = observed / n;

    let mut expected_pairs = 0usize;
    for i in 0..pooled.len() {
        for j in 0..pooled.len() {
            if i != j && pooled[i] != pooled[j] {
                expected_pairs += 1;
            }
        }
    }
    let d_e = expected_pairs as f64 / (n * (n - 1.0));
    if d_e == 0.0 {
        return None;
    }
    Some(1.0 - d_o / d_e)
}

/// Classification alpha straight from annotation records.
pub fn oracle_alpha_from_annotations(annotations: &[Annotation]) -> Option<f64> {
    let mut votes: BTreeMap<&str, Vec<bool>> = BTreeMap::new();
    for a in annotations {
        votes.entry(&a.pair_id).or_default().push(a.is_paraphrase);
    }
    let units: Vec<Vec<bool>> = votes.into_values().collect();
    oracle_alpha(&units)
}

/// Leave-one-out majority accuracy straight from annotation records, with
/// ties counting half.
pub fn oracle_loo_from_annotations(annotations: &[Annotation]) -> Option<f64> {
    let mut votes: BTreeMap<&str, Vec<bool>> = BTreeMap::new();
    for a in annotations {
        votes.entry(&a.pair_id).or_default().push(a.is_paraphrase);
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for unit in votes.values() {
        if unit.len() < 2 {
            continue;
        }
        for (leave, &value) in unit.iter().enumerate() {
            let rest_pos = unit
                .iter()
                .enumerate()
                .filter(|&(i, &v)| i != leave && v)
                .count();
            let rest_n = unit.len() - 1;
            total += if 2 * rest_pos > rest_n {
                if value { 1.0 } else { 0.0 }
            } else if 2 * rest_pos < rest_n {
                if value { 0.0 } else { 1.0 }
            } else {
                0.5
            };
            count += 1;
        }
    }
    (count > 0).then(|| total / count as f64)
}

/// Per-word unitizing alpha straight from the records: one unit per
/// (qualifying pair, word position), rated by every annotator of the pair.
pub fn oracle_unitizing_from_annotations(
    pairs: &[UtterancePair],
    annotations: &[Annotation],
    guest: bool,
) -> Option<f64> {
    let word_counts: BTreeMap<&str, usize> = pairs
        .iter()
        .map(|p| {
            let text = if guest { &p.guest_text } else { &p.host_text };
            (p.pair_id.as_str(), text.split_whitespace().count())
        })
        .collect();
    let mut grouped: BTreeMap<&str, Vec<&Annotation>> = BTreeMap::new();
    for a in annotations {
        grouped.entry(&a.pair_id).or_default().push(a);
    }
    let mut units = Vec::new();
    for (pair_id, group) in grouped {
        if group.iter().filter(|a| a.is_paraphrase).count() < 2 {
            continue;
        }
        let wc = word_counts[pair_id];
        for w in 0..wc {
            units.push(
                group
                    .iter()
                    .map(|a| {
                        let h = if guest { &a.guest_highlight } else { &a.host_highlight };
                        h.contains(&w)
                    })
                    .collect(),
            );
        }
    }
    oracle_alpha(&units)
}

/// Mean pairwise highlight Jaccard straight from the records: qualifying
/// pairs only, nonempty highlights only, mean per pair then over pairs.
pub fn oracle_mean_jaccard_from_annotations(
    annotations: &[Annotation],
    guest: bool,
) -> Option<f64> {
    let mut grouped: BTreeMap<&str, Vec<&Annotation>> = BTreeMap::new();
    for a in annotations {
        grouped.entry(&a.pair_id).or_default().push(a);
    }
    let mut per_pair = Vec::new();
    for group in grouped.values() {
        if group.iter().filter(|a| a.is_paraphrase).count() < 2 {
            continue;
        }
        let sets: Vec<&BTreeSet<usize>> = group
            .iter()
            .map(|a| if guest { &a.guest_highlight } else { &a.host_highlight })
            .filter(|h| !h.is_empty())
            .collect();
        if sets.len() < 2 {
            continue;
        }
        let mut values = Vec::new();
        for i in 0..sets.len() {
            for j in (i + 1)..sets.len() {
                let inter = sets[i].intersection(sets[j]).count();
                let union = sets[i].union(sets[j]).count();
                values.push(if union == 0 { 1.0 } else { inter as f64 / union as f64 });
            }
        }
        per_pair.push(values.iter().sum::<f64>() / values.len() as f64);
    }
    (!per_pair.is_empty()).then(|| per_pair.iter().sum::<f64>() / per_pair.len() as f64)
}
