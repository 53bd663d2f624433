use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TextGraph;
use crate::error::{Error, Result};

/// How tail classes are identified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailRule {
    /// The `n` classes with the lowest full-graph frequency (ties to the lower
    /// class index).
    Count(usize),
    /// Every class whose frequency is strictly below the median frequency.
    BelowMedian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitParams {
    pub head_count: usize,
    pub imbalance_ratio: f64,
    pub tail_rule: TailRule,
    pub val_fraction: f64,
    pub seed: u64,
}

/// Train/validation/test partition under the long-tail protocol. Index lists
/// are sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongTailSplit {
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub tail_classes: BTreeSet<usize>,
    pub head_count: usize,
    pub imbalance_ratio: f64,
}

impl LongTailSplit {
    /// Training nodes per tail class: `round(head_count * ratio)`, at least 1.
    pub fn tail_train_count(&self) -> usize {
        tail_train_count(self.head_count, self.imbalance_ratio)
    }

    pub fn is_tail(&self, class: usize) -> bool {
        self.tail_classes.contains(&class)
    }

    /// Training nodes of `class`, ascending.
    pub fn train_of_class(&self, labels: &[usize], class: usize) -> Vec<usize> {
        self.train_idx
            .iter()
            .copied()
            .filter(|&v| labels[v] == class)
            .collect()
    }
}

fn tail_train_count(head_count: usize, ratio: f64) -> usize {
    ((head_count as f64 * ratio).round() as usize).max(1)
}

fn select_tail_classes(freq: &[usize], rule: TailRule) -> Result<BTreeSet<usize>> {
    let c = freq.len();
    match rule {
        TailRule::Count(n) => {
            if n >= c {
                return Err(Error::Split(format!(
                    "tail_class_count {n} must be smaller than the class count {c}"
                )));
            }
            let mut order: Vec<usize> = (0..c).collect();
            order.sort_by_key(|&k| (freq[k], k));
            Ok(order.into_iter().take(n).collect())
        }
        TailRule::BelowMedian => {
            let mut sorted = freq.to_vec();
            sorted.sort_unstable();
            let median = if c == 0 {
                0.0
            } else if c % 2 == 1 {
                sorted[c / 2] as f64
            } else {
                (sorted[c / 2 - 1] + sorted[c / 2]) as f64 / 2.0
            };
            Ok((0..c).filter(|&k| (freq[k] as f64) < median).collect())
        }
    }
}

/// [`make_split`] with the tail classes chosen by count.
pub fn make_longtail_split(
    graph: &TextGraph,
    head_count: usize,
    imbalance_ratio: f64,
    tail_class_count: usize,
    val_fraction: f64,
    seed: u64,
) -> Result<LongTailSplit> {
    make_split(
        graph,
        &SplitParams {
            head_count,
            imbalance_ratio,
            tail_rule: TailRule::Count(tail_class_count),
            val_fraction,
            seed,
        },
    )
}

/// Samples `head_count` training nodes per head class and
/// `round(head_count * ratio)` per tail class; the rest of each class is
/// divided between validation and test by `val_fraction`, keeping at least
/// one node on each side.
pub fn make_split(graph: &TextGraph, params: &SplitParams) -> Result<LongTailSplit> {
    let ratio = params.imbalance_ratio;
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Split(format!(
            "imbalance ratio {ratio} must lie in (0, 1]"
        )));
    }
    if !(0.0..=1.0).contains(&params.val_fraction) {
        return Err(Error::Split(format!(
            "val_fraction {} must lie in [0, 1]",
            params.val_fraction
        )));
    }
    let freq = graph.class_frequencies();
    let tail_classes = select_tail_classes(&freq, params.tail_rule)?;
    let tail_count = tail_train_count(params.head_count, ratio);

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); graph.class_count()];
    for (v, &l) in graph.labels().iter().enumerate() {
        members[l].push(v);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for (class, nodes) in members.iter_mut().enumerate() {
        let want = if tail_classes.contains(&class) {
            tail_count
        } else {
            params.head_count
        };
        if nodes.len() < want + 2 {
            return Err(Error::Split(format!(
                "class {class} (`{}`) has {} nodes but needs {} training nodes plus one validation and one test node",
                graph.class_names()[class],
                nodes.len(),
                want
            )));
        }
        nodes.shuffle(&mut rng);
        let (picked, rest) = nodes.split_at(want);
        train.extend_from_slice(picked);
        let n_val = ((params.val_fraction * rest.len() as f64).round() as usize)
            .clamp(1, rest.len() - 1);
        val.extend_from_slice(&rest[..n_val]);
        test.extend_from_slice(&rest[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(LongTailSplit {
        train_idx: train,
        val_idx: val,
        test_idx: test,
        tail_classes,
        head_count: params.head_count,
        imbalance_ratio: ratio,
    })
}
