use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Variant;
use crate::embedding::{knn_by_cosine, knn_same_class, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::graph::LongTailSplit;

/// An (anchor, partner) seed pair; `class` is always the anchor's label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VicinalPair {
    pub anchor: usize,
    pub partner: usize,
    pub class: usize,
}

/// Synthetic nodes needed per tail class to lift its training count to
/// `head_count`.
pub fn default_targets(split: &LongTailSplit, labels: &[usize]) -> BTreeMap<usize, usize> {
    split
        .tail_classes
        .iter()
        .map(|&c| {
            let have = split.train_of_class(labels, c).len();
            (c, split.head_count.saturating_sub(have))
        })
        .collect()
}

/// Enumerates vicinal pairs for every tail class with a positive target.
///
/// Partners per anchor: S uses the `k` nearest same-class training nodes, M
/// the `k` nearest training nodes of any class, O the anchor itself. The base
/// schedule walks neighbor ranks in order and, within a rank, anchors in
/// ascending id; it is repeated until the class target is met.
pub fn find_vicinal_twins(
    split: &LongTailSplit,
    emb: &EmbeddingMatrix,
    labels: &[usize],
    k: usize,
    variant: Variant,
    targets: &BTreeMap<usize, usize>,
) -> Result<Vec<VicinalPair>> {
    if k == 0 {
        return Err(Error::invalid("vicinal order k must be at least 1"));
    }
    let mut pairs = Vec::new();
    for (&class, &target) in targets {
        if target == 0 {
            continue;
        }
        let anchors = split.train_of_class(labels, class);
        if anchors.is_empty() {
            return Err(Error::invalid(format!(
                "tail class {class} has no training nodes to interpolate from"
            )));
        }
        let partners: Vec<Vec<usize>> = anchors
            .iter()
            .map(|&a| {
                let found = match variant {
                    Variant::O => vec![a],
                    Variant::S => knn_same_class(a, k, emb, labels, &split.train_idx),
                    Variant::M => knn_by_cosine(a, k, emb, &split.train_idx, |_| true),
                };
                if found.is_empty() {
                    log::warn!(
                        "tail class {class}: node {a} has no vicinal twin, falling back to a self-pair"
                    );
                    vec![a]
                } else {
                    found
                }
            })
            .collect();
        let depth = partners.iter().map(Vec::len).max().unwrap_or(0);
        let mut base = Vec::new();
        for rank in 0..depth {
            for (&anchor, list) in anchors.iter().zip(&partners) {
                if let Some(&partner) = list.get(rank) {
                    base.push(VicinalPair {
                        anchor,
                        partner,
                        class,
                    });
                }
            }
        }
        pairs.extend(base.iter().cycle().take(target).copied());
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn split(train: Vec<usize>, tail: &[usize], head_count: usize) -> LongTailSplit {
        LongTailSplit {
            train_idx: train,
            val_idx: vec![],
            test_idx: vec![],
            tail_classes: tail.iter().copied().collect::<BTreeSet<_>>(),
            head_count,
            imbalance_ratio: 0.1,
        }
    }

    fn random_emb(seed: u64, n: usize) -> EmbeddingMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        EmbeddingMatrix::new(
            Array2::from_shape_fn((n, 5), |_| rng.random_range(-1.0..1.0)),
            "rand",
        )
    }

    #[test]
    fn two_node_class_pairs_both_ways() {
        let emb = random_emb(1, 4);
        let labels = [0, 0, 1, 1];
        let s = split(vec![0, 1, 2, 3], &[1], 4);
        let pairs =
            find_vicinal_twins(&s, &emb, &labels, 3, Variant::S, &BTreeMap::from([(1, 2)]))
                .unwrap();
        let got: Vec<(usize, usize)> = pairs.iter().map(|p| (p.anchor, p.partner)).collect();
        assert_eq!(got, vec![(2, 3), (3, 2)]);
    }

    #[test]
    fn eighteen_pairs_fill_a_class_of_two() {
        let emb = random_emb(2, 4);
        let labels = [0, 0, 1, 1];
        let s = split(vec![0, 1, 2, 3], &[1], 20);
        let targets = default_targets(&s, &labels);
        assert_eq!(targets, BTreeMap::from([(1, 18)]));
        let pairs = find_vicinal_twins(&s, &emb, &labels, 3, Variant::S, &targets).unwrap();
        assert_eq!(pairs.len(), 18);
        assert!(pairs.iter().all(|p| p.class == 1 && labels[p.partner] == 1));
    }

    #[test]
    fn round_robin_matches_enumeration_oracle() {
        let emb = random_emb(3, 8);
        let labels = [0, 0, 0, 1, 1, 1, 1, 1];
        let s = split((0..8).collect(), &[1], 20);
        let pairs =
            find_vicinal_twins(&s, &emb, &labels, 3, Variant::S, &BTreeMap::from([(1, 7)]))
                .unwrap();

        // Oracle: rank every same-class partner by explicit cosine, then lay
        // out rank-major, anchor-minor, and cut at 7.
        let cos = |a: usize, b: usize| {
            let (x, y) = (emb.row(a), emb.row(b));
            x.dot(&y) / (x.dot(&x).sqrt() * y.dot(&y).sqrt())
        };
        let members = [3usize, 4, 5, 6, 7];
        let ranked: Vec<Vec<usize>> = members
            .iter()
            .map(|&a| {
                let mut others: Vec<usize> = members.iter().copied().filter(|&b| b != a).collect();
                others.sort_by(|&x, &y| cos(a, y).partial_cmp(&cos(a, x)).unwrap().then(x.cmp(&y)));
                others.truncate(3);
                others
            })
            .collect();
        let mut expected = Vec::new();
        for rank in 0..3 {
            for (i, &a) in members.iter().enumerate() {
                expected.push((a, ranked[i][rank]));
            }
        }
        expected.truncate(7);
        let got: Vec<(usize, usize)> = pairs.iter().map(|p| (p.anchor, p.partner)).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn singleton_class_falls_back_to_self_pair() {
        let emb = random_emb(4, 3);
        let labels = [0, 0, 1];
        let s = split(vec![0, 1, 2], &[1], 4);
        let pairs =
            find_vicinal_twins(&s, &emb, &labels, 3, Variant::S, &BTreeMap::from([(1, 3)]))
                .unwrap();
        assert!(pairs.iter().all(|p| p.anchor == 2 && p.partner == 2));
        assert_eq!(pairs.len(), 3);
    }

    #[test]
    fn variant_m_may_cross_classes_and_o_self_pairs() {
        let emb = random_emb(5, 6);
        let labels = [0, 0, 0, 1, 1, 1];
        let s = split((0..6).collect(), &[1], 20);
        let t = BTreeMap::from([(1, 9)]);
        let m = find_vicinal_twins(&s, &emb, &labels, 3, Variant::M, &t).unwrap();
        assert_eq!(m.len(), 9);
        assert!(m.iter().all(|p| p.class == 1 && labels[p.anchor] == 1));
        let o = find_vicinal_twins(&s, &emb, &labels, 3, Variant::O, &t).unwrap();
        let anchors: Vec<usize> = o.iter().map(|p| p.anchor).collect();
        assert_eq!(anchors, vec![3, 4, 5, 3, 4, 5, 3, 4, 5]);
        assert!(o.iter().all(|p| p.anchor == p.partner));
    }
}
