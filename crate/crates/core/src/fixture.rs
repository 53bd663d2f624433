//! Seeded synthetic text-attributed graph with a long-tailed class layout,
//! used by the end-to-end tests and the quick-start example.

use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::{write_dataset, TextGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureSpec {
    pub class_names: Vec<String>,
    pub class_sizes: Vec<usize>,
    /// Trailing classes marked as tail in the dataset metadata.
    pub tail_class_count: usize,
    pub tokens_per_text: usize,
    /// Chance that a token comes from the class vocabulary rather than the
    /// shared pool.
    pub signal_share: f64,
    /// Chance that a token is a function word shared by every class.
    pub stopword_share: f64,
    pub class_vocab: usize,
    /// Share of a tail class's signal tokens drawn from its paired head
    /// class, which makes the pair hard to separate.
    pub sibling_overlap: f64,
    pub shared_vocab: usize,
    /// Expected same-class and cross-class neighbors per node.
    pub intra_degree: f64,
    pub inter_degree: f64,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            class_names: ["physics", "biology", "poetry", "geology"]
                .map(String::from)
                .to_vec(),
            class_sizes: vec![150, 150, 60, 60],
            tail_class_count: 2,
            tokens_per_text: 24,
            signal_share: 0.3,
            stopword_share: 0.4,
            class_vocab: 40,
            sibling_overlap: 0.0,
            shared_vocab: 300,
            intra_degree: 3.0,
            inter_degree: 1.0,
            seed: 7,
        }
    }
}

const STOPWORDS: [&str; 10] = ["the", "of", "and", "in", "to", "a", "is", "for", "with", "on"];

fn class_word(name: &str, i: usize) -> String {
    format!("{}{i}", &name[..name.len().min(4)])
}

/// Builds the fixture graph. Texts mix class-specific words with a shared
/// vocabulary; edges are drawn with a homophilous bias.
pub fn fixture_graph(spec: &FixtureSpec) -> Result<TextGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let shared: Vec<String> = (0..spec.shared_vocab).map(|i| format!("word{i}")).collect();
    let vocabs: Vec<Vec<String>> = spec
        .class_names
        .iter()
        .map(|name| {
            let mut v: Vec<String> = (0..spec.class_vocab).map(|i| class_word(name, i)).collect();
            v.push(name.to_lowercase());
            v
        })
        .collect();
    let k = spec.class_sizes.len();
    let heads = k.saturating_sub(spec.tail_class_count).max(1);
    let mut texts = Vec::new();
    let mut labels = Vec::new();
    for (c, &size) in spec.class_sizes.iter().enumerate() {
        let name = &spec.class_names[c];
        let sibling = (c >= heads).then(|| &vocabs[(c - heads) % heads]);
        for _ in 0..size {
            let words: Vec<&str> = (0..spec.tokens_per_text)
                .map(|_| {
                    let u: f64 = rng.random();
                    if u < spec.stopword_share {
                        STOPWORDS.choose(&mut rng).copied().unwrap_or("the")
                    } else {
                        let pool = if u < spec.stopword_share + spec.signal_share {
                            match sibling {
                                Some(sib) if rng.random_bool(spec.sibling_overlap) => sib,
                                _ => &vocabs[c],
                            }
                        } else {
                            &shared
                        };
                        pool.choose(&mut rng).map(String::as_str).unwrap_or(name)
                    }
                })
                .collect();
            texts.push(words.join(" "));
            labels.push(c);
        }
    }
    let n = texts.len();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); spec.class_sizes.len()];
    for (v, &c) in labels.iter().enumerate() {
        by_class[c].push(v);
    }
    let mut edges = Vec::new();
    for v in 0..n {
        let own = &by_class[labels[v]];
        let draws = |mean: f64, rng: &mut ChaCha8Rng| {
            let whole = mean.floor() as usize;
            whole + usize::from(rng.random_bool(mean - mean.floor()))
        };
        for _ in 0..draws(spec.intra_degree / 2.0, &mut rng) {
            let u = own[rng.random_range(0..own.len())];
            if u != v {
                edges.push((u.min(v), u.max(v)));
            }
        }
        for _ in 0..draws(spec.inter_degree / 2.0, &mut rng) {
            let u = rng.random_range(0..n);
            if u != v {
                edges.push((u.min(v), u.max(v)));
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();
    Ok(TextGraph::new(texts, labels, spec.class_names.clone(), edges)?
        .with_tail_class_count(Some(spec.tail_class_count)))
}

/// Writes the fixture in the on-disk dataset format.
pub fn write_fixture(dir: impl AsRef<Path>, spec: &FixtureSpec) -> Result<TextGraph> {
    let graph = fixture_graph(spec)?;
    write_dataset(&graph, dir, None)?;
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::load_dataset;

    #[test]
    fn fixture_is_seeded_and_round_trips() {
        let spec = FixtureSpec::default();
        let a = fixture_graph(&spec).unwrap();
        assert_eq!(a, fixture_graph(&spec).unwrap());
        assert_eq!(a.node_count(), 420);
        assert_eq!(a.class_frequencies(), vec![150, 150, 60, 60]);
        let dir = tempfile::tempdir().unwrap();
        write_fixture(dir.path(), &spec).unwrap();
        assert_eq!(load_dataset(dir.path()).unwrap(), a);
    }

    #[test]
    fn edges_are_mostly_homophilous() {
        let g = fixture_graph(&FixtureSpec::default()).unwrap();
        let same = g.edges().iter().filter(|&&(u, v)| g.labels()[u] == g.labels()[v]).count();
        assert!(same as f64 / g.edge_count() as f64 > 0.6);
    }
}
