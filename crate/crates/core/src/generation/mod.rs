//! Vicinal-twin pairing, prompt construction, generator backends and
//! assembly of synthetic nodes.

mod cache;
mod generator;
mod prompt;
mod twins;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use cache::{CacheEntry, CacheKeyParts, GenerationCache, CACHE_FILE};
pub use generator::{
    build_generator, mock_generate, ChatRequest, ChatResponse, GenerationJob, GeneratorConfig,
    GeneratorKind, MockGenerator, RemoteGenerator, TextGenerator,
};
pub use prompt::{build_prompt, parse_generation, ChatMessage, ParseMode, PromptSpec, Role, END, START};
pub use twins::{default_targets, find_vicinal_twins, VicinalPair};

use crate::error::{Error, Result};

/// Interpolation variant: O conditions on one seed text, S on two seeds of
/// the same class, M on two seeds that may differ in class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    O,
    S,
    M,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::O => "O",
            Variant::S => "S",
            Variant::M => "M",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "O" => Ok(Variant::O),
            "S" => Ok(Variant::S),
            "M" => Ok(Variant::M),
            _ => Err(Error::invalid(format!("unknown variant `{s}` (expected O, S or M)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub variant: Variant,
    pub anchor: usize,
    pub partner: usize,
    pub generator_id: String,
    pub cache_key: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticNode {
    pub text: String,
    /// Always the anchor's label.
    pub label: usize,
    pub provenance: Provenance,
    pub embedding: Option<Vec<f64>>,
    /// `(target id, score)`.
    pub edges: Vec<(usize, f64)>,
    pub isolated: bool,
}

impl SyntheticNode {
    pub fn new(text: String, label: usize, provenance: Provenance) -> Self {
        Self {
            text,
            label,
            provenance,
            embedding: None,
            edges: Vec::new(),
            isolated: false,
        }
    }
}

/// One line of `provenance.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceRecord {
    pub id: usize,
    pub label: usize,
    pub variant: Variant,
    pub anchor: usize,
    pub partner: usize,
    pub generator_id: String,
    pub cache_key: String,
    pub edges: usize,
    pub isolated: bool,
}

impl ProvenanceRecord {
    pub fn from_nodes(first_id: usize, nodes: &[SyntheticNode]) -> Vec<Self> {
        nodes
            .iter()
            .enumerate()
            .map(|(i, n)| Self {
                id: first_id + i,
                label: n.label,
                variant: n.provenance.variant,
                anchor: n.provenance.anchor,
                partner: n.provenance.partner,
                generator_id: n.provenance.generator_id.clone(),
                cache_key: n.provenance.cache_key.clone(),
                edges: n.edges.len(),
                isolated: n.isolated,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPair {
    pub index: usize,
    pub anchor: usize,
    pub partner: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub pairs: usize,
    pub cache_hits: usize,
    pub generator_calls: usize,
    pub skipped: Vec<SkippedPair>,
}

#[derive(Debug, Clone)]
pub struct GenerationOutput {
    /// Nodes in pair order; skipped pairs leave no entry.
    pub nodes: Vec<SyntheticNode>,
    pub stats: GenerationStats,
}

/// Seed texts and class metadata the generator reads.
#[derive(Debug, Clone, Copy)]
pub struct SeedCorpus<'a> {
    pub texts: &'a [String],
    pub labels: &'a [usize],
    pub class_names: &'a [String],
}

/// Mixes the mock seed with the pair identity so every request gets its
/// own stream.
fn job_seed(base: u64, pair: &VicinalPair, attempt: usize) -> u64 {
    let mut h = base ^ 0x9e37_79b9_7f4a_7c15;
    for x in [pair.anchor as u64, pair.partner as u64, attempt as u64] {
        h = (h ^ x).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h ^= h >> 31;
    }
    h
}

struct Job {
    index: usize,
    pair: VicinalPair,
    messages: Vec<ChatMessage>,
    key: String,
    class_name: String,
    seed: u64,
}

/// Produces one synthetic node per pair, consulting `cache` first.
///
/// A pair that repeats earlier in the list gets the next attempt number, so
/// cycled schedules yield distinct generations. Misses are sent to the
/// generator at most `cfg.max_in_flight` at a time; generator or parse
/// failures skip the pair and are reported in the stats.
pub fn generate_interpolations(
    pairs: &[VicinalPair],
    variant: Variant,
    generator: &dyn TextGenerator,
    cfg: &GeneratorConfig,
    spec: &PromptSpec,
    corpus: SeedCorpus<'_>,
    cache: &mut GenerationCache,
) -> Result<GenerationOutput> {
    cfg.validate()?;
    spec.validate()?;
    let model = generator.id();
    let spec_digest = spec.digest();
    let mut stats = GenerationStats {
        pairs: pairs.len(),
        ..Default::default()
    };
    let mut texts: Vec<Option<(String, String)>> = vec![None; pairs.len()];
    let mut misses = Vec::new();
    let mut seen = std::collections::HashMap::<(usize, usize), usize>::new();

    for (index, pair) in pairs.iter().enumerate() {
        let n = corpus.texts.len();
        if pair.anchor >= n || pair.partner >= n {
            return Err(Error::invalid(format!(
                "pair ({}, {}) references a node outside the corpus",
                pair.anchor, pair.partner
            )));
        }
        let attempt = {
            let c = seen.entry((pair.anchor, pair.partner)).or_insert(0);
            *c += 1;
            *c - 1
        };
        let class1 = &corpus.class_names[pair.class];
        let class2 = &corpus.class_names[corpus.labels[pair.partner]];
        let t1 = &corpus.texts[pair.anchor];
        let t2 = &corpus.texts[pair.partner];
        let key = CacheKeyParts {
            variant,
            anchor: pair.anchor,
            partner: pair.partner,
            anchor_text: t1,
            partner_text: t2,
            class_name: class1,
            model: &model,
            temperature: cfg.temperature,
            spec_digest: &spec_digest,
            attempt,
        }
        .digest();
        if let Some(hit) = cache.get(&key) {
            stats.cache_hits += 1;
            texts[index] = Some((hit.text.clone(), key));
            continue;
        }
        let second = (variant != Variant::O).then_some(t2.as_str());
        let messages = build_prompt(variant, t1, second, class1, class2, spec)?;
        misses.push(Job {
            index,
            pair: *pair,
            messages,
            key,
            class_name: class1.clone(),
            seed: job_seed(cfg.seed, pair, attempt),
        });
    }

    let mut fresh = Vec::new();
    for chunk in misses.chunks(cfg.max_in_flight) {
        let results: Vec<Result<String>> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|job| {
                    scope.spawn(move || {
                        let partner_text = if variant == Variant::O {
                            ""
                        } else {
                            corpus.texts[job.pair.partner].as_str()
                        };
                        let raw = generator.generate(&GenerationJob {
                            index: job.index,
                            messages: &job.messages,
                            anchor_text: &corpus.texts[job.pair.anchor],
                            partner_text,
                            class_name: &job.class_name,
                            seed: job.seed,
                        })?;
                        parse_generation(&raw, cfg.parse_mode)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("generator thread panicked"))
                .collect()
        });
        stats.generator_calls += chunk.len();
        for (job, result) in chunk.iter().zip(results) {
            match result {
                Ok(text) => {
                    fresh.push(CacheEntry {
                        key: job.key.clone(),
                        text: text.clone(),
                        model: model.clone(),
                        variant,
                        anchor: job.pair.anchor,
                        partner: job.pair.partner,
                    });
                    texts[job.index] = Some((text, job.key.clone()));
                }
                Err(e) => {
                    log::warn!(
                        "skipping pair {} ({} -> {}): {e}",
                        job.index,
                        job.pair.anchor,
                        job.pair.partner
                    );
                    stats.skipped.push(SkippedPair {
                        index: job.index,
                        anchor: job.pair.anchor,
                        partner: job.pair.partner,
                        reason: e.to_string(),
                    });
                }
            }
        }
    }
    cache.append(fresh)?;

    let nodes = pairs
        .iter()
        .zip(texts)
        .filter_map(|(pair, slot)| {
            slot.map(|(text, cache_key)| {
                SyntheticNode::new(
                    text,
                    pair.class,
                    Provenance {
                        variant,
                        anchor: pair.anchor,
                        partner: pair.partner,
                        generator_id: model.clone(),
                        cache_key,
                    },
                )
            })
        })
        .collect();
    Ok(GenerationOutput { nodes, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Counting {
        inner: MockGenerator,
        calls: AtomicUsize,
        fail_on: Option<usize>,
    }

    impl TextGenerator for Counting {
        fn id(&self) -> String {
            self.inner.id()
        }

        fn generate(&self, job: &GenerationJob<'_>) -> Result<String> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            if self.fail_on == Some(job.index) {
                return Err(Error::Transport("connection refused".into()));
            }
            self.inner.generate(job)
        }
    }

    fn corpus() -> (Vec<String>, Vec<usize>, Vec<String>) {
        (
            vec![
                "graph neural networks for citation data".into(),
                "message passing over sparse graphs".into(),
                "reinforcement learning with sparse rewards".into(),
                "policy gradients and value functions".into(),
            ],
            vec![0, 0, 1, 1],
            vec!["Graphs".into(), "RL".into()],
        )
    }

    fn run(
        pairs: &[VicinalPair],
        generator: &dyn TextGenerator,
        cache: &mut GenerationCache,
    ) -> GenerationOutput {
        let (texts, labels, names) = corpus();
        generate_interpolations(
            pairs,
            Variant::S,
            generator,
            &GeneratorConfig::mock(1),
            &PromptSpec::preset("cora").unwrap(),
            SeedCorpus {
                texts: &texts,
                labels: &labels,
                class_names: &names,
            },
            cache,
        )
        .unwrap()
    }

    fn eighteen_pairs() -> Vec<VicinalPair> {
        [(2, 3), (3, 2)]
            .iter()
            .cycle()
            .take(18)
            .map(|&(anchor, partner)| VicinalPair {
                anchor,
                partner,
                class: 1,
            })
            .collect()
    }

    #[test]
    fn cold_then_warm_cache() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(CACHE_FILE);
        let generator = Counting {
            inner: MockGenerator::new(1),
            calls: AtomicUsize::new(0),
            fail_on: None,
        };
        let pairs = eighteen_pairs();
        let mut cache = GenerationCache::open(&path).unwrap();
        let first = run(&pairs, &generator, &mut cache);
        assert_eq!(first.nodes.len(), 18);
        assert_eq!(generator.calls.load(Ordering::SeqCst), 18);
        let lines = std::fs::read_to_string(&path).unwrap().lines().count();
        assert_eq!(lines, 18);
        assert!(first.nodes.iter().all(|n| n.label == 1 && n.edges.is_empty() && !n.isolated));

        let mut reopened = GenerationCache::open(&path).unwrap();
        let second = run(&pairs, &generator, &mut reopened);
        assert_eq!(generator.calls.load(Ordering::SeqCst), 18);
        assert_eq!(second.stats.cache_hits, 18);
        assert_eq!(second.nodes, first.nodes);
    }

    #[test]
    fn repeated_pairs_get_distinct_keys() {
        let out = run(
            &eighteen_pairs(),
            &MockGenerator::new(1),
            &mut GenerationCache::in_memory(),
        );
        let keys: std::collections::HashSet<&str> =
            out.nodes.iter().map(|n| n.provenance.cache_key.as_str()).collect();
        assert_eq!(keys.len(), 18);
    }

    #[test]
    fn failures_are_skipped_and_order_kept() {
        let generator = Counting {
            inner: MockGenerator::new(1),
            calls: AtomicUsize::new(0),
            fail_on: Some(1),
        };
        let pairs = eighteen_pairs();
        let out = run(&pairs[..4], &generator, &mut GenerationCache::in_memory());
        assert_eq!(out.nodes.len(), 3);
        assert_eq!(out.stats.skipped.len(), 1);
        assert_eq!(out.stats.skipped[0].index, 1);
        let anchors: Vec<usize> = out.nodes.iter().map(|n| n.provenance.anchor).collect();
        assert_eq!(anchors, vec![2, 2, 3]);
    }

    #[test]
    fn variant_parses_case_insensitively() {
        assert_eq!("s".parse::<Variant>().unwrap(), Variant::S);
        assert_eq!("M".parse::<Variant>().unwrap(), Variant::M);
        assert!("x".parse::<Variant>().is_err());
        assert_eq!(serde_json::to_string(&Variant::O).unwrap(), "\"O\"");
    }
}
