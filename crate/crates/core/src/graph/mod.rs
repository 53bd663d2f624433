//! Text-attributed graph model, dataset files, long-tail splits and adjacency
//! preprocessing.

mod adjacency;
mod io;
mod split;

pub use adjacency::{normalized_adjacency, normalized_adjacency_from_edges, SparseMatrix};
pub use io::{
    load_dataset, write_dataset, DatasetMeta, EdgeRecord, NodeRecord, EDGES_FILE, META_FILE, NODES_FILE, PROVENANCE_FILE,
};
pub use split::{make_longtail_split, make_split, LongTailSplit, SplitParams, TailRule};

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::generation::SyntheticNode;

/// An undirected simple graph whose nodes carry raw text and a class label.
///
/// Edges are stored once as `(u, v)` with `u < v`, sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct TextGraph {
    texts: Vec<String>,
    labels: Vec<usize>,
    class_names: Vec<String>,
    edges: Vec<(usize, usize)>,
    tail_class_count: Option<usize>,
}

impl TextGraph {
    /// Builds a validated graph. Mirrored and repeated edges collapse into one
    /// undirected pair; self-loops are rejected.
    pub fn new(
        texts: Vec<String>,
        labels: Vec<usize>,
        class_names: Vec<String>,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        if texts.len() != labels.len() {
            return Err(Error::graph(format!(
                "{} texts but {} labels",
                texts.len(),
                labels.len()
            )));
        }
        let n = texts.len();
        let class_count = class_names.len();
        if let Some((node, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= class_count)
        {
            return Err(Error::graph(format!(
                "label out of range: node {node} has label {label} but only {class_count} classes are declared"
            )));
        }
        if let Some(&max_label) = labels.iter().max() {
            if max_label + 1 != class_count {
                return Err(Error::graph(format!(
                    "{class_count} class names declared but the largest label is {max_label}"
                )));
            }
        }
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::graph(format!(
                    "edge endpoint out of range: ({u}, {v}) with {n} nodes"
                )));
            }
            if u == v {
                return Err(Error::graph(format!("self-loop on node {u}")));
            }
            set.insert((u.min(v), u.max(v)));
        }
        Ok(Self {
            texts,
            labels,
            class_names,
            edges: set.into_iter().collect(),
            tail_class_count: None,
        })
    }

    pub fn empty() -> Self {
        Self {
            texts: Vec::new(),
            labels: Vec::new(),
            class_names: Vec::new(),
            edges: Vec::new(),
            tail_class_count: None,
        }
    }

    pub fn with_tail_class_count(mut self, count: Option<usize>) -> Self {
        self.tail_class_count = count;
        self
    }

    pub fn node_count(&self) -> usize {
        self.texts.len()
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn texts(&self) -> &[String] {
        &self.texts
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Declared number of tail classes from the dataset metadata, if any.
    pub fn tail_class_count(&self) -> Option<usize> {
        self.tail_class_count
    }

    /// Sorted neighbor lists, one per node.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.node_count()];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Node count per class over the whole graph.
    pub fn class_frequencies(&self) -> Vec<usize> {
        let mut freq = vec![0; self.class_count()];
        for &l in &self.labels {
            freq[l] += 1;
        }
        freq
    }
}

/// Appends synthetic nodes to a graph. Synthetic node `i` receives id
/// `node_count + i`; its edges may point at original nodes or at earlier
/// synthetic nodes.
pub fn merge_augmented(graph: &TextGraph, synthetic: &[SyntheticNode]) -> Result<TextGraph> {
    let base = graph.node_count();
    let mut texts = graph.texts.clone();
    let mut labels = graph.labels.clone();
    let mut edges = graph.edges.clone();
    for (i, node) in synthetic.iter().enumerate() {
        let id = base + i;
        for &(target, _) in &node.edges {
            if target >= id {
                return Err(Error::graph(format!(
                    "synthetic node {id} has an edge to unknown id {target}"
                )));
            }
            edges.push((target, id));
        }
        texts.push(node.text.clone());
        labels.push(node.label);
    }
    Ok(TextGraph::new(texts, labels, graph.class_names.clone(), edges)?
        .with_tail_class_count(graph.tail_class_count))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphStats {
    pub nodes: usize,
    pub edges: usize,
    pub classes: usize,
    pub tail_classes: usize,
    /// Mean text length in characters.
    pub mean_text_len: f64,
}

/// Summary counts. The tail count comes from the split when given, otherwise
/// from the dataset metadata.
pub fn graph_stats(graph: &TextGraph, split: Option<&LongTailSplit>) -> GraphStats {
    let nodes = graph.node_count();
    let mean_text_len = if nodes == 0 {
        0.0
    } else {
        graph.texts.iter().map(|t| t.chars().count()).sum::<usize>() as f64 / nodes as f64
    };
    GraphStats {
        nodes,
        edges: graph.edge_count(),
        classes: graph.class_count(),
        tail_classes: split
            .map(|s| s.tail_classes.len())
            .or(graph.tail_class_count)
            .unwrap_or(0),
        mean_text_len,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generation::{Provenance, SyntheticNode, Variant};

    fn names(c: usize) -> Vec<String> {
        (0..c).map(|i| format!("c{i}")).collect()
    }

    fn texts(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("text {i}")).collect()
    }

    fn synthetic(label: usize, edges: Vec<(usize, f64)>) -> SyntheticNode {
        SyntheticNode {
            text: "synthetic".into(),
            label,
            provenance: Provenance {
                variant: Variant::S,
                anchor: 0,
                partner: 1,
                generator_id: "mock".into(),
                cache_key: String::new(),
            },
            embedding: None,
            isolated: edges.is_empty(),
            edges,
        }
    }

    #[test]
    fn mirrored_edges_collapse() {
        let g = TextGraph::new(texts(3), vec![0, 1, 0], names(2), [(0, 1), (1, 0)]).unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edges(), &[(0, 1)]);
    }

    #[test]
    fn rejects_self_loops_and_bad_labels() {
        assert!(TextGraph::new(texts(2), vec![0, 0], names(1), [(1, 1)]).is_err());
        let err = TextGraph::new(texts(2), vec![0, 2], names(2), []).unwrap_err();
        assert!(err.to_string().contains("label out of range"));
    }

    #[test]
    fn merge_with_nothing_is_identity() {
        let g = TextGraph::new(texts(4), vec![0, 1, 0, 1], names(2), [(0, 1), (2, 3)]).unwrap();
        assert_eq!(merge_augmented(&g, &[]).unwrap(), g);
    }

    #[test]
    fn merge_adds_node_and_edges() {
        let g = TextGraph::new(texts(8), vec![0, 1, 0, 1, 0, 1, 0, 1], names(2), [(0, 1)])
            .unwrap();
        let merged = merge_augmented(&g, &[synthetic(1, vec![(3, 0.9), (7, 0.4)])]).unwrap();
        assert_eq!(merged.node_count(), 9);
        assert_eq!(merged.edge_count(), 3);
        assert_eq!(merged.labels()[8], 1);
        assert_eq!(merged.neighbors()[8], vec![3, 7]);
    }

    #[test]
    fn merged_isolated_node_has_degree_zero() {
        let g = TextGraph::new(texts(2), vec![0, 1], names(2), [(0, 1)]).unwrap();
        let merged = merge_augmented(&g, &[synthetic(0, vec![])]).unwrap();
        assert_eq!(merged.node_count(), 3);
        assert!(merged.neighbors()[2].is_empty());
        assert_eq!(merged.edges(), g.edges());
    }

    #[test]
    fn merge_rejects_forward_references() {
        let g = TextGraph::new(texts(2), vec![0, 1], names(2), []).unwrap();
        assert!(merge_augmented(&g, &[synthetic(0, vec![(2, 1.0)])]).is_err());
        let chained = [synthetic(0, vec![(1, 1.0)]), synthetic(0, vec![(2, 1.0)])];
        assert!(merge_augmented(&g, &chained).is_ok());
    }

    #[test]
    fn stats_of_empty_graph_are_zero() {
        let s = graph_stats(&TextGraph::empty(), None);
        assert_eq!(
            s,
            GraphStats {
                nodes: 0,
                edges: 0,
                classes: 0,
                tail_classes: 0,
                mean_text_len: 0.0
            }
        );
    }

    #[test]
    fn stats_count_characters() {
        let g = TextGraph::new(vec!["ab".into(), "héllo".into()], vec![0, 0], names(1), [])
            .unwrap()
            .with_tail_class_count(Some(0));
        assert_eq!(graph_stats(&g, None).mean_text_len, 3.5);
    }
}
