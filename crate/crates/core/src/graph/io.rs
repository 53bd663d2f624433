use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TextGraph;
use crate::error::{Error, Result};
use crate::generation::ProvenanceRecord;

pub const NODES_FILE: &str = "nodes.jsonl";
pub const EDGES_FILE: &str = "edges.jsonl";
pub const META_FILE: &str = "meta.json";
pub const PROVENANCE_FILE: &str = "provenance.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: i64,
    pub text: String,
    pub label: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub src: i64,
    pub dst: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub class_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_class_count: Option<usize>,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

/// Iterates non-blank lines with their 1-based line numbers.
fn lines(path: &Path) -> Result<impl Iterator<Item = Result<(usize, String)>>> {
    let reader = BufReader::new(open(path)?);
    Ok(reader
        .lines()
        .enumerate()
        .map(|(i, line)| line.map(|l| (i + 1, l)).map_err(Error::from))
        .filter(|r| !matches!(r, Ok((_, l)) if l.trim().is_empty())))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        file: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Reads `nodes.jsonl`, `edges.jsonl` and `meta.json` from a dataset directory.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<TextGraph> {
    let dir = dir.as_ref();
    let meta_path = dir.join(META_FILE);
    let meta: DatasetMeta = serde_json::from_reader(BufReader::new(open(&meta_path)?))
        .map_err(|e| parse_err(&meta_path, e.line(), e.to_string()))?;
    let class_count = meta.class_names.len();

    let nodes_path = dir.join(NODES_FILE);
    let mut texts = Vec::new();
    let mut labels = Vec::new();
    let mut seen = HashSet::new();
    for item in lines(&nodes_path)? {
        let (line, raw) = item?;
        let rec: NodeRecord =
            serde_json::from_str(&raw).map_err(|e| parse_err(&nodes_path, line, e.to_string()))?;
        if !seen.insert(rec.id) {
            return Err(parse_err(&nodes_path, line, format!("duplicate node id {}", rec.id)));
        }
        if rec.id != texts.len() as i64 {
            return Err(parse_err(
                &nodes_path,
                line,
                format!(
                    "non-contiguous node id {} (expected {})",
                    rec.id,
                    texts.len()
                ),
            ));
        }
        if rec.label < 0 || rec.label as usize >= class_count {
            return Err(parse_err(
                &nodes_path,
                line,
                format!(
                    "label out of range: {} with {class_count} classes",
                    rec.label
                ),
            ));
        }
        texts.push(rec.text);
        labels.push(rec.label as usize);
    }

    let n = texts.len() as i64;
    let edges_path = dir.join(EDGES_FILE);
    let mut edges = Vec::new();
    for item in lines(&edges_path)? {
        let (line, raw) = item?;
        let rec: EdgeRecord =
            serde_json::from_str(&raw).map_err(|e| parse_err(&edges_path, line, e.to_string()))?;
        if rec.src < 0 || rec.dst < 0 || rec.src >= n || rec.dst >= n {
            return Err(parse_err(
                &edges_path,
                line,
                format!(
                    "edge endpoint out of range: ({}, {}) with {n} nodes",
                    rec.src, rec.dst
                ),
            ));
        }
        if rec.src == rec.dst {
            return Err(parse_err(
                &edges_path,
                line,
                format!("self-loop on node {}", rec.src),
            ));
        }
        edges.push((rec.src as usize, rec.dst as usize));
    }

    Ok(TextGraph::new(texts, labels, meta.class_names, edges)?
        .with_tail_class_count(meta.tail_class_count))
}

/// Writes a graph in the dataset directory format. When provenance records
/// are given they go to a `provenance.jsonl` sidecar.
pub fn write_dataset(
    graph: &TextGraph,
    dir: impl AsRef<Path>,
    provenance: Option<&[ProvenanceRecord]>,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;

    let mut nodes = BufWriter::new(File::create(dir.join(NODES_FILE))?);
    for (i, (text, &label)) in graph.texts().iter().zip(graph.labels()).enumerate() {
        let rec = NodeRecord {
            id: i as i64,
            text: text.clone(),
            label: label as i64,
        };
        serde_json::to_writer(&mut nodes, &rec)?;
        nodes.write_all(b"\n")?;
    }
    nodes.flush()?;

    let mut edges = BufWriter::new(File::create(dir.join(EDGES_FILE))?);
    for &(u, v) in graph.edges() {
        serde_json::to_writer(
            &mut edges,
            &EdgeRecord {
                src: u as i64,
                dst: v as i64,
            },
        )?;
        edges.write_all(b"\n")?;
    }
    edges.flush()?;

    let meta = DatasetMeta {
        class_names: graph.class_names().to_vec(),
        tail_class_count: graph.tail_class_count(),
    };
    let mut meta_file = BufWriter::new(File::create(dir.join(META_FILE))?);
    serde_json::to_writer(&mut meta_file, &meta)?;
    meta_file.write_all(b"\n")?;
    meta_file.flush()?;

    if let Some(records) = provenance {
        let mut out = BufWriter::new(File::create(dir.join(PROVENANCE_FILE))?);
        for rec in records {
            serde_json::to_writer(&mut out, rec)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
    }
    Ok(())
}
