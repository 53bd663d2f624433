//! End-to-end orchestration: augmentation, artifact persistence, the
//! ablation grid of classifier runs, and the JSON reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{numeric_augment, InterpolationParams, NumericMode};
use crate::edges::{
    assign_edges, assign_edges_rows, duplicate_edges, train_confidence, EdgeAssignConfig, EdgeReport, Selection,
};
use crate::embedding::{class_centroids, encode, EmbeddingMatrix, EncoderConfig};
use crate::error::{Error, Result, StageContext};
use crate::generation::{
    build_generator, default_targets, find_vicinal_twins, generate_interpolations, GenerationCache,
    GenerationStats, GeneratorConfig, PromptSpec, ProvenanceRecord, SeedCorpus, SyntheticNode, Variant,
    CACHE_FILE,
};
use crate::graph::{
    graph_stats, load_dataset, make_split, merge_augmented, normalized_adjacency_from_edges, write_dataset,
    GraphStats, LongTailSplit, SplitParams, TailRule, TextGraph, EDGES_FILE, META_FILE, NODES_FILE,
};
use crate::metrics::{
    bcr, bps, check_margin_bound, check_margin_bound_supported, check_vicinal_risk_bound,
    classification_metrics, cross_entropy_rows, icr, is_boundary, margins, vicinal_risk_from_losses,
    BoundCheck, ConfusionMatrix, ManifoldIndex,
};
use crate::neural::{predict, train_classifier, ClassifierModel, ModelKind, TrainConfig};
use crate::theory::VerifyConfig;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const ARTIFACTS_FILE: &str = "artifacts.json";
pub const AUGMENT_REPORT_FILE: &str = "augment_report.json";
pub const AUGMENTED_DIR: &str = "augmented";
const ARTIFACTS_VERSION: u32 = 1;
/// Loss Lipschitz constant used by the vicinal-risk check: cross-entropy is
/// `√2`-Lipschitz in the logits.
const CE_LIPSCHITZ: f64 = std::f64::consts::SQRT_2;
const BPS_NOTE: &str = "bps = d_in / d_out (reciprocal trust score; higher is nearer the boundary)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeStrategy {
    Confidence,
    Duplicate,
    None,
}

impl FromStr for EdgeStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "confidence" => Ok(Self::Confidence),
            "duplicate" => Ok(Self::Duplicate),
            "none" => Ok(Self::None),
            _ => Err(Error::invalid(format!(
                "unknown edge strategy `{s}` (expected confidence, duplicate or none)"
            ))),
        }
    }
}

/// One column of the ablation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Cell {
    #[serde(rename = "origin")]
    Origin,
    #[serde(rename = "num")]
    Num,
    #[serde(rename = "num_C")]
    NumC,
    #[serde(rename = "llm")]
    Llm,
    #[serde(rename = "llm_C")]
    LlmC,
}

impl Cell {
    pub const ALL: [Cell; 5] = [Cell::Origin, Cell::Num, Cell::NumC, Cell::Llm, Cell::LlmC];

    pub fn as_str(self) -> &'static str {
        match self {
            Cell::Origin => "origin",
            Cell::Num => "num",
            Cell::NumC => "num_C",
            Cell::Llm => "llm",
            Cell::LlmC => "llm_C",
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Cell {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Cell::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown grid cell `{s}`")))
    }
}

fn default_prompt() -> PromptSpec {
    PromptSpec::preset("cora").expect("preset exists")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub variant: Variant,
    pub knn_k: usize,
    pub head_count: usize,
    pub imbalance_ratio: f64,
    /// Number of tail classes; falls back to the dataset metadata, then to
    /// the below-median rule.
    pub tail_class_count: Option<usize>,
    pub val_fraction: f64,
    /// Edges written into the augmented dataset.
    pub edge_strategy: EdgeStrategy,
    pub edge_factor: usize,
    pub tau_conf: f64,
    pub edge_selection: Selection,
    pub allow_synthetic_targets: bool,
    pub encoder: EncoderConfig,
    pub generator: GeneratorConfig,
    #[serde(default = "default_prompt")]
    pub prompt: PromptSpec,
    pub classifier: TrainConfig,
    pub confidence: TrainConfig,
    pub numeric_mode: NumericMode,
    pub beta_alpha: f64,
    /// Split, twin schedule, confidence net and numeric interpolation seed.
    pub seed: u64,
    /// Classifier seeds of the evaluation repeats.
    pub seeds: Vec<u64>,
    pub grid: Vec<Cell>,
    pub out: PathBuf,
    pub verify: VerifyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::from("data"),
            variant: Variant::S,
            knn_k: 3,
            head_count: 20,
            imbalance_ratio: 0.1,
            tail_class_count: None,
            val_fraction: 0.25,
            edge_strategy: EdgeStrategy::Confidence,
            edge_factor: 20,
            tau_conf: 0.0,
            edge_selection: Selection::Global,
            allow_synthetic_targets: false,
            encoder: EncoderConfig::default(),
            generator: GeneratorConfig::default(),
            prompt: default_prompt(),
            classifier: TrainConfig::gcn(),
            confidence: TrainConfig::mlp(),
            numeric_mode: NumericMode::Smote,
            beta_alpha: 1.0,
            seed: 0,
            seeds: (0..5).collect(),
            grid: Cell::ALL.to_vec(),
            out: PathBuf::from("runs/latest"),
            verify: VerifyConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|_| Error::MissingFile(path.to_path_buf()))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            file: path.to_path_buf(),
            line: e.line(),
            msg: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.knn_k == 0 {
            return Err(Error::invalid("knn_k must be at least 1"));
        }
        if self.head_count == 0 {
            return Err(Error::invalid("head_count must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("seeds must not be empty"));
        }
        if self.grid.is_empty() {
            return Err(Error::invalid("grid must name at least one cell"));
        }
        self.edge_config().validate()?;
        self.classifier.validate()?;
        self.confidence.validate()?;
        self.generator.validate()?;
        self.prompt.validate()
    }

    pub fn edge_config(&self) -> EdgeAssignConfig {
        EdgeAssignConfig {
            factor: self.edge_factor,
            threshold: self.tau_conf,
            allow_synthetic_targets: self.allow_synthetic_targets,
            selection: self.edge_selection,
        }
    }

    /// SHA-256 over the config JSON, with the dataset and output paths
    /// blanked so relocated runs share a digest.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.dataset = PathBuf::new();
        c.out = PathBuf::new();
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}

/// SHA-256 over the dataset files, in a fixed order.
pub fn dataset_digest(dir: &Path) -> Result<String> {
    let mut h = Sha256::new();
    for name in [META_FILE, NODES_FILE, EDGES_FILE] {
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(|_| Error::MissingFile(path.clone()))?;
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub tail_classes: Vec<usize>,
    pub train_per_class: Vec<usize>,
    pub test_per_class: Vec<usize>,
}

impl SplitCounts {
    fn new(split: &LongTailSplit, labels: &[usize], class_count: usize) -> Self {
        let per_class = |idx: &[usize]| {
            let mut v = vec![0; class_count];
            for &i in idx {
                v[labels[i]] += 1;
            }
            v
        };
        Self {
            train: split.train_idx.len(),
            val: split.val_idx.len(),
            test: split.test_idx.len(),
            tail_classes: split.tail_classes.iter().copied().collect(),
            train_per_class: per_class(&split.train_idx),
            test_per_class: per_class(&split.test_idx),
        }
    }
}

/// Synthetic rows of one augmentation family plus both edge variants.
/// Edge targets are node ids in the merged graph (originals first, then
/// synthetic rows in order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSet {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub anchors: Vec<usize>,
    pub duplicate_edges: Vec<Vec<usize>>,
    pub confidence_edges: Vec<Vec<usize>>,
}

impl SyntheticSet {
    fn len(&self) -> usize {
        self.labels.len()
    }
}

/// Everything the evaluation stage needs, so it never touches the encoder
/// or generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub version: u32,
    pub config_digest: String,
    pub dataset_digest: String,
    pub class_names: Vec<String>,
    pub labels: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
    pub encoder_id: String,
    pub embeddings: Vec<Vec<f64>>,
    pub split: LongTailSplit,
    pub llm: SyntheticSet,
    pub numeric: SyntheticSet,
}

impl Artifacts {
    pub fn load(out: &Path) -> Result<Self> {
        let path = out.join(ARTIFACTS_FILE);
        let text = fs::read_to_string(&path).map_err(|_| Error::MissingFile(path.clone()))?;
        let a: Artifacts = serde_json::from_str(&text)?;
        if a.version != ARTIFACTS_VERSION {
            return Err(Error::invalid(format!(
                "artifact version {} is not supported (expected {ARTIFACTS_VERSION})",
                a.version
            )));
        }
        Ok(a)
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn embedding_matrix(&self) -> Result<EmbeddingMatrix> {
        let dim = self.embeddings.first().map_or(0, Vec::len);
        EmbeddingMatrix::from_rows(&self.embeddings, dim, self.encoder_id.clone())
    }

    fn set(&self, cell: Cell) -> Option<&SyntheticSet> {
        match cell {
            Cell::Origin => None,
            Cell::Num | Cell::NumC => Some(&self.numeric),
            Cell::Llm | Cell::LlmC => Some(&self.llm),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AugmentReport {
    pub tool_version: String,
    pub config_digest: String,
    pub dataset_digest: String,
    pub seed: u64,
    pub variant: Variant,
    pub edge_strategy: EdgeStrategy,
    pub encoder_id: String,
    pub generator_id: String,
    pub split: SplitCounts,
    pub targets: BTreeMap<usize, usize>,
    pub original: GraphStats,
    pub augmented: GraphStats,
    pub generation: GenerationStats,
    /// Confidence scoring of the text synthetics, whatever strategy is written.
    pub edge_assignment: EdgeReport,
    /// Edges and isolated nodes in the written augmented graph.
    pub written_edges: usize,
    pub written_isolated: usize,
    pub numeric_mode: NumericMode,
    pub numeric_edge_assignment: EdgeReport,
    pub timings: BTreeMap<String, f64>,
}

struct Timer {
    start: Instant,
    laps: BTreeMap<String, f64>,
}

impl Timer {
    fn new() -> Self {
        Self {
            start: Instant::now(),
            laps: BTreeMap::new(),
        }
    }

    fn lap(&mut self, name: &str) {
        let now = Instant::now();
        self.laps.insert(name.to_string(), round4((now - self.start).as_secs_f64()));
        self.start = now;
    }
}

fn split_for(graph: &TextGraph, cfg: &RunConfig) -> Result<LongTailSplit> {
    let tail_rule = match cfg.tail_class_count.or(graph.tail_class_count()) {
        Some(n) => TailRule::Count(n),
        None => TailRule::BelowMedian,
    };
    make_split(
        graph,
        &SplitParams {
            head_count: cfg.head_count,
            imbalance_ratio: cfg.imbalance_ratio,
            tail_rule,
            val_fraction: cfg.val_fraction,
            seed: cfg.seed,
        },
    )
}

fn confidence_config(cfg: &RunConfig) -> TrainConfig {
    TrainConfig {
        seed: cfg.seed,
        ..cfg.confidence.clone()
    }
}

/// Runs the augmentation stages and persists the augmented dataset, the
/// generation cache, the evaluation artifacts and the augment report.
pub fn run_augment(cfg: &RunConfig) -> Result<AugmentReport> {
    cfg.validate()?;
    let mut timer = Timer::new();
    let graph = load_dataset(&cfg.dataset).stage("load")?;
    let data_digest = dataset_digest(&cfg.dataset).stage("load")?;
    let split = split_for(&graph, cfg).stage("split")?;
    let labels = graph.labels();
    let class_count = graph.class_count();
    timer.lap("load");

    let emb = encode(graph.texts(), &cfg.encoder).stage("encode")?;
    timer.lap("encode");

    let targets = default_targets(&split, labels);
    let pairs = find_vicinal_twins(&split, &emb, labels, cfg.knn_k, cfg.variant, &targets).stage("twins")?;
    let generator = build_generator(&cfg.generator).stage("generate")?;
    fs::create_dir_all(&cfg.out)?;
    let mut cache = GenerationCache::open(cfg.out.join(CACHE_FILE)).stage("generate")?;
    let corpus = SeedCorpus {
        texts: graph.texts(),
        labels,
        class_names: graph.class_names(),
    };
    let generated = generate_interpolations(
        &pairs,
        cfg.variant,
        generator.as_ref(),
        &cfg.generator,
        &cfg.prompt,
        corpus,
        &mut cache,
    )
    .stage("generate")?;
    timer.lap("generate");

    let texts: Vec<String> = generated.nodes.iter().map(|n| n.text.clone()).collect();
    let synth_emb = encode(&texts, &cfg.encoder).stage("encode_synthetic")?;
    let mut nodes: Vec<SyntheticNode> = generated.nodes;
    for (node, row) in nodes.iter_mut().zip(synth_emb.rows().rows()) {
        node.embedding = Some(row.to_vec());
    }
    timer.lap("encode_synthetic");

    let conf = train_confidence(&emb, labels, &split.train_idx, class_count, &confidence_config(cfg))
        .stage("confidence")?;
    timer.lap("confidence");

    let edge_cfg = cfg.edge_config();
    let (confident, edge_report) = assign_edges(&nodes, &emb, &conf, &edge_cfg).stage("edges")?;
    let neighbors = graph.neighbors();

    // Same-class pairs feed the numeric family whatever the text variant.
    let numeric_pairs = match cfg.numeric_mode {
        NumericMode::Mixup => pairs.clone(),
        _ => find_vicinal_twins(&split, &emb, labels, cfg.knn_k, Variant::S, &targets).stage("numeric")?,
    };
    let numeric = numeric_augment(
        &emb,
        labels,
        class_count,
        &numeric_pairs,
        cfg.numeric_mode,
        &InterpolationParams {
            lambda: None,
            beta_alpha: cfg.beta_alpha,
            seed: cfg.seed,
        },
    )
    .stage("numeric")?;
    let (numeric_conf_edges, numeric_edge_report) =
        assign_edges_rows(numeric.rows.view(), &emb, &conf, &edge_cfg).stage("numeric")?;
    timer.lap("edges");

    let written: Vec<SyntheticNode> = match cfg.edge_strategy {
        EdgeStrategy::Confidence => confident.clone(),
        EdgeStrategy::Duplicate => nodes
            .iter()
            .map(|n| {
                let edges: Vec<(usize, f64)> = duplicate_edges(n.provenance.anchor, &neighbors)
                    .into_iter()
                    .map(|t| (t, 1.0))
                    .collect();
                SyntheticNode {
                    isolated: edges.is_empty(),
                    edges,
                    ..n.clone()
                }
            })
            .collect(),
        EdgeStrategy::None => nodes
            .iter()
            .map(|n| SyntheticNode {
                edges: Vec::new(),
                isolated: true,
                ..n.clone()
            })
            .collect(),
    };
    let augmented = merge_augmented(&graph, &written).stage("merge")?;
    let provenance = ProvenanceRecord::from_nodes(graph.node_count(), &written);
    write_dataset(&augmented, cfg.out.join(AUGMENTED_DIR), Some(&provenance)).stage("persist")?;

    let edge_ids = |list: &[(usize, f64)]| list.iter().map(|&(t, _)| t).collect::<Vec<_>>();
    let artifacts = Artifacts {
        version: ARTIFACTS_VERSION,
        config_digest: cfg.digest(),
        dataset_digest: data_digest.clone(),
        class_names: graph.class_names().to_vec(),
        labels: labels.to_vec(),
        edges: graph.edges().to_vec(),
        encoder_id: emb.encoder_id().to_string(),
        embeddings: emb.to_vecs(),
        split: split.clone(),
        llm: SyntheticSet {
            rows: synth_emb.to_vecs(),
            labels: nodes.iter().map(|n| n.label).collect(),
            anchors: nodes.iter().map(|n| n.provenance.anchor).collect(),
            duplicate_edges: nodes
                .iter()
                .map(|n| duplicate_edges(n.provenance.anchor, &neighbors))
                .collect(),
            confidence_edges: confident.iter().map(|n| edge_ids(&n.edges)).collect(),
        },
        numeric: SyntheticSet {
            rows: numeric.rows.rows().into_iter().map(|r| r.to_vec()).collect(),
            labels: numeric.labels.clone(),
            anchors: numeric.pairs.iter().map(|p| p.anchor).collect(),
            duplicate_edges: numeric
                .pairs
                .iter()
                .map(|p| duplicate_edges(p.anchor, &neighbors))
                .collect(),
            confidence_edges: numeric_conf_edges.iter().map(|l| edge_ids(l)).collect(),
        },
    };
    write_json(&cfg.out.join(ARTIFACTS_FILE), &artifacts).stage("persist")?;
    timer.lap("persist");

    let report = AugmentReport {
        tool_version: TOOL_VERSION.to_string(),
        config_digest: cfg.digest(),
        dataset_digest: data_digest,
        seed: cfg.seed,
        variant: cfg.variant,
        edge_strategy: cfg.edge_strategy,
        encoder_id: emb.encoder_id().to_string(),
        generator_id: generator.id(),
        split: SplitCounts::new(&split, labels, class_count),
        targets,
        original: graph_stats(&graph, Some(&split)),
        augmented: graph_stats(&augmented, Some(&split)),
        generation: generated.stats,
        edge_assignment: edge_report,
        written_edges: written.iter().map(|n| n.edges.len()).sum(),
        written_isolated: written.iter().filter(|n| n.isolated).count(),
        numeric_mode: cfg.numeric_mode,
        numeric_edge_assignment: numeric_edge_report,
        timings: timer.laps,
    };
    write_json(&cfg.out.join(AUGMENT_REPORT_FILE), &report).stage("persist")?;
    Ok(report)
}

/// Features, adjacency and training mask of one grid cell.
pub struct CellData {
    pub features: Array2<f64>,
    pub edges: Vec<(usize, usize)>,
    pub labels: Vec<usize>,
    pub train_idx: Vec<usize>,
    pub synthetic: usize,
}

pub fn cell_data(artifacts: &Artifacts, cell: Cell) -> Result<CellData> {
    let emb = artifacts.embedding_matrix()?;
    let n = artifacts.labels.len();
    let mut labels = artifacts.labels.clone();
    let mut edges = artifacts.edges.clone();
    let mut train_idx = artifacts.split.train_idx.clone();
    let Some(set) = artifacts.set(cell) else {
        return Ok(CellData {
            features: emb.into_rows(),
            edges,
            labels,
            train_idx,
            synthetic: 0,
        });
    };
    let synth = EmbeddingMatrix::from_rows(&set.rows, emb.dim(), emb.encoder_id())?;
    let features = emb.stacked(synth.rows())?.into_rows();
    let lists = match cell {
        Cell::NumC | Cell::LlmC => &set.confidence_edges,
        _ => &set.duplicate_edges,
    };
    for (i, targets) in lists.iter().enumerate() {
        let id = n + i;
        edges.extend(targets.iter().map(|&t| (t.min(id), t.max(id))));
    }
    edges.sort_unstable();
    edges.dedup();
    labels.extend(&set.labels);
    train_idx.extend(n..n + set.len());
    Ok(CellData {
        features,
        edges,
        labels,
        train_idx,
        synthetic: set.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self {
            mean: round4(mean),
            std: round4(std),
            n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub cell: Cell,
    pub nodes: usize,
    pub edges: usize,
    pub synthetic: usize,
    pub train_size: usize,
    pub acc: MeanStd,
    pub bacc: MeanStd,
    pub macro_f1: MeanStd,
    pub gmean: MeanStd,
    pub per_class_recall: Vec<MeanStd>,
    pub head_accuracy: MeanStd,
    pub tail_accuracy: MeanStd,
    /// Head minus tail accuracy.
    pub head_tail_gap: MeanStd,
    pub final_train_loss: MeanStd,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticStats {
    pub count: usize,
    pub bcr: f64,
    pub bps: f64,
    pub icr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub holds: bool,
    pub slack: f64,
    pub bound: f64,
}

impl From<BoundCheck> for BoundReport {
    fn from(b: BoundCheck) -> Self {
        Self {
            holds: b.holds,
            slack: round4(b.slack),
            bound: round4(b.bound),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryBlock {
    pub cell: Cell,
    pub seed: u64,
    pub gamma0: f64,
    pub delta: f64,
    pub bcr: f64,
    pub gamma_min_aug: f64,
    pub boundary_samples: usize,
    pub risk_orig: f64,
    pub risk_aug: f64,
    pub lipschitz: f64,
    /// Check outcomes, or the reason a check could not be evaluated.
    pub margin_bound: std::result::Result<BoundReport, String>,
    pub margin_bound_supported: std::result::Result<BoundReport, String>,
    pub vicinal_risk_bound: std::result::Result<BoundReport, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tool_version: String,
    pub config_digest: String,
    pub artifacts_config_digest: String,
    pub dataset_digest: String,
    pub seeds: Vec<u64>,
    pub split: SplitCounts,
    pub cells: Vec<CellReport>,
    pub synthetic: BTreeMap<String, SyntheticStats>,
    pub theory: Option<TheoryBlock>,
    pub notes: Vec<String>,
    pub timings: BTreeMap<String, f64>,
}

impl EvalReport {
    pub fn cell(&self, cell: Cell) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.cell == cell)
    }
}

pub fn report_file_name(grid: &[Cell]) -> String {
    let names: Vec<&str> = grid.iter().map(|c| c.as_str()).collect();
    format!("report-{}.json", names.join("-"))
}

struct SeedRun {
    model: ClassifierModel,
    logits: Array2<f64>,
}

fn train_cell(data: &CellData, class_count: usize, cfg: &TrainConfig, seed: u64) -> Result<SeedRun> {
    let adj = normalized_adjacency_from_edges(data.labels.len(), &data.edges);
    let cfg = TrainConfig { seed, ..cfg.clone() };
    let model = train_classifier(
        ModelKind::Gcn,
        &data.features,
        Some(&adj),
        &data.labels,
        &data.train_idx,
        class_count,
        &cfg,
    )?;
    let logits = predict(&model, &data.features, Some(&adj))?.logits;
    Ok(SeedRun { model, logits })
}

fn mean_of(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Trains a probe on a class-balanced subset of `pool`: each class
/// contributes its lowest-id `min count` members.
fn balanced_probe(emb: &EmbeddingMatrix, labels: &[usize], pool: &[usize], class_count: usize, cfg: &TrainConfig) -> Result<ClassifierModel> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); class_count];
    for &v in pool {
        by_class[labels[v]].push(v);
    }
    let take = by_class.iter().filter(|m| !m.is_empty()).map(Vec::len).min().unwrap_or(0);
    let mut subset: Vec<usize> = by_class.iter_mut().flat_map(|m| {
        m.sort_unstable();
        m.iter().copied().take(take).collect::<Vec<_>>()
    }).collect();
    subset.sort_unstable();
    let rows = emb.rows().select(Axis(0), &subset);
    let sub_labels: Vec<usize> = subset.iter().map(|&v| labels[v]).collect();
    let local: Vec<usize> = (0..subset.len()).collect();
    train_classifier(ModelKind::Mlp, &rows, None, &sub_labels, &local, class_count, cfg)
}

fn synthetic_stats(
    artifacts: &Artifacts,
    set: &SyntheticSet,
    reference: &ManifoldIndex,
    centroids: &[Option<ndarray::Array1<f64>>],
    probe: &ClassifierModel,
    k: usize,
) -> Result<SyntheticStats> {
    if set.len() == 0 {
        return Ok(SyntheticStats {
            count: 0,
            bcr: 0.0,
            bps: 0.0,
            icr: 0.0,
        });
    }
    let dim = artifacts.embeddings.first().map_or(0, Vec::len);
    let rows = EmbeddingMatrix::from_rows(&set.rows, dim, artifacts.encoder_id.clone())?.into_rows();
    Ok(SyntheticStats {
        count: set.len(),
        bcr: round4(bcr(rows.view(), &set.labels, reference, k)?),
        bps: round4(bps(rows.view(), &set.labels, centroids)?),
        icr: round4(icr(&rows, &set.labels, probe)?),
    })
}

fn bound_result(r: Result<BoundCheck>) -> std::result::Result<BoundReport, String> {
    r.map(BoundReport::from).map_err(|e| e.to_string())
}

fn theory_block(
    artifacts: &Artifacts,
    cell: Cell,
    seed: u64,
    origin: &SeedRun,
    aug: &SeedRun,
    reference: &ManifoldIndex,
    k: usize,
) -> Result<TheoryBlock> {
    let n = artifacts.labels.len();
    let set = artifacts.set(cell).expect("synthetic cell");
    let train = &artifacts.split.train_idx;
    let train_labels: Vec<usize> = train.iter().map(|&v| artifacts.labels[v]).collect();

    let orig_logits = origin.logits.select(Axis(0), train);
    let gamma0 = margins(orig_logits.view(), &train_labels)?.gamma_min;
    let risk_orig = mean_of(cross_entropy_rows(orig_logits.view(), &train_labels).into_iter());

    let synth_ids: Vec<usize> = (n..n + set.len()).collect();
    let aug_synth = aug.logits.select(Axis(0), &synth_ids);
    let synth_margins = margins(aug_synth.view(), &set.labels)?.margins;
    let aug_train = aug.logits.select(Axis(0), train);
    let gamma_min_aug = margins(aug_train.view(), &train_labels)?
        .gamma_min
        .min(synth_margins.iter().copied().fold(f64::INFINITY, f64::min));

    let dim = artifacts.embeddings.first().map_or(0, Vec::len);
    let rows = EmbeddingMatrix::from_rows(&set.rows, dim, artifacts.encoder_id.clone())?;
    let boundary: Vec<usize> = (0..set.len())
        .filter(|&i| is_boundary(rows.row(i), set.labels[i], reference, k))
        .collect();
    let bcr_value = boundary.len() as f64 / set.len().max(1) as f64;
    let delta = boundary
        .iter()
        .map(|&i| synth_margins[i].abs())
        .fold(gamma0.max(0.0), f64::max);

    let losses = cross_entropy_rows(aug_synth.view(), &set.labels);
    let anchors: Vec<usize> = set.anchors.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let risk_aug = vicinal_risk_from_losses(&losses, &set.anchors, &anchors)?;

    Ok(TheoryBlock {
        cell,
        seed,
        gamma0: round4(gamma0),
        delta: round4(delta),
        bcr: round4(bcr_value),
        gamma_min_aug: round4(gamma_min_aug),
        boundary_samples: boundary.len(),
        risk_orig: round4(risk_orig),
        risk_aug: round4(risk_aug),
        lipschitz: round4(CE_LIPSCHITZ),
        margin_bound: bound_result(check_margin_bound(gamma0, delta, bcr_value, gamma_min_aug)),
        margin_bound_supported: bound_result(check_margin_bound_supported(gamma0, delta, bcr_value, gamma_min_aug)),
        vicinal_risk_bound: bound_result(check_vicinal_risk_bound(
            risk_orig,
            risk_aug,
            CE_LIPSCHITZ,
            gamma0,
            delta,
            bcr_value,
        )),
    })
}

/// Trains a GCN per grid cell and seed from persisted artifacts and writes
/// the evaluation report.
pub fn run_train_eval(cfg: &RunConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let mut timer = Timer::new();
    let artifacts = Artifacts::load(&cfg.out).stage("load_artifacts")?;
    let class_count = artifacts.class_count();
    let split = &artifacts.split;
    let labels = &artifacts.labels;
    let test = &split.test_idx;
    timer.lap("load");

    let mut cells = Vec::new();
    let mut origin_run = None;
    let mut theory_run: Option<(Cell, SeedRun)> = None;
    for &cell in &cfg.grid {
        let data = cell_data(&artifacts, cell).stage("cell")?;
        let mut per_metric: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        let mut recalls: Vec<Vec<f64>> = vec![Vec::new(); class_count];
        for (i, &seed) in cfg.seeds.iter().enumerate() {
            let run = train_cell(&data, class_count, &cfg.classifier, seed).stage("train")?;
            let pred: Vec<usize> = test
                .iter()
                .map(|&v| crate::neural::argmax(run.logits.row(v)))
                .collect();
            let truth: Vec<usize> = test.iter().map(|&v| labels[v]).collect();
            let cm = ConfusionMatrix::from_predictions(&truth, &pred, class_count)?;
            let m = classification_metrics(&cm).stage("metrics")?;
            let class_recall = cm.recalls();
            let head = mean_of((0..class_count).filter(|c| !split.is_tail(*c)).filter_map(|c| class_recall[c]));
            let tail = mean_of(split.tail_classes.iter().filter_map(|&c| class_recall[c]));
            for (name, value) in [
                ("acc", m.acc),
                ("bacc", m.bacc),
                ("macro_f1", m.macro_f1),
                ("gmean", m.gmean),
                ("head", head),
                ("tail", tail),
                ("gap", head - tail),
                ("loss", run.model.history.last().copied().unwrap_or(f64::NAN)),
            ] {
                per_metric.entry(name).or_default().push(value);
            }
            for (c, r) in class_recall.iter().enumerate() {
                if let Some(r) = r {
                    recalls[c].push(*r);
                }
            }
            if i == 0 {
                match cell {
                    Cell::Origin => origin_run = Some(run),
                    Cell::LlmC => theory_run = Some((cell, run)),
                    Cell::Llm if theory_run.is_none() => theory_run = Some((cell, run)),
                    _ => {}
                }
            }
        }
        let stat = |k: &str| MeanStd::of(&per_metric[k]);
        cells.push(CellReport {
            cell,
            nodes: data.labels.len(),
            edges: data.edges.len(),
            synthetic: data.synthetic,
            train_size: data.train_idx.len(),
            acc: stat("acc"),
            bacc: stat("bacc"),
            macro_f1: stat("macro_f1"),
            gmean: stat("gmean"),
            per_class_recall: recalls.iter().map(|r| MeanStd::of(r)).collect(),
            head_accuracy: stat("head"),
            tail_accuracy: stat("tail"),
            head_tail_gap: stat("gap"),
            final_train_loss: stat("loss"),
            epochs: cfg.classifier.epochs,
        });
        timer.lap(&format!("train_{cell}"));
    }

    let emb = artifacts.embedding_matrix()?;
    let reference_idx: Vec<usize> = {
        let mut v: Vec<usize> = split.train_idx.iter().chain(&split.val_idx).copied().collect();
        v.sort_unstable();
        v
    };
    let mut synthetic = BTreeMap::new();
    let families: Vec<(&str, &SyntheticSet)> = [("llm", [Cell::Llm, Cell::LlmC], &artifacts.llm), ("num", [Cell::Num, Cell::NumC], &artifacts.numeric)]
        .into_iter()
        .filter(|(_, cells, _)| cells.iter().any(|c| cfg.grid.contains(c)))
        .map(|(name, _, set)| (name, set))
        .collect();
    let reference = ManifoldIndex::from_subset(emb.rows().view(), labels, &reference_idx);
    if !families.is_empty() {
        let centroids = class_centroids(&emb, labels, &reference_idx, class_count);
        let probe_cfg = TrainConfig {
            seed: cfg.seed,
            ..cfg.confidence.clone()
        };
        let probe = balanced_probe(&emb, labels, &reference_idx, class_count, &probe_cfg).stage("probe")?;
        for (name, set) in families {
            synthetic.insert(
                name.to_string(),
                synthetic_stats(&artifacts, set, &reference, &centroids, &probe, cfg.knn_k).stage("synthetic_stats")?,
            );
        }
    }
    timer.lap("synthetic_stats");

    let theory = match (&origin_run, &theory_run) {
        (Some(origin), Some((cell, aug))) if artifacts.set(*cell).is_some_and(|s| s.len() > 0) => Some(
            theory_block(&artifacts, *cell, cfg.seeds[0], origin, aug, &reference, cfg.knn_k).stage("theory")?,
        ),
        _ => None,
    };
    timer.lap("theory");

    let report = EvalReport {
        tool_version: TOOL_VERSION.to_string(),
        config_digest: cfg.digest(),
        artifacts_config_digest: artifacts.config_digest.clone(),
        dataset_digest: artifacts.dataset_digest.clone(),
        seeds: cfg.seeds.clone(),
        split: SplitCounts::new(split, labels, class_count),
        cells,
        synthetic,
        theory,
        notes: vec![BPS_NOTE.to_string()],
        timings: timer.laps,
    };
    write_json(&cfg.out.join(report_file_name(&cfg.grid)), &report).stage("persist")?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    pub graph: GraphStats,
    pub class_names: Vec<String>,
    pub class_frequencies: Vec<usize>,
    pub split: SplitCounts,
    pub dataset_digest: String,
}

/// Dataset and split summary without running any stage.
pub fn run_stats(cfg: &RunConfig) -> Result<StatsReport> {
    let graph = load_dataset(&cfg.dataset).stage("load")?;
    let split = split_for(&graph, cfg).stage("split")?;
    Ok(StatsReport {
        graph: graph_stats(&graph, Some(&split)),
        class_names: graph.class_names().to_vec(),
        class_frequencies: graph.class_frequencies(),
        split: SplitCounts::new(&split, graph.labels(), graph.class_count()),
        dataset_digest: dataset_digest(&cfg.dataset)?,
    })
}

/// Parses a report and drops its `timings` fields, for determinism
/// comparisons.
pub fn strip_timings(report_json: &str) -> Result<serde_json::Value> {
    let mut v: serde_json::Value = serde_json::from_str(report_json)?;
    if let Some(obj) = v.as_object_mut() {
        obj.remove("timings");
    }
    Ok(v)
}
