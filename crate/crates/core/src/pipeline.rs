//! Experiment configuration and the staged pipeline behind the command line.
//!
//! Every stage reads its inputs from and writes its artifacts to `out_dir`, so
//! stages can run one at a time or chained. `manifest.json` records the config
//! hash and a SHA-256 for every artifact written.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error as ThisError;

use crate::corpus::{self, Corpus, Judgments, QuerySplit, SplitConsistency, SplitKind};
use crate::dataset::{self, FeatureSubset, RankingDataset};
use crate::embedding::{EmbedError, Embedder, EmbeddingTable, FallbackEmbedder, RemoteConfig, RemoteEmbedder};
use crate::features::{self, Bm25Params, FeatureError, FeatureExtractor, FeatureVector, TermBasis, TokenizedCorpus};
use crate::importance::{self, AuxiliaryLoss, ImportanceReport};
use crate::lambdamart::{self, BoostParams, RankModel, TrainError};
use crate::metrics::{self, MetricReport};
use crate::stats::CorpusStats;

pub const INGEST_SUMMARY: &str = "ingest.json";
pub const QUESTION_STATS: &str = "stats_Q.json";
pub const ANSWER_STATS: &str = "stats_A.json";
pub const FEATURE_TABLE: &str = "features.tsv";
pub const MODEL_FILE: &str = "model.json";
pub const TRAIN_LOG: &str = "train_log.tsv";
pub const MANIFEST: &str = "manifest.json";
pub const ABLATION_TABLE: &str = "ablation.tsv";

/// How many importance entries the plot payload carries.
const PLOT_TOP_K: usize = 20;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EmbedderConfig {
    #[default]
    Fallback,
    Remote(RemoteConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpus: PathBuf,
    pub judgments: PathBuf,
    pub train_split: PathBuf,
    pub dev_split: PathBuf,
    pub test_split: PathBuf,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub subset: FeatureSubset,
    #[serde(default)]
    pub bm25: Bm25Params<f64>,
    #[serde(default)]
    pub boost: BoostParams<f64>,
    #[serde(default)]
    pub tf_basis: TermBasis,
    #[serde(default)]
    pub embedder: EmbedderConfig,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; all cores when absent.
    #[serde(default)]
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    /// Config with default parameters for data under `data_dir` using the
    /// file names `corpus.tsv`, `judgments.tsv`, `train.txt`, `dev.txt`, `test.txt`.
    pub fn for_data_dir(data_dir: &Path, out_dir: &Path) -> Self {
        ExperimentConfig {
            corpus: data_dir.join("corpus.tsv"),
            judgments: data_dir.join("judgments.tsv"),
            train_split: data_dir.join("train.txt"),
            dev_split: data_dir.join("dev.txt"),
            test_split: data_dir.join("test.txt"),
            out_dir: out_dir.to_path_buf(),
            subset: FeatureSubset::default(),
            bm25: Bm25Params::default(),
            boost: BoostParams::default(),
            tf_basis: TermBasis::default(),
            embedder: EmbedderConfig::default(),
            seed: 0,
            threads: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        Bm25Params::new(self.bm25.k1, self.bm25.b).map_err(|e| PipelineError::Config(e.to_string()))?;
        self.boost
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.threads == Some(0) {
            return Err(PipelineError::Config("threads must be at least 1".into()));
        }
        if let EmbedderConfig::Remote(r) = &self.embedder {
            if r.endpoint.is_empty() || !(r.timeout_secs > 0.0) {
                return Err(PipelineError::Config("remote embedder needs an endpoint and a positive timeout".into()));
            }
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON of everything that affects results
    /// (the output directory, thread count and cache location are left out).
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.out_dir = PathBuf::new();
        canon.threads = None;
        if let EmbedderConfig::Remote(r) = &mut canon.embedder {
            r.cache_dir = None;
        }
        // serde_json maps are ordered by key, so this text is canonical
        let value = serde_json::to_value(&canon).expect("config serializes");
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn libsvm_path(&self, split: SplitKind) -> PathBuf {
        self.path(&format!("{}.libsvm", split.name()))
    }

    pub fn metrics_path(&self, split: SplitKind, ext: &str) -> PathBuf {
        self.path(&format!("metrics_{}.{ext}", split.name()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Stats,
    Extract,
    Export,
    Train,
    Eval,
    Importance,
    Ablate,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Ingest => "ingest",
            Stage::Stats => "stats",
            Stage::Extract => "extract",
            Stage::Export => "export",
            Stage::Train => "train",
            Stage::Eval => "eval",
            Stage::Importance => "importance",
            Stage::Ablate => "ablate",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Remote,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Config => 2,
            ErrorCategory::Data => 3,
            ErrorCategory::Remote => 4,
        }
    }
}

#[derive(Debug, ThisError)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{stage}: {path}: {source}")]
    Io {
        stage: Stage,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{stage}: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<crate::Error>,
    },
}

impl PipelineError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            PipelineError::Config(_) => ErrorCategory::Config,
            PipelineError::Io { .. } => ErrorCategory::Data,
            PipelineError::Stage { source, .. } => source.category(),
        }
    }
}

fn embed_category(e: &EmbedError) -> ErrorCategory {
    match e {
        EmbedError::Cache { .. } => ErrorCategory::Data,
        _ => ErrorCategory::Remote,
    }
}

impl crate::Error {
    /// Configuration, data or remote-embedding failure.
    pub fn category(&self) -> ErrorCategory {
        match self {
            crate::Error::Embed(e) | crate::Error::Feature(FeatureError::Embed(e)) => embed_category(e),
            crate::Error::Feature(FeatureError::BadParams { .. }) | crate::Error::Train(TrainError::BadParams(_)) => {
                ErrorCategory::Config
            }
            crate::Error::Pipeline(p) => p.category(),
            _ => ErrorCategory::Data,
        }
    }
}

trait AtStage<V> {
    fn at(self, stage: Stage) -> Result<V, PipelineError>;
}

impl<V, E: Into<crate::Error>> AtStage<V> for Result<V, E> {
    fn at(self, stage: Stage) -> Result<V, PipelineError> {
        self.map_err(|e| PipelineError::Stage {
            stage,
            source: Box::new(e.into()),
        })
    }
}

fn write_file(stage: Stage, path: &Path, contents: &str) -> Result<(), PipelineError> {
    fs::write(path, contents).map_err(|source| PipelineError::Io {
        stage,
        path: path.to_path_buf(),
        source,
    })
}

fn to_json<S: Serialize>(value: &S) -> String {
    serde_json::to_string_pretty(value).expect("artifact serializes") + "\n"
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub stage: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub artifacts: BTreeMap<String, ArtifactEntry>,
}

/// Hashes the named artifacts into `manifest.json`, starting a fresh manifest
/// when the existing one belongs to another config.
fn stamp(cfg: &ExperimentConfig, stage: Stage, names: &[PathBuf]) -> Result<(), PipelineError> {
    let hash = cfg.hash();
    let path = cfg.path(MANIFEST);
    let mut manifest = fs::read_to_string(&path)
        .ok()
        .and_then(|t| serde_json::from_str::<Manifest>(&t).ok())
        .filter(|m| m.config_hash == hash)
        .unwrap_or_else(|| Manifest {
            config_hash: hash,
            seed: cfg.seed,
            config: cfg.clone(),
            artifacts: BTreeMap::new(),
        });
    for p in names {
        let bytes = fs::read(p).map_err(|source| PipelineError::Io {
            stage,
            path: p.clone(),
            source,
        })?;
        let name = p
            .strip_prefix(&cfg.out_dir)
            .unwrap_or(p)
            .to_string_lossy()
            .into_owned();
        manifest.artifacts.insert(
            name,
            ArtifactEntry {
                stage: stage.to_string(),
                sha256: hex::encode(Sha256::digest(&bytes)),
            },
        );
    }
    write_file(stage, &path, &to_json(&manifest))
}

fn ensure_out_dir(cfg: &ExperimentConfig, stage: Stage) -> Result<(), PipelineError> {
    fs::create_dir_all(&cfg.out_dir).map_err(|source| PipelineError::Io {
        stage,
        path: cfg.out_dir.clone(),
        source,
    })
}

/// Parsed inputs plus what ingest reported about them.
pub struct Inputs {
    pub corpus: Corpus,
    pub judgments: Judgments,
    pub splits: QuerySplit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestSummary {
    pub config_hash: String,
    pub records: usize,
    pub judgments: usize,
    pub dropped_judgments: usize,
    pub query_groups: usize,
    pub group_size_histogram: BTreeMap<usize, usize>,
    pub modal_group_size: Option<usize>,
    pub split_sizes: BTreeMap<String, usize>,
    pub split_consistency: SplitConsistency,
}

pub fn load_inputs(cfg: &ExperimentConfig) -> Result<Inputs, PipelineError> {
    let corpus = corpus::parse_corpus(&cfg.corpus).at(Stage::Ingest)?;
    let judgments = corpus::parse_judgments(&cfg.judgments, &corpus).at(Stage::Ingest)?;
    let splits = corpus::load_splits(&cfg.train_split, &cfg.dev_split, &cfg.test_split).at(Stage::Ingest)?;
    Ok(Inputs {
        corpus,
        judgments,
        splits,
    })
}

pub fn summarize(cfg: &ExperimentConfig, inputs: &Inputs) -> IngestSummary {
    let j = &inputs.judgments;
    IngestSummary {
        config_hash: cfg.hash(),
        records: inputs.corpus.len(),
        judgments: j.pairs.len(),
        dropped_judgments: j.dropped.len(),
        query_groups: j.query_ids().len(),
        group_size_histogram: j.group_size_histogram(),
        modal_group_size: j.modal_group_size(),
        split_sizes: SplitKind::ALL
            .iter()
            .map(|&k| (k.name().to_string(), inputs.splits.get(k).len()))
            .collect(),
        split_consistency: inputs.splits.check_against(j),
    }
}

/// Parses and validates the inputs and writes `ingest.json`.
pub fn run_ingest(cfg: &ExperimentConfig) -> Result<(Inputs, IngestSummary), PipelineError> {
    ensure_out_dir(cfg, Stage::Ingest)?;
    let inputs = load_inputs(cfg)?;
    let summary = summarize(cfg, &inputs);
    if summary.dropped_judgments > 0 {
        log::warn!("dropped {} judgments with unknown qids", summary.dropped_judgments);
    }
    if !summary.split_consistency.is_consistent() {
        log::warn!(
            "split files disagree with judgments: {} unsplit, {} unjudged",
            summary.split_consistency.unsplit.len(),
            summary.split_consistency.unjudged
        );
    }
    let path = cfg.path(INGEST_SUMMARY);
    write_file(Stage::Ingest, &path, &to_json(&summary))?;
    stamp(cfg, Stage::Ingest, &[path])?;
    Ok((inputs, summary))
}

/// Builds both stream statistics and writes their sidecars.
pub fn run_stats(
    cfg: &ExperimentConfig,
    tokens: &TokenizedCorpus<'_>,
) -> Result<(CorpusStats<f64>, CorpusStats<f64>), PipelineError> {
    ensure_out_dir(cfg, Stage::Stats)?;
    let (q, a) = tokens.build_stats::<f64>().at(Stage::Stats)?;
    let (qp, ap) = (cfg.path(QUESTION_STATS), cfg.path(ANSWER_STATS));
    q.save(&qp).at(Stage::Stats)?;
    a.save(&ap).at(Stage::Stats)?;
    stamp(cfg, Stage::Stats, &[qp, ap])?;
    Ok((q, a))
}

/// Stats from the sidecars when both exist, else freshly built.
pub fn load_or_build_stats(
    cfg: &ExperimentConfig,
    tokens: &TokenizedCorpus<'_>,
) -> Result<(CorpusStats<f64>, CorpusStats<f64>), PipelineError> {
    let (qp, ap) = (cfg.path(QUESTION_STATS), cfg.path(ANSWER_STATS));
    if qp.exists() && ap.exists() {
        let q = CorpusStats::load(&qp).at(Stage::Stats)?;
        let a = CorpusStats::load(&ap).at(Stage::Stats)?;
        return Ok((q, a));
    }
    run_stats(cfg, tokens)
}

pub fn make_embedder(cfg: &EmbedderConfig) -> Result<Box<dyn Embedder>, EmbedError> {
    Ok(match cfg {
        EmbedderConfig::Fallback => Box::new(FallbackEmbedder::default()),
        EmbedderConfig::Remote(r) => Box::new(RemoteEmbedder::new(r.clone())?),
    })
}

/// All 35 features of every judged pair, in judgment order.
pub fn extract_vectors(
    cfg: &ExperimentConfig,
    inputs: &Inputs,
    tokens: &TokenizedCorpus<'_>,
    stats: &(CorpusStats<f64>, CorpusStats<f64>),
) -> Result<Vec<FeatureVector<f64>>, PipelineError> {
    let provider = make_embedder(&cfg.embedder).at(Stage::Extract)?;
    let texts = features::texts_to_embed(&inputs.judgments.pairs, &inputs.corpus);
    let table = EmbeddingTable::precompute(provider, texts).at(Stage::Extract)?;
    log::info!("embedded {} distinct question texts", table.len());
    FeatureExtractor::new(&stats.0, &stats.1, cfg.bm25, &table)
        .with_basis(cfg.tf_basis)
        .extract_all(&inputs.judgments.pairs, tokens)
        .at(Stage::Extract)
}

pub fn run_extract(cfg: &ExperimentConfig) -> Result<Vec<FeatureVector<f64>>, PipelineError> {
    ensure_out_dir(cfg, Stage::Extract)?;
    let inputs = load_inputs(cfg)?;
    let tokens = TokenizedCorpus::new(&inputs.corpus);
    let stats = load_or_build_stats(cfg, &tokens)?;
    let vectors = extract_vectors(cfg, &inputs, &tokens, &stats)?;
    write_features(cfg, &vectors)?;
    Ok(vectors)
}

fn write_features(cfg: &ExperimentConfig, vectors: &[FeatureVector<f64>]) -> Result<(), PipelineError> {
    let path = cfg.path(FEATURE_TABLE);
    features::write_feature_table(&path, vectors).at(Stage::Extract)?;
    stamp(cfg, Stage::Extract, &[path])
}

/// One dataset per split, masked to `subset`.
pub fn build_splits(
    vectors: &[FeatureVector<f64>],
    splits: &QuerySplit,
    subset: FeatureSubset,
) -> Result<[RankingDataset<f64>; 3], PipelineError> {
    let build = |kind| dataset::build_dataset(vectors, splits, kind, subset).at(Stage::Export);
    Ok([build(SplitKind::Train)?, build(SplitKind::Dev)?, build(SplitKind::Test)?])
}

pub fn export_datasets(
    cfg: &ExperimentConfig,
    vectors: &[FeatureVector<f64>],
    splits: &QuerySplit,
) -> Result<[RankingDataset<f64>; 3], PipelineError> {
    let sets = build_splits(vectors, splits, cfg.subset)?;
    let mut written = Vec::new();
    for ds in &sets {
        let path = cfg.libsvm_path(ds.split);
        dataset::write_libsvm(ds, &path).at(Stage::Export)?;
        for side in [dataset::qidmap_path(&path), dataset::featmap_path(&path)] {
            if side.exists() {
                written.push(side);
            }
        }
        written.push(path);
    }
    stamp(cfg, Stage::Export, &written)?;
    Ok(sets)
}

pub fn run_export(cfg: &ExperimentConfig) -> Result<[RankingDataset<f64>; 3], PipelineError> {
    ensure_out_dir(cfg, Stage::Export)?;
    let splits = corpus::load_splits(&cfg.train_split, &cfg.dev_split, &cfg.test_split).at(Stage::Export)?;
    let vectors = features::read_feature_table::<f64>(&cfg.path(FEATURE_TABLE)).at(Stage::Export)?;
    export_datasets(cfg, &vectors, &splits)
}

pub fn load_dataset(cfg: &ExperimentConfig, split: SplitKind, stage: Stage) -> Result<RankingDataset<f64>, PipelineError> {
    dataset::read_libsvm(&cfg.libsvm_path(split), split).at(stage)
}

pub fn train_model(
    cfg: &ExperimentConfig,
    train: &RankingDataset<f64>,
    dev: &RankingDataset<f64>,
) -> Result<RankModel<f64>, PipelineError> {
    ensure_out_dir(cfg, Stage::Train)?;
    let outcome = lambdamart::train(train, dev, &cfg.boost).at(Stage::Train)?;
    let mut model = outcome.model.clone();
    model.config_hash = Some(cfg.hash());
    let (mp, lp) = (cfg.path(MODEL_FILE), cfg.path(TRAIN_LOG));
    model.save(&mp).at(Stage::Train)?;
    write_file(Stage::Train, &lp, &outcome.log_tsv())?;
    stamp(cfg, Stage::Train, &[mp, lp])?;
    Ok(model)
}

pub fn run_train(cfg: &ExperimentConfig) -> Result<RankModel<f64>, PipelineError> {
    let train = load_dataset(cfg, SplitKind::Train, Stage::Train)?;
    let dev = load_dataset(cfg, SplitKind::Dev, Stage::Train)?;
    train_model(cfg, &train, &dev)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct StampedReport<'a> {
    config_hash: String,
    split: &'static str,
    #[serde(flatten)]
    report: &'a MetricReport<f64>,
}

pub fn evaluate_model(
    cfg: &ExperimentConfig,
    model: &RankModel<f64>,
    ds: &RankingDataset<f64>,
    per_query: bool,
) -> Result<MetricReport<f64>, PipelineError> {
    let scored = lambdamart::score(model, ds).at(Stage::Eval)?;
    let mut report = metrics::evaluate(&scored);
    if !per_query {
        report = report.without_breakdown();
    }
    let (tp, jp) = (cfg.metrics_path(ds.split, "tsv"), cfg.metrics_path(ds.split, "json"));
    let stamped = StampedReport {
        config_hash: cfg.hash(),
        split: ds.split.name(),
        report: &report,
    };
    write_file(Stage::Eval, &tp, &report.to_tsv())?;
    write_file(Stage::Eval, &jp, &to_json(&stamped))?;
    stamp(cfg, Stage::Eval, &[tp, jp])?;
    Ok(report)
}

pub fn run_eval(cfg: &ExperimentConfig, split: SplitKind, per_query: bool) -> Result<MetricReport<f64>, PipelineError> {
    let model = RankModel::<f64>::load(&cfg.path(MODEL_FILE)).at(Stage::Eval)?;
    let ds = load_dataset(cfg, split, Stage::Eval)?;
    evaluate_model(cfg, &model, &ds, per_query)
}

/// Which ensemble the importance report is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ImportanceSource {
    /// The trained LambdaMART model.
    #[default]
    Ranker,
    Auxiliary(AuxiliaryLoss),
}

impl ImportanceSource {
    fn file_stem(self) -> &'static str {
        match self {
            ImportanceSource::Ranker => "importance",
            ImportanceSource::Auxiliary(AuxiliaryLoss::Regression) => "importance_regression",
            ImportanceSource::Auxiliary(AuxiliaryLoss::Classification) => "importance_classification",
        }
    }
}

pub fn write_importance(
    cfg: &ExperimentConfig,
    source: ImportanceSource,
    report: &ImportanceReport<f64>,
) -> Result<(), PipelineError> {
    ensure_out_dir(cfg, Stage::Importance)?;
    let stem = source.file_stem();
    let (tp, jp) = (cfg.path(&format!("{stem}.tsv")), cfg.path(&format!("{stem}_plot.json")));
    let mut plot = report.to_plot_json(PLOT_TOP_K);
    if let Some(obj) = plot.as_object_mut() {
        obj.insert("config_hash".into(), cfg.hash().into());
    }
    write_file(Stage::Importance, &tp, &report.to_tsv())?;
    write_file(Stage::Importance, &jp, &to_json(&plot))?;
    stamp(cfg, Stage::Importance, &[tp, jp])
}

pub fn run_importance(cfg: &ExperimentConfig, source: ImportanceSource) -> Result<ImportanceReport<f64>, PipelineError> {
    let report = match source {
        ImportanceSource::Ranker => {
            let model = RankModel::<f64>::load(&cfg.path(MODEL_FILE)).at(Stage::Importance)?;
            importance::gain_importance(&model)
        }
        ImportanceSource::Auxiliary(loss) => {
            let train = load_dataset(cfg, SplitKind::Train, Stage::Importance)?;
            importance::auxiliary_importance(&train, loss, &cfg.boost)
        }
    };
    write_importance(cfg, source, &report)?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub summary: IngestSummary,
    pub model: RankModel<f64>,
    pub report: MetricReport<f64>,
    pub importance: ImportanceReport<f64>,
}

/// ingest → stats → extract → export → train → evaluate (test) → importance.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<PipelineOutcome, PipelineError> {
    cfg.validate()?;
    log::info!("config hash {} seed {}", cfg.hash(), cfg.seed);
    let (inputs, summary) = run_ingest(cfg)?;
    let tokens = TokenizedCorpus::new(&inputs.corpus);
    let stats = run_stats(cfg, &tokens)?;
    let vectors = extract_vectors(cfg, &inputs, &tokens, &stats)?;
    write_features(cfg, &vectors)?;
    let [train, dev, test] = export_datasets(cfg, &vectors, &inputs.splits)?;
    let model = train_model(cfg, &train, &dev)?;
    let report = evaluate_model(cfg, &model, &test, true)?;
    let importance = importance::gain_importance(&model);
    write_importance(cfg, ImportanceSource::Ranker, &importance)?;
    Ok(PipelineOutcome {
        summary,
        model,
        report,
        importance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub subset: FeatureSubset,
    pub width: usize,
    pub report: MetricReport<f64>,
}

pub fn ablation_tsv(rows: &[AblationRow]) -> String {
    let mut out = String::from("subset\tfeatures\tmap@5\tmap@10\tndcg@5\tndcg@10\n");
    for r in rows {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.subset.name(),
            r.width,
            r.report.map5,
            r.report.map10,
            r.report.ndcg5,
            r.report.ndcg10
        )
        .unwrap();
    }
    out
}

/// Trains and evaluates one model per feature subset on the same full-width
/// splits; rows follow [`FeatureSubset::ALL`].
pub fn ablate_datasets(
    train: &RankingDataset<f64>,
    dev: &RankingDataset<f64>,
    test: &RankingDataset<f64>,
    params: &BoostParams<f64>,
) -> Result<Vec<AblationRow>, TrainError> {
    FeatureSubset::ALL
        .iter()
        .map(|&subset| {
            let ids = subset.ids();
            let outcome = lambdamart::train(&train.select(&ids), &dev.select(&ids), params)?;
            let scored = lambdamart::score(&outcome.model, &test.select(&ids))?;
            Ok(AblationRow {
                subset,
                width: ids.len(),
                report: metrics::evaluate(&scored).without_breakdown(),
            })
        })
        .collect()
}

/// Ingest and extraction once, then the four subsets; writes `ablation.tsv`.
pub fn run_ablation(cfg: &ExperimentConfig) -> Result<Vec<AblationRow>, PipelineError> {
    cfg.validate()?;
    ensure_out_dir(cfg, Stage::Ablate)?;
    let inputs = load_inputs(cfg)?;
    let tokens = TokenizedCorpus::new(&inputs.corpus);
    let stats = load_or_build_stats(cfg, &tokens)?;
    let vectors = extract_vectors(cfg, &inputs, &tokens, &stats)?;
    let [train, dev, test] = build_splits(&vectors, &inputs.splits, FeatureSubset::All)?;
    let rows = ablate_datasets(&train, &dev, &test, &cfg.boost).at(Stage::Ablate)?;
    let path = cfg.path(ABLATION_TABLE);
    write_file(Stage::Ablate, &path, &ablation_tsv(&rows))?;
    stamp(cfg, Stage::Ablate, &[path])?;
    Ok(rows)
}
