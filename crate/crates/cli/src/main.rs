use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cqarank::corpus::{self, SplitKind};
use cqarank::dataset::FeatureSubset;
use cqarank::embedding::RemoteConfig;
use cqarank::features::TokenizedCorpus;
use cqarank::importance::AuxiliaryLoss;
use cqarank::pipeline::{
    self, ablation_tsv, EmbedderConfig, ExperimentConfig, ImportanceSource, PipelineError, Stage,
};

#[derive(Parser)]
#[command(name = "cqarank", version, about = "Rank similar questions in a community QA corpus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate corpus, judgments and splits.
    Ingest(Common),
    /// Build question and answer stream statistics.
    Stats(Common),
    /// Compute the 35 features of every judged pair.
    Extract(Common),
    /// Write per-split LibSVM files for the chosen subset.
    Export(Common),
    /// Train a LambdaMART model on the exported train/dev files.
    Train(Common),
    /// Score a split with the trained model and report MAP/NDCG.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        /// Include one line per query.
        #[arg(long)]
        per_query: bool,
    },
    /// Gain-based feature importance.
    Importance {
        #[command(flatten)]
        common: Common,
        /// Fit an auxiliary ensemble under this loss instead of reading the model.
        #[arg(long, value_enum)]
        aux: Option<AuxArg>,
    },
    /// Run every stage end to end.
    Pipeline(Common),
    /// Compare the all / no_bert / qq_only / qa_only feature subsets.
    Ablate(Common),
}

#[derive(Args, Clone, Default)]
struct Common {
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Directory holding corpus.tsv, judgments.tsv, train.txt, dev.txt, test.txt.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    judgments: Option<PathBuf>,
    #[arg(long)]
    train_split: Option<PathBuf>,
    #[arg(long)]
    dev_split: Option<PathBuf>,
    #[arg(long)]
    test_split: Option<PathBuf>,
    #[arg(long, value_parser = parse_subset)]
    subset: Option<FeatureSubset>,
    #[arg(long, value_enum)]
    embedder: Option<EmbedderArg>,
    /// Base URL of the embedding service; implies --embedder remote.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    num_rounds: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmbedderArg {
    Fallback,
    Remote,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Dev,
    Test,
}

#[derive(Clone, Copy, ValueEnum)]
enum AuxArg {
    Regression,
    Classification,
}

fn parse_subset(s: &str) -> Result<FeatureSubset, String> {
    s.parse().map_err(|e: cqarank::DatasetError| e.to_string())
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig, PipelineError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => {
                let data = self.data_dir.clone().unwrap_or_else(|| PathBuf::from("."));
                ExperimentConfig::for_data_dir(&data, &PathBuf::from("out"))
            }
        };
        if let (Some(data), Some(_)) = (&self.data_dir, &self.config) {
            let fresh = ExperimentConfig::for_data_dir(data, &cfg.out_dir);
            cfg.corpus = fresh.corpus;
            cfg.judgments = fresh.judgments;
            cfg.train_split = fresh.train_split;
            cfg.dev_split = fresh.dev_split;
            cfg.test_split = fresh.test_split;
        }
        let set = |slot: &mut PathBuf, v: &Option<PathBuf>| {
            if let Some(v) = v {
                *slot = v.clone();
            }
        };
        set(&mut cfg.out_dir, &self.out_dir);
        set(&mut cfg.corpus, &self.corpus);
        set(&mut cfg.judgments, &self.judgments);
        set(&mut cfg.train_split, &self.train_split);
        set(&mut cfg.dev_split, &self.dev_split);
        set(&mut cfg.test_split, &self.test_split);
        if let Some(s) = self.subset {
            cfg.subset = s;
        }
        if let Some(t) = self.threads {
            cfg.threads = Some(t);
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.num_rounds {
            cfg.boost.num_rounds = n;
        }
        match (self.embedder, &self.endpoint) {
            (Some(EmbedderArg::Fallback), _) => cfg.embedder = EmbedderConfig::Fallback,
            (_, Some(endpoint)) => {
                let mut remote = match &cfg.embedder {
                    EmbedderConfig::Remote(r) => r.clone(),
                    EmbedderConfig::Fallback => RemoteConfig::default(),
                };
                remote.endpoint = endpoint.clone();
                cfg.embedder = EmbedderConfig::Remote(remote);
            }
            (Some(EmbedderArg::Remote), None) => {
                if !matches!(cfg.embedder, EmbedderConfig::Remote(_)) {
                    return Err(PipelineError::Config("--embedder remote needs --endpoint".into()));
                }
            }
            (None, None) => {}
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn split_kind(s: SplitArg) -> SplitKind {
    match s {
        SplitArg::Train => SplitKind::Train,
        SplitArg::Dev => SplitKind::Dev,
        SplitArg::Test => SplitKind::Test,
    }
}

fn to_json<S: serde::Serialize>(v: &S) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

fn run(command: Command) -> Result<(), PipelineError> {
    let common = match &command {
        Command::Ingest(c)
        | Command::Stats(c)
        | Command::Extract(c)
        | Command::Export(c)
        | Command::Train(c)
        | Command::Pipeline(c)
        | Command::Ablate(c) => c,
        Command::Eval { common, .. } | Command::Importance { common, .. } => common,
    };
    let cfg = common.resolve()?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
    }
    log::info!("config hash {} seed {}", cfg.hash(), cfg.seed);

    match command {
        Command::Ingest(_) => {
            let (_, summary) = pipeline::run_ingest(&cfg)?;
            println!("{}", to_json(&summary));
        }
        Command::Stats(_) => {
            let corpus = corpus::parse_corpus(&cfg.corpus).map_err(|e| PipelineError::Stage {
                stage: Stage::Stats,
                source: Box::new(e.into()),
            })?;
            let tokens = TokenizedCorpus::new(&corpus);
            let (q, a) = pipeline::run_stats(&cfg, &tokens)?;
            println!("stream\tdocs\tavdl\tvocabulary");
            for s in [&q, &a] {
                println!("{}\t{}\t{}\t{}", s.stream().suffix(), s.n_docs(), s.avdl(), s.vocabulary_size());
            }
        }
        Command::Extract(_) => {
            let rows = pipeline::run_extract(&cfg)?;
            println!("{} feature rows -> {}", rows.len(), cfg.path(pipeline::FEATURE_TABLE).display());
        }
        Command::Export(_) => {
            for ds in pipeline::run_export(&cfg)? {
                println!(
                    "{}\t{} groups\t{} rows\t{} features",
                    ds.split,
                    ds.groups.len(),
                    ds.num_rows(),
                    ds.width()
                );
            }
        }
        Command::Train(_) => {
            let model = pipeline::run_train(&cfg)?;
            println!("{} trees -> {}", model.trees.len(), cfg.path(pipeline::MODEL_FILE).display());
        }
        Command::Eval { split, per_query, .. } => {
            let report = pipeline::run_eval(&cfg, split_kind(split), per_query)?;
            print!("{}", report.to_tsv());
        }
        Command::Importance { aux, .. } => {
            let source = match aux {
                None => ImportanceSource::Ranker,
                Some(AuxArg::Regression) => ImportanceSource::Auxiliary(AuxiliaryLoss::Regression),
                Some(AuxArg::Classification) => ImportanceSource::Auxiliary(AuxiliaryLoss::Classification),
            };
            print!("{}", pipeline::run_importance(&cfg, source)?.to_tsv());
        }
        Command::Pipeline(_) => {
            let out = pipeline::run_pipeline(&cfg)?;
            print!("{}", out.report.without_breakdown().to_tsv());
        }
        Command::Ablate(_) => {
            print!("{}", ablation_tsv(&pipeline::run_ablation(&cfg)?));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // error messages already embed their sources
            eprintln!("error: {e}");
            ExitCode::from(e.category().exit_code() as u8)
        }
    }
}
