//! Duplicate-question retrieval for community QA: corpus loading, lexical and
//! semantic features, LambdaMART ranking, evaluation and feature importance.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the bottom of this file fix it to `f64`, with `*32` variants for `f32`.

// NaN-rejecting parameter checks read best as `!(x > 0)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corpus;
pub mod dataset;
pub mod embedding;
pub mod features;
pub mod importance;
pub mod lambdamart;
pub mod metrics;
pub mod pipeline;
pub mod scalar;
pub mod stats;
pub mod text;
pub mod tree;

pub use corpus::{
    load_splits, parse_corpus, parse_judgments, Corpus, CorpusError, Judgments, LinkJudgment, QaRecord,
    QuerySplit, SplitKind,
};
pub use dataset::{build_dataset, read_libsvm, write_libsvm, DatasetError, FeatureSubset};
pub use embedding::{cosine, EmbedError, Embedder, FallbackEmbedder, RemoteConfig, RemoteEmbedder};
pub use features::{FeatureError, FeatureExtractor, TermBasis, TokenizedCorpus, FEATURES, FEATURE_COUNT};
pub use importance::{auxiliary_importance, gain_importance, split_gain, AuxiliaryLoss, GainError};
pub use lambdamart::{lambda_gradients, score, train, TrainError};
pub use metrics::{average_precision_at_k, evaluate, ndcg_at_k};
pub use scalar::Real;
pub use stats::{StatsError, Stream};
pub use text::{concat_answers, tokenize, TokenizedText};

use thiserror::Error;

/// Any failure of the library, grouped for exit-code mapping.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Gain(#[from] GainError),
    #[error(transparent)]
    Pipeline(#[from] pipeline::PipelineError),
}

pub type Stats = stats::CorpusStats<f64>;
pub type Features = features::FeatureVector<f64>;
pub type Dataset = dataset::RankingDataset<f64>;
pub type Params = lambdamart::BoostParams<f64>;
pub type Model = lambdamart::RankModel<f64>;
pub type Report = metrics::MetricReport<f64>;
pub type Importance = importance::ImportanceReport<f64>;

pub type Stats32 = stats::CorpusStats<f32>;
pub type Features32 = features::FeatureVector<f32>;
pub type Dataset32 = dataset::RankingDataset<f32>;
pub type Params32 = lambdamart::BoostParams<f32>;
pub type Model32 = lambdamart::RankModel<f32>;
pub type Report32 = metrics::MetricReport<f32>;
pub type Importance32 = importance::ImportanceReport<f32>;
