//! Frozen per-stream document statistics (document frequency, IDF, average length).

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;
use crate::text::TokenizedText;

pub const STATS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("cannot build statistics from an empty document collection")]
    EmptyCorpus,
    #[error("{path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("stats sidecar: {0}")]
    Format(#[from] serde_json::Error),
    #[error("unsupported stats sidecar version {0}")]
    Version(u32),
    #[error("term {term:?} has document frequency {df} outside 1..={n_docs}")]
    BadFrequency { term: String, df: u64, n_docs: u64 },
}

/// Which text a document collection is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stream {
    Question,
    Answer,
}

impl Stream {
    pub fn suffix(self) -> char {
        match self {
            Stream::Question => 'Q',
            Stream::Answer => 'A',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats<T> {
    stream: Stream,
    n_docs: u64,
    df: HashMap<String, u64>,
    avdl: T,
}

impl<T: Real> CorpusStats<T> {
    pub fn build(docs: &[TokenizedText], stream: Stream) -> Result<Self, StatsError> {
        if docs.is_empty() {
            return Err(StatsError::EmptyCorpus);
        }
        let mut df: HashMap<String, u64> = HashMap::new();
        let mut total_len = 0usize;
        for doc in docs {
            total_len += doc.len();
            for term in doc.distinct() {
                *df.entry(term.to_string()).or_insert(0) += 1;
            }
        }
        Ok(CorpusStats {
            stream,
            n_docs: docs.len() as u64,
            df,
            avdl: T::from_count(total_len) / T::from_count(docs.len()),
        })
    }

    pub fn stream(&self) -> Stream {
        self.stream
    }

    pub fn n_docs(&self) -> u64 {
        self.n_docs
    }

    pub fn avdl(&self) -> T {
        self.avdl
    }

    pub fn vocabulary_size(&self) -> usize {
        self.df.len()
    }

    /// Document frequency; unseen terms are clamped to the collection size.
    pub fn doc_freq(&self, term: &str) -> u64 {
        self.df.get(term).copied().unwrap_or(self.n_docs)
    }

    /// Natural-log inverse document frequency, `ln(N / n(t))`.
    pub fn idf(&self, term: &str) -> T {
        idf_from_counts(self.n_docs, self.doc_freq(term))
    }

    pub fn to_sidecar(&self) -> StatsSidecar {
        let mut terms: Vec<(String, u64)> =
            self.df.iter().map(|(t, &n)| (t.clone(), n)).collect();
        terms.sort();
        StatsSidecar {
            version: STATS_FORMAT_VERSION,
            stream: self.stream,
            n_docs: self.n_docs,
            avdl: self.avdl.as_f64(),
            terms,
        }
    }

    pub fn from_sidecar(s: StatsSidecar) -> Result<Self, StatsError> {
        if s.version != STATS_FORMAT_VERSION {
            return Err(StatsError::Version(s.version));
        }
        if let Some((term, df)) = s.terms.iter().find(|(_, n)| *n == 0 || *n > s.n_docs) {
            return Err(StatsError::BadFrequency {
                term: term.clone(),
                df: *df,
                n_docs: s.n_docs,
            });
        }
        Ok(CorpusStats {
            stream: s.stream,
            n_docs: s.n_docs,
            df: s.terms.into_iter().collect(),
            avdl: T::lit(s.avdl),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), StatsError> {
        let json = serde_json::to_string(&self.to_sidecar())?;
        fs::write(path, json).map_err(|source| StatsError::IoFailure {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, StatsError> {
        let text = fs::read_to_string(path).map_err(|source| StatsError::IoFailure {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_sidecar(serde_json::from_str(&text)?)
    }
}

/// `ln(N / n)`; zero when either count is zero.
pub fn idf_from_counts<T: Real>(n_docs: u64, doc_freq: u64) -> T {
    if n_docs == 0 || doc_freq == 0 {
        return T::zero();
    }
    (T::lit(n_docs as f64) / T::lit(doc_freq as f64)).ln()
}

/// On-disk form: header fields then sorted `(term, n)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsSidecar {
    pub version: u32,
    pub stream: Stream,
    pub n_docs: u64,
    pub avdl: f64,
    pub terms: Vec<(String, u64)>,
}
