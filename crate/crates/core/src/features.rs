//! The 35 lexical and semantic features of a (query question, candidate) pair.
//!
//! IDs 1-21 compare the query question with the candidate's question text,
//! IDs 22-35 compare it with the candidate's concatenated answers. Layout:
//!
//! | IDs   | question stream                          | IDs   | answer stream              |
//! |-------|------------------------------------------|-------|----------------------------|
//! | 1-5   | sum/min/max/avg/var of raw TF            | 22-26 | sum/min/max/avg/var of normalized TF |
//! | 6-10  | sum/min/max/avg/var of normalized TF     | 27-30 | min/max/avg/var of IDF     |
//! | 11-14 | min/max/avg/var of IDF                   | 31-34 | min/max/avg/var of TF*IDF  |
//! | 15-18 | min/max/avg/var of TF*IDF                | 35    | BM25                       |
//! | 19    | BM25                                     |       |                            |
//! | 20    | TF-IDF cosine                            |       |                            |
//! | 21    | embedding cosine of the raw texts        |       |                            |
//!
//! TF aggregates range over the distinct query terms by default
//! ([`TermBasis::QueryTerms`]); IDF aggregates range over the distinct
//! terms of the candidate document. TF*IDF always uses normalized TF.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, LinkJudgment, QaRecord};
use crate::embedding::{semantic_similarity, EmbedError, Embedder};
use crate::scalar::Real;
use crate::stats::{CorpusStats, Stream};
use crate::text::{concat_answers, tokenize, TokenizedText};

pub const FEATURE_COUNT: usize = 35;
pub const QUESTION_FEATURE_COUNT: usize = 21;
pub const ANSWER_FEATURE_COUNT: usize = 14;
/// Feature ID of the embedding similarity.
pub const SEMANTIC_FEATURE_ID: usize = 21;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("qid {0:?} does not resolve against the corpus")]
    UnresolvableQid(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("feature {id} is not finite for pair ({qid1}, {qid2})")]
    NonFinite {
        id: usize,
        qid1: String,
        qid2: String,
    },
    #[error("invalid BM25 parameters k1={k1}, b={b}")]
    BadParams { k1: f64, b: f64 },
    #[error("{path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("feature table line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy)]
pub struct FeatureInfo {
    pub id: usize,
    pub name: &'static str,
    pub stream: Stream,
}

impl FeatureInfo {
    /// Short name with a `_Q`/`_A` stream suffix.
    pub fn label(&self) -> String {
        format!("{}_{}", self.name, self.stream.suffix())
    }
}

const fn q(id: usize, name: &'static str) -> FeatureInfo {
    FeatureInfo {
        id,
        name,
        stream: Stream::Question,
    }
}

const fn a(id: usize, name: &'static str) -> FeatureInfo {
    FeatureInfo {
        id,
        name,
        stream: Stream::Answer,
    }
}

pub const FEATURES: [FeatureInfo; FEATURE_COUNT] = [
    q(1, "tf_sum"),
    q(2, "tf_min"),
    q(3, "tf_max"),
    q(4, "tf_avg"),
    q(5, "tf_var"),
    q(6, "ntf_sum"),
    q(7, "ntf_min"),
    q(8, "ntf_max"),
    q(9, "ntf_avg"),
    q(10, "ntf_var"),
    q(11, "idf_min"),
    q(12, "idf_max"),
    q(13, "idf_avg"),
    q(14, "idf_var"),
    q(15, "tfidf_min"),
    q(16, "tfidf_max"),
    q(17, "tfidf_avg"),
    q(18, "tfidf_var"),
    q(19, "bm25"),
    q(20, "tfidf_cosine"),
    q(21, "semantic_sim"),
    a(22, "ntf_sum"),
    a(23, "ntf_min"),
    a(24, "ntf_max"),
    a(25, "ntf_avg"),
    a(26, "ntf_var"),
    a(27, "idf_min"),
    a(28, "idf_max"),
    a(29, "idf_avg"),
    a(30, "idf_var"),
    a(31, "tfidf_min"),
    a(32, "tfidf_max"),
    a(33, "tfidf_avg"),
    a(34, "tfidf_var"),
    a(35, "bm25"),
];

/// Metadata for a 1-based feature ID.
pub fn feature_info(id: usize) -> Option<&'static FeatureInfo> {
    id.checked_sub(1).and_then(|i| FEATURES.get(i))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AggregateSet<T> {
    pub sum: T,
    pub min: T,
    pub max: T,
    pub avg: T,
    pub var: T,
}

/// Sum, min, max, mean and population variance; all zero for an empty list.
pub fn aggregate<T: Real>(values: &[T]) -> AggregateSet<T> {
    if values.is_empty() {
        return AggregateSet {
            sum: T::zero(),
            min: T::zero(),
            max: T::zero(),
            avg: T::zero(),
            var: T::zero(),
        };
    }
    let n = T::from_count(values.len());
    let sum: T = values.iter().copied().sum();
    let avg = sum / n;
    let min = values.iter().copied().fold(T::infinity(), T::min);
    let max = values.iter().copied().fold(T::neg_infinity(), T::max);
    let var = values.iter().map(|&x| (x - avg) * (x - avg)).sum::<T>() / n;
    AggregateSet {
        sum,
        min,
        max,
        // mean of equal values can round outside [min, max]
        avg: avg.max(min).min(max),
        var,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bm25Params<T> {
    pub k1: T,
    pub b: T,
}

impl<T: Real> Bm25Params<T> {
    pub fn new(k1: T, b: T) -> Result<Self, FeatureError> {
        if !(k1 > T::zero()) || !(b >= T::zero() && b <= T::one()) {
            return Err(FeatureError::BadParams {
                k1: k1.as_f64(),
                b: b.as_f64(),
            });
        }
        Ok(Bm25Params { k1, b })
    }
}

impl<T: Real> Default for Bm25Params<T> {
    fn default() -> Self {
        Bm25Params {
            k1: T::lit(1.2),
            b: T::lit(0.75),
        }
    }
}

/// Which term set the TF-based aggregates range over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermBasis {
    /// Distinct query terms, counted in the candidate document.
    #[default]
    QueryTerms,
    /// Distinct candidate-document terms with their own counts.
    DocumentTerms,
}

/// Count of each distinct query term in `doc`, in query order.
pub fn tf_counts(query: &TokenizedText, doc: &TokenizedText) -> Vec<(String, usize)> {
    let counts = term_counts(doc);
    query
        .distinct()
        .into_iter()
        .map(|t| (t.to_string(), counts.get(t).copied().unwrap_or(0)))
        .collect()
}

fn term_counts(doc: &TokenizedText) -> HashMap<&str, usize> {
    let mut counts = HashMap::new();
    for t in doc.tokens() {
        *counts.entry(t.as_str()).or_insert(0) += 1;
    }
    counts
}

fn normalized<T: Real>(count: usize, len: usize) -> T {
    if len == 0 {
        T::zero()
    } else {
        T::from_count(count) / T::from_count(len)
    }
}

/// Okapi BM25 of `doc` for the distinct terms of `query`.
pub fn bm25<T: Real>(
    query: &TokenizedText,
    doc: &TokenizedText,
    stats: &CorpusStats<T>,
    params: &Bm25Params<T>,
) -> T {
    let len_ratio = if stats.avdl() > T::zero() {
        T::from_count(doc.len()) / stats.avdl()
    } else {
        T::zero()
    };
    let norm = params.k1 * (T::one() - params.b + params.b * len_ratio);
    tf_counts(query, doc)
        .into_iter()
        .filter(|&(_, tf)| tf > 0)
        .map(|(term, tf)| {
            let tf = T::from_count(tf);
            stats.idf(&term) * tf * (params.k1 + T::one()) / (tf + norm)
        })
        .sum()
}

/// Cosine of normalized-TF * IDF vectors over the union vocabulary.
pub fn tfidf_cosine<T: Real>(
    query: &TokenizedText,
    doc: &TokenizedText,
    stats: &CorpusStats<T>,
) -> T {
    // ordered maps keep the summation order, and so the result bits, fixed
    let weights = |text: &TokenizedText| -> BTreeMap<String, T> {
        term_counts(text)
            .into_iter()
            .map(|(t, c)| (t.to_string(), normalized::<T>(c, text.len()) * stats.idf(t)))
            .collect()
    };
    let wq = weights(query);
    let wd = weights(doc);
    let dot: T = wq
        .iter()
        .filter_map(|(t, &w)| wd.get(t).map(|&v| w * v))
        .sum();
    let nq: T = wq.values().map(|&w| w * w).sum();
    let nd: T = wd.values().map(|&w| w * w).sum();
    if nq == T::zero() || nd == T::zero() {
        return T::zero();
    }
    (dot / (nq.sqrt() * nd.sqrt())).min(T::one())
}

/// Per-term raw counts and normalized TF over the chosen basis.
fn basis_counts(query: &TokenizedText, doc: &TokenizedText, basis: TermBasis) -> Vec<(String, usize)> {
    match basis {
        TermBasis::QueryTerms => tf_counts(query, doc),
        TermBasis::DocumentTerms => tf_counts(doc, doc),
    }
}

fn doc_idfs<T: Real>(doc: &TokenizedText, stats: &CorpusStats<T>) -> Vec<T> {
    doc.distinct().into_iter().map(|t| stats.idf(t)).collect()
}

fn push_tail<T: Real>(out: &mut Vec<T>, agg: AggregateSet<T>) {
    out.extend([agg.min, agg.max, agg.avg, agg.var]);
}

fn push_all<T: Real>(out: &mut Vec<T>, agg: AggregateSet<T>) {
    out.extend([agg.sum, agg.min, agg.max, agg.avg, agg.var]);
}

/// A text together with its tokenization.
#[derive(Debug, Clone, Copy)]
pub struct TextView<'a> {
    pub raw: &'a str,
    pub tokens: &'a TokenizedText,
}

/// Features 1-20 from tokens, then 21 from the raw texts.
pub fn question_features_tok<T: Real, E: Embedder + ?Sized>(
    query: TextView<'_>,
    candidate: TextView<'_>,
    stats: &CorpusStats<T>,
    params: &Bm25Params<T>,
    provider: &E,
    basis: TermBasis,
) -> Result<Vec<T>, FeatureError> {
    let (qt, dt) = (query.tokens, candidate.tokens);
    let counts = basis_counts(qt, dt, basis);
    let raw: Vec<T> = counts.iter().map(|(_, c)| T::from_count(*c)).collect();
    let ntf: Vec<T> = counts
        .iter()
        .map(|(_, c)| normalized(*c, dt.len()))
        .collect();
    let tfidf: Vec<T> = counts
        .iter()
        .zip(&ntf)
        .map(|((t, _), &n)| n * stats.idf(t))
        .collect();

    let mut out = Vec::with_capacity(QUESTION_FEATURE_COUNT);
    push_all(&mut out, aggregate(&raw));
    push_all(&mut out, aggregate(&ntf));
    push_tail(&mut out, aggregate(&doc_idfs(dt, stats)));
    push_tail(&mut out, aggregate(&tfidf));
    out.push(bm25(qt, dt, stats, params));
    out.push(tfidf_cosine(qt, dt, stats));
    out.push(semantic_similarity(provider, query.raw, candidate.raw)?);
    debug_assert_eq!(out.len(), QUESTION_FEATURE_COUNT);
    Ok(out)
}

/// Features 22-35 against the concatenated answers.
pub fn answer_features_tok<T: Real>(
    query: &TokenizedText,
    answers: &TokenizedText,
    stats: &CorpusStats<T>,
    params: &Bm25Params<T>,
    basis: TermBasis,
) -> Vec<T> {
    let counts = basis_counts(query, answers, basis);
    let ntf: Vec<T> = counts
        .iter()
        .map(|(_, c)| normalized(*c, answers.len()))
        .collect();
    let tfidf: Vec<T> = counts
        .iter()
        .zip(&ntf)
        .map(|((t, _), &n)| n * stats.idf(t))
        .collect();

    let mut out = Vec::with_capacity(ANSWER_FEATURE_COUNT);
    push_all(&mut out, aggregate(&ntf));
    push_tail(&mut out, aggregate(&doc_idfs(answers, stats)));
    push_tail(&mut out, aggregate(&tfidf));
    out.push(bm25(query, answers, stats, params));
    debug_assert_eq!(out.len(), ANSWER_FEATURE_COUNT);
    out
}

/// Question-stream features from raw texts.
pub fn question_features<T: Real, E: Embedder + ?Sized>(
    query_text: &str,
    candidate_text: &str,
    stats: &CorpusStats<T>,
    params: &Bm25Params<T>,
    provider: &E,
) -> Result<Vec<T>, FeatureError> {
    let (qt, ct) = (tokenize(query_text), tokenize(candidate_text));
    question_features_tok(
        TextView {
            raw: query_text,
            tokens: &qt,
        },
        TextView {
            raw: candidate_text,
            tokens: &ct,
        },
        stats,
        params,
        provider,
        TermBasis::QueryTerms,
    )
}

/// Answer-stream features from raw texts.
pub fn answer_features<T: Real>(
    query_text: &str,
    answers_text: &str,
    stats: &CorpusStats<T>,
    params: &Bm25Params<T>,
) -> Vec<T> {
    answer_features_tok(
        &tokenize(query_text),
        &tokenize(answers_text),
        stats,
        params,
        TermBasis::QueryTerms,
    )
}

/// Labeled feature row for one judged pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector<T> {
    pub qid1: String,
    pub qid2: String,
    pub label: u8,
    pub values: Vec<T>,
}

impl<T: Real> FeatureVector<T> {
    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Tokenized question and concatenated-answer text of every corpus record.
pub struct TokenizedCorpus<'c> {
    corpus: &'c Corpus,
    questions: Vec<TokenizedText>,
    answers: Vec<TokenizedText>,
    answer_text: Vec<String>,
    index: HashMap<&'c str, usize>,
}

impl<'c> TokenizedCorpus<'c> {
    pub fn new(corpus: &'c Corpus) -> Self {
        let recs = corpus.records();
        let answer_text: Vec<String> = recs
            .par_iter()
            .map(|r| concat_answers(&r.answer1, &r.answer2))
            .collect();
        let questions = recs.par_iter().map(|r| tokenize(&r.question)).collect();
        let answers = answer_text.par_iter().map(|t| tokenize(t)).collect();
        let index = recs
            .iter()
            .enumerate()
            .map(|(i, r)| (r.qid.as_str(), i))
            .collect();
        TokenizedCorpus {
            corpus,
            questions,
            answers,
            answer_text,
            index,
        }
    }

    pub fn question_docs(&self) -> &[TokenizedText] {
        &self.questions
    }

    pub fn answer_docs(&self) -> &[TokenizedText] {
        &self.answers
    }

    pub fn build_stats<T: Real>(
        &self,
    ) -> Result<(CorpusStats<T>, CorpusStats<T>), crate::stats::StatsError> {
        let (q, a) = rayon::join(
            || CorpusStats::build(&self.questions, Stream::Question),
            || CorpusStats::build(&self.answers, Stream::Answer),
        );
        Ok((q?, a?))
    }

    fn lookup(&self, qid: &str) -> Result<usize, FeatureError> {
        self.index
            .get(qid)
            .copied()
            .ok_or_else(|| FeatureError::UnresolvableQid(qid.to_string()))
    }

    pub fn record(&self, qid: &str) -> Option<&'c QaRecord> {
        self.corpus.get(qid)
    }
}

/// Frozen inputs shared by every pair extraction.
pub struct FeatureExtractor<'a, T, E: ?Sized> {
    pub question_stats: &'a CorpusStats<T>,
    pub answer_stats: &'a CorpusStats<T>,
    pub params: Bm25Params<T>,
    pub basis: TermBasis,
    pub provider: &'a E,
}

impl<'a, T: Real, E: Embedder + ?Sized> FeatureExtractor<'a, T, E> {
    pub fn new(
        question_stats: &'a CorpusStats<T>,
        answer_stats: &'a CorpusStats<T>,
        params: Bm25Params<T>,
        provider: &'a E,
    ) -> Self {
        FeatureExtractor {
            question_stats,
            answer_stats,
            params,
            basis: TermBasis::QueryTerms,
            provider,
        }
    }

    pub fn with_basis(mut self, basis: TermBasis) -> Self {
        self.basis = basis;
        self
    }

    /// All 35 features of one judged pair.
    pub fn extract_pair(
        &self,
        judgment: &LinkJudgment,
        corpus: &TokenizedCorpus<'_>,
    ) -> Result<FeatureVector<T>, FeatureError> {
        let i = corpus.lookup(&judgment.qid1)?;
        let j = corpus.lookup(&judgment.qid2)?;
        let recs = corpus.corpus.records();
        let query = TextView {
            raw: &recs[i].question,
            tokens: &corpus.questions[i],
        };
        let candidate = TextView {
            raw: &recs[j].question,
            tokens: &corpus.questions[j],
        };
        let mut values = question_features_tok(
            query,
            candidate,
            self.question_stats,
            &self.params,
            self.provider,
            self.basis,
        )?;
        values.extend(answer_features_tok(
            query.tokens,
            &corpus.answers[j],
            self.answer_stats,
            &self.params,
            self.basis,
        ));
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(FeatureError::NonFinite {
                id: pos + 1,
                qid1: judgment.qid1.clone(),
                qid2: judgment.qid2.clone(),
            });
        }
        Ok(FeatureVector {
            qid1: judgment.qid1.clone(),
            qid2: judgment.qid2.clone(),
            label: judgment.label,
            values,
        })
    }

    /// Extracts every pair in parallel, preserving input order.
    pub fn extract_all(
        &self,
        judgments: &[LinkJudgment],
        corpus: &TokenizedCorpus<'_>,
    ) -> Result<Vec<FeatureVector<T>>, FeatureError>
    where
        E: Sync,
        T: Sync,
    {
        judgments
            .par_iter()
            .map(|j| self.extract_pair(j, corpus))
            .collect()
    }
}

/// Raw texts that feature 21 will embed for these judgments.
pub fn texts_to_embed<'c>(judgments: &[LinkJudgment], corpus: &'c Corpus) -> Vec<&'c str> {
    judgments
        .iter()
        .flat_map(|j| [&j.qid1, &j.qid2])
        .filter_map(|q| corpus.get(q).map(|r| r.question.as_str()))
        .collect()
}

impl TokenizedCorpus<'_> {
    pub fn answer_text(&self, qid: &str) -> Option<&str> {
        self.index.get(qid).map(|&i| self.answer_text[i].as_str())
    }
}

/// Tab-separated table: header then `qid1, qid2, label, f1..fN` per row.
pub fn write_feature_table<T: Real>(
    path: &Path,
    rows: &[FeatureVector<T>],
) -> Result<(), FeatureError> {
    let width = rows.first().map_or(FEATURE_COUNT, |r| r.values.len());
    let mut out = String::from("qid1\tqid2\tlabel");
    for id in 1..=width {
        write!(out, "\tf{id}").unwrap();
    }
    out.push('\n');
    for r in rows {
        write!(out, "{}\t{}\t{}", r.qid1, r.qid2, r.label).unwrap();
        for v in &r.values {
            write!(out, "\t{v}").unwrap();
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| FeatureError::IoFailure {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_feature_table<T: Real>(path: &Path) -> Result<Vec<FeatureVector<T>>, FeatureError> {
    let text = fs::read_to_string(path).map_err(|source| FeatureError::IoFailure {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines = text.lines().enumerate();
    let width = match lines.next() {
        Some((_, header)) => header.split('\t').count().saturating_sub(3),
        None => return Ok(Vec::new()),
    };
    let bad = |line: usize, reason: String| FeatureError::MalformedRow {
        line: line + 1,
        reason,
    };
    let mut rows = Vec::new();
    for (i, line) in lines.filter(|(_, l)| !l.is_empty()) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != width + 3 {
            return Err(bad(i, format!("expected {} fields, found {}", width + 3, fields.len())));
        }
        let label = match fields[2] {
            "0" => 0,
            "1" => 1,
            other => return Err(bad(i, format!("bad label {other:?}"))),
        };
        let values = fields[3..]
            .iter()
            .map(|f| f.parse::<T>().map_err(|_| bad(i, format!("bad value {f:?}"))))
            .collect::<Result<Vec<T>, _>>()?;
        rows.push(FeatureVector {
            qid1: fields[0].to_string(),
            qid2: fields[1].to_string(),
            label,
            values,
        });
    }
    Ok(rows)
}
