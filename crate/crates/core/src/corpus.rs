//! Readers for the tab-separated question/answer corpus, link judgments and
//! query split files.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected at least {expected} tab-separated fields, found {found}")]
    MalformedLine {
        line: usize,
        found: usize,
        expected: usize,
    },
    #[error("duplicate qid {0:?}")]
    DuplicateQid(String),
    #[error("line {line}: empty {field}")]
    EmptyField { line: usize, field: &'static str },
    #[error("bad relevance label {0:?} (expected 0 or 1)")]
    BadLabel(String),
    #[error("line {0}: a question cannot link to itself")]
    SelfLink(usize),
    #[error("qid {0:?} does not resolve against the corpus")]
    UnresolvableQid(String),
    #[error("qid {0:?} appears in more than one split")]
    OverlappingSplit(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::IoFailure {
        path: path.to_path_buf(),
        source,
    }
}

/// One corpus row: a question with its two top-rated answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaRecord {
    pub qid: String,
    pub question: String,
    pub answer1: String,
    pub answer2: String,
}

/// Parsed corpus with a qid index.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    records: Vec<QaRecord>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn from_records(records: Vec<QaRecord>) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if index.insert(r.qid.clone(), i).is_some() {
                return Err(CorpusError::DuplicateQid(r.qid.clone()));
            }
        }
        Ok(Corpus { records, index })
    }

    pub fn records(&self) -> &[QaRecord] {
        &self.records
    }

    pub fn get(&self, qid: &str) -> Option<&QaRecord> {
        self.index.get(qid).map(|&i| &self.records[i])
    }

    pub fn contains(&self, qid: &str) -> bool {
        self.index.contains_key(qid)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.split('\n')
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.trim().is_empty())
}

pub fn parse_corpus_str(text: &str) -> Result<Corpus, CorpusError> {
    let mut records = Vec::new();
    for (line, raw) in lines(text) {
        // Surplus tabs fold into answer2.
        let fields: Vec<&str> = raw.splitn(4, '\t').collect();
        if fields.len() < 4 {
            return Err(CorpusError::MalformedLine {
                line,
                found: fields.len(),
                expected: 4,
            });
        }
        let qid = fields[0].trim();
        if qid.is_empty() {
            return Err(CorpusError::EmptyField { line, field: "qid" });
        }
        if fields[1].trim().is_empty() {
            return Err(CorpusError::EmptyField {
                line,
                field: "question",
            });
        }
        records.push(QaRecord {
            qid: qid.to_string(),
            question: fields[1].to_string(),
            answer1: fields[2].to_string(),
            answer2: fields[3].to_string(),
        });
    }
    Corpus::from_records(records)
}

pub fn parse_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_corpus_str(&text)
}

/// Serializes records in the corpus file layout.
pub fn write_corpus<W: Write>(out: &mut W, records: &[QaRecord]) -> std::io::Result<()> {
    for r in records {
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            r.qid, r.question, r.answer1, r.answer2
        )?;
    }
    Ok(())
}

/// A labeled (query, candidate) question pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkJudgment {
    pub qid1: String,
    pub qid2: String,
    pub label: u8,
}

/// Judgments that resolved against a corpus, plus what was dropped.
#[derive(Debug, Clone, Default)]
pub struct Judgments {
    /// Sorted by qid1 (stable within a group).
    pub pairs: Vec<LinkJudgment>,
    /// Qids that did not resolve; one entry per dropped judgment.
    pub dropped: Vec<String>,
}

impl Judgments {
    pub fn groups(&self) -> BTreeMap<&str, Vec<&LinkJudgment>> {
        let mut out: BTreeMap<&str, Vec<&LinkJudgment>> = BTreeMap::new();
        for j in &self.pairs {
            out.entry(j.qid1.as_str()).or_default().push(j);
        }
        out
    }

    /// Histogram of candidate-group size -> number of query groups.
    pub fn group_size_histogram(&self) -> BTreeMap<usize, usize> {
        let mut hist = BTreeMap::new();
        for g in self.groups().values() {
            *hist.entry(g.len()).or_insert(0) += 1;
        }
        hist
    }

    /// Most frequent group size (smallest size wins ties).
    pub fn modal_group_size(&self) -> Option<usize> {
        self.group_size_histogram()
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(size, _)| size)
    }

    pub fn query_ids(&self) -> BTreeSet<&str> {
        self.pairs.iter().map(|j| j.qid1.as_str()).collect()
    }

    /// Fails on the first judgment that was dropped for an unknown qid.
    pub fn require_resolved(&self) -> Result<(), CorpusError> {
        match self.dropped.first() {
            Some(q) => Err(CorpusError::UnresolvableQid(q.clone())),
            None => Ok(()),
        }
    }
}

fn parse_label(raw: &str) -> Result<u8, CorpusError> {
    match raw.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(CorpusError::BadLabel(other.to_string())),
    }
}

pub fn parse_judgments_str(text: &str, corpus: &Corpus) -> Result<Judgments, CorpusError> {
    let mut pairs = Vec::new();
    let mut dropped = Vec::new();
    for (line, raw) in lines(text) {
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() < 3 {
            return Err(CorpusError::MalformedLine {
                line,
                found: fields.len(),
                expected: 3,
            });
        }
        let (qid1, qid2) = (fields[0].trim(), fields[1].trim());
        let label = parse_label(fields[2])?;
        if qid1 == qid2 {
            return Err(CorpusError::SelfLink(line));
        }
        if let Some(missing) = [qid1, qid2].into_iter().find(|q| !corpus.contains(q)) {
            dropped.push(missing.to_string());
            continue;
        }
        pairs.push(LinkJudgment {
            qid1: qid1.to_string(),
            qid2: qid2.to_string(),
            label,
        });
    }
    if !dropped.is_empty() {
        log::warn!(
            "dropped {} judgments referencing qids absent from the corpus",
            dropped.len()
        );
    }
    pairs.sort_by(|a, b| a.qid1.cmp(&b.qid1));
    let out = Judgments { pairs, dropped };
    log::info!(
        "{} judgments in {} query groups; group sizes {:?}",
        out.pairs.len(),
        out.groups().len(),
        out.group_size_histogram()
    );
    Ok(out)
}

pub fn parse_judgments(path: &Path, corpus: &Corpus) -> Result<Judgments, CorpusError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_judgments_str(&text, corpus)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    Train,
    Dev,
    Test,
}

impl SplitKind {
    pub const ALL: [SplitKind; 3] = [SplitKind::Train, SplitKind::Dev, SplitKind::Test];

    pub fn name(self) -> &'static str {
        match self {
            SplitKind::Train => "train",
            SplitKind::Dev => "dev",
            SplitKind::Test => "test",
        }
    }
}

impl fmt::Display for SplitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Disjoint train/dev/test query id sets.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QuerySplit {
    pub train: BTreeSet<String>,
    pub dev: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

/// How a split file set lines up with a judgment file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SplitConsistency {
    pub judged_queries: usize,
    pub split_total: usize,
    /// Judged qid1 values that no split claims.
    pub unsplit: Vec<String>,
    /// Split qids without any judgment.
    pub unjudged: usize,
}

impl SplitConsistency {
    pub fn is_consistent(&self) -> bool {
        self.unsplit.is_empty() && self.unjudged == 0
    }
}

impl QuerySplit {
    pub fn new(
        train: BTreeSet<String>,
        dev: BTreeSet<String>,
        test: BTreeSet<String>,
    ) -> Result<Self, CorpusError> {
        for q in &train {
            if dev.contains(q) || test.contains(q) {
                return Err(CorpusError::OverlappingSplit(q.clone()));
            }
        }
        if let Some(q) = dev.intersection(&test).next() {
            return Err(CorpusError::OverlappingSplit(q.clone()));
        }
        Ok(QuerySplit { train, dev, test })
    }

    pub fn get(&self, kind: SplitKind) -> &BTreeSet<String> {
        match kind {
            SplitKind::Train => &self.train,
            SplitKind::Dev => &self.dev,
            SplitKind::Test => &self.test,
        }
    }

    pub fn which(&self, qid: &str) -> Option<SplitKind> {
        SplitKind::ALL
            .into_iter()
            .find(|&k| self.get(k).contains(qid))
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.dev.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn check_against(&self, judgments: &Judgments) -> SplitConsistency {
        let judged = judgments.query_ids();
        let unsplit: Vec<String> = judged
            .iter()
            .filter(|q| self.which(q).is_none())
            .map(|q| q.to_string())
            .collect();
        let unjudged = SplitKind::ALL
            .into_iter()
            .flat_map(|k| self.get(k).iter())
            .filter(|q| !judged.contains(q.as_str()))
            .count();
        let report = SplitConsistency {
            judged_queries: judged.len(),
            split_total: self.len(),
            unsplit,
            unjudged,
        };
        if !report.is_consistent() {
            log::warn!(
                "split files disagree with judgments: {} judged queries unsplit, {} split queries unjudged",
                report.unsplit.len(),
                report.unjudged
            );
        }
        report
    }
}

fn parse_id_list(text: &str) -> BTreeSet<String> {
    lines(text).map(|(_, l)| l.trim().to_string()).collect()
}

pub fn parse_splits_str(train: &str, dev: &str, test: &str) -> Result<QuerySplit, CorpusError> {
    QuerySplit::new(parse_id_list(train), parse_id_list(dev), parse_id_list(test))
}

pub fn load_splits(train: &Path, dev: &Path, test: &Path) -> Result<QuerySplit, CorpusError> {
    let read = |p: &Path| fs::read_to_string(p).map_err(io_err(p));
    let split = parse_splits_str(&read(train)?, &read(dev)?, &read(test)?)?;
    log::info!(
        "splits: train={} dev={} test={}",
        split.train.len(),
        split.dev.len(),
        split.test.len()
    );
    Ok(split)
}
