//! Per-split ranking datasets and their LibSVM ranking-file form.
//!
//! Each line is `<label> qid:<qid1> 1:<v1> ... m:<vm> # <qid2>`; every index
//! is written, zeros included. Non-numeric qids are remapped to integers with
//! a `.qidmap` sidecar, and masked feature sets get a `.featmap` sidecar
//! naming the original feature ID behind each dense index.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{QuerySplit, SplitKind};
use crate::features::{feature_info, FeatureVector, FEATURE_COUNT, SEMANTIC_FEATURE_ID};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("query {0:?} belongs to no split")]
    UnsplitQuery(String),
    #[error("line {line}: {reason}")]
    MalformedLibsvmLine { line: usize, reason: String },
    #[error("{path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("feature vectors have inconsistent widths ({0} vs {1})")]
    RaggedVectors(usize, usize),
    #[error("unknown feature subset {0:?}")]
    UnknownSubset(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::IoFailure {
        path: path.to_path_buf(),
        source,
    }
}

/// Feature-ID masks for the ablation settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSubset {
    #[default]
    All,
    /// IDs 1-21.
    QqOnly,
    /// IDs 22-35.
    QaOnly,
    /// Every ID except the embedding similarity (21).
    NoBert,
}

impl FeatureSubset {
    pub const ALL: [FeatureSubset; 4] = [
        FeatureSubset::All,
        FeatureSubset::NoBert,
        FeatureSubset::QqOnly,
        FeatureSubset::QaOnly,
    ];

    /// 1-based feature IDs kept, ascending.
    pub fn ids(self) -> Vec<usize> {
        let all = 1..=FEATURE_COUNT;
        match self {
            FeatureSubset::All => all.collect(),
            FeatureSubset::QqOnly => (1..=21).collect(),
            FeatureSubset::QaOnly => (22..=35).collect(),
            FeatureSubset::NoBert => all.filter(|&i| i != SEMANTIC_FEATURE_ID).collect(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureSubset::All => "all",
            FeatureSubset::QqOnly => "qq_only",
            FeatureSubset::QaOnly => "qa_only",
            FeatureSubset::NoBert => "no_bert",
        }
    }
}

impl FromStr for FeatureSubset {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureSubset::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| DatasetError::UnknownSubset(s.to_string()))
    }
}

/// Numeric ids compare numerically, everything else lexically.
pub fn qid_order(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        _ => a.cmp(b),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryGroup<T> {
    pub qid1: String,
    pub items: Vec<FeatureVector<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingDataset<T> {
    pub split: SplitKind,
    /// Original feature ID behind each column.
    pub feature_ids: Vec<usize>,
    pub groups: Vec<QueryGroup<T>>,
}

impl<T: Real> RankingDataset<T> {
    pub fn width(&self) -> usize {
        self.feature_ids.len()
    }

    pub fn num_rows(&self) -> usize {
        self.groups.iter().map(|g| g.items.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.num_rows() == 0
    }

    pub fn rows(&self) -> impl Iterator<Item = &FeatureVector<T>> {
        self.groups.iter().flat_map(|g| g.items.iter())
    }

    /// Keeps only the listed original feature IDs, in the given order.
    pub fn select(&self, ids: &[usize]) -> Self {
        let pos: HashMap<usize, usize> = self
            .feature_ids
            .iter()
            .enumerate()
            .map(|(i, &id)| (id, i))
            .collect();
        let cols: Vec<usize> = ids.iter().filter_map(|id| pos.get(id).copied()).collect();
        RankingDataset {
            split: self.split,
            feature_ids: cols.iter().map(|&c| self.feature_ids[c]).collect(),
            groups: self
                .groups
                .iter()
                .map(|g| QueryGroup {
                    qid1: g.qid1.clone(),
                    items: g
                        .items
                        .iter()
                        .map(|v| FeatureVector {
                            values: cols.iter().map(|&c| v.values[c]).collect(),
                            ..v.clone()
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

fn group_sorted<T: Real>(mut by_query: BTreeMap<String, Vec<FeatureVector<T>>>) -> Vec<QueryGroup<T>> {
    let mut groups: Vec<QueryGroup<T>> = std::mem::take(&mut by_query)
        .into_iter()
        .map(|(qid1, mut items)| {
            items.sort_by(|a, b| qid_order(&a.qid2, &b.qid2));
            QueryGroup { qid1, items }
        })
        .collect();
    groups.sort_by(|a, b| qid_order(&a.qid1, &b.qid1));
    groups
}

/// Rows of one split, grouped by query and masked to `subset`.
pub fn build_dataset<T: Real>(
    vectors: &[FeatureVector<T>],
    split: &QuerySplit,
    which: SplitKind,
    subset: FeatureSubset,
) -> Result<RankingDataset<T>, DatasetError> {
    if let Some(first) = vectors.first() {
        if let Some(bad) = vectors.iter().find(|v| v.values.len() != first.values.len()) {
            return Err(DatasetError::RaggedVectors(first.values.len(), bad.values.len()));
        }
    }
    let mut by_query: BTreeMap<String, Vec<FeatureVector<T>>> = BTreeMap::new();
    for v in vectors {
        match split.which(&v.qid1) {
            None => return Err(DatasetError::UnsplitQuery(v.qid1.clone())),
            Some(k) if k == which => by_query.entry(v.qid1.clone()).or_default().push(v.clone()),
            Some(_) => {}
        }
    }
    let full = RankingDataset {
        split: which,
        feature_ids: (1..=vectors.first().map_or(FEATURE_COUNT, |v| v.values.len())).collect(),
        groups: group_sorted(by_query),
    };
    Ok(if subset == FeatureSubset::All {
        full
    } else {
        full.select(&subset.ids())
    })
}

fn is_numeric_qid(q: &str) -> bool {
    !q.is_empty() && q.bytes().all(|b| b.is_ascii_digit()) && q.parse::<u64>().is_ok()
}

fn sidecar(path: &Path, ext: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

pub fn qidmap_path(path: &Path) -> PathBuf {
    sidecar(path, ".qidmap")
}

pub fn featmap_path(path: &Path) -> PathBuf {
    sidecar(path, ".featmap")
}

/// Writes the dataset; sidecars are written only when needed and removed otherwise.
/// Any feature set other than the full 1..=35 gets a `.featmap`.
pub fn write_libsvm<T: Real>(ds: &RankingDataset<T>, path: &Path) -> Result<(), DatasetError> {
    let remap = !ds.groups.iter().all(|g| is_numeric_qid(&g.qid1));
    let mut out = String::new();
    let mut qidmap = String::new();
    for (gi, g) in ds.groups.iter().enumerate() {
        let qid = if remap {
            let n = gi + 1;
            writeln!(qidmap, "{n}\t{}", g.qid1).unwrap();
            n.to_string()
        } else {
            g.qid1.clone()
        };
        for v in &g.items {
            write!(out, "{} qid:{qid}", v.label).unwrap();
            for (i, x) in v.values.iter().enumerate() {
                write!(out, " {}:{x}", i + 1).unwrap();
            }
            writeln!(out, " # {}", v.qid2).unwrap();
        }
    }
    fs::write(path, out).map_err(io_err(path))?;

    let qm = qidmap_path(path);
    if remap {
        fs::write(&qm, qidmap).map_err(io_err(&qm))?;
    } else if qm.exists() {
        fs::remove_file(&qm).map_err(io_err(&qm))?;
    }

    let fm = featmap_path(path);
    let full: Vec<usize> = (1..=FEATURE_COUNT).collect();
    if ds.feature_ids != full {
        let mut text = String::new();
        for (i, &id) in ds.feature_ids.iter().enumerate() {
            let name = feature_info(id).map_or_else(|| format!("f{id}"), |f| f.label());
            writeln!(text, "{}\t{id}\t{name}", i + 1).unwrap();
        }
        fs::write(&fm, text).map_err(io_err(&fm))?;
    } else if fm.exists() {
        fs::remove_file(&fm).map_err(io_err(&fm))?;
    }
    Ok(())
}

fn read_map(path: &Path) -> Result<Option<Vec<(String, String)>>, DatasetError> {
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(Some(
        text.lines()
            .filter(|l| !l.is_empty())
            .filter_map(|l| {
                let mut f = l.split('\t');
                Some((f.next()?.to_string(), f.next()?.to_string()))
            })
            .collect(),
    ))
}

struct ParsedLine<T> {
    qid: String,
    row: FeatureVector<T>,
    max_index: usize,
}

fn parse_line<T: Real>(line_no: usize, raw: &str) -> Result<ParsedLine<T>, DatasetError> {
    let bad = |reason: String| DatasetError::MalformedLibsvmLine {
        line: line_no,
        reason,
    };
    let (body, comment) = match raw.split_once('#') {
        Some((b, c)) => (b, Some(c.trim())),
        None => (raw, None),
    };
    let mut tokens = body.split_whitespace();
    let label = match tokens.next() {
        Some("0") => 0,
        Some("1") => 1,
        Some(other) => return Err(bad(format!("bad label {other:?}"))),
        None => return Err(bad("empty line".into())),
    };
    let qid = tokens
        .next()
        .and_then(|t| t.strip_prefix("qid:"))
        .filter(|q| !q.is_empty())
        .ok_or_else(|| bad("missing qid tag".into()))?
        .to_string();
    let mut pairs = Vec::new();
    let mut last = 0usize;
    for tok in tokens {
        let (i, v) = tok
            .split_once(':')
            .ok_or_else(|| bad(format!("bad feature token {tok:?}")))?;
        let i: usize = i
            .parse()
            .map_err(|_| bad(format!("bad feature index {i:?}")))?;
        if i <= last {
            return Err(bad(format!("feature index {i} not increasing")));
        }
        last = i;
        let v: T = v.parse().map_err(|_| bad(format!("bad feature value {v:?}")))?;
        pairs.push((i, v));
    }
    let mut values = vec![T::zero(); last];
    for (i, v) in pairs {
        values[i - 1] = v;
    }
    Ok(ParsedLine {
        qid,
        row: FeatureVector {
            qid1: String::new(),
            qid2: comment.filter(|c| !c.is_empty()).unwrap_or_default().to_string(),
            label,
            values,
        },
        max_index: last,
    })
}

/// Inverse of [`write_libsvm`]; non-contiguous query groups are merged with a warning.
pub fn read_libsvm<T: Real>(path: &Path, split: SplitKind) -> Result<RankingDataset<T>, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let qidmap: HashMap<String, String> = read_map(&qidmap_path(path))?
        .unwrap_or_default()
        .into_iter()
        .collect();
    let feature_ids: Option<Vec<usize>> = read_map(&featmap_path(path))?.map(|rows| {
        rows.iter()
            .filter_map(|(_, id)| id.parse().ok())
            .collect()
    });

    let mut groups: Vec<QueryGroup<T>> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut current: Option<String> = None;
    let mut regrouped = 0usize;
    let mut width = 0usize;
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let mut parsed = parse_line::<T>(i + 1, raw)?;
        width = width.max(parsed.max_index);
        let qid1 = qidmap.get(&parsed.qid).cloned().unwrap_or(parsed.qid);
        if parsed.row.qid2.is_empty() {
            parsed.row.qid2 = (i + 1).to_string();
        }
        parsed.row.qid1 = qid1.clone();
        let gi = match index.get(&qid1) {
            Some(&gi) => {
                if current.as_deref() != Some(qid1.as_str()) {
                    regrouped += 1;
                }
                gi
            }
            None => {
                groups.push(QueryGroup {
                    qid1: qid1.clone(),
                    items: Vec::new(),
                });
                index.insert(qid1.clone(), groups.len() - 1);
                groups.len() - 1
            }
        };
        groups[gi].items.push(parsed.row);
        current = Some(qid1);
    }
    if regrouped > 0 {
        log::warn!(
            "{}: {regrouped} lines continued a non-contiguous qid group and were regrouped",
            path.display()
        );
    }
    let feature_ids = feature_ids.unwrap_or_else(|| (1..=width).collect());
    let width = feature_ids.len().max(width);
    for row in groups.iter_mut().flat_map(|g| g.items.iter_mut()) {
        row.values.resize(width, T::zero());
    }
    Ok(RankingDataset {
        split,
        feature_ids,
        groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_splits_str;

    fn fv(q1: &str, q2: &str, label: u8, values: Vec<f64>) -> FeatureVector<f64> {
        FeatureVector {
            qid1: q1.into(),
            qid2: q2.into(),
            label,
            values,
        }
    }

    fn sample(n_queries: usize, n_cands: usize) -> Vec<FeatureVector<f64>> {
        let mut v = Vec::new();
        for q in 0..n_queries {
            for c in 0..n_cands {
                let mut values = vec![0.0; FEATURE_COUNT];
                values[0] = c as f64 / 7.0;
                values[20] = 0.1 * q as f64;
                v.push(fv(&format!("{}", 100 + q), &format!("{}", c), (c == 0) as u8, values));
            }
        }
        v
    }

    #[test]
    fn subset_masks() {
        assert_eq!(FeatureSubset::All.ids().len(), 35);
        assert_eq!(FeatureSubset::QqOnly.ids(), (1..=21).collect::<Vec<_>>());
        assert_eq!(FeatureSubset::QaOnly.ids(), (22..=35).collect::<Vec<_>>());
        let nb = FeatureSubset::NoBert.ids();
        assert_eq!(nb.len(), 34);
        assert!(!nb.contains(&21));
        assert_eq!("qa_only".parse::<FeatureSubset>().unwrap(), FeatureSubset::QaOnly);
        assert!("everything".parse::<FeatureSubset>().is_err());
    }

    #[test]
    fn one_query_in_train() {
        let split = parse_splits_str("100\n", "101\n", "").unwrap();
        let ds = build_dataset(&sample(2, 30), &split, SplitKind::Train, FeatureSubset::All).unwrap();
        assert_eq!(ds.groups.len(), 1);
        assert_eq!(ds.groups[0].items.len(), 30);
        assert_eq!(ds.width(), 35);
    }

    #[test]
    fn unsplit_query_rejected() {
        let split = parse_splits_str("100\n", "", "").unwrap();
        let err = build_dataset(&sample(2, 3), &split, SplitKind::Train, FeatureSubset::All).unwrap_err();
        assert!(matches!(err, DatasetError::UnsplitQuery(q) if q == "101"));
    }

    #[test]
    fn groups_sorted_numerically() {
        let rows = vec![
            fv("20", "3", 0, vec![1.0]),
            fv("3", "10", 1, vec![2.0]),
            fv("3", "9", 0, vec![3.0]),
        ];
        let split = parse_splits_str("20\n3\n", "", "").unwrap();
        let ds = build_dataset(&rows, &split, SplitKind::Train, FeatureSubset::All).unwrap();
        assert_eq!(ds.groups[0].qid1, "3");
        assert_eq!(ds.groups[0].items[0].qid2, "9");
    }

    #[test]
    fn line_format() {
        let mut values = vec![0.0; FEATURE_COUNT];
        values[0] = 0.5;
        let split = parse_splits_str("7\n", "", "").unwrap();
        let ds = build_dataset(&[fv("7", "8", 1, values)], &split, SplitKind::Train, FeatureSubset::All).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.txt");
        write_libsvm(&ds, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("1 qid:7 1:0.5 2:0 "));
        let idx: Vec<usize> = text
            .split('#')
            .next()
            .unwrap()
            .split_whitespace()
            .skip(2)
            .map(|t| t.split(':').next().unwrap().parse().unwrap())
            .collect();
        assert_eq!(idx, (1..=35).collect::<Vec<_>>());
        assert!(!qidmap_path(&path).exists());
        assert!(!featmap_path(&path).exists());
    }

    #[test]
    fn round_trip_with_remap_and_mask() {
        let mut rows = sample(3, 4);
        for r in &mut rows {
            r.qid1 = format!("q-{}", r.qid1);
        }
        let split = parse_splits_str("q-100\nq-101\nq-102\n", "", "").unwrap();
        let ds = build_dataset(&rows, &split, SplitKind::Train, FeatureSubset::NoBert).unwrap();
        assert_eq!(ds.width(), 34);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.txt");
        write_libsvm(&ds, &path).unwrap();
        assert!(qidmap_path(&path).exists());
        assert!(featmap_path(&path).exists());
        let back: RankingDataset<f64> = read_libsvm(&path, SplitKind::Train).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn missing_qid_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        fs::write(&path, "1 qid:1 1:0.5\n0 1:0.2\n").unwrap();
        let err = read_libsvm::<f64>(&path, SplitKind::Test).unwrap_err();
        assert!(matches!(err, DatasetError::MalformedLibsvmLine { line: 2, .. }));
    }

    #[test]
    fn non_contiguous_groups_regrouped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mixed.txt");
        fs::write(&path, "1 qid:1 1:0.5 # a\n0 qid:2 1:0.1 # b\n0 qid:1 1:0.2 # c\n").unwrap();
        let ds = read_libsvm::<f64>(&path, SplitKind::Test).unwrap();
        assert_eq!(ds.groups.len(), 2);
        assert_eq!(ds.groups[0].items.len(), 2);
        assert_eq!(ds.groups[0].items[1].qid2, "c");
    }

    #[test]
    fn select_reorders_columns() {
        let split = parse_splits_str("100\n", "", "").unwrap();
        let ds = build_dataset(&sample(1, 2), &split, SplitKind::Train, FeatureSubset::All).unwrap();
        let s = ds.select(&[21, 1]);
        assert_eq!(s.feature_ids, vec![21, 1]);
        assert_eq!(s.groups[0].items[1].values, vec![0.0, 1.0 / 7.0]);
    }
}
