//! NDCG@k and MAP@k over ranked query groups.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

fn discount<T: Real>(rank: usize) -> T {
    T::one() / T::from_count(rank + 1).log2()
}

fn gain<T: Real>(label: u8) -> T {
    T::lit(2f64.powi(i32::from(label)) - 1.0)
}

/// DCG@k with gain `2^label - 1` and discount `1 / log2(rank + 1)`.
pub fn dcg_at_k<T: Real>(labels: &[u8], k: usize) -> T {
    labels
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &l)| gain::<T>(l) * discount::<T>(i + 1))
        .sum()
}

/// DCG@k of the label multiset in ideal order.
pub fn ideal_dcg_at_k<T: Real>(labels: &[u8], k: usize) -> T {
    let mut ideal = labels.to_vec();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    dcg_at_k(&ideal, k)
}

/// NDCG@k of a ranked label list; 0 when nothing is relevant.
pub fn ndcg_at_k<T: Real>(labels: &[u8], k: usize) -> T {
    assert!(k >= 1, "cutoff must be at least 1");
    let ideal = ideal_dcg_at_k::<T>(labels, k);
    if ideal == T::zero() {
        return T::zero();
    }
    dcg_at_k::<T>(labels, k) / ideal
}

/// AP@k: sum of P@r at relevant ranks r <= k, over `min(R, k)`; 0 when R = 0.
pub fn average_precision_at_k<T: Real>(labels: &[u8], k: usize) -> T {
    assert!(k >= 1, "cutoff must be at least 1");
    let total_relevant = labels.iter().filter(|&&l| l > 0).count();
    if total_relevant == 0 {
        return T::zero();
    }
    let mut hits = 0usize;
    let mut sum = T::zero();
    for (i, _) in labels.iter().take(k).enumerate().filter(|(_, &l)| l > 0) {
        hits += 1;
        sum += T::from_count(hits) / T::from_count(i + 1);
    }
    sum / T::from_count(total_relevant.min(k))
}

/// One candidate of a query group with its model score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem<T> {
    pub qid2: String,
    pub label: u8,
    pub score: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredGroup<T> {
    pub qid1: String,
    pub items: Vec<ScoredItem<T>>,
}

impl<T: Real> ScoredGroup<T> {
    /// Sorts by descending score, then ascending qid2.
    pub fn rank(&mut self) {
        self.items.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.qid2.cmp(&b.qid2))
        });
    }

    pub fn ranked_labels(&self) -> Vec<u8> {
        self.items.iter().map(|i| i.label).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics<T> {
    pub qid1: String,
    pub map5: T,
    pub map10: T,
    pub ndcg5: T,
    pub ndcg10: T,
    /// False when the group has no relevant candidate.
    pub evaluated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport<T> {
    pub map5: T,
    pub map10: T,
    pub ndcg5: T,
    pub ndcg10: T,
    pub evaluated_queries: usize,
    pub excluded_queries: usize,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub per_query: Vec<QueryMetrics<T>>,
}

impl<T: Real> MetricReport<T> {
    pub fn tsv_header() -> &'static str {
        "map@5\tmap@10\tndcg@5\tndcg@10\tevaluated\texcluded"
    }

    pub fn tsv_row(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.map5,
            self.map10,
            self.ndcg5,
            self.ndcg10,
            self.evaluated_queries,
            self.excluded_queries
        )
    }

    /// Summary line, plus per-query lines when the breakdown is present.
    pub fn to_tsv(&self) -> String {
        let mut out = format!("{}\n{}\n", Self::tsv_header(), self.tsv_row());
        if !self.per_query.is_empty() {
            out.push_str("\nqid1\tmap@5\tmap@10\tndcg@5\tndcg@10\tevaluated\n");
            for q in &self.per_query {
                writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}",
                    q.qid1, q.map5, q.map10, q.ndcg5, q.ndcg10, q.evaluated
                )
                .unwrap();
            }
        }
        out
    }

    pub fn without_breakdown(mut self) -> Self {
        self.per_query.clear();
        self
    }
}

pub fn query_metrics<T: Real>(qid1: &str, ranked_labels: &[u8]) -> QueryMetrics<T> {
    QueryMetrics {
        qid1: qid1.to_string(),
        map5: average_precision_at_k(ranked_labels, 5),
        map10: average_precision_at_k(ranked_labels, 10),
        ndcg5: ndcg_at_k(ranked_labels, 5),
        ndcg10: ndcg_at_k(ranked_labels, 10),
        evaluated: ranked_labels.iter().any(|&l| l > 0),
    }
}

/// Ranks each group by the tie rule and averages over groups with a relevant item.
pub fn evaluate<T: Real>(groups: &[ScoredGroup<T>]) -> MetricReport<T> {
    let per_query: Vec<QueryMetrics<T>> = groups
        .iter()
        .map(|g| {
            let mut g = g.clone();
            g.rank();
            query_metrics(&g.qid1, &g.ranked_labels())
        })
        .collect();
    report_from(per_query)
}

/// Averages already-ranked label lists.
pub fn evaluate_ranked<T: Real>(groups: &[(String, Vec<u8>)]) -> MetricReport<T> {
    report_from(
        groups
            .iter()
            .map(|(q, labels)| query_metrics(q, labels))
            .collect(),
    )
}

fn report_from<T: Real>(per_query: Vec<QueryMetrics<T>>) -> MetricReport<T> {
    let kept: Vec<&QueryMetrics<T>> = per_query.iter().filter(|q| q.evaluated).collect();
    let n = kept.len();
    let mean = |f: fn(&QueryMetrics<T>) -> T| {
        if n == 0 {
            T::zero()
        } else {
            kept.iter().map(|q| f(q)).sum::<T>() / T::from_count(n)
        }
    };
    MetricReport {
        map5: mean(|q| q.map5),
        map10: mean(|q| q.map10),
        ndcg5: mean(|q| q.ndcg5),
        ndcg10: mean(|q| q.ndcg10),
        evaluated_queries: n,
        excluded_queries: per_query.len() - n,
        per_query,
    }
}
