//! LambdaMART: boosted regression trees fit to pairwise lambda gradients
//! weighted by the |ΔNDCG@k| of swapping each mis-orderable pair.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::RankingDataset;
use crate::metrics::{evaluate, ScoredGroup, ScoredItem};
use crate::scalar::Real;
use crate::tree::{fit_tree, FeatureMatrix, Tree, TreeParams};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Pair lambdas are rounded to multiples of 2^-32 and summed as integers.
const LAMBDA_SCALE: f64 = 4_294_967_296.0;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("feature width mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("invalid boosting parameters: {0}")]
    BadParams(String),
    #[error("{path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("model file: {0}")]
    Format(#[from] serde_json::Error),
    #[error("unsupported model version {0}")]
    Version(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostParams<T> {
    pub eta: T,
    /// Per-leaf penalty subtracted from every split gain.
    pub gamma: T,
    /// Minimum hessian sum per child.
    pub min_child_weight: T,
    pub max_depth: usize,
    pub num_rounds: usize,
    pub sigma: T,
    /// Cutoff of the |ΔNDCG| weighting.
    pub ndcg_truncation: usize,
    /// L2 regularizer of leaf weights.
    pub lambda_reg: T,
}

impl<T: Real> Default for BoostParams<T> {
    fn default() -> Self {
        BoostParams {
            eta: T::lit(0.3),
            gamma: T::one(),
            min_child_weight: T::lit(0.1),
            max_depth: 3,
            num_rounds: 500,
            sigma: T::one(),
            ndcg_truncation: 10,
            lambda_reg: T::one(),
        }
    }
}

impl<T: Real> BoostParams<T> {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::BadParams(m.to_string()));
        if !(self.eta > T::zero() && self.eta <= T::one()) {
            return bad("eta must lie in (0, 1]");
        }
        if self.max_depth < 1 {
            return bad("max_depth must be at least 1");
        }
        if self.num_rounds < 1 {
            return bad("num_rounds must be at least 1");
        }
        if self.ndcg_truncation < 1 {
            return bad("ndcg_truncation must be at least 1");
        }
        if !(self.sigma > T::zero()) {
            return bad("sigma must be positive");
        }
        if self.gamma < T::zero() || self.lambda_reg < T::zero() || self.min_child_weight < T::zero() {
            return bad("gamma, lambda_reg and min_child_weight must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaGrad<T> {
    /// Positive values push the document's score up.
    pub lambda: T,
    pub hessian: T,
}

fn position_discount<T: Real>(rank: usize, k: usize) -> T {
    if rank > k {
        T::zero()
    } else {
        T::one() / T::from_count(rank + 1).log2()
    }
}

fn label_gain<T: Real>(label: u8) -> T {
    T::lit(2f64.powi(i32::from(label)) - 1.0)
}

/// Lambdas and hessians for one query group of `(score, label)` pairs.
///
/// Current ranks come from sorting by descending score with ties in input
/// order. For each pair with `label_i > label_j`,
/// `ρ = 1/(1 + exp(σ(s_i − s_j)))` and `λ_i += σρ|ΔNDCG@k|`, `λ_j −= σρ|ΔNDCG@k|`,
/// both hessians gaining `σ²ρ(1−ρ)|ΔNDCG@k|`. Because pair contributions are
/// accumulated in fixed point, the returned lambdas of a group sum to exactly
/// zero in `f64`.
pub fn lambda_gradients<T: Real>(group: &[(T, u8)], k: usize, sigma: T) -> Vec<LambdaGrad<T>> {
    let n = group.len();
    let zero = LambdaGrad {
        lambda: T::zero(),
        hessian: T::zero(),
    };
    if n < 2 {
        return vec![zero; n];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        group[b]
            .0
            .partial_cmp(&group[a].0)
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut rank = vec![0usize; n];
    for (pos, &i) in order.iter().enumerate() {
        rank[i] = pos + 1;
    }
    let mut ideal: Vec<u8> = group.iter().map(|g| g.1).collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: T = ideal
        .iter()
        .enumerate()
        .map(|(p, &l)| label_gain::<T>(l) * position_discount::<T>(p + 1, k))
        .sum();
    if idcg == T::zero() {
        return vec![zero; n];
    }

    let scale = T::lit(LAMBDA_SCALE);
    let mut fixed = vec![0i128; n];
    let mut hess = vec![T::zero(); n];
    for i in 0..n {
        for j in 0..n {
            if group[i].1 <= group[j].1 {
                continue;
            }
            let delta = ((label_gain::<T>(group[i].1) - label_gain::<T>(group[j].1))
                * (position_discount::<T>(rank[i], k) - position_discount::<T>(rank[j], k)))
                .abs()
                / idcg;
            if delta == T::zero() {
                continue;
            }
            let rho = T::one() / (T::one() + (sigma * (group[i].0 - group[j].0)).exp());
            let lambda = sigma * rho * delta;
            let q = (lambda * scale).round().to_i128().unwrap_or(0);
            fixed[i] += q;
            fixed[j] -= q;
            let h = sigma * sigma * rho * (T::one() - rho) * delta;
            hess[i] += h;
            hess[j] += h;
        }
    }
    fixed
        .into_iter()
        .zip(hess)
        .map(|(q, hessian)| LambdaGrad {
            lambda: T::lit(q as f64 / LAMBDA_SCALE),
            hessian,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankModel<T> {
    pub version: u32,
    pub learning_rate: T,
    pub base_score: T,
    /// Original feature ID behind each input column.
    pub feature_ids: Vec<usize>,
    pub trees: Vec<Tree<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl<T: Real> RankModel<T> {
    pub fn feature_count(&self) -> usize {
        self.feature_ids.len()
    }

    /// `base + η · Σ leaf(x)`.
    pub fn predict(&self, row: &[T]) -> T {
        let sum: T = self.trees.iter().map(|t| t.predict(row)).sum();
        self.base_score + self.learning_rate * sum
    }

    pub fn to_json(&self) -> Result<String, TrainError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, TrainError> {
        let model: Self = serde_json::from_str(text)?;
        if model.version != MODEL_FORMAT_VERSION {
            return Err(TrainError::Version(model.version));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        fs::write(path, self.to_json()?).map_err(|source| TrainError::IoFailure {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let text = fs::read_to_string(path).map_err(|source| TrainError::IoFailure {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}

/// Scores every group and ranks it (descending score, then qid2).
pub fn score<T: Real>(
    model: &RankModel<T>,
    ds: &RankingDataset<T>,
) -> Result<Vec<ScoredGroup<T>>, TrainError> {
    if ds.width() != model.feature_count() {
        return Err(TrainError::DimensionMismatch {
            expected: model.feature_count(),
            got: ds.width(),
        });
    }
    Ok(ds
        .groups
        .par_iter()
        .map(|g| {
            let mut sg = ScoredGroup {
                qid1: g.qid1.clone(),
                items: g
                    .items
                    .iter()
                    .map(|v| ScoredItem {
                        qid2: v.qid2.clone(),
                        label: v.label,
                        score: model.predict(&v.values),
                    })
                    .collect(),
            };
            sg.rank();
            sg
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundLog<T> {
    pub round: usize,
    pub train_ndcg10: T,
    pub dev_ndcg10: T,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Truncated to the best dev round.
    pub model: RankModel<T>,
    pub best_round: usize,
    pub log: Vec<RoundLog<T>>,
}

impl<T: Real> TrainOutcome<T> {
    pub fn log_tsv(&self) -> String {
        let mut out = String::from("round\ttrain_ndcg@10\tdev_ndcg@10\n");
        for r in &self.log {
            writeln!(out, "{}\t{}\t{}", r.round, r.train_ndcg10, r.dev_ndcg10).unwrap();
        }
        out
    }
}

/// Rows of a dataset laid out for boosting.
struct GroupedRows<T> {
    matrix: FeatureMatrix<T>,
    /// Row range of each group.
    spans: Vec<(usize, usize)>,
    labels: Vec<u8>,
    qid2: Vec<String>,
    qid1: Vec<String>,
}

impl<T: Real> GroupedRows<T> {
    fn new(ds: &RankingDataset<T>) -> Self {
        let mut spans = Vec::with_capacity(ds.groups.len());
        let mut start = 0;
        for g in &ds.groups {
            spans.push((start, start + g.items.len()));
            start += g.items.len();
        }
        GroupedRows {
            matrix: FeatureMatrix::from_dataset(ds),
            spans,
            labels: ds.rows().map(|r| r.label).collect(),
            qid2: ds.rows().map(|r| r.qid2.clone()).collect(),
            qid1: ds.groups.iter().map(|g| g.qid1.clone()).collect(),
        }
    }

    fn ndcg10(&self, scores: &[T]) -> T {
        let groups: Vec<ScoredGroup<T>> = self
            .spans
            .iter()
            .zip(&self.qid1)
            .map(|(&(a, b), q)| ScoredGroup {
                qid1: q.clone(),
                items: (a..b)
                    .map(|r| ScoredItem {
                        qid2: self.qid2[r].clone(),
                        label: self.labels[r],
                        score: scores[r],
                    })
                    .collect(),
            })
            .collect();
        evaluate(&groups).ndcg10
    }
}

/// Boosts `num_rounds` trees and keeps the prefix with the best dev NDCG@10
/// (earliest round on ties; train NDCG@10 when `dev` is empty).
pub fn train<T: Real>(
    train: &RankingDataset<T>,
    dev: &RankingDataset<T>,
    params: &BoostParams<T>,
) -> Result<TrainOutcome<T>, TrainError> {
    params.validate()?;
    if train.is_empty() || train.width() == 0 {
        return Err(TrainError::EmptyDataset);
    }
    if !dev.is_empty() && dev.width() != train.width() {
        return Err(TrainError::DimensionMismatch {
            expected: train.width(),
            got: dev.width(),
        });
    }
    let tr = GroupedRows::new(train);
    let dv = (!dev.is_empty()).then(|| GroupedRows::new(dev));
    let tree_params = TreeParams::from(params);
    let mut train_scores = vec![T::zero(); tr.matrix.n_rows()];
    let mut dev_scores = vec![T::zero(); dv.as_ref().map_or(0, |d| d.matrix.n_rows())];
    let mut trees = Vec::with_capacity(params.num_rounds);
    let mut log = Vec::with_capacity(params.num_rounds);
    let mut best: Option<(usize, T)> = None;

    for round in 1..=params.num_rounds {
        let per_group: Vec<Vec<LambdaGrad<T>>> = tr
            .spans
            .par_iter()
            .map(|&(a, b)| {
                let group: Vec<(T, u8)> = (a..b).map(|r| (train_scores[r], tr.labels[r])).collect();
                lambda_gradients(&group, params.ndcg_truncation, params.sigma)
            })
            .collect();
        let (grad, hess): (Vec<T>, Vec<T>) = per_group
            .into_iter()
            .flatten()
            .map(|lg| (-lg.lambda, lg.hessian))
            .unzip();
        let tree = fit_tree(&tr.matrix, &grad, &hess, &tree_params);
        train_scores
            .par_iter_mut()
            .enumerate()
            .for_each(|(r, s)| *s += params.eta * tree.predict(tr.matrix.row(r)));
        if let Some(d) = &dv {
            dev_scores
                .par_iter_mut()
                .enumerate()
                .for_each(|(r, s)| *s += params.eta * tree.predict(d.matrix.row(r)));
        }
        trees.push(tree);

        let train_ndcg = tr.ndcg10(&train_scores);
        let dev_ndcg = dv.as_ref().map_or(train_ndcg, |d| d.ndcg10(&dev_scores));
        log::debug!("round {round}: train ndcg@10 {train_ndcg}, dev ndcg@10 {dev_ndcg}");
        log.push(RoundLog {
            round,
            train_ndcg10: train_ndcg,
            dev_ndcg10: dev_ndcg,
        });
        if best.is_none_or(|(_, b)| dev_ndcg > b) {
            best = Some((round, dev_ndcg));
        }
    }
    let (best_round, best_ndcg) = best.expect("at least one round");
    log::info!("best dev ndcg@10 {best_ndcg} at round {best_round}");
    trees.truncate(best_round);
    Ok(TrainOutcome {
        model: RankModel {
            version: MODEL_FORMAT_VERSION,
            learning_rate: params.eta,
            base_score: T::zero(),
            feature_ids: train.feature_ids.clone(),
            trees,
            config_hash: None,
        },
        best_round,
        log,
    })
}
