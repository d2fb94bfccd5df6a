//! Split-gain scoring and gain-based feature importance.
//!
//! `G` and `H` are sums of first and second loss derivatives over the rows
//! routed to a child; the gain of a split is
//!
//! ```text
//! ½ [ G_L²/(H_L+λ) + G_R²/(H_R+λ) − (G_L+G_R)²/(H_L+H_R+λ) ] − γ
//! ```

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::RankingDataset;
use crate::features::feature_info;
use crate::lambdamart::{BoostParams, RankModel};
use crate::scalar::Real;
use crate::tree::{fit_tree, FeatureMatrix, TreeParams};

#[derive(Debug, Error, PartialEq)]
pub enum GainError {
    #[error("child hessian sum plus regularizer is not positive (H_L+λ={left}, H_R+λ={right})")]
    DegenerateChild { left: f64, right: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitStats<T> {
    pub g_left: T,
    pub g_right: T,
    pub h_left: T,
    pub h_right: T,
    pub lambda: T,
    pub gamma: T,
}

/// Objective reduction of splitting a leaf, net of the per-leaf penalty `γ`.
pub fn split_gain<T: Real>(s: &SplitStats<T>) -> Result<T, GainError> {
    let dl = s.h_left + s.lambda;
    let dr = s.h_right + s.lambda;
    if !(dl > T::zero() && dr > T::zero()) {
        return Err(GainError::DegenerateChild {
            left: dl.as_f64(),
            right: dr.as_f64(),
        });
    }
    let g = s.g_left + s.g_right;
    let parent = g * g / (s.h_left + s.h_right + s.lambda);
    let half = T::lit(0.5);
    Ok(half * (s.g_left * s.g_left / dl + s.g_right * s.g_right / dr - parent) - s.gamma)
}

/// Newton leaf weight `−G/(H+λ)`.
pub fn leaf_weight<T: Real>(g: T, h: T, lambda: T) -> T {
    let d = h + lambda;
    if d > T::zero() {
        -g / d
    } else {
        T::zero()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance<T> {
    pub feature_id: usize,
    pub name: String,
    pub total_gain: T,
    pub share: T,
    pub split_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport<T> {
    /// Descending total gain, ties by feature ID.
    pub features: Vec<FeatureImportance<T>>,
    pub total_gain: T,
}

impl<T: Real> ImportanceReport<T> {
    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn top(&self, k: usize) -> &[FeatureImportance<T>] {
        &self.features[..k.min(self.features.len())]
    }

    pub fn share_of(&self, feature_id: usize) -> T {
        self.features
            .iter()
            .find(|f| f.feature_id == feature_id)
            .map_or(T::zero(), |f| f.share)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("feature_id\tname\ttotal_gain\tshare\tsplit_count\n");
        for f in &self.features {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                f.feature_id, f.name, f.total_gain, f.share, f.split_count
            )
            .unwrap();
        }
        out
    }

    /// `{"labels": [...], "values": [...]}` in report order, for bar charts.
    pub fn to_plot_json(&self, top_k: usize) -> serde_json::Value {
        let top = self.top(top_k);
        serde_json::json!({
            "labels": top.iter().map(|f| f.name.clone()).collect::<Vec<_>>(),
            "values": top.iter().map(|f| f.share.as_f64()).collect::<Vec<_>>(),
            "gains": top.iter().map(|f| f.total_gain.as_f64()).collect::<Vec<_>>(),
        })
    }
}

fn feature_name(id: usize) -> String {
    feature_info(id).map_or_else(|| format!("f{id}"), |f| f.label())
}

/// Sums recorded split gains per original feature ID over all trees.
pub fn gain_importance<T: Real>(model: &RankModel<T>) -> ImportanceReport<T> {
    let mut gains = vec![T::zero(); model.feature_ids.len()];
    let mut counts = vec![0usize; model.feature_ids.len()];
    for (col, gain) in model.trees.iter().flat_map(|t| t.splits()) {
        gains[col] += gain;
        counts[col] += 1;
    }
    let total: T = gains.iter().copied().sum();
    let mut features: Vec<FeatureImportance<T>> = (0..gains.len())
        .filter(|&c| counts[c] > 0)
        .map(|c| {
            let id = model.feature_ids[c];
            FeatureImportance {
                feature_id: id,
                name: feature_name(id),
                total_gain: gains[c],
                share: if total > T::zero() {
                    gains[c] / total
                } else {
                    T::zero()
                },
                split_count: counts[c],
            }
        })
        .collect();
    features.sort_by(|a, b| {
        b.total_gain
            .partial_cmp(&a.total_gain)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.feature_id.cmp(&b.feature_id))
    });
    ImportanceReport {
        features,
        total_gain: total,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuxiliaryLoss {
    /// Squared error: `g = pred − y`, `h = 1`.
    Regression,
    /// Logistic: `g = p − y`, `h = p(1 − p)`.
    Classification,
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Per-row gradient and hessian of the auxiliary loss at raw prediction `pred`.
pub fn loss_derivatives<T: Real>(loss: AuxiliaryLoss, pred: T, label: T) -> (T, T) {
    match loss {
        AuxiliaryLoss::Regression => (pred - label, T::one()),
        AuxiliaryLoss::Classification => {
            let p = sigmoid(pred);
            (p - label, p * (T::one() - p))
        }
    }
}

/// Boosts a pointwise ensemble on the same feature matrix.
pub fn train_auxiliary<T: Real>(
    data: &RankingDataset<T>,
    loss: AuxiliaryLoss,
    params: &BoostParams<T>,
) -> RankModel<T> {
    let matrix = FeatureMatrix::from_dataset(data);
    let labels: Vec<T> = data.rows().map(|r| T::from(r.label).unwrap()).collect();
    let n = labels.len();
    let mean = if n == 0 {
        T::zero()
    } else {
        labels.iter().copied().sum::<T>() / T::from_count(n)
    };
    let base = match loss {
        AuxiliaryLoss::Regression => mean,
        AuxiliaryLoss::Classification => {
            let eps = T::lit(1e-6);
            let p = mean.max(eps).min(T::one() - eps);
            (p / (T::one() - p)).ln()
        }
    };
    let tree_params = TreeParams::from(params);
    let mut preds = vec![base; n];
    let mut trees = Vec::with_capacity(params.num_rounds);
    for _ in 0..params.num_rounds {
        let (grad, hess): (Vec<T>, Vec<T>) = preds
            .iter()
            .zip(&labels)
            .map(|(&p, &y)| loss_derivatives(loss, p, y))
            .unzip();
        let tree = fit_tree(&matrix, &grad, &hess, &tree_params);
        for (i, p) in preds.iter_mut().enumerate() {
            *p += params.eta * tree.predict(matrix.row(i));
        }
        trees.push(tree);
    }
    RankModel {
        version: crate::lambdamart::MODEL_FORMAT_VERSION,
        learning_rate: params.eta,
        base_score: base,
        feature_ids: data.feature_ids.clone(),
        trees,
        config_hash: None,
    }
}

/// Importance under a regression- or classification-style auxiliary ensemble.
pub fn auxiliary_importance<T: Real>(
    data: &RankingDataset<T>,
    loss: AuxiliaryLoss,
    params: &BoostParams<T>,
) -> ImportanceReport<T> {
    gain_importance(&train_auxiliary(data, loss, params))
}
