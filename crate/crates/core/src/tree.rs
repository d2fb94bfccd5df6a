//! Depth-bounded regression trees fit by exact greedy split search on
//! first/second-order loss statistics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::RankingDataset;
use crate::importance::{leaf_weight, split_gain, SplitStats};
use crate::lambdamart::BoostParams;
use crate::scalar::Real;

/// Arena node; the root is `nodes[0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Node<T> {
    /// Rows with `x[feature] < threshold` go left. `feature` is a 0-based column.
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
        gain: T,
        cover: T,
    },
    Leaf { value: T, cover: T },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree<T> {
    pub nodes: Vec<Node<T>>,
}

impl<T: Real> Tree<T> {
    pub fn leaf(value: T) -> Self {
        Tree {
            nodes: vec![Node::Leaf {
                value,
                cover: T::zero(),
            }],
        }
    }

    pub fn predict(&self, row: &[T]) -> T {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if row[*feature] < *threshold { *left } else { *right },
            }
        }
    }

    /// `(column, gain)` of every internal node.
    pub fn splits(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { feature, gain, .. } => Some((*feature, *gain)),
            Node::Leaf { .. } => None,
        })
    }

    pub fn depth(&self) -> usize {
        fn go<T>(nodes: &[Node<T>], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn leaf_values_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.nodes.iter_mut().filter_map(|n| match n {
            Node::Leaf { value, .. } => Some(value),
            Node::Split { .. } => None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams<T> {
    pub max_depth: usize,
    pub min_child_weight: T,
    pub lambda: T,
    pub gamma: T,
}

impl<T: Real> From<&BoostParams<T>> for TreeParams<T> {
    fn from(p: &BoostParams<T>) -> Self {
        TreeParams {
            max_depth: p.max_depth,
            min_child_weight: p.min_child_weight,
            lambda: p.lambda_reg,
            gamma: p.gamma,
        }
    }
}

/// Row-major feature values with each column's row order presorted.
pub struct FeatureMatrix<T> {
    n_rows: usize,
    n_cols: usize,
    values: Vec<T>,
    sorted: Vec<Vec<u32>>,
}

impl<T: Real> FeatureMatrix<T> {
    pub fn new(n_cols: usize, rows: Vec<Vec<T>>) -> Self {
        let n_rows = rows.len();
        let values: Vec<T> = rows.into_iter().flat_map(|r| {
            assert_eq!(r.len(), n_cols, "row width");
            r
        }).collect();
        let sorted = (0..n_cols)
            .into_par_iter()
            .map(|c| {
                let mut idx: Vec<u32> = (0..n_rows as u32).collect();
                idx.sort_by(|&a, &b| {
                    let (x, y) = (values[a as usize * n_cols + c], values[b as usize * n_cols + c]);
                    x.partial_cmp(&y).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
                });
                idx
            })
            .collect();
        FeatureMatrix {
            n_rows,
            n_cols,
            values,
            sorted,
        }
    }

    pub fn from_dataset(ds: &RankingDataset<T>) -> Self {
        Self::new(ds.width(), ds.rows().map(|r| r.values.clone()).collect())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    fn get(&self, row: usize, col: usize) -> T {
        self.values[row * self.n_cols + col]
    }
}

#[derive(Clone, Copy)]
struct Candidate<T> {
    feature: usize,
    threshold: T,
    gain: T,
}

/// Open node of the level being grown.
struct Frontier<T> {
    arena: usize,
    g: T,
    h: T,
}

const NO_NODE: u32 = u32::MAX;

fn midpoint<T: Real>(lo: T, hi: T) -> T {
    let mid = lo + (hi - lo) * T::lit(0.5);
    // adjacent floats: the upper value still routes right
    if mid > lo && mid <= hi {
        mid
    } else {
        hi
    }
}

fn best_split_for_feature<T: Real>(
    m: &FeatureMatrix<T>,
    col: usize,
    node_of_row: &[u32],
    frontier: &[Frontier<T>],
    grad: &[T],
    hess: &[T],
    params: &TreeParams<T>,
) -> Vec<Option<Candidate<T>>> {
    let k = frontier.len();
    let mut gl = vec![T::zero(); k];
    let mut hl = vec![T::zero(); k];
    let mut last: Vec<Option<T>> = vec![None; k];
    let mut best: Vec<Option<Candidate<T>>> = vec![None; k];
    for &r in &m.sorted[col] {
        let r = r as usize;
        let n = node_of_row[r];
        if n == NO_NODE {
            continue;
        }
        let n = n as usize;
        let v = m.get(r, col);
        if let Some(prev) = last[n] {
            if v > prev {
                let f = &frontier[n];
                let (hr, gr) = (f.h - hl[n], f.g - gl[n]);
                if hl[n] >= params.min_child_weight && hr >= params.min_child_weight {
                    let stats = SplitStats {
                        g_left: gl[n],
                        g_right: gr,
                        h_left: hl[n],
                        h_right: hr,
                        lambda: params.lambda,
                        gamma: params.gamma,
                    };
                    if let Ok(gain) = split_gain(&stats) {
                        if best[n].is_none_or(|b| gain > b.gain) {
                            best[n] = Some(Candidate {
                                feature: col,
                                threshold: midpoint(prev, v),
                                gain,
                            });
                        }
                    }
                }
            }
        }
        gl[n] += grad[r];
        hl[n] += hess[r];
        last[n] = Some(v);
    }
    best
}

/// Grows one tree level by level. A split is kept only when its gain
/// (net of `γ`) is positive and both children reach `min_child_weight`
/// hessian mass; leaves take the Newton weight `−G/(H+λ)`.
pub fn fit_tree<T: Real>(
    m: &FeatureMatrix<T>,
    grad: &[T],
    hess: &[T],
    params: &TreeParams<T>,
) -> Tree<T> {
    assert_eq!(grad.len(), m.n_rows());
    assert_eq!(hess.len(), m.n_rows());
    let g: T = grad.iter().copied().sum();
    let h: T = hess.iter().copied().sum();
    let mut nodes = vec![Node::Leaf {
        value: leaf_weight(g, h, params.lambda),
        cover: h,
    }];
    let mut node_of_row = vec![0u32; m.n_rows()];
    let mut frontier = vec![Frontier { arena: 0, g, h }];

    for _depth in 0..params.max_depth {
        if frontier.is_empty() {
            break;
        }
        let per_feature: Vec<Vec<Option<Candidate<T>>>> = (0..m.n_cols())
            .into_par_iter()
            .map(|c| best_split_for_feature(m, c, &node_of_row, &frontier, grad, hess, params))
            .collect();
        // lowest column wins ties
        let mut chosen: Vec<Option<Candidate<T>>> = vec![None; frontier.len()];
        for cands in &per_feature {
            for (slot, cand) in chosen.iter_mut().zip(cands) {
                if let Some(c) = cand {
                    if c.gain > T::zero() && slot.is_none_or(|s| c.gain > s.gain) {
                        *slot = Some(*c);
                    }
                }
            }
        }

        // frontier index -> (left frontier index, right frontier index)
        let mut next = Vec::new();
        let mut child_of: Vec<Option<(u32, u32)>> = vec![None; frontier.len()];
        let mut sums: Vec<(T, T, T, T)> = vec![(T::zero(), T::zero(), T::zero(), T::zero()); frontier.len()];
        for r in 0..m.n_rows() {
            let n = node_of_row[r];
            if n == NO_NODE {
                continue;
            }
            if let Some(c) = chosen[n as usize] {
                let s = &mut sums[n as usize];
                if m.get(r, c.feature) < c.threshold {
                    s.0 += grad[r];
                    s.1 += hess[r];
                } else {
                    s.2 += grad[r];
                    s.3 += hess[r];
                }
            }
        }
        for (fi, f) in frontier.iter().enumerate() {
            let Some(c) = chosen[fi] else { continue };
            let (gl, hl, gr, hr) = sums[fi];
            let left = nodes.len();
            nodes.push(Node::Leaf {
                value: leaf_weight(gl, hl, params.lambda),
                cover: hl,
            });
            nodes.push(Node::Leaf {
                value: leaf_weight(gr, hr, params.lambda),
                cover: hr,
            });
            nodes[f.arena] = Node::Split {
                feature: c.feature,
                threshold: c.threshold,
                left,
                right: left + 1,
                gain: c.gain,
                cover: f.h,
            };
            child_of[fi] = Some((next.len() as u32, next.len() as u32 + 1));
            next.push(Frontier { arena: left, g: gl, h: hl });
            next.push(Frontier { arena: left + 1, g: gr, h: hr });
        }
        for (r, slot) in node_of_row.iter_mut().enumerate() {
            let n = *slot;
            if n == NO_NODE {
                continue;
            }
            *slot = match (chosen[n as usize], child_of[n as usize]) {
                (Some(c), Some((l, rt))) => {
                    if m.get(r, c.feature) < c.threshold {
                        l
                    } else {
                        rt
                    }
                }
                _ => NO_NODE,
            };
        }
        frontier = next;
    }
    Tree { nodes }
}
