//! Binary regression trees grown level by level with exact greedy split
//! search over presorted feature values.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    /// Rows with `x[feature] < threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Self {
            nodes: vec![Node::Leaf { value }],
        }
    }

    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] < threshold { left } else { right },
                Node::Leaf { .. } => return i,
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(x)] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Multiplies every leaf by `factor`.
    pub(crate) fn scale(&mut self, factor: f64) {
        for node in &mut self.nodes {
            if let Node::Leaf { value } = node {
                *value *= factor;
            }
        }
    }

    pub(crate) fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .max()
    }

    pub(crate) fn is_well_formed(&self) -> bool {
        !self.nodes.is_empty()
            && self.nodes.iter().enumerate().all(|(i, n)| match *n {
                Node::Split {
                    left,
                    right,
                    threshold,
                    ..
                } => left > i && right > i && left < self.nodes.len() && right < self.nodes.len() && !threshold.is_nan(),
                Node::Leaf { value } => value.is_finite(),
            })
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub l2: f64,
}

/// Gains within this relative distance are treated as equal, so the first
/// candidate in (feature, threshold) order wins.
const GAIN_TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

fn beats(gain: f64, best: Option<&Candidate>) -> bool {
    match best {
        None => true,
        Some(b) => gain > b.gain + GAIN_TIE_TOL * b.gain.abs().max(1.0),
    }
}

struct Building {
    grad: f64,
    hess: f64,
    count: usize,
    depth: usize,
}

fn score(grad: f64, hess: f64, l2: f64) -> f64 {
    grad * grad / (hess + l2)
}

/// Threshold strictly above `lo` and at most `hi`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid > lo && mid <= hi {
        mid
    } else {
        hi
    }
}

/// Grows one tree on gradients `grad` and hessians `hess`. Returns the tree
/// with unscaled Newton leaf values `-G / (H + l2)` and the leaf node index of
/// every training row.
pub(crate) fn grow(
    x: &Matrix,
    sorted: &[Vec<u32>],
    grad: &[f64],
    hess: &[f64],
    params: TreeParams,
) -> (Tree, Vec<usize>) {
    let n = x.n_rows();
    let mut node_of = vec![0usize; n];
    let mut building = vec![Building {
        grad: grad.iter().sum(),
        hess: hess.iter().sum(),
        count: n,
        depth: 0,
    }];
    // None until the node is split.
    let mut splits: Vec<Option<(usize, f64, usize, usize)>> = vec![None];
    let mut frontier = vec![0usize];
    let msl = params.min_samples_leaf.max(1);

    while !frontier.is_empty() {
        let active: Vec<usize> = frontier
            .iter()
            .copied()
            .filter(|&id| {
                let b = &building[id];
                b.depth < params.max_depth && b.count >= 2 * msl
            })
            .collect();
        if active.is_empty() {
            break;
        }
        let mut slot_of = vec![usize::MAX; building.len()];
        for (s, &id) in active.iter().enumerate() {
            slot_of[id] = s;
        }

        let per_feature: Vec<Vec<Option<Candidate>>> = (0..x.n_cols())
            .into_par_iter()
            .map(|f| scan_feature(x, f, &sorted[f], grad, hess, &node_of, &slot_of, &active, &building, params.l2, msl))
            .collect();

        let mut next = Vec::new();
        for (s, &id) in active.iter().enumerate() {
            let mut best: Option<Candidate> = None;
            for cands in &per_feature {
                if let Some(c) = cands[s] {
                    if beats(c.gain, best.as_ref()) {
                        best = Some(c);
                    }
                }
            }
            let Some(best) = best else { continue };
            let parent_score = score(building[id].grad, building[id].hess, params.l2);
            if best.gain < -GAIN_TIE_TOL * parent_score.max(1.0) {
                continue;
            }
            let depth = building[id].depth + 1;
            let left = building.len();
            let right = left + 1;
            for _ in 0..2 {
                building.push(Building {
                    grad: 0.0,
                    hess: 0.0,
                    count: 0,
                    depth,
                });
                splits.push(None);
            }
            splits[id] = Some((best.feature, best.threshold, left, right));
            next.push(left);
            next.push(right);
        }

        for i in 0..n {
            if let Some((f, thr, left, right)) = splits[node_of[i]] {
                let child = if x.get(i, f) < thr { left } else { right };
                node_of[i] = child;
                let b = &mut building[child];
                b.grad += grad[i];
                b.hess += hess[i];
                b.count += 1;
            }
        }
        frontier = next;
    }

    let nodes = building
        .iter()
        .zip(&splits)
        .map(|(b, split)| match *split {
            Some((feature, threshold, left, right)) => Node::Split {
                feature,
                threshold,
                left,
                right,
            },
            None => Node::Leaf {
                value: if b.count == 0 {
                    0.0
                } else {
                    -b.grad / (b.hess + params.l2)
                },
            },
        })
        .collect();
    (Tree { nodes }, node_of)
}

#[derive(Clone, Copy)]
struct ScanState {
    grad: f64,
    hess: f64,
    count: usize,
    last: f64,
}

#[allow(clippy::too_many_arguments)]
fn scan_feature(
    x: &Matrix,
    feature: usize,
    order: &[u32],
    grad: &[f64],
    hess: &[f64],
    node_of: &[usize],
    slot_of: &[usize],
    active: &[usize],
    building: &[Building],
    l2: f64,
    msl: usize,
) -> Vec<Option<Candidate>> {
    let mut state = vec![
        ScanState {
            grad: 0.0,
            hess: 0.0,
            count: 0,
            last: f64::NAN,
        };
        active.len()
    ];
    let mut best: Vec<Option<Candidate>> = vec![None; active.len()];
    for &i in order {
        let i = i as usize;
        let node = node_of[i];
        let slot = match slot_of.get(node) {
            Some(&s) if s != usize::MAX => s,
            _ => continue,
        };
        let v = x.get(i, feature);
        let st = &mut state[slot];
        let parent = &building[active[slot]];
        if st.count >= msl && parent.count - st.count >= msl && v != st.last {
            let rg = parent.grad - st.grad;
            let rh = parent.hess - st.hess;
            let gain = score(st.grad, st.hess, l2) + score(rg, rh, l2)
                - score(parent.grad, parent.hess, l2);
            if beats(gain, best[slot].as_ref()) {
                best[slot] = Some(Candidate {
                    gain,
                    feature,
                    threshold: midpoint(st.last, v),
                });
            }
        }
        st.grad += grad[i];
        st.hess += hess[i];
        st.count += 1;
        st.last = v;
    }
    best
}
