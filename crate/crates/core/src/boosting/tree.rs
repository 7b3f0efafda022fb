//! Depth-wise regression trees fitted on binned features.

use super::binning::{BinnedMatrix, FeatureBins};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Rows per histogram block. Blocks are reduced in order, so histograms do
/// not depend on the number of worker threads.
const HISTOGRAM_BLOCK: usize = 16_384;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        leaf: usize,
    },
}

/// Nodes in breadth-first order; leaves numbered in the same order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "NestedNode", try_from = "NestedNode")]
pub struct Tree {
    nodes: Vec<Node>,
    leaf_values: Vec<f64>,
}

/// Serialized form: nested split / leaf objects.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum NestedNode {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<NestedNode>,
        right: Box<NestedNode>,
    },
    Leaf {
        value: f64,
    },
}

impl From<Tree> for NestedNode {
    fn from(tree: Tree) -> Self {
        fn build(tree: &Tree, id: usize) -> NestedNode {
            match tree.nodes[id] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => NestedNode::Split {
                    feature,
                    threshold,
                    left: Box::new(build(tree, left)),
                    right: Box::new(build(tree, right)),
                },
                Node::Leaf { leaf } => NestedNode::Leaf {
                    value: tree.leaf_values[leaf],
                },
            }
        }
        build(&tree, 0)
    }
}

impl TryFrom<NestedNode> for Tree {
    type Error = String;

    fn try_from(root: NestedNode) -> Result<Self, Self::Error> {
        // breadth-first renumbering
        let mut nodes = Vec::new();
        let mut leaf_values = Vec::new();
        let mut queue = std::collections::VecDeque::from([root]);
        let mut next_id = 1;
        while let Some(node) = queue.pop_front() {
            match node {
                NestedNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    nodes.push(Node::Split {
                        feature,
                        threshold,
                        left: next_id,
                        right: next_id + 1,
                    });
                    next_id += 2;
                    queue.push_back(*left);
                    queue.push_back(*right);
                }
                NestedNode::Leaf { value } => {
                    nodes.push(Node::Leaf {
                        leaf: leaf_values.len(),
                    });
                    leaf_values.push(value);
                }
            }
        }
        Ok(Tree { nodes, leaf_values })
    }
}

impl Tree {
    pub fn single_leaf(value: f64) -> Self {
        Tree {
            nodes: vec![Node::Leaf { leaf: 0 }],
            leaf_values: vec![value],
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn num_leaves(&self) -> usize {
        self.leaf_values.len()
    }

    pub fn leaf_values(&self) -> &[f64] {
        &self.leaf_values
    }

    pub fn set_leaf_values(&mut self, values: Vec<f64>) {
        assert_eq!(values.len(), self.leaf_values.len());
        self.leaf_values = values;
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], id: usize) -> usize {
            match nodes[id] {
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
                Node::Leaf { .. } => 0,
            }
        }
        go(&self.nodes, 0)
    }

    pub fn max_feature_index(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .max()
    }

    /// Leaf reached by a row; ties at a threshold go left.
    pub fn leaf_of<F: Fn(usize) -> f64>(&self, value_of: F) -> usize {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if value_of(feature) <= threshold { left } else { right },
                Node::Leaf { leaf } => return leaf,
            }
        }
    }

    pub fn predict_row<F: Fn(usize) -> f64>(&self, value_of: F) -> f64 {
        self.leaf_values[self.leaf_of(value_of)]
    }

    /// Leaf index of every row of `x`.
    pub fn assign(&self, x: &DMatrix<f64>) -> LeafAssignment {
        let leaf_index = (0..x.nrows())
            .map(|i| self.leaf_of(|j| x[(i, j)]) as u32)
            .collect();
        LeafAssignment {
            leaf_index,
            num_leaves: self.num_leaves(),
        }
    }
}

/// Sparse one-hot leaf membership (the matrix `M`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeafAssignment {
    pub leaf_index: Vec<u32>,
    pub num_leaves: usize,
}

impl LeafAssignment {
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.num_leaves];
        for &l in &self.leaf_index {
            c[l as usize] += 1;
        }
        c
    }

    /// `Mᵀ v`.
    pub fn leaf_sums(&self, v: &[f64]) -> Vec<f64> {
        let mut s = vec![0.0; self.num_leaves];
        for (&l, &x) in self.leaf_index.iter().zip(v) {
            s[l as usize] += x;
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthParams {
    pub max_depth: usize,
    pub min_gain_to_split: f64,
    pub min_samples_leaf: usize,
}

#[derive(Debug, Clone, Copy, Default)]
struct HistBin {
    sum: f64,
    count: u64,
}

/// Per-feature gradient sums and row counts, `stride` bins per feature.
struct Histogram {
    bins: Vec<HistBin>,
}

impl Histogram {
    fn zeros(len: usize) -> Self {
        Histogram {
            bins: vec![HistBin::default(); len],
        }
    }

    fn build(data: &BinnedMatrix, target: &[f64], rows: &[u32], stride: usize) -> Self {
        let p = data.ncols();
        let accumulate = |block: &[u32]| {
            let mut h = Histogram::zeros(p * stride);
            for &r in block {
                let g = target[r as usize];
                for (feature, &b) in h.bins.chunks_exact_mut(stride).zip(data.row(r as usize)) {
                    let cell = &mut feature[b as usize];
                    cell.sum += g;
                    cell.count += 1;
                }
            }
            h
        };
        if rows.len() <= HISTOGRAM_BLOCK {
            return accumulate(rows);
        }
        let partials: Vec<Histogram> = rows.par_chunks(HISTOGRAM_BLOCK).map(accumulate).collect();
        let mut iter = partials.into_iter();
        let mut total = iter.next().expect("non-empty");
        for h in iter {
            for (a, b) in total.bins.iter_mut().zip(&h.bins) {
                a.sum += b.sum;
                a.count += b.count;
            }
        }
        total
    }

    fn subtract(parent: &Histogram, child: &Histogram) -> Self {
        Histogram {
            bins: parent
                .bins
                .iter()
                .zip(&child.bins)
                .map(|(a, b)| HistBin {
                    sum: a.sum - b.sum,
                    count: a.count - b.count,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct SplitCandidate {
    feature: usize,
    bin: usize,
    gain: f64,
}

fn best_split(hist: &Histogram, bins: &FeatureBins, stride: usize, total: f64, count: usize, params: &GrowthParams) -> Option<SplitCandidate> {
    let parent_score = total * total / count as f64;
    let per_feature: Vec<Option<SplitCandidate>> = (0..bins.num_features())
        .into_par_iter()
        .map(|j| {
            let mut best: Option<SplitCandidate> = None;
            let mut left_sum = 0.0;
            let mut left_count = 0usize;
            let offset = j * stride;
            for b in 0..bins.num_bins(j).saturating_sub(1) {
                left_sum += hist.bins[offset + b].sum;
                left_count += hist.bins[offset + b].count as usize;
                let right_count = count - left_count;
                if left_count < params.min_samples_leaf {
                    continue;
                }
                if right_count < params.min_samples_leaf {
                    break;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / left_count as f64 + right_sum * right_sum / right_count as f64
                    - parent_score;
                if best.is_none_or(|c| gain > c.gain) {
                    best = Some(SplitCandidate { feature: j, bin: b, gain });
                }
            }
            best
        })
        .collect();
    let mut best: Option<SplitCandidate> = None;
    for c in per_feature.into_iter().flatten() {
        if best.is_none_or(|b| c.gain > b.gain) {
            best = Some(c);
        }
    }
    best.filter(|c| c.gain > 0.0 && c.gain >= params.min_gain_to_split)
}

struct OpenNode {
    id: usize,
    start: usize,
    end: usize,
    sum: f64,
    hist: Option<Histogram>,
}

/// Least-squares tree on `target` grown level by level up to `max_depth`.
///
/// A split is kept when its squared-error gain
/// `S_L²/n_L + S_R²/n_R − S²/n` is positive and at least `min_gain_to_split`
/// and both children have `min_samples_leaf` rows. Leaf values are the mean
/// target of the leaf.
pub fn grow_tree(data: &BinnedMatrix, bins: &FeatureBins, target: &[f64], params: &GrowthParams) -> (Tree, LeafAssignment) {
    let n = data.nrows();
    assert_eq!(n, target.len());
    let stride = bins.max_bins();
    let mut rows: Vec<u32> = (0..n as u32).collect();
    let mut scratch: Vec<u32> = Vec::with_capacity(n);
    let mut nodes: Vec<Option<Node>> = vec![None];
    let mut finished: Vec<(usize, usize, usize)> = Vec::new();
    let total: f64 = target.iter().sum();
    let mut level = vec![OpenNode {
        id: 0,
        start: 0,
        end: n,
        sum: total,
        hist: None,
    }];

    for depth in 0..=params.max_depth {
        let mut next = Vec::new();
        for mut node in level {
            let count = node.end - node.start;
            let can_split = depth < params.max_depth && count >= 2 * params.min_samples_leaf.max(1);
            let split = if can_split {
                let hist = node
                    .hist
                    .take()
                    .unwrap_or_else(|| Histogram::build(data, target, &rows[node.start..node.end], stride));
                best_split(&hist, bins, stride, node.sum, count, params).map(|c| (c, hist))
            } else {
                None
            };
            let Some((cand, hist)) = split else {
                finished.push((node.id, node.start, node.end));
                continue;
            };
            // stable partition of the node's rows
            scratch.clear();
            let mut left_len = 0;
            let mut left_sum = 0.0;
            for k in node.start..node.end {
                let r = rows[k];
                if (data.get(r as usize, cand.feature) as usize) <= cand.bin {
                    rows[node.start + left_len] = r;
                    left_len += 1;
                    left_sum += target[r as usize];
                } else {
                    scratch.push(r);
                }
            }
            let mid = node.start + left_len;
            rows[mid..node.end].copy_from_slice(&scratch);
            let left_id = nodes.len();
            nodes.push(None);
            nodes.push(None);
            nodes[node.id] = Some(Node::Split {
                feature: cand.feature,
                threshold: bins.threshold(cand.feature, cand.bin),
                left: left_id,
                right: left_id + 1,
            });
            let (mut left_hist, mut right_hist) = (None, None);
            if depth + 1 < params.max_depth {
                let (small_range, small_is_left) = if left_len <= node.end - mid {
                    (node.start..mid, true)
                } else {
                    (mid..node.end, false)
                };
                let small = Histogram::build(data, target, &rows[small_range], stride);
                let large = Histogram::subtract(&hist, &small);
                if small_is_left {
                    (left_hist, right_hist) = (Some(small), Some(large));
                } else {
                    (left_hist, right_hist) = (Some(large), Some(small));
                }
            }
            next.push(OpenNode {
                id: left_id,
                start: node.start,
                end: mid,
                sum: left_sum,
                hist: left_hist,
            });
            next.push(OpenNode {
                id: left_id + 1,
                start: mid,
                end: node.end,
                sum: node.sum - left_sum,
                hist: right_hist,
            });
        }
        level = next;
        if level.is_empty() {
            break;
        }
    }

    // number leaves in node order
    finished.sort_by_key(|&(id, _, _)| id);
    let mut leaf_index = vec![0u32; n];
    let mut leaf_values = Vec::with_capacity(finished.len());
    for (leaf, &(id, start, end)) in finished.iter().enumerate() {
        nodes[id] = Some(Node::Leaf { leaf });
        let mut s = 0.0;
        for &r in &rows[start..end] {
            leaf_index[r as usize] = leaf as u32;
            s += target[r as usize];
        }
        leaf_values.push(if end > start { s / (end - start) as f64 } else { 0.0 });
    }
    let nodes = nodes.into_iter().map(|n| n.expect("every node resolved")).collect();
    let num_leaves = leaf_values.len();
    (
        Tree { nodes, leaf_values },
        LeafAssignment {
            leaf_index,
            num_leaves,
        },
    )
}
