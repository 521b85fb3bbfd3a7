use std::cmp::Ordering;
use std::collections::BinaryHeap;

use ndarray::ArrayView2;
use rand::Rng;

use crate::error::{Error, Result};

const LEAF: usize = usize::MAX;

/// Growth limits for one CART regression tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    /// Best-first growth stops once this many leaves exist.
    pub max_leaf_nodes: Option<usize>,
    /// A split must reduce the squared error by strictly more than this.
    pub min_gain: f64,
    /// Number of features examined per split; `None` examines all.
    pub features_per_split: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: usize::MAX,
            max_leaf_nodes: None,
            min_gain: 0.0,
            features_per_split: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    /// `usize::MAX` marks a leaf.
    pub feature: usize,
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
    pub value: f64,
}

impl Node {
    fn leaf(value: f64) -> Self {
        Node {
            feature: LEAF,
            threshold: 0.0,
            left: LEAF,
            right: LEAF,
            value,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.feature == LEAF
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

struct Candidate {
    node: usize,
    depth: usize,
    indices: Vec<usize>,
    split: Split,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    // largest gain first, then the earliest-created node
    fn cmp(&self, other: &Self) -> Ordering {
        self.split
            .gain
            .total_cmp(&other.split.gain)
            .then(other.node.cmp(&self.node))
    }
}

fn leaf_value(y: &[f64], indices: &[usize]) -> f64 {
    let first = y[indices[0]];
    if indices.iter().all(|&i| y[i] == first) {
        return first;
    }
    indices.iter().map(|&i| y[i]).sum::<f64>() / indices.len() as f64
}

/// Best squared-error split of `indices` over `features`, if any reduces the
/// error by more than `min_gain`. Thresholds are midpoints between
/// consecutive distinct values; ties keep the lowest feature and threshold.
pub fn best_split(
    x: ArrayView2<f64>,
    y: &[f64],
    indices: &[usize],
    features: &[usize],
    min_gain: f64,
) -> Option<Split> {
    let n = indices.len();
    if n < 2 {
        return None;
    }
    let mean = indices.iter().map(|&i| y[i]).sum::<f64>() / n as f64;
    let centered: Vec<f64> = indices.iter().map(|&i| y[i] - mean).collect();
    let total: f64 = centered.iter().sum();
    let parent_sse: f64 = centered.iter().map(|v| v * v).sum();

    let mut best: Option<Split> = None;
    let mut order: Vec<usize> = (0..n).collect();
    for &f in features {
        order.sort_by(|&a, &b| x[[indices[a], f]].total_cmp(&x[[indices[b], f]]));
        let (mut sum_l, mut sq_l) = (0.0, 0.0);
        let total_sq = parent_sse;
        for k in 1..n {
            let v = centered[order[k - 1]];
            sum_l += v;
            sq_l += v * v;
            let lo = x[[indices[order[k - 1]], f]];
            let hi = x[[indices[order[k]], f]];
            if lo >= hi {
                continue;
            }
            let (nl, nr) = (k as f64, (n - k) as f64);
            let sum_r = total - sum_l;
            let sse_l = sq_l - sum_l * sum_l / nl;
            let sse_r = (total_sq - sq_l) - sum_r * sum_r / nr;
            let gain = parent_sse - sse_l - sse_r;
            if gain > min_gain && best.is_none_or(|b| gain > b.gain) {
                let mid = lo + (hi - lo) / 2.0;
                best = Some(Split {
                    feature: f,
                    // adjacent floats: the midpoint can round up to `hi`
                    threshold: if mid < hi { mid } else { lo },
                    gain,
                });
            }
        }
    }
    best
}

impl RegressionTree {
    /// Fits on the rows listed in `indices` (duplicates allowed, as produced
    /// by bootstrap resampling).
    pub fn fit<R: Rng>(
        x: ArrayView2<f64>,
        y: &[f64],
        indices: Vec<usize>,
        params: &TreeParams,
        rng: &mut R,
    ) -> Result<Self> {
        if indices.is_empty() || x.nrows() == 0 {
            return Err(Error::invalid("cannot fit a tree on empty data"));
        }
        if x.nrows() != y.len() {
            return Err(Error::dim(format!(
                "{} feature rows but {} targets",
                x.nrows(),
                y.len()
            )));
        }
        let p = x.ncols();
        let per_split = params.features_per_split.unwrap_or(p).clamp(1, p.max(1));
        let pick_features = |rng: &mut R| -> Vec<usize> {
            if per_split >= p {
                (0..p).collect()
            } else {
                let mut f = rand::seq::index::sample(rng, p, per_split).into_vec();
                f.sort_unstable();
                f
            }
        };

        let mut nodes = vec![Node::leaf(leaf_value(y, &indices))];
        let mut heap = BinaryHeap::new();
        let consider = |node: usize, depth: usize, indices: Vec<usize>, rng: &mut R, heap: &mut BinaryHeap<Candidate>| {
            if depth >= params.max_depth {
                return;
            }
            let first = y[indices[0]];
            if indices.iter().all(|&i| y[i] == first) {
                return;
            }
            let features = pick_features(rng);
            if let Some(split) = best_split(x, y, &indices, &features, params.min_gain) {
                heap.push(Candidate {
                    node,
                    depth,
                    indices,
                    split,
                });
            }
        };
        consider(0, 0, indices, rng, &mut heap);

        let mut leaves = 1;
        while let Some(c) = heap.pop() {
            if params.max_leaf_nodes.is_some_and(|m| leaves >= m) {
                break;
            }
            let (left, right): (Vec<usize>, Vec<usize>) = c
                .indices
                .iter()
                .partition(|&&i| x[[i, c.split.feature]] <= c.split.threshold);
            let li = nodes.len();
            nodes.push(Node::leaf(leaf_value(y, &left)));
            nodes.push(Node::leaf(leaf_value(y, &right)));
            let parent = &mut nodes[c.node];
            parent.feature = c.split.feature;
            parent.threshold = c.split.threshold;
            parent.left = li;
            parent.right = li + 1;
            leaves += 1;
            consider(li, c.depth + 1, left, rng, &mut heap);
            consider(li + 1, c.depth + 1, right, rng, &mut heap);
        }
        Ok(RegressionTree { nodes })
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut node = &self.nodes[0];
        while !node.is_leaf() {
            node = if row[node.feature] <= node.threshold {
                &self.nodes[node.left]
            } else {
                &self.nodes[node.right]
            };
        }
        node.value
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            let n = &nodes[i];
            if n.is_leaf() {
                0
            } else {
                1 + walk(nodes, n.left).max(walk(nodes, n.right))
            }
        }
        walk(&self.nodes, 0)
    }

    /// Features used by at least one split.
    pub fn used_features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self.nodes.iter().filter(|n| !n.is_leaf()).map(|n| n.feature).collect();
        f.sort_unstable();
        f.dedup();
        f
    }

    /// Flat column layout used by checkpoints: feature, threshold, left, right, value.
    pub fn to_columns(&self) -> [Vec<f64>; 5] {
        let enc = |v: usize| if v == LEAF { -1.0 } else { v as f64 };
        [
            self.nodes.iter().map(|n| enc(n.feature)).collect(),
            self.nodes.iter().map(|n| n.threshold).collect(),
            self.nodes.iter().map(|n| enc(n.left)).collect(),
            self.nodes.iter().map(|n| enc(n.right)).collect(),
            self.nodes.iter().map(|n| n.value).collect(),
        ]
    }

    pub fn from_columns(cols: [&[f64]; 5]) -> Result<Self> {
        let n = cols[0].len();
        if n == 0 || cols.iter().any(|c| c.len() != n) {
            return Err(Error::invalid("tree columns must be non-empty and equal length"));
        }
        let dec = |v: f64| -> Result<usize> {
            if v == -1.0 {
                Ok(LEAF)
            } else if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::invalid(format!("bad tree index {v}")))
            }
        };
        let nodes = (0..n)
            .map(|i| {
                let node = Node {
                    feature: dec(cols[0][i])?,
                    threshold: cols[1][i],
                    left: dec(cols[2][i])?,
                    right: dec(cols[3][i])?,
                    value: cols[4][i],
                };
                if !node.is_leaf() && (node.left >= n || node.right >= n || node.left <= i || node.right <= i) {
                    return Err(Error::invalid(format!("tree node {i} has out-of-range children")));
                }
                Ok(node)
            })
            .collect::<Result<_>>()?;
        Ok(RegressionTree { nodes })
    }
}

/// Convenience wrapper fitting on all rows.
pub fn fit_tree<R: Rng>(x: ArrayView2<f64>, y: &[f64], params: &TreeParams, rng: &mut R) -> Result<RegressionTree> {
    RegressionTree::fit(x, y, (0..x.nrows()).collect(), params, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn constant_target_is_single_leaf() {
        let x = Array2::from_shape_fn((20, 2), |(i, j)| (i * 3 + j) as f64);
        let y = vec![0.7; 20];
        let t = fit_tree(x.view(), &y, &TreeParams::default(), &mut rng()).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.predict(&[100.0, -3.0]), 0.7);
    }

    #[test]
    fn step_function_needs_one_split() {
        let xs = [-3.0, -2.0, -1.5, -1.0, 1.0, 1.5, 2.0, 3.0];
        let x = Array2::from_shape_fn((8, 2), |(i, j)| if j == 0 { xs[i] } else { (i % 3) as f64 });
        let y: Vec<f64> = xs.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
        let t = fit_tree(x.view(), &y, &TreeParams::default(), &mut rng()).unwrap();
        assert_eq!(t.depth(), 1);
        assert_eq!(t.nodes[0].feature, 0);
        assert_eq!(t.nodes[0].threshold, 0.0);
        for (i, &target) in y.iter().enumerate() {
            assert_eq!(t.predict(&[xs[i], 0.0]), target);
        }
    }

    /// Exhaustive split search: every feature, every midpoint, SSE by direct sums.
    fn brute_force_split(x: &Array2<f64>, y: &[f64]) -> (usize, f64, f64) {
        let sse = |v: &[f64]| {
            if v.is_empty() {
                return 0.0;
            }
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|a| (a - m).powi(2)).sum::<f64>()
        };
        let parent = sse(y);
        let mut best = (usize::MAX, 0.0, f64::NEG_INFINITY);
        for f in 0..x.ncols() {
            let mut vals: Vec<f64> = x.column(f).to_vec();
            vals.sort_by(|a, b| a.total_cmp(b));
            vals.dedup();
            for w in vals.windows(2) {
                let thr = w[0] + (w[1] - w[0]) / 2.0;
                let (mut l, mut r) = (Vec::new(), Vec::new());
                for i in 0..y.len() {
                    if x[[i, f]] <= thr {
                        l.push(y[i]);
                    } else {
                        r.push(y[i]);
                    }
                }
                let gain = parent - sse(&l) - sse(&r);
                if gain > best.2 {
                    best = (f, thr, gain);
                }
            }
        }
        best
    }

    #[test]
    fn root_split_matches_exhaustive_search() {
        let mut r = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let x: Array2<f64> = Array2::from_shape_fn((50, 3), |_| r.gen_range(-2.0..2.0));
            let y: Vec<f64> = (0..50).map(|i| x[[i, 1]].powi(2) + 0.5 * x[[i, 2]] + r.gen_range(-0.3..0.3)).collect();
            let t = fit_tree(x.view(), &y, &TreeParams { max_depth: 1, ..Default::default() }, &mut rng()).unwrap();
            let (f, thr, gain) = brute_force_split(&x, &y);
            assert_eq!(t.nodes[0].feature, f);
            assert_eq!(t.nodes[0].threshold, thr);
            let fast = best_split(x.view(), &y, &(0..50).collect::<Vec<_>>(), &[0, 1, 2], 0.0).unwrap();
            assert!((fast.gain - gain).abs() < 1e-9 * gain.abs().max(1.0));
        }
    }

    #[test]
    fn deep_tree_memorizes() {
        let mut r = ChaCha8Rng::seed_from_u64(5);
        let x = Array2::from_shape_fn((80, 4), |_| r.gen_range(0.0..1.0));
        let y: Vec<f64> = (0..80).map(|_| r.gen_range(-1.0..1.0)).collect();
        let t = fit_tree(x.view(), &y, &TreeParams::default(), &mut rng()).unwrap();
        for (row, target) in x.rows().into_iter().zip(&y) {
            assert_eq!(t.predict(&row.to_vec()), *target);
        }
    }

    #[test]
    fn leaf_limit_is_respected() {
        let mut r = ChaCha8Rng::seed_from_u64(6);
        let x = Array2::from_shape_fn((200, 3), |_| r.gen_range(0.0..1.0));
        let y: Vec<f64> = (0..200).map(|i| x[[i, 0]] * 3.0 + x[[i, 1]]).collect();
        let params = TreeParams {
            max_depth: 10,
            max_leaf_nodes: Some(15),
            ..Default::default()
        };
        let t = fit_tree(x.view(), &y, &params, &mut rng()).unwrap();
        assert_eq!(t.leaf_count(), 15);
        assert!(t.depth() <= 10);
        let shallow = fit_tree(x.view(), &y, &TreeParams { max_depth: 2, ..Default::default() }, &mut rng()).unwrap();
        assert!(shallow.depth() <= 2 && shallow.leaf_count() <= 4);
    }

    #[test]
    fn columns_round_trip() {
        let mut r = ChaCha8Rng::seed_from_u64(7);
        let x = Array2::from_shape_fn((40, 2), |_| r.gen_range(0.0..1.0));
        let y: Vec<f64> = (0..40).map(|i| x[[i, 0]] - x[[i, 1]]).collect();
        let t = fit_tree(x.view(), &y, &TreeParams { max_depth: 4, ..Default::default() }, &mut rng()).unwrap();
        let cols = t.to_columns();
        let back = RegressionTree::from_columns([&cols[0], &cols[1], &cols[2], &cols[3], &cols[4]]).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn empty_data_rejected() {
        let x = Array2::<f64>::zeros((0, 2));
        assert!(fit_tree(x.view(), &[], &TreeParams::default(), &mut rng()).is_err());
    }
}
