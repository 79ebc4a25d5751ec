//! CART trees: Gini impurity for classification, variance reduction for
//! regression. Extra-trees draw one uniform threshold per candidate feature
//! instead of scanning all midpoints.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Prediction, Targets, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    Gini,
    Variance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateMode {
    Exhaustive,
    /// One random threshold per feature, drawn from the given seed.
    Random(u64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub decrease: f64,
}

/// Impurity of a node. Classification targets are 1.0 (up) / 0.0 (down).
/// A node whose targets are all equal has impurity exactly 0.
pub fn impurity(y: &[f64], criterion: Criterion) -> f64 {
    if y.is_empty() || y.iter().all(|v| *v == y[0]) {
        return 0.0;
    }
    let n = y.len() as f64;
    match criterion {
        Criterion::Gini => {
            let p = y.iter().sum::<f64>() / n;
            2.0 * p * (1.0 - p)
        }
        Criterion::Variance => {
            let mean = y.iter().sum::<f64>() / n;
            y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
        }
    }
}

/// Best single split of `x` (rows) against `y`, or `None` when no candidate
/// reduces impurity. Rows with `x[feature] <= threshold` go left.
pub fn cart_best_split(
    x: &[Vec<f64>],
    y: Targets<'_>,
    criterion: Criterion,
    mode: CandidateMode,
) -> Option<Split> {
    if x.len() < 2 {
        return None;
    }
    let y = y.as_reals();
    let rows: Vec<usize> = (0..x.len()).collect();
    let features: Vec<usize> = (0..x[0].len()).collect();
    let mut rng = match mode {
        CandidateMode::Exhaustive => None,
        CandidateMode::Random(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
    };
    best_split(x, &y, &rows, &features, criterion, rng.as_mut(), 1)
}

/// Running sums over a child node, on targets centred at the parent mean.
#[derive(Default, Clone, Copy)]
struct Acc {
    n: f64,
    sum: f64,
    sq: f64,
}

impl Acc {
    fn add(&mut self, v: f64) {
        self.n += 1.0;
        self.sum += v;
        self.sq += v * v;
    }

    fn minus(self, other: Acc) -> Acc {
        Acc { n: self.n - other.n, sum: self.sum - other.sum, sq: self.sq - other.sq }
    }

    /// `offset` is the parent mean that was subtracted (needed for Gini).
    fn impurity(&self, criterion: Criterion, offset: f64) -> f64 {
        if self.n == 0.0 {
            return 0.0;
        }
        match criterion {
            Criterion::Gini => {
                let p = (self.sum / self.n + offset).clamp(0.0, 1.0);
                2.0 * p * (1.0 - p)
            }
            Criterion::Variance => {
                let m = self.sum / self.n;
                (self.sq / self.n - m * m).max(0.0)
            }
        }
    }
}

pub(crate) fn best_split(
    x: &[Vec<f64>],
    y: &[f64],
    rows: &[usize],
    features: &[usize],
    criterion: Criterion,
    mut rng: Option<&mut ChaCha8Rng>,
    min_leaf: usize,
) -> Option<Split> {
    let node_y: Vec<f64> = rows.iter().map(|&r| y[r]).collect();
    let parent = impurity(&node_y, criterion);
    if parent == 0.0 || rows.len() < 2 {
        return None;
    }
    let n = rows.len() as f64;
    let offset = node_y.iter().sum::<f64>() / n;
    let mut total = Acc::default();
    node_y.iter().for_each(|v| total.add(v - offset));
    let min_leaf = min_leaf.max(1) as f64;
    let decrease_of = |left: Acc| -> Option<f64> {
        let right = total.minus(left);
        if left.n < min_leaf || right.n < min_leaf {
            return None;
        }
        let child = (left.n * left.impurity(criterion, offset) + right.n * right.impurity(criterion, offset)) / n;
        Some(parent - child)
    };

    let mut best: Option<Split> = None;
    let mut consider = |feature: usize, threshold: f64, decrease: f64| {
        if best.is_none_or(|b| decrease > b.decrease) {
            best = Some(Split { feature, threshold, decrease });
        }
    };

    for &f in features {
        match rng.as_deref_mut() {
            None => {
                let mut sorted: Vec<(f64, f64)> = rows.iter().map(|&r| (x[r][f], y[r] - offset)).collect();
                sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut left = Acc::default();
                for i in 1..sorted.len() {
                    left.add(sorted[i - 1].1);
                    let (lo, hi) = (sorted[i - 1].0, sorted[i].0);
                    if lo == hi {
                        continue;
                    }
                    let mut threshold = 0.5 * (lo + hi);
                    if threshold >= hi {
                        threshold = lo;
                    }
                    if let Some(d) = decrease_of(left) {
                        consider(f, threshold, d);
                    }
                }
            }
            Some(rng) => {
                let (lo, hi) = rows
                    .iter()
                    .map(|&r| x[r][f])
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
                if lo >= hi {
                    continue;
                }
                let threshold = rng.random_range(lo..hi);
                let mut left = Acc::default();
                for &r in rows {
                    if x[r][f] <= threshold {
                        left.add(y[r] - offset);
                    }
                }
                if let Some(d) = decrease_of(left) {
                    consider(f, threshold, d);
                }
            }
        }
    }
    best.filter(|b| b.decrease > 1e-12 * parent)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct TreeParams {
    pub criterion: Criterion,
    /// 0 = unlimited.
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features considered per split; equal to the width disables subsampling.
    pub max_features: usize,
    pub random_thresholds: bool,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn fit(x: &[Vec<f64>], y: &[f64], params: &TreeParams, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::fit_rows(x, y, (0..x.len()).collect(), params, &mut rng)
    }

    /// Grows a tree on the given row multiset (duplicates allowed).
    pub fn fit_rows(x: &[Vec<f64>], y: &[f64], rows: Vec<usize>, params: &TreeParams, rng: &mut ChaCha8Rng) -> Self {
        let mut tree = Tree { nodes: Vec::new() };
        tree.grow(x, y, rows, 0, params, rng);
        tree
    }

    fn grow(
        &mut self,
        x: &[Vec<f64>],
        y: &[f64],
        rows: Vec<usize>,
        depth: usize,
        p: &TreeParams,
        rng: &mut ChaCha8Rng,
    ) -> usize {
        let value = rows.iter().map(|&r| y[r]).sum::<f64>() / rows.len() as f64;
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value });

        let depth_ok = p.max_depth == 0 || depth < p.max_depth;
        if !depth_ok || rows.len() < 2 * p.min_samples_leaf.max(1) {
            return id;
        }
        let width = x[0].len();
        let features: Vec<usize> = if p.max_features < width {
            let mut f = rand::seq::index::sample(rng, width, p.max_features).into_vec();
            f.sort_unstable();
            f
        } else {
            (0..width).collect()
        };
        let split_rng = if p.random_thresholds { Some(&mut *rng) } else { None };
        let Some(split) = best_split(x, y, &rows, &features, p.criterion, split_rng, p.min_samples_leaf) else {
            return id;
        };
        let (left, right): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&r| x[r][split.feature] <= split.threshold);
        let l = self.grow(x, y, left, depth + 1, p, rng);
        let r = self.grow(x, y, right, depth + 1, p, rng);
        self.nodes[id] = Node::Split { feature: split.feature, threshold: split.threshold, left: l, right: r };
        id
    }

    /// Leaf value: up-probability for classification, mean for regression.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    #[cfg(test)]
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

pub(crate) fn leaf_prediction(value: f64, task: Task) -> Prediction {
    match task {
        Task::Classifier => Prediction::from_score(value - 0.5),
        Task::Regressor => Prediction::Value(value),
    }
}
