//! CART regression trees grown on presorted columns.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features drawn at random per split; `None` tries all of them.
    #[serde(default)]
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 12,
            min_samples_leaf: 5,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn constant(value: f64) -> Self {
        Self {
            nodes: vec![Node::Leaf { value }],
        }
    }

    /// Rows with `x[feature] <= threshold` go left.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
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

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

/// Column-major copy of a feature matrix with every column's row order
/// sorted by value. Built once and shared by all trees grown on the data.
#[derive(Debug, Clone)]
pub struct Presorted {
    pub cols: Vec<Vec<f64>>,
    order: Vec<Vec<u32>>,
    rows: usize,
}

impl Presorted {
    pub fn new(x: &[Vec<f64>]) -> Self {
        let m = x.first().map_or(0, |r| r.len());
        let cols: Vec<Vec<f64>> = (0..m).map(|j| x.iter().map(|r| r[j]).collect()).collect();
        let order = cols
            .iter()
            .map(|c| {
                let mut idx: Vec<u32> = (0..c.len() as u32).collect();
                idx.sort_by(|&a, &b| c[a as usize].total_cmp(&c[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Self { cols, order, rows: x.len() }
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_features(&self) -> usize {
        self.cols.len()
    }
}

struct Grower<'a> {
    data: &'a Presorted,
    y: &'a [f64],
    w: &'a [u32],
    params: TreeParams,
    rng: Option<ChaCha8Rng>,
    nodes: Vec<Node>,
    goes_left: Vec<bool>,
}

struct Best {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Grower<'_> {
    fn leaf_value(&self, rows: &[u32]) -> (f64, f64) {
        let (mut s, mut n) = (0.0, 0.0);
        for &r in rows {
            let w = self.w[r as usize] as f64;
            s += w * self.y[r as usize];
            n += w;
        }
        (s, n)
    }

    fn candidates(&mut self) -> Vec<usize> {
        let m = self.data.n_features();
        match (self.params.max_features, self.rng.as_mut()) {
            (Some(k), Some(rng)) if k < m => {
                let mut v = sample(rng, m, k).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..m).collect(),
        }
    }

    fn best_split(&mut self, sorted: &[Vec<u32>], total_s: f64, total_n: f64) -> Option<Best> {
        let min_leaf = self.params.min_samples_leaf.max(1) as f64;
        let parent = total_s * total_s / total_n;
        let mut best: Option<Best> = None;
        for j in self.candidates() {
            let col = &self.data.cols[j];
            let rows = &sorted[j];
            let (mut ls, mut ln) = (0.0, 0.0);
            for k in 0..rows.len() - 1 {
                let r = rows[k] as usize;
                let w = self.w[r] as f64;
                ls += w * self.y[r];
                ln += w;
                let (a, b) = (col[r], col[rows[k + 1] as usize]);
                if a == b || ln < min_leaf {
                    continue;
                }
                let rn = total_n - ln;
                if rn < min_leaf {
                    break;
                }
                let rs = total_s - ls;
                let gain = ls * ls / ln + rs * rs / rn - parent;
                if best.as_ref().is_none_or(|bb| gain > bb.gain) {
                    let mut threshold = a + (b - a) * 0.5;
                    if !(threshold < b) {
                        threshold = a;
                    }
                    best = Some(Best { feature: j, threshold, gain });
                }
            }
        }
        // reject splits that only rearrange rounding noise
        best.filter(|b| b.gain > 1e-12 * (1.0 + parent.abs()))
    }

    fn grow(&mut self, sorted: Vec<Vec<u32>>, depth: usize) -> usize {
        let (s, n) = self.leaf_value(&sorted[0]);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: s / n });
        let min_leaf = self.params.min_samples_leaf.max(1) as f64;
        if depth >= self.params.max_depth || n < 2.0 * min_leaf || self.data.n_features() == 0 {
            return id;
        }
        let Some(best) = self.best_split(&sorted, s, n) else {
            return id;
        };
        let col = &self.data.cols[best.feature];
        for &r in &sorted[0] {
            self.goes_left[r as usize] = col[r as usize] <= best.threshold;
        }
        let mut left = Vec::with_capacity(sorted.len());
        let mut right = Vec::with_capacity(sorted.len());
        for list in sorted {
            let (l, r): (Vec<u32>, Vec<u32>) = list.into_iter().partition(|&r| self.goes_left[r as usize]);
            left.push(l);
            right.push(r);
        }
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: l,
            right: r,
        };
        id
    }
}

/// Grows a regression tree. `weights[r]` is how many times row `r` is in the
/// sample (0 excludes it); `None` uses every row once. `seed` drives the
/// per-split feature draw and is ignored when all features are tried.
pub fn fit_tree(data: &Presorted, y: &[f64], weights: Option<&[u32]>, params: TreeParams, seed: u64) -> Tree {
    let n = data.n_rows();
    assert_eq!(y.len(), n, "target length must match the data");
    let ones;
    let w = match weights {
        Some(w) => w,
        None => {
            ones = vec![1u32; n];
            &ones
        }
    };
    let sorted: Vec<Vec<u32>> = if data.n_features() == 0 {
        vec![(0..n as u32).filter(|&r| w[r as usize] > 0).collect()]
    } else {
        data.order
            .iter()
            .map(|o| o.iter().copied().filter(|&r| w[r as usize] > 0).collect())
            .collect()
    };
    if sorted[0].is_empty() {
        return Tree::constant(0.0);
    }
    let mut g = Grower {
        data,
        y,
        w,
        params,
        rng: params.max_features.map(|_| ChaCha8Rng::seed_from_u64(seed)),
        nodes: Vec::new(),
        goes_left: vec![false; n],
    };
    g.grow(sorted, 0);
    Tree { nodes: g.nodes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let x: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / n as f64, ((i * 7) % n) as f64]).collect();
        let y = x.iter().map(|r| 3.0 * r[0]).collect();
        (x, y)
    }

    #[test]
    fn constant_target_gives_single_leaf() {
        let (x, _) = grid(50);
        let y = vec![0.7; 50];
        let t = fit_tree(&Presorted::new(&x), &y, None, TreeParams::default(), 0);
        assert_eq!(t.nodes.len(), 1);
        assert!((t.predict(&[0.3, 1.0]) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn deep_tree_fits_linear_function() {
        let n = 256;
        let (x, y) = grid(n);
        let params = TreeParams { max_depth: 9, min_samples_leaf: 1, max_features: None };
        let t = fit_tree(&Presorted::new(&x), &y, None, params, 0);
        let mse = x.iter().zip(&y).map(|(r, v)| (t.predict(r) - v) * (t.predict(r) - v)).sum::<f64>() / n as f64;
        assert!(mse < 1e-4, "mse {mse}");
        assert!(t.depth() <= 9);
    }

    #[test]
    fn single_split_uses_left_leaf_mean() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        let y = vec![1.0, 3.0, 10.0, 12.0];
        let params = TreeParams { max_depth: 1, min_samples_leaf: 1, max_features: None };
        let t = fit_tree(&Presorted::new(&x), &y, None, params, 0);
        assert_eq!(t.nodes.len(), 3);
        match t.nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(feature, 0);
                assert_eq!(threshold, 1.5);
            }
            _ => panic!("expected a split"),
        }
        assert_eq!(t.predict(&[0.5]), 2.0);
        assert_eq!(t.predict(&[2.5]), 11.0);
    }

    #[test]
    fn weights_act_as_repeated_rows() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        let y = vec![1.0, 2.0, 5.0, 6.0];
        let params = TreeParams { max_depth: 0, min_samples_leaf: 1, max_features: None };
        let t = fit_tree(&Presorted::new(&x), &y, Some(&[3, 0, 1, 0]), params, 0);
        assert_eq!(t.predict(&[0.0]), 2.0);
    }

    #[test]
    fn min_leaf_is_respected() {
        let (x, y) = grid(40);
        let params = TreeParams { max_depth: 20, min_samples_leaf: 7, max_features: None };
        let data = Presorted::new(&x);
        let t = fit_tree(&data, &y, None, params, 0);
        let mut counts = vec![0usize; t.nodes.len()];
        for r in &x {
            let mut i = 0;
            while let Node::Split { feature, threshold, left, right } = t.nodes[i] {
                i = if r[feature] <= threshold { left } else { right };
            }
            counts[i] += 1;
        }
        for (i, n) in t.nodes.iter().enumerate() {
            if matches!(n, Node::Leaf { .. }) {
                assert!(counts[i] >= 7);
            }
        }
    }

    proptest! {
        #[test]
        fn same_seed_same_tree(seed in any::<u64>(), rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 4), 10..40)) {
            let y: Vec<f64> = rows.iter().map(|r| r[0] * r[1] + r[2]).collect();
            let data = Presorted::new(&rows);
            let params = TreeParams { max_depth: 6, min_samples_leaf: 2, max_features: Some(2) };
            let a = fit_tree(&data, &y, None, params, seed);
            let b = fit_tree(&data, &y, None, params, seed);
            prop_assert_eq!(&a, &b);
            for r in &rows {
                prop_assert!(a.predict(r).is_finite());
            }
        }
    }
}
