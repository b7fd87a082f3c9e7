//! k-nearest-neighbours with a kd-tree index and a brute-force path.
//!
//! Neighbours are ranked by (squared distance, training index) so every search
//! strategy returns the same neighbour set, ties included.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Task;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KnnAlgorithm {
    Auto,
    KdTree,
    Brute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KnnWeighting {
    #[default]
    Uniform,
    /// Inverse distance; exact matches take all the weight when present.
    Distance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub n_neighbours: usize,
    pub leaf_size: usize,
    pub algorithm: KnnAlgorithm,
    #[serde(default)]
    pub weighting: KnnWeighting,
}

impl KnnParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_neighbours == 0 || self.leaf_size == 0 {
            return Err(Error::Params("n_neighbours and leaf_size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum KdNode {
    Leaf { start: u32, end: u32 },
    Split { dim: u32, value: f64, left: u32, right: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct KdTree {
    nodes: Vec<KdNode>,
    /// Training indices, grouped so each leaf owns a contiguous range.
    order: Vec<u32>,
}

impl KdTree {
    fn build(x: &Matrix, leaf_size: usize) -> Self {
        let mut tree = KdTree { nodes: Vec::new(), order: (0..x.n_rows() as u32).collect() };
        if x.n_rows() > 0 {
            tree.build_node(x, 0, x.n_rows(), leaf_size);
        }
        tree
    }

    fn build_node(&mut self, x: &Matrix, start: usize, end: usize, leaf_size: usize) -> u32 {
        let id = self.nodes.len() as u32;
        self.nodes.push(KdNode::Leaf { start: start as u32, end: end as u32 });
        if end - start <= leaf_size {
            return id;
        }
        let idx = &mut self.order[start..end];
        let mut best = (0usize, 0.0f64);
        for d in 0..x.n_cols() {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &i in idx.iter() {
                let v = x.get(i as usize, d);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if hi - lo > best.1 {
                best = (d, hi - lo);
            }
        }
        if best.1 <= 0.0 {
            return id;
        }
        let dim = best.0;
        let mid = idx.len() / 2;
        idx.select_nth_unstable_by(mid, |&a, &b| {
            x.get(a as usize, dim).total_cmp(&x.get(b as usize, dim)).then(a.cmp(&b))
        });
        let value = x.get(idx[mid] as usize, dim);
        let left = self.build_node(x, start, start + mid, leaf_size);
        let right = self.build_node(x, start + mid, end, leaf_size);
        self.nodes[id as usize] = KdNode::Split { dim: dim as u32, value, left, right };
        id
    }
}

/// Bounded list of the best `k` candidates, kept sorted ascending.
struct Candidates {
    k: usize,
    items: Vec<(f64, u32)>,
}

impl Candidates {
    fn new(k: usize) -> Self {
        Self { k, items: Vec::with_capacity(k + 1) }
    }

    fn worst(&self) -> f64 {
        if self.items.len() < self.k {
            f64::INFINITY
        } else {
            self.items[self.k - 1].0
        }
    }

    fn offer(&mut self, d2: f64, i: u32) {
        if self.items.len() == self.k {
            let last = self.items[self.k - 1];
            if (d2, i) >= last {
                return;
            }
            self.items.pop();
        }
        let pos = self.items.partition_point(|&c| c < (d2, i));
        self.items.insert(pos, (d2, i));
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    task: Task,
    params: KnnParams,
    x: Matrix,
    y: Vec<f64>,
    index: Option<KdTree>,
}

impl Knn {
    pub fn fit(x: &Matrix, y: &[f64], params: &KnnParams, task: Task) -> Result<Self> {
        params.validate()?;
        let use_tree = match params.algorithm {
            KnnAlgorithm::Brute => false,
            KnnAlgorithm::KdTree => true,
            KnnAlgorithm::Auto => x.n_cols() <= 20,
        };
        let index = use_tree.then(|| KdTree::build(x, params.leaf_size));
        Ok(Self { task, params: params.clone(), x: x.clone(), y: y.to_vec(), index })
    }

    /// The `k` nearest training rows as (squared distance, index), nearest first.
    pub fn neighbours(&self, q: &[f64]) -> Vec<(f64, u32)> {
        let k = self.params.n_neighbours.min(self.x.n_rows());
        let mut c = Candidates::new(k);
        match &self.index {
            None => {
                for i in 0..self.x.n_rows() {
                    c.offer(sq_dist(q, self.x.row(i)), i as u32);
                }
            }
            Some(tree) => self.search(tree, 0, q, &mut c),
        }
        c.items
    }

    fn search(&self, tree: &KdTree, node: u32, q: &[f64], c: &mut Candidates) {
        match tree.nodes[node as usize] {
            KdNode::Leaf { start, end } => {
                for &i in &tree.order[start as usize..end as usize] {
                    c.offer(sq_dist(q, self.x.row(i as usize)), i);
                }
            }
            KdNode::Split { dim, value, left, right } => {
                let diff = q[dim as usize] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(tree, near, q, c);
                // `<=` keeps equal-distance candidates with smaller indices reachable.
                if diff * diff <= c.worst() {
                    self.search(tree, far, q, c);
                }
            }
        }
    }

    pub fn predict_row(&self, q: &[f64]) -> f64 {
        let nb = self.neighbours(q);
        let weights: Vec<f64> = match self.params.weighting {
            KnnWeighting::Uniform => vec![1.0; nb.len()],
            KnnWeighting::Distance => {
                if nb.iter().any(|&(d2, _)| d2 == 0.0) {
                    nb.iter().map(|&(d2, _)| if d2 == 0.0 { 1.0 } else { 0.0 }).collect()
                } else {
                    nb.iter().map(|&(d2, _)| 1.0 / d2.sqrt()).collect()
                }
            }
        };
        let total: f64 = weights.iter().sum();
        let score: f64 = nb.iter().zip(&weights).map(|(&(_, i), w)| w * self.y[i as usize]).sum();
        match self.task {
            Task::Regress => score / total,
            Task::Classify => {
                if score > total - score {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.n_cols() != self.x.n_cols() {
            return Err(Error::Schema { expected: self.x.n_cols(), got: x.n_cols() });
        }
        Ok((0..x.n_rows()).into_par_iter().map(|r| self.predict_row(x.row(r))).collect())
    }
}
