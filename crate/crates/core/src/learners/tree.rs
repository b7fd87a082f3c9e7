//! Binary CART trees grown on pre-binned features.
//!
//! Every split scores a partition with the second-order gain
//! `GL²/(HL+λ) + GR²/(HR+λ) − G²/(H+λ)`, where `g`/`h` are per-row first and
//! second order statistics. With `g = y`, `h = 1`, `λ = 0` this is exactly the
//! squared-error reduction (and, for 0/1 labels, twice the Gini decrease);
//! with the negative loss gradient and hessian it is the Newton boosting gain.
//!
//! Features are bucketed once per fit. A feature with at most `MAX_BINS`
//! distinct training values gets one bin per value and its cut points are the
//! midpoints between consecutive values, so the search is exact; wider
//! features fall back to frequency quantiles.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

pub(crate) const MAX_BINS: usize = 256;

/// Column-major bin codes plus the cut points that define them.
#[derive(Debug, Clone)]
pub(crate) struct BinnedMatrix {
    n_rows: usize,
    cuts: Vec<Vec<f64>>,
    bins: Vec<Vec<u8>>,
}

impl BinnedMatrix {
    /// `x` must be complete.
    pub(crate) fn new(x: &Matrix) -> Self {
        let mut cuts = Vec::with_capacity(x.n_cols());
        let mut bins = Vec::with_capacity(x.n_cols());
        for j in 0..x.n_cols() {
            let column = x.column(j);
            let c = compute_cuts(&column, MAX_BINS);
            bins.push(column.iter().map(|&v| bin_of(&c, v)).collect());
            cuts.push(c);
        }
        Self { n_rows: x.n_rows(), cuts, bins }
    }

    pub(crate) fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub(crate) fn n_cols(&self) -> usize {
        self.cuts.len()
    }

    fn n_bins(&self, feature: usize) -> usize {
        self.cuts[feature].len() + 1
    }

    #[inline]
    fn bin(&self, feature: usize, row: usize) -> u8 {
        self.bins[feature][row]
    }
}

#[inline]
fn bin_of(cuts: &[f64], v: f64) -> u8 {
    cuts.partition_point(|&c| c < v) as u8
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b {
        a
    } else {
        m
    }
}

fn compute_cuts(values: &[f64], max_bins: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct: Vec<(f64, usize)> = Vec::new();
    for v in sorted {
        match distinct.last_mut() {
            Some((last, count)) if *last == v => *count += 1,
            _ => distinct.push((v, 1)),
        }
    }
    if distinct.len() <= max_bins {
        return distinct.windows(2).map(|w| midpoint(w[0].0, w[1].0)).collect();
    }
    let n = values.len() as f64;
    let mut cuts = Vec::with_capacity(max_bins - 1);
    let mut cumulative = 0usize;
    for i in 0..distinct.len() - 1 {
        cumulative += distinct[i].1;
        let next_boundary = (cuts.len() + 1) as f64 * n / max_bins as f64;
        if cumulative as f64 >= next_boundary {
            cuts.push(midpoint(distinct[i].0, distinct[i + 1].0));
            if cuts.len() == max_bins - 1 {
                break;
            }
        }
    }
    cuts
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: u32,
        /// Rows with `x[feature] <= threshold` go left.
        threshold: f64,
        cut: u16,
        left: u32,
        right: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right, .. } => {
                    i = if row[feature as usize] <= threshold { left as usize } else { right as usize };
                }
            }
        }
    }

    pub(crate) fn predict_binned(&self, data: &BinnedMatrix, row: usize) -> f64 {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split { feature, cut, left, right, .. } => {
                    i = if u16::from(data.bin(feature as usize, row)) <= cut { left as usize } else { right as usize };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left as usize).max(walk(nodes, right as usize)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub min_child_weight: f64,
    pub lambda: f64,
    /// Features examined per node; sampled without replacement when smaller
    /// than the candidate list.
    pub max_features: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SplitChoice {
    pub feature: usize,
    pub cut: usize,
    pub gain: f64,
}

struct NodeStats {
    g: f64,
    h: f64,
    n: usize,
    abs_g: f64,
}

struct Search<'a> {
    data: &'a BinnedMatrix,
    g: &'a [f64],
    h: &'a [f64],
    params: &'a TreeParams,
    hist_g: Vec<f64>,
    hist_h: Vec<f64>,
    hist_c: Vec<usize>,
    runs: Vec<(u8, f64, f64)>,
}

impl<'a> Search<'a> {
    fn new(data: &'a BinnedMatrix, g: &'a [f64], h: &'a [f64], params: &'a TreeParams) -> Self {
        Self {
            data,
            g,
            h,
            params,
            hist_g: vec![0.0; MAX_BINS],
            hist_h: vec![0.0; MAX_BINS],
            hist_c: vec![0; MAX_BINS],
            runs: Vec::new(),
        }
    }

    fn stats(&self, rows: &[u32]) -> NodeStats {
        let mut s = NodeStats { g: 0.0, h: 0.0, n: rows.len(), abs_g: 0.0 };
        for &r in rows {
            let r = r as usize;
            s.g += self.g[r];
            s.h += self.h[r];
            s.abs_g += self.g[r].abs();
        }
        s
    }

    fn best_split(&mut self, rows: &[u32], stats: &NodeStats, features: &[usize]) -> Option<SplitChoice> {
        let lambda = self.params.lambda;
        let parent = stats.g * stats.g / (stats.h + lambda);
        // gains at or below this are rounding noise (e.g. a pure node)
        let tol = 1e-10 * stats.abs_g * stats.abs_g / (stats.h + lambda).max(f64::MIN_POSITIVE);
        let mut best: Option<SplitChoice> = None;
        let mut best_gain = tol;
        for &f in features {
            let n_bins = self.data.n_bins(f);
            if n_bins < 2 {
                continue;
            }
            if rows.len() * 4 < n_bins {
                self.scan_sparse(f, rows, stats, parent, &mut best, &mut best_gain);
            } else {
                self.scan_dense(f, n_bins, rows, stats, parent, &mut best, &mut best_gain);
            }
        }
        best
    }

    #[allow(clippy::too_many_arguments)]
    fn consider(
        &self,
        f: usize,
        cut: usize,
        (gl, hl, cl): (f64, f64, usize),
        stats: &NodeStats,
        parent: f64,
        best: &mut Option<SplitChoice>,
        best_gain: &mut f64,
    ) -> bool {
        let p = self.params;
        let cr = stats.n - cl;
        if cr < p.min_samples_leaf {
            return false;
        }
        if cl < p.min_samples_leaf {
            return true;
        }
        let (gr, hr) = (stats.g - gl, stats.h - hl);
        if hl < p.min_child_weight || hr < p.min_child_weight {
            return true;
        }
        let gain = gl * gl / (hl + p.lambda) + gr * gr / (hr + p.lambda) - parent;
        if gain > *best_gain {
            *best_gain = gain;
            *best = Some(SplitChoice { feature: f, cut, gain });
        }
        true
    }

    #[allow(clippy::too_many_arguments)]
    fn scan_dense(
        &mut self,
        f: usize,
        n_bins: usize,
        rows: &[u32],
        stats: &NodeStats,
        parent: f64,
        best: &mut Option<SplitChoice>,
        best_gain: &mut f64,
    ) {
        self.hist_g[..n_bins].fill(0.0);
        self.hist_h[..n_bins].fill(0.0);
        self.hist_c[..n_bins].fill(0);
        let bins = &self.data.bins[f];
        for &r in rows {
            let r = r as usize;
            let b = bins[r] as usize;
            self.hist_g[b] += self.g[r];
            self.hist_h[b] += self.h[r];
            self.hist_c[b] += 1;
        }
        let (mut gl, mut hl, mut cl) = (0.0, 0.0, 0usize);
        for k in 0..n_bins - 1 {
            gl += self.hist_g[k];
            hl += self.hist_h[k];
            cl += self.hist_c[k];
            if cl == 0 {
                continue;
            }
            if cl == stats.n {
                break;
            }
            if !self.consider(f, k, (gl, hl, cl), stats, parent, best, best_gain) {
                break;
            }
        }
    }

    fn scan_sparse(
        &mut self,
        f: usize,
        rows: &[u32],
        stats: &NodeStats,
        parent: f64,
        best: &mut Option<SplitChoice>,
        best_gain: &mut f64,
    ) {
        let bins = &self.data.bins[f];
        self.runs.clear();
        self.runs.extend(rows.iter().map(|&r| (bins[r as usize], self.g[r as usize], self.h[r as usize])));
        self.runs.sort_by_key(|r| r.0);
        // per-bin sums in row order, identical to the dense histogram
        let mut grouped: Vec<(u8, f64, f64, usize)> = Vec::new();
        for &(b, g, h) in &self.runs {
            match grouped.last_mut() {
                Some(last) if last.0 == b => {
                    last.1 += g;
                    last.2 += h;
                    last.3 += 1;
                }
                _ => grouped.push((b, 0.0 + g, 0.0 + h, 1)),
            }
        }
        let (mut gl, mut hl, mut cl) = (0.0, 0.0, 0usize);
        for &(b, g, h, c) in &grouped[..grouped.len().saturating_sub(1)] {
            gl += g;
            hl += h;
            cl += c;
            if !self.consider(f, b as usize, (gl, hl, cl), stats, parent, best, best_gain) {
                break;
            }
        }
    }
}

/// Grows one tree over `rows` (duplicates allowed, e.g. a bootstrap sample).
/// Leaf values are `G/(H+λ)`.
pub(crate) fn grow_tree<R: Rng>(
    data: &BinnedMatrix,
    features: &[usize],
    g: &[f64],
    h: &[f64],
    mut rows: Vec<u32>,
    params: &TreeParams,
    rng: &mut R,
) -> Tree {
    struct Work {
        node: usize,
        start: usize,
        end: usize,
        depth: usize,
    }
    let mut search = Search::new(data, g, h, params);
    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    let mut stack = vec![Work { node: 0, start: 0, end: rows.len(), depth: 0 }];
    let mut scratch: Vec<u32> = Vec::with_capacity(rows.len());
    let mut candidate: Vec<usize> = Vec::with_capacity(features.len());

    while let Some(w) = stack.pop() {
        let slice = &rows[w.start..w.end];
        let stats = search.stats(slice);
        let value = stats.g / (stats.h + params.lambda);
        let splittable = stats.n >= params.min_samples_split.max(2)
            && stats.n >= 2 * params.min_samples_leaf
            && params.max_depth.map_or(true, |d| w.depth < d)
            && stats.h >= 2.0 * params.min_child_weight;
        let choice = if splittable {
            candidate.clear();
            if params.max_features >= features.len() {
                candidate.extend_from_slice(features);
            } else {
                let mut picked: Vec<usize> =
                    sample(rng, features.len(), params.max_features.max(1)).into_iter().collect();
                picked.sort_unstable();
                candidate.extend(picked.into_iter().map(|i| features[i]));
            }
            search.best_split(slice, &stats, &candidate)
        } else {
            None
        };
        let Some(choice) = choice else {
            nodes[w.node] = Node::Leaf { value };
            continue;
        };

        scratch.clear();
        let bins = &data.bins[choice.feature];
        let mut n_left = 0;
        for k in w.start..w.end {
            let r = rows[k];
            if (bins[r as usize] as usize) <= choice.cut {
                rows[w.start + n_left] = r;
                n_left += 1;
            } else {
                scratch.push(r);
            }
        }
        rows[w.start + n_left..w.end].copy_from_slice(&scratch);

        let left = nodes.len();
        nodes.push(Node::Leaf { value: 0.0 });
        let right = nodes.len();
        nodes.push(Node::Leaf { value: 0.0 });
        nodes[w.node] = Node::Split {
            feature: choice.feature as u32,
            threshold: data.cuts[choice.feature][choice.cut],
            cut: choice.cut as u16,
            left: left as u32,
            right: right as u32,
        };
        let mid = w.start + n_left;
        stack.push(Work { node: right, start: mid, end: w.end, depth: w.depth + 1 });
        stack.push(Work { node: left, start: w.start, end: mid, depth: w.depth + 1 });
    }
    Tree { nodes }
}

/// Single squared-error CART over all rows and features, no sampling.
pub fn fit_tree(x: &Matrix, y: &[f64], max_depth: Option<usize>, min_samples_leaf: usize) -> Tree {
    let data = BinnedMatrix::new(x);
    let features: Vec<usize> = (0..x.n_cols()).collect();
    let params = TreeParams {
        max_depth,
        min_samples_split: 2,
        min_samples_leaf: min_samples_leaf.max(1),
        min_child_weight: 0.0,
        lambda: 0.0,
        max_features: features.len(),
    };
    let ones = vec![1.0; y.len()];
    let rows = (0..y.len() as u32).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    grow_tree(&data, &features, y, &ones, rows, &params, &mut rng)
}
