//! Support vector machines trained by sequential minimal optimisation.
//!
//! One dual solver covers both tasks:
//!
//! ```text
//! min_a  1/2 a'Qa + p'a   s.t.  y'a = 0,  0 <= a <= C,   Q_ij = y_i y_j K(x_i, x_j)
//! ```
//!
//! Classification uses `p = -1`. Epsilon regression doubles the variables
//! (`a` with sign +1, `a*` with sign -1) and sets `p = eps -/+ z`. Working pairs
//! come from second-order selection, as in LIBSVM.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Task;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kernel {
    Linear,
    Rbf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    #[serde(rename = "C")]
    pub c: f64,
    pub gamma: f64,
    pub kernel: Kernel,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Stopping tolerance on the maximal KKT violation.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_rows")]
    pub max_train_rows: usize,
    #[serde(default = "default_cache_mb")]
    pub cache_mb: usize,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_epsilon() -> f64 {
    0.1
}
fn default_tol() -> f64 {
    1e-3
}
fn default_max_rows() -> usize {
    20_000
}
fn default_cache_mb() -> usize {
    256
}
fn default_max_iter() -> usize {
    10_000_000
}

impl SvmParams {
    pub fn new(c: f64, gamma: f64, kernel: Kernel) -> Self {
        Self {
            c,
            gamma,
            kernel,
            epsilon: default_epsilon(),
            tol: default_tol(),
            max_train_rows: default_max_rows(),
            cache_mb: default_cache_mb(),
            max_iter: default_max_iter(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !(self.gamma > 0.0) || !(self.tol > 0.0) || self.epsilon < 0.0 {
            return Err(Error::Params("C > 0, gamma > 0, tol > 0, epsilon >= 0 required".into()));
        }
        if self.max_train_rows < 2 || self.max_iter == 0 {
            return Err(Error::Params("max_train_rows >= 2 and max_iter >= 1 required".into()));
        }
        Ok(())
    }
}

fn kernel_value(kernel: Kernel, gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    match kernel {
        Kernel::Linear => a.iter().zip(b).map(|(p, q)| p * q).sum(),
        Kernel::Rbf => (-gamma * a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>()).exp(),
    }
}

/// Kernel rows over the training set with least-recently-used eviction.
struct KernelCache<'a> {
    x: &'a Matrix,
    kernel: Kernel,
    gamma: f64,
    capacity: usize,
    rows: HashMap<usize, (u64, Vec<f64>)>,
    clock: u64,
}

impl<'a> KernelCache<'a> {
    fn new(x: &'a Matrix, kernel: Kernel, gamma: f64, cache_mb: usize) -> Self {
        let row_bytes = 8 * x.n_rows().max(1);
        let capacity = ((cache_mb << 20) / row_bytes).max(2);
        Self { x, kernel, gamma, capacity, rows: HashMap::new(), clock: 0 }
    }

    fn row(&mut self, i: usize) -> &[f64] {
        self.clock += 1;
        let clock = self.clock;
        if !self.rows.contains_key(&i) {
            if self.rows.len() >= self.capacity {
                let oldest = *self.rows.iter().min_by_key(|(_, (t, _))| *t).unwrap().0;
                self.rows.remove(&oldest);
            }
            let xi = self.x.row(i);
            let (x, kernel, gamma) = (self.x, self.kernel, self.gamma);
            let values: Vec<f64> =
                (0..x.n_rows()).into_par_iter().map(|j| kernel_value(kernel, gamma, xi, x.row(j))).collect();
            self.rows.insert(i, (clock, values));
        }
        let entry = self.rows.get_mut(&i).unwrap();
        entry.0 = clock;
        &entry.1
    }
}

/// Final dual variables, exposed for checking optimality conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    /// +1/-1 label of each dual variable.
    pub signs: Vec<f64>,
    pub c: f64,
    pub rho: f64,
    pub iterations: usize,
    /// Maximal KKT violation at exit.
    pub violation: f64,
    pub converged: bool,
}

struct Problem<'a> {
    /// Training row behind each dual variable.
    idx: Vec<usize>,
    y: Vec<f64>,
    p: Vec<f64>,
    c: f64,
    tol: f64,
    max_iter: usize,
    cache: KernelCache<'a>,
}

fn solve(mut pb: Problem<'_>) -> DualSolution {
    let m = pb.y.len();
    let c = pb.c;
    let qd: Vec<f64> = pb.idx.iter().map(|&r| kernel_value(pb.cache.kernel, pb.cache.gamma, pb.cache.x.row(r), pb.cache.x.row(r))).collect();
    let mut alpha = vec![0.0; m];
    let mut g = pb.p.clone();
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;
    let mut iterations = 0;
    let mut violation;
    let mut converged = false;
    loop {
        // i maximises -y_t G_t over the "up" set
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..m {
            if pb.y[t] > 0.0 {
                if !upper(alpha[t]) && -g[t] >= gmax {
                    gmax = -g[t];
                    i = t;
                }
            } else if !lower(alpha[t]) && g[t] >= gmax {
                gmax = g[t];
                i = t;
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        if i != usize::MAX {
            let ki = pb.cache.row(pb.idx[i]);
            let mut best = f64::INFINITY;
            for t in 0..m {
                let kit = ki[pb.idx[t]];
                if pb.y[t] > 0.0 {
                    if !lower(alpha[t]) {
                        let grad_diff = gmax + g[t];
                        gmax2 = gmax2.max(g[t]);
                        if grad_diff > 0.0 {
                            let quad = qd[i] + qd[t] - 2.0 * pb.y[i] * kit;
                            let obj = -(grad_diff * grad_diff) / if quad > 0.0 { quad } else { TAU };
                            if obj <= best {
                                best = obj;
                                j = t;
                            }
                        }
                    }
                } else if !upper(alpha[t]) {
                    let grad_diff = gmax - g[t];
                    gmax2 = gmax2.max(-g[t]);
                    if grad_diff > 0.0 {
                        let quad = qd[i] + qd[t] + 2.0 * pb.y[i] * kit;
                        let obj = -(grad_diff * grad_diff) / if quad > 0.0 { quad } else { TAU };
                        if obj <= best {
                            best = obj;
                            j = t;
                        }
                    }
                }
            }
        }
        violation = if i == usize::MAX { 0.0 } else { (gmax + gmax2).max(0.0) };
        if i == usize::MAX || j == usize::MAX || gmax + gmax2 < pb.tol {
            converged = true;
            break;
        }
        if iterations >= pb.max_iter {
            break;
        }
        iterations += 1;

        let ki = pb.cache.row(pb.idx[i]).to_vec();
        let kj = pb.cache.row(pb.idx[j]).to_vec();
        let (yi, yj) = (pb.y[i], pb.y[j]);
        let qij = yi * yj * ki[pb.idx[j]];
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if yi != yj {
            let quad = qd[i] + qd[j] + 2.0 * qij;
            let delta = (-g[i] - g[j]) / if quad > 0.0 { quad } else { TAU };
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = qd[i] + qd[j] - 2.0 * qij;
            let delta = (g[i] - g[j]) / if quad > 0.0 { quad } else { TAU };
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        // rounding can leave a value a few ulps outside the box
        alpha[i] = alpha[i].clamp(0.0, c);
        alpha[j] = alpha[j].clamp(0.0, c);
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..m {
            let yt = pb.y[t];
            let r = pb.idx[t];
            g[t] += yt * (yi * ki[r] * di + yj * kj[r] * dj);
        }
    }

    // offset from free variables, or the midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut n_free, mut sum_free) = (0usize, 0.0);
    for t in 0..m {
        let yg = pb.y[t] * g[t];
        if upper(alpha[t]) {
            if pb.y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lower(alpha[t]) {
            if pb.y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else if ub.is_finite() && lb.is_finite() {
        (ub + lb) / 2.0
    } else if ub.is_finite() {
        ub
    } else if lb.is_finite() {
        lb
    } else {
        0.0
    };
    DualSolution { alpha, signs: pb.y, c, rho, iterations, violation, converged }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Svm {
    task: Task,
    kernel: Kernel,
    gamma: f64,
    n_features: usize,
    support: Matrix,
    coef: Vec<f64>,
    rho: f64,
    /// Rows actually used for training after the size cap.
    pub train_rows: usize,
    pub converged: bool,
}

impl Svm {
    pub fn fit(x: &Matrix, y: &[f64], params: &SvmParams, task: Task, seed: u64) -> Result<Self> {
        Ok(Self::fit_dual(x, y, params, task, seed)?.0)
    }

    pub fn fit_dual(x: &Matrix, y: &[f64], params: &SvmParams, task: Task, seed: u64) -> Result<(Self, DualSolution)> {
        params.validate()?;
        let (x, y) = if x.n_rows() > params.max_train_rows {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut rows = sample(&mut rng, x.n_rows(), params.max_train_rows).into_vec();
            rows.sort_unstable();
            let ys: Vec<f64> = rows.iter().map(|&r| y[r]).collect();
            (x.select_rows(&rows), ys)
        } else {
            (x.clone(), y.to_vec())
        };
        let l = x.n_rows();
        let cache = KernelCache::new(&x, params.kernel, params.gamma, params.cache_mb);
        let pb = match task {
            Task::Classify => Problem {
                idx: (0..l).collect(),
                y: y.iter().map(|&v| if v > 0.5 { 1.0 } else { -1.0 }).collect(),
                p: vec![-1.0; l],
                c: params.c,
                tol: params.tol,
                max_iter: params.max_iter,
                cache,
            },
            Task::Regress => Problem {
                idx: (0..2 * l).map(|t| t % l).collect(),
                y: (0..2 * l).map(|t| if t < l { 1.0 } else { -1.0 }).collect(),
                p: (0..2 * l).map(|t| if t < l { params.epsilon - y[t] } else { params.epsilon + y[t - l] }).collect(),
                c: params.c,
                tol: params.tol,
                max_iter: params.max_iter,
                cache,
            },
        };
        let sol = solve(pb);
        let mut coef = vec![0.0; l];
        for (t, (&a, &s)) in sol.alpha.iter().zip(&sol.signs).enumerate() {
            coef[t % l] += s * a;
        }
        let keep: Vec<usize> = (0..l).filter(|&r| coef[r] != 0.0).collect();
        if !sol.converged {
            log::warn!("SMO stopped at the iteration cap with KKT violation {:.3e}", sol.violation);
        }
        let model = Svm {
            task,
            kernel: params.kernel,
            gamma: params.gamma,
            n_features: x.n_cols(),
            support: x.select_rows(&keep),
            coef: keep.iter().map(|&r| coef[r]).collect(),
            rho: sol.rho,
            train_rows: l,
            converged: sol.converged,
        };
        Ok((model, sol))
    }

    pub fn n_support(&self) -> usize {
        self.coef.len()
    }

    pub fn decision_row(&self, row: &[f64]) -> f64 {
        let s: f64 = (0..self.support.n_rows())
            .map(|k| self.coef[k] * kernel_value(self.kernel, self.gamma, self.support.row(k), row))
            .sum();
        s - self.rho
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.n_cols() != self.n_features {
            return Err(Error::Schema { expected: self.n_features, got: x.n_cols() });
        }
        Ok((0..x.n_rows())
            .into_par_iter()
            .map(|r| {
                let f = self.decision_row(x.row(r));
                match self.task {
                    Task::Regress => f,
                    Task::Classify => {
                        if f > 0.0 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                }
            })
            .collect())
    }
}
