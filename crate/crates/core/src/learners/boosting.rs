//! Second-order gradient tree boosting: logistic loss for classification,
//! squared loss for regression.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, BinnedMatrix, Tree, TreeParams};
use super::Task;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostingParams {
    /// Minimum hessian sum per child; equals the sample count under squared loss.
    pub min_child_weight: f64,
    /// Row fraction drawn without replacement for each round.
    pub subsample: f64,
    pub max_depth: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_rounds")]
    pub n_rounds: usize,
    #[serde(default)]
    pub reg_lambda: f64,
}

fn default_learning_rate() -> f64 {
    0.1
}

fn default_rounds() -> usize {
    100
}

impl BoostingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::Params(format!("subsample {} not in (0, 1]", self.subsample)));
        }
        if self.max_depth == 0 || self.n_rounds == 0 {
            return Err(Error::Params("max_depth and n_rounds must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) || self.min_child_weight < 0.0 || self.reg_lambda < 0.0 {
            return Err(Error::Params("learning_rate > 0, min_child_weight >= 0, reg_lambda >= 0 required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoosting {
    task: Task,
    n_features: usize,
    base_margin: f64,
    learning_rate: f64,
    trees: Vec<Tree>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Mean training loss: squared error / 2, or logistic log-loss.
fn mean_loss(task: Task, y: &[f64], margin: &[f64]) -> f64 {
    let total: f64 = match task {
        Task::Regress => y.iter().zip(margin).map(|(t, f)| 0.5 * (t - f) * (t - f)).sum(),
        Task::Classify => y
            .iter()
            .zip(margin)
            .map(|(t, &f)| {
                // log(1 + e^f) - t f, stable for large |f|
                let softplus = if f > 0.0 { f + (-f).exp().ln_1p() } else { f.exp().ln_1p() };
                softplus - t * f
            })
            .sum(),
    };
    total / y.len() as f64
}

impl GradientBoosting {
    pub fn fit(x: &Matrix, y: &[f64], params: &BoostingParams, task: Task, seed: u64) -> Result<Self> {
        Ok(Self::fit_with_history(x, y, params, task, seed)?.0)
    }

    /// Also returns the mean training loss before the first round and after
    /// each round.
    pub fn fit_with_history(
        x: &Matrix,
        y: &[f64],
        params: &BoostingParams,
        task: Task,
        seed: u64,
    ) -> Result<(Self, Vec<f64>)> {
        params.validate()?;
        let n = y.len();
        let data = BinnedMatrix::new(x);
        let features: Vec<usize> = (0..x.n_cols()).collect();
        let mean = y.iter().sum::<f64>() / n as f64;
        let base_margin = match task {
            Task::Regress => mean,
            Task::Classify => {
                let p = mean.clamp(1e-6, 1.0 - 1e-6);
                (p / (1.0 - p)).ln()
            }
        };
        let tree_params = TreeParams {
            max_depth: Some(params.max_depth),
            min_samples_split: 2,
            min_samples_leaf: 1,
            min_child_weight: params.min_child_weight,
            lambda: params.reg_lambda,
            max_features: features.len(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut margin = vec![base_margin; n];
        let mut g = vec![0.0; n];
        let mut h = vec![0.0; n];
        let mut history = vec![mean_loss(task, y, &margin)];
        let mut trees = Vec::with_capacity(params.n_rounds);
        for _ in 0..params.n_rounds {
            for i in 0..n {
                match task {
                    Task::Regress => {
                        g[i] = y[i] - margin[i];
                        h[i] = 1.0;
                    }
                    Task::Classify => {
                        let p = sigmoid(margin[i]);
                        g[i] = y[i] - p;
                        h[i] = (p * (1.0 - p)).max(1e-16);
                    }
                }
            }
            let rows: Vec<u32> = if params.subsample < 1.0 {
                let k = ((params.subsample * n as f64).round() as usize).max(1);
                let mut picked: Vec<u32> = sample(&mut rng, n, k).into_iter().map(|i| i as u32).collect();
                picked.sort_unstable();
                picked
            } else {
                (0..n as u32).collect()
            };
            let tree = grow_tree(&data, &features, &g, &h, rows, &tree_params, &mut rng);
            let lr = params.learning_rate;
            margin.par_iter_mut().enumerate().for_each(|(i, m)| *m += lr * tree.predict_binned(&data, i));
            history.push(mean_loss(task, y, &margin));
            trees.push(tree);
        }
        let model = Self { task, n_features: x.n_cols(), base_margin, learning_rate: params.learning_rate, trees };
        Ok((model, history))
    }

    pub fn margin_row(&self, row: &[f64]) -> f64 {
        self.base_margin + self.learning_rate * self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>()
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.n_cols() != self.n_features {
            return Err(Error::Schema { expected: self.n_features, got: x.n_cols() });
        }
        Ok((0..x.n_rows())
            .into_par_iter()
            .map(|r| {
                let m = self.margin_row(x.row(r));
                match self.task {
                    Task::Regress => m,
                    Task::Classify => {
                        if m > 0.0 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                }
            })
            .collect())
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn params(rounds: usize) -> BoostingParams {
        BoostingParams {
            min_child_weight: 1.0,
            subsample: 1.0,
            max_depth: 4,
            learning_rate: 0.1,
            n_rounds: rounds,
            reg_lambda: 0.0,
        }
    }

    #[test]
    fn one_full_step_interpolates() {
        let n = 16;
        let x = Matrix::from_rows(&(0..n).map(|i| vec![i as f64]).collect::<Vec<_>>()).unwrap();
        let y: Vec<f64> = (0..n).map(|i| ((i * 5) % 7) as f64 * 0.3).collect();
        let p = BoostingParams { learning_rate: 1.0, n_rounds: 1, max_depth: n, ..params(1) };
        let m = GradientBoosting::fit(&x, &y, &p, Task::Regress, 0).unwrap();
        for (a, b) in m.predict(&x).unwrap().iter().zip(&y) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn loss_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..400).map(|_| (0..3).map(|_| rng.gen()).collect()).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let yr: Vec<f64> = rows.iter().map(|r| r[0] * r[1] + rng.gen::<f64>() * 0.1).collect();
        let yc: Vec<f64> = rows.iter().map(|r| if r[0] + rng.gen::<f64>() * 0.3 > 0.6 { 1.0 } else { 0.0 }).collect();
        for (task, y) in [(Task::Regress, &yr), (Task::Classify, &yc)] {
            let (_, hist) = GradientBoosting::fit_with_history(&x, y, &params(100), task, 1).unwrap();
            assert_eq!(hist.len(), 101);
            for w in hist.windows(2) {
                assert!(w[1] <= w[0] + 1e-15, "{task:?}: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn classifies_separable_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<Vec<f64>> = (0..600).map(|_| (0..2).map(|_| rng.gen()).collect()).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let y: Vec<f64> = rows.iter().map(|r| if r[1] > 0.7 { 1.0 } else { 0.0 }).collect();
        let m = GradientBoosting::fit(&x, &y, &params(30), Task::Classify, 0).unwrap();
        let acc = m.predict(&x).unwrap().iter().zip(&y).filter(|(a, b)| a == b).count();
        assert!(acc >= 590);
    }

    #[test]
    fn subsample_is_seeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.gen(), rng.gen()]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let y: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let p = BoostingParams { subsample: 0.6, ..params(10) };
        let a = GradientBoosting::fit(&x, &y, &p, Task::Regress, 5).unwrap();
        let b = GradientBoosting::fit(&x, &y, &p, Task::Regress, 5).unwrap();
        assert_eq!(a, b);
        assert!(GradientBoosting::fit(&x, &y, &BoostingParams { subsample: 1.5, ..p }, Task::Regress, 5).is_err());
    }
}
