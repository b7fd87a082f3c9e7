//! Iterative random-forest completion of feature rows.
//!
//! One regression forest per column is fitted on training rows, predicting that
//! column from all others. Test rows start from the training means and are
//! refined column by column, least-missing column first, until the filled
//! values stop moving.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::forest::{ForestParams, MaxFeatures, RandomForest};
use crate::learners::tree::BinnedMatrix;
use crate::learners::Task;
use crate::matrix::Matrix;
use crate::preprocess::{complete_case, state_digest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImputerConfig {
    pub max_rounds: usize,
    /// Stop once the mean squared change of the filled cells drops below this.
    pub tol: f64,
    pub n_estimators: usize,
    /// Complete training rows used per forest; larger sets are subsampled.
    pub max_train_rows: usize,
    pub seed: u64,
}

impl Default for ImputerConfig {
    fn default() -> Self {
        Self { max_rounds: 10, tol: 1e-6, n_estimators: 100, max_train_rows: 10_000, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputerModel {
    feature_names: Vec<String>,
    means: Vec<f64>,
    visit_order: Vec<usize>,
    /// `forests[j]` predicts column `j` and never reads it.
    forests: Vec<RandomForest>,
    max_rounds: usize,
    tol: f64,
}

/// Columns sorted by (training missing count, name).
pub fn visit_order(missing: &[usize], names: &[String]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..missing.len()).collect();
    order.sort_by(|&a, &b| missing[a].cmp(&missing[b]).then_with(|| names[a].cmp(&names[b])));
    order
}

/// `train` holds the training rows of one fold, missing cells included; they
/// set the visit order and the means, while forests see only complete rows.
pub fn fit_imputer(train: &Matrix, names: &[String], config: &ImputerConfig) -> Result<ImputerModel> {
    let d = train.n_cols();
    if d < 2 {
        return Err(Error::Imputer(format!("need at least 2 feature columns, got {d}")));
    }
    if names.len() != d {
        return Err(Error::LengthMismatch { left: d, right: names.len() });
    }
    if config.max_rounds == 0 || config.n_estimators == 0 || config.max_train_rows == 0 {
        return Err(Error::Config("imputer max_rounds, n_estimators and max_train_rows must be >= 1".into()));
    }
    let mut missing = vec![0usize; d];
    let mut sums = vec![0.0; d];
    for row in train.rows() {
        for (j, &v) in row.iter().enumerate() {
            if v.is_nan() {
                missing[j] += 1;
            } else {
                sums[j] += v;
            }
        }
    }
    let means: Vec<f64> = (0..d)
        .map(|j| {
            let present = train.n_rows() - missing[j];
            if present == 0 {
                Err(Error::Imputer(format!("column `{}` has no training values", names[j])))
            } else {
                Ok(sums[j] / present as f64)
            }
        })
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut rows = complete_case(train, None)?;
    if rows.len() > config.max_train_rows {
        let mut keep: Vec<usize> = sample(&mut rng, rows.len(), config.max_train_rows).into_iter().map(|i| rows[i]).collect();
        keep.sort_unstable();
        rows = keep;
    }
    let x = train.select_rows(&rows);
    let data = BinnedMatrix::new(&x);
    let params = ForestParams {
        max_depth: None,
        n_estimators: config.n_estimators,
        min_samples_split: 2,
        min_samples_leaf: 1,
        max_features: Some(MaxFeatures::Third),
    };
    let seeds: Vec<u64> = (0..d).map(|_| rng.gen()).collect();
    let forests = (0..d)
        .map(|j| {
            let inputs: Vec<usize> = (0..d).filter(|&k| k != j).collect();
            RandomForest::fit_binned(&data, &inputs, &x.column(j), &params, Task::Regress, seeds[j])
        })
        .collect();
    Ok(ImputerModel {
        feature_names: names.to_vec(),
        means,
        visit_order: visit_order(&missing, names),
        forests,
        max_rounds: config.max_rounds,
        tol: config.tol,
    })
}

impl ImputerModel {
    pub fn visit_order(&self) -> &[usize] {
        &self.visit_order
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn forest(&self, column: usize) -> &RandomForest {
        &self.forests[column]
    }

    pub fn n_forests(&self) -> usize {
        self.forests.len()
    }

    pub fn digest(&self) -> String {
        state_digest(self)
    }

    /// Completes `x`; present cells are returned untouched.
    pub fn impute_rows(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.impute_rows_traced(x)?.0)
    }

    /// Also returns the number of sweeps performed.
    pub fn impute_rows_traced(&self, x: &Matrix) -> Result<(Matrix, usize)> {
        let d = self.means.len();
        if x.n_cols() != d {
            return Err(Error::Schema { expected: d, got: x.n_cols() });
        }
        let mut out = x.clone();
        let mut by_column: Vec<Vec<usize>> = vec![Vec::new(); d];
        let mut n_missing = 0;
        for r in 0..x.n_rows() {
            for j in 0..d {
                if x.get(r, j).is_nan() {
                    by_column[j].push(r);
                    out.set(r, j, self.means[j]);
                    n_missing += 1;
                }
            }
        }
        if n_missing == 0 {
            return Ok((out, 0));
        }
        let mut rounds = 0;
        while rounds < self.max_rounds {
            rounds += 1;
            let mut change = 0.0;
            for &j in &self.visit_order {
                for &r in &by_column[j] {
                    let old = out.get(r, j);
                    let new = self.forests[j].predict_row(out.row(r));
                    change += (new - old) * (new - old);
                    out.set(r, j, new);
                }
            }
            if change / (n_missing as f64) < self.tol {
                break;
            }
        }
        Ok((out, rounds))
    }
}
