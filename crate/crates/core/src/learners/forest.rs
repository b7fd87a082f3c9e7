//! Bagged CART ensembles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, BinnedMatrix, Tree, TreeParams};
use super::Task;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Features examined at each node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaxFeatures {
    All,
    Sqrt,
    Third,
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        let n = n_features as f64;
        let k = match self {
            MaxFeatures::All => n_features,
            MaxFeatures::Sqrt => n.sqrt().floor() as usize,
            MaxFeatures::Third => (n / 3.0).floor() as usize,
        };
        k.clamp(1, n_features.max(1))
    }

    /// Classification samples `sqrt(d)` features per node, regression all `d`.
    pub fn default_for(task: Task) -> Self {
        match task {
            Task::Classify => MaxFeatures::Sqrt,
            Task::Regress => MaxFeatures::All,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub n_estimators: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    #[serde(default)]
    pub max_features: Option<MaxFeatures>,
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_estimators == 0 {
            return Err(Error::Params("n_estimators must be >= 1".into()));
        }
        if self.min_samples_split < 2 || self.min_samples_leaf < 1 {
            return Err(Error::Params("min_samples_split >= 2 and min_samples_leaf >= 1 required".into()));
        }
        if self.max_depth == Some(0) {
            return Err(Error::Params("max_depth must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    task: Task,
    n_features: usize,
    trees: Vec<Tree>,
}

impl RandomForest {
    pub fn fit(x: &Matrix, y: &[f64], params: &ForestParams, task: Task, seed: u64) -> Result<Self> {
        params.validate()?;
        let data = BinnedMatrix::new(x);
        let features: Vec<usize> = (0..x.n_cols()).collect();
        Ok(Self::fit_binned(&data, &features, y, params, task, seed))
    }

    /// Fits on pre-binned data restricted to `features`; the imputer reuses one
    /// binning across its per-column forests.
    pub(crate) fn fit_binned(
        data: &BinnedMatrix,
        features: &[usize],
        y: &[f64],
        params: &ForestParams,
        task: Task,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seeds: Vec<u64> = (0..params.n_estimators).map(|_| rng.gen()).collect();
        let tree_params = TreeParams {
            max_depth: params.max_depth,
            min_samples_split: params.min_samples_split,
            min_samples_leaf: params.min_samples_leaf,
            min_child_weight: 0.0,
            lambda: 0.0,
            max_features: params.max_features.unwrap_or(MaxFeatures::default_for(task)).resolve(features.len()),
        };
        let ones = vec![1.0; y.len()];
        let n = data.n_rows();
        let trees = seeds
            .into_par_iter()
            .map(|s| {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                let rows: Vec<u32> = (0..n).map(|_| rng.gen_range(0..n as u32)).collect();
                grow_tree(data, features, y, &ones, rows, &tree_params, &mut rng)
            })
            .collect();
        Self { task, n_features: data.n_cols(), trees }
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Mean of tree outputs (regression) or majority vote of per-tree hard
    /// labels, class 0 winning ties (classification).
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self.task {
            Task::Regress => self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.trees.len() as f64,
            Task::Classify => {
                let votes = self.trees.iter().filter(|t| t.predict_row(row) > 0.5).count();
                if 2 * votes > self.trees.len() {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.n_cols() != self.n_features {
            return Err(Error::Schema { expected: self.n_features, got: x.n_cols() });
        }
        Ok((0..x.n_rows()).into_par_iter().map(|r| self.predict_row(x.row(r))).collect())
    }
}
