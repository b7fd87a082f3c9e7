//! Per-site hyperparameter search on one random 70/30 split.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::SeriesTable;
use crate::error::{Error, Result};
use crate::learners::{self, Family, GridSet, LearnerSpec, ParamAssignment, Task};
use crate::matrix::Matrix;
use crate::metrics::{r_squared, ConfusionCounts};
use crate::preprocess::{complete_case, to_binary, Frame, MinMaxScaler};

/// Minimum rain rows needed to tune a regressor.
pub const MIN_RAIN_ROWS: usize = 20;

/// Shuffled split with `round(0.7 n)` training rows.
pub fn split_70_30(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (0.7 * n as f64).round() as usize;
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: ParamAssignment,
    pub best_index: usize,
    pub score: f64,
    /// Score of every point in enumeration order; `None` where the fit failed.
    pub scores: Vec<Option<f64>>,
    pub failures: Vec<String>,
}

/// Scaled train/test matrices for one search.
pub struct SearchData {
    pub x_train: Matrix,
    pub y_train: Vec<f64>,
    pub x_test: Matrix,
    pub y_test: Vec<f64>,
}

/// Complete-case samples of `table` (rain samples only for regression), split
/// 70/30 and min-max scaled on the training part.
pub fn search_data(table: &SeriesTable, task: Task, seed: u64) -> Result<SearchData> {
    let frame = Frame::from_table(table);
    if frame.x.n_cols() == 0 {
        return Err(Error::InvalidTable("no feature columns to tune on".into()));
    }
    let mut rows = complete_case(&frame.x, None)?;
    let y: Vec<f64> = match task {
        Task::Classify => to_binary(&frame.y),
        Task::Regress => {
            rows.retain(|&r| frame.y[r] > 0.0);
            if rows.len() < MIN_RAIN_ROWS {
                return Err(Error::TooFewSamples { needed: MIN_RAIN_ROWS, got: rows.len() });
            }
            frame.y.clone()
        }
    };
    let (tr, te) = split_70_30(rows.len(), seed);
    let train: Vec<usize> = tr.iter().map(|&i| rows[i]).collect();
    let test: Vec<usize> = te.iter().map(|&i| rows[i]).collect();
    let x_train = frame.x.select_rows(&train);
    let scaler = MinMaxScaler::fit(&x_train, &frame.feature_names)?;
    Ok(SearchData {
        x_train: scaler.transform(&x_train)?,
        y_train: train.iter().map(|&r| y[r]).collect(),
        x_test: scaler.transform(&frame.x.select_rows(&test))?,
        y_test: test.iter().map(|&r| y[r]).collect(),
    })
}

/// Accuracy in percent for classification; R² of the clipped predictions for
/// regression.
pub fn score_point(data: &SearchData, params: &ParamAssignment, task: Task, seed: u64) -> Result<f64> {
    let spec = LearnerSpec::new(task, params.clone(), seed);
    let model = learners::fit(&spec, &data.x_train, &data.y_train)?;
    let pred = model.predict(&data.x_test)?;
    match task {
        Task::Classify => {
            let t: Vec<bool> = data.y_test.iter().map(|&v| v > 0.5).collect();
            let p: Vec<bool> = pred.iter().map(|&v| v > 0.5).collect();
            Ok(ConfusionCounts::from_labels(&t, &p)?.accuracy())
        }
        Task::Regress => {
            let clipped: Vec<f64> = pred.iter().map(|&v| v.max(0.0)).collect();
            r_squared(&data.y_test, &clipped)?.ok_or_else(|| Error::Tuning("test targets are constant".into()))
        }
    }
}

/// Evaluates every point on the same split; the first maximiser wins.
pub fn grid_search(table: &SeriesTable, points: &[ParamAssignment], task: Task, seed: u64) -> Result<GridResult> {
    if points.is_empty() {
        return Err(Error::Tuning("empty grid".into()));
    }
    let data = search_data(table, task, seed)?;
    let mut scores = Vec::with_capacity(points.len());
    let mut failures = Vec::new();
    for (i, p) in points.iter().enumerate() {
        match score_point(&data, p, task, seed) {
            Ok(s) => scores.push(Some(s)),
            Err(e) => {
                failures.push(format!("point {i}: {e}"));
                scores.push(None);
            }
        }
    }
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        if let Some(s) = s {
            if best.map_or(true, |b| *s > scores[b].unwrap()) {
                best = Some(i);
            }
        }
    }
    let Some(b) = best else {
        return Err(Error::Tuning(format!("every grid point failed: {}", failures.join("; "))));
    };
    Ok(GridResult { best: points[b].clone(), best_index: b, score: scores[b].unwrap(), scores, failures })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedEntry {
    pub site_id: String,
    pub family: Family,
    pub task: Task,
    pub params: ParamAssignment,
    /// `None` when the entry was not produced by a search.
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedStore {
    pub split_seed: u64,
    /// Name of the grid the entries were drawn from.
    pub grid: String,
    pub entries: Vec<TunedEntry>,
}

impl TunedStore {
    pub fn new(split_seed: u64, grid: impl Into<String>) -> Self {
        Self { split_seed, grid: grid.into(), entries: Vec::new() }
    }

    pub fn get(&self, site_id: &str, family: Family, task: Task) -> Option<&TunedEntry> {
        self.entries.iter().find(|e| e.site_id == site_id && e.family == family && e.task == task)
    }

    pub fn params(&self, site_id: &str, family: Family, task: Task) -> Result<&ParamAssignment> {
        self.get(site_id, family, task)
            .map(|e| &e.params)
            .ok_or_else(|| Error::Config(format!("no tuned parameters for site {site_id}, {family}, {task}")))
    }

    /// Inserts or replaces, keeping entries sorted by key.
    pub fn insert(&mut self, entry: TunedEntry) {
        self.entries.retain(|e| !(e.site_id == entry.site_id && e.family == entry.family && e.task == entry.task));
        self.entries.push(entry);
        self.entries.sort_by(|a, b| (&a.site_id, a.family, a.task).cmp(&(&b.site_id, b.family, b.task)));
    }

    /// Every entry must lie on `grid`.
    pub fn check_grid(&self, grid: &GridSet) -> Result<()> {
        for e in &self.entries {
            if e.params.family() != e.family || !grid.contains(e.family, e.task, &e.params) {
                return Err(Error::Config(format!(
                    "stored parameters for {}/{}/{} are not on grid '{}'",
                    e.site_id, e.family, e.task, grid.name
                )));
            }
        }
        Ok(())
    }

    /// Uses the first point of each grid for `site_id` without searching.
    pub fn from_first_points(site_id: &str, grid: &GridSet) -> Self {
        let mut store = Self::new(0, grid.name.clone());
        for family in learners::ALL_FAMILIES {
            for task in [Task::Classify, Task::Regress] {
                store.insert(TunedEntry {
                    site_id: site_id.to_string(),
                    family,
                    task,
                    params: grid.points(family, task)[0].clone(),
                    score: None,
                });
            }
        }
        store
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Copies all entries whose site matches `from` (or every entry when
    /// `from` is `None`) under the site id `to`, overwriting nothing already
    /// present for `to`.
    pub fn alias(&mut self, from: Option<&str>, to: &str) {
        let extra: Vec<TunedEntry> = self
            .entries
            .iter()
            .filter(|e| from.map_or(true, |f| e.site_id == f))
            .filter(|e| self.get(to, e.family, e.task).is_none())
            .map(|e| TunedEntry { site_id: to.to_string(), ..e.clone() })
            .collect();
        for e in extra {
            if self.get(to, e.family, e.task).is_none() {
                self.insert(e);
            }
        }
    }
}
