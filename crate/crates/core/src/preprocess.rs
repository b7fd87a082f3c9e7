//! Per-fold preparation: cyclic time features, sample extraction, fold
//! planning, complete-case filtering, min-max scaling and binary targets.

use std::f64::consts::PI;

use chrono::{Datelike, Timelike};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{ColumnOrigin, FeatureColumn, SeriesTable};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Maps a periodic integer onto the unit circle: `(sin(2πx/max), cos(2πx/max))`.
pub fn encode_cyclic(x: u32, max_x: u32) -> Result<(f64, f64)> {
    if max_x == 0 || x == 0 || x > max_x {
        return Err(Error::domain(format!("cyclic value {x}"), format!("must lie in 1..={max_x}")));
    }
    let angle = 2.0 * PI * f64::from(x) / f64::from(max_x);
    Ok((angle.sin(), angle.cos()))
}

/// Hour of day on 1..=24 (midnight is 24); both half-hours of an hour share it.
pub fn hour_of_day(t: &chrono::DateTime<chrono::Utc>) -> u32 {
    match t.hour() {
        0 => 24,
        h => h,
    }
}

pub const CYCLIC_COLUMNS: [&str; 4] = ["hour_sin", "hour_cos", "month_sin", "month_cos"];

/// Appends hour-of-day and month sine/cosine columns.
pub fn add_cyclic_features(table: &SeriesTable) -> Result<SeriesTable> {
    let mut out = table.clone();
    let mut cols: [Vec<Option<f64>>; 4] = Default::default();
    for t in table.timestamps() {
        let (hs, hc) = encode_cyclic(hour_of_day(t), 24)?;
        let (ms, mc) = encode_cyclic(t.month(), 12)?;
        for (c, v) in cols.iter_mut().zip([hs, hc, ms, mc]) {
            c.push(Some(v));
        }
    }
    for (name, values) in CYCLIC_COLUMNS.iter().zip(cols) {
        out.push_column(FeatureColumn::new(*name, ColumnOrigin::Cyclic, values))?;
    }
    Ok(out)
}

/// Model-ready samples: one row per table row with a present target.
/// Missing feature cells are `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub feature_names: Vec<String>,
    pub x: Matrix,
    pub y: Vec<f64>,
    /// Table row index of each sample.
    pub rows: Vec<usize>,
    /// Site-segment index of each sample.
    pub site: Vec<usize>,
    pub site_ids: Vec<String>,
}

impl Frame {
    /// Discards samples whose precipitation is missing; they have no ground truth.
    pub fn from_table(table: &SeriesTable) -> Self {
        let rows: Vec<usize> = (0..table.len()).filter(|&i| table.target()[i].is_some()).collect();
        let n_cols = table.columns().len();
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for &r in &rows {
            data.extend(table.columns().iter().map(|c| c.values[r].unwrap_or(f64::NAN)));
        }
        Self {
            feature_names: table.feature_names(),
            x: Matrix::new(rows.len(), n_cols, data).expect("sized above"),
            y: rows.iter().map(|&r| table.target()[r].expect("filtered")).collect(),
            site: rows.iter().map(|&r| table.site_index_of_row(r)).collect(),
            rows,
            site_ids: table.segments().iter().map(|s| s.site_id.clone()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Class 1 where precipitation > 0, class 0 otherwise.
pub fn to_binary(y: &[f64]) -> Vec<f64> {
    y.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect()
}

/// Indices of the rows with no missing feature cell (and, when given, a
/// finite target).
pub fn complete_case(x: &Matrix, y: Option<&[f64]>) -> Result<Vec<usize>> {
    let rows: Vec<usize> = (0..x.n_rows())
        .filter(|&r| x.row_is_complete(r) && y.map_or(true, |y| !y[r].is_nan()))
        .collect();
    if rows.is_empty() {
        return Err(Error::NoCompleteRows);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n_folds: usize,
    pub seed: u64,
    /// Fold index of each sample.
    pub assignment: Vec<usize>,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] != fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Uniform random assignment of `n_rows` samples to `n_folds` folds whose
/// sizes differ by at most one.
pub fn make_folds(n_rows: usize, n_folds: usize, seed: u64) -> Result<FoldPlan> {
    if n_folds < 2 || n_rows < n_folds {
        return Err(Error::Folds { n_rows, n_folds });
    }
    let mut order: Vec<usize> = (0..n_rows).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignment = vec![0; n_rows];
    for (pos, &row) in order.iter().enumerate() {
        assignment[row] = pos % n_folds;
    }
    Ok(FoldPlan { n_folds, seed, assignment })
}

/// Per-feature min/max learned from training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl MinMaxScaler {
    /// Ignores `NaN` cells; fails if a feature has no present value.
    pub fn fit(x: &Matrix, names: &[String]) -> Result<Self> {
        let mut mins = vec![f64::INFINITY; x.n_cols()];
        let mut maxs = vec![f64::NEG_INFINITY; x.n_cols()];
        for row in x.rows() {
            for (j, &v) in row.iter().enumerate() {
                if !v.is_nan() {
                    mins[j] = mins[j].min(v);
                    maxs[j] = maxs[j].max(v);
                }
            }
        }
        if let Some(j) = (0..x.n_cols()).find(|&j| mins[j] > maxs[j]) {
            return Err(Error::ScalerFit(names.get(j).cloned().unwrap_or_else(|| format!("#{j}"))));
        }
        Ok(Self { mins, maxs })
    }

    /// Affine map to [0, 1] on the training range. Values outside that range
    /// are not clipped; constant training columns map to 0. `NaN` passes through.
    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.n_cols() != self.mins.len() {
            return Err(Error::Schema { expected: self.mins.len(), got: x.n_cols() });
        }
        let mut out = x.clone();
        for r in 0..out.n_rows() {
            for (j, v) in out.row_mut(r).iter_mut().enumerate() {
                let range = self.maxs[j] - self.mins[j];
                *v = if range > 0.0 { (*v - self.mins[j]) / range } else if v.is_nan() { f64::NAN } else { 0.0 };
            }
        }
        Ok(out)
    }

    pub fn digest(&self) -> String {
        state_digest(self)
    }
}

/// SHA-256 of the JSON serialisation of a fitted object.
pub fn state_digest<T: Serialize>(value: &T) -> String {
    struct HashWriter(Sha256);
    impl std::io::Write for HashWriter {
        fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
            self.0.update(buf);
            Ok(buf.len())
        }
        fn flush(&mut self) -> std::io::Result<()> {
            Ok(())
        }
    }
    let mut w = HashWriter(Sha256::new());
    serde_json::to_writer(&mut w, value).expect("fitted state serialises");
    hex::encode(w.0.finalize())
}
