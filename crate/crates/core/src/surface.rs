//! Multiquadric surface fit (zero offset) over neighbouring gauges.
//!
//! With basis `φ(r) = r` the weights solve the bordered system
//!
//! ```text
//! [ Φ  1 ] [ w ]   [ φ0 ]
//! [ 1ᵀ 0 ] [ λ ] = [ 1  ]      Φ_ij = |x_i − x_j|,  (φ0)_i = |x0 − x_i|
//! ```
//!
//! and the estimate at the site is `Σ w_i z_i`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnOrigin, GaugeCatalog, SeriesTable};
use crate::error::{Error, Result};
use crate::metrics::{average_folds, AveragedMetrics, MetricReport};
use crate::preprocess::{Frame, FoldPlan};

pub const PRUNE_THRESHOLD: f64 = 0.001;
pub const MAX_CANDIDATE_GAUGES: usize = 12;

pub type Point = (f64, f64);

fn dist(a: Point, b: Point) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSolution {
    pub w: Vec<f64>,
    pub lagrange: f64,
}

/// The `(n+1)×(n+1)` matrix and right-hand side, row-major.
pub fn bordered_system(target: Point, gauges: &[Point]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = gauges.len();
    let mut a = vec![vec![0.0; n + 1]; n + 1];
    let mut b = vec![0.0; n + 1];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = dist(gauges[i], gauges[j]);
        }
        a[i][n] = 1.0;
        a[n][i] = 1.0;
        b[i] = dist(target, gauges[i]);
    }
    b[n] = 1.0;
    (a, b)
}

/// Gaussian elimination with partial pivoting. Pivots below `1e-12` times the
/// largest entry are treated as singular.
pub fn lu_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Err(Error::Singular("zero matrix".into()));
    }
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        if a[p][k].abs() < 1e-12 * scale {
            return Err(Error::Singular(format!("pivot {k} is {:.3e}", a[p][k])));
        }
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            if f != 0.0 {
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    Ok(x)
}

pub fn solve_weights(target: Point, gauges: &[Point]) -> Result<WeightSolution> {
    match gauges.len() {
        0 => Err(Error::Surface("no gauges to interpolate from".into())),
        1 => Ok(WeightSolution { w: vec![1.0], lagrange: 0.0 }),
        n => {
            let (a, b) = bordered_system(target, gauges);
            let mut x = lu_solve(a, b)?;
            let lagrange = x.pop().unwrap();
            debug_assert_eq!(x.len(), n);
            Ok(WeightSolution { w: x, lagrange })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrunedWeights {
    /// Indices into the original gauge list, ascending.
    pub kept: Vec<usize>,
    pub solution: WeightSolution,
    /// Removal passes performed.
    pub passes: usize,
}

/// Drops every gauge whose weight is below `threshold` (negative weights
/// included) and re-solves, until all remaining weights clear the threshold or
/// a single gauge is left.
pub fn prune_weights(target: Point, gauges: &[Point], threshold: f64) -> Result<PrunedWeights> {
    let mut kept: Vec<usize> = (0..gauges.len()).collect();
    let mut passes = 0;
    loop {
        let pts: Vec<Point> = kept.iter().map(|&i| gauges[i]).collect();
        let solution = solve_weights(target, &pts)?;
        if kept.len() == 1 || solution.w.iter().all(|&w| w >= threshold) {
            return Ok(PrunedWeights { kept, solution, passes });
        }
        let survivors: Vec<usize> =
            kept.iter().zip(&solution.w).filter(|(_, &w)| w >= threshold).map(|(&i, _)| i).collect();
        if survivors.is_empty() {
            return Err(Error::Surface("pruning removed every gauge".into()));
        }
        kept = survivors;
        passes += 1;
    }
}

/// External gauge columns of `table` ordered by distance from the site,
/// with their positions.
pub fn ranked_gauges(table: &SeriesTable, catalog: &GaugeCatalog) -> Result<(Point, Vec<(usize, String, Point)>)> {
    let site = catalog.require(table.site_id())?.xy();
    let mut gauges: Vec<(f64, usize, String, Point)> = Vec::new();
    for (c, col) in table.columns().iter().enumerate() {
        if col.origin != ColumnOrigin::ExternalGauge {
            continue;
        }
        let xy = catalog.require(&col.name)?.xy();
        gauges.push((dist(site, xy), c, col.name.clone(), xy));
    }
    gauges.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.2.cmp(&b.2)));
    Ok((site, gauges.into_iter().map(|(_, c, id, xy)| (c, id, xy)).collect()))
}

pub fn default_candidates(available: usize) -> Vec<usize> {
    match available {
        0 => vec![],
        1 => vec![1],
        n => (2..=n.min(MAX_CANDIDATE_GAUGES)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaugeCountChoice {
    pub candidates: Vec<usize>,
    /// RMSE per candidate; `None` where no row had all `k` gauges present.
    pub rmse: Vec<Option<f64>>,
    pub n_rows: Vec<usize>,
    pub chosen: usize,
    pub gauge_ids: Vec<String>,
    pub weights: Vec<f64>,
}

/// Scores each `k` over `rows` (table row indices) where the target and the
/// `k` nearest gauges are all present, using the pruned weights of those `k`
/// gauges. Lowest RMSE wins; ties go to the smaller `k`.
pub fn select_gauge_count(
    table: &SeriesTable,
    catalog: &GaugeCatalog,
    candidate_ks: &[usize],
    rows: &[usize],
) -> Result<GaugeCountChoice> {
    let (site, ranked) = ranked_gauges(table, catalog)?;
    if candidate_ks.is_empty() {
        return Err(Error::Surface("no candidate gauge counts".into()));
    }
    if let Some(&k) = candidate_ks.iter().find(|&&k| k == 0 || k > ranked.len()) {
        return Err(Error::Surface(format!("candidate count {k} outside 1..={}", ranked.len())));
    }
    let mut rmse = Vec::with_capacity(candidate_ks.len());
    let mut n_rows = Vec::with_capacity(candidate_ks.len());
    let mut fits = Vec::with_capacity(candidate_ks.len());
    for &k in candidate_ks {
        let pts: Vec<Point> = ranked[..k].iter().map(|g| g.2).collect();
        let pruned = prune_weights(site, &pts, PRUNE_THRESHOLD)?;
        let cols: Vec<usize> = ranked[..k].iter().map(|g| g.0).collect();
        let (mut sse, mut n) = (0.0, 0usize);
        for &r in rows {
            let Some(truth) = table.target()[r] else { continue };
            let readings: Option<Vec<f64>> = cols.iter().map(|&c| table.columns()[c].values[r]).collect();
            let Some(z) = readings else { continue };
            let est: f64 = pruned.kept.iter().zip(&pruned.solution.w).map(|(&i, w)| w * z[i]).sum();
            sse += (est - truth) * (est - truth);
            n += 1;
        }
        rmse.push((n > 0).then(|| (sse / n as f64).sqrt()));
        n_rows.push(n);
        fits.push(pruned);
    }
    let mut best: Option<usize> = None;
    for (i, r) in rmse.iter().enumerate() {
        if let Some(r) = r {
            let better = match best {
                None => true,
                Some(b) => *r < rmse[b].unwrap() || (*r == rmse[b].unwrap() && candidate_ks[i] < candidate_ks[b]),
            };
            if better {
                best = Some(i);
            }
        }
    }
    let b = best.ok_or_else(|| Error::Surface("no candidate gauge count has an evaluable row".into()))?;
    let k = candidate_ks[b];
    Ok(GaugeCountChoice {
        candidates: candidate_ks.to_vec(),
        rmse,
        n_rows,
        chosen: k,
        gauge_ids: ranked[..k].iter().map(|g| g.1.clone()).collect(),
        weights: {
            let mut w = vec![0.0; k];
            for (&i, &v) in fits[b].kept.iter().zip(&fits[b].solution.w) {
                w[i] = v;
            }
            w
        },
    })
}

/// Estimates from pruned weights re-solved over whichever of the chosen
/// gauges are present in each row; solutions are cached per subset.
pub struct SurfaceEstimator {
    site: Point,
    cols: Vec<usize>,
    points: Vec<Point>,
    cache: HashMap<u32, PrunedWeights>,
}

impl SurfaceEstimator {
    pub fn new(table: &SeriesTable, catalog: &GaugeCatalog, k: usize) -> Result<Self> {
        let (site, ranked) = ranked_gauges(table, catalog)?;
        if k == 0 || k > ranked.len() || k > 32 {
            return Err(Error::Surface(format!("gauge count {k} not available")));
        }
        Ok(Self {
            site,
            cols: ranked[..k].iter().map(|g| g.0).collect(),
            points: ranked[..k].iter().map(|g| g.2).collect(),
            cache: HashMap::new(),
        })
    }

    /// `None` when every chosen gauge is missing in `row`.
    pub fn estimate(&mut self, table: &SeriesTable, row: usize) -> Result<Option<f64>> {
        let mut mask = 0u32;
        let mut present = Vec::new();
        for (i, &c) in self.cols.iter().enumerate() {
            if let Some(v) = table.columns()[c].values[row] {
                mask |= 1 << i;
                present.push((i, v));
            }
        }
        if present.is_empty() {
            return Ok(None);
        }
        if !self.cache.contains_key(&mask) {
            let pts: Vec<Point> = present.iter().map(|&(i, _)| self.points[i]).collect();
            let pruned = prune_weights(self.site, &pts, PRUNE_THRESHOLD)?;
            self.cache.insert(mask, pruned);
        }
        let pruned = &self.cache[&mask];
        Ok(Some(pruned.kept.iter().zip(&pruned.solution.w).map(|(&i, w)| w * present[i].1).sum()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineFold {
    pub choice: GaugeCountChoice,
    pub report: MetricReport,
    /// Test samples with every chosen gauge missing, left unscored.
    pub n_unavailable: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRun {
    pub site_id: String,
    pub folds: Vec<BaselineFold>,
    pub averaged: AveragedMetrics,
    /// One entry per sample of the fold plan.
    pub predictions: Vec<Option<f64>>,
}

/// Evaluates the surface fit on the folds of `plan`, which indexes the
/// target-present rows of `table`. The gauge count is picked on each fold's
/// training samples.
pub fn baseline_predict(
    table: &SeriesTable,
    catalog: &GaugeCatalog,
    plan: &FoldPlan,
    candidate_ks: Option<&[usize]>,
) -> Result<BaselineRun> {
    let frame = Frame::from_table(table);
    if plan.assignment.len() != frame.len() {
        return Err(Error::LengthMismatch { left: plan.assignment.len(), right: frame.len() });
    }
    let (_, ranked) = ranked_gauges(table, catalog)?;
    let candidates = match candidate_ks {
        Some(k) => k.to_vec(),
        None => default_candidates(ranked.len()),
    };
    let mut predictions = vec![None; frame.len()];
    let mut folds = Vec::with_capacity(plan.n_folds);
    for fold in 0..plan.n_folds {
        let train: Vec<usize> = plan.train_indices(fold).iter().map(|&i| frame.rows[i]).collect();
        let choice = select_gauge_count(table, catalog, &candidates, &train)?;
        let mut est = SurfaceEstimator::new(table, catalog, choice.chosen)?;
        let (mut truth, mut pred) = (Vec::new(), Vec::new());
        let mut n_unavailable = 0;
        for i in plan.test_indices(fold) {
            match est.estimate(table, frame.rows[i])? {
                Some(v) => {
                    predictions[i] = Some(v);
                    truth.push(frame.y[i]);
                    pred.push(v);
                }
                None => n_unavailable += 1,
            }
        }
        let report = MetricReport::from_amounts(&truth, &pred).map_err(|e| Error::Fold { fold, reason: e.to_string() })?;
        folds.push(BaselineFold { choice, report, n_unavailable });
    }
    let averaged = average_folds(&folds.iter().map(|f| f.report.clone()).collect::<Vec<_>>())?;
    Ok(BaselineRun { site_id: table.site_id().to_string(), folds, averaged, predictions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn coincident_target_is_exact() {
        let g = [(0.0, 0.0), (1000.0, 0.0), (300.0, 800.0)];
        let s = solve_weights(g[1], &g).unwrap();
        for (i, w) in s.w.iter().enumerate() {
            assert!((w - if i == 1 { 1.0 } else { 0.0 }).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_pair() {
        let s = solve_weights((0.0, 0.0), &[(-500.0, 0.0), (500.0, 0.0)]).unwrap();
        assert!((s.w[0] - 0.5).abs() < 1e-15 && (s.w[1] - 0.5).abs() < 1e-15);
        assert!(s.lagrange.abs() < 1e-12);
    }

    #[test]
    fn collinear_by_hand() {
        // Φ = [[0,1000,2000],[1000,0,1000],[2000,1000,0]], φ0 = (500,500,1500)
        // The unique solution is w = (0.5, 0.5, 0), λ = 0.
        let s = solve_weights((500.0, 0.0), &[(0.0, 0.0), (1000.0, 0.0), (2000.0, 0.0)]).unwrap();
        for (w, e) in s.w.iter().zip([0.5, 0.5, 0.0]) {
            assert!((w - e).abs() < 1e-12);
        }
        assert!(s.lagrange.abs() < 1e-9);
    }

    #[test]
    fn duplicate_positions_are_singular() {
        let r = solve_weights((1.0, 1.0), &[(0.0, 0.0), (0.0, 0.0), (5.0, 5.0)]);
        assert!(matches!(r, Err(Error::Singular(_))));
    }

    #[test]
    fn single_gauge() {
        assert_eq!(solve_weights((9.0, 9.0), &[(0.0, 0.0)]).unwrap().w, vec![1.0]);
    }

    #[test]
    fn pruning_fixed_point_and_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let n = rng.gen_range(2..=8);
            let g: Vec<Point> = (0..n).map(|_| (rng.gen_range(0.0..20_000.0), rng.gen_range(0.0..20_000.0))).collect();
            let t = (rng.gen_range(0.0..20_000.0), rng.gen_range(0.0..20_000.0));
            let p = prune_weights(t, &g, PRUNE_THRESHOLD).unwrap();
            assert!(p.passes < n);
            assert!(p.solution.w.iter().all(|&w| w >= PRUNE_THRESHOLD));
            assert!((p.solution.w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn unchanged_when_nothing_to_prune() {
        let g = [(-500.0, 0.0), (500.0, 0.0)];
        let p = prune_weights((0.0, 0.0), &g, PRUNE_THRESHOLD).unwrap();
        assert_eq!((p.kept, p.passes), (vec![0, 1], 0));
    }

    #[test]
    fn candidate_defaults() {
        assert_eq!(default_candidates(1), vec![1]);
        assert_eq!(default_candidates(4), vec![2, 3, 4]);
        assert_eq!(default_candidates(30).last(), Some(&12));
    }
}
