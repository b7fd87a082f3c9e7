//! Independent reference computations shared by the integration tests and
//! the acceptance runner. Nothing here calls the routine it checks.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use raingap::dataset::SeriesTable;
use raingap::hurdle::{imputer_seed, model_seed, prepare_table, HurdleConfig};
use raingap::imputer::{fit_imputer, ImputerConfig};
use raingap::learners::network::Mlp;
use raingap::learners::{self, Family, LearnerSpec, Task};
use raingap::metrics::MetricReport;
use raingap::preprocess::{make_folds, Frame};
use raingap::tuning::TunedStore;
use raingap::Matrix;

// ---- metrics ----

/// `(tp, fp, tn, fn)` by a sample-by-sample scan.
pub fn confusion_scan(truth: &[bool], pred: &[bool]) -> (usize, usize, usize, usize) {
    let mut c = (0, 0, 0, 0);
    for i in 0..truth.len() {
        match (truth[i], pred[i]) {
            (true, true) => c.0 += 1,
            (false, true) => c.1 += 1,
            (false, false) => c.2 += 1,
            (true, false) => c.3 += 1,
        }
    }
    c
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// F1 of class `positive`, counted directly from the vectors.
pub fn class_f1(truth: &[bool], pred: &[bool], positive: bool) -> f64 {
    let t: Vec<bool> = truth.iter().map(|&v| v == positive).collect();
    let p: Vec<bool> = pred.iter().map(|&v| v == positive).collect();
    let (tp, fp, _, fn_) = confusion_scan(&t, &p);
    let prec = ratio(tp, tp + fp);
    let rec = ratio(tp, tp + fn_);
    if prec + rec == 0.0 {
        0.0
    } else {
        2.0 * prec * rec / (prec + rec)
    }
}

/// `(accuracy %, precision, recall, f1, weighted f1)`.
pub fn classification_reference(truth: &[bool], pred: &[bool]) -> (f64, f64, f64, f64, f64) {
    let (tp, fp, tn, fn_) = confusion_scan(truth, pred);
    let n = truth.len();
    let support1 = truth.iter().filter(|&&t| t).count();
    let f1 = class_f1(truth, pred, true);
    let f0 = class_f1(truth, pred, false);
    (
        100.0 * (tp + tn) as f64 / n as f64,
        ratio(tp, tp + fp),
        ratio(tp, tp + fn_),
        f1,
        (support1 as f64 * f1 + (n - support1) as f64 * f0) / n as f64,
    )
}

pub fn rmse_reference(t: &[f64], p: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..t.len() {
        s += (t[i] - p[i]).powi(2);
    }
    (s / t.len() as f64).sqrt()
}

pub fn r2_reference(t: &[f64], p: &[f64]) -> Option<f64> {
    let mean = t.iter().sum::<f64>() / t.len() as f64;
    let tot: f64 = t.iter().map(|v| (v - mean).powi(2)).sum();
    let res: f64 = t.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum();
    (tot > 0.0).then(|| 1.0 - res / tot)
}

// ---- learners ----

/// All training rows ordered by (squared distance, index), first `k`.
pub fn knn_brute(train: &Matrix, q: &[f64], k: usize) -> Vec<(f64, u32)> {
    let mut all: Vec<(f64, u32)> = (0..train.n_rows())
        .map(|i| {
            let d: f64 = train.row(i).iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
            (d, i as u32)
        })
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.truncate(k);
    all
}

/// Squared-error reduction of splitting `y` into `left` / rest.
pub fn sse_reduction(y: &[f64], left: &[bool]) -> f64 {
    let sse = |v: &[f64]| {
        if v.is_empty() {
            return 0.0;
        }
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>()
    };
    let l: Vec<f64> = y.iter().zip(left).filter(|(_, &b)| b).map(|(v, _)| *v).collect();
    let r: Vec<f64> = y.iter().zip(left).filter(|(_, &b)| !b).map(|(v, _)| *v).collect();
    sse(y) - sse(&l) - sse(&r)
}

/// Best reduction over every feature and every midpoint between adjacent
/// distinct values, with both children holding at least `min_leaf` rows.
pub fn best_split_exhaustive(x: &Matrix, y: &[f64], min_leaf: usize) -> Option<(usize, f64, f64)> {
    let mut best: Option<(usize, f64, f64)> = None;
    for j in 0..x.n_cols() {
        let mut vals: Vec<f64> = (0..x.n_rows()).map(|i| x.get(i, j)).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let thr = (w[0] + w[1]) / 2.0;
            let left: Vec<bool> = (0..x.n_rows()).map(|i| x.get(i, j) <= thr).collect();
            let nl = left.iter().filter(|&&b| b).count();
            if nl < min_leaf || x.n_rows() - nl < min_leaf {
                continue;
            }
            let g = sse_reduction(y, &left);
            if best.map_or(true, |b| g > b.2) {
                best = Some((j, thr, g));
            }
        }
    }
    best
}

/// Central differences of the network loss in every parameter.
pub fn fd_gradient(net: &Mlp, x: &ndarray::Array2<f64>, y: &[f64], h: f64) -> Vec<f64> {
    let base = net.params_flat();
    let mut probe = net.clone();
    let mut g = vec![0.0; base.len()];
    for k in 0..base.len() {
        let mut p = base.clone();
        p[k] = base[k] + h;
        probe.set_params_flat(&p);
        let up = probe.loss_and_gradient(x.view(), y).0;
        p[k] = base[k] - h;
        probe.set_params_flat(&p);
        let down = probe.loss_and_gradient(x.view(), y).0;
        g[k] = (up - down) / (2.0 * h);
    }
    g
}

// ---- surface fit ----

pub type Point = (f64, f64);

fn dist(a: Point, b: Point) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Weights and multiplier of the bordered system by a dense LU solve.
pub fn dense_weights(target: Point, gauges: &[Point]) -> (Vec<f64>, f64) {
    let n = gauges.len();
    if n == 1 {
        return (vec![1.0], 0.0);
    }
    let a = DMatrix::from_fn(n + 1, n + 1, |i, j| match (i < n, j < n) {
        (true, true) => dist(gauges[i], gauges[j]),
        (false, false) => 0.0,
        _ => 1.0,
    });
    let b = DVector::from_fn(n + 1, |i, _| if i < n { dist(target, gauges[i]) } else { 1.0 });
    let x = a.full_piv_lu().solve(&b).expect("non-singular bordered system");
    (x.iter().take(n).copied().collect(), x[n])
}

/// `max |A·[w; λ] − rhs|` of the bordered system.
pub fn bordered_residual(target: Point, gauges: &[Point], w: &[f64], lagrange: f64) -> f64 {
    let n = gauges.len();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let lhs: f64 = (0..n).map(|j| dist(gauges[i], gauges[j]) * w[j]).sum::<f64>() + lagrange;
        worst = worst.max((lhs - dist(target, gauges[i])).abs());
    }
    worst.max((w.iter().sum::<f64>() - 1.0).abs())
}

/// The removal loop with the dense solver: `(kept indices, weights, passes)`.
pub fn prune_reference(target: Point, gauges: &[Point], threshold: f64) -> (Vec<usize>, Vec<f64>, usize) {
    let mut kept: Vec<usize> = (0..gauges.len()).collect();
    let mut passes = 0;
    loop {
        let pts: Vec<Point> = kept.iter().map(|&i| gauges[i]).collect();
        let (w, _) = dense_weights(target, &pts);
        if kept.len() == 1 || w.iter().all(|&v| v >= threshold) {
            return (kept, w, passes);
        }
        kept = kept.iter().zip(&w).filter(|(_, &v)| v >= threshold).map(|(&i, _)| i).collect();
        passes += 1;
    }
}

// ---- pipeline ----

pub struct StraightLineRun {
    pub predictions: Vec<f64>,
    /// Class given by the winning classifier to each sample.
    pub classes: Vec<bool>,
    pub fold_reports: Vec<MetricReport>,
    pub class_scores: Vec<Vec<f64>>,
    pub reg_scores: Vec<Vec<Option<f64>>>,
    pub classifier: Family,
    pub regressor: Option<Family>,
}

fn min_max(train: &Matrix, x: &Matrix) -> Matrix {
    let d = train.n_cols();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for i in 0..train.n_rows() {
        for j in 0..d {
            lo[j] = lo[j].min(train.get(i, j));
            hi[j] = hi[j].max(train.get(i, j));
        }
    }
    let mut out = x.clone();
    for i in 0..x.n_rows() {
        for j in 0..d {
            let r = hi[j] - lo[j];
            out.set(i, j, if r > 0.0 { (x.get(i, j) - lo[j]) / r } else { 0.0 });
        }
    }
    out
}

fn argbest(scores: &[Option<f64>], maximise: bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        let Some(s) = *s else { continue };
        let take = match best {
            None => true,
            Some(b) => {
                let cur = scores[b].unwrap();
                if maximise {
                    s > cur
                } else {
                    s < cur
                }
            }
        };
        if take {
            best = Some(i);
        }
    }
    best
}

fn mean_of(v: &[Option<f64>]) -> Option<f64> {
    let p: Vec<f64> = v.iter().flatten().copied().collect();
    (!p.is_empty()).then(|| p.iter().sum::<f64>() / p.len() as f64)
}

/// Steps (1)–(6) one fold and one family at a time.
pub fn straight_line(table: &SeriesTable, store: &TunedStore, cfg: &HurdleConfig) -> StraightLineRun {
    let prepared = prepare_table(table, cfg).unwrap();
    let site = prepared.site_id().to_string();
    let frame = Frame::from_table(&prepared);
    let n = frame.len();
    let plan = make_folds(n, cfg.n_folds, cfg.fold_seed).unwrap();
    let fams = &cfg.families;
    let params = |f: Family, t: Task| store.params(&site, f, t).unwrap().clone();

    struct Fold {
        train_x: Matrix,
        train_y: Vec<f64>,
        test_x: Matrix,
        test_y: Vec<f64>,
        test_idx: Vec<usize>,
    }
    let mut folds = Vec::new();
    for k in 0..cfg.n_folds {
        let test_idx: Vec<usize> = (0..n).filter(|&i| plan.assignment[i] == k).collect();
        let train_idx: Vec<usize> = (0..n).filter(|&i| plan.assignment[i] != k).collect();
        let complete: Vec<usize> =
            train_idx.iter().copied().filter(|&i| frame.x.row(i).iter().all(|v| !v.is_nan())).collect();
        let mut test_x = frame.x.select_rows(&test_idx);
        if test_x.as_slice().iter().any(|v| v.is_nan()) {
            let icfg = ImputerConfig { seed: imputer_seed(cfg.model_seed, k), ..cfg.imputer.clone() };
            let imp = fit_imputer(&frame.x.select_rows(&train_idx), &frame.feature_names, &icfg).unwrap();
            test_x = imp.impute_rows(&test_x).unwrap();
        }
        let raw_train = frame.x.select_rows(&complete);
        folds.push(Fold {
            test_x: min_max(&raw_train, &test_x),
            train_x: min_max(&raw_train, &raw_train),
            train_y: complete.iter().map(|&i| frame.y[i]).collect(),
            test_y: test_idx.iter().map(|&i| frame.y[i]).collect(),
            test_idx,
        });
    }

    let bin = |v: &[f64]| -> Vec<f64> { v.iter().map(|&a| if a > 0.0 { 1.0 } else { 0.0 }).collect() };
    let mut class_pred = Vec::new();
    let mut class_scores = Vec::new();
    for (k, f) in folds.iter().enumerate() {
        let mut preds = Vec::new();
        let mut scores = Vec::new();
        for &fam in fams {
            let spec = LearnerSpec::new(Task::Classify, params(fam, Task::Classify), model_seed(cfg.model_seed, k, fam, Task::Classify));
            let p = learners::fit(&spec, &f.train_x, &bin(&f.train_y)).unwrap().predict(&f.test_x).unwrap();
            let t = bin(&f.test_y);
            let hits = t.iter().zip(&p).filter(|(a, b)| (**a > 0.5) == (**b > 0.5)).count();
            scores.push(100.0 * hits as f64 / t.len() as f64);
            preds.push(p);
        }
        class_pred.push(preds);
        class_scores.push(scores);
    }
    let means: Vec<Option<f64>> =
        (0..fams.len()).map(|j| mean_of(&class_scores.iter().map(|s| Some(s[j])).collect::<Vec<_>>())).collect();
    let wc = argbest(&means, true).unwrap();

    let mut reg_pred: Vec<Vec<Option<Vec<f64>>>> = Vec::new();
    let mut reg_scores = Vec::new();
    for (k, f) in folds.iter().enumerate() {
        let rain: Vec<usize> = (0..f.train_y.len()).filter(|&i| f.train_y[i] > 0.0).collect();
        let wet: Vec<usize> = (0..f.test_y.len()).filter(|&i| class_pred[k][wc][i] > 0.5).collect();
        if wet.is_empty() {
            reg_pred.push(vec![None; fams.len()]);
            reg_scores.push(vec![None; fams.len()]);
            continue;
        }
        let xr = f.train_x.select_rows(&rain);
        let yr: Vec<f64> = rain.iter().map(|&i| f.train_y[i]).collect();
        let xt = f.test_x.select_rows(&wet);
        let yt: Vec<f64> = wet.iter().map(|&i| f.test_y[i]).collect();
        let mut preds = Vec::new();
        let mut scores = Vec::new();
        for &fam in fams {
            let spec = LearnerSpec::new(Task::Regress, params(fam, Task::Regress), model_seed(cfg.model_seed, k, fam, Task::Regress));
            let p: Vec<f64> = learners::fit(&spec, &xr, &yr).unwrap().predict(&xt).unwrap().iter().map(|v| v.max(0.0)).collect();
            scores.push(Some(rmse_reference(&yt, &p)));
            preds.push(Some(p));
        }
        reg_pred.push(preds);
        reg_scores.push(scores);
    }
    let rmeans: Vec<Option<f64>> =
        (0..fams.len()).map(|j| mean_of(&reg_scores.iter().map(|s| s[j]).collect::<Vec<_>>())).collect();
    let wr = argbest(&rmeans, false);

    let mut predictions = vec![0.0; n];
    let mut classes = vec![false; n];
    let mut fold_reports = Vec::new();
    for (k, f) in folds.iter().enumerate() {
        let mut out = vec![0.0; f.test_y.len()];
        if let Some(w) = wr {
            if let Some(reg) = &reg_pred[k][w] {
                let wet: Vec<usize> = (0..f.test_y.len()).filter(|&i| class_pred[k][wc][i] > 0.5).collect();
                for (j, &i) in wet.iter().enumerate() {
                    out[i] = reg[j];
                }
            }
        }
        for (j, &i) in f.test_idx.iter().enumerate() {
            predictions[i] = out[j];
            classes[i] = class_pred[k][wc][j] > 0.5;
        }
        fold_reports.push(MetricReport::from_amounts(&f.test_y, &out).unwrap());
    }
    StraightLineRun {
        predictions,
        classes,
        fold_reports,
        class_scores,
        reg_scores,
        classifier: fams[wc],
        regressor: wr.map(|w| fams[w]),
    }
}
