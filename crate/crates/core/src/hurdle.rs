//! Cross-validated two-step imputation: classify wet/dry, regress the amount
//! of predicted-wet samples, clip, reassemble, score.

use serde::{Deserialize, Serialize};

use crate::dataset::{pool_region, FeatureSet, RegionSpec, SeriesTable, DEFAULT_CORE_COLUMNS};
use crate::error::{Error, Result};
use crate::imputer::{fit_imputer, ImputerConfig};
use crate::learners::{self, Family, FittedModel, LearnerSpec, Task, ALL_FAMILIES};
use crate::matrix::Matrix;
use crate::metrics::{average_folds, AveragedMetrics, ConfusionCounts, MetricReport};
use crate::preprocess::{add_cyclic_features, make_folds, state_digest, to_binary, FoldPlan, Frame, MinMaxScaler};
use crate::tuning::TunedStore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HurdleConfig {
    pub n_folds: usize,
    pub fold_seed: u64,
    pub model_seed: u64,
    pub feature_set: FeatureSet,
    pub cyclic: bool,
    pub core_columns: Vec<String>,
    pub imputer: ImputerConfig,
    /// Families competing at each step, in tie-break order.
    pub families: Vec<Family>,
}

impl Default for HurdleConfig {
    fn default() -> Self {
        Self {
            n_folds: 5,
            fold_seed: 0,
            model_seed: 0,
            feature_set: FeatureSet::StationAndGauges,
            cyclic: false,
            core_columns: DEFAULT_CORE_COLUMNS.iter().map(|s| s.to_string()).collect(),
            imputer: ImputerConfig::default(),
            families: ALL_FAMILIES.to_vec(),
        }
    }
}

impl HurdleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_folds < 2 {
            return Err(Error::Config("n_folds must be >= 2".into()));
        }
        if self.families.is_empty() {
            return Err(Error::Config("at least one learner family is required".into()));
        }
        let mut sorted = self.families.clone();
        sorted.sort();
        sorted.dedup();
        if sorted != self.families {
            return Err(Error::Config("families must be unique and listed in tie-break order".into()));
        }
        Ok(())
    }
}

/// SplitMix64 finaliser over `base` and a list of tags.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut z = base;
    for &t in tags {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(t.wrapping_mul(0xD6E8_FEB8_6659_FD93));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

fn family_tag(f: Family) -> u64 {
    ALL_FAMILIES.iter().position(|&g| g == f).unwrap() as u64
}

fn task_tag(t: Task) -> u64 {
    match t {
        Task::Classify => 0,
        Task::Regress => 1,
    }
}

/// Seed of the model of `family` for `task` on `fold`.
pub fn model_seed(base: u64, fold: usize, family: Family, task: Task) -> u64 {
    derive_seed(base, &[fold as u64, family_tag(family), task_tag(task)])
}

/// Seed of the imputer of `fold`.
pub fn imputer_seed(base: u64, fold: usize) -> u64 {
    derive_seed(base, &[fold as u64, 99])
}

/// Applies the feature-set selection and, optionally, the cyclic time columns.
pub fn prepare_table(table: &SeriesTable, config: &HurdleConfig) -> Result<SeriesTable> {
    let selected = table.select_features(config.feature_set, &config.core_columns);
    let out = if config.cyclic { add_cyclic_features(&selected)? } else { selected };
    if out.columns().is_empty() {
        return Err(Error::InvalidTable(format!(
            "feature set {:?} leaves no columns for site {}",
            config.feature_set,
            table.site_id()
        )));
    }
    Ok(out)
}

/// Per-family mean score across folds and the selected family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSelection {
    pub families: Vec<Family>,
    /// `per_fold[i][f]`: score of family `f` on fold `i`; `None` where the
    /// fold had nothing to score.
    pub per_fold: Vec<Vec<Option<f64>>>,
    pub mean: Vec<Option<f64>>,
    pub winner: Option<Family>,
    /// Best family of each fold taken on its own, for reference.
    pub per_fold_winner: Vec<Option<Family>>,
}

fn better(a: f64, b: f64, maximise: bool) -> bool {
    if maximise {
        a > b
    } else {
        a < b
    }
}

/// Index of the best score; earlier entries win ties. `None` if all missing.
pub fn select_best(scores: &[Option<f64>], maximise: bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        if let Some(s) = s {
            if best.map_or(true, |b| better(*s, scores[b].unwrap(), maximise)) {
                best = Some(i);
            }
        }
    }
    best
}

impl StepSelection {
    pub fn new(families: Vec<Family>, per_fold: Vec<Vec<Option<f64>>>, maximise: bool) -> Self {
        let mean: Vec<Option<f64>> = (0..families.len())
            .map(|f| {
                let v: Vec<f64> = per_fold.iter().filter_map(|row| row[f]).collect();
                (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
            })
            .collect();
        let winner = select_best(&mean, maximise).map(|i| families[i]);
        let per_fold_winner = per_fold.iter().map(|row| select_best(row, maximise).map(|i| families[i])).collect();
        Self { families, per_fold, mean, winner, per_fold_winner }
    }
}

/// Class-1 positions take the clipped regression value, the rest are 0.
pub fn reassemble(classes: &[f64], regressed: &[f64]) -> Result<Vec<f64>> {
    let n_wet = classes.iter().filter(|&&c| c > 0.5).count();
    if n_wet != regressed.len() {
        return Err(Error::LengthMismatch { left: n_wet, right: regressed.len() });
    }
    let mut it = regressed.iter();
    Ok(classes.iter().map(|&c| if c > 0.5 { it.next().unwrap().max(0.0) } else { 0.0 }).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HurdleFold {
    pub fold: usize,
    /// Sample indices scored in this fold, ascending.
    pub test_indices: Vec<usize>,
    pub n_train_complete: usize,
    pub n_train_rain: usize,
    pub n_imputed_cells: usize,
    pub scaler_digest: String,
    pub imputer_digest: Option<String>,
    pub classifier: Family,
    pub regressor: Option<Family>,
    /// Rows the capped SVM actually trained on, per step.
    pub svm_train_rows: Vec<(Task, usize)>,
    pub predictions: Vec<f64>,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HurdleRun {
    pub site_id: String,
    pub feature_names: Vec<String>,
    pub config: HurdleConfig,
    pub fold_plan: FoldPlan,
    pub fold_plan_digest: String,
    pub classification: StepSelection,
    pub regression: StepSelection,
    pub folds: Vec<HurdleFold>,
    /// Final prediction of every sample, in sample order.
    pub predictions: Vec<f64>,
    pub averaged: AveragedMetrics,
}

/// Scaled, imputed matrices of one fold.
struct FoldData {
    train_x: Matrix,
    train_y: Vec<f64>,
    test_x: Matrix,
    test_y: Vec<f64>,
    test_indices: Vec<usize>,
    n_imputed_cells: usize,
    scaler_digest: String,
    imputer_digest: Option<String>,
}

fn prepare_fold(frame: &Frame, plan: &FoldPlan, fold: usize, config: &HurdleConfig) -> Result<FoldData> {
    let fold_err = |e: Error| Error::Fold { fold, reason: e.to_string() };
    let train_idx = plan.train_indices(fold);
    let test_idx = plan.test_indices(fold);
    let train_all = frame.x.select_rows(&train_idx);
    let complete: Vec<usize> = train_idx.iter().copied().filter(|&i| frame.x.row_is_complete(i)).collect();
    if complete.is_empty() {
        return Err(Error::Fold { fold, reason: "no complete training rows".into() });
    }
    let mut test_x = frame.x.select_rows(&test_idx);
    let n_imputed_cells = test_x.as_slice().iter().filter(|v| v.is_nan()).count();
    let mut imputer_digest = None;
    if n_imputed_cells > 0 {
        let cfg = ImputerConfig { seed: imputer_seed(config.model_seed, fold), ..config.imputer.clone() };
        let imputer = fit_imputer(&train_all, &frame.feature_names, &cfg).map_err(fold_err)?;
        test_x = imputer.impute_rows(&test_x)?;
        imputer_digest = Some(imputer.digest());
    }
    let train_x = frame.x.select_rows(&complete);
    let scaler = MinMaxScaler::fit(&train_x, &frame.feature_names).map_err(fold_err)?;
    Ok(FoldData {
        train_x: scaler.transform(&train_x)?,
        train_y: complete.iter().map(|&i| frame.y[i]).collect(),
        test_x: scaler.transform(&test_x)?,
        test_y: test_idx.iter().map(|&i| frame.y[i]).collect(),
        test_indices: test_idx,
        n_imputed_cells,
        scaler_digest: state_digest(&scaler),
        imputer_digest,
    })
}

fn svm_rows(model: &FittedModel) -> Option<usize> {
    match model {
        FittedModel::Svm(m) => Some(m.train_rows),
        _ => None,
    }
}

fn accuracy(truth: &[f64], pred: &[f64]) -> f64 {
    let t: Vec<bool> = truth.iter().map(|&v| v > 0.5).collect();
    let p: Vec<bool> = pred.iter().map(|&v| v > 0.5).collect();
    ConfusionCounts::from_labels(&t, &p).expect("equal lengths").accuracy()
}

fn rmse_of(truth: &[f64], pred: &[f64]) -> f64 {
    let sse: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p) * (t - p)).sum();
    (sse / truth.len() as f64).sqrt()
}

fn select_rows_vec(v: &[f64], rows: &[usize]) -> Vec<f64> {
    rows.iter().map(|&r| v[r]).collect()
}

/// Runs the cross-validated two-step pipeline on one (possibly pooled) table.
/// Tuned parameters are looked up under the table's site id.
pub fn run_hurdle(table: &SeriesTable, store: &TunedStore, config: &HurdleConfig) -> Result<HurdleRun> {
    config.validate()?;
    let prepared = prepare_table(table, config)?;
    let site = prepared.site_id().to_string();
    let frame = Frame::from_table(&prepared);
    if frame.is_empty() {
        return Err(Error::EmptyData);
    }
    let mut params = Vec::new();
    for &f in &config.families {
        for task in [Task::Classify, Task::Regress] {
            params.push(((f, task), store.params(&site, f, task)?.clone()));
        }
    }
    let param = |f: Family, t: Task| &params.iter().find(|(k, _)| *k == (f, t)).unwrap().1;
    let plan = make_folds(frame.len(), config.n_folds, config.fold_seed)?;
    let families = config.families.clone();

    let mut data = Vec::with_capacity(plan.n_folds);
    for fold in 0..plan.n_folds {
        log::info!("{site}: preparing fold {}/{}", fold + 1, plan.n_folds);
        data.push(prepare_fold(&frame, &plan, fold, config)?);
    }

    // classification: every family on every fold
    let mut class_preds: Vec<Vec<Vec<f64>>> = Vec::with_capacity(plan.n_folds);
    let mut class_scores = Vec::with_capacity(plan.n_folds);
    let mut svm_rows_c = vec![None; plan.n_folds];
    for (fold, d) in data.iter().enumerate() {
        let y_bin = to_binary(&d.train_y);
        if !y_bin.iter().any(|&v| v == 1.0) {
            return Err(Error::Fold { fold, reason: "training set has no rain rows".into() });
        }
        let truth_bin = to_binary(&d.test_y);
        let mut preds = Vec::with_capacity(families.len());
        let mut scores = Vec::with_capacity(families.len());
        for &f in &families {
            log::info!("{site}: fold {} classify {}", fold + 1, f.short_name());
            let spec = LearnerSpec::new(Task::Classify, param(f, Task::Classify).clone(), model_seed(config.model_seed, fold, f, Task::Classify));
            let model = learners::fit(&spec, &d.train_x, &y_bin).map_err(|e| Error::Fold { fold, reason: format!("{f}: {e}") })?;
            if let Some(n) = svm_rows(&model) {
                svm_rows_c[fold] = Some(n);
            }
            let p = model.predict(&d.test_x)?;
            scores.push(Some(accuracy(&truth_bin, &p)));
            preds.push(p);
        }
        class_preds.push(preds);
        class_scores.push(scores);
    }
    let classification = StepSelection::new(families.clone(), class_scores, true);
    let winner_c = classification.winner.expect("every family scored");
    let wc = families.iter().position(|&f| f == winner_c).unwrap();

    // regression: rain rows of the training set, predicted-wet test rows
    let mut reg_preds: Vec<Vec<Option<Vec<f64>>>> = Vec::with_capacity(plan.n_folds);
    let mut reg_scores = Vec::with_capacity(plan.n_folds);
    let mut svm_rows_r = vec![None; plan.n_folds];
    let mut n_rain = Vec::with_capacity(plan.n_folds);
    for (fold, d) in data.iter().enumerate() {
        let rain: Vec<usize> = (0..d.train_y.len()).filter(|&i| d.train_y[i] > 0.0).collect();
        n_rain.push(rain.len());
        let wet: Vec<usize> = (0..d.test_y.len()).filter(|&i| class_preds[fold][wc][i] > 0.5).collect();
        if wet.is_empty() {
            reg_preds.push(vec![None; families.len()]);
            reg_scores.push(vec![None; families.len()]);
            continue;
        }
        let x_train = d.train_x.select_rows(&rain);
        let y_train = select_rows_vec(&d.train_y, &rain);
        let x_test = d.test_x.select_rows(&wet);
        let y_test = select_rows_vec(&d.test_y, &wet);
        let mut preds = Vec::with_capacity(families.len());
        let mut scores = Vec::with_capacity(families.len());
        for &f in &families {
            log::info!("{site}: fold {} regress {}", fold + 1, f.short_name());
            let spec = LearnerSpec::new(Task::Regress, param(f, Task::Regress).clone(), model_seed(config.model_seed, fold, f, Task::Regress));
            let model = learners::fit(&spec, &x_train, &y_train).map_err(|e| Error::Fold { fold, reason: format!("{f}: {e}") })?;
            if let Some(n) = svm_rows(&model) {
                svm_rows_r[fold] = Some(n);
            }
            let p: Vec<f64> = model.predict(&x_test)?.into_iter().map(|v| v.max(0.0)).collect();
            scores.push(Some(rmse_of(&y_test, &p)));
            preds.push(Some(p));
        }
        reg_preds.push(preds);
        reg_scores.push(scores);
    }
    let regression = StepSelection::new(families.clone(), reg_scores, false);
    let wr = regression.winner.map(|w| families.iter().position(|&f| f == w).unwrap());

    let mut predictions = vec![0.0; frame.len()];
    let mut folds = Vec::with_capacity(plan.n_folds);
    for (fold, d) in data.into_iter().enumerate() {
        let classes = &class_preds[fold][wc];
        let regressed = match (wr, &reg_preds[fold]) {
            (Some(w), preds) if preds[w].is_some() => preds[w].clone().unwrap(),
            _ => Vec::new(),
        };
        let final_pred = reassemble(classes, &regressed)?;
        for (k, &i) in d.test_indices.iter().enumerate() {
            predictions[i] = final_pred[k];
        }
        let report = MetricReport::from_amounts(&d.test_y, &final_pred).map_err(|e| Error::Fold { fold, reason: e.to_string() })?;
        let mut svm_train_rows = Vec::new();
        if let Some(n) = svm_rows_c[fold] {
            svm_train_rows.push((Task::Classify, n));
        }
        if let Some(n) = svm_rows_r[fold] {
            svm_train_rows.push((Task::Regress, n));
        }
        folds.push(HurdleFold {
            fold,
            test_indices: d.test_indices,
            n_train_complete: d.train_y.len(),
            n_train_rain: n_rain[fold],
            n_imputed_cells: d.n_imputed_cells,
            scaler_digest: d.scaler_digest,
            imputer_digest: d.imputer_digest,
            classifier: winner_c,
            regressor: regression.winner,
            svm_train_rows,
            predictions: final_pred,
            report,
        });
    }
    let averaged = average_folds(&folds.iter().map(|f| f.report.clone()).collect::<Vec<_>>())?;
    Ok(HurdleRun {
        site_id: site,
        feature_names: frame.feature_names.clone(),
        config: config.clone(),
        fold_plan_digest: state_digest(&plan),
        fold_plan: plan,
        classification,
        regression,
        folds,
        predictions,
        averaged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteResult {
    pub site_id: String,
    pub folds: Vec<Option<MetricReport>>,
    pub averaged: AveragedMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionalRun {
    pub region: String,
    pub pooled: HurdleRun,
    /// Site of each pooled sample.
    pub sample_sites: Vec<String>,
    pub sites: Vec<SiteResult>,
}

/// Scores of the samples of one site, fold by fold.
pub fn site_reports(run: &HurdleRun, truth: &[f64], sample_site: &[usize], site: usize) -> Result<Vec<Option<MetricReport>>> {
    run.folds
        .iter()
        .map(|f| {
            let idx: Vec<usize> = f.test_indices.iter().copied().filter(|&i| sample_site[i] == site).collect();
            if idx.is_empty() {
                return Ok(None);
            }
            let t = select_rows_vec(truth, &idx);
            let p = select_rows_vec(&run.predictions, &idx);
            MetricReport::from_amounts(&t, &p).map(Some)
        })
        .collect()
}

/// Pools the member sites, runs one cross-validated pipeline on the pool and
/// scores each member separately. Tuned parameters are looked up under the
/// region name.
pub fn run_regional(tables: &[SeriesTable], spec: &RegionSpec, store: &TunedStore, config: &HurdleConfig) -> Result<RegionalRun> {
    spec.validate()?;
    let pooled_table = pool_region(tables, spec)?;
    let pooled = run_hurdle(&pooled_table, store, config)?;
    let frame = Frame::from_table(&prepare_table(&pooled_table, config)?);
    let mut sites = Vec::new();
    for (s, id) in frame.site_ids.iter().enumerate() {
        let folds = site_reports(&pooled, &frame.y, &frame.site, s)?;
        let present: Vec<MetricReport> = folds.iter().flatten().cloned().collect();
        if present.is_empty() {
            return Err(Error::Pooling(format!("site {id} has no samples in the pooled window")));
        }
        sites.push(SiteResult { site_id: id.clone(), averaged: average_folds(&present)?, folds });
    }
    Ok(RegionalRun {
        region: spec.name.clone(),
        sample_sites: frame.site.iter().map(|&s| frame.site_ids[s].clone()).collect(),
        pooled,
        sites,
    })
}
