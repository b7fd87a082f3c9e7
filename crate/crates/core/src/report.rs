//! Report documents, run manifests, side-by-side comparison and series export.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::io::format_timestamp;
use crate::dataset::SeriesTable;
use crate::error::{Error, Result};
use crate::hurdle::{HurdleRun, RegionalRun, SiteResult, StepSelection};
use crate::learners::{Family, Task};
use crate::metrics::{AveragedMetrics, MetricReport, MetricSummary};
use crate::preprocess::{Frame, FoldPlan};
use crate::surface::BaselineRun;

pub const REPORT_VERSION: u32 = 1;

/// Metric keys in report order.
pub const METRIC_KEYS: [&str; 7] = ["acc", "prec", "recall", "f1", "weighted_f1", "r2", "rmse"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub tool_version: String,
    pub config: serde_json::Value,
    /// Input name to SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
}

impl RunManifest {
    pub fn new(subcommand: &str, config: serde_json::Value) -> Self {
        Self {
            subcommand: subcommand.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config,
            inputs: BTreeMap::new(),
            seeds: BTreeMap::new(),
        }
    }

    pub fn add_input(&mut self, name: impl Into<String>, path: &Path) -> Result<()> {
        self.inputs.insert(name.into(), file_digest(path)?);
        Ok(())
    }
}

pub fn file_digest(path: &Path) -> Result<String> {
    let mut h = Sha256::new();
    h.update(std::fs::read(path)?);
    Ok(hex::encode(h.finalize()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    TwoStep,
    SurfaceFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub n_test: usize,
    pub classifier: Option<Family>,
    pub regressor: Option<Family>,
    pub svm_train_rows: Vec<(Task, usize)>,
    pub gauge_count: Option<usize>,
    pub gauge_ids: Vec<String>,
    pub n_unavailable: usize,
    pub imputed_cells: usize,
    pub metrics: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selections {
    pub classification: StepSelection,
    pub regression: StepSelection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: u32,
    pub method: Method,
    pub site_id: String,
    pub manifest: RunManifest,
    pub fold_plan_digest: String,
    pub fold_plan: FoldPlan,
    pub feature_names: Vec<String>,
    pub metrics: AveragedMetrics,
    pub folds: Vec<FoldSummary>,
    pub selection: Option<Selections>,
    /// Member-site scores of a pooled run.
    pub sites: Vec<SiteResult>,
    /// One entry per sample of the fold plan; `None` where no estimate exists.
    pub predictions: Vec<Option<f64>>,
}

impl Report {
    pub fn from_hurdle(run: &HurdleRun, manifest: RunManifest) -> Self {
        Self {
            version: REPORT_VERSION,
            method: Method::TwoStep,
            site_id: run.site_id.clone(),
            manifest,
            fold_plan_digest: run.fold_plan_digest.clone(),
            fold_plan: run.fold_plan.clone(),
            feature_names: run.feature_names.clone(),
            metrics: run.averaged.clone(),
            folds: run
                .folds
                .iter()
                .map(|f| FoldSummary {
                    fold: f.fold,
                    n_test: f.test_indices.len(),
                    classifier: Some(f.classifier),
                    regressor: f.regressor,
                    svm_train_rows: f.svm_train_rows.clone(),
                    gauge_count: None,
                    gauge_ids: Vec::new(),
                    n_unavailable: 0,
                    imputed_cells: f.n_imputed_cells,
                    metrics: f.report.clone(),
                })
                .collect(),
            selection: Some(Selections {
                classification: run.classification.clone(),
                regression: run.regression.clone(),
            }),
            sites: Vec::new(),
            predictions: run.predictions.iter().map(|&p| Some(p)).collect(),
        }
    }

    pub fn from_regional(run: &RegionalRun, manifest: RunManifest) -> Self {
        let mut r = Self::from_hurdle(&run.pooled, manifest);
        r.site_id = run.region.clone();
        r.sites = run.sites.clone();
        r
    }

    pub fn from_baseline(run: &BaselineRun, plan: &FoldPlan, manifest: RunManifest) -> Self {
        Self {
            version: REPORT_VERSION,
            method: Method::SurfaceFit,
            site_id: run.site_id.clone(),
            manifest,
            fold_plan_digest: crate::preprocess::state_digest(plan),
            fold_plan: plan.clone(),
            feature_names: Vec::new(),
            metrics: run.averaged.clone(),
            folds: run
                .folds
                .iter()
                .enumerate()
                .map(|(i, f)| FoldSummary {
                    fold: i,
                    n_test: f.report.n + f.n_unavailable,
                    classifier: None,
                    regressor: None,
                    svm_train_rows: Vec::new(),
                    gauge_count: Some(f.choice.chosen),
                    gauge_ids: f.choice.gauge_ids.clone(),
                    n_unavailable: f.n_unavailable,
                    imputed_cells: 0,
                    metrics: f.report.clone(),
                })
                .collect(),
            selection: None,
            sites: Vec::new(),
            predictions: run.predictions.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let r: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if r.version != REPORT_VERSION {
            return Err(Error::Config(format!("report version {} is not supported", r.version)));
        }
        Ok(r)
    }
}

pub fn metric<'a>(m: &'a AveragedMetrics, key: &str) -> &'a MetricSummary {
    match key {
        "acc" => &m.acc,
        "prec" => &m.prec,
        "recall" => &m.recall,
        "f1" => &m.f1,
        "weighted_f1" => &m.weighted_f1,
        "r2" => &m.r2,
        "rmse" => &m.rmse,
        other => panic!("unknown metric key {other}"),
    }
}

fn diff(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some(a? - b?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub metric: String,
    pub a: Option<f64>,
    pub b: Option<f64>,
    /// `a - b` of the fold means.
    pub delta: Option<f64>,
    pub per_fold: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub fold_plan_digest: String,
    pub deltas: Vec<MetricDelta>,
}

/// Metric-by-metric `a - b`, refusing reports scored on different folds.
pub fn compare(a: &Report, b: &Report) -> Result<Comparison> {
    if a.fold_plan_digest != b.fold_plan_digest {
        return Err(Error::FoldPlanMismatch { left: a.fold_plan_digest.clone(), right: b.fold_plan_digest.clone() });
    }
    let deltas = METRIC_KEYS
        .iter()
        .map(|&k| {
            let (ma, mb) = (metric(&a.metrics, k), metric(&b.metrics, k));
            MetricDelta {
                metric: k.into(),
                a: ma.mean,
                b: mb.mean,
                delta: diff(ma.mean, mb.mean),
                per_fold: ma.per_fold.iter().zip(&mb.per_fold).map(|(x, y)| diff(*x, *y)).collect(),
            }
        })
        .collect();
    let label = |r: &Report| format!("{} ({})", r.site_id, serde_json::to_value(r.method).unwrap().as_str().unwrap());
    Ok(Comparison { a: label(a), b: label(b), fold_plan_digest: a.fold_plan_digest.clone(), deltas })
}

impl Comparison {
    pub fn to_table(&self) -> String {
        let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        let mut s = format!("a: {}\nb: {}\n{:<12} {:>10} {:>10} {:>10}\n", self.a, self.b, "metric", "a", "b", "a-b");
        for d in &self.deltas {
            s += &format!("{:<12} {:>10} {:>10} {:>10}\n", d.metric, f(d.a), f(d.b), f(d.delta));
        }
        s
    }
}

/// Writes `timestamp,site,truth,prediction` for the table rows whose stamp
/// lies in `window` (inclusive; all rows when `None`). Rows without a sample
/// or estimate leave the prediction empty.
pub fn export_series(
    table: &SeriesTable,
    report: &Report,
    window: Option<(DateTime<Utc>, DateTime<Utc>)>,
    out: &mut dyn Write,
) -> Result<usize> {
    let frame = Frame::from_table(table);
    if frame.len() != report.predictions.len() {
        return Err(Error::LengthMismatch { left: frame.len(), right: report.predictions.len() });
    }
    let mut pred_of_row = vec![None; table.len()];
    for (i, &r) in frame.rows.iter().enumerate() {
        pred_of_row[r] = report.predictions[i];
    }
    let rows: Vec<usize> = (0..table.len())
        .filter(|&r| window.map_or(true, |(lo, hi)| (lo..=hi).contains(&table.timestamps()[r])))
        .collect();
    if rows.is_empty() {
        return Err(Error::domain("window", "selects no rows of the dataset"));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["timestamp", "site", "truth", "prediction"])?;
    let cell = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for &r in &rows {
        let site = &table.segments()[table.site_index_of_row(r)].site_id;
        w.write_record([format_timestamp(&table.timestamps()[r]), site.clone(), cell(table.target()[r]), cell(pred_of_row[r])])?;
    }
    w.flush()?;
    Ok(rows.len())
}
