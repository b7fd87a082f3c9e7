//! Classification and regression scores, and fold averaging.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn from_labels(truth: &[bool], pred: &[bool]) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::LengthMismatch { left: truth.len(), right: pred.len() });
        }
        let mut c = Self::default();
        for (&t, &p) in truth.iter().zip(pred) {
            match (t, p) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// The same counts with class 0 treated as the positive class.
    pub fn flipped(&self) -> Self {
        Self { tp: self.tn, fp: self.fn_, tn: self.tp, fn_: self.fp }
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    /// Percent of samples labelled correctly.
    pub fn accuracy(&self) -> f64 {
        100.0 * ratio(self.tp + self.tn, self.total())
    }

    /// Per-class F1 weighted by class support.
    pub fn weighted_f1(&self) -> f64 {
        let n = self.total();
        if n == 0 {
            return 0.0;
        }
        let support1 = (self.tp + self.fn_) as f64;
        let support0 = (self.tn + self.fp) as f64;
        (support1 * self.f1() + support0 * self.flipped().f1()) / n as f64
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub counts: ConfusionCounts,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub weighted_f1: f64,
}

pub fn classification_metrics(truth: &[bool], pred: &[bool]) -> Result<ClassificationMetrics> {
    if truth.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let counts = ConfusionCounts::from_labels(truth, pred)?;
    Ok(ClassificationMetrics {
        counts,
        accuracy: counts.accuracy(),
        precision: counts.precision(),
        recall: counts.recall(),
        f1: counts.f1(),
        weighted_f1: counts.weighted_f1(),
    })
}

pub fn rmse(truth: &[f64], pred: &[f64]) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(Error::LengthMismatch { left: truth.len(), right: pred.len() });
    }
    if truth.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let sse: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p) * (t - p)).sum();
    Ok((sse / truth.len() as f64).sqrt())
}

/// `1 - SSres/SStot`; `None` when the truth is constant.
pub fn r_squared(truth: &[f64], pred: &[f64]) -> Result<Option<f64>> {
    if truth.len() != pred.len() {
        return Err(Error::LengthMismatch { left: truth.len(), right: pred.len() });
    }
    if truth.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: truth.len() });
    }
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean) * (t - mean)).sum();
    if ss_tot == 0.0 {
        return Ok(None);
    }
    let ss_res: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p) * (t - p)).sum();
    Ok(Some(1.0 - ss_res / ss_tot))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub r2: Option<f64>,
    pub rmse: f64,
}

pub fn regression_metrics(truth: &[f64], pred: &[f64]) -> Result<RegressionMetrics> {
    Ok(RegressionMetrics { r2: r_squared(truth, pred)?, rmse: rmse(truth, pred)? })
}

/// Scores for one fold. Classes are derived from the amounts (`> 0` is rain).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n: usize,
    pub counts: ConfusionCounts,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub weighted_f1: f64,
    pub r2: Option<f64>,
    pub rmse: f64,
    /// Per-sample `prediction - truth` in mm.
    pub errors: Vec<f64>,
}

impl MetricReport {
    pub fn from_amounts(truth: &[f64], pred: &[f64]) -> Result<Self> {
        let t: Vec<bool> = truth.iter().map(|&v| v > 0.0).collect();
        let p: Vec<bool> = pred.iter().map(|&v| v > 0.0).collect();
        let c = classification_metrics(&t, &p)?;
        let r2 = if truth.len() < 2 { None } else { r_squared(truth, pred)? };
        let rmse = rmse(truth, pred)?;
        Ok(Self {
            n: truth.len(),
            counts: c.counts,
            accuracy: c.accuracy,
            precision: c.precision,
            recall: c.recall,
            f1: c.f1,
            weighted_f1: c.weighted_f1,
            r2,
            rmse,
            errors: pred.iter().zip(truth).map(|(p, t)| p - t).collect(),
        })
    }
}

/// Mean and population standard deviation of one metric across folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub per_fold: Vec<Option<f64>>,
    /// Folds where the metric is undefined and left out of mean and sd.
    pub n_missing: usize,
}

impl MetricSummary {
    pub fn from_values(per_fold: Vec<Option<f64>>) -> Self {
        let present: Vec<f64> = per_fold.iter().flatten().copied().collect();
        let n_missing = per_fold.len() - present.len();
        if present.is_empty() {
            return Self { mean: None, sd: None, per_fold, n_missing };
        }
        let n = present.len() as f64;
        let mean = present.iter().sum::<f64>() / n;
        let var = present.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self { mean: Some(mean), sd: Some(var.sqrt()), per_fold, n_missing }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedMetrics {
    pub acc: MetricSummary,
    pub prec: MetricSummary,
    pub recall: MetricSummary,
    pub f1: MetricSummary,
    pub weighted_f1: MetricSummary,
    pub r2: MetricSummary,
    pub rmse: MetricSummary,
}

pub fn average_folds(reports: &[MetricReport]) -> Result<AveragedMetrics> {
    if reports.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let col = |f: &dyn Fn(&MetricReport) -> Option<f64>| MetricSummary::from_values(reports.iter().map(f).collect());
    Ok(AveragedMetrics {
        acc: col(&|r| Some(r.accuracy)),
        prec: col(&|r| Some(r.precision)),
        recall: col(&|r| Some(r.recall)),
        f1: col(&|r| Some(r.f1)),
        weighted_f1: col(&|r| Some(r.weighted_f1)),
        r2: col(&|r| r.r2),
        rmse: col(&|r| Some(r.rmse)),
    })
}
