//! The five learner families behind one fit/predict interface.

pub mod boosting;
pub mod forest;
pub mod grid;
pub mod knn;
pub mod network;
pub mod svm;
pub mod tree;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use boosting::{BoostingParams, GradientBoosting};
pub use forest::{ForestParams, MaxFeatures, RandomForest};
pub use grid::{GridSet, ParamGrid};
pub use knn::{Knn, KnnAlgorithm, KnnParams, KnnWeighting};
pub use network::{Mlp, NetworkParams};
pub use svm::{Kernel, Svm, SvmParams};
pub use tree::{fit_tree, Node, Tree};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Classify,
    Regress,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Classify => "classify",
            Task::Regress => "regress",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classify" => Ok(Task::Classify),
            "regress" => Ok(Task::Regress),
            _ => Err(Error::Config(format!("unknown task '{s}' (classify | regress)"))),
        }
    }
}

/// Learner families, declared in tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "gradient-tree-boosting")]
    Boosting,
    #[serde(rename = "random-forest")]
    Forest,
    #[serde(rename = "k-nearest-neighbours")]
    Knn,
    #[serde(rename = "support-vector-machine")]
    Svm,
    #[serde(rename = "neural-network")]
    Network,
}

pub const ALL_FAMILIES: [Family; 5] = [Family::Boosting, Family::Forest, Family::Knn, Family::Svm, Family::Network];

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Boosting => "gradient-tree-boosting",
            Family::Forest => "random-forest",
            Family::Knn => "k-nearest-neighbours",
            Family::Svm => "support-vector-machine",
            Family::Network => "neural-network",
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Family::Boosting => "boosting",
            Family::Forest => "forest",
            Family::Knn => "knn",
            Family::Svm => "svm",
            Family::Network => "network",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ALL_FAMILIES
            .into_iter()
            .find(|f| f.name() == s || f.short_name() == s)
            .ok_or_else(|| Error::Config(format!("unknown learner family '{s}'")))
    }
}

/// One concrete hyperparameter assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum ParamAssignment {
    #[serde(rename = "gradient-tree-boosting")]
    Boosting(BoostingParams),
    #[serde(rename = "random-forest")]
    Forest(ForestParams),
    #[serde(rename = "k-nearest-neighbours")]
    Knn(KnnParams),
    #[serde(rename = "support-vector-machine")]
    Svm(SvmParams),
    #[serde(rename = "neural-network")]
    Network(NetworkParams),
}

impl ParamAssignment {
    pub fn family(&self) -> Family {
        match self {
            ParamAssignment::Boosting(_) => Family::Boosting,
            ParamAssignment::Forest(_) => Family::Forest,
            ParamAssignment::Knn(_) => Family::Knn,
            ParamAssignment::Svm(_) => Family::Svm,
            ParamAssignment::Network(_) => Family::Network,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ParamAssignment::Boosting(p) => p.validate(),
            ParamAssignment::Forest(p) => p.validate(),
            ParamAssignment::Knn(p) => p.validate(),
            ParamAssignment::Svm(p) => p.validate(),
            ParamAssignment::Network(p) => p.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub task: Task,
    pub params: ParamAssignment,
    pub seed: u64,
}

impl LearnerSpec {
    pub fn new(task: Task, params: ParamAssignment, seed: u64) -> Self {
        Self { task, params, seed }
    }

    pub fn family(&self) -> Family {
        self.params.family()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "model")]
pub enum FittedModel {
    #[serde(rename = "gradient-tree-boosting")]
    Boosting(GradientBoosting),
    #[serde(rename = "random-forest")]
    Forest(RandomForest),
    #[serde(rename = "k-nearest-neighbours")]
    Knn(Knn),
    #[serde(rename = "support-vector-machine")]
    Svm(Svm),
    #[serde(rename = "neural-network")]
    Network(Mlp),
}

fn check_inputs(task: Task, x: &Matrix, y: &[f64]) -> Result<()> {
    if x.n_rows() == 0 || x.n_cols() == 0 {
        return Err(Error::EmptyData);
    }
    if y.len() != x.n_rows() {
        return Err(Error::LengthMismatch { left: x.n_rows(), right: y.len() });
    }
    if x.has_missing() || x.as_slice().iter().any(|v| v.is_infinite()) {
        return Err(Error::InvalidTable("learner input contains missing or infinite values".into()));
    }
    match task {
        Task::Classify => {
            if y.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::InvalidTable("classification labels must be 0 or 1".into()));
            }
            let ones = y.iter().filter(|&&v| v == 1.0).count();
            if ones == 0 || ones == y.len() {
                return Err(Error::DegenerateClasses);
            }
        }
        Task::Regress => {
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidTable("regression targets must be finite".into()));
            }
        }
    }
    Ok(())
}

pub fn fit(spec: &LearnerSpec, x: &Matrix, y: &[f64]) -> Result<FittedModel> {
    spec.params.validate()?;
    check_inputs(spec.task, x, y)?;
    let (task, seed) = (spec.task, spec.seed);
    Ok(match &spec.params {
        ParamAssignment::Boosting(p) => FittedModel::Boosting(GradientBoosting::fit(x, y, p, task, seed)?),
        ParamAssignment::Forest(p) => FittedModel::Forest(RandomForest::fit(x, y, p, task, seed)?),
        ParamAssignment::Knn(p) => FittedModel::Knn(Knn::fit(x, y, p, task)?),
        ParamAssignment::Svm(p) => FittedModel::Svm(Svm::fit(x, y, p, task, seed)?),
        ParamAssignment::Network(p) => FittedModel::Network(Mlp::fit(x, y, p, task, seed)?),
    })
}

impl FittedModel {
    pub fn family(&self) -> Family {
        match self {
            FittedModel::Boosting(_) => Family::Boosting,
            FittedModel::Forest(_) => Family::Forest,
            FittedModel::Knn(_) => Family::Knn,
            FittedModel::Svm(_) => Family::Svm,
            FittedModel::Network(_) => Family::Network,
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.has_missing() {
            return Err(Error::InvalidTable("prediction input contains missing values".into()));
        }
        match self {
            FittedModel::Boosting(m) => m.predict(x),
            FittedModel::Forest(m) => m.predict(x),
            FittedModel::Knn(m) => m.predict(x),
            FittedModel::Svm(m) => m.predict(x),
            FittedModel::Network(m) => m.predict(x),
        }
    }
}

pub fn predict(model: &FittedModel, x: &Matrix) -> Result<Vec<f64>> {
    model.predict(x)
}

pub const ARTIFACT_VERSION: u32 = 1;

/// A fitted model with the `LearnerSpec` that produced it, stored as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub version: u32,
    pub spec: LearnerSpec,
    pub feature_names: Vec<String>,
    pub model: FittedModel,
}

impl ModelArtifact {
    pub fn new(spec: LearnerSpec, feature_names: Vec<String>, model: FittedModel) -> Self {
        Self { version: ARTIFACT_VERSION, spec, feature_names, model }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let artifact: Self = serde_json::from_reader(file)?;
        if artifact.version != ARTIFACT_VERSION {
            return Err(Error::Config(format!(
                "model artifact version {} is not supported (expected {ARTIFACT_VERSION})",
                artifact.version
            )));
        }
        Ok(artifact)
    }
}
