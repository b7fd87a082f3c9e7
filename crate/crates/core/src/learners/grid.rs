//! Hyperparameter grids: the full search grids and a one-point desk grid.

use serde::{Deserialize, Serialize};

use super::{
    BoostingParams, Family, ForestParams, Kernel, KnnAlgorithm, KnnParams, KnnWeighting, NetworkParams,
    ParamAssignment, SvmParams, Task, ALL_FAMILIES,
};
use crate::error::{Error, Result};

pub type ParamGrid = Vec<ParamAssignment>;

/// Candidate assignments per family, in enumeration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSet {
    pub name: String,
    pub boosting: ParamGrid,
    pub forest: ParamGrid,
    pub knn: ParamGrid,
    pub svm: ParamGrid,
    pub network_classify: ParamGrid,
    pub network_regress: ParamGrid,
}

impl GridSet {
    pub fn points(&self, family: Family, task: Task) -> &[ParamAssignment] {
        match (family, task) {
            (Family::Boosting, _) => &self.boosting,
            (Family::Forest, _) => &self.forest,
            (Family::Knn, _) => &self.knn,
            (Family::Svm, _) => &self.svm,
            (Family::Network, Task::Classify) => &self.network_classify,
            (Family::Network, Task::Regress) => &self.network_regress,
        }
    }

    pub fn contains(&self, family: Family, task: Task, params: &ParamAssignment) -> bool {
        self.points(family, task).contains(params)
    }

    /// First point of every family for classification, in family order.
    pub fn classify_points(&self) -> Vec<ParamAssignment> {
        ALL_FAMILIES.iter().filter_map(|&f| self.points(f, Task::Classify).first().cloned()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        for family in ALL_FAMILIES {
            for task in [Task::Classify, Task::Regress] {
                let pts = self.points(family, task);
                if pts.is_empty() {
                    return Err(Error::Config(format!("grid '{}' has no points for {family}/{task}", self.name)));
                }
                for p in pts {
                    if p.family() != family {
                        return Err(Error::Config(format!(
                            "grid '{}' lists a {} assignment under {family}",
                            self.name,
                            p.family()
                        )));
                    }
                    p.validate()?;
                }
            }
        }
        Ok(())
    }

    pub fn n_points(&self) -> usize {
        self.boosting.len()
            + self.forest.len()
            + self.knn.len()
            + self.svm.len()
            + self.network_classify.len()
            + self.network_regress.len()
    }
}

fn boosting(mcw: &[f64], subsample: &[f64], depth: &[usize]) -> ParamGrid {
    let mut out = Vec::new();
    for &min_child_weight in mcw {
        for &s in subsample {
            for &max_depth in depth {
                out.push(ParamAssignment::Boosting(BoostingParams {
                    min_child_weight,
                    subsample: s,
                    max_depth,
                    learning_rate: 0.1,
                    n_rounds: 100,
                    reg_lambda: 0.0,
                }));
            }
        }
    }
    out
}

fn knn(k: &[usize], leaf: &[usize], algorithm: &[KnnAlgorithm]) -> ParamGrid {
    let mut out = Vec::new();
    for &n_neighbours in k {
        for &leaf_size in leaf {
            for &a in algorithm {
                out.push(ParamAssignment::Knn(KnnParams {
                    n_neighbours,
                    leaf_size,
                    algorithm: a,
                    weighting: KnnWeighting::Uniform,
                }));
            }
        }
    }
    out
}

fn forest(depth: &[Option<usize>], trees: &[usize], split: &[usize], leaf: &[usize]) -> ParamGrid {
    let mut out = Vec::new();
    for &max_depth in depth {
        for &n_estimators in trees {
            for &min_samples_split in split {
                for &min_samples_leaf in leaf {
                    out.push(ParamAssignment::Forest(ForestParams {
                        max_depth,
                        n_estimators,
                        min_samples_split,
                        min_samples_leaf,
                        max_features: None,
                    }));
                }
            }
        }
    }
    out
}

fn svm(c: &[f64], gamma: &[f64], kernel: &[Kernel]) -> ParamGrid {
    let mut out = Vec::new();
    for &c in c {
        for &g in gamma {
            for &k in kernel {
                out.push(ParamAssignment::Svm(SvmParams::new(c, g, k)));
            }
        }
    }
    out
}

fn network(layers: &[usize]) -> ParamGrid {
    layers.iter().map(|&h| ParamAssignment::Network(NetworkParams::new(h))).collect()
}

/// The complete search grids.
pub fn full_grids() -> GridSet {
    GridSet {
        name: "full".into(),
        boosting: boosting(&[1.0, 5.0, 10.0], &[0.6, 1.0], &[8, 12, 16]),
        knn: knn(&[5, 7, 9], &[1, 3], &[KnnAlgorithm::Auto, KnnAlgorithm::KdTree]),
        forest: forest(&[None, Some(40), Some(80)], &[100, 500, 1000], &[2, 5], &[1, 3]),
        svm: svm(&[10.0, 100.0, 1000.0], &[0.0001, 0.001, 0.1, 1.0], &[Kernel::Linear, Kernel::Rbf]),
        network_classify: network(&[2]),
        network_regress: network(&[2, 8, 20]),
    }
}

/// One value per hyperparameter, each taken from the full grid.
pub fn desk_grids() -> GridSet {
    GridSet {
        name: "desk".into(),
        boosting: boosting(&[1.0], &[1.0], &[8]),
        knn: knn(&[5], &[3], &[KnnAlgorithm::KdTree]),
        forest: forest(&[None], &[100], &[5], &[3]),
        svm: svm(&[10.0], &[0.1], &[Kernel::Rbf]),
        network_classify: network(&[2]),
        network_regress: network(&[8]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_grid_sizes() {
        let g = full_grids();
        assert_eq!(g.boosting.len(), 18);
        assert_eq!(g.knn.len(), 12);
        assert_eq!(g.forest.len(), 36);
        assert_eq!(g.svm.len(), 24);
        assert_eq!(g.points(Family::Network, Task::Regress).len(), 3);
        g.validate().unwrap();
    }

    #[test]
    fn desk_points_lie_on_full_grid() {
        let full = full_grids();
        let desk = desk_grids();
        desk.validate().unwrap();
        for f in ALL_FAMILIES {
            for t in [Task::Classify, Task::Regress] {
                for p in desk.points(f, t) {
                    assert!(full.contains(f, t, p), "{f}/{t}");
                }
            }
        }
    }

    #[test]
    fn grid_json_round_trip() {
        let g = full_grids();
        let back: GridSet = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
        assert_eq!(back, g);
    }
}
