use proptest::prelude::*;
use raingap::dataset::{FeatureColumn, SeriesTable};
use raingap::hurdle::{run_hurdle, HurdleConfig};
use raingap::imputer::ImputerConfig;
use raingap::learners::grid::desk_grids;
use raingap::learners::Family;
use raingap::preprocess::Frame;
use raingap::synth::{generate, SynthConfig};
use raingap::tuning::TunedStore;

fn fixture() -> (SeriesTable, TunedStore, HurdleConfig) {
    let cfg = SynthConfig { n_sites: 1, days: 14, seed: 51, gauge_missing_rate: 0.05, ..SynthConfig::default() };
    let table = generate(&cfg).unwrap().sites.remove(0).observed;
    let store = TunedStore::from_first_points(table.site_id(), &desk_grids());
    let hc = HurdleConfig {
        fold_seed: 5,
        families: vec![Family::Knn],
        imputer: ImputerConfig { n_estimators: 5, max_rounds: 2, ..ImputerConfig::default() },
        ..HurdleConfig::default()
    };
    (table, store, hc)
}

#[derive(Debug, Clone, Copy)]
enum Perturbation {
    Scale(f64),
    Drop,
    Target(f64),
}

fn perturbed(table: &SeriesTable, row: usize, col: usize, p: Perturbation) -> SeriesTable {
    let mut columns: Vec<FeatureColumn> = table.columns().to_vec();
    let mut target = table.target().to_vec();
    match p {
        Perturbation::Scale(f) => {
            let v = columns[col].values[row].unwrap_or(1.0);
            columns[col].values[row] = Some(v * f + f);
        }
        Perturbation::Drop => columns[col].values[row] = None,
        Perturbation::Target(v) => target[row] = Some(v),
    }
    SeriesTable::new(table.site_id(), table.timestamps().to_vec(), target, columns).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 10, ..ProptestConfig::default() })]

    #[test]
    fn test_fold_cells_never_reach_fitted_state(
        fold in 0usize..5,
        pick in any::<prop::sample::Index>(),
        col_pick in any::<prop::sample::Index>(),
        kind in 0u8..3,
        factor in -50.0f64..50.0,
    ) {
        let (table, store, hc) = fixture();
        let base = run_hurdle(&table, &store, &hc).unwrap();
        let frame = Frame::from_table(&table);
        let test = &base.folds[fold].test_indices;
        let row = frame.rows[test[pick.index(test.len())]];
        let col = col_pick.index(table.columns().len());
        let p = match kind {
            0 => Perturbation::Scale(factor),
            1 => Perturbation::Drop,
            _ => Perturbation::Target(factor.abs()),
        };
        let again = run_hurdle(&perturbed(&table, row, col, p), &store, &hc).unwrap();
        prop_assert_eq!(&again.fold_plan, &base.fold_plan);
        let (a, b) = (&base.folds[fold], &again.folds[fold]);
        prop_assert_eq!(&a.scaler_digest, &b.scaler_digest);
        // dropping a cell can give a clean test fold its first gap
        if a.imputer_digest.is_some() && b.imputer_digest.is_some() {
            prop_assert_eq!(&a.imputer_digest, &b.imputer_digest);
        }
    }
}

#[test]
fn fixture_folds_are_imputed() {
    let (table, store, hc) = fixture();
    let run = run_hurdle(&table, &store, &hc).unwrap();
    assert!(run.folds.iter().all(|f| f.imputer_digest.is_some()));
}

#[test]
fn training_cells_do_reach_fitted_state() {
    let (table, store, hc) = fixture();
    let base = run_hurdle(&table, &store, &hc).unwrap();
    let frame = Frame::from_table(&table);
    let train_row = frame.rows[base.folds[1].test_indices[0]];
    let again = run_hurdle(&perturbed(&table, train_row, 0, Perturbation::Scale(1e3)), &store, &hc).unwrap();
    assert_ne!(base.folds[0].scaler_digest, again.folds[0].scaler_digest);
    assert_ne!(base.folds[0].imputer_digest, again.folds[0].imputer_digest);
}
