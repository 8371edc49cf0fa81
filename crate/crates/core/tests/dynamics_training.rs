use std::sync::OnceLock;

use aeroalloc::dynamics::{
    eval_rmse, mean_symmetry_residual, train_dynamics, AffineModel, DynamicsTrainConfig, TrainedModel, Variant,
};
use aeroalloc::harness::{generate_suite_data, stage_seed, SuiteData};
use aeroalloc::plant::{PlantParams, ProbeReadout, ProtocolSpec};

fn data() -> &'static SuiteData {
    static DATA: OnceLock<SuiteData> = OnceLock::new();
    DATA.get_or_init(|| {
        let mut spec = ProtocolSpec::default();
        spec.dynamics.test_speeds = vec![10.0];
        generate_suite_data(&spec, &PlantParams::default(), &ProbeReadout::Ideal, 11).unwrap()
    })
}

fn train(variant: Variant) -> TrainedModel {
    let base = DynamicsTrainConfig {
        seed: stage_seed(11, "train"),
        ..DynamicsTrainConfig::default()
    };
    train_dynamics(&data().train, &variant.configure(&base)).unwrap().0
}

fn affine(m: &TrainedModel) -> &AffineModel {
    match m {
        TrainedModel::Affine(a) => a,
        TrainedModel::Unstructured(_) => panic!("expected an affine model"),
    }
}

#[test]
fn learned_effectiveness_matches_plant_signs() {
    let model = train(Variant::AffineSym);
    let test = data().test_at(10.0).unwrap();
    let plant = PlantParams::default();
    let truth = plant.control_effectiveness(10.0);
    let mut mean = [[0.0; 4]; 6];
    for s in test {
        let (_, b) = affine(&model).predict(&s.observation).unwrap();
        for (r, row) in mean.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v += b[(r, c)] / test.len() as f64;
            }
        }
    }
    // Pitch moment from the elevator and lift from each flaperon.
    for (r, c) in [(4, 2), (2, 0), (2, 1)] {
        assert_eq!(
            mean[r][c].signum(),
            truth[(r, c)].signum(),
            "B[{r},{c}] = {}",
            mean[r][c]
        );
    }
}

#[test]
fn symmetry_prior_shrinks_flaperon_residual() {
    let sym = DynamicsTrainConfig::default().symmetry;
    let test = data().test_at(10.0).unwrap();
    let with = mean_symmetry_residual(affine(&train(Variant::AffineSym)), test, &sym).unwrap();
    let without = mean_symmetry_residual(affine(&train(Variant::Affine)), test, &sym).unwrap();
    assert!(with < without, "{with} vs {without}");
}

#[test]
fn wing_taps_reduce_error_under_gusts() {
    let test = data().test_at(10.0).unwrap();
    let with = eval_rmse(&train(Variant::Affine), test).unwrap();
    let without = eval_rmse(&train(Variant::AffineNoWs), test).unwrap();
    assert!(with < without, "{with} vs {without}");
}
