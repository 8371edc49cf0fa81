//! The flaperon mirror prior: the penalty itself, then its effect on a
//! trained model's control-effectiveness matrix.

use aeroalloc::dynamics::{
    mean_symmetry_residual, symmetry_loss, train_dynamics, DynamicsTrainConfig, EffectivenessMatrix, SymmetryConfig,
    TrainedModel, Variant,
};
use aeroalloc::harness::generate_suite_data;
use aeroalloc::plant::{PlantParams, ProbeReadout, ProtocolSpec};

fn main() -> aeroalloc::Result<()> {
    // A lift imbalance between the flaperons: only the Fz row is populated.
    let mut b = EffectivenessMatrix::zeros();
    b[(2, 0)] = 6.96;
    b[(2, 1)] = -1.81;
    let cfg = SymmetryConfig {
        lambda: 1.0,
        delta: [1.0; 6],
        ..SymmetryConfig::default()
    };
    println!("penalty for the imbalanced matrix: {:.3}", symmetry_loss(&b, &cfg)?);
    b[(2, 1)] = -6.96;
    println!("penalty after mirroring:           {:.3}\n", symmetry_loss(&b, &cfg)?);

    let mut spec = ProtocolSpec::default();
    spec.dynamics.test_speeds = vec![10.0];
    let data = generate_suite_data(&spec, &PlantParams::default(), &ProbeReadout::Ideal, 0)?;
    let test = data.test_at(10.0).unwrap();
    for lambda in [0.0, 0.1, 1.0, 10.0] {
        let base = DynamicsTrainConfig {
            symmetry: SymmetryConfig::default().with_lambda(lambda),
            ..DynamicsTrainConfig::default()
        };
        let variant = if lambda > 0.0 {
            Variant::AffineSym
        } else {
            Variant::Affine
        };
        let (model, report) = train_dynamics(&data.train, &variant.configure(&base))?;
        let TrainedModel::Affine(m) = &model else {
            unreachable!()
        };
        let residual = mean_symmetry_residual(m, test, &SymmetryConfig::default())?;
        println!(
            "lambda {lambda:>5}: mean flaperon residual {residual:.4} N/deg, validation RMSE {:.4}",
            report.val_rmse.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
