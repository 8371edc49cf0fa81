//! Train the regularized affine model, then let the allocator track a
//! Stage-I style target sequence at an airspeed outside the training data.

use aeroalloc::dynamics::{train_dynamics, DynamicsTrainConfig, Variant};
use aeroalloc::harness::generate_suite_data;
use aeroalloc::harness::{rmssd, run_tracking, stage_seed, ExperimentConfig};
use aeroalloc::plant::ProbeReadout;

fn main() -> aeroalloc::Result<()> {
    let cfg = ExperimentConfig::default();
    let spec = cfg.protocol_with_speeds();
    let data = generate_suite_data(&spec, &cfg.plant, &ProbeReadout::Ideal, cfg.seed)?;
    let base = DynamicsTrainConfig {
        seed: stage_seed(cfg.seed, "train"),
        ..cfg.train.clone()
    };
    let (model, _) = train_dynamics(&data.train, &Variant::AffineSym.configure(&base))?;

    println!("tracking at {} m/s, {} steps", spec.tracking.speed, spec.tracking.steps);
    for lambda1 in [0.03, 0.1, 0.3, 1.0] {
        let tc = aeroalloc::allocator::TrackingConfig {
            lambda1,
            ..cfg.tracking_config()
        };
        let log = run_tracking(&model, &spec, &cfg.plant, ProbeReadout::Ideal, &tc, cfg.seed)?;
        let r = rmssd(&log.controls())?;
        let clamped = log.steps.iter().filter(|s| s.clamped.iter().any(|c| *c)).count();
        println!(
            "lambda1 {lambda1:>4}: RMSSD {:.3} deg/step (per input {:?}), tracking RMSE {:.3}, {clamped} saturated steps",
            r.average,
            r.per_input.map(|v| (v * 1000.0).round() / 1000.0),
            log.tracking_rmse()
        );
        if lambda1 == 0.1 {
            let path = std::env::temp_dir().join("aeroalloc_tracking.csv");
            log.write_csv(&path)?;
            println!("  per-step log written to {}", path.display());
        }
    }
    Ok(())
}
