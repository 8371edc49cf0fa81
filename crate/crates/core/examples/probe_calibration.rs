//! Calibrate both five-hole probes on the tunnel grid, then read a few
//! off-grid flows back through the trained calibration.

use aeroalloc::harness::{calibrate_probes, generate_calibration_data};
use aeroalloc::plant::{probe_pressures, PlantParams, ProtocolSpec};
use aeroalloc::probe::{normalize, CalibrationTrainConfig, FlowEstimator, FlowState};

fn main() -> aeroalloc::Result<()> {
    let plant = PlantParams::default();
    let spec = ProtocolSpec::default();
    let data = generate_calibration_data(&spec.calibration, &plant, 0);
    let cfg = CalibrationTrainConfig {
        rho: plant.rho,
        ..CalibrationTrainConfig::default()
    };
    let ([probe0, _], metrics) = calibrate_probes(&data, &cfg)?;
    for (i, m) in metrics.iter().enumerate() {
        println!(
            "probe {i}: held-out alpha RMSE {:.3} deg, beta RMSE {:.3} deg, Va {:.2}%",
            m.alpha_rmse_deg,
            m.beta_rmse_deg,
            100.0 * m.va_relative_rmse
        );
    }

    println!("\n{:>24} {:>24}", "truth (Va, a, b)", "estimate");
    for truth in [
        FlowState::new(9.0, 2.5, -7.5),
        FlowState::new(11.0, -6.0, 4.0),
        FlowState::new(12.0, 10.0, -10.0),
    ] {
        let p = probe_pressures(&truth, &plant, None);
        let np = normalize(&p)?;
        let est = probe0.estimate_flow(&p, plant.rho)?;
        println!(
            "{:>8.2} {:>7.2} {:>7.2} {:>8.2} {:>7.2} {:>7.2}   (Cp {:?})",
            truth.va,
            truth.alpha_deg,
            truth.beta_deg,
            est.va,
            est.alpha_deg,
            est.beta_deg,
            np.cp.map(|c| (c * 1000.0).round() / 1000.0)
        );
    }
    Ok(())
}
