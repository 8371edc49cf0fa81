//! Experiment orchestration: data generation, probe calibration, the
//! five-arm model ablation, closed-loop tracking and the metric reports.

pub mod cli;
mod report;

use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::allocator::{track_sequence, TrackingConfig, TrackingLog, DEFAULT_LAMBDA0, DEFAULT_LAMBDA1};
use crate::dynamics::{
    channel_rmse, eval_rmse, mean_symmetry_residual, train_dynamics, Control, DynamicsSample, DynamicsTrainConfig,
    DynamicsTrainReport, TrainedModel, Variant, CONTROL_DIM, WRENCH_DIM,
};
use crate::error::{Error, Result};
use crate::plant::{
    generate_calibration, generate_dynamics, CalibrationProtocol, PlantParams, PlantRng, ProbeReadout, ProtocolSpec,
    StageKind, TunnelRun,
};
use crate::probe::{
    evaluate_calibration, train_calibration, CalibrationMetrics, CalibrationSample, CalibrationTrainConfig,
    ProbeCalibration,
};

pub use report::{render_comparison, render_eval, render_suite, suite_csv, ComparisonRow};

/// Label attached to every aggregate RMSE: forces (N) and moments (N·m) are
/// pooled, so the number only supports comparisons between models.
pub const RMSE_LABEL: &str = "comparative aggregate";

/// Everything one ablation run depends on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub plant: PlantParams,
    pub protocol: ProtocolSpec,
    /// Architecture, symmetry prior (λ, δ, s) and optimizer settings.
    pub train: DynamicsTrainConfig,
    pub lambda0: f64,
    pub lambda1: f64,
    pub train_speeds: Vec<f64>,
    pub test_speeds: Vec<f64>,
    pub variants: Vec<Variant>,
    /// Feed the models calibrated probe estimates instead of exact local flow.
    pub calibrated_probes: bool,
    pub calibration: CalibrationTrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let protocol = ProtocolSpec::default();
        Self {
            seed: 0,
            plant: PlantParams::default(),
            train_speeds: protocol.dynamics.train_speeds.clone(),
            test_speeds: protocol.dynamics.test_speeds.clone(),
            protocol,
            train: DynamicsTrainConfig::default(),
            lambda0: DEFAULT_LAMBDA0,
            lambda1: DEFAULT_LAMBDA1,
            variants: Variant::ALL.to_vec(),
            calibrated_probes: false,
            calibration: CalibrationTrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_speeds.is_empty() || self.test_speeds.is_empty() {
            return Err(Error::InvalidParameter("airspeed lists must be non-empty".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::InvalidParameter("no variants selected".into()));
        }
        self.plant.validate()?;
        self.protocol_with_speeds().validate()?;
        self.train.symmetry.validate()
    }

    /// The protocol with this config's speed lists substituted in.
    pub fn protocol_with_speeds(&self) -> ProtocolSpec {
        let mut p = self.protocol.clone();
        p.dynamics.train_speeds = self.train_speeds.clone();
        p.dynamics.test_speeds = self.test_speeds.clone();
        p
    }

    /// Speed against which shift inflation is measured: the first training speed.
    pub fn reference_speed(&self) -> f64 {
        self.train_speeds[0]
    }

    pub fn tracking_config(&self) -> TrackingConfig {
        TrackingConfig {
            lambda0: self.lambda0,
            lambda1: self.lambda1,
            dt: self.protocol.dynamics.dt,
            ..TrackingConfig::default()
        }
    }
}

/// Independent seed for one pipeline stage.
pub fn stage_seed(seed: u64, stage: &str) -> u64 {
    let digest = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update(stage.as_bytes())
        .finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Root mean square of successive differences of a control series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rmssd {
    pub per_input: [f64; CONTROL_DIM],
    pub average: f64,
}

pub fn rmssd(series: &[Control]) -> Result<Rmssd> {
    if series.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "RMSSD needs at least 2 steps, got {}",
            series.len()
        )));
    }
    let mut per_input = [0.0; CONTROL_DIM];
    for w in series.windows(2) {
        for k in 0..CONTROL_DIM {
            per_input[k] += (w[1].0[k] - w[0].0[k]).powi(2);
        }
    }
    let steps = (series.len() - 1) as f64;
    let per_input = per_input.map(|s| (s / steps).sqrt());
    Ok(Rmssd {
        per_input,
        average: per_input.iter().sum::<f64>() / CONTROL_DIM as f64,
    })
}

/// Calibration data for both probes plus a held-out set at the midpoints of
/// the training grid.
#[derive(Clone, Debug)]
pub struct CalibrationData {
    pub train: [Vec<CalibrationSample>; 2],
    pub heldout: [Vec<CalibrationSample>; 2],
}

/// Grid of midpoints between neighbouring grid values (interior points only).
pub fn heldout_grid(proto: &CalibrationProtocol) -> CalibrationProtocol {
    fn mids(v: &[f64]) -> Vec<f64> {
        if v.len() < 2 {
            return v.to_vec();
        }
        v.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }
    CalibrationProtocol {
        speeds: mids(&proto.speeds),
        alphas_deg: mids(&proto.alphas_deg),
        betas_deg: mids(&proto.betas_deg),
        repeats: 1,
    }
}

pub fn generate_calibration_data(proto: &CalibrationProtocol, plant: &PlantParams, seed: u64) -> CalibrationData {
    let mut rng = PlantRng::seed_from_u64(stage_seed(seed, "calibration"));
    let train = generate_calibration(proto, plant, &mut rng);
    let heldout = generate_calibration(&heldout_grid(proto), plant, &mut rng);
    CalibrationData { train, heldout }
}

/// Trained calibrations for probe 0 and probe 1 with their held-out metrics.
pub fn calibrate_probes(
    data: &CalibrationData,
    cfg: &CalibrationTrainConfig,
) -> Result<([ProbeCalibration; 2], [CalibrationMetrics; 2])> {
    let mut cals = Vec::with_capacity(2);
    let mut metrics = Vec::with_capacity(2);
    for probe in 0..2 {
        let (cal, _) = train_calibration(&data.train[probe], cfg)?;
        metrics.push(evaluate_calibration(&cal, &data.heldout[probe], cfg.rho)?);
        cals.push(cal);
    }
    let [c0, c1]: [ProbeCalibration; 2] = cals.try_into().unwrap();
    let [m0, m1]: [CalibrationMetrics; 2] = metrics.try_into().unwrap();
    Ok(([c0, c1], [m0, m1]))
}

/// Dynamics training set and one test set per speed, all from one seed.
#[derive(Clone, Debug)]
pub struct SuiteData {
    pub train: Vec<DynamicsSample>,
    pub tests: Vec<(f64, Vec<DynamicsSample>)>,
}

impl SuiteData {
    /// SHA-256 over every sample of the training and test sets.
    pub fn split_hash(&self) -> String {
        let mut h = Sha256::new();
        let mut feed = |tag: &[u8], set: &[DynamicsSample]| {
            h.update(tag);
            h.update((set.len() as u64).to_le_bytes());
            for s in set {
                for v in s.observation.0.iter().chain(&s.control.0).chain(&s.wrench.0) {
                    h.update(v.to_le_bytes());
                }
            }
        };
        feed(b"train", &self.train);
        for (speed, set) in &self.tests {
            feed(&speed.to_le_bytes(), set);
        }
        hex::encode(h.finalize())
    }

    pub fn test_at(&self, speed: f64) -> Option<&[DynamicsSample]> {
        self.tests.iter().find(|(v, _)| *v == speed).map(|(_, s)| s.as_slice())
    }
}

/// Stage I training data at every training speed; test sets split evenly
/// between Stage I and Stage II at every test speed.
pub fn generate_suite_data(
    spec: &ProtocolSpec,
    plant: &PlantParams,
    readout: &ProbeReadout<'_>,
    seed: u64,
) -> Result<SuiteData> {
    let d = &spec.dynamics;
    let mut rng = PlantRng::seed_from_u64(stage_seed(seed, "dynamics"));
    let mut train = Vec::with_capacity(d.train_samples * d.train_speeds.len());
    for &v in &d.train_speeds {
        train.extend(generate_dynamics(StageKind::StageI, v, d.train_samples, d, plant, readout, &mut rng)?.0);
    }
    let mut tests = Vec::with_capacity(d.test_speeds.len());
    for &v in &d.test_speeds {
        let half = d.test_samples / 2;
        let mut set = generate_dynamics(StageKind::StageI, v, d.test_samples - half, d, plant, readout, &mut rng)?.0;
        set.extend(generate_dynamics(StageKind::StageII, v, half, d, plant, readout, &mut rng)?.0);
        tests.push((v, set));
    }
    Ok(SuiteData { train, tests })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedMetrics {
    pub speed: f64,
    pub rmse: f64,
    pub channel_rmse: [f64; WRENCH_DIM],
    /// Percentage change of RMSE relative to the reference speed.
    pub inflation_pct: Option<f64>,
}

/// Table-II-shaped evaluation of one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: Variant,
    pub rmse_label: String,
    pub reference_speed: Option<f64>,
    pub speeds: Vec<SpeedMetrics>,
}

impl EvalReport {
    pub fn at(&self, speed: f64) -> Option<&SpeedMetrics> {
        self.speeds.iter().find(|s| s.speed == speed)
    }
}

pub fn evaluate_speeds(
    variant: Variant,
    model: &TrainedModel,
    tests: &[(f64, &[DynamicsSample])],
    reference_speed: f64,
) -> Result<EvalReport> {
    let mut speeds = Vec::with_capacity(tests.len());
    for (speed, set) in tests {
        speeds.push(SpeedMetrics {
            speed: *speed,
            rmse: eval_rmse(model, set)?,
            channel_rmse: channel_rmse(model, set)?,
            inflation_pct: None,
        });
    }
    let reference = speeds.iter().find(|s| s.speed == reference_speed).map(|s| s.rmse);
    if let Some(r) = reference {
        for s in &mut speeds {
            s.inflation_pct = Some(100.0 * (s.rmse / r - 1.0));
        }
    }
    Ok(EvalReport {
        variant,
        rmse_label: RMSE_LABEL.to_string(),
        reference_speed: reference.map(|_| reference_speed),
        speeds,
    })
}

/// Closed-loop run of one model on the protocol's tracking session.
pub fn run_tracking(
    model: &TrainedModel,
    spec: &ProtocolSpec,
    plant: &PlantParams,
    readout: ProbeReadout<'_>,
    cfg: &TrackingConfig,
    seed: u64,
) -> Result<TrackingLog> {
    let mut run = TunnelRun::new(
        &spec.tracking,
        &spec.dynamics,
        plant,
        readout,
        stage_seed(seed, "tracking"),
    )?;
    let targets = run.targets().to_vec();
    track_sequence(model, &mut run, &targets, cfg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackingMetrics {
    pub speed: f64,
    pub rmssd: Rmssd,
    pub tracking_rmse: f64,
    pub clamped_steps: usize,
}

impl TrackingMetrics {
    pub fn from_log(log: &TrackingLog, speed: f64) -> Result<Self> {
        Ok(Self {
            speed,
            rmssd: rmssd(&log.controls())?,
            tracking_rmse: log.tracking_rmse(),
            clamped_steps: log.steps.iter().filter(|s| s.clamped.iter().any(|c| *c)).count(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantMetrics {
    pub variant: Variant,
    pub training: DynamicsTrainReport,
    pub eval: EvalReport,
    /// Mean flaperon mirror residual of `B(o)` on the reference-speed test set.
    pub symmetry_residual: Option<f64>,
    pub tracking: TrackingMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub seed: u64,
    pub split_hash: String,
    pub rmse_label: String,
    pub calibration: Option<[CalibrationMetrics; 2]>,
    pub variants: Vec<VariantMetrics>,
}

impl MetricsReport {
    pub fn variant(&self, v: Variant) -> Option<&VariantMetrics> {
        self.variants.iter().find(|m| m.variant == v)
    }
}

/// One trained arm of the ablation with its metrics.
pub struct TrainedVariant {
    pub model: TrainedModel,
    pub metrics: VariantMetrics,
}

/// Trains every configured variant on identical data and evaluates each one
/// offline (per-speed RMSE) and in closed loop (RMSSD at the tracking speed).
pub fn run_ablation_suite(cfg: &ExperimentConfig) -> Result<(MetricsReport, Vec<TrainedVariant>)> {
    cfg.validate()?;
    let spec = cfg.protocol_with_speeds();
    let calibration = if cfg.calibrated_probes {
        let data = generate_calibration_data(&spec.calibration, &cfg.plant, cfg.seed);
        let ccfg = CalibrationTrainConfig {
            seed: stage_seed(cfg.seed, "calibration-train"),
            rho: cfg.plant.rho,
            ..cfg.calibration.clone()
        };
        Some(calibrate_probes(&data, &ccfg)?)
    } else {
        None
    };
    let readout = match &calibration {
        Some(([p0, p1], _)) => ProbeReadout::Calibrated { probe0: p0, probe1: p1 },
        None => ProbeReadout::Ideal,
    };
    let data = generate_suite_data(&spec, &cfg.plant, &readout, cfg.seed)?;
    let split_hash = data.split_hash();
    log::info!("suite data ready, split {split_hash}");

    let base = DynamicsTrainConfig {
        seed: stage_seed(cfg.seed, "train"),
        ..cfg.train.clone()
    };
    let tests: Vec<(f64, &[DynamicsSample])> = data.tests.iter().map(|(v, s)| (*v, s.as_slice())).collect();
    let trained: Vec<TrainedVariant> = cfg
        .variants
        .par_iter()
        .map(|&variant| {
            let vcfg = variant.configure(&base);
            let (model, training) = train_dynamics(&data.train, &vcfg)?;
            let eval = evaluate_speeds(variant, &model, &tests, cfg.reference_speed())?;
            let symmetry_residual = match (&model, data.test_at(cfg.reference_speed())) {
                (TrainedModel::Affine(m), Some(set)) => Some(mean_symmetry_residual(m, set, &cfg.train.symmetry)?),
                _ => None,
            };
            let log = run_tracking(&model, &spec, &cfg.plant, readout, &cfg.tracking_config(), cfg.seed)?;
            let tracking = TrackingMetrics::from_log(&log, spec.tracking.speed)?;
            Ok(TrainedVariant {
                model,
                metrics: VariantMetrics {
                    variant,
                    training,
                    eval,
                    symmetry_residual,
                    tracking,
                },
            })
        })
        .collect::<Result<_>>()?;

    let report = MetricsReport {
        seed: cfg.seed,
        split_hash,
        rmse_label: RMSE_LABEL.to_string(),
        calibration: calibration.map(|(_, m)| m),
        variants: trained.iter().map(|t| t.metrics.clone()).collect(),
    };
    Ok((report, trained))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(rows: &[[f64; 4]]) -> Vec<Control> {
        rows.iter().map(|r| Control(*r)).collect()
    }

    #[test]
    fn rmssd_examples() {
        let flat = series(&[[1.0, 2.0, 3.0, 4.0]; 6]);
        assert_eq!(rmssd(&flat).unwrap().average, 0.0);

        let alt: Vec<Control> = (0..9)
            .map(|t| Control::new(if t % 2 == 0 { 1.0 } else { -1.0 }, 0.0, 0.0, 0.0))
            .collect();
        let r = rmssd(&alt).unwrap();
        assert_eq!(r.per_input[0], 2.0);
        assert_eq!(r.average, 0.5);

        // Hand fixture: differences on input 1 are 1, -2, 0, 3.
        let s = series(&[
            [0.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, -1.0, 0.0, 0.0],
            [0.0, -1.0, 0.0, 0.0],
            [0.0, 2.0, 0.0, 0.0],
        ]);
        let expected = ((1.0f64 + 4.0 + 0.0 + 9.0) / 4.0).sqrt();
        assert!((rmssd(&s).unwrap().per_input[1] - expected).abs() < 1e-15);
        assert!(rmssd(&s[..1]).is_err());
    }

    #[test]
    fn rmssd_is_translation_invariant() {
        let s = series(&[[0.5, -1.0, 2.0, 0.0], [1.5, 0.0, -2.0, 3.0], [0.0, 0.25, 1.0, -1.0]]);
        let shifted: Vec<Control> = s
            .iter()
            .map(|c| Control(std::array::from_fn(|k| c.0[k] + 7.0 - k as f64)))
            .collect();
        let (a, b) = (rmssd(&s).unwrap(), rmssd(&shifted).unwrap());
        for k in 0..4 {
            assert!((a.per_input[k] - b.per_input[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn heldout_grid_uses_midpoints() {
        let g = heldout_grid(&CalibrationProtocol::default());
        assert_eq!(g.speeds, vec![9.0, 11.0]);
        assert_eq!(g.alphas_deg, vec![-7.5, -2.5, 2.5, 7.5]);
    }

    #[test]
    fn config_validation() {
        assert!(ExperimentConfig::default().validate().is_ok());
        let bad = ExperimentConfig {
            test_speeds: vec![],
            ..ExperimentConfig::default()
        };
        assert!(bad.validate().is_err());
        assert_ne!(stage_seed(1, "a"), stage_seed(1, "b"));
        assert_eq!(stage_seed(1, "a"), stage_seed(1, "a"));
    }
}
