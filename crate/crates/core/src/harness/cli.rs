//! Command-line front end. Every subcommand reads and writes under one
//! output root:
//!
//! ```text
//! data/     calibration and dynamics CSVs (gen-data)
//! models/   probe calibrations and wrench models (train-calib, train-dyn)
//! eval/     per-variant offline evaluation (eval)
//! track/    closed-loop logs (track)
//! report/   comparisons and the full ablation suite (report)
//! ```

use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use super::{
    calibrate_probes, evaluate_speeds, generate_calibration_data, generate_suite_data, render_comparison, render_eval,
    render_suite, run_ablation_suite, run_tracking, stage_seed, suite_csv, CalibrationData, EvalReport,
    ExperimentConfig, TrackingMetrics,
};
use crate::allocator::TrackingConfig;
use crate::dynamics::{
    read_dynamics_csv, train_dynamics, write_dynamics_csv, DynamicsTrainConfig, TrainedModel, Variant,
};
use crate::error::{Error, Result};
use crate::plant::{PlantParams, ProbeReadout, ProtocolSpec};
use crate::probe::{read_calibration_csv, write_calibration_csv, CalibrationTrainConfig, ProbeCalibration};

pub const DEFAULT_OUT: &str = "aeroalloc-out";

#[derive(Debug, Parser)]
#[command(
    name = "aeroalloc",
    version,
    about = "Probe calibration, wrench-model training and control allocation experiments"
)]
pub struct Cli {
    /// Output root for every artifact.
    #[arg(long, env = "AEROALLOC_OUT", default_value = DEFAULT_OUT, global = true)]
    pub out: PathBuf,
    /// Seed for data generation and training; defaults to the protocol's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Protocol JSON (grids, stages, sample counts); built-in defaults otherwise.
    #[arg(long, global = true)]
    pub protocol: Option<PathBuf>,
    /// Plant parameter JSON; built-in defaults otherwise.
    #[arg(long, global = true)]
    pub plant: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate calibration and dynamics datasets from the plant.
    GenData {
        /// Directory with probe0.json/probe1.json; probe features then come from
        /// calibrated noisy taps instead of the exact local flow.
        #[arg(long)]
        calibration: Option<PathBuf>,
        /// Override the protocol's test speeds (comma separated, m/s).
        #[arg(long, value_delimiter = ',')]
        speeds: Option<Vec<f64>>,
    },
    /// Train both probe calibrations and report held-out accuracy.
    TrainCalib {
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Train one wrench-model variant on the generated training set.
    TrainDyn {
        #[arg(long, value_parser = parse_variant)]
        variant: Variant,
        #[command(flatten)]
        training: TrainingArgs,
    },
    /// Evaluate a trained variant at several tunnel speeds.
    Eval {
        #[arg(long, value_parser = parse_variant)]
        variant: Variant,
        #[arg(long, value_delimiter = ',')]
        speeds: Option<Vec<f64>>,
    },
    /// Closed-loop tracking with a trained variant.
    Track {
        #[arg(long, value_parser = parse_variant)]
        variant: Variant,
        #[command(flatten)]
        allocation: AllocationArgs,
        /// Same meaning as for gen-data; must match how the model's data was made.
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
    /// Compare evaluated variants, or run the full five-arm ablation.
    Report {
        /// Comma-separated variants with existing evaluations.
        #[arg(long, value_delimiter = ',', value_parser = parse_variant, conflicts_with = "suite")]
        compare: Option<Vec<Variant>>,
        /// Generate data, train every variant and write the suite report.
        #[arg(long)]
        suite: bool,
        #[command(flatten)]
        training: TrainingArgs,
        #[command(flatten)]
        allocation: AllocationArgs,
        /// Test speeds for the suite (comma separated, m/s).
        #[arg(long, value_delimiter = ',')]
        speeds: Option<Vec<f64>>,
        /// Use trained probe calibrations for the probe features.
        #[arg(long)]
        calibrated_probes: bool,
    },
}

#[derive(Debug, Clone, Args)]
pub struct TrainingArgs {
    /// Weight of the flaperon symmetry penalty (affine_sym only).
    #[arg(long)]
    pub lambda_sym: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct AllocationArgs {
    /// Damping toward trim.
    #[arg(long)]
    pub lambda0: Option<f64>,
    /// Smoothness toward the previous command.
    #[arg(long)]
    pub lambda1: Option<f64>,
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Artifact locations under the output root.
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    fn dir(&self, name: &str) -> Result<PathBuf> {
        let d = self.root.join(name);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        Ok(d)
    }

    pub fn calibration_csv(&self, probe: usize, heldout: bool) -> PathBuf {
        let kind = if heldout { "calib_heldout" } else { "calib" };
        self.root.join("data").join(format!("{kind}_probe{probe}.csv"))
    }

    pub fn train_csv(&self) -> PathBuf {
        self.root.join("data").join("dynamics_train.csv")
    }

    pub fn test_csv(&self, speed: f64) -> PathBuf {
        self.root.join("data").join(format!("dynamics_test_{speed}.csv"))
    }

    pub fn probe_model(&self, probe: usize) -> PathBuf {
        self.root.join("models").join(format!("probe{probe}.json"))
    }

    pub fn model(&self, v: Variant) -> PathBuf {
        self.root.join("models").join(format!("{v}.json"))
    }

    pub fn eval(&self, v: Variant) -> PathBuf {
        self.root.join("eval").join(format!("{v}.json"))
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn require(path: &Path, hint: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Usage(format!(
            "{} not found; run `{hint}` first",
            path.display()
        )))
    }
}

struct Context {
    layout: Layout,
    spec: ProtocolSpec,
    plant: PlantParams,
    seed: u64,
}

impl Context {
    fn from_cli(cli: &Cli) -> Result<Self> {
        let spec = match &cli.protocol {
            Some(p) => ProtocolSpec::from_json(&read_text(p)?)?,
            None => ProtocolSpec::default(),
        };
        let plant = match &cli.plant {
            Some(p) => PlantParams::from_json(&read_text(p)?)?,
            None => PlantParams::default(),
        };
        Ok(Self {
            layout: Layout::new(&cli.out),
            seed: cli.seed.unwrap_or(spec.seed),
            spec,
            plant,
        })
    }

    fn train_config(&self, variant: Variant, args: &TrainingArgs) -> DynamicsTrainConfig {
        let mut base = DynamicsTrainConfig {
            seed: stage_seed(self.seed, "train"),
            ..DynamicsTrainConfig::default()
        };
        if let Some(l) = args.lambda_sym {
            base.symmetry.lambda = l;
        }
        if let Some(e) = args.epochs {
            base.epochs = e;
        }
        variant.configure(&base)
    }

    fn tracking_config(&self, args: &AllocationArgs) -> TrackingConfig {
        let d = TrackingConfig::default();
        TrackingConfig {
            lambda0: args.lambda0.unwrap_or(d.lambda0),
            lambda1: args.lambda1.unwrap_or(d.lambda1),
            dt: self.spec.dynamics.dt,
            ..d
        }
    }
}

fn load_probes(dir: &Path) -> Result<[ProbeCalibration; 2]> {
    let p0 = dir.join("probe0.json");
    let p1 = dir.join("probe1.json");
    require(&p0, "aeroalloc train-calib")?;
    require(&p1, "aeroalloc train-calib")?;
    Ok([ProbeCalibration::load(p0)?, ProbeCalibration::load(p1)?])
}

fn readout(probes: &Option<[ProbeCalibration; 2]>) -> ProbeReadout<'_> {
    match probes {
        Some([p0, p1]) => ProbeReadout::Calibrated { probe0: p0, probe1: p1 },
        None => ProbeReadout::Ideal,
    }
}

/// Parses `args` (program name first) and runs the chosen subcommand.
pub fn main_with_args<I, T>(args: I) -> Result<String>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => Ok(e.to_string()),
        Err(e) => Err(Error::Usage(e.to_string())),
    }
}

/// Runs one subcommand and returns its human-readable summary.
pub fn run(cli: &Cli) -> Result<String> {
    let ctx = Context::from_cli(cli)?;
    let l = &ctx.layout;
    match &cli.command {
        Command::GenData { calibration, speeds } => {
            let mut spec = ctx.spec.clone();
            if let Some(s) = speeds {
                spec.dynamics.test_speeds = s.clone();
            }
            spec.validate()?;
            l.dir("data")?;
            let cal = generate_calibration_data(&spec.calibration, &ctx.plant, ctx.seed);
            for probe in 0..2 {
                write_calibration_csv(l.calibration_csv(probe, false), &cal.train[probe])?;
                write_calibration_csv(l.calibration_csv(probe, true), &cal.heldout[probe])?;
            }
            let probes = calibration.as_deref().map(load_probes).transpose()?;
            let data = generate_suite_data(&spec, &ctx.plant, &readout(&probes), ctx.seed)?;
            write_dynamics_csv(l.train_csv(), &data.train)?;
            for (speed, set) in &data.tests {
                write_dynamics_csv(l.test_csv(*speed), set)?;
            }
            write_json(&l.dir("data")?.join("protocol.json"), &spec)?;
            Ok(format!(
                "wrote {} calibration rows per probe, {} training rows, {} test sets (split {})\n",
                cal.train[0].len(),
                data.train.len(),
                data.tests.len(),
                data.split_hash()
            ))
        }
        Command::TrainCalib { epochs } => {
            let mut data = CalibrationData {
                train: [Vec::new(), Vec::new()],
                heldout: [Vec::new(), Vec::new()],
            };
            for probe in 0..2 {
                let path = l.calibration_csv(probe, false);
                require(&path, "aeroalloc gen-data")?;
                data.train[probe] = read_calibration_csv(&path)?;
                data.heldout[probe] = read_calibration_csv(l.calibration_csv(probe, true))?;
            }
            let mut cfg = CalibrationTrainConfig {
                seed: stage_seed(ctx.seed, "calibration-train"),
                rho: ctx.plant.rho,
                ..CalibrationTrainConfig::default()
            };
            if let Some(e) = epochs {
                cfg.epochs = *e;
            }
            let (cals, metrics) = calibrate_probes(&data, &cfg)?;
            l.dir("models")?;
            for (probe, cal) in cals.iter().enumerate() {
                cal.save(l.probe_model(probe))?;
            }
            write_json(&l.dir("models")?.join("calibration_metrics.json"), &metrics)?;
            let mut text = String::new();
            for (i, m) in metrics.iter().enumerate() {
                text += &format!(
                    "probe {i}: Va rel. RMSE {:.2}%  alpha RMSE {:.3} deg  beta RMSE {:.3} deg\n",
                    100.0 * m.va_relative_rmse,
                    m.alpha_rmse_deg,
                    m.beta_rmse_deg
                );
            }
            Ok(text)
        }
        Command::TrainDyn { variant, training } => {
            let path = l.train_csv();
            require(&path, "aeroalloc gen-data")?;
            let data = read_dynamics_csv(&path)?;
            let cfg = ctx.train_config(*variant, training);
            let (model, report) = train_dynamics(&data, &cfg)?;
            l.dir("models")?;
            model.save(l.model(*variant))?;
            write_json(&l.root.join("models").join(format!("{variant}.train.json")), &report)?;
            Ok(format!(
                "{variant}: {} training rows, validation RMSE {}\n",
                report.train_samples,
                report.val_rmse.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
            ))
        }
        Command::Eval { variant, speeds } => {
            let model_path = l.model(*variant);
            require(&model_path, &format!("aeroalloc train-dyn --variant {variant}"))?;
            let model = TrainedModel::load(&model_path)?;
            let speeds = speeds.clone().unwrap_or_else(|| ctx.spec.dynamics.test_speeds.clone());
            let mut sets = Vec::with_capacity(speeds.len());
            for &s in &speeds {
                let path = l.test_csv(s);
                require(&path, "aeroalloc gen-data --speeds ...")?;
                sets.push((s, read_dynamics_csv(&path)?));
            }
            let tests: Vec<(f64, &[_])> = sets.iter().map(|(s, d)| (*s, d.as_slice())).collect();
            let report = evaluate_speeds(*variant, &model, &tests, ctx.spec.dynamics.train_speeds[0])?;
            l.dir("eval")?;
            write_json(&l.eval(*variant), &report)?;
            let text = render_eval(&report);
            write_text(&l.eval(*variant).with_extension("txt"), &text)?;
            Ok(text)
        }
        Command::Track {
            variant,
            allocation,
            calibration,
        } => {
            let model_path = l.model(*variant);
            require(&model_path, &format!("aeroalloc train-dyn --variant {variant}"))?;
            let model = TrainedModel::load(&model_path)?;
            let probes = calibration.as_deref().map(load_probes).transpose()?;
            let cfg = ctx.tracking_config(allocation);
            let log = run_tracking(&model, &ctx.spec, &ctx.plant, readout(&probes), &cfg, ctx.seed)?;
            let metrics = TrackingMetrics::from_log(&log, ctx.spec.tracking.speed)?;
            let dir = l.dir("track")?;
            log.write_csv(dir.join(format!("{variant}.csv")))?;
            write_json(&dir.join(format!("{variant}.json")), &metrics)?;
            Ok(format!(
                "{variant} at {} m/s: average RMSSD {:.4} deg, tracking RMSE {:.4}, {} saturated steps\n",
                metrics.speed, metrics.rmssd.average, metrics.tracking_rmse, metrics.clamped_steps
            ))
        }
        Command::Report {
            compare,
            suite,
            training,
            allocation,
            speeds,
            calibrated_probes,
        } => {
            let dir = l.dir("report")?;
            if *suite {
                let mut cfg = ExperimentConfig {
                    seed: ctx.seed,
                    plant: ctx.plant.clone(),
                    protocol: ctx.spec.clone(),
                    train_speeds: ctx.spec.dynamics.train_speeds.clone(),
                    test_speeds: speeds.clone().unwrap_or_else(|| ctx.spec.dynamics.test_speeds.clone()),
                    calibrated_probes: *calibrated_probes,
                    ..ExperimentConfig::default()
                };
                if let Some(lam) = training.lambda_sym {
                    cfg.train.symmetry.lambda = lam;
                }
                if let Some(e) = training.epochs {
                    cfg.train.epochs = e;
                }
                let t = ctx.tracking_config(allocation);
                cfg.lambda0 = t.lambda0;
                cfg.lambda1 = t.lambda1;
                let (report, trained) = run_ablation_suite(&cfg)?;
                write_json(&dir.join("suite_config.json"), &cfg)?;
                write_json(&dir.join("suite.json"), &report)?;
                write_text(&dir.join("suite.csv"), &suite_csv(&report))?;
                let text = render_suite(&report);
                write_text(&dir.join("suite.txt"), &text)?;
                let models = l.dir("report/models")?;
                for t in &trained {
                    t.model.save(models.join(format!("{}.json", t.metrics.variant)))?;
                }
                Ok(text)
            } else {
                let variants = compare
                    .clone()
                    .ok_or_else(|| Error::Usage("report needs --compare a,b or --suite".into()))?;
                let mut reports = Vec::with_capacity(variants.len());
                for v in &variants {
                    let path = l.eval(*v);
                    require(&path, &format!("aeroalloc eval --variant {v}"))?;
                    let r: EvalReport = serde_json::from_str(&read_text(&path)?)?;
                    reports.push(r);
                }
                let (text, rows) = render_comparison(&reports);
                let stem = variants.iter().map(|v| v.as_str()).collect::<Vec<_>>().join("_vs_");
                write_json(&dir.join(format!("compare_{stem}.json")), &rows)?;
                write_text(&dir.join(format!("compare_{stem}.txt")), &text)?;
                Ok(text)
            }
        }
    }
}
