//! Five-hole probe calibration.
//!
//! Tap pressures are normalized into direction-only coefficients, a small
//! network maps them to a dynamic-pressure correction and the two flow
//! angles, and airspeed is recovered from the correction and the measured
//! pressure spread.
//!
//! Tap order is fixed as (center, up, down, left, right).

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::nncore::{Activation, AdamConfig, GradientTape, Network, OptimizerState};

/// Pressure spread below which a sample is treated as still air.
pub const DEFAULT_NO_FLOW_THRESHOLD: f64 = 1e-6;

pub const TAP_COUNT: usize = 5;

/// Raw tap pressures in Pa, ordered (center, up, down, left, right).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbePressures(pub [f64; TAP_COUNT]);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalizedPressures {
    pub cp: [f64; TAP_COUNT],
    /// Max minus min tap pressure, Pa.
    pub delta_p: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOutput {
    pub cd: f64,
    pub alpha_deg: f64,
    pub beta_deg: f64,
}

/// Airspeed (m/s) and flow angles (degrees).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub va: f64,
    pub alpha_deg: f64,
    pub beta_deg: f64,
}

impl FlowState {
    pub fn new(va: f64, alpha_deg: f64, beta_deg: f64) -> Self {
        Self {
            va,
            alpha_deg,
            beta_deg,
        }
    }

    pub fn dynamic_pressure(&self, rho: AirDensity) -> f64 {
        0.5 * rho.value() * self.va * self.va
    }
}

/// Air density in kg/m^3, always positive.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct AirDensity(f64);

impl AirDensity {
    pub const SEA_LEVEL: AirDensity = AirDensity(1.225);

    pub fn new(rho: f64) -> Result<Self> {
        if rho > 0.0 && rho.is_finite() {
            Ok(Self(rho))
        } else {
            Err(Error::InvalidInput(format!("air density must be positive, got {rho}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for AirDensity {
    fn default() -> Self {
        Self::SEA_LEVEL
    }
}

impl TryFrom<f64> for AirDensity {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<AirDensity> for f64 {
    fn from(r: AirDensity) -> f64 {
        r.0
    }
}

pub fn normalize(p: &ProbePressures) -> Result<NormalizedPressures> {
    normalize_with_threshold(p, DEFAULT_NO_FLOW_THRESHOLD)
}

/// `Cp_i = (p_max - p_i) / (p_max - p_min)`; the highest tap maps to 0, the lowest to 1.
pub fn normalize_with_threshold(p: &ProbePressures, threshold: f64) -> Result<NormalizedPressures> {
    if p.0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("tap pressures must be finite".into()));
    }
    let p_max = p.0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let p_min = p.0.iter().copied().fold(f64::INFINITY, f64::min);
    let delta_p = p_max - p_min;
    if !(delta_p > threshold) {
        return Err(Error::NoFlow { delta_p, threshold });
    }
    let cp = p.0.map(|pi| if pi == p_min { 1.0 } else { (p_max - pi) / delta_p });
    Ok(NormalizedPressures { cp, delta_p })
}

/// Ratio of true dynamic pressure to the measured pressure spread.
pub fn pressure_correction(va: f64, delta_p: f64, rho: AirDensity) -> Result<f64> {
    if !(delta_p > 0.0) || !(va >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "need va >= 0 and delta_p > 0, got va={va}, delta_p={delta_p}"
        )));
    }
    Ok(0.5 * rho.value() * va * va / delta_p)
}

/// `Va = sqrt(2 delta_p Cd / rho)`.
pub fn reconstruct_airspeed(cd: f64, delta_p: f64, rho: AirDensity) -> Result<f64> {
    if !(cd > 0.0) || !(delta_p > 0.0) {
        return Err(Error::InvalidInput(format!(
            "need Cd > 0 and delta_p > 0, got Cd={cd}, delta_p={delta_p}"
        )));
    }
    Ok((2.0 * delta_p * cd / rho.value()).sqrt())
}

/// Anything that turns raw probe pressures into a flow estimate.
pub trait FlowEstimator {
    fn estimate_flow(&self, p: &ProbePressures, rho: AirDensity) -> Result<FlowState>;
}

/// Trained map from normalized coefficients to `(Cd, alpha, beta)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeCalibration {
    model: Network,
    no_flow_threshold: f64,
}

impl ProbeCalibration {
    pub fn new(model: Network) -> Result<Self> {
        check_len("calibration model input", TAP_COUNT, model.input_width())?;
        check_len("calibration model output", 3, model.output_width())?;
        Ok(Self {
            model,
            no_flow_threshold: DEFAULT_NO_FLOW_THRESHOLD,
        })
    }

    pub fn with_no_flow_threshold(mut self, threshold: f64) -> Self {
        self.no_flow_threshold = threshold;
        self
    }

    pub fn network(&self) -> &Network {
        &self.model
    }

    pub fn calibrate(&self, np: &NormalizedPressures) -> Result<CalibrationOutput> {
        calibrate(&self.model, np)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.model.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(Network::load(path)?)
    }
}

impl FlowEstimator for ProbeCalibration {
    fn estimate_flow(&self, p: &ProbePressures, rho: AirDensity) -> Result<FlowState> {
        let np = normalize_with_threshold(p, self.no_flow_threshold)?;
        let out = self.calibrate(&np)?;
        let va = reconstruct_airspeed(out.cd, np.delta_p, rho)?;
        Ok(FlowState::new(va, out.alpha_deg, out.beta_deg))
    }
}

pub fn calibrate(model: &Network, np: &NormalizedPressures) -> Result<CalibrationOutput> {
    check_len("calibration model input", TAP_COUNT, model.input_width())?;
    check_len("calibration model output", 3, model.output_width())?;
    let y = model.forward(&np.cp)?;
    Ok(CalibrationOutput {
        cd: y[0],
        alpha_deg: y[1],
        beta_deg: y[2],
    })
}

/// One labelled calibration row: `p1,p2,p3,p4,p5,Va,alpha_deg,beta_deg`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub p4: f64,
    pub p5: f64,
    #[serde(rename = "Va")]
    pub va: f64,
    pub alpha_deg: f64,
    pub beta_deg: f64,
}

impl CalibrationSample {
    pub fn new(p: ProbePressures, truth: FlowState) -> Self {
        let [p1, p2, p3, p4, p5] = p.0;
        Self {
            p1,
            p2,
            p3,
            p4,
            p5,
            va: truth.va,
            alpha_deg: truth.alpha_deg,
            beta_deg: truth.beta_deg,
        }
    }

    pub fn pressures(&self) -> ProbePressures {
        ProbePressures([self.p1, self.p2, self.p3, self.p4, self.p5])
    }

    pub fn truth(&self) -> FlowState {
        FlowState::new(self.va, self.alpha_deg, self.beta_deg)
    }
}

pub fn write_calibration_csv(path: impl AsRef<Path>, samples: &[CalibrationSample]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    for s in samples {
        w.serialize(s)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_calibration_csv(path: impl AsRef<Path>) -> Result<Vec<CalibrationSample>> {
    let mut r = csv::Reader::from_path(path.as_ref())?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// How training visits samples within an epoch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleOrder {
    /// Dataset order, every epoch.
    AsGiven,
    /// Seeded reshuffle each epoch, starting from dataset order.
    #[default]
    Shuffled,
    /// Samples are first sorted into a canonical order, then shuffled with the
    /// seed; the result does not depend on how the dataset was ordered.
    Canonical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTrainConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Learning rate at the last epoch as a fraction of the initial one.
    pub final_lr_fraction: f64,
    pub seed: u64,
    pub order: SampleOrder,
    pub rho: AirDensity,
    pub no_flow_threshold: f64,
}

impl Default for CalibrationTrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 32],
            epochs: 300,
            batch_size: 16,
            adam: AdamConfig {
                learning_rate: 3e-3,
                ..AdamConfig::default()
            },
            final_lr_fraction: 0.05,
            seed: 0,
            order: SampleOrder::Shuffled,
            rho: AirDensity::SEA_LEVEL,
            no_flow_threshold: DEFAULT_NO_FLOW_THRESHOLD,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTrainReport {
    /// Channel-weighted mean squared error after each epoch.
    pub epoch_loss: Vec<f64>,
    pub used_samples: usize,
    pub skipped_degenerate: usize,
}

/// Fits a calibration network on labelled samples. Targets are `Cd` from the
/// labelled airspeed and the sample's own pressure spread, plus the labelled
/// angles in degrees. Channels are weighted by their inverse target variance
/// so the small-range `Cd` target is not drowned out by the angles.
pub fn train_calibration(
    dataset: &[CalibrationSample],
    cfg: &CalibrationTrainConfig,
) -> Result<(ProbeCalibration, CalibrationTrainReport)> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset("calibration dataset"));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::InvalidParameter("epochs and batch_size must be positive".into()));
    }
    let mut rows: Vec<CalibrationSample> = dataset.to_vec();
    if cfg.order == SampleOrder::Canonical {
        rows.sort_by(|a, b| canonical_key(a).partial_cmp(&canonical_key(b)).unwrap());
    }

    let mut inputs = Vec::with_capacity(rows.len());
    let mut targets = Vec::with_capacity(rows.len());
    let mut skipped = 0;
    for s in &rows {
        match normalize_with_threshold(&s.pressures(), cfg.no_flow_threshold) {
            Ok(np) => {
                let cd = pressure_correction(s.va, np.delta_p, cfg.rho)?;
                inputs.push(np.cp);
                targets.push([cd, s.alpha_deg, s.beta_deg]);
            }
            Err(Error::NoFlow { .. }) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if inputs.is_empty() {
        return Err(Error::DegenerateDataset(
            "every calibration sample is a no-flow sample".into(),
        ));
    }
    let mut speeds: Vec<f64> = rows.iter().map(|s| s.va).collect();
    speeds.sort_by(f64::total_cmp);
    speeds.dedup();
    if speeds.len() < 2 {
        log::warn!("calibration labels cover a single airspeed; Cd will not generalize");
    }

    let n = inputs.len();
    let mut mean = [0.0; 3];
    for t in &targets {
        for k in 0..3 {
            mean[k] += t[k] / n as f64;
        }
    }
    let mut weight = [1.0; 3];
    for k in 0..3 {
        let var = targets.iter().map(|t| (t[k] - mean[k]).powi(2)).sum::<f64>() / n as f64;
        if var > 1e-12 {
            weight[k] = 1.0 / var;
        }
    }

    let mut widths = vec![TAP_COUNT];
    widths.extend(&cfg.hidden);
    widths.push(3);
    let mut net = Network::new(&widths, Activation::Tanh, Activation::Identity, cfg.seed)?;
    net.layers_mut().last_mut().unwrap().bias_mut().copy_from_slice(&mean);
    let mut opt = OptimizerState::new(&net, cfg.adam)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let decay = lr_decay(cfg.final_lr_fraction, cfg.epochs);
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let mut tape = net.zero_tape();

    for epoch in 0..cfg.epochs {
        opt.set_learning_rate(cfg.adam.learning_rate * decay.powi(epoch as i32));
        if cfg.order != SampleOrder::AsGiven {
            order.shuffle(&mut rng);
        }
        for batch in order.chunks(cfg.batch_size) {
            tape.zero();
            let bi: Vec<_> = batch.iter().map(|&i| inputs[i]).collect();
            let bt: Vec<_> = batch.iter().map(|&i| targets[i]).collect();
            calibration_loss_impl(&net, &bi, &bt, &weight, Some(&mut tape))?;
            opt.step(&mut net, &tape)?;
        }
        epoch_loss.push(calibration_loss(&net, &inputs, &targets, &weight)?);
    }
    if !net.all_finite() {
        return Err(Error::Numerical("calibration training diverged".into()));
    }
    let cal = ProbeCalibration::new(net)?.with_no_flow_threshold(cfg.no_flow_threshold);
    Ok((
        cal,
        CalibrationTrainReport {
            epoch_loss,
            used_samples: n,
            skipped_degenerate: skipped,
        },
    ))
}

fn canonical_key(s: &CalibrationSample) -> [f64; 8] {
    [s.va, s.alpha_deg, s.beta_deg, s.p1, s.p2, s.p3, s.p4, s.p5]
}

pub(crate) fn lr_decay(final_fraction: f64, epochs: usize) -> f64 {
    if epochs <= 1 || !(final_fraction > 0.0) {
        1.0
    } else {
        final_fraction.powf(1.0 / (epochs - 1) as f64)
    }
}

/// Channel-weighted mean squared error of a calibration network over
/// normalized inputs and `(Cd, alpha, beta)` targets.
pub fn calibration_loss(
    net: &Network,
    inputs: &[[f64; TAP_COUNT]],
    targets: &[[f64; 3]],
    weight: &[f64; 3],
) -> Result<f64> {
    calibration_loss_impl(net, inputs, targets, weight, None)
}

/// [`calibration_loss`] and its gradient with respect to every parameter.
pub fn calibration_loss_grad(
    net: &Network,
    inputs: &[[f64; TAP_COUNT]],
    targets: &[[f64; 3]],
    weight: &[f64; 3],
) -> Result<(f64, GradientTape)> {
    let mut tape = net.zero_tape();
    let loss = calibration_loss_impl(net, inputs, targets, weight, Some(&mut tape))?;
    Ok((loss, tape))
}

fn calibration_loss_impl(
    net: &Network,
    inputs: &[[f64; TAP_COUNT]],
    targets: &[[f64; 3]],
    weight: &[f64; 3],
    mut tape: Option<&mut GradientTape>,
) -> Result<f64> {
    if inputs.is_empty() {
        return Err(Error::EmptyDataset("calibration batch"));
    }
    check_len("calibration targets", inputs.len(), targets.len())?;
    let n = inputs.len() as f64;
    let mut total = 0.0;
    for (x, t) in inputs.iter().zip(targets) {
        let trace = net.forward_traced(x)?;
        let y = trace.output();
        total += (0..3).map(|k| weight[k] * (y[k] - t[k]).powi(2)).sum::<f64>() / 3.0;
        if let Some(tape) = tape.as_deref_mut() {
            let upstream: Vec<f64> = (0..3).map(|k| 2.0 * weight[k] * (y[k] - t[k]) / (3.0 * n)).collect();
            net.backpropagate(&trace, &upstream, Some(tape))?;
        }
    }
    Ok(total / n)
}

/// Accuracy of a calibration against labelled samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationMetrics {
    /// RMS of `(Va_est - Va) / Va`.
    pub va_relative_rmse: f64,
    pub alpha_rmse_deg: f64,
    pub beta_rmse_deg: f64,
    pub evaluated: usize,
}

pub fn evaluate_calibration(
    estimator: &impl FlowEstimator,
    samples: &[CalibrationSample],
    rho: AirDensity,
) -> Result<CalibrationMetrics> {
    let (mut va, mut a, mut b, mut n) = (0.0, 0.0, 0.0, 0usize);
    for s in samples.iter().filter(|s| s.va > 0.0) {
        let est = estimator.estimate_flow(&s.pressures(), rho)?;
        va += ((est.va - s.va) / s.va).powi(2);
        a += (est.alpha_deg - s.alpha_deg).powi(2);
        b += (est.beta_deg - s.beta_deg).powi(2);
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyDataset("no samples with positive airspeed"));
    }
    let nf = n as f64;
    Ok(CalibrationMetrics {
        va_relative_rmse: (va / nf).sqrt(),
        alpha_rmse_deg: (a / nf).sqrt(),
        beta_rmse_deg: (b / nf).sqrt(),
        evaluated: n,
    })
}
