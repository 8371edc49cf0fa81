//! Synthetic wind-tunnel plant.
//!
//! Ground-truth aerodynamics for a small fixed-wing airframe in a tunnel with an
//! upstream gust generator, plus the sensor models the learning stages consume:
//! five-hole probe taps, seven right-wing pressure taps and a six-axis force
//! balance. All randomness comes from an explicit [`PlantRng`].
//!
//! Sign conventions: body axes x forward, y right, z down; angles in degrees.
//! Flaperon deflections are mirrored, so positive left and positive right
//! commands roll the airframe the same way and their lift contributions cancel.

mod protocol;

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Control, EffectivenessMatrix, Observation, Wrench, WrenchVector, WING_TAPS, WRENCH_DIM};
use crate::error::{Error, Result};
use crate::probe::{AirDensity, FlowEstimator, FlowState, ProbeCalibration, ProbePressures};

pub use protocol::{
    generate_calibration, generate_dynamics, CalibrationProtocol, ConditionRecord, DynamicsProtocol, ExcitationSpec,
    FlowSchedule, GustSchedule, ProtocolSpec, StageKind, TrackingProtocol, TunnelRun,
};

pub type PlantRng = ChaCha8Rng;

/// Baseline and control derivatives. Force coefficients are dimensionless per
/// degree; moment coefficients are per degree and multiplied by their
/// reference length (span for roll and yaw, chord for pitch) when assembled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AeroDerivatives {
    pub cl0: f64,
    pub cl_alpha: f64,
    pub cd0: f64,
    pub induced_drag: f64,
    pub cy_beta: f64,
    pub roll_beta: f64,
    pub cm0: f64,
    pub cm_alpha: f64,
    pub yaw_beta: f64,
    /// Lift per degree of one flaperon (left positive, right mirrored).
    pub cl_flaperon: f64,
    pub cd_flaperon: f64,
    pub cy_flaperon: f64,
    pub roll_flaperon: f64,
    pub cm_flaperon: f64,
    pub yaw_flaperon: f64,
    pub cl_elevator: f64,
    pub cm_elevator: f64,
    pub cy_rudder: f64,
    pub roll_rudder: f64,
    pub yaw_rudder: f64,
    /// Wrench coefficient per degree of wing-local gust perturbation
    /// `(d_alpha, d_beta)`, reference lengths already applied.
    pub gust: [[f64; 2]; WRENCH_DIM],
}

impl Default for AeroDerivatives {
    fn default() -> Self {
        Self {
            cl0: 0.2,
            cl_alpha: 0.08,
            cd0: 0.03,
            induced_drag: 0.05,
            cy_beta: -0.02,
            roll_beta: -0.002,
            cm0: 0.02,
            cm_alpha: -0.01,
            yaw_beta: 0.002,
            cl_flaperon: 0.015,
            cd_flaperon: 0.001,
            cy_flaperon: 0.0005,
            roll_flaperon: 0.005,
            cm_flaperon: -0.008,
            yaw_flaperon: -0.0007,
            cl_elevator: 0.005,
            cm_elevator: -0.02,
            cy_rudder: 0.005,
            roll_rudder: 0.0008,
            yaw_rudder: -0.012,
            gust: [
                [0.002, 0.0],
                [0.0, -0.01],
                [-0.04, 0.0],
                [0.015, 0.003],
                [-0.004, 0.0],
                [0.001, 0.004],
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeGeometry {
    /// Angle between the center tap and each peripheral tap axis.
    pub cone_angle_deg: f64,
    /// Tap response `q (1 - k sin^2 theta)`.
    pub sensitivity: f64,
    pub static_pressure: f64,
}

impl Default for ProbeGeometry {
    fn default() -> Self {
        Self {
            cone_angle_deg: 45.0,
            sensitivity: 2.0,
            static_pressure: 0.0,
        }
    }
}

/// Per-tap response `ps_i = q (a_i + b_i alpha + c_i d_ra + d_i g)`, where `g` is
/// the wing-local gust perturbation in degrees. Taps 0 and 4 sit on the
/// leading edge; all seven taps are on the right wing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WingTapTable {
    pub a: [f64; WING_TAPS],
    pub b: [f64; WING_TAPS],
    pub c: [f64; WING_TAPS],
    pub d: [f64; WING_TAPS],
}

impl Default for WingTapTable {
    fn default() -> Self {
        Self {
            a: [-0.6, -0.4, -0.25, -0.1, -0.55, -0.35, -0.15],
            b: [-0.05, -0.03, -0.02, -0.01, -0.05, -0.03, -0.015],
            c: [0.002, 0.005, 0.01, 0.02, 0.003, 0.008, 0.025],
            d: [0.06, 0.01, 0.008, 0.005, 0.055, 0.012, 0.006],
        }
    }
}

/// Standard deviations of additive sensor noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorNoise {
    pub probe_tap: f64,
    pub wing_tap: f64,
    pub force: f64,
    pub torque: f64,
}

impl Default for SensorNoise {
    fn default() -> Self {
        Self {
            probe_tap: 0.5,
            wing_tap: 1.0,
            force: 0.05,
            torque: 0.005,
        }
    }
}

/// How strongly the gust generator reaches each sensor location.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GustCoupling {
    pub probe0_weight: f64,
    pub probe1_weight: f64,
    pub wing_weight: f64,
    /// Sideslip offset per degree of generator yaw in shear mode.
    pub shear_beta_per_yaw: f64,
    /// Shedding sideslip amplitude relative to the angle-of-attack amplitude.
    pub shedding_beta_ratio: f64,
    /// Shedding airspeed amplitude relative to the generator amplitude.
    pub shedding_speed_ratio: f64,
    /// Convective phase lag of the wake between the probes and the wing.
    pub wing_phase_lag_rad: f64,
    /// Shedding frequency `f = strouhal * Va / chord`.
    pub strouhal: f64,
    /// RMS of the wing-only wake turbulence while the generator runs, degrees.
    pub wake_rms_deg: f64,
}

impl Default for GustCoupling {
    fn default() -> Self {
        Self {
            probe0_weight: 1.0,
            probe1_weight: 0.3,
            wing_weight: 0.7,
            shear_beta_per_yaw: 0.3,
            shedding_beta_ratio: 0.5,
            shedding_speed_ratio: 0.25,
            wing_phase_lag_rad: 1.6,
            strouhal: 0.2,
            wake_rms_deg: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantParams {
    pub rho: AirDensity,
    pub wing_area: f64,
    pub span: f64,
    pub chord: f64,
    pub aero: AeroDerivatives,
    pub probe: ProbeGeometry,
    pub wing_taps: WingTapTable,
    pub noise: SensorNoise,
    pub gust: GustCoupling,
    /// Linear-regime limit on |alpha| and |beta|, degrees.
    pub envelope_deg: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            rho: AirDensity::SEA_LEVEL,
            wing_area: 0.30,
            span: 1.2,
            chord: 0.25,
            aero: AeroDerivatives::default(),
            probe: ProbeGeometry::default(),
            wing_taps: WingTapTable::default(),
            noise: SensorNoise::default(),
            gust: GustCoupling::default(),
            envelope_deg: 15.0,
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("wing_area", self.wing_area),
            ("span", self.span),
            ("chord", self.chord),
            ("envelope_deg", self.envelope_deg),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive")));
            }
        }
        if !self.control_matrix().iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("derivative table must be finite".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn dynamic_pressure(&self, va: f64) -> f64 {
        0.5 * self.rho.value() * va * va
    }

    /// Control derivative matrix `D` (per degree, reference lengths applied).
    pub fn control_matrix(&self) -> EffectivenessMatrix {
        let a = &self.aero;
        let (b, c) = (self.span, self.chord);
        EffectivenessMatrix::from_row_slice(&[
            // Fx
            -a.cd_flaperon,
            a.cd_flaperon,
            0.0,
            0.0,
            // Fy
            a.cy_flaperon,
            a.cy_flaperon,
            0.0,
            a.cy_rudder,
            // Fz
            -a.cl_flaperon,
            a.cl_flaperon,
            -a.cl_elevator,
            0.0,
            // Tx
            b * a.roll_flaperon,
            b * a.roll_flaperon,
            0.0,
            b * a.roll_rudder,
            // Ty
            c * a.cm_flaperon,
            -c * a.cm_flaperon,
            c * a.cm_elevator,
            0.0,
            // Tz
            b * a.yaw_flaperon,
            b * a.yaw_flaperon,
            0.0,
            b * a.yaw_rudder,
        ])
    }

    /// True control effectiveness `q S D` at airspeed `va`, newtons per degree.
    pub fn control_effectiveness(&self, va: f64) -> EffectivenessMatrix {
        self.control_matrix() * (self.dynamic_pressure(va) * self.wing_area)
    }

    /// Baseline coefficient vector at freestream angles.
    pub fn baseline_coefficients(&self, alpha_deg: f64, beta_deg: f64) -> WrenchVector {
        let a = &self.aero;
        let cl = a.cl0 + a.cl_alpha * alpha_deg;
        let cd = a.cd0 + a.induced_drag * cl * cl;
        WrenchVector::from([
            -cd,
            a.cy_beta * beta_deg,
            -cl,
            self.span * a.roll_beta * beta_deg,
            self.chord * (a.cm0 + a.cm_alpha * alpha_deg),
            self.span * a.yaw_beta * beta_deg,
        ])
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GustMode {
    #[default]
    Off,
    /// Generator yawed: steady shear flow.
    Shear,
    /// Periodic vortex shedding.
    Shedding,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GustState {
    pub mode: GustMode,
    pub yaw_deg: f64,
    /// Shedding velocity amplitude, m/s.
    pub amplitude: f64,
    pub frequency_hz: f64,
    pub phase_rad: f64,
}

impl GustState {
    pub fn off() -> Self {
        Self::default()
    }

    pub fn shear(yaw_deg: f64) -> Self {
        Self {
            mode: GustMode::Shear,
            yaw_deg,
            ..Self::default()
        }
    }

    pub fn shedding(amplitude: f64, frequency_hz: f64, phase_rad: f64) -> Result<Self> {
        if !(amplitude >= 0.0) || !(frequency_hz > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "shedding needs amplitude >= 0 and frequency > 0, got {amplitude}, {frequency_hz}"
            )));
        }
        Ok(Self {
            mode: GustMode::Shedding,
            amplitude,
            frequency_hz,
            phase_rad,
            ..Self::default()
        })
    }

    /// Shedding at the Strouhal frequency for the given tunnel speed.
    pub fn shedding_at(amplitude: f64, va: f64, phase_rad: f64, params: &PlantParams) -> Result<Self> {
        let f = params.gust.strouhal * va.max(1e-3) / params.chord;
        Self::shedding(amplitude, f, phase_rad)
    }
}

/// Freestream state of the tunnel at one instant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TunnelCondition {
    pub va: f64,
    pub alpha_deg: f64,
    pub beta_deg: f64,
    pub gust: GustState,
    pub time: f64,
    /// Wake turbulence reaching the wing only (local angle of attack, degrees).
    /// Upstream probes never see it.
    pub wake_deg: f64,
}

impl TunnelCondition {
    pub fn steady(va: f64, alpha_deg: f64, beta_deg: f64) -> Self {
        Self {
            va,
            alpha_deg,
            beta_deg,
            gust: GustState::off(),
            time: 0.0,
            wake_deg: 0.0,
        }
    }

    pub fn freestream(&self) -> FlowState {
        FlowState::new(self.va, self.alpha_deg, self.beta_deg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    Probe0,
    Probe1,
    Wing,
}

/// Gust-induced departure from the freestream at one location.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GustPerturbation {
    pub d_va: f64,
    pub d_alpha_deg: f64,
    pub d_beta_deg: f64,
}

impl GustPerturbation {
    pub fn magnitude(&self) -> f64 {
        (self.d_va.powi(2) + self.d_alpha_deg.powi(2) + self.d_beta_deg.powi(2)).sqrt()
    }
}

pub fn gust_perturbation(cond: &TunnelCondition, loc: Location, params: &PlantParams) -> GustPerturbation {
    let mut p = generator_perturbation(cond, loc, params);
    if loc == Location::Wing {
        p.d_alpha_deg += cond.wake_deg;
    }
    p
}

fn generator_perturbation(cond: &TunnelCondition, loc: Location, params: &PlantParams) -> GustPerturbation {
    let g = &params.gust;
    let (weight, lag) = match loc {
        Location::Probe0 => (g.probe0_weight, 0.0),
        Location::Probe1 => (g.probe1_weight, 0.0),
        Location::Wing => (g.wing_weight, g.wing_phase_lag_rad),
    };
    match cond.gust.mode {
        GustMode::Off => GustPerturbation::default(),
        GustMode::Shear => GustPerturbation {
            d_beta_deg: weight * g.shear_beta_per_yaw * cond.gust.yaw_deg,
            ..GustPerturbation::default()
        },
        GustMode::Shedding => {
            if cond.gust.amplitude == 0.0 || cond.va <= 0.0 {
                return GustPerturbation::default();
            }
            let phase = 2.0 * PI * cond.gust.frequency_hz * cond.time + cond.gust.phase_rad - lag;
            let angle = (cond.gust.amplitude / cond.va).atan().to_degrees();
            GustPerturbation {
                d_va: weight * g.shedding_speed_ratio * cond.gust.amplitude * phase.cos(),
                d_alpha_deg: weight * angle * phase.sin(),
                d_beta_deg: weight * g.shedding_beta_ratio * angle * phase.cos(),
            }
        }
    }
}

/// Freestream plus the gust perturbation felt at `loc`.
pub fn local_flow(cond: &TunnelCondition, loc: Location, params: &PlantParams) -> FlowState {
    let p = gust_perturbation(cond, loc, params);
    FlowState::new(
        (cond.va + p.d_va).max(0.0),
        cond.alpha_deg + p.d_alpha_deg,
        cond.beta_deg + p.d_beta_deg,
    )
}

fn gaussian(rng: &mut Option<&mut PlantRng>, sigma: f64) -> f64 {
    match rng {
        Some(r) if sigma > 0.0 => sigma * r.sample::<f64, _>(StandardNormal),
        _ => 0.0,
    }
}

fn flow_direction(flow: &FlowState) -> [f64; 3] {
    let (a, b) = (flow.alpha_deg.to_radians(), flow.beta_deg.to_radians());
    [a.cos() * b.cos(), b.sin(), a.sin() * b.cos()]
}

/// Tap axes in body coordinates, ordered (center, up, down, left, right).
fn tap_axes(cone_deg: f64) -> [[f64; 3]; 5] {
    let (s, c) = cone_deg.to_radians().sin_cos();
    [[1.0, 0.0, 0.0], [c, 0.0, -s], [c, 0.0, s], [c, -s, 0.0], [c, s, 0.0]]
}

/// Five-hole probe response `q (1 - k sin^2 theta_i) + p_static + noise`, where
/// `theta_i` is the angle between the local flow and tap `i`'s axis. Noise is
/// added only when a generator is supplied.
pub fn probe_pressures(flow: &FlowState, params: &PlantParams, mut rng: Option<&mut PlantRng>) -> ProbePressures {
    let q = params.dynamic_pressure(flow.va);
    let v = flow_direction(flow);
    let k = params.probe.sensitivity;
    let sigma = params.noise.probe_tap;
    let p = tap_axes(params.probe.cone_angle_deg).map(|n| {
        let cos_theta = n[0] * v[0] + n[1] * v[1] + n[2] * v[2];
        let sin2 = (1.0 - cos_theta * cos_theta).max(0.0);
        q * (1.0 - k * sin2) + params.probe.static_pressure
    });
    ProbePressures(p.map(|pi| pi + gaussian(&mut rng, sigma)))
}

/// Wing-tap pressures for the current condition and surface positions.
pub fn wing_pressures(
    cond: &TunnelCondition,
    u: &Control,
    params: &PlantParams,
    mut rng: Option<&mut PlantRng>,
) -> [f64; WING_TAPS] {
    let q = params.dynamic_pressure(cond.va);
    let g = gust_perturbation(cond, Location::Wing, params);
    let gust_term = g.d_alpha_deg + g.d_beta_deg;
    let t = &params.wing_taps;
    let mut out = [0.0; WING_TAPS];
    for (i, ps) in out.iter_mut().enumerate() {
        *ps = q * (t.a[i] + t.b[i] * cond.alpha_deg + t.c[i] * u.right_flaperon() + t.d[i] * gust_term)
            + gaussian(&mut rng, params.noise.wing_tap);
    }
    out
}

/// Ground-truth wrench `q S (C0(alpha, beta) + D u + G g_wing)`.
pub fn true_wrench(cond: &TunnelCondition, u: &Control, params: &PlantParams) -> Result<Wrench> {
    let env = params.envelope_deg;
    if cond.alpha_deg.abs() > env || cond.beta_deg.abs() > env {
        return Err(Error::OutOfEnvelope(format!(
            "alpha {:.2} deg / beta {:.2} deg outside +/-{env} deg",
            cond.alpha_deg, cond.beta_deg
        )));
    }
    if !(cond.va >= 0.0) {
        return Err(Error::InvalidInput("airspeed must be non-negative".into()));
    }
    u.validate()?;
    let g = gust_perturbation(cond, Location::Wing, params);
    let gust = nalgebra::Matrix6x2::from_fn(|r, c| params.aero.gust[r][c])
        * nalgebra::Vector2::new(g.d_alpha_deg, g.d_beta_deg);
    let coeff =
        params.baseline_coefficients(cond.alpha_deg, cond.beta_deg) + params.control_matrix() * u.vector() + gust;
    let qs = params.dynamic_pressure(cond.va) * params.wing_area;
    Ok(Wrench::from_vector(&(coeff * qs)))
}

/// Force-balance reading of a true wrench.
pub fn measure_wrench(truth: &Wrench, params: &PlantParams, rng: &mut PlantRng) -> Wrench {
    let mut r = Some(rng);
    let mut w = truth.0;
    for (i, v) in w.iter_mut().enumerate() {
        let sigma = if i < 3 { params.noise.force } else { params.noise.torque };
        *v += gaussian(&mut r, sigma);
    }
    Wrench(w)
}

/// How probe flow features are produced for an observation.
#[derive(Clone, Copy, Debug)]
pub enum ProbeReadout<'a> {
    /// Exact local flow at each probe.
    Ideal,
    /// Noisy tap pressures run through trained calibrations.
    Calibrated {
        probe0: &'a ProbeCalibration,
        probe1: &'a ProbeCalibration,
    },
}

/// Sensor snapshot with the surfaces at `u`.
pub fn observe(
    cond: &TunnelCondition,
    u: &Control,
    params: &PlantParams,
    readout: &ProbeReadout<'_>,
    rng: &mut PlantRng,
) -> Result<Observation> {
    let f0 = local_flow(cond, Location::Probe0, params);
    let f1 = local_flow(cond, Location::Probe1, params);
    let (e0, e1) = match readout {
        ProbeReadout::Ideal => (f0, f1),
        ProbeReadout::Calibrated { probe0, probe1 } => {
            let p0 = probe_pressures(&f0, params, Some(rng));
            let p1 = probe_pressures(&f1, params, Some(rng));
            (
                probe0.estimate_flow(&p0, params.rho)?,
                probe1.estimate_flow(&p1, params.rho)?,
            )
        }
    };
    let ps = wing_pressures(cond, u, params, Some(rng));
    Ok(Observation::new(
        [e0.va, e0.alpha_deg, e0.beta_deg],
        [e1.va, e1.alpha_deg, e1.beta_deg],
        ps,
    ))
}
