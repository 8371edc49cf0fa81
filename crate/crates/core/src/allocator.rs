//! Regularized least-squares control allocation.
//!
//! Minimizes `|y - A - B u|² + λ1 |u - u_prev|² + λ0 |u - u_trim|²` in closed
//! form, then clamps to the actuator limits.

use std::io::Write;
use std::path::Path;

use nalgebra::{Matrix4, SymmetricEigen};

use crate::dynamics::{
    Control, ControlVector, EffectivenessMatrix, Observation, Wrench, WrenchModel, WrenchVector, ACTUATOR_LIMIT_DEG,
    CONTROL_CHANNELS, CONTROL_DIM, WRENCH_CHANNELS, WRENCH_DIM,
};
use crate::error::{Error, Result};

pub const DEFAULT_LAMBDA0: f64 = 0.01;
pub const DEFAULT_LAMBDA1: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct AllocationProblem {
    pub a: WrenchVector,
    pub b: EffectivenessMatrix,
    pub target: Wrench,
    pub u_prev: Control,
    pub u_trim: Control,
    /// Damping toward trim.
    pub lambda0: f64,
    /// Smoothness toward the previous command.
    pub lambda1: f64,
}

impl AllocationProblem {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda0 >= 0.0 && self.lambda1 >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "regularization weights must be non-negative, got {} and {}",
                self.lambda0, self.lambda1
            )));
        }
        if !(self.lambda0 + self.lambda1 > 0.0) {
            return Err(Error::NotStrictlyConvex(self.lambda0 + self.lambda1));
        }
        Ok(())
    }

    /// Objective value at `u`.
    pub fn objective(&self, u: &ControlVector) -> f64 {
        let r = self.target.vector() - self.a - self.b * u;
        r.norm_squared()
            + self.lambda1 * (u - self.u_prev.vector()).norm_squared()
            + self.lambda0 * (u - self.u_trim.vector()).norm_squared()
    }
}

/// Stationarity system `Q u = c` of the allocation objective.
pub fn build_normal_equations(p: &AllocationProblem) -> Result<(Matrix4<f64>, ControlVector)> {
    p.validate()?;
    let q = 2.0 * (p.b.transpose() * p.b + Matrix4::identity() * (p.lambda0 + p.lambda1));
    let c = 2.0
        * (p.b.transpose() * (p.target.vector() - p.a) + p.u_prev.vector() * p.lambda1 + p.u_trim.vector() * p.lambda0);
    Ok((q, c))
}

/// Smallest eigenvalue of `Q`; positive definiteness is certified when it is
/// at least `2(λ0 + λ1)` (up to rounding).
pub fn pd_certificate(q: &Matrix4<f64>) -> f64 {
    SymmetricEigen::new(*q).eigenvalues.min()
}

#[derive(Clone, Debug, PartialEq)]
pub struct AllocationSolution {
    /// Command after clamping to the actuator limits.
    pub u_star: Control,
    /// Exact minimizer before clamping.
    pub u_unclamped: Control,
    pub objective_value: f64,
    /// Tracking residual `|y - A - B u*|`.
    pub residual_norm: f64,
    pub clamped: [bool; CONTROL_DIM],
}

impl AllocationSolution {
    pub fn any_clamped(&self) -> bool {
        self.clamped.iter().any(|c| *c)
    }
}

pub fn solve(p: &AllocationProblem) -> Result<AllocationSolution> {
    let (q, c) = build_normal_equations(p)?;
    if !q.iter().chain(c.iter()).all(|v| v.is_finite()) {
        return Err(Error::Numerical("non-finite allocation problem".into()));
    }
    let chol = q
        .cholesky()
        .ok_or_else(|| Error::Numerical("normal matrix is not positive definite".into()))?;
    let u = chol.solve(&c);
    let mut clamped = [false; CONTROL_DIM];
    let mut star = u;
    for k in 0..CONTROL_DIM {
        if star[k].abs() > ACTUATOR_LIMIT_DEG {
            star[k] = star[k].clamp(-ACTUATOR_LIMIT_DEG, ACTUATOR_LIMIT_DEG);
            clamped[k] = true;
            log::debug!("{} clamped from {:.3} deg", CONTROL_CHANNELS[k], u[k]);
        }
    }
    Ok(AllocationSolution {
        u_star: Control::from_vector(&star),
        u_unclamped: Control::from_vector(&u),
        objective_value: p.objective(&star),
        residual_norm: (p.target.vector() - p.a - p.b * star).norm(),
        clamped,
    })
}

/// The closed-loop counterpart of the model: hands out observations and
/// reports the wrench a command actually produced.
pub trait Environment {
    /// Observation at `step`, with the surfaces held at `surfaces`.
    fn observe(&mut self, step: usize, surfaces: &Control) -> Result<Observation>;
    fn achieved(&mut self, step: usize, command: &Control) -> Result<Wrench>;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackingConfig {
    pub lambda0: f64,
    pub lambda1: f64,
    pub u_trim: Control,
    pub u_initial: Control,
    pub dt: f64,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self {
            lambda0: DEFAULT_LAMBDA0,
            lambda1: DEFAULT_LAMBDA1,
            u_trim: Control::ZERO,
            u_initial: Control::ZERO,
            dt: 0.02,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackingStep {
    pub t: f64,
    pub target: Wrench,
    pub predicted: Wrench,
    pub achieved: Wrench,
    pub u: Control,
    pub clamped: [bool; CONTROL_DIM],
}

impl TrackingStep {
    pub fn tracking_error(&self) -> f64 {
        (self.achieved.vector() - self.target.vector()).norm()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrackingLog {
    pub steps: Vec<TrackingStep>,
}

impl TrackingLog {
    pub fn controls(&self) -> Vec<Control> {
        self.steps.iter().map(|s| s.u).collect()
    }

    /// RMS of the achieved-minus-target error over all steps and channels.
    pub fn tracking_rmse(&self) -> f64 {
        if self.steps.is_empty() {
            return 0.0;
        }
        let sum: f64 = self.steps.iter().map(|s| s.tracking_error().powi(2)).sum();
        (sum / (self.steps.len() * WRENCH_DIM) as f64).sqrt()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::new();
        let mut header = vec!["t".to_string()];
        for prefix in ["target", "pred", "ach"] {
            header.extend(WRENCH_CHANNELS.iter().map(|c| format!("{prefix}_{c}")));
        }
        header.extend(CONTROL_CHANNELS.iter().map(|c| format!("u_{c}")));
        header.extend(CONTROL_CHANNELS.iter().map(|c| format!("clamped_{c}")));
        writeln!(out, "{}", header.join(",")).unwrap();
        for s in &self.steps {
            let mut row = vec![s.t.to_string()];
            for w in [&s.target, &s.predicted, &s.achieved] {
                row.extend(w.0.iter().map(|v| v.to_string()));
            }
            row.extend(s.u.0.iter().map(|v| v.to_string()));
            row.extend(s.clamped.iter().map(|c| u8::from(*c).to_string()));
            writeln!(out, "{}", row.join(",")).unwrap();
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Runs observe → linearize → solve → actuate for every target, threading
/// the previous command through the smoothness term.
pub fn track_sequence(
    model: &impl WrenchModel,
    env: &mut impl Environment,
    targets: &[Wrench],
    cfg: &TrackingConfig,
) -> Result<TrackingLog> {
    let mut u_prev = cfg.u_initial;
    let mut log = TrackingLog {
        steps: Vec::with_capacity(targets.len()),
    };
    for (step, target) in targets.iter().enumerate() {
        let o = env.observe(step, &u_prev)?;
        if !o.is_finite() {
            return Err(Error::Numerical(format!("non-finite observation at step {step}")));
        }
        let (a, b) = model.local_affine(&o, &u_prev)?;
        let sol = solve(&AllocationProblem {
            a,
            b,
            target: *target,
            u_prev,
            u_trim: cfg.u_trim,
            lambda0: cfg.lambda0,
            lambda1: cfg.lambda1,
        })?;
        if sol.any_clamped() {
            log::info!("step {step}: command saturated {:?}", sol.clamped);
        }
        let predicted = model.predict_wrench(&o, &sol.u_star)?;
        let achieved = env.achieved(step, &sol.u_star)?;
        if !predicted.is_finite() || !achieved.is_finite() {
            return Err(Error::Numerical(format!("non-finite wrench at step {step}")));
        }
        log.steps.push(TrackingStep {
            t: step as f64 * cfg.dt,
            target: *target,
            predicted,
            achieved,
            u: sol.u_star,
            clamped: sol.clamped,
        });
        u_prev = sol.u_star;
    }
    Ok(log)
}
