use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const OBSERVATION_DIM: usize = 13;
pub const PROBE_FEATURES: usize = 6;
pub const WING_TAPS: usize = 7;
pub const CONTROL_DIM: usize = 4;
pub const WRENCH_DIM: usize = 6;

/// Symmetric actuator travel, degrees.
pub const ACTUATOR_LIMIT_DEG: f64 = 25.0;

pub const WRENCH_CHANNELS: [&str; WRENCH_DIM] = ["Fx", "Fy", "Fz", "Tx", "Ty", "Tz"];
pub const CONTROL_CHANNELS: [&str; CONTROL_DIM] = ["d_la", "d_ra", "d_el", "d_ru"];

pub type ControlVector = SVector<f64, CONTROL_DIM>;
pub type WrenchVector = SVector<f64, WRENCH_DIM>;
/// Control effectiveness, rows are wrench channels, columns are surfaces.
pub type EffectivenessMatrix = SMatrix<f64, WRENCH_DIM, CONTROL_DIM>;

/// Model input: `[Va0, alpha0, beta0, Va1, alpha1, beta1, ps0..ps6]`
/// (m/s, degrees, Pa).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation(pub [f64; OBSERVATION_DIM]);

impl Observation {
    pub fn new(probe0: [f64; 3], probe1: [f64; 3], wing: [f64; WING_TAPS]) -> Self {
        let mut o = [0.0; OBSERVATION_DIM];
        o[..3].copy_from_slice(&probe0);
        o[3..6].copy_from_slice(&probe1);
        o[6..].copy_from_slice(&wing);
        Self(o)
    }

    pub fn probe(&self, index: usize) -> [f64; 3] {
        let s = &self.0[3 * index..3 * index + 3];
        [s[0], s[1], s[2]]
    }

    pub fn wing_pressures(&self) -> &[f64] {
        &self.0[PROBE_FEATURES..]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Surface deflections in degrees: left flaperon, right flaperon, elevator, rudder.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Control(pub [f64; CONTROL_DIM]);

impl Control {
    pub const ZERO: Control = Control([0.0; CONTROL_DIM]);

    pub fn new(la: f64, ra: f64, el: f64, ru: f64) -> Self {
        Self([la, ra, el, ru])
    }

    pub fn left_flaperon(&self) -> f64 {
        self.0[0]
    }

    pub fn right_flaperon(&self) -> f64 {
        self.0[1]
    }

    pub fn vector(&self) -> ControlVector {
        ControlVector::from(self.0)
    }

    pub fn from_vector(v: &ControlVector) -> Self {
        Self([v[0], v[1], v[2], v[3]])
    }

    pub fn within_limits(&self) -> bool {
        self.0.iter().all(|d| d.abs() <= ACTUATOR_LIMIT_DEG)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.0.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("control must be finite".into()));
        }
        Ok(())
    }
}

/// Forces (N) then moments (N m): `[Fx, Fy, Fz, Tx, Ty, Tz]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Wrench(pub [f64; WRENCH_DIM]);

impl Wrench {
    pub fn vector(&self) -> WrenchVector {
        WrenchVector::from(self.0)
    }

    pub fn from_vector(v: &WrenchVector) -> Self {
        let mut w = [0.0; WRENCH_DIM];
        w.copy_from_slice(v.as_slice());
        Self(w)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}
