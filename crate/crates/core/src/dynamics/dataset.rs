use std::path::Path;

use super::types::{Control, Observation, Wrench, CONTROL_DIM, OBSERVATION_DIM, WRENCH_DIM};
use crate::error::{Error, Result};

/// Column order of the dynamics CSV.
pub const DYNAMICS_HEADER: [&str; OBSERVATION_DIM + CONTROL_DIM + WRENCH_DIM] = [
    "Va0", "alpha0", "beta0", "Va1", "alpha1", "beta1", "ps0", "ps1", "ps2", "ps3", "ps4", "ps5", "ps6", "d_la",
    "d_ra", "d_el", "d_ru", "Fx", "Fy", "Fz", "Tx", "Ty", "Tz",
];

/// One synchronized `(o, u, y)` triple.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DynamicsSample {
    pub observation: Observation,
    pub control: Control,
    pub wrench: Wrench,
}

impl DynamicsSample {
    fn to_record(self) -> Vec<String> {
        self.observation
            .0
            .iter()
            .chain(&self.control.0)
            .chain(&self.wrench.0)
            .map(|v| v.to_string())
            .collect()
    }

    fn from_record(rec: &csv::StringRecord) -> Result<Self> {
        if rec.len() != DYNAMICS_HEADER.len() {
            return Err(Error::DimensionMismatch {
                context: "dynamics CSV row",
                expected: DYNAMICS_HEADER.len(),
                actual: rec.len(),
            });
        }
        let mut v = [0.0; OBSERVATION_DIM + CONTROL_DIM + WRENCH_DIM];
        for (dst, field) in v.iter_mut().zip(rec.iter()) {
            *dst = field
                .trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("not a number: {field:?}")))?;
        }
        let mut o = [0.0; OBSERVATION_DIM];
        o.copy_from_slice(&v[..OBSERVATION_DIM]);
        let mut u = [0.0; CONTROL_DIM];
        u.copy_from_slice(&v[OBSERVATION_DIM..OBSERVATION_DIM + CONTROL_DIM]);
        let mut y = [0.0; WRENCH_DIM];
        y.copy_from_slice(&v[OBSERVATION_DIM + CONTROL_DIM..]);
        Ok(Self {
            observation: Observation(o),
            control: Control(u),
            wrench: Wrench(y),
        })
    }
}

pub fn write_dynamics_csv(path: impl AsRef<Path>, samples: &[DynamicsSample]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(DYNAMICS_HEADER)?;
    for s in samples {
        w.write_record(s.to_record())?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_dynamics_csv(path: impl AsRef<Path>) -> Result<Vec<DynamicsSample>> {
    let mut r = csv::Reader::from_path(path.as_ref())?;
    let header = r.headers()?.clone();
    if header.iter().ne(DYNAMICS_HEADER.iter().copied()) {
        return Err(Error::Format(format!(
            "unexpected dynamics header: {}",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    r.records().map(|rec| DynamicsSample::from_record(&rec?)).collect()
}

/// Splits a time series into contiguous blocks; every fifth block is held out
/// for validation (an 80/20 split that keeps neighbouring timesteps together).
pub fn block_split(samples: &[DynamicsSample], block_len: usize) -> (Vec<DynamicsSample>, Vec<DynamicsSample>) {
    let block_len = block_len.max(1);
    let mut train = Vec::with_capacity(samples.len());
    let mut val = Vec::with_capacity(samples.len() / 5 + 1);
    for (i, block) in samples.chunks(block_len).enumerate() {
        if i % 5 == 4 {
            val.extend_from_slice(block);
        } else {
            train.extend_from_slice(block);
        }
    }
    (train, val)
}
