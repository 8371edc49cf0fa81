use serde::{Deserialize, Serialize};

use super::types::{EffectivenessMatrix, WRENCH_DIM};
use crate::error::{Error, Result};
use crate::nncore::{huber, huber_slope};

/// Soft left/right prior on the two flaperon columns of `B`.
///
/// The residual `B[:,0] + s * B[:,1]` is zero for a perfectly mirrored pair;
/// each channel's residual is penalized with its own Huber threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetryConfig {
    pub signs: [f64; WRENCH_DIM],
    pub lambda: f64,
    pub delta: [f64; WRENCH_DIM],
}

impl Default for SymmetryConfig {
    fn default() -> Self {
        Self {
            signs: [1.0, -1.0, 1.0, -1.0, 1.0, -1.0],
            lambda: 0.1,
            delta: [0.5; WRENCH_DIM],
        }
    }
}

impl SymmetryConfig {
    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.signs.iter().any(|s| *s != 1.0 && *s != -1.0) {
            return Err(Error::InvalidParameter(format!(
                "symmetry signs must be +1 or -1, got {:?}",
                self.signs
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "symmetry weight must be non-negative, got {}",
                self.lambda
            )));
        }
        if self.delta.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "Huber thresholds must be positive, got {:?}",
                self.delta
            )));
        }
        Ok(())
    }

    /// Per-channel mirror residual `B[:,0] + s * B[:,1]`.
    pub fn residual(&self, b: &EffectivenessMatrix) -> [f64; WRENCH_DIM] {
        std::array::from_fn(|i| b[(i, 0)] + self.signs[i] * b[(i, 1)])
    }
}

pub fn symmetry_loss(b: &EffectivenessMatrix, cfg: &SymmetryConfig) -> Result<f64> {
    cfg.validate()?;
    if cfg.lambda == 0.0 {
        return Ok(0.0);
    }
    let r = cfg.residual(b);
    let mut total = 0.0;
    for i in 0..WRENCH_DIM {
        total += huber(r[i], cfg.delta[i])?;
    }
    Ok(cfg.lambda * total)
}

/// Gradient of [`symmetry_loss`] with respect to `B`; only columns 0 and 1 are nonzero.
pub fn symmetry_loss_grad(b: &EffectivenessMatrix, cfg: &SymmetryConfig) -> Result<EffectivenessMatrix> {
    cfg.validate()?;
    let mut g = EffectivenessMatrix::zeros();
    if cfg.lambda == 0.0 {
        return Ok(g);
    }
    let r = cfg.residual(b);
    for i in 0..WRENCH_DIM {
        let slope = cfg.lambda * huber_slope(r[i], cfg.delta[i])?;
        g[(i, 0)] = slope;
        g[(i, 1)] = slope * cfg.signs[i];
    }
    Ok(g)
}

/// Euclidean norm of the mirror residual.
pub fn symmetry_residual_norm(b: &EffectivenessMatrix, cfg: &SymmetryConfig) -> f64 {
    cfg.residual(b).iter().map(|r| r * r).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix(v: &[f64; 24]) -> EffectivenessMatrix {
        EffectivenessMatrix::from_row_slice(v)
    }

    #[test]
    fn exact_mirror_has_zero_loss() {
        let cfg = SymmetryConfig::default();
        let mut b = matrix(&std::array::from_fn(|i| (i as f64 * 0.37).sin()));
        for i in 0..WRENCH_DIM {
            b[(i, 1)] = -cfg.signs[i] * b[(i, 0)];
        }
        assert_eq!(symmetry_loss(&b, &cfg).unwrap(), 0.0);
        assert_eq!(symmetry_residual_norm(&b, &cfg), 0.0);
    }

    #[test]
    fn lift_channel_imbalance_contribution() {
        let cfg = SymmetryConfig {
            lambda: 1.0,
            delta: [1.0; WRENCH_DIM],
            ..SymmetryConfig::default()
        };
        let mut b = EffectivenessMatrix::zeros();
        b[(2, 0)] = 6.96;
        b[(2, 1)] = -1.81;
        assert!((cfg.residual(&b)[2] - 5.15).abs() < 1e-12);
        let loss = symmetry_loss(&b, &cfg).unwrap();
        assert!((loss - 4.65).abs() < 1e-12, "{loss}");
    }

    #[test]
    fn zero_weight_disables_the_penalty() {
        let cfg = SymmetryConfig::default().with_lambda(0.0);
        let b = matrix(&[3.0; 24]);
        assert_eq!(symmetry_loss(&b, &cfg).unwrap(), 0.0);
        assert_eq!(symmetry_loss_grad(&b, &cfg).unwrap(), EffectivenessMatrix::zeros());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let b = EffectivenessMatrix::zeros();
        let bad_sign = SymmetryConfig {
            signs: [1.0, 0.5, 1.0, -1.0, 1.0, -1.0],
            ..SymmetryConfig::default()
        };
        assert!(symmetry_loss(&b, &bad_sign).is_err());
        assert!(symmetry_loss(&b, &SymmetryConfig::default().with_lambda(-1.0)).is_err());
        let bad_delta = SymmetryConfig {
            delta: [0.5, 0.5, 0.0, 0.5, 0.5, 0.5],
            ..SymmetryConfig::default()
        };
        assert!(symmetry_loss(&b, &bad_delta).is_err());
    }

    proptest! {
        #[test]
        fn loss_nonnegative_and_zero_only_at_mirror(
            v in prop::array::uniform24(-5.0f64..5.0),
            lambda in 0.01f64..3.0,
        ) {
            let cfg = SymmetryConfig::default().with_lambda(lambda);
            let b = matrix(&v);
            let loss = symmetry_loss(&b, &cfg).unwrap();
            prop_assert!(loss >= 0.0);
            let any_residual = cfg.residual(&b).iter().any(|r| *r != 0.0);
            prop_assert_eq!(loss == 0.0, !any_residual);
        }

        #[test]
        fn mirroring_twice_restores_loss(v in prop::array::uniform24(-5.0f64..5.0)) {
            let cfg = SymmetryConfig::default();
            let b = matrix(&v);
            // Swap the flaperon columns, flipping through s each time.
            let mirror = |m: &EffectivenessMatrix| {
                let mut out = *m;
                for i in 0..WRENCH_DIM {
                    out[(i, 0)] = cfg.signs[i] * m[(i, 1)];
                    out[(i, 1)] = cfg.signs[i] * m[(i, 0)];
                }
                out
            };
            let once = mirror(&b);
            let twice = mirror(&once);
            prop_assert_eq!(twice, b);
            let l0 = symmetry_loss(&b, &cfg).unwrap();
            prop_assert!((symmetry_loss(&once, &cfg).unwrap() - l0).abs() <= 1e-12 * (1.0 + l0));
            prop_assert_eq!(symmetry_loss(&twice, &cfg).unwrap(), l0);
        }

        #[test]
        fn gradient_matches_finite_differences(v in prop::array::uniform24(-2.0f64..2.0)) {
            let cfg = SymmetryConfig { lambda: 0.7, delta: [0.3, 0.5, 1.0, 2.0, 0.1, 0.8], ..SymmetryConfig::default() };
            let b = matrix(&v);
            let g = symmetry_loss_grad(&b, &cfg).unwrap();
            let h = 1e-6;
            for idx in 0..24 {
                let (r, c) = (idx / 4, idx % 4);
                let res = cfg.residual(&b)[r];
                // Skip points straddling the Huber kink.
                prop_assume!((res.abs() - cfg.delta[r]).abs() > 1e-4);
                let mut bp = b; bp[(r, c)] += h;
                let mut bm = b; bm[(r, c)] -= h;
                let fd = (symmetry_loss(&bp, &cfg).unwrap() - symmetry_loss(&bm, &cfg).unwrap()) / (2.0 * h);
                prop_assert!((fd - g[(r, c)]).abs() < 1e-6);
            }
        }
    }
}
