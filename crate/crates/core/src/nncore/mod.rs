//! Small feedforward-network engine: dense layers, reverse-mode gradients,
//! the Adam update and the Huber penalty. Shared by probe calibration and
//! the wrench models.

mod document;
mod huber;
mod network;
mod optim;

pub use document::{LayerDocument, NetworkDocument, NETWORK_FORMAT_VERSION};
pub use huber::{huber, huber_slope};
pub use network::{Activation, GradientTape, Layer, LayerGrad, Network, Trace};
pub use optim::{AdamConfig, OptimizerState};

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single(weights: Vec<f64>, bias: Vec<f64>, act: Activation, i: usize, o: usize) -> Network {
        Network::from_layers(vec![Layer::new(i, o, weights, bias, act).unwrap()]).unwrap()
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let net = single(vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0], Activation::Identity, 2, 2);
        assert_eq!(net.forward(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn zero_tanh_layer_outputs_zero() {
        let net = Network::zeros(&[3, 4], Activation::Tanh, Activation::Tanh).unwrap();
        assert_eq!(net.forward(&[5.0, -2.0, 9.0]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let net = Network::new(&[3, 4, 2], Activation::Tanh, Activation::Identity, 1).unwrap();
        assert!(matches!(
            net.forward(&[1.0, 2.0]),
            Err(crate::Error::DimensionMismatch { .. })
        ));
        assert!(net.backward(&[1.0, 2.0, 3.0], &[1.0]).is_err());
    }

    // Hand-coded re-evaluation of the same arithmetic, independent of Layer::forward_into.
    fn oracle_forward(net: &Network, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        for layer in net.layers() {
            let mut out = vec![0.0; layer.out_dim()];
            for o in 0..layer.out_dim() {
                let mut z = layer.bias()[o];
                for i in 0..layer.in_dim() {
                    z += layer.weights()[o * layer.in_dim() + i] * a[i];
                }
                out[o] = match layer.activation() {
                    Activation::Tanh => z.tanh(),
                    Activation::Identity => z,
                };
            }
            a = out;
        }
        a
    }

    #[test]
    fn two_layer_forward_matches_oracle() {
        let net = Network::new(&[3, 5, 2], Activation::Tanh, Activation::Identity, 42).unwrap();
        let x = [0.3, -1.2, 0.7];
        let got = net.forward(&x).unwrap();
        let want = oracle_forward(&net, &x);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-14);
        }
        assert_eq!(got, net.forward(&x).unwrap());
    }

    #[test]
    fn linear_scalar_gradient() {
        let net = single(vec![2.0], vec![0.5], Activation::Identity, 1, 1);
        let tape = net.backward(&[3.0], &[1.0]).unwrap();
        assert_eq!(tape.layers()[0].weights, vec![3.0]);
        assert_eq!(tape.layers()[0].bias, vec![1.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_tape() {
        let net = Network::new(&[4, 6, 3], Activation::Tanh, Activation::Identity, 3).unwrap();
        let tape = net.backward(&[0.1, 0.2, 0.3, 0.4], &[0.0; 3]).unwrap();
        assert!(tape.is_zero());
    }

    fn relative_error(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    fn check_gradients(net: &Network, x: &[f64], upstream: &[f64]) {
        let tape = net.backward(x, upstream).unwrap().flatten();
        let objective = |n: &Network| -> f64 { n.forward(x).unwrap().iter().zip(upstream).map(|(y, u)| y * u).sum() };
        let h = 1e-5;
        for (i, analytic) in tape.iter().enumerate() {
            let mut plus = net.clone();
            *plus.param_mut(i).unwrap() += h;
            let mut minus = net.clone();
            *minus.param_mut(i).unwrap() -= h;
            let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
            assert!(
                relative_error(*analytic, fd) < 1e-4,
                "param {i}: analytic {analytic} vs fd {fd}"
            );
        }
    }

    #[test]
    fn input_jacobian_matches_finite_differences() {
        let net = Network::new(&[4, 7, 3], Activation::Tanh, Activation::Identity, 11).unwrap();
        let x = [0.2, -0.4, 0.9, 0.1];
        let jac = net.input_jacobian(&x).unwrap();
        let h = 1e-6;
        for i in 0..4 {
            let mut xp = x;
            xp[i] += h;
            let mut xm = x;
            xm[i] -= h;
            let yp = net.forward(&xp).unwrap();
            let ym = net.forward(&xm).unwrap();
            for k in 0..3 {
                let fd = (yp[k] - ym[k]) / (2.0 * h);
                assert!(relative_error(jac[k][i], fd) < 1e-6);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn random_networks_pass_gradient_check(
            seed in 0u64..10_000,
            widths in prop::collection::vec(1usize..=8, 2..=4),
            xs in prop::collection::vec(-2.0f64..2.0, 8),
            us in prop::collection::vec(-1.5f64..1.5, 8),
        ) {
            let net = Network::new(&widths, Activation::Tanh, Activation::Identity, seed).unwrap();
            let x = &xs[..widths[0]];
            let u = &us[..*widths.last().unwrap()];
            check_gradients(&net, x, u);
        }

        #[test]
        fn huber_is_even_and_slope_bounded(e in -50.0f64..50.0, delta in 1e-3f64..10.0) {
            prop_assert_eq!(huber(e, delta).unwrap(), huber(-e, delta).unwrap());
            prop_assert!(huber_slope(e, delta).unwrap().abs() <= delta);
        }

        #[test]
        fn huber_monotone_in_magnitude(a in 0.0f64..20.0, b in 0.0f64..20.0, delta in 1e-3f64..5.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(huber(lo, delta).unwrap() <= huber(hi, delta).unwrap());
        }
    }

    #[test]
    fn huber_branches() {
        assert_eq!(huber(0.5, 1.0).unwrap(), 0.125);
        assert_eq!(huber(2.0, 1.0).unwrap(), 1.5);
        let quadratic = 0.5 * 1.0f64 * 1.0;
        let linear = 1.0 * (1.0 - 0.5 * 1.0);
        assert_eq!(quadratic, linear);
        assert_eq!(huber(1.0, 1.0).unwrap(), 0.5);
        assert!(huber(1.0, 0.0).is_err());
        assert!(huber(1.0, -2.0).is_err());
        assert!(huber_slope(1.0, 0.0).is_err());
    }

    #[test]
    fn adam_zero_gradient_keeps_parameters() {
        let mut net = Network::new(&[2, 3, 1], Activation::Tanh, Activation::Identity, 5).unwrap();
        let before = net.params();
        let mut opt = OptimizerState::new(&net, AdamConfig::default()).unwrap();
        let tape = net.zero_tape();
        opt.step(&mut net, &tape).unwrap();
        assert_eq!(net.params(), before);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut net = single(vec![1.0], vec![0.0], Activation::Identity, 1, 1);
        let mut opt = OptimizerState::new(
            &net,
            AdamConfig {
                learning_rate: 0.1,
                ..AdamConfig::default()
            },
        )
        .unwrap();
        // d<1, w*x>/dw at x = 1 is 1.
        let tape = net.backward(&[1.0], &[1.0]).unwrap();
        assert_eq!(tape.layers()[0].weights, vec![1.0]);
        let mut only_weight = tape.clone();
        only_weight.layers[0].bias[0] = 0.0;
        opt.step(&mut net, &only_weight).unwrap();
        // m_hat = 1, v_hat = 1 -> update = 0.1 / (1 + 1e-8)
        let expected = 1.0 - 0.1 / (1.0 + 1e-8);
        assert!((net.params()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn adam_descends_quadratic() {
        let mut net = single(vec![1.0], vec![0.0], Activation::Identity, 1, 1);
        let mut opt = OptimizerState::new(
            &net,
            AdamConfig {
                learning_rate: 0.01,
                ..AdamConfig::default()
            },
        )
        .unwrap();
        let mut trajectory = vec![];
        for _ in 0..300 {
            let w = net.params()[0];
            let mut tape = net.zero_tape();
            tape.layers[0].weights[0] = 2.0 * w;
            opt.step(&mut net, &tape).unwrap();
            trajectory.push(net.params()[0].abs());
        }
        // Monotone envelope over the approach phase, then well below the start.
        for pair in trajectory[..80].windows(2) {
            assert!(pair[1] < pair[0]);
        }
        let late_max = trajectory[200..].iter().cloned().fold(0.0, f64::max);
        assert!(late_max < 0.1, "late |w| = {late_max}");
    }

    #[test]
    fn optimizer_rejects_mismatched_tape() {
        let mut a = Network::new(&[2, 3, 1], Activation::Tanh, Activation::Identity, 1).unwrap();
        let b = Network::new(&[2, 4, 1], Activation::Tanh, Activation::Identity, 1).unwrap();
        let mut opt = OptimizerState::new(&a, AdamConfig::default()).unwrap();
        assert!(opt.step(&mut a, &b.zero_tape()).is_err());
    }

    #[test]
    fn json_round_trip_preserves_network() {
        let net = Network::new(&[5, 4, 3], Activation::Tanh, Activation::Identity, 9).unwrap();
        let text = net.to_json().unwrap();
        assert!(text.contains("\"nncore-v1\""));
        let back = Network::from_json(&text).unwrap();
        assert_eq!(back, net);
        let x = [0.1, 0.2, 0.3, 0.4, 0.5];
        assert_eq!(back.forward(&x).unwrap(), net.forward(&x).unwrap());
    }

    #[test]
    fn json_rejects_wrong_version_and_bad_shapes() {
        let net = Network::new(&[2, 2], Activation::Tanh, Activation::Identity, 9).unwrap();
        let mut doc = NetworkDocument::from(&net);
        doc.version = "nncore-v0".into();
        assert!(Network::try_from(doc.clone()).is_err());
        doc.version = NETWORK_FORMAT_VERSION.into();
        doc.layers[0].weights.pop();
        assert!(Network::try_from(doc).is_err());
    }

    #[test]
    fn initialization_is_seeded_and_bounded() {
        let a = Network::new(&[6, 8, 2], Activation::Tanh, Activation::Identity, 77).unwrap();
        let b = Network::new(&[6, 8, 2], Activation::Tanh, Activation::Identity, 77).unwrap();
        let c = Network::new(&[6, 8, 2], Activation::Tanh, Activation::Identity, 78).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let limit = (6.0f64 / 14.0).sqrt();
        assert!(a.layers()[0].weights().iter().all(|w| w.abs() <= limit));
        assert!(a.layers()[0].bias().iter().all(|b| *b == 0.0));
    }
}
