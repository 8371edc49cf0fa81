//! Reverse-mode gradients of a small network against central differences.

use aeroalloc::nncore::{Activation, Network};

fn main() -> aeroalloc::Result<()> {
    let net = Network::new(&[3, 6, 4, 2], Activation::Tanh, Activation::Identity, 42)?;
    let x = [0.3, -1.2, 0.7];
    let upstream = [1.0, -0.5];
    let tape = net.backward(&x, &upstream)?;
    let analytic = tape.flatten();

    let objective = |n: &Network| -> f64 {
        let y = n.forward(&x).unwrap();
        y.iter().zip(upstream).map(|(a, b)| a * b).sum()
    };
    let h = 1e-5;
    let mut probe = net.clone();
    let params = net.params();
    let mut worst = 0.0f64;
    for j in 0..params.len() {
        let mut p = params.clone();
        p[j] += h;
        probe.set_params(&p)?;
        let up = objective(&probe);
        p[j] -= 2.0 * h;
        probe.set_params(&p)?;
        let down = objective(&probe);
        let fd = (up - down) / (2.0 * h);
        let rel = (fd - analytic[j]).abs() / fd.abs().max(analytic[j].abs()).max(1e-6);
        worst = worst.max(rel);
    }
    println!("{} parameters, worst relative error {worst:.2e}", params.len());
    Ok(())
}
