//! One allocation step: build the normal equations, certify them and solve.

use aeroalloc::allocator::{build_normal_equations, pd_certificate, solve, AllocationProblem};
use aeroalloc::dynamics::{Control, Wrench};
use aeroalloc::plant::{true_wrench, PlantParams, TunnelCondition};

fn main() -> aeroalloc::Result<()> {
    let plant = PlantParams::default();
    let cond = TunnelCondition::steady(10.0, 4.0, 0.0);
    let a = true_wrench(&cond, &Control::ZERO, &plant)?.vector();
    let b = plant.control_effectiveness(cond.va);

    // Ask for the wrench that a known deflection would produce.
    let wanted = Control([6.0, -6.0, -4.0, 3.0]);
    let target = true_wrench(&cond, &wanted, &plant)?;
    for (lambda0, lambda1) in [(0.01, 0.1), (1e-4, 1e-4)] {
        let p = AllocationProblem {
            a,
            b,
            target,
            u_prev: Control::ZERO,
            u_trim: Control::ZERO,
            lambda0,
            lambda1,
        };
        let (q, c) = build_normal_equations(&p)?;
        println!("lambda0 {lambda0}, lambda1 {lambda1}");
        println!("Q = {q:.4}c = {c:.4}");
        println!("smallest eigenvalue of Q: {:.4}", pd_certificate(&q));

        // Regularization pulls u* toward trim and the previous command; with
        // small weights the requested deflection is recovered.
        let sol = solve(&p)?;
        println!("u* = {:?} (requested {:?})", round(&sol.u_star), wanted.0);
        println!(
            "objective {:.5}, residual {:.5}",
            sol.objective_value, sol.residual_norm
        );
        let achieved: Wrench = true_wrench(&cond, &sol.u_star, &plant)?;
        println!("achieved {:?}\ntarget   {:?}\n", round6(&achieved), round6(&target));
    }
    Ok(())
}

fn round(u: &Control) -> [f64; 4] {
    u.0.map(|v| (v * 1000.0).round() / 1000.0)
}

fn round6(w: &Wrench) -> [f64; 6] {
    w.0.map(|v| (v * 1000.0).round() / 1000.0)
}
