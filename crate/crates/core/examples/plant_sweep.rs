//! Look inside the synthetic tunnel: wrench, probe and wing-tap responses
//! across angle of attack, and the gust's reach at each sensor.

use aeroalloc::dynamics::Control;
use aeroalloc::plant::{
    gust_perturbation, probe_pressures, true_wrench, wing_pressures, GustState, Location, PlantParams, TunnelCondition,
};

fn main() -> aeroalloc::Result<()> {
    let plant = PlantParams::default();
    println!(
        "{:>6} {:>8} {:>8} {:>10} {:>8} {:>8}",
        "alpha", "Fz", "Ty", "down-up", "ps0", "ps4"
    );
    for alpha in [-10.0, -5.0, 0.0, 5.0, 10.0] {
        let cond = TunnelCondition::steady(10.0, alpha, 0.0);
        let w = true_wrench(&cond, &Control::ZERO, &plant)?;
        let p = probe_pressures(&cond.freestream(), &plant, None);
        let ps = wing_pressures(&cond, &Control::ZERO, &plant, None);
        println!(
            "{alpha:>6.1} {:>8.3} {:>8.4} {:>10.3} {:>8.2} {:>8.2}",
            w.0[2],
            w.0[4],
            p.0[2] - p.0[1],
            ps[0],
            ps[4]
        );
    }

    println!("\ncontrol effectiveness at 10 and 14 m/s (N or N m per degree):");
    for va in [10.0, 14.0] {
        println!("{va} m/s\n{:.4}", plant.control_effectiveness(va));
    }

    let mut cond = TunnelCondition::steady(10.0, 0.0, 0.0);
    cond.gust = GustState::shedding_at(1.0, 10.0, 0.0, &plant)?;
    cond.time = 0.05;
    for loc in [Location::Probe0, Location::Probe1, Location::Wing] {
        let g = gust_perturbation(&cond, loc, &plant);
        println!("{loc:?}: gust perturbation magnitude {:.3} deg", g.magnitude());
    }
    Ok(())
}
