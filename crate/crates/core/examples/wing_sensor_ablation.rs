//! Full five-arm ablation on one seed: wing taps on/off for both model
//! families, the symmetry prior, and closed-loop smoothness.

use aeroalloc::harness::{render_suite, run_ablation_suite, ExperimentConfig};

fn main() -> aeroalloc::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let cfg = ExperimentConfig {
        seed,
        ..ExperimentConfig::default()
    };
    let (report, _) = run_ablation_suite(&cfg)?;
    print!("{}", render_suite(&report));
    Ok(())
}
