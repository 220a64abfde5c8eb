//! Negative index and kernel gap of the reduced radial operator across the
//! spiral, plus the null-direction check built from neighbouring stars.
//!
//! ```bash
//! cargo run --release --example sigma_spectrum
//! ```

use std::sync::Arc;

use relstar::eos::EquationOfState;
use relstar::spectral::{null_direction_residual, sigma_at, SpectralConfig};
use relstar::tov::SolverConfig;

fn main() -> relstar::Result<()> {
    let eos = Arc::new(EquationOfState::hybrid_causal(1.0, 5.0 / 3.0, 1e12)?);
    let solver = SolverConfig::default();
    let cfg = SpectralConfig::default();

    println!("{:>8} {:>8} {:>10} {:>12} {:>14}", "kappa", "n_minus", "converged", "kernel gap", "lowest theta");
    for kappa in [0.05, 0.5, 1.0, 1.38, 2.0, 3.0, 4.0, 6.0, 8.0] {
        let pair = sigma_at(&eos, kappa, &solver, &cfg)?;
        let index = pair.morse_index()?;
        let gap = pair.kernel_gap()?;
        let lowest = pair.lowest_eigenpairs(1)?;
        println!(
            "{kappa:8.3} {:8} {:>10} {:12.3e} {:14.6}",
            index.n_minus, index.converged, gap.gap, lowest[0].theta
        );
    }

    println!("\nweak residual of the operator on dy/dkappa:");
    for kappa in [0.3, 1.0, 2.5] {
        let res = null_direction_residual(&eos, kappa, 1e-4 * kappa, &solver, &cfg)?;
        println!("  kappa {kappa:4}: {res:.3e}");
    }
    Ok(())
}
