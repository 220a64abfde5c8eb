//! The small-redshift limit: rescaled relativistic stars approach the
//! Lane–Emden star linearly in kappa, and the Lane–Emden reduced operator
//! has exactly one negative direction.
//!
//! ```bash
//! cargo run --release --example newtonian_limit
//! ```

use std::sync::Arc;

use relstar::eos::EquationOfState;
use relstar::newtonian::{newtonian_limit_check, sigma_zero, solve_lane_emden};
use relstar::spectral::SpectralConfig;
use relstar::tov::SolverConfig;

fn main() -> relstar::Result<()> {
    let solver = SolverConfig::default();
    for gamma in [1.5, 5.0 / 3.0, 1.9, 2.0] {
        let le = solve_lane_emden(gamma, 1.0, &solver)?;
        let pair = sigma_zero(gamma, 1.0, &solver, &SpectralConfig::default())?;
        println!(
            "gamma {gamma:.4}: S0 = {:.10}, M0 = {:.10}, n_minus = {}, kernel gap {:.4}",
            le.s0,
            le.m0_total,
            pair.morse_index()?.n_minus,
            pair.kernel_gap()?.gap
        );
    }
    println!("closed form for gamma = 2: S0 = sqrt(pi/2) = {:.10}\n", (std::f64::consts::PI / 2.0).sqrt());

    let eos = Arc::new(EquationOfState::hybrid_causal(1.0, 5.0 / 3.0, 1e12)?);
    let report = newtonian_limit_check(&eos, &[0.2, 0.1, 0.05, 0.025, 0.0125], &solver)?;
    print!("{}", report.csv());
    println!("E(kappa) ~ {:.4} kappa^{:.4}", report.c, report.q);
    Ok(())
}
