//! Solves one equilibrium and prints its global quantities and a few
//! profile samples, including the vacuum continuation outside.
//!
//! ```bash
//! cargo run --release --example solve_star -- 0.8
//! ```

use std::sync::Arc;

use relstar::eos::EquationOfState;
use relstar::tov::{solve_steady_state, SolverConfig};

fn main() -> relstar::Result<()> {
    let kappa: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0.8);
    let eos = Arc::new(EquationOfState::hybrid_causal(1.0, 5.0 / 3.0, 1e12)?);
    let star = solve_steady_state(&eos, kappa, &SolverConfig::default())?;

    println!("kappa          {kappa}");
    println!("redshift z     {:.10}", star.z);
    println!("mass M         {:.12e}", star.mass);
    println!("radius R       {:.12e}", star.radius);
    println!("2M/R           {:.10}", 2.0 * star.compactness());
    println!("baryon number  {:.12e}", star.baryon_number);
    println!("e^(2 mu(R)) - (1 - 2M/R) = {:.3e}", (2.0 * star.mu_r).exp() - (1.0 - 2.0 * star.compactness()));
    println!(
        "{} accepted / {} rejected steps, surface residual {:.2e}",
        star.solver_diag.accepted_steps, star.solver_diag.rejected_steps, star.solver_diag.surface_residual
    );

    println!("\n{:>12} {:>14} {:>14} {:>14} {:>12}", "r/R", "y", "rho", "m", "lambda");
    for f in [0.0, 0.25, 0.5, 0.75, 0.95, 1.0, 2.0, 10.0] {
        let p = star.profile_at(f * star.radius)?;
        println!("{f:12.3} {:14.6e} {:14.6e} {:14.6e} {:12.6}", p.y, p.rho, p.m, p.lambda);
    }
    Ok(())
}
