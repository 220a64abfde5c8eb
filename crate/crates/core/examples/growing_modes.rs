//! Counts growing radial modes directly from the second-order velocity form
//! and compares with the index of the energy on mass-preserving densities.
//!
//! ```bash
//! cargo run --release --example growing_modes -- 3.2 profile.csv
//! ```

use std::sync::Arc;

use relstar::eos::EquationOfState;
use relstar::modes::{unstable_modes, ModesConfig, VelocityWeight};
use relstar::tov::{solve_steady_state, SolverConfig};

fn main() -> relstar::Result<()> {
    let mut args = std::env::args().skip(1);
    let kappa: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(3.2);
    let dump = args.next();

    let eos = Arc::new(EquationOfState::hybrid_causal(1.0, 5.0 / 3.0, 1e12)?);
    let star = solve_steady_state(&eos, kappa, &SolverConfig::default())?;

    for weight in [VelocityWeight::Baryon, VelocityWeight::Enthalpy] {
        let cfg = ModesConfig {
            weight,
            ..Default::default()
        };
        let analysis = unstable_modes(&star, &cfg)?;
        let r = &analysis.report;
        println!("weight {weight:?}");
        println!("  growing modes (velocity pencil)   {}", r.n_u_direct);
        println!("  constrained density index         {}", r.n_minus_constrained);
        println!("  unconstrained density index       {}", r.n_minus_unconstrained);
        println!("  growth rates                      {:?}", r.growth_rates);
        println!("  lowest theta                      {:?}", r.lowest_theta);
        println!("  asymmetry (density, velocity)     {:.1e}, {:.1e}", r.density_asymmetry, r.mode_asymmetry);
        if let (Some(path), VelocityWeight::Baryon) = (&dump, weight) {
            std::fs::write(path, analysis.eigenmode_csv(0)).map_err(|e| relstar::Error::Io(e.to_string()))?;
            println!("  fastest mode written to {path}");
        }
    }
    Ok(())
}
