//! Traces the mass–radius curve, locates the extrema of M and M/R and prints
//! the winding index along the way.
//!
//! ```bash
//! cargo run --release --example mass_radius_sweep
//! ```

use std::sync::Arc;

use relstar::eos::EquationOfState;
use relstar::family::{sweep_with_events, SweepConfig, TovFamily};
use relstar::tov::SolverConfig;

fn main() -> relstar::Result<()> {
    let eos = Arc::new(EquationOfState::hybrid_causal(1.0, 5.0 / 3.0, 1e12)?);
    let family = TovFamily::new(eos, SolverConfig::default());
    let cfg = SweepConfig {
        kappa_min: 0.02,
        kappa_max: 9.0,
        points: 80,
        ..Default::default()
    };
    let curve = sweep_with_events(&family, &cfg.grid(), &cfg)?;

    println!("{:>10} {:>12} {:>12} {:>10} {:>3}", "kappa", "M", "R", "M/R", "i");
    for (p, i) in curve.points.iter().zip(&curve.i_kappa).step_by(4) {
        println!(
            "{:10.4} {:12.6} {:12.6} {:10.6} {:>3}",
            p.kappa,
            p.mass,
            p.radius,
            p.mass_over_radius,
            i.map_or("-".into(), |v| v.to_string())
        );
    }
    println!();
    for e in curve.events() {
        println!(
            "{:?} {:?} at kappa = {:.8} ({}), other derivative {:.3e} vs floor {:.1e}",
            e.which,
            e.kind,
            e.kappa_star,
            e.orientation.map_or("no bend".into(), |o| format!("{o:?}")),
            e.other_derivative,
            e.other_floor
        );
    }
    Ok(())
}
