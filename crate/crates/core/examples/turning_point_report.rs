//! Runs the full report: along the sweep, the growing-mode count predicted
//! from the reduced operator and the winding index is compared with the
//! direct count, and mode gains are logged at each extremum.
//!
//! ```bash
//! cargo run --release --example turning_point_report
//! ```

use std::sync::Arc;

use relstar::eos::EquationOfState;
use relstar::family::{tpp_report, SweepConfig, TovFamily, TppConfig};
use relstar::modes::ModesConfig;
use relstar::spectral::SpectralConfig;
use relstar::tov::SolverConfig;

fn main() -> relstar::Result<()> {
    let eos = Arc::new(EquationOfState::hybrid_causal(1.0, 5.0 / 3.0, 1e12)?);
    let family = TovFamily::new(eos, SolverConfig::default());
    let sweep = SweepConfig {
        kappa_min: 0.1,
        kappa_max: 4.0,
        points: 30,
        ..Default::default()
    };
    let modes = ModesConfig {
        cells: 200,
        nodes: 200,
        ..Default::default()
    };
    let report = tpp_report(
        &family,
        &sweep.grid(),
        &sweep,
        &SpectralConfig::default(),
        &modes,
        &TppConfig::default(),
    )?;

    println!("{:>8} {:>3} {:>7} {:>10} {:>9} {:>16}", "kappa", "i", "n_minus", "nu_formula", "nu_direct", "flag");
    for r in &report.rows {
        println!(
            "{:8.4} {:>3} {:7} {:>10} {:9} {:>16}",
            r.kappa,
            r.i_kappa.map_or("-".into(), |v| v.to_string()),
            r.n_minus_sigma,
            r.n_u_formula.map_or("-".into(), |v| v.to_string()),
            r.n_u_direct,
            r.flag.as_str()
        );
    }
    println!();
    print!("{}", report.events_csv());
    report.check()?;
    println!("\nall confidently classified rows agree");
    Ok(())
}
