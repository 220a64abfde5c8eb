//! Builds the three kinds of equation of state and checks them against the
//! structural assumptions the stability theory relies on.
//!
//! ```bash
//! cargo run --release --example eos_validate
//! ```

use relstar::eos::{EquationOfState, SampleSpec};

fn main() -> relstar::Result<()> {
    let sample = SampleSpec::new(1e-12, 1e6, 400);
    let table: Vec<(f64, f64)> = (0..60)
        .map(|i| {
            let rho = 1e-8 * 10f64.powf(i as f64 * 0.15);
            (rho, rho.powf(5.0 / 3.0))
        })
        .collect();
    let candidates = [
        ("hybrid (default)", EquationOfState::hybrid_causal(1.0, 5.0 / 3.0, 1e12)?),
        ("pure polytrope", EquationOfState::polytrope(1.0, 5.0 / 3.0, 1e12)?),
        ("tabulated polytrope", EquationOfState::tabulated(table)?),
    ];
    for (name, eos) in &candidates {
        let report = eos.validate(&sample);
        println!(
            "{name:22} P1 {:5} P2 {:5} P3 {:5} P4 {:5} gamma_fit {:.5} cs2_fit {:.4}",
            report.p1_ok, report.p2_ok, report.p3_ok, report.p4_ok, report.fitted_gamma, report.fitted_cs2
        );
        if !report.p4_ok {
            println!("{:22} {}", "", report.p4_message);
        }
        for w in eos.warnings() {
            println!("{:22} warning: {w}", "");
        }
    }

    // Enthalpy and its inverse on the default law.
    let eos = &candidates[0].1;
    for rho in [1e-6, 1e-2, 1.0, 1e3] {
        let q = eos.enthalpy(rho)?;
        println!(
            "rho {rho:8.1e}  P {:12.5e}  Q {:12.5e}  g(Q) {:12.5e}  n {:12.5e}",
            eos.pressure(rho)?,
            q,
            eos.density_of_enthalpy(q)?,
            eos.baryon_density(rho)?
        );
    }
    Ok(())
}
