//! Property tests over whole pipelines.

use std::f64::consts::PI;
use std::sync::Arc;

use proptest::prelude::*;
use relstar::eos::EquationOfState;
use relstar::family::{sweep_with_events, SweepConfig, Which};
use relstar::modes::{unstable_modes, ModesConfig, VelocityWeight};
use relstar::tov::{solve_steady_state, SolverConfig};
use relstar::Result;

fn hybrid() -> Arc<EquationOfState> {
    Arc::new(EquationOfState::hybrid_causal(1.0, 5.0 / 3.0, 1e12).unwrap())
}

/// `kappa` values kept away from the mass extrema, where the counts change.
fn generic_kappa() -> impl Strategy<Value = f64> {
    prop_oneof![0.1f64..0.35, 0.6f64..2.5, 3.0f64..4.0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn velocity_weight_does_not_change_the_count(kappa in generic_kappa()) {
        let state = solve_steady_state(&hybrid(), kappa, &SolverConfig::default()).unwrap();
        let count = |weight| {
            let cfg = ModesConfig { cells: 160, nodes: 160, weight, ..Default::default() };
            unstable_modes(&state, &cfg).unwrap().report
        };
        let baryon = count(VelocityWeight::Baryon);
        let enthalpy = count(VelocityWeight::Enthalpy);
        prop_assert_eq!(baryon.n_u_direct, enthalpy.n_u_direct);
        prop_assert_eq!(baryon.n_u_direct, baryon.n_minus_constrained);
    }

    #[test]
    fn synthetic_extrema_are_located(phase in 0.0f64..PI, offset in 2.0f64..5.0) {
        let model = move |k: f64| -> Result<(f64, f64)> { Ok((offset + (k + phase).sin(), 20.0 + 0.1 * k)) };
        let cfg = SweepConfig {
            kappa_min: 0.5,
            kappa_max: 7.0,
            points: 40,
            scale: relstar::family::GridScale::Linear,
            ..Default::default()
        };
        let curve = sweep_with_events(&model, &cfg.grid(), &cfg).unwrap();
        let found: Vec<f64> = curve.events().iter().filter(|e| e.which == Which::MassExtremum).map(|e| e.kappa_star).collect();
        let expected: Vec<f64> = (0..4)
            .map(|n| PI / 2.0 - phase + n as f64 * PI)
            .filter(|&k| k > 0.5 + 0.2 && k < 7.0 - 0.2)
            .collect();
        for k in &expected {
            prop_assert!(found.iter().any(|f| (f - k).abs() < 1e-5 * k), "missing extremum near {}: {:?}", k, found);
        }
    }
}
