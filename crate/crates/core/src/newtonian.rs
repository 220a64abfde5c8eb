//! Lane–Emden stars and the small-`kappa` rescaling of relativistic states.
//!
//! With `a = (alpha - 1)/2` the map `s = kappa^a r`, `ybar = y / kappa`,
//! `mbar = kappa^{(alpha-3)/2} m` sends the structure equations to a system
//! whose `kappa -> 0` limit is the Lane–Emden equation `y0'' + (2/s) y0' = -4π g0(y0)`
//! with `y0(0) = 1`.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::eos::EquationOfState;
use crate::error::{Error, Result};
use crate::spectral::{assemble_for, FormPair, SigmaBackground, SigmaCoefficients, SpectralConfig};
use crate::tov::{newtonian_density, solve_steady_state, Regime, SolverConfig, SteadyState, Trajectory};

#[derive(Debug, Clone, Serialize)]
pub struct LaneEmdenState {
    pub gamma: f64,
    pub k: f64,
    pub grid: Vec<f64>,
    pub y0: Vec<f64>,
    pub rho0: Vec<f64>,
    pub m0: Vec<f64>,
    /// First zero of `y0`.
    pub s0: f64,
    /// `m0(S0)`.
    pub m0_total: f64,
    #[serde(skip)]
    traj: Trajectory,
}

/// Integrates the Lane–Emden system with the structure solver in its Newtonian mode.
pub fn solve_lane_emden(gamma: f64, k: f64, cfg: &SolverConfig) -> Result<LaneEmdenState> {
    if !(gamma > 1.0 && gamma <= 2.0) {
        return Err(Error::Config(format!("Lane–Emden gamma must lie in (1, 2], got {gamma}")));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::Config(format!("k must be positive, got {k}")));
    }
    let traj = Trajectory::integrate(Regime::Newtonian { k, gamma }, 1.0, cfg)?;
    let rho0 = traj.y.iter().map(|&y| newtonian_density(k, gamma, y)).collect();
    Ok(LaneEmdenState {
        gamma,
        k,
        grid: traj.r.clone(),
        y0: traj.y.clone(),
        rho0,
        m0: traj.m.clone(),
        s0: traj.radius,
        m0_total: traj.mass,
        traj,
    })
}

impl LaneEmdenState {
    pub fn alpha(&self) -> f64 {
        1.0 / (self.gamma - 1.0)
    }

    /// `(y0, y0', m0)` at `s`, continued by `M0/s - M0/S0` outside.
    pub fn at(&self, s: f64) -> Result<(f64, f64, f64)> {
        let (v, d) = self.traj.state_at(s)?;
        Ok((v[0], d[0], v[1]))
    }

    pub fn density(&self, s: f64) -> Result<f64> {
        let (y, _, _) = self.at(s)?;
        Ok(newtonian_density(self.k, self.gamma, y))
    }

    pub fn scale_height(&self) -> f64 {
        self.traj.scale_height()
    }
}

impl SigmaBackground for LaneEmdenState {
    fn radius(&self) -> f64 {
        self.s0
    }

    fn core_scale(&self) -> f64 {
        self.scale_height()
    }

    fn surface_exponent(&self) -> f64 {
        self.alpha()
    }

    fn coefficients(&self, r: f64) -> Result<SigmaCoefficients> {
        let (y, _, _) = self.at(r)?;
        let dg = if y > 0.0 && r < self.s0 {
            newtonian_density(self.k, self.gamma, y) / ((self.gamma - 1.0) * y)
        } else {
            0.0
        };
        Ok(SigmaCoefficients {
            stiffness: 1.0,
            potential: 4.0 * PI * dg,
            conj: 1.0,
            nu: 0.0,
        })
    }

    /// Flat exterior: `w ∝ 1/r`, so both forms pick up `r_out w²`.
    fn exterior_closure(&self, r_out: f64) -> (f64, f64) {
        (r_out, r_out)
    }

    fn label(&self) -> f64 {
        0.0
    }
}

/// The Newtonian reduced form `∫ phi'² r² - 4π ∫ g0'(y0) phi² r²` on a Lane–Emden star.
pub fn sigma_zero(gamma: f64, k: f64, solver: &SolverConfig, cfg: &SpectralConfig) -> Result<FormPair> {
    let le = solve_lane_emden(gamma, k, solver)?;
    assemble_for(Arc::new(le), cfg)
}

/// A relativistic state in the rescaled variables, sampled on a grid in `s`.
#[derive(Debug, Clone, Serialize)]
pub struct RescaledState {
    pub kappa: f64,
    pub a: f64,
    pub s: Vec<f64>,
    pub ybar: Vec<f64>,
    pub dybar: Vec<f64>,
    pub mbar: Vec<f64>,
    pub pbar: Vec<f64>,
    /// Rescaled surface radius `kappa^a R`.
    pub surface: f64,
}

/// Samples `state` in rescaled variables at the points `s`. Profiles are
/// evaluated exactly (integrator accuracy) rather than interpolated; outside
/// the star the vacuum continuation is used.
pub fn rescale_state(state: &SteadyState, s: &[f64]) -> Result<RescaledState> {
    let kappa = state.kappa;
    let alpha = state.eos().alpha();
    let a = 0.5 * (alpha - 1.0);
    let scale = kappa.powf(a);
    let m_fac = kappa.powf(0.5 * (alpha - 3.0));
    let p_fac = kappa.powf(-alpha - 1.0);
    let d_fac = kappa.powf(-1.0 - a);
    let mut out = RescaledState {
        kappa,
        a,
        s: s.to_vec(),
        ybar: Vec::with_capacity(s.len()),
        dybar: Vec::with_capacity(s.len()),
        mbar: Vec::with_capacity(s.len()),
        pbar: Vec::with_capacity(s.len()),
        surface: scale * state.radius,
    };
    for &si in s {
        let pt = state.profile_at(si / scale)?;
        out.ybar.push(pt.y / kappa);
        out.dybar.push(-pt.dmu * d_fac);
        out.mbar.push(pt.m * m_fac);
        out.pbar.push(pt.p * p_fac);
    }
    Ok(out)
}

impl RescaledState {
    /// Largest residual of `ybar' + (mbar/s² + 4π kappa s pbar) / (1 - 2 kappa mbar / s)`.
    pub fn ivp_residual(&self) -> f64 {
        let kappa = self.kappa;
        let mut worst = 0.0f64;
        for i in 0..self.s.len() {
            let s = self.s[i];
            if s <= 0.0 {
                continue;
            }
            let rhs = (self.mbar[i] / (s * s) + 4.0 * PI * kappa * s * self.pbar[i])
                / (1.0 - 2.0 * kappa * self.mbar[i] / s);
            worst = worst.max((self.dybar[i] + rhs).abs());
        }
        worst
    }

    /// Physical radii `r = s kappa^{-a}`.
    pub fn radii(&self) -> Vec<f64> {
        let inv = self.kappa.powf(-self.a);
        self.s.iter().map(|s| s * inv).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitRow {
    pub kappa: f64,
    /// `max |ybar - y0|`.
    pub err_c0: f64,
    /// `max (|ybar - y0| + |ybar' - y0'|)`.
    pub err_c1: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NewtonianLimitReport {
    pub gamma: f64,
    pub k: f64,
    pub s0: f64,
    pub m0: f64,
    pub rows: Vec<LimitRow>,
    /// `E(kappa) ≈ C kappa^q` fitted to `err_c1`.
    pub c: f64,
    pub q: f64,
}

impl NewtonianLimitReport {
    pub fn csv(&self) -> String {
        let mut out = String::from("kappa,err_c0,err_c1\n");
        for r in &self.rows {
            out.push_str(&format!("{:e},{:e},{:e}\n", r.kappa, r.err_c0, r.err_c1));
        }
        out
    }
}

/// Number of sample points on the comparison grid `[0, 3 S0]`.
const LIMIT_POINTS: usize = 3001;

/// Least-squares fit of `log e = log c + q log k`.
pub fn fit_power_law(kappas: &[f64], errors: &[f64]) -> (f64, f64) {
    let n = kappas.len() as f64;
    let xs: Vec<f64> = kappas.iter().map(|k| k.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let q = sxy / sxx;
    ((my - q * mx).exp(), q)
}

/// Measures how fast rescaled relativistic states approach the Lane–Emden star.
pub fn newtonian_limit_check(
    eos: &Arc<EquationOfState>,
    kappas: &[f64],
    solver: &SolverConfig,
) -> Result<NewtonianLimitReport> {
    if kappas.len() < 2 {
        return Err(Error::Config("the limit check needs at least two kappa values".into()));
    }
    if let Some(k) = kappas.iter().find(|&&k| !(k > 0.0 && k <= 0.2)) {
        return Err(Error::Config(format!("limit check kappa {k} is outside (0, 0.2]")));
    }
    let le = solve_lane_emden(eos.gamma(), eos.k(), solver)?;
    let extent = 3.0 * le.s0;
    let grid: Vec<f64> = (0..LIMIT_POINTS)
        .map(|i| extent * i as f64 / (LIMIT_POINTS - 1) as f64)
        .collect();
    let reference: Vec<(f64, f64, f64)> = grid.iter().map(|&s| le.at(s)).collect::<Result<_>>()?;
    let rows: Vec<LimitRow> = kappas
        .par_iter()
        .map(|&kappa| -> Result<LimitRow> {
            let state = solve_steady_state(eos, kappa, solver)?;
            let rs = rescale_state(&state, &grid)?;
            let (mut c0, mut c1) = (0.0f64, 0.0f64);
            for (i, &(y0, dy0, _)) in reference.iter().enumerate() {
                let e0 = (rs.ybar[i] - y0).abs();
                c0 = c0.max(e0);
                c1 = c1.max(e0 + (rs.dybar[i] - dy0).abs());
            }
            Ok(LimitRow {
                kappa,
                err_c0: c0,
                err_c1: c1,
            })
        })
        .collect::<Result<_>>()?;
    let ks: Vec<f64> = rows.iter().map(|r| r.kappa).collect();
    let es: Vec<f64> = rows.iter().map(|r| r.err_c1).collect();
    let (c, q) = fit_power_law(&ks, &es);
    Ok(NewtonianLimitReport {
        gamma: le.gamma,
        k: le.k,
        s0: le.s0,
        m0: le.m0_total,
        rows,
        c,
        q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_two_matches_the_sine_solution() {
        let le = solve_lane_emden(2.0, 1.0, &SolverConfig::default()).unwrap();
        let s0 = (PI / 2.0).sqrt();
        assert!((le.s0 - s0).abs() < 1e-9, "{}", le.s0);
        let omega = (2.0 * PI).sqrt();
        for &s in &[0.1, 0.5, 1.0, 1.2] {
            let (y, _, _) = le.at(s).unwrap();
            let exact = (omega * s).sin() / (omega * s);
            assert!((y - exact).abs() < 1e-10, "s = {s}: {y} vs {exact}");
        }
    }

    #[test]
    fn regular_center() {
        let le = solve_lane_emden(5.0 / 3.0, 1.0, &SolverConfig::default()).unwrap();
        let (y, dy, m) = le.at(0.0).unwrap();
        assert_eq!((y, dy, m), (1.0, 0.0, 0.0));
        assert!(le.y0.windows(2).all(|w| w[1] < w[0]));
        assert_eq!(*le.y0.last().unwrap(), 0.0);
    }

    #[test]
    fn surface_is_self_consistent_under_refinement() {
        let coarse = solve_lane_emden(5.0 / 3.0, 1.0, &SolverConfig::default()).unwrap();
        let fine = solve_lane_emden(5.0 / 3.0, 1.0, &SolverConfig::default().tightened(10.0)).unwrap();
        assert!((coarse.s0 - fine.s0).abs() < 1e-8);
    }

    #[test]
    fn gamma_outside_range_is_rejected() {
        assert!(solve_lane_emden(1.0, 1.0, &SolverConfig::default()).is_err());
        assert!(solve_lane_emden(2.5, 1.0, &SolverConfig::default()).is_err());
    }

    #[test]
    fn rescaling_bookkeeping() {
        let eos = Arc::new(EquationOfState::hybrid_causal(1.0, 5.0 / 3.0, 1e12).unwrap());
        let state = solve_steady_state(&eos, 0.02, &SolverConfig::default()).unwrap();
        let rs = rescale_state(&state, &[0.0, 0.3, 0.9, rs_surface(&state)]).unwrap();
        assert_eq!(rs.ybar[0], 1.0);
        let alpha = eos.alpha();
        let m = state.kappa.powf((3.0 - alpha) / 2.0) * rs.mbar[3];
        assert!((m - state.mass).abs() < 1e-6 * state.mass);
        assert!(rs.ivp_residual() < 1e-8, "{}", rs.ivp_residual());
        let back = rs.radii();
        assert!((back[3] - state.radius).abs() < 1e-12 * state.radius);
    }

    fn rs_surface(state: &SteadyState) -> f64 {
        state.kappa.powf(0.5 * (state.eos().alpha() - 1.0)) * state.radius
    }

    #[test]
    fn power_law_fit_recovers_exponent() {
        let ks = [0.2, 0.1, 0.05];
        let es: Vec<f64> = ks.iter().map(|k: &f64| 3.0 * k.powf(1.5)).collect();
        let (c, q) = fit_power_law(&ks, &es);
        assert!((q - 1.5).abs() < 1e-12 && (c - 3.0).abs() < 1e-12);
    }

    #[test]
    fn sigma_zero_has_one_negative_direction() {
        let pair = sigma_zero(5.0 / 3.0, 1.0, &SolverConfig::default(), &SpectralConfig::default()).unwrap();
        let mi = pair.morse_index().unwrap();
        assert_eq!(mi.n_minus, 1);
        assert!(pair.kernel_gap().unwrap().gap > 1e-2);
    }
}
