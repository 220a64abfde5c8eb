//! Static spherically symmetric equilibria.
//!
//! The structure equations are integrated in the enthalpy-like variable
//! `y = mu(R) - mu(r)`, which starts at the central value `kappa` and
//! reaches zero exactly at the stellar surface. The same integrator serves
//! the Newtonian (Lane–Emden) limit with the relativistic corrections
//! switched off.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::eos::EquationOfState;
use crate::error::{Error, Result};
use crate::interp::locate;
use crate::ode::{dp_step, error_norm, step_factor};
use crate::quadrature::GaussLegendre;

/// Tolerances and step controls for the structure integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Fraction of the central scale height covered by the series start-off.
    pub r_min_factor: f64,
    /// Upper bound on a step relative to the current radius.
    pub max_step_factor: f64,
    /// Largest accepted `|y|` at the located surface.
    pub surface_tol: f64,
    /// Give up if no surface has been found by this radius.
    pub r_max: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            abs_tol: 1e-14,
            rel_tol: 1e-12,
            r_min_factor: 1e-3,
            max_step_factor: 0.05,
            surface_tol: 1e-13,
            r_max: 1e6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("abs_tol", self.abs_tol),
            ("rel_tol", self.rel_tol),
            ("r_min_factor", self.r_min_factor),
            ("max_step_factor", self.max_step_factor),
            ("surface_tol", self.surface_tol),
            ("r_max", self.r_max),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("solver.{name} must be positive, got {v}")));
            }
        }
        if self.rel_tol < 1e-14 {
            return Err(Error::Config(format!(
                "solver.rel_tol must be at least 1e-14, got {}",
                self.rel_tol
            )));
        }
        Ok(())
    }

    /// Tolerances divided by `factor`, for self-convergence studies.
    pub fn tightened(&self, factor: f64) -> Self {
        SolverConfig {
            abs_tol: self.abs_tol / factor,
            rel_tol: (self.rel_tol / factor).max(1e-14),
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// `|y|` at the located surface before snapping.
    pub surface_residual: f64,
    /// Largest accepted local error norm (relative to the tolerance).
    pub max_error_norm: f64,
}

/// Matter model driving the structure equations.
#[derive(Debug, Clone)]
pub(crate) enum Regime {
    Relativistic(Arc<EquationOfState>),
    /// Lane–Emden limit with `g0(y) = k^{-a} ((gamma-1)/gamma)^a y^a`, `a = 1/(gamma-1)`.
    Newtonian { k: f64, gamma: f64 },
}

impl Regime {
    fn is_relativistic(&self) -> bool {
        matches!(self, Regime::Relativistic(_))
    }

    #[inline]
    pub(crate) fn density(&self, y: f64) -> Result<f64> {
        match self {
            Regime::Relativistic(eos) => eos.density_of_enthalpy(y),
            Regime::Newtonian { k, gamma } => Ok(newtonian_density(*k, *gamma, y)),
        }
    }

    #[inline]
    fn pressure(&self, rho: f64) -> f64 {
        match self {
            Regime::Relativistic(eos) => eos.pressure_unchecked(rho),
            Regime::Newtonian { .. } => 0.0,
        }
    }

    /// `dg/dy` at the given `y` and its density.
    #[inline]
    pub(crate) fn dg(&self, y: f64, rho: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        match self {
            Regime::Relativistic(eos) => eos.dg_dy_at_density(rho),
            Regime::Newtonian { gamma, .. } => rho / ((gamma - 1.0) * y),
        }
    }

    #[inline]
    fn rhs(&self, r: f64, s: &[f64; 2]) -> Result<[f64; 2]> {
        let (y, m) = (s[0], s[1]);
        let rho = self.density(y)?;
        let dm = 4.0 * PI * r * r * rho;
        if !self.is_relativistic() {
            return Ok([-m / (r * r), dm]);
        }
        let p = self.pressure(rho);
        let den = 1.0 - 2.0 * m / r;
        if den <= 0.0 {
            return Err(Error::Horizon {
                r,
                compactness: 2.0 * m / r,
            });
        }
        Ok([-(m / (r * r) + 4.0 * PI * r * p) / den, dm])
    }
}

/// `g0(y) = k^{-a} ((gamma-1)/gamma)^a y_+^a` with `a = 1/(gamma-1)`.
pub fn newtonian_density(k: f64, gamma: f64, y: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    let a = 1.0 / (gamma - 1.0);
    ((gamma - 1.0) / (gamma * k) * y).powf(a)
}

/// Raw integrated solution: accepted nodes plus the surface.
#[derive(Debug, Clone)]
pub(crate) struct Trajectory {
    pub regime: Regime,
    pub kappa: f64,
    pub r: Vec<f64>,
    pub y: Vec<f64>,
    pub m: Vec<f64>,
    /// Right-hand side `(y', m')` at each node.
    pub f: Vec<[f64; 2]>,
    pub radius: f64,
    pub mass: f64,
    pub diag: SolverDiagnostics,
    series: CenterSeries,
}

/// Taylor expansion about the regular center.
#[derive(Debug, Clone, Copy)]
struct CenterSeries {
    kappa: f64,
    rho_c: f64,
    a: f64,
    b: f64,
    g_c: f64,
    r0: f64,
}

impl CenterSeries {
    fn new(regime: &Regime, kappa: f64, r_min_factor: f64) -> Result<Self> {
        let rho_c = regime.density(kappa)?;
        let rel = if regime.is_relativistic() { 1.0 } else { 0.0 };
        let p_c = regime.pressure(rho_c);
        let g_c = regime.dg(kappa, rho_c);
        let a = -2.0 * PI * (rho_c / 3.0 + rel * p_c);
        let b = -a * (PI / 5.0 * g_c + rel * (PI * (rho_c + p_c) - 4.0 * PI / 3.0 * rho_c));
        let scale_height = (-kappa / a).sqrt();
        Ok(CenterSeries {
            kappa,
            rho_c,
            a,
            b,
            g_c,
            r0: r_min_factor * scale_height,
        })
    }

    /// `(y, m)` and their derivatives at small `r`.
    fn eval(&self, r: f64) -> ([f64; 2], [f64; 2]) {
        let r2 = r * r;
        let y = self.kappa + self.a * r2 + self.b * r2 * r2;
        let m = 4.0 * PI / 3.0 * self.rho_c * r2 * r + 4.0 * PI / 5.0 * self.g_c * self.a * r2 * r2 * r;
        let dy = 2.0 * self.a * r + 4.0 * self.b * r2 * r;
        let dm = 4.0 * PI * self.rho_c * r2 + 4.0 * PI * self.g_c * self.a * r2 * r2;
        ([y, m], [dy, dm])
    }
}

const DENSIFY_NODES: usize = 8;

impl Trajectory {
    pub(crate) fn integrate(regime: Regime, kappa: f64, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::Domain(format!("kappa must be positive, got {kappa}")));
        }
        if let Regime::Relativistic(eos) = &regime {
            if kappa > eos.max_enthalpy() {
                return Err(Error::Domain(format!(
                    "kappa = {kappa} exceeds Q(rho_cap) = {:.6e}",
                    eos.max_enthalpy()
                )));
            }
        }
        let series = CenterSeries::new(&regime, kappa, cfg.r_min_factor)?;
        let mut rhs = |r: f64, s: &[f64; 2]| regime.rhs(r, s);

        let mut diag = SolverDiagnostics {
            abs_tol: cfg.abs_tol,
            rel_tol: cfg.rel_tol,
            ..Default::default()
        };
        let (s0, _) = series.eval(series.r0);
        let mut r_nodes = vec![0.0, series.r0];
        let mut y_nodes = vec![kappa, s0[0]];
        let mut m_nodes = vec![0.0, s0[1]];
        let mut f_nodes = vec![[0.0, 0.0], rhs(series.r0, &s0)?];

        let mut r = series.r0;
        let mut state = s0;
        let mut f = f_nodes[1];
        let mut h = cfg.max_step_factor * r;
        let (radius, mass, surface_state);
        loop {
            if r > cfg.r_max {
                return Err(Error::NoSurface { r_max: cfg.r_max });
            }
            if diag.accepted_steps + diag.rejected_steps > 2_000_000 {
                return Err(Error::Numerical("structure integrator exceeded its step budget".into()));
            }
            h = h.min(cfg.max_step_factor * r);
            if h <= 1e-15 * r {
                return Err(Error::Numerical(format!("step size underflow at r = {r:e}")));
            }
            let step = match dp_step(&mut rhs, r, &state, &f, h) {
                Ok(s) => s,
                Err(e @ Error::Horizon { .. }) => return Err(e),
                Err(_) => {
                    h *= 0.25;
                    diag.rejected_steps += 1;
                    continue;
                }
            };
            let err = error_norm(&step, &state, cfg.abs_tol, cfg.rel_tol);
            if !(err <= 1.0) {
                diag.rejected_steps += 1;
                h *= if err.is_finite() { step_factor(err) } else { 0.25 };
                continue;
            }
            diag.max_error_norm = diag.max_error_norm.max(err);
            if step.y[0] <= 0.0 {
                let (h_star, s_star, residual) =
                    locate_surface(&mut rhs, r, &state, &f, h, step.y[0], cfg)?;
                diag.surface_residual = residual;
                diag.accepted_steps += 1;
                radius = r + h_star;
                mass = s_star[1];
                surface_state = s_star;
                break;
            }
            diag.accepted_steps += 1;
            let r_new = r + h;
            if regime.is_relativistic() && 2.0 * step.y[1] / r_new >= 1.0 - 1e-12 {
                return Err(Error::Horizon {
                    r: r_new,
                    compactness: 2.0 * step.y[1] / r_new,
                });
            }
            r = r_new;
            state = step.y;
            f = step.f_end;
            r_nodes.push(r);
            y_nodes.push(state[0]);
            m_nodes.push(state[1]);
            f_nodes.push(f);
            h *= step_factor(err);
        }

        // Cluster extra nodes toward the surface, where rho ~ (R - r)^alpha.
        let last = r;
        let width = radius - last;
        let q = match &regime {
            Regime::Relativistic(eos) => eos.alpha(),
            Regime::Newtonian { gamma, .. } => 1.0 / (gamma - 1.0),
        }
        .max(1.0);
        for j in (1..DENSIFY_NODES).rev() {
            let d = width * (j as f64 / DENSIFY_NODES as f64).powf(q);
            let rj = radius - d;
            if rj <= last {
                continue;
            }
            let s = dp_step(&mut rhs, last, &state, &f, rj - last)?;
            r_nodes.push(rj);
            y_nodes.push(s.y[0]);
            m_nodes.push(s.y[1]);
            f_nodes.push(rhs(rj, &s.y)?);
        }
        let _ = surface_state;
        r_nodes.push(radius);
        y_nodes.push(0.0);
        m_nodes.push(mass);
        f_nodes.push(rhs(radius, &[0.0, mass])?);

        Ok(Trajectory {
            regime,
            kappa,
            r: r_nodes,
            y: y_nodes,
            m: m_nodes,
            f: f_nodes,
            radius,
            mass,
            diag,
            series,
        })
    }

    /// Start-off radius of the series expansion.
    pub(crate) fn r_series(&self) -> f64 {
        self.series.r0
    }

    /// Scale height `sqrt(kappa / (2 pi (rho_c/3 + p_c)))` at the center.
    pub(crate) fn scale_height(&self) -> f64 {
        (-self.kappa / self.series.a).sqrt()
    }

    /// `(y, m)` and `(y', m')` at any `r >= 0`, using the exact vacuum
    /// continuation outside the star.
    pub(crate) fn state_at(&self, r: f64) -> Result<([f64; 2], [f64; 2])> {
        if r <= 0.0 {
            return Ok(([self.kappa, 0.0], [0.0, 0.0]));
        }
        if r >= self.radius {
            return Ok(self.exterior(r));
        }
        if r <= self.series.r0 {
            return Ok(self.series.eval(r));
        }
        let i = locate(&self.r, r);
        let ri = self.r[i];
        let si = [self.y[i], self.m[i]];
        if r == ri {
            return Ok((si, self.f[i]));
        }
        let mut rhs = |t: f64, s: &[f64; 2]| self.regime.rhs(t, s);
        let step = dp_step(&mut rhs, ri, &si, &self.f[i], r - ri)?;
        // The surface value is pinned to zero; never report a spurious sign flip.
        let y = step.y[0].max(0.0);
        let s = [y, step.y[1]];
        let f = if y == step.y[0] { step.f_end } else { rhs(r, &s)? };
        Ok((s, f))
    }

    fn exterior(&self, r: f64) -> ([f64; 2], [f64; 2]) {
        let (big_m, big_r) = (self.mass, self.radius);
        if self.regime.is_relativistic() {
            let y = 0.5 * (1.0 - 2.0 * big_m / big_r).ln() - 0.5 * (1.0 - 2.0 * big_m / r).ln();
            let dy = -big_m / (r * r) / (1.0 - 2.0 * big_m / r);
            ([y, big_m], [dy, 0.0])
        } else {
            ([big_m / r - big_m / big_r, big_m], [-big_m / (r * r), 0.0])
        }
    }
}

/// Illinois iteration on the step length so the step ends on `y = 0`.
fn locate_surface<F>(
    rhs: &mut F,
    r: f64,
    state: &[f64; 2],
    f: &[f64; 2],
    h: f64,
    y_h: f64,
    cfg: &SolverConfig,
) -> Result<(f64, [f64; 2], f64)>
where
    F: FnMut(f64, &[f64; 2]) -> Result<[f64; 2]>,
{
    let (mut a, mut fa) = (0.0, state[0]);
    let (mut b, mut fb) = (h, y_h);
    let mut side = 0i32;
    let mut best = (b, dp_step(rhs, r, state, f, b)?.y);
    for _ in 0..200 {
        let mut c = b - fb * (b - a) / (fb - fa);
        if !(c > a && c < b) {
            c = 0.5 * (a + b);
        }
        let s = dp_step(rhs, r, state, f, c)?;
        let fc = s.y[0];
        best = (c, s.y);
        if fc.abs() <= cfg.surface_tol || (b - a) <= 4.0 * f64::EPSILON * (r + b) {
            return Ok((c, s.y, fc.abs()));
        }
        if fc > 0.0 {
            a = c;
            fa = fc;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = c;
            fb = fc;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    let residual = best.1[0].abs();
    if residual <= 1e3 * cfg.surface_tol {
        return Ok((best.0, best.1, residual));
    }
    Err(Error::Numerical(format!(
        "surface location stalled with |y| = {residual:e}"
    )))
}

/// An equilibrium star with its profiles on the solver's output grid.
#[derive(Debug, Clone, Serialize)]
pub struct SteadyState {
    pub kappa: f64,
    /// Central redshift `e^kappa - 1`.
    pub z: f64,
    pub grid: Vec<f64>,
    pub y: Vec<f64>,
    pub rho: Vec<f64>,
    pub p: Vec<f64>,
    pub m: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    #[serde(rename = "R_kappa")]
    pub radius: f64,
    #[serde(rename = "M_kappa")]
    pub mass: f64,
    #[serde(rename = "N_kappa")]
    pub baryon_number: f64,
    pub mu_r: f64,
    pub solver_diag: SolverDiagnostics,
    #[serde(skip)]
    traj: Trajectory,
    #[serde(skip)]
    eos: Arc<EquationOfState>,
}

/// All fields at one radius, interior or exterior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfilePoint {
    pub r: f64,
    pub y: f64,
    pub rho: f64,
    pub p: f64,
    pub m: f64,
    pub lambda: f64,
    pub mu: f64,
    /// `mu'(r) = -y'(r)`.
    pub dmu: f64,
    pub dlambda: f64,
    /// `g'(y)`, zero outside the star.
    pub dg: f64,
}

/// Weights built from `Psi^{-1} = e^mu (rho + p) / P'`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiWeights {
    /// `Psi`, defined only inside the star.
    pub psi: Option<f64>,
    pub psi_inv: f64,
    pub dg: f64,
}

/// Integrates the structure equations from the center value `kappa`.
pub fn solve_steady_state(eos: &Arc<EquationOfState>, kappa: f64, cfg: &SolverConfig) -> Result<SteadyState> {
    let traj = Trajectory::integrate(Regime::Relativistic(eos.clone()), kappa, cfg)
        .map_err(|e| e.at_kappa(kappa))?;
    let state = SteadyState::from_trajectory(eos.clone(), traj).map_err(|e| e.at_kappa(kappa))?;
    state.check_invariants().map_err(|e| e.at_kappa(kappa))?;
    Ok(state)
}

impl SteadyState {
    fn from_trajectory(eos: Arc<EquationOfState>, traj: Trajectory) -> Result<Self> {
        let big_r = traj.radius;
        let big_m = traj.mass;
        let mu_r = 0.5 * (1.0 - 2.0 * big_m / big_r).ln();
        let n = traj.r.len();
        let mut rho = Vec::with_capacity(n);
        let mut p = Vec::with_capacity(n);
        let mut lambda = Vec::with_capacity(n);
        let mut mu = Vec::with_capacity(n);
        for i in 0..n {
            let d = eos.density_of_enthalpy(traj.y[i])?;
            rho.push(d);
            p.push(eos.pressure_unchecked(d));
            lambda.push(lambda_of(traj.m[i], traj.r[i]));
            mu.push(mu_r - traj.y[i]);
        }
        let mut state = SteadyState {
            kappa: traj.kappa,
            z: traj.kappa.exp_m1(),
            grid: traj.r.clone(),
            y: traj.y.clone(),
            rho,
            p,
            m: traj.m.clone(),
            lambda,
            mu,
            radius: big_r,
            mass: big_m,
            baryon_number: 0.0,
            mu_r,
            solver_diag: traj.diag,
            traj,
            eos,
        };
        state.baryon_number = state.integrate_baryon_number()?;
        Ok(state)
    }

    fn integrate_baryon_number(&self) -> Result<f64> {
        let gl = GaussLegendre::new(8);
        let mut total = 0.0;
        for w in self.grid.windows(2) {
            for (r, wt) in gl.on(w[0], w[1]) {
                let (s, _) = self.traj.state_at(r)?;
                let rho = self.eos.density_of_enthalpy(s[0])?;
                if rho <= 0.0 {
                    continue;
                }
                let n = self.eos.baryon_density(rho)?;
                total += wt * lambda_of(s[1], r).exp() * n * r * r;
            }
        }
        Ok(4.0 * PI * total)
    }

    pub fn eos(&self) -> &Arc<EquationOfState> {
        &self.eos
    }

    #[cfg(test)]
    pub(crate) fn trajectory(&self) -> &Trajectory {
        &self.traj
    }

    pub fn compactness(&self) -> f64 {
        self.mass / self.radius
    }

    /// Central density scale height, the natural length unit near the center.
    pub fn scale_height(&self) -> f64 {
        self.traj.scale_height()
    }

    /// Radius where the series start-off hands over to the integrator.
    pub fn series_radius(&self) -> f64 {
        self.traj.r_series()
    }

    /// Vacuum continuation `(y, mu, lambda)` for `r >= R`.
    pub fn extend_exterior(&self, r: f64) -> (f64, f64, f64) {
        let r = r.max(self.radius);
        let mu = 0.5 * (1.0 - 2.0 * self.mass / r).ln();
        (self.mu_r - mu, mu, -mu)
    }

    /// Every field at radius `r`, evaluated to integrator accuracy.
    pub fn profile_at(&self, r: f64) -> Result<ProfilePoint> {
        let (s, ds) = self.traj.state_at(r)?;
        let (y, m) = (s[0], s[1]);
        let rho = if r < self.radius { self.eos.density_of_enthalpy(y)? } else { 0.0 };
        let p = self.eos.pressure_unchecked(rho);
        let (lambda, dlambda) = if r > 0.0 {
            let l = lambda_of(m, r);
            let e2l = (2.0 * l).exp();
            (l, e2l * (4.0 * PI * r * rho - m / (r * r)))
        } else {
            (0.0, 0.0)
        };
        let dg = if rho > 0.0 { self.eos.dg_dy_at_density(rho) } else { 0.0 };
        Ok(ProfilePoint {
            r,
            y,
            rho,
            p,
            m,
            lambda,
            mu: self.mu_r - y,
            dmu: -ds[0],
            dlambda,
            dg,
        })
    }

    /// `(Psi, Psi^{-1}, g'(y))` at `r`; `Psi^{-1}` vanishes outside the star.
    pub fn psi_weights(&self, r: f64) -> Result<PsiWeights> {
        let pt = self.profile_at(r)?;
        if r >= self.radius || pt.rho <= 0.0 {
            return Ok(PsiWeights {
                psi: None,
                psi_inv: 0.0,
                dg: 0.0,
            });
        }
        // e^{-mu} Psi^{-1} = g'(y) holds by construction.
        let psi_inv = pt.mu.exp() * pt.dg;
        Ok(PsiWeights {
            psi: Some(1.0 / psi_inv),
            psi_inv,
            dg: pt.dg,
        })
    }

    /// `Psi(r)`; diverges at the surface and is undefined outside.
    pub fn psi(&self, r: f64) -> Result<f64> {
        if r >= self.radius {
            return Err(Error::Domain(format!(
                "Psi is undefined at r = {r:e} >= R = {:e}",
                self.radius
            )));
        }
        self.psi_weights(r)?
            .psi
            .ok_or_else(|| Error::Domain(format!("Psi is undefined at r = {r:e}")))
    }

    /// Re-checks the structural invariants of the solution.
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.grid.len();
        if self.y[0] != self.kappa {
            return Err(Error::Invariant("y(0) differs from kappa".into()));
        }
        for i in 1..n {
            if !(self.grid[i] > self.grid[i - 1]) {
                return Err(Error::Invariant(format!("grid not increasing at node {i}")));
            }
            if !(self.y[i] < self.y[i - 1]) {
                return Err(Error::Invariant(format!(
                    "y not strictly decreasing at r = {:e}",
                    self.grid[i]
                )));
            }
            if self.m[i] < self.m[i - 1] {
                return Err(Error::Invariant(format!("m decreasing at r = {:e}", self.grid[i])));
            }
            if self.rho[i] > self.rho[i - 1] || self.p[i] > self.p[i - 1] {
                return Err(Error::Invariant(format!(
                    "rho or p increasing at r = {:e}",
                    self.grid[i]
                )));
            }
            let c = 2.0 * self.m[i] / self.grid[i];
            if c > 8.0 / 9.0 {
                return Err(Error::Invariant(format!(
                    "Buchdahl bound violated: 2m/r = {c} at r = {:e}",
                    self.grid[i]
                )));
            }
        }
        if self.rho[n - 1] != 0.0 || self.p[n - 1] != 0.0 {
            return Err(Error::Invariant("density not zero at the surface".into()));
        }
        let defect = ((2.0 * self.mu[n - 1]).exp() - (1.0 - 2.0 * self.mass / self.radius)).abs();
        if defect > 1e-10 {
            return Err(Error::Invariant(format!("surface metric defect {defect:e}")));
        }
        Ok(())
    }

    /// Profile table with header `r,y,rho,p,m,lambda,mu`.
    pub fn profile_csv(&self) -> String {
        let mut out = String::from("r,y,rho,p,m,lambda,mu\n");
        for i in 0..self.grid.len() {
            out.push_str(&format!(
                "{:e},{:e},{:e},{:e},{:e},{:e},{:e}\n",
                self.grid[i], self.y[i], self.rho[i], self.p[i], self.m[i], self.lambda[i], self.mu[i]
            ));
        }
        out
    }
}

/// `lambda = -1/2 ln(1 - 2m/r)`, zero at the center.
#[inline]
pub fn lambda_of(m: f64, r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    -0.5 * (-2.0 * m / r).ln_1p()
}
