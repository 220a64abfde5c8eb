//! Finite-element discretization of the reduced radial operator
//!
//! ```text
//! Q[phi] = ∫ c(r) (w')² r² dr - 4π ∫ e^{mu+lambda} g'(y) phi² r² dr,   w = e^{mu+lambda} phi,
//! c(r) = e^{-mu-3 lambda} / (2 r mu' + 1),
//! ```
//!
//! paired with the homogeneous Sobolev norm `B[phi] = ∫ phi'² r² dr`.
//! Continuous piecewise-linear elements in `w` make both forms tridiagonal,
//! so Morse indices come from LDLᵀ pivot signs and individual eigenvalues
//! from bisection on the pivot count.

pub mod tridiag;

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::eos::EquationOfState;
use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;
use crate::tov::{solve_steady_state, SolverConfig, SteadyState};
pub use tridiag::{Pencil, Tridiag};

/// Pointwise coefficients of the form at one radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaCoefficients {
    /// Principal coefficient `c(r)`.
    pub stiffness: f64,
    /// `4π e^{-mu-lambda} g'(y)`, the potential acting on `w²`.
    pub potential: f64,
    /// `e^{-mu-lambda}`, converting `w` back to `phi`.
    pub conj: f64,
    /// `mu' + lambda'`.
    pub nu: f64,
}

/// Anything the reduced form can be assembled on: a relativistic star or
/// its Newtonian limit.
pub trait SigmaBackground: Send + Sync + std::fmt::Debug {
    fn radius(&self) -> f64;
    /// Length scale of the core, used to grade the mesh near the center.
    fn core_scale(&self) -> f64;
    /// Exponent of the density's power-law vanishing at the surface.
    fn surface_exponent(&self) -> f64;
    fn coefficients(&self, r: f64) -> Result<SigmaCoefficients>;
    /// `(S, B)` boundary coefficients at `r_out` for the exact exterior
    /// continuation, multiplying `w(r_out)²`.
    fn exterior_closure(&self, r_out: f64) -> (f64, f64);
    fn label(&self) -> f64;
}

impl SigmaBackground for SteadyState {
    fn radius(&self) -> f64 {
        self.radius
    }

    fn core_scale(&self) -> f64 {
        self.scale_height()
    }

    fn surface_exponent(&self) -> f64 {
        self.eos().alpha()
    }

    fn coefficients(&self, r: f64) -> Result<SigmaCoefficients> {
        let pt = self.profile_at(r)?;
        let denom = 2.0 * r * pt.dmu + 1.0;
        let stiffness = (-pt.mu - 3.0 * pt.lambda).exp() / denom;
        let conj = (-pt.mu - pt.lambda).exp();
        Ok(SigmaCoefficients {
            stiffness,
            potential: 4.0 * PI * conj * pt.dg,
            conj,
            nu: pt.dmu + pt.dlambda,
        })
    }

    fn exterior_closure(&self, r_out: f64) -> (f64, f64) {
        schwarzschild_closure(self.mass, r_out)
    }

    fn label(&self) -> f64 {
        self.kappa
    }
}

/// Energy of the exterior solution `w ∝ 1/(r - 2M)` beyond `r_out`.
pub fn schwarzschild_closure(mass: f64, r_out: f64) -> (f64, f64) {
    let t0 = r_out - 2.0 * mass;
    let s = t0;
    let b = t0 + 2.0 * mass + 4.0 * mass * mass / (3.0 * t0);
    (s, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralConfig {
    /// Total number of elements on `[0, R_out]`.
    pub elements: usize,
    /// `R_out / R`.
    pub out_factor: f64,
    /// Grading exponent toward the surface; `None` uses the density exponent.
    pub clustering: Option<f64>,
    /// Share of elements placed inside the star.
    pub interior_fraction: f64,
    /// Threshold below which a kernel gap counts as unresolved.
    pub gap_threshold: f64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig {
            elements: 600,
            out_factor: 25.0,
            clustering: None,
            interior_fraction: 0.75,
            gap_threshold: 1e-3,
        }
    }
}

impl SpectralConfig {
    pub fn validate(&self) -> Result<()> {
        if self.elements < 64 {
            return Err(Error::Config(format!(
                "spectral.elements must be at least 64, got {}",
                self.elements
            )));
        }
        if !(self.out_factor >= 10.0) {
            return Err(Error::Config(format!(
                "spectral.out_factor must be at least 10, got {}",
                self.out_factor
            )));
        }
        if !(self.interior_fraction > 0.1 && self.interior_fraction < 0.95) {
            return Err(Error::Config("spectral.interior_fraction must lie in (0.1, 0.95)".into()));
        }
        if let Some(q) = self.clustering {
            if !(q >= 1.0 && q <= 4.0) {
                return Err(Error::Config("spectral.clustering must lie in [1, 4]".into()));
            }
        }
        Ok(())
    }

    pub fn refined(&self) -> Self {
        SpectralConfig {
            elements: self.elements * 2,
            ..*self
        }
    }
}

/// Nodes on `[0, R_out]` with `R` as a node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialMesh {
    pub nodes: Vec<f64>,
    /// Index of the node at the stellar radius.
    pub surface_index: usize,
    pub radius: f64,
    pub r_out: f64,
    pub clustering: f64,
    pub elements: usize,
    /// Exterior closure coefficients `(S, B)`.
    pub robin_coeff: (f64, f64),
}

impl RadialMesh {
    pub fn build(bg: &dyn SigmaBackground, cfg: &SpectralConfig) -> Result<Self> {
        cfg.validate()?;
        let radius = bg.radius();
        let r_out = cfg.out_factor * radius;
        let q = cfg.clustering.unwrap_or_else(|| bg.surface_exponent().clamp(1.0, 4.0));
        let n_in = ((cfg.elements as f64 * cfg.interior_fraction).round() as usize).max(16);
        let n_ex = cfg.elements.saturating_sub(n_in).max(8);
        let mut nodes = interior_nodes(radius, bg.core_scale(), q, n_in);
        let ratio = (r_out / radius).ln();
        for j in 1..=n_ex {
            let r = if j == n_ex {
                r_out
            } else {
                radius * (ratio * j as f64 / n_ex as f64).exp()
            };
            nodes.push(r);
        }
        for w in nodes.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Numerical("radial mesh nodes not increasing".into()));
            }
        }
        Ok(RadialMesh {
            surface_index: n_in,
            radius,
            r_out,
            clustering: q,
            elements: nodes.len() - 1,
            robin_coeff: bg.exterior_closure(r_out),
            nodes,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// `n + 1` nodes on `[0, radius]`: half of the map is logarithmic in
/// `r / core_scale` so compact cores are resolved, and the result is graded
/// toward the surface with exponent `q`.
pub fn interior_nodes(radius: f64, core_scale: f64, q: f64, n: usize) -> Vec<f64> {
    let rc = core_scale.min(radius);
    let lmax = (1.0 + radius / rc).ln();
    let u_of = |r: f64| 0.5 * r / radius + 0.5 * (1.0 + r / rc).ln() / lmax;
    (0..=n)
        .map(|j| {
            if j == 0 {
                0.0
            } else if j == n {
                radius
            } else {
                let xi = j as f64 / n as f64;
                invert_monotone(&u_of, 1.0 - (1.0 - xi).powf(q), 0.0, radius)
            }
        })
        .collect()
}

fn invert_monotone(f: &dyn Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// The assembled quadratic form `S` and norm Gram `B` together with the
/// background they were built from.
#[derive(Debug, Clone)]
pub struct FormPair {
    pub s: Tridiag,
    pub b: Tridiag,
    /// Potential part of `S` alone, so `S = stiffness - potential`.
    pub potential: Tridiag,
    pub mesh: RadialMesh,
    pub kappa: f64,
    background: Arc<dyn SigmaBackground>,
    config: SpectralConfig,
}

/// Assembles the reduced form on `mesh`.
pub fn assemble_sigma(bg: Arc<dyn SigmaBackground>, mesh: RadialMesh, cfg: &SpectralConfig) -> Result<FormPair> {
    if (mesh.radius - bg.radius()).abs() > 1e-12 * bg.radius() {
        return Err(Error::Config("mesh was built for a different background".into()));
    }
    let n = mesh.len();
    let mut s = Tridiag::zeros(n);
    let mut b = Tridiag::zeros(n);
    let mut pot = Tridiag::zeros(n);
    let gl2 = GaussLegendre::new(2);
    let gl4 = GaussLegendre::new(4);
    let si = mesh.surface_index;
    for e in 0..n - 1 {
        let (ra, rb) = (mesh.nodes[e], mesh.nodes[e + 1]);
        let h = rb - ra;
        let rule = if e + 1 == si || e == si { &gl4 } else { &gl2 };
        let inside = e < si;
        let mut ks = [[0.0; 2]; 2];
        let mut kb = [[0.0; 2]; 2];
        let mut kp = [[0.0; 2]; 2];
        for (r, wt) in rule.on(ra, rb) {
            let c = bg.coefficients(r)?;
            if !(c.stiffness > 0.0) {
                return Err(Error::Numerical(format!(
                    "non-positive principal coefficient {} at r = {r:e}",
                    c.stiffness
                )));
            }
            let nb = (r - ra) / h;
            let shape = [1.0 - nb, nb];
            let grad = [-1.0 / h, 1.0 / h];
            let r2 = r * r;
            for i in 0..2 {
                for j in 0..2 {
                    ks[i][j] += wt * c.stiffness * grad[i] * grad[j] * r2;
                    if inside {
                        kp[i][j] += wt * c.potential * shape[i] * shape[j] * r2;
                    }
                    let di = c.conj * (grad[i] - c.nu * shape[i]);
                    let dj = c.conj * (grad[j] - c.nu * shape[j]);
                    kb[i][j] += wt * di * dj * r2;
                }
            }
        }
        for (m, k) in [(&mut s, &ks), (&mut b, &kb), (&mut pot, &kp)] {
            m.diag[e] += k[0][0];
            m.diag[e + 1] += k[1][1];
            m.off[e] += k[0][1];
        }
    }
    let last = n - 1;
    s.diag[last] += mesh.robin_coeff.0;
    b.diag[last] += mesh.robin_coeff.1;
    // S = stiffness - potential.
    for i in 0..n {
        s.diag[i] -= pot.diag[i];
    }
    for i in 0..n - 1 {
        s.off[i] -= pot.off[i];
    }
    Ok(FormPair {
        s,
        b,
        potential: pot,
        mesh,
        kappa: bg.label(),
        background: bg,
        config: *cfg,
    })
}

/// Builds the mesh and assembles in one go.
pub fn assemble_for(bg: Arc<dyn SigmaBackground>, cfg: &SpectralConfig) -> Result<FormPair> {
    let mesh = RadialMesh::build(bg.as_ref(), cfg)?;
    assemble_sigma(bg, mesh, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MorseIndex {
    pub n_minus: usize,
    pub n_minus_refined: usize,
    pub elements: usize,
    pub elements_refined: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelGap {
    /// Smallest `|theta|` over the pencil spectrum.
    pub gap: f64,
    /// Largest negative eigenvalue, if any.
    pub theta_below: Option<f64>,
    /// Smallest nonnegative eigenvalue.
    pub theta_above: f64,
    /// Eigenvector (node values of `w`) for the eigenvalue nearest zero.
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Eigenpair {
    pub theta: f64,
    pub vector: Vec<f64>,
}

impl FormPair {
    pub fn pencil(&self) -> Pencil<'_> {
        Pencil::new(&self.s, &self.b)
    }

    pub fn background(&self) -> &Arc<dyn SigmaBackground> {
        &self.background
    }

    pub fn config(&self) -> &SpectralConfig {
        &self.config
    }

    /// Stiffness part alone (`S + potential`).
    pub fn stiffness(&self) -> Tridiag {
        self.s.shifted(-1.0, &self.potential)
    }

    /// Negative index of `S` on this mesh only.
    pub fn inertia(&self) -> Result<usize> {
        self.s.negative_count()
    }

    /// Same background, twice the elements.
    pub fn refined(&self) -> Result<FormPair> {
        assemble_for(self.background.clone(), &self.config.refined())
    }

    /// Morse index here and on a once-refined mesh.
    pub fn morse_index(&self) -> Result<MorseIndex> {
        let n_minus = self.inertia()?;
        let fine = self.refined()?;
        let n_minus_refined = fine.inertia()?;
        Ok(MorseIndex {
            n_minus,
            n_minus_refined,
            elements: self.mesh.elements,
            elements_refined: fine.mesh.elements,
            converged: n_minus == n_minus_refined,
        })
    }

    /// Eigenvalues adjacent to zero and the eigenvector of the closer one.
    pub fn kernel_gap(&self) -> Result<KernelGap> {
        let p = self.pencil();
        let n_minus = self.inertia()?;
        let theta_below = if n_minus > 0 { Some(p.eigenvalue(n_minus)?) } else { None };
        let theta_above = p.eigenvalue(n_minus + 1)?;
        let (gap, nearest) = match theta_below {
            Some(t) if t.abs() < theta_above => (t.abs(), t),
            _ => (theta_above.abs(), theta_above),
        };
        let vector = p.eigenvector(nearest)?;
        Ok(KernelGap {
            gap,
            theta_below,
            theta_above,
            vector,
        })
    }

    /// The `k` smallest pencil eigenpairs.
    pub fn lowest_eigenpairs(&self, k: usize) -> Result<Vec<Eigenpair>> {
        let p = self.pencil();
        (1..=k.min(self.s.len()))
            .map(|j| {
                let theta = p.eigenvalue(j)?;
                Ok(Eigenpair {
                    theta,
                    vector: p.eigenvector(theta)?,
                })
            })
            .collect()
    }

    /// Converts node values of `w` into node values of `phi`.
    pub fn phi_from_w(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.mesh
            .nodes
            .iter()
            .zip(w)
            .map(|(&r, &wi)| Ok(self.background.coefficients(r)?.conj * wi))
            .collect()
    }

    /// `i j value` triplets of the upper triangle of `S` then `B`, 0-based.
    pub fn triplets(&self) -> (String, String) {
        let dump = |m: &Tridiag| {
            let mut out = String::new();
            for i in 0..m.len() {
                out.push_str(&format!("{i} {i} {:e}\n", m.diag[i]));
                if i + 1 < m.len() {
                    out.push_str(&format!("{i} {} {:e}\n", i + 1, m.off[i]));
                }
            }
            out
        };
        (dump(&self.s), dump(&self.b))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralReport {
    pub kappa: f64,
    pub n_minus: usize,
    pub kernel_gap: f64,
    pub theta_below: Option<f64>,
    pub theta_above: f64,
    pub lowest_eigenvalues: Vec<f64>,
    pub lowest_eigenpairs: Vec<Eigenpair>,
    pub mesh_nodes: Vec<f64>,
    pub mesh_convergence: MorseIndex,
}

/// Morse index, kernel gap and the lowest few eigenpairs of one form.
pub fn spectral_report(pair: &FormPair, pairs: usize) -> Result<SpectralReport> {
    let mesh_convergence = pair.morse_index()?;
    let gap = pair.kernel_gap()?;
    let lowest = pair.lowest_eigenpairs(pairs)?;
    Ok(SpectralReport {
        kappa: pair.kappa,
        n_minus: mesh_convergence.n_minus,
        kernel_gap: gap.gap,
        theta_below: gap.theta_below,
        theta_above: gap.theta_above,
        lowest_eigenvalues: lowest.iter().map(|e| e.theta).collect(),
        lowest_eigenpairs: lowest,
        mesh_nodes: pair.mesh.nodes.clone(),
        mesh_convergence,
    })
}

/// Solves the star at `kappa` and assembles its reduced form.
pub fn sigma_at(eos: &Arc<EquationOfState>, kappa: f64, solver: &SolverConfig, cfg: &SpectralConfig) -> Result<FormPair> {
    let state = Arc::new(solve_steady_state(eos, kappa, solver)?);
    assemble_for(state, cfg).map_err(|e| e.at_kappa(kappa))
}

/// Relative weak residual of the reduced operator applied to `d y / d kappa`.
///
/// The derivative tends to `d mu(R) / d kappa` at infinity instead of zero,
/// so the row of the exterior closure is left out of the residual.
pub fn null_direction_residual(
    eos: &Arc<EquationOfState>,
    kappa: f64,
    delta: f64,
    solver: &SolverConfig,
    cfg: &SpectralConfig,
) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::Config(format!("delta must be positive, got {delta}")));
    }
    if delta >= kappa {
        return Err(Error::Config("delta must be smaller than kappa".into()));
    }
    let center = Arc::new(solve_steady_state(eos, kappa, solver)?);
    let plus = solve_steady_state(eos, kappa + delta, solver)?;
    let minus = solve_steady_state(eos, kappa - delta, solver)?;
    let pair = assemble_for(center.clone(), cfg)?;
    let y_at = |s: &SteadyState, r: f64| -> Result<f64> {
        if r >= s.radius {
            Ok(s.extend_exterior(r).0)
        } else {
            Ok(s.profile_at(r)?.y)
        }
    };
    let mut w = Vec::with_capacity(pair.mesh.len());
    for &r in &pair.mesh.nodes {
        let v = (y_at(&plus, r)? - y_at(&minus, r)?) / (2.0 * delta);
        let conj = center.coefficients(r)?.conj;
        w.push(v / conj);
    }
    let n = w.len() - 1;
    let sw = pair.s.matvec(&w);
    let residual = &sw[..n];
    let b_inner = pair.b.leading(n);
    let z = b_inner.solve(residual)?;
    let num: f64 = residual.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>().sqrt();
    let den = pair.b.quad_form(&w).sqrt();
    Ok(num / den)
}
