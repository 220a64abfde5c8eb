//! The full linearized operator on density perturbations and the
//! second-order operator on velocities.
//!
//! Densities are piecewise constant on cells of `[0, R]`. For a density `rho`
//! the induced potential satisfies `e^{mu+lambda} mubar = -4π G` with
//!
//! ```text
//! G(r) = ∫_r^R m_rho(s) / W(s) ds + m_rho(R) / (R - 2M),
//! m_rho(s) = ∫_0^s t² rho dt,    W = r² e^{-mu-3 lambda} / (2 r mu' + 1),
//! ```
//!
//! the last term being the exact Schwarzschild tail. Velocities are
//! piecewise linear and mapped to cell densities by the exact cell average of
//! `A v = -(1/r²) (r² w v)'`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;
use crate::spectral::interior_nodes;
use crate::tov::SteadyState;

/// Weight `w` in `A v = -(1/r²) (r² w v)'`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VelocityWeight {
    /// `e^{-3 lambda / 2} n^{1/2}`.
    #[default]
    Baryon,
    /// `e^{(mu - 3 lambda)/2} (rho + p)^{1/2}`.
    Enthalpy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModesConfig {
    pub cells: usize,
    pub nodes: usize,
    pub weight: VelocityWeight,
    /// Largest relative asymmetry tolerated before symmetrization.
    pub symmetry_tol: f64,
}

impl Default for ModesConfig {
    fn default() -> Self {
        ModesConfig {
            cells: 400,
            nodes: 400,
            weight: VelocityWeight::Baryon,
            symmetry_tol: 1e-8,
        }
    }
}

impl ModesConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cells < 16 || self.nodes < 16 {
            return Err(Error::Config("modes.cells and modes.nodes must be at least 16".into()));
        }
        if self.nodes > self.cells {
            return Err(Error::Config(format!(
                "modes.nodes ({}) may not exceed modes.cells ({})",
                self.nodes, self.cells
            )));
        }
        if self.cells > 2000 {
            return Err(Error::Config("modes.cells above 2000 is not supported".into()));
        }
        Ok(())
    }
}

/// Cell partition of `[0, R]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cells {
    pub edges: Vec<f64>,
    /// `∫ r² dr` over each cell.
    pub volumes: Vec<f64>,
}

impl Cells {
    pub fn for_state(state: &SteadyState, n: usize) -> Self {
        let q = state.eos().alpha().clamp(1.0, 4.0);
        let edges = interior_nodes(state.radius, state.scale_height(), q, n);
        let volumes = edges.windows(2).map(|w| (w[1].powi(3) - w[0].powi(3)) / 3.0).collect();
        Cells { edges, volumes }
    }

    pub fn len(&self) -> usize {
        self.volumes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.volumes.is_empty()
    }
}

/// `⟨L rho, rho⟩` on cell densities.
#[derive(Debug, Clone)]
pub struct DensityForm {
    pub kappa: f64,
    pub cells: Cells,
    /// Symmetrized pairing matrix.
    pub lmat: DMatrix<f64>,
    /// Local part `4π ∫_cell e^{mu+lambda} r² / g'(y) dr`, also the Gram of the
    /// weighted inner product.
    pub xgram: Vec<f64>,
    /// `4π ∫_cell r² dr`.
    pub mean_vec: Vec<f64>,
    /// `max |L - Lᵀ| / max |L|` before symmetrization.
    pub asymmetry: f64,
}

struct Kernel<'a> {
    state: &'a SteadyState,
    e_mu_c: f64,
    gl: GaussLegendre,
}

#[derive(Clone, Copy)]
struct Local {
    /// `1/W - e^{mu_c}/r²`.
    h: f64,
    /// `1/W`.
    f: f64,
}

impl<'a> Kernel<'a> {
    fn new(state: &'a SteadyState) -> Self {
        Kernel {
            state,
            e_mu_c: (state.mu_r - state.kappa).exp(),
            gl: GaussLegendre::new(8),
        }
    }

    fn local(&self, r: f64) -> Result<Local> {
        let pt = self.state.profile_at(r)?;
        let top = (pt.mu + 3.0 * pt.lambda).exp() * (2.0 * r * pt.dmu + 1.0);
        let r2 = r * r;
        Ok(Local {
            h: (top - self.e_mu_c) / r2,
            f: top / r2,
        })
    }

    /// `∫_a^b 1/W ds`, the `1/s²` part done exactly.
    fn int_f(&self, a: f64, b: f64) -> Result<f64> {
        let mut acc = self.e_mu_c * (1.0 / a - 1.0 / b);
        for (s, w) in self.gl.on(a, b) {
            acc += w * self.local(s)?.h;
        }
        Ok(acc)
    }

    /// `∫_a^b m(s)/W ds` with `m(s) = (s³ - lo³)/3`.
    fn int_mf(&self, lo: f64, a: f64, b: f64) -> Result<f64> {
        let mut acc = 0.0;
        for (s, w) in self.gl.on(a, b) {
            acc += w * (s.powi(3) - lo.powi(3)) / 3.0 * self.local(s)?.f;
        }
        Ok(acc)
    }
}

/// Per-cell integrals used by the nonlocal block.
#[derive(Debug, Clone, Copy)]
struct CellIntegrals {
    /// `∫_cell K(r) r² dr`.
    p: f64,
    /// `∫_cell m_i / W`.
    c: f64,
    /// `∫_cell r² ∫_r^b m_i / W ds dr + V² K(b)`.
    d: f64,
    /// Local term.
    x: f64,
}

/// `e^{mu+lambda} / g'(y)` on a cell, with the substitution
/// `R - r = t^q` that absorbs the integrable surface singularity.
fn local_term(state: &SteadyState, a: f64, b: f64, gl: &GaussLegendre) -> Result<f64> {
    let gamma = state.eos().gamma();
    let e = (gamma - 2.0) / (gamma - 1.0);
    let q = 1.0 / (1.0 + e);
    let big_r = state.radius;
    let weight = |r: f64| -> Result<f64> {
        let pt = state.profile_at(r)?;
        if pt.dg <= 0.0 {
            return Ok(0.0);
        }
        Ok((pt.mu + pt.lambda).exp() / pt.dg * r * r)
    };
    if a < 0.5 * big_r {
        let mut acc = 0.0;
        for (r, w) in gl.on(a, b) {
            acc += w * weight(r)?;
        }
        return Ok(4.0 * PI * acc);
    }
    let t0 = (big_r - b).max(0.0).powf(1.0 / q);
    let t1 = (big_r - a).powf(1.0 / q);
    let mut acc = 0.0;
    for (t, w) in gl.on(t0, t1) {
        let r = big_r - t.powf(q);
        acc += w * weight(r)? * q * t.powf(q - 1.0);
    }
    Ok(4.0 * PI * acc)
}

/// Assembles `⟨L rho, rho⟩` on `n` cells.
pub fn assemble_l(state: &SteadyState, n: usize, symmetry_tol: f64) -> Result<DensityForm> {
    let gamma = state.eos().gamma();
    if gamma <= 1.5 {
        return Err(Error::Config(format!(
            "the local term is not integrable at the surface for gamma = {gamma} <= 3/2"
        )));
    }
    let cells = Cells::for_state(state, n);
    let kern = Kernel::new(state);
    let edges = &cells.edges;
    let big_r = state.radius;

    // K(b_i) = ∫_{b_i}^R 1/W + 1/(R - 2M).
    let seg: Vec<f64> = (1..n)
        .into_par_iter()
        .map(|i| kern.int_f(edges[i], edges[i + 1]))
        .collect::<Result<_>>()?;
    let mut k_b = vec![0.0; n];
    k_b[n - 1] = 1.0 / (big_r - 2.0 * state.mass);
    for i in (0..n - 1).rev() {
        k_b[i] = k_b[i + 1] + seg[i];
    }

    let integrals: Vec<CellIntegrals> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<CellIntegrals> {
            let (a, b) = (edges[i], edges[i + 1]);
            let v = cells.volumes[i];
            let mut p = 0.0;
            let mut inner = 0.0;
            for (r, w) in kern.gl.on(a, b) {
                let k_r = k_b[i] + kern.int_f(r, b)?;
                p += w * k_r * r * r;
                inner += w * r * r * kern.int_mf(a, r, b)?;
            }
            Ok(CellIntegrals {
                p,
                c: kern.int_mf(a, a, b)?,
                d: inner + v * v * k_b[i],
                x: local_term(state, a, b, &kern.gl)?,
            })
        })
        .collect::<Result<_>>()?;

    let c16 = 16.0 * PI * PI;
    let vols = &cells.volumes;
    let mut lmat = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            lmat[(i, j)] = match i.cmp(&j) {
                std::cmp::Ordering::Greater => -c16 * vols[j] * integrals[i].p,
                std::cmp::Ordering::Less => -c16 * vols[i] * (integrals[j].c + vols[j] * k_b[j]),
                std::cmp::Ordering::Equal => -c16 * integrals[i].d + integrals[i].x,
            };
        }
    }
    let scale = lmat.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            asym = asym.max((lmat[(i, j)] - lmat[(j, i)]).abs());
        }
    }
    let asymmetry = asym / scale;
    if asymmetry > symmetry_tol {
        return Err(Error::Numerical(format!(
            "density form asymmetry {asymmetry:.3e} exceeds {symmetry_tol:.1e}"
        )));
    }
    let lmat = (&lmat + lmat.transpose()) * 0.5;
    Ok(DensityForm {
        kappa: state.kappa,
        mean_vec: vols.iter().map(|v| 4.0 * PI * v).collect(),
        xgram: integrals.iter().map(|c| c.x).collect(),
        cells,
        lmat,
        asymmetry,
    })
}

/// `e^{mu+lambda} mubar` at radius `r` for cell densities `rho`, via `-4π G`.
pub fn induced_potential(state: &SteadyState, cells: &Cells, rho: &[f64], radii: &[f64]) -> Result<Vec<f64>> {
    let kern = Kernel::new(state);
    let edges = &cells.edges;
    let n = cells.len();
    // Cumulative mass m_rho at the edges.
    let mut m_edge = vec![0.0; n + 1];
    for i in 0..n {
        m_edge[i + 1] = m_edge[i] + rho[i] * cells.volumes[i];
    }
    let m_tot = m_edge[n];
    let m_at = |s: f64| -> f64 {
        let i = crate::interp::locate(edges, s).min(n - 1);
        m_edge[i] + rho[i] * (s.powi(3) - edges[i].powi(3)) / 3.0
    };
    let tail = m_tot / (state.radius - 2.0 * state.mass);
    radii
        .iter()
        .map(|&r| {
            if r >= state.radius {
                return Ok(-4.0 * PI * m_tot / (r - 2.0 * state.mass));
            }
            let mut g = tail;
            let start = crate::interp::locate(edges, r).min(n - 1);
            for i in start..n {
                let a = if i == start { r } else { edges[i] };
                let b = edges[i + 1];
                if b <= a {
                    continue;
                }
                for (s, w) in kern.gl.on(a, b) {
                    g += w * m_at(s) * kern.local(s)?.f;
                }
            }
            Ok(-4.0 * PI * g)
        })
        .collect()
}

/// Dense generalized eigenproblem `A x = theta B x` with `B` positive definite.
/// Eigenvalues ascending; eigenvectors as columns, `B`-orthonormal.
pub fn generalized_eigen(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    // Jacobi scaling first: near the center the Gram entries span many decades.
    let n = a.nrows();
    let d = DVector::from_iterator(n, (0..n).map(|i| 1.0 / b[(i, i)].sqrt()));
    let scale = |m: &DMatrix<f64>| DMatrix::from_fn(n, n, |i, j| m[(i, j)] * d[i] * d[j]);
    let (a, b) = (&scale(a), scale(b));
    let chol = b
        .cholesky()
        .ok_or_else(|| Error::Numerical("Gram matrix is not positive definite".into()))?;
    let l = chol.l();
    let x = l
        .solve_lower_triangular(a)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let c = l
        .solve_lower_triangular(&x.transpose())
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(c, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::<f64>::zeros(a.nrows(), a.nrows());
    let lt = l.transpose();
    for (k, &i) in order.iter().enumerate() {
        let z = eig.eigenvectors.column(i).into_owned();
        let v = lt
            .solve_upper_triangular(&z)
            .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
        vecs.set_column(k, &v.component_mul(&d));
    }
    Ok((values, vecs))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstrainedIndex {
    /// Negative count on mean-zero densities.
    pub n_minus: usize,
    /// Negative count without the constraint.
    pub n_minus_unconstrained: usize,
    /// Lowest eigenvalues of the constrained pencil.
    pub lowest: Vec<f64>,
}

/// Orthonormal basis (columns) of the complement of `c`, by one Householder reflection.
fn complement_basis(c: &[f64]) -> DMatrix<f64> {
    let n = c.len();
    let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut u = DVector::from_iterator(n, c.iter().map(|v| v / norm));
    // Reflect c/|c| onto -sign(c0) e_0 to avoid cancellation.
    let s = if u[0] >= 0.0 { 1.0 } else { -1.0 };
    u[0] += s;
    let un = u.norm();
    u /= un;
    let mut h = DMatrix::<f64>::identity(n, n);
    h -= &u * u.transpose() * 2.0;
    h.columns(1, n - 1).into_owned()
}

fn count_negative(values: &[f64]) -> usize {
    values.iter().filter(|&&v| v < 0.0).count()
}

fn sym_eigenvalues(m: DMatrix<f64>) -> Result<Vec<f64>> {
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;
    let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(v)
}

/// Morse index of `L` on densities with zero total mass.
///
/// Works in coordinates normalized by the local Gram, which is diagonal but
/// spans many decades; the constraint is projected out there.
pub fn constrained_morse_index(form: &DensityForm) -> Result<ConstrainedIndex> {
    let n = form.cells.len();
    let d: Vec<f64> = form.xgram.iter().map(|x| 1.0 / x.sqrt()).collect();
    let scaled = DMatrix::from_fn(n, n, |i, j| form.lmat[(i, j)] * d[i] * d[j]);
    let c: Vec<f64> = form.mean_vec.iter().zip(&d).map(|(m, di)| m * di).collect();
    let z = complement_basis(&c);
    let vals = sym_eigenvalues(z.transpose() * &scaled * &z)?;
    let all = sym_eigenvalues(scaled)?;
    Ok(ConstrainedIndex {
        n_minus: count_negative(&vals),
        n_minus_unconstrained: count_negative(&all),
        lowest: vals.iter().take(6.min(n - 1)).copied().collect(),
    })
}

/// `⟨L A v, A v⟩` and the velocity Gram on piecewise-linear nodes.
#[derive(Debug, Clone)]
pub struct ModeForm {
    pub kappa: f64,
    /// Velocity nodes on `[0, R]`; unknowns sit at the interior ones.
    pub nodes: Vec<f64>,
    pub smode: DMatrix<f64>,
    pub ygram: DMatrix<f64>,
    /// Cell densities `A v_k` for each basis velocity (columns).
    pub amap: DMatrix<f64>,
    /// `w(r)` at every node, zero at the surface.
    pub weight_profile: Vec<f64>,
    /// `max |S - Sᵀ| / max |S|` of the unsymmetrized product.
    pub asymmetry: f64,
    /// `max_k |mean_vecᵀ A v_k|` relative to the column scale.
    pub range_defect: f64,
}

fn velocity_weight(state: &SteadyState, r: f64, kind: VelocityWeight) -> Result<f64> {
    if r >= state.radius {
        return Ok(0.0);
    }
    let pt = state.profile_at(r)?;
    if pt.rho <= 0.0 {
        return Ok(0.0);
    }
    Ok(match kind {
        VelocityWeight::Baryon => (-1.5 * pt.lambda).exp() * state.eos().baryon_density(pt.rho)?.sqrt(),
        VelocityWeight::Enthalpy => (0.5 * (pt.mu - 3.0 * pt.lambda)).exp() * (pt.rho + pt.p).sqrt(),
    })
}

/// Hat function `k` of the node set, evaluated at `r`.
fn hat(nodes: &[f64], k: usize, r: f64) -> f64 {
    let x = nodes[k];
    if k > 0 && r > nodes[k - 1] && r <= x {
        return (r - nodes[k - 1]) / (x - nodes[k - 1]);
    }
    if k + 1 < nodes.len() && r >= x && r < nodes[k + 1] {
        return (nodes[k + 1] - r) / (nodes[k + 1] - x);
    }
    if r == x {
        1.0
    } else {
        0.0
    }
}

pub fn assemble_modes(state: &SteadyState, form: &DensityForm, cfg: &ModesConfig) -> Result<ModeForm> {
    let cells = &form.cells;
    let nodes = if cfg.nodes == cells.len() {
        cells.edges.clone()
    } else {
        interior_nodes(
            state.radius,
            state.scale_height(),
            state.eos().alpha().clamp(1.0, 4.0),
            cfg.nodes,
        )
    };
    let weight_profile: Vec<f64> = nodes
        .iter()
        .map(|&r| velocity_weight(state, r, cfg.weight))
        .collect::<Result<_>>()?;
    if *weight_profile.last().unwrap() != 0.0 {
        return Err(Error::Invariant("velocity weight does not vanish at the surface".into()));
    }
    // Weight at the cell edges (they coincide with nodes in the default layout).
    let edge_weight: Vec<f64> = if cfg.nodes == cells.len() {
        weight_profile.clone()
    } else {
        cells
            .edges
            .iter()
            .map(|&r| velocity_weight(state, r, cfg.weight))
            .collect::<Result<_>>()?
    };
    let nc = cells.len();
    let dofs = nodes.len() - 2;
    let mut amap = DMatrix::<f64>::zeros(nc, dofs);
    for k in 0..dofs {
        let node = k + 1;
        let f = |e: usize| {
            let r = cells.edges[e];
            r * r * edge_weight[e] * hat(&nodes, node, r)
        };
        for j in 0..nc {
            let (fa, fb) = (f(j), f(j + 1));
            if fa != 0.0 || fb != 0.0 {
                amap[(j, k)] = -(fb - fa) / cells.volumes[j];
            }
        }
    }
    let mut range_defect = 0.0f64;
    for k in 0..dofs {
        let col = amap.column(k);
        let total: f64 = col.iter().zip(&form.mean_vec).map(|(a, m)| a * m).sum();
        let scale: f64 = col.iter().zip(&form.mean_vec).map(|(a, m)| (a * m).abs()).sum();
        if scale > 0.0 {
            range_defect = range_defect.max(total.abs() / scale);
        }
    }

    let raw = amap.transpose() * &form.lmat * &amap;
    let scale = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut asym = 0.0f64;
    for i in 0..dofs {
        for j in 0..i {
            asym = asym.max((raw[(i, j)] - raw[(j, i)]).abs());
        }
    }
    let smode = (&raw + raw.transpose()) * 0.5;

    // 4π ∫ v_i v_j r² dr, exact for hats with 3-point Gauss.
    let gl = GaussLegendre::new(3);
    let mut ygram = DMatrix::<f64>::zeros(dofs, dofs);
    for e in 0..nodes.len() - 1 {
        let (a, b) = (nodes[e], nodes[e + 1]);
        for (r, w) in gl.on(a, b) {
            let t = (r - a) / (b - a);
            let vals = [(e, 1.0 - t), (e + 1, t)];
            for &(ni, vi) in &vals {
                for &(nj, vj) in &vals {
                    if ni >= 1 && ni <= dofs && nj >= 1 && nj <= dofs {
                        ygram[(ni - 1, nj - 1)] += 4.0 * PI * w * vi * vj * r * r;
                    }
                }
            }
        }
    }
    Ok(ModeForm {
        kappa: state.kappa,
        nodes,
        smode,
        ygram,
        amap,
        weight_profile,
        asymmetry: asym / scale,
        range_defect,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeReport {
    pub kappa: f64,
    pub n_u_direct: usize,
    pub growth_rates: Vec<f64>,
    pub n_minus_constrained: usize,
    pub n_minus_unconstrained: usize,
    /// Lowest pencil eigenvalues of the velocity form.
    pub lowest_theta: Vec<f64>,
    /// Spacing between consecutive lowest eigenvalues.
    pub eigenvalue_gaps: Vec<f64>,
    pub density_asymmetry: f64,
    pub mode_asymmetry: f64,
    pub range_defect: f64,
    pub weight: VelocityWeight,
    pub cells: usize,
    pub nodes: usize,
}

/// Everything computed for one star: the forms, eigenvectors and the report.
#[derive(Debug, Clone)]
pub struct ModeAnalysis {
    pub density: DensityForm,
    pub modes: ModeForm,
    pub theta: Vec<f64>,
    pub vectors: DMatrix<f64>,
    pub report: ModeReport,
}

impl ModeAnalysis {
    /// Profile table `r,v,rho_of_v` of mode `k` (0 = lowest), `rho` at cell midpoints.
    pub fn eigenmode_csv(&self, k: usize) -> String {
        let mut out = String::from("r,v,rho_of_v\n");
        let v = self.vectors.column(k);
        let rho = &self.modes.amap * v;
        let nodes = &self.modes.nodes;
        let cells = &self.density.cells;
        let mut ci = 0;
        for (i, &r) in nodes.iter().enumerate() {
            let vi = if i == 0 || i + 1 == nodes.len() { 0.0 } else { v[i - 1] };
            // Cell density at the cell containing r (left-continuous at the surface).
            while ci + 1 < cells.len() && cells.edges[ci + 1] <= r {
                ci += 1;
            }
            out.push_str(&format!("{r:e},{vi:e},{:e}\n", rho[ci]));
        }
        out
    }
}

pub fn unstable_modes(state: &SteadyState, cfg: &ModesConfig) -> Result<ModeAnalysis> {
    cfg.validate()?;
    let density = assemble_l(state, cfg.cells, cfg.symmetry_tol).map_err(|e| e.at_kappa(state.kappa))?;
    let constrained = constrained_morse_index(&density)?;
    let modes = assemble_modes(state, &density, cfg)?;
    if modes.asymmetry > cfg.symmetry_tol {
        return Err(Error::Numerical(format!(
            "velocity form asymmetry {:.3e} exceeds {:.1e}",
            modes.asymmetry, cfg.symmetry_tol
        ))
        .at_kappa(state.kappa));
    }
    let (theta, vectors) = generalized_eigen(&modes.smode, &modes.ygram)?;
    let growth_rates = theta.iter().filter(|&&t| t < 0.0).map(|t| (-t).sqrt()).collect();
    let lowest: Vec<f64> = theta.iter().take(6).copied().collect();
    let report = ModeReport {
        kappa: state.kappa,
        n_u_direct: count_negative(&theta),
        growth_rates,
        n_minus_constrained: constrained.n_minus,
        n_minus_unconstrained: constrained.n_minus_unconstrained,
        eigenvalue_gaps: lowest.windows(2).map(|w| w[1] - w[0]).collect(),
        lowest_theta: lowest,
        density_asymmetry: density.asymmetry,
        mode_asymmetry: modes.asymmetry,
        range_defect: modes.range_defect,
        weight: cfg.weight,
        cells: cfg.cells,
        nodes: cfg.nodes,
    };
    Ok(ModeAnalysis {
        density,
        modes,
        theta,
        vectors,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eos::EquationOfState;
    use crate::tov::{solve_steady_state, SolverConfig};
    use std::sync::Arc;

    fn state(kappa: f64) -> SteadyState {
        let eos = Arc::new(EquationOfState::hybrid_causal(1.0, 5.0 / 3.0, 1e12).unwrap());
        solve_steady_state(&eos, kappa, &SolverConfig::default()).unwrap()
    }

    #[test]
    fn complement_basis_is_orthonormal() {
        let c = [1.0, 2.0, -0.5, 3.0];
        let z = complement_basis(&c);
        let g = z.transpose() * &z;
        assert!((g - DMatrix::<f64>::identity(3, 3)).norm() < 1e-14);
        let cv = DVector::from_row_slice(&c);
        assert!((z.transpose() * cv).norm() < 1e-14);
    }

    #[test]
    fn generalized_eigen_small_case() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let b = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]);
        let (vals, vecs) = generalized_eigen(&a, &b).unwrap();
        assert!((vals[0] - 0.5).abs() < 1e-14 && (vals[1] - 1.5).abs() < 1e-14);
        let v = vecs.column(0);
        let r = &a * v - &b * v * vals[0];
        assert!(r.norm() < 1e-13);
    }

    #[test]
    fn zero_density_has_zero_potential() {
        let s = state(0.1);
        let cells = Cells::for_state(&s, 40);
        let pot = induced_potential(&s, &cells, &vec![0.0; 40], &[0.1, 0.5, 2.0]).unwrap();
        assert!(pot.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn density_form_is_symmetric_and_stable_at_small_kappa() {
        let s = state(0.05);
        let form = assemble_l(&s, 80, 1e-8).unwrap();
        assert!(form.asymmetry < 1e-8, "{}", form.asymmetry);
        let c = constrained_morse_index(&form).unwrap();
        assert_eq!(c.n_minus_unconstrained, 1);
        assert_eq!(c.n_minus, 0);
    }

    #[test]
    fn range_of_a_is_mean_zero() {
        let s = state(0.3);
        let cfg = ModesConfig {
            cells: 60,
            nodes: 60,
            ..Default::default()
        };
        let a = unstable_modes(&s, &cfg).unwrap();
        assert!(a.report.range_defect < 1e-12, "{}", a.report.range_defect);
        assert_eq!(a.report.n_u_direct, 0);
        assert!(a.report.lowest_theta[0] > 0.0);
    }

    #[test]
    fn density_derivative_is_a_constant_potential() {
        use crate::quadrature::integrate_adaptive;
        let eos = Arc::new(EquationOfState::hybrid_causal(1.0, 5.0 / 3.0, 1e12).unwrap());
        let cfg = SolverConfig::default();
        let (k, h) = (1.0, 1e-4);
        let s = solve_steady_state(&eos, k, &cfg).unwrap();
        let sp = solve_steady_state(&eos, k + h, &cfg).unwrap();
        let sm = solve_steady_state(&eos, k - h, &cfg).unwrap();
        let form = assemble_l(&s, 200, 1e-8).unwrap();
        let n = form.cells.len();
        let drho: Vec<f64> = (0..n)
            .map(|i| {
                let (a, b) = (form.cells.edges[i], form.cells.edges[i + 1]);
                let g = |r: f64| {
                    (sp.profile_at(r).unwrap().rho - sm.profile_at(r).unwrap().rho) / (2.0 * h) * r * r
                };
                integrate_adaptive(g, a, b, 1e-14, 1e-10).unwrap() / form.cells.volumes[i]
            })
            .collect();
        let dmu_r = (sp.mu_r - sm.mu_r) / (2.0 * h);
        let dm = (sp.mass - sm.mass) / (2.0 * h);
        let v = DVector::from_vec(drho);
        let lv = &form.lmat * &v;
        // Cells away from the surface, where the profile of d rho is smooth.
        for i in 0..(n * 9) / 10 {
            let c = lv[i] / form.mean_vec[i];
            assert!((c - dmu_r).abs() < 2e-3 * dmu_r.abs(), "cell {i}: {c} vs {dmu_r}");
        }
        let q = v.dot(&lv);
        assert!((q - dmu_r * dm).abs() < 5e-3 * (dmu_r * dm).abs(), "{q} vs {}", dmu_r * dm);
    }

    #[test]
    fn one_growing_mode_past_the_first_mass_maximum() {
        let a = unstable_modes(
            &state(0.6),
            &ModesConfig {
                cells: 120,
                nodes: 120,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(a.report.n_u_direct, 1);
        assert_eq!(a.report.n_minus_constrained, 1);
        assert!(a.report.growth_rates[0] > 0.0);
        let csv = a.eigenmode_csv(0);
        assert!(csv.starts_with("r,v,rho_of_v\n"));
        assert_eq!(csv.lines().count(), 122);
    }
}
