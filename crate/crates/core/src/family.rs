//! One-parameter families of equilibria: the mass–radius curve, its
//! extrema, the winding index and the mode-count report.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eos::EquationOfState;
use crate::error::{Error, Result};
use crate::modes::{unstable_modes, ModesConfig};
use crate::spectral::{assemble_for, SpectralConfig};
use crate::tov::{solve_steady_state, SolverConfig};

/// Anything that maps `kappa` to `(M, R)`.
pub trait FamilyModel: Sync {
    fn mass_radius(&self, kappa: f64) -> Result<(f64, f64)>;
}

impl<F> FamilyModel for F
where
    F: Fn(f64) -> Result<(f64, f64)> + Sync,
{
    fn mass_radius(&self, kappa: f64) -> Result<(f64, f64)> {
        self(kappa)
    }
}

/// TOV equilibria of a fixed equation of state.
#[derive(Debug, Clone)]
pub struct TovFamily {
    pub eos: Arc<EquationOfState>,
    pub solver: SolverConfig,
}

impl TovFamily {
    pub fn new(eos: Arc<EquationOfState>, solver: SolverConfig) -> Self {
        TovFamily { eos, solver }
    }
}

impl FamilyModel for TovFamily {
    fn mass_radius(&self, kappa: f64) -> Result<(f64, f64)> {
        let s = solve_steady_state(&self.eos, kappa, &self.solver)?;
        Ok((s.mass, s.radius))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GridScale {
    Linear,
    #[default]
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeMode {
    /// Fresh solves at `kappa (1 ± h)`, `kappa (1 ± 2h)` with Richardson extrapolation.
    #[default]
    Resolve,
    /// Centered differences on the sweep grid itself; endpoints get none.
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub kappa_min: f64,
    pub kappa_max: f64,
    pub points: usize,
    pub scale: GridScale,
    pub derivative: DerivativeMode,
    /// Relative step `h` of the re-solve stencil.
    pub step: f64,
    /// Noise floor as a multiple of the derivative error estimate.
    pub noise_factor: f64,
    /// Relative tolerance on refined extremum locations.
    pub refine_tol: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            kappa_min: 1e-3,
            kappa_max: 10.0,
            points: 200,
            scale: GridScale::Log,
            derivative: DerivativeMode::Resolve,
            step: 1e-3,
            noise_factor: 10.0,
            refine_tol: 1e-6,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa_min > 0.0 && self.kappa_max > self.kappa_min && self.kappa_max.is_finite()) {
            return Err(Error::Config(format!(
                "sweep needs 0 < kappa_min < kappa_max, got [{}, {}]",
                self.kappa_min, self.kappa_max
            )));
        }
        if self.points < 3 {
            return Err(Error::Config("sweep.points must be at least 3".into()));
        }
        if !(self.step >= 1e-4 && self.step < 0.1) {
            return Err(Error::Config(format!("sweep.step must lie in [1e-4, 0.1), got {}", self.step)));
        }
        if !(self.noise_factor >= 1.0) || !(self.refine_tol > 0.0 && self.refine_tol < 1e-2) {
            return Err(Error::Config("sweep.noise_factor >= 1 and 0 < sweep.refine_tol < 1e-2 required".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        let n = self.points;
        (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                match self.scale {
                    GridScale::Linear => self.kappa_min + t * (self.kappa_max - self.kappa_min),
                    GridScale::Log => self.kappa_min * (self.kappa_max / self.kappa_min).powf(t),
                }
            })
            .collect()
    }
}

/// `kappa`-derivatives with their error estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Derivatives {
    pub dm: f64,
    pub dmr: f64,
    pub dr: f64,
    pub noise_dm: f64,
    pub noise_dmr: f64,
    pub noise_dr: f64,
}

impl Derivatives {
    /// `|dM| <= floor` with the floor `factor × error estimate`.
    pub fn dm_vanishes(&self, factor: f64) -> bool {
        self.dm.abs() <= factor * self.noise_dm
    }

    pub fn dmr_vanishes(&self, factor: f64) -> bool {
        self.dmr.abs() <= factor * self.noise_dmr
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyPoint {
    pub kappa: f64,
    #[serde(rename = "M")]
    pub mass: f64,
    #[serde(rename = "R")]
    pub radius: f64,
    #[serde(rename = "MR")]
    pub mass_over_radius: f64,
    pub deriv: Option<Derivatives>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Which {
    MassExtremum,
    RatioExtremum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExtremumKind {
    Max,
    Min,
    InflectionCritical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    Counterclockwise,
    Clockwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtremumEvent {
    pub kappa_star: f64,
    pub which: Which,
    pub kind: ExtremumKind,
    /// From the sign change of `dM dR`; `None` when it does not change sign.
    pub orientation: Option<Orientation>,
    /// The other derivative at `kappa_star` and its noise floor.
    pub other_derivative: f64,
    pub other_floor: f64,
    pub confident: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyCurve {
    pub points: Vec<FamilyPoint>,
    pub extrema_m: Vec<ExtremumEvent>,
    pub extrema_mr: Vec<ExtremumEvent>,
    pub i_kappa: Vec<Option<u8>>,
    pub noise_factor: f64,
}

fn richardson(f: [f64; 4], kappa: f64, h: f64) -> (f64, f64) {
    // f = [f(k(1-2h)), f(k(1-h)), f(k(1+h)), f(k(1+2h))]
    let dk = kappa * h;
    let d1 = (f[2] - f[1]) / (2.0 * dk);
    let d2 = (f[3] - f[0]) / (4.0 * dk);
    let d = (4.0 * d1 - d2) / 3.0;
    let scale = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    // Truncation estimate plus the rounding floor of the stencil.
    let err = (d1 - d2).abs() / 3.0 + 64.0 * f64::EPSILON * scale / dk;
    (d, err)
}

/// Derivatives at `kappa` from four fresh evaluations.
pub fn resolve_derivatives<M: FamilyModel + ?Sized>(model: &M, kappa: f64, h: f64) -> Result<Derivatives> {
    let mut ms = [0.0; 4];
    let mut rs = [0.0; 4];
    for (i, c) in [-2.0, -1.0, 1.0, 2.0].iter().enumerate() {
        let (m, r) = model.mass_radius(kappa * (1.0 + c * h)).map_err(|e| e.at_kappa(kappa))?;
        ms[i] = m;
        rs[i] = r;
    }
    let mrs = [ms[0] / rs[0], ms[1] / rs[1], ms[2] / rs[2], ms[3] / rs[3]];
    let (dm, noise_dm) = richardson(ms, kappa, h);
    let (dr, noise_dr) = richardson(rs, kappa, h);
    let (dmr, noise_dmr) = richardson(mrs, kappa, h);
    Ok(Derivatives {
        dm,
        dmr,
        dr,
        noise_dm,
        noise_dmr,
        noise_dr,
    })
}

fn grid_derivative(k: [f64; 3], f: [f64; 3]) -> (f64, f64) {
    let (hb, hf) = (k[1] - k[0], k[2] - k[1]);
    let d = -hf / (hb * (hb + hf)) * f[0] + (hf - hb) / (hb * hf) * f[1] + hb / (hf * (hb + hf)) * f[2];
    // Difference of the one-sided secants bounds the curvature term.
    let sb = (f[1] - f[0]) / hb;
    let sf = (f[2] - f[1]) / hf;
    let scale = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let err = (sf - sb).abs() * (hf - hb).abs() / (hb + hf) + 64.0 * f64::EPSILON * scale / hb.min(hf);
    (d, err)
}

/// `i_kappa` from the signs of `dM` and `d(M/R)`.
pub fn winding_index(d: &Derivatives, kappa: f64, noise_factor: f64) -> Result<u8> {
    let dm0 = d.dm_vanishes(noise_factor);
    let dmr0 = d.dmr_vanishes(noise_factor);
    match (dm0, dmr0) {
        (true, true) => Err(Error::Coexistence { kappa }),
        (true, false) => Ok(1),
        (false, true) => Ok(0),
        _ => Ok(if d.dm * d.dmr > 0.0 { 1 } else { 0 }),
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config("empty kappa grid".into()));
    }
    if let Some(k) = grid.iter().find(|&&k| !(k > 0.0 && k.is_finite())) {
        return Err(Error::Config(format!("kappa grid entry {k} is not positive")));
    }
    if let Some(w) = grid.windows(2).find(|w| w[1] <= w[0]) {
        return Err(Error::Config(format!(
            "kappa grid must be strictly increasing ({} then {})",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// Solves every `kappa` in `grid` and estimates derivatives; extrema are left
/// empty (see [`find_extrema`] and [`sweep_with_events`]).
pub fn sweep_family<M: FamilyModel + ?Sized>(model: &M, grid: &[f64], cfg: &SweepConfig) -> Result<FamilyCurve> {
    check_grid(grid)?;
    let base: Vec<(f64, f64)> = grid
        .par_iter()
        .map(|&k| model.mass_radius(k).map_err(|e| e.at_kappa(k)))
        .collect::<Result<_>>()?;
    let derivs: Vec<Option<Derivatives>> = match cfg.derivative {
        DerivativeMode::Resolve => grid
            .par_iter()
            .map(|&k| resolve_derivatives(model, k, cfg.step).map(Some))
            .collect::<Result<_>>()?,
        DerivativeMode::Grid => (0..grid.len())
            .map(|i| {
                if i == 0 || i + 1 == grid.len() {
                    return None;
                }
                let ks = [grid[i - 1], grid[i], grid[i + 1]];
                let pick = |f: &dyn Fn(usize) -> f64| [f(i - 1), f(i), f(i + 1)];
                let (dm, noise_dm) = grid_derivative(ks, pick(&|j| base[j].0));
                let (dr, noise_dr) = grid_derivative(ks, pick(&|j| base[j].1));
                let (dmr, noise_dmr) = grid_derivative(ks, pick(&|j| base[j].0 / base[j].1));
                Some(Derivatives {
                    dm,
                    dmr,
                    dr,
                    noise_dm,
                    noise_dmr,
                    noise_dr,
                })
            })
            .collect(),
    };
    let points: Vec<FamilyPoint> = grid
        .iter()
        .zip(&base)
        .zip(&derivs)
        .map(|((&kappa, &(m, r)), d)| FamilyPoint {
            kappa,
            mass: m,
            radius: r,
            mass_over_radius: m / r,
            deriv: *d,
        })
        .collect();
    for p in &points {
        if !(p.mass > 0.0 && p.radius > 0.0) {
            return Err(Error::Invariant(format!("non-positive M or R at kappa = {}", p.kappa)));
        }
        if 2.0 * p.mass_over_radius >= 8.0 / 9.0 {
            return Err(Error::Invariant(format!("Buchdahl bound violated at kappa = {}", p.kappa)));
        }
    }
    let i_kappa = points
        .iter()
        .map(|p| p.deriv.map(|d| winding_index(&d, p.kappa, cfg.noise_factor)).transpose())
        .collect::<Result<_>>()?;
    Ok(FamilyCurve {
        points,
        extrema_m: Vec::new(),
        extrema_mr: Vec::new(),
        i_kappa,
        noise_factor: cfg.noise_factor,
    })
}

fn selected(d: &Derivatives, which: Which) -> f64 {
    match which {
        Which::MassExtremum => d.dm,
        Which::RatioExtremum => d.dmr,
    }
}

fn orientation(before: &Derivatives, after: &Derivatives) -> Option<Orientation> {
    let (a, b) = (before.dm * before.dr, after.dm * after.dr);
    if a < 0.0 && b > 0.0 {
        Some(Orientation::Counterclockwise)
    } else if a > 0.0 && b < 0.0 {
        Some(Orientation::Clockwise)
    } else {
        None
    }
}

/// Brackets sign changes of `dM` or `d(M/R)` along the curve and refines each
/// with fresh solves until the bracket is below `kappa * refine_tol`.
pub fn find_extrema<M: FamilyModel + ?Sized>(
    model: &M,
    curve: &FamilyCurve,
    which: Which,
    cfg: &SweepConfig,
) -> Result<Vec<ExtremumEvent>> {
    if curve.points.len() < 5 {
        return Err(Error::Config("extremum search needs at least 5 curve points".into()));
    }
    let with: Vec<(f64, Derivatives)> = curve
        .points
        .iter()
        .filter_map(|p| p.deriv.map(|d| (p.kappa, d)))
        .collect();
    let brackets: Vec<(usize, usize)> = (1..with.len())
        .filter(|&i| selected(&with[i - 1].1, which) * selected(&with[i].1, which) < 0.0)
        .map(|i| (i - 1, i))
        .collect();
    brackets
        .par_iter()
        .map(|&(i, j)| refine(model, with[i], with[j], which, cfg))
        .collect()
}

fn refine<M: FamilyModel + ?Sized>(
    model: &M,
    lo: (f64, Derivatives),
    hi: (f64, Derivatives),
    which: Which,
    cfg: &SweepConfig,
) -> Result<ExtremumEvent> {
    let eval = |k: f64| resolve_derivatives(model, k, cfg.step);
    let (mut a, mut fa) = (lo.0, selected(&lo.1, which));
    let (mut b, mut fb) = (hi.0, selected(&hi.1, which));
    let rising = fa < 0.0;
    let mut side = 0i8;
    let mut confident = true;
    let mut iterations = 0;
    while b - a > cfg.refine_tol * a {
        iterations += 1;
        if iterations > 200 {
            confident = false;
            break;
        }
        // Illinois step, falling back to bisection when it stalls near an end.
        let mut x = (a * fb - b * fa) / (fb - fa);
        let w = b - a;
        if !(x > a + 0.01 * w && x < b - 0.01 * w) {
            x = 0.5 * (a + b);
        }
        let fx = selected(&eval(x)?, which);
        if fx == 0.0 {
            a = x;
            b = x;
            break;
        }
        if (fx < 0.0) == (fa < 0.0) {
            a = x;
            fa = fx;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = x;
            fb = fx;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    let kappa_star = if a == b { a } else { (a * fb - b * fa) / (fb - fa) };
    let kappa_star = kappa_star.clamp(a, b);
    let at = eval(kappa_star)?;
    let (other, floor) = match which {
        Which::MassExtremum => (at.dmr, cfg.noise_factor * at.noise_dmr),
        Which::RatioExtremum => (at.dm, cfg.noise_factor * at.noise_dm),
    };
    if other.abs() <= floor {
        return Err(Error::Coexistence { kappa: kappa_star });
    }
    let kind = match which {
        // A maximum of the selected quantity has its derivative falling through zero.
        _ if rising => ExtremumKind::Min,
        _ => ExtremumKind::Max,
    };
    Ok(ExtremumEvent {
        kappa_star,
        which,
        kind,
        orientation: orientation(&lo.1, &hi.1),
        other_derivative: other,
        other_floor: floor,
        confident,
    })
}

/// Sweep plus both extremum searches.
pub fn sweep_with_events<M: FamilyModel + ?Sized>(model: &M, grid: &[f64], cfg: &SweepConfig) -> Result<FamilyCurve> {
    let mut curve = sweep_family(model, grid, cfg)?;
    if curve.points.len() >= 5 {
        curve.extrema_m = find_extrema(model, &curve, Which::MassExtremum, cfg)?;
        curve.extrema_mr = find_extrema(model, &curve, Which::RatioExtremum, cfg)?;
    }
    Ok(curve)
}

impl FamilyCurve {
    /// Header `kappa,M,R,M_over_R,dM,dMR,dR,noise_dM,noise_dMR,i`.
    pub fn csv(&self) -> String {
        let mut out = String::from("kappa,M,R,M_over_R,dM,dMR,dR,noise_dM,noise_dMR,i\n");
        for (p, i) in self.points.iter().zip(&self.i_kappa) {
            let d = p.deriv.map_or([String::new(), String::new(), String::new(), String::new(), String::new()], |d| {
                [d.dm, d.dmr, d.dr, d.noise_dm, d.noise_dmr].map(|v| format!("{v:e}"))
            });
            out.push_str(&format!(
                "{:e},{:e},{:e},{:e},{},{},{},{},{},{}\n",
                p.kappa,
                p.mass,
                p.radius,
                p.mass_over_radius,
                d[0],
                d[1],
                d[2],
                d[3],
                d[4],
                i.map_or(String::new(), |v| v.to_string())
            ));
        }
        out
    }

    /// All extremum events in `kappa` order.
    pub fn events(&self) -> Vec<ExtremumEvent> {
        let mut all: Vec<ExtremumEvent> = self.extrema_m.iter().chain(&self.extrema_mr).copied().collect();
        all.sort_by(|a, b| a.kappa_star.total_cmp(&b.kappa_star));
        all
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowFlag {
    Ok,
    NearDegenerate,
    NoDerivative,
    Inconsistent,
}

impl RowFlag {
    pub fn as_str(&self) -> &'static str {
        match self {
            RowFlag::Ok => "ok",
            RowFlag::NearDegenerate => "near_degenerate",
            RowFlag::NoDerivative => "no_derivative",
            RowFlag::Inconsistent => "inconsistent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TppRow {
    pub kappa: f64,
    #[serde(rename = "M")]
    pub mass: f64,
    #[serde(rename = "R")]
    pub radius: f64,
    #[serde(rename = "dM")]
    pub dm: Option<f64>,
    #[serde(rename = "dMR")]
    pub dmr: Option<f64>,
    pub i_kappa: Option<u8>,
    pub n_minus_sigma: usize,
    pub kernel_gap: f64,
    pub n_u_formula: Option<i64>,
    pub n_u_direct: usize,
    pub n_minus_constrained: usize,
    /// Smallest `|theta|` of the velocity pencil.
    pub mode_gap: f64,
    pub growth_rates: Vec<f64>,
    pub consistent: bool,
    pub flag: RowFlag,
}

/// Change of a count across an extremum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub label: String,
    pub event: ExtremumEvent,
    pub n_u_before: Option<usize>,
    pub n_u_after: Option<usize>,
    pub n_minus_before: Option<usize>,
    pub n_minus_after: Option<usize>,
    pub i_before: Option<u8>,
    pub i_after: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TppReport {
    pub rows: Vec<TppRow>,
    pub events: Vec<EventRecord>,
    /// Largest `kappa` reached by the sweep.
    pub deepest_kappa: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TppConfig {
    /// Rows whose spectral or mode gap falls below this are near-degenerate.
    pub mode_gap_threshold: f64,
}

impl Default for TppConfig {
    fn default() -> Self {
        TppConfig {
            mode_gap_threshold: 1e-2,
        }
    }
}

fn label(i: usize) -> String {
    let mut n = i;
    let mut s = String::new();
    loop {
        s.insert(0, (b'A' + (n % 26) as u8) as char);
        if n < 26 {
            break;
        }
        n = n / 26 - 1;
    }
    s
}

/// Sweeps the family, counts `n^-(Sigma)` and growing modes at every point and
/// records how the counts change across the extrema.
pub fn tpp_report(
    family: &TovFamily,
    grid: &[f64],
    sweep: &SweepConfig,
    spectral: &SpectralConfig,
    modes: &ModesConfig,
    tpp: &TppConfig,
) -> Result<TppReport> {
    spectral.validate()?;
    modes.validate()?;
    let curve = sweep_with_events(family, grid, sweep)?;
    let rows: Vec<TppRow> = curve
        .points
        .par_iter()
        .zip(curve.i_kappa.par_iter())
        .map(|(p, &i)| -> Result<TppRow> {
            let state = Arc::new(solve_steady_state(&family.eos, p.kappa, &family.solver)?);
            let pair = assemble_for(state.clone(), spectral).map_err(|e| e.at_kappa(p.kappa))?;
            let morse = pair.morse_index().map_err(|e| e.at_kappa(p.kappa))?;
            let gap = pair.kernel_gap().map_err(|e| e.at_kappa(p.kappa))?.gap;
            let analysis = unstable_modes(&state, modes)?;
            let rep = &analysis.report;
            let n_u_formula = i.map(|i| morse.n_minus as i64 - i as i64);
            let mode_gap = analysis.theta.iter().fold(f64::INFINITY, |m, t| m.min(t.abs()));
            let consistent = n_u_formula == Some(rep.n_u_direct as i64) && rep.n_u_direct == rep.n_minus_constrained;
            let degenerate = gap < spectral.gap_threshold
                || mode_gap < tpp.mode_gap_threshold
                || !morse.converged
                || p.deriv.is_some_and(|d| d.dm_vanishes(sweep.noise_factor) || d.dmr_vanishes(sweep.noise_factor));
            let flag = match (i, degenerate, consistent) {
                (None, _, _) => RowFlag::NoDerivative,
                (_, true, _) => RowFlag::NearDegenerate,
                (_, false, true) => RowFlag::Ok,
                (_, false, false) => RowFlag::Inconsistent,
            };
            Ok(TppRow {
                kappa: p.kappa,
                mass: p.mass,
                radius: p.radius,
                dm: p.deriv.map(|d| d.dm),
                dmr: p.deriv.map(|d| d.dmr),
                i_kappa: i,
                n_minus_sigma: morse.n_minus,
                kernel_gap: gap,
                n_u_formula,
                n_u_direct: rep.n_u_direct,
                n_minus_constrained: rep.n_minus_constrained,
                mode_gap,
                growth_rates: rep.growth_rates.clone(),
                consistent,
                flag,
            })
        })
        .collect::<Result<_>>()?;

    let confident = |r: &&TppRow| r.flag == RowFlag::Ok;
    let events = curve
        .events()
        .into_iter()
        .enumerate()
        .map(|(n, ev)| {
            let before = rows.iter().filter(|r| r.kappa < ev.kappa_star).rev().find(confident);
            let after = rows.iter().filter(|r| r.kappa > ev.kappa_star).find(confident);
            EventRecord {
                label: label(n),
                event: ev,
                n_u_before: before.map(|r| r.n_u_direct),
                n_u_after: after.map(|r| r.n_u_direct),
                n_minus_before: before.map(|r| r.n_minus_sigma),
                n_minus_after: after.map(|r| r.n_minus_sigma),
                i_before: before.and_then(|r| r.i_kappa),
                i_after: after.and_then(|r| r.i_kappa),
            }
        })
        .collect();
    Ok(TppReport {
        deepest_kappa: grid.last().copied().unwrap_or(0.0),
        rows,
        events,
    })
}

impl TppReport {
    /// Fails if any confidently classified row disagrees between the counts.
    pub fn check(&self) -> Result<()> {
        if let Some(r) = self.rows.iter().find(|r| r.flag == RowFlag::Inconsistent) {
            return Err(Error::Invariant(format!(
                "mode counts disagree at kappa = {}: formula {:?}, direct {}, constrained {}",
                r.kappa, r.n_u_formula, r.n_u_direct, r.n_minus_constrained
            )));
        }
        if let Some(r) = self.rows.iter().find(|r| r.n_u_formula.is_some_and(|v| v < 0) && r.flag == RowFlag::Ok) {
            return Err(Error::Invariant(format!("negative mode count at kappa = {}", r.kappa)));
        }
        Ok(())
    }

    /// Header `kappa,M,R,M_over_R,dM,dMR,i,nminus,nu_formula,nu_direct,flag`.
    pub fn curve_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:e}"));
        let mut out = String::from("kappa,M,R,M_over_R,dM,dMR,i,nminus,nu_formula,nu_direct,flag\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{:e},{:e},{:e},{:e},{},{},{},{},{},{},{}\n",
                r.kappa,
                r.mass,
                r.radius,
                r.mass / r.radius,
                opt(r.dm),
                opt(r.dmr),
                r.i_kappa.map_or(String::new(), |v| v.to_string()),
                r.n_minus_sigma,
                r.n_u_formula.map_or(String::new(), |v| v.to_string()),
                r.n_u_direct,
                r.flag.as_str()
            ));
        }
        out
    }

    /// Header `R,M,kappa,color`, color being `min(n_u, 3)`.
    pub fn mass_radius_csv(&self) -> String {
        let mut out = String::from("R,M,kappa,color\n");
        for r in &self.rows {
            out.push_str(&format!("{:e},{:e},{:e},{}\n", r.radius, r.mass, r.kappa, r.n_u_direct.min(3)));
        }
        out
    }

    /// Header `label,kappa,which,kind,orientation,nu_before,nu_after`.
    pub fn events_csv(&self) -> String {
        let opt = |v: Option<usize>| v.map_or(String::new(), |v| v.to_string());
        let mut out = String::from("label,kappa,which,kind,orientation,nu_before,nu_after\n");
        for e in &self.events {
            out.push_str(&format!(
                "{},{:e},{:?},{:?},{},{},{}\n",
                e.label,
                e.event.kappa_star,
                e.event.which,
                e.event.kind,
                e.event.orientation.map_or("none".to_string(), |o| format!("{o:?}")),
                opt(e.n_u_before),
                opt(e.n_u_after)
            ));
        }
        out
    }
}
