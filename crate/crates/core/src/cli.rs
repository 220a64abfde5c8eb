//! Command-line driver.
//!
//! ```text
//! relstar <command> [--config FILE] [--out DIR] [--section.leaf=VALUE ...]
//! ```
//!
//! Exit codes: 0 success, 1 invariant or consistency violation, 2 configuration
//! error, 3 numerical failure. Failures also leave an `error.json` record.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Config, Format, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::family::{sweep_with_events, tpp_report, TovFamily};
use crate::modes::unstable_modes;
use crate::newtonian::{newtonian_limit_check, sigma_zero};
use crate::spectral::{sigma_at, spectral_report};
use crate::tov::solve_steady_state;

#[derive(Debug, Parser)]
#[command(name = "relstar", version, about = "Relativistic star equilibria and their growing modes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the equation of state against its structural assumptions.
    EosValidate(Common),
    /// Solve one equilibrium at `run.kappa`.
    Solve(Common),
    /// Mass–radius curve, derivatives and extrema.
    Sweep(Common),
    /// Morse index and kernel gap of the reduced operator at `run.kappa`.
    Spectrum(Common),
    /// Growing modes at `run.kappa`.
    Modes(Common),
    /// Full mode-count report along the sweep.
    Tpp(Common),
    /// Convergence of rescaled states to the Lane–Emden star.
    NewtonianCheck(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::EosValidate(_) => "eos-validate",
            Command::Solve(_) => "solve",
            Command::Sweep(_) => "sweep",
            Command::Spectrum(_) => "spectrum",
            Command::Modes(_) => "modes",
            Command::Tpp(_) => "tpp",
            Command::NewtonianCheck(_) => "newtonian-check",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::EosValidate(c)
            | Command::Solve(c)
            | Command::Sweep(c)
            | Command::Spectrum(c)
            | Command::Modes(c)
            | Command::Tpp(c)
            | Command::NewtonianCheck(c) => c,
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::Invariant(_) | Error::Coexistence { .. } => 1,
        Error::Config(_) | Error::Domain(_) | Error::Io(_) => 2,
        _ => 3,
    }
}

fn error_kappa(e: &Error) -> Option<f64> {
    match e {
        Error::AtKappa { kappa, .. } => Some(*kappa),
        Error::Coexistence { kappa } => Some(*kappa),
        _ => None,
    }
}

/// Splits `--a.b=v` / `--a.b v` overrides from the arguments clap should see.
fn split_overrides(argv: Vec<String>) -> Result<(Vec<String>, Vec<(String, String)>)> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = argv.into_iter();
    while let Some(arg) = it.next() {
        let Some(body) = arg.strip_prefix("--") else {
            rest.push(arg);
            continue;
        };
        let (key, value) = match body.split_once('=') {
            Some((k, v)) => (k.to_string(), Some(v.to_string())),
            None => (body.to_string(), None),
        };
        if !key.contains('.') {
            rest.push(arg);
            continue;
        }
        let value = match value {
            Some(v) => v,
            None => it
                .next()
                .ok_or_else(|| Error::Config(format!("override --{key} has no value")))?,
        };
        overrides.push((key, value));
    }
    Ok((rest, overrides))
}

/// Writes result files, each stamped with the config hash.
struct Outputs {
    dir: PathBuf,
    hash: String,
    command: &'static str,
    csv: bool,
    json: bool,
}

impl Outputs {
    fn csv(&self, name: &str, body: &str) -> Result<()> {
        if !self.csv {
            return Ok(());
        }
        let text = format!("# config_sha256={}\n{body}", self.hash);
        fs::write(self.dir.join(name), text).map_err(|e| Error::Io(format!("{name}: {e}")))
    }

    fn text(&self, name: &str, body: &str) -> Result<()> {
        let text = format!("# config_sha256={}\n{body}", self.hash);
        fs::write(self.dir.join(name), text).map_err(|e| Error::Io(format!("{name}: {e}")))
    }

    fn json<T: Serialize>(&self, name: &str, payload: &T) -> Result<()> {
        if !self.json {
            return Ok(());
        }
        let doc = json!({
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "config_sha256": self.hash,
            "result": payload,
        });
        let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Io(e.to_string()))?;
        fs::write(self.dir.join(name), text + "\n").map_err(|e| Error::Io(format!("{name}: {e}")))
    }
}

fn write_error(dir: Option<&Path>, command: &str, e: &Error) -> Value {
    let record = json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "kind": e.kind(),
        "message": e.to_string(),
        "exit_code": exit_code(e),
        "kappa": error_kappa(e),
    });
    if let Some(dir) = dir {
        if fs::create_dir_all(dir).is_ok() {
            let _ = fs::write(dir.join("error.json"), serde_json::to_string_pretty(&record).unwrap_or_default() + "\n");
        }
    }
    record
}

/// Runs the driver on `argv` (including the program name) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<String> = argv.into_iter().map(|a| a.into().to_string_lossy().into_owned()).collect();
    let (rest, overrides) = match split_overrides(argv) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("{}", write_error(None, "", &e));
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(rest) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let command = cli.command.name();
    let common = cli.command.common();
    let fallback_dir = common.out.clone();

    let cfg = match common.config.as_deref() {
        Some(path) => Config::load(path, &overrides),
        None => Config::from_parts(None, &overrides),
    };
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            let dir = fallback_dir.clone().unwrap_or_else(|| PathBuf::from(Config::default().output.directory));
            eprintln!("{}", write_error(Some(&dir), command, &e));
            return exit_code(&e);
        }
    };
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.directory));
    let result = fs::create_dir_all(&dir)
        .map_err(|e| Error::Io(format!("{}: {e}", dir.display())))
        .and_then(|_| {
            let out = Outputs {
                dir: dir.clone(),
                hash: cfg.hash(),
                command,
                csv: cfg.output.wants(Format::Csv),
                json: cfg.output.wants(Format::Json),
            };
            let mut builder = rayon::ThreadPoolBuilder::new();
            if let Some(n) = cfg.run.threads {
                builder = builder.num_threads(n);
            }
            let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            pool.install(|| execute(&cli.command, &cfg, &out))
        });
    match result {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("{}", write_error(Some(&dir), command, &e));
            exit_code(&e)
        }
    }
}

fn execute(command: &Command, cfg: &Config, out: &Outputs) -> Result<String> {
    let eos = Arc::new(cfg.eos.build()?);
    match command {
        Command::EosValidate(_) => {
            let report = eos.validate(&cfg.run.eos_sample);
            out.json(
                "eos_validation.json",
                &json!({ "eos": cfg.eos, "report": report, "warnings": eos.warnings() }),
            )?;
            Ok(format!(
                "eos {:?}: P1 {} P2 {} P3 {} P4 {} (fitted gamma {:.6})",
                cfg.eos.kind, report.p1_ok, report.p2_ok, report.p3_ok, report.p4_ok, report.fitted_gamma
            ))
        }
        Command::Solve(_) => {
            let state = solve_steady_state(&eos, cfg.run.kappa, &cfg.solver)?;
            out.json("state.json", &state)?;
            out.csv("profile.csv", &state.profile_csv())?;
            Ok(format!(
                "kappa {}: M = {:.12e}, R = {:.12e}, 2M/R = {:.6}",
                state.kappa,
                state.mass,
                state.radius,
                2.0 * state.compactness()
            ))
        }
        Command::Sweep(_) => {
            let family = TovFamily::new(eos, cfg.solver);
            let curve = sweep_with_events(&family, &cfg.sweep.grid(), &cfg.sweep)?;
            out.json("sweep.json", &curve)?;
            out.csv("curve.csv", &curve.csv())?;
            Ok(format!(
                "{} points, {} mass extrema, {} ratio extrema",
                curve.points.len(),
                curve.extrema_m.len(),
                curve.extrema_mr.len()
            ))
        }
        Command::Spectrum(_) => {
            let pair = sigma_at(&eos, cfg.run.kappa, &cfg.solver, &cfg.spectral)?;
            let report = spectral_report(&pair, cfg.run.eigenpairs)?;
            out.json("spectrum.json", &report)?;
            if cfg.output.triplets {
                let (s, b) = pair.triplets();
                out.text("sigma_S.txt", &s)?;
                out.text("sigma_B.txt", &b)?;
            }
            Ok(format!(
                "kappa {}: n_minus = {} (converged: {}), kernel gap {:.3e}",
                report.kappa, report.n_minus, report.mesh_convergence.converged, report.kernel_gap
            ))
        }
        Command::Modes(_) => {
            let state = solve_steady_state(&eos, cfg.run.kappa, &cfg.solver)?;
            let analysis = unstable_modes(&state, &cfg.modes)?;
            out.json("modes.json", &analysis.report)?;
            out.csv("eigenmode.csv", &analysis.eigenmode_csv(0))?;
            let r = &analysis.report;
            if r.n_u_direct != r.n_minus_constrained {
                return Err(Error::Invariant(format!(
                    "growing modes {} differ from the constrained index {}",
                    r.n_u_direct, r.n_minus_constrained
                ))
                .at_kappa(r.kappa));
            }
            Ok(format!(
                "kappa {}: {} growing modes, rates {:?}",
                r.kappa, r.n_u_direct, r.growth_rates
            ))
        }
        Command::Tpp(_) => {
            let family = TovFamily::new(eos, cfg.solver);
            let report = tpp_report(&family, &cfg.sweep.grid(), &cfg.sweep, &cfg.spectral, &cfg.modes, &cfg.tpp)?;
            out.json("tpp.json", &report)?;
            out.csv("curve.csv", &report.curve_csv())?;
            out.csv("mass_radius.csv", &report.mass_radius_csv())?;
            out.csv("events.csv", &report.events_csv())?;
            report.check()?;
            Ok(format!(
                "{} rows, {} events, deepest kappa {}",
                report.rows.len(),
                report.events.len(),
                report.deepest_kappa
            ))
        }
        Command::NewtonianCheck(_) => {
            let report = newtonian_limit_check(&eos, &cfg.run.limit_kappas, &cfg.solver)?;
            let pair = sigma_zero(eos.gamma(), eos.k(), &cfg.solver, &cfg.spectral)?;
            let morse = pair.morse_index()?;
            let gap = pair.kernel_gap()?.gap;
            out.json(
                "newtonian.json",
                &json!({ "limit": report, "sigma_zero": { "n_minus": morse.n_minus, "converged": morse.converged, "kernel_gap": gap } }),
            )?;
            out.csv("newtonian_errors.csv", &report.csv())?;
            Ok(format!(
                "fitted rate q = {:.4}, C = {:.4e}; Lane–Emden index {} with gap {:.3e}",
                report.q, report.c, morse.n_minus, gap
            ))
        }
    }
}

/// Reads `(kappa, M, R)` back from a `mass_radius.csv` file body.
pub fn read_mass_radius_csv(text: &str) -> Result<Vec<(f64, f64, f64)>> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    match lines.next() {
        Some("R,M,kappa,color") => {}
        other => return Err(Error::Io(format!("unexpected mass_radius.csv header {other:?}"))),
    }
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Io(format!("bad number '{s}': {e}")));
            if f.len() != 4 {
                return Err(Error::Io(format!("malformed row '{l}'")));
            }
            Ok((num(f[2])?, num(f[1])?, num(f[0])?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn overrides_are_split_from_flags() {
        let (rest, ov) = split_overrides(s(&["relstar", "sweep", "--sweep.points=40", "--out", "d", "--run.kappa", "0.3"])).unwrap();
        assert_eq!(rest, s(&["relstar", "sweep", "--out", "d"]));
        assert_eq!(ov, vec![("sweep.points".into(), "40".into()), ("run.kappa".into(), "0.3".into())]);
    }

    #[test]
    fn exit_codes_by_class() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::Invariant("x".into()).at_kappa(1.0)), 1);
        assert_eq!(exit_code(&Error::Numerical("x".into())), 3);
        assert_eq!(exit_code(&Error::Horizon { r: 1.0, compactness: 1.0 }), 3);
    }

    #[test]
    fn mass_radius_reader_skips_comments() {
        let rows = read_mass_radius_csv("# config_sha256=ab\nR,M,kappa,color\n2e0,1e-1,5e-1,0\n").unwrap();
        assert_eq!(rows, vec![(0.5, 0.1, 2.0)]);
    }
}
