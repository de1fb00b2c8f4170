//! Command-line front end: argument parsing, scenario dispatch and file emission.
//!
//! Every run writes its data files plus `manifest.json` into the output
//! directory. CSV numbers are written with `{:.16e}` so the payload is
//! locale-independent and reproducible byte for byte.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::bath::{czz_weight_only, CorrelationTables, SpectralDensityParams, TableOptions};
use crate::config::{OraclePrep, ScenarioConfig};
use crate::error::{Error, Result};
use crate::observables::{sigma_x_lab, sigma_z, SigmaXMode};
use crate::oracle::{discretize_bath, exact_evolve, solve_discrete_variational, BathPrep, DiscreteBath, OracleOptions};
use crate::regression::{response_from_state, spectrum, steady_state, ResponseMode, ResponseRecord};
use crate::tcl2::{propagate, DensityTrajectory, PropagationOptions};
use crate::variational::{find_jump, sweep_alpha, VariationalOptions};

/// Time window of the |C_ZZ| weight reported by the scan.
pub const CZZ_WINDOW: f64 = 200.0;
/// Drop in <B> between neighbouring alphas that counts as a jump.
pub const JUMP_THRESHOLD: f64 = 0.05;

#[derive(Debug, Parser)]
#[command(name = "spinboson", version, about = "Variational polaron TCL2 dynamics and spectra of the spin-boson model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// <B> and Delta_R against alpha, swept up and down.
    VariationalScan(RunArgs),
    /// Reduced dynamics sigma_z(t), sigma_x(t).
    Dynamics(RunArgs),
    /// Dipole response S(tau) and absorption spectrum.
    Spectrum(RunArgs),
    /// TCL2 on a few-mode bath against the exact simulation.
    OracleCompare(RunArgs),
    /// Parse and check a config file without running anything.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeSel {
    Corrected,
    Uncorrected,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
    Both,
}

#[derive(Clone, Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, value_enum, default_value_t = ModeSel::Both)]
    pub mode: ModeSel,
    #[arg(long, value_enum, default_value_t = Toggle::On)]
    pub inhomogeneous: Toggle,
}

impl ModeSel {
    fn modes(self) -> Vec<SigmaXMode> {
        match self {
            ModeSel::Corrected => vec![SigmaXMode::Corrected],
            ModeSel::Uncorrected => vec![SigmaXMode::Uncorrected],
            ModeSel::Both => vec![SigmaXMode::Corrected, SigmaXMode::Uncorrected],
        }
    }
}

impl Toggle {
    fn values(self) -> Vec<bool> {
        match self {
            Toggle::On => vec![true],
            Toggle::Off => vec![false],
            Toggle::Both => vec![true, false],
        }
    }
}

fn mode_name(m: SigmaXMode) -> &'static str {
    match m {
        SigmaXMode::Corrected => "corrected",
        SigmaXMode::Uncorrected => "uncorrected",
    }
}

fn inhom_tag(on: bool) -> &'static str {
    if on {
        "inhom_on"
    } else {
        "inhom_off"
    }
}

/// Process exit code for an error: 2 for bad input, 3 for numerical trouble.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Validation(_) | Error::Config(_) | Error::Io(_) => 2,
        Error::Numerical(_) | Error::Domain(_) | Error::UnsupportedKernel(_) => 3,
    }
}

/// Order-preserving map over up to `workers` threads.
pub fn par_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = workers.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });
    slots.into_inner().unwrap().into_iter().map(|r| r.expect("worker result")).collect()
}

pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects emitted files for the manifest.
struct Emitter {
    dir: PathBuf,
    files: Vec<Value>,
}

impl Emitter {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn record(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        std::fs::write(self.dir.join(name), bytes)?;
        self.files.push(json!({ "path": name, "sha256": sha256_hex(bytes) }));
        Ok(())
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
        w.write_record(header).map_err(io)?;
        for r in rows {
            w.write_record(r).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        self.record(name, &bytes)
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        bytes.push(b'\n');
        self.record(name, &bytes)
    }
}

/// What a run produced, mirrored into `manifest.json`.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_sha256: String,
    pub library_version: String,
    pub scenario: Option<String>,
    pub horizons: Value,
    pub warnings: Vec<String>,
    pub files: Vec<Value>,
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli.command) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cmd: &Command) -> Result<Option<Manifest>> {
    match cmd {
        Command::ValidateConfig { config } => {
            let cfg = ScenarioConfig::load(config)?;
            println!("{}: ok ({})", config.display(), cfg.name.as_deref().unwrap_or("unnamed"));
            Ok(None)
        }
        Command::VariationalScan(a) => scenario("variational-scan", a, variational_scan).map(Some),
        Command::Dynamics(a) => scenario("dynamics", a, dynamics).map(Some),
        Command::Spectrum(a) => scenario("spectrum", a, spectrum_run).map(Some),
        Command::OracleCompare(a) => scenario("oracle-compare", a, oracle_compare).map(Some),
    }
}

type Body = fn(&ScenarioConfig, &RunArgs, &mut Emitter) -> Result<(Value, Vec<String>)>;

fn scenario(name: &str, args: &RunArgs, body: Body) -> Result<Manifest> {
    let text = std::fs::read_to_string(&args.config)?;
    let cfg = ScenarioConfig::from_toml(&text)?;
    let mut em = Emitter::new(&args.out)?;
    let (horizons, warnings) = body(&cfg, args, &mut em)?;
    let mut m = Manifest {
        command: name.to_string(),
        config_sha256: sha256_hex(text.as_bytes()),
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        scenario: cfg.name.clone(),
        horizons,
        warnings,
        files: Vec::new(),
    };
    m.files = em.files.clone();
    m.files.push(json!({ "path": "manifest.json" }));
    em.json("manifest.json", &m)?;
    Ok(m)
}

struct ScanPoint {
    s: f64,
    direction: &'static str,
    alpha: f64,
    b_avg: f64,
    delta_r: f64,
    localized: bool,
}

fn variational_scan(cfg: &ScenarioConfig, args: &RunArgs, em: &mut Emitter) -> Result<(Value, Vec<String>)> {
    let base = cfg.params()?;
    let sc = &cfg.scan;
    let n = ((sc.alpha_max - sc.alpha_min) / sc.alpha_step + 1e-9).floor() as usize + 1;
    let up: Vec<f64> = (0..n).map(|k| sc.alpha_min + k as f64 * sc.alpha_step).collect();
    let down: Vec<f64> = up.iter().rev().copied().collect();
    let s_list = if sc.s.is_empty() { vec![base.s] } else { sc.s.clone() };
    let mut points = Vec::new();
    let mut jumps = Vec::new();
    for &s in &s_list {
        let p = SpectralDensityParams { s, ..base };
        for (direction, alphas, seed) in [("up", &up, 1.0), ("down", &down, 1e-6)] {
            let sols = sweep_alpha(&p, alphas, 1.0, &VariationalOptions { seed, ..Default::default() })?;
            let jump = find_jump(&sols, JUMP_THRESHOLD).map(|i| alphas[i]);
            jumps.push(json!({ "s": s, "direction": direction, "jump_alpha": jump }));
            for (a, v) in alphas.iter().zip(&sols) {
                points.push(ScanPoint { s, direction, alpha: *a, b_avg: v.b_avg, delta_r: v.delta_r, localized: v.localized });
            }
        }
    }
    // |C_ZZ| weight needs the kernel tables of each point.
    let weights = par_map(&points, args.workers, |pt| -> Result<f64> {
        let p = SpectralDensityParams { s: pt.s, alpha: pt.alpha, ..base };
        let vs = crate::variational::finish(pt.b_avg, 1.0, p.beta, 0);
        czz_weight_only(&p, &vs, CZZ_WINDOW, cfg.table_options())
    });
    let mut rows = Vec::with_capacity(points.len());
    for (pt, w) in points.iter().zip(weights) {
        rows.push(vec![
            fmt(pt.s),
            pt.direction.to_string(),
            fmt(pt.alpha),
            fmt(pt.b_avg),
            fmt(pt.delta_r),
            (pt.localized as u8).to_string(),
            fmt(w?),
        ]);
    }
    em.csv("variational_scan.csv", &["s", "direction", "alpha", "b_avg", "delta_r", "localized", "czz_weight"], &rows)?;
    em.json("variational_scan.json", &json!({ "jump_threshold": JUMP_THRESHOLD, "jumps": jumps, "czz_window": CZZ_WINDOW }))?;
    Ok((json!({ "czz_window": CZZ_WINDOW }), Vec::new()))
}

fn trajectory_rows(
    tables: &CorrelationTables,
    traj: &DensityTrajectory,
    modes: &[SigmaXMode],
    stride: usize,
) -> Result<Vec<Vec<String>>> {
    let sz = sigma_z(traj);
    let sx: Vec<Vec<f64>> = modes.iter().map(|&m| sigma_x_lab(tables, traj, m)).collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for n in (0..traj.times.len()).step_by(stride) {
        let rho = traj.states[n];
        let mut r = vec![fmt(traj.times[n]), fmt(sz[n])];
        r.extend(sx.iter().map(|v| fmt(v[n])));
        r.push(fmt((rho.trace().re - 1.0).abs()));
        r.push(fmt(rho.hermitian_eigenvalues()[0]));
        rows.push(r);
    }
    Ok(rows)
}

fn trajectory_header(modes: &[SigmaXMode]) -> Vec<String> {
    let mut h = vec!["t".to_string(), "sigma_z".to_string()];
    h.extend(modes.iter().map(|&m| format!("re_sigma_x_{}", mode_name(m))));
    h.push("trace_defect".into());
    h.push("min_eigenvalue".into());
    h
}

fn dynamics(cfg: &ScenarioConfig, args: &RunArgs, em: &mut Emitter) -> Result<(Value, Vec<String>)> {
    let tables = cfg.correlation_tables()?;
    let rho0 = cfg.rho0();
    let modes = args.mode.modes();
    let variants = args.inhomogeneous.values();
    let runs = par_map(&variants, args.workers, |&inh| propagate(&tables, &rho0, &cfg.propagation(inh)));
    let header = trajectory_header(&modes);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut meta = Vec::new();
    for (&inh, traj) in variants.iter().zip(runs) {
        let traj = traj?;
        let rows = trajectory_rows(&tables, &traj, &modes, cfg.dynamics.output_stride)?;
        let name = format!("dynamics_{}.csv", inhom_tag(inh));
        em.csv(&name, &header, &rows)?;
        meta.push(json!({
            "file": name,
            "inhomogeneous": inh,
            "min_eigenvalue": traj.min_eigenvalue,
            "max_trace_defect": traj.max_trace_defect,
            "max_hermiticity_defect": traj.max_hermiticity_defect,
        }));
    }
    em.json(
        "dynamics.json",
        &json!({
            "frame": cfg.frame,
            "b_avg": tables.b_avg,
            "delta_r": tables.delta_r,
            "rho0_p1": cfg.dynamics.p1,
            "dt": cfg.dynamics.dt,
            "t_final": cfg.dynamics.t_final,
            "runs": meta,
        }),
    )?;
    Ok((json!({ "table": tables.horizon(), "t_final": cfg.dynamics.t_final }), Vec::new()))
}

fn spectrum_run(cfg: &ScenarioConfig, args: &RunArgs, em: &mut Emitter) -> Result<(Value, Vec<String>)> {
    let tables = cfg.correlation_tables()?;
    let ropts = cfg.regression();
    let steady = steady_state(&tables, &ropts)?;
    let modes: Vec<ResponseMode> = args
        .mode
        .modes()
        .into_iter()
        .map(|m| match m {
            SigmaXMode::Corrected => ResponseMode::Corrected,
            SigmaXMode::Uncorrected => ResponseMode::Uncorrected,
        })
        .collect();
    let records = par_map(&modes, args.workers, |&m| response_from_state(&tables, m, &ropts, steady.clone()));
    let records: Vec<ResponseRecord> = records.into_iter().collect::<Result<_>>()?;
    let sopts = cfg.spectrum_options();
    let mut warnings = Vec::new();
    let mut spectra = Vec::new();
    let mut meta = Vec::new();
    for rec in &records {
        let name = match rec.mode {
            ResponseMode::Corrected => "corrected",
            ResponseMode::Uncorrected => "uncorrected",
        };
        let rows: Vec<Vec<String>> =
            rec.tau.iter().zip(&rec.s).map(|(t, s)| vec![fmt(*t), fmt(s.re), fmt(s.im)]).collect();
        em.csv(&format!("response_{name}.csv"), &["tau", "re_s", "im_s"], &rows)?;
        let sp = spectrum(&rec.tau, &rec.s1, &sopts)?;
        warnings.extend(sp.warnings.iter().map(|w| format!("{name}: {w}")));
        let terms = rec.terms.as_ref().map(|t| {
            let m = t.magnitudes();
            json!({ "homogeneous": m[0], "kicked_bath": m[1], "pre_kick": m[2] })
        });
        meta.push(json!({
            "mode": rec.mode,
            "window": sp.window,
            "tail_ratio": sp.tail_ratio,
            "leakage": sp.leakage,
            "max_imag": sp.max_imag,
            "history_horizon": rec.history_horizon,
            "term_magnitudes": terms,
            "fourth_order_term": rec.fourth_order_term,
            "warnings": sp.warnings,
        }));
        spectra.push((name, sp));
    }
    let mut header = vec!["omega".to_string()];
    header.extend(spectra.iter().map(|(n, _)| format!("a_{n}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let omega = &spectra[0].1.omega;
    let rows: Vec<Vec<String>> = (0..omega.len())
        .map(|k| {
            let mut r = vec![fmt(omega[k])];
            r.extend(spectra.iter().map(|(_, sp)| fmt(sp.a[k])));
            r
        })
        .collect();
    em.csv("spectrum.csv", &header, &rows)?;
    em.json(
        "spectrum.json",
        &json!({
            "b_avg": tables.b_avg,
            "delta_r": tables.delta_r,
            "tau_max": ropts.tau_max,
            "dt": ropts.dt,
            "table_horizon": tables.horizon(),
            "steady_state": steady,
            "runs": meta,
        }),
    )?;
    let history = records.iter().map(|r| r.history_horizon).fold(0.0, f64::max);
    Ok((json!({ "table": tables.horizon(), "history": history, "tau_max": ropts.tau_max }), warnings))
}

/// Discrete-bath TCL2 tables and the matching exact simulation.
pub struct OracleSetup {
    pub tables: CorrelationTables,
    pub modes: crate::oracle::BathModeSet,
    pub discrete: DiscreteBath,
}

pub fn oracle_setup(p: &SpectralDensityParams, n_modes: usize, band: f64, t_final: f64, dtau: f64) -> Result<OracleSetup> {
    let modes = discretize_bath(p, n_modes, band)?;
    let vs = solve_discrete_variational(&modes, 1.0, p.beta, &VariationalOptions::default())?;
    let discrete = DiscreteBath::new(&modes, &vs);
    let topts = TableOptions { dtau, t_table: t_final + 10.0 * dtau, ..Default::default() };
    let tables = CorrelationTables::from_kernels(&discrete, p, &vs, topts);
    Ok(OracleSetup { tables, modes, discrete })
}

fn oracle_compare(cfg: &ScenarioConfig, args: &RunArgs, em: &mut Emitter) -> Result<(Value, Vec<String>)> {
    let p = cfg.params()?;
    let o = &cfg.oracle;
    let setup = oracle_setup(&p, o.n_modes, o.band, o.t_final, 1e-3)?;
    let rho0 = cfg.rho0();
    let prep = match o.prep {
        OraclePrep::Thermal => BathPrep::Thermal,
        OraclePrep::Displaced => BathPrep::DisplacedThermal { f: setup.discrete.f.clone() },
        OraclePrep::Relax => BathPrep::Relax { t_relax: o.t_relax },
    };
    let steps = (o.t_final / o.dt).round() as usize;
    let grid: Vec<f64> = (0..=steps).map(|k| k as f64 * o.dt).collect();
    let oopts = OracleOptions { n_max: o.n_max, dt: o.dt, seed: o.seed, enforce_recurrence: o.enforce_recurrence, ..Default::default() };
    let exact = exact_evolve(&setup.modes, 1.0, p.beta, &rho0, &prep, &grid, &oopts)?;
    let sub = 10;
    let variants = args.inhomogeneous.values();
    let runs = par_map(&variants, args.workers, |&inh| {
        let popts = PropagationOptions { dt: o.dt / sub as f64, t_final: grid[steps], include_inhomogeneous: inh, ..Default::default() };
        propagate(&setup.tables, &rho0, &popts)
    });
    let mut meta = Vec::new();
    for (&inh, traj) in variants.iter().zip(runs) {
        let sz = sigma_z(&traj?);
        let mut rows = Vec::new();
        let mut max_err: f64 = 0.0;
        for k in 0..=steps {
            let a = sz[k * sub];
            let err = (a - exact.sigma_z[k]).abs();
            max_err = max_err.max(err);
            rows.push(vec![fmt(grid[k]), fmt(a), fmt(exact.sigma_z[k]), fmt(err), fmt(exact.stderr_z[k])]);
        }
        let name = format!("oracle_compare_{}.csv", inhom_tag(inh));
        em.csv(&name, &["t", "sigma_z_tcl2", "sigma_z_oracle", "abs_error", "oracle_stderr"], &rows)?;
        meta.push(json!({ "file": name, "inhomogeneous": inh, "max_abs_error": max_err }));
    }
    em.json(
        "oracle_compare.json",
        &json!({
            "modes": { "nu": setup.modes.nu, "g": setup.modes.g, "band": setup.modes.band },
            "discrete_b_avg": setup.discrete.b,
            "prep": prep,
            "n_max": o.n_max,
            "recurrence_time": exact.recurrence_time,
            "exact_configs": exact.exact_configs,
            "tail_weight": exact.tail_weight,
            "max_norm_defect": exact.max_norm_defect,
            "max_energy_drift": exact.max_energy_drift,
            "runs": meta,
        }),
    )?;
    Ok((json!({ "t_final": o.t_final, "recurrence_time": exact.recurrence_time }), setup.modes.warnings.clone()))
}

