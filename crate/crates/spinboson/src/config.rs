//! TOML scenario files.
//!
//! Only the `[bath]` table is required; every other section falls back to the
//! defaults below. Unknown keys are rejected so typos surface as validation
//! errors. See `scenarios/default.toml` for an annotated example.

use serde::{Deserialize, Serialize};

use crate::bath::{CorrelationTables, SpectralDensityParams, TableOptions};
use crate::error::{Error, Result};
use crate::regression::{RegressionOptions, SpectrumOptions, Window};
use crate::system::Op2;
use crate::tcl2::{Frame, PropagationOptions};
use crate::variational::{solve_self_consistent, VariationalOptions, VariationalSolution};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSection {
    pub alpha: Option<f64>,
    pub nu_c: Option<f64>,
    pub s: Option<f64>,
    pub beta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TablesSection {
    pub dtau: f64,
    pub t_table: f64,
}

impl Default for TablesSection {
    fn default() -> Self {
        let d = TableOptions::default();
        Self { dtau: d.dtau, t_table: d.t_table }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsSection {
    pub dt: f64,
    pub t_final: f64,
    /// Initial population of |1> (the state is diagonal).
    pub p1: f64,
    /// Write every n-th step.
    pub output_stride: usize,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        Self { dt: 0.01, t_final: 20.0, p1: 1.0, output_stride: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSection {
    pub dt: f64,
    pub tau_max: f64,
    pub history_horizon: f64,
    pub omega_max: f64,
    pub output_stride: usize,
    pub window: Window,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        let r = RegressionOptions::default();
        Self {
            dt: r.dt,
            tau_max: r.tau_max,
            history_horizon: r.history_horizon,
            omega_max: 20.0,
            output_stride: r.output_stride,
            window: Window::Auto,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSection {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub alpha_step: f64,
    /// Ohmicities to sweep; empty means the bath value.
    pub s: Vec<f64>,
}

impl Default for ScanSection {
    fn default() -> Self {
        Self { alpha_min: 0.0, alpha_max: 0.3, alpha_step: 0.01, s: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OraclePrep {
    Thermal,
    Displaced,
    Relax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub n_modes: usize,
    pub n_max: usize,
    pub band: f64,
    pub t_final: f64,
    pub dt: f64,
    pub prep: OraclePrep,
    pub t_relax: f64,
    pub seed: u64,
    /// Refuse times past the recurrence estimate 2 pi / min gap.
    pub enforce_recurrence: bool,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self { n_modes: 6, n_max: 4, band: 100.0, t_final: 2.0, dt: 0.02, prep: OraclePrep::Thermal, t_relax: 5.0, seed: 7, enforce_recurrence: true }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: Option<String>,
    pub bath: BathSection,
    pub frame: FrameChoice,
    pub tables: TablesSection,
    pub dynamics: DynamicsSection,
    pub spectrum: SpectrumSection,
    pub scan: ScanSection,
    pub oracle: OracleSection,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameChoice {
    #[default]
    Variational,
    Weak,
}

impl From<FrameChoice> for Frame {
    fn from(f: FrameChoice) -> Self {
        match f {
            FrameChoice::Variational => Frame::Variational,
            FrameChoice::Weak => Frame::Weak,
        }
    }
}

fn positive(bad: &mut Vec<String>, name: &str, v: f64) {
    if !(v > 0.0 && v.is_finite()) {
        bad.push(format!("{name} must be > 0 (got {v})"));
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Validation(vec![e.message().to_string()]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Every problem at once.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        let b = &self.bath;
        for (name, v) in [("bath.alpha", b.alpha), ("bath.nu_c", b.nu_c), ("bath.s", b.s), ("bath.beta", b.beta)] {
            if v.is_none() {
                bad.push(format!("{name} is required"));
            }
        }
        if let (Some(a), Some(nc), Some(s), Some(be)) = (b.alpha, b.nu_c, b.s, b.beta) {
            if let Err(Error::Validation(v)) = (SpectralDensityParams { alpha: a, nu_c: nc, s, beta: be }).validate() {
                bad.extend(v.into_iter().map(|m| format!("bath.{m}")));
            }
        }
        positive(&mut bad, "tables.dtau", self.tables.dtau);
        positive(&mut bad, "tables.t_table", self.tables.t_table);
        let d = &self.dynamics;
        positive(&mut bad, "dynamics.dt", d.dt);
        if !(d.t_final >= 0.0 && d.t_final.is_finite()) {
            bad.push(format!("dynamics.t_final must be >= 0 (got {})", d.t_final));
        }
        if d.t_final > self.tables.t_table {
            bad.push(format!("dynamics.t_final {} exceeds tables.t_table {}", d.t_final, self.tables.t_table));
        }
        if !(0.0..=1.0).contains(&d.p1) {
            bad.push(format!("dynamics.p1 must lie in [0, 1] (got {})", d.p1));
        }
        if d.output_stride == 0 {
            bad.push("dynamics.output_stride must be >= 1".into());
        }
        let sp = &self.spectrum;
        positive(&mut bad, "spectrum.dt", sp.dt);
        positive(&mut bad, "spectrum.tau_max", sp.tau_max);
        positive(&mut bad, "spectrum.history_horizon", sp.history_horizon);
        positive(&mut bad, "spectrum.omega_max", sp.omega_max);
        if sp.output_stride == 0 {
            bad.push("spectrum.output_stride must be >= 1".into());
        }
        if 2.0 * sp.history_horizon > self.tables.t_table {
            bad.push(format!("spectrum.history_horizon {} needs tables.t_table >= {}", sp.history_horizon, 2.0 * sp.history_horizon));
        }
        match sp.window {
            Window::Exponential { rate } => positive(&mut bad, "spectrum.window.rate", rate),
            Window::Gaussian { sigma } => positive(&mut bad, "spectrum.window.sigma", sigma),
            _ => {}
        }
        let sc = &self.scan;
        positive(&mut bad, "scan.alpha_step", sc.alpha_step);
        if !(sc.alpha_min >= 0.0 && sc.alpha_max >= sc.alpha_min) {
            bad.push(format!("scan needs 0 <= alpha_min <= alpha_max (got {}, {})", sc.alpha_min, sc.alpha_max));
        }
        for s in &sc.s {
            positive(&mut bad, "scan.s", *s);
        }
        let o = &self.oracle;
        if o.n_modes == 0 {
            bad.push("oracle.n_modes must be >= 1".into());
        }
        if o.n_max == 0 {
            bad.push("oracle.n_max must be >= 1".into());
        }
        positive(&mut bad, "oracle.band", o.band);
        positive(&mut bad, "oracle.dt", o.dt);
        positive(&mut bad, "oracle.t_final", o.t_final);
        if o.prep == OraclePrep::Relax {
            positive(&mut bad, "oracle.t_relax", o.t_relax);
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(bad))
        }
    }

    pub fn params(&self) -> Result<SpectralDensityParams> {
        let b = &self.bath;
        match (b.alpha, b.nu_c, b.s, b.beta) {
            (Some(a), Some(nc), Some(s), Some(be)) => SpectralDensityParams::new(a, nc, s, be),
            _ => Err(Error::Validation(vec!["bath section incomplete".into()])),
        }
    }

    pub fn table_options(&self) -> TableOptions {
        TableOptions { dtau: self.tables.dtau, t_table: self.tables.t_table, ..Default::default() }
    }

    pub fn variational(&self) -> Result<VariationalSolution> {
        let p = self.params()?;
        match self.frame {
            FrameChoice::Weak => Ok(VariationalSolution::weak(1.0, p.beta)),
            FrameChoice::Variational => solve_self_consistent(&p, 1.0, &VariationalOptions::default()),
        }
    }

    pub fn correlation_tables(&self) -> Result<CorrelationTables> {
        CorrelationTables::build(&self.params()?, &self.variational()?, self.table_options())
    }

    pub fn rho0(&self) -> Op2 {
        Op2::projector(1).scale_re(self.dynamics.p1) + Op2::projector(0).scale_re(1.0 - self.dynamics.p1)
    }

    pub fn propagation(&self, inhomogeneous: bool) -> PropagationOptions {
        PropagationOptions { dt: self.dynamics.dt, t_final: self.dynamics.t_final, include_inhomogeneous: inhomogeneous, ..Default::default() }
    }

    pub fn regression(&self) -> RegressionOptions {
        let sp = &self.spectrum;
        RegressionOptions {
            dt: sp.dt,
            tau_max: sp.tau_max,
            history_horizon: sp.history_horizon,
            output_stride: sp.output_stride,
            ..Default::default()
        }
    }

    pub fn spectrum_options(&self) -> SpectrumOptions {
        SpectrumOptions { window: self.spectrum.window, omega_max: self.spectrum.omega_max, ..Default::default() }
    }
}
