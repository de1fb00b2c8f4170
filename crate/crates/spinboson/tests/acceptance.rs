//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines always reach the console.
//! A failing criterion is reported, not asserted; the process exits 0 unless
//! the code under test panics.

mod common;

use std::time::Instant;

use num_complex::Complex64 as C64;

use spinboson::bath::tables::kernel_by_quadrature;
use spinboson::bath::{czz_weight_only, BaseKernel, CorrelationTables, Index, SpectralDensityParams, TableOptions};
use spinboson::cli::oracle_setup;
use spinboson::observables::{sigma_x_lab, sigma_z, SigmaXMode};
use spinboson::oracle::{exact_evolve, BathPrep, OracleOptions};
use spinboson::regression::*;
use spinboson::system::Op2;
use spinboson::tcl2::{propagate, DensityTrajectory, PropagationOptions};
use spinboson::variational::{find_jump, solve_self_consistent, sweep_alpha, VariationalSolution};
use spinboson::Result;

use common::*;

const OHMICITIES: [f64; 4] = [1.0, 1.5, 2.0, 3.0];

fn params(s: f64, alpha: f64) -> SpectralDensityParams {
    SpectralDensityParams::new(alpha, 10.0, s, 1.0).unwrap()
}

fn tables(s: f64, alpha: f64, t_table: f64) -> Result<CorrelationTables> {
    let p = params(s, alpha);
    let vs = solve_self_consistent(&p, 1.0, &Default::default())?;
    CorrelationTables::build(&p, &vs, TableOptions { t_table, ..Default::default() })
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| lo + k as f64 * step).collect()
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn variational_transition() -> Result<Outcome> {
    let up = grid(0.0, 0.3, 0.01);
    let sols = sweep_alpha(&params(1.0, 0.0), &up, 1.0, &Default::default())?;
    // The discontinuity is the collapse to the localized branch <B> = 0.
    let (jump_ok, jump_detail) = match sols.iter().position(|v| v.localized) {
        Some(i) if i > 0 => {
            let (a, pre) = (up[i], sols[i - 1].b_avg);
            let ok = (0.08 - 1e-12..=0.12 + 1e-12).contains(&a) && (pre - 0.5).abs() <= 0.1;
            let steepest = sols[..i].windows(2).map(|w| w[0].b_avg - w[1].b_avg).fold(0.0, f64::max);
            (ok, format!("s=1 drops to <B>=0 at alpha={a:.2} from pre-jump <B>={pre:.3} (largest earlier step {steepest:.3})"))
        }
        _ => (false, "s=1 never localizes".into()),
    };
    let up3 = grid(0.0, 0.5, 0.01);
    let sols3 = sweep_alpha(&params(3.0, 0.0), &up3, 1.0, &Default::default())?;
    let max_step = sols3.windows(2).map(|w| w[0].b_avg - w[1].b_avg).fold(0.0, f64::max);
    let monotone = sols3.windows(2).all(|w| w[1].b_avg < w[0].b_avg);
    let cont = find_jump(&sols3, 0.05).is_none() && !sols3.iter().any(|v| v.localized);
    outcome(
        jump_ok && monotone && cont,
        format!("{jump_detail}; s=3 monotone={monotone} continuous={cont} (largest drop {max_step:.4}, <B>(0.5)={:.3})", sols3.last().unwrap().b_avg),
    )
}

fn variational_response_shape() -> Result<Outcome> {
    let mut ok = true;
    let mut parts = Vec::new();
    for s in OHMICITIES {
        let vs = solve_self_consistent(&params(s, 0.1), 1.0, &Default::default())?;
        let nus: Vec<f64> = (0..=2000).map(|k| 10f64.powf(-6.0 + 9.0 * k as f64 / 2000.0)).collect();
        let f: Vec<f64> = nus.iter().map(|&nu| vs.f(nu)).collect();
        let monotone = f.windows(2).all(|w| w[1] >= w[0]);
        let (low, high) = (vs.f(1e-6), 1.0 - vs.f(100.0));
        ok &= monotone && low < 1e-3 && high < 1e-3;
        parts.push(format!("s={s}: monotone={monotone} F(1e-6)={low:.1e} 1-F(10 nu_c)={high:.2e}"));
    }
    outcome(ok, format!("{} (bounds 1e-3)", parts.join(", ")))
}

fn ohmicity_ordering() -> Result<Outcome> {
    let mut w = Vec::new();
    for s in OHMICITIES {
        let p = params(s, 0.1);
        let vs = solve_self_consistent(&p, 1.0, &Default::default())?;
        w.push(czz_weight_only(&p, &vs, 200.0, TableOptions::default())?);
    }
    let ok = w.windows(2).all(|x| x[1] < x[0]);
    outcome(ok, format!("int_0^200 |C_ZZ| = {:?}", w.iter().map(|v| format!("{v:.4e}")).collect::<Vec<_>>()))
}

fn run_pair(tb: &CorrelationTables, dt: f64, t_final: f64) -> Result<(DensityTrajectory, DensityTrajectory)> {
    let rho0 = Op2::projector(1);
    let on = propagate(tb, &rho0, &PropagationOptions { dt, t_final, include_inhomogeneous: true, ..Default::default() })?;
    let off = propagate(tb, &rho0, &PropagationOptions { dt, t_final, include_inhomogeneous: false, ..Default::default() })?;
    Ok((on, off))
}

fn population_insensitivity(tb: &CorrelationTables, on: &DensityTrajectory, off: &DensityTrajectory) -> Result<Outcome> {
    let _ = tb;
    let (a, b) = (sigma_z(on), sigma_z(off));
    let (mut worst, mut at) = (0.0f64, 0.0);
    for n in 0..on.times.len() {
        if on.times[n] <= 20.0 + 1e-9 && (a[n] - b[n]).abs() > worst {
            worst = (a[n] - b[n]).abs();
            at = on.times[n];
        }
    }
    outcome(worst < 1e-3, format!("max |sz_on - sz_off| on [0, 20] = {worst:.3e} at t={at:.2} (bound 1e-3)"))
}

fn coherence_convergence(tb: &CorrelationTables, on: &DensityTrajectory, off: &DensityTrajectory) -> Result<Outcome> {
    let a = sigma_x_lab(tb, on, SigmaXMode::Corrected)?;
    let b = sigma_x_lab(tb, off, SigmaXMode::Corrected)?;
    // Numerical tolerance: the RK4 step-halving bound of the invariant suite.
    let tol = 1e-6;
    let early = (0..on.times.len()).filter(|&n| on.times[n] <= 5.0 + 1e-9).map(|n| (a[n] - b[n]).abs()).fold(0.0, f64::max);
    let last = on.times.len() - 1;
    let late = (a[last] - b[last]).abs();
    outcome(
        early > 10.0 * tol && late < 1e-3,
        format!(
            "max |sx_on - sx_off| on [0, 5] = {early:.3e} (needs > {:.0e}); at t={:.0}: {late:.3e} (sx_on={:.4}, sx_off={:.4}; bound 1e-3)",
            10.0 * tol,
            on.times[last],
            a[last],
            b[last]
        ),
    )
}

fn oracle_max_error(s: f64, alpha: f64) -> Result<f64> {
    let p = params(s, alpha);
    let setup = oracle_setup(&p, 6, 100.0, 2.0, 1e-3)?;
    let rho0 = Op2::projector(1);
    let traj = propagate(&setup.tables, &rho0, &PropagationOptions { dt: 0.002, t_final: 2.0, include_inhomogeneous: true, ..Default::default() })?;
    let sz = sigma_z(&traj);
    let t_grid = grid(0.0, 2.0, 0.02);
    let opts = OracleOptions { n_max: 4, enforce_recurrence: false, ..Default::default() };
    let exact = exact_evolve(&setup.modes, 1.0, p.beta, &rho0, &BathPrep::Thermal, &t_grid, &opts)?;
    Ok((0..t_grid.len()).map(|k| (sz[10 * k] - exact.sigma_z[k]).abs()).fold(0.0, f64::max))
}

fn oracle_equivalence() -> Result<Outcome> {
    let e3 = oracle_max_error(3.0, 0.1)?;
    let e1 = oracle_max_error(1.0, 0.1)?;
    let e105 = oracle_max_error(1.0, 0.05)?;
    outcome(
        e3 < 0.02 && e1 >= 0.02 && e105 < 0.02,
        format!("max |sz_tcl2 - sz_oracle| on [0, 2]: s=3 a=0.1 {e3:.4} (<0.02), s=1 a=0.1 {e1:.4} (>=0.02), s=1 a=0.05 {e105:.4} (<0.02)"),
    )
}

fn weak_frame_reduction() -> Result<Outcome> {
    let p = params(3.0, 0.1);
    let tb = CorrelationTables::build(&p, &VariationalSolution::weak(1.0, 1.0), TableOptions { t_table: 40.0, ..Default::default() })?;
    let r = Reference::new(&p, 1.0, 0.005, 40.0);
    let (dt, steps) = (0.01, 2000);
    let rho0 = Op2::projector(1);
    let on = propagate(&tb, &rho0, &PropagationOptions { dt, t_final: 20.0, include_inhomogeneous: true, ..Default::default() })?;
    let off = propagate(&tb, &rho0, &PropagationOptions { dt, t_final: 20.0, include_inhomogeneous: false, ..Default::default() })?;
    let rd = redfield_dynamics(&r, &to_m2(&rho0.0), dt, steps);
    let mut d_dyn = 0.0f64;
    for n in 0..=steps {
        d_dyn = d_dyn.max((to_m2(&on.states[n].0) - rd[n]).norm()).max((on.states[n] - off.states[n]).frobenius());
    }
    let xc = sigma_x_lab(&tb, &on, SigmaXMode::Corrected)?;
    let xu = sigma_x_lab(&tb, &on, SigmaXMode::Uncorrected)?;
    let d_corr = xc.iter().zip(&xu).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let opts = RegressionOptions { tau_max: 20.0, output_stride: 1, ..Default::default() };
    let ss = steady_state(&tb, &opts)?;
    let rs = r.steady_state();
    let d_ss = (to_m2(&ss.rho.0) - rs).norm();
    let un = response_from_state(&tb, ResponseMode::Uncorrected, &opts, ss.clone())?;
    let co = response_from_state(&tb, ResponseMode::Corrected, &opts, ss)?;
    let ru = standard_qrt(&r, &rs, dt, steps);
    let rc = corrected_qrt(&r, &rs, dt, steps);
    let d_u = un.s.iter().zip(&ru).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    let d_c = co.s.iter().zip(&rc).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    let sopts = SpectrumOptions { window: Window::None, omega_max: 8.0, pad: 8 };
    let mut d_a = 0.0f64;
    for (rec, refr) in [(&un, &ru), (&co, &rc)] {
        let sp = spectrum(&rec.tau, &rec.s1, &sopts)?;
        let s1: Vec<f64> = refr.iter().map(|z| z.im).collect();
        for k in (0..sp.omega.len()).step_by(7) {
            d_a = d_a.max((sp.a[k] - cosine_transform(&s1, dt, sp.omega[k])).abs());
        }
    }
    let worst = [d_dyn, d_corr, d_ss, d_u, d_c, d_a].into_iter().fold(0.0, f64::max);
    outcome(
        worst < 1e-8,
        format!("dynamics {d_dyn:.1e}, lab correction {d_corr:.1e}, steady state {d_ss:.1e}, standard QRT {d_u:.1e}, corrected QRT {d_c:.1e}, spectra {d_a:.1e} (bound 1e-8)"),
    )
}

fn spectrum_structure() -> Result<Outcome> {
    let tb = tables(3.0, 0.1, 200.0)?;
    let opts = RegressionOptions::default();
    let ss = steady_state(&tb, &opts)?;
    let co = response_from_state(&tb, ResponseMode::Corrected, &opts, ss.clone())?;
    let un = response_from_state(&tb, ResponseMode::Uncorrected, &opts, ss)?;
    let sopts = SpectrumOptions::default();
    let sc = spectrum(&co.tau, &co.s1, &sopts)?;
    let su = spectrum(&un.tau, &un.s1, &sopts)?;
    let dr = tb.delta_r;
    let (w_peak, a_peak) = sc.peak_in(0.0, sopts.omega_max).expect("nonempty spectrum");
    let peak_ok = (w_peak - dr).abs() <= 0.1 * dr;
    let max_a = a_peak.abs();
    let side = sc.omega.iter().zip(&sc.a).filter(|(w, _)| **w >= 2.0 * dr && **w <= 4.0 * dr).map(|(_, a)| a.abs()).fold(0.0, f64::max);
    let side_ok = side > 0.01 * max_a;
    let k = sc.omega.iter().position(|w| *w >= w_peak).unwrap();
    let rel = (sc.a[k] - su.a[k]).abs() / sc.a[k].abs();
    let height_ok = rel > 0.1;
    let near = sc.peak_in(0.9 * dr, 1.1 * dr).map(|(w, a)| format!("{a:.3e} at {w:.3}")).unwrap_or_default();
    outcome(
        peak_ok && side_ok && height_ok,
        format!(
            "Delta_R={dr:.4}; dominant corrected peak A={a_peak:.3e} at omega={w_peak:.4} (within 10%: {peak_ok}; largest |A| in [0.9, 1.1] Delta_R: {near}); \
             sideband max|A| in [2, 4] Delta_R = {side:.3e} (> 1% of peak: {side_ok}); corrected vs uncorrected at the peak {:.3e} vs {:.3e}, rel diff {rel:.2} (> 0.1: {height_ok}); windows {:?}/{:?}",
            sc.a[k], su.a[k], sc.window, su.window
        ),
    )
}

fn dagger(i: Index) -> Index {
    match i {
        Index::Plus => Index::Minus,
        Index::Minus => Index::Plus,
        other => other,
    }
}

fn invariant_suites() -> Result<Outcome> {
    let (mut conj, mut trace, mut herm, mut halving, mut phi0) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let taus = [0.0, 0.013, 0.4, 2.5, 11.0, 37.0];
    for s in OHMICITIES {
        let p = params(s, 0.1);
        let vs = solve_self_consistent(&p, 1.0, &Default::default())?;
        let tb = CorrelationTables::build(&p, &vs, TableOptions { t_table: 40.0, ..Default::default() })?;
        // C_ij(tau)^* = C_{j+ i+}(-tau) for every catalogue pair.
        for &t in &taus {
            for i in Index::ALL {
                for j in Index::ALL {
                    let a = tb.corr_homogeneous(i, j, t).conj();
                    let b = tb.corr_homogeneous(dagger(j), dagger(i), -t);
                    conj = conj.max((a - b).norm());
                }
            }
            for kind in [BaseKernel::Phi, BaseKernel::K, BaseKernel::Czz] {
                let q = kernel_by_quadrature(kind, t, &p, &vs, 1e-12)?;
                let qm = kernel_by_quadrature(kind, -t, &p, &vs, 1e-12)?;
                conj = conj.max((q.conj() - qm).norm());
            }
        }
        let rho0 = Op2::projector(1);
        let run = |dt: f64| propagate(&tb, &rho0, &PropagationOptions { dt, t_final: 20.0, include_inhomogeneous: true, ..Default::default() });
        let (a, b) = (run(0.01)?, run(0.005)?);
        for n in 0..a.states.len() {
            halving = halving.max((a.states[n] - b.states[2 * n]).frobenius());
        }
        trace = trace.max(a.max_trace_defect).max(b.max_trace_defect);
        herm = herm.max(a.max_hermiticity_defect).max(b.max_hermiticity_defect);
        phi0 = phi0.max((tb.phi.eval(0.0) - C64::new(-2.0 * vs.b_avg.ln(), 0.0)).norm());
    }
    let ok = conj < 1e-9 && trace < 1e-9 && herm < 1e-9 && halving < 1e-6 && phi0 < 1e-8;
    outcome(
        ok,
        format!("conjugate symmetry {conj:.1e}, trace {trace:.1e}, Hermiticity {herm:.1e}, RK4 step halving {halving:.1e}, phi(0)+2ln<B> {phi0:.1e} over s in {OHMICITIES:?}"),
    )
}

fn report(n: usize, name: &str, start: Instant, r: Result<Outcome>) -> bool {
    let secs = start.elapsed().as_secs_f64();
    let (pass, detail) = match r {
        Ok(o) => (o.pass, o.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    println!("criterion {n} [{}] {name} ({secs:.1} s): {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn main() {
    let mut passed = 0;
    let t = Instant::now();
    passed += report(1, "variational transition", t, variational_transition()) as usize;
    let t = Instant::now();
    passed += report(2, "variational response shape", t, variational_response_shape()) as usize;
    let t = Instant::now();
    passed += report(3, "ohmicity ordering", t, ohmicity_ordering()) as usize;
    let t = Instant::now();
    let dyn_run = tables(3.0, 0.1, 60.0).and_then(|tb| run_pair(&tb, 0.01, 50.0).map(|(a, b)| (tb, a, b)));
    match &dyn_run {
        Ok((tb, on, off)) => {
            passed += report(4, "population insensitivity", t, population_insensitivity(tb, on, off)) as usize;
            passed += report(5, "coherence steady-state convergence", t, coherence_convergence(tb, on, off)) as usize;
        }
        Err(e) => {
            for (n, name) in [(4, "population insensitivity"), (5, "coherence steady-state convergence")] {
                report(n, name, t, Err(spinboson::Error::Numerical(e.to_string())));
            }
        }
    }
    let t = Instant::now();
    passed += report(6, "oracle equivalence", t, oracle_equivalence()) as usize;
    let t = Instant::now();
    passed += report(7, "weak-frame reduction", t, weak_frame_reduction()) as usize;
    let t = Instant::now();
    passed += report(8, "spectrum structure", t, spectrum_structure()) as usize;
    let t = Instant::now();
    passed += report(9, "invariant suites", t, invariant_suites()) as usize;
    println!("acceptance: {passed}/9 criteria pass");
}
