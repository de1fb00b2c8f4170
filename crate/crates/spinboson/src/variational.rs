//! Self-consistent variational displacement F(nu), Franck-Condon factor <B>
//! and renormalised tunnelling Delta_R.

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::bath::SpectralDensityParams;
use crate::error::{Error, Result};
use crate::quad;

/// Converged variational state.
#[derive(Clone, Debug, Serialize)]
pub struct VariationalSolution {
    pub nu_grid: Vec<f64>,
    pub f_grid: Vec<f64>,
    pub b_avg: f64,
    pub delta_r: f64,
    pub delta: f64,
    pub beta: f64,
    pub converged: bool,
    pub localized: bool,
    pub iterations: usize,
    /// Forces F to a constant (0 or 1) instead of the variational response;
    /// used for the weak-coupling and full-polaron reductions.
    pub fixed_f: Option<f64>,
}

impl VariationalSolution {
    /// F(nu) at any frequency.
    #[inline]
    pub fn f(&self, nu: f64) -> f64 {
        match self.fixed_f {
            Some(c) => c,
            None => variational_response(nu, self.delta_r, self.beta),
        }
    }

    /// Weak-coupling frame: F = 0, <B> = 1, Delta_R = Delta.
    pub fn weak(delta: f64, beta: f64) -> Self {
        Self::constant(0.0, 1.0, delta, beta)
    }

    /// Constant F with a given Franck-Condon factor (F = 1 is the full polaron
    /// frame, whose <B> follows from [`franck_condon_constant`]).
    pub fn constant(f: f64, b_avg: f64, delta: f64, beta: f64) -> Self {
        let nu_grid = log_grid(1e-3, 400.0, 121);
        Self {
            f_grid: vec![f; nu_grid.len()],
            nu_grid,
            b_avg,
            delta_r: b_avg * delta,
            delta,
            beta,
            converged: true,
            localized: b_avg == 0.0,
            iterations: 0,
            fixed_f: Some(f),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct VariationalOptions {
    pub mixing: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: f64,
}

impl Default for VariationalOptions {
    fn default() -> Self {
        Self { mixing: 0.5, tol: 1e-10, max_iter: 500, seed: 1.0 }
    }
}

/// F(nu) = [1 + (Delta_R/nu) tanh(beta Delta_R/2) coth(beta nu/2)]^-1.
pub fn variational_response(nu: f64, delta_r: f64, beta: f64) -> f64 {
    if delta_r <= 0.0 {
        return 1.0;
    }
    if nu <= 0.0 {
        return 0.0;
    }
    let x = (delta_r / nu) * (0.5 * beta * delta_r).tanh() / (0.5 * beta * nu).tanh();
    1.0 / (1.0 + x)
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
}

/// Panel edges for frequency integrals: geometric from nu_min, refined
/// around the variational crossover and the cutoff.
pub(crate) fn frequency_breakpoints(p: &SpectralDensityParams) -> Vec<f64> {
    let lo = p.nu_min();
    let hi = p.nu_max();
    let mut v = vec![lo];
    let mut x = lo;
    while x * 4.0 < 0.05 * p.nu_c.min(1.0) {
        x *= 4.0;
        v.push(x);
    }
    let mut y = 0.05 * p.nu_c.min(1.0);
    while y < hi {
        v.push(y);
        y *= 1.5;
    }
    v.push(hi);
    v
}

/// Integral of a real integrand over [nu_min, nu_max] by adaptive Kronrod panels.
pub(crate) fn integrate_frequency<F: Fn(f64) -> f64>(p: &SpectralDensityParams, f: F, tol: f64) -> Result<f64> {
    let g = |x: f64| C64::new(f(x), 0.0);
    let bp = frequency_breakpoints(p);
    let mut acc = 0.0;
    for w in bp.windows(2) {
        acc += quad::integrate(&g, w[0], w[1], tol / bp.len() as f64, 1e-14)?.re;
    }
    Ok(acc)
}

/// <B> = exp[-2 int J F^2 nu^-2 coth(beta nu/2) dnu] for the response at Delta_R.
pub fn franck_condon(delta_r: f64, p: &SpectralDensityParams) -> Result<f64> {
    if p.alpha == 0.0 {
        return Ok(1.0);
    }
    if delta_r <= 0.0 {
        return franck_condon_constant(1.0, p);
    }
    let e = integrate_frequency(
        p,
        |nu| {
            let f = variational_response(nu, delta_r, p.beta);
            p.j(nu) * f * f / (nu * nu) * p.coth(nu)
        },
        1e-14,
    )?;
    Ok((-2.0 * e).exp())
}

/// <B> for a frequency-independent F; zero when the integral diverges.
pub fn franck_condon_constant(f: f64, p: &SpectralDensityParams) -> Result<f64> {
    if f == 0.0 || p.alpha == 0.0 {
        return Ok(1.0);
    }
    // J nu^-2 coth ~ nu^(s-3) at small nu: divergent for s <= 2.
    if p.s <= 2.0 {
        return Ok(0.0);
    }
    let e = integrate_frequency(p, |nu| p.j(nu) * f * f / (nu * nu) * p.coth(nu), 1e-14)?;
    Ok((-2.0 * e).exp())
}

/// Damped fixed-point iteration for <B>.
pub fn solve_self_consistent(p: &SpectralDensityParams, delta: f64, opts: &VariationalOptions) -> Result<VariationalSolution> {
    p.validate()?;
    let mut b = opts.seed;
    let mut trace = Vec::new();
    for it in 1..=opts.max_iter {
        let new = franck_condon(b * delta, p)?;
        let next = (1.0 - opts.mixing) * b + opts.mixing * new;
        trace.push(next);
        if (next - b).abs() < opts.tol {
            b = next;
            return Ok(finish(b, delta, p.beta, it));
        }
        b = next;
    }
    let tail: Vec<String> = trace.iter().rev().take(6).map(|v| format!("{v:.6e}")).collect();
    Err(Error::Numerical(format!(
        "variational iteration did not converge in {} steps; last iterates {}",
        opts.max_iter,
        tail.join(", ")
    )))
}

pub(crate) fn finish(b: f64, delta: f64, beta: f64, iterations: usize) -> VariationalSolution {
    let localized = b < 1e-8;
    let b = if localized { 0.0 } else { b };
    let delta_r = b * delta;
    let nu_grid = log_grid(1e-3, 400.0, 121);
    let f_grid = nu_grid.iter().map(|&nu| variational_response(nu, delta_r, beta)).collect();
    VariationalSolution {
        nu_grid,
        f_grid,
        b_avg: b,
        delta_r,
        delta,
        beta,
        converged: true,
        localized,
        iterations,
        fixed_f: None,
    }
}

/// Continuation sweep over alpha; each solve is seeded with the previous <B>.
pub fn sweep_alpha(
    base: &SpectralDensityParams,
    alphas: &[f64],
    delta: f64,
    opts: &VariationalOptions,
) -> Result<Vec<VariationalSolution>> {
    let mut out = Vec::with_capacity(alphas.len());
    let mut seed = opts.seed;
    for &a in alphas {
        let p = SpectralDensityParams { alpha: a, ..*base };
        let o = VariationalOptions { seed: if seed > 0.0 { seed } else { 1e-6 }, ..*opts };
        let sol = solve_self_consistent(&p, delta, &o)?;
        seed = sol.b_avg;
        out.push(sol);
    }
    Ok(out)
}

/// First index where <B> drops by more than `jump` between neighbours.
pub fn find_jump(sols: &[VariationalSolution], jump: f64) -> Option<usize> {
    sols.windows(2).position(|w| (w[0].b_avg - w[1].b_avg).abs() > jump).map(|i| i + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(alpha: f64, s: f64) -> SpectralDensityParams {
        SpectralDensityParams::new(alpha, 10.0, s, 1.0).unwrap()
    }

    #[test]
    fn response_limits() {
        assert_eq!(variational_response(3.0, 0.0, 1.0), 1.0);
        assert!(variational_response(1e6, 0.5, 1.0) > 1.0 - 1e-6);
        assert!(variational_response(1e-8, 0.5, 1.0) < 1e-8);
    }

    #[test]
    fn franck_condon_limits() {
        assert_eq!(franck_condon_constant(0.0, &params(0.1, 3.0)).unwrap(), 1.0);
        assert_eq!(franck_condon_constant(1.0, &params(0.1, 1.0)).unwrap(), 0.0);
        let b = franck_condon_constant(1.0, &params(0.1, 3.0)).unwrap();
        assert!(b > 0.0 && b < 1.0);
    }

    #[test]
    fn full_polaron_factor_matches_refined_quadrature() {
        let p = params(0.1, 3.0);
        let b = franck_condon_constant(1.0, &p).unwrap();
        // Refinement oracle: plain composite Gauss-Legendre on a 10x finer split.
        let (x, w) = quad::gauss_legendre(20);
        let edges = frequency_breakpoints(&p);
        let mut e = 0.0;
        for win in edges.windows(2) {
            for k in 0..10 {
                let a = win[0] + (win[1] - win[0]) * k as f64 / 10.0;
                let bb = win[0] + (win[1] - win[0]) * (k + 1) as f64 / 10.0;
                for (xi, wi) in x.iter().zip(&w) {
                    let nu = 0.5 * (a + bb) + 0.5 * (bb - a) * xi;
                    e += 0.5 * (bb - a) * wi * p.j(nu) / (nu * nu) * p.coth(nu);
                }
            }
        }
        assert!((b - (-2.0 * e).exp()).abs() < 1e-10);
    }

    #[test]
    fn super_ohmic_solution_is_delocalised() {
        let sol = solve_self_consistent(&params(0.1, 3.0), 1.0, &Default::default()).unwrap();
        assert!(sol.b_avg > 0.5 && sol.b_avg < 1.0);
        assert_eq!(sol.delta_r, sol.b_avg * sol.delta);
        let again = franck_condon(sol.delta_r, &params(0.1, 3.0)).unwrap();
        assert!((again - sol.b_avg).abs() < 1e-9);
    }
}
