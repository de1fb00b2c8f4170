//! Tabulation of the three base kernels phi, K and C_ZZ on a uniform time grid.
//!
//! Every kernel has the form int dnu [g_c(nu) cos(nu t) - i g_s(nu) sin(nu t)].
//! The frequency axis is split at `nu_split`: below it a graded composite
//! Gauss-Legendre rule is applied directly at every grid time; above it the
//! amplitude is interpolated by a polynomial on uniform panels whose width
//! is commensurate with the time step, so the panel sum for all grid times
//! is a single FFT per interpolation node.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::bath::SpectralDensityParams;
use crate::error::Result;
use crate::quad;
use crate::variational::VariationalSolution;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum BaseKernel {
    Phi,
    K,
    Czz,
}

impl BaseKernel {
    /// (g_c, g_s) at frequency nu.
    #[inline]
    pub fn amplitudes(self, nu: f64, p: &SpectralDensityParams, vs: &VariationalSolution) -> (f64, f64) {
        let j = p.j(nu);
        let f = vs.f(nu);
        let coth = p.coth(nu);
        match self {
            BaseKernel::Phi => {
                let a = 4.0 * j * f * f / (nu * nu);
                (a * coth, a)
            }
            BaseKernel::K => {
                let a = -2.0 * j * f * (1.0 - f) / nu;
                (a, a * coth)
            }
            BaseKernel::Czz => {
                let a = j * (1.0 - f) * (1.0 - f);
                (a * coth, a)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct TableOptions {
    pub dtau: f64,
    pub t_table: f64,
    /// Target width of the uniform interpolation panels.
    pub panel_width: f64,
    pub panel_nodes: usize,
    pub low_nodes: usize,
}

impl Default for TableOptions {
    fn default() -> Self {
        Self { dtau: 0.005, t_table: 200.0, panel_width: 0.02, panel_nodes: 6, low_nodes: 10 }
    }
}

impl TableOptions {
    pub fn n_tau(&self) -> usize {
        (self.t_table / self.dtau).round() as usize + 1
    }
}

/// Complex series on tau_n = n dtau, n >= 0, extended to negative times by
/// conjugation and to zero beyond the last point.
#[derive(Clone, Debug)]
pub struct KernelTable {
    pub dtau: f64,
    pub values: Vec<C64>,
}

/// Interpolation stencil half width (six points: n-2 .. n+3).
const STENCIL: [i64; 6] = [-2, -1, 0, 1, 2, 3];

impl KernelTable {
    #[inline]
    pub fn at(&self, n: i64) -> C64 {
        if n >= 0 {
            self.values.get(n as usize).copied().unwrap_or(C64::new(0.0, 0.0))
        } else {
            self.values.get((-n) as usize).map(|v| v.conj()).unwrap_or(C64::new(0.0, 0.0))
        }
    }

    pub fn horizon(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.dtau
    }

    /// Six-point Lagrange interpolation; exact at grid points.
    pub fn eval(&self, tau: f64) -> C64 {
        let x = tau / self.dtau;
        let r = x.round();
        if (x - r).abs() < 1e-9 {
            return self.at(r as i64);
        }
        let n = x.floor();
        let u = x - n;
        let n = n as i64;
        let w = lagrange6(u);
        let mut acc = C64::new(0.0, 0.0);
        for (k, o) in STENCIL.iter().enumerate() {
            acc += self.at(n + o) * w[k];
        }
        acc
    }
}

/// Lagrange weights for nodes -2..3 at fractional position u in [0, 1).
#[inline]
pub fn lagrange6(u: f64) -> [f64; 6] {
    let mut w = [0.0; 6];
    for k in 0..6 {
        let xk = STENCIL[k] as f64;
        let mut l = 1.0;
        for m in 0..6 {
            if m != k {
                let xm = STENCIL[m] as f64;
                l *= (u - xm) / (xk - xm);
            }
        }
        w[k] = l;
    }
    w
}

/// Quadrature geometry shared by all kernels of one bath.
pub struct SpectralGrid {
    pub opts: TableOptions,
    pub nu_split: f64,
    low: Vec<(f64, f64)>,
    panel_h: f64,
    n_panels: usize,
    n_fft: usize,
    unit_nodes: Vec<f64>,
    unit_weights: Vec<f64>,
    /// W_k(h tau_n) for every node k and grid time n.
    filon_w: Vec<Vec<C64>>,
    nu_lo: f64,
}

impl SpectralGrid {
    pub fn new(p: &SpectralDensityParams, delta_r: f64, opts: TableOptions) -> Self {
        let n_tau = opts.n_tau();
        let t_max = (n_tau - 1) as f64 * opts.dtau;
        let nu_split = (2.0f64).max(2.0 * delta_r + 1.0).min(p.nu_max());
        let nu_lo = p.nu_min();

        // Low region: geometric panels up to the first uniform panel, then
        // uniform panels no wider than pi / t_max.
        let n_uni = ((nu_split * t_max / PI).ceil() as usize).max(8);
        let w_uni = nu_split / n_uni as f64;
        let (gx, gw) = quad::gauss_legendre_unit(opts.low_nodes);
        let mut edges = vec![nu_lo];
        let mut e = w_uni;
        let mut geo = Vec::new();
        while e > nu_lo * 2.0 {
            geo.push(e);
            e *= 0.5;
        }
        geo.reverse();
        edges.extend(geo);
        for k in 2..=n_uni {
            edges.push(k as f64 * w_uni);
        }
        let mut low = Vec::new();
        for win in edges.windows(2) {
            let (a, b) = (win[0], win[1]);
            for (x, w) in gx.iter().zip(&gw) {
                low.push((a + (b - a) * x, (b - a) * w));
            }
        }

        // Uniform panels: h = 2 pi / (N dtau) with N a power of two.
        let mut n_fft = 1usize;
        while 2.0 * PI / (n_fft as f64 * opts.dtau) > opts.panel_width || n_fft < n_tau {
            n_fft *= 2;
        }
        let panel_h = 2.0 * PI / (n_fft as f64 * opts.dtau);
        let n_panels = ((p.nu_max() - nu_split) / panel_h).ceil() as usize;
        assert!(n_panels <= n_fft, "frequency panels exceed FFT length");

        let (ux, uw) = quad::gauss_legendre_unit(opts.panel_nodes);
        let (qx, qw) = quad::gauss_legendre_unit(16);
        let np = opts.panel_nodes;
        let basis: Vec<Vec<f64>> = (0..np)
            .map(|k| {
                qx.iter()
                    .map(|&y| {
                        let mut l = 1.0;
                        for m in 0..np {
                            if m != k {
                                l *= (y - ux[m]) / (ux[k] - ux[m]);
                            }
                        }
                        l
                    })
                    .collect()
            })
            .collect();
        let filon_w = (0..np)
            .map(|k| {
                (0..n_tau)
                    .map(|n| {
                        let kappa = panel_h * n as f64 * opts.dtau;
                        let mut acc = C64::new(0.0, 0.0);
                        for q in 0..qx.len() {
                            acc += C64::from_polar(qw[q] * basis[k][q], kappa * qx[q]);
                        }
                        acc
                    })
                    .collect()
            })
            .collect();

        Self {
            opts,
            nu_split,
            low,
            panel_h,
            n_panels,
            n_fft,
            unit_nodes: ux,
            unit_weights: uw,
            filon_w,
            nu_lo,
        }
    }

    pub fn n_tau(&self) -> usize {
        self.opts.n_tau()
    }

    /// Lowest frequency included in every integral.
    pub fn nu_lo(&self) -> f64 {
        self.nu_lo
    }

    /// int_{nu_split}^{nu_max} b(nu) exp(i nu tau_n) dnu for all grid times.
    fn filon_transform(&self, b: &dyn Fn(f64) -> C64) -> Vec<C64> {
        let np = self.opts.panel_nodes;
        let n_tau = self.n_tau();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_inverse(self.n_fft);
        let mut out = vec![C64::new(0.0, 0.0); n_tau];
        let mut buf = vec![C64::new(0.0, 0.0); self.n_fft];
        for k in 0..np {
            buf.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
            for m in 0..self.n_panels {
                let nu = self.nu_split + (m as f64 + self.unit_nodes[k]) * self.panel_h;
                buf[m] = b(nu);
            }
            fft.process(&mut buf);
            for n in 0..n_tau {
                out[n] += self.filon_w[k][n] * buf[n];
            }
        }
        for (n, v) in out.iter_mut().enumerate() {
            let tau = n as f64 * self.opts.dtau;
            *v *= C64::from_polar(self.panel_h, self.nu_split * tau);
        }
        out
    }

    /// int_{nu_split}^{nu_max} b(nu) dnu with the panel rule.
    fn filon_integral(&self, b: &dyn Fn(f64) -> C64) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for m in 0..self.n_panels {
            for k in 0..self.opts.panel_nodes {
                let nu = self.nu_split + (m as f64 + self.unit_nodes[k]) * self.panel_h;
                acc += b(nu) * self.unit_weights[k];
            }
        }
        acc * self.panel_h
    }

    /// Tabulates int [g_c cos - i g_s sin] for the given amplitude pairs.
    pub fn kernels(&self, amps: &[&dyn Fn(f64) -> (f64, f64)]) -> Vec<KernelTable> {
        let n_tau = self.n_tau();
        let dtau = self.opts.dtau;
        let mut out: Vec<Vec<C64>> = vec![vec![C64::new(0.0, 0.0); n_tau]; amps.len()];

        // Low region, time recurrence for the phase with periodic reseeding.
        let samples: Vec<Vec<(f64, f64)>> =
            amps.iter().map(|a| self.low.iter().map(|&(nu, w)| {
                let (c, s) = a(nu);
                (w * c, w * s)
            }).collect()).collect();
        for (j, &(nu, _)) in self.low.iter().enumerate() {
            let step = C64::from_polar(1.0, nu * dtau);
            let mut ph = C64::new(1.0, 0.0);
            for n in 0..n_tau {
                if n % 128 == 0 {
                    ph = C64::from_polar(1.0, nu * n as f64 * dtau);
                }
                for (a, o) in samples.iter().zip(out.iter_mut()) {
                    let (c, s) = a[j];
                    o[n] += C64::new(c * ph.re, -s * ph.im);
                }
                ph *= step;
            }
        }

        for (a, o) in amps.iter().zip(out.iter_mut()) {
            let tc = self.filon_transform(&|nu| C64::new(a(nu).0, 0.0));
            let ts = self.filon_transform(&|nu| C64::new(a(nu).1, 0.0));
            for n in 0..n_tau {
                o[n] += C64::new(tc[n].re, -ts[n].im);
            }
        }
        out.into_iter().map(|values| KernelTable { dtau, values }).collect()
    }

    /// Cumulative integrals int_0^{tau_n} kappa(u) exp(i omega u) du of a
    /// kernel kappa given by its amplitude pair, for each requested omega.
    /// Requires |omega| < nu_split - 1 so the Filon amplitudes stay regular.
    pub fn cumulative(&self, amp: &dyn Fn(f64) -> (f64, f64), omegas: &[f64]) -> Vec<KernelTable> {
        let n_tau = self.n_tau();
        let dtau = self.opts.dtau;
        // kappa(u) = int a_p e^{i nu u} + a_m e^{-i nu u}
        let a_p = |nu: f64| {
            let (c, s) = amp(nu);
            0.5 * (c - s)
        };
        let a_m = |nu: f64| {
            let (c, s) = amp(nu);
            0.5 * (c + s)
        };
        let mut out = Vec::new();
        let low_p: Vec<f64> = self.low.iter().map(|&(nu, w)| w * a_p(nu)).collect();
        let low_m: Vec<f64> = self.low.iter().map(|&(nu, w)| w * a_m(nu)).collect();
        for &om in omegas {
            assert!(om.abs() < self.nu_split - 0.5);
            let mut v = vec![C64::new(0.0, 0.0); n_tau];
            for (j, &(nu, _)) in self.low.iter().enumerate() {
                accumulate_e_int(&mut v, nu + om, low_p[j], dtau);
                accumulate_e_int(&mut v, om - nu, low_m[j], dtau);
            }
            let bp = |nu: f64| C64::new(a_p(nu), 0.0) / C64::new(0.0, nu + om);
            let bm = |nu: f64| C64::new(a_m(nu), 0.0) / C64::new(0.0, om - nu);
            let tp = self.filon_transform(&bp);
            let tm = self.filon_transform(&|nu| bm(nu).conj());
            let c0 = self.filon_integral(&bp) + self.filon_integral(&bm);
            for n in 1..n_tau {
                let t = n as f64 * dtau;
                v[n] += C64::from_polar(1.0, om * t) * (tp[n] + tm[n].conj()) - c0;
            }
            out.push(KernelTable { dtau, values: v });
        }
        out
    }
}

/// v[n] += a * int_0^{n dtau} exp(i x u) du, phase by recurrence.
fn accumulate_e_int(v: &mut [C64], x: f64, a: f64, dtau: f64) {
    let step = C64::from_polar(1.0, x * dtau);
    let inv = C64::new(0.0, -1.0 / x) * a;
    let mut ph = C64::new(1.0, 0.0);
    for n in 1..v.len() {
        ph *= step;
        let t = n as f64 * dtau;
        if n % 128 == 0 {
            ph = C64::from_polar(1.0, x * t);
        }
        if (x * t).abs() < 1e-3 {
            v[n] += e_int(x, t) * a;
        } else {
            v[n] += (ph - 1.0) * inv;
        }
    }
}

/// int_0^t exp(i x u) du.
#[inline]
fn e_int(x: f64, t: f64) -> C64 {
    let z = x * t;
    if z.abs() < 1e-3 {
        C64::new(t, 0.0) * C64::new(1.0 - z * z / 6.0 + z.powi(4) / 120.0, z / 2.0 - z * z * z / 24.0)
    } else {
        (C64::from_polar(1.0, z) - 1.0) / C64::new(0.0, x)
    }
}

/// On-demand evaluation of a base kernel by adaptive Kronrod quadrature with
/// period-scale panels; `tol` is the absolute tolerance.
pub fn kernel_by_quadrature(
    kind: BaseKernel,
    tau: f64,
    p: &SpectralDensityParams,
    vs: &VariationalSolution,
    tol: f64,
) -> Result<C64> {
    let f = |nu: f64| {
        let (c, s) = kind.amplitudes(nu, p, vs);
        let (sn, cs) = (nu * tau).sin_cos();
        C64::new(c * cs, -s * sn)
    };
    let bp = crate::variational::frequency_breakpoints(p);
    let mut acc = C64::new(0.0, 0.0);
    for w in bp.windows(2) {
        acc += quad::integrate_oscillatory(&f, w[0], w[1], tau, tol / bp.len() as f64, 1e-13)?;
    }
    Ok(acc)
}
