//! Correlation tables and the correlation-function catalogue built on them.

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::bath::algebra::{self, BathKernels, Op};
use crate::bath::tables::{lagrange6, BaseKernel, KernelTable, SpectralGrid, TableOptions};
use crate::bath::SpectralDensityParams;
use crate::error::Result;
use crate::quad;
use crate::variational::VariationalSolution;

/// Bath operator labels of the correlation catalogue: the Latin coupling
/// operators B_X, B_Y, B_Z and the Greek dressing operators B_+ and B_-.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Index {
    X,
    Y,
    Z,
    Plus,
    Minus,
}

impl Index {
    pub const ALL: [Index; 5] = [Index::X, Index::Y, Index::Z, Index::Plus, Index::Minus];

    pub fn op(self, t: f64, b: f64) -> Op {
        match self {
            Index::X => Op::x(t, b),
            Index::Y => Op::y(t),
            Index::Z => Op::z(t),
            Index::Plus => Op::d(1, t),
            Index::Minus => Op::d(-1, t),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Index::X => "X",
            Index::Y => "Y",
            Index::Z => "Z",
            Index::Plus => "+",
            Index::Minus => "-",
        }
    }
}

/// Running integral int_0^t g(u) exp(i omega u) du of a tabulated integrand.
#[derive(Clone, Debug)]
pub struct Cumulative {
    pub integrand: KernelTable,
    pub omega: f64,
    pub values: Vec<C64>,
}

const CELL_NODES: usize = 8;

impl Cumulative {
    /// Cell-by-cell Gauss-Legendre integration of the six-point interpolant.
    pub fn by_time_quadrature(integrand: KernelTable, omega: f64) -> Self {
        let n_tau = integrand.values.len();
        let h = integrand.dtau;
        let (gx, gw) = quad::gauss_legendre_unit(CELL_NODES);
        let lw: Vec<[f64; 6]> = gx.iter().map(|&u| lagrange6(u)).collect();
        let mut values = vec![C64::new(0.0, 0.0); n_tau];
        let mut acc = C64::new(0.0, 0.0);
        for n in 0..n_tau - 1 {
            let mut cell = C64::new(0.0, 0.0);
            for q in 0..CELL_NODES {
                let mut g = C64::new(0.0, 0.0);
                for (k, o) in (-2i64..=3).enumerate() {
                    g += integrand.at(n as i64 + o) * lw[q][k];
                }
                let u = (n as f64 + gx[q]) * h;
                cell += g * C64::from_polar(gw[q], omega * u);
            }
            acc += cell * h;
            values[n + 1] = acc;
        }
        Self { integrand, omega, values }
    }

    pub fn horizon(&self) -> f64 {
        self.integrand.horizon()
    }

    /// Value at any t >= 0; frozen at the table horizon.
    pub fn eval(&self, t: f64) -> C64 {
        let h = self.integrand.dtau;
        let last = self.values.len() - 1;
        let x = t / h;
        if x >= last as f64 {
            return self.values[last];
        }
        let r = x.round();
        if (x - r).abs() < 1e-9 {
            return self.values[r as usize];
        }
        let n = x.floor() as usize;
        let t0 = n as f64 * h;
        let len = t - t0;
        let (gx, gw) = quad::gauss_legendre_unit(CELL_NODES);
        let mut part = C64::new(0.0, 0.0);
        for q in 0..CELL_NODES {
            let u = t0 + gx[q] * len;
            part += self.integrand.eval(u) * C64::from_polar(gw[q], self.omega * u);
        }
        self.values[n] + part * len
    }
}

/// All bath correlation data for one (bath, variational solution) pair.
#[derive(Clone, Debug)]
pub struct CorrelationTables {
    pub params: SpectralDensityParams,
    pub b_avg: f64,
    pub delta_r: f64,
    pub delta: f64,
    pub weak_frame: bool,
    pub opts: TableOptions,
    pub phi: KernelTable,
    pub k: KernelTable,
    pub czz: KernelTable,
    /// Cumulative integrals against exp(i omega u), omega in [0, Delta_R, -Delta_R].
    pub cum_k: [Cumulative; 3],
    pub cum_czz: [Cumulative; 3],
    /// Same for exp(-phi) - 1 and exp(phi) - 1.
    pub cum_em: [Cumulative; 3],
    pub cum_ep: [Cumulative; 3],
}

impl BathKernels for CorrelationTables {
    #[inline]
    fn phi(&self, tau: f64) -> C64 {
        self.phi.eval(tau)
    }
    #[inline]
    fn k(&self, tau: f64) -> C64 {
        self.k.eval(tau)
    }
    #[inline]
    fn czz(&self, tau: f64) -> C64 {
        self.czz.eval(tau)
    }
    #[inline]
    fn b_avg(&self) -> f64 {
        self.b_avg
    }
}

fn triple<T>(mut f: impl FnMut(usize) -> T) -> [T; 3] {
    [f(0), f(1), f(2)]
}

impl CorrelationTables {
    pub fn build(p: &SpectralDensityParams, vs: &VariationalSolution, opts: TableOptions) -> Result<Self> {
        p.validate()?;
        let grid = SpectralGrid::new(p, vs.delta_r, opts);
        let amp = |kind: BaseKernel| move |nu: f64| kind.amplitudes(nu, p, vs);
        let a_phi = amp(BaseKernel::Phi);
        let a_k = amp(BaseKernel::K);
        let a_czz = amp(BaseKernel::Czz);
        let mut tabs = grid.kernels(&[&a_phi, &a_k, &a_czz]).into_iter();
        let phi = tabs.next().unwrap();
        let k = tabs.next().unwrap();
        let czz = tabs.next().unwrap();
        let omegas = [0.0, vs.delta_r, -vs.delta_r];
        let wrap = |integrand: &KernelTable, vals: Vec<KernelTable>| -> [Cumulative; 3] {
            let mut it = vals.into_iter();
            triple(|i| Cumulative { integrand: integrand.clone(), omega: omegas[i], values: it.next().unwrap().values })
        };
        let cum_k = wrap(&k, grid.cumulative(&a_k, &omegas));
        let cum_czz = wrap(&czz, grid.cumulative(&a_czz, &omegas));
        let map = |sign: f64| KernelTable {
            dtau: phi.dtau,
            values: phi.values.iter().map(|v| (sign * v).exp() - 1.0).collect(),
        };
        let em = map(-1.0);
        let ep = map(1.0);
        let cum_em = triple(|i| Cumulative::by_time_quadrature(em.clone(), omegas[i]));
        let cum_ep = triple(|i| Cumulative::by_time_quadrature(ep.clone(), omegas[i]));
        Ok(Self {
            params: *p,
            b_avg: vs.b_avg,
            delta_r: vs.delta_r,
            delta: vs.delta,
            weak_frame: vs.fixed_f == Some(0.0),
            opts,
            phi,
            k,
            czz,
            cum_k,
            cum_czz,
            cum_em,
            cum_ep,
        })
    }

    /// Tables sampled from arbitrary base kernels (e.g. a discrete bath);
    /// every cumulative integral is done in the time domain.
    pub fn from_kernels<K: BathKernels + ?Sized>(
        kern: &K,
        params: &SpectralDensityParams,
        vs: &VariationalSolution,
        opts: TableOptions,
    ) -> Self {
        let n = opts.n_tau();
        let sample = |f: &dyn Fn(f64) -> C64| KernelTable {
            dtau: opts.dtau,
            values: (0..n).map(|i| f(i as f64 * opts.dtau)).collect(),
        };
        let phi = sample(&|t| kern.phi(t));
        let k = sample(&|t| kern.k(t));
        let czz = sample(&|t| kern.czz(t));
        let omegas = [0.0, vs.delta_r, -vs.delta_r];
        let map = |sign: f64| KernelTable {
            dtau: phi.dtau,
            values: phi.values.iter().map(|v| (sign * v).exp() - 1.0).collect(),
        };
        let em = map(-1.0);
        let ep = map(1.0);
        Self {
            params: *params,
            b_avg: kern.b_avg(),
            delta_r: vs.delta_r,
            delta: vs.delta,
            weak_frame: vs.fixed_f == Some(0.0),
            opts,
            cum_k: triple(|i| Cumulative::by_time_quadrature(k.clone(), omegas[i])),
            cum_czz: triple(|i| Cumulative::by_time_quadrature(czz.clone(), omegas[i])),
            cum_em: triple(|i| Cumulative::by_time_quadrature(em.clone(), omegas[i])),
            cum_ep: triple(|i| Cumulative::by_time_quadrature(ep.clone(), omegas[i])),
            phi,
            k,
            czz,
        }
    }

    pub fn tau_grid(&self) -> Vec<f64> {
        (0..self.phi.values.len()).map(|n| n as f64 * self.phi.dtau).collect()
    }

    pub fn horizon(&self) -> f64 {
        self.phi.horizon()
    }

    /// C_ij(tau) = <B_i(tau) B_j(0)> in the reference state.
    pub fn corr_homogeneous(&self, i: Index, j: Index, tau: f64) -> C64 {
        let b = self.b_avg;
        algebra::expect(self, &[i.op(tau, b), j.op(0.0, b)])
    }

    /// psi(t), Zf(t) and Gamma_i(t) = <B_i(t)>_(lab thermal, |1>) - <B_i>.
    pub fn inhomog_scalars(&self, t: f64) -> (f64, f64, BTreeMap<Index, C64>) {
        let b = self.b_avg;
        let mut g = BTreeMap::new();
        for i in Index::ALL {
            let op = i.op(t, b);
            let v = algebra::expect_displaced(self, &[op], 1.0) - algebra::expect(self, &[op]);
            g.insert(i, v);
        }
        (self.psi(t), self.zf(t), g)
    }

    /// C^I_ij(t, s) = <B_i(t) B_j(s)>_(lab thermal, |1>) - C_ij(t - s).
    pub fn corr_inhomogeneous(&self, i: Index, j: Index, t: f64, s: f64) -> C64 {
        let b = self.b_avg;
        let ops = [i.op(t, b), j.op(s, b)];
        algebra::expect_displaced(self, &ops, 1.0) - algebra::expect(self, &ops)
    }

    /// C_ijk(t, s, tau) = <B_i(t) B_j(s) B_k(tau)> in the reference state.
    pub fn corr_three_time(&self, i: Index, j: Index, k: Index, t: f64, s: f64, tau: f64) -> C64 {
        let b = self.b_avg;
        algebra::expect(self, &[i.op(t, b), j.op(s, b), k.op(tau, b)])
    }

    /// int_0^{t_max} |C_ZZ(tau)| dtau on the table grid (Simpson).
    pub fn czz_weight(&self, t_max: f64) -> f64 {
        abs_simpson(&self.czz, t_max)
    }
}

fn abs_simpson(tab: &KernelTable, t_max: f64) -> f64 {
    let h = tab.dtau;
    let mut n = ((t_max / h).round() as usize).min(tab.values.len() - 1);
    if n % 2 == 1 {
        n -= 1;
    }
    let mut acc = 0.0;
    for m in 0..=n {
        let w = if m == 0 || m == n { 1.0 } else if m % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * tab.values[m].norm();
    }
    acc * h / 3.0
}

/// Same weight as [`CorrelationTables::czz_weight`] from the C_ZZ table
/// alone, without the other kernels and cumulative integrals.
pub fn czz_weight_only(p: &SpectralDensityParams, vs: &VariationalSolution, t_max: f64, opts: TableOptions) -> Result<f64> {
    p.validate()?;
    let opts = TableOptions { t_table: t_max, ..opts };
    let grid = SpectralGrid::new(p, vs.delta_r, opts);
    let amp = |nu: f64| BaseKernel::Czz.amplitudes(nu, p, vs);
    let tab = grid.kernels(&[&amp]).pop().expect("one table");
    Ok(abs_simpson(&tab, t_max))
}

/// Diagnostic of the residual coupling strength: int_0^{t_max} |C_ZZ|.
pub fn czz_weight_diagnostic(tables: &CorrelationTables, t_max: f64) -> f64 {
    tables.czz_weight(t_max)
}
