//! Finite-mode exact benchmark.
//!
//! The bath is replaced by N harmonic modes at Gauss nodes of the weight
//! J(nu) on [0, band] (couplings g_k^2 = quadrature weights), each truncated
//! to n_max quanta. The lab-frame Hamiltonian
//!
//!   H = (Delta/2) sigma_x + sigma_z sum_k g_k (b_k^dag + b_k) + sum_k nu_k b_k^dag b_k
//!
//! is propagated exactly (Chebyshev expansion of the propagator) for pure
//! initial states; thermal baths are handled as an ensemble over Fock
//! configurations: the heaviest configurations are enumerated exactly and
//! the remaining tail is sampled, which gives an unbiased estimate with a
//! standard error carried by the tail alone.

use std::collections::{BinaryHeap, HashSet};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bath::algebra::BathKernels;
use crate::bath::{spectral_density, SpectralDensityParams};
use crate::error::{Error, Result};
use crate::quad;
use crate::system::Op2;
use crate::variational::{finish, variational_response, VariationalOptions, VariationalSolution};

const Z0: C64 = C64 { re: 0.0, im: 0.0 };

/// Discrete bath: frequencies nu_k and couplings g_k.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BathModeSet {
    pub nu: Vec<f64>,
    pub g: Vec<f64>,
    pub band: f64,
    pub warnings: Vec<String>,
}

impl BathModeSet {
    pub fn len(&self) -> usize {
        self.nu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nu.is_empty()
    }

    /// 2 pi over the smallest spacing among 0 and the mode frequencies.
    pub fn recurrence_time(&self) -> f64 {
        let mut v = self.nu.clone();
        v.push(0.0);
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let gap = v.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        2.0 * std::f64::consts::PI / gap
    }
}

/// Gauss quadrature with weight J on [0, band] via Lanczos (with full
/// reorthogonalisation) on a fine Gauss-Legendre discretisation.
pub fn discretize_bath(p: &SpectralDensityParams, n_modes: usize, band: f64) -> Result<BathModeSet> {
    p.validate()?;
    if n_modes == 0 {
        return Err(Error::Domain("mode count must be at least 1".into()));
    }
    if !(band > 0.0) {
        return Err(Error::Domain(format!("band must be positive, got {band}")));
    }
    let mut warnings = Vec::new();
    if band < p.nu_c {
        warnings.push(format!("band {band} below nu_c {}: spectrum under-covered", p.nu_c));
    }
    let (gx, gw) = quad::gauss_legendre_unit(16);
    let panels = 400;
    let h = band / panels as f64;
    let mut x = Vec::with_capacity(panels * 16);
    let mut w = Vec::with_capacity(panels * 16);
    for k in 0..panels {
        for q in 0..16 {
            let nu = (k as f64 + gx[q]) * h;
            x.push(nu);
            w.push(gw[q] * h * spectral_density(nu, p)?);
        }
    }
    let mu0: f64 = w.iter().sum();
    // Lanczos on diag(x) with starting vector sqrt(w).
    let m = x.len();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut q: Vec<f64> = w.iter().map(|v| (v / mu0).sqrt()).collect();
    let mut alpha = Vec::new();
    let mut beta = Vec::new();
    for j in 0..n_modes {
        let mut r: Vec<f64> = (0..m).map(|i| x[i] * q[i]).collect();
        let a: f64 = (0..m).map(|i| q[i] * r[i]).sum();
        alpha.push(a);
        basis.push(q.clone());
        for _ in 0..2 {
            for b in &basis {
                let c: f64 = (0..m).map(|i| b[i] * r[i]).sum();
                for i in 0..m {
                    r[i] -= c * b[i];
                }
            }
        }
        if j + 1 == n_modes {
            break;
        }
        let nb = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nb < 1e-300 {
            return Err(Error::Numerical("Lanczos breakdown while discretising the bath".into()));
        }
        beta.push(nb);
        q = r.iter().map(|v| v / nb).collect();
    }
    let mut jm = DMatrix::<f64>::zeros(n_modes, n_modes);
    for i in 0..n_modes {
        jm[(i, i)] = alpha[i];
        if i + 1 < n_modes {
            jm[(i, i + 1)] = beta[i];
            jm[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(jm);
    let mut modes: Vec<(f64, f64)> =
        (0..n_modes).map(|k| (eig.eigenvalues[k], mu0 * eig.eigenvectors[(0, k)].powi(2))).collect();
    modes.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Ok(BathModeSet {
        nu: modes.iter().map(|m| m.0).collect(),
        g: modes.iter().map(|m| m.1.sqrt()).collect(),
        band,
        warnings,
    })
}

/// Base kernels of a discrete bath under a variational displacement
/// f_k = F(nu_k) g_k.
#[derive(Clone, Debug)]
pub struct DiscreteBath {
    pub nu: Vec<f64>,
    pub g: Vec<f64>,
    pub f: Vec<f64>,
    pub beta: f64,
    pub b: f64,
}

impl DiscreteBath {
    pub fn new(modes: &BathModeSet, vs: &VariationalSolution) -> Self {
        let f: Vec<f64> = modes.nu.iter().zip(&modes.g).map(|(&nu, &g)| vs.f(nu) * g).collect();
        Self::with_displacements(modes, f, vs.beta)
    }

    pub fn with_displacements(modes: &BathModeSet, f: Vec<f64>, beta: f64) -> Self {
        let mut out = Self { nu: modes.nu.clone(), g: modes.g.clone(), f, beta, b: 1.0 };
        out.b = (-0.5 * out.phi(0.0).re).exp();
        out
    }

    fn coth(&self, nu: f64) -> f64 {
        1.0 / (0.5 * self.beta * nu).tanh()
    }
}

impl BathKernels for DiscreteBath {
    fn phi(&self, tau: f64) -> C64 {
        let mut acc = Z0;
        for k in 0..self.nu.len() {
            let (s, c) = (self.nu[k] * tau).sin_cos();
            acc += 4.0 * (self.f[k] / self.nu[k]).powi(2) * C64::new(self.coth(self.nu[k]) * c, -s);
        }
        acc
    }
    fn k(&self, tau: f64) -> C64 {
        let mut acc = Z0;
        for k in 0..self.nu.len() {
            let (s, c) = (self.nu[k] * tau).sin_cos();
            let a = -2.0 * self.f[k] * (self.g[k] - self.f[k]) / self.nu[k];
            acc += a * C64::new(c, -self.coth(self.nu[k]) * s);
        }
        acc
    }
    fn czz(&self, tau: f64) -> C64 {
        let mut acc = Z0;
        for k in 0..self.nu.len() {
            let (s, c) = (self.nu[k] * tau).sin_cos();
            acc += (self.g[k] - self.f[k]).powi(2) * C64::new(self.coth(self.nu[k]) * c, -s);
        }
        acc
    }
    fn b_avg(&self) -> f64 {
        self.b
    }
}

/// Self-consistent variational solution for the discrete bath: the same
/// damped iteration as the continuum solver with the frequency integral
/// replaced by the mode sum.
pub fn solve_discrete_variational(modes: &BathModeSet, delta: f64, beta: f64, opts: &VariationalOptions) -> Result<VariationalSolution> {
    let fc = |delta_r: f64| {
        let e: f64 = modes
            .nu
            .iter()
            .zip(&modes.g)
            .map(|(&nu, &g)| {
                let f = variational_response(nu, delta_r, beta);
                g * g * f * f / (nu * nu) / (0.5 * beta * nu).tanh()
            })
            .sum();
        (-2.0 * e).exp()
    };
    let mut b = opts.seed;
    for it in 1..=opts.max_iter {
        let next = (1.0 - opts.mixing) * b + opts.mixing * fc(b * delta);
        if (next - b).abs() < opts.tol {
            return Ok(finish(next, delta, beta, it));
        }
        b = next;
    }
    Err(Error::Numerical(format!("discrete variational iteration did not converge in {} steps", opts.max_iter)))
}

/// Truncated Fock space of N modes with n_max quanta each, times the spin.
#[derive(Clone, Debug)]
pub struct FockSpace {
    pub n_modes: usize,
    pub n_max: usize,
    /// Number of bath basis states (n_max + 1)^N.
    pub m: usize,
    pub strides: Vec<usize>,
    occ: Vec<u8>,
}

impl FockSpace {
    pub fn new(n_modes: usize, n_max: usize) -> Self {
        let d = n_max + 1;
        let m = d.pow(n_modes as u32);
        let strides: Vec<usize> = (0..n_modes).map(|k| d.pow(k as u32)).collect();
        let mut occ = vec![0u8; m * n_modes];
        for idx in 0..m {
            for k in 0..n_modes {
                occ[idx * n_modes + k] = ((idx / strides[k]) % d) as u8;
            }
        }
        Self { n_modes, n_max, m, strides, occ }
    }

    pub fn dim(&self) -> usize {
        2 * self.m
    }

    pub fn occupation(&self, idx: usize, k: usize) -> usize {
        self.occ[idx * self.n_modes + k] as usize
    }

    pub fn index(&self, config: &[u8]) -> usize {
        config.iter().zip(&self.strides).map(|(&n, &s)| n as usize * s).sum()
    }
}

/// Lab-frame Hamiltonian on a truncated Fock space. State vectors are
/// ordered spin-major: amplitude of |s> (x) |n> at s * m + index(n).
#[derive(Clone, Debug)]
pub struct LabHamiltonian {
    pub space: FockSpace,
    pub nu: Vec<f64>,
    pub g: Vec<f64>,
    pub delta: f64,
    energy: Vec<f64>,
    sqrt_n: Vec<f64>,
}

impl LabHamiltonian {
    pub fn new(modes: &BathModeSet, n_max: usize, delta: f64) -> Self {
        let space = FockSpace::new(modes.len(), n_max);
        let energy = (0..space.m)
            .map(|idx| (0..space.n_modes).map(|k| modes.nu[k] * space.occupation(idx, k) as f64).sum())
            .collect();
        let sqrt_n = (0..=n_max + 1).map(|n| (n as f64).sqrt()).collect();
        Self { space, nu: modes.nu.clone(), g: modes.g.clone(), delta, energy, sqrt_n }
    }

    pub fn with_delta(&self, delta: f64) -> Self {
        Self { delta, ..self.clone() }
    }

    /// y = H x.
    pub fn apply(&self, x: &[C64], y: &mut [C64]) {
        let m = self.space.m;
        let nm = self.space.n_modes;
        let nmax = self.space.n_max;
        let half = 0.5 * self.delta;
        for s in 0..2 {
            let sz = if s == 0 { 1.0 } else { -1.0 };
            let off = s * m;
            let other = (1 - s) * m;
            for idx in 0..m {
                let mut acc = x[off + idx] * self.energy[idx] + x[other + idx] * half;
                let mut coup = Z0;
                for k in 0..nm {
                    let n = self.space.occ[idx * nm + k] as usize;
                    let st = self.space.strides[k];
                    if n > 0 {
                        coup += x[off + idx - st] * (self.g[k] * self.sqrt_n[n]);
                    }
                    if n < nmax {
                        coup += x[off + idx + st] * (self.g[k] * self.sqrt_n[n + 1]);
                    }
                }
                acc += coup * sz;
                y[off + idx] = acc;
            }
        }
    }

    /// Gershgorin enclosure of the spectrum.
    pub fn spectral_bounds(&self) -> (f64, f64) {
        let e_max = self.energy.iter().cloned().fold(0.0, f64::max);
        let off: f64 = 0.5 * self.delta.abs()
            + self.g.iter().map(|g| 2.0 * g.abs() * self.sqrt_n[self.space.n_max]).sum::<f64>();
        (-off, e_max + off)
    }

    pub fn expectation(&self, x: &[C64]) -> f64 {
        let mut y = vec![Z0; x.len()];
        self.apply(x, &mut y);
        x.iter().zip(&y).map(|(a, b)| (a.conj() * b).re).sum()
    }
}

/// Bessel functions J_0..J_n(x) by Miller's downward recurrence.
fn bessel_j_all(n: usize, x: f64) -> Vec<f64> {
    if x == 0.0 {
        let mut v = vec![0.0; n + 1];
        v[0] = 1.0;
        return v;
    }
    let start = 2 * ((n.max(x as usize) + 15 + (x.sqrt() * 10.0) as usize) / 2);
    let mut j = vec![0.0; start + 2];
    j[start + 1] = 0.0;
    j[start] = 1e-300;
    for k in (1..=start).rev() {
        j[k - 1] = 2.0 * k as f64 / x * j[k] - j[k + 1];
        if j[k - 1].abs() > 1e250 {
            for v in j.iter_mut().skip(k - 1) {
                *v *= 1e-250;
            }
        }
    }
    let norm = j[0] + 2.0 * j.iter().skip(2).step_by(2).sum::<f64>();
    j.truncate(n + 1);
    j.iter().map(|v| v / norm).collect()
}

/// Propagates x by exp(-i H dt) with a Chebyshev expansion.
pub fn chebyshev_step(h: &LabHamiltonian, x: &[C64], dt: f64) -> Vec<C64> {
    let (lo, hi) = h.spectral_bounds();
    let c = 0.5 * (hi + lo);
    let r = 0.5 * (hi - lo);
    let z = r * dt;
    let terms = (z + 10.0 * z.cbrt() + 20.0).ceil() as usize;
    let jb = bessel_j_all(terms, z);
    let n = x.len();
    let mut scratch = vec![Z0; n];
    // Normalised operator H' = (H - c)/r applied into out.
    let apply_scaled = |v: &[C64], out: &mut [C64], scratch: &mut [C64]| {
        h.apply(v, scratch);
        for i in 0..n {
            out[i] = (scratch[i] - v[i] * c) / r;
        }
    };
    let mut t_prev = x.to_vec();
    let mut t_cur = vec![Z0; n];
    apply_scaled(&t_prev, &mut t_cur, &mut scratch);
    let mut acc: Vec<C64> = t_prev.iter().map(|v| v * jb[0]).collect();
    let mi = C64::new(0.0, -1.0);
    let mut phase = mi;
    for i in 0..n {
        acc[i] += t_cur[i] * (phase * 2.0 * jb[1]);
    }
    let mut t_next = vec![Z0; n];
    for k in 2..=terms {
        apply_scaled(&t_cur, &mut t_next, &mut scratch);
        phase *= mi;
        let coef = phase * 2.0 * jb[k];
        for i in 0..n {
            t_next[i] = t_next[i] * 2.0 - t_prev[i];
            acc[i] += t_next[i] * coef;
        }
        std::mem::swap(&mut t_prev, &mut t_cur);
        std::mem::swap(&mut t_cur, &mut t_next);
        if jb[k].abs() < 1e-17 && k as f64 > z {
            break;
        }
    }
    let g = C64::from_polar(1.0, -c * dt);
    acc.iter().map(|v| v * g).collect()
}

/// Initial bath preparation of the oracle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BathPrep {
    /// Lab-frame Gibbs state of the free bath, uncorrelated with the spin.
    Thermal,
    /// Gibbs state displaced conditionally on the spin, exp(eta S) tau exp(-eta S)
    /// with S = sum_k (f_k/nu_k)(b_k^dag - b_k) and eta = +1 for |1>, -1 for |0>.
    /// Requires a diagonal initial spin state.
    DisplacedThermal { f: Vec<f64> },
    /// Thermal bath evolved for t_relax with the tunnelling term removed.
    Relax { t_relax: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleOptions {
    pub n_max: usize,
    pub dt: f64,
    /// Maximum state-vector amplitudes (2 (n_max + 1)^N).
    pub budget: usize,
    /// Configurations are enumerated exactly until this Gibbs weight is covered ...
    pub exact_weight: f64,
    /// ... or this many have been taken.
    pub max_exact: usize,
    /// Samples drawn from the remaining tail when its weight exceeds
    /// tail_threshold; below that the tail weight is reported as a bias bound.
    pub tail_samples: usize,
    pub tail_threshold: f64,
    pub seed: u64,
    /// Time of the sigma_x kick for the two-time hook, if any.
    pub kick_time: Option<f64>,
    pub enforce_recurrence: bool,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            n_max: 4,
            dt: 0.02,
            budget: 2_000_000,
            exact_weight: 0.9995,
            max_exact: 48,
            tail_samples: 16,
            tail_threshold: 1e-3,
            seed: 7,
            kick_time: None,
            enforce_recurrence: true,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleTrajectory {
    pub times: Vec<f64>,
    pub sigma_z: Vec<f64>,
    pub sigma_x: Vec<f64>,
    pub stderr_z: Vec<f64>,
    pub stderr_x: Vec<f64>,
    /// <sigma_x(t_kick + tau) sigma_x(t_kick)> on tau = times, when requested.
    pub two_time: Option<Vec<C64>>,
    pub recurrence_time: f64,
    pub exact_configs: usize,
    pub tail_weight: f64,
    pub max_norm_defect: f64,
    pub max_energy_drift: f64,
}

/// Fock configurations ordered by Gibbs weight.
fn heaviest_configs(probs: &[Vec<f64>], target: f64, max_count: usize) -> Vec<(Vec<u8>, f64)> {
    #[derive(PartialEq)]
    struct Item(f64, Vec<u8>);
    impl Eq for Item {}
    impl PartialOrd for Item {
        fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(o))
        }
    }
    impl Ord for Item {
        fn cmp(&self, o: &Self) -> std::cmp::Ordering {
            self.0.partial_cmp(&o.0).unwrap_or(std::cmp::Ordering::Equal)
        }
    }
    let weight = |c: &[u8]| c.iter().enumerate().map(|(k, &n)| probs[k][n as usize]).product::<f64>();
    let start = vec![0u8; probs.len()];
    let mut heap = BinaryHeap::new();
    let mut seen = HashSet::new();
    heap.push(Item(weight(&start), start.clone()));
    seen.insert(start);
    let mut out = Vec::new();
    let mut covered = 0.0;
    while let Some(Item(w, c)) = heap.pop() {
        covered += w;
        for k in 0..c.len() {
            if (c[k] as usize) + 1 < probs[k].len() {
                let mut nc = c.clone();
                nc[k] += 1;
                if seen.insert(nc.clone()) {
                    heap.push(Item(weight(&nc), nc));
                }
            }
        }
        out.push((c, w));
        if covered >= target || out.len() >= max_count {
            break;
        }
    }
    out
}

fn displacement_matrix(n_max: usize, amp: f64) -> DMatrix<f64> {
    // exp(amp (b^dag - b)) in the truncated space.
    let d = n_max + 1;
    let mut gen = DMatrix::<f64>::zeros(d, d);
    for n in 0..n_max {
        let s = ((n + 1) as f64).sqrt() * amp;
        gen[(n + 1, n)] = s;
        gen[(n, n + 1)] = -s;
    }
    gen.exp()
}

/// Pure initial state: spin amplitudes (x) (optionally displaced) Fock configuration.
fn initial_state(space: &FockSpace, spin: [C64; 2], config: &[u8], disp: Option<(&[DMatrix<f64>], &[DMatrix<f64>])>) -> Vec<C64> {
    let m = space.m;
    let mut x = vec![Z0; 2 * m];
    match disp {
        None => {
            let idx = space.index(config);
            x[idx] = spin[0];
            x[m + idx] = spin[1];
        }
        Some((d0, d1)) => {
            for (s, mats) in [(0usize, d0), (1usize, d1)] {
                if spin[s] == Z0 {
                    continue;
                }
                // Product state: column config[k] of each mode's displacement.
                for idx in 0..m {
                    let mut a = 1.0;
                    for k in 0..space.n_modes {
                        a *= mats[k][(space.occupation(idx, k), config[k] as usize)];
                        if a == 0.0 {
                            break;
                        }
                    }
                    x[s * m + idx] = spin[s] * a;
                }
            }
        }
    }
    x
}

struct Observed {
    z: Vec<f64>,
    x: Vec<f64>,
    two: Option<Vec<C64>>,
    norm_defect: f64,
    energy_drift: f64,
}

fn sigma_x_of(psi: &[C64], m: usize) -> f64 {
    2.0 * (0..m).map(|i| (psi[i].conj() * psi[m + i]).re).sum::<f64>()
}

fn sigma_z_of(psi: &[C64], m: usize) -> f64 {
    (0..m).map(|i| psi[i].norm_sqr() - psi[m + i].norm_sqr()).sum()
}

fn flip(psi: &[C64], m: usize) -> Vec<C64> {
    let mut o = psi[m..].to_vec();
    o.extend_from_slice(&psi[..m]);
    o
}

fn run_member(h: &LabHamiltonian, mut psi: Vec<C64>, times: &[f64], prep: &BathPrep, opts: &OracleOptions) -> Observed {
    let m = h.space.m;
    if let BathPrep::Relax { t_relax } = prep {
        let h0 = h.with_delta(0.0);
        let steps = (t_relax / opts.dt).ceil().max(1.0) as usize;
        let dt = t_relax / steps as f64;
        for _ in 0..steps {
            psi = chebyshev_step(&h0, &psi, dt);
        }
    }
    let norm0: f64 = psi.iter().map(|v| v.norm_sqr()).sum();
    let e0 = h.expectation(&psi);
    let mut out = Observed { z: Vec::new(), x: Vec::new(), two: None, norm_defect: 0.0, energy_drift: 0.0 };
    let advance = |psi: Vec<C64>, from: f64, to: f64| -> Vec<C64> {
        let span = to - from;
        if span <= 0.0 {
            return psi;
        }
        let steps = (span / opts.dt).ceil() as usize;
        let mut p = psi;
        for _ in 0..steps {
            p = chebyshev_step(h, &p, span / steps as f64);
        }
        p
    };
    let start = psi.clone();
    let mut t = 0.0;
    for &tn in times {
        psi = advance(psi, t, tn);
        t = tn;
        out.z.push(sigma_z_of(&psi, m));
        out.x.push(sigma_x_of(&psi, m));
        let nrm: f64 = psi.iter().map(|v| v.norm_sqr()).sum();
        out.norm_defect = out.norm_defect.max((nrm - norm0).abs());
        out.energy_drift = out.energy_drift.max((h.expectation(&psi) - e0).abs());
    }
    if let Some(tk) = opts.kick_time {
        // <sigma_x(tk + tau) sigma_x(tk)> = <a(tau)| sigma_x |b(tau)> with a = U psi, b = U sigma_x psi.
        let mut a = advance(start, 0.0, tk);
        let mut b = flip(&a, m);
        let mut vals = Vec::new();
        let mut tau = 0.0;
        for &tn in times {
            a = advance(a, tau, tn);
            b = advance(b, tau, tn);
            tau = tn;
            let sb = flip(&b, m);
            vals.push(a.iter().zip(&sb).map(|(x, y)| x.conj() * y).sum());
        }
        out.two = Some(vals);
    }
    out
}

/// Exact reduced dynamics of rho0_system with the given bath preparation,
/// reported on t_grid (times after any relaxation stage).
pub fn exact_evolve(
    modes: &BathModeSet,
    delta: f64,
    beta: f64,
    rho0: &Op2,
    prep: &BathPrep,
    t_grid: &[f64],
    opts: &OracleOptions,
) -> Result<OracleTrajectory> {
    let n = modes.len();
    let dim = 2.0 * ((opts.n_max + 1) as f64).powi(n as i32);
    if dim > opts.budget as f64 {
        let mut n_fit = n;
        while n_fit > 1 && 2.0 * ((opts.n_max + 1) as f64).powi(n_fit as i32) > opts.budget as f64 {
            n_fit -= 1;
        }
        return Err(Error::Domain(format!(
            "Hilbert dimension {dim:.0} exceeds the budget {}; try N <= {n_fit} at n_max = {}",
            opts.budget, opts.n_max
        )));
    }
    let t_rec = modes.recurrence_time();
    let t_end = t_grid.iter().cloned().fold(0.0, f64::max).max(opts.kick_time.map_or(0.0, |k| k + t_grid.last().copied().unwrap_or(0.0)));
    if opts.enforce_recurrence && t_end > t_rec {
        return Err(Error::Domain(format!("requested time {t_end} exceeds the recurrence time {t_rec:.3}")));
    }
    if rho0.hermiticity_defect() > 1e-12 || (rho0.trace().re - 1.0).abs() > 1e-12 {
        return Err(Error::Config("initial spin state must be Hermitian with unit trace".into()));
    }
    if let BathPrep::DisplacedThermal { f } = prep {
        crate::tcl2::check_diagonal(rho0)?;
        if f.len() != n {
            return Err(Error::Config(format!("{} displacements for {n} modes", f.len())));
        }
    }
    let h = LabHamiltonian::new(modes, opts.n_max, delta);
    let space = &h.space;
    // Gibbs weights of the truncated modes.
    let probs: Vec<Vec<f64>> = modes
        .nu
        .iter()
        .map(|&nu| {
            let w: Vec<f64> = (0..=opts.n_max).map(|k| (-beta * nu * k as f64).exp()).collect();
            let z: f64 = w.iter().sum();
            w.iter().map(|v| v / z).collect()
        })
        .collect();
    let disp = match prep {
        BathPrep::DisplacedThermal { f } => {
            let d0: Vec<DMatrix<f64>> = (0..n).map(|k| displacement_matrix(opts.n_max, -f[k] / modes.nu[k])).collect();
            let d1: Vec<DMatrix<f64>> = (0..n).map(|k| displacement_matrix(opts.n_max, f[k] / modes.nu[k])).collect();
            Some((d0, d1))
        }
        _ => None,
    };
    // Spin state as an ensemble of eigenvectors.
    let spins = spin_ensemble(rho0);
    let exact = heaviest_configs(&probs, opts.exact_weight, opts.max_exact);
    let covered: f64 = exact.iter().map(|c| c.1).sum();
    let tail_weight = (1.0 - covered).max(0.0);
    let exact_set: HashSet<Vec<u8>> = exact.iter().map(|c| c.0.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut tail = Vec::new();
    if tail_weight > opts.tail_threshold {
        let mut guard = 0;
        while tail.len() < opts.tail_samples && guard < 1_000_000 {
            guard += 1;
            let c: Vec<u8> = probs
                .iter()
                .map(|p| {
                    let u: f64 = rng.gen();
                    let mut acc = 0.0;
                    for (k, v) in p.iter().enumerate() {
                        acc += v;
                        if u < acc {
                            return k as u8;
                        }
                    }
                    (p.len() - 1) as u8
                })
                .collect();
            if !exact_set.contains(&c) {
                tail.push(c);
            }
        }
    }
    let nt = t_grid.len();
    let member = |config: &[u8]| -> Observed {
        let mut acc: Option<Observed> = None;
        for (p, spin) in &spins {
            let d = disp.as_ref().map(|(a, b)| (a.as_slice(), b.as_slice()));
            let psi = initial_state(space, *spin, config, d);
            let o = run_member(&h, psi, t_grid, prep, opts);
            acc = Some(match acc {
                None => scale_obs(o, *p),
                Some(a) => add_obs(a, scale_obs(o, *p)),
            });
        }
        acc.unwrap()
    };
    let mut z = vec![0.0; nt];
    let mut x = vec![0.0; nt];
    let mut two: Option<Vec<C64>> = opts.kick_time.map(|_| vec![Z0; nt]);
    let mut norm_defect = 0.0f64;
    let mut energy_drift = 0.0f64;
    for (c, w) in &exact {
        let o = member(c);
        for i in 0..nt {
            z[i] += w * o.z[i];
            x[i] += w * o.x[i];
        }
        if let (Some(t), Some(ot)) = (two.as_mut(), o.two.as_ref()) {
            for i in 0..nt {
                t[i] += ot[i] * *w;
            }
        }
        norm_defect = norm_defect.max(o.norm_defect);
        energy_drift = energy_drift.max(o.energy_drift);
    }
    let mut stderr_z = vec![0.0; nt];
    let mut stderr_x = vec![0.0; nt];
    if !tail.is_empty() {
        let runs: Vec<Observed> = tail.iter().map(|c| member(c)).collect();
        let k = runs.len() as f64;
        for i in 0..nt {
            let (mz, sz) = mean_and_stderr(runs.iter().map(|r| r.z[i]), k);
            let (mx, sx) = mean_and_stderr(runs.iter().map(|r| r.x[i]), k);
            z[i] += tail_weight * mz;
            x[i] += tail_weight * mx;
            stderr_z[i] = tail_weight * sz;
            stderr_x[i] = tail_weight * sx;
            if let Some(t) = two.as_mut() {
                let mean: C64 = runs.iter().map(|r| r.two.as_ref().unwrap()[i]).sum::<C64>() / k;
                t[i] += mean * tail_weight;
            }
        }
        for r in &runs {
            norm_defect = norm_defect.max(r.norm_defect);
            energy_drift = energy_drift.max(r.energy_drift);
        }
    } else if tail_weight > 0.0 {
        // Unsampled tail: renormalise over the enumerated configurations and
        // bound the bias by the tail weight (observables are bounded by 1).
        for i in 0..nt {
            z[i] /= covered;
            x[i] /= covered;
            if let Some(t) = two.as_mut() {
                t[i] /= covered;
            }
        }
        stderr_z.iter_mut().for_each(|v| *v = tail_weight);
        stderr_x.iter_mut().for_each(|v| *v = tail_weight);
    }
    Ok(OracleTrajectory {
        times: t_grid.to_vec(),
        sigma_z: z,
        sigma_x: x,
        stderr_z,
        stderr_x,
        two_time: two,
        recurrence_time: t_rec,
        exact_configs: exact.len(),
        tail_weight,
        max_norm_defect: norm_defect,
        max_energy_drift: energy_drift,
    })
}

fn mean_and_stderr(v: impl Iterator<Item = f64> + Clone, k: f64) -> (f64, f64) {
    let mean = v.clone().sum::<f64>() / k;
    if k < 2.0 {
        return (mean, f64::NAN);
    }
    let var = v.map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

fn scale_obs(mut o: Observed, p: f64) -> Observed {
    o.z.iter_mut().for_each(|v| *v *= p);
    o.x.iter_mut().for_each(|v| *v *= p);
    if let Some(t) = o.two.as_mut() {
        t.iter_mut().for_each(|v| *v *= p);
    }
    o
}

fn add_obs(mut a: Observed, b: Observed) -> Observed {
    for i in 0..a.z.len() {
        a.z[i] += b.z[i];
        a.x[i] += b.x[i];
    }
    if let (Some(t), Some(u)) = (a.two.as_mut(), b.two.as_ref()) {
        for i in 0..t.len() {
            t[i] += u[i];
        }
    }
    a.norm_defect = a.norm_defect.max(b.norm_defect);
    a.energy_drift = a.energy_drift.max(b.energy_drift);
    a
}

/// rho0 = sum_i p_i |psi_i><psi_i| with p_i > 0.
fn spin_ensemble(rho0: &Op2) -> Vec<(f64, [C64; 2])> {
    let a = rho0.0[0][0].re;
    let d = rho0.0[1][1].re;
    let b = rho0.0[0][1];
    if b.norm() < 1e-15 {
        let mut v = Vec::new();
        if a > 0.0 {
            v.push((a, [C64::new(1.0, 0.0), Z0]));
        }
        if d > 0.0 {
            v.push((d, [Z0, C64::new(1.0, 0.0)]));
        }
        return v;
    }
    let [l0, l1] = rho0.hermitian_eigenvalues();
    let mut v = Vec::new();
    for l in [l0, l1] {
        if l <= 1e-15 {
            continue;
        }
        // (rho - l) u = 0 with u = (b, l - a).
        let u = [b, C64::new(l - a, 0.0)];
        let nrm = (u[0].norm_sqr() + u[1].norm_sqr()).sqrt();
        v.push((l, [u[0] / nrm, u[1] / nrm]));
    }
    v
}
