//! Dipole two-time correlations after relaxation and the linear-response
//! spectrum A(w) = 2 Re int_0^inf exp(i w tau) S1(tau) dtau.
//!
//! The lab-frame dipole is sigma_x = sum_a s_a B_a with s_+ = sigma paired
//! with B_+ and s_- = sigma^dag with B_-. It is applied at tau = 0 to the
//! relaxed total state. The corrected response propagates the reduced kicked
//! operator under the TCL2 generator (memory restarted at the kick) plus the
//! drive of the correlated part of the kicked state, and adds the irrelevant
//! part of the two-time expectation. The uncorrected response factorises
//! bath and system: sum_ab <B_a(tau) B_b> <s_a(tau) s_b> with a standard
//! regression under the saturated generator.
//!
//! The fourth-order correction to the irrelevant part is not included.

use nalgebra::{DMatrix, Matrix4};
use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::bath::correlations::CorrelationTables;
use crate::error::{Error, Result};
use crate::observables::{correlation_operators, Greek};
use crate::system::{interaction_picture_op, Op2, SuperOp};
use crate::tcl2::{
    base_index, base_moments, history_integrals, interpolate_series, ladder_kernel, past_integrals, AtomOp, Generator,
    History, Ladder, Moments, PastHistory, Preparation,
};

const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionOptions {
    pub dt: f64,
    /// May exceed the table horizon; kernels are taken as decayed beyond it.
    pub tau_max: f64,
    /// Delay beyond which the three-point history terms are dropped; also the
    /// length of the pre-kick history they integrate over.
    pub history_horizon: f64,
    /// History grid step in units of the table step.
    pub history_stride: usize,
    /// Keep every n-th RK4 step in the output record.
    pub output_stride: usize,
    pub steady_tol: f64,
    pub steady_t_max: f64,
}

impl Default for RegressionOptions {
    fn default() -> Self {
        Self {
            dt: 0.01,
            tau_max: 4000.0,
            history_horizon: 10.0,
            history_stride: 2,
            output_stride: 10,
            steady_tol: 1e-10,
            steady_t_max: 1e6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseMode {
    Corrected,
    Uncorrected,
}

/// Schroedinger-picture generator with the memory integrals saturated at the
/// table horizon: -i[H_S, .] plus the TCL2 dissipator.
pub fn saturated_generator(tables: &CorrelationTables) -> SuperOp {
    let g = Generator::new(tables);
    let t = tables.horizon();
    let h = Op2::sigma_x().scale_re(0.5 * tables.delta_r);
    SuperOp::from_map(|x| (h * *x - *x * h).scale(-I) + g.dissipator(t, x))
}

fn to_matrix(s: &SuperOp) -> Matrix4<C64> {
    Matrix4::from_fn(|r, c| s.0[r][c])
}

fn apply(m: &Matrix4<C64>, x: &Op2) -> Op2 {
    let v = x.vec();
    let mut o = [C64::new(0.0, 0.0); 4];
    for r in 0..4 {
        for c in 0..4 {
            o[r] += m[(r, c)] * v[c];
        }
    }
    Op2::unvec(&o)
}

#[derive(Clone, Debug, Serialize)]
pub struct SteadyState {
    /// Populations and coherence rho_00, rho_11, rho_01.
    pub elements: [f64; 2],
    pub coherence: [f64; 2],
    #[serde(skip)]
    pub rho: Op2,
    /// Frobenius distance between the null-space and propagated states.
    pub method_gap: f64,
    /// Propagation time at which successive states differed by less than the tolerance.
    pub relax_time: f64,
    /// Two smallest singular values of the generator.
    pub singular_values: [f64; 2],
    /// More than one stationary state (no dissipation); rho is then the
    /// propagated maximally mixed state.
    pub degenerate: bool,
}

/// Stationary state of the saturated generator from its null space,
/// cross-checked by long-time propagation (repeated squaring of exp(L dt)).
pub fn steady_state(tables: &CorrelationTables, opts: &RegressionOptions) -> Result<SteadyState> {
    let gen = saturated_generator(tables);
    let m = DMatrix::from_fn(4, 4, |r, c| gen.0[r][c]);
    let svd = m.svd(true, true);
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let sv = [svd.singular_values[order[0]], svd.singular_values[order[1]]];
    let scale = svd.singular_values.max().max(1e-300);
    let degenerate = sv[1] < 1e-10 * scale;
    let v_t = svd.v_t.as_ref().ok_or_else(|| Error::Numerical("SVD failed".into()))?;
    let row = v_t.row(order[0]);
    let null = Op2::unvec(&[row[0].conj(), row[1].conj(), row[2].conj(), row[3].conj()]);
    let tr = null.trace();

    let mut p = (to_matrix(&gen) * C64::new(opts.dt, 0.0)).exp();
    let mut t = opts.dt;
    let mut x = Op2::identity().scale_re(0.5);
    let mut relax = f64::NAN;
    while t <= opts.steady_t_max {
        let next = apply(&p, &x);
        let d = (next - x).frobenius();
        x = next;
        if d < opts.steady_tol {
            relax = t;
            break;
        }
        p *= p;
        t *= 2.0;
    }
    if relax.is_nan() {
        return Err(Error::Numerical(format!("no stationary state reached by t = {}", opts.steady_t_max)));
    }
    let hermitian = |r: Op2| (r + r.dagger()).scale_re(0.5);
    let (rho, gap) = if degenerate || tr.norm() < 1e-14 {
        (hermitian(x), f64::NAN)
    } else {
        let r = hermitian(null.scale(1.0 / tr));
        let gap = (x - r).frobenius();
        if gap > 1e-8 {
            return Err(Error::Numerical(format!("null-space and propagated stationary states differ by {gap:.3e}")));
        }
        (r, gap)
    };
    Ok(SteadyState {
        elements: [rho.0[0][0].re, rho.0[1][1].re],
        coherence: [rho.0[0][1].re, rho.0[0][1].im],
        rho,
        method_gap: gap,
        relax_time: relax,
        singular_values: sv,
        degenerate,
    })
}

/// Reduced kicked operator
/// sum_a s_a (<B> rho - i (Psi_a rho - rho Theta_a)) with the first-order
/// correlations Psi_a, Theta_a of the relaxed state (history saturated).
pub fn qrt_initial_relevant(rho: &Op2, tables: &CorrelationTables) -> Op2 {
    let (l, r) = Generator::new(tables).lambdas(tables.horizon());
    let mut out = Op2::ZERO;
    for a in Greek::ALL {
        let k = a.ladder();
        out += a.system_op() * (rho.scale_re(tables.b_avg) - (l[k] * *rho - *rho * r[k]).scale(I));
    }
    out
}

/// int_tau^inf f(u) A_j(tau - u) du from m = M(inf) - M(tau).
fn rotated_tail(ladder: &Ladder, j: usize, m: &Moments, tau: f64) -> Op2 {
    let r = &ladder.rot[j];
    let (s, c) = (ladder.delta_r * tau).sin_cos();
    m.one * r.p + (m.cos * c + m.sin * s) * r.q + (m.cos * s - m.sin * c) * r.r
}

fn minus(a: &Moments, b: &Moments) -> Moments {
    Moments { one: a.one - b.one, cos: a.cos - b.cos, sin: a.sin - b.sin }
}

/// Lefts for the kicked histories: the ladder operators, then B_+, B_-.
fn kick_lefts(b: f64) -> [AtomOp; 5] {
    let l = AtomOp::ladder(b);
    [l[0], l[1], l[2], AtomOp::full(1), AtomOp::full(-1)]
}

/// Three-point history data of the kick, indexed by the kick sign (+, -).
#[derive(Clone, Debug)]
pub struct KickHistories {
    pub h: f64,
    pub horizon: f64,
    /// Bath left by the kick, B_b tau_R - <B> tau_R, evolved from 0 to tau.
    pub kicked: [History; 2],
    /// Pre-kick correlations, ladder lefts, two-point part removed.
    pub past_ladder: [PastHistory; 2],
    /// Pre-kick correlations, lefts B_+ and B_-.
    pub past_full: [PastHistory; 2],
}

impl KickHistories {
    pub fn build(tables: &CorrelationTables, opts: &RegressionOptions) -> Result<Self> {
        let stride = opts.history_stride.max(1);
        let h = stride as f64 * tables.opts.dtau;
        let horizon = opts.history_horizon.min(0.5 * tables.horizon());
        let n = (horizon / h).round() as usize;
        if n < 6 {
            return Err(Error::Config(format!("history horizon {horizon} too short for step {h}")));
        }
        let b = tables.b_avg;
        let lefts = kick_lefts(b);
        let kicked = [1i8, -1].map(|sg| history_integrals(tables, &Preparation::kick(tables, sg, n, stride), &lefts, n, stride));
        let past_ladder = [1i8, -1].map(|sg| past_integrals(tables, sg, &lefts[..3], true, n, n, stride));
        let past_full = [1i8, -1].map(|sg| past_integrals(tables, sg, &lefts[3..], false, n, n, stride));
        Ok(Self { h, horizon: n as f64 * h, kicked, past_ladder, past_full })
    }
}

/// Drive of the correlated part of the kicked state on the reduced regression.
///
/// The kicked bath gives the Gamma_ib, C^I_ijb terms; the pre-kick
/// correlations give three-point terms with pivot B_b(0). Their two-point
/// part b <B_i(tau) B_j(s)> sums over b to sigma_x and is integrated exactly
/// from the cumulative tables; the remainder lives on the history grid.
pub struct QrtDrive<'a> {
    tables: &'a CorrelationTables,
    ladder: Ladder,
    rho: Op2,
    mom_inf: [Moments; 4],
    h: f64,
    horizon: f64,
    grid: Vec<Op2>,
}

impl<'a> QrtDrive<'a> {
    pub fn new(tables: &'a CorrelationTables, rho: &Op2, hist: &KickHistories) -> Self {
        let ladder = Ladder::from_tables(tables);
        let n = hist.kicked[0].gamma[0].len();
        let grid = (0..n)
            .map(|k| {
                let tau = k as f64 * hist.h;
                let mut acc = Op2::ZERO;
                for beta in Greek::ALL {
                    let sb = beta.system_op();
                    let x = sb * *rho;
                    let kh = &hist.kicked[beta.ladder()];
                    let ph = &hist.past_ladder[beta.ladder()];
                    for i in 0..3 {
                        let a = ladder.at(i, tau);
                        acc += (kh.gamma[i][k] * I) * a.commutator(&x);
                        acc += a.commutator(&(kh.m[i][k] * x)) + (x * kh.n[i][k]).commutator(&a);
                        acc += a.commutator(&(sb * ph.p[i][k] * *rho)) - a.commutator(&(sb * *rho * ph.q[i][k]));
                    }
                }
                -acc
            })
            .collect();
        Self { tables, ladder, rho: *rho, mom_inf: base_moments(tables, tables.horizon()), h: hist.h, horizon: hist.horizon, grid }
    }

    /// Two-point part of the pre-kick drive:
    /// -sum_i ([A_i, sigma_x P_i rho] - [A_i, sigma_x rho Q_i]) with
    /// P_i = <B> sum_j int_tau^inf C_ij(u) A_j(tau - u) du and
    /// Q_i = <B> sum_j int_tau^inf C_ji(-u) A_j(tau - u) du.
    pub fn pair_part(&self, tau: f64) -> Op2 {
        let b = self.tables.b_avg;
        let mom = base_moments(self.tables, tau);
        let sx = Op2::sigma_x();
        let mut acc = Op2::ZERO;
        for i in 0..3 {
            let mut p = Op2::ZERO;
            let mut q = Op2::ZERO;
            for j in 0..3 {
                let (cf, base) = ladder_kernel(i, j, b);
                let k = base_index(base);
                p += rotated_tail(&self.ladder, j, &minus(&self.mom_inf[k], &mom[k]).scale(cf), tau);
                let (cf, base) = ladder_kernel(j, i, b);
                let k = base_index(base);
                q += rotated_tail(&self.ladder, j, &minus(&self.mom_inf[k], &mom[k]).conj().scale(cf), tau);
            }
            let a = self.ladder.at(i, tau);
            acc += a.commutator(&(sx * p * self.rho)) - a.commutator(&(sx * self.rho * q));
        }
        acc.scale_re(-b)
    }

    /// Grid part (kicked bath and three-point remainder), zero past the history horizon.
    pub fn history_part(&self, tau: f64) -> Op2 {
        if tau > self.horizon + 1e-12 {
            Op2::ZERO
        } else {
            interpolate_series(&self.grid, self.h, tau)
        }
    }

    pub fn eval(&self, tau: f64) -> Op2 {
        self.pair_part(tau) + self.history_part(tau)
    }
}

/// Two-time response on the delay grid.
#[derive(Clone, Debug, Serialize)]
pub struct ResponseRecord {
    pub mode: ResponseMode,
    pub tau: Vec<f64>,
    /// Full two-time expectation S(tau) = <sigma_x(tau) sigma_x(0)>.
    pub s: Vec<C64>,
    /// S1(tau) = Im S(tau).
    pub s1: Vec<f64>,
    /// Corrected mode only: the relevant part b tr[sigma_x X(tau)] and the
    /// irrelevant contributions (homogeneous, kicked bath, pre-kick history).
    pub terms: Option<ResponseTerms>,
    pub steady: SteadyState,
    pub history_horizon: f64,
    pub table_horizon: f64,
    pub fourth_order_term: &'static str,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ResponseTerms {
    pub relevant: Vec<C64>,
    pub homogeneous: Vec<C64>,
    pub kicked_bath: Vec<C64>,
    pub pre_kick: Vec<C64>,
}

impl ResponseTerms {
    /// Largest modulus of each irrelevant contribution.
    pub fn magnitudes(&self) -> [f64; 3] {
        let mx = |v: &[C64]| v.iter().fold(0.0f64, |a, z| a.max(z.norm()));
        [mx(&self.homogeneous), mx(&self.kicked_bath), mx(&self.pre_kick)]
    }
}

/// <B_a(tau) B_b(0)> = b^2 exp(-a b phi(tau)) for signs a, b.
fn displacement_pair(tables: &CorrelationTables, a: Greek, b: Greek, tau: f64) -> C64 {
    let sab = (a.sign() * b.sign()) as f64;
    tables.b_avg * tables.b_avg * (-sab * tables.phi.eval(tau)).exp()
}

fn check_grid(opts: &RegressionOptions) -> Result<usize> {
    if !(opts.dt > 0.0) || !(opts.tau_max > 0.0) || opts.output_stride == 0 {
        return Err(Error::Config(format!("invalid delay grid dt={} tau_max={}", opts.dt, opts.tau_max)));
    }
    Ok((opts.tau_max / opts.dt).round() as usize)
}

/// Dipole response S(tau) in the given mode, starting from the relaxed state.
pub fn response_function(tables: &CorrelationTables, mode: ResponseMode, opts: &RegressionOptions) -> Result<ResponseRecord> {
    let steady = steady_state(tables, opts)?;
    response_from_state(tables, mode, opts, steady)
}

pub fn response_from_state(
    tables: &CorrelationTables,
    mode: ResponseMode,
    opts: &RegressionOptions,
    steady: SteadyState,
) -> Result<ResponseRecord> {
    match mode {
        ResponseMode::Uncorrected => uncorrected(tables, opts, steady),
        ResponseMode::Corrected => corrected(tables, opts, steady),
    }
}

fn uncorrected(tables: &CorrelationTables, opts: &RegressionOptions, steady: SteadyState) -> Result<ResponseRecord> {
    let steps = check_grid(opts)?;
    let p = (to_matrix(&saturated_generator(tables)) * C64::new(opts.dt, 0.0)).exp();
    let mut x = [Op2::lower() * steady.rho, Op2::raise() * steady.rho];
    let (mut tau, mut s) = (Vec::new(), Vec::new());
    for n in 0..=steps {
        if n > 0 {
            x = [apply(&p, &x[0]), apply(&p, &x[1])];
        }
        if n % opts.output_stride != 0 {
            continue;
        }
        let t = n as f64 * opts.dt;
        let mut acc = C64::new(0.0, 0.0);
        for a in Greek::ALL {
            for b in Greek::ALL {
                acc += displacement_pair(tables, a, b, t) * a.system_op().expect(&x[b.ladder()]);
            }
        }
        tau.push(t);
        s.push(acc);
    }
    Ok(record(ResponseMode::Uncorrected, tables, opts, tau, s, None, steady))
}

fn record(
    mode: ResponseMode,
    tables: &CorrelationTables,
    opts: &RegressionOptions,
    tau: Vec<f64>,
    s: Vec<C64>,
    terms: Option<ResponseTerms>,
    steady: SteadyState,
) -> ResponseRecord {
    ResponseRecord {
        mode,
        s1: s.iter().map(|z| z.im).collect(),
        tau,
        s,
        terms,
        steady,
        history_horizon: opts.history_horizon,
        table_horizon: tables.horizon(),
        fourth_order_term: "omitted",
    }
}

fn corrected(tables: &CorrelationTables, opts: &RegressionOptions, steady: SteadyState) -> Result<ResponseRecord> {
    let steps = check_grid(opts)?;
    let hist = KickHistories::build(tables, opts)?;
    corrected_with(tables, opts, steady, &hist, steps)
}

/// Corrected response with precomputed kick histories.
pub fn corrected_with(
    tables: &CorrelationTables,
    opts: &RegressionOptions,
    steady: SteadyState,
    hist: &KickHistories,
    steps: usize,
) -> Result<ResponseRecord> {
    let rho = steady.rho;
    let dr = tables.delta_r;
    let gen = Generator::new(tables);
    let ladder = Ladder::from_tables(tables);
    let drive = QrtDrive::new(tables, &rho, hist);
    let rhs = |t: f64, x: &Op2| gen.apply_interaction(t, x) + drive.eval(t);
    let b = tables.b_avg;
    let kicked: [Op2; 2] = [Op2::lower() * rho, Op2::raise() * rho];

    let mut x = qrt_initial_relevant(&rho, tables);
    let mut terms = ResponseTerms::default();
    let (mut tau, mut s) = (Vec::new(), Vec::new());
    let h = opts.dt;
    for n in 0..=steps {
        let t = n as f64 * h;
        if n % opts.output_stride == 0 {
            if !x.frobenius().is_finite() {
                return Err(Error::Numerical(format!("regression diverged at tau = {t}")));
            }
            let sa: [Op2; 2] = [interaction_picture_op(&Op2::lower(), t, dr), interaction_picture_op(&Op2::raise(), t, dr)];
            let rel = Op2::sigma_x().expect(&x) * b;
            let mut hom = C64::new(0.0, 0.0);
            let mut kb = C64::new(0.0, 0.0);
            let mut pk = C64::new(0.0, 0.0);
            let within = t <= hist.horizon + 1e-12;
            for a in Greek::ALL {
                let ia = a.ladder();
                let (psi, theta) = correlation_operators(tables, &ladder, a, t);
                hom += -I * sa[ia].expect(&(psi * x - x * theta));
                for bt in Greek::ALL {
                    let ib = bt.ladder();
                    let y = kicked[ib];
                    let gamma = displacement_pair(tables, a, bt, t) - b * b;
                    kb += gamma * sa[ia].expect(&y);
                    if within {
                        let kh = &hist.kicked[ib];
                        let m = interpolate_series(&kh.m[3 + ia], hist.h, t);
                        let nn = interpolate_series(&kh.n[3 + ia], hist.h, t);
                        kb += -I * sa[ia].expect(&(m * y - y * nn));
                        let ph = &hist.past_full[ib];
                        let g1 = interpolate_series(&ph.p[ia], hist.h, t);
                        let g2 = interpolate_series(&ph.q[ia], hist.h, t);
                        let sb = bt.system_op();
                        pk += -I * (sa[ia] * sb).expect(&(g1 * rho - rho * g2));
                    }
                }
            }
            tau.push(t);
            s.push(rel + hom + kb + pk);
            terms.relevant.push(rel);
            terms.homogeneous.push(hom);
            terms.kicked_bath.push(kb);
            terms.pre_kick.push(pk);
        }
        if n == steps {
            break;
        }
        let k1 = rhs(t, &x);
        let k2 = rhs(t + 0.5 * h, &(x + k1 * (0.5 * h)));
        let k3 = rhs(t + 0.5 * h, &(x + k2 * (0.5 * h)));
        let k4 = rhs(t + h, &(x + k3 * h));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    Ok(record(ResponseMode::Corrected, tables, opts, tau, s, Some(terms), steady))
}

/// Apodization applied to S1 before the transform.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Window {
    None,
    Exponential { rate: f64 },
    Gaussian { sigma: f64 },
    /// Exponential with rate ln(1e3)/tau_max, applied only when the tail of
    /// S1 has not decayed below 1e-6 of its maximum.
    Auto,
}

impl Default for Window {
    fn default() -> Self {
        Window::Auto
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumOptions {
    pub window: Window,
    pub omega_max: f64,
    /// Zero padding factor (transform length >= pad * samples).
    pub pad: usize,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self { window: Window::Auto, omega_max: 8.0, pad: 8 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Spectrum {
    pub omega: Vec<f64>,
    pub a: Vec<f64>,
    /// Window actually applied.
    pub window: Window,
    /// max |S1| over the last 5% of the grid relative to max |S1|.
    pub tail_ratio: f64,
    /// Truncation leakage estimate: 2 max |w S1| over the last 5% of the grid
    /// times the length of that stretch, relative to max |A|.
    pub leakage: f64,
    /// max |Im| of the assembled A before the real cast.
    pub max_imag: f64,
    pub warnings: Vec<String>,
}

impl Spectrum {
    /// (omega, A) at the largest |A| within [lo, hi].
    pub fn peak_in(&self, lo: f64, hi: f64) -> Option<(f64, f64)> {
        self.omega
            .iter()
            .zip(&self.a)
            .filter(|(w, _)| **w >= lo && **w <= hi)
            .max_by(|x, y| x.1.abs().total_cmp(&y.1.abs()))
            .map(|(w, a)| (*w, *a))
    }

    /// int |A| dw over [lo, hi] by the trapezoid rule.
    pub fn weight_in(&self, lo: f64, hi: f64) -> f64 {
        let mut acc = 0.0;
        for k in 1..self.omega.len() {
            let (w0, w1) = (self.omega[k - 1], self.omega[k]);
            if w0 >= lo && w1 <= hi {
                acc += 0.5 * (w1 - w0) * (self.a[k - 1].abs() + self.a[k].abs());
            }
        }
        acc
    }
}

const TAIL_THRESHOLD: f64 = 1e-6;

/// A(w) = 2 Re int_0^tau_max exp(i w tau) S1(tau) dtau on a uniform tau grid,
/// by trapezoid weights and a zero-padded FFT.
pub fn spectrum(tau: &[f64], s1: &[f64], opts: &SpectrumOptions) -> Result<Spectrum> {
    let n = s1.len();
    if n < 4 || tau.len() != n {
        return Err(Error::Config("spectrum needs at least four delay samples".into()));
    }
    let dt = tau[1] - tau[0];
    let tmax = tau[n - 1] - tau[0];
    let peak = s1.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let tail_start = n - (n / 20).max(1);
    let tail = s1[tail_start..].iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let tail_ratio = if peak > 0.0 { tail / peak } else { 0.0 };
    let mut warnings = Vec::new();
    let window = match opts.window {
        Window::Auto if tail_ratio >= TAIL_THRESHOLD => Window::Exponential { rate: (1e3f64).ln() / tmax },
        Window::Auto => Window::None,
        w => w,
    };
    if tail_ratio >= TAIL_THRESHOLD && window == Window::None {
        warnings.push(format!("S1 tail ratio {tail_ratio:.2e} at tau_max = {tmax}: truncation leakage"));
    }
    let wfun = |t: f64| match window {
        Window::Exponential { rate } => (-rate * t).exp(),
        Window::Gaussian { sigma } => (-0.5 * (t / sigma).powi(2)).exp(),
        _ => 1.0,
    };
    let len = (opts.pad.max(1) * n).next_power_of_two();
    let mut buf = vec![C64::new(0.0, 0.0); len];
    for k in 0..n {
        let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
        buf[k] = C64::new(w * dt * s1[k] * wfun(tau[k] - tau[0]), 0.0);
    }
    // Inverse transform gives sum_k x_k exp(+2 pi i j k / len) = sum_k x_k exp(i w_j tau_k).
    FftPlanner::new().plan_fft_inverse(len).process(&mut buf);
    let dw = 2.0 * std::f64::consts::PI / (len as f64 * dt);
    let n_omega = ((opts.omega_max / dw).floor() as usize).min(len / 2);
    let mut omega = Vec::with_capacity(n_omega + 1);
    let mut a = Vec::with_capacity(n_omega + 1);
    let mut max_imag = 0.0f64;
    for j in 0..=n_omega {
        let w = j as f64 * dw;
        let z = buf[j] * C64::from_polar(1.0, w * tau[0]);
        let full = z + z.conj();
        max_imag = max_imag.max(full.im.abs());
        omega.push(w);
        a.push(full.re);
    }
    let amax = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let wtail = (tail_start..n).fold(0.0f64, |m, k| m.max((s1[k] * wfun(tau[k] - tau[0])).abs()));
    let leakage = if amax > 0.0 { 2.0 * wtail * (tau[n - 1] - tau[tail_start]) / amax } else { 0.0 };
    Ok(Spectrum { omega, a, window, tail_ratio, leakage, max_imag, warnings })
}
