//! Second-order time-convolutionless master equation in the variational frame.
//!
//! The interaction is split as sum_i A_i (x) B_i over i in (+, -, Z) with
//! A_+ = (Delta/2) sigma, A_- = (Delta/2) sigma^dag, A_Z = sigma_z and the
//! zero-mean bath operators B_+ - <B>, B_- - <B>, B_Z. States are propagated
//! in the interaction picture of H_S = (Delta_R/2) sigma_x.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::bath::algebra::Atom;
use crate::bath::correlations::{CorrelationTables, Cumulative};
use crate::bath::tables::lagrange6;
use crate::error::{Error, Result};
use crate::quad::gregory_weights;
use crate::system::{free_propagator, ladder_coupling_operators, Op2, Rotating, SuperOp};

const Z0: C64 = C64 { re: 0.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Ladder coupling operators with their interaction-picture rotations.
#[derive(Clone, Debug)]
pub struct Ladder {
    pub ops: [Op2; 3],
    pub rot: [Rotating; 3],
    pub delta_r: f64,
}

impl Ladder {
    pub fn new(delta: f64, delta_r: f64) -> Self {
        let ops = ladder_coupling_operators(delta);
        let rot = [Rotating::new(&ops[0]), Rotating::new(&ops[1]), Rotating::new(&ops[2])];
        Self { ops, rot, delta_r }
    }

    pub fn from_tables(t: &CorrelationTables) -> Self {
        Self::new(t.delta, t.delta_r)
    }

    /// A_i in the interaction picture at time t.
    pub fn at(&self, i: usize, t: f64) -> Op2 {
        self.rot[i].at(t, self.delta_r)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Base {
    Em,
    Ep,
    K,
    Czz,
}

/// C_ij(tau) = coefficient * base(tau) for the ladder split.
pub(crate) fn ladder_kernel(i: usize, j: usize, b: f64) -> (f64, Base) {
    match (i, j) {
        (0, 0) | (1, 1) => (b * b, Base::Em),
        (0, 1) | (1, 0) => (b * b, Base::Ep),
        (0, 2) | (2, 1) => (b, Base::K),
        (1, 2) | (2, 0) => (-b, Base::K),
        _ => (1.0, Base::Czz),
    }
}

/// int_0^t base(u) {1, cos(Delta_R u), sin(Delta_R u)} du.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Moments {
    pub one: C64,
    pub cos: C64,
    pub sin: C64,
}

impl Moments {
    fn from_cumulative(c: &[Cumulative; 3], t: f64) -> Self {
        let (i0, ip, im) = (c[0].eval(t), c[1].eval(t), c[2].eval(t));
        Self { one: i0, cos: 0.5 * (ip + im), sin: (ip - im) / (2.0 * I) }
    }

    pub fn conj(&self) -> Self {
        Self { one: self.one.conj(), cos: self.cos.conj(), sin: self.sin.conj() }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self { one: self.one * c, cos: self.cos * c, sin: self.sin * c }
    }
}

pub(crate) fn base_moments(tables: &CorrelationTables, t: f64) -> [Moments; 4] {
    [
        Moments::from_cumulative(&tables.cum_em, t),
        Moments::from_cumulative(&tables.cum_ep, t),
        Moments::from_cumulative(&tables.cum_k, t),
        Moments::from_cumulative(&tables.cum_czz, t),
    ]
}

pub(crate) fn base_index(b: Base) -> usize {
    match b {
        Base::Em => 0,
        Base::Ep => 1,
        Base::K => 2,
        Base::Czz => 3,
    }
}

/// Homogeneous TCL2 memory kernel built from the cumulative correlation tables.
pub struct Generator<'a> {
    pub tables: &'a CorrelationTables,
    pub ladder: Ladder,
}

impl<'a> Generator<'a> {
    pub fn new(tables: &'a CorrelationTables) -> Self {
        Self { tables, ladder: Ladder::from_tables(tables) }
    }

    /// Lambda^L_i(t) = sum_j int_0^t C_ij(tau) A_j(-tau) dtau and
    /// Lambda^R_i(t) = sum_j int_0^t C_ji(-tau) A_j(-tau) dtau.
    pub fn lambdas(&self, t: f64) -> ([Op2; 3], [Op2; 3]) {
        let mom = base_moments(self.tables, t);
        let b = self.tables.b_avg;
        let mut left = [Op2::ZERO; 3];
        let mut right = [Op2::ZERO; 3];
        for i in 0..3 {
            for j in 0..3 {
                let r = &self.ladder.rot[j];
                let (c, base) = ladder_kernel(i, j, b);
                let m = mom[base_index(base)].scale(c);
                left[i] += m.one * r.p + m.cos * r.q - m.sin * r.r;
                let (c, base) = ladder_kernel(j, i, b);
                let m = mom[base_index(base)].conj().scale(c);
                right[i] += m.one * r.p + m.cos * r.q - m.sin * r.r;
            }
        }
        (left, right)
    }

    /// Dissipator -sum_i ([A_i, Lambda^L_i rho] + [rho Lambda^R_i, A_i]) in the
    /// Schroedinger picture.
    pub fn dissipator(&self, t: f64, rho: &Op2) -> Op2 {
        let (l, r) = self.lambdas(t);
        let mut out = Op2::ZERO;
        for i in 0..3 {
            let a = self.ladder.ops[i];
            out += a.commutator(&(l[i] * *rho)) + (*rho * r[i]).commutator(&a);
        }
        -out
    }

    /// Interaction-picture right-hand side of the homogeneous equation.
    pub fn apply_interaction(&self, t: f64, rho_i: &Op2) -> Op2 {
        let u = free_propagator(t, self.tables.delta_r);
        let rho = u * *rho_i * u.dagger();
        u.dagger() * self.dissipator(t, &rho) * u
    }
}

/// Superoperator of the Schroedinger-picture dissipator at time t.
pub fn memory_generator(t: f64, tables: &CorrelationTables) -> SuperOp {
    let g = Generator::new(tables);
    SuperOp::from_map(|x| g.dissipator(t, x))
}

/// Single-atom affine bath operator c * atom + constant used by the history
/// integrals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AtomOp {
    pub atom: Atom,
    pub constant: f64,
}

impl AtomOp {
    pub fn fluct(sign: i8, b: f64) -> Self {
        Self { atom: Atom::D(sign), constant: -b }
    }
    pub fn full(sign: i8) -> Self {
        Self { atom: Atom::D(sign), constant: 0.0 }
    }
    pub fn z() -> Self {
        Self { atom: Atom::Z, constant: 0.0 }
    }
    /// The ladder coupling operators B_+ - <B>, B_- - <B>, B_Z.
    pub fn ladder(b: f64) -> [AtomOp; 3] {
        [Self::fluct(1, b), Self::fluct(-1, b), Self::z()]
    }
}

fn atom_slot(a: Atom) -> usize {
    match a {
        Atom::D(1) => 0,
        Atom::D(_) => 1,
        Atom::Z => 2,
    }
}

/// Bath deviation Y entering the history integrals, described by its action
/// on ordered expectations: tr_B[X Y] = scale (<X'> - <X>) where X' replaces
/// every atom a(t_m) at grid time t_m = m h by coef * a(t_m) + shift.
#[derive(Clone, Debug)]
pub struct Preparation {
    pub scale: C64,
    pub h: f64,
    /// Per grid time and atom slot (D_+, D_-, Z): (coef, shift).
    pub atoms: Vec<[(C64, C64); 3]>,
}

impl Preparation {
    /// Lab-frame thermal bath of population eta (+1 for |1>, -1 for |0>)
    /// relative to the variational reference state.
    pub fn population(tables: &CorrelationTables, eta: f64, n_steps: usize, stride: usize) -> Self {
        let atoms = (0..=n_steps)
            .map(|m| {
                let d = (m * stride) as i64;
                let psi = -tables.phi.at(d).im;
                let zf = -tables.k.at(d).re;
                [
                    (C64::from_polar(1.0, -eta * psi), Z0),
                    (C64::from_polar(1.0, eta * psi), Z0),
                    (C64::new(1.0, 0.0), C64::new(-eta * zf, 0.0)),
                ]
            })
            .collect();
        Self { scale: C64::new(1.0, 0.0), h: stride as f64 * tables.opts.dtau, atoms }
    }

    /// Y = B_sign(0) tau_R - <B> tau_R: the bath factor left behind by the
    /// dipole operator s_alpha B_alpha applied at time 0 (all atoms at later times).
    pub fn kick(tables: &CorrelationTables, sign: i8, n_steps: usize, stride: usize) -> Self {
        let a = sign as f64;
        let atoms = (0..=n_steps)
            .map(|m| {
                let d = (m * stride) as i64;
                let phi = tables.phi.at(d);
                let k = tables.k.at(d);
                [(( -a * phi).exp(), Z0), ((a * phi).exp(), Z0), (C64::new(1.0, 0.0), -a * k)]
            })
            .collect();
        Self { scale: C64::new(tables.b_avg, 0.0), h: stride as f64 * tables.opts.dtau, atoms }
    }
}

/// History integrals of a preparation Y on the grid t_n = n h:
///
///   gamma_L(t) = tr_B[L(t) Y]
///   m_L(t) = sum_j int_0^t (tr_B[L(t) B_j(s) Y] - <L> Gamma_j(s)) A_j(s) ds
///   n_L(t) = sum_j int_0^t (tr_B[B_j(s) L(t) Y] - <L> Gamma_j(s)) A_j(s) ds
///
/// with Gamma_j(s) = tr_B[B_j(s) Y] and A_j(s) the interaction-picture
/// ladder operators.
#[derive(Clone, Debug)]
pub struct History {
    pub h: f64,
    pub gamma: Vec<Vec<C64>>,
    pub m: Vec<Vec<Op2>>,
    pub n: Vec<Vec<Op2>>,
}

/// Affine expectation c_x c_y two + c_x mean_x beta_y + beta_x c_y mean_y + beta_x beta_y.
#[inline(always)]
fn affine(two: C64, cx: C64, mx: f64, bx: C64, cy: C64, my: f64, by: C64) -> C64 {
    cx * cy * two + cx * by * mx + bx * cy * my + bx * by
}

/// Pair expectations <x(d h) y(0)> (fwd) and <x(-d h) y(0)> (bwd) of the atom
/// slots for lags d = 0..len.
fn pair_tables(tables: &CorrelationTables, len: usize, stride: usize) -> (Vec<[[C64; 3]; 3]>, Vec<[[C64; 3]; 3]>) {
    let b = tables.b_avg;
    let sgn = [1.0, -1.0];
    let two = |d: usize, x: usize, y: usize, fwd: bool| -> C64 {
        let i = (d * stride) as i64;
        let (p, k, c) = (tables.phi.at(i), tables.k.at(i), tables.czz.at(i));
        let (p, k, c) = if fwd { (p, k, c) } else { (p.conj(), k.conj(), c.conj()) };
        match (x, y) {
            (2, 2) => c,
            (2, y) => -b * sgn[y] * k,
            (x, 2) => b * sgn[x] * k,
            (x, y) => b * b * (-sgn[x] * sgn[y] * p).exp(),
        }
    };
    let mut fwd = vec![[[Z0; 3]; 3]; len];
    let mut bwd = vec![[[Z0; 3]; 3]; len];
    for d in 0..len {
        for x in 0..3 {
            for y in 0..3 {
                fwd[d][x][y] = two(d, x, y, true);
                bwd[d][x][y] = two(d, x, y, false);
            }
        }
    }
    (fwd, bwd)
}

fn rotated(ladder: &Ladder, a: &[[C64; 3]; 3]) -> Op2 {
    let mut o = Op2::ZERO;
    for j in 0..3 {
        let r = &ladder.rot[j];
        o += a[j][0] * r.p + a[j][1] * r.q + a[j][2] * r.r;
    }
    o
}

pub fn history_integrals(tables: &CorrelationTables, prep: &Preparation, lefts: &[AtomOp], n_steps: usize, stride: usize) -> History {
    let h = stride as f64 * tables.opts.dtau;
    let b = tables.b_avg;
    let nt = n_steps + 1;
    assert!(prep.atoms.len() >= nt);
    let (fwd, bwd) = pair_tables(tables, nt, stride);
    let mean = [b, b, 0.0];
    let disp = &prep.atoms;
    let sc = prep.scale;
    let one = C64::new(1.0, 0.0);
    let rights = AtomOp::ladder(b);
    let rslot: Vec<usize> = rights.iter().map(|r| atom_slot(r.atom)).collect();
    let gamma_r: Vec<[C64; 3]> = (0..nt)
        .map(|m| {
            let mut g = [Z0; 3];
            for j in 0..3 {
                let x = rslot[j];
                let (c, db) = disp[m][x];
                g[j] = sc * (c * mean[x] + db - mean[x]);
            }
            g
        })
        .collect();
    let ladder = Ladder::from_tables(tables);
    let trig: Vec<(f64, f64)> = (0..nt).map(|m| (tables.delta_r * m as f64 * h).sin_cos()).collect();
    let nl = lefts.len();
    let mut out = History {
        h,
        gamma: vec![vec![Z0; nt]; nl],
        m: vec![vec![Op2::ZERO; nt]; nl],
        n: vec![vec![Op2::ZERO; nt]; nl],
    };
    for (l, left) in lefts.iter().enumerate() {
        let x = atom_slot(left.atom);
        let bl = C64::new(left.constant, 0.0);
        let l_mean = mean[x] + left.constant;
        for n in 0..nt {
            let (cl, dl) = disp[n][x];
            let blp = bl + dl;
            out.gamma[l][n] = sc * (cl * mean[x] + blp - l_mean);
            if n == 0 {
                continue;
            }
            let w = gregory_weights(n);
            // Scalar accumulators [g/h][j][1, cos, sin].
            let mut acc = [[[Z0; 3]; 3]; 2];
            for m in 0..=n {
                let d = n - m;
                let wm = w[m] * h;
                let (s, c) = trig[m];
                for j in 0..3 {
                    let y = rslot[j];
                    let by = C64::new(rights[j].constant, 0.0);
                    let (cy, dy) = disp[m][y];
                    let byp = by + dy;
                    let sub = l_mean * gamma_r[m][j];
                    let g = sc
                        * (affine(fwd[d][x][y], cl, mean[x], blp, cy, mean[y], byp)
                            - affine(fwd[d][x][y], one, mean[x], bl, one, mean[y], by))
                        - sub;
                    let hh = sc
                        * (affine(bwd[d][y][x], cy, mean[y], byp, cl, mean[x], blp)
                            - affine(bwd[d][y][x], one, mean[y], by, one, mean[x], bl))
                        - sub;
                    let (g, hh) = (g * wm, hh * wm);
                    acc[0][j][0] += g;
                    acc[0][j][1] += g * c;
                    acc[0][j][2] += g * s;
                    acc[1][j][0] += hh;
                    acc[1][j][1] += hh * c;
                    acc[1][j][2] += hh * s;
                }
            }
            out.m[l][n] = rotated(&ladder, &acc[0]);
            out.n[l][n] = rotated(&ladder, &acc[1]);
        }
    }
    out
}

/// History integrals of the lab-frame preparation with population eta on the
/// correlation-table grid.
pub fn inhomogeneous_history(tables: &CorrelationTables, eta: f64, lefts: &[AtomOp], n_steps: usize) -> History {
    let prep = Preparation::population(tables, eta, n_steps, 1);
    history_integrals(tables, &prep, lefts, n_steps, 1)
}

/// Integrals over the past s in [-T, 0] of three-point functions with a
/// pivot displacement B_a(0) applied at time 0 and a left operator at tau_n = n h:
///
///   p_L(tau) = sum_j int (<L(tau) B_a(0) B_j(s)> - sub_p) A_j(s) ds
///   q_L(tau) = sum_j int (<B_j(s) L(tau) B_a(0)> - sub_q) A_j(s) ds
///
/// where sub_p = <L> <B_a B_j(s)> and sub_q = <L> <B_j(s) B_a>, plus
/// <B> <L(tau) B_j(s)> (resp. <B> <B_j(s) L(tau)>) when `subtract_pair` is set.
#[derive(Clone, Debug)]
pub struct PastHistory {
    pub h: f64,
    pub p: Vec<Vec<Op2>>,
    pub q: Vec<Vec<Op2>>,
}

pub fn past_integrals(
    tables: &CorrelationTables,
    pivot: i8,
    lefts: &[AtomOp],
    subtract_pair: bool,
    n_tau: usize,
    n_past: usize,
    stride: usize,
) -> PastHistory {
    let h = stride as f64 * tables.opts.dtau;
    let b = tables.b_avg;
    let a = pivot as f64;
    let (fwd, bwd) = pair_tables(tables, n_tau + n_past + 1, stride);
    let mean = [b, b, 0.0];
    let sgn = [1.0, -1.0];
    let one = C64::new(1.0, 0.0);
    let bc = C64::new(b, 0.0);
    // Atom transforms by the pivot: an atom at lag d h on the left of the
    // pivot (time +d h or -d h) or on its right (time -d h).
    let lag = |d: usize| {
        let i = (d * stride) as i64;
        (tables.phi.at(i), tables.k.at(i))
    };
    let left_of = |d: usize, x: usize, future: bool| -> (C64, C64) {
        let (p, k) = lag(d);
        let (p, k) = if future { (p, k) } else { (p.conj(), k.conj()) };
        if x == 2 {
            (one, -a * k)
        } else {
            ((-sgn[x] * a * p).exp(), Z0)
        }
    };
    let right_of = |d: usize, x: usize| -> (C64, C64) {
        let (p, k) = lag(d);
        if x == 2 {
            (one, a * k)
        } else {
            ((-a * sgn[x] * p).exp(), Z0)
        }
    };
    let rights = AtomOp::ladder(b);
    let rslot: Vec<usize> = rights.iter().map(|r| atom_slot(r.atom)).collect();
    let ladder = Ladder::from_tables(tables);
    let w = gregory_weights(n_past);
    let trig: Vec<(f64, f64)> = (0..=n_past).map(|m| (tables.delta_r * m as f64 * h).sin_cos()).collect();
    let nl = lefts.len();
    let mut out = PastHistory { h, p: vec![vec![Op2::ZERO; n_tau + 1]; nl], q: vec![vec![Op2::ZERO; n_tau + 1]; nl] };
    // Right-operator transforms per past grid point.
    let rp: Vec<[(C64, C64); 3]> = (0..=n_past).map(|m| [right_of(m, 0), right_of(m, 1), right_of(m, 2)]).collect();
    let lp: Vec<[(C64, C64); 3]> =
        (0..=n_past).map(|m| [left_of(m, 0, false), left_of(m, 1, false), left_of(m, 2, false)]).collect();
    for (l, left) in lefts.iter().enumerate() {
        let x = atom_slot(left.atom);
        let bl = C64::new(left.constant, 0.0);
        let l_mean = mean[x] + left.constant;
        for n in 0..=n_tau {
            let (cl, dl) = left_of(n, x, true);
            let blp = bl + dl;
            let mut acc = [[[Z0; 3]; 3]; 2];
            for m in 0..=n_past {
                let d = n + m;
                let wm = w[m] * h;
                let (s, c) = trig[m];
                for j in 0..3 {
                    let y = rslot[j];
                    let by = C64::new(rights[j].constant, 0.0);
                    let (cr, dr) = rp[m][y];
                    let (cq, dq) = lp[m][y];
                    let mut g = bc * affine(fwd[d][x][y], cl, mean[x], blp, cr, mean[y], by + dr)
                        - l_mean * bc * (cr * mean[y] + by + dr);
                    let mut hh = bc * affine(bwd[d][y][x], cq, mean[y], by + dq, cl, mean[x], blp)
                        - l_mean * bc * (cq * mean[y] + by + dq);
                    if subtract_pair {
                        g -= bc * affine(fwd[d][x][y], one, mean[x], bl, one, mean[y], by);
                        hh -= bc * affine(bwd[d][y][x], one, mean[y], by, one, mean[x], bl);
                    }
                    let (g, hh) = (g * wm, hh * wm);
                    // A_j(-m h) = P + cos Q - sin R.
                    acc[0][j][0] += g;
                    acc[0][j][1] += g * c;
                    acc[0][j][2] -= g * s;
                    acc[1][j][0] += hh;
                    acc[1][j][1] += hh * c;
                    acc[1][j][2] -= hh * s;
                }
            }
            out.p[l][n] = rotated(&ladder, &acc[0]);
            out.q[l][n] = rotated(&ladder, &acc[1]);
        }
    }
    out
}

/// Six-point interpolation of a uniformly sampled series (clamped stencil).
pub fn interpolate_series<T>(values: &[T], h: f64, t: f64) -> T
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
{
    let len = values.len();
    let x = t / h;
    let r = x.round();
    if (x - r).abs() < 1e-9 && r >= 0.0 && (r as usize) < len {
        return values[r as usize];
    }
    let n = x.floor() as i64;
    let start = (n - 2).clamp(0, len as i64 - 6);
    let u = x - (start + 2) as f64;
    let w = lagrange6(u);
    let mut acc = values[start as usize] * w[0];
    for k in 1..6 {
        acc = acc + values[start as usize + k] * w[k];
    }
    acc
}

/// Inhomogeneous drive of a diagonal lab-frame preparation, tabulated in the
/// interaction picture on the correlation-table grid.
#[derive(Clone, Debug)]
pub struct InhomogeneousDrive {
    pub h: f64,
    pub values: Vec<Op2>,
}

impl InhomogeneousDrive {
    /// rho0 must be diagonal in the (|0>, |1>) basis.
    pub fn build(tables: &CorrelationTables, rho0: &Op2, t_final: f64) -> Result<Self> {
        check_diagonal(rho0)?;
        let h = tables.opts.dtau;
        let n_steps = (t_final / h).ceil() as usize + 6;
        let ladder = Ladder::from_tables(tables);
        let mut values = vec![Op2::ZERO; n_steps + 1];
        for (k, eta) in [(0usize, -1.0), (1usize, 1.0)] {
            let p = rho0.0[k][k].re;
            if p == 0.0 {
                continue;
            }
            let pi = Op2::projector(k).scale_re(p);
            let hist = inhomogeneous_history(tables, eta, &AtomOp::ladder(tables.b_avg), n_steps);
            for (n, v) in values.iter_mut().enumerate() {
                let t = n as f64 * h;
                let mut acc = Op2::ZERO;
                for i in 0..3 {
                    let a = ladder.at(i, t);
                    acc += (hist.gamma[i][n] * I) * a.commutator(&pi);
                    acc += a.commutator(&(hist.m[i][n] * pi)) + (pi * hist.n[i][n]).commutator(&a);
                }
                *v += -acc;
            }
        }
        Ok(Self { h, values })
    }

    pub fn eval(&self, t: f64) -> Op2 {
        interpolate_series(&self.values, self.h, t)
    }
}

pub(crate) fn check_diagonal(rho0: &Op2) -> Result<()> {
    if rho0.0[0][1].norm() > 1e-14 || rho0.0[1][0].norm() > 1e-14 {
        return Err(Error::Config(
            "inhomogeneous terms require an initial state diagonal in the sigma_z basis".into(),
        ));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Variational,
    Weak,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PropagationOptions {
    pub dt: f64,
    pub t_final: f64,
    pub include_inhomogeneous: bool,
    /// Abort when |tr rho - 1| or the Hermiticity defect exceeds this.
    pub invariant_tol: f64,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        Self { dt: 0.01, t_final: 20.0, include_inhomogeneous: true, invariant_tol: 1e-6 }
    }
}

/// Reduced states on the output grid, stored in the interaction picture.
#[derive(Clone, Debug)]
pub struct DensityTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Op2>,
    pub rho0: Op2,
    pub delta_r: f64,
    pub frame: Frame,
    pub inhomogeneous: bool,
    pub min_eigenvalue: f64,
    pub max_trace_defect: f64,
    pub max_hermiticity_defect: f64,
}

impl DensityTrajectory {
    pub fn schroedinger(&self, n: usize) -> Op2 {
        crate::system::to_schroedinger(&self.states[n], self.times[n], self.delta_r)
    }
}

/// RK4 integration of the TCL2 equation from rho0 (Schroedinger picture at t = 0).
pub fn propagate(tables: &CorrelationTables, rho0: &Op2, opts: &PropagationOptions) -> Result<DensityTrajectory> {
    if !(opts.dt > 0.0) || !(opts.t_final >= 0.0) {
        return Err(Error::Config(format!("invalid time grid dt={} t_final={}", opts.dt, opts.t_final)));
    }
    if opts.include_inhomogeneous && opts.t_final > tables.horizon() * (1.0 + 1e-12) {
        return Err(Error::Config(format!(
            "t_final {} exceeds the correlation table horizon {}",
            opts.t_final,
            tables.horizon()
        )));
    }
    let drive = if opts.include_inhomogeneous { Some(InhomogeneousDrive::build(tables, rho0, opts.t_final)?) } else { None };
    let gen = Generator::new(tables);
    let rhs = |t: f64, x: &Op2| {
        let mut d = gen.apply_interaction(t, x);
        if let Some(dr) = &drive {
            d += dr.eval(t);
        }
        d
    };
    let steps = (opts.t_final / opts.dt).round() as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut x = *rho0;
    times.push(0.0);
    states.push(x);
    let mut traj_min = x.hermitian_eigenvalues()[0];
    let (mut tr_def, mut h_def) = (0.0f64, 0.0f64);
    let h = opts.dt;
    for n in 0..steps {
        let t = n as f64 * h;
        let k1 = rhs(t, &x);
        let k2 = rhs(t + 0.5 * h, &(x + k1 * (0.5 * h)));
        let k3 = rhs(t + 0.5 * h, &(x + k2 * (0.5 * h)));
        let k4 = rhs(t + h, &(x + k3 * h));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        let td = (x.trace() - 1.0).norm();
        let hd = x.hermiticity_defect();
        tr_def = tr_def.max(td);
        h_def = h_def.max(hd);
        if td > opts.invariant_tol || hd > opts.invariant_tol || !x.frobenius().is_finite() {
            return Err(Error::Numerical(format!(
                "invariant violated at t={:.4}: trace defect {td:.3e}, Hermiticity defect {hd:.3e}",
                t + h
            )));
        }
        traj_min = traj_min.min(x.hermitian_eigenvalues()[0]);
        times.push(t + h);
        states.push(x);
    }
    Ok(DensityTrajectory {
        times,
        states,
        rho0: *rho0,
        delta_r: tables.delta_r,
        frame: if tables.weak_frame { Frame::Weak } else { Frame::Variational },
        inhomogeneous: opts.include_inhomogeneous,
        min_eigenvalue: traj_min,
        max_trace_defect: tr_def,
        max_hermiticity_defect: h_def,
    })
}
