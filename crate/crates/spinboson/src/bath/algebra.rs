//! Thermal expectation values of ordered products of dressed bath operators.
//!
//! Every bath operator that appears in the variational frame is an affine
//! combination of two kinds of atoms at a time t: the displacement
//! D_sigma(t) = exp(sigma x(t)) with x linear in the modes (B_+ = D_+,
//! B_- = D_-), and the residual field Z(t) = B_Z(t). For a Gaussian
//! reference state the ordered expectation of any product of atoms follows
//! from the pair contractions
//!
//!   <x_a(t1) x_b(t2)> = -a b phi(t1 - t2)
//!   <x_a(t1) Z(t2)>   =  a K(t1 - t2)
//!   <Z(t1) x_b(t2)>   = -b K(t1 - t2)
//!   <Z(t1) Z(t2)>     =  C_ZZ(t1 - t2)
//!
//! with <D_sigma> = <B>: the displacements give <B>^n exp(sum of cross
//! contractions), and each Z is either paired with another Z or replaced by
//! its shift, the sum of its contractions with all displacement exponents.

use num_complex::Complex64 as C64;

/// Source of the base kernels phi, K, C_ZZ and the Franck-Condon factor.
pub trait BathKernels {
    fn phi(&self, tau: f64) -> C64;
    fn k(&self, tau: f64) -> C64;
    fn czz(&self, tau: f64) -> C64;
    fn b_avg(&self) -> f64;

    /// psi(t) = -Im phi(t): phase acquired by D_sigma under the half displacement.
    fn psi(&self, t: f64) -> f64 {
        -self.phi(t).im
    }

    /// Shift of Z(t) under the half displacement: Zf(t) = -Re K(t).
    fn zf(&self, t: f64) -> f64 {
        -self.k(t).re
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Atom {
    /// Displacement with sign +1 or -1.
    D(i8),
    Z,
}

/// Affine bath operator at one time: sum_k c_k atom_k + constant.
#[derive(Clone, Copy, Debug)]
pub struct Op {
    pub t: f64,
    pub terms: [(C64, Atom); 2],
    pub n: usize,
    pub constant: C64,
}

const ONE: C64 = C64 { re: 1.0, im: 0.0 };
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

impl Op {
    pub fn atom(atom: Atom, t: f64) -> Self {
        Self { t, terms: [(ONE, atom), (ZERO, atom)], n: 1, constant: ZERO }
    }

    pub fn d(sign: i8, t: f64) -> Self {
        Self::atom(Atom::D(sign), t)
    }

    pub fn z(t: f64) -> Self {
        Self::atom(Atom::Z, t)
    }

    /// D_sigma(t) - <B>: zero-mean displacement fluctuation.
    pub fn fluct(sign: i8, t: f64, b: f64) -> Self {
        Self { constant: C64::new(-b, 0.0), ..Self::d(sign, t) }
    }

    /// B_X = (D_+ + D_-)/2 - <B>.
    pub fn x(t: f64, b: f64) -> Self {
        Self {
            t,
            terms: [(C64::new(0.5, 0.0), Atom::D(1)), (C64::new(0.5, 0.0), Atom::D(-1))],
            n: 2,
            constant: C64::new(-b, 0.0),
        }
    }

    /// B_Y = i (D_+ - D_-)/2.
    pub fn y(t: f64) -> Self {
        Self {
            t,
            terms: [(C64::new(0.0, 0.5), Atom::D(1)), (C64::new(0.0, -0.5), Atom::D(-1))],
            n: 2,
            constant: ZERO,
        }
    }

    /// Conjugation by the half displacement that maps the variational
    /// reference state onto the bath state of population eta (+1 for |1>,
    /// -1 for |0>) of a lab-frame thermal preparation.
    pub fn displaced<K: BathKernels + ?Sized>(&self, eta: f64, k: &K) -> Self {
        let mut out = *self;
        let mut psi = None;
        for i in 0..self.n {
            let (c, a) = self.terms[i];
            match a {
                Atom::D(s) => {
                    let p = *psi.get_or_insert_with(|| k.psi(self.t));
                    out.terms[i].0 = c * C64::from_polar(1.0, -(s as f64) * eta * p);
                }
                Atom::Z => {
                    out.constant -= c * eta * k.zf(self.t);
                }
            }
        }
        out
    }
}

/// Ordered expectation <a_1(t_1) a_2(t_2) ... a_n(t_n)> of atoms (at most 6).
pub fn atoms_expect<K: BathKernels + ?Sized>(k: &K, atoms: &[(Atom, f64)]) -> C64 {
    let n = atoms.len();
    assert!(n <= 6);
    if n == 0 {
        return ONE;
    }
    let b = k.b_avg();
    let mut log_e = ZERO;
    let mut nd = 0;
    for i in 0..n {
        if let Atom::D(si) = atoms[i].0 {
            nd += 1;
            for j in (i + 1)..n {
                if let Atom::D(sj) = atoms[j].0 {
                    log_e -= (si as f64) * (sj as f64) * k.phi(atoms[i].1 - atoms[j].1);
                }
            }
        }
    }
    let pref = C64::new(b.powi(nd), 0.0) * log_e.exp();
    let mut zs = [(0.0f64, ZERO); 6];
    let mut nz = 0;
    for i in 0..n {
        if atoms[i].0 == Atom::Z {
            let tz = atoms[i].1;
            let mut shift = ZERO;
            for (j, &(a, tj)) in atoms.iter().enumerate() {
                if let Atom::D(s) = a {
                    if j < i {
                        shift += (s as f64) * k.k(tj - tz);
                    } else {
                        shift -= (s as f64) * k.k(tz - tj);
                    }
                }
            }
            zs[nz] = (tz, shift);
            nz += 1;
        }
    }
    pref * wick(k, &zs[..nz])
}

/// Sum over partial pairings of the Z atoms (in operator order).
fn wick<K: BathKernels + ?Sized>(k: &K, zs: &[(f64, C64)]) -> C64 {
    match zs.len() {
        0 => ONE,
        1 => zs[0].1,
        _ => {
            let (t0, s0) = zs[0];
            let rest = &zs[1..];
            let mut acc = s0 * wick(k, rest);
            for j in 0..rest.len() {
                let mut others = [(0.0f64, ZERO); 6];
                let mut m = 0;
                for (l, z) in rest.iter().enumerate() {
                    if l != j {
                        others[m] = *z;
                        m += 1;
                    }
                }
                acc += k.czz(t0 - rest[j].0) * wick(k, &others[..m]);
            }
            acc
        }
    }
}

/// Ordered expectation of a product of affine operators (at most 6).
pub fn expect<K: BathKernels + ?Sized>(k: &K, ops: &[Op]) -> C64 {
    let n = ops.len();
    assert!(n <= 6);
    // Enumerate one choice per factor: a term index or the constant.
    let mut choice = [0usize; 6];
    let mut acc = ZERO;
    loop {
        let mut coef = ONE;
        let mut atoms = [(Atom::Z, 0.0); 6];
        let mut na = 0;
        for i in 0..n {
            let op = &ops[i];
            if choice[i] < op.n {
                let (c, a) = op.terms[choice[i]];
                coef *= c;
                atoms[na] = (a, op.t);
                na += 1;
            } else {
                coef *= op.constant;
            }
        }
        if coef != ZERO {
            acc += coef * atoms_expect(k, &atoms[..na]);
        }
        // Advance the mixed-radix counter.
        let mut i = 0;
        loop {
            if i == n {
                return acc;
            }
            choice[i] += 1;
            if choice[i] <= ops[i].n {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

/// Expectation in the half-displaced state of population eta.
pub fn expect_displaced<K: BathKernels + ?Sized>(k: &K, ops: &[Op], eta: f64) -> C64 {
    let mut d = [Op::z(0.0); 6];
    for (i, op) in ops.iter().enumerate() {
        d[i] = op.displaced(eta, k);
    }
    expect(k, &d[..ops.len()])
}

/// Two-point shortcut for single-atom affine operators, used in hot loops.
#[inline]
pub fn pair_expect<K: BathKernels + ?Sized>(k: &K, a: &Op, b: &Op) -> C64 {
    debug_assert!(a.n == 1 && b.n == 1);
    let (ca, xa) = a.terms[0];
    let (cb, xb) = b.terms[0];
    let bb = k.b_avg();
    let mean = |x: Atom| match x {
        Atom::D(_) => C64::new(bb, 0.0),
        Atom::Z => ZERO,
    };
    let two = match (xa, xb) {
        (Atom::D(sa), Atom::D(sb)) => bb * bb * (-(sa as f64) * (sb as f64) * k.phi(a.t - b.t)).exp(),
        (Atom::D(sa), Atom::Z) => bb * (sa as f64) * k.k(a.t - b.t),
        (Atom::Z, Atom::D(sb)) => -bb * (sb as f64) * k.k(a.t - b.t),
        (Atom::Z, Atom::Z) => k.czz(a.t - b.t),
    };
    ca * cb * two + ca * mean(xa) * b.constant + a.constant * cb * mean(xb) + a.constant * b.constant
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Single mode with closed-form kernels (frequency w, displacement f,
    /// residual coupling g - f, inverse temperature beta).
    struct OneMode {
        w: f64,
        f: f64,
        r: f64,
        beta: f64,
    }

    impl BathKernels for OneMode {
        fn phi(&self, tau: f64) -> C64 {
            let c = 1.0 / (0.5 * self.beta * self.w).tanh();
            4.0 * (self.f / self.w).powi(2) * C64::new(c * (self.w * tau).cos(), -(self.w * tau).sin())
        }
        fn k(&self, tau: f64) -> C64 {
            let c = 1.0 / (0.5 * self.beta * self.w).tanh();
            2.0 * self.f * self.r / self.w * C64::new(-(self.w * tau).cos(), c * (self.w * tau).sin())
        }
        fn czz(&self, tau: f64) -> C64 {
            let c = 1.0 / (0.5 * self.beta * self.w).tanh();
            self.r * self.r * C64::new(c * (self.w * tau).cos(), -(self.w * tau).sin())
        }
        fn b_avg(&self) -> f64 {
            (-0.5 * self.phi(0.0).re).exp()
        }
    }

    #[test]
    fn pair_shortcut_matches_general_expansion() {
        let m = OneMode { w: 1.3, f: 0.4, r: 0.7, beta: 0.8 };
        let b = m.b_avg();
        let ops = [Op::fluct(1, 0.3, b), Op::fluct(-1, -0.2, b), Op::z(1.1), Op::d(1, 0.5)];
        for a in &ops {
            for c in &ops {
                let g = expect(&m, &[*a, *c]);
                let p = pair_expect(&m, a, c);
                assert!((g - p).norm() < 1e-14);
                let gd = expect_displaced(&m, &[*a, *c], 1.0);
                let pd = pair_expect(&m, &a.displaced(1.0, &m), &c.displaced(1.0, &m));
                assert!((gd - pd).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn triple_displacement_at_equal_times() {
        let m = OneMode { w: 2.0, f: 0.3, r: 0.1, beta: 1.0 };
        let b = m.b_avg();
        let v = expect(&m, &[Op::d(1, 0.7), Op::d(1, 0.7), Op::d(1, 0.7)]);
        assert!((v - C64::new(b.powi(9), 0.0)).norm() < 1e-14);
    }

    #[test]
    fn fluctuations_have_zero_mean() {
        let m = OneMode { w: 2.0, f: 0.3, r: 0.5, beta: 1.0 };
        let b = m.b_avg();
        assert!(expect(&m, &[Op::fluct(1, 0.2, b)]).norm() < 1e-15);
        assert!(expect(&m, &[Op::x(0.2, b)]).norm() < 1e-15);
        assert!(expect(&m, &[Op::y(0.2)]).norm() < 1e-15);
        assert!(expect(&m, &[Op::z(0.2)]).norm() < 1e-15);
    }
}
