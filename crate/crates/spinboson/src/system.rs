//! Two-level operator algebra in the basis (|0>, |1>) with sigma_z = diag(1, -1),
//! sigma = |0><1| and sigma^dag = |1><0|.
//!
//! Superoperators act on column-stacked operators: vec(rho)[i + 2 j] = rho[i][j],
//! so vec(A X B) = (B^T kron A) vec(X).

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use num_complex::Complex64 as C64;

const Z0: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Op2(pub [[C64; 2]; 2]);

impl Op2 {
    pub const ZERO: Op2 = Op2([[Z0, Z0], [Z0, Z0]]);

    pub fn identity() -> Self {
        Op2([[ONE, Z0], [Z0, ONE]])
    }
    pub fn sigma_x() -> Self {
        Op2([[Z0, ONE], [ONE, Z0]])
    }
    pub fn sigma_y() -> Self {
        Op2([[Z0, -I], [I, Z0]])
    }
    pub fn sigma_z() -> Self {
        Op2([[ONE, Z0], [Z0, -ONE]])
    }
    /// sigma = |0><1|.
    pub fn lower() -> Self {
        Op2([[Z0, ONE], [Z0, Z0]])
    }
    /// sigma^dag = |1><0|.
    pub fn raise() -> Self {
        Op2([[Z0, Z0], [ONE, Z0]])
    }
    /// |k><k|.
    pub fn projector(k: usize) -> Self {
        let mut m = Self::ZERO;
        m.0[k][k] = ONE;
        m
    }

    pub fn dagger(&self) -> Self {
        let a = &self.0;
        Op2([[a[0][0].conj(), a[1][0].conj()], [a[0][1].conj(), a[1][1].conj()]])
    }

    pub fn trace(&self) -> C64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn scale(&self, c: C64) -> Self {
        let a = &self.0;
        Op2([[a[0][0] * c, a[0][1] * c], [a[1][0] * c, a[1][1] * c]])
    }

    pub fn scale_re(&self, c: f64) -> Self {
        self.scale(C64::new(c, 0.0))
    }

    pub fn commutator(&self, b: &Op2) -> Self {
        *self * *b - *b * *self
    }

    pub fn frobenius(&self) -> f64 {
        self.0.iter().flatten().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        (*self - self.dagger()).frobenius()
    }

    /// tr(self * b).
    pub fn expect(&self, b: &Op2) -> C64 {
        (*self * *b).trace()
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn hermitian_eigenvalues(&self) -> [f64; 2] {
        let h = (*self + self.dagger()).scale_re(0.5);
        let a = h.0[0][0].re;
        let d = h.0[1][1].re;
        let b = h.0[0][1].norm();
        let m = 0.5 * (a + d);
        let r = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        [m - r, m + r]
    }

    pub fn vec(&self) -> [C64; 4] {
        [self.0[0][0], self.0[1][0], self.0[0][1], self.0[1][1]]
    }

    pub fn unvec(v: &[C64; 4]) -> Self {
        Op2([[v[0], v[2]], [v[1], v[3]]])
    }
}

impl Add for Op2 {
    type Output = Op2;
    fn add(self, b: Op2) -> Op2 {
        let (a, b) = (&self.0, &b.0);
        Op2([[a[0][0] + b[0][0], a[0][1] + b[0][1]], [a[1][0] + b[1][0], a[1][1] + b[1][1]]])
    }
}

impl AddAssign for Op2 {
    fn add_assign(&mut self, b: Op2) {
        *self = *self + b;
    }
}

impl Sub for Op2 {
    type Output = Op2;
    fn sub(self, b: Op2) -> Op2 {
        self + (-b)
    }
}

impl Neg for Op2 {
    type Output = Op2;
    fn neg(self) -> Op2 {
        self.scale_re(-1.0)
    }
}

impl Mul for Op2 {
    type Output = Op2;
    fn mul(self, b: Op2) -> Op2 {
        let (a, b) = (&self.0, &b.0);
        Op2([
            [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
            [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
        ])
    }
}

impl Mul<f64> for Op2 {
    type Output = Op2;
    fn mul(self, c: f64) -> Op2 {
        self.scale_re(c)
    }
}

impl Mul<Op2> for C64 {
    type Output = Op2;
    fn mul(self, b: Op2) -> Op2 {
        b.scale(self)
    }
}

/// 4x4 matrix on column-stacked operators.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SuperOp(pub [[C64; 4]; 4]);

impl SuperOp {
    /// Matrix of a linear map given by its action.
    pub fn from_map(f: impl Fn(&Op2) -> Op2) -> Self {
        let mut m = [[Z0; 4]; 4];
        for c in 0..4 {
            let mut e = [Z0; 4];
            e[c] = ONE;
            let col = f(&Op2::unvec(&e)).vec();
            for r in 0..4 {
                m[r][c] = col[r];
            }
        }
        SuperOp(m)
    }

    pub fn apply(&self, x: &Op2) -> Op2 {
        let v = x.vec();
        let mut o = [Z0; 4];
        for r in 0..4 {
            for c in 0..4 {
                o[r] += self.0[r][c] * v[c];
            }
        }
        Op2::unvec(&o)
    }
}

/// U(t) = exp(-i H_S t) with H_S = (Delta_R/2) sigma_x.
pub fn free_propagator(t: f64, delta_r: f64) -> Op2 {
    let th = 0.5 * delta_r * t;
    Op2::identity().scale_re(th.cos()) + Op2::sigma_x().scale(C64::new(0.0, -th.sin()))
}

/// exp(i H_S t) op exp(-i H_S t).
pub fn interaction_picture_op(op: &Op2, t: f64, delta_r: f64) -> Op2 {
    let u = free_propagator(t, delta_r);
    u.dagger() * *op * u
}

/// Schroedinger-picture state from an interaction-picture one.
pub fn to_schroedinger(rho: &Op2, t: f64, delta_r: f64) -> Op2 {
    let u = free_propagator(t, delta_r);
    u * *rho * u.dagger()
}

/// Decomposition op(t) = P + cos(Delta_R t) Q + sin(Delta_R t) R of the
/// interaction-picture rotation.
#[derive(Clone, Copy, Debug)]
pub struct Rotating {
    pub p: Op2,
    pub q: Op2,
    pub r: Op2,
}

impl Rotating {
    pub fn new(op: &Op2) -> Self {
        // op(theta) is a first-order trigonometric polynomial in theta = Delta_R t.
        let at = |theta: f64| interaction_picture_op(op, theta, 1.0);
        let a0 = at(0.0);
        let api = at(std::f64::consts::PI);
        let p = (a0 + api).scale_re(0.5);
        let q = (a0 - api).scale_re(0.5);
        let r = at(0.5 * std::f64::consts::PI) - p;
        Self { p, q, r }
    }

    pub fn at(&self, t: f64, delta_r: f64) -> Op2 {
        let (s, c) = (delta_r * t).sin_cos();
        self.p + self.q.scale_re(c) + self.r.scale_re(s)
    }
}

/// Latin coupling operators A_X = (Delta/2) sigma_x, A_Y = (Delta/2) sigma_y, A_Z = sigma_z.
pub fn coupling_operators(delta: f64) -> [Op2; 3] {
    [Op2::sigma_x().scale_re(0.5 * delta), Op2::sigma_y().scale_re(0.5 * delta), Op2::sigma_z()]
}

/// The same interaction in the (+, -, Z) split used internally:
/// A_+ = (Delta/2) sigma pairs with B_+ - <B>, A_- = (Delta/2) sigma^dag with
/// B_- - <B>, A_Z = sigma_z with B_Z.
pub fn ladder_coupling_operators(delta: f64) -> [Op2; 3] {
    [Op2::lower().scale_re(0.5 * delta), Op2::raise().scale_re(0.5 * delta), Op2::sigma_z()]
}
