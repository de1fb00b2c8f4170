//! Weak-coupling reference: Born-Redfield (TCL2) master equation and the
//! standard regression theorem for H_S = (Delta/2) sigma_x coupled through
//! sigma_z to a thermal bath, coded directly from the bare correlation function
//! C(u) = int J(nu) [(n + 1) exp(-i nu u) + n exp(i nu u)] dnu.
#![allow(dead_code)]

use nalgebra::{Matrix2, Matrix4, Vector4};
use num_complex::Complex64 as C64;

use spinboson::bath::SpectralDensityParams;
use spinboson::quad::gauss_legendre_unit;

pub type M2 = Matrix2<C64>;

const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn sx() -> M2 {
    M2::new(c(0.0), c(1.0), c(1.0), c(0.0))
}
pub fn sy() -> M2 {
    M2::new(c(0.0), -I, I, c(0.0))
}
pub fn sz() -> M2 {
    M2::new(c(1.0), c(0.0), c(0.0), c(-1.0))
}

fn comm(a: &M2, b: &M2) -> M2 {
    a * b - b * a
}

/// (exp(i x h) - 1) / (i x), stable at x -> 0.
fn segment(x: f64, h: f64) -> C64 {
    let y = 0.5 * x * h;
    let sinc = if y.abs() < 1e-8 { 1.0 - y * y / 6.0 } else { y.sin() / y };
    C64::from_polar(h * sinc, y)
}

/// Cumulative moments int_0^t C(u) {cos, sin}(Delta u) du on t_n = n h.
pub struct Reference {
    pub delta: f64,
    pub h: f64,
    pub mc: Vec<C64>,
    pub ms: Vec<C64>,
}

impl Reference {
    /// Frequency integral on panels of width 0.1 up to nu = 400, 12 Gauss
    /// points each; the time integral is exact per frequency.
    pub fn new(p: &SpectralDensityParams, delta: f64, h: f64, t_max: f64) -> Self {
        let (gx, gw) = gauss_legendre_unit(12);
        let width = 0.1;
        let panels = (400.0 / width) as usize;
        let mut nu = Vec::new();
        let mut wn = Vec::new();
        let mut wn1 = Vec::new();
        for k in 0..panels {
            for q in 0..12 {
                let v = (k as f64 + gx[q]) * width;
                let j = p.alpha * v.powf(p.s) * p.nu_c.powf(1.0 - p.s) * (-v / p.nu_c).exp();
                let n = 1.0 / ((p.beta * v).exp() - 1.0);
                nu.push(v);
                wn.push(gw[q] * width * j * n);
                wn1.push(gw[q] * width * j * (n + 1.0));
            }
        }
        let steps = (t_max / h).round() as usize;
        // Rotors exp(i x t) and segment integrals for x = w - nu (weight n + 1)
        // and x = w + nu (weight n), for w = +delta and -delta.
        let nn = nu.len();
        let mut rot = vec![[c(1.0); 4]; nn];
        let mut step = vec![[c(0.0); 4]; nn];
        let mut seg = vec![[c(0.0); 4]; nn];
        for k in 0..nn {
            let xs = [delta - nu[k], delta + nu[k], -delta - nu[k], -delta + nu[k]];
            for m in 0..4 {
                step[k][m] = C64::from_polar(1.0, xs[m] * h);
                seg[k][m] = segment(xs[m], h);
            }
        }
        let mut mp = vec![c(0.0); steps + 1];
        let mut mm = vec![c(0.0); steps + 1];
        for s in 0..steps {
            let (mut ap, mut am) = (c(0.0), c(0.0));
            for k in 0..nn {
                let r = &mut rot[k];
                let g = &seg[k];
                ap += wn1[k] * r[0] * g[0] + wn[k] * r[1] * g[1];
                am += wn1[k] * r[2] * g[2] + wn[k] * r[3] * g[3];
                for m in 0..4 {
                    r[m] *= step[k][m];
                }
            }
            mp[s + 1] = mp[s] + ap;
            mm[s + 1] = mm[s] + am;
        }
        let mc = mp.iter().zip(&mm).map(|(a, b)| 0.5 * (a + b)).collect();
        let ms = mp.iter().zip(&mm).map(|(a, b)| (a - b) / (2.0 * I)).collect();
        Self { delta, h, mc, ms }
    }

    pub fn horizon_index(&self) -> usize {
        self.mc.len() - 1
    }

    fn index(&self, t: f64) -> usize {
        let x = t / self.h;
        let n = x.round();
        assert!((x - n).abs() < 1e-6, "time {t} off the moment grid");
        (n as usize).min(self.horizon_index())
    }

    pub fn hamiltonian(&self) -> M2 {
        sx() * c(0.5 * self.delta)
    }

    fn free(&self, t: f64) -> M2 {
        let th = 0.5 * self.delta * t;
        M2::identity() * c(th.cos()) - sx() * (I * th.sin())
    }

    /// Schroedinger-picture Lambda(t) = int_0^t C(u) sigma_z(-u) du.
    pub fn lambda(&self, t: f64) -> M2 {
        let n = self.index(t);
        sz() * self.mc[n] - sy() * self.ms[n]
    }

    /// Schroedinger-picture Redfield dissipator.
    pub fn dissipator(&self, lam: &M2, rho: &M2) -> M2 {
        let z = sz();
        -comm(&z, &(lam * rho)) + comm(&z, &(rho * lam.adjoint()))
    }

    pub fn rhs_interaction(&self, t: f64, x: &M2) -> M2 {
        let u = self.free(t);
        let rho = u * x * u.adjoint();
        u.adjoint() * self.dissipator(&self.lambda(t), &rho) * u
    }

    pub fn saturated(&self, x: &M2) -> M2 {
        let lam = self.lambda(self.horizon_index() as f64 * self.h);
        let hs = self.hamiltonian();
        comm(&hs, x) * (-I) + self.dissipator(&lam, x)
    }

    /// Stationary state of the saturated equation from the linear system with
    /// the trace condition replacing one equation.
    pub fn steady_state(&self) -> M2 {
        let basis = |k: usize| {
            let mut m = M2::zeros();
            m[(k % 2, k / 2)] = c(1.0);
            m
        };
        let mut l = Matrix4::<C64>::zeros();
        for col in 0..4 {
            let y = self.saturated(&basis(col));
            for row in 0..4 {
                l[(row, col)] = y[(row % 2, row / 2)];
            }
        }
        for col in 0..4 {
            l[(0, col)] = if col == 0 || col == 3 { c(1.0) } else { c(0.0) };
        }
        let v = l.lu().solve(&Vector4::new(c(1.0), c(0.0), c(0.0), c(0.0))).expect("singular generator");
        M2::new(v[0], v[2], v[1], v[3])
    }

    /// Pre-kick correlation drive -[s_z(tau), sigma_x Pi rho] + [s_z(tau), sigma_x rho Pi^dag]
    /// with Pi(tau) = int_tau^T C(u) sigma_z(tau - u) du (interaction picture).
    pub fn pre_kick_drive(&self, tau: f64, rho: &M2) -> M2 {
        let n = self.index(tau);
        let top = self.horizon_index();
        let (mc, ms) = (self.mc[top] - self.mc[n], self.ms[top] - self.ms[n]);
        let (s, co) = (self.delta * tau).sin_cos();
        let pi = sz() * (mc * co + ms * s) + sy() * (mc * s - ms * co);
        let zt = sz() * c(co) + sy() * c(s);
        let x = sx();
        -comm(&zt, &(x * pi * rho)) + comm(&zt, &(x * rho * pi.adjoint()))
    }
}

fn rk4(f: impl Fn(f64, &M2) -> M2, x0: M2, dt: f64, steps: usize) -> Vec<M2> {
    let mut out = Vec::with_capacity(steps + 1);
    let mut x = x0;
    out.push(x);
    for n in 0..steps {
        let t = n as f64 * dt;
        let k1 = f(t, &x);
        let k2 = f(t + 0.5 * dt, &(x + k1 * c(0.5 * dt)));
        let k3 = f(t + 0.5 * dt, &(x + k2 * c(0.5 * dt)));
        let k4 = f(t + dt, &(x + k3 * c(dt)));
        x += (k1 + k2 * c(2.0) + k3 * c(2.0) + k4) * c(dt / 6.0);
        out.push(x);
    }
    out
}

/// Interaction-picture states from rho0 on t_n = n dt.
pub fn redfield_dynamics(r: &Reference, rho0: &M2, dt: f64, steps: usize) -> Vec<M2> {
    rk4(|t, x| r.rhs_interaction(t, x), *rho0, dt, steps)
}

/// Standard regression: tr[sigma_x exp(L_inf tau)(sigma_x rho_ss)].
pub fn standard_qrt(r: &Reference, rho: &M2, dt: f64, steps: usize) -> Vec<C64> {
    rk4(|_, x| r.saturated(x), sx() * rho, dt, steps).iter().map(|x| (sx() * x).trace()).collect()
}

/// Regression with memory restarted at the kick and the pre-kick correlation drive.
pub fn corrected_qrt(r: &Reference, rho: &M2, dt: f64, steps: usize) -> Vec<C64> {
    rk4(|t, x| r.rhs_interaction(t, x) + r.pre_kick_drive(t, rho), sx() * rho, dt, steps)
        .iter()
        .map(|x| (sx() * x).trace())
        .collect()
}

/// 2 int_0^T cos(w tau) s1(tau) dtau by the trapezoid rule.
pub fn cosine_transform(s1: &[f64], dt: f64, omega: f64) -> f64 {
    let n = s1.len();
    let mut acc = 0.0;
    for k in 0..n {
        let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
        acc += w * s1[k] * (omega * k as f64 * dt).cos();
    }
    2.0 * acc * dt
}

pub fn to_m2(a: &[[C64; 2]; 2]) -> M2 {
    M2::new(a[0][0], a[0][1], a[1][0], a[1][1])
}
