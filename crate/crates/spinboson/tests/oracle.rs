use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use spinboson::bath::algebra::{self, BathKernels, Op};
use spinboson::bath::{spectral_density, SpectralDensityParams};
use spinboson::oracle::*;
use spinboson::quad;
use spinboson::system::Op2;

fn params(s: f64, alpha: f64) -> SpectralDensityParams {
    SpectralDensityParams::new(alpha, 10.0, s, 1.0).unwrap()
}

fn band_moment(p: &SpectralDensityParams, band: f64, m: i32) -> f64 {
    quad::integrate(&|nu: f64| C64::new(spectral_density(nu, p).unwrap() * nu.powi(m), 0.0), 0.0, band, 1e-14, 1e-14)
        .unwrap()
        .re
}

#[test]
fn discretisation_reproduces_band_moments() {
    for s in [1.0, 1.5, 3.0] {
        let p = params(s, 0.1);
        let modes = discretize_bath(&p, 6, 100.0).unwrap();
        for m in 0..3 {
            let exact = band_moment(&p, 100.0, m);
            let sum: f64 = modes.nu.iter().zip(&modes.g).map(|(nu, g)| g * g * nu.powi(m)).sum();
            assert!((sum - exact).abs() < 1e-10 * exact.max(1.0), "s={s} m={m}: {sum} vs {exact}");
        }
    }
    let p = params(3.0, 0.1);
    let one = discretize_bath(&p, 1, 100.0).unwrap();
    let mean = band_moment(&p, 100.0, 1) / band_moment(&p, 100.0, 0);
    assert!((one.nu[0] - mean).abs() < 1e-9 * mean);
    assert!(discretize_bath(&p, 3, 5.0).unwrap().warnings.len() == 1);
}

#[test]
fn uncoupled_spin_rotates_freely() {
    let modes = BathModeSet { nu: vec![2.0, 5.0], g: vec![0.0, 0.0], band: 10.0, warnings: vec![] };
    let grid: Vec<f64> = (0..=10).map(|k| 0.1 * k as f64).collect();
    let o = exact_evolve(&modes, 1.0, 1.0, &Op2::projector(1), &BathPrep::Thermal, &grid, &OracleOptions::default()).unwrap();
    for (k, &t) in grid.iter().enumerate() {
        assert!((o.sigma_z[k] + t.cos()).abs() < 1e-12, "t={t}");
        assert!(o.sigma_x[k].abs() < 1e-12);
    }
}

#[test]
fn relaxation_stage_keeps_population_and_evolution_conserves_energy() {
    let p = params(3.0, 0.1);
    let modes = discretize_bath(&p, 3, 60.0).unwrap();
    let opts = OracleOptions { n_max: 4, enforce_recurrence: false, ..Default::default() };
    let grid = [0.0];
    for t_relax in [0.3, 1.1] {
        let o = exact_evolve(&modes, 1.0, 1.0, &Op2::projector(1), &BathPrep::Relax { t_relax }, &grid, &opts).unwrap();
        assert!((o.sigma_z[0] + 1.0).abs() < 1e-12);
    }
    let grid: Vec<f64> = (0..=20).map(|k| 0.05 * k as f64).collect();
    let o = exact_evolve(&modes, 1.0, 1.0, &Op2::projector(1), &BathPrep::Thermal, &grid, &opts).unwrap();
    assert!(o.max_norm_defect < 1e-8);
    assert!(o.max_energy_drift < 1e-8);
}

#[test]
fn budget_and_recurrence_are_enforced() {
    let p = params(3.0, 0.1);
    let modes = discretize_bath(&p, 6, 100.0).unwrap();
    let small = OracleOptions { budget: 10_000, ..Default::default() };
    let err = exact_evolve(&modes, 1.0, 1.0, &Op2::projector(1), &BathPrep::Thermal, &[0.1], &small).unwrap_err();
    assert!(err.to_string().contains("N <="));
    let late = [2.0 * modes.recurrence_time()];
    assert!(exact_evolve(&modes, 1.0, 1.0, &Op2::projector(1), &BathPrep::Thermal, &late, &OracleOptions::default()).is_err());
}

/// One mode in a truncated Fock space: operators as dense matrices.
struct FockMode {
    nu: f64,
    dim: usize,
    b: DMatrix<C64>,
}

impl FockMode {
    fn new(nu: f64, dim: usize) -> Self {
        let mut b = DMatrix::zeros(dim, dim);
        for n in 1..dim {
            b[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
        }
        Self { nu, dim, b }
    }
    fn bd(&self) -> DMatrix<C64> {
        self.b.adjoint()
    }
    /// exp(i H_B t) X exp(-i H_B t).
    fn heis(&self, x: &DMatrix<C64>, t: f64) -> DMatrix<C64> {
        DMatrix::from_fn(self.dim, self.dim, |m, n| x[(m, n)] * C64::from_polar(1.0, self.nu * t * (m as f64 - n as f64)))
    }
}

#[test]
fn displaced_expectations_match_fock_space() {
    let (nu, g, f, beta) = (1.3, 0.7, 0.4, 0.8);
    let fm = FockMode::new(nu, 60);
    let modes = BathModeSet { nu: vec![nu], g: vec![g], band: 2.0, warnings: vec![] };
    let db = DiscreteBath::with_displacements(&modes, vec![f], beta);
    let s_op = (fm.bd() - &fm.b) * C64::new(f / nu, 0.0);
    let d_plus = (&s_op * C64::new(2.0, 0.0)).exp();
    let d_minus = (&s_op * C64::new(-2.0, 0.0)).exp();
    let z = (fm.bd() + &fm.b) * C64::new(g - f, 0.0);
    let mut tau = DMatrix::<C64>::zeros(fm.dim, fm.dim);
    let zsum: f64 = (0..fm.dim).map(|n| (-beta * nu * n as f64).exp()).sum();
    for n in 0..fm.dim {
        tau[(n, n)] = C64::new((-beta * nu * n as f64).exp() / zsum, 0.0);
    }
    assert!((db.b_avg() - (&tau * &d_plus).trace().re).abs() < 1e-12);
    let mat = |op: &Op| -> DMatrix<C64> {
        let (c, a) = op.terms[0];
        let base = match a {
            algebra::Atom::D(1) => d_plus.clone(),
            algebra::Atom::D(_) => d_minus.clone(),
            algebra::Atom::Z => z.clone(),
        };
        let id = DMatrix::<C64>::identity(fm.dim, fm.dim);
        fm.heis(&base, op.t) * c + id * op.constant
    };
    let b = db.b_avg();
    let ops = [Op::d(1, 0.3), Op::fluct(-1, 1.1, b), Op::z(0.7), Op::z(-0.4), Op::d(-1, 0.0)];
    for eta in [1.0, -1.0] {
        // Lab thermal state of population eta seen from the variational frame.
        let u = (&s_op * C64::new(-eta, 0.0)).exp();
        let rho = &u * &tau * u.adjoint();
        for a in &ops {
            for c in &ops {
                let exact = (&rho * mat(a) * mat(c)).trace();
                let v = algebra::expect_displaced(&db, &[*a, *c], eta);
                assert!((exact - v).norm() < 1e-10, "eta={eta} {a:?} {c:?}: {exact} vs {v}");
                let pv = algebra::pair_expect(&db, &a.displaced(eta, &db), &c.displaced(eta, &db));
                assert!((exact - pv).norm() < 1e-10);
            }
            let three = (&rho * mat(a) * mat(&ops[2]) * mat(&ops[1])).trace();
            let v = algebra::expect_displaced(&db, &[*a, ops[2], ops[1]], eta);
            assert!((three - v).norm() < 1e-10, "three-point eta={eta}");
        }
    }
}
