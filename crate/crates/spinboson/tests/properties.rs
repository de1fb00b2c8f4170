use std::sync::OnceLock;

use num_complex::Complex64 as C64;
use proptest::prelude::*;

use spinboson::bath::algebra::BathKernels;
use spinboson::bath::{CorrelationTables, SpectralDensityParams, TableOptions};
use spinboson::regression::{saturated_generator, spectrum, steady_state, RegressionOptions, SpectrumOptions, Window};
use spinboson::system::Op2;
use spinboson::tcl2::Generator;
use spinboson::variational::solve_self_consistent;

fn tables(s: f64, alpha: f64) -> CorrelationTables {
    let p = SpectralDensityParams::new(alpha, 10.0, s, 1.0).unwrap();
    let vs = solve_self_consistent(&p, 1.0, &Default::default()).unwrap();
    CorrelationTables::build(&p, &vs, TableOptions { t_table: 30.0, ..Default::default() }).unwrap()
}

fn shared() -> &'static [CorrelationTables] {
    static T: OnceLock<Vec<CorrelationTables>> = OnceLock::new();
    T.get_or_init(|| [1.0, 1.5, 2.0, 3.0].iter().map(|&s| tables(s, 0.1)).collect())
}

/// Density matrix from a Bloch vector inside the unit ball.
fn density() -> impl Strategy<Value = Op2> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(|(x, y, z)| {
        let r = (x * x + y * y + z * z).sqrt().max(1.0);
        let (x, y, z) = (x / r, y / r, z / r);
        Op2([[C64::new(0.5 * (1.0 + z), 0.0), C64::new(0.5 * x, -0.5 * y)], [C64::new(0.5 * x, 0.5 * y), C64::new(0.5 * (1.0 - z), 0.0)]])
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn dissipator_is_traceless_and_hermitian(k in 0usize..4, rho in density(), t in 0.0..30.0f64) {
        let gen = Generator::new(&shared()[k]);
        let d = gen.dissipator(t, &rho);
        prop_assert!(d.trace().norm() < 1e-12);
        prop_assert!(d.hermiticity_defect() < 1e-12);
    }

    #[test]
    fn correlations_are_conjugate_symmetric(k in 0usize..4, tau in 0.0..30.0f64) {
        let tb = &shared()[k];
        for f in [BathKernels::phi, BathKernels::k, BathKernels::czz] {
            let (a, b) = (f(tb, tau), f(tb, -tau));
            prop_assert!((a - b.conj()).norm() < 1e-9);
        }
    }

    #[test]
    fn spectrum_of_real_response_is_real(
        amps in prop::collection::vec(-1.0..1.0f64, 1..4),
        freqs in prop::collection::vec(0.2..3.0f64, 3),
        rate in 0.05..0.5f64,
    ) {
        let dt = 0.02;
        let tau: Vec<f64> = (0..=4000).map(|k| k as f64 * dt).collect();
        let s1: Vec<f64> = tau.iter().map(|&t| amps.iter().zip(&freqs).map(|(a, w)| a * (w * t).sin()).sum::<f64>() * (-rate * t).exp()).collect();
        let sp = spectrum(&tau, &s1, &SpectrumOptions { window: Window::None, ..Default::default() }).unwrap();
        prop_assert!(sp.max_imag < 1e-12 * sp.a.iter().fold(1.0f64, |m, v| m.max(v.abs())));
        prop_assert!(sp.a.iter().all(|v| v.is_finite()));
        // The transform is odd in the sine amplitudes.
        let neg: Vec<f64> = s1.iter().map(|v| -v).collect();
        let sn = spectrum(&tau, &neg, &SpectrumOptions { window: Window::None, ..Default::default() }).unwrap();
        for (a, b) in sp.a.iter().zip(&sn.a) {
            prop_assert!((a + b).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 4, ..ProptestConfig::default() })]

    #[test]
    fn steady_state_is_a_physical_fixed_point(k in 0usize..4, alpha in 0.02..0.08f64) {
        let s = [1.0, 1.5, 2.0, 3.0][k];
        let tb = tables(s, alpha);
        let ss = steady_state(&tb, &RegressionOptions::default()).unwrap();
        let rho = ss.rho;
        prop_assert!((rho.trace().re - 1.0).abs() < 1e-10);
        prop_assert!(rho.hermiticity_defect() < 1e-10);
        prop_assert!(rho.hermitian_eigenvalues()[0] > -1e-10);
        // Unbiased: equal populations.
        prop_assert!((ss.elements[0] - ss.elements[1]).abs() < 1e-8);
        let l = saturated_generator(&tb);
        prop_assert!(l.apply(&rho).frobenius() < 1e-9);
        prop_assert!(ss.method_gap < 1e-8);
    }
}
