//! Quadrature rules: Gauss-Legendre nodes and an adaptive Gauss-Kronrod
//! integrator for complex-valued integrands.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    if n == 1 {
        return (vec![0.0], vec![2.0]);
    }
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Gauss-Legendre rule mapped to [0, 1].
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    (
        x.iter().map(|v| 0.5 * (v + 1.0)).collect(),
        w.iter().map(|v| 0.5 * v).collect(),
    )
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// One 15-point Kronrod panel; returns (integral, error estimate).
pub fn gk15<F: Fn(f64) -> C64>(f: &F, a: f64, b: f64) -> (C64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = fc * WGK[7];
    let mut rg = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        rk += s * WGK[j];
        if j % 2 == 1 {
            rg += s * WG[j / 2];
        }
    }
    let val = rk * h;
    let err = ((rk - rg) * h).norm();
    (val, err)
}

/// Adaptive Gauss-Kronrod integration of a complex integrand on [a, b].
///
/// The panel with the largest error estimate is bisected until the summed
/// estimate drops below `max(abs_tol, rel_tol * |I|)`.
pub fn integrate<F: Fn(f64) -> C64>(f: &F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<C64> {
    if a == b {
        return Ok(C64::new(0.0, 0.0));
    }
    let (v0, e0) = gk15(f, a, b);
    let mut panels = vec![(a, b, v0, e0)];
    let mut total = v0;
    let mut err: f64 = e0;
    let mut evals = 1usize;
    while err > abs_tol.max(rel_tol * total.norm()) {
        if evals > 20_000 {
            return Err(Error::Numerical(format!(
                "adaptive quadrature on [{a}, {b}] did not converge: estimate {:.3e}, error {:.3e}",
                total.norm(),
                err
            )));
        }
        let (idx, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.partial_cmp(&y.1 .3).unwrap())
            .unwrap();
        let (pa, pb, pv, pe) = panels.swap_remove(idx);
        let m = 0.5 * (pa + pb);
        let (v1, e1) = gk15(f, pa, m);
        let (v2, e2) = gk15(f, m, pb);
        total += v1 + v2 - pv;
        err += e1 + e2 - pe;
        panels.push((pa, m, v1, e1));
        panels.push((m, pb, v2, e2));
        evals += 2;
        if (pb - pa).abs() < 1e-14 * (1.0 + pa.abs()) {
            break;
        }
    }
    // Re-sum to remove accumulated rounding in the running totals.
    Ok(panels.iter().map(|p| p.2).sum())
}

/// Adaptive integration of an oscillatory integrand whose phase frequency is
/// `t`: the interval is first cut into panels no longer than pi/t.
pub fn integrate_oscillatory<F: Fn(f64) -> C64>(
    f: &F,
    a: f64,
    b: f64,
    t: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<C64> {
    let width = if t.abs() > 0.0 { std::f64::consts::PI / t.abs() } else { b - a };
    let n = (((b - a) / width).ceil() as usize).max(1);
    let h = (b - a) / n as f64;
    let tol = abs_tol / n as f64;
    let mut acc = C64::new(0.0, 0.0);
    for k in 0..n {
        let lo = a + k as f64 * h;
        let hi = if k + 1 == n { b } else { lo + h };
        acc += integrate(f, lo, hi, tol, rel_tol)?;
    }
    Ok(acc)
}

/// Weights (unit spacing) for n + 1 equally spaced samples: Gregory end
/// corrections of fourth order when n >= 6, Simpson-type or trapezoid below.
pub fn gregory_weights(n: usize) -> Vec<f64> {
    match n {
        0 => vec![0.0],
        1 => vec![0.5, 0.5],
        2 => vec![1.0 / 3.0, 4.0 / 3.0, 1.0 / 3.0],
        3 => vec![3.0 / 8.0, 9.0 / 8.0, 9.0 / 8.0, 3.0 / 8.0],
        4 | 5 => {
            let mut w = vec![1.0; n + 1];
            w[0] = 0.5;
            w[n] = 0.5;
            w
        }
        _ => {
            let mut w = vec![1.0; n + 1];
            for (k, c) in [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0].iter().enumerate() {
                w[k] = *c;
                w[n - k] = *c;
            }
            w
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rule_is_exact_for_polynomials() {
        for n in 1..12 {
            let (x, w) = gauss_legendre(n);
            for p in 0..(2 * n) {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p as i32)).sum();
                let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n={n} p={p} q={q}");
            }
        }
    }

    #[test]
    fn gregory_rule_integrates_cubics() {
        for n in 6..20 {
            let w = gregory_weights(n);
            let q: f64 = w.iter().enumerate().map(|(k, w)| w * (k as f64).powi(3)).sum();
            let exact = (n as f64).powi(4) / 4.0;
            assert!((q - exact).abs() < 1e-9 * exact);
        }
    }

    #[test]
    fn kronrod_adaptive_handles_endpoint_singularity() {
        let f = |x: f64| C64::new(x.sqrt(), 0.0);
        let v = integrate(&f, 0.0, 1.0, 1e-13, 1e-13).unwrap();
        assert!((v.re - 2.0 / 3.0).abs() < 1e-11);
    }

    #[test]
    fn oscillatory_integral_matches_closed_form() {
        let t = 200.0;
        let f = |x: f64| C64::new(0.0, x * t).exp() * (-x).exp();
        let v = integrate_oscillatory(&f, 0.0, 40.0, t, 1e-13, 1e-12).unwrap();
        let exact = (C64::new(1.0, 0.0) - C64::new(-40.0, 40.0 * t).exp()) / C64::new(1.0, -t);
        assert!((v - exact).norm() < 1e-11);
    }
}
