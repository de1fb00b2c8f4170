use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bath parameters: J(nu) = alpha nu^s nu_c^(1-s) exp(-nu/nu_c) at inverse
/// temperature beta. Frequencies are in units of the bare tunnelling Delta.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralDensityParams {
    pub alpha: f64,
    pub nu_c: f64,
    pub s: f64,
    pub beta: f64,
}

impl SpectralDensityParams {
    pub fn new(alpha: f64, nu_c: f64, s: f64, beta: f64) -> Result<Self> {
        let p = Self { alpha, nu_c, s, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            bad.push(format!("alpha must be >= 0 (got {})", self.alpha));
        }
        if !(self.nu_c > 0.0 && self.nu_c.is_finite()) {
            bad.push(format!("nu_c must be > 0 (got {})", self.nu_c));
        }
        if !(self.s > 0.0 && self.s.is_finite()) {
            bad.push(format!("s must be > 0 (got {})", self.s));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            bad.push(format!("beta must be > 0 (got {})", self.beta));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(bad))
        }
    }

    /// Upper frequency cut used by every bath integral.
    pub fn nu_max(&self) -> f64 {
        40.0 * self.nu_c
    }

    /// Lower frequency cut; the integrands vanish as a power of nu below it.
    pub fn nu_min(&self) -> f64 {
        1e-12 * self.nu_c
    }

    /// J(nu) without the domain check, for use inside quadrature loops.
    #[inline]
    pub fn j(&self, nu: f64) -> f64 {
        if nu <= 0.0 {
            return 0.0;
        }
        self.alpha * nu.powf(self.s) * self.nu_c.powf(1.0 - self.s) * (-nu / self.nu_c).exp()
    }

    /// coth(beta nu / 2).
    #[inline]
    pub fn coth(&self, nu: f64) -> f64 {
        1.0 / (0.5 * self.beta * nu).tanh()
    }
}

/// Spectral density J(nu).
pub fn spectral_density(nu: f64, p: &SpectralDensityParams) -> Result<f64> {
    if !(nu >= 0.0) {
        return Err(Error::Domain(format!("spectral density needs nu >= 0 (got {nu})")));
    }
    Ok(p.j(nu))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_frequency_and_reference_value() {
        let p = SpectralDensityParams::new(0.1, 10.0, 1.0, 1.0).unwrap();
        assert_eq!(spectral_density(0.0, &p).unwrap(), 0.0);
        assert!((spectral_density(10.0, &p).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert!(spectral_density(-1.0, &p).is_err());
    }

    #[test]
    fn maximum_sits_at_s_nu_c() {
        // Golden-section search on -J.
        for s in [1.0, 2.0, 3.0] {
            let p = SpectralDensityParams::new(0.1, 10.0, s, 1.0).unwrap();
            let g = 0.5 * (5f64.sqrt() - 1.0);
            let (mut a, mut b) = (1e-3, 200.0);
            for _ in 0..200 {
                let c = b - g * (b - a);
                let d = a + g * (b - a);
                if p.j(c) > p.j(d) {
                    b = d;
                } else {
                    a = c;
                }
            }
            assert!((0.5 * (a + b) - s * 10.0).abs() < 1e-6);
        }
    }

    #[test]
    fn invalid_parameters_are_listed() {
        match SpectralDensityParams::new(-1.0, 0.0, 1.0, 1.0) {
            Err(Error::Validation(v)) => assert_eq!(v.len(), 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
