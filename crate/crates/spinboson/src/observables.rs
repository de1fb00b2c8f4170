//! Lab-frame spin observables from a variational-frame trajectory.
//!
//! sigma_z is frame invariant. sigma_x = sigma B_+ + sigma^dag B_- in the
//! variational frame, so its lab expectation needs system-bath correlations:
//! the uncorrected estimate factorises <B> <sigma_x>, the corrected one adds
//! the first-order correlated part of the state (and, for lab-frame thermal
//! preparations, the inhomogeneous history of the initial bath state).

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::bath::correlations::CorrelationTables;
use crate::error::{Error, Result};
use crate::system::{interaction_picture_op, Op2};
use crate::tcl2::{base_index, base_moments, inhomogeneous_history, interpolate_series, ladder_kernel, AtomOp, DensityTrajectory, Ladder};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Greek (dressing) index of the lab-frame coupling sigma B_+ + sigma^dag B_-.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Greek {
    Plus,
    Minus,
}

impl Greek {
    pub const ALL: [Greek; 2] = [Greek::Plus, Greek::Minus];

    pub fn sign(self) -> i8 {
        match self {
            Greek::Plus => 1,
            Greek::Minus => -1,
        }
    }

    /// Index of the matching ladder coupling operator (0 for +, 1 for -).
    pub fn ladder(self) -> usize {
        match self {
            Greek::Plus => 0,
            Greek::Minus => 1,
        }
    }

    /// System operator s_alpha: sigma for +, sigma^dag for -.
    pub fn system_op(self) -> Op2 {
        match self {
            Greek::Plus => Op2::lower(),
            Greek::Minus => Op2::raise(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaXMode {
    Uncorrected,
    Corrected,
}

pub fn sigma_z(traj: &DensityTrajectory) -> Vec<f64> {
    (0..traj.states.len()).map(|n| traj.schroedinger(n).expect(&Op2::sigma_z()).re).collect()
}

/// Homogeneous first-order correlation operators at time t:
/// Psi_alpha = sum_j int_0^t <B_alpha(t) B_j(s)> A_j(s) ds and
/// Theta_alpha = sum_j int_0^t <B_j(s) B_alpha(t)> A_j(s) ds (interaction picture).
pub fn correlation_operators(tables: &CorrelationTables, ladder: &Ladder, alpha: Greek, t: f64) -> (Op2, Op2) {
    let mom = base_moments(tables, t);
    let b = tables.b_avg;
    let a = alpha.ladder();
    let (s, c) = (tables.delta_r * t).sin_cos();
    let mut psi = Op2::ZERO;
    let mut theta = Op2::ZERO;
    for j in 0..3 {
        let r = &ladder.rot[j];
        let (cf, base) = ladder_kernel(a, j, b);
        let m = mom[base_index(base)].scale(cf);
        psi += m.one * r.p + (m.cos * c + m.sin * s) * r.q + (m.cos * s - m.sin * c) * r.r;
        let (cf, base) = ladder_kernel(j, a, b);
        let m = mom[base_index(base)].conj().scale(cf);
        theta += m.one * r.p + (m.cos * c + m.sin * s) * r.q + (m.cos * s - m.sin * c) * r.r;
    }
    (psi, theta)
}

/// <sigma B_+>(t) in the variational frame on the trajectory grid.
pub fn dressed_coherence(tables: &CorrelationTables, traj: &DensityTrajectory, mode: SigmaXMode) -> Result<Vec<C64>> {
    let b = tables.b_avg;
    let dr = tables.delta_r;
    let ladder = Ladder::from_tables(tables);
    let mut out: Vec<C64> = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(&t, rho)| b * interaction_picture_op(&Op2::lower(), t, dr).expect(rho))
        .collect();
    if mode == SigmaXMode::Uncorrected {
        return Ok(out);
    }
    for (n, (&t, rho)) in traj.times.iter().zip(&traj.states).enumerate() {
        let sig = interaction_picture_op(&Op2::lower(), t, dr);
        let (psi, theta) = correlation_operators(tables, &ladder, Greek::Plus, t);
        out[n] += -I * sig.expect(&(psi * *rho - *rho * theta));
    }
    if traj.inhomogeneous {
        crate::tcl2::check_diagonal(&traj.rho0)?;
        let t_last = *traj.times.last().unwrap_or(&0.0);
        if t_last > tables.horizon() * (1.0 + 1e-12) {
            return Err(Error::Config(format!("t_final {t_last} exceeds the correlation table horizon {}", tables.horizon())));
        }
        let h = tables.opts.dtau;
        let n_steps = (t_last / h).ceil() as usize + 6;
        for (k, eta) in [(0usize, -1.0), (1usize, 1.0)] {
            let p = traj.rho0.0[k][k].re;
            if p == 0.0 {
                continue;
            }
            let pi = Op2::projector(k).scale_re(p);
            let hist = inhomogeneous_history(tables, eta, &[AtomOp::full(1)], n_steps);
            for (n, &t) in traj.times.iter().enumerate() {
                let sig = interaction_picture_op(&Op2::lower(), t, dr);
                let gamma = interpolate_series(&hist.gamma[0], h, t);
                let m = interpolate_series(&hist.m[0], h, t);
                let nn = interpolate_series(&hist.n[0], h, t);
                out[n] += gamma * sig.expect(&pi) - I * sig.expect(&(m * pi - pi * nn));
            }
        }
    }
    Ok(out)
}

/// Lab-frame <sigma_x>(t) = 2 Re <sigma B_+>.
pub fn sigma_x_lab(tables: &CorrelationTables, traj: &DensityTrajectory, mode: SigmaXMode) -> Result<Vec<f64>> {
    Ok(dressed_coherence(tables, traj, mode)?.into_iter().map(|v| 2.0 * v.re).collect())
}
