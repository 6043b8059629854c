//! Evaluation formulas: SINR, eavesdropper SNR, secrecy and data rates, the
//! Jain index, Shannon entropy and angular beam gain.

use serde::Serialize;

use crate::error::{IsacError, Result};
use crate::linalg::{herm_dot, row_dot, CMat, CVec, C64};
use crate::nullspace::NullProjector;
use crate::scenario::{steering_vector, Scenario};

/// Beamformers and artificial noise.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    /// N_t x K, column k is `w_k`.
    pub beams: CMat,
    /// Raw AN vector `n`.
    pub an: CVec,
    /// Cached `P⊥ n`.
    pub an_effective: CVec,
}

impl Solution {
    pub fn new(beams: CMat, an: CVec, projector: &NullProjector) -> Self {
        let an_effective = projector.apply(&an);
        Solution { beams, an, an_effective }
    }

    pub fn zeros(n_tx: usize, n_users: usize) -> Self {
        Solution {
            beams: CMat::zeros(n_tx, n_users),
            an: CVec::zeros(n_tx),
            an_effective: CVec::zeros(n_tx),
        }
    }

    pub fn beam(&self, k: usize) -> CVec {
        self.beams.column(k).into_owned()
    }

    pub fn set_an(&mut self, an: CVec, projector: &NullProjector) {
        self.an_effective = projector.apply(&an);
        self.an = an;
    }

    /// Scales the raw AN; the effective AN scales with it.
    pub fn scale_an(&mut self, c: f64) {
        self.an *= C64::from(c);
        self.an_effective *= C64::from(c);
    }

    pub fn an_power(&self) -> f64 {
        self.an_effective.norm_squared()
    }

    /// Total transmit covariance `Σ w_k w_k^H + n_eff n_eff^H`.
    pub fn transmit_covariance(&self) -> CMat {
        &self.beams * self.beams.adjoint() + &self.an_effective * self.an_effective.adjoint()
    }
}

/// Per-user link quantities.
#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    pub sinr_legit: Vec<f64>,
    /// `snr_eve[k][j]`.
    pub snr_eve: Vec<Vec<f64>>,
    pub secrecy_per_user: Vec<f64>,
    pub sum_secrecy: f64,
    pub sum_rate: f64,
}

/// `e_k = h_k w_k` and `B_k` (interference + AN leakage + noise).
pub fn signal_and_residual(scenario: &Scenario, solution: &Solution, k: usize) -> (C64, f64) {
    let h = scenario.channel(k);
    let mut e = C64::new(0.0, 0.0);
    let mut residual = scenario.config.noise_user[k] + row_dot(&h, &solution.an_effective).norm_sqr();
    for (i, w) in solution.beams.column_iter().enumerate() {
        let hw: C64 = h.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
        if i == k {
            e = hw;
        } else {
            residual += hw.norm_sqr();
        }
    }
    (e, residual)
}

/// Legitimate-user SINR `|h_k w_k|^2 / (Σ_{i≠k} |h_k w_i|^2 + |h_k n_eff|^2 + σ_k^2)`.
pub fn sinr_legitimate(scenario: &Scenario, solution: &Solution, k: usize) -> f64 {
    let (e, residual) = signal_and_residual(scenario, solution, k);
    e.norm_sqr() / residual
}

/// SNR of user k's stream at target j.
pub fn snr_eavesdropper(scenario: &Scenario, solution: &Solution, k: usize, j: usize) -> f64 {
    let a = scenario.target_steering.column(j);
    let g = scenario.path_power(j);
    let signal = a.dotc(&solution.beams.column(k)).norm_sqr();
    let jam = a.dotc(&solution.an_effective).norm_sqr();
    g * signal / (g * jam + scenario.config.noise_eve)
}

/// `[log2(1+ρ_L) - max_j log2(1+ρ_E,j)]^+`.
pub fn secrecy_rate_user(rho_l: f64, rho_e_row: &[f64]) -> f64 {
    let leak = rho_e_row.iter().map(|r| (1.0 + r).log2()).fold(0.0, f64::max);
    ((1.0 + rho_l).log2() - leak).max(0.0)
}

pub fn sum_secrecy_rate(rho_l: &[f64], rho_e: &[Vec<f64>]) -> f64 {
    rho_l.iter().zip(rho_e).map(|(l, e)| secrecy_rate_user(*l, e)).sum()
}

pub fn rate_report(scenario: &Scenario, solution: &Solution) -> RateReport {
    let k_users = scenario.n_users();
    let sinr_legit: Vec<f64> = (0..k_users).map(|k| sinr_legitimate(scenario, solution, k)).collect();
    let snr_eve: Vec<Vec<f64>> = (0..k_users)
        .map(|k| (0..scenario.n_targets()).map(|j| snr_eavesdropper(scenario, solution, k, j)).collect())
        .collect();
    let secrecy_per_user: Vec<f64> =
        sinr_legit.iter().zip(&snr_eve).map(|(l, e)| secrecy_rate_user(*l, e)).collect();
    let sum_secrecy = secrecy_per_user.iter().sum();
    let sum_rate = sinr_legit.iter().map(|r| (1.0 + r).log2()).sum();
    RateReport { sinr_legit, snr_eve, secrecy_per_user, sum_secrecy, sum_rate }
}

/// Jain's index of the weighted SINRs `μ_k ρ_k`.
pub fn jain_index(mu: &[f64], rho: &[f64]) -> Result<f64> {
    if mu.len() != rho.len() || mu.is_empty() {
        return Err(IsacError::Domain("jain_index needs equal-length, non-empty inputs".into()));
    }
    let k = mu.len() as f64;
    let (sum, sum_sq) = mu.iter().zip(rho).fold((0.0, 0.0), |(s, q), (m, r)| {
        let x = m * r;
        (s + x, q + x * x)
    });
    if sum_sq <= 0.0 {
        return Err(IsacError::UndefinedFairness);
    }
    Ok(sum * sum / (k * sum_sq))
}

/// Shannon entropy in nats with `0 log 0 = 0`.
pub fn entropy(mu: &[f64]) -> f64 {
    -mu.iter().filter(|m| **m > 0.0).map(|m| m * m.ln()).sum::<f64>()
}

/// `a^H(θ) W̃ a(θ)` for `|θ| <= π/2`.
pub fn beam_gain(solution: &Solution, scenario: &Scenario, theta: f64) -> Result<f64> {
    let a = steering_vector(theta, scenario.n_tx(), scenario.config.spacing_ratio)?;
    Ok(gain_along(solution, &a))
}

/// `a^H W̃ a` for an arbitrary array response `a`.
pub fn gain_along(solution: &Solution, a: &CVec) -> f64 {
    let beams: f64 = solution.beams.column_iter().map(|w| a.dotc(&w).norm_sqr()).sum();
    beams + herm_dot(a, &solution.an_effective).norm_sqr()
}
