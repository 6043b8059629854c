//! Constraint evaluators shared by projections, reporting and tests.

use serde::Serialize;

use crate::linalg::CVec;
use crate::metrics::{gain_along, Solution};
use crate::scenario::Scenario;

/// Gating tolerance for every feasibility decision.
pub const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintMargins {
    /// `P_k - ||w_k||^2`.
    pub per_user_power_slack: Vec<f64>,
    /// `P_A - ||n_eff||^2 - Σ P_k`.
    pub total_power_slack: f64,
    /// `[k][j]`: eavesdropper cap minus `|a_j^H w_k|^2`.
    pub eaves_cap_slack: Vec<Vec<f64>>,
    /// `|α_j|^2 a^H W̃ a - η_j`.
    pub sensing_margin: Vec<f64>,
    /// `[j][0]` at `θ_j - θ_0`, `[j][1]` at `θ_j + θ_0`: gain minus `η_j / 2`
    /// (positive means the main lobe is wider than `2 θ_0`).
    pub beamwidth_excess: Vec<[f64; 2]>,
}

impl ConstraintMargins {
    /// Power, eavesdropper-cap and sensing constraints hold; the beamwidth
    /// family is reported but does not gate.
    pub fn is_feasible(&self) -> bool {
        self.per_user_power_slack.iter().all(|s| *s >= -FEAS_TOL)
            && self.total_power_slack >= -FEAS_TOL
            && self.eaves_cap_slack.iter().flatten().all(|s| *s >= -FEAS_TOL)
            && self.sensing_floor_met()
    }

    pub fn sensing_floor_met(&self) -> bool {
        self.sensing_margin.iter().all(|s| *s >= -FEAS_TOL)
    }

    pub fn min_power_slack(&self) -> f64 {
        self.per_user_power_slack.iter().cloned().fold(self.total_power_slack, f64::min)
    }

    pub fn min_sensing_margin(&self) -> f64 {
        self.sensing_margin.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn min_eaves_slack(&self) -> f64 {
        self.eaves_cap_slack.iter().flatten().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn beamwidth_violations(&self) -> usize {
        self.beamwidth_excess.iter().flatten().filter(|e| **e > FEAS_TOL).count()
    }
}

/// Right side of the quadratic eavesdropper cap
/// `|a_j^H w_k|^2 <= (2^β_j - 1)(|α_j|^2 |a_j^H n_eff|^2 + σ_e^2) / |α_j|^2`.
/// `None` when `α_j = 0` (no leakage possible).
pub fn eaves_cap(scenario: &Scenario, an_effective: &CVec, j: usize) -> Option<f64> {
    let g = scenario.path_power(j);
    if g == 0.0 {
        return None;
    }
    let a = scenario.target_steering.column(j);
    let jam = a.dotc(an_effective).norm_sqr();
    let beta = scenario.config.eaves_rate_cap[j];
    Some((2f64.powf(beta) - 1.0) * (g * jam + scenario.config.noise_eve) / g)
}

/// `|α_j|^2 a^H(θ_j) W̃ a(θ_j)`.
pub fn sensing_gain(scenario: &Scenario, solution: &Solution, j: usize) -> f64 {
    scenario.path_power(j) * gain_along(solution, &scenario.steering(j))
}

pub fn evaluate_margins(scenario: &Scenario, solution: &Solution) -> ConstraintMargins {
    let cfg = &scenario.config;
    let per_user_power_slack = (0..cfg.n_users)
        .map(|k| cfg.per_user_power[k] - solution.beams.column(k).norm_squared())
        .collect();
    let total_power_slack = cfg.total_power - solution.an_power() - cfg.user_power_sum();
    let eaves_cap_slack = (0..cfg.n_users)
        .map(|k| {
            let w = solution.beams.column(k);
            (0..cfg.n_targets)
                .map(|j| match eaves_cap(scenario, &solution.an_effective, j) {
                    Some(cap) => cap - scenario.target_steering.column(j).dotc(&w).norm_sqr(),
                    None => f64::MAX,
                })
                .collect()
        })
        .collect();
    let sensing_margin =
        (0..cfg.n_targets).map(|j| sensing_gain(scenario, solution, j) - cfg.sensing_floor[j]).collect();
    let beamwidth_excess = (0..cfg.n_targets)
        .map(|j| {
            let g = scenario.path_power(j);
            let theta = cfg.target_angles[j];
            let half = cfg.sensing_floor[j] / 2.0;
            let side = |t: f64| g * gain_along(solution, &scenario.response(t)) - half;
            [side(theta - cfg.beamwidth_half), side(theta + cfg.beamwidth_half)]
        })
        .collect();
    ConstraintMargins {
        per_user_power_slack,
        total_power_slack,
        eaves_cap_slack,
        sensing_margin,
        beamwidth_excess,
    }
}
