//! Artificial-noise update with the beams held fixed.
//!
//! The AN vector enters each user's denominator only through `|h_k P⊥ n|^2`.
//! That quadratic is majorized around an anchor `z` shared by all users, so the
//! maximizer is a scalar-weighted combination and needs no matrix inverse.
//! With an exact projector the quadratic vanishes and the update leaves `n`
//! in place; the projection step then carries the power and sensing logic.

use serde::Serialize;

use crate::beamform_qt::{qt_bracket, qt_surrogate, residual_b, resolve_zeta, ZetaUpdate, KAPPA_FLOOR};
use crate::feasibility::{evaluate_margins, FEAS_TOL};
use crate::linalg::{lambda_max, outer, quadratic_majorant, CMat, CVec, C64};
use crate::metrics::Solution;
use crate::nullspace::NullProjector;
use crate::scenario::Scenario;

/// Target multiplier applied when scaling AN up to a sensing floor.
const SENSING_HEADROOM: f64 = 1.0 + 1e-9;

#[derive(Debug, Clone)]
pub struct AuxStateII {
    pub y_t: Vec<C64>,
    pub zeta_t: Vec<f64>,
    pub z_shared: CVec,
    pub kappa_t: Vec<f64>,
    pub d_mats_t: Vec<CMat>,
    /// Per-user weights, taken equal to the fairness weights.
    pub mu_t: Vec<f64>,
    pub zeta_fallbacks: usize,
}

impl AuxStateII {
    pub fn from_solution(
        scenario: &Scenario,
        solution: &Solution,
        projector: &NullProjector,
        mu: &[f64],
        kappa_margin: f64,
    ) -> Self {
        let k_users = scenario.n_users();
        let n = scenario.n_tx();
        let mut aux = AuxStateII {
            y_t: vec![C64::new(0.0, 0.0); k_users],
            zeta_t: vec![0.0; k_users],
            z_shared: update_z2(solution),
            kappa_t: vec![KAPPA_FLOOR; k_users],
            d_mats_t: vec![CMat::zeros(n, n); k_users],
            mu_t: mu.to_vec(),
            zeta_fallbacks: 0,
        };
        for k in 0..k_users {
            aux.y_t[k] = update_y2(k, solution, scenario);
            let r = residual_b(scenario, solution, k);
            aux.zeta_t[k] = resolve_zeta(qt_bracket(aux.y_t[k], &r), None).value;
        }
        for k in 0..k_users {
            let (d, kappa) = build_d2(k, &aux, scenario, projector, kappa_margin);
            aux.d_mats_t[k] = d;
            aux.kappa_t[k] = kappa;
        }
        aux
    }
}

/// `z := n`.
pub fn update_z2(solution: &Solution) -> CVec {
    solution.an.clone()
}

/// `ỹ_k = e_k / B̂_k(n)`.
pub fn update_y2(k: usize, solution: &Solution, scenario: &Scenario) -> C64 {
    let r = residual_b(scenario, solution, k);
    r.e / r.b_hat
}

/// The closed form as usually printed:
/// `[ |h_k w_k|^2 (|ỹ_k|^2 + Σ_{i≠k} |ỹ_i|^2) + σ_k^2 |ỹ_k|^2 - 2Re{ỹ_k* h_k w_k} ]^{-1} / ln2 - 1`.
pub fn zeta2_printed(k: usize, y: &[C64], e: C64, sigma2: f64) -> Option<f64> {
    let others: f64 = y.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, v)| v.norm_sqr()).sum();
    let bracket =
        e.norm_sqr() * (y[k].norm_sqr() + others) + sigma2 * y[k].norm_sqr() - 2.0 * (y[k].conj() * e).re;
    (bracket > 0.0).then(|| 1.0 / (std::f64::consts::LN_2 * bracket) - 1.0)
}

/// `ζ̃_k` for fixed `n` and `ỹ`; falls back to the exact stationary point
/// when the printed form is not stationary.
pub fn update_zeta2(k: usize, aux: &AuxStateII, solution: &Solution, scenario: &Scenario) -> ZetaUpdate {
    let r = residual_b(scenario, solution, k);
    let printed = zeta2_printed(k, &aux.y_t, r.e, scenario.config.noise_user[k]);
    resolve_zeta(qt_bracket(aux.y_t[k], &r), printed)
}

/// `D̃_k = μ̃_k (1+ζ̃_k) |ỹ_k|^2 u u^H` with `u = P⊥^H h_k^H`, and
/// `κ̃_k = margin · λ_max(D̃_k)` floored at [`KAPPA_FLOOR`].
pub fn build_d2(
    k: usize,
    aux: &AuxStateII,
    scenario: &Scenario,
    projector: &NullProjector,
    kappa_margin: f64,
) -> (CMat, f64) {
    let h_conj = scenario.channel(k).map(|x| x.conj());
    let u = projector.matrix.adjoint() * h_conj;
    let c = aux.mu_t[k] * (1.0 + aux.zeta_t[k]) * aux.y_t[k].norm_sqr();
    let d = outer(&u, &u) * C64::from(c);
    let kappa = (kappa_margin * lambda_max(&d)).max(KAPPA_FLOOR);
    (d, kappa)
}

/// `n = (Σ κ̃_k)^{-1} Σ (κ̃_k I - D̃_k) z`. Leaves `current_n` when `Σ κ̃ = 0`.
pub fn update_n(aux: &AuxStateII, current_n: &CVec) -> CVec {
    let total: f64 = aux.kappa_t.iter().sum();
    if total <= 0.0 {
        return current_n.clone();
    }
    let z = &aux.z_shared;
    let mut acc = z * C64::from(total);
    for d in &aux.d_mats_t {
        acc -= d * z;
    }
    acc / C64::from(total)
}

/// AN surrogate: the quadratic-transform surrogate with the AN auxiliaries.
pub fn an_surrogate(scenario: &Scenario, solution: &Solution, aux: &AuxStateII) -> f64 {
    qt_surrogate(scenario, solution, &aux.y_t, &aux.zeta_t, &aux.mu_t)
}

/// Majorized AN surrogate with anchor `z`: the AN leakage term
/// `n^H D̃_k n` is replaced by its upper bound around `z`.
pub fn an_majorized_surrogate(
    scenario: &Scenario,
    solution: &Solution,
    aux: &AuxStateII,
    projector: &NullProjector,
) -> f64 {
    let mut total = 0.0;
    for k in 0..scenario.n_users() {
        let r = residual_b(scenario, solution, k);
        let weight = aux.mu_t[k] * (1.0 + aux.zeta_t[k]);
        let y = aux.y_t[k];
        let leak = crate::linalg::row_dot(&scenario.channel(k), &projector.apply(&solution.an)).norm_sqr();
        let b_without_an = r.b_hat - leak;
        total += weight * (2.0 * (y.conj() * r.e).re - y.norm_sqr() * b_without_an)
            - quadratic_majorant(&aux.d_mats_t[k], aux.kappa_t[k], &solution.an, &aux.z_shared)
            + aux.mu_t[k] * ((1.0 + aux.zeta_t[k]).log2() - aux.zeta_t[k]);
    }
    total
}

/// Surrogate trace of one AN pass.
#[derive(Debug, Clone, Default)]
pub struct AnPassReport {
    pub surrogate: Vec<f64>,
    pub zeta_fallbacks: usize,
}

impl AnPassReport {
    pub fn worst_decrease(&self) -> f64 {
        self.surrogate.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max)
    }

    pub fn last(&self) -> f64 {
        self.surrogate.last().copied().unwrap_or(f64::NAN)
    }
}

/// One pass of `z → ỹ → ζ̃ → n`, without projection.
pub fn an_pass(
    scenario: &Scenario,
    solution: &mut Solution,
    aux: &mut AuxStateII,
    projector: &NullProjector,
    kappa_margin: f64,
) -> AnPassReport {
    let mut report = AnPassReport::default();
    report.surrogate.push(an_surrogate(scenario, solution, aux));
    aux.z_shared = update_z2(solution);
    for k in 0..scenario.n_users() {
        aux.y_t[k] = update_y2(k, solution, scenario);
    }
    report.surrogate.push(an_surrogate(scenario, solution, aux));
    for k in 0..scenario.n_users() {
        let z = update_zeta2(k, aux, solution, scenario);
        aux.zeta_t[k] = z.value;
        report.zeta_fallbacks += z.fallback as usize;
    }
    report.surrogate.push(an_surrogate(scenario, solution, aux));
    for k in 0..scenario.n_users() {
        let (d, kappa) = build_d2(k, aux, scenario, projector, kappa_margin);
        aux.d_mats_t[k] = d;
        aux.kappa_t[k] = kappa;
    }
    let n = update_n(aux, &solution.an);
    solution.set_an(n, projector);
    report.surrogate.push(an_surrogate(scenario, solution, aux));
    aux.zeta_fallbacks += report.zeta_fallbacks;
    report
}

/// Outcome of the AN projection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    /// `P_A - Σ P_k - ||P⊥ n||^2` after projection.
    pub power_slack: f64,
    pub min_sensing_margin: f64,
    /// `(target, side)` pairs with side 0 for `θ_j - θ_0`, 1 for `θ_j + θ_0`.
    pub beamwidth_violations: Vec<(usize, usize)>,
    /// Targets whose sensing floor cannot be met within the AN budget.
    pub infeasible_targets: Vec<usize>,
    /// Factor applied to `n`.
    pub scale: f64,
}

impl FeasibilityReport {
    pub fn is_clean(&self) -> bool {
        self.beamwidth_violations.is_empty() && self.infeasible_targets.is_empty() && self.scale == 1.0
    }
}

/// Radial projection of `n` onto the AN budget, then scaling up to the
/// sensing floors if the budget allows. Beamwidth is only checked.
///
/// The gain at `θ_j` is `|α_j|^2 (G_w + c^2 G_n)` in the scale `c`, so the
/// smallest factor meeting every floor has a closed form.
pub fn project_n(
    n: &CVec,
    solution: &Solution,
    scenario: &Scenario,
    projector: &NullProjector,
) -> (CVec, FeasibilityReport) {
    let cfg = &scenario.config;
    let budget = cfg.total_power - cfg.user_power_sum();
    let n_eff = projector.apply(n);
    let power = n_eff.norm_squared();
    let c_max = if power > 0.0 { (budget.max(0.0) / power).sqrt() } else { f64::INFINITY };

    let mut scale: f64 = if power > budget { c_max } else { 1.0 };
    let mut infeasible_targets = Vec::new();
    let mut needs = Vec::with_capacity(cfg.n_targets);
    for j in 0..cfg.n_targets {
        let g = scenario.path_power(j);
        let a = scenario.steering(j);
        let beam_part: f64 = solution.beams.column_iter().map(|w| a.dotc(&w).norm_sqr()).sum();
        let an_part = a.dotc(&n_eff).norm_sqr();
        let eta = cfg.sensing_floor[j];
        if g * (beam_part + scale * scale * an_part) >= eta {
            continue;
        }
        let need = if g > 0.0 && an_part > 0.0 {
            ((eta * SENSING_HEADROOM / g - beam_part) / an_part).sqrt()
        } else {
            f64::INFINITY
        };
        needs.push((j, need));
    }
    for &(j, need) in &needs {
        if need > c_max {
            infeasible_targets.push(j);
        }
        scale = scale.max(need.min(c_max));
    }

    let projected = if scale == 1.0 { n.clone() } else { n * C64::from(scale) };
    let mut trial = solution.clone();
    trial.set_an(projected.clone(), projector);
    let margins = evaluate_margins(scenario, &trial);
    let beamwidth_violations = margins
        .beamwidth_excess
        .iter()
        .enumerate()
        .flat_map(|(j, sides)| {
            sides.iter().enumerate().filter(|(_, v)| **v < -FEAS_TOL).map(move |(s, _)| (j, s))
        })
        .collect();
    let report = FeasibilityReport {
        power_slack: budget - trial.an_power(),
        min_sensing_margin: margins.min_sensing_margin(),
        beamwidth_violations,
        infeasible_targets,
        scale,
    };
    (projected, report)
}

/// Gain at `θ_j` contributed by the AN alone, `|α_j|^2 |a_j^H n_eff|^2`.
pub fn an_sensing_gain(scenario: &Scenario, solution: &Solution, j: usize) -> f64 {
    let a = scenario.steering(j);
    scenario.path_power(j) * a.dotc(&solution.an_effective).norm_sqr()
}
