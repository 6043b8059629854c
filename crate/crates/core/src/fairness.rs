//! Fairness/throughput weight optimizer.
//!
//! Weights `μ` on the probability simplex trade the normalized weighted sum
//! rate against the Jain index of the weighted SINRs, with an entropy bonus
//! and a squared-hinge penalty keeping the index above a floor. The tradeoff
//! parameter `χ` walks from 1 (pure fairness) to 0 (pure throughput); each
//! stage runs projected gradient ascent with backtracking and a trust-region
//! blend toward the previous iterate.

use serde::Serialize;

use crate::error::{IsacError, Result};
use crate::metrics::{entropy, jain_index};
use crate::scenario::SystemConfig;

/// Lower clamp applied to every weight before evaluating `log μ_k`.
pub const MU_FLOOR: f64 = 1e-12;
const MAX_HALVINGS: usize = 20;

/// Objective coefficients for one stage of the tradeoff path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveParams {
    pub chi: f64,
    pub entropy_weight: f64,
    pub penalty_weight: f64,
    pub fairness_floor: f64,
}

impl ObjectiveParams {
    pub fn from_config(config: &SystemConfig, chi: f64) -> Self {
        ObjectiveParams {
            chi,
            entropy_weight: config.entropy_weight,
            penalty_weight: config.penalty_weight,
            fairness_floor: config.fairness_floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FairnessState {
    pub t: usize,
    pub mu: Vec<f64>,
    pub chi: f64,
    pub g_norm: f64,
    pub objective: f64,
    pub fairness: f64,
    pub entropy_val: f64,
    /// `Σ μ_k log2(1 + ρ_k)`.
    pub sum_rate_term: f64,
}

#[derive(Debug, Clone)]
pub struct HfroResult {
    pub mu: Vec<f64>,
    /// Final state of every stage, one per `χ_t`.
    pub stages: Vec<FairnessState>,
    /// Every accepted inner iterate, in order.
    pub iterates: Vec<Vec<f64>>,
}

fn check_rates(rho: &[f64]) -> Result<()> {
    if rho.is_empty() {
        return Err(IsacError::Domain("empty SINR vector".into()));
    }
    if let Some(bad) = rho.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
        return Err(IsacError::Domain(format!("SINR values must be positive and finite, got {bad}")));
    }
    Ok(())
}

/// `G = 1 / max_{μ∈Δ} Σ μ_k log2(1+ρ_k) = 1 / max_k log2(1+ρ_k)`.
pub fn normalization_g(rho: &[f64]) -> Result<f64> {
    check_rates(rho)?;
    let best = rho.iter().map(|r| (1.0 + r).log2()).fold(0.0, f64::max);
    Ok(1.0 / best)
}

/// Weights equalizing every `μ_k ρ_k`: `μ_k = c / ρ_k`, `c = (Σ 1/ρ_k)^{-1}`.
pub fn fairness_closed_form(rho: &[f64]) -> Result<Vec<f64>> {
    check_rates(rho)?;
    let c = 1.0 / rho.iter().map(|r| 1.0 / r).sum::<f64>();
    Ok(rho.iter().map(|r| c / r).collect())
}

/// Weight on the best user only (the unregularized throughput extreme).
pub fn throughput_vertex(rho: &[f64]) -> Result<Vec<f64>> {
    check_rates(rho)?;
    let best = rho
        .iter()
        .enumerate()
        .fold(0, |b, (i, r)| if *r > rho[b] { i } else { b });
    Ok((0..rho.len()).map(|i| if i == best { 1.0 } else { 0.0 }).collect())
}

pub fn weighted_rate(mu: &[f64], rho: &[f64]) -> f64 {
    mu.iter().zip(rho).map(|(m, r)| m * (1.0 + r).log2()).sum()
}

/// `(1-χ) G Σ μ_k log2(1+ρ_k) + χ F(μ) + ν H(μ) - λ max(0, ξ_F - F(μ))^2`.
pub fn penalized_objective(mu: &[f64], rho: &[f64], params: &ObjectiveParams) -> Result<f64> {
    let g = normalization_g(rho)?;
    let f = jain_index(mu, rho)?;
    let shortfall = (params.fairness_floor - f).max(0.0);
    Ok((1.0 - params.chi) * g * weighted_rate(mu, rho) + params.chi * f + params.entropy_weight * entropy(mu)
        - params.penalty_weight * shortfall * shortfall)
}

/// `∂F/∂μ_k = 2 S r_k / (K Q) - 2 S^2 μ_k r_k^2 / (K Q^2)` with
/// `S = Σ μ_i r_i`, `Q = Σ (μ_i r_i)^2`.
fn jain_gradient(mu: &[f64], rho: &[f64]) -> Result<Vec<f64>> {
    let k = mu.len() as f64;
    let s: f64 = mu.iter().zip(rho).map(|(m, r)| m * r).sum();
    let q: f64 = mu.iter().zip(rho).map(|(m, r)| (m * r) * (m * r)).sum();
    if q <= 0.0 {
        return Err(IsacError::UndefinedFairness);
    }
    Ok(mu
        .iter()
        .zip(rho)
        .map(|(m, r)| 2.0 * s * r / (k * q) - 2.0 * s * s * m * r * r / (k * q * q))
        .collect())
}

/// Gradient of [`penalized_objective`] at an interior point.
pub fn gradient_mu(mu: &[f64], rho: &[f64], params: &ObjectiveParams) -> Result<Vec<f64>> {
    if let Some(bad) = mu.iter().find(|m| !(**m > 0.0)) {
        return Err(IsacError::Domain(format!("gradient needs interior weights, got {bad}")));
    }
    let g = normalization_g(rho)?;
    let dj = jain_gradient(mu, rho)?;
    let f = jain_index(mu, rho)?;
    let shortfall = (params.fairness_floor - f).max(0.0);
    let fairness_coeff = params.chi + 2.0 * params.penalty_weight * shortfall;
    Ok(mu
        .iter()
        .zip(rho)
        .zip(dj)
        .map(|((m, r), d)| {
            (1.0 - params.chi) * g * (1.0 + r).log2() + fairness_coeff * d - params.entropy_weight * (1.0 + m.ln())
        })
        .collect())
}

/// Euclidean projection onto the probability simplex (sort and threshold).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (i, u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (i + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
        }
    }
    v.iter().map(|x| (x - tau).max(0.0)).collect()
}

fn clamp_interior(mu: &mut [f64]) {
    for m in mu.iter_mut() {
        *m = m.max(MU_FLOOR);
    }
    let sum: f64 = mu.iter().sum();
    for m in mu.iter_mut() {
        *m /= sum;
    }
}

/// `T` points from 1 down to 0 inclusive.
pub fn tradeoff_path(steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => (0..steps).map(|t| 1.0 - t as f64 / (steps - 1) as f64).collect(),
    }
}

fn state(t: usize, mu: &[f64], rho: &[f64], params: &ObjectiveParams, g: f64) -> Result<FairnessState> {
    let objective = penalized_objective(mu, rho, params)?;
    if !objective.is_finite() {
        return Err(IsacError::NonFinite(format!("fairness objective at stage {t}: {objective}")));
    }
    Ok(FairnessState {
        t,
        mu: mu.to_vec(),
        chi: params.chi,
        g_norm: g,
        objective,
        fairness: jain_index(mu, rho)?,
        entropy_val: entropy(mu),
        sum_rate_term: weighted_rate(mu, rho),
    })
}

/// Runs the tradeoff path from the configuration (`T = tradeoff_steps`).
pub fn hfro_optimize(rho: &[f64], config: &SystemConfig) -> Result<HfroResult> {
    hfro_optimize_path(rho, config, &tradeoff_path(config.tradeoff_steps))
}

/// Runs the optimizer over an explicit `χ` path.
pub fn hfro_optimize_path(rho: &[f64], config: &SystemConfig, path: &[f64]) -> Result<HfroResult> {
    let g = normalization_g(rho)?;
    let mut mu = fairness_closed_form(rho)?;
    clamp_interior(&mut mu);
    let eta = config.trust_rate;
    let mut stages = Vec::with_capacity(path.len());
    let mut iterates = Vec::with_capacity(path.len() * config.inner_iters);

    for (t, &chi) in path.iter().enumerate() {
        let params = ObjectiveParams::from_config(config, chi);
        let mut current = penalized_objective(&mu, rho, &params)?;
        for _ in 0..config.inner_iters {
            let grad = gradient_mu(&mu, rho, &params)?;
            let mut step = config.step_size;
            let mut accepted = None;
            for _ in 0..=MAX_HALVINGS {
                let raw: Vec<f64> = mu.iter().zip(&grad).map(|(m, d)| m + step * d).collect();
                let mut projected = project_simplex(&raw);
                clamp_interior(&mut projected);
                let mut candidate: Vec<f64> =
                    mu.iter().zip(&projected).map(|(old, new)| (1.0 - eta) * old + eta * new).collect();
                clamp_interior(&mut candidate);
                let value = penalized_objective(&candidate, rho, &params)?;
                if !value.is_finite() {
                    return Err(IsacError::NonFinite(format!("fairness objective at stage {t}: {value}")));
                }
                if value >= current {
                    accepted = Some((candidate, value));
                    break;
                }
                step *= 0.5;
            }
            match accepted {
                Some((candidate, value)) => {
                    mu = candidate;
                    current = value;
                    iterates.push(mu.clone());
                }
                // no ascent direction at any step length: stage has converged
                None => break,
            }
        }
        stages.push(state(t, &mu, rho, &params, g)?);
    }
    Ok(HfroResult { mu, stages, iterates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(chi: f64, nu: f64, lambda: f64, xi: f64) -> ObjectiveParams {
        ObjectiveParams { chi, entropy_weight: nu, penalty_weight: lambda, fairness_floor: xi }
    }

    #[test]
    fn normalization_examples() {
        assert!((normalization_g(&[1.0, 3.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!((normalization_g(&[1.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((normalization_g(&[1.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(normalization_g(&[1.0, 0.0]), Err(IsacError::Domain(_))));
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(fairness_closed_form(&[1.0, 1.0]).unwrap(), vec![0.5, 0.5]);
        let mu = fairness_closed_form(&[1.0, 3.0]).unwrap();
        assert!((mu[0] - 0.75).abs() < 1e-15 && (mu[1] - 0.25).abs() < 1e-15);
        let rho = [0.3, 7.0, 2.5, 11.0];
        let mu = fairness_closed_form(&rho).unwrap();
        assert!((jain_index(&mu, &rho).unwrap() - 1.0).abs() < 1e-12);
        assert!(fairness_closed_form(&[-1.0]).is_err());
    }

    #[test]
    fn objective_at_fairness_extreme() {
        let rho = [1.0, 3.0, 0.5];
        let mu = fairness_closed_form(&rho).unwrap();
        let p = params(1.0, 0.01, 10.0, 0.9);
        let value = penalized_objective(&mu, &rho, &p).unwrap();
        assert!((value - (1.0 + 0.01 * entropy(&mu))).abs() < 1e-12);
    }

    #[test]
    fn objective_at_throughput_extreme_is_linear() {
        let rho = [1.0, 3.0, 7.0];
        let p = params(0.0, 0.0, 0.0, 0.5);
        let g = normalization_g(&rho).unwrap();
        let mu = [0.2, 0.3, 0.5];
        let value = penalized_objective(&mu, &rho, &p).unwrap();
        assert!((value - g * weighted_rate(&mu, &rho)).abs() < 1e-14);
        let vertex = throughput_vertex(&rho).unwrap();
        assert!((penalized_objective(&vertex, &rho, &p).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn penalty_arithmetic() {
        // F([1,0] ∘ ρ) = 1/2 with K = 2; floor 0.6 leaves a 0.1 shortfall
        let rho = [2.0, 5.0];
        let mu = [1.0 - 1e-15, 1e-15];
        let f = jain_index(&mu, &rho).unwrap();
        let xi = f + 0.1;
        let free = penalized_objective(&mu, &rho, &params(0.4, 0.01, 0.0, xi)).unwrap();
        let penalized = penalized_objective(&mu, &rho, &params(0.4, 0.01, 3.0, xi)).unwrap();
        assert!((free - penalized - 3.0 * 0.01).abs() < 1e-12);
    }

    #[test]
    fn gradient_special_cases() {
        let rho = [2.0; 4];
        let g = gradient_mu(&[0.25; 4], &rho, &params(1.0, 0.0, 0.0, 0.5)).unwrap();
        assert!(g.iter().all(|x| (x - g[0]).abs() < 1e-14));

        let rho = [1.0, 3.0, 7.0];
        let gn = normalization_g(&rho).unwrap();
        let g = gradient_mu(&[0.2, 0.3, 0.5], &rho, &params(0.0, 0.0, 0.0, 0.5)).unwrap();
        for (gk, r) in g.iter().zip(&rho) {
            assert!((gk - gn * (1.0 + r).log2()).abs() < 1e-14);
        }
        assert!(gradient_mu(&[0.0, 1.0], &[1.0, 1.0], &params(0.5, 0.01, 1.0, 0.6)).is_err());
    }

    /// Central differences along coordinate directions (the objective is defined
    /// on the open orthant, not only on the simplex).
    fn finite_difference(mu: &[f64], rho: &[f64], p: &ObjectiveParams) -> Vec<f64> {
        let h = 1e-6;
        (0..mu.len())
            .map(|k| {
                let mut up = mu.to_vec();
                let mut down = mu.to_vec();
                up[k] += h;
                down[k] -= h;
                (penalized_objective(&up, rho, p).unwrap() - penalized_objective(&down, rho, p).unwrap()) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..100 {
            let k = rng.random_range(2..7);
            let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = raw.iter().sum();
            let mu: Vec<f64> = raw.iter().map(|x| x / s).collect();
            let rho: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..50.0)).collect();
            let p = params(rng.random_range(0.0..1.0), 0.01, 10.0, rng.random_range(0.5..1.0));
            let analytic = gradient_mu(&mu, &rho, &p).unwrap();
            let numeric = finite_difference(&mu, &rho, &p);
            for (a, n) in analytic.iter().zip(&numeric) {
                let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-3);
                assert!(rel < 1e-5, "analytic {a} numeric {n}");
            }
        }
    }

    #[test]
    fn simplex_projection_examples() {
        let on = [0.2, 0.3, 0.5];
        let out = project_simplex(&on);
        for (a, b) in on.iter().zip(&out) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(project_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
        let out = project_simplex(&[0.6, 0.6]);
        assert!((out[0] - 0.5).abs() < 1e-15 && (out[1] - 0.5).abs() < 1e-15);
    }

    fn grid_projection(v: &[f64], step: f64) -> Vec<f64> {
        let n = (1.0 / step).round() as usize;
        let mut best = (f64::INFINITY, vec![]);
        let dist = |p: &[f64]| p.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        if v.len() == 2 {
            for i in 0..=n {
                let a = i as f64 * step;
                let p = vec![a, 1.0 - a];
                let d = dist(&p);
                if d < best.0 {
                    best = (d, p);
                }
            }
        } else {
            for i in 0..=n {
                for j in 0..=(n - i) {
                    let a = i as f64 * step;
                    let b = j as f64 * step;
                    let p = vec![a, b, (1.0 - a - b).max(0.0)];
                    let d = dist(&p);
                    if d < best.0 {
                        best = (d, p);
                    }
                }
            }
        }
        best.1
    }

    #[test]
    fn projection_matches_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for k in [2usize, 3] {
            for _ in 0..20 {
                let v: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..2.0)).collect();
                let fast = project_simplex(&v);
                let slow = grid_projection(&v, 1e-3);
                let linf = fast.iter().zip(&slow).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(linf <= 2e-3, "{v:?}: {fast:?} vs {slow:?}");
            }
        }
    }

    fn test_config(lambda: f64, nu: f64) -> SystemConfig {
        let mut cfg = SystemConfig::table1();
        cfg.penalty_weight = lambda;
        cfg.entropy_weight = nu;
        cfg
    }

    #[test]
    fn fairness_stage_stays_near_closed_form() {
        let rho = [1.0, 3.0, 8.0, 0.4];
        let cfg = test_config(100.0, 0.01);
        let out = hfro_optimize_path(&rho, &cfg, &[1.0]).unwrap();
        let target = fairness_closed_form(&rho).unwrap();
        let l1: f64 = out.mu.iter().zip(&target).map(|(a, b)| (a - b).abs()).sum();
        assert!(l1 <= 0.05, "L1 = {l1}");
        assert!(jain_index(&out.mu, &rho).unwrap() >= 0.99);
    }

    #[test]
    fn throughput_stage_favors_best_user() {
        let rho = [1.0, 10.0];
        let cfg = test_config(10.0, 0.01);
        let out = hfro_optimize_path(&rho, &cfg, &[0.0]).unwrap();
        assert!(out.mu[1] > out.mu[0], "{:?}", out.mu);
    }

    #[test]
    fn iterates_stay_on_simplex() {
        let rho = [0.5, 2.0, 9.0];
        let out = hfro_optimize(&rho, &SystemConfig::table1().with_users(3).unwrap()).unwrap();
        assert_eq!(out.stages.len(), 11);
        assert!(!out.iterates.is_empty());
        for mu in &out.iterates {
            assert!((mu.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            assert!(mu.iter().all(|m| *m >= 0.0));
        }
    }

    #[test]
    fn path_endpoints() {
        assert_eq!(tradeoff_path(11).first(), Some(&1.0));
        assert_eq!(tradeoff_path(11).last(), Some(&0.0));
        assert_eq!(tradeoff_path(1), vec![1.0]);
        assert_eq!(tradeoff_path(3), vec![1.0, 0.5, 0.0]);
    }

    proptest! {
        #[test]
        fn projection_lands_on_simplex(v in proptest::collection::vec(-10.0f64..10.0, 1..12)) {
            let p = project_simplex(&v);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|x| *x >= 0.0));
        }

        #[test]
        fn rate_term_rises_along_path(rho in proptest::collection::vec(0.1f64..100.0, 2..6)) {
            let mut cfg = SystemConfig::table1().with_users(rho.len()).unwrap();
            cfg.penalty_weight = 10.0;
            let out = hfro_optimize(&rho, &cfg).unwrap();
            for pair in out.stages.windows(2) {
                prop_assert!(pair[1].sum_rate_term >= pair[0].sum_rate_term - 1e-9,
                    "{} -> {}", pair[0].sum_rate_term, pair[1].sum_rate_term);
            }
        }
    }
}
