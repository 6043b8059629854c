//! Beamformer updates with the artificial noise held fixed.
//!
//! Each user's log-SINR term is lifted with a Lagrangian-dual auxiliary `ζ_k`
//! and a quadratic-transform auxiliary `y_k`; the resulting quadratic in
//! `w_k` is majorized around `z_k = w_k` with `κ_k >= λ_max(D_k)`, which gives
//! an inverse-free closed-form beam update.

use std::f64::consts::LN_2;

use crate::feasibility::eaves_cap;
use crate::linalg::{lambda_max, outer, quadratic_majorant, row_dot, CMat, CVec, C64};
use crate::metrics::{signal_and_residual, Solution};
use crate::scenario::Scenario;

/// Smallest `κ` ever used, keeps `1/κ` finite when every auxiliary vanishes.
pub const KAPPA_FLOOR: f64 = 1e-12;
/// Upper end of the `ζ` search interval.
pub const ZETA_MAX: f64 = 1e12;
/// Stationarity tolerance on `∂f/∂ζ` for accepting a printed closed form.
pub const ZETA_STATIONARITY_TOL: f64 = 1e-8;
const MAX_DYKSTRA_SWEEPS: usize = 500;

/// `e_k = h_k w_k`, `B_k` and `B̂_k = |e_k|^2 + B_k` for one user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub e: C64,
    pub b: f64,
    pub b_hat: f64,
}

pub fn residual_b(scenario: &Scenario, solution: &Solution, k: usize) -> Residual {
    let (e, b) = signal_and_residual(scenario, solution, k);
    Residual { e, b, b_hat: e.norm_sqr() + b }
}

/// Outcome of a `ζ` update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZetaUpdate {
    pub value: f64,
    /// The textbook closed form, when its denominator is positive.
    pub printed: Option<f64>,
    /// The closed form was rejected in favour of the stationary point.
    pub fallback: bool,
}

/// `∂/∂ζ [log2(1+ζ) - ζ + (1+ζ) q]` divided by the user weight.
pub fn zeta_derivative(q: f64, zeta: f64) -> f64 {
    q - 1.0 + 1.0 / ((1.0 + zeta) * LN_2)
}

/// Root of [`zeta_derivative`] in `(-1, ZETA_MAX]`.
///
/// The condition is linear in `u = 1/(1+ζ)`, so one Newton step in `u` is exact:
/// `ζ = 1/(ln2 (1 - q)) - 1`. For `q >= 1` the surrogate increases without bound
/// and the interval end is returned.
pub fn zeta_stationary(q: f64) -> f64 {
    let slack = 1.0 - q;
    if slack <= 1.0 / ((1.0 + ZETA_MAX) * LN_2) {
        return ZETA_MAX;
    }
    (1.0 / (LN_2 * slack) - 1.0).clamp(-1.0 + 1e-9, ZETA_MAX)
}

/// Accepts the printed closed form only if it is stationary for `q`.
pub(crate) fn resolve_zeta(q: f64, printed: Option<f64>) -> ZetaUpdate {
    if let Some(p) = printed {
        if p > -1.0 && p <= ZETA_MAX && zeta_derivative(q, p).abs() < ZETA_STATIONARITY_TOL {
            return ZetaUpdate { value: p, printed, fallback: false };
        }
    }
    ZetaUpdate { value: zeta_stationary(q), printed, fallback: true }
}

/// `q = 2 Re{y* e} - |y|^2 B̂`, the bracket multiplying `(1+ζ)` in the surrogate.
pub fn qt_bracket(y: C64, r: &Residual) -> f64 {
    2.0 * (y.conj() * r.e).re - y.norm_sqr() * r.b_hat
}

/// Auxiliary variables of the beam subproblem.
#[derive(Debug, Clone)]
pub struct AuxStateI {
    pub y: Vec<C64>,
    pub zeta: Vec<f64>,
    pub z: Vec<CVec>,
    pub kappa: Vec<f64>,
    pub d_mats: Vec<CMat>,
    pub e: Vec<C64>,
    pub b_hat: Vec<f64>,
    /// Count of rejected printed `ζ` closed forms (diagnostic).
    pub zeta_fallbacks: usize,
}

impl AuxStateI {
    /// Auxiliaries consistent with the current beams: `y_k` optimal, `ζ_k`
    /// stationary, `z_k = w_k`.
    pub fn from_solution(scenario: &Scenario, solution: &Solution, mu: &[f64], kappa_margin: f64) -> Self {
        let k_users = scenario.n_users();
        let n = scenario.n_tx();
        let mut aux = AuxStateI {
            y: vec![C64::new(0.0, 0.0); k_users],
            zeta: vec![0.0; k_users],
            z: update_z1(solution),
            kappa: vec![KAPPA_FLOOR; k_users],
            d_mats: vec![CMat::zeros(n, n); k_users],
            e: vec![C64::new(0.0, 0.0); k_users],
            b_hat: vec![0.0; k_users],
            zeta_fallbacks: 0,
        };
        for k in 0..k_users {
            let r = residual_b(scenario, solution, k);
            aux.e[k] = r.e;
            aux.b_hat[k] = r.b_hat;
            aux.y[k] = update_y1(r.e, r.b_hat);
            aux.zeta[k] = zeta_stationary(qt_bracket(aux.y[k], &r));
        }
        for k in 0..k_users {
            let (d, kappa) = build_d1(scenario, &aux, k, mu, kappa_margin);
            aux.d_mats[k] = d;
            aux.kappa[k] = kappa;
        }
        aux
    }
}

/// `z_k := w_k`.
pub fn update_z1(solution: &Solution) -> Vec<CVec> {
    solution.beams.column_iter().map(|c| c.into_owned()).collect()
}

/// `y_k = e_k / B̂_k`.
pub fn update_y1(e: C64, b_hat: f64) -> C64 {
    e / b_hat
}

/// The closed form as usually printed:
/// `1/(ln2 (1 + ñ_k + σ_k^2 |y_k|^2 - Re(y_k e_k))) - 1` with
/// `ñ_k = |y_k|^2 |h_k P⊥ n|^2`.
pub fn zeta1_printed(y: C64, e: C64, n_tilde: f64, sigma2: f64) -> Option<f64> {
    let denom = 1.0 + n_tilde + sigma2 * y.norm_sqr() - (y * e).re;
    (denom > 0.0).then(|| 1.0 / (LN_2 * denom) - 1.0)
}

/// `ζ_k` update for fixed beams and `y_k`: stationary point of the surrogate.
pub fn update_zeta1(k: usize, y: C64, solution: &Solution, scenario: &Scenario) -> ZetaUpdate {
    let r = residual_b(scenario, solution, k);
    let h = scenario.channel(k);
    let n_tilde = y.norm_sqr() * row_dot(&h, &solution.an_effective).norm_sqr();
    let printed = zeta1_printed(y, r.e, n_tilde, scenario.config.noise_user[k]);
    resolve_zeta(qt_bracket(y, &r), printed)
}

/// `D_k = Σ_i μ_i (1+ζ_i) |y_i|^2 h_i^H h_i` and `κ_k = margin · λ_max(D_k)`
/// (floored at [`KAPPA_FLOOR`]).
///
/// `w_k` enters user i's denominator through `|h_i w_k|^2`, so every user's
/// channel contributes; the matrix is therefore the same for all `k`.
pub fn build_d1(scenario: &Scenario, aux: &AuxStateI, _k: usize, mu: &[f64], kappa_margin: f64) -> (CMat, f64) {
    let n = scenario.n_tx();
    let mut d = CMat::zeros(n, n);
    for i in 0..scenario.n_users() {
        let c = mu[i] * (1.0 + aux.zeta[i]) * aux.y[i].norm_sqr();
        if c != 0.0 {
            let u = scenario.channel(i).map(|x| x.conj());
            d += outer(&u, &u) * C64::from(c);
        }
    }
    let kappa = (kappa_margin * lambda_max(&d)).max(KAPPA_FLOOR);
    (d, kappa)
}

/// `w_k = z_k + (μ_k (1+ζ_k) h_k^H y_k - D_k z_k) / κ_k`.
pub fn update_w(k: usize, aux: &AuxStateI, mu: &[f64], scenario: &Scenario) -> CVec {
    let h_conj = scenario.channel(k).map(|x| x.conj());
    let z = &aux.z[k];
    let pull = h_conj * (aux.y[k] * (mu[k] * (1.0 + aux.zeta[k])));
    z + (pull - &aux.d_mats[k] * z) / C64::from(aux.kappa[k])
}

/// Euclidean projection onto `||w||^2 <= P_k` intersected with every
/// eavesdropper cap `|a_j^H w|^2 <= c_j`.
///
/// One cap reduces to a planar problem in `(|a^H w|, ||w_perp||)`; several
/// caps use Dykstra's alternating scheme followed by a radial safety scale.
pub fn project_w(w: &CVec, scenario: &Scenario, an_effective: &CVec, k: usize) -> CVec {
    let budget = scenario.config.per_user_power[k];
    let caps: Vec<(CVec, f64)> = (0..scenario.n_targets())
        .filter_map(|j| {
            let cap = eaves_cap(scenario, an_effective, j)?;
            let a = scenario.target_steering.column(j).into_owned();
            let norm = a.norm();
            (norm > 0.0).then(|| (a / C64::from(norm), cap / (norm * norm)))
        })
        .collect();
    match caps.as_slice() {
        [] => project_ball(w, budget),
        [(u, r2)] => project_ball_slab(w, budget, u, *r2),
        _ => project_dykstra(w, budget, &caps),
    }
}

fn project_ball(w: &CVec, budget: f64) -> CVec {
    let power = w.norm_squared();
    if power > budget {
        w * C64::from((budget / power).sqrt())
    } else {
        w.clone()
    }
}

/// `u` unit norm, constraint `|u^H w|^2 <= r2`.
fn project_slab(w: &CVec, u: &CVec, r2: f64) -> CVec {
    let t = u.dotc(w);
    let x = t.norm();
    if x * x > r2 {
        w - u * (t * C64::from(1.0 - r2.sqrt() / x))
    } else {
        w.clone()
    }
}

fn project_ball_slab(w: &CVec, budget: f64, u: &CVec, r2: f64) -> CVec {
    let t = u.dotc(w);
    let perp = w - u * t;
    let (x, y) = (t.norm(), perp.norm());
    let r = r2.sqrt();
    let (x2, y2) = if x <= r && x * x + y * y <= budget {
        return w.clone();
    } else if x > r && r2 + y * y <= budget {
        (r, y)
    } else {
        let scale = (budget / (x * x + y * y)).sqrt();
        if x * scale <= r {
            (x * scale, y * scale)
        } else {
            (r, (budget - r2).max(0.0).sqrt())
        }
    };
    let along = if x > 0.0 { u * (t * C64::from(x2 / x)) } else { CVec::zeros(w.len()) };
    let across = if y > 0.0 { perp * C64::from(y2 / y) } else { perp };
    along + across
}

fn project_dykstra(w: &CVec, budget: f64, caps: &[(CVec, f64)]) -> CVec {
    let mut x = w.clone();
    let mut incr = vec![CVec::zeros(w.len()); caps.len() + 1];
    for _ in 0..MAX_DYKSTRA_SWEEPS {
        let before = x.clone();
        for (i, inc) in incr.iter_mut().enumerate() {
            let shifted = &x + &*inc;
            let next = if i == 0 { project_ball(&shifted, budget) } else { project_slab(&shifted, &caps[i - 1].0, caps[i - 1].1) };
            *inc = shifted - &next;
            x = next;
        }
        if (&x - &before).norm() <= 1e-14 * x.norm().max(1.0) {
            break;
        }
    }
    // alternating schemes land within rounding of the boundary; pull inside
    let mut scale: f64 = (budget / x.norm_squared().max(f64::MIN_POSITIVE)).sqrt().min(1.0);
    for (u, r2) in caps {
        let leak = u.dotc(&x).norm_sqr();
        if leak > 0.0 {
            scale = scale.min((r2 / leak).sqrt());
        }
    }
    x * C64::from(scale)
}

pub fn project_beams(scenario: &Scenario, solution: &mut Solution) {
    for k in 0..scenario.n_users() {
        let w = project_w(&solution.beam(k), scenario, &solution.an_effective, k);
        solution.beams.set_column(k, &w);
    }
}

/// Weighted quadratic-transform surrogate
/// `Σ μ_k [(1+ζ_k)(2Re{y_k* e_k} - |y_k|^2 B̂_k) + log2(1+ζ_k) - ζ_k]`.
///
/// Equals the majorized surrogate with `z = w`, and equals the weighted sum
/// rate when `y` is optimal and `ζ_k = ρ_k`.
pub fn qt_surrogate(scenario: &Scenario, solution: &Solution, y: &[C64], zeta: &[f64], mu: &[f64]) -> f64 {
    (0..scenario.n_users())
        .map(|k| {
            let r = residual_b(scenario, solution, k);
            mu[k] * ((1.0 + zeta[k]) * qt_bracket(y[k], &r) + (1.0 + zeta[k]).log2() - zeta[k])
        })
        .sum()
}

/// Dual-transform form `Σ μ_k [(1+ζ_k) M̂_k + log2(1+ζ_k) - ζ_k]`, `M̂_k = |e_k|^2 / B̂_k`.
pub fn dual_surrogate(scenario: &Scenario, solution: &Solution, zeta: &[f64], mu: &[f64]) -> f64 {
    (0..scenario.n_users())
        .map(|k| {
            let r = residual_b(scenario, solution, k);
            mu[k] * ((1.0 + zeta[k]) * r.e.norm_sqr() / r.b_hat + (1.0 + zeta[k]).log2() - zeta[k])
        })
        .sum()
}

/// The majorized surrogate with explicit anchors `z_k` and `κ_k`.
pub fn majorized_surrogate(scenario: &Scenario, solution: &Solution, aux: &AuxStateI, mu: &[f64]) -> f64 {
    let mut total = 0.0;
    for k in 0..scenario.n_users() {
        let r = residual_b(scenario, solution, k);
        let h = scenario.channel(k);
        let weight = mu[k] * (1.0 + aux.zeta[k]);
        let y2 = aux.y[k].norm_sqr();
        let an_leak = row_dot(&h, &solution.an_effective).norm_sqr();
        let w = solution.beam(k);
        total += 2.0 * weight * (aux.y[k].conj() * r.e).re
            - quadratic_majorant(&aux.d_mats[k], aux.kappa[k], &w, &aux.z[k])
            - weight * y2 * (an_leak + scenario.config.noise_user[k])
            + mu[k] * ((1.0 + aux.zeta[k]).log2() - aux.zeta[k]);
    }
    total
}

/// Relative step size below which repeated beam steps stop early.
pub const INNER_STEP_TOL: f64 = 1e-12;

/// Repeats the majorize-and-step update for user `k` with `y`, `ζ`, `D` and
/// `κ` frozen, re-anchoring `z_k` at the latest beam each time.
/// Each step is projected onto the power and eavesdropper constraints; the
/// bound is isotropic in `w`, so the projected point is its constrained
/// maximizer and the surrogate never decreases from a feasible anchor.
pub fn refine_w(
    k: usize,
    aux: &mut AuxStateI,
    mu: &[f64],
    scenario: &Scenario,
    an_effective: &CVec,
    steps: usize,
) -> CVec {
    let mut w = project_w(&update_w(k, aux, mu, scenario), scenario, an_effective, k);
    for _ in 1..steps {
        let moved = (&w - &aux.z[k]).norm();
        aux.z[k] = w;
        if moved <= INNER_STEP_TOL * aux.z[k].norm().max(1.0) {
            return aux.z[k].clone();
        }
        w = project_w(&update_w(k, aux, mu, scenario), scenario, an_effective, k);
    }
    w
}

/// Per-user update order inside one pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateOrder {
    /// Sequential over k; each user sees the others' latest values.
    #[default]
    GaussSeidel,
    /// All auxiliaries from one snapshot, then all beams; falls back to
    /// Gauss–Seidel if the surrogate decreases.
    Jacobi,
}

#[derive(Debug, Clone, Default)]
pub struct PassReport {
    /// Surrogate value before the pass and after every sub-update.
    pub surrogate: Vec<f64>,
    pub zeta_fallbacks: usize,
    pub order: UpdateOrder,
}

impl PassReport {
    /// Largest drop between consecutive surrogate values (0 if monotone).
    pub fn worst_decrease(&self) -> f64 {
        self.surrogate.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max)
    }

    pub fn last(&self) -> f64 {
        self.surrogate.last().copied().unwrap_or(f64::NAN)
    }
}

/// One pass of `z → y → ζ → w` over every user, each beam step projected
/// against the current AN. Beams are projected once before the pass starts.
/// `inner_steps` repeats the `z → w` part per user (see [`refine_w`]).
pub fn beam_pass(
    scenario: &Scenario,
    solution: &mut Solution,
    aux: &mut AuxStateI,
    mu: &[f64],
    kappa_margin: f64,
    inner_steps: usize,
    order: UpdateOrder,
) -> PassReport {
    // projected steps only ascend from a feasible anchor
    project_beams(scenario, solution);
    match order {
        UpdateOrder::GaussSeidel => gauss_seidel_pass(scenario, solution, aux, mu, kappa_margin, inner_steps),
        UpdateOrder::Jacobi => {
            let (saved_sol, saved_aux) = (solution.clone(), aux.clone());
            let report = jacobi_pass(scenario, solution, aux, mu, kappa_margin, inner_steps);
            let tol = 1e-10 * report.surrogate.first().map_or(1.0, |v| v.abs().max(1.0));
            if report.worst_decrease() > tol {
                *solution = saved_sol;
                *aux = saved_aux;
                gauss_seidel_pass(scenario, solution, aux, mu, kappa_margin, inner_steps)
            } else {
                report
            }
        }
    }
}

fn gauss_seidel_pass(
    scenario: &Scenario,
    solution: &mut Solution,
    aux: &mut AuxStateI,
    mu: &[f64],
    kappa_margin: f64,
    inner_steps: usize,
) -> PassReport {
    let mut report = PassReport { order: UpdateOrder::GaussSeidel, ..Default::default() };
    report.surrogate.push(qt_surrogate(scenario, solution, &aux.y, &aux.zeta, mu));
    for k in 0..scenario.n_users() {
        aux.z[k] = solution.beam(k);
        let r = residual_b(scenario, solution, k);
        aux.e[k] = r.e;
        aux.b_hat[k] = r.b_hat;
        aux.y[k] = update_y1(r.e, r.b_hat);
        report.surrogate.push(qt_surrogate(scenario, solution, &aux.y, &aux.zeta, mu));

        let z = update_zeta1(k, aux.y[k], solution, scenario);
        aux.zeta[k] = z.value;
        report.zeta_fallbacks += z.fallback as usize;
        report.surrogate.push(qt_surrogate(scenario, solution, &aux.y, &aux.zeta, mu));

        let (d, kappa) = build_d1(scenario, aux, k, mu, kappa_margin);
        aux.d_mats[k] = d;
        aux.kappa[k] = kappa;
        let w = refine_w(k, aux, mu, scenario, &solution.an_effective, inner_steps);
        solution.beams.set_column(k, &w);
        report.surrogate.push(qt_surrogate(scenario, solution, &aux.y, &aux.zeta, mu));
    }
    aux.zeta_fallbacks += report.zeta_fallbacks;
    report
}

fn jacobi_pass(
    scenario: &Scenario,
    solution: &mut Solution,
    aux: &mut AuxStateI,
    mu: &[f64],
    kappa_margin: f64,
    inner_steps: usize,
) -> PassReport {
    let k_users = scenario.n_users();
    let mut report = PassReport { order: UpdateOrder::Jacobi, ..Default::default() };
    report.surrogate.push(qt_surrogate(scenario, solution, &aux.y, &aux.zeta, mu));

    aux.z = update_z1(solution);
    for k in 0..k_users {
        let r = residual_b(scenario, solution, k);
        aux.e[k] = r.e;
        aux.b_hat[k] = r.b_hat;
        aux.y[k] = update_y1(r.e, r.b_hat);
    }
    report.surrogate.push(qt_surrogate(scenario, solution, &aux.y, &aux.zeta, mu));

    for k in 0..k_users {
        let z = update_zeta1(k, aux.y[k], solution, scenario);
        aux.zeta[k] = z.value;
        report.zeta_fallbacks += z.fallback as usize;
    }
    report.surrogate.push(qt_surrogate(scenario, solution, &aux.y, &aux.zeta, mu));

    for k in 0..k_users {
        let (d, kappa) = build_d1(scenario, aux, k, mu, kappa_margin);
        aux.d_mats[k] = d;
        aux.kappa[k] = kappa;
    }
    let beams: Vec<CVec> = (0..k_users).map(|k| refine_w(k, aux, mu, scenario, &solution.an_effective, inner_steps)).collect();
    for (k, w) in beams.iter().enumerate() {
        solution.beams.set_column(k, w);
    }
    report.surrogate.push(qt_surrogate(scenario, solution, &aux.y, &aux.zeta, mu));
    aux.zeta_fallbacks += report.zeta_fallbacks;
    report
}
