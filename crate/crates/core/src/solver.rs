//! Alternating driver: beam pass, projection, AN pass, projection, until the
//! weighted sum rate settles.

use std::io::Write;
use std::time::Instant;

use serde::Serialize;

use crate::an_qt::{an_pass, project_n, AuxStateII, FeasibilityReport};
use crate::beamform_qt::{beam_pass, project_beams, AuxStateI, UpdateOrder};
use crate::error::{IsacError, Result};
use crate::feasibility::evaluate_margins;
use crate::linalg::{CMat, CVec, C64};
use crate::metrics::{rate_report, sinr_legitimate, Solution};
use crate::nullspace::{null_projector, NullProjector};
use crate::scenario::{complex_gaussian, stream_rng, Scenario, AN_INIT_STREAM};

/// `Σ μ_k log2(1 + ρ_k)`.
pub fn objective_weighted(scenario: &Scenario, solution: &Solution, mu: &[f64]) -> f64 {
    (0..scenario.n_users()).map(|k| mu[k] * (1.0 + sinr_legitimate(scenario, solution, k)).log2()).sum()
}

/// Matched-filter beams at full per-user power and a random null-space AN
/// vector at the full AN budget, both passed through their projections.
pub fn initialize(scenario: &Scenario) -> Result<Solution> {
    let projector = null_projector(&scenario.channels)?;
    Ok(initialize_with(scenario, &projector))
}

pub fn initialize_with(scenario: &Scenario, projector: &NullProjector) -> Solution {
    let cfg = &scenario.config;
    let n_tx = scenario.n_tx();
    let mut beams = CMat::zeros(n_tx, scenario.n_users());
    for k in 0..scenario.n_users() {
        let h = scenario.channel(k).map(|x| x.conj());
        let norm = h.norm();
        if norm > 0.0 {
            beams.set_column(k, &(h * C64::from(cfg.per_user_power[k].sqrt() / norm)));
        }
    }
    let mut rng = stream_rng(scenario.seed, AN_INIT_STREAM);
    let raw = CVec::from_fn(n_tx, |_, _| complex_gaussian(&mut rng));
    let mut solution = Solution::new(beams, raw, projector);
    let power = solution.an_power();
    if power > 0.0 {
        solution.scale_an((cfg.an_budget() / power).sqrt());
    }
    project_beams(scenario, &mut solution);
    let (n, _) = project_n(&solution.an, &solution, scenario, projector);
    solution.set_an(n, projector);
    solution
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConvergenceStatus {
    Converged,
    MaxIters,
    Aborted,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub conv_tol: f64,
    pub max_outer_iters: usize,
    pub kappa_margin: f64,
    pub beam_inner_steps: usize,
    pub order: UpdateOrder,
}

impl SolveOptions {
    pub fn from_config(config: &crate::scenario::SystemConfig) -> Self {
        SolveOptions {
            conv_tol: config.conv_tol,
            max_outer_iters: config.max_outer_iters,
            kappa_margin: config.kappa_margin,
            beam_inner_steps: config.beam_inner_steps,
            order: UpdateOrder::default(),
        }
    }
}

/// Relative-change stopping rule `|obj_t - obj_{t-1}| <= tol · max(1, |obj_t|)`.
#[derive(Debug, Clone)]
pub struct ConvergenceGuard {
    tol: f64,
    prev: Option<f64>,
}

impl ConvergenceGuard {
    pub fn new(tol: f64) -> Self {
        ConvergenceGuard { tol, prev: None }
    }

    /// Feeds one objective value; true once the change is within tolerance.
    pub fn update(&mut self, objective: f64) -> bool {
        let done = match self.prev {
            Some(p) => (objective - p).abs() <= self.tol * objective.abs().max(1.0),
            None => false,
        };
        self.prev = Some(objective);
        done
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub sum_secrecy: f64,
    /// Beam surrogate at the end of the pass, before projection.
    pub f: f64,
    /// AN surrogate at the end of the pass, before projection.
    pub f_r: f64,
    pub min_power_slack: f64,
    pub min_sensing_margin: f64,
    #[serde(skip)]
    pub elapsed_us: u128,
}

#[derive(Debug, Clone, Default)]
pub struct SolveTrace {
    pub records: Vec<IterationRecord>,
    /// Largest within-pass surrogate drop seen in any beam pass.
    pub worst_beam_decrease: f64,
    /// Same for the AN passes.
    pub worst_an_decrease: f64,
    pub zeta_fallbacks: usize,
    /// Outer iterations discarded because the objective fell after projection.
    pub rejected_steps: usize,
    pub last_projection: Option<FeasibilityReport>,
}

impl SolveTrace {
    pub fn initial_objective(&self) -> f64 {
        self.records.first().map_or(f64::NAN, |r| r.objective)
    }

    pub fn final_objective(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.objective)
    }

    /// Number of outer iterations run (the initial record is iteration 0).
    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.iteration)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["iteration", "objective", "sum_secrecy", "f", "f_r", "min_power_slack", "min_sensing_margin"])?;
        for r in &self.records {
            w.write_record(&[
                r.iteration.to_string(),
                r.objective.to_string(),
                r.sum_secrecy.to_string(),
                r.f.to_string(),
                r.f_r.to_string(),
                r.min_power_slack.to_string(),
                r.min_sensing_margin.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub solution: Solution,
    pub trace: SolveTrace,
    pub status: ConvergenceStatus,
}

/// Solves from [`initialize`].
pub fn alternating_solve(scenario: &Scenario, mu: &[f64], options: &SolveOptions) -> Result<SolveOutcome> {
    let projector = null_projector(&scenario.channels)?;
    let start = initialize_with(scenario, &projector);
    alternating_solve_from(scenario, &projector, mu, options, start)
}

/// Solves from a given starting point (warm start).
pub fn alternating_solve_from(
    scenario: &Scenario,
    projector: &NullProjector,
    mu: &[f64],
    options: &SolveOptions,
    start: Solution,
) -> Result<SolveOutcome> {
    if mu.len() != scenario.n_users() {
        return Err(IsacError::InvalidConfig(format!(
            "weight vector has {} entries for {} users",
            mu.len(),
            scenario.n_users()
        )));
    }
    let clock = Instant::now();
    let mut solution = start;
    let mut trace = SolveTrace::default();
    let mut guard = ConvergenceGuard::new(options.conv_tol);

    let record = |iteration: usize, sol: &Solution, f: f64, f_r: f64, clock: &Instant| {
        let margins = evaluate_margins(scenario, sol);
        IterationRecord {
            iteration,
            objective: objective_weighted(scenario, sol, mu),
            sum_secrecy: rate_report(scenario, sol).sum_secrecy,
            f,
            f_r,
            min_power_slack: margins.min_power_slack(),
            min_sensing_margin: margins.min_sensing_margin(),
            elapsed_us: clock.elapsed().as_micros(),
        }
    };

    let mut aux_i = AuxStateI::from_solution(scenario, &solution, mu, options.kappa_margin);
    let mut aux_ii = AuxStateII::from_solution(scenario, &solution, projector, mu, options.kappa_margin);
    let init = record(0, &solution, f64::NAN, f64::NAN, &clock);
    if !init.objective.is_finite() {
        trace.records.push(init);
        return Ok(SolveOutcome { solution, trace, status: ConvergenceStatus::Aborted });
    }
    guard.update(init.objective);
    let mut best = init.objective;
    trace.records.push(init);

    let mut status = ConvergenceStatus::MaxIters;
    for iteration in 1..=options.max_outer_iters {
        let previous = solution.clone();
        let rep_i = beam_pass(
            scenario,
            &mut solution,
            &mut aux_i,
            mu,
            options.kappa_margin,
            options.beam_inner_steps,
            options.order,
        );
        trace.worst_beam_decrease = trace.worst_beam_decrease.max(rep_i.worst_decrease());
        project_beams(scenario, &mut solution);

        let rep_ii = an_pass(scenario, &mut solution, &mut aux_ii, projector, options.kappa_margin);
        trace.worst_an_decrease = trace.worst_an_decrease.max(rep_ii.worst_decrease());
        let (n, report) = project_n(&solution.an, &solution, scenario, projector);
        solution.set_an(n, projector);
        // a new AN moves the eavesdropper caps
        project_beams(scenario, &mut solution);
        trace.last_projection = Some(report);
        trace.zeta_fallbacks += rep_i.zeta_fallbacks + rep_ii.zeta_fallbacks;

        let mut rec = record(iteration, &solution, rep_i.last(), rep_ii.last(), &clock);
        if !rec.objective.is_finite() {
            trace.records.push(rec);
            status = ConvergenceStatus::Aborted;
            break;
        }
        // projection can undo the surrogate gain; keep the better iterate
        if rec.objective < best {
            solution = previous;
            trace.rejected_steps += 1;
            rec = record(iteration, &solution, rep_i.last(), rep_ii.last(), &clock);
        }
        best = rec.objective;
        let objective = rec.objective;
        trace.records.push(rec);
        if guard.update(objective) {
            status = ConvergenceStatus::Converged;
            break;
        }
    }
    Ok(SolveOutcome { solution, trace, status })
}
