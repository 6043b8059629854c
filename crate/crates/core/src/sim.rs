//! Monte Carlo harness and CSV exports.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{IsacError, Result};
use crate::fairness::hfro_optimize;
use crate::feasibility::{evaluate_margins, sensing_gain, FEAS_TOL};
use crate::metrics::{beam_gain, jain_index, rate_report, Solution};
use crate::nullspace::null_projector;
use crate::plot::{line_chart, Series};
use crate::scenario::{sample_scenario, trial_seed, Scenario, SystemConfig};
use crate::solver::{alternating_solve_from, initialize_with, ConvergenceStatus, SolveOptions, SolveTrace};

/// Floor applied to SINRs before they enter the weight optimizer.
pub const RHO_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Snr,
    Ntx,
    Users,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Snr => "snr_db",
            SweepAxis::Ntx => "n_tx",
            SweepAxis::Users => "n_users",
        }
    }
}

/// A one-dimensional sweep; `None` axis means the base configuration only.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub axis: Option<SweepAxis>,
    pub values: Vec<f64>,
}

impl Sweep {
    pub fn single() -> Self {
        Sweep { axis: None, values: vec![f64::NAN] }
    }

    /// Parses `snr=0:5:30` (inclusive range) or `ntx=8,16,18` (list).
    pub fn parse(text: &str) -> Result<Self> {
        let bad = |msg: &str| IsacError::InvalidConfig(format!("sweep '{text}': {msg}"));
        let (key, list) = text.split_once('=').ok_or_else(|| bad("expected key=values"))?;
        let axis = match key.trim() {
            "snr" => SweepAxis::Snr,
            "ntx" => SweepAxis::Ntx,
            "users" => SweepAxis::Users,
            other => return Err(bad(&format!("unknown key '{other}'"))),
        };
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(&format!("not a number: '{s}'")));
        let values = if list.contains(':') {
            let parts: Vec<&str> = list.split(':').collect();
            if parts.len() != 3 {
                return Err(bad("range must be start:step:stop"));
            }
            let (start, step, stop) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
            if !(step > 0.0) || stop < start {
                return Err(bad("range needs step > 0 and stop >= start"));
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            (0..=n).map(|i| start + step * i as f64).collect()
        } else {
            list.split(',').map(num).collect::<Result<Vec<_>>>()?
        };
        if values.is_empty() {
            return Err(bad("no values"));
        }
        if axis != SweepAxis::Snr && values.iter().any(|v| v.fract() != 0.0 || *v < 1.0) {
            return Err(bad("antenna and user counts must be positive integers"));
        }
        Ok(Sweep { axis: Some(axis), values })
    }

    /// Configuration at one sweep value.
    pub fn apply(&self, base: &SystemConfig, value: f64) -> Result<SystemConfig> {
        match self.axis {
            None => Ok(base.clone()),
            Some(SweepAxis::Snr) => Ok(base.clone().with_snr_db(value)),
            Some(SweepAxis::Ntx) => base.clone().with_n_tx(value as usize),
            Some(SweepAxis::Users) => base.clone().with_users(value as usize),
        }
    }
}

/// SNR implied by the first user's noise power with unit reference power.
pub fn nominal_snr_db(config: &SystemConfig) -> f64 {
    // + 0.0 turns -0.0 into 0.0
    -10.0 * config.noise_user[0].log10() + 0.0
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialRecord {
    pub point: usize,
    pub trial: usize,
    pub seed: u64,
    pub snr_db: f64,
    pub n_tx: usize,
    pub n_users: usize,
    pub n_targets: usize,
    pub sum_secrecy: f64,
    pub sum_rate: f64,
    pub fairness_index: f64,
    pub iterations: usize,
    pub converged: bool,
    pub feasible: bool,
    pub sensing_ok: bool,
    pub power_slack: f64,
    pub min_sensing_margin: f64,
    pub beamwidth_violations: usize,
    pub aborted: bool,
    #[serde(skip)]
    pub runtime_ms: f64,
}

/// Everything a single trial produces.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub record: TrialRecord,
    pub scenario: Scenario,
    pub solution: Solution,
    pub mu: Vec<f64>,
    pub trace: SolveTrace,
}

/// One trial: uniform-weight solve, weight optimization on the resulting
/// SINRs, then a warm re-solve with the optimized weights.
pub fn run_trial(config: &SystemConfig, seed: u64) -> Result<TrialOutcome> {
    let clock = Instant::now();
    let scenario = sample_scenario(config, seed)?;
    let projector = null_projector(&scenario.channels)?;
    let options = SolveOptions::from_config(config);
    let k = scenario.n_users();

    let uniform = vec![1.0 / k as f64; k];
    let first = alternating_solve_from(&scenario, &projector, &uniform, &options, initialize_with(&scenario, &projector))?;
    let rho: Vec<f64> = rate_report(&scenario, &first.solution).sinr_legit.iter().map(|r| r.max(RHO_FLOOR)).collect();
    let mu = hfro_optimize(&rho, config)?.mu;
    let second = alternating_solve_from(&scenario, &projector, &mu, &options, first.solution.clone())?;

    let solution = second.solution;
    let report = rate_report(&scenario, &solution);
    let margins = evaluate_margins(&scenario, &solution);
    let fairness_index = jain_index(&mu, &report.sinr_legit).unwrap_or(f64::NAN);
    let aborted = first.status == ConvergenceStatus::Aborted || second.status == ConvergenceStatus::Aborted;
    let record = TrialRecord {
        point: 0,
        trial: 0,
        seed,
        snr_db: nominal_snr_db(config),
        n_tx: config.n_tx,
        n_users: config.n_users,
        n_targets: config.n_targets,
        sum_secrecy: report.sum_secrecy,
        sum_rate: report.sum_rate,
        fairness_index,
        iterations: first.trace.iterations() + second.trace.iterations(),
        converged: second.status == ConvergenceStatus::Converged,
        feasible: margins.is_feasible(),
        sensing_ok: margins.sensing_floor_met(),
        power_slack: margins.min_power_slack(),
        min_sensing_margin: margins.min_sensing_margin(),
        beamwidth_violations: margins.beamwidth_violations(),
        aborted,
        runtime_ms: clock.elapsed().as_secs_f64() * 1e3,
    };
    Ok(TrialOutcome { record, scenario, solution, mu, trace: second.trace })
}

fn aborted_record(config: &SystemConfig, seed: u64) -> TrialRecord {
    TrialRecord {
        point: 0,
        trial: 0,
        seed,
        snr_db: nominal_snr_db(config),
        n_tx: config.n_tx,
        n_users: config.n_users,
        n_targets: config.n_targets,
        sum_secrecy: f64::NAN,
        sum_rate: f64::NAN,
        fairness_index: f64::NAN,
        iterations: 0,
        converged: false,
        feasible: false,
        sensing_ok: false,
        power_slack: f64::NAN,
        min_sensing_margin: f64::NAN,
        beamwidth_violations: 0,
        aborted: true,
        runtime_ms: 0.0,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AggregateRow {
    pub point: usize,
    pub sweep_value: f64,
    pub trials: usize,
    pub completed: usize,
    pub mean_sum_secrecy: f64,
    pub se_sum_secrecy: f64,
    pub mean_sum_rate: f64,
    pub se_sum_rate: f64,
    pub mean_fairness: f64,
    pub se_fairness: f64,
    pub converged_fraction: f64,
    pub feasible_fraction: f64,
}

/// Mean and standard error of the finite entries.
pub fn mean_se(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn aggregate(point: usize, sweep_value: f64, records: &[TrialRecord]) -> AggregateRow {
    let done: Vec<&TrialRecord> = records.iter().filter(|r| !r.aborted).collect();
    let (mean_sum_secrecy, se_sum_secrecy) = mean_se(done.iter().map(|r| r.sum_secrecy));
    let (mean_sum_rate, se_sum_rate) = mean_se(done.iter().map(|r| r.sum_rate));
    let (mean_fairness, se_fairness) = mean_se(done.iter().map(|r| r.fairness_index));
    let frac = |f: fn(&TrialRecord) -> bool| {
        if records.is_empty() {
            0.0
        } else {
            records.iter().filter(|r| f(r)).count() as f64 / records.len() as f64
        }
    };
    AggregateRow {
        point,
        sweep_value,
        trials: records.len(),
        completed: done.len(),
        mean_sum_secrecy,
        se_sum_secrecy,
        mean_sum_rate,
        se_sum_rate,
        mean_fairness,
        se_fairness,
        converged_fraction: frac(|r| r.converged),
        feasible_fraction: frac(|r| r.feasible),
    }
}

#[derive(Debug, Clone)]
pub struct MonteCarloResult {
    pub sweep: Sweep,
    pub records: Vec<TrialRecord>,
    pub aggregates: Vec<AggregateRow>,
}

/// Runs every (sweep point, trial) pair in parallel. Trial `t` uses the same
/// seed at every sweep point; output order is (point, trial).
pub fn run_monte_carlo(base: &SystemConfig, sweep: &Sweep, trials: usize, master_seed: u64) -> Result<MonteCarloResult> {
    if trials == 0 {
        return Err(IsacError::InvalidConfig("trials must be at least 1".into()));
    }
    let configs = sweep.values.iter().map(|&v| sweep.apply(base, v)).collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..configs.len()).flat_map(|p| (0..trials).map(move |t| (p, t))).collect();
    let records: Vec<TrialRecord> = jobs
        .par_iter()
        .map(|&(p, t)| {
            let seed = trial_seed(master_seed, t as u64);
            let mut rec = match run_trial(&configs[p], seed) {
                Ok(out) => out.record,
                Err(_) => aborted_record(&configs[p], seed),
            };
            rec.point = p;
            rec.trial = t;
            rec
        })
        .collect();
    let aggregates = sweep
        .values
        .iter()
        .enumerate()
        .map(|(p, &v)| aggregate(p, v, &records[p * trials..(p + 1) * trials]))
        .collect();
    Ok(MonteCarloResult { sweep: sweep.clone(), records, aggregates })
}

fn write_rows<T: Serialize, W: Write>(rows: &[T], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TimingRow {
    point: usize,
    trial: usize,
    runtime_ms: f64,
}

impl MonteCarloResult {
    pub fn write_records<W: Write>(&self, writer: W) -> Result<()> {
        write_rows(&self.records, writer)
    }

    pub fn write_aggregates<W: Write>(&self, writer: W) -> Result<()> {
        write_rows(&self.aggregates, writer)
    }

    pub fn write_timing<W: Write>(&self, writer: W) -> Result<()> {
        let rows: Vec<TimingRow> =
            self.records.iter().map(|r| TimingRow { point: r.point, trial: r.trial, runtime_ms: r.runtime_ms }).collect();
        write_rows(&rows, writer)
    }

    /// Writes `records.csv`, `aggregates.csv`, `timing.csv` and optionally `rates.svg`.
    pub fn write_dir(&self, dir: &Path, plot: bool) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.write_records(fs::File::create(dir.join("records.csv"))?)?;
        self.write_aggregates(fs::File::create(dir.join("aggregates.csv"))?)?;
        self.write_timing(fs::File::create(dir.join("timing.csv"))?)?;
        if plot {
            let x_label = self.sweep.axis.map_or("point", |a| a.name());
            let x = |a: &AggregateRow| if a.sweep_value.is_finite() { a.sweep_value } else { a.point as f64 };
            let series = vec![
                Series {
                    label: "secrecy rate".into(),
                    points: self.aggregates.iter().map(|a| (x(a), a.mean_sum_secrecy)).collect(),
                },
                Series { label: "data rate".into(), points: self.aggregates.iter().map(|a| (x(a), a.mean_sum_rate)).collect() },
            ];
            let svg = line_chart("Average sum rates", x_label, "bit/s/Hz", &series);
            fs::write(dir.join("rates.svg"), svg)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BeamRow {
    pub theta_deg: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TargetRow {
    pub target: usize,
    pub theta_deg: f64,
    /// `|α_j|^2 a^H W̃ a` at the target.
    pub gain: f64,
    pub floor: f64,
    pub margin: f64,
}

/// `a^H(θ) W̃ a(θ)` on `[-90°, 90°]` with the given step, plus the sensing
/// gain and margin at every target.
pub fn export_beampattern(scenario: &Scenario, solution: &Solution, grid_step_deg: f64) -> Result<(Vec<BeamRow>, Vec<TargetRow>)> {
    if !(grid_step_deg > 0.0 && grid_step_deg <= 180.0) {
        return Err(IsacError::InvalidConfig(format!("grid step {grid_step_deg} must lie in (0, 180]")));
    }
    let n = (180.0 / grid_step_deg + 1e-9).floor() as usize;
    let rows = (0..=n)
        .map(|i| {
            let theta_deg = -90.0 + grid_step_deg * i as f64;
            Ok(BeamRow { theta_deg, gain: beam_gain(solution, scenario, theta_deg.to_radians())? })
        })
        .collect::<Result<Vec<_>>>()?;
    let targets = (0..scenario.n_targets())
        .map(|j| {
            let gain = sensing_gain(scenario, solution, j);
            let floor = scenario.config.sensing_floor[j];
            TargetRow { target: j, theta_deg: scenario.config.target_angles[j].to_degrees(), gain, floor, margin: gain - floor }
        })
        .collect();
    Ok((rows, targets))
}

pub fn write_beampattern(dir: &Path, rows: &[BeamRow], targets: &[TargetRow], plot: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_rows(rows, fs::File::create(dir.join("beampattern.csv"))?)?;
    write_rows(targets, fs::File::create(dir.join("targets.csv"))?)?;
    if plot {
        let series = vec![Series { label: "gain".into(), points: rows.iter().map(|r| (r.theta_deg, r.gain)).collect() }];
        fs::write(dir.join("beampattern.svg"), line_chart("Beam gain", "angle (deg)", "gain", &series))?;
    }
    Ok(())
}

/// The weight optimizer's per-stage trace as table rows:
/// `t, chi, fairness, sum_rate_term, entropy, objective, mu_1..mu_K`.
pub fn export_fairness_path(rho: &[f64], config: &SystemConfig) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let result = hfro_optimize(rho, config)?;
    let mut header: Vec<String> =
        ["t", "chi", "fairness", "sum_rate_term", "entropy", "objective"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=rho.len()).map(|k| format!("mu_{k}")));
    let rows = result
        .stages
        .iter()
        .map(|s| {
            let mut row = vec![s.t as f64, s.chi, s.fairness, s.sum_rate_term, s.entropy_val, s.objective];
            row.extend(&s.mu);
            row
        })
        .collect();
    Ok((header, rows))
}

pub fn write_fairness_path(dir: &Path, header: &[String], rows: &[Vec<f64>], plot: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("fairness_path.csv"))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    if plot {
        let series = vec![
            Series { label: "fairness".into(), points: rows.iter().map(|r| (r[1], r[2])).collect() },
            Series { label: "rate term".into(), points: rows.iter().map(|r| (r[1], r[3])).collect() },
        ];
        fs::write(dir.join("fairness_path.svg"), line_chart("Tradeoff path", "chi", "value", &series))?;
    }
    Ok(())
}

/// True when every target gain clears its floor (within the shared tolerance).
pub fn targets_met(targets: &[TargetRow]) -> bool {
    targets.iter().all(|t| t.margin >= -FEAS_TOL)
}
