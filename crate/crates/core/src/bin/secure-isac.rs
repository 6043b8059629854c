use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use secure_isac::metrics::rate_report;
use secure_isac::plot::{line_chart, Series};
use secure_isac::sim::{
    export_beampattern, export_fairness_path, run_monte_carlo, run_trial, targets_met, write_beampattern,
    write_fairness_path, Sweep,
};
use secure_isac::solver::{alternating_solve, SolveOptions};
use secure_isac::{IsacError, Result, SystemConfig};

#[derive(Parser)]
#[command(name = "secure-isac", version, about = "Secure multi-user ISAC beamforming with artificial noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON parameter file; the built-in reference set when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also write SVG charts.
    #[arg(long)]
    plot: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario and write its iteration trace.
    Solve(Common),
    /// Monte Carlo sweep: per-trial records and per-point aggregates.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// `snr=0:5:30`, `ntx=8,16,18` or `users=2,4`.
        #[arg(long)]
        sweep: Option<String>,
    },
    /// Solve one scenario and export its beam pattern.
    Beampattern {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.5)]
        step: f64,
    },
    /// Export the fairness/throughput tradeoff path of the weight optimizer.
    Fairness {
        #[command(flatten)]
        common: Common,
        /// Comma-separated SINRs; taken from a uniform-weight solve when omitted.
        #[arg(long)]
        rho: Option<String>,
    },
}

fn load(common: &Common) -> Result<SystemConfig> {
    match &common.config {
        Some(p) => SystemConfig::load(p),
        None => Ok(SystemConfig::table1()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve(common) => {
            let cfg = load(&common)?;
            let out = run_trial(&cfg, common.seed)?;
            fs::create_dir_all(&common.out)?;
            out.trace.write_csv(fs::File::create(common.out.join("trace.csv"))?)?;
            if common.plot {
                let pts = |f: fn(&secure_isac::solver::IterationRecord) -> f64| {
                    out.trace.records.iter().map(|r| (r.iteration as f64, f(r))).collect()
                };
                let series = vec![
                    Series { label: "objective".into(), points: pts(|r| r.objective) },
                    Series { label: "secrecy".into(), points: pts(|r| r.sum_secrecy) },
                ];
                fs::write(common.out.join("trace.svg"), line_chart("Convergence", "iteration", "value", &series))?;
            }
            let r = &out.record;
            println!(
                "sum_secrecy={:.6} sum_rate={:.6} fairness={:.6} iterations={} converged={} feasible={}",
                r.sum_secrecy, r.sum_rate, r.fairness_index, r.iterations, r.converged, r.feasible
            );
        }
        Command::Simulate { common, trials, sweep } => {
            let cfg = load(&common)?;
            let sweep = match sweep {
                Some(s) => Sweep::parse(&s)?,
                None => Sweep::single(),
            };
            let res = run_monte_carlo(&cfg, &sweep, trials, common.seed)?;
            res.write_dir(&common.out, common.plot)?;
            for a in &res.aggregates {
                println!(
                    "point={} value={} secrecy={:.4}±{:.4} rate={:.4}±{:.4} converged={:.2} feasible={:.2}",
                    a.point,
                    a.sweep_value,
                    a.mean_sum_secrecy,
                    a.se_sum_secrecy,
                    a.mean_sum_rate,
                    a.se_sum_rate,
                    a.converged_fraction,
                    a.feasible_fraction
                );
            }
        }
        Command::Beampattern { common, step } => {
            let cfg = load(&common)?;
            let out = run_trial(&cfg, common.seed)?;
            let (rows, targets) = export_beampattern(&out.scenario, &out.solution, step)?;
            write_beampattern(&common.out, &rows, &targets, common.plot)?;
            for t in &targets {
                println!("target={} theta_deg={} gain={:.6} margin={:.6}", t.target, t.theta_deg, t.gain, t.margin);
            }
            if !targets_met(&targets) {
                eprintln!("warning: sensing floor not met at every target");
            }
        }
        Command::Fairness { common, rho } => {
            let cfg = load(&common)?;
            let rho = match rho {
                Some(text) => text
                    .split(',')
                    .map(|s| s.trim().parse::<f64>().map_err(|_| IsacError::InvalidConfig(format!("bad SINR '{s}'"))))
                    .collect::<Result<Vec<_>>>()?,
                None => {
                    let s = secure_isac::scenario::sample_scenario(&cfg, common.seed)?;
                    let k = cfg.n_users;
                    let solved = alternating_solve(&s, &vec![1.0 / k as f64; k], &SolveOptions::from_config(&cfg))?;
                    rate_report(&s, &solved.solution).sinr_legit.iter().map(|r| r.max(1e-9)).collect()
                }
            };
            let mut cfg = cfg;
            if rho.len() != cfg.n_users {
                cfg = cfg.with_users(rho.len())?;
            }
            let (header, rows) = export_fairness_path(&rho, &cfg)?;
            write_fairness_path(&common.out, &header, &rows, common.plot)?;
            if let Some(last) = rows.last() {
                println!("stages={} final_mu={:?}", rows.len(), &last[6..]);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
