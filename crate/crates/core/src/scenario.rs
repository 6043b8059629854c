//! Problem configuration, seeded channel draws and ULA steering vectors.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use nalgebra::Complex;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{IsacError, Result};
use crate::linalg::{CMat, CVec, C64};

/// RNG stream used for channel draws of a scenario.
const CHANNEL_STREAM: u64 = 0;
/// RNG stream used for the artificial-noise initialization of a scenario.
pub const AN_INIT_STREAM: u64 = 1;
/// Default majorize-and-step repetitions per user in a beam pass.
pub const BEAM_INNER_STEPS: usize = 50;

/// All scalar parameters of one problem instance. Angles are in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub n_tx: usize,
    pub n_users: usize,
    pub n_targets: usize,
    pub per_user_power: Vec<f64>,
    pub total_power: f64,
    pub noise_user: Vec<f64>,
    pub noise_eve: f64,
    pub target_angles: Vec<f64>,
    pub beamwidth_half: f64,
    pub eaves_rate_cap: Vec<f64>,
    pub sensing_floor: Vec<f64>,
    pub path_gain: Vec<C64>,
    pub fairness_floor: f64,
    pub entropy_weight: f64,
    pub penalty_weight: f64,
    pub tradeoff_steps: usize,
    pub inner_iters: usize,
    pub trust_rate: f64,
    pub step_size: f64,
    pub spacing_ratio: f64,
    pub kappa_margin: f64,
    pub conv_tol: f64,
    pub max_outer_iters: usize,
    /// Majorize-and-step repetitions per user per beam pass (1 = a single step).
    pub beam_inner_steps: usize,
}

/// Complex path gain as written in a config file: a bare real or `[re, im]`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainValue {
    Real(f64),
    Complex([f64; 2]),
}

impl From<GainValue> for C64 {
    fn from(g: GainValue) -> Self {
        match g {
            GainValue::Real(r) => Complex::new(r, 0.0),
            GainValue::Complex([re, im]) => Complex::new(re, im),
        }
    }
}

fn default_penalty() -> f64 {
    10.0
}
fn default_steps() -> usize {
    11
}
fn default_inner() -> usize {
    50
}
fn default_trust() -> f64 {
    0.5
}
fn default_step() -> f64 {
    0.05
}
fn default_spacing() -> f64 {
    0.5
}
fn default_kappa_margin() -> f64 {
    1.0 + 1e-9
}
fn default_conv_tol() -> f64 {
    1e-6
}
fn default_max_outer() -> usize {
    500
}
fn default_beam_inner() -> usize {
    BEAM_INNER_STEPS
}

/// On-disk form of [`SystemConfig`]: same keys, angles in degrees.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub n_tx: usize,
    pub n_users: usize,
    pub n_targets: usize,
    pub per_user_power: Vec<f64>,
    pub total_power: f64,
    pub noise_user: Vec<f64>,
    pub noise_eve: f64,
    pub target_angles: Vec<f64>,
    pub beamwidth_half: f64,
    pub eaves_rate_cap: Vec<f64>,
    pub sensing_floor: Vec<f64>,
    pub path_gain: Vec<GainValue>,
    pub fairness_floor: f64,
    pub entropy_weight: f64,
    #[serde(default = "default_penalty")]
    pub penalty_weight: f64,
    #[serde(default = "default_steps")]
    pub tradeoff_steps: usize,
    #[serde(default = "default_inner")]
    pub inner_iters: usize,
    #[serde(default = "default_trust")]
    pub trust_rate: f64,
    #[serde(default = "default_step")]
    pub step_size: f64,
    #[serde(default = "default_spacing")]
    pub spacing_ratio: f64,
    #[serde(default = "default_kappa_margin")]
    pub kappa_margin: f64,
    #[serde(default = "default_conv_tol")]
    pub conv_tol: f64,
    #[serde(default = "default_max_outer")]
    pub max_outer_iters: usize,
    #[serde(default = "default_beam_inner")]
    pub beam_inner_steps: usize,
}

impl From<&SystemConfig> for ConfigFile {
    fn from(c: &SystemConfig) -> Self {
        ConfigFile {
            n_tx: c.n_tx,
            n_users: c.n_users,
            n_targets: c.n_targets,
            per_user_power: c.per_user_power.clone(),
            total_power: c.total_power,
            noise_user: c.noise_user.clone(),
            noise_eve: c.noise_eve,
            target_angles: c.target_angles.iter().map(|a| a.to_degrees()).collect(),
            beamwidth_half: c.beamwidth_half.to_degrees(),
            eaves_rate_cap: c.eaves_rate_cap.clone(),
            sensing_floor: c.sensing_floor.clone(),
            path_gain: c.path_gain.iter().map(|g| GainValue::Complex([g.re, g.im])).collect(),
            fairness_floor: c.fairness_floor,
            entropy_weight: c.entropy_weight,
            penalty_weight: c.penalty_weight,
            tradeoff_steps: c.tradeoff_steps,
            inner_iters: c.inner_iters,
            trust_rate: c.trust_rate,
            step_size: c.step_size,
            spacing_ratio: c.spacing_ratio,
            kappa_margin: c.kappa_margin,
            conv_tol: c.conv_tol,
            max_outer_iters: c.max_outer_iters,
            beam_inner_steps: c.beam_inner_steps,
        }
    }
}

impl TryFrom<ConfigFile> for SystemConfig {
    type Error = IsacError;

    fn try_from(f: ConfigFile) -> Result<Self> {
        let cfg = SystemConfig {
            n_tx: f.n_tx,
            n_users: f.n_users,
            n_targets: f.n_targets,
            per_user_power: f.per_user_power,
            total_power: f.total_power,
            noise_user: f.noise_user,
            noise_eve: f.noise_eve,
            target_angles: f.target_angles.iter().map(|a| a.to_radians()).collect(),
            beamwidth_half: f.beamwidth_half.to_radians(),
            eaves_rate_cap: f.eaves_rate_cap,
            sensing_floor: f.sensing_floor,
            path_gain: f.path_gain.into_iter().map(C64::from).collect(),
            fairness_floor: f.fairness_floor,
            entropy_weight: f.entropy_weight,
            penalty_weight: f.penalty_weight,
            tradeoff_steps: f.tradeoff_steps,
            inner_iters: f.inner_iters,
            trust_rate: f.trust_rate,
            step_size: f.step_size,
            spacing_ratio: f.spacing_ratio,
            kappa_margin: f.kappa_margin,
            conv_tol: f.conv_tol,
            max_outer_iters: f.max_outer_iters,
            beam_inner_steps: f.beam_inner_steps,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(IsacError::InvalidConfig(msg.into()))
}

impl SystemConfig {
    /// The reference parameter set used by the experiment suite
    /// (`configs/table1.json` carries the same values).
    pub fn table1() -> Self {
        let deg = |d: f64| d.to_radians();
        SystemConfig {
            n_tx: 16,
            n_users: 4,
            n_targets: 1,
            per_user_power: vec![10.0; 4],
            total_power: 100.0,
            noise_user: vec![1.0; 4],
            noise_eve: 1.0,
            target_angles: vec![deg(30.0)],
            beamwidth_half: deg(10.0),
            eaves_rate_cap: vec![0.1],
            sensing_floor: vec![2.0],
            path_gain: vec![Complex::new(1.0, 0.0)],
            fairness_floor: 0.5,
            entropy_weight: 0.01,
            penalty_weight: default_penalty(),
            tradeoff_steps: default_steps(),
            inner_iters: default_inner(),
            trust_rate: default_trust(),
            step_size: default_step(),
            spacing_ratio: default_spacing(),
            kappa_margin: default_kappa_margin(),
            conv_tol: default_conv_tol(),
            max_outer_iters: default_max_outer(),
            beam_inner_steps: default_beam_inner(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.n_users;
        let j = self.n_targets;
        if self.n_tx == 0 || k == 0 || j == 0 {
            return invalid("n_tx, n_users and n_targets must be positive");
        }
        let lens = [
            ("per_user_power", self.per_user_power.len(), k),
            ("noise_user", self.noise_user.len(), k),
            ("target_angles", self.target_angles.len(), j),
            ("eaves_rate_cap", self.eaves_rate_cap.len(), j),
            ("sensing_floor", self.sensing_floor.len(), j),
            ("path_gain", self.path_gain.len(), j),
        ];
        for (name, got, want) in lens {
            if got != want {
                return invalid(format!("{name} has {got} entries, expected {want}"));
            }
        }
        if self.per_user_power.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return invalid("per_user_power entries must be finite and nonnegative");
        }
        if !(self.total_power.is_finite() && self.total_power >= 0.0) {
            return invalid("total_power must be finite and nonnegative");
        }
        let user_power: f64 = self.per_user_power.iter().sum();
        if user_power > self.total_power {
            return invalid(format!(
                "sum of per_user_power ({user_power}) exceeds total_power ({})",
                self.total_power
            ));
        }
        if self.noise_user.iter().any(|s| !(s.is_finite() && *s > 0.0)) || !(self.noise_eve > 0.0) {
            return invalid("noise powers must be positive");
        }
        if self.target_angles.iter().any(|a| !(a.abs() <= FRAC_PI_2)) {
            return invalid("target angles must lie in [-90, 90] degrees");
        }
        if !(self.beamwidth_half >= 0.0) {
            return invalid("beamwidth_half must be nonnegative");
        }
        if self.eaves_rate_cap.iter().chain(&self.sensing_floor).any(|v| !(*v >= 0.0)) {
            return invalid("eaves_rate_cap and sensing_floor must be nonnegative");
        }
        let floor_min = 1.0 / k as f64;
        if !(self.fairness_floor > floor_min && self.fairness_floor <= 1.0) {
            // K = 1 leaves (1/K, 1] empty; a floor of exactly 1 is the only sensible value there
            if !(k == 1 && self.fairness_floor == 1.0) {
                return invalid(format!("fairness_floor must lie in (1/K, 1] = ({floor_min}, 1]"));
            }
        }
        if !(self.entropy_weight > 0.0 && self.penalty_weight > 0.0 && self.step_size > 0.0) {
            return invalid("entropy_weight, penalty_weight and step_size must be positive");
        }
        if self.tradeoff_steps == 0 || self.inner_iters == 0 || self.max_outer_iters == 0 || self.beam_inner_steps == 0 {
            return invalid("tradeoff_steps, inner_iters, max_outer_iters and beam_inner_steps must be positive");
        }
        if !(self.trust_rate > 0.0 && self.trust_rate <= 1.0) {
            return invalid("trust_rate must lie in (0, 1]");
        }
        if !(self.spacing_ratio > 0.0) {
            return invalid("spacing_ratio must be positive");
        }
        if !(self.kappa_margin >= 1.0) {
            return invalid("kappa_margin must be >= 1");
        }
        if !(self.conv_tol > 0.0) {
            return invalid("conv_tol must be positive");
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ConfigFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ConfigFile::from(self))?)
    }

    pub fn user_power_sum(&self) -> f64 {
        self.per_user_power.iter().sum()
    }

    /// Power left for artificial noise once every user budget is reserved.
    pub fn an_budget(&self) -> f64 {
        (self.total_power - self.user_power_sum()).max(0.0)
    }

    /// Sets every noise power to `10^(-snr_db/10)` (reference power 1).
    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        let sigma2 = 10f64.powf(-snr_db / 10.0);
        self.noise_user = vec![sigma2; self.n_users];
        self.noise_eve = sigma2;
        self
    }

    pub fn with_n_tx(mut self, n_tx: usize) -> Result<Self> {
        self.n_tx = n_tx;
        self.validate()?;
        Ok(self)
    }

    /// Changes K, splitting the current total user power equally and reusing
    /// the first user's noise power.
    pub fn with_users(mut self, n_users: usize) -> Result<Self> {
        if n_users == 0 {
            return invalid("n_users must be positive");
        }
        let total = self.user_power_sum();
        let noise = self.noise_user.first().copied().unwrap_or(1.0);
        self.n_users = n_users;
        self.per_user_power = vec![total / n_users as f64; n_users];
        self.noise_user = vec![noise; n_users];
        let floor_min = 1.0 / n_users as f64;
        if self.fairness_floor <= floor_min {
            // keep the floor meaningful when K shrinks
            self.fairness_floor = 0.5 * (floor_min + 1.0);
        }
        self.validate()?;
        Ok(self)
    }
}

/// Array response for any angle, no domain check.
pub(crate) fn array_response(theta: f64, n_tx: usize, spacing_ratio: f64) -> CVec {
    let phase = 2.0 * PI * spacing_ratio * theta.sin();
    CVec::from_fn(n_tx, |m, _| Complex::from_polar(1.0, phase * m as f64))
}

/// ULA steering vector `a(theta)`; element `m` is `exp(i 2π d/λ m sin θ)`.
pub fn steering_vector(theta: f64, n_tx: usize, spacing_ratio: f64) -> Result<CVec> {
    if !(theta.abs() <= FRAC_PI_2) {
        return Err(IsacError::Domain(format!("steering angle {theta} rad outside [-pi/2, pi/2]")));
    }
    Ok(array_response(theta, n_tx, spacing_ratio))
}

/// Draw from CN(0, 1): `(x + iy)/sqrt(2)` with standard normal `x`, `y`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let x: f64 = rng.sample(StandardNormal);
    let y: f64 = rng.sample(StandardNormal);
    Complex::new(x, y) * std::f64::consts::FRAC_1_SQRT_2
}

/// RNG for one named stream of a seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Per-trial seed derived from `(master, index)`; independent of execution order.
pub fn trial_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index.wrapping_add(1 << 32));
    rng.next_u64()
}

/// One realization: configuration plus channels and target steering vectors.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: SystemConfig,
    /// K x N_t, row k is `h_k`.
    pub channels: CMat,
    /// N_t x J, column j is `a(theta_j)`.
    pub target_steering: CMat,
    pub seed: u64,
}

impl Scenario {
    /// Builds a scenario around given channels (rows are users).
    pub fn from_channels(config: SystemConfig, channels: CMat, seed: u64) -> Result<Self> {
        config.validate()?;
        if channels.nrows() != config.n_users || channels.ncols() != config.n_tx {
            return invalid(format!(
                "channel matrix is {}x{}, expected {}x{}",
                channels.nrows(),
                channels.ncols(),
                config.n_users,
                config.n_tx
            ));
        }
        let mut target_steering = CMat::zeros(config.n_tx, config.n_targets);
        for (j, &theta) in config.target_angles.iter().enumerate() {
            target_steering.set_column(j, &steering_vector(theta, config.n_tx, config.spacing_ratio)?);
        }
        Ok(Scenario { config, channels, target_steering, seed })
    }

    pub fn n_tx(&self) -> usize {
        self.config.n_tx
    }

    pub fn n_users(&self) -> usize {
        self.config.n_users
    }

    pub fn n_targets(&self) -> usize {
        self.config.n_targets
    }

    /// Entries of `h_k` as a column vector (not conjugated).
    pub fn channel(&self, k: usize) -> CVec {
        self.channels.row(k).transpose()
    }

    pub fn steering(&self, j: usize) -> CVec {
        self.target_steering.column(j).into_owned()
    }

    /// `|alpha_j|^2`.
    pub fn path_power(&self, j: usize) -> f64 {
        self.config.path_gain[j].norm_sqr()
    }

    pub fn response(&self, theta: f64) -> CVec {
        array_response(theta, self.config.n_tx, self.config.spacing_ratio)
    }
}

/// Samples i.i.d. CN(0,1) channels; the same `(config, seed)` always yields
/// the same scenario.
pub fn sample_scenario(config: &SystemConfig, seed: u64) -> Result<Scenario> {
    config.validate()?;
    let mut rng = stream_rng(seed, CHANNEL_STREAM);
    let channels = CMat::from_fn(config.n_users, config.n_tx, |_, _| complex_gaussian(&mut rng));
    Scenario::from_channels(config.clone(), channels, seed)
}
