//! Experiment configuration, the Monte Carlo drivers, and result files.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::baselines::{exhaustive_slots, run_exhaustive, run_fnrb, BaselineOutcome};
use crate::channel::{db_to_linear, dbm_to_watts, draw_cell_user, draw_paths, ChannelRealization, PathSet};
use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::evaluation::{
    achievable_rate, effective_rate, per_user_effective_rate, schedule_first, schedule_random, select_data_beams,
    Summary,
};
use crate::gamp::{GampConfig, GampPrior};
use crate::measurement::{PilotConfig, PilotRule};
use crate::numerics::{stream_id, Complex64, RngStream, StreamRole};
use crate::parallel;
use crate::session::{run_swift, Adaptation, BsScheduler, StopDecision, SwiftConfig, UserSetup};

/// A training scheme under comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    Swift(Adaptation),
    Exhaustive,
    /// Fixed number of random-beam slots.
    Fnrb(usize),
}

impl Scheme {
    pub fn is_swift(&self) -> bool {
        matches!(self, Scheme::Swift(_))
    }

    /// Every scheme family with a representative configuration.
    pub fn catalogue() -> Vec<(&'static str, &'static str)> {
        vec![
            ("SWIFT-FPA", "adaptive stop, forcing beam probabilities"),
            ("SWIFT-PEPA", "adaptive stop, forcing then estimate-driven UE beam probabilities"),
            ("SWIFT-UNIFORM", "adaptive stop, uniform beam probabilities"),
            ("ES", "exhaustive sweep of every beam pair"),
            ("FNRB-<T>", "T uniformly random slots, then one estimate"),
        ]
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Swift(a) => write!(f, "SWIFT-{}", a.to_string().to_uppercase()),
            Scheme::Exhaustive => f.write_str("ES"),
            Scheme::Fnrb(t) => write!(f, "FNRB-{t}"),
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase();
        if let Some(rest) = up.strip_prefix("SWIFT-") {
            return Ok(Scheme::Swift(rest.parse()?));
        }
        if up == "ES" {
            return Ok(Scheme::Exhaustive);
        }
        let digits = up
            .strip_prefix("FNRB-")
            .or_else(|| up.strip_prefix("FNRB(").and_then(|r| r.strip_suffix(')')));
        if let Some(d) = digits {
            return match d.parse::<usize>() {
                Ok(t) if t > 0 => Ok(Scheme::Fnrb(t)),
                _ => Err(Error::InvalidConfig(format!("bad FNRB slot count in '{s}'"))),
            };
        }
        Err(Error::InvalidConfig(format!("unknown scheme '{s}' (try --list-schemes)")))
    }
}

impl Serialize for Scheme {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Scheme {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// SNR sweep with one user per trial.
    SingleUser,
    /// Users dropped in a cell, user-count sweep with scheduling.
    MultiUser,
}

/// How power, noise and path-gain variance are expressed.
///
/// Only the binarization threshold and the estimator prior depend on the
/// absolute scale; every SNR and rate is the same under both.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    /// Watts as configured.
    Physical,
    /// Noise-normalized: `P = N0 = 1` and `sigma_R` equal to the linear SNR.
    NoiseNormalized,
}

/// Variance the estimator's prior assigns to an active virtual-channel entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorScale {
    /// `sigma_R`, the per-path gain variance.
    Path,
    /// `N_BS * N_UE * sigma_R`, the variance of an on-grid entry of `H_v`.
    Virtual,
}

/// Reference the binarization threshold `Gamma * sigma` is measured against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdScale {
    /// `sigma = sigma_R`.
    Path,
    /// `sigma = N_BS * N_UE * sigma_R`.
    Virtual,
    /// `sigma = sqrt(N_BS * N_UE * sigma_R)`, the RMS magnitude of an on-grid
    /// entry of `H_v`. Invariant to the unit convention.
    Rms,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub n_bs: usize,
    pub n_ue: usize,
    pub r_bs: usize,
    pub r_ue: usize,
    pub expected_paths: f64,
    pub on_grid: bool,
    pub pilots: PilotRule,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            n_bs: 32,
            n_ue: 16,
            r_bs: 8,
            r_ue: 4,
            expected_paths: 3.0,
            on_grid: false,
            pilots: PilotRule::Qpsk,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub t_u: usize,
    /// Defaults to `N_BS * N_UE / R_UE` when absent.
    pub t_max: Option<usize>,
    pub gamma: f64,
    /// Two consecutive all-zero estimates count as convergence.
    pub empty_converges: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            t_u: 4,
            t_max: None,
            gamma: 0.1,
            empty_converges: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SingleUserConfig {
    pub snr_db: Vec<f64>,
    /// Transmit power used to realize each SNR point.
    pub power_dbm: f64,
    pub noise_dbm: f64,
}

impl Default for SingleUserConfig {
    fn default() -> Self {
        Self {
            snr_db: (0..=10).map(|i| -20.0 + 4.0 * i as f64).collect(),
            power_dbm: 20.0,
            noise_dbm: -60.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultiUserConfig {
    pub users: Vec<usize>,
    pub n_s: usize,
    pub power_dbm: f64,
    pub noise_dbm: f64,
    pub beta: f64,
    pub radius_m: f64,
    pub d_min_m: f64,
}

impl Default for MultiUserConfig {
    fn default() -> Self {
        Self {
            users: vec![10, 13, 17, 21, 25],
            n_s: 10,
            power_dbm: 20.0,
            noise_dbm: -60.0,
            beta: 4.0,
            radius_m: 200.0,
            d_min_m: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub units: Units,
    pub prior_scale: PriorScale,
    pub threshold_scale: ThresholdScale,
    /// Share of the mean received signal power the estimator adds to its
    /// noise variance, standing in for off-grid leakage the sparse prior
    /// cannot describe.
    pub mismatch: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            units: Units::NoiseNormalized,
            prior_scale: PriorScale::Path,
            threshold_scale: ThresholdScale::Rms,
            mismatch: 0.2,
        }
    }
}

/// Full experiment description. Every field has a default, so an empty file
/// is a valid single-user run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub trials: usize,
    pub seed: u64,
    pub schemes: Vec<Scheme>,
    /// Coherence times, in symbols, for effective-rate metrics.
    pub coherence: Vec<f64>,
    pub system: SystemConfig,
    pub training: TrainingConfig,
    pub gamp: GampConfig,
    pub single_user: SingleUserConfig,
    pub multi_user: MultiUserConfig,
    pub model: ModelConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::SingleUser,
            trials: 100,
            seed: 1,
            schemes: vec![
                Scheme::Swift(Adaptation::Fpa),
                Scheme::Swift(Adaptation::Pepa),
                Scheme::Exhaustive,
                Scheme::Fnrb(20),
                Scheme::Fnrb(40),
                Scheme::Fnrb(60),
                Scheme::Fnrb(128),
            ],
            coherence: vec![200.0, 400.0],
            system: SystemConfig::default(),
            training: TrainingConfig::default(),
            gamp: GampConfig::default(),
            single_user: SingleUserConfig::default(),
            multi_user: MultiUserConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: "<config>".into(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn t_max(&self) -> usize {
        let s = &self.system;
        self.training.t_max.unwrap_or(exhaustive_slots(s.n_bs, s.n_ue, s.r_ue))
    }

    pub fn swift(&self, adaptation: Adaptation) -> SwiftConfig {
        SwiftConfig {
            t_u: self.training.t_u,
            t_max: self.t_max(),
            gamma: self.training.gamma,
            adaptation,
            empty_converges: self.training.empty_converges,
        }
    }

    /// Checks every constraint before any trial runs.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let s = &self.system;
        if s.n_bs == 0 || s.n_ue == 0 {
            return bad("antenna counts must be positive".into());
        }
        if s.r_bs == 0 || s.r_bs > s.n_bs || s.r_ue == 0 || s.r_ue > s.n_ue {
            return bad(format!(
                "RF chains must satisfy 1 <= R <= N (R_BS={}, N_BS={}, R_UE={}, N_UE={})",
                s.r_bs, s.n_bs, s.r_ue, s.n_ue
            ));
        }
        if !(s.expected_paths > 0.0 && s.expected_paths.is_finite()) {
            return bad(format!("expected_paths must be positive, got {}", s.expected_paths));
        }
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        if self.schemes.is_empty() {
            return bad("at least one scheme is required".into());
        }
        if self.coherence.iter().any(|&t| !(t > 0.0)) {
            return bad("coherence times must be positive".into());
        }
        self.swift(Adaptation::Uniform).validate()?;
        self.gamp.validate()?;
        if !(self.model.mismatch >= 0.0 && self.model.mismatch.is_finite()) {
            return bad(format!("model.mismatch must be a finite value >= 0, got {}", self.model.mismatch));
        }
        match self.mode {
            Mode::SingleUser => {
                if self.single_user.snr_db.is_empty() {
                    return bad("single_user.snr_db is empty".into());
                }
                if self.single_user.snr_db.iter().any(|x| !x.is_finite()) {
                    return bad("single_user.snr_db must be finite".into());
                }
            }
            Mode::MultiUser => {
                let m = &self.multi_user;
                if m.users.is_empty() || m.users.contains(&0) {
                    return bad("multi_user.users must be a non-empty list of positive counts".into());
                }
                if m.n_s == 0 {
                    return bad("multi_user.n_s must be >= 1".into());
                }
                if !(0.0 < m.d_min_m && m.d_min_m < m.radius_m) {
                    return bad(format!("need 0 < d_min < R, got d_min={}, R={}", m.d_min_m, m.radius_m));
                }
                if m.beta < 0.0 {
                    return bad("beta must be >= 0".into());
                }
            }
        }
        Ok(())
    }
}

/// Power, noise and path-gain variance after applying the unit convention.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkScale {
    pub power: f64,
    pub noise: f64,
    pub sigma_r: f64,
}

impl LinkScale {
    pub fn new(units: Units, power_w: f64, noise_w: f64, sigma_r: f64) -> Self {
        match units {
            Units::Physical => Self {
                power: power_w,
                noise: noise_w,
                sigma_r,
            },
            Units::NoiseNormalized => Self {
                power: 1.0,
                noise: 1.0,
                sigma_r: power_w * sigma_r / noise_w,
            },
        }
    }

    /// Single-user point with `P * sigma_R / N0` equal to `snr_db`.
    pub fn at_snr(units: Units, power_dbm: f64, noise_dbm: f64, snr_db: f64) -> Self {
        let (p, n) = (dbm_to_watts(power_dbm), dbm_to_watts(noise_dbm));
        Self::new(units, p, n, db_to_linear(snr_db) * n / p)
    }
}

/// Per-scheme result of one user in one trial.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UserOutcome {
    pub t_e: usize,
    pub timed_out: bool,
    /// Achievable rate with the reported data beams, bit/s/Hz.
    pub rate: f64,
}

/// Shared per-run constants.
struct Context {
    f_c: Codebook,
    w_c: Codebook,
    cfg: ExperimentConfig,
}

impl Context {
    fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            f_c: Codebook::new(cfg.system.n_bs),
            w_c: Codebook::new(cfg.system.n_ue),
            cfg: cfg.clone(),
        }
    }

    fn rng(&self, trial: u64, role: StreamRole, entity: u64) -> RngStream {
        RngStream::fork(self.cfg.seed, stream_id(trial, role, entity))
    }

    fn scaled_sigma(&self, which: PriorScale, scale: &LinkScale) -> f64 {
        let s = &self.cfg.system;
        match which {
            PriorScale::Path => scale.sigma_r,
            PriorScale::Virtual => (s.n_bs * s.n_ue) as f64 * scale.sigma_r,
        }
    }

    fn prior(&self, scale: &LinkScale) -> Result<GampPrior> {
        let s = &self.cfg.system;
        let cells = (s.n_bs * s.n_ue) as f64;
        let var = self.scaled_sigma(self.cfg.model.prior_scale, scale);
        let leak = self.cfg.model.mismatch * scale.power * s.expected_paths * scale.sigma_r;
        GampPrior::new((s.expected_paths / cells).min(1.0), var, scale.noise + leak)
    }

    fn threshold_sigma(&self, scale: &LinkScale) -> f64 {
        match self.cfg.model.threshold_scale {
            ThresholdScale::Path => self.scaled_sigma(PriorScale::Path, scale),
            ThresholdScale::Virtual => self.scaled_sigma(PriorScale::Virtual, scale),
            ThresholdScale::Rms => self.scaled_sigma(PriorScale::Virtual, scale).sqrt(),
        }
    }

    /// Unit-variance path draw for a user; scaled per SNR point so every
    /// point sees the same geometry and fading.
    fn base_paths(&self, trial: u64, user: u64) -> Result<PathSet> {
        let s = &self.cfg.system;
        let mut rng = self.rng(trial, StreamRole::Channel, user);
        draw_paths(s.expected_paths, 1.0, s.on_grid, s.n_bs, s.n_ue, &mut rng)
    }

    fn realize(&self, base: &PathSet, sigma_r: f64) -> ChannelRealization {
        let amp = Complex64::new(sigma_r.sqrt(), 0.0);
        let paths = PathSet {
            aod: base.aod.clone(),
            aoa: base.aoa.clone(),
            gains: base.gains.iter().map(|g| g * amp).collect(),
        };
        ChannelRealization::from_paths(paths, &self.f_c, &self.w_c)
    }

    fn rate(&self, ch: &ChannelRealization, v_hat: &[Complex64], scale: &LinkScale) -> Result<f64> {
        let s = &self.cfg.system;
        let sigma = self.threshold_sigma(scale);
        let sel = select_data_beams(v_hat, s.n_ue, self.cfg.training.gamma, sigma, s.r_bs.min(s.r_ue));
        achievable_rate(&ch.h, &sel, &self.f_c, &self.w_c, scale.power, scale.noise)
    }

    fn baseline_outcome(&self, out: BaselineOutcome, ch: &ChannelRealization, scale: &LinkScale) -> Result<UserOutcome> {
        Ok(UserOutcome {
            t_e: out.t_e,
            timed_out: false,
            rate: self.rate(ch, &out.v_hat, scale)?,
        })
    }

    /// Runs one non-adaptive scheme for one user.
    fn run_baseline(
        &self,
        scheme: Scheme,
        trial: u64,
        user: u64,
        ch: &ChannelRealization,
        scale: &LinkScale,
    ) -> Result<UserOutcome> {
        let s = &self.cfg.system;
        let pilot = PilotConfig::new(scale.power, scale.noise)?.with_rule(s.pilots);
        let prior = self.prior(scale)?;
        let mut noise = self.rng(trial, StreamRole::Noise, user);
        let out = match scheme {
            Scheme::Exhaustive => run_exhaustive(ch, &self.f_c, &self.w_c, s.r_ue, &pilot, &prior, &self.cfg.gamp, &mut noise)?,
            Scheme::Fnrb(t) => {
                // BS draws come from the shared BS stream, so every user in a
                // trial sees the same BS beams.
                let mut bs = self.rng(trial, StreamRole::BsBeams, 0);
                let mut ue = self.rng(trial, StreamRole::UeBeams, user);
                run_fnrb(
                    t, ch, &self.f_c, &self.w_c, s.r_bs, s.r_ue, &pilot, &prior, &self.cfg.gamp, &mut bs, &mut ue,
                    &mut noise,
                )?
            }
            Scheme::Swift(_) => unreachable!("adaptive schemes run through run_swift_users"),
        };
        self.baseline_outcome(out, ch, scale)
    }

    /// Runs one adaptive scheme for a set of users sharing the BS stream.
    fn run_swift_users(
        &self,
        adaptation: Adaptation,
        trial: u64,
        users: &[(u64, ChannelRealization, LinkScale)],
    ) -> Result<Vec<UserOutcome>> {
        let s = &self.cfg.system;
        // Pilot power and noise are common to every user in a run.
        let scale0 = users.first().map(|u| u.2).ok_or_else(|| Error::InvalidConfig("no users".into()))?;
        let pilot = PilotConfig::new(scale0.power, scale0.noise)?.with_rule(s.pilots);
        let setups = users
            .iter()
            .map(|(id, ch, scale)| {
                Ok(UserSetup {
                    user_id: *id as usize,
                    channel: ch.clone(),
                    prior: self.prior(scale)?,
                    threshold_sigma: self.threshold_sigma(scale),
                    ue_rng: self.rng(trial, StreamRole::UeBeams, *id),
                    noise_rng: self.rng(trial, StreamRole::Noise, *id),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut bs = BsScheduler::for_adaptation(s.n_bs, s.r_bs, adaptation, self.rng(trial, StreamRole::BsBeams, 0));
        let sessions = run_swift(
            &setups,
            &mut bs,
            self.cfg.swift(adaptation),
            s.r_bs,
            s.r_ue,
            self.cfg.gamp,
            pilot,
            &self.f_c,
            &self.w_c,
        )?;
        sessions
            .iter()
            .zip(users)
            .map(|(sess, (_, ch, scale))| {
                let fb = sess.feedback().expect("run_swift returns only finished sessions");
                let rate = if fb.beams.is_empty() {
                    0.0
                } else {
                    let sel = fb.beams.clone();
                    achievable_rate(&ch.h, &sel, &self.f_c, &self.w_c, scale.power, scale.noise)?
                };
                Ok(UserOutcome {
                    t_e: fb.t_e,
                    timed_out: fb.outcome == StopDecision::Timeout,
                    rate,
                })
            })
            .collect()
    }
}

/// All single-user outcomes of one trial: `[snr index][scheme index]`.
pub type SingleUserTrial = Vec<Vec<UserOutcome>>;

/// Simulates one single-user trial across every SNR point and scheme.
pub fn single_user_trial(cfg: &ExperimentConfig, trial: u64) -> Result<SingleUserTrial> {
    single_user_trial_in(&Context::new(cfg), trial)
}

fn single_user_trial_in(ctx: &Context, trial: u64) -> Result<SingleUserTrial> {
    let cfg = &ctx.cfg;
    let su = &cfg.single_user;
    let base = ctx.base_paths(trial, 0)?;
    su.snr_db
        .iter()
        .map(|&snr| {
            let scale = LinkScale::at_snr(cfg.model.units, su.power_dbm, su.noise_dbm, snr);
            let ch = ctx.realize(&base, scale.sigma_r);
            cfg.schemes
                .iter()
                .map(|&scheme| match scheme {
                    Scheme::Swift(a) => {
                        let users = [(0u64, ch.clone(), scale)];
                        Ok(ctx.run_swift_users(a, trial, &users)?.remove(0))
                    }
                    other => ctx.run_baseline(other, trial, 0, &ch, &scale),
                })
                .collect()
        })
        .collect()
}

/// Per-user outcomes of one multi-user trial, `[scheme][user]`, plus the
/// scheduling draws for the fixed-length schemes.
#[derive(Clone, Debug)]
pub struct MultiUserTrial {
    pub outcomes: Vec<Vec<UserOutcome>>,
    /// `[scheme][user count] -> per-user effective rate per coherence time`.
    pub effective: Vec<Vec<Vec<f64>>>,
}

pub fn multi_user_trial(cfg: &ExperimentConfig, trial: u64) -> Result<MultiUserTrial> {
    multi_user_trial_in(&Context::new(cfg), trial)
}

fn multi_user_trial_in(ctx: &Context, trial: u64) -> Result<MultiUserTrial> {
    let cfg = &ctx.cfg;
    let mu = &cfg.multi_user;
    let u_max = *mu.users.iter().max().expect("validated non-empty");
    let (p, n0) = (dbm_to_watts(mu.power_dbm), dbm_to_watts(mu.noise_dbm));
    let users = (0..u_max as u64)
        .map(|u| {
            let mut geo = ctx.rng(trial, StreamRole::Geometry, u);
            let cell = draw_cell_user(u as usize, mu.radius_m, mu.beta, mu.d_min_m, &mut geo)?;
            let scale = LinkScale::new(cfg.model.units, p, n0, cell.sigma_r);
            let ch = ctx.realize(&ctx.base_paths(trial, u)?, scale.sigma_r);
            Ok((u, ch, scale))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut outcomes = Vec::with_capacity(cfg.schemes.len());
    let mut effective = Vec::with_capacity(cfg.schemes.len());
    for &scheme in &cfg.schemes {
        let out = match scheme {
            Scheme::Swift(a) => ctx.run_swift_users(a, trial, &users)?,
            other => users
                .iter()
                .map(|(u, ch, scale)| ctx.run_baseline(other, trial, *u, ch, scale))
                .collect::<Result<Vec<_>>>()?,
        };
        let rates: Vec<f64> = out.iter().map(|o| o.rate).collect();
        let mut per_count = Vec::with_capacity(mu.users.len());
        for &count in &mu.users {
            let schedule = match scheme {
                Scheme::Swift(_) => {
                    let t_e: Vec<usize> = out[..count].iter().map(|o| o.t_e).collect();
                    schedule_first(&t_e, mu.n_s)
                }
                _ => {
                    let mut rng = ctx.rng(trial, StreamRole::Scheduler, count as u64);
                    schedule_random(count, mu.n_s, out[0].t_e, &mut rng)?
                }
            };
            per_count.push(
                cfg.coherence
                    .iter()
                    .map(|&t_c| per_user_effective_rate(&rates[..count], &schedule, t_c))
                    .collect(),
            );
        }
        outcomes.push(out);
        effective.push(per_count);
    }
    Ok(MultiUserTrial { outcomes, effective })
}

/// One `results.csv` row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scheme: String,
    pub sweep_var: String,
    pub sweep_value: f64,
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
    pub seed: u64,
}

/// One `cdf.csv` row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdfRow {
    pub scheme: String,
    pub snr_db: f64,
    pub t_e: usize,
    pub cdf: f64,
}

/// Aggregated experiment output plus the raw per-trial samples behind it.
#[derive(Clone, Debug, Default)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub cdf: Vec<CdfRow>,
    /// `(scheme, sweep value, metric) -> per-trial samples`.
    pub samples: BTreeMap<(String, String, String), Vec<f64>>,
}

impl ResultTable {
    /// Per-trial samples for a metric at a sweep point.
    pub fn samples(&self, scheme: &str, sweep_value: f64, metric: &str) -> Option<&[f64]> {
        self.samples
            .get(&(scheme.to_string(), key(sweep_value), metric.to_string()))
            .map(|v| v.as_slice())
    }

    pub fn row(&self, scheme: &str, sweep_value: f64, metric: &str) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.scheme == scheme && r.sweep_value == sweep_value && r.metric == metric)
    }

    fn push(&mut self, cfg: &ExperimentConfig, scheme: Scheme, sweep_var: &str, value: f64, metric: String, xs: Vec<f64>) {
        let s = Summary::of(&xs);
        self.rows.push(ResultRow {
            scheme: scheme.to_string(),
            sweep_var: sweep_var.to_string(),
            sweep_value: value,
            metric: metric.clone(),
            mean: s.mean,
            stderr: s.stderr,
            trials: s.n,
            seed: cfg.seed,
        });
        self.samples.insert((scheme.to_string(), key(value), metric), xs);
    }
}

fn key(x: f64) -> String {
    format!("{x}")
}

/// Name of the effective-rate metric for coherence time `t_c`.
pub fn effective_rate_metric(t_c: f64) -> String {
    format!("effective_rate_tc{t_c}")
}

/// Runs every trial and aggregates. Trials fan out over the worker pool.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let ctx = Context::new(cfg);
    let trials: Vec<u64> = (0..cfg.trials as u64).collect();
    match cfg.mode {
        Mode::SingleUser => {
            let per_trial = parallel::map(trials, |t| single_user_trial_in(&ctx, t))
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            Ok(aggregate_single_user(cfg, &per_trial))
        }
        Mode::MultiUser => {
            let per_trial = parallel::map(trials, |t| multi_user_trial_in(&ctx, t))
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            Ok(aggregate_multi_user(cfg, &per_trial))
        }
    }
}

pub fn aggregate_single_user(cfg: &ExperimentConfig, trials: &[SingleUserTrial]) -> ResultTable {
    let mut table = ResultTable::default();
    let t_max = cfg.t_max();
    for (k, &snr) in cfg.single_user.snr_db.iter().enumerate() {
        for (j, &scheme) in cfg.schemes.iter().enumerate() {
            let outs: Vec<&UserOutcome> = trials.iter().map(|t| &t[k][j]).collect();
            let t_e: Vec<f64> = outs.iter().map(|o| o.t_e as f64).collect();
            let rate: Vec<f64> = outs.iter().map(|o| o.rate).collect();
            let timeout: Vec<f64> = outs.iter().map(|o| o.timed_out as u8 as f64).collect();
            table.push(cfg, scheme, "snr_db", snr, "t_e".into(), t_e.clone());
            table.push(cfg, scheme, "snr_db", snr, "rate".into(), rate);
            for &t_c in &cfg.coherence {
                let eff = outs.iter().map(|o| effective_rate(o.rate, o.t_e as f64, t_c)).collect();
                table.push(cfg, scheme, "snr_db", snr, effective_rate_metric(t_c), eff);
            }
            table.push(cfg, scheme, "snr_db", snr, "timeout_fraction".into(), timeout);
            if scheme.is_swift() {
                let n = t_e.len() as f64;
                let mut grid: Vec<usize> = (cfg.training.t_u..=t_max).step_by(cfg.training.t_u).collect();
                if grid.last() != Some(&t_max) {
                    grid.push(t_max);
                }
                for x in grid {
                    table.cdf.push(CdfRow {
                        scheme: scheme.to_string(),
                        snr_db: snr,
                        t_e: x,
                        cdf: t_e.iter().filter(|&&s| s <= x as f64).count() as f64 / n,
                    });
                }
            }
        }
    }
    table
}

pub fn aggregate_multi_user(cfg: &ExperimentConfig, trials: &[MultiUserTrial]) -> ResultTable {
    let mut table = ResultTable::default();
    let mu = &cfg.multi_user;
    for (j, &scheme) in cfg.schemes.iter().enumerate() {
        for (c, &count) in mu.users.iter().enumerate() {
            for (i, &t_c) in cfg.coherence.iter().enumerate() {
                let xs = trials.iter().map(|t| t.effective[j][c][i]).collect();
                table.push(cfg, scheme, "users", count as f64, format!("per_user_{}", effective_rate_metric(t_c)), xs);
            }
            let t_e = trials
                .iter()
                .map(|t| t.outcomes[j][..count].iter().map(|o| o.t_e as f64).sum::<f64>() / count as f64)
                .collect();
            table.push(cfg, scheme, "users", count as f64, "mean_t_e".into(), t_e);
        }
    }
    table
}

/// Paths of the files [`write_results`] produces.
#[derive(Clone, Debug)]
pub struct OutputFiles {
    pub results: PathBuf,
    pub cdf: PathBuf,
    pub config: PathBuf,
}

/// Writes `results.csv`, `cdf.csv` and the `config.json` sidecar into `dir`.
pub fn write_results(table: &ResultTable, cfg: &ExperimentConfig, dir: &Path) -> Result<OutputFiles> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = OutputFiles {
        results: dir.join("results.csv"),
        cdf: dir.join("cdf.csv"),
        config: dir.join("config.json"),
    };
    write_csv(&files.results, &["scheme", "sweep_var", "sweep_value", "metric", "mean", "stderr", "trials", "seed"], &table.rows)?;
    write_csv(&files.cdf, &["scheme", "snr_db", "t_e", "cdf"], &table.cdf)?;
    let json = serde_json::to_string_pretty(cfg).expect("config is always serializable");
    fs::write(&files.config, json + "\n").map_err(|e| Error::io(&files.config, e))?;
    Ok(files)
}

fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let csv_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    // The header is written explicitly so an empty table still gets one.
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads back a `results.csv`.
pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    read_csv(path)
}

/// Reads back a `cdf.csv`.
pub fn read_cdf(path: &Path) -> Result<Vec<CdfRow>> {
    read_csv(path)
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    r.deserialize()
        .map(|row| {
            row.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
        })
        .collect()
}
