//! Per-user adaptive training loop: beam-probability adaptation, periodic
//! sparse recovery, binarized convergence test, and the feedback event.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelRealization;
use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::evaluation::{select_data_beams, DataBeamSelection};
use crate::gamp::{gamp_estimate, GampConfig, GampPrior};
use crate::measurement::{select_beams, simulate_measurement, BeamSelection, MeasurementLedger, PilotConfig};
use crate::numerics::RngStream;

/// How beam-selection weights evolve between slots.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adaptation {
    Uniform,
    /// Forcing: weights inversely proportional to usage counts.
    Fpa,
    /// Forcing until every beam pair has been measured, then UE weights
    /// proportional to the predicted received power.
    Pepa,
}

impl fmt::Display for Adaptation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Adaptation::Uniform => "uniform",
            Adaptation::Fpa => "fpa",
            Adaptation::Pepa => "pepa",
        })
    }
}

impl FromStr for Adaptation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(Adaptation::Uniform),
            "fpa" => Ok(Adaptation::Fpa),
            "pepa" => Ok(Adaptation::Pepa),
            other => Err(Error::InvalidConfig(format!("unknown adaptation '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwiftConfig {
    /// Slots between estimate updates.
    pub t_u: usize,
    /// Measurement cap.
    pub t_max: usize,
    /// Binarization threshold, relative to `sigma_R`.
    pub gamma: f64,
    pub adaptation: Adaptation,
    /// Whether two consecutive all-zero bit vectors count as convergence.
    /// When false, a user that detects nothing trains until `t_max`.
    #[serde(default)]
    pub empty_converges: bool,
}

impl SwiftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_u == 0 || self.t_u > self.t_max {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= T_u <= T_max, got T_u={} T_max={}",
                self.t_u, self.t_max
            )));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidConfig(format!("Gamma must lie in (0, 1), got {}", self.gamma)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopDecision {
    Continue,
    Complete,
    Timeout,
}

/// Bit `i` is 0 iff `|v_i| < gamma * sigma_r`.
pub fn binarize(v_hat: &[Complex64], gamma: f64, sigma_r: f64) -> Vec<bool> {
    let threshold = gamma * sigma_r;
    v_hat.iter().map(|z| !(z.norm() < threshold)).collect()
}

pub fn check_stopping(now: &[bool], prev: Option<&[bool]>, slot: usize, cfg: &SwiftConfig) -> StopDecision {
    let settled = prev.is_some_and(|p| p == now);
    if settled && (cfg.empty_converges || now.iter().any(|&b| b)) {
        StopDecision::Complete
    } else if slot >= cfg.t_max {
        StopDecision::Timeout
    } else {
        StopDecision::Continue
    }
}

/// BS forcing weights: `1 / N_f(n)`, with never-used beams marked infinite.
pub fn fpa_bs_weights(use_counts: &[u32]) -> Vec<f64> {
    use_counts.iter().map(|&n| inverse_count(n)).collect()
}

/// UE forcing weights: `1 / min_{i in next BS beams} N_w(n | i)`.
pub fn fpa_ue_weights(pairs: &PairCounts, next_bs: &[usize]) -> Vec<f64> {
    (0..pairs.n_ue)
        .map(|n| {
            let min = next_bs.iter().map(|&b| pairs.get(n, b)).min().unwrap_or(0);
            inverse_count(min)
        })
        .collect()
}

fn inverse_count(n: u32) -> f64 {
    if n == 0 {
        f64::INFINITY
    } else {
        1.0 / n as f64
    }
}

/// Predicted received power per UE candidate beam for the next BS
/// transmission: `(P / R_BS) * |(H_v q)_n|^2` with `q = F_c^H F_next s`.
///
/// `q` is the pilot-weighted indicator of `next_bs` because the candidate
/// beams are orthonormal. Returns `None` when the estimate predicts no energy
/// at all, in which case callers fall back to forcing weights.
pub fn pepa_ue_weights(
    v_hat: &[Complex64],
    n_ue: usize,
    next_bs: &[usize],
    pilots: &[Complex64],
    power: f64,
) -> Option<Vec<f64>> {
    let scale = power / next_bs.len() as f64;
    let w: Vec<f64> = (0..n_ue)
        .map(|n| {
            let e: Complex64 = next_bs.iter().zip(pilots).map(|(&b, &s)| v_hat[b * n_ue + n] * s).sum();
            scale * e.norm_sqr()
        })
        .collect();
    if w.iter().any(|&x| x > 0.0) {
        Some(w)
    } else {
        None
    }
}

/// Weighted draw where infinite weights mark beams that must be included.
///
/// Forced beams go in first (uniformly at random among them if there are more
/// than `k`); the remaining picks are weighted draws among the finite ones.
pub fn select_with_forcing(weights: &[f64], k: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
    let forced: Vec<usize> = (0..weights.len()).filter(|&i| weights[i].is_infinite()).collect();
    if forced.is_empty() {
        return select_beams(weights, k, rng);
    }
    if forced.len() >= k {
        let picks = select_beams(&vec![1.0; forced.len()], k, rng)?;
        return Ok(picks.into_iter().map(|p| forced[p]).collect());
    }
    let rest: Vec<f64> = weights.iter().map(|&w| if w.is_infinite() { 0.0 } else { w }).collect();
    let mut out = forced.clone();
    out.extend(select_beams(&rest, k - forced.len(), rng)?);
    Ok(out)
}

/// Joint usage counts `N_w(n | i)`: UE beam `n` measured while BS beam `i`
/// was transmitting.
#[derive(Clone, Debug, PartialEq)]
pub struct PairCounts {
    n_ue: usize,
    n_bs: usize,
    counts: Vec<u32>,
    unspanned: usize,
}

impl PairCounts {
    pub fn new(n_ue: usize, n_bs: usize) -> Self {
        Self {
            n_ue,
            n_bs,
            counts: vec![0; n_ue * n_bs],
            unspanned: n_ue * n_bs,
        }
    }

    pub fn get(&self, ue: usize, bs: usize) -> u32 {
        self.counts[bs * self.n_ue + ue]
    }

    pub fn record(&mut self, ue: usize, bs: usize) {
        let c = &mut self.counts[bs * self.n_ue + ue];
        if *c == 0 {
            self.unspanned -= 1;
        }
        *c += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// Every (UE, BS) pair measured at least once.
    pub fn full_span(&self) -> bool {
        self.unspanned == 0
    }

    pub fn n_bs(&self) -> usize {
        self.n_bs
    }
}

/// The base station's beam draw. Its state depends only on its own stream
/// and past draws, so a clone run by a user predicts it exactly.
#[derive(Clone, Debug)]
pub struct BsScheduler {
    r_bs: usize,
    forcing: bool,
    use_counts: Vec<u32>,
    rng: RngStream,
    slot: usize,
}

impl BsScheduler {
    /// `forcing` enables the inverse-count weights; otherwise draws are uniform.
    pub fn new(n_bs: usize, r_bs: usize, forcing: bool, rng: RngStream) -> Self {
        Self {
            r_bs,
            forcing,
            use_counts: vec![0; n_bs],
            rng,
            slot: 0,
        }
    }

    pub fn for_adaptation(n_bs: usize, r_bs: usize, adaptation: Adaptation, rng: RngStream) -> Self {
        Self::new(n_bs, r_bs, adaptation != Adaptation::Uniform, rng)
    }

    pub fn next_selection(&mut self) -> Result<Vec<usize>> {
        let picks = if self.forcing {
            select_with_forcing(&fpa_bs_weights(&self.use_counts), self.r_bs, &mut self.rng)?
        } else {
            select_beams(&vec![1.0; self.use_counts.len()], self.r_bs, &mut self.rng)?
        };
        for &b in &picks {
            self.use_counts[b] += 1;
        }
        self.slot += 1;
        Ok(picks)
    }

    pub fn use_counts(&self) -> &[u32] {
        &self.use_counts
    }

    pub fn slot(&self) -> usize {
        self.slot
    }
}

/// What a user reports when it stops training.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeedbackEvent {
    pub user_id: usize,
    /// Slots spent training.
    pub t_e: usize,
    pub outcome: StopDecision,
    pub beams: DataBeamSelection,
}

/// Static description of one user in a trial.
#[derive(Clone, Debug)]
pub struct UserSetup {
    pub user_id: usize,
    pub channel: ChannelRealization,
    pub prior: GampPrior,
    /// `sigma_R` used by the binarization threshold `Gamma * sigma_R`.
    pub threshold_sigma: f64,
    pub ue_rng: RngStream,
    pub noise_rng: RngStream,
}

#[derive(Clone, Debug)]
pub struct ProbabilityState {
    pub bs_use_counts: Vec<u32>,
    pub pairs: PairCounts,
    pub pepa_active: bool,
}

/// One user's training progress.
#[derive(Clone, Debug)]
pub struct UserSession {
    user_id: usize,
    cfg: SwiftConfig,
    r_ue: usize,
    k_max: usize,
    prior: GampPrior,
    threshold_sigma: f64,
    gamp: GampConfig,
    pilot: PilotConfig,
    ue_rng: RngStream,
    noise_rng: RngStream,
    ledger: MeasurementLedger,
    prob: ProbabilityState,
    last_bits: Option<Vec<bool>>,
    v_hat_latest: Option<Vec<Complex64>>,
    estimates: usize,
    feedback: Option<FeedbackEvent>,
}

impl UserSession {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        user: &UserSetup,
        cfg: SwiftConfig,
        r_bs: usize,
        r_ue: usize,
        gamp: GampConfig,
        pilot: PilotConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let (n_ue, n_bs) = (user.channel.n_ue(), user.channel.n_bs());
        if r_ue == 0 || r_ue > n_ue || r_bs == 0 || r_bs > n_bs {
            return Err(Error::InvalidConfig(format!(
                "RF chains must satisfy 1 <= R <= N (R_BS={r_bs}, R_UE={r_ue})"
            )));
        }
        Ok(Self {
            user_id: user.user_id,
            cfg,
            r_ue,
            k_max: r_bs.min(r_ue),
            prior: user.prior,
            threshold_sigma: user.threshold_sigma,
            gamp,
            pilot,
            ue_rng: user.ue_rng.clone(),
            noise_rng: user.noise_rng.clone(),
            ledger: MeasurementLedger::new(n_bs, n_ue),
            prob: ProbabilityState {
                bs_use_counts: vec![0; n_bs],
                pairs: PairCounts::new(n_ue, n_bs),
                pepa_active: false,
            },
            last_bits: None,
            v_hat_latest: None,
            estimates: 0,
            feedback: None,
        })
    }

    pub fn is_done(&self) -> bool {
        self.feedback.is_some()
    }

    pub fn feedback(&self) -> Option<&FeedbackEvent> {
        self.feedback.as_ref()
    }

    pub fn ledger(&self) -> &MeasurementLedger {
        &self.ledger
    }

    pub fn probabilities(&self) -> &ProbabilityState {
        &self.prob
    }

    pub fn latest_estimate(&self) -> Option<&[Complex64]> {
        self.v_hat_latest.as_deref()
    }

    pub fn estimates_run(&self) -> usize {
        self.estimates
    }

    /// Weights for this slot's UE draw, given the BS beams about to be used.
    pub fn ue_weights(&mut self, bs_sel: &[usize], pilots: &[Complex64], n_ue: usize) -> Vec<f64> {
        match self.cfg.adaptation {
            Adaptation::Uniform => vec![1.0; n_ue],
            Adaptation::Fpa => fpa_ue_weights(&self.prob.pairs, bs_sel),
            Adaptation::Pepa => {
                if self.prob.pairs.full_span() {
                    if let Some(v) = &self.v_hat_latest {
                        if let Some(w) = pepa_ue_weights(v, n_ue, bs_sel, pilots, self.pilot.power) {
                            if w.iter().filter(|&&x| x > 0.0).count() >= self.r_ue {
                                self.prob.pepa_active = true;
                                return w;
                            }
                        }
                    }
                }
                fpa_ue_weights(&self.prob.pairs, bs_sel)
            }
        }
    }

    /// Advances one measurement slot with the BS beams `bs_sel`. Returns the
    /// feedback event on the slot where training stops.
    pub fn step(
        &mut self,
        bs_sel: &[usize],
        channel: &ChannelRealization,
        f_c: &Codebook,
        w_c: &Codebook,
    ) -> Result<Option<FeedbackEvent>> {
        if self.is_done() {
            return Ok(None);
        }
        let slot = self.ledger.len() + 1;
        let n_ue = w_c.n_antennas();
        let pilots = self.pilot.symbols(slot, bs_sel.len());

        let weights = self.ue_weights(bs_sel, &pilots, n_ue);
        let ue = select_with_forcing(&weights, self.r_ue, &mut self.ue_rng)?;
        let sel = BeamSelection {
            slot,
            bs: bs_sel.to_vec(),
            ue,
        };
        let y = simulate_measurement(&channel.h, f_c, w_c, &sel, &pilots, &self.pilot, &mut self.noise_rng)?;
        for &b in &sel.bs {
            self.prob.bs_use_counts[b] += 1;
            for &u in &sel.ue {
                self.prob.pairs.record(u, b);
            }
        }
        self.ledger.append(sel, pilots, y)?;

        if !slot.is_multiple_of(self.cfg.t_u) && slot < self.cfg.t_max {
            return Ok(None);
        }

        let est = gamp_estimate(
            self.ledger.stacked_y(),
            self.ledger.sensing(),
            &self.prior,
            self.pilot.amplitude(bs_sel.len()),
            &self.gamp,
        )?;
        self.estimates += 1;
        let bits = binarize(&est.v_hat, self.cfg.gamma, self.threshold_sigma);
        let decision = check_stopping(&bits, self.last_bits.as_deref(), slot, &self.cfg);
        self.last_bits = Some(bits);
        self.v_hat_latest = Some(est.v_hat);

        if decision == StopDecision::Continue {
            return Ok(None);
        }
        let v_hat = self.v_hat_latest.as_deref().expect("just set");
        let beams = select_data_beams(v_hat, n_ue, self.cfg.gamma, self.threshold_sigma, self.k_max);
        let event = FeedbackEvent {
            user_id: self.user_id,
            t_e: slot,
            outcome: decision,
            beams,
        };
        self.feedback = Some(event.clone());
        Ok(Some(event))
    }
}

/// Runs every user in lockstep against one shared BS beam sequence until all
/// have fed back. Returns the sessions in input order.
#[allow(clippy::too_many_arguments)]
pub fn run_swift(
    users: &[UserSetup],
    bs: &mut BsScheduler,
    cfg: SwiftConfig,
    r_bs: usize,
    r_ue: usize,
    gamp: GampConfig,
    pilot: PilotConfig,
    f_c: &Codebook,
    w_c: &Codebook,
) -> Result<Vec<UserSession>> {
    let mut sessions = users
        .iter()
        .map(|u| UserSession::new(u, cfg, r_bs, r_ue, gamp, pilot))
        .collect::<Result<Vec<_>>>()?;
    while sessions.iter().any(|s| !s.is_done()) {
        let bs_sel = bs.next_selection()?;
        for (s, u) in sessions.iter_mut().zip(users) {
            s.step(&bs_sel, &u.channel, f_c, w_c)?;
        }
    }
    Ok(sessions)
}
