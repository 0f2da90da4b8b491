//! Fixed-length training schemes used for comparison: exhaustive sweep and
//! fixed-number random beams.

use num_complex::Complex64;

use crate::channel::ChannelRealization;
use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::gamp::{gamp_estimate, GampConfig, GampPrior};
use crate::measurement::{select_beams, simulate_measurement, BeamSelection, MeasurementLedger, PilotConfig};
use crate::numerics::RngStream;

/// Estimate after a fixed training phase.
#[derive(Clone, Debug)]
pub struct BaselineOutcome {
    pub v_hat: Vec<Complex64>,
    pub t_e: usize,
}

/// Slots an exhaustive sweep takes: every BS beam against every group of
/// `r_ue` UE beams.
pub fn exhaustive_slots(n_bs: usize, n_ue: usize, r_ue: usize) -> usize {
    n_bs * n_ue.div_ceil(r_ue)
}

/// The exhaustive sweep's beam schedule. One BS beam per slot, so each slot
/// transmits at full power.
pub fn exhaustive_schedule(n_bs: usize, n_ue: usize, r_ue: usize) -> Vec<BeamSelection> {
    let mut out = Vec::with_capacity(exhaustive_slots(n_bs, n_ue, r_ue));
    for b in 0..n_bs {
        for start in (0..n_ue).step_by(r_ue) {
            out.push(BeamSelection {
                slot: out.len() + 1,
                bs: vec![b],
                ue: (start..(start + r_ue).min(n_ue)).collect(),
            });
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn measure_and_estimate(
    schedule: Vec<BeamSelection>,
    channel: &ChannelRealization,
    f_c: &Codebook,
    w_c: &Codebook,
    pilot: &PilotConfig,
    prior: &GampPrior,
    gamp: &GampConfig,
    noise_rng: &mut RngStream,
) -> Result<BaselineOutcome> {
    let r_bs = schedule.first().map(|s| s.bs.len()).ok_or_else(|| {
        Error::InvalidConfig("training needs at least one slot".into())
    })?;
    let mut ledger = MeasurementLedger::new(f_c.n_antennas(), w_c.n_antennas());
    for sel in schedule {
        let pilots = pilot.symbols(sel.slot, sel.bs.len());
        let y = simulate_measurement(&channel.h, f_c, w_c, &sel, &pilots, pilot, noise_rng)?;
        ledger.append(sel, pilots, y)?;
    }
    let est = gamp_estimate(ledger.stacked_y(), ledger.sensing(), prior, pilot.amplitude(r_bs), gamp)?;
    Ok(BaselineOutcome {
        v_hat: est.v_hat,
        t_e: ledger.len(),
    })
}

#[allow(clippy::too_many_arguments)]
pub fn run_exhaustive(
    channel: &ChannelRealization,
    f_c: &Codebook,
    w_c: &Codebook,
    r_ue: usize,
    pilot: &PilotConfig,
    prior: &GampPrior,
    gamp: &GampConfig,
    noise_rng: &mut RngStream,
) -> Result<BaselineOutcome> {
    let schedule = exhaustive_schedule(f_c.n_antennas(), w_c.n_antennas(), r_ue);
    measure_and_estimate(schedule, channel, f_c, w_c, pilot, prior, gamp, noise_rng)
}

/// `slots` uniformly random beam draws followed by one estimate.
#[allow(clippy::too_many_arguments)]
pub fn run_fnrb(
    slots: usize,
    channel: &ChannelRealization,
    f_c: &Codebook,
    w_c: &Codebook,
    r_bs: usize,
    r_ue: usize,
    pilot: &PilotConfig,
    prior: &GampPrior,
    gamp: &GampConfig,
    bs_rng: &mut RngStream,
    ue_rng: &mut RngStream,
    noise_rng: &mut RngStream,
) -> Result<BaselineOutcome> {
    let bs_w = vec![1.0; f_c.n_antennas()];
    let ue_w = vec![1.0; w_c.n_antennas()];
    let schedule = (1..=slots)
        .map(|slot| {
            Ok(BeamSelection {
                slot,
                bs: select_beams(&bs_w, r_bs, bs_rng)?,
                ue: select_beams(&ue_w, r_ue, ue_rng)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    measure_and_estimate(schedule, channel, f_c, w_c, pilot, prior, gamp, noise_rng)
}
