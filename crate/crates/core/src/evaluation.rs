//! Data-beam selection, achievable and effective rates, multi-user
//! scheduling, and summary statistics.

use num_complex::Complex64;
use serde::Serialize;

use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::numerics::{log2_det_hpd, ComplexMatrix, RngStream};

/// Candidate beam pairs chosen for data transmission.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct DataBeamSelection {
    /// `(bs, ue)` pairs, strongest first.
    pub pairs: Vec<(usize, usize)>,
}

impl DataBeamSelection {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Greedy pick of up to `k_max` entries of the estimated virtual channel
/// with distinct BS and UE beams, among entries at or above `gamma * sigma_r`.
///
/// `v_hat` is column-major with `n_ue` rows.
pub fn select_data_beams(v_hat: &[Complex64], n_ue: usize, gamma: f64, sigma_r: f64, k_max: usize) -> DataBeamSelection {
    let threshold = gamma * sigma_r;
    let mut order: Vec<usize> = (0..v_hat.len()).filter(|&i| !(v_hat[i].norm() < threshold)).collect();
    // stable sort keeps ties in index order
    order.sort_by(|&a, &b| v_hat[b].norm_sqr().total_cmp(&v_hat[a].norm_sqr()));
    let mut used_bs = Vec::new();
    let mut used_ue = Vec::new();
    let mut pairs = Vec::new();
    for idx in order {
        if pairs.len() == k_max {
            break;
        }
        let (bs, ue) = (idx / n_ue, idx % n_ue);
        if used_bs.contains(&bs) || used_ue.contains(&ue) {
            continue;
        }
        used_bs.push(bs);
        used_ue.push(ue);
        pairs.push((bs, ue));
    }
    DataBeamSelection { pairs }
}

/// `log2 det(I + P / (N0 k) G G^H)` with `G = W_d^H H F_d`, in bit/s/Hz.
/// An empty selection carries nothing.
pub fn achievable_rate(
    h: &ComplexMatrix,
    sel: &DataBeamSelection,
    f_c: &Codebook,
    w_c: &Codebook,
    power: f64,
    noise: f64,
) -> Result<f64> {
    if sel.is_empty() {
        return Ok(0.0);
    }
    if !(noise > 0.0) {
        return Err(Error::InvalidConfig(format!("rate needs N0 > 0, got {noise}")));
    }
    let bs: Vec<usize> = sel.pairs.iter().map(|p| p.0).collect();
    let ue: Vec<usize> = sel.pairs.iter().map(|p| p.1).collect();
    let g = w_c.columns(&ue).adjoint().matmul(h)?.matmul(&f_c.columns(&bs))?;
    let k = sel.len();
    let snr = power / (noise * k as f64);
    let mut m = g.matmul(&g.adjoint())?.scale(Complex64::new(snr, 0.0));
    for i in 0..k {
        m[(i, i)] += 1.0;
    }
    log2_det_hpd(&m)
}

/// `R_opt * max(0, 1 - T_E / T_c)`.
pub fn effective_rate(r_opt: f64, t_e: f64, t_c: f64) -> f64 {
    r_opt * (1.0 - t_e / t_c).max(0.0)
}

/// Users served in one coherence interval and when data transmission starts.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Schedule {
    pub users: Vec<usize>,
    /// Slot at which the pilot phase ends.
    pub pilot_end: usize,
}

/// First `n_s` users to feed back, ties broken by user index. `t_e[u]` is
/// user `u`'s feedback slot.
pub fn schedule_first(t_e: &[usize], n_s: usize) -> Schedule {
    let mut order: Vec<usize> = (0..t_e.len()).collect();
    order.sort_by_key(|&u| (t_e[u], u));
    order.truncate(n_s);
    let pilot_end = order.iter().map(|&u| t_e[u]).max().unwrap_or(0);
    Schedule { users: order, pilot_end }
}

/// `n_s` of `n_users` chosen uniformly, for schemes whose training time is
/// the same for everyone.
pub fn schedule_random(n_users: usize, n_s: usize, t_e: usize, rng: &mut RngStream) -> Result<Schedule> {
    let k = n_s.min(n_users);
    let users = rng.weighted_sample_without_replacement(&vec![1.0; n_users], k)?;
    Ok(Schedule { users, pilot_end: t_e })
}

/// Mean per-user effective rate when the post-training time is split equally
/// among the scheduled users.
pub fn per_user_effective_rate(rates: &[f64], schedule: &Schedule, t_c: f64) -> f64 {
    let n = schedule.users.len();
    if n == 0 {
        return 0.0;
    }
    let frac = (1.0 - schedule.pilot_end as f64 / t_c).max(0.0) / n as f64;
    schedule.users.iter().map(|&u| rates[u] * frac).sum::<f64>() / n as f64
}

/// Right-continuous empirical CDF evaluated at `x`.
pub fn cdf_at(samples: &[f64], x: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    Ok(samples.iter().filter(|&&s| s <= x).count() as f64 / samples.len() as f64)
}

/// Step points `(x, F(x))` at each distinct sample value, ascending.
pub fn empirical_cdf(samples: &[f64]) -> Result<Vec<(f64, f64)>> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &x) in s.iter().enumerate() {
        match out.last_mut() {
            Some(last) if last.0 == x => last.1 = (i + 1) as f64 / n,
            _ => out.push((x, (i + 1) as f64 / n)),
        }
    }
    Ok(out)
}

/// Sample mean and standard error of the mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                stderr: f64::NAN,
                n,
            };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr, n }
    }
}
