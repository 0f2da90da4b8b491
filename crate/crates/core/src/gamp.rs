//! Bernoulli-Gaussian generalized approximate message passing.
//!
//! Model: `y = c * A v + n`, `n ~ CN(0, N0 I)`, and every `v_j` independently
//! zero with probability `1 - rho` or `CN(0, sigma_R)` otherwise.
//!
//! Complex Gaussian densities use `CN(x; 0, c) = exp(-|x|^2 / c) / (pi c)`.
//! The support posterior `pi` only ever sees a ratio of two such densities,
//! which is evaluated in the log domain so large `|r|^2 / var` cannot overflow.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::SensingMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GampPrior {
    /// Probability a coefficient is active.
    pub rho: f64,
    /// Variance of an active coefficient.
    pub sigma_r: f64,
    /// Measurement noise variance.
    pub noise: f64,
}

impl GampPrior {
    pub fn new(rho: f64, sigma_r: f64, noise: f64) -> Result<Self> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::InvalidConfig(format!("sparsity rho must lie in (0, 1], got {rho}")));
        }
        if !(sigma_r > 0.0) {
            return Err(Error::NonPositiveVariance(sigma_r));
        }
        if !(noise >= 0.0) {
            return Err(Error::NegativeVariance(noise));
        }
        Ok(Self { rho, sigma_r, noise })
    }

    /// Marginal prior variance `rho * sigma_R`.
    pub fn variance(&self) -> f64 {
        self.rho * self.sigma_r
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GampConfig {
    pub max_iterations: usize,
    /// Relative l2 change that counts as converged.
    pub tolerance: f64,
    /// Weight of the new iterate in the `v` and `s` updates and their
    /// variances; 1 disables damping.
    pub damping: f64,
    /// Starting variance of every coefficient.
    pub initial_variance: f64,
}

impl Default for GampConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            tolerance: 1e-6,
            damping: 0.7,
            initial_variance: 1.0,
        }
    }
}

impl GampConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::InvalidConfig("gamp.max_iterations must be >= 1".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::InvalidConfig("gamp.tolerance must be >= 0".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidConfig("gamp.damping must lie in (0, 1]".into()));
        }
        if !(self.initial_variance > 0.0) {
            return Err(Error::InvalidConfig("gamp.initial_variance must be > 0".into()));
        }
        Ok(())
    }
}

/// Output-side scalar estimator for the AWGN channel.
///
/// Returns `(g_out, -g_out')` = `((y - p) / (p_var + N0), 1 / (p_var + N0))`.
pub fn g_out(y: Complex64, p_hat: Complex64, p_var: f64, noise: f64) -> Result<(Complex64, f64)> {
    let denom = p_var + noise;
    if !(denom > 0.0) {
        return Err(Error::DegenerateOutputChannel);
    }
    Ok(((y - p_hat) / denom, 1.0 / denom))
}

/// Posterior support probability `pi(r, r_var)`.
pub fn support_probability(r_hat: Complex64, r_var: f64, prior: &GampPrior) -> f64 {
    if prior.rho >= 1.0 {
        return 1.0;
    }
    let s = prior.sigma_r;
    // log[(1-rho)/rho * CN(r;0,rv) / CN(r;0,rv+s)]
    let t = ((1.0 - prior.rho) / prior.rho).ln() + (s / r_var).ln_1p() - r_hat.norm_sqr() * s / (r_var * (r_var + s));
    if t > 0.0 {
        let e = (-t).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + t.exp())
    }
}

/// Input-side scalar estimator for the Bernoulli-Gaussian prior.
///
/// Returns the posterior mean `pi * gamma` and the posterior variance
/// `pi (nu + |gamma|^2) - pi^2 |gamma|^2` (which equals `-r_var * g_in'`).
pub fn g_in(r_hat: Complex64, r_var: f64, prior: &GampPrior) -> Result<(Complex64, f64)> {
    if !(r_var > 0.0) {
        return Err(Error::NonPositiveVariance(r_var));
    }
    if r_var.is_infinite() {
        return Ok((Complex64::new(0.0, 0.0), prior.variance()));
    }
    let pi = support_probability(r_hat, r_var, prior);
    let s = prior.sigma_r;
    let gamma = r_hat * (s / (s + r_var));
    let nu = r_var * s / (r_var + s);
    let g2 = gamma.norm_sqr();
    let var = (pi * (nu + g2) - pi * pi * g2).max(0.0);
    Ok((gamma * pi, var))
}

#[derive(Clone, Debug)]
pub struct GampOutput {
    pub v_hat: Vec<Complex64>,
    pub v_var: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// One line of the optional diagnostics stream.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GampTrace {
    pub iteration: usize,
    /// `||v_{k+1} - v_k|| / ||v_k||`.
    pub relative_change: f64,
    /// `||y - c A v_{k+1}||`.
    pub residual: f64,
    /// Coefficients whose support posterior exceeds 1/2.
    pub active: usize,
}

pub fn gamp_estimate(
    y: &[Complex64],
    a: &SensingMatrix,
    prior: &GampPrior,
    scale: f64,
    cfg: &GampConfig,
) -> Result<GampOutput> {
    run(y, a, prior, scale, cfg, None)
}

/// Same as [`gamp_estimate`], reporting every iteration to `trace`.
pub fn gamp_estimate_traced(
    y: &[Complex64],
    a: &SensingMatrix,
    prior: &GampPrior,
    scale: f64,
    cfg: &GampConfig,
    mut trace: impl FnMut(GampTrace),
) -> Result<GampOutput> {
    run(y, a, prior, scale, cfg, Some(&mut trace))
}

fn run(
    y: &[Complex64],
    a: &SensingMatrix,
    prior: &GampPrior,
    scale: f64,
    cfg: &GampConfig,
    mut trace: Option<&mut dyn FnMut(GampTrace)>,
) -> Result<GampOutput> {
    cfg.validate()?;
    if y.len() != a.n_rows() {
        return Err(Error::dims("gamp_estimate", a.n_rows(), y.len()));
    }
    let n = a.n_cols();
    let zero = Complex64::new(0.0, 0.0);
    let a = a.scaled(scale);

    let measured: Vec<bool> = a.apply_sq_transpose(&vec![1.0; y.len()]).iter().map(|&e| e > 0.0).collect();
    let var_floor = prior.sigma_r * 1e-14;
    let d = cfg.damping;

    // v and v_var are the input estimator's latest output; v_bar is the
    // damped mean the input linear step builds on.
    let mut v = vec![zero; n];
    let mut v_var: Vec<f64> = measured
        .iter()
        .map(|&m| if m { cfg.initial_variance } else { prior.variance() })
        .collect();
    let mut v_bar = v.clone();
    let mut s = vec![zero; y.len()];
    let mut s_var: Option<Vec<f64>> = None;
    let mut converged = false;
    let mut iterations = 0;

    for k in 1..=cfg.max_iterations {
        iterations = k;

        // output linear step
        let z = a.apply(&v);
        let z_var = a.apply_sq(&v_var);

        // output non-linear step, Onsager-corrected
        let mut s_var_next = vec![0.0; y.len()];
        for i in 0..y.len() {
            let p = z[i] - s[i] * z_var[i];
            let (g, neg_dg) = g_out(y[i], p, z_var[i], prior.noise)?;
            s[i] = g * d + s[i] * (1.0 - d);
            s_var_next[i] = match &s_var {
                Some(prev) => neg_dg * d + prev[i] * (1.0 - d),
                None => neg_dg,
            };
        }
        let s_var_now = s_var.insert(s_var_next);
        if k == 1 {
            v_bar.clone_from(&v);
        } else {
            for (b, x) in v_bar.iter_mut().zip(&v) {
                *b = x * d + *b * (1.0 - d);
            }
        }

        // input linear step
        let inv_r_var = a.apply_sq_transpose(s_var_now);
        let back = a.apply_adjoint(&s);

        // input non-linear step
        let mut v_next = vec![zero; n];
        let mut active = 0;
        for j in 0..n {
            if !measured[j] {
                v_var[j] = prior.variance();
                continue;
            }
            let r_var = 1.0 / inv_r_var[j];
            let r = v_bar[j] + back[j] * r_var;
            let (mean, var) = g_in(r, r_var, prior)?;
            if trace.is_some() && support_probability(r, r_var, prior) > 0.5 {
                active += 1;
            }
            debug_assert!(var >= 0.0);
            v_next[j] = mean;
            v_var[j] = var.max(var_floor);
        }

        if v_next.iter().any(|x| !(x.re.is_finite() && x.im.is_finite())) || v_var.iter().any(|x| !x.is_finite()) {
            return Err(Error::GampDiverged { iteration: k });
        }

        let change = l2_dist(&v_next, &v);
        let norm = l2(&v);
        v = v_next;
        if let Some(t) = trace.as_mut() {
            t(GampTrace {
                iteration: k,
                relative_change: change / (norm + 1e-30),
                residual: l2_dist(y, &a.apply(&v)),
                active,
            });
        }
        if change <= cfg.tolerance * (norm + 1e-30) {
            converged = true;
            break;
        }
    }

    Ok(GampOutput {
        v_hat: v,
        v_var,
        iterations,
        converged,
    })
}

fn l2(x: &[Complex64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn l2_dist(x: &[Complex64], y: &[Complex64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
}
