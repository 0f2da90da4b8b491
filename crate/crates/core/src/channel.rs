//! Sparse geometric channels, their virtual (beamspace) representation, and
//! the single-cell user geometry.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::codebook::{candidate_angle, steering_vector, Codebook};
use crate::error::{Error, Result};
use crate::numerics::{ComplexMatrix, RngStream};

/// Propagation paths of one link.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    /// Angles of departure at the BS, radians.
    pub aod: Vec<f64>,
    /// Angles of arrival at the UE, radians.
    pub aoa: Vec<f64>,
    pub gains: Vec<Complex64>,
}

impl PathSet {
    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }
}

/// Draws a Poisson number of paths with `CN(0, sigma_r)` gains.
///
/// Off-grid angles are uniform on `[0, 2pi)`. On-grid angles are drawn
/// uniformly from the candidate steering directions, so paths may collide on
/// the same grid pair; colliding gains simply add up in the channel matrix.
pub fn draw_paths(
    expected_paths: f64,
    sigma_r: f64,
    on_grid: bool,
    n_bs: usize,
    n_ue: usize,
    rng: &mut RngStream,
) -> Result<PathSet> {
    let l = rng.poisson(expected_paths)? as usize;
    let mut paths = PathSet {
        aod: Vec::with_capacity(l),
        aoa: Vec::with_capacity(l),
        gains: Vec::with_capacity(l),
    };
    for _ in 0..l {
        let (aod, aoa) = if on_grid {
            let i = rng.index_below(n_bs);
            let j = rng.index_below(n_ue);
            (candidate_angle(i, n_bs), candidate_angle(j, n_ue))
        } else {
            (rng.uniform_range(0.0, 2.0 * PI), rng.uniform_range(0.0, 2.0 * PI))
        };
        paths.aod.push(aod);
        paths.aoa.push(aoa);
        paths.gains.push(rng.complex_gaussian(Complex64::new(0.0, 0.0), sigma_r)?);
    }
    Ok(paths)
}

/// `H = sqrt(N_BS N_UE) * sum_l alpha_l a_UE(theta_l) a_BS(phi_l)^H`, shape `N_UE x N_BS`.
pub fn assemble_channel(paths: &PathSet, n_bs: usize, n_ue: usize) -> ComplexMatrix {
    let mut h = ComplexMatrix::zeros(n_ue, n_bs);
    let scale = ((n_bs * n_ue) as f64).sqrt();
    for ((&aod, &aoa), &gain) in paths.aod.iter().zip(&paths.aoa).zip(&paths.gains) {
        let a_bs = steering_vector(aod, n_bs);
        let a_ue = steering_vector(aoa, n_ue);
        let g = gain * scale;
        for (c, b) in a_bs.iter().enumerate() {
            let gb = g * b.conj();
            for (r, u) in a_ue.iter().enumerate() {
                h[(r, c)] += u * gb;
            }
        }
    }
    h
}

/// `H_v = W_c^H H F_c`.
pub fn virtual_channel(h: &ComplexMatrix, f_c: &Codebook, w_c: &Codebook) -> Result<ComplexMatrix> {
    if h.rows() != w_c.n_antennas() || h.cols() != f_c.n_antennas() {
        return Err(Error::dims(
            "virtual_channel",
            format!("{}x{}", w_c.n_antennas(), f_c.n_antennas()),
            format!("{}x{}", h.rows(), h.cols()),
        ));
    }
    w_c.matrix().adjoint().matmul(h)?.matmul(f_c.matrix())
}

/// One channel draw with its dense and beamspace forms.
#[derive(Clone, Debug)]
pub struct ChannelRealization {
    pub paths: PathSet,
    pub h: ComplexMatrix,
    pub h_v: ComplexMatrix,
}

impl ChannelRealization {
    pub fn from_paths(paths: PathSet, f_c: &Codebook, w_c: &Codebook) -> Self {
        let h = assemble_channel(&paths, f_c.n_antennas(), w_c.n_antennas());
        let h_v = virtual_channel(&h, f_c, w_c).expect("shapes follow from the codebooks");
        Self { paths, h, h_v }
    }

    pub fn n_bs(&self) -> usize {
        self.h.cols()
    }

    pub fn n_ue(&self) -> usize {
        self.h.rows()
    }
}

/// Regression-fixture record: the seed that produced a realization plus its
/// path list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelRecord {
    pub seed: u64,
    pub stream_id: u64,
    pub n_bs: usize,
    pub n_ue: usize,
    pub paths: PathSet,
}

impl ChannelRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("record is always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            path: "<channel record>".into(),
            message: e.to_string(),
        })
    }

    pub fn realize(&self) -> ChannelRealization {
        ChannelRealization::from_paths(self.paths.clone(), &Codebook::new(self.n_bs), &Codebook::new(self.n_ue))
    }
}

/// A user dropped in the cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellUser {
    pub user_id: usize,
    pub distance: f64,
    /// Path-gain variance, `distance^-beta`.
    pub sigma_r: f64,
}

pub fn path_gain_variance(distance: f64, beta: f64) -> f64 {
    distance.powf(-beta)
}

/// Drops a user uniformly on `[d_min, radius]` meters.
pub fn draw_cell_user(user_id: usize, radius: f64, beta: f64, d_min: f64, rng: &mut RngStream) -> Result<CellUser> {
    if !(0.0 < d_min && d_min < radius) {
        return Err(Error::InvalidConfig(format!(
            "cell needs 0 < d_min < R, got d_min={d_min}, R={radius}"
        )));
    }
    let distance = rng.uniform_range(d_min, radius);
    Ok(CellUser {
        user_id,
        distance,
        sigma_r: path_gain_variance(distance, beta),
    })
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// `P * sigma_R / N0` in dB.
pub fn received_snr_db(p_dbm: f64, n0_dbm: f64, sigma_r: f64) -> f64 {
    linear_to_db(dbm_to_watts(p_dbm) * sigma_r / dbm_to_watts(n0_dbm))
}
