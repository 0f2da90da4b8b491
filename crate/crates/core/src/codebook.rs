//! Quantized-phase ULA steering vectors and the orthogonal candidate beam
//! matrices built from them.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;

use crate::numerics::ComplexMatrix;

/// Response of an `n`-element half-wavelength ULA toward `epsilon` radians:
/// element `k` is `exp(j*pi*k*cos(epsilon)) / sqrt(n)`.
pub fn steering_vector(epsilon: f64, n: usize) -> Vec<Complex64> {
    let norm = 1.0 / (n as f64).sqrt();
    let c = epsilon.cos();
    (0..n)
        .map(|k| Complex64::from_polar(norm, PI * k as f64 * c))
        .collect()
}

/// Steering angle of candidate beam `n` (0-based), in `[0, pi]`.
pub fn candidate_angle(n: usize, n_antennas: usize) -> f64 {
    (-1.0 + 2.0 * n as f64 / n_antennas as f64).clamp(-1.0, 1.0).acos()
}

/// Unitary candidate beam matrix for one array. Column `n` is the steering
/// vector toward `candidate_angle(n)`.
#[derive(Clone, Debug)]
pub struct Codebook {
    n_antennas: usize,
    matrix: ComplexMatrix,
    steer_angles: Vec<f64>,
}

impl Codebook {
    pub fn new(n_antennas: usize) -> Self {
        assert!(n_antennas >= 1, "codebook needs at least one antenna");
        let steer_angles: Vec<f64> = (0..n_antennas).map(|n| candidate_angle(n, n_antennas)).collect();
        // Phases are generated from the exact integer exponent k*(2n - N)
        // rather than via acos/cos so that every entry sits exactly on the
        // quantized phase grid.
        let norm = 1.0 / (n_antennas as f64).sqrt();
        let two_n = 2 * n_antennas as i64;
        let matrix = ComplexMatrix::from_fn(n_antennas, n_antennas, |k, n| {
            let e = ((k as i64) * (2 * n as i64 - n_antennas as i64)).rem_euclid(two_n);
            Complex64::from_polar(norm, PI * e as f64 / n_antennas as f64)
        });
        Self {
            n_antennas,
            matrix,
            steer_angles,
        }
    }

    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn steer_angles(&self) -> &[f64] {
        &self.steer_angles
    }

    pub fn beam(&self, n: usize) -> &[Complex64] {
        self.matrix.col(n)
    }

    /// Matrix made of the selected candidate columns, in selection order.
    pub fn columns(&self, indices: &[usize]) -> ComplexMatrix {
        let rows: Vec<usize> = (0..self.n_antennas).collect();
        self.matrix.select(&rows, indices)
    }

    /// Dumps `column,antenna,re,im` rows for plotting beam patterns.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "column,antenna,re,im")?;
        for n in 0..self.n_antennas {
            for (k, z) in self.beam(n).iter().enumerate() {
                writeln!(out, "{},{},{:.17e},{:.17e}", n, k, z.re, z.im)?;
            }
        }
        Ok(())
    }
}
