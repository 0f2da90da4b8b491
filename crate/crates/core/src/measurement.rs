//! Pilot measurement slots, their compressed-sensing rows, and the per-user
//! ledger that stacks them.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::numerics::{kron, mix64, ComplexMatrix, RngStream};

/// Beams used in one slot (0-based candidate indices).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeamSelection {
    pub slot: usize,
    pub bs: Vec<usize>,
    pub ue: Vec<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotRule {
    /// Every RF chain sends symbol 1.
    #[default]
    AllOnes,
    /// Unit-modulus QPSK symbols, a fixed hash of (slot, chain). Known to
    /// every user without extra signalling, and they make the sensing matrix
    /// zero-mean.
    Qpsk,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PilotConfig {
    /// Total BS transmit power.
    pub power: f64,
    /// Noise variance per receive chain.
    pub noise: f64,
    #[serde(default)]
    pub rule: PilotRule,
}

impl PilotConfig {
    pub fn new(power: f64, noise: f64) -> Result<Self> {
        if !(power > 0.0) || !(noise >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "pilot power must be > 0 and noise >= 0 (P={power}, N0={noise})"
            )));
        }
        Ok(Self {
            power,
            noise,
            rule: PilotRule::AllOnes,
        })
    }

    pub fn with_rule(self, rule: PilotRule) -> Self {
        Self { rule, ..self }
    }

    /// Pilot symbols of the `r_bs` chains in `slot` (1-based).
    pub fn symbols(&self, slot: usize, r_bs: usize) -> Vec<Complex64> {
        match self.rule {
            PilotRule::AllOnes => vec![Complex64::new(1.0, 0.0); r_bs],
            PilotRule::Qpsk => (0..r_bs)
                .map(|k| {
                    const QPSK: [Complex64; 4] = [
                        Complex64::new(1.0, 0.0),
                        Complex64::new(0.0, 1.0),
                        Complex64::new(-1.0, 0.0),
                        Complex64::new(0.0, -1.0),
                    ];
                    QPSK[(mix64(((slot as u64) << 20) ^ k as u64) & 3) as usize]
                })
                .collect(),
        }
    }

    /// `sqrt(P / R_BS)`.
    pub fn amplitude(&self, r_bs: usize) -> f64 {
        (self.power / r_bs as f64).sqrt()
    }
}

/// Draws `k` distinct candidate beams from `weights`.
pub fn select_beams(weights: &[f64], k: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
    rng.weighted_sample_without_replacement(weights, k)
}

/// Direct transceiver model: `y = sqrt(P/R_BS) W_m^H H F_m s + n`, with
/// `n ~ CN(0, N0 I)`.
pub fn simulate_measurement(
    h: &ComplexMatrix,
    f_c: &Codebook,
    w_c: &Codebook,
    sel: &BeamSelection,
    pilots: &[Complex64],
    cfg: &PilotConfig,
    rng: &mut RngStream,
) -> Result<Vec<Complex64>> {
    if pilots.len() != sel.bs.len() {
        return Err(Error::dims("simulate_measurement", sel.bs.len(), pilots.len()));
    }
    // x = F_m s
    let mut x = vec![Complex64::new(0.0, 0.0); f_c.n_antennas()];
    for (&b, &s) in sel.bs.iter().zip(pilots) {
        for (xi, f) in x.iter_mut().zip(f_c.beam(b)) {
            *xi += f * s;
        }
    }
    let r = h.mul_vec(&x)?;
    let amp = cfg.amplitude(sel.bs.len());
    let mut y = Vec::with_capacity(sel.ue.len());
    for &u in &sel.ue {
        let w = w_c.beam(u);
        let clean: Complex64 = w.iter().zip(&r).map(|(wi, ri)| wi.conj() * ri).sum();
        y.push(clean * amp + rng.complex_gaussian(Complex64::new(0.0, 0.0), cfg.noise)?);
    }
    Ok(y)
}

/// `A_m = (s^T F_m^T F_c^*) ⊗ (W_m^H W_c)`, built literally from the codebooks.
pub fn sensing_block(sel: &BeamSelection, pilots: &[Complex64], f_c: &Codebook, w_c: &Codebook) -> ComplexMatrix {
    let f_m = f_c.columns(&sel.bs);
    let w_m = w_c.columns(&sel.ue);
    let s = ComplexMatrix::from_fn(1, pilots.len(), |_, c| pilots[c]);
    let left = s
        .matmul(&f_m.transpose())
        .and_then(|m| m.matmul(&f_c.matrix().conj()))
        .expect("pilot/beam shapes agree");
    let right = w_m.adjoint().matmul(w_c.matrix()).expect("beam shapes agree");
    kron(&left, &right)
}

/// Row-compressed sensing matrix. Codebook orthogonality makes every slot's
/// rows exact selections, so rows are stored structurally: UE chain `j`
/// touches column `bs_i * N_UE + ue_j` with weight `s_i` for every selected
/// BS beam `bs_i`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SensingMatrix {
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<Complex64>,
}

impl SensingMatrix {
    pub fn new(n_cols: usize) -> Self {
        Self {
            n_cols,
            row_ptr: vec![0],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Drops exact zeros of a dense matrix.
    pub fn from_dense(a: &ComplexMatrix) -> Self {
        let mut out = Self::new(a.cols());
        for r in 0..a.rows() {
            let row: Vec<(usize, Complex64)> = (0..a.cols())
                .map(|c| (c, a[(r, c)]))
                .filter(|(_, v)| v.re != 0.0 || v.im != 0.0)
                .collect();
            out.push_row(row);
        }
        out
    }

    pub fn push_row(&mut self, entries: impl IntoIterator<Item = (usize, Complex64)>) {
        for (c, v) in entries {
            debug_assert!(c < self.n_cols);
            self.col_idx.push(c);
            self.values.push(v);
        }
        self.row_ptr.push(self.col_idx.len());
    }

    /// Appends the structural rows of one slot.
    pub fn push_slot(&mut self, sel: &BeamSelection, pilots: &[Complex64], n_ue: usize) {
        for &u in &sel.ue {
            self.push_row(sel.bs.iter().zip(pilots).map(|(&b, &s)| (b * n_ue + u, s)));
        }
    }

    pub fn n_rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn to_dense(&self) -> ComplexMatrix {
        let mut m = ComplexMatrix::zeros(self.n_rows(), self.n_cols);
        for r in 0..self.n_rows() {
            for (c, v) in self.row(r) {
                m[(r, c)] += v;
            }
        }
        m
    }

    /// `A x`.
    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.n_rows()).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    /// `|A|^2 x` for a real vector.
    pub fn apply_sq(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_rows())
            .map(|r| self.row(r).map(|(c, v)| v.norm_sqr() * x[c]).sum())
            .collect()
    }

    /// `A^H y`.
    pub fn apply_adjoint(&self, y: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.n_cols];
        for (r, yr) in y.iter().enumerate() {
            for (c, v) in self.row(r) {
                out[c] += v.conj() * yr;
            }
        }
        out
    }

    /// `(|A|^2)^T y` for a real vector.
    pub fn apply_sq_transpose(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cols];
        for (r, yr) in y.iter().enumerate() {
            for (c, v) in self.row(r) {
                out[c] += v.norm_sqr() * yr;
            }
        }
        out
    }

    /// Multiplies every entry by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            n_cols: self.n_cols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: self.values.iter().map(|v| v * k).collect(),
        }
    }

    /// Permutes columns: new column `perm[c]` holds old column `c`.
    pub fn permute_columns(&self, perm: &[usize]) -> Self {
        Self {
            n_cols: self.n_cols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.iter().map(|&c| perm[c]).collect(),
            values: self.values.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub selection: BeamSelection,
    pub pilots: Vec<Complex64>,
    pub received: Vec<Complex64>,
}

/// Everything one user has measured so far.
#[derive(Clone, Debug)]
pub struct MeasurementLedger {
    n_bs: usize,
    n_ue: usize,
    slots: Vec<SlotRecord>,
    stacked_y: Vec<Complex64>,
    sensing: SensingMatrix,
}

impl MeasurementLedger {
    pub fn new(n_bs: usize, n_ue: usize) -> Self {
        Self {
            n_bs,
            n_ue,
            slots: Vec::new(),
            stacked_y: Vec::new(),
            sensing: SensingMatrix::new(n_bs * n_ue),
        }
    }

    pub fn append(&mut self, sel: BeamSelection, pilots: Vec<Complex64>, received: Vec<Complex64>) -> Result<()> {
        if received.len() != sel.ue.len() || pilots.len() != sel.bs.len() {
            return Err(Error::dims(
                "append_measurement",
                format!("{} received / {} pilots", sel.ue.len(), sel.bs.len()),
                format!("{} / {}", received.len(), pilots.len()),
            ));
        }
        if sel.bs.iter().any(|&b| b >= self.n_bs) || sel.ue.iter().any(|&u| u >= self.n_ue) {
            return Err(Error::dims("append_measurement", "beam indices in range", format!("{sel:?}")));
        }
        self.sensing.push_slot(&sel, &pilots, self.n_ue);
        self.stacked_y.extend_from_slice(&received);
        self.slots.push(SlotRecord {
            selection: sel,
            pilots,
            received,
        });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slots(&self) -> &[SlotRecord] {
        &self.slots
    }

    pub fn stacked_y(&self) -> &[Complex64] {
        &self.stacked_y
    }

    pub fn sensing(&self) -> &SensingMatrix {
        &self.sensing
    }

    pub fn stacked_a(&self) -> ComplexMatrix {
        self.sensing.to_dense()
    }

    /// JSON lines, one slot per line, for fixtures.
    pub fn dump(&self) -> String {
        self.slots
            .iter()
            .map(|s| serde_json::to_string(s).expect("slot record is serializable"))
            .collect::<Vec<_>>()
            .join("\n")
    }
}
