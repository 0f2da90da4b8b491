//! Independent oracles shared by the integration tests. Nothing here calls
//! into the estimator under test.
#![allow(dead_code)]

use swift_core::numerics::{Complex64, ComplexMatrix, RngStream};

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn zero() -> Complex64 {
    c(0.0, 0.0)
}

/// Solves `m x = b` by Gaussian elimination with partial pivoting and returns
/// `(x, ln |det m|)`.
pub fn solve(m: &ComplexMatrix, b: &[Complex64]) -> (Vec<Complex64>, f64) {
    let n = m.rows();
    assert_eq!(m.cols(), n);
    let mut a: Vec<Vec<Complex64>> = (0..n).map(|r| (0..n).map(|cc| m[(r, cc)]).collect()).collect();
    let mut x = b.to_vec();
    let mut log_det = 0.0;
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm())).unwrap();
        a.swap(col, piv);
        x.swap(col, piv);
        let p = a[col][col];
        assert!(p.norm() > 0.0, "singular system");
        log_det += p.norm().ln();
        for r in col + 1..n {
            let f = a[r][col] / p;
            let (top, bottom) = a.split_at_mut(r);
            for (dst, src) in bottom[0][col..].iter_mut().zip(&top[col][col..]) {
                *dst -= f * src;
            }
            let t = x[col];
            x[r] -= f * t;
        }
    }
    for r in (0..n).rev() {
        let mut s = x[r];
        for k in r + 1..n {
            s -= a[r][k] * x[k];
        }
        x[r] = s / a[r][r];
    }
    (x, log_det)
}

/// Exact posterior mean of `v` under `y = A v + CN(0, noise I)` with i.i.d.
/// Bernoulli-Gaussian `v`, by enumerating every support pattern.
pub fn brute_force_mmse(a: &ComplexMatrix, y: &[Complex64], rho: f64, sigma: f64, noise: f64) -> Vec<Complex64> {
    let (m, n) = a.shape();
    assert!(n <= 16, "enumeration is exponential");
    let mut log_w = Vec::new();
    let mut means = Vec::new();
    for mask in 0u32..(1 << n) {
        let support: Vec<usize> = (0..n).filter(|&j| mask >> j & 1 == 1).collect();
        // C = sigma A_S A_S^H + noise I
        let cov = ComplexMatrix::from_fn(m, m, |r, k| {
            let s: Complex64 = support.iter().map(|&j| a[(r, j)] * a[(k, j)].conj()).sum();
            s * sigma + if r == k { c(noise, 0.0) } else { zero() }
        });
        let (cy, log_det) = solve(&cov, y);
        let quad: f64 = y.iter().zip(&cy).map(|(yi, ci)| (yi.conj() * ci).re).sum();
        let k = support.len() as f64;
        log_w.push(k * rho.ln() + (n as f64 - k) * (1.0 - rho).ln() - log_det - quad);
        let mut mean = vec![zero(); n];
        for &j in &support {
            mean[j] = (0..m).map(|r| a[(r, j)].conj() * cy[r]).sum::<Complex64>() * sigma;
        }
        means.push(mean);
    }
    let top = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut out = vec![zero(); n];
    for (wi, mean) in w.iter().zip(&means) {
        for (o, mj) in out.iter_mut().zip(mean) {
            *o += mj * (wi / total);
        }
    }
    out
}

/// `sigma A^H (sigma A A^H + noise I)^-1 y`.
pub fn lmmse(a: &ComplexMatrix, y: &[Complex64], sigma: f64, noise: f64) -> Vec<Complex64> {
    let (m, n) = a.shape();
    let cov = ComplexMatrix::from_fn(m, m, |r, k| {
        let s: Complex64 = (0..n).map(|j| a[(r, j)] * a[(k, j)].conj()).sum();
        s * sigma + if r == k { c(noise, 0.0) } else { zero() }
    });
    let (cy, _) = solve(&cov, y);
    (0..n).map(|j| (0..m).map(|r| a[(r, j)].conj() * cy[r]).sum::<Complex64>() * sigma).collect()
}

/// Posterior mean and variance of `v ~ BG(rho, sigma)` seen through
/// `r = v + CN(0, r_var)`, by midpoint quadrature over the complex plane.
pub fn quadrature_posterior(r: Complex64, r_var: f64, rho: f64, sigma: f64) -> (Complex64, f64) {
    let like = |v: Complex64| (-(r - v).norm_sqr() / r_var).exp() / (std::f64::consts::PI * r_var);
    let slab = |v: Complex64| (-v.norm_sqr() / sigma).exp() / (std::f64::consts::PI * sigma);
    // the continuous part lives within a few posterior widths of the shrunk r
    let centre = r * (sigma / (sigma + r_var));
    let width = 10.0 * (sigma * r_var / (sigma + r_var)).sqrt();
    let steps = 800;
    let h = 2.0 * width / steps as f64;
    let (mut z, mut m1, mut m2) = (0.0, zero(), 0.0);
    for i in 0..steps {
        for k in 0..steps {
            let v = centre + c(-width + (i as f64 + 0.5) * h, -width + (k as f64 + 0.5) * h);
            let w = rho * slab(v) * like(v) * h * h;
            z += w;
            m1 += v * w;
            m2 += v.norm_sqr() * w;
        }
    }
    // point mass at zero
    z += (1.0 - rho) * like(zero());
    let mean = m1 / z;
    (mean, m2 / z - mean.norm_sqr())
}

/// i.i.d. `CN(0, var)` matrix.
pub fn gaussian_matrix(rows: usize, cols: usize, var: f64, rng: &mut RngStream) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| rng.complex_gaussian(zero(), var).unwrap())
}

pub fn rel_l2(x: &[Complex64], reference: &[Complex64]) -> f64 {
    let num: f64 = x.iter().zip(reference).map(|(a, b)| (a - b).norm_sqr()).sum();
    let den: f64 = reference.iter().map(|z| z.norm_sqr()).sum();
    (num / den.max(1e-300)).sqrt()
}
