//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion with
//! the numbers behind it, and exits nonzero if any criterion fails.

mod common;

use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use common::*;
use swift_core::baselines::run_exhaustive;
use swift_core::channel::{draw_paths, received_snr_db, ChannelRealization, PathSet};
use swift_core::codebook::Codebook;
use swift_core::evaluation::Summary;
use swift_core::gamp::{gamp_estimate, GampConfig, GampPrior};
use swift_core::harness::{
    effective_rate_metric, run_experiment, write_results, ExperimentConfig, Mode, ResultTable, Scheme, SingleUserConfig,
};
use swift_core::measurement::{simulate_measurement, BeamSelection, PilotConfig, PilotRule, SensingMatrix};
use swift_core::numerics::{Complex64, ComplexMatrix, RngStream};
use swift_core::session::Adaptation;

const FPA: &str = "SWIFT-FPA";
const PEPA: &str = "SWIFT-PEPA";
const SNRS: [f64; 6] = [-20.0, -12.0, -4.0, 4.0, 12.0, 20.0];
const USERS: [usize; 5] = [10, 13, 17, 21, 25];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

/// Difference of the means `a - b` and its standard error from the two
/// per-point standard errors, as they would appear as error bars.
fn compare(a: &[f64], b: &[f64]) -> (f64, f64) {
    let (sa, sb) = (Summary::of(a), Summary::of(b));
    (sa.mean - sb.mean, sa.stderr.hypot(sb.stderr))
}

/// Mean and standard error of the paired difference `a - b`.
fn paired(a: &[f64], b: &[f64]) -> (f64, f64) {
    assert_eq!(a.len(), b.len());
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let s = Summary::of(&d);
    (s.mean, s.stderr)
}

fn samples<'a>(t: &'a ResultTable, scheme: &str, x: f64, metric: &str) -> &'a [f64] {
    t.samples(scheme, x, metric)
        .unwrap_or_else(|| panic!("missing samples for {scheme} @ {x} / {metric}"))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sensing_chain() -> Verdict {
    let (n_bs, n_ue, r_bs, r_ue) = (8, 4, 2, 2);
    let (f, w) = (Codebook::new(n_bs), Codebook::new(n_ue));
    let pilot = PilotConfig::new(2.0, 0.0).unwrap().with_rule(PilotRule::Qpsk);
    let mut rng = RngStream::fork(101, 0);
    let mut worst = 0.0f64;
    for slot in 1..=100 {
        let paths = draw_paths(3.0, 1.0, false, n_bs, n_ue, &mut rng).unwrap();
        let ch = ChannelRealization::from_paths(paths, &f, &w);
        let sel = BeamSelection {
            slot,
            bs: rng.weighted_sample_without_replacement(&[1.0; 8], r_bs).unwrap(),
            ue: rng.weighted_sample_without_replacement(&[1.0; 4], r_ue).unwrap(),
        };
        let s = pilot.symbols(slot, r_bs);
        let y = simulate_measurement(&ch.h, &f, &w, &sel, &s, &pilot, &mut rng).unwrap();
        let mut a = SensingMatrix::new(n_bs * n_ue);
        a.push_slot(&sel, &s, n_ue);
        let amp = pilot.amplitude(r_bs);
        for (yi, zi) in y.iter().zip(a.apply(ch.h_v.as_slice())) {
            worst = worst.max((yi - zi * amp).norm());
        }
    }
    verdict(worst <= 1e-9, format!("max |y - c A vec(H_v)| = {worst:.2e} over 100 instances (<= 1e-9)"))
}

fn codebook_invariants() -> Verdict {
    let (mut unitary, mut modulus, mut phase) = (0.0f64, 0.0f64, 0.0f64);
    for n in [4usize, 8, 16, 32, 64] {
        let cb = Codebook::new(n);
        let m = cb.matrix();
        let eye = ComplexMatrix::identity(n);
        unitary = unitary
            .max(m.adjoint().matmul(m).unwrap().sub(&eye).unwrap().max_abs())
            .max(m.matmul(&m.adjoint()).unwrap().sub(&eye).unwrap().max_abs());
        let step = 2.0 * std::f64::consts::PI / n as f64;
        for z in m.as_slice() {
            modulus = modulus.max((z.norm() - 1.0 / (n as f64).sqrt()).abs());
            // the allowed phases pi(-1 + 2m/N) are the multiples of 2pi/N for even N
            let q = z.arg() / step;
            phase = phase.max((q - q.round()).abs() * step);
        }
    }
    // N = 8: (1/sqrt 8) exp(j 2pi/8 E) with E[k][n] = k (n - 4)
    let cb = Codebook::new(8);
    let mut table = 0.0f64;
    for k in 0..8 {
        for n in 0..8 {
            let e = (k as i64 * (n as i64 - 4)).rem_euclid(8) as f64;
            let want = Complex64::from_polar(1.0 / 8f64.sqrt(), 2.0 * std::f64::consts::PI * e / 8.0);
            table = table.max((cb.matrix()[(k, n)] - want).norm());
        }
    }
    let pass = unitary <= 1e-12 && modulus <= 1e-14 && phase <= 1e-10 && table <= 1e-15;
    verdict(
        pass,
        format!("unitarity {unitary:.1e}, modulus {modulus:.1e}, phase grid {phase:.1e}, N=8 table {table:.1e}"),
    )
}

fn tight_gamp() -> GampConfig {
    GampConfig {
        damping: 0.5,
        max_iterations: 2000,
        tolerance: 1e-12,
        ..GampConfig::default()
    }
}

fn draw_bg(n: usize, rho: f64, sigma: f64, rng: &mut RngStream) -> Vec<Complex64> {
    (0..n)
        .map(|_| if rng.uniform() < rho { rng.complex_gaussian(zero(), sigma).unwrap() } else { zero() })
        .collect()
}

fn observe(a: &ComplexMatrix, v: &[Complex64], noise: f64, rng: &mut RngStream) -> Vec<Complex64> {
    a.mul_vec(v)
        .unwrap()
        .into_iter()
        .map(|z| z + rng.complex_gaussian(zero(), noise).unwrap())
        .collect()
}

fn gamp_correctness() -> Verdict {
    // (a) 2x2 virtual channel, 8 rows, brute-force posterior mean
    let (m, n, rho, sigma, noise) = (8, 4, 0.25, 1.0, 0.1);
    let mut rng = RngStream::fork(102, 0);
    let (mut num, mut den) = (0.0, 0.0);
    for _ in 0..50 {
        let a = gaussian_matrix(m, n, 1.0 / m as f64, &mut rng);
        let v = draw_bg(n, rho, sigma, &mut rng);
        let y = observe(&a, &v, noise, &mut rng);
        let prior = GampPrior::new(rho, sigma, noise).unwrap();
        let est = gamp_estimate(&y, &SensingMatrix::from_dense(&a), &prior, 1.0, &tight_gamp()).unwrap();
        let mmse = brute_force_mmse(&a, &y, rho, sigma, noise);
        num += est.v_hat.iter().zip(&mmse).map(|(e, t)| (e - t).norm_sqr()).sum::<f64>();
        den += mmse.iter().map(|t| t.norm_sqr()).sum::<f64>();
    }
    let gap = (num / den).sqrt();

    // (b) noiseless on-grid two-path channels through a full-span sweep
    let (n_bs, n_ue) = (16, 8);
    let (f, w) = (Codebook::new(n_bs), Codebook::new(n_ue));
    let cells = n_bs * n_ue;
    let pilot = PilotConfig::new(1.0, 0.0).unwrap();
    let prior = GampPrior::new(2.0 / cells as f64, cells as f64, 0.0).unwrap();
    let mut ok = 0;
    for _ in 0..200 {
        let first = rng.index_below(cells);
        let second = loop {
            let k = rng.index_below(cells);
            if k != first {
                break k;
            }
        };
        let mut paths = PathSet::default();
        for k in [first, second] {
            paths.aod.push(f.steer_angles()[k / n_ue]);
            paths.aoa.push(w.steer_angles()[k % n_ue]);
            paths.gains.push(rng.complex_gaussian(zero(), 1.0).unwrap());
        }
        let ch = ChannelRealization::from_paths(paths, &f, &w);
        let out = run_exhaustive(&ch, &f, &w, 4, &pilot, &prior, &tight_gamp(), &mut rng).unwrap();
        let truth = ch.h_v.as_slice();
        let peak = truth.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let support = out.v_hat.iter().zip(truth).all(|(e, t)| (e.norm() > 1e-3 * peak) == (t.norm() > 1e-3 * peak));
        if support && rel_l2(&out.v_hat, truth).powi(2) <= 1e-3 {
            ok += 1;
        }
    }
    let recovery = ok as f64 / 200.0;

    // (c) rho = 1: LMMSE normal equations (sigma A^H A + N0 I) v = sigma A^H y
    let (m, n, sigma, noise) = (24, 16, 1.0, 0.1);
    let a = gaussian_matrix(m, n, 1.0 / m as f64, &mut rng);
    let v: Vec<Complex64> = (0..n).map(|_| rng.complex_gaussian(zero(), sigma).unwrap()).collect();
    let y = observe(&a, &v, noise, &mut rng);
    let prior = GampPrior::new(1.0, sigma, noise).unwrap();
    let est = gamp_estimate(&y, &SensingMatrix::from_dense(&a), &prior, 1.0, &tight_gamp()).unwrap();
    let aha = a.adjoint().matmul(&a).unwrap();
    let lhs = aha.mul_vec(&est.v_hat).unwrap();
    let rhs = a.adjoint().mul_vec(&y).unwrap();
    let resid: Vec<Complex64> = (0..n).map(|j| lhs[j] * sigma + est.v_hat[j] * noise - rhs[j] * sigma).collect();
    let scaled_rhs: Vec<Complex64> = rhs.iter().map(|z| z * sigma).collect();
    let norm = |x: &[Complex64]| x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let normal = norm(&resid) / norm(&scaled_rhs);

    verdict(
        gap <= 0.10 && recovery >= 0.95 && normal <= 1e-3,
        format!("(a) MMSE gap {:.1}% (<= 10%); (b) recovery {:.1}% (>= 95%); (c) LMMSE residual {normal:.1e} (<= 1e-3)", gap * 100.0, recovery * 100.0),
    )
}

fn single_user_sweep() -> ExperimentConfig {
    ExperimentConfig {
        trials: 300,
        seed: 2024,
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
        single_user: SingleUserConfig {
            snr_db: SNRS.to_vec(),
            ..Default::default()
        },
        ..Default::default()
    }
}

fn training_time_trend(t: &ResultTable) -> Verdict {
    let es_flat = SNRS.iter().all(|&s| samples(t, "ES", s, "t_e").iter().all(|&x| x == 128.0));
    let mut notes = vec![format!("(a) ES always 128: {es_flat}")];

    let mut monotone = true;
    for scheme in [FPA, PEPA] {
        let mut inversions = 0;
        let mut bad = false;
        let mut paired_z = 0.0f64;
        for pair in SNRS.windows(2) {
            let (hi, lo) = (samples(t, scheme, pair[1], "t_e"), samples(t, scheme, pair[0], "t_e"));
            let (d, se) = compare(hi, lo);
            if d > 0.0 {
                inversions += 1;
                bad |= d > 2.0 * se;
                let (pd, pse) = paired(hi, lo);
                paired_z = paired_z.max(pd / pse.max(1e-12));
            }
        }
        let ok = inversions <= 1 && !bad;
        monotone &= ok;
        let means: Vec<String> = SNRS.iter().map(|&s| format!("{:.1}", mean(samples(t, scheme, s, "t_e")))).collect();
        notes.push(format!(
            "(b) {scheme} T_E [{}] inversions {inversions} (paired z {paired_z:.1})",
            means.join(", ")
        ));
    }

    let mut low_snr = true;
    for s in [-12.0, -4.0] {
        let (d, se) = compare(samples(t, PEPA, s, "t_e"), samples(t, FPA, s, "t_e"));
        low_snr &= d <= 2.0 * se;
        notes.push(format!("(c) PEPA - FPA @ {s} dB = {d:.2} (2se {:.2})", 2.0 * se));
    }

    let (p, f) = (mean(samples(t, PEPA, 20.0, "t_e")), mean(samples(t, FPA, 20.0, "t_e")));
    let spread = (p - f).abs() / p.max(f);
    notes.push(format!("(d) +20 dB relative gap {:.1}%", spread * 100.0));

    verdict(es_flat && monotone && low_snr && spread < 0.10, notes.join("; "))
}

fn effective_rate_trend(t: &ResultTable) -> Verdict {
    let mut notes = Vec::new();
    let mut best = true;
    for t_c in [200.0, 400.0] {
        let metric = effective_rate_metric(t_c);
        let mut losses = Vec::new();
        for &s in &SNRS {
            for k in [20, 40, 60, 128] {
                let fnrb = format!("FNRB-{k}");
                let (d, se) = compare(samples(t, PEPA, s, &metric), samples(t, &fnrb, s, &metric));
                if d < -2.0 * se {
                    losses.push(format!("{fnrb}@{s}dB by {:.2}", -d));
                }
            }
        }
        best &= losses.is_empty();
        notes.push(format!(
            "T_c={t_c}: PEPA behind {}",
            if losses.is_empty() { "none".to_string() } else { losses.join(", ") }
        ));
    }
    let metric = effective_rate_metric(400.0);
    let m = |scheme: &str, s: f64| mean(samples(t, scheme, s, &metric));
    let high = m("FNRB-60", 20.0) > m("FNRB-20", 20.0);
    let low = m("FNRB-60", -20.0) < m("FNRB-20", -20.0);
    notes.push(format!(
        "crossover FNRB-60 vs FNRB-20: +20 dB {:.3} vs {:.3}, -20 dB {:.3} vs {:.3}",
        m("FNRB-60", 20.0),
        m("FNRB-20", 20.0),
        m("FNRB-60", -20.0),
        m("FNRB-20", -20.0)
    ));
    verdict(best && high && low, notes.join("; "))
}

fn completion_cdf() -> Verdict {
    let cfg = ExperimentConfig {
        trials: 500,
        seed: 2025,
        schemes: vec![Scheme::Swift(Adaptation::Fpa), Scheme::Swift(Adaptation::Pepa)],
        single_user: SingleUserConfig {
            snr_db: vec![-12.0, 12.0],
            ..Default::default()
        },
        ..Default::default()
    };
    let t = run_experiment(&cfg).expect("cdf run");
    let grid: Vec<f64> = (1..=cfg.t_max() / cfg.training.t_u).map(|k| (k * cfg.training.t_u) as f64).collect();
    let cdf = |xs: &[f64], x: f64| xs.iter().filter(|&&s| s <= x).count() as f64 / xs.len() as f64;

    let mut dominance = true;
    for scheme in [FPA, PEPA] {
        let (hi, lo) = (samples(&t, scheme, 12.0, "t_e"), samples(&t, scheme, -12.0, "t_e"));
        dominance &= grid.iter().all(|&x| cdf(hi, x) >= cdf(lo, x));
    }

    // indicator means at each evaluated T_E are the CDF values
    let (pepa, fpa) = (samples(&t, PEPA, -12.0, "t_e"), samples(&t, FPA, -12.0, "t_e"));
    let mut worst = f64::INFINITY;
    let mut pepa_ok = true;
    for &x in grid.iter().filter(|&&x| x <= 64.0) {
        let a: Vec<f64> = pepa.iter().map(|&s| (s <= x) as u8 as f64).collect();
        let b: Vec<f64> = fpa.iter().map(|&s| (s <= x) as u8 as f64).collect();
        let (d, se) = compare(&a, &b);
        pepa_ok &= d >= -2.0 * se;
        worst = worst.min(d + 2.0 * se);
    }
    let at = |xs: &[f64]| format!("{:.2}", cdf(xs, 64.0));
    verdict(
        dominance && pepa_ok,
        format!(
            "+12 dB dominates -12 dB: {dominance}; PEPA >= FPA at -12 dB for T_E <= 64: {pepa_ok} (min margin {worst:.3}); F(64) PEPA {} FPA {}",
            at(pepa),
            at(fpa)
        ),
    )
}

fn multi_user_trend() -> Verdict {
    let mut cfg = ExperimentConfig {
        mode: Mode::MultiUser,
        trials: 200,
        seed: 2026,
        schemes: vec![
            Scheme::Swift(Adaptation::Pepa),
            Scheme::Swift(Adaptation::Fpa),
            Scheme::Fnrb(20),
            Scheme::Fnrb(60),
        ],
        coherence: vec![200.0, 400.0],
        ..Default::default()
    };
    cfg.multi_user.users = USERS.to_vec();
    let t = run_experiment(&cfg).expect("multi-user run");
    let mut notes = Vec::new();
    let mut pass = true;
    for t_c in [200.0, 400.0] {
        let metric = format!("per_user_{}", effective_rate_metric(t_c));
        let series = |scheme: &str| -> Vec<&[f64]> { USERS.iter().map(|&u| samples(&t, scheme, u as f64, &metric)).collect() };
        for scheme in [PEPA, FPA] {
            let s = series(scheme);
            let means: Vec<f64> = s.iter().map(|x| mean(x)).collect();
            let rising = s.windows(2).all(|p| {
                let (d, se) = compare(p[1], p[0]);
                d >= -2.0 * se
            });
            let saturates = means[4] - means[3] < means[2] - means[0];
            pass &= rising && saturates;
            let shown: Vec<String> = means.iter().map(|m| format!("{m:.3}")).collect();
            notes.push(format!("T_c={t_c} {scheme} [{}] rising {rising} saturating {saturates}", shown.join(", ")));
        }
        for scheme in ["FNRB-20", "FNRB-60"] {
            let s = series(scheme);
            // flat: no user count drifts more than 3 standard errors from U=10
            let worst = s[1..]
                .iter()
                .map(|x| {
                    let (d, se) = compare(x, s[0]);
                    d.abs() / se.max(1e-12)
                })
                .fold(0.0, f64::max);
            pass &= worst <= 3.0;
            let shown: Vec<String> = s.iter().map(|x| format!("{:.3}", mean(x))).collect();
            notes.push(format!("T_c={t_c} {scheme} [{}] max drift {worst:.1} se", shown.join(", ")));
        }
    }
    verdict(pass, notes.join("; "))
}

fn cell_spot_values() -> Verdict {
    let far = received_snr_db(20.0, -60.0, 200f64.powi(-4));
    let near = received_snr_db(20.0, -60.0, 50f64.powi(-4));
    verdict(
        (far + 12.04).abs() <= 0.01 && (near - 12.04).abs() <= 0.01,
        format!("200 m -> {far:.3} dB, 50 m -> {near:.3} dB"),
    )
}

fn determinism() -> Verdict {
    let mut single = single_user_sweep();
    single.trials = 20;
    let mut multi = ExperimentConfig {
        mode: Mode::MultiUser,
        trials: 10,
        ..Default::default()
    };
    multi.multi_user.users = vec![4, 8];
    multi.multi_user.n_s = 3;
    let mut identical = true;
    for cfg in [single, multi] {
        let mut bytes = Vec::new();
        for threads in [Some(1), None] {
            let dir = tempfile::tempdir().unwrap();
            let table = swift_core::parallel::with_threads(threads, || run_experiment(&cfg)).unwrap();
            let files = write_results(&table, &cfg, dir.path()).unwrap();
            bytes.push((fs::read(&files.results).unwrap(), fs::read(&files.cdf).unwrap()));
        }
        identical &= bytes[0] == bytes[1];
    }
    verdict(identical, "single- and multi-user reruns (1 thread vs pool) give byte-identical CSVs")
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |id: &str, start: Instant, v: Verdict| {
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {id} ({:.1?}): {}", start.elapsed(), v.detail);
        failed += !v.pass as usize;
    };

    let s = Instant::now();
    report("1 sensing-chain equivalence", s, sensing_chain());
    let s = Instant::now();
    report("2 codebook invariants", s, codebook_invariants());
    let s = Instant::now();
    report("3 GAMP correctness", s, gamp_correctness());

    let s = Instant::now();
    let sweep = run_experiment(&single_user_sweep()).expect("single-user sweep");
    report("4 training time vs SNR", s, training_time_trend(&sweep));
    report("5 effective rate vs SNR", s, effective_rate_trend(&sweep));

    let s = Instant::now();
    report("6 completion-time CDF", s, completion_cdf());
    let s = Instant::now();
    report("7 multi-user effective rate", s, multi_user_trend());
    let s = Instant::now();
    report("8 cell-model spot values", s, cell_spot_values());
    let s = Instant::now();
    report("9 determinism", s, determinism());

    if failed == 0 {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
