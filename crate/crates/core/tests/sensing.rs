mod common;

use common::*;
use proptest::prelude::*;
use swift_core::channel::{draw_paths, ChannelRealization};
use swift_core::codebook::Codebook;
use swift_core::measurement::{sensing_block, simulate_measurement, BeamSelection, PilotConfig, PilotRule, SensingMatrix};
use swift_core::numerics::{kron, unvec, vec, Complex64, ComplexMatrix, RngStream};

fn random_matrix(rows: usize, cols: usize, rng: &mut RngStream) -> ComplexMatrix {
    gaussian_matrix(rows, cols, 1.0, rng)
}

fn close(a: &[Complex64], b: &[Complex64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).norm() <= tol * (1.0 + y.norm()))
}

fn selection(n_bs: usize, n_ue: usize, r_bs: usize, r_ue: usize, rng: &mut RngStream) -> BeamSelection {
    BeamSelection {
        slot: 1 + rng.index_below(100),
        bs: rng.weighted_sample_without_replacement(&vec![1.0; n_bs], r_bs).unwrap(),
        ue: rng.weighted_sample_without_replacement(&vec![1.0; n_ue], r_ue).unwrap(),
    }
}

#[test]
fn codebooks_are_unitary() {
    for n in [2, 4, 8, 16, 32] {
        let f = Codebook::new(n);
        let g = f.matrix().adjoint().matmul(f.matrix()).unwrap();
        assert!(g.sub(&ComplexMatrix::identity(n)).unwrap().max_abs() < 1e-12, "N={n}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kron_vec_identity(seed in any::<u64>(), m in 1usize..4, k in 1usize..4, l in 1usize..4, n in 1usize..4) {
        // vec(A X B) = (B^T kron A) vec(X)
        let mut rng = RngStream::fork(seed, 0);
        let a = random_matrix(m, k, &mut rng);
        let x = random_matrix(k, l, &mut rng);
        let b = random_matrix(l, n, &mut rng);
        let lhs = vec(&a.matmul(&x).unwrap().matmul(&b).unwrap());
        let rhs = kron(&b.transpose(), &a).mul_vec(&vec(&x)).unwrap();
        prop_assert!(close(&lhs, &rhs, 1e-10));
        prop_assert_eq!(unvec(&vec(&x), k, l).unwrap(), x);
    }

    // the stored rows are the literal Kronecker sensing block
    #[test]
    fn structural_rows_equal_kron_block(seed in any::<u64>(), nb in 1u32..5, nu in 1u32..4, rb in 1usize..5, ru in 1usize..5) {
        let (n_bs, n_ue) = (1usize << nb, 1usize << nu);
        let (r_bs, r_ue) = (rb.min(n_bs), ru.min(n_ue));
        let (f, w) = (Codebook::new(n_bs), Codebook::new(n_ue));
        let mut rng = RngStream::fork(seed, 1);
        let sel = selection(n_bs, n_ue, r_bs, r_ue, &mut rng);
        let pilots = PilotConfig::new(1.0, 0.0).unwrap().with_rule(PilotRule::Qpsk).symbols(sel.slot, r_bs);
        let mut a = SensingMatrix::new(n_bs * n_ue);
        a.push_slot(&sel, &pilots, n_ue);
        let literal = sensing_block(&sel, &pilots, &f, &w);
        prop_assert!(a.to_dense().sub(&literal).unwrap().max_abs() < 1e-12);
        prop_assert_eq!(a.nnz(), r_bs * r_ue);
    }

    // noiseless direct model y = c W^H H F s equals c A vec(H_v)
    #[test]
    fn direct_model_matches_sensing_chain(seed in any::<u64>(), on_grid in any::<bool>(), rb in 1usize..5, ru in 1usize..5) {
        let (n_bs, n_ue) = (16, 8);
        let (f, w) = (Codebook::new(n_bs), Codebook::new(n_ue));
        let mut rng = RngStream::fork(seed, 2);
        let paths = draw_paths(3.0, 1.0, on_grid, n_bs, n_ue, &mut rng).unwrap();
        let ch = ChannelRealization::from_paths(paths, &f, &w);
        let pilot = PilotConfig::new(2.5, 0.0).unwrap().with_rule(PilotRule::Qpsk);
        let sel = selection(n_bs, n_ue, rb, ru, &mut rng);
        let s = pilot.symbols(sel.slot, rb);
        let y = simulate_measurement(&ch.h, &f, &w, &sel, &s, &pilot, &mut rng).unwrap();
        let mut a = SensingMatrix::new(n_bs * n_ue);
        a.push_slot(&sel, &s, n_ue);
        let amp = pilot.amplitude(rb);
        let predicted: Vec<Complex64> = a.apply(ch.h_v.as_slice()).into_iter().map(|z| z * amp).collect();
        prop_assert!(close(&y, &predicted, 1e-10));
        // H = W_c H_v F_c^H
        let back = w.matrix().matmul(&ch.h_v).unwrap().matmul(&f.matrix().adjoint()).unwrap();
        prop_assert!(back.sub(&ch.h).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn sparse_products_agree_with_dense(seed in any::<u64>(), m in 1usize..10, n in 1usize..10) {
        let mut rng = RngStream::fork(seed, 3);
        // roughly half the entries zeroed
        let dense = ComplexMatrix::from_fn(m, n, |_, _| {
            if rng.uniform() < 0.5 { zero() } else { rng.complex_gaussian(zero(), 1.0).unwrap() }
        });
        let a = SensingMatrix::from_dense(&dense);
        prop_assert_eq!(a.to_dense(), dense.clone());
        let x = random_matrix(n, 1, &mut rng).into_vec();
        let y = random_matrix(m, 1, &mut rng).into_vec();
        prop_assert!(close(&a.apply(&x), &dense.mul_vec(&x).unwrap(), 1e-12));
        prop_assert!(close(&a.apply_adjoint(&y), &dense.adjoint().mul_vec(&y).unwrap(), 1e-12));
        let xs: Vec<f64> = x.iter().map(|z| z.norm()).collect();
        let ys: Vec<f64> = y.iter().map(|z| z.norm()).collect();
        let sq = ComplexMatrix::from_fn(m, n, |r, k| c(dense[(r, k)].norm_sqr(), 0.0));
        let want: Vec<f64> = sq.mul_vec(&xs.iter().map(|&v| c(v, 0.0)).collect::<Vec<_>>()).unwrap().iter().map(|z| z.re).collect();
        let got = a.apply_sq(&xs);
        prop_assert!(got.iter().zip(&want).all(|(g, w)| (g - w).abs() <= 1e-12 * (1.0 + w)));
        let want_t: Vec<f64> = sq.transpose().mul_vec(&ys.iter().map(|&v| c(v, 0.0)).collect::<Vec<_>>()).unwrap().iter().map(|z| z.re).collect();
        let got_t = a.apply_sq_transpose(&ys);
        prop_assert!(got_t.iter().zip(&want_t).all(|(g, w)| (g - w).abs() <= 1e-12 * (1.0 + w)));
    }
}
