use proptest::prelude::*;

use hokalman::analysis::hinf_error;
use hokalman::hankel::{build_hankel, markov_from_ss, MarkovParams};
use hokalman::matcore::{norms, orth, pinv, spectral_norm, svd, truncate};
use hokalman::rsvd::rsvd;
use hokalman::sysid::random_system;
use hokalman::{DenseMatrix, RsvdConfig};

fn shape() -> impl Strategy<Value = (usize, usize, u64)> {
    (2usize..24, 2usize..24, any::<u64>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn truncation_error_is_next_singular_value((r, c, seed) in shape(), k in 1usize..6) {
        let a = DenseMatrix::gaussian(r, c, seed);
        let f = svd(&a).unwrap();
        let k = k.min(f.len() - 1);
        let err = svd(&(&a - &truncate(&f, k).unwrap())).unwrap().s[0];
        prop_assert!((err - f.s[k]).abs() <= 1e-12 * f.s[0]);
    }

    #[test]
    fn power_norm_approaches_from_below((r, c, seed) in shape()) {
        let a = DenseMatrix::gaussian(r, c, seed);
        let s1 = svd(&a).unwrap().s[0];
        let est = spectral_norm(&a).unwrap();
        // a Rayleigh quotient never overshoots; the stopping rule is on the
        // step size, so the shortfall scales with 1/(1 − (σ₂/σ₁)²)
        prop_assert!(est <= s1 * (1.0 + 1e-12));
        prop_assert!(est >= s1 * (1.0 - 1e-6));
    }

    #[test]
    fn orth_is_orthonormal_and_spans((r, c, seed) in shape()) {
        let a = DenseMatrix::gaussian(r, c, seed);
        let q = orth(&a).unwrap();
        let gram = &q.transpose() * &q;
        prop_assert!(gram.max_abs_diff(&DenseMatrix::identity(q.cols())) <= 1e-12);
        let proj = &q * &(&q.transpose() * &a);
        prop_assert!(proj.max_abs_diff(&a) <= 1e-10 * a.frobenius_norm());
    }

    #[test]
    fn pinv_satisfies_penrose((r, c, seed) in shape()) {
        let a = DenseMatrix::gaussian(r, c, seed);
        let p = pinv(&a).unwrap();
        let scale = a.frobenius_norm();
        prop_assert!((&(&a * &p) * &a).max_abs_diff(&a) <= 1e-10 * scale);
        let pp = &(&p * &a) * &p;
        prop_assert!(pp.max_abs_diff(&p) <= 1e-10 * p.frobenius_norm().max(1.0));
    }

    #[test]
    fn spectral_frobenius_sandwich((r, c, seed) in shape()) {
        let a = DenseMatrix::gaussian(r, c, seed);
        let n = norms(&a).unwrap();
        let rank = r.min(c) as f64;
        prop_assert!(n.spectral <= n.frobenius * (1.0 + 1e-12));
        prop_assert!(n.frobenius <= rank.sqrt() * n.spectral * (1.0 + 1e-9));
    }

    #[test]
    fn power_scheme_raises_singular_values((r, c, seed) in shape(), q in 1usize..3) {
        let a = DenseMatrix::gaussian(r, c, seed).scale(0.3);
        let aat = &a * &a.transpose();
        let mut w = a.clone();
        for _ in 0..q {
            w = &aat * &w;
        }
        let sa = svd(&a).unwrap().s;
        let sw = svd(&w).unwrap().s;
        for (x, y) in sa.iter().zip(&sw) {
            let want = x.powi(2 * q as i32 + 1);
            prop_assert!((y - want).abs() <= 1e-8 * sa[0].powi(2 * q as i32 + 1));
        }
    }

    #[test]
    fn hankel_blocks_follow_antidiagonals(p in 1usize..4, m in 1usize..4, t1 in 1usize..5, t2 in 1usize..5, seed in any::<u64>()) {
        let t = t1 + t2 + 1;
        let g = MarkovParams::new(p, m, DenseMatrix::gaussian(p, m * t, seed)).unwrap();
        let pair = build_hankel(&g, t1, t2).unwrap();
        let (hm, hp) = (pair.hminus(), pair.hplus());
        prop_assert_eq!(hm.shape(), (p * t1, m * t2));
        for i in 0..p * t1 {
            for j in 0..m * t2 {
                prop_assert_eq!(hm.get(i, j), g.entry(i / p + j / m + 1, i % p, j % m));
                prop_assert_eq!(hp.get(i, j), g.entry(i / p + j / m + 2, i % p, j % m));
                if j + m < m * t2 {
                    prop_assert_eq!(hp.get(i, j), hm.get(i, j + m));
                }
            }
        }
    }

    #[test]
    fn rsvd_is_exact_on_low_rank((r, c, seed) in shape(), k in 1usize..4) {
        let k = k.min(r.min(c) - 1).max(1);
        let a = &DenseMatrix::gaussian(r, k, seed) * &DenseMatrix::gaussian(k, c, seed ^ 1);
        let l = (r.min(c) - k).min(3);
        let f = rsvd(&a, &RsvdConfig::new(k, l).seed(seed)).unwrap();
        prop_assert!(f.reconstruct().max_abs_diff(&a) <= 1e-9 * a.frobenius_norm());
    }
}

#[test]
fn hinf_error_ignores_coordinates() {
    for seed in 0..5 {
        let truth = random_system(4, 2, 3, seed).unwrap();
        let est = random_system(4, 2, 3, seed + 100).unwrap();
        let t = &DenseMatrix::gaussian(4, 4, seed) + &DenseMatrix::identity(4).scale(3.0);
        let t_inv = pinv(&t).unwrap();
        let base = hinf_error(&truth, &est, 256).unwrap();
        let moved = hinf_error(&truth, &est.transformed(&t, &t_inv), 256).unwrap();
        assert!((base - moved).abs() <= 1e-9 * base, "{base} vs {moved}");
    }
}

#[test]
fn markov_parameters_ignore_coordinates() {
    let ss = random_system(5, 2, 2, 9).unwrap();
    let t = &DenseMatrix::gaussian(5, 5, 1) + &DenseMatrix::identity(5).scale(4.0);
    let moved = ss.transformed(&t, &pinv(&t).unwrap());
    let g = markov_from_ss(&ss, 12).unwrap();
    let h = markov_from_ss(&moved, 12).unwrap();
    assert!(g.relative_frobenius_error(&h).unwrap() <= 1e-12);
}
