mod common;

use common::*;
use dhl_core::symmfunc::*;
use num_rational::Rational64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spectrum(v: &[f64]) -> SymSpectrum {
    SymSpectrum::new(v.to_vec()).unwrap()
}

fn nk() -> impl Strategy<Value = (usize, usize, u64)> {
    (2usize..=6).prop_flat_map(|n| (Just(n), 1..=n, any::<u64>()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn recurrence_matches_subset_enumeration(lam in prop::collection::vec(-5.0f64..5.0, 1..=6)) {
        let abs: Vec<f64> = lam.iter().map(|v| v.abs()).collect();
        for k in 1..=lam.len() {
            let got = sigma(&spectrum(&lam), k).unwrap();
            let want = sigma_subsets(&lam, k);
            let scale = sigma_subsets(&abs, k).max(f64::MIN_POSITIVE);
            prop_assert!((got - want).abs() <= 1e-12 * scale, "k={} {} vs {}", k, got, want);
        }
    }

    #[test]
    fn gradient_matches_difference_quotients((n, k, seed) in nk()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lam = sample_cone(&mut rng, n, k);
        let a = with_spectrum(&mut rng, &lam);
        let g = sigma_gradient(&a, k).unwrap();
        let h = 1e-6;
        let base = dense(&a);
        let scale = g.max_abs().max(1e-3);
        for i in 0..n {
            for j in 0..n {
                let mut p = base.clone();
                let mut m = base.clone();
                p[i][j] += h;
                m[i][j] -= h;
                let fd = (sigma_minors(&p, k) - sigma_minors(&m, k)) / (2.0 * h);
                prop_assert!((fd - g.get(i, j)).abs() <= 1e-6 * scale, "({},{}) {} vs {}", i, j, fd, g.get(i, j));
            }
        }
        // The symmetric-input path through the eigenvalues agrees as well.
        for i in 0..n {
            let mut p = a.clone();
            let mut m = a.clone();
            p.set_sym(i, i, a.get(i, i) + h);
            m.set_sym(i, i, a.get(i, i) - h);
            let fd = (sigma(&eigenvalues(&p).unwrap(), k).unwrap() - sigma(&eigenvalues(&m).unwrap(), k).unwrap()) / (2.0 * h);
            prop_assert!((fd - g.get(i, i)).abs() <= 1e-6 * scale);
        }
    }

    #[test]
    fn hessian_diagonal_matches_gradient_differences((n, k, seed) in (2usize..=6).prop_flat_map(|n| (Just(n), 2..=n, any::<u64>()))) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lam = sample_cone(&mut rng, n, k);
        let hd = sigma_hessian_diagonal(&spectrum(&lam), k).unwrap();
        let d = SymMatrix::diag(&lam);
        let step = 1e-5;
        let mut scale: f64 = 1e-3;
        for i in 0..n { for j in 0..n { for p in 0..n { for q in 0..n {
            scale = scale.max(hd.get(i, j, p, q).abs());
        }}}}
        for p in 0..n {
            for q in p..n {
                let mut plus = d.clone();
                let mut minus = d.clone();
                plus.set_sym(p, q, d.get(p, q) + step);
                minus.set_sym(p, q, d.get(p, q) - step);
                let gp = sigma_gradient(&plus, k).unwrap();
                let gm = sigma_gradient(&minus, k).unwrap();
                for i in 0..n {
                    for j in 0..n {
                        let fd = (gp.get(i, j) - gm.get(i, j)) / (2.0 * step);
                        let want = if p == q { hd.get(i, j, p, p) } else { hd.get(i, j, p, q) + hd.get(i, j, q, p) };
                        prop_assert!((fd - want).abs() <= 1e-5 * scale, "ij=({},{}) pq=({},{}) {} vs {}", i, j, p, q, fd, want);
                    }
                }
            }
        }
    }

    #[test]
    fn gradient_is_positive_definite_in_cone((n, k, seed) in nk()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lam = sample_cone(&mut rng, n, k);
        let g = sigma_gradient(&SymMatrix::diag(&lam), k).unwrap();
        let ev = eigenvalues(&g).unwrap();
        prop_assert!(ev.values().iter().all(|v| *v > 0.0), "{:?}", ev.values());
    }

    #[test]
    fn newton_maclaurin_holds((n, k, seed) in (2usize..=6).prop_flat_map(|n| (Just(n), 1..=n.min(4), any::<u64>()))) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lam = spectrum(&sample_cone(&mut rng, n, k));
        for l in 0..k {
            for r in 1..=k {
                for s in 0..r {
                    if s > l {
                        continue;
                    }
                    let (lhs, rhs) = newton_maclaurin(&lam, k, l, r, s).unwrap();
                    prop_assert!(lhs <= rhs + 1e-12, "k={} l={} r={} s={}: {} > {}", k, l, r, s, lhs, rhs);
                }
            }
        }
    }

    #[test]
    fn root_sigma_is_concave_on_cone((n, k, seed) in nk(), t in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = sample_cone(&mut rng, n, k);
        let b = sample_cone(&mut rng, n, k);
        let root = |v: &[f64]| sigma(&spectrum(v), k).unwrap().powf(1.0 / k as f64);
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| t * x + (1.0 - t) * y).collect();
        prop_assert!(root(&mid) >= t * root(&a) + (1.0 - t) * root(&b) - 1e-10);
    }

    #[test]
    fn exact_homogeneity(nums in prop::collection::vec(-9i64..=9, 1..=6), c_num in -4i64..=4, c_den in 1i64..=3) {
        let lam: Vec<Rational64> = nums.iter().map(|&v| Rational64::new(v, 2)).collect();
        let c = Rational64::new(c_num, c_den);
        let scaled: Vec<Rational64> = lam.iter().map(|v| *v * c).collect();
        for k in 0..=lam.len() {
            let lhs = sigma_generic(&scaled, k).unwrap();
            let mut ck = Rational64::new(1, 1);
            for _ in 0..k {
                ck *= c;
            }
            prop_assert_eq!(lhs, ck * sigma_generic(&lam, k).unwrap());
        }
    }

    #[test]
    fn float_homogeneity(lam in prop::collection::vec(-3.0f64..3.0, 1..=6), c in -3.0f64..3.0) {
        let abs: Vec<f64> = lam.iter().map(|v| v.abs()).collect();
        let scaled: Vec<f64> = lam.iter().map(|v| v * c).collect();
        for k in 1..=lam.len() {
            let lhs = sigma(&spectrum(&scaled), k).unwrap();
            let rhs = c.powi(k as i32) * sigma(&spectrum(&lam), k).unwrap();
            let scale = c.abs().powi(k as i32) * sigma_subsets(&abs, k);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE));
        }
    }

    #[test]
    fn rotation_invariance(n in 1usize..=6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_sym(&mut rng, n, 2.0);
        let q = random_rotation(&mut rng, n);
        let e1 = matrix_elementary(&a, n).unwrap();
        let e2 = matrix_elementary(&a.rotate(&q), n).unwrap();
        for (m, (x, y)) in e1.iter().zip(&e2).enumerate() {
            prop_assert!((x - y).abs() <= 1e-10 * 4f64.powi(m as i32).max(1.0), "sigma_{} {} vs {}", m, x, y);
        }
    }

    #[test]
    fn cone_status_agrees_with_oracle(lam in prop::collection::vec(-2.0f64..2.0, 1..=6), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.gen_range(1..=lam.len());
        let status = cone_status(&spectrum(&lam), k, 0.0).unwrap();
        if in_cone(&lam, k) {
            prop_assert!(status.margin > 0.0);
        } else {
            prop_assert!(!status.is_interior());
        }
    }
}
