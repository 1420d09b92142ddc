use std::sync::Arc;

use dhl_core::grid::{build_grid, distance_field, hessian_central, DomainDescriptor, Grid, ScalarField};
use dhl_core::symmfunc::eigenvalues;
use dhl_core::verify::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn disk(res: usize) -> Arc<Grid> {
    let dom = DomainDescriptor::Disk { center: vec![0.0, 0.0], radius: 1.0 };
    Arc::new(build_grid(&dom, res, &|_| 0.0).unwrap())
}

/// Random trigonometric polynomial of low degree.
fn trig(rng: &mut ChaCha8Rng) -> impl Fn(&[f64]) -> f64 {
    let terms: Vec<[f64; 4]> = (0..4)
        .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(0.0..6.3)])
        .collect();
    move |x: &[f64]| terms.iter().map(|t| t[0] * (t[1] * x[0] + t[2] * x[1] + t[3]).sin()).sum()
}

/// A convex `u` below `ū` on the disk.
fn convex_pair(rng: &mut ChaCha8Rng, g: &Arc<Grid>) -> (ScalarField, ScalarField) {
    let (a, b, s) = (rng.gen_range(0.3..2.0), rng.gen_range(0.3..2.0), rng.gen_range(-0.3..0.3));
    let u = ScalarField::from_fn(g.clone(), |x| a * x[0] * x[0] + b * x[1] * x[1] + s * x[0] * x[1] - 3.0);
    let ubar = ScalarField::from_fn(g.clone(), |_| 0.0);
    (u, ubar)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn pogorelov_is_invariant_under_common_shifts(seed in any::<u64>(), c in -1.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = disk(33);
        let (u, ubar) = convex_pair(&mut rng, &g);
        let (us, ubs) = (u.map(|v| v + c), ubar.map(|v| v + c));
        for k in 1..=2 {
            let a = pogorelov_hessian(&u, &ubar, k, None).unwrap();
            let b = pogorelov_hessian(&us, &ubs, k, None).unwrap();
            prop_assert!((a.quantity - b.quantity).abs() <= 1e-9 * a.quantity.max(1.0));
            let a = pogorelov_curvature(&u, &ubar, k, None).unwrap();
            let b = pogorelov_curvature(&us, &ubs, k, None).unwrap();
            prop_assert!((a.quantity - b.quantity).abs() <= 1e-9 * a.quantity.max(1.0));
        }
    }

    #[test]
    fn zero_exponent_gives_top_eigenvalue(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = disk(25);
        let (u, ubar) = convex_pair(&mut rng, &g);
        let wiggle = trig(&mut rng);
        let u = ScalarField::from_fn(g.clone(), |x| u.get(g.nearest_node(x).unwrap()) + 0.1 * wiggle(x) - 0.5);
        let r = pogorelov_hessian(&u, &ubar, 2, Some(0.0)).unwrap();
        let want = hessian_central(&u)
            .iter()
            .map(|m| eigenvalues(m).unwrap().max().max(0.0))
            .fold(0.0, f64::max);
        prop_assert!((r.quantity - want).abs() <= 1e-12 * want.max(1.0));
    }

    #[test]
    fn gradient_bound_holds_for_squares(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = disk(65);
        let p = trig(&mut rng);
        let psi = ScalarField::from_fn(g.clone(), |x| p(x).powi(2));
        let rep = blocki_check(&psi, &distance_field(&g)).unwrap();
        prop_assert!(rep.holds(), "{:?}", rep);
    }

    #[test]
    fn sweep_verdict_is_scale_free(qs in prop::collection::vec(1e-3f64..10.0, 3..8), s in 1e-3f64..1e3, factor in 1.0f64..4.0) {
        let recs: Vec<PogorelovRecord> = qs
            .iter()
            .enumerate()
            .map(|(i, &q)| PogorelovRecord { eps: 0.5f64.powi(i as i32), alpha: 2.0, quantity: q, argmax: None })
            .collect();
        let scaled: Vec<PogorelovRecord> = recs.iter().map(|r| PogorelovRecord { quantity: r.quantity * s, ..*r }).collect();
        let a = sweep_verdict(&recs, factor).unwrap();
        let b = sweep_verdict(&scaled, factor).unwrap();
        prop_assert_eq!(a.bounded, b.bounded);
        prop_assert!((a.ratio - b.ratio).abs() <= 1e-12 * a.ratio);
        if a.bounded {
            prop_assert!(sweep_verdict(&recs, factor * 1.5).unwrap().bounded);
        }
    }
}

#[test]
fn default_exponents() {
    assert_eq!(default_alpha_hessian(1), 2.0);
    assert_eq!(default_alpha_hessian(2), 2.0);
    assert_eq!(default_alpha_hessian(3), 2.0);
    assert_eq!(default_alpha_hessian(4), 3.0);
    assert_eq!(default_alpha_curvature(2), 3.0);
    assert_eq!(default_alpha_curvature(5), 4.0);
    assert_eq!(DEFAULT_HYPERBOLIC_ALPHA, 4.0);
}
