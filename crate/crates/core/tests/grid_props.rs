mod common;

use std::sync::Arc;

use common::*;
use dhl_core::grid::*;
use dhl_core::symmfunc::SymMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_domain(rng: &mut ChaCha8Rng, n: usize) -> DomainDescriptor {
    let center: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
    match rng.gen_range(0..3) {
        0 => DomainDescriptor::Disk { center, radius: rng.gen_range(0.5..1.5) },
        1 => {
            let semi_axes = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
            DomainDescriptor::Ellipsoid { center, semi_axes }
        }
        _ => {
            let lo: Vec<f64> = center.iter().map(|c| c - rng.gen_range(0.5..1.0)).collect();
            let hi = center.iter().map(|c| c + rng.gen_range(0.5..1.0)).collect();
            DomainDescriptor::Rectangle { lo, hi }
        }
    }
}

struct Quadratic {
    a: SymMatrix,
    b: Vec<f64>,
    c: f64,
}

impl Quadratic {
    fn random(rng: &mut ChaCha8Rng, n: usize) -> Self {
        Quadratic {
            a: random_sym(rng, n, 2.0),
            b: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            c: rng.gen_range(-1.0..1.0),
        }
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let ax = self.a.mul_vec(x);
        0.5 * x.iter().zip(&ax).map(|(p, q)| p * q).sum::<f64>()
            + x.iter().zip(&self.b).map(|(p, q)| p * q).sum::<f64>()
            + self.c
    }
}

fn max_hessian_error(res: usize, f: impl Fn(&[f64]) -> f64, d2: impl Fn(&[f64]) -> [f64; 3]) -> f64 {
    let dom = DomainDescriptor::Disk { center: vec![0.0, 0.0], radius: 1.0 };
    let g = Arc::new(build_grid(&dom, res, &|_| 0.0).unwrap());
    let field = ScalarField::from_fn(g.clone(), f);
    let mut err: f64 = 0.0;
    for (m, &i) in hessian_central(&field).iter().zip(g.interior()) {
        let e = d2(&g.coords(i));
        err = err.max((m.get(0, 0) - e[0]).abs()).max((m.get(1, 1) - e[1]).abs()).max((m.get(0, 1) - e[2]).abs());
    }
    err
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn difference_stencils_are_exact_on_quadratics(n in 2usize..=3, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dom = random_domain(&mut rng, n);
        let q = Quadratic::random(&mut rng, n);
        let g = Arc::new(build_grid(&dom, 13, &|_| 0.0).unwrap());
        let f = ScalarField::from_fn(g.clone(), |x| q.eval(x));
        let scale = q.a.max_abs().max(1.0);
        for (m, &i) in hessian_central(&f).iter().zip(g.interior()) {
            for (x, y) in m.entries().iter().zip(q.a.entries()) {
                prop_assert!((x - y).abs() <= 1e-9 * scale, "node {}: {} vs {}", i, x, y);
            }
        }
        for (d, &i) in gradient_central(&f).iter().zip(g.interior()) {
            let want: Vec<f64> = q.a.mul_vec(&g.coords(i)).iter().zip(&q.b).map(|(p, r)| p + r).collect();
            for (x, y) in d.iter().zip(&want) {
                prop_assert!((x - y).abs() <= 1e-9 * scale);
            }
        }
    }

    #[test]
    fn ghost_extrapolation_is_exact_on_quadratics(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dom = random_domain(&mut rng, 2);
        let q = Quadratic::random(&mut rng, 2);
        let g = Arc::new(build_grid_with(&dom, 25, &|x| q.eval(x), BoundaryMode::ExtrapolatedExact).unwrap());
        let exact = ScalarField::from_fn(g.clone(), |x| q.eval(x));
        let mut f = exact.clone();
        f.apply_boundary();
        for b in g.boundary_nodes().iter().filter(|b| b.coupling.len() >= 2) {
            let err = (f.get(b.node) - exact.get(b.node)).abs();
            prop_assert!(err <= 1e-9 * q.a.max_abs().max(1.0), "ghost error {}", err);
        }
    }

    #[test]
    fn interior_grows_under_refinement(n in 2usize..=3, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dom = random_domain(&mut rng, n);
        let res = if n == 2 { 17 } else { 9 };
        let coarse = build_grid(&dom, res, &|_| 0.0).unwrap();
        let fine = build_grid(&dom, 2 * res - 1, &|_| 0.0).unwrap();
        prop_assert!(fine.interior().len() > coarse.interior().len());
        for &i in coarse.interior() {
            let x = coarse.coords(i);
            let j = fine.nearest_node(&x).unwrap();
            prop_assert!(dist_inf(&fine.coords(j), &x) <= 1e-9);
            prop_assert!(fine.is_interior(j));
        }
    }

    #[test]
    fn level_set_masks_are_monotone_in_eps(seed in any::<u64>(), e1 in 0.05f64..0.6, de in 0.0f64..0.3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dom = random_domain(&mut rng, 2);
        let g = Arc::new(build_grid(&dom, 33, &|_| 0.0).unwrap());
        let (a, b) = (rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0));
        let usub = ScalarField::from_fn(g.clone(), |x| 1.0 - a * x[0] * x[0] - b * x[1] * x[1]);
        let (Ok(low), Ok(high)) = (level_set_domain(&usub, e1), level_set_domain(&usub, e1 + de)) else {
            return Ok(());
        };
        for (ml, mh) in low.mask.iter().zip(&high.mask) {
            prop_assert!(!mh || *ml);
        }
    }

    #[test]
    fn binary_dump_round_trips(n in 2usize..=3, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dom = random_domain(&mut rng, n);
        let g = Arc::new(build_grid(&dom, 9, &|_| 0.0).unwrap());
        let vals: Vec<f64> = (0..g.node_count()).map(|_| rng.gen_range(-1e3..1e3)).collect();
        let mut f = ScalarField::from_fn(g.clone(), |_| 0.0);
        f.values_mut().copy_from_slice(&vals);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.bin");
        f.write_binary(&p).unwrap();
        let back = ScalarField::read_binary(g.clone(), &p).unwrap();
        for (x, y) in f.values().iter().zip(back.values()) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}

fn dist_inf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn hessian_stencil_is_second_order() {
    let f = |x: &[f64]| (1.3 * x[0]).sin() * (0.7 * x[1]).exp();
    let d2 = |x: &[f64]| {
        let (s, c, e) = ((1.3 * x[0]).sin(), (1.3 * x[0]).cos(), (0.7 * x[1]).exp());
        [-1.69 * s * e, 0.49 * s * e, 0.91 * c * e]
    };
    let errs: Vec<f64> = [17, 33, 65, 129].iter().map(|&r| max_hessian_error(r, f, d2)).collect();
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((1.8..=2.2).contains(&order), "order {order} from {errs:?}");
    }
}
