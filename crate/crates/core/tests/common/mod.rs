//! Independent oracles and samplers shared by the integration tests.
#![allow(dead_code)]

use dhl_core::symmfunc::SymMatrix;
use rand::Rng;

/// `σ_k` by summing products over all `k`-subsets.
pub fn sigma_subsets(lam: &[f64], k: usize) -> f64 {
    let n = lam.len();
    if k == 0 {
        return 1.0;
    }
    let mut total = 0.0;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize == k {
            total += (0..n).filter(|i| mask & (1 << i) != 0).map(|i| lam[i]).product::<f64>();
        }
    }
    total
}

fn det(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    if n == 0 {
        return 1.0;
    }
    let mut a = m.to_vec();
    let mut d = 1.0;
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        if a[p][c] == 0.0 {
            return 0.0;
        }
        if p != c {
            a.swap(p, c);
            d = -d;
        }
        d *= a[c][c];
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for j in c..n {
                a[r][j] -= f * a[c][j];
            }
        }
    }
    d
}

/// `σ_k` of a general square matrix as the sum of its `k×k` principal minors.
pub fn sigma_minors(a: &[Vec<f64>], k: usize) -> f64 {
    let n = a.len();
    let mut total = 0.0;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize == k {
            let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let sub: Vec<Vec<f64>> = idx.iter().map(|&i| idx.iter().map(|&j| a[i][j]).collect()).collect();
            total += det(&sub);
        }
    }
    total
}

pub fn dense(m: &SymMatrix) -> Vec<Vec<f64>> {
    let n = m.dim();
    (0..n).map(|i| (0..n).map(|j| m.get(i, j)).collect()).collect()
}

pub fn in_cone(lam: &[f64], k: usize) -> bool {
    (1..=k).all(|m| sigma_subsets(lam, m) > 0.0)
}

/// Uniform in `[-1, 3]ⁿ` conditioned on `σ_m > 10⁻³` for `m ≤ k`.
pub fn sample_cone<R: Rng>(rng: &mut R, n: usize, k: usize) -> Vec<f64> {
    loop {
        let lam: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..3.0)).collect();
        if (1..=k).all(|m| sigma_subsets(&lam, m) > 1e-3) {
            return lam;
        }
    }
}

/// Spectrum in the closure of `Γ_k`, including points on its boundary.
pub fn sample_closed_cone<R: Rng>(rng: &mut R, n: usize, k: usize) -> Vec<f64> {
    let lam = sample_cone(rng, n, k);
    if rng.gen_bool(0.3) {
        // Stretch the negative entries until the margin is nearly exhausted.
        let mut t = 1.0;
        let mut best = lam.clone();
        for _ in 0..40 {
            let cand: Vec<f64> = lam.iter().map(|v| if *v < 0.0 { v * (1.0 + t) } else { *v }).collect();
            if (1..=k).all(|m| sigma_subsets(&cand, m) >= 0.0) {
                best = cand;
                t *= 1.5;
            } else {
                t *= 0.5;
            }
        }
        return best;
    }
    lam
}

/// Haar-ish random orthogonal matrix (row-major) by Gram–Schmidt.
pub fn random_rotation<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut q: Vec<Vec<f64>> = Vec::new();
    while q.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for b in &q {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= d * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-3 {
            q.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    q.concat()
}

pub fn random_sym<R: Rng>(rng: &mut R, n: usize, scale: f64) -> SymMatrix {
    SymMatrix::from_upper_fn(n, |_, _| rng.gen_range(-scale..scale))
}

/// `Q diag(λ) Qᵀ`.
pub fn with_spectrum<R: Rng>(rng: &mut R, lam: &[f64]) -> SymMatrix {
    let q = random_rotation(rng, lam.len());
    SymMatrix::diag(lam).rotate(&q)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

pub fn rotate_vec(q: &[f64], v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n).map(|i| (0..n).map(|j| q[i * n + j] * v[j]).sum()).collect()
}

/// Reference AST for the expression grammar, independent of the crate's.
#[derive(Clone, Debug)]
pub enum RefExpr {
    Num(f64),
    X(usize),
    U,
    Neg(Box<RefExpr>),
    Bin(char, Box<RefExpr>, Box<RefExpr>),
    Call(&'static str, Vec<RefExpr>),
}

impl RefExpr {
    /// Fully parenthesized source text.
    pub fn text(&self) -> String {
        match self {
            RefExpr::Num(v) => format!("{v:?}"),
            RefExpr::X(i) => format!("x{}", i + 1),
            RefExpr::U => "u".into(),
            RefExpr::Neg(a) => format!("(-{})", a.text()),
            RefExpr::Bin(op, a, b) => format!("({} {op} {})", a.text(), b.text()),
            RefExpr::Call(f, args) => {
                format!("{f}({})", args.iter().map(|a| a.text()).collect::<Vec<_>>().join(", "))
            }
        }
    }

    /// `None` as soon as any intermediate value is not finite.
    pub fn eval(&self, x: &[f64], u: f64) -> Option<f64> {
        let v = match self {
            RefExpr::Num(v) => *v,
            RefExpr::X(i) => x[*i],
            RefExpr::U => u,
            RefExpr::Neg(a) => -a.eval(x, u)?,
            RefExpr::Bin(op, a, b) => {
                let (p, q) = (a.eval(x, u)?, b.eval(x, u)?);
                match op {
                    '+' => p + q,
                    '-' => p - q,
                    '*' => p * q,
                    '/' => p / q,
                    _ => p.powf(q),
                }
            }
            RefExpr::Call(f, args) => {
                let v = args.iter().map(|a| a.eval(x, u)).collect::<Option<Vec<f64>>>()?;
                match *f {
                    "sqrt" => v[0].sqrt(),
                    "abs" => v[0].abs(),
                    "exp" => v[0].exp(),
                    "sin" => v[0].sin(),
                    "cos" => v[0].cos(),
                    "max" => v[0].max(v[1]),
                    "min" => v[0].min(v[1]),
                    _ => v[0].powf(v[1]),
                }
            }
        };
        v.is_finite().then_some(v)
    }
}
