//! Monitors for the interior estimates: weighted curvature sizes along an ε
//! sweep, the gradient bound for nonnegative `C^{1,1}` functions, and the
//! linear growth of `ū − u` away from the boundary.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{fmt17, gradient_central, hessian_central, ScalarField};
use crate::symmfunc::{self, SymMatrix};

/// Allowed amount by which `u` may exceed `ū`.
pub const ORDER_TOL: f64 = 1e-8;

pub const DEFAULT_HYPERBOLIC_ALPHA: f64 = 4.0;

/// `2` for `k ≤ 2`, else `k − 1`.
pub fn default_alpha_hessian(k: usize) -> f64 {
    if k <= 2 {
        2.0
    } else {
        (k - 1) as f64
    }
}

/// `max(3, k − 1)`.
pub fn default_alpha_curvature(k: usize) -> f64 {
    (k.saturating_sub(1) as f64).max(3.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PogorelovRecord {
    /// Regularization parameter of the solve (`NaN` until set).
    pub eps: f64,
    pub alpha: f64,
    /// `sup weight^α · size` over the interior.
    pub quantity: f64,
    /// Node attaining the sup.
    pub argmax: Option<usize>,
}

impl PogorelovRecord {
    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }
}

fn check_order(ubar: &ScalarField, u: &ScalarField) -> Result<()> {
    ubar.check_same_grid(u)?;
    for &i in u.grid().interior() {
        let gap = u.get(i) - ubar.get(i);
        if gap > ORDER_TOL {
            return Err(Error::pre(format!(
                "ubar < u by {gap:.3e} at {:?}",
                u.grid().coords(i)
            )));
        }
    }
    Ok(())
}

/// `sup weight_q^α · size_q` over interior index `q`.
fn weighted_sup(weights: &[f64], sizes: &[f64], alpha: f64, interior: &[usize]) -> (f64, Option<usize>) {
    let mut best = 0.0;
    let mut arg = None;
    for (q, (w, s)) in weights.iter().zip(sizes).enumerate() {
        let v = w.max(0.0).powf(alpha) * s;
        if v > best || arg.is_none() {
            best = v.max(best);
            arg = Some(interior[q]);
        }
    }
    (best, arg)
}

fn record(
    ubar: &ScalarField,
    u: &ScalarField,
    alpha: f64,
    size: impl Fn(usize) -> Result<f64> + Sync,
) -> Result<PogorelovRecord> {
    check_order(ubar, u)?;
    if !(alpha >= 0.0) {
        return Err(Error::arg("alpha must be nonnegative"));
    }
    let interior = u.grid().interior();
    let sizes: Vec<f64> = (0..interior.len()).into_par_iter().map(&size).collect::<Result<_>>()?;
    let weights: Vec<f64> = interior.iter().map(|&i| ubar.get(i) - u.get(i)).collect();
    let (quantity, argmax) = weighted_sup(&weights, &sizes, alpha, interior);
    Ok(PogorelovRecord { eps: f64::NAN, alpha, quantity, argmax })
}

/// `sup (ū−u)^α · max(λ_max(D²u), 0)`.
pub fn pogorelov_hessian(
    u: &ScalarField,
    ubar: &ScalarField,
    k: usize,
    alpha_override: Option<f64>,
) -> Result<PogorelovRecord> {
    let alpha = alpha_override.unwrap_or_else(|| default_alpha_hessian(k));
    let hess = hessian_central(u);
    record(ubar, u, alpha, |q| Ok(symmfunc::eigenvalues(&hess[q])?.max().max(0.0)))
}

/// `sup (ū−u)^α · |D²u/w|_F`.
pub fn pogorelov_curvature(
    u: &ScalarField,
    ubar: &ScalarField,
    k: usize,
    alpha_override: Option<f64>,
) -> Result<PogorelovRecord> {
    let alpha = alpha_override.unwrap_or_else(|| default_alpha_curvature(k));
    let hess = hessian_central(u);
    let grad = gradient_central(u);
    record(ubar, u, alpha, |q| {
        let w = (1.0 + grad[q].iter().map(|g| g * g).sum::<f64>()).sqrt();
        Ok(hess[q].frobenius_norm() / w)
    })
}

/// `sup max(ū² − u² − c, 0)^α · |h̃|_F` with
/// `h̃ = (I + DuDuᵀ + u D²u)/(u² w)`.
pub fn pogorelov_hyperbolic(u: &ScalarField, ubar: &ScalarField, c: f64, alpha: f64) -> Result<PogorelovRecord> {
    check_order(ubar, u)?;
    if !(alpha >= 0.0) {
        return Err(Error::arg("alpha must be nonnegative"));
    }
    let interior = u.grid().interior();
    if let Some(&i) = interior.iter().find(|&&i| !(u.get(i) > 0.0)) {
        return Err(Error::domain(format!("u must be positive, got {} at node {i}", u.get(i))));
    }
    let hess = hessian_central(u);
    let grad = gradient_central(u);
    let sizes: Vec<f64> = (0..interior.len())
        .into_par_iter()
        .map(|q| {
            let uq = u.get(interior[q]);
            let g = &grad[q];
            let w = (1.0 + g.iter().map(|v| v * v).sum::<f64>()).sqrt();
            let ht = SymMatrix::from_upper_fn(g.len(), |a, b| {
                let d = if a == b { 1.0 } else { 0.0 };
                (d + g[a] * g[b] + uq * hess[q].get(a, b)) / (uq * uq * w)
            });
            ht.frobenius_norm()
        })
        .collect();
    let weights: Vec<f64> = interior
        .iter()
        .map(|&i| ubar.get(i).powi(2) - u.get(i).powi(2) - c)
        .collect();
    let (quantity, argmax) = weighted_sup(&weights, &sizes, alpha, interior);
    Ok(PogorelovRecord { eps: f64::NAN, alpha, quantity, argmax })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockiReport {
    /// `max |Dψ| − max{|Dψ|/d, 1 + Λ}·√ψ` over the interior.
    pub violation: f64,
    /// `10·h·(1 + Λ)`.
    pub slack: f64,
    /// `Λ = max(sup λ_max(D²ψ), 0)`.
    pub lambda: f64,
}

impl BlockiReport {
    pub fn holds(&self) -> bool {
        self.violation <= self.slack
    }
}

/// Gradient bound `|Dψ| ≤ max{|Dψ|/d, 1 + sup λ_max(D²ψ)}·√ψ` for
/// `ψ ≥ 0`, checked with central differences.
pub fn blocki_check(psi: &ScalarField, dist: &ScalarField) -> Result<BlockiReport> {
    psi.check_same_grid(dist)?;
    let grid = psi.grid();
    for &i in grid.interior() {
        if psi.get(i) < -1e-12 {
            return Err(Error::pre(format!("psi is negative ({:.3e}) at node {i}", psi.get(i))));
        }
    }
    let hess = hessian_central(psi);
    let grad = gradient_central(psi);
    let mut lambda: f64 = 0.0;
    for hq in &hess {
        lambda = lambda.max(symmfunc::eigenvalues(hq)?.max());
    }
    let mut violation = f64::NEG_INFINITY;
    for (q, &i) in grid.interior().iter().enumerate() {
        let g = grad[q].iter().map(|v| v * v).sum::<f64>().sqrt();
        let root = psi.get(i).max(0.0).sqrt();
        let bound = if root == 0.0 {
            0.0
        } else {
            let d = dist.get(i);
            let ratio = if d > 0.0 { g / d } else { f64::INFINITY };
            ratio.max(1.0 + lambda) * root
        };
        violation = violation.max(g - bound);
    }
    Ok(BlockiReport { violation, slack: 10.0 * grid.spacing() * (1.0 + lambda), lambda })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistanceFit {
    /// `sup (ū − u)/max(d, h)` over the interior.
    pub b: f64,
    /// `sup |D(ū − u)|` from central differences.
    pub c1_proxy: f64,
}

impl DistanceFit {
    pub fn within_proxy(&self) -> bool {
        self.b.is_finite() && self.b <= 2.0 * self.c1_proxy + 1e-12
    }
}

/// Fits `B` in `0 ≤ ū − u ≤ B d`.
pub fn distance_comparison(ubar: &ScalarField, u: &ScalarField, dist: &ScalarField) -> Result<DistanceFit> {
    check_order(ubar, u)?;
    ubar.check_same_grid(dist)?;
    let grid = u.grid();
    let h = grid.spacing();
    let values = ubar
        .values()
        .iter()
        .zip(u.values())
        .map(|(a, b)| a - b)
        .collect();
    let diff = ScalarField::new(u.grid_arc().clone(), values)?;
    let mut b: f64 = 0.0;
    for &i in grid.interior() {
        b = b.max(diff.get(i) / dist.get(i).max(h));
    }
    let c1_proxy = gradient_central(&diff)
        .iter()
        .map(|g| g.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    Ok(DistanceFit { b, c1_proxy })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    /// Ordered by decreasing `ε`.
    pub records: Vec<PogorelovRecord>,
    pub bounded: bool,
    /// Max quantity over the quantity at the largest `ε`.
    pub ratio: f64,
    pub factor: f64,
}

pub const DEFAULT_SWEEP_FACTOR: f64 = 2.0;

/// Bounded iff `max q ≤ factor · q(ε_max)` and the last three quantities are
/// within `factor` of each other.
pub fn sweep_verdict(records: &[PogorelovRecord], factor: f64) -> Result<SweepReport> {
    if records.len() < 3 {
        return Err(Error::arg(format!("sweep_verdict needs at least 3 records, got {}", records.len())));
    }
    if !(factor >= 1.0) {
        return Err(Error::arg("factor must be at least 1"));
    }
    if records.windows(2).any(|w| w[1].eps > w[0].eps) {
        return Err(Error::arg("records must be ordered by decreasing eps"));
    }
    let first = records[0].quantity;
    let max = records.iter().map(|r| r.quantity).fold(0.0, f64::max);
    let tail: Vec<f64> = records[records.len() - 3..].iter().map(|r| r.quantity).collect();
    let tail_max = tail.iter().copied().fold(0.0, f64::max);
    let tail_min = tail.iter().copied().fold(f64::INFINITY, f64::min);
    let bounded = max <= factor * first && tail_max <= factor * tail_min;
    let ratio = if first > 0.0 {
        max / first
    } else if max == 0.0 {
        1.0
    } else {
        f64::INFINITY
    };
    Ok(SweepReport { records: records.to_vec(), bounded, ratio, factor })
}

impl SweepReport {
    pub fn verdict(&self) -> &'static str {
        if self.bounded {
            "bounded"
        } else {
            "not bounded"
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "eps,alpha,quantity,argmax")?;
        for r in &self.records {
            let arg = r.argmax.map(|a| a.to_string()).unwrap_or_default();
            writeln!(out, "{},{},{},{}", fmt17(r.eps), fmt17(r.alpha), fmt17(r.quantity), arg)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Human-readable summary.
    pub fn verdict_block(&self) -> String {
        let mut s = String::new();
        s.push_str("== Pogorelov sweep ==\n");
        for r in &self.records {
            s.push_str(&format!("  eps {:>10.3e}  alpha {:>4}  quantity {:.6e}\n", r.eps, r.alpha, r.quantity));
        }
        s.push_str(&format!("  ratio  {:.4}\n  factor {}\n  verdict: {}\n", self.ratio, self.factor, self.verdict()));
        s
    }
}
