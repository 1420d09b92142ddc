//! Grids, subsolutions and initial guesses, continuation in ε, barriers and
//! comparison checks.

use std::sync::Arc;

use super::newton::newton_solve;
use super::operator::{kind_matrix, residual};
use super::{EquationKind, ProblemSpec, RhsMode, SolveResult, SolverConfig};
use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::graphgeom::delta;
use crate::grid::{
    build_grid_with, dist, sublevel_grid_continuous, BoundaryMode, DomainDescriptor, Grid, ScalarField,
};
use crate::symmfunc::{self, binomial, SymMatrix};

/// Nodal Dirichlet data only matches the `3ⁿ` stencil when the boundary
/// nodes lie on the boundary.
fn check_boundary_mode(spec: &ProblemSpec, config: &SolverConfig) -> Result<()> {
    let curved = spec.kind == EquationKind::Hyperbolic || !matches!(spec.dom, DomainDescriptor::Rectangle { .. });
    if config.boundary_mode == BoundaryMode::Nodal && curved {
        return Err(Error::arg(
            "boundary_mode = nodal needs a rectangle domain; use extrapolated for curved boundaries",
        ));
    }
    Ok(())
}

/// Grid for the Euclidean kinds, boundary data `φ`.
pub fn euclidean_grid(spec: &ProblemSpec, config: &SolverConfig) -> Result<Arc<Grid>> {
    check_boundary_mode(spec, config)?;
    let phi = |x: &[f64]| spec.phi.eval_or_nan(x, 0.0);
    Ok(Arc::new(build_grid_with(&spec.dom, config.resolution, &phi, config.boundary_mode)?))
}

/// Grid of `{usub > eps}` inside the domain box, boundary value `eps`.
pub fn hyperbolic_grid(spec: &ProblemSpec, config: &SolverConfig, eps: f64) -> Result<Arc<Grid>> {
    check_boundary_mode(spec, config)?;
    let usub = spec.usub.as_ref().ok_or_else(|| Error::arg("hyperbolic grid needs usub"))?;
    let level = |x: &[f64]| usub.eval_or_nan(x, 0.0);
    Ok(Arc::new(sublevel_grid_continuous(&spec.dom, config.resolution, &level, eps, config.boundary_mode)?))
}

/// Sup of `f(x, u0(x))` over interior nodes; errors on negative values.
fn f_bound(spec: &ProblemSpec, grid: &Grid, u0: impl Fn(&[f64]) -> f64) -> Result<f64> {
    let mut sup: f64 = 0.0;
    for &i in grid.interior() {
        let x = grid.coords(i);
        let v = spec.eval_f(&x, u0(&x))?;
        if v < -1e-12 {
            return Err(Error::arg(format!("f is negative ({v:.3e}) at {x:?}")));
        }
        sup = sup.max(v);
    }
    Ok(sup)
}

/// Explicit subsolution for affine boundary data.
#[derive(Clone, Debug)]
pub struct Subsolution {
    pub field: ScalarField,
    /// Hessian kind: the coefficient `A` of `A(|x−x₀|²−R₀²)/2`.
    /// Curvature kind: the inverse radius `1/R` of the spherical cap.
    pub coefficient: f64,
    pub center: Vec<f64>,
    pub radius: f64,
}

/// `u̲ = φ + A(|x−x₀|² − R₀²)/2` (Hessian kind) with `C(n,k)Aᵏ = f_bound + 1`,
/// or `u̲ = φ + √(R²−R₀²) − √(R²−|x−x₀|²)` (curvature kind) with the largest
/// `R` whose sampled `σ_k(κ)` clears the target, where `(x₀, R₀)` is the
/// circumsphere of the domain. Sampled at every active node.
pub fn subsolution_quadratic(spec: &ProblemSpec, grid: &Arc<Grid>, f_bound: f64) -> Result<Subsolution> {
    let n = spec.n;
    let k = spec.k;
    let affine = spec
        .phi
        .affine_form(n)
        .ok_or_else(|| Error::pre("subsolution_quadratic needs affine boundary data"))?;
    let (x0, r0) = spec.dom.circumsphere();
    let phi = move |x: &[f64]| affine.0 + x.iter().zip(&affine.1).map(|(a, b)| a * b).sum::<f64>();
    match spec.kind {
        EquationKind::Hessian => {
            let a = ((f_bound + 1.0) / binomial(n, k)).powf(1.0 / k as f64);
            if a > 1e6 {
                return Err(Error::domain(format!("subsolution coefficient {a:.3e} exceeds 1e6")));
            }
            let field = ScalarField::from_fn(grid.clone(), |x| {
                let d2 = dist(x, &x0).powi(2);
                phi(x) + 0.5 * a * (d2 - r0 * r0)
            });
            Ok(Subsolution { field, coefficient: a, center: x0, radius: r0 })
        }
        EquationKind::Curvature => {
            let active: Vec<Vec<f64>> =
                (0..grid.node_count()).filter(|&i| grid.is_active(i)).map(|i| grid.coords(i)).collect();
            let reach = active.iter().map(|x| dist(x, &x0)).fold(r0, f64::max);
            let grad_phi = phi_gradient(&phi, n);
            let min_sigma = |r: f64| -> Result<f64> {
                let mut m = f64::INFINITY;
                for x in &active {
                    let (du, d2u) = cap_derivatives(x, &x0, r, &grad_phi);
                    let mat = kind_matrix(EquationKind::Curvature, 0.0, &du, &d2u).expect("defined");
                    m = m.min(symmfunc::matrix_elementary(&mat, k)?[k]);
                }
                Ok(m)
            };
            let r_min = reach * (1.0 + 1e-3);
            let s_max = min_sigma(r_min)?;
            let target = if s_max >= f_bound + 1.0 {
                f_bound + 1.0
            } else if s_max > f_bound * (1.0 + 1e-6) && s_max > 0.0 {
                0.5 * (f_bound + s_max)
            } else {
                return Err(Error::domain(format!(
                    "no spherical subsolution reaches sup f = {f_bound:.3e} (best sigma_k {s_max:.3e})"
                )));
            };
            // largest R with min σ_k ≥ target, by bisection in log R
            let (mut lo, mut hi) = (r_min.ln(), (r_min * 1e6).ln());
            if min_sigma(hi.exp())? >= target {
                lo = hi;
            } else {
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if min_sigma(mid.exp())? >= target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
            }
            let r = lo.exp();
            let lift = (r * r - r0 * r0).sqrt();
            let field = ScalarField::from_fn(grid.clone(), |x| {
                phi(x) + lift - (r * r - dist(x, &x0).powi(2)).sqrt()
            });
            Ok(Subsolution { field, coefficient: 1.0 / r, center: x0, radius: r0 })
        }
        EquationKind::Hyperbolic => Err(Error::arg("the hyperbolic kind takes its subsolution from usub")),
    }
}

fn phi_gradient(phi: &dyn Fn(&[f64]) -> f64, n: usize) -> Vec<f64> {
    let zero = vec![0.0; n];
    let c = phi(&zero);
    (0..n)
        .map(|a| {
            let mut e = zero.clone();
            e[a] = 1.0;
            phi(&e) - c
        })
        .collect()
}

/// Gradient and Hessian of `g·x − √(R² − |x−x₀|²)`.
fn cap_derivatives(x: &[f64], x0: &[f64], r: f64, g: &[f64]) -> (Vec<f64>, SymMatrix) {
    let y: Vec<f64> = x.iter().zip(x0).map(|(a, b)| a - b).collect();
    let s = (r * r - y.iter().map(|v| v * v).sum::<f64>()).sqrt();
    let du = y.iter().zip(g).map(|(yi, gi)| gi + yi / s).collect();
    let d2u = SymMatrix::from_upper_fn(x.len(), |i, j| delta(i, j) / s + y[i] * y[j] / (s * s * s));
    (du, d2u)
}

/// Default cut-off threshold `0.5·(min σ_k(u̲))^{1/(k−1)}`, floored at `1e-3`.
fn estimate_theta0(spec: &ProblemSpec, sub: &ScalarField) -> Result<f64> {
    let r = residual(spec, sub, RhsMode::Constant(0.0))?;
    let min_sigma = sub
        .grid()
        .interior()
        .iter()
        .map(|&i| r.field.get(i))
        .fold(f64::INFINITY, f64::min);
    let t = if min_sigma > 0.0 { 0.5 * min_sigma.powf(1.0 / (spec.k - 1) as f64) } else { 0.0 };
    Ok(t.max(1e-3))
}

/// Adds `μ(|x−x₀|² − R₀²)/2` with the smallest `μ ∈ {0, 2⁻⁶, 2⁻⁵, …}` that
/// makes the field strictly admissible for the problem's kind.
fn clamp_admissible(spec: &ProblemSpec, base: &ScalarField) -> Result<ScalarField> {
    let (x0, r0) = spec.dom.circumsphere();
    let grid = base.grid_arc().clone();
    let bowl = ScalarField::from_fn(grid.clone(), |x| 0.5 * (dist(x, &x0).powi(2) - r0 * r0));
    let mut mu = 0.0;
    let mut exp = -6;
    loop {
        let values = base
            .values()
            .iter()
            .zip(bowl.values())
            .map(|(b, q)| if b.is_nan() { f64::NAN } else { b + mu * q })
            .collect();
        let mut cand = ScalarField::new(grid.clone(), values)?;
        cand.apply_boundary();
        if residual(spec, &cand, RhsMode::Constant(0.0))?.admissible() {
            return Ok(cand);
        }
        if exp > 30 {
            return Err(Error::domain("no admissible initial guess found"));
        }
        mu = 2f64.powi(exp);
        exp += 1;
    }
}

/// Strictly admissible starting field for the Euclidean kinds.
///
/// Affine `φ`: the explicit subsolution. Otherwise the solution of
/// `Δu = n·((f_bound+1)/C(n,k))^{1/k}` with the same boundary data. Either is
/// then convexified by [`clamp_admissible`] if needed.
pub fn initial_guess(spec: &ProblemSpec, config: &SolverConfig, grid: &Arc<Grid>, f_bound: f64) -> Result<ScalarField> {
    if spec.kind == EquationKind::Hyperbolic {
        return Err(Error::arg("the hyperbolic kind starts from usub on each regularized domain"));
    }
    let base = if spec.phi.affine_form(spec.n).is_some() {
        subsolution_quadratic(spec, grid, f_bound)?.field
    } else {
        poisson_start(spec, config, grid, f_bound)?
    };
    clamp_admissible(spec, &base)
}

fn poisson_start(spec: &ProblemSpec, config: &SolverConfig, grid: &Arc<Grid>, f_bound: f64) -> Result<ScalarField> {
    let n = spec.n;
    let a = ((f_bound + 1.0) / binomial(n, spec.k)).powf(1.0 / spec.k as f64);
    let lap = ProblemSpec {
        k: 1,
        kind: EquationKind::Hessian,
        f: Expression::constant(n as f64 * a),
        usub: None,
        ..spec.clone()
    };
    let phi = ScalarField::from_fn(grid.clone(), |x| spec.phi.eval_or_nan(x, 0.0));
    if grid.interior().iter().any(|&i| !phi.get(i).is_finite()) {
        return Err(Error::domain("phi is undefined at an interior node"));
    }
    // start: φ plus a bowl whose Laplacian dominates that of φ
    let mut start = phi.clone();
    for v in start.values_mut().iter_mut() {
        if v.is_nan() {
            *v = 0.0;
        }
    }
    let lap_phi = residual(&lap, &start, RhsMode::Constant(0.0))?;
    let worst = grid.interior().iter().map(|&i| lap_phi.field.get(i)).fold(f64::INFINITY, f64::min);
    let mu = a + (-worst).max(0.0) / n as f64;
    let (x0, r0) = spec.dom.circumsphere();
    let start = ScalarField::from_fn(grid.clone(), |x| {
        spec.phi.eval_or_nan(x, 0.0) + 0.5 * mu * (dist(x, &x0).powi(2) - r0 * r0)
    })
    .map(|v| if v.is_finite() { v } else { 0.0 });
    let cfg = SolverConfig { max_newton_iters: 5, ..config.clone() };
    Ok(newton_solve(&lap, &cfg, RhsMode::Exact, &start)?.u)
}

/// `ε + s(usub − ε)` on the `ε`-grid for the largest `s ∈ {1, 0.9, 0.75,
/// 0.5, 0.25}` that is strictly admissible. Every candidate equals `ε` on
/// `{usub = ε}`.
fn hyperbolic_start(spec: &ProblemSpec, grid: &Arc<Grid>, eps: f64) -> Result<ScalarField> {
    let usub = spec.usub.as_ref().ok_or_else(|| Error::arg("hyperbolic kind needs usub"))?;
    let base: Vec<f64> = (0..grid.node_count())
        .map(|i| if grid.is_active(i) { usub.eval_or_nan(&grid.coords(i), 0.0) } else { f64::NAN })
        .collect();
    for s in [1.0, 0.9, 0.75, 0.5, 0.25] {
        let values = base
            .iter()
            .enumerate()
            .map(|(i, b)| match (grid.is_active(i), b.is_finite()) {
                (false, _) => f64::NAN,
                (true, true) => eps + s * (b - eps),
                (true, false) => eps,
            })
            .collect();
        let mut cand = ScalarField::new(grid.clone(), values)?;
        cand.apply_boundary();
        if residual(spec, &cand, RhsMode::Constant(0.0))?.admissible() {
            return Ok(cand);
        }
    }
    Err(Error::pre("no strictly admissible start of the form eps + s(usub - eps) on the regularized domain"))
}

/// Results of a continuation in `ε`.
#[derive(Clone, Debug)]
pub struct ContinuationRun {
    /// Subsolution on the Euclidean grid (absent for the hyperbolic kind).
    pub subsolution: Option<ScalarField>,
    /// Cut-off threshold used (Euclidean kinds).
    pub theta0: Option<f64>,
    /// `(ε, result)` for every converged step, in schedule order.
    pub steps: Vec<(f64, SolveResult)>,
    /// `(ε, reason)` of the step that stopped the schedule early.
    pub aborted: Option<(f64, String)>,
}

impl ContinuationRun {
    pub fn completed(&self) -> bool {
        self.aborted.is_none()
    }
}

/// Solves the regularized problems along the ε schedule, warm-starting each
/// from the previous solution.
///
/// Euclidean kinds regularize the right-hand side (`f_ε`). The hyperbolic
/// kind solves with the exact `f` on `{usub > ε}` with `u = ε` on its boundary.
pub fn continuation_solve(spec: &ProblemSpec, config: &SolverConfig) -> Result<ContinuationRun> {
    spec.validate()?;
    config.validate()?;
    if spec.kind == EquationKind::Hyperbolic {
        return hyperbolic_continuation(spec, config);
    }
    if spec.k < 2 {
        return Err(Error::arg("continuation needs k >= 2"));
    }
    let grid = euclidean_grid(spec, config)?;
    let bound = f_bound(spec, &grid, |x| spec.phi.eval_or_nan(x, 0.0))?;
    let sub = if spec.phi.affine_form(spec.n).is_some() {
        Some(subsolution_quadratic(spec, &grid, bound)?.field)
    } else {
        None
    };
    let start = initial_guess(spec, config, &grid, bound)?;
    let theta0 = match config.theta0 {
        Some(t) => t,
        None => estimate_theta0(spec, sub.as_ref().unwrap_or(&start))?,
    };
    let mut steps: Vec<(f64, SolveResult)> = Vec::new();
    let mut aborted = None;
    for &eps in &config.eps_schedule {
        let warm = steps.last().map_or(&start, |s| &s.1.u);
        match newton_solve(spec, config, RhsMode::Regularized { eps, theta0 }, warm) {
            Ok(r) => steps.push((eps, r)),
            Err(e) if !steps.is_empty() => {
                aborted = Some((eps, e.to_string()));
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(ContinuationRun { subsolution: sub, theta0: Some(theta0), steps, aborted })
}

fn hyperbolic_continuation(spec: &ProblemSpec, config: &SolverConfig) -> Result<ContinuationRun> {
    let usub = spec.usub.as_ref().expect("validated");
    let mut steps: Vec<(f64, SolveResult)> = Vec::new();
    let mut aborted = None;
    for &eps in &config.eps_schedule {
        let attempt = (|| -> Result<SolveResult> {
            let grid = hyperbolic_grid(spec, config, eps)?;
            f_bound(spec, &grid, |x| usub.eval_or_nan(x, 0.0))?;
            let fresh = hyperbolic_start(spec, &grid, eps)?;
            let warm = match steps.last() {
                Some((_, prev)) => transfer(&prev.u, &fresh, spec).unwrap_or(fresh),
                None => fresh,
            };
            newton_solve(spec, config, RhsMode::Exact, &warm)
        })();
        match attempt {
            Ok(r) => steps.push((eps, r)),
            Err(e) if !steps.is_empty() => {
                aborted = Some((eps, e.to_string()));
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(ContinuationRun { subsolution: None, theta0: None, steps, aborted })
}

/// Previous interior values over `fresh`, if the result stays admissible.
fn transfer(prev: &ScalarField, fresh: &ScalarField, spec: &ProblemSpec) -> Option<ScalarField> {
    let mut out = fresh.clone();
    let pg = prev.grid();
    {
        let v = out.values_mut();
        for &i in pg.interior() {
            if fresh.grid().is_interior(i) {
                v[i] = prev.get(i);
            }
        }
    }
    out.apply_boundary();
    residual(spec, &out, RhsMode::Constant(0.0)).ok()?.admissible().then_some(out)
}

/// Solution of the kind's equation with constant right-hand side `delta`,
/// approximating the homogeneous problem `σ_k = 0`.
///
/// Euclidean kinds use the grid of [`euclidean_grid`]; the hyperbolic kind
/// uses the domain of the last schedule entry.
pub fn homogeneous_barrier(spec: &ProblemSpec, config: &SolverConfig, delta: f64) -> Result<ScalarField> {
    spec.validate()?;
    config.validate()?;
    if !(delta > 0.0) {
        return Err(Error::arg("delta must be positive"));
    }
    let start = match spec.kind {
        EquationKind::Hyperbolic => {
            let eps = *config.eps_schedule.last().expect("validated");
            hyperbolic_start(spec, &hyperbolic_grid(spec, config, eps)?, eps)?
        }
        _ => initial_guess(spec, config, &euclidean_grid(spec, config)?, delta)?,
    };
    Ok(newton_solve(spec, config, RhsMode::Constant(delta), &start)?.u)
}

/// `max(0, sup(lower − mid), sup(mid − upper))` over the interior nodes.
pub fn comparison_check(lower: &ScalarField, mid: &ScalarField, upper: &ScalarField) -> Result<f64> {
    lower.check_same_grid(mid)?;
    mid.check_same_grid(upper)?;
    let mut worst: f64 = 0.0;
    for &i in mid.grid().interior() {
        worst = worst.max(lower.get(i) - mid.get(i)).max(mid.get(i) - upper.get(i));
    }
    Ok(worst)
}
