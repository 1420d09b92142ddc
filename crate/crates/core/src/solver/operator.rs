//! Pointwise discrete operator, residual and Jacobian rows.

use rayon::prelude::*;

use super::{EquationKind, Linearization, ProblemSpec, RhsMode};
use crate::error::{Error, Result};
use crate::graphgeom::{frame_from_gradient, Jet2};
use crate::grid::ScalarField;
use crate::hypgeom::hyp_matrix;
use crate::symmfunc::{self, newton_transform, SymMatrix};

/// The matrix whose spectrum enters `σ_k` for each kind; `None` where the
/// hyperbolic kind meets `u ≤ 0`.
pub(crate) fn kind_matrix(kind: EquationKind, u: f64, du: &[f64], d2u: &SymMatrix) -> Option<SymMatrix> {
    match kind {
        EquationKind::Hessian => Some(d2u.clone()),
        EquationKind::Curvature => {
            let fr = frame_from_gradient(du);
            Some(d2u.congruence(&fr.gamma_up).scale(1.0 / fr.w))
        }
        EquationKind::Hyperbolic => (u > 0.0).then(|| hyp_matrix(u, du, d2u)),
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct NodeValue {
    pub residual: f64,
    /// `min_{1≤m≤k} σ_m`, `-∞` where the matrix is undefined.
    pub margin: f64,
    pub rhs: f64,
}

fn sigmas(m: &SymMatrix, k: usize) -> Result<Vec<f64>> {
    symmfunc::matrix_elementary(m, k)
}

fn margin_of(e: &[f64]) -> f64 {
    e[1..].iter().copied().fold(f64::INFINITY, f64::min)
}

pub(crate) fn node_value(spec: &ProblemSpec, mode: RhsMode, x: &[f64], jet: &Jet2) -> Result<NodeValue> {
    let rhs = mode.apply(spec.eval_f(x, jet.u)?, spec.k);
    Ok(match kind_matrix(spec.kind, jet.u, &jet.du, &jet.d2u) {
        None => NodeValue { residual: f64::NAN, margin: f64::NEG_INFINITY, rhs },
        Some(m) => {
            let e = sigmas(&m, spec.k)?;
            NodeValue { residual: e[spec.k] - rhs, margin: margin_of(&e), rhs }
        }
    })
}

/// Nodewise residual over the interior together with admissibility data.
#[derive(Clone, Debug)]
pub struct Residual {
    /// `σ_k(·) − rhs` at interior nodes, `NaN` elsewhere.
    pub field: ScalarField,
    /// Interior nodes whose matrix is not strictly inside `Γ_k`.
    pub flagged: Vec<usize>,
    /// Minimum cone margin over the interior.
    pub margin: f64,
    /// Sup-norm of the residual (`∞` if any node is undefined).
    pub sup_norm: f64,
    /// Sup of `|rhs|` over the interior.
    pub rhs_sup: f64,
}

impl Residual {
    pub fn admissible(&self) -> bool {
        self.flagged.is_empty() && self.margin > 0.0
    }
}

pub fn residual(spec: &ProblemSpec, u: &ScalarField, mode: RhsMode) -> Result<Residual> {
    let grid = u.grid();
    if grid.dim() != spec.n {
        return Err(Error::arg("field dimension does not match the problem"));
    }
    let vals: Vec<NodeValue> = grid
        .interior()
        .par_iter()
        .enumerate()
        .map(|(q, &i)| node_value(spec, mode, &grid.coords(i), &u.jet(q)))
        .collect::<Result<_>>()?;
    let mut field = vec![f64::NAN; grid.node_count()];
    let mut flagged = Vec::new();
    let mut margin = f64::INFINITY;
    let mut sup_norm: f64 = 0.0;
    let mut rhs_sup: f64 = 0.0;
    for (v, &i) in vals.iter().zip(grid.interior()) {
        field[i] = v.residual;
        if !(v.margin > 0.0) {
            flagged.push(i);
        }
        margin = margin.min(v.margin);
        sup_norm = if v.residual.is_nan() { f64::INFINITY } else { sup_norm.max(v.residual.abs()) };
        rhs_sup = rhs_sup.max(v.rhs.abs());
    }
    Ok(Residual {
        field: ScalarField::from_raw(u.grid_arc().clone(), field),
        flagged,
        margin,
        sup_norm,
        rhs_sup,
    })
}

/// `σ_k` of the kind's matrix, or NaN where undefined.
fn sigma_k_at(kind: EquationKind, k: usize, u: f64, du: &[f64], d2u: &SymMatrix) -> Result<f64> {
    match kind_matrix(kind, u, du, d2u) {
        None => Ok(f64::NAN),
        Some(m) => Ok(sigmas(&m, k)?[k]),
    }
}

/// Linearization of the residual at interior node `i` (with interior index
/// `q`), as `(node, coefficient)` pairs over the stencil.
pub(crate) fn node_row(
    spec: &ProblemSpec,
    mode: RhsMode,
    lin: Linearization,
    u: &ScalarField,
    q: usize,
    i: usize,
) -> Result<Vec<(usize, f64)>> {
    let grid = u.grid();
    let n = grid.dim();
    let h = grid.spacing();
    let x = grid.coords(i);
    let jet = u.jet(q);
    let k = spec.k;
    let m = kind_matrix(spec.kind, jet.u, &jet.du, &jet.d2u)
        .ok_or_else(|| Error::pre("Jacobian requested at a node with u <= 0"))?;
    let e = sigmas(&m, k)?;
    let g = newton_transform(&m, &e, k - 1);

    // p = ∂σ_k/∂(D²u), pointwise = ∂σ_k/∂u through the matrix.
    let (p, mut pointwise) = match spec.kind {
        EquationKind::Hessian => (g, 0.0),
        EquationKind::Curvature => {
            let fr = frame_from_gradient(&jet.du);
            (g.congruence(&fr.gamma_up).scale(1.0 / fr.w), 0.0)
        }
        EquationKind::Hyperbolic => {
            let fr = frame_from_gradient(&jet.du);
            let tdt = jet.d2u.congruence(&fr.gamma_up);
            let du_term: f64 =
                g.entries().iter().zip(tdt.entries()).map(|(a, b)| a * b).sum::<f64>() / fr.w;
            (g.congruence(&fr.gamma_up).scale(jet.u / fr.w), du_term)
        }
    };
    if spec.f.uses_u() && !matches!(mode, RhsMode::Constant(_)) {
        let d = 1e-6 * jet.u.abs().max(1.0);
        let up = mode.apply(spec.eval_f(&x, jet.u + d)?, k);
        let dn = mode.apply(spec.eval_f(&x, jet.u - d)?, k);
        pointwise -= (up - dn) / (2.0 * d);
    }

    let h2 = h * h;
    let mut row: Vec<(usize, f64)> = Vec::with_capacity(3usize.pow(n as u32));
    let mut center = pointwise;
    for a in 0..n {
        let c = p.get(a, a) / h2;
        center -= 2.0 * c;
        row.push((grid.step(i, a, 1), c));
        row.push((grid.step(i, a, -1), c));
        for b in a + 1..n {
            let c = p.get(a, b) / (2.0 * h2);
            let ap = grid.step(i, a, 1);
            let am = grid.step(i, a, -1);
            row.push((grid.step(ap, b, 1), c));
            row.push((grid.step(ap, b, -1), -c));
            row.push((grid.step(am, b, 1), -c));
            row.push((grid.step(am, b, -1), c));
        }
    }
    row.push((i, center));

    if lin == Linearization::Full && spec.kind != EquationKind::Hessian {
        let mut du = jet.du.clone();
        for a in 0..n {
            let d = 1e-6 * du[a].abs().max(1.0);
            let base = du[a];
            du[a] = base + d;
            let fp = sigma_k_at(spec.kind, k, jet.u, &du, &jet.d2u)?;
            du[a] = base - d;
            let fm = sigma_k_at(spec.kind, k, jet.u, &du, &jet.d2u)?;
            du[a] = base;
            let c = (fp - fm) / (2.0 * d) / (2.0 * h);
            row.push((grid.step(i, a, 1), c));
            row.push((grid.step(i, a, -1), -c));
        }
    }
    Ok(row)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expression;
    use crate::grid::{build_grid, DomainDescriptor};
    use std::sync::Arc;

    fn spec(kind: EquationKind, f: &str) -> ProblemSpec {
        ProblemSpec {
            n: 2,
            k: 2,
            kind,
            f: Expression::parse(f).unwrap(),
            phi: Expression::parse("0").unwrap(),
            dom: DomainDescriptor::Disk { center: vec![0.0, 0.0], radius: 1.0 },
            usub: None,
        }
    }

    fn disk(res: usize) -> Arc<Grid> {
        let s = spec(EquationKind::Hessian, "1");
        Arc::new(build_grid(&s.dom, res, &|_| 0.0).unwrap())
    }

    use crate::grid::Grid;

    #[test]
    fn quadratic_has_zero_residual() {
        let g = disk(17);
        let u = ScalarField::from_fn(g, |x| 0.5 * (x[0] * x[0] + x[1] * x[1]));
        let r = residual(&spec(EquationKind::Hessian, "1"), &u, RhsMode::Exact).unwrap();
        assert!(r.sup_norm < 1e-11, "{}", r.sup_norm);
        assert!(r.admissible());
    }

    #[test]
    fn zero_field_residual_is_minus_one() {
        let g = disk(17);
        let u = ScalarField::from_fn(g, |_| 0.0);
        let r = residual(&spec(EquationKind::Hessian, "1"), &u, RhsMode::Exact).unwrap();
        for &i in r.field.grid().interior() {
            assert_eq!(r.field.get(i), -1.0);
        }
        assert!(!r.admissible());
    }

    #[test]
    fn hemisphere_residual_is_second_order() {
        let s = spec(EquationKind::Curvature, "0.25");
        let hemi = |x: &[f64]| -(4.0 - x[0] * x[0] - x[1] * x[1]).sqrt();
        let mut sup = Vec::new();
        for res in [33, 65] {
            let u = ScalarField::from_fn(disk(res), hemi);
            sup.push(residual(&s, &u, RhsMode::Exact).unwrap().sup_norm);
        }
        let ratio = sup[0] / sup[1];
        assert!((3.0..=5.0).contains(&ratio), "{sup:?}");
    }

    fn jacobian_fd_check(kind: EquationKind, lin: Linearization, f: &str, u0: impl Fn(&[f64]) -> f64) -> f64 {
        let s = spec(kind, f);
        let u = ScalarField::from_fn(disk(9), u0);
        let g = u.grid_arc().clone();
        let q = g.interior().len() / 2;
        let i = g.interior()[q];
        let row = node_row(&s, RhsMode::Exact, lin, &u, q, i).unwrap();
        let base = node_value(&s, RhsMode::Exact, &g.coords(i), &u.jet(q)).unwrap().residual;
        let mut worst: f64 = 0.0;
        let mut nodes: Vec<usize> = row.iter().map(|r| r.0).collect();
        nodes.sort();
        nodes.dedup();
        for j in nodes {
            let coef: f64 = row.iter().filter(|r| r.0 == j).map(|r| r.1).sum();
            let d = 1e-6;
            let mut up = u.clone();
            up.values_mut()[j] += d;
            let val = node_value(&s, RhsMode::Exact, &g.coords(i), &up.jet(q)).unwrap().residual;
            let fd = (val - base) / d;
            worst = worst.max((fd - coef).abs() / coef.abs().max(1.0));
        }
        worst
    }

    #[test]
    fn jacobian_rows_match_difference_quotients() {
        let bowl = |x: &[f64]| 0.6 * x[0] * x[0] + 0.3 * x[0] * x[1] + 0.4 * x[1] * x[1] + 0.2 * x[0] - 1.0;
        assert!(jacobian_fd_check(EquationKind::Hessian, Linearization::Lagged, "1", bowl) < 1e-3);
        assert!(jacobian_fd_check(EquationKind::Curvature, Linearization::Full, "1", bowl) < 1e-3);
        let up = |x: &[f64]| 2.0 + 0.6 * x[0] * x[0] + 0.3 * x[0] * x[1] + 0.4 * x[1] * x[1] + 0.2 * x[0];
        assert!(jacobian_fd_check(EquationKind::Hyperbolic, Linearization::Full, "1+u*u", up) < 1e-3);
    }

    #[test]
    fn hyperbolic_flags_nonpositive_heights() {
        let s = ProblemSpec { kind: EquationKind::Hyperbolic, usub: Some(Expression::parse("1").unwrap()), ..spec(EquationKind::Hessian, "0") };
        let u = ScalarField::from_fn(disk(9), |_| -1.0);
        let r = residual(&s, &u, RhsMode::Exact).unwrap();
        assert_eq!(r.flagged.len(), r.field.grid().interior().len());
        assert_eq!(r.sup_norm, f64::INFINITY);
    }
}
