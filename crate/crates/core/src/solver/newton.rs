//! Damped Newton with admissibility-preserving backtracking.

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use rayon::prelude::*;

use super::operator::{node_row, residual, Residual};
use super::{IterRecord, ProblemSpec, RhsMode, SolveResult, SolverConfig};
use crate::error::{Error, Result};
use crate::grid::{Grid, NodeKind, ScalarField};

/// Solves the discrete problem with right-hand side `mode` starting from
/// `warm_start`, which must be strictly admissible at every interior node.
///
/// Boundary nodes follow the grid's boundary rules throughout; the unknowns
/// are the interior values.
pub fn newton_solve(
    spec: &ProblemSpec,
    config: &SolverConfig,
    mode: RhsMode,
    warm_start: &ScalarField,
) -> Result<SolveResult> {
    config.validate()?;
    let mut u = warm_start.clone();
    u.apply_boundary();
    let mut res = residual(spec, &u, mode)?;
    if !res.admissible() {
        return Err(Error::pre(format!(
            "warm start is not admissible at {} interior node(s) (margin {:.3e})",
            res.flagged.len(),
            res.margin
        )));
    }
    let tol = |r: &Residual| config.newton_tol_abs + config.newton_tol_rel * r.rhs_sup;
    let mut history = vec![IterRecord { iter: 0, residual_inf: res.sup_norm, margin: res.margin, step: 0.0 }];
    let mut iters = 0;
    loop {
        if res.sup_norm <= tol(&res) {
            return Ok(SolveResult {
                u,
                residual_inf: res.sup_norm,
                admissibility_margin: res.margin,
                newton_iters: iters,
                converged: true,
                history,
            });
        }
        if iters >= config.max_newton_iters {
            return Err(Error::NonConvergence {
                msg: format!("iteration cap {} reached", config.max_newton_iters),
                iters,
                residual: res.sup_norm,
                last: Box::new(u),
            });
        }
        let delta = newton_step(spec, config, mode, &u, &res)?;
        let interior = u.grid().interior().to_vec();
        let mut t = 1.0;
        loop {
            let mut cand = u.clone();
            {
                let v = cand.values_mut();
                for (q, &i) in interior.iter().enumerate() {
                    v[i] += t * delta[q];
                }
            }
            cand.apply_boundary();
            let r = residual(spec, &cand, mode)?;
            if r.admissible() && r.sup_norm <= res.sup_norm {
                u = cand;
                res = r;
                break;
            }
            t *= 0.5;
            if t < config.damping_min {
                return Err(Error::NonConvergence {
                    msg: format!("damping floor {} reached", config.damping_min),
                    iters,
                    residual: res.sup_norm,
                    last: Box::new(u),
                });
            }
        }
        iters += 1;
        history.push(IterRecord { iter: iters, residual_inf: res.sup_norm, margin: res.margin, step: t });
    }
}

/// Column of node `j` among the interior unknowns, with ghost nodes expanded
/// through their boundary rules.
fn scatter(grid: &Grid, j: usize, c: f64, out: &mut Vec<(usize, f64)>) {
    match grid.kind(j) {
        NodeKind::Interior(q) => out.push((q, c)),
        NodeKind::Boundary(b) => {
            for &(m, w) in &grid.boundary_nodes()[b].coupling {
                if let NodeKind::Interior(q) = grid.kind(m) {
                    out.push((q, c * w));
                }
            }
        }
        NodeKind::Outside => {}
    }
}

fn newton_step(
    spec: &ProblemSpec,
    config: &SolverConfig,
    mode: RhsMode,
    u: &ScalarField,
    res: &Residual,
) -> Result<Vec<f64>> {
    let grid = u.grid();
    let interior = grid.interior();
    let n = interior.len();
    let rows: Vec<Vec<(usize, f64)>> = interior
        .par_iter()
        .enumerate()
        .map(|(q, &i)| {
            let raw = node_row(spec, mode, config.linearization, u, q, i)?;
            let mut cols = Vec::with_capacity(raw.len());
            for (j, c) in raw {
                scatter(grid, j, c, &mut cols);
            }
            cols.sort_by_key(|e| e.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(cols.len());
            for (col, c) in cols {
                match merged.last_mut() {
                    Some(last) if last.0 == col => last.1 += c,
                    _ => merged.push((col, c)),
                }
            }
            Ok(merged)
        })
        .collect::<Result<_>>()?;
    let b: Vec<f64> = interior.iter().map(|&i| -res.field.get(i)).collect();

    if let Some(x) = sparse_solve(&rows, &b, 0.0) {
        return Ok(x);
    }
    let trace: f64 = rows
        .iter()
        .enumerate()
        .map(|(r, row)| row.iter().find(|e| e.0 == r).map_or(0.0, |e| e.1))
        .sum();
    let shift = config.lm_shift * trace / n as f64;
    if shift != 0.0 {
        if let Some(x) = sparse_solve(&rows, &b, shift) {
            return Ok(x);
        }
    }
    Err(Error::Numeric { msg: "Jacobian solve failed".into(), residual: res.sup_norm })
}

/// Sparse LU solve of `(A + shift·I) x = b`; `None` unless the relative
/// residual is at most `1e-10`.
fn sparse_solve(rows: &[Vec<(usize, f64)>], b: &[f64], shift: f64) -> Option<Vec<f64>> {
    let n = rows.len();
    let mut trip = Vec::with_capacity(rows.iter().map(Vec::len).sum::<usize>() + n);
    for (r, row) in rows.iter().enumerate() {
        for &(c, v) in row {
            trip.push(Triplet::new(r, c, v));
        }
        if shift != 0.0 {
            trip.push(Triplet::new(r, r, shift));
        }
    }
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trip).ok()?;
    let lu = a.sp_lu().ok()?;
    let rhs = Mat::<f64>::from_fn(n, 1, |i, _| b[i]);
    let sol = lu.solve(&rhs);
    let x: Vec<f64> = (0..n).map(|i| sol[(i, 0)]).collect();
    if x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut rnorm: f64 = 0.0;
    let mut bnorm: f64 = 0.0;
    for (r, row) in rows.iter().enumerate() {
        let ax: f64 = row.iter().map(|&(c, v)| v * x[c]).sum::<f64>() + shift * x[r];
        rnorm = rnorm.max((ax - b[r]).abs());
        bnorm = bnorm.max(b[r].abs());
    }
    (rnorm <= 1e-10 * bnorm.max(f64::MIN_POSITIVE)).then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_solve_small_system() {
        let rows = vec![vec![(0, 4.0), (1, 1.0)], vec![(0, 1.0), (1, 3.0)]];
        let x = sparse_solve(&rows, &[1.0, 2.0], 0.0).unwrap();
        assert!((4.0 * x[0] + x[1] - 1.0).abs() < 1e-14);
        assert!((x[0] + 3.0 * x[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn singular_system_is_rejected_then_shifted() {
        let rows = vec![vec![(0, 1.0), (1, 1.0)], vec![(0, 1.0), (1, 1.0)]];
        assert!(sparse_solve(&rows, &[1.0, 2.0], 0.0).is_none());
        assert!(sparse_solve(&rows, &[1.0, 2.0], 0.5).is_some());
    }
}
