//! Pointwise geometry of Euclidean graphs `x ↦ (x, u(x))`.

use crate::error::{Error, Result};
use crate::symmfunc::{self, ConeStatus, SymMatrix, SymSpectrum, CONE_TOL};

/// Second-order data of a graph function at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet2 {
    pub u: f64,
    pub du: Vec<f64>,
    pub d2u: SymMatrix,
}

impl Jet2 {
    pub fn new(u: f64, du: Vec<f64>, d2u: SymMatrix) -> Result<Self> {
        if du.len() != d2u.dim() {
            return Err(Error::arg("gradient and Hessian dimensions differ"));
        }
        if !u.is_finite() || du.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("jet entries must be finite"));
        }
        Ok(Self { u, du, d2u })
    }

    pub fn dim(&self) -> usize {
        self.du.len()
    }
}

#[derive(Clone, Debug)]
pub struct GraphFrame {
    /// `√(1+|Du|²)`
    pub w: f64,
    /// `γ^{ij} = δ_ij − u_i u_j / (w(1+w))`
    pub gamma_up: SymMatrix,
    /// `γ_ij = δ_ij + u_i u_j / (1+w)`, the square root of the metric.
    pub gamma_down: SymMatrix,
    /// `g_ij = δ_ij + u_i u_j`
    pub metric: SymMatrix,
    /// Upward unit normal `(−Du, 1)/w` in ℝ^{n+1}.
    pub normal: Vec<f64>,
    /// Last component of the normal, `1/w`.
    pub v: f64,
}

pub fn graph_frame(jet: &Jet2) -> GraphFrame {
    frame_from_gradient(&jet.du)
}

pub(crate) fn frame_from_gradient(du: &[f64]) -> GraphFrame {
    let n = du.len();
    let norm2: f64 = du.iter().map(|x| x * x).sum();
    let w = (1.0 + norm2).sqrt();
    let up = 1.0 / (w * (1.0 + w));
    let down = 1.0 / (1.0 + w);
    let gamma_up = SymMatrix::from_upper_fn(n, |i, j| delta(i, j) - du[i] * du[j] * up);
    let gamma_down = SymMatrix::from_upper_fn(n, |i, j| delta(i, j) + du[i] * du[j] * down);
    let metric = SymMatrix::from_upper_fn(n, |i, j| delta(i, j) + du[i] * du[j]);
    let mut normal: Vec<f64> = du.iter().map(|x| -x / w).collect();
    normal.push(1.0 / w);
    GraphFrame { w, gamma_up, gamma_down, metric, normal, v: 1.0 / w }
}

#[inline]
pub(crate) fn delta(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        0.0
    }
}

#[derive(Clone, Debug)]
pub struct CurvatureData {
    /// `a_ij = (1/w) γ^{ik} u_kl γ^{lj}`
    pub a: SymMatrix,
    /// Principal curvatures, descending.
    pub kappa: SymSpectrum,
    /// Second fundamental form `u_ij / w`.
    pub h: SymMatrix,
    pub cone: ConeStatus,
}

/// Curvature matrix, principal curvatures and `Γ_k` status of the graph.
pub fn curvature_matrix(jet: &Jet2, k: usize) -> Result<CurvatureData> {
    let frame = graph_frame(jet);
    let a = jet.d2u.congruence(&frame.gamma_up).scale(1.0 / frame.w);
    let kappa = symmfunc::eigenvalues(&a)?;
    let cone = symmfunc::cone_status(&kappa, k, CONE_TOL)?;
    let h = jet.d2u.scale(1.0 / frame.w);
    Ok(CurvatureData { a, kappa, h, cone })
}

/// `Γ_k` status of the principal curvatures.
pub fn admissible(jet: &Jet2, k: usize, tol: f64) -> Result<ConeStatus> {
    let data = curvature_matrix(jet, k)?;
    symmfunc::cone_status(&data.kappa, k, tol)
}

/// The projected Hessian `τ D²v τ` with `τ = (γ^{ij})`, and the margins
/// `σ_j(λ(τD²vτ)) − σ_j(λ(D²v))/w²` for `j = 1..k`.
///
/// Requires `λ(D²v)` in the closure of `Γ_{k+1}`.
pub fn projected_hessian(jet: &Jet2, d2v: &SymMatrix, k: usize) -> Result<(SymMatrix, Vec<f64>)> {
    let n = jet.dim();
    if d2v.dim() != n {
        return Err(Error::arg("d2v dimension differs from the jet"));
    }
    if k == 0 || k + 1 > n {
        return Err(Error::arg(format!("need 1 <= k and k+1 <= n, got k={k} n={n}")));
    }
    let lam_v = symmfunc::eigenvalues(d2v)?;
    let ev = symmfunc::elementary(lam_v.values(), k + 1);
    let scale = d2v.max_abs().max(1.0);
    for (m, s) in ev.iter().enumerate().skip(1) {
        let tol = 1e-10 * scale.powi(m as i32);
        if *s < -tol {
            return Err(Error::pre(format!(
                "d2v spectrum outside the closed cone: sigma_{m} = {s:.3e}"
            )));
        }
    }
    let frame = graph_frame(jet);
    let tvt = d2v.congruence(&frame.gamma_up);
    let et = symmfunc::matrix_elementary(&tvt, k)?;
    let w2 = frame.w * frame.w;
    let margins = (1..=k).map(|j| et[j] - ev[j] / w2).collect();
    Ok((tvt, margins))
}
