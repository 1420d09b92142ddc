//! Regularize, solve the non-degenerate discrete problem by damped Newton,
//! and continue the regularization parameter to zero.

mod newton;
mod operator;
mod pipeline;
mod rhs;

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::grid::{fmt17, BoundaryMode, DomainDescriptor, ScalarField};

pub use newton::newton_solve;
pub use operator::{residual, Residual};
pub use pipeline::{
    comparison_check, continuation_solve, euclidean_grid, homogeneous_barrier, hyperbolic_grid,
    initial_guess, subsolution_quadratic, ContinuationRun, Subsolution,
};
pub use rhs::{cutoff_eta, f_epsilon, f_tilde, j_regularized_rhs, RhsMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EquationKind {
    /// `σ_k(λ(D²u)) = f`
    Hessian,
    /// `σ_k(κ) = f` for the Euclidean graph of `u`.
    Curvature,
    /// `σ_k(κ̃) = f` for the graph in the half-space model.
    Hyperbolic,
}

impl EquationKind {
    pub fn name(self) -> &'static str {
        match self {
            EquationKind::Hessian => "hessian",
            EquationKind::Curvature => "curvature",
            EquationKind::Hyperbolic => "hyperbolic",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "hessian" => Some(EquationKind::Hessian),
            "curvature" => Some(EquationKind::Curvature),
            "hyperbolic" => Some(EquationKind::Hyperbolic),
            _ => None,
        }
    }
}

impl Linearization {
    pub fn name(self) -> &'static str {
        match self {
            Linearization::Lagged => "lagged",
            Linearization::Full => "full",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "lagged" => Some(Linearization::Lagged),
            "full" => Some(Linearization::Full),
            _ => None,
        }
    }
}

/// A Dirichlet problem `σ_k(·) = f(x, u)` in `dom`, `u = φ` on the boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    pub n: usize,
    pub k: usize,
    pub kind: EquationKind,
    pub f: Expression,
    pub phi: Expression,
    pub dom: DomainDescriptor,
    /// Subsolution; required for the hyperbolic kind, where it also
    /// defines the domains `{usub > ε}`.
    pub usub: Option<Expression>,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.n) {
            return Err(Error::arg(format!("n must be 2 or 3, got {}", self.n)));
        }
        if self.k < 1 || self.k > self.n {
            return Err(Error::arg(format!("need 1 <= k <= n, got k={} n={}", self.k, self.n)));
        }
        self.dom.validate()?;
        if self.dom.dim() != self.n {
            return Err(Error::arg(format!("domain has dimension {}, expected {}", self.dom.dim(), self.n)));
        }
        let mut exprs = vec![("f", &self.f), ("phi", &self.phi)];
        if let Some(us) = &self.usub {
            exprs.push(("usub", us));
        }
        for (name, e) in exprs {
            if e.max_coordinate() > self.n {
                return Err(Error::arg(format!(
                    "{name} uses x{} but n = {}",
                    e.max_coordinate(),
                    self.n
                )));
            }
        }
        if self.phi.uses_u() {
            return Err(Error::arg("phi may not depend on u"));
        }
        if let Some(us) = &self.usub {
            if us.uses_u() {
                return Err(Error::arg("usub may not depend on u"));
            }
        }
        if self.kind == EquationKind::Hyperbolic && self.usub.is_none() {
            return Err(Error::arg("the hyperbolic kind needs a subsolution usub"));
        }
        Ok(())
    }

    pub(crate) fn eval_f(&self, x: &[f64], u: f64) -> Result<f64> {
        self.f.eval(x, u)
    }
}

/// How the gradient dependence of the operator enters the Jacobian.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Linearization {
    /// Differentiate in `D²u` only, freezing `Du` at the current iterate.
    Lagged,
    /// Also differentiate in `Du` (by difference quotients of the pointwise
    /// operator).
    #[default]
    Full,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub eps_schedule: Vec<f64>,
    pub newton_tol_abs: f64,
    pub newton_tol_rel: f64,
    pub max_newton_iters: usize,
    pub damping_min: f64,
    pub lm_shift: f64,
    /// Cut-off threshold; estimated from the subsolution when `None`.
    pub theta0: Option<f64>,
    /// Nodes across the longest extent of the domain.
    pub resolution: usize,
    pub boundary_mode: BoundaryMode,
    pub linearization: Linearization,
}

pub const DEFAULT_EPS_SCHEDULE: [f64; 7] = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4];

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps_schedule: DEFAULT_EPS_SCHEDULE.to_vec(),
            newton_tol_abs: 1e-9,
            newton_tol_rel: 1e-9,
            max_newton_iters: 50,
            damping_min: 1.0 / 1024.0,
            lm_shift: 1e-8,
            theta0: None,
            resolution: 65,
            boundary_mode: BoundaryMode::Extrapolated,
            linearization: Linearization::Full,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eps_schedule.is_empty() {
            return Err(Error::arg("eps_schedule is empty"));
        }
        if self.eps_schedule.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
            return Err(Error::arg("eps_schedule entries must be positive"));
        }
        if self.eps_schedule.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::arg("eps_schedule must be strictly decreasing"));
        }
        if !(self.newton_tol_abs > 0.0) || !(self.newton_tol_rel > 0.0) {
            return Err(Error::arg("Newton tolerances must be positive"));
        }
        if self.max_newton_iters == 0 {
            return Err(Error::arg("max_newton_iters must be positive"));
        }
        if !(self.damping_min > 0.0 && self.damping_min <= 1.0) {
            return Err(Error::arg("damping_min must lie in (0, 1]"));
        }
        if !(self.lm_shift >= 0.0) {
            return Err(Error::arg("lm_shift must be nonnegative"));
        }
        if let Some(t) = self.theta0 {
            if !(t > 0.0) {
                return Err(Error::arg("theta0 must be positive"));
            }
        }
        if self.resolution < 9 {
            return Err(Error::arg("resolution must be at least 9"));
        }
        Ok(())
    }
}

/// One accepted (or final) Newton iterate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    pub residual_inf: f64,
    pub margin: f64,
    /// Damping factor of the step that produced this iterate (0 for the
    /// starting point).
    pub step: f64,
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub u: ScalarField,
    pub residual_inf: f64,
    /// Minimum over interior nodes of `min_{m ≤ k} σ_m`.
    pub admissibility_margin: f64,
    pub newton_iters: usize,
    pub converged: bool,
    pub history: Vec<IterRecord>,
}

/// One row of a run record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunRow {
    pub eps: f64,
    pub iter: usize,
    pub residual_inf: f64,
    pub margin: f64,
    pub pogorelov_h: Option<f64>,
    pub pogorelov_c: Option<f64>,
}

pub const RUN_RECORD_HEADER: &str = "eps,iter,residual_inf,margin,pogorelov_h,pogorelov_c";

/// Writes a run record; absent Pogorelov columns are left empty.
pub fn write_run_record(path: &Path, rows: &[RunRow]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{RUN_RECORD_HEADER}")?;
    let opt = |v: Option<f64>| v.map(fmt17).unwrap_or_default();
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt17(r.eps),
            r.iter,
            fmt17(r.residual_inf),
            fmt17(r.margin),
            opt(r.pogorelov_h),
            opt(r.pogorelov_c)
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Run-record rows for every Newton iterate of a continuation.
pub fn run_rows(run: &ContinuationRun) -> Vec<RunRow> {
    let mut rows = Vec::new();
    for (eps, res) in &run.steps {
        for h in &res.history {
            rows.push(RunRow {
                eps: *eps,
                iter: h.iter,
                residual_inf: h.residual_inf,
                margin: h.margin,
                pogorelov_h: None,
                pogorelov_c: None,
            });
        }
    }
    rows
}
