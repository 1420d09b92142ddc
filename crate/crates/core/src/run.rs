//! Commands behind the `dhl` binary.

use std::fmt::Write as _;
use std::fs;
use std::sync::Arc;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::graphgeom::{curvature_matrix, Jet2};
use crate::grid::{distance_field, fmt17, Grid, ScalarField};
use crate::hypgeom::{hyp_curvature_matrix, HypJet};
use crate::solver::{
    comparison_check, continuation_solve, euclidean_grid, f_tilde, homogeneous_barrier, hyperbolic_grid, run_rows,
    write_run_record, EquationKind, RunRow,
};
use crate::symmfunc::{cone_status, ConeLabel, ConeStatus, SymMatrix};
use crate::verify::{
    blocki_check, distance_comparison, pogorelov_curvature, pogorelov_hessian, pogorelov_hyperbolic, sweep_verdict,
    BlockiReport, DistanceFit, PogorelovRecord, SweepReport, DEFAULT_HYPERBOLIC_ALPHA,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;
pub const EXIT_VERIFICATION: i32 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Solve,
    Sweep,
    Verify,
    Geometry,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Sweep => "sweep",
            Command::Verify => "verify",
            Command::Geometry => "geometry",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [Command::Solve, Command::Sweep, Command::Verify, Command::Geometry]
            .into_iter()
            .find(|c| c.name() == s)
    }
}

/// Exit status for an error that aborted a command.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonConvergence { .. } | Error::Numeric { .. } => EXIT_NONCONVERGENCE,
        _ => EXIT_VALIDATION,
    }
}

pub fn exit_class(code: i32) -> &'static str {
    match code {
        EXIT_OK => "ok",
        EXIT_NONCONVERGENCE => "nonconvergence",
        EXIT_VERIFICATION => "verification",
        _ => "validation",
    }
}

/// One-line `key=value` failure record for standard error.
pub fn failure_line(code: i32, reason: &str) -> String {
    let flat: String = reason.split_whitespace().collect::<Vec<_>>().join(" ");
    format!("dhl-error exit={code} class={} reason={flat}", exit_class(code))
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub code: i32,
    /// Why the command did not succeed.
    pub reason: Option<String>,
    /// Text for standard output.
    pub report: String,
}

pub fn execute(cmd: Command, cfg: &RunConfig) -> Result<Outcome> {
    cfg.validate()?;
    match cmd {
        Command::Solve => solve(cfg),
        Command::Sweep => {
            let a = sweep(cfg)?;
            a.write(cfg)?;
            Ok(a.outcome())
        }
        Command::Verify => {
            let a = verify_dumps(cfg)?;
            fs::write(cfg.out_dir.join("verify.txt"), a.summary())?;
            Ok(a.outcome())
        }
        Command::Geometry => geometry(cfg),
    }
}

fn solve(cfg: &RunConfig) -> Result<Outcome> {
    let mut solver = cfg.solver.clone();
    solver.eps_schedule.truncate(1);
    let run = continuation_solve(&cfg.problem, &solver)?;
    let (eps, res) = run.steps.last().expect("one converged step");
    fs::create_dir_all(&cfg.out_dir)?;
    res.u.write_csv(&cfg.out_dir.join("u.csv"))?;
    res.u.write_binary(&cfg.out_dir.join("u.bin"))?;
    write_run_record(&cfg.out_dir.join("run_record.csv"), &run_rows(&run))?;
    let report = format!(
        "solve eps={} iters={} residual_inf={} margin={}\n",
        fmt17(*eps),
        res.newton_iters,
        fmt17(res.residual_inf),
        fmt17(res.admissibility_margin)
    );
    Ok(Outcome { code: EXIT_OK, reason: None, report })
}

/// Monitors of one continuation step.
#[derive(Clone, Debug)]
pub struct StepMonitor {
    pub eps: f64,
    pub newton_iters: usize,
    pub residual_inf: f64,
    pub margin: f64,
    /// Violation of `lower ≤ u ≤ upper`.
    pub comparison: f64,
    /// `1e-8 + 10h²`.
    pub comparison_tol: f64,
    pub pogorelov: Option<PogorelovRecord>,
}

#[derive(Clone, Debug)]
pub struct SweepAnalysis {
    pub kind: EquationKind,
    pub steps: Vec<StepMonitor>,
    pub fields: Vec<(f64, ScalarField)>,
    pub lower: Option<ScalarField>,
    pub ubar: Option<ScalarField>,
    pub aborted: Option<(f64, String)>,
    pub report: Option<SweepReport>,
    /// Gradient bound on `f̃` at the last step (Euclidean kinds).
    pub blocki: Option<BlockiReport>,
    /// `B` in `ū − u ≤ B d` at the last step (Euclidean kinds).
    pub distance: Option<DistanceFit>,
    pub failures: Vec<String>,
    /// Newton history of the sweep; empty when recomputed from dumps.
    pub rows: Vec<RunRow>,
}

impl SweepAnalysis {
    pub fn passed(&self) -> bool {
        self.aborted.is_none() && self.failures.is_empty()
    }

    pub fn outcome(&self) -> Outcome {
        let report = self.summary();
        if let Some((eps, msg)) = &self.aborted {
            return Outcome {
                code: EXIT_NONCONVERGENCE,
                reason: Some(format!("continuation stopped at eps={eps:e}: {msg}")),
                report,
            };
        }
        if !self.failures.is_empty() {
            return Outcome { code: EXIT_VERIFICATION, reason: Some(self.failures.join("; ")), report };
        }
        Outcome { code: EXIT_OK, reason: None, report }
    }

    pub fn summary(&self) -> String {
        let mut s = match &self.report {
            Some(r) => r.verdict_block(),
            None => "== Pogorelov sweep ==\n  verdict: not bounded\n".to_string(),
        };
        for m in &self.steps {
            let _ = write!(s, "  step eps {:>10.3e}", m.eps);
            if m.residual_inf.is_finite() {
                let _ = write!(s, "  iters {:>2}  residual {:.3e}", m.newton_iters, m.residual_inf);
            }
            let _ = writeln!(s, "  comparison {:.3e} (tol {:.3e})", m.comparison, m.comparison_tol);
        }
        if let Some(b) = &self.blocki {
            let _ = writeln!(s, "  blocki violation {:.3e}  slack {:.3e}  holds {}", b.violation, b.slack, b.holds());
        }
        if let Some(d) = &self.distance {
            let _ = writeln!(s, "  distance B {:.4e}  C1 proxy {:.4e}  within {}", d.b, d.c1_proxy, d.within_proxy());
        }
        if let Some((eps, msg)) = &self.aborted {
            let _ = writeln!(s, "  aborted at eps {eps:e}: {msg}");
        }
        for f in &self.failures {
            let _ = writeln!(s, "  failure: {f}");
        }
        s
    }

    /// Field dumps, run record, sweep table and verdict under `out_dir`.
    pub fn write(&self, cfg: &RunConfig) -> Result<()> {
        let dir = &cfg.out_dir;
        fs::create_dir_all(dir)?;
        let mut index = String::from("step,eps,file\n");
        for (j, (eps, u)) in self.fields.iter().enumerate() {
            let name = format!("u_{j:02}.bin");
            u.write_binary(&dir.join(&name))?;
            let _ = writeln!(index, "{j},{},{name}", fmt17(*eps));
        }
        fs::write(dir.join("steps.csv"), index)?;
        if let Some((_, u)) = self.fields.last() {
            u.write_csv(&dir.join("u.csv"))?;
        }
        if let Some(ub) = &self.ubar {
            ub.write_binary(&dir.join("ubar.bin"))?;
        }
        if let Some(lo) = &self.lower {
            lo.write_binary(&dir.join("lower.bin"))?;
        }
        if let Some(r) = &self.report {
            r.write_csv(&dir.join("sweep.csv"))?;
        }
        if !self.rows.is_empty() {
            let mut rows = self.rows.clone();
            for m in &self.steps {
                if let (Some(p), Some(row)) = (m.pogorelov, rows.iter_mut().rev().find(|r| r.eps == m.eps)) {
                    match self.kind {
                        EquationKind::Hessian => row.pogorelov_h = Some(p.quantity),
                        _ => row.pogorelov_c = Some(p.quantity),
                    }
                }
            }
            write_run_record(&dir.join("run_record.csv"), &rows)?;
        }
        fs::write(dir.join("verdict.txt"), self.summary())?;
        Ok(())
    }
}

/// Continuation over the schedule followed by every monitor.
pub fn sweep(cfg: &RunConfig) -> Result<SweepAnalysis> {
    let spec = &cfg.problem;
    let run = continuation_solve(spec, &cfg.solver)?;
    let ubar = match spec.kind {
        EquationKind::Hyperbolic => None,
        _ => Some(homogeneous_barrier(spec, &cfg.solver, cfg.verify.delta)?),
    };
    let rows = run_rows(&run);
    let iters: Vec<(usize, f64, f64)> =
        run.steps.iter().map(|(_, r)| (r.newton_iters, r.residual_inf, r.admissibility_margin)).collect();
    let fields = run.steps.into_iter().map(|(e, r)| (e, r.u)).collect();
    let mut a = analyze(cfg, fields, run.subsolution, ubar, run.aborted)?;
    for (m, (it, res, margin)) in a.steps.iter_mut().zip(iters) {
        m.newton_iters = it;
        m.residual_inf = res;
        m.margin = margin;
    }
    a.rows = rows;
    Ok(a)
}

/// Recomputes the sweep monitors from the dumps written by a sweep.
pub fn verify_dumps(cfg: &RunConfig) -> Result<SweepAnalysis> {
    let dir = &cfg.out_dir;
    let index = fs::read_to_string(dir.join("steps.csv"))?;
    let mut fields = Vec::new();
    let mut euclid: Option<Arc<Grid>> = None;
    for line in index.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let (Some(eps), Some(file)) = (cols.get(1).and_then(|s| s.parse::<f64>().ok()), cols.get(2)) else {
            return Err(Error::Config(format!("malformed steps.csv line {line:?}")));
        };
        let grid = match cfg.problem.kind {
            EquationKind::Hyperbolic => hyperbolic_grid(&cfg.problem, &cfg.solver, eps)?,
            _ => euclid.get_or_insert_with(|| euclidean_grid(&cfg.problem, &cfg.solver).expect("grid")).clone(),
        };
        fields.push((eps, ScalarField::read_binary(grid, &dir.join(file))?));
    }
    let optional = |name: &str| -> Result<Option<ScalarField>> {
        let path = dir.join(name);
        match (&euclid, path.exists()) {
            (Some(g), true) => Ok(Some(ScalarField::read_binary(g.clone(), &path)?)),
            _ => Ok(None),
        }
    };
    let (lower, ubar) = (optional("lower.bin")?, optional("ubar.bin")?);
    analyze(cfg, fields, lower, ubar, None)
}

fn analyze(
    cfg: &RunConfig,
    fields: Vec<(f64, ScalarField)>,
    lower: Option<ScalarField>,
    ubar: Option<ScalarField>,
    aborted: Option<(f64, String)>,
) -> Result<SweepAnalysis> {
    let spec = &cfg.problem;
    let mut failures = Vec::new();
    let mut steps = Vec::new();
    let hyp_c = match (spec.kind, &cfg.verify.ubar, fields.first()) {
        (EquationKind::Hyperbolic, None, _) => return Err(Error::arg("the hyperbolic sweep needs verify.ubar")),
        (EquationKind::Hyperbolic, Some(e), Some((_, u0))) => match cfg.verify.c {
            Some(c) => c,
            None => {
                let ub = ScalarField::from_expression(u0.grid_arc().clone(), e)?;
                let m = u0
                    .grid()
                    .interior()
                    .iter()
                    .map(|&i| ub.get(i).powi(2) - u0.get(i).powi(2))
                    .fold(f64::INFINITY, f64::min);
                (0.9 * m).max(0.0)
            }
        },
        _ => 0.0,
    };
    for (eps, u) in &fields {
        let h = u.grid().spacing();
        let tol = 1e-8 + 10.0 * h * h;
        let (lo, up, ub) = match spec.kind {
            EquationKind::Hyperbolic => {
                let g = u.grid_arc().clone();
                let usub = spec.usub.as_ref().expect("validated");
                let ub = ScalarField::from_expression(g.clone(), cfg.verify.ubar.as_ref().expect("checked"))?;
                (Some(ScalarField::from_expression(g, usub)?), Some(ub.clone()), Some(ub))
            }
            _ => {
                let upper = match spec.phi.is_affine() {
                    true => Some(ScalarField::from_expression(u.grid_arc().clone(), &spec.phi)?),
                    false => ubar.clone(),
                };
                (lower.clone(), upper, ubar.clone())
            }
        };
        let neg = u.map(|_| f64::NEG_INFINITY);
        let pos = u.map(|_| f64::INFINITY);
        let comparison = comparison_check(lo.as_ref().unwrap_or(&neg), u, up.as_ref().unwrap_or(&pos))?;
        if comparison > tol {
            failures.push(format!("comparison violated by {comparison:.3e} at eps={eps:e}"));
        }
        let pog = ub.as_ref().map(|ub| match spec.kind {
            EquationKind::Hessian => pogorelov_hessian(u, ub, spec.k, cfg.verify.alpha),
            EquationKind::Curvature => pogorelov_curvature(u, ub, spec.k, cfg.verify.alpha),
            EquationKind::Hyperbolic => {
                pogorelov_hyperbolic(u, ub, hyp_c, cfg.verify.alpha.unwrap_or(DEFAULT_HYPERBOLIC_ALPHA))
            }
        });
        let pogorelov = match pog {
            Some(Ok(r)) => Some(r.with_eps(*eps)),
            Some(Err(e)) => {
                failures.push(format!("pogorelov at eps={eps:e}: {e}"));
                None
            }
            None => None,
        };
        steps.push(StepMonitor {
            eps: *eps,
            newton_iters: 0,
            residual_inf: f64::NAN,
            margin: f64::NAN,
            comparison,
            comparison_tol: tol,
            pogorelov,
        });
    }

    let records: Vec<PogorelovRecord> = steps.iter().filter_map(|m| m.pogorelov).collect();
    let report = if records.len() >= 3 {
        let r = sweep_verdict(&records, cfg.verify.factor)?;
        if !r.bounded {
            failures.push(format!("pogorelov sweep not bounded (ratio {:.4})", r.ratio));
        }
        Some(r)
    } else {
        failures.push(format!("only {} pogorelov record(s); the verdict needs 3", records.len()));
        None
    };

    let (mut blocki, mut distance) = (None, None);
    if let (Some((_, u)), true) = (fields.last(), spec.kind != EquationKind::Hyperbolic && spec.k >= 2) {
        let dist = distance_field(u.grid_arc());
        let g = u.grid();
        let psi: Vec<f64> = (0..g.node_count())
            .map(|i| match g.is_active(i) {
                true => f_tilde(spec.f.eval_or_nan(&g.coords(i), u.get(i)), spec.k),
                false => f64::NAN,
            })
            .collect();
        let psi = ScalarField::new(u.grid_arc().clone(), psi)?;
        match blocki_check(&psi, &dist) {
            Ok(b) => {
                if !b.holds() {
                    failures.push(format!("blocki bound violated by {:.3e} (slack {:.3e})", b.violation, b.slack));
                }
                blocki = Some(b);
            }
            Err(e) => failures.push(format!("blocki: {e}")),
        }
        if let Some(ub) = &ubar {
            match distance_comparison(ub, u, &dist) {
                Ok(d) => {
                    if !d.b.is_finite() {
                        failures.push("distance constant B is not finite".into());
                    }
                    distance = Some(d);
                }
                Err(e) => failures.push(format!("distance: {e}")),
            }
        }
    }
    Ok(SweepAnalysis {
        kind: spec.kind,
        steps,
        fields,
        lower,
        ubar,
        aborted,
        report,
        blocki,
        distance,
        failures,
        rows: Vec::new(),
    })
}

const FD_STEP: f64 = 1e-4;

/// Cone tolerance for difference-quotient jets, whose error is about `1e-8`.
pub const GEOMETRY_CONE_TOL: f64 = 1e-6;

/// Jet of `e` at `x` by central differences.
pub fn expression_jet(e: &Expression, x: &[f64]) -> Result<Jet2> {
    let n = x.len();
    let at = |d: &[(usize, f64)]| -> Result<f64> {
        let mut y = x.to_vec();
        for &(a, s) in d {
            y[a] += s * FD_STEP;
        }
        e.eval(&y, 0.0)
    };
    let u = at(&[])?;
    let mut du = vec![0.0; n];
    let mut d2 = vec![vec![0.0; n]; n];
    let h2 = FD_STEP * FD_STEP;
    for a in 0..n {
        let (p, m) = (at(&[(a, 1.0)])?, at(&[(a, -1.0)])?);
        du[a] = (p - m) / (2.0 * FD_STEP);
        d2[a][a] = (p - 2.0 * u + m) / h2;
        for b in 0..a {
            let v = (at(&[(a, 1.0), (b, 1.0)])? - at(&[(a, 1.0), (b, -1.0)])? - at(&[(a, -1.0), (b, 1.0)])?
                + at(&[(a, -1.0), (b, -1.0)])?)
                / (4.0 * h2);
            d2[a][b] = v;
            d2[b][a] = v;
        }
    }
    Jet2::new(u, du, SymMatrix::from_upper_fn(n, |a, b| d2[a][b]))
}

fn label(c: &ConeStatus) -> &'static str {
    match c.label {
        ConeLabel::Interior => "interior",
        ConeLabel::Boundary => "boundary",
        ConeLabel::Outside => "outside",
    }
}

fn geometry(cfg: &RunConfig) -> Result<Outcome> {
    let spec = &cfg.problem;
    let g = &cfg.geometry;
    if g.points.is_empty() {
        return Err(Error::arg("geometry.points is empty"));
    }
    let surface = g.surface.as_ref().or(spec.usub.as_ref()).unwrap_or(&spec.phi);
    let n = spec.n;
    let mut csv = String::from("point");
    for a in 1..=n {
        let _ = write!(csv, ",x{a}");
    }
    csv += ",u";
    for a in 1..=n {
        let _ = write!(csv, ",kappa_{a}");
    }
    csv += ",cone,margin";
    for a in 1..=n {
        let _ = write!(csv, ",kappa_tilde_{a}");
    }
    csv += ",hyp_cone,hyp_margin\n";
    let mut report = String::new();
    for (p, x) in g.points.iter().enumerate() {
        let jet = expression_jet(surface, x)?;
        let cd = curvature_matrix(&jet, spec.k)?;
        let cone = cone_status(&cd.kappa, spec.k, GEOMETRY_CONE_TOL)?;
        let _ = write!(csv, "{p}");
        for v in x {
            let _ = write!(csv, ",{}", fmt17(*v));
        }
        let _ = write!(csv, ",{}", fmt17(jet.u));
        for v in cd.kappa.values() {
            let _ = write!(csv, ",{}", fmt17(*v));
        }
        let _ = write!(csv, ",{},{}", label(&cone), fmt17(cone.margin));
        let _ = write!(report, "point {p}: kappa {:?} {}", cd.kappa.values(), label(&cone));
        match HypJet::new(jet.clone()).and_then(|hj| hyp_curvature_matrix(&hj, spec.k)) {
            Ok(hc) => {
                let hcone = cone_status(&hc.kappa_tilde, spec.k, GEOMETRY_CONE_TOL)?;
                for v in hc.kappa_tilde.values() {
                    let _ = write!(csv, ",{}", fmt17(*v));
                }
                let _ = writeln!(csv, ",{},{}", label(&hcone), fmt17(hcone.margin));
                let _ = writeln!(report, "; kappa_tilde {:?} {}", hc.kappa_tilde.values(), label(&hcone));
            }
            Err(_) => {
                csv += &",".repeat(n + 2);
                csv.push('\n');
                report.push('\n');
            }
        }
    }
    fs::create_dir_all(&cfg.out_dir)?;
    fs::write(cfg.out_dir.join("geometry.csv"), csv)?;
    Ok(Outcome { code: EXIT_OK, reason: None, report })
}
