//! Run configuration: flat `key = value` lines under `[section]` headers.
//!
//! ```text
//! [problem]
//! kind = hessian
//! n = 2
//! k = 2
//! f = max(sqrt(x1^2 + x2^2) - 0.5, 0)^2
//! phi = 0
//! domain = disk
//! center = 0, 0
//! radius = 1
//!
//! [solver]
//! resolution = 65
//! eps_schedule = 0.1, 0.03, 0.01
//! ```
//!
//! Blank lines and lines starting with `#` are ignored.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::grid::{BoundaryMode, DomainDescriptor};
use crate::solver::{EquationKind, Linearization, ProblemSpec, SolverConfig};
use crate::verify::DEFAULT_SWEEP_FACTOR;

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyOptions {
    /// Pogorelov exponent; the kind's default when `None`.
    pub alpha: Option<f64>,
    pub factor: f64,
    /// Right-hand side of the homogeneous barrier.
    pub delta: f64,
    /// Upper function for the hyperbolic Pogorelov quantity.
    pub ubar: Option<Expression>,
    /// Offset `c` of the hyperbolic weight; derived from the first step
    /// when `None`.
    pub c: Option<f64>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { alpha: None, factor: DEFAULT_SWEEP_FACTOR, delta: 1e-4, ubar: None, c: None }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GeometryOptions {
    /// Graph function to probe; `usub`, else `phi`, when `None`.
    pub surface: Option<Expression>,
    pub points: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub solver: SolverConfig,
    pub verify: VerifyOptions,
    pub geometry: GeometryOptions,
    pub out_dir: PathBuf,
}

const KEYS: &[(&str, &[&str])] = &[
    ("problem", &["kind", "n", "k", "f", "phi", "usub", "domain", "center", "radius", "semi_axes", "lo", "hi", "level"]),
    (
        "solver",
        &[
            "eps_schedule",
            "newton_tol_abs",
            "newton_tol_rel",
            "max_newton_iters",
            "damping_min",
            "lm_shift",
            "theta0",
            "resolution",
            "boundary_mode",
            "linearization",
        ],
    ),
    ("verify", &["alpha", "factor", "delta", "ubar", "c"]),
    ("geometry", &["surface", "points"]),
    ("output", &["dir"]),
];

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

type Table = BTreeMap<(String, String), (usize, String)>;

fn tokenize(text: &str) -> Result<Table> {
    let mut table = Table::new();
    let mut section: Option<String> = None;
    for (ln, raw) in text.lines().enumerate() {
        let ln = ln + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| cfg_err(format!("line {ln}: unterminated section header")))?
                .trim();
            if !KEYS.iter().any(|(s, _)| *s == name) {
                return Err(cfg_err(format!("line {ln}: unknown section [{name}]")));
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| cfg_err(format!("line {ln}: expected key = value")))?;
        let key = key.trim();
        let sec = section.as_deref().ok_or_else(|| cfg_err(format!("line {ln}: key outside a section")))?;
        let allowed = KEYS.iter().find(|(s, _)| *s == sec).map(|(_, k)| *k).unwrap_or(&[]);
        if !allowed.contains(&key) {
            return Err(cfg_err(format!("line {ln}: unknown key {sec}.{key}")));
        }
        if table.insert((sec.to_string(), key.to_string()), (ln, value.trim().to_string())).is_some() {
            return Err(cfg_err(format!("line {ln}: duplicate key {sec}.{key}")));
        }
    }
    Ok(table)
}

struct Reader {
    table: Table,
}

impl Reader {
    fn raw(&mut self, sec: &str, key: &str) -> Option<(usize, String)> {
        self.table.remove(&(sec.to_string(), key.to_string()))
    }

    fn opt<T>(&mut self, sec: &str, key: &str, parse: impl Fn(&str) -> Option<T>) -> Result<Option<T>> {
        match self.raw(sec, key) {
            None => Ok(None),
            Some((ln, v)) => parse(&v)
                .map(Some)
                .ok_or_else(|| cfg_err(format!("line {ln}: bad value for {sec}.{key}: {v:?}"))),
        }
    }

    fn req<T>(&mut self, sec: &str, key: &str, parse: impl Fn(&str) -> Option<T>) -> Result<T> {
        self.opt(sec, key, parse)?.ok_or_else(|| cfg_err(format!("missing {sec}.{key}")))
    }

    fn expr(&mut self, sec: &str, key: &str) -> Result<Option<Expression>> {
        match self.raw(sec, key) {
            None => Ok(None),
            Some((ln, v)) => Expression::parse(&v)
                .map(Some)
                .map_err(|e| cfg_err(format!("line {ln}: {sec}.{key}: {e}"))),
        }
    }
}

fn num(s: &str) -> Option<f64> {
    s.trim().parse().ok()
}

fn int(s: &str) -> Option<usize> {
    s.trim().parse().ok()
}

fn list(s: &str) -> Option<Vec<f64>> {
    s.split(',').map(num).collect()
}

fn points(s: &str) -> Option<Vec<Vec<f64>>> {
    s.split(';').filter(|p| !p.trim().is_empty()).map(list).collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut r = Reader { table: tokenize(text)? };
        let kind = r.req("problem", "kind", EquationKind::from_name)?;
        let n = r.req("problem", "n", int)?;
        let k = r.req("problem", "k", int)?;
        let f = r.expr("problem", "f")?.ok_or_else(|| cfg_err("missing problem.f"))?;
        let phi = r.expr("problem", "phi")?.unwrap_or_else(|| Expression::constant(0.0));
        let usub = r.expr("problem", "usub")?;
        let shape: String = r.req("problem", "domain", |s| Some(s.to_string()))?;
        let dom = match shape.as_str() {
            "disk" => DomainDescriptor::Disk {
                center: r.req("problem", "center", list)?,
                radius: r.req("problem", "radius", num)?,
            },
            "ellipsoid" => DomainDescriptor::Ellipsoid {
                center: r.req("problem", "center", list)?,
                semi_axes: r.req("problem", "semi_axes", list)?,
            },
            "rectangle" => DomainDescriptor::Rectangle {
                lo: r.req("problem", "lo", list)?,
                hi: r.req("problem", "hi", list)?,
            },
            "sublevel" => DomainDescriptor::Sublevel {
                expr: r.expr("problem", "level")?.ok_or_else(|| cfg_err("missing problem.level"))?,
                lo: r.req("problem", "lo", list)?,
                hi: r.req("problem", "hi", list)?,
            },
            other => return Err(cfg_err(format!("unknown domain {other:?}"))),
        };
        let problem = ProblemSpec { n, k, kind, f, phi, dom, usub };

        let d = SolverConfig::default();
        let solver = SolverConfig {
            eps_schedule: r.opt("solver", "eps_schedule", list)?.unwrap_or(d.eps_schedule),
            newton_tol_abs: r.opt("solver", "newton_tol_abs", num)?.unwrap_or(d.newton_tol_abs),
            newton_tol_rel: r.opt("solver", "newton_tol_rel", num)?.unwrap_or(d.newton_tol_rel),
            max_newton_iters: r.opt("solver", "max_newton_iters", int)?.unwrap_or(d.max_newton_iters),
            damping_min: r.opt("solver", "damping_min", num)?.unwrap_or(d.damping_min),
            lm_shift: r.opt("solver", "lm_shift", num)?.unwrap_or(d.lm_shift),
            theta0: r.opt("solver", "theta0", num)?,
            resolution: r.opt("solver", "resolution", int)?.unwrap_or(d.resolution),
            boundary_mode: r.opt("solver", "boundary_mode", BoundaryMode::from_name)?.unwrap_or(d.boundary_mode),
            linearization: r.opt("solver", "linearization", Linearization::from_name)?.unwrap_or(d.linearization),
        };

        let dv = VerifyOptions::default();
        let verify = VerifyOptions {
            alpha: r.opt("verify", "alpha", num)?,
            factor: r.opt("verify", "factor", num)?.unwrap_or(dv.factor),
            delta: r.opt("verify", "delta", num)?.unwrap_or(dv.delta),
            ubar: r.expr("verify", "ubar")?,
            c: r.opt("verify", "c", num)?,
        };
        let geometry = GeometryOptions {
            surface: r.expr("geometry", "surface")?,
            points: r.opt("geometry", "points", points)?.unwrap_or_default(),
        };
        let out_dir = r.opt("output", "dir", |s| Some(PathBuf::from(s)))?.unwrap_or_else(|| PathBuf::from("out"));
        if let Some(((sec, key), _)) = r.table.into_iter().next() {
            return Err(cfg_err(format!("{sec}.{key} does not apply to this domain")));
        }
        let cfg = RunConfig { problem, solver, verify, geometry, out_dir };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.problem.validate()?;
        self.solver.validate()?;
        let v = &self.verify;
        if let Some(a) = v.alpha {
            if !(a >= 0.0) {
                return Err(Error::arg("verify.alpha must be nonnegative"));
            }
        }
        if !(v.factor >= 1.0) {
            return Err(Error::arg("verify.factor must be at least 1"));
        }
        if !(v.delta > 0.0) {
            return Err(Error::arg("verify.delta must be positive"));
        }
        let n = self.problem.n;
        for (name, e) in [("verify.ubar", &v.ubar), ("geometry.surface", &self.geometry.surface)] {
            if let Some(e) = e {
                if e.max_coordinate() > n || e.uses_u() {
                    return Err(Error::arg(format!("{name} must be a function of x1..x{n}")));
                }
            }
        }
        if self.geometry.points.iter().any(|p| p.len() != n) {
            return Err(Error::arg(format!("geometry.points must have {n} coordinates each")));
        }
        Ok(())
    }

    /// Canonical text form; [`RunConfig::parse`] reads it back unchanged.
    pub fn to_text(&self) -> String {
        fn join(v: &[f64]) -> String {
            v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
        }
        let p = &self.problem;
        let mut s = String::from("[problem]\n");
        s += &format!("kind = {}\nn = {}\nk = {}\nf = {}\nphi = {}\n", p.kind.name(), p.n, p.k, p.f.source(), p.phi.source());
        if let Some(u) = &p.usub {
            s += &format!("usub = {}\n", u.source());
        }
        match &p.dom {
            DomainDescriptor::Disk { center, radius } => {
                s += &format!("domain = disk\ncenter = {}\nradius = {radius:?}\n", join(center))
            }
            DomainDescriptor::Ellipsoid { center, semi_axes } => {
                s += &format!("domain = ellipsoid\ncenter = {}\nsemi_axes = {}\n", join(center), join(semi_axes))
            }
            DomainDescriptor::Rectangle { lo, hi } => {
                s += &format!("domain = rectangle\nlo = {}\nhi = {}\n", join(lo), join(hi))
            }
            DomainDescriptor::Sublevel { expr, lo, hi } => {
                s += &format!("domain = sublevel\nlevel = {}\nlo = {}\nhi = {}\n", expr.source(), join(lo), join(hi))
            }
        }
        let c = &self.solver;
        s += "\n[solver]\n";
        s += &format!("eps_schedule = {}\n", join(&c.eps_schedule));
        s += &format!("newton_tol_abs = {:?}\nnewton_tol_rel = {:?}\n", c.newton_tol_abs, c.newton_tol_rel);
        s += &format!("max_newton_iters = {}\ndamping_min = {:?}\nlm_shift = {:?}\n", c.max_newton_iters, c.damping_min, c.lm_shift);
        if let Some(t) = c.theta0 {
            s += &format!("theta0 = {t:?}\n");
        }
        s += &format!(
            "resolution = {}\nboundary_mode = {}\nlinearization = {}\n",
            c.resolution,
            c.boundary_mode.name(),
            c.linearization.name()
        );
        let v = &self.verify;
        s += "\n[verify]\n";
        if let Some(a) = v.alpha {
            s += &format!("alpha = {a:?}\n");
        }
        s += &format!("factor = {:?}\ndelta = {:?}\n", v.factor, v.delta);
        if let Some(u) = &v.ubar {
            s += &format!("ubar = {}\n", u.source());
        }
        if let Some(c) = v.c {
            s += &format!("c = {c:?}\n");
        }
        let g = &self.geometry;
        if g.surface.is_some() || !g.points.is_empty() {
            s += "\n[geometry]\n";
            if let Some(e) = &g.surface {
                s += &format!("surface = {}\n", e.source());
            }
            if !g.points.is_empty() {
                s += &format!("points = {}\n", g.points.iter().map(|p| join(p)).collect::<Vec<_>>().join("; "));
            }
        }
        s += &format!("\n[output]\ndir = {}\n", self.out_dir.display());
        s
    }
}
