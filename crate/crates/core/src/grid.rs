//! Masked uniform finite-difference grids, nodal fields and central stencils.
//!
//! Nodes are stored with the first axis varying fastest. A node is
//! *interior* when it lies strictly inside the domain; every non-interior node
//! in the full `3ⁿ` neighbourhood of an interior node is a *boundary* node, so
//! both axis and diagonal stencils close over `interior ∪ boundary`.
//!
//! Boundary nodes carry an affine rule `u_b = value + Σ w_j u_j`. In
//! [`BoundaryMode::Nodal`] the rule is the plain Dirichlet value `φ(x_b)`. In
//! [`BoundaryMode::Extrapolated`] the node is a ghost whose value is
//! extrapolated through the boundary crossing `p` (where `u = φ(p)`) and one
//! or two interior nodes on the same grid line.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::graphgeom::Jet2;
use crate::symmfunc::SymMatrix;

pub const FIELD_MAGIC: &[u8; 8] = b"DHLFLD01";
const MIN_RESOLUTION: usize = 9;

/// Domain shapes. The level function is negative strictly inside.
#[derive(Clone, Debug, PartialEq)]
pub enum DomainDescriptor {
    Rectangle { lo: Vec<f64>, hi: Vec<f64> },
    Disk { center: Vec<f64>, radius: f64 },
    Ellipsoid { center: Vec<f64>, semi_axes: Vec<f64> },
    /// `{x : expr(x) < 0}` inside the box `[lo, hi]`.
    Sublevel { expr: Expression, lo: Vec<f64>, hi: Vec<f64> },
}

impl DomainDescriptor {
    pub fn dim(&self) -> usize {
        match self {
            DomainDescriptor::Rectangle { lo, .. } => lo.len(),
            DomainDescriptor::Disk { center, .. } => center.len(),
            DomainDescriptor::Ellipsoid { center, .. } => center.len(),
            DomainDescriptor::Sublevel { lo, .. } => lo.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if n == 0 {
            return Err(Error::arg("domain dimension must be positive"));
        }
        let ok = match self {
            DomainDescriptor::Rectangle { lo, hi } | DomainDescriptor::Sublevel { lo, hi, .. } => {
                hi.len() == n && lo.iter().zip(hi).all(|(a, b)| a < b)
            }
            DomainDescriptor::Disk { radius, .. } => *radius > 0.0,
            DomainDescriptor::Ellipsoid { semi_axes, .. } => {
                semi_axes.len() == n && semi_axes.iter().all(|a| *a > 0.0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::arg(format!("malformed domain {self:?}")))
        }
    }

    /// Signed level function, negative inside.
    pub fn level(&self, x: &[f64]) -> f64 {
        match self {
            DomainDescriptor::Rectangle { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(v, (a, b))| (a - v).max(v - b))
                .fold(f64::NEG_INFINITY, f64::max),
            DomainDescriptor::Disk { center, radius } => {
                (dist(x, center).powi(2) - radius * radius) / (2.0 * radius)
            }
            DomainDescriptor::Ellipsoid { center, semi_axes } => {
                let q: f64 = x
                    .iter()
                    .zip(center)
                    .zip(semi_axes)
                    .map(|((v, c), a)| ((v - c) / a).powi(2))
                    .sum();
                0.5 * (q - 1.0)
            }
            DomainDescriptor::Sublevel { expr, lo, hi } => {
                let outside_box = x.iter().zip(lo.iter().zip(hi)).any(|(v, (a, b))| v < a || v > b);
                if outside_box {
                    f64::INFINITY
                } else {
                    let v = expr.eval_or_nan(x, 0.0);
                    if v.is_nan() {
                        f64::INFINITY
                    } else {
                        v
                    }
                }
            }
        }
    }

    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            DomainDescriptor::Rectangle { lo, hi } | DomainDescriptor::Sublevel { lo, hi, .. } => {
                (lo.clone(), hi.clone())
            }
            DomainDescriptor::Disk { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            DomainDescriptor::Ellipsoid { center, semi_axes } => (
                center.iter().zip(semi_axes).map(|(c, a)| c - a).collect(),
                center.iter().zip(semi_axes).map(|(c, a)| c + a).collect(),
            ),
        }
    }

    /// A ball `(center, radius)` containing the closed domain.
    pub fn circumsphere(&self) -> (Vec<f64>, f64) {
        match self {
            DomainDescriptor::Disk { center, radius } => (center.clone(), *radius),
            DomainDescriptor::Ellipsoid { center, semi_axes } => {
                (center.clone(), semi_axes.iter().copied().fold(0.0, f64::max))
            }
            _ => {
                let (lo, hi) = self.bounding_box();
                let c: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
                (c, 0.5 * dist(&lo, &hi))
            }
        }
    }
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum BoundaryMode {
    /// Dirichlet value `φ` evaluated at the boundary node itself.
    Nodal,
    /// Ghost value extrapolated quadratically through the boundary crossing,
    /// with the crossing located by linear interpolation of the nodal level
    /// values.
    #[default]
    Extrapolated,
    /// As [`BoundaryMode::Extrapolated`] with the crossing located by
    /// bisection on the continuous level function.
    ExtrapolatedExact,
}

impl BoundaryMode {
    pub fn name(self) -> &'static str {
        match self {
            BoundaryMode::Nodal => "nodal",
            BoundaryMode::Extrapolated => "extrapolated",
            BoundaryMode::ExtrapolatedExact => "extrapolated-exact",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "nodal" => Some(BoundaryMode::Nodal),
            "extrapolated" => Some(BoundaryMode::Extrapolated),
            "extrapolated-exact" => Some(BoundaryMode::ExtrapolatedExact),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Outside,
    Interior(usize),
    Boundary(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryNode {
    pub node: usize,
    /// Constant part of the boundary rule (`φ(x_b)` for nodal rules).
    pub value: f64,
    /// `(node, weight)` pairs of interior nodes the rule couples to.
    pub coupling: Vec<(usize, f64)>,
    /// Boundary crossing used by an extrapolation rule.
    pub anchor: Option<Vec<f64>>,
}

impl BoundaryNode {
    pub fn apply(&self, values: &[f64]) -> f64 {
        self.value + self.coupling.iter().map(|(j, w)| w * values[*j]).sum::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    dims: Vec<usize>,
    strides: Vec<usize>,
    spacing: f64,
    origin: Vec<f64>,
    kinds: Vec<NodeKind>,
    interior: Vec<usize>,
    boundary: Vec<BoundaryNode>,
    crossings: Vec<Vec<f64>>,
    mode: BoundaryMode,
}

/// Level information used while classifying nodes.
enum LevelSource<'a> {
    Continuous(&'a dyn Fn(&[f64]) -> f64),
    Nodal(&'a [f64]),
}

/// Array shape, spacing and origin of the padded bounding box of `dom`.
fn box_layout(dom: &DomainDescriptor, resolution: usize) -> Result<(Vec<usize>, f64, Vec<f64>)> {
    dom.validate()?;
    if resolution < MIN_RESOLUTION {
        return Err(Error::arg(format!("resolution must be >= {MIN_RESOLUTION}, got {resolution}")));
    }
    let (lo, hi) = dom.bounding_box();
    let extent = lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max);
    let h = extent / (resolution - 1) as f64;
    let dims: Vec<usize> =
        lo.iter().zip(&hi).map(|(a, b)| ((b - a) / h - 1e-9).ceil() as usize + 3).collect();
    let origin: Vec<f64> = lo.iter().map(|a| a - h).collect();
    Ok((dims, h, origin))
}

/// Builds the grid for `dom` with `resolution` nodes across its longest extent.
pub fn build_grid(dom: &DomainDescriptor, resolution: usize, phi: &dyn Fn(&[f64]) -> f64) -> Result<Grid> {
    build_grid_with(dom, resolution, phi, BoundaryMode::default())
}

pub fn build_grid_with(
    dom: &DomainDescriptor,
    resolution: usize,
    phi: &dyn Fn(&[f64]) -> f64,
    mode: BoundaryMode,
) -> Result<Grid> {
    let (dims, h, origin) = box_layout(dom, resolution)?;
    let level = |x: &[f64]| dom.level(x);
    Grid::classify(dims, h, origin, LevelSource::Continuous(&level), phi, mode)
}

/// Mask and boundary band of `{usub > eps}` on the grid of `usub`.
#[derive(Clone, Debug)]
pub struct LevelSetDomain {
    /// Nodes with `usub > eps`.
    pub mask: Vec<bool>,
    /// Masked nodes with a non-masked node in their `3ⁿ` neighbourhood,
    /// each carrying the Dirichlet value `eps`.
    pub band: Vec<(usize, f64)>,
}

pub fn level_set_domain(usub: &ScalarField, eps: f64) -> Result<LevelSetDomain> {
    if !(eps > 0.0) {
        return Err(Error::arg("eps must be positive"));
    }
    let grid = usub.grid();
    let mask: Vec<bool> = usub.values.iter().map(|v| v.is_finite() && *v > eps).collect();
    if !mask.iter().any(|m| *m) {
        return Err(Error::domain(format!("level set {{usub > {eps}}} is empty")));
    }
    let offsets = grid.neighbor_offsets();
    let band = (0..mask.len())
        .filter(|&i| mask[i])
        .filter(|&i| offsets.iter().any(|o| grid.shift(i, o).map_or(true, |j| !mask[j])))
        .map(|i| (i, eps))
        .collect();
    Ok(LevelSetDomain { mask, band })
}

/// Grid whose interior is `{usub > eps}` with boundary value `eps`; the
/// crossing is located by linear interpolation of the nodal values.
pub fn sublevel_grid(usub: &ScalarField, eps: f64, mode: BoundaryMode) -> Result<Grid> {
    level_set_domain(usub, eps)?;
    let g = usub.grid();
    let level: Vec<f64> =
        usub.values.iter().map(|v| if v.is_finite() { eps - v } else { f64::INFINITY }).collect();
    Grid::classify(g.dims.clone(), g.spacing, g.origin.clone(), LevelSource::Nodal(&level), &|_| eps, mode)
}

/// Grid over the bounding box of `dom` whose interior is `{usub > eps}`,
/// with boundary value `eps`. Crossings are located by bisection on the
/// continuous `usub`; points where `usub` is undefined count as outside.
pub fn sublevel_grid_continuous(
    dom: &DomainDescriptor,
    resolution: usize,
    usub: &(dyn Fn(&[f64]) -> f64 + Sync),
    eps: f64,
    mode: BoundaryMode,
) -> Result<Grid> {
    if !(eps > 0.0) {
        return Err(Error::arg("eps must be positive"));
    }
    let (dims, h, origin) = box_layout(dom, resolution)?;
    let level = |x: &[f64]| {
        let v = usub(x);
        if v.is_finite() {
            eps - v
        } else {
            f64::INFINITY
        }
    };
    let mode = match mode {
        BoundaryMode::Extrapolated => BoundaryMode::ExtrapolatedExact,
        m => m,
    };
    Grid::classify(dims, h, origin, LevelSource::Continuous(&level), &|_| eps, mode)
}

impl Grid {
    fn classify(
        dims: Vec<usize>,
        h: f64,
        origin: Vec<f64>,
        level: LevelSource<'_>,
        phi: &dyn Fn(&[f64]) -> f64,
        mode: BoundaryMode,
    ) -> Result<Self> {
        let mut strides = vec![1usize; dims.len()];
        for a in 1..dims.len() {
            strides[a] = strides[a - 1] * dims[a - 1];
        }
        let total: usize = dims.iter().product();
        let mut grid = Grid {
            dims,
            strides,
            spacing: h,
            origin,
            kinds: vec![NodeKind::Outside; total],
            interior: Vec::new(),
            boundary: Vec::new(),
            crossings: Vec::new(),
            mode,
        };
        let thr = -1e-12 * h;
        let node_level: Vec<f64> = match &level {
            LevelSource::Continuous(f) => (0..total).map(|i| f(&grid.coords(i))).collect(),
            LevelSource::Nodal(v) => v.to_vec(),
        };
        for i in 0..total {
            if node_level[i] < thr && !grid.on_edge(i) {
                grid.kinds[i] = NodeKind::Interior(grid.interior.len());
                grid.interior.push(i);
            }
        }
        if grid.interior.is_empty() {
            return Err(Error::domain("domain has no interior nodes at this resolution"));
        }

        let offsets = grid.neighbor_offsets();
        let mut is_boundary = vec![false; total];
        for &i in &grid.interior {
            for o in &offsets {
                let j = grid.shift(i, o).expect("interior nodes are off the array edge");
                if !matches!(grid.kinds[j], NodeKind::Interior(_)) {
                    is_boundary[j] = true;
                }
            }
        }

        let crossing_param = |b: usize, off: &[isize]| -> f64 {
            let nb = grid.shift(b, off).expect("neighbour exists");
            match &level {
                LevelSource::Continuous(f)
                    if mode == BoundaryMode::ExtrapolatedExact || !node_level[b].is_finite() =>
                {
                    let xb = grid.coords(b);
                    let x1 = grid.coords(nb);
                    let at = |t: f64| {
                        let p: Vec<f64> = xb.iter().zip(&x1).map(|(a, c)| a + t * (c - a)).collect();
                        f(&p)
                    };
                    if at(0.0) <= 0.0 {
                        return 0.0;
                    }
                    let (mut a, mut c) = (0.0, 1.0);
                    for _ in 0..60 {
                        let m = 0.5 * (a + c);
                        if at(m) > 0.0 {
                            a = m;
                        } else {
                            c = m;
                        }
                    }
                    0.5 * (a + c)
                }
                _ => {
                    let (lb, l1) = (node_level[b].min(1e300), node_level[nb]);
                    (lb / (lb - l1)).clamp(0.0, 1.0)
                }
            }
        };

        let mut rules = Vec::new();
        let mut crossings = Vec::new();
        for b in (0..total).filter(|&b| is_boundary[b]) {
            let xb = grid.coords(b);
            // axis crossings feed the distance field
            for a in 0..grid.dims.len() {
                for s in [-1isize, 1] {
                    let mut off = vec![0isize; grid.dims.len()];
                    off[a] = s;
                    if let Some(j) = grid.shift(b, &off) {
                        if grid.is_interior(j) {
                            let t = crossing_param(b, &off);
                            crossings.push(lerp(&xb, &grid.coords(j), t));
                        }
                    }
                }
            }
            rules.push(match mode {
                BoundaryMode::Nodal => {
                    BoundaryNode { node: b, value: phi(&xb), coupling: vec![], anchor: None }
                }
                BoundaryMode::Extrapolated | BoundaryMode::ExtrapolatedExact => {
                    grid.extrapolation_rule(b, &offsets, &crossing_param, phi)
                }
            });
        }
        for rule in rules {
            grid.kinds[rule.node] = NodeKind::Boundary(grid.boundary.len());
            grid.boundary.push(rule);
        }
        grid.crossings = crossings;
        Ok(grid)
    }

    fn extrapolation_rule(
        &self,
        b: usize,
        offsets: &[Vec<isize>],
        crossing_param: &dyn Fn(usize, &[isize]) -> f64,
        phi: &dyn Fn(&[f64]) -> f64,
    ) -> BoundaryNode {
        let xb = self.coords(b);
        let interior_at = |off: &[isize], m: isize| -> Option<usize> {
            let scaled: Vec<isize> = off.iter().map(|o| o * m).collect();
            self.shift(b, &scaled).filter(|j| matches!(self.kinds[*j], NodeKind::Interior(_)))
        };
        // Prefer axis directions, then the crossing closest to the ghost.
        let mut best: Option<(usize, f64, &Vec<isize>)> = None;
        for off in offsets {
            if interior_at(off, 1).is_none() {
                continue;
            }
            let nnz = off.iter().filter(|o| **o != 0).count();
            let t = crossing_param(b, off);
            let better = match best {
                None => true,
                Some((bn, bt, _)) => nnz < bn || (nnz == bn && t < bt - 1e-14),
            };
            if better {
                best = Some((nnz, t, off));
            }
        }
        let (_, theta, off) = best.expect("boundary node touches an interior node");
        let anchor = lerp(&xb, &self.coords(self.shift(b, off).expect("neighbour")), theta);
        let phi_p = phi(&anchor);
        if theta <= 1e-12 {
            return BoundaryNode { node: b, value: phi_p, coupling: vec![], anchor: Some(anchor) };
        }
        let n1 = interior_at(off, 1);
        let n2 = interior_at(off, 2);
        let n3 = interior_at(off, 3);
        let mut candidates: Vec<Vec<(usize, f64)>> = Vec::new();
        if theta <= 0.5 {
            if let (Some(a), Some(c)) = (n1, n2) {
                candidates.push(vec![(a, 1.0), (c, 2.0)]);
            }
        } else if let (Some(a), Some(c)) = (n2, n3) {
            candidates.push(vec![(a, 2.0), (c, 3.0)]);
        }
        if let Some(a) = n2 {
            if theta > 0.5 {
                candidates.push(vec![(a, 2.0)]);
            }
        }
        if let Some(a) = n1 {
            if theta < 1.0 - 1e-3 {
                candidates.push(vec![(a, 1.0)]);
            }
        }
        match candidates.into_iter().next() {
            Some(pts) => {
                let mut positions = vec![theta];
                positions.extend(pts.iter().map(|p| p.1));
                let w = lagrange_at_zero(&positions);
                BoundaryNode {
                    node: b,
                    value: w[0] * phi_p,
                    coupling: pts.iter().zip(&w[1..]).map(|((j, _), wj)| (*j, *wj)).collect(),
                    anchor: Some(anchor),
                }
            }
            None => BoundaryNode { node: b, value: phi_p, coupling: vec![], anchor: Some(anchor) },
        }
    }

    fn on_edge(&self, i: usize) -> bool {
        (0..self.dims.len()).any(|a| {
            let c = (i / self.strides[a]) % self.dims[a];
            c == 0 || c + 1 == self.dims[a]
        })
    }

    /// All `3ⁿ − 1` neighbour offsets in lexicographic order.
    pub fn neighbor_offsets(&self) -> Vec<Vec<isize>> {
        let n = self.dims.len();
        let mut out = Vec::new();
        let total = 3usize.pow(n as u32);
        for code in 0..total {
            let mut c = code;
            let off: Vec<isize> = (0..n)
                .map(|_| {
                    let d = (c % 3) as isize - 1;
                    c /= 3;
                    d
                })
                .collect();
            if off.iter().any(|d| *d != 0) {
                out.push(off);
            }
        }
        out
    }

    /// Node reached from `i` by a multi-axis offset, if inside the array.
    pub fn shift(&self, i: usize, off: &[isize]) -> Option<usize> {
        let mut j = i as isize;
        for a in 0..self.dims.len() {
            let c = ((i / self.strides[a]) % self.dims[a]) as isize + off[a];
            if c < 0 || c >= self.dims[a] as isize {
                return None;
            }
            j += off[a] * self.strides[a] as isize;
        }
        Some(j as usize)
    }

    #[inline]
    pub(crate) fn step(&self, i: usize, axis: usize, s: isize) -> usize {
        (i as isize + s * self.strides[axis] as isize) as usize
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn mode(&self) -> BoundaryMode {
        self.mode
    }

    pub fn node_count(&self) -> usize {
        self.kinds.len()
    }

    pub fn kind(&self, node: usize) -> NodeKind {
        self.kinds[node]
    }

    pub fn is_interior(&self, node: usize) -> bool {
        matches!(self.kinds[node], NodeKind::Interior(_))
    }

    pub fn is_active(&self, node: usize) -> bool {
        !matches!(self.kinds[node], NodeKind::Outside)
    }

    /// Interior node ids in lexicographic order.
    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn interior_mask(&self) -> Vec<bool> {
        (0..self.kinds.len()).map(|i| self.is_interior(i)).collect()
    }

    pub fn boundary_nodes(&self) -> &[BoundaryNode] {
        &self.boundary
    }

    pub fn crossings(&self) -> &[Vec<f64>] {
        &self.crossings
    }

    pub fn coords(&self, i: usize) -> Vec<f64> {
        (0..self.dims.len())
            .map(|a| self.origin[a] + ((i / self.strides[a]) % self.dims[a]) as f64 * self.spacing)
            .collect()
    }

    /// Nearest node to `x` (not necessarily active).
    pub fn nearest_node(&self, x: &[f64]) -> Option<usize> {
        let mut i = 0;
        for a in 0..self.dims.len() {
            let c = ((x[a] - self.origin[a]) / self.spacing).round();
            if c < 0.0 || c >= self.dims[a] as f64 {
                return None;
            }
            i += c as usize * self.strides[a];
        }
        Some(i)
    }

    fn same_layout(&self, other: &Grid) -> bool {
        self.dims == other.dims
            && self.spacing == other.spacing
            && self.origin == other.origin
            && self.kinds == other.kinds
    }
}

fn lerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
}

/// Lagrange basis weights at 0 for nodes at `positions`.
fn lagrange_at_zero(positions: &[f64]) -> Vec<f64> {
    positions
        .iter()
        .enumerate()
        .map(|(i, si)| {
            positions
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .fold(1.0, |acc, (_, sj)| acc * (0.0 - sj) / (si - sj))
        })
        .collect()
}

/// Nodal values over a grid; `NaN` off the active set.
#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::arg("field length does not match the grid"));
        }
        for i in 0..values.len() {
            if grid.is_active(i) && !values[i].is_finite() {
                return Err(Error::arg(format!("non-finite field value at active node {i}")));
            }
        }
        Ok(Self { grid, values })
    }

    /// Wraps values without the finiteness check (residual fields may hold
    /// NaN at flagged nodes).
    pub(crate) fn from_raw(grid: Arc<Grid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.node_count());
        Self { grid, values }
    }

    /// Samples `f` on every active node.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.node_count())
            .map(|i| if grid.is_active(i) { f(&grid.coords(i)) } else { f64::NAN })
            .collect();
        Self { grid, values }
    }

    /// Samples an expression in `x` (with `u = 0`).
    pub fn from_expression(grid: Arc<Grid>, e: &Expression) -> Result<Self> {
        let mut values = vec![f64::NAN; grid.node_count()];
        for (i, v) in values.iter_mut().enumerate() {
            if grid.is_active(i) {
                *v = e.eval(&grid.coords(i), 0.0)?;
            }
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, node: usize) -> f64 {
        self.values[node]
    }

    pub fn same_grid(&self, other: &ScalarField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || self.grid.same_layout(&other.grid)
    }

    pub(crate) fn check_same_grid(&self, other: &ScalarField) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::arg("fields live on different grids"))
        }
    }

    /// Overwrites boundary nodes from their rules.
    pub fn apply_boundary(&mut self) {
        let grid = self.grid.clone();
        for b in grid.boundary_nodes() {
            self.values[b.node] = b.apply(&self.values);
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let values = self.values.iter().map(|v| if v.is_nan() { *v } else { f(*v) }).collect();
        Self { grid: self.grid.clone(), values }
    }

    /// Interior-node values, in interior order.
    pub fn interior_values(&self) -> Vec<f64> {
        self.grid.interior().iter().map(|&i| self.values[i]).collect()
    }

    /// Second-order jet at the `k`-th interior node.
    pub fn jet(&self, k: usize) -> Jet2 {
        let i = self.grid.interior()[k];
        Jet2 { u: self.values[i], du: gradient_at(self, i), d2u: hessian_at(self, i) }
    }

    /// Writes `x,y[,z],value` rows for the active nodes, 17 significant digits.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        let axes = ["x", "y", "z", "w"];
        let n = self.grid.dim();
        let header: Vec<String> = (0..n).map(|a| axes.get(a).map_or(format!("x{}", a + 1), |s| s.to_string())).collect();
        writeln!(out, "{},value", header.join(","))?;
        for i in 0..self.values.len() {
            if !self.grid.is_active(i) {
                continue;
            }
            let x = self.grid.coords(i);
            let cols: Vec<String> = x.iter().map(|v| fmt17(*v)).collect();
            writeln!(out, "{},{}", cols.join(","), fmt17(self.values[i]))?;
        }
        out.flush()?;
        Ok(())
    }

    /// Binary layout: magic `DHLFLD01`, `ndim: u64`, `dims: u64 × ndim`,
    /// `spacing: f64`, `origin: f64 × ndim`, then every node value as `f64`
    /// with the first axis fastest (`NaN` off the active set). Little-endian.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(FIELD_MAGIC)?;
        out.write_all(&(self.grid.dim() as u64).to_le_bytes())?;
        for d in self.grid.dims() {
            out.write_all(&(*d as u64).to_le_bytes())?;
        }
        out.write_all(&self.grid.spacing().to_le_bytes())?;
        for o in self.grid.origin() {
            out.write_all(&o.to_le_bytes())?;
        }
        for v in &self.values {
            out.write_all(&v.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a binary dump onto `grid`, checking the header matches.
    pub fn read_binary(grid: Arc<Grid>, path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        File::open(path)?.read_to_end(&mut bytes)?;
        let bad = |m: &str| Error::arg(format!("{}: {m}", path.display()));
        if bytes.len() < 16 || &bytes[..8] != FIELD_MAGIC {
            return Err(bad("missing DHLFLD01 header"));
        }
        let mut pos = 8;
        let mut next8 = |bytes: &[u8]| -> Result<[u8; 8]> {
            let chunk = bytes.get(pos..pos + 8).ok_or_else(|| bad("truncated file"))?;
            pos += 8;
            Ok(chunk.try_into().expect("8 bytes"))
        };
        let ndim = u64::from_le_bytes(next8(&bytes)?) as usize;
        if ndim != grid.dim() {
            return Err(bad("dimension mismatch"));
        }
        for d in grid.dims() {
            if u64::from_le_bytes(next8(&bytes)?) as usize != *d {
                return Err(bad("node counts differ from the grid"));
            }
        }
        if f64::from_le_bytes(next8(&bytes)?) != grid.spacing() {
            return Err(bad("spacing differs from the grid"));
        }
        for o in grid.origin() {
            if f64::from_le_bytes(next8(&bytes)?) != *o {
                return Err(bad("origin differs from the grid"));
            }
        }
        let mut values = Vec::with_capacity(grid.node_count());
        for _ in 0..grid.node_count() {
            values.push(f64::from_le_bytes(next8(&bytes)?));
        }
        Self::new(grid, values)
    }
}

/// 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn gradient_at(f: &ScalarField, i: usize) -> Vec<f64> {
    let g = f.grid();
    let h2 = 2.0 * g.spacing;
    (0..g.dim())
        .map(|a| (f.values[g.step(i, a, 1)] - f.values[g.step(i, a, -1)]) / h2)
        .collect()
}

fn hessian_at(f: &ScalarField, i: usize) -> SymMatrix {
    let g = f.grid();
    let h = g.spacing;
    let v = &f.values;
    let n = g.dim();
    SymMatrix::from_upper_fn(n, |a, b| {
        if a == b {
            (v[g.step(i, a, 1)] - 2.0 * v[i] + v[g.step(i, a, -1)]) / (h * h)
        } else {
            let pp = g.step(g.step(i, a, 1), b, 1);
            let pm = g.step(g.step(i, a, 1), b, -1);
            let mp = g.step(g.step(i, a, -1), b, 1);
            let mm = g.step(g.step(i, a, -1), b, -1);
            (v[pp] - v[pm] - v[mp] + v[mm]) / (4.0 * h * h)
        }
    })
}

/// Central-difference Hessians at the interior nodes (interior order).
pub fn hessian_central(f: &ScalarField) -> Vec<SymMatrix> {
    f.grid().interior().par_iter().map(|&i| hessian_at(f, i)).collect()
}

/// Central-difference gradients at the interior nodes (interior order).
pub fn gradient_central(f: &ScalarField) -> Vec<Vec<f64>> {
    f.grid().interior().par_iter().map(|&i| gradient_at(f, i)).collect()
}

#[derive(Clone, Copy, PartialEq)]
struct Pending {
    d: f64,
    node: usize,
}

impl Eq for Pending {}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        other.d.total_cmp(&self.d).then(other.node.cmp(&self.node))
    }
}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Approximate distance to the boundary at every active node.
///
/// Sources are the boundary crossings on grid edges; each node inherits the
/// nearest source known to a neighbour (Dijkstra order, `3ⁿ` neighbourhood).
pub fn distance_field(grid: &Arc<Grid>) -> ScalarField {
    let total = grid.node_count();
    let mut best: Vec<Option<usize>> = vec![None; total];
    let mut dbest = vec![f64::INFINITY; total];
    let mut heap = BinaryHeap::new();
    let sources = grid.crossings();
    for (s, p) in sources.iter().enumerate() {
        if let Some(c) = grid.nearest_node(p) {
            // seed the two grid nodes bracketing the crossing and their neighbours
            let mut seeds = vec![c];
            for off in grid.neighbor_offsets() {
                if let Some(j) = grid.shift(c, &off) {
                    seeds.push(j);
                }
            }
            for j in seeds {
                if !grid.is_active(j) {
                    continue;
                }
                let d = dist(&grid.coords(j), p);
                if d < dbest[j] {
                    dbest[j] = d;
                    best[j] = Some(s);
                    heap.push(Pending { d, node: j });
                }
            }
        }
    }
    let offsets = grid.neighbor_offsets();
    while let Some(Pending { d, node }) = heap.pop() {
        if d > dbest[node] {
            continue;
        }
        let src = best[node].expect("popped nodes have a source");
        for off in &offsets {
            let Some(j) = grid.shift(node, off) else { continue };
            if !grid.is_active(j) {
                continue;
            }
            let dj = dist(&grid.coords(j), &sources[src]);
            if dj < dbest[j] - 1e-15 {
                dbest[j] = dj;
                best[j] = Some(src);
                heap.push(Pending { d: dj, node: j });
            }
        }
    }
    let values = (0..total).map(|i| if grid.is_active(i) { dbest[i] } else { f64::NAN }).collect();
    ScalarField { grid: grid.clone(), values }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> DomainDescriptor {
        DomainDescriptor::Rectangle { lo: vec![0.0, 0.0], hi: vec![1.0, 1.0] }
    }

    fn unit_disk() -> DomainDescriptor {
        DomainDescriptor::Disk { center: vec![0.0, 0.0], radius: 1.0 }
    }

    #[test]
    fn square_interior_count() {
        let g = build_grid(&unit_square(), 17, &|_| 0.0).unwrap();
        assert_eq!(g.interior().len(), 15 * 15);
        assert_eq!(g.spacing(), 1.0 / 16.0);
        // the edges plus four corners
        assert_eq!(g.boundary_nodes().len(), 4 * 15 + 4);
        for b in g.boundary_nodes() {
            assert!(b.coupling.is_empty(), "square boundary nodes sit on the boundary");
        }
    }

    #[test]
    fn disk_interior_count() {
        let g = build_grid(&unit_disk(), 33, &|_| 0.0).unwrap();
        let expect = std::f64::consts::FRAC_PI_4 * 31.0 * 31.0;
        let count = g.interior().len() as f64;
        assert!((count - expect).abs() <= 62.0, "count {count}");
    }

    #[test]
    fn every_interior_node_has_a_closed_stencil() {
        let g = build_grid(&unit_disk(), 21, &|_| 0.0).unwrap();
        for &i in g.interior() {
            for off in g.neighbor_offsets() {
                assert!(g.is_active(g.shift(i, &off).unwrap()));
            }
        }
        for b in g.boundary_nodes() {
            assert!(!g.is_interior(b.node));
        }
    }

    #[test]
    fn empty_domain_and_low_resolution() {
        let tiny = DomainDescriptor::Sublevel {
            expr: Expression::parse("1").unwrap(),
            lo: vec![0.0, 0.0],
            hi: vec![1.0, 1.0],
        };
        assert!(matches!(build_grid(&tiny, 17, &|_| 0.0), Err(Error::Domain(_))));
        assert!(build_grid(&unit_square(), 5, &|_| 0.0).is_err());
    }

    #[test]
    fn stencils_exact_on_quadratics() {
        let g = Arc::new(build_grid(&unit_disk(), 17, &|_| 0.0).unwrap());
        let f = ScalarField::from_fn(g.clone(), |x| x[0] * x[0]);
        for m in hessian_central(&f) {
            assert!((m.get(0, 0) - 2.0).abs() < 1e-11);
            assert!(m.get(1, 1).abs() < 1e-11 && m.get(0, 1).abs() < 1e-11);
        }
        let f = ScalarField::from_fn(g.clone(), |x| x[0] * x[1]);
        for m in hessian_central(&f) {
            assert!((m.get(0, 1) - 1.0).abs() < 1e-11);
        }
        let f = ScalarField::from_fn(g.clone(), |x| 3.0 * x[0] - 2.0 * x[1] + 0.5);
        for d in gradient_central(&f) {
            assert!((d[0] - 3.0).abs() < 1e-12 && (d[1] + 2.0).abs() < 1e-12);
        }
        let f = ScalarField::from_fn(g.clone(), |x| x[0] * x[0]);
        let grads = gradient_central(&f);
        for (k, &i) in g.interior().iter().enumerate() {
            let x = g.coords(i);
            assert!((grads[k][0] - 2.0 * x[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn extrapolation_reproduces_quadratics_at_ghosts() {
        // The rule is exact for polynomials of degree < number of points.
        let u = |x: &[f64]| 0.5 * (x[0] * x[0] + x[1] * x[1] - 1.0) + 0.3 * x[0];
        let g = Arc::new(build_grid(&unit_disk(), 33, &u).unwrap());
        let mut f = ScalarField::from_fn(g.clone(), u);
        let exact = f.clone();
        f.apply_boundary();
        for b in g.boundary_nodes() {
            let err = (f.get(b.node) - exact.get(b.node)).abs();
            let tol = if b.coupling.len() >= 2 { 1e-12 } else { 4.0 * g.spacing().powi(2) };
            assert!(err < tol, "ghost error {err}");
        }
    }

    #[test]
    fn distance_examples() {
        let g = Arc::new(build_grid(&unit_disk(), 65, &|_| 0.0).unwrap());
        let h = g.spacing();
        let d = distance_field(&g);
        let center = g.nearest_node(&[0.0, 0.0]).unwrap();
        assert!((d.get(center) - 1.0).abs() <= 2.0 * h);
        for &i in g.interior() {
            let x = g.coords(i);
            let exact = 1.0 - dist(&x, &[0.0, 0.0]);
            assert!((d.get(i) - exact).abs() <= 2.0 * h);
        }

        let rect = DomainDescriptor::Rectangle { lo: vec![0.0, 0.0], hi: vec![2.0, 1.0] };
        let g = Arc::new(build_grid(&rect, 33, &|_| 0.0).unwrap());
        let d = distance_field(&g);
        for &i in g.interior() {
            let x = g.coords(i);
            let exact = x[0].min(2.0 - x[0]).min(x[1]).min(1.0 - x[1]);
            assert!((d.get(i) - exact).abs() <= 2.0 * g.spacing());
        }
    }

    #[test]
    fn level_set_masks_nest() {
        let g = Arc::new(build_grid(&unit_disk(), 41, &|_| 0.0).unwrap());
        let usub = ScalarField::from_fn(g.clone(), |x| 1.0 - dist(x, &[0.0, 0.0]));
        let a = level_set_domain(&usub, 0.3).unwrap();
        let b = level_set_domain(&usub, 0.5).unwrap();
        for (ma, mb) in a.mask.iter().zip(&b.mask) {
            assert!(!mb || *ma);
        }
        for (i, m) in b.mask.iter().enumerate() {
            if g.is_active(i) {
                let r = dist(&g.coords(i), &[0.0, 0.0]);
                assert_eq!(*m, r < 0.5, "r = {r}");
            }
        }
        assert!(b.band.iter().all(|(_, v)| *v == 0.5));
        assert!(matches!(level_set_domain(&usub, 2.0), Err(Error::Domain(_))));
    }

    #[test]
    fn binary_and_csv_dumps() {
        let g = Arc::new(build_grid(&unit_disk(), 17, &|_| 0.0).unwrap());
        let f = ScalarField::from_fn(g.clone(), |x| x[0].sin() + x[1]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.bin");
        f.write_binary(&p).unwrap();
        let back = ScalarField::read_binary(g.clone(), &p).unwrap();
        for (a, b) in f.values().iter().zip(back.values()) {
            assert!(a.to_bits() == b.to_bits());
        }
        let raw = std::fs::read(&p).unwrap();
        assert_eq!(&raw[..8], b"DHLFLD01");
        let c = dir.path().join("f.csv");
        f.write_csv(&c).unwrap();
        let text = std::fs::read_to_string(&c).unwrap();
        assert!(text.starts_with("x,y,value\n"));
        let active = (0..g.node_count()).filter(|i| g.is_active(*i)).count();
        assert_eq!(text.lines().count(), active + 1);
    }
}
