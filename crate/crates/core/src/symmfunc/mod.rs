//! Elementary symmetric functions, their matrix derivatives and the Gårding cones.

mod eigen;
mod matrix;

use std::ops::{Add, Mul};

use num_traits::{One, Zero};

use crate::error::{Error, Result};

pub use eigen::{eigen_sym, eigenvalues, EigenDecomposition, MAX_EIGEN_DIM};
pub use matrix::SymMatrix;

/// Default strictness tolerance shared by every cone test in the crate.
pub const CONE_TOL: f64 = 1e-12;

/// An eigenvalue / principal-curvature vector.
#[derive(Clone, Debug, PartialEq)]
pub struct SymSpectrum {
    values: Vec<f64>,
    sorted: bool,
}

impl SymSpectrum {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::arg("spectrum must have at least one entry"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("spectrum entries must be finite"));
        }
        let sorted = values.windows(2).all(|w| w[0] >= w[1]);
        Ok(Self { values, sorted })
    }

    /// Sorts descending.
    pub fn sorted(mut values: Vec<f64>) -> Result<Self> {
        values.sort_by(|a, b| b.total_cmp(a));
        Self::new(values)
    }

    pub(crate) fn sorted_unchecked(values: Vec<f64>) -> Self {
        Self { values, sorted: true }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// True when the entries are known to be in descending order.
    pub fn is_sorted(&self) -> bool {
        self.sorted
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConeLabel {
    Interior,
    Boundary,
    Outside,
}

/// Classification against `Γ_k`; `margin = min_{1≤m≤k} σ_m`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConeStatus {
    pub label: ConeLabel,
    pub margin: f64,
}

impl ConeStatus {
    pub fn is_interior(&self) -> bool {
        self.label == ConeLabel::Interior
    }
}

/// `C(n, k)` as a float.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// All of `σ_0, …, σ_kmax` by the prefix-polynomial recurrence
/// `σ_j^{(i)} = σ_j^{(i-1)} + λ_i σ_{j-1}^{(i-1)}`.
pub fn elementary_generic<T>(values: &[T], kmax: usize) -> Vec<T>
where
    T: Clone + Zero + One + Add<Output = T> + Mul<Output = T>,
{
    let mut e = vec![T::zero(); kmax + 1];
    e[0] = T::one();
    for (i, lambda) in values.iter().enumerate() {
        let top = kmax.min(i + 1);
        for j in (1..=top).rev() {
            e[j] = e[j].clone() + lambda.clone() * e[j - 1].clone();
        }
    }
    e
}

/// All of `σ_0(λ), …, σ_kmax(λ)`.
pub fn elementary(values: &[f64], kmax: usize) -> Vec<f64> {
    elementary_generic(values, kmax)
}

/// `σ_k(λ)` in any commutative ring (used with exact rationals in tests).
pub fn sigma_generic<T>(values: &[T], k: usize) -> Result<T>
where
    T: Clone + Zero + One + Add<Output = T> + Mul<Output = T>,
{
    if k > values.len() {
        return Err(Error::arg(format!("order {k} exceeds dimension {}", values.len())));
    }
    Ok(elementary_generic(values, k).pop().expect("kmax+1 entries"))
}

/// `σ_k(λ)`; `σ_0 ≡ 1`.
pub fn sigma(lam: &SymSpectrum, k: usize) -> Result<f64> {
    sigma_generic(lam.values(), k)
}

/// `σ_m(λ)` with the listed (zero-based) entries set to zero.
pub fn sigma_truncated(lam: &SymSpectrum, m: usize, zeroed: &[usize]) -> Result<f64> {
    let n = lam.len();
    let mut seen = vec![false; n];
    for &i in zeroed {
        if i >= n {
            return Err(Error::arg(format!("index {i} out of range for dimension {n}")));
        }
        if seen[i] {
            return Err(Error::arg(format!("duplicate index {i}")));
        }
        seen[i] = true;
    }
    let reduced: Vec<f64> =
        lam.values().iter().zip(&seen).map(|(v, z)| if *z { 0.0 } else { *v }).collect();
    sigma_generic(&reduced, m)
}

fn truncated_unchecked(values: &[f64], m: usize, zeroed: &[usize]) -> f64 {
    let reduced: Vec<f64> = values
        .iter()
        .enumerate()
        .map(|(i, v)| if zeroed.contains(&i) { 0.0 } else { *v })
        .collect();
    elementary(&reduced, m)[m]
}

/// Classifies `λ` against `Γ_k` with an absolute tolerance on each `σ_m`.
pub fn cone_status(lam: &SymSpectrum, k: usize, tol: f64) -> Result<ConeStatus> {
    if k == 0 || k > lam.len() {
        return Err(Error::arg(format!("order {k} out of range 1..={}", lam.len())));
    }
    if !(tol >= 0.0) {
        return Err(Error::arg("tolerance must be nonnegative"));
    }
    Ok(classify(&elementary(lam.values(), k), tol))
}

/// Classification from precomputed `σ_0..σ_k`.
pub(crate) fn classify(e: &[f64], tol: f64) -> ConeStatus {
    let margin = e[1..].iter().copied().fold(f64::INFINITY, f64::min);
    let label = if margin > tol {
        ConeLabel::Interior
    } else if margin >= -tol {
        ConeLabel::Boundary
    } else {
        ConeLabel::Outside
    };
    ConeStatus { label, margin }
}

/// `σ_0, …, σ_kmax` of the eigenvalues of `a`.
pub fn matrix_elementary(a: &SymMatrix, kmax: usize) -> Result<Vec<f64>> {
    Ok(elementary(eigenvalues(a)?.values(), kmax))
}

/// `σ_k^{ij}(A) = ∂σ_k(λ(A))/∂a_ij`, with `a_ij` and `a_ji` treated as
/// independent entries.
///
/// Computed from the Newton transform
/// `T_{k-1}(A) = Σ_{j<k} (-1)^j σ_{k-1-j}(A) A^j`, which stays smooth across
/// repeated eigenvalues.
pub fn sigma_gradient(a: &SymMatrix, k: usize) -> Result<SymMatrix> {
    let n = a.dim();
    if k == 0 || k > n {
        return Err(Error::arg(format!("order {k} out of range 1..={n}")));
    }
    let e = matrix_elementary(a, k)?;
    Ok(newton_transform(a, &e, k - 1))
}

/// `T_m(A)` given `σ_0..σ_m` of `A` in `e`.
pub(crate) fn newton_transform(a: &SymMatrix, e: &[f64], m: usize) -> SymMatrix {
    let n = a.dim();
    // Horner: T_m = σ_m I - A T_{m-1}, T_0 = I.
    let mut t = SymMatrix::identity(n);
    for j in 1..=m {
        let at = a.matmul(&t);
        t = SymMatrix::from_upper_fn(n, |p, q| {
            let delta = if p == q { e[j] } else { 0.0 };
            delta - 0.5 * (at[p * n + q] + at[q * n + p])
        });
    }
    t
}

/// Fourth-order tensor indexed `(i, j, p, q)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FourIndex {
    n: usize,
    data: Vec<f64>,
}

impl FourIndex {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize, p: usize, q: usize) -> f64 {
        let n = self.n;
        self.data[((i * n + j) * n + p) * n + q]
    }

    fn set(&mut self, i: usize, j: usize, p: usize, q: usize, v: f64) {
        let n = self.n;
        self.data[((i * n + j) * n + p) * n + q] = v;
    }
}

/// `σ_k^{ij,pq}` at a diagonal matrix with diagonal `λ`:
/// `σ_{k-2;ip}` when `i=j, p=q, i≠p`; `−σ_{k-2;ip}` when `i=q, j=p, i≠j`;
/// zero otherwise.
pub fn sigma_hessian_diagonal(lam: &SymSpectrum, k: usize) -> Result<FourIndex> {
    let n = lam.len();
    if n < 2 {
        return Err(Error::arg("second derivatives need n >= 2"));
    }
    if k < 2 || k > n {
        return Err(Error::arg(format!("order {k} out of range 2..={n}")));
    }
    let mut out = FourIndex { n, data: vec![0.0; n * n * n * n] };
    for i in 0..n {
        for p in 0..n {
            if i == p {
                continue;
            }
            let s = truncated_unchecked(lam.values(), k - 2, &[i, p]);
            out.set(i, i, p, p, s);
            out.set(i, p, p, i, -s);
        }
    }
    Ok(out)
}

/// Both sides of the generalized Newton–MacLaurin inequality
/// `[(σ_k/C_n^k)/(σ_l/C_n^l)]^{1/(k-l)} ≤ [(σ_r/C_n^r)/(σ_s/C_n^s)]^{1/(r-s)}`.
pub fn newton_maclaurin(
    lam: &SymSpectrum,
    k: usize,
    l: usize,
    r: usize,
    s: usize,
) -> Result<(f64, f64)> {
    let n = lam.len();
    if !(k > l && r > s && k >= r && l >= s) || k > n {
        return Err(Error::arg(format!(
            "need k>l>=0, r>s>=0, k>=r, l>=s, k<=n; got k={k} l={l} r={r} s={s} n={n}"
        )));
    }
    let e = elementary(lam.values(), k);
    let status = classify(&e, 0.0);
    if !status.is_interior() {
        return Err(Error::pre(format!(
            "spectrum not in the open cone of order {k} (margin {:.3e})",
            status.margin
        )));
    }
    let normalized = |m: usize| e[m] / binomial(n, m);
    let lhs = (normalized(k) / normalized(l)).powf(1.0 / (k - l) as f64);
    let rhs = (normalized(r) / normalized(s)).powf(1.0 / (r - s) as f64);
    Ok((lhs, rhs))
}

/// Outcome of probing the conditional bound `λ₁σ_{k-1;1} ≥ (1-δ̄)σ_k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TopEigenvalueProbe {
    /// `σ_k(λ) ≤ ε λ₁^k`
    pub holds_i: bool,
    /// `|λ_i| ≤ ε λ₁` for `i = k+1..n`
    pub holds_ii: bool,
    pub conclusion: bool,
}

impl TopEigenvalueProbe {
    pub fn hypotheses_hold(&self) -> bool {
        self.holds_i || self.holds_ii
    }
}

pub fn top_eigenvalue_bound(lam: &SymSpectrum, k: usize, delta_bar: f64, eps: f64) -> Result<TopEigenvalueProbe> {
    let n = lam.len();
    if k == 0 || k > n {
        return Err(Error::arg(format!("order {k} out of range 1..={n}")));
    }
    if !lam.values().windows(2).all(|w| w[0] >= w[1]) {
        return Err(Error::arg("spectrum must be sorted in descending order"));
    }
    if !(delta_bar > 0.0 && delta_bar < 1.0) || !(eps > 0.0) {
        return Err(Error::arg("need 0 < delta_bar < 1 and eps > 0"));
    }
    let v = lam.values();
    let e = elementary(v, k);
    if !classify(&e, 0.0).is_interior() {
        return Err(Error::pre(format!("spectrum not in the open cone of order {k}")));
    }
    let l1 = v[0];
    let sk = e[k];
    let holds_i = sk <= eps * l1.powi(k as i32);
    let holds_ii = v[k..].iter().all(|x| x.abs() <= eps * l1);
    let lhs = l1 * truncated_unchecked(v, k - 1, &[0]);
    let conclusion = lhs >= (1.0 - delta_bar) * sk;
    Ok(TopEigenvalueProbe { holds_i, holds_ii, conclusion })
}

/// `c₀ = (n-k+1) (C_n^{k-1}/C_n^k) (C_n^k/C_n^1)^{1/(k-1)}`, the constant in
/// `Σσ_k^{ii} = (n-k+1)σ_{k-1} ≥ c₀ σ_k^{1-1/(k-1)} σ_1^{1/(k-1)}`.
pub fn trace_lower_bound_constant(n: usize, k: usize) -> Result<f64> {
    if k < 2 || k > n {
        return Err(Error::arg(format!("order {k} out of range 2..={n}")));
    }
    let c = |m| binomial(n, m);
    Ok((n - k + 1) as f64 * (c(k - 1) / c(k)) * (c(k) / c(1)).powf(1.0 / (k - 1) as f64))
}
