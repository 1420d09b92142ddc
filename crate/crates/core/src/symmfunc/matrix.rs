use std::fmt;

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-14;

/// Dense symmetric matrix, row-major storage of the full square.
#[derive(Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl SymMatrix {
    /// Checked constructor: rejects non-square, non-finite or asymmetric input.
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::arg("matrix dimension must be at least 1"));
        }
        if entries.len() != n * n {
            return Err(Error::arg(format!(
                "expected {} entries for a {n}x{n} matrix, got {}",
                n * n,
                entries.len()
            )));
        }
        if let Some(pos) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::arg(format!("non-finite entry at ({}, {})", pos / n, pos % n)));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (entries[i * n + j], entries[j * n + i]);
                if (a - b).abs() > SYMMETRY_TOL {
                    return Err(Error::arg(format!(
                        "matrix is not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
            }
        }
        Ok(Self { n, entries })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        let mut entries = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::arg("rows must form a square matrix"));
            }
            entries.extend_from_slice(row);
        }
        Self::new(n, entries)
    }

    /// Builds from a generator evaluated on the upper triangle and mirrored.
    pub fn from_upper_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                entries[i * n + j] = v;
                entries[j * n + i] = v;
            }
        }
        Self { n, entries }
    }

    pub fn zeros(n: usize) -> Self {
        Self { n, entries: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        Self::diag(&vec![1.0; n])
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n);
        for (i, v) in values.iter().enumerate() {
            m.entries[i * n + i] = *v;
        }
        m
    }

    /// `x xᵀ`.
    pub fn outer(x: &[f64]) -> Self {
        Self::from_upper_fn(x.len(), |i, j| x[i] * x[j])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Sets both `(i, j)` and `(j, i)`.
    pub fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.entries[i * self.n + j] = v;
        self.entries[j * self.n + i] = v;
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scale(&self, c: f64) -> Self {
        Self { n: self.n, entries: self.entries.iter().map(|v| c * v).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n, "dimension mismatch");
        Self {
            n: self.n,
            entries: self.entries.iter().zip(&other.entries).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    /// Plain product. The result is symmetric only when the factors commute,
    /// so it is returned as a row-major square.
    pub fn matmul(&self, other: &Self) -> Vec<f64> {
        let n = self.n;
        assert_eq!(n, other.n, "dimension mismatch");
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for l in 0..n {
                let a = self.get(i, l);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] += a * other.get(l, j);
                }
            }
        }
        out
    }

    /// `t · self · t` for symmetric `t`; symmetrized to remove rounding skew.
    pub fn congruence(&self, t: &Self) -> Self {
        let n = self.n;
        let ta = t.matmul(self);
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                let mut s_t = 0.0;
                for l in 0..n {
                    s += ta[i * n + l] * t.get(l, j);
                    s_t += ta[j * n + l] * t.get(l, i);
                }
                out.set_sym(i, j, 0.5 * (s + s_t));
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    /// Applies `q · self · qᵀ` for an orthogonal (not necessarily symmetric) `q`
    /// given row-major.
    pub fn rotate(&self, q: &[f64]) -> Self {
        let n = self.n;
        Self::from_upper_fn(n, |i, j| {
            let mut s = 0.0;
            for a in 0..n {
                for b in 0..n {
                    s += q[i * n + a] * self.get(a, b) * q[j * n + b];
                }
            }
            s
        })
    }
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[f64]> = self.entries.chunks(self.n).collect();
        f.debug_struct("SymMatrix").field("n", &self.n).field("rows", &rows).finish()
    }
}
