//! Cyclic Jacobi eigen-decomposition for small symmetric matrices.

use super::matrix::SymMatrix;
use super::SymSpectrum;
use crate::error::{Error, Result};

const OFF_DIAGONAL_TOL: f64 = 1e-13;
const MAX_SWEEPS: usize = 60;
const RESIDUAL_TOL: f64 = 1e-11;
pub const MAX_EIGEN_DIM: usize = 8;

/// Eigenvalues (descending) with the matching orthonormal eigenvectors.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub values: SymSpectrum,
    /// Column `j` (stored as `vectors[j]`) is the eigenvector of `values[j]`.
    pub vectors: Vec<Vec<f64>>,
}

/// Symmetric eigen-decomposition by cyclic Jacobi rotations.
///
/// Sweeps until the off-diagonal Frobenius norm drops below `1e-13·‖A‖_F`
/// (capped at 60 sweeps), then checks `‖Aq − λq‖ ≤ 1e-11·‖A‖` per pair.
pub fn eigen_sym(a: &SymMatrix) -> Result<EigenDecomposition> {
    let n = a.dim();
    if n > MAX_EIGEN_DIM {
        return Err(Error::arg(format!("eigen_sym supports n <= {MAX_EIGEN_DIM}, got {n}")));
    }
    let scale = a.frobenius_norm();
    let mut m: Vec<f64> = a.entries().to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    if scale > 0.0 {
        let target = OFF_DIAGONAL_TOL * scale;
        let mut sweeps = 0;
        loop {
            let off: f64 = off_diagonal_norm(&m, n);
            if off <= target {
                break;
            }
            if sweeps == MAX_SWEEPS {
                return Err(Error::Numeric {
                    msg: format!("Jacobi did not converge in {MAX_SWEEPS} sweeps"),
                    residual: off,
                });
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    rotate(&mut m, &mut v, n, p, q);
                }
            }
            sweeps += 1;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j * n + j].total_cmp(&m[i * n + i]).then(i.cmp(&j)));
    let values: Vec<f64> = order.iter().map(|&i| m[i * n + i]).collect();
    let vectors: Vec<Vec<f64>> =
        order.iter().map(|&c| (0..n).map(|r| v[r * n + c]).collect()).collect();

    let bound = RESIDUAL_TOL * scale.max(f64::MIN_POSITIVE);
    for (lambda, q) in values.iter().zip(&vectors) {
        let aq = a.mul_vec(q);
        let res = aq
            .iter()
            .zip(q)
            .map(|(x, y)| (x - lambda * y).powi(2))
            .sum::<f64>()
            .sqrt();
        if res > bound && scale > 0.0 {
            return Err(Error::Numeric {
                msg: "eigenpair residual above tolerance".into(),
                residual: res,
            });
        }
    }

    Ok(EigenDecomposition { values: SymSpectrum::sorted_unchecked(values), vectors })
}

/// Eigenvalues only, descending.
pub fn eigenvalues(a: &SymMatrix) -> Result<SymSpectrum> {
    eigen_sym(a).map(|e| e.values)
}

fn off_diagonal_norm(m: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += m[i * n + j] * m[i * n + j];
            }
        }
    }
    s.sqrt()
}

fn rotate(m: &mut [f64], v: &mut [f64], n: usize, p: usize, q: usize) {
    let apq = m[p * n + q];
    if apq == 0.0 {
        return;
    }
    let app = m[p * n + p];
    let aqq = m[q * n + q];
    let theta = (aqq - app) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let t = if theta == 0.0 { 1.0 } else { t };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    for k in 0..n {
        let mkp = m[k * n + p];
        let mkq = m[k * n + q];
        m[k * n + p] = c * mkp - s * mkq;
        m[k * n + q] = s * mkp + c * mkq;
    }
    for k in 0..n {
        let mpk = m[p * n + k];
        let mqk = m[q * n + k];
        m[p * n + k] = c * mpk - s * mqk;
        m[q * n + k] = s * mpk + c * mqk;
    }
    m[p * n + q] = 0.0;
    m[q * n + p] = 0.0;

    for k in 0..n {
        let vkp = v[k * n + p];
        let vkq = v[k * n + q];
        v[k * n + p] = c * vkp - s * vkq;
        v[k * n + q] = s * vkp + c * vkq;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_diagonal() {
        let e = eigen_sym(&SymMatrix::identity(4)).unwrap();
        assert_eq!(e.values.values(), &[1.0; 4]);
        let e = eigen_sym(&SymMatrix::diag(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(e.values.values(), &[3.0, 2.0, 1.0]);
        assert!(e.values.is_sorted());
    }

    #[test]
    fn two_by_two_characteristic_polynomial() {
        // det([[2-l,1],[1,2-l]]) = (l-1)(l-3)
        let a = SymMatrix::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]).unwrap();
        let e = eigen_sym(&a).unwrap();
        assert!((e.values.values()[0] - 3.0).abs() < 1e-14);
        assert!((e.values.values()[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_matrix() {
        let e = eigen_sym(&SymMatrix::zeros(3)).unwrap();
        assert_eq!(e.values.values(), &[0.0; 3]);
    }

    #[test]
    fn deterministic_and_orthonormal() {
        let a = SymMatrix::from_rows(&[
            &[4.0, -1.0, 0.5, 0.0],
            &[-1.0, 2.0, 0.3, 1.0],
            &[0.5, 0.3, -1.0, 0.2],
            &[0.0, 1.0, 0.2, 0.0],
        ])
        .unwrap();
        let e1 = eigen_sym(&a).unwrap();
        let e2 = eigen_sym(&a).unwrap();
        assert_eq!(e1.values.values(), e2.values.values());
        for i in 0..4 {
            for j in 0..4 {
                let d: f64 = e1.vectors[i].iter().zip(&e1.vectors[j]).map(|(x, y)| x * y).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((d - expect).abs() < 1e-13);
            }
        }
        assert!((e1.values.values().iter().sum::<f64>() - a.trace()).abs() < 1e-13);
    }

    #[test]
    fn rejects_oversized() {
        assert!(eigen_sym(&SymMatrix::identity(9)).is_err());
    }
}
