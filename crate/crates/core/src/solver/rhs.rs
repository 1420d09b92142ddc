//! Right-hand side regularizations.

use crate::error::{Error, Result};

/// Cut-off `η` on `[0, ∞)`: 1 on `[0, θ₀/4]`, 0 on `[θ₀/2, ∞)`, joined by
/// the quintic smoothstep (C², nonincreasing).
///
/// With `s = 4t/θ₀ − 1`, `η = 1 − (10s³ − 15s⁴ + 6s⁵)`, so
/// `|η'| ≤ 7.5/θ₀` and `|η''| ≤ 93/θ₀²`.
pub fn cutoff_eta(t: f64, theta0: f64) -> Result<f64> {
    if !(theta0 > 0.0) {
        return Err(Error::arg(format!("theta0 must be positive, got {theta0}")));
    }
    if t.is_nan() || t < 0.0 {
        return Err(Error::arg(format!("cutoff argument must be nonnegative, got {t}")));
    }
    Ok(eta(t, theta0))
}

pub(crate) fn eta(t: f64, theta0: f64) -> f64 {
    let q = 0.25 * theta0;
    if t <= q {
        1.0
    } else if t >= 2.0 * q {
        0.0
    } else {
        let s = (t - q) / q;
        1.0 - s * s * s * (10.0 + s * (-15.0 + 6.0 * s))
    }
}

/// `[f̃ + ε η(f̃)]^{k−1}` where `f̃ = f^{1/(k−1)}`.
pub fn f_epsilon(f_tilde: f64, eps: f64, k: usize, theta0: f64) -> Result<f64> {
    if k < 2 {
        return Err(Error::arg("regularization needs k >= 2 (k = 1 is the mean-curvature case)"));
    }
    if !(f_tilde >= 0.0) {
        return Err(Error::arg(format!("f_tilde must be nonnegative, got {f_tilde}")));
    }
    if !(eps >= 0.0) {
        return Err(Error::arg("eps must be nonnegative"));
    }
    let eta = cutoff_eta(f_tilde, theta0)?;
    Ok((f_tilde + eps * eta).powi(k as i32 - 1))
}

/// `f + 1/j`.
pub fn j_regularized_rhs(f: f64, j: u32) -> Result<f64> {
    if j == 0 {
        return Err(Error::arg("j must be positive"));
    }
    Ok(f + 1.0 / j as f64)
}

/// `f^{1/(k-1)}` with negative round-off clamped to zero.
pub fn f_tilde(f: f64, k: usize) -> f64 {
    let f = f.max(0.0);
    if k == 2 {
        f
    } else {
        f.powf(1.0 / (k - 1) as f64)
    }
}

/// Which right-hand side a discrete solve uses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RhsMode {
    Exact,
    /// `f_ε` with cut-off threshold `θ₀`.
    Regularized { eps: f64, theta0: f64 },
    /// `f + 1/j`.
    JRegularized(u32),
    /// A constant right-hand side replacing `f`.
    Constant(f64),
}

impl RhsMode {
    /// Applies the mode to a raw value of `f`.
    pub fn apply(&self, f: f64, k: usize) -> f64 {
        match *self {
            RhsMode::Exact => f,
            RhsMode::Regularized { eps, theta0 } => {
                let ft = f_tilde(f, k);
                (ft + eps * eta(ft, theta0)).powi(k as i32 - 1)
            }
            RhsMode::JRegularized(j) => f + 1.0 / j as f64,
            RhsMode::Constant(c) => c,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eta_branches() {
        let th = 0.8;
        assert_eq!(cutoff_eta(0.0, th).unwrap(), 1.0);
        assert_eq!(cutoff_eta(th, th).unwrap(), 0.0);
        assert_eq!(cutoff_eta(th / 4.0, th).unwrap(), 1.0);
        assert_eq!(cutoff_eta(th / 2.0, th).unwrap(), 0.0);
        // s = 1/2: 1 - (10/8 - 15/16 + 6/32) = 1/2
        let mid = cutoff_eta(3.0 * th / 8.0, th).unwrap();
        assert!((mid - 0.5).abs() < 1e-15);
        assert!(cutoff_eta(0.1, 0.0).is_err());
        assert!(cutoff_eta(-0.1, 1.0).is_err());
    }

    #[test]
    fn eta_is_monotone_with_bounded_derivatives() {
        let th = 0.37;
        let n = 4000;
        let dt = th / n as f64;
        let vals: Vec<f64> = (0..=n).map(|i| eta(i as f64 * dt, th)).collect();
        for w in vals.windows(2) {
            assert!(w[1] <= w[0]);
        }
        for w in vals.windows(3) {
            let d1 = (w[2] - w[0]) / (2.0 * dt);
            let d2 = (w[2] - 2.0 * w[1] + w[0]) / (dt * dt);
            assert!(d1.abs() <= 100.0 / th);
            assert!(d2.abs() <= 100.0 / (th * th));
        }
    }

    #[test]
    fn f_epsilon_examples() {
        let th = 0.4;
        assert!((f_epsilon(0.0, 0.1, 3, th).unwrap() - 0.01).abs() < 1e-15);
        assert_eq!(f_epsilon(0.3, 0.1, 3, th).unwrap(), 0.09);
        let v = f_epsilon(th / 4.0, 0.1, 3, th).unwrap();
        assert!((v - (th / 4.0 + 0.1f64).powi(2)).abs() < 1e-15);
        assert!(f_epsilon(0.1, 0.1, 1, th).is_err());
    }

    #[test]
    fn j_regularization() {
        assert_eq!(j_regularized_rhs(0.0, 10).unwrap(), 0.1);
        assert_eq!(j_regularized_rhs(2.0, 4).unwrap(), 2.25);
        assert!((j_regularized_rhs(1.0, u32::MAX).unwrap() - 1.0).abs() < 1e-9);
        assert!(j_regularized_rhs(1.0, 0).is_err());
    }

    #[test]
    fn mode_matches_free_functions() {
        let m = RhsMode::Regularized { eps: 0.05, theta0: 0.6 };
        for f in [0.0, 0.01, 0.04, 0.2, 1.0] {
            let ft = f_tilde(f, 3);
            assert!((m.apply(f, 3) - f_epsilon(ft, 0.05, 3, 0.6).unwrap()).abs() < 1e-15);
        }
    }
}
