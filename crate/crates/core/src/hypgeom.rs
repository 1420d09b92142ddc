//! Graphs in the upper half-space model of hyperbolic space.
//!
//! For a graph `x ↦ (x, u(x))` with `u > 0`, the hyperbolic principal
//! curvatures are the eigenvalues of
//! `a = (1/w)(I + u γ D²u γ)` with `γ^{ij} = δ_ij − u_i u_j/(w(1+w))`.

use crate::error::{Error, Result};
use crate::graphgeom::{frame_from_gradient, graph_frame, Jet2};
use crate::grid::ScalarField;
use crate::symmfunc::{self, ConeStatus, SymMatrix, SymSpectrum, CONE_TOL};

/// A jet with strictly positive height.
#[derive(Clone, Debug, PartialEq)]
pub struct HypJet(Jet2);

impl HypJet {
    pub fn new(jet: Jet2) -> Result<Self> {
        if !(jet.u > 0.0) {
            return Err(Error::domain(format!("hyperbolic graphs need u > 0, got {}", jet.u)));
        }
        Ok(Self(jet))
    }

    pub fn jet(&self) -> &Jet2 {
        &self.0
    }
}

#[derive(Clone, Debug)]
pub struct HypCurvature {
    pub a_hyp: SymMatrix,
    pub kappa_tilde: SymSpectrum,
    /// `h̃_ij = (δ_ij + u_i u_j + u u_ij)/(u² w)`
    pub h_tilde: SymMatrix,
    /// `g̃_ij = (δ_ij + u_i u_j)/u²`
    pub g_tilde: SymMatrix,
    /// `Γ_k` status of `κ̃`.
    pub cone: ConeStatus,
}

/// `(1/w)(I + u γ D²u γ)`; shared with the solver's operator evaluation.
pub(crate) fn hyp_matrix(u: f64, du: &[f64], d2u: &SymMatrix) -> SymMatrix {
    let frame = frame_from_gradient(du);
    let n = du.len();
    d2u.congruence(&frame.gamma_up)
        .scale(u)
        .add(&SymMatrix::identity(n))
        .scale(1.0 / frame.w)
}

pub fn hyp_curvature_matrix(hj: &HypJet, k: usize) -> Result<HypCurvature> {
    let jet = hj.jet();
    let frame = graph_frame(jet);
    let u = jet.u;
    let a_hyp = hyp_matrix(u, &jet.du, &jet.d2u);
    let kappa_tilde = symmfunc::eigenvalues(&a_hyp)?;
    let cone = symmfunc::cone_status(&kappa_tilde, k, CONE_TOL)?;
    let g_tilde = frame.metric.scale(1.0 / (u * u));
    let h_tilde = frame.metric.add(&jet.d2u.scale(u)).scale(1.0 / (u * u * frame.w));
    Ok(HypCurvature { a_hyp, kappa_tilde, h_tilde, g_tilde, cone })
}

/// Right-hand side of `h̃ = h/u + (v/u²) g` built from the Euclidean data,
/// for checking against [`HypCurvature::h_tilde`].
pub fn h_tilde_from_euclidean(hj: &HypJet) -> SymMatrix {
    let jet = hj.jet();
    let frame = graph_frame(jet);
    let u = jet.u;
    let h = jet.d2u.scale(1.0 / frame.w);
    h.scale(1.0 / u).add(&frame.metric.scale(frame.v / (u * u)))
}

/// `max(ū² − u² − c, 0)` nodewise (NaN off the active set).
pub fn hyp_pogorelov_weight(ubar: &ScalarField, u: &ScalarField, c: f64) -> Result<ScalarField> {
    ubar.check_same_grid(u)?;
    let values = ubar
        .values()
        .iter()
        .zip(u.values())
        .map(|(b, v)| if b.is_nan() || v.is_nan() { f64::NAN } else { (b * b - v * v - c).max(0.0) })
        .collect();
    ScalarField::new(ubar.grid_arc().clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphgeom::delta;

    fn hj(u: f64, du: &[f64], d2u: SymMatrix) -> HypJet {
        HypJet::new(Jet2::new(u, du.to_vec(), d2u).unwrap()).unwrap()
    }

    #[test]
    fn horizontal_plane() {
        let c = hyp_curvature_matrix(&hj(1.0, &[0.0, 0.0], SymMatrix::zeros(2)), 2).unwrap();
        assert_eq!(c.a_hyp, SymMatrix::identity(2));
        assert_eq!(c.kappa_tilde.values(), &[1.0, 1.0]);
        assert!(c.cone.is_interior());
    }

    #[test]
    fn upper_hemisphere_is_totally_geodesic() {
        // u = sqrt(R²-|x|²): u_i = -x_i/s, u_ij = -δ_ij/s - x_i x_j/s³.
        let r = 2.0;
        let x = [0.4, -0.9, 0.3];
        let s = (r * r - x.iter().map(|v| v * v).sum::<f64>()).sqrt();
        let du: Vec<f64> = x.iter().map(|v| -v / s).collect();
        let d2u = SymMatrix::from_upper_fn(3, |i, j| -delta(i, j) / s - x[i] * x[j] / s.powi(3));
        let c = hyp_curvature_matrix(&hj(s, &du, d2u), 1).unwrap();
        for k in c.kappa_tilde.values() {
            assert!(k.abs() < 1e-12, "{k}");
        }
    }

    #[test]
    fn relation_to_euclidean_form() {
        let d2u = SymMatrix::from_rows(&[&[0.3, -1.2], &[-1.2, 2.0]]).unwrap();
        let j = hj(0.7, &[1.5, -0.4], d2u);
        let c = hyp_curvature_matrix(&j, 1).unwrap();
        let rhs = h_tilde_from_euclidean(&j);
        for (a, b) in c.h_tilde.entries().iter().zip(rhs.entries()) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
        let g = SymMatrix::from_upper_fn(2, |i, k| (delta(i, k) + j.jet().du[i] * j.jet().du[k]) / 0.49);
        for (a, b) in c.g_tilde.entries().iter().zip(g.entries()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn nonpositive_height_is_rejected() {
        let jet = Jet2::new(0.0, vec![0.0], SymMatrix::zeros(1)).unwrap();
        assert!(matches!(HypJet::new(jet), Err(Error::Domain(_))));
    }
}
