//! Metric and intersection tools on the Grassmannian.
//!
//! The topology of G_n(R^{2n}) is that of the projector metric
//! d(V, W) = ‖P_V − P_W‖. Intersections are computed through principal
//! angles; for tiny angles the sine is obtained from the projection of one
//! frame onto the orthogonal complement of the other, which stays accurate
//! where cosines saturate at 1.

use nalgebra::DMatrix;

use super::LagrangianSubspace;
use crate::error::{Error, Result};

/// Spectral norm of the difference of the orthogonal projectors.
pub fn grassmann_distance(v: &LagrangianSubspace, w: &LagrangianSubspace) -> f64 {
    let diff = v.projector() - w.projector();
    // Symmetric matrix: spectral norm = max |eigenvalue|.
    diff.symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0, |m, e| m.max(e.abs()))
}

/// Sines of the principal angles between two equal-rank subspaces, ascending.
///
/// Computed as the singular values of (I − P_V)·F_W, which resolves angles
/// down to machine precision even when the cosines are numerically 1.
pub fn principal_angle_sines(v: &LagrangianSubspace, w: &LagrangianSubspace) -> Vec<f64> {
    let fv = v.frame();
    let fw = w.frame();
    let residual = fw - fv * (fv.transpose() * fw);
    let mut sines: Vec<f64> = residual
        .svd(false, false)
        .singular_values
        .iter()
        .map(|s| s.min(1.0))
        .collect();
    sines.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sines
}

/// Smallest singular value of the stacked frame [F_V | F_W]; vanishes exactly
/// when the subspaces intersect and is a smooth, sign-free crossing detector.
pub fn stacked_frame_detector(v: &LagrangianSubspace, w: &LagrangianSubspace) -> f64 {
    let rows = v.ambient_dim();
    let cols = v.half_dim() + w.half_dim();
    let mut stacked = DMatrix::zeros(rows, cols);
    stacked.view_mut((0, 0), (rows, v.half_dim())).copy_from(v.frame());
    stacked
        .view_mut((0, v.half_dim()), (rows, w.half_dim()))
        .copy_from(w.frame());
    stacked
        .svd(false, false)
        .singular_values
        .iter()
        .fold(f64::INFINITY, |m, s| m.min(*s))
}

/// Orthonormal basis of the numerical intersection V ∩ W.
///
/// `tol` is on the cosine scale of the contract "cos θ > 1 − tol"; it is
/// applied to the equivalent sine-scale condition sin θ < sqrt(2·tol), which
/// is the numerically meaningful comparison for tiny angles. k = 0 returns an
/// empty 2n×0 basis.
pub fn intersection(
    v: &LagrangianSubspace,
    w: &LagrangianSubspace,
    tol: f64,
) -> Result<DMatrix<f64>> {
    frame_intersection(v.frame(), w.frame(), tol)
}

/// Intersection of two subspaces given by orthonormal frames; the Lagrangian
/// structure plays no role here.
pub fn frame_intersection(
    fv: &DMatrix<f64>,
    fw: &DMatrix<f64>,
    tol: f64,
) -> Result<DMatrix<f64>> {
    if fv.nrows() != fw.nrows() {
        return Err(Error::InvalidInput(format!(
            "ambient dimension mismatch: {} vs {}",
            fv.nrows(),
            fw.nrows()
        )));
    }
    let sine_tol = (2.0 * tol).sqrt();

    // SVD of F_Vᵀ F_W: principal directions; small angles are then refined on
    // the sine scale.
    let overlap = fv.transpose() * fw;
    let svd = overlap.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd with u");
    let vt = svd.v_t.as_ref().expect("svd with v_t");

    // Candidate directions ordered by decreasing cosine.
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap()
    });

    let mut kept: Vec<nalgebra::DVector<f64>> = Vec::new();
    for &i in &order {
        let dir_v = fv * u.column(i).clone_owned();
        let dir_w = fw * vt.row(i).transpose();
        // sine of the angle between the paired principal directions
        let sine = {
            let residual = &dir_w - &dir_v * dir_v.dot(&dir_w);
            residual.norm()
        };
        if sine < sine_tol {
            // average the two sides of the pairing for symmetry
            let mut avg = (&dir_v + &dir_w) * 0.5;
            let nrm = avg.norm();
            if nrm > 0.0 {
                avg /= nrm;
            }
            kept.push(avg);
        }
    }

    let k = kept.len();
    let mut basis = DMatrix::zeros(fv.nrows(), k);
    for (j, col) in kept.iter().enumerate() {
        basis.set_column(j, col);
    }
    if k > 1 {
        basis = basis.qr().q();
    }
    Ok(basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symplectic::standard_j;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn line(theta: f64) -> LagrangianSubspace {
        let mut f = DMatrix::zeros(2, 1);
        f[(0, 0)] = theta.cos();
        f[(1, 0)] = theta.sin();
        LagrangianSubspace::from_frame(f).unwrap()
    }

    #[test]
    fn distance_of_equal_subspaces_is_zero() {
        let v = line(0.3);
        assert!(grassmann_distance(&v, &v) < 1e-14);
    }

    #[test]
    fn distance_of_orthogonal_lines_is_one() {
        let v = line(0.0);
        let w = line(std::f64::consts::FRAC_PI_2);
        assert_relative_eq!(grassmann_distance(&v, &w), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn distance_matches_projector_oracle() {
        // oracle: direct 2x2 projector construction, |sin theta|
        for &theta in &[0.1, 0.4, 1.0, 1.4] {
            let v = line(0.0);
            let w = line(theta);
            let p_v = v.projector();
            let p_w = w.projector();
            let oracle = (p_v - p_w)
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .fold(0.0f64, |m, e| m.max(e.abs()));
            assert_relative_eq!(grassmann_distance(&v, &w), theta.sin().abs(), epsilon = 1e-12);
            assert_relative_eq!(oracle, theta.sin().abs(), epsilon = 1e-12);
        }
    }

    #[test]
    fn intersection_of_equal_subspaces_is_full() {
        let n = 2;
        let mut f = DMatrix::zeros(4, 2);
        f[(0, 0)] = 1.0;
        f[(1, 1)] = 1.0;
        let v = LagrangianSubspace::from_frame(f).unwrap();
        let basis = intersection(&v, &v, 5e-13).unwrap();
        assert_eq!(basis.ncols(), n);
    }

    #[test]
    fn transversal_pair_has_empty_intersection() {
        let v = line(0.0);
        let w = line(0.7);
        assert_eq!(intersection(&v, &w, 5e-13).unwrap().ncols(), 0);
    }

    #[test]
    fn partial_intersection_n2() {
        // V = span{e1, e2}, W = span{e1, (e3 + e4)/sqrt(2)}: one common
        // direction. The second W column is not isotropic against e1, so this
        // exercises the frame-level routine.
        let mut fv = DMatrix::zeros(4, 2);
        fv[(0, 0)] = 1.0;
        fv[(1, 1)] = 1.0;

        let mut fw = DMatrix::zeros(4, 2);
        fw[(0, 0)] = 1.0;
        fw[(2, 1)] = std::f64::consts::FRAC_1_SQRT_2;
        fw[(3, 1)] = std::f64::consts::FRAC_1_SQRT_2;

        let basis = frame_intersection(&fv, &fw, 5e-13).unwrap();
        assert_eq!(basis.ncols(), 1);
        // oracle: the principal-angle SVD pairing must return e1
        assert_relative_eq!(basis[(0, 0)].abs(), 1.0, epsilon = 1e-12);
        for r in 1..4 {
            assert!(basis[(r, 0)].abs() < 1e-12);
        }

        // Lagrangian variant of the same configuration: span{e1, e4} is
        // isotropic and still meets V exactly in e1.
        let v = LagrangianSubspace::from_frame(fv).unwrap();
        let mut fl = DMatrix::zeros(4, 2);
        fl[(0, 0)] = 1.0;
        fl[(3, 1)] = 1.0;
        let j = standard_j(2);
        assert!((fl.transpose() * &j * &fl).amax() < 1e-15);
        let w = LagrangianSubspace::from_frame(fl).unwrap();
        let basis = intersection(&v, &w, 5e-13).unwrap();
        assert_eq!(basis.ncols(), 1);
        assert_relative_eq!(basis[(0, 0)].abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn detector_scales_like_angle_over_sqrt2() {
        let v = line(0.0);
        for &theta in &[1e-3, 1e-5, 1e-7] {
            let w = line(theta);
            let d = stacked_frame_detector(&v, &w);
            assert_relative_eq!(d, theta / std::f64::consts::SQRT_2, max_relative = 1e-3);
        }
    }
}
