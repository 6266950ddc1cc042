//! Crossing forms for Lagrangian paths and for paths of symplectic matrices.
//!
//! Near a crossing λ₀ the path is written as a graph over γ(λ₀) with respect
//! to the canonical complement W = J·γ(λ₀): every element of γ(λ) close to
//! γ(λ₀) is v + φ_λ(v) with v ∈ γ(λ₀), φ_λ(v) ∈ W. In frame coordinates
//! (F₀ = frame of γ(λ₀), G = J·F₀) the graph map is encoded by
//!
//! ```text
//! M(λ) = Gᵀ F_λ (F₀ᵀ F_λ)⁻¹,      ω(v, φ_λ(v)) = aᵀ M(λ) a,  v = F₀ a,
//! ```
//!
//! which is invariant under the frame gauge of F_λ. The crossing form is the
//! λ-derivative of M restricted to γ(λ₀) ∩ V, computed by central differences
//! with a Richardson consistency guard.

use nalgebra::DMatrix;

use super::{intersection, standard_j, symplecticity_defect, LagrangianPath, LagrangianSubspace};
use crate::error::{Error, Result};
use crate::qforms::QuadraticForm;

/// Relative agreement required between the h and h/2 difference quotients.
const RICHARDSON_REL_TOL: f64 = 1e-4;
/// Absolute floor so identically-zero derivatives pass the guard.
const RICHARDSON_ABS_FLOOR: f64 = 1e-10;
/// Smallest singular value of F₀ᵀF_λ for γ(λ) to count as a graph over γ(λ₀).
const GRAPH_COND_TOL: f64 = 0.1;
/// Cosine-scale tolerance handed to `intersection` when restricting forms.
pub(crate) const KERNEL_COS_TOL: f64 = 5e-13;

/// Graph coordinate matrix M(λ) of γ(λ) over the fixed base subspace.
fn graph_matrix(
    base: &LagrangianSubspace,
    complement_t: &DMatrix<f64>,
    at: &LagrangianSubspace,
) -> Result<DMatrix<f64>> {
    let f0t_f = base.frame().transpose() * at.frame();
    let svd = f0t_f.clone().svd(false, false);
    let min_sv = svd
        .singular_values
        .iter()
        .fold(f64::INFINITY, |m, s| m.min(*s));
    if min_sv < GRAPH_COND_TOL {
        return Err(Error::StepTooLarge(format!(
            "subspace is not a graph over the crossing subspace (sigma_min = {min_sv:.3e})"
        )));
    }
    let inv = f0t_f
        .try_inverse()
        .ok_or_else(|| Error::StepTooLarge("graph coordinate matrix is singular".into()))?;
    Ok(complement_t * at.frame() * inv)
}

/// Central difference of the graph matrix with a Richardson guard.
///
/// Evaluates the quotient at h and h/2; accepts when the two agree to
/// `RICHARDSON_REL_TOL` relative and returns the extrapolated value. If the
/// guard fails the step is escalated (noise-dominated regime) before giving
/// up.
fn graph_derivative(
    path: &LagrangianPath,
    base: &LagrangianSubspace,
    complement_t: &DMatrix<f64>,
    lambda0: f64,
    h: f64,
) -> Result<DMatrix<f64>> {
    let quotient = |step: f64| -> Result<DMatrix<f64>> {
        let plus = graph_matrix(base, complement_t, &path.at(lambda0 + step)?)?;
        let minus = graph_matrix(base, complement_t, &path.at(lambda0 - step)?)?;
        Ok((plus - minus) / (2.0 * step))
    };

    let mut best: Option<(f64, DMatrix<f64>)> = None;
    for escalation in 0..3 {
        let step = h * 4f64.powi(escalation);
        let d_h = quotient(step)?;
        let d_half = quotient(step / 2.0)?;
        let diff = (&d_h - &d_half).amax();
        let scale = d_half.amax().max(RICHARDSON_ABS_FLOOR / RICHARDSON_REL_TOL);
        if diff <= RICHARDSON_REL_TOL * scale {
            // second-order quotients: Richardson extrapolation removes the h² term
            return Ok((d_half * 4.0 - d_h) / 3.0);
        }
        let rel = diff / scale;
        if best.as_ref().map_or(true, |(b, _)| rel < *b) {
            best = Some((rel, (d_half * 4.0 - d_h) / 3.0));
        }
    }
    let (rel, _) = best.unwrap();
    Err(Error::NonConvergence(format!(
        "finite-difference derivative of the Lagrangian path did not stabilize \
         (best relative agreement {rel:.3e} at lambda0 = {lambda0})"
    )))
}

/// Crossing form Γ(γ, V, λ₀) on γ(λ₀) ∩ V.
///
/// The returned form is expressed in an orthonormal basis of the intersection
/// (recorded in the basis label). `h` is the central-difference step; a path
/// that moves too fast for the local graph chart yields `StepTooLarge`, in
/// which case the caller may halve `h`.
pub fn crossing_form(
    gamma: &LagrangianPath,
    v: &LagrangianSubspace,
    lambda0: f64,
    h: f64,
) -> Result<QuadraticForm> {
    if !(h > 0.0) {
        return Err(Error::InvalidInput(format!("fd step must be positive, got {h}")));
    }
    let base = gamma.at(lambda0)?;
    if base.ambient_dim() != v.ambient_dim() {
        return Err(Error::InvalidInput("ambient dimension mismatch".into()));
    }
    let kernel = intersection(&base, v, KERNEL_COS_TOL)?;
    if kernel.ncols() == 0 {
        return Err(Error::InvalidInput(format!(
            "lambda0 = {lambda0} is not a crossing: gamma(lambda0) and V are transversal"
        )));
    }
    restricted_graph_form(gamma, &base, lambda0, h, &kernel)
}

/// The derivative form of `gamma` at `lambda0` restricted to the columns of
/// `kernel` (which must lie in γ(λ₀)).
pub(crate) fn restricted_graph_form(
    gamma: &LagrangianPath,
    base: &LagrangianSubspace,
    lambda0: f64,
    h: f64,
    kernel: &DMatrix<f64>,
) -> Result<QuadraticForm> {
    let j = standard_j(base.half_dim());
    let complement_t = (&j * base.frame()).transpose();
    // keep the stencil inside the parameter interval
    let h_eff = h.min(lambda0 / 2.0).min((1.0 - lambda0) / 2.0).max(1e-12);
    let m_dot = graph_derivative(gamma, base, &complement_t, lambda0, h_eff)?;
    let m_dot = (&m_dot + m_dot.transpose()) * 0.5;

    // coordinates of the intersection basis inside gamma(lambda0)
    let coords = base.frame().transpose() * kernel;
    let restricted = coords.transpose() * m_dot * &coords;
    QuadraticForm::new(
        (&restricted + restricted.transpose()) * 0.5,
        format!("gamma(lambda0) ∩ V at lambda0 = {lambda0}"),
    )
}

/// Crossing form of the Lagrangian path λ ↦ Ψ_λ({0}×Rⁿ) against {0}×Rⁿ,
/// expressed directly on ker b_{λ₀} through the symplectic block structure
///
/// ```text
/// Ψ_λ = [ a_λ  b_λ ]         q[u] = −⟨d_{λ₀} u, ḃ_{λ₀} u⟩,  u ∈ ker b_{λ₀}.
///       [ c_λ  d_λ ]
/// ```
pub fn symplectic_path_crossing_form(
    psi: &(dyn Fn(f64) -> DMatrix<f64> + Sync),
    lambda0: f64,
    h: f64,
) -> Result<QuadraticForm> {
    let p0 = psi(lambda0);
    let dim = p0.nrows();
    if dim % 2 != 0 || p0.ncols() != dim || dim == 0 {
        return Err(Error::InvalidInput(format!(
            "symplectic path must produce square 2n x 2n matrices, got {}x{}",
            p0.nrows(),
            p0.ncols()
        )));
    }
    let n = dim / 2;
    let defect = symplecticity_defect(&p0);
    if defect > 1e-9 * p0.amax().max(1.0) {
        return Err(Error::InvalidInput(format!(
            "matrix at lambda0 is not symplectic: defect {defect:.3e}"
        )));
    }

    let b0 = p0.view((0, n), (n, n)).clone_owned();
    let d0 = p0.view((n, n), (n, n)).clone_owned();

    // kernel of the upper-right block
    let svd = b0.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("svd with v_t");
    let scale = svd.singular_values.iter().fold(1.0f64, |m, s| m.max(*s));
    let kernel_cols: Vec<usize> = (0..n)
        .filter(|&i| svd.singular_values[i] < 1e-8 * scale)
        .collect();
    if kernel_cols.is_empty() {
        return Err(Error::InvalidInput(format!(
            "lambda0 = {lambda0} is not a crossing: b block is invertible \
             (sigma_min = {:.3e})",
            svd.singular_values.iter().fold(f64::INFINITY, |m, s| m.min(*s))
        )));
    }
    let m = kernel_cols.len();
    let mut kernel = DMatrix::zeros(n, m);
    for (j, &i) in kernel_cols.iter().enumerate() {
        kernel.set_column(j, &v_t.row(i).transpose());
    }

    // db/dlambda by guarded central differences
    let b_at = |lambda: f64| psi(lambda).view((0, n), (n, n)).clone_owned();
    let mut b_dot = None;
    for escalation in 0..3 {
        let step = h * 4f64.powi(escalation);
        let quot = |s: f64| (b_at(lambda0 + s) - b_at(lambda0 - s)) / (2.0 * s);
        let d_h = quot(step);
        let d_half = quot(step / 2.0);
        let diff = (&d_h - &d_half).amax();
        let scale = d_half.amax().max(RICHARDSON_ABS_FLOOR / RICHARDSON_REL_TOL);
        if diff <= RICHARDSON_REL_TOL * scale {
            b_dot = Some((d_half * 4.0 - d_h) / 3.0);
            break;
        }
    }
    let b_dot = b_dot.ok_or_else(|| {
        Error::NonConvergence("derivative of the b block did not stabilize".into())
    })?;

    // q_ij = −⟨d u_i, ḃ u_j⟩, symmetrized
    let du = &d0 * &kernel;
    let bdu = &b_dot * &kernel;
    let raw = -(du.transpose() * bdu);
    QuadraticForm::new(
        (&raw + raw.transpose()) * 0.5,
        format!("ker b at lambda0 = {lambda0}"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line_path(theta: impl Fn(f64) -> f64 + Send + Sync + 'static) -> LagrangianPath {
        LagrangianPath::new(move |lambda| {
            let t = theta(lambda);
            let mut f = DMatrix::zeros(2, 1);
            f[(0, 0)] = t.cos();
            f[(1, 0)] = t.sin();
            LagrangianSubspace::from_frame(f)
        })
    }

    fn e1_line() -> LagrangianSubspace {
        let mut f = DMatrix::zeros(2, 1);
        f[(0, 0)] = 1.0;
        LagrangianSubspace::from_frame(f).unwrap()
    }

    #[test]
    fn rotating_line_form_is_positive() {
        // gamma(lambda) = span{(cos lambda, sin lambda)}, V = span{e1}, crossing at 0.5
        // after shifting so the crossing is interior; oracle: omega(v, phi(v)) = v1² tan(lambda).
        let gamma = line_path(|l| l - 0.5);
        let v = e1_line();
        let q = crossing_form(&gamma, &v, 0.5, 1e-5).unwrap();
        assert_eq!(q.dim(), 1);
        assert_relative_eq!(q.matrix[(0, 0)], 1.0, epsilon = 1e-7);
        assert_eq!(q.signature_default().unwrap().sgn(), 1);
    }

    #[test]
    fn reversed_rotation_flips_sign() {
        let gamma = line_path(|l| 0.5 - l);
        let v = e1_line();
        let q = crossing_form(&gamma, &v, 0.5, 1e-5).unwrap();
        assert_relative_eq!(q.matrix[(0, 0)], -1.0, epsilon = 1e-7);
        assert_eq!(q.signature_default().unwrap().sgn(), -1);
    }

    #[test]
    fn constant_path_gives_zero_form() {
        let v = e1_line();
        let gamma = LagrangianPath::constant(v.clone());
        let q = crossing_form(&gamma, &v, 0.5, 1e-5).unwrap();
        assert_eq!(q.dim(), 1);
        assert!(q.matrix.amax() < 1e-12);
    }

    #[test]
    fn non_crossing_is_rejected() {
        let gamma = line_path(|l| 0.7 + 0.1 * l);
        let v = e1_line();
        assert!(crossing_form(&gamma, &v, 0.5, 1e-5).is_err());
    }

    #[test]
    fn rotation_block_form() {
        // n = 1 rotation: b(0) = -sin 0 = 0, q[u] = -(cos 0)(-cos 0) u² = u².
        let psi = |lambda: f64| {
            DMatrix::from_row_slice(2, 2, &[
                lambda.cos(),
                -lambda.sin(),
                lambda.sin(),
                lambda.cos(),
            ])
        };
        let q = symplectic_path_crossing_form(&psi, 0.0, 1e-5).unwrap();
        assert_eq!(q.dim(), 1);
        assert_relative_eq!(q.matrix[(0, 0)], 1.0, epsilon = 1e-8);
    }

    #[test]
    fn invertible_b_rejected() {
        // constant symplectic matrix with invertible b: J itself has b = -I.
        let psi = |_: f64| standard_j(2);
        assert!(symplectic_path_crossing_form(&psi, 0.3, 1e-5).is_err());
    }

    /// Cayley transform of a Hamiltonian matrix J·A (A symmetric) is symplectic.
    fn cayley(n: usize, a: &DMatrix<f64>) -> DMatrix<f64> {
        let j = standard_j(n);
        let ham = &j * a;
        let id = DMatrix::identity(2 * n, 2 * n);
        let num = &id + &ham * 0.5;
        let den = (&id - &ham * 0.5).try_inverse().unwrap();
        den * num
    }

    #[test]
    fn block_form_matches_induced_lagrangian_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 1..=2usize {
            for _ in 0..6 {
                // Psi(lambda) = T0 * Cay((lambda - l0) J A): b(l0) = 0 by construction.
                let lambda0 = 0.5;
                let c_raw = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.8..0.8));
                let c = (&c_raw + c_raw.transpose()) * 0.5;
                let mut t0 = DMatrix::identity(2 * n, 2 * n);
                t0.view_mut((n, 0), (n, n)).copy_from(&c);
                let a_raw = DMatrix::from_fn(2 * n, 2 * n, |_, _| rng.gen_range(-0.8..0.8));
                let a = (&a_raw + a_raw.transpose()) * 0.5;
                let psi = {
                    let t0 = t0.clone();
                    let a = a.clone();
                    move |lambda: f64| &t0 * cayley(n, &(a.clone() * (lambda - lambda0)))
                };
                let q_block = symplectic_path_crossing_form(&psi, lambda0, 1e-5).unwrap();
                assert_eq!(q_block.dim(), n);

                // induced path of Lagrangians and the vertical reference
                let vertical = {
                    let mut f = DMatrix::zeros(2 * n, n);
                    for i in 0..n {
                        f[(n + i, i)] = 1.0;
                    }
                    LagrangianSubspace::from_frame(f).unwrap()
                };
                let gamma = {
                    let psi = psi.clone();
                    let vertical = vertical.clone();
                    LagrangianPath::new(move |lambda| vertical.map_by(&psi(lambda)))
                };
                let q_path = crossing_form(&gamma, &vertical, lambda0, 1e-5).unwrap();
                assert_eq!(q_path.dim(), n);
                assert_eq!(
                    q_path.signature_default().unwrap(),
                    q_block.signature_default().unwrap()
                );

                // compare values through the isomorphism u -> (0, d u)
                let p0 = psi(lambda0);
                let d0 = p0.view((n, n), (n, n)).clone_owned();
                let base = gamma.at(lambda0).unwrap();
                let kernel = intersection(&base, &vertical, KERNEL_COS_TOL).unwrap();
                for trial in 0..n {
                    let mut u = DVector::zeros(n);
                    u[trial] = 1.0;
                    let q_b = q_block.eval(&u);
                    let mut w = DVector::zeros(2 * n);
                    let du = &d0 * &u;
                    for i in 0..n {
                        w[n + i] = du[i];
                    }
                    let coords = kernel.transpose() * &w;
                    let q_p = q_path.eval(&coords);
                    assert_relative_eq!(q_b, q_p, max_relative = 1e-5, epsilon = 1e-8);
                }
            }
        }
    }
}
