//! Finite-dimensional quadratic forms, their signatures, and the
//! perturbation-stability test.
//!
//! A quadratic form Q on R^m with a fixed orthonormal basis is represented by
//! the unique symmetric matrix L with Q(u) = ⟨Lu, u⟩. The signature counts
//! eigenvalues above/below a zero threshold; `perturbation_preserves` checks
//! the Neumann-series condition ‖L₂‖ < ‖L₁⁻¹‖⁻¹ under which the signature of
//! a non-degenerate form survives an additive perturbation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative factor for the default zero-eigenvalue threshold.
pub const DEFAULT_TOL_FACTOR: f64 = 1e-9;

/// Relative symmetry defect allowed on the representing matrix.
const SYMMETRY_REL_TOL: f64 = 1e-12;

/// A real quadratic form represented by a symmetric matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadraticForm {
    /// Representing symmetric operator; `dim() == matrix.nrows()`.
    pub matrix: DMatrix<f64>,
    /// Opaque tag identifying the ambient basis the form lives in.
    pub basis_label: String,
}

/// Eigenvalue counts (m⁺, m⁻, m⁰) of a quadratic form at some threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub m_plus: usize,
    pub m_minus: usize,
    pub m_zero: usize,
}

impl Signature {
    /// sgn Q = m⁺ − m⁻.
    pub fn sgn(&self) -> i64 {
        self.m_plus as i64 - self.m_minus as i64
    }

    pub fn dim(&self) -> usize {
        self.m_plus + self.m_minus + self.m_zero
    }
}

impl QuadraticForm {
    /// Builds a form from its representing matrix, rejecting asymmetric input.
    pub fn new(matrix: DMatrix<f64>, basis_label: impl Into<String>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(Error::InvalidInput(format!(
                "quadratic form matrix must be square and non-empty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let scale = matrix.amax();
        let defect = (&matrix - matrix.transpose()).amax();
        if defect > SYMMETRY_REL_TOL * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidInput(format!(
                "representing matrix is not symmetric: defect {defect:.3e} vs scale {scale:.3e}"
            )));
        }
        // Average out the sub-tolerance asymmetry so downstream eigensolves
        // see an exactly symmetric matrix.
        let sym = (&matrix + matrix.transpose()) * 0.5;
        Ok(QuadraticForm {
            matrix: sym,
            basis_label: basis_label.into(),
        })
    }

    /// A form on a zero-dimensional space (no kernel directions).
    pub fn empty(basis_label: impl Into<String>) -> Self {
        QuadraticForm {
            matrix: DMatrix::zeros(0, 0),
            basis_label: basis_label.into(),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Evaluates Q(u) = ⟨Lu, u⟩.
    pub fn eval(&self, u: &nalgebra::DVector<f64>) -> f64 {
        (&self.matrix * u).dot(u)
    }

    /// Eigenvalues of the representing matrix, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        if self.dim() == 0 {
            return Vec::new();
        }
        let mut ev: Vec<f64> = self
            .matrix
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ev
    }

    /// Spectral norm ‖L‖ (symmetric case: largest |eigenvalue|).
    pub fn norm(&self) -> f64 {
        self.eigenvalues().iter().fold(0.0, |m, e| m.max(e.abs()))
    }

    /// Scale-free default threshold 1e-9·‖L‖ for calling an eigenvalue zero.
    pub fn default_tol(&self) -> f64 {
        DEFAULT_TOL_FACTOR * self.norm()
    }

    /// Counts eigenvalues above `tol`, below `−tol`, and in `[−tol, tol]`.
    pub fn signature(&self, tol: f64) -> Result<Signature> {
        if !(tol >= 0.0) {
            return Err(Error::InvalidInput(format!("tolerance must be >= 0, got {tol}")));
        }
        let mut sig = Signature {
            m_plus: 0,
            m_minus: 0,
            m_zero: 0,
        };
        for e in self.eigenvalues() {
            if e > tol {
                sig.m_plus += 1;
            } else if e < -tol {
                sig.m_minus += 1;
            } else {
                sig.m_zero += 1;
            }
        }
        debug_assert_eq!(sig.dim(), self.dim());
        Ok(sig)
    }

    /// Signature at the default scale-free threshold.
    pub fn signature_default(&self) -> Result<Signature> {
        self.signature(self.default_tol())
    }

    /// True iff m⁰ = 0 at the given threshold.
    pub fn is_nondegenerate(&self, tol: f64) -> Result<bool> {
        Ok(self.signature(tol)?.m_zero == 0)
    }

    /// ‖L⁻¹‖⁻¹, i.e. the smallest |eigenvalue|; errors on degenerate forms.
    pub fn inverse_norm_reciprocal(&self, tol: f64) -> Result<f64> {
        if !self.is_nondegenerate(tol)? {
            return Err(Error::InvalidInput(
                "form is degenerate; no inverse norm available".into(),
            ));
        }
        Ok(self
            .eigenvalues()
            .iter()
            .fold(f64::INFINITY, |m, e| m.min(e.abs())))
    }
}

/// Whether adding `q2` to the non-degenerate `q1` provably preserves the
/// signature: ‖L₂‖ < ‖L₁⁻¹‖⁻¹ (both spectral norms).
pub fn perturbation_preserves(q1: &QuadraticForm, q2: &QuadraticForm) -> Result<bool> {
    if q1.dim() != q2.dim() {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: {} vs {}",
            q1.dim(),
            q2.dim()
        )));
    }
    let gap = q1.inverse_norm_reciprocal(q1.default_tol()).map_err(|_| {
        Error::InvalidInput("perturbation_preserves requires a non-degenerate first form".into())
    })?;
    Ok(q2.norm() < gap)
}

/// Sum of two forms over the same basis.
pub fn add(q1: &QuadraticForm, q2: &QuadraticForm) -> Result<QuadraticForm> {
    if q1.dim() != q2.dim() {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: {} vs {}",
            q1.dim(),
            q2.dim()
        )));
    }
    QuadraticForm::new(&q1.matrix + &q2.matrix, q1.basis_label.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Test-only oracle: eigenvalues of a symmetric 3x3 from the characteristic
    /// polynomial, solved in closed (trigonometric) form. Independent of the
    /// iterative eigensolver used by the implementation.
    fn charpoly_eigenvalues_3x3(m: &DMatrix<f64>) -> [f64; 3] {
        assert_eq!(m.nrows(), 3);
        // x^3 - c2 x^2 + c1 x - c0 with c2 = tr, c1 = sum of principal 2x2
        // minors, c0 = det.
        let tr = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
        let c1 = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
            + m[(0, 0)] * m[(2, 2)] - m[(0, 2)] * m[(2, 0)]
            + m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)];
        let c0 = m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
            - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
            + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)]);
        // Shift x = y + tr/3 to the depressed cubic y^3 + p y + q = 0.
        let s = tr / 3.0;
        let p = c1 - tr * tr / 3.0;
        let q = -c0 + c1 * s - 2.0 * s * s * s;
        // Symmetric matrix: all roots real; trigonometric method.
        if p.abs() < 1e-300 {
            let r = (-q).cbrt();
            return [r + s, r + s, r + s];
        }
        let a = (-p / 3.0).sqrt();
        let arg = (3.0 * q / (2.0 * p * a)).clamp(-1.0, 1.0);
        let phi = arg.acos() / 3.0;
        let mut roots = [
            2.0 * a * phi.cos() + s,
            2.0 * a * (phi - 2.0 * std::f64::consts::PI / 3.0).cos() + s,
            2.0 * a * (phi - 4.0 * std::f64::consts::PI / 3.0).cos() + s,
        ];
        roots.sort_by(|x, y| x.partial_cmp(y).unwrap());
        roots
    }

    fn random_symmetric(rng: &mut ChaCha8Rng, dim: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
        (&a + a.transpose()) * 0.5
    }

    fn random_orthogonal(rng: &mut ChaCha8Rng, dim: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
        a.qr().q()
    }

    #[test]
    fn signature_identity() {
        let q = QuadraticForm::new(DMatrix::identity(3, 3), "test").unwrap();
        let s = q.signature(1e-10).unwrap();
        assert_eq!((s.m_plus, s.m_minus, s.m_zero), (3, 0, 0));
    }

    #[test]
    fn signature_explicit_diagonal() {
        let q =
            QuadraticForm::new(DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, -1.0])), "test")
                .unwrap();
        let s = q.signature(1e-10).unwrap();
        assert_eq!((s.m_plus, s.m_minus, s.m_zero), (1, 1, 0));
        assert_eq!(s.sgn(), 0);
    }

    #[test]
    fn signature_matches_charpoly_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let m = random_symmetric(&mut rng, 3);
            let oracle = charpoly_eigenvalues_3x3(&m);
            let tol = 1e-10;
            let want = (
                oracle.iter().filter(|&&e| e > tol).count(),
                oracle.iter().filter(|&&e| e < -tol).count(),
                oracle.iter().filter(|&&e| e.abs() <= tol).count(),
            );
            let q = QuadraticForm::new(m, "test").unwrap();
            let s = q.signature(tol).unwrap();
            assert_eq!((s.m_plus, s.m_minus, s.m_zero), want);
        }
    }

    #[test]
    fn rejects_asymmetric_matrix() {
        let mut m = DMatrix::identity(2, 2);
        m[(0, 1)] = 0.5;
        assert!(QuadraticForm::new(m, "test").is_err());
    }

    #[test]
    fn nondegeneracy_cases() {
        let q = QuadraticForm::new(
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0])),
            "test",
        )
        .unwrap();
        assert!(q.is_nondegenerate(1e-10).unwrap());
        let q0 = QuadraticForm::new(
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0])),
            "test",
        )
        .unwrap();
        assert!(!q0.is_nondegenerate(1e-10).unwrap());
    }

    #[test]
    fn perturbation_gap_cases() {
        let q1 = QuadraticForm::new(
            DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, -3.0])),
            "test",
        )
        .unwrap();
        let q2 = QuadraticForm::new(
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0])),
            "test",
        )
        .unwrap();
        assert!(perturbation_preserves(&q1, &q2).unwrap());
        let sum = add(&q1, &q2).unwrap();
        assert_eq!(sum.signature(1e-10).unwrap().sgn(), 0);
        assert_eq!(q1.signature(1e-10).unwrap().sgn(), 0);

        let p1 = QuadraticForm::new(DMatrix::from_element(1, 1, 1.0), "test").unwrap();
        let p2 = QuadraticForm::new(DMatrix::from_element(1, 1, -2.0), "test").unwrap();
        assert!(!perturbation_preserves(&p1, &p2).unwrap());
        assert_eq!(add(&p1, &p2).unwrap().signature(1e-10).unwrap().sgn(), -1);
    }

    #[test]
    fn perturbation_preserves_on_scaled_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let dim = rng.gen_range(2..=8);
            let mut m = random_symmetric(&mut rng, dim);
            // push eigenvalues away from zero
            m += DMatrix::identity(dim, dim) * 1.5;
            let q1 = QuadraticForm::new(m, "test").unwrap();
            if !q1.is_nondegenerate(q1.default_tol()).unwrap() {
                continue;
            }
            let gap = q1.inverse_norm_reciprocal(q1.default_tol()).unwrap();
            let raw = random_symmetric(&mut rng, dim);
            let q2 = QuadraticForm::new(raw.clone() * (0.5 * gap / raw.amax().max(1e-12)), "test")
                .unwrap();
            if q2.norm() >= gap {
                continue;
            }
            assert!(perturbation_preserves(&q1, &q2).unwrap());
            // direct eigendecomposition oracle on the sum
            let s1 = q1.signature(q1.default_tol()).unwrap();
            let sum = add(&q1, &q2).unwrap();
            let s2 = sum.signature(sum.default_tol()).unwrap();
            assert_eq!(s1.sgn(), s2.sgn());
            assert_eq!(s1.m_zero, 0);
            assert_eq!(s2.m_zero, 0);
        }
    }

    #[test]
    fn congruence_invariance_under_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let dim = rng.gen_range(1..=8);
            let m = random_symmetric(&mut rng, dim);
            let u = random_orthogonal(&mut rng, dim);
            let q = QuadraticForm::new(m.clone(), "test").unwrap();
            let qc = QuadraticForm::new(u.transpose() * &m * &u, "test").unwrap();
            let tol = q.default_tol().max(qc.default_tol());
            assert_eq!(q.signature(tol).unwrap(), qc.signature(tol).unwrap());
        }
    }

    #[test]
    fn negation_swaps_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..30 {
            let dim = rng.gen_range(1..=8);
            let m = random_symmetric(&mut rng, dim);
            let q = QuadraticForm::new(m.clone(), "test").unwrap();
            let nq = QuadraticForm::new(-m, "test").unwrap();
            let tol = q.default_tol();
            let s = q.signature(tol).unwrap();
            let ns = nq.signature(tol).unwrap();
            assert_eq!(s.m_plus, ns.m_minus);
            assert_eq!(s.m_minus, ns.m_plus);
            assert_eq!(s.m_zero, ns.m_zero);
        }
    }
}
