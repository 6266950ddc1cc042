//! The Lagrangian Grassmannian Λ(n) of R^{2n}, crossing forms for paths of
//! Lagrangian subspaces, and Maslov indices.
//!
//! R^{2n} carries the standard symplectic form ω(u, v) = ⟨Ju, v⟩ with
//!
//! ```text
//! J = [ 0  -I ]
//!     [ I   0 ]
//! ```
//!
//! A Lagrangian subspace is an n-dimensional subspace on which ω vanishes; it
//! is stored as a 2n×n frame with orthonormal columns. J·V is Lagrangian and
//! transversal to V for every Lagrangian V, which fixes the chart complement
//! used by the crossing forms.

mod crossing;
mod grassmann;
mod maslov;

pub use crossing::{crossing_form, symplectic_path_crossing_form};
pub use grassmann::{
    frame_intersection, grassmann_distance, intersection, principal_angle_sines,
    stacked_frame_detector,
};
pub use maslov::{
    maslov_index, relative_maslov_index, relative_maslov_index_cross_validated,
    relative_maslov_index_via_product, relative_with_crossings, scan_detector_dips,
    CrossingScan, MaslovConfig, PathCrossing,
};

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Allowed deviation of a frame from having orthonormal columns.
pub const FRAME_ORTHO_TOL: f64 = 1e-10;
/// Allowed size of frameᵀ·J·frame for a subspace to count as Lagrangian.
pub const ISOTROPY_TOL: f64 = 1e-9;
/// A pair of Lagrangians is considered intersecting when the smallest
/// principal-angle sine drops below this.
pub const CROSSING_SINE_TOL: f64 = 1e-7;

/// The standard symplectic structure on R^{2n}.
#[derive(Debug, Clone)]
pub struct SymplecticSpace {
    n: usize,
    j: DMatrix<f64>,
}

impl SymplecticSpace {
    pub fn new(n: usize) -> Self {
        SymplecticSpace {
            n,
            j: standard_j(n),
        }
    }

    pub fn half_dim(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        2 * self.n
    }

    /// The matrix J = [[0, −I], [I, 0]].
    pub fn j(&self) -> &DMatrix<f64> {
        &self.j
    }

    /// ω(u, v) = ⟨Ju, v⟩.
    pub fn omega(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        (&self.j * u).dot(v)
    }
}

/// Builds J = [[0, −Iₙ], [Iₙ, 0]].
pub fn standard_j(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = -1.0;
        j[(n + i, i)] = 1.0;
    }
    j
}

/// An n-dimensional isotropic subspace of R^{2n}, stored as an orthonormal
/// 2n×n frame.
#[derive(Debug, Clone)]
pub struct LagrangianSubspace {
    frame: DMatrix<f64>,
}

impl LagrangianSubspace {
    /// Accepts a frame that is already orthonormal and isotropic.
    pub fn from_frame(frame: DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = frame.shape();
        if cols == 0 || rows != 2 * cols {
            return Err(Error::InvalidInput(format!(
                "Lagrangian frame must be 2n x n, got {rows} x {cols}"
            )));
        }
        let gram_defect = (frame.transpose() * &frame - DMatrix::identity(cols, cols)).amax();
        if gram_defect > FRAME_ORTHO_TOL {
            return Err(Error::InvalidInput(format!(
                "frame columns not orthonormal: defect {gram_defect:.3e}"
            )));
        }
        let j = standard_j(cols);
        let iso = (frame.transpose() * &j * &frame).amax();
        if iso > ISOTROPY_TOL {
            return Err(Error::InvalidInput(format!(
                "subspace is not Lagrangian: isotropy defect {iso:.3e}"
            )));
        }
        Ok(LagrangianSubspace { frame })
    }

    /// Orthonormalizes the given spanning columns, then validates isotropy.
    pub fn from_span(span: DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = span.shape();
        if cols == 0 || rows != 2 * cols {
            return Err(Error::InvalidInput(format!(
                "Lagrangian span must be 2n x n, got {rows} x {cols}"
            )));
        }
        let q = span.qr().q();
        Self::from_frame(q)
    }

    pub fn half_dim(&self) -> usize {
        self.frame.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.frame.nrows()
    }

    pub fn frame(&self) -> &DMatrix<f64> {
        &self.frame
    }

    /// Orthogonal projector onto the subspace.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.frame * self.frame.transpose()
    }

    /// The canonical transversal complement J·V (always Lagrangian).
    pub fn j_complement(&self) -> LagrangianSubspace {
        let j = standard_j(self.half_dim());
        // J is orthogonal, so J·frame is again an orthonormal isotropic frame.
        LagrangianSubspace {
            frame: &j * &self.frame,
        }
    }

    /// Image under an invertible (typically symplectic) matrix,
    /// re-orthonormalized.
    pub fn map_by(&self, m: &DMatrix<f64>) -> Result<LagrangianSubspace> {
        Self::from_span(m * &self.frame)
    }

    pub fn isotropy_defect(&self) -> f64 {
        let j = standard_j(self.half_dim());
        (self.frame.transpose() * &j * &self.frame).amax()
    }
}

/// A one-parameter family λ ∈ [0, 1] → Λ(n), evaluated through a callback.
///
/// Derivative information is obtained by central finite differences with the
/// configured step; evaluation must be reentrant since scans may run from
/// several threads.
#[derive(Clone)]
pub struct LagrangianPath {
    eval: Arc<dyn Fn(f64) -> Result<LagrangianSubspace> + Send + Sync>,
    /// Default central-difference step for crossing forms.
    pub fd_step: f64,
}

impl LagrangianPath {
    pub fn new(eval: impl Fn(f64) -> Result<LagrangianSubspace> + Send + Sync + 'static) -> Self {
        LagrangianPath {
            eval: Arc::new(eval),
            fd_step: 1e-5,
        }
    }

    pub fn with_fd_step(mut self, h: f64) -> Self {
        self.fd_step = h;
        self
    }

    pub fn at(&self, lambda: f64) -> Result<LagrangianSubspace> {
        (self.eval)(lambda)
    }

    /// Constant path.
    pub fn constant(v: LagrangianSubspace) -> Self {
        LagrangianPath::new(move |_| Ok(v.clone()))
    }

    /// The reversed path λ ↦ γ(1 − λ).
    pub fn reversed(&self) -> Self {
        let eval = self.eval.clone();
        LagrangianPath {
            eval: Arc::new(move |lambda| eval(1.0 - lambda)),
            fd_step: self.fd_step,
        }
    }

    /// Pointwise image under a fixed matrix (naturality tests) or a
    /// λ-dependent symplectic family.
    pub fn mapped(&self, m: impl Fn(f64) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        let eval = self.eval.clone();
        LagrangianPath {
            eval: Arc::new(move |lambda| eval(lambda)?.map_by(&m(lambda))),
            fd_step: self.fd_step,
        }
    }
}

impl std::fmt::Debug for LagrangianPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LagrangianPath")
            .field("fd_step", &self.fd_step)
            .finish()
    }
}

/// e^{θJ} = cos θ · I + sin θ · J, exact since J² = −I.
pub fn rotation_exp(n: usize, theta: f64) -> DMatrix<f64> {
    let j = standard_j(n);
    DMatrix::identity(2 * n, 2 * n) * theta.cos() + j * theta.sin()
}

/// Checks that a 2n×2n matrix is symplectic: ‖ΨᵀJΨ − J‖ ≤ tol.
pub fn symplecticity_defect(psi: &DMatrix<f64>) -> f64 {
    let n = psi.nrows() / 2;
    let j = standard_j(n);
    (psi.transpose() * &j * psi - &j).amax()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn j_matrix_invariants() {
        for n in 1..=3 {
            let sp = SymplecticSpace::new(n);
            let j = sp.j();
            assert_eq!((j.transpose() + j).amax(), 0.0);
            let j2 = j * j;
            assert_relative_eq!(
                (j2 + DMatrix::identity(2 * n, 2 * n)).amax(),
                0.0,
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn horizontal_line_is_lagrangian() {
        let mut f = DMatrix::zeros(2, 1);
        f[(0, 0)] = 1.0;
        let v = LagrangianSubspace::from_frame(f).unwrap();
        assert_eq!(v.half_dim(), 1);
        assert!(v.isotropy_defect() < 1e-15);
    }

    #[test]
    fn non_lagrangian_span_rejected() {
        // span{e1, e3} in R^4 is Lagrangian; span{e1, e3+e1-ish mix} with a
        // symplectic pairing is not: take span{e1, e1' } where e1' = J e1.
        let n = 2;
        let j = standard_j(n);
        let mut span = DMatrix::zeros(4, 2);
        span[(0, 0)] = 1.0;
        let je1 = &j * span.column(0).clone_owned();
        span.set_column(1, &je1);
        assert!(LagrangianSubspace::from_span(span).is_err());
    }

    #[test]
    fn j_complement_is_transversal() {
        let mut f = DMatrix::zeros(4, 2);
        f[(0, 0)] = 1.0;
        f[(1, 1)] = 1.0;
        let v = LagrangianSubspace::from_frame(f).unwrap();
        let w = v.j_complement();
        assert!(w.isotropy_defect() < 1e-15);
        let inter = intersection(&v, &w, 5e-13).unwrap();
        assert_eq!(inter.ncols(), 0);
    }

    #[test]
    fn rotation_exp_is_symplectic() {
        for n in 1..=3 {
            let m = rotation_exp(n, 0.37);
            assert!(symplecticity_defect(&m) < 1e-14);
        }
    }
}
