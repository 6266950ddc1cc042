//! Hyperbolicity checks and invariant subspaces of J·S∞.
//!
//! For a hyperbolic matrix A = J·M the stable (unstable) subspace is the span
//! of the generalized eigenspaces with negative (positive) real part. It is
//! read off an ordered real Schur decomposition: nalgebra supplies the
//! unordered form, and the selected 1×1/2×2 diagonal blocks are bubbled to
//! the front by direct adjacent-block swaps (solve the small Sylvester
//! equation, orthonormalize, apply the similarity).

use nalgebra::{DMatrix, Schur};

use super::HamiltonianFamily;
use crate::error::{Error, Result};
use crate::symplectic::{standard_j, LagrangianSubspace};

/// Spectral abscissa test for J·M: returns whether no eigenvalue of J·M lies
/// on the imaginary axis, together with the gap min |Re μ|.
pub fn check_hyperbolic(m: &DMatrix<f64>) -> (bool, f64) {
    let n2 = m.nrows();
    let j = standard_j(n2 / 2);
    let a = &j * m;
    let eigs = a.complex_eigenvalues();
    let gap = eigs.iter().fold(f64::INFINITY, |g, e| g.min(e.re.abs()));
    (gap > 0.0, gap)
}

/// Orthonormal frame of the invariant subspace of J·M for eigenvalues with
/// negative real part; Lagrangian for symmetric M by the symplectic pairing
/// of the spectrum.
pub fn invariant_subspace_stable(m: &DMatrix<f64>) -> Result<LagrangianSubspace> {
    invariant_subspace(m, true)
}

/// Unstable analogue: eigenvalues with positive real part.
pub fn invariant_subspace_unstable(m: &DMatrix<f64>) -> Result<LagrangianSubspace> {
    invariant_subspace(m, false)
}

fn invariant_subspace(m: &DMatrix<f64>, stable: bool) -> Result<LagrangianSubspace> {
    let dim = m.nrows();
    if dim % 2 != 0 || m.ncols() != dim {
        return Err(Error::InvalidInput(format!(
            "expected a square 2n x 2n matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let n = dim / 2;
    let (hyper, gap) = check_hyperbolic(m);
    if !hyper {
        return Err(Error::InvalidInput(format!(
            "matrix is not hyperbolic (spectral gap {gap:.3e})"
        )));
    }
    let j = standard_j(n);
    let a = &j * m;
    let frame = ordered_schur_frame(&a, |re| if stable { re < 0.0 } else { re > 0.0 })?;
    if frame.ncols() != n {
        return Err(Error::NonConvergence(format!(
            "selected invariant subspace has dimension {}, expected {n}",
            frame.ncols()
        )));
    }
    LagrangianSubspace::from_frame(frame).map_err(|e| {
        Error::NonConvergence(format!("invariant subspace failed Lagrangian validation: {e}"))
    })
}

/// Diagonal block layout of a real quasi-triangular matrix.
fn block_starts(t: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let m = t.nrows();
    let scale = t.amax().max(1.0);
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < m {
        if i + 1 < m && t[(i + 1, i)].abs() > 1e-12 * scale {
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }
    blocks
}

fn block_re(t: &DMatrix<f64>, start: usize, size: usize) -> f64 {
    if size == 1 {
        t[(start, start)]
    } else {
        0.5 * (t[(start, start)] + t[(start + 1, start + 1)])
    }
}

/// Frame spanning the invariant subspace of `a` for the selected eigenvalue
/// class, via real Schur plus block reordering.
pub fn ordered_schur_frame(
    a: &DMatrix<f64>,
    select: impl Fn(f64) -> bool,
) -> Result<DMatrix<f64>> {
    let dim = a.nrows();
    let schur = Schur::try_new(a.clone(), 1e-14, 100_000).ok_or_else(|| {
        Error::NonConvergence("real Schur decomposition did not converge".into())
    })?;
    let (mut q, mut t) = schur.unpack();

    // bubble selected blocks to the front
    loop {
        let blocks = block_starts(&t);
        let mut swapped = false;
        for w in blocks.windows(2) {
            let (s1, z1) = w[0];
            let (s2, z2) = w[1];
            let keep_first = select(block_re(&t, s1, z1));
            let keep_second = select(block_re(&t, s2, z2));
            if !keep_first && keep_second {
                swap_adjacent_blocks(&mut t, &mut q, s1, z1, z2)?;
                swapped = true;
                break;
            }
        }
        if !swapped {
            break;
        }
    }

    let blocks = block_starts(&t);
    let mut k = 0;
    for (s, z) in blocks {
        if select(block_re(&t, s, z)) {
            if s != k {
                return Err(Error::NonConvergence(
                    "block reordering left a selected block out of place".into(),
                ));
            }
            k += z;
        }
    }
    Ok(q.view((0, 0), (dim, k)).clone_owned())
}

/// Direct swap of adjacent diagonal blocks T = [[A11, A12], [0, A22]] of
/// sizes p, q: solve A11·X − X·A22 = −A12, orthonormalize [X; I], and apply
/// the resulting similarity to T and accumulate it into Q.
fn swap_adjacent_blocks(
    t: &mut DMatrix<f64>,
    q: &mut DMatrix<f64>,
    start: usize,
    p: usize,
    qsz: usize,
) -> Result<()> {
    let w = p + qsz;
    let a11 = t.view((start, start), (p, p)).clone_owned();
    let a12 = t.view((start, start + p), (p, qsz)).clone_owned();
    let a22 = t.view((start + p, start + p), (qsz, qsz)).clone_owned();

    // Kronecker system (I ⊗ A11 − A22ᵀ ⊗ I) vec(X) = vec(−A12)
    let m = p * qsz;
    let mut sys = DMatrix::zeros(m, m);
    let mut rhs = nalgebra::DVector::zeros(m);
    for cj in 0..qsz {
        for ri in 0..p {
            let row = ri + cj * p;
            rhs[row] = -a12[(ri, cj)];
            for k in 0..p {
                sys[(row, k + cj * p)] += a11[(ri, k)];
            }
            for k in 0..qsz {
                sys[(row, ri + k * p)] -= a22[(k, cj)];
            }
        }
    }
    let lu = sys.lu();
    let vec_x = lu.solve(&rhs).ok_or_else(|| {
        Error::NonConvergence(
            "Schur reordering failed: the block Sylvester system is singular \
             (blocks share eigenvalues)"
                .into(),
        )
    })?;
    let mut x = DMatrix::zeros(p, qsz);
    for cj in 0..qsz {
        for ri in 0..p {
            x[(ri, cj)] = vec_x[ri + cj * p];
        }
    }

    // orthonormalize [[X], [I]] and complete to an orthogonal w x w matrix
    let mut ext = DMatrix::zeros(w, w);
    ext.view_mut((0, 0), (p, qsz)).copy_from(&x);
    for i in 0..qsz {
        ext[(p + i, i)] = 1.0;
    }
    for i in 0..p {
        ext[(i, qsz + i)] = 1.0;
    }
    let g = ext.qr().q();

    // similarity on the window, then zero the decoupled block explicitly
    let dim = t.nrows();
    let cols = t.view((0, start), (dim, w)) * &g;
    t.view_mut((0, start), (dim, w)).copy_from(&cols);
    let rows = g.transpose() * t.view((start, 0), (w, dim));
    t.view_mut((start, 0), (w, dim)).copy_from(&rows);
    let resid = t.view((start + qsz, start), (p, qsz)).amax();
    let scale = t.amax().max(1.0);
    if resid > 1e-8 * scale {
        return Err(Error::NonConvergence(format!(
            "Schur reordering failed: residual coupling {resid:.3e} after swap \
             (ill-conditioned separation)"
        )));
    }
    t.view_mut((start + qsz, start), (p, qsz)).fill(0.0);
    let qcols = q.view((0, start), (dim, w)) * &g;
    q.view_mut((0, start), (dim, w)).copy_from(&qcols);
    Ok(())
}

/// A1 check for a family at a given λ: both limits must be hyperbolic.
pub fn assert_a1(fam: &HamiltonianFamily, lambda: f64, hyper_tol: f64) -> Result<()> {
    for (label, limit) in [
        ("+∞", fam.s_plus_inf(lambda)),
        ("-∞", fam.s_minus_inf(lambda)),
    ] {
        let (hyper, gap) = check_hyperbolic(&limit);
        if !hyper || gap <= hyper_tol {
            return Err(Error::AssumptionViolation {
                assumption: crate::error::Assumption::A1,
                lambda,
                detail: format!("J·S(λ, {label}) has spectral gap {gap:.3e}"),
            });
        }
    }
    Ok(())
}
