//! Spectral flow by windowed eigenvalue counting of a truncated, discretized
//! operator path.
//!
//! The operator Ju′ + S_λ(t) on [−T, T] with Lagrangian boundary conditions
//! u(−T) ∈ L₋, u(T) ∈ L₊ is discretized by centered differences on a uniform
//! grid. Boundary conditions are imposed by frame substitution
//! (u₀ = F_L c₀, u_N = F_R c_N), i.e. a Rayleigh–Ritz restriction of the full
//! symmetric matrix to the constrained subspace, which keeps the assembled
//! matrix symmetric.
//!
//! Plain centered differences for a first-order operator suffer spectral
//! doubling: sawtooth modes carry eigenvalues that fill the range of σ(S(t))
//! and pollute the window around zero. The assembly therefore adds the
//! stabilization term −(w·h/2)·D₂ ⊗ K with K = diag(Iₙ, −Iₙ): K is symmetric
//! and anticommutes with J, so the two 1/h-sized symbol terms combine to
//! ±(2/h)|sin(ξ/2)| and the discrete symbol stays away from zero except at
//! the physical frequencies. The price is an O(h) eigenvalue perturbation,
//! harmless to the integer-valued flow.
//!
//! All spectral counting goes through block LDLᵀ inertia (Sturm sequences on
//! the block tridiagonal), so a full sweep costs O(steps · N · n³).

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamsys::{invariant_subspace_stable, invariant_subspace_unstable, HamiltonianFamily};

/// Which Lagrangian subspaces close the truncated interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryCondition {
    /// u(−T) ∈ E^u-plateau, u(T) ∈ E^s-plateau, both frozen at λ = 0.
    PlateauFrozen,
    /// u(±T) ∈ {0} × Rⁿ.
    Vertical,
}

/// Truncated-interval discretization of the operator path.
#[derive(Debug, Clone)]
pub struct DiscretizedPath {
    fam: HamiltonianFamily,
    /// Truncation half-width T.
    pub t_num: f64,
    /// Number of grid cells (N + 1 nodes).
    pub n_cells: usize,
    pub boundary: BoundaryCondition,
    /// Stabilization coefficient w; 0 recovers the naive centered scheme.
    pub wilson: f64,
    /// Penalty added to the boundary coordinates. The doubler-suppression
    /// term admits one spurious boundary-localized mode per endpoint whose
    /// eigenvalue tracks the S(λ) − S(0) mismatch through zero; the penalty
    /// lifts those modes out of the tracking window while moving genuine
    /// near-zero eigenfunctions only by O(μ·|u(±T)|²).
    pub boundary_penalty: f64,
    frame_left: DMatrix<f64>,
    frame_right: DMatrix<f64>,
}

/// Symmetric block tridiagonal matrix: `diag[k]` on the diagonal and
/// `off[k]` = block (k, k+1); block (k+1, k) is its transpose. A flattened
/// lower-band copy backs the Sturm counts.
pub struct BlockTridiag {
    pub diag: Vec<DMatrix<f64>>,
    pub off: Vec<DMatrix<f64>>,
    band: BandedLower,
}

/// Lower band of a symmetric banded matrix, column-major: entry (j, r)
/// holds A[j + r, j] for r = 0..=bw.
struct BandedLower {
    dim: usize,
    bw: usize,
    cols: Vec<f64>,
}

impl BandedLower {
    fn from_blocks(diag: &[DMatrix<f64>], off: &[DMatrix<f64>]) -> Self {
        let dim: usize = diag.iter().map(|d| d.nrows()).sum();
        let mut bw = 0;
        for k in 0..diag.len() {
            let mut w = diag[k].nrows() - 1;
            if k < off.len() {
                w = diag[k].nrows() - 1 + diag[k + 1].nrows();
            }
            bw = bw.max(w);
        }
        let mut cols = vec![0.0; dim * (bw + 1)];
        let mut offset = 0;
        for k in 0..diag.len() {
            let d = &diag[k];
            let sz = d.nrows();
            for c in 0..sz {
                let j = offset + c;
                for r in c..sz {
                    cols[j * (bw + 1) + (r - c)] = d[(r, c)];
                }
                if k < off.len() {
                    // rows of block (k+1, k) = off[k]ᵀ live below the diagonal
                    let b = &off[k];
                    for r in 0..b.ncols() {
                        let row = offset + sz + r;
                        cols[j * (bw + 1) + (row - j)] = b[(c, r)];
                    }
                }
            }
            offset += sz;
        }
        BandedLower { dim, bw, cols }
    }

    /// Negative-pivot count of the LDLᵀ factorization of A − shift·I.
    /// `None` signals a pivot too close to zero (caller jitters the shift).
    fn ldlt_negatives(&self, shift: f64, tiny: f64, work: &mut Vec<f64>) -> Option<usize> {
        let (dim, bw) = (self.dim, self.bw);
        work.clear();
        work.extend_from_slice(&self.cols);
        for j in 0..dim {
            work[j * (bw + 1)] -= shift;
        }
        let mut neg = 0;
        for j in 0..dim {
            let d = work[j * (bw + 1)];
            if d.abs() < tiny {
                return None;
            }
            if d < 0.0 {
                neg += 1;
            }
            let reach = bw.min(dim - 1 - j);
            // rank-1 update of the trailing band: A -= (col/d) colᵀ
            for r in 1..=reach {
                let ljr = work[j * (bw + 1) + r] / d;
                if ljr == 0.0 {
                    continue;
                }
                let col = j + r;
                for s in r..=reach {
                    work[col * (bw + 1) + (s - r)] -= ljr * work[j * (bw + 1) + s];
                }
            }
            for r in 1..=reach {
                work[j * (bw + 1) + r] /= d;
            }
        }
        Some(neg)
    }
}

impl DiscretizedPath {
    pub fn new(
        fam: &HamiltonianFamily,
        t_num: f64,
        n_cells: usize,
        boundary: BoundaryCondition,
        wilson: f64,
    ) -> Result<Self> {
        if n_cells < 8 {
            return Err(Error::InvalidInput(format!(
                "discretization needs at least 8 cells, got {n_cells}"
            )));
        }
        let n = fam.half_dim();
        let (frame_left, frame_right) = match boundary {
            BoundaryCondition::PlateauFrozen => (
                invariant_subspace_unstable(&fam.s_minus_inf(0.0))?
                    .frame()
                    .clone(),
                invariant_subspace_stable(&fam.s_plus_inf(0.0))?
                    .frame()
                    .clone(),
            ),
            BoundaryCondition::Vertical => {
                let mut f = DMatrix::zeros(2 * n, n);
                for i in 0..n {
                    f[(n + i, i)] = 1.0;
                }
                (f.clone(), f)
            }
        };
        // penalty above the sampled parameter-derivative bound so the edge
        // modes cannot reach zero anywhere on the sweep
        let mut c1: f64 = 0.0;
        for i in 0..=4 {
            let lambda = i as f64 / 4.0;
            for t in [-0.8 * t_num, 0.0, 0.6 * t_num] {
                if let Ok(sd) = fam.s_dot(lambda, t) {
                    c1 = c1.max(sd.amax());
                }
            }
        }
        Ok(DiscretizedPath {
            fam: fam.clone(),
            t_num,
            n_cells,
            boundary,
            wilson,
            boundary_penalty: 2.0 + 2.0 * c1,
            frame_left,
            frame_right,
        })
    }

    pub fn matrix_dim(&self) -> usize {
        let n = self.fam.half_dim();
        2 * n * (self.n_cells - 1) + 2 * n
    }

    /// Assembles the constrained symmetric block tridiagonal at one λ.
    pub fn assemble(&self, lambda: f64) -> BlockTridiag {
        let n = self.fam.half_dim();
        let dim = 2 * n;
        let nn = self.n_cells;
        let h = 2.0 * self.t_num / nn as f64;

        // K = diag(I, -I), off-diagonal template J/(2h) - (w/(2h)) K
        let mut off_template = DMatrix::zeros(dim, dim);
        for i in 0..n {
            off_template[(i, n + i)] = -1.0 / (2.0 * h);
            off_template[(n + i, i)] = 1.0 / (2.0 * h);
            off_template[(i, i)] = -self.wilson / (2.0 * h);
            off_template[(n + i, n + i)] = self.wilson / (2.0 * h);
        }
        let mut wilson_diag = DMatrix::zeros(dim, dim);
        for i in 0..n {
            wilson_diag[(i, i)] = self.wilson / h;
            wilson_diag[(n + i, n + i)] = -self.wilson / h;
        }

        let node_s = |k: usize| {
            let t = -self.t_num + k as f64 * h;
            self.fam.s(lambda, t) + &wilson_diag
        };

        let mut diag = Vec::with_capacity(nn + 1);
        let mut off = Vec::with_capacity(nn);
        // first node, constrained to the left frame and penalized
        let penalty = DMatrix::identity(n, n) * self.boundary_penalty;
        diag.push(self.frame_left.transpose() * node_s(0) * &self.frame_left + &penalty);
        off.push(self.frame_left.transpose() * &off_template);
        for k in 1..nn {
            diag.push(node_s(k));
            if k + 1 < nn {
                off.push(off_template.clone());
            }
        }
        off.push(&off_template * &self.frame_right);
        diag.push(self.frame_right.transpose() * node_s(nn) * &self.frame_right + &penalty);
        let band = BandedLower::from_blocks(&diag, &off);
        BlockTridiag { diag, off, band }
    }
}

impl BlockTridiag {
    pub fn dim(&self) -> usize {
        self.diag.iter().map(|d| d.nrows()).sum()
    }

    /// Largest absolute entry; the scale used for shift jitter and brackets.
    fn scale(&self) -> f64 {
        let d = self.diag.iter().map(|m| m.amax()).fold(0.0, f64::max);
        let o = self.off.iter().map(|m| m.amax()).fold(0.0, f64::max);
        d.max(o).max(1.0)
    }

    /// Gershgorin-type bound on the spectrum.
    pub fn spectral_bound(&self) -> f64 {
        let mut bound: f64 = 0.0;
        for k in 0..self.diag.len() {
            let mut row = self.diag[k].nrows() as f64 * self.diag[k].amax();
            if k > 0 {
                row += self.off[k - 1].ncols() as f64 * self.off[k - 1].amax();
            }
            if k < self.off.len() {
                row += self.off[k].ncols() as f64 * self.off[k].amax();
            }
            bound = bound.max(row);
        }
        bound
    }

    /// Number of eigenvalues strictly below `x` by banded LDLᵀ (Sturm count).
    /// Retries with a jittered shift when a pivot is numerically zero.
    pub fn count_below(&self, x: f64) -> Result<usize> {
        let jitter = 1e-13 * self.scale();
        let mut work = Vec::new();
        let mut shift = x;
        for _ in 0..6 {
            match self.band.ldlt_negatives(shift, jitter, &mut work) {
                Some(neg) => return Ok(neg),
                None => shift += jitter * 7.0,
            }
        }
        Err(Error::NonConvergence(format!(
            "inertia count at shift {x} kept hitting singular pivots"
        )))
    }

    /// The k-th smallest eigenvalue (0-based) by bisection on the count.
    pub fn eigenvalue_by_index(&self, k: usize, tol: f64) -> Result<f64> {
        let bound = self.spectral_bound();
        let (mut lo, mut hi) = (-bound, bound);
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if self.count_below(mid)? <= k {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Near-zero spectral data of one λ-slice.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LambdaSlice {
    pub lambda: f64,
    /// Number of negative eigenvalues (eigenvalues within ±tiny of zero are
    /// booked as nonnegative, consistently across slices).
    pub negatives: usize,
    /// The nearest extracted eigenvalues on each side of zero, ascending.
    pub near_zero: Vec<f64>,
    /// Radius around 0 inside which `near_zero` is exhaustive; windows must
    /// stay below it or unseen eigenvalues could cross the window edge.
    pub coverage: f64,
}

fn slice_at(
    disc: &DiscretizedPath,
    lambda: f64,
    per_side: usize,
    eig_tol: f64,
) -> Result<(LambdaSlice, BlockTridiag)> {
    let a = disc.assemble(lambda);
    let theta = 1e-12 * a.scale();
    let negatives = a.count_below(-theta)?;
    let dim = a.dim();
    let lo_idx = negatives.saturating_sub(per_side);
    let hi_idx = (negatives + per_side).min(dim);
    let mut near = Vec::new();
    for k in lo_idx..hi_idx {
        near.push(a.eigenvalue_by_index(k, eig_tol)?);
    }
    let bound = a.spectral_bound();
    let neg_cov = if lo_idx == 0 {
        bound
    } else {
        near.first().map(|e| e.abs()).unwrap_or(bound)
    };
    let pos_cov = if hi_idx == dim {
        bound
    } else {
        near.last().map(|e| e.abs()).unwrap_or(bound)
    };
    Ok((
        LambdaSlice {
            lambda,
            negatives,
            near_zero: near,
            coverage: neg_cov.min(pos_cov),
        },
        a,
    ))
}

/// Window radius for one subinterval: the candidate midpoint of the merged
/// near-zero magnitudes with the largest margin, capped by the extraction
/// coverage of both slices so that no unseen eigenvalue can sit at (or sweep
/// through) the window edge.
fn choose_window(a: &LambdaSlice, b: &LambdaSlice, floor: f64) -> Result<f64> {
    let mut mags: Vec<f64> = a
        .near_zero
        .iter()
        .chain(b.near_zero.iter())
        .map(|e| e.abs())
        .collect();
    mags.sort_by(|x, y| x.partial_cmp(y).unwrap());
    mags.dedup_by(|x, y| (*x - *y).abs() < 1e-14);

    let cap = 0.98 * a.coverage.min(b.coverage);
    let mut candidates: Vec<f64> = Vec::new();
    let mut prev = 0.0;
    for &m in &mags {
        let c = 0.5 * (prev + m);
        if c > 0.0 && c < cap {
            candidates.push(c);
        }
        prev = m;
    }
    if let Some(&last) = mags.last() {
        let c = 0.5 * (last + cap);
        if c > 0.0 && c < cap {
            candidates.push(c);
        }
    }
    if candidates.is_empty() && cap > floor {
        candidates.push(0.5 * cap);
    }
    let margin = |c: f64| {
        mags.iter()
            .map(|m| (m - c).abs())
            .fold(f64::INFINITY, f64::min)
    };
    let best = candidates
        .into_iter()
        .max_by(|x, y| margin(*x).partial_cmp(&margin(*y)).unwrap())
        .ok_or_else(|| {
            Error::NonConvergence(format!(
                "no admissible spectral window between lambda = {} and {}; \
                 refine lambda_steps",
                a.lambda, b.lambda
            ))
        })?;
    let a_win = best.max(floor);
    if margin(a_win) < 1e-9 || a_win > cap {
        return Err(Error::NonConvergence(format!(
            "eigenvalue pinned at the window edge between lambda = {} and {}; \
             refine lambda_steps",
            a.lambda, b.lambda
        )));
    }
    Ok(a_win)
}

/// Windowed spectral flow: partitions [0, 1] at the λ grid, picks a window
/// radius per subinterval away from the endpoint spectra, and accumulates the
/// change of the eigenvalue count in [0, aᵢ].
pub fn spectral_flow_discretized(disc: &DiscretizedPath, lambda_steps: usize) -> Result<i64> {
    Ok(discretized_sweep(disc, lambda_steps)?.0)
}

/// As [`spectral_flow_discretized`], also returning the per-λ slices (used
/// for trajectory CSV output and diagnostics).
pub fn discretized_sweep(
    disc: &DiscretizedPath,
    lambda_steps: usize,
) -> Result<(i64, Vec<LambdaSlice>)> {
    if lambda_steps < 2 {
        return Err(Error::InvalidInput("lambda_steps must be at least 2".into()));
    }
    let n = disc.fam.half_dim();
    let per_side = n + 1;
    let eig_tol = 1e-9_f64;

    let results: Vec<(LambdaSlice, BlockTridiag)> = (0..=lambda_steps)
        .into_par_iter()
        .map(|j| slice_at(disc, j as f64 / lambda_steps as f64, per_side, eig_tol))
        .collect::<Result<Vec<_>>>()?;

    let (slices, mats): (Vec<LambdaSlice>, Vec<BlockTridiag>) = results.into_iter().unzip();

    let mut total: i64 = 0;
    for j in 1..slices.len() {
        let (sa, sb) = (&slices[j - 1], &slices[j]);
        let window = choose_window(sa, sb, 1e-6)?;
        let count = |mat: &BlockTridiag, slice: &LambdaSlice| -> Result<i64> {
            let below = mat.count_below(window)?;
            Ok(below as i64 - slice.negatives as i64)
        };
        total += count(&mats[j], sb)? - count(&mats[j - 1], sa)?;
    }
    Ok((total, slices))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use std::collections::BTreeMap;

    fn pt() -> HamiltonianFamily {
        catalog::build("poschl_teller", &BTreeMap::new())
            .unwrap()
            .family
    }

    #[test]
    fn assembled_matrix_is_symmetric() {
        let fam = pt();
        let disc =
            DiscretizedPath::new(&fam, 12.0, 64, BoundaryCondition::PlateauFrozen, 1.0).unwrap();
        let a = disc.assemble(0.37);
        // flatten and compare against transpose
        let dim = a.dim();
        let mut dense = DMatrix::zeros(dim, dim);
        let mut offset = 0;
        for k in 0..a.diag.len() {
            let d = &a.diag[k];
            dense
                .view_mut((offset, offset), (d.nrows(), d.ncols()))
                .copy_from(d);
            if k < a.off.len() {
                let b = &a.off[k];
                dense
                    .view_mut((offset, offset + d.nrows()), (b.nrows(), b.ncols()))
                    .copy_from(b);
                dense
                    .view_mut((offset + d.nrows(), offset), (b.ncols(), b.nrows()))
                    .copy_from(&b.transpose());
            }
            offset += d.nrows();
        }
        assert!((&dense - dense.transpose()).amax() < 1e-10);
    }

    #[test]
    fn inertia_matches_dense_eigencount() {
        let fam = pt();
        let disc =
            DiscretizedPath::new(&fam, 12.0, 48, BoundaryCondition::PlateauFrozen, 1.0).unwrap();
        let a = disc.assemble(0.5);
        let dim = a.dim();
        let mut dense = DMatrix::zeros(dim, dim);
        let mut offset = 0;
        for k in 0..a.diag.len() {
            let d = &a.diag[k];
            dense
                .view_mut((offset, offset), (d.nrows(), d.ncols()))
                .copy_from(d);
            if k < a.off.len() {
                let b = &a.off[k];
                dense
                    .view_mut((offset, offset + d.nrows()), (b.nrows(), b.ncols()))
                    .copy_from(b);
                dense
                    .view_mut((offset + d.nrows(), offset), (b.ncols(), b.nrows()))
                    .copy_from(&b.transpose());
            }
            offset += d.nrows();
        }
        let eigs = dense.symmetric_eigen().eigenvalues;
        for &x in &[-1.0, -0.1, 0.0, 0.3, 2.0] {
            let dense_count = eigs.iter().filter(|e| **e < x).count();
            assert_eq!(a.count_below(x).unwrap(), dense_count, "shift {x}");
        }
    }

    #[test]
    fn eigenvalue_by_index_brackets_correctly() {
        let fam = pt();
        let disc =
            DiscretizedPath::new(&fam, 12.0, 48, BoundaryCondition::PlateauFrozen, 1.0).unwrap();
        let a = disc.assemble(0.5);
        let k = a.count_below(0.0).unwrap();
        let e = a.eigenvalue_by_index(k, 1e-10).unwrap();
        // the first nonnegative eigenvalue is consistent with the counts
        assert!(a.count_below(e - 1e-8).unwrap() <= k);
        assert!(a.count_below(e + 1e-8).unwrap() >= k + 1);
    }
}
