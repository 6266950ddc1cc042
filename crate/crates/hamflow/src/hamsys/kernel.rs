//! Kernel bases of the operators 𝒜_λ = Ju′ + S_λ and the operator crossing
//! form Γ(𝒜, λ₀)[u] = ∫ ⟨Ṡ_{λ₀}(t) u(t), u(t)⟩ dt.
//!
//! Via the evaluation isomorphism the kernel at a crossing is
//! E^u_{λ₀}(0) ∩ E^s_{λ₀}(0); each kernel direction extends to a homoclinic
//! trajectory. Sampling those trajectories by plain forward integration is
//! hopeless (the co-existing growing mode is excited at rate e^{βt}), so the
//! samples are anchored to the propagated subspace frames instead: on t ≥ 0
//! the solution lies in E^s(t) and its frame coordinates are updated cell by
//! cell through the flow, projecting out the unstable contamination at every
//! sample point. The negative side is handled symmetrically inside E^u(t).

use nalgebra::DMatrix;

use super::flow::{propagate_columns_raw, propagate_frame, IntegratorConfig};
use super::invariant::{invariant_subspace_stable, invariant_subspace_unstable};
use super::HamiltonianFamily;
use crate::error::{Error, Result};
use crate::symplectic::frame_intersection;
use crate::qforms::QuadraticForm;

/// Settings for kernel extraction and trajectory sampling.
#[derive(Debug, Clone)]
pub struct KernelConfig {
    /// Half-width of the sampling window; clamped below at the plateau time.
    pub eta: Option<f64>,
    /// Sine-scale tolerance for the kernel intersection at t = 0.
    pub intersection_sine_tol: f64,
    /// Required squared endpoint decay of the normalized trajectories.
    pub decay_tol_sq: f64,
    /// Target sample spacing of the t-grid.
    pub sample_dt: f64,
    /// How far past the plateau time η may be extended by the decay rule.
    pub max_extension: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            eta: None,
            intersection_sine_tol: 1e-6,
            decay_tol_sq: 1e-10,
            sample_dt: 5e-3,
            max_extension: 30.0,
        }
    }
}

/// L²-orthonormalized kernel trajectories of 𝒜_{λ₀} on [−η, η].
#[derive(Debug, Clone)]
pub struct KernelBasis {
    pub lambda0: f64,
    /// Initial directions at t = 0 (2n × m, L²-normalized combinations).
    pub vectors: DMatrix<f64>,
    /// Uniform sample times over [−η, η] (odd count, centered at 0).
    pub times: Vec<f64>,
    /// One 2n × G sample matrix per basis function.
    pub samples: Vec<DMatrix<f64>>,
    pub eta: f64,
}

impl KernelBasis {
    pub fn dim(&self) -> usize {
        self.samples.len()
    }

    fn dt(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    /// L² Gram matrix of the stored samples (Simpson weights).
    pub fn gram(&self) -> DMatrix<f64> {
        let m = self.dim();
        let mut g = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let v = simpson_inner(&self.samples[i], &self.samples[j], self.dt(), 1, None);
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        g
    }

    /// Largest squared endpoint norm over the basis (decay diagnostic).
    pub fn endpoint_decay_sq(&self) -> f64 {
        let last = self.times.len() - 1;
        self.samples
            .iter()
            .map(|s| s.column(0).norm_squared().max(s.column(last).norm_squared()))
            .fold(0.0, f64::max)
    }

    /// Pointwise ODE residual ‖Ju′ + Su‖ on a coarsened stencil (the wide
    /// spacing keeps sample noise out of the difference quotient).
    pub fn max_ode_residual(&self, fam: &HamiltonianFamily) -> f64 {
        let stride = 4;
        let g = self.times.len();
        let dt = self.dt() * stride as f64;
        let n = fam.half_dim();
        let mut worst: f64 = 0.0;
        for s in &self.samples {
            let mut i = 2 * stride;
            while i + 2 * stride < g {
                let t = self.times[i];
                // 4th-order central difference
                let up = (-s.column(i + 2 * stride) + s.column(i + stride) * 8.0
                    - s.column(i - stride) * 8.0
                    + s.column(i - 2 * stride))
                    / (12.0 * dt);
                let u = s.column(i).clone_owned();
                let smat = fam.s(self.lambda0, t);
                // J u' + S u with J applied structurally
                let su = &smat * &u;
                let mut resid: f64 = 0.0;
                for r in 0..n {
                    resid = resid.max((-up[n + r] + su[r]).abs());
                    resid = resid.max((up[r] + su[n + r]).abs());
                }
                worst = worst.max(resid);
                i += stride;
            }
        }
        worst
    }
}

/// ⟨A·u_i, u_j⟩ in L² by composite Simpson, optionally coarsened by `stride`
/// and with a matrix weight A(t).
fn simpson_inner(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    dt: f64,
    stride: usize,
    weight: Option<&dyn Fn(f64, usize) -> DMatrix<f64>>,
) -> f64 {
    let g = a.ncols();
    let idx: Vec<usize> = (0..g).step_by(stride).collect();
    let m = idx.len();
    debug_assert!(m % 2 == 1, "Simpson needs an odd sample count");
    let h = dt * stride as f64;
    let mut acc = 0.0;
    for (k, &i) in idx.iter().enumerate() {
        let w = if k == 0 || k == m - 1 {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let ai = a.column(i);
        let term = match weight {
            Some(f) => (f(0.0, i) * ai).dot(&b.column(i)),
            None => ai.dot(&b.column(i)),
        };
        acc += w * term;
    }
    acc * h / 3.0
}

/// Extracts the kernel basis of 𝒜_{λ₀}: intersection directions at t = 0
/// extended to L²-orthonormalized trajectory samples on [−η, η].
pub fn kernel(
    fam: &HamiltonianFamily,
    lambda0: f64,
    kcfg: &KernelConfig,
    integ: &IntegratorConfig,
) -> Result<KernelBasis> {
    let mut eta = kcfg.eta.unwrap_or(fam.t_plateau()).max(fam.t_plateau());
    let eta_cap = fam.t_plateau() + kcfg.max_extension;
    loop {
        let kb = kernel_at_eta(fam, lambda0, eta, kcfg, integ)?;
        if kb.endpoint_decay_sq() <= kcfg.decay_tol_sq || kcfg.eta.is_some() {
            return Ok(kb);
        }
        eta += 2.0;
        if eta > eta_cap {
            return Err(Error::NonConvergence(format!(
                "kernel trajectories do not decay below {:.1e} by eta = {eta_cap}",
                kcfg.decay_tol_sq
            )));
        }
    }
}

fn kernel_at_eta(
    fam: &HamiltonianFamily,
    lambda0: f64,
    eta: f64,
    kcfg: &KernelConfig,
    integ: &IntegratorConfig,
) -> Result<KernelBasis> {
    let dim = fam.dim();
    // grid: 2·g_half cells, g_half even so the quadrature can be coarsened
    let g_half = (((eta / kcfg.sample_dt).ceil() as usize + 1) / 2) * 2;
    let dt = eta / g_half as f64;
    let g_total = 2 * g_half + 1;
    let center = g_half;
    let times: Vec<f64> = (0..g_total).map(|i| (i as i64 - center as i64) as f64 * dt).collect();

    // subspace frames along the grid, carried cell by cell
    let mut fs = vec![DMatrix::zeros(0, 0); g_total];
    let mut fu = vec![DMatrix::zeros(0, 0); g_total];
    fs[g_total - 1] = invariant_subspace_stable(&fam.s_plus_inf(lambda0))?
        .frame()
        .clone();
    for i in (center..g_total - 1).rev() {
        fs[i] = propagate_frame(fam, lambda0, &fs[i + 1], times[i + 1], times[i], integ)?;
    }
    fu[0] = invariant_subspace_unstable(&fam.s_minus_inf(lambda0))?
        .frame()
        .clone();
    for i in 1..=center {
        fu[i] = propagate_frame(fam, lambda0, &fu[i - 1], times[i - 1], times[i], integ)?;
    }

    let cos_tol = 0.5 * kcfg.intersection_sine_tol * kcfg.intersection_sine_tol;
    let x = frame_intersection(&fu[center], &fs[center], cos_tol)?;
    let m = x.ncols();
    if m == 0 {
        return Err(Error::InvalidInput(format!(
            "no crossing at lambda0 = {lambda0}: E^u(0) ∩ E^s(0) is trivial"
        )));
    }

    // raw samples: frame-anchored amplitude transport away from t = 0
    let mut raw: Vec<DMatrix<f64>> = (0..m).map(|_| DMatrix::zeros(dim, g_total)).collect();
    let put = |i: usize, u: &DMatrix<f64>, raw: &mut Vec<DMatrix<f64>>| {
        for (k, r) in raw.iter_mut().enumerate() {
            r.set_column(i, &u.column(k));
        }
    };
    let mut u_fwd = x.clone();
    put(center, &u_fwd, &mut raw);
    for i in center..g_total - 1 {
        let flowed = propagate_columns_raw(fam, lambda0, &u_fwd, times[i], times[i + 1], integ)?;
        // project onto E^s(t_{i+1}): kills the growing-mode contamination
        u_fwd = &fs[i + 1] * (fs[i + 1].transpose() * flowed);
        put(i + 1, &u_fwd, &mut raw);
    }
    let mut u_bwd = x.clone();
    for i in (1..=center).rev() {
        let flowed = propagate_columns_raw(fam, lambda0, &u_bwd, times[i], times[i - 1], integ)?;
        u_bwd = &fu[i - 1] * (fu[i - 1].transpose() * flowed);
        put(i - 1, &u_bwd, &mut raw);
    }

    // L²-orthonormalize through the Gram Cholesky factor
    let mut kb = KernelBasis {
        lambda0,
        vectors: x,
        times,
        samples: raw,
        eta,
    };
    let gram = kb.gram();
    let chol = gram.clone().cholesky().ok_or_else(|| {
        Error::NonConvergence("kernel Gram matrix is not positive definite".into())
    })?;
    // C = L^{-T}: columns of (samples · C) are L²-orthonormal
    let mut c = DMatrix::identity(m, m);
    chol.l().transpose().solve_upper_triangular_mut(&mut c);
    let old = kb.samples.clone();
    for j in 0..m {
        let mut acc = DMatrix::zeros(dim, kb.times.len());
        for i in 0..m {
            acc += &old[i] * c[(i, j)];
        }
        kb.samples[j] = acc;
    }
    kb.vectors = &kb.vectors * &c;

    let defect = (kb.gram() - DMatrix::identity(m, m)).amax();
    if defect > 1e-8 {
        return Err(Error::NonConvergence(format!(
            "kernel basis failed L² orthonormalization (defect {defect:.3e})"
        )));
    }
    Ok(kb)
}

/// Operator crossing form Γ(𝒜, λ₀) on the kernel basis:
/// Γᵢⱼ = ∫ ⟨Ṡ_{λ₀}(t) uᵢ(t), uⱼ(t)⟩ dt by composite Simpson, with a
/// grid-coarsening convergence guard.
pub fn operator_crossing_form(
    fam: &HamiltonianFamily,
    kb: &KernelBasis,
) -> Result<QuadraticForm> {
    let m = kb.dim();
    let dt = kb.dt();
    // cache Ṡ on the grid
    let mut sdots: Vec<DMatrix<f64>> = Vec::with_capacity(kb.times.len());
    for &t in &kb.times {
        sdots.push(fam.s_dot(kb.lambda0, t)?);
    }
    let weighted = |stride: usize| -> DMatrix<f64> {
        let mut gmat = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let f = |_: f64, idx: usize| sdots[idx].clone();
                let v = simpson_inner(&kb.samples[i], &kb.samples[j], dt, stride, Some(&f));
                gmat[(i, j)] = v;
                gmat[(j, i)] = v;
            }
        }
        gmat
    };
    let fine = weighted(1);
    let coarse = weighted(2);
    let diff = (&fine - &coarse).amax();
    if diff > 1e-6 {
        return Err(Error::NonConvergence(format!(
            "operator crossing form quadrature not converged (grid doubling \
             changes entries by {diff:.3e})"
        )));
    }
    QuadraticForm::new(fine, format!("ker A(lambda0 = {})", kb.lambda0))
}
