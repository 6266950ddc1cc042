//! Families of Hamiltonian systems Ju′(t) + S_λ(t)u(t) = 0 on the real line,
//! their fundamental solutions, stable/unstable subspaces, kernels and
//! operator crossing forms.
//!
//! A family is the symmetric-matrix map S(λ, t) together with its declared
//! t → ±∞ limits and a plateau time beyond which S is treated as exactly
//! constant in t. The λ-derivative Ṡ is analytic when supplied and a guarded
//! central difference otherwise.

mod flow;
mod invariant;
mod kernel;
mod subspaces;

pub use flow::{propagate_frame, propagate_lagrangian, transfer_matrix, IntegratorConfig};
pub use invariant::{check_hyperbolic, invariant_subspace_stable, invariant_subspace_unstable};
pub use kernel::{kernel, operator_crossing_form, KernelBasis, KernelConfig};
pub use subspaces::{
    crossing_detector, stable_subspace, subspace_paths, unstable_subspace,
};

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Assumption, Error, Result};

/// Relative symmetry defect allowed for S(λ, t) samples.
const SYMMETRY_REL_TOL: f64 = 1e-12;

type MatrixFn = Arc<dyn Fn(f64, f64) -> DMatrix<f64> + Send + Sync>;
type LimitFn = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;

/// A one-parameter family of Hamiltonian systems with hyperbolic limits.
///
/// Immutable once built; evaluation closures must be reentrant. λ always runs
/// over [0, 1]; any affine reparametrization onto a user range happens at
/// problem-loading time.
#[derive(Clone)]
pub struct HamiltonianFamily {
    n: usize,
    s: MatrixFn,
    s_dot: Option<MatrixFn>,
    s_plus_inf: LimitFn,
    s_minus_inf: LimitFn,
    t_plateau: f64,
    plateau_tol: f64,
}

impl std::fmt::Debug for HamiltonianFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HamiltonianFamily")
            .field("n", &self.n)
            .field("t_plateau", &self.t_plateau)
            .field("plateau_tol", &self.plateau_tol)
            .field("analytic_s_dot", &self.s_dot.is_some())
            .finish()
    }
}

impl HamiltonianFamily {
    pub fn new(
        n: usize,
        s: impl Fn(f64, f64) -> DMatrix<f64> + Send + Sync + 'static,
        s_plus_inf: impl Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
        s_minus_inf: impl Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
        t_plateau: f64,
    ) -> Self {
        HamiltonianFamily {
            n,
            s: Arc::new(s),
            s_dot: None,
            s_plus_inf: Arc::new(s_plus_inf),
            s_minus_inf: Arc::new(s_minus_inf),
            t_plateau,
            plateau_tol: 1e-10,
        }
    }

    /// Supplies the analytic λ-derivative ∂S/∂λ.
    pub fn with_s_dot(
        mut self,
        s_dot: impl Fn(f64, f64) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.s_dot = Some(Arc::new(s_dot));
        self
    }

    pub fn with_plateau_tol(mut self, tol: f64) -> Self {
        self.plateau_tol = tol;
        self
    }

    pub fn half_dim(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        2 * self.n
    }

    pub fn t_plateau(&self) -> f64 {
        self.t_plateau
    }

    pub fn plateau_tol(&self) -> f64 {
        self.plateau_tol
    }

    /// S(λ, t), clamped to the plateau value for |t| beyond the plateau time.
    pub fn s(&self, lambda: f64, t: f64) -> DMatrix<f64> {
        if t >= self.t_plateau {
            (self.s_plus_inf)(lambda)
        } else if t <= -self.t_plateau {
            (self.s_minus_inf)(lambda)
        } else {
            (self.s)(lambda, t)
        }
    }

    /// S(λ, t) without the plateau clamp (used to audit the declared plateau).
    fn s_raw(&self, lambda: f64, t: f64) -> DMatrix<f64> {
        (self.s)(lambda, t)
    }

    pub fn s_plus_inf(&self, lambda: f64) -> DMatrix<f64> {
        (self.s_plus_inf)(lambda)
    }

    pub fn s_minus_inf(&self, lambda: f64) -> DMatrix<f64> {
        (self.s_minus_inf)(lambda)
    }

    /// ∂S/∂λ, analytic when supplied, otherwise a guarded central difference.
    pub fn s_dot(&self, lambda: f64, t: f64) -> Result<DMatrix<f64>> {
        if let Some(sd) = &self.s_dot {
            return Ok(sd(lambda, t));
        }
        // central difference with Richardson check; escalate the step when
        // the two quotients disagree
        let base = 1e-5;
        for escalation in 0..3 {
            let h0 = base * 4f64.powi(escalation);
            let h = h0.min(lambda / 2.0).min((1.0 - lambda) / 2.0).max(1e-8);
            let quot = |step: f64| (self.s(lambda + step, t) - self.s(lambda - step, t)) / (2.0 * step);
            let d_h = quot(h);
            let d_half = quot(h / 2.0);
            let diff = (&d_h - &d_half).amax();
            let scale = d_half.amax().max(1e-6);
            if diff <= 1e-4 * scale {
                return Ok((d_half * 4.0 - d_h) / 3.0);
            }
        }
        Err(Error::NonConvergence(format!(
            "central-difference dS/dlambda did not stabilize at (lambda, t) = ({lambda}, {t})"
        )))
    }

    /// Symmetry, plateau and A1 checks over a sampling grid; returns the
    /// sampled bound C₁ on ‖Ṡ‖ and the minimal hyperbolicity gap.
    pub fn validate(&self, lambda_samples: usize, hyper_tol: f64) -> Result<FamilyDiagnostics> {
        let mut c1: f64 = 0.0;
        let mut min_gap = f64::INFINITY;
        let t_probe: Vec<f64> = vec![
            0.0,
            0.37 * self.t_plateau,
            -0.59 * self.t_plateau,
            0.93 * self.t_plateau,
            -self.t_plateau,
            self.t_plateau,
        ];
        for i in 0..=lambda_samples {
            let lambda = i as f64 / lambda_samples as f64;
            for &t in &t_probe {
                let s = self.s(lambda, t);
                if s.nrows() != 2 * self.n || s.ncols() != 2 * self.n {
                    return Err(Error::Schema(format!(
                        "S(lambda, t) has shape {}x{}, expected {}x{}",
                        s.nrows(),
                        s.ncols(),
                        2 * self.n,
                        2 * self.n
                    )));
                }
                let defect = (&s - s.transpose()).amax();
                if defect > SYMMETRY_REL_TOL * s.amax().max(1.0) {
                    return Err(Error::Schema(format!(
                        "S(lambda = {lambda}, t = {t}) is not symmetric (defect {defect:.3e})"
                    )));
                }
                c1 = c1.max(self.s_dot(lambda, t)?.amax());
            }
            // plateau: the declared limits must carry on past the plateau time
            for &sgn in &[1.0, -1.0] {
                let limit = if sgn > 0.0 {
                    self.s_plus_inf(lambda)
                } else {
                    self.s_minus_inf(lambda)
                };
                for &scale in &[1.0, 1.5, 2.0] {
                    let t = sgn * self.t_plateau * scale;
                    let defect = (self.s_raw(lambda, t) - &limit).amax();
                    if defect > self.plateau_tol * (1.0 + limit.amax()) {
                        return Err(Error::Schema(format!(
                            "plateau violated at lambda = {lambda}, t = {t}: \
                             defect {defect:.3e} above {:.1e}",
                            self.plateau_tol
                        )));
                    }
                }
                let (hyper, gap) = check_hyperbolic(&limit);
                if !hyper || gap <= hyper_tol {
                    return Err(Error::AssumptionViolation {
                        assumption: Assumption::A1,
                        lambda,
                        detail: format!(
                            "J·S(lambda, {}∞) has spectral gap {gap:.3e} (tol {hyper_tol:.1e})",
                            if sgn > 0.0 { "+" } else { "-" }
                        ),
                    });
                }
                min_gap = min_gap.min(gap);
            }
        }
        Ok(FamilyDiagnostics {
            c1_bound: c1,
            min_hyperbolic_gap: min_gap,
        })
    }

    /// Affine reparametrization to the sub-interval [c0, c1] of the parameter.
    pub fn restrict(&self, c0: f64, c1: f64) -> HamiltonianFamily {
        let scale = c1 - c0;
        let s = self.s.clone();
        let sp = self.s_plus_inf.clone();
        let sm = self.s_minus_inf.clone();
        let sd = self.s_dot.clone();
        HamiltonianFamily {
            n: self.n,
            s: Arc::new(move |lambda, t| s(c0 + scale * lambda, t)),
            s_dot: sd.map(|sd| {
                let f: MatrixFn =
                    Arc::new(move |lambda: f64, t: f64| sd(c0 + scale * lambda, t) * scale);
                f
            }),
            s_plus_inf: Arc::new(move |lambda| sp(c0 + scale * lambda)),
            s_minus_inf: Arc::new(move |lambda| sm(c0 + scale * lambda)),
            t_plateau: self.t_plateau,
            plateau_tol: self.plateau_tol,
        }
    }

    /// The reversed family λ ↦ S(1 − λ, ·).
    pub fn reversed(&self) -> HamiltonianFamily {
        self.restrict(1.0, 0.0)
    }

    /// The shifted family S + δI (the operator path 𝒜 + δ).
    pub fn shifted(&self, delta: f64) -> HamiltonianFamily {
        let n = self.n;
        let s = self.s.clone();
        let sp = self.s_plus_inf.clone();
        let sm = self.s_minus_inf.clone();
        let sd = self.s_dot.clone();
        let eye = move || DMatrix::<f64>::identity(2 * n, 2 * n) * delta;
        let eye2 = eye.clone();
        let eye3 = eye.clone();
        HamiltonianFamily {
            n: self.n,
            s: Arc::new(move |lambda, t| s(lambda, t) + eye()),
            s_dot: sd,
            s_plus_inf: Arc::new(move |lambda| sp(lambda) + eye2()),
            s_minus_inf: Arc::new(move |lambda| sm(lambda) + eye3()),
            t_plateau: self.t_plateau,
            plateau_tol: self.plateau_tol,
        }
    }

    /// Direct sum of two families: block-wise in (q₁, q₂, p₁, p₂) coordinates
    /// so that the result again solves Ju′ + Su = 0 with the standard J.
    pub fn direct_sum(&self, other: &HamiltonianFamily) -> HamiltonianFamily {
        let n1 = self.n;
        let n2 = other.n;
        let a = self.clone();
        let b = other.clone();
        // Coordinates of the sum are (q₁, q₂, p₁, p₂): the q/p halves of each
        // summand land at offsets base and n + base with base = 0 resp. n1.
        let embed = move |sa: DMatrix<f64>, sb: DMatrix<f64>| -> DMatrix<f64> {
            let n = n1 + n2;
            let mut s = DMatrix::zeros(2 * n, 2 * n);
            let mut put = |src: &DMatrix<f64>, size: usize, base: usize| {
                for bi in 0..2usize {
                    for bj in 0..2usize {
                        for r in 0..size {
                            for c in 0..size {
                                s[(base + bi * n + r, base + bj * n + c)] =
                                    src[(bi * size + r, bj * size + c)];
                            }
                        }
                    }
                }
            };
            put(&sa, n1, 0);
            put(&sb, n2, n1);
            s
        };
        let em1 = embed.clone();
        let em2 = embed.clone();
        let em3 = embed.clone();
        let em4 = embed.clone();
        let (a1, b1) = (a.clone(), b.clone());
        let (a2, b2) = (a.clone(), b.clone());
        let (a3, b3) = (a.clone(), b.clone());
        let (a4, b4) = (a.clone(), b.clone());
        HamiltonianFamily {
            n: n1 + n2,
            s: Arc::new(move |lambda, t| em1(a1.s(lambda, t), b1.s(lambda, t))),
            s_dot: Some(Arc::new(move |lambda, t| {
                em2(
                    a2.s_dot(lambda, t).expect("component s_dot"),
                    b2.s_dot(lambda, t).expect("component s_dot"),
                )
            })),
            s_plus_inf: Arc::new(move |lambda| em3(a3.s_plus_inf(lambda), b3.s_plus_inf(lambda))),
            s_minus_inf: Arc::new(move |lambda| em4(a4.s_minus_inf(lambda), b4.s_minus_inf(lambda))),
            t_plateau: self.t_plateau.max(other.t_plateau),
            plateau_tol: self.plateau_tol.max(other.plateau_tol),
        }
    }
}

/// Quantities sampled during family validation.
#[derive(Debug, Clone, Copy)]
pub struct FamilyDiagnostics {
    /// max ‖Ṡ‖ over the validation grid (the uniform derivative bound C₁).
    pub c1_bound: f64,
    /// min over λ and both limits of the hyperbolicity gap of J·S(λ, ±∞).
    pub min_hyperbolic_gap: f64,
}
