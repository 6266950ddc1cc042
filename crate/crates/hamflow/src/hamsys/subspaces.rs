//! Stable and unstable subspaces E^s_λ(t₀), E^u_λ(t₀) of a family.
//!
//! Beyond the plateau time the family is autonomous, so E^s at t ≥ T equals
//! the stable invariant subspace of J·S(λ, +∞); for earlier base points the
//! subspace is carried there by the flow, which is the numerically benign
//! direction (stable modes grow when integrated backwards, so the frame
//! stays dominated by the right span).

use super::flow::{propagate_lagrangian, IntegratorConfig};
use super::invariant::{assert_a1, invariant_subspace_stable, invariant_subspace_unstable};
use super::HamiltonianFamily;
use crate::error::Result;
use crate::symplectic::{stacked_frame_detector, LagrangianPath, LagrangianSubspace};

/// E^s_λ(t₀): asymptotic stable subspace at +∞ transported back to t₀.
pub fn stable_subspace(
    fam: &HamiltonianFamily,
    lambda: f64,
    t0: f64,
    cfg: &IntegratorConfig,
) -> Result<LagrangianSubspace> {
    assert_a1(fam, lambda, 0.0)?;
    let at_infinity = invariant_subspace_stable(&fam.s_plus_inf(lambda))?;
    let t_start = fam.t_plateau();
    if t0 >= t_start {
        return Ok(at_infinity);
    }
    propagate_lagrangian(fam, lambda, &at_infinity, t_start, t0, cfg)
}

/// E^u_λ(t₀): asymptotic unstable subspace at −∞ transported forward to t₀.
pub fn unstable_subspace(
    fam: &HamiltonianFamily,
    lambda: f64,
    t0: f64,
    cfg: &IntegratorConfig,
) -> Result<LagrangianSubspace> {
    assert_a1(fam, lambda, 0.0)?;
    let at_infinity = invariant_subspace_unstable(&fam.s_minus_inf(lambda))?;
    let t_start = -fam.t_plateau();
    if t0 <= t_start {
        return Ok(at_infinity);
    }
    propagate_lagrangian(fam, lambda, &at_infinity, t_start, t0, cfg)
}

/// Smallest singular value of [E^u frame | E^s frame] at (λ, t₀): the
/// sign-free kernel detector, zero exactly on E^u ∩ E^s ≠ {0}.
pub fn crossing_detector(
    fam: &HamiltonianFamily,
    lambda: f64,
    t0: f64,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    let eu = unstable_subspace(fam, lambda, t0, cfg)?;
    let es = stable_subspace(fam, lambda, t0, cfg)?;
    Ok(stacked_frame_detector(&eu, &es))
}

/// The λ-paths (E^u_·(t₀), E^s_·(t₀)) as Lagrangian paths, with the
/// finite-difference step used for their crossing forms.
pub fn subspace_paths(
    fam: &HamiltonianFamily,
    t0: f64,
    cfg: &IntegratorConfig,
    fd_step: f64,
) -> (LagrangianPath, LagrangianPath) {
    let fam_u = fam.clone();
    let fam_s = fam.clone();
    let cfg_u = cfg.clone();
    let cfg_s = cfg.clone();
    let unstable = LagrangianPath::new(move |lambda| unstable_subspace(&fam_u, lambda, t0, &cfg_u))
        .with_fd_step(fd_step);
    let stable = LagrangianPath::new(move |lambda| stable_subspace(&fam_s, lambda, t0, &cfg_s))
        .with_fd_step(fd_step);
    (unstable, stable)
}
