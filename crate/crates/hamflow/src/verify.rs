//! Cross-validation of the spectral-flow/Maslov identity and bifurcation
//! certificates.
//!
//! `verify_main` computes three integers for a family — crossing-form
//! spectral flow, discretized spectral flow, and the relative Maslov index of
//! λ ↦ (E^u_λ(0), E^s_λ(0)) — and reports whether they agree. Any mismatch
//! ships with the full diagnostic bundle rather than a majority vote, since
//! disagreement indicates a convention or tolerance bug.
//!
//! Bifurcation certificates are issued from linearized data only: a nonzero
//! Maslov index forces at least one bifurcation point of the declared
//! nonlinear family, and when the singular set is finite, at least
//! ⌊|μ|/n⌋ distinct ones.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Assumption, Error, Result};
use crate::hamsys::{subspace_paths, HamiltonianFamily};
use crate::specflow::{
    detect_crossings, discretized_sweep, spectral_flow_regularized, BoundaryCondition,
    CrossingReport, DiscretizedPath, LambdaSlice, SpecflowConfig,
};
use crate::symplectic::{
    relative_maslov_index_via_product, relative_with_crossings, MaslovConfig,
};

/// Discretization settings for the matrix route.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscretizationSettings {
    pub t_num: f64,
    pub n_cells: usize,
    pub lambda_steps: usize,
    pub boundary: BoundaryCondition,
    /// Doubler-suppression coefficient of the assembly.
    pub stabilization: f64,
}

impl Default for DiscretizationSettings {
    fn default() -> Self {
        DiscretizationSettings {
            t_num: 12.0,
            n_cells: 1200,
            lambda_steps: 200,
            boundary: BoundaryCondition::PlateauFrozen,
            stabilization: 1.0,
        }
    }
}

/// Everything `verify_main` needs.
#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub specflow: SpecflowConfig,
    pub maslov: MaslovConfig,
    pub disc: DiscretizationSettings,
    /// Central-difference step for the subspace-path crossing forms.
    pub path_fd_step: f64,
    /// Also run the product-space Maslov route and compare.
    pub cross_validate_maslov: bool,
    /// λ-samples for the A1 sweep at validation time.
    pub a1_samples: usize,
    pub hyper_tol: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            specflow: SpecflowConfig::default(),
            maslov: MaslovConfig {
                // propagated subspace paths carry finite-difference noise of
                // roughly frame-error / fd-step; a tiny form entry cannot be
                // trusted as a genuine sign
                form_floor: 1e-4,
                ..MaslovConfig::default()
            },
            disc: DiscretizationSettings::default(),
            path_fd_step: 1e-5,
            cross_validate_maslov: true,
            a1_samples: 32,
            hyper_tol: 1e-6,
        }
    }
}

/// The two spectral flows, the Maslov index, and the audit trail.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub sfl_crossings: i64,
    pub sfl_discretized: i64,
    pub maslov: i64,
    pub agree: bool,
    pub crossings: Vec<CrossingReport>,
    pub diagnostics: BTreeMap<String, String>,
}

/// Computes the three integers and their agreement flag.
pub fn verify_main(fam: &HamiltonianFamily, cfg: &VerifyConfig) -> Result<VerificationReport> {
    let mut diagnostics = BTreeMap::new();
    let family_diag = fam.validate(cfg.a1_samples, cfg.hyper_tol)?;
    diagnostics.insert(
        "c1_bound".into(),
        format!("{:.6e}", family_diag.c1_bound),
    );
    diagnostics.insert(
        "min_hyperbolic_gap".into(),
        format!("{:.6e}", family_diag.min_hyperbolic_gap),
    );

    let t = std::time::Instant::now();
    let (sfl_crossings, crossings, delta) = spectral_flow_regularized(fam, &cfg.specflow)?;
    diagnostics.insert("regularization_delta".into(), format!("{delta:e}"));
    diagnostics.insert(
        "time_crossing_route_ms".into(),
        format!("{}", t.elapsed().as_millis()),
    );
    for c in &crossings {
        if c.kernel_dim > fam.half_dim() {
            return Err(Error::NonConvergence(format!(
                "kernel dimension {} exceeds n = {} at lambda = {}",
                c.kernel_dim,
                fam.half_dim(),
                c.lambda0
            )));
        }
    }

    let t = std::time::Instant::now();
    let disc = DiscretizedPath::new(
        fam,
        cfg.disc.t_num,
        cfg.disc.n_cells,
        cfg.disc.boundary,
        cfg.disc.stabilization,
    )?;
    let (sfl_discretized, _slices) = discretized_sweep(&disc, cfg.disc.lambda_steps)?;
    diagnostics.insert(
        "time_discretized_route_ms".into(),
        format!("{}", t.elapsed().as_millis()),
    );

    let t = std::time::Instant::now();
    let maslov = relative_maslov_at(fam, 0.0, cfg, &mut diagnostics)?;
    diagnostics.insert(
        "time_maslov_route_ms".into(),
        format!("{}", t.elapsed().as_millis()),
    );

    let agree = sfl_crossings == sfl_discretized && sfl_discretized == maslov;
    Ok(VerificationReport {
        sfl_crossings,
        sfl_discretized,
        maslov,
        agree,
        crossings,
        diagnostics,
    })
}

/// Relative Maslov index of (E^u_·(t₀), E^s_·(t₀)), optionally checked
/// against the product-space route.
fn relative_maslov_at(
    fam: &HamiltonianFamily,
    t0: f64,
    cfg: &VerifyConfig,
    diagnostics: &mut BTreeMap<String, String>,
) -> Result<i64> {
    let (unstable, stable) = subspace_paths(fam, t0, &cfg.specflow.integrator, cfg.path_fd_step);
    let (maslov, _) = relative_with_crossings(&unstable, &stable, &cfg.maslov)?;
    if cfg.cross_validate_maslov {
        let via_product = relative_maslov_index_via_product(&unstable, &stable, &cfg.maslov)?;
        diagnostics.insert(
            format!("maslov_product_route_t0_{t0}"),
            via_product.to_string(),
        );
        if via_product != maslov {
            return Err(Error::NonConvergence(format!(
                "Maslov routes disagree at t0 = {t0}: direct {maslov}, product {via_product}"
            )));
        }
    }
    Ok(maslov)
}

/// Checks that the relative Maslov index is the same for every base point in
/// `t0_list`.
pub fn maslov_t0_independence(
    fam: &HamiltonianFamily,
    t0_list: &[f64],
    cfg: &VerifyConfig,
) -> Result<bool> {
    let mut values = Vec::new();
    let mut diagnostics = BTreeMap::new();
    for &t0 in t0_list {
        let v = relative_maslov_at(fam, t0, cfg, &mut diagnostics).map_err(|e| match e {
            Error::InvalidInput(msg) if msg.contains("endpoint transversality") => {
                Error::AssumptionViolation {
                    assumption: Assumption::A2,
                    lambda: f64::NAN,
                    detail: format!(
                        "endpoint transversality failed at base point t0 = {t0} \
                         (inconsistent with A2): {msg}"
                    ),
                }
            }
            other => other,
        })?;
        values.push(v);
    }
    Ok(values.windows(2).all(|w| w[0] == w[1]))
}

/// Bifurcation certificate for the nonlinear family whose linearization is
/// `fam`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BifurcationCertificate {
    pub maslov: i64,
    pub half_dim: usize,
    /// ⌊|μ|/n⌋ distinct bifurcation points when the singular set is finite.
    pub lower_bound: usize,
    pub sigma_finite: bool,
    /// Detected singular instants of the linearized path (normalized λ).
    pub sigma_locations: Vec<f64>,
    /// The verification backing the certificate.
    pub verification: VerificationReport,
}

/// Issues a certificate from linearized data: requires A1/A2 and a verified
/// Maslov index. When crossing clusters stay unresolved the certificate only
/// carries the existence clause (sigma_finite = false).
pub fn bifurcation_certificate(
    fam: &HamiltonianFamily,
    cfg: &VerifyConfig,
) -> Result<BifurcationCertificate> {
    let verification = verify_main(fam, cfg)?;
    let scan = detect_crossings(fam, &cfg.specflow)?;
    let n = fam.half_dim();
    let lower_bound = (verification.maslov.unsigned_abs() as usize) / n;
    let sigma_finite = !scan.cluster_warning;
    let cert = BifurcationCertificate {
        maslov: verification.maslov,
        half_dim: n,
        lower_bound: if sigma_finite { lower_bound } else { 0 },
        sigma_finite,
        sigma_locations: scan.locations,
        verification,
    };
    if cert.lower_bound > cert.sigma_locations.len() {
        return Err(Error::NonConvergence(format!(
            "certificate inconsistency: lower bound {} exceeds the {} detected \
             singular instants",
            cert.lower_bound,
            cert.sigma_locations.len()
        )));
    }
    Ok(cert)
}

/// Near-zero eigenvalue trajectories of the discretized route (CSV export).
pub fn discretized_trajectories(
    fam: &HamiltonianFamily,
    cfg: &VerifyConfig,
) -> Result<Vec<LambdaSlice>> {
    let disc = DiscretizedPath::new(
        fam,
        cfg.disc.t_num,
        cfg.disc.n_cells,
        cfg.disc.boundary,
        cfg.disc.stabilization,
    )?;
    Ok(discretized_sweep(&disc, cfg.disc.lambda_steps)?.1)
}
