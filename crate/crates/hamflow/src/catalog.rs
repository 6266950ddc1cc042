//! Built-in problem families.
//!
//! Each entry produces a `HamiltonianFamily` over the normalized parameter
//! λ ∈ [0, 1] together with the affine map onto the user-facing parameter
//! range. The Pöschl–Teller wells encode the Schrödinger eigenproblem
//! −q″ + V q = λ_sch·q as the first-order system with
//! S = [[V − λ_sch, 0], [0, −1]], so crossings sit at the analytically known
//! bound states (−1 for depth 2; −4, −1 for depth 6).

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hamsys::HamiltonianFamily;

/// Resolved catalog entry: the family plus reporting metadata.
#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub id: String,
    pub n: usize,
    /// Affine image of λ = 0 resp. 1 in user coordinates.
    pub lambda_range: (f64, f64),
    pub params: BTreeMap<String, f64>,
    pub family: HamiltonianFamily,
}

impl CatalogEntry {
    /// Maps a normalized λ back to the user parameter.
    pub fn unmap(&self, lambda: f64) -> f64 {
        self.lambda_range.0 + (self.lambda_range.1 - self.lambda_range.0) * lambda
    }
}

pub const CATALOG_IDS: [&str; 5] = [
    "constant_hyperbolic",
    "poschl_teller",
    "poschl_teller_deep",
    "rotating_boundary",
    "block_direct_sum",
];

fn get(params: &BTreeMap<String, f64>, key: &str, default: f64) -> f64 {
    params.get(key).copied().unwrap_or(default)
}

fn sech2(t: f64) -> f64 {
    let c = t.cosh();
    1.0 / (c * c)
}

/// Plateau time for a sech² well of the given depth at the given tolerance.
fn sech_plateau(depth: f64, tol: f64) -> f64 {
    (depth / tol).sqrt().acosh()
}

fn poschl_teller_family(depth: f64, lo: f64, hi: f64, plateau_tol: f64) -> HamiltonianFamily {
    let scale = hi - lo;
    let t_plateau = sech_plateau(depth, plateau_tol);
    let s = move |lambda: f64, t: f64| {
        let lam_sch = lo + scale * lambda;
        DMatrix::from_row_slice(2, 2, &[-depth * sech2(t) - lam_sch, 0.0, 0.0, -1.0])
    };
    HamiltonianFamily::new(
        1,
        s,
        move |lambda| DMatrix::from_row_slice(2, 2, &[-(lo + scale * lambda), 0.0, 0.0, -1.0]),
        move |lambda| DMatrix::from_row_slice(2, 2, &[-(lo + scale * lambda), 0.0, 0.0, -1.0]),
        t_plateau,
    )
    .with_s_dot(move |_, _| DMatrix::from_row_slice(2, 2, &[-scale, 0.0, 0.0, 0.0]))
    .with_plateau_tol(plateau_tol)
}

/// Instantiates a catalog entry. Unknown ids and out-of-range parameters are
/// schema errors.
pub fn build(id: &str, params: &BTreeMap<String, f64>) -> Result<CatalogEntry> {
    let plateau_tol = get(params, "plateau_tol", 1e-10);
    match id {
        "constant_hyperbolic" => {
            let a0 = get(params, "a0", 1.0);
            let a1 = get(params, "a1", 1.0);
            if a0 <= 0.0 || a0 + a1 <= 0.0 {
                return Err(Error::Schema(
                    "constant_hyperbolic requires a0 > 0 and a0 + a1 > 0 \
                     (hyperbolicity over the whole parameter range)"
                        .into(),
                ));
            }
            let s = move |lambda: f64, _t: f64| {
                DMatrix::from_row_slice(2, 2, &[a0 + a1 * lambda, 0.0, 0.0, -1.0])
            };
            let family = HamiltonianFamily::new(1, s, move |l| s(l, 0.0), move |l| s(l, 0.0), 3.0)
                .with_s_dot(move |_, _| DMatrix::from_row_slice(2, 2, &[a1, 0.0, 0.0, 0.0]))
                .with_plateau_tol(plateau_tol);
            Ok(CatalogEntry {
                id: id.into(),
                n: 1,
                lambda_range: (0.0, 1.0),
                params: params.clone(),
                family,
            })
        }
        "poschl_teller" | "poschl_teller_deep" => {
            let default_depth = if id == "poschl_teller" { 2.0 } else { 6.0 };
            let (def_lo, def_hi) = if id == "poschl_teller" {
                (-2.0, -0.5)
            } else {
                (-5.0, -0.5)
            };
            let depth = get(params, "depth", default_depth);
            let lo = get(params, "lambda_lo", def_lo);
            let hi = get(params, "lambda_hi", def_hi);
            if depth <= 0.0 {
                return Err(Error::Schema("well depth must be positive".into()));
            }
            if lo >= 0.0 || hi >= 0.0 {
                return Err(Error::Schema(
                    "the spectral parameter range must stay below 0 so the \
                     asymptotic systems remain hyperbolic"
                        .into(),
                ));
            }
            Ok(CatalogEntry {
                id: id.into(),
                n: 1,
                lambda_range: (lo, hi),
                params: params.clone(),
                family: poschl_teller_family(depth, lo, hi, plateau_tol),
            })
        }
        "rotating_boundary" => {
            // Pöschl–Teller frozen at its bound state plus a cubic-in-λ shift:
            // the kernel eigenvalue moves like (λ − 1/2)³, so the crossing at
            // λ = 1/2 has an identically vanishing crossing form.
            let amp = get(params, "amp", 1.0);
            if amp <= 0.0 {
                return Err(Error::Schema("amp must be positive".into()));
            }
            let depth = 2.0;
            let t_plateau = sech_plateau(depth, plateau_tol);
            let cubic = move |lambda: f64| amp * (lambda - 0.5).powi(3);
            let s = move |lambda: f64, t: f64| {
                let c = cubic(lambda);
                DMatrix::from_row_slice(2, 2, &[-depth * sech2(t) + 1.0 + c, 0.0, 0.0, -1.0 + c])
            };
            let family = HamiltonianFamily::new(
                1,
                s,
                move |lambda| {
                    let c = cubic(lambda);
                    DMatrix::from_row_slice(2, 2, &[1.0 + c, 0.0, 0.0, -1.0 + c])
                },
                move |lambda| {
                    let c = cubic(lambda);
                    DMatrix::from_row_slice(2, 2, &[1.0 + c, 0.0, 0.0, -1.0 + c])
                },
                t_plateau,
            )
            .with_s_dot(move |lambda, _| {
                let d = 3.0 * amp * (lambda - 0.5) * (lambda - 0.5);
                DMatrix::from_row_slice(2, 2, &[d, 0.0, 0.0, d])
            })
            .with_plateau_tol(plateau_tol);
            Ok(CatalogEntry {
                id: id.into(),
                n: 1,
                lambda_range: (0.0, 1.0),
                params: params.clone(),
                family,
            })
        }
        "block_direct_sum" => {
            // two Pöschl–Teller wells side by side: kernels double up and the
            // integer invariants add
            let depth = get(params, "depth", 2.0);
            let lo = get(params, "lambda_lo", -2.0);
            let hi = get(params, "lambda_hi", -0.5);
            if depth <= 0.0 || lo >= 0.0 || hi >= 0.0 {
                return Err(Error::Schema(
                    "block_direct_sum requires depth > 0 and a negative spectral range".into(),
                ));
            }
            let a = poschl_teller_family(depth, lo, hi, plateau_tol);
            let b = poschl_teller_family(depth, lo, hi, plateau_tol);
            Ok(CatalogEntry {
                id: id.into(),
                n: 2,
                lambda_range: (lo, hi),
                params: params.clone(),
                family: a.direct_sum(&b),
            })
        }
        other => Err(Error::Schema(format!(
            "unknown catalog id '{other}' (known: {})",
            CATALOG_IDS.join(", ")
        ))),
    }
}
