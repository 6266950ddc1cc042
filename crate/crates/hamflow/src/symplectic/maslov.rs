//! Maslov indices of Lagrangian paths: signed counts of crossings with a
//! reference Lagrangian (or between two paths), each crossing weighted by the
//! signature of its crossing form.
//!
//! Crossings are located by scanning the smallest singular value of the
//! stacked frame [F₁ | F₂] over a λ-grid and shrinking each dip with a
//! golden-section search. Non-regular crossings are handled by the rotation
//! trick γ(λ) ↦ e^{δλJ}·γ(λ), scanning δ over a small grid until every
//! crossing form is non-degenerate; endpoint transversality survives for
//! small δ and homotopy invariance keeps the index unchanged.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::crossing::{restricted_graph_form, KERNEL_COS_TOL};
use super::grassmann::stacked_frame_detector;
use super::{intersection, rotation_exp, LagrangianPath, LagrangianSubspace, CROSSING_SINE_TOL};
use crate::error::{Error, Result};
use crate::qforms::QuadraticForm;

/// Tunables for crossing detection and form evaluation.
#[derive(Debug, Clone)]
pub struct MaslovConfig {
    /// Number of cells of the initial uniform λ-grid.
    pub grid_size: usize,
    /// Detector value below which a refined dip counts as a crossing.
    pub crossing_tol: f64,
    /// Required detector margin at λ = 0, 1 (endpoint transversality).
    pub endpoint_margin: f64,
    /// Bracket width at which dip refinement stops.
    pub refine_width: f64,
    /// Two crossings closer than this are merged with a cluster warning.
    pub cluster_merge_dist: f64,
    /// Rotation angles δ tried when a crossing form is degenerate.
    pub regularization_deltas: Vec<f64>,
    /// Absolute floor below which a crossing-form eigenvalue counts as zero.
    /// Paths evaluated through an integrator carry finite-difference noise
    /// and need a floor well above it.
    pub form_floor: f64,
}

impl Default for MaslovConfig {
    fn default() -> Self {
        MaslovConfig {
            grid_size: 200,
            crossing_tol: CROSSING_SINE_TOL,
            endpoint_margin: 1e-6,
            refine_width: 1e-9,
            cluster_merge_dist: 1e-7,
            regularization_deltas: vec![1e-4, -1e-4, 1e-3, -1e-3, 1e-2, -1e-2],
            form_floor: 1e-9,
        }
    }
}

/// Result of a detector sweep: dip locations plus cluster diagnostics.
#[derive(Debug, Clone)]
pub struct CrossingScan {
    pub locations: Vec<f64>,
    pub cluster_warning: bool,
}

/// Locates the zeros of a nonnegative dip detector on [0, 1].
///
/// Grid values are computed in parallel; every interior local minimum is
/// refined by golden-section search and kept if the refined detector value
/// falls below `crossing_tol`.
pub fn scan_detector_dips(
    detector: &(dyn Fn(f64) -> Result<f64> + Sync),
    cfg: &MaslovConfig,
) -> Result<CrossingScan> {
    let m = cfg.grid_size.max(8);
    let grid: Vec<f64> = (0..=m).map(|i| i as f64 / m as f64).collect();
    let values: Vec<f64> = grid
        .par_iter()
        .map(|&l| detector(l))
        .collect::<Result<Vec<_>>>()?;

    let mut brackets: Vec<(f64, f64)> = Vec::new();
    for i in 1..m {
        let is_min = values[i] <= values[i - 1] && values[i] <= values[i + 1];
        if is_min && values[i] <= 0.5 {
            brackets.push((grid[i - 1], grid[i + 1]));
        }
    }
    // a dip inside the first or last cell has no interior grid minimum
    if values[0] < values[1] {
        brackets.insert(0, (grid[0], grid[1]));
    }
    if values[m] < values[m - 1] {
        brackets.push((grid[m - 1], grid[m]));
    }

    let mut locations = Vec::new();
    for (lo, hi) in brackets {
        extract_dips(detector, lo, hi, cfg, 2, &mut locations)?;
    }
    locations.sort_by(|a, b| a.partial_cmp(b).unwrap());

    // duplicates from overlapping sub-brackets collapse silently; distinct
    // dips closer than the merge distance are an unresolved cluster
    let dup_radius = 10.0 * cfg.refine_width;
    let mut merged: Vec<f64> = Vec::new();
    let mut cluster_warning = false;
    for loc in locations {
        match merged.last() {
            Some(&prev) if (loc - prev).abs() < cfg.cluster_merge_dist => {
                if (loc - prev).abs() > dup_radius {
                    cluster_warning = true;
                }
                let last = merged.last_mut().unwrap();
                *last = 0.5 * (prev + loc);
            }
            _ => merged.push(loc),
        }
    }
    Ok(CrossingScan {
        locations: merged,
        cluster_warning,
    })
}

/// Refines one bracket and recursively searches both flanks so that several
/// dips inside a single grid cell (as produced by regularizing a tangency)
/// are all found.
fn extract_dips(
    f: &(dyn Fn(f64) -> Result<f64> + Sync),
    lo: f64,
    hi: f64,
    cfg: &MaslovConfig,
    depth: usize,
    out: &mut Vec<f64>,
) -> Result<()> {
    if hi - lo < 20.0 * cfg.refine_width {
        return Ok(());
    }
    let (loc, val) = golden_section_min(f, lo, hi, cfg.refine_width)?;
    if val >= cfg.crossing_tol {
        return Ok(());
    }
    out.push(loc);
    if depth > 0 {
        let margin = 50.0 * cfg.refine_width;
        extract_dips(f, lo, (loc - margin).max(lo), cfg, depth - 1, out)?;
        extract_dips(f, (loc + margin).min(hi), hi, cfg, depth - 1, out)?;
    }
    Ok(())
}

fn golden_section_min(
    f: &(dyn Fn(f64) -> Result<f64> + Sync),
    mut a: f64,
    mut b: f64,
    width: f64,
) -> Result<(f64, f64)> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while (b - a) > width {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    let mid = 0.5 * (a + b);
    Ok((mid, f(mid)?))
}

/// One resolved crossing of a Lagrangian path problem.
#[derive(Debug, Clone)]
pub struct PathCrossing {
    pub lambda0: f64,
    pub kernel_dim: usize,
    pub form: QuadraticForm,
    pub signature: i64,
    pub regular: bool,
}

/// How the relative crossing form is assembled at a crossing.
enum FormRule<'a> {
    /// Γ(γ, V, λ₀) against a fixed reference.
    Fixed(&'a LagrangianSubspace),
    /// Γ(γ₁, γ₂(λ₀), λ₀) − Γ(γ₂, γ₁(λ₀), λ₀) between two paths.
    Relative(&'a LagrangianPath),
}

fn crossings_with_forms(
    gamma: &LagrangianPath,
    rule: &FormRule<'_>,
    cfg: &MaslovConfig,
) -> Result<Vec<PathCrossing>> {
    let detector: Box<dyn Fn(f64) -> Result<f64> + Sync> = match rule {
        FormRule::Fixed(v) => {
            let v = (*v).clone();
            Box::new(move |l: f64| Ok(stacked_frame_detector(&gamma.at(l)?, &v)))
        }
        FormRule::Relative(g2) => {
            Box::new(move |l: f64| Ok(stacked_frame_detector(&gamma.at(l)?, &g2.at(l)?)))
        }
    };

    for (end, name) in [(0.0, "0"), (1.0, "1")] {
        let d = detector(end)?;
        if d < cfg.endpoint_margin {
            return Err(Error::InvalidInput(format!(
                "endpoint transversality violated at lambda = {name}: detector {d:.3e} \
                 below margin {:.3e}",
                cfg.endpoint_margin
            )));
        }
    }

    let scan = scan_detector_dips(detector.as_ref(), cfg)?;
    let mut out = Vec::new();
    for lambda0 in scan.locations {
        let base = gamma.at(lambda0)?;
        let (kernel, form) = match rule {
            FormRule::Fixed(v) => {
                let kernel = intersection(&base, v, KERNEL_COS_TOL)?;
                let form = restricted_graph_form(gamma, &base, lambda0, gamma.fd_step, &kernel)?;
                (kernel, form)
            }
            FormRule::Relative(g2) => {
                let other = g2.at(lambda0)?;
                let kernel = intersection(&base, &other, KERNEL_COS_TOL)?;
                let g1_part =
                    restricted_graph_form(gamma, &base, lambda0, gamma.fd_step, &kernel)?;
                let g2_part = restricted_graph_form(g2, &other, lambda0, g2.fd_step, &kernel)?;
                let diff = &g1_part.matrix - &g2_part.matrix;
                (
                    kernel,
                    QuadraticForm::new(diff, format!("gamma1 ∩ gamma2 at lambda0 = {lambda0}"))?,
                )
            }
        };
        if kernel.ncols() == 0 {
            // refined dip fell below tol but the intersection tolerance
            // disagrees; treat as a phantom dip
            continue;
        }
        let sig = form.signature(form.default_tol().max(cfg.form_floor))?;
        out.push(PathCrossing {
            lambda0,
            kernel_dim: kernel.ncols(),
            signature: sig.sgn(),
            regular: sig.m_zero == 0,
            form,
        });
    }
    Ok(out)
}

fn sum_if_regular(crossings: &[PathCrossing]) -> Option<i64> {
    if crossings.iter().all(|c| c.regular) {
        Some(crossings.iter().map(|c| c.signature).sum())
    } else {
        None
    }
}

/// γ_δ(λ) = e^{δλJ}·γ(λ).
fn rotated_path(path: &LagrangianPath, delta: f64) -> LagrangianPath {
    let inner = path.clone();
    LagrangianPath {
        fd_step: path.fd_step,
        ..LagrangianPath::new(move |lambda| {
            let base = inner.at(lambda)?;
            base.map_by(&rotation_exp(base.half_dim(), delta * lambda))
        })
    }
}

/// Maslov index μ(γ, V) of a path against a fixed Lagrangian.
///
/// Requires transversal endpoints. Non-regular crossings trigger the
/// δ-rotation regularization; if no δ in the configured grid yields only
/// regular crossings, a diagnostic error is returned.
pub fn maslov_index(
    gamma: &LagrangianPath,
    v: &LagrangianSubspace,
    cfg: &MaslovConfig,
) -> Result<i64> {
    let crossings = crossings_with_forms(gamma, &FormRule::Fixed(v), cfg)?;
    if let Some(total) = sum_if_regular(&crossings) {
        return Ok(total);
    }
    let mut diags = Vec::new();
    for &delta in &cfg.regularization_deltas {
        let gd = rotated_path(gamma, delta);
        match crossings_with_forms(&gd, &FormRule::Fixed(v), cfg) {
            Ok(crossings) => {
                if let Some(total) = sum_if_regular(&crossings) {
                    return Ok(total);
                }
                diags.push(format!("delta = {delta:+.1e}: crossing still degenerate"));
            }
            Err(e) => diags.push(format!("delta = {delta:+.1e}: {e}")),
        }
    }
    Err(Error::NonConvergence(format!(
        "non-regular crossing persisted for every regularization delta [{}]",
        diags.join("; ")
    )))
}

/// Relative Maslov index μ(γ₁, γ₂) via the relative crossing form
/// Γ(γ₁, γ₂(λ₀), λ₀) − Γ(γ₂, γ₁(λ₀), λ₀).
pub fn relative_maslov_index(
    gamma1: &LagrangianPath,
    gamma2: &LagrangianPath,
    cfg: &MaslovConfig,
) -> Result<i64> {
    relative_with_crossings(gamma1, gamma2, cfg).map(|(idx, _)| idx)
}

/// As `relative_maslov_index`, also exposing the resolved crossings.
pub fn relative_with_crossings(
    gamma1: &LagrangianPath,
    gamma2: &LagrangianPath,
    cfg: &MaslovConfig,
) -> Result<(i64, Vec<PathCrossing>)> {
    let crossings = crossings_with_forms(gamma1, &FormRule::Relative(gamma2), cfg)?;
    if let Some(total) = sum_if_regular(&crossings) {
        return Ok((total, crossings));
    }
    let mut diags = Vec::new();
    for &delta in &cfg.regularization_deltas {
        let g1d = rotated_path(gamma1, delta);
        match crossings_with_forms(&g1d, &FormRule::Relative(gamma2), cfg) {
            Ok(crossings) => {
                if let Some(total) = sum_if_regular(&crossings) {
                    return Ok((total, crossings));
                }
                diags.push(format!("delta = {delta:+.1e}: crossing still degenerate"));
            }
            Err(e) => diags.push(format!("delta = {delta:+.1e}: {e}")),
        }
    }
    Err(Error::NonConvergence(format!(
        "non-regular relative crossing persisted for every regularization delta [{}]",
        diags.join("; ")
    )))
}

/// Orthonormal frame of the diagonal Δ ⊂ R^{2n} × R^{2n} inside the product
/// symplectic space (R^{4n}, J×(−J)) mapped to standard coordinates.
///
/// The isometry ((q, p), (q', p')) ↦ ((q, q'), (p, −p')) identifies
/// (R^{4n}, J×(−J)) with the standard (R^{4n}, ω); both the product frames
/// and the diagonal are pushed through it.
pub fn product_diagonal(n: usize) -> LagrangianSubspace {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut f = DMatrix::zeros(4 * n, 2 * n);
    for i in 0..n {
        // image of (e_i, e_i)/sqrt(2), a q-direction pair
        f[(i, i)] = s;
        f[(n + i, i)] = s;
        // image of (e_{n+i}, e_{n+i})/sqrt(2), a p-direction pair
        f[(2 * n + i, n + i)] = s;
        f[(3 * n + i, n + i)] = -s;
    }
    LagrangianSubspace::from_frame(f).expect("diagonal frame is Lagrangian by construction")
}

/// The path λ ↦ T(γ₁(λ) × γ₂(λ)) in standard coordinates on R^{4n}.
pub fn product_path(gamma1: &LagrangianPath, gamma2: &LagrangianPath) -> LagrangianPath {
    let g1 = gamma1.clone();
    let g2 = gamma2.clone();
    let fd = gamma1.fd_step.min(gamma2.fd_step);
    LagrangianPath {
        fd_step: fd,
        ..LagrangianPath::new(move |lambda| {
            let v1 = g1.at(lambda)?;
            let v2 = g2.at(lambda)?;
            let n = v1.half_dim();
            if v2.half_dim() != n {
                return Err(Error::InvalidInput(
                    "product path requires equal half-dimensions".into(),
                ));
            }
            let f1 = v1.frame();
            let f2 = v2.frame();
            let mut f = DMatrix::zeros(4 * n, 2 * n);
            for c in 0..n {
                for r in 0..n {
                    // (q, p) of gamma1 lands in rows [0, n) and [2n, 3n)
                    f[(r, c)] = f1[(r, c)];
                    f[(2 * n + r, c)] = f1[(n + r, c)];
                    // (q', p') of gamma2 lands in rows [n, 2n) and [3n, 4n), p' negated
                    f[(n + r, n + c)] = f2[(r, c)];
                    f[(3 * n + r, n + c)] = -f2[(n + r, c)];
                }
            }
            LagrangianSubspace::from_frame(f)
        })
    }
}

/// Relative Maslov index computed through the product construction
/// μ(γ₁ × γ₂, Δ); should agree with the direct relative route.
pub fn relative_maslov_index_via_product(
    gamma1: &LagrangianPath,
    gamma2: &LagrangianPath,
    cfg: &MaslovConfig,
) -> Result<i64> {
    let n = gamma1.at(0.0)?.half_dim();
    let path = product_path(gamma1, gamma2);
    let diag = product_diagonal(n);
    maslov_index(&path, &diag, cfg)
}

/// Both routes at once; errors if they disagree.
pub fn relative_maslov_index_cross_validated(
    gamma1: &LagrangianPath,
    gamma2: &LagrangianPath,
    cfg: &MaslovConfig,
) -> Result<i64> {
    let direct = relative_maslov_index(gamma1, gamma2, cfg)?;
    let product = relative_maslov_index_via_product(gamma1, gamma2, cfg)?;
    if direct != product {
        return Err(Error::NonConvergence(format!(
            "relative Maslov routes disagree: direct {direct} vs product {product}"
        )));
    }
    Ok(direct)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symplectic::standard_j;
    use nalgebra::DMatrix;
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

    fn quarter_turn() -> LagrangianPath {
        // theta from -pi/4 to +pi/4: single positive crossing of span{e1} at 1/2
        line_path(|l| l * std::f64::consts::FRAC_PI_2 - std::f64::consts::FRAC_PI_4)
    }

    #[test]
    fn quarter_turn_has_index_one() {
        let cfg = MaslovConfig::default();
        assert_eq!(maslov_index(&quarter_turn(), &e1_line(), &cfg).unwrap(), 1);
    }

    #[test]
    fn constant_transversal_path_has_index_zero() {
        let cfg = MaslovConfig::default();
        let gamma = line_path(|_| 0.4);
        assert_eq!(maslov_index(&gamma, &e1_line(), &cfg).unwrap(), 0);
    }

    #[test]
    fn path_and_reverse_concatenation_cancels() {
        // theta(l) = theta(1 - l): a path concatenated with its own reverse,
        // smooth at the junction; it crosses span{e1} upward and then back.
        let cfg = MaslovConfig::default();
        let gamma = line_path(|l| {
            -std::f64::consts::FRAC_PI_4
                + 0.375 * std::f64::consts::PI * (std::f64::consts::PI * l).sin().powi(2)
        });
        assert_eq!(maslov_index(&gamma, &e1_line(), &cfg).unwrap(), 0);
    }

    #[test]
    fn reversal_flips_sign() {
        let cfg = MaslovConfig::default();
        let gamma = quarter_turn();
        let rev = gamma.reversed();
        assert_eq!(maslov_index(&gamma, &e1_line(), &cfg).unwrap(), 1);
        assert_eq!(maslov_index(&rev, &e1_line(), &cfg).unwrap(), -1);
    }

    #[test]
    fn endpoint_crossing_is_rejected() {
        let cfg = MaslovConfig::default();
        // path starting on the reference line
        let gamma = line_path(|l| l);
        assert!(maslov_index(&gamma, &e1_line(), &cfg).is_err());
    }

    #[test]
    fn relative_index_with_constant_second_path() {
        let cfg = MaslovConfig::default();
        let g1 = quarter_turn();
        let g2 = LagrangianPath::constant(e1_line());
        assert_eq!(relative_maslov_index(&g1, &g2, &cfg).unwrap(), 1);
    }

    #[test]
    fn product_route_agrees_with_direct() {
        let cfg = MaslovConfig::default();
        let g1 = quarter_turn();
        let g2 = LagrangianPath::constant(e1_line());
        assert_eq!(
            relative_maslov_index_cross_validated(&g1, &g2, &cfg).unwrap(),
            1
        );
        // both paths moving
        let g2 = line_path(|l| 1.2 - 0.3 * l);
        let d = relative_maslov_index(&g1, &g2, &cfg).unwrap();
        let p = relative_maslov_index_via_product(&g1, &g2, &cfg).unwrap();
        assert_eq!(d, p);
    }

    #[test]
    fn naturality_under_fixed_symplectic_conjugation() {
        let cfg = MaslovConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let g1 = quarter_turn();
        let g2 = line_path(|l| 1.2 - 0.3 * l);
        let base = relative_maslov_index(&g1, &g2, &cfg).unwrap();
        for _ in 0..5 {
            // random symplectic via Cayley of a Hamiltonian matrix
            let a_raw = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-0.8..0.8));
            let a = (&a_raw + a_raw.transpose()) * 0.5;
            let j = standard_j(1);
            let ham = &j * a;
            let id = DMatrix::identity(2, 2);
            let m = (&id - &ham * 0.5).try_inverse().unwrap() * (&id + &ham * 0.5);
            let m1 = m.clone();
            let m2 = m.clone();
            let g1m = g1.mapped(move |_| m1.clone());
            let g2m = g2.mapped(move |_| m2.clone());
            assert_eq!(relative_maslov_index(&g1m, &g2m, &cfg).unwrap(), base);
        }
    }

    #[test]
    fn homotopy_invariance_endpointwise_transversal() {
        let cfg = MaslovConfig::default();
        for &tau in &[0.0, 0.5, 1.0] {
            // deformation vanishing at both endpoints keeps transversality
            let gamma = line_path(move |l| {
                l * std::f64::consts::FRAC_PI_2 - std::f64::consts::FRAC_PI_4
                    + 0.2 * tau * (std::f64::consts::PI * l).sin()
            });
            assert_eq!(maslov_index(&gamma, &e1_line(), &cfg).unwrap(), 1);
        }
    }

    #[test]
    fn degenerate_tangency_is_regularized() {
        let cfg = MaslovConfig::default();
        // theta(l) = c (l - 1/2)^3: cubic tangency at the crossing, zero
        // derivative, so the unregularized form is degenerate.
        let gamma = line_path(|l| 0.5 * (l - 0.5).powi(3));
        let idx = maslov_index(&gamma, &e1_line(), &cfg).unwrap();
        assert_eq!(idx, 1);
    }
}
