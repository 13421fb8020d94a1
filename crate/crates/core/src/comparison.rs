//! Numerical comparison checks on the model spaces: volume growth, the
//! distance Laplacian, isoperimetry, the integrated Bochner inequality,
//! logarithmic cut-offs, measure contraction and a.e. convexity.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone::{cone_distance, flat_cone_ball_area, flat_cone_interpolate, unfold_flat_cone, ConePoint};
use crate::error::{Error, Result};
use crate::fermi::{round_components, FermiPoint, FermiSphere};
use crate::graph::DiscreteApproximation;
use crate::link::{LinkPoint, LinkSpace};
use crate::measure::{
    ball_volumes_mc, mc_moments, minkowski_content, model_ball_volume, model_ball_volume_clamped, sample_points, Region,
};
use crate::model::{ModelPoint, StratifiedModel};
use crate::numeric::{cot_k, integrate, linear_fit, sphere_volume};
use crate::report::CheckReport;
use crate::spectral::SpectralData;

/// Combined standard errors allowed before a Bishop-Gromov pair counts as a violation.
pub const BISHOP_GROMOV_TOL: f64 = 3.0;
/// Multiple of the local discretization error allowed by the Laplacian and Bochner checks.
pub const DISCRETIZATION_TOL: f64 = 5.0;
/// Relative slack on the fitted measure-contraction constant.
pub const MCP_BAND: f64 = 0.25;
/// Smallest admissible ε-slope of the Σ^ε hit fraction.
pub const MIN_HIT_SLOPE: f64 = 1.8;

fn check_ladder(values: &[f64], what: &str) -> Result<()> {
    if values.len() < 2 {
        return Err(Error::argument(format!("{what} needs at least two values")));
    }
    if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::argument(format!("{what} must be positive and finite")));
    }
    Ok(())
}

/// Pairwise monotonicity of `r ↦ vol B(x, r)/v_k(r)` with `k = K/(n−1)`.
///
/// `margin = min_{i<j} (ρ_i − ρ_j)/(se_i + se_j)`, so a negative margin is
/// an increase measured in combined standard errors.
pub fn bishop_gromov_check(
    model: &StratifiedModel,
    x: &ModelPoint,
    radii: &[f64],
    k_curv: f64,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<CheckReport> {
    check_ladder(radii, "radius ladder")?;
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::argument("radius ladder must be strictly increasing"));
    }
    if n < 2 {
        return Err(Error::argument("Bishop-Gromov needs dimension n ≥ 2"));
    }
    let k = k_curv / (n as f64 - 1.0);
    let est = ball_volumes_mc(model, x, radii, samples, seed)?;
    let reference: Vec<(f64, bool)> = radii.iter().map(|&r| model_ball_volume_clamped(n, k, r)).collect();
    let ratios: Vec<f64> = est.iter().zip(&reference).map(|(e, (v, _))| e.value / v).collect();
    let errs: Vec<f64> = est.iter().zip(&reference).map(|(e, (v, _))| e.stderr / v).collect();
    let floor = 1e-12 * ratios.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(1e-300);
    let z = |i: usize, j: usize| (ratios[i] - ratios[j]) / (errs[i] + errs[j]).max(floor);
    let mut margin = f64::INFINITY;
    let mut worst = (0, 1);
    for i in 0..radii.len() {
        for j in i + 1..radii.len() {
            if z(i, j) < margin {
                margin = z(i, j);
                worst = (i, j);
            }
        }
    }
    let last = radii.len() - 1;
    let mut report = CheckReport::new("bishop_gromov", margin, BISHOP_GROMOV_TOL, samples, Some(seed))
        .with("radii", radii)
        .with("curvature_scale", k)
        .with("ratios", &ratios)
        .with("ratio_stderr", &errs)
        .with("model_clamped", reference.iter().map(|r| r.1).collect::<Vec<_>>())
        .with("worst_pair", [radii[worst.0], radii[worst.1]])
        .with("end_to_end_z", z(0, last));
    if let (StratifiedModel::EuclideanCone { link: LinkSpace::Circle { radius }, truncation_radius }, ModelPoint::Cone(p)) =
        (model, x)
    {
        let alpha = TAU * radius;
        let exact: Vec<Option<f64>> = radii
            .iter()
            .zip(&reference)
            .map(|(&r, (v, _))| (p.r + r <= *truncation_radius).then(|| flat_cone_ball_area(alpha, p.r, r) / v))
            .collect();
        report = report.with("exact_ratios", exact);
    }
    Ok(report)
}

/// Node masks, in units of the bandwidth ε, for the Laplacian comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplacianMasks {
    /// Exclude `d(x, ·) < center·ε`.
    pub center: f64,
    /// Exclude nodes within `singular·ε` of Σ.
    pub singular: f64,
    /// Exclude nodes within `boundary·ε` of a cone truncation.
    pub boundary: f64,
    /// Exclude `d(x, ·) ≥ max d − cut·ε` (far side of the cut locus).
    pub cut: f64,
    /// Exclude nodes with discrete `|∇d| < 1 − gradient·ε`.
    pub gradient: f64,
}

impl Default for LaplacianMasks {
    fn default() -> Self {
        LaplacianMasks { center: 4.0, singular: 2.0, boundary: 4.0, cut: 5.0, gradient: 10.0 }
    }
}

/// `Δ d_x ≤ (n−1) cot_k(d_x)` at the unmasked nodes of `approx`.
///
/// The local error at a node is the kernel-average standard error of `L d`
/// plus the change of `L d` when the bandwidth shrinks by `√2`.
pub fn laplacian_comparison_check(
    model: &StratifiedModel,
    x: &ModelPoint,
    k: f64,
    n: usize,
    approx: &DiscreteApproximation,
    masks: &LaplacianMasks,
) -> Result<CheckReport> {
    if matches!(model, StratifiedModel::FermiSphere(_)) {
        return Err(Error::unsupported(
            "distance functions on the Fermi sphere are only available by shooting, too coarse for second differences",
        ));
    }
    if approx.model_id != model.model_hash() {
        return Err(Error::argument("discrete approximation was built on a different model"));
    }
    model.validate_point(x)?;
    let eps = approx.eps;
    let d: Vec<f64> = approx
        .points
        .par_iter()
        .map(|p| model.distance_unchecked(x, p))
        .collect::<Result<_>>()?;
    let lap: Vec<f64> = approx.laplacian(&d).into_iter().map(|v| -v).collect();
    let lap_fine: Vec<f64> = approx.rescaled(eps / 2f64.sqrt())?.laplacian(&d).into_iter().map(|v| -v).collect();
    let sampling = approx.laplacian_stderr(&d);
    let grad = approx.carre_du_champ(&d, &d);
    let reach = d.iter().fold(0.0f64, |a, &b| a.max(b));
    let truncation = match model {
        StratifiedModel::EuclideanCone { truncation_radius, .. } => Some(*truncation_radius),
        _ => None,
    };

    let mut counts = [0usize; 5];
    let mut margin = f64::INFINITY;
    let mut equality = 0.0f64;
    let mut abs_dev = 0.0f64;
    let mut err_sum = 0.0;
    let mut used = 0usize;
    for i in 0..approx.len() {
        let p = &approx.points[i];
        let masked = [
            d[i] < masks.center * eps,
            model.singular_distance(p).is_some_and(|s| s < masks.singular * eps),
            matches!((truncation, p), (Some(r), ModelPoint::Cone(c)) if c.r > r - masks.boundary * eps),
            d[i] >= reach - masks.cut * eps,
            grad[i].max(0.0).sqrt() < 1.0 - masks.gradient * eps,
        ];
        if let Some(which) = masked.iter().position(|&m| m) {
            counts[which] += 1;
            continue;
        }
        used += 1;
        let bound = (n as f64 - 1.0) * cot_k(k, d[i]);
        let err = (sampling[i] + (lap[i] - lap_fine[i]).abs()).max(1e-12);
        let z = (bound - lap[i]) / err;
        margin = margin.min(z);
        equality = equality.max(z.abs());
        abs_dev = abs_dev.max((lap[i] - bound).abs());
        err_sum += err;
    }
    if used == 0 {
        return Err(Error::Resolution("every node is masked; refine the approximation".into()));
    }
    Ok(CheckReport::new("laplacian_comparison", margin, DISCRETIZATION_TOL, approx.len(), None)
        .with("eps", eps)
        .with("unmasked_nodes", used)
        .with("masked_center", counts[0])
        .with("masked_singular", counts[1])
        .with("masked_boundary", counts[2])
        .with("masked_cut_locus", counts[3])
        .with("masked_gradient", counts[4])
        .with("masks", masks)
        .with("equality_z", equality)
        .with("max_abs_deviation", abs_dev)
        .with("mean_error", err_sum / used as f64))
}

/// Isoperimetric profile of the normalized round `Sⁿ`: boundary measure of
/// the cap of normalized volume `beta`, and the cap radius.
pub fn spherical_isoperimetric_profile(n: usize, beta: f64) -> (f64, f64) {
    if !(beta > 0.0 && beta < 1.0) {
        return (0.0, if beta >= 1.0 { PI } else { 0.0 });
    }
    let total = sphere_volume(n);
    let (mut lo, mut hi) = (0.0, PI);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if model_ball_volume(n, 1.0, mid) / total < beta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let r = 0.5 * (lo + hi);
    (sphere_volume(n - 1) * r.sin().powi(n as i32 - 1) / total, r)
}

/// `m⁺(E) ≥ I_n(m(E))` for the normalized measure on a model with `K_reg = n − 1`.
pub fn levy_gromov_check(
    model: &StratifiedModel,
    region: &Region,
    ladder: &[f64],
    samples: usize,
    seed: u64,
) -> Result<CheckReport> {
    let n = model.dim();
    match model.regular_ricci_bound() {
        Some(k) if (k - (n as f64 - 1.0)).abs() < 1e-12 => {}
        other => {
            return Err(Error::Precondition(format!(
                "isoperimetric comparison needs Ric = n − 1 = {} on the regular set, model has {other:?}",
                n - 1
            )))
        }
    }
    let est = minkowski_content(model, region, ladder, samples, seed)?;
    let (bound, r) = spherical_isoperimetric_profile(n, est.measure);
    let bound_se = if r > 0.0 && r < PI { ((n as f64 - 1.0) * r.cos() / r.sin()).abs() * est.measure_stderr } else { 0.0 };
    let tol = 3.0 * est.stderr.hypot(bound_se);
    let relative = if bound > 0.0 { (est.content - bound) / bound } else { f64::NAN };
    Ok(CheckReport::new("levy_gromov", est.content - bound, tol, samples, Some(seed))
        .with("content", est.content)
        .with("content_stderr", est.stderr)
        .with("bound", bound)
        .with("measure", est.measure)
        .with("measure_stderr", est.measure_stderr)
        .with("relative_gap", relative)
        .with("forward", &est.forward)
        .with("extrapolated", &est.extrapolated))
}

/// Logarithmic cut-off `ρ_ε(d)`: 0 for `d ≤ ε²`, 1 for `d ≥ ε`.
pub fn cutoff_profile(eps: f64, d: f64) -> f64 {
    if d <= eps * eps {
        0.0
    } else if d >= eps {
        1.0
    } else {
        (d / (eps * eps)).ln() / (1.0 / eps).ln()
    }
}

/// Cut-off function values and norms at one ε.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutoffFamily {
    pub eps: f64,
    /// `‖∇ρ_ε‖²_{L²}` from the radial finite-volume scheme.
    pub grad_sq: f64,
    /// `‖Δρ_ε‖_{L¹}` from the same scheme (flux jumps).
    pub laplacian_l1: f64,
    /// Closed form `α/log(1/ε)` on flat cones.
    pub analytic_grad_sq: Option<f64>,
    /// `ρ_ε` at the nodes of the supplied approximation.
    pub node_values: Vec<f64>,
    /// `∫ Γ(ρ_ε)` on the supplied graph; the kernel cannot resolve the ε² scale,
    /// so this is a diagnostic only.
    pub graph_grad_sq: Option<f64>,
    pub cells: usize,
}

const CUTOFF_CELLS: usize = 512;

/// Cut-off norms for the distance to Σ, computed by finite volumes in the
/// radial variable `s = d(·, Σ)` with exact level-set areas.
pub fn cutoff_family(model: &StratifiedModel, eps: f64, approx: Option<&DiscreteApproximation>) -> Result<CutoffFamily> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::argument(format!("cut-off scale ε = {eps} must lie in (0, 1)")));
    }
    if let Some(a) = approx {
        if a.model_id != model.model_hash() {
            return Err(Error::argument("discrete approximation was built on a different model"));
        }
    }
    let node_values: Vec<f64> = approx
        .map(|a| a.points.iter().map(|p| model.singular_distance(p).map_or(1.0, |s| cutoff_profile(eps, s))).collect())
        .unwrap_or_default();
    let graph_grad_sq = approx.map(|a| a.integral(&a.carre_du_champ(&node_values, &node_values)));

    if !model.has_singular_set() {
        return Ok(CutoffFamily {
            eps,
            grad_sq: 0.0,
            laplacian_l1: 0.0,
            analytic_grad_sq: Some(0.0),
            node_values,
            graph_grad_sq,
            cells: 0,
        });
    }
    // (level-set area, injectivity scale, cone angle when flat)
    let (area, injectivity, flat): (Box<dyn Fn(f64) -> f64 + Sync>, f64, Option<f64>) = match model {
        StratifiedModel::EuclideanCone { link: LinkSpace::Circle { radius }, truncation_radius } => {
            let alpha = TAU * radius;
            (Box::new(move |s| alpha * s), *truncation_radius, Some(alpha))
        }
        StratifiedModel::Suspension { link: LinkSpace::Circle { radius } } => {
            let alpha = TAU * radius;
            (Box::new(move |s: f64| 2.0 * alpha * s.sin()), PI / 2.0, None)
        }
        StratifiedModel::FermiSphere(f) => {
            let f = f.clone();
            let beta = f.beta;
            (
                Box::new(move |s| {
                    TAU * integrate(
                        |phi| {
                            let (gpp, gtt) = f.blended_components(s, phi);
                            (gpp * gtt).sqrt()
                        },
                        0.0,
                        TAU,
                        1e-10,
                    )
                }),
                beta,
                None,
            )
        }
        _ => {
            return Err(Error::unsupported(
                "cut-off norms need a codimension-two singular set (circle links or the Fermi sphere)",
            ))
        }
    };
    if eps >= injectivity {
        return Err(Error::argument(format!(
            "cut-off scale ε = {eps} must be below the injectivity scale {injectivity}"
        )));
    }
    let log_inv = (1.0 / eps).ln();
    let m = CUTOFF_CELLS;
    // nodes s_j = ε^{2 − j/m}, uniform in log s
    let nodes: Vec<f64> = (0..=m).map(|j| eps.powf(2.0 - j as f64 / m as f64)).collect();
    let rho: Vec<f64> = nodes.iter().map(|&s| cutoff_profile(eps, s)).collect();
    let mut grad_sq = 0.0;
    let mut flux = vec![0.0; m + 2];
    for j in 0..m {
        let (a, b) = (nodes[j], nodes[j + 1]);
        let slope = (rho[j + 1] - rho[j]) / (b - a);
        let face = area((a * b).sqrt());
        grad_sq += face * slope * slope * (b - a);
        flux[j + 1] = face * slope;
    }
    let laplacian_l1: f64 = flux.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    Ok(CutoffFamily {
        eps,
        grad_sq,
        laplacian_l1,
        analytic_grad_sq: flat.map(|alpha| alpha / log_inv),
        node_values,
        graph_grad_sq,
        cells: m,
    })
}

/// `ψ = max(0, 1 + amplitude·v/‖v‖_∞)` for the computed eigenvector `index`.
pub fn clipped_test_function(spectral: &SpectralData, index: usize, amplitude: f64) -> Result<Vec<f64>> {
    let v = spectral
        .eigenvectors
        .get(index)
        .ok_or_else(|| Error::argument(format!("eigenvector {index} was not computed")))?;
    let sup = v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if sup == 0.0 {
        return Ok(vec![1.0; v.len()]);
    }
    Ok(v.iter().map(|x| (1.0 + amplitude * x / sup).max(0.0)).collect())
}

/// Both sides of the integrated Bochner inequality on one graph.
fn bochner_sides(approx: &DiscreteApproximation, u: &[f64], psi: &[f64], k: f64, n: f64) -> (f64, f64) {
    let lu = approx.laplacian(u);
    let lpsi = approx.laplacian(psi);
    let gu = approx.carre_du_champ(u, u);
    let glu = approx.carre_du_champ(&lu, u);
    // this inequality is stated for the nonnegative Laplacian, which is L itself
    let lhs_terms: Vec<f64> = (0..u.len()).map(|i| psi[i] * glu[i] - 0.5 * lpsi[i] * gu[i]).collect();
    let rhs_terms: Vec<f64> = (0..u.len()).map(|i| psi[i] * (k * gu[i] + lu[i] * lu[i] / n)).collect();
    (approx.integral(&lhs_terms), approx.integral(&rhs_terms))
}

/// Integrated Bochner inequality for `u = Σ c_i v_i` against `ψ ≥ 0`.
///
/// The error estimate is the change of the margin when the bandwidth of the
/// same cloud shrinks by `√2`.
pub fn bochner_check(
    approx: &DiscreteApproximation,
    spectral: &SpectralData,
    coefficients: &[f64],
    psi: &[f64],
    k: f64,
    n: f64,
) -> Result<CheckReport> {
    if spectral.nodes != approx.len() || psi.len() != approx.len() {
        return Err(Error::argument("spectral data, test function and approximation sizes differ"));
    }
    if coefficients.is_empty() || coefficients.len() > spectral.count() {
        return Err(Error::argument(format!(
            "{} coefficients given for {} computed eigenvectors",
            coefficients.len(),
            spectral.count()
        )));
    }
    if !(n > 0.0) {
        return Err(Error::argument("dimension bound N must be positive"));
    }
    if let Some(i) = psi.iter().position(|v| !(*v >= 0.0)) {
        return Err(Error::Precondition(format!("test function is negative at node {i}")));
    }
    let mut u = vec![0.0; approx.len()];
    for (c, v) in coefficients.iter().zip(&spectral.eigenvectors) {
        u.iter_mut().zip(v).for_each(|(a, b)| *a += c * b);
    }
    let (lhs, rhs) = bochner_sides(approx, &u, psi, k, n);
    let fine = approx.rescaled(approx.eps / 2f64.sqrt())?;
    let (lhs_h, rhs_h) = bochner_sides(&fine, &u, psi, k, n);
    let margin = lhs - rhs;
    let error = (margin - (lhs_h - rhs_h)).abs();
    let tol = DISCRETIZATION_TOL * error + 1e-9 * (lhs.abs() + rhs.abs());
    Ok(CheckReport::new("bochner", margin, tol, approx.len(), None)
        .with("lhs", lhs)
        .with("rhs", rhs)
        .with("margin_fine", lhs_h - rhs_h)
        .with("error_estimate", error)
        .with("eps", approx.eps)
        .with("K", k)
        .with("N", n))
}

/// Nearest-neighbour distances within a cone point set sorted by radius.
fn nearest_neighbour(points: &[ConePoint], link: &LinkSpace) -> Vec<f64> {
    (0..points.len())
        .into_par_iter()
        .map(|i| {
            let mut best = f64::INFINITY;
            for j in (0..i).rev() {
                if points[i].r - points[j].r >= best {
                    break;
                }
                best = best.min(cone_distance(&points[i], &points[j], link));
            }
            for j in i + 1..points.len() {
                if points[j].r - points[i].r >= best {
                    break;
                }
                best = best.min(cone_distance(&points[i], &points[j], link));
            }
            best
        })
        .collect()
}

/// Gaussian kernel density of `points` (sorted by radius) at `at`.
fn kernel_density(points: &[ConePoint], link: &LinkSpace, at: &[ConePoint], h: f64) -> Vec<f64> {
    let reach = 4.0 * h;
    let norm = 1.0 / (TAU * h * h * points.len() as f64);
    at.par_iter()
        .map(|z| {
            let start = points.partition_point(|p| p.r < z.r - reach);
            let mut sum = 0.0;
            for p in &points[start..] {
                if p.r > z.r + reach {
                    break;
                }
                let d = cone_distance(z, p, link);
                if d < reach {
                    sum += (-0.5 * (d / h).powi(2)).exp();
                }
            }
            sum * norm
        })
        .collect()
}

const MCP_EVALUATION_POINTS: usize = 2000;

/// Measure contraction toward `x0` on the truncated flat cone of angle `alpha`.
///
/// Uniform samples are moved to fraction `t` along minimizing geodesics from
/// `x0`; the sup of a kernel density estimate times `t²·vol` is compared with
/// its value at `t = 1`. The constant is fitted, not derived.
pub fn mcp_density_check(
    alpha: f64,
    truncation_radius: f64,
    x0: &ConePoint,
    t_grid: &[f64],
    n: usize,
    seed: u64,
) -> Result<CheckReport> {
    if t_grid.is_empty() {
        return Err(Error::argument("t grid is empty"));
    }
    if let Some(t) = t_grid.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(Error::argument(format!("t = {t} outside (0, 1]; t = 0 is the Dirac limit")));
    }
    if n < 2 {
        return Err(Error::argument("density estimation needs at least two samples"));
    }
    let model = StratifiedModel::flat_cone(alpha, truncation_radius)?;
    model.validate_point(&ModelPoint::Cone(x0.clone()))?;
    let link = LinkSpace::Circle { radius: alpha / TAU };
    let cloud = sample_points(&model, n, seed)?;
    let source: Vec<ConePoint> = cloud
        .points
        .into_iter()
        .map(|p| match p {
            ModelPoint::Cone(c) => c,
            _ => unreachable!("cone models sample cone points"),
        })
        .collect();
    let volume = 0.5 * alpha * truncation_radius * truncation_radius;

    let scaled_sup = |t: f64| -> Result<(f64, f64, f64)> {
        let mut pushed: Vec<ConePoint> =
            source.par_iter().map(|y| flat_cone_interpolate(alpha, x0, y, t)).collect::<Result<_>>()?;
        // evaluation points are the first pushes, fixed before sorting
        let at: Vec<ConePoint> = pushed.iter().take(MCP_EVALUATION_POINTS).cloned().collect();
        pushed.sort_by(|a, b| a.r.total_cmp(&b.r));
        let nn = nearest_neighbour(&pushed, &link);
        let h = (2.0 * nn.iter().sum::<f64>() / nn.len() as f64).max(1e-12);
        let sup = kernel_density(&pushed, &link, &at, h).into_iter().fold(0.0f64, f64::max);
        Ok((sup, sup * t * t * volume, h))
    };
    let (_, c_fit, _) = scaled_sup(1.0)?;
    let mut rows = Vec::new();
    let mut margin = f64::INFINITY;
    for &t in t_grid {
        let (sup, scaled, h) = scaled_sup(t)?;
        margin = margin.min(1.0 + MCP_BAND - scaled / c_fit);
        rows.push((t, sup, scaled / c_fit, h));
    }
    Ok(CheckReport::new("mcp_density", margin, 0.0, n, Some(seed))
        .with("fitted_constant", c_fit)
        .with("constant_source", "fitted at t = 1")
        .with("band", MCP_BAND)
        .with("rows_t_sup_ratio_bandwidth", rows))
}

/// Closest approach to the poles of the minimizing geodesic between two
/// points of the suspension over a circle of radius `a`, or `None` when the
/// geodesic runs through a pole.
fn suspension_pole_approach(a: f64, p: &LinkPoint, q: &LinkPoint) -> Option<f64> {
    let (LinkPoint::Suspension { t: t1, base: b1 }, LinkPoint::Suspension { t: t2, base: b2 }) = (p, q) else {
        unreachable!("suspension points");
    };
    let (LinkPoint::Circle(u1), LinkPoint::Circle(u2)) = (b1.as_ref(), b2.as_ref()) else {
        unreachable!("circle bases");
    };
    let raw = (u1 - u2).abs().rem_euclid(TAU);
    let gap = a * raw.min(TAU - raw);
    if gap >= PI {
        return None;
    }
    // develop onto the round sphere: longitudes 0 and gap
    let pp = [t1.sin(), 0.0, t1.cos()];
    let qq = [t2.sin() * gap.cos(), t2.sin() * gap.sin(), t2.cos()];
    let endpoints = t1.min(*t2).min(PI - t1).min(PI - t2);
    let c = [pp[1] * qq[2] - pp[2] * qq[1], pp[2] * qq[0] - pp[0] * qq[2], pp[0] * qq[1] - pp[1] * qq[0]];
    let cn = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
    if cn < 1e-14 {
        return Some(endpoints);
    }
    let nrm = c.map(|v| v / cn);
    let mut best = endpoints;
    for sign in [1.0, -1.0] {
        // foot of the pole (0, 0, sign) on the great circle
        let foot = [-sign * nrm[2] * nrm[0], -sign * nrm[2] * nrm[1], sign * (1.0 - nrm[2] * nrm[2])];
        let fl = (foot[0] * foot[0] + foot[1] * foot[1] + foot[2] * foot[2]).sqrt();
        if fl < 1e-14 {
            continue;
        }
        let f = foot.map(|v| v / fl);
        let side = |a: &[f64; 3], b: &[f64; 3]| {
            (a[1] * b[2] - a[2] * b[1]) * nrm[0] + (a[2] * b[0] - a[0] * b[2]) * nrm[1] + (a[0] * b[1] - a[1] * b[0]) * nrm[2]
        };
        if side(&pp, &f) >= 0.0 && side(&f, &qq) >= 0.0 {
            best = best.min(nrm[2].abs().min(1.0).asin());
        }
    }
    Some(best)
}

/// Endpoint proposal for the Fermi sphere: half uniform on the round sphere,
/// half log-uniform in distance to the circle.
struct FermiPairSampler<'a> {
    sphere: &'a FermiSphere,
    volume: f64,
    r_min: f64,
    r_max: f64,
}

impl FermiPairSampler<'_> {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (FermiPoint, f64) {
        let f = self.sphere;
        let (r, theta, phi, x) = if rng.random::<bool>() {
            loop {
                let v: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
                let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                if norm < 1e-12 {
                    continue;
                }
                let x = v.map(|a| a / norm);
                let (r, theta, phi) = f.chart(&x);
                if r > 0.0 {
                    break (r, theta, phi, x);
                }
            }
        } else {
            let r = self.r_min * (self.r_max / self.r_min).powf(rng.random::<f64>());
            let (theta, phi) = (TAU * rng.random::<f64>(), TAU * rng.random::<f64>());
            (r, theta, phi, f.embed(r, theta, phi))
        };
        let (gpp, gtt) = round_components(f.beta, r, phi);
        let uniform = (gpp * gtt).sqrt() / sphere_volume(3);
        let tube = if r >= self.r_min && r <= self.r_max {
            1.0 / (r * (self.r_max / self.r_min).ln() * TAU * TAU)
        } else {
            0.0
        };
        let (bpp, btt) = f.blended_components(r, phi);
        let target = (bpp * btt).sqrt() / self.volume;
        (FermiPoint { x, r, theta, phi }, target / (0.5 * uniform + 0.5 * tube))
    }
}

/// Probability of resolving an ambiguous Fermi pair by geodesic shooting.
const FERMI_RESOLVE_PROBABILITY: f64 = 0.15;

/// Fraction of random pairs whose minimizing geodesic meets `Σ^ε`, along the
/// ladder, with a log-log slope fit; exact apex-hit fraction on cones.
pub fn ae_convexity_estimate(model: &StratifiedModel, n_pairs: usize, ladder: &[f64], seed: u64) -> Result<CheckReport> {
    check_ladder(ladder, "ε ladder")?;
    if ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::argument("ε ladder must be strictly decreasing"));
    }
    if n_pairs == 0 {
        return Err(Error::argument("pair count must be at least 1"));
    }
    let k = ladder.len();
    let failure = std::sync::Mutex::new(None);
    let unresolved = std::sync::atomic::AtomicUsize::new(0);
    let shots = std::sync::atomic::AtomicUsize::new(0);
    // outputs: [exact hit, hit at ε_1 .. ε_k]
    let fill = |out: &mut [f64], weight: f64, through: bool, approach: f64| {
        out[0] = if through { weight } else { 0.0 };
        for i in 0..k {
            out[1 + i] = if approach < ladder[i] { weight } else { 0.0 };
        }
    };
    let est: Vec<(f64, f64)> = if !model.has_singular_set() {
        vec![(0.0, 0.0); k + 1]
    } else {
        match model {
            StratifiedModel::EuclideanCone { link: LinkSpace::Circle { radius }, .. } => {
                let alpha = TAU * radius;
                mc_moments(n_pairs, seed, k + 1, |rng, out| {
                    let (ModelPoint::Cone(p), _) = model.sample_point(rng) else { unreachable!() };
                    let (ModelPoint::Cone(q), _) = model.sample_point(rng) else { unreachable!() };
                    match unfold_flat_cone(alpha, &p, &q) {
                        Ok(g) => fill(out, 1.0, false, g.apex_distance()),
                        Err(Error::Precondition(_)) => fill(out, 1.0, true, 0.0),
                        Err(e) => {
                            failure.lock().expect("poisoned").get_or_insert(e);
                        }
                    }
                })
            }
            StratifiedModel::Suspension { link: LinkSpace::Circle { radius } } => {
                mc_moments(n_pairs, seed, k + 1, |rng, out| {
                    let (ModelPoint::Link(p), _) = model.sample_point(rng) else { unreachable!() };
                    let (ModelPoint::Link(q), _) = model.sample_point(rng) else { unreachable!() };
                    match suspension_pole_approach(*radius, &p, &q) {
                        Some(d) => fill(out, 1.0, false, d),
                        None => fill(out, 1.0, true, 0.0),
                    }
                })
            }
            StratifiedModel::FermiSphere(f) => {
                if (f.beta - PI / 2.0).abs() > 1e-15 {
                    return Err(Error::unsupported("Fermi geodesics are implemented for β = π/2 only"));
                }
                let sampler = FermiPairSampler { sphere: f, volume: f.volume(), r_min: 1e-4, r_max: f.blend_radius };
                // straight segments in the cone factor span a cone angle ≤ α/2
                let shrink = if f.alpha < TAU { (f.alpha / 4.0).cos() } else { 0.0 };
                mc_moments(n_pairs, seed, k + 1, |rng, out| {
                    let (p, wp) = sampler.draw(rng);
                    let (q, wq) = sampler.draw(rng);
                    let w = wp * wq;
                    let upper = p.r.min(q.r);
                    let lower = upper.min(0.5 * f.blend_radius) * shrink;
                    // some ε in (lower, upper] needs the actual closest approach
                    if !ladder.iter().any(|&e| e > lower && e <= upper) {
                        fill(out, w, false, upper.max(lower));
                        return;
                    }
                    if f.product_distance(&p, &q).is_some() {
                        match f.geodesic(&p, &q) {
                            Ok(g) => fill(out, w, false, g.min_r),
                            Err(e) => {
                                failure.lock().expect("poisoned").get_or_insert(e);
                            }
                        }
                        return;
                    }
                    if rng.random::<f64>() >= FERMI_RESOLVE_PROBABILITY {
                        return;
                    }
                    shots.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    let w = w / FERMI_RESOLVE_PROBABILITY;
                    match f.geodesic(&p, &q) {
                        Ok(g) => fill(out, w, false, g.min_r),
                        Err(_) => {
                            unresolved.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                            fill(out, w, false, lower);
                        }
                    }
                })
            }
            _ => {
                return Err(Error::unsupported(
                    "a.e. convexity needs computable geodesics (flat cones, suspensions over circles, the Fermi sphere with β = π/2)",
                ))
            }
        }
    };
    if let Some(e) = failure.into_inner().expect("poisoned") {
        return Err(e);
    }
    let (through, through_se) = est[0];
    let fractions: Vec<(f64, f64, f64)> = (0..k).map(|i| (ladder[i], est[1 + i].0, est[1 + i].1)).collect();
    let positive: Vec<&(f64, f64, f64)> = fractions.iter().filter(|f| f.1 > 0.0).collect();
    let slope = if positive.len() >= 2 {
        let xs: Vec<f64> = positive.iter().map(|f| f.0.ln()).collect();
        let ys: Vec<f64> = positive.iter().map(|f| f.1.ln()).collect();
        Some(linear_fit(&xs, &ys).0)
    } else {
        None
    };
    let mut margin = 3.0 * through_se - through;
    if let Some(s) = slope {
        margin = margin.min(s - MIN_HIT_SLOPE);
    }
    Ok(CheckReport::new("ae_convexity", margin, 0.0, n_pairs, Some(seed))
        .with("singular_hit_fraction", through)
        .with("singular_hit_stderr", through_se)
        .with("fractions", fractions)
        .with("slope", slope)
        .with("geodesic_shots", shots.into_inner())
        .with("unresolved", unresolved.into_inner()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn apex() -> ModelPoint {
        ModelPoint::Cone(ConePoint::new(0.0, LinkPoint::Circle(0.0)))
    }

    #[test]
    fn apex_ratio_is_constant() {
        let m = StratifiedModel::flat_cone(PI, 2.0).unwrap();
        let r = bishop_gromov_check(&m, &apex(), &[0.1, 0.4, 1.6], 0.0, 2, 10_000, 1).unwrap();
        assert!(r.pass);
        let ratios: Vec<f64> = serde_json::from_value(r.diagnostics["ratios"].clone()).unwrap();
        assert!(ratios.iter().all(|x| (x - 0.5).abs() < 1e-12));
    }

    #[test]
    fn wide_cone_ratios_follow_the_sector_oracle() {
        let m = StratifiedModel::flat_cone(3.0 * PI, 5.0).unwrap();
        let x = ModelPoint::Cone(ConePoint::new(1.0, LinkPoint::Circle(0.0)));
        let r = bishop_gromov_check(&m, &x, &[0.25, 1.0, 4.0], 0.0, 2, 100_000, 2).unwrap();
        assert!(!r.pass);
        let ratios: Vec<f64> = serde_json::from_value(r.diagnostics["ratios"].clone()).unwrap();
        let errs: Vec<f64> = serde_json::from_value(r.diagnostics["ratio_stderr"].clone()).unwrap();
        // independent oracle: B(x, 4) contains the apex; every direction with
        // angular gap ≥ π is reached through it
        let exact = |rho: f64| {
            let alpha = 3.0 * PI;
            let direct = integrate(
                |u| {
                    let c = ((u * u + 1.0 - rho * rho) / (2.0 * u)).clamp(-1.0, 1.0);
                    if u + 1.0 < rho { alpha * u } else { 2.0 * c.acos() * u }
                },
                0.0,
                1.0 + rho,
                1e-10,
            );
            direct / (PI * rho * rho)
        };
        for (i, rho) in [0.25, 1.0, 4.0].into_iter().enumerate() {
            assert!((ratios[i] - exact(rho)).abs() < 4.0 * errs[i], "{rho}: {} vs {}", ratios[i], exact(rho));
        }
        assert!(r.diagnostic_f64("end_to_end_z").unwrap() < -10.0);
    }

    #[test]
    fn sphere_isoperimetric_profile() {
        let (b, r) = spherical_isoperimetric_profile(2, 0.5);
        assert!((b - 0.5).abs() < 1e-12 && (r - PI / 2.0).abs() < 1e-12);
        // cap of radius π/3 on S² has area fraction 1/4 and perimeter 2π sin(π/3)
        let (b, _) = spherical_isoperimetric_profile(2, 0.25);
        assert!((b - TAU * (PI / 3.0).sin() / (4.0 * PI)).abs() < 1e-12);
        let (b, _) = spherical_isoperimetric_profile(3, 0.5);
        assert!((b - 2.0 / PI).abs() < 1e-12);
        assert_eq!(spherical_isoperimetric_profile(2, 0.0).0, 0.0);
    }

    #[test]
    fn isoperimetry_needs_einstein_normalization() {
        let m = StratifiedModel::flat_cone(PI, 1.0).unwrap();
        let err = levy_gromov_check(&m, &Region::Empty, &[0.2, 0.1], 10, 0).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn cutoff_profile_is_logarithmic() {
        assert_eq!(cutoff_profile(0.1, 0.005), 0.0);
        assert_eq!(cutoff_profile(0.1, 0.2), 1.0);
        assert!((cutoff_profile(0.1, 10f64.powf(-1.5)) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cutoff_norms_match_quadrature() {
        let cone = StratifiedModel::flat_cone(PI, 1.0).unwrap();
        let mut last = f64::INFINITY;
        for eps in [0.2f64, 0.1, 0.05, 0.025] {
            let c = cutoff_family(&cone, eps, None).unwrap();
            let l = (1.0 / eps).ln();
            assert!((c.grad_sq - PI / l).abs() < 1e-5 * PI / l);
            assert!((c.laplacian_l1 - 2.0 * PI / l).abs() < 1e-5 * PI / l);
            assert!(c.grad_sq < last);
            last = c.grad_sq;
        }
        // two poles of a suspension: ∫ 2α sin s/(s log(1/ε))² ds
        let susp = StratifiedModel::spherical_suspension(2, PI).unwrap();
        let eps: f64 = 0.1;
        let l = (1.0 / eps).ln();
        let reference = integrate(|s| 2.0 * PI * s.sin() / (s * l).powi(2), eps * eps, eps, 1e-12);
        let c = cutoff_family(&susp, eps, None).unwrap();
        assert!((c.grad_sq - reference).abs() < 1e-4 * reference);
    }

    #[test]
    fn cutoff_on_smooth_models_and_bad_scales() {
        let s2 = StratifiedModel::round_sphere(2).unwrap();
        let c = cutoff_family(&s2, 0.1, None).unwrap();
        assert_eq!((c.grad_sq, c.laplacian_l1), (0.0, 0.0));
        let cone = StratifiedModel::flat_cone(PI, 0.5).unwrap();
        assert!(matches!(cutoff_family(&cone, 0.6, None), Err(Error::Argument(_))));
        assert!(matches!(cutoff_family(&cone, 0.0, None), Err(Error::Argument(_))));
    }

    #[test]
    fn contraction_toward_the_apex_is_self_similar() {
        let r = mcp_density_check(PI, 1.0, &ConePoint::new(0.0, LinkPoint::Circle(0.0)), &[0.3, 1.0], 3000, 4).unwrap();
        assert!(r.pass);
        let rows: Vec<(f64, f64, f64, f64)> =
            serde_json::from_value(r.diagnostics["rows_t_sup_ratio_bandwidth"].clone()).unwrap();
        assert!(rows.iter().all(|row| (row.2 - 1.0).abs() < 1e-9));
        let x0 = ConePoint::new(0.0, LinkPoint::Circle(0.0));
        assert!(matches!(mcp_density_check(PI, 1.0, &x0, &[0.0, 0.5], 100, 0), Err(Error::Argument(_))));
    }

    #[test]
    fn apex_hit_fraction_follows_the_gap_distribution() {
        let m = StratifiedModel::flat_cone(3.0 * PI, 1.0).unwrap();
        let r = ae_convexity_estimate(&m, 20_000, &[0.1, 0.05], 3).unwrap();
        let f = r.diagnostic_f64("singular_hit_fraction").unwrap();
        let se = r.diagnostic_f64("singular_hit_stderr").unwrap();
        assert!((f - 1.0 / 3.0).abs() < 4.0 * se);
        let m = StratifiedModel::flat_cone(1.5 * PI, 1.0).unwrap();
        let r = ae_convexity_estimate(&m, 20_000, &[0.1, 0.05], 3).unwrap();
        assert_eq!(r.diagnostic_f64("singular_hit_fraction"), Some(0.0));
    }

    #[test]
    fn pole_approach_matches_dense_arc_sampling() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let a = 0.7;
        for _ in 0..200 {
            let (t1, t2) = (PI * rng.random::<f64>(), PI * rng.random::<f64>());
            let (u1, u2) = (TAU * rng.random::<f64>(), TAU * rng.random::<f64>());
            let p = LinkPoint::suspension(t1, LinkPoint::Circle(u1));
            let q = LinkPoint::suspension(t2, LinkPoint::Circle(u2));
            let got = suspension_pole_approach(a, &p, &q).unwrap();
            // slerp along the developed arc
            let raw = (u1 - u2).abs();
            let gap = a * raw.min(TAU - raw);
            let pp = [t1.sin(), 0.0, t1.cos()];
            let qq = [t2.sin() * gap.cos(), t2.sin() * gap.sin(), t2.cos()];
            let omega = (pp[0] * qq[0] + pp[1] * qq[1] + pp[2] * qq[2]).clamp(-1.0, 1.0).acos();
            let mut best = f64::INFINITY;
            for i in 0..=20_000 {
                let s = i as f64 / 20_000.0;
                let z = if omega < 1e-12 {
                    pp[2]
                } else {
                    (((1.0 - s) * omega).sin() * pp[2] + (s * omega).sin() * qq[2]) / omega.sin()
                };
                let colat = z.clamp(-1.0, 1.0).acos();
                best = best.min(colat.min(PI - colat));
            }
            assert!((got - best).abs() < 1e-3, "{got} vs {best}");
        }
    }

    #[test]
    fn bochner_rejects_negative_test_functions() {
        let m = StratifiedModel::round_sphere(2).unwrap();
        let cloud = crate::measure::sample_points_low_discrepancy(&m, 600, 1).unwrap();
        let g = crate::graph::build_graph(&m, &cloud, 0.2).unwrap();
        let s = crate::spectral::eigen(&g, 4).unwrap();
        let mut psi = vec![1.0; g.len()];
        let r = bochner_check(&g, &s, &[1.0], &psi, 1.0, 2.0).unwrap();
        assert!(r.pass && r.margin.abs() < 1e-9);
        psi[3] = -0.1;
        assert!(matches!(bochner_check(&g, &s, &[0.0, 1.0], &psi, 1.0, 2.0), Err(Error::Precondition(_))));
    }
}
