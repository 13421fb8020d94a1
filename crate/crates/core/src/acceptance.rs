//! The acceptance suite behind `report --suite acceptance`: each criterion
//! runs its experiments and compares against closed-form targets.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::time::Instant;

use serde::Serialize;

use crate::comparison::{
    ae_convexity_estimate, bishop_gromov_check, bochner_check, cutoff_family, laplacian_comparison_check,
    levy_gromov_check, mcp_density_check, LaplacianMasks,
};
use crate::cone::ConePoint;
use crate::error::Result;
use crate::fermi::fermi_asymptotic_check;
use crate::graph::{build_graph, graph_distances};
use crate::link::LinkPoint;
use crate::measure::{
    ahlfors_check, ball_volume_mc, derive_seed, doubling_ratio, model_ball_volume, sample_points,
    sample_points_low_discrepancy, Region,
};
use crate::model::{ModelPoint, StratifiedModel};
use crate::report::{fmt_f64, CsvTable};
use crate::spectral::{eigen, weyl_ratio};
use crate::suite::{catalog, resolve_center, run_catalog_entry, Center};

/// One measured quantity of a criterion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcceptanceRow {
    pub criterion: u8,
    pub quantity: String,
    pub value: f64,
    pub target: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub seed: u64,
}

fn row(criterion: u8, quantity: impl Into<String>, value: f64, target: f64, tolerance: f64, pass: bool, seed: u64) -> AcceptanceRow {
    AcceptanceRow { criterion, quantity: quantity.into(), value, target, tolerance, pass, seed }
}

/// `|value − target| ≤ tolerance`.
fn near(criterion: u8, quantity: impl Into<String>, value: f64, target: f64, tolerance: f64, seed: u64) -> AcceptanceRow {
    row(criterion, quantity, value, target, tolerance, (value - target).abs() <= tolerance, seed)
}

fn apex() -> ModelPoint {
    ModelPoint::Cone(ConePoint::new(0.0, LinkPoint::Circle(0.0)))
}

fn pole_cap_center() -> ModelPoint {
    ModelPoint::Link(LinkPoint::suspension(0.0, LinkPoint::Circle(0.0)))
}

pub fn graph_distance(seed: u64) -> Result<Vec<AcceptanceRow>> {
    let start = Instant::now();
    let model = StratifiedModel::flat_cone(PI, 1.0)?;
    let cloud = sample_points(&model, 10_000, seed)?;
    let g = build_graph(&model, &cloud, 0.03)?;
    let mut worst = 0.0f64;
    for s in 0..100 {
        let src = s * 100;
        let d = graph_distances(&g, src);
        for k in 0..100 {
            let j = (src + 1 + 37 * k + s) % g.len();
            let exact = model.distance(&g.points[src], &g.points[j])?;
            if exact > 0.0 {
                worst = worst.max((d[j] - exact).abs() / exact);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(vec![
        row(1, "max relative graph-distance error, 1e4 pairs", worst, 0.0, 0.02, worst <= 0.02, seed),
        row(1, "runtime seconds", secs, 0.0, 60.0, secs < 60.0, seed),
    ])
}

pub fn volumes(seed: u64) -> Result<Vec<AcceptanceRow>> {
    let n = 1_000_000;
    let mut rows = Vec::new();
    for (i, alpha) in [PI, 2.0 * PI / 3.0].into_iter().enumerate() {
        let model = StratifiedModel::flat_cone(alpha, 1.0)?;
        let s = derive_seed(seed, i as u64);
        let e = ball_volume_mc(&model, &apex(), 0.5, n, s)?;
        rows.push(near(2, format!("apex ball area, alpha = {alpha:.4}"), e.value, alpha / 2.0 * 0.25, 3.0 * e.stderr + 1e-12, s));
    }
    let a = 0.5;
    let model = StratifiedModel::spherical_suspension(2, TAU * a)?;
    let s = derive_seed(seed, 10);
    let e = ball_volume_mc(&model, &pole_cap_center(), 1.0, n, s)?;
    rows.push(near(2, "suspension polar cap, a = 0.5, r = 1", e.value, TAU * a * (1.0 - 1f64.cos()), 3.0 * e.stderr, s));
    let s3 = StratifiedModel::round_sphere(3)?;
    let s = derive_seed(seed, 11);
    let e = ball_volume_mc(&s3, &ModelPoint::Link(LinkPoint::Sphere(vec![0.0, 0.0, 0.0, 1.0])), PI, n, s)?;
    rows.push(near(2, "vol(S3) as a ball of radius pi", e.value, model_ball_volume(3, 1.0, PI), 3.0 * e.stderr + 1e-9, s));
    Ok(rows)
}

/// A representative center: the apex, pole or singular circle.
fn natural_center(model: &StratifiedModel) -> Result<ModelPoint> {
    let c = match model {
        StratifiedModel::EuclideanCone { .. } => Center::Apex,
        StratifiedModel::FermiSphere(_) => Center::Radial { r: 0.0, angle: 0.0 },
        _ => Center::Pole,
    };
    resolve_center(model, &c)
}

pub fn ahlfors_doubling(seed: u64) -> Result<Vec<AcceptanceRow>> {
    let mut rows = Vec::new();
    for (i, e) in catalog().iter().enumerate() {
        let s = derive_seed(seed, i as u64);
        let r = ahlfors_check(&e.model, &natural_center(&e.model)?, &[0.05, 0.1, 0.2], 20_000, s)?;
        let c = r.diagnostic_f64("C").unwrap_or(f64::INFINITY);
        rows.push(row(3, format!("Ahlfors C, {}", e.name), c, 1.0, f64::INFINITY, c.is_finite(), s));
    }
    for (i, alpha) in [PI, 2.0 * PI / 3.0, TAU, 3.0 * PI].into_iter().enumerate() {
        let model = StratifiedModel::flat_cone(alpha, 1.0)?;
        let s = derive_seed(seed, 100 + i as u64);
        let d = doubling_ratio(&model, &apex(), 0.25, 200_000, s)?;
        rows.push(near(3, format!("apex doubling ratio, alpha = {alpha:.4}"), d.value, 4.0, 3.0 * d.stderr + 1e-12, s));
    }
    Ok(rows)
}

pub fn bishop_gromov(seed: u64) -> Result<Vec<AcceptanceRow>> {
    let mut rows = Vec::new();
    let model = StratifiedModel::flat_cone(3.0 * PI, 5.0)?;
    let x = ModelPoint::Cone(ConePoint::new(1.0, LinkPoint::Circle(0.0)));
    let r = bishop_gromov_check(&model, &x, &[0.25, 0.5, 1.0, 2.0, 4.0], 0.0, 2, 200_000, seed)?;
    let z = r.diagnostic_f64("end_to_end_z").unwrap_or(0.0);
    rows.push(row(4, "3pi cone violation, stderr units (r = 4 vs 0.25)", -z, 10.0, 0.0, -z > 10.0, seed));
    Ok(rows)
}

pub fn lichnerowicz(seed: u64) -> Result<Vec<AcceptanceRow>> {
    let mut rows = Vec::new();
    for a in [0.25, 0.5, 1.0] {
        let model = StratifiedModel::spherical_suspension(2, TAU * a)?;
        let cloud = sample_points_low_discrepancy(&model, 4000, seed)?;
        let g = build_graph(&model, &cloud, 0.07)?;
        let s = eigen(&g, 2)?;
        rows.push(near(5, format!("lambda_1 of S2_alpha, a = {a}"), s.eigenvalues[1], 2.0, 0.14, seed));
    }
    Ok(rows)
}

pub fn weyl(seed: u64) -> Result<Vec<AcceptanceRow>> {
    let s2 = crate::spectral::round_s2_spectrum(60);
    let w = crate::spectral::weyl_ratio_from(&s2, 4.0 * PI, 2, (49.0 * 50.0) as f64);
    let mut rows = vec![near(6, "round S2 Weyl ratio at l = 49", w.ratio / w.target, 1.0, 0.1, seed)];
    let a = 0.5;
    let model = StratifiedModel::spherical_suspension(2, TAU * a)?;
    let mut deviations = Vec::new();
    for (eps, count) in [(0.065, 30), (0.046, 50)] {
        let cloud = sample_points_low_discrepancy(&model, 8000, seed)?;
        let g = build_graph(&model, &cloud, eps)?;
        let s = eigen(&g, count)?;
        let w = weyl_ratio(&s, model.volume(), 2, s.cutoff)?;
        deviations.push((w.ratio - a).abs());
        rows.push(near(6, format!("S2_alpha Weyl ratio at the cutoff, eps = {eps}"), w.ratio, a, 0.2 * a, seed));
    }
    rows.push(row(6, "deviation improves under refinement", deviations[1], deviations[0], 0.0, deviations[1] < deviations[0], seed));
    Ok(rows)
}

pub fn bochner(seed: u64) -> Result<Vec<AcceptanceRow>> {
    let mut rows = Vec::new();
    let models: Vec<(&str, StratifiedModel, f64, f64)> = vec![
        ("S2", StratifiedModel::round_sphere(2)?, 0.07, 1.0),
        ("pi cone", StratifiedModel::flat_cone(PI, 1.0)?, 0.05, 0.0),
        ("S2_alpha a = 0.5", StratifiedModel::spherical_suspension(2, PI)?, 0.07, 1.0),
        ("S2_alpha a = 0.25", StratifiedModel::spherical_suspension(2, PI / 2.0)?, 0.07, 1.0),
    ];
    for (name, model, eps, k) in &models {
        let cloud = sample_points_low_discrepancy(model, 4000, seed)?;
        let g = build_graph(model, &cloud, *eps)?;
        let s = eigen(&g, 8)?;
        let psi = vec![1.0; g.len()];
        let mut worst = f64::INFINITY;
        for i in 0..8 {
            let mut c = vec![0.0; i + 1];
            c[i] = 1.0;
            let r = bochner_check(&g, &s, &c, &psi, *k, 2.0)?;
            worst = worst.min(r.margin + r.tolerance);
        }
        rows.push(row(7, format!("min Bochner margin + tol, {name}"), worst, 0.0, 0.0, worst >= 0.0, seed));
    }
    let model = StratifiedModel::spherical_suspension(2, PI)?;
    let mut margins = Vec::new();
    for eps in [0.1, 0.07] {
        let cloud = sample_points_low_discrepancy(&model, 4000, seed)?;
        let g = build_graph(&model, &cloud, eps)?;
        let s = eigen(&g, 2)?;
        let r = bochner_check(&g, &s, &[0.0, 1.0], &vec![1.0; g.len()], 1.0, 2.0)?;
        margins.push(r.margin.abs());
    }
    let shrink = 1.0 - margins[1] / margins[0];
    rows.push(row(7, "equality-case |margin| shrink under refinement", shrink, 0.3, 0.0, shrink >= 0.3, seed));
    Ok(rows)
}

pub fn cutoff(seed: u64) -> Result<Vec<AcceptanceRow>> {
    let mut rows = Vec::new();
    let ladder = [0.2, 0.1, 0.05, 0.025];
    for alpha in [PI, 2.0 * PI / 3.0] {
        let model = StratifiedModel::flat_cone(alpha, 1.0)?;
        let fams = ladder.iter().map(|&e| cutoff_family(&model, e, None)).collect::<Result<Vec<_>>>()?;
        for f in &fams {
            let target = alpha / (1.0 / f.eps).ln();
            rows.push(near(8, format!("grad norm, alpha = {alpha:.4}, eps = {}", f.eps), f.grad_sq, target, 0.1 * target, seed));
        }
        let decreasing = fams.windows(2).all(|w| w[1].grad_sq < w[0].grad_sq);
        let last = fams.last().map_or(0.0, |f| f.grad_sq);
        rows.push(row(8, format!("decreasing along the ladder, alpha = {alpha:.4}"), last, fams[0].grad_sq, 0.0, decreasing, seed));
    }
    Ok(rows)
}

pub fn laplacian(seed: u64) -> Result<Vec<AcceptanceRow>> {
    let cases: Vec<(&str, StratifiedModel, Center, f64)> = vec![
        ("S2 from a pole", StratifiedModel::round_sphere(2)?, Center::Pole, 1.0),
        ("pi cone from the apex", StratifiedModel::flat_cone(PI, 1.0)?, Center::Apex, 0.0),
        ("S2_alpha a = 0.5 from a pole", StratifiedModel::spherical_suspension(2, PI)?, Center::Pole, 1.0),
    ];
    let mut rows = Vec::new();
    for (name, model, center, k) in &cases {
        let cloud = sample_points_low_discrepancy(model, 4000, seed)?;
        let g = build_graph(model, &cloud, 0.07)?;
        let x = resolve_center(model, center)?;
        let r = laplacian_comparison_check(model, &x, *k, 2, &g, &LaplacianMasks::default())?;
        rows.push(row(9, format!("Laplacian comparison margin, {name}"), r.margin, 0.0, r.tolerance, r.pass, seed));
    }
    Ok(rows)
}

pub fn levy_gromov(seed: u64) -> Result<Vec<AcceptanceRow>> {
    let ladder = [0.2, 0.1, 0.05, 0.025];
    let hemisphere =
        Region::Ball { center: ModelPoint::Link(LinkPoint::Sphere(vec![0.0, 0.0, 1.0])), radius: FRAC_PI_2 };
    let cases = [
        ("hemisphere of S2", StratifiedModel::round_sphere(2)?, hemisphere),
        ("half-space of S2_alpha, a = 0.5", StratifiedModel::spherical_suspension(2, PI)?, Region::SuspensionSublevel { t_max: FRAC_PI_2 }),
    ];
    let mut rows = Vec::new();
    for (i, (name, model, region)) in cases.iter().enumerate() {
        let s = derive_seed(seed, i as u64);
        let r = levy_gromov_check(model, region, &ladder, 200_000, s)?;
        let gap = r.diagnostic_f64("relative_gap").unwrap_or(f64::NAN);
        rows.push(near(10, format!("relative isoperimetric gap, {name}"), gap, 0.0, 0.02, s));
    }
    Ok(rows)
}

pub fn mcp_convexity(seed: u64) -> Result<Vec<AcceptanceRow>> {
    let mut rows = Vec::new();
    let r = mcp_density_check(PI, 1.0, &ConePoint::new(0.0, LinkPoint::Circle(0.0)), &[0.25, 0.5, 0.75], 20_000, seed)?;
    rows.push(row(11, "apex contraction density within the t^-2 band", r.margin, 0.0, 0.0, r.pass, seed));
    let ladder = [0.1, 0.05, 0.025, 0.0125];
    for (i, alpha) in [PI, 2.0 * PI / 3.0, 3.0 * PI].into_iter().enumerate() {
        let model = StratifiedModel::flat_cone(alpha, 1.0)?;
        let s = derive_seed(seed, i as u64);
        let r = ae_convexity_estimate(&model, 100_000, &ladder, s)?;
        let f = r.diagnostic_f64("singular_hit_fraction").unwrap_or(f64::NAN);
        let target = if alpha < TAU { 0.0 } else { 1.0 - TAU / alpha };
        let tol = if alpha < TAU { 0.0 } else { 0.02 };
        rows.push(near(11, format!("apex-hit fraction, alpha = {alpha:.4}"), f, target, tol, s));
    }
    let fermi = StratifiedModel::fermi_sphere(FRAC_PI_2, PI, 0.4)?;
    let s = derive_seed(seed, 10);
    let r = ae_convexity_estimate(&fermi, 20_000, &ladder, s)?;
    let slope = r.diagnostic_f64("slope").unwrap_or(f64::NAN);
    rows.push(row(11, "Fermi sphere tube-hit slope", slope, 1.8, 0.0, slope >= 1.8, s));
    Ok(rows)
}

pub fn classifier_end_to_end(seed: u64) -> Result<Vec<AcceptanceRow>> {
    let start = Instant::now();
    let mut rows = Vec::new();
    for (i, e) in catalog().iter().enumerate() {
        let s = derive_seed(seed, i as u64);
        let r = run_catalog_entry(e, s)?;
        let ok = r.verdict_matches && r.consistent && r.checks.iter().all(|c| c.as_expected);
        rows.push(row(12, format!("verdict and consistency, {}", e.name), ok as u8 as f64, 1.0, 0.0, ok, s));
    }
    let secs = start.elapsed().as_secs_f64();
    rows.push(row(12, "catalog runtime seconds", secs, 0.0, 1200.0, secs < 1200.0, seed));
    Ok(rows)
}

pub fn fermi_expansion(seed: u64) -> Result<Vec<AcceptanceRow>> {
    let grid: Vec<f64> = (0..6).map(|i| 0.05 * 0.5f64.powi(i)).collect();
    let flat = fermi_asymptotic_check(FRAC_PI_2, &grid)?;
    let tilted = fermi_asymptotic_check(PI / 4.0, &grid)?;
    Ok(vec![
        near(13, "deviation exponent, beta = pi/2", flat.exponent, 2.0, 0.1, seed),
        near(13, "deviation exponent, beta = pi/4", tilted.exponent, 1.0, 0.1, seed),
        near(13, "deviation coefficient, beta = pi/4", tilted.constant, (PI / 2.0).sin(), 0.05 * (PI / 2.0).sin(), seed),
    ])
}

/// Runs every criterion in order.
pub fn run_acceptance(seed: u64) -> Result<Vec<AcceptanceRow>> {
    type Criterion = fn(u64) -> Result<Vec<AcceptanceRow>>;
    let all: [Criterion; 13] = [
        graph_distance,
        volumes,
        ahlfors_doubling,
        bishop_gromov,
        lichnerowicz,
        weyl,
        bochner,
        cutoff,
        laplacian,
        levy_gromov,
        mcp_convexity,
        classifier_end_to_end,
        fermi_expansion,
    ];
    let mut rows = Vec::new();
    for (i, f) in all.iter().enumerate() {
        rows.extend(f(derive_seed(seed, i as u64))?);
    }
    Ok(rows)
}

pub fn acceptance_csv(rows: &[AcceptanceRow]) -> String {
    let mut table = CsvTable::new(&["criterion", "quantity", "value", "target", "tolerance", "pass", "seed"]);
    for r in rows {
        table.push(vec![
            r.criterion.to_string(),
            r.quantity.clone(),
            fmt_f64(r.value),
            fmt_f64(r.target),
            fmt_f64(r.tolerance),
            r.pass.to_string(),
            r.seed.to_string(),
        ]);
    }
    table.render()
}
