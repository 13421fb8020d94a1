//! Experiment configuration, check dispatch, the example catalog and the
//! deterministic runner behind the command-line tool.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::path::{Path, PathBuf};
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::classifier::{alexandrov_classify, classify, CurvatureVerdict, Expectation};
use crate::comparison::{
    ae_convexity_estimate, bishop_gromov_check, bochner_check, clipped_test_function, cutoff_family,
    laplacian_comparison_check, levy_gromov_check, mcp_density_check, LaplacianMasks,
};
use crate::cone::{quadruple_comparison, ConePoint};
use crate::error::{Error, Result};
use crate::graph::{build_graph, DiscreteApproximation};
use crate::link::{LinkPoint, LinkSpace};
use crate::measure::{ahlfors_check, derive_seed, sample_points, sample_points_low_discrepancy, Region};
use crate::model::{ModelDocument, ModelPoint, StratifiedModel};
use crate::report::{fmt_f64, write_atomic, CheckReport, CsvTable, SCHEMA_VERSION};
use crate::spectral::{eigen, lichnerowicz_check, SpectralData};

/// A point named relative to the model's own coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Center {
    /// Tip of a cone.
    Apex,
    /// `t = 0` of a suspension, the last-coordinate pole of a round sphere.
    Pole,
    /// Distance `r` from the apex, pole or Fermi circle, in direction `angle`.
    Radial { r: f64, angle: f64 },
    Point(ModelPoint),
}

fn base_point(link: &LinkSpace) -> LinkPoint {
    match link {
        LinkSpace::Circle { .. } => LinkPoint::Circle(0.0),
        LinkSpace::RoundSphere { dim } => {
            let mut x = vec![0.0; dim + 1];
            x[0] = 1.0;
            LinkPoint::Sphere(x)
        }
        LinkSpace::Suspension { base } => LinkPoint::suspension(FRAC_PI_2, base_point(base)),
    }
}

/// Link point at angle `angle` along the first circle-like direction.
fn link_direction(link: &LinkSpace, angle: f64) -> LinkPoint {
    match link {
        LinkSpace::Circle { .. } => LinkPoint::Circle(angle.rem_euclid(TAU)),
        LinkSpace::RoundSphere { dim } => {
            let mut x = vec![0.0; dim + 1];
            x[0] = angle.cos();
            x[1] = angle.sin();
            LinkPoint::Sphere(x)
        }
        LinkSpace::Suspension { base } => LinkPoint::suspension(FRAC_PI_2, link_direction(base, angle)),
    }
}

pub fn resolve_center(model: &StratifiedModel, center: &Center) -> Result<ModelPoint> {
    let point = match (model, center) {
        (_, Center::Point(p)) => p.clone(),
        (StratifiedModel::EuclideanCone { link, .. }, Center::Apex) => ModelPoint::Cone(ConePoint::new(0.0, base_point(link))),
        (StratifiedModel::EuclideanCone { link, .. }, Center::Radial { r, angle }) => {
            ModelPoint::Cone(ConePoint::new(*r, link_direction(link, *angle)))
        }
        (StratifiedModel::Suspension { link }, Center::Pole) => ModelPoint::Link(LinkPoint::suspension(0.0, base_point(link))),
        (StratifiedModel::Suspension { link }, Center::Radial { r, angle }) => {
            ModelPoint::Link(LinkPoint::suspension(*r, link_direction(link, *angle)))
        }
        (StratifiedModel::RoundSphere { dim }, Center::Pole) => {
            let mut x = vec![0.0; dim + 1];
            x[*dim] = 1.0;
            ModelPoint::Link(LinkPoint::Sphere(x))
        }
        (StratifiedModel::RoundSphere { dim }, Center::Radial { r, angle }) => {
            let mut x = vec![0.0; dim + 1];
            x[*dim] = r.cos();
            x[0] = r.sin() * angle.cos();
            x[1] = r.sin() * angle.sin();
            ModelPoint::Link(LinkPoint::Sphere(x))
        }
        (StratifiedModel::FermiSphere(f), Center::Radial { r, angle }) => ModelPoint::Fermi(f.point_from_chart(*r, 0.0, *angle)?),
        (m, c) => return Err(Error::Config(format!("center {c:?} is not defined on a {} model", m.family()))),
    };
    model.validate_point(&point)?;
    Ok(point)
}

fn default_masks() -> Option<LaplacianMasks> {
    None
}

/// One configured check. Sample sizes and mesh parameters live here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case", deny_unknown_fields)]
pub enum CheckSpec {
    BishopGromov {
        center: Center,
        radii: Vec<f64>,
        #[serde(rename = "K")]
        k: f64,
        n: usize,
        samples: usize,
    },
    /// Bishop-Gromov at `centers` uniformly drawn centers; worst margin wins.
    BishopGromovCenters {
        centers: usize,
        radii: Vec<f64>,
        #[serde(rename = "K")]
        k: f64,
        n: usize,
        samples: usize,
    },
    Ahlfors {
        center: Center,
        radii: Vec<f64>,
        samples: usize,
    },
    LaplacianComparison {
        center: Center,
        /// Model curvature `k = K/(n−1)`.
        k: f64,
        n: usize,
        nodes: usize,
        eps: f64,
        #[serde(default = "default_masks")]
        masks: Option<LaplacianMasks>,
    },
    LevyGromov {
        region: Region,
        ladder: Vec<f64>,
        samples: usize,
    },
    /// Every computed eigenfunction against `ψ ≡ 1`, or against the clipped
    /// test function built from eigenvector `test_function`.
    Bochner {
        nodes: usize,
        eps: f64,
        eigenvalues: usize,
        #[serde(rename = "K")]
        k: f64,
        #[serde(rename = "N")]
        n: f64,
        #[serde(default)]
        test_function: Option<usize>,
    },
    Lichnerowicz {
        nodes: usize,
        eps: f64,
        tolerance: f64,
    },
    /// Cut-off norms along a decreasing ε ladder: both must decrease, and on
    /// flat cones the gradient norm must match `α/log(1/ε)` within `tolerance`.
    CutoffLadder {
        eps: Vec<f64>,
        tolerance: f64,
    },
    McpDensity {
        x0_radius: f64,
        t_grid: Vec<f64>,
        samples: usize,
    },
    AeConvexity {
        pairs: usize,
        ladder: Vec<f64>,
    },
    QuadrupleComparison {
        p: Center,
        others: [Center; 3],
        k: f64,
    },
}

impl CheckSpec {
    pub fn name(&self) -> &'static str {
        match self {
            CheckSpec::BishopGromov { .. } => "bishop_gromov",
            CheckSpec::BishopGromovCenters { .. } => "bishop_gromov_centers",
            CheckSpec::Ahlfors { .. } => "ahlfors",
            CheckSpec::LaplacianComparison { .. } => "laplacian_comparison",
            CheckSpec::LevyGromov { .. } => "levy_gromov",
            CheckSpec::Bochner { .. } => "bochner",
            CheckSpec::Lichnerowicz { .. } => "lichnerowicz",
            CheckSpec::CutoffLadder { .. } => "cutoff_ladder",
            CheckSpec::McpDensity { .. } => "mcp_density",
            CheckSpec::AeConvexity { .. } => "ae_convexity",
            CheckSpec::QuadrupleComparison { .. } => "quadruple_comparison",
        }
    }
}

/// Graphs and spectra shared by the checks of one model run.
pub struct Workspace<'a> {
    model: &'a StratifiedModel,
    cloud_seed: u64,
    graphs: HashMap<(usize, u64), Rc<DiscreteApproximation>>,
    spectra: HashMap<(usize, u64), Rc<SpectralData>>,
}

impl<'a> Workspace<'a> {
    pub fn new(model: &'a StratifiedModel, seed: u64) -> Self {
        Workspace { model, cloud_seed: derive_seed(seed, 0xc10d), graphs: HashMap::new(), spectra: HashMap::new() }
    }

    pub fn graph(&mut self, nodes: usize, eps: f64) -> Result<Rc<DiscreteApproximation>> {
        let key = (nodes, eps.to_bits());
        if let Some(g) = self.graphs.get(&key) {
            return Ok(g.clone());
        }
        let cloud = sample_points_low_discrepancy(self.model, nodes, self.cloud_seed)?;
        let g = Rc::new(build_graph(self.model, &cloud, eps)?);
        self.graphs.insert(key, g.clone());
        Ok(g)
    }

    /// At least `count` eigenpairs on the `(nodes, eps)` graph.
    pub fn spectrum(&mut self, nodes: usize, eps: f64, count: usize) -> Result<Rc<SpectralData>> {
        let key = (nodes, eps.to_bits());
        if let Some(s) = self.spectra.get(&key).filter(|s| s.count() >= count) {
            return Ok(s.clone());
        }
        let g = self.graph(nodes, eps)?;
        let s = Rc::new(eigen(&g, count)?);
        self.spectra.insert(key, s.clone());
        Ok(s)
    }
}

/// Runs one check with its own seed.
pub fn run_check(ws: &mut Workspace<'_>, spec: &CheckSpec, seed: u64) -> Result<CheckReport> {
    let model = ws.model;
    match spec {
        CheckSpec::BishopGromov { center, radii, k, n, samples } => {
            bishop_gromov_check(model, &resolve_center(model, center)?, radii, *k, *n, *samples, seed)
        }
        CheckSpec::BishopGromovCenters { centers, radii, k, n, samples } => {
            if *centers == 0 {
                return Err(Error::Config("at least one center is required".into()));
            }
            let cloud = sample_points(model, *centers, derive_seed(seed, 0))?;
            let mut worst: Option<(usize, CheckReport)> = None;
            let mut margins = Vec::with_capacity(*centers);
            for (i, x) in cloud.points.iter().enumerate() {
                let r = bishop_gromov_check(model, x, radii, *k, *n, *samples, derive_seed(seed, 1 + i as u64))?;
                margins.push(r.margin);
                if worst.as_ref().is_none_or(|(_, w)| r.margin < w.margin) {
                    worst = Some((i, r));
                }
            }
            let (index, w) = worst.expect("at least one center");
            Ok(CheckReport::new("bishop_gromov_centers", w.margin, w.tolerance, samples * centers, Some(seed))
                .with("center_margins", margins)
                .with("worst_center", &cloud.points[index])
                .with("worst_ratios", &w.diagnostics["ratios"])
                .with("radii", radii))
        }
        CheckSpec::Ahlfors { center, radii, samples } => {
            ahlfors_check(model, &resolve_center(model, center)?, radii, *samples, seed)
        }
        CheckSpec::LaplacianComparison { center, k, n, nodes, eps, masks } => {
            let x = resolve_center(model, center)?;
            let g = ws.graph(*nodes, *eps)?;
            laplacian_comparison_check(model, &x, *k, *n, &g, &masks.unwrap_or_default())
        }
        CheckSpec::LevyGromov { region, ladder, samples } => levy_gromov_check(model, region, ladder, *samples, seed),
        CheckSpec::Bochner { nodes, eps, eigenvalues, k, n, test_function } => {
            let g = ws.graph(*nodes, *eps)?;
            let s = ws.spectrum(*nodes, *eps, *eigenvalues)?;
            let psi = match test_function {
                Some(i) => clipped_test_function(&s, *i, 0.5)?,
                None => vec![1.0; g.len()],
            };
            let mut rows = Vec::new();
            let mut margin = f64::INFINITY;
            for i in 0..*eigenvalues {
                let mut c = vec![0.0; i + 1];
                c[i] = 1.0;
                let r = bochner_check(&g, &s, &c, &psi, *k, *n)?;
                margin = margin.min(r.margin + r.tolerance);
                rows.push((s.eigenvalues[i], r.margin, r.tolerance));
            }
            Ok(CheckReport::new("bochner", margin, 0.0, g.len(), None)
                .with("rows_lambda_margin_tolerance", rows)
                .with("eps", eps)
                .with("test_function", test_function))
        }
        CheckSpec::Lichnerowicz { nodes, eps, tolerance } => {
            let k_reg = model.regular_ricci_bound().ok_or_else(|| {
                Error::Precondition("the Lichnerowicz bound needs an analytic regular-set Ricci bound".into())
            })?;
            let s = ws.spectrum(*nodes, *eps, 2)?;
            lichnerowicz_check(&s, model.dim(), k_reg, *tolerance)
        }
        CheckSpec::CutoffLadder { eps, tolerance } => {
            if eps.len() < 2 || eps.windows(2).any(|w| w[1] >= w[0]) {
                return Err(Error::Config("cut-off ladder must have at least two decreasing values".into()));
            }
            let fams = eps.iter().map(|&e| cutoff_family(model, e, None)).collect::<Result<Vec<_>>>()?;
            let mut margin = f64::INFINITY;
            for w in fams.windows(2) {
                if w[0].grad_sq > 0.0 {
                    margin = margin.min((w[0].grad_sq - w[1].grad_sq) / w[0].grad_sq);
                    margin = margin.min((w[0].laplacian_l1 - w[1].laplacian_l1) / w[0].laplacian_l1);
                }
            }
            let mut worst_rel = 0.0f64;
            for f in &fams {
                if let Some(a) = f.analytic_grad_sq.filter(|a| *a > 0.0) {
                    worst_rel = worst_rel.max((f.grad_sq - a).abs() / a);
                }
            }
            margin = margin.min(tolerance - worst_rel);
            if !margin.is_finite() {
                margin = 0.0;
            }
            let rows: Vec<(f64, f64, f64, Option<f64>)> =
                fams.iter().map(|f| (f.eps, f.grad_sq, f.laplacian_l1, f.analytic_grad_sq)).collect();
            Ok(CheckReport::new("cutoff_ladder", margin, 0.0, 0, None)
                .with("rows_eps_grad_laplacian_analytic", rows)
                .with("max_relative_error", worst_rel))
        }
        CheckSpec::McpDensity { x0_radius, t_grid, samples } => match model {
            StratifiedModel::EuclideanCone { link: LinkSpace::Circle { radius }, truncation_radius } => mcp_density_check(
                TAU * radius,
                *truncation_radius,
                &ConePoint::new(*x0_radius, LinkPoint::Circle(0.0)),
                t_grid,
                *samples,
                seed,
            ),
            _ => Err(Error::unsupported("measure contraction is checked on flat cones only")),
        },
        CheckSpec::AeConvexity { pairs, ladder } => ae_convexity_estimate(model, *pairs, ladder, seed),
        CheckSpec::QuadrupleComparison { p, others, k } => {
            let p = resolve_center(model, p)?;
            let o = others.iter().map(|c| resolve_center(model, c)).collect::<Result<Vec<_>>>()?;
            quadruple_comparison(model, &p, [&o[0], &o[1], &o[2]], *k, 1e-9)
        }
    }
}

/// A check with its expected outcome (pass unless stated otherwise).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfiguredCheck {
    #[serde(flatten)]
    pub spec: CheckSpec,
    #[serde(default = "yes")]
    pub expect_pass: bool,
}

fn yes() -> bool {
    true
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyQuery {
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "N")]
    pub n: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    pub json: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

/// A full experiment: one model, its checks and an explicit seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "schema_version")]
    pub schema: u32,
    pub model: ModelDocument,
    pub seed: u64,
    #[serde(default)]
    pub classify: Option<ClassifyQuery>,
    #[serde(default)]
    pub alexandrov: Option<f64>,
    #[serde(default)]
    pub checks: Vec<ConfiguredCheck>,
    /// Tolerance overrides by check name.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub output: OutputPaths,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid experiment config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::Config(format!("unsupported config schema {}", self.schema)));
        }
        if let Some((name, t)) = self.tolerances.iter().find(|(_, t)| !(**t > 0.0 && t.is_finite())) {
            return Err(Error::Config(format!("tolerance override for {name} must be positive, got {t}")));
        }
        StratifiedModel::try_from(self.model.clone())?;
        Ok(())
    }
}

/// A check result with its reproducibility keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub model_hash: String,
    pub expected_pass: bool,
    pub as_expected: bool,
    #[serde(flatten)]
    pub report: CheckReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: u32,
    pub model: ModelDocument,
    pub model_hash: String,
    pub seed: u64,
    pub verdicts: Vec<CurvatureVerdict>,
    pub checks: Vec<CheckOutcome>,
}

impl RunReport {
    pub fn all_as_expected(&self) -> bool {
        self.checks.iter().all(|c| c.as_expected)
    }
}

fn outcome(model: &StratifiedModel, mut report: CheckReport, expected_pass: bool, overrides: &BTreeMap<String, f64>) -> CheckOutcome {
    if let Some(&t) = overrides.get(&report.check) {
        report.tolerance = t;
        report.pass = report.margin >= -t;
    }
    CheckOutcome { model_hash: model.model_hash(), expected_pass, as_expected: report.pass == expected_pass, report }
}

/// Runs every configured check in order; each check gets `derive_seed(seed, index)`.
pub fn run(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let model = StratifiedModel::try_from(config.model.clone())?;
    let mut verdicts = Vec::new();
    if let Some(q) = config.classify {
        verdicts.push(classify(&model, q.k, q.n));
    }
    if let Some(k) = config.alexandrov {
        verdicts.push(alexandrov_classify(&model, k));
    }
    let mut ws = Workspace::new(&model, config.seed);
    let mut checks = Vec::with_capacity(config.checks.len());
    for (i, c) in config.checks.iter().enumerate() {
        let report = run_check(&mut ws, &c.spec, derive_seed(config.seed, i as u64))?;
        checks.push(outcome(&model, report, c.expect_pass, &config.tolerances));
    }
    Ok(RunReport {
        schema: SCHEMA_VERSION,
        model: ModelDocument::from(&model),
        model_hash: model.model_hash(),
        seed: config.seed,
        verdicts,
        checks,
    })
}

/// CSV summary: one row per check with everything needed to reproduce it.
pub fn summary_csv(rows: &[(&str, &CheckOutcome)]) -> String {
    let mut table =
        CsvTable::new(&["entry", "check", "model_hash", "seed", "tolerance", "margin", "pass", "expected_pass"]);
    for (entry, c) in rows {
        table.push(vec![
            entry.to_string(),
            c.report.check.clone(),
            c.model_hash.clone(),
            c.report.seed.map(|s| s.to_string()).unwrap_or_default(),
            fmt_f64(c.report.tolerance),
            fmt_f64(c.report.margin),
            c.report.pass.to_string(),
            c.expected_pass.to_string(),
        ]);
    }
    table.render()
}

/// Writes the JSON report and CSV summary where the config asks for them.
pub fn write_outputs(report: &RunReport, paths: &OutputPaths) -> Result<()> {
    if let Some(p) = &paths.json {
        write_atomic(p, &serde_json::to_vec_pretty(report)?)?;
    }
    if let Some(p) = &paths.csv {
        let rows: Vec<(&str, &CheckOutcome)> = report.checks.iter().map(|c| ("", c)).collect();
        write_atomic(p, summary_csv(&rows).as_bytes())?;
    }
    Ok(())
}

/// Catalog check with its expectation; designated checks must fail when the
/// angle clause does.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlannedCheck {
    pub spec: CheckSpec,
    pub expect_pass: bool,
    pub designated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CatalogEntry {
    pub name: String,
    #[serde(serialize_with = "as_document")]
    pub model: StratifiedModel,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "N")]
    pub n: f64,
    pub expected_rcd: Expectation,
    /// Alexandrov lower bound queried, and the expected answer.
    pub alexandrov_k: f64,
    pub expected_alexandrov: Expectation,
    pub checks: Vec<PlannedCheck>,
}

fn as_document<S: serde::Serializer>(model: &StratifiedModel, s: S) -> std::result::Result<S::Ok, S::Error> {
    ModelDocument::from(model).serialize(s)
}

fn pass(spec: CheckSpec) -> PlannedCheck {
    PlannedCheck { spec, expect_pass: true, designated: false }
}

fn designated_fail(spec: CheckSpec) -> PlannedCheck {
    PlannedCheck { spec, expect_pass: false, designated: true }
}

fn fail(spec: CheckSpec) -> PlannedCheck {
    PlannedCheck { spec, expect_pass: false, designated: false }
}

const BG_SAMPLES: usize = 40_000;
const BG_CENTERS: usize = 20;
const NODES: usize = 4000;
const LADDER: [f64; 4] = [0.2, 0.1, 0.05, 0.025];

fn bg_centers(radii: &[f64], k: f64, n: usize) -> PlannedCheck {
    pass(CheckSpec::BishopGromovCenters { centers: BG_CENTERS, radii: radii.to_vec(), k, n, samples: BG_SAMPLES })
}

fn ahlfors(center: Center, radii: &[f64]) -> PlannedCheck {
    pass(CheckSpec::Ahlfors { center, radii: radii.to_vec(), samples: 20_000 })
}

fn bochner(eps: f64, k: f64, n: f64) -> PlannedCheck {
    pass(CheckSpec::Bochner { nodes: NODES, eps, eigenvalues: 8, k, n, test_function: None })
}

/// Apex-adjacent quadruple: `p` near the tip, three points spread evenly in angle.
fn cone_quadruple(alpha: f64, expect_pass: bool) -> PlannedCheck {
    let a = TAU / alpha;
    let spec = CheckSpec::QuadrupleComparison {
        p: Center::Radial { r: 0.01, angle: 0.0 },
        others: [0.0, 1.0, 2.0].map(|i| Center::Radial { r: 1.0, angle: a * (alpha / 6.0 + i * alpha / 3.0) }),
        k: 0.0,
    };
    if expect_pass {
        pass(spec)
    } else {
        designated_fail(spec)
    }
}

fn suspension_quadruple(a: f64, expect_pass: bool) -> PlannedCheck {
    let alpha = TAU * a;
    let spec = CheckSpec::QuadrupleComparison {
        p: Center::Radial { r: 0.01, angle: 0.0 },
        others: [0.0, 1.0, 2.0].map(|i| Center::Radial { r: 0.8, angle: (alpha / 6.0 + i * alpha / 3.0) / a }),
        k: 1.0,
    };
    if expect_pass {
        pass(spec)
    } else {
        designated_fail(spec)
    }
}

/// Quadruple inside the product tube of a Fermi sphere: `p` next to the
/// singular circle, three points a third of the cone angle apart.
fn fermi_quadruple(expect_pass: bool) -> PlannedCheck {
    let spec = CheckSpec::QuadrupleComparison {
        p: Center::Radial { r: 0.005, angle: PI / 3.0 },
        others: [0.0, 1.0, 2.0].map(|i| Center::Radial { r: 0.08, angle: i * TAU / 3.0 }),
        k: 1.0,
    };
    if expect_pass {
        pass(spec)
    } else {
        designated_fail(spec)
    }
}

/// The built-in catalog with expected verdicts and cross-check plans.
pub fn catalog() -> Vec<CatalogEntry> {
    let flat = |alpha: f64, r: f64| StratifiedModel::flat_cone(alpha, r).expect("valid cone");
    let susp = |a: f64| StratifiedModel::spherical_suspension(2, TAU * a).expect("valid suspension");
    let fermi = |alpha: f64| StratifiedModel::fermi_sphere(FRAC_PI_2, alpha, 0.4).expect("valid Fermi sphere");
    let half = Region::SuspensionSublevel { t_max: FRAC_PI_2 };
    let north2 = Region::Ball { center: ModelPoint::Link(LinkPoint::Sphere(vec![0.0, 0.0, 1.0])), radius: FRAC_PI_2 };
    let north3 =
        Region::Ball { center: ModelPoint::Link(LinkPoint::Sphere(vec![0.0, 0.0, 0.0, 1.0])), radius: FRAC_PI_2 };
    let sphere_radii = [0.25, 0.5, 1.0, 1.5, 2.5];
    let cone_radii = [0.05, 0.1, 0.2, 0.4, 0.8];
    let edge_radii = [0.0125, 0.025, 0.05, 0.1];
    let cutoff = CheckSpec::CutoffLadder { eps: vec![0.2, 0.1, 0.05, 0.025], tolerance: 0.1 };
    let ae = |pairs: usize| CheckSpec::AeConvexity { pairs, ladder: vec![0.1, 0.05, 0.025, 0.0125] };
    let lap = |center: Center, k: f64| CheckSpec::LaplacianComparison { center, k, n: 2, nodes: NODES, eps: 0.07, masks: None };
    let entry = |name: &str, model: StratifiedModel, k: f64, n: f64, rcd: Expectation, ak: f64, alex: Expectation, checks| {
        CatalogEntry { name: name.to_string(), model, k, n, expected_rcd: rcd, alexandrov_k: ak, expected_alexandrov: alex, checks }
    };
    use Expectation::*;
    vec![
        entry("round sphere S2", StratifiedModel::RoundSphere { dim: 2 }, 1.0, 2.0, Holds, 1.0, Holds, vec![
            bg_centers(&sphere_radii, 1.0, 2),
            ahlfors(Center::Pole, &[0.1, 0.5, 1.0]),
            pass(lap(Center::Pole, 1.0)),
            pass(CheckSpec::LevyGromov { region: north2, ladder: LADDER.to_vec(), samples: 100_000 }),
            bochner(0.07, 1.0, 2.0),
            pass(CheckSpec::Lichnerowicz { nodes: NODES, eps: 0.07, tolerance: 0.07 }),
        ]),
        entry("round sphere S3", StratifiedModel::RoundSphere { dim: 3 }, 2.0, 3.0, Holds, 1.0, Holds, vec![
            bg_centers(&sphere_radii, 2.0, 3),
            ahlfors(Center::Pole, &[0.1, 0.5, 1.0]),
            pass(CheckSpec::LevyGromov { region: north3, ladder: LADDER.to_vec(), samples: 100_000 }),
        ]),
        entry("isolated conical singularity, angle pi", flat(PI, 1.0), 0.0, 2.0, Holds, 0.0, Holds, vec![
            bg_centers(&cone_radii, 0.0, 2),
            ahlfors(Center::Apex, &[0.1, 0.5, 1.0]),
            pass(lap(Center::Apex, 0.0)),
            bochner(0.05, 0.0, 2.0),
            pass(cutoff.clone()),
            pass(CheckSpec::McpDensity { x0_radius: 0.0, t_grid: vec![0.25, 0.5, 0.75], samples: 20_000 }),
            pass(ae(100_000)),
            cone_quadruple(PI, true),
        ]),
        entry("orbifold-type cone C(Circle(1/3))", flat(TAU / 3.0, 1.0), 0.0, 2.0, Holds, 0.0, Holds, vec![
            bg_centers(&cone_radii, 0.0, 2),
            ahlfors(Center::Apex, &[0.1, 0.5, 1.0]),
            pass(cutoff.clone()),
            pass(ae(100_000)),
            cone_quadruple(TAU / 3.0, true),
        ]),
        // The tip of the 2π cone is a regular point, hit with probability ~ε,
        // so the a.e.-convexity slope criterion does not apply there.
        entry("flat cone, angle 2pi", flat(TAU, 1.0), 0.0, 2.0, Holds, 0.0, Holds, vec![
            bg_centers(&cone_radii, 0.0, 2),
            cone_quadruple(TAU, true),
        ]),
        entry("flat cone, angle 3pi", flat(3.0 * PI, 5.0), 0.0, 2.0, Fails, 0.0, Fails, vec![
            designated_fail(CheckSpec::BishopGromov {
                center: Center::Radial { r: 1.0, angle: 0.0 },
                radii: vec![0.25, 0.5, 1.0, 2.0, 4.0],
                k: 0.0,
                n: 2,
                samples: 200_000,
            }),
            cone_quadruple(3.0 * PI, false),
            ahlfors(Center::Apex, &[0.1, 0.5, 1.0]),
            fail(CheckSpec::McpDensity { x0_radius: 1.0, t_grid: vec![0.25, 0.5, 0.75], samples: 20_000 }),
            fail(ae(100_000)),
        ]),
        entry("spherical suspension, a = 0.5", susp(0.5), 1.0, 2.0, Holds, 1.0, Holds, vec![
            bg_centers(&sphere_radii, 1.0, 2),
            ahlfors(Center::Pole, &[0.1, 0.5, 1.0]),
            pass(lap(Center::Pole, 1.0)),
            pass(CheckSpec::LevyGromov { region: half.clone(), ladder: LADDER.to_vec(), samples: 100_000 }),
            bochner(0.07, 1.0, 2.0),
            pass(CheckSpec::Lichnerowicz { nodes: NODES, eps: 0.07, tolerance: 0.07 }),
            pass(cutoff.clone()),
            pass(ae(100_000)),
            suspension_quadruple(0.5, true),
        ]),
        entry("spherical suspension, a = 0.25", susp(0.25), 1.0, 2.0, Holds, 1.0, Holds, vec![
            bg_centers(&sphere_radii, 1.0, 2),
            bochner(0.07, 1.0, 2.0),
            pass(CheckSpec::Lichnerowicz { nodes: NODES, eps: 0.07, tolerance: 0.07 }),
            pass(CheckSpec::LevyGromov { region: half.clone(), ladder: LADDER.to_vec(), samples: 100_000 }),
        ]),
        entry("spherical suspension, a = 1.5", susp(1.5), 1.0, 2.0, Fails, 1.0, Fails, vec![
            designated_fail(CheckSpec::BishopGromov {
                center: Center::Radial { r: 0.5, angle: 0.0 },
                radii: vec![0.1, 0.2, 0.4, 0.8, 1.6],
                k: 1.0,
                n: 2,
                samples: 200_000,
            }),
            suspension_quadruple(1.5, false),
            fail(ae(100_000)),
        ]),
        entry(
            "spherical suspension S3_alpha, a = 0.5",
            StratifiedModel::Suspension { link: LinkSpace::suspension(LinkSpace::Circle { radius: 0.5 }) },
            2.0,
            3.0,
            Holds,
            1.0,
            Holds,
            vec![
                bg_centers(&sphere_radii, 2.0, 3),
                ahlfors(Center::Pole, &[0.1, 0.5, 1.0]),
                pass(CheckSpec::LevyGromov { region: half, ladder: LADDER.to_vec(), samples: 100_000 }),
            ],
        ),
        entry(
            "cone over S2_alpha, a = 0.5",
            StratifiedModel::EuclideanCone { link: LinkSpace::suspension(LinkSpace::Circle { radius: 0.5 }), truncation_radius: 1.0 },
            0.0,
            3.0,
            Holds,
            0.0,
            Holds,
            vec![bg_centers(&cone_radii, 0.0, 3), ahlfors(Center::Apex, &[0.1, 0.5, 1.0])],
        ),
        entry("Fermi sphere, angle pi", fermi(PI), 2.0, 3.0, Indeterminate, 1.0, Indeterminate, vec![
            pass(CheckSpec::BishopGromov {
                center: Center::Radial { r: 0.05, angle: 0.0 },
                radii: edge_radii.to_vec(),
                k: 0.0,
                n: 3,
                samples: 100_000,
            }),
            ahlfors(Center::Radial { r: 0.0, angle: 0.0 }, &[0.05, 0.1, 0.2]),
            pass(CheckSpec::CutoffLadder { eps: vec![0.2, 0.1, 0.05, 0.025], tolerance: 0.1 }),
            pass(ae(20_000)),
            fermi_quadruple(true),
        ]),
        entry("Fermi sphere, angle 3pi", fermi(3.0 * PI), 2.0, 3.0, Fails, 1.0, Fails, vec![fermi_quadruple(false)]),
    ]
}

/// Classification and checks for one catalog entry.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CatalogResult {
    pub name: String,
    pub model_hash: String,
    pub verdict: CurvatureVerdict,
    pub alexandrov: CurvatureVerdict,
    pub verdict_matches: bool,
    pub checks: Vec<CheckOutcome>,
    /// RCD ⇒ every check passes; angle failure ⇒ a designated check fails.
    pub consistent: bool,
}

pub fn run_catalog_entry(entry: &CatalogEntry, seed: u64) -> Result<CatalogResult> {
    let verdict = classify(&entry.model, entry.k, entry.n);
    let alexandrov = alexandrov_classify(&entry.model, entry.alexandrov_k);
    let mut ws = Workspace::new(&entry.model, seed);
    let mut checks = Vec::new();
    for (i, c) in entry.checks.iter().enumerate() {
        let report = run_check(&mut ws, &c.spec, derive_seed(seed, i as u64))?;
        checks.push(outcome(&entry.model, report, c.expect_pass, &BTreeMap::new()));
    }
    let angle_failure = verdict.angle_report.iter().any(|a| !a.admissible);
    let consistent = if verdict.is_rcd {
        checks.iter().all(|c| c.report.pass)
    } else if angle_failure {
        entry.checks.iter().zip(&checks).any(|(p, c)| p.designated && !c.report.pass)
    } else {
        true
    };
    Ok(CatalogResult {
        name: entry.name.clone(),
        model_hash: entry.model.model_hash(),
        verdict_matches: Expectation::of(&verdict) == entry.expected_rcd
            && Expectation::of(&alexandrov) == entry.expected_alexandrov,
        verdict,
        alexandrov,
        checks,
        consistent,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CatalogReport {
    pub schema: u32,
    pub seed: u64,
    pub entries: Vec<CatalogResult>,
}

impl CatalogReport {
    /// Verdicts as expected, cross-consistency holds, every check as planned.
    pub fn success(&self) -> bool {
        self.entries.iter().all(|e| e.verdict_matches && e.consistent && e.checks.iter().all(|c| c.as_expected))
    }

    pub fn csv(&self) -> String {
        let rows: Vec<(&str, &CheckOutcome)> =
            self.entries.iter().flat_map(|e| e.checks.iter().map(move |c| (e.name.as_str(), c))).collect();
        summary_csv(&rows)
    }
}

/// Runs every catalog entry whose name contains `filter` (all when `None`).
pub fn run_catalog(seed: u64, filter: Option<&str>) -> Result<CatalogReport> {
    let entries = catalog()
        .iter()
        .enumerate()
        .filter(|(_, e)| filter.is_none_or(|f| e.name.contains(f)))
        .map(|(i, e)| run_catalog_entry(e, derive_seed(seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(CatalogReport { schema: SCHEMA_VERSION, seed, entries })
}

/// Markdown table of the catalog and its expected verdicts.
pub fn catalog_table() -> String {
    let mut out = String::from("| entry | family | K | N | RCD(K,N) | Alexandrov k | CBB(k) | checks |\n|---|---|---|---|---|---|---|---|\n");
    for e in catalog() {
        let checks: Vec<String> = e
            .checks
            .iter()
            .map(|c| format!("{}{}", c.spec.name(), if c.expect_pass { "" } else { " (fails)" }))
            .collect();
        out.push_str(&format!(
            "| {} | {} | {} | {} | {:?} | {} | {:?} | {} |\n",
            e.name,
            e.model.family(),
            e.k,
            e.n,
            e.expected_rcd,
            e.alexandrov_k,
            e.expected_alexandrov,
            checks.join(", ")
        ));
    }
    out
}

/// Reads a JSON file, mapping failures to configuration errors.
pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("invalid JSON in {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s2_alpha_doc() -> serde_json::Value {
        serde_json::to_value(ModelDocument::from(&StratifiedModel::spherical_suspension(2, PI).unwrap())).unwrap()
    }

    #[test]
    fn missing_seed_is_a_config_error() {
        let text = serde_json::json!({ "model": s2_alpha_doc() }).to_string();
        assert!(matches!(ExperimentConfig::from_json(&text), Err(Error::Config(_))));
    }

    #[test]
    fn classify_only_config() {
        let text = serde_json::json!({ "model": s2_alpha_doc(), "seed": 0, "classify": { "K": 1.0, "N": 2.0 } }).to_string();
        let config = ExperimentConfig::from_json(&text).unwrap();
        let report = run(&config).unwrap();
        assert!(report.verdicts[0].is_rcd && report.checks.is_empty());
    }

    #[test]
    fn negative_tolerance_override_is_rejected() {
        let text = serde_json::json!({ "model": s2_alpha_doc(), "seed": 0, "tolerances": { "ahlfors": -1.0 } }).to_string();
        assert!(matches!(ExperimentConfig::from_json(&text), Err(Error::Config(_))));
    }

    #[test]
    fn check_specs_round_trip() {
        let spec = CheckSpec::BishopGromov {
            center: Center::Radial { r: 1.0, angle: 0.5 },
            radii: vec![0.1, 0.2],
            k: 0.0,
            n: 2,
            samples: 10,
        };
        let c = ConfiguredCheck { spec, expect_pass: false };
        let text = serde_json::to_string(&c).unwrap();
        assert!(text.contains("\"check\":\"bishop_gromov\""));
        assert_eq!(serde_json::from_str::<ConfiguredCheck>(&text).unwrap(), c);
    }

    #[test]
    fn reports_are_reproducible() {
        let text = serde_json::json!({
            "model": s2_alpha_doc(),
            "seed": 11,
            "checks": [
                { "check": "ahlfors", "center": "pole", "radii": [0.2, 0.4], "samples": 2000 },
                { "check": "ae_convexity", "pairs": 2000, "ladder": [0.2, 0.1] }
            ]
        })
        .to_string();
        let config = ExperimentConfig::from_json(&text).unwrap();
        let a = serde_json::to_string(&run(&config).unwrap()).unwrap();
        let b = serde_json::to_string(&run(&config).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn catalog_verdicts_match_expectations() {
        for e in catalog() {
            assert_eq!(Expectation::of(&classify(&e.model, e.k, e.n)), e.expected_rcd, "{}", e.name);
            assert_eq!(Expectation::of(&alexandrov_classify(&e.model, e.alexandrov_k)), e.expected_alexandrov, "{}", e.name);
            if e.expected_rcd == Expectation::Fails {
                assert!(e.checks.iter().any(|c| c.designated), "{} has no designated check", e.name);
            }
        }
        assert!(catalog_table().lines().count() >= catalog().len() + 2);
    }

    #[test]
    fn centers_resolve_on_each_family() {
        let cone = StratifiedModel::flat_cone(PI, 1.0).unwrap();
        assert!(resolve_center(&cone, &Center::Apex).is_ok());
        assert!(resolve_center(&cone, &Center::Pole).is_err());
        let s3 = StratifiedModel::round_sphere(3).unwrap();
        let p = resolve_center(&s3, &Center::Radial { r: 0.3, angle: 1.0 }).unwrap();
        let pole = resolve_center(&s3, &Center::Pole).unwrap();
        assert!((s3.distance(&p, &pole).unwrap() - 0.3).abs() < 1e-12);
    }
}
