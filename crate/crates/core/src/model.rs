//! The catalog of computable model stratified spaces.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cone::{cone_distance, ConePoint};
use crate::error::{Error, Result};
use crate::fermi::{FermiPoint, FermiSphere};
use crate::link::{LinkPoint, LinkSpace};
use crate::numeric::sphere_volume;

/// A singular stratum, described by its codimension and (for codimension
/// two) the cone angle along it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub codimension: usize,
    pub angle: Option<f64>,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StratifiedModel {
    /// Unit round sphere `S^n`.
    RoundSphere { dim: usize },
    /// Exact cone `dr² + r² g_L` over `link`, truncated at `truncation_radius`.
    EuclideanCone { link: LinkSpace, truncation_radius: f64 },
    /// Spherical suspension `dt² + sin²t g_L`.
    Suspension { link: LinkSpace },
    /// Round `S³` with a cone angle inserted along a circle.
    FermiSphere(FermiSphere),
}

/// A point of a [`StratifiedModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelPoint {
    /// Points of round spheres and suspensions, which are themselves links.
    Link(LinkPoint),
    Cone(ConePoint),
    Fermi(FermiPoint),
}

/// Metric tensor and volume density at a chart point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSample {
    pub chart: String,
    pub coordinates: Vec<f64>,
    pub metric: Vec<Vec<f64>>,
    pub density: f64,
}

impl MetricSample {
    pub(crate) fn diagonal(chart: &str, coordinates: Vec<f64>, diag: &[f64]) -> Self {
        let n = diag.len();
        let metric = (0..n)
            .map(|i| (0..n).map(|j| if i == j { diag[i] } else { 0.0 }).collect())
            .collect();
        let density = diag.iter().product::<f64>().sqrt();
        MetricSample { chart: chart.to_string(), coordinates, metric, density }
    }
}

impl StratifiedModel {
    pub fn round_sphere(dim: usize) -> Result<Self> {
        if dim < 1 {
            return Err(Error::domain("round sphere model needs dimension at least 1"));
        }
        Ok(StratifiedModel::RoundSphere { dim })
    }

    pub fn cone(link: LinkSpace, truncation_radius: f64) -> Result<Self> {
        link.validate()?;
        if !(truncation_radius.is_finite() && truncation_radius > 0.0) {
            return Err(Error::domain("cone truncation radius must be positive"));
        }
        Ok(StratifiedModel::EuclideanCone { link, truncation_radius })
    }

    /// Flat two-dimensional cone of total angle `alpha`.
    pub fn flat_cone(alpha: f64, truncation_radius: f64) -> Result<Self> {
        Self::cone(LinkSpace::circle(alpha / TAU)?, truncation_radius)
    }

    pub fn suspension(link: LinkSpace) -> Result<Self> {
        link.validate()?;
        Ok(StratifiedModel::Suspension { link })
    }

    /// `S^n_α`: the `(n − 1)`-fold spherical suspension of a circle of radius
    /// `α / 2π`, an Einstein space with `Ric = n − 1` on its regular set.
    pub fn spherical_suspension(n: usize, alpha: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::domain("S^n_α needs n ≥ 2"));
        }
        let circle = LinkSpace::circle(alpha / TAU)?;
        Self::suspension(LinkSpace::iterated_suspension(circle, n - 2))
    }

    pub fn fermi_sphere(beta: f64, alpha: f64, blend_radius: f64) -> Result<Self> {
        Ok(StratifiedModel::FermiSphere(FermiSphere::new(beta, alpha, blend_radius)?))
    }

    pub fn family(&self) -> &'static str {
        match self {
            StratifiedModel::RoundSphere { .. } => "round_sphere",
            StratifiedModel::EuclideanCone { .. } => "cone",
            StratifiedModel::Suspension { .. } => "suspension",
            StratifiedModel::FermiSphere(_) => "fermi_sphere",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            StratifiedModel::RoundSphere { dim } => *dim,
            StratifiedModel::EuclideanCone { link, .. } | StratifiedModel::Suspension { link } => link.dim() + 1,
            StratifiedModel::FermiSphere(_) => 3,
        }
    }

    /// Round spheres and suspensions viewed as links (they are compact links of
    /// one dimension higher cones).
    pub(crate) fn as_link(&self) -> Option<LinkSpace> {
        match self {
            StratifiedModel::RoundSphere { dim } => Some(LinkSpace::RoundSphere { dim: *dim }),
            StratifiedModel::Suspension { link } => Some(LinkSpace::suspension(link.clone())),
            _ => None,
        }
    }

    pub fn strata(&self) -> Vec<Stratum> {
        match self {
            StratifiedModel::RoundSphere { .. } => Vec::new(),
            StratifiedModel::EuclideanCone { link, .. } | StratifiedModel::Suspension { link } => link.cone_strata(),
            StratifiedModel::FermiSphere(f) => vec![Stratum {
                codimension: 2,
                angle: Some(f.alpha),
                label: "Fermi circle".to_string(),
            }],
        }
    }

    pub fn has_singular_set(&self) -> bool {
        !self.strata().is_empty()
    }

    pub fn diameter(&self) -> f64 {
        match self {
            StratifiedModel::RoundSphere { .. } | StratifiedModel::Suspension { .. } => PI,
            StratifiedModel::EuclideanCone { link, truncation_radius } => {
                // rim-to-rim chord, or apex-to-rim for narrow links
                truncation_radius * if link.diameter() >= PI { 2.0 } else { (2.0 * (0.5 * link.diameter()).sin()).max(1.0) }
            }
            StratifiedModel::FermiSphere(_) => PI,
        }
    }

    /// Total Riemannian volume.
    pub fn volume(&self) -> f64 {
        match self {
            StratifiedModel::RoundSphere { dim } => sphere_volume(*dim),
            StratifiedModel::EuclideanCone { link, truncation_radius } => {
                let n = (link.dim() + 1) as f64;
                link.volume() * truncation_radius.powf(n) / n
            }
            StratifiedModel::Suspension { link } => LinkSpace::suspension(link.clone()).volume(),
            StratifiedModel::FermiSphere(f) => f.volume(),
        }
    }

    /// Analytic Ricci lower bound on the regular set, when one is known.
    pub fn regular_ricci_bound(&self) -> Option<f64> {
        match self {
            StratifiedModel::RoundSphere { dim } => Some(*dim as f64 - 1.0),
            StratifiedModel::Suspension { link } => Some(link.dim() as f64),
            StratifiedModel::EuclideanCone { .. } => Some(0.0),
            StratifiedModel::FermiSphere(_) => None,
        }
    }

    /// Analytic sectional-curvature lower bound on the regular set.
    pub fn sectional_lower_bound(&self) -> Option<f64> {
        match self {
            StratifiedModel::RoundSphere { .. } | StratifiedModel::Suspension { .. } => Some(1.0),
            StratifiedModel::EuclideanCone { .. } => Some(0.0),
            StratifiedModel::FermiSphere(_) => None,
        }
    }

    pub fn validate_point(&self, p: &ModelPoint) -> Result<()> {
        match (self, p) {
            (StratifiedModel::EuclideanCone { link, truncation_radius }, ModelPoint::Cone(c)) => {
                if !(c.r.is_finite() && c.r >= 0.0 && c.r <= *truncation_radius * (1.0 + 1e-12)) {
                    return Err(Error::domain(format!("cone radius {} outside [0, {truncation_radius}]", c.r)));
                }
                link.validate_point(&c.y)
            }
            (StratifiedModel::FermiSphere(f), ModelPoint::Fermi(p)) => f.validate_point(p),
            (m, ModelPoint::Link(y)) if m.as_link().is_some() => m.as_link().unwrap().validate_point(y),
            _ => Err(Error::domain(format!("point variant does not belong to a {} model", self.family()))),
        }
    }

    /// Intrinsic distance between two points of the model.
    pub fn distance(&self, p: &ModelPoint, q: &ModelPoint) -> Result<f64> {
        self.validate_point(p)?;
        self.validate_point(q)?;
        self.distance_unchecked(p, q)
    }

    pub(crate) fn distance_unchecked(&self, p: &ModelPoint, q: &ModelPoint) -> Result<f64> {
        match (self, p, q) {
            (StratifiedModel::EuclideanCone { link, .. }, ModelPoint::Cone(a), ModelPoint::Cone(b)) => {
                Ok(cone_distance(a, b, link))
            }
            (StratifiedModel::FermiSphere(f), ModelPoint::Fermi(a), ModelPoint::Fermi(b)) => f.distance(a, b),
            (m, ModelPoint::Link(a), ModelPoint::Link(b)) => match m.as_link() {
                Some(link) => Ok(link.distance_unchecked(a, b)),
                None => Err(Error::domain("point variant mismatch")),
            },
            _ => Err(Error::domain("point variant mismatch")),
        }
    }

    /// Distance to the singular set, `None` when the model is smooth.
    pub fn singular_distance(&self, p: &ModelPoint) -> Option<f64> {
        match (self, p) {
            (StratifiedModel::EuclideanCone { link, .. }, ModelPoint::Cone(c)) => {
                if link.is_smooth() {
                    return None;
                }
                match link.singular_distance(&c.y) {
                    Some(delta) if delta < PI / 2.0 => Some(c.r * delta.sin()),
                    _ => Some(c.r),
                }
            }
            (StratifiedModel::Suspension { link }, ModelPoint::Link(y)) => {
                LinkSpace::suspension(link.clone()).singular_distance(y)
            }
            (StratifiedModel::FermiSphere(_), ModelPoint::Fermi(p)) => Some(p.r),
            _ => None,
        }
    }

    /// Cross-section of the tangent cone at `x`.
    pub fn tangent_sphere(&self, x: &ModelPoint) -> Result<LinkSpace> {
        self.validate_point(x)?;
        let regular = LinkSpace::RoundSphere { dim: self.dim() - 1 };
        Ok(match (self, x) {
            (StratifiedModel::RoundSphere { .. }, _) => regular,
            (StratifiedModel::EuclideanCone { link, .. }, ModelPoint::Cone(c)) => {
                if c.r == 0.0 {
                    link.clone()
                } else {
                    link.tangent_sphere(&c.y).map(LinkSpace::suspension).unwrap_or(regular)
                }
            }
            (StratifiedModel::Suspension { link }, ModelPoint::Link(y)) => {
                LinkSpace::suspension(link.clone()).tangent_sphere(y).unwrap_or(regular)
            }
            (StratifiedModel::FermiSphere(f), ModelPoint::Fermi(p)) => {
                if p.r == 0.0 {
                    LinkSpace::suspension(LinkSpace::circle(f.alpha / TAU)?)
                } else {
                    regular
                }
            }
            _ => unreachable!("validated above"),
        })
    }

    /// Metric tensor and density at `p` in the model's natural chart.
    pub fn metric_sample(&self, p: &ModelPoint) -> Result<MetricSample> {
        self.validate_point(p)?;
        Ok(match (self, p) {
            (StratifiedModel::EuclideanCone { link, .. }, ModelPoint::Cone(c)) => {
                let mut coords = vec![c.r];
                coords.extend(link.chart_coordinates(&c.y));
                let mut diag = vec![1.0];
                diag.extend(link.metric_diagonal(&coords[1..]).into_iter().map(|g| c.r * c.r * g));
                MetricSample::diagonal("cone", coords, &diag)
            }
            (StratifiedModel::FermiSphere(f), ModelPoint::Fermi(q)) => f.metric_sample(q),
            (m, ModelPoint::Link(y)) => {
                let link = m.as_link().expect("validated");
                let coords = link.chart_coordinates(y);
                let diag = link.metric_diagonal(&coords);
                MetricSample::diagonal(m.family(), coords, &diag)
            }
            _ => unreachable!("validated above"),
        })
    }

    /// Draws one point from the volume measure together with its importance
    /// factor relative to the proposal (1 except on the Fermi blend tube).
    pub(crate) fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> (ModelPoint, f64) {
        match self {
            StratifiedModel::EuclideanCone { link, truncation_radius } => {
                (ModelPoint::Cone(sample_cone_point(link, *truncation_radius, rng)), 1.0)
            }
            StratifiedModel::FermiSphere(f) => f.sample(rng),
            m => {
                let link = m.as_link().expect("sphere or suspension");
                loop {
                    let y = link.sample(rng);
                    // poles carry no mass
                    if let LinkPoint::Suspension { t, .. } = &y {
                        if *t <= 0.0 || *t >= PI {
                            continue;
                        }
                    }
                    break (ModelPoint::Link(y), 1.0);
                }
            }
        }
    }

    /// Volume of the proposal region used by [`Self::sample_point`].
    pub(crate) fn proposal_volume(&self) -> f64 {
        match self {
            StratifiedModel::FermiSphere(_) => sphere_volume(3),
            m => m.volume(),
        }
    }

    /// Stable identifier: hex SHA-256 of the canonical JSON document.
    pub fn model_hash(&self) -> String {
        let doc = serde_json::to_string(&ModelDocument::from(self)).expect("model serializes");
        let digest = Sha256::digest(doc.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

pub(crate) fn sample_cone_point<R: Rng + ?Sized>(link: &LinkSpace, radius: f64, rng: &mut R) -> ConePoint {
    let n = (link.dim() + 1) as f64;
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return ConePoint { r: radius * u.powf(1.0 / n), y: link.sample(rng) };
        }
    }
}

/// On-disk model description: `{ "schema": 1, "family": ..., "params": {...}, "strata": [...] }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    #[serde(default = "schema_version")]
    pub schema: u32,
    pub family: String,
    pub params: serde_json::Value,
    #[serde(default)]
    pub strata: Vec<Stratum>,
}

fn schema_version() -> u32 {
    1
}

#[derive(Deserialize)]
struct ConeParams {
    link: LinkSpace,
    truncation_radius: f64,
}

#[derive(Deserialize)]
struct SuspensionParams {
    link: LinkSpace,
}

#[derive(Deserialize)]
struct SphereParams {
    dim: usize,
}

#[derive(Deserialize)]
struct FermiParams {
    beta: f64,
    alpha: f64,
    blend_radius: f64,
}

impl From<&StratifiedModel> for ModelDocument {
    fn from(model: &StratifiedModel) -> Self {
        let params = match model {
            StratifiedModel::RoundSphere { dim } => serde_json::json!({ "dim": dim }),
            StratifiedModel::EuclideanCone { link, truncation_radius } => {
                serde_json::json!({ "link": link, "truncation_radius": truncation_radius })
            }
            StratifiedModel::Suspension { link } => serde_json::json!({ "link": link }),
            StratifiedModel::FermiSphere(f) => serde_json::json!({
                "beta": f.beta,
                "alpha": f.alpha,
                "blend_radius": f.blend_radius,
            }),
        };
        ModelDocument { schema: 1, family: model.family().to_string(), params, strata: model.strata() }
    }
}

impl TryFrom<ModelDocument> for StratifiedModel {
    type Error = Error;

    fn try_from(doc: ModelDocument) -> Result<Self> {
        if doc.schema != 1 {
            return Err(Error::Config(format!("unsupported model schema {}", doc.schema)));
        }
        let bad = |e: serde_json::Error| Error::Config(format!("bad {} params: {e}", doc.family));
        let model = match doc.family.as_str() {
            "round_sphere" => {
                let p: SphereParams = serde_json::from_value(doc.params.clone()).map_err(bad)?;
                StratifiedModel::round_sphere(p.dim)?
            }
            "cone" => {
                let p: ConeParams = serde_json::from_value(doc.params.clone()).map_err(bad)?;
                StratifiedModel::cone(p.link, p.truncation_radius)?
            }
            "suspension" => {
                let p: SuspensionParams = serde_json::from_value(doc.params.clone()).map_err(bad)?;
                StratifiedModel::suspension(p.link)?
            }
            "fermi_sphere" => {
                let p: FermiParams = serde_json::from_value(doc.params.clone()).map_err(bad)?;
                StratifiedModel::fermi_sphere(p.beta, p.alpha, p.blend_radius)?
            }
            other => return Err(Error::Config(format!("unknown model family `{other}`"))),
        };
        if !doc.strata.is_empty() {
            let expected = model.strata();
            let matches = expected.len() == doc.strata.len()
                && expected.iter().zip(&doc.strata).all(|(a, b)| {
                    a.codimension == b.codimension
                        && match (a.angle, b.angle) {
                            (Some(x), Some(y)) => (x - y).abs() <= 1e-9 * x.abs().max(1.0),
                            (None, None) => true,
                            _ => false,
                        }
                });
            if !matches {
                return Err(Error::Config("declared strata do not match the model parameters".into()));
            }
        }
        Ok(model)
    }
}

impl Serialize for StratifiedModel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        ModelDocument::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for StratifiedModel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let doc = ModelDocument::deserialize(deserializer)?;
        StratifiedModel::try_from(doc).map_err(serde::de::Error::custom)
    }
}
