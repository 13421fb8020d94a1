//! Compact links: circles, round spheres and their iterated spherical
//! suspensions, with exact intrinsic distances.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Stratum;
use crate::numeric::{sine_power_integral, sphere_volume, unit_vector_distance};

const UNIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LinkSpace {
    /// Circle of radius `radius` (length `2π·radius`).
    Circle { radius: f64 },
    /// Unit round sphere `S^dim`.
    RoundSphere { dim: usize },
    /// Spherical suspension `[0, π] × base` with metric `dt² + sin²t g_base`.
    Suspension { base: Box<LinkSpace> },
}

/// A point of a [`LinkSpace`].
///
/// Circle points are angles in `[0, 2π)`; the arc-length coordinate is
/// `radius · angle`. Suspension points are `(t, base point)` with `t ∈ [0, π]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkPoint {
    Circle(f64),
    Sphere(Vec<f64>),
    Suspension { t: f64, base: Box<LinkPoint> },
}

impl LinkPoint {
    /// Circle point at arc length `s` on a circle of radius `radius`.
    pub fn circle_arc(radius: f64, s: f64) -> Self {
        LinkPoint::Circle((s / radius).rem_euclid(TAU))
    }

    pub fn suspension(t: f64, base: LinkPoint) -> Self {
        LinkPoint::Suspension { t, base: Box::new(base) }
    }
}

impl LinkSpace {
    pub fn circle(radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::domain(format!("circle radius must be positive, got {radius}")));
        }
        Ok(LinkSpace::Circle { radius })
    }

    pub fn round_sphere(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::domain("round sphere dimension must be at least 1"));
        }
        Ok(LinkSpace::RoundSphere { dim })
    }

    pub fn suspension(base: LinkSpace) -> Self {
        LinkSpace::Suspension { base: Box::new(base) }
    }

    /// `count`-fold spherical suspension of `base`.
    pub fn iterated_suspension(base: LinkSpace, count: usize) -> Self {
        (0..count).fold(base, |acc, _| LinkSpace::suspension(acc))
    }

    /// Checks parameters recursively (deserialized values bypass the constructors).
    pub fn validate(&self) -> Result<()> {
        match self {
            LinkSpace::Circle { radius } => LinkSpace::circle(*radius).map(|_| ()),
            LinkSpace::RoundSphere { dim } => LinkSpace::round_sphere(*dim).map(|_| ()),
            LinkSpace::Suspension { base } => base.validate(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            LinkSpace::Circle { .. } => 1,
            LinkSpace::RoundSphere { dim } => *dim,
            LinkSpace::Suspension { base } => base.dim() + 1,
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            LinkSpace::Circle { radius } => PI * radius,
            LinkSpace::RoundSphere { .. } | LinkSpace::Suspension { .. } => PI,
        }
    }

    pub fn volume(&self) -> f64 {
        match self {
            LinkSpace::Circle { radius } => TAU * radius,
            LinkSpace::RoundSphere { dim } => sphere_volume(*dim),
            LinkSpace::Suspension { base } => base.volume() * sine_power_integral(base.dim()),
        }
    }

    /// True when the link has no singular strata. Circles always count as
    /// carrying an angle stratum, even at radius one.
    pub fn is_smooth(&self) -> bool {
        match self {
            LinkSpace::Circle { .. } => false,
            LinkSpace::RoundSphere { .. } => true,
            LinkSpace::Suspension { base } => base.is_smooth(),
        }
    }

    /// Radius of the circle at the bottom of the suspension tower, if any.
    pub fn circle_radius(&self) -> Option<f64> {
        match self {
            LinkSpace::Circle { radius } => Some(*radius),
            LinkSpace::RoundSphere { .. } => None,
            LinkSpace::Suspension { base } => base.circle_radius(),
        }
    }

    /// Strata of the cone `C(self)` (equivalently of any space whose tangent
    /// cone at a point is `C(self)`), with codimensions measured there.
    pub fn cone_strata(&self) -> Vec<Stratum> {
        match self {
            LinkSpace::Circle { radius } => vec![Stratum {
                codimension: 2,
                angle: Some(TAU * radius),
                label: format!("cone angle over circle of radius {radius}"),
            }],
            LinkSpace::RoundSphere { .. } => Vec::new(),
            LinkSpace::Suspension { base } => {
                let mut strata = base.cone_strata();
                if !base.is_smooth() {
                    strata.push(Stratum {
                        codimension: base.dim() + 2,
                        angle: None,
                        label: format!("tip of cone over {}-dimensional suspension", base.dim() + 1),
                    });
                }
                strata
            }
        }
    }

    pub fn validate_point(&self, p: &LinkPoint) -> Result<()> {
        match (self, p) {
            (LinkSpace::Circle { .. }, LinkPoint::Circle(theta)) => {
                if theta.is_finite() && (0.0..TAU).contains(theta) {
                    Ok(())
                } else {
                    Err(Error::domain(format!("circle angle {theta} outside [0, 2π)")))
                }
            }
            (LinkSpace::RoundSphere { dim }, LinkPoint::Sphere(x)) => {
                if x.len() != dim + 1 {
                    return Err(Error::domain(format!(
                        "sphere point has {} coordinates, expected {}",
                        x.len(),
                        dim + 1
                    )));
                }
                let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > UNIT_TOL {
                    return Err(Error::domain(format!("sphere point has norm {norm}")));
                }
                Ok(())
            }
            (LinkSpace::Suspension { base }, LinkPoint::Suspension { t, base: b }) => {
                if !(t.is_finite() && (0.0..=PI).contains(t)) {
                    return Err(Error::domain(format!("suspension coordinate {t} outside [0, π]")));
                }
                base.validate_point(b)
            }
            _ => Err(Error::domain("point variant does not match link variant")),
        }
    }

    /// Intrinsic geodesic distance.
    pub fn distance(&self, p: &LinkPoint, q: &LinkPoint) -> Result<f64> {
        self.validate_point(p)?;
        self.validate_point(q)?;
        Ok(self.distance_unchecked(p, q))
    }

    pub(crate) fn distance_unchecked(&self, p: &LinkPoint, q: &LinkPoint) -> f64 {
        match (self, p, q) {
            (LinkSpace::Circle { radius }, LinkPoint::Circle(a), LinkPoint::Circle(b)) => {
                let gap = (a - b).abs().rem_euclid(TAU);
                radius * gap.min(TAU - gap)
            }
            (LinkSpace::RoundSphere { .. }, LinkPoint::Sphere(x), LinkPoint::Sphere(y)) => {
                unit_vector_distance(x, y)
            }
            (
                LinkSpace::Suspension { base },
                LinkPoint::Suspension { t, base: y },
                LinkPoint::Suspension { t: s, base: z },
            ) => {
                let gap = if t.sin() == 0.0 || s.sin() == 0.0 {
                    0.0
                } else {
                    base.distance_unchecked(y, z).min(PI)
                };
                suspension_haversine(*t, *s, gap)
            }
            _ => f64::NAN,
        }
    }

    /// Distance from `p` to the singular set of the link, `None` when the
    /// link is smooth.
    pub fn singular_distance(&self, p: &LinkPoint) -> Option<f64> {
        match (self, p) {
            (LinkSpace::Suspension { base }, LinkPoint::Suspension { t, base: y }) => {
                if base.is_smooth() {
                    return None;
                }
                let to_poles = t.min(PI - t);
                match base.singular_distance(y) {
                    Some(delta) if delta < PI / 2.0 => Some((t.sin() * delta.sin()).asin().min(to_poles)),
                    _ => Some(to_poles),
                }
            }
            _ => None,
        }
    }

    /// Tangent sphere of the link at `p`, `None` at regular points.
    pub fn tangent_sphere(&self, p: &LinkPoint) -> Option<LinkSpace> {
        match (self, p) {
            (LinkSpace::Suspension { base }, LinkPoint::Suspension { t, base: y }) => {
                if *t == 0.0 || *t == PI {
                    if base.is_smooth() {
                        None
                    } else {
                        Some((**base).clone())
                    }
                } else {
                    base.tangent_sphere(y).map(LinkSpace::suspension)
                }
            }
            _ => None,
        }
    }

    /// Draw a point from the normalized Riemannian measure.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> LinkPoint {
        match self {
            LinkSpace::Circle { .. } => LinkPoint::Circle(rng.random::<f64>() * TAU),
            LinkSpace::RoundSphere { dim } => loop {
                let x: Vec<f64> = (0..=*dim).map(|_| StandardNormal.sample(rng)).collect();
                let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 1e-12 {
                    break LinkPoint::Sphere(x.into_iter().map(|v| v / norm).collect());
                }
            },
            LinkSpace::Suspension { base } => {
                let t = sample_sine_power(base.dim(), rng);
                LinkPoint::suspension(t, base.sample(rng))
            }
        }
    }

    /// Chart coordinates of `p`: circle angle, hyperspherical angles, or
    /// `(t, base coordinates)` for suspensions.
    pub fn chart_coordinates(&self, p: &LinkPoint) -> Vec<f64> {
        match (self, p) {
            (LinkSpace::Circle { .. }, LinkPoint::Circle(theta)) => vec![*theta],
            (LinkSpace::RoundSphere { .. }, LinkPoint::Sphere(x)) => hyperspherical_angles(x),
            (LinkSpace::Suspension { base }, LinkPoint::Suspension { t, base: y }) => {
                let mut c = vec![*t];
                c.extend(base.chart_coordinates(y));
                c
            }
            _ => Vec::new(),
        }
    }

    /// Diagonal of the metric tensor in the chart of [`Self::chart_coordinates`].
    pub fn metric_diagonal(&self, coords: &[f64]) -> Vec<f64> {
        match self {
            LinkSpace::Circle { radius } => vec![radius * radius],
            LinkSpace::RoundSphere { dim } => {
                let mut diag = Vec::with_capacity(*dim);
                let mut warp = 1.0;
                for i in 0..*dim {
                    diag.push(warp);
                    warp *= coords[i].sin().powi(2);
                }
                diag
            }
            LinkSpace::Suspension { base } => {
                let s2 = coords[0].sin().powi(2);
                let mut diag = vec![1.0];
                diag.extend(base.metric_diagonal(&coords[1..]).into_iter().map(|g| s2 * g));
                diag
            }
        }
    }
}

/// Spherical law of cosines in haversine form:
/// `hav d = hav(t − s) + sin t sin s hav(gap)`.
pub(crate) fn suspension_haversine(t: f64, s: f64, gap: f64) -> f64 {
    let h = (0.5 * (t - s)).sin().powi(2) + t.sin() * s.sin() * (0.5 * gap).sin().powi(2);
    2.0 * h.clamp(0.0, 1.0).sqrt().asin()
}

/// Sample `t ∈ [0, π]` with density proportional to `sin^m t`.
pub(crate) fn sample_sine_power<R: Rng + ?Sized>(m: usize, rng: &mut R) -> f64 {
    match m {
        0 => rng.random::<f64>() * PI,
        1 => (1.0 - 2.0 * rng.random::<f64>()).clamp(-1.0, 1.0).acos(),
        _ => loop {
            let t = rng.random::<f64>() * PI;
            if rng.random::<f64>() < t.sin().powi(m as i32) {
                break t;
            }
        },
    }
}

fn hyperspherical_angles(x: &[f64]) -> Vec<f64> {
    let m = x.len() - 1;
    let mut angles = Vec::with_capacity(m);
    for i in 0..m.saturating_sub(1) {
        let tail = x[i + 1..].iter().map(|v| v * v).sum::<f64>().sqrt();
        angles.push(tail.atan2(x[i]));
    }
    angles.push(x[m].atan2(x[m - 1]).rem_euclid(TAU));
    angles
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn circle_distance_and_diameter() {
        let c = LinkSpace::circle(0.5).unwrap();
        let d = c.distance(&LinkPoint::Circle(0.0), &LinkPoint::Circle(PI)).unwrap();
        assert!((d - 0.5 * PI).abs() < 1e-15);
        assert!((LinkSpace::circle(1.5).unwrap().diameter() - 1.5 * PI).abs() < 1e-15);
        // wrap-around
        let d = c.distance(&LinkPoint::Circle(0.1), &LinkPoint::Circle(TAU - 0.1)).unwrap();
        assert!((d - 0.1).abs() < 1e-12);
    }

    #[test]
    fn sphere_antipodes_are_pi_apart() {
        let s = LinkSpace::round_sphere(2).unwrap();
        let d = s
            .distance(&LinkPoint::Sphere(vec![0.0, 0.0, 1.0]), &LinkPoint::Sphere(vec![0.0, 0.0, -1.0]))
            .unwrap();
        assert!((d - PI).abs() < 1e-15);
        assert_eq!(LinkSpace::round_sphere(3).unwrap().diameter(), PI);
    }

    #[test]
    fn suspension_poles_are_pi_apart() {
        let s = LinkSpace::suspension(LinkSpace::circle(0.5).unwrap());
        let p = LinkPoint::suspension(0.0, LinkPoint::Circle(0.0));
        let q = LinkPoint::suspension(PI, LinkPoint::Circle(1.0));
        assert!((s.distance(&p, &q).unwrap() - PI).abs() < 1e-15);
        assert_eq!(s.diameter(), PI);
        assert_eq!(LinkSpace::suspension(LinkSpace::circle(0.3).unwrap()).diameter(), PI);
    }

    #[test]
    fn dimensions_recurse() {
        let s = LinkSpace::iterated_suspension(LinkSpace::circle(0.2).unwrap(), 3);
        assert_eq!(s.dim(), 4);
        assert_eq!(LinkSpace::round_sphere(3).unwrap().dim(), 3);
    }

    #[test]
    fn invalid_coordinates_are_domain_errors() {
        let c = LinkSpace::circle(1.0).unwrap();
        assert!(matches!(
            c.distance(&LinkPoint::Circle(7.0), &LinkPoint::Circle(0.0)),
            Err(Error::Domain(_))
        ));
        let s = LinkSpace::suspension(c.clone());
        let bad = LinkPoint::suspension(4.0, LinkPoint::Circle(0.0));
        assert!(matches!(s.distance(&bad, &bad), Err(Error::Domain(_))));
        assert!(LinkSpace::circle(-1.0).is_err());
        assert!(LinkSpace::round_sphere(0).is_err());
        let wrong_len = LinkPoint::Sphere(vec![1.0, 0.0]);
        assert!(LinkSpace::round_sphere(2).unwrap().validate_point(&wrong_len).is_err());
    }

    #[test]
    fn suspension_volume_matches_closed_form() {
        let a = 0.4;
        let s = LinkSpace::suspension(LinkSpace::circle(a).unwrap());
        assert!((s.volume() - 4.0 * PI * a).abs() < 1e-12);
        let s3 = LinkSpace::suspension(LinkSpace::round_sphere(2).unwrap());
        assert!((s3.volume() - 2.0 * PI * PI).abs() < 1e-12);
    }

    #[test]
    fn suspension_of_unit_circle_is_round_sphere() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let susp = LinkSpace::suspension(LinkSpace::circle(1.0).unwrap());
        for _ in 0..200 {
            let (p, q) = (susp.sample(&mut rng), susp.sample(&mut rng));
            let embed = |p: &LinkPoint| match p {
                LinkPoint::Suspension { t, base } => match **base {
                    LinkPoint::Circle(th) => vec![t.sin() * th.cos(), t.sin() * th.sin(), t.cos()],
                    _ => unreachable!(),
                },
                _ => unreachable!(),
            };
            let exact = unit_vector_distance(&embed(&p), &embed(&q));
            assert!((susp.distance(&p, &q).unwrap() - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_distance_of_football() {
        let s = LinkSpace::suspension(LinkSpace::circle(0.5).unwrap());
        let p = LinkPoint::suspension(0.3, LinkPoint::Circle(2.0));
        assert!((s.singular_distance(&p).unwrap() - 0.3).abs() < 1e-15);
        let smooth = LinkSpace::suspension(LinkSpace::round_sphere(1).unwrap());
        assert!(smooth.singular_distance(&LinkPoint::suspension(0.3, LinkPoint::Sphere(vec![1.0, 0.0]))).is_none());
    }

    #[test]
    fn tangent_spheres_of_links() {
        let inner = LinkSpace::suspension(LinkSpace::circle(0.5).unwrap());
        let outer = LinkSpace::suspension(inner.clone());
        let pole = LinkPoint::suspension(0.0, LinkPoint::suspension(1.0, LinkPoint::Circle(0.0)));
        assert_eq!(outer.tangent_sphere(&pole), Some(inner.clone()));
        let on_edge = LinkPoint::suspension(1.0, LinkPoint::suspension(0.0, LinkPoint::Circle(0.0)));
        assert_eq!(
            outer.tangent_sphere(&on_edge),
            Some(LinkSpace::suspension(LinkSpace::circle(0.5).unwrap()))
        );
        let regular = LinkPoint::suspension(1.0, LinkPoint::suspension(1.0, LinkPoint::Circle(0.0)));
        assert_eq!(outer.tangent_sphere(&regular), None);
    }

    #[test]
    fn sine_power_sampler_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200_000;
        let mean_cos2: f64 = (0..n).map(|_| sample_sine_power(2, &mut rng).cos().powi(2)).sum::<f64>() / n as f64;
        // E[cos² t] under sin² t / (π/2) is 1/4
        assert!((mean_cos2 - 0.25).abs() < 0.005);
    }
}
