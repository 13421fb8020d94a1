//! Exact distances, geodesics and comparison tests on cones and suspensions.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::{LinkPoint, LinkSpace};
use crate::model::{ModelPoint, StratifiedModel};
use crate::numeric::{cos_k, sin_k};
use crate::report::{fmt_f64, CheckReport, CsvTable};

/// Point `(r, y)` of a cone over a link; `r = 0` is the apex for every `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConePoint {
    pub r: f64,
    pub y: LinkPoint,
}

impl ConePoint {
    pub fn new(r: f64, y: LinkPoint) -> Self {
        ConePoint { r, y }
    }

    pub fn is_apex(&self) -> bool {
        self.r == 0.0
    }
}

/// `sqrt(t² + s² − 2ts cos(gap ∧ π))`, in a form that stays accurate for
/// nearby points.
pub fn cone_distance_raw(t: f64, s: f64, gap: f64) -> f64 {
    let h = (0.5 * gap.min(PI)).sin();
    ((t - s).powi(2) + 4.0 * t * s * h * h).sqrt()
}

/// Distance on the exact cone `C(link)`.
pub fn cone_distance(p: &ConePoint, q: &ConePoint, link: &LinkSpace) -> f64 {
    if p.r == 0.0 || q.r == 0.0 {
        return (p.r - q.r).abs();
    }
    cone_distance_raw(p.r, q.r, link.distance_unchecked(&p.y, &q.y))
}

/// Distance on the spherical suspension of `link`; `p` and `q` must be
/// suspension points `(t, y)`.
pub fn suspension_distance(p: &LinkPoint, q: &LinkPoint, link: &LinkSpace) -> Result<f64> {
    let susp = LinkSpace::suspension(link.clone());
    susp.distance(p, q)
}

/// True iff a minimizing geodesic between `(t, y)` and `(s, z)` runs through
/// the apex, i.e. `d_link(y, z) ≥ π`.
pub fn geodesic_hits_apex(link: &LinkSpace, y: &LinkPoint, z: &LinkPoint) -> Result<bool> {
    Ok(link.distance(y, z)? >= PI)
}

/// Signed shortest angular displacement from `a` to `b` in `(−π, π]`.
fn signed_gap(a: f64, b: f64) -> f64 {
    let d = (b - a).rem_euclid(TAU);
    if d > PI {
        d - TAU
    } else {
        d
    }
}

/// Minimizing geodesic of a flat cone, developed isometrically onto the plane
/// with the start point on the positive x-axis.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatConeGeodesic {
    pub alpha: f64,
    pub start: [f64; 2],
    pub end: [f64; 2],
    pub length: f64,
    start_angle: f64,
    orientation: f64,
}

impl FlatConeGeodesic {
    fn factor(&self) -> f64 {
        self.alpha / TAU
    }

    pub fn planar(&self, t: f64) -> [f64; 2] {
        [
            (1.0 - t) * self.start[0] + t * self.end[0],
            (1.0 - t) * self.start[1] + t * self.end[1],
        ]
    }

    /// Point at parameter `t ∈ [0, 1]` (constant speed).
    pub fn point(&self, t: f64) -> ConePoint {
        let [x, y] = self.planar(t);
        let r = x.hypot(y);
        let psi = y.atan2(x);
        let angle = (self.start_angle + self.orientation * psi / self.factor()).rem_euclid(TAU);
        ConePoint { r, y: LinkPoint::Circle(angle) }
    }

    /// Closest approach of the segment to the apex.
    pub fn apex_distance(&self) -> f64 {
        let [ax, ay] = self.start;
        let [bx, by] = self.end;
        let (dx, dy) = (bx - ax, by - ay);
        let len2 = dx * dx + dy * dy;
        if len2 == 0.0 {
            return ax.hypot(ay);
        }
        let u = (-(ax * dx + ay * dy) / len2).clamp(0.0, 1.0);
        (ax + u * dx).hypot(ay + u * dy)
    }

    /// `(t, r, link angle)` samples for plotting.
    pub fn polyline(&self, segments: usize) -> Vec<(f64, Vec<f64>)> {
        (0..=segments)
            .map(|i| {
                let t = i as f64 / segments as f64;
                let p = self.point(t);
                let angle = match p.y {
                    LinkPoint::Circle(a) => a,
                    _ => unreachable!(),
                };
                (t * self.length, vec![p.r, angle])
            })
            .collect()
    }
}

fn circle_angle(p: &ConePoint) -> Result<f64> {
    match p.y {
        LinkPoint::Circle(a) if a.is_finite() && (0.0..TAU).contains(&a) => Ok(a),
        _ => Err(Error::domain("flat cone points need circle link angles in [0, 2π)")),
    }
}

/// Develops the flat cone of angle `alpha` onto a planar sector and returns
/// the straight segment between `p` and `q`.
pub fn unfold_flat_cone(alpha: f64, p: &ConePoint, q: &ConePoint) -> Result<FlatConeGeodesic> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::domain("cone angle must be positive"));
    }
    if p.r < 0.0 || q.r < 0.0 {
        return Err(Error::domain("negative cone radius"));
    }
    let k = alpha / TAU;
    let (a, b) = (circle_angle(p)?, circle_angle(q)?);
    let gap = signed_gap(a, b);
    // for an apex endpoint the direction is immaterial: align it with the other point
    let gap = if p.r == 0.0 || q.r == 0.0 { 0.0 } else { gap };
    let cone_gap = k * gap.abs();
    if cone_gap >= PI {
        return Err(Error::Precondition(format!(
            "angular separation {cone_gap:.6} ≥ π: the minimizing geodesic is the two-segment path through the apex"
        )));
    }
    let start_angle = if p.r == 0.0 { b } else { a };
    let start = [p.r, 0.0];
    let end = [q.r * cone_gap.cos(), q.r * cone_gap.sin()];
    let length = (end[0] - start[0]).hypot(end[1] - start[1]);
    Ok(FlatConeGeodesic {
        alpha,
        start,
        end,
        length,
        start_angle,
        orientation: if gap < 0.0 { -1.0 } else { 1.0 },
    })
}

/// Point at fraction `t` along a minimizing geodesic from `p` to `q` in the
/// flat cone of angle `alpha`, taking the apex route when the angular gap is
/// at least π.
pub fn flat_cone_interpolate(alpha: f64, p: &ConePoint, q: &ConePoint, t: f64) -> Result<ConePoint> {
    match unfold_flat_cone(alpha, p, q) {
        Ok(g) => Ok(g.point(t)),
        Err(Error::Precondition(_)) => {
            let total = p.r + q.r;
            let s = t * total;
            Ok(if s <= p.r {
                ConePoint { r: p.r - s, y: p.y.clone() }
            } else {
                ConePoint { r: s - p.r, y: q.y.clone() }
            })
        }
        Err(e) => Err(e),
    }
}

/// Polyline of model points with per-segment lengths in the model metric.
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonalCurve {
    pub vertices: Vec<ModelPoint>,
    pub segment_lengths: Vec<f64>,
}

impl PolygonalCurve {
    pub fn new(model: &StratifiedModel, vertices: Vec<ModelPoint>) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(Error::argument("a curve needs at least two vertices"));
        }
        for v in &vertices {
            model.validate_point(v)?;
        }
        let segment_lengths = vertices
            .windows(2)
            .map(|w| model.distance_unchecked(&w[0], &w[1]))
            .collect::<Result<Vec<_>>>()?;
        Ok(PolygonalCurve { vertices, segment_lengths })
    }

    pub fn length(&self) -> f64 {
        self.segment_lengths.iter().sum()
    }
}

/// Outcome of [`perturb_curve_off_singular`].
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePerturbation {
    pub curve: PolygonalCurve,
    /// Radius of the detour arc, `None` when the curve was left unchanged.
    pub detour_radius: Option<f64>,
}

/// Radial coordinate and link point of a cone or suspension vertex, if the
/// model is one with a circle link.
fn radial_parts<'a>(model: &StratifiedModel, p: &'a ModelPoint) -> Option<(f64, &'a LinkPoint)> {
    match (model, p) {
        (StratifiedModel::EuclideanCone { .. }, ModelPoint::Cone(c)) => Some((c.r, &c.y)),
        (StratifiedModel::Suspension { .. }, ModelPoint::Link(LinkPoint::Suspension { t, base })) => {
            Some((*t, base.as_ref()))
        }
        _ => None,
    }
}

fn make_radial(model: &StratifiedModel, r: f64, y: LinkPoint) -> ModelPoint {
    match model {
        StratifiedModel::EuclideanCone { .. } => ModelPoint::Cone(ConePoint { r, y }),
        _ => ModelPoint::Link(LinkPoint::suspension(r, y)),
    }
}

/// Replaces the passage of `curve` through the apex (or suspension pole) by
/// an arc at small radius δ, keeping the endpoints and adding at most `eps`
/// to the length. δ = ε / max(ℓ, 1), with ℓ the link distance between the
/// incoming and outgoing directions, capped at half the neighbouring radii.
pub fn perturb_curve_off_singular(
    model: &StratifiedModel,
    curve: &PolygonalCurve,
    eps: f64,
) -> Result<CurvePerturbation> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::argument("perturbation length ε must be positive"));
    }
    let link = match model {
        StratifiedModel::EuclideanCone { link, .. } | StratifiedModel::Suspension { link } => link.clone(),
        _ => return Err(Error::unsupported("curve perturbation needs a flat cone or suspension")),
    };
    let LinkSpace::Circle { radius } = link else {
        return Err(Error::unsupported("curve perturbation is implemented for circle links"));
    };

    // make apex passages explicit: split segments whose link gap is ≥ π
    let mut verts: Vec<ModelPoint> = Vec::with_capacity(curve.vertices.len() + 1);
    for (i, v) in curve.vertices.iter().enumerate() {
        if i > 0 && matches!(model, StratifiedModel::EuclideanCone { .. }) {
            let prev = &curve.vertices[i - 1];
            if let (Some((r0, y0)), Some((r1, y1))) = (radial_parts(model, prev), radial_parts(model, v)) {
                if r0 > 0.0 && r1 > 0.0 && link.distance_unchecked(y0, y1) >= PI {
                    verts.push(make_radial(model, 0.0, y0.clone()));
                }
            }
        }
        verts.push(v.clone());
    }

    let apex_positions: Vec<usize> = verts
        .iter()
        .enumerate()
        .filter(|(_, v)| radial_parts(model, v).is_some_and(|(r, _)| r == 0.0))
        .map(|(i, _)| i)
        .collect();
    if apex_positions.is_empty() {
        return Ok(CurvePerturbation { curve: curve.clone(), detour_radius: None });
    }
    if apex_positions.len() > 1 {
        return Err(Error::Precondition("curve meets the singular point more than once".into()));
    }
    let i = apex_positions[0];
    if i == 0 || i + 1 == verts.len() {
        return Err(Error::Precondition("curve endpoint lies on the singular set".into()));
    }
    let (r_in, y_in) = radial_parts(model, &verts[i - 1]).expect("radial vertex");
    let (r_out, y_out) = radial_parts(model, &verts[i + 1]).expect("radial vertex");
    let (a_in, a_out) = match (y_in, y_out) {
        (LinkPoint::Circle(a), LinkPoint::Circle(b)) => (*a, *b),
        _ => return Err(Error::domain("circle link expected")),
    };
    let ell = link.distance_unchecked(y_in, y_out);
    let mut delta = eps / ell.max(1.0);
    delta = delta.min(0.5 * r_in.min(r_out));
    if matches!(model, StratifiedModel::Suspension { .. }) {
        delta = delta.min(0.5 * (PI - r_in.max(r_out)).max(0.0)).min(0.5);
    }

    let gap = signed_gap(a_in, a_out);
    let steps = ((ell / radius.max(1e-12)).abs() / 0.02).ceil().max(1.0) as usize;
    let mut replacement = Vec::with_capacity(steps + 1);
    for j in 0..=steps {
        let a = (a_in + gap * j as f64 / steps as f64).rem_euclid(TAU);
        replacement.push(make_radial(model, delta, LinkPoint::Circle(a)));
    }
    let mut new_vertices: Vec<ModelPoint> = verts[..i].to_vec();
    new_vertices.extend(replacement);
    new_vertices.extend_from_slice(&verts[i + 1..]);
    let new_curve = PolygonalCurve::new(model, new_vertices)?;
    Ok(CurvePerturbation { curve: new_curve, detour_radius: Some(delta) })
}

/// Angle at the vertex opposite side `c` of a triangle with sides `a, b, c`
/// in the model plane of curvature `k`.
pub fn comparison_angle(a: f64, b: f64, c: f64, k: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        return 0.0;
    }
    let cos_gamma = if k == 0.0 {
        (a * a + b * b - c * c) / (2.0 * a * b)
    } else {
        (cos_k(k, c) - cos_k(k, a) * cos_k(k, b)) / (k * sin_k(k, a) * sin_k(k, b))
    };
    cos_gamma.clamp(-1.0, 1.0).acos()
}

/// Quadruple (1 + 3 point) comparison at `p`: the three comparison angles
/// `∠̃_k(a p b) + ∠̃_k(b p c) + ∠̃_k(c p a)` must not exceed 2π.
pub fn quadruple_comparison(
    model: &StratifiedModel,
    p: &ModelPoint,
    others: [&ModelPoint; 3],
    k: f64,
    tolerance: f64,
) -> Result<CheckReport> {
    let d = |x: &ModelPoint, y: &ModelPoint| model.distance(x, y);
    let dp = [d(p, others[0])?, d(p, others[1])?, d(p, others[2])?];
    let pairs = [(0, 1), (1, 2), (2, 0)];
    let mut sum = 0.0;
    let mut angles = Vec::with_capacity(3);
    for &(i, j) in &pairs {
        let dij = d(others[i], others[j])?;
        let (a, b, c) = (dp[i], dp[j], dij);
        let slack = 1e-9 * (a + b + c).max(1.0);
        if a + b < c - slack || a + c < b - slack || b + c < a - slack {
            return Err(Error::InconsistentMetric(format!(
                "distances ({a}, {b}, {c}) violate the triangle inequality"
            )));
        }
        if a == 0.0 || b == 0.0 {
            return Err(Error::argument("quadruple comparison needs points distinct from p"));
        }
        let angle = comparison_angle(a, b, c, k);
        angles.push(angle);
        sum += angle;
    }
    Ok(CheckReport::new("quadruple_comparison", TAU - sum, tolerance, 4, None)
        .with("angle_sum", sum)
        .with("angles", angles)
        .with("k", k))
}

/// CSV polyline `(t, chart coordinates…)` for plotting a geodesic.
pub fn geodesic_csv(samples: &[(f64, Vec<f64>)]) -> String {
    let width = samples.first().map_or(0, |s| s.1.len());
    let mut header = vec!["t".to_string()];
    header.extend((0..width).map(|i| format!("x{i}")));
    let mut table = CsvTable::new(&header);
    for (t, coords) in samples {
        let mut row = vec![fmt_f64(*t)];
        row.extend(coords.iter().map(|c| fmt_f64(*c)));
        table.push(row);
    }
    table.render()
}

/// Exact area of the geodesic ball `B(x, ρ)` on the flat cone of angle
/// `alpha` (untruncated), for `x` at distance `s` from the apex.
pub fn flat_cone_ball_area(alpha: f64, s: f64, rho: f64) -> f64 {
    if rho <= 0.0 {
        return 0.0;
    }
    if s == 0.0 {
        return 0.5 * alpha * rho * rho;
    }
    // for each circle of radius u about the apex, measure the set of cone
    // angles ψ ∈ [−α/2, α/2] with d((u, ψ), x) < ρ
    let arc = |u: f64| -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        if u + s < rho {
            return alpha * u; // whole circle, including the apex route
        }
        let half = 0.5 * alpha;
        // direct route: |ψ| < min(π, half) with u² + s² − 2us cos ψ < ρ²
        let c = (u * u + s * s - rho * rho) / (2.0 * u * s);
        let direct = if c >= 1.0 {
            0.0
        } else if c <= -1.0 {
            half.min(PI)
        } else {
            c.acos().min(half).min(PI)
        };
        // the apex route reaches every angle with |ψ| ≥ π when u + s < ρ,
        // already covered above; otherwise only the direct set counts
        2.0 * direct * u
    };
    crate::numeric::integrate(arc, 0.0, s + rho, 1e-11)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cp(r: f64, a: f64) -> ConePoint {
        ConePoint { r, y: LinkPoint::Circle(a) }
    }

    #[test]
    fn cone_distance_examples() {
        let link = LinkSpace::circle(0.5).unwrap();
        assert_eq!(cone_distance(&cp(1.0, 0.3), &cp(1.0, 0.3), &link), 0.0);
        assert!((cone_distance(&cp(1.0, 0.3), &cp(2.0, 0.3), &link) - 1.0).abs() < 1e-15);
        // link gap π/2 means angle gap π on a radius-1/2 circle
        assert!((cone_distance(&cp(1.0, 0.0), &cp(1.0, PI), &link) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn apex_hits() {
        let half = LinkSpace::circle(0.5).unwrap();
        assert!(!geodesic_hits_apex(&half, &LinkPoint::Circle(0.0), &LinkPoint::Circle(PI)).unwrap());
        let wide = LinkSpace::circle(1.5).unwrap();
        assert!(geodesic_hits_apex(&wide, &LinkPoint::Circle(0.0), &LinkPoint::Circle(PI)).unwrap());
        let unit = LinkSpace::circle(1.0).unwrap();
        assert!(geodesic_hits_apex(&unit, &LinkPoint::Circle(0.0), &LinkPoint::Circle(PI)).unwrap());
    }

    /// Through-apex length t + s against the best unfolded-sector path.
    #[test]
    fn wide_cone_apex_route_is_shorter_than_any_sector_path() {
        let (t, s) = (1.0, 1.3);
        // antipodal on Circle(1.5): cone gap 1.5π; sector development only
        // offers straight segments for gaps < π, so the infimum is t + s.
        let link = LinkSpace::circle(1.5).unwrap();
        let d = cone_distance(&cp(t, 0.0), &cp(s, PI), &link);
        assert!((d - (t + s)).abs() < 1e-15);
    }

    #[test]
    fn unfolding_matches_distance() {
        let g = unfold_flat_cone(TAU, &cp(1.0, 0.0), &cp(1.0, PI / 2.0)).unwrap();
        assert!((g.length - 2f64.sqrt()).abs() < 1e-12);
        let g = unfold_flat_cone(PI, &cp(1.0, 0.0), &cp(1.0, PI)).unwrap();
        assert!((g.length - 2f64.sqrt()).abs() < 1e-12);
        let end = g.point(1.0);
        assert!((end.r - 1.0).abs() < 1e-12);
        assert!(matches!(end.y, LinkPoint::Circle(a) if (a - PI).abs() < 1e-12));
        assert!(matches!(
            unfold_flat_cone(3.0 * PI, &cp(1.0, 0.0), &cp(1.0, PI)),
            Err(Error::Precondition(_))
        ));
        // radial pair
        let g = unfold_flat_cone(PI, &cp(0.5, 1.0), &cp(2.0, 1.0)).unwrap();
        assert!((g.length - 1.5).abs() < 1e-12);
        assert!(matches!(g.point(0.5).y, LinkPoint::Circle(a) if (a - 1.0).abs() < 1e-12));
    }

    #[test]
    fn perturbation_of_v_curve() {
        let model = StratifiedModel::flat_cone(PI, 2.0).unwrap();
        let verts = vec![
            ModelPoint::Cone(cp(1.0, 0.0)),
            ModelPoint::Cone(cp(0.0, 0.0)),
            ModelPoint::Cone(cp(1.0, PI)),
        ];
        let curve = PolygonalCurve::new(&model, verts).unwrap();
        assert!((curve.length() - 2.0).abs() < 1e-15);
        let out = perturb_curve_off_singular(&model, &curve, 0.1).unwrap();
        let delta = out.detour_radius.unwrap();
        // link gap is π/2, so the arc has length δ·π/2 ≤ 0.1
        assert!(delta * PI / 2.0 <= 0.1 + 1e-15);
        assert!(out.curve.length() <= curve.length() + 0.1);
        assert_eq!(out.curve.vertices.first(), curve.vertices.first());
        assert_eq!(out.curve.vertices.last(), curve.vertices.last());
        let half = perturb_curve_off_singular(&model, &curve, 0.05).unwrap();
        assert!(half.detour_radius.unwrap() <= 0.5 * delta + 1e-15);
        assert!(perturb_curve_off_singular(&model, &curve, 0.0).is_err());
    }

    #[test]
    fn curve_avoiding_apex_is_unchanged() {
        let model = StratifiedModel::flat_cone(PI, 2.0).unwrap();
        let verts = vec![ModelPoint::Cone(cp(1.0, 0.0)), ModelPoint::Cone(cp(1.0, 1.0))];
        let curve = PolygonalCurve::new(&model, verts).unwrap();
        let out = perturb_curve_off_singular(&model, &curve, 0.1).unwrap();
        assert_eq!(out.curve, curve);
        assert!(out.detour_radius.is_none());
    }

    #[test]
    fn wide_cone_fails_quadruple_test() {
        let alpha = 3.0 * PI;
        let model = StratifiedModel::flat_cone(alpha, 2.0).unwrap();
        let p = ModelPoint::Cone(cp(0.01, 0.0));
        let others: Vec<ModelPoint> =
            (0..3).map(|i| ModelPoint::Cone(cp(1.0, (PI / 3.0 + i as f64 * TAU / 3.0).rem_euclid(TAU)))).collect();
        let rep = quadruple_comparison(&model, &p, [&others[0], &others[1], &others[2]], 0.0, 1e-9).unwrap();
        assert!(!rep.pass, "{rep:?}");
        let plane = StratifiedModel::flat_cone(TAU, 2.0).unwrap();
        let rep = quadruple_comparison(&plane, &p, [&others[0], &others[1], &others[2]], 0.0, 1e-9).unwrap();
        assert!(rep.pass);
    }

    #[test]
    fn spherical_comparison_angles() {
        // equilateral octant triangle on S²: sides π/2, angles π/2
        assert!((comparison_angle(PI / 2.0, PI / 2.0, PI / 2.0, 1.0) - PI / 2.0).abs() < 1e-12);
        assert!((comparison_angle(3.0, 4.0, 5.0, 0.0) - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn cone_ball_area_oracle() {
        // apex-centred and far-from-apex balls on a cone of angle α ≤ 2π
        assert!((flat_cone_ball_area(PI, 0.0, 0.7) - 0.5 * PI * 0.49).abs() < 1e-12);
        let a = flat_cone_ball_area(TAU, 1.0, 0.5);
        assert!((a - PI * 0.25).abs() < 1e-8, "{a}");
        // ball containing the apex on the plane is still a disc
        let a = flat_cone_ball_area(TAU, 1.0, 2.0);
        assert!((a - PI * 4.0).abs() < 1e-8, "{a}");
    }
}
