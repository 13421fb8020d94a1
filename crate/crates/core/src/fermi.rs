//! The round 3-sphere in Fermi coordinates around a circle, and its
//! modification carrying a cone angle along that circle.
//!
//! The circle is `c(θ) = (cos β, 0, sin β e^{iθ}) ⊂ S³ ⊂ ℝ² × ℂ`. Fermi
//! coordinates are `F(r, θ, φ) = cos r · c(θ) + sin r · w(θ, φ)` with
//! `w = (−sin β sin φ, cos φ, cos β sin φ e^{iθ})`, giving the diagonal metric
//! `dr² + sin²r dφ² + (cos r sin β + sin r cos β sin φ)² dθ²`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::{Matrix3, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cone::cone_distance_raw;
use crate::error::{Error, Result};
use crate::model::MetricSample;
use crate::numeric::{integrate, linear_fit, sphere_volume};

const UNIT_TOL: f64 = 1e-9;

/// Fermi-coordinate components `(g_φφ, g_θθ)` of the round metric.
pub(crate) fn round_components(beta: f64, r: f64, phi: f64) -> (f64, f64) {
    let h = r.cos() * beta.sin() + r.sin() * beta.cos() * phi.sin();
    (r.sin().powi(2), h * h)
}

/// Round metric `g₀` of `S³` in Fermi coordinates about the circle of
/// parameter `beta`. Coordinates in the returned sample are ordered `(r, φ, θ)`.
pub fn fermi_metric(beta: f64, r: f64, theta: f64, phi: f64) -> Result<MetricSample> {
    check_beta(beta)?;
    if !(r > 0.0 && r < validity_radius(beta)) {
        return Err(Error::domain(format!(
            "Fermi radius {r} outside the tubular neighbourhood (0, {})",
            validity_radius(beta)
        )));
    }
    if !(theta.is_finite() && phi.is_finite()) {
        return Err(Error::domain("non-finite Fermi angle"));
    }
    let (gpp, gtt) = round_components(beta, r, phi);
    Ok(MetricSample::diagonal("fermi", vec![r, phi, theta], &[1.0, gpp, gtt]))
}

/// Largest radius on which the Fermi chart about the circle is a diffeomorphism.
pub fn validity_radius(beta: f64) -> f64 {
    beta
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta <= FRAC_PI_2 {
        Ok(())
    } else {
        Err(Error::domain(format!("β = {beta} outside (0, π/2]")))
    }
}

/// Power-law fit `sup |g₀ − g_prod| ≈ Λ r^γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticFit {
    pub exponent: f64,
    pub constant: f64,
}

/// Largest component deviation of `g₀` from the product metric
/// `dr² + r² dφ² + sin²β dθ²` over all angles, at radius `r`.
pub fn product_deviation(beta: f64, r: f64) -> f64 {
    const STEPS: usize = 2048;
    let dpp = (r.sin().powi(2) - r * r).abs();
    let mut worst = dpp;
    for i in 0..STEPS {
        let phi = TAU * i as f64 / STEPS as f64;
        let (_, gtt) = round_components(beta, r, phi);
        worst = worst.max((gtt - beta.sin().powi(2)).abs());
    }
    // sin φ = ±1 are the extremes of the θθ deviation
    for phi in [FRAC_PI_2, -FRAC_PI_2] {
        let (_, gtt) = round_components(beta, r, phi);
        worst = worst.max((gtt - beta.sin().powi(2)).abs());
    }
    worst
}

/// Fits the decay exponent and constant of the deviation of `g₀` from the
/// product model over a decreasing radius grid.
pub fn fermi_asymptotic_check(beta: f64, r_grid: &[f64]) -> Result<AsymptoticFit> {
    check_beta(beta)?;
    if r_grid.len() < 3 {
        return Err(Error::argument("asymptotic fit needs at least 3 radii"));
    }
    if r_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::argument("radius grid must be strictly decreasing"));
    }
    if r_grid[0] >= validity_radius(beta) || *r_grid.last().unwrap() <= 0.0 {
        return Err(Error::domain("radius grid outside the Fermi validity range"));
    }
    let x: Vec<f64> = r_grid.iter().map(|r| r.ln()).collect();
    let y: Vec<f64> = r_grid.iter().map(|&r| product_deviation(beta, r).ln()).collect();
    let (slope, intercept) = linear_fit(&x, &y);
    Ok(AsymptoticFit { exponent: slope, constant: intercept.exp() })
}

/// Smooth bump: 1 on `[0, ε_b/2]`, 0 on `[ε_b, ∞)`.
fn bump(r: f64, eb: f64) -> (f64, f64) {
    let f = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    let df = |t: f64| if t > 0.0 { (-1.0 / t).exp() / (t * t) } else { 0.0 };
    let half = 0.5 * eb;
    if r <= half {
        return (1.0, 0.0);
    }
    if r >= eb {
        return (0.0, 0.0);
    }
    let s = (r - half) / half;
    let (a, b) = (f(s), f(1.0 - s));
    let h = a / (a + b);
    let dh = (df(s) * (a + b) - a * (df(s) - df(1.0 - s))) / (a + b).powi(2);
    (1.0 - h, -dh / half)
}

/// A point of a [`FermiSphere`]: its embedding in `ℝ⁴` plus Fermi coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FermiPoint {
    pub x: [f64; 4],
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
}

/// End state of a geodesic shot: endpoint, closest approach to the circle.
#[derive(Debug, Clone, PartialEq)]
pub struct FermiGeodesic {
    pub length: f64,
    pub min_r: f64,
    pub polyline: Vec<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FermiSphere {
    pub beta: f64,
    pub alpha: f64,
    pub blend_radius: f64,
}

impl FermiSphere {
    pub fn new(beta: f64, alpha: f64, blend_radius: f64) -> Result<Self> {
        check_beta(beta)?;
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::domain(format!("cone angle {alpha} must be positive")));
        }
        if !(blend_radius > 0.0 && blend_radius < validity_radius(beta).min(1.0)) {
            return Err(Error::domain(format!(
                "blend radius {blend_radius} must lie in (0, min(β, 1))"
            )));
        }
        Ok(FermiSphere { beta, alpha, blend_radius })
    }

    pub fn cone_factor(&self) -> f64 {
        self.alpha / TAU
    }

    fn is_totally_geodesic(&self) -> bool {
        (self.beta - FRAC_PI_2).abs() < 1e-15
    }

    /// Blended components `(g_φφ, g_θθ)` at chart point `(r, φ)`.
    pub fn blended_components(&self, r: f64, phi: f64) -> (f64, f64) {
        let (gpp, gtt) = round_components(self.beta, r, phi);
        let (chi, _) = bump(r, self.blend_radius);
        if chi == 0.0 {
            return (gpp, gtt);
        }
        let k = self.cone_factor();
        let mpp = k * k * r * r;
        let mtt = self.beta.sin().powi(2);
        (chi * mpp + (1.0 - chi) * gpp, chi * mtt + (1.0 - chi) * gtt)
    }

    /// Ratio of the blended to the round volume density.
    pub(crate) fn density_ratio(&self, r: f64, phi: f64) -> f64 {
        if r >= self.blend_radius {
            return 1.0;
        }
        let (bpp, btt) = self.blended_components(r, phi);
        let (gpp, gtt) = round_components(self.beta, r, phi);
        (bpp * btt / (gpp * gtt)).sqrt()
    }

    pub fn volume(&self) -> f64 {
        let eb = self.blend_radius;
        let excess = integrate(
            |r| {
                integrate(
                    |phi| {
                        let (bpp, btt) = self.blended_components(r, phi);
                        let (gpp, gtt) = round_components(self.beta, r, phi);
                        (bpp * btt).sqrt() - (gpp * gtt).sqrt()
                    },
                    0.0,
                    TAU,
                    1e-11,
                )
            },
            0.0,
            eb,
            1e-10,
        );
        sphere_volume(3) + TAU * excess
    }

    pub fn embed(&self, r: f64, theta: f64, phi: f64) -> [f64; 4] {
        let (sb, cb) = self.beta.sin_cos();
        let (sr, cr) = r.sin_cos();
        let (sp, cp) = phi.sin_cos();
        let h = cr * sb + sr * cb * sp;
        [cr * cb - sr * sb * sp, sr * cp, h * theta.cos(), h * theta.sin()]
    }

    /// Fermi coordinates `(r, θ, φ)` of a unit vector.
    pub fn chart(&self, x: &[f64; 4]) -> (f64, f64, f64) {
        let (sb, cb) = self.beta.sin_cos();
        let rho = x[2].hypot(x[3]);
        let theta = if rho > 0.0 { x[3].atan2(x[2]).rem_euclid(TAU) } else { 0.0 };
        // reduced coordinates in the (x1, x2, ρ) half-space
        let y = [x[0], x[1], rho];
        let c = [cb, 0.0, sb];
        let cos_r = y[0] * c[0] + y[2] * c[2];
        let perp = [y[0] - cos_r * c[0], y[1], y[2] - cos_r * c[2]];
        let sin_r = (perp[0] * perp[0] + perp[1] * perp[1] + perp[2] * perp[2]).sqrt();
        let r = sin_r.atan2(cos_r);
        if sin_r < 1e-300 {
            return (0.0, theta, 0.0);
        }
        let w = [perp[0] / sin_r, perp[1] / sin_r, perp[2] / sin_r];
        let phi = (-sb * w[0] + cb * w[2]).atan2(w[1]).rem_euclid(TAU);
        (r, theta, phi)
    }

    pub fn point(&self, x: [f64; 4]) -> Result<FermiPoint> {
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOL {
            return Err(Error::domain(format!("Fermi sphere point has norm {norm}")));
        }
        let (r, theta, phi) = self.chart(&x);
        Ok(FermiPoint { x, r, theta, phi })
    }

    pub fn point_from_chart(&self, r: f64, theta: f64, phi: f64) -> Result<FermiPoint> {
        let limit = validity_radius(self.beta);
        let ok = r >= 0.0 && (r < limit || (self.is_totally_geodesic() && r <= limit));
        if !ok || !theta.is_finite() || !phi.is_finite() {
            return Err(Error::domain(format!("Fermi chart point r = {r} outside [0, {limit})")));
        }
        let x = self.embed(r, theta, phi);
        Ok(FermiPoint { x, r, theta: theta.rem_euclid(TAU), phi: if r == 0.0 { 0.0 } else { phi.rem_euclid(TAU) } })
    }

    pub fn validate_point(&self, p: &FermiPoint) -> Result<()> {
        let q = self.point(p.x)?;
        if (q.r - p.r).abs() > 1e-7 {
            return Err(Error::domain("Fermi point chart radius inconsistent with its embedding"));
        }
        Ok(())
    }

    pub fn metric_sample(&self, p: &FermiPoint) -> MetricSample {
        let (gpp, gtt) = self.blended_components(p.r, p.phi);
        MetricSample::diagonal("fermi", vec![p.r, p.phi, p.theta], &[1.0, gpp, gtt])
    }

    /// Uniform point of the round sphere plus the importance factor turning
    /// it into a sample of the blended volume.
    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (crate::model::ModelPoint, f64) {
        loop {
            let v: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm < 1e-12 {
                continue;
            }
            let x = v.map(|a| a / norm);
            let (r, theta, phi) = self.chart(&x);
            if r == 0.0 {
                continue;
            }
            let weight = self.density_ratio(r, phi);
            return (crate::model::ModelPoint::Fermi(FermiPoint { x, r, theta, phi }), weight);
        }
    }

    /// Exact distance when both points sit where the metric is the product
    /// `C_α × S¹` and no competing path can leave that region.
    pub fn product_distance(&self, p: &FermiPoint, q: &FermiPoint) -> Option<f64> {
        let half = 0.5 * self.blend_radius;
        if p.r >= half || q.r >= half {
            return None;
        }
        let k = self.cone_factor();
        let dc = cone_distance_raw(p.r, q.r, k * angle_gap(p.phi, q.phi));
        let dt = self.beta.sin() * angle_gap(p.theta, q.theta);
        let d = dc.hypot(dt);
        (d <= self.blend_radius - p.r - q.r).then_some(d)
    }

    /// Lower bound for `d(p, q)` from the radial structure of the tube.
    pub fn distance_lower_bound(&self, p: &FermiPoint, q: &FermiPoint) -> f64 {
        let radial = (p.r - q.r).abs();
        let half = 0.5 * self.blend_radius;
        if p.r >= half || q.r >= half {
            return radial;
        }
        // a path either stays in the product region or crosses r = ε_b/2
        let k = self.cone_factor();
        let d = cone_distance_raw(p.r, q.r, k * angle_gap(p.phi, q.phi)).hypot(self.beta.sin() * angle_gap(p.theta, q.theta));
        radial.max(d.min(self.blend_radius - p.r - q.r))
    }

    pub fn distance(&self, p: &FermiPoint, q: &FermiPoint) -> Result<f64> {
        if p.x == q.x {
            return Ok(0.0);
        }
        if let Some(d) = self.product_distance(p, q) {
            return Ok(d);
        }
        Ok(self.geodesic(p, q)?.length)
    }

    /// Minimizing-geodesic candidate between `p` and `q` (β = π/2 only).
    ///
    /// Exact in the product region; otherwise the shortest of the great arc
    /// (when it avoids the blend tube) and shooting solutions seeded by a scan
    /// of initial directions at the endpoint nearer the circle.
    pub fn geodesic(&self, p: &FermiPoint, q: &FermiPoint) -> Result<FermiGeodesic> {
        if !self.is_totally_geodesic() {
            return Err(Error::unsupported("Fermi geodesics are implemented for β = π/2 only"));
        }
        if p.x == q.x {
            return Ok(FermiGeodesic { length: 0.0, min_r: p.r, polyline: vec![p.x] });
        }
        if let Some(d) = self.product_distance(p, q) {
            let k = self.cone_factor();
            let min_r = chord_apex_distance(p.r, q.r, k * angle_gap(p.phi, q.phi));
            return Ok(FermiGeodesic { length: d, min_r, polyline: vec![p.x, q.x] });
        }
        let (a, b, swapped) = if p.r <= q.r { (p, q, false) } else { (q, p, true) };
        let basis = tangent_basis(&a.x);
        let to_vec = |w: &[f64; 3]| -> [f64; 4] {
            std::array::from_fn(|i| (0..3).map(|j| w[j] * basis[j][i]).sum())
        };
        let to_coords = |v: &[f64; 4]| -> [f64; 3] { std::array::from_fn(|j| dot(v, &basis[j])) };

        let mut best: Option<([f64; 3], f64)> = None;
        let consider = |w: [f64; 3], best: &mut Option<([f64; 3], f64)>| {
            let len = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            if best.is_none_or(|(_, l)| len < l) {
                *best = Some((w, len));
            }
        };

        let d0 = great_circle_distance(&a.x, &b.x);
        let cq = dot(&b.x, &a.x);
        let toward = normalize(&std::array::from_fn(|i| b.x[i] - cq * a.x[i]));
        let w0 = to_coords(&toward.map(|v| v * d0));
        let mut last_residual = f64::INFINITY;
        if let Some((w, res)) = self.refine_shot(&a.x, &b.x, &to_vec, w0, 0) {
            last_residual = res;
            consider(w, &mut best);
        }

        // direction scan: closest approach of each trial geodesic to the target
        let horizon = (1.25 * self.curve_length_along_great_arc(&a.x, &b.x)).min(1.5 * PI);
        let mut seeds: Vec<(f64, [f64; 3])> = Vec::new();
        for u in fibonacci_directions(SCAN_DIRECTIONS) {
            let v = to_vec(&u.map(|c| c * horizon));
            let mut trace = Vec::new();
            self.exp(&a.x, &v, Some(&mut trace));
            if let Some((miss, s)) = trace
                .iter()
                .map(|(s, x)| (norm(&std::array::from_fn(|i| x[i] - b.x[i])), *s))
                .min_by(|x, y| x.0.total_cmp(&y.0))
            {
                seeds.push((miss, u.map(|c| c * s)));
            }
        }
        seeds.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut used: Vec<[f64; 3]> = Vec::new();
        for (miss, w) in seeds {
            if used.len() >= SCAN_SEEDS || miss > 0.5 {
                break;
            }
            let wn = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            let distinct = used.iter().all(|u| {
                let un = u.iter().map(|v| v * v).sum::<f64>().sqrt();
                let c = (0..3).map(|i| u[i] * w[i]).sum::<f64>() / (un * wn);
                c < (0.15f64).cos()
            });
            if !distinct {
                continue;
            }
            used.push(w);
            if let Some((w, res)) = self.refine_shot(&a.x, &b.x, &to_vec, w, 60) {
                last_residual = last_residual.min(res);
                consider(w, &mut best);
            }
        }
        let Some((w, length)) = best else {
            return Err(Error::Numerical {
                message: "Fermi geodesic shooting did not converge".into(),
                residual: last_residual,
            });
        };
        let mut trace = Vec::new();
        let (_, min_r) = self.exp(&a.x, &to_vec(&w), Some(&mut trace));
        let mut polyline: Vec<[f64; 4]> = trace.into_iter().map(|(_, x)| x).collect();
        if swapped {
            polyline.reverse();
        }
        Ok(FermiGeodesic { length, min_r, polyline })
    }

    /// Damped Gauss-Newton on the initial velocity `w` (tangent coordinates)
    /// so that `exp_x(w) = target`. Returns the solution and its residual.
    fn refine_shot(
        &self,
        x: &[f64; 4],
        target: &[f64; 4],
        to_vec: &dyn Fn(&[f64; 3]) -> [f64; 4],
        mut w: [f64; 3],
        max_iter: usize,
    ) -> Option<([f64; 3], f64)> {
        let residual = |w: &[f64; 3]| -> [f64; 4] {
            let (end, _) = self.exp(x, &to_vec(w), None);
            std::array::from_fn(|i| end[i] - target[i])
        };
        let mut res = residual(&w);
        let mut res_norm = norm(&res);
        let mut mu = 1e-3;
        for _ in 0..max_iter {
            if res_norm < 1e-11 {
                break;
            }
            let h = 1e-7;
            let mut jac = nalgebra::Matrix4x3::<f64>::zeros();
            for j in 0..3 {
                let mut wp = w;
                wp[j] += h;
                let mut wm = w;
                wm[j] -= h;
                let (rp, rm) = (residual(&wp), residual(&wm));
                for i in 0..4 {
                    jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
                }
            }
            let jtj = jac.transpose() * jac;
            let jtr = jac.transpose() * nalgebra::Vector4::from(res);
            let mut improved = false;
            for _ in 0..12 {
                let damped = jtj + Matrix3::identity() * (mu * jtj.diagonal().max().max(1e-12));
                let Some(step) = damped.lu().solve(&jtr) else { break };
                let trial: [f64; 3] = std::array::from_fn(|i| w[i] - step[i]);
                let tr = residual(&trial);
                let tn = norm(&tr);
                if tn < res_norm {
                    w = trial;
                    res = tr;
                    res_norm = tn;
                    mu = (mu * 0.3).max(1e-9);
                    improved = true;
                    break;
                }
                mu *= 10.0;
            }
            if !improved {
                break;
            }
        }
        (res_norm < 1e-9).then_some((w, res_norm))
    }

    /// Length of the round great arc from `a` to `b` measured in the blended metric.
    fn curve_length_along_great_arc(&self, a: &[f64; 4], b: &[f64; 4]) -> f64 {
        const STEPS: usize = 400;
        let d = great_circle_distance(a, b);
        let c = dot(a, b);
        let u = normalize(&std::array::from_fn(|i| b[i] - c * a[i]));
        let at = |s: f64| -> [f64; 4] { std::array::from_fn(|i| s.cos() * a[i] + s.sin() * u[i]) };
        let mut total = crate::numeric::CompensatedSum::new();
        let mut prev = self.chart(a);
        for j in 1..=STEPS {
            let next = self.chart(&at(d * j as f64 / STEPS as f64));
            total.add(self.segment_length(prev, next));
            prev = next;
        }
        total.value()
    }

    /// Approximate length of a short segment between chart points `(r, θ, φ)`.
    fn segment_length(&self, a: (f64, f64, f64), b: (f64, f64, f64)) -> f64 {
        let half = 0.5 * self.blend_radius;
        let dth = angle_gap(a.1, b.1);
        if a.0 < half && b.0 < half {
            let dc = cone_distance_raw(a.0, b.0, self.cone_factor() * angle_gap(a.2, b.2));
            return dc.hypot(self.beta.sin() * dth);
        }
        let rm = 0.5 * (a.0 + b.0);
        let phim = a.2 + 0.5 * signed_angle(a.2, b.2);
        let (gpp, gtt) = self.blended_components(rm, phim);
        let dphi = angle_gap(a.2, b.2);
        ((b.0 - a.0).powi(2) + gpp * dphi * dphi + gtt * dth * dth).sqrt()
    }

    /// Exponential map at `x` (β = π/2): great circles outside the blend tube,
    /// conserved-momentum integration inside. Returns the endpoint and the
    /// smallest distance to the circle met along the way; `trace` collects
    /// `(arc length, point)` samples.
    fn exp(&self, x: &[f64; 4], v: &[f64; 4], mut trace: Option<&mut Vec<(f64, [f64; 4])>>) -> ([f64; 4], f64) {
        let length = norm(v);
        let mut pos = *x;
        if length == 0.0 {
            return (pos, self.chart(x).0);
        }
        let mut dir = v.map(|a| a / length);
        let mut remaining = length;
        let sigma2 = self.blend_radius.sin().powi(2);
        let mut min_r = self.chart(x).0;
        if let Some(t) = trace.as_deref_mut() {
            t.push((0.0, pos));
        }
        let mut guard = 0;
        while remaining > 0.0 && guard < 1000 {
            guard += 1;
            let travelled = length - remaining;
            let (r, _, _) = self.chart(&pos);
            let radial_speed = pos[0] * dir[0] + pos[1] * dir[1];
            let inside = r < self.blend_radius - 1e-13 || (r < self.blend_radius + 1e-12 && radial_speed < 0.0);
            if inside {
                let (np, nd, used, seg_min) =
                    self.integrate_tube(&pos, &dir, remaining, travelled, trace.as_deref_mut());
                pos = np;
                dir = nd;
                remaining -= used;
                min_r = min_r.min(seg_min);
                continue;
            }
            // great circle pos cos s + dir sin s; |(x1, x2)|² = M + R cos(2s − ψ)
            let a = pos[0] * pos[0] + pos[1] * pos[1];
            let b = dir[0] * dir[0] + dir[1] * dir[1];
            let c = pos[0] * dir[0] + pos[1] * dir[1];
            let m = 0.5 * (a + b);
            let amp = (0.25 * (a - b).powi(2) + c * c).sqrt();
            let psi = (2.0 * c).atan2(a - b);
            let mut entry = None;
            if amp > 1e-300 {
                let kappa = (sigma2 - m) / amp;
                if kappa.abs() <= 1.0 {
                    let base = 0.5 * (psi + kappa.acos());
                    let mut s = base - PI * ((base - 1e-12) / PI).floor();
                    if s <= 1e-12 {
                        s += PI;
                    }
                    if s <= remaining {
                        entry = Some(s);
                    }
                }
            }
            let s = entry.unwrap_or(remaining);
            // minimum of |(x1, x2)|² on [0, s]
            let f = |t: f64| m + amp * (2.0 * t - psi).cos();
            let mut fmin = f(0.0).min(f(s));
            let t_star = 0.5 * (psi + PI);
            let mut t0 = t_star - PI * (t_star / PI).floor();
            while t0 <= s {
                fmin = fmin.min(f(t0));
                t0 += PI;
            }
            min_r = min_r.min(fmin.max(0.0).sqrt().min(1.0).asin());
            let (ss, cs) = s.sin_cos();
            let np: [f64; 4] = std::array::from_fn(|i| cs * pos[i] + ss * dir[i]);
            let nd: [f64; 4] = std::array::from_fn(|i| -ss * pos[i] + cs * dir[i]);
            if let Some(t) = trace.as_deref_mut() {
                let steps = ((s / 0.02).ceil() as usize).max(1);
                for j in 1..=steps {
                    let u = s * j as f64 / steps as f64;
                    t.push((travelled + u, std::array::from_fn(|i| u.cos() * pos[i] + u.sin() * dir[i])));
                }
            }
            pos = normalize(&np);
            dir = nd;
            remaining -= s;
            if entry.is_none() {
                break;
            }
        }
        (pos, min_r)
    }

    fn tube_profile(&self, r: f64) -> (f64, f64, f64, f64) {
        // F² = χk²r² + (1 − χ) sin²r, H² = χ + (1 − χ) cos²r, with r-derivatives
        let (chi, dchi) = bump(r, self.blend_radius);
        let k = self.cone_factor();
        let (sr, cr) = r.sin_cos();
        let f2 = chi * k * k * r * r + (1.0 - chi) * sr * sr;
        let h2 = chi + (1.0 - chi) * cr * cr;
        let df2 = dchi * (k * k * r * r - sr * sr) + chi * 2.0 * k * k * r + (1.0 - chi) * 2.0 * sr * cr;
        let dh2 = dchi * (1.0 - cr * cr) - (1.0 - chi) * 2.0 * sr * cr;
        (f2, df2, h2, dh2)
    }

    /// Integrates the geodesic inside the tube until it leaves (r ≥ ε_b moving
    /// outward) or the length budget is spent.
    fn integrate_tube(
        &self,
        pos: &[f64; 4],
        dir: &[f64; 4],
        budget: f64,
        offset: f64,
        mut trace: Option<&mut Vec<(f64, [f64; 4])>>,
    ) -> ([f64; 4], [f64; 4], f64, f64) {
        let (r, theta, phi) = self.chart(pos);
        let (sr, cr) = r.sin_cos();
        let rdot = if sr > cr {
            (pos[0] * dir[0] + pos[1] * dir[1]) / (sr * cr.max(1e-300))
        } else {
            -(pos[2] * dir[2] + pos[3] * dir[3]) / (cr * sr.max(1e-300))
        };
        let phidot = (pos[0] * dir[1] - pos[1] * dir[0]) / (sr * sr).max(1e-300);
        let thetadot = (pos[2] * dir[3] - pos[3] * dir[2]) / (cr * cr);
        let (f2, _, h2, _) = self.tube_profile(r);
        let p_phi = f2 * phidot;
        let p_theta = h2 * thetadot;

        let accel = |r: f64| {
            let (f2, df2, h2, dh2) = self.tube_profile(r);
            0.5 * p_phi * p_phi * df2 / (f2 * f2) + 0.5 * p_theta * p_theta * dh2 / (h2 * h2)
        };
        let angular = |r: f64| {
            let (f2, _, h2, _) = self.tube_profile(r);
            (p_phi / f2, p_theta / h2)
        };
        let mut state = [r, rdot, phi, theta];
        let mut used = 0.0;
        let mut min_r = r;
        loop {
            if used >= budget {
                break;
            }
            if state[0] >= self.blend_radius && state[1] > 0.0 && used > 0.0 {
                break;
            }
            let h = (0.02 * state[0].max(1e-9)).min(0.01).min(budget - used);
            let deriv = |s: &[f64; 4]| -> [f64; 4] {
                let rr = s[0].max(1e-12);
                let (dp, dt) = angular(rr);
                [s[1], accel(rr), dp, dt]
            };
            let k1 = deriv(&state);
            let s2: [f64; 4] = std::array::from_fn(|i| state[i] + 0.5 * h * k1[i]);
            let k2 = deriv(&s2);
            let s3: [f64; 4] = std::array::from_fn(|i| state[i] + 0.5 * h * k2[i]);
            let k3 = deriv(&s3);
            let s4: [f64; 4] = std::array::from_fn(|i| state[i] + h * k3[i]);
            let k4 = deriv(&s4);
            for i in 0..4 {
                state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            if state[0] < 0.0 {
                // radial passage through the axis: measure-zero event
                state[0] = -state[0];
                state[1] = -state[1];
                state[2] += PI;
            }
            used += h;
            min_r = min_r.min(state[0]);
            if let Some(t) = trace.as_deref_mut() {
                t.push((offset + used, self.embed(state[0], state[3], state[2])));
            }
        }
        let [r, rdot, phi, theta] = state;
        let (phidot, thetadot) = angular(r);
        let np = self.embed(r, theta, phi);
        let (sr, cr) = r.sin_cos();
        let (sp, cp) = phi.sin_cos();
        let (st, ct) = theta.sin_cos();
        let fr = [-cr * sp, cr * cp, -sr * ct, -sr * st];
        let fp = [-sr * cp, -sr * sp, 0.0, 0.0];
        let ft = [0.0, 0.0, -cr * st, cr * ct];
        let v: [f64; 4] = std::array::from_fn(|i| rdot * fr[i] + phidot * fp[i] + thetadot * ft[i]);
        let np = normalize(&np);
        let c = dot(&v, &np);
        let nd = normalize(&std::array::from_fn(|i| v[i] - c * np[i]));
        (np, nd, used, min_r)
    }

    /// Blended metric tensor in `(r, φ, θ)` coordinates.
    fn chart_metric(&self, y: [f64; 3]) -> Matrix3<f64> {
        let (gpp, gtt) = self.blended_components(y[0], y[1]);
        Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, gpp, gtt))
    }

    /// Smallest Ricci eigenvalue of the blended metric over a grid covering
    /// the blend annulus `[ε_b/2, ε_b]` and its margins.
    pub fn numeric_ricci_lower_bound(&self) -> f64 {
        let eb = self.blend_radius;
        let mut worst = f64::INFINITY;
        for i in 0..=32 {
            let r = eb * (0.1 + 1.1 * i as f64 / 32.0);
            if r >= validity_radius(self.beta) {
                continue;
            }
            for j in 0..12 {
                let phi = TAU * (j as f64 + 0.5) / 12.0;
                worst = worst.min(ricci_min_eigenvalue(&|y| self.chart_metric(y), [r, phi, 0.0]));
            }
        }
        worst
    }
}

/// Smallest eigenvalue of `Ric` relative to `g` at `y`, by finite differences.
pub(crate) fn ricci_min_eigenvalue(metric: &dyn Fn([f64; 3]) -> Matrix3<f64>, y: [f64; 3]) -> f64 {
    const H: f64 = 1e-4;
    let shift = |y: [f64; 3], k: usize, h: f64| {
        let mut z = y;
        z[k] += h;
        z
    };
    let christoffel = |y: [f64; 3]| -> [[[f64; 3]; 3]; 3] {
        let g = metric(y);
        let ginv = g.try_inverse().unwrap_or_else(Matrix3::zeros);
        let dg: [Matrix3<f64>; 3] =
            std::array::from_fn(|k| (metric(shift(y, k, H)) - metric(shift(y, k, -H))) / (2.0 * H));
        std::array::from_fn(|l| {
            std::array::from_fn(|i| {
                std::array::from_fn(|j| {
                    0.5 * (0..3)
                        .map(|m| ginv[(l, m)] * (dg[i][(j, m)] + dg[j][(i, m)] - dg[m][(i, j)]))
                        .sum::<f64>()
                })
            })
        })
    };
    let h2 = 1e-3;
    let gam = christoffel(y);
    let dgam: [[[[f64; 3]; 3]; 3]; 3] = std::array::from_fn(|k| {
        let p = christoffel(shift(y, k, h2));
        let m = christoffel(shift(y, k, -h2));
        std::array::from_fn(|l| {
            std::array::from_fn(|i| std::array::from_fn(|j| (p[l][i][j] - m[l][i][j]) / (2.0 * h2)))
        })
    });
    // Ric_{ij} = ∂_l Γ^l_{ij} − ∂_j Γ^l_{il} + Γ^l_{lm} Γ^m_{ij} − Γ^l_{jm} Γ^m_{il}
    let mut ric = Matrix3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            let mut s = 0.0;
            for l in 0..3 {
                s += dgam[l][l][i][j] - dgam[j][l][i][l];
                for m in 0..3 {
                    s += gam[l][l][m] * gam[m][i][j] - gam[l][j][m] * gam[m][i][l];
                }
            }
            ric[(i, j)] = s;
        }
    }
    let g = metric(y);
    let scale = Matrix3::from_fn(|i, j| if i == j { 1.0 / g[(i, i)].sqrt() } else { 0.0 });
    let normalized = scale * ric * scale;
    let sym = 0.5 * (normalized + normalized.transpose());
    SymmetricEigen::new(sym).eigenvalues.min()
}

const SCAN_DIRECTIONS: usize = 256;
const SCAN_SEEDS: usize = 6;

/// Closest approach to the apex of the straight segment between `(r1, 0)`
/// and `(r2, gap)` in a cone development; the apex itself when `gap ≥ π`.
fn chord_apex_distance(r1: f64, r2: f64, gap: f64) -> f64 {
    if gap >= PI {
        return 0.0;
    }
    let (ax, ay) = (r1, 0.0);
    let (bx, by) = (r2 * gap.cos(), r2 * gap.sin());
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return r1;
    }
    let u = (-(ax * dx + ay * dy) / len2).clamp(0.0, 1.0);
    (ax + u * dx).hypot(ay + u * dy)
}

/// Evenly spread unit vectors (Fibonacci lattice).
fn fibonacci_directions(n: usize) -> Vec<[f64; 3]> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let rho = (1.0 - z * z).sqrt();
            let a = golden * i as f64;
            [rho * a.cos(), rho * a.sin(), z]
        })
        .collect()
}

fn signed_angle(a: f64, b: f64) -> f64 {
    let d = (b - a).rem_euclid(TAU);
    if d > PI {
        d - TAU
    } else {
        d
    }
}

fn angle_gap(a: f64, b: f64) -> f64 {
    let g = (a - b).abs().rem_euclid(TAU);
    g.min(TAU - g)
}

fn dot(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64; 4]) -> f64 {
    dot(a, a).sqrt()
}

fn normalize(a: &[f64; 4]) -> [f64; 4] {
    let n = norm(a);
    a.map(|v| v / n)
}

fn great_circle_distance(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    crate::numeric::unit_vector_distance(a, b)
}

/// Orthonormal basis of the tangent space `x^⊥`.
fn tangent_basis(x: &[f64; 4]) -> [[f64; 4]; 3] {
    let mut basis: Vec<[f64; 4]> = Vec::with_capacity(3);
    for e in 0..4 {
        if basis.len() == 3 {
            break;
        }
        let mut v = [0.0; 4];
        v[e] = 1.0;
        let c = dot(&v, x);
        for i in 0..4 {
            v[i] -= c * x[i];
        }
        for b in &basis {
            let c = dot(&v, b);
            for i in 0..4 {
                v[i] -= c * b[i];
            }
        }
        let n = norm(&v);
        if n > 0.5 {
            basis.push(v.map(|a| a / n));
        }
    }
    [basis[0], basis[1], basis[2]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn totally_geodesic_components() {
        let m = fermi_metric(FRAC_PI_2, 0.7, 1.1, 2.3).unwrap();
        assert!((m.metric[1][1] - 0.7f64.sin().powi(2)).abs() < 1e-15);
        assert!((m.metric[2][2] - 0.7f64.cos().powi(2)).abs() < 1e-15);
        assert!(fermi_metric(FRAC_PI_2, 0.0, 0.0, 0.0).is_err());
        assert!(fermi_metric(PI / 4.0, 0.8, 0.0, 0.0).is_err());
    }

    /// Embedding-length oracle: |∂F/∂θ|² by central differences.
    #[test]
    fn theta_component_matches_embedding() {
        let beta = PI / 4.0;
        let f = FermiSphere::new(beta, TAU, 0.3).unwrap();
        let (r, theta, phi) = (0.1, 0.4, FRAC_PI_2);
        let h = 1e-6;
        let a = f.embed(r, theta + h, phi);
        let b = f.embed(r, theta - h, phi);
        let fd: f64 = (0..4).map(|i| ((a[i] - b[i]) / (2.0 * h)).powi(2)).sum();
        let expected = 0.1f64.cos().powi(2) * 0.5 + 0.1f64.sin().powi(2) * 0.5 + 0.1f64.cos() * 0.1f64.sin();
        let m = fermi_metric(beta, r, theta, phi).unwrap();
        assert!((m.metric[2][2] - expected).abs() < 1e-14);
        assert!((fd - expected).abs() < 1e-8);
    }

    #[test]
    fn chart_inverts_embedding() {
        for &beta in &[FRAC_PI_2, 1.0, 0.4] {
            let f = FermiSphere::new(beta, PI, 0.2).unwrap();
            for &(r, th, ph) in &[(0.1, 0.3, 1.0), (0.35, 5.0, 4.0), (0.01, 2.0, 6.0)] {
                if r >= beta {
                    continue;
                }
                let x = f.embed(r, th, ph);
                assert!((norm(&x) - 1.0).abs() < 1e-14);
                let (r2, th2, ph2) = f.chart(&x);
                assert!((r - r2).abs() < 1e-12, "{beta} {r} {r2}");
                assert!(angle_gap(th, th2) < 1e-10);
                assert!(angle_gap(ph, ph2) < 1e-10);
            }
        }
    }

    #[test]
    fn asymptotic_exponents() {
        let grid = [1e-2, 5e-3, 2.5e-3, 1.25e-3, 6.25e-4];
        let fit = fermi_asymptotic_check(FRAC_PI_2, &grid).unwrap();
        assert!((fit.exponent - 2.0).abs() < 0.1);
        let fit = fermi_asymptotic_check(PI / 4.0, &grid).unwrap();
        assert!((fit.exponent - 1.0).abs() < 0.1);
        assert!((fit.constant - 1.0).abs() < 0.05);
        assert!(product_deviation(0.3, 1e-6) < 1e-5);
        assert!(fermi_asymptotic_check(0.3, &grid[..2]).is_err());
        assert!(fermi_asymptotic_check(0.3, &[1e-3, 1e-2, 1e-1]).is_err());
    }

    #[test]
    fn round_case_volume_is_unchanged() {
        let f = FermiSphere::new(FRAC_PI_2, TAU, 0.2).unwrap();
        // α = 2π still alters g by r² vs sin²r and 1 vs cos²r, an O(ε_b⁴) correction
        let v = f.volume();
        assert!(v > 2.0 * PI * PI && v - 2.0 * PI * PI < 4.0 * PI * PI * 0.2f64.powi(4), "{v}");
        let g = FermiSphere::new(FRAC_PI_2, PI, 0.2).unwrap();
        assert!(g.volume() < f.volume());
    }

    #[test]
    fn round_ricci_is_two() {
        let metric = |y: [f64; 3]| {
            let (gpp, gtt) = round_components(0.7, y[0], y[1]);
            Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, gpp, gtt))
        };
        let lam = ricci_min_eigenvalue(&metric, [0.3, 1.0, 0.0]);
        assert!((lam - 2.0).abs() < 1e-4, "{lam}");
    }

    #[test]
    fn great_arcs_away_from_the_tube_are_geodesics() {
        let f = FermiSphere::new(FRAC_PI_2, PI, 0.2).unwrap();
        let p = f.point_from_chart(1.0, 0.0, 0.0).unwrap();
        let q = f.point_from_chart(1.2, 0.5, 0.3).unwrap();
        let d = f.distance(&p, &q).unwrap();
        assert!((d - great_circle_distance(&p.x, &q.x)).abs() < 1e-9);
    }

    #[test]
    fn shooting_through_the_tube_converges() {
        let f = FermiSphere::new(FRAC_PI_2, PI, 0.3).unwrap();
        let p = f.point_from_chart(0.5, 0.0, 0.0).unwrap();
        let q = f.point_from_chart(0.5, 0.2, 2.6).unwrap();
        let g = f.geodesic(&p, &q);
        let g = g.unwrap_or_else(|e| panic!("{e}"));
        assert!(g.min_r < 0.3);
        let back = f.geodesic(&q, &p).unwrap();
        assert!((back.length - g.length).abs() < 1e-6);
    }

    #[test]
    fn product_region_distance() {
        let f = FermiSphere::new(FRAC_PI_2, PI, 0.3).unwrap();
        let p = f.point_from_chart(0.05, 0.0, 0.0).unwrap();
        let q = f.point_from_chart(0.05, 0.0, PI).unwrap();
        // gap π in φ is gap π/2 on the cone of angle π
        let d = f.product_distance(&p, &q).unwrap();
        assert!((d - 0.05 * 2f64.sqrt()).abs() < 1e-12);
    }
}
