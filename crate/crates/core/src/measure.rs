//! Sampling from the Riemannian volume measure and Monte Carlo volume
//! estimates: balls, tubes around the singular set, Minkowski content.

use std::f64::consts::{PI, TAU};
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone::ConePoint;
use crate::error::{Error, Result};
use crate::fermi::{FermiPoint, FermiSphere};
use crate::link::{LinkPoint, LinkSpace};
use crate::model::{sample_cone_point, ModelPoint, StratifiedModel};
use crate::numeric::{integrate, sin_k, sphere_volume, unit_ball_volume, CompensatedSum};
use crate::report::{fmt_f64, CheckReport, CsvTable};

/// Samples per RNG stream; stream `i` covers samples `[i·CHUNK, (i+1)·CHUNK)`.
pub(crate) const CHUNK: usize = 4096;

pub(crate) fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

/// Independent seed for sub-experiment `tag` of a run seeded with `seed`.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ tag.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mean and standard error of `outputs` per-sample quantities over `n`
/// samples. Chunks run in parallel; partial sums are combined in chunk order,
/// so results do not depend on the number of workers.
pub(crate) fn mc_moments<F>(n: usize, seed: u64, outputs: usize, f: F) -> Vec<(f64, f64)>
where
    F: Fn(&mut ChaCha8Rng, &mut [f64]) + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let partials: Vec<Vec<(CompensatedSum, CompensatedSum)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(seed, c as u64);
            let count = CHUNK.min(n - c * CHUNK);
            let mut acc = vec![(CompensatedSum::new(), CompensatedSum::new()); outputs];
            let mut buf = vec![0.0; outputs];
            for _ in 0..count {
                buf.iter_mut().for_each(|b| *b = 0.0);
                f(&mut rng, &mut buf);
                for (a, &v) in acc.iter_mut().zip(&buf) {
                    a.0.add(v);
                    a.1.add(v * v);
                }
            }
            acc
        })
        .collect();
    let mut total = vec![(CompensatedSum::new(), CompensatedSum::new()); outputs];
    for part in &partials {
        for (t, p) in total.iter_mut().zip(part) {
            t.0.add(p.0.value());
            t.1.add(p.1.value());
        }
    }
    let nf = n as f64;
    total
        .iter()
        .map(|(s, s2)| {
            let mean = s.value() / nf;
            let var = if n > 1 { ((s2.value() / nf - mean * mean) * nf / (nf - 1.0)).max(0.0) } else { 0.0 };
            (mean, (var / nf).sqrt())
        })
        .collect()
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Weighted sample of the volume measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleCloud {
    pub points: Vec<ModelPoint>,
    pub weights: Vec<f64>,
    pub seed: u64,
    pub model_id: String,
    pub total_weight: f64,
}

impl SampleCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Draws `n` points from the volume measure of `model`. Weights sum to an
/// unbiased estimate of the total volume.
pub fn sample_points(model: &StratifiedModel, n: usize, seed: u64) -> Result<SampleCloud> {
    if n == 0 {
        return Err(Error::argument("sample count must be at least 1"));
    }
    let scale = model.proposal_volume() / n as f64;
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<Vec<(ModelPoint, f64)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(seed, c as u64);
            let count = CHUNK.min(n - c * CHUNK);
            (0..count)
                .map(|_| {
                    let (p, w) = model.sample_point(&mut rng);
                    (p, w * scale)
                })
                .collect()
        })
        .collect();
    let mut points = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let mut total = CompensatedSum::new();
    for part in parts {
        for (p, w) in part {
            total.add(w);
            points.push(p);
            weights.push(w);
        }
    }
    Ok(SampleCloud { points, weights, seed, model_id: model.model_hash(), total_weight: total.value() })
}

const HALTON_BASES: [usize; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

fn radical_inverse(mut i: usize, base: usize) -> f64 {
    let (mut f, mut r) = (1.0, 0.0);
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// `∫₀^t sinᵏ`, by the usual reduction formula.
fn sine_power_primitive(k: usize, t: f64) -> f64 {
    match k {
        0 => t,
        1 => 1.0 - t.cos(),
        _ => {
            let kf = k as f64;
            -t.sin().powi(k as i32 - 1) * t.cos() / kf + (kf - 1.0) / kf * sine_power_primitive(k - 2, t)
        }
    }
}

/// Quantile of the density `∝ sinᵏ t` on `[0, π]`.
pub(crate) fn sine_power_quantile(k: usize, u: f64) -> f64 {
    match k {
        0 => PI * u,
        1 => (1.0 - 2.0 * u).clamp(-1.0, 1.0).acos(),
        _ => {
            let total = sine_power_primitive(k, PI);
            let (mut lo, mut hi) = (0.0, PI);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if sine_power_primitive(k, mid) < u * total {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        }
    }
}

fn link_coordinates(link: &LinkSpace) -> usize {
    match link {
        LinkSpace::Circle { .. } => 1,
        LinkSpace::RoundSphere { dim } => *dim,
        LinkSpace::Suspension { base } => 1 + link_coordinates(base),
    }
}

/// Point of `S^m ⊂ ℝ^{m+1}` from `m` unit-cube coordinates (hyperspherical
/// angles through their marginal quantiles).
fn sphere_from_unit(m: usize, u: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(m + 1);
    let mut prod = 1.0;
    for (i, &ui) in u[..m - 1].iter().enumerate() {
        let theta = sine_power_quantile(m - 1 - i, ui);
        x.push(prod * theta.cos());
        prod *= theta.sin();
    }
    let phi = TAU * u[m - 1];
    x.push(prod * phi.cos());
    x.push(prod * phi.sin());
    x
}

fn link_from_unit(link: &LinkSpace, u: &[f64]) -> LinkPoint {
    match link {
        LinkSpace::Circle { .. } => LinkPoint::Circle(TAU * u[0]),
        LinkSpace::RoundSphere { dim } => LinkPoint::Sphere(sphere_from_unit(*dim, u)),
        LinkSpace::Suspension { base } => {
            LinkPoint::suspension(sine_power_quantile(base.dim(), u[0]), link_from_unit(base, &u[1..]))
        }
    }
}

/// Quasi-uniform cloud: a randomly shifted Halton sequence pushed through the
/// per-family inverse CDFs. Weights sum to the volume (up to the Fermi
/// density ratio). Used for kernel graphs, where iid density fluctuations
/// bias the low spectrum; Monte Carlo error bars need [`sample_points`].
pub fn sample_points_low_discrepancy(model: &StratifiedModel, n: usize, seed: u64) -> Result<SampleCloud> {
    if n == 0 {
        return Err(Error::argument("sample count must be at least 1"));
    }
    let coords = match model {
        StratifiedModel::RoundSphere { dim } => *dim,
        StratifiedModel::EuclideanCone { link, .. } => 1 + link_coordinates(link),
        StratifiedModel::Suspension { link } => 1 + link_coordinates(link),
        StratifiedModel::FermiSphere(_) => 3,
    };
    if coords > HALTON_BASES.len() {
        return Err(Error::unsupported(format!("low-discrepancy sampling supports at most {} coordinates", HALTON_BASES.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..coords).map(|_| rng.random::<f64>()).collect();
    let base_weight = model.proposal_volume() / n as f64;
    let draw = |i: usize| -> Result<(ModelPoint, f64)> {
        let u: Vec<f64> = (0..coords)
            .map(|k| {
                let v = (radical_inverse(i, HALTON_BASES[k]) + shift[k]).fract();
                v.clamp(1e-15, 1.0 - 1e-15)
            })
            .collect();
        Ok(match model {
            StratifiedModel::RoundSphere { dim } => (ModelPoint::Link(LinkPoint::Sphere(sphere_from_unit(*dim, &u))), base_weight),
            StratifiedModel::EuclideanCone { link, truncation_radius } => {
                let r = truncation_radius * u[0].powf(1.0 / model.dim() as f64);
                (ModelPoint::Cone(ConePoint { r, y: link_from_unit(link, &u[1..]) }), base_weight)
            }
            StratifiedModel::Suspension { link } => {
                let t = sine_power_quantile(link.dim(), u[0]);
                (ModelPoint::Link(LinkPoint::suspension(t, link_from_unit(link, &u[1..]))), base_weight)
            }
            StratifiedModel::FermiSphere(f) => {
                let x = sphere_from_unit(3, &u);
                let p = f.point([x[0], x[1], x[2], x[3]])?;
                let w = base_weight * f.density_ratio(p.r, p.phi);
                (ModelPoint::Fermi(p), w)
            }
        })
    };
    let drawn: Vec<Result<(ModelPoint, f64)>> = (1..=n).into_par_iter().map(draw).collect();
    let mut points = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let mut total = CompensatedSum::new();
    for d in drawn {
        let (p, w) = d?;
        total.add(w);
        points.push(p);
        weights.push(w);
    }
    Ok(SampleCloud { points, weights, seed, model_id: model.model_hash(), total_weight: total.value() })
}

fn cache_path(model: &StratifiedModel, n: usize, seed: u64) -> Option<PathBuf> {
    let dir = std::env::var_os("STRATLAB_CACHE_DIR")?;
    Some(PathBuf::from(dir).join(format!("cloud-{}-{seed}-{n}.bin", model.model_hash())))
}

/// [`sample_points`] backed by the binary cache in `$STRATLAB_CACHE_DIR`
/// (keyed by model hash, seed and size). Without the variable this is a
/// plain call.
pub fn sample_points_cached(model: &StratifiedModel, n: usize, seed: u64) -> Result<SampleCloud> {
    let Some(path) = cache_path(model, n, seed) else {
        return sample_points(model, n, seed);
    };
    if let Ok(bytes) = std::fs::read(&path) {
        if let Ok(cloud) = bincode::deserialize::<SampleCloud>(&bytes) {
            if cloud.model_id == model.model_hash() && cloud.seed == seed && cloud.len() == n {
                return Ok(cloud);
            }
        }
    }
    let cloud = sample_points(model, n, seed)?;
    let bytes = bincode::serialize(&cloud).map_err(|e| Error::Config(format!("cache encoding failed: {e}")))?;
    crate::report::write_atomic(&path, &bytes)?;
    Ok(cloud)
}

/// Importance proposal covering the region where an integrand is supported.
enum Proposal<'a> {
    Whole(&'a StratifiedModel),
    /// `{r ≤ radius}` inside a cone.
    SubCone { model: &'a StratifiedModel, radius: f64 },
    /// `{r_min ≤ r ≤ r_max}` inside a cone.
    ConeShell { model: &'a StratifiedModel, r_min: f64, r_max: f64 },
    /// Fermi tube `{r < r_max}` in chart coordinates, density ∝ r.
    FermiTube { sphere: &'a FermiSphere, r_max: f64 },
    /// Exact volume sampling of a polar band.
    Band(Band<'a>),
}

impl Proposal<'_> {
    /// Sample point and its weight (volume element divided by proposal density).
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (ModelPoint, f64) {
        match self {
            Proposal::Whole(model) => {
                let (p, w) = model.sample_point(rng);
                (p, w * model.proposal_volume())
            }
            Proposal::SubCone { model, radius } => {
                let StratifiedModel::EuclideanCone { link, .. } = model else { unreachable!() };
                let n = (link.dim() + 1) as f64;
                let vol = link.volume() * radius.powf(n) / n;
                (ModelPoint::Cone(sample_cone_point(link, *radius, rng)), vol)
            }
            Proposal::ConeShell { model, r_min, r_max } => {
                let StratifiedModel::EuclideanCone { link, .. } = model else { unreachable!() };
                let n = (link.dim() + 1) as f64;
                let (lo, hi) = (r_min.powf(n), r_max.powf(n));
                let vol = link.volume() * (hi - lo) / n;
                let u: f64 = rng.random();
                let r = (lo + u * (hi - lo)).powf(1.0 / n);
                (ModelPoint::Cone(crate::cone::ConePoint { r, y: link.sample(rng) }), vol)
            }
            Proposal::FermiTube { sphere, r_max } => loop {
                let u: f64 = rng.random();
                if u == 0.0 {
                    continue;
                }
                let r = r_max * u.sqrt();
                let theta = rng.random::<f64>() * TAU;
                let phi = rng.random::<f64>() * TAU;
                let pdf = 2.0 * r / (r_max * r_max) / (TAU * TAU);
                let (gpp, gtt) = sphere.blended_components(r, phi);
                let x = sphere.embed(r, theta, phi);
                break (ModelPoint::Fermi(FermiPoint { x, r, theta, phi }), (gpp * gtt).sqrt() / pdf);
            },
            Proposal::Band(band) => (band.draw(rng), band.volume()),
        }
    }
}

/// Whether `x ∈ B(center, radius)` (open ball), using cheap bounds first on
/// the Fermi sphere.
pub(crate) fn in_ball(model: &StratifiedModel, center: &ModelPoint, x: &ModelPoint, radius: f64) -> Result<bool> {
    if let (StratifiedModel::FermiSphere(f), ModelPoint::Fermi(c), ModelPoint::Fermi(p)) = (model, center, x) {
        if f.distance_lower_bound(c, p) >= radius {
            return Ok(false);
        }
    }
    Ok(model.distance_unchecked(center, x)? < radius)
}

/// Proposals whose union covers `B(center, radius)`, with sample shares.
fn ball_proposals<'a>(model: &'a StratifiedModel, center: &ModelPoint, radius: f64) -> Vec<(Proposal<'a>, f64)> {
    match (model, center) {
        (StratifiedModel::EuclideanCone { truncation_radius, .. }, ModelPoint::Cone(c)) => {
            let r_max = truncation_radius.min(c.r + radius);
            if c.r > radius {
                vec![(Proposal::ConeShell { model, r_min: c.r - radius, r_max }, 1.0)]
            } else {
                vec![(Proposal::SubCone { model, radius: r_max }, 1.0)]
            }
        }
        (StratifiedModel::FermiSphere(f), ModelPoint::Fermi(c)) => {
            if c.r + radius < f.blend_radius {
                vec![(Proposal::FermiTube { sphere: f, r_max: c.r + radius }, 1.0)]
            } else {
                vec![(Proposal::FermiTube { sphere: f, r_max: f.blend_radius }, 0.5), (Proposal::Whole(model), 0.5)]
            }
        }
        // a ball about (t₀, y) lies in the band |t − t₀| < r
        (StratifiedModel::Suspension { link }, ModelPoint::Link(LinkPoint::Suspension { t, .. })) => {
            let band = Band::Suspension { link, lo: (t - radius).max(0.0), hi: (t + radius).min(PI), flip: false };
            vec![(Proposal::Band(band), 1.0)]
        }
        (StratifiedModel::RoundSphere { dim }, ModelPoint::Link(LinkPoint::Sphere(c))) if *dim >= 2 => {
            vec![(Proposal::Band(Band::Sphere { dim: *dim, center: c.clone(), lo: 0.0, hi: radius.min(PI) }), 1.0)]
        }
        _ => vec![(Proposal::Whole(model), 1.0)],
    }
}

/// Integral of `integrand(point)` against the volume measure, split over
/// proposals: the tube chart covers `r < ε_b` and the whole-sphere proposal
/// only counts `r ≥ ε_b` (a sharp partition of unity).
fn integrate_proposals<F>(
    model: &StratifiedModel,
    proposals: &[(Proposal<'_>, f64)],
    n: usize,
    seed: u64,
    outputs: usize,
    integrand: F,
) -> Vec<(f64, f64)>
where
    F: Fn(&ModelPoint, &mut [f64]) + Sync,
{
    let mut acc = vec![(0.0, 0.0); outputs];
    let split = proposals.len() > 1;
    for (idx, (proposal, share)) in proposals.iter().enumerate() {
        let m = ((n as f64 * share).round() as usize).max(1);
        let tube_cut = match (proposal, model) {
            (Proposal::Whole(_), StratifiedModel::FermiSphere(f)) if split => Some(f.blend_radius),
            _ => None,
        };
        let sub_seed = if idx == 0 { seed } else { derive_seed(seed, idx as u64) };
        let moments = mc_moments(m, sub_seed, outputs, |rng, out| {
            let (p, w) = proposal.draw(rng);
            if let (Some(cut), ModelPoint::Fermi(fp)) = (tube_cut, &p) {
                if fp.r < cut {
                    return;
                }
            }
            let mut vals = vec![0.0; out.len()];
            integrand(&p, &mut vals);
            for (o, v) in out.iter_mut().zip(vals) {
                *o = w * v;
            }
        });
        for (a, (mean, se)) in acc.iter_mut().zip(moments) {
            a.0 += mean;
            a.1 = (a.1 * a.1 + se * se).sqrt();
        }
    }
    acc
}

/// Monte Carlo volume of the open ball `B(center, r)`.
pub fn ball_volume_mc(model: &StratifiedModel, center: &ModelPoint, r: f64, n: usize, seed: u64) -> Result<Estimate> {
    Ok(ball_volumes_mc(model, center, &[r], n, seed)?[0])
}

/// Ball volumes for several radii, each with its own tailored proposal and
/// independent seed.
pub fn ball_volumes_mc(
    model: &StratifiedModel,
    center: &ModelPoint,
    radii: &[f64],
    n: usize,
    seed: u64,
) -> Result<Vec<Estimate>> {
    model.validate_point(center)?;
    if n == 0 {
        return Err(Error::argument("sample count must be at least 1"));
    }
    let mut out = Vec::with_capacity(radii.len());
    for (i, &r) in radii.iter().enumerate() {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::domain(format!("ball radius {r} must be positive")));
        }
        let s = if i == 0 { seed } else { derive_seed(seed, 1000 + i as u64) };
        let proposals = ball_proposals(model, center, r);
        let failure = std::sync::Mutex::new(None);
        let est = integrate_proposals(model, &proposals, n, s, 1, |p, out| match in_ball(model, center, p, r) {
            Ok(inside) => out[0] = if inside { 1.0 } else { 0.0 },
            Err(e) => {
                failure.lock().expect("poisoned").get_or_insert(e);
            }
        });
        if let Some(e) = failure.into_inner().expect("poisoned") {
            return Err(e);
        }
        out.push(Estimate { value: est[0].0, stderr: est[0].1, samples: n, seed: s });
    }
    Ok(out)
}

/// `v_k(r) = nω_n ∫₀^r sin_k(t)^{n−1} dt`, with `r` clamped to `π/√k` for
/// `k > 0`. The flag reports whether clamping happened.
pub fn model_ball_volume_clamped(n: usize, k: f64, r: f64) -> (f64, bool) {
    let mut r = r.max(0.0);
    let mut clamped = false;
    if k > 0.0 && r > PI / k.sqrt() {
        r = PI / k.sqrt();
        clamped = true;
    }
    let area = sphere_volume(n - 1);
    let value = area * integrate(|t| sin_k(k, t).powi(n as i32 - 1), 0.0, r, 1e-10);
    (value, clamped)
}

pub fn model_ball_volume(n: usize, k: f64, r: f64) -> f64 {
    model_ball_volume_clamped(n, k, r).0
}

/// Fits the Ahlfors constant `C` with `C⁻¹rⁿ ≤ vol B(x, r) ≤ C rⁿ` (relative
/// to the Euclidean ball volume) over `radii`.
pub fn ahlfors_check(
    model: &StratifiedModel,
    x: &ModelPoint,
    radii: &[f64],
    n: usize,
    seed: u64,
) -> Result<CheckReport> {
    if radii.is_empty() {
        return Err(Error::argument("Ahlfors check needs at least one radius"));
    }
    let dim = model.dim();
    let est = ball_volumes_mc(model, x, radii, n, seed)?;
    let ratios: Vec<f64> = est
        .iter()
        .zip(radii)
        .map(|(e, r)| e.value / (unit_ball_volume(dim) * r.powi(dim as i32)))
        .collect();
    let c = ratios.iter().fold(1.0f64, |m, &q| m.max(q).max(1.0 / q));
    let margin = if c.is_finite() { 0.0 } else { f64::NEG_INFINITY };
    Ok(CheckReport::new("ahlfors", margin, 0.0, n * radii.len(), Some(seed))
        .with("C", c)
        .with("radii", radii)
        .with("ratios", ratios)
        .with("stderr", est.iter().map(|e| e.stderr).collect::<Vec<_>>()))
}

/// `vol B(x, 2r) / vol B(x, r)` with a delta-method standard error.
pub fn doubling_ratio(model: &StratifiedModel, x: &ModelPoint, r: f64, n: usize, seed: u64) -> Result<Estimate> {
    let est = ball_volumes_mc(model, x, &[r, 2.0 * r], n, seed)?;
    let (v1, v2) = (est[0], est[1]);
    let ratio = v2.value / v1.value;
    let se = ((v2.stderr / v1.value).powi(2) + (v2.value * v1.stderr / (v1.value * v1.value)).powi(2)).sqrt();
    Ok(Estimate { value: ratio, stderr: se, samples: 2 * n, seed })
}

/// Monte Carlo volume of `Σ^ε = {d(·, Σ) < ε}`; zero for smooth models.
pub fn tubular_volume(model: &StratifiedModel, eps: f64, n: usize, seed: u64) -> Result<Estimate> {
    if !(eps > 0.0) {
        return Err(Error::domain("tube radius must be positive"));
    }
    if !model.has_singular_set() {
        return Ok(Estimate { value: 0.0, stderr: 0.0, samples: 0, seed });
    }
    let proposals: Vec<(Proposal<'_>, f64)> = match model {
        StratifiedModel::EuclideanCone { link, truncation_radius } if link.dim() == 1 => {
            vec![(Proposal::SubCone { model, radius: eps.min(*truncation_radius) }, 1.0)]
        }
        StratifiedModel::FermiSphere(f) if eps <= f.blend_radius => {
            vec![(Proposal::FermiTube { sphere: f, r_max: eps }, 1.0)]
        }
        StratifiedModel::FermiSphere(f) => {
            vec![(Proposal::FermiTube { sphere: f, r_max: f.blend_radius }, 0.5), (Proposal::Whole(model), 0.5)]
        }
        _ => vec![(Proposal::Whole(model), 1.0)],
    };
    let est = integrate_proposals(model, &proposals, n, seed, 1, |p, out| {
        out[0] = match model.singular_distance(p) {
            Some(d) if d < eps => 1.0,
            _ => 0.0,
        };
    });
    Ok(Estimate { value: est[0].0, stderr: est[0].1, samples: n, seed })
}

/// Region types supported by [`minkowski_content`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    Empty,
    Ball { center: ModelPoint, radius: f64 },
    /// `{t < t_max}` in a suspension (or `{x_last > cos t_max}`-type caps are
    /// better expressed as balls about a pole).
    SuspensionSublevel { t_max: f64 },
}

impl Region {
    /// Distance from `x` to the region, and whether `x` lies in it.
    fn distance(&self, model: &StratifiedModel, x: &ModelPoint) -> Result<f64> {
        match self {
            Region::Empty => Ok(f64::INFINITY),
            Region::Ball { center, radius } => Ok((model.distance_unchecked(center, x)? - radius).max(0.0)),
            Region::SuspensionSublevel { t_max } => match x {
                ModelPoint::Link(LinkPoint::Suspension { t, .. }) => Ok((t - t_max).max(0.0)),
                _ => Err(Error::argument("coordinate sublevel regions need a suspension model")),
            },
        }
    }

    fn contains(&self, model: &StratifiedModel, x: &ModelPoint) -> Result<bool> {
        match self {
            Region::Empty => Ok(false),
            Region::Ball { center, radius } => Ok(model.distance_unchecked(center, x)? < *radius),
            Region::SuspensionSublevel { t_max } => match x {
                ModelPoint::Link(LinkPoint::Suspension { t, .. }) => Ok(t < t_max),
                _ => Err(Error::argument("coordinate sublevel regions need a suspension model")),
            },
        }
    }
}

/// Outer Minkowski content with ladder diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinkowskiEstimate {
    pub content: f64,
    pub stderr: f64,
    /// Normalized measure `m(E)`.
    pub measure: f64,
    pub measure_stderr: f64,
    /// `(ε, (m(E^ε) − m(E))/ε, stderr)` along the ladder.
    pub forward: Vec<(f64, f64, f64)>,
    /// `(ε, extrapolated value, stderr)` from consecutive ladder pairs.
    pub extrapolated: Vec<(f64, f64, f64)>,
    pub samples: usize,
    pub seed: u64,
}

/// Shell `{0 < d(·, E) < width}` of a cap-like region, sampled exactly in
/// geodesic polar coordinates about a pole of the region.
enum Band<'a> {
    /// Suspension points with `t ∈ (lo, hi)` (or `π − t` when flipped).
    Suspension { link: &'a LinkSpace, lo: f64, hi: f64, flip: bool },
    /// Round-sphere points at polar angle `(lo, hi)` about `center`.
    Sphere { dim: usize, center: Vec<f64>, lo: f64, hi: f64 },
}

/// Inverse CDF of `∝ sinᵏ` restricted to `[lo, hi]`.
fn sine_power_quantile_on(k: usize, lo: f64, hi: f64, u: f64) -> f64 {
    let f0 = sine_power_primitive(k, lo);
    let target = f0 + u * (sine_power_primitive(k, hi) - f0);
    let (mut a, mut b) = (lo, hi);
    for _ in 0..60 {
        let mid = 0.5 * (a + b);
        if sine_power_primitive(k, mid) < target {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

impl Band<'_> {
    fn volume(&self) -> f64 {
        match self {
            Band::Suspension { link, lo, hi, .. } => {
                let k = link.dim();
                link.volume() * (sine_power_primitive(k, *hi) - sine_power_primitive(k, *lo))
            }
            Band::Sphere { dim, lo, hi, .. } => {
                let k = dim - 1;
                sphere_volume(k) * (sine_power_primitive(k, *hi) - sine_power_primitive(k, *lo))
            }
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> ModelPoint {
        match self {
            Band::Suspension { link, lo, hi, flip } => {
                let s = sine_power_quantile_on(link.dim(), *lo, *hi, rng.random());
                let t = if *flip { PI - s } else { s };
                ModelPoint::Link(LinkPoint::suspension(t, link.sample(rng)))
            }
            Band::Sphere { dim, center, lo, hi } => {
                let s = sine_power_quantile_on(dim - 1, *lo, *hi, rng.random());
                let u = loop {
                    let mut v: Vec<f64> = (0..=*dim).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
                    let along: f64 = v.iter().zip(center).map(|(a, b)| a * b).sum();
                    v.iter_mut().zip(center).for_each(|(a, b)| *a -= along * b);
                    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                    if norm > 1e-9 {
                        break v.into_iter().map(|a| a / norm).collect::<Vec<_>>();
                    }
                };
                let x = center.iter().zip(&u).map(|(c, v)| s.cos() * c + s.sin() * v).collect();
                ModelPoint::Link(LinkPoint::Sphere(x))
            }
        }
    }
}

fn band_for<'a>(model: &'a StratifiedModel, region: &Region, width: f64) -> Option<Band<'a>> {
    match (model, region) {
        (StratifiedModel::Suspension { link }, Region::SuspensionSublevel { t_max }) => {
            Some(Band::Suspension { link, lo: *t_max, hi: (t_max + width).min(PI), flip: false })
        }
        (StratifiedModel::Suspension { link }, Region::Ball { center: ModelPoint::Link(LinkPoint::Suspension { t, .. }), radius })
            if *t == 0.0 || *t == PI =>
        {
            Some(Band::Suspension { link, lo: *radius, hi: (radius + width).min(PI), flip: *t == PI })
        }
        (StratifiedModel::RoundSphere { dim }, Region::Ball { center: ModelPoint::Link(LinkPoint::Sphere(c)), radius })
            if *dim >= 2 =>
        {
            Some(Band::Sphere { dim: *dim, center: c.clone(), lo: *radius, hi: (radius + width).min(PI) })
        }
        _ => None,
    }
}

/// Outer Minkowski content `m⁺(E) = liminf (m(E^ε) − m(E))/ε` for the
/// normalized measure, via forward differences over `ladder` with linear
/// extrapolation of consecutive pairs; the liminf is taken as the minimum of
/// the extrapolated values. Caps and coordinate sublevels sample their shell
/// directly; other regions fall back to whole-model sampling.
pub fn minkowski_content(
    model: &StratifiedModel,
    region: &Region,
    ladder: &[f64],
    n: usize,
    seed: u64,
) -> Result<MinkowskiEstimate> {
    if ladder.len() < 2 {
        return Err(Error::argument("Minkowski ladder needs at least two values"));
    }
    if ladder.windows(2).any(|w| w[1] >= w[0]) || ladder.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::argument("Minkowski ladder must be positive and strictly decreasing"));
    }
    if let Region::Ball { center, .. } = region {
        model.validate_point(center)?;
    }
    if matches!(region, Region::Empty) {
        return Ok(MinkowskiEstimate {
            content: 0.0,
            stderr: 0.0,
            measure: 0.0,
            measure_stderr: 0.0,
            forward: ladder.iter().map(|&e| (e, 0.0, 0.0)).collect(),
            extrapolated: ladder.windows(2).map(|w| (w[1], 0.0, 0.0)).collect(),
            samples: 0,
            seed,
        });
    }
    if n == 0 {
        return Err(Error::argument("sample count must be at least 1"));
    }
    let total = model.volume();
    let k = ladder.len();
    let failure = std::sync::Mutex::new(None);
    let record = |res: Result<()>| {
        if let Err(e) = res {
            failure.lock().expect("poisoned").get_or_insert(e);
        }
    };
    // per-sample outputs: shells D_1..D_k, then extrapolations R_1..R_{k-1}
    let shells = |d: f64, w: f64, out: &mut [f64]| {
        for i in 0..k {
            out[i] = if d > 0.0 && d < ladder[i] { w / (total * ladder[i]) } else { 0.0 };
        }
        for i in 0..k - 1 {
            let (a, b) = (ladder[i], ladder[i + 1]);
            out[k + i] = (a * out[i + 1] - b * out[i]) / (a - b);
        }
    };
    let band = band_for(model, region, ladder[0]);
    let (measure, shell_est) = match &band {
        Some(band) => {
            let vol = band.volume();
            let m = mc_moments(n, seed, 1, |rng, out| {
                let (p, w) = model.sample_point(rng);
                record(region.contains(model, &p).map(|inside| {
                    out[0] = if inside { w * model.proposal_volume() / total } else { 0.0 };
                }));
            });
            let sh = mc_moments(n, derive_seed(seed, 1), 2 * k - 1, |rng, out| {
                let p = band.draw(rng);
                record(region.distance(model, &p).map(|d| shells(d, vol, out)));
            });
            (m[0], sh)
        }
        None => {
            let all = mc_moments(n, seed, 2 * k, |rng, out| {
                let (p, w) = model.sample_point(rng);
                let w = w * model.proposal_volume();
                record((|| -> Result<()> {
                    if region.contains(model, &p)? {
                        out[0] = w / total;
                    } else {
                        shells(region.distance(model, &p)?, w, &mut out[1..]);
                    }
                    Ok(())
                })());
            });
            (all[0], all[1..].to_vec())
        }
    };
    if let Some(e) = failure.into_inner().expect("poisoned") {
        return Err(e);
    }
    let forward: Vec<(f64, f64, f64)> = (0..k).map(|i| (ladder[i], shell_est[i].0, shell_est[i].1)).collect();
    let extrapolated: Vec<(f64, f64, f64)> =
        (0..k - 1).map(|i| (ladder[i + 1], shell_est[k + i].0, shell_est[k + i].1)).collect();
    let (_, content, stderr) = *extrapolated
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("ladder has at least one pair");
    Ok(MinkowskiEstimate {
        content,
        stderr,
        measure: measure.0,
        measure_stderr: measure.1,
        forward,
        extrapolated,
        samples: n,
        seed,
    })
}

/// Rows `(model, center, r, estimate, stderr, n, seed)` for volume reports.
pub fn volume_csv(rows: &[(String, String, f64, Estimate)]) -> String {
    let mut table = CsvTable::new(&["model", "center", "r", "estimate", "stderr", "n", "seed"]);
    for (model, center, r, e) in rows {
        table.push(vec![
            model.clone(),
            center.clone(),
            fmt_f64(*r),
            fmt_f64(e.value),
            fmt_f64(e.stderr),
            e.samples.to_string(),
            e.seed.to_string(),
        ]);
    }
    table.render()
}

/// Apex of a cone model (convenience for experiments and the CLI).
pub fn cone_apex(model: &StratifiedModel) -> Option<ModelPoint> {
    match model {
        StratifiedModel::EuclideanCone { link, .. } => {
            let mut rng = chunk_rng(0, 0);
            Some(ModelPoint::Cone(ConePoint { r: 0.0, y: link.sample(&mut rng) }))
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_ball_volume_closed_forms() {
        assert!((model_ball_volume(2, 0.0, 1.3) - PI * 1.69).abs() < 1e-12);
        assert!((model_ball_volume(2, 1.0, 0.7) - TAU * (1.0 - 0.7f64.cos())).abs() < 1e-12);
        assert!((model_ball_volume(3, 1.0, PI) - 2.0 * PI * PI).abs() < 1e-10);
        let (v, clamped) = model_ball_volume_clamped(2, 1.0, 4.0);
        assert!(clamped && (v - 4.0 * PI).abs() < 1e-10);
        assert!(model_ball_volume(2, -1.0, 1.0) > PI);
    }

    #[test]
    fn moments_do_not_depend_on_thread_count() {
        let f = |rng: &mut ChaCha8Rng, out: &mut [f64]| out[0] = rng.random::<f64>();
        let a = mc_moments(50_000, 7, 1, f);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| mc_moments(50_000, 7, 1, f));
        assert_eq!(a, b);
        assert!((a[0].0 - 0.5).abs() < 4.0 * a[0].1);
    }

    #[test]
    fn apex_ball_is_half_angle_r_squared() {
        let alpha = 0.8 * PI;
        let model = StratifiedModel::flat_cone(alpha, 2.0).unwrap();
        let apex = cone_apex(&model).unwrap();
        let e = ball_volume_mc(&model, &apex, 0.5, 1, 3).unwrap();
        // the sub-cone proposal coincides with the ball: zero variance
        assert!((e.value - 0.5 * alpha * 0.25).abs() < 1e-12);
        let t = tubular_volume(&model, 0.1, 10, 3).unwrap();
        assert!((t.value - 0.5 * alpha * 0.01).abs() < 1e-12);
    }

    #[test]
    fn smooth_models_have_no_tube() {
        let s = StratifiedModel::round_sphere(3).unwrap();
        assert_eq!(tubular_volume(&s, 0.1, 100, 1).unwrap().value, 0.0);
    }

    #[test]
    fn ladder_must_decrease() {
        let s = StratifiedModel::spherical_suspension(2, PI).unwrap();
        let r = Region::SuspensionSublevel { t_max: 1.0 };
        assert!(minkowski_content(&s, &r, &[0.1, 0.2], 10, 0).is_err());
        let e = minkowski_content(&s, &Region::Empty, &[0.2, 0.1], 10, 0).unwrap();
        assert_eq!(e.content, 0.0);
    }

    #[test]
    fn half_spaces_have_equatorial_content() {
        let ladder = [0.2, 0.1, 0.05, 0.025];
        let s2 = StratifiedModel::round_sphere(2).unwrap();
        let north = ModelPoint::Link(LinkPoint::Sphere(vec![0.0, 0.0, 1.0]));
        let e = minkowski_content(&s2, &Region::Ball { center: north, radius: PI / 2.0 }, &ladder, 200_000, 3).unwrap();
        assert!((e.content - 0.5).abs() < 0.01, "{e:?}");
        assert!((e.measure - 0.5).abs() < 0.005);
        let s3 = StratifiedModel::round_sphere(3).unwrap();
        let north = ModelPoint::Link(LinkPoint::Sphere(vec![0.0, 0.0, 0.0, 1.0]));
        let e = minkowski_content(&s3, &Region::Ball { center: north, radius: PI / 2.0 }, &ladder, 200_000, 4).unwrap();
        assert!((e.content - 2.0 / PI).abs() < 0.015, "{e:?}");
        let susp = StratifiedModel::spherical_suspension(2, PI).unwrap();
        let e = minkowski_content(&susp, &Region::SuspensionSublevel { t_max: PI / 2.0 }, &ladder, 200_000, 5).unwrap();
        assert!((e.content - 0.5).abs() < 0.01, "{e:?}");
    }
}
