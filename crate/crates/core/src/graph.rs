//! Kernel graphs on weighted sample clouds and graph shortest paths.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::gamma_lr;

use crate::error::{Error, Result};
use crate::link::LinkPoint;
use crate::measure::SampleCloud;
use crate::model::{ModelPoint, StratifiedModel};
use crate::numeric::unit_ball_volume;

/// Kernel support in units of the bandwidth.
pub const CUTOFF: f64 = 4.0;

/// Weighted point cloud with its Gaussian-kernel graph.
///
/// Adjacency is stored in CSR form, symmetric, and includes the self loop
/// (`d = 0`, kernel weight 1).
#[derive(Debug, Clone, Serialize)]
pub struct DiscreteApproximation {
    pub points: Vec<ModelPoint>,
    /// Sample masses from the cloud (volume weights).
    pub weights: Vec<f64>,
    pub eps: f64,
    pub dim: usize,
    /// Second-moment correction of the truncated kernel; the Laplacian is
    /// `(I − P)/(c ε²)`.
    pub normalization: f64,
    pub offsets: Vec<usize>,
    pub neighbors: Vec<u32>,
    pub distances: Vec<f64>,
    /// Raw kernel weights `exp(−d²/(4ε²))` per CSR entry.
    pub kernel: Vec<f64>,
    /// Kernel divided by the kernel density estimates at both ends, which
    /// removes sampling-density fluctuations from the random walk.
    pub affinity: Vec<f64>,
    /// `d_i = Σ_j m_j a_ij` for the affinity `a`.
    pub degree: Vec<f64>,
    /// Node measure `m_i d_i / κ` (κ the kernel mass) making the random walk reversible; sums to
    /// roughly the total volume.
    pub measure: Vec<f64>,
    pub model_id: String,
}

/// Normalization `c = P(n/2 + 1, 4)/P(n/2, 4)` of the Gaussian kernel
/// truncated at `d ≤ 4ε` (`P` the regularized lower incomplete gamma).
pub fn kernel_normalization(dim: usize) -> f64 {
    let x = CUTOFF * CUTOFF / 4.0;
    let a = dim as f64 / 2.0;
    gamma_lr(a + 1.0, x) / gamma_lr(a, x)
}

/// `∫ k(|y|) dy` over the truncated support in dimension `dim`.
fn kernel_mass(dim: usize, eps: f64) -> f64 {
    let a = dim as f64 / 2.0;
    (4.0 * std::f64::consts::PI * eps * eps).powf(a) * gamma_lr(a, CUTOFF * CUTOFF / 4.0)
}

/// A 1-Lipschitz coordinate used to prune pair searches.
fn sweep_key(p: &ModelPoint) -> f64 {
    match p {
        ModelPoint::Cone(c) => c.r,
        ModelPoint::Fermi(f) => f.r,
        ModelPoint::Link(LinkPoint::Suspension { t, .. }) => *t,
        ModelPoint::Link(LinkPoint::Sphere(x)) => x.last().copied().unwrap_or(0.0).clamp(-1.0, 1.0).acos(),
        ModelPoint::Link(LinkPoint::Circle(_)) => 0.0,
    }
}

/// All pairs `i < j` with `d(x_i, x_j) ≤ radius`, as `(i, j, d)`.
pub(crate) fn pairs_within(model: &StratifiedModel, points: &[ModelPoint], radius: f64) -> Result<Vec<(u32, u32, f64)>> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    let keys: Vec<f64> = points.iter().map(sweep_key).collect();
    order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]).then(a.cmp(&b)));
    let per_node: Vec<Result<Vec<(u32, u32, f64)>>> = (0..order.len())
        .into_par_iter()
        .map(|a| {
            let i = order[a];
            let mut found = Vec::new();
            for &j in &order[a + 1..] {
                if keys[j] - keys[i] > radius {
                    break;
                }
                let d = model.distance_unchecked(&points[i], &points[j])?;
                if d <= radius {
                    let (lo, hi) = if i < j { (i, j) } else { (j, i) };
                    found.push((lo as u32, hi as u32, d));
                }
            }
            Ok(found)
        })
        .collect();
    let mut pairs = Vec::new();
    for chunk in per_node {
        pairs.extend(chunk?);
    }
    pairs.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    Ok(pairs)
}

fn to_csr(n: usize, pairs: &[(u32, u32, f64)]) -> (Vec<usize>, Vec<u32>, Vec<f64>) {
    let mut count = vec![1usize; n];
    for &(i, j, _) in pairs {
        count[i as usize] += 1;
        count[j as usize] += 1;
    }
    let mut offsets = vec![0usize; n + 1];
    for i in 0..n {
        offsets[i + 1] = offsets[i] + count[i];
    }
    let mut fill = offsets[..n].to_vec();
    let mut neighbors = vec![0u32; offsets[n]];
    let mut distances = vec![0.0; offsets[n]];
    for i in 0..n {
        neighbors[fill[i]] = i as u32;
        fill[i] += 1;
    }
    for &(i, j, d) in pairs {
        for (a, b) in [(i, j), (j, i)] {
            let slot = fill[a as usize];
            neighbors[slot] = b;
            distances[slot] = d;
            fill[a as usize] += 1;
        }
    }
    (offsets, neighbors, distances)
}

fn connected(offsets: &[usize], neighbors: &[u32]) -> usize {
    let n = offsets.len() - 1;
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut reached = 1;
    while let Some(i) = stack.pop() {
        for &j in &neighbors[offsets[i]..offsets[i + 1]] {
            let j = j as usize;
            if !seen[j] {
                seen[j] = true;
                reached += 1;
                stack.push(j);
            }
        }
    }
    reached
}

/// Gaussian-kernel graph `w_ij = exp(−d_ij²/(4ε²))` on pairs with
/// `d_ij ≤ 4ε`. Fails with a resolution error when the graph is disconnected.
pub fn build_graph(model: &StratifiedModel, cloud: &SampleCloud, eps: f64) -> Result<DiscreteApproximation> {
    if cloud.is_empty() {
        return Err(Error::argument("sample cloud is empty"));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::domain(format!("bandwidth {eps} must be positive")));
    }
    if cloud.weights.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::argument("sample weights must be positive"));
    }
    let n = cloud.len();
    let pairs = pairs_within(model, &cloud.points, CUTOFF * eps)?;
    let (offsets, neighbors, distances) = to_csr(n, &pairs);
    let reached = connected(&offsets, &neighbors);
    if reached < n {
        return Err(Error::Resolution(format!(
            "kernel graph is disconnected ({reached} of {n} nodes reachable at ε = {eps}); increase ε or the sample count"
        )));
    }
    Ok(assemble(cloud.points.clone(), cloud.weights.clone(), model.dim(), eps, offsets, neighbors, distances, model.model_hash()))
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    points: Vec<ModelPoint>,
    weights: Vec<f64>,
    dim: usize,
    eps: f64,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    distances: Vec<f64>,
    model_id: String,
) -> DiscreteApproximation {
    let n = points.len();
    let raw: Vec<f64> = distances.iter().map(|d| (-d * d / (4.0 * eps * eps)).exp()).collect();
    let kappa = kernel_mass(dim, eps);
    let row_sum = |k: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| (offsets[i]..offsets[i + 1]).map(|e| weights[neighbors[e] as usize] * k[e]).sum())
            .collect()
    };
    // divide out the empirical density so sampling fluctuations do not bias P
    let density: Vec<f64> = row_sum(&raw).iter().map(|q| q / kappa).collect();
    let affinity: Vec<f64> = (0..n)
        .flat_map(|i| (offsets[i]..offsets[i + 1]).map(move |e| (i, e)))
        .map(|(i, e)| raw[e] / (density[i] * density[neighbors[e] as usize]))
        .collect();
    let degree = row_sum(&affinity);
    let measure = weights.iter().zip(&degree).map(|(m, d)| m * d / kappa).collect();
    DiscreteApproximation {
        points,
        weights,
        eps,
        dim,
        normalization: kernel_normalization(dim),
        offsets,
        neighbors,
        distances,
        kernel: raw,
        affinity,
        degree,
        measure,
        model_id,
    }
}

impl DiscreteApproximation {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        (self.neighbors.len() - self.len()) / 2
    }

    /// Transition probabilities `P_ij = m_j a_ij / d_i` of row `i`, paired with `j`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.offsets[i]..self.offsets[i + 1]).map(move |e| {
            let j = self.neighbors[e] as usize;
            (j, self.weights[j] * self.affinity[e] / self.degree[i])
        })
    }

    fn scale(&self) -> f64 {
        1.0 / (self.normalization * self.eps * self.eps)
    }

    /// Positive graph Laplacian `L f = (f − P f)/(c ε²)`, approximating `−Δ_g`.
    pub fn laplacian(&self, f: &[f64]) -> Vec<f64> {
        let s = self.scale();
        (0..self.len())
            .into_par_iter()
            .map(|i| s * self.row(i).map(|(j, p)| p * (f[i] - f[j])).sum::<f64>())
            .collect()
    }

    /// The same cloud with bandwidth `h ≤ ε`, reusing the neighbour lists.
    /// Used for two-scale discretization error estimates.
    pub fn rescaled(&self, h: f64) -> Result<DiscreteApproximation> {
        if !(h > 0.0 && h <= self.eps) {
            return Err(Error::argument(format!("rescaled bandwidth {h} must lie in (0, {}]", self.eps)));
        }
        let n = self.len();
        let mut offsets = vec![0usize; n + 1];
        let mut neighbors = Vec::new();
        let mut distances = Vec::new();
        for i in 0..n {
            for e in self.offsets[i]..self.offsets[i + 1] {
                if self.distances[e] <= CUTOFF * h {
                    neighbors.push(self.neighbors[e]);
                    distances.push(self.distances[e]);
                }
            }
            offsets[i + 1] = neighbors.len();
        }
        if connected(&offsets, &neighbors) < n {
            return Err(Error::Resolution(format!("kernel graph is disconnected at bandwidth {h}")));
        }
        Ok(assemble(self.points.clone(), self.weights.clone(), self.dim, h, offsets, neighbors, distances, self.model_id.clone()))
    }

    /// Sampling standard error of `(L f)_i` seen as a kernel average.
    pub fn laplacian_stderr(&self, f: &[f64]) -> Vec<f64> {
        let s = self.scale();
        (0..self.len())
            .into_par_iter()
            .map(|i| {
                let mean: f64 = self.row(i).map(|(j, p)| p * (f[j] - f[i])).sum();
                let var: f64 = self.row(i).map(|(j, p)| p * p * (f[j] - f[i] - mean).powi(2)).sum();
                s * var.sqrt()
            })
            .collect()
    }

    /// Carré du champ `Γ(f, g)_i = ½ Σ_j P_ij (f_j − f_i)(g_j − g_i)/(c ε²)`.
    pub fn carre_du_champ(&self, f: &[f64], g: &[f64]) -> Vec<f64> {
        let s = 0.5 * self.scale();
        (0..self.len())
            .into_par_iter()
            .map(|i| s * self.row(i).map(|(j, p)| p * (f[j] - f[i]) * (g[j] - g[i])).sum::<f64>())
            .collect()
    }

    /// `∫ f` against the node measure.
    pub fn integral(&self, f: &[f64]) -> f64 {
        crate::numeric::compensated_sum(self.measure.iter().zip(f).map(|(m, v)| m * v))
    }

    /// Mean node spacing `(vol/n)^{1/dim}`.
    pub fn spacing(&self) -> f64 {
        let vol: f64 = self.weights.iter().sum();
        (vol / self.len() as f64 / unit_ball_volume(self.dim)).powf(1.0 / self.dim as f64)
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest-path distances from `source` along graph edges (Dijkstra).
pub fn graph_distances(approx: &DiscreteApproximation, source: usize) -> Vec<f64> {
    let n = approx.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Entry(0.0, source));
    while let Some(Entry(d, i)) = heap.pop() {
        if d > dist[i] {
            continue;
        }
        for e in approx.offsets[i]..approx.offsets[i + 1] {
            let j = approx.neighbors[e] as usize;
            let nd = d + approx.distances[e];
            if nd < dist[j] {
                dist[j] = nd;
                heap.push(Entry(nd, j));
            }
        }
    }
    dist
}
