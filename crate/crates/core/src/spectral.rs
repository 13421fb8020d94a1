//! Lowest eigenpairs of the kernel graph Laplacian, Weyl counting and the
//! Lichnerowicz eigenvalue bound.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::DiscreteApproximation;
use crate::numeric::unit_ball_volume;
use crate::report::{fmt_f64, CheckReport, CsvTable};

/// Graphs with fewer nodes use a dense symmetric eigensolver.
pub const DENSE_LIMIT: usize = 500;
/// Eigenvalues above `FIDELITY / ε²` are not trusted.
pub const FIDELITY: f64 = 0.1;
/// Required relative residual `‖Lv − λv‖/max(λ, 1)`.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// Sorted eigenpairs of the graph Laplacian. Eigenvectors are node values,
/// orthonormal for the node measure of the approximation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralData {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub eps: f64,
    pub nodes: usize,
    /// Spectral-fidelity cutoff `0.1/ε²`.
    pub cutoff: f64,
}

impl SpectralData {
    pub fn count(&self) -> usize {
        self.eigenvalues.len()
    }
}

/// The symmetrized kernel operator `S = A^{-1/2} M K M A^{-1/2}`, `A = M D`,
/// whose top eigenvalues `θ` give Laplacian eigenvalues `(1 − θ)/(c ε²)`.
struct Symmetrized<'a> {
    approx: &'a DiscreteApproximation,
    root: Vec<f64>,
}

impl<'a> Symmetrized<'a> {
    fn new(approx: &'a DiscreteApproximation) -> Self {
        let root = approx.weights.iter().zip(&approx.degree).map(|(m, d)| (m * d).sqrt()).collect();
        Symmetrized { approx, root }
    }

    fn entry(&self, i: usize, e: usize) -> (usize, f64) {
        let a = self.approx;
        let j = a.neighbors[e] as usize;
        (j, a.weights[i] * a.weights[j] * a.affinity[e] / (self.root[i] * self.root[j]))
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let a = self.approx;
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            *yi = (a.offsets[i]..a.offsets[i + 1])
                .map(|e| {
                    let (j, s) = self.entry(i, e);
                    s * x[j]
                })
                .sum();
        });
    }

    fn dense(&self) -> DMatrix<f64> {
        let n = self.approx.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for e in self.approx.offsets[i]..self.approx.offsets[i + 1] {
                let (j, s) = self.entry(i, e);
                m[(i, j)] = s;
            }
        }
        m
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    // two passes of classical Gram-Schmidt
    for _ in 0..2 {
        let coeffs: Vec<f64> = basis.par_iter().map(|q| dot(q, w)).collect();
        for (q, c) in basis.iter().zip(coeffs) {
            w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
        }
    }
}

/// Top `k` eigenpairs of `op` by Lanczos with full reorthogonalization.
/// Returns Ritz values (descending) and vectors; `tol` bounds the Ritz
/// residual estimates.
fn lanczos_top(op: &Symmetrized<'_>, k: usize, tol: &dyn Fn(f64) -> f64) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = op.approx.len();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut q: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    normalize(&mut q);
    let mut basis: Vec<Vec<f64>> = vec![q];
    let (mut alpha, mut beta) = (Vec::<f64>::new(), Vec::<f64>::new());
    let mut w = vec![0.0; n];
    let check_every = 25;
    let mut worst = f64::INFINITY;
    loop {
        let j = basis.len() - 1;
        op.apply(&basis[j], &mut w);
        let a = dot(&basis[j], &w);
        alpha.push(a);
        orthogonalize(&mut w, &basis);
        let mut b = normalize(&mut w);
        let m = alpha.len();
        if b < 1e-12 && m < n {
            // invariant subspace: continue with a fresh direction
            let mut fresh: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            orthogonalize(&mut fresh, &basis);
            normalize(&mut fresh);
            w.copy_from_slice(&fresh);
            b = 0.0;
        }
        let done_size = m >= n;
        if (m >= k + 1 && m % check_every == 0) || done_size {
            let mut t = DMatrix::zeros(m, m);
            for i in 0..m {
                t[(i, i)] = alpha[i];
                if i + 1 < m {
                    t[(i, i + 1)] = beta[i];
                    t[(i + 1, i)] = beta[i];
                }
            }
            let eig = SymmetricEigen::new(t);
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
            let top = &order[..k.min(m)];
            worst = top
                .iter()
                .map(|&c| (b * eig.eigenvectors[(m - 1, c)]).abs() / tol(eig.eigenvalues[c]))
                .fold(0.0, f64::max);
            if (worst <= 1.0 && m >= k) || done_size {
                if worst > 1.0 {
                    return Err(Error::Numerical {
                        message: format!("Lanczos did not converge for {k} eigenpairs"),
                        residual: worst,
                    });
                }
                let values = top.iter().map(|&c| eig.eigenvalues[c]).collect();
                let vectors = top
                    .iter()
                    .map(|&c| {
                        let mut y = vec![0.0; n];
                        for (i, qi) in basis.iter().enumerate() {
                            let s = eig.eigenvectors[(i, c)];
                            y.iter_mut().zip(qi).for_each(|(a, b)| *a += s * b);
                        }
                        normalize(&mut y);
                        y
                    })
                    .collect();
                return Ok((values, vectors));
            }
        }
        if m >= n {
            return Err(Error::Numerical { message: "Lanczos exhausted the space".into(), residual: worst });
        }
        beta.push(b);
        basis.push(w.clone());
    }
}

/// Lowest `count` eigenpairs of the graph Laplacian `(I − P)/(c ε²)`.
pub fn eigen(approx: &DiscreteApproximation, count: usize) -> Result<SpectralData> {
    let n = approx.len();
    if count == 0 || count >= n {
        return Err(Error::argument(format!("eigenpair count {count} must lie in [1, {n})")));
    }
    let op = Symmetrized::new(approx);
    let scale = 1.0 / (approx.normalization * approx.eps * approx.eps);
    let (thetas, vectors) = if n < DENSE_LIMIT {
        let eig = SymmetricEigen::new(op.dense());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
        let values = order[..count].iter().map(|&c| eig.eigenvalues[c]).collect();
        let vectors = order[..count].iter().map(|&c| eig.eigenvectors.column(c).iter().copied().collect()).collect();
        (values, vectors)
    } else {
        // Ritz residual in S units, translated to the Laplacian tolerance
        let tol = |theta: f64| 0.5 * RESIDUAL_TOL * ((1.0 - theta) * scale).max(1.0) / scale;
        lanczos_top(&op, count, &tol)?
    };
    let mut eigenvalues = Vec::with_capacity(count);
    let mut eigenvectors = Vec::with_capacity(count);
    let mut residuals = Vec::with_capacity(count);
    let mut sy = vec![0.0; n];
    for (theta, u) in thetas.into_iter().zip(vectors) {
        op.apply(&u, &mut sy);
        let r = sy.iter().zip(&u).map(|(a, b)| (a - theta * b).powi(2)).sum::<f64>().sqrt();
        let lambda = ((1.0 - theta) * scale).max(0.0);
        let rel = r * scale / lambda.max(1.0);
        if rel > RESIDUAL_TOL {
            return Err(Error::Numerical { message: format!("eigenpair for λ = {lambda:.6} not converged"), residual: rel });
        }
        let mut v: Vec<f64> = u.iter().zip(&approx.measure).map(|(x, m)| x / m.sqrt()).collect();
        let pivot = v.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        eigenvalues.push(lambda);
        eigenvectors.push(v);
        residuals.push(rel);
    }
    Ok(SpectralData { eigenvalues, eigenvectors, residuals, eps: approx.eps, nodes: n, cutoff: FIDELITY / (approx.eps * approx.eps) })
}

fn approximation_key(approx: &DiscreteApproximation, count: usize) -> String {
    let mut h = Sha256::new();
    h.update(approx.model_id.as_bytes());
    h.update(approx.eps.to_le_bytes());
    h.update((count as u64).to_le_bytes());
    for (p, w) in approx.points.iter().zip(&approx.weights) {
        h.update(bincode::serialize(p).expect("points serialize"));
        h.update(w.to_le_bytes());
    }
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// [`eigen`] backed by the binary cache in `$STRATLAB_CACHE_DIR`, keyed by a
/// hash of the approximation.
pub fn eigen_cached(approx: &DiscreteApproximation, count: usize) -> Result<SpectralData> {
    let Some(dir) = std::env::var_os("STRATLAB_CACHE_DIR") else {
        return eigen(approx, count);
    };
    let path = std::path::PathBuf::from(dir).join(format!("spectrum-{}.bin", approximation_key(approx, count)));
    if let Ok(bytes) = std::fs::read(&path) {
        if let Ok(data) = bincode::deserialize::<SpectralData>(&bytes) {
            return Ok(data);
        }
    }
    let data = eigen(approx, count)?;
    let bytes = bincode::serialize(&data).map_err(|e| Error::Config(format!("cache encoding failed: {e}")))?;
    crate::report::write_atomic(&path, &bytes)?;
    Ok(data)
}

/// Lichnerowicz bound `λ₁ ≥ n` for `Ric ≥ n − 1`. A different positive
/// `k_reg` is rescaled to that normalization first.
pub fn lichnerowicz_check(spectral: &SpectralData, n: usize, k_reg: f64, tol: f64) -> Result<CheckReport> {
    if !(k_reg > 0.0) || n < 2 {
        return Err(Error::argument("Lichnerowicz bound needs K_reg > 0 and n ≥ 2"));
    }
    if spectral.count() < 2 {
        return Err(Error::argument("need at least two eigenvalues"));
    }
    let lambda1 = spectral.eigenvalues[1] * (n as f64 - 1.0) / k_reg;
    let bound = n as f64;
    Ok(CheckReport::new("lichnerowicz", lambda1 - bound, bound * tol, spectral.nodes, None)
        .with("lambda1", lambda1)
        .with("bound", bound)
        .with("relative_tolerance", tol)
        .with("eps", spectral.eps))
}

/// Weyl counting ratio `N(λ)/λ^{n/2}` and its limit `ω_n vol/(2π)ⁿ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeylRatio {
    pub lambda: f64,
    pub count: usize,
    pub ratio: f64,
    pub target: f64,
}

/// Counting ratio from an explicit (sorted or unsorted) list of eigenvalues
/// with multiplicity.
pub fn weyl_ratio_from(eigenvalues: &[f64], vol: f64, n: usize, lambda: f64) -> WeylRatio {
    let count = eigenvalues.iter().filter(|&&l| l <= lambda).count();
    let nf = n as f64;
    WeylRatio {
        lambda,
        count,
        ratio: count as f64 / lambda.powf(nf / 2.0),
        target: unit_ball_volume(n) * vol / (2.0 * std::f64::consts::PI).powf(nf),
    }
}

/// Weyl ratio of a discrete spectrum; `λ` must stay below the fidelity cutoff
/// and below the largest computed eigenvalue.
pub fn weyl_ratio(spectral: &SpectralData, vol: f64, n: usize, lambda: f64) -> Result<WeylRatio> {
    if !(lambda > 0.0) {
        return Err(Error::domain("Weyl threshold must be positive"));
    }
    if lambda > spectral.cutoff * (1.0 + 1e-12) {
        return Err(Error::domain(format!(
            "threshold {lambda} exceeds the spectral-fidelity cutoff {:.4}",
            spectral.cutoff
        )));
    }
    if spectral.eigenvalues.last().is_some_and(|&l| l <= lambda) {
        return Err(Error::Resolution(format!("all {} computed eigenvalues lie below {lambda}", spectral.count())));
    }
    Ok(weyl_ratio_from(&spectral.eigenvalues, vol, n, lambda))
}

/// Eigenvalues `l(l+1)` of the round unit 2-sphere, with multiplicity, up to `l_max`.
pub fn round_s2_spectrum(l_max: usize) -> Vec<f64> {
    (0..=l_max).flat_map(|l| std::iter::repeat_n((l * (l + 1)) as f64, 2 * l + 1)).collect()
}

/// CSV rows `(index, eigenvalue, residual)`.
pub fn spectrum_csv(spectral: &SpectralData) -> String {
    let mut table = CsvTable::new(&["index", "eigenvalue", "residual"]);
    for (i, (l, r)) in spectral.eigenvalues.iter().zip(&spectral.residuals).enumerate() {
        table.push(vec![i.to_string(), fmt_f64(*l), fmt_f64(*r)]);
    }
    table.render()
}
