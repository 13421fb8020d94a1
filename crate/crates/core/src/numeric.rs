//! Small numerical helpers shared across modules: compensated summation,
//! adaptive Gauss–Kronrod quadrature and the model-space warping functions.

use std::f64::consts::PI;

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = CompensatedSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

// Gauss–Kronrod 7/15 nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive Gauss–Kronrod (G7/K15) quadrature.
///
/// Bisects the worst interval until the summed error estimate drops below
/// `max(rel_tol * |I|, 1e-14)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (value, err) = gk15(&f, a, b);
    let mut intervals = vec![(a, b, value, err)];
    for _ in 0..2000 {
        let total = compensated_sum(intervals.iter().map(|iv| iv.2));
        let total_err: f64 = intervals.iter().map(|iv| iv.3).sum();
        if total_err <= (rel_tol * total.abs()).max(1e-14) {
            break;
        }
        let (worst, _) = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty interval list");
        let (lo, hi, _, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
    compensated_sum(intervals.iter().map(|iv| iv.2))
}

/// Warping function of the constant-curvature model space of curvature `k`.
pub fn sin_k(k: f64, t: f64) -> f64 {
    if k > 0.0 {
        let s = k.sqrt();
        (s * t).sin() / s
    } else if k < 0.0 {
        let s = (-k).sqrt();
        (s * t).sinh() / s
    } else {
        t
    }
}

pub fn cos_k(k: f64, t: f64) -> f64 {
    if k > 0.0 {
        (k.sqrt() * t).cos()
    } else if k < 0.0 {
        ((-k).sqrt() * t).cosh()
    } else {
        1.0
    }
}

/// `sin_k'(t) / sin_k(t)`, the mean curvature of distance spheres divided by `n - 1`.
pub fn cot_k(k: f64, t: f64) -> f64 {
    cos_k(k, t) / sin_k(k, t)
}

/// Volume of the unit ball in R^n.
pub fn unit_ball_volume(n: usize) -> f64 {
    let n = n as f64;
    PI.powf(n / 2.0) / statrs::function::gamma::gamma(n / 2.0 + 1.0)
}

/// Volume of the unit round sphere S^m.
pub fn sphere_volume(m: usize) -> f64 {
    (m as f64 + 1.0) * unit_ball_volume(m + 1)
}

/// `∫_0^π sin^m t dt`.
pub fn sine_power_integral(m: usize) -> f64 {
    let m = m as f64;
    PI.sqrt() * statrs::function::gamma::gamma((m + 1.0) / 2.0)
        / statrs::function::gamma::gamma(m / 2.0 + 1.0)
}

/// Distance between two unit vectors, accurate at both ends of `[0, π]`.
pub fn unit_vector_distance(p: &[f64], q: &[f64]) -> f64 {
    let dot: f64 = p.iter().zip(q).map(|(a, b)| a * b).sum();
    if dot >= 0.0 {
        let chord = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        2.0 * (0.5 * chord).min(1.0).asin()
    } else {
        let anti = p.iter().zip(q).map(|(a, b)| (a + b) * (a + b)).sum::<f64>().sqrt();
        PI - 2.0 * (0.5 * anti).min(1.0).asin()
    }
}

/// Ordinary least squares fit of `y = slope * x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_matches_closed_forms() {
        let v = integrate(|t| t.sin().powi(2), 0.0, PI, 1e-12);
        assert!((v - PI / 2.0).abs() < 1e-12);
        let v = integrate(|t| (-t * t).exp(), -8.0, 8.0, 1e-12);
        assert!((v - PI.sqrt()).abs() < 1e-11);
        // integrable endpoint singularity
        let v = integrate(|t| 1.0 / t.sqrt(), 0.0, 1.0, 1e-8);
        assert!((v - 2.0).abs() < 1e-6);
    }

    #[test]
    fn sphere_volumes() {
        assert!((sphere_volume(1) - 2.0 * PI).abs() < 1e-12);
        assert!((sphere_volume(2) - 4.0 * PI).abs() < 1e-12);
        assert!((sphere_volume(3) - 2.0 * PI * PI).abs() < 1e-12);
        assert!((sine_power_integral(1) - 2.0).abs() < 1e-12);
        assert!((sine_power_integral(2) - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut values = vec![1e16, 1.0, -1e16];
        values.extend(std::iter::repeat(1e-3).take(1000));
        assert!((compensated_sum(values) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn unit_vector_distance_is_accurate() {
        let p = [1.0, 0.0, 0.0];
        let q = [(1e-9f64).cos(), (1e-9f64).sin(), 0.0];
        assert!((unit_vector_distance(&p, &q) - 1e-9).abs() < 1e-20);
        let r = [-1.0, 0.0, 0.0];
        assert!((unit_vector_distance(&p, &r) - PI).abs() < 1e-15);
    }
}
