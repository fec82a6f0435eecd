//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Σ over all permutations σ of Π_i m[i, σ(i)], by direct enumeration.
pub fn naive_permanent(m: &DMatrix<f64>) -> f64 {
    fn rec(m: &DMatrix<f64>, row: usize, used: &mut Vec<bool>) -> f64 {
        if row == m.nrows() {
            return 1.0;
        }
        let mut total = 0.0;
        for col in 0..m.ncols() {
            if !used[col] {
                used[col] = true;
                total += m[(row, col)] * rec(m, row + 1, used);
                used[col] = false;
            }
        }
        total
    }
    rec(m, 0, &mut vec![false; m.ncols()])
}

/// Matrix of kernel(p_i, p_j) over a point list.
pub fn pairwise_matrix(points: &[f64], kernel: impl Fn(f64, f64) -> f64) -> DMatrix<f64> {
    DMatrix::from_fn(points.len(), points.len(), |i, j| kernel(points[i], points[j]))
}

/// 2J₁(u)/u from the integral J₁(u) = (1/π)∫₀^π cos(τ − u sin τ) dτ by
/// composite Simpson on 2000 panels.
pub fn airy_by_quadrature(u: f64) -> f64 {
    if u == 0.0 {
        return 1.0;
    }
    let panels = 2000;
    let h = std::f64::consts::PI / panels as f64;
    let f = |t: f64| (t - u * t.sin()).cos();
    let mut s = f(0.0) + f(std::f64::consts::PI);
    for k in 1..panels {
        s += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    let j1 = s * h / 3.0 / std::f64::consts::PI;
    2.0 * j1 / u
}

/// Unbiased sample mean and covariance of row vectors.
pub fn sample_moments(samples: &[DVector<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let r = samples.len() as f64;
    let m = samples[0].len();
    let mut mean = DVector::zeros(m);
    for s in samples {
        mean += s;
    }
    mean /= r;
    let mut cov = DMatrix::zeros(m, m);
    for s in samples {
        let d = s - &mean;
        cov += &d * d.transpose();
    }
    (mean, cov / (r - 1.0))
}

/// Least-squares slope of y against x.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Central difference of f at x with step h, Richardson-extrapolated once.
pub fn richardson(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    let d = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    (4.0 * d(h / 2.0) - d(h)) / 3.0
}
