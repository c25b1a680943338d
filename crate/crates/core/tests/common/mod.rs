//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

/// Gauss-Jordan inverse with partial pivoting of a row-major `n×n` matrix.
pub fn naive_inverse(a: &[f64], n: usize) -> Vec<f64> {
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&p, &q| m[p * n + col].abs().total_cmp(&m[q * n + col].abs()))
            .unwrap();
        for j in 0..n {
            m.swap(col * n + j, piv * n + j);
            inv.swap(col * n + j, piv * n + j);
        }
        let d = m[col * n + col];
        for j in 0..n {
            m[col * n + j] /= d;
            inv[col * n + j] /= d;
        }
        for r in 0..n {
            if r != col {
                let f = m[r * n + col];
                if f != 0.0 {
                    for j in 0..n {
                        m[r * n + j] -= f * m[col * n + j];
                        inv[r * n + j] -= f * inv[col * n + j];
                    }
                }
            }
        }
    }
    inv
}

/// Matérn 5/2 written from the textbook formula, one lengthscale per
/// dimension (or one shared).
pub fn matern(x: &[f64], y: &[f64], theta0: f64, ls: &[f64]) -> f64 {
    let r2: f64 = x
        .iter()
        .zip(y)
        .enumerate()
        .map(|(j, (a, b))| {
            let l = if ls.len() == 1 { ls[0] } else { ls[j] };
            ((a - b) / l).powi(2)
        })
        .sum();
    let r = r2.sqrt();
    let s5 = 5f64.sqrt();
    theta0 * theta0 * (1.0 + s5 * r + 5.0 * r2 / 3.0) * (-s5 * r).exp()
}

/// Posterior mean and variance by explicit inversion of `K + σ²I`.
pub fn naive_posterior(points: &[Vec<f64>], y: &[f64], x: &[f64], theta0: f64, ls: &[f64], noise: f64) -> (f64, f64) {
    let n = points.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            k[i * n + j] = matern(&points[i], &points[j], theta0, ls) + if i == j { noise } else { 0.0 };
        }
    }
    let inv = naive_inverse(&k, n);
    let kx: Vec<f64> = points.iter().map(|p| matern(p, x, theta0, ls)).collect();
    let mut mean = 0.0;
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            mean += kx[i] * inv[i * n + j] * y[j];
            quad += kx[i] * inv[i * n + j] * kx[j];
        }
    }
    (mean, theta0 * theta0 - quad)
}

/// Draw from the zero-mean GP prior at `points` (`K + 1e-8 I` factor).
pub fn prior_sample(points: &[Vec<f64>], theta0: f64, ls: &[f64], z: &[f64]) -> Vec<f64> {
    let n = points.len();
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = matern(&points[i], &points[j], theta0, ls) + if i == j { 1e-8 } else { 0.0 };
            for m in 0..j {
                s -= l[i * n + m] * l[j * n + m];
            }
            l[i * n + j] = if i == j { s.sqrt() } else { s / l[j * n + j] };
        }
    }
    (0..n).map(|i| (0..=i).map(|j| l[i * n + j] * z[j]).sum()).collect()
}

/// Scaled distance `‖(x − y) / ls‖₂`.
pub fn scaled_distance(x: &[f64], y: &[f64], ls: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .enumerate()
        .map(|(j, (a, b))| ((a - b) / if ls.len() == 1 { ls[0] } else { ls[j] }).powi(2))
        .sum::<f64>()
        .sqrt()
}
