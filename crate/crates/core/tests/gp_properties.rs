mod common;

use blackbox_admm::gp::{GpHyper, GpModel};
use blackbox_admm::RngStream;
use common::{matern, naive_posterior};

#[test]
fn posterior_matches_naive_inverse_up_to_fifty_points() {
    let mut rng = RngStream::new(8);
    for n in [1, 5, 20, 50] {
        let d = 3;
        let points: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.uniform()).collect()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gaussian()).collect();
        let ls = vec![0.4, 0.7, 1.1];
        let h = GpHyper::ard(1.3, ls.clone(), 1e-2);
        let mut gp = GpModel::with_data(d, h, points.clone(), y.clone()).unwrap();
        gp.refresh().unwrap();
        for _ in 0..10 {
            let x: Vec<f64> = (0..d).map(|_| rng.uniform()).collect();
            let (m, v) = gp.raw_posterior(&x).unwrap();
            let (mr, vr) = naive_posterior(&points, &y, &x, 1.3, &ls, 1e-2);
            assert!((m - mr).abs() < 1e-8, "n={n}: mean {m} vs {mr}");
            assert!((v - vr).abs() < 1e-8, "n={n}: var {v} vs {vr}");
        }
    }
}

#[test]
fn variance_is_never_meaningfully_negative() {
    let mut rng = RngStream::new(2);
    let points: Vec<Vec<f64>> = (0..40).map(|_| vec![rng.uniform(), rng.uniform()]).collect();
    let y = vec![0.0; 40];
    let mut gp = GpModel::with_data(2, GpHyper::isotropic(2.0, 0.3, 1e-10), points, y).unwrap();
    gp.refresh().unwrap();
    for i in 0..=40 {
        for j in 0..=40 {
            let x = [i as f64 / 40.0, j as f64 / 40.0];
            let (_, raw) = gp.raw_posterior(&x).unwrap();
            assert!(raw >= -1e-8 * 4.0, "{raw} at {x:?}");
            assert!(gp.posterior(&x).unwrap().1 >= 0.0);
        }
    }
}

/// Cholesky sampling from the prior with an independent kernel.
fn sample_gp(points: &[Vec<f64>], theta0: f64, ls: f64, noise: f64, rng: &mut RngStream) -> Vec<f64> {
    let n = points.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            k[i * n + j] = matern(&points[i], &points[j], theta0, &[ls]) + if i == j { noise + 1e-10 } else { 0.0 };
        }
    }
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|m| l[i * n + m] * l[j * n + m]).sum();
            l[i * n + j] = if i == j {
                (k[i * n + i] - s).sqrt()
            } else {
                (k[i * n + j] - s) / l[j * n + j]
            };
        }
    }
    let z: Vec<f64> = (0..n).map(|_| rng.gaussian()).collect();
    (0..n).map(|i| (0..=i).map(|j| l[i * n + j] * z[j]).sum()).collect()
}

#[test]
fn fitted_lengthscale_recovers_truth() {
    let truth = 0.2;
    let mut hits = 0;
    for seed in 0..20 {
        let mut rng = RngStream::new(100 + seed);
        let points: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.uniform()]).collect();
        let y = sample_gp(&points, 1.0, truth, 1e-4, &mut rng);
        let mut gp = GpModel::with_data(1, GpHyper::isotropic(1.0, 1.0, 1e-2), points, y).unwrap();
        let before = gp.nlml().unwrap();
        let h = gp.fit_hypers(300, 0.05).unwrap();
        assert!(gp.nlml().unwrap() <= before);
        let ratio = h.lengthscales[0] / truth;
        if (0.5..=2.0).contains(&ratio) {
            hits += 1;
        }
    }
    assert!(hits >= 16, "{hits}/20 within a factor 2");
}
