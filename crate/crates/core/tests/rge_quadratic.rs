use blackbox_admm::grad_est::{rge, RgeConfig};
use blackbox_admm::RngStream;

#[test]
fn averaged_estimate_of_a_quadratic_gradient() {
    // f(v) = Σ a_i (v_i − c_i)², analytic gradient 2a(v − c)
    let a: Vec<f64> = (0..10).map(|i| 0.5 + 0.1 * i as f64).collect();
    let c: Vec<f64> = (0..10).map(|i| 0.05 * i as f64).collect();
    let f = |v: &[f64], _: &mut RngStream| Ok(v.iter().zip(&a).zip(&c).map(|((v, a), c)| a * (v - c) * (v - c)).sum());
    let at = vec![0.2; 10];
    let truth: Vec<f64> = at.iter().zip(&a).zip(&c).map(|((v, a), c)| 2.0 * a * (v - c)).collect();
    let cfg = RgeConfig {
        nu: 1e-3,
        ..RgeConfig::default()
    };
    let mut rng = RngStream::new(21);
    let n = 10_000;
    let mut mean = [0.0; 10];
    for _ in 0..n {
        for (m, g) in mean.iter_mut().zip(rge(f, &at, &cfg, &mut rng).unwrap().gradient) {
            *m += g / n as f64;
        }
    }
    let err: f64 = mean
        .iter()
        .zip(&truth)
        .map(|(m, t)| (m - t).powi(2))
        .sum::<f64>()
        .sqrt();
    let norm: f64 = truth.iter().map(|t| t * t).sum::<f64>().sqrt();
    assert!(err / norm <= 0.05, "relative error {}", err / norm);
}
