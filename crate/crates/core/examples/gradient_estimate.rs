//! Random gradient estimation on a linear loss: the average of many
//! estimates approaches the true coefficients, and every estimate costs
//! Q + 1 evaluations.

use std::cell::Cell;

use blackbox_admm::grad_est::{rge, RgeConfig};
use blackbox_admm::RngStream;

fn main() -> blackbox_admm::Result<()> {
    let c: Vec<f64> = (0..10).map(|i| (i as f64 - 4.5) / 5.0).collect();
    let calls = Cell::new(0u64);
    let loss = |x: &[f64], _: &mut RngStream| {
        calls.set(calls.get() + 1);
        Ok(x.iter().zip(&c).map(|(a, b)| a * b).sum())
    };
    let cfg = RgeConfig::default();
    let mut rng = RngStream::new(3);
    let n = 2000;
    let mut mean = vec![0.0; c.len()];
    for _ in 0..n {
        let est = rge(loss, &[0.0; 10], &cfg, &mut rng)?;
        for (m, g) in mean.iter_mut().zip(&est.gradient) {
            *m += g / n as f64;
        }
    }
    let dot: f64 = mean.iter().zip(&c).map(|(a, b)| a * b).sum();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    println!("evaluations per estimate: {}", calls.get() / n);
    println!("cosine(mean estimate, truth) = {:.4}", dot / (norm(&mean) * norm(&c)));
    Ok(())
}
