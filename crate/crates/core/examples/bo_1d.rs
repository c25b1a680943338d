//! One BO δ-step on `l(δ) = (δ − 0.3)²` with the penalty switched off,
//! repeated over 20 seeds.

use blackbox_admm::bo::{bo_delta_step, BoArchive, BoConfig, Subproblem};
use blackbox_admm::{InputVector, RngStream};

fn main() -> blackbox_admm::Result<()> {
    let x0 = InputVector::new(vec![0.5])?;
    let sub = Subproblem {
        x0: &x0,
        epsilon: 1.0,
        b: &[0.0],
        rho: 0.0,
    };
    let cfg = BoConfig {
        max_bo_iters_per_admm_step: 15,
        ..BoConfig::default()
    };
    let mut hits = 0;
    for seed in 0..20 {
        let mut archive = BoArchive::new(1);
        let step = bo_delta_step(
            &sub,
            |d, _| Ok((d[0] - 0.3).powi(2)),
            &mut archive,
            &cfg,
            &mut RngStream::new(seed),
        )?;
        let ok = (step.delta[0] - 0.3).abs() <= 0.05;
        hits += ok as usize;
        println!(
            "seed {seed:2}: δ = {:+.4} after {} evaluations{}",
            step.delta[0],
            step.evaluations,
            if ok { "" } else { "  (miss)" }
        );
    }
    println!("{hits}/20 within 0.05 of the optimum");
    Ok(())
}
