//! Closed-form z-steps for each distortion, checked against a dense grid
//! on one coordinate.

use blackbox_admm::problem::{feasible_interval, Distortion, InputVector};
use blackbox_admm::prox::{coordinate_objective, zstep, ZStepInput};

fn main() -> blackbox_admm::Result<()> {
    let x0 = InputVector::new(vec![0.1, 0.5, 0.9])?;
    let a = [0.5, -0.08, 0.6];
    let (gamma, rho, epsilon) = (1.0, 10.0, 0.4);
    for distortion in [
        Distortion::L2,
        Distortion::L0,
        Distortion::L1,
        Distortion::ElasticNet { beta: 1.0 },
    ] {
        let z = zstep(&ZStepInput {
            a: &a,
            x0: &x0,
            epsilon,
            gamma,
            rho,
            distortion,
        })?;
        print!("{:<8} z = [", distortion.name());
        for (i, zi) in z.iter().enumerate() {
            let (lo, hi) = feasible_interval(x0.as_slice()[i], epsilon);
            // grid minimizer of the same scalar objective
            let grid = (0..=100_000)
                .map(|j| lo + (hi - lo) * j as f64 / 100_000.0)
                .min_by(|p, q| {
                    let f = |v| coordinate_objective(distortion, gamma, rho, a[i], v);
                    f(*p).total_cmp(&f(*q))
                })
                .unwrap();
            print!(" {zi:+.4} (grid {grid:+.4})");
        }
        println!(" ]");
    }
    Ok(())
}
