//! The same pairs attacked under each distortion. The sparsity-inducing
//! penalties need a smaller γ than ℓ2 to leave the victim reachable.

use blackbox_admm::experiment::{run_batch, summarize, NormKind, Settings};

fn main() -> blackbox_admm::Result<()> {
    println!("{:<8} {:>6} {:>8} {:>8} {:>8}", "norm", "asr", "l0", "l1", "l2");
    for (norm, gamma) in [
        (NormKind::L0, 0.1),
        (NormKind::L1, 0.3),
        (NormKind::L2, 1.0),
        (NormKind::Elastic, 0.3),
    ] {
        let mut s = Settings::preset("mnist-like")?;
        s.norm = norm;
        s.gamma = gamma;
        s.pairs = 10;
        let sum = summarize(&run_batch(&s)?);
        println!(
            "{:<8} {:>6.2} {:>8.2} {:>8.3} {:>8.3}",
            format!("{norm:?}"),
            sum.asr,
            sum.mean_l0.unwrap_or(f64::NAN),
            sum.mean_l1.unwrap_or(f64::NAN),
            sum.mean_l2.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
