//! Score-based ZO-ADMM against the bundled softmax victim on one
//! (digit, target) pair.

use blackbox_admm::experiment::{bundled_softmax, DIGITS_SEED};
use blackbox_admm::victim::digits8x8_split;
use blackbox_admm::{
    run_attack, AttackConfig, AttackMode, Classifier, Distortion, Feedback, InputVector, LedgerOracle, ProblemSpec,
    QueryOracle, RngStream,
};

fn main() -> blackbox_admm::Result<()> {
    let victim = bundled_softmax(0)?;
    let (_, test) = digits8x8_split(DIGITS_SEED);
    let (x, y) = test.get(3);
    let target = (y + 5) % 10;
    let spec = ProblemSpec {
        x0: InputVector::new(x.to_vec())?,
        target,
        num_classes: 10,
        epsilon: 1.0,
        gamma: 1.0,
        kappa: 0.0,
        distortion: Distortion::L2,
        attack_mode: AttackMode::Targeted,
    };
    let oracle = LedgerOracle::new(&victim, Feedback::Scores);
    let report = run_attack(&spec, &AttackConfig::default(), &oracle, None, &mut RngStream::new(1))?;
    println!("digit {y} -> target {target}: success {}", report.success);
    if let (Some(q), Some(best), Some(n)) = (report.queries_first_success, &report.best, report.best_norms) {
        let adv = spec.x0.perturbed(&best.perturbation);
        println!(
            "first success after {q} queries; best l2 {:.3}, linf {:.3}",
            n.l2, n.linf
        );
        println!("victim now says {}", victim.label(&adv)?);
    }
    println!("oracle queries used: {}", oracle.queries_used());
    Ok(())
}
