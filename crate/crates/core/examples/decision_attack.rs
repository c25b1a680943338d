//! Hard-label ZO-ADMM. The run starts from a training image the victim
//! already assigns to the target class and shrinks the distortion while
//! keeping the label.

use blackbox_admm::experiment::{bundled_softmax, DIGITS_SEED};
use blackbox_admm::losses::LossConfig;
use blackbox_admm::victim::digits8x8_split;
use blackbox_admm::{
    run_attack, AttackConfig, AttackMode, Classifier, Distortion, Feedback, InputVector, LedgerOracle, ProblemSpec,
    RngStream,
};

fn main() -> blackbox_admm::Result<()> {
    let victim = bundled_softmax(0)?;
    let (train, test) = digits8x8_split(DIGITS_SEED);
    let (x, y) = test.get(0);
    let target = 7;
    let mut exemplar = None;
    for xi in train.inputs() {
        if victim.label(xi)? == target {
            exemplar = Some(InputVector::new(xi.clone())?);
            break;
        }
    }
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
    let cfg = AttackConfig {
        loss: LossConfig::decision(1.0, 10),
        ..AttackConfig::default()
    };
    let oracle = LedgerOracle::new(&victim, Feedback::LabelOnly);
    let report = run_attack(&spec, &cfg, &oracle, exemplar.as_ref(), &mut RngStream::new(2))?;
    let init = report.initial_norms.unwrap();
    let best = report.best_norms.unwrap();
    println!(
        "digit {y} -> {target}: l2 {:.3} at start, {:.3} after {} queries",
        init.l2, best.l2, report.total_queries
    );
    Ok(())
}
