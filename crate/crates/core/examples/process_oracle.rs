//! Attacks a victim living in another process. The child is this crate's
//! `bbadmm serve`, which must be built first (`cargo build --bin bbadmm`).

use std::process::Command;

use blackbox_admm::experiment::DIGITS_SEED;
use blackbox_admm::oracle::ProcessOracle;
use blackbox_admm::victim::digits8x8_split;
use blackbox_admm::{
    run_attack, AttackConfig, AttackMode, Distortion, Feedback, InputVector, ProblemSpec, QueryOracle, RngStream,
};

fn main() -> blackbox_admm::Result<()> {
    let exe = std::env::current_exe().expect("current exe");
    let bin = exe
        .parent()
        .and_then(|p| p.parent())
        .expect("target dir")
        .join("bbadmm");
    let mut cmd = Command::new(bin);
    cmd.args(["serve", "--feedback", "score"]);
    let oracle = ProcessOracle::spawn(cmd, 64, 10, Feedback::Scores)?;
    let (_, test) = digits8x8_split(DIGITS_SEED);
    let (x, y) = test.get(1);
    let spec = ProblemSpec {
        x0: InputVector::new(x.to_vec())?,
        target: (y + 1) % 10,
        num_classes: 10,
        epsilon: 1.0,
        gamma: 1.0,
        kappa: 0.0,
        distortion: Distortion::L2,
        attack_mode: AttackMode::Targeted,
    };
    let mut cfg = AttackConfig::default();
    cfg.admm.max_queries = 3000;
    let report = run_attack(&spec, &cfg, &oracle, None, &mut RngStream::new(0))?;
    println!(
        "success {} after {:?} queries ({} over the pipe)",
        report.success,
        report.queries_first_success,
        oracle.queries_used()
    );
    Ok(())
}
