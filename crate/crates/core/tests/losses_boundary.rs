//! Losses on a two-class linear victim whose decision boundary is the
//! diagonal `x₁ = x₂`.

use blackbox_admm::losses::{decision_loss, is_success, smoothed_decision_loss, AttackLoss, LossConfig};
use blackbox_admm::victim::{SoftmaxModel, Threshold1d};
use blackbox_admm::{
    AttackMode, Classifier, Distortion, Feedback, InputVector, LedgerOracle, ProblemSpec, QueryOracle, RngStream,
};

/// Logits `(0, x₁ − x₂)`: class 1 strictly below the diagonal.
fn diagonal_victim() -> SoftmaxModel {
    SoftmaxModel::from_parts(vec![0.0, 0.0, 4.0, -4.0], vec![0.0, 0.0], 2).unwrap()
}

fn spec(x0: Vec<f64>, target: usize) -> ProblemSpec {
    ProblemSpec {
        x0: InputVector::new(x0).unwrap(),
        target,
        num_classes: 2,
        epsilon: 1.0,
        gamma: 1.0,
        kappa: 0.0,
        distortion: Distortion::L2,
        attack_mode: AttackMode::Targeted,
    }
}

#[test]
fn decision_loss_flips_exactly_at_the_boundary() {
    let oracle = LedgerOracle::new(diagonal_victim(), Feedback::LabelOnly);
    let s = spec(vec![0.5, 0.5], 1);
    let step = 1e-12;
    assert_eq!(decision_loss(&oracle, &[0.5 + step, 0.5], &s).unwrap(), -1.0);
    // the tie goes to the lower class index
    assert_eq!(decision_loss(&oracle, &[0.5, 0.5], &s).unwrap(), 1.0);
    assert_eq!(decision_loss(&oracle, &[0.5 - step, 0.5], &s).unwrap(), 1.0);
    assert!(!is_success(&oracle, &[0.5, 0.5], &s).unwrap());
    assert_eq!(oracle.queries_used(), 4);

    let t = LedgerOracle::new(Threshold1d::default(), Feedback::LabelOnly);
    let s1 = spec(vec![0.5], 1);
    assert_eq!(decision_loss(&t, &[0.8], &s1).unwrap(), 1.0);
    assert_eq!(decision_loss(&t, &[0.8 + 1e-12], &s1).unwrap(), -1.0);
}

#[test]
fn success_examples() {
    let v = diagonal_victim();
    let oracle = LedgerOracle::new(&v, Feedback::Scores);
    let s = spec(vec![0.2, 0.7], 1);
    assert_eq!(v.label(&[0.2, 0.7]).unwrap(), 0);
    assert!(!is_success(&oracle, s.x0.as_slice(), &s).unwrap());
    assert!(is_success(&oracle, &[0.9, 0.1], &s).unwrap());
}

#[test]
fn smoothing_on_the_boundary_is_near_zero() {
    let oracle = LedgerOracle::new(diagonal_victim(), Feedback::LabelOnly);
    let s = spec(vec![0.5, 0.5], 1);
    let cfg = LossConfig::decision(0.05, 100_000);
    let v = smoothed_decision_loss(&oracle, &[0.5, 0.5], &s, &cfg, &mut RngStream::new(9)).unwrap();
    // 3σ of a ±1 mean over 10^5 draws is 0.0095
    assert!(v.abs() < 0.02, "{v}");
    assert_eq!(oracle.queries_used(), 100_000);
}

#[test]
fn smoothing_variance_shrinks_with_samples() {
    let oracle = LedgerOracle::new(diagonal_victim(), Feedback::LabelOnly);
    let s = spec(vec![0.5, 0.5], 1);
    let x = [0.52, 0.5];
    let mut rng = RngStream::new(4);
    let var_at = |n: usize, rng: &mut RngStream| {
        let cfg = LossConfig::decision(0.1, n);
        let v: Vec<f64> = (0..200)
            .map(|_| smoothed_decision_loss(&oracle, &x, &s, &cfg, rng).unwrap())
            .collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (v.len() - 1) as f64
    };
    let v10 = var_at(10, &mut rng);
    let v100 = var_at(100, &mut rng);
    assert!(v100 <= 0.1 * 1.2 * v10, "var(N=100) {v100} vs var(N=10) {v10}");
}

#[test]
fn ledger_matches_predicted_counts() {
    let v = diagonal_victim();
    let s = spec(vec![0.3, 0.6], 1);
    let mut rng = RngStream::new(0);
    let score = LedgerOracle::new(&v, Feedback::Scores);
    let loss = AttackLoss::new(&score, &s, LossConfig::default()).unwrap();
    for _ in 0..7 {
        loss.eval(&[0.1, -0.1], &mut rng).unwrap();
    }
    assert_eq!(score.queries_used(), 7);
    let hard = LedgerOracle::new(&v, Feedback::LabelOnly);
    let loss = AttackLoss::new(&hard, &s, LossConfig::decision(0.5, 13)).unwrap();
    for _ in 0..3 {
        let l = loss.eval(&[0.0, 0.0], &mut rng).unwrap();
        // multiples of 2/N in [−1, 1]
        let steps = (l + 1.0) * 13.0 / 2.0;
        assert!((steps - steps.round()).abs() < 1e-9 && (-1.0..=1.0).contains(&l));
    }
    loss.label_at(&[0.0, 0.0]).unwrap();
    assert_eq!(hard.queries_used(), 3 * 13 + 1);
}
