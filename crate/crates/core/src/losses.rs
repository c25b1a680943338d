//! Attack losses over a [`QueryOracle`].
//!
//! All losses are written so that lower is better for the attacker and a
//! value at or below zero (score mode) or `−1` (decision mode) means the
//! query point is adversarial.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::oracle::QueryOracle;
use crate::problem::{AttackMode, ProblemSpec};
use crate::rng::RngStream;

/// Probabilities are floored here before taking logs.
pub const DEFAULT_PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    ScoreBased,
    DecisionBased,
}

/// Distribution of the smoothing noise in the decision loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothingDist {
    UnitBall,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub kappa: f64,
    pub mode: LossMode,
    pub smoothing_mu: f64,
    pub smoothing_samples: usize,
    pub smoothing_dist: SmoothingDist,
    pub prob_floor: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            kappa: 0.0,
            mode: LossMode::ScoreBased,
            smoothing_mu: 1.0,
            smoothing_samples: 10,
            smoothing_dist: SmoothingDist::UnitBall,
            prob_floor: DEFAULT_PROB_FLOOR,
        }
    }
}

impl LossConfig {
    pub fn decision(mu: f64, samples: usize) -> Self {
        Self {
            mode: LossMode::DecisionBased,
            smoothing_mu: mu,
            smoothing_samples: samples,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == LossMode::DecisionBased {
            if self.smoothing_samples < 1 {
                return Err(Error::invalid("smoothing_samples", "must be at least 1"));
            }
            if !(self.smoothing_mu > 0.0) {
                return Err(Error::invalid("smoothing_mu", "must be positive"));
            }
        }
        if !(self.prob_floor > 0.0) {
            return Err(Error::invalid("prob_floor", "must be positive"));
        }
        Ok(())
    }

    /// Oracle queries consumed by one loss evaluation.
    pub fn queries_per_eval(&self) -> u64 {
        match self.mode {
            LossMode::ScoreBased => 1,
            LossMode::DecisionBased => self.smoothing_samples as u64,
        }
    }
}

/// Hinge on the log-probability margin of the target. One query.
pub fn score_loss(oracle: &dyn QueryOracle, x: &[f64], spec: &ProblemSpec, cfg: &LossConfig) -> Result<f64> {
    if oracle.num_classes() < 2 {
        return Err(Error::invalid("num_classes", "need at least two classes"));
    }
    if !oracle.has_scores() {
        return Err(Error::Unsupported("score"));
    }
    let p = oracle.query_scores(x)?;
    check_dim(oracle.num_classes(), p.len())?;
    Ok(score_loss_from_probs(&p, spec.target, spec.attack_mode, cfg))
}

/// [`score_loss`] on an already observed probability vector.
pub fn score_loss_from_probs(p: &[f64], t: usize, mode: AttackMode, cfg: &LossConfig) -> f64 {
    let logp = |j: usize| p[j].max(cfg.prob_floor).ln();
    let other = (0..p.len())
        .filter(|&j| j != t)
        .map(logp)
        .fold(f64::NEG_INFINITY, f64::max);
    let margin = match mode {
        AttackMode::Targeted => other - logp(t),
        AttackMode::Untargeted => logp(t) - other,
    };
    margin.max(-cfg.kappa)
}

fn adversarial(label: usize, spec: &ProblemSpec) -> bool {
    match spec.attack_mode {
        AttackMode::Targeted => label == spec.target,
        AttackMode::Untargeted => label != spec.target,
    }
}

/// `−1` if the hard label is adversarial, `+1` otherwise. One query.
pub fn decision_loss(oracle: &dyn QueryOracle, x: &[f64], spec: &ProblemSpec) -> Result<f64> {
    let label = oracle.query_label(x)?;
    Ok(if adversarial(label, spec) { -1.0 } else { 1.0 })
}

/// One label query on `x`.
pub fn is_success(oracle: &dyn QueryOracle, x: &[f64], spec: &ProblemSpec) -> Result<bool> {
    Ok(adversarial(oracle.query_label(x)?, spec))
}

/// Monte Carlo average of [`decision_loss`] at `x + μ·u_i`, `i = 1..N`.
/// Query points are clamped to `[0, 1]^d`. Consumes exactly `N` queries.
pub fn smoothed_decision_loss(
    oracle: &dyn QueryOracle,
    x: &[f64],
    spec: &ProblemSpec,
    cfg: &LossConfig,
    rng: &mut RngStream,
) -> Result<f64> {
    if cfg.smoothing_samples < 1 {
        return Err(Error::invalid("smoothing_samples", "must be at least 1"));
    }
    if !(cfg.smoothing_mu > 0.0) {
        return Err(Error::invalid("smoothing_mu", "must be positive"));
    }
    let d = x.len();
    let mut total = 0.0;
    let mut point = vec![0.0; d];
    for _ in 0..cfg.smoothing_samples {
        let u = match cfg.smoothing_dist {
            SmoothingDist::UnitBall => rng.unit_ball(d),
            SmoothingDist::Gaussian => rng.gaussian_vec(d),
        };
        for ((p, xi), ui) in point.iter_mut().zip(x).zip(&u) {
            *p = (xi + cfg.smoothing_mu * ui).clamp(0.0, 1.0);
        }
        total += decision_loss(oracle, &point, spec)?;
    }
    Ok(total / cfg.smoothing_samples as f64)
}

/// The attack loss as a function of the perturbation, `f(x0 + δ, t)`.
/// The query point `x0 + δ` is clamped to `[0, 1]^d`.
pub struct AttackLoss<'a> {
    pub oracle: &'a dyn QueryOracle,
    pub spec: &'a ProblemSpec,
    pub cfg: LossConfig,
}

impl<'a> AttackLoss<'a> {
    pub fn new(oracle: &'a dyn QueryOracle, spec: &'a ProblemSpec, cfg: LossConfig) -> Result<Self> {
        cfg.validate()?;
        check_dim(spec.dim(), oracle.dim())?;
        if cfg.mode == LossMode::ScoreBased && !oracle.has_scores() {
            return Err(Error::Unsupported("score"));
        }
        Ok(Self { oracle, spec, cfg })
    }

    pub fn eval(&self, delta: &[f64], rng: &mut RngStream) -> Result<f64> {
        check_dim(self.spec.dim(), delta.len())?;
        let x = self.spec.x0.perturbed(delta);
        let v = match self.cfg.mode {
            LossMode::ScoreBased => score_loss(self.oracle, &x, self.spec, &self.cfg)?,
            LossMode::DecisionBased => smoothed_decision_loss(self.oracle, &x, self.spec, &self.cfg, rng)?,
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite("attack loss"))
        }
    }

    pub fn queries_per_eval(&self) -> u64 {
        self.cfg.queries_per_eval()
    }

    /// Hard label at `x0 + δ`. One query.
    pub fn label_at(&self, delta: &[f64]) -> Result<usize> {
        self.oracle.query_label(&self.spec.x0.perturbed(delta))
    }
}
