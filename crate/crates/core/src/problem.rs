//! Attack problem definition: the clean input, the perturbation space and its
//! box / ℓ∞ feasible set, and the distortion measures used for reporting.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Entries with magnitude at or below this are treated as zero when counting ℓ0.
pub const L0_THRESHOLD: f64 = 1e-8;

/// A clean input with every coordinate in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct InputVector(Vec<f64>);

impl InputVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("input", "dimension must be at least 1"));
        }
        if let Some(i) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid(
                "input",
                format!("coordinate {i} = {} lies outside [0, 1]", values[i]),
            ));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `x0 + v` clamped into `[0, 1]^d`.
    pub fn perturbed(&self, v: &[f64]) -> Vec<f64> {
        self.0.iter().zip(v).map(|(x, d)| (x + d).clamp(0.0, 1.0)).collect()
    }
}

impl TryFrom<Vec<f64>> for InputVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<InputVector> for Vec<f64> {
    fn from(v: InputVector) -> Self {
        v.0
    }
}

impl Deref for InputVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// A signed perturbation of an [`InputVector`]. Also used for the ADMM
/// auxiliary and dual iterates, which share the shape but not the
/// feasibility obligation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Perturbation(pub Vec<f64>);

impl Perturbation {
    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl From<Vec<f64>> for Perturbation {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl Deref for Perturbation {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Perturbation {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Distortion penalty `D(δ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "norm", rename_all = "snake_case")]
pub enum Distortion {
    L0,
    L1,
    /// Squared Euclidean norm.
    L2,
    /// `‖δ‖₁ + (β/2)‖δ‖₂²`.
    ElasticNet {
        beta: f64,
    },
}

impl Distortion {
    pub fn value(&self, v: &[f64]) -> f64 {
        match *self {
            Distortion::L0 => v.iter().filter(|x| **x != 0.0).count() as f64,
            Distortion::L1 => v.iter().map(|x| x.abs()).sum(),
            Distortion::L2 => v.iter().map(|x| x * x).sum(),
            Distortion::ElasticNet { beta } => v.iter().map(|x| x.abs() + 0.5 * beta * x * x).sum(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Distortion::L0 => "l0",
            Distortion::L1 => "l1",
            Distortion::L2 => "l2",
            Distortion::ElasticNet { .. } => "elastic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMode {
    Targeted,
    Untargeted,
}

/// A frozen attack instance.
///
/// In [`AttackMode::Targeted`] mode `target` is the class the adversarial
/// example must be assigned to. In [`AttackMode::Untargeted`] mode `target`
/// holds the original label that the example must escape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub x0: InputVector,
    pub target: usize,
    pub num_classes: usize,
    pub epsilon: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub distortion: Distortion,
    pub attack_mode: AttackMode,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::invalid("num_classes", "need at least two classes"));
        }
        if self.target >= self.num_classes {
            return Err(Error::invalid(
                "target",
                format!("{} is not below K = {}", self.target, self.num_classes),
            ));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("epsilon", "must be positive"));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::invalid("gamma", "must be non-negative"));
        }
        if !(self.kappa >= 0.0) {
            return Err(Error::invalid("kappa", "must be non-negative"));
        }
        if let Distortion::ElasticNet { beta } = self.distortion {
            if !(beta >= 0.0) {
                return Err(Error::invalid("beta", "must be non-negative"));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.x0.dim()
    }

    /// Feasible interval of coordinate `i`.
    pub fn interval(&self, i: usize) -> (f64, f64) {
        feasible_interval(self.x0[i], self.epsilon)
    }
}

/// `[max(−x0, −ε), min(1 − x0, ε)]`, the set of perturbations of one
/// coordinate that keep it in `[0, 1]` and within the ℓ∞ budget.
#[inline]
pub fn feasible_interval(x0: f64, epsilon: f64) -> (f64, f64) {
    ((-x0).max(-epsilon), (1.0 - x0).min(epsilon))
}

pub fn box_feasible(x0: &InputVector, v: &[f64], epsilon: f64) -> Result<bool> {
    check_dim(x0.dim(), v.len())?;
    // Interval form of `x0 + v ∈ [0, 1]`, `|v| ≤ ε`; identical arithmetic to
    // the projection, so projected points are feasible bit for bit.
    Ok(x0.iter().zip(v).all(|(&x, &d)| {
        let (lo, hi) = feasible_interval(x, epsilon);
        lo <= d && d <= hi
    }))
}

/// Euclidean projection onto the box ∩ ℓ∞-ball feasible set.
pub fn project_box_linf(x0: &InputVector, v: &[f64], epsilon: f64) -> Result<Perturbation> {
    check_dim(x0.dim(), v.len())?;
    Ok(x0
        .iter()
        .zip(v)
        .map(|(&x, &d)| {
            let (lo, hi) = feasible_interval(x, epsilon);
            d.clamp(lo, hi)
        })
        .collect::<Vec<_>>()
        .into())
}

/// The four reported distortion statistics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Norms {
    pub l0: usize,
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

pub fn lp_norms(v: &[f64]) -> Norms {
    let mut n = Norms::default();
    let mut sq = 0.0;
    for &x in v {
        let a = x.abs();
        if a > L0_THRESHOLD {
            n.l0 += 1;
        }
        n.l1 += a;
        sq += x * x;
        n.linf = n.linf.max(a);
    }
    n.l2 = sq.sqrt();
    n
}
