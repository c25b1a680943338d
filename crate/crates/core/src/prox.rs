//! Closed-form z-step: per-coordinate minimizers of
//! `γ·D(z) + (ρ/2)‖z − a‖²` over the box ∩ ℓ∞ feasible set.
//!
//! Every supported distortion is separable, so each coordinate is solved
//! independently on its feasible interval `[max(−x0, −ε), min(1 − x0, ε)]`.

use crate::error::{check_dim, Error, Result};
use crate::problem::{feasible_interval, Distortion, InputVector, Perturbation};

/// Inputs of one z-step. `a = δ − u/ρ`.
#[derive(Debug, Clone, Copy)]
pub struct ZStepInput<'a> {
    pub a: &'a [f64],
    pub x0: &'a InputVector,
    pub epsilon: f64,
    pub gamma: f64,
    pub rho: f64,
    pub distortion: Distortion,
}

impl ZStepInput<'_> {
    fn validate(&self) -> Result<()> {
        check_dim(self.x0.dim(), self.a.len())?;
        if !(self.rho > 0.0) {
            return Err(Error::invalid("rho", "must be positive"));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::invalid("gamma", "must be non-negative"));
        }
        if let Distortion::ElasticNet { beta } = self.distortion {
            if !(beta >= 0.0) {
                return Err(Error::invalid("beta", "must be non-negative"));
            }
        }
        Ok(())
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Perturbation {
        self.a
            .iter()
            .zip(self.x0.iter())
            .map(|(&a, &x)| {
                let (lo, hi) = feasible_interval(x, self.epsilon);
                f(a).clamp(lo, hi)
            })
            .collect::<Vec<_>>()
            .into()
    }
}

/// `(a − λ)₊ − (−a − λ)₊`
#[inline]
pub fn soft_threshold(a: f64, lambda: f64) -> f64 {
    (a - lambda).max(0.0) - (-a - lambda).max(0.0)
}

/// Per-coordinate z-step objective, `γ·D(z) + (ρ/2)(z − a)²`.
pub fn coordinate_objective(distortion: Distortion, gamma: f64, rho: f64, a: f64, z: f64) -> f64 {
    let penalty = match distortion {
        Distortion::L0 => {
            if z != 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Distortion::L1 => z.abs(),
        Distortion::L2 => z * z,
        Distortion::ElasticNet { beta } => z.abs() + 0.5 * beta * z * z,
    };
    gamma * penalty + 0.5 * rho * (z - a) * (z - a)
}

pub fn zstep_l2(input: &ZStepInput) -> Result<Perturbation> {
    input.validate()?;
    let shrink = input.rho / (2.0 * input.gamma + input.rho);
    Ok(input.map(|a| shrink * a))
}

/// Hard threshold followed by clamping. Clamping can make the nonzero
/// candidate lose to `z = 0`, so the two are compared explicitly; exact
/// ties go to zero.
pub fn zstep_l0(input: &ZStepInput) -> Result<Perturbation> {
    input.validate()?;
    let (gamma, rho) = (input.gamma, input.rho);
    let threshold = 2.0 * gamma / rho;
    let z = input
        .a
        .iter()
        .zip(input.x0.iter())
        .map(|(&a, &x)| {
            let (lo, hi) = feasible_interval(x, input.epsilon);
            let c = if a * a > threshold { a } else { 0.0 };
            let c = c.clamp(lo, hi);
            if c == 0.0 {
                return 0.0;
            }
            let keep = coordinate_objective(Distortion::L0, gamma, rho, a, c);
            let drop = coordinate_objective(Distortion::L0, gamma, rho, a, 0.0);
            if keep < drop {
                c
            } else {
                0.0
            }
        })
        .collect::<Vec<_>>();
    Ok(z.into())
}

pub fn zstep_l1(input: &ZStepInput) -> Result<Perturbation> {
    input.validate()?;
    let lambda = input.gamma / input.rho;
    Ok(input.map(|a| soft_threshold(a, lambda)))
}

pub fn zstep_elastic(input: &ZStepInput) -> Result<Perturbation> {
    input.validate()?;
    let beta = match input.distortion {
        Distortion::ElasticNet { beta } => beta,
        _ => 0.0,
    };
    let lambda = input.gamma / input.rho;
    let scale = 1.0 / (1.0 + input.gamma * beta / input.rho);
    Ok(input.map(|a| scale * soft_threshold(a, lambda)))
}

/// Dispatches on `input.distortion`.
pub fn zstep(input: &ZStepInput) -> Result<Perturbation> {
    match input.distortion {
        Distortion::L0 => zstep_l0(input),
        Distortion::L1 => zstep_l1(input),
        Distortion::L2 => zstep_l2(input),
        Distortion::ElasticNet { .. } => zstep_elastic(input),
    }
}
