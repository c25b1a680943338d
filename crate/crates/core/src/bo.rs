//! Bayesian-optimization δ-step.
//!
//! The δ-subproblem objective `l(δ) = f(x0 + δ) + (ρ/2)‖δ − b‖²` is
//! modelled by a [`GpModel`] and minimized by maximizing expected
//! improvement with projected gradient ascent over the feasible box.
//!
//! Raw loss values `f` are archived across ADMM steps. Since the quadratic
//! term is known in closed form, `l` is re-derived for every new `b`
//! without re-querying the oracle.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::gp::{GpHyper, GpModel};
use crate::problem::{feasible_interval, InputVector};
use crate::rng::RngStream;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Posterior variances at or below this fraction of the prior variance
/// count as zero.
pub const DEGENERATE_VAR_FRACTION: f64 = 1e-9;

pub fn norm_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Expected improvement below `l_plus` of `N(mu, sigma²)`.
pub fn expected_improvement(mu: f64, sigma: f64, l_plus: f64) -> f64 {
    let gap = l_plus - mu;
    if sigma > 0.0 {
        let z = gap / sigma;
        (gap * norm_cdf(z) + sigma * norm_pdf(z)).max(0.0)
    } else {
        gap.max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EiGradient {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Posterior standard deviation vanished; the gradient is zero.
    pub degenerate: bool,
}

/// EI at `x` under `model` and its gradient `−Φ(ẑ)∇μ + φ(ẑ)∇σ`.
pub fn ei_gradient(model: &GpModel, x: &[f64], l_plus: f64) -> Result<EiGradient> {
    let pg = model.posterior_grad(x)?;
    let sigma = pg.var.sqrt();
    let prior = model.hyper().theta0 * model.hyper().theta0;
    if !(pg.var > DEGENERATE_VAR_FRACTION * prior) {
        return Ok(EiGradient {
            value: expected_improvement(pg.mean, 0.0, l_plus),
            gradient: vec![0.0; x.len()],
            degenerate: true,
        });
    }
    let z = (l_plus - pg.mean) / sigma;
    let (cdf, pdf) = (norm_cdf(z), norm_pdf(z));
    let gradient = pg
        .d_mean
        .iter()
        .zip(&pg.d_var)
        .map(|(dm, dv)| -cdf * dm + pdf * dv / (2.0 * sigma))
        .collect();
    Ok(EiGradient {
        value: expected_improvement(pg.mean, sigma, l_plus),
        gradient,
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoConfig {
    /// Random feasible evaluations at the start of each δ-step.
    pub init_samples: usize,
    pub ei_restarts: usize,
    pub ei_steps: usize,
    pub ei_learning_rate: f64,
    pub max_bo_iters_per_admm_step: usize,
    pub fit_steps: usize,
    pub fit_learning_rate: f64,
    /// Half-width of the ℓ∞ box around `b` that seeds and restarts are
    /// drawn from (intersected with the feasible set). `None` uses the
    /// whole feasible set.
    pub seed_radius: Option<f64>,
    /// Archive size cap; the oldest observations are dropped first.
    pub max_observations: usize,
}

impl Default for BoConfig {
    fn default() -> Self {
        Self {
            init_samples: 5,
            ei_restarts: 5,
            ei_steps: 50,
            ei_learning_rate: 0.05,
            max_bo_iters_per_admm_step: 10,
            fit_steps: 20,
            fit_learning_rate: 0.05,
            seed_radius: None,
            max_observations: 200,
        }
    }
}

impl BoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.init_samples == 0 {
            return Err(Error::invalid("init_samples", "must be positive"));
        }
        if self.ei_restarts == 0 || self.ei_steps == 0 {
            return Err(Error::invalid("ei_restarts", "restarts and steps must be positive"));
        }
        if !(self.ei_learning_rate > 0.0) || !(self.fit_learning_rate > 0.0) {
            return Err(Error::invalid("ei_learning_rate", "learning rates must be positive"));
        }
        if let Some(r) = self.seed_radius {
            if !(r > 0.0) {
                return Err(Error::invalid("seed_radius", "must be positive"));
            }
        }
        if self.max_observations < self.init_samples + self.max_bo_iters_per_admm_step {
            return Err(Error::invalid(
                "max_observations",
                "must hold at least one δ-step worth of observations",
            ));
        }
        Ok(())
    }

    /// Upper bound on loss evaluations in one δ-step.
    pub fn evals_per_step(&self) -> u64 {
        (self.init_samples + self.max_bo_iters_per_admm_step) as u64
    }
}

/// Raw `(δ, f(x0 + δ))` pairs carried across δ-steps, plus the last fitted
/// hyperparameters.
#[derive(Debug, Clone)]
pub struct BoArchive {
    points: Vec<Vec<f64>>,
    raw: Vec<f64>,
    hyper: GpHyper,
}

impl BoArchive {
    pub fn new(dim: usize) -> Self {
        Self {
            points: Vec::new(),
            raw: Vec::new(),
            hyper: GpHyper::default_for(dim),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn hyper(&self) -> &GpHyper {
        &self.hyper
    }

    fn push(&mut self, p: Vec<f64>, f: f64, cap: usize) {
        self.points.push(p);
        self.raw.push(f);
        if self.points.len() > cap {
            let excess = self.points.len() - cap;
            self.points.drain(..excess);
            self.raw.drain(..excess);
        }
    }
}

/// The δ-subproblem at one ADMM iteration.
#[derive(Debug, Clone, Copy)]
pub struct Subproblem<'a> {
    pub x0: &'a InputVector,
    pub epsilon: f64,
    pub b: &'a [f64],
    pub rho: f64,
}

impl Subproblem<'_> {
    pub fn objective(&self, delta: &[f64], raw: f64) -> f64 {
        let q: f64 = delta.iter().zip(self.b).map(|(d, b)| (d - b) * (d - b)).sum();
        raw + 0.5 * self.rho * q
    }

    fn project(&self, v: &mut [f64]) {
        for (vi, &x) in v.iter_mut().zip(self.x0.iter()) {
            let (lo, hi) = feasible_interval(x, self.epsilon);
            *vi = vi.clamp(lo, hi);
        }
    }

    /// Uniform draw from the feasible set, optionally restricted to the
    /// ℓ∞ box of half-width `radius` around the projection of `b`.
    fn sample(&self, radius: Option<f64>, rng: &mut RngStream) -> Vec<f64> {
        self.x0
            .iter()
            .zip(self.b)
            .map(|(&x, &b)| {
                let (lo, hi) = feasible_interval(x, self.epsilon);
                let (lo, hi) = match radius {
                    Some(r) => {
                        let c = b.clamp(lo, hi);
                        ((c - r).max(lo), (c + r).min(hi))
                    }
                    None => (lo, hi),
                };
                rng.uniform_in(lo, hi)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoStep {
    pub delta: Vec<f64>,
    /// Raw loss `f` at `delta`.
    pub raw_value: f64,
    /// `l(delta)` under the current `b`.
    pub objective: f64,
    /// Loss evaluations performed in this step.
    pub evaluations: usize,
    /// Best value of `l` after the seeds and after each BO iteration.
    pub best_trace: Vec<f64>,
}

struct Standardized {
    model: GpModel,
    mean: f64,
    scale: f64,
}

fn build_model(archive: &BoArchive, sub: &Subproblem) -> Result<Standardized> {
    let l: Vec<f64> = archive
        .points
        .iter()
        .zip(&archive.raw)
        .map(|(p, f)| sub.objective(p, *f))
        .collect();
    let n = l.len() as f64;
    let mean = l.iter().sum::<f64>() / n;
    let var = l.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let scale = if var > 1e-24 { var.sqrt() } else { 1.0 };
    let y = l.iter().map(|v| (v - mean) / scale).collect();
    let model = GpModel::with_data(sub.x0.dim(), archive.hyper.clone(), archive.points.clone(), y)?;
    Ok(Standardized { model, mean, scale })
}

/// Projected gradient ascent on EI from several starts; returns the best
/// point visited, or `None` if every start was degenerate.
fn maximize_ei(
    model: &GpModel,
    l_plus: f64,
    starts: Vec<Vec<f64>>,
    sub: &Subproblem,
    cfg: &BoConfig,
) -> Result<Option<(Vec<f64>, f64)>> {
    let mut best: Option<(Vec<f64>, f64)> = None;
    for mut x in starts {
        let mut any = false;
        for _ in 0..cfg.ei_steps {
            let e = ei_gradient(model, &x, l_plus)?;
            if !e.degenerate {
                any = true;
                if best.as_ref().is_none_or(|(_, v)| e.value > *v) {
                    best = Some((x.clone(), e.value));
                }
            }
            if e.degenerate || e.gradient.iter().all(|g| *g == 0.0) {
                break;
            }
            for (xi, g) in x.iter_mut().zip(&e.gradient) {
                *xi += cfg.ei_learning_rate * g;
            }
            sub.project(&mut x);
        }
        if any {
            let e = ei_gradient(model, &x, l_plus)?;
            if !e.degenerate && best.as_ref().is_none_or(|(_, v)| e.value > *v) {
                best = Some((x, e.value));
            }
        }
    }
    Ok(best)
}

/// One BO δ-step. `loss` evaluates the raw attack loss `f(x0 + δ)` and is
/// called `init_samples + max_bo_iters_per_admm_step` times. Every point
/// passed to `loss` is feasible.
pub fn bo_delta_step<F>(
    sub: &Subproblem,
    mut loss: F,
    archive: &mut BoArchive,
    cfg: &BoConfig,
    rng: &mut RngStream,
) -> Result<BoStep>
where
    F: FnMut(&[f64], &mut RngStream) -> Result<f64>,
{
    cfg.validate()?;
    let mut evaluations = 0;
    let mut eval = |p: Vec<f64>, archive: &mut BoArchive, rng: &mut RngStream| -> Result<()> {
        let f = loss(&p, rng)?;
        if !f.is_finite() {
            return Err(Error::NonFinite("loss in BO step"));
        }
        archive.push(p, f, cfg.max_observations);
        evaluations += 1;
        Ok(())
    };

    let mut seeds = Vec::with_capacity(cfg.init_samples);
    for _ in 0..cfg.init_samples {
        let p = sub.sample(cfg.seed_radius, rng);
        seeds.push(p.clone());
        eval(p, archive, rng)?;
    }

    let best_of = |archive: &BoArchive| -> (usize, f64) {
        archive
            .points
            .iter()
            .zip(&archive.raw)
            .map(|(p, f)| sub.objective(p, *f))
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc })
    };

    let mut best_trace = vec![best_of(archive).1];
    for _ in 0..cfg.max_bo_iters_per_admm_step {
        let mut std = build_model(archive, sub)?;
        if std.model.len() >= 2 {
            match std.model.fit_hypers(cfg.fit_steps, cfg.fit_learning_rate) {
                Ok(h) => archive.hyper = h,
                Err(Error::NotPositiveDefinite { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        std.model.refresh()?;
        let (best_idx, best_l) = best_of(archive);
        let l_plus = (best_l - std.mean) / std.scale;
        let mut starts = vec![archive.points[best_idx].clone()];
        for _ in 1..cfg.ei_restarts {
            starts.push(sub.sample(cfg.seed_radius, rng));
        }
        let next = match maximize_ei(&std.model, l_plus, starts, sub, cfg)? {
            Some((x, _)) => x,
            // every start degenerate: fall back to a seed point
            None => seeds[rng.below(seeds.len())].clone(),
        };
        eval(next, archive, rng)?;
        best_trace.push(best_of(archive).1);
    }

    let (i, objective) = best_of(archive);
    Ok(BoStep {
        delta: archive.points[i].clone(),
        raw_value: archive.raw[i],
        objective,
        evaluations,
        best_trace,
    })
}
