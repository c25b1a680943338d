//! The outer ADMM loop.
//!
//! The attack problem is split as `min f(x0 + δ) + γ·D(z)` subject to
//! `z = δ` and `z` feasible. Each iteration runs, in order, the z-step
//! (closed-form prox at `a = δ − u/ρ`), a δ-step on
//! `f(x0 + δ) + (ρ/2)‖δ − b‖²` with `b = z + u/ρ`, the dual update
//! `u += ρ(z − δ)` and one success probe.

use serde::{Deserialize, Serialize};

use crate::bo::{bo_delta_step, BoArchive, BoConfig, Subproblem};
use crate::error::{check_dim, Error, Result};
use crate::grad_est::{rge, RgeConfig};
use crate::losses::{is_success, AttackLoss, LossConfig, LossMode};
use crate::oracle::QueryOracle;
use crate::problem::{lp_norms, project_box_linf, InputVector, Norms, Perturbation, ProblemSpec};
use crate::prox::{zstep, ZStepInput};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaBackend {
    Zo,
    Bo,
}

/// Which iterate the success probe is sent to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbePoint {
    /// `δ` projected onto the feasible set.
    ProjectedDelta,
    /// The z-iterate, feasible by construction and exactly sparse under
    /// the ℓ0 and ℓ1 distortions.
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmmConfig {
    pub rho: f64,
    /// `η_k = α·√k`.
    pub alpha: f64,
    pub max_iters: usize,
    pub max_queries: u64,
    pub success_then_refine: bool,
    pub delta_backend: DeltaBackend,
    pub probe: ProbePoint,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            rho: 10.0,
            alpha: 1.0,
            max_iters: 100_000,
            max_queries: 20_000,
            success_then_refine: true,
            delta_backend: DeltaBackend::Zo,
            probe: ProbePoint::ProjectedDelta,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::invalid("rho", "must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid("alpha", "must be positive"));
        }
        Ok(())
    }
}

/// `η_k = α·√k`, `k ≥ 1`.
pub fn step_size(alpha: f64, k: usize) -> f64 {
    alpha * (k as f64).sqrt()
}

/// Minimizer of `ĝᵀ(δ' − δ) + (η/2)‖δ' − δ‖² + (ρ/2)‖δ' − b‖²`:
/// `(η·δ + ρ·b − ĝ) / (η + ρ)`.
pub fn linearized_delta_step(delta: &[f64], b: &[f64], grad: &[f64], eta: f64, rho: f64) -> Vec<f64> {
    let inv = 1.0 / (eta + rho);
    delta
        .iter()
        .zip(b)
        .zip(grad)
        .map(|((d, b), g)| (eta * d + rho * b - g) * inv)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestIterate {
    pub perturbation: Perturbation,
    pub distortion: f64,
    pub success: bool,
    pub queries_at_success: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackState {
    pub delta: Vec<f64>,
    pub z: Vec<f64>,
    pub u: Vec<f64>,
    /// Index of the next iteration; starts at 1.
    pub k: usize,
    pub best: Option<BestIterate>,
    /// Oracle query count when the run started.
    pub query_base: u64,
}

impl AttackState {
    pub fn zeros(d: usize, query_base: u64) -> Self {
        Self::from_delta(vec![0.0; d], query_base)
    }

    /// `δ = z = delta`, `u = 0`.
    pub fn from_delta(delta: Vec<f64>, query_base: u64) -> Self {
        Self {
            z: delta.clone(),
            u: vec![0.0; delta.len()],
            delta,
            k: 1,
            best: None,
            query_base,
        }
    }

    pub fn primal_residual(&self) -> f64 {
        self.z
            .iter()
            .zip(&self.delta)
            .map(|(z, d)| (z - d) * (z - d))
            .sum::<f64>()
            .sqrt()
    }

    /// Replaces the best record if `p` succeeded with smaller distortion.
    fn offer(&mut self, p: Perturbation, spec: &ProblemSpec, queries: u64) {
        let distortion = spec.distortion.value(&p);
        if self.best.as_ref().is_none_or(|b| distortion < b.distortion) {
            self.best = Some(BestIterate {
                perturbation: p,
                distortion,
                success: true,
                queries_at_success: queries,
            });
        }
    }
}

pub struct DeltaUpdate {
    pub delta: Vec<f64>,
    /// Loss observed during the step (at `δ^k` for ZO, at the returned
    /// point for BO).
    pub loss: f64,
}

/// A method for the δ-subproblem.
pub trait DeltaSolver {
    fn solve(&mut self, delta: &[f64], b: &[f64], rho: f64, k: usize, rng: &mut RngStream) -> Result<DeltaUpdate>;

    /// Oracle queries one call to [`DeltaSolver::solve`] may consume.
    fn queries_per_step(&self) -> u64;
}

/// Linearized step with an RGE gradient. Consumes exactly `Q + 1` loss
/// evaluations. Returns the new δ and the loss at `delta`.
#[allow(clippy::too_many_arguments)]
pub fn delta_zo_step<F>(
    delta: &[f64],
    b: &[f64],
    rho: f64,
    eta: f64,
    rge_cfg: &RgeConfig,
    loss: F,
    rng: &mut RngStream,
) -> Result<(Vec<f64>, f64)>
where
    F: FnMut(&[f64], &mut RngStream) -> Result<f64>,
{
    check_dim(delta.len(), b.len())?;
    let est = rge(loss, delta, rge_cfg, rng)?;
    if est.gradient.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient estimate"));
    }
    Ok((linearized_delta_step(delta, b, &est.gradient, eta, rho), est.value))
}

pub struct ZoSolver<'a> {
    pub loss: &'a AttackLoss<'a>,
    pub rge: RgeConfig,
    pub alpha: f64,
}

impl DeltaSolver for ZoSolver<'_> {
    fn solve(&mut self, delta: &[f64], b: &[f64], rho: f64, k: usize, rng: &mut RngStream) -> Result<DeltaUpdate> {
        let eta = step_size(self.alpha, k);
        let (delta, loss) = delta_zo_step(delta, b, rho, eta, &self.rge, |d, r| self.loss.eval(d, r), rng)?;
        Ok(DeltaUpdate { delta, loss })
    }

    fn queries_per_step(&self) -> u64 {
        self.rge.evals_per_call() * self.loss.queries_per_eval()
    }
}

pub struct BoSolver<'a> {
    pub loss: &'a AttackLoss<'a>,
    pub cfg: BoConfig,
    pub archive: BoArchive,
}

impl<'a> BoSolver<'a> {
    pub fn new(loss: &'a AttackLoss<'a>, cfg: BoConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            loss,
            cfg,
            archive: BoArchive::new(loss.spec.dim()),
        })
    }
}

impl DeltaSolver for BoSolver<'_> {
    fn solve(&mut self, _delta: &[f64], b: &[f64], rho: f64, _k: usize, rng: &mut RngStream) -> Result<DeltaUpdate> {
        let spec = self.loss.spec;
        let sub = Subproblem {
            x0: &spec.x0,
            epsilon: spec.epsilon,
            b,
            rho,
        };
        let loss = self.loss;
        let step = bo_delta_step(&sub, |d, r| loss.eval(d, r), &mut self.archive, &self.cfg, rng)?;
        Ok(DeltaUpdate {
            delta: step.delta,
            loss: step.raw_value,
        })
    }

    fn queries_per_step(&self) -> u64 {
        self.cfg.evals_per_step() * self.loss.queries_per_eval()
    }
}

/// Linearized step with a caller-supplied gradient; consumes no oracle
/// queries. `grad` returns `(f(x0 + δ), ∇f)`.
pub struct GradientSolver<F> {
    pub grad: F,
    pub alpha: f64,
}

impl<F> DeltaSolver for GradientSolver<F>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    fn solve(&mut self, delta: &[f64], b: &[f64], rho: f64, k: usize, _rng: &mut RngStream) -> Result<DeltaUpdate> {
        let (loss, g) = (self.grad)(delta);
        let eta = step_size(self.alpha, k);
        Ok(DeltaUpdate {
            delta: linearized_delta_step(delta, b, &g, eta, rho),
            loss,
        })
    }

    fn queries_per_step(&self) -> u64 {
        0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub loss: f64,
    /// `D(z)` after the z-step.
    pub distortion: f64,
    /// Norms of the best successful perturbation so far.
    pub best_norms: Option<Norms>,
    /// Queries since the start of the run, including this probe.
    pub queries: u64,
    /// Whether this iteration's probe succeeded.
    pub success: bool,
}

/// One full ADMM iteration, ending with one label query.
pub fn admm_iterate<S: DeltaSolver + ?Sized>(
    state: &mut AttackState,
    spec: &ProblemSpec,
    cfg: &AdmmConfig,
    solver: &mut S,
    oracle: &dyn QueryOracle,
    rng: &mut RngStream,
) -> Result<IterationRecord> {
    let rho = cfg.rho;
    let a: Vec<f64> = state.delta.iter().zip(&state.u).map(|(d, u)| d - u / rho).collect();
    let z = zstep(&ZStepInput {
        a: &a,
        x0: &spec.x0,
        epsilon: spec.epsilon,
        gamma: spec.gamma,
        rho,
        distortion: spec.distortion,
    })?
    .into_inner();
    let b: Vec<f64> = z.iter().zip(&state.u).map(|(z, u)| z + u / rho).collect();
    let update = solver.solve(&state.delta, &b, rho, state.k, rng)?;
    check_dim(z.len(), update.delta.len())?;
    for ((u, z), d) in state.u.iter_mut().zip(&z).zip(&update.delta) {
        *u += rho * (z - d);
    }
    state.z = z;
    state.delta = update.delta;

    let probe = match cfg.probe {
        ProbePoint::ProjectedDelta => project_box_linf(&spec.x0, &state.delta, spec.epsilon)?,
        ProbePoint::Z => Perturbation(state.z.clone()),
    };
    let success = is_success(oracle, &spec.x0.perturbed(&probe), spec)?;
    let queries = oracle.queries_used() - state.query_base;
    if success {
        state.offer(probe, spec, queries);
    }
    let record = IterationRecord {
        k: state.k,
        loss: update.loss,
        distortion: spec.distortion.value(&state.z),
        best_norms: state.best.as_ref().map(|b| lp_norms(&b.perturbation)),
        queries,
        success,
    };
    state.k += 1;
    Ok(record)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AttackConfig {
    pub admm: AdmmConfig,
    pub loss: LossConfig,
    pub rge: RgeConfig,
    pub bo: BoConfig,
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        self.admm.validate()?;
        self.loss.validate()?;
        self.rge.validate()?;
        if self.admm.delta_backend == DeltaBackend::Bo {
            self.bo.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub iterations: Vec<IterationRecord>,
    pub success: bool,
    pub queries_first_success: Option<u64>,
    pub best: Option<BestIterate>,
    pub best_norms: Option<Norms>,
    /// Norms of the decision-mode initializer.
    pub initial_norms: Option<Norms>,
    pub total_queries: u64,
}

impl RunReport {
    /// Checks internal consistency: query counts strictly increase, stay
    /// within the total, and the summary agrees with the records.
    pub fn verify(&self) -> Result<()> {
        let bad = |reason: &str| Err(Error::invalid("report", reason.to_string()));
        let mut last = None;
        for r in &self.iterations {
            if last.is_some_and(|q| r.queries <= q) {
                return bad("iteration query counts must strictly increase");
            }
            last = Some(r.queries);
        }
        if last.is_some_and(|q| q > self.total_queries) {
            return bad("an iteration exceeds the total query count");
        }
        if self.success != self.best.is_some() || self.best.is_some() != self.best_norms.is_some() {
            return bad("success flag disagrees with the best iterate");
        }
        if self.success != self.queries_first_success.is_some() {
            return bad("success flag disagrees with the first-success count");
        }
        if let (Some(q), Some(b)) = (self.queries_first_success, &self.best) {
            if q > b.queries_at_success || q > self.total_queries {
                return bad("first success comes after the best iterate");
            }
        }
        if let (Some(b), Some(n)) = (&self.best, &self.best_norms) {
            if lp_norms(&b.perturbation) != *n {
                return bad("best norms do not match the best perturbation");
            }
        }
        Ok(())
    }
}

/// Runs one attack until the query budget, the iteration cap, or (without
/// refinement) the first success.
///
/// Decision mode needs `init`, an input already assigned to the target
/// class; the run starts from its projected offset and spends one query
/// confirming it.
pub fn run_attack(
    spec: &ProblemSpec,
    cfg: &AttackConfig,
    oracle: &dyn QueryOracle,
    init: Option<&InputVector>,
    rng: &mut RngStream,
) -> Result<RunReport> {
    spec.validate()?;
    cfg.validate()?;
    let loss = AttackLoss::new(oracle, spec, cfg.loss)?;
    let base = oracle.queries_used();
    let mut state = AttackState::zeros(spec.dim(), base);
    let mut report = RunReport {
        iterations: Vec::new(),
        success: false,
        queries_first_success: None,
        best: None,
        best_norms: None,
        initial_norms: None,
        total_queries: 0,
    };

    if cfg.loss.mode == LossMode::DecisionBased {
        let init = init.ok_or(Error::invalid("init", "decision mode needs a target-class initializer"))?;
        check_dim(spec.dim(), init.dim())?;
        if cfg.admm.max_queries == 0 {
            return Ok(report);
        }
        let offset: Vec<f64> = init.iter().zip(spec.x0.iter()).map(|(a, b)| a - b).collect();
        let delta0 = project_box_linf(&spec.x0, &offset, spec.epsilon)?;
        let x = spec.x0.perturbed(&delta0);
        let label = oracle.query_label(&x)?;
        if !is_success_label(label, spec) {
            return Err(Error::InfeasibleInitializer {
                target: spec.target,
                found: label,
            });
        }
        report.initial_norms = Some(lp_norms(&delta0));
        state = AttackState::from_delta(delta0.0.clone(), base);
        state.offer(delta0, spec, oracle.queries_used() - base);
        report.queries_first_success = Some(oracle.queries_used() - base);
    }

    let mut solver: Box<dyn DeltaSolver + '_> = match cfg.admm.delta_backend {
        DeltaBackend::Zo => Box::new(ZoSolver {
            loss: &loss,
            rge: cfg.rge,
            alpha: cfg.admm.alpha,
        }),
        DeltaBackend::Bo => Box::new(BoSolver::new(&loss, cfg.bo)?),
    };
    let per_iter = solver.queries_per_step() + 1;
    let stop_early = !cfg.admm.success_then_refine;
    while report.iterations.len() < cfg.admm.max_iters {
        if stop_early && state.best.is_some() {
            break;
        }
        let used = oracle.queries_used() - base;
        if used + per_iter > cfg.admm.max_queries {
            break;
        }
        let rec = admm_iterate(&mut state, spec, &cfg.admm, solver.as_mut(), oracle, rng)?;
        if rec.success && report.queries_first_success.is_none() {
            report.queries_first_success = Some(rec.queries);
        }
        report.iterations.push(rec);
    }

    report.total_queries = oracle.queries_used() - base;
    report.success = state.best.is_some();
    report.best_norms = state.best.as_ref().map(|b| lp_norms(&b.perturbation));
    report.best = state.best;
    Ok(report)
}

fn is_success_label(label: usize, spec: &ProblemSpec) -> bool {
    match spec.attack_mode {
        crate::problem::AttackMode::Targeted => label == spec.target,
        crate::problem::AttackMode::Untargeted => label != spec.target,
    }
}
