//! Gradient-free ADMM solvers for black-box adversarial examples.
//!
//! An attack minimizes `f(x0 + δ, t) + γ·D(δ)` over perturbations that keep
//! `x0 + δ` in `[0, 1]^d` with `‖δ‖∞ ≤ ε`, seeing the victim only through a
//! [`QueryOracle`]. The δ-subproblem is solved either with random gradient
//! estimates ([`DeltaBackend::Zo`]) or with Gaussian-process Bayesian
//! optimization ([`DeltaBackend::Bo`]).

// `!(x > 0.0)` rejects NaN on purpose; index loops mirror the linear algebra
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod admm;
pub mod bo;
pub mod error;
pub mod experiment;
pub mod gp;
pub mod grad_est;
pub mod losses;
pub mod oracle;
pub mod problem;
pub mod prox;
pub mod rng;
pub mod victim;

pub use admm::{run_attack, AdmmConfig, AttackConfig, DeltaBackend, ProbePoint, RunReport};
pub use error::{Error, Result};
pub use oracle::{Classifier, Feedback, LedgerOracle, QueryOracle};
pub use problem::{AttackMode, Distortion, InputVector, Norms, Perturbation, ProblemSpec};
pub use rng::RngStream;
