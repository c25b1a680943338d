//! Batch experiments: settings with presets, (image, target) pair
//! selection, parallel runs, and report files.
//!
//! Settings are layered: preset, then a `key = value` file, then
//! explicit overrides. Every module seed is derived from one `seed`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admm::{run_attack, AttackConfig, DeltaBackend, ProbePoint, RunReport};
use crate::error::{Error, Result};
use crate::grad_est::DirectionDist;
use crate::losses::{LossConfig, LossMode};
use crate::oracle::{Classifier, Feedback, LedgerOracle};
use crate::problem::{AttackMode, Distortion, InputVector, ProblemSpec};
use crate::rng::RngStream;
use crate::victim::{
    self, accuracy, digits8x8_split, Dataset, MlpModel, SoftmaxModel, Threshold1d, TrainConfig, Victim,
};

/// Seed of the bundled digit data; independent of experiment seeds.
pub const DIGITS_SEED: u64 = 2019;

/// Name of the bundled digit dataset in settings and flags.
pub const DIGITS: &str = "digits8x8";

/// Name of the built-in one-dimensional threshold problem.
pub const SYNTHETIC_1D: &str = "synthetic-1d";

pub const CSV_HEADER: &str = "pair,target,success,queries_first_success,l0,l1,l2,linf,total_queries";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackKind {
    Score,
    Decision,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    L0,
    L1,
    L2,
    Elastic,
}

/// Every knob of a batch, flattened so that presets, config files and
/// flags share one key space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub preset: String,
    pub backend: DeltaBackend,
    pub feedback: FeedbackKind,
    pub norm: NormKind,
    /// Elastic-net ℓ2 weight; ignored by the other norms.
    pub beta: f64,
    pub eps: f64,
    pub gamma: f64,
    pub rho: f64,
    pub alpha: f64,
    pub q: usize,
    pub nu: f64,
    pub direction: DirectionDist,
    pub mu: f64,
    pub n_smooth: usize,
    pub kappa: f64,
    pub budget: u64,
    pub pairs: usize,
    pub seed: u64,
    pub untargeted: bool,
    pub refine: bool,
    pub probe: ProbePoint,
    pub bo_init: usize,
    pub bo_iters: usize,
    pub bo_radius: Option<f64>,
    pub bo_max_obs: usize,
    pub bo_fit_steps: usize,
    /// Weight file, or [`SYNTHETIC_1D`]. `None` trains the bundled
    /// softmax victim on the fly.
    pub victim: Option<String>,
    /// Attacked inputs: [`DIGITS`] (its test split) or a CSV path.
    pub data: String,
    /// Decision-mode exemplar source: [`DIGITS`] (its training split) or
    /// a CSV path. Defaults to the training split when `data` is
    /// [`DIGITS`].
    pub init_from: Option<String>,
}

impl Settings {
    pub fn preset(name: &str) -> Result<Self> {
        let bo = crate::bo::BoConfig::default();
        let mnist = Self {
            preset: "mnist-like".into(),
            backend: DeltaBackend::Zo,
            feedback: FeedbackKind::Score,
            norm: NormKind::L2,
            beta: 1.0,
            eps: 1.0,
            gamma: 1.0,
            rho: 10.0,
            alpha: 1.0,
            q: 20,
            nu: 0.5,
            direction: DirectionDist::UnitSphere,
            mu: 1.0,
            n_smooth: 10,
            kappa: 0.0,
            budget: 20_000,
            pairs: 50,
            seed: 0,
            untargeted: false,
            refine: true,
            probe: ProbePoint::ProjectedDelta,
            bo_init: bo.init_samples,
            bo_iters: bo.max_bo_iters_per_admm_step,
            bo_radius: bo.seed_radius,
            bo_max_obs: bo.max_observations,
            bo_fit_steps: bo.fit_steps,
            victim: None,
            data: DIGITS.into(),
            init_from: None,
        };
        match name {
            "mnist-like" => Ok(mnist),
            SYNTHETIC_1D => Ok(Self {
                preset: SYNTHETIC_1D.into(),
                backend: DeltaBackend::Bo,
                budget: 200,
                pairs: 20,
                victim: Some(SYNTHETIC_1D.into()),
                data: SYNTHETIC_1D.into(),
                ..mnist
            }),
            other => Err(Error::invalid("preset", format!("unknown preset {other:?}"))),
        }
    }

    /// Sets one knob from text. Keys may use `-` or `_`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &'static str, v: &str) -> Result<T> {
            v.trim()
                .parse()
                .map_err(|_| Error::invalid(key, format!("cannot parse {v:?}")))
        }
        fn flag(key: &'static str, v: &str) -> Result<bool> {
            match v.trim() {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(Error::invalid(key, format!("expected a boolean, found {v:?}"))),
            }
        }
        let value = value.trim();
        match key.replace('_', "-").as_str() {
            "preset" => *self = Self::preset(value)?,
            "backend" => {
                self.backend = match value {
                    "zo" => DeltaBackend::Zo,
                    "bo" => DeltaBackend::Bo,
                    _ => return Err(Error::invalid("backend", format!("unknown backend {value:?}"))),
                }
            }
            "feedback" => {
                self.feedback = match value {
                    "score" => FeedbackKind::Score,
                    "decision" => FeedbackKind::Decision,
                    _ => return Err(Error::invalid("feedback", format!("unknown feedback {value:?}"))),
                }
            }
            "norm" => {
                self.norm = match value {
                    "l0" => NormKind::L0,
                    "l1" => NormKind::L1,
                    "l2" => NormKind::L2,
                    "elastic" => NormKind::Elastic,
                    _ => return Err(Error::invalid("norm", format!("unknown norm {value:?}"))),
                }
            }
            "beta" => self.beta = num("beta", value)?,
            "eps" => self.eps = num("eps", value)?,
            "gamma" => self.gamma = num("gamma", value)?,
            "rho" => self.rho = num("rho", value)?,
            "alpha" => self.alpha = num("alpha", value)?,
            "q" => self.q = num("q", value)?,
            "nu" => self.nu = num("nu", value)?,
            "direction" => {
                self.direction = match value {
                    "sphere" => DirectionDist::UnitSphere,
                    "gaussian" => DirectionDist::Gaussian,
                    _ => return Err(Error::invalid("direction", format!("unknown direction {value:?}"))),
                }
            }
            "mu" => self.mu = num("mu", value)?,
            "n-smooth" => self.n_smooth = num("n_smooth", value)?,
            "kappa" => self.kappa = num("kappa", value)?,
            "budget" => {
                let b: i64 = num("budget", value)?;
                if b <= 0 {
                    return Err(Error::invalid("budget", "must be positive"));
                }
                self.budget = b as u64;
            }
            "pairs" => self.pairs = num("pairs", value)?,
            "seed" => self.seed = num("seed", value)?,
            "untargeted" => self.untargeted = flag("untargeted", value)?,
            "refine" => self.refine = flag("refine", value)?,
            "probe" => {
                self.probe = match value {
                    "delta" => ProbePoint::ProjectedDelta,
                    "z" => ProbePoint::Z,
                    _ => return Err(Error::invalid("probe", format!("unknown probe point {value:?}"))),
                }
            }
            "bo-init" => self.bo_init = num("bo_init", value)?,
            "bo-iters" => self.bo_iters = num("bo_iters", value)?,
            "bo-radius" => {
                self.bo_radius = match value {
                    "none" => None,
                    v => Some(num("bo_radius", v)?),
                }
            }
            "bo-max-obs" => self.bo_max_obs = num("bo_max_obs", value)?,
            "bo-fit-steps" => self.bo_fit_steps = num("bo_fit_steps", value)?,
            "victim" | "weights" => self.victim = Some(value.into()),
            "data" => self.data = value.into(),
            "init-from" => self.init_from = Some(value.into()),
            _ => return Err(Error::invalid("key", format!("unknown setting {key:?}"))),
        }
        Ok(())
    }

    /// Applies a `key = value` file; `#` starts a comment.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut offset = 0;
        for line in text.lines() {
            let here = offset;
            offset += line.len() + 1;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Format {
                offset: here,
                reason: format!("expected `key = value`, found {line:?}"),
            })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }
}

impl Settings {
    pub fn distortion(&self) -> Distortion {
        match self.norm {
            NormKind::L0 => Distortion::L0,
            NormKind::L1 => Distortion::L1,
            NormKind::L2 => Distortion::L2,
            NormKind::Elastic => Distortion::ElasticNet { beta: self.beta },
        }
    }

    pub fn attack_config(&self) -> AttackConfig {
        let mut cfg = AttackConfig::default();
        cfg.admm.rho = self.rho;
        cfg.admm.alpha = self.alpha;
        cfg.admm.max_queries = self.budget;
        cfg.admm.success_then_refine = self.refine;
        cfg.admm.delta_backend = self.backend;
        cfg.admm.probe = self.probe;
        cfg.loss = match self.feedback {
            FeedbackKind::Score => LossConfig::default(),
            FeedbackKind::Decision => LossConfig::decision(self.mu, self.n_smooth),
        };
        cfg.loss.kappa = self.kappa;
        cfg.rge.q = self.q;
        cfg.rge.nu = self.nu;
        cfg.rge.direction_dist = self.direction;
        cfg.bo.init_samples = self.bo_init;
        cfg.bo.max_bo_iters_per_admm_step = self.bo_iters;
        cfg.bo.seed_radius = self.bo_radius;
        cfg.bo.max_observations = self.bo_max_obs;
        cfg.bo.fit_steps = self.bo_fit_steps;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::invalid("budget", "must be positive"));
        }
        if self.pairs == 0 {
            return Err(Error::invalid("pairs", "must be positive"));
        }
        self.attack_config().validate()
    }
}

/// One (input, target) pair of a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSpec {
    pub pair: usize,
    pub image_index: usize,
    pub original_label: usize,
    /// Target class; the original label in untargeted mode.
    pub target: usize,
}

/// A victim with the inputs to attack and, for decision mode, the pool
/// of target-class exemplars.
pub struct Workbench {
    pub victim: Box<dyn Classifier>,
    pub inputs: Dataset,
    pub exemplars: Option<Dataset>,
}

fn load_dataset(source: &str, train_split: bool) -> Result<Dataset> {
    if source == DIGITS {
        let (train, test) = digits8x8_split(DIGITS_SEED);
        Ok(if train_split { train } else { test })
    } else {
        Dataset::read_csv(Path::new(source), None)
    }
}

/// The bundled softmax victim, trained deterministically on the digit
/// training split.
pub fn bundled_softmax(seed: u64) -> Result<Victim> {
    let (train, _) = digits8x8_split(DIGITS_SEED);
    let mut v = Victim::Softmax(SoftmaxModel::zeros(train.dim(), train.num_classes()));
    v.train(&train, &TrainConfig::default(), &mut RngStream::new(seed))?;
    Ok(v)
}

impl Workbench {
    pub fn load(s: &Settings) -> Result<Self> {
        if s.victim.as_deref() == Some(SYNTHETIC_1D) || s.data == SYNTHETIC_1D {
            let inputs = Dataset::new(vec![vec![0.5]], vec![0], 2)?;
            let exemplars = Dataset::new(vec![vec![1.0]], vec![1], 2)?;
            return Ok(Self {
                victim: Box::new(Threshold1d::default()),
                inputs,
                exemplars: Some(exemplars),
            });
        }
        let victim: Box<dyn Classifier> = match &s.victim {
            Some(path) => Box::new(victim::format::load(Path::new(path))?),
            None => Box::new(bundled_softmax(s.seed)?),
        };
        let inputs = load_dataset(&s.data, false)?;
        let exemplars = match (&s.init_from, s.data.as_str()) {
            (Some(src), _) => Some(load_dataset(src, true)?),
            (None, DIGITS) => Some(load_dataset(DIGITS, true)?),
            _ => None,
        };
        if s.feedback == FeedbackKind::Decision && exemplars.is_none() {
            return Err(Error::invalid(
                "init_from",
                "decision mode needs a target-class exemplar source",
            ));
        }
        Ok(Self {
            victim,
            inputs,
            exemplars,
        })
    }

    /// Correctly classified inputs in order, each paired with every other
    /// class in increasing order (untargeted: once, with its own label).
    /// The list is cycled if it is shorter than `n`.
    pub fn pairs(&self, n: usize, untargeted: bool) -> Result<Vec<PairSpec>> {
        let k = self.victim.num_classes();
        let mut base = Vec::new();
        for i in 0..self.inputs.len() {
            let (x, y) = self.inputs.get(i);
            if self.victim.label(x)? != y {
                continue;
            }
            if untargeted {
                base.push((i, y, y));
            } else {
                base.extend((0..k).filter(|&t| t != y).map(|t| (i, y, t)));
            }
            if base.len() >= n {
                break;
            }
        }
        if base.is_empty() {
            return Err(Error::invalid("data", "the victim classifies no input correctly"));
        }
        Ok((0..n)
            .map(|p| {
                let (image_index, original_label, target) = base[p % base.len()];
                PairSpec {
                    pair: p,
                    image_index,
                    original_label,
                    target,
                }
            })
            .collect())
    }

    /// First exemplar the victim assigns to class `t`.
    pub fn exemplar(&self, t: usize) -> Result<Option<InputVector>> {
        let Some(pool) = &self.exemplars else { return Ok(None) };
        for x in pool.inputs() {
            if self.victim.label(x)? == t {
                return Ok(Some(InputVector::new(x.clone())?));
            }
        }
        Ok(None)
    }
}

/// One pair's result, as written to `pair_NNNN.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub settings: Settings,
    pub pair: PairSpec,
    pub run: RunReport,
    /// The only field that differs between identical invocations.
    pub generated_at_unix: u64,
}

pub fn run_pair(bench: &Workbench, s: &Settings, pair: PairSpec) -> Result<RunReport> {
    let (x, _) = bench.inputs.get(pair.image_index);
    let spec = ProblemSpec {
        x0: InputVector::new(x.to_vec())?,
        target: pair.target,
        num_classes: bench.victim.num_classes(),
        epsilon: s.eps,
        gamma: s.gamma,
        kappa: s.kappa,
        distortion: s.distortion(),
        attack_mode: if s.untargeted {
            AttackMode::Untargeted
        } else {
            AttackMode::Targeted
        },
    };
    let cfg = s.attack_config();
    let feedback = match cfg.loss.mode {
        LossMode::ScoreBased => Feedback::Scores,
        LossMode::DecisionBased => Feedback::LabelOnly,
    };
    let init = if cfg.loss.mode == LossMode::DecisionBased {
        let init = if s.untargeted {
            // any exemplar of another class escapes the original label
            (0..spec.num_classes)
                .filter(|&c| c != pair.target)
                .find_map(|c| bench.exemplar(c).transpose())
                .transpose()?
        } else {
            bench.exemplar(pair.target)?
        };
        Some(init.ok_or(Error::invalid(
            "init_from",
            format!("no exemplar of class {}", pair.target),
        ))?)
    } else {
        None
    };
    let oracle = LedgerOracle::new(&*bench.victim, feedback);
    let mut rng = RngStream::new(s.seed).split(pair.pair as u64);
    run_attack(&spec, &cfg, &oracle, init.as_ref(), &mut rng)
}

/// Runs every pair of the batch concurrently. Results are in pair order
/// and do not depend on scheduling.
pub fn run_batch(s: &Settings) -> Result<Vec<PairReport>> {
    s.validate()?;
    let bench = Workbench::load(s)?;
    let pairs = bench.pairs(s.pairs, s.untargeted)?;
    let now = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    pairs
        .par_iter()
        .map(|&pair| {
            run_pair(&bench, s, pair).map(|run| PairReport {
                settings: s.clone(),
                pair,
                run,
                generated_at_unix: now,
            })
        })
        .collect()
}

/// Batch statistics. Distortion and query means are over successful
/// pairs only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub pairs: usize,
    pub successes: usize,
    pub asr: f64,
    pub mean_queries_first_success: Option<f64>,
    pub mean_l0: Option<f64>,
    pub mean_l1: Option<f64>,
    pub mean_l2: Option<f64>,
    pub mean_linf: Option<f64>,
    pub mean_total_queries: f64,
}

pub fn summarize(reports: &[PairReport]) -> BatchSummary {
    let ok: Vec<&RunReport> = reports.iter().map(|r| &r.run).filter(|r| r.success).collect();
    let mean = |f: &dyn Fn(&RunReport) -> f64| {
        (!ok.is_empty()).then(|| ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64)
    };
    let norms = |r: &RunReport| r.best_norms.unwrap_or_default();
    BatchSummary {
        pairs: reports.len(),
        successes: ok.len(),
        asr: if reports.is_empty() {
            0.0
        } else {
            ok.len() as f64 / reports.len() as f64
        },
        mean_queries_first_success: mean(&|r| r.queries_first_success.unwrap_or(0) as f64),
        mean_l0: mean(&|r| norms(r).l0 as f64),
        mean_l1: mean(&|r| norms(r).l1),
        mean_l2: mean(&|r| norms(r).l2),
        mean_linf: mean(&|r| norms(r).linf),
        mean_total_queries: if reports.is_empty() {
            0.0
        } else {
            reports.iter().map(|r| r.run.total_queries as f64).sum::<f64>() / reports.len() as f64
        },
    }
}

/// The aggregate CSV. Failed pairs leave the query and norm fields empty.
pub fn aggregate_csv(reports: &[PairReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        let run = &r.run;
        let q = run
            .queries_first_success
            .filter(|_| run.success)
            .map(|q| q.to_string())
            .unwrap_or_default();
        let norms = match run.best_norms.filter(|_| run.success) {
            Some(n) => format!("{},{},{},{}", n.l0, n.l1, n.l2, n.linf),
            None => ",,,".into(),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.pair.pair, r.pair.target, run.success, q, norms, run.total_queries
        );
    }
    out
}

pub fn report_file_name(pair: usize) -> String {
    format!("pair_{pair:04}.json")
}

/// Writes `pair_NNNN.json` per pair and `aggregate.csv` into `dir`.
/// Every report is checked for consistency first.
pub fn write_outputs(dir: &Path, reports: &[PairReport]) -> Result<PathBuf> {
    for r in reports {
        r.run.verify()?;
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for r in reports {
        let p = dir.join(report_file_name(r.pair.pair));
        let mut json = serde_json::to_string_pretty(r)?;
        json.push('\n');
        fs::write(&p, json).map_err(|e| Error::io(&p, e))?;
    }
    let csv = dir.join("aggregate.csv");
    fs::write(&csv, aggregate_csv(reports)).map_err(|e| Error::io(&csv, e))?;
    Ok(csv)
}

/// Reads every `*.json` report in `dir`, in file-name order.
pub fn read_reports(dir: &Path) -> Result<Vec<PairReport>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        let r: PairReport = serde_json::from_str(&text)?;
        r.run.verify()?;
        out.push(r);
    }
    Ok(out)
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

/// Fixed-column summary table. Distortion means exclude failed pairs.
pub fn format_summary(s: &BatchSummary) -> String {
    format!(
        "{:>6} {:>9} {:>8} {:>14} {:>10} {:>10} {:>10} {:>10} {:>12}\n{:>6} {:>9} {:>7.2}% {:>14} {:>10} {:>10} {:>10} {:>10} {:>12.1}\n",
        "pairs", "successes", "asr", "mean_q_first", "mean_l0", "mean_l1", "mean_l2", "mean_linf", "mean_total_q",
        s.pairs,
        s.successes,
        100.0 * s.asr,
        cell(s.mean_queries_first_success),
        cell(s.mean_l0),
        cell(s.mean_l1),
        cell(s.mean_l2),
        cell(s.mean_linf),
        s.mean_total_queries,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Softmax,
    Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub model: ModelKind,
    pub data: String,
    pub seed: u64,
    pub train: TrainConfig,
    pub hidden: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            model: ModelKind::Softmax,
            data: DIGITS.into(),
            seed: 0,
            train: TrainConfig::default(),
            hidden: 32,
        }
    }
}

/// Trains a victim and returns it with its sidecar record.
pub fn train_victim(t: &TrainSettings) -> Result<(Victim, victim::format::Sidecar)> {
    let train = load_dataset(&t.data, true)?;
    let test = if t.data == DIGITS {
        Some(load_dataset(DIGITS, false)?)
    } else {
        None
    };
    let root = RngStream::new(t.seed);
    let (d, k) = (train.dim(), train.num_classes());
    let mut v = match t.model {
        ModelKind::Softmax => Victim::Softmax(SoftmaxModel::zeros(d, k)),
        ModelKind::Mlp => Victim::Mlp(MlpModel::init(d, t.hidden, k, &mut root.split(0))?),
    };
    v.train(&train, &t.train, &mut root.split(1))?;
    let sidecar = victim::format::Sidecar {
        model: v.kind().into(),
        input_dim: d,
        num_classes: k,
        hidden: (t.model == ModelKind::Mlp).then_some(t.hidden),
        data: t.data.clone(),
        seed: t.seed,
        epochs: t.train.epochs,
        learning_rate: t.train.learning_rate,
        batch_size: t.train.batch_size,
        train_accuracy: accuracy(&v, &train)?,
        test_accuracy: test.as_ref().map(|d| accuracy(&v, d)).transpose()?,
    };
    Ok((v, sidecar))
}
