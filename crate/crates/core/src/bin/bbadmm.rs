//! Command-line harness: train victims, run attack batches, summarize
//! reports, and serve a victim over the line protocol.
//!
//! Exit codes: 0 ok, 1 the batch ran but no pair succeeded, 2 usage or
//! configuration error.

use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use blackbox_admm::experiment::{
    self, format_summary, read_reports, run_batch, summarize, train_victim, ModelKind, Settings, TrainSettings,
};
use blackbox_admm::oracle::{serve, Classifier};
use blackbox_admm::victim::{self, TrainConfig};
use blackbox_admm::{Error, Feedback};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bbadmm", version, about = "Black-box ADMM adversarial attacks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a bundled victim and save its weight file.
    Train(TrainArgs),
    /// Attack (image, target) pairs; writes per-pair JSON and aggregate.csv.
    Attack(Box<AttackArgs>),
    /// Print the summary table of a report directory.
    Report { dir: PathBuf },
    /// Answer line-protocol queries on stdin/stdout.
    Serve {
        /// Weight file; the bundled softmax victim when omitted.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, value_parser = ["score", "decision"], default_value = "score")]
        feedback: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_parser = ["softmax", "mlp"], default_value = "softmax")]
    model: String,
    /// `digits8x8` or a CSV file of `values..., label` rows.
    #[arg(long, default_value = experiment::DIGITS)]
    data: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    lr: f64,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    batch_size: usize,
    #[arg(long, default_value_t = 32)]
    hidden: usize,
    /// Output weight file; a `.json` sidecar is written next to it.
    #[arg(long, default_value = "victim.bin")]
    out: PathBuf,
}

#[derive(Args)]
struct AttackArgs {
    /// `mnist-like` or `synthetic-1d`.
    #[arg(long, default_value = "mnist-like")]
    preset: String,
    /// `key = value` file applied over the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = ["zo", "bo"])]
    backend: Option<String>,
    #[arg(long, value_parser = ["score", "decision"])]
    feedback: Option<String>,
    #[arg(long, value_parser = ["l0", "l1", "l2", "elastic"])]
    norm: Option<String>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long, value_parser = ["sphere", "gaussian"])]
    direction: Option<String>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    n_smooth: Option<usize>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    budget: Option<i64>,
    #[arg(long)]
    pairs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    untargeted: bool,
    /// Stop each pair at its first success.
    #[arg(long)]
    no_refine: bool,
    /// Point probed for success each iteration.
    #[arg(long, value_parser = ["delta", "z"])]
    probe: Option<String>,
    #[arg(long)]
    bo_init: Option<usize>,
    #[arg(long)]
    bo_iters: Option<usize>,
    /// Seed-sample radius around the current δ, or `none`.
    #[arg(long)]
    bo_radius: Option<String>,
    #[arg(long)]
    bo_max_obs: Option<usize>,
    #[arg(long)]
    bo_fit_steps: Option<usize>,
    /// Weight file of the victim; the bundled softmax when omitted.
    #[arg(long)]
    weights: Option<String>,
    /// Inputs to attack: `digits8x8` or a CSV file.
    #[arg(long)]
    data: Option<String>,
    /// Target-class exemplar source for decision mode.
    #[arg(long)]
    init_from: Option<String>,
    #[arg(long, default_value = "reports")]
    out: PathBuf,
}

impl AttackArgs {
    fn settings(&self) -> blackbox_admm::Result<Settings> {
        let mut s = Settings::preset(&self.preset)?;
        if let Some(p) = &self.config {
            s.apply_file(p)?;
        }
        let flags: [(&str, Option<String>); 26] = [
            ("backend", self.backend.clone()),
            ("feedback", self.feedback.clone()),
            ("norm", self.norm.clone()),
            ("beta", self.beta.map(|v| v.to_string())),
            ("eps", self.eps.map(|v| v.to_string())),
            ("gamma", self.gamma.map(|v| v.to_string())),
            ("rho", self.rho.map(|v| v.to_string())),
            ("alpha", self.alpha.map(|v| v.to_string())),
            ("q", self.q.map(|v| v.to_string())),
            ("nu", self.nu.map(|v| v.to_string())),
            ("direction", self.direction.clone()),
            ("mu", self.mu.map(|v| v.to_string())),
            ("n_smooth", self.n_smooth.map(|v| v.to_string())),
            ("kappa", self.kappa.map(|v| v.to_string())),
            ("budget", self.budget.map(|v| v.to_string())),
            ("pairs", self.pairs.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("probe", self.probe.clone()),
            ("bo_init", self.bo_init.map(|v| v.to_string())),
            ("bo_iters", self.bo_iters.map(|v| v.to_string())),
            ("bo_radius", self.bo_radius.clone()),
            ("bo_max_obs", self.bo_max_obs.map(|v| v.to_string())),
            ("bo_fit_steps", self.bo_fit_steps.map(|v| v.to_string())),
            ("weights", self.weights.clone()),
            ("data", self.data.clone()),
            ("init_from", self.init_from.clone()),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                s.set(k, &v)?;
            }
        }
        if self.untargeted {
            s.untargeted = true;
        }
        if self.no_refine {
            s.refine = false;
        }
        Ok(s)
    }
}

fn cmd_train(a: &TrainArgs) -> blackbox_admm::Result<()> {
    let t = TrainSettings {
        model: if a.model == "mlp" {
            ModelKind::Mlp
        } else {
            ModelKind::Softmax
        },
        data: a.data.clone(),
        seed: a.seed,
        train: TrainConfig {
            epochs: a.epochs,
            learning_rate: a.lr,
            batch_size: a.batch_size,
        },
        hidden: a.hidden,
    };
    let (v, sidecar) = train_victim(&t)?;
    victim::format::save(&v, &a.out, Some(&sidecar))?;
    println!(
        "wrote {} ({}, train accuracy {:.4})",
        a.out.display(),
        sidecar.model,
        sidecar.train_accuracy
    );
    Ok(())
}

fn cmd_attack(a: &AttackArgs) -> blackbox_admm::Result<bool> {
    let s = a.settings()?;
    let reports = run_batch(&s)?;
    let csv = experiment::write_outputs(&a.out, &reports)?;
    let summary = summarize(&reports);
    print!("{}", format_summary(&summary));
    println!("wrote {}", csv.display());
    Ok(summary.successes > 0)
}

fn cmd_report(dir: &Path) -> blackbox_admm::Result<()> {
    let reports = read_reports(dir)?;
    if reports.is_empty() {
        return Err(Error::Format {
            offset: 0,
            reason: format!("no reports in {}", dir.display()),
        });
    }
    print!("{}", format_summary(&summarize(&reports)));
    Ok(())
}

fn cmd_serve(weights: &Option<PathBuf>, feedback: &str, seed: u64) -> blackbox_admm::Result<()> {
    let v = match weights {
        Some(p) => victim::format::load(p)?,
        None => experiment::bundled_softmax(seed)?,
    };
    let fb = if feedback == "decision" {
        Feedback::LabelOnly
    } else {
        Feedback::Scores
    };
    eprintln!("serving d = {}, K = {}", v.input_dim(), v.num_classes());
    let stdin = io::stdin().lock();
    serve(&v, fb, stdin, io::stdout().lock())?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Train(a) => cmd_train(a).map(|_| true),
        Cmd::Attack(a) => cmd_attack(a),
        Cmd::Report { dir } => cmd_report(dir).map(|_| true),
        Cmd::Serve {
            weights,
            feedback,
            seed,
        } => cmd_serve(weights, feedback, *seed).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("no pair succeeded");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
