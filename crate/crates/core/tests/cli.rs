use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use blackbox_admm::experiment::{run_batch, summarize, write_outputs, Settings, CSV_HEADER};
use blackbox_admm::victim::format;
use blackbox_admm::victim::{Trainable, Victim};

fn bbadmm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bbadmm"))
        .args(args)
        .output()
        .expect("run bbadmm")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn training_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.bin");
    let b = dir.path().join("b.bin");
    for out in [&a, &b] {
        let o = bbadmm(&[
            "train",
            "--model",
            "softmax",
            "--data",
            "digits8x8",
            "--seed",
            "7",
            "--epochs",
            "5",
            "--out",
            p(out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let sidecar: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(format::sidecar_path(&a)).unwrap()).unwrap();
    assert_eq!(sidecar["seed"], 7);
    assert_eq!(sidecar["model"], "softmax");
}

#[test]
fn zero_epochs_saves_initial_weights() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.bin");
    let o = bbadmm(&["train", "--epochs", "0", "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    match format::load(&out).unwrap() {
        Victim::Softmax(m) => assert!(m.params().iter().all(|v| *v == 0.0)),
        other => panic!("{other:?}"),
    }
    let out = dir.path().join("mlp.bin");
    let o = bbadmm(&[
        "train",
        "--model",
        "mlp",
        "--hidden",
        "8",
        "--epochs",
        "0",
        "--seed",
        "3",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success());
    assert!(matches!(format::load(&out).unwrap(), Victim::Mlp(m) if m.hidden() == 8));
}

#[test]
fn missing_data_file_names_the_path() {
    let o = bbadmm(&["train", "--data", "/nonexistent/digits.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/nonexistent/digits.csv"), "{}", stderr(&o));
}

#[test]
fn attack_argument_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    for args in [
        vec!["attack", "--budget", "0"],
        vec!["attack", "--budget", "-5"],
        vec!["attack", "--norm", "l3"],
        vec!["attack", "--preset", "cifar"],
    ] {
        let mut args = args.clone();
        args.extend(["--out", p(&out)]);
        let o = bbadmm(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
    // decision mode over a CSV of inputs has no exemplar source
    let csv = dir.path().join("x.csv");
    fs::write(&csv, format!("{}0\n", "0.5,".repeat(64))).unwrap();
    let o = bbadmm(&["attack", "--feedback", "decision", "--data", p(&csv), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("exemplar"), "{}", stderr(&o));
}

#[test]
fn batch_outputs_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = bbadmm(&[
            "attack",
            "--backend",
            "zo",
            "--feedback",
            "score",
            "--norm",
            "l2",
            "--budget",
            "3000",
            "--pairs",
            "4",
            "--seed",
            "1",
            "--out",
            p(out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).contains("asr"));
    }
    let csv = fs::read_to_string(a.join("aggregate.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), CSV_HEADER);
    assert_eq!(csv.lines().count(), 5);
    assert_eq!(csv, fs::read_to_string(b.join("aggregate.csv")).unwrap());
    for i in 0..4 {
        let name = format!("pair_{i:04}.json");
        let mut ra: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join(&name)).unwrap()).unwrap();
        let mut rb: serde_json::Value = serde_json::from_str(&fs::read_to_string(b.join(&name)).unwrap()).unwrap();
        ra["generated_at_unix"] = 0.into();
        rb["generated_at_unix"] = 0.into();
        assert_eq!(ra, rb);
        assert_eq!(ra["settings"]["seed"], 1);
    }
    let o = bbadmm(&["report", p(&a)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("100.00%"), "{}", stdout(&o));
}

#[test]
fn zero_success_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    // below one iteration's query cost
    let o = bbadmm(&["attack", "--budget", "10", "--pairs", "2", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn report_of_empty_directory_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = bbadmm(&["report", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let o = bbadmm(&["report", "/nonexistent/reports"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_report_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("pair_0000.json"), "{\"run\": 3}").unwrap();
    assert_eq!(bbadmm(&["report", p(dir.path())]).status.code(), Some(2));
}

#[test]
fn mixed_batch_excludes_failures_from_means() {
    let mut s = Settings::preset("mnist-like").unwrap();
    s.pairs = 4;
    let mut reports = run_batch(&s).unwrap();
    assert!(reports.iter().all(|r| r.run.success));
    let kept: Vec<f64> = reports[..3].iter().map(|r| r.run.best_norms.unwrap().l2).collect();
    let run = &mut reports[3].run;
    run.success = false;
    run.best = None;
    run.best_norms = None;
    run.queries_first_success = None;
    let dir = tempfile::tempdir().unwrap();
    write_outputs(dir.path(), &reports).unwrap();
    let sum = summarize(&reports);
    assert_eq!(sum.asr, 0.75);
    assert!((sum.mean_l2.unwrap() - kept.iter().sum::<f64>() / 3.0).abs() < 1e-15);
    let o = bbadmm(&["report", p(dir.path())]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("75.00%"), "{text}");
    assert!(text.contains(&format!("{:.4}", sum.mean_l2.unwrap())), "{text}");
}

#[test]
fn config_file_sits_between_preset_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.txt");
    fs::write(&cfg, "budget = 2000\nseed = 5\npairs = 2\n").unwrap();
    let out = dir.path().join("r");
    let o = bbadmm(&["attack", "--config", p(&cfg), "--seed", "6", "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("pair_0001.json")).unwrap()).unwrap();
    assert_eq!(r["settings"]["budget"], 2000);
    assert_eq!(r["settings"]["seed"], 6);
    assert!(!out.join("pair_0002.json").exists());
}
