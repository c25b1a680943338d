//! A small batch through the experiment harness: JSON per pair, an
//! aggregate CSV, and the summary read back from disk.

use blackbox_admm::experiment::{format_summary, read_reports, run_batch, summarize, write_outputs, Settings};

fn main() -> blackbox_admm::Result<()> {
    let mut s = Settings::preset("mnist-like")?;
    s.pairs = 9;
    s.budget = 5000;
    s.seed = 4;
    let dir = std::env::temp_dir().join("bbadmm-batch-example");
    let csv = write_outputs(&dir, &run_batch(&s)?)?;
    println!(
        "{}",
        std::fs::read_to_string(&csv).map_err(|e| blackbox_admm::Error::Io { path: csv, source: e })?
    );
    print!("{}", format_summary(&summarize(&read_reports(&dir)?)));
    Ok(())
}
