//! Runs the whole desk pipeline from the shipped config and prints the
//! summary. Stages whose outputs are current are skipped on re-runs.
//!
//! cargo run --release --example desk_pipeline [run-dir]

use asdetect::config::RunConfig;
use asdetect::pipeline::{run_all, RunDir};
use std::path::Path;

fn main() -> asdetect::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "desk-run".into());
    let cfg_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.conf");
    let cfg = RunConfig::load(&cfg_path)?;
    let (summary, log) = run_all(&cfg, &RunDir::new(&out), false)?;
    for (stage, status) in log.0 {
        println!("{stage:<13} {status:?}");
    }
    println!();
    for key in [
        "test_accuracy",
        "holdout_attack_success",
        "switch_probs",
        "cutoff",
        "calibration_fpr",
        "mean_ll_normal",
        "mean_ll_adv",
        "auc",
        "filtered_auc",
        "pearson_ll_l2",
        "fp_misclassified_rate",
    ] {
        println!("{key:<24} {}", summary.get(key).unwrap_or("absent"));
    }
    println!("\nartifacts in {out}/");
    Ok(())
}
