//! Runs an experiment from a bundled configuration at reduced scale and
//! lists the files it writes.
//!
//! cargo run --release --example run_config [log_utility_n5|multi_put_n5]

use multistop::cli::config::{bundled, ExperimentConfig};
use multistop::cli::experiment::run_experiment;
use multistop::{Error, Result};

fn main() -> Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "log_utility_n5".into());
    let text = bundled(&name).ok_or_else(|| Error::Config(format!("no bundled config {name}")))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    cfg.experiment.seeds = vec![1, 2];
    cfg.solver.steps = 5;
    cfg.solver.rate_steps = vec![2, 4, 8];
    cfg.training.samples = 2048;
    cfg.evaluate.rollout_paths = 2000;

    let root = std::env::temp_dir().join("multistop-example");
    let summary = run_experiment(&cfg, &root)?;
    println!("wrote {}", summary.dir.display());
    println!("relative L2 error at p = {}: {:.4}", summary.steps, summary.rel_error);
    if let Some((mean, std)) = summary.slope_mean_std() {
        println!("rate slope {mean:.3} +- {std:.3}");
    }
    let mut files: Vec<_> = std::fs::read_dir(&summary.dir)?.filter_map(|e| e.ok()).map(|e| e.file_name()).collect();
    files.sort();
    for f in files {
        println!("  {}", f.to_string_lossy());
    }
    Ok(())
}
