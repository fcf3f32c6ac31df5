//! Config-driven experiment runs.
//!
//! Output files, all under `<root>/<experiment.name>/`:
//!
//! | file | columns |
//! |------|---------|
//! | `curve.csv` | `x,value_nn,value_oracle` on the diagonal `(x, ..., x)` |
//! | `plane.csv` | `x,value_nn,value_oracle` at `(x, y, ..., y)` |
//! | `rate.csv` | `p,h,l2_error,rel_error,seed` |
//! | `rate_summary.csv` | `p,h,l2_mean,l2_std,rel_mean,rel_std` |
//! | `slopes.csv` | `seed,slope,intercept,residual` |
//! | `summary.txt` | `key = value` lines |
//! | `value_stack.bin` | the main run's stack |
//! | `config.resolved.toml` | the config with defaults filled in, and the version |
//!
//! Per-job files go to `jobs/` and are merged once all jobs finish. A failed
//! run leaves a `FAILED` file next to whatever was written.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{ExperimentConfig, ProblemKind};
use super::svg::{render, Chart, Series};
use crate::error::{Error, Result};
use crate::evaluate::{
    diagonal_value_curve, fit_rate, l2_error, plane_value_curve, relative_l2_error, rollout_policy, EvalReport,
    RateFit,
};
use crate::simgen::draw_training_set;
use crate::solver::{solve, ValueStack};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable naming the output root; defaults to `./out`.
pub const OUTPUT_ROOT_VAR: &str = "MULTISTOP_OUT";

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_VAR)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out"))
}

#[derive(Clone, Debug)]
struct JobResult {
    p: usize,
    seed: u64,
    curve: Vec<(f64, f64)>,
    l2: f64,
    rel: f64,
    main: Option<MainRun>,
}

#[derive(Clone, Debug)]
struct MainRun {
    plane: Vec<(f64, f64)>,
    rollout: Option<EvalReport>,
    stack_bytes: Vec<u8>,
}

/// Headline numbers of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub dir: PathBuf,
    pub steps: usize,
    pub seed: u64,
    pub l2_error: f64,
    pub rel_error: f64,
    pub value_at_x0: f64,
    pub oracle_at_x0: f64,
    pub rollout: Option<EvalReport>,
    /// Per-seed fits of the rate study.
    pub fits: Vec<(u64, RateFit)>,
    /// `(p, mean l2, mean relative)` over seeds.
    pub rate_means: Vec<(usize, f64, f64)>,
}

impl Summary {
    pub fn slope_mean_std(&self) -> Option<(f64, f64)> {
        let s: Vec<f64> = self.fits.iter().map(|(_, f)| f.slope).collect();
        (!s.is_empty()).then(|| mean_std(&s))
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

fn write(dir: &Path, name: &str, contents: &[u8]) -> Result<()> {
    fs::write(dir.join(name), contents)?;
    Ok(())
}

fn curve_csv(nn: &[(f64, f64)], oracle: &[f64]) -> String {
    let mut s = String::from("x,value_nn,value_oracle\n");
    for ((x, v), r) in nn.iter().zip(oracle) {
        let _ = writeln!(s, "{x},{v},{r}");
    }
    s
}

fn run_job(cfg: &ExperimentConfig, p: usize, seed: u64, main: bool, oracle: &[f64]) -> Result<JobResult> {
    let spec = cfg.problem(p)?;
    let mode = cfg.mode()?;
    let data = draw_training_set(&spec, cfg.training.samples as usize, &cfg.state_law()?, seed)?;
    let stack = solve(&spec, &data, mode, &cfg.net_config()?)?;
    drop(data);
    let grid = cfg.grid();
    let curve = diagonal_value_curve(&stack, &grid, mode);
    let nn: Vec<f64> = curve.iter().map(|c| c.1).collect();
    let (l2, rel) = (l2_error(&nn, oracle), relative_l2_error(&nn, oracle));
    log::info!("p = {p}, seed {seed}: l2 {l2:.4e}, relative {rel:.4e}");
    let main = if main { Some(main_extras(cfg, &stack, seed)?) } else { None };
    Ok(JobResult {
        p,
        seed,
        curve,
        l2,
        rel,
        main,
    })
}

fn main_extras(cfg: &ExperimentConfig, stack: &ValueStack, seed: u64) -> Result<MainRun> {
    let mode = stack.mode();
    let plane = plane_value_curve(stack, &cfg.grid(), cfg.evaluate.plane_y, mode);
    let paths = cfg.evaluate.rollout_paths as usize;
    let rollout = if paths > 0 {
        let x0 = vec![cfg.problem.x0; cfg.components()];
        Some(rollout_policy(stack.problem(), &x0, &stack.policy(), paths, seed)?)
    } else {
        None
    };
    let mut stack_bytes = Vec::new();
    stack.write_to(&mut stack_bytes)?;
    Ok(MainRun {
        plane,
        rollout,
        stack_bytes,
    })
}

/// Runs the main solve and the rate study, writing every artifact.
pub fn run_experiment(cfg: &ExperimentConfig, root: &Path) -> Result<Summary> {
    cfg.validate()?;
    let dir = root.join(&cfg.experiment.name);
    fs::create_dir_all(dir.join("jobs"))?;
    let _ = fs::remove_file(dir.join("FAILED"));
    let result = run_in(cfg, &dir);
    if let Err(e) = &result {
        let _ = fs::write(dir.join("FAILED"), format!("{e}\n"));
    }
    result
}

fn run_in(cfg: &ExperimentConfig, dir: &Path) -> Result<Summary> {
    write(
        dir,
        "config.resolved.toml",
        format!("# multistop {VERSION}\n{}", cfg.to_toml()).as_bytes(),
    )?;

    let grid = cfg.grid();
    let oracle = grid
        .iter()
        .map(|&x| cfg.diagonal_reference(x))
        .collect::<Result<Vec<_>>>()?;
    let y = cfg.evaluate.plane_y;
    let plane_oracle = grid
        .iter()
        .map(|&x| cfg.plane_reference(x, y))
        .collect::<Result<Vec<_>>>()?;

    let seeds = cfg.seeds();
    let main_p = cfg.solver.steps as usize;
    let mut jobs: Vec<(usize, u64)> = vec![(main_p, seeds[0])];
    for &p in &cfg.solver.rate_steps {
        for &s in &seeds {
            if (p as usize, s) != jobs[0] {
                jobs.push((p as usize, s));
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.experiment.workers as usize)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let results: Vec<JobResult> = pool.install(|| {
        jobs.par_iter()
            .enumerate()
            .map(|(k, &(p, seed))| {
                let r = run_job(cfg, p, seed, k == 0, &oracle)?;
                let mut row = String::from("p,h,l2_error,rel_error,seed\n");
                let h = cfg.problem.horizon / p as f64;
                let _ = writeln!(row, "{p},{h},{},{},{seed}", r.l2, r.rel);
                write(&dir.join("jobs"), &format!("p{p}_seed{seed}.csv"), row.as_bytes())?;
                Ok(r)
            })
            .collect::<Result<_>>()
    })?;

    // finalizer
    let main = &results[0];
    let extras = main.main.as_ref().expect("first job is the main run");
    write(dir, "curve.csv", curve_csv(&main.curve, &oracle).as_bytes())?;
    write(dir, "plane.csv", curve_csv(&extras.plane, &plane_oracle).as_bytes())?;
    write(dir, "value_stack.bin", &extras.stack_bytes)?;

    let title = match cfg.kind()? {
        ProblemKind::LogUtility => "log utility",
        ProblemKind::MultiPut => "multi put",
    };
    let n = cfg.components();
    let chart = |label: &str, nn: &[(f64, f64)], reference: &[f64], x_label: &str| Chart {
        title: format!("{title}, N = {n}, p = {main_p}: {label}"),
        x_label: x_label.into(),
        y_label: "V_0".into(),
        series: vec![
            Series::line("network", nn.to_vec()),
            Series::line("reference", grid.iter().copied().zip(reference.iter().copied()).collect()).dashed(),
        ],
        ..Chart::default()
    };
    write(dir, "curve.svg", render(&chart("diagonal", &main.curve, &oracle, "x")).as_bytes())?;
    write(
        dir,
        "plane.svg",
        render(&chart(&format!("plane y = {y}"), &extras.plane, &plane_oracle, "x_1")).as_bytes(),
    )?;

    // rate study: every (p, seed) in the grid, including the main run if it belongs
    let rate_ps: Vec<usize> = cfg.solver.rate_steps.iter().map(|&p| p as usize).collect();
    let mut rate_rows: Vec<&JobResult> = results
        .iter()
        .filter(|r| rate_ps.contains(&r.p))
        .collect();
    rate_rows.sort_by_key(|r| (r.p, r.seed));
    let mut rate_csv = String::from("p,h,l2_error,rel_error,seed\n");
    for r in &rate_rows {
        let h = cfg.problem.horizon / r.p as f64;
        let _ = writeln!(rate_csv, "{},{h},{},{},{}", r.p, r.l2, r.rel, r.seed);
    }
    let mut fits = Vec::new();
    let mut rate_means = Vec::new();
    if !rate_ps.is_empty() {
        write(dir, "rate.csv", rate_csv.as_bytes())?;
        let mut sorted_ps = rate_ps.clone();
        sorted_ps.sort_unstable();
        let mut summary_csv = String::from("p,h,l2_mean,l2_std,rel_mean,rel_std\n");
        let mut band = Vec::new();
        let mut rel_line = Vec::new();
        for &p in &sorted_ps {
            let l2: Vec<f64> = rate_rows.iter().filter(|r| r.p == p).map(|r| r.l2).collect();
            let rel: Vec<f64> = rate_rows.iter().filter(|r| r.p == p).map(|r| r.rel).collect();
            let (lm, ls) = mean_std(&l2);
            let (rm, rs) = mean_std(&rel);
            let h = cfg.problem.horizon / p as f64;
            let _ = writeln!(summary_csv, "{p},{h},{lm},{ls},{rm},{rs}");
            rate_means.push((p, lm, rm));
            band.push((p as f64, (lm - ls).max(lm * 1e-3), lm + ls));
            rel_line.push((p as f64, rm));
        }
        write(dir, "rate_summary.csv", summary_csv.as_bytes())?;
        let mut slopes_csv = String::from("seed,slope,intercept,residual\n");
        for &seed in &seeds {
            let pts: Vec<(usize, f64)> = rate_rows
                .iter()
                .filter(|r| r.seed == seed)
                .map(|r| (r.p, r.l2))
                .collect();
            let fit = fit_rate(&pts, cfg.problem.horizon)?;
            let _ = writeln!(slopes_csv, "{seed},{},{},{}", fit.slope, fit.intercept, fit.residual);
            fits.push((seed, fit));
        }
        write(dir, "slopes.csv", slopes_csv.as_bytes())?;
        let mean_pts: Vec<(usize, f64)> = rate_means.iter().map(|&(p, l, _)| (p, l)).collect();
        let mean_fit = fit_rate(&mean_pts, cfg.problem.horizon)?;
        let fitted: Vec<(f64, f64)> = sorted_ps
            .iter()
            .map(|&p| {
                let h = cfg.problem.horizon / p as f64;
                (p as f64, (mean_fit.intercept + mean_fit.slope * h.ln()).exp())
            })
            .collect();
        let rate_chart = Chart {
            title: format!("{title}, N = {n}: diagonal error against p"),
            x_label: "p".into(),
            y_label: "error".into(),
            log_x: true,
            log_y: true,
            series: vec![
                Series {
                    label: "l2 mean".into(),
                    points: band.iter().map(|&(p, lo, hi)| (p, 0.5 * (lo + hi))).collect(),
                    band,
                    dashed: false,
                },
                Series::line(&format!("fit, slope {:.2}", mean_fit.slope), fitted).dashed(),
                Series::line("relative l2", rel_line).dashed(),
            ],
        };
        write(dir, "rate.svg", render(&rate_chart).as_bytes())?;
    }

    let x0 = vec![cfg.problem.x0; n];
    let stack = ValueStack::read_from(&extras.stack_bytes[..], cfg.problem(main_p)?)?;
    let value_at_x0 = stack.value(0, &x0, crate::mask::SurvivalVector::all_alive(n));
    let oracle_at_x0 = cfg.diagonal_reference(cfg.problem.x0)?;
    let summary = Summary {
        dir: dir.to_path_buf(),
        steps: main_p,
        seed: seeds[0],
        l2_error: main.l2,
        rel_error: main.rel,
        value_at_x0,
        oracle_at_x0,
        rollout: extras.rollout.clone(),
        fits,
        rate_means,
    };
    write(dir, "summary.txt", summary_text(cfg, &summary)?.as_bytes())?;
    Ok(summary)
}

fn summary_text(cfg: &ExperimentConfig, s: &Summary) -> Result<String> {
    let mut t = String::new();
    let _ = writeln!(t, "# multistop {VERSION}");
    let _ = writeln!(t, "experiment = {}", cfg.experiment.name);
    let _ = writeln!(t, "problem = {}", cfg.problem.kind);
    let _ = writeln!(t, "mode = {}", cfg.solver.mode);
    let _ = writeln!(t, "components = {}", cfg.components());
    let _ = writeln!(t, "steps = {}", s.steps);
    let _ = writeln!(t, "seed = {}", s.seed);
    let _ = writeln!(t, "diagonal_l2_error = {}", s.l2_error);
    let _ = writeln!(t, "diagonal_rel_l2_error = {}", s.rel_error);
    let _ = writeln!(t, "value_nn_at_x0 = {}", s.value_at_x0);
    let _ = writeln!(t, "value_oracle_at_x0 = {}", s.oracle_at_x0);
    let _ = writeln!(t, "oracle_gap_at_x0 = {}", s.value_at_x0 - s.oracle_at_x0);
    if cfg.kind()? == ProblemKind::MultiPut {
        let _ = writeln!(
            t,
            "oracle_component_value_at_x0 = {}",
            cfg.component_reference(cfg.problem.x0)?
        );
    }
    if let Some(r) = &s.rollout {
        let _ = writeln!(t, "rollout_estimate = {}", r.estimate);
        let _ = writeln!(t, "rollout_std_error = {}", r.std_error);
        let _ = writeln!(t, "rollout_paths = {}", r.paths);
        let stops: Vec<String> = r.stops.iter().map(u64::to_string).collect();
        let _ = writeln!(t, "rollout_stops_per_step = {}", stops.join(" "));
    }
    if let Some((m, sd)) = s.slope_mean_std() {
        let _ = writeln!(t, "rate_slope_mean = {m}");
        let _ = writeln!(t, "rate_slope_std = {sd}");
        let (first, last) = (s.rate_means[0], s.rate_means[s.rate_means.len() - 1]);
        let _ = writeln!(t, "rate_error_decreasing = {}", last.1 < first.1);
    }
    Ok(t)
}
