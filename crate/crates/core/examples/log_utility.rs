//! Partial-mode solve of the five-asset log-utility problem, compared
//! with its closed-form value on the diagonal and checked by rollout.
//!
//! cargo run --release --example log_utility [samples]

use multistop::evaluate::{diagonal_value_curve, linspace, relative_l2_error, rollout_policy};
use multistop::oracle::log_utility_value;
use multistop::problem::make_log_utility_problem;
use multistop::{draw_training_set, solve, GbmMarket, Mode, NetConfig, Result, StateLaw};

fn main() -> Result<()> {
    let samples = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1 << 13);
    let n = 5;
    let market = GbmMarket::uniform(n, -0.05, 0.2, 1.0, 10, 1.0);
    let spec = make_log_utility_problem(&market)?;
    let law = StateLaw::Band { lo: 0.0, hi: 2.5, spread: 0.2 };
    let data = draw_training_set(&spec, samples, &law, 1)?;
    let stack = solve(&spec, &data, Mode::Partial, &NetConfig::default())?;

    let grid = linspace(0.2, 2.0, 37);
    let curve = diagonal_value_curve(&stack, &grid, Mode::Partial);
    let nn: Vec<f64> = curve.iter().map(|c| c.1).collect();
    let exact: Vec<f64> = grid.iter().map(|&x| log_utility_value(&vec![x; n])).collect();
    println!("{:>6} {:>10} {:>10}", "x", "network", "exact");
    for k in (0..grid.len()).step_by(4) {
        println!("{:>6.2} {:>10.5} {:>10.5}", grid[k], nn[k], exact[k]);
    }
    println!("relative L2 error on the diagonal: {:.3}%", 100.0 * relative_l2_error(&nn, &exact));

    let x0 = vec![1.0; n];
    let report = rollout_policy(&spec, &x0, &stack.policy(), 20_000, 7)?;
    println!(
        "rollout J0 = {:.5} +- {:.5}, exact V = {:.5}",
        report.estimate,
        report.std_error,
        log_utility_value(&x0)
    );
    Ok(())
}
