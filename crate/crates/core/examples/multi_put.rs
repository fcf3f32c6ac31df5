//! Partial-mode solve of a basket of five independent American puts.
//! The basket value is the sum of one-dimensional tree prices.
//!
//! cargo run --release --example multi_put [samples]
//!
//! Small samples bias the value upward: the maximum over noisy
//! candidates picks up the noise, more so with all 32 submasks in
//! exhaustive mode. The default takes about a minute.

use multistop::evaluate::{diagonal_value_curve, linspace, relative_l2_error, rollout_policy};
use multistop::oracle::binomial_put;
use multistop::problem::make_put_problem;
use multistop::{draw_training_set, solve, GbmMarket, Mode, NetConfig, Result, StateLaw};

fn main() -> Result<()> {
    let samples = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1 << 15);
    let (n, mu, sigma) = (5, 0.05, 0.2);
    let market = GbmMarket::uniform(n, mu, sigma, 1.0, 10, 1.0);
    let spec = make_put_problem(&vec![1.0; n], &market)?;
    let law = StateLaw::Band { lo: 0.5, hi: 1.6, spread: 0.2 };
    let data = draw_training_set(&spec, samples, &law, 1)?;
    let stack = solve(&spec, &data, Mode::Partial, &NetConfig::default())?;

    let grid = linspace(0.8, 1.2, 21);
    let curve = diagonal_value_curve(&stack, &grid, Mode::Partial);
    let nn: Vec<f64> = curve.iter().map(|c| c.1).collect();
    let mut tree = Vec::with_capacity(grid.len());
    for &x in &grid {
        tree.push(n as f64 * binomial_put(x, 1.0, mu, sigma, 1.0, 1000)?);
    }
    for k in (0..grid.len()).step_by(4) {
        println!("x = {:.2}: network {:.5}, tree {:.5}", grid[k], nn[k], tree[k]);
    }
    println!("relative L2 error: {:.2}%", 100.0 * relative_l2_error(&nn, &tree));

    let report = rollout_policy(&spec, &vec![1.0; n], &stack.policy(), 20_000, 3)?;
    println!("rollout lower bound at x0 = 1: {:.5} +- {:.5}", report.estimate, report.std_error);
    Ok(())
}
