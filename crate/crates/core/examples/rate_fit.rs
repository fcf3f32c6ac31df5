//! Empirical convergence order from errors at several step counts.

use multistop::evaluate::fit_rate;
use multistop::Result;

fn main() -> Result<()> {
    // Errors that follow 0.3 h^0.5 up to a small wobble.
    let points: Vec<(usize, f64)> = [5usize, 10, 20, 40, 80]
        .iter()
        .enumerate()
        .map(|(k, &p)| (p, 0.3 * (1.0 / p as f64).sqrt() * (1.0 + 0.02 * (k as f64).sin())))
        .collect();
    let fit = fit_rate(&points, 1.0)?;
    println!("slope {:.4}, intercept {:.4}, residual {:.2e}", fit.slope, fit.intercept, fit.residual);
    Ok(())
}
