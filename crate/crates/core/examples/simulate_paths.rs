//! Euler paths of a two-asset GBM, with and without a threshold stopping
//! rule. Stopped components stay frozen.

use multistop::problem::DiffusionSpec;
use multistop::simgen::simulate_diffusion_paths;
use multistop::{Result, SurvivalVector};

fn main() -> Result<()> {
    let diff = DiffusionSpec::gbm(&[0.05, -0.02], &[0.2, 0.3], 1.0, 12, &[1.0, 1.0])?;
    let free = simulate_diffusion_paths(&diff, None, 4, 5)?;
    for path in 0..2 {
        let last: Vec<String> = free.state(path, 12).iter().map(|v| format!("{v:.4}")).collect();
        println!("path {path} at the horizon: [{}]", last.join(", "));
    }

    // Stop a component once it falls below 0.95.
    let rule = |_n: usize, x: &[f64], i: SurvivalVector| {
        (0..x.len()).fold(i, |m, k| if m.is_alive(k) && x[k] < 0.95 { m.stop(k) } else { m })
    };
    let batch = simulate_diffusion_paths(&diff, Some(&rule), 1000, 5)?;
    batch.check_freezing()?;
    let stopped = (0..1000).filter(|&m| batch.mask(m, 12).count_alive() < 2).count();
    println!("{stopped} of 1000 paths stopped at least one component");
    Ok(())
}
