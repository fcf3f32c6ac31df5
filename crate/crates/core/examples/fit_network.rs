//! One-hidden-layer fit of a smooth function, plus a finite-difference
//! check of the loss gradient.

use multistop::shallownet::{fit_lsq, Activation, Normalization, ShallowNet, TrainConfig};
use multistop::Result;

fn main() -> Result<()> {
    let xs: Vec<f64> = (0..2000).map(|k| -2.0 + 4.0 * k as f64 / 1999.0).collect();
    let ys: Vec<f64> = xs.iter().map(|x| (2.0 * x).sin() + 0.3 * x * x).collect();
    let mut net = ShallowNet::random(1, 16, Activation::Tanh, 3);
    net.set_normalization(Normalization::fit(&xs, &ys, 1))?;
    let cfg = TrainConfig { epochs: 300, learning_rate: 1e-2, batch_size: 64, ..TrainConfig::default() };
    let fit = fit_lsq(net, &xs, &ys, &cfg)?;
    println!("mse {:.3e} after {} epochs (best at {})", fit.mse, fit.epochs_run, fit.best_epoch);
    for x in [-1.5f64, 0.0, 1.5] {
        println!("  f({x}) = {:.4}, net {:.4}", (2.0 * x).sin() + 0.3 * x * x, fit.net.predict(&[x]));
    }

    let check = multistop::cli::selftest::gradient_check(100, 9);
    println!("{check}");
    Ok(())
}
