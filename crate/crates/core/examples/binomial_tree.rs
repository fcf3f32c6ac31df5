//! American and European put prices from the binomial tree.

use multistop::oracle::binomial_put;
use multistop::Result;

fn main() -> Result<()> {
    // With zero drift early exercise is worth nothing, so the tree
    // converges to the Black-Scholes price 14.2916.
    println!("S = 100, K = 110, sigma = 0.2, T = 1, drift 0");
    for steps in [50, 200, 1000, 4000] {
        println!("  {steps:>5} steps: {:.6}", binomial_put(100.0, 110.0, 0.0, 0.2, 1.0, steps)?);
    }
    println!("unit put, drift 0.05, vol 0.2");
    for s in [0.8, 0.9, 1.0, 1.1, 1.2] {
        println!("  S = {s:.1}: {:.6}", binomial_put(s, 1.0, 0.05, 0.2, 1.0, 2000)?);
    }
    Ok(())
}
