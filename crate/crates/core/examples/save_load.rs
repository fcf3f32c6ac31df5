//! Writes a solved value stack to bytes and reads it back.

use multistop::problem::make_put_problem;
use multistop::{draw_training_set, solve, GbmMarket, Mode, NetConfig, Result, StateLaw, SurvivalVector, ValueStack};

fn main() -> Result<()> {
    let market = GbmMarket::uniform(2, 0.05, 0.2, 1.0, 4, 1.0);
    let spec = make_put_problem(&[1.0, 1.0], &market)?;
    let data = draw_training_set(&spec, 2000, &StateLaw::Band { lo: 0.6, hi: 1.4, spread: 0.2 }, 1)?;
    let stack = solve(&spec, &data, Mode::Exhaustive, &NetConfig::default())?;

    let mut bytes = Vec::new();
    stack.write_to(&mut bytes)?;
    let back = ValueStack::read_from(bytes.as_slice(), spec)?;
    let (x, i) = ([0.9, 1.05], SurvivalVector::all_alive(2));
    println!("{} bytes; V(0) before {:.6}, after {:.6}", bytes.len(), stack.value(0, &x, i), back.value(0, &x, i));
    Ok(())
}
