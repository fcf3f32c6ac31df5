//! Finite-noise instances solved three ways: forward enumeration with
//! both maximization rules, and the tabular backward solver.

use multistop::oracle::{exact_dp, random_finite_instance, Variant};
use multistop::solver::{solve_with, TabularBackend};
use multistop::{Mode, Result, SurvivalVector};

fn main() -> Result<()> {
    let inst = random_finite_instance(42, 3, 4)?;
    let all = SurvivalVector::all_alive(3);
    let original = exact_dp(&inst, Variant::Original)?;
    let alternative = exact_dp(&inst, Variant::Alternative)?;
    println!("{} reachable (n, x, i) entries", original.len());

    let mut backend = TabularBackend::new(&inst.spec, &inst.x0, 100_000)?;
    let stack = solve_with(&inst.spec, Mode::Exhaustive, &mut backend)?;
    let partial = solve_with(&inst.spec, Mode::Partial, &mut backend)?;
    let v = original.value(0, &inst.x0, all).expect("root is reachable");
    let w = alternative.value(0, &inst.x0, all).expect("root is reachable");
    println!("exhaustive: exact {v:.12}, tabular {:.12}", stack.value(0, &inst.x0, all));
    println!("one-at-a-time: exact {w:.12}, tabular {:.12}", partial.value(0, &inst.x0, all));
    println!("gap from forbidding simultaneous stops: {:.3e}", v - w);

    let d = stack.value_exhaustive(0, &inst.x0, all);
    println!("first decision: keep {} ({} candidates)", d.next, d.candidates);
    Ok(())
}
