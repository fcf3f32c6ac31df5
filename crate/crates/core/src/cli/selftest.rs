//! Fast checks of the exact pipeline and of the invariants the solver
//! relies on. Each check returns a [`Check`] instead of panicking so the
//! runner can list every failure with its counterexample.

use std::collections::HashMap;

use rand::Rng;

use crate::error::Result;
use crate::mask::SurvivalVector;
use crate::oracle::{exact_dp, random_finite_instance, serialize_stops, StopSchedule, Variant};
use crate::problem::{make_put_problem, GbmMarket};
use crate::rng::{stream, Purpose};
use crate::shallownet::{Activation, Normalization, ShallowNet, TrainConfig};
use crate::simgen::{draw_training_set, StateLaw};
use crate::solver::{solve, solve_with, Mode, NetConfig, TabularBackend, ValueStack};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}: {}", self.name, self.detail)
    }
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

/// Largest tabulated-state count for the tabular backend.
const TABLE_CAP: usize = 200_000;

fn instance_shape(k: usize) -> (usize, usize) {
    (1 + k % 3, 1 + (k / 3) % 4)
}

fn tabular_stack(inst: &crate::oracle::FiniteInstance, mode: Mode) -> Result<ValueStack> {
    let mut backend = TabularBackend::new(&inst.spec, &inst.x0, TABLE_CAP)?;
    solve_with(&inst.spec, mode, &mut backend)
}

/// Tabular solve against exact DP, both modes, on `instances` random
/// dyadic instances with `N <= 3`, `p <= 4`.
pub fn oracle_equivalence(instances: usize, seed: u64) -> Check {
    let mut worst = 0.0f64;
    let mut points = 0usize;
    for k in 0..instances {
        let (n, p) = instance_shape(k);
        let mut run = || -> Result<Option<String>> {
            let inst = random_finite_instance(seed.wrapping_add(k as u64), n, p)?;
            for (mode, variant) in [(Mode::Exhaustive, Variant::Original), (Mode::Partial, Variant::Alternative)] {
                let stack = tabular_stack(&inst, mode)?;
                let exact = exact_dp(&inst, variant)?;
                for step in 0..=p {
                    for (x, i, v) in exact.entries(step) {
                        let got = stack.value(step, &x, i);
                        let err = (got - v).abs();
                        points += 1;
                        if !(err <= 1e-10) {
                            return Ok(Some(format!(
                                "instance {k} (N={n}, p={p}) {}: V({step}, {x:?}, {i}) = {got} vs exact {v}",
                                mode.name()
                            )));
                        }
                        worst = worst.max(err);
                    }
                }
            }
            Ok(None)
        };
        match run() {
            Ok(None) => {}
            Ok(Some(msg)) => return check("oracle equivalence", false, msg),
            Err(e) => return check("oracle equivalence", false, format!("instance {k}: {e}")),
        }
    }
    check(
        "oracle equivalence",
        true,
        format!("{instances} instances, {points} points, max abs error {worst:.2e}"),
    )
}

/// Exact alternative <= exact original everywhere, and partial <=
/// exhaustive maximization on shared tabulated continuation values.
pub fn dominance(instances: usize, queries: usize, seed: u64) -> Check {
    let mut exact_points = 0usize;
    let mut asked = 0usize;
    let per_instance = queries.div_ceil(instances.max(1));
    for k in 0..instances {
        let (n, p) = instance_shape(k);
        let mut run = || -> Result<Option<String>> {
            let inst = random_finite_instance(seed.wrapping_add(k as u64), n, p)?;
            let orig = exact_dp(&inst, Variant::Original)?;
            let alt = exact_dp(&inst, Variant::Alternative)?;
            for step in 0..=p {
                for (x, i, v) in alt.entries(step) {
                    exact_points += 1;
                    let w = orig.value(step, &x, i).expect("alternative tree lies inside the original");
                    if v > w {
                        return Ok(Some(format!("exact V({step}, {x:?}, {i}): alternative {v} > original {w}")));
                    }
                }
            }
            let stack = tabular_stack(&inst, Mode::Exhaustive)?;
            let backend = TabularBackend::new(&inst.spec, &inst.x0, TABLE_CAP)?;
            let mut rng = stream(seed, Purpose::Audit, 2, k as u64);
            for _ in 0..per_instance {
                let step = rng.random_range(0..p);
                let states = backend.states_at(step);
                let x = &states[rng.random_range(0..states.len())];
                let i = SurvivalVector::from_bits(rng.random_range(0..1u32 << n), n)?;
                let e = stack.value_exhaustive(step, x, i);
                let q = stack.value_partial(step, x, i);
                asked += 1;
                if q.value > e.value {
                    return Ok(Some(format!(
                        "partial {} > exhaustive {} at ({step}, {x:?}, {i})",
                        q.value, e.value
                    )));
                }
            }
            Ok(None)
        };
        match run() {
            Ok(None) => {}
            Ok(Some(msg)) => return check("dominance", false, msg),
            Err(e) => return check("dominance", false, format!("instance {k}: {e}")),
        }
    }
    check(
        "dominance",
        true,
        format!("{exact_points} exact points, {asked} shared-continuation queries, no violation"),
    )
}

/// Gradients below this size are compared absolutely.
pub const GRAD_FLOOR: f64 = 1e-4;

/// Analytic loss gradient against central differences with step `1e-6`.
pub fn gradient_check(triples: usize, seed: u64) -> Check {
    let h = 1e-6;
    let mut worst = 0.0f64;
    for t in 0..triples {
        let mut rng = stream(seed, Purpose::Audit, 1, t as u64);
        let dim = rng.random_range(1..=6);
        let width = rng.random_range(1..=8);
        let act = if rng.random_bool(0.5) { Activation::Tanh } else { Activation::Sigmoid };
        let mut net = ShallowNet::random(dim, width, act, seed ^ (t as u64) << 8);
        net.set_alpha0(rng.random_range(-1.0..1.0));
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: f64 = rng.random_range(-2.0..2.0);
        let (_, analytic) = net.grad(&x, y).expect("dimensions match");
        let loss = |n: &ShallowNet| {
            let r = n.forward(&x).expect("dimensions match") - y;
            0.5 * r * r
        };
        for j in 0..analytic.len() {
            let base = net.params()[j];
            net.params_mut()[j] = base + h;
            let up = loss(&net);
            net.params_mut()[j] = base - h;
            let down = loss(&net);
            net.params_mut()[j] = base;
            let fd = (up - down) / (2.0 * h);
            let a = analytic[j];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(GRAD_FLOOR);
            if !(rel <= 1e-5) {
                return check(
                    "gradient check",
                    false,
                    format!(
                        "triple {t} ({}, dim {dim}, width {width}) parameter {j}: analytic {a} vs difference {fd}",
                        act.name()
                    ),
                );
            }
            worst = worst.max(rel);
        }
    }
    check(
        "gradient check",
        true,
        format!("{triples} triples, max relative error {worst:.2e}"),
    )
}

/// Every schedule in `{0..=p}^N` for `N <= max_n`, `p <= max_p`: output is
/// serialized, delayed by at most `N` steps and never advanced, and its
/// restriction to steps `<= n` depends only on input stops at steps `<= n`.
pub fn serializer_enumeration(max_n: usize, max_p: usize) -> Check {
    let mut total = 0usize;
    for n in 1..=max_n {
        for p in 1..=max_p {
            let mut seen: HashMap<(usize, Vec<Option<usize>>), Vec<Option<usize>>> = HashMap::new();
            for tau in StopSchedule::enumerate(n, p) {
                total += 1;
                let out = serialize_stops(&tau);
                if !out.is_serialized() {
                    return check("serializer", false, format!("{:?} -> {:?} not serialized", tau.tau, out.tau));
                }
                for k in 0..n {
                    let (a, b) = (tau.tau[k], out.tau[k]);
                    if b < a || b - a > n {
                        return check(
                            "serializer",
                            false,
                            format!("{:?} -> {:?}: component {k} moved from {a} to {b}", tau.tau, out.tau),
                        );
                    }
                }
                for step in 0..=p {
                    let visible = |s: &[usize]| -> Vec<Option<usize>> {
                        s.iter().map(|&t| (t <= step).then_some(t)).collect()
                    };
                    let key = (step, visible(&tau.tau));
                    let val = visible(&out.tau);
                    if let Some(prev) = seen.insert(key, val.clone()) {
                        if prev != val {
                            return check(
                                "serializer",
                                false,
                                format!("{:?}: output up to step {step} depends on later stops", tau.tau),
                            );
                        }
                    }
                }
            }
        }
    }
    check(
        "serializer",
        true,
        format!("{total} schedules with N <= {max_n}, p <= {max_p}"),
    )
}

/// A small network solve is bit-identical across thread counts.
pub fn determinism() -> Check {
    let run = |threads: usize| -> Result<Vec<u8>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| crate::Error::Config(e.to_string()))?;
        pool.install(|| {
            let market = GbmMarket::uniform(2, 0.05, 0.2, 1.0, 3, 1.0);
            let spec = make_put_problem(&[1.0, 1.0], &market)?;
            let data = draw_training_set(&spec, 300, &StateLaw::Band { lo: 0.6, hi: 1.4, spread: 0.2 }, 11)?;
            let cfg = NetConfig {
                width: Some(6),
                train: TrainConfig {
                    epochs: 4,
                    batch_size: 70,
                    ..TrainConfig::default()
                },
                ..NetConfig::default()
            };
            let stack = solve(&spec, &data, Mode::Exhaustive, &cfg)?;
            let mut bytes = Vec::new();
            stack.write_to(&mut bytes)?;
            Ok(bytes)
        })
    };
    match (run(1), run(3)) {
        (Ok(a), Ok(b)) if a == b => check("determinism", true, format!("{} stack bytes identical on 1 and 3 threads", a.len())),
        (Ok(_), Ok(_)) => check("determinism", false, "stacks differ between 1 and 3 threads".into()),
        (Err(e), _) | (_, Err(e)) => check("determinism", false, e.to_string()),
    }
}

/// Normalization fitted on constant data keeps unit scales.
fn normalization_guard() -> Check {
    let norm = Normalization::fit(&[1.0, 1.0, 1.0, 1.0], &[2.0, 2.0], 2);
    let ok = norm.in_scale.iter().all(|s| *s > 0.0) && norm.out_scale > 0.0;
    check("normalization", ok, format!("scales {:?} / {}", norm.in_scale, norm.out_scale))
}

/// Every check, in a fixed order.
pub fn run_all() -> Vec<Check> {
    vec![
        oracle_equivalence(20, 1),
        dominance(20, 10_000, 1),
        gradient_check(1000, 1),
        serializer_enumeration(3, 5),
        determinism(),
        normalization_guard(),
    ]
}
