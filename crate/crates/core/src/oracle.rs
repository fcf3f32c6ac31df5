//! Reference values: exact DP on finite instances, the binomial put tree, the
//! log-utility closed form and the stop-time serializer.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::mask::{submasks, SurvivalVector};
use crate::problem::{NoiseLaw, ProblemSpec};
use crate::rng::{stream, Purpose};

/// Size limits for exact DP.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Guards {
    pub max_components: usize,
    pub max_steps: usize,
    pub max_support: usize,
    pub max_states: usize,
}

impl Default for Guards {
    fn default() -> Self {
        Self {
            max_components: 3,
            max_steps: 5,
            max_support: 3,
            max_states: 2_000_000,
        }
    }
}

/// A problem with finitely supported noise and a known start.
#[derive(Clone, Debug)]
pub struct FiniteInstance {
    pub spec: ProblemSpec,
    pub x0: Vec<f64>,
    pub guards: Guards,
}

impl FiniteInstance {
    pub fn new(spec: ProblemSpec, x0: Vec<f64>) -> Result<Self> {
        Self::with_guards(spec, x0, Guards::default())
    }

    pub fn with_guards(spec: ProblemSpec, x0: Vec<f64>, guards: Guards) -> Result<Self> {
        check_dim("x0", spec.components(), x0.len())?;
        let support = match spec.noise() {
            NoiseLaw::Discrete { points, .. } => points.len(),
            NoiseLaw::Gaussian { .. } => {
                return Err(Error::Config("finite instance needs a discrete noise law".into()))
            }
        };
        spec.noise().validate()?;
        if spec.components() > guards.max_components
            || spec.steps() > guards.max_steps
            || support > guards.max_support
        {
            return Err(Error::Guard(format!(
                "instance N = {}, p = {}, support {} exceeds guard ({}, {}, {})",
                spec.components(),
                spec.steps(),
                support,
                guards.max_components,
                guards.max_steps,
                guards.max_support
            )));
        }
        Ok(Self { spec, x0, guards })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// Any set of running components may stop together.
    Original,
    /// At most one component stops per step.
    Alternative,
}

type Key = (Vec<u64>, u32);

fn key(x: &[f64], i: SurvivalVector) -> Key {
    (x.iter().map(|v| v.to_bits()).collect(), i.bits())
}

/// Exact values `V(n, x, i)` on the tree of `(x, i)` reachable from `(x0, 1)`.
#[derive(Clone, Debug)]
pub struct ExactTable {
    pub variant: Variant,
    components: usize,
    layers: Vec<HashMap<Key, f64>>,
}

impl ExactTable {
    pub fn value(&self, n: usize, x: &[f64], i: SurvivalVector) -> Option<f64> {
        self.layers.get(n)?.get(&key(x, i)).copied()
    }

    pub fn steps(&self) -> usize {
        self.layers.len() - 1
    }

    /// Number of tabulated `(n, x, i)`.
    pub fn len(&self) -> usize {
        self.layers.iter().map(HashMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every tabulated `(x, i, V)` at step `n`, in a fixed order.
    pub fn entries(&self, n: usize) -> Vec<(Vec<f64>, SurvivalVector, f64)> {
        let mut out: Vec<_> = self.layers[n]
            .iter()
            .map(|((xb, bits), v)| {
                let x: Vec<f64> = xb.iter().map(|b| f64::from_bits(*b)).collect();
                let i = SurvivalVector::from_bits(*bits, self.components).expect("stored mask");
                (x, i, *v)
            })
            .collect();
        out.sort_by(|a, b| {
            key(&a.0, a.1).cmp(&key(&b.0, b.1))
        });
        out
    }
}

fn decisions(variant: Variant, i: SurvivalVector) -> Vec<SurvivalVector> {
    match variant {
        Variant::Original => submasks(i).collect(),
        Variant::Alternative => {
            let mut out = vec![i];
            out.extend((0..i.len()).filter(|&k| i.is_alive(k)).map(|k| i.stop(k)));
            out
        }
    }
}

/// Backward recursion with expectations as finite sums.
pub fn exact_dp(inst: &FiniteInstance, variant: Variant) -> Result<ExactTable> {
    let spec = &inst.spec;
    let (points, probs) = match spec.noise() {
        NoiseLaw::Discrete { points, probs } => (points, probs),
        NoiseLaw::Gaussian { .. } => unreachable!("checked by FiniteInstance"),
    };
    let dim = spec.components();
    let p = spec.steps();

    // forward: reachable (x, i) per step
    let mut layers: Vec<Vec<(Vec<f64>, SurvivalVector)>> = vec![vec![(inst.x0.clone(), SurvivalVector::all_alive(dim))]];
    let mut total = 1;
    for n in 0..p {
        let mut seen: HashMap<Key, ()> = HashMap::new();
        let mut next = Vec::new();
        for (x, i) in &layers[n] {
            for d in decisions(variant, *i) {
                for eps in points {
                    let mut y = vec![0.0; dim];
                    spec.advance(n, x, eps, d, &mut y)?;
                    if seen.insert(key(&y, d), ()).is_none() {
                        next.push((y, d));
                    }
                }
            }
        }
        total += next.len();
        if total > inst.guards.max_states {
            return Err(Error::Guard(format!(
                "exact DP reaches more than {} states (step {})",
                inst.guards.max_states,
                n + 1
            )));
        }
        layers.push(next);
    }

    // backward
    let mut values: Vec<HashMap<Key, f64>> = vec![HashMap::new(); p + 1];
    for (x, i) in &layers[p] {
        values[p].insert(key(x, *i), spec.terminal_reward(x, *i));
    }
    let mut y = vec![0.0; dim];
    for n in (0..p).rev() {
        let mut layer = HashMap::with_capacity(layers[n].len());
        for (x, i) in &layers[n] {
            let mut best = f64::NEG_INFINITY;
            for d in decisions(variant, *i) {
                let mut expect = 0.0;
                for (eps, q) in points.iter().zip(probs) {
                    spec.advance(n, x, eps, d, &mut y)?;
                    expect += q * values[n + 1][&key(&y, d)];
                }
                best = best.max(spec.running_reward(n, x, *i, d) + expect);
            }
            layer.insert(key(x, *i), best);
        }
        values[n] = layer;
    }
    Ok(ExactTable {
        variant,
        components: dim,
        layers: values,
    })
}

/// Undiscounted American put on a recombining tree with up/down factors
/// `exp(+-sigma sqrt(dt))` and the up-probability matched to drift `mu`.
pub fn binomial_put(s0: f64, strike: f64, mu: f64, sigma: f64, horizon: f64, steps: usize) -> Result<f64> {
    if steps == 0 || sigma <= 0.0 || horizon <= 0.0 || s0 <= 0.0 {
        return Err(Error::Config(format!(
            "binomial tree needs steps >= 1, sigma > 0, T > 0, S0 > 0 (got {steps}, {sigma}, {horizon}, {s0})"
        )));
    }
    let dt = horizon / steps as f64;
    let u = (sigma * dt.sqrt()).exp();
    let d = 1.0 / u;
    let q = ((mu * dt).exp() - d) / (u - d);
    if !(q > 0.0 && q < 1.0) {
        // q in (0,1) iff |mu| dt < sigma sqrt(dt)
        let need = (sigma / mu.abs()).powi(2);
        return Err(Error::Numeric(format!(
            "drift-matched probability {q} outside (0, 1); need dt < {need:.3e}"
        )));
    }
    let mut v: Vec<f64> = (0..=steps)
        .map(|j| (strike - s0 * u.powi(j as i32) * d.powi((steps - j) as i32)).max(0.0))
        .collect();
    for n in (0..steps).rev() {
        for j in 0..=n {
            let s = s0 * u.powi(j as i32) * d.powi((n - j) as i32);
            let cont = q * v[j + 1] + (1.0 - q) * v[j];
            v[j] = cont.max(strike - s);
        }
    }
    Ok(v[0])
}

/// `ln(1 + mean(x))`.
pub fn log_utility_value(x: &[f64]) -> f64 {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    mean.ln_1p()
}

/// A tuple of stop steps in `0..=p`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct StopSchedule {
    pub tau: Vec<usize>,
    pub steps: usize,
}

impl StopSchedule {
    pub fn new(tau: Vec<usize>, steps: usize) -> Result<Self> {
        if let Some(t) = tau.iter().find(|&&t| t > steps) {
            return Err(Error::Config(format!("stop step {t} beyond horizon {steps}")));
        }
        Ok(Self { tau, steps })
    }

    /// No two components stop at the same step before the horizon.
    pub fn is_serialized(&self) -> bool {
        let mut used = vec![false; self.steps];
        for &t in &self.tau {
            if t < self.steps {
                if used[t] {
                    return false;
                }
                used[t] = true;
            }
        }
        true
    }

    /// All schedules in `{0..=p}^N`, in lexicographic order.
    pub fn enumerate(components: usize, steps: usize) -> impl Iterator<Item = StopSchedule> {
        let base = steps + 1;
        let total = base.pow(components as u32);
        (0..total).map(move |mut code| {
            let mut tau = vec![0; components];
            for t in tau.iter_mut().rev() {
                *t = code % base;
                code /= base;
            }
            StopSchedule { tau, steps }
        })
    }
}

/// Delays coinciding stops so that at most one component stops per step.
///
/// Components waiting to stop form a queue; at each step before the horizon
/// the lowest waiting index is served. Unserved components stop at `p`.
pub fn serialize_stops(schedule: &StopSchedule) -> StopSchedule {
    let p = schedule.steps;
    let n = schedule.tau.len();
    let mut out = vec![p; n];
    let mut waiting = vec![false; n];
    for t in 0..p {
        for (k, &tk) in schedule.tau.iter().enumerate() {
            if tk == t {
                waiting[k] = true;
            }
        }
        if let Some(k) = waiting.iter().position(|&w| w) {
            waiting[k] = false;
            out[k] = t;
        }
    }
    StopSchedule { tau: out, steps: p }
}

/// A random dyadic instance: shocks, drifts and coupling are multiples of
/// 1/4, so states stay exactly representable and hash bit-exactly.
pub fn random_finite_instance(seed: u64, components: usize, steps: usize) -> Result<FiniteInstance> {
    let mut rng = stream(seed, Purpose::Instance, components as u64, steps as u64);
    let dyadic = |rng: &mut rand_chacha::ChaCha8Rng| (rng.random_range(-4i32..=4) as f64) * 0.25;
    let probs = match rng.random_range(0..3) {
        0 => vec![0.5, 0.5],
        1 => vec![0.25, 0.5, 0.25],
        _ => vec![0.25, 0.25, 0.5],
    };
    let points: Vec<Vec<f64>> = probs
        .iter()
        .map(|_| (0..components).map(|_| dyadic(&mut rng)).collect())
        .collect();
    let drift: Vec<Vec<f64>> = (0..steps)
        .map(|_| (0..components).map(|_| dyadic(&mut rng) * 0.5).collect())
        .collect();
    let coupling: f64 = if rng.random_bool(0.5) { 0.25 } else { 0.0 };
    let strikes: Vec<f64> = (0..components).map(|_| rng.random_range(-1.0..1.0)).collect();
    let weights: Vec<f64> = (0..components).map(|_| rng.random_range(0.5..1.5)).collect();
    let cross: f64 = rng.random_range(-0.5..0.5);

    let (s1, w1) = (strikes.clone(), weights.clone());
    let (s2, w2) = (strikes, weights);
    let spec = ProblemSpec::builder(
        "random_finite",
        components,
        steps,
        NoiseLaw::Discrete { points, probs },
    )
    .transition(move |n, x, eps, out| {
        let dim = x.len();
        for k in 0..dim {
            let nb = x[(k + 1) % dim];
            out[k] = eps[k] + drift[n][k] + coupling * nb.signum();
        }
    })
    .running_reward(move |_, x, i, next| {
        i.stopped_between(next)
            .map(|k| w1[k] * (s1[k] - x[k]).max(0.0))
            .sum()
    })
    .terminal_reward(move |x, i| {
        let alive: f64 = (0..x.len())
            .filter(|&k| i.is_alive(k))
            .map(|k| w2[k] * (s2[k] - x[k]).max(0.0))
            .sum();
        alive + cross * (x.iter().sum::<f64>()).sin() * i.count_alive() as f64
    })
    .build()?;
    let x0 = vec![0.0; components];
    FiniteInstance::new(spec, x0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coin() -> FiniteInstance {
        let spec = ProblemSpec::builder(
            "coin",
            1,
            1,
            NoiseLaw::Discrete {
                points: vec![vec![-1.0], vec![1.0]],
                probs: vec![0.5, 0.5],
            },
        )
        .transition(|_, _, eps, out| out[0] = eps[0])
        .terminal_reward(|x, _| -x[0].abs())
        .build()
        .unwrap();
        FiniteInstance::new(spec, vec![0.0]).unwrap()
    }

    #[test]
    fn coin_value_is_zero() {
        for v in [Variant::Original, Variant::Alternative] {
            let t = exact_dp(&coin(), v).unwrap();
            assert_eq!(t.value(0, &[0.0], SurvivalVector::all_alive(1)), Some(0.0));
        }
    }

    #[test]
    fn tree_matches_zero_rate_black_scholes() {
        let v = binomial_put(100.0, 100.0, 0.0, 0.2, 1.0, 2000).unwrap();
        assert!((v - 7.965567).abs() < 0.01, "{v}");
    }

    #[test]
    fn tree_edge_cases() {
        assert_eq!(binomial_put(100.0, 1.0, 0.0, 0.2, 1.0, 50).unwrap(), 0.0);
        assert!(binomial_put(80.0, 100.0, -0.1, 0.2, 1.0, 50).unwrap() >= 20.0);
        assert!(binomial_put(100.0, 100.0, 5.0, 0.1, 1.0, 1).is_err());
        assert!(binomial_put(100.0, 100.0, 0.0, 0.0, 1.0, 10).is_err());
    }

    #[test]
    fn log_utility_values() {
        assert!((log_utility_value(&[1.0; 4]) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(log_utility_value(&[0.0; 3]), 0.0);
        assert!((log_utility_value(&[1.0, 3.0]) - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn serializer_examples() {
        let s = |tau: Vec<usize>, p| serialize_stops(&StopSchedule::new(tau, p).unwrap()).tau;
        assert_eq!(s(vec![0, 0], 3), vec![0, 1]);
        assert_eq!(s(vec![2, 0, 1], 4), vec![2, 0, 1]);
        assert_eq!(s(vec![3, 3, 3], 3), vec![3, 3, 3]);
        assert_eq!(s(vec![1, 1, 1], 2), vec![1, 2, 2]);
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(StopSchedule::enumerate(3, 5).count(), 216);
        assert_eq!(StopSchedule::enumerate(0, 5).count(), 1);
    }

    #[test]
    fn guards_refuse_large_instances() {
        let spec = ProblemSpec::builder(
            "big",
            4,
            2,
            NoiseLaw::Discrete {
                points: vec![vec![0.0; 4]],
                probs: vec![1.0],
            },
        )
        .build()
        .unwrap();
        assert!(matches!(FiniteInstance::new(spec, vec![0.0; 4]), Err(Error::Guard(_))));
    }
}
