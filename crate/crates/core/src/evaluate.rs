//! Out-of-sample policy rollouts, error metrics and rate fits.

use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::mask::SurvivalVector;
use crate::problem::ProblemSpec;
use crate::rng::{stream, Purpose};
use crate::simgen::{StateLaw, StoppingRule};
use crate::solver::{Mode, ValueStack};

/// Largest `N` for which errors are maximized over all `2^N` masks.
pub const MASK_GUARD: usize = 16;

/// Floor on the reference value in relative errors.
pub const RELATIVE_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    /// Mean realized reward.
    pub estimate: f64,
    /// Sample standard deviation over `sqrt(paths)`.
    pub std_error: f64,
    pub paths: usize,
    /// `stops[n]` counts component stops decided at step `n`; `stops[p]`
    /// counts components still running at the horizon.
    pub stops: Vec<u64>,
    pub seed: u64,
}

impl EvalReport {
    /// Whether the estimate is at most `reference + k * std_error`.
    pub fn within_upper(&self, reference: f64, k: f64) -> bool {
        self.estimate <= reference + k * self.std_error
    }
}

/// Runs `policy` from `x0` on fresh shocks and averages the total reward.
pub fn rollout_policy(
    spec: &ProblemSpec,
    x0: &[f64],
    policy: &dyn StoppingRule,
    paths: usize,
    seed: u64,
) -> Result<EvalReport> {
    if paths == 0 {
        return Err(Error::Config("rollout needs at least one path".into()));
    }
    let (dim, p, d) = (spec.components(), spec.steps(), spec.noise_dim());
    check_dim("x0", dim, x0.len())?;
    let per_path: Vec<(f64, Vec<usize>)> = (0..paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = stream(seed, Purpose::Rollout, 0, path as u64);
            let mut x = x0.to_vec();
            let mut y = vec![0.0; dim];
            let mut eps = vec![0.0; d];
            let mut i = SurvivalVector::all_alive(dim);
            let mut total = 0.0;
            let mut stop_steps = Vec::with_capacity(dim);
            for n in 0..p {
                let next = policy.decide(n, &x, i);
                if !next.is_submask_of(i) {
                    return Err(Error::Contract(format!(
                        "policy returned {next} from {i} at step {n}"
                    )));
                }
                stop_steps.extend(i.stopped_between(next).map(|_| n));
                total += spec.running_reward(n, &x, i, next);
                spec.noise().sample(&mut rng, &mut eps);
                spec.advance(n, &x, &eps, next, &mut y)?;
                std::mem::swap(&mut x, &mut y);
                i = next;
            }
            stop_steps.extend((0..i.count_alive()).map(|_| p));
            total += spec.terminal_reward(&x, i);
            Ok((total, stop_steps))
        })
        .collect::<Result<_>>()?;

    let mut stops = vec![0u64; p + 1];
    let mut sum = 0.0;
    for (v, s) in &per_path {
        sum += v;
        for &n in s {
            stops[n] += 1;
        }
    }
    let mean = sum / paths as f64;
    let var = if paths > 1 {
        per_path.iter().map(|(v, _)| (v - mean).powi(2)).sum::<f64>() / (paths - 1) as f64
    } else {
        0.0
    };
    if !mean.is_finite() {
        return Err(Error::Numeric(format!("rollout mean is {mean}")));
    }
    Ok(EvalReport {
        estimate: mean,
        std_error: (var / paths as f64).sqrt(),
        paths,
        stops,
        seed,
    })
}

/// `count` states drawn from `law`, flattened row-major.
pub fn sample_states(law: &StateLaw, dim: usize, count: usize, seed: u64) -> Result<Vec<f64>> {
    law.validate(dim)?;
    let mut out = vec![0.0; count * dim];
    out.par_chunks_mut(dim.max(1)).enumerate().for_each(|(m, row)| {
        let mut rng = stream(seed, Purpose::ErrorSample, 0, m as u64);
        law.sample(&mut rng, row);
    });
    Ok(out)
}

/// `sqrt(mean_x max_i |f(x, i) - g(x, i)|^2)` over the rows of `states`.
pub fn sup_norm_error(
    f: &(dyn Fn(&[f64], SurvivalVector) -> f64 + Sync),
    reference: &(dyn Fn(&[f64], SurvivalVector) -> f64 + Sync),
    states: &[f64],
    dim: usize,
) -> Result<f64> {
    if dim == 0 || dim > MASK_GUARD {
        return Err(Error::Guard(format!(
            "mask maximum over 2^{dim} masks refused (limit N = {MASK_GUARD})"
        )));
    }
    if states.is_empty() || states.len() % dim != 0 {
        return Err(Error::Dimension {
            what: "state sample",
            expected: dim,
            got: states.len(),
        });
    }
    let worst: Vec<f64> = states
        .par_chunks(dim)
        .map(|x| {
            SurvivalVector::all_masks(dim)
                .map(|i| (f(x, i) - reference(x, i)).powi(2))
                .fold(0.0, f64::max)
        })
        .collect();
    Ok((worst.iter().sum::<f64>() / worst.len() as f64).sqrt())
}

/// Evenly spaced grid of `count` points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// `(x, V_0(x, ..., x; 1))` for each grid point.
pub fn diagonal_value_curve(stack: &ValueStack, grid: &[f64], mode: Mode) -> Vec<(f64, f64)> {
    let dim = stack.problem().components();
    let alive = SurvivalVector::all_alive(dim);
    grid.par_iter()
        .map(|&x| (x, stack.value_with_mode(mode, 0, &vec![x; dim], alive)))
        .collect()
}

/// `(x, V_0(x, y, ..., y; 1))`: first coordinate varies, the rest fixed at `y`.
pub fn plane_value_curve(stack: &ValueStack, grid: &[f64], y: f64, mode: Mode) -> Vec<(f64, f64)> {
    let dim = stack.problem().components();
    let alive = SurvivalVector::all_alive(dim);
    grid.par_iter()
        .map(|&x| {
            let mut state = vec![y; dim];
            state[0] = x;
            (x, stack.value_with_mode(mode, 0, &state, alive))
        })
        .collect()
}

/// Root mean square of `a - b`.
pub fn l2_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Root mean square of `(a - r) / max(|r|, 1e-8)`.
pub fn relative_l2_error(a: &[f64], reference: &[f64]) -> f64 {
    assert_eq!(a.len(), reference.len());
    let sum: f64 = a
        .iter()
        .zip(reference)
        .map(|(x, r)| ((x - r) / r.abs().max(RELATIVE_FLOOR)).powi(2))
        .sum();
    (sum / a.len() as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateFit {
    /// `(p, error)` as given.
    pub points: Vec<(usize, f64)>,
    pub horizon: f64,
    /// Empirical order in `h = T/p`.
    pub slope: f64,
    pub intercept: f64,
    /// Root mean square residual in log space.
    pub residual: f64,
}

/// Least squares line through `(log h, log error)`.
pub fn fit_rate(points: &[(usize, f64)], horizon: f64) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::Config(format!(
            "rate fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    let mut ps: Vec<usize> = points.iter().map(|&(p, _)| p).collect();
    ps.sort_unstable();
    if ps.windows(2).any(|w| w[0] == w[1]) || ps[0] == 0 {
        return Err(Error::Config("rate fit needs distinct positive step counts".into()));
    }
    if let Some(&(p, e)) = points.iter().find(|&&(_, e)| !(e > 0.0 && e.is_finite())) {
        return Err(Error::Numeric(format!("error {e} at p = {p} has no logarithm")));
    }
    let xs: Vec<f64> = points.iter().map(|&(p, _)| (horizon / p as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, e)| e.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(RateFit {
        points: points.to_vec(),
        horizon,
        slope,
        intercept,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{make_log_utility_problem, GbmMarket};

    #[test]
    fn stopping_at_once_gives_closed_form() {
        let spec = make_log_utility_problem(&GbmMarket::uniform(5, -0.1, 0.3, 1.0, 4, 1.0)).unwrap();
        let x0 = [1.0, 0.5, 2.0, 0.0, 1.5];
        let stop_all = |_: usize, _: &[f64], i: SurvivalVector| SurvivalVector::all_stopped(i.len());
        let r = rollout_policy(&spec, &x0, &stop_all, 200, 3).unwrap();
        assert!((r.estimate - 2f64.ln()).abs() < 1e-14);
        assert!(r.std_error < 1e-14);
        assert_eq!(r.stops[0], 1000);
    }

    #[test]
    fn reviving_policy_is_rejected() {
        let spec = make_log_utility_problem(&GbmMarket::uniform(2, 0.0, 0.3, 1.0, 2, 1.0)).unwrap();
        let revive = |_: usize, _: &[f64], i: SurvivalVector| SurvivalVector::all_alive(i.len());
        let stop_then_revive = |n: usize, x: &[f64], i: SurvivalVector| {
            if n == 0 {
                SurvivalVector::all_stopped(i.len())
            } else {
                revive(n, x, i)
            }
        };
        assert!(matches!(
            rollout_policy(&spec, &[1.0, 1.0], &stop_then_revive, 4, 0),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn sup_norm_examples() {
        let states = sample_states(&StateLaw::UniformBox { lo: 0.0, hi: 2.0 }, 3, 50, 1).unwrap();
        let zero = |_: &[f64], _: SurvivalVector| 0.0;
        let one = |_: &[f64], _: SurvivalVector| 1.0;
        let count = |_: &[f64], i: SurvivalVector| i.count_alive() as f64;
        assert_eq!(sup_norm_error(&one, &one, &states, 3).unwrap(), 0.0);
        assert_eq!(sup_norm_error(&one, &zero, &states, 3).unwrap(), 1.0);
        assert_eq!(sup_norm_error(&count, &zero, &states, 3).unwrap(), 3.0);
        assert!(sup_norm_error(&one, &zero, &vec![0.0; 17], 17).is_err());
    }

    #[test]
    fn rate_fit_recovers_power_laws() {
        let ps = [5usize, 10, 20, 40];
        for (order, want) in [(1.0, 1.0), (0.5, 0.5), (0.0, 0.0)] {
            let pts: Vec<_> = ps.iter().map(|&p| (p, (2.0 / p as f64).powf(order))).collect();
            let fit = fit_rate(&pts, 2.0).unwrap();
            assert!((fit.slope - want).abs() < 1e-12, "{} vs {want}", fit.slope);
        }
        assert!(fit_rate(&[(5, 1.0), (10, 0.0), (20, 1.0)], 1.0).is_err());
        assert!(fit_rate(&[(5, 1.0), (10, 1.0)], 1.0).is_err());
        assert!(fit_rate(&[(5, 1.0), (5, 1.0), (20, 1.0)], 1.0).is_err());
    }

    #[test]
    fn relative_error_uses_floor() {
        assert_eq!(relative_l2_error(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert!((relative_l2_error(&[1.1], &[1.0]) - 0.1).abs() < 1e-12);
        assert!((relative_l2_error(&[1e-9], &[0.0]) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn terminal_stack_curve_is_terminal_reward() {
        let spec = make_log_utility_problem(&GbmMarket::uniform(3, 0.0, 0.3, 1.0, 2, 1.0)).unwrap();
        let stack = ValueStack::terminal(spec, Mode::Partial);
        for (x, v) in diagonal_value_curve(&stack, &linspace(0.0, 2.0, 5), Mode::Partial) {
            assert_eq!(v, x.ln_1p());
        }
    }
}
