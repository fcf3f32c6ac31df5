//! Discrete-time multiple stopping instances.
//!
//! State evolves as `X_{n+1} = X_n + F_n(X_n, eps_{n+1}) * I_{n+1}` (Hadamard
//! product with the survival vector), so a stopped component is frozen. The
//! payoff of a strategy is the sum of running rewards `c_n(X_n, I_n, I_{n+1})`
//! plus the terminal reward `g(X_p, I_p)`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::mask::SurvivalVector;
use crate::rng::{self, Purpose};
use crate::simgen;

/// `F_n(x, eps)`, written into the output slice.
pub type TransitionFn = dyn Fn(usize, &[f64], &[f64], &mut [f64]) + Send + Sync;
/// `c_n(x, i, i')`.
pub type RunningRewardFn = dyn Fn(usize, &[f64], SurvivalVector, SurvivalVector) -> f64 + Send + Sync;
/// `g(x, i)`; most problems ignore the mask.
pub type TerminalRewardFn = dyn Fn(&[f64], SurvivalVector) -> f64 + Send + Sync;
/// Vector-valued diffusion coefficient `(t, x) -> out`.
pub type CoefFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;
/// Scalar diffusion coefficient `(t, x)`.
pub type ScalarCoefFn = dyn Fn(f64, &[f64]) -> f64 + Send + Sync;

/// Law of the shocks `eps_{n+1}`.
#[derive(Clone, Debug, PartialEq)]
pub enum NoiseLaw {
    /// i.i.d. centered normal coordinates.
    Gaussian { dim: usize, std_dev: f64 },
    /// Finite support: joint points with their probabilities.
    Discrete {
        points: Vec<Vec<f64>>,
        probs: Vec<f64>,
    },
}

impl NoiseLaw {
    pub fn dim(&self) -> usize {
        match self {
            NoiseLaw::Gaussian { dim, .. } => *dim,
            NoiseLaw::Discrete { points, .. } => points.first().map_or(0, Vec::len),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseLaw::Gaussian { std_dev, .. } => {
                if !(std_dev.is_finite() && *std_dev >= 0.0) {
                    return Err(Error::Config(format!("noise std_dev {std_dev} invalid")));
                }
            }
            NoiseLaw::Discrete { points, probs } => {
                if points.is_empty() || points.len() != probs.len() {
                    return Err(Error::Config(
                        "discrete noise needs one probability per support point".into(),
                    ));
                }
                let d = points[0].len();
                if points.iter().any(|p| p.len() != d) {
                    return Err(Error::Config("discrete noise points differ in dimension".into()));
                }
                if probs.iter().any(|&q| !(0.0..=1.0).contains(&q)) {
                    return Err(Error::Config("discrete noise probability outside [0,1]".into()));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::Config(format!(
                        "discrete noise probabilities sum to {total}, not 1"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            NoiseLaw::Gaussian { std_dev, .. } => {
                for o in out.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *o = std_dev * z;
                }
            }
            NoiseLaw::Discrete { points, probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = points.len() - 1;
                for (j, q) in probs.iter().enumerate() {
                    acc += q;
                    if u < acc {
                        pick = j;
                        break;
                    }
                }
                out.copy_from_slice(&points[pick]);
            }
        }
    }
}

/// One multiple-stopping instance. Cheap to clone; callables are shared.
#[derive(Clone)]
pub struct ProblemSpec {
    name: String,
    components: usize,
    steps: usize,
    horizon: f64,
    noise: NoiseLaw,
    transition: Arc<TransitionFn>,
    running: Arc<RunningRewardFn>,
    terminal: Arc<TerminalRewardFn>,
    initial_state: Option<Vec<f64>>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("components", &self.components)
            .field("steps", &self.steps)
            .field("horizon", &self.horizon)
            .field("noise", &self.noise)
            .finish_non_exhaustive()
    }
}

pub struct ProblemBuilder {
    name: String,
    components: usize,
    steps: usize,
    horizon: f64,
    noise: NoiseLaw,
    transition: Option<Arc<TransitionFn>>,
    running: Option<Arc<RunningRewardFn>>,
    terminal: Option<Arc<TerminalRewardFn>>,
    initial_state: Option<Vec<f64>>,
}

impl ProblemBuilder {
    pub fn horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn transition(
        mut self,
        f: impl Fn(usize, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.transition = Some(Arc::new(f));
        self
    }

    pub fn running_reward(
        mut self,
        f: impl Fn(usize, &[f64], SurvivalVector, SurvivalVector) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.running = Some(Arc::new(f));
        self
    }

    pub fn terminal_reward(
        mut self,
        f: impl Fn(&[f64], SurvivalVector) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.terminal = Some(Arc::new(f));
        self
    }

    pub fn initial_state(mut self, x0: Vec<f64>) -> Self {
        self.initial_state = Some(x0);
        self
    }

    pub fn build(self) -> Result<ProblemSpec> {
        if self.components == 0 || self.components > SurvivalVector::MAX_COMPONENTS {
            return Err(Error::Config(format!(
                "component count {} outside 1..=32",
                self.components
            )));
        }
        if self.steps == 0 {
            return Err(Error::Config("number of time steps must be >= 1".into()));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::Config(format!("horizon {} must be > 0", self.horizon)));
        }
        self.noise.validate()?;
        if let Some(x0) = &self.initial_state {
            check_dim("initial state", self.components, x0.len())?;
        }
        Ok(ProblemSpec {
            name: self.name,
            components: self.components,
            steps: self.steps,
            horizon: self.horizon,
            noise: self.noise,
            transition: self
                .transition
                .unwrap_or_else(|| Arc::new(|_, _, _, out: &mut [f64]| out.fill(0.0))),
            running: self.running.unwrap_or_else(|| Arc::new(|_, _, _, _| 0.0)),
            terminal: self.terminal.unwrap_or_else(|| Arc::new(|_, _| 0.0)),
            initial_state: self.initial_state,
        })
    }
}

impl ProblemSpec {
    /// Starts a builder; the horizon defaults to `steps` (unit time step).
    pub fn builder(name: &str, components: usize, steps: usize, noise: NoiseLaw) -> ProblemBuilder {
        ProblemBuilder {
            name: name.to_string(),
            components,
            steps,
            horizon: steps as f64,
            noise,
            transition: None,
            running: None,
            terminal: None,
            initial_state: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// N.
    pub fn components(&self) -> usize {
        self.components
    }

    /// p.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// h = T / p.
    pub fn step_size(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn noise(&self) -> &NoiseLaw {
        &self.noise
    }

    pub fn noise_dim(&self) -> usize {
        self.noise.dim()
    }

    pub fn initial_state(&self) -> Option<&[f64]> {
        self.initial_state.as_deref()
    }

    /// Same problem on a different time grid is not derivable here; this only
    /// swaps the reference state.
    pub fn with_initial_state(mut self, x0: Vec<f64>) -> Result<Self> {
        check_dim("initial state", self.components, x0.len())?;
        self.initial_state = Some(x0);
        Ok(self)
    }

    #[inline]
    pub fn transition_into(&self, n: usize, x: &[f64], eps: &[f64], out: &mut [f64]) {
        (self.transition)(n, x, eps, out)
    }

    /// `out = x + F_n(x, eps) * mask`. Fails if the new state is not finite.
    #[inline]
    pub fn advance(
        &self,
        n: usize,
        x: &[f64],
        eps: &[f64],
        mask: SurvivalVector,
        out: &mut [f64],
    ) -> Result<()> {
        (self.transition)(n, x, eps, out);
        let mut finite = true;
        for k in 0..self.components {
            out[k] = if mask.is_alive(k) { x[k] + out[k] } else { x[k] };
            finite &= out[k].is_finite();
        }
        if finite {
            Ok(())
        } else {
            Err(Error::Numeric(format!(
                "non-finite state after step {n} from x = {x:?}"
            )))
        }
    }

    #[inline]
    pub fn running_reward(
        &self,
        n: usize,
        x: &[f64],
        i: SurvivalVector,
        next: SurvivalVector,
    ) -> f64 {
        debug_assert!(next.is_submask_of(i), "running reward queried with {next} !<= {i}");
        (self.running)(n, x, i, next)
    }

    #[inline]
    pub fn terminal_reward(&self, x: &[f64], i: SurvivalVector) -> f64 {
        (self.terminal)(x, i)
    }
}

/// Continuous-time stopped diffusion
/// `dX^k = I^k (b_k dt + sigma_k dW^k + sigma_0 dW^0)` on `[0, T]` with `p` steps.
#[derive(Clone)]
pub struct DiffusionSpec {
    pub components: usize,
    pub horizon: f64,
    pub steps: usize,
    pub drift: Arc<CoefFn>,
    pub vol: Arc<CoefFn>,
    pub common_vol: Arc<ScalarCoefFn>,
    pub x0: Vec<f64>,
}

impl fmt::Debug for DiffusionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionSpec")
            .field("components", &self.components)
            .field("horizon", &self.horizon)
            .field("steps", &self.steps)
            .field("x0", &self.x0)
            .finish_non_exhaustive()
    }
}

impl DiffusionSpec {
    pub fn new(
        horizon: f64,
        steps: usize,
        x0: Vec<f64>,
        drift: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
        vol: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
        common_vol: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if steps == 0 || !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Config(format!(
                "need T > 0 and p >= 1, got T = {horizon}, p = {steps}"
            )));
        }
        if x0.is_empty() {
            return Err(Error::Config("diffusion needs at least one component".into()));
        }
        Ok(Self {
            components: x0.len(),
            horizon,
            steps,
            drift: Arc::new(drift),
            vol: Arc::new(vol),
            common_vol: Arc::new(common_vol),
            x0,
        })
    }

    /// Independent geometric Brownian motions, `b_k = mu_k x_k`, `sigma_k = vol_k x_k`.
    pub fn gbm(drifts: &[f64], vols: &[f64], horizon: f64, steps: usize, x0: &[f64]) -> Result<Self> {
        check_dim("vols", drifts.len(), vols.len())?;
        check_dim("x0", drifts.len(), x0.len())?;
        let mu = drifts.to_vec();
        let sig = vols.to_vec();
        Self::new(
            horizon,
            steps,
            x0.to_vec(),
            move |_, x, out| {
                for k in 0..out.len() {
                    out[k] = mu[k] * x[k];
                }
            },
            move |_, x, out| {
                for k in 0..out.len() {
                    out[k] = sig[k] * x[k];
                }
            },
            |_, _| 0.0,
        )
    }

    pub fn step_size(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// `t_n = n h`.
    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.step_size()
    }

    /// Brownian increments `(eps^0, eps^1..eps^N)`, each of variance `h`.
    pub fn noise_law(&self) -> NoiseLaw {
        NoiseLaw::Gaussian {
            dim: self.components + 1,
            std_dev: self.step_size().sqrt(),
        }
    }

    /// Euler-scheme problem for this diffusion with the given rewards.
    pub fn into_problem(
        self,
        name: &str,
        running: impl Fn(usize, &[f64], SurvivalVector, SurvivalVector) -> f64 + Send + Sync + 'static,
        terminal: impl Fn(&[f64], SurvivalVector) -> f64 + Send + Sync + 'static,
    ) -> Result<ProblemSpec> {
        let noise = self.noise_law();
        let (n, p, t, x0) = (self.components, self.steps, self.horizon, self.x0.clone());
        ProblemSpec::builder(name, n, p, noise)
            .horizon(t)
            .initial_state(x0)
            .transition(move |step, x, eps, out| {
                if simgen::euler_transition_into(&self, step, x, eps, out).is_err() {
                    out.fill(f64::NAN);
                }
            })
            .running_reward(running)
            .terminal_reward(terminal)
            .build()
    }
}

/// How GBM components are advanced on the grid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Stepping {
    /// `F = x (mu h + sigma eps)`.
    #[default]
    Euler,
    /// `F = x (exp((mu - sigma^2/2) h + sigma eps) - 1)`.
    ExactGbm,
}

/// Market of independent GBM assets shared by the built-in problems.
#[derive(Clone, Debug, PartialEq)]
pub struct GbmMarket {
    pub drifts: Vec<f64>,
    pub vols: Vec<f64>,
    pub horizon: f64,
    pub steps: usize,
    pub x0: Vec<f64>,
    pub stepping: Stepping,
}

impl GbmMarket {
    pub fn uniform(n: usize, drift: f64, vol: f64, horizon: f64, steps: usize, x0: f64) -> Self {
        Self {
            drifts: vec![drift; n],
            vols: vec![vol; n],
            horizon,
            steps,
            x0: vec![x0; n],
            stepping: Stepping::Euler,
        }
    }

    pub fn components(&self) -> usize {
        self.drifts.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.drifts.len();
        if n == 0 {
            return Err(Error::Config("market needs at least one asset".into()));
        }
        check_dim("vols", n, self.vols.len())?;
        check_dim("x0", n, self.x0.len())?;
        if let Some(v) = self.vols.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Config(format!("volatility {v} must be > 0")));
        }
        if self.steps == 0 {
            return Err(Error::Config("steps must be >= 1".into()));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::Config(format!("horizon {} must be > 0", self.horizon)));
        }
        Ok(())
    }

    fn problem_builder(&self, name: &str) -> Result<ProblemBuilder> {
        self.validate()?;
        let n = self.components();
        let diffusion = DiffusionSpec::gbm(&self.drifts, &self.vols, self.horizon, self.steps, &self.x0)?;
        let noise = diffusion.noise_law();
        let builder = ProblemSpec::builder(name, n, self.steps, noise)
            .horizon(self.horizon)
            .initial_state(self.x0.clone());
        Ok(match self.stepping {
            Stepping::Euler => builder.transition(move |step, x, eps, out| {
                if simgen::euler_transition_into(&diffusion, step, x, eps, out).is_err() {
                    out.fill(f64::NAN);
                }
            }),
            Stepping::ExactGbm => {
                let h = self.horizon / self.steps as f64;
                let mu = self.drifts.clone();
                let sig = self.vols.clone();
                builder.transition(move |_, x, eps, out| {
                    for k in 0..out.len() {
                        let growth = (mu[k] - 0.5 * sig[k] * sig[k]) * h + sig[k] * eps[k + 1];
                        out[k] = x[k] * growth.exp_m1();
                    }
                })
            }
        })
    }
}

/// Basket of independent American puts, `sum_j (K_j - S^j_{tau_j})_+`.
///
/// Each put pays at the step its component is stopped; components still
/// alive at the horizon are exercised there.
pub fn make_put_problem(strikes: &[f64], market: &GbmMarket) -> Result<ProblemSpec> {
    check_dim("strikes", market.components(), strikes.len())?;
    let running_strikes = strikes.to_vec();
    let terminal_strikes = strikes.to_vec();
    Ok(market
        .problem_builder("multi_put")?
        .running_reward(move |_, x, i, next| {
            let stopped = i.bits() & !next.bits();
            let mut total = 0.0;
            for (k, strike) in running_strikes.iter().enumerate() {
                if stopped >> k & 1 == 1 {
                    total += (strike - x[k]).max(0.0);
                }
            }
            total
        })
        .terminal_reward(move |x, i| {
            terminal_strikes
                .iter()
                .enumerate()
                .filter(|(k, _)| i.is_alive(*k))
                .map(|(k, strike)| (strike - x[k]).max(0.0))
                .sum()
        })
        .build()?)
}

/// `E[log(1 + mean_j S^j_{tau_j})]` with non-positive drifts.
pub fn make_log_utility_problem(market: &GbmMarket) -> Result<ProblemSpec> {
    if let Some((j, mu)) = market.drifts.iter().enumerate().find(|(_, &mu)| mu > 0.0) {
        return Err(Error::Config(format!(
            "log-utility problem requires every drift <= 0 for its closed-form value; drift[{j}] = {mu}"
        )));
    }
    let n = market.components() as f64;
    Ok(market
        .problem_builder("log_utility")?
        .terminal_reward(move |x, _| (x.iter().sum::<f64>() / n).ln_1p())
        .build()?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditReport {
    pub samples: usize,
    pub max_abs: f64,
    pub passed: bool,
}

/// Checks `c_n(x, i, i) = 0` at random `(n, x, i)`.
pub fn audit_reward_zero_diag(spec: &ProblemSpec, samples: usize, seed: u64) -> AuditReport {
    let samples = samples.max(1);
    let n = spec.components();
    let mut rng = rng::stream(seed, Purpose::Audit, 0, 0);
    let mut x = vec![0.0; n];
    let mut max_abs: f64 = 0.0;
    for _ in 0..samples {
        let step = rng.random_range(0..spec.steps());
        for k in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            x[k] = match spec.initial_state() {
                Some(x0) => x0[k] * (1.0 + 0.5 * z),
                None => 10.0 * z,
            };
        }
        let bits = if n == 32 {
            rng.random::<u32>()
        } else {
            rng.random_range(0..1u32 << n)
        };
        let i = SurvivalVector::from_bits(bits, n).expect("bits in range");
        let c = spec.running_reward(step, &x, i, i);
        max_abs = max_abs.max(if c.is_nan() { f64::INFINITY } else { c.abs() });
    }
    AuditReport {
        samples,
        max_abs,
        passed: max_abs <= 1e-12,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_put() -> ProblemSpec {
        make_put_problem(&[100.0], &GbmMarket::uniform(1, 0.0, 0.2, 1.0, 4, 100.0)).unwrap()
    }

    #[test]
    fn put_pays_intrinsic_when_stopped() {
        let spec = one_put();
        let alive = SurvivalVector::all_alive(1);
        let dead = SurvivalVector::all_stopped(1);
        assert_eq!(spec.running_reward(0, &[90.0], alive, dead), 10.0);
        assert_eq!(spec.running_reward(0, &[120.0], alive, dead), 0.0);
        assert_eq!(spec.terminal_reward(&[90.0], alive), 10.0);
        assert_eq!(spec.terminal_reward(&[90.0], dead), 0.0);
    }

    #[test]
    fn put_rejects_mismatched_dimensions() {
        let market = GbmMarket::uniform(3, 0.0, 0.2, 1.0, 4, 100.0);
        assert!(matches!(
            make_put_problem(&[100.0, 100.0], &market),
            Err(Error::Dimension { .. })
        ));
        let mut bad = market.clone();
        bad.vols[1] = 0.0;
        assert!(make_put_problem(&[100.0; 3], &bad).is_err());
    }

    #[test]
    fn log_utility_values_and_drift_guard() {
        let spec = make_log_utility_problem(&GbmMarket::uniform(5, -0.05, 0.2, 1.0, 5, 1.0)).unwrap();
        let all = SurvivalVector::all_alive(5);
        assert!((spec.terminal_reward(&[1.0; 5], all) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(spec.terminal_reward(&[0.0; 5], all), 0.0);
        assert!((spec.terminal_reward(&[2.0, 0.0, 0.0, 0.0, 0.0], all) - 1.4f64.ln()).abs() < 1e-15);

        let err = make_log_utility_problem(&GbmMarket::uniform(2, 0.01, 0.2, 1.0, 5, 1.0)).unwrap_err();
        assert!(err.to_string().contains("drift"));
    }

    #[test]
    fn audits() {
        assert!(audit_reward_zero_diag(&one_put(), 1000, 1).passed);
        let log = make_log_utility_problem(&GbmMarket::uniform(3, 0.0, 0.2, 1.0, 5, 1.0)).unwrap();
        let report = audit_reward_zero_diag(&log, 1000, 1);
        assert!(report.passed);
        assert_eq!(report.max_abs, 0.0);

        let bad = ProblemSpec::builder("bad", 2, 3, NoiseLaw::Gaussian { dim: 2, std_dev: 1.0 })
            .running_reward(|_, _, _, _| 1.0)
            .build()
            .unwrap();
        assert!(!audit_reward_zero_diag(&bad, 10, 1).passed);
    }

    #[test]
    fn advance_freezes_stopped_components() {
        let spec = make_log_utility_problem(&GbmMarket::uniform(3, -0.1, 0.3, 1.0, 4, 1.0)).unwrap();
        let x = [1.0, 2.0, 3.0];
        let eps = [0.3, -0.2, 0.5, 0.7];
        let mut out = [0.0; 3];
        let mask = SurvivalVector::from_flags(&[true, false, true]);
        spec.advance(0, &x, &eps, mask, &mut out).unwrap();
        assert_eq!(out[1], 2.0);
        assert_ne!(out[0], 1.0);
        spec.advance(0, &x, &eps, SurvivalVector::all_stopped(3), &mut out).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn exact_gbm_stepping_matches_closed_form() {
        let mut market = GbmMarket::uniform(1, 0.05, 0.2, 1.0, 4, 100.0);
        market.stepping = Stepping::ExactGbm;
        let spec = make_put_problem(&[100.0], &market).unwrap();
        let mut out = [0.0];
        spec.advance(0, &[100.0], &[0.0, 0.1], SurvivalVector::all_alive(1), &mut out)
            .unwrap();
        let expected = 100.0 * ((0.05 - 0.02) * 0.25 + 0.2 * 0.1f64).exp();
        assert!((out[0] - expected).abs() < 1e-12);
    }
}
