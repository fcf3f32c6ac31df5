//! Backward induction over regressed continuation values.
//!
//! For `n = p-1, ..., 0` the backend fits
//! `U_n(x, i) ~ E[V_{n+1}(x + F_n(x, eps) i, i)]`, and the value is recovered on
//! demand as `V_n(x, i) = max_{i'} c_n(x, i, i') + U_n(x, i')`, the maximum
//! running over every submask of `i` (exhaustive mode) or over `i` and the
//! `N` single-component drops of `i` (partial mode). Only the `U_n` are stored.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::mask::{submasks, SurvivalVector};
use crate::problem::{NoiseLaw, ProblemSpec};
use crate::shallownet::{default_width, fit_lsq, Activation, Normalization, ShallowNet, TrainConfig};
use crate::simgen::{StoppingRule, TrainingSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Any subset of the running components may stop at a step.
    Exhaustive,
    /// At most one component stops per step.
    Partial,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "exhaustive" => Ok(Mode::Exhaustive),
            "partial" => Ok(Mode::Partial),
            _ => Err(Error::Config(format!(
                "unknown solver mode {s:?} (expected \"exhaustive\" or \"partial\")"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Exhaustive => "exhaustive",
            Mode::Partial => "partial",
        }
    }

    fn id(self) -> u8 {
        match self {
            Mode::Exhaustive => 0,
            Mode::Partial => 1,
        }
    }
}

/// Exact bit pattern of a state, for hashing.
pub(crate) fn state_key(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| v.to_bits()).collect()
}

/// Continuation values tabulated on a finite state set.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TabularFn {
    entries: HashMap<(Vec<u64>, u32), f64>,
}

impl TabularFn {
    pub fn get(&self, x: &[f64], i: SurvivalVector) -> Option<f64> {
        self.entries.get(&(state_key(x), i.bits())).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn sorted(&self) -> Vec<(&(Vec<u64>, u32), &f64)> {
        let mut v: Vec<_> = self.entries.iter().collect();
        v.sort_by(|a, b| a.0.cmp(b.0));
        v
    }
}

/// A fitted `U_n`.
#[derive(Clone, Debug, PartialEq)]
pub enum Regressor {
    Net(ShallowNet),
    /// Off-table queries evaluate to NaN.
    Table(TabularFn),
}

impl Regressor {
    #[inline]
    pub fn eval(&self, x: &[f64], i: SurvivalVector) -> f64 {
        match self {
            Regressor::Net(net) => {
                let n = x.len();
                let mut buf = [0.0f64; 2 * SurvivalVector::MAX_COMPONENTS];
                buf[..n].copy_from_slice(x);
                i.write_f64(&mut buf[n..2 * n]);
                net.predict(&buf[..2 * n])
            }
            Regressor::Table(t) => t.get(x, i).unwrap_or(f64::NAN),
        }
    }

    fn backend_id(&self) -> u8 {
        match self {
            Regressor::Net(_) => 0,
            Regressor::Table(_) => 1,
        }
    }
}

/// Outcome of the maximization at one `(n, x, i)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decision {
    pub value: f64,
    /// Chosen `I_{n+1}`.
    pub next: SurvivalVector,
    /// Partial mode: index of the stopped component (one-based), 0 for none.
    /// Exhaustive mode: always 0.
    pub drop_index: usize,
    /// Size of the candidate set: `2^{|i|_1}` or `N + 1`.
    pub candidates: usize,
}

/// Exhaustive maximum of `c_n(x, i, i') + U(x, i')` over `i' <= i`; ties keep
/// the earliest candidate, so `i' = i` wins a tie.
pub fn maximize_exhaustive(
    spec: &ProblemSpec,
    n: usize,
    x: &[f64],
    i: SurvivalVector,
    u: &Regressor,
) -> Decision {
    let mut best = Decision {
        value: f64::NEG_INFINITY,
        next: i,
        drop_index: 0,
        candidates: 0,
    };
    for cand in submasks(i) {
        let v = spec.running_reward(n, x, i, cand) + u.eval(x, cand);
        best.candidates += 1;
        if v > best.value {
            best.value = v;
            best.next = cand;
        }
    }
    best
}

/// Maximum over `i^{-l}`, `l = 0..=N`. Drops of already stopped components
/// coincide with `l = 0` and are never reported as the argmax.
pub fn maximize_partial(
    spec: &ProblemSpec,
    n: usize,
    x: &[f64],
    i: SurvivalVector,
    u: &Regressor,
) -> Decision {
    let keep = spec.running_reward(n, x, i, i) + u.eval(x, i);
    let mut best = Decision {
        value: keep,
        next: i,
        drop_index: 0,
        candidates: i.len() + 1,
    };
    for k in 0..i.len() {
        if !i.is_alive(k) {
            continue;
        }
        let cand = i.stop(k);
        let v = spec.running_reward(n, x, i, cand) + u.eval(x, cand);
        if v > best.value {
            best.value = v;
            best.next = cand;
            best.drop_index = k + 1;
        }
    }
    best
}

fn maximize(mode: Mode, spec: &ProblemSpec, n: usize, x: &[f64], i: SurvivalVector, u: &Regressor) -> Decision {
    match mode {
        Mode::Exhaustive => maximize_exhaustive(spec, n, x, i, u),
        Mode::Partial => maximize_partial(spec, n, x, i, u),
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepDiagnostics {
    pub step: usize,
    /// Training MSE of the fitted regressor (0 for exact tables).
    pub mse: f64,
    pub epochs: usize,
    pub retries: usize,
    pub seconds: f64,
}

/// The trained `U_0..U_{p-1}` together with the problem they solve.
#[derive(Clone, Debug)]
pub struct ValueStack {
    problem: ProblemSpec,
    mode: Mode,
    steps: Vec<Regressor>,
    diagnostics: Vec<StepDiagnostics>,
}

impl ValueStack {
    /// A stack without regression steps, whose value is the terminal reward.
    pub fn terminal(problem: ProblemSpec, mode: Mode) -> Self {
        Self {
            problem,
            mode,
            steps: Vec::new(),
            diagnostics: Vec::new(),
        }
    }

    /// Number of regressed steps.
    pub fn steps(&self) -> usize {
        self.steps.len()
    }

    pub fn problem(&self) -> &ProblemSpec {
        &self.problem
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn regressor(&self, n: usize) -> &Regressor {
        &self.steps[n]
    }

    pub fn diagnostics(&self) -> &[StepDiagnostics] {
        &self.diagnostics
    }

    /// `U_n(x, i)`.
    pub fn continuation(&self, n: usize, x: &[f64], i: SurvivalVector) -> f64 {
        self.steps[n].eval(x, i)
    }

    pub fn value_exhaustive(&self, n: usize, x: &[f64], i: SurvivalVector) -> Decision {
        assert!(n < self.steps.len(), "step {n} has no regressor");
        maximize_exhaustive(&self.problem, n, x, i, &self.steps[n])
    }

    pub fn value_partial(&self, n: usize, x: &[f64], i: SurvivalVector) -> Decision {
        assert!(n < self.steps.len(), "step {n} has no regressor");
        maximize_partial(&self.problem, n, x, i, &self.steps[n])
    }

    /// `V_n(x, i)` in the stack's own mode; `g(x, i)` at `n = p`.
    pub fn value(&self, n: usize, x: &[f64], i: SurvivalVector) -> f64 {
        self.value_with_mode(self.mode, n, x, i)
    }

    pub fn value_with_mode(&self, mode: Mode, n: usize, x: &[f64], i: SurvivalVector) -> f64 {
        if n == self.steps.len() {
            self.problem.terminal_reward(x, i)
        } else {
            maximize(mode, &self.problem, n, x, i, &self.steps[n]).value
        }
    }

    pub fn policy(&self) -> StoppingPolicy<'_> {
        StoppingPolicy {
            stack: self,
            mode: self.mode,
        }
    }

    pub fn policy_with_mode(&self, mode: Mode) -> StoppingPolicy<'_> {
        StoppingPolicy { stack: self, mode }
    }

    /// Fits one network per step to `V_n` on the training states, trading
    /// training time for cheaper queries.
    pub fn distill(&self, data: &TrainingSet, cfg: &NetConfig) -> Result<Vec<ShallowNet>> {
        let dim = self.problem.components();
        (0..self.steps.len())
            .map(|n| {
                let (inputs, targets) = collect_inputs(data, n, dim, |x, i| self.value(n, x, i));
                let width = cfg.width.unwrap_or_else(|| default_width(data.samples));
                let mut net = ShallowNet::random(2 * dim, width, cfg.activation, cfg.train.seed ^ (n as u64));
                if cfg.standardize {
                    net.set_normalization(Normalization::fit(&inputs, &targets, 2 * dim))?;
                }
                Ok(fit_lsq(net, &inputs, &targets, &cfg.train)?.net)
            })
            .collect()
    }

    const MAGIC: &'static [u8; 4] = b"MSVS";
    const VERSION: u32 = 1;

    /// Header (mode, N, p, backend id) followed by each step's regressor.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(Self::MAGIC)?;
        w.write_all(&Self::VERSION.to_le_bytes())?;
        w.write_all(&[self.mode.id()])?;
        w.write_all(&(self.problem.components() as u64).to_le_bytes())?;
        w.write_all(&(self.steps.len() as u64).to_le_bytes())?;
        let backend = self.steps.first().map_or(0, Regressor::backend_id);
        w.write_all(&[backend])?;
        for reg in &self.steps {
            match reg {
                Regressor::Net(net) => net.write_to(&mut w)?,
                Regressor::Table(table) => {
                    w.write_all(&(table.len() as u64).to_le_bytes())?;
                    for ((key, mask), value) in table.sorted() {
                        for k in key {
                            w.write_all(&k.to_le_bytes())?;
                        }
                        w.write_all(&mask.to_le_bytes())?;
                        w.write_all(&value.to_le_bytes())?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Reads a stack written by [`write_to`](Self::write_to) for `problem`.
    pub fn read_from<R: Read>(mut r: R, problem: ProblemSpec) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(Error::Format("not a value-stack file".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        if u32::from_le_bytes(b4) != Self::VERSION {
            return Err(Error::Format("unsupported value-stack version".into()));
        }
        let mut b1 = [0u8; 1];
        r.read_exact(&mut b1)?;
        let mode = match b1[0] {
            0 => Mode::Exhaustive,
            1 => Mode::Partial,
            t => return Err(Error::Format(format!("bad mode tag {t}"))),
        };
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let dim = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let p = u64::from_le_bytes(b8) as usize;
        if dim != problem.components() || p != problem.steps() {
            return Err(Error::Format(format!(
                "stack is for N = {dim}, p = {p}; problem has N = {}, p = {}",
                problem.components(),
                problem.steps()
            )));
        }
        r.read_exact(&mut b1)?;
        let backend = b1[0];
        let mut steps = Vec::with_capacity(p);
        for _ in 0..p {
            steps.push(match backend {
                0 => Regressor::Net(ShallowNet::read_from(&mut r)?),
                1 => {
                    r.read_exact(&mut b8)?;
                    let count = u64::from_le_bytes(b8) as usize;
                    let mut entries = HashMap::with_capacity(count);
                    for _ in 0..count {
                        let mut key = Vec::with_capacity(dim);
                        for _ in 0..dim {
                            r.read_exact(&mut b8)?;
                            key.push(u64::from_le_bytes(b8));
                        }
                        r.read_exact(&mut b4)?;
                        let mask = u32::from_le_bytes(b4);
                        r.read_exact(&mut b8)?;
                        entries.insert((key, mask), f64::from_bits(u64::from_le_bytes(b8)));
                    }
                    Regressor::Table(TabularFn { entries })
                }
                t => return Err(Error::Format(format!("unknown backend id {t}"))),
            });
        }
        Ok(Self {
            problem,
            mode,
            steps,
            diagnostics: Vec::new(),
        })
    }
}

/// Greedy policy read off a [`ValueStack`].
#[derive(Clone, Copy, Debug)]
pub struct StoppingPolicy<'a> {
    stack: &'a ValueStack,
    mode: Mode,
}

impl StoppingPolicy<'_> {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// `I_{n+1}` chosen at `(n, x, i)`; depends on nothing else.
    pub fn decide(&self, n: usize, x: &[f64], i: SurvivalVector) -> SurvivalVector {
        maximize(self.mode, &self.stack.problem, n, x, i, &self.stack.steps[n]).next
    }
}

impl StoppingRule for StoppingPolicy<'_> {
    fn decide(&self, n: usize, x: &[f64], i: SurvivalVector) -> SurvivalVector {
        StoppingPolicy::decide(self, n, x, i)
    }
}

/// `V_{n+1}` as seen by the regression at step `n`.
pub type NextValue<'a> = dyn Fn(&[f64], SurvivalVector) -> f64 + Sync + 'a;

/// Fits `U_n` given `V_{n+1}`. Implementations are swappable without
/// touching the induction.
pub trait RegressionBackend {
    fn regress_step(
        &mut self,
        spec: &ProblemSpec,
        n: usize,
        next_value: &NextValue<'_>,
        warm: Option<&Regressor>,
    ) -> Result<(Regressor, StepDiagnostics)>;
}

/// Network settings for the regression steps.
#[derive(Clone, Debug, PartialEq)]
pub struct NetConfig {
    /// Hidden width; `None` means `ceil(sqrt(M))`.
    pub width: Option<usize>,
    pub activation: Activation,
    pub train: TrainConfig,
    /// Initialize step `n` from the network of step `n + 1`.
    pub warm_start: bool,
    /// Epoch budget for warm-started steps; `None` uses `train.epochs`.
    pub warm_epochs: Option<usize>,
    pub standardize: bool,
    pub output_clamp: Option<(f64, f64)>,
    /// A step whose MSE exceeds this multiple of the previous step's is
    /// retried once at half the learning rate, then aborted.
    pub divergence_factor: f64,
    /// Average each target over the shock and its negative. Needs a
    /// symmetric noise law.
    pub antithetic: bool,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            width: None,
            activation: Activation::Tanh,
            train: TrainConfig::default(),
            warm_start: true,
            warm_epochs: Some(10),
            standardize: true,
            output_clamp: None,
            divergence_factor: 10.0,
            antithetic: false,
        }
    }
}

fn collect_inputs(
    data: &TrainingSet,
    n: usize,
    dim: usize,
    target: impl Fn(&[f64], SurvivalVector) -> f64 + Sync,
) -> (Vec<f64>, Vec<f64>) {
    let rows: Vec<(Vec<f64>, f64)> = (0..data.samples)
        .into_par_iter()
        .map(|m| {
            let x = data.state(n, m);
            let i = data.mask(n, m);
            let mut row = Vec::with_capacity(2 * dim);
            row.extend_from_slice(x);
            row.resize(2 * dim, 0.0);
            i.write_f64(&mut row[dim..]);
            (row, target(x, i))
        })
        .collect();
    let mut inputs = Vec::with_capacity(data.samples * 2 * dim);
    let mut targets = Vec::with_capacity(data.samples);
    for (row, t) in rows {
        inputs.extend(row);
        targets.push(t);
    }
    (inputs, targets)
}

/// Regression on the simulated sample with a [`ShallowNet`] per step.
pub struct NetBackend<'a> {
    data: &'a TrainingSet,
    cfg: NetConfig,
    prev_mse: Option<f64>,
}

impl<'a> NetBackend<'a> {
    pub fn new(data: &'a TrainingSet, cfg: NetConfig) -> Result<Self> {
        cfg.train.validate()?;
        Ok(Self {
            data,
            cfg,
            prev_mse: None,
        })
    }

    /// Inputs `(X_n, I_n)` and targets `V_{n+1}(X_n + F_n(X_n, eps) I_n, I_n)`.
    pub fn targets(
        &self,
        spec: &ProblemSpec,
        n: usize,
        next_value: &NextValue<'_>,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let dim = spec.components();
        let data = self.data;
        let antithetic = self.cfg.antithetic;
        if antithetic && !matches!(spec.noise(), NoiseLaw::Gaussian { .. }) {
            return Err(Error::Config("antithetic targets need a Gaussian noise law".into()));
        }
        let rows: Vec<Result<f64>> = (0..data.samples)
            .into_par_iter()
            .map(|m| {
                let x = data.state(n, m);
                let i = data.mask(n, m);
                let mut next = [0.0f64; SurvivalVector::MAX_COMPONENTS];
                let eps = data.shock(n, m);
                spec.advance(n, x, eps, i, &mut next[..dim])?;
                let mut v = next_value(&next[..dim], i);
                if antithetic {
                    let mut flipped = [0.0f64; SurvivalVector::MAX_COMPONENTS + 1];
                    for (f, e) in flipped.iter_mut().zip(eps) {
                        *f = -e;
                    }
                    spec.advance(n, x, &flipped[..eps.len()], i, &mut next[..dim])?;
                    v = 0.5 * (v + next_value(&next[..dim], i));
                }
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Numeric(format!(
                        "next value {v} at step {} from sample {m}",
                        n + 1
                    )))
                }
            })
            .collect();
        let targets = rows.into_iter().collect::<Result<Vec<f64>>>()?;
        let (inputs, _) = collect_inputs(data, n, dim, |_, _| 0.0);
        Ok((inputs, targets))
    }
}

impl RegressionBackend for NetBackend<'_> {
    fn regress_step(
        &mut self,
        spec: &ProblemSpec,
        n: usize,
        next_value: &NextValue<'_>,
        warm: Option<&Regressor>,
    ) -> Result<(Regressor, StepDiagnostics)> {
        let started = Instant::now();
        if !self.data.matches(spec) {
            return Err(Error::Config(
                "training set was drawn for a different problem".into(),
            ));
        }
        let dim = spec.components();
        let (inputs, targets) = self.targets(spec, n, next_value)?;
        let warm_net = match (self.cfg.warm_start, warm) {
            (true, Some(Regressor::Net(net))) => Some(net.clone()),
            _ => None,
        };
        let mut train = self.cfg.train.clone();
        train.seed = train.seed.wrapping_add(n as u64);
        let start = match warm_net {
            Some(net) => {
                if let Some(e) = self.cfg.warm_epochs {
                    train.epochs = e;
                }
                net
            }
            None => {
                let width = self.cfg.width.unwrap_or_else(|| default_width(self.data.samples));
                let mut net = ShallowNet::random(2 * dim, width, self.cfg.activation, train.seed);
                if self.cfg.standardize {
                    net.set_normalization(Normalization::fit(&inputs, &targets, 2 * dim))?;
                }
                net.set_output_clamp(self.cfg.output_clamp);
                net
            }
        };

        let mut retries = 0;
        let mut report = fit_lsq(start.clone(), &inputs, &targets, &train)?;
        if let Some(prev) = self.prev_mse {
            let limit = self.cfg.divergence_factor * prev;
            if prev > 1e-12 && report.mse > limit {
                retries = 1;
                log::warn!(
                    "step {n}: mse {:.3e} > {:.0}x previous {:.3e}; retrying at half rate",
                    report.mse,
                    self.cfg.divergence_factor,
                    prev
                );
                train.learning_rate *= 0.5;
                report = fit_lsq(start, &inputs, &targets, &train)?;
                if report.mse > limit {
                    return Err(Error::Numeric(format!(
                        "regression at step {n} diverged: mse {:.3e} vs previous {prev:.3e}",
                        report.mse
                    )));
                }
            }
        }
        self.prev_mse = Some(report.mse);
        Ok((
            Regressor::Net(report.net),
            StepDiagnostics {
                step: n,
                mse: report.mse,
                epochs: report.epochs_run,
                retries,
                seconds: started.elapsed().as_secs_f64(),
            },
        ))
    }
}

/// Exact conditional expectations on a finite state space.
///
/// States at step `n` are everything reachable from `x0` in `n` steps under
/// any sequence of masks; each is tabulated against all `2^N` masks.
pub struct TabularBackend {
    points: Vec<Vec<f64>>,
    probs: Vec<f64>,
    states: Vec<Vec<Vec<f64>>>,
}

impl TabularBackend {
    pub fn new(spec: &ProblemSpec, x0: &[f64], max_states: usize) -> Result<Self> {
        check_dim("x0", spec.components(), x0.len())?;
        let (points, probs) = match spec.noise() {
            NoiseLaw::Discrete { points, probs } => (points.clone(), probs.clone()),
            NoiseLaw::Gaussian { .. } => {
                return Err(Error::Config(
                    "tabular backend needs a finitely supported noise law".into(),
                ))
            }
        };
        let dim = spec.components();
        let mut states = vec![vec![x0.to_vec()]];
        let mut total = 1;
        for n in 0..spec.steps().saturating_sub(1) {
            let mut seen = std::collections::HashSet::new();
            let mut layer = Vec::new();
            for x in &states[n] {
                for mask in SurvivalVector::all_masks(dim) {
                    for eps in &points {
                        let mut y = vec![0.0; dim];
                        spec.advance(n, x, eps, mask, &mut y)?;
                        if seen.insert(state_key(&y)) {
                            layer.push(y);
                        }
                    }
                }
            }
            total += layer.len();
            if total > max_states {
                return Err(Error::Guard(format!(
                    "tabular state space exceeds {max_states} states at step {}",
                    n + 1
                )));
            }
            states.push(layer);
        }
        Ok(Self {
            points,
            probs,
            states,
        })
    }

    pub fn states_at(&self, n: usize) -> &[Vec<f64>] {
        &self.states[n]
    }
}

impl RegressionBackend for TabularBackend {
    fn regress_step(
        &mut self,
        spec: &ProblemSpec,
        n: usize,
        next_value: &NextValue<'_>,
        _warm: Option<&Regressor>,
    ) -> Result<(Regressor, StepDiagnostics)> {
        let started = Instant::now();
        let dim = spec.components();
        let mut entries = HashMap::new();
        let mut y = vec![0.0; dim];
        for x in &self.states[n] {
            for mask in SurvivalVector::all_masks(dim) {
                let mut u = 0.0;
                for (eps, q) in self.points.iter().zip(&self.probs) {
                    spec.advance(n, x, eps, mask, &mut y)?;
                    u += q * next_value(&y, mask);
                }
                if !u.is_finite() {
                    return Err(Error::Numeric(format!(
                        "tabulated continuation at step {n} is {u}; next value missing off-table?"
                    )));
                }
                entries.insert((state_key(x), mask.bits()), u);
            }
        }
        Ok((
            Regressor::Table(TabularFn { entries }),
            StepDiagnostics {
                step: n,
                seconds: started.elapsed().as_secs_f64(),
                ..StepDiagnostics::default()
            },
        ))
    }
}

/// Runs the backward induction `n = p-1, ..., 0` with any backend.
pub fn solve_with<B: RegressionBackend>(spec: &ProblemSpec, mode: Mode, backend: &mut B) -> Result<ValueStack> {
    let p = spec.steps();
    let mut steps: Vec<Option<Regressor>> = vec![None; p];
    let mut diagnostics = vec![StepDiagnostics::default(); p];
    for n in (0..p).rev() {
        let (reg, diag) = {
            let after = steps.get(n + 1).and_then(Option::as_ref);
            let next_value = |x: &[f64], i: SurvivalVector| match after {
                None => spec.terminal_reward(x, i),
                Some(u) => maximize(mode, spec, n + 1, x, i, u).value,
            };
            backend.regress_step(spec, n, &next_value, after)?
        };
        log::info!(
            "{} {}: step {n} mse {:.4e} epochs {} ({:.2}s)",
            spec.name(),
            mode.name(),
            diag.mse,
            diag.epochs,
            diag.seconds
        );
        steps[n] = Some(reg);
        diagnostics[n] = diag;
    }
    Ok(ValueStack {
        problem: spec.clone(),
        mode,
        steps: steps.into_iter().map(|s| s.expect("every step regressed")).collect(),
        diagnostics,
    })
}

/// Backward induction with network regression on `data`.
pub fn solve(spec: &ProblemSpec, data: &TrainingSet, mode: Mode, cfg: &NetConfig) -> Result<ValueStack> {
    let mut backend = NetBackend::new(data, cfg.clone())?;
    solve_with(spec, mode, &mut backend)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::NoiseLaw;

    fn coin_problem() -> ProblemSpec {
        ProblemSpec::builder(
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
        .unwrap()
    }

    #[test]
    fn two_branch_problem_stops_at_zero() {
        let spec = coin_problem();
        for mode in [Mode::Exhaustive, Mode::Partial] {
            let mut backend = TabularBackend::new(&spec, &[0.0], 1000).unwrap();
            let stack = solve_with(&spec, mode, &mut backend).unwrap();
            let alive = SurvivalVector::all_alive(1);
            assert_eq!(stack.continuation(0, &[0.0], alive), -1.0);
            assert_eq!(stack.continuation(0, &[0.0], SurvivalVector::all_stopped(1)), 0.0);
            assert_eq!(stack.value(0, &[0.0], alive), 0.0);
            assert_eq!(stack.policy().decide(0, &[0.0], alive), SurvivalVector::all_stopped(1));
        }
    }

    struct Fixed(Regressor);

    fn two_value_table(a: f64, b: f64) -> Regressor {
        let mut entries = HashMap::new();
        entries.insert((state_key(&[90.0]), 1), a);
        entries.insert((state_key(&[90.0]), 0), b);
        Regressor::Table(TabularFn { entries })
    }

    impl Fixed {
        fn decide(&self, spec: &ProblemSpec, mode: Mode) -> Decision {
            maximize(mode, spec, 0, &[90.0], SurvivalVector::all_alive(1), &self.0)
        }
    }

    #[test]
    fn one_component_max_is_two_way() {
        let spec = crate::problem::make_put_problem(
            &[100.0],
            &crate::problem::GbmMarket::uniform(1, 0.0, 0.2, 1.0, 2, 100.0),
        )
        .unwrap();
        // stop payoff q = 10
        for (a, b, want) in [(3.0, 1.0, 11.0), (12.0, 1.0, 12.0), (11.0, 1.0, 11.0)] {
            let f = Fixed(two_value_table(a, b));
            let e = f.decide(&spec, Mode::Exhaustive);
            let p = f.decide(&spec, Mode::Partial);
            assert_eq!(e.value, want);
            assert_eq!(p.value, want);
            assert_eq!(e.next, p.next);
        }
        // tie at 11: continuing wins
        let tie = Fixed(two_value_table(11.0, 1.0)).decide(&spec, Mode::Exhaustive);
        assert_eq!(tie.next, SurvivalVector::all_alive(1));
    }

    #[test]
    fn empty_mask_has_single_candidate() {
        let spec = coin_problem();
        let mut entries = HashMap::new();
        entries.insert((state_key(&[0.5]), 0), 4.0);
        let u = Regressor::Table(TabularFn { entries });
        let dead = SurvivalVector::all_stopped(1);
        let d = maximize_exhaustive(&spec, 0, &[0.5], dead, &u);
        assert_eq!((d.value, d.next, d.candidates), (4.0, dead, 1));
        let d = maximize_partial(&spec, 0, &[0.5], dead, &u);
        assert_eq!((d.value, d.next, d.drop_index), (4.0, dead, 0));
    }

    #[test]
    fn gaussian_noise_is_rejected_by_tabular_backend() {
        let spec = ProblemSpec::builder("g", 1, 2, NoiseLaw::Gaussian { dim: 1, std_dev: 1.0 })
            .build()
            .unwrap();
        assert!(TabularBackend::new(&spec, &[0.0], 10).is_err());
    }

    #[test]
    fn mode_names_round_trip() {
        for m in [Mode::Exhaustive, Mode::Partial] {
            assert_eq!(Mode::parse(m.name()).unwrap(), m);
        }
        assert!(Mode::parse("greedy").is_err());
    }
}
