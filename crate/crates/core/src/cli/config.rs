//! Experiment configuration files.
//!
//! A config is TOML with four required-ish tables. Unknown keys are errors.
//!
//! ```toml
//! [experiment]
//! name = "log_utility_n5"      # output subdirectory
//! seeds = [1, 2, 3, 4, 5]
//! workers = 0                  # 0 = one per core
//!
//! [problem]
//! kind = "log_utility"         # or "multi_put"
//! components = 5
//! drift = -0.05
//! vol = 0.2
//! horizon = 1.0
//! x0 = 1.0
//! strike = 1.0                 # multi_put only
//!
//! [solver]
//! mode = "partial"             # or "exhaustive"
//! steps = 10                   # p of the main run
//! rate_steps = [5, 10, 20, 40] # empty disables the rate study
//!
//! [network]
//! width = 0                    # 0 = ceil(sqrt(samples))
//! learning_rate = 0.001
//!
//! [training]
//! samples = 32768
//! law = "band"                 # "band", "box" or "lognormal"
//! lo = 0.0
//! hi = 2.5
//! spread = 0.2
//!
//! [evaluate]
//! grid_lo = 0.2
//! grid_hi = 2.0
//! grid_points = 101
//! ```
//!
//! Every key has a default; `print-config` shows them all.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{binomial_put, log_utility_value};
use crate::problem::{make_log_utility_problem, make_put_problem, GbmMarket, ProblemSpec, Stepping};
use crate::shallownet::{Activation, Optimizer, TrainConfig};
use crate::simgen::StateLaw;
use crate::solver::{Mode, NetConfig};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub problem: ProblemSection,
    pub solver: SolverSection,
    pub network: NetworkSection,
    pub training: TrainingSection,
    pub evaluate: EvaluateSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    pub seeds: Vec<i64>,
    pub workers: i64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            seeds: vec![1],
            workers: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSection {
    pub kind: String,
    pub components: i64,
    pub drift: f64,
    pub vol: f64,
    pub horizon: f64,
    pub x0: f64,
    pub strike: f64,
    /// "euler" or "exact".
    pub stepping: String,
    /// Tree steps for the one-dimensional put reference.
    pub tree_steps: i64,
}

impl Default for ProblemSection {
    fn default() -> Self {
        Self {
            kind: "log_utility".into(),
            components: 5,
            drift: -0.05,
            vol: 0.2,
            horizon: 1.0,
            x0: 1.0,
            strike: 1.0,
            stepping: "euler".into(),
            tree_steps: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub mode: String,
    pub steps: i64,
    pub rate_steps: Vec<i64>,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            mode: "partial".into(),
            steps: 10,
            rate_steps: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub width: i64,
    pub activation: String,
    pub optimizer: String,
    pub learning_rate: f64,
    pub batch_size: i64,
    pub epochs: i64,
    pub warm_start: bool,
    pub warm_epochs: i64,
    pub standardize: bool,
    pub antithetic: bool,
    pub clip: f64,
    pub divergence_factor: f64,
}

impl Default for NetworkSection {
    fn default() -> Self {
        let net = NetConfig::default();
        Self {
            width: 0,
            activation: net.activation.name().into(),
            optimizer: net.train.optimizer.name().into(),
            learning_rate: net.train.learning_rate,
            batch_size: net.train.batch_size as i64,
            epochs: net.train.epochs as i64,
            warm_start: net.warm_start,
            warm_epochs: net.warm_epochs.unwrap_or(net.train.epochs) as i64,
            standardize: net.standardize,
            antithetic: net.antithetic,
            clip: net.train.clip.unwrap_or(0.0),
            divergence_factor: net.divergence_factor,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub samples: i64,
    pub law: String,
    pub lo: f64,
    pub hi: f64,
    pub spread: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            samples: 1 << 15,
            law: "band".into(),
            lo: 0.0,
            hi: 2.5,
            spread: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub grid_points: i64,
    /// Fixed value of coordinates 2..N on the plane curve.
    pub plane_y: f64,
    pub rollout_paths: i64,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self {
            grid_lo: 0.2,
            grid_hi: 2.0,
            grid_points: 101,
            plane_y: 1.0,
            rollout_paths: 20_000,
        }
    }
}

fn count(key: &str, value: i64, min: i64) -> Result<usize> {
    if value < min {
        return Err(Error::Config(format!("{key} must be >= {min}, got {value}")));
    }
    Ok(value as usize)
}

fn positive(key: &str, value: f64) -> Result<f64> {
    if !(value.is_finite() && value > 0.0) {
        return Err(Error::Config(format!("{key} must be > 0, got {value}")));
    }
    Ok(value)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemKind {
    LogUtility,
    MultiPut,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// The config with every default written out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every key; the message names the first offending one.
    pub fn validate(&self) -> Result<()> {
        if self.experiment.name.is_empty()
            || self.experiment.name.contains(['/', '\\'])
            || self.experiment.name.starts_with('.')
        {
            return Err(Error::Config(format!(
                "experiment.name {:?} must be a plain directory name",
                self.experiment.name
            )));
        }
        if self.experiment.seeds.is_empty() {
            return Err(Error::Config("experiment.seeds must not be empty".into()));
        }
        for &s in &self.experiment.seeds {
            count("experiment.seeds", s, 0)?;
        }
        count("experiment.workers", self.experiment.workers, 0)?;
        self.kind()?;
        count("problem.components", self.problem.components, 1)?;
        if self.problem.components > 16 {
            return Err(Error::Config(format!(
                "problem.components must be <= 16, got {}",
                self.problem.components
            )));
        }
        positive("problem.vol", self.problem.vol)?;
        positive("problem.horizon", self.problem.horizon)?;
        if !self.problem.drift.is_finite() {
            return Err(Error::Config("problem.drift must be finite".into()));
        }
        if self.kind()? == ProblemKind::LogUtility && self.problem.drift > 0.0 {
            return Err(Error::Config(format!(
                "problem.drift must be <= 0 for log_utility, got {}",
                self.problem.drift
            )));
        }
        if !(self.problem.x0.is_finite() && self.problem.x0 >= 0.0) {
            return Err(Error::Config(format!("problem.x0 must be >= 0, got {}", self.problem.x0)));
        }
        if !(self.problem.strike.is_finite() && self.problem.strike >= 0.0) {
            return Err(Error::Config(format!(
                "problem.strike must be >= 0, got {}",
                self.problem.strike
            )));
        }
        self.stepping()?;
        count("problem.tree_steps", self.problem.tree_steps, 1)?;
        self.mode()?;
        count("solver.steps", self.solver.steps, 1)?;
        let mut ps = self.solver.rate_steps.clone();
        for &p in &ps {
            count("solver.rate_steps", p, 1)?;
        }
        ps.sort_unstable();
        ps.dedup();
        if ps.len() != self.solver.rate_steps.len() {
            return Err(Error::Config("solver.rate_steps must be distinct".into()));
        }
        if !ps.is_empty() && ps.len() < 3 {
            return Err(Error::Config(
                "solver.rate_steps needs at least 3 entries (or none)".into(),
            ));
        }
        count("network.width", self.network.width, 0)?;
        Activation::parse(&self.network.activation)
            .map_err(|_| Error::Config(format!("network.activation {:?} unknown", self.network.activation)))?;
        Optimizer::parse(&self.network.optimizer)
            .map_err(|_| Error::Config(format!("network.optimizer {:?} unknown", self.network.optimizer)))?;
        positive("network.learning_rate", self.network.learning_rate)?;
        count("network.batch_size", self.network.batch_size, 1)?;
        count("network.epochs", self.network.epochs, 0)?;
        count("network.warm_epochs", self.network.warm_epochs, 0)?;
        if !(self.network.clip.is_finite() && self.network.clip >= 0.0) {
            return Err(Error::Config("network.clip must be >= 0 (0 disables)".into()));
        }
        positive("network.divergence_factor", self.network.divergence_factor)?;
        count("training.samples", self.training.samples, 1)?;
        self.state_law()?
            .validate(self.components())
            .map_err(|e| Error::Config(format!("training: {e}")))?;
        if !(self.evaluate.grid_lo.is_finite()
            && self.evaluate.grid_hi.is_finite()
            && self.evaluate.grid_lo < self.evaluate.grid_hi)
        {
            return Err(Error::Config("evaluate.grid_lo must be < evaluate.grid_hi".into()));
        }
        count("evaluate.grid_points", self.evaluate.grid_points, 2)?;
        if !self.evaluate.plane_y.is_finite() {
            return Err(Error::Config("evaluate.plane_y must be finite".into()));
        }
        count("evaluate.rollout_paths", self.evaluate.rollout_paths, 0)?;
        Ok(())
    }

    pub fn kind(&self) -> Result<ProblemKind> {
        match self.problem.kind.as_str() {
            "log_utility" => Ok(ProblemKind::LogUtility),
            "multi_put" => Ok(ProblemKind::MultiPut),
            other => Err(Error::Config(format!(
                "problem.kind {other:?} unknown (expected \"log_utility\" or \"multi_put\")"
            ))),
        }
    }

    pub fn mode(&self) -> Result<Mode> {
        Mode::parse(&self.solver.mode).map_err(|_| {
            Error::Config(format!(
                "solver.mode {:?} unknown (expected \"exhaustive\" or \"partial\")",
                self.solver.mode
            ))
        })
    }

    fn stepping(&self) -> Result<Stepping> {
        match self.problem.stepping.as_str() {
            "euler" => Ok(Stepping::Euler),
            "exact" => Ok(Stepping::ExactGbm),
            other => Err(Error::Config(format!(
                "problem.stepping {other:?} unknown (expected \"euler\" or \"exact\")"
            ))),
        }
    }

    pub fn components(&self) -> usize {
        self.problem.components as usize
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.experiment.seeds.iter().map(|&s| s as u64).collect()
    }

    pub fn market(&self, steps: usize) -> Result<GbmMarket> {
        let pr = &self.problem;
        let mut market = GbmMarket::uniform(self.components(), pr.drift, pr.vol, pr.horizon, steps, pr.x0);
        market.stepping = self.stepping()?;
        Ok(market)
    }

    pub fn problem(&self, steps: usize) -> Result<ProblemSpec> {
        let market = self.market(steps)?;
        match self.kind()? {
            ProblemKind::LogUtility => make_log_utility_problem(&market),
            ProblemKind::MultiPut => make_put_problem(&vec![self.problem.strike; self.components()], &market),
        }
    }

    pub fn state_law(&self) -> Result<StateLaw> {
        let t = &self.training;
        match t.law.as_str() {
            "band" => Ok(StateLaw::Band {
                lo: t.lo,
                hi: t.hi,
                spread: t.spread,
            }),
            "box" => Ok(StateLaw::UniformBox { lo: t.lo, hi: t.hi }),
            "lognormal" => Ok(StateLaw::LogNormal {
                anchor: vec![self.problem.x0; self.components()],
                spread: t.spread,
            }),
            other => Err(Error::Config(format!(
                "training.law {other:?} unknown (expected \"band\", \"box\" or \"lognormal\")"
            ))),
        }
    }

    pub fn net_config(&self) -> Result<NetConfig> {
        let n = &self.network;
        Ok(NetConfig {
            width: (n.width > 0).then_some(n.width as usize),
            activation: Activation::parse(&n.activation)?,
            train: TrainConfig {
                optimizer: Optimizer::parse(&n.optimizer)?,
                learning_rate: n.learning_rate,
                batch_size: n.batch_size as usize,
                epochs: n.epochs as usize,
                clip: (n.clip > 0.0).then_some(n.clip),
                ..TrainConfig::default()
            },
            warm_start: n.warm_start,
            warm_epochs: Some(n.warm_epochs as usize),
            standardize: n.standardize,
            output_clamp: None,
            divergence_factor: n.divergence_factor,
            antithetic: n.antithetic,
        })
    }

    pub fn grid(&self) -> Vec<f64> {
        let e = &self.evaluate;
        crate::evaluate::linspace(e.grid_lo, e.grid_hi, e.grid_points as usize)
    }

    /// One-dimensional reference value of a single component started at `x`.
    pub fn component_reference(&self, x: f64) -> Result<f64> {
        let pr = &self.problem;
        match self.kind()? {
            ProblemKind::LogUtility => Ok(log_utility_value(&[x])),
            ProblemKind::MultiPut => {
                if x <= 0.0 {
                    return Ok(pr.strike);
                }
                binomial_put(x, pr.strike, pr.drift, pr.vol, pr.horizon, pr.tree_steps as usize)
            }
        }
    }

    /// Reference value at `(x, ..., x)`.
    pub fn diagonal_reference(&self, x: f64) -> Result<f64> {
        match self.kind()? {
            ProblemKind::LogUtility => Ok(log_utility_value(&vec![x; self.components()])),
            ProblemKind::MultiPut => Ok(self.components() as f64 * self.component_reference(x)?),
        }
    }

    /// Reference value at `(x, y, ..., y)`.
    pub fn plane_reference(&self, x: f64, y: f64) -> Result<f64> {
        let mut state = vec![y; self.components()];
        state[0] = x;
        match self.kind()? {
            ProblemKind::LogUtility => Ok(log_utility_value(&state)),
            ProblemKind::MultiPut => {
                Ok(self.component_reference(x)? + (self.components() - 1) as f64 * self.component_reference(y)?)
            }
        }
    }
}

pub const LOG_UTILITY_N5: &str = include_str!("../../configs/log_utility_n5.cfg");
pub const MULTI_PUT_N5: &str = include_str!("../../configs/multi_put_n5.cfg");

/// Bundled config by name, with or without the `.cfg` suffix. `defaults`
/// gives every key at its default value.
pub fn bundled(name: &str) -> Option<String> {
    match name.trim_end_matches(".cfg") {
        "log_utility_n5" => Some(LOG_UTILITY_N5.to_string()),
        "multi_put_n5" => Some(MULTI_PUT_N5.to_string()),
        "defaults" => Some(ExperimentConfig::default().to_toml()),
        _ => None,
    }
}

pub const BUNDLED_NAMES: [&str; 3] = ["log_utility_n5", "multi_put_n5", "defaults"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_configs_parse() {
        for name in BUNDLED_NAMES {
            let cfg = ExperimentConfig::parse(&bundled(name).unwrap()).unwrap();
            assert_eq!(ExperimentConfig::parse(&cfg.to_toml()).unwrap(), cfg);
        }
    }

    #[test]
    fn negative_samples_name_the_key() {
        let err = ExperimentConfig::parse("[training]\nsamples = -4\n").unwrap_err();
        assert!(err.to_string().contains("training.samples"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected_with_line() {
        let err = ExperimentConfig::parse("[solver]\nmode = \"partial\"\nsteps_typo = 3\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("steps_typo") && msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn positive_drift_is_refused_for_log_utility() {
        let err = ExperimentConfig::parse("[problem]\ndrift = 0.1\n").unwrap_err();
        assert!(err.to_string().contains("problem.drift"));
    }
}
