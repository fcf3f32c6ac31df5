//! Forward simulation: Euler transitions, path batches, and the training
//! sample used by the backward regressions.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::mask::SurvivalVector;
use crate::problem::{DiffusionSpec, ProblemSpec};
use crate::rng::{self, Purpose};

/// Anything that picks `I_{n+1}` from `(n, X_n, I_n)`.
pub trait StoppingRule: Sync {
    fn decide(&self, n: usize, x: &[f64], i: SurvivalVector) -> SurvivalVector;
}

impl<F> StoppingRule for F
where
    F: Fn(usize, &[f64], SurvivalVector) -> SurvivalVector + Sync,
{
    fn decide(&self, n: usize, x: &[f64], i: SurvivalVector) -> SurvivalVector {
        self(n, x, i)
    }
}

/// `F_n(x, eps) = b(t_n, x) h + sigma(t_n, x) * eps^(1..N) + sigma_0(t_n, x) eps^(0)`.
///
/// `eps` holds `(eps^0, eps^1, ..., eps^N)`, Brownian increments over one step.
pub fn euler_transition_into(
    spec: &DiffusionSpec,
    n: usize,
    x: &[f64],
    eps: &[f64],
    out: &mut [f64],
) -> Result<()> {
    let dim = spec.components;
    check_dim("state", dim, x.len())?;
    check_dim("shock", dim + 1, eps.len())?;
    check_dim("output", dim, out.len())?;
    let t = spec.time(n);
    let h = spec.step_size();
    let mut vol = [0.0f64; SurvivalVector::MAX_COMPONENTS];
    let vol = &mut vol[..dim];
    (spec.drift)(t, x, out);
    (spec.vol)(t, x, vol);
    let common = (spec.common_vol)(t, x);
    let bad = || Error::Numeric(format!("non-finite diffusion coefficient at step {n}, x = {x:?}"));
    if !common.is_finite() {
        return Err(bad());
    }
    for k in 0..dim {
        if !(out[k].is_finite() && vol[k].is_finite()) {
            return Err(bad());
        }
        out[k] = out[k] * h + vol[k] * eps[k + 1] + common * eps[0];
    }
    Ok(())
}

pub fn euler_transition(spec: &DiffusionSpec, n: usize, x: &[f64], eps: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; spec.components];
    euler_transition_into(spec, n, x, eps, &mut out)?;
    Ok(out)
}

/// Simulated trajectories, row-major `[path][time][component]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PathBatch {
    pub batch: usize,
    pub steps: usize,
    pub components: usize,
    pub noise_dim: usize,
    pub states: Vec<f64>,
    pub masks: Vec<SurvivalVector>,
    pub shocks: Vec<f64>,
}

impl PathBatch {
    pub fn state(&self, path: usize, n: usize) -> &[f64] {
        let start = (path * (self.steps + 1) + n) * self.components;
        &self.states[start..start + self.components]
    }

    pub fn mask(&self, path: usize, n: usize) -> SurvivalVector {
        self.masks[path * (self.steps + 1) + n]
    }

    pub fn shock(&self, path: usize, n: usize) -> &[f64] {
        let start = (path * self.steps + n) * self.noise_dim;
        &self.shocks[start..start + self.noise_dim]
    }

    /// Checks that masks never revive and that a stopped coordinate keeps
    /// its value for the rest of the path.
    pub fn check_freezing(&self) -> Result<()> {
        for path in 0..self.batch {
            for n in 0..self.steps {
                let (cur, next) = (self.mask(path, n), self.mask(path, n + 1));
                if !next.is_submask_of(cur) {
                    return Err(Error::Contract(format!(
                        "path {path}: mask revived between steps {n} and {}",
                        n + 1
                    )));
                }
                let (x, y) = (self.state(path, n), self.state(path, n + 1));
                for k in 0..self.components {
                    if !next.is_alive(k) && x[k].to_bits() != y[k].to_bits() {
                        return Err(Error::Contract(format!(
                            "path {path}: component {k} moved after stopping at step {n}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Forward simulation from `x0`. Without a policy nothing is ever stopped.
pub fn simulate_paths(
    spec: &ProblemSpec,
    x0: &[f64],
    policy: Option<&dyn StoppingRule>,
    batch: usize,
    seed: u64,
) -> Result<PathBatch> {
    if batch == 0 {
        return Err(Error::Config("batch must be >= 1".into()));
    }
    let (dim, p, d) = (spec.components(), spec.steps(), spec.noise_dim());
    check_dim("x0", dim, x0.len())?;
    let per_path: Vec<(Vec<f64>, Vec<SurvivalVector>, Vec<f64>)> = (0..batch)
        .into_par_iter()
        .map(|path| {
            let mut rng = rng::stream(seed, Purpose::PathShock, 0, path as u64);
            let mut states = Vec::with_capacity((p + 1) * dim);
            let mut masks = Vec::with_capacity(p + 1);
            let mut shocks = vec![0.0; p * d];
            states.extend_from_slice(x0);
            let mut mask = SurvivalVector::all_alive(dim);
            masks.push(mask);
            let mut next_state = vec![0.0; dim];
            for n in 0..p {
                let x = &states[n * dim..(n + 1) * dim];
                let next = match policy {
                    Some(rule) => rule.decide(n, x, mask),
                    None => mask,
                };
                if !next.is_submask_of(mask) {
                    return Err(Error::Contract(format!(
                        "policy returned {next} from {mask} at step {n}"
                    )));
                }
                let eps = &mut shocks[n * d..(n + 1) * d];
                spec.noise().sample(&mut rng, eps);
                spec.advance(n, x, eps, next, &mut next_state)?;
                states.extend_from_slice(&next_state);
                mask = next;
                masks.push(mask);
            }
            Ok((states, masks, shocks))
        })
        .collect::<Result<_>>()?;
    let mut out = PathBatch {
        batch,
        steps: p,
        components: dim,
        noise_dim: d,
        states: Vec::with_capacity(batch * (p + 1) * dim),
        masks: Vec::with_capacity(batch * (p + 1)),
        shocks: Vec::with_capacity(batch * p * d),
    };
    for (s, m, e) in per_path {
        out.states.extend(s);
        out.masks.extend(m);
        out.shocks.extend(e);
    }
    Ok(out)
}

/// Paths of a diffusion's Euler scheme started at its own `x0`.
pub fn simulate_diffusion_paths(
    spec: &DiffusionSpec,
    policy: Option<&dyn StoppingRule>,
    batch: usize,
    seed: u64,
) -> Result<PathBatch> {
    let x0 = spec.x0.clone();
    let problem = spec.clone().into_problem("diffusion", |_, _, _, _| 0.0, |_, _| 0.0)?;
    simulate_paths(&problem, &x0, policy, batch, seed)
}

/// Sampling law `mu_X` for training states.
#[derive(Clone, Debug, PartialEq)]
pub enum StateLaw {
    /// Uniform on `[lo, hi]^N`.
    UniformBox { lo: f64, hi: f64 },
    /// `x_k = anchor_k exp(spread z_k)`, `z_k` standard normal.
    LogNormal { anchor: Vec<f64>, spread: f64 },
    /// `x_k = u exp(spread z_k)` with a common level `u ~ U[lo, hi]`: mass
    /// concentrates around the diagonal, which a box in high dimension
    /// leaves nearly empty at its ends.
    Band { lo: f64, hi: f64, spread: f64 },
}

impl StateLaw {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            StateLaw::UniformBox { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::Config(format!(
                        "degenerate sampling box [{lo}, {hi}]"
                    )));
                }
            }
            StateLaw::LogNormal { anchor, spread } => {
                check_dim("lognormal anchor", dim, anchor.len())?;
                if !(spread.is_finite() && *spread >= 0.0) {
                    return Err(Error::Config(format!("lognormal spread {spread} invalid")));
                }
            }
            StateLaw::Band { lo, hi, spread } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::Config(format!("degenerate band levels [{lo}, {hi}]")));
                }
                if !(spread.is_finite() && *spread >= 0.0) {
                    return Err(Error::Config(format!("band spread {spread} invalid")));
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            StateLaw::UniformBox { lo, hi } => {
                for o in out.iter_mut() {
                    let u: f64 = rng.random();
                    *o = lo + (hi - lo) * u;
                }
            }
            StateLaw::LogNormal { anchor, spread } => {
                for (o, a) in out.iter_mut().zip(anchor) {
                    let z: f64 = rng.sample(StandardNormal);
                    *o = a * (spread * z).exp();
                }
            }
            StateLaw::Band { lo, hi, spread } => {
                let u: f64 = rng.random();
                let level = lo + (hi - lo) * u;
                for o in out.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *o = level * (spread * z).exp();
                }
            }
        }
    }
}

/// The sample `xi_M`: for every step `n < p` and draw `m < M`, a triple
/// `(X_n, I_n, eps_{n+1})` from `mu_X x uniform masks x mu_eps`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    pub components: usize,
    pub steps: usize,
    pub samples: usize,
    pub noise_dim: usize,
    pub seed: u64,
    pub law: StateLaw,
    states: Vec<f64>,
    masks: Vec<u32>,
    shocks: Vec<f64>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.samples * self.steps
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn state(&self, n: usize, m: usize) -> &[f64] {
        let start = (n * self.samples + m) * self.components;
        &self.states[start..start + self.components]
    }

    pub fn mask(&self, n: usize, m: usize) -> SurvivalVector {
        SurvivalVector::from_bits(self.masks[n * self.samples + m], self.components)
            .expect("masks validated on construction")
    }

    pub fn shock(&self, n: usize, m: usize) -> &[f64] {
        let start = (n * self.samples + m) * self.noise_dim;
        &self.shocks[start..start + self.noise_dim]
    }

    /// All states at step `n`, row-major `[M][N]`.
    pub fn states_at(&self, n: usize) -> &[f64] {
        let stride = self.samples * self.components;
        &self.states[n * stride..(n + 1) * stride]
    }

    pub fn matches(&self, spec: &ProblemSpec) -> bool {
        self.components == spec.components()
            && self.steps == spec.steps()
            && self.noise_dim == spec.noise_dim()
    }

    const MAGIC: &'static [u8; 4] = b"MSTS";
    const VERSION: u32 = 1;

    /// Versioned little-endian dump: header, then states, mask words, shocks.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(Self::MAGIC)?;
        w.write_all(&Self::VERSION.to_le_bytes())?;
        for v in [self.components, self.steps, self.samples, self.noise_dim] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        w.write_all(&self.seed.to_le_bytes())?;
        match &self.law {
            StateLaw::UniformBox { lo, hi } => {
                w.write_all(&[0u8])?;
                w.write_all(&lo.to_le_bytes())?;
                w.write_all(&hi.to_le_bytes())?;
            }
            StateLaw::LogNormal { anchor, spread } => {
                w.write_all(&[1u8])?;
                w.write_all(&spread.to_le_bytes())?;
                for a in anchor {
                    w.write_all(&a.to_le_bytes())?;
                }
            }
            StateLaw::Band { lo, hi, spread } => {
                w.write_all(&[2u8])?;
                for v in [lo, hi, spread] {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
        for v in &self.states {
            w.write_all(&v.to_le_bytes())?;
        }
        for m in &self.masks {
            w.write_all(&m.to_le_bytes())?;
        }
        for v in &self.shocks {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(Error::Format("not a training-set dump".into()));
        }
        let version = read_u32(&mut r)?;
        if version != Self::VERSION {
            return Err(Error::Format(format!("unsupported training-set version {version}")));
        }
        let components = read_u64(&mut r)? as usize;
        let steps = read_u64(&mut r)? as usize;
        let samples = read_u64(&mut r)? as usize;
        let noise_dim = read_u64(&mut r)? as usize;
        if components == 0 || components > SurvivalVector::MAX_COMPONENTS {
            return Err(Error::Format(format!("bad component count {components}")));
        }
        let seed = read_u64(&mut r)?;
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let law = match tag[0] {
            0 => StateLaw::UniformBox {
                lo: read_f64(&mut r)?,
                hi: read_f64(&mut r)?,
            },
            1 => {
                let spread = read_f64(&mut r)?;
                let anchor = (0..components).map(|_| read_f64(&mut r)).collect::<Result<_>>()?;
                StateLaw::LogNormal { anchor, spread }
            }
            2 => StateLaw::Band {
                lo: read_f64(&mut r)?,
                hi: read_f64(&mut r)?,
                spread: read_f64(&mut r)?,
            },
            t => return Err(Error::Format(format!("unknown state-law tag {t}"))),
        };
        let rows = steps
            .checked_mul(samples)
            .ok_or_else(|| Error::Format("size overflow".into()))?;
        let states = (0..rows * components)
            .map(|_| read_f64(&mut r))
            .collect::<Result<_>>()?;
        let masks: Vec<u32> = (0..rows).map(|_| read_u32(&mut r)).collect::<Result<_>>()?;
        if let Some(bad) = masks
            .iter()
            .find(|&&m| SurvivalVector::from_bits(m, components).is_err())
        {
            return Err(Error::Format(format!("mask word {bad:#x} out of range")));
        }
        let shocks = (0..rows * noise_dim)
            .map(|_| read_f64(&mut r))
            .collect::<Result<_>>()?;
        Ok(Self {
            components,
            steps,
            samples,
            noise_dim,
            seed,
            law,
            states,
            masks,
            shocks,
        })
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

/// Draws `M * p` independent triples. Each `(n, m)` has its own stream, so
/// the result does not depend on the thread count.
pub fn draw_training_set(
    spec: &ProblemSpec,
    samples: usize,
    law: &StateLaw,
    seed: u64,
) -> Result<TrainingSet> {
    if samples == 0 {
        return Err(Error::Config("training sample size M must be >= 1".into()));
    }
    let (dim, p, d) = (spec.components(), spec.steps(), spec.noise_dim());
    law.validate(dim)?;
    let rows: Vec<(Vec<f64>, u32, Vec<f64>)> = (0..p * samples)
        .into_par_iter()
        .map(|row| {
            let (n, m) = (row / samples, row % samples);
            let mut rng = rng::stream(seed, Purpose::TrainingState, n as u64, m as u64);
            let mut x = vec![0.0; dim];
            law.sample(&mut rng, &mut x);
            let mask: u32 = if dim == 32 {
                rng.random()
            } else {
                rng.random_range(0..1u32 << dim)
            };
            let mut eps = vec![0.0; d];
            spec.noise().sample(&mut rng, &mut eps);
            (x, mask, eps)
        })
        .collect();
    let mut set = TrainingSet {
        components: dim,
        steps: p,
        samples,
        noise_dim: d,
        seed,
        law: law.clone(),
        states: Vec::with_capacity(p * samples * dim),
        masks: Vec::with_capacity(p * samples),
        shocks: Vec::with_capacity(p * samples * d),
    };
    for (x, mask, eps) in rows {
        set.states.extend(x);
        set.masks.push(mask);
        set.shocks.extend(eps);
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{make_log_utility_problem, GbmMarket};

    fn still() -> DiffusionSpec {
        DiffusionSpec::new(
            1.0,
            4,
            vec![1.0, 2.0],
            |_, _, out| out.fill(0.0),
            |_, _, out| out.fill(0.0),
            |_, _| 0.0,
        )
        .unwrap()
    }

    #[test]
    fn zero_coefficients_give_zero_increment() {
        let f = euler_transition(&still(), 2, &[1.0, 2.0], &[0.3, -1.0, 2.0]).unwrap();
        assert_eq!(f, vec![0.0, 0.0]);
    }

    #[test]
    fn gbm_increment_by_substitution() {
        let spec = DiffusionSpec::gbm(&[0.0], &[0.2], 1.0, 7, &[100.0]).unwrap();
        let f = euler_transition(&spec, 0, &[100.0], &[0.0, 0.1]).unwrap();
        assert!((f[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn common_noise_shifts_every_component() {
        let spec = DiffusionSpec::new(
            1.0,
            1,
            vec![0.0, 0.0],
            |_, _, out| out.fill(0.0),
            |_, _, out| out.fill(0.0),
            |_, _| 0.5,
        )
        .unwrap();
        let f = euler_transition(&spec, 0, &[0.0, 0.0], &[2.0, 0.0, 0.0]).unwrap();
        assert_eq!(f, vec![1.0, 1.0]);
    }

    #[test]
    fn non_finite_coefficient_is_reported() {
        let spec = DiffusionSpec::new(
            1.0,
            1,
            vec![0.0],
            |_, _, out| out.fill(f64::NAN),
            |_, _, out| out.fill(0.0),
            |_, _| 0.0,
        )
        .unwrap();
        assert!(matches!(
            euler_transition(&spec, 0, &[0.0], &[0.0, 0.0]),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn zero_mask_freezes_state() {
        let spec = make_log_utility_problem(&GbmMarket::uniform(3, -0.1, 0.3, 1.0, 4, 1.0)).unwrap();
        let x = [0.7, 1.1, 2.5];
        let mut out = [0.0; 3];
        spec.advance(1, &x, &[1.0, -2.0, 3.0, 0.5], SurvivalVector::all_stopped(3), &mut out)
            .unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn noise_free_path_is_deterministic_recursion() {
        let mu = 0.07;
        let spec = DiffusionSpec::new(
            2.0,
            10,
            vec![3.0],
            move |_, x, out| out[0] = mu * x[0],
            |_, _, out| out.fill(0.0),
            |_, _| 0.0,
        )
        .unwrap();
        let h = spec.step_size();
        let paths = simulate_diffusion_paths(&spec, None, 3, 11).unwrap();
        for path in 0..3 {
            let mut expected = 3.0;
            for n in 0..=10 {
                assert!((paths.state(path, n)[0] - expected).abs() <= 1e-15 * expected);
                expected *= 1.0 + mu * h;
            }
        }
    }

    #[test]
    fn stop_all_at_start_freezes_everything() {
        let spec = DiffusionSpec::gbm(&[0.1, 0.0], &[0.3, 0.2], 1.0, 5, &[1.0, 2.0]).unwrap();
        let rule = |_: usize, _: &[f64], i: SurvivalVector| SurvivalVector::all_stopped(i.len());
        let paths = simulate_diffusion_paths(&spec, Some(&rule), 20, 3).unwrap();
        paths.check_freezing().unwrap();
        for path in 0..20 {
            for n in 0..=5 {
                assert_eq!(paths.state(path, n), &[1.0, 2.0]);
            }
        }
    }

    #[test]
    fn reviving_policy_is_a_contract_violation() {
        let spec = DiffusionSpec::gbm(&[0.0], &[0.2], 1.0, 3, &[1.0]).unwrap();
        let rule = |n: usize, _: &[f64], i: SurvivalVector| {
            if n == 0 {
                SurvivalVector::all_stopped(i.len())
            } else {
                SurvivalVector::all_alive(i.len())
            }
        };
        assert!(matches!(
            simulate_diffusion_paths(&spec, Some(&rule), 2, 1),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn training_set_cardinality_and_determinism() {
        let spec = make_log_utility_problem(&GbmMarket::uniform(2, 0.0, 0.2, 1.0, 3, 1.0)).unwrap();
        let law = StateLaw::UniformBox { lo: 0.5, hi: 1.5 };
        let a = draw_training_set(&spec, 4, &law, 9).unwrap();
        assert_eq!(a.len(), 12);
        let b = draw_training_set(&spec, 4, &law, 9).unwrap();
        let (mut ba, mut bb) = (Vec::new(), Vec::new());
        a.write_to(&mut ba).unwrap();
        b.write_to(&mut bb).unwrap();
        assert_eq!(ba, bb);
        let c = draw_training_set(&spec, 4, &law, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn degenerate_box_is_rejected() {
        let spec = make_log_utility_problem(&GbmMarket::uniform(2, 0.0, 0.2, 1.0, 3, 1.0)).unwrap();
        let law = StateLaw::UniformBox { lo: 1.0, hi: 1.0 };
        assert!(matches!(draw_training_set(&spec, 4, &law, 9), Err(Error::Config(_))));
    }

    #[test]
    fn dump_round_trip() {
        let spec = make_log_utility_problem(&GbmMarket::uniform(3, 0.0, 0.2, 1.0, 2, 1.0)).unwrap();
        let law = StateLaw::LogNormal {
            anchor: vec![1.0, 2.0, 3.0],
            spread: 0.3,
        };
        let set = draw_training_set(&spec, 17, &law, 5).unwrap();
        let mut buf = Vec::new();
        set.write_to(&mut buf).unwrap();
        let back = TrainingSet::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, set);
        buf[0] = b'X';
        assert!(TrainingSet::read_from(buf.as_slice()).is_err());
    }
}
