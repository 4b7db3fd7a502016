//! Euler–Maruyama simulation of overdamped Langevin dynamics
//! `dx = −∇V(x) dt + √(2/β) dW`.
//!
//! On landscapes with a [`ReflectingBox`](crate::potentials::ReflectingBox)
//! every step is mirrored back into the box.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::potentials::{Membership, PotentialSpec, RegionSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdeConfig {
    /// Inverse temperature. `f64::INFINITY` switches the noise off.
    pub beta: f64,
    pub dt_equilibrium: f64,
    pub burn_in_steps: usize,
    pub thinning_steps: usize,
    pub delta: f64,
    pub substeps: usize,
}

impl SdeConfig {
    pub fn new(temperature: f64, delta: f64) -> Self {
        Self {
            beta: 1.0 / temperature,
            dt_equilibrium: 1e-3,
            burn_in_steps: 100_000,
            thinning_steps: 10,
            delta,
            substeps: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) || !(self.dt_equilibrium > 0.0) || !(self.delta > 0.0) {
            return Err(Error::Input("beta, dt and delta must be positive".into()));
        }
        if self.substeps == 0 || self.thinning_steps == 0 {
            return Err(Error::Input("substeps and thinning must be at least 1".into()));
        }
        Ok(())
    }

    pub(crate) fn noise_scale(&self, dt: f64) -> f64 {
        (2.0 * dt / self.beta).sqrt()
    }
}

/// How the δ-propagation ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Indicator {
    /// Survived the whole interval without entering `A ∪ B`.
    Interior,
    HitA,
    HitB,
}

impl Indicator {
    pub fn code(self) -> u8 {
        match self {
            Indicator::Interior => 0,
            Indicator::HitA => 1,
            Indicator::HitB => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Indicator::Interior),
            1 => Ok(Indicator::HitA),
            2 => Ok(Indicator::HitB),
            other => Err(Error::Format(format!("unknown indicator code {other}"))),
        }
    }
}

/// One training atom: a start point, its δ-propagated endpoint and the hit indicator.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionSample {
    pub x: Vec<f64>,
    pub x_delta: Vec<f64>,
    pub indicator: Indicator,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HitOutcome {
    HitA,
    HitB,
    Timeout,
}

/// One Euler–Maruyama step with caller-supplied standard normals.
pub fn em_step(spec: &PotentialSpec, x: &[f64], dt: f64, noise: &[f64], beta: f64) -> Result<Vec<f64>> {
    check_dim(spec.dim, x.len())?;
    check_dim(spec.dim, noise.len())?;
    if !(dt > 0.0) {
        return Err(Error::Input("dt must be positive".into()));
    }
    let mut out = x.to_vec();
    let mut grad = vec![0.0; spec.dim];
    spec.grad_into(x, &mut grad);
    let scale = (2.0 * dt / beta).sqrt();
    for ((o, g), w) in out.iter_mut().zip(&grad).zip(noise) {
        *o += -g * dt + scale * w;
    }
    if let Some(domain) = &spec.domain {
        domain.reflect(&mut out);
    }
    Ok(out)
}

/// Reusable buffers for stepping one trajectory in place.
pub(crate) struct Stepper<'a> {
    spec: &'a PotentialSpec,
    grad: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub(crate) fn new(spec: &'a PotentialSpec) -> Self {
        Self {
            spec,
            grad: vec![0.0; spec.dim],
        }
    }

    /// `noise_scale` is `√(2 dt / β)`.
    #[inline]
    pub(crate) fn step<R: Rng + ?Sized>(&mut self, x: &mut [f64], dt: f64, noise_scale: f64, rng: &mut R) {
        self.spec.grad_into(x, &mut self.grad);
        if noise_scale == 0.0 {
            for (xi, g) in x.iter_mut().zip(&self.grad) {
                *xi -= g * dt;
            }
        } else {
            for (xi, g) in x.iter_mut().zip(&self.grad) {
                let w: f64 = rng.sample(StandardNormal);
                *xi += -g * dt + noise_scale * w;
            }
        }
        if let Some(domain) = &self.spec.domain {
            domain.reflect(x);
        }
    }
}

/// Starting point of an equilibrium chain: the center of `A` plus unit
/// Gaussian noise, mirrored into the domain when there is one.
pub(crate) fn chain_start<R: Rng + ?Sized>(spec: &PotentialSpec, region: &RegionSpec, rng: &mut R) -> Vec<f64> {
    let mut x: Vec<f64> = region
        .center_a
        .iter()
        .map(|c| c + rng.sample::<f64, _>(StandardNormal))
        .collect();
    if let Some(domain) = &spec.domain {
        domain.reflect(&mut x);
    }
    x
}

/// Samples from `ρ ∝ exp(−βV)` restricted to `Ω \ (A ∪ B)`.
///
/// Runs `burn_in_steps` steps of size `dt_equilibrium`, then keeps every
/// `thinning_steps`-th state that lies outside `A ∪ B`. The chain itself runs
/// through the regions freely.
pub fn equilibrium_samples<R: Rng + ?Sized>(
    spec: &PotentialSpec,
    region: &RegionSpec,
    cfg: &SdeConfig,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    check_dim(spec.dim, region.dim())?;
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return Ok(out);
    }
    let dt = cfg.dt_equilibrium;
    let scale = cfg.noise_scale(dt);
    let mut stepper = Stepper::new(spec);
    let mut x = chain_start(spec, region, rng);
    for _ in 0..cfg.burn_in_steps {
        stepper.step(&mut x, dt, scale, rng);
    }
    while out.len() < count {
        for _ in 0..cfg.thinning_steps {
            stepper.step(&mut x, dt, scale, rng);
        }
        if region.classify_unchecked(&x) == Membership::Interior {
            out.push(x.clone());
        }
    }
    Ok(out)
}

/// Propagates `x` over time `delta` in `substeps` Euler–Maruyama steps.
///
/// The first sub-step state found in `A` or `B` decides the indicator;
/// `x_delta` is always the state after the last sub-step.
pub fn propagate_delta<R: Rng + ?Sized>(
    spec: &PotentialSpec,
    region: &RegionSpec,
    x: &[f64],
    cfg: &SdeConfig,
    rng: &mut R,
) -> Result<TransitionSample> {
    check_dim(spec.dim, x.len())?;
    if region.classify(x)? != Membership::Interior {
        return Err(Error::Input("propagate_delta needs an interior start point".into()));
    }
    let mut stepper = Stepper::new(spec);
    Ok(propagate_with(&mut stepper, region, x, cfg, rng))
}

pub(crate) fn propagate_with<R: Rng + ?Sized>(
    stepper: &mut Stepper<'_>,
    region: &RegionSpec,
    x: &[f64],
    cfg: &SdeConfig,
    rng: &mut R,
) -> TransitionSample {
    let dt = cfg.delta / cfg.substeps as f64;
    let scale = cfg.noise_scale(dt);
    let mut y = x.to_vec();
    let mut visited = Vec::with_capacity(cfg.substeps);
    for _ in 0..cfg.substeps {
        stepper.step(&mut y, dt, scale, rng);
        visited.push(region.classify_unchecked(&y));
    }
    TransitionSample {
        x: x.to_vec(),
        x_delta: y,
        indicator: first_hit(visited),
    }
}

/// Indicator of a sub-step path: the first membership outside the interior wins.
fn first_hit(path: impl IntoIterator<Item = Membership>) -> Indicator {
    path.into_iter()
        .find_map(|m| match m {
            Membership::Interior => None,
            Membership::InA => Some(Indicator::HitA),
            Membership::InB => Some(Indicator::HitB),
        })
        .unwrap_or(Indicator::Interior)
}

/// Runs the chain from `x` until it enters `A` or `B`, or `max_steps` elapse.
pub fn simulate_until_hit<R: Rng + ?Sized>(
    spec: &PotentialSpec,
    region: &RegionSpec,
    x: &[f64],
    dt: f64,
    beta: f64,
    max_steps: u64,
    rng: &mut R,
) -> Result<HitOutcome> {
    check_dim(spec.dim, x.len())?;
    if region.classify(x)? != Membership::Interior {
        return Err(Error::Input("simulate_until_hit needs an interior start point".into()));
    }
    if max_steps == 0 || !(dt > 0.0) {
        return Err(Error::Input("max_steps must be >= 1 and dt positive".into()));
    }
    let scale = (2.0 * dt / beta).sqrt();
    let mut stepper = Stepper::new(spec);
    let mut y = x.to_vec();
    for _ in 0..max_steps {
        stepper.step(&mut y, dt, scale, rng);
        match region.classify_unchecked(&y) {
            Membership::Interior => {}
            Membership::InA => return Ok(HitOutcome::HitA),
            Membership::InB => return Ok(HitOutcome::HitB),
        }
    }
    Ok(HitOutcome::Timeout)
}

/// Deterministic independent stream `stream` derived from a master seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generates `count` transition samples from `chains` independent equilibrium
/// chains. Chain `c` draws from `stream_rng(seed, stream_offset + c)`, so the
/// output does not depend on how many worker threads run.
pub fn transition_samples(
    spec: &PotentialSpec,
    region: &RegionSpec,
    cfg: &SdeConfig,
    count: usize,
    chains: usize,
    seed: u64,
    stream_offset: u64,
) -> Result<Vec<TransitionSample>> {
    cfg.validate()?;
    let chains = chains.max(1).min(count.max(1));
    let per_chain: Vec<usize> = (0..chains)
        .map(|c| count / chains + usize::from(c < count % chains))
        .collect();
    let parts: Vec<Result<Vec<TransitionSample>>> = per_chain
        .par_iter()
        .enumerate()
        .map(|(c, &n)| {
            let mut rng = stream_rng(seed, stream_offset + c as u64);
            let starts = equilibrium_samples(spec, region, cfg, n, &mut rng)?;
            let mut stepper = Stepper::new(spec);
            Ok(starts
                .iter()
                .map(|x| propagate_with(&mut stepper, region, x, cfg, &mut rng))
                .collect())
        })
        .collect();
    let mut out = Vec::with_capacity(count);
    for part in parts {
        out.extend(part?);
    }
    Ok(out)
}

/// Plain equilibrium points (no propagation) from independent chains.
pub fn equilibrium_points(
    spec: &PotentialSpec,
    region: &RegionSpec,
    cfg: &SdeConfig,
    count: usize,
    chains: usize,
    seed: u64,
    stream_offset: u64,
) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let chains = chains.max(1).min(count.max(1));
    let parts: Vec<Result<Vec<Vec<f64>>>> = (0..chains)
        .into_par_iter()
        .map(|c| {
            let n = count / chains + usize::from(c < count % chains);
            let mut rng = stream_rng(seed, stream_offset + c as u64);
            equilibrium_samples(spec, region, cfg, n, &mut rng)
        })
        .collect();
    let mut out = Vec::with_capacity(count);
    for part in parts {
        out.extend(part?);
    }
    Ok(out)
}
