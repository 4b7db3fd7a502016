//! Statistical check of a committor approximation without a reference.
//!
//! States with `q_θ ≈ ½` are harvested from equilibrium chains; from each,
//! `N` trajectories are run until they hit `A` or `B`. If `q_θ` is accurate the
//! fraction of `B` hits is approximately `𝒩(½, 1/(4N))`, which is tested with
//! a one-sample Kolmogorov–Smirnov statistic.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{check_dim, Error, Result};
use crate::net::CommittorModel;
use crate::potentials::{Membership, PotentialSpec, RegionSpec};
use crate::sde::{chain_start, simulate_until_hit, stream_rng, HitOutcome, SdeConfig, Stepper};

/// Batched evaluation of a committor approximation.
pub trait Committor: Sync {
    fn committor_batch(&self, x: &[f64], batch: usize) -> Result<Vec<f64>>;
}

impl Committor for CommittorModel {
    fn committor_batch(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        self.eval_batch(x, batch)
    }
}

/// Adapts a pointwise function of the full state to [`Committor`].
pub struct Pointwise<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> Committor for Pointwise<F> {
    fn committor_batch(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        check_dim(batch * self.dim, x.len())?;
        Ok(x.chunks(self.dim.max(1)).take(batch).map(|p| (self.f)(p)).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarvestConfig {
    pub epsilon: f64,
    pub m: usize,
    /// Steps a chain must run after a harvest before it may harvest again.
    pub gap_steps: usize,
    /// Steps between committor evaluations along each chain.
    pub check_every: usize,
    pub chains: usize,
    /// Per-chain step budget after burn-in.
    pub max_steps_per_chain: usize,
}

impl Default for HarvestConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            m: 120,
            gap_steps: 1000,
            check_every: 10,
            chains: 16,
            max_steps_per_chain: 10_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsoSurfaceBatch {
    pub states: Vec<Vec<f64>>,
    pub epsilon: f64,
    pub committor: Vec<f64>,
}

/// Harvests `cfg.m` interior states with `|q − ½| < ε` from equilibrium chains.
///
/// All chains advance `check_every` steps per round; their states are then
/// scored in one batch and harvested in chain order, so the result depends
/// only on `seed`.
pub fn collect_isosurface_states(
    model: &dyn Committor,
    spec: &PotentialSpec,
    region: &RegionSpec,
    cfg: &HarvestConfig,
    sde: &SdeConfig,
    seed: u64,
) -> Result<IsoSurfaceBatch> {
    sde.validate()?;
    check_dim(spec.dim, region.dim())?;
    if !(cfg.epsilon > 0.0) || cfg.m == 0 {
        return Err(Error::Budget { found: 0, wanted: cfg.m });
    }
    if cfg.check_every == 0 || cfg.chains == 0 {
        return Err(Error::Input("check_every and chains must be positive".into()));
    }
    let d = spec.dim;
    let dt = sde.dt_equilibrium;
    let scale = sde.noise_scale(dt);

    struct Chain {
        x: Vec<f64>,
        rng: rand_chacha::ChaCha8Rng,
        cooldown: usize,
    }
    let mut chains: Vec<Chain> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c as u64);
            let mut x = chain_start(spec, region, &mut rng);
            let mut stepper = Stepper::new(spec);
            for _ in 0..sde.burn_in_steps {
                stepper.step(&mut x, dt, scale, &mut rng);
            }
            Chain { x, rng, cooldown: 0 }
        })
        .collect();

    let mut batch = IsoSurfaceBatch {
        states: Vec::with_capacity(cfg.m),
        epsilon: cfg.epsilon,
        committor: Vec::with_capacity(cfg.m),
    };
    let rounds = cfg.max_steps_per_chain / cfg.check_every;
    for _ in 0..rounds {
        chains.par_iter_mut().for_each(|ch| {
            let mut stepper = Stepper::new(spec);
            for _ in 0..cfg.check_every {
                stepper.step(&mut ch.x, dt, scale, &mut ch.rng);
            }
            ch.cooldown = ch.cooldown.saturating_sub(cfg.check_every);
        });
        let flat: Vec<f64> = chains.iter().flat_map(|c| c.x.iter().copied()).collect();
        let q = model.committor_batch(&flat, chains.len())?;
        for (ch, &qv) in chains.iter_mut().zip(&q) {
            if ch.cooldown > 0 || (qv - 0.5).abs() >= cfg.epsilon {
                continue;
            }
            if region.classify_unchecked(&ch.x) != Membership::Interior {
                continue;
            }
            batch.states.push(ch.x.clone());
            batch.committor.push(qv);
            ch.cooldown = cfg.gap_steps;
            if batch.states.len() == cfg.m {
                return Ok(batch);
            }
        }
    }
    debug_assert!(batch.states.iter().all(|s| s.len() == d));
    Err(Error::Budget {
        found: batch.states.len(),
        wanted: cfg.m,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HitStatistics {
    /// `n_j / N_j` per state, in state order.
    pub fractions: Vec<f64>,
    /// B hits per state.
    pub hits_b: Vec<usize>,
    /// Trajectories per state that terminated (`N` minus timeouts).
    pub completed: Vec<usize>,
    /// Nominal trajectories per state.
    pub n: usize,
    pub timeouts: usize,
    pub mean: f64,
    pub variance: f64,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    /// `(empirical quantile, normal quantile)`, one per state.
    pub qq: Vec<(f64, f64)>,
}

/// `𝒩(½, 1/(4N))`, the null distribution of hit fractions.
pub fn null_distribution(n: usize) -> Normal {
    Normal::new(0.5, (0.25 / n as f64).sqrt()).expect("positive variance")
}

/// Runs `n` trajectories from every state and summarises the `B` fractions.
///
/// Trajectory `r` of state `j` uses stream `j·n + r` of `seed`.
#[allow(clippy::too_many_arguments)]
pub fn hitting_test(
    batch: &IsoSurfaceBatch,
    spec: &PotentialSpec,
    region: &RegionSpec,
    n: usize,
    dt: f64,
    beta: f64,
    max_steps: u64,
    seed: u64,
) -> Result<HitStatistics> {
    if n == 0 {
        return Err(Error::Input("N must be at least 1".into()));
    }
    if batch.states.is_empty() {
        return Err(Error::Input("no states to launch from".into()));
    }
    let m = batch.states.len();
    let outcomes: Vec<HitOutcome> = (0..m * n)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(seed, t as u64);
            simulate_until_hit(spec, region, &batch.states[t / n], dt, beta, max_steps, &mut rng)
        })
        .collect::<Result<_>>()?;
    let mut hits_b = vec![0; m];
    let mut completed = vec![0; m];
    let mut timeouts = 0;
    for (t, o) in outcomes.iter().enumerate() {
        match o {
            HitOutcome::HitA => completed[t / n] += 1,
            HitOutcome::HitB => {
                completed[t / n] += 1;
                hits_b[t / n] += 1;
            }
            HitOutcome::Timeout => timeouts += 1,
        }
    }
    if let Some(j) = completed.iter().position(|&c| c == 0) {
        return Err(Error::Validation(format!("every trajectory from state {j} timed out")));
    }
    let fractions: Vec<f64> = hits_b.iter().zip(&completed).map(|(&h, &c)| h as f64 / c as f64).collect();
    let summary = summarize(&fractions, n);
    Ok(HitStatistics {
        fractions,
        hits_b,
        completed,
        n,
        timeouts,
        ..summary
    })
}

/// Moments, KS test and Q–Q pairs of `fractions` against `𝒩(½, 1/(4N))`.
pub fn summarize(fractions: &[f64], n: usize) -> HitStatistics {
    let m = fractions.len();
    let null = null_distribution(n);
    let mean = fractions.iter().sum::<f64>() / m as f64;
    let variance = if m > 1 {
        fractions.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (m - 1) as f64
    } else {
        0.0
    };
    let (ks_statistic, ks_p_value) = ks_test(fractions, |x| null.cdf(x));
    let mut sorted = fractions.to_vec();
    sorted.sort_by(f64::total_cmp);
    let qq = sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, null.inverse_cdf((i as f64 + 0.5) / m as f64)))
        .collect();
    HitStatistics {
        fractions: fractions.to_vec(),
        hits_b: Vec::new(),
        completed: Vec::new(),
        n,
        timeouts: 0,
        mean,
        variance,
        ks_statistic,
        ks_p_value,
        qq,
    }
}

/// One-sample Kolmogorov–Smirnov statistic and asymptotic p-value
/// (with Stephens' small-sample correction).
pub fn ks_test(sample: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let m = sample.len();
    if m == 0 {
        return (0.0, 1.0);
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mf = m as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / mf - f).max(f - i as f64 / mf);
    }
    let sqrt_m = mf.sqrt();
    (d, kolmogorov_survival((sqrt_m + 0.12 + 0.11 / sqrt_m) * d))
}

/// `P(K > λ)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Equal-width bins over `[0, 1]`: `(lower, upper, count, density, null density at center)`.
pub fn histogram(stats: &HitStatistics, bins: usize) -> Vec<(f64, f64, usize, f64, f64)> {
    let bins = bins.max(1);
    let width = 1.0 / bins as f64;
    let mut counts = vec![0; bins];
    for &f in &stats.fractions {
        counts[((f / width) as usize).min(bins - 1)] += 1;
    }
    let total = stats.fractions.len().max(1) as f64;
    let null = null_distribution(stats.n);
    counts
        .into_iter()
        .enumerate()
        .map(|(b, c)| {
            let lo = b as f64 * width;
            (lo, lo + width, c, c as f64 / (total * width), null.pdf(lo + 0.5 * width))
        })
        .collect()
}
