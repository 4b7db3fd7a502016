//! Stochastic gradients of the semigroup loss, its boundary penalties, the
//! gradient-squared baseline, and the Adam training loop.
//!
//! For a sample `(x, x_δ, indicator)` the semigroup gradient estimate is
//!
//! ```text
//! ∇_θ q(x) · ( q(x) − q(x_δ)·1[interior] − 1[hit B] )
//! ```
//!
//! where `q(x_δ)` is evaluated at the current parameters but not
//! differentiated. The symmetry of the killed transition operator makes this
//! an unbiased estimate of the full loss gradient.

use std::borrow::Borrow;
use std::io::Write;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::net::CommittorModel;
use crate::potentials::{PotentialSpec, RegionSpec};
use crate::sde::{propagate_with, Indicator, SdeConfig, Stepper, TransitionSample};

/// Rows per gradient shard. Shards are summed in index order, so results do
/// not depend on the number of worker threads.
const SHARD: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// The semigroup loss.
    Semigroup,
    /// The Dirichlet-energy loss `E|∇ₓq|²` with boundary penalties.
    Baseline,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Penalty coefficient `c` (semigroup) or `c̃` (baseline).
    pub penalty: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub adam_betas: (f64, f64),
    pub adam_epsilon: f64,
    pub boundary_batch: usize,
    /// Log the monitor loss and relative error every this many steps (0: only at the end).
    pub log_every: usize,
    pub method: Method,
    /// Re-propagate `x_δ` from each drawn `x` instead of reusing the cached endpoint.
    #[serde(default)]
    pub refresh_transitions: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            penalty: 0.0,
            batch_size: 1000,
            steps: 1000,
            learning_rate: 1e-3,
            adam_betas: (0.9, 0.999),
            adam_epsilon: 1e-8,
            boundary_batch: 128,
            log_every: 0,
            method: Method::Semigroup,
            refresh_transitions: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let (b1, b2) = self.adam_betas;
        if !(self.penalty >= 0.0) {
            return Err(Error::Input("penalty must be nonnegative".into()));
        }
        if self.batch_size == 0 || self.boundary_batch == 0 {
            return Err(Error::Input("batch sizes must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.adam_epsilon > 0.0) {
            return Err(Error::Input("learning rate and epsilon must be positive".into()));
        }
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return Err(Error::Input("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Adam moments and step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl OptimizerState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of `theta` in place.
pub fn adam_step(state: &mut OptimizerState, theta: &mut [f64], grad: &[f64], cfg: &TrainConfig) -> Result<()> {
    check_dim(theta.len(), grad.len())?;
    check_dim(theta.len(), state.m.len())?;
    let (b1, b2) = cfg.adam_betas;
    state.t += 1;
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for (((p, g), m), v) in theta.iter_mut().zip(grad).zip(&mut state.m).zip(&mut state.v) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_epsilon);
    }
    Ok(())
}

fn flatten<'a>(rows: impl Iterator<Item = &'a [f64]>, d: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for r in rows {
        debug_assert_eq!(r.len(), d);
        out.extend_from_slice(r);
    }
    out
}

/// Sums `f(range)` over fixed shards of `0..n`, in shard order.
fn sharded_sum<F>(n: usize, len: usize, f: F) -> Result<Vec<f64>>
where
    F: Fn(std::ops::Range<usize>) -> Result<Vec<f64>> + Sync,
{
    let shards = n.div_ceil(SHARD);
    let parts: Vec<Result<Vec<f64>>> = (0..shards)
        .into_par_iter()
        .map(|s| f(s * SHARD..((s + 1) * SHARD).min(n)))
        .collect();
    let mut total = vec![0.0; len];
    for p in parts {
        for (t, v) in total.iter_mut().zip(p?) {
            *t += v;
        }
    }
    Ok(total)
}

/// Semigroup residual `q(x) − q(x_δ)·1[interior] − 1[hit B]` for each sample,
/// together with the forward cache at the start points.
fn residuals<S: Borrow<TransitionSample>>(
    model: &CommittorModel,
    batch: &[S],
) -> Result<(crate::net::ModelCache, Vec<f64>)> {
    let d = model.dim();
    let x = flatten(batch.iter().map(|s| s.borrow().x.as_slice()), d);
    let cache = model.forward_cached(&x, batch.len())?;
    let interior: Vec<usize> = (0..batch.len())
        .filter(|&i| batch[i].borrow().indicator == Indicator::Interior)
        .collect();
    let xd = flatten(interior.iter().map(|&i| batch[i].borrow().x_delta.as_slice()), d);
    let qd = model.eval_batch(&xd, interior.len())?;
    let mut r = cache.q.clone();
    for (&i, v) in interior.iter().zip(&qd) {
        r[i] -= v;
    }
    for (i, s) in batch.iter().enumerate() {
        if s.borrow().indicator == Indicator::HitB {
            r[i] -= 1.0;
        }
    }
    Ok((cache, r))
}

/// Batch mean of `∇_θ q(x)·(q(x) − q(x_δ)·1[interior] − 1[hit B])`.
pub fn semigroup_grad<S: Borrow<TransitionSample> + Sync>(model: &CommittorModel, batch: &[S]) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::Input("semigroup_grad needs a nonempty batch".into()));
    }
    let n = batch.len();
    let scale = 1.0 / n as f64;
    sharded_sum(n, model.num_params(), |range| {
        let part = &batch[range];
        let (cache, r) = residuals(model, part)?;
        let seeds: Vec<f64> = r.iter().map(|v| v * scale).collect();
        let mut g = vec![0.0; model.num_params()];
        model.backward(&cache, &seeds, &mut g);
        Ok(g)
    })
}

/// `mean_i weight_i(q_i)·∇_θ q(x_i)` over a point list.
fn weighted_point_grad(model: &CommittorModel, points: &[impl AsRef<[f64]> + Sync], weight: impl Fn(f64) -> f64 + Sync) -> Result<Vec<f64>> {
    let n = points.len();
    let scale = 1.0 / n as f64;
    let d = model.dim();
    sharded_sum(n, model.num_params(), |range| {
        let x = flatten(points[range.clone()].iter().map(|p| p.as_ref()), d);
        let cache = model.forward_cached(&x, range.len())?;
        let seeds: Vec<f64> = cache.q.iter().map(|&q| weight(q) * scale).collect();
        let mut g = vec![0.0; model.num_params()];
        model.backward(&cache, &seeds, &mut g);
        Ok(g)
    })
}

/// `c·mean_A[q ∇_θ q] + c·mean_B[(q − 1) ∇_θ q]`: the gradient of
/// `c/2·E_A q² + c/2·E_B (q − 1)²`.
pub fn penalty_grad(
    model: &CommittorModel,
    boundary_a: &[impl AsRef<[f64]> + Sync],
    boundary_b: &[impl AsRef<[f64]> + Sync],
    c: f64,
) -> Result<Vec<f64>> {
    let mut g = vec![0.0; model.num_params()];
    if c == 0.0 {
        return Ok(g);
    }
    if boundary_a.is_empty() || boundary_b.is_empty() {
        return Err(Error::Input("penalty needs boundary points on both sides".into()));
    }
    let ga = weighted_point_grad(model, boundary_a, |q| c * q)?;
    let gb = weighted_point_grad(model, boundary_b, |q| c * (q - 1.0))?;
    for ((o, a), b) in g.iter_mut().zip(&ga).zip(&gb) {
        *o = a + b;
    }
    Ok(g)
}

/// Gradient of `E|∇ₓq|² + c̃·E_A q² + c̃·E_B (q − 1)²`.
///
/// The mixed derivative `∇_θ|∇ₓq|²` is obtained by reversing the
/// input-gradient computation.
pub fn baseline_grad(
    model: &CommittorModel,
    interior: &[impl AsRef<[f64]> + Sync],
    boundary_a: &[impl AsRef<[f64]> + Sync],
    boundary_b: &[impl AsRef<[f64]> + Sync],
    c_tilde: f64,
) -> Result<Vec<f64>> {
    if interior.is_empty() {
        return Err(Error::Input("baseline_grad needs interior points".into()));
    }
    let n = interior.len();
    let d = model.dim();
    let scale = 1.0 / n as f64;
    let mut g = sharded_sum(n, model.num_params(), |range| {
        let batch = range.len();
        let x = flatten(interior[range].iter().map(|p| p.as_ref()), d);
        let cache = model.forward_cached(&x, batch)?;
        let gx = model.input_grad_batch(&cache)?;
        let seed_grad: Vec<f64> = gx.iter().map(|v| 2.0 * v * scale).collect();
        let mut g = vec![0.0; model.num_params()];
        model.backward_full(&cache, &vec![0.0; batch], Some(&seed_grad), &mut g);
        Ok(g)
    })?;
    // c̃ q² has gradient 2c̃ q ∇q, i.e. the semigroup penalty with c = 2c̃
    let pen = penalty_grad(model, boundary_a, boundary_b, 2.0 * c_tilde)?;
    for (a, b) in g.iter_mut().zip(&pen) {
        *a += b;
    }
    Ok(g)
}

/// Empirical semigroup loss plus penalties, for logging.
///
/// ```text
/// mean[½ q(x)(q(x) − q(x_δ)·1[interior]) − q(x)·1[hit B]] + c/2·mean_A q² + c/2·mean_B (q − 1)²
/// ```
///
/// The single-sample substitution
/// inside the quadratic form makes this a monitoring statistic; its minimiser
/// is not the committor.
pub fn monitor_loss<S: Borrow<TransitionSample>>(
    model: &CommittorModel,
    batch: &[S],
    boundary_a: &[impl AsRef<[f64]>],
    boundary_b: &[impl AsRef<[f64]>],
    c: f64,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Input("monitor_loss needs a nonempty batch".into()));
    }
    let (cache, r) = residuals(model, batch)?;
    let mut total = 0.0;
    for ((q, r), s) in cache.q.iter().zip(&r).zip(batch) {
        // r already contains −1[hit B]; split it back out
        let hit_b = f64::from(u8::from(s.borrow().indicator == Indicator::HitB));
        total += 0.5 * q * (r + hit_b) - q * hit_b;
    }
    let mut loss = total / batch.len() as f64;
    if c != 0.0 {
        loss += 0.5 * c * (mean_sq(model, boundary_a, 0.0)? + mean_sq(model, boundary_b, 1.0)?);
    }
    Ok(loss)
}

fn mean_sq(model: &CommittorModel, pts: &[impl AsRef<[f64]>], shift: f64) -> Result<f64> {
    if pts.is_empty() {
        return Err(Error::Input("penalty needs boundary points on both sides".into()));
    }
    let x = flatten(pts.iter().map(|p| p.as_ref()), model.dim());
    let q = model.eval_batch(&x, pts.len())?;
    Ok(q.iter().map(|v| (v - shift) * (v - shift)).sum::<f64>() / pts.len() as f64)
}

/// The dynamics that produced a sample corpus, for re-propagating endpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct Dynamics {
    pub spec: PotentialSpec,
    pub region: RegionSpec,
    pub sde: SdeConfig,
}

/// Everything the training loop draws minibatches from.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingData {
    pub samples: Vec<TransitionSample>,
    pub boundary_a: Vec<Vec<f64>>,
    pub boundary_b: Vec<Vec<f64>>,
    pub dynamics: Option<Dynamics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub step: usize,
    pub monitor_loss: f64,
    pub relative_error: Option<f64>,
    /// Seconds spent in gradient steps so far; monitoring time is excluded.
    pub wallclock_seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricTrace {
    pub points: Vec<TracePoint>,
}

impl MetricTrace {
    pub fn final_error(&self) -> Option<f64> {
        self.points.iter().rev().find_map(|p| p.relative_error)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "step,monitor_loss,E,wallclock_seconds")?;
        for p in &self.points {
            let e = p.relative_error.map(|e| e.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{}", p.step, p.monitor_loss, e, p.wallclock_seconds)?;
        }
        Ok(())
    }
}

fn pick<'a, T, R: Rng + ?Sized>(pool: &'a [T], n: usize, rng: &mut R) -> Vec<&'a T> {
    (0..n).map(|_| &pool[rng.random_range(0..pool.len())]).collect()
}

/// Runs `cfg.steps` Adam iterations on minibatches drawn with replacement.
///
/// `error_fn`, when given, is evaluated at every logging step and at the end.
/// `on_log` sees the model after each logged step (used for checkpoints).
pub fn train<R: Rng + ?Sized>(
    model: &mut CommittorModel,
    data: &TrainingData,
    cfg: &TrainConfig,
    error_fn: Option<&(dyn Fn(&CommittorModel) -> Result<f64> + Sync)>,
    mut on_log: impl FnMut(usize, &CommittorModel) -> Result<()>,
    rng: &mut R,
) -> Result<MetricTrace> {
    cfg.validate()?;
    let mut trace = MetricTrace::default();
    if cfg.steps == 0 {
        return Ok(trace);
    }
    if data.samples.is_empty() {
        return Err(Error::Input("training needs transition samples".into()));
    }
    let use_boundary = cfg.penalty > 0.0;
    if use_boundary && (data.boundary_a.is_empty() || data.boundary_b.is_empty()) {
        return Err(Error::Input("penalised training needs boundary pools".into()));
    }
    let mut opt = OptimizerState::new(model.num_params());
    let mut theta = model.theta();
    let mut elapsed = 0.0;
    for step in 1..=cfg.steps {
        let started = Instant::now();
        let batch = pick(&data.samples, cfg.batch_size, rng);
        let refreshed: Option<Vec<TransitionSample>> = if cfg.refresh_transitions {
            let dy = data
                .dynamics
                .as_ref()
                .ok_or_else(|| Error::Input("refreshing transitions needs the sampling dynamics".into()))?;
            let mut stepper = Stepper::new(&dy.spec);
            Some(batch.iter().map(|s| propagate_with(&mut stepper, &dy.region, &s.x, &dy.sde, rng)).collect())
        } else {
            None
        };
        let batch: Vec<&TransitionSample> = match &refreshed {
            Some(v) => v.iter().collect(),
            None => batch,
        };
        let (ba, bb) = if use_boundary {
            (
                pick(&data.boundary_a, cfg.boundary_batch, rng),
                pick(&data.boundary_b, cfg.boundary_batch, rng),
            )
        } else {
            (Vec::new(), Vec::new())
        };
        let ba: Vec<&[f64]> = ba.iter().map(|v| v.as_slice()).collect();
        let bb: Vec<&[f64]> = bb.iter().map(|v| v.as_slice()).collect();
        let grad = match cfg.method {
            Method::Semigroup => {
                let mut g = semigroup_grad(model, &batch)?;
                if use_boundary {
                    let p = penalty_grad(model, &ba, &bb, cfg.penalty)?;
                    g.iter_mut().zip(&p).for_each(|(a, b)| *a += b);
                }
                g
            }
            Method::Baseline => {
                let pts: Vec<&[f64]> = batch.iter().map(|s| s.x.as_slice()).collect();
                baseline_grad(model, &pts, &ba, &bb, cfg.penalty)?
            }
        };
        adam_step(&mut opt, &mut theta, &grad, cfg)?;
        model.set_theta(&theta)?;
        elapsed += started.elapsed().as_secs_f64();

        let log_now = step == cfg.steps || (cfg.log_every > 0 && step % cfg.log_every == 0);
        if log_now {
            let monitor = monitor_loss(model, &batch, &ba, &bb, cfg.penalty)?;
            let relative_error = error_fn.map(|f| f(model)).transpose()?;
            trace.points.push(TracePoint {
                step,
                monitor_loss: monitor,
                relative_error,
                wallclock_seconds: elapsed,
            });
            on_log(step, model)?;
        }
    }
    Ok(trace)
}
