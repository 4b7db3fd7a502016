//! Monte Carlo oracles for the estimator and the symmetry of `P^i`.

use committor::net::CommittorModel;
use committor::sde::{Indicator, TransitionSample};
use committor::training::semigroup_grad;

/// Mean and standard error of a sample.
pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Mean and standard error when `v` holds `chains` independent runs stored
/// back to back (split as `transition_samples` splits them). Within-chain
/// correlation is absorbed by working with the chain means.
pub fn chain_mean_se(v: &[f64], chains: usize) -> (f64, f64) {
    let n = v.len();
    let chains = chains.clamp(2, n);
    let mut means = Vec::with_capacity(chains);
    let mut start = 0;
    for c in 0..chains {
        let len = n / chains + usize::from(c < n % chains);
        means.push(v[start..start + len].iter().sum::<f64>() / len as f64);
        start += len;
    }
    let (_, se) = mean_se(&means);
    (v.iter().sum::<f64>() / n as f64, se)
}

fn flat(samples: &[TransitionSample], end: bool) -> Vec<f64> {
    samples
        .iter()
        .flat_map(|s| if end { s.x_delta.iter() } else { s.x.iter() })
        .copied()
        .collect()
}

/// Per-sample empirical loss `½q(x)(q(x) − q(x_δ)1_int) − q(x)1_B`.
fn per_sample_loss(model: &CommittorModel, x: &[f64], xd: &[f64], samples: &[TransitionSample]) -> Vec<f64> {
    let n = samples.len();
    let q = model.eval_batch(x, n).unwrap();
    let qd = model.eval_batch(xd, n).unwrap();
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let int = if s.indicator == Indicator::Interior { 1.0 } else { 0.0 };
            let hit_b = if s.indicator == Indicator::HitB { 1.0 } else { 0.0 };
            0.5 * q[i] * (q[i] - qd[i] * int) - q[i] * hit_b
        })
        .collect()
}

/// One coordinate of the estimator check.
#[derive(Debug)]
pub struct CoordCheck {
    pub coord: usize,
    pub estimator: f64,
    pub finite_difference: f64,
    pub combined_se: f64,
}

impl CoordCheck {
    pub fn z(&self) -> f64 {
        (self.estimator - self.finite_difference).abs() / self.combined_se.max(1e-300)
    }
}

/// Compares `semigroup_grad` over all samples with central differences in
/// `θ` of the empirical loss on the same samples, for each coordinate listed.
pub fn estimator_check(model: &CommittorModel, samples: &[TransitionSample], chains: usize, coords: &[usize], h: f64) -> Vec<CoordCheck> {
    let n = samples.len();
    let sg = semigroup_grad(model, samples).unwrap();
    let x = flat(samples, false);
    let xd = flat(samples, true);
    let q = model.eval_batch(&x, n).unwrap();
    let qd = model.eval_batch(&xd, n).unwrap();
    let d = model.dim();
    // per-sample estimator terms, for the standard errors
    let mut terms = vec![Vec::with_capacity(n); coords.len()];
    for (i, s) in samples.iter().enumerate() {
        let int = if s.indicator == Indicator::Interior { 1.0 } else { 0.0 };
        let hit_b = if s.indicator == Indicator::HitB { 1.0 } else { 0.0 };
        let r = q[i] - qd[i] * int - hit_b;
        let g = model.grad_params(&x[i * d..(i + 1) * d]).unwrap();
        for (t, &k) in terms.iter_mut().zip(coords) {
            t.push(r * g[k]);
        }
    }
    let theta = model.theta();
    let mut probe = model.clone();
    coords
        .iter()
        .zip(terms)
        .map(|(&k, t)| {
            let mut th = theta.clone();
            th[k] = theta[k] + h;
            probe.set_theta(&th).unwrap();
            let up = per_sample_loss(&probe, &x, &xd, samples);
            th[k] = theta[k] - h;
            probe.set_theta(&th).unwrap();
            let dn = per_sample_loss(&probe, &x, &xd, samples);
            let fd: Vec<f64> = up.iter().zip(&dn).map(|(a, b)| (a - b) / (2.0 * h)).collect();
            let (fd_mean, fd_se) = chain_mean_se(&fd, chains);
            let (_, sg_se) = chain_mean_se(&t, chains);
            // what a central difference can resolve at all in f64
            let rounding = up.iter().zip(&dn).map(|(a, b)| a.abs().max(b.abs())).sum::<f64>() * f64::EPSILON / (2.0 * h * n as f64);
            CoordCheck {
                coord: k,
                estimator: sg[k],
                finite_difference: fd_mean,
                combined_se: (fd_se * fd_se + sg_se * sg_se + rounding * rounding).sqrt(),
            }
        })
        .collect()
}

/// Estimates of `⟨u, P^i v⟩_ρ` and `⟨P^i u, v⟩_ρ` for `u = tanh(x1)`,
/// `v = exp(−‖x‖²/d)`, with their combined standard error.
pub fn symmetry_check(samples: &[TransitionSample], chains: usize) -> (f64, f64, f64) {
    let u = |x: &[f64]| x[0].tanh();
    let v = |x: &[f64]| (-x.iter().map(|a| a * a).sum::<f64>() / x.len() as f64).exp();
    let int = |s: &TransitionSample| if s.indicator == Indicator::Interior { 1.0 } else { 0.0 };
    let left: Vec<f64> = samples.iter().map(|s| u(&s.x) * v(&s.x_delta) * int(s)).collect();
    let right: Vec<f64> = samples.iter().map(|s| u(&s.x_delta) * v(&s.x) * int(s)).collect();
    let (a, sa) = chain_mean_se(&left, chains);
    let (b, sb) = chain_mean_se(&right, chains);
    (a, b, (sa * sa + sb * sb).sqrt())
}
