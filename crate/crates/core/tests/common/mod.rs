#![allow(dead_code)]

pub mod oracle;
pub mod stats;

use committor::config::ExperimentConfig;

pub const DOUBLE_WELL: &str = include_str!("../../../../configs/double_well.toml");
pub const RUGGED_MULLER: &str = include_str!("../../../../configs/rugged_muller.toml");
pub const GINZBURG_LANDAU: &str = include_str!("../../../../configs/ginzburg_landau.toml");

pub fn shipped(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(text).expect("shipped config parses")
}

use committor::net::CommittorModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Worst relative mismatch of `grad_params` and `grad_input` against central
/// differences of the oracle, over `points` random states of an experiment.
pub fn autodiff_mismatch(cfg: &ExperimentConfig, points: usize, seed: u64) -> (f64, f64) {
    let exp = cfg.build().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = CommittorModel::init(&exp.arch, &mut rng).unwrap();
    let o = oracle::Oracle::new(&model);
    let theta = model.theta();
    let (ca, cb) = (&exp.region.center_a, &exp.region.center_b);
    let (mut worst_p, mut worst_x) = (0.0f64, 0.0f64);
    for _ in 0..points {
        let s: f64 = rng.random();
        let x: Vec<f64> = ca
            .iter()
            .zip(cb)
            .map(|(a, b)| (1.0 - s) * a + s * b + 0.3 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let (q, _) = o.eval(&theta, &x);
        let mq = model.forward(&x).unwrap();
        assert!((q - mq).abs() <= 1e-10 * (1.0 + q.abs()), "forward {mq} vs oracle {q}");

        let (rp, used_p) = oracle::relative_mismatch(&model.grad_params(&x).unwrap(), &oracle::fd_params(&o, &theta, &x, 1e-6));
        let (rx, used_x) = oracle::relative_mismatch(&model.grad_input(&x).unwrap(), &oracle::fd_input(&o, &theta, &x, 1e-6));
        assert!(used_p > theta.len() / 2 && used_x > 0, "too many coordinates sit on ReLU kinks");
        worst_p = worst_p.max(rp);
        worst_x = worst_x.max(rx);
    }
    (worst_p, worst_x)
}

/// Integrates `q'' = βW'(x) q'` from `x = −1` with `q = 0, q' = 1` by
/// classical RK4, then rescales so that `q(1) = 1`. The problem is linear, so
/// a single shot suffices.
pub fn shooting_profile(beta: f64, xs: &[f64], substeps: usize) -> Vec<f64> {
    let wp = |x: f64| 4.0 * x * (x * x - 1.0);
    let rhs = |x: f64, y: [f64; 2]| [y[1], beta * wp(x) * y[1]];
    let mut y = [0.0, 1.0];
    let mut out = vec![0.0];
    for w in xs.windows(2) {
        let h = (w[1] - w[0]) / substeps as f64;
        let mut x = w[0];
        for _ in 0..substeps {
            let k1 = rhs(x, y);
            let k2 = rhs(x + h / 2.0, [y[0] + h / 2.0 * k1[0], y[1] + h / 2.0 * k1[1]]);
            let k3 = rhs(x + h / 2.0, [y[0] + h / 2.0 * k2[0], y[1] + h / 2.0 * k2[1]]);
            let k4 = rhs(x + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
            for i in 0..2 {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            x += h;
        }
        out.push(y[0]);
    }
    let end = *out.last().unwrap();
    out.iter().map(|v| v / end).collect()
}
