//! Monte Carlo properties of the sampler and the gradient estimator.

mod common;

use committor::config::ExperimentConfig;
use committor::harness::{draw_samples, run_training};
use committor::net::CommittorModel;
use committor::sde::{transition_samples, Indicator};
use committor::training::Method;
use common::stats::{estimator_check, mean_se, symmetry_check};
use common::{shipped, DOUBLE_WELL, GINZBURG_LANDAU, RUGGED_MULLER};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A shipped config shrunk to test size.
fn small(text: &str, samples: usize) -> ExperimentConfig {
    let mut cfg = shipped(text);
    cfg.sde.chains = 50;
    cfg.training.samples = samples;
    cfg.training.batch_size = 500;
    cfg.training.log_every = 0;
    cfg
}

#[test]
fn estimator_matches_loss_differences_for_every_architecture() {
    for (name, text) in [("double well", DOUBLE_WELL), ("rugged Muller", RUGGED_MULLER), ("Ginzburg-Landau", GINZBURG_LANDAU)] {
        let mut cfg = small(text, 30_000);
        // a longer lag gives the estimator something to resolve; the sub-step stays as shipped
        cfg.sde.delta *= 5.0;
        cfg.sde.substeps *= 5;
        let exp = cfg.build().unwrap();
        let set = draw_samples(&cfg, &exp).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let fresh = CommittorModel::init(&exp.arch, &mut rng).unwrap();
        cfg.training.steps = 100;
        let (trained, _) = run_training(&cfg, &exp, set.clone(), Method::Semigroup, 0.0, None, |_, _| Ok(())).unwrap();
        for (stage, model) in [("init", &fresh), ("100 steps", &trained)] {
            let coords: Vec<usize> = sample(&mut rng, model.num_params(), 12).into_vec();
            for c in estimator_check(model, &set.samples, cfg.sde.chains, &coords, 1e-5) {
                assert!(c.z() <= 3.0, "{name} at {stage}: {c:?}");
            }
        }
    }
}

#[test]
fn interior_propagator_is_symmetric() {
    for text in [DOUBLE_WELL, RUGGED_MULLER] {
        let mut cfg = small(text, 100_000);
        let step = cfg.sde.delta / cfg.sde.substeps as f64;
        cfg.sde.delta = 0.01;
        cfg.sde.substeps = (0.01 / step).ceil() as usize;
        let exp = cfg.build().unwrap();
        let samples = transition_samples(&exp.spec, &exp.region, &exp.sde, 100_000, 50, 17, 0).unwrap();
        let (a, b, se) = symmetry_check(&samples, 50);
        assert!((a - b).abs() <= 3.0 * se, "{a} vs {b} (se {se})");
    }
}

#[test]
fn substep_refinement_keeps_hit_frequencies() {
    let mut cfg = small(DOUBLE_WELL, 1);
    cfg.sde.delta = 0.05;
    let freq = |m: usize| {
        let mut c = cfg.clone();
        c.sde.substeps = m;
        let exp = c.build().unwrap();
        let s = transition_samples(&exp.spec, &exp.region, &exp.sde, 40_000, 50, 23, 0).unwrap();
        [Indicator::HitA, Indicator::HitB].map(|k| s.iter().filter(|t| t.indicator == k).count() as f64 / s.len() as f64)
    };
    let (f5, f10) = (freq(5), freq(10));
    for (a, b) in f5.iter().zip(&f10) {
        let se = (a * (1.0 - a) / 40_000.0 + b * (1.0 - b) / 40_000.0).sqrt();
        // finer sub-steps catch more excursions; allow an O(δ) drift
        assert!((a - b).abs() <= 3.0 * se + 0.5 * cfg.sde.delta, "{a} vs {b}");
    }
}

#[test]
fn training_is_bitwise_reproducible() {
    let mut cfg = small(DOUBLE_WELL, 5_000);
    cfg.training.steps = 50;
    cfg.training.log_every = 10;
    let exp = cfg.build().unwrap();
    let set = draw_samples(&cfg, &exp).unwrap();
    let run = || run_training(&cfg, &exp, set.clone(), Method::Semigroup, exp.train.penalty, None, |_, _| Ok(())).unwrap();
    let (m1, t1) = run();
    let (m2, t2) = run();
    assert_eq!(m1.theta(), m2.theta());
    let strip = |t: &committor::training::MetricTrace| t.points.iter().map(|p| (p.step, p.monitor_loss.to_bits())).collect::<Vec<_>>();
    assert_eq!(strip(&t1), strip(&t2));
}

#[test]
fn batch_size_at_fixed_budget_is_within_seed_noise() {
    let reference = committor::reference::solve_double_well_1d(2.0, 2001).unwrap();
    let final_errors = |batch: usize, steps: usize| -> Vec<f64> {
        (0..5u64)
            .map(|seed| {
                let mut cfg = small(DOUBLE_WELL, 20_000);
                cfg.seed = 100 + seed;
                cfg.training.batch_size = batch;
                cfg.training.steps = steps;
                cfg.training.learning_rate = 1e-3;
                let exp = cfg.build().unwrap();
                let set = draw_samples(&cfg, &exp).unwrap();
                let val = committor::harness::validation_points(&{
                    let mut v = cfg.clone();
                    v.evaluation.validation_samples = 5_000;
                    v
                }, &exp)
                .unwrap();
                let (m, _) = run_training(&cfg, &exp, set, Method::Semigroup, exp.train.penalty, None, |_, _| Ok(())).unwrap();
                committor::reference::relative_error(&m, &reference, &val).unwrap()
            })
            .collect()
    };
    let (small_b, big_b) = (final_errors(250, 2000), final_errors(500, 1000));
    let (ms, ss) = mean_se(&small_b);
    let (mb, sb) = mean_se(&big_b);
    assert!((ms - mb).abs() <= 3.0 * (ss * ss + sb * sb).sqrt(), "{small_b:?} vs {big_b:?}");
}
