//! Invariants checked over randomly generated inputs.

use committor::gl_validation::summarize;
use committor::io::{read_samples, write_samples};
use committor::net::{ArchConfig, CommittorModel, SingularitySpec};
use committor::potentials::{GLMinimizers, Membership, PotentialSpec, RegionSpec, RuggedMullerParams, Which};
use committor::reference::relative_error_values;
use committor::sde::{Indicator, TransitionSample};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn specs() -> Vec<PotentialSpec> {
    vec![
        PotentialSpec::double_well(4).unwrap(),
        PotentialSpec::rugged_muller(4, RuggedMullerParams::default()).unwrap(),
        PotentialSpec::ginzburg_landau(0.03, 0.2).unwrap(),
    ]
}

fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.2f64..1.2, d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn potential_gradients_match_differences(x in point(4)) {
        for spec in specs() {
            let g = spec.grad(&x).unwrap();
            let h = 1e-6;
            for i in 0..4 {
                let mut y = x.clone();
                y[i] += h;
                let up = spec.energy(&y).unwrap();
                y[i] -= 2.0 * h;
                let dn = spec.energy(&y).unwrap();
                let fd = (up - dn) / (2.0 * h);
                let scale = g.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                prop_assert!((fd - g[i]).abs() <= 1e-6 * scale, "{:?} coord {}: {} vs {}", spec.kind, i, fd, g[i]);
            }
        }
    }

    #[test]
    fn ginzburg_landau_is_even(x in point(4)) {
        let spec = PotentialSpec::ginzburg_landau(0.03, 0.2).unwrap();
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        prop_assert_eq!(spec.energy(&x).unwrap(), spec.energy(&neg).unwrap());
    }

    #[test]
    fn forward_is_pure_and_theta_round_trips(seed in any::<u64>(), x in point(3)) {
        let arch = ArchConfig {
            dim: 3,
            hidden_0: vec![6, 5],
            hidden_side: vec![4],
            sing_a: SingularitySpec::power_law(3, vec![-1.0, 0.0, 0.0]).unwrap(),
            sing_b: SingularitySpec::log2d([0, 2], vec![1.0, 0.0, 0.0]).unwrap(),
        };
        let model = CommittorModel::init(&arch, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let a = model.forward(&x).unwrap();
        prop_assert_eq!(a.to_bits(), model.forward(&x).unwrap().to_bits());
        let mut copy = CommittorModel::zeros(&arch).unwrap();
        copy.set_theta(&model.theta()).unwrap();
        prop_assert_eq!(&copy, &model);
    }

    #[test]
    fn relative_error_permutes_and_scales(
        exact in prop::collection::vec(0.05f64..1.0, 2..40),
        noise in prop::collection::vec(-0.2f64..0.2, 40),
        alpha in -3.0f64..3.0,
        rot in 0usize..40,
    ) {
        let approx: Vec<f64> = exact.iter().zip(&noise).map(|(e, n)| e + n).collect();
        let e = relative_error_values(&approx, &exact).unwrap();
        let k = rot % exact.len();
        let (mut ra, mut re) = (approx.clone(), exact.clone());
        ra.rotate_left(k);
        re.rotate_left(k);
        prop_assert!((relative_error_values(&ra, &re).unwrap() - e).abs() <= 1e-12 * (1.0 + e));
        let scaled: Vec<f64> = exact.iter().zip(&approx).map(|(q, a)| q + alpha * (a - q)).collect();
        let es = relative_error_values(&scaled, &exact).unwrap();
        prop_assert!((es - alpha.abs() * e).abs() <= 1e-10 * (1.0 + e));
    }

    #[test]
    fn summaries_ignore_state_order(
        hits in prop::collection::vec(0usize..=100, 3..60),
        rot in 0usize..60,
    ) {
        let f: Vec<f64> = hits.iter().map(|&h| h as f64 / 100.0).collect();
        let mut g = f.clone();
        g.rotate_left(rot % f.len());
        g.reverse();
        let (a, b) = (summarize(&f, 100), summarize(&g, 100));
        prop_assert!((a.mean - b.mean).abs() < 1e-12);
        prop_assert!((a.variance - b.variance).abs() < 1e-12);
        prop_assert_eq!(a.ks_statistic, b.ks_statistic);
        prop_assert!((0.0..=1.0).contains(&a.ks_p_value));
    }

    #[test]
    fn sample_cache_round_trips(
        rows in prop::collection::vec((point(3), point(3), 0u8..3), 0..20),
    ) {
        let samples: Vec<TransitionSample> = rows
            .into_iter()
            .map(|(x, x_delta, c)| TransitionSample { x, x_delta, indicator: Indicator::from_code(c).unwrap() })
            .collect();
        let mut buf = Vec::new();
        write_samples(&mut buf, &samples, 3).unwrap();
        prop_assert_eq!(read_samples(buf.as_slice()).unwrap(), (3, samples));
    }

    #[test]
    fn boundary_samples_never_land_in_the_other_set(seed in any::<u64>()) {
        let spec = PotentialSpec::ginzburg_landau(0.03, 0.1).unwrap();
        let mins = GLMinimizers::compute(&spec, 1e-10).unwrap();
        let regions = [
            RegionSpec::double_well(5, 0.5).unwrap(),
            RegionSpec::rugged_muller(5, 22.0, 0.05).unwrap(),
            RegionSpec::ginzburg_landau(&mins, 2.0).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for r in &regions {
            prop_assert_eq!(r.classify(r.center(Which::A)).unwrap(), Membership::InA);
            prop_assert_eq!(r.classify(r.center(Which::B)).unwrap(), Membership::InB);
            for p in r.sample_boundary(Which::A, 50, &mut rng) {
                prop_assert_ne!(r.classify(&p).unwrap(), Membership::InB);
            }
            for p in r.sample_boundary(Which::B, 50, &mut rng) {
                prop_assert_ne!(r.classify(&p).unwrap(), Membership::InA);
            }
        }
    }
}
