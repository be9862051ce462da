mod common;

use proptest::prelude::*;
use rand::Rng;
use trustphys::dataset::resample_majority;
use trustphys::eda;
use trustphys::explain;
use trustphys::gaze::{self, GazeConfig};
use trustphys::models::{gbdt::FORMAT_VERSION, schema_hash, Hyperparameters, TreeEnsemble};
use trustphys::synth::{latent_trust, Event, EventKind, TrustDynamics};

fn single_tree(tree: trustphys::models::Tree, m: usize) -> TreeEnsemble {
    let names: Vec<String> = (0..m).map(|j| format!("f{j}")).collect();
    TreeEnsemble {
        format_version: FORMAT_VERSION,
        schema_hash: schema_hash(&names),
        feature_names: names,
        base_margin: 0.0,
        eta: 1.0,
        hyperparameters: Hyperparameters::default(),
        trees: vec![tree],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fixations_match_brute_force(seed in any::<u64>(), threshold in 0.005f64..0.2, min_dur in 0.05f64..0.5) {
        let mut r = common::rng(seed);
        let points = common::gaze_trace(&mut r, 150);
        let rate = 60.0;
        let times: Vec<f64> = (0..points.len()).map(|i| i as f64 / rate).collect();
        let got: Vec<(usize, usize)> = gaze::detect_fixations(&times, &points, 1.0 / rate, threshold, min_dur)
            .iter()
            .map(|f| (f.first_sample, f.samples))
            .collect();
        prop_assert_eq!(got, common::idt_oracle(&points, rate, threshold, min_dur));
    }

    #[test]
    fn fixations_respect_limits(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let points = common::gaze_trace(&mut r, 200);
        let cfg = GazeConfig::default();
        let times: Vec<f64> = (0..points.len()).map(|i| i as f64 / 30.0).collect();
        let fix = gaze::detect_fixations(&times, &points, 1.0 / 30.0, cfg.dispersion_threshold, cfg.min_duration_s);
        for w in fix.windows(2) {
            prop_assert!(w[0].first_sample + w[0].samples <= w[1].first_sample);
        }
        for f in &fix {
            prop_assert!(f.dispersion <= cfg.dispersion_threshold);
            prop_assert!(f.end - f.start >= cfg.min_duration_s - 1e-9);
        }
    }

    #[test]
    fn shapley_values_match_enumeration(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let m = r.random_range(1..=4);
        let tree = common::random_tree(&mut r, m, 4);
        let e = single_tree(tree.clone(), m);
        let x: Vec<f64> = (0..m).map(|_| if r.random_bool(0.2) { f64::NAN } else { r.random_range(-1.5..1.5) }).collect();
        let s = explain::tree_shap(&e, &x).unwrap();
        let (phi, phi0) = common::shapley_oracle(&tree, &x);
        prop_assert!((s.phi0 - phi0).abs() < 1e-9);
        for (a, b) in s.phi.iter().zip(&phi) {
            prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
        }
        prop_assert!((s.phi0 + s.phi.iter().sum::<f64>() - e.margin(&x)).abs() < 1e-9);
    }

    #[test]
    fn deconvolution_is_exact_and_nonnegative(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let rate = 16.0;
        let p = common::planted_eda(&mut r, 16 * 60, rate);
        let kernel = eda::bateman_kernel(0.75, 2.0, rate).unwrap();
        let d = eda::deconvolve_driver(&p.phasic, &kernel).unwrap();
        prop_assert!(d.driver.iter().all(|v| *v >= 0.0));
        for &(at, a) in &p.pulses {
            prop_assert!((d.driver[at] - a).abs() < 1e-6 * a.max(1.0));
        }
    }

    #[test]
    fn trust_stays_in_range(kinds in prop::collection::vec(0u8..3, 0..20), t in 0.0f64..2000.0) {
        let events: Vec<Event> = kinds
            .iter()
            .enumerate()
            .map(|(k, &c)| Event {
                time: 40.0 * k as f64,
                kind: [EventKind::TrueAlarm, EventKind::FalseAlarm, EventKind::Miss][c as usize],
            })
            .collect();
        let v = latent_trust(&TrustDynamics::default(), &events, t);
        prop_assert!((0.0..=10.0).contains(&v));
    }

    #[test]
    fn resampling_keeps_minority_and_order(seed in any::<u64>(), mult in 1usize..4) {
        let m = common::separable_matrix(seed, 300);
        let (n0, n1) = m.class_counts();
        let (minority, majority) = (n0.min(n1), n0.max(n1));
        match resample_majority(&m, mult, seed) {
            Ok(out) => {
                let (a, b) = out.class_counts();
                prop_assert_eq!((a.min(b), a.max(b)), (minority, mult * minority));
                // rows are a subsequence of the input
                let mut it = m.rows.iter();
                prop_assert!(out.rows.iter().all(|r| it.any(|s| s == r)));
            }
            Err(_) => prop_assert!(mult * minority > majority),
        }
    }
}
