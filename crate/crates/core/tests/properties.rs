//! Property tests over the crate invariants.

use paramap_core::data::{split, synth, Dataset};
use paramap_core::env::{HyperparamSpec, Scale};
use paramap_core::label::{inverse_transform, transform_label};
use paramap_core::lopt::SegmentTree;
use paramap_core::nn::{clip_gradients, LayerParams, NetworkParams};
use paramap_core::sample::{compute_p0, jaccard, plan_draws, sample_independent, verify_pairwise};
use paramap_core::{env::HyperparamVector, seed};
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #[test]
    fn clipping_is_idempotent_and_bounds_the_norm(
        values in prop::collection::vec(-100.0f64..100.0, 1..40),
        clip in 0.1f64..10.0,
    ) {
        let mut grads = NetworkParams {
            layers: vec![LayerParams { weight: values, bias: vec![] }],
        };
        clip_gradients(&mut grads, clip);
        prop_assert!(grads.global_norm() <= clip + 1e-9);
        let once = grads.clone();
        clip_gradients(&mut grads, clip);
        prop_assert_eq!(&grads, &once);
    }

    #[test]
    fn jaccard_is_symmetric_and_bounded(
        a in prop::collection::btree_set(0usize..40, 1..12),
        b in prop::collection::btree_set(0usize..40, 1..12),
    ) {
        let a: Vec<usize> = a.into_iter().collect();
        let b: Vec<usize> = b.into_iter().collect();
        let ab = jaccard(&a, &b).unwrap();
        let ba = jaccard(&b, &a).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(jaccard(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn segment_tree_matches_naive_array(
        ops in prop::collection::vec((0usize..20, 0u32..4096), 1..200),
        queries in prop::collection::vec((0usize..20, 0usize..20), 1..50),
    ) {
        // Dyadic values make every sum exact in either association order.
        let mut tree = SegmentTree::new(20, 0.0);
        let mut naive = [0.0f64; 20];
        for (idx, raw) in ops {
            let val = raw as f64 / 1024.0;
            tree.update(idx, val).unwrap();
            naive[idx] = val;
        }
        for (a, b) in queries {
            let (l, r) = if a <= b { (a, b) } else { (b, a) };
            let expect: f64 = naive[l..=r].iter().sum();
            prop_assert_eq!(tree.range_sum(l, r), expect);
        }
    }

    #[test]
    fn label_transform_round_trips(
        lin in -3.0f64..5.0,
        log_exp in -2.0f64..2.0,
        count in 1.0f64..40.0,
    ) {
        let specs = vec![
            HyperparamSpec::real("lin", -3.0, 5.0, Scale::Linear),
            HyperparamSpec::real("log", 0.01, 100.0, Scale::Log10),
            HyperparamSpec::integer("count", 1.0, 40.0),
        ];
        let p = HyperparamVector::new(vec![lin, 10f64.powf(log_exp), count.round()]);
        let z = transform_label(&p, &specs).unwrap();
        prop_assert!(z.iter().all(|v| v.abs() <= 0.95));
        let back = inverse_transform(&z, &specs);
        for (orig, rec) in p.values.iter().zip(&back.values) {
            prop_assert!((orig - rec).abs() <= 1e-6 * orig.abs().max(1.0),
                "{orig} vs {rec}");
        }
    }

    #[test]
    fn split_partitions_rows(frac in 0.5f64..0.95, n in 10usize..60, s in 0u64..20) {
        let d = synth::gaussian_blobs(n, 2, 2.0, s);
        let pair = split(&d, frac, s).unwrap();
        prop_assert_eq!(pair.train.n_rows() + pair.test.n_rows(), d.n_rows());
        prop_assert!(pair.train.n_rows() >= 1 && pair.test.n_rows() >= 1);
    }
}

/// Monte-Carlo agreement for the pairwise-dissimilarity probability: the
/// closed form must sit within three standard errors of simulation.
#[test]
fn p0_agrees_with_monte_carlo() {
    let mut rng = seed::rng(2024);
    const PAIRS: usize = 100_000;
    for trial in 0..10 {
        let n = rng.gen_range(10..60);
        let s = rng.gen_range(2..=(n / 2));
        let delta = rng.gen_range(0.05..0.95);
        let exact = compute_p0(n, s, delta).unwrap();

        let mut below = 0usize;
        for _ in 0..PAIRS {
            let a = rand::seq::index::sample(&mut rng, n, s).into_vec();
            let b = rand::seq::index::sample(&mut rng, n, s).into_vec();
            if jaccard(&a, &b).unwrap() < delta {
                below += 1;
            }
        }
        let est = below as f64 / PAIRS as f64;
        let se = (est * (1.0 - est) / PAIRS as f64).sqrt();
        assert!(
            (est - exact).abs() <= 3.0 * se + 1e-9,
            "trial {trial} (n={n}, s={s}, delta={delta}): exact {exact}, mc {est}, se {se}"
        );
    }
}

/// Planning, drawing, and validating together on small random corpora.
#[test]
fn planned_sampling_meets_its_contract_end_to_end() {
    let mut rng = seed::rng(55);
    for trial in 0..10 {
        let n = rng.gen_range(30..120);
        let s = rng.gen_range(3..=8);
        let delta = rng.gen_range(0.4..0.9);
        let k = rng.gen_range(2..6);
        let plan = match plan_draws(n, s, k, delta) {
            Ok(p) => p,
            Err(e) => panic!("trial {trial} infeasible: {e}"),
        };
        // Draws are an expectation; give the greedy filter headroom.
        let mut padded = plan.clone();
        padded.draws = plan.draws * 20 + 100;
        let set = sample_independent(&padded, seed::mix(55, trial)).unwrap();
        assert!(set.subsets.len() >= k);
        assert!(verify_pairwise(&set), "trial {trial} violates the bound");
        for subset in &set.subsets {
            assert_eq!(subset.len(), s);
            assert!(subset.iter().all(|&i| i < n));
        }
    }
}
