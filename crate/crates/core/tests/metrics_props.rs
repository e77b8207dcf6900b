mod support;

use lobfactor_core::metrics::{
    build_tail_cloud, default_k, hill_index, mean_ot, ot_distance, pairwise_mean_ot, standardize,
    subsample, tail_log_ratios, PointCloud,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::ot_oracle::exhaustive_ot;

fn cloud(xs: &[f64]) -> PointCloud {
    PointCloud::one_dimensional(xs.to_vec(), "t").unwrap()
}

fn rows(xs: &[f64]) -> Vec<Vec<f64>> {
    xs.iter().map(|x| vec![*x]).collect()
}

#[test]
fn oracle_agrees_on_hand_instance() {
    let expect = 1.0 / 12.0;
    assert!((exhaustive_ot(&rows(&[0.0, 1.0]), &rows(&[0.0, 0.5, 1.0])) - expect).abs() < 1e-12);
    assert!(
        (ot_distance(&cloud(&[0.0, 1.0]), &cloud(&[0.0, 0.5, 1.0])).unwrap() - expect).abs()
            < 1e-12
    );
}

#[test]
fn oracle_handles_largest_instances() {
    let a = [0.9, 0.1, 0.5, 0.3, 0.7, 0.2];
    let b = [0.15, 0.8, 0.35, 0.6, 0.05, 0.95];
    let fast = ot_distance(&cloud(&a), &cloud(&b)).unwrap();
    assert!((fast - exhaustive_ot(&rows(&a), &rows(&b))).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn sorted_coupling_matches_exhaustive_oracle(
        a in prop::collection::vec(0.0f64..1.0, 1..=6),
        b in prop::collection::vec(0.0f64..1.0, 1..=6),
    ) {
        let fast = ot_distance(&cloud(&a), &cloud(&b)).unwrap();
        let exact = exhaustive_ot(&rows(&a), &rows(&b));
        prop_assert!((fast - exact).abs() <= 1e-9, "fast {fast} exact {exact}");
        let back = ot_distance(&cloud(&b), &cloud(&a)).unwrap();
        prop_assert!((fast - back).abs() <= 1e-12);
        prop_assert!(fast >= 0.0);
    }

    #[test]
    fn identity_and_permutation_give_zero(a in prop::collection::vec(-5.0f64..5.0, 1..40)) {
        prop_assert!(ot_distance(&cloud(&a), &cloud(&a)).unwrap().abs() <= 1e-12);
        let mut rev = a.clone();
        rev.reverse();
        prop_assert!(ot_distance(&cloud(&a), &cloud(&rev)).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn equal_size_translation_costs_c_squared(
        a in prop::collection::vec(-10i32..10, 1..30),
        c in -8i32..8,
    ) {
        // dyadic coordinates keep every difference exact
        let xs: Vec<f64> = a.iter().map(|v| *v as f64 * 0.25).collect();
        let shift = c as f64 * 0.5;
        let ys: Vec<f64> = xs.iter().map(|x| x + shift).collect();
        prop_assert_eq!(ot_distance(&cloud(&xs), &cloud(&ys)).unwrap(), shift * shift);
    }

    #[test]
    fn tail_cloud_and_hill_are_scale_invariant(
        xs in prop::collection::vec(0.001f64..100.0, 25..200),
        c in prop::sample::select(vec![0.5, 2.0, 4.0, 0.125]),
    ) {
        let k = default_k(xs.len());
        let scaled: Vec<f64> = xs.iter().map(|x| x * c).collect();
        let r1 = tail_log_ratios(&xs, k).unwrap();
        let r2 = tail_log_ratios(&scaled, k).unwrap();
        for (p, q) in r1.iter().zip(&r2) {
            prop_assert!((p - q).abs() < 1e-12);
        }
        if let (Ok(h1), Ok(h2)) = (hill_index(&xs, k), hill_index(&scaled, k)) {
            prop_assert!((h1.hill - h2.hill).abs() < 1e-9 * h1.hill.max(1.0));
        }
    }

    #[test]
    fn tail_log_ratios_match_sort_oracle(xs in prop::collection::vec(0.01f64..50.0, 2..100), kf in 0.0f64..1.0) {
        let k = 1 + ((xs.len() - 1) as f64 * kf) as usize % (xs.len() - 1);
        let mut sorted = xs.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let expect: Vec<f64> = (0..k).map(|i| (sorted[i] / sorted[k]).ln()).collect();
        let got = tail_log_ratios(&xs, k).unwrap();
        prop_assert_eq!(got.len(), k);
        for (g, e) in got.iter().zip(&expect) {
            prop_assert!((g - e).abs() < 1e-12);
        }
        prop_assert!(got.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(got.iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn standardize_gives_unit_moments(xs in prop::collection::vec(-1e3f64..1e3, 2..200)) {
        prop_assume!(xs.iter().any(|x| (x - xs[0]).abs() > 1e-6));
        let z = standardize(&xs).unwrap();
        let n = z.len() as f64;
        let m = z.iter().sum::<f64>() / n;
        let sd = (z.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt();
        prop_assert!(m.abs() < 1e-12);
        prop_assert!((sd - 1.0).abs() < 1e-12);
    }
}

#[test]
fn hill_recovers_exact_pareto_tails() {
    for zeta in [2.0f64, 3.0, 4.0] {
        let n = 100_000;
        // exact quantiles (1 - u)^(-1/zeta) on a midpoint grid
        let xs: Vec<f64> = (0..n)
            .map(|i| (1.0 - (i as f64 + 0.5) / n as f64).powf(-1.0 / zeta))
            .collect();
        let h = hill_index(&xs, default_k(n)).unwrap();
        assert_eq!(h.k_used, 5_000);
        assert!((h.hill - zeta).abs() < 0.15, "zeta {zeta} hill {}", h.hill);
    }
}

#[test]
fn shift_changes_tail_cloud() {
    let xs = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
    let shifted: Vec<f64> = xs.iter().map(|x| x + 5.0).collect();
    let a = build_tail_cloud(&xs, 3, "a").unwrap();
    let b = build_tail_cloud(&shifted, 3, "b").unwrap();
    assert!(ot_distance(&a, &b).unwrap() > 1e-3);
}

#[test]
fn mean_ot_matches_loop_oracle_on_pareto_references() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pareto = |rng: &mut ChaCha8Rng, zeta: f64| -> Vec<f64> {
        use rand::Rng;
        (0..3_000)
            .map(|_| (1.0 - rng.random::<f64>()).powf(-1.0 / zeta))
            .collect()
    };
    let refs: Vec<PointCloud> = (0..18)
        .map(|m| build_tail_cloud(&pareto(&mut rng, 3.0), 150, &format!("r{m}")).unwrap())
        .collect();
    let syn = build_tail_cloud(&pareto(&mut rng, 4.0), 150, "s").unwrap();
    let got = mean_ot(&syn, &refs).unwrap();
    let oracle: f64 = refs
        .iter()
        .map(|r| ot_distance(&syn, r).unwrap())
        .sum::<f64>()
        / 18.0;
    assert!((got.mean - oracle).abs() < 1e-15);
    assert_eq!(mean_ot(&syn, std::slice::from_ref(&syn)).unwrap().mean, 0.0);

    let pair = pairwise_mean_ot(&refs).unwrap();
    let mut all = Vec::new();
    for i in 0..refs.len() {
        for j in 0..refs.len() {
            if i != j {
                all.push(ot_distance(&refs[i], &refs[j]).unwrap());
            }
        }
    }
    let expect = all.iter().sum::<f64>() / all.len() as f64;
    assert!((pair.mean - expect).abs() < 1e-12);
}

#[test]
fn subsample_inclusion_is_uniform() {
    let base = cloud(&[1.0, 2.0, 3.0, 4.0, 5.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let reps = 100_000;
    let mut hits = [0usize; 5];
    for _ in 0..reps {
        let s = subsample(&base, 2, &mut rng).unwrap();
        for p in &s.points {
            hits[*p as usize - 1] += 1;
        }
    }
    for h in hits {
        let rate = h as f64 / reps as f64;
        assert!((rate - 0.4).abs() < 0.01, "rate {rate}");
    }
    let full = subsample(&base, 5, &mut rng).unwrap();
    assert_eq!(full.points, base.points);
}
