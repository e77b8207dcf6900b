use lobfactor_core::timegrid::{
    bar_trade_indices, resample_trades, scaled_path_from_counts, TransactionPath, MINUTES_PER_DAY,
};
use proptest::prelude::*;

/// `round_half_up(C_m * T / C_total)` in exact integer arithmetic.
fn oracle_indices(counts: &[u64], total_trades: usize) -> Vec<usize> {
    let c_total: u64 = counts.iter().sum();
    let mut acc = 0u128;
    counts
        .iter()
        .map(|&c| {
            acc += c as u128;
            ((2 * acc * total_trades as u128 + c_total as u128) / (2 * c_total as u128)) as usize
        })
        .collect()
}

fn path_of(points: &[(usize, u64)]) -> (Vec<u64>, TransactionPath) {
    let mut counts = vec![0u64; MINUTES_PER_DAY];
    for &(m, c) in points {
        counts[m] += c;
    }
    let path = scaled_path_from_counts(&counts).unwrap();
    (counts, path)
}

#[test]
fn ten_trade_toy_matches_hand_enumeration() {
    // half the day's transactions in minute 0, a quarter in minute 99, the rest in minute 299
    let (_, path) = path_of(&[(0, 2), (99, 1), (299, 1)]);
    let idx = bar_trade_indices(&path, 10);
    // fractions 0.5, 0.75, 1.0 → 5, round(7.5) = 8, 10
    assert_eq!(idx[0], 5);
    assert!(idx[1..99].iter().all(|&i| i == 5));
    assert!(idx[99..299].iter().all(|&i| i == 8));
    assert_eq!(idx[299], 10);

    let mids: Vec<f64> = (1..=10).map(|i| 300.0 + i as f64).collect();
    let vols = vec![1u64; 10];
    let bars = resample_trades(&mids, &vols, &path, 300.0, "toy").unwrap();
    assert_eq!(bars.mid_prices[0], 305.0);
    assert_eq!(bars.mid_prices[98], 305.0);
    assert_eq!(bars.mid_prices[99], 308.0);
    assert_eq!(bars.mid_prices[299], 310.0);
    assert_eq!(bars.volumes[0], 5.0);
    assert_eq!(bars.volumes[99], 3.0);
    assert_eq!(bars.volumes[299], 2.0);
    assert_eq!(bars.volumes.iter().sum::<f64>(), 10.0);
}

#[test]
fn late_start_uses_initial_price() {
    let (_, path) = path_of(&[(150, 3), (299, 1)]);
    let mids: Vec<f64> = (1..=10).map(|i| 300.0 + i as f64).collect();
    let bars = resample_trades(&mids, &[1; 10], &path, 299.5, "late").unwrap();
    assert!(bars.mid_prices[..150].iter().all(|p| *p == 299.5));
    // round(0.75 * 10) = 8
    assert_eq!(bars.mid_prices[150], 308.0);
    assert_eq!(bars.mid_prices[299], 310.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn indices_match_prefix_sum_oracle(
        counts in prop::collection::vec(0u64..50, MINUTES_PER_DAY),
        total in 1usize..5_000,
    ) {
        prop_assume!(counts.iter().sum::<u64>() > 0);
        let path = scaled_path_from_counts(&counts).unwrap();
        let got = bar_trade_indices(&path, total);
        prop_assert_eq!(&got, &oracle_indices(&counts, total));
        for (m, &i) in got.iter().enumerate() {
            let f = path.fractions()[m];
            prop_assert!((i as f64 / total as f64 - f).abs() <= 1.0 / total as f64);
        }
        prop_assert_eq!(got[MINUTES_PER_DAY - 1], total);
    }

    #[test]
    fn bars_are_recorded_mids_or_p0(
        counts in prop::collection::vec(0u64..20, MINUTES_PER_DAY),
        mids in prop::collection::vec(250.0f64..350.0, 1..400),
    ) {
        prop_assume!(counts.iter().sum::<u64>() > 0);
        let path = scaled_path_from_counts(&counts).unwrap();
        let vols = vec![2u64; mids.len()];
        let bars = resample_trades(&mids, &vols, &path, 300.0, "p").unwrap();
        prop_assert_eq!(bars.mid_prices.len(), MINUTES_PER_DAY);
        for p in &bars.mid_prices {
            prop_assert!(*p == 300.0 || mids.contains(p));
        }
        prop_assert_eq!(bars.volumes.iter().sum::<f64>(), 2.0 * mids.len() as f64);
    }
}
