mod common;

use proptest::prelude::*;

use common::oracle::{brute_ecdf_at, brute_percentile, sorted_ecdf};

use oran_isac::stats::{compliance_fraction, ecdf, jitter_p95, percentile, Percentiles, StatsError};

#[test]
fn uniform_median_is_near_half() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let v: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
    let p = percentile(&v, 50.0).unwrap();
    assert!((p - 0.5).abs() <= 0.02);
    assert_eq!(p, brute_percentile(&v, 50, 1));
}

#[test]
fn errors() {
    assert_eq!(percentile(&[], 1.0), Err(StatsError::EmptyInput));
    assert!(matches!(percentile(&[1.0], -0.1), Err(StatsError::BadPercentile(_))));
    assert_eq!(ecdf(&[]), Err(StatsError::EmptyInput));
    assert_eq!(jitter_p95(&[], 1.0), Err(StatsError::EmptyInput));
}

proptest! {
    #[test]
    fn percentile_matches_brute_force(
        v in proptest::collection::vec(-1e6f64..1e6, 1..2000),
        p in 0u64..=100,
    ) {
        prop_assert_eq!(percentile(&v, p as f64).unwrap(), brute_percentile(&v, p, 1));
    }

    #[test]
    fn fractional_percentiles_match(v in proptest::collection::vec(0f64..1.0, 1..500), tenths in 0u64..=1000) {
        // p = tenths / 10; compare with integer rank arithmetic.
        let p = tenths as f64 / 10.0;
        prop_assert_eq!(percentile(&v, p).unwrap(), brute_percentile(&v, tenths, 10));
    }

    #[test]
    fn ecdf_is_a_proper_step_function(v in proptest::collection::vec(0u32..50, 1..400)) {
        let v: Vec<f64> = v.into_iter().map(f64::from).collect();
        let e = ecdf(&v).unwrap();
        prop_assert_eq!(e.last().unwrap().1, 1.0);
        for w in e.windows(2) {
            prop_assert!(w[0].0 < w[1].0 && w[0].1 < w[1].1);
        }
        for (x, f) in &e {
            prop_assert!((f - brute_ecdf_at(&v, *x)).abs() < 1e-12);
        }
        prop_assert_eq!(e, sorted_ecdf(&v));
    }

    #[test]
    fn compliance_is_one_minus_ecdf_from_the_left(
        v in proptest::collection::vec(0u32..30, 1..300),
        t in 0u32..32,
    ) {
        let v: Vec<f64> = v.into_iter().map(f64::from).collect();
        let t = f64::from(t);
        // F(t-) = fraction strictly below t
        let below = ecdf(&v).unwrap().iter().filter(|(x, _)| *x < t).map(|(_, f)| *f).last().unwrap_or(0.0);
        prop_assert!((compliance_fraction(&v, t).unwrap() - below).abs() < 1e-12);
    }

    #[test]
    fn percentiles_ordered(v in proptest::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 1..500)) {
        let p = Percentiles::of(&v).unwrap();
        prop_assert!(p.p50 <= p.p95 && p.p95 <= p.p99);
    }

    #[test]
    fn periodic_stream_has_no_jitter(period in 0.5f64..200.0, n in 1usize..500) {
        prop_assert_eq!(jitter_p95(&vec![period; n], period).unwrap(), 0.0);
    }
}
