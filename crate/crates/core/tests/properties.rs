use hikma_core::presentation::largest_remainder;
use hikma_core::score::Tenths;
use hikma_core::track::{PaperId, Track};
use proptest::prelude::*;

proptest! {
    #[test]
    fn mean_matches_half_up_rounding(a in 0u32..=100, b in 0u32..=100) {
        // Both inputs in tenths; the exact mean is (a+b)/20 points.
        let m = Tenths::mean2(Tenths::from_tenths(a), Tenths::from_tenths(b)).tenths();
        let exact_twentieths = a + b;
        prop_assert!(2 * m >= exact_twentieths && 2 * m <= exact_twentieths + 1);
    }

    #[test]
    fn rounded_division_is_within_half_a_tenth(t in 0u32..100_000, n in 1u32..50) {
        let q = Tenths::from_tenths(t).div_rounded(n).tenths();
        // |q*n - t| <= n/2, ties going up.
        let (qn, t2) = (2 * u64::from(q) * u64::from(n), 2 * u64::from(t));
        prop_assert!(qn + u64::from(n) > t2 && qn <= t2 + u64::from(n));
    }

    #[test]
    fn decimal_text_round_trips(t in 0u32..1_000_000) {
        let v = Tenths::from_tenths(t);
        prop_assert_eq!(v.to_string().parse::<Tenths>().unwrap(), v);
    }

    #[test]
    fn largest_remainder_conserves_the_total(total in 0u64..1_000_000, weights in prop::collection::vec(0u64..10_000, 1..12)) {
        let parts = largest_remainder(total, &weights);
        prop_assert_eq!(parts.len(), weights.len());
        prop_assert_eq!(parts.iter().sum::<u64>(), total);
        let w: u64 = weights.iter().sum();
        if w > 0 {
            for (p, wi) in parts.iter().zip(&weights) {
                // Each part is the floor or ceiling of its exact share.
                let exact = u128::from(total) * u128::from(*wi);
                let lo = (exact / u128::from(w)) as u64;
                prop_assert!(*p == lo || *p == lo + 1);
            }
        }
    }

    #[test]
    fn paper_ids_round_trip(track in prop::sample::select(Track::ALL.to_vec()), serial in 1u32..1000) {
        let id = PaperId::new(track, serial);
        prop_assert_eq!(PaperId::parse(id.as_str()).unwrap().track(), track);
    }
}
