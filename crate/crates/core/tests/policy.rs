mod common;

use proptest::prelude::*;

use common::policy::{arb_policy, arb_request};
use oran_isac::control::{enforce_policy, PolicyRequest, RejectReason, Verdict};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn verdicts_are_consistent(p in arb_policy(), remaining in -10.0f64..1000.0, req in arb_request()) {
        prop_assert!(p.validate().is_ok());
        let v = enforce_policy(&p, remaining, &req);
        if remaining <= 0.0 {
            prop_assert_eq!(v, Verdict::Reject(RejectReason::BudgetExhausted));
        }
        match v {
            Verdict::Clamp { requested, clamped } => {
                prop_assert!(matches!(req, PolicyRequest::Period(x) if x == requested));
                prop_assert!(p.min_period_ms <= clamped && clamped <= p.max_period_ms);
                prop_assert!(clamped != requested);
            }
            Verdict::Accept => {
                if let PolicyRequest::Period(x) = req {
                    prop_assert!(p.min_period_ms <= x && x <= p.max_period_ms);
                }
                if let PolicyRequest::Beam { azimuth_deg, .. } = req {
                    prop_assert!(p.in_scope(azimuth_deg));
                }
            }
            Verdict::Reject(_) => {}
        }
        // Pure: same inputs, same answer.
        prop_assert_eq!(format!("{:?}", enforce_policy(&p, remaining, &req)), format!("{v:?}"));
    }
}
