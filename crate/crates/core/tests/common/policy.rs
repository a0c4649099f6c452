use proptest::prelude::*;

use oran_isac::control::{A1IsacPolicy, PolicyRequest, Sector};
use oran_isac::dapp::TriggerConfig;

pub fn arb_policy() -> impl Strategy<Value = A1IsacPolicy> {
    (
        0.1f64..100.0,
        1.0f64..50.0,
        0.0f64..=1000.0,
        proptest::collection::vec((-180.0f64..180.0, 0.0f64..90.0), 0..3),
    )
        .prop_map(|(min, span, budget, sectors)| A1IsacPolicy {
            policy_id: "prop".into(),
            geographic_scope: sectors
                .into_iter()
                .map(|(lo, w)| Sector {
                    min_azimuth_deg: lo,
                    max_azimuth_deg: (lo + w).min(180.0),
                })
                .collect(),
            temporal_budget_ms_per_s: budget,
            sensing_priority: 1,
            energy_limit: 1.0,
            min_period_ms: min,
            max_period_ms: min * span,
        })
}

pub fn arb_request() -> impl Strategy<Value = PolicyRequest> {
    prop_oneof![
        prop_oneof![-10.0f64..5000.0, Just(f64::NAN), Just(f64::INFINITY)].prop_map(PolicyRequest::Period),
        (any::<u8>(), -200.0f64..200.0).prop_map(|(b, az)| PolicyRequest::Beam {
            beam_index: b,
            azimuth_deg: az
        }),
        any::<bool>().prop_map(PolicyRequest::Sic),
        (proptest::option::of(-100.0f64..0.0), proptest::option::of(0.0f64..90.0)).prop_map(|(e, a)| {
            PolicyRequest::Trigger(TriggerConfig {
                echo_energy_threshold_db: e,
                aoa_shift_threshold_deg: a,
            })
        }),
    ]
}
