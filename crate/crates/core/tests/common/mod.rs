#![allow(dead_code)]

pub mod oracle;
pub mod policy;
pub mod table;

use std::path::PathBuf;

use proptest::prelude::*;

use oran_isac::dapp::{SensingReport, TriggerConfig};
use oran_isac::e2sm::{
    AckStatus, ControlAck, ControlAction, ControlCommand, ControlKind, E2SensMessage, Payload,
    ResponseStatus, SubscriptionAction, SubscriptionMode, SubscriptionRequest,
    SubscriptionResponse,
};
use oran_isac::ofh::SensingMetadata;

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

/// Any bit pattern, NaN payloads included.
pub fn any_bits_f64() -> impl Strategy<Value = f64> {
    any::<u64>().prop_map(f64::from_bits)
}

pub fn arb_metadata() -> impl Strategy<Value = SensingMetadata> {
    (any::<u64>(), any::<u16>(), any::<u8>(), any::<bool>()).prop_map(|(ts, wf, beam, flag)| {
        SensingMetadata {
            tx_timestamp: ts,
            waveform_id: wf,
            beam_index: beam,
            sensing_flag: flag,
        }
    })
}

pub fn arb_trigger() -> impl Strategy<Value = TriggerConfig> {
    (
        proptest::option::of(any_bits_f64()),
        proptest::option::of(any_bits_f64()),
    )
        .prop_map(|(e, a)| TriggerConfig {
            echo_energy_threshold_db: e,
            aoa_shift_threshold_deg: a,
        })
}

pub fn arb_report() -> impl Strategy<Value = SensingReport> {
    (
        any::<u64>(),
        proptest::collection::vec(any_bits_f64(), 11),
        any::<u8>(),
        any::<u16>(),
        any::<u64>(),
    )
        .prop_map(|(t0, f, beam, wf, seq)| SensingReport {
            t0,
            delay_s: f[0],
            range_m: f[1],
            doppler_hz: f[2],
            radial_velocity_mps: f[3],
            aoa_azimuth_deg: f[4],
            aoa_elevation_deg: f[5],
            echo_energy_db: f[6],
            si_power_db: f[7],
            multipath_spread_s: f[8],
            angular_entropy: f[9],
            confidence: f[10],
            beam_index: beam,
            waveform_id: wf,
            sequence_number: seq,
        })
}

fn arb_mode() -> impl Strategy<Value = SubscriptionMode> {
    prop_oneof![Just(SubscriptionMode::Periodic), Just(SubscriptionMode::Event)]
}

fn arb_action() -> impl Strategy<Value = ControlAction> {
    prop_oneof![
        any_bits_f64().prop_map(ControlAction::SetPeriod),
        any::<u8>().prop_map(ControlAction::SetBeam),
        any::<bool>().prop_map(ControlAction::SetSic),
        arb_trigger().prop_map(ControlAction::SetTrigger),
    ]
}

fn arb_kind() -> impl Strategy<Value = ControlKind> {
    prop_oneof![
        Just(ControlKind::SetPeriod),
        Just(ControlKind::SetBeam),
        Just(ControlKind::SetSic),
        Just(ControlKind::SetTrigger),
    ]
}

pub fn arb_payload() -> impl Strategy<Value = Payload> {
    prop_oneof![
        (
            prop_oneof![Just(SubscriptionAction::Subscribe), Just(SubscriptionAction::Delete)],
            any::<u32>(),
            arb_mode(),
            any_bits_f64(),
            arb_trigger(),
        )
            .prop_map(|(action, id, mode, period, trigger)| {
                Payload::SubscriptionRequest(SubscriptionRequest {
                    action,
                    subscription_id: id,
                    mode,
                    period_ms: period,
                    trigger,
                })
            }),
        proptest::option::of((any::<u32>(), any::<bool>()).prop_map(|(id, ok)| {
            SubscriptionResponse {
                subscription_id: id,
                status: if ok {
                    ResponseStatus::Accepted
                } else {
                    ResponseStatus::Rejected
                },
            }
        }))
        .prop_map(Payload::SubscriptionResponse),
        arb_report().prop_map(Payload::Indication),
        (arb_action(), any::<u64>())
            .prop_map(|(action, issued_at)| Payload::ControlRequest(ControlCommand {
                action,
                issued_at
            })),
        (arb_kind(), any::<u64>(), any::<bool>()).prop_map(|(kind, at, ok)| {
            Payload::ControlAck(ControlAck {
                kind,
                received_at: at,
                status: if ok {
                    AckStatus::Applied
                } else {
                    AckStatus::Rejected
                },
            })
        }),
    ]
}

pub fn arb_message() -> impl Strategy<Value = E2SensMessage> {
    (any::<u32>(), arb_payload()).prop_map(|(c, p)| E2SensMessage::new(c, p))
}
