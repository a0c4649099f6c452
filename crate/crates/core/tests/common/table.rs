use oran_isac::dapp::SensingReport;
use oran_isac::e2sm::{
    EventKind, MachineState, MsgType, SubscriptionEvent, SubscriptionMachine, SubscriptionMode,
    SubscriptionRequest,
};

pub fn request() -> SubscriptionEvent {
    SubscriptionEvent::RequestReceived {
        correlation_id: 42,
        request: SubscriptionRequest::periodic(10.0),
    }
}

pub fn event(kind: EventKind) -> SubscriptionEvent {
    match kind {
        EventKind::RequestReceived => request(),
        EventKind::ResponseSent => SubscriptionEvent::ResponseSent,
        EventKind::Close => SubscriptionEvent::Close { correlation_id: 43 },
        EventKind::TransportLost => SubscriptionEvent::TransportLost,
        EventKind::Indication => SubscriptionEvent::Indication(Box::new(SensingReport {
            sequence_number: 5,
            ..SensingReport::default()
        })),
    }
}

pub fn machine_in(state: MachineState) -> SubscriptionMachine {
    let mut m = SubscriptionMachine::new(SubscriptionMode::Periodic, 1);
    let path: &[EventKind] = match state {
        MachineState::Idle => &[],
        MachineState::Pending => &[EventKind::RequestReceived],
        MachineState::Active => &[EventKind::RequestReceived, EventKind::ResponseSent],
        MachineState::Closed => &[
            EventKind::RequestReceived,
            EventKind::ResponseSent,
            EventKind::Close,
        ],
    };
    for k in path {
        m.step(event(*k)).unwrap();
    }
    assert_eq!(m.state(), state);
    m
}

/// Expected outcome: next state and emitted message type, or a violation.
pub fn expected(state: MachineState, kind: EventKind) -> Option<(MachineState, Option<MsgType>)> {
    use EventKind as E;
    use MachineState as S;
    match (state, kind) {
        (S::Idle | S::Closed, E::RequestReceived) => {
            Some((S::Pending, Some(MsgType::SubscriptionResponse)))
        }
        (S::Pending, E::ResponseSent) => Some((S::Active, None)),
        (S::Pending | S::Active, E::Close) => Some((S::Closed, Some(MsgType::SubscriptionResponse))),
        (S::Pending | S::Active, E::TransportLost) => Some((S::Closed, None)),
        (S::Idle, E::TransportLost) => Some((S::Idle, None)),
        (S::Closed, E::TransportLost) => Some((S::Closed, None)),
        (S::Active, E::Indication) => Some((S::Active, Some(MsgType::Indication))),
        _ => None,
    }
}
