//! Per-mode subscription lifecycle on the dApp side.
//!
//! | state   | request          | response sent | close           | transport lost | indication      |
//! |---------|------------------|---------------|-----------------|----------------|-----------------|
//! | Idle    | Pending + RESP   | violation     | violation       | Idle           | violation       |
//! | Pending | violation        | Active        | Closed + RESP   | Closed         | violation       |
//! | Active  | violation        | violation     | Closed + RESP   | Closed         | Active + IND    |
//! | Closed  | Pending + RESP   | violation     | violation       | Closed         | violation       |
//!
//! A request whose parameters break the [`Subscription`] invariants, or whose
//! mode does not match the machine, is answered with a rejected response and
//! leaves the state unchanged.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    E2SensMessage, Payload, ResponseStatus, SubscriptionMode, SubscriptionRequest,
    SubscriptionResponse,
};
use crate::dapp::{SensingReport, TriggerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SubscriptionState {
    Pending,
    Active,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MachineState {
    Idle,
    Pending,
    Active,
    Closed,
}

impl MachineState {
    pub const ALL: [MachineState; 4] = [
        MachineState::Idle,
        MachineState::Pending,
        MachineState::Active,
        MachineState::Closed,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Subscription {
    pub subscription_id: u32,
    pub mode: SubscriptionMode,
    pub period_ms: Option<f64>,
    pub trigger: Option<TriggerConfig>,
    pub state: SubscriptionState,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InvalidSubscription {
    #[error("periodic subscription needs a finite positive period, got {0}")]
    BadPeriod(f64),
    #[error("event subscription needs at least one finite trigger threshold")]
    EmptyTrigger,
}

impl Subscription {
    pub fn from_request(
        subscription_id: u32,
        req: &SubscriptionRequest,
    ) -> Result<Self, InvalidSubscription> {
        let (period_ms, trigger) = match req.mode {
            SubscriptionMode::Periodic => {
                if !(req.period_ms > 0.0 && req.period_ms.is_finite()) {
                    return Err(InvalidSubscription::BadPeriod(req.period_ms));
                }
                (Some(req.period_ms), None)
            }
            SubscriptionMode::Event => {
                let t = req.trigger;
                let finite = |v: Option<f64>| v.is_none_or(f64::is_finite);
                if t.is_empty()
                    || !finite(t.echo_energy_threshold_db)
                    || !finite(t.aoa_shift_threshold_deg)
                {
                    return Err(InvalidSubscription::EmptyTrigger);
                }
                (None, Some(t))
            }
        };
        Ok(Self {
            subscription_id,
            mode: req.mode,
            period_ms,
            trigger,
            state: SubscriptionState::Pending,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SubscriptionEvent {
    RequestReceived {
        correlation_id: u32,
        request: SubscriptionRequest,
    },
    ResponseSent,
    Close {
        correlation_id: u32,
    },
    TransportLost,
    Indication(Box<SensingReport>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    RequestReceived,
    ResponseSent,
    Close,
    TransportLost,
    Indication,
}

impl EventKind {
    pub const ALL: [EventKind; 5] = [
        EventKind::RequestReceived,
        EventKind::ResponseSent,
        EventKind::Close,
        EventKind::TransportLost,
        EventKind::Indication,
    ];
}

impl SubscriptionEvent {
    pub fn kind(&self) -> EventKind {
        match self {
            SubscriptionEvent::RequestReceived { .. } => EventKind::RequestReceived,
            SubscriptionEvent::ResponseSent => EventKind::ResponseSent,
            SubscriptionEvent::Close { .. } => EventKind::Close,
            SubscriptionEvent::TransportLost => EventKind::TransportLost,
            SubscriptionEvent::Indication(_) => EventKind::Indication,
        }
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("protocol violation: {event:?} in state {state:?}")]
pub struct ProtocolViolation {
    pub state: MachineState,
    pub event: EventKind,
}

#[derive(Debug, Clone)]
pub struct SubscriptionMachine {
    mode: SubscriptionMode,
    state: MachineState,
    current: Option<Subscription>,
    next_id: u32,
}

impl SubscriptionMachine {
    /// Ids are allocated upward from `first_id`, which must be nonzero.
    pub fn new(mode: SubscriptionMode, first_id: u32) -> Self {
        Self {
            mode,
            state: MachineState::Idle,
            current: None,
            next_id: first_id.max(1),
        }
    }

    pub fn mode(&self) -> SubscriptionMode {
        self.mode
    }

    pub fn state(&self) -> MachineState {
        self.state
    }

    pub fn subscription(&self) -> Option<&Subscription> {
        self.current.as_ref()
    }

    pub fn is_active(&self) -> bool {
        self.state == MachineState::Active
    }

    pub fn subscription_id(&self) -> Option<u32> {
        self.current.map(|s| s.subscription_id)
    }

    fn set_state(&mut self, state: MachineState) {
        self.state = state;
        if let Some(sub) = self.current.as_mut() {
            sub.state = match state {
                MachineState::Pending => SubscriptionState::Pending,
                MachineState::Active => SubscriptionState::Active,
                MachineState::Idle | MachineState::Closed => SubscriptionState::Closed,
            };
        }
    }

    /// Applies one event. On a violation the state is left untouched and the
    /// caller drops the offending message.
    pub fn step(
        &mut self,
        event: SubscriptionEvent,
    ) -> Result<Vec<E2SensMessage>, ProtocolViolation> {
        let violation = ProtocolViolation {
            state: self.state,
            event: event.kind(),
        };
        use MachineState as S;
        match (self.state, event) {
            (
                S::Idle | S::Closed,
                SubscriptionEvent::RequestReceived {
                    correlation_id,
                    request,
                },
            ) => {
                let reject = |id| {
                    vec![E2SensMessage::new(
                        correlation_id,
                        Payload::SubscriptionResponse(Some(SubscriptionResponse {
                            subscription_id: id,
                            status: ResponseStatus::Rejected,
                        })),
                    )]
                };
                if request.mode != self.mode {
                    return Ok(reject(0));
                }
                let id = self.next_id;
                match Subscription::from_request(id, &request) {
                    Ok(sub) => {
                        self.next_id = self.next_id.wrapping_add(1).max(1);
                        self.current = Some(sub);
                        self.set_state(S::Pending);
                        Ok(vec![E2SensMessage::new(
                            correlation_id,
                            Payload::SubscriptionResponse(Some(SubscriptionResponse {
                                subscription_id: id,
                                status: ResponseStatus::Accepted,
                            })),
                        )])
                    }
                    Err(e) => {
                        log::debug!("rejecting subscription request: {e}");
                        Ok(reject(0))
                    }
                }
            }
            (S::Pending, SubscriptionEvent::ResponseSent) => {
                self.set_state(S::Active);
                Ok(Vec::new())
            }
            (S::Pending | S::Active, SubscriptionEvent::Close { correlation_id }) => {
                self.set_state(S::Closed);
                Ok(vec![E2SensMessage::new(
                    correlation_id,
                    Payload::SubscriptionResponse(None),
                )])
            }
            (S::Pending | S::Active, SubscriptionEvent::TransportLost) => {
                self.set_state(S::Closed);
                Ok(Vec::new())
            }
            (S::Idle | S::Closed, SubscriptionEvent::TransportLost) => Ok(Vec::new()),
            (S::Active, SubscriptionEvent::Indication(report)) => {
                let id = self.current.expect("active has a subscription").subscription_id;
                Ok(vec![E2SensMessage::new(id, Payload::Indication(*report))])
            }
            _ => {
                log::warn!("{violation}");
                Err(violation)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request() -> SubscriptionEvent {
        SubscriptionEvent::RequestReceived {
            correlation_id: 5,
            request: SubscriptionRequest::periodic(10.0),
        }
    }

    #[test]
    fn request_then_response_activates() {
        let mut m = SubscriptionMachine::new(SubscriptionMode::Periodic, 1);
        let out = m.step(request()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].correlation_id, 5);
        assert_eq!(m.state(), MachineState::Pending);
        m.step(SubscriptionEvent::ResponseSent).unwrap();
        assert_eq!(m.state(), MachineState::Active);
        assert_eq!(m.subscription().unwrap().state, SubscriptionState::Active);
    }

    #[test]
    fn close_stops_indications_and_new_id_differs() {
        let mut m = SubscriptionMachine::new(SubscriptionMode::Periodic, 1);
        m.step(request()).unwrap();
        m.step(SubscriptionEvent::ResponseSent).unwrap();
        let old = m.subscription_id().unwrap();
        m.step(SubscriptionEvent::Close { correlation_id: 6 }).unwrap();
        assert_eq!(m.state(), MachineState::Closed);
        let err = m
            .step(SubscriptionEvent::Indication(Box::default()))
            .unwrap_err();
        assert_eq!(err.state, MachineState::Closed);
        m.step(request()).unwrap();
        assert_ne!(m.subscription_id().unwrap(), old);
    }

    #[test]
    fn invalid_requests_are_rejected_without_transition() {
        let mut m = SubscriptionMachine::new(SubscriptionMode::Event, 1);
        let out = m
            .step(SubscriptionEvent::RequestReceived {
                correlation_id: 1,
                request: SubscriptionRequest::event(TriggerConfig::default()),
            })
            .unwrap();
        assert_eq!(m.state(), MachineState::Idle);
        assert!(matches!(
            out[0].payload,
            Payload::SubscriptionResponse(Some(SubscriptionResponse {
                status: ResponseStatus::Rejected,
                ..
            }))
        ));
        // periodic request on the event machine
        m.step(request()).unwrap();
        assert_eq!(m.state(), MachineState::Idle);
    }

    #[test]
    fn subscription_invariants() {
        assert!(Subscription::from_request(1, &SubscriptionRequest::periodic(0.0)).is_err());
        assert!(Subscription::from_request(1, &SubscriptionRequest::periodic(f64::NAN)).is_err());
        let t = TriggerConfig {
            echo_energy_threshold_db: Some(-3.0),
            aoa_shift_threshold_deg: None,
        };
        let s = Subscription::from_request(1, &SubscriptionRequest::event(t)).unwrap();
        assert_eq!(s.trigger, Some(t));
        assert_eq!(s.state, SubscriptionState::Pending);
    }
}
