//! E2SM-SENS: sensing telemetry and control service model.
//!
//! Frames share a 10-byte header followed by a type-specific fixed-layout
//! payload:
//!
//! ```text
//! version u8 (=1) | msg_type u8 | correlation_id u32 BE | payload_length u32 BE | payload
//! ```
//!
//! Integers are big-endian; reals are IEEE-754 binary64, big-endian.

mod codec;
mod subscription;

pub use codec::{decode_message, encode_message, DecodeError, DecodeErrorKind, HEADER_LEN, REPORT_LEN};
pub use subscription::{
    EventKind, MachineState, ProtocolViolation, Subscription, SubscriptionEvent,
    SubscriptionMachine, SubscriptionState,
};

use serde::{Deserialize, Serialize};

use crate::dapp::{SensingReport, TriggerConfig};

pub const VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
#[repr(u8)]
pub enum MsgType {
    SubscriptionRequest = 1,
    SubscriptionResponse = 2,
    Indication = 3,
    ControlRequest = 4,
    ControlAck = 5,
}

impl MsgType {
    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            1 => Self::SubscriptionRequest,
            2 => Self::SubscriptionResponse,
            3 => Self::Indication,
            4 => Self::ControlRequest,
            5 => Self::ControlAck,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct E2SensMessage {
    /// Pairs a RESPONSE with its REQUEST and an ACK with its CONTROL_REQUEST.
    /// INDICATIONs carry the subscription id here.
    pub correlation_id: u32,
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "body", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Payload {
    SubscriptionRequest(SubscriptionRequest),
    /// `None` is the empty-payload response that acknowledges a deletion.
    SubscriptionResponse(Option<SubscriptionResponse>),
    Indication(SensingReport),
    ControlRequest(ControlCommand),
    ControlAck(ControlAck),
}

impl Payload {
    pub fn msg_type(&self) -> MsgType {
        match self {
            Payload::SubscriptionRequest(_) => MsgType::SubscriptionRequest,
            Payload::SubscriptionResponse(_) => MsgType::SubscriptionResponse,
            Payload::Indication(_) => MsgType::Indication,
            Payload::ControlRequest(_) => MsgType::ControlRequest,
            Payload::ControlAck(_) => MsgType::ControlAck,
        }
    }
}

impl E2SensMessage {
    pub fn new(correlation_id: u32, payload: Payload) -> Self {
        Self {
            correlation_id,
            payload,
        }
    }

    pub fn msg_type(&self) -> MsgType {
        self.payload.msg_type()
    }

    pub fn encode(&self) -> Vec<u8> {
        encode_message(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SubscriptionMode {
    Periodic,
    Event,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SubscriptionAction {
    Subscribe,
    Delete,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubscriptionRequest {
    pub action: SubscriptionAction,
    /// Zero for a new subscription; the target id for a deletion.
    pub subscription_id: u32,
    pub mode: SubscriptionMode,
    pub period_ms: f64,
    pub trigger: TriggerConfig,
}

impl SubscriptionRequest {
    pub fn periodic(period_ms: f64) -> Self {
        Self {
            action: SubscriptionAction::Subscribe,
            subscription_id: 0,
            mode: SubscriptionMode::Periodic,
            period_ms,
            trigger: TriggerConfig::default(),
        }
    }

    pub fn event(trigger: TriggerConfig) -> Self {
        Self {
            action: SubscriptionAction::Subscribe,
            subscription_id: 0,
            mode: SubscriptionMode::Event,
            period_ms: 0.0,
            trigger,
        }
    }

    pub fn delete(subscription_id: u32, mode: SubscriptionMode) -> Self {
        Self {
            action: SubscriptionAction::Delete,
            subscription_id,
            mode,
            period_ms: 0.0,
            trigger: TriggerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ResponseStatus {
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubscriptionResponse {
    pub subscription_id: u32,
    pub status: ResponseStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
#[repr(u8)]
pub enum ControlKind {
    SetPeriod = 1,
    SetBeam = 2,
    SetSic = 3,
    SetTrigger = 4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ControlAction {
    SetPeriod(f64),
    SetBeam(u8),
    SetSic(bool),
    SetTrigger(TriggerConfig),
}

impl ControlAction {
    pub fn kind(&self) -> ControlKind {
        match self {
            ControlAction::SetPeriod(_) => ControlKind::SetPeriod,
            ControlAction::SetBeam(_) => ControlKind::SetBeam,
            ControlAction::SetSic(_) => ControlKind::SetSic,
            ControlAction::SetTrigger(_) => ControlKind::SetTrigger,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlCommand {
    pub action: ControlAction,
    /// xApp clock at issue, ns.
    pub issued_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AckStatus {
    Applied,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlAck {
    pub kind: ControlKind,
    /// dApp clock when the command was received and applied, ns.
    pub received_at: u64,
    pub status: AckStatus,
}
