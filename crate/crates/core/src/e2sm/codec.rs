use thiserror::Error;

use super::{
    AckStatus, ControlAck, ControlAction, ControlCommand, ControlKind, E2SensMessage, MsgType,
    Payload, ResponseStatus, SubscriptionAction, SubscriptionMode, SubscriptionRequest,
    SubscriptionResponse, VERSION,
};
use crate::dapp::{SensingReport, TriggerConfig};

pub const HEADER_LEN: usize = 10;

/// Encoded size of a [`SensingReport`]: one u64 timestamp, eleven f64
/// KPIs, u8 beam, u16 waveform, u64 sequence number.
pub const REPORT_LEN: usize = 8 + 11 * 8 + 1 + 2 + 8;

const SUB_REQUEST_LEN: usize = 1 + 4 + 1 + 8 + TRIGGER_LEN;
const SUB_RESPONSE_LEN: usize = 4 + 1;
const TRIGGER_LEN: usize = 1 + 8 + 8;
const CONTROL_HEADER_LEN: usize = 1 + 8;
const CONTROL_ACK_LEN: usize = 1 + 8 + 1;

const TRIGGER_ENERGY: u8 = 0x01;
const TRIGGER_AOA: u8 = 0x02;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum DecodeError {
    #[error("truncated frame: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("unknown version {0}")]
    UnknownVersion(u8),
    /// Unknown message type, or an out-of-range enumerated field inside a payload.
    #[error("unknown type code {0}")]
    UnknownType(u8),
    #[error("length mismatch: expected {expected} bytes, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DecodeErrorKind {
    Truncated,
    UnknownVersion,
    UnknownType,
    LengthMismatch,
}

impl DecodeError {
    pub fn kind(&self) -> DecodeErrorKind {
        match self {
            DecodeError::Truncated { .. } => DecodeErrorKind::Truncated,
            DecodeError::UnknownVersion(_) => DecodeErrorKind::UnknownVersion,
            DecodeError::UnknownType(_) => DecodeErrorKind::UnknownType,
            DecodeError::LengthMismatch { .. } => DecodeErrorKind::LengthMismatch,
        }
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn bool(&mut self, v: bool) {
        self.0.push(u8::from(v));
    }
}

/// Reader over a payload whose length has already been checked.
struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let out: [u8; N] = self.buf[self.pos..self.pos + N].try_into().expect("checked length");
        self.pos += N;
        out
    }
    fn u8(&mut self) -> u8 {
        self.take::<1>()[0]
    }
    fn u16(&mut self) -> u16 {
        u16::from_be_bytes(self.take())
    }
    fn u32(&mut self) -> u32 {
        u32::from_be_bytes(self.take())
    }
    fn u64(&mut self) -> u64 {
        u64::from_be_bytes(self.take())
    }
    fn f64(&mut self) -> f64 {
        f64::from_be_bytes(self.take())
    }
    fn bool(&mut self) -> Result<bool, DecodeError> {
        match self.u8() {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(DecodeError::UnknownType(other)),
        }
    }
}

fn write_trigger(w: &mut Writer, t: &TriggerConfig) {
    let mut flags = 0;
    if t.echo_energy_threshold_db.is_some() {
        flags |= TRIGGER_ENERGY;
    }
    if t.aoa_shift_threshold_deg.is_some() {
        flags |= TRIGGER_AOA;
    }
    w.u8(flags);
    w.f64(t.echo_energy_threshold_db.unwrap_or(0.0));
    w.f64(t.aoa_shift_threshold_deg.unwrap_or(0.0));
}

fn read_trigger(r: &mut Reader<'_>) -> Result<TriggerConfig, DecodeError> {
    let flags = r.u8();
    if flags & !(TRIGGER_ENERGY | TRIGGER_AOA) != 0 {
        return Err(DecodeError::UnknownType(flags));
    }
    let energy = r.f64();
    let aoa = r.f64();
    Ok(TriggerConfig {
        echo_energy_threshold_db: (flags & TRIGGER_ENERGY != 0).then_some(energy),
        aoa_shift_threshold_deg: (flags & TRIGGER_AOA != 0).then_some(aoa),
    })
}

fn write_report(w: &mut Writer, r: &SensingReport) {
    w.u64(r.t0);
    w.f64(r.delay_s);
    w.f64(r.range_m);
    w.f64(r.doppler_hz);
    w.f64(r.radial_velocity_mps);
    w.f64(r.aoa_azimuth_deg);
    w.f64(r.aoa_elevation_deg);
    w.f64(r.echo_energy_db);
    w.f64(r.si_power_db);
    w.f64(r.multipath_spread_s);
    w.f64(r.angular_entropy);
    w.f64(r.confidence);
    w.u8(r.beam_index);
    w.u16(r.waveform_id);
    w.u64(r.sequence_number);
}

fn read_report(r: &mut Reader<'_>) -> SensingReport {
    SensingReport {
        t0: r.u64(),
        delay_s: r.f64(),
        range_m: r.f64(),
        doppler_hz: r.f64(),
        radial_velocity_mps: r.f64(),
        aoa_azimuth_deg: r.f64(),
        aoa_elevation_deg: r.f64(),
        echo_energy_db: r.f64(),
        si_power_db: r.f64(),
        multipath_spread_s: r.f64(),
        angular_entropy: r.f64(),
        confidence: r.f64(),
        beam_index: r.u8(),
        waveform_id: r.u16(),
        sequence_number: r.u64(),
    }
}

fn mode_code(m: SubscriptionMode) -> u8 {
    match m {
        SubscriptionMode::Periodic => 0,
        SubscriptionMode::Event => 1,
    }
}

fn control_kind(code: u8) -> Result<ControlKind, DecodeError> {
    Ok(match code {
        1 => ControlKind::SetPeriod,
        2 => ControlKind::SetBeam,
        3 => ControlKind::SetSic,
        4 => ControlKind::SetTrigger,
        other => return Err(DecodeError::UnknownType(other)),
    })
}

fn control_value_len(kind: ControlKind) -> usize {
    match kind {
        ControlKind::SetPeriod => 8,
        ControlKind::SetBeam | ControlKind::SetSic => 1,
        ControlKind::SetTrigger => TRIGGER_LEN,
    }
}

pub fn encode_message(msg: &E2SensMessage) -> Vec<u8> {
    let mut body = Writer(Vec::new());
    match &msg.payload {
        Payload::SubscriptionRequest(req) => {
            body.u8(match req.action {
                SubscriptionAction::Subscribe => 0,
                SubscriptionAction::Delete => 1,
            });
            body.u32(req.subscription_id);
            body.u8(mode_code(req.mode));
            body.f64(req.period_ms);
            write_trigger(&mut body, &req.trigger);
        }
        Payload::SubscriptionResponse(None) => {}
        Payload::SubscriptionResponse(Some(resp)) => {
            body.u32(resp.subscription_id);
            body.u8(match resp.status {
                ResponseStatus::Accepted => 0,
                ResponseStatus::Rejected => 1,
            });
        }
        Payload::Indication(report) => write_report(&mut body, report),
        Payload::ControlRequest(cmd) => {
            body.u8(cmd.action.kind() as u8);
            body.u64(cmd.issued_at);
            match cmd.action {
                ControlAction::SetPeriod(p) => body.f64(p),
                ControlAction::SetBeam(b) => body.u8(b),
                ControlAction::SetSic(on) => body.bool(on),
                ControlAction::SetTrigger(t) => write_trigger(&mut body, &t),
            }
        }
        Payload::ControlAck(ack) => {
            body.u8(ack.kind as u8);
            body.u64(ack.received_at);
            body.u8(match ack.status {
                AckStatus::Applied => 0,
                AckStatus::Rejected => 1,
            });
        }
    }
    let body = body.0;
    let mut out = Writer(Vec::with_capacity(HEADER_LEN + body.len()));
    out.u8(VERSION);
    out.u8(msg.msg_type() as u8);
    out.u32(msg.correlation_id);
    out.u32(body.len() as u32);
    out.0.extend_from_slice(&body);
    out.0
}

fn expect_len(payload: &[u8], expected: usize) -> Result<(), DecodeError> {
    if payload.len() != expected {
        return Err(DecodeError::LengthMismatch {
            expected,
            got: payload.len(),
        });
    }
    Ok(())
}

/// Decodes exactly one frame. Bytes beyond the declared payload length are
/// a [`DecodeError::LengthMismatch`].
pub fn decode_message(bytes: &[u8]) -> Result<E2SensMessage, DecodeError> {
    let Some(&version) = bytes.first() else {
        return Err(DecodeError::Truncated {
            needed: HEADER_LEN,
            have: 0,
        });
    };
    if version != VERSION {
        return Err(DecodeError::UnknownVersion(version));
    }
    if let Some(&t) = bytes.get(1) {
        if MsgType::from_u8(t).is_none() {
            return Err(DecodeError::UnknownType(t));
        }
    }
    if bytes.len() < HEADER_LEN {
        return Err(DecodeError::Truncated {
            needed: HEADER_LEN,
            have: bytes.len(),
        });
    }
    let mut header = Reader::new(&bytes[..HEADER_LEN]);
    header.u8();
    let msg_type = MsgType::from_u8(header.u8()).expect("checked above");
    let correlation_id = header.u32();
    let payload_len = header.u32() as usize;
    let available = bytes.len() - HEADER_LEN;
    if available < payload_len {
        return Err(DecodeError::Truncated {
            needed: HEADER_LEN.saturating_add(payload_len),
            have: bytes.len(),
        });
    }
    if available > payload_len {
        return Err(DecodeError::LengthMismatch {
            expected: HEADER_LEN + payload_len,
            got: bytes.len(),
        });
    }
    let payload = &bytes[HEADER_LEN..];
    let mut r = Reader::new(payload);

    let payload = match msg_type {
        MsgType::SubscriptionRequest => {
            expect_len(payload, SUB_REQUEST_LEN)?;
            let action = match r.u8() {
                0 => SubscriptionAction::Subscribe,
                1 => SubscriptionAction::Delete,
                other => return Err(DecodeError::UnknownType(other)),
            };
            let subscription_id = r.u32();
            let mode = match r.u8() {
                0 => SubscriptionMode::Periodic,
                1 => SubscriptionMode::Event,
                other => return Err(DecodeError::UnknownType(other)),
            };
            let period_ms = r.f64();
            let trigger = read_trigger(&mut r)?;
            Payload::SubscriptionRequest(SubscriptionRequest {
                action,
                subscription_id,
                mode,
                period_ms,
                trigger,
            })
        }
        MsgType::SubscriptionResponse => {
            if payload.is_empty() {
                Payload::SubscriptionResponse(None)
            } else {
                expect_len(payload, SUB_RESPONSE_LEN)?;
                let subscription_id = r.u32();
                let status = match r.u8() {
                    0 => ResponseStatus::Accepted,
                    1 => ResponseStatus::Rejected,
                    other => return Err(DecodeError::UnknownType(other)),
                };
                Payload::SubscriptionResponse(Some(SubscriptionResponse {
                    subscription_id,
                    status,
                }))
            }
        }
        MsgType::Indication => {
            expect_len(payload, REPORT_LEN)?;
            Payload::Indication(read_report(&mut r))
        }
        MsgType::ControlRequest => {
            if payload.len() < CONTROL_HEADER_LEN {
                return Err(DecodeError::LengthMismatch {
                    expected: CONTROL_HEADER_LEN,
                    got: payload.len(),
                });
            }
            let kind = control_kind(payload[0])?;
            expect_len(payload, CONTROL_HEADER_LEN + control_value_len(kind))?;
            r.u8();
            let issued_at = r.u64();
            let action = match kind {
                ControlKind::SetPeriod => ControlAction::SetPeriod(r.f64()),
                ControlKind::SetBeam => ControlAction::SetBeam(r.u8()),
                ControlKind::SetSic => ControlAction::SetSic(r.bool()?),
                ControlKind::SetTrigger => ControlAction::SetTrigger(read_trigger(&mut r)?),
            };
            Payload::ControlRequest(ControlCommand { action, issued_at })
        }
        MsgType::ControlAck => {
            expect_len(payload, CONTROL_ACK_LEN)?;
            let kind = control_kind(r.u8())?;
            let received_at = r.u64();
            let status = match r.u8() {
                0 => AckStatus::Applied,
                1 => AckStatus::Rejected,
                other => return Err(DecodeError::UnknownType(other)),
            };
            Payload::ControlAck(ControlAck {
                kind,
                received_at,
                status,
            })
        }
    };
    Ok(E2SensMessage {
        correlation_id,
        payload,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_response_is_ten_bytes() {
        let m = E2SensMessage::new(9, Payload::SubscriptionResponse(None));
        let bytes = encode_message(&m);
        assert_eq!(bytes, [1, 2, 0, 0, 0, 9, 0, 0, 0, 0]);
        assert_eq!(decode_message(&bytes).unwrap(), m);
    }

    #[test]
    fn indication_length_is_golden() {
        assert_eq!(REPORT_LEN, 107);
        let m = E2SensMessage::new(1, Payload::Indication(SensingReport::default()));
        assert_eq!(encode_message(&m).len(), HEADER_LEN + 107);
    }

    #[test]
    fn header_errors() {
        assert!(matches!(decode_message(&[]), Err(DecodeError::Truncated { .. })));
        assert_eq!(
            decode_message(&[2, 2, 0, 0, 0, 0, 0, 0, 0, 0]),
            Err(DecodeError::UnknownVersion(2))
        );
        assert_eq!(
            decode_message(&[1, 9, 0, 0, 0, 0, 0, 0, 0, 0]),
            Err(DecodeError::UnknownType(9))
        );
        assert!(matches!(
            decode_message(&[1, 2, 0, 0]),
            Err(DecodeError::Truncated { .. })
        ));
    }

    #[test]
    fn short_payload_is_truncated_and_long_is_mismatch() {
        let m = E2SensMessage::new(1, Payload::Indication(SensingReport::default()));
        let bytes = encode_message(&m);
        assert!(matches!(
            decode_message(&bytes[..bytes.len() - 1]),
            Err(DecodeError::Truncated { .. })
        ));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(
            decode_message(&long),
            Err(DecodeError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn wrong_payload_size_for_type() {
        // SUBSCRIPTION_RESPONSE with a 3-byte body
        let bytes = [1, 2, 0, 0, 0, 1, 0, 0, 0, 3, 0, 0, 0];
        assert!(matches!(
            decode_message(&bytes),
            Err(DecodeError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn bad_enum_fields_are_unknown_type() {
        let cmd = E2SensMessage::new(
            4,
            Payload::ControlRequest(ControlCommand {
                action: ControlAction::SetSic(true),
                issued_at: 77,
            }),
        );
        let mut bytes = encode_message(&cmd);
        let last = bytes.len() - 1;
        bytes[last] = 2;
        assert_eq!(decode_message(&bytes), Err(DecodeError::UnknownType(2)));
        bytes[HEADER_LEN] = 9;
        assert_eq!(decode_message(&bytes), Err(DecodeError::UnknownType(9)));
    }

    #[test]
    fn control_round_trip() {
        for action in [
            ControlAction::SetPeriod(20.0),
            ControlAction::SetBeam(7),
            ControlAction::SetSic(false),
            ControlAction::SetTrigger(TriggerConfig {
                echo_energy_threshold_db: Some(-12.5),
                aoa_shift_threshold_deg: None,
            }),
        ] {
            let m = E2SensMessage::new(
                42,
                Payload::ControlRequest(ControlCommand {
                    action,
                    issued_at: 123_456_789,
                }),
            );
            assert_eq!(decode_message(&encode_message(&m)).unwrap(), m);
        }
    }
}
