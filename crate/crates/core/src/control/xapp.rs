//! Near-RT RIC side: subscribes to the dApp, consumes indications, issues
//! control commands under the active A1 policy and records latency samples.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::policy::{enforce_policy, A1IsacPolicy, BudgetWindow, PolicyRequest, Verdict};
use crate::clock::{ns_to_ms, Clock};
use crate::dapp::{SensingReport, TriggerConfig};
use crate::e2sm::{
    decode_message, AckStatus, ControlAction, ControlCommand, E2SensMessage, MsgType, Payload,
    ResponseStatus, Subscription, SubscriptionMode, SubscriptionRequest,
};
use crate::ofh::BeamTable;
use crate::transport::{Connection, FrameClass, TransportError};

pub const DEFAULT_REQUEST_TIMEOUT: Duration = Duration::from_secs(2);

#[derive(Debug, Error)]
pub enum XappError {
    #[error("policy refused the request: {0:?}")]
    PolicyViolation(Verdict),
    #[error("no reply before the deadline")]
    Timeout,
    #[error("dApp rejected the request")]
    Rejected,
    #[error("invalid subscription: {0}")]
    InvalidSubscription(String),
    #[error("unknown beam {0}")]
    UnknownBeam(u8),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

/// One indication's timing. The command fields are set only for samples
/// taken by [`XApp::closed_loop_probe`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencySample {
    pub sequence_number: u64,
    pub t0: u64,
    pub t1: u64,
    pub t_cmd_issue: Option<u64>,
    pub t_cmd_applied: Option<u64>,
}

impl LatencySample {
    pub fn telemetry_ns(&self) -> u64 {
        self.t1.saturating_sub(self.t0)
    }

    pub fn control_ns(&self) -> Option<u64> {
        Some(self.t_cmd_applied?.saturating_sub(self.t_cmd_issue?))
    }

    /// Report-to-actuation latency as the sum of its two legs. xApp think
    /// time between `t1` and `t_cmd_issue` is excluded; see [`Self::xapp_ns`].
    pub fn closed_loop_ns(&self) -> Option<u64> {
        Some(self.telemetry_ns() + self.control_ns()?)
    }

    pub fn xapp_ns(&self) -> Option<u64> {
        Some(self.t_cmd_issue?.saturating_sub(self.t1))
    }
}

/// Append-only sample log, shareable with a writer thread.
#[derive(Debug, Clone, Default)]
pub struct SampleLog(Arc<Mutex<Vec<LatencySample>>>);

impl SampleLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, s: LatencySample) {
        self.0.lock().expect("sample log poisoned").push(s);
    }

    pub fn len(&self) -> usize {
        self.0.lock().expect("sample log poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn snapshot(&self) -> Vec<LatencySample> {
        self.0.lock().expect("sample log poisoned").clone()
    }

    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        write_samples_csv(&self.snapshot(), path)
    }
}

pub fn write_samples_csv(samples: &[LatencySample], path: &Path) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let opt = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
    w.write_record([
        "sequence_number",
        "t0_ns",
        "t1_ns",
        "t_cmd_issue_ns",
        "t_cmd_applied_ns",
    ])?;
    for s in samples {
        w.write_record([
            s.sequence_number.to_string(),
            s.t0.to_string(),
            s.t1.to_string(),
            opt(s.t_cmd_issue),
            opt(s.t_cmd_applied),
        ])?;
    }
    w.flush()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubscriptionHandle {
    pub subscription_id: u32,
    pub mode: SubscriptionMode,
    pub period_ms: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceivedReport {
    pub subscription_id: u32,
    pub report: SensingReport,
    /// xApp clock at reception, ns.
    pub t1: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ControlOutcome {
    pub issued_at: u64,
    pub applied_at: u64,
    /// xApp clock when the ack arrived.
    pub acked_at: u64,
    pub status: AckStatus,
}

impl ControlOutcome {
    pub fn control_ns(&self) -> u64 {
        self.applied_at.saturating_sub(self.issued_at)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Sent,
    Received,
}

/// Header-level record of every message the xApp exchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub at_ns: u64,
    pub direction: Direction,
    pub msg_type: MsgType,
    pub correlation_id: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct XappStats {
    pub indications: u64,
    pub sequence_gaps: u64,
    /// Indications whose subscription was not active at the xApp.
    pub unexpected_indications: u64,
    pub decode_errors: u64,
    /// Replies that matched no outstanding request.
    pub unmatched_replies: u64,
}

pub struct XApp {
    conn: Connection,
    clock: Clock,
    policy: A1IsacPolicy,
    budget: BudgetWindow,
    beam_table: BeamTable,
    /// Sensing airtime charged per received indication, ms.
    burst_airtime_ms: f64,
    request_timeout: Duration,
    next_correlation: u32,
    active: Vec<SubscriptionHandle>,
    inbox: VecDeque<ReceivedReport>,
    pending_reply: Option<E2SensMessage>,
    last_sequence: Option<u64>,
    log: SampleLog,
    trace: Vec<TraceEntry>,
    stats: XappStats,
}

impl XApp {
    pub fn new(
        conn: Connection,
        clock: Clock,
        policy: A1IsacPolicy,
        beam_table: BeamTable,
        burst_airtime_ms: f64,
    ) -> Self {
        Self {
            conn,
            clock,
            policy,
            budget: BudgetWindow::new(),
            beam_table,
            burst_airtime_ms,
            request_timeout: DEFAULT_REQUEST_TIMEOUT,
            next_correlation: 1,
            active: Vec::new(),
            inbox: VecDeque::new(),
            pending_reply: None,
            last_sequence: None,
            log: SampleLog::new(),
            trace: Vec::new(),
            stats: XappStats::default(),
        }
    }

    pub fn with_request_timeout(mut self, timeout: Duration) -> Self {
        self.request_timeout = timeout;
        self
    }

    pub fn log(&self) -> &SampleLog {
        &self.log
    }

    pub fn trace(&self) -> &[TraceEntry] {
        &self.trace
    }

    pub fn stats(&self) -> &XappStats {
        &self.stats
    }

    pub fn clock(&self) -> &Clock {
        &self.clock
    }

    pub fn policy(&self) -> &A1IsacPolicy {
        &self.policy
    }

    /// New policies govern only requests made after this call.
    pub fn set_policy(&mut self, policy: A1IsacPolicy) {
        self.policy = policy;
    }

    pub fn subscriptions(&self) -> &[SubscriptionHandle] {
        &self.active
    }

    fn check(&mut self, request: PolicyRequest) -> Result<(), XappError> {
        let remaining = self.budget.remaining_ms(&self.policy, self.clock.now_ns());
        match enforce_policy(&self.policy, remaining, &request) {
            Verdict::Accept => Ok(()),
            v => Err(XappError::PolicyViolation(v)),
        }
    }

    fn correlation(&mut self) -> u32 {
        let id = self.next_correlation;
        self.next_correlation = self.next_correlation.wrapping_add(1).max(1);
        id
    }

    fn send(&mut self, msg: &E2SensMessage) -> Result<(), XappError> {
        self.conn.send_until(
            msg.encode(),
            FrameClass::Control,
            Instant::now() + self.request_timeout,
        )?;
        self.trace.push(TraceEntry {
            at_ns: self.clock.now_ns(),
            direction: Direction::Sent,
            msg_type: msg.msg_type(),
            correlation_id: msg.correlation_id,
        });
        Ok(())
    }

    /// Handles one inbound frame. Indications go to the inbox; replies are
    /// parked in `pending_reply`.
    fn ingest(&mut self, frame: &[u8]) {
        let t1 = self.clock.now_ns();
        let msg = match decode_message(frame) {
            Ok(m) => m,
            Err(e) => {
                log::warn!("xApp dropping undecodable frame: {e}");
                self.stats.decode_errors += 1;
                return;
            }
        };
        self.trace.push(TraceEntry {
            at_ns: t1,
            direction: Direction::Received,
            msg_type: msg.msg_type(),
            correlation_id: msg.correlation_id,
        });
        match msg.payload {
            Payload::Indication(report) => {
                self.stats.indications += 1;
                if !self.active.iter().any(|h| h.subscription_id == msg.correlation_id) {
                    self.stats.unexpected_indications += 1;
                }
                if let Some(last) = self.last_sequence {
                    if report.sequence_number > last + 1 {
                        self.stats.sequence_gaps += report.sequence_number - last - 1;
                    }
                }
                self.last_sequence = Some(report.sequence_number);
                self.budget.charge(t1, self.burst_airtime_ms);
                self.inbox.push_back(ReceivedReport {
                    subscription_id: msg.correlation_id,
                    report,
                    t1,
                });
            }
            Payload::SubscriptionResponse(_) | Payload::ControlAck(_) => {
                self.pending_reply = Some(msg);
            }
            other => {
                log::warn!("unexpected {:?} at xApp", other.msg_type());
                self.stats.unmatched_replies += 1;
            }
        }
    }

    fn await_reply(&mut self, correlation_id: u32) -> Result<E2SensMessage, XappError> {
        let deadline = Instant::now() + self.request_timeout;
        loop {
            if let Some(msg) = self.pending_reply.take() {
                if msg.correlation_id == correlation_id {
                    return Ok(msg);
                }
                self.stats.unmatched_replies += 1;
            }
            match self.conn.recv_until(deadline) {
                Ok(frame) => self.ingest(&frame),
                Err(TransportError::Timeout) => return Err(XappError::Timeout),
                Err(e) => return Err(e.into()),
            }
        }
    }

    fn subscribe(&mut self, request: SubscriptionRequest) -> Result<SubscriptionHandle, XappError> {
        Subscription::from_request(1, &request)
            .map_err(|e| XappError::InvalidSubscription(e.to_string()))?;
        let corr = self.correlation();
        self.send(&E2SensMessage::new(corr, Payload::SubscriptionRequest(request)))?;
        match self.await_reply(corr)?.payload {
            Payload::SubscriptionResponse(Some(resp)) if resp.status == ResponseStatus::Accepted => {
                let handle = SubscriptionHandle {
                    subscription_id: resp.subscription_id,
                    mode: request.mode,
                    period_ms: (request.mode == SubscriptionMode::Periodic)
                        .then_some(request.period_ms),
                };
                self.active.push(handle);
                Ok(handle)
            }
            _ => Err(XappError::Rejected),
        }
    }

    /// A period the policy would clamp is refused, not silently altered.
    pub fn subscribe_periodic(&mut self, period_ms: f64) -> Result<SubscriptionHandle, XappError> {
        self.check(PolicyRequest::Period(period_ms))?;
        self.subscribe(SubscriptionRequest::periodic(period_ms))
    }

    pub fn subscribe_event(&mut self, trigger: TriggerConfig) -> Result<SubscriptionHandle, XappError> {
        self.check(PolicyRequest::Trigger(trigger))?;
        self.subscribe(SubscriptionRequest::event(trigger))
    }

    pub fn close(&mut self, handle: &SubscriptionHandle) -> Result<(), XappError> {
        let corr = self.correlation();
        self.send(&E2SensMessage::new(
            corr,
            Payload::SubscriptionRequest(SubscriptionRequest::delete(
                handle.subscription_id,
                handle.mode,
            )),
        ))?;
        let reply = self.await_reply(corr)?;
        // Indications queued ahead of the reply are legitimate; anything for
        // this id after it is not.
        self.active.retain(|h| h.subscription_id != handle.subscription_id);
        match reply.payload {
            Payload::SubscriptionResponse(None) => Ok(()),
            _ => Err(XappError::Rejected),
        }
    }

    fn control(&mut self, action: ControlAction) -> Result<ControlOutcome, XappError> {
        let corr = self.correlation();
        let issued_at = self.clock.now_ns();
        self.send(&E2SensMessage::new(
            corr,
            Payload::ControlRequest(ControlCommand { action, issued_at }),
        ))?;
        match self.await_reply(corr)?.payload {
            Payload::ControlAck(ack) => Ok(ControlOutcome {
                issued_at,
                applied_at: ack.received_at,
                acked_at: self.clock.now_ns(),
                status: ack.status,
            }),
            _ => Err(XappError::Rejected),
        }
    }

    pub fn set_period(&mut self, period_ms: f64) -> Result<ControlOutcome, XappError> {
        self.check(PolicyRequest::Period(period_ms))?;
        let out = self.control(ControlAction::SetPeriod(period_ms))?;
        if out.status == AckStatus::Applied {
            for h in self.active.iter_mut() {
                if h.mode == SubscriptionMode::Periodic {
                    h.period_ms = Some(period_ms);
                }
            }
        }
        Ok(out)
    }

    pub fn set_beam(&mut self, beam_index: u8) -> Result<ControlOutcome, XappError> {
        let dir = self
            .beam_table
            .get(beam_index)
            .map_err(|_| XappError::UnknownBeam(beam_index))?;
        self.check(PolicyRequest::Beam {
            beam_index,
            azimuth_deg: dir.azimuth_deg,
        })?;
        self.control(ControlAction::SetBeam(beam_index))
    }

    pub fn set_sic(&mut self, enabled: bool) -> Result<ControlOutcome, XappError> {
        self.check(PolicyRequest::Sic(enabled))?;
        self.control(ControlAction::SetSic(enabled))
    }

    pub fn set_trigger(&mut self, trigger: TriggerConfig) -> Result<ControlOutcome, XappError> {
        self.check(PolicyRequest::Trigger(trigger))?;
        self.control(ControlAction::SetTrigger(trigger))
    }

    /// Returns the next indication, reading the transport until `deadline`.
    /// Does not log it.
    fn next_report(&mut self, deadline: Instant) -> Result<ReceivedReport, XappError> {
        loop {
            if let Some(r) = self.inbox.pop_front() {
                return Ok(r);
            }
            match self.conn.recv_until(deadline) {
                Ok(frame) => self.ingest(&frame),
                Err(TransportError::Timeout) => return Err(XappError::Timeout),
                Err(e) => return Err(e.into()),
            }
        }
    }

    /// Next indication, logged as a telemetry-only sample.
    pub fn recv_indication(&mut self, deadline: Instant) -> Result<ReceivedReport, XappError> {
        let r = self.next_report(deadline)?;
        self.log.push(LatencySample {
            sequence_number: r.report.sequence_number,
            t0: r.report.t0,
            t1: r.t1,
            t_cmd_issue: None,
            t_cmd_applied: None,
        });
        Ok(r)
    }

    /// Waits for an indication and answers it with a SET_PERIOD that keeps
    /// the current period, measuring the full report-to-actuation loop.
    pub fn closed_loop_probe(&mut self, deadline: Instant) -> Result<LatencySample, XappError> {
        let period = self
            .active
            .iter()
            .find_map(|h| h.period_ms)
            .ok_or_else(|| XappError::InvalidSubscription("no periodic subscription".into()))?;
        let r = self.next_report(deadline)?;
        let out = self.set_period(period)?;
        let sample = LatencySample {
            sequence_number: r.report.sequence_number,
            t0: r.report.t0,
            t1: r.t1,
            t_cmd_issue: Some(out.issued_at),
            t_cmd_applied: Some(out.applied_at),
        };
        self.log.push(sample);
        Ok(sample)
    }

    /// Takes every indication already buffered or waiting on the
    /// transport, logging each.
    pub fn drain(&mut self) -> Vec<ReceivedReport> {
        while let Ok(frame) = self.conn.try_recv() {
            self.ingest(&frame);
        }
        let out: Vec<ReceivedReport> = self.inbox.drain(..).collect();
        for r in &out {
            self.log.push(LatencySample {
                sequence_number: r.report.sequence_number,
                t0: r.report.t0,
                t1: r.t1,
                t_cmd_issue: None,
                t_cmd_applied: None,
            });
        }
        out
    }

    pub fn into_connection(self) -> Connection {
        self.conn
    }
}

/// Writes a CDF as CSV, one `(value_ms, fraction)` row per step.
pub fn write_cdf_csv(
    path: &Path,
    series: &[(&str, &[(f64, f64)])],
) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "series,latency_ms,cdf")?;
    for (name, cdf) in series {
        for (x, p) in cdf.iter() {
            writeln!(f, "{name},{x},{p}")?;
        }
    }
    f.flush()
}

pub fn to_ms(ns: u64) -> f64 {
    ns_to_ms(ns)
}
