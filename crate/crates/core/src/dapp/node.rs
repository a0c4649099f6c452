//! Scheduled dApp loop.
//!
//! One thread owns all dApp state. Between emission deadlines it blocks on
//! the transport, so control commands are applied as soon as they arrive and
//! always before the next report is built.

use std::collections::{BTreeMap, HashMap};
use std::time::{Duration, Instant};

use num_complex::Complex64;
use serde::Serialize;

use super::estimator::{estimate_kpis, AngularSweep, EstimateContext, Periodogram};
use super::triggers::{evaluate_triggers, TriggerConfig};
use super::{DappConfig, DappError, SensingReport};
use crate::clock::Clock;
use crate::e2sm::{
    decode_message, AckStatus, ControlAck, ControlAction, ControlCommand, E2SensMessage,
    MachineState, Payload, SubscriptionAction, SubscriptionEvent, SubscriptionMachine,
    SubscriptionMode, SubscriptionRequest,
};
use crate::ofh::{lookup_waveform, BeamTable, IqBlock, WaveformTable};
use crate::radio::{generate_probe, EchoScene, Radio};
use crate::transport::{Connection, FrameClass, TransportError};

/// How long the loop blocks on the transport when nothing is subscribed.
const IDLE_POLL: Duration = Duration::from_millis(20);

/// Upper bound on waiting for outbox room for a control reply.
const CONTROL_SEND_TIMEOUT: Duration = Duration::from_secs(1);

/// Supplies one received sensing burst per cycle.
pub trait BlockSource: Send {
    fn next_block(
        &mut self,
        beam: u8,
        sic_enabled: bool,
        tx_timestamp: u64,
    ) -> Result<IqBlock, DappError>;
}

/// Radio simulator driven by a fixed scene; the noise seed advances per block.
#[derive(Debug, Clone)]
pub struct SimulatedSource {
    radio: Radio,
    scene: EchoScene,
    blocks: u64,
    sic_off_penalty_db: f64,
}

impl SimulatedSource {
    pub fn new(radio: Radio, scene: EchoScene, sic_off_penalty_db: f64) -> Self {
        Self {
            radio,
            scene,
            blocks: 0,
            sic_off_penalty_db,
        }
    }
}

impl BlockSource for SimulatedSource {
    fn next_block(
        &mut self,
        beam: u8,
        sic_enabled: bool,
        tx_timestamp: u64,
    ) -> Result<IqBlock, DappError> {
        let mut scene = self.scene.clone();
        scene.seed = self.scene.seed.wrapping_add(self.blocks);
        if !sic_enabled {
            // A perfect canceller leaves no residual to scale from.
            let residual = if scene.residual_si_power_db.is_finite() {
                scene.residual_si_power_db
            } else {
                0.0
            };
            scene.residual_si_power_db = residual + self.sic_off_penalty_db;
        }
        self.blocks += 1;
        let (block, _) = self.radio.apply_scene(&scene, beam, tx_timestamp)?;
        Ok(block)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DappStats {
    pub cycles: u64,
    pub reports_emitted: u64,
    /// Blocks whose waveform id was not in the table.
    pub dropped_blocks: u64,
    pub decode_errors: BTreeMap<String, u64>,
    pub protocol_violations: u64,
    pub commands_applied: u64,
    pub commands_rejected: u64,
    pub evicted_telemetry: u64,
}

struct WaveformPipeline {
    periodogram: Periodogram,
    pilots: Vec<Vec<Complex64>>,
}

pub struct DappNode<S: BlockSource> {
    config: DappConfig,
    waveforms: WaveformTable,
    beam_table: BeamTable,
    source: S,
    clock: Clock,
    pipelines: HashMap<u16, WaveformPipeline>,
    sweep: AngularSweep,
    prev: Option<SensingReport>,
    next_sequence: u64,
    periodic: SubscriptionMachine,
    event: SubscriptionMachine,
    trigger: Option<TriggerConfig>,
    next_cycle: Option<Instant>,
    stats: DappStats,
}

impl<S: BlockSource> DappNode<S> {
    pub fn new(
        config: DappConfig,
        waveforms: WaveformTable,
        beam_table: BeamTable,
        source: S,
        clock: Clock,
    ) -> Result<Self, DappError> {
        config.validate()?;
        lookup_waveform(&waveforms, config.waveform_id)?;
        beam_table.get(config.active_beam)?;
        Ok(Self {
            config,
            waveforms,
            beam_table,
            source,
            clock,
            pipelines: HashMap::new(),
            sweep: AngularSweep::new(),
            prev: None,
            next_sequence: 0,
            periodic: SubscriptionMachine::new(SubscriptionMode::Periodic, 1),
            event: SubscriptionMachine::new(SubscriptionMode::Event, 0x8000_0000),
            trigger: None,
            next_cycle: None,
            stats: DappStats::default(),
        })
    }

    pub fn config(&self) -> &DappConfig {
        &self.config
    }

    pub fn stats(&self) -> &DappStats {
        &self.stats
    }

    fn any_active(&self) -> bool {
        self.periodic.is_active() || self.event.is_active()
    }

    fn period(&self) -> Duration {
        Duration::from_secs_f64(self.config.report_period_ms / 1e3)
    }

    /// Serves one connection until the peer goes away.
    pub fn run(mut self, conn: &Connection) -> Result<DappStats, DappError> {
        loop {
            let deadline = match self.next_cycle {
                Some(t) if self.any_active() => t,
                _ => Instant::now() + IDLE_POLL,
            };
            match conn.recv_until(deadline) {
                Ok(frame) => self.handle_frame(&frame, conn)?,
                Err(TransportError::Timeout) => {
                    if self.any_active() && self.next_cycle.is_some_and(|t| Instant::now() >= t) {
                        self.cycle(conn)?;
                    }
                }
                Err(TransportError::Disconnected) => break,
                Err(e) => return Err(e.into()),
            }
        }
        for m in [&mut self.periodic, &mut self.event] {
            let _ = m.step(SubscriptionEvent::TransportLost);
        }
        self.stats.evicted_telemetry = conn.evicted_telemetry();
        Ok(self.stats)
    }

    fn send_control(&self, conn: &Connection, msg: &E2SensMessage) -> Result<(), DappError> {
        match conn.send_until(
            msg.encode(),
            FrameClass::Control,
            Instant::now() + CONTROL_SEND_TIMEOUT,
        ) {
            Ok(_) | Err(TransportError::Disconnected) => Ok(()),
            Err(e) => Err(e.into()),
        }
    }

    fn handle_frame(&mut self, frame: &[u8], conn: &Connection) -> Result<(), DappError> {
        let received_at = self.clock.now_ns();
        let msg = match decode_message(frame) {
            Ok(m) => m,
            Err(e) => {
                log::warn!("dropping undecodable frame: {e}");
                *self
                    .stats
                    .decode_errors
                    .entry(format!("{:?}", e.kind()))
                    .or_default() += 1;
                return Ok(());
            }
        };
        match msg.payload {
            Payload::SubscriptionRequest(req) => self.handle_subscription(msg.correlation_id, req, conn),
            Payload::ControlRequest(cmd) => {
                let status = self.apply_command(&cmd);
                let ack = E2SensMessage::new(
                    msg.correlation_id,
                    Payload::ControlAck(ControlAck {
                        kind: cmd.action.kind(),
                        received_at,
                        status,
                    }),
                );
                self.send_control(conn, &ack)
            }
            other => {
                log::warn!("unexpected {:?} at dApp", other.msg_type());
                self.stats.protocol_violations += 1;
                Ok(())
            }
        }
    }

    fn handle_subscription(
        &mut self,
        correlation_id: u32,
        req: SubscriptionRequest,
        conn: &Connection,
    ) -> Result<(), DappError> {
        let machine = match req.mode {
            SubscriptionMode::Periodic => &mut self.periodic,
            SubscriptionMode::Event => &mut self.event,
        };
        let event = match req.action {
            SubscriptionAction::Subscribe => SubscriptionEvent::RequestReceived {
                correlation_id,
                request: req,
            },
            SubscriptionAction::Delete => {
                if machine.subscription_id() != Some(req.subscription_id) {
                    self.stats.protocol_violations += 1;
                    return Ok(());
                }
                SubscriptionEvent::Close { correlation_id }
            }
        };
        let out = match machine.step(event) {
            Ok(out) => out,
            Err(_) => {
                self.stats.protocol_violations += 1;
                return Ok(());
            }
        };
        for m in &out {
            self.send_control(conn, m)?;
        }
        let machine = match req.mode {
            SubscriptionMode::Periodic => &mut self.periodic,
            SubscriptionMode::Event => &mut self.event,
        };
        if machine.state() == MachineState::Pending {
            machine
                .step(SubscriptionEvent::ResponseSent)
                .expect("pending accepts ResponseSent");
            let sub = *machine.subscription().expect("pending has a subscription");
            match req.mode {
                SubscriptionMode::Periodic => {
                    self.config.report_period_ms = sub.period_ms.expect("periodic has a period");
                }
                SubscriptionMode::Event => self.trigger = sub.trigger,
            }
            if self.next_cycle.is_none() || !self.any_active_other_than(req.mode) {
                self.next_cycle = Some(Instant::now() + self.period());
            }
        }
        Ok(())
    }

    fn any_active_other_than(&self, mode: SubscriptionMode) -> bool {
        match mode {
            SubscriptionMode::Periodic => self.event.is_active(),
            SubscriptionMode::Event => self.periodic.is_active(),
        }
    }

    fn apply_command(&mut self, cmd: &ControlCommand) -> AckStatus {
        let applied = match cmd.action {
            ControlAction::SetPeriod(p) => {
                if p > 0.0 && p.is_finite() {
                    if p != self.config.report_period_ms {
                        let old = self.period();
                        self.config.report_period_ms = p;
                        // Re-anchor on the last scheduled cycle so the new
                        // period takes effect on the very next report.
                        if let Some(next) = self.next_cycle {
                            let last = next.checked_sub(old).unwrap_or(next);
                            self.next_cycle = Some((last + self.period()).max(Instant::now()));
                        }
                    }
                    true
                } else {
                    false
                }
            }
            ControlAction::SetBeam(b) => {
                if self.beam_table.contains(b) {
                    self.config.active_beam = b;
                    true
                } else {
                    false
                }
            }
            ControlAction::SetSic(on) => {
                self.config.sic_enabled = on;
                true
            }
            ControlAction::SetTrigger(t) => {
                if t.is_empty() {
                    false
                } else {
                    self.trigger = Some(t);
                    self.prev = None;
                    true
                }
            }
        };
        if applied {
            self.stats.commands_applied += 1;
            AckStatus::Applied
        } else {
            self.stats.commands_rejected += 1;
            AckStatus::Rejected
        }
    }

    /// Builds the report for the current configuration without emitting it.
    pub fn sense_once(&mut self) -> Result<Option<SensingReport>, DappError> {
        let tx_ts = self.clock.now_ns();
        let block = self
            .source
            .next_block(self.config.active_beam, self.config.sic_enabled, tx_ts)?;
        let wf_id = block.metadata.waveform_id;
        let cfg = match lookup_waveform(&self.waveforms, wf_id) {
            Ok(cfg) => cfg.clone(),
            Err(_) => {
                self.stats.dropped_blocks += 1;
                return Ok(None);
            }
        };
        let probe_seed = self.config.probe_seed;
        let pipeline = self.pipelines.entry(wf_id).or_insert_with(|| WaveformPipeline {
            periodogram: Periodogram::new(&cfg),
            pilots: generate_probe(&cfg, probe_seed).grid,
        });
        let map = pipeline.periodogram.compute(&block, &pipeline.pilots)?;
        let report = estimate_kpis(
            &map,
            EstimateContext {
                cfg: &cfg,
                waveform_id: wf_id,
                beam_table: &self.beam_table,
                beam_index: block.metadata.beam_index,
            },
            &mut self.sweep,
        )?;
        Ok(Some(report))
    }

    fn cycle(&mut self, conn: &Connection) -> Result<(), DappError> {
        self.stats.cycles += 1;
        let scheduled = self.next_cycle.unwrap_or_else(Instant::now);
        let mut next = scheduled + self.period();
        let now = Instant::now();
        if next <= now {
            next = now + self.period();
        }
        self.next_cycle = Some(next);

        let Some(report) = self.sense_once()? else {
            return Ok(());
        };
        // Crossings are judged against the previous report evaluated under
        // the current event subscription and trigger.
        let fired = match (self.event.is_active(), self.trigger.as_ref()) {
            (true, Some(t)) => {
                let fired = !evaluate_triggers(&report, self.prev.as_ref(), t).is_empty();
                self.prev = Some(report);
                fired
            }
            _ => {
                self.prev = None;
                false
            }
        };

        if self.periodic.is_active() {
            self.emit(report, SubscriptionMode::Periodic, conn)?;
        }
        if fired {
            self.emit(report, SubscriptionMode::Event, conn)?;
        }
        Ok(())
    }

    fn emit(
        &mut self,
        mut report: SensingReport,
        mode: SubscriptionMode,
        conn: &Connection,
    ) -> Result<(), DappError> {
        report.sequence_number = self.next_sequence;
        report.t0 = self.clock.now_ns();
        let machine = match mode {
            SubscriptionMode::Periodic => &mut self.periodic,
            SubscriptionMode::Event => &mut self.event,
        };
        let Ok(out) = machine.step(SubscriptionEvent::Indication(Box::new(report))) else {
            self.stats.protocol_violations += 1;
            return Ok(());
        };
        self.next_sequence += 1;
        for m in out {
            match conn.send(m.encode(), FrameClass::Telemetry) {
                Ok(_) => self.stats.reports_emitted += 1,
                Err(TransportError::Disconnected) => return Ok(()),
                Err(TransportError::Backpressure) => {}
                Err(e) => return Err(e.into()),
            }
        }
        Ok(())
    }
}
