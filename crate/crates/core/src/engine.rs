//! Deterministic discrete-event core: the ordered event queue and the run
//! driver that wires session control, broadcast delivery, unicast recovery,
//! and playback into one scenario execution.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::collections::BTreeMap;

use crate::broadcast::{
    broadcast_segment, DeliveryStatus, FecParams, LossModel, LossProcess,
};
use crate::error::{Error, Result};
use crate::media::{build_presentation, PresentationConfig, RepId};
use crate::player::{run_playback, PlaybackInput, PlayerConfig, RunResult};
use crate::rng::stream_rng;
use crate::sarp::{RecoveryMode, RecoveryRequest, SarpProxy};
use crate::session::{
    run_session_start, FaultPlan, ProcedureTrace, ServiceParams, SessionResult, StepLabel,
    Topology,
};
use crate::unicast::{BandwidthProfile, RnisOracle, UnicastChannel, DEFAULT_BURST_BYTES};

// ===========================================================================
// Event queue
// ===========================================================================

/// What a scheduled event does when it fires.
#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    TraceStep { step: StepLabel, area: Option<String> },
    SegmentAvailable { index: u32 },
    BroadcastOutcome { index: u32 },
    RecoveryRequest { index: u32 },
    TransferComplete { index: u32 },
    PlaybackTick,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time_s: f64,
    /// Monotonic tie-breaker: equal-time events fire in scheduling order.
    pub sequence: u64,
    pub kind: EventKind,
}

#[derive(Debug, Clone)]
struct Queued(Event);

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed so the BinaryHeap pops the smallest (time, sequence).
        other
            .0
            .time_s
            .total_cmp(&self.0.time_s)
            .then(other.0.sequence.cmp(&self.0.sequence))
    }
}

/// Time-ordered event queue with FIFO semantics among equal times.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Queued>,
    next_sequence: u64,
    now_s: f64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now_s(&self) -> f64 {
        self.now_s
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Schedule an event; returns its sequence number. The past is off
    /// limits.
    pub fn schedule(&mut self, time_s: f64, kind: EventKind) -> Result<u64> {
        if !time_s.is_finite() {
            return Err(Error::Engine(format!(
                "event time {time_s} must be finite"
            )));
        }
        if time_s < self.now_s - 1e-9 {
            return Err(Error::Engine(format!(
                "cannot schedule an event at {time_s} when the clock is already at {}",
                self.now_s
            )));
        }
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.heap.push(Queued(Event {
            time_s,
            sequence,
            kind,
        }));
        Ok(sequence)
    }

    /// Process every event with time <= `t_end` in (time, sequence) order,
    /// advancing the clock to each event before its handler runs. Returns
    /// the processed-event count; a handler error aborts the run.
    pub fn run_until<F>(&mut self, t_end: f64, mut handler: F) -> Result<usize>
    where
        F: FnMut(&mut EventQueue, &Event) -> Result<()>,
    {
        let mut processed = 0usize;
        while let Some(next) = self.heap.peek() {
            if next.0.time_s > t_end {
                break;
            }
            let event = self.heap.pop().expect("peeked entry still present").0;
            self.now_s = self.now_s.max(event.time_s);
            handler(self, &event)?;
            processed += 1;
        }
        Ok(processed)
    }
}

// ===========================================================================
// Scenario driver
// ===========================================================================

/// Session-control phase configuration; when present, the procedure runs to
/// completion before any media flows.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionScenario {
    pub params: ServiceParams,
    pub topology: Topology,
    pub faults: FaultPlan,
}

impl Default for SessionScenario {
    fn default() -> Self {
        let params = ServiceParams::default();
        let topology = Topology::uniform(&params.broadcast_areas, true);
        Self {
            params,
            topology,
            faults: FaultPlan::none(),
        }
    }
}

/// Everything one run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub presentation: PresentationConfig,
    pub fec: FecParams,
    pub loss: LossModel,
    pub profile: BandwidthProfile,
    pub mode: RecoveryMode,
    pub player: PlayerConfig,
    pub master_seed: u64,
    pub broadcast_delay_s: f64,
    /// Lag between a segment missing its broadcast window and the recovery
    /// request going out.
    pub detection_delay_s: f64,
    pub burst_bytes: f64,
    pub rnis_staleness_s: f64,
    pub session: Option<SessionScenario>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            presentation: PresentationConfig::default(),
            fec: FecParams::default(),
            loss: LossModel::ErrorFile(crate::broadcast::ErrorFile::new([])),
            profile: BandwidthProfile::constant(4_000_000.0)
                .expect("constant profile with a positive rate"),
            mode: RecoveryMode::SarpOff,
            player: PlayerConfig::default(),
            master_seed: 0,
            broadcast_delay_s: 0.0,
            detection_delay_s: 0.0,
            burst_bytes: DEFAULT_BURST_BYTES,
            rnis_staleness_s: 0.0,
            session: None,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.broadcast_delay_s.is_finite() || self.broadcast_delay_s < 0.0 {
            return Err(Error::Engine(format!(
                "broadcast_delay_s {} must be >= 0",
                self.broadcast_delay_s
            )));
        }
        if !self.detection_delay_s.is_finite() || self.detection_delay_s < 0.0 {
            return Err(Error::Engine(format!(
                "detection_delay_s {} must be >= 0",
                self.detection_delay_s
            )));
        }
        Ok(())
    }
}

/// Everything one run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub playback: RunResult,
    pub recovery_count: u64,
    pub recovery_bytes: u64,
    pub served_reps: BTreeMap<RepId, u64>,
    /// Segment indices that missed their broadcast window, in index order.
    pub lost_segments: Vec<u32>,
    /// Wall time at which media started flowing (end of session control).
    pub media_epoch_s: f64,
    pub session_trace: Option<ProcedureTrace>,
    pub processed_events: usize,
}

/// Execute one scenario: session control (when enabled), then per-segment
/// availability, broadcast outcome, recovery of lost segments over unicast,
/// and finally playback over the assembled arrival schedule.
pub fn run_scenario(scenario: &ScenarioConfig) -> Result<ScenarioResult> {
    scenario.validate()?;

    let (media_epoch_s, session_trace) = match &scenario.session {
        None => (0.0, None),
        Some(s) => match run_session_start(&s.params, &s.topology, &s.faults)? {
            SessionResult::Failed { step, reason, .. } => {
                return Err(Error::Session(format!(
                    "session start failed at step {step}: {reason}"
                )));
            }
            SessionResult::Established { trace, .. } => {
                let epoch = trace.entries().last().map_or(0.0, |e| e.time_s);
                (epoch, Some(trace))
            }
        },
    };

    let presentation = build_presentation(&scenario.presentation, scenario.master_seed)?;
    let segment_count = presentation.segment_count();
    let loss = LossProcess::bind(&scenario.loss, segment_count)?;
    // The per-packet stream is keyed by the loss model's own seed so a fixed
    // error set and a packet process never share draws.
    let mut packet_rng = stream_rng(
        match &scenario.loss {
            LossModel::PacketBernoulli { seed, .. } => *seed,
            _ => scenario.master_seed,
        },
        "packet-loss",
    );
    let broadcast_rep = presentation.broadcast_representation().id.clone();
    let mut channel = UnicastChannel::new(scenario.profile.clone(), scenario.burst_bytes)?;
    let rnis = RnisOracle::new(scenario.profile.clone(), scenario.rnis_staleness_s)?;
    let mut proxy = SarpProxy::new(&presentation);

    let mut queue = EventQueue::new();
    if let Some(trace) = &session_trace {
        for entry in trace.entries() {
            queue.schedule(
                entry.time_s,
                EventKind::TraceStep {
                    step: entry.step,
                    area: entry.area.clone(),
                },
            )?;
        }
    }
    for index in 0..segment_count {
        let seg = presentation.segment_ref(&broadcast_rep, index)?;
        queue.schedule(
            media_epoch_s + seg.availability_time_s,
            EventKind::SegmentAvailable { index },
        )?;
    }

    let mut arrivals: Vec<(u32, f64)> = Vec::with_capacity(segment_count as usize);
    let mut lost_segments: Vec<u32> = Vec::new();
    let processed_events = queue.run_until(f64::INFINITY, |queue, event| {
        match &event.kind {
            EventKind::TraceStep { .. } | EventKind::PlaybackTick => {}
            EventKind::SegmentAvailable { index } => {
                queue.schedule(event.time_s, EventKind::BroadcastOutcome { index: *index })?;
            }
            EventKind::BroadcastOutcome { index } => {
                let seg = presentation.segment_ref(&broadcast_rep, *index)?;
                let outcome = broadcast_segment(
                    &seg,
                    &scenario.fec,
                    &loss,
                    &mut packet_rng,
                    scenario.broadcast_delay_s,
                );
                match outcome.status {
                    DeliveryStatus::Decoded => {
                        let decode = outcome
                            .decode_time_s
                            .expect("decoded outcomes carry a decode time");
                        arrivals.push((*index, media_epoch_s + decode));
                    }
                    DeliveryStatus::Lost => {
                        lost_segments.push(*index);
                        queue.schedule(
                            event.time_s + scenario.detection_delay_s,
                            EventKind::RecoveryRequest { index: *index },
                        )?;
                    }
                }
            }
            EventKind::RecoveryRequest { index } => {
                let request = RecoveryRequest {
                    terminal_id: "ue-1".to_string(),
                    segment_index: *index,
                    request_time_s: event.time_s,
                    default_rep_id: broadcast_rep.clone(),
                };
                let served = proxy.handle_recovery(
                    &request,
                    &presentation,
                    &rnis,
                    scenario.mode,
                    &mut channel,
                )?;
                queue.schedule(served.end_s, EventKind::TransferComplete { index: *index })?;
            }
            EventKind::TransferComplete { index } => {
                arrivals.push((*index, event.time_s));
            }
        }
        Ok(())
    })?;

    let playback_input = PlaybackInput {
        segment_duration_s: presentation.segment_duration_s,
        segment_count,
        media_epoch_s,
        arrivals,
    };
    let playback = run_playback(&playback_input, &scenario.player)?;

    let metrics = proxy.metrics();
    Ok(ScenarioResult {
        playback,
        recovery_count: metrics.requests,
        recovery_bytes: metrics.recovery_bytes,
        served_reps: metrics.served_by_rep.clone(),
        lost_segments,
        media_epoch_s,
        session_trace,
        processed_events,
    })
}
