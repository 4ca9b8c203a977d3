//! Session-start signaling for the broadcast service: a typed state machine
//! over the control-plane entities (content provider, VSCF, AMF, RAN, SMF,
//! PCF, UPF, VSUF), with fault injection and trace validation.
//!
//! Steps 1-12 run step-major: global steps once, per-area steps once per
//! broadcast area, each step gated on its direct predecessors. A dropped or
//! rejected message removes its step from the trace and blocks everything
//! downstream of it, while independent branches keep executing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

// ===========================================================================
// Labels and actors
// ===========================================================================

/// Signaling step labels, in canonical execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StepLabel {
    S1,
    S2,
    S3,
    S4a,
    S4b,
    S5,
    S6,
    S7,
    S8a,
    S8b,
    S9a,
    S9b,
    S10,
    S11,
    S12a,
    S12b,
    S12,
}

impl StepLabel {
    pub const ALL: [StepLabel; 17] = [
        StepLabel::S1,
        StepLabel::S2,
        StepLabel::S3,
        StepLabel::S4a,
        StepLabel::S4b,
        StepLabel::S5,
        StepLabel::S6,
        StepLabel::S7,
        StepLabel::S8a,
        StepLabel::S8b,
        StepLabel::S9a,
        StepLabel::S9b,
        StepLabel::S10,
        StepLabel::S11,
        StepLabel::S12a,
        StepLabel::S12b,
        StepLabel::S12,
    ];

    /// Steps that run once per broadcast area; the rest are global.
    pub fn is_per_area(self) -> bool {
        matches!(
            self,
            StepLabel::S3
                | StepLabel::S4a
                | StepLabel::S4b
                | StepLabel::S5
                | StepLabel::S6
                | StepLabel::S7
                | StepLabel::S8a
                | StepLabel::S8b
                | StepLabel::S9a
                | StepLabel::S9b
                | StepLabel::S10
        )
    }

    /// The entity that emits the step's message.
    pub fn actor(self) -> Actor {
        match self {
            StepLabel::S1 => Actor::ContentProvider,
            StepLabel::S2 => Actor::Vscf,
            StepLabel::S3 => Actor::Amf,
            StepLabel::S4a => Actor::Ran,
            StepLabel::S4b => Actor::Amf,
            StepLabel::S5 => Actor::Ran,
            StepLabel::S6 => Actor::Smf,
            StepLabel::S7 => Actor::Smf,
            StepLabel::S8a => Actor::Vscf,
            StepLabel::S8b => Actor::Smf,
            StepLabel::S9a => Actor::Smf,
            StepLabel::S9b => Actor::Smf,
            StepLabel::S10 => Actor::Smf,
            StepLabel::S11 => Actor::Amf,
            StepLabel::S12a => Actor::Vscf,
            StepLabel::S12b => Actor::Vsuf,
            StepLabel::S12 => Actor::Vscf,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let norm = text.trim().to_ascii_lowercase().replace('.', "");
        Ok(match norm.as_str() {
            "1" => StepLabel::S1,
            "2" => StepLabel::S2,
            "3" => StepLabel::S3,
            "4a" => StepLabel::S4a,
            "4b" => StepLabel::S4b,
            "5" => StepLabel::S5,
            "6" => StepLabel::S6,
            "7" => StepLabel::S7,
            "8a" => StepLabel::S8a,
            "8b" => StepLabel::S8b,
            "9a" => StepLabel::S9a,
            "9b" => StepLabel::S9b,
            "10" => StepLabel::S10,
            "11" => StepLabel::S11,
            "12a" => StepLabel::S12a,
            "12b" => StepLabel::S12b,
            "12" => StepLabel::S12,
            _ => return Err(Error::Session(format!("unknown step label '{text}'"))),
        })
    }
}

impl fmt::Display for StepLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StepLabel::S1 => "1",
            StepLabel::S2 => "2",
            StepLabel::S3 => "3",
            StepLabel::S4a => "4.a",
            StepLabel::S4b => "4.b",
            StepLabel::S5 => "5",
            StepLabel::S6 => "6",
            StepLabel::S7 => "7",
            StepLabel::S8a => "8.a",
            StepLabel::S8b => "8.b",
            StepLabel::S9a => "9.a",
            StepLabel::S9b => "9.b",
            StepLabel::S10 => "10",
            StepLabel::S11 => "11",
            StepLabel::S12a => "12.a",
            StepLabel::S12b => "12.b",
            StepLabel::S12 => "12",
        };
        f.write_str(s)
    }
}

/// Control-plane entity roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Actor {
    ContentProvider,
    Vscf,
    Amf,
    Ran,
    Smf,
    Pcf,
    Upf,
    Vsuf,
}

impl fmt::Display for Actor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Actor::ContentProvider => "content-provider",
            Actor::Vscf => "VSCF",
            Actor::Amf => "AMF",
            Actor::Ran => "RAN",
            Actor::Smf => "SMF",
            Actor::Pcf => "PCF",
            Actor::Upf => "UPF",
            Actor::Vsuf => "VSUF",
        };
        f.write_str(s)
    }
}

// ===========================================================================
// Parameters, topology, faults
// ===========================================================================

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestMode {
    Push,
    Pull,
}

/// What the content provider asks for when the service is created.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceParams {
    pub max_video_bitrate_bps: u64,
    pub max_delay_s: f64,
    pub broadcast_areas: Vec<String>,
    pub dnn: String,
    pub ingest_mode: IngestMode,
}

impl ServiceParams {
    pub fn validate(&self) -> Result<()> {
        if self.broadcast_areas.is_empty() {
            return Err(Error::Session("at least one broadcast area is required".into()));
        }
        let unique: BTreeSet<&String> = self.broadcast_areas.iter().collect();
        if unique.len() != self.broadcast_areas.len() {
            return Err(Error::Session("broadcast area ids must be unique".into()));
        }
        if self.max_video_bitrate_bps == 0 {
            return Err(Error::Session("max_video_bitrate_bps must be positive".into()));
        }
        if !self.max_delay_s.is_finite() || self.max_delay_s <= 0.0 {
            return Err(Error::Session(format!(
                "max_delay_s {} must be positive",
                self.max_delay_s
            )));
        }
        if self.dnn.is_empty() {
            return Err(Error::Session("dnn must not be empty".into()));
        }
        Ok(())
    }
}

impl Default for ServiceParams {
    fn default() -> Self {
        Self {
            max_video_bitrate_bps: 6_000_000,
            max_delay_s: 0.3,
            broadcast_areas: vec!["area-1".to_string()],
            dnn: "broadcast.media".to_string(),
            ingest_mode: IngestMode::Push,
        }
    }
}

/// Entity roster for one broadcast area.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaTopology {
    pub area_id: String,
    pub ran_id: String,
    pub smf_id: String,
    pub upf_id: String,
    /// True when the user-plane function serving the area sits at the edge
    /// (step 9.b); false routes through the central core (step 9.a).
    pub upf_at_mec: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub areas: Vec<AreaTopology>,
    /// Wall-clock cost of each signaling message; trace times advance by this
    /// amount per executed step.
    pub signaling_latency_s: f64,
}

impl Topology {
    /// One uniform roster per area id, every area's UPF placed the same way.
    pub fn uniform(area_ids: &[String], upf_at_mec: bool) -> Self {
        Self {
            areas: area_ids
                .iter()
                .map(|id| AreaTopology {
                    area_id: id.clone(),
                    ran_id: format!("ran-{id}"),
                    smf_id: format!("smf-{id}"),
                    upf_id: format!("upf-{id}"),
                    upf_at_mec,
                })
                .collect(),
            signaling_latency_s: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultMode {
    Drop,
    Reject,
}

impl fmt::Display for FaultMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FaultMode::Drop => "drop",
            FaultMode::Reject => "reject",
        })
    }
}

impl FaultMode {
    pub fn parse(text: &str) -> Result<Self> {
        match text.trim().to_ascii_lowercase().as_str() {
            "drop" => Ok(FaultMode::Drop),
            "reject" => Ok(FaultMode::Reject),
            other => Err(Error::Session(format!("unknown fault mode '{other}'"))),
        }
    }
}

/// Which steps fail and how. A planned fault fires every time its step would
/// execute (every area for per-area steps).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FaultPlan {
    faults: BTreeMap<StepLabel, FaultMode>,
}

impl FaultPlan {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn with(mut self, step: StepLabel, mode: FaultMode) -> Self {
        self.faults.insert(step, mode);
        self
    }

    pub fn get(&self, step: StepLabel) -> Option<FaultMode> {
        self.faults.get(&step).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.faults.is_empty()
    }
}

// ===========================================================================
// Session artifacts
// ===========================================================================

/// Policy rule derived from the service parameters at step 8.b.
#[derive(Debug, Clone, PartialEq)]
pub struct PccRule {
    pub rule_id: String,
    pub max_bitrate_bps: u64,
    pub max_delay_s: f64,
    pub flow_description: String,
}

/// Established multicast PDU session for one broadcast area.
#[derive(Debug, Clone, PartialEq)]
pub struct PduSessionContext {
    pub pdu_session_id: String,
    pub dnn: String,
    pub area: String,
    pub ip_multicast_address: String,
    pub pcc_rule: PccRule,
}

/// Context under construction, before its policy rule exists.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextDraft {
    pub pdu_session_id: String,
    pub dnn: String,
    pub area: String,
    pub ip_multicast_address: String,
}

/// Per-SMF multicast address allocator. Each instance owns a disjoint pool.
#[derive(Debug, Clone, PartialEq)]
pub struct SmfState {
    pub smf_id: String,
    pool: Vec<String>,
    next: usize,
}

impl SmfState {
    pub fn new(smf_id: impl Into<String>, pool: Vec<String>) -> Self {
        Self {
            smf_id: smf_id.into(),
            pool,
            next: 0,
        }
    }

    /// Default pool for the `area_index`-th area: 254 addresses in a block
    /// private to that area, so separate SMFs can never collide.
    pub fn with_area_pool(smf_id: impl Into<String>, area_index: usize) -> Self {
        let pool = (1..=254)
            .map(|host| format!("239.1.{}.{host}", area_index + 1))
            .collect();
        Self::new(smf_id, pool)
    }

    pub fn remaining(&self) -> usize {
        self.pool.len() - self.next
    }
}

/// Hand out the next address from the SMF's pool; every call returns a value
/// the instance has never returned before.
pub fn allocate_multicast_address(smf: &mut SmfState) -> Result<String> {
    if smf.next >= smf.pool.len() {
        return Err(Error::Session(format!(
            "multicast address pool of {} exhausted after {} allocations",
            smf.smf_id,
            smf.pool.len()
        )));
    }
    let addr = smf.pool[smf.next].clone();
    smf.next += 1;
    Ok(addr)
}

/// Derive the policy rule for a session under construction: QoS bounds copy
/// the service parameters, the flow description pins the multicast address.
pub fn create_pcc_rule(params: &ServiceParams, draft: &ContextDraft) -> PccRule {
    PccRule {
        rule_id: format!("pcc-{}", draft.pdu_session_id),
        max_bitrate_bps: params.max_video_bitrate_bps,
        max_delay_s: params.max_delay_s,
        flow_description: format!("udp://{}:5000", draft.ip_multicast_address),
    }
}

// ===========================================================================
// Traces
// ===========================================================================

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub step: StepLabel,
    pub actor: Actor,
    /// Present for per-area steps.
    pub area: Option<String>,
    pub time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProcedureTrace {
    entries: Vec<TraceEntry>,
}

impl ProcedureTrace {
    pub fn entries(&self) -> &[TraceEntry] {
        &self.entries
    }

    pub fn labels(&self) -> Vec<StepLabel> {
        self.entries.iter().map(|e| e.step).collect()
    }

    pub fn contains(&self, step: StepLabel) -> bool {
        self.entries.iter().any(|e| e.step == step)
    }

    pub fn push(&mut self, entry: TraceEntry) {
        self.entries.push(entry);
    }
}

/// Export a trace as CSV with header `step,actor,area,time_s`; global steps
/// leave the area column empty.
pub fn write_trace_csv(trace: &ProcedureTrace, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::Session(format!("cannot write trace {}: {e}", path.display())))?;
    writer
        .write_record(["step", "actor", "area", "time_s"])
        .map_err(|e| Error::Session(e.to_string()))?;
    for e in &trace.entries {
        writer
            .write_record([
                e.step.to_string(),
                e.actor.to_string(),
                e.area.clone().unwrap_or_default(),
                format!("{}", e.time_s),
            ])
            .map_err(|e| Error::Session(e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::Session(e.to_string()))?;
    Ok(())
}

// ===========================================================================
// Causal structure
// ===========================================================================

/// A direct prerequisite of a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pred {
    /// A global step must have executed.
    Global(StepLabel),
    /// The named per-area step must have executed for the same area.
    SameArea(StepLabel),
    /// Either user-plane programming variant must have executed for the area.
    ProgrammedUpfSameArea,
    /// The named per-area step must have executed for every area.
    AllAreas(StepLabel),
}

fn direct_preds(step: StepLabel) -> &'static [Pred] {
    use Pred::*;
    use StepLabel::*;
    match step {
        S1 => &[],
        S2 => &[Global(S1)],
        S3 => &[Global(S2)],
        S4a => &[SameArea(S3)],
        S4b => &[SameArea(S3)],
        S5 => &[SameArea(S4a)],
        S6 => &[SameArea(S5), SameArea(S4b)],
        S7 => &[SameArea(S6)],
        S8a => &[SameArea(S7)],
        S8b => &[SameArea(S8a)],
        S9a => &[SameArea(S8b)],
        S9b => &[SameArea(S8b)],
        S10 => &[ProgrammedUpfSameArea],
        S11 => &[AllAreas(S10)],
        S12a => &[Global(S11)],
        S12b => &[Global(S11), Global(S12a)],
        S12 => &[Global(S12a), Global(S12b)],
    }
}

/// Check a trace against the causal order, multiplicity, the one-of rule for
/// the user-plane programming variants, and area scoping. Returns one message
/// per violation; an empty list means the trace is well formed.
pub fn validate_trace(trace: &ProcedureTrace) -> Vec<String> {
    let entries = trace.entries();
    let mut violations = Vec::new();

    for (i, e) in entries.iter().enumerate() {
        match (&e.area, e.step.is_per_area()) {
            (None, true) => violations.push(format!(
                "entry {i}: per-area step {} carries no area",
                e.step
            )),
            (Some(area), false) => violations.push(format!(
                "entry {i}: global step {} carries area '{area}'",
                e.step
            )),
            _ => {}
        }
    }

    let mut counts: BTreeMap<(StepLabel, Option<&String>), usize> = BTreeMap::new();
    for e in entries {
        *counts.entry((e.step, e.area.as_ref())).or_default() += 1;
    }
    for ((step, area), n) in &counts {
        if *n > 1 {
            match area {
                Some(a) => violations.push(format!("step {step} appears {n} times for area '{a}'")),
                None => violations.push(format!("step {step} appears {n} times")),
            }
        }
    }

    let areas: BTreeSet<&String> = entries.iter().filter_map(|e| e.area.as_ref()).collect();
    for area in &areas {
        let has = |s: StepLabel| {
            entries
                .iter()
                .any(|e| e.step == s && e.area.as_ref() == Some(area))
        };
        if has(StepLabel::S9a) && has(StepLabel::S9b) {
            violations.push(format!(
                "area '{area}' carries both user-plane programming variants 9.a and 9.b"
            ));
        }
    }

    let before = |i: usize, pred: &dyn Fn(&TraceEntry) -> bool| entries[..i].iter().any(pred);
    for (i, e) in entries.iter().enumerate() {
        for p in direct_preds(e.step) {
            match p {
                Pred::Global(l) => {
                    if !before(i, &|x| x.step == *l) {
                        violations.push(format!(
                            "step {} at entry {i} precedes its prerequisite {l}",
                            e.step
                        ));
                    }
                }
                Pred::SameArea(l) => {
                    if let Some(area) = &e.area {
                        if !before(i, &|x| x.step == *l && x.area.as_ref() == Some(area)) {
                            violations.push(format!(
                                "step {} for area '{area}' at entry {i} precedes its prerequisite {l}",
                                e.step
                            ));
                        }
                    }
                }
                Pred::ProgrammedUpfSameArea => {
                    if let Some(area) = &e.area {
                        let ok = before(i, &|x| {
                            (x.step == StepLabel::S9a || x.step == StepLabel::S9b)
                                && x.area.as_ref() == Some(area)
                        });
                        if !ok {
                            violations.push(format!(
                                "step {} for area '{area}' at entry {i} precedes the user-plane programming step",
                                e.step
                            ));
                        }
                    }
                }
                Pred::AllAreas(l) => {
                    for area in &areas {
                        if !before(i, &|x| x.step == *l && x.area.as_ref() == Some(*area)) {
                            violations.push(format!(
                                "step {} at entry {i} precedes prerequisite {l} for area '{area}'",
                                e.step
                            ));
                        }
                    }
                }
            }
        }
    }

    violations
}

// ===========================================================================
// Procedure execution
// ===========================================================================

/// Outcome of one session-start run.
#[derive(Debug, Clone, PartialEq)]
pub enum SessionResult {
    Established {
        contexts: Vec<PduSessionContext>,
        trace: ProcedureTrace,
    },
    Failed {
        step: StepLabel,
        reason: String,
        trace: ProcedureTrace,
    },
}

impl SessionResult {
    pub fn trace(&self) -> &ProcedureTrace {
        match self {
            SessionResult::Established { trace, .. } => trace,
            SessionResult::Failed { trace, .. } => trace,
        }
    }

    pub fn is_established(&self) -> bool {
        matches!(self, SessionResult::Established { .. })
    }
}

/// The execution plan: global steps interleaved with per-area rounds, in
/// canonical order. The user-plane programming round resolves to 9.a or 9.b
/// per area from its topology flag.
const STAGES: [StepLabel; 16] = [
    StepLabel::S1,
    StepLabel::S2,
    StepLabel::S3,
    StepLabel::S4a,
    StepLabel::S4b,
    StepLabel::S5,
    StepLabel::S6,
    StepLabel::S7,
    StepLabel::S8a,
    StepLabel::S8b,
    StepLabel::S9b, // placeholder for the per-area 9.a/9.b choice
    StepLabel::S10,
    StepLabel::S11,
    StepLabel::S12a,
    StepLabel::S12b,
    StepLabel::S12,
];

struct AreaRuntime<'a> {
    topo: &'a AreaTopology,
    smf: Option<SmfState>,
    draft: Option<ContextDraft>,
    rule: Option<PccRule>,
}

/// Run the session-start procedure over the given topology with the given
/// fault plan. Faulted steps vanish from the trace and block their
/// dependents; the result is `Failed` at the earliest faulted step, or
/// `Established` with one context per area.
pub fn run_session_start(
    params: &ServiceParams,
    topology: &Topology,
    faults: &FaultPlan,
) -> Result<SessionResult> {
    params.validate()?;
    if !topology.signaling_latency_s.is_finite() || topology.signaling_latency_s < 0.0 {
        return Err(Error::Session(format!(
            "signaling latency {} must be >= 0",
            topology.signaling_latency_s
        )));
    }

    let mut areas: Vec<AreaRuntime> = Vec::with_capacity(params.broadcast_areas.len());
    for area_id in &params.broadcast_areas {
        let matches: Vec<&AreaTopology> = topology
            .areas
            .iter()
            .filter(|a| &a.area_id == area_id)
            .collect();
        match matches.len() {
            0 => {
                return Err(Error::Session(format!(
                    "topology provides no entity roster for area '{area_id}'"
                )))
            }
            1 => areas.push(AreaRuntime {
                topo: matches[0],
                smf: None,
                draft: None,
                rule: None,
            }),
            n => {
                return Err(Error::Session(format!(
                    "topology provides {n} rosters for area '{area_id}'"
                )))
            }
        }
    }

    let mut trace = ProcedureTrace::default();
    let mut done_global: BTreeSet<StepLabel> = BTreeSet::new();
    let mut done_area: BTreeSet<(usize, StepLabel)> = BTreeSet::new();
    let mut failure: Option<(StepLabel, String)> = None;
    let mut exec_index = 0usize;
    let mut next_pdu_id = 1usize;

    let areas_len = areas.len();
    let satisfied = |label: StepLabel,
                     area_idx: Option<usize>,
                     done_global: &BTreeSet<StepLabel>,
                     done_area: &BTreeSet<(usize, StepLabel)>|
     -> bool {
        direct_preds(label).iter().all(|p| match p {
            Pred::Global(l) => done_global.contains(l),
            Pred::SameArea(l) => done_area.contains(&(area_idx.expect("per-area step"), *l)),
            Pred::ProgrammedUpfSameArea => {
                let i = area_idx.expect("per-area step");
                done_area.contains(&(i, StepLabel::S9a)) || done_area.contains(&(i, StepLabel::S9b))
            }
            Pred::AllAreas(l) => (0..areas_len).all(|i| done_area.contains(&(i, *l))),
        })
    };

    for stage in STAGES {
        let per_area = stage.is_per_area();
        let instances: Vec<Option<usize>> = if per_area {
            (0..areas.len()).map(Some).collect()
        } else {
            vec![None]
        };
        for area_idx in instances {
            let label = if stage == StepLabel::S9b {
                let i = area_idx.expect("user-plane programming is per-area");
                if areas[i].topo.upf_at_mec {
                    StepLabel::S9b
                } else {
                    StepLabel::S9a
                }
            } else {
                stage
            };

            if !satisfied(label, area_idx, &done_global, &done_area) {
                continue; // blocked behind an earlier fault
            }
            if let Some(mode) = faults.get(label) {
                if failure.is_none() {
                    let verb = match mode {
                        FaultMode::Drop => "message dropped",
                        FaultMode::Reject => "request rejected",
                    };
                    failure = Some((label, format!("step {label}: {verb}")));
                }
                continue;
            }

            // Side effects of the step on session state.
            if let Some(i) = area_idx {
                match label {
                    StepLabel::S4b => {
                        areas[i].smf = Some(SmfState::with_area_pool(
                            areas[i].topo.smf_id.clone(),
                            i,
                        ));
                    }
                    StepLabel::S6 => {
                        let smf = areas[i].smf.as_mut().expect("SMF selected at step 4.b");
                        let addr = allocate_multicast_address(smf)?;
                        areas[i].draft = Some(ContextDraft {
                            pdu_session_id: format!("pdu-{next_pdu_id}"),
                            dnn: params.dnn.clone(),
                            area: areas[i].topo.area_id.clone(),
                            ip_multicast_address: addr,
                        });
                        next_pdu_id += 1;
                    }
                    StepLabel::S8b => {
                        let draft = areas[i].draft.as_ref().expect("context drafted at step 6");
                        areas[i].rule = Some(create_pcc_rule(params, draft));
                    }
                    _ => {}
                }
            }

            trace.push(TraceEntry {
                step: label,
                actor: label.actor(),
                area: area_idx.map(|i| areas[i].topo.area_id.clone()),
                time_s: exec_index as f64 * topology.signaling_latency_s,
            });
            exec_index += 1;
            match area_idx {
                Some(i) => {
                    done_area.insert((i, label));
                }
                None => {
                    done_global.insert(label);
                }
            }
        }
    }

    if let Some((step, reason)) = failure {
        return Ok(SessionResult::Failed { step, reason, trace });
    }

    let contexts = areas
        .into_iter()
        .map(|rt| {
            let draft = rt.draft.expect("established run drafted every context");
            PduSessionContext {
                pdu_session_id: draft.pdu_session_id,
                dnn: draft.dnn,
                area: draft.area,
                ip_multicast_address: draft.ip_multicast_address,
                pcc_rule: rt.rule.expect("established run created every rule"),
            }
        })
        .collect();
    Ok(SessionResult::Established { contexts, trace })
}
