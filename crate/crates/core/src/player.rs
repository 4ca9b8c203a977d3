//! Player emulation for a live broadcast stream: startup buffering, live-edge
//! join, stall accounting, post-stall buffer growth, and catch-up playback.
//!
//! The playback clock is continuous: between events the media position moves
//! linearly at the current rate, and the next state change (buffer empty,
//! segment arrival, catch-up gate or target crossing, end of media) is
//! computed in closed form. No fixed playback tick exists, so dyadic event
//! times resolve exactly and equal-time arrivals never log phantom stalls.

use std::path::Path;

use crate::error::{Error, Result};

const EPS: f64 = 1e-9;

// ===========================================================================
// Configuration and result types
// ===========================================================================

/// Playback policy knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerConfig {
    /// Contiguous media required before playback starts, in segments.
    pub initial_buffer_segments: f64,
    /// Playback-rate multiplier while catching up.
    pub catch_up_rate: f64,
    /// Latency excess over the target that arms catch-up.
    pub catch_up_trigger_s: f64,
    /// Seconds added to the buffer target (and latency target) after each
    /// starvation; defaults to one segment duration.
    pub buffer_growth_per_stall_s: Option<f64>,
    /// Latency the catch-up drives towards; defaults to the measured startup
    /// latency.
    pub latency_target_s: Option<f64>,
}

impl Default for PlayerConfig {
    fn default() -> Self {
        Self {
            initial_buffer_segments: 1.5,
            catch_up_rate: 1.043,
            catch_up_trigger_s: 0.5,
            buffer_growth_per_stall_s: None,
            latency_target_s: None,
        }
    }
}

impl PlayerConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.initial_buffer_segments.is_finite() || self.initial_buffer_segments <= 0.0 {
            return Err(Error::Player(format!(
                "initial_buffer_segments {} must be positive",
                self.initial_buffer_segments
            )));
        }
        if !self.catch_up_rate.is_finite() || self.catch_up_rate <= 1.0 {
            return Err(Error::Player(format!(
                "catch_up_rate {} must exceed 1",
                self.catch_up_rate
            )));
        }
        if self.catch_up_trigger_s.is_nan() || self.catch_up_trigger_s < 0.0 {
            return Err(Error::Player(format!(
                "catch_up_trigger_s {} must be >= 0",
                self.catch_up_trigger_s
            )));
        }
        if let Some(g) = self.buffer_growth_per_stall_s {
            if !g.is_finite() || g < 0.0 {
                return Err(Error::Player(format!(
                    "buffer_growth_per_stall_s {g} must be >= 0"
                )));
            }
        }
        if let Some(l) = self.latency_target_s {
            if !l.is_finite() || l < 0.0 {
                return Err(Error::Player(format!("latency_target_s {l} must be >= 0")));
            }
        }
        Ok(())
    }
}

/// Everything the player needs about one run's deliveries.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaybackInput {
    pub segment_duration_s: f64,
    pub segment_count: u32,
    /// Wall time at which the live source starts emitting media.
    pub media_epoch_s: f64,
    /// Wall arrival time per segment index (broadcast decode or recovery
    /// completion), in any order; every index exactly once.
    pub arrivals: Vec<(u32, f64)>,
}

/// One buffer starvation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StallEvent {
    pub start_s: f64,
    pub end_s: f64,
}

impl StallEvent {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// One row of the playback time series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSample {
    pub wall_s: f64,
    pub playback_s: f64,
    pub live_latency_s: f64,
    pub buffer_s: f64,
    pub stalled: bool,
}

/// Final snapshot of the playback state machine.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerState {
    pub wall_s: f64,
    pub playback_media_s: f64,
    pub started: bool,
    pub playing: bool,
    pub playback_rate: f64,
    pub target_buffer_s: f64,
    pub latency_floor_s: f64,
    /// Segments received but not yet fully played (empty after a complete
    /// run).
    pub buffered: Vec<(u32, f64)>,
}

/// Output of [`run_playback`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub samples: Vec<TimeSample>,
    pub stall_log: Vec<StallEvent>,
    pub final_state: PlayerState,
    pub start_wall_s: f64,
    pub startup_latency_s: f64,
    pub final_latency_s: f64,
}

impl RunResult {
    pub fn stall_total_s(&self) -> f64 {
        // Float sums fold from -0.0; keep an empty log at plain zero.
        0.0 + self.stall_log.iter().map(StallEvent::duration_s).sum::<f64>()
    }
}

/// Live latency of a state, with media emitted in real time from
/// `media_epoch_s`: wall age of the newest emitted media minus how much has
/// been played. Before playback starts everything emitted is unplayed.
pub fn live_latency(state: &PlayerState, media_epoch_s: f64) -> f64 {
    if state.started {
        (state.wall_s - media_epoch_s) - state.playback_media_s
    } else {
        state.wall_s - media_epoch_s
    }
}

/// Total stall time inside the window `[t0_s, t1_s]`.
pub fn stall_total(stalls: &[StallEvent], t0_s: f64, t1_s: f64) -> Result<f64> {
    if !(t0_s < t1_s) {
        return Err(Error::Player(format!(
            "stall window [{t0_s}, {t1_s}] must have t0 < t1"
        )));
    }
    Ok(0.0
        + stalls
            .iter()
            .map(|s| (s.end_s.min(t1_s) - s.start_s.max(t0_s)).max(0.0))
            .sum::<f64>())
}

// ===========================================================================
// Playback simulation
// ===========================================================================

#[derive(Debug, Clone, Copy, PartialEq)]
enum PhaseKind {
    PreStart,
    Playing,
    Stalled,
}

/// Piecewise-linear motion of the playhead starting at `t0`.
#[derive(Debug, Clone, Copy)]
struct Phase {
    t0: f64,
    m0: f64,
    rate: f64,
    kind: PhaseKind,
}

/// Times at which the contiguous media frontier advances: `(wall, media_end)`
/// pairs, strictly increasing in both components.
fn build_frontier(arrivals: &[f64], segment_duration_s: f64) -> Vec<(f64, f64)> {
    let mut frontier: Vec<(f64, f64)> = Vec::new();
    let mut prefix_max = f64::NEG_INFINITY;
    for (k, &a) in arrivals.iter().enumerate() {
        prefix_max = prefix_max.max(a);
        let media_end = (k + 1) as f64 * segment_duration_s;
        match frontier.last_mut() {
            Some(last) if last.0 == prefix_max => last.1 = media_end,
            _ => frontier.push((prefix_max, media_end)),
        }
    }
    frontier
}

/// Run the playback model over one delivery schedule.
///
/// Playback starts at the first instant the contiguous buffer reaches the
/// startup target, joining that far behind the newest buffered media (live
/// join). While playing, media is consumed at the current rate; an empty
/// buffer logs a stall that ends the moment the missing segment arrives, and
/// each stall raises both the buffer target and the latency the catch-up
/// aims for. Catch-up arms when latency exceeds its target by the trigger,
/// plays at the configured rate while more than one segment is buffered, and
/// disarms once latency is back at the target.
pub fn run_playback(input: &PlaybackInput, cfg: &PlayerConfig) -> Result<RunResult> {
    cfg.validate()?;
    let t_seg = input.segment_duration_s;
    if !t_seg.is_finite() || t_seg <= 0.0 {
        return Err(Error::Player(format!(
            "segment duration {t_seg} must be positive"
        )));
    }
    let count = input.segment_count as usize;
    if count == 0 {
        return Err(Error::Player("presentation has no segments".into()));
    }
    let epoch = input.media_epoch_s;
    if !epoch.is_finite() || epoch < 0.0 {
        return Err(Error::Player(format!("media epoch {epoch} must be >= 0")));
    }
    let total = count as f64 * t_seg;

    let mut arrivals = vec![f64::NAN; count];
    for &(index, t) in &input.arrivals {
        let i = index as usize;
        if i >= count {
            return Err(Error::Player(format!(
                "arrival for unknown segment {index} (presentation has {count})"
            )));
        }
        if !t.is_finite() || t < 0.0 {
            return Err(Error::Player(format!(
                "segment {index} has invalid arrival time {t}"
            )));
        }
        if !arrivals[i].is_nan() {
            return Err(Error::Player(format!("duplicate arrival for segment {index}")));
        }
        arrivals[i] = t;
    }
    if let Some(missing) = arrivals.iter().position(|a| a.is_nan()) {
        return Err(Error::Player(format!("no arrival for segment {missing}")));
    }

    let frontier = build_frontier(&arrivals, t_seg);
    let start_target = (cfg.initial_buffer_segments * t_seg).min(total);
    let start_idx = frontier
        .iter()
        .position(|(_, e)| *e + EPS >= start_target)
        .expect("the final frontier event covers the whole presentation");
    let (start_wall, start_frontier) = frontier[start_idx];
    let m_start = start_frontier - start_target;
    let startup_latency = (start_wall - epoch) - m_start;

    let growth = cfg.buffer_growth_per_stall_s.unwrap_or(t_seg);
    let mut latency_floor = cfg.latency_target_s.unwrap_or(startup_latency);
    let mut target_buffer = start_target;

    let mut t = start_wall;
    let mut m = m_start;
    let mut media_end = start_frontier;
    let mut fi = start_idx + 1;
    let mut armed = (t - epoch) - m > latency_floor + cfg.catch_up_trigger_s + EPS;
    let mut last_rate = 1.0;
    let mut stalls: Vec<StallEvent> = Vec::new();
    let mut phases: Vec<Phase> = Vec::new();
    if start_wall > 0.0 {
        phases.push(Phase {
            t0: 0.0,
            m0: 0.0,
            rate: 0.0,
            kind: PhaseKind::PreStart,
        });
    }

    let max_iterations = 64 * count as u64 + 4096;
    let mut iterations = 0u64;
    while total - m > EPS {
        iterations += 1;
        if iterations > max_iterations {
            return Err(Error::Player(
                "internal: playback state machine failed to converge".into(),
            ));
        }

        let buffer = media_end - m;
        if buffer <= EPS {
            // Starved: wait for the next frontier advance.
            let Some(&(arrival, next_end)) = frontier.get(fi) else {
                return Err(Error::Player(
                    "internal: starved with no pending arrivals".into(),
                ));
            };
            fi += 1;
            if arrival > t + EPS {
                phases.push(Phase {
                    t0: t,
                    m0: m,
                    rate: 0.0,
                    kind: PhaseKind::Stalled,
                });
                stalls.push(StallEvent {
                    start_s: t,
                    end_s: arrival,
                });
                target_buffer += growth;
                latency_floor += growth;
                t = arrival;
            }
            media_end = next_end;
            let latency = (t - epoch) - m;
            if armed && latency <= latency_floor + EPS {
                armed = false;
            }
            if !armed && latency > latency_floor + cfg.catch_up_trigger_s + EPS {
                armed = true;
            }
            continue;
        }

        let rate = if armed && buffer > t_seg + EPS {
            cfg.catch_up_rate
        } else {
            1.0
        };
        last_rate = rate;
        phases.push(Phase {
            t0: t,
            m0: m,
            rate,
            kind: PhaseKind::Playing,
        });

        let latency = (t - epoch) - m;
        let t_done = t + (total - m) / rate;
        let t_empty = t + buffer / rate;
        let t_arrival = frontier.get(fi).map_or(f64::INFINITY, |(a, _)| *a);
        let t_gate = if rate > 1.0 {
            t + (buffer - t_seg) / rate
        } else {
            f64::INFINITY
        };
        let t_disarm = if armed && rate > 1.0 && latency > latency_floor {
            t + (latency - latency_floor) / (rate - 1.0)
        } else {
            f64::INFINITY
        };
        let t_next = t_done.min(t_empty).min(t_arrival).min(t_gate).min(t_disarm);
        debug_assert!(t_next >= t);
        m += rate * (t_next - t);
        t = t_next;
        if total - m <= EPS {
            break;
        }
        while let Some(&(arrival, next_end)) = frontier.get(fi) {
            if arrival <= t + EPS {
                media_end = next_end;
                fi += 1;
            } else {
                break;
            }
        }
        let latency = (t - epoch) - m;
        if armed && latency <= latency_floor + EPS {
            armed = false;
        }
        if !armed && latency > latency_floor + cfg.catch_up_trigger_s + EPS {
            armed = true;
        }
    }
    let t_end = t;
    phases.push(Phase {
        t0: t_end,
        m0: total,
        rate: 0.0,
        kind: PhaseKind::Playing,
    });

    let samples = build_samples(&phases, &frontier, epoch, t_end, total);
    let final_latency = (t_end - epoch) - total;
    let final_state = PlayerState {
        wall_s: t_end,
        playback_media_s: total,
        started: true,
        playing: false,
        playback_rate: last_rate,
        target_buffer_s: target_buffer,
        latency_floor_s: latency_floor,
        buffered: Vec::new(),
    };
    Ok(RunResult {
        samples,
        stall_log: stalls,
        final_state,
        start_wall_s: start_wall,
        startup_latency_s: startup_latency,
        final_latency_s: final_latency,
    })
}

/// Sample the piecewise-linear run on the 0.1 s grid plus every phase
/// boundary.
fn build_samples(
    phases: &[Phase],
    frontier: &[(f64, f64)],
    epoch: f64,
    t_end: f64,
    total: f64,
) -> Vec<TimeSample> {
    let mut times: Vec<f64> = Vec::new();
    let mut k = 0u64;
    loop {
        let g = k as f64 / 10.0;
        if g > t_end {
            break;
        }
        times.push(g);
        k += 1;
    }
    times.extend(phases.iter().map(|p| p.t0));
    times.push(t_end);
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);

    times
        .iter()
        .map(|&t| {
            let pi = phases.partition_point(|p| p.t0 <= t).saturating_sub(1);
            let p = &phases[pi];
            let m = (p.m0 + p.rate * (t - p.t0)).min(total);
            let ei = frontier.partition_point(|(a, _)| *a <= t);
            let media_end = if ei == 0 { 0.0 } else { frontier[ei - 1].1 };
            match p.kind {
                PhaseKind::PreStart => TimeSample {
                    wall_s: t,
                    playback_s: 0.0,
                    live_latency_s: (t - epoch).max(0.0),
                    buffer_s: media_end,
                    stalled: false,
                },
                PhaseKind::Playing | PhaseKind::Stalled => TimeSample {
                    wall_s: t,
                    playback_s: m,
                    live_latency_s: ((t - epoch) - m).max(0.0),
                    buffer_s: (media_end - m).max(0.0),
                    stalled: p.kind == PhaseKind::Stalled,
                },
            }
        })
        .collect()
}

/// Write the playback time series as CSV with header
/// `wall_s,playback_s,live_latency_s,buffer_s,stalled`.
pub fn write_timeseries_csv(samples: &[TimeSample], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::Player(format!("cannot write time series {}: {e}", path.display())))?;
    writer
        .write_record(["wall_s", "playback_s", "live_latency_s", "buffer_s", "stalled"])
        .map_err(|e| Error::Player(e.to_string()))?;
    for s in samples {
        writer
            .write_record([
                format!("{}", s.wall_s),
                format!("{}", s.playback_s),
                format!("{}", s.live_latency_s),
                format!("{}", s.buffer_s),
                if s.stalled { "1".to_string() } else { "0".to_string() },
            ])
            .map_err(|e| Error::Player(e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::Player(e.to_string()))?;
    Ok(())
}
