//! End-to-end checks of the assembled pipeline through the public API:
//! broadcast loss, unicast recovery, playback, and the file formats that
//! cross the crate boundary.

use sarpsim_core::broadcast::{generate_error_file, read_error_file, write_error_file, LossModel};
use sarpsim_core::engine::{run_scenario, ScenarioConfig, SessionScenario};
use sarpsim_core::media::RepId;
use sarpsim_core::player::{stall_total, write_timeseries_csv};
use sarpsim_core::sarp::RecoveryMode;
use sarpsim_core::session::write_trace_csv;
use sarpsim_core::unicast::BandwidthProfile;

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

/// One segment lost at index 120, recovered over a 2 Mb/s link. Without
/// adaptation the full 375 000-byte broadcast copy is re-sent: 150 000 bytes
/// of stored burst credit leave instantly, the remaining 225 000 bytes take
/// 0.9 s, so the segment lands at 61.4 while the playhead hits the gap at
/// 60.75. With adaptation the proxy downshifts to the 187 500-byte copy,
/// which lands at 60.65, before the playhead ever gets there.
#[test]
fn single_loss_on_a_tight_link_hand_computed() {
    let base = ScenarioConfig {
        loss: LossModel::ErrorFile(sarpsim_core::broadcast::ErrorFile::new([120])),
        profile: BandwidthProfile::constant(2_000_000.0).unwrap(),
        ..ScenarioConfig::default()
    };

    let off = run_scenario(&base).unwrap();
    assert_eq!(off.recovery_count, 1);
    assert_eq!(off.recovery_bytes, 375_000);
    assert_eq!(off.playback.stall_log.len(), 1);
    let stall = off.playback.stall_log[0];
    assert!(near(stall.start_s, 60.75), "stall start {}", stall.start_s);
    assert!(near(stall.end_s, 61.4), "stall end {}", stall.end_s);
    assert!(near(off.playback.final_latency_s, 1.4));

    let on = run_scenario(&ScenarioConfig {
        mode: RecoveryMode::SarpOn,
        ..base
    })
    .unwrap();
    assert_eq!(on.recovery_bytes, 187_500);
    assert_eq!(on.served_reps.get(&RepId::new("rep-3m")).copied(), Some(1));
    assert!(on.playback.stall_log.is_empty(), "{:?}", on.playback.stall_log);
    assert!(near(on.playback.final_latency_s, 0.75));
}

/// Error files written to disk drive a run identically to the in-memory set.
#[test]
fn error_file_io_feeds_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("errors.txt");
    let generated = generate_error_file(1200, 0.1, 7).unwrap();
    assert_eq!(generated.len(), 120);
    write_error_file(&generated, &path).unwrap();
    let read_back = read_error_file(&path).unwrap();
    assert_eq!(read_back, generated);

    let scenario = ScenarioConfig {
        loss: LossModel::ErrorFile(read_back),
        ..ScenarioConfig::default()
    };
    let from_file = run_scenario(&scenario).unwrap();
    let from_memory = run_scenario(&ScenarioConfig {
        loss: LossModel::Uniform {
            fraction: 0.1,
            seed: 7,
        },
        ..ScenarioConfig::default()
    })
    .unwrap();
    assert_eq!(from_file, from_memory);
    let lost: Vec<u32> = generated.indices().collect();
    assert_eq!(from_file.lost_segments, lost);
}

/// A session-gated run emits both cross-boundary artifacts: the signaling
/// trace and the playback time series, shifted by the signaling time.
#[test]
fn session_gated_run_writes_both_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut session = SessionScenario::default();
    session.topology.signaling_latency_s = 0.02;
    let scenario = ScenarioConfig {
        session: Some(session),
        loss: LossModel::Uniform {
            fraction: 0.1,
            seed: 3,
        },
        profile: BandwidthProfile::constant(3_000_000.0).unwrap(),
        mode: RecoveryMode::SarpOn,
        ..ScenarioConfig::default()
    };
    let result = run_scenario(&scenario).unwrap();
    assert!(near(result.media_epoch_s, 0.30));

    let trace_path = dir.path().join("trace.csv");
    write_trace_csv(result.session_trace.as_ref().unwrap(), &trace_path).unwrap();
    let trace_body = std::fs::read_to_string(&trace_path).unwrap();
    assert!(trace_body.starts_with("step,actor,area,time_s\n"));
    assert_eq!(trace_body.lines().count(), 17, "header plus 16 steps");

    let ts_path = dir.path().join("timeseries.csv");
    write_timeseries_csv(&result.playback.samples, &ts_path).unwrap();
    let ts_body = std::fs::read_to_string(&ts_path).unwrap();
    assert!(ts_body.starts_with("wall_s,playback_s,live_latency_s,buffer_s,stalled\n"));

    // No media event precedes the end of session control.
    assert!(result.playback.start_wall_s > result.media_epoch_s);
    let first_arrival = result
        .playback
        .samples
        .iter()
        .find(|s| s.buffer_s > 0.0)
        .unwrap();
    assert!(first_arrival.wall_s >= result.media_epoch_s);
}

/// Latency bookkeeping survives the full pipeline: with catch-up disabled,
/// end-to-end latency growth equals the total logged stall time.
#[test]
fn pipeline_conserves_stall_time_without_catch_up() {
    let mut scenario = ScenarioConfig {
        loss: LossModel::Uniform {
            fraction: 0.1,
            seed: 5,
        },
        profile: BandwidthProfile::constant(2_500_000.0).unwrap(),
        ..ScenarioConfig::default()
    };
    scenario.player.catch_up_trigger_s = f64::INFINITY;
    let result = run_scenario(&scenario).unwrap();
    assert!(!result.playback.stall_log.is_empty());
    let growth = result.playback.final_latency_s - result.playback.startup_latency_s;
    let stalled = stall_total(&result.playback.stall_log, 0.0, f64::MAX).unwrap();
    assert!(near(growth, stalled), "growth {growth} vs stalled {stalled}");
}
