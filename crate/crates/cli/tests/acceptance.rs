//! Acceptance gate for the whole workspace: one test per release criterion,
//! each printing a PASS line with its measured evidence. These run the same
//! code paths as the shipped binary (library API plus the binary itself for
//! the byte-reproducibility check).

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::Rng;

use sarpsim_cli::config::{parse_config, AppConfig, ChannelSetting};
use sarpsim_cli::runner::{run_sweep, CellOutcome};
use sarpsim_core::broadcast::{segment_loss_probability, LossModel};
use sarpsim_core::engine::{run_scenario, ScenarioConfig};
use sarpsim_core::media::{select_representation, PresentationConfig, RepId, Representation};
use sarpsim_core::player::{stall_total, PlayerConfig};
use sarpsim_core::rng::stream_rng;
use sarpsim_core::sarp::RecoveryMode;
use sarpsim_core::session::{
    run_session_start, validate_trace, FaultMode, FaultPlan, IngestMode, ServiceParams,
    SessionResult, StepLabel, Topology,
};
use sarpsim_core::unicast::{download_duration, BandwidthProfile, SyntheticSpec, TokenBucket};

const TICK_S: f64 = 0.001;

// ===========================================================================
// 1. Recovery representation selection against brute force
// ===========================================================================

#[test]
fn representation_selection_matches_brute_force() {
    let started = Instant::now();
    let mut rng = stream_rng(7, "acceptance-selection");
    let bitrate_pool: [u64; 7] = [
        250_000, 800_000, 1_500_000, 3_000_000, 4_500_000, 6_000_000, 8_000_000,
    ];
    let mut checked = 0usize;
    let mut fallback_cases = 0usize;
    for case in 0..1_000 {
        let count = rng.gen_range(1..=8usize);
        let reps: Vec<Representation> = (0..count)
            .map(|i| Representation {
                id: RepId::new(format!("rep-{i}")),
                // Draw from a small pool so equal bitrates (tie cases) occur.
                bitrate_bps: bitrate_pool[rng.gen_range(0..bitrate_pool.len())],
                resolution_label: "1080p".to_string(),
                segment_sizes_bytes: Vec::new(),
            })
            .collect();
        // A third of the draws land exactly on a bitrate to probe the
        // strict inequality; the rest are uniform.
        let bandwidth = if case % 3 == 0 {
            reps[rng.gen_range(0..count)].bitrate_bps as f64
        } else {
            rng.gen_range(100_000.0..10_000_000.0)
        };

        // Exhaustive oracle: scan every representation independently.
        let mut best: Option<&Representation> = None;
        for r in &reps {
            if (r.bitrate_bps as f64) < bandwidth {
                best = match best {
                    None => Some(r),
                    Some(b) if r.bitrate_bps > b.bitrate_bps => Some(r),
                    Some(b) if r.bitrate_bps == b.bitrate_bps && r.id < b.id => Some(r),
                    keep => keep,
                };
            }
        }
        let expected = best.unwrap_or_else(|| {
            fallback_cases += 1;
            let mut min = &reps[0];
            for r in &reps[1..] {
                if r.bitrate_bps < min.bitrate_bps
                    || (r.bitrate_bps == min.bitrate_bps && r.id < min.id)
                {
                    min = r;
                }
            }
            min
        });

        let got = select_representation(&reps, bandwidth).unwrap();
        assert_eq!(
            got.id, expected.id,
            "case {case}: bandwidth {bandwidth}, reps {:?}",
            reps.iter().map(|r| (r.id.as_str(), r.bitrate_bps)).collect::<Vec<_>>()
        );
        checked += 1;
    }
    let elapsed = started.elapsed();
    assert!(fallback_cases > 0, "no infeasible-set cases were generated");
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE representation-selection: PASS ({checked} cases, {fallback_cases} fallbacks, {elapsed:?})"
    );
}

// ===========================================================================
// 2. Segment loss probability against Monte Carlo
// ===========================================================================

#[test]
fn fec_loss_probability_matches_monte_carlo() {
    let started = Instant::now();
    let mut rng = stream_rng(11, "acceptance-fec");
    const TRIALS: u64 = 100_000;
    for &(n, k, p) in &[(10u64, 0u64, 0.05f64), (10, 2, 0.05), (50, 5, 0.02), (1, 0, 0.3)] {
        let analytic = segment_loss_probability(n, k, p).unwrap();
        let mut losses = 0u64;
        for _ in 0..TRIALS {
            let mut received = 0u64;
            for _ in 0..(n + k) {
                if rng.gen::<f64>() >= p {
                    received += 1;
                }
            }
            if received < n {
                losses += 1;
            }
        }
        let frequency = losses as f64 / TRIALS as f64;
        assert!(
            (frequency - analytic).abs() <= 0.01,
            "(n={n}, k={k}, p={p}): analytic {analytic}, observed {frequency}"
        );
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!("ACCEPTANCE fec-loss-probability: PASS (4 parameter sets x {TRIALS} trials, {elapsed:?})");
}

// ===========================================================================
// 3. Token-bucket transfer timing
// ===========================================================================

#[test]
fn drained_bucket_transfers_at_the_fluid_rate() {
    let mut rng = stream_rng(13, "acceptance-bucket");
    for case in 0..200 {
        let size: u64 = rng.gen_range(1_000..2_000_000);
        let rate: f64 = rng.gen_range(100_000.0..20_000_000.0);
        let start: f64 = rng.gen_range(0.0..100.0);
        let profile = BandwidthProfile::constant(rate).unwrap();
        let mut bucket = TokenBucket::new(0.0, start).unwrap();
        let duration = download_duration(size, &mut bucket, &profile, start).unwrap();
        let fluid = size as f64 * 8.0 / rate;
        assert!(
            (duration - fluid).abs() <= TICK_S + 1e-9,
            "case {case}: size {size} at {rate} bps took {duration}, fluid {fluid}"
        );
    }

    // Piecewise profile crossing a rate step mid-transfer: 0.5 s at 2 Mbps
    // moves 125 kB, the remaining 475 kB at 8 Mbps takes 0.475 s.
    let profile =
        BandwidthProfile::from_steps(vec![(0.0, 2_000_000.0), (10.0, 8_000_000.0)]).unwrap();
    let mut bucket = TokenBucket::new(0.0, 9.5).unwrap();
    let duration = download_duration(600_000, &mut bucket, &profile, 9.5).unwrap();
    assert_eq!(duration, 0.975);
    println!("ACCEPTANCE token-bucket-timing: PASS (200 randomized cases + step-profile trace 0.975 s)");
}

// ===========================================================================
// 4. Session-start procedure
// ===========================================================================

fn service_params(areas: &[&str]) -> ServiceParams {
    ServiceParams {
        max_video_bitrate_bps: 6_000_000,
        max_delay_s: 0.3,
        broadcast_areas: areas.iter().map(|s| s.to_string()).collect(),
        dnn: "broadcast.media".to_string(),
        ingest_mode: IngestMode::Push,
    }
}

#[test]
fn session_procedure_order_and_fault_handling() {
    let started = Instant::now();

    // Happy path, one area, edge user plane: canonical step order.
    let params = service_params(&["area-1"]);
    let topo = Topology::uniform(&params.broadcast_areas, true);
    let result = run_session_start(&params, &topo, &FaultPlan::none()).unwrap();
    assert!(result.is_established());
    let violations = validate_trace(result.trace());
    assert!(violations.is_empty(), "{violations:?}");
    let labels: Vec<String> = result.trace().labels().iter().map(|l| l.to_string()).collect();
    let canonical = [
        "1", "2", "3", "4.a", "4.b", "5", "6", "7", "8.a", "8.b", "9.b", "10", "11", "12.a",
        "12.b", "12",
    ];
    assert_eq!(labels, canonical);

    // Fault every one of the 17 steps, in a mixed two-area topology so both
    // user-plane variants (9.a central, 9.b edge) actually execute.
    let params2 = service_params(&["area-1", "area-2"]);
    let mut mixed = Topology::uniform(&params2.broadcast_areas, true);
    mixed.areas[1].upf_at_mec = false;
    let configuration_steps = [StepLabel::S12a, StepLabel::S12b, StepLabel::S12];
    let mut fault_runs = 0usize;
    for &step in StepLabel::ALL.iter() {
        for mode in [FaultMode::Drop, FaultMode::Reject] {
            let plan = FaultPlan::none().with(step, mode);
            let result = run_session_start(&params2, &mixed, &plan).unwrap();
            match result {
                SessionResult::Failed { step: failed, trace, .. } => {
                    assert_eq!(failed, step, "fault at {step} reported as {failed}");
                    assert!(!trace.contains(step), "faulted step {step} still in trace");
                    if !configuration_steps.contains(&step) {
                        // Any fault ahead of the delivery configuration
                        // round must suppress both configuration events.
                        assert!(!trace.contains(StepLabel::S12a), "12.a ran after {step} fault");
                        assert!(!trace.contains(StepLabel::S12b), "12.b ran after {step} fault");
                    }
                }
                SessionResult::Established { .. } => {
                    panic!("fault at {step} ({mode:?}) still established the session")
                }
            }
            fault_runs += 1;
        }
    }
    assert_eq!(fault_runs, 34);

    // Two areas give two contexts with distinct identities.
    let result = run_session_start(&params2, &mixed, &FaultPlan::none()).unwrap();
    match result {
        SessionResult::Established { contexts, .. } => {
            assert_eq!(contexts.len(), 2);
            assert_ne!(contexts[0].pdu_session_id, contexts[1].pdu_session_id);
            assert_ne!(contexts[0].ip_multicast_address, contexts[1].ip_multicast_address);
        }
        SessionResult::Failed { step, reason, .. } => panic!("failed at {step}: {reason}"),
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE session-procedure: PASS (canonical order, 34 fault injections, 2-area contexts, {elapsed:?})"
    );
}

// ===========================================================================
// 5. Standard experiment matrix behaviour
// ===========================================================================

fn mean_final(outcomes: &[CellOutcome], bw: u64, mode: RecoveryMode) -> f64 {
    let finals: Vec<f64> = outcomes
        .iter()
        .filter(|c| c.bandwidth_bps == bw && c.mode == mode)
        .map(|c| c.final_latency_s)
        .collect();
    assert_eq!(finals.len(), 10, "expected 10 seeds at bw {bw} {mode}");
    finals.iter().sum::<f64>() / finals.len() as f64
}

#[test]
fn standard_matrix_latency_ordering() {
    let cfg = AppConfig::default();
    let dir = tempfile::tempdir().unwrap();
    let started = Instant::now();
    let outcomes = run_sweep(&cfg, dir.path(), None).unwrap();
    let sweep_elapsed = started.elapsed();
    assert_eq!(outcomes.len(), 100);
    assert!(sweep_elapsed.as_secs_f64() < 60.0, "sweep took {sweep_elapsed:?}");

    let bandwidths = [2_000_000u64, 2_500_000, 3_000_000, 3_500_000, 4_000_000];
    let off: Vec<f64> = bandwidths
        .iter()
        .map(|&bw| mean_final(&outcomes, bw, RecoveryMode::SarpOff))
        .collect();
    let on: Vec<f64> = bandwidths
        .iter()
        .map(|&bw| mean_final(&outcomes, bw, RecoveryMode::SarpOn))
        .collect();

    // (a) Without adaptation, more unicast bandwidth never hurts: the mean
    // final latency is non-increasing from 2.5 Mbps up.
    for w in off[1..].windows(2) {
        assert!(w[0] >= w[1] - 1e-9, "off means not monotone: {off:?}");
    }

    // (b) Adaptation wins at every bandwidth on identical error draws.
    for (i, &bw) in bandwidths.iter().enumerate() {
        assert!(
            on[i] < off[i],
            "at {bw} bps: adaptive {} >= fixed {}",
            on[i],
            off[i]
        );
    }

    // (c) Adaptive recovery on the tightest link keeps the stream nearly
    // stall-free after startup.
    let stalls: Vec<f64> = outcomes
        .iter()
        .filter(|c| c.bandwidth_bps == 2_000_000 && c.mode == RecoveryMode::SarpOn)
        .map(|c| c.stall_total_s)
        .collect();
    let mean_stall = stalls.iter().sum::<f64>() / stalls.len() as f64;
    assert!(mean_stall <= 0.5, "mean stall at 2 Mbps adaptive: {mean_stall}");

    // (d) With zero losses the latency pins to the startup value throughout.
    let lossless = parse_config("[broadcast]\nloss = none\n").unwrap();
    let scenario = lossless
        .scenario(&ChannelSetting::ConstantBps(4_000_000), RecoveryMode::SarpOff, 1, "lossless")
        .unwrap();
    let result = run_scenario(&scenario).unwrap();
    assert_eq!(result.recovery_count, 0);
    let start = result.playback.start_wall_s;
    let startup = result.playback.startup_latency_s;
    for s in result.playback.samples.iter().filter(|s| s.wall_s >= start - 1e-9) {
        assert!(
            (s.live_latency_s - startup).abs() <= TICK_S,
            "latency {} at wall {} deviates from startup {startup}",
            s.live_latency_s,
            s.wall_s
        );
    }

    println!(
        "ACCEPTANCE standard-matrix: PASS (sweep {sweep_elapsed:?}; fixed means {:?}; adaptive means {:?}; adaptive 2 Mbps mean stall {mean_stall:.3} s)",
        off.iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
        on.iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>()
    );
}

// ===========================================================================
// 6. Fading-channel profiles
// ===========================================================================

fn fading_scenario(mean_bps: f64, variance: f64, seed: u64, mode: RecoveryMode) -> ScenarioConfig {
    let spec = SyntheticSpec {
        mean_bps,
        variance_bps2: variance,
        seed,
        ..SyntheticSpec::default()
    };
    ScenarioConfig {
        loss: LossModel::Uniform { fraction: 0.10, seed },
        profile: BandwidthProfile::synthetic(&spec).unwrap(),
        mode,
        master_seed: seed,
        ..ScenarioConfig::default()
    }
}

#[test]
fn fading_channels_favour_adaptive_recovery() {
    let seeds: Vec<u64> = (1..=10).collect();

    // Strong channel: adaptation still lowers the mean final latency.
    let mut on_sum = 0.0;
    let mut off_sum = 0.0;
    for &seed in &seeds {
        on_sum += run_scenario(&fading_scenario(3_600_000.0, 0.82e12, seed, RecoveryMode::SarpOn))
            .unwrap()
            .playback
            .final_latency_s;
        off_sum += run_scenario(&fading_scenario(3_600_000.0, 0.82e12, seed, RecoveryMode::SarpOff))
            .unwrap()
            .playback
            .final_latency_s;
    }
    let on_mean = on_sum / seeds.len() as f64;
    let off_mean = off_sum / seeds.len() as f64;
    assert!(
        on_mean < off_mean,
        "strong fading channel: adaptive {on_mean} >= fixed {off_mean}"
    );

    // Weak, highly variable channel: every fixed-representation run must
    // still complete, and the ensemble reports rebuffering.
    let mut total_stalls = 0usize;
    let mut runs_with_stalls = 0usize;
    for &seed in &seeds {
        let result =
            run_scenario(&fading_scenario(2_600_000.0, 2.49e12, seed, RecoveryMode::SarpOff))
                .unwrap();
        let stalls = result.playback.stall_log.len();
        total_stalls += stalls;
        runs_with_stalls += usize::from(stalls > 0);
    }
    assert!(total_stalls >= 1, "no stalls observed on the weak channel");

    println!(
        "ACCEPTANCE fading-channels: PASS (strong: adaptive {on_mean:.3} s < fixed {off_mean:.3} s; weak: {total_stalls} stalls across {runs_with_stalls}/10 runs)"
    );
}

// ===========================================================================
// 7. Byte-level reproducibility through the binary
// ===========================================================================

fn read_tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let entry = entry.unwrap();
            let path = entry.path();
            if entry.file_type().unwrap().is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                files.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn artifact_bytes_are_reproducible() {
    let bin = env!("CARGO_BIN_EXE_sarpsim");
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("short.conf");
    std::fs::write(
        &config_path,
        "[media]\ntotal_duration_s = 20\n[sweep]\nbandwidths_bps = 2000000\nseeds = 1..3\n",
    )
    .unwrap();

    // Identical single runs byte for byte.
    for out in ["runA", "runB"] {
        let status = Command::new(bin)
            .args(["run", "--config"])
            .arg(&config_path)
            .args(["--seed", "4", "--mode", "sarp-on", "--bw", "2500000", "--out"])
            .arg(dir.path().join(out))
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = read_tree(&dir.path().join("runA"));
    let b = read_tree(&dir.path().join("runB"));
    assert_eq!(a.len(), 3);
    assert_eq!(a, b);

    // Identical sweeps regardless of worker count.
    for (out, jobs) in [("sweepA", "1"), ("sweepB", "4")] {
        let status = Command::new(bin)
            .args(["sweep", "--config"])
            .arg(&config_path)
            .args(["--jobs", jobs, "--out"])
            .arg(dir.path().join(out))
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = read_tree(&dir.path().join("sweepA"));
    let b = read_tree(&dir.path().join("sweepB"));
    assert_eq!(a.len(), 6 * 3 + 1); // 6 cells x 3 artifacts + manifest
    assert_eq!(a, b);

    println!(
        "ACCEPTANCE reproducibility: PASS ({} run files and {} sweep files byte-identical)",
        3,
        a.len()
    );
}

// ===========================================================================
// 8. Latency/stall conservation at unit playback rate
// ===========================================================================

#[test]
fn unit_rate_latency_growth_equals_stall_time() {
    let mut rng = stream_rng(29, "acceptance-conservation");
    let mut windows_checked = 0usize;
    for case in 0..100u64 {
        let duration = rng.gen_range(30.0..90.0f64);
        let bw: u64 = rng.gen_range(1_500_000..6_000_000);
        let fraction = rng.gen_range(0.0..0.25);
        let mode = if rng.gen::<bool>() { RecoveryMode::SarpOn } else { RecoveryMode::SarpOff };
        let scenario = ScenarioConfig {
            presentation: PresentationConfig {
                total_duration_s: (duration * 2.0).round() / 2.0,
                ..PresentationConfig::default()
            },
            loss: LossModel::Uniform { fraction, seed: case },
            profile: BandwidthProfile::constant(bw as f64).unwrap(),
            mode,
            // An unreachable trigger keeps playback at unit rate, so every
            // sampled window is a unit-rate window.
            player: PlayerConfig {
                catch_up_trigger_s: f64::INFINITY,
                ..PlayerConfig::default()
            },
            master_seed: case,
            ..ScenarioConfig::default()
        };
        let result = run_scenario(&scenario).unwrap();
        let start = result.playback.start_wall_s;
        let samples: Vec<_> = result
            .playback
            .samples
            .iter()
            .filter(|s| s.wall_s >= start - 1e-9)
            .collect();
        assert!(samples.len() >= 2, "case {case}: too few samples");
        for _ in 0..15 {
            let i = rng.gen_range(0..samples.len() - 1);
            let j = rng.gen_range(i + 1..samples.len());
            let growth = samples[j].live_latency_s - samples[i].live_latency_s;
            let stalled = stall_total(
                &result.playback.stall_log,
                samples[i].wall_s,
                samples[j].wall_s,
            )
            .unwrap();
            assert!(
                (growth - stalled).abs() <= TICK_S,
                "case {case}: window [{}, {}] grew {growth}, stalled {stalled}",
                samples[i].wall_s,
                samples[j].wall_s
            );
            windows_checked += 1;
        }
    }
    println!(
        "ACCEPTANCE latency-conservation: PASS (100 scenarios, {windows_checked} windows)"
    );
}
