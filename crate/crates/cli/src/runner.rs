//! Run orchestration: single-run execution with its artifact files, the
//! sweep matrix fanned out across worker threads, and report generation
//! (aggregated charts plus machine-readable summaries) from sweep output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Value};

use sarpsim_core::broadcast::{generate_error_file, write_error_file};
use sarpsim_core::engine::{run_scenario, ScenarioConfig, ScenarioResult};
use sarpsim_core::player::write_timeseries_csv;
use sarpsim_core::sarp::RecoveryMode;
use sarpsim_core::session::write_trace_csv;

use crate::config::AppConfig;
use crate::plot::{write_chart, ChartSpec, Curve};
use crate::stats::{aggregate_ci, mean_ci};
use crate::{CliError, Result};

/// Identity of one run, used for artifact naming and error reporting.
#[derive(Debug, Clone)]
pub struct RunMeta {
    pub run_id: String,
    pub mode: RecoveryMode,
    pub seed: u64,
    /// Either a bit rate (number) or a trace label (string) in the summary.
    pub bandwidth: Value,
}

/// Outcome of one sweep cell, kept in memory for callers that want to check
/// aggregate behaviour without re-reading the artifact files.
#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub dir: String,
    pub bandwidth_bps: u64,
    pub mode: RecoveryMode,
    pub seed: u64,
    pub startup_latency_s: f64,
    pub final_latency_s: f64,
    pub stall_total_s: f64,
    pub stall_count: usize,
    pub recovery_count: u64,
    pub recovery_bytes: u64,
}

// ===========================================================================
// Single runs
// ===========================================================================

/// Execute one scenario and write its artifacts into `out_dir`:
/// `timeseries.csv`, `summary.json`, and `session_trace.csv` when session
/// control ran.
pub fn execute_run(scenario: &ScenarioConfig, meta: &RunMeta, out_dir: &Path) -> Result<ScenarioResult> {
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let wrap = |e: sarpsim_core::Error| CliError::Run {
        id: meta.run_id.clone(),
        source: e,
    };
    let result = run_scenario(scenario).map_err(wrap)?;

    write_timeseries_csv(&result.playback.samples, &out_dir.join("timeseries.csv")).map_err(wrap)?;
    if let Some(trace) = &result.session_trace {
        write_trace_csv(trace, &out_dir.join("session_trace.csv")).map_err(wrap)?;
    }

    let summary = run_summary(&result, meta);
    let path = out_dir.join("summary.json");
    let text = serde_json::to_string_pretty(&summary)
        .map_err(|e| CliError::Other(format!("summary serialization failed: {e}")))?;
    std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
    Ok(result)
}

fn run_summary(result: &ScenarioResult, meta: &RunMeta) -> Value {
    let served: BTreeMap<String, u64> = result
        .served_reps
        .iter()
        .map(|(rep, n)| (rep.to_string(), *n))
        .collect();
    json!({
        "final_latency_s": result.playback.final_latency_s,
        "startup_latency_s": result.playback.startup_latency_s,
        "stall_total_s": result.playback.stall_total_s(),
        "stall_count": result.playback.stall_log.len(),
        "recovery_count": result.recovery_count,
        "recovery_bytes": result.recovery_bytes,
        "served_reps": served,
        "lost_segments": result.lost_segments.len(),
        "media_epoch_s": result.media_epoch_s,
        "seed": meta.seed,
        "mode": meta.mode.to_string(),
        "bandwidth": meta.bandwidth,
    })
}

/// Execute the run described by `[run]` in the config, writing artifacts
/// directly into `out_dir`.
pub fn run_single(cfg: &AppConfig, out_dir: &Path) -> Result<ScenarioResult> {
    let run_id = format!(
        "{}_{}_seed{:02}",
        cfg.run.channel.label(),
        cfg.run.mode,
        cfg.run.seed
    );
    let scenario = cfg.scenario(&cfg.run.channel, cfg.run.mode, cfg.run.seed, &run_id)?;
    let meta = RunMeta {
        run_id,
        mode: cfg.run.mode,
        seed: cfg.run.seed,
        bandwidth: cfg.run.channel.summary_value(),
    };
    execute_run(&scenario, &meta, out_dir)
}

/// Write one error file per seed into `out_dir` as
/// `errors_seed{NN}.txt`, returning the written paths.
pub fn generate_error_files(
    segments: u32,
    fraction: f64,
    seeds: &[u64],
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut paths = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let id = format!("errors_seed{seed:02}");
        let ef = generate_error_file(segments, fraction, seed).map_err(|e| CliError::Run {
            id: id.clone(),
            source: e,
        })?;
        let path = out_dir.join(format!("{id}.txt"));
        write_error_file(&ef, &path).map_err(|e| CliError::Run {
            id,
            source: e,
        })?;
        paths.push(path);
    }
    Ok(paths)
}

// ===========================================================================
// Sweeps
// ===========================================================================

fn cell_dir_name(bandwidth_bps: u64, mode: RecoveryMode, seed: u64) -> String {
    format!("bw{bandwidth_bps}_{mode}_seed{seed:02}")
}

/// Run the full sweep matrix (bandwidth x mode x seed) under `out`, one
/// directory per cell plus a `manifest.json` index. Cells run concurrently;
/// each cell's output depends only on its own scenario, so the artifact
/// bytes are independent of `jobs`.
pub fn run_sweep(cfg: &AppConfig, out: &Path, jobs: Option<usize>) -> Result<Vec<CellOutcome>> {
    if jobs == Some(0) {
        return Err(CliError::Config("jobs must be at least 1".into()));
    }
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;

    let mut cells = Vec::new();
    for &bw in &cfg.sweep.bandwidths_bps {
        for &mode in &cfg.sweep.modes {
            for &seed in &cfg.sweep.seeds {
                cells.push((bw, mode, seed, cell_dir_name(bw, mode, seed)));
            }
        }
    }

    let run_cell = |(bw, mode, seed, dir): &(u64, RecoveryMode, u64, String)| -> Result<CellOutcome> {
        let scenario = cfg.sweep_scenario(*bw, *mode, *seed, dir)?;
        let meta = RunMeta {
            run_id: dir.clone(),
            mode: *mode,
            seed: *seed,
            bandwidth: json!(bw),
        };
        let result = execute_run(&scenario, &meta, &out.join(dir))?;
        Ok(CellOutcome {
            dir: dir.clone(),
            bandwidth_bps: *bw,
            mode: *mode,
            seed: *seed,
            startup_latency_s: result.playback.startup_latency_s,
            final_latency_s: result.playback.final_latency_s,
            stall_total_s: result.playback.stall_total_s(),
            stall_count: result.playback.stall_log.len(),
            recovery_count: result.recovery_count,
            recovery_bytes: result.recovery_bytes,
        })
    };

    let results: Vec<Result<CellOutcome>> = match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Other(format!("worker pool setup failed: {e}")))?
            .install(|| cells.par_iter().map(run_cell).collect()),
        None => cells.par_iter().map(run_cell).collect(),
    };
    // Surface the first failure in deterministic cell order.
    let mut outcomes = Vec::with_capacity(results.len());
    for r in results {
        outcomes.push(r?);
    }

    let manifest = json!({
        "loss_fraction": cfg.sweep.loss_fraction,
        "cells": outcomes
            .iter()
            .map(|c| {
                json!({
                    "dir": c.dir,
                    "bandwidth_bps": c.bandwidth_bps,
                    "mode": c.mode.to_string(),
                    "seed": c.seed,
                })
            })
            .collect::<Vec<_>>(),
    });
    let path = out.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Other(format!("manifest serialization failed: {e}")))?;
    std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
    Ok(outcomes)
}

// ===========================================================================
// Reports
// ===========================================================================

#[derive(Debug, Clone)]
struct ManifestCell {
    dir: String,
    bandwidth_bps: u64,
    mode: String,
    seed: u64,
}

fn read_manifest(in_dir: &Path) -> Result<Vec<ManifestCell>> {
    let path = in_dir.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Other(format!("{}: malformed manifest: {e}", path.display())))?;
    let cells = value
        .get("cells")
        .and_then(Value::as_array)
        .ok_or_else(|| CliError::Other(format!("{}: manifest has no cells", path.display())))?;
    let mut out = Vec::with_capacity(cells.len());
    for cell in cells {
        let get = |key: &str| {
            cell.get(key)
                .ok_or_else(|| CliError::Other(format!("{}: cell missing '{key}'", path.display())))
        };
        out.push(ManifestCell {
            dir: get("dir")?.as_str().unwrap_or_default().to_string(),
            bandwidth_bps: get("bandwidth_bps")?.as_u64().unwrap_or_default(),
            mode: get("mode")?.as_str().unwrap_or_default().to_string(),
            seed: get("seed")?.as_u64().unwrap_or_default(),
        });
    }
    Ok(out)
}

/// Wall-time and live-latency columns of one run's time series.
fn read_latency_series(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| {
        CliError::Other(format!("{}: cannot read time series: {e}", path.display()))
    })?;
    let mut series = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            CliError::Other(format!("{}: malformed time series row: {e}", path.display()))
        })?;
        let wall: f64 = record
            .get(0)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| CliError::Other(format!("{}: bad wall_s value", path.display())))?;
        let latency: f64 = record
            .get(2)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| CliError::Other(format!("{}: bad live_latency_s value", path.display())))?;
        series.push((wall, latency));
    }
    Ok(series)
}

fn read_summary_metric(dir: &Path, key: &str) -> Result<f64> {
    let path = dir.join("summary.json");
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Other(format!("{}: malformed summary: {e}", path.display())))?;
    value
        .get(key)
        .and_then(Value::as_f64)
        .ok_or_else(|| CliError::Other(format!("{}: summary missing '{key}'", path.display())))
}

fn format_bandwidth(bps: u64) -> String {
    let mbps = bps as f64 / 1e6;
    if (mbps - mbps.round()).abs() < 1e-9 {
        format!("{} Mbps", mbps.round() as u64)
    } else {
        format!("{mbps} Mbps")
    }
}

/// Aggregate sweep output under `in_dir` into charts and `report.json`
/// under `out_dir`. Returns warning lines for cells that had to be omitted.
pub fn build_report(in_dir: &Path, out_dir: &Path, level: f64) -> Result<Vec<String>> {
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let manifest = read_manifest(in_dir)?;
    let mut warnings = Vec::new();

    // Group latency series and scalar metrics by (bandwidth, mode).
    let mut series_by_group: BTreeMap<(u64, String), Vec<Vec<(f64, f64)>>> = BTreeMap::new();
    let mut finals_by_group: BTreeMap<(u64, String), Vec<f64>> = BTreeMap::new();
    let mut stalls_by_group: BTreeMap<(u64, String), Vec<f64>> = BTreeMap::new();
    let mut seeds_by_group: BTreeMap<(u64, String), Vec<u64>> = BTreeMap::new();
    for cell in &manifest {
        let dir = in_dir.join(&cell.dir);
        let ts_path = dir.join("timeseries.csv");
        let series = match read_latency_series(&ts_path) {
            Ok(s) if !s.is_empty() => s,
            Ok(_) => {
                warnings.push(format!("cell {}: empty time series, omitted", cell.dir));
                continue;
            }
            Err(e) => {
                warnings.push(format!("cell {}: {e}, omitted", cell.dir));
                continue;
            }
        };
        let key = (cell.bandwidth_bps, cell.mode.clone());
        series_by_group.entry(key.clone()).or_default().push(series);
        finals_by_group
            .entry(key.clone())
            .or_default()
            .push(read_summary_metric(&dir, "final_latency_s")?);
        stalls_by_group
            .entry(key.clone())
            .or_default()
            .push(read_summary_metric(&dir, "stall_total_s")?);
        seeds_by_group.entry(key).or_default().push(cell.seed);
    }
    if series_by_group.is_empty() {
        return Err(CliError::Other("no usable cells in sweep output".into()));
    }

    let mut aggregates: BTreeMap<(u64, String), (Vec<(f64, f64)>, Vec<(f64, f64, f64)>)> =
        BTreeMap::new();
    for (key, runs) in &series_by_group {
        let agg = aggregate_ci(runs, level)?;
        let mean: Vec<(f64, f64)> = agg.points.iter().map(|p| (p.t_s, p.mean)).collect();
        let band: Vec<(f64, f64, f64)> = agg
            .points
            .iter()
            .map(|p| {
                let half = p.ci_half.unwrap_or(0.0);
                (p.t_s, p.mean - half, p.mean + half)
            })
            .collect();
        aggregates.insert(key.clone(), (mean, band));
    }

    let ci_note = format!("{:.0}% CI per time point", level * 100.0);

    // One chart per mode, one curve per bandwidth.
    let modes: Vec<String> = {
        let mut m: Vec<String> = aggregates.keys().map(|(_, mode)| mode.clone()).collect();
        m.sort();
        m.dedup();
        m
    };
    for mode in &modes {
        let curves: Vec<Curve> = aggregates
            .iter()
            .filter(|((_, m), _)| m == mode)
            .map(|((bw, _), (mean, band))| Curve {
                label: format_bandwidth(*bw),
                points: mean.clone(),
                band: Some(band.clone()),
            })
            .collect();
        let spec = ChartSpec {
            title: format!("Live latency, {mode} ({ci_note})"),
            x_label: "wall time (s)".into(),
            y_label: "live latency (s)".into(),
            curves,
        };
        warnings.extend(write_chart(
            &spec,
            &out_dir.join(format!("latency_{mode}.svg")),
            &out_dir.join(format!("latency_{mode}.csv")),
        )?);
    }

    // One paired chart per bandwidth, one curve per mode.
    let bandwidths: Vec<u64> = {
        let mut b: Vec<u64> = aggregates.keys().map(|(bw, _)| *bw).collect();
        b.sort();
        b.dedup();
        b
    };
    for bw in &bandwidths {
        let curves: Vec<Curve> = aggregates
            .iter()
            .filter(|((b, _), _)| b == bw)
            .map(|((_, mode), (mean, band))| Curve {
                label: mode.clone(),
                points: mean.clone(),
                band: Some(band.clone()),
            })
            .collect();
        let spec = ChartSpec {
            title: format!("Live latency at {} ({ci_note})", format_bandwidth(*bw)),
            x_label: "wall time (s)".into(),
            y_label: "live latency (s)".into(),
            curves,
        };
        warnings.extend(write_chart(
            &spec,
            &out_dir.join(format!("latency_bw{bw}.svg")),
            &out_dir.join(format!("latency_bw{bw}.csv")),
        )?);
    }

    // Machine-readable rollup.
    let mut cells_json = Vec::new();
    for (key, finals) in &finals_by_group {
        let (mean_final, half_final) = mean_ci(finals, level)?;
        let (mean_stall, _) = mean_ci(&stalls_by_group[key], level)?;
        cells_json.push(json!({
            "bandwidth_bps": key.0,
            "mode": key.1,
            "seeds": seeds_by_group[key],
            "runs": finals.len(),
            "mean_final_latency_s": mean_final,
            "ci_half_final_latency_s": half_final,
            "mean_stall_total_s": mean_stall,
        }));
    }
    let report = json!({
        "ci_level": level,
        "ci_method": "student-t",
        "grid_step_s": crate::stats::GRID_STEP_S,
        "cells": cells_json,
    });
    let path = out_dir.join("report.json");
    let text = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Other(format!("report serialization failed: {e}")))?;
    std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
    Ok(warnings)
}
