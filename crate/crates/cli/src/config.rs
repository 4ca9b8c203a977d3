//! Line-oriented configuration: `[section]` headers and `key = value` pairs.
//! Every knob has a default matching the reference experiment, so an empty
//! (or absent) file describes the standard scenario. Unknown sections or
//! keys are rejected by name.

use std::path::{Path, PathBuf};

use sarpsim_core::broadcast::{read_error_file, FecParams, LossModel};
use sarpsim_core::engine::{ScenarioConfig, SessionScenario};
use sarpsim_core::media::{PresentationConfig, RepId, RepSpec, SizeModel};
use sarpsim_core::player::PlayerConfig;
use sarpsim_core::sarp::RecoveryMode;
use sarpsim_core::session::{ServiceParams, Topology};
use sarpsim_core::unicast::BandwidthProfile;

use crate::{CliError, Result};

/// How broadcast losses are produced for a run.
#[derive(Debug, Clone, PartialEq)]
pub enum LossSetting {
    None,
    File(PathBuf),
    Uniform { fraction: f64 },
    Packet { p: f64 },
}

/// Which unicast channel a run uses.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelSetting {
    ConstantBps(u64),
    Trace(PathBuf),
}

impl ChannelSetting {
    /// Short label used in directory names and summaries.
    pub fn label(&self) -> String {
        match self {
            ChannelSetting::ConstantBps(bps) => format!("bw{bps}"),
            ChannelSetting::Trace(path) => format!(
                "trace-{}",
                path.file_stem().map_or_else(
                    || "profile".to_string(),
                    |s| s.to_string_lossy().into_owned()
                )
            ),
        }
    }

    /// The `bandwidth` summary field: a number for constant rates, the file
    /// name for traces.
    pub fn summary_value(&self) -> serde_json::Value {
        match self {
            ChannelSetting::ConstantBps(bps) => serde_json::Value::from(*bps),
            ChannelSetting::Trace(path) => {
                serde_json::Value::from(path.to_string_lossy().into_owned())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionSetting {
    pub enabled: bool,
    pub areas: Vec<String>,
    pub upf_at_mec: bool,
    pub signaling_latency_s: f64,
    pub max_delay_s: f64,
    pub dnn: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSetting {
    pub mode: RecoveryMode,
    pub channel: ChannelSetting,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSetting {
    pub bandwidths_bps: Vec<u64>,
    pub seeds: Vec<u64>,
    pub modes: Vec<RecoveryMode>,
    pub loss_fraction: f64,
}

/// Fully parsed harness configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct AppConfig {
    pub presentation: PresentationConfig,
    pub fec: FecParams,
    pub loss: LossSetting,
    pub broadcast_delay_s: f64,
    pub detection_delay_s: f64,
    pub burst_bytes: f64,
    pub rnis_staleness_s: f64,
    pub player: PlayerConfig,
    pub session: SessionSetting,
    pub run: RunSetting,
    pub sweep: SweepSetting,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            presentation: PresentationConfig::default(),
            fec: FecParams::default(),
            loss: LossSetting::Uniform { fraction: 0.1 },
            broadcast_delay_s: 0.0,
            detection_delay_s: 0.0,
            burst_bytes: sarpsim_core::unicast::DEFAULT_BURST_BYTES,
            rnis_staleness_s: 0.0,
            player: PlayerConfig::default(),
            session: SessionSetting {
                enabled: true,
                areas: vec!["area-1".to_string()],
                upf_at_mec: true,
                signaling_latency_s: 0.0,
                max_delay_s: 0.3,
                dnn: "broadcast.media".to_string(),
            },
            run: RunSetting {
                mode: RecoveryMode::SarpOff,
                channel: ChannelSetting::ConstantBps(4_000_000),
                seed: 1,
            },
            sweep: SweepSetting {
                bandwidths_bps: vec![2_000_000, 2_500_000, 3_000_000, 3_500_000, 4_000_000],
                seeds: (1..=10).collect(),
                modes: vec![RecoveryMode::SarpOn, RecoveryMode::SarpOff],
                loss_fraction: 0.1,
            },
        }
    }
}

/// Load a config file, or the defaults when no path is given.
pub fn load_config(path: Option<&Path>) -> Result<AppConfig> {
    match path {
        None => Ok(AppConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            parse_config(&text)
        }
    }
}

/// Parse configuration text into an [`AppConfig`], starting from defaults.
pub fn parse_config(text: &str) -> Result<AppConfig> {
    let mut cfg = AppConfig::default();
    let mut run_bandwidth_keys: Vec<&str> = Vec::new();
    let mut section = String::new();

    for (line_no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| {
                CliError::Config(format!("line {}: malformed section header '{line}'", line_no + 1))
            })?;
            section = name.trim().to_string();
            match section.as_str() {
                "media" | "broadcast" | "unicast" | "player" | "session" | "run" | "sweep" => {}
                other => {
                    return Err(CliError::Config(format!("unknown section '[{other}]'")));
                }
            }
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Config(format!("line {}: expected 'key = value', got '{line}'", line_no + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        if section.is_empty() {
            return Err(CliError::Config(format!(
                "key '{key}' appears before any [section] header"
            )));
        }
        apply_key(&mut cfg, &section, key, value, &mut run_bandwidth_keys)?;
    }

    if run_bandwidth_keys.len() > 1 {
        return Err(CliError::Config(
            "run.bandwidth_bps conflicts with run.bandwidth_trace; set only one".into(),
        ));
    }
    Ok(cfg)
}

fn apply_key(
    cfg: &mut AppConfig,
    section: &str,
    key: &str,
    value: &str,
    run_bandwidth_keys: &mut Vec<&'static str>,
) -> Result<()> {
    let qualified = format!("{section}.{key}");
    match (section, key) {
        ("media", "total_duration_s") => cfg.presentation.total_duration_s = f64_value(&qualified, value)?,
        ("media", "segment_duration_s") => {
            cfg.presentation.segment_duration_s = f64_value(&qualified, value)?;
        }
        ("media", "representations") => {
            cfg.presentation.representations = parse_representations(&qualified, value)?;
        }
        ("media", "broadcast_rep") => cfg.presentation.broadcast_rep_id = RepId::new(value),
        ("media", "size_model") => cfg.presentation.size_model = parse_size_model(&qualified, value)?,
        ("media", "min_buffer_segments") => {
            cfg.presentation.min_buffer_segments = f64_value(&qualified, value)?;
        }
        ("media", "ingest_delay_s") => cfg.presentation.ingest_delay_s = f64_value(&qualified, value)?,
        ("media", "size_tolerance") => cfg.presentation.size_tolerance = f64_value(&qualified, value)?,

        ("broadcast", "fec_payload_bytes") => {
            cfg.fec.packet_payload_bytes = u64_value(&qualified, value)?;
        }
        ("broadcast", "fec_overhead") => cfg.fec.repair_overhead = f64_value(&qualified, value)?,
        ("broadcast", "loss") => cfg.loss = parse_loss(&qualified, value)?,
        ("broadcast", "broadcast_delay_s") => cfg.broadcast_delay_s = f64_value(&qualified, value)?,

        ("unicast", "burst_bytes") => cfg.burst_bytes = f64_value(&qualified, value)?,
        ("unicast", "rnis_staleness_s") => cfg.rnis_staleness_s = f64_value(&qualified, value)?,

        ("player", "initial_buffer_segments") => {
            cfg.player.initial_buffer_segments = f64_value(&qualified, value)?;
        }
        ("player", "catch_up_rate") => cfg.player.catch_up_rate = f64_value(&qualified, value)?,
        ("player", "catch_up_trigger_s") => {
            cfg.player.catch_up_trigger_s = f64_value(&qualified, value)?;
        }
        ("player", "buffer_growth_per_stall_s") => {
            cfg.player.buffer_growth_per_stall_s = Some(f64_value(&qualified, value)?);
        }
        ("player", "latency_target_s") => {
            cfg.player.latency_target_s = Some(f64_value(&qualified, value)?);
        }
        ("player", "detection_delay_s") => cfg.detection_delay_s = f64_value(&qualified, value)?,

        ("session", "enabled") => cfg.session.enabled = bool_value(&qualified, value)?,
        ("session", "areas") => {
            cfg.session.areas = value.split(',').map(|a| a.trim().to_string()).collect();
        }
        ("session", "upf_at_mec") => cfg.session.upf_at_mec = bool_value(&qualified, value)?,
        ("session", "signaling_latency_s") => {
            cfg.session.signaling_latency_s = f64_value(&qualified, value)?;
        }
        ("session", "max_delay_s") => cfg.session.max_delay_s = f64_value(&qualified, value)?,
        ("session", "dnn") => cfg.session.dnn = value.to_string(),

        ("run", "mode") => cfg.run.mode = mode_value(&qualified, value)?,
        ("run", "bandwidth_bps") => {
            cfg.run.channel = ChannelSetting::ConstantBps(u64_value(&qualified, value)?);
            run_bandwidth_keys.push("run.bandwidth_bps");
        }
        ("run", "bandwidth_trace") => {
            cfg.run.channel = ChannelSetting::Trace(PathBuf::from(value));
            run_bandwidth_keys.push("run.bandwidth_trace");
        }
        ("run", "seed") => cfg.run.seed = u64_value(&qualified, value)?,

        ("sweep", "bandwidths_bps") => {
            cfg.sweep.bandwidths_bps = value
                .split(',')
                .map(|v| u64_value(&qualified, v.trim()))
                .collect::<Result<_>>()?;
        }
        ("sweep", "seeds") => cfg.sweep.seeds = parse_seeds(&qualified, value)?,
        ("sweep", "modes") => {
            cfg.sweep.modes = value
                .split(',')
                .map(|v| mode_value(&qualified, v.trim()))
                .collect::<Result<_>>()?;
        }
        ("sweep", "loss_fraction") => cfg.sweep.loss_fraction = f64_value(&qualified, value)?,

        _ => {
            return Err(CliError::Config(format!("unknown key '{qualified}'")));
        }
    }
    Ok(())
}

fn f64_value(key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .map_err(|_| CliError::Config(format!("invalid value '{value}' for '{key}': expected a number")))
}

fn u64_value(key: &str, value: &str) -> Result<u64> {
    value
        .parse::<u64>()
        .map_err(|_| CliError::Config(format!("invalid value '{value}' for '{key}': expected an integer")))
}

fn bool_value(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(CliError::Config(format!(
            "invalid value '{value}' for '{key}': expected true or false"
        ))),
    }
}

fn mode_value(key: &str, value: &str) -> Result<RecoveryMode> {
    RecoveryMode::parse(value)
        .map_err(|_| CliError::Config(format!("invalid value '{value}' for '{key}': expected sarp-on or sarp-off")))
}

/// `id:bitrate_bps:label` entries separated by commas.
fn parse_representations(key: &str, value: &str) -> Result<Vec<RepSpec>> {
    let mut reps = Vec::new();
    for entry in value.split(',') {
        let parts: Vec<&str> = entry.trim().split(':').collect();
        if parts.len() != 3 {
            return Err(CliError::Config(format!(
                "invalid value '{entry}' for '{key}': expected id:bitrate_bps:label"
            )));
        }
        reps.push(RepSpec {
            id: RepId::new(parts[0]),
            bitrate_bps: u64_value(key, parts[1])?,
            resolution_label: parts[2].to_string(),
        });
    }
    if reps.is_empty() {
        return Err(CliError::Config(format!("'{key}' must list at least one representation")));
    }
    Ok(reps)
}

fn parse_size_model(key: &str, value: &str) -> Result<SizeModel> {
    if value == "constant" {
        return Ok(SizeModel::Constant);
    }
    if let Some(cv) = value.strip_prefix("vbr:") {
        return Ok(SizeModel::Vbr {
            cv: f64_value(key, cv)?,
        });
    }
    if let Some(path) = value.strip_prefix("manifest:") {
        let sizes = sarpsim_core::media::read_size_manifest(Path::new(path))
            .map_err(|e| CliError::Config(format!("invalid value for '{key}': {e}")))?;
        return Ok(SizeModel::Explicit(sizes));
    }
    Err(CliError::Config(format!(
        "invalid value '{value}' for '{key}': expected constant, vbr:<cv>, or manifest:<path>"
    )))
}

fn parse_loss(key: &str, value: &str) -> Result<LossSetting> {
    if value == "none" {
        return Ok(LossSetting::None);
    }
    if let Some(path) = value.strip_prefix("file:") {
        return Ok(LossSetting::File(PathBuf::from(path)));
    }
    if let Some(fraction) = value.strip_prefix("uniform:") {
        return Ok(LossSetting::Uniform {
            fraction: f64_value(key, fraction)?,
        });
    }
    if let Some(p) = value.strip_prefix("packet:") {
        return Ok(LossSetting::Packet {
            p: f64_value(key, p)?,
        });
    }
    Err(CliError::Config(format!(
        "invalid value '{value}' for '{key}': expected none, uniform:<fraction>, packet:<p>, or file:<path>"
    )))
}

/// `a..b` inclusive range or a comma-separated list.
pub fn parse_seeds(key: &str, value: &str) -> Result<Vec<u64>> {
    let seeds: Vec<u64> = if let Some((lo, hi)) = value.split_once("..") {
        let lo = u64_value(key, lo.trim())?;
        let hi = u64_value(key, hi.trim())?;
        if lo > hi {
            return Err(CliError::Config(format!(
                "invalid value '{value}' for '{key}': range start exceeds end"
            )));
        }
        (lo..=hi).collect()
    } else {
        value
            .split(',')
            .map(|v| u64_value(key, v.trim()))
            .collect::<Result<_>>()?
    };
    let mut unique = seeds.clone();
    unique.sort_unstable();
    unique.dedup();
    if unique.len() != seeds.len() || seeds.is_empty() {
        return Err(CliError::Config(format!(
            "'{key}' must list at least one seed, without duplicates"
        )));
    }
    Ok(seeds)
}

impl AppConfig {
    /// Resolve the loss setting for one run seed.
    pub fn resolve_loss(&self, seed: u64, run_id: &str) -> Result<LossModel> {
        Ok(match &self.loss {
            LossSetting::None => LossModel::ErrorFile(sarpsim_core::broadcast::ErrorFile::new([])),
            LossSetting::File(path) => {
                let file = read_error_file(path).map_err(|e| CliError::Run {
                    id: run_id.to_string(),
                    source: e,
                })?;
                LossModel::ErrorFile(file)
            }
            LossSetting::Uniform { fraction } => LossModel::Uniform {
                fraction: *fraction,
                seed,
            },
            LossSetting::Packet { p } => LossModel::PacketBernoulli { p: *p, seed },
        })
    }

    /// Resolve the unicast channel for a run.
    pub fn resolve_profile(&self, channel: &ChannelSetting, run_id: &str) -> Result<BandwidthProfile> {
        match channel {
            ChannelSetting::ConstantBps(bps) => BandwidthProfile::constant(*bps as f64),
            ChannelSetting::Trace(path) => BandwidthProfile::from_trace_csv(path),
        }
        .map_err(|e| CliError::Run {
            id: run_id.to_string(),
            source: e,
        })
    }

    fn session_scenario(&self) -> Option<SessionScenario> {
        if !self.session.enabled {
            return None;
        }
        let max_bitrate = self
            .presentation
            .representations
            .iter()
            .map(|r| r.bitrate_bps)
            .max()
            .unwrap_or(6_000_000);
        Some(SessionScenario {
            params: ServiceParams {
                max_video_bitrate_bps: max_bitrate,
                max_delay_s: self.session.max_delay_s,
                broadcast_areas: self.session.areas.clone(),
                dnn: self.session.dnn.clone(),
                ingest_mode: sarpsim_core::session::IngestMode::Push,
            },
            topology: Topology {
                areas: Topology::uniform(&self.session.areas, self.session.upf_at_mec).areas,
                signaling_latency_s: self.session.signaling_latency_s,
            },
            faults: sarpsim_core::session::FaultPlan::none(),
        })
    }

    /// Assemble the full scenario for one (channel, mode, seed) cell.
    pub fn scenario(
        &self,
        channel: &ChannelSetting,
        mode: RecoveryMode,
        seed: u64,
        run_id: &str,
    ) -> Result<ScenarioConfig> {
        Ok(ScenarioConfig {
            presentation: self.presentation.clone(),
            fec: self.fec.clone(),
            loss: self.resolve_loss(seed, run_id)?,
            profile: self.resolve_profile(channel, run_id)?,
            mode,
            player: self.player.clone(),
            master_seed: seed,
            broadcast_delay_s: self.broadcast_delay_s,
            detection_delay_s: self.detection_delay_s,
            burst_bytes: self.burst_bytes,
            rnis_staleness_s: self.rnis_staleness_s,
            session: self.session_scenario(),
        })
    }

    /// Scenario for a sweep cell: uniform loss at the sweep fraction, the
    /// cell's seed shared between the error draw and the master seed.
    pub fn sweep_scenario(
        &self,
        bandwidth_bps: u64,
        mode: RecoveryMode,
        seed: u64,
        run_id: &str,
    ) -> Result<ScenarioConfig> {
        let mut scenario = self.scenario(
            &ChannelSetting::ConstantBps(bandwidth_bps),
            mode,
            seed,
            run_id,
        )?;
        scenario.loss = LossModel::Uniform {
            fraction: self.sweep.loss_fraction,
            seed,
        };
        Ok(scenario)
    }
}
