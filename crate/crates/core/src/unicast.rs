//! Unicast recovery channel: time-varying bandwidth profiles, token-bucket
//! shaping with a fixed integration tick, download timing, and the radio
//! bandwidth oracle queried at recovery time.

use std::path::Path;

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Integration tick for shaped downloads. Half-millisecond errors are
/// negligible against 500 ms segments.
pub const TICK_S: f64 = 1e-3;

/// Default shaper burst. A little under half of a broadcast-quality segment:
/// small enough that back-to-back losses still pay for their bandwidth,
/// large enough that an idle channel absorbs a single recovery quickly.
pub const DEFAULT_BURST_BYTES: f64 = 150_000.0;

/// Lowest rate a synthetic profile may report, so downloads always progress.
const MIN_SYNTHETIC_RATE_BPS: f64 = 1_000.0;

const EPS_BYTES: f64 = 1e-6;
const MAX_TICKS_PER_TRANSFER: u64 = 200_000_000;

// ===========================================================================
// Bandwidth profiles
// ===========================================================================

/// Unicast bandwidth as a function of wall time. Step profiles hold each
/// rate from its timestamp until the next entry; the last rate holds forever.
#[derive(Debug, Clone, PartialEq)]
pub enum BandwidthProfile {
    Constant { rate_bps: f64 },
    Steps { points: Vec<(f64, f64)> },
}

/// Parameters for a synthetic first-order autoregressive profile.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub mean_bps: f64,
    pub variance_bps2: f64,
    pub seed: u64,
    pub step_s: f64,
    pub horizon_s: f64,
    /// Lag-one correlation of the underlying log-rate process.
    pub phi: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            mean_bps: 3_600_000.0,
            variance_bps2: 0.82e12,
            seed: 0,
            step_s: 1.0,
            horizon_s: 720.0,
            phi: 0.9,
        }
    }
}

impl BandwidthProfile {
    pub fn constant(rate_bps: f64) -> Result<Self> {
        if !rate_bps.is_finite() || rate_bps <= 0.0 {
            return Err(Error::Unicast(format!("rate {rate_bps} must be positive")));
        }
        Ok(Self::Constant { rate_bps })
    }

    /// Step profile from explicit points. Times must be strictly ascending
    /// with the first at t = 0; rates must be positive.
    pub fn from_steps(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Unicast("step profile needs at least one point".into()));
        }
        if points[0].0 != 0.0 {
            return Err(Error::Unicast(format!(
                "step profile must start at t=0, first point is at t={}",
                points[0].0
            )));
        }
        for pair in points.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(Error::Unicast(format!(
                    "step times must be strictly ascending ({} then {})",
                    pair[0].0, pair[1].0
                )));
            }
        }
        for (t, r) in &points {
            if !r.is_finite() || *r <= 0.0 {
                return Err(Error::Unicast(format!("rate {r} at t={t} must be positive")));
            }
        }
        Ok(Self::Steps { points })
    }

    /// Load a step profile from CSV with header `time_s,bandwidth_bps`.
    pub fn from_trace_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| Error::Unicast(format!("cannot open trace {}: {e}", path.display())))?;
        {
            let headers = reader
                .headers()
                .map_err(|e| Error::Unicast(format!("trace {}: {e}", path.display())))?;
            if headers.iter().collect::<Vec<_>>() != ["time_s", "bandwidth_bps"] {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: 1,
                    reason: format!(
                        "expected header time_s,bandwidth_bps, found '{}'",
                        headers.iter().collect::<Vec<_>>().join(",")
                    ),
                });
            }
        }
        let mut points = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let line = i + 2;
            let record = record.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line,
                reason: e.to_string(),
            })?;
            if record.len() != 2 {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    reason: format!("expected 2 fields, found {}", record.len()),
                });
            }
            let t: f64 = record[0].parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                reason: format!("invalid time '{}'", &record[0]),
            })?;
            let r: f64 = record[1].parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                reason: format!("invalid rate '{}'", &record[1]),
            })?;
            points.push((t, r));
        }
        Self::from_steps(points).map_err(|e| match e {
            Error::Unicast(reason) => Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                reason,
            },
            other => other,
        })
    }

    /// Generate a synthetic profile: log-space AR(1) steps whose realized
    /// sample mean and variance are corrected onto the requested targets,
    /// then floored at a minimal positive rate. Deterministic in the seed.
    pub fn synthetic(spec: &SyntheticSpec) -> Result<Self> {
        if !spec.mean_bps.is_finite() || spec.mean_bps <= 0.0 {
            return Err(Error::Unicast(format!("mean {} must be positive", spec.mean_bps)));
        }
        if !spec.variance_bps2.is_finite() || spec.variance_bps2 < 0.0 {
            return Err(Error::Unicast(format!(
                "variance {} must be non-negative",
                spec.variance_bps2
            )));
        }
        if spec.step_s <= 0.0 || spec.horizon_s < spec.step_s {
            return Err(Error::Unicast(format!(
                "invalid step {} / horizon {}",
                spec.step_s, spec.horizon_s
            )));
        }
        if !(0.0..1.0).contains(&spec.phi) {
            return Err(Error::Unicast(format!("phi {} must lie in [0, 1)", spec.phi)));
        }
        let n = (spec.horizon_s / spec.step_s).ceil() as usize;
        if spec.variance_bps2 == 0.0 {
            let points = (0..n)
                .map(|i| (i as f64 * spec.step_s, spec.mean_bps))
                .collect();
            return Self::from_steps(points);
        }
        if n < 2 {
            return Err(Error::Unicast(
                "synthetic profile with nonzero variance needs at least two steps".into(),
            ));
        }

        // Log-normal marginal matching the requested mean and variance, with
        // AR(1) memory in log space.
        let m = spec.mean_bps;
        let v = spec.variance_bps2;
        let sigma2_y = (1.0 + v / (m * m)).ln();
        let mu_y = m.ln() - sigma2_y / 2.0;
        let innovation_sd = (sigma2_y * (1.0 - spec.phi * spec.phi)).sqrt();
        let stationary = Normal::new(0.0, sigma2_y.sqrt()).expect("finite parameters");
        let innovations = Normal::new(0.0, innovation_sd).expect("finite parameters");

        let mut rng = stream_rng(spec.seed, "bw-synth");
        let mut dev = stationary.sample(&mut rng);
        let mut raw = Vec::with_capacity(n);
        for _ in 0..n {
            raw.push((mu_y + dev).exp());
            dev = spec.phi * dev + innovations.sample(&mut rng);
        }

        // Affine correction in linear space so the realization hits the
        // target moments exactly (before flooring).
        let sample_mean = raw.iter().sum::<f64>() / n as f64;
        let sample_var =
            raw.iter().map(|x| (x - sample_mean).powi(2)).sum::<f64>() / n as f64;
        if sample_var <= 0.0 {
            return Err(Error::Unicast("degenerate synthetic realization".into()));
        }
        let scale = (v / sample_var).sqrt();
        let points: Vec<(f64, f64)> = raw
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let corrected = m + scale * (x - sample_mean);
                (i as f64 * spec.step_s, corrected.max(MIN_SYNTHETIC_RATE_BPS))
            })
            .collect();

        let mean = points.iter().map(|(_, r)| r).sum::<f64>() / n as f64;
        let var = points.iter().map(|(_, r)| (r - mean).powi(2)).sum::<f64>() / n as f64;
        if (mean - m).abs() / m > 0.10 || (var - v).abs() / v > 0.10 {
            return Err(Error::Unicast(format!(
                "synthetic profile seed {} realized mean {mean:.0} / variance {var:.3e}, \
                 more than 10% from targets {m:.0} / {v:.3e}",
                spec.seed
            )));
        }
        Self::from_steps(points)
    }

    /// Rate at wall time `t_s`.
    pub fn rate_at(&self, t_s: f64) -> Result<f64> {
        if !t_s.is_finite() || t_s < 0.0 {
            return Err(Error::Unicast(format!("cannot query rate at t={t_s}")));
        }
        Ok(match self {
            Self::Constant { rate_bps } => *rate_bps,
            Self::Steps { points } => {
                let idx = match points.binary_search_by(|(t, _)| t.total_cmp(&t_s)) {
                    Ok(i) => i,
                    Err(0) => unreachable!("first point is at t=0 and t_s >= 0"),
                    Err(i) => i - 1,
                };
                points[idx].1
            }
        })
    }

    /// Bits deliverable over `[t0, t1]` at the profile rate.
    pub fn integral_bits(&self, t0: f64, t1: f64) -> Result<f64> {
        if t1 < t0 {
            return Err(Error::Unicast(format!("bad window [{t0}, {t1}]")));
        }
        match self {
            Self::Constant { rate_bps } => Ok(rate_bps * (t1 - t0)),
            Self::Steps { points } => {
                let mut total = 0.0;
                for (i, (start, rate)) in points.iter().enumerate() {
                    let end = points.get(i + 1).map_or(f64::INFINITY, |(t, _)| *t);
                    let lo = start.max(t0);
                    let hi = end.min(t1);
                    if hi > lo {
                        total += rate * (hi - lo);
                    }
                }
                Ok(total)
            }
        }
    }
}

// ===========================================================================
// Token bucket and downloads
// ===========================================================================

/// Byte-denominated token bucket refilled at the profile rate.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenBucket {
    pub burst_bytes: f64,
    tokens_bytes: f64,
    last_update_s: f64,
}

impl TokenBucket {
    /// Empty bucket observed at `t0_s`.
    pub fn new(burst_bytes: f64, t0_s: f64) -> Result<Self> {
        if !burst_bytes.is_finite() || burst_bytes < 0.0 {
            return Err(Error::Unicast(format!("burst {burst_bytes} must be >= 0")));
        }
        Ok(Self {
            burst_bytes,
            tokens_bytes: 0.0,
            last_update_s: t0_s,
        })
    }

    /// Bucket already filled to its burst limit.
    pub fn full(burst_bytes: f64, t0_s: f64) -> Result<Self> {
        let mut b = Self::new(burst_bytes, t0_s)?;
        b.tokens_bytes = burst_bytes;
        Ok(b)
    }

    pub fn tokens_bytes(&self) -> f64 {
        self.tokens_bytes
    }

    /// Accrue tokens over the idle window since the last observation.
    pub fn accrue(&mut self, profile: &BandwidthProfile, t_s: f64) -> Result<()> {
        if t_s < self.last_update_s {
            return Err(Error::Unicast(format!(
                "bucket observed at {t_s} before its last update {}",
                self.last_update_s
            )));
        }
        let bits = profile.integral_bits(self.last_update_s, t_s)?;
        self.tokens_bytes = (self.tokens_bytes + bits / 8.0).min(self.burst_bytes);
        self.last_update_s = t_s;
        Ok(())
    }
}

/// Shaped download of `size_bytes` starting at `start_s`: stored tokens are
/// spent instantly, the remainder arrives tick by tick at the profile rate.
/// Returns the transfer duration and leaves the bucket at completion time.
pub fn download_duration(
    size_bytes: u64,
    bucket: &mut TokenBucket,
    profile: &BandwidthProfile,
    start_s: f64,
) -> Result<f64> {
    if size_bytes == 0 {
        return Err(Error::Unicast("cannot download a zero-byte object".into()));
    }
    bucket.accrue(profile, start_s)?;
    let from_bucket = bucket.tokens_bytes.min(size_bytes as f64);
    bucket.tokens_bytes -= from_bucket;
    let mut remaining = size_bytes as f64 - from_bucket;

    let mut ticks: u64 = 0;
    while remaining > EPS_BYTES {
        let t = start_s + ticks as f64 / 1_000.0;
        remaining -= profile.rate_at(t)? * TICK_S / 8.0;
        ticks += 1;
        if ticks > MAX_TICKS_PER_TRANSFER {
            return Err(Error::Unicast(format!(
                "transfer of {size_bytes} bytes starting at {start_s} s did not finish \
                 within {MAX_TICKS_PER_TRANSFER} ticks"
            )));
        }
    }
    let duration = ticks as f64 / 1_000.0;
    // The channel was saturated for the whole transfer: no tokens accrue.
    bucket.last_update_s = start_s + duration;
    Ok(duration)
}

/// One completed unicast transfer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transfer {
    pub start_s: f64,
    pub end_s: f64,
}

/// Single-terminal unicast channel: one transfer at a time, FIFO, shaped by
/// one token bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct UnicastChannel {
    profile: BandwidthProfile,
    bucket: TokenBucket,
    busy_until_s: f64,
}

impl UnicastChannel {
    pub fn new(profile: BandwidthProfile, burst_bytes: f64) -> Result<Self> {
        let bucket = TokenBucket::new(burst_bytes, 0.0)?;
        Ok(Self {
            profile,
            bucket,
            busy_until_s: 0.0,
        })
    }

    pub fn profile(&self) -> &BandwidthProfile {
        &self.profile
    }

    /// Queue a transfer requested at `request_time_s`; it starts once the
    /// channel is free and runs to completion.
    pub fn transfer(&mut self, size_bytes: u64, request_time_s: f64) -> Result<Transfer> {
        if !request_time_s.is_finite() || request_time_s < 0.0 {
            return Err(Error::Unicast(format!(
                "invalid request time {request_time_s}"
            )));
        }
        let start_s = request_time_s.max(self.busy_until_s);
        let duration = download_duration(size_bytes, &mut self.bucket, &self.profile, start_s)?;
        let end_s = start_s + duration;
        self.busy_until_s = end_s;
        Ok(Transfer { start_s, end_s })
    }
}

// ===========================================================================
// RNIS oracle
// ===========================================================================

/// Radio-side bandwidth oracle: reports the unicast profile rate, optionally
/// aged by a staleness lag.
#[derive(Debug, Clone, PartialEq)]
pub struct RnisOracle {
    profile: BandwidthProfile,
    staleness_s: f64,
}

impl RnisOracle {
    pub fn new(profile: BandwidthProfile, staleness_s: f64) -> Result<Self> {
        if !staleness_s.is_finite() || staleness_s < 0.0 {
            return Err(Error::Unicast(format!(
                "staleness {staleness_s} must be >= 0"
            )));
        }
        Ok(Self {
            profile,
            staleness_s,
        })
    }

    /// Bandwidth reported for a terminal at time `t_s`: the profile value at
    /// `t_s - staleness`, floored at the start of the run.
    pub fn rnis_query(&self, _terminal_id: &str, t_s: f64) -> Result<f64> {
        self.profile.rate_at((t_s - self.staleness_s).max(0.0))
    }
}
