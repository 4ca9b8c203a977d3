//! Broadcast channel model: packetization into source + repair packets, an
//! ideal-erasure decodability rule, and segment loss driven either by an
//! explicit error file or by independent per-packet drops.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, Write as _};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::media::SegmentRef;
use crate::rng::stream_rng;

/// Guard against products like 0.1 * 10 landing epsilon above an integer.
const CEIL_GUARD: f64 = 1e-9;

// ===========================================================================
// FEC parameters
// ===========================================================================

/// Erasure-coding parameters: segments are split into `N` source packets of
/// `packet_payload_bytes` each, plus `K = ceil(repair_overhead * N)` repair
/// packets. A segment decodes when at least `N` of the `N + K` packets arrive.
#[derive(Debug, Clone, PartialEq)]
pub struct FecParams {
    pub packet_payload_bytes: u64,
    pub repair_overhead: f64,
}

impl Default for FecParams {
    fn default() -> Self {
        Self {
            packet_payload_bytes: 1024,
            repair_overhead: 0.1,
        }
    }
}

impl FecParams {
    pub fn validate(&self) -> Result<()> {
        if self.packet_payload_bytes == 0 {
            return Err(Error::Broadcast("packet_payload_bytes must be positive".into()));
        }
        if !self.repair_overhead.is_finite() || self.repair_overhead < 0.0 {
            return Err(Error::Broadcast(format!(
                "repair_overhead {} must be a finite ratio >= 0",
                self.repair_overhead
            )));
        }
        Ok(())
    }

    /// Source and repair packet counts for a segment of `size_bytes`.
    pub fn packet_counts(&self, size_bytes: u64) -> (u64, u64) {
        let n = size_bytes.div_ceil(self.packet_payload_bytes).max(1);
        let k = (self.repair_overhead * n as f64 - CEIL_GUARD).ceil().max(0.0) as u64;
        (n, k)
    }
}

// ===========================================================================
// Loss models
// ===========================================================================

/// Which broadcast segments fail to decode.
#[derive(Debug, Clone, PartialEq)]
pub enum LossModel {
    /// Explicit list of lost segment indices.
    ErrorFile(ErrorFile),
    /// `round(fraction * segment_count)` distinct indices drawn uniformly.
    Uniform { fraction: f64, seed: u64 },
    /// Independent per-packet drops with probability `p`, fed through the
    /// erasure-decode rule.
    PacketBernoulli { p: f64, seed: u64 },
}

impl LossModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            LossModel::ErrorFile(_) => Ok(()),
            LossModel::Uniform { fraction, .. } => {
                if !(0.0..=1.0).contains(fraction) {
                    Err(Error::Broadcast(format!(
                        "loss fraction {fraction} must lie in [0, 1]"
                    )))
                } else {
                    Ok(())
                }
            }
            LossModel::PacketBernoulli { p, .. } => {
                if !(0.0..=1.0).contains(p) {
                    Err(Error::Broadcast(format!(
                        "packet loss probability {p} must lie in [0, 1]"
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// Sorted set of segment indices treated as lost on the broadcast channel.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ErrorFile {
    lost: BTreeSet<u32>,
}

impl ErrorFile {
    pub fn new(indices: impl IntoIterator<Item = u32>) -> Self {
        Self {
            lost: indices.into_iter().collect(),
        }
    }

    pub fn contains(&self, index: u32) -> bool {
        self.lost.contains(&index)
    }

    pub fn len(&self) -> usize {
        self.lost.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lost.is_empty()
    }

    pub fn indices(&self) -> impl Iterator<Item = u32> + '_ {
        self.lost.iter().copied()
    }

    /// Check every index is addressable within a presentation of
    /// `segment_count` segments.
    pub fn validate_against(&self, segment_count: u32) -> Result<()> {
        if let Some(&max) = self.lost.iter().next_back() {
            if max >= segment_count {
                return Err(Error::Broadcast(format!(
                    "error file lists segment {max}, but the presentation has only {segment_count} segments"
                )));
            }
        }
        Ok(())
    }
}

/// A loss model bound to a concrete presentation: explicit and uniform models
/// resolve to a fixed lost set, packet-level loss keeps its probability.
#[derive(Debug, Clone, PartialEq)]
pub enum LossProcess {
    Fixed(ErrorFile),
    PerPacket { p: f64 },
}

impl LossProcess {
    pub fn bind(model: &LossModel, segment_count: u32) -> Result<Self> {
        model.validate()?;
        match model {
            LossModel::ErrorFile(ef) => {
                ef.validate_against(segment_count)?;
                Ok(LossProcess::Fixed(ef.clone()))
            }
            LossModel::Uniform { fraction, seed } => Ok(LossProcess::Fixed(
                generate_error_file(segment_count, *fraction, *seed)?,
            )),
            LossModel::PacketBernoulli { p, .. } => Ok(LossProcess::PerPacket { p: *p }),
        }
    }
}

// ===========================================================================
// Delivery
// ===========================================================================

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeliveryStatus {
    Decoded,
    Lost,
}

/// Result of attempting to receive one segment off the broadcast channel.
#[derive(Debug, Clone, PartialEq)]
pub struct DeliveryOutcome {
    pub index: u32,
    pub status: DeliveryStatus,
    /// Present when decoded: availability time plus the broadcast delay.
    pub decode_time_s: Option<f64>,
}

/// Generate `round(loss_fraction * segment_count)` distinct lost indices,
/// uniformly without replacement, deterministic in `seed`.
pub fn generate_error_file(segment_count: u32, loss_fraction: f64, seed: u64) -> Result<ErrorFile> {
    if !(0.0..=1.0).contains(&loss_fraction) {
        return Err(Error::Broadcast(format!(
            "loss fraction {loss_fraction} must lie in [0, 1]"
        )));
    }
    let count = (loss_fraction * f64::from(segment_count)).round() as usize;
    let mut rng = stream_rng(seed, "error-file");
    let picked = rand::seq::index::sample(&mut rng, segment_count as usize, count);
    Ok(ErrorFile::new(picked.into_iter().map(|i| i as u32)))
}

/// Deliver one segment over the broadcast channel.
///
/// Fixed sets mark the segment lost iff its index is listed; per-packet loss
/// drops each of the `N + K` packets independently and decodes when at least
/// `N` survive. `rng` is consumed only in per-packet mode.
pub fn broadcast_segment(
    seg: &SegmentRef,
    fec: &FecParams,
    loss: &LossProcess,
    rng: &mut ChaCha12Rng,
    broadcast_delay_s: f64,
) -> DeliveryOutcome {
    let decoded = match loss {
        LossProcess::Fixed(ef) => !ef.contains(seg.index),
        LossProcess::PerPacket { p } => {
            let (n, k) = fec.packet_counts(seg.size_bytes);
            let mut received = 0u64;
            for _ in 0..(n + k) {
                if rng.gen::<f64>() >= *p {
                    received += 1;
                }
            }
            received >= n
        }
    };
    DeliveryOutcome {
        index: seg.index,
        status: if decoded { DeliveryStatus::Decoded } else { DeliveryStatus::Lost },
        decode_time_s: decoded.then_some(seg.availability_time_s + broadcast_delay_s),
    }
}

/// Exact probability that a segment of `n` source packets with `k` repair
/// packets fails to decode when each packet is lost independently with
/// probability `p`: P[Binomial(n + k, 1 - p) < n].
pub fn segment_loss_probability(n: u64, k: u64, p: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Broadcast("source packet count must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Broadcast(format!(
            "packet loss probability {p} must lie in [0, 1]"
        )));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(1.0);
    }
    // Sum the lower binomial tail in log space: terms j = 0 .. n-1 received
    // packets out of m = n + k, each C(m, j) q^j p^(m - j) with q = 1 - p.
    let m = n + k;
    let (ln_q, ln_p) = ((1.0 - p).ln(), p.ln());
    let mut terms = Vec::with_capacity(n as usize);
    let mut ln_choose = 0.0f64; // ln C(m, 0)
    for j in 0..n {
        terms.push(ln_choose + j as f64 * ln_q + (m - j) as f64 * ln_p);
        ln_choose += ((m - j) as f64).ln() - ((j + 1) as f64).ln();
    }
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    Ok((max + sum.ln()).exp().clamp(0.0, 1.0))
}

// ===========================================================================
// Error file IO
// ===========================================================================

/// Read an error file: one decimal segment index per line, strictly
/// ascending, LF line endings, no header.
pub fn read_error_file(path: &Path) -> Result<ErrorFile> {
    let file = fs::File::open(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        reason: format!("cannot open: {e}"),
    })?;
    let reader = BufReader::new(file);
    let mut lost = BTreeSet::new();
    let mut prev: Option<u32> = None;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let text = line.trim_end_matches('\r');
        let index: u32 = text.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            reason: format!("expected a decimal segment index, found '{text}'"),
        })?;
        if let Some(p) = prev {
            if index == p {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: line_no,
                    reason: format!("duplicate index {index}"),
                });
            }
            if index < p {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: line_no,
                    reason: format!("index {index} is not ascending (previous was {p})"),
                });
            }
        }
        prev = Some(index);
        lost.insert(index);
    }
    Ok(ErrorFile { lost })
}

/// Write an error file in the format accepted by [`read_error_file`].
pub fn write_error_file(ef: &ErrorFile, path: &Path) -> Result<()> {
    let mut out = fs::File::create(path)?;
    let mut buf = String::new();
    for index in ef.indices() {
        buf.push_str(&index.to_string());
        buf.push('\n');
    }
    out.write_all(buf.as_bytes())?;
    Ok(())
}
