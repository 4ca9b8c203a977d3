//! Recovery proxy: serves lost segments over the unicast channel, either at
//! the broadcast quality or at the best quality the radio-reported bandwidth
//! strictly sustains.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::media::{select_representation, MediaPresentation, RepId};
use crate::unicast::{RnisOracle, UnicastChannel};

/// How the proxy picks the representation it serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecoveryMode {
    /// Adapt to the bandwidth reported for the requesting terminal.
    SarpOn,
    /// Always serve the broadcast (default) representation.
    SarpOff,
}

impl RecoveryMode {
    pub fn parse(text: &str) -> Result<Self> {
        match text.trim().to_ascii_lowercase().as_str() {
            "sarp-on" => Ok(RecoveryMode::SarpOn),
            "sarp-off" => Ok(RecoveryMode::SarpOff),
            other => Err(Error::Sarp(format!(
                "unknown recovery mode '{other}' (expected sarp-on or sarp-off)"
            ))),
        }
    }
}

impl fmt::Display for RecoveryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RecoveryMode::SarpOn => "sarp-on",
            RecoveryMode::SarpOff => "sarp-off",
        })
    }
}

/// One segment-recovery request from a terminal.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryRequest {
    pub terminal_id: String,
    pub segment_index: u32,
    pub request_time_s: f64,
    /// The representation carried on the broadcast bearer.
    pub default_rep_id: RepId,
}

/// Pre-provisioned segment store: every representation of every segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentCache {
    sizes: BTreeMap<(RepId, u32), u64>,
    hits: u64,
    misses: u64,
}

impl SegmentCache {
    /// Store the whole presentation (full-cache policy).
    pub fn full_from(mpd: &MediaPresentation) -> Self {
        let mut sizes = BTreeMap::new();
        for rep in &mpd.representations {
            for (index, size) in rep.segment_sizes_bytes.iter().enumerate() {
                sizes.insert((rep.id.clone(), index as u32), *size);
            }
        }
        Self {
            sizes,
            hits: 0,
            misses: 0,
        }
    }

    /// Look up a stored segment, counting the hit or miss.
    pub fn lookup(&mut self, rep: &RepId, index: u32) -> Option<u64> {
        match self.sizes.get(&(rep.clone(), index)) {
            Some(size) => {
                self.hits += 1;
                Some(*size)
            }
            None => {
                self.misses += 1;
                None
            }
        }
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }

    pub fn stored_segments(&self) -> usize {
        self.sizes.len()
    }
}

/// Counters accumulated over one run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProxyMetrics {
    pub requests: u64,
    pub served_by_rep: BTreeMap<RepId, u64>,
    pub recovery_bytes: u64,
}

/// Result of one handled recovery.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryResult {
    pub rep_id: RepId,
    pub bytes: u64,
    pub start_s: f64,
    pub end_s: f64,
}

/// The recovery endpoint: owns the segment cache and per-run counters.
#[derive(Debug, Clone, PartialEq)]
pub struct SarpProxy {
    cache: SegmentCache,
    metrics: ProxyMetrics,
}

impl SarpProxy {
    pub fn new(mpd: &MediaPresentation) -> Self {
        Self {
            cache: SegmentCache::full_from(mpd),
            metrics: ProxyMetrics::default(),
        }
    }

    /// Serve one recovery request: pick the representation for `mode`,
    /// fetch its size from the cache, and push the transfer through the
    /// unicast channel. Bandwidth is queried once, at request time.
    pub fn handle_recovery(
        &mut self,
        req: &RecoveryRequest,
        mpd: &MediaPresentation,
        rnis: &RnisOracle,
        mode: RecoveryMode,
        channel: &mut UnicastChannel,
    ) -> Result<RecoveryResult> {
        if req.segment_index >= mpd.segment_count() {
            return Err(Error::Sarp(format!(
                "recovery requested for unknown segment {} (presentation has {})",
                req.segment_index,
                mpd.segment_count()
            )));
        }
        let rep_id = match mode {
            RecoveryMode::SarpOff => {
                if mpd.representation(&req.default_rep_id).is_none() {
                    return Err(Error::Sarp(format!(
                        "default representation '{}' is not part of the presentation",
                        req.default_rep_id
                    )));
                }
                req.default_rep_id.clone()
            }
            RecoveryMode::SarpOn => {
                let bw = rnis.rnis_query(&req.terminal_id, req.request_time_s)?;
                select_representation(&mpd.representations, bw)?.id.clone()
            }
        };
        let bytes = self
            .cache
            .lookup(&rep_id, req.segment_index)
            .ok_or_else(|| {
                Error::Sarp(format!(
                    "cache miss for ({rep_id}, {})",
                    req.segment_index
                ))
            })?;
        let transfer = channel.transfer(bytes, req.request_time_s)?;

        self.metrics.requests += 1;
        *self.metrics.served_by_rep.entry(rep_id.clone()).or_default() += 1;
        self.metrics.recovery_bytes += bytes;

        Ok(RecoveryResult {
            rep_id,
            bytes,
            start_s: transfer.start_s,
            end_s: transfer.end_s,
        })
    }

    pub fn metrics(&self) -> &ProxyMetrics {
        &self.metrics
    }

    pub fn cache(&self) -> &SegmentCache {
        &self.cache
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::{build_presentation, PresentationConfig};
    use crate::unicast::BandwidthProfile;
    use proptest::prelude::*;

    fn mpd() -> MediaPresentation {
        build_presentation(&PresentationConfig::default(), 1).unwrap()
    }

    fn request(index: u32, t: f64) -> RecoveryRequest {
        RecoveryRequest {
            terminal_id: "ue-1".to_string(),
            segment_index: index,
            request_time_s: t,
            default_rep_id: RepId::new("rep-6m"),
        }
    }

    fn channel(rate_bps: f64) -> UnicastChannel {
        UnicastChannel::new(BandwidthProfile::constant(rate_bps).unwrap(), 0.0).unwrap()
    }

    fn oracle(rate_bps: f64) -> RnisOracle {
        RnisOracle::new(BandwidthProfile::constant(rate_bps).unwrap(), 0.0).unwrap()
    }

    #[test]
    fn fixed_mode_serves_the_default_quality_at_any_bandwidth() {
        let mpd = mpd();
        let mut proxy = SarpProxy::new(&mpd);
        for rate in [1.0e6, 2.0e6, 4.0e6, 50.0e6] {
            let mut ch = channel(4.0e6);
            let out = proxy
                .handle_recovery(&request(120, 60.5), &mpd, &oracle(rate), RecoveryMode::SarpOff, &mut ch)
                .unwrap();
            assert_eq!(out.rep_id, RepId::new("rep-6m"));
            assert_eq!(out.bytes, 375_000);
        }
    }

    #[test]
    fn adaptive_mode_steps_down_when_bandwidth_is_tight() {
        let mpd = mpd();
        let mut proxy = SarpProxy::new(&mpd);
        let mut ch = channel(4.0e6);
        let out = proxy
            .handle_recovery(&request(120, 60.5), &mpd, &oracle(4.0e6), RecoveryMode::SarpOn, &mut ch)
            .unwrap();
        assert_eq!(out.rep_id, RepId::new("rep-3m"));
        assert_eq!(out.bytes, 187_500);
    }

    #[test]
    fn adaptive_mode_keeps_broadcast_quality_when_feasible() {
        let mpd = mpd();
        let mut proxy = SarpProxy::new(&mpd);
        let mut ch = channel(10.0e6);
        let out = proxy
            .handle_recovery(&request(5, 3.0), &mpd, &oracle(10.0e6), RecoveryMode::SarpOn, &mut ch)
            .unwrap();
        assert_eq!(out.rep_id, RepId::new("rep-6m"));
    }

    #[test]
    fn adaptive_mode_falls_back_to_minimum_when_nothing_fits() {
        let mpd = mpd();
        let mut proxy = SarpProxy::new(&mpd);
        let mut ch = channel(1.0e6);
        let out = proxy
            .handle_recovery(&request(5, 3.0), &mpd, &oracle(1.0e6), RecoveryMode::SarpOn, &mut ch)
            .unwrap();
        assert_eq!(out.rep_id, RepId::new("rep-3m"));
    }

    #[test]
    fn transfer_times_come_from_the_shaped_channel() {
        let mpd = mpd();
        let mut proxy = SarpProxy::new(&mpd);
        let mut ch = channel(4.0e6);
        let out = proxy
            .handle_recovery(&request(120, 60.5), &mpd, &oracle(4.0e6), RecoveryMode::SarpOff, &mut ch)
            .unwrap();
        assert_eq!(out.start_s, 60.5);
        assert_eq!(out.end_s, 61.25, "3 Mbit over 4 Mb/s from an empty bucket");
    }

    #[test]
    fn unknown_segment_is_rejected_by_name() {
        let mpd = mpd();
        let mut proxy = SarpProxy::new(&mpd);
        let mut ch = channel(4.0e6);
        let err = proxy
            .handle_recovery(&request(1200, 1.0), &mpd, &oracle(4.0e6), RecoveryMode::SarpOn, &mut ch)
            .unwrap_err();
        assert!(err.to_string().contains("1200"), "{err}");
        assert_eq!(proxy.metrics().requests, 0);
    }

    #[test]
    fn metrics_conserve_and_start_at_zero() {
        let mpd = mpd();
        let mut proxy = SarpProxy::new(&mpd);
        assert_eq!(proxy.metrics().requests, 0);
        assert_eq!(proxy.metrics().recovery_bytes, 0);
        assert!(proxy.metrics().served_by_rep.is_empty());

        let mut ch = channel(6.5e6);
        let mut t = 1.0;
        for (i, rate) in [(3u32, 2.0e6), (9, 4.0e6), (20, 7.0e6), (44, 1.0e6)] {
            proxy
                .handle_recovery(&request(i, t), &mpd, &oracle(rate), RecoveryMode::SarpOn, &mut ch)
                .unwrap();
            t += 2.0;
        }
        let m = proxy.metrics();
        assert_eq!(m.requests, 4);
        assert_eq!(m.served_by_rep.values().sum::<u64>(), m.requests);
        assert_eq!(m.served_by_rep[&RepId::new("rep-3m")], 3);
        assert_eq!(m.served_by_rep[&RepId::new("rep-6m")], 1);
        assert_eq!(m.recovery_bytes, 3 * 187_500 + 375_000);
        assert_eq!(proxy.cache().hits(), 4);
        assert_eq!(proxy.cache().misses(), 0);
    }

    #[test]
    fn adaptive_recovery_never_costs_more_bytes_than_fixed() {
        let mpd = mpd();
        let lost = [7u32, 19, 120, 121, 400];
        let mut on = SarpProxy::new(&mpd);
        let mut off = SarpProxy::new(&mpd);
        let mut ch_on = channel(2.0e6);
        let mut ch_off = channel(2.0e6);
        let mut t = 1.0;
        for index in lost {
            on.handle_recovery(&request(index, t), &mpd, &oracle(2.0e6), RecoveryMode::SarpOn, &mut ch_on)
                .unwrap();
            off.handle_recovery(&request(index, t), &mpd, &oracle(2.0e6), RecoveryMode::SarpOff, &mut ch_off)
                .unwrap();
            t += 3.0;
        }
        assert!(on.metrics().recovery_bytes <= off.metrics().recovery_bytes);
    }

    #[test]
    fn full_cache_covers_every_representation() {
        let mpd = mpd();
        let cache = SegmentCache::full_from(&mpd);
        assert_eq!(cache.stored_segments(), 2 * 1200);
    }

    proptest! {
        /// The representation the proxy serves is definitionally the
        /// bandwidth-constrained selection at request time.
        #[test]
        fn served_rep_matches_selection_rule(t in 0.0f64..600.0, seg in 0u32..1200) {
            let mpd = mpd();
            let profile = BandwidthProfile::from_steps(vec![
                (0.0, 2_000_000.0),
                (100.0, 3_500_000.0),
                (250.0, 6_100_000.0),
                (400.0, 900_000.0),
            ]).unwrap();
            let rnis = RnisOracle::new(profile.clone(), 0.0).unwrap();
            let mut proxy = SarpProxy::new(&mpd);
            let mut ch = UnicastChannel::new(profile.clone(), 0.0).unwrap();
            let out = proxy
                .handle_recovery(&request(seg, t), &mpd, &rnis, RecoveryMode::SarpOn, &mut ch)
                .unwrap();
            let expect = select_representation(
                &mpd.representations,
                profile.rate_at(t).unwrap(),
            ).unwrap();
            prop_assert_eq!(out.rep_id, expect.id.clone());
        }
    }
}
