//! Media presentation model: representations, per-segment sizes, and the
//! availability timeline segments follow when they are produced live.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand_distr::{Distribution, LogNormal};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

const EPS: f64 = 1e-9;

/// Representation identifier. Ties between equal-bitrate representations are
/// broken by the smaller identifier (lexicographic order).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RepId(pub String);

impl RepId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for RepId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for RepId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

/// One encoded quality level with its per-segment sizes in bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct Representation {
    pub id: RepId,
    pub bitrate_bps: u64,
    pub resolution_label: String,
    pub segment_sizes_bytes: Vec<u64>,
}

/// Reference to one segment of one representation.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentRef {
    pub rep_id: RepId,
    pub index: u32,
    pub size_bytes: u64,
    pub media_start_s: f64,
    /// Wall-clock time at which a live source has finished producing the
    /// segment: always at least one segment duration after its media start.
    pub availability_time_s: f64,
}

/// How per-segment sizes are produced.
#[derive(Debug, Clone, PartialEq)]
pub enum SizeModel {
    /// Every segment is bitrate * duration / 8 bytes.
    Constant,
    /// Log-normal sizes with the representation's nominal mean and the given
    /// coefficient of variation.
    Vbr { cv: f64 },
    /// Externally supplied sizes, one full list per representation.
    Explicit(BTreeMap<RepId, Vec<u64>>),
}

/// Declaration of one representation before sizes are materialised.
#[derive(Debug, Clone, PartialEq)]
pub struct RepSpec {
    pub id: RepId,
    pub bitrate_bps: u64,
    pub resolution_label: String,
}

/// Input to [`build_presentation`].
#[derive(Debug, Clone, PartialEq)]
pub struct PresentationConfig {
    pub total_duration_s: f64,
    pub segment_duration_s: f64,
    pub representations: Vec<RepSpec>,
    /// Representation carried on the broadcast bearer.
    pub broadcast_rep_id: RepId,
    pub size_model: SizeModel,
    pub min_buffer_segments: f64,
    /// Delay between a segment being produced and becoming fetchable.
    pub ingest_delay_s: f64,
    /// Accepted relative deviation between realised mean segment size and the
    /// declared bitrate.
    pub size_tolerance: f64,
}

impl Default for PresentationConfig {
    fn default() -> Self {
        Self {
            total_duration_s: 600.0,
            segment_duration_s: 0.5,
            representations: vec![
                RepSpec {
                    id: RepId::new("rep-3m"),
                    bitrate_bps: 3_000_000,
                    resolution_label: "1080p".to_string(),
                },
                RepSpec {
                    id: RepId::new("rep-6m"),
                    bitrate_bps: 6_000_000,
                    resolution_label: "1080p".to_string(),
                },
            ],
            broadcast_rep_id: RepId::new("rep-6m"),
            size_model: SizeModel::Constant,
            min_buffer_segments: 1.5,
            ingest_delay_s: 0.0,
            size_tolerance: 0.5,
        }
    }
}

/// A fully materialised presentation.
#[derive(Debug, Clone, PartialEq)]
pub struct MediaPresentation {
    pub total_duration_s: f64,
    pub segment_duration_s: f64,
    pub min_buffer_segments: f64,
    pub ingest_delay_s: f64,
    pub broadcast_rep_id: RepId,
    pub representations: Vec<Representation>,
}

impl MediaPresentation {
    pub fn segment_count(&self) -> u32 {
        (self.total_duration_s / self.segment_duration_s).round() as u32
    }

    pub fn representation(&self, id: &RepId) -> Option<&Representation> {
        self.representations.iter().find(|r| &r.id == id)
    }

    pub fn broadcast_representation(&self) -> &Representation {
        self.representation(&self.broadcast_rep_id)
            .expect("broadcast representation is validated at build time")
    }

    /// Segment reference for `rep_id` at `index`.
    pub fn segment_ref(&self, rep_id: &RepId, index: u32) -> Result<SegmentRef> {
        let rep = self
            .representation(rep_id)
            .ok_or_else(|| Error::Media(format!("unknown representation '{rep_id}'")))?;
        if index >= self.segment_count() {
            return Err(Error::Media(format!(
                "segment index {index} out of range (presentation has {} segments)",
                self.segment_count()
            )));
        }
        let media_start_s = f64::from(index) * self.segment_duration_s;
        Ok(SegmentRef {
            rep_id: rep.id.clone(),
            index,
            size_bytes: rep.segment_sizes_bytes[index as usize],
            media_start_s,
            availability_time_s: media_start_s + self.segment_duration_s + self.ingest_delay_s,
        })
    }
}

/// Build a presentation, drawing variable sizes from the given seed.
pub fn build_presentation(cfg: &PresentationConfig, seed: u64) -> Result<MediaPresentation> {
    if cfg.total_duration_s <= 0.0 || cfg.segment_duration_s <= 0.0 {
        return Err(Error::Media(format!(
            "durations must be positive (total {}, segment {})",
            cfg.total_duration_s, cfg.segment_duration_s
        )));
    }
    let ratio = cfg.total_duration_s / cfg.segment_duration_s;
    let count = ratio.round();
    if (ratio - count).abs() > 1e-6 || count < 1.0 {
        return Err(Error::Media(format!(
            "total_duration_s {} is not a whole number of {}-second segments",
            cfg.total_duration_s, cfg.segment_duration_s
        )));
    }
    let count = count as usize;
    if cfg.representations.is_empty() {
        return Err(Error::Media("at least one representation is required".into()));
    }
    let mut ids: Vec<&RepId> = cfg.representations.iter().map(|r| &r.id).collect();
    ids.sort();
    ids.dedup();
    if ids.len() != cfg.representations.len() {
        return Err(Error::Media("representation ids must be unique".into()));
    }
    if !cfg.representations.iter().any(|r| r.id == cfg.broadcast_rep_id) {
        return Err(Error::Media(format!(
            "broadcast representation '{}' is not declared",
            cfg.broadcast_rep_id
        )));
    }
    if cfg.min_buffer_segments <= 0.0 {
        return Err(Error::Media("min_buffer_segments must be positive".into()));
    }
    if cfg.ingest_delay_s < 0.0 {
        return Err(Error::Media("ingest_delay_s must not be negative".into()));
    }

    let mut representations = Vec::with_capacity(cfg.representations.len());
    for spec in &cfg.representations {
        if spec.bitrate_bps == 0 {
            return Err(Error::Media(format!(
                "representation '{}' has zero bitrate",
                spec.id
            )));
        }
        let nominal = spec.bitrate_bps as f64 * cfg.segment_duration_s / 8.0;
        let sizes = match &cfg.size_model {
            SizeModel::Constant => vec![nominal.round().max(1.0) as u64; count],
            SizeModel::Vbr { cv } => {
                if *cv <= 0.0 {
                    return Err(Error::Media("vbr coefficient of variation must be positive".into()));
                }
                draw_vbr_sizes(nominal, *cv, count, seed, &spec.id)
            }
            SizeModel::Explicit(map) => {
                let sizes = map.get(&spec.id).ok_or_else(|| {
                    Error::Media(format!("size manifest has no entries for '{}'", spec.id))
                })?;
                if sizes.len() != count {
                    return Err(Error::Media(format!(
                        "size manifest for '{}' has {} entries, presentation needs {count}",
                        spec.id,
                        sizes.len()
                    )));
                }
                sizes.clone()
            }
        };
        if sizes.iter().any(|s| *s == 0) {
            return Err(Error::Media(format!(
                "representation '{}' contains a zero-byte segment",
                spec.id
            )));
        }
        let mean = sizes.iter().map(|s| *s as f64).sum::<f64>() / count as f64;
        let realised_bps = mean * 8.0 / cfg.segment_duration_s;
        let rel = (realised_bps - spec.bitrate_bps as f64).abs() / spec.bitrate_bps as f64;
        if rel > cfg.size_tolerance + EPS {
            return Err(Error::Media(format!(
                "representation '{}': realised rate {realised_bps:.0} b/s deviates {:.0}% from declared {} b/s",
                spec.id,
                rel * 100.0,
                spec.bitrate_bps
            )));
        }
        representations.push(Representation {
            id: spec.id.clone(),
            bitrate_bps: spec.bitrate_bps,
            resolution_label: spec.resolution_label.clone(),
            segment_sizes_bytes: sizes,
        });
    }

    Ok(MediaPresentation {
        total_duration_s: cfg.total_duration_s,
        segment_duration_s: cfg.segment_duration_s,
        min_buffer_segments: cfg.min_buffer_segments,
        ingest_delay_s: cfg.ingest_delay_s,
        broadcast_rep_id: cfg.broadcast_rep_id.clone(),
        representations,
    })
}

fn draw_vbr_sizes(mean_bytes: f64, cv: f64, count: usize, seed: u64, rep: &RepId) -> Vec<u64> {
    // Log-normal parameterised so the distribution mean equals the nominal
    // segment size and the coefficient of variation equals cv.
    let sigma2 = (1.0 + cv * cv).ln();
    let mu = mean_bytes.ln() - sigma2 / 2.0;
    let dist = LogNormal::new(mu, sigma2.sqrt()).expect("finite log-normal parameters");
    let mut rng = stream_rng(seed, &format!("vbr-sizes:{rep}"));
    (0..count)
        .map(|_| dist.sample(&mut rng).round().max(1.0) as u64)
        .collect()
}

/// Highest-bitrate representation whose bitrate is strictly below
/// `bandwidth_bps`; when none qualifies, the minimum-bitrate representation.
/// Equal bitrates resolve to the smaller id.
pub fn select_representation<'a>(
    representations: &'a [Representation],
    bandwidth_bps: f64,
) -> Result<&'a Representation> {
    if representations.is_empty() {
        return Err(Error::Media("cannot select from an empty representation list".into()));
    }
    if !bandwidth_bps.is_finite() || bandwidth_bps < 0.0 {
        return Err(Error::Media(format!(
            "bandwidth estimate {bandwidth_bps} is not a valid rate"
        )));
    }
    let feasible = representations
        .iter()
        .filter(|r| (r.bitrate_bps as f64) < bandwidth_bps)
        .fold(None::<&Representation>, |best, r| match best {
            None => Some(r),
            Some(b) => {
                if r.bitrate_bps > b.bitrate_bps
                    || (r.bitrate_bps == b.bitrate_bps && r.id < b.id)
                {
                    Some(r)
                } else {
                    Some(b)
                }
            }
        });
    Ok(feasible.unwrap_or_else(|| {
        representations
            .iter()
            .fold(None::<&Representation>, |best, r| match best {
                None => Some(r),
                Some(b) => {
                    if r.bitrate_bps < b.bitrate_bps
                        || (r.bitrate_bps == b.bitrate_bps && r.id < b.id)
                    {
                        Some(r)
                    } else {
                        Some(b)
                    }
                }
            })
            .expect("list is non-empty")
    }))
}

/// Read a per-segment size manifest: CSV with header `rep_id,index,size_bytes`,
/// one row per segment, indices 0..count-1 per representation.
pub fn read_size_manifest(path: &Path) -> Result<BTreeMap<RepId, Vec<u64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Media(format!("cannot open size manifest {}: {e}", path.display())))?;
    {
        let headers = reader
            .headers()
            .map_err(|e| Error::Media(format!("size manifest {}: {e}", path.display())))?;
        let expected = ["rep_id", "index", "size_bytes"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                reason: format!("expected header rep_id,index,size_bytes, found '{}'", headers.iter().collect::<Vec<_>>().join(",")),
            });
        }
    }
    let mut rows: BTreeMap<RepId, BTreeMap<u32, u64>> = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2; // header is line 1
        let record = record.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line,
            reason: e.to_string(),
        })?;
        if record.len() != 3 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                reason: format!("expected 3 fields, found {}", record.len()),
            });
        }
        let rep = RepId::new(record[0].to_string());
        let index: u32 = record[1].parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line,
            reason: format!("invalid segment index '{}'", &record[1]),
        })?;
        let size: u64 = record[2].parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line,
            reason: format!("invalid size '{}'", &record[2]),
        })?;
        if rows.entry(rep.clone()).or_default().insert(index, size).is_some() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                reason: format!("duplicate entry for {rep} segment {index}"),
            });
        }
    }
    let mut out = BTreeMap::new();
    for (rep, by_index) in rows {
        let count = by_index.len() as u32;
        for index in 0..count {
            if !by_index.contains_key(&index) {
                return Err(Error::Media(format!(
                    "size manifest for '{rep}' is missing segment {index}"
                )));
            }
        }
        out.insert(rep, by_index.into_values().collect());
    }
    Ok(out)
}

/// Write a size manifest in the format accepted by [`read_size_manifest`].
pub fn write_size_manifest(path: &Path, sizes: &BTreeMap<RepId, Vec<u64>>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::Media(format!("cannot write size manifest {}: {e}", path.display())))?;
    writer
        .write_record(["rep_id", "index", "size_bytes"])
        .map_err(|e| Error::Media(e.to_string()))?;
    for (rep, list) in sizes {
        for (index, size) in list.iter().enumerate() {
            writer
                .write_record([rep.as_str(), &index.to_string(), &size.to_string()])
                .map_err(|e| Error::Media(e.to_string()))?;
        }
    }
    writer.flush().map_err(|e| Error::Media(e.to_string()))?;
    Ok(())
}

/// Validation-only helper used when sizes come from a manifest: the random
/// draw in [`build_presentation`] needs a seed even when unused.
pub fn rep_ids(presentation: &MediaPresentation) -> Vec<RepId> {
    presentation.representations.iter().map(|r| r.id.clone()).collect()
}
