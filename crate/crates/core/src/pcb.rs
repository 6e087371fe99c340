//! Pre-crime behavior (PCB) segmentation of annotated surveillance videos.
//!
//! A reviewer marks, for every crime in a video, three nested boundaries:
//!
//! * the comprehensive crime moment (CCM), where an observer could first
//!   suspect intent; it opens the crime lapse,
//! * the strict crime moment (SCM), the act itself,
//! * the end of the crime lapse (CL), after which no trace of the crime
//!   remains on screen.
//!
//! PCB segments are what is left before each crime: from the suspect's first
//! appearance (or the end of the previous crime lapse) up to the next CCM.
//! Every frame range here is half-open, `[start, end)`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

/// Zero-based frame index.
pub type Frame = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrimeEvent {
    pub ccm_start: Frame,
    pub scm_start: Frame,
    /// Exclusive.
    pub scm_end: Frame,
    /// Exclusive.
    pub cl_end: Frame,
}

impl CrimeEvent {
    /// The crime lapse `[ccm_start, cl_end)`, excluded from every PCB.
    pub fn lapse(&self) -> (Frame, Frame) {
        (self.ccm_start, self.cl_end)
    }
}

/// Frame rate as a positive rational, e.g. `30` or `30000/1001`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Fps {
    pub numerator: u32,
    pub denominator: u32,
}

impl Fps {
    pub fn new(numerator: u32, denominator: u32) -> Self {
        Fps { numerator, denominator }
    }

    pub fn integer(fps: u32) -> Self {
        Fps { numerator: fps, denominator: 1 }
    }

    pub fn is_positive(&self) -> bool {
        self.numerator > 0 && self.denominator > 0
    }

    pub fn as_f64(&self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }
}

impl fmt::Display for Fps {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.denominator == 1 {
            write!(f, "{}", self.numerator)
        } else {
            write!(f, "{}/{}", self.numerator, self.denominator)
        }
    }
}

impl Serialize for Fps {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.denominator == 1 {
            s.serialize_u32(self.numerator)
        } else {
            s.serialize_str(&self.to_string())
        }
    }
}

impl<'de> Deserialize<'de> for Fps {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u32),
            Float(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(n) => Ok(Fps::integer(n)),
            Raw::Float(x) => {
                // decimal rates such as 29.97 are taken to three places
                let scaled = (x * 1000.0).round();
                if !(scaled > 0.0 && scaled < u32::MAX as f64) || (scaled / 1000.0 - x).abs() > 1e-9 {
                    return Err(de::Error::custom(format!("fps {x} is not a rate with at most 3 decimals")));
                }
                let (mut n, mut m) = (scaled as u32, 1000u32);
                let g = gcd(n, m);
                n /= g;
                m /= g;
                Ok(Fps::new(n, m))
            }
            Raw::Text(text) => {
                let (n, m) = text
                    .split_once('/')
                    .ok_or_else(|| de::Error::custom(format!("fps {text:?} is not of the form n/d")))?;
                let parse =
                    |v: &str| v.trim().parse::<u32>().map_err(|_| de::Error::custom(format!("bad fps {text:?}")));
                Ok(Fps::new(parse(n)?, parse(m)?))
            }
        }
    }
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationManifest {
    pub video_id: String,
    pub frame_count: usize,
    pub fps: Fps,
    #[serde(default)]
    pub suspect_first_appearance: Frame,
    #[serde(default)]
    pub events: Vec<CrimeEvent>,
}

/// One broken manifest rule. `event` is `None` for manifest-level fields.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub event: Option<usize>,
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.event {
            Some(i) => write!(f, "events[{i}].{}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum PcbError {
    #[error("invalid manifest: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("manifest JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("reading manifest: {0}")]
    Io(#[from] std::io::Error),
}

/// Checks every ordering rule and returns all violations found, in event
/// order.
pub fn validate_manifest(manifest: &AnnotationManifest) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    let mut push = |event, field, message: String| out.push(Violation { event, field, message });
    let frames = manifest.frame_count;

    if frames == 0 {
        push(None, "frame_count", "must be positive".into());
    }
    if !manifest.fps.is_positive() {
        push(None, "fps", format!("{} is not a positive rate", manifest.fps));
    }
    if manifest.suspect_first_appearance >= frames && frames > 0 {
        push(
            None,
            "suspect_first_appearance",
            format!("{} is not below frame_count {frames}", manifest.suspect_first_appearance),
        );
    }
    if let Some(first) = manifest.events.first() {
        if manifest.suspect_first_appearance > first.ccm_start {
            push(
                None,
                "suspect_first_appearance",
                format!("{} is after the first ccm_start {}", manifest.suspect_first_appearance, first.ccm_start),
            );
        }
    }

    for (i, ev) in manifest.events.iter().enumerate() {
        let e = Some(i);
        if ev.ccm_start > ev.scm_start {
            push(e, "ccm_start", format!("{} is after scm_start {}", ev.ccm_start, ev.scm_start));
        }
        if ev.scm_start >= ev.scm_end {
            push(e, "scm_start", format!("{} is not before scm_end {}", ev.scm_start, ev.scm_end));
        }
        if ev.scm_end > ev.cl_end {
            push(e, "scm_end", format!("{} is after cl_end {}", ev.scm_end, ev.cl_end));
        }
        if ev.ccm_start >= frames {
            push(e, "ccm_start", format!("{} is not below frame_count {frames}", ev.ccm_start));
        }
        if ev.scm_start >= frames {
            push(e, "scm_start", format!("{} is not below frame_count {frames}", ev.scm_start));
        }
        if ev.scm_end > frames {
            push(e, "scm_end", format!("{} exceeds frame_count {frames}", ev.scm_end));
        }
        if ev.cl_end > frames {
            push(e, "cl_end", format!("{} exceeds frame_count {frames}", ev.cl_end));
        }
        if i > 0 {
            let prev = &manifest.events[i - 1];
            if prev.cl_end > ev.ccm_start {
                push(e, "ccm_start", format!("{} starts before the previous cl_end {}", ev.ccm_start, prev.cl_end));
            }
        }
    }

    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PcbSegment {
    pub video_id: String,
    pub start: Frame,
    /// Exclusive.
    pub end: Frame,
    /// 1-based position among the segments emitted for this video.
    pub ordinal: usize,
}

impl PcbSegment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PcbExtraction {
    pub segments: Vec<PcbSegment>,
    /// Candidates of zero width, e.g. a crime lapse ending exactly where the
    /// next CCM starts.
    pub dropped_zero_width: usize,
}

fn ensure_valid(manifest: &AnnotationManifest) -> Result<(), PcbError> {
    validate_manifest(manifest).map_err(PcbError::Invalid)
}

/// The first PCB runs from the suspect's first appearance to the first CCM;
/// each later one from the previous crime lapse's end to the next CCM.
/// A video without crimes has no PCB.
pub fn extract_pcb_segments(manifest: &AnnotationManifest) -> Result<PcbExtraction, PcbError> {
    ensure_valid(manifest)?;
    let mut segments = Vec::new();
    let mut dropped = 0;
    let mut cursor = manifest.suspect_first_appearance;
    for ev in &manifest.events {
        if ev.ccm_start > cursor {
            segments.push(PcbSegment {
                video_id: manifest.video_id.clone(),
                start: cursor,
                end: ev.ccm_start,
                ordinal: segments.len() + 1,
            });
        } else {
            dropped += 1;
        }
        cursor = ev.cl_end;
    }
    Ok(PcbExtraction { segments, dropped_zero_width: dropped })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FrameCategory {
    /// Before the suspect appears.
    PreAppearance,
    Pcb,
    /// `[ccm_start, scm_start)`.
    Ccm,
    /// `[scm_start, scm_end)`.
    Scm,
    /// `[scm_end, cl_end)`.
    ClResidue,
    /// After the last crime lapse, or every post-appearance frame of a video
    /// without crimes.
    Post,
}

/// Assigns every frame in `[0, frame_count)` exactly one category.
pub fn segment_timeline(manifest: &AnnotationManifest) -> Result<Vec<FrameCategory>, PcbError> {
    ensure_valid(manifest)?;
    let n = manifest.frame_count;
    let mut out = Vec::with_capacity(n);
    let mut fill = |cat, end: Frame| {
        let end = end.min(n);
        if end > out.len() {
            out.resize(end, cat);
        }
    };
    fill(FrameCategory::PreAppearance, manifest.suspect_first_appearance);
    for ev in &manifest.events {
        fill(FrameCategory::Pcb, ev.ccm_start);
        fill(FrameCategory::Ccm, ev.scm_start);
        fill(FrameCategory::Scm, ev.scm_end);
        fill(FrameCategory::ClResidue, ev.cl_end);
    }
    fill(FrameCategory::Post, n);
    Ok(out)
}

/// Collapses a per-frame labelling into `(category, start, end)` runs.
pub fn timeline_runs(frames: &[FrameCategory]) -> Vec<(FrameCategory, Frame, Frame)> {
    let mut runs: Vec<(FrameCategory, Frame, Frame)> = Vec::new();
    for (i, &cat) in frames.iter().enumerate() {
        match runs.last_mut() {
            Some(last) if last.0 == cat => last.2 = i + 1,
            _ => runs.push((cat, i, i + 1)),
        }
    }
    runs
}

/// Frame counts per category.
pub fn category_counts(frames: &[FrameCategory]) -> BTreeMap<FrameCategory, usize> {
    let mut counts = BTreeMap::new();
    for &c in frames {
        *counts.entry(c).or_insert(0) += 1;
    }
    counts
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadedManifest {
    pub manifest: AnnotationManifest,
    /// Unrecognised keys, ignored during loading (e.g. `events[1].note`).
    pub unknown_fields: Vec<String>,
}

const MANIFEST_FIELDS: [&str; 5] = ["video_id", "frame_count", "fps", "suspect_first_appearance", "events"];
const EVENT_FIELDS: [&str; 4] = ["ccm_start", "scm_start", "scm_end", "cl_end"];

/// Parses a manifest document. Unknown keys are dropped and reported, both
/// in the result and as a log warning. The manifest is validated.
pub fn parse_manifest(json: &str) -> Result<LoadedManifest, PcbError> {
    let mut value: serde_json::Value = serde_json::from_str(json)?;
    let mut unknown = Vec::new();
    if let Some(obj) = value.as_object_mut() {
        obj.retain(|k, _| {
            let known = MANIFEST_FIELDS.contains(&k.as_str());
            if !known {
                unknown.push(k.clone());
            }
            known
        });
        if let Some(events) = obj.get_mut("events").and_then(|e| e.as_array_mut()) {
            for (i, ev) in events.iter_mut().enumerate() {
                if let Some(ev) = ev.as_object_mut() {
                    ev.retain(|k, _| {
                        let known = EVENT_FIELDS.contains(&k.as_str());
                        if !known {
                            unknown.push(format!("events[{i}].{k}"));
                        }
                        known
                    });
                }
            }
        }
    }
    let manifest: AnnotationManifest = serde_json::from_value(value)?;
    if !unknown.is_empty() {
        log::warn!("manifest {}: ignoring unknown fields {}", manifest.video_id, unknown.join(", "));
    }
    ensure_valid(&manifest)?;
    Ok(LoadedManifest { manifest, unknown_fields: unknown })
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<LoadedManifest, PcbError> {
    parse_manifest(&std::fs::read_to_string(path)?)
}
