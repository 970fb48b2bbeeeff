//! Tempo-change annotation: per-segment BPM plus binary rhythm-change labels.
//!
//! A clip is segmented, each segment gets a tempo estimate, the whole clip's
//! tempo sets the change threshold at 25% of its value, and each consecutive
//! segment pair is labeled 1 when its BPM difference exceeds the threshold.
//! With `n` segments there are exactly `n - 1` boundary labels.

use serde::{Deserialize, Serialize};

use crate::audio::{estimate_bpm, segment_audio, AudioClip, TempoBand};
use crate::error::{AmuseError, Result};

pub const THRESHOLD_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhythmTimeline {
    pub segment_seconds: f64,
    /// Per-segment tempo; `null` marks a segment with no measurable tempo.
    pub bpm: Vec<Option<f64>>,
    pub mean_bpm: f64,
    pub threshold: f64,
    pub labels: Vec<u8>,
}

/// Boundary labels from per-segment tempi: 1 when the pair differs by more
/// than `threshold`. A pair with a missing tempo on either side is labeled 0.
pub(crate) fn labels_from_bpms(bpms: &[Option<f64>], threshold: f64) -> Vec<u8> {
    bpms.windows(2)
        .map(|pair| match (pair[0], pair[1]) {
            (Some(a), Some(b)) if (a - b).abs() > threshold => 1,
            _ => 0,
        })
        .collect()
}

pub fn rhythm_labels(clip: &AudioClip, segment_seconds: f64, band: TempoBand) -> Result<RhythmTimeline> {
    let segments = segment_audio(clip, segment_seconds)?;
    if segments.len() < 2 {
        return Err(AmuseError::invalid(
            "rhythm_labels",
            format!("need at least 2 segments, got {}", segments.len()),
        ));
    }
    let mean_bpm = estimate_bpm(clip, band)?.ok_or_else(|| {
        AmuseError::invalid("rhythm_labels", "whole clip has no measurable tempo; threshold undefined")
    })?;
    let threshold = THRESHOLD_FRACTION * mean_bpm;
    let bpm: Vec<Option<f64>> = segments
        .iter()
        .map(|seg| estimate_bpm(seg, band))
        .collect::<Result<_>>()?;
    let labels = labels_from_bpms(&bpm, threshold);
    Ok(RhythmTimeline {
        segment_seconds,
        bpm,
        mean_bpm,
        threshold,
        labels,
    })
}
