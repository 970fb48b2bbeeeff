//! Clip specifications: the seeded ground truth every synthetic clip is
//! rendered from and every oracle answer is computed from.

use serde::{Deserialize, Serialize};

use crate::error::{AmuseError, Result};
use crate::roi::BBox;

/// One instrument class: a disjoint frequency band for its tone and a solid
/// glyph color for its on-screen stand-in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstrumentClass {
    pub name: String,
    pub band: (f64, f64),
    pub color: [u8; 3],
}

/// Visual-only class (player, conductor): glyph color, no audio band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualClass {
    pub name: String,
    pub color: [u8; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassConfig {
    pub instruments: Vec<InstrumentClass>,
    pub visual_extras: Vec<VisualClass>,
}

impl ClassConfig {
    pub fn instrument_names(&self) -> Vec<String> {
        self.instruments.iter().map(|c| c.name.clone()).collect()
    }

    /// All detectable classes: instruments first, then visual extras.
    pub fn detector_names(&self) -> Vec<String> {
        self.instruments
            .iter()
            .map(|c| c.name.clone())
            .chain(self.visual_extras.iter().map(|c| c.name.clone()))
            .collect()
    }

    pub fn detector_entries(&self) -> Vec<(String, [u8; 3])> {
        self.instruments
            .iter()
            .map(|c| (c.name.clone(), c.color))
            .chain(self.visual_extras.iter().map(|c| (c.name.clone(), c.color)))
            .collect()
    }

    pub fn separator_entries(&self) -> Vec<(String, (f64, f64))> {
        self.instruments.iter().map(|c| (c.name.clone(), c.band)).collect()
    }

    pub fn band_center(&self, name: &str) -> Option<f64> {
        self.instruments
            .iter()
            .find(|c| c.name == name)
            .map(|c| (c.band.0 + c.band.1) / 2.0)
    }

    pub fn is_instrument(&self, name: &str) -> bool {
        self.instruments.iter().any(|c| c.name == name)
    }
}

/// The default taxonomy shipped at `config/classes.json`.
pub fn default_classes() -> ClassConfig {
    ClassConfig {
        instruments: vec![
            InstrumentClass { name: "violin".into(), band: (300.0, 500.0), color: [200, 60, 40] },
            InstrumentClass { name: "flute".into(), band: (800.0, 1000.0), color: [60, 200, 220] },
            InstrumentClass { name: "trumpet".into(), band: (1400.0, 1600.0), color: [235, 180, 40] },
            InstrumentClass { name: "piano".into(), band: (2200.0, 2400.0), color: [130, 70, 200] },
            InstrumentClass { name: "drum".into(), band: (3200.0, 3400.0), color: [50, 170, 80] },
        ],
        visual_extras: vec![
            VisualClass { name: "player".into(), color: [235, 235, 235] },
            VisualClass { name: "conductor".into(), color: [15, 15, 25] },
        ],
    }
}

/// Constant tempo over a run of consecutive segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TempoSpan {
    pub bpm: f64,
    pub segments: usize,
}

/// Contiguous activity of one instrument, in segment units `[start, end)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpan {
    pub class: String,
    pub start_segment: usize,
    pub end_segment: usize,
}

/// One planted glyph, visible over frames `[start_frame, end_frame)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlyphSpan {
    pub class: String,
    pub bbox: BBox,
    pub start_frame: usize,
    pub end_frame: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipSpec {
    pub id: String,
    pub seed: u64,
    pub sample_rate: u32,
    pub segment_seconds: f64,
    pub n_segments: usize,
    pub fps: u32,
    pub frame_size: usize,
    pub tempo: Vec<TempoSpan>,
    pub sources: Vec<SourceSpan>,
    pub glyphs: Vec<GlyphSpan>,
    /// Instrument whose on-screen count the visual-counting question asks
    /// about; all of its glyphs span the full clip.
    pub counting_class: String,
}

impl ClipSpec {
    pub fn duration(&self) -> f64 {
        self.n_segments as f64 * self.segment_seconds
    }

    pub fn frames_per_segment(&self) -> usize {
        (self.segment_seconds * self.fps as f64).round() as usize
    }

    pub fn n_frames(&self) -> usize {
        self.n_segments * self.frames_per_segment()
    }

    pub fn validate(&self, classes: &ClassConfig) -> Result<()> {
        let spanned: usize = self.tempo.iter().map(|t| t.segments).sum();
        if spanned != self.n_segments {
            return Err(AmuseError::invalid(
                "clip_spec",
                format!("tempo spans cover {} segments, clip has {}", spanned, self.n_segments),
            ));
        }
        if (self.segment_seconds * self.fps as f64).fract() != 0.0 {
            return Err(AmuseError::invalid(
                "clip_spec",
                "segment length must be a whole number of frames",
            ));
        }
        for s in &self.sources {
            if s.start_segment >= s.end_segment || s.end_segment > self.n_segments {
                return Err(AmuseError::invalid(
                    "clip_spec",
                    format!("source span {:?} out of range", s),
                ));
            }
            if !classes.is_instrument(&s.class) {
                return Err(AmuseError::invalid(
                    "clip_spec",
                    format!("'{}' is not an instrument class", s.class),
                ));
            }
        }
        let n_frames = self.n_frames();
        for (i, g) in self.glyphs.iter().enumerate() {
            if g.start_frame >= g.end_frame || g.end_frame > n_frames {
                return Err(AmuseError::invalid(
                    "clip_spec",
                    format!("glyph frame span {:?} out of range", g),
                ));
            }
            let b = g.bbox;
            if b.x < 0.0 || b.y < 0.0 || b.x + b.w > 1.0 || b.y + b.h > 1.0 {
                return Err(AmuseError::invalid("clip_spec", "glyph box outside the frame"));
            }
            for other in &self.glyphs[..i] {
                if b.overlaps(&other.bbox) {
                    return Err(AmuseError::invalid("clip_spec", "overlapping glyph boxes"));
                }
            }
            if g.class == self.counting_class && (g.start_frame != 0 || g.end_frame != n_frames) {
                return Err(AmuseError::invalid(
                    "clip_spec",
                    "counting-class glyphs must span the whole clip",
                ));
            }
        }
        Ok(())
    }

    // ---- oracle views -----------------------------------------------------

    pub fn tempo_of_segment(&self, seg: usize) -> f64 {
        let mut at = 0;
        for span in &self.tempo {
            at += span.segments;
            if seg < at {
                return span.bpm;
            }
        }
        self.tempo.last().map(|s| s.bpm).unwrap_or(0.0)
    }

    pub fn per_segment_bpm(&self) -> Vec<f64> {
        (0..self.n_segments).map(|s| self.tempo_of_segment(s)).collect()
    }

    /// Boundary labels implied by the schedule: 1 where the tempo changes.
    pub fn expected_rhythm_labels(&self) -> Vec<u8> {
        self.per_segment_bpm()
            .windows(2)
            .map(|w| u8::from(w[0] != w[1]))
            .collect()
    }

    /// `[n_segments x instruments]` presence implied by the source spans.
    pub fn expected_presence(&self, classes: &ClassConfig) -> Vec<Vec<u32>> {
        let names = classes.instrument_names();
        (0..self.n_segments)
            .map(|seg| {
                names
                    .iter()
                    .map(|n| {
                        u32::from(self.sources.iter().any(|s| {
                            &s.class == n && s.start_segment <= seg && seg < s.end_segment
                        }))
                    })
                    .collect()
            })
            .collect()
    }

    pub fn audible(&self, class: &str) -> bool {
        self.sources.iter().any(|s| s.class == class)
    }

    pub fn audible_classes(&self) -> Vec<String> {
        self.sources.iter().map(|s| s.class.clone()).collect()
    }

    pub fn onset_segment(&self, class: &str) -> Option<usize> {
        self.sources
            .iter()
            .filter(|s| s.class == class)
            .map(|s| s.start_segment)
            .min()
    }

    pub fn active_segments(&self, class: &str) -> usize {
        self.sources
            .iter()
            .filter(|s| s.class == class)
            .map(|s| s.end_segment - s.start_segment)
            .sum()
    }

    pub fn glyph_count(&self, class: &str) -> usize {
        self.glyphs.iter().filter(|g| g.class == class).count()
    }

    pub fn visible(&self, class: &str) -> bool {
        self.glyph_count(class) > 0
    }

    /// Total on-screen instrument glyphs (the visual-counting oracle).
    pub fn visible_instrument_count(&self, classes: &ClassConfig) -> usize {
        self.glyphs
            .iter()
            .filter(|g| classes.is_instrument(&g.class))
            .count()
    }
}
