//! Seeded synthetic concert clips with oracle ground truth: click tracks
//! following a tempo schedule, band-limited tones per active instrument,
//! glyph-planted frames, and templated QA pairs.

mod dataset;
mod qa;
mod spec;

pub use dataset::{
    dataset_files, generate_dataset, load_manifest, load_qa, load_spec, DatasetLayout,
    DatasetManifest, GenOptions,
};
pub use qa::{gen_qa, question_vocabulary, Category, QASample};
pub use spec::{
    default_classes, ClassConfig, ClipSpec, GlyphSpan, InstrumentClass, SourceSpan, TempoSpan,
    VisualClass,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::AudioClip;
use crate::error::{AmuseError, Result};
use crate::roi::{BBox, Frame};

pub const CLICK_AMPLITUDE: f64 = 0.5;
pub const TONE_AMPLITUDE: f64 = 0.12;
pub const BACKGROUND: [u8; 3] = [40, 40, 46];

fn write_clicks(samples: &mut [f64], rate: u32, start_s: f64, end_s: f64, bpm: f64, amp: f64) {
    let period = 60.0 / bpm;
    let width = ((0.002 * rate as f64).round() as usize).max(8);
    let mut t = start_s;
    while t < end_s {
        let at = (t * rate as f64).round() as usize;
        for i in 0..width {
            if at + i < samples.len() {
                samples[at + i] += amp;
            }
        }
        t += period;
    }
}

/// Periodic impulse train at a constant tempo, starting at t = 0.
pub fn click_track(bpm: f64, seconds: f64, rate: u32, amp: f64) -> AudioClip {
    let mut samples = vec![0.0; (seconds * rate as f64).round() as usize];
    write_clicks(&mut samples, rate, 0.0, seconds, bpm, amp);
    AudioClip::new(samples, rate).expect("click track")
}

/// Click track with a piecewise-constant tempo schedule `(bpm, seconds)`.
pub fn piecewise_click_track(spans: &[(f64, f64)], rate: u32, amp: f64) -> AudioClip {
    let total: f64 = spans.iter().map(|(_, s)| s).sum();
    let mut samples = vec![0.0; (total * rate as f64).round() as usize];
    let mut at = 0.0;
    for &(bpm, seconds) in spans {
        write_clicks(&mut samples, rate, at, at + seconds, bpm, amp);
        at += seconds;
    }
    AudioClip::new(samples, rate).expect("click track")
}

/// Pure sine tone.
pub fn tone(freq: f64, seconds: f64, rate: u32, amp: f64) -> AudioClip {
    let n = (seconds * rate as f64).round() as usize;
    let samples = (0..n)
        .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin())
        .collect();
    AudioClip::new(samples, rate).expect("tone")
}

/// Renders a spec into audio (clicks + per-source tones) and a frame stack
/// (background + planted glyphs). Deterministic: no randomness beyond the
/// spec itself.
pub fn gen_clip(spec: &ClipSpec, classes: &ClassConfig) -> Result<(AudioClip, Vec<Frame>)> {
    spec.validate(classes)?;
    let rate = spec.sample_rate;
    let n = (spec.duration() * rate as f64).round() as usize;
    let mut samples = vec![0.0; n];

    let mut seg_at = 0usize;
    for span in &spec.tempo {
        let start = seg_at as f64 * spec.segment_seconds;
        let end = (seg_at + span.segments) as f64 * spec.segment_seconds;
        write_clicks(&mut samples, rate, start, end, span.bpm, CLICK_AMPLITUDE);
        seg_at += span.segments;
    }
    for src in &spec.sources {
        let freq = classes.band_center(&src.class).ok_or_else(|| {
            AmuseError::invalid("gen_clip", format!("no band for class '{}'", src.class))
        })?;
        let a = (src.start_segment as f64 * spec.segment_seconds * rate as f64).round() as usize;
        let b = (src.end_segment as f64 * spec.segment_seconds * rate as f64).round() as usize;
        for (i, s) in samples[a..b.min(n)].iter_mut().enumerate() {
            let t = (a + i) as f64 / rate as f64;
            *s += TONE_AMPLITUDE * (2.0 * std::f64::consts::PI * freq * t).sin();
        }
    }
    for s in samples.iter_mut() {
        *s = s.clamp(-1.0, 1.0);
    }
    let audio = AudioClip::new(samples, rate)?;

    let color_of: Vec<(String, [u8; 3])> = classes.detector_entries();
    let size = spec.frame_size;
    let mut frames = Vec::with_capacity(spec.n_frames());
    for f in 0..spec.n_frames() {
        let mut frame = Frame::filled(size, size, BACKGROUND);
        for glyph in &spec.glyphs {
            if f < glyph.start_frame || f >= glyph.end_frame {
                continue;
            }
            let color = color_of
                .iter()
                .find(|(n, _)| n == &glyph.class)
                .map(|(_, c)| *c)
                .ok_or_else(|| {
                    AmuseError::invalid("gen_clip", format!("no color for class '{}'", glyph.class))
                })?;
            let x0 = (glyph.bbox.x * size as f64).round() as usize;
            let y0 = (glyph.bbox.y * size as f64).round() as usize;
            let x1 = ((glyph.bbox.x + glyph.bbox.w) * size as f64).round() as usize;
            let y1 = ((glyph.bbox.y + glyph.bbox.h) * size as f64).round() as usize;
            for y in y0..y1.min(size) {
                for x in x0..x1.min(size) {
                    frame.set_pixel(x, y, color);
                }
            }
        }
        frames.push(frame);
    }
    Ok((audio, frames))
}

/// Tempo values whose pairwise jumps are detectable by construction: every
/// allowed jump exceeds a quarter of any tempo in the clip by a safe margin.
const TEMPO_LADDER: [f64; 5] = [60.0, 80.0, 100.0, 126.0, 160.0];
const JUMP_MARGIN: f64 = 8.0;

fn valid_tempo_sequence(values: &[f64]) -> bool {
    let max = values.iter().fold(0.0f64, |m, &v| m.max(v));
    values
        .windows(2)
        .all(|w| w[0] != w[1] && (w[0] - w[1]).abs() > 0.25 * max + JUMP_MARGIN)
}

fn random_tempo_schedule(rng: &mut ChaCha8Rng, n_segments: usize) -> Vec<TempoSpan> {
    let n_jumps = match rng.gen_range(0.0..1.0) {
        p if p < 0.2 => 0,
        p if p < 0.65 => 1,
        _ => 2,
    };
    loop {
        let mut values = vec![TEMPO_LADDER[rng.gen_range(0..TEMPO_LADDER.len())]];
        for _ in 0..n_jumps {
            values.push(TEMPO_LADDER[rng.gen_range(0..TEMPO_LADDER.len())]);
        }
        if !valid_tempo_sequence(&values) {
            continue;
        }
        // distinct interior boundaries, sorted
        let mut cuts: Vec<usize> = Vec::new();
        while cuts.len() < n_jumps {
            let c = rng.gen_range(1..n_segments);
            if !cuts.contains(&c) {
                cuts.push(c);
            }
        }
        cuts.sort_unstable();
        cuts.push(n_segments);
        let mut spans = Vec::new();
        let mut prev = 0;
        for (i, &c) in cuts.iter().enumerate() {
            spans.push(TempoSpan {
                bpm: values[i],
                segments: c - prev,
            });
            prev = c;
        }
        return spans;
    }
}

fn random_sources(rng: &mut ChaCha8Rng, n_segments: usize, instruments: &[String]) -> Vec<SourceSpan> {
    let k = {
        let p: f64 = rng.gen_range(0.0..1.0);
        match p {
            _ if p < 0.04 => 0,
            _ if p < 0.16 => 1,
            _ if p < 0.50 => 2,
            _ if p < 0.84 => 3,
            _ => 4,
        }
    }
    .min(instruments.len());
    'outer: for _attempt in 0..200 {
        let mut picked: Vec<usize> = Vec::new();
        while picked.len() < k {
            let c = rng.gen_range(0..instruments.len());
            if !picked.contains(&c) {
                picked.push(c);
            }
        }
        let spans: Vec<SourceSpan> = picked
            .iter()
            .map(|&ci| {
                let start = rng.gen_range(0..n_segments);
                let len = rng.gen_range(1..=(n_segments - start).min(8));
                SourceSpan {
                    class: instruments[ci].clone(),
                    start_segment: start,
                    end_segment: start + len,
                }
            })
            .collect();
        // at most 3 simultaneous sources, for separator headroom
        for seg in 0..n_segments {
            let live = spans
                .iter()
                .filter(|s| s.start_segment <= seg && seg < s.end_segment)
                .count();
            if live > 3 {
                continue 'outer;
            }
        }
        // mostly-distinct onsets keep temporal questions decidable
        let mut onsets: Vec<usize> = spans.iter().map(|s| s.start_segment).collect();
        onsets.sort_unstable();
        onsets.dedup();
        if onsets.len() < spans.len() && rng.gen_range(0.0..1.0) < 0.85 {
            continue;
        }
        return spans;
    }
    Vec::new()
}

/// Pixel-aligned box that avoids existing boxes and the vertical midline.
fn place_box(rng: &mut ChaCha8Rng, frame_size: usize, existing: &[BBox]) -> Option<BBox> {
    let fs = frame_size as f64;
    for _ in 0..300 {
        let w = rng.gen_range(4..=12);
        let h = rng.gen_range(4..=12);
        let x0 = rng.gen_range(1..frame_size - w - 1);
        let y0 = rng.gen_range(1..frame_size - h - 1);
        let cx = x0 as f64 + w as f64 / 2.0;
        if (cx - fs / 2.0).abs() < 3.0 {
            continue;
        }
        let b = BBox {
            x: x0 as f64 / fs,
            y: y0 as f64 / fs,
            w: w as f64 / fs,
            h: h as f64 / fs,
        };
        let padded = BBox {
            x: (x0 as f64 - 1.0) / fs,
            y: (y0 as f64 - 1.0) / fs,
            w: (w as f64 + 2.0) / fs,
            h: (h as f64 + 2.0) / fs,
        };
        if existing.iter().all(|e| !padded.overlaps(e)) {
            return Some(b);
        }
    }
    None
}

/// Draws a random clip specification. Deterministic in (`id`, `seed`).
pub fn random_spec(id: &str, seed: u64, classes: &ClassConfig) -> Result<ClipSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_segments = 10usize;
    let frame_size = 64usize;
    let fps = 1u32;
    let segment_seconds = 6.0;
    let frames_per_segment = (segment_seconds * fps as f64) as usize;
    let n_frames = n_segments * frames_per_segment;
    let instruments = classes.instrument_names();

    let tempo = random_tempo_schedule(&mut rng, n_segments);
    let sources = random_sources(&mut rng, n_segments, &instruments);

    let mut glyphs: Vec<GlyphSpan> = Vec::new();
    let mut boxes: Vec<BBox> = Vec::new();
    let place = |rng: &mut ChaCha8Rng, boxes: &mut Vec<BBox>| -> Result<BBox> {
        place_box(rng, frame_size, boxes)
            .ok_or_else(|| AmuseError::invalid("random_spec", "could not place a glyph"))
            .map(|b| {
                boxes.push(b);
                b
            })
    };

    // designated counting class with 0..=4 full-range duplicates
    let counting_class = instruments[rng.gen_range(0..instruments.len())].clone();
    let audible_n = sources.len();
    let max_count = if audible_n >= 4 { 3 } else { 4 };
    let counting_n = rng.gen_range(0..=max_count);
    for _ in 0..counting_n {
        let bbox = place(&mut rng, &mut boxes)?;
        glyphs.push(GlyphSpan {
            class: counting_class.clone(),
            bbox,
            start_frame: 0,
            end_frame: n_frames,
        });
    }
    // audible instruments usually get a glyph over their active frames
    for src in &sources {
        if src.class == counting_class {
            continue;
        }
        if rng.gen_range(0.0..1.0) < 0.8 {
            let bbox = place(&mut rng, &mut boxes)?;
            glyphs.push(GlyphSpan {
                class: src.class.clone(),
                bbox,
                start_frame: src.start_segment * frames_per_segment,
                end_frame: src.end_segment * frames_per_segment,
            });
        }
    }
    // occasionally a silent instrument is shown anyway
    if rng.gen_range(0.0..1.0) < 0.25 {
        let silent: Vec<&String> = instruments
            .iter()
            .filter(|c| **c != counting_class && !sources.iter().any(|s| &s.class == *c))
            .collect();
        if !silent.is_empty() {
            let class = silent[rng.gen_range(0..silent.len())].clone();
            if glyphs.iter().filter(|g| classes.is_instrument(&g.class)).count() < 8 {
                let bbox = place(&mut rng, &mut boxes)?;
                glyphs.push(GlyphSpan {
                    class,
                    bbox,
                    start_frame: 0,
                    end_frame: n_frames,
                });
            }
        }
    }
    // visual extras
    for extra in &classes.visual_extras {
        let p = if extra.name == "conductor" { 0.45 } else { 0.7 };
        if rng.gen_range(0.0..1.0) < p {
            let bbox = place(&mut rng, &mut boxes)?;
            glyphs.push(GlyphSpan {
                class: extra.name.clone(),
                bbox,
                start_frame: 0,
                end_frame: n_frames,
            });
        }
    }

    let spec = ClipSpec {
        id: id.to_string(),
        seed,
        sample_rate: 8000,
        segment_seconds,
        n_segments,
        fps,
        frame_size,
        tempo,
        sources,
        glyphs,
        counting_class,
    };
    spec.validate(classes)?;
    Ok(spec)
}
