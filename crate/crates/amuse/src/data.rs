//! Dataset loading and featurization: turns a generated clip directory into
//! model-ready tensors plus annotation targets for pretraining.

use std::collections::BTreeMap;
use std::path::Path;

use crate::audio::{read_wav, AudioClip, TempoBand};
use crate::error::{AmuseError, Result};
use crate::fusion::AnswerSpace;
use crate::rhythm::rhythm_labels;
use crate::roi::{roi_features, Frame, GlyphDetector, RoiDetector, ROI_SLOTS_PER_CLASS};
use crate::source::{source_timeline, BandSeparator};
use crate::synth::{
    dataset_files, Category, ClipSpec, DatasetManifest, QASample,
};
use crate::tensor::Tensor;

/// How raw media becomes encoder tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturizeConfig {
    /// Take every n-th frame for the encoders (0 means one per segment).
    pub frame_stride: usize,
    /// Frames are box-downsampled to this square size before patching.
    pub visual_downsample: usize,
    /// The downsampled frame splits into a grid of this many patches per side.
    pub patch_grid: usize,
    pub n_mels: usize,
    pub audio_groups: usize,
}

impl Default for FeaturizeConfig {
    fn default() -> Self {
        FeaturizeConfig {
            frame_stride: 0,
            visual_downsample: 16,
            patch_grid: 2,
            n_mels: 32,
            audio_groups: 20,
        }
    }
}

impl FeaturizeConfig {
    pub fn patch_dim(&self) -> usize {
        let side = self.visual_downsample / self.patch_grid;
        side * side * 3
    }
}

#[derive(Debug, Clone)]
pub struct AnnotationSettings {
    pub segment_seconds: f64,
    pub threshold_fraction: f64,
    pub band: TempoBand,
    pub presence_threshold: f64,
}

impl Default for AnnotationSettings {
    fn default() -> Self {
        AnnotationSettings {
            segment_seconds: 6.0,
            threshold_fraction: 0.25,
            band: TempoBand::default(),
            presence_threshold: 0.25,
        }
    }
}

/// Everything cached per clip.
#[derive(Debug, Clone)]
pub struct ClipData {
    pub spec: ClipSpec,
    pub visual_tokens: Tensor,
    pub audio_tokens: Tensor,
    pub roi_vec: Tensor,
    /// Annotated boundary labels, as regression targets.
    pub rhythm_target: Tensor,
    /// Annotated per-class totals, normalized by segment count.
    pub source_target: Tensor,
    /// Pooled vectors of the four frozen branches, filled after pretraining.
    pub rs_pooled: Option<[Tensor; 4]>,
}

/// One resolved QA sample: token ids and the oracle answer index.
#[derive(Debug, Clone)]
pub struct QaItem {
    pub clip: String,
    pub category: Category,
    pub question_ids: Vec<usize>,
    pub answer_idx: usize,
}

pub struct Dataset {
    pub manifest: DatasetManifest,
    pub clips: BTreeMap<String, ClipData>,
    pub qa: Vec<QaItem>,
    pub answers: AnswerSpace,
    pub word_index: BTreeMap<String, usize>,
}

impl Dataset {
    pub fn clip(&self, id: &str) -> &ClipData {
        &self.clips[id]
    }

    pub fn n_segments(&self) -> usize {
        self.clips.values().next().map(|c| c.spec.n_segments).unwrap_or(10)
    }
}

/// Box-mean downsample of an RGB frame to `side x side`, scaled to [0,1].
fn downsample(frame: &Frame, side: usize) -> Vec<f64> {
    let factor = frame.width() / side;
    let mut out = vec![0.0; side * side * 3];
    for by in 0..side {
        for bx in 0..side {
            let mut acc = [0.0f64; 3];
            for dy in 0..factor {
                for dx in 0..factor {
                    let px = frame.pixel(bx * factor + dx, by * factor + dy);
                    for c in 0..3 {
                        acc[c] += px[c] as f64;
                    }
                }
            }
            let scale = 1.0 / (factor * factor) as f64 / 255.0;
            for c in 0..3 {
                out[(by * side + bx) * 3 + c] = acc[c] * scale - 0.5;
            }
        }
    }
    out
}

/// `[frames x patches, patch_dim]` token matrix from a subsampled frame
/// stack.
pub fn visual_tokens(frames: &[Frame], cfg: &FeaturizeConfig, stride: usize) -> Result<Tensor> {
    if frames.is_empty() {
        return Err(AmuseError::Data("no frames".into()));
    }
    let side = cfg.visual_downsample;
    let grid = cfg.patch_grid;
    let patch_side = side / grid;
    let patch_dim = cfg.patch_dim();
    let mut rows = Vec::new();
    let mut f = 0;
    while f < frames.len() {
        let small = downsample(&frames[f], side);
        for gy in 0..grid {
            for gx in 0..grid {
                let mut patch = Vec::with_capacity(patch_dim);
                for py in 0..patch_side {
                    for px in 0..patch_side {
                        let x = gx * patch_side + px;
                        let y = gy * patch_side + py;
                        for c in 0..3 {
                            patch.push(small[(y * side + x) * 3 + c]);
                        }
                    }
                }
                rows.push(patch);
            }
        }
        f += stride.max(1);
    }
    let t = rows.len();
    Tensor::new(vec![t, patch_dim], rows.concat())
}

/// Per-clip standardized log-mel token matrix.
pub fn audio_tokens(clip: &AudioClip, cfg: &FeaturizeConfig) -> Result<Tensor> {
    let mel = crate::audio::log_mel_features(clip, cfg.n_mels, cfg.audio_groups)?;
    let mean = mel.data().iter().sum::<f64>() / mel.len() as f64;
    let var = mel.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / mel.len() as f64;
    let inv = 1.0 / (var.sqrt() + 1e-8);
    Tensor::new(
        mel.shape().to_vec(),
        mel.data().iter().map(|v| (v - mean) * inv).collect(),
    )
}

fn load_frames(root: &Path, clip: &str, n_frames: usize) -> Result<Vec<Frame>> {
    let layout = dataset_files(root);
    let mut frames = Vec::with_capacity(n_frames);
    for i in 0..n_frames {
        let img = image::open(layout.frame_path(clip, i))?.to_rgb8();
        frames.push(Frame::new(
            img.width() as usize,
            img.height() as usize,
            img.into_raw(),
        )?);
    }
    Ok(frames)
}

/// Loads and featurizes a generated dataset directory. Targets come from the
/// annotators run on the rendered audio, not from the specs.
pub fn load_dataset(root: &Path, feat: &FeaturizeConfig, ann: &AnnotationSettings) -> Result<Dataset> {
    let manifest = crate::synth::load_manifest(root)?;
    let layout = dataset_files(root);
    let separator = BandSeparator::new(manifest.classes.separator_entries())
        .map_err(|e| AmuseError::Data(format!("separator: {}", e)))?;
    let detector = GlyphDetector::new(
        manifest.classes.detector_entries(),
        (manifest.frame_size, manifest.frame_size),
    );
    let instruments = manifest.classes.instrument_names();

    let mut clips = BTreeMap::new();
    for id in &manifest.clips {
        let spec = crate::synth::load_spec(root, id)?;
        let audio = read_wav(&layout.wav_path(id))?;
        let frames = load_frames(root, id, spec.n_frames())?;

        let stride = if feat.frame_stride == 0 {
            spec.frames_per_segment()
        } else {
            feat.frame_stride
        };
        let visual = visual_tokens(&frames, feat, stride)?;
        let audio_t = audio_tokens(&audio, feat)?;

        let dets: Vec<Vec<crate::roi::Detection>> = frames
            .iter()
            .map(|f| detector.detect(f))
            .collect::<Result<_>>()?;
        let roi = roi_features(dets, &detector.classes().to_vec())?;

        let rhythm = rhythm_labels(&audio, ann.segment_seconds, ann.band)
            .map_err(|e| AmuseError::Data(format!("{}: rhythm annotation: {}", id, e)))?;
        let rhythm_target = Tensor::vector(rhythm.labels.iter().map(|&l| l as f64).collect());
        let timeline = source_timeline(&audio, ann.segment_seconds, &separator, ann.presence_threshold)
            .map_err(|e| AmuseError::Data(format!("{}: source annotation: {}", id, e)))?;
        let n = timeline.counts.len() as f64;
        let source_target = Tensor::vector(
            instruments
                .iter()
                .map(|c| timeline.totals.get(c).copied().unwrap_or(0) as f64 / n)
                .collect(),
        );

        clips.insert(
            id.clone(),
            ClipData {
                spec,
                visual_tokens: visual,
                audio_tokens: audio_t,
                roi_vec: roi.pooled,
                rhythm_target,
                source_target,
                rs_pooled: None,
            },
        );
    }

    let answers = AnswerSpace::from_tokens(manifest.answer_vocab.clone());
    let word_index: BTreeMap<String, usize> = manifest
        .question_vocab
        .iter()
        .enumerate()
        .map(|(i, w)| (w.clone(), i))
        .collect();
    let raw_qa: Vec<QASample> = crate::synth::load_qa(root)?;
    let mut qa = Vec::with_capacity(raw_qa.len());
    for s in raw_qa {
        let question_ids = s
            .question
            .iter()
            .map(|w| {
                word_index.get(w).copied().ok_or_else(|| {
                    AmuseError::Data(format!("question word '{}' not in vocabulary", w))
                })
            })
            .collect::<Result<Vec<usize>>>()?;
        let answer_idx = answers.index_of(&s.answer).ok_or_else(|| {
            AmuseError::Data(format!("oracle answer '{}' not in answer vocabulary", s.answer))
        })?;
        qa.push(QaItem {
            clip: s.clip,
            category: s.category,
            question_ids,
            answer_idx,
        });
    }

    Ok(Dataset {
        manifest,
        clips,
        qa,
        answers,
        word_index,
    })
}

/// Expected token counts for a dataset, used to size the model.
pub fn token_geometry(manifest: &DatasetManifest, feat: &FeaturizeConfig) -> (usize, usize) {
    let frames_per_segment = (manifest.segment_seconds * manifest.fps as f64).round() as usize;
    let n_frames = frames_per_segment * 10;
    let stride = if feat.frame_stride == 0 { frames_per_segment } else { feat.frame_stride };
    let visual = n_frames.div_ceil(stride) * feat.patch_grid * feat.patch_grid;
    (visual, feat.audio_groups)
}

pub fn roi_dim(manifest: &DatasetManifest) -> usize {
    manifest.classes.detector_names().len() * ROI_SLOTS_PER_CLASS
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{default_classes, generate_dataset, GenOptions};

    #[test]
    fn loaded_dataset_has_model_ready_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let classes = default_classes();
        generate_dataset(
            dir.path(),
            &classes,
            &GenOptions {
                n_clips: 2,
                seed: 17,
                per_category: 1,
            },
        )
        .unwrap();
        let feat = FeaturizeConfig::default();
        let ds = load_dataset(dir.path(), &feat, &AnnotationSettings::default()).unwrap();
        assert_eq!(ds.clips.len(), 2);
        let clip = ds.clip("clip_0000");
        assert_eq!(clip.visual_tokens.shape(), &[40, 192]);
        assert_eq!(clip.audio_tokens.shape(), &[20, 32]);
        assert_eq!(clip.roi_vec.len(), 7 * ROI_SLOTS_PER_CLASS);
        assert_eq!(clip.rhythm_target.len(), 9);
        assert_eq!(clip.source_target.len(), 5);
        assert!(!ds.qa.is_empty());
        for item in &ds.qa {
            assert!(item.answer_idx < ds.answers.len());
            assert!(item.question_ids.iter().all(|&w| w < ds.word_index.len()));
        }
    }

    #[test]
    fn annotated_targets_match_spec_oracles_on_clean_clips() {
        let dir = tempfile::tempdir().unwrap();
        let classes = default_classes();
        generate_dataset(
            dir.path(),
            &classes,
            &GenOptions {
                n_clips: 3,
                seed: 23,
                per_category: 1,
            },
        )
        .unwrap();
        let ds = load_dataset(dir.path(), &FeaturizeConfig::default(), &AnnotationSettings::default()).unwrap();
        for (id, clip) in &ds.clips {
            let want: Vec<f64> = clip.spec.expected_rhythm_labels().iter().map(|&l| l as f64).collect();
            assert_eq!(clip.rhythm_target.data(), &want[..], "{} rhythm labels", id);
            let presence = clip.spec.expected_presence(&classes);
            let n = clip.spec.n_segments as f64;
            for (ci, _) in classes.instruments.iter().enumerate() {
                let total: u32 = presence.iter().map(|row| row[ci]).sum();
                let got = clip.source_target.data()[ci];
                assert!((got - total as f64 / n).abs() < 1e-12, "{} source totals", id);
            }
        }
    }
}
