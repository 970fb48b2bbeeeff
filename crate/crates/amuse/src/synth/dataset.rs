//! Renders a batch of seeded clips to disk: WAV audio, PNG frames, spec
//! JSON, a QA manifest, and a dataset manifest tying it together.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::qa::{gen_qa, question_vocabulary, QASample};
use super::spec::{ClassConfig, ClipSpec};
use super::{gen_clip, random_spec};
use crate::audio::write_wav;
use crate::error::Result;
use crate::roi::Frame;

#[derive(Debug, Clone)]
pub struct GenOptions {
    pub n_clips: usize,
    pub seed: u64,
    pub per_category: usize,
}

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions {
            n_clips: 200,
            seed: 7,
            per_category: 1,
        }
    }
}

/// File layout of a generated dataset directory.
#[derive(Debug, Clone)]
pub struct DatasetLayout {
    pub root: PathBuf,
}

pub fn dataset_files(root: &Path) -> DatasetLayout {
    DatasetLayout::new(root)
}

impl DatasetLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DatasetLayout { root: root.into() }
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn qa_path(&self) -> PathBuf {
        self.root.join("qa.json")
    }

    pub fn wav_path(&self, clip: &str) -> PathBuf {
        self.root.join("clips").join(format!("{}.wav", clip))
    }

    pub fn spec_path(&self, clip: &str) -> PathBuf {
        self.root.join("specs").join(format!("{}.json", clip))
    }

    pub fn frames_dir(&self, clip: &str) -> PathBuf {
        self.root.join("frames").join(clip)
    }

    pub fn frame_path(&self, clip: &str, index: usize) -> PathBuf {
        self.frames_dir(clip).join(format!("f{:02}.png", index))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub n_clips: usize,
    pub sample_rate: u32,
    pub segment_seconds: f64,
    pub fps: u32,
    pub frame_size: usize,
    pub classes: ClassConfig,
    pub answer_vocab: Vec<String>,
    pub question_vocab: Vec<String>,
    pub clips: Vec<String>,
    pub qa_count: usize,
}

fn write_frame_png(path: &Path, frame: &Frame) -> Result<()> {
    let img = image::RgbImage::from_raw(frame.width() as u32, frame.height() as u32, frame.rgb().to_vec())
        .expect("frame buffer size");
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

pub fn generate_dataset(root: &Path, classes: &ClassConfig, opts: &GenOptions) -> Result<DatasetManifest> {
    let layout = DatasetLayout::new(root);
    std::fs::create_dir_all(layout.root.join("clips"))?;
    std::fs::create_dir_all(layout.root.join("specs"))?;
    std::fs::create_dir_all(layout.root.join("frames"))?;

    let mut clips = Vec::with_capacity(opts.n_clips);
    let mut qa: Vec<QASample> = Vec::new();
    let mut sample_rate = 0;
    let mut segment_seconds = 6.0;
    let mut fps = 1;
    let mut frame_size = 64;
    for i in 0..opts.n_clips {
        let id = format!("clip_{:04}", i);
        let clip_seed = opts.seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let spec = random_spec(&id, clip_seed, classes)?;
        let (audio, frames) = gen_clip(&spec, classes)?;
        write_wav(&layout.wav_path(&id), &audio)?;
        std::fs::create_dir_all(layout.frames_dir(&id))?;
        for (fi, frame) in frames.iter().enumerate() {
            write_frame_png(&layout.frame_path(&id, fi), frame)?;
        }
        let spec_json = serde_json::to_vec_pretty(&spec)?;
        std::fs::write(layout.spec_path(&id), spec_json)?;
        qa.extend(gen_qa(&spec, classes, opts.per_category));
        sample_rate = spec.sample_rate;
        segment_seconds = spec.segment_seconds;
        fps = spec.fps;
        frame_size = spec.frame_size;
        clips.push(id);
    }
    std::fs::write(layout.qa_path(), serde_json::to_vec_pretty(&qa)?)?;
    let manifest = DatasetManifest {
        seed: opts.seed,
        n_clips: opts.n_clips,
        sample_rate,
        segment_seconds,
        fps,
        frame_size,
        classes: classes.clone(),
        answer_vocab: crate::fusion::AnswerSpace::build(&classes.instrument_names())
            .tokens()
            .to_vec(),
        question_vocab: question_vocabulary(classes),
        clips,
        qa_count: qa.len(),
    };
    std::fs::write(layout.manifest_path(), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn load_manifest(root: &Path) -> Result<DatasetManifest> {
    let bytes = std::fs::read(DatasetLayout::new(root).manifest_path())?;
    Ok(serde_json::from_slice(&bytes)?)
}

pub fn load_spec(root: &Path, clip: &str) -> Result<ClipSpec> {
    let bytes = std::fs::read(DatasetLayout::new(root).spec_path(clip))?;
    Ok(serde_json::from_slice(&bytes)?)
}

pub fn load_qa(root: &Path) -> Result<Vec<QASample>> {
    let bytes = std::fs::read(DatasetLayout::new(root).qa_path())?;
    Ok(serde_json::from_slice(&bytes)?)
}
