//! Run configuration: one TOML file with full defaulting drives every
//! subcommand. Paper-sourced constants surface here with their defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio::TempoBand;
use crate::data::{roi_dim, token_geometry, AnnotationSettings, FeaturizeConfig};
use crate::encoder::EncoderConfig;
use crate::error::{AmuseError, Result};
use crate::model::ModelConfig;
use crate::optim::fnv1a32;
use crate::predictors::RsConfig;
use crate::synth::DatasetManifest;

fn config_err(field: &str, message: impl Into<String>) -> AmuseError {
    AmuseError::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub d_visual: usize,
    pub d_audio: usize,
    pub d_lang: usize,
    pub blocks_visual: usize,
    pub blocks_audio: usize,
    pub blocks_lang: usize,
    pub injection_period: usize,
    pub adapter_hidden: usize,
    pub ffn_mult: usize,
    pub fuse_every_boundary: bool,
    pub rs_d_visual: usize,
    pub rs_d_audio: usize,
    pub rs_blocks: usize,
    pub rs_head_hidden: usize,
    pub d_fusion: usize,
    pub n_mels: usize,
    pub audio_groups: usize,
    pub patch_grid: usize,
    pub visual_downsample: usize,
    pub frame_stride: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            d_visual: 24,
            d_audio: 16,
            d_lang: 16,
            blocks_visual: 6,
            blocks_audio: 6,
            blocks_lang: 6,
            injection_period: 3,
            adapter_hidden: 32,
            ffn_mult: 2,
            fuse_every_boundary: true,
            rs_d_visual: 16,
            rs_d_audio: 16,
            rs_blocks: 3,
            rs_head_hidden: 32,
            d_fusion: 24,
            n_mels: 32,
            audio_groups: 20,
            patch_grid: 2,
            visual_downsample: 16,
            frame_stride: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub pretrain_lr: f64,
    pub finetune_lr: f64,
    pub pretrain_epochs: usize,
    pub finetune_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub weight_decay: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        TrainingSection {
            pretrain_lr: 0.001,
            finetune_lr: 0.0001,
            pretrain_epochs: 30,
            finetune_epochs: 30,
            batch_size: 16,
            seed: 7,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotationSection {
    pub segment_seconds: f64,
    pub threshold_fraction: f64,
    pub tempo_min_bpm: f64,
    pub tempo_max_bpm: f64,
    pub presence_threshold: f64,
}

impl Default for AnnotationSection {
    fn default() -> Self {
        AnnotationSection {
            segment_seconds: 6.0,
            threshold_fraction: 0.25,
            tempo_min_bpm: 40.0,
            tempo_max_bpm: 200.0,
            presence_threshold: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub data: PathBuf,
    pub classes: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        PathsSection {
            data: PathBuf::from("synth"),
            classes: PathBuf::from("config/classes.json"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub training: TrainingSection,
    pub annotation: AnnotationSection,
    pub paths: PathsSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err("config", format!("{}: {}", path.display(), e)))?;
        let cfg: RunConfig =
            toml::from_str(&text).map_err(|e| config_err("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        for (name, v) in [
            ("model.d_visual", m.d_visual),
            ("model.d_audio", m.d_audio),
            ("model.d_lang", m.d_lang),
            ("model.d_fusion", m.d_fusion),
            ("model.injection_period", m.injection_period),
            ("model.adapter_hidden", m.adapter_hidden),
            ("model.ffn_mult", m.ffn_mult),
            ("model.n_mels", m.n_mels),
            ("model.audio_groups", m.audio_groups),
            ("model.rs_blocks", m.rs_blocks),
        ] {
            if v == 0 {
                return Err(config_err(name, "must be positive"));
            }
        }
        if m.visual_downsample % m.patch_grid != 0 {
            return Err(config_err(
                "model.patch_grid",
                "must divide model.visual_downsample",
            ));
        }
        let a = &self.annotation;
        if !(a.threshold_fraction > 0.0 && a.threshold_fraction < 1.0) {
            return Err(config_err(
                "annotation.threshold_fraction",
                format!("{} is outside (0, 1)", a.threshold_fraction),
            ));
        }
        if a.segment_seconds <= 0.0 {
            return Err(config_err("annotation.segment_seconds", "must be positive"));
        }
        if a.tempo_min_bpm <= 0.0 || a.tempo_max_bpm <= a.tempo_min_bpm {
            return Err(config_err(
                "annotation.tempo_min_bpm",
                "tempo band must satisfy 0 < min < max",
            ));
        }
        if !(0.0..=1.0).contains(&a.presence_threshold) {
            return Err(config_err(
                "annotation.presence_threshold",
                "must be within [0, 1]",
            ));
        }
        let t = &self.training;
        if t.pretrain_lr <= 0.0 || t.finetune_lr <= 0.0 {
            return Err(config_err("training.pretrain_lr", "learning rates must be positive"));
        }
        if t.batch_size == 0 {
            return Err(config_err("training.batch_size", "must be positive"));
        }
        Ok(())
    }

    pub fn featurize(&self) -> FeaturizeConfig {
        FeaturizeConfig {
            frame_stride: self.model.frame_stride,
            visual_downsample: self.model.visual_downsample,
            patch_grid: self.model.patch_grid,
            n_mels: self.model.n_mels,
            audio_groups: self.model.audio_groups,
        }
    }

    pub fn annotation_settings(&self) -> AnnotationSettings {
        AnnotationSettings {
            segment_seconds: self.annotation.segment_seconds,
            threshold_fraction: self.annotation.threshold_fraction,
            band: TempoBand {
                min_bpm: self.annotation.tempo_min_bpm,
                max_bpm: self.annotation.tempo_max_bpm,
            },
            presence_threshold: self.annotation.presence_threshold,
        }
    }

    /// Sizes the model for a concrete dataset.
    pub fn model_config(&self, manifest: &DatasetManifest) -> ModelConfig {
        let feat = self.featurize();
        let (tv, ta) = token_geometry(manifest, &feat);
        let max_tokens = tv.max(ta).max(manifest.question_vocab.len().min(32)).max(16);
        let m = &self.model;
        ModelConfig {
            encoder: EncoderConfig {
                d_visual: m.d_visual,
                d_audio: m.d_audio,
                d_lang: m.d_lang,
                blocks_visual: m.blocks_visual,
                blocks_audio: m.blocks_audio,
                blocks_lang: m.blocks_lang,
                injection_period: m.injection_period,
                adapter_hidden: m.adapter_hidden,
                ffn_mult: m.ffn_mult,
                fuse_every_boundary: m.fuse_every_boundary,
                visual_input_dim: feat.patch_dim(),
                audio_input_dim: m.n_mels,
                vocab_size: manifest.question_vocab.len(),
                max_tokens,
            },
            rs: RsConfig {
                d_visual: m.rs_d_visual,
                d_audio: m.rs_d_audio,
                blocks: m.rs_blocks,
                head_hidden: m.rs_head_hidden,
                ffn_mult: m.ffn_mult,
                visual_input_dim: feat.patch_dim(),
                audio_input_dim: m.n_mels,
                max_tokens,
                rhythm_out: 9,
                source_out: manifest.classes.instruments.len(),
            },
            d_fusion: m.d_fusion,
            roi_dim: roi_dim(manifest),
            n_answers: manifest.answer_vocab.len(),
        }
    }
}

fn vocab_fingerprint(words: &[String]) -> f64 {
    fnv1a32(words.join("\x1f").as_bytes()) as f64
}

/// Numeric fingerprints of the model geometry and vocabularies, stored in
/// checkpoints and checked on load.
pub fn config_scalars(cfg: &ModelConfig, manifest: &DatasetManifest) -> BTreeMap<String, f64> {
    let mut s = BTreeMap::new();
    s.insert("d_visual".into(), cfg.encoder.d_visual as f64);
    s.insert("d_audio".into(), cfg.encoder.d_audio as f64);
    s.insert("d_lang".into(), cfg.encoder.d_lang as f64);
    s.insert("blocks_visual".into(), cfg.encoder.blocks_visual as f64);
    s.insert("blocks_audio".into(), cfg.encoder.blocks_audio as f64);
    s.insert("blocks_lang".into(), cfg.encoder.blocks_lang as f64);
    s.insert("injection_period".into(), cfg.encoder.injection_period as f64);
    s.insert("adapter_hidden".into(), cfg.encoder.adapter_hidden as f64);
    s.insert("ffn_mult".into(), cfg.encoder.ffn_mult as f64);
    s.insert("fuse_every_boundary".into(), f64::from(cfg.encoder.fuse_every_boundary));
    s.insert("visual_input_dim".into(), cfg.encoder.visual_input_dim as f64);
    s.insert("audio_input_dim".into(), cfg.encoder.audio_input_dim as f64);
    s.insert("vocab_size".into(), cfg.encoder.vocab_size as f64);
    s.insert("max_tokens".into(), cfg.encoder.max_tokens as f64);
    s.insert("rs_d_visual".into(), cfg.rs.d_visual as f64);
    s.insert("rs_d_audio".into(), cfg.rs.d_audio as f64);
    s.insert("rs_blocks".into(), cfg.rs.blocks as f64);
    s.insert("rs_head_hidden".into(), cfg.rs.head_hidden as f64);
    s.insert("rhythm_out".into(), cfg.rs.rhythm_out as f64);
    s.insert("source_out".into(), cfg.rs.source_out as f64);
    s.insert("d_fusion".into(), cfg.d_fusion as f64);
    s.insert("roi_dim".into(), cfg.roi_dim as f64);
    s.insert("n_answers".into(), cfg.n_answers as f64);
    s.insert("question_vocab_fnv".into(), vocab_fingerprint(&manifest.question_vocab));
    s.insert("answer_vocab_fnv".into(), vocab_fingerprint(&manifest.answer_vocab));
    s.insert(
        "classes_fnv".into(),
        vocab_fingerprint(&manifest.classes.detector_names()),
    );
    s
}

/// Rejects a checkpoint whose geometry or vocabularies differ from what the
/// current config and dataset would build.
pub fn verify_scalars(
    stored: &BTreeMap<String, f64>,
    cfg: &ModelConfig,
    manifest: &DatasetManifest,
) -> Result<()> {
    let expect = config_scalars(cfg, manifest);
    for (key, want) in &expect {
        match stored.get(key) {
            Some(got) if got == want => {}
            Some(got) => {
                return Err(AmuseError::Checkpoint(format!(
                    "checkpoint mismatch: {} is {} but the current config/dataset implies {}",
                    key, got, want
                )))
            }
            None => {
                return Err(AmuseError::Checkpoint(format!(
                    "checkpoint is missing config record '{}'",
                    key
                )))
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_parses_with_defaults() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        cfg.validate().unwrap();
        assert_eq!(cfg.training.pretrain_lr, 0.001);
        assert_eq!(cfg.training.finetune_lr, 0.0001);
        assert_eq!(cfg.annotation.threshold_fraction, 0.25);
        assert_eq!(cfg.model.injection_period, 3);
    }

    #[test]
    fn partial_config_overrides_only_named_fields() {
        let cfg: RunConfig = toml::from_str("[training]\nseed = 42\n").unwrap();
        assert_eq!(cfg.training.seed, 42);
        assert_eq!(cfg.training.batch_size, 16);
    }

    #[test]
    fn bad_fields_name_themselves() {
        let cfg: RunConfig = toml::from_str("[annotation]\nthreshold_fraction = 1.5\n").unwrap();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("threshold_fraction"), "{}", err);

        let err = toml::from_str::<RunConfig>("[training]\nbogus_key = 1\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("bogus_key"), "{}", err);
    }
}
