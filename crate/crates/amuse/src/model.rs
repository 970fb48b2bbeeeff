//! Whole-pipeline assembly: interactive encoders, frozen rhythm/source
//! features, the RoI vector, and the fusion head, wired for one QA sample.

use serde::{Deserialize, Serialize};

use crate::data::{ClipData, QaItem};
use crate::encoder::{Binder, EncoderConfig, EncoderStack};
use crate::error::{AmuseError, Result};
use crate::fusion::{Ablation, AnswerSpace, FusionConfig, FusionHead, FusionOutput};
use crate::graph::{Graph, Value};
use crate::optim::ParamSet;
use crate::predictors::{RsConfig, RsEncoders};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub rs: RsConfig,
    pub d_fusion: usize,
    pub roi_dim: usize,
    pub n_answers: usize,
}

pub struct AmuseModel {
    pub config: ModelConfig,
    pub stack: EncoderStack,
    pub rs: RsEncoders,
    pub fusion: FusionHead,
    pub answers: AnswerSpace,
}

impl AmuseModel {
    pub fn new(config: ModelConfig, answers: AnswerSpace) -> Self {
        if answers.len() != config.n_answers {
            panic!(
                "answer space has {} tokens, config says {}",
                answers.len(),
                config.n_answers
            );
        }
        let stack = EncoderStack::new(config.encoder.clone());
        let rs = RsEncoders::new(config.rs.clone());
        let fusion = FusionHead::new(FusionConfig {
            d_fusion: config.d_fusion,
            module_dims: [
                config.encoder.d_visual,
                config.encoder.d_audio,
                config.rs.d_visual,
                config.rs.d_audio,
                config.rs.d_visual,
                config.rs.d_audio,
                config.roi_dim,
            ],
            d_question: config.encoder.d_lang,
            n_answers: config.n_answers,
        });
        AmuseModel {
            config,
            stack,
            rs,
            fusion,
            answers,
        }
    }

    /// Registers every trainable tensor: encoder stack, the four rhythm and
    /// source branches with their heads, and the fusion head.
    pub fn init_params(&self, params: &mut ParamSet, seed: u64) {
        self.stack.init_params(params, seed);
        self.rs.init_params(params, seed);
        self.fusion.init_params(params, seed);
    }

    /// One QA sample end to end. Frozen rhythm/source vectors and the RoI
    /// vector enter as constants; the interactive stack runs on the clip's
    /// tokens and this question.
    pub fn forward_qa(
        &self,
        g: &mut Graph,
        b: &mut Binder,
        clip: &ClipData,
        item: &QaItem,
        ablation: &Ablation,
    ) -> Result<FusionOutput> {
        let rs_pooled = clip.rs_pooled.as_ref().ok_or_else(|| {
            AmuseError::Data("clip has no pretrained rhythm/source features".into())
        })?;
        let interactive = !ablation.disable_interactive;
        let (xv, xa, xl) = self.stack.forward(
            g,
            b,
            &clip.visual_tokens,
            &clip.audio_tokens,
            &item.question_ids,
            interactive,
        )?;
        let xv_avg = g.avg_pool(xv)?;
        let xa_avg = g.avg_pool(xa)?;
        let question = g.avg_pool(xl)?;
        let modules: [Value; 7] = [
            xv_avg,
            xa_avg,
            g.input(rs_pooled[0].clone()),
            g.input(rs_pooled[1].clone()),
            g.input(rs_pooled[2].clone()),
            g.input(rs_pooled[3].clone()),
            g.input(clip.roi_vec.clone()),
        ];
        self.fusion.forward(g, b, &modules, question, ablation)
    }
}
