//! Rhythm and source encoders with three-layer predictor heads.
//!
//! Four encoder branches (rhythm-visual, rhythm-audio, source-visual,
//! source-audio) each run a small non-interactive transformer over the
//! clip's frame patches or log-mel groups, average-pool the tokens, and feed
//! the concatenated visual/audio vectors to a head that regresses the
//! annotated labels under squared error. After this stage the encoder
//! branches are frozen and only their pooled vectors flow downstream.

use serde::{Deserialize, Serialize};

use crate::encoder::{block_forward, Binder};
use crate::error::Result;
use crate::graph::{Graph, Value};
use crate::optim::{init_uniform, ParamSet};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsConfig {
    pub d_visual: usize,
    pub d_audio: usize,
    pub blocks: usize,
    pub head_hidden: usize,
    pub ffn_mult: usize,
    pub visual_input_dim: usize,
    pub audio_input_dim: usize,
    pub max_tokens: usize,
    /// Rhythm head output length (boundary-label count).
    pub rhythm_out: usize,
    /// Source head output length (instrument-class count).
    pub source_out: usize,
}

impl Default for RsConfig {
    fn default() -> Self {
        RsConfig {
            d_visual: 16,
            d_audio: 16,
            blocks: 3,
            head_hidden: 32,
            ffn_mult: 2,
            visual_input_dim: 192,
            audio_input_dim: 32,
            max_tokens: 64,
            rhythm_out: 9,
            source_out: 5,
        }
    }
}

pub const RS_TASKS: [&str; 2] = ["rhythm", "source"];
pub const RS_BRANCH_PREFIXES: [&str; 4] = [
    "rs.rhythm.visual",
    "rs.rhythm.audio",
    "rs.source.visual",
    "rs.source.audio",
];

fn branch_prefix(task: &str, modality: &str) -> String {
    format!("rs.{}.{}", task, modality)
}

fn head_prefix(task: &str) -> String {
    format!("rs.head.{}", task)
}

#[derive(Debug, Clone)]
pub struct RsEncoders {
    pub config: RsConfig,
}

impl RsEncoders {
    pub fn new(config: RsConfig) -> Self {
        RsEncoders { config }
    }

    pub fn init_params(&self, params: &mut ParamSet, seed: u64) {
        let c = &self.config;
        for task in RS_TASKS {
            for (modality, d, input_dim) in [
                ("visual", c.d_visual, c.visual_input_dim),
                ("audio", c.d_audio, c.audio_input_dim),
            ] {
                let p = branch_prefix(task, modality);
                let ew = format!("{}.embed.w", p);
                params.insert(&ew, init_uniform(&ew, &[input_dim, d], input_dim, seed));
                let pos = format!("{}.embed.pos", p);
                params.insert(&pos, init_uniform(&pos, &[c.max_tokens, d], d, seed));
                for i in 0..c.blocks {
                    let bp = format!("{}.block{}", p, i);
                    crate::encoder::init_block_params(params, &bp, d, d * c.ffn_mult, seed);
                }
            }
            let (h, out) = (
                c.head_hidden,
                if task == "rhythm" { c.rhythm_out } else { c.source_out },
            );
            let hp = head_prefix(task);
            let din = c.d_visual + c.d_audio;
            let w1 = format!("{}.w1", hp);
            params.insert(&w1, init_uniform(&w1, &[din, h], din, seed));
            params.insert(format!("{}.b1", hp), Tensor::zeros(&[h]));
            let w2 = format!("{}.w2", hp);
            params.insert(&w2, init_uniform(&w2, &[h, h], h, seed));
            params.insert(format!("{}.b2", hp), Tensor::zeros(&[h]));
            let w3 = format!("{}.w3", hp);
            params.insert(&w3, init_uniform(&w3, &[h, out], h, seed));
            params.insert(format!("{}.b3", hp), Tensor::zeros(&[out]));
        }
    }

    /// One branch: embed tokens, run the blocks, average-pool to `[d]`.
    pub fn branch_pooled(
        &self,
        g: &mut Graph,
        b: &mut Binder,
        task: &str,
        modality: &str,
        feats: &Tensor,
    ) -> Result<Value> {
        let c = &self.config;
        let p = branch_prefix(task, modality);
        let d = if modality == "visual" { c.d_visual } else { c.d_audio };
        let x = g.input(feats.clone());
        let w = b.get(g, &format!("{}.embed.w", p));
        let e = g.matmul(x, w)?;
        let pos = b.get(g, &format!("{}.embed.pos", p));
        let idx: Vec<usize> = (0..feats.shape()[0]).collect();
        let pe = g.gather_rows(pos, &idx)?;
        let mut state = g.add(e, pe)?;
        for i in 0..c.blocks {
            state = block_forward(g, b, &format!("{}.block{}", p, i), state, d)?;
        }
        g.avg_pool(state)
    }

    /// Three linear layers with ReLU between, over the concatenated pooled
    /// visual and audio vectors.
    pub fn predictor_forward(
        &self,
        g: &mut Graph,
        b: &mut Binder,
        task: &str,
        xv_avg: Value,
        xa_avg: Value,
    ) -> Result<Value> {
        let hp = head_prefix(task);
        let x = g.concat(&[xv_avg, xa_avg])?;
        let w1 = b.get(g, &format!("{}.w1", hp));
        let b1 = b.get(g, &format!("{}.b1", hp));
        let h1 = g.vecmat(x, w1)?;
        let h1 = g.add(h1, b1)?;
        let h1 = g.relu(h1);
        let w2 = b.get(g, &format!("{}.w2", hp));
        let b2 = b.get(g, &format!("{}.b2", hp));
        let h2 = g.vecmat(h1, w2)?;
        let h2 = g.add(h2, b2)?;
        let h2 = g.relu(h2);
        let w3 = b.get(g, &format!("{}.w3", hp));
        let b3 = b.get(g, &format!("{}.b3", hp));
        let y = g.vecmat(h2, w3)?;
        g.add(y, b3)
    }

    /// Both task predictions for one clip.
    pub fn forward_clip(
        &self,
        g: &mut Graph,
        b: &mut Binder,
        visual_feats: &Tensor,
        audio_feats: &Tensor,
    ) -> Result<(Value, Value)> {
        let rv = self.branch_pooled(g, b, "rhythm", "visual", visual_feats)?;
        let ra = self.branch_pooled(g, b, "rhythm", "audio", audio_feats)?;
        let sv = self.branch_pooled(g, b, "source", "visual", visual_feats)?;
        let sa = self.branch_pooled(g, b, "source", "audio", audio_feats)?;
        let yr = self.predictor_forward(g, b, "rhythm", rv, ra)?;
        let ys = self.predictor_forward(g, b, "source", sv, sa)?;
        Ok((yr, ys))
    }

    /// Pooled vectors of all four branches, evaluated without gradients.
    /// These are the frozen features the fusion bank consumes.
    pub fn pooled_features(
        &self,
        params: &ParamSet,
        visual_feats: &Tensor,
        audio_feats: &Tensor,
    ) -> Result<[Tensor; 4]> {
        let mut g = Graph::new();
        let mut b = Binder::new(params, false);
        let rv = self.branch_pooled(&mut g, &mut b, "rhythm", "visual", visual_feats)?;
        let ra = self.branch_pooled(&mut g, &mut b, "rhythm", "audio", audio_feats)?;
        let sv = self.branch_pooled(&mut g, &mut b, "source", "visual", visual_feats)?;
        let sa = self.branch_pooled(&mut g, &mut b, "source", "audio", audio_feats)?;
        Ok([
            g.value(rv).clone(),
            g.value(ra).clone(),
            g.value(sv).clone(),
            g.value(sa).clone(),
        ])
    }
}

/// Marks the four encoder branches immutable. Heads stay unfrozen but are
/// simply not part of any later graph. Freezing twice is a no-op.
pub fn freeze_encoders(params: &mut ParamSet) {
    for prefix in RS_BRANCH_PREFIXES {
        params.freeze_prefix(prefix);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::{adam_step, AdamState};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seeded(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn tiny() -> (RsEncoders, ParamSet) {
        let enc = RsEncoders::new(RsConfig {
            d_visual: 6,
            d_audio: 4,
            blocks: 2,
            head_hidden: 8,
            ffn_mult: 2,
            visual_input_dim: 5,
            audio_input_dim: 3,
            max_tokens: 16,
            rhythm_out: 4,
            source_out: 3,
        });
        let mut params = ParamSet::new();
        enc.init_params(&mut params, 31);
        (enc, params)
    }

    #[test]
    fn avg_pool_feeds_the_heads() {
        let (enc, params) = tiny();
        let mut g = Graph::new();
        let mut b = Binder::new(&params, false);
        let (yr, ys) = enc
            .forward_clip(&mut g, &mut b, &seeded(&[4, 5], 1), &seeded(&[3, 3], 2))
            .unwrap();
        assert_eq!(g.value(yr).shape(), &[4]);
        assert_eq!(g.value(ys).shape(), &[3]);
    }

    #[test]
    fn predictor_zero_paths_and_oracle() {
        let (enc, mut params) = tiny();
        // zero weights and biases give zero output
        for suffix in ["w1", "b1", "w2", "b2", "w3", "b3"] {
            let name = format!("rs.head.rhythm.{}", suffix);
            let shape = params.expect(&name).shape().to_vec();
            params.set(&name, Tensor::zeros(&shape));
        }
        let mut g = Graph::new();
        let mut b = Binder::new(&params, false);
        let xv = g.input(seeded(&[6], 3));
        let xa = g.input(seeded(&[4], 4));
        let y = enc.predictor_forward(&mut g, &mut b, "rhythm", xv, xa).unwrap();
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));

        // random instance matches the composed linear/relu oracle
        let (enc, params) = tiny();
        let xv_t = seeded(&[6], 5);
        let xa_t = seeded(&[4], 6);
        let mut g = Graph::new();
        let mut b = Binder::new(&params, false);
        let xv = g.input(xv_t.clone());
        let xa = g.input(xa_t.clone());
        let y = enc.predictor_forward(&mut g, &mut b, "source", xv, xa).unwrap();

        let cat = crate::tensor::concat(&[&xv_t, &xa_t]).unwrap();
        let lin = |x: &Tensor, w: &Tensor, bias: &Tensor| {
            crate::tensor::add(&crate::tensor::vecmat(x, w).unwrap(), bias).unwrap()
        };
        let h1 = crate::tensor::relu(&lin(&cat, params.expect("rs.head.source.w1"), params.expect("rs.head.source.b1")));
        let h2 = crate::tensor::relu(&lin(&h1, params.expect("rs.head.source.w2"), params.expect("rs.head.source.b2")));
        let want = lin(&h2, params.expect("rs.head.source.w3"), params.expect("rs.head.source.b3"));
        for (a, b) in g.value(y).data().iter().zip(want.data().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn frozen_branches_survive_optimizer_steps_bit_for_bit() {
        let (enc, mut params) = tiny();
        freeze_encoders(&mut params);
        freeze_encoders(&mut params); // double freeze is a no-op
        let before: Vec<(String, Tensor)> = params
            .iter()
            .filter(|(n, _)| n.starts_with("rs.rhythm.") || n.starts_with("rs.source."))
            .map(|(n, t)| (n.clone(), t.clone()))
            .collect();

        // run a real training step against a random target
        let mut adam = AdamState::new(0.01);
        for _ in 0..3 {
            params.zero_grads();
            let mut g = Graph::new();
            let mut b = Binder::new(&params, true);
            let (yr, _) = enc
                .forward_clip(&mut g, &mut b, &seeded(&[4, 5], 7), &seeded(&[3, 3], 8))
                .unwrap();
            let target = g.input(seeded(&[4], 9));
            let loss = g.mse(yr, target).unwrap();
            g.backward(loss).unwrap();
            let snapshot = params.clone();
            let mut sink = snapshot.clone();
            sink.zero_grads();
            b.accumulate_into(&g, &mut sink).unwrap();
            params = sink;
            adam_step(&mut params, &mut adam, 0.01).unwrap();
        }
        for (name, tensor) in before {
            assert_eq!(params.expect(&name), &tensor, "{} changed while frozen", name);
        }
        // the head did move
        assert!(params.grad("rs.head.rhythm.w1").unwrap().max_abs() > 0.0);
    }

    #[test]
    fn frozen_forward_equals_unfrozen_forward() {
        let (enc, mut params) = tiny();
        let vis = seeded(&[4, 5], 10);
        let aud = seeded(&[3, 3], 11);
        let before = enc.pooled_features(&params, &vis, &aud).unwrap();
        freeze_encoders(&mut params);
        let after = enc.pooled_features(&params, &vis, &aud).unwrap();
        assert_eq!(before, after);
    }
}
