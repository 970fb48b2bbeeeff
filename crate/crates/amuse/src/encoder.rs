//! Three toy modality encoders (visual, audio, language) that exchange
//! attended tokens through cross-modal adapters at fixed block boundaries.
//!
//! Each encoder is a stack of pre-norm transformer blocks (single-head
//! self-attention plus a ReLU feed-forward). Every `injection_period` blocks
//! all six directed cross-modal attentions fire and each modality folds the
//! two adapted streams back into its tokens as a residual sum. A key/value
//! sequence whose width differs from the query modality is first passed
//! through a learned linear projection.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::{Graph, Value};
use crate::optim::{init_uniform, ParamSet};
use crate::tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Binds named parameters into a graph, once each, and reads gradients back.
///
/// Frozen parameters and eval-mode binds enter as constants, so backward
/// never touches them.
pub struct Binder<'a> {
    params: &'a ParamSet,
    bound: BTreeMap<String, Value>,
    train: bool,
}

impl<'a> Binder<'a> {
    pub fn new(params: &'a ParamSet, train: bool) -> Self {
        Binder {
            params,
            bound: BTreeMap::new(),
            train,
        }
    }

    pub fn get(&mut self, g: &mut Graph, name: &str) -> Value {
        if let Some(v) = self.bound.get(name) {
            return *v;
        }
        let tensor = self.params.expect(name).clone();
        let v = if self.train && !self.params.is_frozen(name) {
            g.param(tensor)
        } else {
            g.input(tensor)
        };
        self.bound.insert(name.to_string(), v);
        v
    }

    /// Accumulates every bound parameter's gradient into `sink`.
    pub fn accumulate_into(&self, g: &Graph, sink: &mut ParamSet) -> Result<()> {
        for (name, v) in &self.bound {
            if self.train && !self.params.is_frozen(name) {
                sink.accumulate_grad(name, &g.grad(*v))?;
            }
        }
        Ok(())
    }

    /// Consumes the binder and returns owned (name, gradient) pairs, ending
    /// the borrow of the parameter set so the caller can update it.
    pub fn into_grads(self, g: &Graph) -> Vec<(String, Tensor)> {
        let Binder { params, bound, train } = self;
        bound
            .into_iter()
            .filter(|(name, _)| train && !params.is_frozen(name))
            .map(|(name, v)| (name, g.grad(v)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub d_visual: usize,
    pub d_audio: usize,
    pub d_lang: usize,
    pub blocks_visual: usize,
    pub blocks_audio: usize,
    pub blocks_lang: usize,
    /// Adapters fire after every this-many blocks.
    pub injection_period: usize,
    pub adapter_hidden: usize,
    pub ffn_mult: usize,
    /// When false, only the last boundary exchanges tokens.
    pub fuse_every_boundary: bool,
    pub visual_input_dim: usize,
    pub audio_input_dim: usize,
    pub vocab_size: usize,
    pub max_tokens: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
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
            visual_input_dim: 192,
            audio_input_dim: 32,
            vocab_size: 64,
            max_tokens: 64,
        }
    }
}

impl EncoderConfig {
    fn width(&self, m: Modality) -> usize {
        match m {
            Modality::Visual => self.d_visual,
            Modality::Audio => self.d_audio,
            Modality::Lang => self.d_lang,
        }
    }

    fn blocks(&self, m: Modality) -> usize {
        match m {
            Modality::Visual => self.blocks_visual,
            Modality::Audio => self.blocks_audio,
            Modality::Lang => self.blocks_lang,
        }
    }

    /// Boundary steps at which adapters fire.
    pub fn boundaries(&self) -> Vec<usize> {
        let max = self.blocks_visual.max(self.blocks_audio).max(self.blocks_lang);
        let all: Vec<usize> = (1..=max).filter(|i| i % self.injection_period == 0).collect();
        if self.fuse_every_boundary {
            all
        } else {
            all.last().map(|&b| vec![b]).unwrap_or_default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Visual,
    Audio,
    Lang,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Visual, Modality::Audio, Modality::Lang];

    fn tag(&self) -> &'static str {
        match self {
            Modality::Visual => "visual",
            Modality::Audio => "audio",
            Modality::Lang => "lang",
        }
    }
}

/// The six directed adapter routes (query, key/value).
pub const ROUTES: [(Modality, Modality, &str); 6] = [
    (Modality::Visual, Modality::Audio, "va"),
    (Modality::Visual, Modality::Lang, "vl"),
    (Modality::Audio, Modality::Visual, "av"),
    (Modality::Audio, Modality::Lang, "al"),
    (Modality::Lang, Modality::Visual, "lv"),
    (Modality::Lang, Modality::Audio, "la"),
];

fn init_linear(params: &mut ParamSet, name: &str, rows: usize, cols: usize, seed: u64) {
    params.insert(name, init_uniform(name, &[rows, cols], rows, seed));
}

pub(crate) fn init_block_params(params: &mut ParamSet, prefix: &str, d: usize, h: usize, seed: u64) {
    params.insert(format!("{}.ln1.gamma", prefix), Tensor::filled(&[d], 1.0));
    params.insert(format!("{}.ln1.beta", prefix), Tensor::zeros(&[d]));
    init_linear(params, &format!("{}.attn.wq", prefix), d, d, seed);
    init_linear(params, &format!("{}.attn.wk", prefix), d, d, seed);
    init_linear(params, &format!("{}.attn.wv", prefix), d, d, seed);
    params.insert(format!("{}.ln2.gamma", prefix), Tensor::filled(&[d], 1.0));
    params.insert(format!("{}.ln2.beta", prefix), Tensor::zeros(&[d]));
    init_linear(params, &format!("{}.ffn.w1", prefix), d, h, seed);
    params.insert(format!("{}.ffn.b1", prefix), Tensor::zeros(&[h]));
    init_linear(params, &format!("{}.ffn.w2", prefix), h, d, seed);
    params.insert(format!("{}.ffn.b2", prefix), Tensor::zeros(&[d]));
}

/// Pre-norm block: x + attn(ln(x)), then x + ffn(ln(x)).
pub fn block_forward(g: &mut Graph, b: &mut Binder, prefix: &str, x: Value, d: usize) -> Result<Value> {
    let g1 = b.get(g, &format!("{}.ln1.gamma", prefix));
    let b1 = b.get(g, &format!("{}.ln1.beta", prefix));
    let n1 = g.layer_norm(x, g1, b1, LAYER_NORM_EPS)?;
    let wq = b.get(g, &format!("{}.attn.wq", prefix));
    let wk = b.get(g, &format!("{}.attn.wk", prefix));
    let wv = b.get(g, &format!("{}.attn.wv", prefix));
    let q = g.matmul(n1, wq)?;
    let k = g.matmul(n1, wk)?;
    let v = g.matmul(n1, wv)?;
    let kt = g.transpose(k)?;
    let s = g.matmul(q, kt)?;
    let s = g.scale(s, 1.0 / (d as f64).sqrt());
    let a = g.softmax_rows(s)?;
    let o = g.matmul(a, v)?;
    let x1 = g.add(x, o)?;

    let g2 = b.get(g, &format!("{}.ln2.gamma", prefix));
    let b2 = b.get(g, &format!("{}.ln2.beta", prefix));
    let n2 = g.layer_norm(x1, g2, b2, LAYER_NORM_EPS)?;
    let w1 = b.get(g, &format!("{}.ffn.w1", prefix));
    let bb1 = b.get(g, &format!("{}.ffn.b1", prefix));
    let w2 = b.get(g, &format!("{}.ffn.w2", prefix));
    let bb2 = b.get(g, &format!("{}.ffn.b2", prefix));
    let h1 = g.matmul(n2, w1)?;
    let h1 = g.add_row(h1, bb1)?;
    let h1 = g.relu(h1);
    let f = g.matmul(h1, w2)?;
    let f = g.add_row(f, bb2)?;
    g.add(x1, f)
}

fn init_adapter(params: &mut ParamSet, prefix: &str, dq: usize, dk: usize, h: usize, seed: u64) {
    if dk != dq {
        init_linear(params, &format!("{}.proj", prefix), dk, dq, seed);
    }
    init_linear(params, &format!("{}.wq", prefix), dq, dq, seed);
    init_linear(params, &format!("{}.wk", prefix), dq, dq, seed);
    init_linear(params, &format!("{}.wv", prefix), dq, dq, seed);
    init_linear(params, &format!("{}.w1", prefix), dq, h, seed);
    params.insert(format!("{}.b1", prefix), Tensor::zeros(&[h]));
    init_linear(params, &format!("{}.w2", prefix), h, dq, seed);
    params.insert(format!("{}.b2", prefix), Tensor::zeros(&[dq]));
}

/// Projects the key/value sequence to the query's width when needed; a
/// matching width passes through untouched.
pub fn dimension_project(
    g: &mut Graph,
    b: &mut Binder,
    prefix: &str,
    xkv: Value,
    dk: usize,
    dq: usize,
) -> Result<Value> {
    if dk == dq {
        Ok(xkv)
    } else {
        let proj = b.get(g, &format!("{}.proj", prefix));
        g.matmul(xkv, proj)
    }
}

/// Scaled dot-product attention of the query tokens over the (projected)
/// key/value tokens: softmax(Q K^T / sqrt(d)) V.
pub fn cross_modal_attention(
    g: &mut Graph,
    b: &mut Binder,
    prefix: &str,
    xq: Value,
    xkv: Value,
    dq: usize,
) -> Result<Value> {
    let wq = b.get(g, &format!("{}.wq", prefix));
    let wk = b.get(g, &format!("{}.wk", prefix));
    let wv = b.get(g, &format!("{}.wv", prefix));
    let q = g.matmul(xq, wq)?;
    let k = g.matmul(xkv, wk)?;
    let v = g.matmul(xkv, wv)?;
    let kt = g.transpose(k)?;
    let s = g.matmul(q, kt)?;
    let s = g.scale(s, 1.0 / (dq as f64).sqrt());
    let a = g.softmax_rows(s)?;
    g.matmul(a, v)
}

/// Two-layer projection with ReLU that carries attended tokens into the next
/// block: relu(A W1 + b1) W2 + b2.
pub fn adapter_forward(g: &mut Graph, b: &mut Binder, prefix: &str, attended: Value) -> Result<Value> {
    let w1 = b.get(g, &format!("{}.w1", prefix));
    let b1 = b.get(g, &format!("{}.b1", prefix));
    let w2 = b.get(g, &format!("{}.w2", prefix));
    let b2 = b.get(g, &format!("{}.b2", prefix));
    let h = g.matmul(attended, w1)?;
    let h = g.add_row(h, b1)?;
    let h = g.relu(h);
    let z = g.matmul(h, w2)?;
    g.add_row(z, b2)
}

/// Residual fusion of a modality's own tokens with its two adapted streams.
pub fn fuse(g: &mut Graph, own: Value, z_a: Value, z_b: Value) -> Result<Value> {
    let s = g.add(own, z_a)?;
    g.add(s, z_b)
}

/// Interactive three-encoder stack.
#[derive(Debug, Clone)]
pub struct EncoderStack {
    pub config: EncoderConfig,
}

impl EncoderStack {
    pub fn new(config: EncoderConfig) -> Self {
        EncoderStack { config }
    }

    fn embed_prefix(m: Modality) -> String {
        format!("xmodal.{}.embed", m.tag())
    }

    fn block_prefix(m: Modality, i: usize) -> String {
        format!("xmodal.{}.block{}", m.tag(), i)
    }

    fn adapter_prefix(boundary: usize, route: &str) -> String {
        format!("xmodal.adapt{}.{}", boundary, route)
    }

    pub fn init_params(&self, params: &mut ParamSet, seed: u64) {
        let c = &self.config;
        // token embedders + learned positions
        let ve = Self::embed_prefix(Modality::Visual);
        init_linear(params, &format!("{}.w", ve), c.visual_input_dim, c.d_visual, seed);
        params.insert(
            format!("{}.pos", ve),
            init_uniform(&format!("{}.pos", ve), &[c.max_tokens, c.d_visual], c.d_visual, seed),
        );
        let ae = Self::embed_prefix(Modality::Audio);
        init_linear(params, &format!("{}.w", ae), c.audio_input_dim, c.d_audio, seed);
        params.insert(
            format!("{}.pos", ae),
            init_uniform(&format!("{}.pos", ae), &[c.max_tokens, c.d_audio], c.d_audio, seed),
        );
        let le = Self::embed_prefix(Modality::Lang);
        params.insert(
            format!("{}.words", le),
            init_uniform(&format!("{}.words", le), &[c.vocab_size, c.d_lang], c.d_lang, seed),
        );
        params.insert(
            format!("{}.pos", le),
            init_uniform(&format!("{}.pos", le), &[c.max_tokens, c.d_lang], c.d_lang, seed),
        );
        for m in Modality::ALL {
            let d = c.width(m);
            for i in 0..c.blocks(m) {
                init_block_params(params, &Self::block_prefix(m, i), d, d * c.ffn_mult, seed);
            }
        }
        for &b in &self.config.boundaries() {
            for (mq, mkv, route) in ROUTES {
                init_adapter(
                    params,
                    &Self::adapter_prefix(b, route),
                    c.width(mq),
                    c.width(mkv),
                    c.adapter_hidden,
                    seed,
                );
            }
        }
    }

    fn embed_visual(&self, g: &mut Graph, b: &mut Binder, feats: &Tensor) -> Result<Value> {
        let prefix = Self::embed_prefix(Modality::Visual);
        let x = g.input(feats.clone());
        let w = b.get(g, &format!("{}.w", prefix));
        let e = g.matmul(x, w)?;
        let pos = b.get(g, &format!("{}.pos", prefix));
        let idx: Vec<usize> = (0..feats.shape()[0]).collect();
        let p = g.gather_rows(pos, &idx)?;
        g.add(e, p)
    }

    fn embed_audio(&self, g: &mut Graph, b: &mut Binder, feats: &Tensor) -> Result<Value> {
        let prefix = Self::embed_prefix(Modality::Audio);
        let x = g.input(feats.clone());
        let w = b.get(g, &format!("{}.w", prefix));
        let e = g.matmul(x, w)?;
        let pos = b.get(g, &format!("{}.pos", prefix));
        let idx: Vec<usize> = (0..feats.shape()[0]).collect();
        let p = g.gather_rows(pos, &idx)?;
        g.add(e, p)
    }

    fn embed_lang(&self, g: &mut Graph, b: &mut Binder, tokens: &[usize]) -> Result<Value> {
        let prefix = Self::embed_prefix(Modality::Lang);
        let words = b.get(g, &format!("{}.words", prefix));
        let e = g.gather_rows(words, tokens)?;
        let pos = b.get(g, &format!("{}.pos", prefix));
        let idx: Vec<usize> = (0..tokens.len()).collect();
        let p = g.gather_rows(pos, &idx)?;
        g.add(e, p)
    }

    /// Runs the three block lists in lockstep. At each injection boundary all
    /// six directed attentions are computed from the pre-boundary states and
    /// each modality fuses its two adapted streams. With `interactive` off
    /// the boundaries are skipped entirely and the encoders run separately.
    pub fn forward(
        &self,
        g: &mut Graph,
        b: &mut Binder,
        visual_feats: &Tensor,
        audio_feats: &Tensor,
        lang_tokens: &[usize],
        interactive: bool,
    ) -> Result<(Value, Value, Value)> {
        let c = self.config.clone();
        if visual_feats.shape()[0] == 0 || audio_feats.shape()[0] == 0 || lang_tokens.is_empty() {
            return Err(crate::error::AmuseError::invalid("encoder_forward", "empty token sequence"));
        }
        let mut state = BTreeMap::new();
        state.insert(Modality::Visual.tag(), self.embed_visual(g, b, visual_feats)?);
        state.insert(Modality::Audio.tag(), self.embed_audio(g, b, audio_feats)?);
        state.insert(Modality::Lang.tag(), self.embed_lang(g, b, lang_tokens)?);

        let boundaries = c.boundaries();
        let max_blocks = c.blocks_visual.max(c.blocks_audio).max(c.blocks_lang);
        for step in 1..=max_blocks {
            for m in Modality::ALL {
                if step <= c.blocks(m) {
                    let x = state[m.tag()];
                    let out = block_forward(g, b, &Self::block_prefix(m, step - 1), x, c.width(m))?;
                    state.insert(m.tag(), out);
                }
            }
            if interactive && boundaries.contains(&step) {
                // all six attentions read the same pre-exchange snapshot
                let snapshot = state.clone();
                let mut adapted: BTreeMap<&str, Vec<Value>> = BTreeMap::new();
                for (mq, mkv, route) in ROUTES {
                    let prefix = Self::adapter_prefix(step, route);
                    let xq = snapshot[mq.tag()];
                    let xkv = snapshot[mkv.tag()];
                    let projected =
                        dimension_project(g, b, &prefix, xkv, c.width(mkv), c.width(mq))?;
                    let attended = cross_modal_attention(g, b, &prefix, xq, projected, c.width(mq))?;
                    let z = adapter_forward(g, b, &prefix, attended)?;
                    adapted.entry(mq.tag()).or_default().push(z);
                }
                for m in Modality::ALL {
                    let zs = &adapted[m.tag()];
                    let fused = fuse(g, snapshot[m.tag()], zs[0], zs[1])?;
                    state.insert(m.tag(), fused);
                }
            }
        }
        Ok((
            state[Modality::Visual.tag()],
            state[Modality::Audio.tag()],
            state[Modality::Lang.tag()],
        ))
    }

    /// Zeroes every adapter parameter in place. Used by tests to check that
    /// the interactive stack then collapses to three independent encoders.
    pub fn zero_adapters(&self, params: &mut ParamSet) {
        let names: Vec<String> = params
            .names()
            .filter(|n| n.starts_with("xmodal.adapt"))
            .cloned()
            .collect();
        for name in names {
            let shape = params.expect(&name).shape().to_vec();
            params.set(&name, Tensor::zeros(&shape));
        }
    }
}
