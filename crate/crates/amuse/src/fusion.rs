//! Fusion head: the question representation attends over the seven module
//! output vectors through a single cross-modal attention layer; the attended
//! vector feeds a linear answer classifier, and the attention weights double
//! as per-module importance scores.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::encoder::Binder;
use crate::error::{AmuseError, Result};
use crate::graph::{Graph, Value};
use crate::optim::{init_uniform, ParamSet};
use crate::tensor::Tensor;

/// Fixed module order; importance scores index into it.
pub const MODULE_NAMES: [&str; 7] = [
    "xmodal-visual",
    "xmodal-audio",
    "rhythm-visual",
    "rhythm-audio",
    "source-visual",
    "source-audio",
    "roi",
];

/// Ordered answer vocabulary: yes/no, counts 0-8, the instrument classes,
/// and the localization/tie tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerSpace {
    tokens: Vec<String>,
}

impl AnswerSpace {
    pub fn build(instruments: &[String]) -> Self {
        let mut tokens: Vec<String> = vec!["yes".into(), "no".into()];
        tokens.extend((0..=8).map(|n| n.to_string()));
        tokens.extend(instruments.iter().cloned());
        tokens.extend(["left".into(), "right".into(), "simultaneous".into()]);
        AnswerSpace { tokens }
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        AnswerSpace { tokens }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.tokens.iter().position(|t| t == token)
    }

    pub fn token(&self, idx: usize) -> &str {
        &self.tokens[idx]
    }
}

/// Which modules are knocked out, and whether the interactive exchange in
/// the encoder stack is disabled with them.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Ablation {
    zeroed: BTreeSet<usize>,
    pub disable_interactive: bool,
}

impl Ablation {
    pub fn none() -> Self {
        Ablation::default()
    }

    /// Parses module names: `mie`, `rhy`, `src`, `rois`.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let mut ab = Ablation::default();
        for name in names {
            match name.as_ref() {
                "mie" => {
                    ab.zeroed.insert(0);
                    ab.zeroed.insert(1);
                    ab.disable_interactive = true;
                }
                "rhy" => {
                    ab.zeroed.insert(2);
                    ab.zeroed.insert(3);
                }
                "src" => {
                    ab.zeroed.insert(4);
                    ab.zeroed.insert(5);
                }
                "rois" => {
                    ab.zeroed.insert(6);
                }
                other => {
                    return Err(AmuseError::invalid(
                        "ablate",
                        format!("unknown module '{}' (expected mie, rhy, src, rois)", other),
                    ))
                }
            }
        }
        Ok(ab)
    }

    pub fn is_zeroed(&self, slot: usize) -> bool {
        self.zeroed.contains(&slot)
    }

    pub fn is_empty(&self) -> bool {
        self.zeroed.is_empty() && !self.disable_interactive
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub d_fusion: usize,
    /// Input widths of the seven module vectors, in `MODULE_NAMES` order.
    pub module_dims: [usize; 7],
    pub d_question: usize,
    pub n_answers: usize,
}

#[derive(Debug, Clone)]
pub struct FusionHead {
    pub config: FusionConfig,
}

/// Logits plus the attention row over the module bank.
pub struct FusionOutput {
    pub logits: Value,
    pub attention: Value,
}

impl FusionHead {
    pub fn new(config: FusionConfig) -> Self {
        FusionHead { config }
    }

    pub fn init_params(&self, params: &mut ParamSet, seed: u64) {
        let c = &self.config;
        for (i, name) in MODULE_NAMES.iter().enumerate() {
            let pname = format!("fusion.proj.{}", name);
            params.insert(&pname, init_uniform(&pname, &[c.module_dims[i], c.d_fusion], c.module_dims[i], seed));
        }
        params.insert(
            "fusion.qproj",
            init_uniform("fusion.qproj", &[c.d_question, c.d_fusion], c.d_question, seed),
        );
        for w in ["wq", "wk", "wv"] {
            let name = format!("fusion.attn.{}", w);
            params.insert(&name, init_uniform(&name, &[c.d_fusion, c.d_fusion], c.d_fusion, seed));
        }
        params.insert(
            "fusion.cls.w",
            init_uniform("fusion.cls.w", &[c.d_fusion, c.n_answers], c.d_fusion, seed),
        );
        params.insert("fusion.cls.b", Tensor::zeros(&[c.n_answers]));
    }

    /// Question attends over the seven projected module vectors; the
    /// attended vector goes through the linear classifier. Ablated slots are
    /// replaced by zero vectors in the bank.
    pub fn forward(
        &self,
        g: &mut Graph,
        b: &mut Binder,
        modules: &[Value; 7],
        question_repr: Value,
        ablation: &Ablation,
    ) -> Result<FusionOutput> {
        self.forward_with_score_offset(g, b, modules, question_repr, ablation, 0.0)
    }

    /// Same as [`FusionHead::forward`] but shifts every attention score by a
    /// constant, which must not change the softmax (shift invariance).
    pub fn forward_with_score_offset(
        &self,
        g: &mut Graph,
        b: &mut Binder,
        modules: &[Value; 7],
        question_repr: Value,
        ablation: &Ablation,
        score_offset: f64,
    ) -> Result<FusionOutput> {
        let c = &self.config;
        let mut slots = Vec::with_capacity(7);
        for (i, name) in MODULE_NAMES.iter().enumerate() {
            if ablation.is_zeroed(i) {
                slots.push(g.input(Tensor::zeros(&[c.d_fusion])));
            } else {
                let proj = b.get(g, &format!("fusion.proj.{}", name));
                slots.push(g.vecmat(modules[i], proj)?);
            }
        }
        let qp = b.get(g, "fusion.qproj");
        let q = g.vecmat(question_repr, qp)?;
        let bank = g.stack_rows(&slots)?;
        let wq = b.get(g, "fusion.attn.wq");
        let wk = b.get(g, "fusion.attn.wk");
        let wv = b.get(g, "fusion.attn.wv");
        let qq = g.vecmat(q, wq)?;
        let kk = g.matmul(bank, wk)?;
        let vv = g.matmul(bank, wv)?;
        let scores = g.matvec(kk, qq)?;
        let mut scores = g.scale(scores, 1.0 / (c.d_fusion as f64).sqrt());
        if score_offset != 0.0 {
            let shift = g.input(Tensor::filled(&[7], score_offset));
            scores = g.add(scores, shift)?;
        }
        let attention = g.softmax_rows(scores)?;
        let attended = g.vecmat(attention, vv)?;
        let w = b.get(g, "fusion.cls.w");
        let bias = b.get(g, "fusion.cls.b");
        let logits = g.vecmat(attended, w)?;
        let logits = g.add(logits, bias)?;
        Ok(FusionOutput { logits, attention })
    }
}

/// Mean of per-sample attention rows, one row per question category.
/// Every row is a probability vector over `MODULE_NAMES`.
pub fn average_importance(rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    if rows.is_empty() {
        return Err(AmuseError::invalid("importance_scores", "empty evaluation set"));
    }
    let mut mean = vec![0.0; 7];
    for row in rows {
        for (m, v) in mean.iter_mut().zip(row.iter()) {
            *m += v / rows.len() as f64;
        }
    }
    Ok(mean)
}

/// Per-category importance matrix.
pub type ImportanceRows = BTreeMap<String, Vec<f64>>;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seeded(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn head_and_params(seed: u64) -> (FusionHead, ParamSet) {
        let head = FusionHead::new(FusionConfig {
            d_fusion: 6,
            module_dims: [4, 4, 3, 3, 3, 3, 5],
            d_question: 4,
            n_answers: 7,
        });
        let mut params = ParamSet::new();
        head.init_params(&mut params, seed);
        (head, params)
    }

    fn run(
        head: &FusionHead,
        params: &ParamSet,
        modules: [Tensor; 7],
        q: Tensor,
        ablation: &Ablation,
        offset: f64,
    ) -> (Tensor, Tensor) {
        let mut g = Graph::new();
        let mut b = Binder::new(params, false);
        let module_vals: Vec<Value> = modules.iter().map(|t| g.input(t.clone())).collect();
        let module_vals: [Value; 7] = module_vals.try_into().unwrap();
        let qv = g.input(q);
        let out = head
            .forward_with_score_offset(&mut g, &mut b, &module_vals, qv, ablation, offset)
            .unwrap();
        (g.value(out.logits).clone(), g.value(out.attention).clone())
    }

    fn random_modules(seed: u64) -> [Tensor; 7] {
        [
            seeded(&[4], seed),
            seeded(&[4], seed + 1),
            seeded(&[3], seed + 2),
            seeded(&[3], seed + 3),
            seeded(&[3], seed + 4),
            seeded(&[3], seed + 5),
            seeded(&[5], seed + 6),
        ]
    }

    #[test]
    fn identical_module_vectors_attend_uniformly() {
        let (head, mut params) = head_and_params(41);
        // same projected key for every slot: make all projections the same
        // shape by feeding identical vectors through identical projections
        let head2 = FusionHead::new(FusionConfig {
            d_fusion: 6,
            module_dims: [4; 7],
            d_question: 4,
            n_answers: 7,
        });
        params = ParamSet::new();
        head2.init_params(&mut params, 42);
        let shared = params.expect("fusion.proj.xmodal-visual").clone();
        for name in MODULE_NAMES {
            params.set(&format!("fusion.proj.{}", name), shared.clone());
        }
        let v = seeded(&[4], 1);
        let modules: [Tensor; 7] = std::array::from_fn(|_| v.clone());
        let (_, attn) = run(&head2, &params, modules, seeded(&[4], 2), &Ablation::none(), 0.0);
        for w in attn.data() {
            assert!((w - 1.0 / 7.0).abs() < 1e-12, "{:?}", attn);
        }
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let (head, params) = head_and_params(43);
        let (_, attn) = run(&head, &params, random_modules(10), seeded(&[4], 3), &Ablation::none(), 0.0);
        let sum: f64 = attn.data().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(attn.data().iter().all(|&w| (0.0..=1.0).contains(&w)));
    }

    #[test]
    fn scaling_one_module_drives_its_weight_up_monotonically() {
        let (head, params) = head_and_params(44);
        let q = seeded(&[4], 4);
        let mut weights = Vec::new();
        for scale in [1.0, 8.0, 64.0] {
            let mut modules = random_modules(20);
            modules[6] = crate::tensor::scale(&modules[6], scale);
            let (_, attn) = run(&head, &params, modules, q.clone(), &Ablation::none(), 0.0);
            weights.push(attn.data()[6]);
        }
        assert!(
            weights[0] < weights[1] && weights[1] < weights[2] || weights[2] > 0.99,
            "{:?}",
            weights
        );
    }

    #[test]
    fn zeroed_bank_yields_classifier_bias() {
        let (head, mut params) = head_and_params(45);
        params.set("fusion.cls.b", seeded(&[7], 5));
        let ablation = Ablation::from_names(&["mie", "rhy", "src", "rois"]).unwrap();
        let (logits, _) = run(&head, &params, random_modules(30), seeded(&[4], 6), &ablation, 0.0);
        // all-zero bank means attended = 0, so logits = bias exactly
        assert_eq!(logits, *params.expect("fusion.cls.b"));
    }

    #[test]
    fn score_shift_leaves_everything_unchanged() {
        let (head, params) = head_and_params(46);
        let modules = random_modules(40);
        let q = seeded(&[4], 7);
        let (l0, a0) = run(&head, &params, modules.clone(), q.clone(), &Ablation::none(), 0.0);
        let (l1, a1) = run(&head, &params, modules, q, &Ablation::none(), 3.5);
        assert_eq!(
            crate::tensor::argmax(l0.data()),
            crate::tensor::argmax(l1.data())
        );
        for (x, y) in a0.data().iter().zip(a1.data().iter()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_ablation_is_bit_identical_to_full() {
        let (head, params) = head_and_params(47);
        let modules = random_modules(50);
        let q = seeded(&[4], 8);
        let (l0, a0) = run(&head, &params, modules.clone(), q.clone(), &Ablation::none(), 0.0);
        let (l1, a1) = run(&head, &params, modules, q, &Ablation::from_names::<&str>(&[]).unwrap(), 0.0);
        assert_eq!(l0, l1);
        assert_eq!(a0, a1);
    }

    #[test]
    fn unknown_module_name_is_an_error() {
        let err = Ablation::from_names(&["rhy", "bogus"]).unwrap_err().to_string();
        assert!(err.contains("bogus"), "{}", err);
    }

    #[test]
    fn mie_ablation_zeroes_xmodal_slots_and_disables_exchange() {
        let ab = Ablation::from_names(&["mie"]).unwrap();
        assert!(ab.is_zeroed(0) && ab.is_zeroed(1));
        assert!(!ab.is_zeroed(2));
        assert!(ab.disable_interactive);
    }

    #[test]
    fn importance_averaging_is_convex() {
        let a = vec![0.5, 0.1, 0.1, 0.1, 0.1, 0.05, 0.05];
        let b = vec![0.1, 0.5, 0.1, 0.1, 0.1, 0.05, 0.05];
        let mean = average_importance(&[a.clone(), b.clone()]).unwrap();
        for i in 0..7 {
            assert!((mean[i] - (a[i] + b[i]) / 2.0).abs() < 1e-15);
        }
        assert!((mean.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(average_importance(&[]).is_err());
        // single sample: exactly that row
        let single = average_importance(&[a.clone()]).unwrap();
        assert_eq!(single, a);
    }

    #[test]
    fn answer_space_covers_the_synthetic_vocabulary() {
        let space = AnswerSpace::build(&["violin".into(), "flute".into()]);
        for token in ["yes", "no", "0", "8", "violin", "left", "right", "simultaneous"] {
            assert!(space.index_of(token).is_some(), "missing {}", token);
        }
        assert_eq!(space.len(), 2 + 9 + 2 + 3);
        assert_eq!(space.token(0), "yes");
    }
}
