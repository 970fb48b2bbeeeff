//! Named parameter storage, Adam, the epoch-halving learning-rate schedule,
//! and deterministic weight initialization.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{AmuseError, Result};
use crate::tensor::Tensor;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Named parameters with paired gradient slots of identical shape.
///
/// Iteration order is the name order (BTreeMap), so reductions and updates
/// are deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    params: BTreeMap<String, Tensor>,
    grads: BTreeMap<String, Tensor>,
    frozen: BTreeSet<String>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        let name = name.into();
        self.grads.insert(name.clone(), Tensor::zeros(t.shape()));
        self.params.insert(name, t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn expect(&self, name: &str) -> &Tensor {
        self.params
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter '{}'", name))
    }

    pub fn set(&mut self, name: &str, t: Tensor) {
        assert!(self.params.contains_key(name), "unknown parameter '{}'", name);
        self.params.insert(name.to_string(), t);
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor> {
        self.grads.get(name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.params.iter()
    }

    /// Adds `delta` into the gradient slot for `name`.
    pub fn accumulate_grad(&mut self, name: &str, delta: &Tensor) -> Result<()> {
        let slot = self
            .grads
            .get_mut(name)
            .ok_or_else(|| AmuseError::invalid("accumulate_grad", format!("unknown parameter '{}'", name)))?;
        if slot.shape() != delta.shape() {
            return Err(AmuseError::shapes("accumulate_grad", slot.shape(), delta.shape()));
        }
        for (s, d) in slot.data_mut().iter_mut().zip(delta.data().iter()) {
            *s += d;
        }
        Ok(())
    }

    pub fn scale_grads(&mut self, c: f64) {
        for g in self.grads.values_mut() {
            for v in g.data_mut() {
                *v *= c;
            }
        }
    }

    pub fn zero_grads(&mut self) {
        for g in self.grads.values_mut() {
            for v in g.data_mut() {
                *v = 0.0;
            }
        }
    }

    /// Marks every parameter whose name starts with `prefix` as frozen:
    /// untouched by optimizer steps from now on.
    pub fn freeze_prefix(&mut self, prefix: &str) {
        let names: Vec<String> = self
            .params
            .keys()
            .filter(|n| n.starts_with(prefix))
            .cloned()
            .collect();
        self.frozen.extend(names);
    }

    pub fn is_frozen(&self, name: &str) -> bool {
        self.frozen.contains(name)
    }

    pub fn frozen_names(&self) -> impl Iterator<Item = &String> {
        self.frozen.iter()
    }

    pub fn set_frozen(&mut self, names: impl IntoIterator<Item = String>) {
        self.frozen = names.into_iter().collect();
    }
}

/// Adam moments plus the training counters serialized into checkpoints.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
    pub step: u64,
    pub base_lr: f64,
    pub epoch: u64,
}

impl AdamState {
    pub fn new(base_lr: f64) -> Self {
        AdamState {
            m: BTreeMap::new(),
            v: BTreeMap::new(),
            step: 0,
            base_lr,
            epoch: 0,
        }
    }

    pub fn moments(&self, name: &str) -> Option<(&Tensor, &Tensor)> {
        Some((self.m.get(name)?, self.v.get(name)?))
    }

    pub fn set_moments(&mut self, name: &str, m: Tensor, v: Tensor) {
        self.m.insert(name.to_string(), m);
        self.v.insert(name.to_string(), v);
    }

    pub fn moment_names(&self) -> impl Iterator<Item = &String> {
        self.m.keys()
    }
}

/// One Adam update over every unfrozen parameter, at learning rate `lr`.
///
/// Non-finite gradients abort with the offending parameter named.
pub fn adam_step(params: &mut ParamSet, state: &mut AdamState, lr: f64) -> Result<()> {
    state.step += 1;
    let t = state.step;
    let bc1 = 1.0 - ADAM_BETA1.powi(t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(t as i32);
    let names: Vec<String> = params.names().cloned().collect();
    for name in names {
        if params.is_frozen(&name) {
            continue;
        }
        let grad = params.grad(&name).expect("grad slot").clone();
        if !grad.all_finite() {
            return Err(AmuseError::NanGradient {
                param: name,
                step: t,
            });
        }
        let shape = grad.shape().to_vec();
        let m = state
            .m
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(&shape));
        for (mi, gi) in m.data_mut().iter_mut().zip(grad.data().iter()) {
            *mi = ADAM_BETA1 * *mi + (1.0 - ADAM_BETA1) * gi;
        }
        let m = state.m.get(&name).unwrap().clone();
        let v = state
            .v
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(&shape));
        for (vi, gi) in v.data_mut().iter_mut().zip(grad.data().iter()) {
            *vi = ADAM_BETA2 * *vi + (1.0 - ADAM_BETA2) * gi * gi;
        }
        let v = state.v.get(&name).unwrap();
        let param = params.params.get_mut(&name).expect("param");
        for ((p, mi), vi) in param.data_mut().iter_mut().zip(m.data()).zip(v.data()) {
            let mhat = mi / bc1;
            let vhat = vi / bc2;
            *p -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

/// Base learning rate halved every five epochs.
pub fn lr_at_epoch(base_lr: f64, epoch: i64) -> Result<f64> {
    if epoch < 0 {
        return Err(AmuseError::invalid("lr_at_epoch", format!("negative epoch {}", epoch)));
    }
    Ok(base_lr * 0.5f64.powi((epoch / 5) as i32))
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// 32-bit content hash used to pin vocabularies inside checkpoints.
pub fn fnv1a32(bytes: &[u8]) -> u32 {
    let mut h: u32 = 0x811c9dc5;
    for &b in bytes {
        h ^= b as u32;
        h = h.wrapping_mul(0x01000193);
    }
    h
}

/// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) from a stream derived from the
/// parameter name, so initialization does not depend on creation order.
pub fn init_uniform(name: &str, shape: &[usize], fan_in: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(name.as_bytes()));
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let len: usize = shape.iter().product();
    let data = (0..len).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("init shape")
}
