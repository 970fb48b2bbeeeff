//! Training loops: predictor pretraining on annotation targets, full-model
//! finetuning on QA, evaluation, and importance aggregation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{ClipData, Dataset, QaItem};
use crate::encoder::Binder;
use crate::error::{AmuseError, Result};
use crate::fusion::{average_importance, Ablation};
use crate::graph::Graph;
use crate::model::AmuseModel;
use crate::optim::{adam_step, lr_at_epoch, AdamState, ParamSet};
use crate::predictors::{freeze_encoders, RsEncoders};
use crate::report::{CategoryStat, EvalReport, ImportanceReport};
use crate::tensor::{argmax, Tensor};

/// One pretraining batch: both predictors forward on every clip, squared
/// error against the annotated rhythm and source targets, one Adam step.
pub fn pretrain_step(
    rs: &RsEncoders,
    params: &mut ParamSet,
    adam: &mut AdamState,
    batch: &[&ClipData],
    lr: f64,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(AmuseError::invalid("pretrain_step", "empty batch"));
    }
    let mut g = Graph::new();
    let mut binder = Binder::new(params, true);
    let mut preds_r = Vec::with_capacity(batch.len());
    let mut preds_s = Vec::with_capacity(batch.len());
    let mut targets_r = Vec::new();
    let mut targets_s = Vec::new();
    for clip in batch {
        let (yr, ys) = rs.forward_clip(&mut g, &mut binder, &clip.visual_tokens, &clip.audio_tokens)?;
        if g.value(yr).len() != clip.rhythm_target.len() {
            return Err(AmuseError::shapes(
                "pretrain_step",
                g.value(yr).shape(),
                clip.rhythm_target.shape(),
            ));
        }
        if g.value(ys).len() != clip.source_target.len() {
            return Err(AmuseError::shapes(
                "pretrain_step",
                g.value(ys).shape(),
                clip.source_target.shape(),
            ));
        }
        preds_r.push(yr);
        preds_s.push(ys);
        targets_r.extend_from_slice(clip.rhythm_target.data());
        targets_s.extend_from_slice(clip.source_target.data());
    }
    let pred_r = g.stack_rows(&preds_r)?;
    let pred_s = g.stack_rows(&preds_s)?;
    let n = batch.len();
    let tr = g.input(Tensor::new(vec![n, targets_r.len() / n], targets_r)?);
    let ts = g.input(Tensor::new(vec![n, targets_s.len() / n], targets_s)?);
    let loss_r = g.mse(pred_r, tr)?;
    let loss_s = g.mse(pred_s, ts)?;
    let loss = g.add(loss_r, loss_s)?;
    g.backward(loss)?;
    let grads = binder.into_grads(&g);
    params.zero_grads();
    for (name, grad) in &grads {
        params.accumulate_grad(name, grad)?;
    }
    adam_step(params, adam, lr)?;
    Ok(g.value(loss).item())
}

pub struct PretrainReport {
    pub step_losses: Vec<f64>,
    pub epochs: usize,
}

/// Pretrains the rhythm/source encoders and heads at a flat learning rate.
pub fn pretrain(
    rs: &RsEncoders,
    params: &mut ParamSet,
    adam: &mut AdamState,
    dataset: &Dataset,
    epochs: usize,
    batch_size: usize,
    lr: f64,
    seed: u64,
) -> Result<PretrainReport> {
    let ids: Vec<&String> = dataset.clips.keys().collect();
    let mut step_losses = Vec::new();
    for epoch in 0..epochs {
        let mut order: Vec<usize> = (0..ids.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64 + 1));
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch_size.max(1)) {
            let batch: Vec<&ClipData> = chunk.iter().map(|&i| dataset.clip(ids[i])).collect();
            let loss = pretrain_step(rs, params, adam, &batch, lr)?;
            step_losses.push(loss);
        }
        adam.epoch = epoch as u64 + 1;
        log::info!(
            "pretrain epoch {}: loss {:.6}",
            epoch,
            step_losses.last().copied().unwrap_or(f64::NAN)
        );
    }
    Ok(PretrainReport {
        step_losses,
        epochs,
    })
}

/// Freezes the four encoder branches and caches their pooled vectors on
/// every clip.
pub fn freeze_and_cache(rs: &RsEncoders, params: &mut ParamSet, dataset: &mut Dataset) -> Result<()> {
    freeze_encoders(params);
    let ids: Vec<String> = dataset.clips.keys().cloned().collect();
    for id in ids {
        let clip = dataset.clips.get(&id).expect("clip");
        let pooled = rs.pooled_features(params, &clip.visual_tokens, &clip.audio_tokens)?;
        dataset.clips.get_mut(&id).expect("clip").rs_pooled = Some(pooled);
    }
    Ok(())
}

/// One finetuning batch: cross-entropy over answer logits, one Adam step on
/// the unfrozen parameters at the given learning rate.
pub fn finetune_step(
    model: &AmuseModel,
    params: &mut ParamSet,
    adam: &mut AdamState,
    dataset: &Dataset,
    batch: &[&QaItem],
    ablation: &Ablation,
    lr: f64,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(AmuseError::invalid("finetune_step", "empty batch"));
    }
    let mut g = Graph::new();
    let mut binder = Binder::new(params, true);
    let mut logits = Vec::with_capacity(batch.len());
    let mut targets = Vec::with_capacity(batch.len());
    for item in batch {
        let out = model.forward_qa(&mut g, &mut binder, dataset.clip(&item.clip), item, ablation)?;
        logits.push(out.logits);
        targets.push(item.answer_idx);
    }
    let stacked = g.stack_rows(&logits)?;
    let loss = g.cross_entropy_mean(stacked, &targets)?;
    g.backward(loss)?;
    let grads = binder.into_grads(&g);
    params.zero_grads();
    for (name, grad) in &grads {
        params.accumulate_grad(name, grad)?;
    }
    adam_step(params, adam, lr)?;
    Ok(g.value(loss).item())
}

pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub lr_trace: Vec<f64>,
}

/// Full finetuning run under the halving schedule. `adam.epoch` tracks the
/// current epoch so resumed runs continue the schedule correctly.
pub fn finetune(
    model: &AmuseModel,
    params: &mut ParamSet,
    adam: &mut AdamState,
    dataset: &Dataset,
    epochs: usize,
    batch_size: usize,
    seed: u64,
    ablation: &Ablation,
) -> Result<TrainReport> {
    let mut epoch_losses = Vec::new();
    let mut lr_trace = Vec::new();
    for epoch in 0..epochs {
        adam.epoch = epoch as u64;
        let lr = lr_at_epoch(adam.base_lr, epoch as i64)?;
        lr_trace.push(lr);
        let mut order: Vec<usize> = (0..dataset.qa.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xF1E7 ^ (epoch as u64) << 8);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut steps = 0;
        for chunk in order.chunks(batch_size.max(1)) {
            let batch: Vec<&QaItem> = chunk.iter().map(|&i| &dataset.qa[i]).collect();
            epoch_loss += finetune_step(model, params, adam, dataset, &batch, ablation, lr)?;
            steps += 1;
        }
        adam.epoch = epoch as u64 + 1;
        let mean = epoch_loss / steps.max(1) as f64;
        epoch_losses.push(mean);
        log::info!("finetune epoch {}: lr {:.2e}, loss {:.5}", epoch, lr, mean);
    }
    Ok(TrainReport {
        epoch_losses,
        lr_trace,
    })
}

fn eval_forward(
    model: &AmuseModel,
    params: &ParamSet,
    dataset: &Dataset,
    item: &QaItem,
    ablation: &Ablation,
) -> Result<(usize, Vec<f64>)> {
    let mut g = Graph::new();
    let mut binder = Binder::new(params, false);
    let out = model.forward_qa(&mut g, &mut binder, dataset.clip(&item.clip), item, ablation)?;
    Ok((
        argmax(g.value(out.logits).data()),
        g.value(out.attention).data().to_vec(),
    ))
}

/// Accuracy per question category and overall.
pub fn evaluate(
    model: &AmuseModel,
    params: &ParamSet,
    dataset: &Dataset,
    ablation: &Ablation,
) -> Result<EvalReport> {
    let mut per: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut correct_all = 0;
    for item in &dataset.qa {
        let (pred, _) = eval_forward(model, params, dataset, item, ablation)?;
        let entry = per.entry(item.category.name().to_string()).or_insert((0, 0));
        entry.1 += 1;
        if pred == item.answer_idx {
            entry.0 += 1;
            correct_all += 1;
        }
    }
    let per_category = per
        .into_iter()
        .map(|(k, (c, t))| (k, CategoryStat::new(c, t)))
        .collect();
    Ok(EvalReport {
        per_category,
        overall: CategoryStat::new(correct_all, dataset.qa.len()),
    })
}

/// Mean attention row per question category, in module-bank order.
pub fn importance(model: &AmuseModel, params: &ParamSet, dataset: &Dataset) -> Result<ImportanceReport> {
    let mut rows: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    for item in &dataset.qa {
        let (_, attention) = eval_forward(model, params, dataset, item, &Ablation::none())?;
        rows.entry(item.category.name().to_string()).or_default().push(attention);
    }
    let mut averaged = BTreeMap::new();
    for (category, samples) in rows {
        averaged.insert(category, average_importance(&samples)?);
    }
    Ok(ImportanceReport::new(averaged))
}
