//! Multi-task optimization with early stopping on validation NDCG.

use std::collections::BTreeSet;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{DatasetSplit, Interaction, InteractionLog, ItemId};
use crate::error::{HcrError, Result};
use crate::eval::validation_ndcg;
use crate::inference::{ModelScorer, ScoreVariant};
use crate::model::{EmbeddingTable, GradientBuffer, HcrModel, ModelMode, Parameters};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Weight of the like task.
    pub beta: f64,
    pub learning_rate: f64,
    /// L2 penalty coefficient, see [`add_l2_gradient`].
    pub l2: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Cutoff of the validation NDCG used for early stopping.
    pub eval_k: usize,
    pub seed: u64,
    pub mode: ModelMode,
    pub embed_dim: usize,
    pub share_embeddings: bool,
    pub exposure_factor: bool,
    /// Uniform negatives per record for the click task; 0 disables.
    pub negative_sampling_ratio: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            learning_rate: 0.01,
            l2: 1e-2,
            batch_size: 1024,
            max_epochs: 200,
            patience: 10,
            eval_k: 50,
            seed: 0,
            mode: ModelMode::Hcr,
            embed_dim: 8,
            share_embeddings: true,
            exposure_factor: false,
            negative_sampling_ratio: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HcrError::InvalidArgument(m.to_string()));
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta must be >= 0");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad("l2 must be >= 0");
        }
        if self.batch_size == 0 || self.patience == 0 || self.eval_k == 0 || self.embed_dim == 0 {
            return bad("batch_size, patience, eval_k and embed_dim must be positive");
        }
        Ok(())
    }

    /// Model shape this config trains on a given split.
    pub fn model_config(&self, num_users: usize, num_items: usize) -> crate::model::ModelConfig {
        crate::model::ModelConfig {
            num_users,
            num_items,
            embed_dim: self.embed_dim,
            share_embeddings: self.share_embeddings,
            exposure_factor: self.exposure_factor && self.mode == ModelMode::Hcr,
            mode: self.mode,
        }
    }

    fn scoring_variant(&self) -> ScoreVariant {
        match self.mode {
            ModelMode::Hcr => ScoreVariant::Hcr,
            ModelMode::Ct => ScoreVariant::Ct,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Batches {
    pub click: Vec<Vec<Interaction>>,
    pub like: Vec<Vec<Interaction>>,
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    rng
}

/// Shuffled click batches over every train record and like batches over
/// the clicked records. Order depends only on `(seed, epoch)`.
pub fn make_batches(train: &InteractionLog, batch_size: usize, seed: u64, epoch: usize) -> Result<Batches> {
    make_batches_with_negatives(train, batch_size, seed, epoch, 0, None)
}

fn make_batches_with_negatives(
    train: &InteractionLog,
    batch_size: usize,
    seed: u64,
    epoch: usize,
    negatives_per_record: usize,
    seen: Option<&[BTreeSet<ItemId>]>,
) -> Result<Batches> {
    if train.is_empty() {
        return Err(HcrError::EmptyLog);
    }
    if batch_size == 0 {
        return Err(HcrError::InvalidArgument("batch_size must be positive".into()));
    }
    let mut rng = epoch_rng(seed, epoch);
    let mut clicks: Vec<Interaction> = train.interactions().to_vec();
    let mut likes: Vec<Interaction> = clicks.iter().copied().filter(|r| r.click).collect();
    if likes.is_empty() {
        return Err(HcrError::NoClickedRecords);
    }
    if negatives_per_record > 0 {
        let num_items = train.num_items() as u32;
        let mut extra = Vec::with_capacity(clicks.len() * negatives_per_record);
        for r in &clicks {
            let user_seen = seen.map(|s| &s[r.user.index()]);
            for _ in 0..negatives_per_record {
                // A user who has seen every item gets no negatives.
                if user_seen.is_some_and(|s| s.len() >= num_items as usize) {
                    break;
                }
                let item = loop {
                    let candidate = ItemId(rng.random_range(0..num_items));
                    if !user_seen.is_some_and(|s| s.contains(&candidate)) {
                        break candidate;
                    }
                };
                extra.push(Interaction { item, click: false, like: false, ..*r });
            }
        }
        clicks.extend(extra);
    }
    clicks.shuffle(&mut rng);
    likes.shuffle(&mut rng);
    Ok(Batches {
        click: clicks.chunks(batch_size).map(<[Interaction]>::to_vec).collect(),
        like: likes.chunks(batch_size).map(<[Interaction]>::to_vec).collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_metric: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub per_epoch: Vec<EpochRecord>,
    /// 1-based epoch of the returned checkpoint; 0 when no epoch ran.
    pub best_epoch: usize,
    /// True when validation had no items and selection fell back to
    /// the negated train loss.
    pub loss_selected: bool,
}

impl TrainHistory {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.per_epoch.iter().find(|r| r.epoch == self.best_epoch)
    }

    /// One line per epoch: `epoch=<n> loss=<x> valid_ndcg@<K>=<y>`.
    pub fn log_lines(&self, k: usize) -> String {
        self.per_epoch
            .iter()
            .map(|r| format!("epoch={} loss={:.6} valid_ndcg@{k}={:.6}\n", r.epoch, r.train_loss, r.validation_metric))
            .collect()
    }
}

/// Adam with the canonical moment coefficients.
pub struct Adam {
    learning_rate: f64,
    first: Parameters,
    second: Parameters,
    steps: i32,
}

impl Adam {
    pub fn new(model: &HcrModel, learning_rate: f64) -> Self {
        let zeros = GradientBuffer::zeros_like(model).0;
        Self { learning_rate, first: zeros.clone(), second: zeros, steps: 0 }
    }

    pub fn step(&mut self, model: &mut HcrModel, grads: &GradientBuffer) {
        self.steps += 1;
        let bias1 = 1.0 - ADAM_BETA1.powi(self.steps);
        let bias2 = 1.0 - ADAM_BETA2.powi(self.steps);
        let lr = self.learning_rate;
        let params = model.params.tensors_mut();
        let firsts = self.first.tensors_mut();
        let seconds = self.second.tensors_mut();
        for (((_, theta), (_, m)), ((_, v), (_, g))) in
            params.into_iter().zip(firsts).zip(seconds.into_iter().zip(grads.0.tensors()))
        {
            for k in 0..theta.len() {
                m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * g[k];
                v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * g[k] * g[k];
                let m_hat = m[k] / bias1;
                let v_hat = v[k] / bias2;
                theta[k] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
    }
}

fn decay_row(grad: &mut EmbeddingTable, param: &EmbeddingTable, row: usize, scale: f64) {
    for (g, p) in grad.row_mut(row).iter_mut().zip(param.row(row)) {
        *g += scale * p;
    }
}

/// Adds the gradient of the L2 penalty: `l2 * theta` on the head weight
/// vectors, and `l2 * row / |batch|` for every occurrence of an embedding row
/// in a batch, i.e. the penalty `l2/2 * mean ||row||^2` over the records that
/// touch it. Biases and the exposure weight are not penalized.
pub fn add_l2_gradient(
    model: &HcrModel,
    click_batch: &[Interaction],
    like_batch: &[Interaction],
    l2: f64,
    grads: &mut GradientBuffer,
) {
    if l2 == 0.0 {
        return;
    }
    let p = &model.params;
    let g = &mut grads.0;
    match model.mode() {
        ModelMode::Hcr => {
            for (gw, w) in g.click_weight.iter_mut().zip(&p.click_weight) {
                *gw += l2 * w;
            }
            for (gw, w) in g.like_weight.iter_mut().zip(&p.like_weight) {
                *gw += l2 * w;
            }
            let scale = l2 / click_batch.len().max(1) as f64;
            for r in click_batch {
                decay_row(&mut g.user_base, &p.user_base, r.user.index(), scale);
                decay_row(&mut g.item_base, &p.item_base, r.item.index(), scale);
            }
            let scale = l2 / like_batch.len().max(1) as f64;
            let share = model.config.share_embeddings;
            for r in like_batch {
                let (u, i) = (r.user.index(), r.item.index());
                if share {
                    decay_row(&mut g.user_base, &p.user_base, u, scale);
                    decay_row(&mut g.item_base, &p.item_base, i, scale);
                } else {
                    decay_row(&mut g.like_user_base, &p.like_user_base, u, scale);
                    decay_row(&mut g.like_item_base, &p.like_item_base, i, scale);
                }
                decay_row(&mut g.h2_user, &p.h2_user, u, scale);
                decay_row(&mut g.h2_item, &p.h2_item, i, scale);
            }
        }
        ModelMode::Ct => {
            let scale = l2 / like_batch.len().max(1) as f64;
            for r in like_batch {
                decay_row(&mut g.h2_user, &p.h2_user, r.user.index(), scale);
                decay_row(&mut g.h2_item, &p.h2_item, r.item.index(), scale);
            }
        }
    }
}

/// Trains until validation NDCG@K stops improving for `patience` epochs and
/// returns the best-epoch model.
pub fn train(model: HcrModel, split: &DatasetSplit, cfg: &TrainConfig) -> Result<(HcrModel, TrainHistory)> {
    cfg.validate()?;
    if model.mode() != cfg.mode {
        return Err(HcrError::InvalidArgument(format!(
            "config mode {} does not match model mode {}",
            cfg.mode,
            model.mode()
        )));
    }
    if model.config.num_users != split.num_users() || model.config.num_items != split.num_items() {
        return Err(HcrError::InvalidArgument(format!(
            "model is {}x{} but data is {}x{}",
            model.config.num_users,
            model.config.num_items,
            split.num_users(),
            split.num_items()
        )));
    }
    let mut history = TrainHistory::default();
    if cfg.max_epochs == 0 {
        return Ok((model, history));
    }
    let seen = (cfg.negative_sampling_ratio > 0).then(|| split.train.items_per_user());

    let mut current = model;
    let mut best = current.clone();
    let mut best_metric = f64::NEG_INFINITY;
    let mut since_best = 0usize;
    let mut optimizer = Adam::new(&current, cfg.learning_rate);
    let mut grads = GradientBuffer::zeros_like(&current);

    for epoch in 1..=cfg.max_epochs {
        let batches = make_batches_with_negatives(
            &split.train,
            cfg.batch_size,
            cfg.seed,
            epoch,
            cfg.negative_sampling_ratio,
            seen.as_deref(),
        )?;
        let mut loss_sum = 0.0;
        let steps = match cfg.mode {
            ModelMode::Hcr => batches.click.len(),
            ModelMode::Ct => batches.like.len(),
        };
        for step in 0..steps {
            let like = &batches.like[step % batches.like.len()];
            let click = match cfg.mode {
                ModelMode::Hcr => batches.click[step].as_slice(),
                ModelMode::Ct => &[],
            };
            let loss = current.loss_gradients(click, like, cfg.beta, &mut grads)?;
            if !loss.is_finite() {
                return Err(HcrError::Diverged { epoch, loss });
            }
            add_l2_gradient(&current, click, like, cfg.l2, &mut grads);
            optimizer.step(&mut current, &grads);
            loss_sum += loss;
        }
        let train_loss = loss_sum / steps as f64;
        if !train_loss.is_finite() || !current.params.is_finite() {
            return Err(HcrError::Diverged { epoch, loss: train_loss });
        }

        let scorer = ModelScorer::new(&current, cfg.scoring_variant())?;
        let metric = match validation_ndcg(&scorer, split, cfg.eval_k)? {
            Some(ndcg) => ndcg,
            None => {
                if !history.loss_selected {
                    warn!("validation split is empty; selecting epochs by train loss");
                }
                history.loss_selected = true;
                -train_loss
            }
        };
        history.per_epoch.push(EpochRecord { epoch, train_loss, validation_metric: metric });
        info!("epoch={epoch} loss={train_loss:.6} valid_ndcg@{}={metric:.6}", cfg.eval_k);

        if metric > best_metric {
            best_metric = metric;
            best = current.clone();
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    Ok((best, history))
}

/// Single-task baseline: like labels on clicked records, one dot-product head.
pub fn train_ct(model: HcrModel, split: &DatasetSplit, cfg: &TrainConfig) -> Result<(HcrModel, TrainHistory)> {
    if cfg.mode != ModelMode::Ct {
        return Err(HcrError::InvalidArgument("train_ct requires mode = CT".into()));
    }
    train(model, split, cfg)
}

/// Fresh model for `cfg` on `split`, then [`train`].
pub fn fit(split: &DatasetSplit, cfg: &TrainConfig, item_exposure: Option<Vec<f64>>) -> Result<(HcrModel, TrainHistory)> {
    let model_cfg = cfg.model_config(split.num_users(), split.num_items());
    let exposure = if model_cfg.exposure_factor { item_exposure } else { None };
    let model = HcrModel::init(model_cfg, exposure, cfg.seed)?;
    train(model, split, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::UserId;
    use crate::model::ModelConfig;

    fn rec(u: u32, i: u32, t: u64, click: bool, like: bool) -> Interaction {
        Interaction { user: UserId(u), item: ItemId(i), timestamp: t, click, like }
    }

    fn ten_records() -> InteractionLog {
        let recs = (0..10).map(|t| rec(0, t as u32, t, t < 4, t < 2)).collect();
        InteractionLog::new(recs, 1, 10).unwrap()
    }

    #[test]
    fn batch_counts() {
        let b = make_batches(&ten_records(), 2, 1, 1).unwrap();
        assert_eq!(b.click.len(), 5);
        assert_eq!(b.like.len(), 2);
        assert!(b.like.iter().flatten().all(|r| r.click));
    }

    #[test]
    fn batches_are_deterministic_per_epoch() {
        let log = ten_records();
        assert_eq!(make_batches(&log, 3, 7, 2).unwrap(), make_batches(&log, 3, 7, 2).unwrap());
        assert_ne!(make_batches(&log, 10, 7, 2).unwrap().click, make_batches(&log, 10, 7, 3).unwrap().click);
    }

    #[test]
    fn batch_errors() {
        let none_clicked = InteractionLog::new(vec![rec(0, 0, 0, false, false)], 1, 1).unwrap();
        assert!(matches!(make_batches(&none_clicked, 4, 0, 0), Err(HcrError::NoClickedRecords)));
        let empty = InteractionLog::new(Vec::new(), 1, 1).unwrap();
        assert!(matches!(make_batches(&empty, 4, 0, 0), Err(HcrError::EmptyLog)));
    }

    #[test]
    fn negatives_avoid_seen_items() {
        let log = InteractionLog::new(vec![rec(0, 0, 0, true, true), rec(0, 1, 1, true, false)], 1, 5).unwrap();
        let seen = log.items_per_user();
        let b = make_batches_with_negatives(&log, 100, 3, 1, 4, Some(&seen)).unwrap();
        let negatives: Vec<&Interaction> = b.click[0].iter().filter(|r| !r.click).collect();
        assert_eq!(negatives.len(), 8);
        assert!(negatives.iter().all(|r| r.item.0 >= 2));
    }

    #[test]
    fn weight_decay_shrinks_parameters_without_data_gradient() {
        let mut model = HcrModel::zeros(ModelConfig::new(2, 2, 2), None).unwrap();
        for (_, t) in model.params.tensors_mut() {
            t.fill(0.5);
        }
        let before = model.clone();
        let batch = [rec(0, 1, 0, true, false), rec(1, 0, 0, true, true)];
        let mut grads = GradientBuffer::zeros_like(&model);
        add_l2_gradient(&model, &batch, &batch, 0.1, &mut grads);
        Adam::new(&model, 0.01).step(&mut model, &grads);
        for ((name, a), (_, b)) in model.params.tensors().iter().zip(before.params.tensors()) {
            let penalized = !(name.ends_with("bias") || *name == "exposure_weight");
            for (x, y) in a.iter().zip(b) {
                if penalized {
                    assert!(x.abs() < y.abs(), "{name}");
                } else {
                    assert_eq!(x, y, "{name}");
                }
            }
        }
    }

    #[test]
    fn small_step_descends() {
        let mut model = HcrModel::init(ModelConfig::new(3, 4, 3), None, 2).unwrap();
        for (_, t) in model.params.tensors_mut() {
            for x in t.iter_mut() {
                *x *= 10.0;
            }
        }
        let clicks = [rec(0, 1, 0, true, true), rec(1, 2, 0, false, false), rec(2, 3, 0, true, false)];
        let likes = [rec(0, 1, 0, true, true), rec(2, 3, 0, true, false)];
        let mut grads = GradientBuffer::zeros_like(&model);
        let before = model.loss_gradients(&clicks, &likes, 2.0, &mut grads).unwrap();
        Adam::new(&model, 1e-4).step(&mut model, &grads);
        assert!(model.loss(&clicks, &likes, 2.0).unwrap() < before);
    }

    fn separable_split() -> DatasetSplit {
        // User u clicks and likes item u, skips the rest; repeated so that
        // every mini-batch carries the same signal.
        let mut recs = Vec::new();
        let mut t = 0;
        for _ in 0..8 {
            for u in 0..4u32 {
                for i in 0..4u32 {
                    recs.push(rec(u, i, t, u == i, u == i && (u % 2 == 0)));
                    t += 1;
                }
            }
        }
        DatasetSplit {
            train: InteractionLog::new(recs, 4, 4).unwrap(),
            validation: vec![Vec::new(); 4],
            test: vec![Vec::new(); 4],
        }
    }

    #[test]
    fn zero_epochs_return_initial_model() {
        let split = separable_split();
        let cfg = TrainConfig { max_epochs: 0, embed_dim: 4, ..TrainConfig::default() };
        let model = HcrModel::init(cfg.model_config(4, 4), None, 1).unwrap();
        let (out, history) = train(model.clone(), &split, &cfg).unwrap();
        assert_eq!(out, model);
        assert!(history.per_epoch.is_empty());
    }

    #[test]
    fn fits_separable_data() {
        let split = separable_split();
        for mode in [ModelMode::Hcr, ModelMode::Ct] {
            let cfg = TrainConfig {
                max_epochs: 400,
                patience: 400,
                embed_dim: 4,
                batch_size: 32,
                learning_rate: 0.05,
                l2: 0.0,
                mode,
                ..TrainConfig::default()
            };
            let (_, history) = fit(&split, &cfg, None).unwrap();
            assert!(history.loss_selected);
            let best = history.best().unwrap();
            assert!(best.train_loss < 0.1, "{mode}: {}", best.train_loss);
        }
    }

    #[test]
    fn ct_ignores_beta() {
        let split = separable_split();
        let base = TrainConfig { max_epochs: 3, embed_dim: 4, batch_size: 16, mode: ModelMode::Ct, ..TrainConfig::default() };
        let a = fit(&split, &TrainConfig { beta: 1.0, ..base.clone() }, None).unwrap();
        let b = fit(&split, &TrainConfig { beta: 5.0, ..base }, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_mismatches() {
        let split = separable_split();
        let cfg = TrainConfig { embed_dim: 4, ..TrainConfig::default() };
        let wrong_dims = HcrModel::init(ModelConfig::new(5, 4, 4), None, 0).unwrap();
        assert!(train(wrong_dims, &split, &cfg).is_err());
        let ct_model = HcrModel::init(ModelConfig { mode: ModelMode::Ct, ..ModelConfig::new(4, 4, 4) }, None, 0).unwrap();
        assert!(train(ct_model.clone(), &split, &cfg).is_err());
        assert!(train_ct(ct_model, &split, &cfg).is_err());
        assert!(TrainConfig { patience: 0, ..TrainConfig::default() }.validate().is_err());
    }
}
