//! Scorer heads and their analytic gradients.
//!
//! * click head `f(u, i) = sigma(<w_f, z(u,i)> + b_f)`, optionally times an
//!   exposure gate `sigma(w_e * exposure[i])`;
//! * mediator like head `h1(u, i) = sigma(<w_1, z(u,i)> + b_1)`;
//! * item like head `h2(u, i) = sigma(<p_u, q_i> + b_2)` on its own tables.
//!
//! `z(u, i)` is the elementwise product of the base user and item
//! embeddings. With shared embeddings `f` and `h1` read the same base
//! tables; otherwise `h1` owns a private copy. A CT-mode model trains and
//! scores with `h2` alone.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::{Interaction, ItemId, UserId};
use crate::error::{HcrError, Result};
use crate::math::{bce, bce_grad, dot, sigmoid};

const MAGIC: &[u8; 4] = b"HCR1";
const FLAG_SHARE: u64 = 1;
const FLAG_EXPOSURE: u64 = 1 << 1;
const FLAG_CT: u64 = 1 << 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelMode {
    /// Decomposed multi-task model.
    Hcr,
    /// Single-task like model.
    Ct,
}

impl std::fmt::Display for ModelMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelMode::Hcr => "HCR",
            ModelMode::Ct => "CT",
        })
    }
}

impl std::str::FromStr for ModelMode {
    type Err = HcrError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "HCR" => Ok(ModelMode::Hcr),
            "CT" => Ok(ModelMode::Ct),
            other => Err(HcrError::InvalidArgument(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub num_users: usize,
    pub num_items: usize,
    pub embed_dim: usize,
    pub share_embeddings: bool,
    pub exposure_factor: bool,
    pub mode: ModelMode,
}

impl ModelConfig {
    pub fn new(num_users: usize, num_items: usize, embed_dim: usize) -> Self {
        Self {
            num_users,
            num_items,
            embed_dim,
            share_embeddings: true,
            exposure_factor: false,
            mode: ModelMode::Hcr,
        }
    }

    fn flags(&self) -> u64 {
        let mut flags = 0;
        if self.share_embeddings {
            flags |= FLAG_SHARE;
        }
        if self.exposure_factor {
            flags |= FLAG_EXPOSURE;
        }
        if self.mode == ModelMode::Ct {
            flags |= FLAG_CT;
        }
        flags
    }
}

/// Row-major `[rows][dim]` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl EmbeddingTable {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self { rows, dim, data: vec![0.0; rows * dim] }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.dim..(r + 1) * self.dim]
    }
}

/// Every trainable tensor. A model and its gradient buffer share this shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameters {
    pub user_base: EmbeddingTable,
    pub item_base: EmbeddingTable,
    pub click_weight: Vec<f64>,
    pub click_bias: f64,
    /// Private `h1` tables; empty when embeddings are shared.
    pub like_user_base: EmbeddingTable,
    pub like_item_base: EmbeddingTable,
    pub like_weight: Vec<f64>,
    pub like_bias: f64,
    pub h2_user: EmbeddingTable,
    pub h2_item: EmbeddingTable,
    pub h2_bias: f64,
    pub exposure_weight: f64,
}

impl Parameters {
    fn zeros(cfg: &ModelConfig) -> Self {
        let (u, i, d) = (cfg.num_users, cfg.num_items, cfg.embed_dim);
        let private = if cfg.share_embeddings { (0, 0) } else { (u, i) };
        Self {
            user_base: EmbeddingTable::zeros(u, d),
            item_base: EmbeddingTable::zeros(i, d),
            click_weight: vec![0.0; d],
            click_bias: 0.0,
            like_user_base: EmbeddingTable::zeros(private.0, d),
            like_item_base: EmbeddingTable::zeros(private.1, d),
            like_weight: vec![0.0; d],
            like_bias: 0.0,
            h2_user: EmbeddingTable::zeros(u, d),
            h2_item: EmbeddingTable::zeros(i, d),
            h2_bias: 0.0,
            exposure_weight: 0.0,
        }
    }

    /// Tensors in checkpoint order.
    pub fn tensors(&self) -> [(&'static str, &[f64]); 12] {
        [
            ("user_base", &self.user_base.data),
            ("item_base", &self.item_base.data),
            ("click_weight", &self.click_weight),
            ("click_bias", std::slice::from_ref(&self.click_bias)),
            ("like_user_base", &self.like_user_base.data),
            ("like_item_base", &self.like_item_base.data),
            ("like_weight", &self.like_weight),
            ("like_bias", std::slice::from_ref(&self.like_bias)),
            ("h2_user", &self.h2_user.data),
            ("h2_item", &self.h2_item.data),
            ("h2_bias", std::slice::from_ref(&self.h2_bias)),
            ("exposure_weight", std::slice::from_ref(&self.exposure_weight)),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut [f64]); 12] {
        [
            ("user_base", &mut self.user_base.data),
            ("item_base", &mut self.item_base.data),
            ("click_weight", &mut self.click_weight),
            ("click_bias", std::slice::from_mut(&mut self.click_bias)),
            ("like_user_base", &mut self.like_user_base.data),
            ("like_item_base", &mut self.like_item_base.data),
            ("like_weight", &mut self.like_weight),
            ("like_bias", std::slice::from_mut(&mut self.like_bias)),
            ("h2_user", &mut self.h2_user.data),
            ("h2_item", &mut self.h2_item.data),
            ("h2_bias", std::slice::from_mut(&mut self.h2_bias)),
            ("exposure_weight", std::slice::from_mut(&mut self.exposure_weight)),
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }
}

/// Accumulated loss partials, shape-congruent with the owning model.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientBuffer(pub Parameters);

impl GradientBuffer {
    pub fn zeros_like(model: &HcrModel) -> Self {
        GradientBuffer(Parameters::zeros(&model.config))
    }

    pub fn clear(&mut self) {
        for (_, t) in self.0.tensors_mut() {
            t.fill(0.0);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HcrModel {
    pub config: ModelConfig,
    pub params: Parameters,
    /// Fixed per-item exposure feature; all zeros when the gate is off.
    pub item_exposure: Vec<f64>,
}

impl HcrModel {
    /// Model with every parameter zero.
    pub fn zeros(config: ModelConfig, item_exposure: Option<Vec<f64>>) -> Result<Self> {
        if config.num_users == 0 || config.num_items == 0 || config.embed_dim == 0 {
            return Err(HcrError::InvalidArgument("model dimensions must be positive".into()));
        }
        let item_exposure = match (config.exposure_factor, item_exposure) {
            (true, None) => {
                return Err(HcrError::InvalidArgument(
                    "exposure factor enabled but no item exposure scores supplied".into(),
                ))
            }
            (_, Some(e)) if e.len() != config.num_items => {
                return Err(HcrError::InvalidArgument(format!(
                    "{} exposure scores for {} items",
                    e.len(),
                    config.num_items
                )))
            }
            (_, Some(e)) => e,
            (false, None) => vec![0.0; config.num_items],
        };
        Ok(Self { params: Parameters::zeros(&config), config, item_exposure })
    }

    /// Embedding tables drawn i.i.d. normal with scale `0.1 / sqrt(dim)`;
    /// the head weight vectors start at one so that `<w, z>` begins as a plain
    /// dot product (an all-small trilinear form sits on a saddle); biases and
    /// the exposure weight start at zero.
    pub fn init(config: ModelConfig, item_exposure: Option<Vec<f64>>, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(config, item_exposure)?;
        let scale = 0.1 / (config.embed_dim as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (name, tensor) in model.params.tensors_mut() {
            if tensor.len() == 1 && (name.ends_with("bias") || name == "exposure_weight") {
                continue;
            }
            if name.ends_with("weight") {
                tensor.fill(1.0);
                continue;
            }
            for x in tensor.iter_mut() {
                *x = rng.sample::<f64, _>(StandardNormal) * scale;
            }
        }
        Ok(model)
    }

    pub fn mode(&self) -> ModelMode {
        self.config.mode
    }

    fn h1_tables(&self) -> (&EmbeddingTable, &EmbeddingTable) {
        if self.config.share_embeddings {
            (&self.params.user_base, &self.params.item_base)
        } else {
            (&self.params.like_user_base, &self.params.like_item_base)
        }
    }

    /// `z(u, i) = user_base[u] * item_base[i]` elementwise.
    pub fn integrate_features(&self, u: UserId, i: ItemId) -> Vec<f64> {
        let p = &self.params;
        p.user_base.row(u.index()).iter().zip(p.item_base.row(i.index())).map(|(a, b)| a * b).collect()
    }

    fn click_logit(&self, u: UserId, i: ItemId) -> f64 {
        let p = &self.params;
        trilinear(&p.click_weight, p.user_base.row(u.index()), p.item_base.row(i.index())) + p.click_bias
    }

    fn exposure_gate(&self, i: ItemId) -> f64 {
        if self.config.exposure_factor {
            sigmoid(self.params.exposure_weight * self.item_exposure[i.index()])
        } else {
            1.0
        }
    }

    fn h1_logit(&self, u: UserId, i: ItemId) -> f64 {
        let (users, items) = self.h1_tables();
        trilinear(&self.params.like_weight, users.row(u.index()), items.row(i.index())) + self.params.like_bias
    }

    fn h2_logit(&self, u: UserId, i: ItemId) -> f64 {
        let p = &self.params;
        dot(p.h2_user.row(u.index()), p.h2_item.row(i.index())) + p.h2_bias
    }

    /// Estimated click probability.
    pub fn forward_click(&self, u: UserId, i: ItemId) -> f64 {
        sigmoid(self.click_logit(u, i)) * self.exposure_gate(i)
    }

    pub fn forward_h1(&self, u: UserId, i: ItemId) -> f64 {
        sigmoid(self.h1_logit(u, i))
    }

    pub fn forward_h2(&self, u: UserId, i: ItemId) -> f64 {
        sigmoid(self.h2_logit(u, i))
    }

    /// Like model given the click outcome: zero without a click.
    pub fn forward_h(&self, u: UserId, i: ItemId, click: bool) -> f64 {
        if click {
            self.forward_h1(u, i) * self.forward_h2(u, i)
        } else {
            0.0
        }
    }

    fn check_ids(&self, batch: &[Interaction]) -> Result<()> {
        for r in batch {
            if r.user.index() >= self.config.num_users || r.item.index() >= self.config.num_items {
                return Err(HcrError::InvalidArgument(format!(
                    "record ({}, {}) outside model dims {}x{}",
                    r.user, r.item, self.config.num_users, self.config.num_items
                )));
            }
        }
        Ok(())
    }

    /// Multi-task loss and its exact gradient.
    ///
    /// HCR: `mean BCE(f, c)` over `click_batch` plus `beta * mean BCE(h1*h2, l)`
    /// over `like_batch`. CT: `mean BCE(h2, l)` over `like_batch`; the click
    /// batch and `beta` are ignored.
    pub fn loss_gradients(
        &self,
        click_batch: &[Interaction],
        like_batch: &[Interaction],
        beta: f64,
        grads: &mut GradientBuffer,
    ) -> Result<f64> {
        grads.clear();
        self.check_ids(click_batch)?;
        self.check_ids(like_batch)?;
        match self.config.mode {
            ModelMode::Hcr => {
                if click_batch.is_empty() || like_batch.is_empty() {
                    return Err(HcrError::EmptyBatch);
                }
                let click_loss = self.accumulate_click(click_batch, 1.0 / click_batch.len() as f64, grads);
                let like_loss = if beta != 0.0 {
                    self.accumulate_like(like_batch, beta / like_batch.len() as f64, grads)
                } else {
                    0.0
                };
                Ok(click_loss + beta * like_loss)
            }
            ModelMode::Ct => {
                if like_batch.is_empty() {
                    return Err(HcrError::EmptyBatch);
                }
                Ok(self.accumulate_ct(like_batch, 1.0 / like_batch.len() as f64, grads))
            }
        }
    }

    /// Returns the mean click BCE; gradients are scaled by `weight`.
    fn accumulate_click(&self, batch: &[Interaction], weight: f64, grads: &mut GradientBuffer) -> f64 {
        let p = &self.params;
        let g = &mut grads.0;
        let mut total = 0.0;
        for r in batch {
            let (u, i) = (r.user.index(), r.item.index());
            let s = sigmoid(self.click_logit(r.user, r.item));
            let gate = self.exposure_gate(r.item);
            let pred = s * gate;
            total += bce(pred, r.click);
            let dp = weight * bce_grad(pred, r.click);
            if dp == 0.0 {
                continue;
            }
            let delta = dp * pred * (1.0 - s);
            let (ur, ir) = (p.user_base.row(u), p.item_base.row(i));
            for k in 0..p.click_weight.len() {
                g.click_weight[k] += delta * ur[k] * ir[k];
            }
            axpy_product(g.user_base.row_mut(u), delta, &p.click_weight, ir);
            axpy_product(g.item_base.row_mut(i), delta, &p.click_weight, ur);
            g.click_bias += delta;
            if self.config.exposure_factor {
                g.exposure_weight += dp * pred * (1.0 - gate) * self.item_exposure[i];
            }
        }
        total / batch.len() as f64
    }

    /// Returns the mean like BCE of `h1 * h2`; gradients are scaled by `weight`.
    fn accumulate_like(&self, batch: &[Interaction], weight: f64, grads: &mut GradientBuffer) -> f64 {
        let p = &self.params;
        let share = self.config.share_embeddings;
        let mut total = 0.0;
        for r in batch {
            let (u, i) = (r.user.index(), r.item.index());
            let h1 = self.forward_h1(r.user, r.item);
            let h2 = self.forward_h2(r.user, r.item);
            let pred = h1 * h2;
            total += bce(pred, r.like);
            let dp = weight * bce_grad(pred, r.like);
            if dp == 0.0 {
                continue;
            }
            let d1 = dp * pred * (1.0 - h1);
            let d2 = dp * pred * (1.0 - h2);

            let (users, items) = self.h1_tables();
            let (ur, ir) = (users.row(u), items.row(i));
            let g = &mut grads.0;
            for k in 0..p.like_weight.len() {
                g.like_weight[k] += d1 * ur[k] * ir[k];
            }
            let (gu, gi) = if share {
                (&mut g.user_base, &mut g.item_base)
            } else {
                (&mut g.like_user_base, &mut g.like_item_base)
            };
            axpy_product(gu.row_mut(u), d1, &p.like_weight, ir);
            axpy_product(gi.row_mut(i), d1, &p.like_weight, ur);
            g.like_bias += d1;

            add_scaled(g.h2_user.row_mut(u), d2, p.h2_item.row(i));
            add_scaled(g.h2_item.row_mut(i), d2, p.h2_user.row(u));
            g.h2_bias += d2;
        }
        total / batch.len() as f64
    }

    fn accumulate_ct(&self, batch: &[Interaction], weight: f64, grads: &mut GradientBuffer) -> f64 {
        let p = &self.params;
        let g = &mut grads.0;
        let mut total = 0.0;
        for r in batch {
            let (u, i) = (r.user.index(), r.item.index());
            let pred = self.forward_h2(r.user, r.item);
            total += bce(pred, r.like);
            let dp = weight * bce_grad(pred, r.like);
            let delta = dp * pred * (1.0 - pred);
            add_scaled(g.h2_user.row_mut(u), delta, p.h2_item.row(i));
            add_scaled(g.h2_item.row_mut(i), delta, p.h2_user.row(u));
            g.h2_bias += delta;
        }
        total / batch.len() as f64
    }

    /// Loss only, for finite-difference checks and diagnostics.
    pub fn loss(&self, click_batch: &[Interaction], like_batch: &[Interaction], beta: f64) -> Result<f64> {
        let mut scratch = GradientBuffer::zeros_like(self);
        self.loss_gradients(click_batch, like_batch, beta, &mut scratch)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let cfg = &self.config;
        let mut out = Vec::with_capacity(36 + 8 * (self.params.parameter_count() + cfg.num_items));
        out.extend_from_slice(MAGIC);
        for dim in [cfg.num_users as u64, cfg.num_items as u64, cfg.embed_dim as u64, cfg.flags()] {
            out.extend_from_slice(&dim.to_le_bytes());
        }
        for (_, tensor) in self.params.tensors() {
            for x in tensor {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        for x in &self.item_exposure {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| HcrError::Checkpoint(msg.to_string());
        if bytes.len() < 36 || &bytes[..4] != MAGIC {
            return Err(bad("missing HCR1 header"));
        }
        let word = |k: usize| u64::from_le_bytes(bytes[4 + 8 * k..12 + 8 * k].try_into().unwrap());
        let flags = word(3);
        if flags & !(FLAG_SHARE | FLAG_EXPOSURE | FLAG_CT) != 0 {
            return Err(bad("unknown flag bits"));
        }
        let config = ModelConfig {
            num_users: word(0) as usize,
            num_items: word(1) as usize,
            embed_dim: word(2) as usize,
            share_embeddings: flags & FLAG_SHARE != 0,
            exposure_factor: flags & FLAG_EXPOSURE != 0,
            mode: if flags & FLAG_CT != 0 { ModelMode::Ct } else { ModelMode::Hcr },
        };
        let mut model = Self::zeros(config, Some(vec![0.0; config.num_items]))?;
        let expected = 36 + 8 * (model.params.parameter_count() + config.num_items);
        if bytes.len() != expected {
            return Err(HcrError::Checkpoint(format!(
                "payload is {} bytes, dims imply {expected}",
                bytes.len()
            )));
        }
        let mut values = bytes[36..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        for (_, tensor) in model.params.tensors_mut() {
            for x in tensor.iter_mut() {
                *x = values.next().unwrap();
            }
        }
        for x in model.item_exposure.iter_mut() {
            *x = values.next().unwrap();
        }
        if !model.params.is_finite() {
            return Err(bad("non-finite parameter"));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| HcrError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| HcrError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[inline]
fn trilinear(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, a), b)| w * a * b).sum()
}

/// `dst += alpha * (x .* y)`
#[inline]
fn axpy_product(dst: &mut [f64], alpha: f64, x: &[f64], y: &[f64]) {
    for ((d, a), b) in dst.iter_mut().zip(x).zip(y) {
        *d += alpha * a * b;
    }
}

#[inline]
fn add_scaled(dst: &mut [f64], alpha: f64, x: &[f64]) {
    for (d, a) in dst.iter_mut().zip(x) {
        *d += alpha * a;
    }
}
