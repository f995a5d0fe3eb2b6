//! Deconfounded scoring and all-ranking recommendation.
//!
//! The deployed score is `f(u,i) * h1(u,i)`. The full adjustment multiplies
//! it by `S_u = sum_{i'} h2(u,i') P(i')`, which depends on the user alone, so
//! dropping it leaves every per-user ranking unchanged. [`score_full`] keeps
//! the factor for checking exactly that.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::data::{InteractionLog, ItemId, UserId};
use crate::error::{HcrError, Result};
use crate::model::{HcrModel, ModelMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScoreVariant {
    /// `f * h1`
    Hcr,
    /// `f * h1 * S_u` with a uniform item prior
    HcrFull,
    /// `f * h1 * h2`
    HcrT,
    /// `f`
    HcrS1,
    /// `h1`
    HcrS2,
    /// single-task like head
    Ct,
}

impl ScoreVariant {
    pub const ALL: [ScoreVariant; 6] = [
        ScoreVariant::Hcr,
        ScoreVariant::HcrFull,
        ScoreVariant::HcrT,
        ScoreVariant::HcrS1,
        ScoreVariant::HcrS2,
        ScoreVariant::Ct,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScoreVariant::Hcr => "HCR",
            ScoreVariant::HcrFull => "HCR_FULL",
            ScoreVariant::HcrT => "HCR_T",
            ScoreVariant::HcrS1 => "HCR_S1",
            ScoreVariant::HcrS2 => "HCR_S2",
            ScoreVariant::Ct => "CT",
        }
    }

    pub fn required_mode(self) -> ModelMode {
        match self {
            ScoreVariant::Ct => ModelMode::Ct,
            _ => ModelMode::Hcr,
        }
    }

    pub fn check(self, model: &HcrModel) -> Result<()> {
        if model.mode() == self.required_mode() {
            Ok(())
        } else {
            Err(HcrError::VariantMismatch {
                variant: self.as_str().to_string(),
                mode: model.mode().to_string(),
            })
        }
    }
}

impl fmt::Display for ScoreVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoreVariant {
    type Err = HcrError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        ScoreVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == norm)
            .ok_or_else(|| HcrError::InvalidArgument(format!("unknown score variant {s:?}")))
    }
}

/// Anything that assigns a ranking score to a user-item pair.
pub trait ItemScorer {
    fn score(&self, u: UserId, i: ItemId) -> f64;
}

impl<F: Fn(UserId, ItemId) -> f64> ItemScorer for F {
    fn score(&self, u: UserId, i: ItemId) -> f64 {
        self(u, i)
    }
}

/// A model bound to one variant, with the mode already checked.
#[derive(Clone, Copy, Debug)]
pub struct ModelScorer<'a> {
    model: &'a HcrModel,
    variant: ScoreVariant,
}

impl<'a> ModelScorer<'a> {
    pub fn new(model: &'a HcrModel, variant: ScoreVariant) -> Result<Self> {
        variant.check(model)?;
        Ok(Self { model, variant })
    }
}

impl ItemScorer for ModelScorer<'_> {
    fn score(&self, u: UserId, i: ItemId) -> f64 {
        let m = self.model;
        match self.variant {
            ScoreVariant::Hcr => m.forward_click(u, i) * m.forward_h1(u, i),
            ScoreVariant::HcrFull => {
                m.forward_click(u, i) * m.forward_h1(u, i) * uniform_prior_normalizer(m, u)
            }
            ScoreVariant::HcrT => m.forward_click(u, i) * m.forward_h1(u, i) * m.forward_h2(u, i),
            ScoreVariant::HcrS1 => m.forward_click(u, i),
            ScoreVariant::HcrS2 => m.forward_h1(u, i),
            ScoreVariant::Ct => m.forward_h2(u, i),
        }
    }
}

fn uniform_prior_normalizer(model: &HcrModel, u: UserId) -> f64 {
    let n = model.config.num_items;
    (0..n as u32).map(|i| model.forward_h2(u, ItemId(i))).sum::<f64>() / n as f64
}

pub fn score(model: &HcrModel, u: UserId, i: ItemId, variant: ScoreVariant) -> Result<f64> {
    Ok(ModelScorer::new(model, variant)?.score(u, i))
}

/// `f(u,i) * h1(u,i) * sum_{i'} h2(u,i') P(i')` over an explicit universe.
pub fn score_full(
    model: &HcrModel,
    u: UserId,
    i: ItemId,
    universe: &[ItemId],
    prior: &[f64],
) -> Result<f64> {
    ScoreVariant::Hcr.check(model)?;
    if universe.is_empty() {
        return Err(HcrError::InvalidArgument("empty item universe".into()));
    }
    if prior.len() != universe.len() {
        return Err(HcrError::InvalidArgument("prior and universe lengths differ".into()));
    }
    let total: f64 = prior.iter().sum();
    if (total - 1.0).abs() > 1e-9 || prior.iter().any(|p| *p < 0.0) {
        return Err(HcrError::InvalidArgument(format!("item prior sums to {total}")));
    }
    let s_u: f64 = universe.iter().zip(prior).map(|(&ip, &p)| model.forward_h2(u, ip) * p).sum();
    Ok(model.forward_click(u, i) * model.forward_h1(u, i) * s_u)
}

/// Train click frequency with add-one smoothing.
pub fn click_frequency_prior(train: &InteractionLog) -> Vec<f64> {
    let mut counts = vec![1.0; train.num_items()];
    for r in train.interactions().iter().filter(|r| r.click) {
        counts[r.item.index()] += 1.0;
    }
    let total: f64 = counts.iter().sum();
    counts.iter().map(|c| c / total).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankedList {
    pub user: UserId,
    pub items: Vec<ItemId>,
    pub scores: Vec<f64>,
}

impl RankedList {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Scores every item outside `exclude` and keeps the top `k`, breaking ties
/// by ascending item index.
pub fn rank_with<S: ItemScorer + ?Sized>(
    scorer: &S,
    u: UserId,
    num_items: usize,
    exclude: &BTreeSet<ItemId>,
    k: usize,
) -> Result<RankedList> {
    if k == 0 {
        return Err(HcrError::InvalidArgument("K must be at least 1".into()));
    }
    let mut scored: Vec<(ItemId, f64)> = (0..num_items as u32)
        .map(ItemId)
        .filter(|i| !exclude.contains(i))
        .map(|i| (i, scorer.score(u, i)))
        .collect();
    if scored.is_empty() {
        return Err(HcrError::NoCandidates(u.index()));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    let (items, scores) = scored.into_iter().unzip();
    Ok(RankedList { user: u, items, scores })
}

pub fn rank_all(
    model: &HcrModel,
    u: UserId,
    train_items: &BTreeSet<ItemId>,
    variant: ScoreVariant,
    k: usize,
) -> Result<RankedList> {
    let scorer = ModelScorer::new(model, variant)?;
    rank_with(&scorer, u, model.config.num_items, train_items, k)
}

/// `user_id,rank,item_id,score` rows, ranks starting at 1.
pub fn ranked_lists_csv(lists: &[RankedList]) -> String {
    use std::fmt::Write as _;
    let mut out = String::from("user_id,rank,item_id,score\n");
    for list in lists {
        for (pos, (item, s)) in list.items.iter().zip(&list.scores).enumerate() {
            let _ = writeln!(out, "{},{},{},{:.17e}", list.user, pos + 1, item, s);
        }
    }
    out
}
