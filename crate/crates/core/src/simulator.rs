//! Confounded click/like simulator.
//!
//! A discrete hidden confounder `v` shifts both the item feature vector and
//! the like logit. Clicks depend on the user-item affinity and an item
//! exposure score only, so `v` reaches the click solely through features.
//! Every ground-truth probability is available in closed form.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, weighted::WeightedIndex};

use crate::data::{Interaction, InteractionLog, ItemId, UserId};
use crate::error::{HcrError, Result};
use crate::math::{dot, sigmoid};

const STREAM_FEATURES: u64 = 1;
const STREAM_CONFOUNDER: u64 = 2;
const STREAM_LOG: u64 = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct WorldSpec {
    pub num_users: usize,
    pub num_items: usize,
    pub embed_dim: usize,
    pub confounder_prior: Vec<f64>,
    /// Shift of item features along the confounder's direction.
    pub confounder_item_strength: f64,
    /// Shift of the like logit by `contrast(v)`.
    pub confounder_like_strength: f64,
    pub click_bias: f64,
    pub like_bias: f64,
    /// Weight of the item exposure score in the click logit.
    pub exposure_strength: f64,
    /// Standard deviation of the per-item exposure score.
    pub exposure_scale: f64,
    pub noise_scale: f64,
    /// Multiplier on user preference vectors; sets the spread of affinities.
    pub preference_scale: f64,
    pub impressions_per_user: usize,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            num_users: 200,
            num_items: 300,
            embed_dim: 4,
            confounder_prior: vec![0.5, 0.5],
            confounder_item_strength: 1.0,
            confounder_like_strength: 2.0,
            click_bias: 0.0,
            like_bias: 0.0,
            exposure_strength: 1.0,
            exposure_scale: 1.0,
            noise_scale: 0.5,
            preference_scale: 3.0,
            impressions_per_user: 150,
        }
    }
}

impl WorldSpec {
    pub fn confounder_cardinality(&self) -> usize {
        self.confounder_prior.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HcrError::InvalidWorld(msg));
        if self.num_users == 0 || self.num_items == 0 || self.embed_dim == 0 {
            return bad("users, items and embed_dim must be positive".into());
        }
        if self.confounder_prior.len() < 2 {
            return bad("confounder needs at least two categories".into());
        }
        if self.confounder_prior.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return bad(format!("negative or non-finite prior {:?}", self.confounder_prior));
        }
        let total: f64 = self.confounder_prior.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return bad(format!("confounder prior sums to {total}"));
        }
        if self.exposure_strength < 0.0 || self.noise_scale < 0.0 || self.exposure_scale < 0.0 {
            return bad("exposure_strength, exposure_scale and noise_scale must be >= 0".into());
        }
        let reals = [
            self.confounder_item_strength,
            self.confounder_like_strength,
            self.click_bias,
            self.like_bias,
            self.preference_scale,
        ];
        if reals.iter().any(|x| !x.is_finite()) {
            return bad("non-finite strength or bias".into());
        }
        Ok(())
    }
}

/// Contrast value of confounder category `v` out of `k`: equally spaced
/// over `[-1, 1]`, so `-1/+1` for a binary confounder.
pub fn contrast(v: usize, k: usize) -> f64 {
    debug_assert!(k >= 2 && v < k);
    -1.0 + 2.0 * v as f64 / (k - 1) as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticWorld {
    pub spec: WorldSpec,
    /// Row-major `[num_users][embed_dim]`.
    pub user_preference: Vec<f64>,
    pub item_confounder: Vec<usize>,
    /// Row-major `[num_items][embed_dim]`.
    pub item_feature: Vec<f64>,
    pub item_exposure_score: Vec<f64>,
}

impl SyntheticWorld {
    /// Builds a world whose feature draws and confounder draws come from
    /// independent seeds. `build_world` uses the same seed for both.
    pub fn build_with_seeds(spec: WorldSpec, feature_seed: u64, confounder_seed: u64) -> Result<Self> {
        spec.validate()?;
        let d = spec.embed_dim;
        let k = spec.confounder_cardinality();
        let unit = 1.0 / (d as f64).sqrt();

        let mut conf_rng = ChaCha8Rng::seed_from_u64(confounder_seed);
        conf_rng.set_stream(STREAM_CONFOUNDER);
        let categorical = WeightedIndex::new(&spec.confounder_prior)
            .map_err(|e| HcrError::InvalidWorld(e.to_string()))?;
        let item_confounder: Vec<usize> =
            (0..spec.num_items).map(|_| categorical.sample(&mut conf_rng)).collect();

        let mut rng = ChaCha8Rng::seed_from_u64(feature_seed);
        rng.set_stream(STREAM_FEATURES);
        let normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample::<f64, _>(StandardNormal) * unit };

        let user_preference: Vec<f64> = (0..spec.num_users * d)
            .map(|_| normal(&mut rng) * spec.preference_scale)
            .collect();
        let directions: Vec<f64> = (0..k * d).map(|_| normal(&mut rng)).collect();
        let mut item_feature = Vec::with_capacity(spec.num_items * d);
        for &v in &item_confounder {
            for j in 0..d {
                let base = normal(&mut rng);
                let noise = normal(&mut rng) * spec.noise_scale;
                item_feature.push(base + spec.confounder_item_strength * directions[v * d + j] + noise);
            }
        }
        let item_exposure_score: Vec<f64> = (0..spec.num_items)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * spec.exposure_scale)
            .collect();

        Ok(Self { spec, user_preference, item_confounder, item_feature, item_exposure_score })
    }

    pub fn num_users(&self) -> usize {
        self.spec.num_users
    }

    pub fn num_items(&self) -> usize {
        self.spec.num_items
    }

    pub fn preference(&self, u: UserId) -> &[f64] {
        let d = self.spec.embed_dim;
        &self.user_preference[u.index() * d..(u.index() + 1) * d]
    }

    pub fn feature(&self, i: ItemId) -> &[f64] {
        let d = self.spec.embed_dim;
        &self.item_feature[i.index() * d..(i.index() + 1) * d]
    }

    pub fn affinity(&self, u: UserId, i: ItemId) -> f64 {
        dot(self.preference(u), self.feature(i))
    }

    /// Structural click probability `P(c = 1 | u, i)`.
    pub fn click_probability(&self, u: UserId, i: ItemId) -> f64 {
        sigmoid(
            self.affinity(u, i)
                + self.spec.exposure_strength * self.item_exposure_score[i.index()]
                + self.spec.click_bias,
        )
    }

    /// `P(l = 1 | c = 1, u, i, v)`.
    pub fn like_given_click(&self, u: UserId, i: ItemId, v: usize) -> f64 {
        let k = self.spec.confounder_cardinality();
        sigmoid(
            self.affinity(u, i)
                + self.spec.confounder_like_strength * contrast(v, k)
                + self.spec.like_bias,
        )
    }

    /// `P(l = 1 | u, do(i))`: the item's own confounder draw is replaced by
    /// an average over the prior.
    pub fn true_interventional(&self, u: UserId, i: ItemId) -> f64 {
        let averaged: f64 = self
            .spec
            .confounder_prior
            .iter()
            .enumerate()
            .map(|(v, &p)| p * self.like_given_click(u, i, v))
            .sum();
        self.click_probability(u, i) * averaged
    }

    /// Like probability under the item's realized confounder, the quantity a
    /// purely correlational model converges to.
    pub fn observational_like_rate(&self, u: UserId, i: ItemId) -> f64 {
        self.click_probability(u, i) * self.like_given_click(u, i, self.item_confounder[i.index()])
    }

    /// `user_id,item_id,p_do,p_obs` for every pair.
    pub fn ground_truth_csv(&self) -> String {
        let mut out = String::from("user_id,item_id,p_do,p_obs\n");
        for u in 0..self.num_users() as u32 {
            for i in 0..self.num_items() as u32 {
                let (u, i) = (UserId(u), ItemId(i));
                let _ = writeln!(
                    out,
                    "{},{},{:.17e},{:.17e}",
                    u,
                    i,
                    self.true_interventional(u, i),
                    self.observational_like_rate(u, i)
                );
            }
        }
        out
    }
}

pub fn build_world(spec: WorldSpec, seed: u64) -> Result<SyntheticWorld> {
    SyntheticWorld::build_with_seeds(spec, seed, seed)
}

/// Samples one log. Each user sees `impressions_per_user` distinct items
/// chosen uniformly; impressions are emitted round-robin across users, and
/// the emission index is the timestamp.
pub fn simulate_log(world: &SyntheticWorld, seed: u64) -> Result<InteractionLog> {
    let spec = &world.spec;
    if spec.impressions_per_user > spec.num_items {
        return Err(HcrError::InvalidWorld(format!(
            "impressions_per_user {} exceeds num_items {}",
            spec.impressions_per_user, spec.num_items
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_LOG);
    let slates: Vec<Vec<usize>> = (0..spec.num_users)
        .map(|_| sample(&mut rng, spec.num_items, spec.impressions_per_user).into_vec())
        .collect();

    let mut records = Vec::with_capacity(spec.num_users * spec.impressions_per_user);
    let mut timestamp = 0u64;
    for round in 0..spec.impressions_per_user {
        for (u, slate) in slates.iter().enumerate() {
            let user = UserId(u as u32);
            let item = ItemId(slate[round] as u32);
            let click = rng.random::<f64>() < world.click_probability(user, item);
            let like = click
                && rng.random::<f64>()
                    < world.like_given_click(user, item, world.item_confounder[item.index()]);
            records.push(Interaction { user, item, timestamp, click, like });
            timestamp += 1;
        }
    }
    InteractionLog::new(records, spec.num_users, spec.num_items)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> WorldSpec {
        WorldSpec { num_users: 20, num_items: 30, impressions_per_user: 10, ..WorldSpec::default() }
    }

    #[test]
    fn rejects_bad_prior() {
        let spec = WorldSpec { confounder_prior: vec![0.6, 0.6], ..small_spec() };
        assert!(matches!(build_world(spec, 1), Err(HcrError::InvalidWorld(_))));
        let spec = WorldSpec { confounder_prior: vec![1.2, -0.2], ..small_spec() };
        assert!(build_world(spec, 1).is_err());
        let spec = WorldSpec { confounder_prior: vec![1.0], ..small_spec() };
        assert!(build_world(spec, 1).is_err());
    }

    #[test]
    fn deterministic_build() {
        let a = build_world(small_spec(), 9).unwrap();
        let b = build_world(small_spec(), 9).unwrap();
        assert_eq!(a, b);
        let c = build_world(small_spec(), 10).unwrap();
        assert_ne!(a.user_preference, c.user_preference);
    }

    #[test]
    fn zero_strength_features_ignore_confounder() {
        let spec = WorldSpec {
            confounder_item_strength: 0.0,
            confounder_like_strength: 0.0,
            ..small_spec()
        };
        let a = SyntheticWorld::build_with_seeds(spec.clone(), 4, 100).unwrap();
        let b = SyntheticWorld::build_with_seeds(spec, 4, 200).unwrap();
        assert_ne!(a.item_confounder, b.item_confounder);
        assert_eq!(a.item_feature, b.item_feature);
    }

    #[test]
    fn confounder_frequency_tracks_prior() {
        let world = build_world(WorldSpec::default(), 1).unwrap();
        let ones = world.item_confounder.iter().filter(|&&v| v == 1).count();
        let freq = ones as f64 / world.num_items() as f64;
        assert!((freq - 0.5).abs() <= 0.06, "freq {freq}");
        assert!(world.item_confounder.iter().all(|&v| v < 2));
    }

    #[test]
    fn too_many_impressions() {
        let world = build_world(WorldSpec { impressions_per_user: 31, ..small_spec() }, 1).unwrap();
        assert!(simulate_log(&world, 1).is_err());
    }

    #[test]
    fn contrast_values() {
        assert_eq!(contrast(0, 2), -1.0);
        assert_eq!(contrast(1, 2), 1.0);
        assert_eq!(contrast(1, 3), 0.0);
        let k = 5;
        let mean: f64 = (0..k).map(|v| contrast(v, k)).sum::<f64>() / k as f64;
        assert!(mean.abs() < 1e-15);
    }

    #[test]
    fn no_like_without_click_and_round_robin_order() {
        let world = build_world(small_spec(), 3).unwrap();
        let log = simulate_log(&world, 3).unwrap();
        assert_eq!(log.len(), 200);
        assert!(log.interactions().iter().all(|r| r.click || !r.like));
        // First round covers every user once before anyone's second impression.
        let first: Vec<u32> = log.interactions()[..20].iter().map(|r| r.user.0).collect();
        assert_eq!(first, (0..20).collect::<Vec<_>>());
        // Slates never repeat an item for the same user.
        for set in log.items_per_user() {
            assert_eq!(set.len(), 10);
        }
    }

    #[test]
    fn gamma_zero_removes_confounding() {
        let spec = WorldSpec { confounder_like_strength: 0.0, ..small_spec() };
        let world = build_world(spec, 5).unwrap();
        for u in 0..20 {
            for i in 0..30 {
                let (u, i) = (UserId(u), ItemId(i));
                let expected = world.click_probability(u, i) * sigmoid(world.affinity(u, i));
                assert_eq!(world.true_interventional(u, i), world.observational_like_rate(u, i));
                assert!((world.true_interventional(u, i) - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn symmetric_prior_is_label_invariant() {
        let world = build_world(small_spec(), 6).unwrap();
        let (u, i) = (UserId(2), ItemId(4));
        let forward = 0.5 * world.like_given_click(u, i, 0) + 0.5 * world.like_given_click(u, i, 1);
        let swapped = 0.5 * world.like_given_click(u, i, 1) + 0.5 * world.like_given_click(u, i, 0);
        assert_eq!(forward, swapped);
        assert!((world.true_interventional(u, i) - world.click_probability(u, i) * forward).abs() < 1e-15);
    }

    #[test]
    fn positive_confounder_inflates_observed_rate() {
        let world = build_world(small_spec(), 7).unwrap();
        for i in 0..30u32 {
            let item = ItemId(i);
            let obs = world.observational_like_rate(UserId(0), item);
            let int = world.true_interventional(UserId(0), item);
            if world.item_confounder[i as usize] == 1 {
                assert!(obs > int);
            } else {
                assert!(obs < int);
            }
        }
    }

    #[test]
    fn ground_truth_csv_shape() {
        let world = build_world(WorldSpec { num_users: 2, num_items: 3, impressions_per_user: 1, ..WorldSpec::default() }, 1).unwrap();
        let csv = world.ground_truth_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "user_id,item_id,p_do,p_obs");
        assert_eq!(lines.len(), 7);
        let p: f64 = lines[1].split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(p, world.true_interventional(UserId(0), ItemId(0)));
    }
}
