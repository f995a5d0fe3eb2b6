//! Exact enumeration over small tabular structural models.
//!
//! The model factorizes as `P(u) P(v) P(i|v) P(m|u,i) P(l|u,m,v)`, with `v`
//! hidden. [`do_probability`] evaluates the interventional like probability
//! with full access to `v`; [`frontdoor_estimate`] reaches the same number
//! using only conditionals of the observed joint over `(u, i, m, l)`. Their
//! agreement on random models is the ground truth the learned scorer is
//! built on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::error::{HcrError, Result};

const ROW_TOLERANCE: f64 = 1e-12;
const MAX_OBSERVED_DIM: usize = 8;
const MAX_CONFOUNDER_DIM: usize = 4;
/// Floor applied to randomly drawn conditional entries before renormalizing.
const POSITIVITY_FLOOR: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScmDims {
    pub users: usize,
    pub items: usize,
    pub confounders: usize,
    pub mediators: usize,
}

impl ScmDims {
    pub fn validate(&self) -> Result<()> {
        let observed = [self.users, self.items, self.mediators];
        if observed.iter().any(|&d| d == 0 || d > MAX_OBSERVED_DIM) {
            return Err(HcrError::InvalidScm(format!(
                "users, items and mediators must lie in 1..={MAX_OBSERVED_DIM}, got {self:?}"
            )));
        }
        if self.confounders == 0 || self.confounders > MAX_CONFOUNDER_DIM {
            return Err(HcrError::InvalidScm(format!(
                "confounders must lie in 1..={MAX_CONFOUNDER_DIM}, got {}",
                self.confounders
            )));
        }
        Ok(())
    }
}

/// Fully enumerable discrete structural model.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularScm {
    dims: ScmDims,
    p_u: Vec<f64>,
    p_v: Vec<f64>,
    /// `[v][i]`
    p_i_given_v: Vec<f64>,
    /// `[u][i][m]`
    p_m_given_ui: Vec<f64>,
    /// `[u][m][v]`, probability of `l = 1`.
    p_l_given_umv: Vec<f64>,
}

fn check_rows(name: &str, table: &[f64], row_len: usize, strictly_positive: bool) -> Result<()> {
    for (r, row) in table.chunks(row_len).enumerate() {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_TOLERANCE {
            return Err(HcrError::InvalidScm(format!("{name} row {r} sums to {sum}")));
        }
        for &p in row {
            if !p.is_finite() || p < 0.0 || (strictly_positive && p <= 0.0) {
                return Err(HcrError::InvalidScm(format!(
                    "{name} row {r} has entry {p} (positivity required: {strictly_positive})"
                )));
            }
        }
    }
    Ok(())
}

impl TabularScm {
    pub fn new(
        dims: ScmDims,
        p_u: Vec<f64>,
        p_v: Vec<f64>,
        p_i_given_v: Vec<f64>,
        p_m_given_ui: Vec<f64>,
        p_l_given_umv: Vec<f64>,
    ) -> Result<Self> {
        dims.validate()?;
        let ScmDims { users, items, confounders, mediators } = dims;
        let shapes = [
            ("p_u", p_u.len(), users),
            ("p_v", p_v.len(), confounders),
            ("p_i_given_v", p_i_given_v.len(), confounders * items),
            ("p_m_given_ui", p_m_given_ui.len(), users * items * mediators),
            ("p_l_given_umv", p_l_given_umv.len(), users * mediators * confounders),
        ];
        for (name, got, want) in shapes {
            if got != want {
                return Err(HcrError::InvalidScm(format!("{name} has {got} entries, expected {want}")));
            }
        }
        // Every user needs mass, otherwise P(l | u, i', m) is undefined.
        check_rows("p_u", &p_u, users, true)?;
        check_rows("p_v", &p_v, confounders, false)?;
        check_rows("p_i_given_v", &p_i_given_v, items, true)?;
        check_rows("p_m_given_ui", &p_m_given_ui, mediators, true)?;
        if p_l_given_umv.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(HcrError::InvalidScm("p_l_given_umv entries must lie in [0, 1]".into()));
        }
        Ok(Self { dims, p_u, p_v, p_i_given_v, p_m_given_ui, p_l_given_umv })
    }

    /// Random strictly positive model: rows are normalized exponential
    /// draws, floored at 1e-3 and renormalized; like probabilities are
    /// uniform on (0, 1).
    pub fn random(dims: ScmDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ScmDims { users, items, confounders, mediators } = dims;
        let p_u = random_rows(&mut rng, 1, users);
        let p_v = random_rows(&mut rng, 1, confounders);
        let p_i_given_v = random_rows(&mut rng, confounders, items);
        let p_m_given_ui = random_rows(&mut rng, users * items, mediators);
        let p_l_given_umv = (0..users * mediators * confounders)
            .map(|_| rng.random_range(0.02..0.98))
            .collect();
        Self::new(dims, p_u, p_v, p_i_given_v, p_m_given_ui, p_l_given_umv)
    }

    pub fn dims(&self) -> ScmDims {
        self.dims
    }

    pub fn p_u(&self, u: usize) -> f64 {
        self.p_u[u]
    }

    pub fn p_v(&self, v: usize) -> f64 {
        self.p_v[v]
    }

    pub fn p_i_given_v(&self, v: usize, i: usize) -> f64 {
        self.p_i_given_v[v * self.dims.items + i]
    }

    pub fn p_m_given_ui(&self, u: usize, i: usize, m: usize) -> f64 {
        self.p_m_given_ui[(u * self.dims.items + i) * self.dims.mediators + m]
    }

    pub fn p_l_given_umv(&self, u: usize, m: usize, v: usize) -> f64 {
        self.p_l_given_umv[(u * self.dims.mediators + m) * self.dims.confounders + v]
    }
}

fn random_rows(rng: &mut ChaCha8Rng, rows: usize, width: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * width);
    for _ in 0..rows {
        let mut row: Vec<f64> = (0..width).map(|_| rng.sample::<f64, _>(Exp1) + 1e-12).collect();
        normalize(&mut row);
        for p in row.iter_mut() {
            *p = p.max(POSITIVITY_FLOOR);
        }
        normalize(&mut row);
        out.extend(row);
    }
    out
}

fn normalize(row: &mut [f64]) {
    let total: f64 = row.iter().sum();
    for p in row.iter_mut() {
        *p /= total;
    }
}

/// Observed-and-hidden joint `P(u, v, i, m, l)`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointTable {
    dims: ScmDims,
    /// `[u][v][i][m][l]`
    table: Vec<f64>,
}

impl JointTable {
    #[inline]
    fn index(&self, u: usize, v: usize, i: usize, m: usize, l: usize) -> usize {
        let ScmDims { confounders, items, mediators, .. } = self.dims;
        (((u * confounders + v) * items + i) * mediators + m) * 2 + l
    }

    pub fn get(&self, u: usize, v: usize, i: usize, m: usize, l: usize) -> f64 {
        self.table[self.index(u, v, i, m, l)]
    }

    pub fn dims(&self) -> ScmDims {
        self.dims
    }

    pub fn total(&self) -> f64 {
        self.table.iter().sum()
    }

    /// Marginal `P(i)`.
    pub fn item_marginal(&self) -> Vec<f64> {
        let ScmDims { users, items, confounders, mediators } = self.dims;
        let mut out = vec![0.0; items];
        for u in 0..users {
            for v in 0..confounders {
                for (i, slot) in out.iter_mut().enumerate() {
                    for m in 0..mediators {
                        *slot += self.get(u, v, i, m, 0) + self.get(u, v, i, m, 1);
                    }
                }
            }
        }
        out
    }

    /// `P(u, i, m, l)` with `v` summed out.
    fn observed(&self, u: usize, i: usize, m: usize, l: usize) -> f64 {
        (0..self.dims.confounders).map(|v| self.get(u, v, i, m, l)).sum()
    }

    /// Conditionals of the observed joint that adjustment formulas consume.
    pub fn observational(&self) -> Result<ObservationalTables> {
        let ScmDims { users, items, mediators, .. } = self.dims;
        let mut m_given_ui = vec![0.0; users * items * mediators];
        let mut like_given_uim = vec![0.0; users * items * mediators];
        let mut like_given_ui = vec![0.0; users * items];
        for u in 0..users {
            for i in 0..items {
                let mut p_ui = 0.0;
                let mut p_ui_like = 0.0;
                for m in 0..mediators {
                    let liked = self.observed(u, i, m, 1);
                    let p_uim = liked + self.observed(u, i, m, 0);
                    if p_uim <= 0.0 {
                        return Err(HcrError::Positivity(format!(
                            "P(u={u}, i={i}, m={m}) = 0"
                        )));
                    }
                    like_given_uim[(u * items + i) * mediators + m] = liked / p_uim;
                    m_given_ui[(u * items + i) * mediators + m] = p_uim;
                    p_ui += p_uim;
                    p_ui_like += liked;
                }
                for m in 0..mediators {
                    m_given_ui[(u * items + i) * mediators + m] /= p_ui;
                }
                like_given_ui[u * items + i] = p_ui_like / p_ui;
            }
        }
        Ok(ObservationalTables {
            dims: self.dims,
            item_prior: self.item_marginal(),
            m_given_ui,
            like_given_uim,
            like_given_ui,
        })
    }
}

pub fn enumerate_joint(scm: &TabularScm) -> JointTable {
    let ScmDims { users, items, confounders, mediators } = scm.dims;
    let mut table = Vec::with_capacity(users * confounders * items * mediators * 2);
    for u in 0..users {
        for v in 0..confounders {
            for i in 0..items {
                let base = scm.p_u(u) * scm.p_v(v) * scm.p_i_given_v(v, i);
                for m in 0..mediators {
                    let pm = base * scm.p_m_given_ui(u, i, m);
                    let pl = scm.p_l_given_umv(u, m, v);
                    table.push(pm * (1.0 - pl));
                    table.push(pm * pl);
                }
            }
        }
    }
    JointTable { dims: scm.dims, table }
}

/// Conditionals over observed variables only; nothing here touches `v`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationalTables {
    dims: ScmDims,
    item_prior: Vec<f64>,
    m_given_ui: Vec<f64>,
    like_given_uim: Vec<f64>,
    like_given_ui: Vec<f64>,
}

impl ObservationalTables {
    pub fn item_prior(&self) -> &[f64] {
        &self.item_prior
    }

    /// `P(m | u, i)`.
    pub fn m_given_ui(&self, u: usize, i: usize, m: usize) -> f64 {
        self.m_given_ui[(u * self.dims.items + i) * self.dims.mediators + m]
    }

    /// `P(l = 1 | u, i, m)`.
    pub fn like_given_uim(&self, u: usize, i: usize, m: usize) -> f64 {
        self.like_given_uim[(u * self.dims.items + i) * self.dims.mediators + m]
    }

    /// Naive correlational `P(l = 1 | u, i)`.
    pub fn like_given_ui(&self, u: usize, i: usize) -> f64 {
        self.like_given_ui[u * self.dims.items + i]
    }

    /// `sum_{i'} P(l = 1 | u, i', m) P(i')`: the mediator's effect on the
    /// like, adjusted over observed items. With `weight_by_prior = false`
    /// the sum is unweighted, which is wrong and exists for mutation checks.
    pub fn mediator_effect(&self, u: usize, m: usize, weight_by_prior: bool) -> f64 {
        (0..self.dims.items)
            .map(|ip| {
                let w = if weight_by_prior { self.item_prior[ip] } else { 1.0 };
                self.like_given_uim(u, ip, m) * w
            })
            .sum()
    }

    /// Front-door adjusted `P(l = 1 | u, do(i))`.
    pub fn frontdoor(&self, u: usize, i: usize, weight_by_prior: bool) -> f64 {
        (0..self.dims.mediators)
            .map(|m| self.m_given_ui(u, i, m) * self.mediator_effect(u, m, weight_by_prior))
            .sum()
    }
}

/// Interventional ground truth by truncated factorization.
pub fn do_probability(scm: &TabularScm, u: usize, i: usize) -> f64 {
    let ScmDims { confounders, mediators, .. } = scm.dims;
    (0..confounders)
        .map(|v| {
            scm.p_v(v)
                * (0..mediators)
                    .map(|m| scm.p_m_given_ui(u, i, m) * scm.p_l_given_umv(u, m, v))
                    .sum::<f64>()
        })
        .sum()
}

/// Front-door estimate computed from the observed joint alone.
pub fn frontdoor_estimate(scm: &TabularScm, u: usize, i: usize) -> Result<f64> {
    let obs = enumerate_joint(scm).observational()?;
    Ok(obs.frontdoor(u, i, true))
}

/// Both sides of the mediator back-door identity for `(u, m)`:
/// `sum_v P(v) P(l | u, m, v)` and `sum_i P(l | u, i, m) P(i)`.
pub fn backdoor_mediator_effect(scm: &TabularScm, u: usize, m: usize) -> Result<(f64, f64)> {
    let left = (0..scm.dims.confounders)
        .map(|v| scm.p_v(v) * scm.p_l_given_umv(u, m, v))
        .sum();
    let obs = enumerate_joint(scm).observational()?;
    Ok((left, obs.mediator_effect(u, m, true)))
}

/// Worst absolute errors over an identity sweep.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IdentityReport {
    pub models_checked: usize,
    pub frontdoor_error: f64,
    pub backdoor_error: f64,
    pub collider_error: f64,
    pub normalization_error: f64,
}

impl IdentityReport {
    pub fn worst(&self) -> f64 {
        self.frontdoor_error
            .max(self.backdoor_error)
            .max(self.collider_error)
            .max(self.normalization_error)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.worst() <= tolerance
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepOptions {
    pub dims: ScmDims,
    /// When set, every model in the sweep draws its dimensions uniformly from
    /// `1..=dims` (confounders from `2..=dims.confounders`).
    pub vary_dims: bool,
    /// Drop the `P(i')` weight from the front-door sum.
    pub skip_item_prior: bool,
}

impl SweepOptions {
    pub fn new(dims: ScmDims) -> Self {
        Self { dims, vary_dims: false, skip_item_prior: false }
    }
}

fn dims_for_seed(opts: &SweepOptions, seed: u64) -> ScmDims {
    if !opts.vary_dims {
        return opts.dims;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_d1a5);
    let d = opts.dims;
    ScmDims {
        users: rng.random_range(1..=d.users),
        items: rng.random_range(1..=d.items),
        confounders: rng.random_range(2.min(d.confounders)..=d.confounders),
        mediators: rng.random_range(1..=d.mediators),
    }
}

/// Checks every identity on the random models seeded `0..num_models`.
pub fn identity_sweep(num_models: usize, opts: &SweepOptions) -> Result<IdentityReport> {
    opts.dims.validate()?;
    let mut report = IdentityReport::default();
    for seed in 0..num_models as u64 {
        let dims = dims_for_seed(opts, seed);
        let scm = TabularScm::random(dims, seed)?;
        let joint = enumerate_joint(&scm);
        let obs = joint.observational()?;
        report.normalization_error = report.normalization_error.max((joint.total() - 1.0).abs());
        for u in 0..dims.users {
            for i in 0..dims.items {
                let truth = do_probability(&scm, u, i);
                let fd = obs.frontdoor(u, i, !opts.skip_item_prior);
                report.frontdoor_error = report.frontdoor_error.max((fd - truth).abs());
                for m in 0..dims.mediators {
                    let diff = (obs.m_given_ui(u, i, m) - scm.p_m_given_ui(u, i, m)).abs();
                    report.collider_error = report.collider_error.max(diff);
                }
            }
            for m in 0..dims.mediators {
                let left: f64 =
                    (0..dims.confounders).map(|v| scm.p_v(v) * scm.p_l_given_umv(u, m, v)).sum();
                let right = obs.mediator_effect(u, m, !opts.skip_item_prior);
                report.backdoor_error = report.backdoor_error.max((left - right).abs());
            }
        }
        report.models_checked += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// One user, binary item/mediator/confounder; item prior depends on `v`.
    pub(crate) fn worked_example() -> TabularScm {
        let dims = ScmDims { users: 1, items: 2, confounders: 2, mediators: 2 };
        TabularScm::new(
            dims,
            vec![1.0],
            vec![0.5, 0.5],
            vec![0.7, 0.3, 0.2, 0.8],
            vec![0.6, 0.4, 0.1, 0.9],
            // [m][v]: m=0 -> (0.1, 0.2), m=1 -> (0.5, 0.9)
            vec![0.1, 0.2, 0.5, 0.9],
        )
        .unwrap()
    }

    fn dims(users: usize, items: usize, confounders: usize, mediators: usize) -> ScmDims {
        ScmDims { users, items, confounders, mediators }
    }

    #[test]
    fn worked_example_values() {
        let scm = worked_example();
        assert!((do_probability(&scm, 0, 1) - 0.645).abs() < 1e-15);
        assert!((frontdoor_estimate(&scm, 0, 1).unwrap() - 0.645).abs() < 1e-12);
        let (left, right) = backdoor_mediator_effect(&scm, 0, 1).unwrap();
        assert!((left - 0.70).abs() < 1e-15);
        assert!((right - 0.70).abs() < 1e-12);
    }

    #[test]
    fn uniform_model_gives_uniform_joint() {
        let d = dims(2, 3, 2, 2);
        let scm = TabularScm::new(
            d,
            vec![0.5; 2],
            vec![0.5; 2],
            vec![1.0 / 3.0; 6],
            vec![0.5; 12],
            vec![0.25; 8],
        )
        .unwrap();
        let joint = enumerate_joint(&scm);
        let cell = 1.0 / 24.0;
        for u in 0..2 {
            for v in 0..2 {
                for i in 0..3 {
                    for m in 0..2 {
                        assert!((joint.get(u, v, i, m, 1) - cell * 0.25).abs() < 1e-15);
                        assert!((joint.get(u, v, i, m, 0) - cell * 0.75).abs() < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn joint_is_normalized_and_item_marginal_matches() {
        let scm = TabularScm::random(dims(3, 4, 2, 3), 11).unwrap();
        let joint = enumerate_joint(&scm);
        assert!((joint.total() - 1.0).abs() < 1e-10);
        let marginal = joint.item_marginal();
        for (i, p) in marginal.iter().enumerate() {
            let direct: f64 = (0..2).map(|v| scm.p_v(v) * scm.p_i_given_v(v, i)).sum();
            assert!((p - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_like_table_gives_constant_effect() {
        let d = dims(2, 3, 2, 2);
        let mut scm = TabularScm::random(d, 3).unwrap();
        scm.p_l_given_umv = vec![0.37; 8];
        for u in 0..2 {
            for i in 0..3 {
                assert!((do_probability(&scm, u, i) - 0.37).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn without_confounding_frontdoor_matches_naive() {
        let d = dims(3, 4, 3, 2);
        let mut scm = TabularScm::random(d, 5).unwrap();
        for u in 0..3 {
            for m in 0..2 {
                let p = scm.p_l_given_umv(u, m, 0);
                for v in 0..3 {
                    scm.p_l_given_umv[(u * 2 + m) * 3 + v] = p;
                }
            }
        }
        let obs = enumerate_joint(&scm).observational().unwrap();
        for u in 0..3 {
            for i in 0..4 {
                assert!((obs.frontdoor(u, i, true) - obs.like_given_ui(u, i)).abs() < 1e-12);
            }
            for m in 0..2 {
                let (l, r) = backdoor_mediator_effect(&scm, u, m).unwrap();
                assert!((l - scm.p_l_given_umv(u, m, 0)).abs() < 1e-15);
                assert!((r - l).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn confounding_separates_naive_from_interventional() {
        let mut witnessed = 0;
        for seed in 0..20 {
            let scm = TabularScm::random(dims(3, 4, 2, 3), seed).unwrap();
            let obs = enumerate_joint(&scm).observational().unwrap();
            let gap = (0..3)
                .flat_map(|u| (0..4).map(move |i| (u, i)))
                .map(|(u, i)| (obs.like_given_ui(u, i) - do_probability(&scm, u, i)).abs())
                .fold(0.0, f64::max);
            if gap > 1e-6 {
                witnessed += 1;
            }
        }
        assert_eq!(witnessed, 20);
    }

    #[test]
    fn sweep_passes_and_mutation_fails() {
        let mut opts = SweepOptions::new(dims(4, 5, 3, 4));
        opts.vary_dims = true;
        let report = identity_sweep(100, &opts).unwrap();
        assert_eq!(report.models_checked, 100);
        assert!(report.passes(1e-10), "{report:?}");
        opts.skip_item_prior = true;
        let broken = identity_sweep(100, &opts).unwrap();
        assert!(!broken.passes(1e-10));
    }

    #[test]
    fn rejects_invalid_models() {
        let d = dims(1, 2, 2, 2);
        let ok_l = vec![0.5; 4];
        // p_i_given_v row does not sum to one
        assert!(TabularScm::new(d, vec![1.0], vec![0.5, 0.5], vec![0.5, 0.6, 0.5, 0.5], vec![0.5; 4], ok_l.clone()).is_err());
        // zero entry breaks positivity
        assert!(TabularScm::new(d, vec![1.0], vec![0.5, 0.5], vec![1.0, 0.0, 0.5, 0.5], vec![0.5; 4], ok_l.clone()).is_err());
        // wrong shape
        assert!(TabularScm::new(d, vec![1.0], vec![0.5, 0.5], vec![0.5; 4], vec![0.5; 3], ok_l).is_err());
        // dimension caps
        assert!(TabularScm::random(dims(9, 2, 2, 2), 0).is_err());
        assert!(TabularScm::random(dims(2, 2, 5, 2), 0).is_err());
    }

    #[test]
    fn random_models_are_strictly_positive() {
        let scm = TabularScm::random(dims(8, 8, 4, 8), 1).unwrap();
        assert!(scm.p_i_given_v.iter().all(|&p| p > 0.0));
        assert!(scm.p_m_given_ui.iter().all(|&p| p > 0.0));
    }
}
