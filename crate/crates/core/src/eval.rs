//! Ranking metrics, group analyses and causal fidelity.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;

use crate::data::{DatasetSplit, ItemId, UserId};
use crate::error::{HcrError, Result};
use crate::inference::{rank_with, ItemScorer, RankedList};
use crate::simulator::SyntheticWorld;

/// Fraction of `relevant` found in the first `k` positions; `None` when
/// `relevant` is empty.
pub fn recall_at_k(ranked: &RankedList, relevant: &HashSet<ItemId>, k: usize) -> Option<f64> {
    if relevant.is_empty() {
        return None;
    }
    let hits = ranked.items.iter().take(k).filter(|i| relevant.contains(i)).count();
    Some(hits as f64 / relevant.len() as f64)
}

/// Binary-gain NDCG with a `1 / log2(p + 1)` discount.
pub fn ndcg_at_k(ranked: &RankedList, relevant: &HashSet<ItemId>, k: usize) -> Option<f64> {
    if relevant.is_empty() {
        return None;
    }
    let dcg: f64 = ranked
        .items
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| relevant.contains(i))
        .map(|(p, _)| 1.0 / ((p + 2) as f64).log2())
        .sum();
    let ideal: f64 = (0..k.min(relevant.len())).map(|p| 1.0 / ((p + 2) as f64).log2()).sum();
    Some(dcg / ideal)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeldOut {
    Validation,
    Test,
}

impl HeldOut {
    pub fn as_str(self) -> &'static str {
        match self {
            HeldOut::Validation => "valid",
            HeldOut::Test => "test",
        }
    }

    fn lists(self, split: &DatasetSplit) -> &[Vec<ItemId>] {
        match self {
            HeldOut::Validation => &split.validation,
            HeldOut::Test => &split.test,
        }
    }
}

/// One metric value; `k` is `None` for list-free metrics like fidelity.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub metric: String,
    pub variant: String,
    pub split: String,
    pub group: String,
    pub k: Option<usize>,
    pub value: f64,
    /// Users averaged into `value`.
    pub users: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<MetricRow>,
}

impl EvalReport {
    pub fn extend(&mut self, other: EvalReport) {
        self.rows.extend(other.rows);
    }

    pub fn find(&self, variant: &str, split: &str, group: &str, metric: &str, k: Option<usize>) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.variant == variant && r.split == split && r.group == group && r.metric == metric && r.k == k)
            .map(|r| r.value)
    }

    /// `variant.split.group.metric@K = value`, six decimals.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let metric = match r.k {
                Some(k) => format!("{}@{k}", r.metric),
                None => r.metric.clone(),
            };
            let _ = writeln!(out, "{}.{}.{}.{} = {:.6}", r.variant, r.split, r.group, metric, r.value);
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,variant,split,group,k,value\n");
        for r in &self.rows {
            let k = r.k.map(|k| k.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{},{},{:.6}", r.metric, r.variant, r.split, r.group, k, r.value);
        }
        out
    }
}

/// Per-user top-K lists for a scorer, computed once at the largest K.
struct Rankings {
    lists: Vec<Option<RankedList>>,
}

impl Rankings {
    fn compute<S: ItemScorer + ?Sized>(scorer: &S, split: &DatasetSplit, users: &[bool], k: usize) -> Result<Self> {
        let train_items = split.train.items_per_user();
        let mut lists = Vec::with_capacity(users.len());
        for (u, &wanted) in users.iter().enumerate() {
            if !wanted {
                lists.push(None);
                continue;
            }
            let list = rank_with(scorer, UserId(u as u32), split.num_items(), &train_items[u], k)?;
            lists.push(Some(list));
        }
        Ok(Self { lists })
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Mean {
    sum: f64,
    count: usize,
}

impl Mean {
    fn add(&mut self, x: Option<f64>) {
        if let Some(x) = x {
            self.sum += x;
            self.count += 1;
        }
    }

    fn value(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

fn push_means(
    report: &mut EvalReport,
    variant: &str,
    split: &str,
    group: &str,
    k: usize,
    recall: Mean,
    ndcg: Mean,
) {
    for (metric, mean) in [("recall", recall), ("ndcg", ndcg)] {
        if let Some(value) = mean.value() {
            report.rows.push(MetricRow {
                metric: metric.into(),
                variant: variant.into(),
                split: split.into(),
                group: group.into(),
                k: Some(k),
                value,
                users: mean.count,
            });
        }
    }
}

/// Recall and NDCG averaged over users with a non-empty held-out set.
/// K larger than a user's candidate count simply keeps every candidate.
pub fn evaluate_split<S: ItemScorer + ?Sized>(
    scorer: &S,
    variant: &str,
    split: &DatasetSplit,
    held_out: HeldOut,
    ks: &[usize],
) -> Result<EvalReport> {
    let lists = held_out.lists(split);
    let users: Vec<bool> = lists.iter().map(|l| !l.is_empty()).collect();
    if !users.iter().any(|&u| u) {
        return Err(HcrError::NoEvaluableUsers);
    }
    let max_k = ks.iter().copied().max().unwrap_or(1);
    let rankings = Rankings::compute(scorer, split, &users, max_k)?;
    let mut report = EvalReport::default();
    for &k in ks {
        let (mut recall, mut ndcg) = (Mean::default(), Mean::default());
        for (u, list) in rankings.lists.iter().enumerate() {
            if let Some(list) = list {
                let relevant: HashSet<ItemId> = lists[u].iter().copied().collect();
                recall.add(recall_at_k(list, &relevant, k));
                ndcg.add(ndcg_at_k(list, &relevant, k));
            }
        }
        push_means(&mut report, variant, held_out.as_str(), "all", k, recall, ndcg);
    }
    Ok(report)
}

/// Mean validation NDCG@K, the early-stopping signal. `None` when no user
/// has validation items.
pub fn validation_ndcg<S: ItemScorer + ?Sized>(scorer: &S, split: &DatasetSplit, k: usize) -> Result<Option<f64>> {
    match evaluate_split(scorer, "", split, HeldOut::Validation, &[k]) {
        Ok(report) => Ok(report.find("", "valid", "all", "ndcg", Some(k))),
        Err(HcrError::NoEvaluableUsers) => Ok(None),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupSpec {
    /// Share of users, by train click count, labelled active.
    pub active_fraction: f64,
    /// Share of items, by smoothed like/click ratio, in the high group.
    pub high_ratio_fraction: f64,
    pub chrono_subsets: usize,
}

impl Default for GroupSpec {
    fn default() -> Self {
        Self { active_fraction: 0.4, high_ratio_fraction: 1.0 / 3.0, chrono_subsets: 4 }
    }
}

impl GroupSpec {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |x: f64| x > 0.0 && x < 1.0;
        if !in_unit(self.active_fraction) || !in_unit(self.high_ratio_fraction) || self.chrono_subsets == 0 {
            return Err(HcrError::InvalidArgument(format!("invalid group spec {self:?}")));
        }
        Ok(())
    }
}

/// Active users: the top `ceil(fraction * N)` users by train click count,
/// ties to the lower index.
pub fn active_users(split: &DatasetSplit, fraction: f64) -> Vec<bool> {
    let n = split.num_users();
    let mut clicks = vec![0usize; n];
    for r in split.train.interactions().iter().filter(|r| r.click) {
        clicks[r.user.index()] += 1;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| clicks[b].cmp(&clicks[a]).then(a.cmp(&b)));
    let cutoff = (fraction * n as f64).ceil() as usize;
    let mut active = vec![false; n];
    for &u in order.iter().take(cutoff) {
        active[u] = true;
    }
    active
}

/// High like/click-ratio items: the top `ceil(fraction * I)` by
/// `(likes + 1) / (clicks + 2)` on train, ties to the lower index.
pub fn high_ratio_items(split: &DatasetSplit, fraction: f64) -> Vec<bool> {
    let n = split.num_items();
    let mut likes = vec![0.0; n];
    let mut clicks = vec![0.0; n];
    for r in split.train.interactions() {
        if r.click {
            clicks[r.item.index()] += 1.0;
        }
        if r.like {
            likes[r.item.index()] += 1.0;
        }
    }
    let ratio: Vec<f64> = (0..n).map(|i| (likes[i] + 1.0) / (clicks[i] + 2.0)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| ratio[b].total_cmp(&ratio[a]).then(a.cmp(&b)));
    let cutoff = (fraction * n as f64).ceil() as usize;
    let mut high = vec![false; n];
    for &i in order.iter().take(cutoff) {
        high[i] = true;
    }
    high
}

/// `chrono_subsets` time-ordered slices of one user's test likes; item `k`
/// of `n` lands in slice `floor(k * subsets / n)`.
pub fn chronological_subsets(items: &[ItemId], subsets: usize) -> Vec<Vec<ItemId>> {
    let mut out = vec![Vec::new(); subsets];
    let n = items.len();
    for (k, &item) in items.iter().enumerate() {
        out[k * subsets / n].push(item);
    }
    out
}

/// Recall within item group `in_group`, divided by the share of the top-K
/// list occupied by that group. `None` when the user has no relevant items
/// in the group; zero when the list holds none of the group.
pub fn normalized_recall(
    ranked: &RankedList,
    relevant: &HashSet<ItemId>,
    in_group: &[bool],
    k: usize,
) -> Option<f64> {
    let group_relevant: HashSet<ItemId> =
        relevant.iter().copied().filter(|i| in_group[i.index()]).collect();
    let recall = recall_at_k(ranked, &group_relevant, k)?;
    let top: Vec<&ItemId> = ranked.items.iter().take(k).collect();
    if top.is_empty() {
        return Some(0.0);
    }
    let share = top.iter().filter(|i| in_group[i.index()]).count() as f64 / top.len() as f64;
    Some(if share == 0.0 { 0.0 } else { recall / share })
}

/// Test-split breakdowns: active vs. less-active users, chronological
/// subsets of each user's test likes, and high vs. low like/click-ratio item
/// groups with normalized recall. Empty groups are omitted.
pub fn group_analysis<S: ItemScorer + ?Sized>(
    scorer: &S,
    variant: &str,
    split: &DatasetSplit,
    groups: &GroupSpec,
    ks: &[usize],
) -> Result<EvalReport> {
    groups.validate()?;
    let test = &split.test;
    let users: Vec<bool> = test.iter().map(|l| !l.is_empty()).collect();
    if !users.iter().any(|&u| u) {
        return Err(HcrError::NoEvaluableUsers);
    }
    let max_k = ks.iter().copied().max().unwrap_or(1);
    let rankings = Rankings::compute(scorer, split, &users, max_k)?;
    let active = active_users(split, groups.active_fraction);
    let high = high_ratio_items(split, groups.high_ratio_fraction);
    let low: Vec<bool> = high.iter().map(|h| !h).collect();
    let subsets: Vec<Vec<Vec<ItemId>>> = test
        .iter()
        .map(|items| {
            if items.is_empty() {
                Vec::new()
            } else {
                chronological_subsets(items, groups.chrono_subsets)
            }
        })
        .collect();

    let mut report = EvalReport::default();
    for &k in ks {
        let mut by_activity = [(Mean::default(), Mean::default()); 2];
        let mut by_subset = vec![(Mean::default(), Mean::default()); groups.chrono_subsets];
        let mut by_ratio = [(Mean::default(), Mean::default(), Mean::default()); 2];
        for (u, list) in rankings.lists.iter().enumerate() {
            let Some(list) = list else { continue };
            let relevant: HashSet<ItemId> = test[u].iter().copied().collect();
            let slot = &mut by_activity[usize::from(!active[u])];
            slot.0.add(recall_at_k(list, &relevant, k));
            slot.1.add(ndcg_at_k(list, &relevant, k));

            for (j, subset) in subsets[u].iter().enumerate() {
                let rel: HashSet<ItemId> = subset.iter().copied().collect();
                by_subset[j].0.add(recall_at_k(list, &rel, k));
                by_subset[j].1.add(ndcg_at_k(list, &rel, k));
            }

            for (g, mask) in [&high, &low].into_iter().enumerate() {
                let rel: HashSet<ItemId> = relevant.iter().copied().filter(|i| mask[i.index()]).collect();
                by_ratio[g].0.add(recall_at_k(list, &rel, k));
                by_ratio[g].1.add(ndcg_at_k(list, &rel, k));
                by_ratio[g].2.add(normalized_recall(list, &relevant, mask, k));
            }
        }
        for (name, (recall, ndcg)) in ["active", "inactive"].into_iter().zip(by_activity) {
            push_means(&mut report, variant, "test", name, k, recall, ndcg);
        }
        for (j, (recall, ndcg)) in by_subset.into_iter().enumerate() {
            push_means(&mut report, variant, "test", &format!("chrono{}", j + 1), k, recall, ndcg);
        }
        for (name, (recall, ndcg, normalized)) in ["ratio_high", "ratio_low"].into_iter().zip(by_ratio) {
            push_means(&mut report, variant, "test", name, k, recall, ndcg);
            if let Some(value) = normalized.value() {
                report.rows.push(MetricRow {
                    metric: "normalized_recall".into(),
                    variant: variant.into(),
                    split: "test".into(),
                    group: name.into(),
                    k: Some(k),
                    value,
                    users: normalized.count,
                });
            }
        }
    }
    Ok(report)
}

/// Average ranks (1-based) with ties sharing the mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman correlation; zero when either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - mean) * (y - mean);
        va += (x - mean) * (x - mean);
        vb += (y - mean) * (y - mean);
    }
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

/// Mean over users of the Spearman correlation between scorer output and
/// the world's interventional like probability on each user's candidates.
/// Users with an empty candidate list are skipped.
pub fn causal_fidelity<S: ItemScorer + ?Sized>(
    scorer: &S,
    world: &SyntheticWorld,
    candidates: &[Vec<ItemId>],
) -> Result<f64> {
    causal_fidelity_with(scorer, |u, i| world.true_interventional(u, i), candidates)
}

/// [`causal_fidelity`] against an arbitrary ground-truth function, e.g. one
/// read back from a ground-truth dump.
pub fn causal_fidelity_with<S, T>(scorer: &S, truth: T, candidates: &[Vec<ItemId>]) -> Result<f64>
where
    S: ItemScorer + ?Sized,
    T: Fn(UserId, ItemId) -> f64,
{
    let mut total = 0.0;
    let mut users = 0usize;
    for (u, items) in candidates.iter().enumerate() {
        if items.is_empty() {
            continue;
        }
        if items.len() < 3 {
            return Err(HcrError::InvalidArgument(format!(
                "user {u} has {} candidates; fidelity needs at least 3",
                items.len()
            )));
        }
        let user = UserId(u as u32);
        let model: Vec<f64> = items.iter().map(|&i| scorer.score(user, i)).collect();
        let truth: Vec<f64> = items.iter().map(|&i| truth(user, i)).collect();
        total += spearman(&model, &truth);
        users += 1;
    }
    if users == 0 {
        return Err(HcrError::NoEvaluableUsers);
    }
    Ok(total / users as f64)
}

/// Every item a user did not interact with in training.
pub fn non_train_candidates(split: &DatasetSplit) -> Vec<Vec<ItemId>> {
    split
        .train
        .items_per_user()
        .iter()
        .map(|seen: &BTreeSet<ItemId>| {
            (0..split.num_items() as u32).map(ItemId).filter(|i| !seen.contains(i)).collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Interaction, InteractionLog};

    fn list(items: &[u32]) -> RankedList {
        RankedList {
            user: UserId(0),
            items: items.iter().map(|&i| ItemId(i)).collect(),
            scores: (0..items.len()).rev().map(|s| s as f64).collect(),
        }
    }

    fn set(items: &[u32]) -> HashSet<ItemId> {
        items.iter().map(|&i| ItemId(i)).collect()
    }

    #[test]
    fn recall_examples() {
        assert_eq!(recall_at_k(&list(&[1, 2, 3]), &set(&[1, 3]), 3), Some(1.0));
        assert_eq!(recall_at_k(&list(&[1, 2, 3]), &set(&[1, 9]), 2), Some(0.5));
        assert_eq!(recall_at_k(&list(&[1, 2, 3]), &set(&[]), 2), None);
    }

    #[test]
    fn ndcg_examples() {
        assert_eq!(ndcg_at_k(&list(&[7, 1]), &set(&[7]), 2), Some(1.0));
        // [B, A, C] with A relevant
        let v = ndcg_at_k(&list(&[1, 0, 2]), &set(&[0]), 3).unwrap();
        assert!((v - 1.0 / 3f64.log2()).abs() < 1e-12);
        assert!((v - 0.6309).abs() < 1e-4);
    }

    #[test]
    fn spearman_extremes_and_ties() {
        let a = [0.1, 0.5, 0.3, 0.9];
        assert!((spearman(&a, &a) - 1.0).abs() < 1e-15);
        let rev: Vec<f64> = a.iter().map(|x| 1.0 - x).collect();
        assert!((spearman(&a, &rev) + 1.0).abs() < 1e-15);
        assert_eq!(average_ranks(&[2.0, 1.0, 2.0]), vec![2.5, 1.0, 2.5]);
        assert_eq!(spearman(&[1.0, 1.0, 1.0], &a[..3]), 0.0);
    }

    #[test]
    fn chrono_subsets_are_even_for_four() {
        let items: Vec<ItemId> = (0..4).map(ItemId).collect();
        let parts = chronological_subsets(&items, 4);
        assert!(parts.iter().all(|p| p.len() == 1));
        assert_eq!(parts[3], vec![ItemId(3)]);
        let parts = chronological_subsets(&items[..2], 4);
        assert_eq!(parts.iter().map(Vec::len).sum::<usize>(), 2);
    }

    #[test]
    fn normalized_recall_hand_case() {
        // Six items; group = {0, 1, 2}. Top-4 list [0, 3, 4, 1]; relevant {1, 2, 5}.
        let group = [true, true, true, false, false, false];
        let ranked = list(&[0, 3, 4, 1, 2, 5]);
        let relevant = set(&[1, 2, 5]);
        // group recall = |{1}| / |{1, 2}| = 0.5; share of group in top-4 = 2/4.
        let v = normalized_recall(&ranked, &relevant, &group, 4).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
        // Complement group: recall 0/1, share 2/4 -> 0.
        let other: Vec<bool> = group.iter().map(|g| !g).collect();
        assert_eq!(normalized_recall(&ranked, &relevant, &other, 4), Some(0.0));
        // Group absent from the list -> 0 rather than a division by zero.
        let ranked = list(&[3, 4, 5, 0]);
        assert_eq!(normalized_recall(&ranked, &set(&[0]), &group, 2), Some(0.0));
        assert_eq!(normalized_recall(&ranked, &set(&[4]), &group, 2), None);
    }

    fn split_with_clicks(clicks_per_user: &[usize]) -> DatasetSplit {
        let mut recs = Vec::new();
        let mut t = 0;
        for (u, &c) in clicks_per_user.iter().enumerate() {
            for i in 0..c {
                recs.push(Interaction { user: UserId(u as u32), item: ItemId(i as u32), timestamp: t, click: true, like: false });
                t += 1;
            }
        }
        let n = clicks_per_user.len();
        DatasetSplit {
            train: InteractionLog::new(recs, n, 10).unwrap(),
            validation: vec![Vec::new(); n],
            test: vec![vec![ItemId(9)]; n],
        }
    }

    #[test]
    fn active_split_uses_ceil_and_index_ties() {
        let split = split_with_clicks(&[2, 2, 2, 2, 2]);
        let active = active_users(&split, 0.4);
        assert_eq!(active, vec![true, true, false, false, false]);
        let split = split_with_clicks(&[1, 5, 3, 0, 4]);
        let active = active_users(&split, 0.4);
        assert_eq!(active, vec![false, true, false, false, true]);
    }

    #[test]
    fn group_report_partitions_users() {
        let split = split_with_clicks(&[1, 5, 3, 2, 4, 6, 1]);
        let scorer = |u: UserId, i: ItemId| ((u.0 * 7 + i.0 * 3) % 11) as f64;
        let overall = evaluate_split(&scorer, "X", &split, HeldOut::Test, &[2]).unwrap();
        let groups = group_analysis(&scorer, "X", &split, &GroupSpec::default(), &[2]).unwrap();
        let total = overall.find("X", "test", "all", "recall", Some(2)).unwrap();
        let weighted: f64 = groups
            .rows
            .iter()
            .filter(|r| r.metric == "recall" && (r.group == "active" || r.group == "inactive"))
            .map(|r| r.value * r.users as f64)
            .sum::<f64>()
            / 7.0;
        assert!((weighted - total).abs() < 1e-12);
    }

    #[test]
    fn no_evaluable_users() {
        let mut split = split_with_clicks(&[1, 1]);
        split.test = vec![Vec::new(); 2];
        let scorer = |_: UserId, _: ItemId| 0.0;
        assert!(matches!(evaluate_split(&scorer, "X", &split, HeldOut::Test, &[5]), Err(HcrError::NoEvaluableUsers)));
        assert_eq!(validation_ndcg(&scorer, &split, 5).unwrap(), None);
    }

    #[test]
    fn report_formats() {
        let report = EvalReport {
            rows: vec![MetricRow {
                metric: "recall".into(),
                variant: "HCR".into(),
                split: "test".into(),
                group: "all".into(),
                k: Some(50),
                value: 0.25,
                users: 3,
            }],
        };
        assert_eq!(report.to_text(), "HCR.test.all.recall@50 = 0.250000\n");
        assert_eq!(report.to_csv(), "metric,variant,split,group,k,value\nrecall,HCR,test,all,50,0.250000\n");
    }
}
