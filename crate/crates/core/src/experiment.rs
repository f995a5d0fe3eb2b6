//! File-level orchestration behind the command line: simulate a world to
//! CSV, train a configured run, evaluate a checkpoint, run the ablation table
//! and check the identification identities. Every command is a pure function
//! of its config, seed and input files, so reruns reproduce outputs byte for
//! byte.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{ExperimentConfig, RUN_CT, RUN_HCR, RUN_HCR_NS};
use crate::data::{chronological_split, parse_interaction_log, DatasetSplit, ParsedLog, UserId};
use crate::error::{HcrError, Result};
use crate::eval::{
    causal_fidelity, causal_fidelity_with, evaluate_split, group_analysis, non_train_candidates, EvalReport,
    GroupSpec, HeldOut, MetricRow,
};
use crate::inference::{rank_with, ModelScorer, RankedList, ScoreVariant};
use crate::model::HcrModel;
use crate::oracle::{identity_sweep, IdentityReport, ScmDims, SweepOptions};
use crate::simulator::{build_world, simulate_log};
use crate::training::{fit, TrainHistory};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const INTERACTIONS_FILE: &str = "interactions.csv";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";
pub const EXPOSURE_FILE: &str = "item_exposure.csv";

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| HcrError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| HcrError::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| HcrError::io(path, e))
}

/// What a command produced, enough to replay it.
#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub tool_version: String,
    /// `(role, path)` pairs.
    pub files: Vec<(String, PathBuf)>,
}

impl RunManifest {
    pub fn new(command: &str, config_hash: &str, seed: Option<u64>) -> Self {
        Self {
            command: command.to_string(),
            config_hash: config_hash.to_string(),
            seed,
            tool_version: TOOL_VERSION.to_string(),
            files: Vec::new(),
        }
    }

    pub fn add(&mut self, role: &str, path: &Path) {
        self.files.push((role.to_string(), path.to_path_buf()));
    }

    pub fn file(&self, role: &str) -> Option<&Path> {
        self.files.iter().find(|(r, _)| r == role).map(|(_, p)| p.as_path())
    }

    pub fn missing_files(&self) -> Vec<&Path> {
        self.files.iter().map(|(_, p)| p.as_path()).filter(|p| !p.exists()).collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "command = {}", self.command);
        let _ = writeln!(out, "config_hash = {}", self.config_hash);
        if let Some(seed) = self.seed {
            let _ = writeln!(out, "seed = {seed}");
        }
        let _ = writeln!(out, "tool_version = {}", self.tool_version);
        for (role, path) in &self.files {
            let _ = writeln!(out, "file.{role} = {}", path.display());
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut m = Self::new("", "", None);
        m.tool_version.clear();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| HcrError::Config(format!("manifest line {line:?}")))?;
            match k {
                "command" => m.command = v.to_string(),
                "config_hash" => m.config_hash = v.to_string(),
                "tool_version" => m.tool_version = v.to_string(),
                "seed" => m.seed = Some(v.parse().map_err(|_| HcrError::Config(format!("manifest seed {v:?}")))?),
                _ => match k.strip_prefix("file.") {
                    Some(role) => m.add(role, Path::new(v)),
                    None => return Err(HcrError::Config(format!("manifest key {k:?}"))),
                },
            }
        }
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_text())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimulationSummary {
    pub records: usize,
    pub clicks: usize,
    pub likes: usize,
    /// Largest `|p_do - p_obs|` in the ground-truth dump.
    pub max_identity_gap: f64,
    pub mean_identity_gap: f64,
}

impl SimulationSummary {
    pub fn click_rate(&self) -> f64 {
        self.clicks as f64 / self.records.max(1) as f64
    }

    /// Likes per click.
    pub fn like_rate(&self) -> f64 {
        self.likes as f64 / self.clicks.max(1) as f64
    }
}

impl fmt::Display for SimulationSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "records = {}", self.records)?;
        writeln!(f, "clicks = {}", self.clicks)?;
        writeln!(f, "likes = {}", self.likes)?;
        writeln!(f, "click_rate = {:.6}", self.click_rate())?;
        writeln!(f, "like_rate = {:.6}", self.like_rate())?;
        writeln!(f, "mean_abs_pdo_minus_pobs = {:.6}", self.mean_identity_gap)?;
        write!(f, "max_abs_pdo_minus_pobs = {:.3e}", self.max_identity_gap)
    }
}

/// Builds the configured world for `seed` and writes the interaction log,
/// the ground truth and the item exposure scores into `out`.
pub fn simulate(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<(SimulationSummary, RunManifest)> {
    let world = build_world(cfg.world.clone(), seed)?;
    let log = simulate_log(&world, seed)?;
    let truth_csv = world.ground_truth_csv();
    let mut exposure_csv = String::from("item_id,exposure_score\n");
    for (i, e) in world.item_exposure_score.iter().enumerate() {
        let _ = writeln!(exposure_csv, "{i},{e:.17e}");
    }

    let mut manifest = RunManifest::new("simulate", &cfg.hash(), Some(seed));
    for (role, name, body) in [
        ("interactions", INTERACTIONS_FILE, log.to_csv()),
        ("ground_truth", GROUND_TRUTH_FILE, truth_csv),
        ("item_exposure", EXPOSURE_FILE, exposure_csv),
    ] {
        let path = out.join(name);
        write_file(&path, &body)?;
        manifest.add(role, &path);
    }
    manifest.write(&out.join("simulate.manifest"))?;

    let truth = GroundTruth::parse(&read_file(&out.join(GROUND_TRUTH_FILE))?)?;
    let (max_gap, mean_gap) = truth.identity_gap();
    let summary = SimulationSummary {
        records: log.len(),
        clicks: log.click_count(),
        likes: log.like_count(),
        max_identity_gap: max_gap,
        mean_identity_gap: mean_gap,
    };
    Ok((summary, manifest))
}

/// A parsed ground-truth dump keyed by raw ids.
#[derive(Clone, Debug, Default)]
pub struct GroundTruth {
    pairs: HashMap<(u64, u64), (f64, f64)>,
}

impl GroundTruth {
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            if n == 0 && line.starts_with("user_id") || line.trim().is_empty() {
                continue;
            }
            let bad = |reason: &str| HcrError::Malformed { line: n + 1, reason: reason.to_string() };
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 4 {
                return Err(bad("expected user_id,item_id,p_do,p_obs"));
            }
            let u = f[0].parse().map_err(|_| bad("bad user id"))?;
            let i = f[1].parse().map_err(|_| bad("bad item id"))?;
            let p_do: f64 = f[2].parse().map_err(|_| bad("bad p_do"))?;
            let p_obs: f64 = f[3].parse().map_err(|_| bad("bad p_obs"))?;
            pairs.insert((u, i), (p_do, p_obs));
        }
        Ok(Self { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn p_do(&self, user: u64, item: u64) -> Option<f64> {
        self.pairs.get(&(user, item)).map(|p| p.0)
    }

    /// Max and mean of `|p_do - p_obs|`.
    pub fn identity_gap(&self) -> (f64, f64) {
        let gaps = self.pairs.values().map(|(a, b)| (a - b).abs());
        let (max, sum) = gaps.fold((0.0f64, 0.0), |(m, s), g| (m.max(g), s + g));
        (max, sum / self.pairs.len().max(1) as f64)
    }
}

/// An interaction log on disk plus its split and optional exposure scores.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub parsed: ParsedLog,
    pub split: DatasetSplit,
    pub exposure: Option<Vec<f64>>,
}

impl Dataset {
    pub fn load(data_dir: &Path, train_fraction: f64) -> Result<Self> {
        let parsed = parse_interaction_log(&read_file(&data_dir.join(INTERACTIONS_FILE))?)?;
        let split = chronological_split(&parsed.log, train_fraction)?;
        let exposure_path = data_dir.join(EXPOSURE_FILE);
        let exposure = if exposure_path.exists() {
            Some(read_exposure(&read_file(&exposure_path)?, &parsed.item_labels)?)
        } else {
            None
        };
        Ok(Self { parsed, split, exposure })
    }
}

fn read_exposure(text: &str, item_labels: &[u64]) -> Result<Vec<f64>> {
    let mut by_raw = HashMap::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let bad = || HcrError::Malformed { line: n + 1, reason: "expected item_id,exposure_score".into() };
        let (i, e) = line.split_once(',').ok_or_else(bad)?;
        let i: u64 = i.trim().parse().map_err(|_| bad())?;
        let e: f64 = e.trim().parse().map_err(|_| bad())?;
        by_raw.insert(i, e);
    }
    item_labels
        .iter()
        .map(|raw| {
            by_raw.get(raw).copied().ok_or_else(|| HcrError::Config(format!("no exposure score for item {raw}")))
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: HcrModel,
    pub history: TrainHistory,
    pub manifest: RunManifest,
}

/// Trains the configured run on `data_dir` and writes `<run>.ckpt`,
/// `<run>.log` and `<run>.manifest` into `out`. `seed` overrides the run's
/// own seed.
pub fn train_run(
    cfg: &ExperimentConfig,
    run: &str,
    data_dir: &Path,
    out: &Path,
    seed: Option<u64>,
) -> Result<TrainOutcome> {
    let mut tc = cfg.run(run)?.clone();
    if let Some(seed) = seed {
        tc.seed = seed;
    }
    let data = Dataset::load(data_dir, cfg.eval.train_fraction)?;
    let exposure = if tc.exposure_factor {
        Some(data.exposure.clone().ok_or_else(|| {
            HcrError::Config(format!("run {run} uses the exposure factor but {EXPOSURE_FILE} is missing"))
        })?)
    } else {
        None
    };
    let (model, history) = fit(&data.split, &tc, exposure)?;

    let mut manifest = RunManifest::new(&format!("train {run}"), &cfg.hash(), Some(tc.seed));
    let ckpt = out.join(format!("{run}.ckpt"));
    fs::create_dir_all(out).map_err(|e| HcrError::io(out, e))?;
    model.save(&ckpt)?;
    manifest.add("checkpoint", &ckpt);
    let log_path = out.join(format!("{run}.log"));
    write_file(&log_path, &history.log_lines(tc.eval_k))?;
    manifest.add("epoch_log", &log_path);
    manifest.add("data", &data_dir.join(INTERACTIONS_FILE));
    manifest.write(&out.join(format!("{run}.manifest")))?;
    Ok(TrainOutcome { model, history, manifest })
}

#[derive(Clone, Debug)]
pub struct EvaluateOptions {
    pub checkpoint: PathBuf,
    pub data_dir: PathBuf,
    pub variants: Vec<ScoreVariant>,
    pub ks: Vec<usize>,
    /// Group breakdowns on the test split, when set.
    pub groups: Option<GroupSpec>,
    pub ground_truth: Option<PathBuf>,
    /// Directory for report files; nothing is written when `None`.
    pub output: Option<PathBuf>,
    pub train_fraction: f64,
    /// Also write per-group CSVs ready for plotting.
    pub figure_data: bool,
}

impl EvaluateOptions {
    pub fn new(checkpoint: &Path, data_dir: &Path) -> Self {
        Self {
            checkpoint: checkpoint.to_path_buf(),
            data_dir: data_dir.to_path_buf(),
            variants: vec![ScoreVariant::Hcr],
            ks: vec![10, 20, 50],
            groups: None,
            ground_truth: None,
            output: None,
            train_fraction: 0.7,
            figure_data: false,
        }
    }
}

/// Scores a checkpoint under each requested variant. Adds a `fidelity` row
/// per variant when a ground-truth dump is supplied.
pub fn evaluate(opts: &EvaluateOptions) -> Result<EvalReport> {
    if opts.ks.is_empty() || opts.ks.contains(&0) {
        return Err(HcrError::InvalidArgument("K values must be positive".into()));
    }
    let model = HcrModel::load(&opts.checkpoint)?;
    let data = Dataset::load(&opts.data_dir, opts.train_fraction)?;
    let split = &data.split;
    if model.config.num_users != split.num_users() || model.config.num_items != split.num_items() {
        return Err(HcrError::Checkpoint(format!(
            "checkpoint is {}x{} but the data has {} users and {} items",
            model.config.num_users,
            model.config.num_items,
            split.num_users(),
            split.num_items()
        )));
    }
    for v in &opts.variants {
        v.check(&model)?;
    }
    let truth = match &opts.ground_truth {
        Some(path) => Some(dense_truth(&GroundTruth::parse(&read_file(path)?)?, &data.parsed)?),
        None => None,
    };

    let mut report = EvalReport::default();
    let mut ranked = Vec::new();
    for &variant in &opts.variants {
        let scorer = ModelScorer::new(&model, variant)?;
        let name = variant.as_str();
        report.extend(evaluate_split(&scorer, name, split, HeldOut::Validation, &opts.ks)?);
        report.extend(evaluate_split(&scorer, name, split, HeldOut::Test, &opts.ks)?);
        if let Some(groups) = &opts.groups {
            report.extend(group_analysis(&scorer, name, split, groups, &opts.ks)?);
        }
        if let Some(truth) = &truth {
            let candidates = non_train_candidates(split);
            let users = candidates.iter().filter(|c| !c.is_empty()).count();
            let value = causal_fidelity_with(&scorer, |u, i| truth[u.index()][i.index()], &candidates)?;
            report.rows.push(MetricRow {
                metric: "fidelity".into(),
                variant: name.into(),
                split: HeldOut::Test.as_str().into(),
                group: "all".into(),
                k: None,
                value,
                users,
            });
        }
        if opts.output.is_some() {
            ranked.push((variant, test_rankings(&scorer, split, opts.ks.iter().copied().max().unwrap_or(1))?));
        }
    }

    if let Some(out) = &opts.output {
        let mut manifest = RunManifest::new("evaluate", "", None);
        manifest.add("checkpoint", &opts.checkpoint);
        let text = out.join("report.txt");
        write_file(&text, &report.to_text())?;
        manifest.add("report_text", &text);
        let csv = out.join("report.csv");
        write_file(&csv, &report.to_csv())?;
        manifest.add("report_csv", &csv);
        for (variant, lists) in &ranked {
            let path = out.join(format!("ranked_{}.csv", variant.as_str()));
            write_file(&path, &labelled_rankings_csv(lists, &data.parsed))?;
            manifest.add(&format!("ranked_{}", variant.as_str()), &path);
        }
        if opts.figure_data {
            let path = out.join("figure_groups.csv");
            write_file(&path, &figure_csv(&report))?;
            manifest.add("figure_groups", &path);
        }
        manifest.write(&out.join("evaluate.manifest"))?;
    }
    Ok(report)
}

fn dense_truth(truth: &GroundTruth, parsed: &ParsedLog) -> Result<Vec<Vec<f64>>> {
    parsed
        .user_labels
        .iter()
        .map(|&u| {
            parsed
                .item_labels
                .iter()
                .map(|&i| truth.p_do(u, i).ok_or_else(|| HcrError::Config(format!("ground truth lacks pair ({u}, {i})"))))
                .collect()
        })
        .collect()
}

fn test_rankings(scorer: &ModelScorer<'_>, split: &DatasetSplit, k: usize) -> Result<Vec<RankedList>> {
    let train_items = split.train.items_per_user();
    let mut lists = Vec::new();
    for (u, held) in split.test.iter().enumerate() {
        if held.is_empty() {
            continue;
        }
        lists.push(rank_with(scorer, UserId(u as u32), split.num_items(), &train_items[u], k)?);
    }
    Ok(lists)
}

fn labelled_rankings_csv(lists: &[RankedList], parsed: &ParsedLog) -> String {
    let mut out = String::from("user_id,rank,item_id,score\n");
    for list in lists {
        let user = parsed.user_labels[list.user.index()];
        for (pos, (item, s)) in list.items.iter().zip(&list.scores).enumerate() {
            let _ = writeln!(out, "{user},{},{},{s:.17e}", pos + 1, parsed.item_labels[item.index()]);
        }
    }
    out
}

fn figure_csv(report: &EvalReport) -> String {
    let mut out = String::from("variant,group,metric,k,value\n");
    for r in report.rows.iter().filter(|r| r.group != "all") {
        let k = r.k.map(|k| k.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{k},{:.6}", r.variant, r.group, r.metric, r.value);
    }
    out
}

/// One line of the ablation table; `seed` is `None` on mean rows.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub variant: String,
    pub seed: Option<u64>,
    pub fidelity: f64,
    pub recall: f64,
    pub ndcg: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationTable {
    pub k: usize,
    pub rows: Vec<AblationRow>,
}

/// Row labels of the ablation table, in order.
pub const ABLATION_VARIANTS: [&str; 6] = ["HCR", "HCR_T", "HCR_S1", "HCR_S2", "HCR_NS", "CT"];

impl AblationTable {
    pub fn get(&self, variant: &str, seed: Option<u64>) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == variant && r.seed == seed)
    }

    pub fn fidelities(&self, variant: &str) -> Vec<f64> {
        self.rows.iter().filter(|r| r.variant == variant && r.seed.is_some()).map(|r| r.fidelity).collect()
    }

    pub fn to_csv(&self) -> String {
        let k = self.k;
        let mut out = format!("variant,seed,fidelity,recall@{k},ndcg@{k}\n");
        for r in &self.rows {
            let seed = r.seed.map(|s| s.to_string()).unwrap_or_else(|| "mean".into());
            let _ = writeln!(out, "{},{seed},{:.6},{:.6},{:.6}", r.variant, r.fidelity, r.recall, r.ndcg);
        }
        out
    }

    pub fn to_text(&self) -> String {
        let k = self.k;
        let mut out = format!("{:<8} {:>6} {:>9} {:>10} {:>10}\n", "variant", "seed", "fidelity", format!("recall@{k}"), format!("ndcg@{k}"));
        for r in &self.rows {
            let seed = r.seed.map(|s| s.to_string()).unwrap_or_else(|| "mean".into());
            let _ = writeln!(out, "{:<8} {seed:>6} {:>9.4} {:>10.4} {:>10.4}", r.variant, r.fidelity, r.recall, r.ndcg);
        }
        out
    }
}

/// For each seed: simulate, train the `hcr`, `hcr_ns` and `ct` runs, and
/// score HCR, HCR_T, HCR_S1, HCR_S2 on the shared model, HCR on the
/// non-shared one and CT on the single-task one. Recall and NDCG use the
/// `hcr` run's `eval_k` on the test split. With `out` set, checkpoints,
/// tables and a manifest are written; the manifest is rewritten after every
/// seed so a failed run leaves a partial one behind.
pub fn ablate(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<AblationTable> {
    let hcr_cfg = cfg.run(RUN_HCR)?;
    let ns_cfg = cfg.run(RUN_HCR_NS)?;
    let ct_cfg = cfg.run(RUN_CT)?;
    let k = hcr_cfg.eval_k;
    let mut table = AblationTable { k, rows: Vec::new() };
    let mut manifest = RunManifest::new("ablate", &cfg.hash(), None);

    for &seed in &cfg.seeds {
        let world = build_world(cfg.world.clone(), seed)?;
        let log = simulate_log(&world, seed)?;
        let split = chronological_split(&log, cfg.eval.train_fraction)?;
        let candidates = non_train_candidates(&split);
        let exposure = || Some(world.item_exposure_score.clone());

        let mut models = Vec::new();
        for (run, tc) in [(RUN_HCR, hcr_cfg), (RUN_HCR_NS, ns_cfg), (RUN_CT, ct_cfg)] {
            let tc = crate::training::TrainConfig { seed, ..tc.clone() };
            let (model, _) = fit(&split, &tc, if tc.exposure_factor { exposure() } else { None })?;
            if let Some(out) = out {
                let path = out.join(format!("seed_{seed}")).join(format!("{run}.ckpt"));
                fs::create_dir_all(path.parent().unwrap()).map_err(|e| HcrError::io(&path, e))?;
                model.save(&path)?;
                manifest.add(&format!("seed_{seed}.{run}"), &path);
            }
            models.push(model);
        }
        let (hcr, ns, ct) = (&models[0], &models[1], &models[2]);
        let cells = [
            ("HCR", hcr, ScoreVariant::Hcr),
            ("HCR_T", hcr, ScoreVariant::HcrT),
            ("HCR_S1", hcr, ScoreVariant::HcrS1),
            ("HCR_S2", hcr, ScoreVariant::HcrS2),
            ("HCR_NS", ns, ScoreVariant::Hcr),
            ("CT", ct, ScoreVariant::Ct),
        ];
        for (label, model, variant) in cells {
            let scorer = ModelScorer::new(model, variant)?;
            let fidelity = causal_fidelity(&scorer, &world, &candidates)?;
            let report = evaluate_split(&scorer, label, &split, HeldOut::Test, &[k])?;
            let metric = |m: &str| report.find(label, "test", "all", m, Some(k)).unwrap_or(f64::NAN);
            table.rows.push(AblationRow {
                variant: label.into(),
                seed: Some(seed),
                fidelity,
                recall: metric("recall"),
                ndcg: metric("ndcg"),
            });
        }
        if let Some(out) = out {
            manifest.write(&out.join("ablate.manifest"))?;
        }
    }

    for label in ABLATION_VARIANTS {
        let rows: Vec<&AblationRow> = table.rows.iter().filter(|r| r.variant == label).collect();
        let mean = |f: fn(&AblationRow) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / rows.len() as f64;
        let row = AblationRow {
            variant: label.into(),
            seed: None,
            fidelity: mean(|r| r.fidelity),
            recall: mean(|r| r.recall),
            ndcg: mean(|r| r.ndcg),
        };
        table.rows.push(row);
    }

    if let Some(out) = out {
        for (role, name, body) in [("table_csv", "ablation.csv", table.to_csv()), ("table_text", "ablation.txt", table.to_text())] {
            let path = out.join(name);
            write_file(&path, &body)?;
            manifest.add(role, &path);
        }
        manifest.write(&out.join("ablate.manifest"))?;
    }
    Ok(table)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleCheckOptions {
    pub models: usize,
    pub dims: ScmDims,
    /// Draw each model's dimensions at random up to `dims`.
    pub vary_dims: bool,
    pub tolerance: f64,
    /// Drop the item-prior weight from the front-door sum.
    pub inject_fault: bool,
}

impl Default for OracleCheckOptions {
    fn default() -> Self {
        Self {
            models: 100,
            dims: ScmDims { users: 4, items: 5, confounders: 3, mediators: 4 },
            vary_dims: true,
            tolerance: 1e-10,
            inject_fault: false,
        }
    }
}

/// Runs the identity sweep; the caller decides what a failure means.
pub fn oracle_check(opts: &OracleCheckOptions) -> Result<IdentityReport> {
    if !(opts.tolerance >= 0.0) {
        return Err(HcrError::InvalidArgument(format!("tolerance {} must be non-negative", opts.tolerance)));
    }
    let sweep = SweepOptions { dims: opts.dims, vary_dims: opts.vary_dims, skip_item_prior: opts.inject_fault };
    identity_sweep(opts.models, &sweep)
}
