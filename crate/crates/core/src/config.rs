//! Experiment configuration: UTF-8 `key = value` text with `[section]`
//! headers.
//!
//! ```text
//! [world]
//! num_users = 200
//! confounder_prior = 0.5, 0.5
//!
//! [train.hcr]
//! beta = 1
//!
//! [eval]
//! ks = 10, 20, 50
//!
//! [experiment]
//! seeds = 1, 2, 3, 4, 5
//! ```
//!
//! Missing keys keep their defaults; unknown sections and keys are errors.
//! When no `[train.*]` section is present the three standard runs `hcr`,
//! `hcr_ns` and `ct` are used.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;
use sha2::{Digest, Sha256};

use crate::error::{HcrError, Result};
use crate::eval::GroupSpec;
use crate::model::ModelMode;
use crate::simulator::WorldSpec;
use crate::training::TrainConfig;

/// Environment variable that replaces the configured seed list.
pub const SEED_ENV: &str = "HCR_SEED";

pub const RUN_HCR: &str = "hcr";
pub const RUN_HCR_NS: &str = "hcr_ns";
pub const RUN_CT: &str = "ct";

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSettings {
    pub ks: Vec<usize>,
    /// Emit user/item group breakdowns on the test split.
    pub groups: bool,
    pub group_spec: GroupSpec,
    /// Share of the time-ordered log used for training.
    pub train_fraction: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self { ks: vec![10, 20, 50], groups: true, group_spec: GroupSpec::default(), train_fraction: 0.7 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub world: WorldSpec,
    pub runs: BTreeMap<String, TrainConfig>,
    pub eval: EvalSettings,
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            world: WorldSpec::default(),
            runs: default_runs(),
            eval: EvalSettings::default(),
            output_dir: PathBuf::from("out"),
            seeds: vec![1, 2, 3, 4, 5],
        }
    }
}

fn default_runs() -> BTreeMap<String, TrainConfig> {
    let hcr = TrainConfig::default();
    let ns = TrainConfig { share_embeddings: false, ..hcr.clone() };
    let ct = TrainConfig { mode: ModelMode::Ct, ..hcr.clone() };
    [(RUN_HCR, hcr), (RUN_HCR_NS, ns), (RUN_CT, ct)].into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

impl ExperimentConfig {
    /// Reads a config file and applies the `HCR_SEED` override.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HcrError::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        cfg.apply_seed_override(std::env::var(SEED_ENV).ok().as_deref())?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| HcrError::Config(e.to_string()))?;
        let mut cfg = Self::default();
        let mut runs = BTreeMap::new();
        for (name, props) in ini.iter() {
            let name = name.unwrap_or("").trim();
            let mut section = Section::new(name, props.iter().collect());
            match name {
                "" if section.is_empty() => {}
                "world" => read_world(&mut section, &mut cfg.world)?,
                "eval" => read_eval(&mut section, &mut cfg.eval)?,
                "experiment" => {
                    section.take("output_dir", |v| Ok(PathBuf::from(v)), &mut cfg.output_dir)?;
                    section.take("seeds", parse_seeds, &mut cfg.seeds)?;
                }
                _ => match name.strip_prefix("train.") {
                    Some(run) if !run.is_empty() => {
                        let mut tc = TrainConfig::default();
                        read_train(&mut section, &mut tc)?;
                        runs.insert(run.to_string(), tc);
                    }
                    _ => return Err(HcrError::Config(format!("unknown section [{name}]"))),
                },
            }
            section.finish()?;
        }
        if !runs.is_empty() {
            cfg.runs = runs;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Replaces the seed list with a comma-separated override, if any.
    pub fn apply_seed_override(&mut self, value: Option<&str>) -> Result<()> {
        if let Some(v) = value.filter(|v| !v.trim().is_empty()) {
            self.seeds = parse_seeds(v).map_err(|e| HcrError::Config(format!("{SEED_ENV}: {e}")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate().map_err(|e| HcrError::Config(e.to_string()))?;
        if self.seeds.is_empty() {
            return Err(HcrError::Config("seed list is empty".into()));
        }
        if self.eval.ks.is_empty() || self.eval.ks.contains(&0) {
            return Err(HcrError::Config("ks must be a non-empty list of positive cutoffs".into()));
        }
        if !(self.eval.train_fraction > 0.0 && self.eval.train_fraction < 1.0) {
            return Err(HcrError::Config(format!("train_fraction {} outside (0, 1)", self.eval.train_fraction)));
        }
        self.eval.group_spec.validate().map_err(|e| HcrError::Config(e.to_string()))?;
        for (name, run) in &self.runs {
            run.validate().map_err(|e| HcrError::Config(format!("[train.{name}]: {e}")))?;
        }
        Ok(())
    }

    pub fn run(&self, name: &str) -> Result<&TrainConfig> {
        self.runs.get(name).ok_or_else(|| HcrError::Config(format!("no [train.{name}] section")))
    }

    /// Canonical text form; parsing it yields an equal config.
    pub fn to_text(&self) -> String {
        let w = &self.world;
        let mut out = String::from("[world]\n");
        let kv = |out: &mut String, k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv(&mut out, "num_users", w.num_users.to_string());
        kv(&mut out, "num_items", w.num_items.to_string());
        kv(&mut out, "embed_dim", w.embed_dim.to_string());
        kv(&mut out, "confounder_prior", join(&w.confounder_prior));
        kv(&mut out, "confounder_item_strength", w.confounder_item_strength.to_string());
        kv(&mut out, "confounder_like_strength", w.confounder_like_strength.to_string());
        kv(&mut out, "click_bias", w.click_bias.to_string());
        kv(&mut out, "like_bias", w.like_bias.to_string());
        kv(&mut out, "exposure_strength", w.exposure_strength.to_string());
        kv(&mut out, "exposure_scale", w.exposure_scale.to_string());
        kv(&mut out, "noise_scale", w.noise_scale.to_string());
        kv(&mut out, "preference_scale", w.preference_scale.to_string());
        kv(&mut out, "impressions_per_user", w.impressions_per_user.to_string());
        for (name, t) in &self.runs {
            let _ = writeln!(out, "\n[train.{name}]");
            kv(&mut out, "beta", t.beta.to_string());
            kv(&mut out, "learning_rate", t.learning_rate.to_string());
            kv(&mut out, "l2", t.l2.to_string());
            kv(&mut out, "batch_size", t.batch_size.to_string());
            kv(&mut out, "max_epochs", t.max_epochs.to_string());
            kv(&mut out, "patience", t.patience.to_string());
            kv(&mut out, "eval_k", t.eval_k.to_string());
            kv(&mut out, "seed", t.seed.to_string());
            kv(&mut out, "mode", t.mode.to_string());
            kv(&mut out, "embed_dim", t.embed_dim.to_string());
            kv(&mut out, "share_embeddings", t.share_embeddings.to_string());
            kv(&mut out, "exposure_factor", t.exposure_factor.to_string());
            kv(&mut out, "negative_sampling_ratio", t.negative_sampling_ratio.to_string());
        }
        let e = &self.eval;
        out.push_str("\n[eval]\n");
        kv(&mut out, "ks", join(&e.ks));
        kv(&mut out, "groups", e.groups.to_string());
        kv(&mut out, "active_fraction", e.group_spec.active_fraction.to_string());
        kv(&mut out, "high_ratio_fraction", e.group_spec.high_ratio_fraction.to_string());
        kv(&mut out, "chrono_subsets", e.group_spec.chrono_subsets.to_string());
        kv(&mut out, "train_fraction", e.train_fraction.to_string());
        out.push_str("\n[experiment]\n");
        kv(&mut out, "output_dir", self.output_dir.display().to_string());
        kv(&mut out, "seeds", join(&self.seeds));
        out
    }

    /// SHA-256 of [`Self::to_text`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

fn join<T: ToString>(values: &[T]) -> String {
    values.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

fn read_world(s: &mut Section, w: &mut WorldSpec) -> Result<()> {
    s.take("num_users", parse_num, &mut w.num_users)?;
    s.take("num_items", parse_num, &mut w.num_items)?;
    s.take("embed_dim", parse_num, &mut w.embed_dim)?;
    s.take("confounder_prior", parse_list, &mut w.confounder_prior)?;
    s.take("confounder_item_strength", parse_num, &mut w.confounder_item_strength)?;
    s.take("confounder_like_strength", parse_num, &mut w.confounder_like_strength)?;
    s.take("click_bias", parse_num, &mut w.click_bias)?;
    s.take("like_bias", parse_num, &mut w.like_bias)?;
    s.take("exposure_strength", parse_num, &mut w.exposure_strength)?;
    s.take("exposure_scale", parse_num, &mut w.exposure_scale)?;
    s.take("noise_scale", parse_num, &mut w.noise_scale)?;
    s.take("preference_scale", parse_num, &mut w.preference_scale)?;
    s.take("impressions_per_user", parse_num, &mut w.impressions_per_user)
}

fn read_train(s: &mut Section, t: &mut TrainConfig) -> Result<()> {
    s.take("beta", parse_num, &mut t.beta)?;
    s.take("learning_rate", parse_num, &mut t.learning_rate)?;
    s.take("l2", parse_num, &mut t.l2)?;
    s.take("batch_size", parse_num, &mut t.batch_size)?;
    s.take("max_epochs", parse_num, &mut t.max_epochs)?;
    s.take("patience", parse_num, &mut t.patience)?;
    s.take("eval_k", parse_num, &mut t.eval_k)?;
    s.take("seed", parse_num, &mut t.seed)?;
    s.take("mode", parse_num, &mut t.mode)?;
    s.take("embed_dim", parse_num, &mut t.embed_dim)?;
    s.take("share_embeddings", parse_bool, &mut t.share_embeddings)?;
    s.take("exposure_factor", parse_bool, &mut t.exposure_factor)?;
    s.take("negative_sampling_ratio", parse_num, &mut t.negative_sampling_ratio)
}

fn read_eval(s: &mut Section, e: &mut EvalSettings) -> Result<()> {
    s.take("ks", parse_list, &mut e.ks)?;
    s.take("groups", parse_bool, &mut e.groups)?;
    s.take("active_fraction", parse_num, &mut e.group_spec.active_fraction)?;
    s.take("high_ratio_fraction", parse_num, &mut e.group_spec.high_ratio_fraction)?;
    s.take("chrono_subsets", parse_num, &mut e.group_spec.chrono_subsets)?;
    s.take("train_fraction", parse_num, &mut e.train_fraction)
}

fn parse_num<T: FromStr>(v: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| e.to_string())
}

fn parse_list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    v.split(',').filter(|p| !p.trim().is_empty()).map(|p| parse_num(p.trim())).collect()
}

fn parse_seeds(v: &str) -> std::result::Result<Vec<u64>, String> {
    parse_list(v)
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(format!("expected a boolean, got {v:?}")),
    }
}

/// Key/value pairs of one section; every key must be consumed.
struct Section<'a> {
    name: &'a str,
    entries: Vec<(&'a str, &'a str)>,
    used: Vec<bool>,
}

impl<'a> Section<'a> {
    fn new(name: &'a str, entries: Vec<(&'a str, &'a str)>) -> Self {
        let used = vec![false; entries.len()];
        Self { name, entries, used }
    }

    fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn take<T>(
        &mut self,
        key: &str,
        parse: impl Fn(&str) -> std::result::Result<T, String>,
        slot: &mut T,
    ) -> Result<()> {
        for (idx, (k, v)) in self.entries.iter().enumerate() {
            if k.trim() == key {
                *slot = parse(v.trim())
                    .map_err(|e| HcrError::Config(format!("[{}] {key}: {e}", self.name)))?;
                self.used[idx] = true;
            }
        }
        Ok(())
    }

    fn finish(self) -> Result<()> {
        match self.entries.iter().zip(&self.used).find(|(_, used)| !**used) {
            Some(((k, _), _)) if self.name.is_empty() => {
                Err(HcrError::Config(format!("key {k:?} outside any section")))
            }
            Some(((k, _), _)) => Err(HcrError::Config(format!("unknown key {k:?} in [{}]", self.name))),
            None => Ok(()),
        }
    }
}
