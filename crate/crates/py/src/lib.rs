//! Python bindings: simulate a world, train and score models, evaluate
//! rankings and run the identity checks without leaving Python.

use std::collections::HashSet;
use std::path::PathBuf;

use hcr_core::eval::{self, HeldOut};
use hcr_core::experiment::{self, OracleCheckOptions};
use hcr_core::inference::{self, ModelScorer, RankedList, ScoreVariant};
use hcr_core::model::{HcrModel, ModelMode};
use hcr_core::oracle::ScmDims;
use hcr_core::training::{self, TrainConfig};
use hcr_core::{HcrError, ItemId, UserId};
use pyo3::exceptions::{PyIOError, PyIndexError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: HcrError) -> PyErr {
    match e {
        HcrError::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn variant(name: &str) -> PyResult<ScoreVariant> {
    name.parse().map_err(py_err)
}

#[pyclass(name = "World", module = "hcr_py", frozen)]
struct PyWorld {
    inner: hcr_core::SyntheticWorld,
}

#[pymethods]
impl PyWorld {
    #[new]
    #[pyo3(signature = (
        seed, *, num_users = 200, num_items = 300, embed_dim = 4, confounder_prior = None,
        confounder_item_strength = 1.0, confounder_like_strength = 2.0, click_bias = 0.0, like_bias = 0.0,
        exposure_strength = 1.0, exposure_scale = 1.0, noise_scale = 0.5, preference_scale = 3.0,
        impressions_per_user = 150
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        seed: u64,
        num_users: usize,
        num_items: usize,
        embed_dim: usize,
        confounder_prior: Option<Vec<f64>>,
        confounder_item_strength: f64,
        confounder_like_strength: f64,
        click_bias: f64,
        like_bias: f64,
        exposure_strength: f64,
        exposure_scale: f64,
        noise_scale: f64,
        preference_scale: f64,
        impressions_per_user: usize,
    ) -> PyResult<Self> {
        let spec = hcr_core::WorldSpec {
            num_users,
            num_items,
            embed_dim,
            confounder_prior: confounder_prior.unwrap_or_else(|| vec![0.5, 0.5]),
            confounder_item_strength,
            confounder_like_strength,
            click_bias,
            like_bias,
            exposure_strength,
            exposure_scale,
            noise_scale,
            preference_scale,
            impressions_per_user,
        };
        let inner = hcr_core::build_world(spec, seed).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn num_users(&self) -> usize {
        self.inner.num_users()
    }

    #[getter]
    fn num_items(&self) -> usize {
        self.inner.num_items()
    }

    #[getter]
    fn item_confounder(&self) -> Vec<usize> {
        self.inner.item_confounder.clone()
    }

    #[getter]
    fn item_exposure_score(&self) -> Vec<f64> {
        self.inner.item_exposure_score.clone()
    }

    fn click_probability(&self, user: u32, item: u32) -> PyResult<f64> {
        self.check(user, item)?;
        Ok(self.inner.click_probability(UserId(user), ItemId(item)))
    }

    fn true_interventional(&self, user: u32, item: u32) -> PyResult<f64> {
        self.check(user, item)?;
        Ok(self.inner.true_interventional(UserId(user), ItemId(item)))
    }

    fn observational_like_rate(&self, user: u32, item: u32) -> PyResult<f64> {
        self.check(user, item)?;
        Ok(self.inner.observational_like_rate(UserId(user), ItemId(item)))
    }

    fn simulate(&self, seed: u64) -> PyResult<PyLog> {
        Ok(PyLog { inner: hcr_core::simulate_log(&self.inner, seed).map_err(py_err)? })
    }

    fn ground_truth_csv(&self) -> String {
        self.inner.ground_truth_csv()
    }
}

impl PyWorld {
    fn check(&self, user: u32, item: u32) -> PyResult<()> {
        if user as usize >= self.inner.num_users() || item as usize >= self.inner.num_items() {
            return Err(PyIndexError::new_err(format!("pair ({user}, {item}) out of range")));
        }
        Ok(())
    }
}

#[pyclass(name = "InteractionLog", module = "hcr_py", frozen)]
struct PyLog {
    inner: hcr_core::InteractionLog,
}

#[pymethods]
impl PyLog {
    /// Parses `user_id,item_id,timestamp,click,like` text; ids are re-indexed densely.
    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        Ok(Self { inner: hcr_core::parse_interaction_log(text).map_err(py_err)?.log })
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn num_users(&self) -> usize {
        self.inner.num_users()
    }

    #[getter]
    fn num_items(&self) -> usize {
        self.inner.num_items()
    }

    #[getter]
    fn click_count(&self) -> usize {
        self.inner.click_count()
    }

    #[getter]
    fn like_count(&self) -> usize {
        self.inner.like_count()
    }

    /// `(user, item, timestamp, click, like)` tuples in time order.
    fn records(&self) -> Vec<(u32, u32, u64, bool, bool)> {
        self.inner.interactions().iter().map(|r| (r.user.0, r.item.0, r.timestamp, r.click, r.like)).collect()
    }

    #[pyo3(signature = (train_fraction = 0.7))]
    fn split(&self, train_fraction: f64) -> PyResult<PySplit> {
        Ok(PySplit { inner: hcr_core::chronological_split(&self.inner, train_fraction).map_err(py_err)? })
    }
}

fn ids(lists: &[Vec<ItemId>]) -> Vec<Vec<u32>> {
    lists.iter().map(|l| l.iter().map(|i| i.0).collect()).collect()
}

#[pyclass(name = "DatasetSplit", module = "hcr_py", frozen)]
struct PySplit {
    inner: hcr_core::DatasetSplit,
}

#[pymethods]
impl PySplit {
    #[getter]
    fn train(&self) -> PyLog {
        PyLog { inner: self.inner.train.clone() }
    }

    #[getter]
    fn validation(&self) -> Vec<Vec<u32>> {
        ids(&self.inner.validation)
    }

    #[getter]
    fn test(&self) -> Vec<Vec<u32>> {
        ids(&self.inner.test)
    }

    #[getter]
    fn num_users(&self) -> usize {
        self.inner.num_users()
    }

    #[getter]
    fn num_items(&self) -> usize {
        self.inner.num_items()
    }
}

#[pyclass(name = "Model", module = "hcr_py", frozen)]
struct PyModel {
    inner: HcrModel,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: HcrModel::load(&path).map_err(py_err)? })
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(Self { inner: HcrModel::from_bytes(data).map_err(py_err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(py_err)
    }

    fn to_bytes(&self) -> Vec<u8> {
        self.inner.to_bytes()
    }

    #[getter]
    fn mode(&self) -> String {
        self.inner.mode().to_string()
    }

    #[getter]
    fn num_users(&self) -> usize {
        self.inner.config.num_users
    }

    #[getter]
    fn num_items(&self) -> usize {
        self.inner.config.num_items
    }

    #[pyo3(signature = (user, item, variant = "HCR"))]
    fn score(&self, user: u32, item: u32, variant: &str) -> PyResult<f64> {
        self.check(user, item)?;
        inference::score(&self.inner, UserId(user), ItemId(item), self::variant(variant)?).map_err(py_err)
    }

    fn heads(&self, user: u32, item: u32) -> PyResult<(f64, f64, f64)> {
        self.check(user, item)?;
        let (u, i) = (UserId(user), ItemId(item));
        Ok((self.inner.forward_click(u, i), self.inner.forward_h1(u, i), self.inner.forward_h2(u, i)))
    }

    /// Top-`k` `(item, score)` pairs outside `exclude`.
    #[pyo3(signature = (user, k, variant = "HCR", exclude = Vec::new()))]
    fn rank(&self, user: u32, k: usize, variant: &str, exclude: Vec<u32>) -> PyResult<Vec<(u32, f64)>> {
        self.check(user, 0)?;
        let exclude = exclude.into_iter().map(ItemId).collect();
        let scorer = ModelScorer::new(&self.inner, self::variant(variant)?).map_err(py_err)?;
        let list = inference::rank_with(&scorer, UserId(user), self.inner.config.num_items, &exclude, k)
            .map_err(py_err)?;
        Ok(list.items.iter().map(|i| i.0).zip(list.scores).collect())
    }

    /// Recall and NDCG rows on the validation and test splits.
    #[pyo3(signature = (split, variant = "HCR", ks = vec![10, 20, 50]))]
    fn evaluate<'py>(&self, py: Python<'py>, split: &PySplit, variant: &str, ks: Vec<usize>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let v = self::variant(variant)?;
        let scorer = ModelScorer::new(&self.inner, v).map_err(py_err)?;
        let mut rows = Vec::new();
        for held in [HeldOut::Validation, HeldOut::Test] {
            let report = eval::evaluate_split(&scorer, v.as_str(), &split.inner, held, &ks).map_err(py_err)?;
            for r in report.rows {
                let d = PyDict::new(py);
                d.set_item("metric", r.metric)?;
                d.set_item("split", r.split)?;
                d.set_item("k", r.k)?;
                d.set_item("value", r.value)?;
                d.set_item("users", r.users)?;
                rows.push(d);
            }
        }
        Ok(rows)
    }

    /// Mean per-user rank correlation with the world's interventional like
    /// probability over non-train items.
    #[pyo3(signature = (world, split, variant = "HCR"))]
    fn causal_fidelity(&self, world: &PyWorld, split: &PySplit, variant: &str) -> PyResult<f64> {
        let scorer = ModelScorer::new(&self.inner, self::variant(variant)?).map_err(py_err)?;
        eval::causal_fidelity(&scorer, &world.inner, &eval::non_train_candidates(&split.inner)).map_err(py_err)
    }
}

impl PyModel {
    fn check(&self, user: u32, item: u32) -> PyResult<()> {
        if user as usize >= self.inner.config.num_users || item as usize >= self.inner.config.num_items {
            return Err(PyIndexError::new_err(format!("pair ({user}, {item}) out of range")));
        }
        Ok(())
    }
}

/// Trains an HCR or CT model; returns the best model and per-epoch
/// `(epoch, train_loss, selection_metric)` tuples.
#[pyfunction]
#[pyo3(signature = (
    split, *, mode = "HCR", beta = 1.0, learning_rate = 0.01, l2 = 1e-2, batch_size = 1024, max_epochs = 200,
    patience = 10, eval_k = 50, seed = 0, embed_dim = 8, share_embeddings = true, exposure = None,
    negative_sampling_ratio = 0
))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    split: &PySplit,
    mode: &str,
    beta: f64,
    learning_rate: f64,
    l2: f64,
    batch_size: usize,
    max_epochs: usize,
    patience: usize,
    eval_k: usize,
    seed: u64,
    embed_dim: usize,
    share_embeddings: bool,
    exposure: Option<Vec<f64>>,
    negative_sampling_ratio: usize,
) -> PyResult<(PyModel, Vec<(usize, f64, f64)>)> {
    let cfg = TrainConfig {
        beta,
        learning_rate,
        l2,
        batch_size,
        max_epochs,
        patience,
        eval_k,
        seed,
        mode: mode.parse::<ModelMode>().map_err(py_err)?,
        embed_dim,
        share_embeddings,
        exposure_factor: exposure.is_some(),
        negative_sampling_ratio,
    };
    let split = &split.inner;
    let (model, history) = py.detach(|| training::fit(split, &cfg, exposure)).map_err(py_err)?;
    let epochs = history.per_epoch.iter().map(|e| (e.epoch, e.train_loss, e.validation_metric)).collect();
    Ok((PyModel { inner: model }, epochs))
}

fn ranked(items: Vec<u32>) -> RankedList {
    let scores = (0..items.len()).rev().map(|s| s as f64).collect();
    RankedList { user: UserId(0), items: items.into_iter().map(ItemId).collect(), scores }
}

/// `None` when `relevant` is empty.
#[pyfunction]
fn recall_at_k(ranked_items: Vec<u32>, relevant: HashSet<u32>, k: usize) -> Option<f64> {
    eval::recall_at_k(&ranked(ranked_items), &relevant.into_iter().map(ItemId).collect(), k)
}

/// `None` when `relevant` is empty.
#[pyfunction]
fn ndcg_at_k(ranked_items: Vec<u32>, relevant: HashSet<u32>, k: usize) -> Option<f64> {
    eval::ndcg_at_k(&ranked(ranked_items), &relevant.into_iter().map(ItemId).collect(), k)
}

/// Runs the identity sweep on random tabular models and returns the worst
/// errors per identity plus an overall `passed` flag.
#[pyfunction]
#[pyo3(signature = (models = 100, dims = (4, 5, 3, 4), tolerance = 1e-10, inject_fault = false))]
fn oracle_check<'py>(
    py: Python<'py>,
    models: usize,
    dims: (usize, usize, usize, usize),
    tolerance: f64,
    inject_fault: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let opts = OracleCheckOptions {
        models,
        dims: ScmDims { users: dims.0, items: dims.1, confounders: dims.2, mediators: dims.3 },
        vary_dims: true,
        tolerance,
        inject_fault,
    };
    let r = experiment::oracle_check(&opts).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("models", r.models_checked)?;
    d.set_item("frontdoor_error", r.frontdoor_error)?;
    d.set_item("backdoor_error", r.backdoor_error)?;
    d.set_item("collider_error", r.collider_error)?;
    d.set_item("normalization_error", r.normalization_error)?;
    d.set_item("worst_error", r.worst())?;
    d.set_item("passed", r.passes(tolerance))?;
    Ok(d)
}

#[pymodule]
fn hcr_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyWorld>()?;
    m.add_class::<PyLog>()?;
    m.add_class::<PySplit>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(recall_at_k, m)?)?;
    m.add_function(wrap_pyfunction!(ndcg_at_k, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_check, m)?)?;
    m.add("VARIANTS", ScoreVariant::ALL.iter().map(|v| v.as_str()).collect::<Vec<_>>())?;
    Ok(())
}
