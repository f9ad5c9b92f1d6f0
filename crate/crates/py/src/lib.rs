//! Python bindings.
//!
//! ```python
//! import hdc
//! tree = hdc.LabelTree.load("fixtures/small8.json")
//! scorer = hdc.SyntheticScorer(tree, noise_sigma=0.2, seed=1)
//! out = hdc.classify_hdc(tree, scorer, "img0", true_class="cat", m_final=8)
//! out["prediction"], out["calls"]["total"]
//! ```

use std::collections::BTreeMap;
use std::sync::Arc;

use hdc_core::scoring::{Endpoint, RemoteScorer};
use hdc_core::{
    classify_flat as core_flat, classify_hdc as core_hdc, paired_posterior, softmax_posterior,
    Classification, FlatConfig, HdcConfig, ImageRef, InsertMode, NodeId, PruneStrategy, Scorer,
    SyntheticParams,
};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(hdc, HdcError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    HdcError::new_err(e.to_string())
}

fn from_json<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "LabelTree", module = "hdc", frozen)]
struct PyLabelTree {
    inner: Arc<hdc_core::LabelTree>,
}

impl PyLabelTree {
    fn wrap(tree: hdc_core::LabelTree) -> Self {
        PyLabelTree { inner: Arc::new(tree) }
    }
}

#[pymethods]
impl PyLabelTree {
    /// Loads a `.json` adjacency list or an indented text file.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        hdc_core::LabelTree::load_path(path).map(Self::wrap).map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        hdc_core::LabelTree::from_json_str(text).map(Self::wrap).map_err(err)
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        hdc_core::LabelTree::from_indented_str(text).map(Self::wrap).map_err(err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn to_text(&self) -> String {
        self.inner.to_indented_text()
    }

    #[getter]
    fn depth(&self) -> usize {
        self.inner.depth()
    }

    #[getter]
    fn leaf_count(&self) -> usize {
        self.inner.leaf_count()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn leaf_labels(&self) -> Vec<String> {
        self.inner.leaf_labels()
    }

    fn label(&self, node: u32) -> PyResult<String> {
        let id = NodeId(node);
        self.inner.node(id).map_err(err)?;
        Ok(self.inner.label(id).to_string())
    }

    /// Node ids `level - 1` edges below the root, leaves hoisted up.
    fn descend_to_level(&self, level: usize) -> PyResult<Vec<u32>> {
        let nodes = self.inner.descend_to_level(level).map_err(err)?;
        Ok(nodes.into_iter().map(|n| n.0).collect())
    }

    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let text = serde_json::to_string(&self.inner.stats()).map_err(err)?;
        from_json(py, &text)
    }

    fn limit_depth(&self, max_depth: usize) -> PyResult<Self> {
        self.inner.limit_depth(max_depth).map(Self::wrap).map_err(err)
    }

    /// Adds a class under the root.
    fn insert_class(&self, label: &str) -> PyResult<Self> {
        self.inner
            .insert_class(label, InsertMode::UnderRoot, None)
            .map(Self::wrap)
            .map_err(err)
    }

    fn remove_class(&self, label: &str) -> PyResult<Self> {
        self.inner.remove_class(label).map(Self::wrap).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "LabelTree(depth={}, leaves={}, nodes={})",
            self.inner.depth(),
            self.inner.leaf_count(),
            self.inner.len()
        )
    }
}

#[pyclass(name = "SyntheticScorer", module = "hdc", frozen)]
struct PySyntheticScorer {
    inner: Arc<dyn Scorer>,
}

#[pymethods]
impl PySyntheticScorer {
    #[new]
    #[pyo3(signature = (tree, noise_sigma=0.0, seed=0, base_error=0.1, distance_gain=0.05))]
    fn new(tree: &PyLabelTree, noise_sigma: f64, seed: u64, base_error: f64, distance_gain: f64) -> PyResult<Self> {
        let params = SyntheticParams {
            base_error,
            distance_gain,
            noise_sigma,
            seed,
            ..SyntheticParams::default()
        };
        let scorer = hdc_core::SyntheticScorer::new(tree.inner.clone(), params).map_err(err)?;
        Ok(PySyntheticScorer { inner: Arc::new(scorer) })
    }
}

#[pyclass(name = "ReplayScorer", module = "hdc", frozen)]
struct PyReplayScorer {
    inner: Arc<hdc_core::ReplayScorer>,
}

#[pymethods]
impl PyReplayScorer {
    /// Reads a recorded error matrix, JSON or CSV.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let scorer = hdc_core::ReplayScorer::load(std::path::Path::new(path)).map_err(err)?;
        Ok(PyReplayScorer { inner: Arc::new(scorer) })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyclass(name = "RemoteScorer", module = "hdc", frozen)]
struct PyRemoteScorer {
    inner: Arc<RemoteScorer>,
}

#[pymethods]
impl PyRemoteScorer {
    /// `tcp://host:port` or `exec:<command>`.
    #[new]
    fn new(endpoint: &str) -> PyResult<Self> {
        let endpoint = Endpoint::parse(endpoint).map_err(err)?;
        let scorer = RemoteScorer::connect(&endpoint).map_err(err)?;
        Ok(PyRemoteScorer { inner: Arc::new(scorer) })
    }
}

fn scorer_of(obj: &Bound<'_, PyAny>) -> PyResult<Arc<dyn Scorer>> {
    if let Ok(s) = obj.extract::<PyRef<PySyntheticScorer>>() {
        return Ok(s.inner.clone());
    }
    if let Ok(s) = obj.extract::<PyRef<PyReplayScorer>>() {
        return Ok(s.inner.clone());
    }
    if let Ok(s) = obj.extract::<PyRef<PyRemoteScorer>>() {
        return Ok(s.inner.clone());
    }
    Err(PyValueError::new_err("expected SyntheticScorer, ReplayScorer or RemoteScorer"))
}

fn classification_dict<'py>(py: Python<'py>, c: &Classification) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    out.set_item("prediction", &c.prediction)?;
    out.set_item("posterior", &c.posterior.entries)?;
    out.set_item("ranking", &c.ranking)?;
    let calls = PyDict::new(py);
    calls.set_item("prune", c.metrics.eps_calls_prune)?;
    calls.set_item("final", c.metrics.eps_calls_final)?;
    calls.set_item("total", c.metrics.eps_calls_total)?;
    out.set_item("calls", calls)?;
    out.set_item("surviving_leaves", c.metrics.surviving_leaves)?;
    Ok(out)
}

/// Scores every leaf with `m_final` samples.
#[pyfunction]
#[pyo3(signature = (tree, scorer, image_id, true_class=None, m_final=16, sample_seed=0, template=None))]
fn classify_flat<'py>(
    py: Python<'py>,
    tree: &PyLabelTree,
    scorer: &Bound<'py, PyAny>,
    image_id: &str,
    true_class: Option<String>,
    m_final: usize,
    sample_seed: u64,
    template: Option<String>,
) -> PyResult<Bound<'py, PyDict>> {
    let scorer = scorer_of(scorer)?;
    let image = ImageRef::new(image_id, true_class);
    let mut config = FlatConfig {
        m_final,
        sample_seed,
        ..FlatConfig::default()
    };
    if let Some(t) = template {
        config.prompt_template = t;
    }
    let tree = tree.inner.clone();
    let result = py
        .detach(|| core_flat(&tree, &image, scorer.as_ref(), &config))
        .map_err(err)?;
    classification_dict(py, &result)
}

/// Prunes the tree level by level, then scores the surviving leaves.
///
/// `strategy` is a dict such as `{"kind": "fixed_topk", "default_ratio": 0.5}`
/// or `{"kind": "dynamic_sigma", "sigma_multiplier": 2.0}`. The result holds
/// the pruning trace under `"trace"`.
#[pyfunction]
#[pyo3(signature = (
    tree, scorer, image_id, true_class=None, m_final=16, m_prune=None,
    start_level=1, strategy=None, sample_seed=0, template=None,
))]
fn classify_hdc<'py>(
    py: Python<'py>,
    tree: &PyLabelTree,
    scorer: &Bound<'py, PyAny>,
    image_id: &str,
    true_class: Option<String>,
    m_final: usize,
    m_prune: Option<usize>,
    start_level: usize,
    strategy: Option<&Bound<'py, PyAny>>,
    sample_seed: u64,
    template: Option<String>,
) -> PyResult<Bound<'py, PyDict>> {
    let scorer = scorer_of(scorer)?;
    let strategy = match strategy {
        None => PruneStrategy::default(),
        Some(obj) => {
            let text: String = py.import("json")?.call_method1("dumps", (obj,))?.extract()?;
            serde_json::from_str(&text).map_err(|e| PyValueError::new_err(format!("strategy: {e}")))?
        }
    };
    let mut config = HdcConfig {
        m_prune,
        m_final,
        start_level,
        strategy,
        sample_seed,
        ..HdcConfig::default()
    };
    if let Some(t) = template {
        config.prompt_template = t;
    }
    let image = ImageRef::new(image_id, true_class);
    let tree = tree.inner.clone();
    let result = py
        .detach(|| core_hdc(&tree, &image, scorer.as_ref(), &config))
        .map_err(err)?;
    let out = classification_dict(py, &result.classification)?;
    out.set_item("trace", from_json(py, &result.trace.to_json())?)?;
    Ok(out)
}

/// `100 · (baseline − method) / baseline`.
#[pyfunction]
fn speedup(baseline_cost: f64, method_cost: f64) -> PyResult<f64> {
    hdc_core::speedup(baseline_cost, method_cost).map_err(err)
}

/// Softmax over negated mean errors.
#[pyfunction]
fn posteriors(mean_errors: BTreeMap<String, f64>) -> PyResult<BTreeMap<String, f64>> {
    softmax_posterior(&mean_errors).map(|p| p.entries).map_err(err)
}

/// Posterior from per-sample errors, with differences taken sample by sample.
#[pyfunction]
fn paired_posteriors(sample_errors: BTreeMap<String, Vec<f64>>, anchor: &str) -> PyResult<BTreeMap<String, f64>> {
    paired_posterior(&sample_errors, anchor).map(|p| p.entries).map_err(err)
}

/// Keeps the best `(node, mean_error)` candidates; pass exactly one of
/// `ratio` and `sigma`.
#[pyfunction]
#[pyo3(signature = (candidates, ratio=None, sigma=None, depth=1))]
fn prune(candidates: Vec<(u32, f64)>, ratio: Option<f64>, sigma: Option<f64>, depth: usize) -> PyResult<Vec<u32>> {
    let strategy = match (ratio, sigma) {
        (Some(r), None) => PruneStrategy::uniform(r),
        (None, Some(s)) => PruneStrategy::dynamic(s),
        _ => return Err(PyValueError::new_err("pass exactly one of ratio and sigma")),
    };
    strategy.validate().map_err(err)?;
    let candidates: Vec<(NodeId, f64)> = candidates.into_iter().map(|(n, m)| (NodeId(n), m)).collect();
    let kept = hdc_core::prune(&candidates, &strategy, depth).map_err(err)?;
    Ok(kept.into_iter().map(|n| n.0).collect())
}

#[pymodule]
fn hdc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("HdcError", m.py().get_type::<HdcError>())?;
    m.add_class::<PyLabelTree>()?;
    m.add_class::<PySyntheticScorer>()?;
    m.add_class::<PyReplayScorer>()?;
    m.add_class::<PyRemoteScorer>()?;
    m.add_function(wrap_pyfunction!(classify_flat, m)?)?;
    m.add_function(wrap_pyfunction!(classify_hdc, m)?)?;
    m.add_function(wrap_pyfunction!(speedup, m)?)?;
    m.add_function(wrap_pyfunction!(posteriors, m)?)?;
    m.add_function(wrap_pyfunction!(paired_posteriors, m)?)?;
    m.add_function(wrap_pyfunction!(prune, m)?)?;
    Ok(())
}
