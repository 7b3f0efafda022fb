//! Python bindings: datasets, linear and boosted anchor models, refitting,
//! γ selection, regime extraction and the simulator.
//!
//! Features are passed as lists of rows. Configuration and data errors raise
//! `ValueError`, numerical failures `ArithmeticError`, file errors `OSError`.

use anchorboost::boosting::LeafUpdate;
use anchorboost::linear::fit_linear;
use anchorboost::regimes::{transition_points as regime_transitions, CurvePoint, RegimeCurves, Strategy, Tolerance};
use anchorboost::selection::{evaluate_model, loeo_select_gamma, refit_model, Metric};
use anchorboost::{
    fit_boosted, load_csv, AnchorScm as CoreScm, AnchorSpec, AnyModel, BoostConfig, CsvSchema, Dataset as CoreDataset,
    ElasticNet, Error, ErrorKind, Link, Predictor, Task,
};
use nalgebra::DMatrix;
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    match (&e, e.kind()) {
        (Error::Io(_), _) => PyOSError::new_err(e.to_string()),
        (_, ErrorKind::Numerical) => PyArithmeticError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_task(task: &str) -> PyResult<Task> {
    match task {
        "regression" => Ok(Task::Regression),
        "classification" => Ok(Task::Classification),
        _ => Err(PyValueError::new_err(format!("unknown task '{task}'"))),
    }
}

fn task_name(task: Task) -> &'static str {
    match task {
        Task::Regression => "regression",
        Task::Classification => "classification",
    }
}

fn parse_metric(metric: Option<&str>, task: Task) -> PyResult<Metric> {
    match metric {
        None => Ok(Metric::default_for(task)),
        Some("mse") => Ok(Metric::Mse),
        Some("auprc") => Ok(Metric::Auprc),
        Some("nll") => Ok(Metric::Nll),
        Some(other) => Err(PyValueError::new_err(format!("unknown metric '{other}'"))),
    }
}

/// Row-major nested lists into a matrix; every row must have `p` entries.
pub fn rows_to_matrix(rows: &[Vec<f64>], p: Option<usize>) -> PyResult<DMatrix<f64>> {
    let width = p.or_else(|| rows.first().map(Vec::len)).unwrap_or(0);
    if let Some(i) = rows.iter().position(|r| r.len() != width) {
        return Err(PyValueError::new_err(format!(
            "row {} has {} values, expected {width}",
            i + 1,
            rows[i].len()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), width, |i, j| rows[i][j]))
}

/// Features, outcome and anchor for one sample.
#[pyclass(name = "Dataset", module = "anchorboost_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct Dataset {
    inner: CoreDataset,
}

#[pymethods]
impl Dataset {
    /// `environments` gives one label per row; `anchors` one row of real
    /// anchor values per row. Exactly one of the two is required.
    #[new]
    #[pyo3(signature = (features, outcome, environments=None, anchors=None, feature_names=None, task="regression", groups=None))]
    fn new(
        features: Vec<Vec<f64>>,
        outcome: Vec<f64>,
        environments: Option<Vec<String>>,
        anchors: Option<Vec<Vec<f64>>>,
        feature_names: Option<Vec<String>>,
        task: &str,
        groups: Option<Vec<String>>,
    ) -> PyResult<Self> {
        let x = rows_to_matrix(&features, feature_names.as_ref().map(Vec::len))?;
        let names = feature_names.unwrap_or_else(|| (1..=x.ncols()).map(|j| format!("x{j}")).collect());
        let anchor = match (environments, anchors) {
            (Some(labels), None) => AnchorSpec::discrete("env", &labels),
            (None, Some(rows)) => {
                let matrix = rows_to_matrix(&rows, None)?;
                AnchorSpec::Continuous {
                    names: (1..=matrix.ncols()).map(|j| format!("a{j}")).collect(),
                    matrix,
                }
            }
            _ => return Err(PyValueError::new_err("give exactly one of environments or anchors")),
        };
        let mut inner = CoreDataset::new(x, outcome, anchor, names, parse_task(task)?).map_err(to_py)?;
        if let Some(g) = groups {
            inner = inner.with_groups(g).map_err(to_py)?;
        }
        Ok(Dataset { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (path, outcome, anchors, group=None, task="regression", discrete_anchor=false))]
    fn from_csv(
        path: &str,
        outcome: &str,
        anchors: Vec<String>,
        group: Option<String>,
        task: &str,
        discrete_anchor: bool,
    ) -> PyResult<Self> {
        let schema = CsvSchema {
            outcome: outcome.to_string(),
            anchors,
            group,
            task: parse_task(task)?,
            discrete_anchor,
        };
        Ok(Dataset {
            inner: load_csv(std::path::Path::new(path), &schema).map_err(to_py)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p()
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.inner.column_names().to_vec()
    }

    #[getter]
    fn task(&self) -> &'static str {
        task_name(self.inner.task())
    }

    #[getter]
    fn outcome(&self) -> Vec<f64> {
        self.inner.outcome().to_vec()
    }

    #[getter]
    fn environments(&self) -> Option<Vec<String>> {
        self.inner
            .anchor()
            .labels()
            .map(|l| l.into_iter().map(str::to_string).collect())
    }

    fn features(&self) -> Vec<Vec<f64>> {
        let x = self.inner.features();
        x.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    fn subset(&self, rows: Vec<usize>) -> PyResult<Self> {
        if let Some(&i) = rows.iter().find(|&&i| i >= self.inner.n()) {
            return Err(PyValueError::new_err(format!("row {i} out of range")));
        }
        Ok(Dataset {
            inner: self.inner.subset(&rows),
        })
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(n={}, p={}, task='{}')",
            self.inner.n(),
            self.inner.p(),
            task_name(self.inner.task())
        )
    }
}

/// A fitted linear or boosted anchor model.
#[pyclass(name = "Model", module = "anchorboost_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct Model {
    inner: AnyModel,
}

#[pymethods]
impl Model {
    #[getter]
    fn kind(&self) -> &'static str {
        match self.inner {
            AnyModel::Linear(_) => "linear",
            AnyModel::Boosted(_) => "boosted",
        }
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma()
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.inner.feature_names().to_vec()
    }

    /// Linear coefficients on the original feature scale.
    #[getter]
    fn coefficients(&self) -> Option<Vec<f64>> {
        match &self.inner {
            AnyModel::Linear(m) => Some(m.beta.clone()),
            AnyModel::Boosted(_) => None,
        }
    }

    #[getter]
    fn intercept(&self) -> Option<f64> {
        match &self.inner {
            AnyModel::Linear(m) => Some(m.intercept),
            AnyModel::Boosted(_) => None,
        }
    }

    #[getter]
    fn num_trees(&self) -> Option<usize> {
        match &self.inner {
            AnyModel::Linear(_) => None,
            AnyModel::Boosted(m) => Some(m.trees.len()),
        }
    }

    /// Raw scores for rows of features in `feature_names` order.
    fn predict(&self, py: Python<'_>, features: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let x = rows_to_matrix(&features, Some(self.inner.feature_names().len()))?;
        py.detach(|| self.inner.predict_scores(&x)).map_err(to_py)
    }

    /// Scores for regression, probabilities for classification.
    fn predict_response(&self, py: Python<'_>, features: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let x = rows_to_matrix(&features, Some(self.inner.feature_names().len()))?;
        py.detach(|| self.inner.predict_response(&x)).map_err(to_py)
    }

    #[pyo3(signature = (data, metric=None))]
    fn evaluate(&self, data: &Dataset, metric: Option<&str>) -> PyResult<f64> {
        let metric = parse_metric(metric, data.inner.task())?;
        Ok(evaluate_model(&self.inner, &data.inner, metric).map_err(to_py)?.value)
    }

    /// Refits on target data: `parameter` is the decay rate for boosted
    /// models and the prior width α for linear ones.
    fn refit(&self, py: Python<'_>, target: &Dataset, parameter: f64) -> PyResult<Model> {
        let inner = py
            .detach(|| refit_model(&self.inner, &target.inner, parameter))
            .map_err(to_py)?;
        Ok(Model { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Model> {
        Ok(Model {
            inner: AnyModel::from_json(text).map_err(to_py)?,
        })
    }

    fn __repr__(&self) -> String {
        format!("Model(kind='{}', gamma={}, p={})", self.kind(), self.gamma(), self.inner.feature_names().len())
    }
}

#[pyfunction]
#[pyo3(signature = (data, gamma=1.0, lam=0.0, eta=0.5))]
fn fit_linear_model(py: Python<'_>, data: &Dataset, gamma: f64, lam: f64, eta: f64) -> PyResult<Model> {
    let enet = ElasticNet::new(lam, eta).map_err(to_py)?;
    let m = py.detach(|| fit_linear(&data.inner, gamma, enet)).map_err(to_py)?;
    Ok(Model {
        inner: AnyModel::Linear(m),
    })
}

#[allow(clippy::too_many_arguments)]
fn boost_config(
    task: Task,
    gamma: f64,
    num_trees: usize,
    learning_rate: f64,
    max_depth: usize,
    min_gain_to_split: f64,
    min_samples_leaf: usize,
    first_order: bool,
) -> BoostConfig {
    BoostConfig {
        num_trees,
        learning_rate,
        max_depth,
        min_gain_to_split,
        min_samples_leaf,
        gamma,
        link: match task {
            Task::Regression => Link::Identity,
            Task::Classification => Link::Probit,
        },
        leaf_update: if first_order {
            LeafUpdate::FirstOrder
        } else {
            LeafUpdate::SecondOrder
        },
        ..Default::default()
    }
}

#[pyfunction]
#[pyo3(signature = (data, gamma=1.0, num_trees=1000, learning_rate=0.1, max_depth=3, min_gain_to_split=0.1, min_samples_leaf=20, first_order=false))]
#[allow(clippy::too_many_arguments)]
fn fit_boosted_model(
    py: Python<'_>,
    data: &Dataset,
    gamma: f64,
    num_trees: usize,
    learning_rate: f64,
    max_depth: usize,
    min_gain_to_split: f64,
    min_samples_leaf: usize,
    first_order: bool,
) -> PyResult<Model> {
    let config = boost_config(
        data.inner.task(),
        gamma,
        num_trees,
        learning_rate,
        max_depth,
        min_gain_to_split,
        min_samples_leaf,
        first_order,
    );
    let m = py.detach(|| fit_boosted(&data.inner, &config)).map_err(to_py)?;
    Ok(Model {
        inner: AnyModel::Boosted(m),
    })
}

/// Leave-one-environment-out choice of γ for a linear model. Returns the
/// selected γ and the score table as a list of dicts.
#[pyfunction]
#[pyo3(signature = (data, gammas, lam=0.0, eta=0.5))]
fn select_gamma<'py>(
    py: Python<'py>,
    data: &Dataset,
    gammas: Vec<f64>,
    lam: f64,
    eta: f64,
) -> PyResult<(f64, Vec<Bound<'py, PyDict>>)> {
    let enet = ElasticNet::new(lam, eta).map_err(to_py)?;
    let trainer = move |d: &CoreDataset, g: f64| -> anchorboost::Result<Box<dyn Predictor>> {
        Ok(Box::new(fit_linear(d, g, enet)?))
    };
    let sel = py
        .detach(|| loeo_select_gamma(&data.inner, &gammas, &trainer))
        .map_err(to_py)?;
    let rows = sel
        .table
        .iter()
        .map(|r| {
            let row = PyDict::new(py);
            row.set_item("gamma", r.gamma)?;
            row.set_item("holdout_env", &r.holdout_env)?;
            row.set_item("metric", r.metric.name())?;
            row.set_item("value", r.value)?;
            row.set_item("n", r.n)?;
            Ok(row)
        })
        .collect::<PyResult<Vec<_>>>()?;
    Ok((sel.gamma, rows))
}

/// Transition points from `(strategy, seed, n, metric, value)` tuples.
///
/// Returns a dict with keys `circle`, `square`, `cross` (None when absent)
/// and `flags` (`in_range`, `extrapolated`, `at_boundary` or `absent`).
#[pyfunction]
#[pyo3(signature = (points, band_fraction=0.25))]
fn transition_points<'py>(
    py: Python<'py>,
    points: Vec<(String, u64, usize, String, f64)>,
    band_fraction: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let points = points
        .into_iter()
        .map(|(strategy, seed, n, metric, value)| {
            let strategy: Strategy = strategy.parse().map_err(to_py)?;
            Ok(CurvePoint {
                strategy,
                seed,
                n,
                metric: parse_metric(Some(&metric), Task::Regression)?,
                value,
            })
        })
        .collect::<PyResult<Vec<_>>>()?;
    let curves = RegimeCurves::from_points(&points).map_err(to_py)?;
    let t = regime_transitions(&curves, Tolerance::BandFraction(band_fraction)).map_err(to_py)?;
    let out = PyDict::new(py);
    let flags = PyDict::new(py);
    for (name, crossing) in [("circle", t.circle), ("square", t.square), ("cross", t.cross)] {
        out.set_item(name, crossing.map(|c| c.n))?;
        flags.set_item(name, crossing.map(|c| c.flag.name()).unwrap_or("absent"))?;
    }
    out.set_item("flags", flags)?;
    Ok(out)
}

/// The synthetic structural causal model.
#[pyclass(name = "AnchorScm", module = "anchorboost_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct AnchorScm {
    inner: CoreScm,
}

#[pymethods]
impl AnchorScm {
    #[staticmethod]
    #[pyo3(signature = (task="regression"))]
    fn canonical(task: &str) -> PyResult<Self> {
        Ok(AnchorScm {
            inner: CoreScm::canonical().with_task(parse_task(task)?),
        })
    }

    #[staticmethod]
    #[pyo3(signature = (n_envs, anchor_dim, hidden_dim, num_features, seed=0))]
    fn random(n_envs: usize, anchor_dim: usize, hidden_dim: usize, num_features: usize, seed: u64) -> PyResult<Self> {
        Ok(AnchorScm {
            inner: CoreScm::random(n_envs, anchor_dim, hidden_dim, num_features, seed).map_err(to_py)?,
        })
    }

    fn with_seed(&self, seed: u64) -> Self {
        AnchorScm {
            inner: self.inner.clone().with_seed(seed),
        }
    }

    #[pyo3(signature = (n, shift_scale=1.0, stream=0))]
    fn generate(&self, py: Python<'_>, n: usize, shift_scale: f64, stream: u64) -> PyResult<Dataset> {
        let inner = py
            .detach(|| self.inner.generate_stream(n, shift_scale, stream))
            .map_err(to_py)?;
        Ok(Dataset { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(AnchorScm {
            inner: CoreScm::from_json(text).map_err(to_py)?,
        })
    }
}

#[pymodule]
#[pyo3(name = "anchorboost_py")]
pub fn python_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    m.add_class::<AnchorScm>()?;
    m.add_function(wrap_pyfunction!(fit_linear_model, m)?)?;
    m.add_function(wrap_pyfunction!(fit_boosted_model, m)?)?;
    m.add_function(wrap_pyfunction!(select_gamma, m)?)?;
    m.add_function(wrap_pyfunction!(transition_points, m)?)?;
    Ok(())
}
