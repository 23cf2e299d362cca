//! Python bindings: metrics, the three regressors, rebalancing, the
//! synthetic fixture and the staged pipeline.

use std::collections::BTreeMap;
use std::path::PathBuf;

use hilp_core::eval;
use hilp_core::features::{haversine_miles as haversine, FeatureMatrix, MinMaxScaler as CoreScaler};
use hilp_core::hilp::nearest_rank_quantile as quantile;
use hilp_core::models::{
    train_adaboost, train_forest, train_lstm, BoostConfig, BoostModel, ForestConfig, ForestModel, LstmConfig,
    LstmModel,
};
use hilp_core::pipeline::{self, PipelineConfig, Stage, SynthOptions, Workspace};
use hilp_core::rebalance::{rebalance_matrix, RebalanceConfig};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: hilp_core::Error) -> PyErr {
    if e.is_user_error() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

type Rows = Vec<Vec<f64>>;

fn matrix(x: Rows, y: Vec<f64>) -> PyResult<FeatureMatrix> {
    FeatureMatrix::from_rows(x, y).map_err(py_err)
}

/// MAPE in percent over non-zero actuals; returns `(pct, excluded_zero_actuals)`.
#[pyfunction]
fn mape(actual: Vec<f64>, predicted: Vec<f64>) -> PyResult<(f64, usize)> {
    let m = eval::mape(&actual, &predicted).map_err(py_err)?;
    Ok((m.pct, m.excluded))
}

/// Coefficient of determination in percent.
#[pyfunction]
fn r2(actual: Vec<f64>, predicted: Vec<f64>) -> PyResult<f64> {
    eval::r2(&actual, &predicted).map_err(py_err)
}

/// Nearest-rank quantile of outage counts; `None` for an empty input.
#[pyfunction]
fn nearest_rank_quantile(values: Vec<u32>, alpha: f64) -> Option<u32> {
    quantile(&values, alpha)
}

#[pyfunction]
fn haversine_miles(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    haversine(lat1, lon1, lat2, lon2)
}

/// Per-column min-max scaling to [0, 1].
#[pyclass]
struct MinMaxScaler {
    inner: CoreScaler,
}

#[pymethods]
impl MinMaxScaler {
    #[new]
    fn new() -> Self {
        MinMaxScaler { inner: CoreScaler::new() }
    }

    fn fit(&mut self, rows: Rows) -> PyResult<()> {
        self.inner.fit(rows.iter().map(Vec::as_slice)).map_err(py_err)
    }

    fn transform(&self, rows: Rows) -> PyResult<Rows> {
        self.inner.transform_rows(&rows).map_err(py_err)
    }

    fn inverse_transform(&self, rows: Rows) -> PyResult<Rows> {
        rows.iter().map(|r| self.inner.inverse_transform(r)).collect::<Result<_, _>>().map_err(py_err)
    }
}

/// Bootstrap-aggregated regression trees.
#[pyclass]
struct RandomForest {
    config: ForestConfig,
    model: Option<ForestModel>,
}

#[pymethods]
impl RandomForest {
    #[new]
    #[pyo3(signature = (n_estimators=100, max_depth=None, min_samples_leaf=2, seed=0))]
    fn new(n_estimators: usize, max_depth: Option<usize>, min_samples_leaf: usize, seed: u64) -> Self {
        RandomForest {
            config: ForestConfig {
                n_estimators,
                max_depth,
                min_samples_leaf,
                seed,
                ..Default::default()
            },
            model: None,
        }
    }

    fn fit(&mut self, py: Python<'_>, x: Rows, y: Vec<f64>) -> PyResult<()> {
        let m = matrix(x, y)?;
        let cfg = self.config.clone();
        self.model = Some(py.detach(|| train_forest(&m, &cfg)).map_err(py_err)?);
        Ok(())
    }

    fn predict(&self, x: Rows) -> PyResult<Vec<f64>> {
        self.fitted()?.predict(&x).map_err(py_err)
    }

    /// Normalized impurity importance per column, in column order.
    fn feature_importances(&self) -> PyResult<Vec<f64>> {
        Ok(self.fitted()?.importance().into_iter().map(|(_, v)| v).collect())
    }
}

impl RandomForest {
    fn fitted(&self) -> PyResult<&ForestModel> {
        self.model.as_ref().ok_or_else(|| PyValueError::new_err("call fit first"))
    }
}

/// AdaBoost.R2 over shallow regression trees.
#[pyclass]
struct AdaBoost {
    config: BoostConfig,
    model: Option<BoostModel>,
}

#[pymethods]
impl AdaBoost {
    #[new]
    #[pyo3(signature = (n_estimators=120, learning_rate=0.001, max_depth=3, seed=0))]
    fn new(n_estimators: usize, learning_rate: f64, max_depth: usize, seed: u64) -> Self {
        AdaBoost {
            config: BoostConfig {
                n_estimators,
                learning_rate,
                max_depth,
                seed,
                ..Default::default()
            },
            model: None,
        }
    }

    fn fit(&mut self, py: Python<'_>, x: Rows, y: Vec<f64>) -> PyResult<()> {
        let m = matrix(x, y)?;
        let cfg = self.config.clone();
        self.model = Some(py.detach(|| train_adaboost(&m, &cfg)).map_err(py_err)?);
        Ok(())
    }

    fn predict(&self, x: Rows) -> PyResult<Vec<f64>> {
        let model = self.model.as_ref().ok_or_else(|| PyValueError::new_err("call fit first"))?;
        model.predict(&x).map_err(py_err)
    }

    #[getter]
    fn n_learners(&self) -> usize {
        self.model.as_ref().map_or(0, |m| m.learners.len())
    }
}

/// Single-layer LSTM regressor on already-scaled sequences.
#[pyclass]
struct Lstm {
    config: LstmConfig,
    model: Option<LstmModel>,
}

#[pymethods]
impl Lstm {
    #[new]
    #[pyo3(signature = (hidden=128, epochs=100, learning_rate=0.001, batch_size=32, seed=0))]
    fn new(hidden: usize, epochs: usize, learning_rate: f64, batch_size: usize, seed: u64) -> Self {
        Lstm {
            config: LstmConfig {
                hidden,
                epochs,
                learning_rate,
                batch_size,
                seed,
                ..Default::default()
            },
            model: None,
        }
    }

    /// `sequences[i][t]` is the input vector of sequence `i` at step `t`.
    fn fit(&mut self, py: Python<'_>, sequences: Vec<Rows>, targets: Vec<f64>) -> PyResult<()> {
        let cfg = self.config.clone();
        self.model = Some(py.detach(|| train_lstm(&sequences, &targets, &cfg)).map_err(py_err)?);
        Ok(())
    }

    /// Raw network outputs (same scale as the training targets).
    fn predict(&self, sequences: Vec<Rows>) -> PyResult<Vec<f64>> {
        let model = self.model.as_ref().ok_or_else(|| PyValueError::new_err("call fit first"))?;
        model.predict_scaled(&sequences).map_err(py_err)
    }

    #[getter]
    fn loss_curve(&self) -> Vec<f64> {
        self.model.as_ref().map_or_else(Vec::new, |m| m.loss_curve.clone())
    }
}

/// SMOGN-style rebalancing; returns the new `(x, y)`.
#[pyfunction]
#[pyo3(signature = (x, y, tau=380.0, k_neighbors=5, oversample_rate=1, undersample_rate=0.5, noise_fraction=0.02, seed=0))]
#[allow(clippy::too_many_arguments)]
fn rebalance(
    x: Rows,
    y: Vec<f64>,
    tau: f64,
    k_neighbors: usize,
    oversample_rate: usize,
    undersample_rate: f64,
    noise_fraction: f64,
    seed: u64,
) -> PyResult<(Rows, Vec<f64>)> {
    let cfg = RebalanceConfig {
        tau,
        k_neighbors,
        oversample_rate,
        undersample_rate,
        noise_fraction,
        seed,
    };
    let out = rebalance_matrix(&matrix(x, y)?, &cfg).map_err(py_err)?;
    Ok((out.rows, out.targets))
}

/// Write a synthetic dataset and config under `out_dir`; returns the config path.
#[pyfunction]
#[pyo3(signature = (out_dir, counties=5, hours=2000, seed=7))]
fn synthesize(out_dir: PathBuf, counties: usize, hours: usize, seed: u64) -> PyResult<String> {
    let opts = SynthOptions {
        counties,
        hours,
        seed,
        ..Default::default()
    };
    let path = pipeline::synthesize(out_dir, &opts).map_err(py_err)?;
    Ok(path.to_string_lossy().into_owned())
}

fn open(config: PathBuf, out_dir: Option<PathBuf>, seed: Option<u64>) -> PyResult<Workspace> {
    let mut cfg = PipelineConfig::load(&config).map_err(py_err)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let dir = config.parent().map(PathBuf::from).unwrap_or_default();
    let out = out_dir.unwrap_or_else(|| dir.clone());
    Workspace::new(cfg, dir, out).map_err(py_err)
}

/// Run one stage; returns its manifest summary.
#[pyfunction]
#[pyo3(signature = (config, stage, out_dir=None, seed=None))]
fn run_stage(
    py: Python<'_>,
    config: PathBuf,
    stage: &str,
    out_dir: Option<PathBuf>,
    seed: Option<u64>,
) -> PyResult<BTreeMap<String, String>> {
    let stage: Stage = stage.parse().map_err(py_err)?;
    let ws = open(config, out_dir, seed)?;
    let m = py.detach(|| pipeline::run_stage(&ws, stage)).map_err(py_err)?;
    Ok(m.summary)
}

/// Run every stage; returns `{stage: summary}`.
#[pyfunction]
#[pyo3(signature = (config, out_dir=None, seed=None))]
fn run_pipeline(
    py: Python<'_>,
    config: PathBuf,
    out_dir: Option<PathBuf>,
    seed: Option<u64>,
) -> PyResult<BTreeMap<String, BTreeMap<String, String>>> {
    let ws = open(config, out_dir, seed)?;
    let ms = py.detach(|| pipeline::run_all(&ws)).map_err(py_err)?;
    Ok(ms.into_iter().map(|m| (m.stage.to_string(), m.summary)).collect())
}

/// `(mape_pct, r2_pct, n_hours)` from an evaluation report file.
#[pyfunction]
fn load_report(path: PathBuf) -> PyResult<(Option<f64>, Option<f64>, usize)> {
    let r = eval::EvalReport::load(path).map_err(py_err)?;
    Ok((r.mape_pct, r.r2_pct, r.series.len()))
}

#[pymodule]
fn hilp_outage(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(mape, m)?)?;
    m.add_function(wrap_pyfunction!(r2, m)?)?;
    m.add_function(wrap_pyfunction!(nearest_rank_quantile, m)?)?;
    m.add_function(wrap_pyfunction!(haversine_miles, m)?)?;
    m.add_function(wrap_pyfunction!(rebalance, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(run_stage, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(load_report, m)?)?;
    m.add_class::<MinMaxScaler>()?;
    m.add_class::<RandomForest>()?;
    m.add_class::<AdaBoost>()?;
    m.add_class::<Lstm>()?;
    Ok(())
}
