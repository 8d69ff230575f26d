//! Python bindings: the HMM machinery, the pair detector arithmetic, the
//! closed-form metrics, and the full file-based pipeline.
//!
//! Validation problems surface as ValueError, filesystem trouble as OSError,
//! and everything else as RuntimeError, so Python callers can distinguish
//! "fix your input" from "something broke".

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use cswitness::detector;
use cswitness::hmm;
use cswitness::metrics;
use cswitness::pipeline;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn pipeline_err(e: pipeline::PipelineError) -> PyErr {
    match &e {
        pipeline::PipelineError::Io { .. } => PyIOError::new_err(e.to_string()),
        _ if e.exit_code() == 1 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// A discrete-observation hidden Markov model.
#[pyclass(name = "HmmModel", skip_from_py_object)]
#[derive(Clone)]
struct PyHmmModel {
    inner: hmm::HmmModel,
}

#[pymethods]
impl PyHmmModel {
    /// Parse a model from its JSON serialization.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyHmmModel {
            inner: hmm::HmmModel::from_json(text).map_err(value_err)?,
        })
    }

    /// Serialize the model to JSON (round-trips bit for bit).
    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn n_states(&self) -> usize {
        self.inner.n_states()
    }

    #[getter]
    fn n_symbols(&self) -> usize {
        self.inner.n_symbols()
    }

    #[getter]
    fn state_labels(&self) -> Vec<String> {
        self.inner.state_labels().to_vec()
    }

    /// Index of a state label, or None if the model has no such state.
    fn state_index(&self, label: &str) -> Option<usize> {
        self.inner.state_index(label)
    }

    /// Scaled-forward log-likelihood of an observation sequence; -inf when
    /// the sequence is impossible under the model.
    fn forward_log_likelihood(&self, observations: Vec<usize>) -> PyResult<f64> {
        hmm::forward_log_likelihood(&self.inner, &observations).map_err(value_err)
    }

    /// Expected number of slots spent in each state given the observations.
    fn posterior_occupancy(&self, observations: Vec<usize>) -> PyResult<Vec<f64>> {
        hmm::posterior_occupancy(&self.inner, &observations).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "HmmModel(n_states={}, n_symbols={})",
            self.inner.n_states(),
            self.inner.n_symbols()
        )
    }
}

/// Outcome of Baum-Welch training.
#[pyclass(name = "TrainResult")]
struct PyTrainResult {
    inner: hmm::TrainResult,
}

#[pymethods]
impl PyTrainResult {
    #[getter]
    fn model(&self) -> PyHmmModel {
        PyHmmModel {
            inner: self.inner.model.clone(),
        }
    }

    #[getter]
    fn log_likelihood(&self) -> f64 {
        self.inner.log_likelihood
    }

    #[getter]
    fn iterations(&self) -> u32 {
        self.inner.iterations
    }

    #[getter]
    fn occupancy(&self) -> Vec<f64> {
        self.inner.occupancy.clone()
    }

    #[getter]
    fn ll_trace(&self) -> Vec<f64> {
        self.inner.ll_trace.clone()
    }

    /// (d_x, d_y) deferral probabilities from the trained pair model.
    /// Raises ValueError when either direction has too little evidence.
    #[pyo3(signature = (min_evidence_slots = 50.0))]
    fn deferral_probabilities(&self, min_evidence_slots: f64) -> PyResult<(f64, f64)> {
        detector::deferral_probabilities(&self.inner, min_evidence_slots).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "TrainResult(log_likelihood={}, iterations={})",
            self.inner.log_likelihood, self.inner.iterations
        )
    }
}

/// The untrained six-state pair-interaction template.
#[pyfunction]
fn pair_template_model(epsilon: f64, seed: u64) -> PyResult<PyHmmModel> {
    Ok(PyHmmModel {
        inner: hmm::pair_template_model(epsilon, seed).map_err(value_err)?,
    })
}

/// Baum-Welch training with seeded restarts; observations are symbol
/// indices into the model's alphabet.
#[pyfunction]
#[pyo3(signature = (model, observations, *, max_iters = 100, tol = 1e-4, restarts = 3, freeze_emissions = true, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn baum_welch(
    model: &PyHmmModel,
    observations: Vec<usize>,
    max_iters: u32,
    tol: f64,
    restarts: u32,
    freeze_emissions: bool,
    seed: u64,
) -> PyResult<PyTrainResult> {
    let cfg = hmm::TrainConfig {
        max_iters,
        tol,
        restarts,
        freeze_emissions,
        seed,
    };
    Ok(PyTrainResult {
        inner: hmm::baum_welch(&model.inner, &observations, &cfg).map_err(value_err)?,
    })
}

/// Witnessed asymmetry of a pair: d_y - d_x.
#[pyfunction]
fn asymmetry(d_x: f64, d_y: f64) -> f64 {
    detector::asymmetry(d_x, d_y)
}

/// Delivered bytes per interval, scaled by 1000.
#[pyfunction]
fn throughput(bytes_delivered: u64, interval_seconds: f64) -> PyResult<f64> {
    metrics::throughput(bytes_delivered, interval_seconds).map_err(value_err)
}

/// Packet delivery ratio: received over sent.
#[pyfunction]
fn pdr(received: u64, sent: u64) -> PyResult<f64> {
    metrics::pdr(received, sent).map_err(value_err)
}

/// Seconds to push n_bits onto the medium at the given rate.
#[pyfunction]
fn transmission_delay(n_bits: u64, rate_bits_per_sec: f64) -> PyResult<f64> {
    metrics::transmission_delay(n_bits, rate_bits_per_sec).map_err(value_err)
}

/// Run the whole pipeline (simulate, capture, merge, infer, detect,
/// metrics) for a scenario config, writing artifacts into out_dir.
#[pyfunction]
#[pyo3(signature = (config_path, out_dir, seed = None))]
fn run_pipeline(config_path: PathBuf, out_dir: PathBuf, seed: Option<u64>) -> PyResult<()> {
    let (cfg, ctx) = pipeline::load(&config_path, &out_dir, seed).map_err(pipeline_err)?;
    pipeline::run_pipeline(&cfg, &ctx).map_err(pipeline_err)
}

#[pymodule]
fn cswitness_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyHmmModel>()?;
    m.add_class::<PyTrainResult>()?;
    m.add_function(wrap_pyfunction!(pair_template_model, m)?)?;
    m.add_function(wrap_pyfunction!(baum_welch, m)?)?;
    m.add_function(wrap_pyfunction!(asymmetry, m)?)?;
    m.add_function(wrap_pyfunction!(throughput, m)?)?;
    m.add_function(wrap_pyfunction!(pdr, m)?)?;
    m.add_function(wrap_pyfunction!(transmission_delay, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
