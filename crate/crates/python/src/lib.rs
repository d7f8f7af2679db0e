#![allow(clippy::useless_conversion)] // raised inside the pyo3 0.22 macros
//! Python bindings: scoring, span alignment, clipping, dataset loading and
//! mixing, plus the config-driven pipeline stages.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

use qagen_core::generation::{clip_context as core_clip, PromptTemplate};
use qagen_core::metrics::{self, PredictionSet};
use qagen_core::mixer::{mix_datasets, MixSpec};
use qagen_core::pipeline::{self, GenerateOptions, PipelineConfig, PipelineError};
use qagen_core::squad::{self, QaDataset, Validation};
use qagen_core::synthesis;

create_exception!(qagen, QagenError, PyException);

fn pipeline_err(e: PipelineError) -> PyErr {
    QagenError::new_err(e.to_string())
}

/// Converts any serializable value into plain Python objects.
fn to_python<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<PyObject> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import_bound("json")?.call_method1("loads", (text,))?.unbind())
}

/// A SQuAD v1.1 dataset.
#[pyclass(module = "qagen")]
#[derive(Clone)]
struct Dataset {
    inner: QaDataset,
}

#[pymethods]
impl Dataset {
    /// Parses SQuAD v1.1 JSON. In lenient mode invalid QAs are dropped
    /// instead of rejected.
    #[staticmethod]
    #[pyo3(signature = (text, lenient = false))]
    fn from_json(text: &str, lenient: bool) -> PyResult<Self> {
        let mode = if lenient { Validation::Lenient } else { Validation::Strict };
        let (inner, _) = squad::parse_dataset_with(text.as_bytes(), mode).map_err(|e| QagenError::new_err(e.to_string()))?;
        Ok(Dataset { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (path, lenient = false))]
    fn load(path: PathBuf, lenient: bool) -> PyResult<Self> {
        pipeline::load_dataset(&path, lenient).map(|inner| Dataset { inner }).map_err(pipeline_err)
    }

    fn to_json(&self) -> String {
        String::from_utf8(squad::serialize_dataset(&self.inner)).expect("serialized JSON is UTF-8")
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<PyObject> {
        to_python(py, &self.inner)
    }

    #[getter]
    fn num_qas(&self) -> usize {
        self.inner.num_qas()
    }

    fn __len__(&self) -> usize {
        self.inner.num_qas()
    }

    fn stats(&self, py: Python<'_>) -> PyResult<PyObject> {
        to_python(py, &squad::dataset_stats(&self.inner))
    }

    /// Descriptions of every validation issue, empty when the dataset is valid.
    fn issues(&self) -> Vec<String> {
        let mut copy = self.inner.clone();
        copy.retain_valid().iter().map(ToString::to_string).collect()
    }

    /// One seed question per paragraph, drawn with `seed`.
    fn sample_seed_questions(&self, py: Python<'_>, seed: u64) -> PyResult<PyObject> {
        let seeds = squad::sample_seed_questions(&self.inner, seed).map_err(|e| QagenError::new_err(e.to_string()))?;
        to_python(py, &seeds)
    }

    /// Scores `predictions` (question id to answer text) against this dataset.
    #[pyo3(signature = (predictions, name = "SQUAD"))]
    fn evaluate(&self, py: Python<'_>, predictions: PredictionSet, name: &str) -> PyResult<PyObject> {
        to_python(py, &metrics::evaluate_dataset(name, &self.inner, &predictions))
    }

    fn __repr__(&self) -> String {
        format!("Dataset(articles={}, qas={})", self.inner.articles.len(), self.inner.num_qas())
    }
}

#[pyfunction]
fn normalize_answer(text: &str) -> String {
    metrics::normalize_answer(text)
}

#[pyfunction]
fn exact_match(prediction: &str, gold: &str) -> u8 {
    metrics::exact_match(prediction, gold)
}

#[pyfunction]
fn token_f1(prediction: &str, gold: &str) -> f64 {
    metrics::token_f1(prediction, gold)
}

/// Best (em, f1) of `prediction` over the gold answers.
#[pyfunction]
fn score_prediction(prediction: &str, golds: Vec<String>) -> PyResult<(u8, f64)> {
    let s = metrics::score_prediction(prediction, &golds).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok((s.em, s.f1))
}

#[pyfunction]
#[pyo3(signature = (text, max_words = 250))]
fn clip_context(text: &str, max_words: usize) -> String {
    core_clip(text, max_words)
}

#[pyfunction]
#[pyo3(signature = (question, template = None))]
fn build_prompt(question: &str, template: Option<String>) -> PyResult<String> {
    let template = match template {
        Some(t) => PromptTemplate::new(t),
        None => Ok(PromptTemplate::default()),
    };
    template.and_then(|t| t.render(question)).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// `(text, answer_start)` of the answer's first occurrence in `context`,
/// or None when it does not occur.
#[pyfunction]
fn align_answer_span(context: &str, answer: &str) -> Option<(String, usize)> {
    synthesis::align_answer_span(context, answer).ok().map(|s| (s.text, s.answer_start))
}

/// Mixes `real` with `round(ratio * len(real))` QAs sampled from `pool`.
/// Returns the mixed dataset and the sampled pool ids.
#[pyfunction]
#[pyo3(signature = (real, pool, ratio, seed, dedup = false, shuffle = true))]
fn mix(real: &Dataset, pool: &Dataset, ratio: f64, seed: u64, dedup: bool, shuffle: bool) -> PyResult<(Dataset, Vec<String>)> {
    let spec = MixSpec { ratio, seed, dedup, shuffle_output: shuffle };
    let out = mix_datasets(&real.inner, &pool.inner, &spec).map_err(|e| QagenError::new_err(e.to_string()))?;
    Ok((Dataset { inner: out.dataset }, out.sampled_ids))
}

/// Runs the generation stages for a config file. Returns the run manifest
/// with the run directory under "run_dir".
#[pyfunction]
#[pyo3(signature = (config_path, resume = false))]
fn generate(py: Python<'_>, config_path: PathBuf, resume: bool) -> PyResult<PyObject> {
    let cfg = PipelineConfig::load(&config_path).map_err(pipeline_err)?;
    let out = py.allow_threads(|| pipeline::cmd_generate(&cfg, GenerateOptions { resume })).map_err(pipeline_err)?;
    let manifest = to_python(py, &out.manifest)?;
    manifest.downcast_bound::<PyDict>(py)?.set_item("run_dir", out.run_dir)?;
    Ok(manifest)
}

/// Runs the mix stage for a config file and returns the mix manifest.
#[pyfunction]
fn mix_from_config(py: Python<'_>, config_path: PathBuf) -> PyResult<PyObject> {
    let cfg = PipelineConfig::load(&config_path).map_err(pipeline_err)?;
    let run = py.allow_threads(|| pipeline::cmd_mix(&cfg)).map_err(pipeline_err)?;
    to_python(py, &run.manifest)
}

#[pymodule]
fn qagen(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_function(wrap_pyfunction!(normalize_answer, m)?)?;
    m.add_function(wrap_pyfunction!(exact_match, m)?)?;
    m.add_function(wrap_pyfunction!(token_f1, m)?)?;
    m.add_function(wrap_pyfunction!(score_prediction, m)?)?;
    m.add_function(wrap_pyfunction!(clip_context, m)?)?;
    m.add_function(wrap_pyfunction!(build_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(align_answer_span, m)?)?;
    m.add_function(wrap_pyfunction!(mix, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(mix_from_config, m)?)?;
    m.add("QagenError", m.py().get_type_bound::<QagenError>())?;
    Ok(())
}
