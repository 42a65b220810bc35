//! Python bindings: exposes parsing, normalization, verification and the
//! model-checker emission behind a small `Configuration` class.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use ifcil::flow::FlowTable;
use ifcil::graph::{build_graph, build_ifd, collect_requirements, resolve_typeattributes};
use ifcil::kts::build_kts;
use ifcil::normalize::{normalize, strip_ifl};
use ifcil::nusmv::{add_sink, attr_defines, emit};
use ifcil::parser::parse_config;
use ifcil::verify::{check_all, Outcome};
use ifcil::RuleSet;

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// One requirement verdict: label, outcome, optional witness path.
#[pyclass(get_all)]
#[derive(Clone)]
struct PyVerdict {
    label: String,
    requirement: String,
    outcome: String,
    witness: Option<String>,
}

#[pymethods]
impl PyVerdict {
    fn __repr__(&self) -> String {
        format!("Verdict({}: {})", self.label, self.outcome)
    }
}

/// A parsed configuration.
#[pyclass]
struct Configuration {
    gamma: RuleSet,
    warnings: Vec<String>,
}

fn flow_table(flows: Option<&str>, strict: bool) -> PyResult<FlowTable> {
    match flows {
        Some(text) => FlowTable::parse(text, !strict).map_err(value_error),
        None => Ok(FlowTable::defaults()),
    }
}

#[pymethods]
impl Configuration {
    /// Parses configuration text.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Configuration> {
        let parsed = parse_config(text).map_err(value_error)?;
        Ok(Configuration { gamma: parsed.gamma, warnings: parsed.warnings })
    }

    /// Warnings gathered while producing this configuration.
    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.warnings.clone()
    }

    /// Runs the six-phase rewriting pipeline.
    fn normalize(&self) -> PyResult<Configuration> {
        let normalized = normalize(&self.gamma).map_err(value_error)?;
        Ok(Configuration { gamma: normalized.gamma, warnings: normalized.warnings })
    }

    /// Drops every requirement annotation.
    fn strip_ifl(&self) -> Configuration {
        Configuration { gamma: strip_ifl(&self.gamma), warnings: Vec::new() }
    }

    /// Renders back to concrete syntax.
    fn render(&self) -> String {
        self.gamma.to_string()
    }

    fn __str__(&self) -> String {
        self.render()
    }

    fn rule_count(&self) -> usize {
        self.gamma.len()
    }

    /// Labels of the requirements in the normal form, in document order.
    fn requirement_labels(&self, py: Python<'_>) -> PyResult<Vec<String>> {
        Ok(self
            .verify(py, None, false)?
            .into_iter()
            .map(|v| v.label)
            .collect())
    }

    /// Normalizes, builds the flow diagram and decides every requirement.
    #[pyo3(signature = (flows=None, strict=false))]
    fn verify(
        &self,
        _py: Python<'_>,
        flows: Option<&str>,
        strict: bool,
    ) -> PyResult<Vec<PyVerdict>> {
        let gamma = normalize(&self.gamma).map_err(value_error)?.gamma;
        let (graph, _) = build_graph(&gamma).map_err(value_error)?;
        let reqs = collect_requirements(&gamma, &graph).map_err(value_error)?;
        let table = flow_table(flows, strict)?;
        let (ifd, _) = build_ifd(&graph, &table, strict).map_err(value_error)?;
        let kts = build_kts(&ifd);
        Ok(check_all(&kts, &reqs)
            .into_iter()
            .map(|v| PyVerdict {
                label: v.label,
                requirement: v.requirement.to_string(),
                outcome: match v.outcome {
                    Outcome::Satisfied => "satisfied".to_owned(),
                    Outcome::Violated => "violated".to_owned(),
                    Outcome::Unknown(_) => "unknown".to_owned(),
                },
                witness: v.witness.map(|steps| {
                    let mut text = steps[0].src.to_string();
                    for s in &steps {
                        text.push_str(&format!(" -[{}]-> {}", s.op, s.dst));
                    }
                    text
                }),
            })
            .collect())
    }

    /// Emits the model-checker input for the configuration.
    #[pyo3(signature = (flows=None, strict=false))]
    fn emit_nusmv(&self, flows: Option<&str>, strict: bool) -> PyResult<String> {
        let gamma = normalize(&self.gamma).map_err(value_error)?.gamma;
        let (graph, _) = build_graph(&gamma).map_err(value_error)?;
        let reqs = collect_requirements(&gamma, &graph).map_err(value_error)?;
        let table = flow_table(flows, strict)?;
        let (ifd, _) = build_ifd(&graph, &table, strict).map_err(value_error)?;
        let kts = build_kts(&ifd);
        let resolution = resolve_typeattributes(&gamma);
        let defines = attr_defines(&gamma, &resolution);
        emit(&add_sink(&kts), &defines, &reqs).map_err(value_error)
    }
}

/// Parses and verifies in one step, returning (label, outcome, witness)
/// triples.
#[pyfunction]
#[pyo3(signature = (text, flows=None, strict=false))]
fn verify_text(
    py: Python<'_>,
    text: &str,
    flows: Option<&str>,
    strict: bool,
) -> PyResult<Vec<(String, String, Option<String>)>> {
    let config = Configuration::parse(text)?;
    Ok(config
        .verify(py, flows, strict)?
        .into_iter()
        .map(|v| (v.label, v.outcome, v.witness))
        .collect())
}

#[pymodule]
fn ifcil_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Configuration>()?;
    m.add_class::<PyVerdict>()?;
    m.add_function(wrap_pyfunction!(verify_text, m)?)?;
    Ok(())
}
