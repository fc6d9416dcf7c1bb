//! Python bindings: key-rate formulas, thresholds, attack operators, protocol
//! runs and key distillation. Structured results are returned as dicts.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sqkd_core::channels::{self, AttackOperator};
use sqkd_core::keyrate::{self, curves};
use sqkd_core::postprocess;
use sqkd_core::protocol::{self, ProtocolConfig, RawKeys};

fn err(e: sqkd_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Serializes through JSON so Python receives plain dicts and lists.
fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyfunction]
fn binary_entropy(x: f64) -> PyResult<f64> {
    sqkd_core::quantum::binary_entropy(x).map_err(err)
}

/// Rate report for depolarizing channels of strengths `p` (forward) and `q`.
#[pyfunction]
fn keyrate_semi_honest<'py>(py: Python<'py>, p: f64, q: f64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &keyrate::keyrate_semi_honest(p, q).map_err(err)?)
}

#[pyfunction]
fn keyrate_worst_low<'py>(py: Python<'py>, q: f64, q_z: f64, p_w: f64, p_a: f64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &keyrate::keyrate_worst_low(q, q_z, p_w, p_a).map_err(err)?)
}

#[pyfunction]
fn keyrate_worst_high<'py>(py: Python<'py>, q: f64, p_w: f64, p_a: f64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &keyrate::keyrate_worst_high(q, p_w, p_a).map_err(err)?)
}

/// Largest `Q` with non-negative rate. `model` is `semi-honest`, `worst-low`
/// or `worst-high`; the worst-case models tie `p_w` (and `Q_Z`) to `Q`.
#[pyfunction]
#[pyo3(signature = (model, p_a=0.5, lo=0.0, hi=0.3))]
fn find_threshold<'py>(py: Python<'py>, model: &str, p_a: f64, lo: f64, hi: f64) -> PyResult<Bound<'py, PyAny>> {
    let rate = |q: f64| -> sqkd_core::Result<f64> {
        Ok(match model {
            "semi-honest" => curves::semi_honest(q, None)?.rate,
            "worst-low" => curves::worst_low(q, p_a, None, None)?.rate,
            "worst-high" => curves::worst_high(q, p_a, None)?.rate,
            other => return Err(sqkd_core::Error::InvalidArgument(format!("unknown model {other:?}"))),
        })
    };
    rate(lo).map_err(err)?;
    let t = keyrate::find_threshold(|q| rate(q).unwrap_or(f64::NAN), lo, hi).map_err(err)?;
    to_py(py, &t)
}

/// The server's unitary attack, stored by its images of the Bell states.
#[pyclass(name = "AttackOperator", frozen)]
struct PyAttack {
    inner: AttackOperator,
}

#[pymethods]
impl PyAttack {
    #[staticmethod]
    fn honest(d_c: usize) -> Self {
        PyAttack {
            inner: AttackOperator::honest(d_c),
        }
    }

    #[staticmethod]
    fn semi_honest(q: f64) -> PyResult<Self> {
        Ok(PyAttack {
            inner: AttackOperator::semi_honest(q).map_err(err)?,
        })
    }

    #[staticmethod]
    fn random_symmetric(d_c: usize, seed: u64) -> Self {
        PyAttack {
            inner: channels::random_symmetric_attack(d_c, &mut ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(PyAttack { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn ancilla_dim(&self) -> usize {
        self.inner.ancilla_dim()
    }

    fn f_norms(&self) -> [f64; 4] {
        self.inner.f_norms()
    }

    #[pyo3(signature = (symmetric=true))]
    fn is_valid(&self, symmetric: bool) -> bool {
        channels::validate_attack(&self.inner, symmetric).pass
    }

    fn exact_iac(&self, q: f64) -> PyResult<f64> {
        keyrate::exact_iac(&self.inner, q).map_err(err)
    }

    /// Every quantity in the bound chain at mismatch rate `q`.
    fn bound_chain<'py>(&self, py: Python<'py>, q: f64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &keyrate::bound_chain(&self.inner, q).map_err(err)?)
    }

    fn __repr__(&self) -> String {
        format!("AttackOperator(d_c={})", self.inner.ancilla_dim())
    }
}

/// Runs the protocol from a JSON config; returns statistics, raw keys and the
/// abort flag.
#[pyfunction]
fn run_protocol<'py>(py: Python<'py>, config_json: &str) -> PyResult<Bound<'py, PyAny>> {
    let config: ProtocolConfig =
        serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let run = py.detach(|| protocol::run_protocol(&config)).map_err(err)?;
    #[derive(serde::Serialize)]
    struct Out<'a> {
        stats: &'a protocol::TranscriptStats,
        aborted: bool,
        key_a: &'a [bool],
        key_b: &'a [bool],
    }
    to_py(
        py,
        &Out {
            stats: &run.stats,
            aborted: run.aborted,
            key_a: &run.keys.info_a,
            key_b: &run.keys.info_b,
        },
    )
}

/// Symmetrize, reconcile and hash two raw keys, sizing the result with the
/// semi-honest rate for strengths `p`, `q`.
#[pyfunction]
fn distill_semi_honest<'py>(
    py: Python<'py>,
    key_a: Vec<bool>,
    key_b: Vec<bool>,
    qz_estimate: f64,
    p: f64,
    q: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let keys = RawKeys::new(key_a, key_b).map_err(err)?;
    let report = keyrate::keyrate_semi_honest(p, q).map_err(err)?;
    let out = postprocess::distill(&keys, qz_estimate, &report, seed).map_err(err)?;
    let dict = to_py(py, &out)?;
    dict.set_item("key_hex", postprocess::bits_to_hex(&out.key_a))?;
    dict.set_item("summary", out.summary())?;
    Ok(dict)
}

#[pymodule]
fn sqkd(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(binary_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(keyrate_semi_honest, m)?)?;
    m.add_function(wrap_pyfunction!(keyrate_worst_low, m)?)?;
    m.add_function(wrap_pyfunction!(keyrate_worst_high, m)?)?;
    m.add_function(wrap_pyfunction!(find_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(run_protocol, m)?)?;
    m.add_function(wrap_pyfunction!(distill_semi_honest, m)?)?;
    m.add_class::<PyAttack>()?;
    Ok(())
}
