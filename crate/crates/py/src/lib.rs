//! Python bindings. Structured results cross the boundary as plain dicts
//! and lists built from their JSON form.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use pseudotex::analysis;
use pseudotex::distortion::{distort, DistortionConfig, OffsetRng};
use pseudotex::experiment::{AdjustButton, StaircaseState};
use pseudotex::kinematics::PointerSample;
use pseudotex::logs::{read_summary_file, write_session_jsonl, write_summary_file, SummaryRow};
use pseudotex::observer::ObserverModel;
use pseudotex::service::{self, ServiceConfig};
use pseudotex::signal::{synthesize_block, SignalConfig, SignalState};
use pseudotex::simulate::{SimConfig, StudySelector};
use pseudotex::stats;

fn to_py(e: pseudotex::Error) -> PyErr {
    match e {
        pseudotex::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        pseudotex::Error::Protocol(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_name<T: serde::de::DeserializeOwned>(kind: &str, name: &str) -> PyResult<T> {
    serde_json::from_value(serde_json::Value::String(name.to_string()))
        .map_err(|_| PyValueError::new_err(format!("unknown {kind} {name:?}")))
}

/// Synthetic observer: roughness = amplitude * (1 + k * alpha) + noise.
#[pyclass(name = "ObserverModel", from_py_object)]
#[derive(Clone)]
struct PyObserverModel {
    inner: ObserverModel,
}

#[pymethods]
impl PyObserverModel {
    #[new]
    #[pyo3(signature = (k=None, sigma=None, jnd=None))]
    fn new(k: Option<f64>, sigma: Option<f64>, jnd: Option<f64>) -> PyResult<Self> {
        let d = ObserverModel::default();
        let inner = ObserverModel {
            k: k.unwrap_or(d.k),
            sigma: sigma.unwrap_or(d.sigma),
            jnd: jnd.unwrap_or(d.jnd),
            ..d
        };
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: ObserverModel::from_toml_str(text).map_err(to_py)?,
        })
    }

    #[getter]
    fn k(&self) -> f64 {
        self.inner.k
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma
    }

    #[getter]
    fn jnd(&self) -> f64 {
        self.inner.jnd
    }

    fn mean_roughness(&self, amplitude: f64, alpha: f64) -> f64 {
        self.inner.mean_roughness(&pseudotex::observer::Stimulus {
            amplitude,
            lambda: 0.2,
            alpha,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "ObserverModel(k={}, sigma={}, jnd={})",
            self.inner.k, self.inner.sigma, self.inner.jnd
        )
    }
}

/// Multiplicative staircase over the exponent S, multiplier 10^(S/100).
#[pyclass(name = "Staircase")]
struct PyStaircase {
    inner: StaircaseState,
}

#[pymethods]
impl PyStaircase {
    #[new]
    fn new(initial: f64) -> PyResult<Self> {
        Ok(Self {
            inner: StaircaseState::new(initial).map_err(to_py)?,
        })
    }

    /// Press one of "increase", "slight_increase", "slight_decrease", "decrease".
    fn press(&mut self, button: &str) -> PyResult<f64> {
        let b: AdjustButton = from_name("button", button)?;
        self.inner = self.inner.apply(b);
        Ok(self.inner.value())
    }

    #[getter]
    fn multiplier(&self) -> f64 {
        self.inner.multiplier()
    }

    #[getter]
    fn value(&self) -> f64 {
        self.inner.value()
    }

    #[getter]
    fn exponent(&self) -> f64 {
        self.inner.s
    }
}

/// One protocol connection. Feed client frames, get reply frames.
#[pyclass(name = "Connection", unsendable)]
struct PyConnection {
    inner: service::Connection,
}

#[pymethods]
impl PyConnection {
    #[new]
    #[pyo3(signature = (base_seed=0, data_dir=None))]
    fn new(base_seed: u64, data_dir: Option<PathBuf>) -> Self {
        Self {
            inner: service::Connection::new(ServiceConfig {
                base_seed,
                data_dir,
                ..ServiceConfig::default()
            }),
        }
    }

    fn handle_frame(&mut self, frame: &str) -> Vec<String> {
        self.inner.handle_frame(frame)
    }

    #[getter]
    fn session_id(&self) -> Option<String> {
        self.inner.session_id().map(str::to_string)
    }

    /// Every frame seen so far as (direction, frame) pairs.
    fn wire_log(&self) -> Vec<(String, String)> {
        self.inner
            .wire_log()
            .iter()
            .map(|e| {
                let dir = match e.dir {
                    service::Direction::In => "in",
                    service::Direction::Out => "out",
                };
                (dir.to_string(), e.frame.clone())
            })
            .collect()
    }

    fn export_logs(&self) -> PyResult<Vec<PathBuf>> {
        self.inner.export_logs().map_err(to_py)
    }
}

/// Distorted pointer offsets for `n` frames at constant speed, as (dx, dy) pairs.
#[pyfunction]
#[pyo3(signature = (alpha, speed, n, seed=0))]
fn distortion_offsets(alpha: f64, speed: f64, n: usize, seed: u64) -> PyResult<Vec<(f64, f64)>> {
    let cfg = DistortionConfig::new(alpha, seed).map_err(to_py)?;
    let mut rng = OffsetRng::seed_from(seed);
    let origin = PointerSample::new(0.0, 0.0, 0.0);
    (0..n)
        .map(|_| {
            let d = distort(&origin, speed, &cfg, &mut rng).map_err(to_py)?;
            Ok((d.dx, d.dy))
        })
        .collect()
}

/// Square-wave drive signal for a stroke at constant speed.
#[pyfunction]
#[pyo3(signature = (amplitude, wavelength, speed, duration, sample_rate=48000.0))]
fn synthesize(amplitude: f64, wavelength: f64, speed: f64, duration: f64, sample_rate: f64) -> PyResult<Vec<f32>> {
    let cfg = SignalConfig::new(amplitude, wavelength).map_err(to_py)?;
    let (samples, _) =
        synthesize_block(SignalState::default(), &cfg, |_| speed, duration, sample_rate).map_err(to_py)?;
    Ok(samples)
}

/// Run a study with synthetic observers and return the trial summary rows.
/// With `out`, also writes `logs/pXX.jsonl` and `summary.csv` there.
#[pyfunction]
#[pyo3(signature = (study, participants=10, seed=0, observer=None, out=None))]
fn simulate<'py>(
    py: Python<'py>,
    study: &str,
    participants: usize,
    seed: u64,
    observer: Option<PyObserverModel>,
    out: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let study: StudySelector = study.parse().map_err(to_py)?;
    let mut cfg = SimConfig::new(study, participants, seed);
    if let Some(o) = observer {
        cfg.observer = o.inner;
    }
    cfg.validate().map_err(to_py)?;
    let runs = py.detach(|| pseudotex::simulate::simulate(&cfg)).map_err(to_py)?;
    let rows: Vec<SummaryRow> = runs.iter().flat_map(|r| r.summary()).collect();
    if let Some(dir) = out {
        for r in &runs {
            write_session_jsonl(dir.join("logs").join(format!("{}.jsonl", r.participant)), &r.log(&cfg.session))
                .map_err(to_py)?;
        }
        write_summary_file(dir.join("summary.csv"), &rows).map_err(to_py)?;
    }
    json(py, &rows)
}

/// Analyze a summary CSV. With `out`, also writes the report files there.
#[pyfunction]
#[pyo3(signature = (summary, out=None))]
fn analyze<'py>(py: Python<'py>, summary: PathBuf, out: Option<PathBuf>) -> PyResult<Bound<'py, PyAny>> {
    let rows = read_summary_file(&summary).map_err(to_py)?;
    let report = analysis::analyze(&rows).map_err(to_py)?;
    if let Some(dir) = out {
        analysis::write_report(dir, &report).map_err(to_py)?;
    }
    json(py, &report)
}

#[pyfunction]
fn chisq_gof<'py>(py: Python<'py>, observed: Vec<f64>, expected: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    json(py, &stats::chisq_gof(&observed, &expected).map_err(to_py)?)
}

#[pyfunction]
fn oneway_anova<'py>(py: Python<'py>, groups: Vec<Vec<f64>>) -> PyResult<Bound<'py, PyAny>> {
    json(py, &stats::oneway_anova(&groups).map_err(to_py)?)
}

#[pyfunction]
fn tukey_hsd<'py>(py: Python<'py>, groups: Vec<Vec<f64>>) -> PyResult<Bound<'py, PyAny>> {
    json(py, &stats::tukey_hsd(&groups).map_err(to_py)?)
}

/// Upper tail of the studentized range; `df=None` means infinite.
#[pyfunction]
#[pyo3(signature = (q, k, df=None))]
fn studentized_range_sf(q: f64, k: usize, df: Option<f64>) -> PyResult<f64> {
    stats::dist::studentized_range_sf(q, k, df.unwrap_or(f64::INFINITY)).map_err(to_py)
}

#[pymodule]
pub fn pseudotex_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyObserverModel>()?;
    m.add_class::<PyStaircase>()?;
    m.add_class::<PyConnection>()?;
    m.add_function(wrap_pyfunction!(distortion_offsets, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(chisq_gof, m)?)?;
    m.add_function(wrap_pyfunction!(oneway_anova, m)?)?;
    m.add_function(wrap_pyfunction!(tukey_hsd, m)?)?;
    m.add_function(wrap_pyfunction!(studentized_range_sf, m)?)?;
    Ok(())
}
