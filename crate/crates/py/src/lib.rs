//! Python bindings: geometry, similarity, assignment, annotation parsing,
//! evaluation, keyframes and an in-process synthetic tracking loop.

use ortrack::association::{hungarian as solve, CostMatrix};
use ortrack::features::{self, FeatureVec, SyntheticProvider};
use ortrack::geometry::{self, FrameDims, IouMode};
use ortrack::ingest::{self, PromptFamily};
use ortrack::keyframes::{self, DiffSignal, KeyframeParams};
use ortrack::metrics::{self, EvalPair, MetricOptions, MetricReport, COLUMNS};
use ortrack::synth::{self, Motion, SynthSpec};
use ortrack::tracker::{self, TrackerConfig};
use ortrack::ErrorClass;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: ortrack::Error) -> PyErr {
    match e.class() {
        ErrorClass::Input | ErrorClass::Schema => PyValueError::new_err(e.to_string()),
        ErrorClass::Provider | ErrorClass::Internal => PyRuntimeError::new_err(e.to_string()),
    }
}

fn dims(width: f64, height: f64) -> PyResult<FrameDims> {
    FrameDims::new(width, height).map_err(to_py)
}

fn iou_mode(name: &str) -> PyResult<IouMode> {
    match name {
        "plain" => Ok(IouMode::Plain),
        "wrap" => Ok(IouMode::Wrap),
        other => Err(PyValueError::new_err(format!("unknown IoU mode {other:?}"))),
    }
}

/// Axis-aligned box `[x1, y1, x2, y2]` in pixels.
#[pyclass(name = "BoundingBox", frozen, eq, from_py_object)]
#[derive(Clone, Copy, PartialEq)]
struct PyBox(geometry::BoundingBox);

#[pymethods]
impl PyBox {
    #[new]
    fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> PyResult<Self> {
        geometry::BoundingBox::new(x1, y1, x2, y2)
            .map(PyBox)
            .map_err(to_py)
    }

    #[getter]
    fn x1(&self) -> f64 {
        self.0.x1
    }
    #[getter]
    fn y1(&self) -> f64 {
        self.0.y1
    }
    #[getter]
    fn x2(&self) -> f64 {
        self.0.x2
    }
    #[getter]
    fn y2(&self) -> f64 {
        self.0.y2
    }

    fn width(&self) -> f64 {
        self.0.width()
    }

    fn height(&self) -> f64 {
        self.0.height()
    }

    fn area(&self) -> f64 {
        self.0.area()
    }

    #[pyo3(name = "to_list")]
    fn as_list(&self) -> Vec<f64> {
        <[f64; 4]>::from(self.0).to_vec()
    }

    fn __repr__(&self) -> String {
        let b = self.0;
        format!("BoundingBox({}, {}, {}, {})", b.x1, b.y1, b.x2, b.y2)
    }
}

/// Pieces of the box scaled by `alpha` about its center, wrapped at the seam.
#[pyfunction]
#[pyo3(signature = (b, alpha, width = 3760.0, height = 480.0))]
fn expand_box(b: PyBox, alpha: f64, width: f64, height: f64) -> PyResult<Vec<PyBox>> {
    let r = geometry::expand_box(&b.0, alpha, &dims(width, height)?).map_err(to_py)?;
    Ok(r.pieces().iter().copied().map(PyBox).collect())
}

#[pyfunction]
fn iou(a: PyBox, b: PyBox) -> f64 {
    geometry::iou(&a.0, &b.0)
}

#[pyfunction]
#[pyo3(signature = (a, b, width = 3760.0, height = 480.0))]
fn wrap_iou(a: PyBox, b: PyBox, width: f64, height: f64) -> PyResult<f64> {
    Ok(geometry::wrap_iou(&a.0, &b.0, &dims(width, height)?))
}

fn vec_of(values: Vec<f64>) -> PyResult<FeatureVec> {
    FeatureVec::new(values).map_err(to_py)
}

#[pyfunction]
fn cosine(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    let (a, b) = (vec_of(a)?, vec_of(b)?);
    if a.dim() != b.dim() {
        return Err(PyValueError::new_err(format!(
            "dimensions differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(features::cosine(&a, &b))
}

/// `local + lam * global`.
#[pyfunction]
fn fuse(local: Vec<f64>, global: Vec<f64>, lam: f64) -> PyResult<Vec<f64>> {
    features::fuse(&vec_of(local)?, &vec_of(global)?, lam)
        .map(FeatureVec::into_values)
        .map_err(to_py)
}

/// Minimum-cost assignment; returns `(row, col)` pairs.
#[pyfunction]
fn hungarian(cost: Vec<Vec<f64>>) -> PyResult<Vec<(usize, usize)>> {
    let m = CostMatrix::from_rows(&cost).map_err(to_py)?;
    Ok(solve(&m).pairs)
}

#[pyfunction]
#[pyo3(signature = (description, family = "generic"))]
fn build_prompt(description: &str, family: &str) -> PyResult<String> {
    let family = match family {
        "generic" => PromptFamily::Generic,
        "labeling" => PromptFamily::Labeling,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown prompt family {other:?}"
            )))
        }
    };
    ingest::build_prompt(description, family).map_err(to_py)
}

/// Parse an annotation document and return it in canonical form as a dict.
#[pyfunction]
fn parse_orset<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    let scene = ingest::parse_orset(text).map_err(to_py)?;
    py.import("json")?
        .call_method1("loads", (ingest::serialize_orset(&scene),))
}

fn report_dict<'py>(py: Python<'py>, r: &MetricReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (name, v) in COLUMNS.iter().zip(r.columns()) {
        d.set_item(*name, v)?;
    }
    Ok(d)
}

/// Score results (JSON lines text) against an annotation document.
#[pyfunction]
#[pyo3(signature = (gt, results, matching = "wrap"))]
fn evaluate<'py>(
    py: Python<'py>,
    gt: &str,
    results: &str,
    matching: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let pair = EvalPair {
        gt: ingest::parse_orset(gt).map_err(to_py)?,
        pred: tracker::read_results(results.as_bytes()).map_err(to_py)?,
    };
    let mode = iou_mode(matching)?;
    let opts = MetricOptions {
        matching: mode,
        loca: mode,
        ..MetricOptions::default()
    };
    let r = metrics::evaluate(&[pair], &opts).map_err(to_py)?;
    report_dict(py, &r)
}

#[pyfunction]
#[pyo3(signature = (signal, smooth_w = 5, k = 1.0, d_min = 15))]
fn select_keyframes(
    signal: Vec<f64>,
    smooth_w: usize,
    k: f64,
    d_min: usize,
) -> PyResult<Vec<usize>> {
    let s = DiffSignal::new(signal).map_err(to_py)?;
    keyframes::select_keyframes(&s, &KeyframeParams { smooth_w, k, d_min }).map_err(to_py)
}

/// Generate a synthetic scene, track it and score the result.
#[pyfunction]
#[pyo3(signature = (objects = 10, frames = 200, sigma = 0.0, seed = 0, motion = "linear", alpha = 1.2, lam = 0.5))]
#[allow(clippy::too_many_arguments)]
fn synthetic_run<'py>(
    py: Python<'py>,
    objects: usize,
    frames: u64,
    sigma: f64,
    seed: u64,
    motion: &str,
    alpha: f64,
    lam: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let motion = match motion {
        "linear" => Motion::Linear,
        "seam" => Motion::Seam,
        other => return Err(PyValueError::new_err(format!("unknown motion {other:?}"))),
    };
    let spec = SynthSpec {
        objects,
        frames,
        motion,
        noise_sigma: sigma,
        seed,
        ..SynthSpec::default()
    };
    let cfg = TrackerConfig {
        alpha,
        lambda: lam,
        ..TrackerConfig::default()
    };
    let (report, ids) = py
        .detach(|| -> ortrack::Result<_> {
            let bundle = synth::generate(&spec)?;
            let provider: SyntheticProvider = bundle.provider.build()?;
            let frames: Vec<ingest::FrameRef> = bundle
                .gt
                .scored_frames()
                .map(ingest::FrameRef::new)
                .collect();
            let pred = tracker::run(
                &frames,
                synth::DESCRIPTION,
                &bundle.detections,
                &provider,
                &cfg,
            )?;
            let ids = pred.len();
            let r = metrics::evaluate(
                &[EvalPair {
                    gt: bundle.gt,
                    pred,
                }],
                &MetricOptions::default(),
            )?;
            Ok((r, ids))
        })
        .map_err(to_py)?;
    let d = report_dict(py, &report)?;
    d.set_item("trajectories", ids)?;
    Ok(d)
}

#[pymodule]
#[pyo3(name = "ortrack")]
fn ortrack_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBox>()?;
    m.add_function(wrap_pyfunction!(expand_box, m)?)?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(wrap_iou, m)?)?;
    m.add_function(wrap_pyfunction!(cosine, m)?)?;
    m.add_function(wrap_pyfunction!(fuse, m)?)?;
    m.add_function(wrap_pyfunction!(hungarian, m)?)?;
    m.add_function(wrap_pyfunction!(build_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(parse_orset, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(select_keyframes, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_run, m)?)?;
    m.add("COLUMNS", COLUMNS.to_vec())?;
    Ok(())
}
