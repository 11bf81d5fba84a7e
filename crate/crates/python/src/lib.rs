//! Python bindings: scene specs, frame rendering, dataset generation, label
//! I/O and detection metrics.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use splatgen_core::annotator::AnnotationMode;
use splatgen_core::dataset::{self, YoloLabel};
use splatgen_core::metrics::{self, ApMode, Detection, GroundTruth};
use splatgen_core::pipeline::{self, GenerateOptions};
use splatgen_core::scene::{self, AssetLibrary};
use splatgen_core::splat::ply::parse_ply;
use splatgen_core::{BBox, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::File { .. } | Error::Io(_) => PyOSError::new_err(e.to_string()),
        e if e.is_user_error() => PyValueError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    PyModule::import(py, "json")?.call_method1("loads", (text,))
}

fn parse_ap_mode(s: &str) -> PyResult<ApMode> {
    s.parse().map_err(py_err)
}

fn bbox(t: (f64, f64, f64, f64)) -> BBox {
    BBox::new(t.0, t.1, t.2, t.3)
}

fn tuple(b: &BBox) -> (f64, f64, f64, f64) {
    (b.x_min, b.y_min, b.x_max, b.y_max)
}

/// A scene specification with defaults filled in.
#[pyclass(name = "SceneSpec", module = "splatgen", skip_from_py_object)]
#[derive(Clone)]
struct PySceneSpec {
    inner: scene::SceneSpec,
}

#[pymethods]
impl PySceneSpec {
    /// Load a TOML or JSON spec; relative asset paths resolve against its directory.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: scene::load_scene_spec(&path).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: scene::SceneSpec::from_toml(text).map_err(py_err)?,
        })
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml().map_err(py_err)
    }

    /// Raise ValueError on the first problem; return warnings otherwise.
    fn validate(&self) -> PyResult<Vec<String>> {
        self.inner.validate().map_err(py_err)
    }

    #[getter]
    fn classes(&self) -> Vec<String> {
        self.inner.classes.clone()
    }

    #[getter]
    fn image_size(&self) -> (u32, u32) {
        (self.inner.image.width, self.inner.image.height)
    }

    fn set_image_size(&mut self, width: u32, height: u32) {
        self.inner.image.width = width;
        self.inner.image.height = height;
    }

    #[getter]
    fn mode(&self) -> &'static str {
        match self.inner.annotation.mode {
            AnnotationMode::Corners => "corners",
            AnnotationMode::Mask => "mask",
        }
    }

    #[setter]
    fn set_mode(&mut self, mode: &str) -> PyResult<()> {
        self.inner.annotation.mode = mode.parse().map_err(py_err)?;
        Ok(())
    }

    fn __repr__(&self) -> String {
        let (w, h) = self.image_size();
        format!("SceneSpec(classes={:?}, image={w}x{h}, mode={})", self.inner.classes, self.mode())
    }
}

#[pyclass(name = "Annotation", module = "splatgen", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct PyAnnotation {
    class_id: u32,
    instance_id: u32,
    /// `(x_min, y_min, x_max, y_max)` in pixels.
    bbox: (f64, f64, f64, f64),
    visibility: f64,
    truncated: bool,
    pixel_area: u64,
}

#[pymethods]
impl PyAnnotation {
    fn __repr__(&self) -> String {
        let (a, b, c, d) = self.bbox;
        format!(
            "Annotation(class_id={}, instance_id={}, bbox=({a:.2}, {b:.2}, {c:.2}, {d:.2}), visibility={:.3})",
            self.class_id, self.instance_id, self.visibility
        )
    }
}

impl From<&splatgen_core::annotator::Annotation> for PyAnnotation {
    fn from(a: &splatgen_core::annotator::Annotation) -> Self {
        Self {
            class_id: a.class_id,
            instance_id: a.instance_id,
            bbox: tuple(&a.bbox),
            visibility: a.visibility,
            truncated: a.truncated,
            pixel_area: a.pixel_area,
        }
    }
}

/// One rendered and annotated frame.
#[pyclass(name = "Frame", module = "splatgen", frozen)]
struct PyFrame {
    width: usize,
    height: usize,
    gamma: f64,
    target: splatgen_core::rasterizer::RenderTarget,
    annotations: Vec<PyAnnotation>,
}

#[pymethods]
impl PyFrame {
    #[getter]
    fn width(&self) -> usize {
        self.width
    }

    #[getter]
    fn height(&self) -> usize {
        self.height
    }

    #[getter]
    fn annotations(&self) -> Vec<PyAnnotation> {
        self.annotations.clone()
    }

    /// Gamma-encoded RGB8, row-major, `height * width * 3` bytes.
    fn rgb<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &dataset::to_rgb8(&self.target, self.gamma))
    }

    /// Accumulated opacity per pixel, row-major.
    fn alpha(&self) -> Vec<f64> {
        self.target.alpha.clone()
    }

    fn png<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyBytes>> {
        let bytes = dataset::encode_image(&self.target, self.gamma).map_err(py_err)?;
        Ok(PyBytes::new(py, &bytes))
    }

    fn yolo_labels(&self) -> String {
        let labels: Vec<YoloLabel> = self
            .annotations
            .iter()
            .map(|a| YoloLabel {
                class_id: a.class_id,
                bbox: bbox(a.bbox),
                confidence: None,
            })
            .collect();
        dataset::write_yolo_labels(&labels, self.width as u32, self.height as u32)
    }
}

/// Render and annotate frame `frame_index` of the run seeded by `seed`.
#[pyfunction]
#[pyo3(signature = (spec, seed, frame_index, threads = 0))]
fn render_frame(py: Python<'_>, spec: &PySceneSpec, seed: u64, frame_index: u64, threads: usize) -> PyResult<PyFrame> {
    let spec = spec.inner.clone();
    let fr = py
        .detach(|| {
            pipeline::with_threads(threads, || {
                let library = AssetLibrary::load(&spec)?;
                pipeline::render_frame(&spec, &library, seed, frame_index)
            })
        })
        .map_err(py_err)?
        .map_err(py_err)?;
    Ok(PyFrame {
        width: fr.target.width,
        height: fr.target.height,
        gamma: spec.output.gamma,
        annotations: fr.annotations.iter().map(PyAnnotation::from).collect(),
        target: fr.target,
    })
}

/// Write a dataset to `out` and return the run manifest as a dict.
#[pyfunction]
#[pyo3(signature = (spec, out, seed, frames, threads = 0))]
fn generate<'py>(
    py: Python<'py>,
    spec: &PySceneSpec,
    out: PathBuf,
    seed: u64,
    frames: u64,
    threads: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let spec = spec.inner.clone();
    let opts = GenerateOptions {
        out: out.clone(),
        master_seed: seed,
        frames,
        threads,
    };
    py.detach(|| pipeline::generate(&spec, &opts)).map_err(py_err)?;
    let text = std::fs::read_to_string(out.join(dataset::MANIFEST_FILE))?;
    json_to_py(py, &text)
}

/// Score a directory of prediction label files against ground truth.
#[pyfunction]
#[pyo3(signature = (preds, gt, classes, conf_thresh = metrics::DEFAULT_CONF_THRESH, ap_mode = "coco101"))]
fn evaluate<'py>(
    py: Python<'py>,
    preds: PathBuf,
    gt: PathBuf,
    classes: Vec<String>,
    conf_thresh: f64,
    ap_mode: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let mode = parse_ap_mode(ap_mode)?;
    let report = metrics::evaluate(&preds, &gt, &classes, conf_thresh, mode).map_err(py_err)?;
    json_to_py(py, &report.to_json())
}

/// mAP over `thresholds` (default 0.50:0.05:0.95).
///
/// Detections are `(image_id, class_id, x_min, y_min, x_max, y_max, confidence)`,
/// ground truths the same without confidence.
#[pyfunction]
#[pyo3(signature = (detections, ground_truth, thresholds = None, ap_mode = "coco101"))]
fn mean_average_precision(
    detections: Vec<(usize, u32, f64, f64, f64, f64, f64)>,
    ground_truth: Vec<(usize, u32, f64, f64, f64, f64)>,
    thresholds: Option<Vec<f64>>,
    ap_mode: &str,
) -> PyResult<f64> {
    let dets: Vec<Detection> = detections
        .into_iter()
        .map(|(image_id, class_id, a, b, c, d, confidence)| Detection {
            image_id,
            class_id,
            bbox: BBox::new(a, b, c, d),
            confidence,
        })
        .collect();
    let gts: Vec<GroundTruth> = ground_truth
        .into_iter()
        .map(|(image_id, class_id, a, b, c, d)| GroundTruth {
            image_id,
            class_id,
            bbox: BBox::new(a, b, c, d),
        })
        .collect();
    let t = thresholds.unwrap_or_else(metrics::coco_thresholds);
    let table = metrics::map_at(&dets, &gts, &t, parse_ap_mode(ap_mode)?).map_err(py_err)?;
    Ok(table.map)
}

/// AP of a ranked list of true/false positive flags.
#[pyfunction]
#[pyo3(signature = (tp_flags, num_gt, ap_mode = "coco101"))]
fn average_precision(tp_flags: Vec<bool>, num_gt: usize, ap_mode: &str) -> PyResult<f64> {
    Ok(metrics::average_precision(
        &metrics::pr_curve(&tp_flags, num_gt),
        parse_ap_mode(ap_mode)?,
    ))
}

#[pyfunction]
fn f1_score(precision: f64, recall: f64) -> f64 {
    metrics::f1_score(precision, recall)
}

#[pyfunction]
fn iou(a: (f64, f64, f64, f64), b: (f64, f64, f64, f64)) -> f64 {
    metrics::iou(&bbox(a), &bbox(b))
}

/// Format `(class_id, x_min, y_min, x_max, y_max)` pixel boxes as YOLO lines.
#[pyfunction]
fn write_yolo(boxes: Vec<(u32, f64, f64, f64, f64)>, width: u32, height: u32) -> String {
    let labels: Vec<YoloLabel> = boxes
        .into_iter()
        .map(|(class_id, a, b, c, d)| YoloLabel {
            class_id,
            bbox: BBox::new(a, b, c, d),
            confidence: None,
        })
        .collect();
    dataset::write_yolo_labels(&labels, width, height)
}

/// Parse YOLO lines into `(class_id, x_min, y_min, x_max, y_max, confidence)`.
#[pyfunction]
fn read_yolo(text: &str, width: u32, height: u32) -> PyResult<Vec<(u32, f64, f64, f64, f64, Option<f64>)>> {
    let labels = dataset::read_yolo_labels(text, width, height).map_err(py_err)?;
    Ok(labels
        .iter()
        .map(|l| {
            let (a, b, c, d) = tuple(&l.bbox);
            (l.class_id, a, b, c, d, l.confidence)
        })
        .collect())
}

/// Summary of a 3DGS PLY file: `(count, sh_degree, means)`.
#[pyfunction]
fn read_ply(path: PathBuf) -> PyResult<(usize, u8, Vec<(f64, f64, f64)>)> {
    let bytes = std::fs::read(&path)?;
    let cloud = parse_ply(&bytes, &path.to_string_lossy()).map_err(py_err)?;
    let means = cloud.gaussians().iter().map(|g| (g.mean.x, g.mean.y, g.mean.z)).collect();
    Ok((cloud.len(), cloud.sh_degree(), means))
}

#[pymodule]
fn splatgen(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PySceneSpec>()?;
    m.add_class::<PyAnnotation>()?;
    m.add_class::<PyFrame>()?;
    m.add_function(wrap_pyfunction!(render_frame, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(mean_average_precision, m)?)?;
    m.add_function(wrap_pyfunction!(average_precision, m)?)?;
    m.add_function(wrap_pyfunction!(f1_score, m)?)?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(write_yolo, m)?)?;
    m.add_function(wrap_pyfunction!(read_yolo, m)?)?;
    m.add_function(wrap_pyfunction!(read_ply, m)?)?;
    Ok(())
}
