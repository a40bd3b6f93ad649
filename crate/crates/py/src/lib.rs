//! Python bindings. Arrays must be C-contiguous; labels are `uint32` and
//! model maps `float32`. Heavy work runs with the GIL released.

use std::collections::BTreeMap;

use hoverpost_core::loss::{combined_loss, combined_loss_grad, LossBreakdown, LossConfig, PredictionMaps};
use hoverpost_core::metrics::{detection_f1 as core_detection_f1, multiclass_pq as core_multiclass_pq, panoptic_quality as core_pq};
use hoverpost_core::postproc::{
    classify_instances as core_classify, extract_records, instance_segment as core_segment, PostprocConfig,
};
use hoverpost_core::targets::{ClassWeights, TargetMaps};
use hoverpost_core::{ChannelMap, ClassTable, Grid, InstanceMap, ProbTable};
use numpy::ndarray::Dimension;
use numpy::{Element, PyArray1, PyArrayMethods, PyReadonlyArray, PyReadonlyArray2, PyReadonlyArray3, PyUntypedArrayMethods};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

fn err(e: hoverpost_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn contiguous<'a, T: Element, D: Dimension>(a: &'a PyReadonlyArray<'_, T, D>, what: &str) -> PyResult<&'a [T]> {
    let bad = || PyValueError::new_err(format!("{what} must be a C-contiguous array"));
    // as_slice also accepts Fortran order, which would scramble the pixels
    if !a.is_c_contiguous() {
        return Err(bad());
    }
    a.as_slice().map_err(|_| bad())
}

fn grid<T: Element + Copy>(a: &PyReadonlyArray2<'_, T>, what: &str) -> PyResult<Grid<T>> {
    let [h, w] = [a.shape()[0], a.shape()[1]];
    Grid::from_vec(h, w, contiguous(a, what)?.to_vec()).map_err(err)
}

fn channels<T: Element + Copy>(a: &PyReadonlyArray3<'_, T>, what: &str) -> PyResult<ChannelMap<T>> {
    let s = a.shape();
    ChannelMap::from_vec(s[0], s[1], s[2], contiguous(a, what)?.to_vec()).map_err(err)
}

fn instances(a: &PyReadonlyArray2<'_, u32>, what: &str) -> PyResult<InstanceMap> {
    InstanceMap::from_vec(a.shape()[0], a.shape()[1], contiguous(a, what)?.to_vec()).map_err(err)
}

fn label_array<'py>(py: Python<'py>, inst: &InstanceMap) -> PyResult<Bound<'py, PyAny>> {
    Ok(PyArray1::from_slice(py, &inst.labels)
        .reshape([inst.height, inst.width])?
        .into_any())
}

fn config(np_threshold: f32, energy_threshold: f32, min_size: usize) -> PostprocConfig {
    PostprocConfig {
        np_threshold,
        energy_threshold,
        min_size,
    }
}

/// Label nuclei from a foreground probability map and HV maps.
#[pyfunction]
#[pyo3(signature = (np_probs, hv, np_threshold=0.5, energy_threshold=0.4, min_size=10))]
fn instance_segment<'py>(
    py: Python<'py>,
    np_probs: PyReadonlyArray2<'py, f32>,
    hv: PyReadonlyArray3<'py, f32>,
    np_threshold: f32,
    energy_threshold: f32,
    min_size: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let np = grid(&np_probs, "np_probs")?;
    let hv = channels(&hv, "hv")?;
    let cfg = config(np_threshold, energy_threshold, min_size);
    let inst = py.detach(|| core_segment(&np, &hv, &cfg)).map_err(err)?;
    label_array(py, &inst)
}

/// Majority class and mean class probability per instance.
#[pyfunction]
fn classify_instances(
    py: Python<'_>,
    instances: PyReadonlyArray2<'_, u32>,
    tp_probs: PyReadonlyArray3<'_, f32>,
) -> PyResult<(ClassTable, ProbTable)> {
    let inst = self::instances(&instances, "instances")?;
    let tp = channels(&tp_probs, "tp_probs")?;
    py.detach(|| core_classify(&inst, &tp)).map_err(err)
}

/// Full tile pipeline; returns the label map and one dict per nucleus.
#[pyfunction]
#[pyo3(signature = (np_probs, hv, tp_probs, np_threshold=0.5, energy_threshold=0.4, min_size=10))]
fn postprocess_tile<'py>(
    py: Python<'py>,
    np_probs: PyReadonlyArray2<'py, f32>,
    hv: PyReadonlyArray3<'py, f32>,
    tp_probs: PyReadonlyArray3<'py, f32>,
    np_threshold: f32,
    energy_threshold: f32,
    min_size: usize,
) -> PyResult<(Bound<'py, PyAny>, Bound<'py, PyList>)> {
    let np = grid(&np_probs, "np_probs")?;
    let hv = channels(&hv, "hv")?;
    let tp = channels(&tp_probs, "tp_probs")?;
    let cfg = config(np_threshold, energy_threshold, min_size);
    let (inst, records) = py
        .detach(|| {
            let inst = core_segment(&np, &hv, &cfg)?;
            let (classes, probs) = core_classify(&inst, &tp)?;
            let records = extract_records(&inst, &classes, &probs)?;
            Ok((inst, records))
        })
        .map_err(err)?;
    let list = PyList::empty(py);
    for r in records {
        let d = PyDict::new(py);
        d.set_item("id", r.id)?;
        d.set_item("class_id", r.class_id)?;
        d.set_item("class_prob", r.class_prob)?;
        d.set_item("centroid", r.centroid.to_vec())?;
        d.set_item("bbox", r.bbox.to_vec())?;
        d.set_item("contour", r.contour.iter().map(|v| v.to_vec()).collect::<Vec<_>>())?;
        list.append(d)?;
    }
    Ok((label_array(py, &inst)?, list))
}

/// NP mask (`uint8`), HV maps (`float32`, H×W×2) and type map (`uint32`).
#[pyfunction]
#[pyo3(signature = (instances, classes=None))]
fn gen_targets<'py>(
    py: Python<'py>,
    instances: PyReadonlyArray2<'py, u32>,
    classes: Option<ClassTable>,
) -> PyResult<(Bound<'py, PyAny>, Bound<'py, PyAny>, Bound<'py, PyAny>)> {
    let inst = self::instances(&instances, "instances")?;
    let t = py.detach(|| TargetMaps::generate(&inst, classes.as_ref())).map_err(err)?;
    let (h, w) = (inst.height, inst.width);
    Ok((
        PyArray1::from_slice(py, &t.np.data).reshape([h, w])?.into_any(),
        PyArray1::from_slice(py, &t.hv.data).reshape([h, w, 2])?.into_any(),
        PyArray1::from_slice(py, &t.tp.data).reshape([h, w])?.into_any(),
    ))
}

type Grads<'py> = (Bound<'py, PyAny>, Bound<'py, PyAny>, Bound<'py, PyAny>);

struct LossInputs {
    x: PredictionMaps<f32>,
    teacher: PredictionMaps<f32>,
    gt: TargetMaps,
    cfg: LossConfig,
}

#[allow(clippy::too_many_arguments)]
fn loss_inputs(
    student: (PyReadonlyArray3<'_, f32>, PyReadonlyArray3<'_, f32>, PyReadonlyArray3<'_, f32>),
    teacher: (PyReadonlyArray3<'_, f32>, PyReadonlyArray3<'_, f32>, PyReadonlyArray3<'_, f32>),
    gt_instances: PyReadonlyArray2<'_, u32>,
    gt_classes: Option<ClassTable>,
    alpha: f64,
    temperature: f64,
    tp_weights: Option<Vec<f32>>,
) -> PyResult<LossInputs> {
    let maps = |(np, hv, tp): (PyReadonlyArray3<'_, f32>, PyReadonlyArray3<'_, f32>, PyReadonlyArray3<'_, f32>)| {
        PredictionMaps::new(channels(&np, "np_logits")?, channels(&hv, "hv")?, channels(&tp, "tp_logits")?)
            .map_err(err)
    };
    let x = maps(student)?;
    let teacher = maps(teacher)?;
    let gt = TargetMaps::generate(&instances(&gt_instances, "gt_instances")?, gt_classes.as_ref()).map_err(err)?;
    let mut cfg = LossConfig::new(x.num_types());
    cfg.alpha = alpha;
    cfg.temperature = temperature;
    if let Some(w) = tp_weights {
        cfg.tp_weights = ClassWeights::new(w).map_err(err)?;
    }
    Ok(LossInputs { x, teacher, gt, cfg })
}

fn breakdown_dict<'py>(py: Python<'py>, b: &LossBreakdown) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    let names = ["hv_mse", "hv_msge", "np_ce", "np_dice_or_kld", "tp_ce", "tp_dice_or_kld"];
    for (side, terms) in [("student", &b.student), ("distill", &b.distill)] {
        let t: BTreeMap<&str, f64> = names.iter().copied().zip(terms.as_array()).collect();
        d.set_item(side, t)?;
    }
    d.set_item("student_total", b.student_total)?;
    d.set_item("distill_total", b.distill_total)?;
    d.set_item("combined", b.combined)?;
    Ok(d)
}

/// Distillation loss of student logits against ground truth and a teacher.
#[pyfunction]
#[pyo3(signature = (np_logits, hv, tp_logits, teacher_np_logits, teacher_hv, teacher_tp_logits,
                    gt_instances, gt_classes=None, alpha=0.5, temperature=1.0, tp_weights=None))]
#[allow(clippy::too_many_arguments)]
fn loss<'py>(
    py: Python<'py>,
    np_logits: PyReadonlyArray3<'py, f32>,
    hv: PyReadonlyArray3<'py, f32>,
    tp_logits: PyReadonlyArray3<'py, f32>,
    teacher_np_logits: PyReadonlyArray3<'py, f32>,
    teacher_hv: PyReadonlyArray3<'py, f32>,
    teacher_tp_logits: PyReadonlyArray3<'py, f32>,
    gt_instances: PyReadonlyArray2<'py, u32>,
    gt_classes: Option<ClassTable>,
    alpha: f64,
    temperature: f64,
    tp_weights: Option<Vec<f32>>,
) -> PyResult<Bound<'py, PyDict>> {
    let i = loss_inputs(
        (np_logits, hv, tp_logits),
        (teacher_np_logits, teacher_hv, teacher_tp_logits),
        gt_instances,
        gt_classes,
        alpha,
        temperature,
        tp_weights,
    )?;
    let b = py.detach(|| combined_loss(&i.x, &i.gt, &i.teacher, &i.cfg)).map_err(err)?;
    breakdown_dict(py, &b)
}

/// Like `loss`, plus `float64` gradients for the three student maps.
#[pyfunction]
#[pyo3(signature = (np_logits, hv, tp_logits, teacher_np_logits, teacher_hv, teacher_tp_logits,
                    gt_instances, gt_classes=None, alpha=0.5, temperature=1.0, tp_weights=None))]
#[allow(clippy::too_many_arguments)]
fn loss_grad<'py>(
    py: Python<'py>,
    np_logits: PyReadonlyArray3<'py, f32>,
    hv: PyReadonlyArray3<'py, f32>,
    tp_logits: PyReadonlyArray3<'py, f32>,
    teacher_np_logits: PyReadonlyArray3<'py, f32>,
    teacher_hv: PyReadonlyArray3<'py, f32>,
    teacher_tp_logits: PyReadonlyArray3<'py, f32>,
    gt_instances: PyReadonlyArray2<'py, u32>,
    gt_classes: Option<ClassTable>,
    alpha: f64,
    temperature: f64,
    tp_weights: Option<Vec<f32>>,
) -> PyResult<(Bound<'py, PyDict>, Grads<'py>)> {
    let i = loss_inputs(
        (np_logits, hv, tp_logits),
        (teacher_np_logits, teacher_hv, teacher_tp_logits),
        gt_instances,
        gt_classes,
        alpha,
        temperature,
        tp_weights,
    )?;
    let (b, g) = py
        .detach(|| combined_loss_grad(&i.x, &i.gt, &i.teacher, &i.cfg))
        .map_err(err)?;
    let arr = |m: &ChannelMap<f64>| -> PyResult<Bound<'py, PyAny>> {
        Ok(PyArray1::from_slice(py, &m.data)
            .reshape([m.height, m.width, m.channels])?
            .into_any())
    };
    Ok((breakdown_dict(py, &b)?, (arr(&g.d_np_logits)?, arr(&g.d_hv)?, arr(&g.d_tp_logits)?)))
}

/// Binary panoptic quality: `{"dq", "sq", "pq", "tp", "fp", "fn"}`.
#[pyfunction]
fn panoptic_quality<'py>(
    py: Python<'py>,
    gt: PyReadonlyArray2<'py, u32>,
    pred: PyReadonlyArray2<'py, u32>,
) -> PyResult<Bound<'py, PyDict>> {
    let (g, p) = (instances(&gt, "gt")?, instances(&pred, "pred")?);
    let s = py.detach(|| core_pq(&g, &p)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("dq", s.dq)?;
    d.set_item("sq", s.sq)?;
    d.set_item("pq", s.pq)?;
    d.set_item("tp", s.true_pos)?;
    d.set_item("fp", s.false_pos)?;
    d.set_item("fn", s.false_neg)?;
    Ok(d)
}

/// Mean PQ over `class_ids` and the per-class values (`None` when a class
/// is absent from both sides).
#[pyfunction]
fn multiclass_pq(
    py: Python<'_>,
    gt: PyReadonlyArray2<'_, u32>,
    gt_classes: ClassTable,
    pred: PyReadonlyArray2<'_, u32>,
    pred_classes: ClassTable,
    class_ids: Vec<u32>,
) -> PyResult<(f64, BTreeMap<u32, Option<f64>>)> {
    let (g, p) = (instances(&gt, "gt")?, instances(&pred, "pred")?);
    let s = py
        .detach(|| core_multiclass_pq(&g, &gt_classes, &p, &pred_classes, &class_ids))
        .map_err(err)?;
    let per = s.per_class.iter().map(|(&c, v)| (c, v.as_ref().map(|x| x.pq))).collect();
    Ok((s.mpq, per))
}

/// Centroid detection F1 with a pairing radius in pixels.
#[pyfunction]
#[pyo3(signature = (gt_centroids, pred_centroids, radius=12.0))]
fn detection_f1(gt_centroids: Vec<[f64; 2]>, pred_centroids: Vec<[f64; 2]>, radius: f64) -> PyResult<f64> {
    core_detection_f1(&gt_centroids, &pred_centroids, radius)
        .map(|(f, _)| f)
        .map_err(err)
}

#[pymodule]
fn hoverpost(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(instance_segment, m)?)?;
    m.add_function(wrap_pyfunction!(classify_instances, m)?)?;
    m.add_function(wrap_pyfunction!(postprocess_tile, m)?)?;
    m.add_function(wrap_pyfunction!(gen_targets, m)?)?;
    m.add_function(wrap_pyfunction!(loss, m)?)?;
    m.add_function(wrap_pyfunction!(loss_grad, m)?)?;
    m.add_function(wrap_pyfunction!(panoptic_quality, m)?)?;
    m.add_function(wrap_pyfunction!(multiclass_pq, m)?)?;
    m.add_function(wrap_pyfunction!(detection_f1, m)?)?;
    Ok(())
}
