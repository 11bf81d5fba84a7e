//! Detection metrics: greedy matching, PR curves, AP, mAP and F1.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::dataset::read_yolo_labels;
use crate::error::{Error, Result};

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

pub const DEFAULT_CONF_THRESH: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: usize,
    pub class_id: u32,
    pub bbox: BBox,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub image_id: usize,
    pub class_id: u32,
    pub bbox: BBox,
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    a.iou(b)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Matches {
    /// Detection indices in descending confidence (stable).
    pub order: Vec<usize>,
    /// TP flag per entry of `order`.
    pub tp: Vec<bool>,
    pub num_gt: usize,
    pub false_negatives: usize,
}

impl Matches {
    pub fn true_positives(&self) -> usize {
        self.tp.iter().filter(|t| **t).count()
    }

    pub fn false_positives(&self) -> usize {
        self.tp.len() - self.true_positives()
    }
}

/// Indices of `dets` by descending confidence, ties in input order.
pub fn confidence_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence));
    order
}

/// Greedy one-to-one matching. Each detection, in descending confidence,
/// takes the unmatched ground truth of its image and class with the highest
/// IoU (lowest index on ties) if that IoU reaches `iou_threshold`.
pub fn match_detections(dets: &[Detection], gts: &[GroundTruth], iou_threshold: f64) -> Matches {
    let mut pools: HashMap<(usize, u32), Vec<usize>> = HashMap::new();
    for (i, g) in gts.iter().enumerate() {
        pools.entry((g.image_id, g.class_id)).or_default().push(i);
    }
    let mut used = vec![false; gts.len()];
    let order = confidence_order(dets);
    let tp = order
        .iter()
        .map(|&d| {
            let det = &dets[d];
            let Some(pool) = pools.get(&(det.image_id, det.class_id)) else {
                return false;
            };
            let mut best: Option<(usize, f64)> = None;
            for &g in pool {
                if used[g] {
                    continue;
                }
                let v = det.bbox.iou(&gts[g].bbox);
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((g, v));
                }
            }
            match best {
                Some((g, v)) if v >= iou_threshold => {
                    used[g] = true;
                    true
                }
                _ => false,
            }
        })
        .collect::<Vec<bool>>();
    let matched = tp.iter().filter(|t| **t).count();
    Matches {
        order,
        tp,
        num_gt: gts.len(),
        false_negatives: gts.len() - matched,
    }
}

/// `(recall, precision)` after each prefix of the confidence-sorted flags.
pub fn pr_curve(flags: &[bool], total_gt: usize) -> Vec<(f64, f64)> {
    let mut tp = 0usize;
    flags
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            tp += f as usize;
            let recall = if total_gt == 0 { 0.0 } else { tp as f64 / total_gt as f64 };
            (recall, tp as f64 / (i + 1) as f64)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApMode {
    /// Mean interpolated precision at recall 0.00, 0.01, ..., 1.00.
    #[default]
    Coco101,
    /// Exact area under the interpolated precision envelope.
    AllPoints,
}

impl std::str::FromStr for ApMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coco101" | "101" => Ok(ApMode::Coco101),
            "all_points" | "all-points" => Ok(ApMode::AllPoints),
            other => Err(Error::Config(format!("unknown AP mode '{other}' (expected coco101 or all_points)"))),
        }
    }
}

/// Precision made non-increasing from the right.
fn envelope(curve: &[(f64, f64)]) -> Vec<f64> {
    let mut p: Vec<f64> = curve.iter().map(|c| c.1).collect();
    for i in (0..p.len().saturating_sub(1)).rev() {
        p[i] = p[i].max(p[i + 1]);
    }
    p
}

pub fn average_precision(curve: &[(f64, f64)], mode: ApMode) -> f64 {
    if curve.is_empty() {
        return 0.0;
    }
    let env = envelope(curve);
    match mode {
        ApMode::Coco101 => {
            let mut sum = 0.0;
            let mut j = 0;
            for i in 0..=100 {
                let r = i as f64 / 100.0;
                // recall is non-decreasing along the curve
                while j < curve.len() && curve[j].0 < r {
                    j += 1;
                }
                if j < curve.len() {
                    sum += env[j];
                }
            }
            sum / 101.0
        }
        ApMode::AllPoints => {
            let mut area = 0.0;
            let mut prev = 0.0;
            for (k, &(r, _)) in curve.iter().enumerate() {
                area += (r - prev) * env[k];
                prev = r;
            }
            area
        }
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAp {
    pub class_id: u32,
    pub num_gt: usize,
    /// AP per threshold, aligned with `MapTable::thresholds`.
    pub ap: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapTable {
    pub thresholds: Vec<f64>,
    /// Classes with ground truth, by class id.
    pub classes: Vec<ClassAp>,
    /// Classes that only appear in detections.
    pub absent: Vec<u32>,
    /// Mean AP over classes at each threshold.
    pub map_per_threshold: Vec<f64>,
    /// Mean of `map_per_threshold`.
    pub map: f64,
}

fn by_class<T: Copy>(items: &[T], class: impl Fn(&T) -> u32) -> BTreeMap<u32, Vec<T>> {
    let mut out: BTreeMap<u32, Vec<T>> = BTreeMap::new();
    for it in items {
        out.entry(class(it)).or_default().push(*it);
    }
    out
}

/// AP per class and threshold, and the means over classes present in the
/// ground truth.
pub fn map_at(dets: &[Detection], gts: &[GroundTruth], thresholds: &[f64], mode: ApMode) -> Result<MapTable> {
    if thresholds.is_empty() || thresholds.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
        return Err(Error::Evaluation(format!("IoU thresholds must be non-empty and in (0, 1], got {thresholds:?}")));
    }
    if gts.is_empty() {
        return Err(Error::Evaluation("no ground-truth annotations to evaluate against".into()));
    }
    let gt_by_class = by_class(gts, |g| g.class_id);
    let det_by_class = by_class(dets, |d| d.class_id);
    let classes: Vec<ClassAp> = gt_by_class
        .iter()
        .map(|(&class_id, g)| {
            let d = det_by_class.get(&class_id).map(Vec::as_slice).unwrap_or(&[]);
            let ap = thresholds
                .iter()
                .map(|&t| {
                    let m = match_detections(d, g, t);
                    average_precision(&pr_curve(&m.tp, g.len()), mode)
                })
                .collect();
            ClassAp {
                class_id,
                num_gt: g.len(),
                ap,
            }
        })
        .collect();
    let absent = det_by_class.keys().filter(|c| !gt_by_class.contains_key(c)).copied().collect();
    let n = classes.len() as f64;
    let map_per_threshold: Vec<f64> = (0..thresholds.len())
        .map(|k| classes.iter().map(|c| c.ap[k]).sum::<f64>() / n)
        .collect();
    let map = map_per_threshold.iter().sum::<f64>() / map_per_threshold.len() as f64;
    Ok(MapTable {
        thresholds: thresholds.to_vec(),
        classes,
        absent,
        map_per_threshold,
        map,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class_id: u32,
    pub name: String,
    pub images: usize,
    pub instances: usize,
    pub ap50: f64,
    pub ap50_95: f64,
    /// `(threshold, AP)` for all ten thresholds.
    pub ap: Vec<(f64, f64)>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub images: usize,
    pub instances: usize,
    pub map50: f64,
    pub map50_95: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub conf_thresh: f64,
    pub ap_mode: ApMode,
    pub classes: Vec<ClassReport>,
    /// Classes predicted but absent from the ground truth.
    pub absent_classes: Vec<u32>,
    pub warnings: Vec<String>,
}

/// Full report over in-memory detections. Precision, recall and F1 are taken
/// at IoU 0.5 using detections with confidence `>= conf_thresh` and
/// macro-averaged over classes.
pub fn evaluate_detections(
    dets: &[Detection],
    gts: &[GroundTruth],
    class_names: &[String],
    conf_thresh: f64,
    mode: ApMode,
) -> Result<MetricsReport> {
    let thresholds = coco_thresholds();
    let table = map_at(dets, gts, &thresholds, mode)?;
    let det_by_class = by_class(dets, |d| d.class_id);
    let gt_by_class = by_class(gts, |g| g.class_id);
    let name = |c: u32| class_names.get(c as usize).cloned().unwrap_or_else(|| format!("class{c}"));
    let classes: Vec<ClassReport> = table
        .classes
        .iter()
        .map(|c| {
            let g = &gt_by_class[&c.class_id];
            let kept: Vec<Detection> = det_by_class
                .get(&c.class_id)
                .map(|d| d.iter().filter(|d| d.confidence >= conf_thresh).copied().collect())
                .unwrap_or_default();
            let m = match_detections(&kept, g, 0.5);
            let (tp, fp) = (m.true_positives(), m.false_positives());
            let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
            let recall = tp as f64 / g.len() as f64;
            ClassReport {
                class_id: c.class_id,
                name: name(c.class_id),
                images: g.iter().map(|g| g.image_id).collect::<BTreeSet<_>>().len(),
                instances: g.len(),
                ap50: c.ap[0],
                ap50_95: c.ap.iter().sum::<f64>() / c.ap.len() as f64,
                ap: thresholds.iter().copied().zip(c.ap.iter().copied()).collect(),
                precision,
                recall,
                f1: f1_score(precision, recall),
                tp,
                fp,
                fn_: m.false_negatives,
            }
        })
        .collect();
    let n = classes.len() as f64;
    let mean = |f: fn(&ClassReport) -> f64| classes.iter().map(f).sum::<f64>() / n;
    let images = gts
        .iter()
        .map(|g| g.image_id)
        .chain(dets.iter().map(|d| d.image_id))
        .collect::<BTreeSet<_>>()
        .len();
    Ok(MetricsReport {
        images,
        instances: gts.len(),
        map50: table.map_per_threshold[0],
        map50_95: table.map,
        precision: mean(|c| c.precision),
        recall: mean(|c| c.recall),
        f1: mean(|c| c.f1),
        conf_thresh,
        ap_mode: mode,
        absent_classes: table.absent,
        classes,
        warnings: Vec::new(),
    })
}

fn label_stems(dir: &Path) -> Result<BTreeMap<String, std::path::PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::Evaluation(format!("{}: {e}", dir.display())))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::Evaluation(format!("{}: {e}", dir.display())))?.path();
        if path.extension().is_some_and(|e| e == "txt") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string(), path);
            }
        }
    }
    Ok(out)
}

fn read_labels(path: &Path) -> Result<Vec<crate::dataset::YoloLabel>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Evaluation(format!("{}: {e}", path.display())))?;
    // Normalised units: IoU is unchanged by scaling each axis, so the image
    // size is not needed.
    read_yolo_labels(&text, 1, 1).map_err(|e| Error::Evaluation(format!("{}: {e}", path.display())))
}

/// Evaluate YOLO prediction files (6 columns) against ground-truth files (5
/// columns), paired by file stem. Unpaired files are reported as warnings: a
/// ground-truth file without predictions counts as all misses, a prediction
/// file without ground truth as all false positives.
pub fn evaluate(
    pred_dir: &Path,
    gt_dir: &Path,
    class_names: &[String],
    conf_thresh: f64,
    mode: ApMode,
) -> Result<MetricsReport> {
    let preds = label_stems(pred_dir)?;
    let gts = label_stems(gt_dir)?;
    let mut warnings = Vec::new();
    let stems: BTreeSet<&String> = preds.keys().chain(gts.keys()).collect();
    let mut dets = Vec::new();
    let mut truth = Vec::new();
    for (image_id, stem) in stems.into_iter().enumerate() {
        match gts.get(stem) {
            Some(p) => truth.extend(read_labels(p)?.into_iter().map(|l| GroundTruth {
                image_id,
                class_id: l.class_id,
                bbox: l.bbox,
            })),
            None => warnings.push(format!("{stem}: prediction file has no ground-truth counterpart")),
        }
        match preds.get(stem) {
            Some(p) => dets.extend(read_labels(p)?.into_iter().map(|l| Detection {
                image_id,
                class_id: l.class_id,
                bbox: l.bbox,
                confidence: l.confidence_or_one(),
            })),
            None => warnings.push(format!("{stem}: ground-truth file has no prediction counterpart")),
        }
    }
    let mut report = evaluate_detections(&dets, &truth, class_names, conf_thresh, mode)?;
    report.warnings = warnings;
    Ok(report)
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    /// Fixed-width table: mAP50, mAP50-95, Precision, Recall, F1-score.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let row = |s: &mut String, name: &str, images: usize, inst: usize, v: [f64; 5]| {
            writeln!(
                s,
                "{name:<16} {images:>7} {inst:>9} {:>8.3} {:>9.3} {:>9.3} {:>7.3} {:>8.3}",
                v[0], v[1], v[2], v[3], v[4]
            )
            .expect("writing to a String cannot fail");
        };
        writeln!(
            s,
            "{:<16} {:>7} {:>9} {:>8} {:>9} {:>9} {:>7} {:>8}",
            "Class", "Images", "Instances", "mAP50", "mAP50-95", "Precision", "Recall", "F1-score"
        )
        .expect("writing to a String cannot fail");
        row(
            &mut s,
            "all",
            self.images,
            self.instances,
            [self.map50, self.map50_95, self.precision, self.recall, self.f1],
        );
        for c in &self.classes {
            row(
                &mut s,
                &c.name,
                c.images,
                c.instances,
                [c.ap50, c.ap50_95, c.precision, c.recall, c.f1],
            );
        }
        s
    }
}
