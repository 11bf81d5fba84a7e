//! Label formats, dataset layout, splitting, image encoding and run manifests.
//!
//! Layout of a generated dataset:
//!
//! ```text
//! images/{train,val,test}/frame_000042.png
//! labels/{train,val,test}/frame_000042.txt
//! annotations.coco.json
//! dataset.yaml
//! manifest.json
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::annotator::{Annotation, AnnotationMode};
use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::rasterizer::RenderTarget;
use crate::rng::stream;
use crate::scene::SceneSpec;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const COCO_FILE: &str = "annotations.coco.json";
pub const DATASET_YAML: &str = "dataset.yaml";
pub const DEFAULT_GAMMA: f64 = 2.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn frame_stem(frame_index: u64) -> String {
    format!("frame_{frame_index:06}")
}

pub fn image_rel_path(split: Split, frame_index: u64) -> String {
    format!("images/{split}/{}.png", frame_stem(frame_index))
}

pub fn label_rel_path(split: Split, frame_index: u64) -> String {
    format!("labels/{split}/{}.txt", frame_stem(frame_index))
}

/// One line of a YOLO label file. Predictions carry a confidence; ground
/// truth reads back with confidence 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YoloLabel {
    pub class_id: u32,
    pub bbox: BBox,
    pub confidence: Option<f64>,
}

impl YoloLabel {
    pub fn confidence_or_one(&self) -> f64 {
        self.confidence.unwrap_or(1.0)
    }
}

impl From<&Annotation> for YoloLabel {
    fn from(a: &Annotation) -> Self {
        YoloLabel {
            class_id: a.class_id,
            bbox: a.bbox,
            confidence: None,
        }
    }
}

fn unit(v: f64) -> f64 {
    // `+ 0.0` turns a negative zero into a positive one
    v.clamp(0.0, 1.0) + 0.0
}

/// `class cx cy w h [conf]`, normalised, 6 decimals, one line per label.
pub fn write_yolo_labels(labels: &[YoloLabel], width: u32, height: u32) -> String {
    let (w, h) = (width as f64, height as f64);
    let mut out = String::new();
    for l in labels {
        let (cx, cy) = l.bbox.center();
        write!(
            out,
            "{} {:.6} {:.6} {:.6} {:.6}",
            l.class_id,
            unit(cx / w),
            unit(cy / h),
            unit(l.bbox.width() / w),
            unit(l.bbox.height() / h)
        )
        .expect("writing to a String cannot fail");
        if let Some(c) = l.confidence {
            write!(out, " {:.6}", unit(c)).expect("writing to a String cannot fail");
        }
        out.push('\n');
    }
    out
}

pub fn write_annotations(annotations: &[Annotation], width: u32, height: u32) -> String {
    let labels: Vec<YoloLabel> = annotations.iter().map(YoloLabel::from).collect();
    write_yolo_labels(&labels, width, height)
}

/// Parse a YOLO label file into pixel boxes. Blank lines are skipped.
pub fn read_yolo_labels(text: &str, width: u32, height: u32) -> Result<Vec<YoloLabel>> {
    let (w, h) = (width as f64, height as f64);
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 5 && fields.len() != 6 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 5 or 6 fields, found {}", fields.len()),
            });
        }
        let class_id: u32 = fields[0].parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("class id '{}' is not a non-negative integer", fields[0]),
        })?;
        let mut vals = [0.0; 5];
        for (k, f) in fields[1..].iter().enumerate() {
            let v: f64 = f.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("field {} ('{f}') is not a number", k + 2),
            })?;
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("field {} value {v} is outside [0, 1]", k + 2),
                });
            }
            vals[k] = v;
        }
        let [cx, cy, bw, bh, conf] = vals;
        out.push(YoloLabel {
            class_id,
            bbox: BBox::new((cx - bw / 2.0) * w, (cy - bh / 2.0) * h, (cx + bw / 2.0) * w, (cy + bh / 2.0) * h),
            confidence: (fields.len() == 6).then_some(conf),
        });
    }
    Ok(out)
}

/// One generated image with its labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub image_path: String,
    pub width: u32,
    pub height: u32,
    pub annotations: Vec<Annotation>,
    pub split: Split,
    pub master_seed: u64,
    pub frame_index: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u32,
    /// `[x_min, y_min, width, height]` in pixels.
    pub bbox: [f64; 4],
    pub area: f64,
    pub iscrowd: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u32,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoDocument {
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
}

/// Build a COCO document. Image and annotation ids count from 1 in record
/// order; category ids equal class ids.
pub fn coco_document(records: &[DatasetRecord], classes: &[String]) -> CocoDocument {
    let mut doc = CocoDocument {
        images: Vec::with_capacity(records.len()),
        annotations: Vec::new(),
        categories: classes
            .iter()
            .enumerate()
            .map(|(i, name)| CocoCategory {
                id: i as u32,
                name: name.clone(),
            })
            .collect(),
    };
    for (i, r) in records.iter().enumerate() {
        let image_id = i as u64 + 1;
        doc.images.push(CocoImage {
            id: image_id,
            file_name: r.image_path.clone(),
            width: r.width,
            height: r.height,
        });
        for a in &r.annotations {
            let b = a.bbox;
            doc.annotations.push(CocoAnnotation {
                id: doc.annotations.len() as u64 + 1,
                image_id,
                category_id: a.class_id,
                bbox: [b.x_min, b.y_min, b.width(), b.height()],
                area: b.area(),
                iscrowd: 0,
            });
        }
    }
    doc
}

pub fn write_coco(records: &[DatasetRecord], classes: &[String]) -> String {
    let mut s = serde_json::to_string_pretty(&coco_document(records, classes)).expect("COCO document serialises");
    s.push('\n');
    s
}

pub fn read_coco(text: &str) -> Result<CocoDocument> {
    serde_json::from_str(text).map_err(|e| Error::Format(format!("COCO document: {e}")))
}

impl CocoDocument {
    /// Labels of one image, as pixel boxes.
    pub fn labels_for(&self, image_id: u64) -> Vec<YoloLabel> {
        self.annotations
            .iter()
            .filter(|a| a.image_id == image_id)
            .map(|a| YoloLabel {
                class_id: a.category_id,
                bbox: BBox::new(a.bbox[0], a.bbox[1], a.bbox[0] + a.bbox[2], a.bbox[1] + a.bbox[3]),
                confidence: None,
            })
            .collect()
    }
}

pub fn check_split_ratios(ratios: &[f64; 3]) -> Result<()> {
    if ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(Error::Config(format!("split ratios must be non-negative, got {ratios:?}")));
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios must sum to 1, got {ratios:?} (sum {sum})")));
    }
    Ok(())
}

/// Per-split counts for `n` items by largest-remainder rounding. Ties in the
/// remainder go to the earlier split.
pub fn split_counts(n: usize, ratios: &[f64; 3]) -> Result<[usize; 3]> {
    check_split_ratios(ratios)?;
    let exact = ratios.map(|r| r * n as f64);
    let mut counts = exact.map(|e| e.floor() as usize);
    let mut left = n.saturating_sub(counts.iter().sum());
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    for &k in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[k] += 1;
        left -= 1;
    }
    Ok(counts)
}

/// Seeded split assignment for items `0..n`.
pub fn assign_splits(n: usize, ratios: &[f64; 3], seed: u64) -> Result<Vec<Split>> {
    let counts = split_counts(n, ratios)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed));
    let mut out = vec![Split::Train; n];
    let mut pos = 0;
    for (split, count) in Split::ALL.into_iter().zip(counts) {
        for &i in &order[pos..pos + count] {
            out[i] = split;
        }
        pos += count;
    }
    Ok(out)
}

pub fn split_dataset(records: &mut [DatasetRecord], ratios: &[f64; 3], seed: u64) -> Result<()> {
    let splits = assign_splits(records.len(), ratios, seed)?;
    for (r, s) in records.iter_mut().zip(splits) {
        r.split = s;
    }
    Ok(())
}

/// Linear `[0, 1]` to 8-bit with a power-law transfer curve.
pub fn linear_to_u8(v: f64, gamma: f64) -> u8 {
    (255.0 * v.clamp(0.0, 1.0).powf(1.0 / gamma)).round() as u8
}

pub fn to_rgb8(target: &RenderTarget, gamma: f64) -> Vec<u8> {
    target
        .color
        .iter()
        .flat_map(|c| c.map(|v| linear_to_u8(v, gamma)))
        .collect()
}

pub fn encode_png(width: u32, height: u32, rgb: &[u8]) -> Result<Vec<u8>> {
    use image::ImageEncoder;
    let mut bytes = Vec::new();
    image::codecs::png::PngEncoder::new(&mut bytes).write_image(rgb, width, height, image::ExtendedColorType::Rgb8)?;
    Ok(bytes)
}

/// 8-bit RGB PNG of a render.
pub fn encode_image(target: &RenderTarget, gamma: f64) -> Result<Vec<u8>> {
    encode_png(target.width as u32, target.height as u32, &to_rgb8(target, gamma))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCount {
    pub class_id: u32,
    pub name: String,
    pub annotations: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTiming {
    pub wall_seconds: f64,
    pub images_per_second: f64,
}

/// Everything needed to reproduce a run, plus what it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub complete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub master_seed: u64,
    pub frames: u64,
    pub mode: AnnotationMode,
    pub class_map: BTreeMap<u32, String>,
    pub class_counts: Vec<ClassCount>,
    pub split_counts: BTreeMap<Split, u64>,
    pub warnings: u64,
    pub threads: usize,
    pub timing: RunTiming,
    pub spec: SceneSpec,
}

impl RunManifest {
    pub fn new(spec: &SceneSpec, master_seed: u64, frames: u64, threads: usize) -> Self {
        RunManifest {
            tool: "splatgen".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            complete: false,
            error: None,
            master_seed,
            frames,
            mode: spec.annotation.mode,
            class_map: spec.classes.iter().enumerate().map(|(i, c)| (i as u32, c.clone())).collect(),
            class_counts: spec
                .classes
                .iter()
                .enumerate()
                .map(|(i, c)| ClassCount {
                    class_id: i as u32,
                    name: c.clone(),
                    annotations: 0,
                })
                .collect(),
            split_counts: BTreeMap::new(),
            warnings: 0,
            threads,
            timing: RunTiming::default(),
            spec: spec.clone(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serialises");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::file(&path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let manifest: RunManifest =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        manifest.spec.validate()?;
        Ok(manifest)
    }
}

/// Ultralytics-style dataset description.
pub fn dataset_yaml(classes: &[String]) -> String {
    let mut s = String::from("path: .\ntrain: images/train\nval: images/val\ntest: images/test\nnames:\n");
    for (i, c) in classes.iter().enumerate() {
        writeln!(s, "  {i}: {c}").expect("writing to a String cannot fail");
    }
    s
}
