//! Acceptance checks, one line per criterion. Runs without the libtest
//! harness so the summary is printed even when everything passes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use splatgen_core::annotator::{bbox_from_corners, AnnotationMode};
use splatgen_core::camera::Splat2D;
use splatgen_core::dataset::{read_yolo_labels, write_yolo_labels, RunManifest, YoloLabel};
use splatgen_core::metrics::{coco_thresholds, f1_score, map_at, ApMode, Detection, GroundTruth};
use splatgen_core::pipeline::render_frame;
use splatgen_core::rasterizer::{rasterize, Backdrop, RasterConfig};
use splatgen_core::scene::{
    load_scene_spec, resolve_instances, sample_frame, AssetEntry, AssetLibrary, CameraRig, CountRange, Placement,
    Range, SceneSpec,
};
use splatgen_core::BBox;

// Tolerances, one per check.
const F1_TOL: f64 = 0.0005;
const MAP_TOL: f64 = 1e-9;
const RASTER_TOL: f64 = 1e-5;
const ALPHA_T_TOL: f64 = 1e-6;
const WEIGHT_SUM_TOL: f64 = 1e-4;
const CORNER_SLACK_PX: f64 = 2.0;
const YOLO_DRIFT_PX: f64 = 0.5;
const KS_MAX: f64 = 0.02;

struct Outcome {
    pass: Option<bool>,
    detail: String,
}

fn pass_if(ok: bool, detail: String) -> Outcome {
    Outcome { pass: Some(ok), detail }
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn robocup() -> SceneSpec {
    load_scene_spec(&repo_root().join("configs/robocup.toml")).unwrap()
}

// ---------------------------------------------------------------- criterion 1

const F1_REFERENCE: [(f64, f64, f64); 8] = [
    (0.938, 0.944, 0.941),
    (0.957, 0.968, 0.962),
    (0.978, 0.992, 0.985),
    (0.780, 0.789, 0.784),
    (0.927, 0.836, 0.879),
    (0.955, 0.918, 0.936),
    (0.969, 0.986, 0.977),
    (0.941, 0.844, 0.890),
];

fn f1_reference() -> Outcome {
    let worst = F1_REFERENCE
        .iter()
        .map(|&(p, r, f)| (f1_score(p, r) - f).abs())
        .fold(0.0, f64::max);
    pass_if(
        worst <= F1_TOL,
        format!("{} (P, R) pairs, max |F1 - reported| = {worst:.6} (tol {F1_TOL})", F1_REFERENCE.len()),
    )
}

// ---------------------------------------------------------------- criterion 2

fn oracle_iou(a: &BBox, b: &BBox) -> f64 {
    let w = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let h = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = w * h;
    let union = (a.x_max - a.x_min) * (a.y_max - a.y_min) + (b.x_max - b.x_min) * (b.y_max - b.y_min) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// COCO-style AP of one class, computed the slow way: literal greedy replay,
/// precision/recall recomputed for every prefix, and the interpolated
/// precision at each recall level taken as a max over all qualifying prefixes.
fn oracle_ap(dets: &[Detection], gts: &[GroundTruth], class: u32, t: f64) -> Option<f64> {
    let g: Vec<&GroundTruth> = gts.iter().filter(|x| x.class_id == class).collect();
    if g.is_empty() {
        return None;
    }
    let d: Vec<&Detection> = dets.iter().filter(|x| x.class_id == class).collect();
    let mut done = vec![false; d.len()];
    let mut used = vec![false; g.len()];
    let mut flags = Vec::new();
    for _ in 0..d.len() {
        let mut pick: Option<usize> = None;
        for i in 0..d.len() {
            if !done[i] && pick.is_none_or(|p| d[i].confidence > d[p].confidence) {
                pick = Some(i);
            }
        }
        let i = pick.unwrap();
        done[i] = true;
        let mut best: Option<(usize, f64)> = None;
        for (k, gt) in g.iter().enumerate() {
            if used[k] || gt.image_id != d[i].image_id {
                continue;
            }
            let v = oracle_iou(&d[i].bbox, &gt.bbox);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((k, v));
            }
        }
        match best {
            Some((k, v)) if v >= t => {
                used[k] = true;
                flags.push(true);
            }
            _ => flags.push(false),
        }
    }
    let points: Vec<(f64, f64)> = (1..=flags.len())
        .map(|n| {
            let tp = flags[..n].iter().filter(|f| **f).count() as f64;
            (tp / g.len() as f64, tp / n as f64)
        })
        .collect();
    let mut sum = 0.0;
    for i in 0..=100 {
        let level = i as f64 / 100.0;
        let best = points
            .iter()
            .filter(|(r, _)| *r >= level)
            .map(|(_, p)| *p)
            .fold(0.0, f64::max);
        sum += best;
    }
    Some(sum / 101.0)
}

fn oracle_map(dets: &[Detection], gts: &[GroundTruth], thresholds: &[f64]) -> f64 {
    let per_t: Vec<f64> = thresholds
        .iter()
        .map(|&t| {
            let aps: Vec<f64> = (0..3).filter_map(|c| oracle_ap(dets, gts, c, t)).collect();
            aps.iter().sum::<f64>() / aps.len() as f64
        })
        .collect();
    per_t.iter().sum::<f64>() / per_t.len() as f64
}

fn random_eval_instance(rng: &mut ChaCha8Rng) -> (Vec<Detection>, Vec<GroundTruth>) {
    let images = rng.random_range(1..=5);
    let mut gts = Vec::new();
    let mut dets = Vec::new();
    for image_id in 0..images {
        for _ in 0..rng.random_range(0..=10) {
            let (x, y) = (rng.random_range(0.0..600.0), rng.random_range(0.0..400.0));
            let (w, h) = (rng.random_range(8.0..120.0), rng.random_range(8.0..120.0));
            gts.push(GroundTruth {
                image_id,
                class_id: rng.random_range(0..3),
                bbox: BBox::new(x, y, x + w, y + h),
            });
        }
        let mine: Vec<GroundTruth> = gts.iter().filter(|g| g.image_id == image_id).copied().collect();
        for _ in 0..rng.random_range(0..=10) {
            let (class_id, bbox) = if !mine.is_empty() && rng.random_bool(0.75) {
                let g = mine[rng.random_range(0..mine.len())];
                let s = rng.random_range(0.0..0.4) * g.bbox.width().min(g.bbox.height());
                let mut j = || rng.random_range(-s..=s);
                let b = BBox::new(g.bbox.x_min + j(), g.bbox.y_min + j(), g.bbox.x_max + j(), g.bbox.y_max + j());
                (g.class_id, b)
            } else {
                let (x, y) = (rng.random_range(0.0..600.0), rng.random_range(0.0..400.0));
                (rng.random_range(0..3), BBox::new(x, y, x + 40.0, y + 30.0))
            };
            let confidence = if rng.random_bool(0.3) {
                rng.random_range(1..=4) as f64 / 4.0
            } else {
                rng.random_range(0.0..1.0)
            };
            dets.push(Detection {
                image_id,
                class_id,
                bbox,
                confidence,
            });
        }
    }
    (dets, gts)
}

fn map_vs_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ten: Vec<f64> = (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect();
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    while cases < 200 {
        let (dets, gts) = random_eval_instance(&mut rng);
        if gts.is_empty() {
            continue;
        }
        cases += 1;
        let m50 = map_at(&dets, &gts, &[0.5], ApMode::Coco101).unwrap().map;
        let m5095 = map_at(&dets, &gts, &coco_thresholds(), ApMode::Coco101).unwrap().map;
        worst = worst
            .max((m50 - oracle_map(&dets, &gts, &[0.5])).abs())
            .max((m5095 - oracle_map(&dets, &gts, &ten)).abs());
    }
    pass_if(
        worst <= MAP_TOL,
        format!("{cases} random instances, max |mAP - brute force| = {worst:.2e} (tol {MAP_TOL:e})"),
    )
}

// ---------------------------------------------------------------- criterion 3

fn random_splats(rng: &mut ChaCha8Rng, n: usize, size: f64) -> Vec<Splat2D> {
    (0..n)
        .map(|_| {
            let (s1, s2) = if rng.random_bool(0.03) {
                (1e-7, 1e-7)
            } else {
                (rng.random_range(0.3..12.0), rng.random_range(0.3..12.0))
            };
            let th: f64 = rng.random_range(0.0..std::f64::consts::PI);
            let (c, s) = (th.cos(), th.sin());
            let r = Matrix2::new(c, -s, s, c);
            let cov = r * Matrix2::new(s1 * s1, 0.0, 0.0, s2 * s2) * r.transpose();
            let depth = if rng.random_bool(0.2) {
                rng.random_range(1..6) as f64 * 0.5
            } else {
                rng.random_range(-0.5..20.0)
            };
            Splat2D {
                mean2d: Vector2::new(rng.random_range(-10.0..size + 10.0), rng.random_range(-10.0..size + 10.0)),
                cov2d: cov,
                depth,
                color: [rng.random(), rng.random(), rng.random()],
                alpha: rng.random_range(0.0..1.0),
                instance_id: rng.random_range(1..5),
            }
        })
        .collect()
}

struct NaivePixel {
    color: [f64; 3],
    t: f64,
    weights: BTreeMap<u32, f64>,
}

/// Every splat evaluated at every pixel, straight from the compositing rule.
fn naive_render(splats: &[Splat2D], w: usize, h: usize, near: f64, far: f64, bg: [f64; 3]) -> Vec<NaivePixel> {
    let mut order: Vec<usize> = (0..splats.len())
        .filter(|&i| splats[i].depth > near && splats[i].depth < far)
        .collect();
    order.sort_by(|&a, &b| splats[a].depth.partial_cmp(&splats[b].depth).unwrap().then(a.cmp(&b)));
    let inv: Vec<Option<Matrix2<f64>>> = splats
        .iter()
        .map(|s| {
            let sym = (s.cov2d + s.cov2d.transpose()) * 0.5;
            if sym.determinant() < 1e-12 {
                None
            } else {
                sym.try_inverse()
            }
        })
        .collect();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let p = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
            let mut t = 1.0;
            let mut color = [0.0; 3];
            let mut weights = BTreeMap::new();
            for &i in &order {
                let Some(m) = inv[i] else { continue };
                let s = &splats[i];
                let d = p - s.mean2d;
                let q = (d.transpose() * m * d)[(0, 0)];
                if q > 9.0 {
                    continue;
                }
                let a = (s.alpha * (-0.5 * q).exp()).min(0.99);
                if a < 1.0 / 255.0 {
                    continue;
                }
                for ch in 0..3 {
                    color[ch] += t * a * s.color[ch];
                }
                *weights.entry(s.instance_id).or_insert(0.0) += t * a;
                t *= 1.0 - a;
                if t < 1e-4 {
                    break;
                }
            }
            for ch in 0..3 {
                color[ch] += t * bg[ch];
            }
            out.push(NaivePixel { color, t, weights });
        }
    }
    out
}

fn tiled_vs_naive() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = RasterConfig::default();
    let size = 64;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(1..=200);
        let splats = random_splats(&mut rng, n, size as f64);
        let bg = [rng.random(), rng.random(), rng.random()];
        let target = rasterize(&splats, size, size, 0.01, 100.0, &Backdrop::Solid(bg), 1.0, &cfg).unwrap();
        let naive = naive_render(&splats, size, size, 0.01, 100.0, bg);
        for (k, px) in naive.iter().enumerate() {
            let (x, y) = (k % size, k / size);
            for ch in 0..3 {
                worst = worst.max((target.color[k][ch] - px.color[ch].clamp(0.0, 1.0)).abs());
            }
            worst = worst.max((target.transmittance[k] - px.t).abs());
            for id in 1..5 {
                let want = px.weights.get(&id).copied().unwrap_or(0.0);
                worst = worst.max((target.instance_weight(id, x, y) - want).abs());
            }
        }
    }
    pass_if(
        worst <= RASTER_TOL,
        format!("50 scenes of up to 200 splats at 64x64, max |tiled - naive| = {worst:.2e} (tol {RASTER_TOL:e})"),
    )
}

// ---------------------------------------------------------------- criterion 4

fn conservation() -> Outcome {
    let mut spec = robocup();
    spec.image.width = 640;
    spec.image.height = 360;
    let library = AssetLibrary::load(&spec).unwrap();
    let (mut worst_t, mut worst_w) = (0.0f64, 0.0f64);
    for idx in 0..20 {
        let f = render_frame(&spec, &library, 11, idx).unwrap();
        let t = &f.target;
        let ids: Vec<u32> = t.instance_ids().collect();
        for y in 0..t.height {
            for x in 0..t.width {
                let k = y * t.width + x;
                worst_t = worst_t.max((t.alpha[k] + t.transmittance[k] - 1.0).abs());
                let sum: f64 = ids.iter().map(|&id| t.instance_weight(id, x, y)).sum();
                worst_w = worst_w.max((sum - t.alpha[k]).abs());
            }
        }
    }
    pass_if(
        worst_t <= ALPHA_T_TOL && worst_w <= WEIGHT_SUM_TOL,
        format!("20 frames, max |alpha + T - 1| = {worst_t:.2e} (tol {ALPHA_T_TOL:e}), max |sum w - alpha| = {worst_w:.2e} (tol {WEIGHT_SUM_TOL:e})"),
    )
}

// ---------------------------------------------------------------- criterion 5

fn single_asset_spec(asset: &str) -> SceneSpec {
    let mut spec = robocup();
    spec.image.width = 640;
    spec.image.height = 360;
    spec.annotation.mode = AnnotationMode::Mask;
    spec.assets.retain(|a| a.asset_id == asset);
    spec.assets[0].count = CountRange(1, 1);
    spec
}

fn mask_boxes() -> Outcome {
    let base = robocup();
    let library = AssetLibrary::load(&base).unwrap();
    let assets = ["ball", "robot_blue", "robot_red"];
    let (mut annotated, mut mismatches, mut leaks, mut wrongly_filtered) = (0, 0, 0, 0);
    let mut worst_leak: f64 = 0.0;
    for idx in 0..50u64 {
        let spec = single_asset_spec(assets[idx as usize % 3]);
        let f = render_frame(&spec, &library, 5, idx).unwrap();
        let inst = &f.frame.instances[0];
        let t = &f.target;
        let thr = spec.annotation.mask_threshold;
        let mut scan: Option<[usize; 4]> = None;
        let mut area = 0usize;
        for y in 0..t.height {
            for x in 0..t.width {
                if t.instance_weight(inst.instance_id, x, y) >= thr {
                    area += 1;
                    let b = scan.unwrap_or([x, y, x, y]);
                    scan = Some([b[0].min(x), b[1].min(y), b[2].max(x), b[3].max(y)]);
                }
            }
        }
        let Some(ann) = f.annotations.first() else {
            if area as f64 >= spec.annotation.min_pixel_area {
                wrongly_filtered += 1;
            }
            continue;
        };
        annotated += 1;
        let [x0, y0, x1, y1] = scan.unwrap();
        if ann.bbox != BBox::new(x0 as f64, y0 as f64, (x1 + 1) as f64, (y1 + 1) as f64) {
            mismatches += 1;
        }
        let resolved = resolve_instances(&f.frame, &library, spec.sh_rotation).unwrap();
        let r = &resolved.instances[0];
        let (corners, _) = bbox_from_corners(r.object_bounds.as_ref().unwrap(), &r.transform, &f.camera).unwrap();
        let leak = [
            corners.x_min - ann.bbox.x_min,
            corners.y_min - ann.bbox.y_min,
            ann.bbox.x_max - corners.x_max,
            ann.bbox.y_max - corners.y_max,
        ]
        .into_iter()
        .fold(0.0, f64::max);
        worst_leak = worst_leak.max(leak);
        if leak > CORNER_SLACK_PX {
            leaks += 1;
        }
    }

    // A ball hidden behind a robot close to the camera.
    let mut occluded_kept = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for idx in 0..10u64 {
        let mut spec = robocup();
        spec.image.width = 640;
        spec.image.height = 360;
        spec.camera_rig = CameraRig {
            x: Some(Range::fixed(-3.0)),
            y: Some(Range::fixed(0.0)),
            height: Range::fixed(0.5),
            yaw_deg: Range::fixed(rng.random_range(-2.0..2.0)),
            pitch_deg: Range::fixed(0.0),
            roll_deg: Range::fixed(0.0),
            clearance: 0.8,
        };
        let place = |x: f64, y: f64, yaw: f64, scale: f64| Placement {
            x: Some(Range::fixed(x)),
            y: Some(Range::fixed(y)),
            yaw_deg: Range::fixed(yaw),
            z_offset: 0.0,
            scale: Range::fixed(scale),
        };
        spec.assets = vec![
            AssetEntry {
                asset_id: "robot_blue".into(),
                count: CountRange(1, 1),
                placement: place(-1.5, 0.0, rng.random_range(-20.0..20.0), 1.5),
            },
            AssetEntry {
                asset_id: "ball".into(),
                count: CountRange(1, 1),
                placement: place(1.0, rng.random_range(-0.05..0.05), 0.0, 1.0),
            },
        ];
        let f = render_frame(&spec, &library, 9, idx).unwrap();
        let ball = spec.class_id("ball").unwrap();
        if f.annotations.iter().any(|a| a.class_id == ball) {
            occluded_kept += 1;
        }
    }

    let ok = annotated >= 25 && mismatches == 0 && leaks == 0 && wrongly_filtered == 0 && occluded_kept == 0;
    pass_if(
        ok,
        format!(
            "{annotated}/50 annotated, {mismatches} box != scan, worst leak past corners box {worst_leak:.2} px (tol {CORNER_SLACK_PX}), \
             {wrongly_filtered} wrongly filtered, {occluded_kept}/10 occluded balls kept"
        ),
    )
}

// ---------------------------------------------------------------- criterion 6

fn tree_digest(root: &Path) -> String {
    let mut h = Sha256::new();
    for sub in ["images", "labels"] {
        let mut files: Vec<PathBuf> = walkdir::WalkDir::new(root.join(sub))
            .into_iter()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_type().is_file())
            .map(|e| e.into_path())
            .collect();
        files.sort();
        for f in files {
            h.update(f.strip_prefix(root).unwrap().to_string_lossy().as_bytes());
            h.update(std::fs::read(&f).unwrap());
        }
    }
    h.update(std::fs::read(root.join("annotations.coco.json")).unwrap());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn run_generate(out: &Path, threads: &str) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_splatgen"))
        .args(["-q", "generate", "--seed", "2024", "--frames", "25", "--threads", threads])
        .arg("--spec")
        .arg(repo_root().join("configs/robocup.toml"))
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(String::from_utf8_lossy(&status.stderr).into_owned());
    }
    Ok(())
}

fn determinism(throughput: &mut Option<f64>) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (one, many) = (dir.path().join("one"), dir.path().join("many"));
    if let Err(e) = run_generate(&one, "1").and_then(|_| run_generate(&many, "4")) {
        return pass_if(false, format!("generate failed: {e}"));
    }
    *throughput = RunManifest::read(&many.join("manifest.json"))
        .ok()
        .map(|m| m.timing.images_per_second);
    let (a, b) = (tree_digest(&one), tree_digest(&many));
    pass_if(a == b, format!("N=25 at 1 and 4 threads: sha256 {} vs {}", &a[..16], &b[..16]))
}

// ---------------------------------------------------------------- criterion 7

fn golden(name: &str) -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/golden").join(name)).unwrap()
}

fn yolo_golden() -> Outcome {
    let label = |class_id, b: [f64; 4], confidence| YoloLabel {
        class_id,
        bbox: BBox::new(b[0], b[1], b[2], b[3]),
        confidence,
    };
    let cases = [
        ("single.txt", vec![label(0, [100.0, 100.0, 300.0, 200.0], None)], (1000, 500)),
        ("full_image.txt", vec![label(1, [0.0, 0.0, 640.0, 480.0], None)], (640, 480)),
        (
            "predictions.txt",
            vec![
                label(2, [64.0, 36.0, 192.0, 108.0], Some(0.52)),
                label(0, [1000.0, 600.0, 1280.0, 720.0], Some(0.9)),
            ],
            (1280, 720),
        ),
        ("empty.txt", vec![], (1280, 720)),
    ];
    let mut bad = Vec::new();
    for (name, labels, (w, h)) in &cases {
        if write_yolo_labels(labels, *w, *h) != golden(name) {
            bad.push(*name);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let (w, h) = (rng.random_range(16..4000u32), rng.random_range(16..4000u32));
        let x0 = rng.random_range(0.0..w as f64 - 1.0);
        let y0 = rng.random_range(0.0..h as f64 - 1.0);
        let b = BBox::new(x0, y0, rng.random_range(x0 + 1.0..=w as f64), rng.random_range(y0 + 1.0..=h as f64));
        let text = write_yolo_labels(&[label(0, [b.x_min, b.y_min, b.x_max, b.y_max], None)], w, h);
        let back = read_yolo_labels(&text, w, h).unwrap()[0].bbox;
        for d in [back.x_min - b.x_min, back.y_min - b.y_min, back.x_max - b.x_max, back.y_max - b.y_max] {
            worst = worst.max(d.abs());
        }
    }
    pass_if(
        bad.is_empty() && worst <= YOLO_DRIFT_PX,
        format!(
            "{} golden files, mismatched: {:?}; 10^4 round trips, max drift {worst:.3} px (tol {YOLO_DRIFT_PX})",
            cases.len(),
            bad
        ),
    )
}

// ---------------------------------------------------------------- criterion 8

fn ks_uniform(samples: &mut [f64], lo: f64, hi: f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let cdf = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
            (cdf - i as f64 / n).max((i + 1) as f64 / n - cdf)
        })
        .fold(0.0, f64::max)
}

fn placement_uniformity() -> Outcome {
    let mut spec = robocup();
    spec.assets.retain(|a| a.asset_id == "ball");
    let (rx, ry) = spec.placement_region(&spec.assets[0]);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for idx in 0..10_000 {
        let f = sample_frame(&spec, 8, idx).unwrap();
        xs.push(f.instances[0].position[0]);
        ys.push(f.instances[0].position[1]);
    }
    let dx = ks_uniform(&mut xs, rx.lo(), rx.hi());
    let dy = ks_uniform(&mut ys, ry.lo(), ry.hi());
    pass_if(
        dx < KS_MAX && dy < KS_MAX,
        format!("10^4 placements, KS distance x {dx:.4}, y {dy:.4} (tol {KS_MAX})"),
    )
}

// ----------------------------------------------------------------------------

fn main() -> ExitCode {
    let start = Instant::now();
    let mut throughput = None;
    let results: Vec<(u32, &str, Outcome)> = vec![
        (1, "F1 from reported precision and recall", f1_reference()),
        (2, "mAP50 and mAP50-95 against a brute-force evaluator", map_vs_oracle()),
        (3, "tiled rasteriser equals naive per-pixel compositing", tiled_vs_naive()),
        (4, "opacity and instance-weight conservation", conservation()),
        (5, "mask boxes, containment and occlusion filtering", mask_boxes()),
        (6, "dataset bytes independent of thread count", determinism(&mut throughput)),
        (7, "YOLO golden files and round trip", yolo_golden()),
        (8, "uniform placement (Kolmogorov-Smirnov)", placement_uniformity()),
        (
            9,
            "detector trained on synthetic data transfers to real images",
            Outcome {
                pass: None,
                detail: "not reproducible here: needs real labelled images and detector training".into(),
            },
        ),
    ];
    let mut failed = 0;
    for (id, name, o) in &results {
        let tag = match o.pass {
            Some(true) => "PASS",
            Some(false) => {
                failed += 1;
                "FAIL"
            }
            None => "N/A ",
        };
        println!("acceptance {id} [{tag}] {name}: {}", o.detail);
    }
    match throughput {
        Some(ips) => println!(
            "info: generation throughput {ips:.2} images/s at 1280x720, 4 threads on {} cores (target >= 0.2)",
            std::thread::available_parallelism().map_or(1, |n| n.get())
        ),
        None => println!("info: generation throughput unavailable"),
    }
    println!("acceptance: {failed} failed, {:.1}s", start.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
