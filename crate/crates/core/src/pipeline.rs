//! End-to-end generation: sample, resolve, render, annotate, write.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;

use crate::annotator::{annotate_frame, Annotation, Filters};
use crate::camera::Camera;
use crate::dataset::{
    self, assign_splits, dataset_yaml, encode_image, encode_png, image_rel_path, label_rel_path, to_rgb8,
    write_annotations, DatasetRecord, RunManifest, RunTiming, Split,
};
use crate::error::{Error, Result};
use crate::rasterizer::{render, RasterConfig, RenderTarget};
use crate::rng::purpose_seed;
use crate::scene::{build_backdrop, frame_camera, resolve_instances, sample_frame, AssetLibrary, FrameScene, SceneSpec};

/// A rendered and annotated frame.
#[derive(Debug, Clone)]
pub struct FrameRender {
    pub frame: FrameScene,
    pub camera: Camera,
    pub target: RenderTarget,
    pub annotations: Vec<Annotation>,
}

pub fn filters(spec: &SceneSpec) -> Filters {
    Filters {
        min_pixel_area: spec.annotation.min_pixel_area,
        min_visibility: spec.annotation.min_visibility,
    }
}

pub fn render_frame(spec: &SceneSpec, library: &AssetLibrary, master_seed: u64, frame_index: u64) -> Result<FrameRender> {
    let cfg = RasterConfig::default();
    let frame = sample_frame(spec, master_seed, frame_index)?;
    for w in &frame.warnings {
        log::warn!("event=placement frame={frame_index} message=\"{w}\"");
    }
    let camera = frame_camera(spec, &frame)?;
    let resolved = resolve_instances(&frame, library, spec.sh_rotation)?;
    let backdrop = build_backdrop(spec, &frame, &camera, library)?;
    let target = render(&resolved.render_input(), &camera, frame.exposure, &backdrop, &cfg)?;
    let annotations = annotate_frame(
        &resolved,
        &camera,
        &target,
        spec.annotation.mode,
        &filters(spec),
        spec.annotation.mask_threshold,
        &cfg,
    )?;
    log::debug!(
        "event=frame index={frame_index} instances={} splats={} visible_splats={} annotations={}",
        frame.instances.len(),
        resolved.splat_count(),
        target.stats.visible,
        annotations.len()
    );
    Ok(FrameRender {
        frame,
        camera,
        target,
        annotations,
    })
}

#[derive(Debug, Clone)]
pub struct GenerateOptions {
    pub out: PathBuf,
    pub master_seed: u64,
    pub frames: u64,
    /// Worker threads; 0 uses all cores.
    pub threads: usize,
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::file(p, e))
}

fn write_file(p: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(p, bytes).map_err(|e| Error::file(p, e))
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Contract(format!("thread pool: {e}")))
}

/// Run `f` on a dedicated pool of `threads` workers (0 = all cores).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    Ok(thread_pool(threads)?.install(f))
}

/// Generate a dataset under `opts.out`. The manifest is written first with
/// `complete: false` and rewritten at the end, so an interrupted or failed
/// run is recognisable. Output bytes do not depend on the thread count.
pub fn generate(spec: &SceneSpec, opts: &GenerateOptions) -> Result<RunManifest> {
    let started = Instant::now();
    let pool = thread_pool(opts.threads)?;
    let threads = pool.current_num_threads();
    let mut manifest = RunManifest::new(spec, opts.master_seed, opts.frames, threads);
    create_dir(&opts.out)?;
    manifest.write(&opts.out)?;
    log::info!(
        "event=start seed={} frames={} threads={threads} out={}",
        opts.master_seed,
        opts.frames,
        opts.out.display()
    );

    let result = generate_frames(spec, opts, &pool);
    let elapsed = started.elapsed().as_secs_f64();
    manifest.timing = RunTiming {
        wall_seconds: elapsed,
        images_per_second: if elapsed > 0.0 { opts.frames as f64 / elapsed } else { 0.0 },
    };
    match result {
        Ok((records, warnings)) => {
            for r in &records {
                *manifest.split_counts.entry(r.split).or_default() += 1;
                for a in &r.annotations {
                    if let Some(c) = manifest.class_counts.get_mut(a.class_id as usize) {
                        c.annotations += 1;
                    }
                }
            }
            manifest.warnings = warnings;
            if spec.output.write_coco {
                let path = opts.out.join(dataset::COCO_FILE);
                write_file(&path, dataset::write_coco(&records, &spec.classes).as_bytes())?;
            }
            write_file(&opts.out.join(dataset::DATASET_YAML), dataset_yaml(&spec.classes).as_bytes())?;
            manifest.complete = true;
            manifest.write(&opts.out)?;
            log::info!(
                "event=done frames={} seconds={elapsed:.2} img_per_s={:.3}",
                opts.frames,
                manifest.timing.images_per_second
            );
            Ok(manifest)
        }
        Err(e) => {
            manifest.error = Some(e.to_string());
            manifest.write(&opts.out)?;
            Err(e)
        }
    }
}

fn generate_frames(spec: &SceneSpec, opts: &GenerateOptions, pool: &rayon::ThreadPool) -> Result<(Vec<DatasetRecord>, u64)> {
    let n = usize::try_from(opts.frames).map_err(|_| Error::Config("frame count too large".into()))?;
    let splits = assign_splits(n, &spec.output.split, purpose_seed(opts.master_seed, "split"))?;
    for sub in ["images", "labels"] {
        for s in Split::ALL {
            create_dir(&opts.out.join(sub).join(s.as_str()))?;
        }
    }
    let library = AssetLibrary::load(spec)?;
    let done = AtomicUsize::new(0);
    let warnings = Mutex::new(0u64);
    let step = (n / 10).max(1);
    let records = pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let idx = i as u64;
                let split = splits[i];
                let fr = render_frame(spec, &library, opts.master_seed, idx)?;
                *warnings.lock().expect("counter lock") += fr.frame.warnings.len() as u64;
                let png = encode_image(&fr.target, spec.output.gamma)?;
                let (w, h) = (fr.camera.intrinsics.width, fr.camera.intrinsics.height);
                let image_path = image_rel_path(split, idx);
                write_file(&opts.out.join(&image_path), &png)?;
                write_file(
                    &opts.out.join(label_rel_path(split, idx)),
                    write_annotations(&fr.annotations, w, h).as_bytes(),
                )?;
                let k = done.fetch_add(1, Ordering::Relaxed) + 1;
                if k.is_multiple_of(step) || k == n {
                    log::info!("event=progress done={k} total={n}");
                }
                Ok(DatasetRecord {
                    image_path,
                    width: w,
                    height: h,
                    annotations: fr.annotations,
                    split,
                    master_seed: opts.master_seed,
                    frame_index: idx,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok((records, warnings.into_inner().expect("counter lock")))
}

/// Distinct, saturated colour per class.
pub fn class_color(class_id: u32) -> [u8; 3] {
    const PALETTE: [[u8; 3]; 8] = [
        [255, 56, 56],
        [56, 56, 255],
        [255, 157, 151],
        [255, 178, 29],
        [72, 249, 10],
        [0, 212, 187],
        [255, 55, 199],
        [146, 204, 23],
    ];
    PALETTE[class_id as usize % PALETTE.len()]
}

/// 3x5 digit glyphs, one row per entry, bit 2 = leftmost column.
const DIGITS: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111],
    [0b010, 0b110, 0b010, 0b010, 0b111],
    [0b111, 0b001, 0b111, 0b100, 0b111],
    [0b111, 0b001, 0b111, 0b001, 0b111],
    [0b101, 0b101, 0b111, 0b001, 0b001],
    [0b111, 0b100, 0b111, 0b001, 0b111],
    [0b111, 0b100, 0b111, 0b101, 0b111],
    [0b111, 0b001, 0b010, 0b010, 0b010],
    [0b111, 0b101, 0b111, 0b101, 0b111],
    [0b111, 0b101, 0b111, 0b001, 0b111],
];

/// RGB8 canvas for preview overlays.
pub struct Canvas {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
}

impl Canvas {
    pub fn from_target(target: &RenderTarget, gamma: f64) -> Self {
        Canvas {
            width: target.width,
            height: target.height,
            rgb: to_rgb8(target, gamma),
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let k = 3 * (y * self.width + x);
        [self.rgb[k], self.rgb[k + 1], self.rgb[k + 2]]
    }

    fn put(&mut self, x: i64, y: i64, c: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            let k = 3 * (y as usize * self.width + x as usize);
            self.rgb[k..k + 3].copy_from_slice(&c);
        }
    }

    /// One-pixel outline over the pixels the box covers: columns
    /// `floor(x_min)..=ceil(x_max) - 1`, likewise for rows.
    pub fn draw_box(&mut self, b: &crate::bbox::BBox, c: [u8; 3]) {
        let (x0, y0) = (b.x_min.floor() as i64, b.y_min.floor() as i64);
        let (x1, y1) = (b.x_max.ceil() as i64 - 1, b.y_max.ceil() as i64 - 1);
        for x in x0..=x1 {
            self.put(x, y0, c);
            self.put(x, y1, c);
        }
        for y in y0..=y1 {
            self.put(x0, y, c);
            self.put(x1, y, c);
        }
    }

    /// Class id in a filled tag just inside the box's top-left corner.
    pub fn draw_label(&mut self, b: &crate::bbox::BBox, class_id: u32, c: [u8; 3]) {
        let text: Vec<usize> = class_id.to_string().bytes().map(|d| (d - b'0') as usize).collect();
        let (ox, oy) = (b.x_min.floor() as i64 + 1, b.y_min.floor() as i64 + 1);
        let w = 4 * text.len() as i64 + 1;
        for y in 0..7 {
            for x in 0..w {
                self.put(ox + x, oy + y, c);
            }
        }
        for (i, &d) in text.iter().enumerate() {
            for (row, bits) in DIGITS[d].iter().enumerate() {
                for col in 0..3 {
                    if bits & (0b100 >> col) != 0 {
                        self.put(ox + 1 + 4 * i as i64 + col, oy + 1 + row as i64, [255, 255, 255]);
                    }
                }
            }
        }
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        encode_png(self.width as u32, self.height as u32, &self.rgb)
    }
}

/// Render one frame and burn its boxes and class ids into the image.
pub fn inspect(spec: &SceneSpec, master_seed: u64, frame_index: u64) -> Result<(Canvas, Vec<Annotation>)> {
    let library = AssetLibrary::load(spec)?;
    let fr = render_frame(spec, &library, master_seed, frame_index)?;
    let mut canvas = Canvas::from_target(&fr.target, spec.output.gamma);
    for a in &fr.annotations {
        canvas.draw_box(&a.bbox, class_color(a.class_id));
    }
    for a in &fr.annotations {
        canvas.draw_label(&a.bbox, a.class_id, class_color(a.class_id));
    }
    Ok((canvas, fr.annotations))
}
