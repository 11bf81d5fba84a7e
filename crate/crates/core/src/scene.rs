//! Scene specification and seeded domain randomisation.
//!
//! A [`SceneSpec`] declares ranges; [`sample_frame`] draws one concrete
//! [`FrameScene`] from them using a per-frame RNG stream, so frames can be
//! produced in any order or in parallel. All draws are uniform.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::annotator::AnnotationMode;
use crate::camera::{intrinsics_from_fov, Camera, CameraPose, Intrinsics, DEFAULT_FAR, DEFAULT_NEAR};
use crate::error::{Error, Result};
use crate::rasterizer::Backdrop;
use crate::rng::{frame_seed, stream};
use crate::splat::{self, procedural, transform_cloud, Aabb3, ShRotation, Similarity, SplatCloud};

pub const SPEC_VERSION: u32 = 1;
/// Placement attempts per instance before giving up on it.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 100;

/// Closed interval `[lo, hi]`, written as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range(pub f64, pub f64);

impl Range {
    pub fn fixed(v: f64) -> Self {
        Range(v, v)
    }

    pub fn lo(&self) -> f64 {
        self.0
    }

    pub fn hi(&self) -> f64 {
        self.1
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.0 && v <= self.1
    }

    /// `lo + (hi - lo) * u` with `u` uniform in `[0, 1)`; exactly `lo` when
    /// the range is degenerate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.0 + (self.1 - self.0) * u
    }

    fn check(&self, key: &str) -> Result<()> {
        if !self.0.is_finite() || !self.1.is_finite() {
            return Err(Error::Config(format!("{key}: bounds must be finite, got [{}, {}]", self.0, self.1)));
        }
        if self.0 > self.1 {
            return Err(Error::Config(format!("{key}: lo {} is greater than hi {}", self.0, self.1)));
        }
        Ok(())
    }
}

/// Inclusive integer range for instance counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRange(pub u32, pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageSpec {
    pub width: u32,
    pub height: u32,
}

impl Default for ImageSpec {
    fn default() -> Self {
        Self {
            width: 1280,
            height: 720,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraSpec {
    pub hfov_deg: f64,
    pub vfov_deg: f64,
    pub near: f64,
    pub far: f64,
}

impl Default for CameraSpec {
    fn default() -> Self {
        Self {
            hfov_deg: 110.0,
            vfov_deg: 70.0,
            near: DEFAULT_NEAR,
            far: DEFAULT_FAR,
        }
    }
}

/// Ground plane drawn behind the splats: a carpet with mowing stripes and
/// white field markings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldSpec {
    /// Half length (x) and half width (y) of the marked area in metres.
    pub half_extent: [f64; 2],
    /// Carpet beyond the outer lines.
    pub margin: f64,
    pub line_width: f64,
    pub center_circle_radius: f64,
    pub stripe_width: f64,
    /// Relative brightness difference between neighbouring stripes.
    pub stripe_contrast: f64,
    pub grass_color: [f64; 3],
    pub line_color: [f64; 3],
    /// Draw the ground plane at all; otherwise only the background shows.
    pub enabled: bool,
}

impl Default for FieldSpec {
    fn default() -> Self {
        Self {
            half_extent: [4.5, 3.0],
            margin: 1.0,
            line_width: 0.05,
            center_circle_radius: 0.75,
            stripe_width: 0.5,
            stripe_contrast: 0.12,
            grass_color: [0.06, 0.32, 0.08],
            line_color: [0.9, 0.9, 0.9],
            enabled: true,
        }
    }
}

/// Where a library asset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AssetSource {
    /// A 3DGS `.ply` export; relative paths are resolved against the spec
    /// file's directory at load time.
    Ply { path: PathBuf },
    Sphere {
        radius: f64,
        count: usize,
        color: [f64; 3],
        #[serde(default)]
        sh_degree: u8,
    },
    Robot {
        size: [f64; 3],
        count: usize,
        body_color: [f64; 3],
        marker_color: [f64; 3],
        #[serde(default)]
        sh_degree: u8,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LibraryEntry {
    /// Name from `classes`.
    pub class: String,
    pub source: AssetSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Placement {
    /// Defaults to the field's marked area.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Range>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Range>,
    #[serde(default = "full_turn")]
    pub yaw_deg: Range,
    #[serde(default)]
    pub z_offset: f64,
    #[serde(default = "unit_range")]
    pub scale: Range,
}

impl Default for Placement {
    fn default() -> Self {
        Self {
            x: None,
            y: None,
            yaw_deg: full_turn(),
            z_offset: 0.0,
            scale: unit_range(),
        }
    }
}

fn full_turn() -> Range {
    Range(0.0, 360.0)
}

fn unit_range() -> Range {
    Range::fixed(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetEntry {
    pub asset_id: String,
    pub count: CountRange,
    #[serde(default)]
    pub placement: Placement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraRig {
    /// Default to the field's marked area.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<Range>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<Range>,
    pub height: Range,
    pub yaw_deg: Range,
    pub pitch_deg: Range,
    pub roll_deg: Range,
    /// Minimum ground distance between the camera and any instance centre.
    pub clearance: f64,
}

impl Default for CameraRig {
    fn default() -> Self {
        Self {
            x: None,
            y: None,
            height: Range(0.45, 0.65),
            yaw_deg: full_turn(),
            pitch_deg: Range(5.0, 25.0),
            roll_deg: Range::fixed(0.0),
            clearance: 0.5,
        }
    }
}

/// What appears where rays miss the ground plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackgroundSpec {
    /// Uniform colour drawn per channel between `lo` and `hi`.
    Color { lo: [f64; 3], hi: [f64; 3] },
    /// One image picked uniformly per frame, stretched to the render size.
    Plates { paths: Vec<PathBuf> },
}

impl Default for BackgroundSpec {
    fn default() -> Self {
        BackgroundSpec::Color {
            lo: [0.25, 0.25, 0.28],
            hi: [0.75, 0.75, 0.8],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnnotationSpec {
    pub mode: AnnotationMode,
    pub min_pixel_area: f64,
    pub min_visibility: f64,
    pub mask_threshold: f64,
}

impl Default for AnnotationSpec {
    fn default() -> Self {
        Self {
            mode: AnnotationMode::Corners,
            min_pixel_area: 25.0,
            min_visibility: 0.1,
            mask_threshold: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    /// train / val / test ratios.
    pub split: [f64; 3],
    pub gamma: f64,
    pub write_coco: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            split: [0.8, 0.1, 0.1],
            gamma: 2.2,
            write_coco: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    #[serde(default = "spec_version")]
    pub spec_version: u32,
    #[serde(default)]
    pub image: ImageSpec,
    #[serde(default)]
    pub camera: CameraSpec,
    #[serde(default)]
    pub field: FieldSpec,
    /// Class names; the position in this list is the class id.
    pub classes: Vec<String>,
    pub library: BTreeMap<String, LibraryEntry>,
    pub assets: Vec<AssetEntry>,
    #[serde(default)]
    pub camera_rig: CameraRig,
    /// Linear gain applied to the final colour.
    #[serde(default = "default_exposure")]
    pub exposure: Range,
    #[serde(default)]
    pub min_separation: f64,
    #[serde(default)]
    pub background: BackgroundSpec,
    #[serde(default)]
    pub sh_rotation: ShRotation,
    #[serde(default)]
    pub annotation: AnnotationSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

fn spec_version() -> u32 {
    SPEC_VERSION
}

fn default_exposure() -> Range {
    Range(0.6, 1.4)
}

/// Read, parse and validate a spec file. JSON is used for `.json` files and
/// TOML otherwise. Relative asset and plate paths become absolute.
pub fn load_scene_spec(path: &Path) -> Result<SceneSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let mut spec = if is_json {
        SceneSpec::from_json(&text)
    } else {
        SceneSpec::from_toml(&text)
    }
    .map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let base = std::fs::canonicalize(base).unwrap_or_else(|_| base.to_path_buf());
    spec.resolve_paths(&base);
    Ok(spec)
}

impl SceneSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: SceneSpec = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SceneSpec = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Contract(format!("spec serialisation failed: {e}")))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let abs = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for entry in self.library.values_mut() {
            if let AssetSource::Ply { path } = &mut entry.source {
                abs(path);
            }
        }
        if let BackgroundSpec::Plates { paths } = &mut self.background {
            paths.iter_mut().for_each(abs);
        }
    }

    pub fn class_id(&self, name: &str) -> Option<u32> {
        self.classes.iter().position(|c| c == name).map(|i| i as u32)
    }

    pub fn intrinsics(&self) -> Result<Intrinsics> {
        intrinsics_from_fov(self.image.width, self.image.height, self.camera.hfov_deg, self.camera.vfov_deg)?
            .with_clip(self.camera.near, self.camera.far)
    }

    pub fn field_x(&self) -> Range {
        Range(-self.field.half_extent[0], self.field.half_extent[0])
    }

    pub fn field_y(&self) -> Range {
        Range(-self.field.half_extent[1], self.field.half_extent[1])
    }

    /// Placement x/y ranges with field defaults filled in.
    pub fn placement_region(&self, entry: &AssetEntry) -> (Range, Range) {
        (
            entry.placement.x.unwrap_or_else(|| self.field_x()),
            entry.placement.y.unwrap_or_else(|| self.field_y()),
        )
    }

    pub fn rig_region(&self) -> (Range, Range) {
        (
            self.camera_rig.x.unwrap_or_else(|| self.field_x()),
            self.camera_rig.y.unwrap_or_else(|| self.field_y()),
        )
    }

    /// Check every invariant. Returns non-fatal warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        if self.spec_version != SPEC_VERSION {
            return Err(Error::Config(format!(
                "spec_version: unsupported version {} (expected {SPEC_VERSION})",
                self.spec_version
            )));
        }
        if self.image.width == 0 || self.image.height == 0 {
            return Err(Error::Config(format!(
                "image: size must be positive, got {}x{}",
                self.image.width, self.image.height
            )));
        }
        for (key, v) in [("camera.hfov_deg", self.camera.hfov_deg), ("camera.vfov_deg", self.camera.vfov_deg)] {
            if !(v > 0.0 && v < 180.0) {
                return Err(Error::Config(format!("{key}: {v} is outside (0, 180)")));
            }
        }
        self.intrinsics()
            .map_err(|e| Error::Config(format!("camera: {}", e.to_string().trim_start_matches("config error: "))))?;

        let [hx, hy] = self.field.half_extent;
        if !(hx > 0.0 && hy > 0.0) {
            return Err(Error::Config(format!("field.half_extent: must be positive, got [{hx}, {hy}]")));
        }
        for (key, v) in [
            ("field.margin", self.field.margin),
            ("field.line_width", self.field.line_width),
            ("field.center_circle_radius", self.field.center_circle_radius),
            ("field.stripe_contrast", self.field.stripe_contrast),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{key}: must be non-negative, got {v}")));
            }
        }
        if !(self.field.stripe_width > 0.0) {
            return Err(Error::Config(format!(
                "field.stripe_width: must be positive, got {}",
                self.field.stripe_width
            )));
        }
        check_color("field.grass_color", self.field.grass_color)?;
        check_color("field.line_color", self.field.line_color)?;

        if self.classes.is_empty() {
            return Err(Error::Config("classes: at least one class is required".into()));
        }
        for (i, c) in self.classes.iter().enumerate() {
            if self.classes[..i].contains(c) {
                return Err(Error::Config(format!("classes: duplicate class '{c}'")));
            }
        }
        for (id, entry) in &self.library {
            let key = format!("library.{id}");
            if self.class_id(&entry.class).is_none() {
                return Err(Error::Config(format!("{key}.class: unknown class '{}'", entry.class)));
            }
            match &entry.source {
                AssetSource::Ply { .. } => {}
                AssetSource::Sphere {
                    radius, count, color, sh_degree,
                } => {
                    if !(*radius > 0.0) || *count == 0 || *sh_degree > 3 {
                        return Err(Error::Config(format!(
                            "{key}.source: sphere needs radius > 0, count > 0 and sh_degree <= 3"
                        )));
                    }
                    check_color(&format!("{key}.source.color"), *color)?;
                }
                AssetSource::Robot {
                    size,
                    count,
                    body_color,
                    marker_color,
                    sh_degree,
                } => {
                    if size.iter().any(|s| !(*s > 0.0)) || *count == 0 || *sh_degree > 3 {
                        return Err(Error::Config(format!(
                            "{key}.source: robot needs positive size, count > 0 and sh_degree <= 3"
                        )));
                    }
                    check_color(&format!("{key}.source.body_color"), *body_color)?;
                    check_color(&format!("{key}.source.marker_color"), *marker_color)?;
                }
            }
        }
        for (i, entry) in self.assets.iter().enumerate() {
            let key = format!("assets[{i}]");
            if !self.library.contains_key(&entry.asset_id) {
                return Err(Error::Config(format!("{key}.asset_id: unknown asset_id '{}'", entry.asset_id)));
            }
            let CountRange(lo, hi) = entry.count;
            if lo > hi {
                return Err(Error::Config(format!("{key}.count: lo {lo} is greater than hi {hi}")));
            }
            let p = &entry.placement;
            let (x, y) = self.placement_region(entry);
            x.check(&format!("{key}.placement.x"))?;
            y.check(&format!("{key}.placement.y"))?;
            p.yaw_deg.check(&format!("{key}.placement.yaw_deg"))?;
            p.scale.check(&format!("{key}.placement.scale"))?;
            if !(p.scale.lo() > 0.0) {
                return Err(Error::Config(format!(
                    "{key}.placement.scale: must be positive, got [{}, {}]",
                    p.scale.lo(),
                    p.scale.hi()
                )));
            }
            if !p.z_offset.is_finite() {
                return Err(Error::Config(format!("{key}.placement.z_offset: must be finite")));
            }
        }
        if self.assets.is_empty() {
            warnings.push("assets: no entries, every frame will be empty".into());
        }

        let rig = &self.camera_rig;
        let (rx, ry) = self.rig_region();
        rx.check("camera_rig.x")?;
        ry.check("camera_rig.y")?;
        rig.height.check("camera_rig.height")?;
        rig.yaw_deg.check("camera_rig.yaw_deg")?;
        rig.pitch_deg.check("camera_rig.pitch_deg")?;
        rig.roll_deg.check("camera_rig.roll_deg")?;
        if !(rig.clearance >= 0.0 && rig.clearance.is_finite()) {
            return Err(Error::Config(format!("camera_rig.clearance: must be non-negative, got {}", rig.clearance)));
        }
        if rig.height.lo() <= 0.0 {
            warnings.push("camera_rig.height: camera can sit at or below the ground plane".into());
        }

        self.exposure.check("exposure")?;
        if !(self.exposure.lo() > 0.0) {
            return Err(Error::Config(format!(
                "exposure: gain must be positive, got [{}, {}]",
                self.exposure.lo(),
                self.exposure.hi()
            )));
        }
        if !(self.min_separation >= 0.0 && self.min_separation.is_finite()) {
            return Err(Error::Config(format!("min_separation: must be non-negative, got {}", self.min_separation)));
        }
        match &self.background {
            BackgroundSpec::Color { lo, hi } => {
                check_color("background.lo", *lo)?;
                check_color("background.hi", *hi)?;
                for ch in 0..3 {
                    Range(lo[ch], hi[ch]).check(&format!("background channel {ch}"))?;
                }
            }
            BackgroundSpec::Plates { paths } => {
                if paths.is_empty() {
                    return Err(Error::Config("background.paths: plate list is empty".into()));
                }
            }
        }

        let a = &self.annotation;
        if !(a.mask_threshold > 0.0 && a.mask_threshold < 1.0) {
            return Err(Error::Config(format!(
                "annotation.mask_threshold: {} is outside (0, 1)",
                a.mask_threshold
            )));
        }
        if !(a.min_pixel_area >= 0.0) {
            return Err(Error::Config(format!("annotation.min_pixel_area: must be non-negative, got {}", a.min_pixel_area)));
        }
        if !(0.0..=1.0).contains(&a.min_visibility) {
            return Err(Error::Config(format!("annotation.min_visibility: {} is outside [0, 1]", a.min_visibility)));
        }
        crate::dataset::check_split_ratios(&self.output.split)
            .map_err(|e| Error::Config(format!("output.split: {}", e.to_string().trim_start_matches("config error: "))))?;
        if !(self.output.gamma > 0.0) {
            return Err(Error::Config(format!("output.gamma: must be positive, got {}", self.output.gamma)));
        }
        Ok(warnings)
    }
}

fn check_color(key: &str, c: [f64; 3]) -> Result<()> {
    if c.iter().all(|v| (0.0..=1.0).contains(v)) {
        Ok(())
    } else {
        Err(Error::Config(format!("{key}: components must be in [0, 1], got {c:?}")))
    }
}

/// One placed object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub instance_id: u32,
    pub asset_id: String,
    pub class_id: u32,
    pub position: [f64; 3],
    pub yaw_deg: f64,
    pub scale: f64,
    /// Index into `SceneSpec::assets` that produced this instance.
    pub entry: usize,
}

impl Instance {
    pub fn transform(&self) -> Similarity {
        Similarity::from_ground_pose(Vector3::from(self.position), self.yaw_deg, self.scale)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundChoice {
    Color([f64; 3]),
    Plate(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigSample {
    pub x: f64,
    pub y: f64,
    pub height: f64,
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    pub roll_deg: f64,
}

impl RigSample {
    pub fn pose(&self) -> CameraPose {
        CameraPose::from_yaw_pitch_roll(
            Vector3::new(self.x, self.y, self.height),
            self.yaw_deg,
            self.pitch_deg,
            self.roll_deg,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameScene {
    pub frame_index: u64,
    pub seed: u64,
    pub instances: Vec<Instance>,
    pub rig: RigSample,
    pub camera: CameraPose,
    pub exposure: f64,
    pub background: BackgroundChoice,
    /// Instances dropped because they could not be placed.
    pub warnings: Vec<String>,
}

/// Draw one frame. The result depends only on `(spec, master_seed,
/// frame_index)`.
pub fn sample_frame(spec: &SceneSpec, master_seed: u64, frame_index: u64) -> Result<FrameScene> {
    let seed = frame_seed(master_seed, frame_index);
    let mut rng = stream(seed);

    let (rx, ry) = spec.rig_region();
    let r = &spec.camera_rig;
    let rig = RigSample {
        x: rx.sample(&mut rng),
        y: ry.sample(&mut rng),
        height: r.height.sample(&mut rng),
        yaw_deg: r.yaw_deg.sample(&mut rng),
        pitch_deg: r.pitch_deg.sample(&mut rng),
        roll_deg: r.roll_deg.sample(&mut rng),
    };
    let exposure = spec.exposure.sample(&mut rng);
    let background = match &spec.background {
        BackgroundSpec::Color { lo, hi } => {
            BackgroundChoice::Color(std::array::from_fn(|ch| Range(lo[ch], hi[ch]).sample(&mut rng)))
        }
        BackgroundSpec::Plates { paths } => BackgroundChoice::Plate(rng.random_range(0..paths.len())),
    };

    let mut instances: Vec<Instance> = Vec::new();
    let mut warnings = Vec::new();
    let sep2 = spec.min_separation * spec.min_separation;
    let clear2 = r.clearance * r.clearance;
    for (entry_idx, entry) in spec.assets.iter().enumerate() {
        let CountRange(lo, hi) = entry.count;
        let count = rng.random_range(lo..=hi);
        let (px, py) = spec.placement_region(entry);
        let class_id = spec
            .class_id(&spec.library[&entry.asset_id].class)
            .expect("validated spec");
        for k in 0..count {
            let mut placed = None;
            for _ in 0..MAX_PLACEMENT_ATTEMPTS {
                let (x, y) = (px.sample(&mut rng), py.sample(&mut rng));
                let d2 = |a: f64, b: f64| (a - x).powi(2) + (b - y).powi(2);
                let clear_of_camera = d2(rig.x, rig.y) >= clear2;
                let separated = instances.iter().all(|o| d2(o.position[0], o.position[1]) >= sep2);
                if clear_of_camera && separated {
                    placed = Some((x, y));
                    break;
                }
            }
            let Some((x, y)) = placed else {
                if k < lo {
                    return Err(Error::Sampling {
                        frame_index,
                        message: format!(
                            "could not place mandatory instance {} of {} '{}' after {MAX_PLACEMENT_ATTEMPTS} attempts",
                            k + 1,
                            lo,
                            entry.asset_id
                        ),
                    });
                }
                warnings.push(format!(
                    "frame {frame_index}: dropped optional '{}' instance after {MAX_PLACEMENT_ATTEMPTS} attempts",
                    entry.asset_id
                ));
                continue;
            };
            let yaw_deg = entry.placement.yaw_deg.sample(&mut rng);
            let scale = entry.placement.scale.sample(&mut rng);
            instances.push(Instance {
                instance_id: instances.len() as u32,
                asset_id: entry.asset_id.clone(),
                class_id,
                position: [x, y, entry.placement.z_offset],
                yaw_deg,
                scale,
                entry: entry_idx,
            });
        }
    }

    Ok(FrameScene {
        frame_index,
        seed,
        instances,
        rig,
        camera: rig.pose(),
        exposure,
        background,
        warnings,
    })
}

#[derive(Debug, Clone)]
pub struct LibraryAsset {
    pub class_id: u32,
    pub cloud: Arc<SplatCloud>,
}

/// Loaded splat assets and background plates for one spec.
#[derive(Debug, Clone, Default)]
pub struct AssetLibrary {
    assets: BTreeMap<String, LibraryAsset>,
    plates: Vec<PlateImage>,
}

/// Background plate decoded to linear RGB.
#[derive(Debug, Clone)]
pub struct PlateImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[f64; 3]>,
}

impl AssetLibrary {
    pub fn load(spec: &SceneSpec) -> Result<Self> {
        let mut lib = AssetLibrary::default();
        for (id, entry) in &spec.library {
            let class_id = spec
                .class_id(&entry.class)
                .ok_or_else(|| Error::Config(format!("library.{id}.class: unknown class '{}'", entry.class)))?;
            let cloud = build_asset(id, &entry.source)?;
            log::debug!("asset={id} splats={} sh_degree={}", cloud.len(), cloud.sh_degree());
            lib.insert(id, class_id, cloud);
        }
        if let BackgroundSpec::Plates { paths } = &spec.background {
            for p in paths {
                lib.plates.push(load_plate(p, spec.output.gamma)?);
            }
        }
        Ok(lib)
    }

    pub fn insert(&mut self, asset_id: &str, class_id: u32, cloud: SplatCloud) {
        self.assets.insert(
            asset_id.to_string(),
            LibraryAsset {
                class_id,
                cloud: Arc::new(cloud),
            },
        );
    }

    pub fn get(&self, asset_id: &str) -> Option<&LibraryAsset> {
        self.assets.get(asset_id)
    }

    pub fn plates(&self) -> &[PlateImage] {
        &self.plates
    }

    pub fn push_plate(&mut self, plate: PlateImage) {
        self.plates.push(plate);
    }
}

fn build_asset(id: &str, source: &AssetSource) -> Result<SplatCloud> {
    match source {
        AssetSource::Ply { path } => {
            let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
            splat::ply::parse_ply(&bytes, id)
        }
        AssetSource::Sphere {
            radius,
            count,
            color,
            sh_degree,
        } => procedural::sphere(id, *radius, *count, *color, *sh_degree),
        AssetSource::Robot {
            size,
            count,
            body_color,
            marker_color,
            sh_degree,
        } => procedural::robot(id, *size, *count, *body_color, *marker_color, *sh_degree),
    }
}

fn load_plate(path: &Path, gamma: f64) -> Result<PlateImage> {
    let img = image::open(path)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::file(path, io),
            other => Error::Image(other),
        })?
        .to_rgb8();
    let lut: Vec<f64> = (0..256).map(|v| (v as f64 / 255.0).powf(gamma)).collect();
    Ok(PlateImage {
        width: img.width() as usize,
        height: img.height() as usize,
        pixels: img.pixels().map(|p| p.0.map(|c| lut[c as usize])).collect(),
    })
}

/// A frame's instances in world space, ready to render.
#[derive(Debug, Clone)]
pub struct ResolvedInstance {
    pub instance_id: u32,
    pub class_id: u32,
    pub cloud: SplatCloud,
    /// Bounds in the asset's own frame.
    pub object_bounds: Option<Aabb3>,
    pub transform: Similarity,
}

#[derive(Debug, Clone, Default)]
pub struct ResolvedScene {
    pub instances: Vec<ResolvedInstance>,
}

impl ResolvedScene {
    pub fn render_input(&self) -> Vec<(u32, &SplatCloud)> {
        self.instances.iter().map(|i| (i.instance_id, &i.cloud)).collect()
    }

    pub fn splat_count(&self) -> usize {
        self.instances.iter().map(|i| i.cloud.len()).sum()
    }
}

/// Move each instance's asset into world space by its pose.
pub fn resolve_instances(frame: &FrameScene, library: &AssetLibrary, sh_mode: ShRotation) -> Result<ResolvedScene> {
    let instances = frame
        .instances
        .iter()
        .map(|inst| {
            let asset = library
                .get(&inst.asset_id)
                .ok_or_else(|| Error::Lookup(format!("asset '{}' is not in the library", inst.asset_id)))?;
            let transform = inst.transform();
            Ok(ResolvedInstance {
                instance_id: inst.instance_id,
                class_id: inst.class_id,
                cloud: transform_cloud(&asset.cloud, &transform, sh_mode)?,
                object_bounds: asset.cloud.object_bounds().copied(),
                transform,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ResolvedScene { instances })
}

pub fn frame_camera(spec: &SceneSpec, frame: &FrameScene) -> Result<Camera> {
    Ok(Camera::new(spec.intrinsics()?, frame.camera))
}

/// Per-pixel backdrop for a frame: the field where camera rays hit the
/// ground inside the carpet, the sampled background elsewhere.
pub fn build_backdrop(spec: &SceneSpec, frame: &FrameScene, camera: &Camera, library: &AssetLibrary) -> Result<Backdrop> {
    let (w, h) = (camera.width(), camera.height());
    let plate = match frame.background {
        BackgroundChoice::Color(c) => {
            if !spec.field.enabled {
                return Ok(Backdrop::Solid(c));
            }
            None
        }
        BackgroundChoice::Plate(i) => Some(library.plates().get(i).ok_or_else(|| {
            Error::Lookup(format!("background plate {i} is not loaded"))
        })?),
    };
    let sky = |x: usize, y: usize| match (plate, frame.background) {
        (Some(p), _) => {
            let sx = (x * p.width / w).min(p.width - 1);
            let sy = (y * p.height / h).min(p.height - 1);
            p.pixels[sy * p.width + sx]
        }
        (None, BackgroundChoice::Color(c)) => c,
        (None, BackgroundChoice::Plate(_)) => unreachable!(),
    };
    let f = &spec.field;
    let eye = camera.pose.position;
    let mut pixels = Vec::with_capacity(w * h);
    // 2x2 supersampling keeps thin lines from aliasing
    const OFFSETS: [(f64, f64); 4] = [(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)];
    for y in 0..h {
        for x in 0..w {
            let bg = sky(x, y);
            if !f.enabled {
                pixels.push(bg);
                continue;
            }
            let mut acc = [0.0; 3];
            for (ox, oy) in OFFSETS {
                let d = camera.ray_direction(x as f64 + ox, y as f64 + oy);
                let c = if d.z < -1e-9 && eye.z > 0.0 {
                    let t = -eye.z / d.z;
                    ground_color(f, eye.x + t * d.x, eye.y + t * d.y).unwrap_or(bg)
                } else {
                    bg
                };
                for ch in 0..3 {
                    acc[ch] += 0.25 * c[ch];
                }
            }
            pixels.push(acc);
        }
    }
    Ok(Backdrop::Image {
        width: w,
        height: h,
        pixels,
    })
}

/// Colour of the ground at `(x, y)`, `None` outside the carpet.
pub fn ground_color(f: &FieldSpec, x: f64, y: f64) -> Option<[f64; 3]> {
    let [hx, hy] = f.half_extent;
    if x.abs() > hx + f.margin || y.abs() > hy + f.margin {
        return None;
    }
    let lw = f.line_width / 2.0;
    let on_boundary =
        ((x.abs() - hx).abs() <= lw && y.abs() <= hy + lw) || ((y.abs() - hy).abs() <= lw && x.abs() <= hx + lw);
    let on_center = x.abs() <= lw && y.abs() <= hy;
    let on_circle = ((x * x + y * y).sqrt() - f.center_circle_radius).abs() <= lw;
    if on_boundary || on_center || on_circle {
        return Some(f.line_color);
    }
    let stripe = ((x + hx + f.margin) / f.stripe_width).floor() as i64;
    let k = if stripe % 2 == 0 { 1.0 } else { 1.0 - f.stripe_contrast };
    Some(f.grass_color.map(|c| c * k))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"
classes = ["ball"]
assets = [{ asset_id = "ball", count = [1, 1] }]
[library.ball]
class = "ball"
source = { kind = "sphere", radius = 0.1, count = 200, color = [0.9, 0.9, 0.1] }
"#;

    fn degenerate() -> SceneSpec {
        let mut s = SceneSpec::from_toml(MINIMAL).unwrap();
        s.assets[0].placement = Placement {
            x: Some(Range::fixed(1.0)),
            y: Some(Range::fixed(0.5)),
            yaw_deg: Range::fixed(30.0),
            z_offset: 0.0,
            scale: Range::fixed(1.0),
        };
        s.camera_rig = CameraRig {
            x: Some(Range::fixed(-2.0)),
            y: Some(Range::fixed(0.0)),
            height: Range::fixed(0.5),
            yaw_deg: Range::fixed(0.0),
            pitch_deg: Range::fixed(10.0),
            roll_deg: Range::fixed(0.0),
            clearance: 0.5,
        };
        s.exposure = Range::fixed(1.0);
        s.background = BackgroundSpec::Color {
            lo: [0.5; 3],
            hi: [0.5; 3],
        };
        s
    }

    #[test]
    fn minimal_spec_gets_defaults() {
        let s = SceneSpec::from_toml(MINIMAL).unwrap();
        assert_eq!(s.spec_version, SPEC_VERSION);
        assert_eq!(s.image, ImageSpec::default());
        assert_eq!(s.exposure, Range(0.6, 1.4));
        assert_eq!(s.annotation.min_pixel_area, 25.0);
        assert_eq!(s.annotation.mode, AnnotationMode::Corners);
        assert_eq!(s.min_separation, 0.0);
        assert_eq!(s.placement_region(&s.assets[0]), (Range(-4.5, 4.5), Range(-3.0, 3.0)));
    }

    #[test]
    fn wide_fov_is_rejected() {
        let text = format!("{MINIMAL}\n[camera]\nhfov_deg = 200\n");
        let err = SceneSpec::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("camera.hfov_deg") && err.contains("200"), "{err}");
    }

    #[test]
    fn unknown_key_is_named() {
        let text = format!("bogus_key = 3\n{MINIMAL}");
        let err = SceneSpec::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("bogus_key"), "{err}");
    }

    #[test]
    fn inverted_range_names_both_bounds() {
        let text = MINIMAL.replace("count = [1, 1]", "count = [1, 1], placement = { x = [2.0, -1.0] }");
        let err = SceneSpec::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("assets[0].placement.x") && err.contains("2") && err.contains("-1"), "{err}");
    }

    #[test]
    fn unknown_asset_is_named() {
        let text = MINIMAL.replace("asset_id = \"ball\"", "asset_id = \"goalpost\"");
        let err = SceneSpec::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("goalpost"), "{err}");
    }

    #[test]
    fn toml_round_trip() {
        let s = degenerate();
        let again = SceneSpec::from_toml(&s.to_toml().unwrap()).unwrap();
        assert_eq!(s, again);
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(SceneSpec::from_json(&json).unwrap(), s);
    }

    #[test]
    fn degenerate_ranges_give_identical_frames() {
        let s = degenerate();
        let a = sample_frame(&s, 7, 0).unwrap();
        for idx in 1..20 {
            let mut b = sample_frame(&s, 7, idx).unwrap();
            b.frame_index = a.frame_index;
            b.seed = a.seed;
            assert_eq!(a, b);
        }
        assert_eq!(a.instances[0].position, [1.0, 0.5, 0.0]);
    }

    #[test]
    fn sampling_is_deterministic() {
        let s = SceneSpec::from_toml(MINIMAL).unwrap();
        assert_eq!(sample_frame(&s, 99, 5).unwrap(), sample_frame(&s, 99, 5).unwrap());
        assert_ne!(sample_frame(&s, 99, 5).unwrap(), sample_frame(&s, 99, 6).unwrap());
    }

    #[test]
    fn crowded_mandatory_instances_fail_with_frame_index() {
        let mut s = degenerate();
        s.assets[0].count = CountRange(2, 2);
        s.min_separation = 0.5;
        match sample_frame(&s, 1, 17) {
            Err(Error::Sampling { frame_index, .. }) => assert_eq!(frame_index, 17),
            other => panic!("expected sampling error, got {other:?}"),
        }
    }

    #[test]
    fn crowded_optional_instances_are_dropped() {
        let mut s = degenerate();
        s.assets[0].count = CountRange(1, 3);
        s.min_separation = 0.5;
        let f = (0..50).map(|i| sample_frame(&s, 1, i).unwrap()).find(|f| !f.warnings.is_empty());
        let f = f.expect("some frame asks for more than one instance");
        assert_eq!(f.instances.len(), 1);
    }

    #[test]
    fn resolve_counts_and_ids() {
        let mut s = degenerate();
        s.assets[0].count = CountRange(2, 2);
        s.assets[0].placement.x = Some(Range(0.0, 3.0));
        s.min_separation = 0.3;
        let lib = AssetLibrary::load(&s).unwrap();
        let frame = sample_frame(&s, 3, 0).unwrap();
        let resolved = resolve_instances(&frame, &lib, ShRotation::Exact).unwrap();
        assert_eq!(resolved.instances.len(), 2);
        assert_eq!(resolved.instances[0].instance_id, 0);
        assert_eq!(resolved.instances[1].instance_id, 1);
        assert_eq!(resolved.instances[0].cloud.len(), 200);
        assert_eq!(resolved.instances[1].cloud.len(), 200);

        let empty = FrameScene {
            instances: vec![],
            ..frame.clone()
        };
        assert!(resolve_instances(&empty, &lib, ShRotation::Exact).unwrap().instances.is_empty());

        let mut missing = frame;
        missing.instances[0].asset_id = "nope".into();
        assert!(matches!(resolve_instances(&missing, &lib, ShRotation::Exact), Err(Error::Lookup(_))));
    }

    #[test]
    fn field_markings() {
        let f = FieldSpec::default();
        assert_eq!(ground_color(&f, 0.0, 0.0), Some(f.line_color));
        assert_eq!(ground_color(&f, 4.5, 1.0), Some(f.line_color));
        assert_ne!(ground_color(&f, 2.0, 1.0), Some(f.line_color));
        assert_eq!(ground_color(&f, 6.0, 0.0), None);
    }
}
