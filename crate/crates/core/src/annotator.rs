//! Bounding boxes and visibility from known scene geometry.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::camera::{world_to_camera, Camera};
use crate::error::{Error, Result};
use crate::rasterizer::{render, Backdrop, RasterConfig, RenderTarget, WeightMap};
use crate::scene::ResolvedScene;
use crate::splat::{Aabb3, Similarity};

pub const DEFAULT_MASK_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationMode {
    /// Extent of the projected corners of the asset's 3D bounds.
    #[default]
    Corners,
    /// Extent of the pixels the instance visibly covers.
    Mask,
}

impl FromStr for AnnotationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "corners" => Ok(AnnotationMode::Corners),
            "mask" => Ok(AnnotationMode::Mask),
            other => Err(Error::Config(format!("unknown annotation mode '{other}' (expected corners or mask)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Filters {
    pub min_pixel_area: f64,
    pub min_visibility: f64,
}

impl Default for Filters {
    fn default() -> Self {
        Self {
            min_pixel_area: 25.0,
            min_visibility: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub class_id: u32,
    pub instance_id: u32,
    /// Pixel box clipped to the image.
    pub bbox: BBox,
    /// Visible weight over weight when rendered alone, in `[0, 1]`.
    pub visibility: f64,
    /// The unclipped box crossed the image border.
    pub truncated: bool,
    /// Visible pixels with weight at or above the mask threshold.
    pub pixel_area: u64,
}

/// Project the 8 corners of `bounds` (object frame) through `transform` and
/// take their screen extent. Corners at or behind the near plane are ignored.
/// Returns the clipped box and whether clipping (or a dropped corner) cut it.
pub fn bbox_from_corners(bounds: &Aabb3, transform: &Similarity, camera: &Camera) -> Option<(BBox, bool)> {
    let intr = &camera.intrinsics;
    let mut b: Option<[f64; 4]> = None;
    let mut dropped = false;
    for corner in bounds.corners() {
        let p = world_to_camera(&camera.pose, &transform.apply(&corner));
        if p.z <= intr.near {
            dropped = true;
            continue;
        }
        let (u, v) = (intr.fx * p.x / p.z + intr.cx, intr.fy * p.y / p.z + intr.cy);
        b = Some(match b {
            None => [u, v, u, v],
            Some([x0, y0, x1, y1]) => [x0.min(u), y0.min(v), x1.max(u), y1.max(v)],
        });
    }
    let [x0, y0, x1, y1] = b?;
    let (clipped, truncated) = BBox::new(x0, y0, x1, y1).clip_to(intr.width as f64, intr.height as f64)?;
    Some((clipped, truncated || dropped))
}

/// Tight box around pixels with weight `>= threshold`, in edge coordinates:
/// a single pixel `(u, v)` gives `(u, v, u + 1, v + 1)`.
pub fn bbox_from_mask(mask: &WeightMap, threshold: f64) -> Option<BBox> {
    let mut b: Option<[usize; 4]> = None;
    for y in 0..mask.height {
        let row = &mask.data[y * mask.width..(y + 1) * mask.width];
        let Some(first) = row.iter().position(|w| *w >= threshold) else {
            continue;
        };
        let last = row.iter().rposition(|w| *w >= threshold).unwrap_or(first);
        b = Some(match b {
            None => [first, y, last, y],
            Some([x0, y0, x1, _]) => [x0.min(first), y0, x1.max(last), y],
        });
    }
    let [x0, y0, x1, y1] = b?;
    Some(BBox::new(x0 as f64, y0 as f64, (x1 + 1) as f64, (y1 + 1) as f64))
}

pub fn mask_area(mask: &WeightMap, threshold: f64) -> u64 {
    mask.data.iter().filter(|w| **w >= threshold).count() as u64
}

/// One annotation per instance that survives the filters, sorted by
/// instance id. `render` must be the full render of `scene` through `camera`.
pub fn annotate_frame(
    scene: &ResolvedScene,
    camera: &Camera,
    render_target: &RenderTarget,
    mode: AnnotationMode,
    filters: &Filters,
    mask_threshold: f64,
    cfg: &RasterConfig,
) -> Result<Vec<Annotation>> {
    if render_target.width != camera.width() || render_target.height != camera.height() {
        return Err(Error::Contract(format!(
            "render is {}x{} but the camera is {}x{}",
            render_target.width,
            render_target.height,
            camera.width(),
            camera.height()
        )));
    }
    let black = Backdrop::Solid([0.0; 3]);
    let mut out = Vec::new();
    for inst in &scene.instances {
        let visible = render_target.instance_mask(inst.instance_id);
        let visible_sum = visible.sum();
        let pixel_area = mask_area(&visible, mask_threshold);
        if visible_sum <= 0.0 || (pixel_area as f64) < filters.min_pixel_area {
            continue;
        }
        let alone = render(&[(inst.instance_id, &inst.cloud)], camera, 1.0, &black, cfg)?;
        let amodal_sum = alone.alpha.iter().sum::<f64>();
        let visibility = if amodal_sum > 0.0 {
            (visible_sum / amodal_sum).clamp(0.0, 1.0)
        } else {
            0.0
        };
        if visibility < filters.min_visibility {
            continue;
        }
        let corners = inst
            .object_bounds
            .as_ref()
            .and_then(|b| bbox_from_corners(b, &inst.transform, camera));
        let (bbox, truncated) = match mode {
            AnnotationMode::Corners => match corners {
                Some(c) => c,
                None => continue,
            },
            AnnotationMode::Mask => match bbox_from_mask(&visible, mask_threshold) {
                Some(b) => (b, corners.is_some_and(|(_, t)| t)),
                None => continue,
            },
        };
        if !bbox.is_valid() {
            continue;
        }
        out.push(Annotation {
            class_id: inst.class_id,
            instance_id: inst.instance_id,
            bbox,
            visibility,
            truncated,
            pixel_area,
        });
    }
    out.sort_by_key(|a| a.instance_id);
    Ok(out)
}
