//! Tile-based splat rasteriser.
//!
//! Pipeline: project -> cull -> depth sort -> bin into tiles -> front-to-back
//! alpha compositing per tile. Every pixel belongs to exactly one tile and a
//! tile's blend order is fixed by the global `(depth, index)` sort, so the
//! output is bit-identical regardless of how tiles are scheduled.
//!
//! Each Gaussian is evaluated only inside its `footprint_sigma` ellipse. That
//! is the same region used for binning, so the binned result equals a naive
//! per-pixel evaluation over all splats.

use nalgebra::{Matrix2, Vector2, Vector3};
use rayon::prelude::*;

use crate::camera::{project_gaussian, world_to_camera, Camera, Splat2D};
use crate::error::{Error, Result};
use crate::splat::{evaluate_sh, SplatCloud};

/// Determinant below which a screen-space covariance is treated as singular.
pub const SINGULAR_DET: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterConfig {
    pub tile_size: usize,
    /// Blend contributions below this are skipped; splats with lower
    /// opacity are culled.
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// Compositing stops once transmittance falls below this.
    pub min_transmittance: f64,
    pub footprint_sigma: f64,
}

impl Default for RasterConfig {
    fn default() -> Self {
        Self {
            tile_size: 16,
            alpha_min: 1.0 / 255.0,
            alpha_max: 0.99,
            min_transmittance: 1e-4,
            footprint_sigma: 3.0,
        }
    }
}

/// What shows through where splats leave transmittance.
#[derive(Debug, Clone, PartialEq)]
pub enum Backdrop {
    Solid([f64; 3]),
    /// Row-major linear RGB at render resolution.
    Image {
        width: usize,
        height: usize,
        pixels: Vec<[f64; 3]>,
    },
}

impl Backdrop {
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> [f64; 3] {
        match self {
            Backdrop::Solid(c) => *c,
            Backdrop::Image { width, pixels, .. } => pixels[y * width + x],
        }
    }

    fn check(&self, width: usize, height: usize) -> Result<()> {
        match self {
            Backdrop::Image {
                width: w,
                height: h,
                pixels,
            } if *w != width || *h != height || pixels.len() != width * height => Err(Error::Contract(format!(
                "backdrop {w}x{h} does not match render target {width}x{height}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Per-pixel weight plane, e.g. an instance mask.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl WeightMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

/// Accumulated blend weight of one instance over the pixel rectangle its
/// splats can reach.
#[derive(Debug, Clone, PartialEq)]
pub struct InstancePlane {
    pub instance_id: u32,
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
    pub weights: Vec<f64>,
}

impl InstancePlane {
    #[inline]
    fn get(&self, x: usize, y: usize) -> f64 {
        if x < self.x0 || y < self.y0 || x >= self.x0 + self.width || y >= self.y0 + self.height {
            0.0
        } else {
            self.weights[(y - self.y0) * self.width + (x - self.x0)]
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RenderStats {
    pub projected: usize,
    pub visible: usize,
    pub skipped_singular: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderTarget {
    pub width: usize,
    pub height: usize,
    /// Linear RGB in `[0, 1]`.
    pub color: Vec<[f64; 3]>,
    /// Accumulated opacity, `1 - transmittance`.
    pub alpha: Vec<f64>,
    pub transmittance: Vec<f64>,
    /// Sorted by instance id.
    pub planes: Vec<InstancePlane>,
    pub stats: RenderStats,
}

impl RenderTarget {
    fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            color: vec![[0.0; 3]; width * height],
            alpha: vec![0.0; width * height],
            transmittance: vec![1.0; width * height],
            planes: Vec::new(),
            stats: RenderStats::default(),
        }
    }

    pub fn instance_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.planes.iter().map(|p| p.instance_id)
    }

    /// Blend weight of `instance_id` at pixel `(x, y)`; 0 where it does not
    /// contribute.
    pub fn instance_weight(&self, instance_id: u32, x: usize, y: usize) -> f64 {
        self.plane(instance_id).map_or(0.0, |p| p.get(x, y))
    }

    fn plane(&self, instance_id: u32) -> Option<&InstancePlane> {
        self.planes
            .binary_search_by_key(&instance_id, |p| p.instance_id)
            .ok()
            .map(|i| &self.planes[i])
    }

    /// Full-resolution weight map of one instance (all zeros if it never
    /// contributed).
    pub fn instance_mask(&self, instance_id: u32) -> WeightMap {
        let mut map = WeightMap::zeros(self.width, self.height);
        if let Some(p) = self.plane(instance_id) {
            for y in 0..p.height {
                let src = &p.weights[y * p.width..(y + 1) * p.width];
                let row = (p.y0 + y) * self.width + p.x0;
                map.data[row..row + p.width].copy_from_slice(src);
            }
        }
        map
    }

    pub fn alpha_map(&self) -> WeightMap {
        WeightMap {
            width: self.width,
            height: self.height,
            data: self.alpha.clone(),
        }
    }
}

/// Culled splat with its inverse covariance and footprint extents.
#[derive(Debug, Clone, Copy)]
pub struct PreparedSplat {
    pub index: usize,
    pub mean: Vector2<f64>,
    /// Upper triangle `(a, b, c)` of the inverse 2D covariance.
    pub conic: [f64; 3],
    pub depth: f64,
    pub color: [f64; 3],
    pub alpha: f64,
    pub instance_id: u32,
    /// Footprint bounding box `(x0, y0, x1, y1)` in continuous pixel units.
    pub extent: [f64; 4],
}

fn inverse_conic(cov: &Matrix2<f64>) -> Option<[f64; 3]> {
    let (a, b, c) = (cov[(0, 0)], 0.5 * (cov[(0, 1)] + cov[(1, 0)]), cov[(1, 1)]);
    let det = a * c - b * b;
    if !(det >= SINGULAR_DET) || !det.is_finite() {
        return None;
    }
    let inv = 1.0 / det;
    Some([c * inv, -b * inv, a * inv])
}

#[inline]
fn mahalanobis_sq(conic: &[f64; 3], dx: f64, dy: f64) -> f64 {
    conic[0] * dx * dx + 2.0 * conic[1] * dx * dy + conic[2] * dy * dy
}

/// Does the ellipse `{d : d^T conic d <= r2}` around `mean` touch the closed
/// rectangle `[x0, x1] x [y0, y1]`?
pub fn ellipse_intersects_rect(mean: &Vector2<f64>, conic: &[f64; 3], r2: f64, rect: [f64; 4]) -> bool {
    let [x0, y0, x1, y1] = rect;
    if mean.x >= x0 && mean.x <= x1 && mean.y >= y0 && mean.y <= y1 {
        return true;
    }
    // The quadratic is convex, so its minimum over the rectangle lies on an edge.
    let edges = [
        ((x0, y0), (x1, y0)),
        ((x0, y1), (x1, y1)),
        ((x0, y0), (x0, y1)),
        ((x1, y0), (x1, y1)),
    ];
    edges.iter().any(|&((ax, ay), (bx, by))| {
        let (dx, dy) = (ax - mean.x, ay - mean.y);
        let (ex, ey) = (bx - ax, by - ay);
        let ee = mahalanobis_sq(conic, ex, ey);
        let de = conic[0] * dx * ex + conic[1] * (dx * ey + dy * ex) + conic[2] * dy * ey;
        let t = if ee > 0.0 { (-de / ee).clamp(0.0, 1.0) } else { 0.0 };
        mahalanobis_sq(conic, dx + t * ex, dy + t * ey) <= r2
    })
}

fn prepare(index: usize, s: &Splat2D, conic: [f64; 3], sigma: f64) -> PreparedSplat {
    let hx = sigma * s.cov2d[(0, 0)].sqrt();
    let hy = sigma * s.cov2d[(1, 1)].sqrt();
    PreparedSplat {
        index,
        mean: s.mean2d,
        conic,
        depth: s.depth,
        color: s.color,
        alpha: s.alpha,
        instance_id: s.instance_id,
        extent: [s.mean2d.x - hx, s.mean2d.y - hy, s.mean2d.x + hx, s.mean2d.y + hy],
    }
}

/// Indices of splats that can affect the `width x height` viewport: depth in
/// `(near, far)`, opacity above the blend floor, non-singular covariance and
/// a footprint ellipse touching the image rectangle.
pub fn cull_frustum(
    splats: &[Splat2D],
    width: usize,
    height: usize,
    near: f64,
    far: f64,
    cfg: &RasterConfig,
) -> Vec<usize> {
    let r2 = cfg.footprint_sigma * cfg.footprint_sigma;
    let viewport = [0.0, 0.0, width as f64, height as f64];
    splats
        .iter()
        .enumerate()
        .filter(|(_, s)| s.depth > near && s.depth < far && s.alpha > cfg.alpha_min)
        .filter_map(|(i, s)| {
            let conic = inverse_conic(&s.cov2d)?;
            ellipse_intersects_rect(&s.mean2d, &conic, r2, viewport).then_some(i)
        })
        .collect()
}

/// Order `indices` by ascending depth; equal depths keep ascending index.
pub fn sort_by_depth(splats: &[Splat2D], indices: &[usize]) -> Vec<usize> {
    let mut out = indices.to_vec();
    out.sort_by(|&a, &b| splats[a].depth.total_cmp(&splats[b].depth).then(a.cmp(&b)));
    out
}

/// Per-tile lists of splat positions (into the prepared, depth-sorted list).
#[derive(Debug, Clone)]
pub struct TileGrid {
    pub tile_size: usize,
    pub tiles_x: usize,
    pub tiles_y: usize,
    pub lists: Vec<Vec<u32>>,
}

impl TileGrid {
    pub fn build(splats: &[PreparedSplat], width: usize, height: usize, cfg: &RasterConfig) -> Self {
        let ts = cfg.tile_size.max(1);
        let tiles_x = width.div_ceil(ts);
        let tiles_y = height.div_ceil(ts);
        let r2 = cfg.footprint_sigma * cfg.footprint_sigma;
        let mut lists = vec![Vec::new(); tiles_x * tiles_y];
        if tiles_x == 0 || tiles_y == 0 {
            return Self {
                tile_size: ts,
                tiles_x,
                tiles_y,
                lists,
            };
        }
        let tile_index = |v: f64, n: usize| ((v / ts as f64).floor().max(0.0) as usize).min(n - 1);
        for (pos, s) in splats.iter().enumerate() {
            let [ex0, ey0, ex1, ey1] = s.extent;
            for ty in tile_index(ey0, tiles_y)..=tile_index(ey1, tiles_y) {
                for tx in tile_index(ex0, tiles_x)..=tile_index(ex1, tiles_x) {
                    let rect = Self::rect_of(ts, tx, ty, width, height);
                    if ellipse_intersects_rect(&s.mean, &s.conic, r2, rect) {
                        lists[ty * tiles_x + tx].push(pos as u32);
                    }
                }
            }
        }
        Self {
            tile_size: ts,
            tiles_x,
            tiles_y,
            lists,
        }
    }

    fn rect_of(ts: usize, tx: usize, ty: usize, width: usize, height: usize) -> [f64; 4] {
        [
            (tx * ts) as f64,
            (ty * ts) as f64,
            ((tx + 1) * ts).min(width) as f64,
            ((ty + 1) * ts).min(height) as f64,
        ]
    }

    /// Tile rectangle `(x0, y0, x1, y1)` in pixel units, clipped to the image.
    pub fn tile_rect(&self, tile: usize, width: usize, height: usize) -> [f64; 4] {
        Self::rect_of(self.tile_size, tile % self.tiles_x, tile / self.tiles_x, width, height)
    }
}

/// Pixel range of one tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileRegion {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

/// Output of compositing one tile.
#[derive(Debug, Clone)]
pub struct TileResult {
    pub region: TileRegion,
    pub color: Vec<[f64; 3]>,
    pub transmittance: Vec<f64>,
    /// `(instance_id, weights over the region)`.
    pub instances: Vec<(u32, Vec<f64>)>,
}

/// Front-to-back compositing of depth-ordered splats over one tile region.
pub fn blend_tile(
    splats: &[PreparedSplat],
    order: &[u32],
    region: TileRegion,
    backdrop: &Backdrop,
    cfg: &RasterConfig,
) -> TileResult {
    let n = region.width * region.height;
    let r2 = cfg.footprint_sigma * cfg.footprint_sigma;
    let mut color = vec![[0.0; 3]; n];
    let mut transmittance = vec![1.0; n];
    let mut instances: Vec<(u32, Vec<f64>)> = Vec::new();
    for ly in 0..region.height {
        let y = region.y0 + ly;
        let py = y as f64 + 0.5;
        for lx in 0..region.width {
            let x = region.x0 + lx;
            let px = x as f64 + 0.5;
            let k = ly * region.width + lx;
            let mut t = 1.0;
            let mut c = [0.0; 3];
            for &pos in order {
                let s = &splats[pos as usize];
                let q = mahalanobis_sq(&s.conic, px - s.mean.x, py - s.mean.y);
                if q > r2 {
                    continue;
                }
                let a = (s.alpha * (-0.5 * q).exp()).min(cfg.alpha_max);
                if a < cfg.alpha_min {
                    continue;
                }
                let w = t * a;
                for ch in 0..3 {
                    c[ch] += w * s.color[ch];
                }
                let slot = match instances.iter().position(|(id, _)| *id == s.instance_id) {
                    Some(i) => i,
                    None => {
                        instances.push((s.instance_id, vec![0.0; n]));
                        instances.len() - 1
                    }
                };
                instances[slot].1[k] += w;
                t *= 1.0 - a;
                if t < cfg.min_transmittance {
                    break;
                }
            }
            let bg = backdrop.at(x, y);
            for ch in 0..3 {
                c[ch] += t * bg[ch];
            }
            color[k] = c;
            transmittance[k] = t;
        }
    }
    TileResult {
        region,
        color,
        transmittance,
        instances,
    }
}

/// Project every Gaussian of the given world-space instances. Splats at or
/// behind the near plane are dropped here.
pub fn project_splats(instances: &[(u32, &SplatCloud)], camera: &Camera) -> Vec<Splat2D> {
    let rot = camera.pose.camera_from_world();
    let eye: Vector3<f64> = camera.pose.position;
    let mut out = Vec::new();
    for (id, cloud) in instances {
        let degree = cloud.sh_degree();
        let projected: Vec<Splat2D> = cloud
            .gaussians()
            .par_iter()
            .filter_map(|g| {
                let mean_cam = world_to_camera(&camera.pose, &g.mean);
                let cov_cam = rot * g.covariance() * rot.transpose();
                let geo = project_gaussian(&camera.intrinsics, &mean_cam, &cov_cam)?;
                let dir = g.mean - eye;
                let norm = dir.norm();
                let dir = if norm > 0.0 { dir / norm } else { Vector3::z() };
                let color = evaluate_sh(&g.sh, &dir, degree).ok()?;
                Some(Splat2D {
                    mean2d: geo.mean2d,
                    cov2d: geo.cov2d,
                    depth: geo.depth,
                    color,
                    alpha: g.opacity,
                    instance_id: *id,
                })
            })
            .collect();
        out.extend(projected);
    }
    out
}

/// Composite screen-space splats into a new render target.
pub fn rasterize(
    splats: &[Splat2D],
    width: usize,
    height: usize,
    near: f64,
    far: f64,
    backdrop: &Backdrop,
    exposure: f64,
    cfg: &RasterConfig,
) -> Result<RenderTarget> {
    backdrop.check(width, height)?;
    let depth_ok = splats
        .iter()
        .filter(|s| s.depth > near && s.depth < far && s.alpha > cfg.alpha_min)
        .count();
    let visible = cull_frustum(splats, width, height, near, far, cfg);
    let singular = depth_ok
        - splats
            .iter()
            .filter(|s| s.depth > near && s.depth < far && s.alpha > cfg.alpha_min)
            .filter(|s| inverse_conic(&s.cov2d).is_some())
            .count();
    let ordered = sort_by_depth(splats, &visible);
    let prepared: Vec<PreparedSplat> = ordered
        .iter()
        .map(|&i| {
            let conic = inverse_conic(&splats[i].cov2d).expect("culled splats are non-singular");
            prepare(i, &splats[i], conic, cfg.footprint_sigma)
        })
        .collect();
    let grid = TileGrid::build(&prepared, width, height, cfg);

    let results: Vec<TileResult> = (0..grid.lists.len())
        .into_par_iter()
        .map(|tile| {
            let ts = grid.tile_size;
            let (tx, ty) = (tile % grid.tiles_x, tile / grid.tiles_x);
            let region = TileRegion {
                x0: tx * ts,
                y0: ty * ts,
                width: ts.min(width - tx * ts),
                height: ts.min(height - ty * ts),
            };
            blend_tile(&prepared, &grid.lists[tile], region, backdrop, cfg)
        })
        .collect();

    let mut target = RenderTarget::new(width, height);
    target.stats = RenderStats {
        projected: splats.len(),
        visible: prepared.len(),
        skipped_singular: singular,
    };
    target.planes = instance_planes(&prepared, width, height);
    for tile in &results {
        let r = tile.region;
        for ly in 0..r.height {
            for lx in 0..r.width {
                let k = ly * r.width + lx;
                let idx = (r.y0 + ly) * width + r.x0 + lx;
                target.color[idx] = tile.color[k].map(|v| (v * exposure).clamp(0.0, 1.0));
                target.transmittance[idx] = tile.transmittance[k];
                target.alpha[idx] = 1.0 - tile.transmittance[k];
            }
        }
        for (id, weights) in &tile.instances {
            let i = target
                .planes
                .binary_search_by_key(id, |p| p.instance_id)
                .expect("every contributing instance has a plane");
            let plane = &mut target.planes[i];
            for ly in 0..r.height {
                for lx in 0..r.width {
                    let w = weights[ly * r.width + lx];
                    if w != 0.0 {
                        let (x, y) = (r.x0 + lx, r.y0 + ly);
                        plane.weights[(y - plane.y0) * plane.width + (x - plane.x0)] = w;
                    }
                }
            }
        }
    }
    Ok(target)
}

/// One plane per instance, covering the union of its splats' footprints.
fn instance_planes(prepared: &[PreparedSplat], width: usize, height: usize) -> Vec<InstancePlane> {
    let mut bounds: std::collections::BTreeMap<u32, [usize; 4]> = Default::default();
    for s in prepared {
        // pixel centres inside the footprint satisfy x + 0.5 in [x0, x1]
        let clampx = |v: f64| (v.max(0.0) as usize).min(width - 1);
        let clampy = |v: f64| (v.max(0.0) as usize).min(height - 1);
        let b = [
            clampx((s.extent[0] - 0.5).floor()),
            clampy((s.extent[1] - 0.5).floor()),
            clampx((s.extent[2] - 0.5).ceil()),
            clampy((s.extent[3] - 0.5).ceil()),
        ];
        bounds
            .entry(s.instance_id)
            .and_modify(|e| {
                e[0] = e[0].min(b[0]);
                e[1] = e[1].min(b[1]);
                e[2] = e[2].max(b[2]);
                e[3] = e[3].max(b[3]);
            })
            .or_insert(b);
    }
    bounds
        .into_iter()
        .map(|(instance_id, [x0, y0, x1, y1])| {
            let (w, h) = (x1 - x0 + 1, y1 - y0 + 1);
            InstancePlane {
                instance_id,
                x0,
                y0,
                width: w,
                height: h,
                weights: vec![0.0; w * h],
            }
        })
        .collect()
}

/// Project and composite world-space instances seen by `camera`.
pub fn render(
    instances: &[(u32, &SplatCloud)],
    camera: &Camera,
    exposure: f64,
    backdrop: &Backdrop,
    cfg: &RasterConfig,
) -> Result<RenderTarget> {
    let splats = project_splats(instances, camera);
    let i = &camera.intrinsics;
    rasterize(&splats, camera.width(), camera.height(), i.near, i.far, backdrop, exposure, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskMode {
    /// Blend weight from the full render, so occluders reduce it.
    Visible,
    /// Alpha of a render containing only the instance.
    Amodal,
}

pub fn render_instance_mask(
    instances: &[(u32, &SplatCloud)],
    camera: &Camera,
    instance_id: u32,
    mode: MaskMode,
    cfg: &RasterConfig,
) -> Result<WeightMap> {
    let own: Vec<(u32, &SplatCloud)> = instances.iter().filter(|(id, _)| *id == instance_id).copied().collect();
    if own.is_empty() {
        return Err(Error::Lookup(format!("instance {instance_id} is not part of the frame")));
    }
    let black = Backdrop::Solid([0.0; 3]);
    match mode {
        MaskMode::Visible => Ok(render(instances, camera, 1.0, &black, cfg)?.instance_mask(instance_id)),
        MaskMode::Amodal => Ok(render(&own, camera, 1.0, &black, cfg)?.alpha_map()),
    }
}
