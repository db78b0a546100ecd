//! Deterministic software ray caster.
//!
//! One ray per pixel through the pixel center, nearest watertight
//! ray/triangle hit, headlight Lambert shading. Produces RGB, object-ID and
//! depth buffers. Intersection is brute force with a per-mesh bounding-sphere
//! early-out.

use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{Rgb, Vec3};
use crate::raster::{self, RgbImage};
use crate::scene::SceneState;
use crate::viewpoint::{CameraIntrinsics, CameraPose};

pub const BACKGROUND: Rgb = [40, 40, 40];

/// Depth value written for pixels whose ray hits nothing.
pub const DEPTH_MISS: f64 = f64::MAX;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("image must be at least 1x1, got {0}x{1}")]
    Resolution(usize, usize),
    #[error("ray direction is not unit length (|d| = {0})")]
    NonUnitDirection(f64),
    #[error("invalid camera: {0}")]
    Camera(#[from] crate::viewpoint::ViewpointError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = RenderError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub object_numeric_id: u16,
    pub distance: f64,
    pub shaded_color: Rgb,
}

/// Ignore triangles of `owner` closer than `within` along the ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Skip {
    pub owner: u16,
    pub within: f64,
}

impl Skip {
    pub fn object(owner: u16) -> Self {
        Skip {
            owner,
            within: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RenderedView {
    pub width: usize,
    pub height: usize,
    pub rgb: RgbImage,
    pub ids: Vec<u16>,
    pub depth: Vec<f64>,
    pub pose: CameraPose,
    pub intrinsics: CameraIntrinsics,
}

impl RenderedView {
    /// Number of pixels labelled `numeric_id`.
    pub fn pixel_count_of(&self, numeric_id: u16) -> usize {
        self.ids.iter().filter(|&&id| id == numeric_id).count()
    }

    /// World-space unit direction of the ray through pixel `(x, y)`.
    pub fn pixel_ray(&self, x: usize, y: usize) -> Vec3 {
        Camera::new(&self.pose, &self.intrinsics, self.width, self.height).ray(x, y)
    }
}

struct Camera {
    origin: Vec3,
    forward: Vec3,
    right: Vec3,
    up: Vec3,
    tan_h: f64,
    tan_v: f64,
    width: f64,
    height: f64,
}

impl Camera {
    fn new(pose: &CameraPose, intr: &CameraIntrinsics, width: usize, height: usize) -> Self {
        let tan_v = (intr.fov_v / 2.0).tan();
        let aspect = width as f64 / height as f64;
        Camera {
            origin: pose.position,
            forward: pose.forward,
            right: pose.right(),
            up: pose.up,
            tan_h: tan_v * aspect,
            tan_v,
            width: width as f64,
            height: height as f64,
        }
    }

    fn ray(&self, x: usize, y: usize) -> Vec3 {
        let ndc_x = (x as f64 + 0.5) / self.width * 2.0 - 1.0;
        let ndc_y = 1.0 - (y as f64 + 0.5) / self.height * 2.0;
        (self.forward + self.right * (ndc_x * self.tan_h) + self.up * (ndc_y * self.tan_v))
            .normalize()
    }
}

struct Triangle {
    v: [Vec3; 3],
    normal: Vec3,
}

struct MeshGroup {
    center: Vec3,
    radius: f64,
    owner: u16,
    color: Rgb,
    triangles: Vec<Triangle>,
}

/// Flattened, render-ready copy of a scene's geometry.
pub struct PreparedScene {
    groups: Vec<MeshGroup>,
}

impl PreparedScene {
    pub fn new(scene: &SceneState) -> Self {
        let groups = scene
            .meshes()
            .iter()
            .map(|mesh| {
                let g = &mesh.geometry;
                let (lo, hi) = g.aabb().unwrap_or((Vec3::ZERO, Vec3::ZERO));
                let center = (lo + hi) * 0.5;
                let radius = g
                    .vertices
                    .iter()
                    .map(|&v| v.distance(center))
                    .fold(0.0, f64::max);
                let triangles = g
                    .triangles
                    .iter()
                    .map(|t| {
                        let v = t.map(|i| g.vertices[i as usize]);
                        Triangle {
                            v,
                            normal: (v[1] - v[0]).cross(v[2] - v[0]).normalize(),
                        }
                    })
                    .collect();
                MeshGroup {
                    center,
                    radius: radius * (1.0 + 1e-9) + 1e-12,
                    owner: mesh.owner,
                    color: scene.mesh_color(mesh),
                    triangles,
                }
            })
            .collect();
        PreparedScene { groups }
    }

    /// Nearest hit with distance in `(t_min, ∞)`.
    pub fn cast(&self, origin: Vec3, dir: Vec3, t_min: f64, skip: Option<Skip>) -> Option<RayHit> {
        let ray = WatertightRay::new(origin, dir);
        let mut best_t = f64::INFINITY;
        let mut best: Option<(&MeshGroup, &Triangle)> = None;
        for group in &self.groups {
            // bounding-sphere early-out
            let oc = group.center - origin;
            let tca = oc.dot(dir);
            let d2 = oc.length_squared() - tca * tca;
            let r2 = group.radius * group.radius;
            if d2 > r2 * (1.0 + 1e-9) || tca + group.radius <= t_min || tca - group.radius >= best_t
            {
                continue;
            }
            let skip_within = match skip {
                Some(s) if s.owner == group.owner => s.within,
                _ => f64::NEG_INFINITY,
            };
            for tri in &group.triangles {
                if let Some(t) = ray.intersect(&tri.v) {
                    if t > t_min && t < best_t && t >= skip_within {
                        best_t = t;
                        best = Some((group, tri));
                    }
                }
            }
        }
        best.map(|(group, tri)| {
            let lambert = (-dir.dot(tri.normal)).max(0.0);
            RayHit {
                object_numeric_id: group.owner,
                distance: best_t,
                shaded_color: group.color.map(|c| (f64::from(c) * lambert).round() as u8),
            }
        })
    }
}

/// Ray pre-transformed for the watertight ray/triangle test: the dominant
/// direction axis becomes z and the ray is sheared onto +z.
struct WatertightRay {
    origin: Vec3,
    kx: usize,
    ky: usize,
    kz: usize,
    sx: f64,
    sy: f64,
    sz: f64,
}

impl WatertightRay {
    fn new(origin: Vec3, dir: Vec3) -> Self {
        let a = dir.abs();
        let kz = if a.x >= a.y && a.x >= a.z {
            0
        } else if a.y >= a.z {
            1
        } else {
            2
        };
        let mut kx = (kz + 1) % 3;
        let mut ky = (kx + 1) % 3;
        if dir.axis(kz) < 0.0 {
            std::mem::swap(&mut kx, &mut ky);
        }
        let dz = dir.axis(kz);
        WatertightRay {
            origin,
            kx,
            ky,
            kz,
            sx: dir.axis(kx) / dz,
            sy: dir.axis(ky) / dz,
            sz: 1.0 / dz,
        }
    }

    /// Signed distance along the ray, double-sided.
    fn intersect(&self, v: &[Vec3; 3]) -> Option<f64> {
        let a = v[0] - self.origin;
        let b = v[1] - self.origin;
        let c = v[2] - self.origin;
        let (az, bz, cz) = (a.axis(self.kz), b.axis(self.kz), c.axis(self.kz));
        let ax = a.axis(self.kx) - self.sx * az;
        let ay = a.axis(self.ky) - self.sy * az;
        let bx = b.axis(self.kx) - self.sx * bz;
        let by = b.axis(self.ky) - self.sy * bz;
        let cx = c.axis(self.kx) - self.sx * cz;
        let cy = c.axis(self.ky) - self.sy * cz;
        let u = cx * by - cy * bx;
        let v = ax * cy - ay * cx;
        let w = bx * ay - by * ax;
        if (u < 0.0 || v < 0.0 || w < 0.0) && (u > 0.0 || v > 0.0 || w > 0.0) {
            return None;
        }
        let det = u + v + w;
        if det == 0.0 {
            return None;
        }
        let t = (u * az + v * bz + w * cz) * self.sz;
        Some(t / det)
    }
}

fn check_unit(dir: Vec3) -> Result<()> {
    let len = dir.length();
    if (len - 1.0).abs() > 1e-9 {
        return Err(RenderError::NonUnitDirection(len));
    }
    Ok(())
}

/// Nearest hit along a unit ray, ignoring triangles owned by `skip_object`.
pub fn ray_cast(
    scene: &SceneState,
    origin: Vec3,
    direction: Vec3,
    skip_object: Option<u16>,
) -> Result<Option<RayHit>> {
    ray_cast_with(
        &PreparedScene::new(scene),
        origin,
        direction,
        skip_object.map(Skip::object),
    )
}

/// Like [`ray_cast`] over a prepared scene, with a distance-limited skip.
pub fn ray_cast_with(
    prepared: &PreparedScene,
    origin: Vec3,
    direction: Vec3,
    skip: Option<Skip>,
) -> Result<Option<RayHit>> {
    check_unit(direction)?;
    Ok(prepared.cast(origin, direction, 0.0, skip))
}

pub fn render(
    scene: &SceneState,
    pose: &CameraPose,
    intrinsics: &CameraIntrinsics,
    width: usize,
    height: usize,
) -> Result<RenderedView> {
    render_with(
        &PreparedScene::new(scene),
        pose,
        intrinsics,
        width,
        height,
        None,
    )
}

/// Render over a prepared scene with an optional source-object skip.
pub fn render_with(
    prepared: &PreparedScene,
    pose: &CameraPose,
    intrinsics: &CameraIntrinsics,
    width: usize,
    height: usize,
    skip: Option<Skip>,
) -> Result<RenderedView> {
    if width == 0 || height == 0 {
        return Err(RenderError::Resolution(width, height));
    }
    let intrinsics = CameraIntrinsics {
        aspect: width as f64 / height as f64,
        ..*intrinsics
    };
    intrinsics.validate()?;
    let cam = Camera::new(pose, &intrinsics, width, height);
    let near = intrinsics.near;

    let rows: Vec<Vec<Option<RayHit>>> = (0..height)
        .into_par_iter()
        .map(|y| {
            (0..width)
                .map(|x| prepared.cast(cam.origin, cam.ray(x, y), near, skip))
                .collect()
        })
        .collect();

    let n = width * height;
    let mut rgb = RgbImage::new(width, height);
    let mut ids = Vec::with_capacity(n);
    let mut depth = Vec::with_capacity(n);
    for (p, hit) in rows.into_iter().flatten().enumerate() {
        match hit {
            Some(h) => {
                rgb.data[3 * p..3 * p + 3].copy_from_slice(&h.shaded_color);
                ids.push(h.object_numeric_id);
                depth.push(h.distance);
            }
            None => {
                rgb.data[3 * p..3 * p + 3].copy_from_slice(&BACKGROUND);
                ids.push(0);
                depth.push(DEPTH_MISS);
            }
        }
    }
    Ok(RenderedView {
        width,
        height,
        rgb,
        ids,
        depth,
        pose: *pose,
        intrinsics,
    })
}

/// `view_{index:02}.ppm` and `view_{index:02}.ids.pgm`.
pub fn view_file_names(index: usize) -> (String, String) {
    (
        format!("view_{index:02}.ppm"),
        format!("view_{index:02}.ids.pgm"),
    )
}

pub fn write_view(view: &RenderedView, rgb_path: &Path, id_path: &Path) -> Result<()> {
    raster::write_ppm(rgb_path, &view.rgb)?;
    raster::write_pgm16(id_path, view.width, view.height, &view.ids)?;
    Ok(())
}
