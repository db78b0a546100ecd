//! Query-conditioned camera synthesis.
//!
//! Surround mode places `K` cameras on a ring around an object's bounding
//! sphere, far enough that the whole sphere fits the view frustum. Directional
//! mode puts a single camera on the source sphere, facing the target.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::scene::BoundingSphere;

#[derive(Debug, Error, PartialEq)]
pub enum ViewpointError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("elevation {0} rad collapses every pose onto the up axis")]
    DegenerateElevation(f64),
    #[error("zero-radius sphere gives zero camera distance")]
    DegenerateSphere,
    #[error("degenerate anchors: {0}")]
    DegenerateAnchors(String),
}

pub type Result<T, E = ViewpointError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    /// Vertical field of view, radians.
    pub fov_v: f64,
    /// Width / height.
    pub aspect: f64,
    /// Near clipping distance, meters.
    pub near: f64,
}

impl CameraIntrinsics {
    pub fn new(fov_v: f64, aspect: f64, near: f64) -> Result<Self> {
        let c = CameraIntrinsics {
            fov_v,
            aspect,
            near,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fov_v > 0.0 && self.fov_v < std::f64::consts::PI) {
            return Err(ViewpointError::Domain(format!(
                "fov_v {} outside (0, pi)",
                self.fov_v
            )));
        }
        if !(self.aspect > 0.0 && self.aspect.is_finite()) {
            return Err(ViewpointError::Domain(format!("aspect {}", self.aspect)));
        }
        if !(self.near > 0.0 && self.near.is_finite()) {
            return Err(ViewpointError::Domain(format!("near {}", self.near)));
        }
        Ok(())
    }

    pub fn half_fov(&self) -> Result<f64> {
        effective_half_fov(self.fov_v, self.aspect)
    }
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        CameraIntrinsics {
            fov_v: 90f64.to_radians(),
            aspect: 1.0,
            near: 0.01,
        }
    }
}

/// Camera position with an orthonormal forward/up frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraPose {
    pub position: Vec3,
    pub forward: Vec3,
    pub up: Vec3,
}

impl CameraPose {
    /// Build a pose looking along `forward`, resolving the camera up vector
    /// from `world_up`. Falls back to +X when `forward` is (nearly) parallel
    /// to `world_up`.
    pub fn look_along(position: Vec3, forward: Vec3, world_up: Vec3) -> CameraPose {
        let forward = forward.normalize();
        let mut right = forward.cross(world_up);
        if right.length() < 1e-6 {
            right = forward.cross(Vec3::X);
            if right.length() < 1e-6 {
                right = forward.cross(Vec3::Z);
            }
        }
        let right = right.normalize();
        let up = right.cross(forward).normalize();
        CameraPose {
            position,
            forward,
            up,
        }
    }

    pub fn look_at(position: Vec3, target: Vec3, world_up: Vec3) -> CameraPose {
        CameraPose::look_along(position, target - position, world_up)
    }

    pub fn right(&self) -> Vec3 {
        self.forward.cross(self.up)
    }

    /// True if forward and up are unit and mutually orthogonal within `tol`.
    pub fn is_orthonormal(&self, tol: f64) -> bool {
        (self.forward.length() - 1.0).abs() <= tol
            && (self.up.length() - 1.0).abs() <= tol
            && self.forward.dot(self.up).abs() <= tol
    }
}

/// Rendering mode chosen for a question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderMode {
    Surround,
    Directional,
}

/// Object anchors; the arity is tied to the mode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Anchors {
    Surround {
        object_id: String,
    },
    Directional {
        source_id: String,
        target_id: String,
    },
}

impl Anchors {
    pub fn mode(&self) -> RenderMode {
        match self {
            Anchors::Surround { .. } => RenderMode::Surround,
            Anchors::Directional { .. } => RenderMode::Directional,
        }
    }

    pub fn ids(&self) -> Vec<&str> {
        match self {
            Anchors::Surround { object_id } => vec![object_id],
            Anchors::Directional {
                source_id,
                target_id,
            } => vec![source_id, target_id],
        }
    }
}

/// Ring parameters for surround rendering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurroundParams {
    /// Distance scale over the frustum-fit minimum, ≥ 1.
    pub alpha: f64,
    /// Number of views, ≥ 1.
    pub views: usize,
    /// Elevation above the horizontal plane, radians.
    pub elevation: f64,
}

impl Default for SurroundParams {
    fn default() -> Self {
        SurroundParams {
            alpha: 1.5,
            views: 8,
            elevation: 20f64.to_radians(),
        }
    }
}

/// A fully specified rendering request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderSpec {
    pub anchors: Anchors,
    pub alpha: f64,
    pub views: usize,
    pub elevation: f64,
}

impl RenderSpec {
    pub fn new(anchors: Anchors, params: SurroundParams) -> Result<Self> {
        if params.alpha.is_nan() || params.alpha < 1.0 {
            return Err(ViewpointError::Domain(format!(
                "alpha {} < 1",
                params.alpha
            )));
        }
        if params.views == 0 {
            return Err(ViewpointError::Domain("view count must be ≥ 1".into()));
        }
        if params.elevation.is_nan() || params.elevation.abs() > FRAC_PI_2 {
            return Err(ViewpointError::Domain(format!(
                "elevation {} outside [-pi/2, pi/2]",
                params.elevation
            )));
        }
        Ok(RenderSpec {
            anchors,
            alpha: params.alpha,
            views: params.views,
            elevation: params.elevation,
        })
    }

    pub fn mode(&self) -> RenderMode {
        self.anchors.mode()
    }

    pub fn surround_params(&self) -> SurroundParams {
        SurroundParams {
            alpha: self.alpha,
            views: self.views,
            elevation: self.elevation,
        }
    }

    /// Number of poses this spec produces.
    pub fn pose_count(&self) -> usize {
        match self.mode() {
            RenderMode::Surround => self.views,
            RenderMode::Directional => 1,
        }
    }
}

/// The tighter of the vertical and aspect-derived horizontal half angles.
pub fn effective_half_fov(fov_v: f64, aspect: f64) -> Result<f64> {
    if !(fov_v > 0.0 && fov_v < std::f64::consts::PI) {
        return Err(ViewpointError::Domain(format!(
            "fov_v {fov_v} outside (0, pi)"
        )));
    }
    if !(aspect > 0.0 && aspect.is_finite()) {
        return Err(ViewpointError::Domain(format!(
            "aspect {aspect} must be > 0"
        )));
    }
    let half_v = fov_v / 2.0;
    let half_h = (half_v.tan() * aspect).atan();
    Ok(half_v.min(half_h))
}

/// Distance at which a sphere of `radius` exactly fills a cone of half-angle `beta`.
pub fn min_camera_distance(radius: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta <= FRAC_PI_2) {
        return Err(ViewpointError::Domain(format!(
            "beta {beta} outside (0, pi/2]"
        )));
    }
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(ViewpointError::Domain(format!("radius {radius}")));
    }
    if radius == 0.0 {
        return Ok(0.0);
    }
    Ok(radius / beta.sin())
}

/// Orthonormal basis `(p, q)` of the plane orthogonal to `up`.
///
/// `p` is +X projected onto the plane (or +Z when +X is parallel to `up`);
/// `q = p × up`, which gives `q = +Z` for the default `up = +Y`.
pub fn horizontal_basis(up: Vec3) -> (Vec3, Vec3) {
    let up = up.normalize();
    let project = |v: Vec3| v - up * v.dot(up);
    let p = project(Vec3::X)
        .try_normalize()
        .filter(|_| project(Vec3::X).length() > 1e-6)
        .unwrap_or_else(|| project(Vec3::Z).normalize());
    let q = p.cross(up).normalize();
    (p, q)
}

/// Camera distance for a surround ring around `sphere`.
pub fn surround_distance(
    sphere: &BoundingSphere,
    intrinsics: &CameraIntrinsics,
    alpha: f64,
) -> Result<f64> {
    let beta = effective_half_fov(intrinsics.fov_v, intrinsics.aspect)?;
    Ok(alpha * min_camera_distance(sphere.radius, beta)?)
}

/// `K` poses evenly spaced in azimuth at fixed elevation, each looking at the
/// sphere center.
pub fn surround_poses(
    sphere: &BoundingSphere,
    intrinsics: &CameraIntrinsics,
    params: SurroundParams,
    up: Vec3,
) -> Result<Vec<CameraPose>> {
    let SurroundParams {
        alpha,
        views,
        elevation,
    } = params;
    if views == 0 {
        return Err(ViewpointError::Domain("view count must be ≥ 1".into()));
    }
    if !(alpha >= 1.0 && alpha.is_finite()) {
        return Err(ViewpointError::Domain(format!("alpha {alpha} < 1")));
    }
    if !elevation.is_finite() || elevation.abs() >= FRAC_PI_2 {
        return Err(ViewpointError::DegenerateElevation(elevation));
    }
    let distance = surround_distance(sphere, intrinsics, alpha)?;
    if distance == 0.0 {
        return Err(ViewpointError::DegenerateSphere);
    }
    let up = up.normalize();
    let (p, q) = horizontal_basis(up);
    let (sin_e, cos_e) = elevation.sin_cos();
    Ok((0..views)
        .map(|i| {
            let theta = std::f64::consts::TAU * i as f64 / views as f64;
            let (s, c) = theta.sin_cos();
            let offset = ((p * c + q * s) * cos_e + up * sin_e).normalize();
            let position = sphere.center + offset * distance;
            CameraPose::look_along(position, -offset, up)
        })
        .collect())
}

/// Camera on the surface of `source` at the point nearest `target_center`,
/// looking at the target.
pub fn directional_pose(
    source: &BoundingSphere,
    target_center: Vec3,
    up: Vec3,
) -> Result<CameraPose> {
    let delta = target_center - source.center;
    let dist = delta.length();
    if dist.is_nan() || dist <= source.radius || dist == 0.0 {
        return Err(ViewpointError::DegenerateAnchors(format!(
            "target at distance {dist} is not outside the source sphere of radius {}",
            source.radius
        )));
    }
    let u = delta / dist;
    let position = source.center + u * source.radius;
    Ok(CameraPose::look_along(position, u, up))
}
