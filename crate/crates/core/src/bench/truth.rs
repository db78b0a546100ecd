//! Visibility ground truth by ray sampling, independent of the pipeline's
//! camera synthesis and pixel threshold.

use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::render::{PreparedScene, Skip};
use crate::scene::ObjectRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VisibilityTruthConfig {
    /// Rays per item, stratified over the target hemisphere.
    pub rays: usize,
    /// Minimum unoccluded fraction for "yes".
    pub tau: f64,
    /// Items with a fraction in `(0, tau + margin)` are ambiguous.
    pub margin: f64,
    /// Source-owned triangles closer than twice this are ignored.
    pub near: f64,
}

impl Default for VisibilityTruthConfig {
    fn default() -> Self {
        VisibilityTruthConfig {
            rays: 512,
            tau: 0.02,
            margin: 0.15,
            near: 0.01,
        }
    }
}

/// `rays` points on the hemisphere of the sphere `(center, radius)` facing
/// `toward`, one per equal-area cell (bands of constant height times equal
/// azimuth sectors), at the cell centers.
pub fn sample_hemisphere(center: Vec3, radius: f64, toward: Vec3, rays: usize) -> Vec<Vec3> {
    let w = (toward - center).normalize();
    let helper = if w.x.abs() < 0.9 { Vec3::X } else { Vec3::Z };
    let a = w.cross(helper).normalize();
    let b = w.cross(a);
    let bands = ((rays as f64 / 2.0).sqrt().round() as usize).max(1);
    let sectors = (rays / bands).max(1);
    let mut out = Vec::with_capacity(bands * sectors);
    for j in 0..bands {
        // uniform height on a hemisphere is uniform area
        let z = (j as f64 + 0.5) / bands as f64;
        let ring = (1.0 - z * z).sqrt();
        for i in 0..sectors {
            let phi = std::f64::consts::TAU * (i as f64 + 0.5) / sectors as f64;
            let d = a * (ring * phi.cos()) + b * (ring * phi.sin()) + w * z;
            out.push(center + d * radius);
        }
    }
    out
}

/// Fraction of hemisphere rays from the source's viewing position whose
/// first hit is the target.
pub fn visible_fraction(
    prepared: &PreparedScene,
    source: &ObjectRecord,
    target: &ObjectRecord,
    config: &VisibilityTruthConfig,
) -> f64 {
    let u = (target.sphere.center - source.sphere.center).normalize();
    let eye = source.sphere.center + u * source.sphere.radius;
    let points = sample_hemisphere(target.sphere.center, target.sphere.radius, eye, config.rays);
    let skip = Skip {
        owner: source.numeric_id,
        within: 2.0 * config.near,
    };
    let hits = points
        .iter()
        .filter(|&&p| {
            let Some(dir) = (p - eye).try_normalize() else {
                return false;
            };
            prepared
                .cast(eye, dir, 0.0, Some(skip))
                .is_some_and(|h| h.object_numeric_id == target.numeric_id)
        })
        .count();
    hits as f64 / points.len() as f64
}

/// `Some(visible)` for a clear-cut fraction, `None` inside the ambiguity band.
pub fn visibility_truth(fraction: f64, config: &VisibilityTruthConfig) -> Option<bool> {
    if fraction > 0.0 && fraction < config.tau + config.margin {
        None
    } else {
        Some(fraction >= config.tau)
    }
}
