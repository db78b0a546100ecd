//! Imperfection models for robustness experiments: image-level blur and
//! ghosting of rendered evidence, and Gaussian noise on bounding spheres.
//!
//! Normal variates come from `rand_distr::StandardNormal` (ziggurat) over a
//! ChaCha8 generator seeded with a 64-bit seed.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::RgbImage;
use crate::scene::{BoundingSphere, ObjectRecord};

#[derive(Debug, Error, PartialEq)]
pub enum PerturbError {
    #[error("domain error: {0}")]
    Domain(String),
}

/// Reference width for the default ghost offsets.
pub const GHOST_REFERENCE_WIDTH: usize = 256;
pub const DEFAULT_GHOST_OFFSETS: [(i64, i64); 2] = [(8, 0), (-4, 4)];

/// Severity knobs for one robustness setting.
///
/// A zero `delta` or `gamma` disables the corresponding image stage, and a
/// zero `lambda` leaves spheres untouched.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbConfig {
    #[serde(default)]
    pub delta: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub rng_seed: u64,
    /// Ghost offsets in pixels; `None` uses the defaults scaled to the image width.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ghost_offsets: Option<[(i64, i64); 2]>,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        PerturbConfig {
            delta: 0.0,
            gamma: 0.0,
            lambda: 0.0,
            rng_seed: 0,
            ghost_offsets: None,
        }
    }
}

impl PerturbConfig {
    pub fn validate(&self) -> Result<(), PerturbError> {
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(PerturbError::Domain(format!("delta {} < 0", self.delta)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(PerturbError::Domain(format!("lambda {} < 0", self.lambda)));
        }
        if !self.gamma.is_finite() {
            return Err(PerturbError::Domain(format!("gamma {}", self.gamma)));
        }
        Ok(())
    }

    pub fn gamma_clamped(&self) -> f64 {
        self.gamma.clamp(0.0, 1.0)
    }

    pub fn corrupts_images(&self) -> bool {
        self.delta > 0.0 || self.gamma_clamped() > 0.0
    }

    /// Blur (if `delta > 0`) followed by ghosting (if `gamma > 0`).
    pub fn corrupt(&self, image: &RgbImage) -> RgbImage {
        let mut out = if self.delta > 0.0 {
            apply_blur(image, self.delta)
        } else {
            image.clone()
        };
        let gamma = self.gamma_clamped();
        if gamma > 0.0 {
            let offsets = self
                .ghost_offsets
                .unwrap_or_else(|| default_ghost_offsets(image.width));
            out = apply_ghosting(&out, gamma, offsets);
        }
        out
    }

    /// Perturb every sphere in object order with one generator seeded by
    /// `rng_seed`, so a given (scene, lambda, seed) always yields the same draw.
    pub fn perturb_objects(
        &self,
        objects: &[ObjectRecord],
    ) -> Result<Vec<ObjectRecord>, PerturbError> {
        if self.lambda == 0.0 {
            return Ok(objects.to_vec());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        objects
            .iter()
            .map(|o| {
                Ok(ObjectRecord {
                    sphere: perturb_sphere(&o.sphere, self.lambda, &mut rng)?,
                    ..o.clone()
                })
            })
            .collect()
    }
}

/// Gaussian standard deviation for severity `delta`.
pub fn blur_sigma(delta: f64) -> f64 {
    0.5 + 6.0 * delta
}

/// Default ghost offsets scaled from the 256-pixel reference to `width`.
pub fn default_ghost_offsets(width: usize) -> [(i64, i64); 2] {
    let scale = width as f64 / GHOST_REFERENCE_WIDTH as f64;
    DEFAULT_GHOST_OFFSETS.map(|(dx, dy)| {
        (
            (dx as f64 * scale).round() as i64,
            (dy as f64 * scale).round() as i64,
        )
    })
}

/// Normalized 1-D Gaussian kernel of half-width `ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let half = (3.0 * sigma).ceil() as i64;
    let weights: Vec<f64> = (-half..=half)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / sum).collect()
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn clamp_index(i: i64, len: usize) -> usize {
    i.clamp(0, len as i64 - 1) as usize
}

/// Separable Gaussian blur with clamp-to-edge borders.
pub fn apply_blur(image: &RgbImage, delta: f64) -> RgbImage {
    let (w, h) = (image.width, image.height);
    if w == 0 || h == 0 {
        return image.clone();
    }
    let kernel = gaussian_kernel(blur_sigma(delta));
    let half = (kernel.len() / 2) as i64;
    let mut horiz = vec![0.0f64; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for (k, wt) in kernel.iter().enumerate() {
                    let sx = clamp_index(x as i64 + k as i64 - half, w);
                    acc += wt * f64::from(image.data[(y * w + sx) * 3 + c]);
                }
                horiz[(y * w + x) * 3 + c] = acc;
            }
        }
    }
    let mut out = RgbImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for (k, wt) in kernel.iter().enumerate() {
                    let sy = clamp_index(y as i64 + k as i64 - half, h);
                    acc += wt * horiz[(sy * w + x) * 3 + c];
                }
                out.data[(y * w + x) * 3 + c] = to_u8(acc);
            }
        }
    }
    out
}

/// Image translated by `(dx, dy)`: output pixel `(x, y)` reads input
/// `(x - dx, y - dy)`, clamped to the border.
pub fn translate(image: &RgbImage, (dx, dy): (i64, i64)) -> RgbImage {
    let (w, h) = (image.width, image.height);
    let mut out = RgbImage::new(w, h);
    for y in 0..h {
        let sy = clamp_index(y as i64 - dy, h);
        for x in 0..w {
            let sx = clamp_index(x as i64 - dx, w);
            out.put(x, y, image.get(sx, sy));
        }
    }
    out
}

/// Blend the image with two shifted copies, weighted `0.6γ` and `0.4γ`.
pub fn apply_ghosting(image: &RgbImage, gamma: f64, offsets: [(i64, i64); 2]) -> RgbImage {
    let gamma = gamma.clamp(0.0, 1.0);
    if gamma == 0.0 {
        return image.clone();
    }
    let first = translate(image, offsets[0]);
    let second = translate(image, offsets[1]);
    let mut out = image.clone();
    for (i, v) in out.data.iter_mut().enumerate() {
        let blended = (1.0 - gamma) * f64::from(image.data[i])
            + 0.6 * gamma * f64::from(first.data[i])
            + 0.4 * gamma * f64::from(second.data[i]);
        *v = to_u8(blended);
    }
    out
}

/// Gaussian noise on the center (std `λr` per axis) and radius (relative std `λ`).
///
/// Draws exactly four standard normals per call: x, y, z of the center
/// offset, then the radius factor. The result radius is clamped to at least
/// `1e-6 · r`.
pub fn perturb_sphere<R: Rng + ?Sized>(
    sphere: &BoundingSphere,
    lambda: f64,
    rng: &mut R,
) -> Result<BoundingSphere, PerturbError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(PerturbError::Domain(format!("lambda {lambda} < 0")));
    }
    let ex: f64 = rng.sample(StandardNormal);
    let ey: f64 = rng.sample(StandardNormal);
    let ez: f64 = rng.sample(StandardNormal);
    let xi: f64 = rng.sample(StandardNormal);
    let r = sphere.radius;
    let scale = lambda * r;
    let center = crate::geometry::Vec3::new(
        sphere.center.x + scale * ex,
        sphere.center.y + scale * ey,
        sphere.center.z + scale * ez,
    );
    let radius = (r * (1.0 + lambda * xi)).max(1e-6 * r);
    Ok(BoundingSphere { center, radius })
}
