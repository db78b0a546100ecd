//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rendermem::raster::RgbImage;
use rendermem::scene::{
    BoundingSphere, MeshGeometry, ObjectDoc, Primitive, SceneDocument, SceneState,
};
use rendermem::Vec3;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_unit(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let l = v.length();
        if l > 1e-3 && l <= 1.0 {
            return v / l;
        }
    }
}

/// Möller–Trumbore, two-sided, no epsilon culling beyond a zero determinant.
pub fn moller_trumbore(origin: Vec3, dir: Vec3, v: [Vec3; 3]) -> Option<f64> {
    let e1 = v[1] - v[0];
    let e2 = v[2] - v[0];
    let p = dir.cross(e2);
    let det = e1.dot(p);
    if det == 0.0 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - v[0];
    let u = s.dot(p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(e1);
    let w = dir.dot(q) * inv;
    if w < 0.0 || u + w > 1.0 {
        return None;
    }
    let t = e2.dot(q) * inv;
    (t > 0.0).then_some(t)
}

/// Nearest hit by looping over every triangle of every mesh.
pub fn naive_nearest(scene: &SceneState, origin: Vec3, dir: Vec3) -> Option<(u16, f64)> {
    let mut best: Option<(u16, f64)> = None;
    for mesh in scene.meshes() {
        let g = &mesh.geometry;
        for t in &g.triangles {
            let v = t.map(|i| g.vertices[i as usize]);
            if let Some(d) = moller_trumbore(origin, dir, v) {
                if best.is_none_or(|(_, b)| d < b) {
                    best = Some((mesh.owner, d));
                }
            }
        }
    }
    best
}

/// Scene of random boxes and spheres scattered in a cube of side `extent`.
pub fn random_scene(rng: &mut impl Rng, count: usize, extent: f64) -> SceneDocument {
    let objects = (0..count)
        .map(|i| {
            let center = Vec3::new(
                rng.random_range(-extent..extent),
                rng.random_range(-extent..extent),
                rng.random_range(-extent..extent),
            );
            let primitive = if rng.random_bool(0.5) {
                Primitive::Box {
                    center,
                    half_extents: Vec3::new(
                        rng.random_range(0.1..1.0),
                        rng.random_range(0.1..1.0),
                        rng.random_range(0.1..1.0),
                    ),
                    yaw: rng.random_range(0.0..3.0),
                }
            } else {
                Primitive::Sphere {
                    center,
                    radius: rng.random_range(0.1..1.0),
                    segments: 12,
                }
            };
            ObjectDoc {
                id: format!("Thing_{i}"),
                primitive: Some(primitive),
                mesh: None,
                sphere: None,
                color: [200, 120, 60],
                state: Default::default(),
                state_colors: Vec::new(),
            }
        })
        .collect();
    SceneDocument {
        up: Vec3::Y,
        objects,
        structure: Vec::new(),
    }
}

/// A lone UV sphere whose declared bounding sphere is the exact one.
pub fn lone_sphere(center: Vec3, radius: f64) -> SceneDocument {
    SceneDocument {
        up: Vec3::Y,
        objects: vec![ObjectDoc {
            id: "Ball_0".into(),
            primitive: Some(Primitive::Sphere {
                center,
                radius,
                segments: 24,
            }),
            mesh: None,
            sphere: Some(BoundingSphere::new(center, radius)),
            color: [230, 40, 40],
            state: Default::default(),
            state_colors: Vec::new(),
        }],
        structure: Vec::new(),
    }
}

/// Blur by direct 2-D convolution with the full (non-separable) Gaussian.
pub fn dense_blur(img: &RgbImage, sigma: f64) -> RgbImage {
    let half = (3.0 * sigma).ceil() as i64;
    let g = |k: i64| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp();
    let norm: f64 = (-half..=half).map(g).sum::<f64>().powi(2);
    let (w, h) = (img.width as i64, img.height as i64);
    let mut out = RgbImage::new(img.width, img.height);
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0f64; 3];
            for dy in -half..=half {
                for dx in -half..=half {
                    let sx = (x + dx).clamp(0, w - 1) as usize;
                    let sy = (y + dy).clamp(0, h - 1) as usize;
                    let wt = g(dx) * g(dy) / norm;
                    let p = img.get(sx, sy);
                    for c in 0..3 {
                        acc[c] += wt * f64::from(p[c]);
                    }
                }
            }
            out.put(
                x as usize,
                y as usize,
                acc.map(|v| v.round().clamp(0.0, 255.0) as u8),
            );
        }
    }
    out
}

/// Ghosting computed from three explicit copies.
pub fn three_copy_ghost(img: &RgbImage, gamma: f64, offsets: [(i64, i64); 2]) -> RgbImage {
    let (w, h) = (img.width as i64, img.height as i64);
    let sample = |x: i64, y: i64| img.get(x.clamp(0, w - 1) as usize, y.clamp(0, h - 1) as usize);
    let mut out = RgbImage::new(img.width, img.height);
    for y in 0..h {
        for x in 0..w {
            let a = sample(x, y);
            let b = sample(x - offsets[0].0, y - offsets[0].1);
            let c = sample(x - offsets[1].0, y - offsets[1].1);
            let mut px = [0u8; 3];
            for k in 0..3 {
                let v = (1.0 - gamma) * f64::from(a[k])
                    + 0.6 * gamma * f64::from(b[k])
                    + 0.4 * gamma * f64::from(c[k]);
                px[k] = v.round().clamp(0.0, 255.0) as u8;
            }
            out.put(x as usize, y as usize, px);
        }
    }
    out
}

pub fn random_image(rng: &mut impl Rng, w: usize, h: usize) -> RgbImage {
    let mut img = RgbImage::new(w, h);
    rng.fill(&mut img.data[..]);
    img
}

/// Box mesh helper for hand-built scenes.
pub fn cuboid_doc(id: &str, center: Vec3, half: Vec3, color: [u8; 3]) -> ObjectDoc {
    let mesh = MeshGeometry::cuboid(center, half, 0.0);
    ObjectDoc {
        id: id.into(),
        primitive: None,
        mesh: Some(mesh),
        sphere: None,
        color,
        state: Default::default(),
        state_colors: Vec::new(),
    }
}

/// Two chairs and a sofa facing a TV across open floor. The TV starts off;
/// on is green and off is blue.
pub fn living_room() -> SceneDocument {
    use rendermem::scene::{Attribute, AttributeMap, StateColor};
    let state = |v: &str| {
        AttributeMap::new()
            .with(Attribute::Toggled, v)
            .expect("valid")
    };
    let mut tv = cuboid_doc(
        "Tv_0",
        Vec3::new(0.0, 0.8, -3.0),
        Vec3::new(0.6, 0.4, 0.1),
        [90, 90, 90],
    );
    tv.state = state("off");
    tv.state_colors = vec![
        StateColor {
            when: state("on"),
            color: [40, 200, 60],
        },
        StateColor {
            when: state("off"),
            color: [40, 60, 200],
        },
    ];
    SceneDocument {
        up: Vec3::Y,
        objects: vec![
            cuboid_doc(
                "Chair_0",
                Vec3::new(2.0, 0.4, 0.0),
                Vec3::splat(0.3),
                [160, 100, 40],
            ),
            cuboid_doc(
                "Chair_1",
                Vec3::new(-2.0, 0.4, 0.0),
                Vec3::splat(0.3),
                [160, 100, 40],
            ),
            tv,
            cuboid_doc(
                "Sofa_0",
                Vec3::new(0.0, 0.4, 3.0),
                Vec3::new(1.0, 0.4, 0.4),
                [200, 60, 60],
            ),
        ],
        structure: Vec::new(),
    }
}
