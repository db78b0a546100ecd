//! Spatial memory where rendering is the read operation.
//!
//! A [`scene::SceneState`] holds triangle geometry plus an object list of
//! bounding spheres. Questions are answered by deciding whether rendering is
//! needed, synthesizing camera poses from object anchors
//! ([`viewpoint`]), ray casting evidence views ([`render`]) and handing them
//! to a pluggable reasoner ([`pipeline`]). [`bench`] generates synthetic
//! suites with independent ground truth and runs robustness sweeps.

pub mod bench;
pub mod geometry;
pub mod perturb;
pub mod pipeline;
pub mod raster;
pub mod render;
pub mod scene;
pub mod viewpoint;

pub use geometry::{Rgb, Vec3};
