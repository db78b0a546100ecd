//! Persistent scene state: triangle geometry, the object list, and per-object
//! attribute state.
//!
//! A [`SceneState`] is immutable once loaded. Interactions produce a new
//! snapshot via [`apply_interaction`]; readers holding the old snapshot are
//! unaffected.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::geometry::{Rgb, Vec3};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("non-finite input: {0}")]
    NonFiniteInput(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("duplicate object id `{0}`")]
    DuplicateObjectId(String),
    #[error("mesh owner {0} does not reference an object")]
    DanglingMeshOwner(u32),
    #[error("invalid index: {0}")]
    InvalidIndex(String),
    #[error("unknown object `{0}`")]
    UnknownObject(String),
    #[error(
        "action `{action}` is not applicable to `{object}`: attribute `{attribute}` not declared"
    )]
    InapplicableAction {
        object: String,
        action: Action,
        attribute: Attribute,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for SceneError {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            SceneError::Io(e.into())
        } else {
            SceneError::Schema(e.to_string())
        }
    }
}

pub type Result<T, E = SceneError> = std::result::Result<T, E>;

/// Object anchor used for all camera placement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundingSphere {
    pub center: Vec3,
    pub radius: f64,
}

impl BoundingSphere {
    pub fn new(center: Vec3, radius: f64) -> Self {
        BoundingSphere { center, radius }
    }

    pub fn contains(&self, p: Vec3, rel_tol: f64) -> bool {
        p.distance(self.center) <= self.radius * (1.0 + rel_tol) + f64::EPSILON
    }
}

/// Sphere from eight box corners: the center is the corner mean and the
/// radius the largest corner distance from it.
///
/// The corners need not form a valid box; the formula is applied pointwise.
pub fn compute_bounding_sphere(corners: &[Vec3; 8]) -> Result<BoundingSphere> {
    if let Some(p) = corners.iter().find(|p| !p.is_finite()) {
        return Err(SceneError::NonFiniteInput(format!("corner {p:?}")));
    }
    // Sum in a fixed order so the result does not depend on how the caller
    // permuted the corners beyond floating-point reassociation.
    let mut sorted = *corners;
    sorted.sort_by(|a, b| {
        a.to_array()
            .partial_cmp(&b.to_array())
            .expect("finite corners")
    });
    let sum = sorted.iter().fold(Vec3::ZERO, |acc, &p| acc + p);
    let center = sum / 8.0;
    let radius = sorted
        .iter()
        .map(|&p| p.distance(center))
        .fold(0.0_f64, f64::max);
    Ok(BoundingSphere { center, radius })
}

/// The eight corners of an axis-aligned box.
pub fn aabb_corners(min: Vec3, max: Vec3) -> [Vec3; 8] {
    std::array::from_fn(|i| {
        Vec3::new(
            if i & 1 == 0 { min.x } else { max.x },
            if i & 2 == 0 { min.y } else { max.y },
            if i & 4 == 0 { min.z } else { max.z },
        )
    })
}

/// The eight corners of a box rotated by `yaw` about +Y.
pub fn box_corners(center: Vec3, half_extents: Vec3, yaw: f64) -> [Vec3; 8] {
    let local = aabb_corners(-half_extents, half_extents);
    local.map(|p| center + p.rotate_y(yaw))
}

// ---------------------------------------------------------------------------
// Attributes and interactions
// ---------------------------------------------------------------------------

/// Interaction-driven object attributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Attribute {
    Toggled,
    Open,
    Broken,
    Dirty,
    Sliced,
}

impl Attribute {
    pub const ALL: [Attribute; 5] = [
        Attribute::Toggled,
        Attribute::Open,
        Attribute::Broken,
        Attribute::Dirty,
        Attribute::Sliced,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Toggled => "toggled",
            Attribute::Open => "open",
            Attribute::Broken => "broken",
            Attribute::Dirty => "dirty",
            Attribute::Sliced => "sliced",
        }
    }

    /// Values this attribute may take, in canonical spelling.
    pub fn domain(self) -> &'static [&'static str] {
        match self {
            Attribute::Toggled => &["on", "off"],
            Attribute::Open => &["open", "closed"],
            Attribute::Broken | Attribute::Dirty | Attribute::Sliced => &["true", "false"],
        }
    }

    pub fn is_boolean(self) -> bool {
        matches!(
            self,
            Attribute::Broken | Attribute::Dirty | Attribute::Sliced
        )
    }

    /// Canonical spelling of `value` if it belongs to the domain.
    pub fn canonical_value(self, value: &str) -> Option<&'static str> {
        let v = value.trim().to_ascii_lowercase();
        self.domain().iter().copied().find(|d| *d == v)
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Attribute {
    type Err = SceneError;
    fn from_str(s: &str) -> Result<Self> {
        Attribute::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| SceneError::Schema(format!("unknown attribute `{s}`")))
    }
}

impl Serialize for Attribute {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Attribute {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(D::Error::custom)
    }
}

/// Named attribute values of one object. Values are always drawn from
/// [`Attribute::domain`].
///
/// In JSON, boolean attributes are written as JSON booleans and the others as
/// strings: `{"toggled": "on", "broken": false}`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AttributeMap(BTreeMap<Attribute, &'static str>);

impl AttributeMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, attr: Attribute) -> Option<&'static str> {
        self.0.get(&attr).copied()
    }

    pub fn contains(&self, attr: Attribute) -> bool {
        self.0.contains_key(&attr)
    }

    /// Set `attr` to `value`; rejects values outside the domain.
    pub fn set(&mut self, attr: Attribute, value: &str) -> Result<()> {
        let v = attr.canonical_value(value).ok_or_else(|| {
            SceneError::Schema(format!("value `{value}` is not in the domain of `{attr}`"))
        })?;
        self.0.insert(attr, v);
        Ok(())
    }

    pub fn with(mut self, attr: Attribute, value: &str) -> Result<Self> {
        self.set(attr, value)?;
        Ok(self)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Attribute, &'static str)> + '_ {
        self.0.iter().map(|(&a, &v)| (a, v))
    }

    pub fn attributes(&self) -> impl Iterator<Item = Attribute> + '_ {
        self.0.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// True if every entry of `self` is present with the same value in `state`.
    pub fn is_subset_of(&self, state: &AttributeMap) -> bool {
        self.iter().all(|(a, v)| state.get(a) == Some(v))
    }

    /// Every full assignment over the attributes declared here.
    pub fn all_assignments(&self) -> Vec<AttributeMap> {
        let mut out = vec![AttributeMap::new()];
        for attr in self.attributes() {
            out = out
                .into_iter()
                .flat_map(|partial| {
                    attr.domain().iter().map(move |v| {
                        let mut m = partial.clone();
                        m.0.insert(attr, v);
                        m
                    })
                })
                .collect();
        }
        out
    }
}

impl Serialize for AttributeMap {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (attr, value) in self.iter() {
            if attr.is_boolean() {
                map.serialize_entry(attr.name(), &(value == "true"))?;
            } else {
                map.serialize_entry(attr.name(), value)?;
            }
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for AttributeMap {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = BTreeMap::<String, serde_json::Value>::deserialize(d)?;
        let mut map = AttributeMap::new();
        for (key, value) in raw {
            let attr: Attribute = key.parse().map_err(D::Error::custom)?;
            let text = match (&value, attr.is_boolean()) {
                (serde_json::Value::Bool(b), true) => b.to_string(),
                (serde_json::Value::String(s), _) => s.clone(),
                _ => {
                    return Err(D::Error::custom(format!(
                        "invalid value {value} for attribute `{attr}`"
                    )))
                }
            };
            map.set(attr, &text).map_err(D::Error::custom)?;
        }
        Ok(map)
    }
}

/// Closed set of state-changing interactions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Toggle,
    Open,
    Close,
    Break,
    Slice,
    Clean,
    Dirty,
}

impl Action {
    pub const ALL: [Action; 7] = [
        Action::Toggle,
        Action::Open,
        Action::Close,
        Action::Break,
        Action::Slice,
        Action::Clean,
        Action::Dirty,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Action::Toggle => "toggle",
            Action::Open => "open",
            Action::Close => "close",
            Action::Break => "break",
            Action::Slice => "slice",
            Action::Clean => "clean",
            Action::Dirty => "dirty",
        }
    }

    /// The attribute this action writes.
    pub fn attribute(self) -> Attribute {
        match self {
            Action::Toggle => Attribute::Toggled,
            Action::Open | Action::Close => Attribute::Open,
            Action::Break => Attribute::Broken,
            Action::Slice => Attribute::Sliced,
            Action::Clean | Action::Dirty => Attribute::Dirty,
        }
    }

    fn next_value(self, current: &str) -> &'static str {
        match self {
            Action::Toggle => {
                if current == "on" {
                    "off"
                } else {
                    "on"
                }
            }
            Action::Open => "open",
            Action::Close => "closed",
            Action::Break | Action::Slice | Action::Dirty => "true",
            Action::Clean => "false",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Action {
    type Err = SceneError;
    fn from_str(s: &str) -> Result<Self> {
        Action::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| SceneError::Schema(format!("unknown action `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionEvent {
    pub target_id: String,
    pub action: Action,
}

impl InteractionEvent {
    pub fn new(action: Action, target_id: impl Into<String>) -> Self {
        InteractionEvent {
            target_id: target_id.into(),
            action,
        }
    }
}

/// Parses the `action:ObjectId` shorthand used on the command line.
impl FromStr for InteractionEvent {
    type Err = SceneError;
    fn from_str(s: &str) -> Result<Self> {
        let (action, target) = s
            .split_once(':')
            .ok_or_else(|| SceneError::Schema(format!("expected ACTION:OBJECT, got `{s}`")))?;
        Ok(InteractionEvent::new(action.trim().parse()?, target.trim()))
    }
}

// ---------------------------------------------------------------------------
// Geometry and appearance
// ---------------------------------------------------------------------------

/// A color rule: applies when every entry of `when` matches the object state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateColor {
    pub when: AttributeMap,
    pub color: Rgb,
}

/// Maps object state to a base color; the first matching rule wins.
#[derive(Debug, Clone, PartialEq)]
pub struct Appearance {
    pub base: Rgb,
    pub rules: Vec<StateColor>,
}

impl Appearance {
    pub fn solid(base: Rgb) -> Self {
        Appearance {
            base,
            rules: Vec::new(),
        }
    }

    pub fn resolve(&self, state: &AttributeMap) -> Rgb {
        self.rules
            .iter()
            .find(|r| r.when.is_subset_of(state))
            .map_or(self.base, |r| r.color)
    }

    /// Every color this appearance can produce, deduplicated, base first.
    pub fn palette(&self) -> Vec<Rgb> {
        let mut out = vec![self.base];
        for r in &self.rules {
            if !out.contains(&r.color) {
                out.push(r.color);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshGeometry {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
}

impl MeshGeometry {
    /// Append a triangle, flipping its winding if needed so the geometric
    /// normal points along `outward`.
    pub fn push_oriented(&mut self, tri: [u32; 3], outward: Vec3) {
        let [a, b, c] = tri.map(|i| self.vertices[i as usize]);
        if (b - a).cross(c - a).dot(outward) < 0.0 {
            self.triangles.push([tri[0], tri[2], tri[1]]);
        } else {
            self.triangles.push(tri);
        }
    }

    /// Append a quad (two triangles) facing `outward`.
    pub fn push_quad(&mut self, corners: [Vec3; 4], outward: Vec3) {
        let base = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&corners);
        self.push_oriented([base, base + 1, base + 2], outward);
        self.push_oriented([base, base + 2, base + 3], outward);
    }

    pub fn aabb(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.vertices.first()?;
        Some(
            self.vertices
                .iter()
                .fold((first, first), |(lo, hi), &v| (lo.min(v), hi.max(v))),
        )
    }

    /// Closed 12-triangle box with outward-facing winding.
    pub fn cuboid(center: Vec3, half_extents: Vec3, yaw: f64) -> MeshGeometry {
        let vertices = box_corners(center, half_extents, yaw).to_vec();
        let mut mesh = MeshGeometry {
            vertices,
            triangles: Vec::with_capacity(12),
        };
        // Faces as corner-index quads (bit0 = +x, bit1 = +y, bit2 = +z).
        const FACES: [[u32; 4]; 6] = [
            [0, 2, 6, 4],
            [1, 3, 7, 5],
            [0, 1, 5, 4],
            [2, 3, 7, 6],
            [0, 1, 3, 2],
            [4, 5, 7, 6],
        ];
        for face in FACES {
            let centroid = face
                .iter()
                .fold(Vec3::ZERO, |acc, &i| acc + mesh.vertices[i as usize])
                / 4.0;
            let outward = centroid - center;
            mesh.push_oriented([face[0], face[1], face[2]], outward);
            mesh.push_oriented([face[0], face[2], face[3]], outward);
        }
        mesh
    }

    /// UV sphere with `segments` longitudinal slices; vertices lie on the sphere.
    pub fn uv_sphere(center: Vec3, radius: f64, segments: u32) -> MeshGeometry {
        let slices = segments.max(3);
        let stacks = (segments / 2).max(2);
        let mut mesh = MeshGeometry {
            vertices: Vec::new(),
            triangles: Vec::new(),
        };
        mesh.vertices.push(center + Vec3::Y * radius);
        for i in 1..stacks {
            let theta = std::f64::consts::PI * f64::from(i) / f64::from(stacks);
            for j in 0..slices {
                let phi = std::f64::consts::TAU * f64::from(j) / f64::from(slices);
                let dir = Vec3::new(
                    theta.sin() * phi.cos(),
                    theta.cos(),
                    theta.sin() * phi.sin(),
                );
                mesh.vertices.push(center + dir * radius);
            }
        }
        mesh.vertices.push(center - Vec3::Y * radius);
        let bottom = mesh.vertices.len() as u32 - 1;
        let ring = |i: u32, j: u32| 1 + (i - 1) * slices + (j % slices);
        let push = |m: &mut MeshGeometry, t: [u32; 3]| {
            let centroid = t
                .iter()
                .fold(Vec3::ZERO, |acc, &i| acc + m.vertices[i as usize])
                / 3.0;
            m.push_oriented(t, centroid - center);
        };
        for j in 0..slices {
            push(&mut mesh, [0, ring(1, j), ring(1, j + 1)]);
            push(
                &mut mesh,
                [bottom, ring(stacks - 1, j), ring(stacks - 1, j + 1)],
            );
        }
        for i in 1..stacks - 1 {
            for j in 0..slices {
                push(&mut mesh, [ring(i, j), ring(i + 1, j), ring(i + 1, j + 1)]);
                push(&mut mesh, [ring(i, j), ring(i + 1, j + 1), ring(i, j + 1)]);
            }
        }
        mesh
    }
}

/// Renderable triangle mesh. `owner` is the object's numeric id, or 0 for
/// static structure.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub geometry: MeshGeometry,
    pub owner: u16,
    pub appearance: Appearance,
}

// ---------------------------------------------------------------------------
// Objects and scene
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectRecord {
    pub id: String,
    pub numeric_id: u16,
    pub sphere: BoundingSphere,
    pub state: AttributeMap,
    /// Index into [`SceneState::meshes`] of the mesh declared with the object.
    pub mesh_index: usize,
}

impl ObjectRecord {
    /// The category part of the id (`Chair` for `Chair_0`).
    pub fn category(&self) -> &str {
        category_of(&self.id)
    }
}

pub fn category_of(id: &str) -> &str {
    id.rsplit_once('_').map_or(id, |(c, _)| c)
}

/// `Category_index`: a letter, then alphanumerics, an underscore and digits.
pub fn is_valid_object_id(id: &str) -> bool {
    let Some((cat, idx)) = id.rsplit_once('_') else {
        return false;
    };
    let mut chars = cat.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric())
        && !idx.is_empty()
        && idx.chars().all(|c| c.is_ascii_digit())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneState {
    up: Vec3,
    objects: Vec<ObjectRecord>,
    meshes: Vec<TriangleMesh>,
    index: HashMap<String, usize>,
}

impl SceneState {
    pub fn up(&self) -> Vec3 {
        self.up
    }

    pub fn objects(&self) -> &[ObjectRecord] {
        &self.objects
    }

    pub fn meshes(&self) -> &[TriangleMesh] {
        &self.meshes
    }

    pub fn object(&self, id: &str) -> Option<&ObjectRecord> {
        self.index.get(id).map(|&i| &self.objects[i])
    }

    pub fn object_by_numeric(&self, numeric_id: u16) -> Option<&ObjectRecord> {
        numeric_id
            .checked_sub(1)
            .and_then(|i| self.objects.get(usize::from(i)))
    }

    /// Base color of a mesh under the current state of its owner.
    pub fn mesh_color(&self, mesh: &TriangleMesh) -> Rgb {
        match self.object_by_numeric(mesh.owner) {
            Some(obj) => mesh.appearance.resolve(&obj.state),
            None => mesh.appearance.base,
        }
    }

    /// Appearance of the mesh declared with object `id`.
    pub fn appearance_of(&self, id: &str) -> Option<&Appearance> {
        self.object(id)
            .map(|o| &self.meshes[o.mesh_index].appearance)
    }

    /// Current rendered base color of object `id`.
    pub fn object_color(&self, id: &str) -> Option<Rgb> {
        let obj = self.object(id)?;
        Some(self.meshes[obj.mesh_index].appearance.resolve(&obj.state))
    }

    pub fn triangle_count(&self) -> usize {
        self.meshes.iter().map(|m| m.geometry.triangles.len()).sum()
    }
}

/// All object records in document order.
pub fn object_list(scene: &SceneState) -> Vec<ObjectRecord> {
    scene.objects.clone()
}

/// Returns a new scene with `event` applied; `scene` is left untouched.
pub fn apply_interaction(scene: &SceneState, event: &InteractionEvent) -> Result<SceneState> {
    let idx = *scene
        .index
        .get(&event.target_id)
        .ok_or_else(|| SceneError::UnknownObject(event.target_id.clone()))?;
    let attr = event.action.attribute();
    let current =
        scene.objects[idx]
            .state
            .get(attr)
            .ok_or_else(|| SceneError::InapplicableAction {
                object: event.target_id.clone(),
                action: event.action,
                attribute: attr,
            })?;
    let mut next = scene.clone();
    next.objects[idx]
        .state
        .set(attr, event.action.next_value(current))?;
    Ok(next)
}

/// Apply events in order.
pub fn apply_interactions<'a>(
    scene: &SceneState,
    events: impl IntoIterator<Item = &'a InteractionEvent>,
) -> Result<SceneState> {
    let mut current = scene.clone();
    for e in events {
        current = apply_interaction(&current, e)?;
    }
    Ok(current)
}

// ---------------------------------------------------------------------------
// Document schema
// ---------------------------------------------------------------------------

fn default_up() -> Vec3 {
    Vec3::Y
}

fn default_color() -> Rgb {
    [180, 180, 180]
}

fn default_segments() -> u32 {
    16
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

fn is_zero_u16(v: &u16) -> bool {
    *v == 0
}

/// Top-level scene document (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDocument {
    #[serde(default = "default_up")]
    pub up: Vec3,
    #[serde(default)]
    pub objects: Vec<ObjectDoc>,
    #[serde(default)]
    pub structure: Vec<StructureDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectDoc {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primitive: Option<Primitive>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<MeshGeometry>,
    /// Explicit sphere, accepted verbatim instead of deriving one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sphere: Option<BoundingSphere>,
    #[serde(default = "default_color")]
    pub color: Rgb,
    #[serde(default)]
    pub state: AttributeMap,
    #[serde(default)]
    pub state_colors: Vec<StateColor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Primitive {
    Box {
        center: Vec3,
        half_extents: Vec3,
        #[serde(default, skip_serializing_if = "is_zero")]
        yaw: f64,
    },
    Sphere {
        center: Vec3,
        radius: f64,
        #[serde(default = "default_segments")]
        segments: u32,
    },
}

impl Primitive {
    fn corners(&self) -> [Vec3; 8] {
        match *self {
            Primitive::Box {
                center,
                half_extents,
                yaw,
            } => box_corners(center, half_extents, yaw),
            Primitive::Sphere { center, radius, .. } => {
                aabb_corners(center - Vec3::splat(radius), center + Vec3::splat(radius))
            }
        }
    }

    fn mesh(&self) -> MeshGeometry {
        match *self {
            Primitive::Box {
                center,
                half_extents,
                yaw,
            } => MeshGeometry::cuboid(center, half_extents, yaw),
            Primitive::Sphere {
                center,
                radius,
                segments,
            } => MeshGeometry::uv_sphere(center, radius, segments),
        }
    }

    fn check(&self) -> Result<()> {
        let (finite, positive) = match *self {
            Primitive::Box {
                center,
                half_extents,
                yaw,
            } => (
                center.is_finite() && half_extents.is_finite() && yaw.is_finite(),
                half_extents.x >= 0.0 && half_extents.y >= 0.0 && half_extents.z >= 0.0,
            ),
            Primitive::Sphere { center, radius, .. } => {
                (center.is_finite() && radius.is_finite(), radius > 0.0)
            }
        };
        if !finite {
            return Err(SceneError::NonFiniteInput(format!("primitive {self:?}")));
        }
        if !positive {
            return Err(SceneError::Schema(format!(
                "primitive has negative extent: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureDoc {
    #[serde(default, skip_serializing_if = "is_zero_u16")]
    pub owner: u16,
    #[serde(default = "default_color")]
    pub color: Rgb,
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
}

fn check_mesh(mesh: &MeshGeometry, what: &str) -> Result<()> {
    if mesh.triangles.is_empty() {
        return Err(SceneError::InvalidIndex(format!(
            "{what}: mesh has no triangles"
        )));
    }
    if let Some(v) = mesh.vertices.iter().find(|v| !v.is_finite()) {
        return Err(SceneError::NonFiniteInput(format!("{what}: vertex {v:?}")));
    }
    let n = mesh.vertices.len();
    if let Some(t) = mesh
        .triangles
        .iter()
        .find(|t| t.iter().any(|&i| i as usize >= n))
    {
        return Err(SceneError::InvalidIndex(format!(
            "{what}: triangle {t:?} references a vertex beyond {n}"
        )));
    }
    Ok(())
}

/// Validate a document and build the scene.
pub fn load_scene(doc: &SceneDocument) -> Result<SceneState> {
    if !doc.up.is_finite() {
        return Err(SceneError::NonFiniteInput(format!("up {:?}", doc.up)));
    }
    if (doc.up.length() - 1.0).abs() > 1e-9 {
        return Err(SceneError::Schema(format!(
            "up vector {:?} is not unit length",
            doc.up
        )));
    }
    if doc.objects.len() > usize::from(u16::MAX) {
        return Err(SceneError::Schema(
            "too many objects for 16-bit labels".into(),
        ));
    }

    let mut objects = Vec::with_capacity(doc.objects.len());
    let mut meshes = Vec::with_capacity(doc.objects.len() + doc.structure.len());
    let mut index = HashMap::new();
    let mut seen = HashSet::new();

    for (i, od) in doc.objects.iter().enumerate() {
        if !is_valid_object_id(&od.id) {
            return Err(SceneError::Schema(format!(
                "object id `{}` is not of the form Category_index",
                od.id
            )));
        }
        if !seen.insert(od.id.as_str()) {
            return Err(SceneError::DuplicateObjectId(od.id.clone()));
        }
        for rule in &od.state_colors {
            if let Some(a) = rule.when.attributes().find(|a| !od.state.contains(*a)) {
                return Err(SceneError::Schema(format!(
                    "{}: state color rule uses undeclared attribute `{a}`",
                    od.id
                )));
            }
        }
        let (geometry, derived) = match (&od.primitive, &od.mesh) {
            (Some(p), None) => {
                p.check()?;
                (p.mesh(), compute_bounding_sphere(&p.corners())?)
            }
            (None, Some(m)) => {
                check_mesh(m, &od.id)?;
                let (lo, hi) = m.aabb().expect("checked non-empty");
                (m.clone(), compute_bounding_sphere(&aabb_corners(lo, hi))?)
            }
            _ => {
                return Err(SceneError::Schema(format!(
                    "{}: exactly one of `primitive` or `mesh` is required",
                    od.id
                )))
            }
        };
        check_mesh(&geometry, &od.id)?;
        let sphere = match od.sphere {
            Some(s) => {
                if !s.center.is_finite() || !s.radius.is_finite() {
                    return Err(SceneError::NonFiniteInput(format!("{}: sphere", od.id)));
                }
                if s.radius < 0.0 {
                    return Err(SceneError::Schema(format!("{}: negative radius", od.id)));
                }
                s
            }
            None => derived,
        };
        let numeric_id = u16::try_from(i + 1).expect("bounded above");
        meshes.push(TriangleMesh {
            geometry,
            owner: numeric_id,
            appearance: Appearance {
                base: od.color,
                rules: od.state_colors.clone(),
            },
        });
        index.insert(od.id.clone(), i);
        objects.push(ObjectRecord {
            id: od.id.clone(),
            numeric_id,
            sphere,
            state: od.state.clone(),
            mesh_index: meshes.len() - 1,
        });
    }

    for (i, sd) in doc.structure.iter().enumerate() {
        if usize::from(sd.owner) > objects.len() {
            return Err(SceneError::DanglingMeshOwner(u32::from(sd.owner)));
        }
        let geometry = MeshGeometry {
            vertices: sd.vertices.clone(),
            triangles: sd.triangles.clone(),
        };
        check_mesh(&geometry, &format!("structure[{i}]"))?;
        meshes.push(TriangleMesh {
            geometry,
            owner: sd.owner,
            appearance: Appearance::solid(sd.color),
        });
    }

    Ok(SceneState {
        up: doc.up,
        objects,
        meshes,
        index,
    })
}

/// Serialize a scene back into a document. Objects are written as inline
/// meshes with explicit spheres, so loading the result reproduces the scene.
pub fn save_scene(scene: &SceneState) -> SceneDocument {
    let objects = scene
        .objects
        .iter()
        .map(|o| {
            let mesh = &scene.meshes[o.mesh_index];
            ObjectDoc {
                id: o.id.clone(),
                primitive: None,
                mesh: Some(mesh.geometry.clone()),
                sphere: Some(o.sphere),
                color: mesh.appearance.base,
                state: o.state.clone(),
                state_colors: mesh.appearance.rules.clone(),
            }
        })
        .collect();
    let owned: HashSet<usize> = scene.objects.iter().map(|o| o.mesh_index).collect();
    let structure = scene
        .meshes
        .iter()
        .enumerate()
        .filter(|(i, _)| !owned.contains(i))
        .map(|(_, m)| StructureDoc {
            owner: m.owner,
            color: m.appearance.base,
            vertices: m.geometry.vertices.clone(),
            triangles: m.geometry.triangles.clone(),
        })
        .collect();
    SceneDocument {
        up: scene.up,
        objects,
        structure,
    }
}

pub fn parse_scene(json: &str) -> Result<SceneState> {
    let doc: SceneDocument = serde_json::from_str(json)?;
    load_scene(&doc)
}

pub fn read_scene_file(path: &Path) -> Result<SceneState> {
    let text = std::fs::read_to_string(path)?;
    parse_scene(&text)
}
