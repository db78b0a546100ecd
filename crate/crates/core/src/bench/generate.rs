//! Procedural rooms with QA items whose truths come from the generated state
//! and from ray sampling, never from the pipeline.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{Rgb, Vec3};
use crate::pipeline::Question;
use crate::render::PreparedScene;
use crate::scene::{
    apply_interactions, load_scene, Action, Attribute, AttributeMap, InteractionEvent,
    MeshGeometry, ObjectDoc, Primitive, SceneDocument, StateColor, StructureDoc,
};

use super::truth::{visibility_truth, visible_fraction, VisibilityTruthConfig};
use super::{BenchError, QAItem, QASuite, Result, SceneRef};

/// How occluders are placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OccluderStyle {
    /// Panels of random size near visibility pairs, blocking some of them.
    #[default]
    Random,
    /// One panel across every visibility pair, covering the whole target.
    Full,
}

/// Items requested per scene (fewer may be emitted when the scene cannot
/// support them or visibility items fall in the ambiguity band).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionMix {
    pub count: usize,
    pub attribute: usize,
    pub visibility: usize,
    /// Attribute questions preceded by interactions.
    pub dynamic: usize,
}

impl Default for QuestionMix {
    fn default() -> Self {
        QuestionMix {
            count: 2,
            attribute: 3,
            visibility: 4,
            dynamic: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    /// Floor extent along x and z, meters.
    pub room_size: [f64; 2],
    pub wall_height: f64,
    /// Minimum distance from any object center to a wall.
    pub wall_clearance: f64,
    /// Inclusive object-count range.
    pub objects: [usize; 2],
    /// Number of occluder panels (random style) to attempt.
    pub occluders: usize,
    pub occluder_style: OccluderStyle,
    pub questions: QuestionMix,
    pub visibility: VisibilityTruthConfig,
    /// Placement attempts per object or panel before giving up.
    pub max_attempts: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            room_size: [16.0, 16.0],
            wall_height: 2.5,
            wall_clearance: 2.0,
            objects: [8, 12],
            occluders: 2,
            occluder_style: OccluderStyle::Random,
            questions: QuestionMix::default(),
            visibility: VisibilityTruthConfig::default(),
            max_attempts: 500,
        }
    }
}

impl GeneratorConfig {
    fn validate(&self) -> Result<()> {
        let inner = [
            self.room_size[0] - 2.0 * self.wall_clearance,
            self.room_size[1] - 2.0 * self.wall_clearance,
        ];
        if !(inner[0] > 0.0 && inner[1] > 0.0) {
            return Err(BenchError::Config(format!(
                "room {:?} leaves no floor inside a {} m clearance",
                self.room_size, self.wall_clearance
            )));
        }
        if self.objects[0] < 2 || self.objects[0] > self.objects[1] {
            return Err(BenchError::Config(format!(
                "object range {:?} must be ordered and start at 2 or more",
                self.objects
            )));
        }
        if self.wall_height <= 0.0 || self.visibility.rays == 0 {
            return Err(BenchError::Config(
                "wall height and ray count must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Generated scene document and its suite. The suite refers to the scene as
/// `scene.json`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSuite {
    pub scene: SceneDocument,
    pub suite: QASuite,
}

pub const SCENE_FILE: &str = "scene.json";

struct Kind {
    category: &'static str,
    attributes: &'static [Attribute],
    sphere: bool,
}

const KINDS: &[Kind] = &[
    Kind {
        category: "Tv",
        attributes: &[Attribute::Toggled],
        sphere: false,
    },
    Kind {
        category: "Lamp",
        attributes: &[Attribute::Toggled],
        sphere: false,
    },
    Kind {
        category: "Laptop",
        attributes: &[Attribute::Toggled, Attribute::Open],
        sphere: false,
    },
    Kind {
        category: "Fridge",
        attributes: &[Attribute::Open],
        sphere: false,
    },
    Kind {
        category: "Cabinet",
        attributes: &[Attribute::Open, Attribute::Dirty],
        sphere: false,
    },
    Kind {
        category: "Mug",
        attributes: &[Attribute::Dirty, Attribute::Broken],
        sphere: false,
    },
    Kind {
        category: "Vase",
        attributes: &[Attribute::Broken],
        sphere: false,
    },
    Kind {
        category: "Bowl",
        attributes: &[Attribute::Dirty],
        sphere: false,
    },
    Kind {
        category: "Apple",
        attributes: &[Attribute::Sliced],
        sphere: true,
    },
    Kind {
        category: "Bread",
        attributes: &[Attribute::Sliced],
        sphere: false,
    },
    Kind {
        category: "Ball",
        attributes: &[],
        sphere: true,
    },
    Kind {
        category: "Chair",
        attributes: &[],
        sphere: false,
    },
    Kind {
        category: "Sofa",
        attributes: &[],
        sphere: false,
    },
    Kind {
        category: "Table",
        attributes: &[],
        sphere: false,
    },
    Kind {
        category: "Plant",
        attributes: &[],
        sphere: false,
    },
];

const FLOOR_COLOR: Rgb = [110, 105, 95];
const WALL_COLOR: Rgb = [150, 150, 140];
const OCCLUDER_COLOR: Rgb = [95, 95, 105];
const PANEL_THICKNESS: f64 = 0.05;

/// Round to millimeters so documents carry short decimals.
fn mm(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

fn hsv(h: f64, s: f64, v: f64) -> Rgb {
    let h = h.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r, g, b].map(|t| ((t + m) * 255.0).round() as u8)
}

struct Placed {
    id: String,
    kind: &'static Kind,
    primitive: Primitive,
    /// Bounding radius, used for spacing and clearance tests.
    radius: f64,
    state: AttributeMap,
    state_colors: Vec<StateColor>,
    color: Rgb,
}

impl Placed {
    fn center(&self) -> Vec3 {
        match self.primitive {
            Primitive::Box { center, .. } | Primitive::Sphere { center, .. } => center,
        }
    }
}

/// Horizontal distance from `p` to the segment `[a, b]` (y ignored).
fn flat_segment_distance(p: Vec3, a: Vec3, b: Vec3) -> f64 {
    let flat = |v: Vec3| Vec3::new(v.x, 0.0, v.z);
    segment_distance(flat(p), flat(a), flat(b))
}

fn segment_distance(p: Vec3, a: Vec3, b: Vec3) -> f64 {
    let ab = b - a;
    let len2 = ab.length_squared();
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((p - a).dot(ab) / len2).clamp(0.0, 1.0)
    };
    p.distance(a + ab * t)
}

fn place_object(
    rng: &mut ChaCha8Rng,
    config: &GeneratorConfig,
    placed: &[Placed],
    counters: &mut BTreeMap<&'static str, usize>,
) -> Result<Placed> {
    let kind = &KINDS[rng.random_range(0..KINDS.len())];
    let [w, d] = config.room_size;
    let m = config.wall_clearance;
    for _ in 0..config.max_attempts {
        let x = mm(rng.random_range(-w / 2.0 + m..=w / 2.0 - m));
        let z = mm(rng.random_range(-d / 2.0 + m..=d / 2.0 - m));
        let (primitive, radius) = if kind.sphere {
            let r = mm(rng.random_range(0.25..=0.45));
            (
                Primitive::Sphere {
                    center: Vec3::new(x, r, z),
                    radius: r,
                    segments: 16,
                },
                r * 3f64.sqrt(),
            )
        } else {
            let half = Vec3::new(
                mm(rng.random_range(0.2..=0.5)),
                mm(rng.random_range(0.2..=0.6)),
                mm(rng.random_range(0.2..=0.5)),
            );
            let yaw = mm(rng.random_range(0.0..std::f64::consts::PI));
            (
                Primitive::Box {
                    center: Vec3::new(x, half.y, z),
                    half_extents: half,
                    yaw,
                },
                half.length(),
            )
        };
        let c = Vec3::new(x, 0.0, z);
        let clear = placed.iter().all(|p| {
            let pc = p.center();
            Vec3::new(pc.x, 0.0, pc.z).distance(c) >= p.radius + radius + 0.4
        });
        if !clear {
            continue;
        }
        let n = counters.entry(kind.category).or_insert(0);
        let id = format!("{}_{n}", kind.category);
        *n += 1;

        // one hue per full state assignment, evenly spread around the wheel
        let mut state = AttributeMap::new();
        for &a in kind.attributes {
            let domain = a.domain();
            state.set(a, domain[rng.random_range(0..domain.len())])?;
        }
        let assignments = state.all_assignments();
        let h0 = rng.random_range(0.0..360.0);
        let step = 360.0 / assignments.len() as f64;
        let colors: Vec<Rgb> = (0..assignments.len())
            .map(|i| hsv(h0 + step * i as f64, 0.8, 0.9))
            .collect();
        let state_colors = if kind.attributes.is_empty() {
            Vec::new()
        } else {
            assignments
                .into_iter()
                .zip(&colors)
                .map(|(when, &color)| StateColor { when, color })
                .collect()
        };
        return Ok(Placed {
            id,
            kind,
            primitive,
            radius,
            state,
            state_colors,
            color: colors[0],
        });
    }
    Err(BenchError::Config(format!(
        "could not place object {} after {} attempts",
        placed.len() + 1,
        config.max_attempts
    )))
}

/// Viewing position used by the directional ground truth: on the source's
/// bounding sphere, toward the target.
fn eye(source: Vec3, source_r: f64, target: Vec3) -> Vec3 {
    source + (target - source).normalize() * source_r
}

/// Pairs whose line of sight is not crossed by any third object's sphere.
fn clear_pairs(objects: &[Placed]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (i, s) in objects.iter().enumerate() {
        for (j, t) in objects.iter().enumerate() {
            if i == j {
                continue;
            }
            let (sc, tc) = (s.center(), t.center());
            let flat = Vec3::new(tc.x - sc.x, 0.0, tc.z - sc.z).length();
            if flat < s.radius + t.radius + 1.0 {
                continue;
            }
            let e = eye(sc, s.radius, tc);
            let blocked = objects.iter().enumerate().any(|(k, o)| {
                k != i && k != j && segment_distance(o.center(), e, tc) < o.radius + t.radius + 0.05
            });
            if !blocked {
                out.push((i, j));
            }
        }
    }
    out
}

/// A vertical panel: horizontal center, normal direction, width, height.
struct Panel {
    center: Vec3,
    normal: Vec3,
    width: f64,
    height: f64,
}

impl Panel {
    fn endpoints(&self) -> (Vec3, Vec3) {
        let side = Vec3::new(self.normal.z, 0.0, -self.normal.x) * (self.width / 2.0);
        (self.center - side, self.center + side)
    }

    fn fits(&self, objects: &[Placed], config: &GeneratorConfig) -> bool {
        let (a, b) = self.endpoints();
        let [w, d] = config.room_size;
        let inside = |p: Vec3| p.x.abs() < w / 2.0 - 0.1 && p.z.abs() < d / 2.0 - 0.1;
        inside(a)
            && inside(b)
            && objects
                .iter()
                .all(|o| flat_segment_distance(o.center(), a, b) > o.radius + 0.1)
    }

    fn structure(&self) -> StructureDoc {
        let yaw = self.normal.x.atan2(self.normal.z);
        let center = Vec3::new(self.center.x, self.height / 2.0, self.center.z);
        let half = Vec3::new(self.width / 2.0, self.height / 2.0, PANEL_THICKNESS / 2.0);
        let mesh = MeshGeometry::cuboid(center, half, yaw);
        StructureDoc {
            owner: 0,
            color: OCCLUDER_COLOR,
            vertices: mesh.vertices,
            triangles: mesh.triangles,
        }
    }
}

/// Panel across the sight line of `(s, t)` at fraction `along`, shifted
/// sideways by `lateral` meters.
fn panel_between(
    s: &Placed,
    t: &Placed,
    along: f64,
    lateral: f64,
    width: f64,
    height: f64,
) -> Panel {
    let (sc, tc) = (s.center(), t.center());
    let e = eye(sc, s.radius, tc);
    let flat = Vec3::new(tc.x - e.x, 0.0, tc.z - e.z);
    let normal = flat.normalize();
    let side = Vec3::new(normal.z, 0.0, -normal.x);
    let mut center = e + flat * along + side * lateral;
    center.y = 0.0;
    Panel {
        center: Vec3::new(mm(center.x), 0.0, mm(center.z)),
        normal,
        width: mm(width),
        height: mm(height),
    }
}

fn room_structure(config: &GeneratorConfig) -> Vec<StructureDoc> {
    let [w, d] = config.room_size;
    let (hx, hz, h) = (w / 2.0, d / 2.0, config.wall_height);
    let mut floor = MeshGeometry::default();
    floor.push_quad(
        [
            Vec3::new(-hx, 0.0, -hz),
            Vec3::new(hx, 0.0, -hz),
            Vec3::new(hx, 0.0, hz),
            Vec3::new(-hx, 0.0, hz),
        ],
        Vec3::Y,
    );
    let mut walls = MeshGeometry::default();
    let corners = [
        Vec3::new(-hx, 0.0, -hz),
        Vec3::new(hx, 0.0, -hz),
        Vec3::new(hx, 0.0, hz),
        Vec3::new(-hx, 0.0, hz),
    ];
    for i in 0..4 {
        let (a, b) = (corners[i], corners[(i + 1) % 4]);
        let mid = (a + b) * 0.5;
        let inward = Vec3::new(-mid.x, 0.0, -mid.z);
        let up = Vec3::new(0.0, h, 0.0);
        walls.push_quad([a, b, b + up, a + up], inward);
    }
    [(floor, FLOOR_COLOR), (walls, WALL_COLOR)]
        .into_iter()
        .map(|(m, color)| StructureDoc {
            owner: 0,
            color,
            vertices: m.vertices,
            triangles: m.triangles,
        })
        .collect()
}

/// An action that is applicable to `attr` given its current value.
fn random_action(rng: &mut ChaCha8Rng, attr: Attribute, current: &str) -> Action {
    let choices: &[Action] = match attr {
        Attribute::Toggled => &[Action::Toggle],
        Attribute::Open => {
            if current == "open" {
                &[Action::Close]
            } else {
                &[Action::Open]
            }
        }
        Attribute::Dirty => {
            if current == "true" {
                &[Action::Clean]
            } else {
                &[Action::Dirty]
            }
        }
        Attribute::Broken => &[Action::Break],
        Attribute::Sliced => &[Action::Slice],
    };
    choices[rng.random_range(0..choices.len())]
}

/// Build a room, its objects and occluders, and QA items with independent
/// truths. Identical `(config, seed)` give identical output.
pub fn generate_suite(config: &GeneratorConfig, seed: u64) -> Result<GeneratedSuite> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let n = rng.random_range(config.objects[0]..=config.objects[1]);
    let mut counters = BTreeMap::new();
    let mut objects: Vec<Placed> = Vec::with_capacity(n);
    for _ in 0..n {
        let p = place_object(&mut rng, config, &objects, &mut counters)?;
        objects.push(p);
    }

    let mut pairs = clear_pairs(&objects);
    pairs.shuffle(&mut rng);
    pairs.truncate(config.questions.visibility);

    let mut panels = Vec::new();
    match config.occluder_style {
        OccluderStyle::Random if !pairs.is_empty() => {
            for k in 0..config.occluders {
                let (i, j) = pairs[k % pairs.len()];
                for _ in 0..config.max_attempts {
                    let panel = panel_between(
                        &objects[i],
                        &objects[j],
                        rng.random_range(0.3..=0.7),
                        rng.random_range(-0.8..=0.8),
                        rng.random_range(0.6..=2.0),
                        rng.random_range(0.4..=2.0),
                    );
                    if panel.fits(&objects, config) {
                        panels.push(panel);
                        break;
                    }
                }
            }
        }
        OccluderStyle::Random => {}
        OccluderStyle::Full => {
            let mut kept = Vec::new();
            for &(i, j) in &pairs {
                let (s, t) = (&objects[i], &objects[j]);
                let e = eye(s.center(), s.radius, t.center());
                let top = e.y.max(t.center().y + t.radius) + 0.3;
                let width = 2.0 * (t.radius + 0.3);
                let placed = (0..config.max_attempts).find_map(|_| {
                    let panel = panel_between(s, t, rng.random_range(0.3..=0.7), 0.0, width, top);
                    panel.fits(&objects, config).then_some(panel)
                });
                if let Some(panel) = placed {
                    panels.push(panel);
                    kept.push((i, j));
                }
            }
            pairs = kept;
        }
    }

    let mut structure = room_structure(config);
    structure.extend(panels.iter().map(Panel::structure));
    let doc = SceneDocument {
        up: Vec3::Y,
        objects: objects
            .iter()
            .map(|p| ObjectDoc {
                id: p.id.clone(),
                primitive: Some(p.primitive.clone()),
                mesh: None,
                sphere: None,
                color: p.color,
                state: p.state.clone(),
                state_colors: p.state_colors.clone(),
            })
            .collect(),
        structure,
    };
    let scene = load_scene(&doc)?;
    let prepared = PreparedScene::new(&scene);

    let mut items = Vec::new();

    let mut categories: Vec<&str> = counters.keys().copied().collect();
    categories.shuffle(&mut rng);
    for cat in categories.iter().cycle().take(config.questions.count) {
        items.push(QAItem {
            question: Question::Count {
                category: cat.to_string(),
            },
            interactions: Vec::new(),
            truth: counters[*cat].to_string(),
            truth_provenance: "object_list".into(),
            visible_fraction: None,
        });
    }

    let stateful: Vec<usize> = (0..objects.len())
        .filter(|&i| !objects[i].kind.attributes.is_empty())
        .collect();
    if !stateful.is_empty() {
        for _ in 0..config.questions.attribute {
            let obj = &objects[stateful[rng.random_range(0..stateful.len())]];
            let attr = obj.kind.attributes[rng.random_range(0..obj.kind.attributes.len())];
            items.push(QAItem {
                question: Question::Attribute {
                    object_id: obj.id.clone(),
                    attribute: attr,
                },
                interactions: Vec::new(),
                truth: obj.state.get(attr).unwrap_or_default().to_string(),
                truth_provenance: "scene_state".into(),
                visible_fraction: None,
            });
        }
        for _ in 0..config.questions.dynamic {
            let obj = &objects[stateful[rng.random_range(0..stateful.len())]];
            let mut state = obj.state.clone();
            let mut events = Vec::new();
            let mut asked = obj.kind.attributes[0];
            for _ in 0..rng.random_range(1..=2) {
                let attr = obj.kind.attributes[rng.random_range(0..obj.kind.attributes.len())];
                let action = random_action(&mut rng, attr, state.get(attr).unwrap_or_default());
                events.push(InteractionEvent::new(action, obj.id.clone()));
                let after = apply_interactions(&scene, &events)?;
                state = after
                    .object(&obj.id)
                    .map(|o| o.state.clone())
                    .unwrap_or_default();
                asked = attr;
            }
            items.push(QAItem {
                question: Question::Attribute {
                    object_id: obj.id.clone(),
                    attribute: asked,
                },
                interactions: events,
                truth: state.get(asked).unwrap_or_default().to_string(),
                truth_provenance: "scene_state".into(),
                visible_fraction: None,
            });
        }
    }

    for &(i, j) in &pairs {
        let (Some(src), Some(tgt)) = (scene.object(&objects[i].id), scene.object(&objects[j].id))
        else {
            continue;
        };
        let fraction = visible_fraction(&prepared, src, tgt, &config.visibility);
        if let Some(visible) = visibility_truth(fraction, &config.visibility) {
            items.push(QAItem {
                question: Question::Visibility {
                    source_id: src.id.clone(),
                    target_id: tgt.id.clone(),
                },
                interactions: Vec::new(),
                truth: if visible { "yes" } else { "no" }.into(),
                truth_provenance: "ray_sampling".into(),
                visible_fraction: Some(fraction),
            });
        }
    }

    Ok(GeneratedSuite {
        scene: doc,
        suite: QASuite {
            scene_ref: SceneRef::Path(PathBuf::from(SCENE_FILE)),
            items,
            seed,
        },
    })
}
