//! Two-stage question answering over a scene.
//!
//! 1. Gate: count questions are answered straight from the object list;
//!    everything else requests rendering.
//! 2. Specify: attribute questions render a surround ring around the object,
//!    visibility questions a single directional view from source to target.
//!
//! Poses are synthesized from the object anchors, the scene is ray cast, and
//! the views go to a [`Reasoner`].

mod external;
mod oracle;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::perturb::{PerturbConfig, PerturbError};
use crate::render::{self, PreparedScene, RenderError, RenderedView, Skip};
use crate::scene::{category_of, Attribute, ObjectRecord, SceneError, SceneState};
use crate::viewpoint::{
    directional_pose, surround_poses, Anchors, CameraIntrinsics, CameraPose, RenderSpec,
    SurroundParams, ViewpointError,
};

pub use external::{
    ExternalReasoner, HttpTransport, Role, StdioTransport, Transport, WireObject, WireRequest,
    WireResponse, DEFAULT_TIMEOUT, REASONER_URL_ENV,
};
pub use oracle::{oracle_reason, OracleReasoner};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("unknown object `{0}`")]
    UnknownObject(String),
    #[error("object `{object}` has no attribute `{attribute}`")]
    UnknownAttribute {
        object: String,
        attribute: Attribute,
    },
    #[error("anchor arity error: {0}")]
    AnchorArity(String),
    #[error("reasoner unavailable: {0}")]
    ReasonerUnavailable(String),
    #[error("reasoner protocol error: {0}")]
    ReasonerProtocol(String),
    #[error(transparent)]
    Viewpoint(#[from] ViewpointError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Perturb(#[from] PerturbError),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

/// Structured question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Question {
    Count {
        category: String,
    },
    Attribute {
        object_id: String,
        #[serde(rename = "attribute_name", alias = "attribute")]
        attribute: Attribute,
    },
    Visibility {
        source_id: String,
        target_id: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    Attribute,
    Count,
    Visibility,
}

impl QuestionKind {
    pub const ALL: [QuestionKind; 3] = [
        QuestionKind::Attribute,
        QuestionKind::Count,
        QuestionKind::Visibility,
    ];

    pub fn name(self) -> &'static str {
        match self {
            QuestionKind::Attribute => "attribute",
            QuestionKind::Count => "count",
            QuestionKind::Visibility => "visibility",
        }
    }
}

impl fmt::Display for QuestionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn plural(word: &str) -> String {
    let w = word.to_ascii_lowercase();
    if w.ends_with('s') || w.ends_with('x') || w.ends_with("ch") || w.ends_with("sh") {
        format!("{w}es")
    } else if w.ends_with('y') && !w.ends_with("ay") && !w.ends_with("ey") && !w.ends_with("oy") {
        format!("{}ies", &w[..w.len() - 1])
    } else {
        format!("{w}s")
    }
}

fn describe(id: &str) -> String {
    format!("{} ({id})", category_of(id).to_ascii_lowercase())
}

impl Question {
    pub fn kind(&self) -> QuestionKind {
        match self {
            Question::Count { .. } => QuestionKind::Count,
            Question::Attribute { .. } => QuestionKind::Attribute,
            Question::Visibility { .. } => QuestionKind::Visibility,
        }
    }

    /// English phrasing used on the wire to external reasoners.
    pub fn to_natural_language(&self) -> String {
        match self {
            Question::Count { category } => {
                format!("How many {} are in the room?", plural(category))
            }
            Question::Attribute {
                object_id,
                attribute,
            } => {
                let obj = describe(object_id);
                match attribute {
                    Attribute::Toggled => format!("Is the {obj} turned on or off?"),
                    Attribute::Open => format!("Is the {obj} open or closed?"),
                    Attribute::Broken => format!("Is the {obj} broken?"),
                    Attribute::Dirty => format!("Is the {obj} dirty?"),
                    Attribute::Sliced => format!("Is the {obj} sliced?"),
                }
            }
            Question::Visibility {
                source_id,
                target_id,
            } => format!(
                "Is the {} visible from the {}?",
                describe(target_id),
                describe(source_id)
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

impl Answer {
    pub const UNKNOWN: &'static str = "unknown";

    pub fn new(text: impl Into<String>) -> Self {
        let text = text.into();
        Answer {
            text: if text.trim().is_empty() {
                Self::UNKNOWN.to_string()
            } else {
                text
            },
            confidence: None,
        }
    }

    pub fn with_confidence(mut self, c: f64) -> Self {
        self.confidence = Some(c.clamp(0.0, 1.0));
        self
    }
}

/// Outcome of the gating step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderDecision {
    Answer(Answer),
    RequestRendering,
}

/// How many reasoner exchanges carry the rendering decisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Strategy {
    /// Necessity, mode and anchors in one exchange.
    #[serde(rename = "1step")]
    OneStep,
    /// Necessity first, then mode and anchors together.
    #[default]
    #[serde(rename = "2step")]
    TwoStep,
    /// Necessity, mode, anchors as three exchanges.
    #[serde(rename = "3step")]
    ThreeStep,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::OneStep, Strategy::TwoStep, Strategy::ThreeStep];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::OneStep => "1step",
            Strategy::TwoStep => "2step",
            Strategy::ThreeStep => "3step",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "1" | "1step" | "1-step" => Ok(Strategy::OneStep),
            "2" | "2step" | "2-step" => Ok(Strategy::TwoStep),
            "3" | "3step" | "3-step" => Ok(Strategy::ThreeStep),
            other => Err(format!("unknown strategy `{other}` (expected 1, 2 or 3)")),
        }
    }
}

/// Audit record of one `answer` call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryTrace {
    pub question: Question,
    pub decision: RenderDecision,
    pub spec: Option<RenderSpec>,
    pub poses: Vec<CameraPose>,
    pub view_paths: Vec<String>,
    pub reasoner_name: String,
    pub strategy: Strategy,
    /// Reasoner round-trips spent on rendering decisions.
    pub planning_exchanges: usize,
}

impl QueryTrace {
    pub fn rendered(&self) -> bool {
        matches!(self.decision, RenderDecision::RequestRendering)
    }
}

fn find<'a>(objects: &'a [ObjectRecord], id: &str) -> Result<&'a ObjectRecord> {
    objects
        .iter()
        .find(|o| o.id == id)
        .ok_or_else(|| PipelineError::UnknownObject(id.to_string()))
}

/// Check that every id, category and attribute the question mentions exists.
pub fn validate_question(question: &Question, objects: &[ObjectRecord]) -> Result<()> {
    match question {
        Question::Count { category } => {
            if !objects.iter().any(|o| o.category() == category) {
                return Err(PipelineError::UnknownObject(category.clone()));
            }
        }
        Question::Attribute {
            object_id,
            attribute,
        } => {
            let obj = find(objects, object_id)?;
            if !obj.state.contains(*attribute) {
                return Err(PipelineError::UnknownAttribute {
                    object: object_id.clone(),
                    attribute: *attribute,
                });
            }
        }
        Question::Visibility {
            source_id,
            target_id,
        } => {
            find(objects, source_id)?;
            find(objects, target_id)?;
        }
    }
    Ok(())
}

/// Gate: answer count questions from the object list, request rendering
/// for everything else.
pub fn decide_rendering(question: &Question, objects: &[ObjectRecord]) -> Result<RenderDecision> {
    validate_question(question, objects)?;
    Ok(match question {
        Question::Count { category } => {
            let n = objects.iter().filter(|o| o.category() == category).count();
            RenderDecision::Answer(Answer::new(n.to_string()).with_confidence(1.0))
        }
        Question::Attribute { .. } | Question::Visibility { .. } => {
            RenderDecision::RequestRendering
        }
    })
}

/// Mode and anchors for a question that requested rendering.
pub fn specify_rendering(
    question: &Question,
    objects: &[ObjectRecord],
    params: SurroundParams,
) -> Result<RenderSpec> {
    validate_question(question, objects)?;
    let anchors = match question {
        Question::Count { .. } => {
            return Err(PipelineError::AnchorArity(
                "count questions are answered without rendering".into(),
            ))
        }
        Question::Attribute { object_id, .. } => Anchors::Surround {
            object_id: object_id.clone(),
        },
        Question::Visibility {
            source_id,
            target_id,
        } => Anchors::Directional {
            source_id: source_id.clone(),
            target_id: target_id.clone(),
        },
    };
    Ok(RenderSpec::new(anchors, params)?)
}

/// Camera poses for a spec, anchored on the given object list.
pub fn synthesize_poses(
    spec: &RenderSpec,
    objects: &[ObjectRecord],
    intrinsics: &CameraIntrinsics,
    up: crate::geometry::Vec3,
) -> Result<Vec<CameraPose>> {
    match &spec.anchors {
        Anchors::Surround { object_id } => {
            let obj = find(objects, object_id)?;
            Ok(surround_poses(
                &obj.sphere,
                intrinsics,
                spec.surround_params(),
                up,
            )?)
        }
        Anchors::Directional {
            source_id,
            target_id,
        } => {
            let src = find(objects, source_id)?;
            let tgt = find(objects, target_id)?;
            Ok(vec![directional_pose(&src.sphere, tgt.sphere.center, up)?])
        }
    }
}

/// A question answerer over rendered evidence.
pub trait Reasoner: Send + Sync {
    fn name(&self) -> &str;

    /// Decide whether to render and, if so, how.
    fn plan(
        &self,
        question: &Question,
        objects: &[ObjectRecord],
        strategy: Strategy,
        params: SurroundParams,
    ) -> Result<Plan>;

    /// Answer from rendered views.
    fn reason(
        &self,
        question: &Question,
        views: &[RenderedView],
        scene: &SceneState,
        objects: &[ObjectRecord],
        strategy: Strategy,
        stage: u32,
    ) -> Result<Answer>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub decision: RenderDecision,
    pub spec: Option<RenderSpec>,
    pub exchanges: usize,
}

/// Rendering and evidence settings for the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub width: usize,
    pub height: usize,
    /// Vertical field of view, radians.
    pub fov_v: f64,
    pub near: f64,
    pub surround: SurroundParams,
    /// Evidence corruption applied to RGB views before reasoning.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corruption: Option<PerturbConfig>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            width: 256,
            height: 256,
            fov_v: 90f64.to_radians(),
            near: 0.01,
            surround: SurroundParams::default(),
            corruption: None,
        }
    }
}

impl PipelineConfig {
    pub fn intrinsics(&self) -> CameraIntrinsics {
        CameraIntrinsics {
            fov_v: self.fov_v,
            aspect: self.width as f64 / self.height.max(1) as f64,
            near: self.near,
        }
    }
}

/// Answer plus its trace and the (possibly corrupted) evidence views.
#[derive(Debug, Clone)]
pub struct Answered {
    pub answer: Answer,
    pub trace: QueryTrace,
    pub views: Vec<RenderedView>,
}

/// Render evidence for `spec`: one view per pose. Directional views skip the
/// source object's own triangles within twice the near distance.
pub fn render_evidence(
    scene: &SceneState,
    spec: &RenderSpec,
    objects: &[ObjectRecord],
    config: &PipelineConfig,
) -> Result<(Vec<CameraPose>, Vec<RenderedView>)> {
    let intrinsics = config.intrinsics();
    intrinsics.validate()?;
    let poses = synthesize_poses(spec, objects, &intrinsics, scene.up())?;
    let skip = match &spec.anchors {
        Anchors::Directional { source_id, .. } => {
            let owner = scene
                .object(source_id)
                .ok_or_else(|| PipelineError::UnknownObject(source_id.clone()))?
                .numeric_id;
            Some(Skip {
                owner,
                within: 2.0 * intrinsics.near,
            })
        }
        Anchors::Surround { .. } => None,
    };
    let prepared = PreparedScene::new(scene);
    let mut views = Vec::with_capacity(poses.len());
    for pose in &poses {
        let mut view = render::render_with(
            &prepared,
            pose,
            &intrinsics,
            config.width,
            config.height,
            skip,
        )?;
        if let Some(c) = config.corruption.filter(PerturbConfig::corrupts_images) {
            view.rgb = c.corrupt(&view.rgb);
        }
        views.push(view);
    }
    Ok((poses, views))
}

/// Full question answering against `scene`, using the scene's own object list.
pub fn answer(
    question: &Question,
    scene: &SceneState,
    reasoner: &dyn Reasoner,
    strategy: Strategy,
    config: &PipelineConfig,
) -> Result<Answered> {
    answer_with_objects(question, scene, scene.objects(), reasoner, strategy, config)
}

/// Like [`answer`], but plans and places cameras from `objects`, which may
/// differ from the scene's records (e.g. perturbed spheres).
pub fn answer_with_objects(
    question: &Question,
    scene: &SceneState,
    objects: &[ObjectRecord],
    reasoner: &dyn Reasoner,
    strategy: Strategy,
    config: &PipelineConfig,
) -> Result<Answered> {
    let plan = reasoner.plan(question, objects, strategy, config.surround)?;
    let mut trace = QueryTrace {
        question: question.clone(),
        decision: plan.decision.clone(),
        spec: plan.spec.clone(),
        poses: Vec::new(),
        view_paths: Vec::new(),
        reasoner_name: reasoner.name().to_string(),
        strategy,
        planning_exchanges: plan.exchanges,
    };
    match (&plan.decision, &plan.spec) {
        (RenderDecision::Answer(a), _) => {
            trace.spec = None;
            Ok(Answered {
                answer: a.clone(),
                trace,
                views: Vec::new(),
            })
        }
        (RenderDecision::RequestRendering, Some(spec)) => {
            let (poses, views) = render_evidence(scene, spec, objects, config)?;
            trace.poses = poses;
            let stage = u32::try_from(plan.exchanges).unwrap_or(u32::MAX) + 1;
            let answer = reasoner.reason(question, &views, scene, objects, strategy, stage)?;
            Ok(Answered {
                answer,
                trace,
                views,
            })
        }
        (RenderDecision::RequestRendering, None) => Err(PipelineError::AnchorArity(
            "rendering requested without a specification".into(),
        )),
    }
}

/// Write the views (`view_XX.ppm` / `view_XX.ids.pgm`) and `trace.json`
/// into `dir`, recording the view paths in the trace.
pub fn write_trace(dir: &Path, answered: &mut Answered) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    answered.trace.view_paths.clear();
    for (i, view) in answered.views.iter().enumerate() {
        let (rgb, ids) = render::view_file_names(i);
        render::write_view(view, &dir.join(&rgb), &dir.join(&ids)).map_err(|e| match e {
            RenderError::Io(io) => io,
            other => std::io::Error::other(other.to_string()),
        })?;
        answered.trace.view_paths.push(rgb);
        answered.trace.view_paths.push(ids);
    }
    let json = serde_json::to_string_pretty(&answered.trace).map_err(std::io::Error::other)?;
    std::fs::write(dir.join("trace.json"), json + "\n")
}
