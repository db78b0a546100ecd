//! Benchmark harness: answer scoring, synthetic suites with independent
//! ground truth, suite runs and robustness sweeps.

mod generate;
mod matching;
mod truth;

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::perturb::{PerturbConfig, PerturbError};
use crate::pipeline::{
    answer_with_objects, ExternalReasoner, PipelineConfig, Question, QuestionKind, Reasoner,
    Strategy,
};
use crate::scene::{
    apply_interactions, load_scene, InteractionEvent, SceneDocument, SceneError, SceneState,
};

pub use generate::{generate_suite, GeneratedSuite, GeneratorConfig, OccluderStyle, QuestionMix};
pub use matching::{binary_match, normalize, parse_count, polarity, Polarity};
pub use truth::{sample_hemisphere, visibility_truth, visible_fraction, VisibilityTruthConfig};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("generator config error: {0}")]
    Config(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Perturb(#[from] PerturbError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = BenchError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QAItem {
    pub question: Question,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub interactions: Vec<InteractionEvent>,
    pub truth: String,
    /// How the truth was obtained (`object_list`, `scene_state`, `ray_sampling`).
    pub truth_provenance: String,
    /// Unoccluded hemisphere fraction behind a visibility truth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visible_fraction: Option<f64>,
}

/// Where a suite's scene lives: a path (relative to the suite file) or inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SceneRef {
    Path(PathBuf),
    Inline(Box<SceneDocument>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QASuite {
    pub scene_ref: SceneRef,
    pub items: Vec<QAItem>,
    pub seed: u64,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| BenchError::Json {
        path: path.to_path_buf(),
        source,
    })
}

impl QASuite {
    pub fn read(path: &Path) -> Result<Self> {
        read_json(path)
    }

    /// Load the referenced scene; relative paths resolve against `base_dir`.
    pub fn load_scene(&self, base_dir: &Path) -> Result<SceneState> {
        let doc = match &self.scene_ref {
            SceneRef::Inline(doc) => (**doc).clone(),
            SceneRef::Path(p) => read_json(&base_dir.join(p))?,
        };
        Ok(load_scene(&doc)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub index: usize,
    pub kind: QuestionKind,
    pub truth: String,
    pub prediction: Option<String>,
    #[serde(rename = "match")]
    pub matched: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Number of views rendered for the answer.
    pub views: usize,
    pub strategy: Strategy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KindSummary {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub reasoner: String,
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturb: Option<PerturbConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    pub per_kind: BTreeMap<QuestionKind, KindSummary>,
    pub accuracy: f64,
    pub items: Vec<ItemResult>,
}

fn summarize(matches: impl Iterator<Item = u8>) -> KindSummary {
    let (mut n, mut correct) = (0, 0);
    for m in matches {
        n += 1;
        correct += usize::from(m);
    }
    KindSummary {
        n,
        correct,
        accuracy: if n == 0 {
            0.0
        } else {
            correct as f64 / n as f64
        },
    }
}

impl Report {
    fn new(
        reasoner: String,
        strategy: Strategy,
        perturb: Option<PerturbConfig>,
        items: Vec<ItemResult>,
    ) -> Self {
        let per_kind = QuestionKind::ALL
            .iter()
            .filter(|k| items.iter().any(|i| i.kind == **k))
            .map(|&k| {
                (
                    k,
                    summarize(items.iter().filter(|i| i.kind == k).map(|i| i.matched)),
                )
            })
            .collect();
        let accuracy = summarize(items.iter().map(|i| i.matched)).accuracy;
        Report {
            reasoner,
            strategy,
            perturb,
            axis: None,
            value: None,
            per_kind,
            accuracy,
            items,
        }
    }

    pub fn kind_accuracy(&self, kind: QuestionKind) -> Option<f64> {
        self.per_kind.get(&kind).map(|s| s.accuracy)
    }
}

/// Settings shared by every item of a run.
#[derive(Clone, Copy)]
pub struct RunOptions<'a> {
    pub pipeline: PipelineConfig,
    pub strategy: Strategy,
    /// Score with an external judge instead of [`binary_match`].
    pub judge: Option<&'a ExternalReasoner>,
    /// Evaluate items concurrently (results keep item order either way).
    pub parallel: bool,
}

impl Default for RunOptions<'_> {
    fn default() -> Self {
        RunOptions {
            pipeline: PipelineConfig::default(),
            strategy: Strategy::default(),
            judge: None,
            parallel: true,
        }
    }
}

/// Answer every item against its own copy of `scene` and score it.
///
/// `perturb.lambda` jitters the object list used for planning and camera
/// placement (one draw for the whole run); `delta`/`gamma` corrupt the
/// rendered views. Item failures score 0 and never abort the run.
pub fn run_suite(
    suite: &QASuite,
    scene: &SceneState,
    reasoner: &dyn Reasoner,
    perturb: Option<PerturbConfig>,
    options: &RunOptions<'_>,
) -> Result<Report> {
    if let Some(p) = &perturb {
        p.validate()?;
    }
    let noisy = match &perturb {
        Some(p) => p.perturb_objects(scene.objects())?,
        None => scene.objects().to_vec(),
    };
    let mut config = options.pipeline;
    config.corruption = perturb.filter(PerturbConfig::corrupts_images);

    let run_item = |(index, item): (usize, &QAItem)| -> ItemResult {
        let outcome = apply_interactions(scene, &item.interactions)
            .map_err(|e| e.to_string())
            .and_then(|current| {
                // perturbed spheres, current attribute state
                let objects: Vec<_> = noisy
                    .iter()
                    .zip(current.objects())
                    .map(|(n, c)| crate::scene::ObjectRecord {
                        state: c.state.clone(),
                        ..n.clone()
                    })
                    .collect();
                answer_with_objects(
                    &item.question,
                    &current,
                    &objects,
                    reasoner,
                    options.strategy,
                    &config,
                )
                .map_err(|e| e.to_string())
            });
        let (prediction, views, mut error) = match outcome {
            Ok(a) => (Some(a.answer.text), a.views.len(), None),
            Err(e) => (None, 0, Some(e)),
        };
        let matched = match (&prediction, options.judge) {
            (None, _) => 0,
            (Some(p), None) => binary_match(p, &item.truth, &item.question),
            (Some(p), Some(judge)) => match judge.judge(&item.question, p, &item.truth) {
                Ok(ok) => u8::from(ok),
                Err(e) => {
                    error = Some(format!("judge: {e}"));
                    0
                }
            },
        };
        ItemResult {
            index,
            kind: item.question.kind(),
            truth: item.truth.clone(),
            prediction,
            matched,
            error,
            views,
            strategy: options.strategy,
        }
    };
    let items: Vec<ItemResult> = if options.parallel {
        suite.items.par_iter().enumerate().map(run_item).collect()
    } else {
        suite.items.iter().enumerate().map(run_item).collect()
    };
    Ok(Report::new(
        reasoner.name().to_string(),
        options.strategy,
        perturb,
        items,
    ))
}

/// Value lists for a robustness sweep. Each axis is swept with the others
/// held at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    #[serde(default)]
    pub delta: Vec<f64>,
    #[serde(default)]
    pub gamma: Vec<f64>,
    #[serde(default)]
    pub lambda: Vec<f64>,
    /// Seed for the localization noise.
    #[serde(default)]
    pub rng_seed: u64,
}

impl SweepGrid {
    pub fn read(path: &Path) -> Result<Self> {
        read_json(path)
    }

    /// `(axis, value, config)` for every grid point in axis order.
    pub fn points(&self) -> Vec<(&'static str, f64, PerturbConfig)> {
        let base = PerturbConfig {
            rng_seed: self.rng_seed,
            ..PerturbConfig::default()
        };
        let mut out = Vec::new();
        for &v in &self.delta {
            out.push(("delta", v, PerturbConfig { delta: v, ..base }));
        }
        for &v in &self.gamma {
            out.push(("gamma", v, PerturbConfig { gamma: v, ..base }));
        }
        for &v in &self.lambda {
            out.push(("lambda", v, PerturbConfig { lambda: v, ..base }));
        }
        out
    }
}

/// One report per grid point, tagged with its axis and value.
pub fn run_sweep(
    suite: &QASuite,
    scene: &SceneState,
    reasoner: &dyn Reasoner,
    grid: &SweepGrid,
    options: &RunOptions<'_>,
) -> Result<Vec<Report>> {
    grid.points()
        .into_iter()
        .map(|(axis, value, config)| {
            let mut report = run_suite(suite, scene, reasoner, Some(config), options)?;
            report.axis = Some(axis.to_string());
            report.value = Some(value);
            Ok(report)
        })
        .collect()
}

/// CSV with columns `kind,axis,value,accuracy,n`, one row per kind per report.
pub fn sweep_csv(reports: &[Report]) -> String {
    let mut out = String::from("kind,axis,value,accuracy,n\n");
    for r in reports {
        for (kind, s) in &r.per_kind {
            out.push_str(&format!(
                "{kind},{},{},{},{}\n",
                r.axis.as_deref().unwrap_or(""),
                r.value.map(|v| v.to_string()).unwrap_or_default(),
                s.accuracy,
                s.n
            ));
        }
    }
    out
}
