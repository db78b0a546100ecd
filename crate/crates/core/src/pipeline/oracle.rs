//! Deterministic geometric reasoner that reads answers from the id buffers
//! and the state-color tables.

use crate::geometry::Rgb;
use crate::render::RenderedView;
use crate::scene::{ObjectRecord, SceneState};
use crate::viewpoint::SurroundParams;

use super::{
    decide_rendering, specify_rendering, Answer, Plan, Question, Reasoner, RenderDecision, Result,
    Strategy,
};

/// Reference resolution at which `p_min` is stated.
const REFERENCE_PIXELS: f64 = 256.0 * 256.0;
/// Pixels darker than this (max channel) carry no usable hue.
const DARK_LEVEL: u8 = 10;
/// Largest hue angle (radians) at which a pixel still counts as showing a
/// given base color.
const VISIBLE_HUE_TOLERANCE: f64 = 0.12;
/// Largest hue angle at which a pixel votes for a palette color.
const VOTE_HUE_TOLERANCE: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleReasoner {
    /// Visibility pixel threshold at 256×256, scaled with pixel count.
    pub p_min: usize,
}

impl Default for OracleReasoner {
    fn default() -> Self {
        OracleReasoner { p_min: 10 }
    }
}

impl OracleReasoner {
    pub fn new(p_min: usize) -> Self {
        OracleReasoner { p_min }
    }

    /// Threshold for an image of `pixels` pixels, never below one.
    pub fn scaled_threshold(&self, pixels: usize) -> usize {
        ((self.p_min as f64 * pixels as f64 / REFERENCE_PIXELS).round() as usize).max(1)
    }
}

impl Reasoner for OracleReasoner {
    fn name(&self) -> &str {
        "oracle"
    }

    fn plan(
        &self,
        question: &Question,
        objects: &[ObjectRecord],
        _strategy: Strategy,
        params: SurroundParams,
    ) -> Result<Plan> {
        let decision = decide_rendering(question, objects)?;
        let spec = match decision {
            RenderDecision::RequestRendering => Some(specify_rendering(question, objects, params)?),
            RenderDecision::Answer(_) => None,
        };
        Ok(Plan {
            decision,
            spec,
            exchanges: 0,
        })
    }

    fn reason(
        &self,
        question: &Question,
        views: &[RenderedView],
        scene: &SceneState,
        _objects: &[ObjectRecord],
        _strategy: Strategy,
        _stage: u32,
    ) -> Result<Answer> {
        Ok(oracle_reason(question, views, scene, self.p_min))
    }
}

/// Angle between two colors seen as vectors in RGB space.
fn hue_angle(a: Rgb, b: Rgb) -> f64 {
    let a = a.map(f64::from);
    let b = b.map(f64::from);
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let na = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    let nb = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
    if na == 0.0 || nb == 0.0 {
        return std::f64::consts::PI;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0).acos()
}

fn is_dark(c: Rgb) -> bool {
    c.iter().all(|&v| v < DARK_LEVEL)
}

/// Pixels of `view` that belong to `numeric_id` and show `color`.
pub(crate) fn matching_pixels(view: &RenderedView, numeric_id: u16, color: Rgb) -> usize {
    view.ids
        .iter()
        .enumerate()
        .filter(|&(p, &id)| {
            if id != numeric_id {
                return false;
            }
            let c = view.rgb.at(p);
            !is_dark(c) && hue_angle(c, color) <= VISIBLE_HUE_TOLERANCE
        })
        .count()
}

/// Answer from rendered evidence alone (plus the scene's color tables).
///
/// Visibility: "yes" iff the target covers at least the scaled `p_min`
/// pixels showing its current color in the first view. Attribute: pixels of
/// the target vote for the nearest palette color; the winning color is
/// inverted through the state table. Abstains with "unknown" when the target
/// is absent from every view or the color does not pin the attribute down.
pub fn oracle_reason(
    question: &Question,
    views: &[RenderedView],
    scene: &SceneState,
    p_min: usize,
) -> Answer {
    let unknown = || Answer::new(Answer::UNKNOWN).with_confidence(0.0);
    match question {
        Question::Count { category } => {
            let n = scene
                .objects()
                .iter()
                .filter(|o| o.category() == category)
                .count();
            Answer::new(n.to_string()).with_confidence(1.0)
        }
        Question::Visibility { target_id, .. } => {
            let (Some(target), Some(color), Some(view)) = (
                scene.object(target_id),
                scene.object_color(target_id),
                views.first(),
            ) else {
                return unknown();
            };
            let threshold = OracleReasoner::new(p_min).scaled_threshold(view.ids.len());
            let n = matching_pixels(view, target.numeric_id, color);
            let yes = n >= threshold;
            Answer::new(if yes { "yes" } else { "no" }).with_confidence(1.0)
        }
        Question::Attribute {
            object_id,
            attribute,
        } => {
            let (Some(obj), Some(appearance)) =
                (scene.object(object_id), scene.appearance_of(object_id))
            else {
                return unknown();
            };
            let palette = appearance.palette();
            let mut votes = vec![0usize; palette.len()];
            let mut seen = 0usize;
            for view in views {
                for (p, &id) in view.ids.iter().enumerate() {
                    if id != obj.numeric_id {
                        continue;
                    }
                    seen += 1;
                    let c = view.rgb.at(p);
                    if is_dark(c) {
                        continue;
                    }
                    let best = palette
                        .iter()
                        .enumerate()
                        .map(|(i, &pc)| (i, hue_angle(c, pc)))
                        .min_by(|a, b| a.1.total_cmp(&b.1));
                    if let Some((i, angle)) = best {
                        if angle <= VOTE_HUE_TOLERANCE {
                            votes[i] += 1;
                        }
                    }
                }
            }
            if seen == 0 {
                return unknown();
            }
            let total: usize = votes.iter().sum();
            // ties go to the earlier palette entry
            let Some((winner, &count)) = votes
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                .filter(|(_, &c)| c > 0)
            else {
                return unknown();
            };
            let color = palette[winner];
            let mut values: Vec<&str> = obj
                .state
                .all_assignments()
                .iter()
                .filter(|s| appearance.resolve(s) == color)
                .filter_map(|s| s.get(*attribute))
                .collect();
            values.sort_unstable();
            values.dedup();
            match values.as_slice() {
                [v] => Answer::new(*v).with_confidence(count as f64 / total as f64),
                _ => unknown(),
            }
        }
    }
}
