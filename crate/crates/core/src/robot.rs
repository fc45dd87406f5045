//! The simulated annotator: picks the worst frame each round and turns its
//! errors into clicks with one of the three strategies.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interactions::{
    cap_per_round, error_regions, min_region_pixels, strategy_f1, strategy_f2, strategy_f3, Click, ErrorRegions,
    InteractionError, Polarity, Scribble, ScribbleClick,
};
use crate::mask::{skeletonize, LabelMask, MaskError, ObjectId, BACKGROUND};
use crate::metrics::FrameScore;
use crate::scheduler::SessionState;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RobotError {
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Interaction(#[from] InteractionError),
    #[error("ground truth has no frames")]
    NoFrames,
    #[error("ground truth declares no objects")]
    NoObjects,
    #[error("object id 0 is reserved for background")]
    BackgroundObject,
    #[error("frame {frame_index} is {found:?}, expected {expected:?}")]
    FrameSize {
        frame_index: usize,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("frame {frame_index} contains undeclared label {label}")]
    UndeclaredLabel { frame_index: usize, label: ObjectId },
    #[error("round budget of {max_rounds} already used")]
    BudgetExhausted { max_rounds: u32 },
    #[error("no frame scores to choose from")]
    NoScores,
    #[error("{0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    F1,
    F2,
    F3,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::F1 => "f1",
            Strategy::F2 => "f2",
            Strategy::F3 => "f3",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "f1" => Ok(Strategy::F1),
            "f2" => Ok(Strategy::F2),
            "f3" => Ok(Strategy::F3),
            other => Err(format!("unknown strategy `{other}` (expected f1, f2 or f3)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetConfig {
    pub max_rounds: u32,
    /// Only used by the wall-clock metrics.
    pub time_budget_per_object_seconds: f64,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self {
            max_rounds: 8,
            time_budget_per_object_seconds: 30.0,
        }
    }
}

impl BudgetConfig {
    /// Total wall-clock budget for a sequence with `num_objects` objects.
    pub fn time_budget_seconds(&self, num_objects: usize) -> f64 {
        self.time_budget_per_object_seconds * num_objects as f64 * f64::from(self.max_rounds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotConfig {
    pub strategy: Strategy,
    /// Per object and round.
    pub max_clicks: usize,
    /// Smallest erroneous region worth a click, as a fraction of the frame.
    pub min_region_fraction: f64,
    pub budget: BudgetConfig,
}

impl Default for RobotConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::F3,
            max_clicks: 3,
            min_region_fraction: 0.001,
            budget: BudgetConfig::default(),
        }
    }
}

impl RobotConfig {
    pub fn validate(&self) -> Result<(), RobotError> {
        if self.max_clicks == 0 {
            return Err(RobotError::InvalidConfig("max_clicks must be at least 1".into()));
        }
        if self.budget.max_rounds == 0 {
            return Err(RobotError::InvalidConfig("max_rounds must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.min_region_fraction) {
            return Err(RobotError::InvalidConfig(format!(
                "min region area must be a fraction in [0, 1), got {}",
                self.min_region_fraction
            )));
        }
        let t = self.budget.time_budget_per_object_seconds;
        if !(t > 0.0 && t.is_finite()) {
            return Err(RobotError::InvalidConfig(format!("time budget must be positive, got {t}")));
        }
        Ok(())
    }
}

/// Reference annotations for a whole sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    frames: Vec<LabelMask>,
    object_ids: BTreeSet<ObjectId>,
}

impl GroundTruth {
    pub fn new(frames: Vec<LabelMask>, object_ids: BTreeSet<ObjectId>) -> Result<Self, RobotError> {
        let first = frames.first().ok_or(RobotError::NoFrames)?;
        if object_ids.is_empty() {
            return Err(RobotError::NoObjects);
        }
        if object_ids.contains(&BACKGROUND) {
            return Err(RobotError::BackgroundObject);
        }
        let expected = first.dims();
        for (frame_index, f) in frames.iter().enumerate() {
            if f.dims() != expected {
                return Err(RobotError::FrameSize {
                    frame_index,
                    expected,
                    found: f.dims(),
                });
            }
            if let Some(&label) = f.labels().iter().find(|&&l| l != BACKGROUND && !object_ids.contains(&l)) {
                return Err(RobotError::UndeclaredLabel { frame_index, label });
            }
        }
        Ok(Self { frames, object_ids })
    }

    /// Declares every label that occurs in any frame.
    pub fn from_frames(frames: Vec<LabelMask>) -> Result<Self, RobotError> {
        let ids = frames.iter().flat_map(|f| f.object_ids()).collect();
        Self::new(frames, ids)
    }

    pub fn frames(&self) -> &[LabelMask] {
        &self.frames
    }

    pub fn frame(&self, index: usize) -> Option<&LabelMask> {
        self.frames.get(index)
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn object_ids(&self) -> &BTreeSet<ObjectId> {
        &self.object_ids
    }

    pub fn dims(&self) -> (usize, usize) {
        self.frames[0].dims()
    }
}

/// What the robot does in one round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundAnnotation {
    pub round: u32,
    pub frame_index: usize,
    pub clicks: Vec<Click>,
}

impl RoundAnnotation {
    /// No clicks: the robot has nothing left to correct.
    pub fn is_stop(&self) -> bool {
        self.clicks.is_empty()
    }
}

/// Frame with the lowest mean J&F; the earliest one on ties.
pub fn worst_frame(scores: &[FrameScore]) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for s in scores {
        let m = s.mean_jf();
        let better = match best {
            None => true,
            Some((bm, bi)) => m < bm || (m == bm && s.frame_index < bi),
        };
        if better {
            best = Some((m, s.frame_index));
        }
    }
    best.map(|(_, i)| i)
}

/// One skeleton scribble per erroneous region of at least `min_area`
/// pixels, largest first, at most `max_regions` of them. Missed object
/// pixels give scribbles labelled with the object; wrongly claimed pixels
/// give background scribbles.
pub fn synthesize_scribbles(
    regions: &ErrorRegions,
    frame_index: usize,
    min_area: usize,
    max_regions: usize,
) -> Vec<Scribble> {
    regions
        .ranked()
        .into_iter()
        .filter(|(r, _)| r.area() >= min_area)
        .take(max_regions)
        .map(|(r, polarity)| Scribble {
            object_id: match polarity {
                Polarity::Positive => regions.object_id,
                Polarity::Negative => BACKGROUND,
            },
            path: skeletonize(r, regions.mask_for(polarity)),
            frame_index,
        })
        .collect()
}

fn resolve_all(points: impl IntoIterator<Item = ScribbleClick>, pred: &LabelMask) -> Vec<Click> {
    points.into_iter().filter_map(|p| p.resolve(pred)).collect()
}

fn clicks_from_recorded(
    scribbles: &[Scribble],
    strategy: Strategy,
    pred: &LabelMask,
) -> Result<Vec<Click>, RobotError> {
    let (w, h) = pred.dims();
    for s in scribbles {
        if let Some(p) = s.path.iter().find(|p| p.x >= w || p.y >= h) {
            return Err(MaskError::OutOfBounds {
                x: p.x,
                y: p.y,
                width: w,
                height: h,
            }
            .into());
        }
    }
    Ok(match strategy {
        Strategy::F1 => {
            let ids: BTreeSet<ObjectId> = scribbles.iter().map(|s| s.object_id).collect();
            let mut points = Vec::new();
            for o in ids {
                let group: Vec<Scribble> = scribbles.iter().filter(|s| s.object_id == o).cloned().collect();
                points.push(strategy_f1(&group)?);
            }
            resolve_all(points, pred)
        }
        Strategy::F2 => resolve_all(strategy_f2(scribbles)?, pred),
        Strategy::F3 => unreachable!("f3 never reads scribbles"),
    })
}

fn clicks_from_errors(
    state: &SessionState,
    gt: &GroundTruth,
    frame_index: usize,
    config: &RobotConfig,
    per_object: usize,
) -> Result<Vec<Click>, RobotError> {
    let pred = state.labels(frame_index);
    let truth = &gt.frames()[frame_index];
    let (w, h) = truth.dims();
    let min_area = min_region_pixels(config.min_region_fraction, w, h).max(1);
    let mut clicks = Vec::new();
    for &o in gt.object_ids() {
        let errors = error_regions(pred, truth, o)?;
        match config.strategy {
            Strategy::F3 => clicks.extend(strategy_f3(&errors, frame_index, per_object, min_area)),
            Strategy::F1 | Strategy::F2 => {
                let scribbles = synthesize_scribbles(&errors, frame_index, min_area, per_object);
                if scribbles.is_empty() {
                    continue;
                }
                if config.strategy == Strategy::F1 {
                    clicks.extend(resolve_all([strategy_f1(&scribbles)?], pred));
                } else {
                    clicks.extend(resolve_all(strategy_f2(&scribbles)?, pred));
                }
            }
        }
    }
    Ok(clicks)
}

/// Decides the next round's frame and clicks.
///
/// In round 1, recorded scribbles (one list per frame) are used when
/// present: the first frame with any scribble is annotated, and for f1/f2
/// the clicks come from those scribbles. Otherwise, and in every later
/// round, the robot annotates the worst frame of the current prediction
/// (all background before round 1). An annotation without clicks means
/// there is nothing left worth correcting.
pub fn next_annotation(
    state: &SessionState,
    gt: &GroundTruth,
    config: &RobotConfig,
    recorded: Option<&[Vec<Scribble>]>,
) -> Result<RoundAnnotation, RobotError> {
    config.validate()?;
    if state.round() >= config.budget.max_rounds {
        return Err(RobotError::BudgetExhausted {
            max_rounds: config.budget.max_rounds,
        });
    }
    let round = state.round() + 1;
    let recorded_frame = recorded
        .filter(|_| round == 1)
        .and_then(|frames| frames.iter().position(|f| !f.is_empty()))
        .filter(|&i| i < gt.num_frames());

    let (frame_index, clicks) = match (recorded_frame, config.strategy) {
        (Some(i), Strategy::F1 | Strategy::F2) => {
            let scribbles: Vec<Scribble> = recorded.expect("frame came from it")[i]
                .iter()
                .cloned()
                .map(|s| Scribble { frame_index: i, ..s })
                .collect();
            (i, clicks_from_recorded(&scribbles, config.strategy, state.labels(i))?)
        }
        (Some(i), Strategy::F3) => (i, clicks_from_errors(state, gt, i, config, 1)?),
        (None, _) => {
            let i = worst_frame(state.frame_scores()).ok_or(RobotError::NoScores)?;
            if state.frame_scores()[i].is_perfect() {
                (i, Vec::new())
            } else {
                (i, clicks_from_errors(state, gt, i, config, config.max_clicks)?)
            }
        }
    };
    Ok(RoundAnnotation {
        round,
        frame_index,
        clicks: cap_per_round(clicks, config.max_clicks, round),
    })
}
