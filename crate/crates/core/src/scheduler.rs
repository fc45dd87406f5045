//! Round orchestration: which frames a round may touch, which frames serve
//! as memory at each propagation step, and when propagated masks are fused
//! with the ones kept from earlier rounds.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{
    BackendError, Backends, FrameSource, InteractionRequest, MemoryEntry, ProbMask, PropagationRequest, RgbFrame,
};
use crate::interactions::{rasterize_clicks, InteractionError};
use crate::mask::{LabelMask, MaskError, ObjectId};
use crate::metrics::{frame_score, jf_tally, FrameScore, MetricError, RoundCurve};
use crate::robot::{GroundTruth, RoundAnnotation};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchedulerError {
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Interaction(#[from] InteractionError),
    #[error("frame {index} is outside [{first}, {last}]")]
    FrameOutOfRange { index: usize, first: usize, last: usize },
    #[error("annotation is for round {found}, session expects round {expected}")]
    WrongRound { expected: u32, found: u32 },
    #[error("click for frame {click_frame} in an annotation of frame {frame_index}")]
    ClickFrameMismatch { frame_index: usize, click_frame: usize },
    #[error("click targets unknown object {0}")]
    UnknownObject(ObjectId),
    #[error("memory stride must be at least 1")]
    ZeroStride,
}

/// Closest earlier annotations (offset by one) on either side of `i_r`, or
/// the sequence ends when there are none.
pub fn propagation_bounds(
    prev_annotated: &BTreeSet<usize>,
    i_r: usize,
    j0: usize,
    jn: usize,
) -> Result<(usize, usize), SchedulerError> {
    if i_r < j0 || i_r > jn {
        return Err(SchedulerError::FrameOutOfRange {
            index: i_r,
            first: j0,
            last: jn,
        });
    }
    let p_b = prev_annotated.range(..i_r).next_back().map_or(j0, |&i| (i + 1).max(j0));
    let p_f = prev_annotated.range(i_r + 1..).next().map_or(jn, |&i| (i - 1).min(jn));
    Ok((p_b, p_f))
}

/// `(p_b..i_r, i_r + 1..p_f + 1)`.
pub fn propagation_ranges(p_b: usize, p_f: usize, i_r: usize) -> (Range<usize>, Range<usize>) {
    debug_assert!(p_b <= i_r && i_r <= p_f);
    (p_b..i_r, i_r + 1..p_f + 1)
}

/// Whether each direction ends next to an earlier annotation, in which case
/// its propagated masks are fused with the retained ones.
pub fn fusion_flags(prev_annotated: &BTreeSet<usize>, p_b: usize, p_f: usize) -> (bool, bool) {
    let backward = p_b.checked_sub(1).is_some_and(|i| prev_annotated.contains(&i));
    let forward = prev_annotated.contains(&(p_f + 1));
    (backward, forward)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropagationPlan {
    pub i_r: usize,
    pub p_b: usize,
    pub p_f: usize,
    pub backward: Range<usize>,
    pub forward: Range<usize>,
    pub fuse_backward: bool,
    pub fuse_forward: bool,
}

impl PropagationPlan {
    pub fn new(prev_annotated: &BTreeSet<usize>, i_r: usize, num_frames: usize) -> Result<Self, SchedulerError> {
        let jn = num_frames.checked_sub(1).ok_or(SchedulerError::FrameOutOfRange {
            index: i_r,
            first: 0,
            last: 0,
        })?;
        let (p_b, p_f) = propagation_bounds(prev_annotated, i_r, 0, jn)?;
        let (backward, forward) = propagation_ranges(p_b, p_f, i_r);
        let (fuse_backward, fuse_forward) = fusion_flags(prev_annotated, p_b, p_f);
        Ok(Self {
            i_r,
            p_b,
            p_f,
            backward,
            forward,
            fuse_backward,
            fuse_forward,
        })
    }

    /// Every frame the round may write: `[p_b, p_f]`.
    pub fn span(&self) -> Range<usize> {
        self.p_b..self.p_f + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Backward,
    Forward,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemorySelection {
    pub direction: Direction,
    pub step: usize,
    pub stride: usize,
    /// Ascending.
    pub indices: Vec<usize>,
}

/// Memory frames for step `s` of one direction's pass, which segments frame
/// `i_r - s` (backward) or `i_r + s` (forward).
///
/// The set holds `i_r`, every already-propagated frame of `range` that is a
/// multiple of `stride` away from `i_r`, and the frame segmented in the
/// previous step when it lies in `range`.
pub fn memory_indices(i_r: usize, s: usize, stride: usize, direction: Direction, range: &Range<usize>) -> MemorySelection {
    assert!(s >= 1 && stride >= 1, "step and stride start at 1");
    let mut indices = BTreeSet::from([i_r]);
    let (strided, adjacent): (Vec<usize>, Option<usize>) = match direction {
        Direction::Backward => (
            (i_r.saturating_sub(s - 1)..i_r)
                .filter(|&m| m + s > i_r && (i_r - m).is_multiple_of(stride))
                .collect(),
            i_r.checked_sub(s - 1),
        ),
        Direction::Forward => (
            (i_r + 1..i_r + s).filter(|&m| (m - i_r).is_multiple_of(stride)).collect(),
            Some(i_r + (s - 1)),
        ),
    };
    indices.extend(strided.into_iter().filter(|m| range.contains(m)));
    indices.extend(adjacent.filter(|m| range.contains(m)));
    MemorySelection {
        direction,
        step: s,
        stride,
        indices: indices.into_iter().collect(),
    }
}

/// Soft aggregation: background scores `prod(1 - p_o)`, each object its own
/// probability; the highest score wins, background on exact ties with an
/// object, the lower id on ties between objects.
pub fn aggregate_objects(mask: &ProbMask) -> LabelMask {
    let (w, h) = mask.dims();
    LabelMask::new(w, h, (0..w * h).map(|i| mask.label_at(i)).collect()).expect("dimensions come from a valid mask")
}

/// Everything a session carries from one round to the next.
#[derive(Debug, Clone)]
pub struct SessionState {
    round: u32,
    annotated: Vec<usize>,
    object_ids: BTreeSet<ObjectId>,
    probabilities: Vec<ProbMask>,
    labels: Vec<LabelMask>,
    scores: Vec<FrameScore>,
    tally: (f64, usize),
    curve: RoundCurve,
    tolerance: usize,
    /// Time spent inside rounds, when timing is on.
    clock: Option<Duration>,
}

impl SessionState {
    /// A fresh session predicting background everywhere, scored against
    /// `gt` with boundary tolerance `tolerance`.
    pub fn new(gt: &GroundTruth, tolerance: usize) -> Result<Self, SchedulerError> {
        let (w, h) = gt.dims();
        let empty = ProbMask::empty(w, h, gt.object_ids())?;
        let background = LabelMask::background(w, h)?;
        let n = gt.num_frames();
        let labels = vec![background; n];
        let scores = score_frames(gt, &labels, 0..n, tolerance)?;
        Ok(Self {
            round: 0,
            annotated: Vec::new(),
            object_ids: gt.object_ids().clone(),
            probabilities: vec![empty; n],
            labels,
            tally: jf_tally(&scores),
            scores,
            curve: RoundCurve::new(),
            tolerance,
            clock: None,
        })
    }

    /// A session that continues from existing masks, as if the frames in
    /// `annotated` had been annotated in that order.
    pub fn resume(
        gt: &GroundTruth,
        labels: Vec<LabelMask>,
        annotated: Vec<usize>,
        tolerance: usize,
    ) -> Result<Self, SchedulerError> {
        let mut state = Self::new(gt, tolerance)?;
        if labels.len() != state.num_frames() {
            return Err(SchedulerError::FrameOutOfRange {
                index: labels.len(),
                first: 0,
                last: state.num_frames() - 1,
            });
        }
        for (i, l) in labels.iter().enumerate() {
            crate::mask::dims_match(gt.dims(), l.dims())?;
            if let Some(&o) = l.object_ids().iter().find(|o| !state.object_ids.contains(o)) {
                return Err(SchedulerError::UnknownObject(o));
            }
            state.probabilities[i] = ProbMask::from_labels(l, &state.object_ids);
        }
        if let Some(&index) = annotated.iter().find(|&&i| i >= state.num_frames()) {
            return Err(SchedulerError::FrameOutOfRange {
                index,
                first: 0,
                last: state.num_frames() - 1,
            });
        }
        state.scores = score_frames(gt, &labels, 0..labels.len(), tolerance)?;
        state.tally = jf_tally(&state.scores);
        state.labels = labels;
        state.round = annotated.len() as u32;
        state.annotated = annotated;
        Ok(state)
    }

    /// Timestamps later round samples with the accumulated time spent
    /// inside [`run_round`].
    pub fn enable_timing(&mut self) {
        self.clock.get_or_insert(Duration::ZERO);
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    /// Annotated frames in round order; may repeat.
    pub fn annotated(&self) -> &[usize] {
        &self.annotated
    }

    pub fn annotated_set(&self) -> BTreeSet<usize> {
        self.annotated.iter().copied().collect()
    }

    pub fn num_frames(&self) -> usize {
        self.labels.len()
    }

    pub fn object_ids(&self) -> &BTreeSet<ObjectId> {
        &self.object_ids
    }

    pub fn labels(&self, frame_index: usize) -> &LabelMask {
        &self.labels[frame_index]
    }

    pub fn all_labels(&self) -> &[LabelMask] {
        &self.labels
    }

    pub fn probabilities(&self, frame_index: usize) -> &ProbMask {
        &self.probabilities[frame_index]
    }

    /// Scores of the current prediction, one per frame in frame order.
    pub fn frame_scores(&self) -> &[FrameScore] {
        &self.scores
    }

    /// Mean J&F over every (frame, object) pair of the current prediction.
    pub fn global_jf(&self) -> f64 {
        let (sum, n) = self.tally;
        if n == 0 {
            return 1.0;
        }
        sum / n as f64
    }

    /// Sum and count behind [`Self::global_jf`], for pooling sequences.
    pub fn jf_tally(&self) -> (f64, usize) {
        self.tally
    }

    pub fn curve(&self) -> &RoundCurve {
        &self.curve
    }
}

fn score_frames(
    gt: &GroundTruth,
    labels: &[LabelMask],
    frames: Range<usize>,
    tolerance: usize,
) -> Result<Vec<FrameScore>, SchedulerError> {
    frames
        .map(|i| Ok(frame_score(i, &labels[i], &gt.frames()[i], gt.object_ids(), tolerance)?))
        .collect()
}

/// What a round needs besides the session state.
#[derive(Clone, Copy)]
pub struct RoundContext<'a> {
    pub gt: &'a GroundTruth,
    pub backends: Backends<'a>,
    pub frames: &'a dyn FrameSource,
    pub stride: usize,
    pub click_radius: usize,
}

/// Per-round frame cache so each frame is read at most once.
struct FrameCache<'a> {
    source: &'a dyn FrameSource,
    wanted: bool,
    loaded: BTreeMap<usize, Option<Arc<RgbFrame>>>,
}

impl FrameCache<'_> {
    fn get(&mut self, index: usize) -> Result<Option<Arc<RgbFrame>>, BackendError> {
        if !self.wanted {
            return Ok(None);
        }
        if let Some(f) = self.loaded.get(&index) {
            return Ok(f.clone());
        }
        let f = self.source.frame(index)?;
        self.loaded.insert(index, f.clone());
        Ok(f)
    }
}

fn check_annotation(state: &SessionState, annotation: &RoundAnnotation) -> Result<(), SchedulerError> {
    let expected = state.round + 1;
    if annotation.round != expected {
        return Err(SchedulerError::WrongRound {
            expected,
            found: annotation.round,
        });
    }
    let last = state.num_frames() - 1;
    if annotation.frame_index > last {
        return Err(SchedulerError::FrameOutOfRange {
            index: annotation.frame_index,
            first: 0,
            last,
        });
    }
    for c in &annotation.clicks {
        if c.frame_index != annotation.frame_index {
            return Err(SchedulerError::ClickFrameMismatch {
                frame_index: annotation.frame_index,
                click_frame: c.frame_index,
            });
        }
        if !state.object_ids.contains(&c.object_id) {
            return Err(SchedulerError::UnknownObject(c.object_id));
        }
    }
    Ok(())
}

/// Runs one interaction, propagation and fusion cycle and commits it.
///
/// The interaction backend segments the annotated frame. The backward pass
/// then propagates frame by frame down to `p_b`, the forward pass up to
/// `p_f`, each using only its own direction's memory. Frames outside
/// `[p_b, p_f]` are left alone. On any error the state is unchanged.
///
/// An annotation without clicks only advances the round counter.
pub fn run_round(
    state: &mut SessionState,
    annotation: &RoundAnnotation,
    ctx: &RoundContext<'_>,
) -> Result<PropagationPlan, SchedulerError> {
    let t0 = Instant::now();
    check_annotation(state, annotation)?;
    if ctx.stride == 0 {
        return Err(SchedulerError::ZeroStride);
    }
    let i_r = annotation.frame_index;
    let prev = state.annotated_set();
    let plan = PropagationPlan::new(&prev, i_r, state.num_frames())?;
    if annotation.clicks.is_empty() {
        state.round += 1;
        state.annotated.push(i_r);
        return Ok(plan);
    }

    let b = ctx.backends;
    let mut cache = FrameCache {
        source: ctx.frames,
        wanted: b.interaction.needs_frames() || b.propagation.needs_frames(),
        loaded: BTreeMap::new(),
    };
    let (w, h) = ctx.gt.dims();
    let frame = cache.get(i_r)?;
    let maps = rasterize_clicks(&annotation.clicks, w, h, ctx.click_radius)?;
    let interacted = b.interaction.interact(&InteractionRequest {
        frame_index: i_r,
        frame: frame.as_deref(),
        previous: &state.probabilities[i_r],
        clicks: &annotation.clicks,
        maps: &maps,
    })?;
    interacted.validate(w, h, &state.object_ids)?;

    let mut updated: BTreeMap<usize, ProbMask> = BTreeMap::new();
    for (direction, range, fuse) in [
        (Direction::Backward, plan.backward.clone(), plan.fuse_backward),
        (Direction::Forward, plan.forward.clone(), plan.fuse_forward),
    ] {
        // Raw propagated masks of this pass, used as memory by later steps.
        let mut propagated: BTreeMap<usize, ProbMask> = BTreeMap::from([(i_r, interacted.clone())]);
        let far_anchor = match direction {
            Direction::Backward => plan.p_b.wrapping_sub(1),
            Direction::Forward => plan.p_f + 1,
        };
        for s in 1..=range.len() {
            let target = match direction {
                Direction::Backward => i_r - s,
                Direction::Forward => i_r + s,
            };
            let selection = memory_indices(i_r, s, ctx.stride, direction, &range);
            let mut frames = Vec::with_capacity(selection.indices.len());
            for &m in &selection.indices {
                frames.push((m, cache.get(m)?));
            }
            let memory: Vec<MemoryEntry<'_>> = frames
                .iter()
                .map(|(m, f)| MemoryEntry {
                    frame_index: *m,
                    frame: f.as_deref(),
                    mask: &propagated[m],
                })
                .collect();
            let target_frame = cache.get(target)?;
            let mask = b.propagation.propagate(&PropagationRequest {
                target_index: target,
                target_frame: target_frame.as_deref(),
                memory: &memory,
            })?;
            mask.validate(w, h, &state.object_ids)?;
            let kept = if fuse {
                let fused = b
                    .fusion
                    .fuse(&mask, &state.probabilities[target], s, target.abs_diff(far_anchor))?;
                fused.validate(w, h, &state.object_ids)?;
                fused
            } else {
                mask.clone()
            };
            propagated.insert(target, mask);
            updated.insert(target, kept);
        }
    }
    updated.insert(i_r, interacted);

    let mut labels = Vec::with_capacity(updated.len());
    let mut scores = Vec::with_capacity(updated.len());
    for (&i, mask) in &updated {
        let l = aggregate_objects(mask);
        scores.push(frame_score(i, &l, &ctx.gt.frames()[i], &state.object_ids, state.tolerance)?);
        labels.push(l);
    }

    for (((i, mask), l), score) in updated.into_iter().zip(labels).zip(scores) {
        state.probabilities[i] = mask;
        state.labels[i] = l;
        state.scores[i] = score;
    }
    state.tally = jf_tally(&state.scores);
    state.round += 1;
    state.annotated.push(i_r);
    let elapsed = state.clock.as_mut().map(|c| {
        *c += t0.elapsed();
        c.as_secs_f64()
    });
    state.curve.push(state.global_jf(), elapsed);
    Ok(plan)
}
