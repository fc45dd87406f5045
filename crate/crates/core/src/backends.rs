//! Segmentation backend contracts and deterministic reference backends.
//!
//! A session talks to three backends: an interaction backend turns clicks on
//! one frame into a mask, a propagation backend carries masks to
//! neighbouring frames from a list of memory frames, and a fusion backend
//! blends a freshly propagated mask with the one kept from earlier rounds.
//!
//! The `oracle_*` and `decay_oracle` backends read ground truth. They exist
//! to drive the harness under controlled conditions and say nothing about
//! any real method's accuracy.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interactions::{Click, InteractionMaps, Polarity};
use crate::mask::{erode, LabelMask, MaskError, ObjectId, PixelCoord, BACKGROUND};
use crate::robot::GroundTruth;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error("memory list is empty")]
    EmptyMemory,
    #[error("backend `{backend}` needs frame pixels but frame {frame_index} has none")]
    MissingFrame { backend: &'static str, frame_index: usize },
    #[error("frame {frame_index} is outside the sequence ({num_frames} frames)")]
    FrameOutOfRange { frame_index: usize, num_frames: usize },
    #[error("probability masks cover different objects")]
    ObjectMismatch,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("could not load frame {frame_index}: {reason}")]
    FrameLoad { frame_index: usize, reason: String },
}

/// Per-object soft masks in `[0, 1]` sharing one frame size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbMask {
    width: usize,
    height: usize,
    objects: BTreeMap<ObjectId, Vec<f32>>,
}

impl ProbMask {
    /// All-zero channels for the given objects.
    pub fn empty(width: usize, height: usize, objects: &BTreeSet<ObjectId>) -> Result<Self, MaskError> {
        if width == 0 || height == 0 {
            return Err(MaskError::EmptyDimensions { width, height });
        }
        Ok(Self {
            width,
            height,
            objects: objects.iter().map(|&o| (o, vec![0.0; width * height])).collect(),
        })
    }

    /// Hard masks: probability 1 where the label matches the object.
    pub fn from_labels(labels: &LabelMask, objects: &BTreeSet<ObjectId>) -> Self {
        Self {
            width: labels.width(),
            height: labels.height(),
            objects: objects
                .iter()
                .map(|&o| (o, labels.labels().iter().map(|&l| if l == o { 1.0 } else { 0.0 }).collect()))
                .collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn object_ids(&self) -> impl Iterator<Item = ObjectId> + '_ {
        self.objects.keys().copied()
    }

    pub fn channel(&self, object_id: ObjectId) -> Option<&[f32]> {
        self.objects.get(&object_id).map(Vec::as_slice)
    }

    pub fn channel_mut(&mut self, object_id: ObjectId) -> Option<&mut [f32]> {
        self.objects.get_mut(&object_id).map(Vec::as_mut_slice)
    }

    pub fn channels(&self) -> impl Iterator<Item = (ObjectId, &[f32])> {
        self.objects.iter().map(|(&o, v)| (o, v.as_slice()))
    }

    /// Sets `object_id` to `value` at pixel `index`; with `exclusive`, every
    /// other object drops to 0 there.
    fn assign(&mut self, index: usize, object_id: ObjectId, value: f32, exclusive: bool) {
        for (&o, channel) in self.objects.iter_mut() {
            if o == object_id {
                channel[index] = value;
            } else if exclusive {
                channel[index] = 0.0;
            }
        }
    }

    /// Label at pixel `index` under soft aggregation.
    pub fn label_at(&self, index: usize) -> ObjectId {
        let background: f64 = self.objects.values().map(|c| 1.0 - f64::from(c[index])).product();
        let mut best = (BACKGROUND, background);
        for (&o, c) in &self.objects {
            let p = f64::from(c[index]);
            if p > best.1 {
                best = (o, p);
            }
        }
        best.0
    }

    /// Checks the mask covers exactly `objects` at the given size with all
    /// values in `[0, 1]`.
    pub fn validate(&self, width: usize, height: usize, objects: &BTreeSet<ObjectId>) -> Result<(), BackendError> {
        crate::mask::dims_match((width, height), self.dims())?;
        if !self.objects.keys().eq(objects.iter()) {
            return Err(BackendError::ObjectMismatch);
        }
        let bad = self
            .objects
            .values()
            .flatten()
            .any(|v| !(0.0..=1.0).contains(v));
        if bad {
            return Err(BackendError::InvalidParameter("probability outside [0, 1]".into()));
        }
        Ok(())
    }

    fn same_layout(&self, other: &ProbMask) -> Result<(), BackendError> {
        crate::mask::dims_match(self.dims(), other.dims())?;
        if !self.objects.keys().eq(other.objects.keys()) {
            return Err(BackendError::ObjectMismatch);
        }
        Ok(())
    }
}

/// An RGB frame, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbFrame {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl RgbFrame {
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }
}

/// Lazily supplies frame pixels to backends that want them.
pub trait FrameSource: Sync {
    fn frame(&self, index: usize) -> Result<Option<Arc<RgbFrame>>, BackendError>;
}

/// A source with no pixels at all.
pub struct NoFrames;

impl FrameSource for NoFrames {
    fn frame(&self, _index: usize) -> Result<Option<Arc<RgbFrame>>, BackendError> {
        Ok(None)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MemoryEntry<'a> {
    pub frame_index: usize,
    pub frame: Option<&'a RgbFrame>,
    pub mask: &'a ProbMask,
}

pub struct InteractionRequest<'a> {
    pub frame_index: usize,
    pub frame: Option<&'a RgbFrame>,
    pub previous: &'a ProbMask,
    pub clicks: &'a [Click],
    pub maps: &'a InteractionMaps,
}

pub struct PropagationRequest<'a> {
    pub target_index: usize,
    pub target_frame: Option<&'a RgbFrame>,
    pub memory: &'a [MemoryEntry<'a>],
}

pub trait InteractionBackend: Send + Sync {
    fn name(&self) -> &'static str;

    fn needs_frames(&self) -> bool {
        false
    }

    fn interact(&self, request: &InteractionRequest<'_>) -> Result<ProbMask, BackendError>;
}

pub trait PropagationBackend: Send + Sync {
    fn name(&self) -> &'static str;

    fn needs_frames(&self) -> bool {
        false
    }

    fn propagate(&self, request: &PropagationRequest<'_>) -> Result<ProbMask, BackendError>;
}

pub trait FusionBackend: Send + Sync {
    fn name(&self) -> &'static str;

    /// `near_distance` is the frame distance to this round's annotation,
    /// `far_distance` to the earlier annotation that bounds the range.
    fn fuse(
        &self,
        new: &ProbMask,
        previous: &ProbMask,
        near_distance: usize,
        far_distance: usize,
    ) -> Result<ProbMask, BackendError>;
}

/// The three backends a session runs with.
#[derive(Clone, Copy)]
pub struct Backends<'a> {
    pub interaction: &'a dyn InteractionBackend,
    pub propagation: &'a dyn PropagationBackend,
    pub fusion: &'a dyn FusionBackend,
}

/// Flood fill from `seed` over pixels accepted by `inside`; returns pixel
/// indices in visit order.
fn flood(
    width: usize,
    height: usize,
    seed: PixelCoord,
    eight: bool,
    inside: impl Fn(usize) -> bool,
) -> Vec<usize> {
    let start = seed.y * width + seed.x;
    if !inside(start) {
        return Vec::new();
    }
    let mut seen = vec![false; width * height];
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    let mut out = Vec::new();
    while let Some(i) = queue.pop_front() {
        out.push(i);
        let (x, y) = ((i % width) as isize, (i / width) as isize);
        for dy in -1isize..=1 {
            for dx in -1isize..=1 {
                if (dx == 0 && dy == 0) || (!eight && dx != 0 && dy != 0) {
                    continue;
                }
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
                    continue;
                }
                let j = ny as usize * width + nx as usize;
                if !seen[j] && inside(j) {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    out
}

fn current_labels(mask: &ProbMask) -> Vec<ObjectId> {
    (0..mask.width * mask.height).map(|i| mask.label_at(i)).collect()
}

/// Test oracle: each click fixes the whole erroneous ground-truth component
/// it lands in.
pub struct OracleInteraction<'a> {
    gt: &'a GroundTruth,
}

impl<'a> OracleInteraction<'a> {
    pub fn new(gt: &'a GroundTruth) -> Self {
        Self { gt }
    }
}

impl InteractionBackend for OracleInteraction<'_> {
    fn name(&self) -> &'static str {
        "oracle"
    }

    fn interact(&self, request: &InteractionRequest<'_>) -> Result<ProbMask, BackendError> {
        let gt = self.gt.frame(request.frame_index).ok_or(BackendError::FrameOutOfRange {
            frame_index: request.frame_index,
            num_frames: self.gt.num_frames(),
        })?;
        crate::mask::dims_match(gt.dims(), request.previous.dims())?;
        let (w, h) = gt.dims();
        let mut out = request.previous.clone();
        let mut labels = current_labels(&out);
        for click in request.clicks {
            if click.position.x >= w || click.position.y >= h {
                return Err(MaskError::OutOfBounds {
                    x: click.position.x,
                    y: click.position.y,
                    width: w,
                    height: h,
                }
                .into());
            }
            let o = click.object_id;
            let gt_labels = gt.labels();
            let pixels = match click.polarity {
                Polarity::Positive => flood(w, h, click.position, true, |i| gt_labels[i] == o && labels[i] != o),
                Polarity::Negative => flood(w, h, click.position, true, |i| labels[i] == o && gt_labels[i] != o),
            };
            if pixels.is_empty() {
                log::debug!(
                    "oracle: {:?} click for object {o} at {} hits no matching error region",
                    click.polarity,
                    click.position
                );
                continue;
            }
            for i in pixels {
                match click.polarity {
                    Polarity::Positive => out.assign(i, o, 1.0, true),
                    Polarity::Negative => out.assign(i, o, 0.0, false),
                }
                labels[i] = out.label_at(i);
            }
        }
        Ok(out)
    }
}

/// Classical backend for real images: positive clicks flood-fill similar
/// colours, negative clicks erase the predicted component they land on.
pub struct RegionGrowInteraction {
    /// Per-channel maximum absolute difference from the seed colour.
    pub color_tolerance: u8,
}

impl Default for RegionGrowInteraction {
    fn default() -> Self {
        Self { color_tolerance: 24 }
    }
}

impl InteractionBackend for RegionGrowInteraction {
    fn name(&self) -> &'static str {
        "region-grow"
    }

    fn needs_frames(&self) -> bool {
        true
    }

    fn interact(&self, request: &InteractionRequest<'_>) -> Result<ProbMask, BackendError> {
        let mut out = request.previous.clone();
        if request.clicks.is_empty() {
            return Ok(out);
        }
        let frame = request.frame.ok_or(BackendError::MissingFrame {
            backend: self.name(),
            frame_index: request.frame_index,
        })?;
        crate::mask::dims_match((frame.width, frame.height), out.dims())?;
        let (w, h) = out.dims();
        let tol = self.color_tolerance;
        let mut labels = current_labels(&out);
        for click in request.clicks {
            let p = click.position;
            if p.x >= w || p.y >= h {
                return Err(MaskError::OutOfBounds {
                    x: p.x,
                    y: p.y,
                    width: w,
                    height: h,
                }
                .into());
            }
            let o = click.object_id;
            match click.polarity {
                Polarity::Positive => {
                    let seed = frame.get(p.x, p.y);
                    let similar = |i: usize| {
                        let c = frame.pixels[i];
                        (0..3).all(|k| c[k].abs_diff(seed[k]) <= tol)
                    };
                    for i in flood(w, h, p, false, similar) {
                        out.assign(i, o, 1.0, true);
                        labels[i] = out.label_at(i);
                    }
                }
                Polarity::Negative => {
                    for i in flood(w, h, p, true, |i| labels[i] == o) {
                        out.assign(i, o, 0.0, false);
                        labels[i] = out.label_at(i);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Copies the mask of the memory frame nearest to the target.
pub struct CopyNearestPropagator;

pub fn nearest_memory<'a, 'b>(target_index: usize, memory: &'b [MemoryEntry<'a>]) -> Option<&'b MemoryEntry<'a>> {
    memory
        .iter()
        .min_by_key(|m| (m.frame_index.abs_diff(target_index), m.frame_index))
}

impl PropagationBackend for CopyNearestPropagator {
    fn name(&self) -> &'static str {
        "copy"
    }

    fn propagate(&self, request: &PropagationRequest<'_>) -> Result<ProbMask, BackendError> {
        let m = nearest_memory(request.target_index, request.memory).ok_or(BackendError::EmptyMemory)?;
        Ok(m.mask.clone())
    }
}

/// Test oracle: the target's ground truth eroded by
/// `floor(lambda * distance to the nearest memory frame)` pixels.
pub struct DecayOraclePropagator<'a> {
    gt: &'a GroundTruth,
    lambda: f64,
}

impl<'a> DecayOraclePropagator<'a> {
    pub fn new(gt: &'a GroundTruth, lambda: f64) -> Result<Self, BackendError> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(BackendError::InvalidParameter(format!("decay lambda must be >= 0, got {lambda}")));
        }
        Ok(Self { gt, lambda })
    }
}

impl PropagationBackend for DecayOraclePropagator<'_> {
    fn name(&self) -> &'static str {
        "decay-oracle"
    }

    fn propagate(&self, request: &PropagationRequest<'_>) -> Result<ProbMask, BackendError> {
        let t = request.target_index;
        let gt = self.gt.frame(t).ok_or(BackendError::FrameOutOfRange {
            frame_index: t,
            num_frames: self.gt.num_frames(),
        })?;
        let distance = request
            .memory
            .iter()
            .map(|m| m.frame_index.abs_diff(t))
            .min()
            .ok_or(BackendError::EmptyMemory)?;
        let radius = (self.lambda * distance as f64).floor() as usize;
        let mut out = ProbMask::empty(gt.width(), gt.height(), self.gt.object_ids())?;
        for &o in self.gt.object_ids() {
            let eroded = erode(&gt.binary_of(o), radius);
            let channel = out.channel_mut(o).expect("channel exists");
            for (c, &b) in channel.iter_mut().zip(eroded.bits()) {
                *c = if b { 1.0 } else { 0.0 };
            }
        }
        Ok(out)
    }
}

/// Convex blend trusting the new mask near its own annotation:
/// `w * new + (1 - w) * previous` with `w = far / (near + far)`.
pub struct DistanceWeightedFusion;

impl FusionBackend for DistanceWeightedFusion {
    fn name(&self) -> &'static str {
        "distance-weighted"
    }

    fn fuse(
        &self,
        new: &ProbMask,
        previous: &ProbMask,
        near_distance: usize,
        far_distance: usize,
    ) -> Result<ProbMask, BackendError> {
        new.same_layout(previous)?;
        let total = near_distance + far_distance;
        if total == 0 {
            return Err(BackendError::InvalidParameter("fusion distances are both zero".into()));
        }
        let w = far_distance as f64 / total as f64;
        let mut out = new.clone();
        for (o, channel) in out.objects.iter_mut() {
            let prev = &previous.objects[o];
            for (c, &p) in channel.iter_mut().zip(prev) {
                let (a, b) = (f64::from(*c), f64::from(p));
                *c = (w * a + (1.0 - w) * b).clamp(a.min(b), a.max(b)) as f32;
            }
        }
        Ok(out)
    }
}

/// Keeps the newly propagated mask unchanged.
pub struct NoFusion;

impl FusionBackend for NoFusion {
    fn name(&self) -> &'static str {
        "none"
    }

    fn fuse(&self, new: &ProbMask, previous: &ProbMask, _: usize, _: usize) -> Result<ProbMask, BackendError> {
        new.same_layout(previous)?;
        Ok(new.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InteractionKind {
    Oracle,
    RegionGrow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PropagatorKind {
    Copy,
    DecayOracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionKind {
    DistanceWeighted,
    None,
}

macro_rules! kind_names {
    ($ty:ty { $($variant:ident => $name:literal),* $(,)? }) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $(Self::$variant => $name),* }
            }
        }

        impl std::str::FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($name => Ok(Self::$variant),)*
                    other => Err(format!("unknown backend `{other}`")),
                }
            }
        }
    };
}

kind_names!(InteractionKind { Oracle => "oracle", RegionGrow => "region-grow" });
kind_names!(PropagatorKind { Copy => "copy", DecayOracle => "decay-oracle" });
kind_names!(FusionKind { DistanceWeighted => "distance-weighted", None => "none" });

/// Backend choice plus the knobs of the reference implementations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub interaction: InteractionKind,
    pub propagator: PropagatorKind,
    pub fusion: FusionKind,
    pub decay_lambda: f64,
    pub color_tolerance: u8,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            interaction: InteractionKind::Oracle,
            propagator: PropagatorKind::Copy,
            fusion: FusionKind::DistanceWeighted,
            decay_lambda: 0.5,
            color_tolerance: 24,
        }
    }
}

/// Owned backends for one sequence, resolved from a [`BackendConfig`].
pub struct BackendSet<'a> {
    interaction: Box<dyn InteractionBackend + 'a>,
    propagation: Box<dyn PropagationBackend + 'a>,
    fusion: Box<dyn FusionBackend + 'a>,
}

impl<'a> BackendSet<'a> {
    pub fn build(config: &BackendConfig, gt: &'a GroundTruth) -> Result<Self, BackendError> {
        let interaction: Box<dyn InteractionBackend + 'a> = match config.interaction {
            InteractionKind::Oracle => Box::new(OracleInteraction::new(gt)),
            InteractionKind::RegionGrow => Box::new(RegionGrowInteraction {
                color_tolerance: config.color_tolerance,
            }),
        };
        let propagation: Box<dyn PropagationBackend + 'a> = match config.propagator {
            PropagatorKind::Copy => Box::new(CopyNearestPropagator),
            PropagatorKind::DecayOracle => Box::new(DecayOraclePropagator::new(gt, config.decay_lambda)?),
        };
        let fusion: Box<dyn FusionBackend + 'a> = match config.fusion {
            FusionKind::DistanceWeighted => Box::new(DistanceWeightedFusion),
            FusionKind::None => Box::new(NoFusion),
        };
        Ok(Self {
            interaction,
            propagation,
            fusion,
        })
    }

    pub fn backends(&self) -> Backends<'_> {
        Backends {
            interaction: self.interaction.as_ref(),
            propagation: self.propagation.as_ref(),
            fusion: self.fusion.as_ref(),
        }
    }
}
