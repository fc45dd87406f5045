//! Region similarity (J), contour accuracy (F), their mean J&F, and the
//! curve integrals used to summarise a multi-round session.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{boundary, dilate, BinaryMask, LabelMask, MaskError, ObjectId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error("round curve is empty")]
    EmptyCurve,
    #[error("round curve must start at round 1 and increase strictly, found round {found} after {previous}")]
    BadRounds { previous: u32, found: u32 },
    #[error("curve reaches round {last} but r_max is {r_max}")]
    RoundBeyondMax { last: u32, r_max: u32 },
    #[error("sample for round {round} has no wall-clock timestamp")]
    MissingTimestamp { round: u32 },
    #[error("timestamps must be finite, non-negative and strictly increasing (round {round})")]
    BadTimestamp { round: u32 },
    #[error("score {value} for round {round} is outside [0, 1]")]
    ScoreOutOfRange { round: u32, value: f64 },
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("no objects to score")]
    NoObjects,
}

/// Intersection over union; two empty masks score 1.
pub fn jaccard(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64, MetricError> {
    pred.same_dims(gt)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &g) in pred.bits().iter().zip(gt.bits()) {
        inter += usize::from(p && g);
        union += usize::from(p || g);
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Boundary F-measure with a Chebyshev matching tolerance in pixels.
///
/// Precision is the share of predicted boundary pixels within `tolerance`
/// of the ground-truth boundary; recall the converse. Both boundaries
/// empty scores 1, exactly one empty scores 0.
pub fn boundary_f(pred: &BinaryMask, gt: &BinaryMask, tolerance: usize) -> Result<f64, MetricError> {
    pred.same_dims(gt)?;
    let pred_b = boundary(pred);
    let gt_b = boundary(gt);
    let n_pred = pred_b.count();
    let n_gt = gt_b.count();
    match (n_pred, n_gt) {
        (0, 0) => return Ok(1.0),
        (0, _) | (_, 0) => return Ok(0.0),
        _ => {}
    }
    let gt_zone = dilate(&gt_b, tolerance);
    let pred_zone = dilate(&pred_b, tolerance);
    let matched_pred = pred_b.and(&gt_zone)?.count();
    let matched_gt = gt_b.and(&pred_zone)?.count();
    let precision = matched_pred as f64 / n_pred as f64;
    let recall = matched_gt as f64 / n_gt as f64;
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

/// `round(0.008 * diagonal)` pixels.
pub fn default_boundary_tolerance(width: usize, height: usize) -> usize {
    let diag = ((width * width + height * height) as f64).sqrt();
    (0.008 * diag).round() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectScore {
    pub j: f64,
    pub f: f64,
    pub jf: f64,
}

impl ObjectScore {
    pub fn new(j: f64, f: f64) -> Self {
        Self { j, f, jf: (j + f) / 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    pub frame_index: usize,
    pub per_object: BTreeMap<ObjectId, ObjectScore>,
}

impl FrameScore {
    pub fn jf_sum(&self) -> f64 {
        self.per_object.values().map(|s| s.jf).sum()
    }

    /// Mean J&F over the frame's objects.
    pub fn mean_jf(&self) -> f64 {
        if self.per_object.is_empty() {
            return 1.0;
        }
        self.jf_sum() / self.per_object.len() as f64
    }

    pub fn is_perfect(&self) -> bool {
        self.per_object.values().all(|s| s.jf == 1.0)
    }
}

pub fn frame_score(
    frame_index: usize,
    pred: &LabelMask,
    gt: &LabelMask,
    objects: &BTreeSet<ObjectId>,
    tolerance: usize,
) -> Result<FrameScore, MetricError> {
    pred.same_dims(gt)?;
    if objects.is_empty() {
        return Err(MetricError::NoObjects);
    }
    let mut per_object = BTreeMap::new();
    for &o in objects {
        let p = pred.binary_of(o);
        let g = gt.binary_of(o);
        let score = ObjectScore::new(jaccard(&p, &g)?, boundary_f(&p, &g, tolerance)?);
        per_object.insert(o, score);
    }
    Ok(FrameScore {
        frame_index,
        per_object,
    })
}

/// Sum and count of J&F over every (frame, object) pair.
pub fn jf_tally(scores: &[FrameScore]) -> (f64, usize) {
    scores
        .iter()
        .fold((0.0, 0), |(s, n), f| (s + f.jf_sum(), n + f.per_object.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundSample {
    pub round: u32,
    pub global_jf: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
}

/// Global J&F after each interaction round.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RoundCurve {
    pub samples: Vec<RoundSample>,
}

impl RoundCurve {
    pub fn new() -> Self {
        Self::default()
    }

    /// Curve with rounds `1..=values.len()` and no timestamps.
    pub fn from_values(values: &[f64]) -> Self {
        Self {
            samples: values
                .iter()
                .enumerate()
                .map(|(i, &v)| RoundSample {
                    round: i as u32 + 1,
                    global_jf: v,
                    wall_clock_seconds: None,
                })
                .collect(),
        }
    }

    pub fn push(&mut self, global_jf: f64, wall_clock_seconds: Option<f64>) {
        let round = self.samples.last().map_or(1, |s| s.round + 1);
        self.samples.push(RoundSample {
            round,
            global_jf,
            wall_clock_seconds,
        });
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last_round(&self) -> u32 {
        self.samples.last().map_or(0, |s| s.round)
    }

    /// Value at `round` with the last earlier sample held.
    pub fn value_at_round(&self, round: u32) -> Option<f64> {
        self.samples
            .iter()
            .take_while(|s| s.round <= round)
            .last()
            .map(|s| s.global_jf)
    }

    fn validate(&self) -> Result<(), MetricError> {
        let first = self.samples.first().ok_or(MetricError::EmptyCurve)?;
        if first.round != 1 {
            return Err(MetricError::BadRounds {
                previous: 0,
                found: first.round,
            });
        }
        let mut previous = 0;
        for s in &self.samples {
            if s.round <= previous {
                return Err(MetricError::BadRounds {
                    previous,
                    found: s.round,
                });
            }
            if !(0.0..=1.0).contains(&s.global_jf) {
                return Err(MetricError::ScoreOutOfRange {
                    round: s.round,
                    value: s.global_jf,
                });
            }
            previous = s.round;
        }
        Ok(())
    }

    fn timestamps(&self) -> Result<Vec<f64>, MetricError> {
        let mut out: Vec<f64> = Vec::with_capacity(self.samples.len());
        for s in &self.samples {
            let t = s
                .wall_clock_seconds
                .ok_or(MetricError::MissingTimestamp { round: s.round })?;
            let increasing = out.last().is_none_or(|&prev| t > prev);
            if !t.is_finite() || t < 0.0 || !increasing {
                return Err(MetricError::BadTimestamp { round: s.round });
            }
            out.push(t);
        }
        Ok(out)
    }
}

/// Area under the J&F-versus-round curve, normalised to `[0, 1]`.
///
/// The curve is extended to `r_max` by holding its last value, then
/// averaged over rounds `1..=r_max` (rectangle rule on unit spacing).
/// Wall-clock timestamps are ignored.
pub fn r_auc(curve: &RoundCurve, r_max: u32) -> Result<f64, MetricError> {
    curve.validate()?;
    if r_max == 0 {
        return Err(MetricError::NonPositive {
            name: "r_max",
            value: 0.0,
        });
    }
    let last = curve.last_round();
    if last > r_max {
        return Err(MetricError::RoundBeyondMax { last, r_max });
    }
    // Runs of equal held values, so a constant curve integrates to exactly
    // its value.
    let mut runs: Vec<(f64, u32)> = Vec::new();
    for round in 1..=r_max {
        let v = curve.value_at_round(round).ok_or(MetricError::EmptyCurve)?;
        match runs.last_mut() {
            Some((value, count)) if *value == v => *count += 1,
            _ => runs.push((v, 1)),
        }
    }
    let total = f64::from(r_max);
    Ok(runs.iter().map(|&(v, n)| v * (f64::from(n) / total)).sum())
}

/// Time-based area under the curve over `[0, budget_seconds]`, normalised
/// by the budget. The curve is a step function: 0 before the first sample,
/// each sample's value held until the next one (or the budget).
///
/// Depends on the hardware that produced the timestamps.
pub fn auc_time(curve: &RoundCurve, budget_seconds: f64) -> Result<f64, MetricError> {
    if !(budget_seconds > 0.0 && budget_seconds.is_finite()) {
        return Err(MetricError::NonPositive {
            name: "budget_seconds",
            value: budget_seconds,
        });
    }
    let times = curve.timestamps()?;
    if times.is_empty() {
        return Err(MetricError::EmptyCurve);
    }
    let mut area = 0.0;
    for (i, s) in curve.samples.iter().enumerate() {
        let start = times[i].min(budget_seconds);
        let end = times.get(i + 1).copied().unwrap_or(budget_seconds).min(budget_seconds);
        area += s.global_jf * ((end - start) / budget_seconds);
    }
    Ok(area)
}

/// Value of the step-function curve at time `t` (0 before the first sample).
pub fn jf_at(curve: &RoundCurve, t: f64) -> Result<f64, MetricError> {
    let times = curve.timestamps()?;
    Ok(curve
        .samples
        .iter()
        .zip(times)
        .take_while(|(_, ts)| *ts <= t)
        .last()
        .map_or(0.0, |(s, _)| s.global_jf))
}
