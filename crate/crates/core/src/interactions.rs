//! Clicks, scribbles and the three click-generation strategies.
//!
//! * `f1`: one click per object, the scribble point nearest the mean of all
//!   of the object's scribble points.
//! * `f2`: one click per scribble, the point nearest that scribble's mean.
//! * `f3`: clicks at the interior centers of the largest erroneous regions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{
    connected_components, interior_center, region_order, BinaryMask, Connectivity, LabelMask, MaskError,
    ObjectId, PixelCoord, Region, BACKGROUND,
};

/// Connectivity used for erroneous regions.
pub const ERROR_CONNECTIVITY: Connectivity = Connectivity::Eight;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InteractionError {
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error("no scribbles given")]
    NoScribbles,
    #[error("scribble {index} has an empty path")]
    EmptyPath { index: usize },
    #[error("scribbles span frames {first} and {other}")]
    MixedFrames { first: usize, other: usize },
    #[error("click at {position} lies outside a {width}x{height} frame")]
    ClickOutOfBounds {
        position: PixelCoord,
        width: usize,
        height: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    /// "This pixel belongs to the object."
    Positive,
    /// "This pixel does not belong to the object."
    Negative,
}

/// A labelled polyline on one frame. `object_id == 0` marks background.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scribble {
    pub object_id: ObjectId,
    pub path: Vec<PixelCoord>,
    pub frame_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Click {
    pub position: PixelCoord,
    /// The object whose mask this click edits (never background).
    pub object_id: ObjectId,
    pub polarity: Polarity,
    pub frame_index: usize,
}

/// Disk-rasterised click channels for map-consuming backends.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionMaps {
    pub positive: BinaryMask,
    pub negative: BinaryMask,
}

/// Disagreement between a prediction and the ground truth for one object.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRegions {
    pub object_id: ObjectId,
    /// `gt == o && pred != o`
    pub false_negative: BinaryMask,
    /// `pred == o && gt != o`
    pub false_positive: BinaryMask,
    pub fn_regions: Vec<Region>,
    pub fp_regions: Vec<Region>,
}

impl ErrorRegions {
    pub fn is_empty(&self) -> bool {
        self.fn_regions.is_empty() && self.fp_regions.is_empty()
    }

    /// Both region lists merged in region order (area descending, then
    /// bounding-box corner; false negatives first on a full tie), paired
    /// with the polarity a corrective click needs.
    pub fn ranked(&self) -> Vec<(&Region, Polarity)> {
        let mut all: Vec<(&Region, Polarity)> = self
            .fn_regions
            .iter()
            .map(|r| (r, Polarity::Positive))
            .chain(self.fp_regions.iter().map(|r| (r, Polarity::Negative)))
            .collect();
        all.sort_by(|a, b| region_order(a.0, b.0));
        all
    }

    pub fn mask_for(&self, polarity: Polarity) -> &BinaryMask {
        match polarity {
            Polarity::Positive => &self.false_negative,
            Polarity::Negative => &self.false_positive,
        }
    }
}

pub fn error_regions(pred: &LabelMask, gt: &LabelMask, object_id: ObjectId) -> Result<ErrorRegions, MaskError> {
    pred.same_dims(gt)?;
    let p = pred.binary_of(object_id);
    let g = gt.binary_of(object_id);
    let false_negative = g.and_not(&p)?;
    let false_positive = p.and_not(&g)?;
    Ok(ErrorRegions {
        object_id,
        fn_regions: connected_components(&false_negative, ERROR_CONNECTIVITY),
        fp_regions: connected_components(&false_positive, ERROR_CONNECTIVITY),
        false_negative,
        false_positive,
    })
}

/// A point picked by a scribble strategy, before its polarity is resolved
/// against the current prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScribbleClick {
    pub frame_index: usize,
    pub position: PixelCoord,
    /// Label of the scribble the point was taken from.
    pub scribble_object: ObjectId,
}

impl ScribbleClick {
    /// Object scribbles become positive clicks for that object. Background
    /// scribbles become negative clicks for whichever object the prediction
    /// shows at the point, or nothing when the prediction is background there.
    pub fn resolve(&self, pred: &LabelMask) -> Option<Click> {
        let (object_id, polarity) = if self.scribble_object != BACKGROUND {
            (self.scribble_object, Polarity::Positive)
        } else {
            let under = pred.at(self.position);
            if under == BACKGROUND {
                log::debug!(
                    "dropping background click at {} on frame {}: no predicted object there",
                    self.position,
                    self.frame_index
                );
                return None;
            }
            (under, Polarity::Negative)
        };
        Some(Click {
            position: self.position,
            object_id,
            polarity,
            frame_index: self.frame_index,
        })
    }
}

fn check_scribbles(scribbles: &[Scribble]) -> Result<usize, InteractionError> {
    let first = scribbles.first().ok_or(InteractionError::NoScribbles)?.frame_index;
    for (index, s) in scribbles.iter().enumerate() {
        if s.path.is_empty() {
            return Err(InteractionError::EmptyPath { index });
        }
        if s.frame_index != first {
            return Err(InteractionError::MixedFrames {
                first,
                other: s.frame_index,
            });
        }
    }
    Ok(first)
}

/// Index of the scribble and point closest to the mean of all given points;
/// ties go to the smallest `(y, x)`, then to the earlier scribble.
fn snap_to_mean<'a>(scribbles: impl Iterator<Item = &'a Scribble> + Clone) -> (PixelCoord, ObjectId) {
    let (mut n, mut sx, mut sy) = (0i128, 0i128, 0i128);
    for p in scribbles.clone().flat_map(|s| s.path.iter()) {
        n += 1;
        sx += p.x as i128;
        sy += p.y as i128;
    }
    // Compare n^2 * squared distance in integers to keep ties exact.
    let key = |p: &PixelCoord| {
        let dx = n * p.x as i128 - sx;
        let dy = n * p.y as i128 - sy;
        dx * dx + dy * dy
    };
    let mut best: Option<(i128, PixelCoord, ObjectId)> = None;
    for s in scribbles {
        for p in &s.path {
            let d = key(p);
            let better = match best {
                None => true,
                Some((bd, bp, _)) => d < bd || (d == bd && *p < bp),
            };
            if better {
                best = Some((d, *p, s.object_id));
            }
        }
    }
    let (_, p, o) = best.expect("caller checked for points");
    (p, o)
}

/// One click from all scribbles assigned to an object.
pub fn strategy_f1(scribbles: &[Scribble]) -> Result<ScribbleClick, InteractionError> {
    let frame_index = check_scribbles(scribbles)?;
    let (position, scribble_object) = snap_to_mean(scribbles.iter());
    Ok(ScribbleClick {
        frame_index,
        position,
        scribble_object,
    })
}

/// One click per scribble, in input order.
pub fn strategy_f2(scribbles: &[Scribble]) -> Result<Vec<ScribbleClick>, InteractionError> {
    let frame_index = check_scribbles(scribbles)?;
    Ok(scribbles
        .iter()
        .map(|s| {
            let (position, scribble_object) = snap_to_mean(std::iter::once(s));
            ScribbleClick {
                frame_index,
                position,
                scribble_object,
            }
        })
        .collect())
}

/// Clicks at the interior centers of the largest erroneous regions.
///
/// Regions smaller than `min_region_area` pixels are skipped; at most
/// `max_clicks` clicks are produced. False-negative regions give positive
/// clicks, false-positive regions negative ones.
pub fn strategy_f3(
    regions: &ErrorRegions,
    frame_index: usize,
    max_clicks: usize,
    min_region_area: usize,
) -> Vec<Click> {
    regions
        .ranked()
        .into_iter()
        .filter(|(r, _)| r.area() >= min_region_area)
        .take(max_clicks)
        .map(|(r, polarity)| Click {
            position: interior_center(r, regions.mask_for(polarity)),
            object_id: regions.object_id,
            polarity,
            frame_index,
        })
        .collect()
}

/// Keeps the first `max_clicks` clicks of every object, preserving order.
/// Round 1 allows a single click per object whatever the configured cap.
pub fn cap_per_round(clicks: Vec<Click>, max_clicks: usize, round: u32) -> Vec<Click> {
    let cap = if round == 1 { max_clicks.min(1) } else { max_clicks };
    let mut used: BTreeMap<ObjectId, usize> = BTreeMap::new();
    clicks
        .into_iter()
        .filter(|c| {
            let n = used.entry(c.object_id).or_default();
            *n += 1;
            *n <= cap
        })
        .collect()
}

/// Paints a Chebyshev disk of `radius` around every click into the channel
/// matching its polarity.
pub fn rasterize_clicks(
    clicks: &[Click],
    width: usize,
    height: usize,
    radius: usize,
) -> Result<InteractionMaps, InteractionError> {
    let mut positive = BinaryMask::empty(width, height)?;
    let mut negative = BinaryMask::empty(width, height)?;
    for c in clicks {
        let p = c.position;
        if p.x >= width || p.y >= height {
            return Err(InteractionError::ClickOutOfBounds {
                position: p,
                width,
                height,
            });
        }
        let target = match c.polarity {
            Polarity::Positive => &mut positive,
            Polarity::Negative => &mut negative,
        };
        for y in p.y.saturating_sub(radius)..=(p.y + radius).min(height - 1) {
            for x in p.x.saturating_sub(radius)..=(p.x + radius).min(width - 1) {
                target.set(x, y, true);
            }
        }
    }
    Ok(InteractionMaps { positive, negative })
}

/// 5 px at 854x480, scaled with the frame diagonal.
pub fn default_click_radius(width: usize, height: usize) -> usize {
    let reference = (854f64 * 854.0 + 480.0 * 480.0).sqrt();
    let diag = ((width * width + height * height) as f64).sqrt();
    (5.0 * diag / reference).round() as usize
}

/// Converts an area fraction of the frame into a pixel threshold.
pub fn min_region_pixels(fraction: f64, width: usize, height: usize) -> usize {
    (fraction.max(0.0) * (width * height) as f64).ceil() as usize
}
