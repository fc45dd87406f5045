//! Pixel-level mask primitives: label and binary masks, connected regions,
//! boundaries, exact distance transforms, Chebyshev morphology and
//! Zhang–Suen skeletons.
//!
//! Every tie in this module is broken by `(y, x)` ascending so results are
//! reproducible bit for bit.

use std::cmp::Ordering;
use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Object identifier inside a [`LabelMask`]. `0` is background.
pub type ObjectId = u16;

/// The background label.
pub const BACKGROUND: ObjectId = 0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MaskError {
    #[error("mask dimensions must be at least 1x1, got {width}x{height}")]
    EmptyDimensions { width: usize, height: usize },
    #[error("a {width}x{height} mask needs {expected} entries, got {actual}")]
    LengthMismatch {
        width: usize,
        height: usize,
        expected: usize,
        actual: usize,
    },
    #[error("dimension mismatch: {left_width}x{left_height} vs {right_width}x{right_height}")]
    DimensionMismatch {
        left_width: usize,
        left_height: usize,
        right_width: usize,
        right_height: usize,
    },
    #[error("pixel ({x}, {y}) lies outside a {width}x{height} mask")]
    OutOfBounds {
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },
}

/// A pixel position. Ordered by row first, then column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelCoord {
    pub x: usize,
    pub y: usize,
}

impl PixelCoord {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    pub fn squared_distance_to(&self, other: &PixelCoord) -> u64 {
        let dx = self.x.abs_diff(other.x) as u64;
        let dy = self.y.abs_diff(other.y) as u64;
        dx * dx + dy * dy
    }

    pub fn chebyshev_distance_to(&self, other: &PixelCoord) -> usize {
        self.x.abs_diff(other.x).max(self.y.abs_diff(other.y))
    }
}

impl Ord for PixelCoord {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.y, self.x).cmp(&(other.y, other.x))
    }
}

impl PartialOrd for PixelCoord {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for PixelCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Neighbourhood used when grouping pixels into regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Connectivity {
    /// N, S, E and W neighbours.
    Four,
    /// All eight surrounding pixels.
    #[default]
    Eight,
}

const OFFSETS_4: [(isize, isize); 4] = [(0, -1), (-1, 0), (1, 0), (0, 1)];
const OFFSETS_8: [(isize, isize); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

impl Connectivity {
    fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &OFFSETS_4,
            Connectivity::Eight => &OFFSETS_8,
        }
    }
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<(), MaskError> {
    if width == 0 || height == 0 {
        return Err(MaskError::EmptyDimensions { width, height });
    }
    let expected = width * height;
    if len != expected {
        return Err(MaskError::LengthMismatch {
            width,
            height,
            expected,
            actual: len,
        });
    }
    Ok(())
}

fn offset(
    p: PixelCoord,
    (dx, dy): (isize, isize),
    width: usize,
    height: usize,
) -> Option<PixelCoord> {
    let x = p.x.checked_add_signed(dx)?;
    let y = p.y.checked_add_signed(dy)?;
    (x < width && y < height).then_some(PixelCoord { x, y })
}

/// Per-frame object-id map, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelMask {
    width: usize,
    height: usize,
    labels: Vec<ObjectId>,
}

impl LabelMask {
    pub fn new(width: usize, height: usize, labels: Vec<ObjectId>) -> Result<Self, MaskError> {
        check_dims(width, height, labels.len())?;
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    /// An all-background mask.
    pub fn background(width: usize, height: usize) -> Result<Self, MaskError> {
        Self::new(width, height, vec![BACKGROUND; width * height])
    }

    /// Builds a mask from rows; every row must have the same length.
    pub fn from_rows<R: AsRef<[ObjectId]>>(rows: &[R]) -> Result<Self, MaskError> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.as_ref().len());
        let labels: Vec<ObjectId> = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::new(width, height, labels)
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

    pub fn labels(&self) -> &[ObjectId] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> ObjectId {
        self.labels[y * self.width + x]
    }

    pub fn at(&self, p: PixelCoord) -> ObjectId {
        self.get(p.x, p.y)
    }

    pub fn set(&mut self, x: usize, y: usize, label: ObjectId) {
        self.labels[y * self.width + x] = label;
    }

    pub fn contains(&self, p: PixelCoord) -> bool {
        p.x < self.width && p.y < self.height
    }

    /// Non-background ids present in the mask.
    pub fn object_ids(&self) -> BTreeSet<ObjectId> {
        self.labels.iter().copied().filter(|&l| l != BACKGROUND).collect()
    }

    /// Per-object view: set exactly where the label equals `object_id`.
    pub fn binary_of(&self, object_id: ObjectId) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.labels.iter().map(|&l| l == object_id).collect(),
        }
    }

    pub fn same_dims(&self, other: &LabelMask) -> Result<(), MaskError> {
        dims_match(self.dims(), other.dims())
    }
}

pub(crate) fn dims_match(left: (usize, usize), right: (usize, usize)) -> Result<(), MaskError> {
    if left == right {
        Ok(())
    } else {
        Err(MaskError::DimensionMismatch {
            left_width: left.0,
            left_height: left.1,
            right_width: right.0,
            right_height: right.1,
        })
    }
}

/// Row-major boolean grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, MaskError> {
        check_dims(width, height, bits.len())?;
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Result<Self, MaskError> {
        Self::new(width, height, vec![false; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self, MaskError> {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self::new(width, height, bits)
    }

    /// Mask with exactly the given pixels set.
    pub fn from_pixels<'a>(
        width: usize,
        height: usize,
        pixels: impl IntoIterator<Item = &'a PixelCoord>,
    ) -> Result<Self, MaskError> {
        let mut mask = Self::empty(width, height)?;
        for p in pixels {
            if !mask.contains(*p) {
                return Err(MaskError::OutOfBounds {
                    x: p.x,
                    y: p.y,
                    width,
                    height,
                });
            }
            mask.set(p.x, p.y, true);
        }
        Ok(mask)
    }

    /// Parses rows of `#` (set) and `.` (unset); handy for fixtures.
    pub fn from_ascii(rows: &[&str]) -> Result<Self, MaskError> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        let bits: Vec<bool> = rows.iter().flat_map(|r| r.bytes().map(|b| b == b'#')).collect();
        Self::new(width, height, bits)
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

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn at(&self, p: PixelCoord) -> bool {
        self.get(p.x, p.y)
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn contains(&self, p: PixelCoord) -> bool {
        p.x < self.width && p.y < self.height
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Set pixels in `(y, x)` order.
    pub fn pixels(&self) -> impl Iterator<Item = PixelCoord> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| PixelCoord::new(i % w, i / w))
    }

    pub fn same_dims(&self, other: &BinaryMask) -> Result<(), MaskError> {
        dims_match(self.dims(), other.dims())
    }

    fn zip_with(&self, other: &BinaryMask, f: impl Fn(bool, bool) -> bool) -> Result<Self, MaskError> {
        self.same_dims(other)?;
        Ok(Self {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().zip(&other.bits).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn and(&self, other: &BinaryMask) -> Result<Self, MaskError> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn or(&self, other: &BinaryMask) -> Result<Self, MaskError> {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn and_not(&self, other: &BinaryMask) -> Result<Self, MaskError> {
        self.zip_with(other, |a, b| a && !b)
    }

    pub fn not(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    /// Is every set pixel of `self` also set in `other`?
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims() && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }
}

/// Tight axis-aligned bounds, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
}

impl BoundingBox {
    pub fn width(&self) -> usize {
        self.x_max - self.x_min + 1
    }

    pub fn height(&self) -> usize {
        self.y_max - self.y_min + 1
    }
}

/// A nonempty set of pixels, stored sorted by `(y, x)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region {
    pixels: Vec<PixelCoord>,
    bounding_box: BoundingBox,
}

impl Region {
    /// Builds a region from arbitrary pixels (duplicates removed). Returns
    /// `None` for an empty input. Connectivity is not checked.
    pub fn from_pixels(mut pixels: Vec<PixelCoord>) -> Option<Self> {
        pixels.sort_unstable();
        pixels.dedup();
        let first = *pixels.first()?;
        let mut bb = BoundingBox {
            x_min: first.x,
            y_min: first.y,
            x_max: first.x,
            y_max: first.y,
        };
        for p in &pixels {
            bb.x_min = bb.x_min.min(p.x);
            bb.x_max = bb.x_max.max(p.x);
            bb.y_min = bb.y_min.min(p.y);
            bb.y_max = bb.y_max.max(p.y);
        }
        Some(Self {
            pixels,
            bounding_box: bb,
        })
    }

    pub fn pixels(&self) -> &[PixelCoord] {
        &self.pixels
    }

    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    pub fn bounding_box(&self) -> BoundingBox {
        self.bounding_box
    }

    pub fn contains(&self, p: PixelCoord) -> bool {
        self.pixels.binary_search(&p).is_ok()
    }

    pub fn to_mask(&self, width: usize, height: usize) -> Result<BinaryMask, MaskError> {
        BinaryMask::from_pixels(width, height, &self.pixels)
    }

    /// The region rasterised into its bounding box grown by `pad` on every
    /// side, together with the offset of that local grid's origin.
    fn local_mask(&self, pad: usize) -> (BinaryMask, usize, usize) {
        let bb = self.bounding_box;
        let w = bb.width() + 2 * pad;
        let h = bb.height() + 2 * pad;
        let mut bits = vec![false; w * h];
        for p in &self.pixels {
            bits[(p.y - bb.y_min + pad) * w + (p.x - bb.x_min + pad)] = true;
        }
        let mask = BinaryMask {
            width: w,
            height: h,
            bits,
        };
        (mask, bb.x_min, bb.y_min)
    }
}

/// Orders regions by area descending, then by the top-left corner of their
/// bounding box.
pub fn region_order(a: &Region, b: &Region) -> Ordering {
    b.area()
        .cmp(&a.area())
        .then(a.bounding_box.y_min.cmp(&b.bounding_box.y_min))
        .then(a.bounding_box.x_min.cmp(&b.bounding_box.x_min))
}

/// Maximal connected groups of set pixels, largest first.
///
/// Equal-area regions are ordered by `(y_min, x_min)` of their bounding box,
/// and by scan order of their first pixel after that.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> Vec<Region> {
    let (w, h) = mask.dims();
    let mut seen = vec![false; w * h];
    let mut regions = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask.bits[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(PixelCoord::new(start % w, start / w));
        let mut pixels = Vec::new();
        while let Some(p) = queue.pop_front() {
            pixels.push(p);
            for &o in connectivity.offsets() {
                if let Some(q) = offset(p, o, w, h) {
                    let i = q.y * w + q.x;
                    if mask.bits[i] && !seen[i] {
                        seen[i] = true;
                        queue.push_back(q);
                    }
                }
            }
        }
        regions.extend(Region::from_pixels(pixels));
    }
    // Stable: scan order survives as the last tie-break.
    regions.sort_by(region_order);
    regions
}

/// Set pixels with at least one 4-neighbour that is unset or outside the mask.
pub fn boundary(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = mask.dims();
    let mut out = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            out[y * w + x] = x == 0
                || y == 0
                || x + 1 == w
                || y + 1 == h
                || !mask.get(x - 1, y)
                || !mask.get(x + 1, y)
                || !mask.get(x, y - 1)
                || !mask.get(x, y + 1);
        }
    }
    BinaryMask {
        width: w,
        height: h,
        bits: out,
    }
}

/// Exact Euclidean distances from every pixel to the nearest unset pixel
/// centre, with everything outside the mask counting as unset. Stored as
/// integer squared distances so comparisons are exact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceMap {
    width: usize,
    height: usize,
    squared: Vec<u64>,
}

impl DistanceMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn squared(&self, x: usize, y: usize) -> u64 {
        self.squared[y * self.width + x]
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        (self.squared(x, y) as f64).sqrt()
    }
}

fn intersection(f: &[f64], q: usize, p: usize) -> f64 {
    let (qf, pf) = (q as f64, p as f64);
    ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * qf - 2.0 * pf)
}

/// One-dimensional squared distance transform of a sampled function
/// (lower envelope of parabolas).
fn envelope_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let mut s = intersection(f, q, v[k]);
        // z[0] is -inf, so k never underflows.
        while s <= z[k] {
            k -= 1;
            s = intersection(f, q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

pub fn distance_transform(mask: &BinaryMask) -> DistanceMap {
    let (w, h) = mask.dims();
    // One pixel of unset padding stands in for "outside".
    let pw = w + 2;
    let ph = h + 2;
    let inside = |x: usize, y: usize| x >= 1 && y >= 1 && x <= w && y <= h && mask.get(x - 1, y - 1);

    // Column pass: vertical distance to the nearest unset cell (always finite
    // thanks to the padding rows).
    let mut col = vec![0f64; pw * ph];
    for x in 0..pw {
        let mut run = 0usize;
        for y in 0..ph {
            run = if inside(x, y) { run + 1 } else { 0 };
            col[y * pw + x] = run as f64;
        }
        let mut run = 0usize;
        for y in (0..ph).rev() {
            run = if inside(x, y) { run + 1 } else { 0 };
            let c = &mut col[y * pw + x];
            *c = c.min(run as f64);
            *c *= *c;
        }
    }

    let mut squared = vec![0u64; w * h];
    let mut row_out = vec![0f64; pw];
    let mut v = vec![0usize; pw];
    let mut z = vec![0f64; pw + 1];
    for y in 1..=h {
        let row = &col[y * pw..(y + 1) * pw];
        envelope_1d(row, &mut row_out, &mut v, &mut z);
        for x in 1..=w {
            squared[(y - 1) * w + (x - 1)] = row_out[x].round() as u64;
        }
    }
    DistanceMap {
        width: w,
        height: h,
        squared,
    }
}

/// The deepest pixel of `region`: maximal distance to the nearest pixel
/// outside the region (pixels of `within` that are not in the region count
/// as outside). Ties go to the smallest `(y, x)`.
pub fn interior_center(region: &Region, within: &BinaryMask) -> PixelCoord {
    debug_assert!(region.pixels().iter().all(|&p| within.contains(p) && within.at(p)));
    let (local, x0, y0) = region.local_mask(1);
    let dt = distance_transform(&local);
    let mut best = region.pixels[0];
    let mut best_d = 0u64;
    for &p in region.pixels() {
        let d = dt.squared(p.x - x0 + 1, p.y - y0 + 1);
        if d > best_d {
            best = p;
            best_d = d;
        }
    }
    best
}

/// Running-window "any" over one line of `len` cells with stride `step`.
fn dilate_line(src: &[bool], dst: &mut [bool], start: usize, step: usize, len: usize, radius: usize) {
    let mut prefix = Vec::with_capacity(len + 1);
    prefix.push(0usize);
    for i in 0..len {
        prefix.push(prefix[i] + usize::from(src[start + i * step]));
    }
    for i in 0..len {
        let lo = i.saturating_sub(radius);
        let hi = (i + radius + 1).min(len);
        dst[start + i * step] = prefix[hi] > prefix[lo];
    }
}

/// Chebyshev dilation (square structuring element of side `2 * radius + 1`),
/// clipped at the borders.
pub fn dilate(mask: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let (w, h) = mask.dims();
    let mut horizontal = vec![false; w * h];
    for y in 0..h {
        dilate_line(&mask.bits, &mut horizontal, y * w, 1, w, radius);
    }
    let mut out = vec![false; w * h];
    for x in 0..w {
        dilate_line(&horizontal, &mut out, x, w, h, radius);
    }
    BinaryMask {
        width: w,
        height: h,
        bits: out,
    }
}

/// Chebyshev erosion: a pixel survives when every in-bounds pixel within
/// `radius` is set. Pixels outside the frame are ignored.
pub fn erode(mask: &BinaryMask, radius: usize) -> BinaryMask {
    dilate(&mask.not(), radius).not()
}

/// Thins `region` to a one-pixel-wide skeleton (Zhang–Suen) and returns it
/// as a walk starting from the skeleton endpoint with the smallest `(y, x)`.
///
/// The walk prefers 4-neighbours, then the smallest `(y, x)`; side branches
/// the walk does not reach are dropped. When thinning removes everything
/// (e.g. a 2x2 block) the region's interior center is returned instead.
pub fn skeletonize(region: &Region, within: &BinaryMask) -> Vec<PixelCoord> {
    let (mut grid, x0, y0) = region.local_mask(1);
    zhang_suen(&mut grid);
    let skeleton: Vec<PixelCoord> = grid.pixels().collect();
    if skeleton.is_empty() {
        return vec![interior_center(region, within)];
    }
    walk_skeleton(&grid)
        .into_iter()
        .map(|p| PixelCoord::new(p.x + x0 - 1, p.y + y0 - 1))
        .collect()
}

fn zhang_suen(grid: &mut BinaryMask) {
    let (w, h) = grid.dims();
    // P2..P9 clockwise from north.
    const RING: [(isize, isize); 8] = [(0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1)];
    let mut doomed = Vec::new();
    loop {
        let mut changed = false;
        for pass in 0..2 {
            doomed.clear();
            for p in grid.pixels() {
                let mut n = [false; 8];
                for (slot, &o) in n.iter_mut().zip(RING.iter()) {
                    *slot = offset(p, o, w, h).is_some_and(|q| grid.at(q));
                }
                let b = n.iter().filter(|&&v| v).count();
                let a = (0..8).filter(|&i| !n[i] && n[(i + 1) % 8]).count();
                if !(2..=6).contains(&b) || a != 1 {
                    continue;
                }
                let [p2, _, p4, _, p6, _, p8, _] = n;
                let remove = if pass == 0 {
                    !(p2 && p4 && p6) && !(p4 && p6 && p8)
                } else {
                    !(p2 && p4 && p8) && !(p2 && p6 && p8)
                };
                if remove {
                    doomed.push(p);
                }
            }
            if !doomed.is_empty() {
                changed = true;
                for p in &doomed {
                    grid.set(p.x, p.y, false);
                }
            }
        }
        if !changed {
            break;
        }
    }
}

fn walk_skeleton(grid: &BinaryMask) -> Vec<PixelCoord> {
    let (w, h) = grid.dims();
    let neighbours = |p: PixelCoord| -> Vec<PixelCoord> {
        OFFSETS_8
            .iter()
            .filter_map(|&o| offset(p, o, w, h))
            .filter(|&q| grid.at(q))
            .collect()
    };
    let start = grid
        .pixels()
        .find(|&p| neighbours(p).len() == 1)
        .or_else(|| grid.pixels().next())
        .expect("walk_skeleton needs a nonempty grid");

    let mut visited = vec![false; w * h];
    visited[start.y * w + start.x] = true;
    let mut path = vec![start];
    let mut current = start;
    loop {
        let open: Vec<PixelCoord> = neighbours(current)
            .into_iter()
            .filter(|q| !visited[q.y * w + q.x])
            .collect();
        let orthogonal = open.iter().filter(|q| q.x == current.x || q.y == current.y).min();
        let Some(&next) = orthogonal.or_else(|| open.iter().min()) else {
            break;
        };
        visited[next.y * w + next.x] = true;
        path.push(next);
        current = next;
    }
    path
}
