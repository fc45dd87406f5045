//! Sequences on disk (DAVIS layout) and synthetic ones in memory.
//!
//! ```text
//! <root>/JPEGImages/<res>/<seq>/00000.jpg
//! <root>/Annotations/<res>/<seq>/00000.png   8-bit indexed, value = object id
//! <root>/Scribbles/<seq>/001.json            optional
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, FrameSource, RgbFrame};
use crate::interactions::Scribble;
use crate::mask::{LabelMask, ObjectId, PixelCoord, BACKGROUND};
use crate::robot::{GroundTruth, RobotError};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing directory {}", .0.display())]
    MissingDirectory(PathBuf),
    #[error("sequence `{sequence}` has no annotation files")]
    EmptySequence { sequence: String },
    #[error("sequence `{sequence}` has {frames} frames but {annotations} annotations")]
    CountMismatch {
        sequence: String,
        frames: usize,
        annotations: usize,
    },
    #[error("{}: {reason}", path.display())]
    BadPng { path: PathBuf, reason: String },
    #[error("{}: {reason}", path.display())]
    BadImage { path: PathBuf, reason: String },
    #[error("{}: size {found:?} differs from {expected:?}", path.display())]
    SizeMismatch {
        path: PathBuf,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("{}: {reason}", path.display())]
    BadScribbles { path: PathBuf, reason: String },
    #[error("invalid synthetic spec: {0}")]
    BadSpec(String),
    #[error("sequence `{sequence}`: {source}")]
    GroundTruth {
        sequence: String,
        #[source]
        source: RobotError,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Where a sequence's RGB frames come from.
#[derive(Debug, Clone)]
pub enum FrameStore {
    /// Image files decoded on demand.
    Files(Vec<PathBuf>),
    Memory(Vec<Arc<RgbFrame>>),
    None,
}

impl FrameStore {
    /// Number of stored frames; `None` when the sequence carries no images.
    pub fn frame_count(&self) -> Option<usize> {
        match self {
            FrameStore::Files(f) => Some(f.len()),
            FrameStore::Memory(f) => Some(f.len()),
            FrameStore::None => None,
        }
    }
}

impl FrameSource for FrameStore {
    fn frame(&self, index: usize) -> Result<Option<Arc<RgbFrame>>, BackendError> {
        match self {
            FrameStore::Files(paths) => {
                let path = paths.get(index).ok_or(BackendError::FrameOutOfRange {
                    frame_index: index,
                    num_frames: paths.len(),
                })?;
                let frame = read_rgb(path).map_err(|e| BackendError::FrameLoad {
                    frame_index: index,
                    reason: e.to_string(),
                })?;
                Ok(Some(Arc::new(frame)))
            }
            FrameStore::Memory(frames) => Ok(frames.get(index).cloned()),
            FrameStore::None => Ok(None),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SequenceDataset {
    pub name: String,
    pub frames: FrameStore,
    pub ground_truth: GroundTruth,
    /// Recorded scribbles, one list per frame.
    pub initial_scribbles: Option<Vec<Vec<Scribble>>>,
}

impl SequenceDataset {
    pub fn num_frames(&self) -> usize {
        self.ground_truth.num_frames()
    }

    pub fn object_ids(&self) -> &BTreeSet<ObjectId> {
        self.ground_truth.object_ids()
    }
}

pub fn read_rgb(path: &Path) -> Result<RgbFrame, DatasetError> {
    let img = image::open(path)
        .map_err(|e| DatasetError::BadImage {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?
        .to_rgb8();
    let (w, h) = img.dimensions();
    Ok(RgbFrame {
        width: w as usize,
        height: h as usize,
        pixels: img.pixels().map(|p| p.0).collect(),
    })
}

/// Decodes an 8-bit palette PNG; each pixel's palette index is its label.
pub fn read_label_png(path: &Path) -> Result<LabelMask, DatasetError> {
    let bad = |reason: String| DatasetError::BadPng {
        path: path.to_path_buf(),
        reason,
    };
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(|e| bad(e.to_string()))?;
    let info = reader.info();
    if info.color_type != png::ColorType::Indexed || info.bit_depth != png::BitDepth::Eight {
        return Err(bad(format!(
            "expected an 8-bit indexed PNG, found {:?} at {:?}",
            info.color_type, info.bit_depth
        )));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| bad("image too large".into()))?;
    let mut buf = vec![0; size];
    let out = reader.next_frame(&mut buf).map_err(|e| bad(e.to_string()))?;
    let (w, h) = (out.width as usize, out.height as usize);
    let mut labels = Vec::with_capacity(w * h);
    for row in buf.chunks(out.line_size).take(h) {
        labels.extend(row[..w].iter().map(|&v| ObjectId::from(v)));
    }
    LabelMask::new(w, h, labels).map_err(|e| bad(e.to_string()))
}

/// The usual VOC/DAVIS colour map.
pub fn davis_palette() -> Vec<u8> {
    let mut out = Vec::with_capacity(256 * 3);
    for i in 0..256u32 {
        let (mut r, mut g, mut b) = (0u8, 0u8, 0u8);
        let mut c = i;
        for j in 0..8 {
            r |= ((c & 1) as u8) << (7 - j);
            g |= (((c >> 1) & 1) as u8) << (7 - j);
            b |= (((c >> 2) & 1) as u8) << (7 - j);
            c >>= 3;
        }
        out.extend([r, g, b]);
    }
    out
}

pub fn write_label_png(path: &Path, mask: &LabelMask) -> Result<(), DatasetError> {
    let bad = |reason: String| DatasetError::BadPng {
        path: path.to_path_buf(),
        reason,
    };
    let data: Vec<u8> = mask
        .labels()
        .iter()
        .map(|&l| u8::try_from(l).map_err(|_| bad(format!("label {l} does not fit an 8-bit palette"))))
        .collect::<Result<_, _>>()?;
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), mask.width() as u32, mask.height() as u32);
    encoder.set_color(png::ColorType::Indexed);
    encoder.set_depth(png::BitDepth::Eight);
    encoder.set_palette(davis_palette());
    let mut writer = encoder.write_header().map_err(|e| bad(e.to_string()))?;
    writer.write_image_data(&data).map_err(|e| bad(e.to_string()))?;
    writer.finish().map_err(|e| bad(e.to_string()))
}

/// Sorted files in `dir` with the given extension.
pub fn list_files(dir: &Path, extension: &str) -> Result<Vec<PathBuf>, DatasetError> {
    if !dir.is_dir() {
        return Err(DatasetError::MissingDirectory(dir.to_path_buf()));
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        let matches = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case(extension));
        if matches && path.is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Sequence names found under `Annotations/<resolution>`, sorted.
pub fn list_sequences(root: &Path, resolution: &str) -> Result<Vec<String>, DatasetError> {
    let dir = root.join("Annotations").join(resolution);
    if !dir.is_dir() {
        return Err(DatasetError::MissingDirectory(dir));
    }
    let mut names = Vec::new();
    for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
        let entry = entry.map_err(io_err(&dir))?;
        if entry.path().is_dir() {
            names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort();
    Ok(names)
}

pub fn load_sequence(root: &Path, resolution: &str, name: &str) -> Result<SequenceDataset, DatasetError> {
    let frame_paths = list_files(&root.join("JPEGImages").join(resolution).join(name), "jpg")?;
    let ann_paths = list_files(&root.join("Annotations").join(resolution).join(name), "png")?;
    if ann_paths.is_empty() {
        return Err(DatasetError::EmptySequence {
            sequence: name.to_string(),
        });
    }
    if frame_paths.len() != ann_paths.len() {
        return Err(DatasetError::CountMismatch {
            sequence: name.to_string(),
            frames: frame_paths.len(),
            annotations: ann_paths.len(),
        });
    }
    let mut masks = Vec::with_capacity(ann_paths.len());
    for p in &ann_paths {
        let m = read_label_png(p)?;
        if let Some(first) = masks.first().map(LabelMask::dims) {
            if m.dims() != first {
                return Err(DatasetError::SizeMismatch {
                    path: p.clone(),
                    expected: first,
                    found: m.dims(),
                });
            }
        }
        masks.push(m);
    }
    let expected = masks[0].dims();
    for p in &frame_paths {
        let (w, h) = image::image_dimensions(p).map_err(|e| DatasetError::BadImage {
            path: p.clone(),
            reason: e.to_string(),
        })?;
        if (w as usize, h as usize) != expected {
            return Err(DatasetError::SizeMismatch {
                path: p.clone(),
                expected,
                found: (w as usize, h as usize),
            });
        }
    }
    let ground_truth = GroundTruth::from_frames(masks).map_err(|source| DatasetError::GroundTruth {
        sequence: name.to_string(),
        source,
    })?;
    let scribble_path = root.join("Scribbles").join(name).join("001.json");
    let initial_scribbles = if scribble_path.is_file() {
        let (w, h) = expected;
        let per_frame = load_scribbles(&scribble_path, w, h, ground_truth.object_ids())?;
        if per_frame.len() != ground_truth.num_frames() {
            return Err(DatasetError::BadScribbles {
                path: scribble_path,
                reason: format!(
                    "{} scribble frames for a {}-frame sequence",
                    per_frame.len(),
                    ground_truth.num_frames()
                ),
            });
        }
        Some(per_frame)
    } else {
        None
    };
    log::debug!("loaded `{name}`: {} frames", ground_truth.num_frames());
    Ok(SequenceDataset {
        name: name.to_string(),
        frames: FrameStore::Files(frame_paths),
        ground_truth,
        initial_scribbles,
    })
}

/// Loads the named sequences, or every sequence when `names` is empty.
/// Stops at the first sequence that fails.
pub fn load_dataset(root: &Path, resolution: &str, names: &[String]) -> Result<Vec<SequenceDataset>, DatasetError> {
    let names = if names.is_empty() {
        list_sequences(root, resolution)?
    } else {
        names.to_vec()
    };
    names.iter().map(|n| load_sequence(root, resolution, n)).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScribbleFile {
    #[serde(default)]
    sequence: Option<String>,
    scribbles: Vec<Vec<ScribbleRecord>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScribbleRecord {
    path: Vec<[f64; 2]>,
    object_id: ObjectId,
}

/// Normalised coordinate to pixel index: `floor(v * (dim - 1) + 0.5)`.
pub fn denormalize(v: f64, dim: usize) -> Option<usize> {
    if !(0.0..=1.0).contains(&v) {
        return None;
    }
    Some(((v * (dim - 1) as f64 + 0.5).floor() as usize).min(dim - 1))
}

pub fn normalize(p: usize, dim: usize) -> f64 {
    if dim <= 1 {
        return 0.0;
    }
    p as f64 / (dim - 1) as f64
}

/// Reads a DAVIS scribble file into one scribble list per frame. Timing
/// fields are ignored.
pub fn load_scribbles(
    path: &Path,
    width: usize,
    height: usize,
    object_ids: &BTreeSet<ObjectId>,
) -> Result<Vec<Vec<Scribble>>, DatasetError> {
    let bad = |reason: String| DatasetError::BadScribbles {
        path: path.to_path_buf(),
        reason,
    };
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let file: ScribbleFile = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    let mut out = Vec::with_capacity(file.scribbles.len());
    for (frame_index, records) in file.scribbles.iter().enumerate() {
        let mut frame = Vec::with_capacity(records.len());
        for (k, record) in records.iter().enumerate() {
            if record.object_id != BACKGROUND && !object_ids.contains(&record.object_id) {
                return Err(bad(format!(
                    "frame {frame_index}, scribble {k}: unknown object id {}",
                    record.object_id
                )));
            }
            let mut points = Vec::with_capacity(record.path.len());
            for (n, &[x, y]) in record.path.iter().enumerate() {
                match (denormalize(x, width), denormalize(y, height)) {
                    (Some(px), Some(py)) => points.push(PixelCoord::new(px, py)),
                    _ => {
                        return Err(bad(format!(
                            "frame {frame_index}, scribble {k}, point {n}: ({x}, {y}) is outside [0, 1]"
                        )))
                    }
                }
            }
            if points.is_empty() {
                log::debug!("{}: skipping empty scribble {k} on frame {frame_index}", path.display());
                continue;
            }
            frame.push(Scribble {
                object_id: record.object_id,
                path: points,
                frame_index,
            });
        }
        out.push(frame);
    }
    Ok(out)
}

pub fn write_scribbles(
    path: &Path,
    sequence: &str,
    per_frame: &[Vec<Scribble>],
    width: usize,
    height: usize,
) -> Result<(), DatasetError> {
    let file = ScribbleFile {
        sequence: Some(sequence.to_string()),
        scribbles: per_frame
            .iter()
            .map(|frame| {
                frame
                    .iter()
                    .map(|s| ScribbleRecord {
                        path: s.path.iter().map(|p| [normalize(p.x, width), normalize(p.y, height)]).collect(),
                        object_id: s.object_id,
                    })
                    .collect()
            })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&file).expect("scribbles serialise");
    fs::write(path, text).map_err(io_err(path))
}

/// Writes a sequence in DAVIS layout. Frames without pixels are written
/// as flat grey images.
pub fn write_davis(root: &Path, resolution: &str, seq: &SequenceDataset) -> Result<(), DatasetError> {
    let img_dir = root.join("JPEGImages").join(resolution).join(&seq.name);
    let ann_dir = root.join("Annotations").join(resolution).join(&seq.name);
    for d in [&img_dir, &ann_dir] {
        fs::create_dir_all(d).map_err(io_err(d))?;
    }
    let (w, h) = seq.ground_truth.dims();
    for (i, mask) in seq.ground_truth.frames().iter().enumerate() {
        let frame = seq.frames.frame(i).map_err(|e| DatasetError::BadImage {
            path: img_dir.clone(),
            reason: e.to_string(),
        })?;
        let pixels: Vec<u8> = match frame {
            Some(f) => f.pixels.iter().flatten().copied().collect(),
            None => vec![128; w * h * 3],
        };
        let jpg = img_dir.join(format!("{i:05}.jpg"));
        let img = image::RgbImage::from_raw(w as u32, h as u32, pixels).ok_or_else(|| DatasetError::BadImage {
            path: jpg.clone(),
            reason: "frame size differs from annotation size".into(),
        })?;
        img.save_with_format(&jpg, image::ImageFormat::Jpeg)
            .map_err(|e| DatasetError::BadImage {
                path: jpg.clone(),
                reason: e.to_string(),
            })?;
        write_label_png(&ann_dir.join(format!("{i:05}.png")), mask)?;
    }
    if let Some(scribbles) = &seq.initial_scribbles {
        let dir = root.join("Scribbles").join(&seq.name);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        write_scribbles(&dir.join("001.json"), &seq.name, scribbles, w, h)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    /// Top-left corner and size.
    Rect { x: i64, y: i64, width: i64, height: i64 },
    /// Centre and radii.
    Ellipse { cx: i64, cy: i64, rx: i64, ry: i64 },
}

impl Shape {
    fn contains(&self, x: i64, y: i64) -> bool {
        match *self {
            Shape::Rect {
                x: x0,
                y: y0,
                width,
                height,
            } => x >= x0 && x < x0 + width && y >= y0 && y < y0 + height,
            Shape::Ellipse { cx, cy, rx, ry } => {
                let (dx, dy) = (x - cx, y - cy);
                dx * dx * ry * ry + dy * dy * rx * rx <= rx * rx * ry * ry
            }
        }
    }

    fn valid(&self) -> bool {
        match *self {
            Shape::Rect { width, height, .. } => width > 0 && height > 0,
            Shape::Ellipse { rx, ry, .. } => rx > 0 && ry > 0,
        }
    }
}

fn default_move_every() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthObject {
    pub id: ObjectId,
    pub shape: Shape,
    /// Pixels per move, `[dx, dy]`.
    #[serde(default)]
    pub velocity: [i64; 2],
    /// Frames between moves; larger values give piecewise-static motion.
    #[serde(default = "default_move_every")]
    pub move_every: usize,
}

/// A scene of solid shapes on a flat background. Later objects occlude
/// earlier ones.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    #[serde(default)]
    pub seed: u64,
    pub objects: Vec<SynthObject>,
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<SequenceDataset, DatasetError> {
    let bad = |m: String| DatasetError::BadSpec(m);
    if spec.width == 0 || spec.height == 0 || spec.frames == 0 {
        return Err(bad("width, height and frames must be positive".into()));
    }
    if spec.objects.is_empty() {
        return Err(bad("at least one object is required".into()));
    }
    let mut seen = BTreeSet::new();
    for o in &spec.objects {
        if o.id == BACKGROUND {
            return Err(bad("object id 0 is reserved for background".into()));
        }
        if !seen.insert(o.id) {
            return Err(bad(format!("object id {} is used twice", o.id)));
        }
        if !o.shape.valid() {
            return Err(bad(format!("object {} has an empty shape", o.id)));
        }
        if o.move_every == 0 {
            return Err(bad(format!("object {}: move_every must be at least 1", o.id)));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let background: [u8; 3] = [rng.random_range(0..64), rng.random_range(0..64), rng.random_range(0..64)];
    let colors: Vec<[u8; 3]> = spec
        .objects
        .iter()
        .map(|_| [rng.random_range(96..=255), rng.random_range(96..=255), rng.random_range(96..=255)])
        .collect();

    let (w, h) = (spec.width, spec.height);
    let mut masks = Vec::with_capacity(spec.frames);
    let mut frames = Vec::with_capacity(spec.frames);
    for t in 0..spec.frames {
        let mut labels = vec![BACKGROUND; w * h];
        let mut pixels = vec![background; w * h];
        for (o, color) in spec.objects.iter().zip(&colors) {
            let steps = (t / o.move_every) as i64;
            let (ox, oy) = (o.velocity[0] * steps, o.velocity[1] * steps);
            for y in 0..h {
                for x in 0..w {
                    if o.shape.contains(x as i64 - ox, y as i64 - oy) {
                        labels[y * w + x] = o.id;
                        pixels[y * w + x] = *color;
                    }
                }
            }
        }
        masks.push(LabelMask::new(w, h, labels).expect("sizes checked"));
        frames.push(Arc::new(RgbFrame {
            width: w,
            height: h,
            pixels,
        }));
    }
    let ids = spec.objects.iter().map(|o| o.id).collect();
    let ground_truth = GroundTruth::new(masks, ids).map_err(|source| DatasetError::GroundTruth {
        sequence: spec.name.clone(),
        source,
    })?;
    Ok(SequenceDataset {
        name: spec.name.clone(),
        frames: FrameStore::Memory(frames),
        ground_truth,
        initial_scribbles: None,
    })
}
