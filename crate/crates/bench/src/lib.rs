//! Fixtures shared by the benchmarks.

use ivos_core::dataset::{Shape, SynthObject};
use ivos_core::{generate_synthetic, BinaryMask, SequenceDataset, SynthSpec};

/// A filled disc with a notch cut out, so boundaries are not trivially convex.
pub fn notched_disc(size: usize) -> BinaryMask {
    let c = size as f64 / 2.0;
    let r = size as f64 * 0.4;
    BinaryMask::from_fn(size, size, |x, y| {
        let (dx, dy) = (x as f64 - c, y as f64 - c);
        dx * dx + dy * dy <= r * r && !(dx > 0.0 && dy.abs() < r / 4.0)
    })
    .expect("non-empty size")
}

/// The same disc shifted by `offset` pixels.
pub fn shifted_disc(size: usize, offset: usize) -> BinaryMask {
    let base = notched_disc(size);
    BinaryMask::from_fn(size, size, |x, y| x >= offset && base.get(x - offset, y)).expect("non-empty size")
}

/// A sequence with two moving objects.
pub fn moving_scene(width: usize, height: usize, frames: usize) -> SequenceDataset {
    let (w, h) = (width as i64, height as i64);
    generate_synthetic(&SynthSpec {
        name: format!("bench-{width}x{height}x{frames}"),
        width,
        height,
        frames,
        seed: 7,
        objects: vec![
            SynthObject {
                id: 1,
                shape: Shape::Rect {
                    x: w / 10,
                    y: h / 4,
                    width: w / 4,
                    height: h / 3,
                },
                velocity: [1, 0],
                move_every: 1,
            },
            SynthObject {
                id: 2,
                shape: Shape::Ellipse {
                    cx: w * 2 / 3,
                    cy: h / 2,
                    rx: w / 8,
                    ry: h / 5,
                },
                velocity: [0, 1],
                move_every: 2,
            },
        ],
    })
    .expect("valid scene")
}
