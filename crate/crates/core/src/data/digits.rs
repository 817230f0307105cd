//! Procedurally rendered digit corpus.
//!
//! Each sample rasterizes one of ten stroke-based glyphs at 16x16 with a
//! random affine jitter (shift, scale, rotation), stroke width, contrast,
//! and additive noise. The generator is a pure function of `(seed, index)`,
//! so splits carved from disjoint index ranges never share samples.

use rand::Rng;

use crate::data::{Dataset, LabeledSample};
use crate::error::Result;
use crate::nn::FeatureVector;
use crate::rng::stream;

/// Side length of a rendered digit image.
pub const DIGIT_SIDE: usize = 16;
/// Number of digit classes.
pub const DIGIT_CLASSES: usize = 10;

type Point = (f64, f64);

/// Generates `count` digit samples starting at stream index `start_index`.
pub fn synthetic_digits(count: usize, start_index: u64, seed: u64) -> Result<Dataset> {
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let index = start_index + i as u64;
        let label = (index % DIGIT_CLASSES as u64) as usize;
        samples.push(LabeledSample {
            x: render_digit(label, seed, index),
            y: label,
        });
    }
    Dataset::new(samples, DIGIT_CLASSES, (DIGIT_SIDE, DIGIT_SIDE, 1))
}

fn render_digit(digit: usize, seed: u64, index: u64) -> FeatureVector {
    let mut rng = stream(seed, "digit-sample", index);
    let scale = rng.gen_range(0.8..1.1);
    let angle = rng.gen_range(-0.18..0.18f64); // radians, about +/- 10 degrees
    let dx = rng.gen_range(-1.5..1.5);
    let dy = rng.gen_range(-1.5..1.5);
    let thickness = rng.gen_range(0.75..1.3); // pixels
    let contrast = rng.gen_range(0.75..1.0);
    let noise = rng.gen_range(0.02..0.06);

    let side = DIGIT_SIDE as f64;
    let center = side / 2.0;
    let (sin, cos) = angle.sin_cos();
    // Glyph coordinates live in the unit square; map them into the image.
    let transform = |(gx, gy): Point| -> Point {
        let x = (gx - 0.5) * scale * side;
        let y = (gy - 0.5) * scale * side;
        (
            center + x * cos - y * sin + dx,
            center + x * sin + y * cos + dy,
        )
    };

    let mut segments: Vec<(Point, Point)> = Vec::new();
    for stroke in glyph_strokes(digit) {
        for pair in stroke.windows(2) {
            segments.push((transform(pair[0]), transform(pair[1])));
        }
    }

    let mut values = Vec::with_capacity(DIGIT_SIDE * DIGIT_SIDE);
    for py in 0..DIGIT_SIDE {
        for px in 0..DIGIT_SIDE {
            let p = (px as f64 + 0.5, py as f64 + 0.5);
            let mut d2 = f64::INFINITY;
            for &(a, b) in &segments {
                d2 = d2.min(segment_distance_sq(p, a, b));
            }
            let ink = (-d2 / (thickness * thickness)).exp();
            let v = contrast * ink + noise * (rng.gen::<f64>() * 2.0 - 1.0);
            values.push(v.clamp(0.0, 1.0));
        }
    }
    FeatureVector::new(values).expect("clamped")
}

fn segment_distance_sq(p: Point, a: Point, b: Point) -> f64 {
    let (px, py) = p;
    let (ax, ay) = a;
    let (bx, by) = b;
    let (vx, vy) = (bx - ax, by - ay);
    let len2 = vx * vx + vy * vy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((px - ax) * vx + (py - ay) * vy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (ax + t * vx, ay + t * vy);
    (px - cx) * (px - cx) + (py - cy) * (py - cy)
}

/// Polyline arc around `(cx, cy)` from angle `a0` to `a1` (degrees, y down).
fn arc(cx: f64, cy: f64, rx: f64, ry: f64, a0: f64, a1: f64, steps: usize) -> Vec<Point> {
    (0..=steps)
        .map(|i| {
            let t = a0 + (a1 - a0) * i as f64 / steps as f64;
            let rad = t.to_radians();
            (cx + rx * rad.cos(), cy + ry * rad.sin())
        })
        .collect()
}

fn glyph_strokes(digit: usize) -> Vec<Vec<Point>> {
    match digit {
        0 => vec![arc(0.5, 0.5, 0.26, 0.38, 0.0, 360.0, 16)],
        1 => vec![
            vec![(0.38, 0.28), (0.56, 0.12)],
            vec![(0.56, 0.12), (0.56, 0.88)],
        ],
        2 => vec![
            arc(0.5, 0.32, 0.25, 0.2, 180.0, 360.0, 8),
            vec![(0.75, 0.32), (0.28, 0.88)],
            vec![(0.28, 0.88), (0.78, 0.88)],
        ],
        3 => vec![
            arc(0.45, 0.31, 0.25, 0.19, -90.0, 90.0, 8),
            arc(0.45, 0.69, 0.27, 0.2, -90.0, 90.0, 8),
        ],
        4 => vec![
            vec![(0.62, 0.12), (0.25, 0.62)],
            vec![(0.25, 0.62), (0.8, 0.62)],
            vec![(0.62, 0.35), (0.62, 0.9)],
        ],
        5 => vec![
            vec![(0.72, 0.12), (0.3, 0.12)],
            vec![(0.3, 0.12), (0.28, 0.45)],
            arc(0.45, 0.65, 0.26, 0.22, -80.0, 140.0, 10),
        ],
        6 => vec![
            vec![(0.66, 0.13), (0.45, 0.3)],
            vec![(0.45, 0.3), (0.32, 0.5)],
            vec![(0.32, 0.5), (0.27, 0.62)],
            arc(0.5, 0.66, 0.23, 0.22, 0.0, 360.0, 12),
        ],
        7 => vec![
            vec![(0.25, 0.14), (0.75, 0.14)],
            vec![(0.75, 0.14), (0.42, 0.88)],
        ],
        8 => vec![
            arc(0.5, 0.32, 0.2, 0.18, 0.0, 360.0, 12),
            arc(0.5, 0.7, 0.24, 0.2, 0.0, 360.0, 12),
        ],
        9 => vec![
            arc(0.5, 0.35, 0.22, 0.21, 0.0, 360.0, 12),
            vec![(0.72, 0.35), (0.7, 0.6)],
            vec![(0.7, 0.6), (0.62, 0.88)],
        ],
        other => panic!("digit {other} out of range"),
    }
}
