//! Color-image preprocessing: grayscale, bilinear resize, and 256-bin
//! histogram equalization.

use crate::error::{Error, Result};
use crate::nn::FeatureVector;

/// A row-major RGB image with 8-bit channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl ColorImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::Dimension {
                expected: width * height,
                got: pixels.len(),
            });
        }
        Ok(ColorImage {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }
}

/// Grayscale, resize, equalize, scale: the full traffic-sign input pipeline.
/// Luma weights 0.299/0.587/0.114, bilinear resampling, then 256-bin
/// histogram equalization, returning features in [0, 1].
pub fn preprocess_sign_image(
    image: &ColorImage,
    out_size: (usize, usize),
) -> Result<FeatureVector> {
    if image.width == 0 || image.height == 0 {
        return Err(Error::argument("cannot preprocess a zero-area image"));
    }
    if out_size.0 == 0 || out_size.1 == 0 {
        return Err(Error::argument("output size must be positive"));
    }
    let gray: Vec<f64> = image
        .pixels
        .iter()
        .map(|[r, g, b]| 0.299 * *r as f64 + 0.587 * *g as f64 + 0.114 * *b as f64)
        .collect();
    let resized = bilinear_resize(&gray, (image.width, image.height), out_size);
    let binned: Vec<u8> = resized.iter().map(|&v| v.clamp(0.0, 255.0).round() as u8).collect();
    let equalized = equalize_histogram(&binned);
    FeatureVector::new(equalized.iter().map(|&v| v as f64 / 255.0).collect())
}

/// Bilinear resampling with half-pixel centers; the identity map when input
/// and output sizes match.
pub fn bilinear_resize(src: &[f64], in_size: (usize, usize), out_size: (usize, usize)) -> Vec<f64> {
    let (iw, ih) = in_size;
    let (ow, oh) = out_size;
    assert_eq!(src.len(), iw * ih, "source length must match in_size");
    let sx = iw as f64 / ow as f64;
    let sy = ih as f64 / oh as f64;
    let mut out = Vec::with_capacity(ow * oh);
    for oy in 0..oh {
        let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (ih - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(ih - 1);
        let wy = fy - y0 as f64;
        for ox in 0..ow {
            let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (iw - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(iw - 1);
            let wx = fx - x0 as f64;
            let top = src[y0 * iw + x0] * (1.0 - wx) + src[y0 * iw + x1] * wx;
            let bottom = src[y1 * iw + x0] * (1.0 - wx) + src[y1 * iw + x1] * wx;
            out.push(top * (1.0 - wy) + bottom * wy);
        }
    }
    out
}

/// 256-bin histogram equalization:
/// `out(v) = round((cdf(v) - cdf_min) / (N - cdf_min) * 255)`.
/// A constant image (degenerate CDF) maps to itself.
pub fn equalize_histogram(gray: &[u8]) -> Vec<u8> {
    let mut hist = [0usize; 256];
    for &v in gray {
        hist[v as usize] += 1;
    }
    let mut cdf = [0usize; 256];
    let mut acc = 0;
    for (i, &h) in hist.iter().enumerate() {
        acc += h;
        cdf[i] = acc;
    }
    let n = gray.len();
    let cdf_min = cdf
        .iter()
        .copied()
        .find(|&c| c > 0)
        .unwrap_or(0);
    if cdf_min == n {
        return gray.to_vec(); // single intensity level
    }
    let scale = 255.0 / (n - cdf_min) as f64;
    gray.iter()
        .map(|&v| ((cdf[v as usize] - cdf_min) as f64 * scale).round() as u8)
        .collect()
}
