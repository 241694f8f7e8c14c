//! Raster and feature-vector images, orientation classes and pair
//! concatenation.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 8-bit RGB, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Image(format!("empty image {width}x{height}")));
        }
        if data.len() != width * height * 3 {
            return Err(Error::Image(format!(
                "{width}x{height} RGB needs {} bytes, got {}",
                width * height * 3,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image from a per-pixel function.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, data).expect("valid dimensions")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let o = (y * self.width + x) * 3;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    pub fn orientation(&self) -> Orientation {
        orientation(self)
    }
}

/// Toy stand-in for an image: a fixed-length real vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImage {
    pub features: Vec<f64>,
}

impl FeatureImage {
    pub fn new(features: Vec<f64>) -> Result<Self> {
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("feature image"));
        }
        Ok(Self { features })
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    Landscape,
    Portrait,
    Square,
}

impl Orientation {
    /// Pairing class: squares travel with landscapes.
    pub fn class(self) -> Orientation {
        match self {
            Orientation::Square => Orientation::Landscape,
            o => o,
        }
    }
}

pub fn orientation(img: &RasterImage) -> Orientation {
    use std::cmp::Ordering::*;
    match img.width.cmp(&img.height) {
        Greater => Orientation::Landscape,
        Less => Orientation::Portrait,
        Equal => Orientation::Square,
    }
}

/// Placement of the pair: `AB` puts the first argument top/left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Order {
    AB,
    BA,
}

/// Bilinear resize with half-pixel centers; samples are rounded to the
/// nearest integer.
pub fn resize_bilinear(img: &RasterImage, width: usize, height: usize) -> RasterImage {
    assert!(width > 0 && height > 0, "resize target must be non-empty");
    if width == img.width && height == img.height {
        return img.clone();
    }
    let sx = img.width as f64 / width as f64;
    let sy = img.height as f64 / height as f64;
    let coord = |dst: usize, scale: f64, len: usize| {
        let s = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
        let lo = s.floor() as usize;
        let hi = (lo + 1).min(len - 1);
        (lo, hi, s - lo as f64)
    };
    RasterImage::from_fn(width, height, |x, y| {
        let (x0, x1, fx) = coord(x, sx, img.width);
        let (y0, y1, fy) = coord(y, sy, img.height);
        let (p00, p10, p01, p11) = (
            img.pixel(x0, y0),
            img.pixel(x1, y0),
            img.pixel(x0, y1),
            img.pixel(x1, y1),
        );
        let mut out = [0u8; 3];
        for c in 0..3 {
            let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
            let bottom = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
            out[c] = (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8;
        }
        out
    })
}

/// Joins two images of the same orientation class. Landscape (and square)
/// pairs stack vertically with `b` resized to `a`'s width; portrait pairs
/// sit side by side with `b` resized to `a`'s height. Aspect ratio of `b`
/// is kept.
pub fn concat_images(a: &RasterImage, b: &RasterImage, order: Order) -> Result<RasterImage> {
    let class = a.orientation().class();
    if class != b.orientation().class() {
        return Err(Error::OrientationMismatch);
    }
    let scaled = |num: usize, den: usize, len: usize| ((len * num) as f64 / den as f64).round().max(1.0) as usize;
    let b = match class {
        Orientation::Portrait => {
            let w = scaled(a.height, b.height, b.width);
            resize_bilinear(b, w, a.height)
        }
        _ => {
            let h = scaled(a.width, b.width, b.height);
            resize_bilinear(b, a.width, h)
        }
    };
    let (first, second) = match order {
        Order::AB => (a, &b),
        Order::BA => (&b, a),
    };
    Ok(match class {
        Orientation::Portrait => {
            let h = first.height;
            let w = first.width + second.width;
            let mut data = Vec::with_capacity(w * h * 3);
            for y in 0..h {
                data.extend_from_slice(&first.data[y * first.width * 3..(y + 1) * first.width * 3]);
                data.extend_from_slice(&second.data[y * second.width * 3..(y + 1) * second.width * 3]);
            }
            RasterImage::new(w, h, data)?
        }
        _ => {
            let mut data = first.data.clone();
            data.extend_from_slice(&second.data);
            RasterImage::new(first.width, first.height + second.height, data)?
        }
    })
}

/// Ordered concatenation of two feature vectors.
pub fn concat_features(a: &FeatureImage, b: &FeatureImage, order: Order) -> Result<FeatureImage> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let (first, second) = match order {
        Order::AB => (a, b),
        Order::BA => (b, a),
    };
    let mut features = first.features.clone();
    features.extend_from_slice(&second.features);
    Ok(FeatureImage { features })
}

/// Binary PPM (P6, maxval 255).
pub fn encode_ppm(img: &RasterImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

pub fn decode_ppm(bytes: &[u8]) -> Result<RasterImage> {
    let bad = |m: &str| Error::Image(format!("PPM: {m}"));
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        // skip whitespace and comments
        while pos < bytes.len() {
            match bytes[pos] {
                b'#' => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header not ASCII"))?);
    }
    if fields[0] != "P6" {
        return Err(bad("only binary P6 is supported"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (w, h, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval != 255 {
        return Err(bad("maxval must be 255"));
    }
    // exactly one whitespace byte separates the header from the samples
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(bad("missing raster"));
    }
    let raster = &bytes[pos + 1..];
    if raster.len() != w * h * 3 {
        return Err(bad("raster length does not match header"));
    }
    RasterImage::new(w, h, raster.to_vec())
}

pub fn read_ppm(path: &Path) -> Result<RasterImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&bytes)
}

pub fn write_ppm(path: &Path, img: &RasterImage) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_ppm(img)).map_err(|e| Error::io(path, e))
}
