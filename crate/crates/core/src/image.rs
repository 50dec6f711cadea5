//! 8-bit luminance image with an optional validity mask, plus the float
//! buffer used internally by the feature detector.

use crate::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImageError {
    #[error("data length {len} does not match {width}x{height}")]
    DataLength { width: usize, height: usize, len: usize },
    #[error("mask length {len} does not match {width}x{height}")]
    MaskLength { width: usize, height: usize, len: usize },
    #[error("crop window {width}x{height} at ({x}, {y}) leaves the image")]
    CropOutOfBounds { x: usize, y: usize, width: usize, height: usize },
}

/// Resampling kernel used by every warp in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    Nearest,
    #[default]
    Bilinear,
}

/// Row-major 8-bit luminance image. Pixels whose mask entry is `false`
/// carry no information (outside the scanner window, or resampled from
/// outside the source).
#[derive(Debug, Clone)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<u8>,
    mask: Option<Vec<bool>>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        if data.len() != width * height {
            return Err(ImageError::DataLength { width, height, len: data.len() });
        }
        Ok(Self { width, height, data, mask: None })
    }

    pub fn with_mask(
        width: usize,
        height: usize,
        data: Vec<u8>,
        mask: Vec<bool>,
    ) -> Result<Self, ImageError> {
        let mut img = Self::new(width, height, data)?;
        img.set_mask(Some(mask))?;
        Ok(img)
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self { width, height, data: vec![value; width * height], mask: None }
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data, mask: None }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    pub fn set_mask(&mut self, mask: Option<Vec<bool>>) -> Result<(), ImageError> {
        if let Some(m) = &mask {
            if m.len() != self.width * self.height {
                return Err(ImageError::MaskLength {
                    width: self.width,
                    height: self.height,
                    len: m.len(),
                });
            }
        }
        self.mask = mask;
        Ok(())
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        match &self.mask {
            Some(m) => m[y * self.width + x],
            None => true,
        }
    }

    pub fn valid_count(&self) -> usize {
        match &self.mask {
            Some(m) => m.iter().filter(|v| **v).count(),
            None => self.width * self.height,
        }
    }

    /// Applies a circular scanner window of `radius` pixels about `(cx, cy)`.
    /// Pixels outside become invalid and are zeroed.
    pub fn apply_circular_mask(&mut self, cx: f64, cy: f64, radius: f64) {
        let r2 = radius * radius;
        let mut mask = self.mask.take().unwrap_or_else(|| vec![true; self.width * self.height]);
        for y in 0..self.height {
            for x in 0..self.width {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                let i = y * self.width + x;
                if dx * dx + dy * dy > r2 {
                    mask[i] = false;
                }
                if !mask[i] {
                    self.data[i] = 0;
                }
            }
        }
        self.mask = Some(mask);
    }

    /// Drops an all-true mask so that equality and IO stay canonical.
    pub fn normalize_mask(&mut self) {
        if self.mask.as_ref().is_some_and(|m| m.iter().all(|v| *v)) {
            self.mask = None;
        }
    }

    /// Copies a window. Pixels of the window outside the image are invalid.
    pub fn crop_padded(&self, x0: i64, y0: i64, width: usize, height: usize) -> Image {
        let mut data = vec![0u8; width * height];
        let mut mask = vec![false; width * height];
        for y in 0..height {
            let sy = y0 + y as i64;
            if sy < 0 || sy >= self.height as i64 {
                continue;
            }
            for x in 0..width {
                let sx = x0 + x as i64;
                if sx < 0 || sx >= self.width as i64 {
                    continue;
                }
                let (sx, sy) = (sx as usize, sy as usize);
                data[y * width + x] = self.get(sx, sy);
                mask[y * width + x] = self.is_valid(sx, sy);
            }
        }
        let mut out = Image { width, height, data, mask: Some(mask) };
        out.normalize_mask();
        out
    }

    pub fn crop(&self, x: usize, y: usize, width: usize, height: usize) -> Result<Image, ImageError> {
        if x + width > self.width || y + height > self.height {
            return Err(ImageError::CropOutOfBounds { x, y, width, height });
        }
        Ok(self.crop_padded(x as i64, y as i64, width, height))
    }

    /// Samples the image at a continuous position. Returns `None` when the
    /// position is outside the pixel lattice or when any pixel that carries
    /// interpolation weight is invalid.
    pub fn sample(&self, x: f64, y: f64, interp: Interpolation) -> Option<f64> {
        match interp {
            Interpolation::Nearest => self.sample_nearest(x, y),
            Interpolation::Bilinear => self.sample_bilinear(x, y),
        }
    }

    pub fn sample_nearest(&self, x: f64, y: f64) -> Option<f64> {
        let xi = x.round();
        let yi = y.round();
        if !(xi >= 0.0 && yi >= 0.0 && xi < self.width as f64 && yi < self.height as f64) {
            return None;
        }
        let (xi, yi) = (xi as usize, yi as usize);
        self.is_valid(xi, yi).then(|| self.get(xi, yi) as f64)
    }

    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<f64> {
        const EPS: f64 = 1e-9;
        let maxx = (self.width - 1) as f64;
        let maxy = (self.height - 1) as f64;
        if !(x >= -EPS && y >= -EPS && x <= maxx + EPS && y <= maxy + EPS) {
            return None;
        }
        let x = x.clamp(0.0, maxx);
        let y = y.clamp(0.0, maxy);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let w00 = (1.0 - fx) * (1.0 - fy);
        let w10 = fx * (1.0 - fy);
        let w01 = (1.0 - fx) * fy;
        let w11 = fx * fy;
        let mut acc = 0.0;
        for (w, px, py) in [(w00, x0, y0), (w10, x1, y0), (w01, x0, y1), (w11, x1, y1)] {
            if w > 0.0 {
                if !self.is_valid(px, py) {
                    return None;
                }
                acc += w * self.get(px, py) as f64;
            }
        }
        Some(acc)
    }

    /// Mean luminance over valid pixels.
    pub fn mean(&self) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (i, v) in self.data.iter().enumerate() {
            if self.mask.as_ref().is_none_or(|m| m[i]) {
                sum += *v as f64;
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    /// Rotates the image by a quarter turn clockwise (as displayed, y down).
    pub fn rotate90(&self) -> Image {
        let (w, h) = (self.width, self.height);
        let mut data = vec![0u8; w * h];
        let mut mask = self.mask.as_ref().map(|_| vec![false; w * h]);
        for y in 0..h {
            for x in 0..w {
                let nx = h - 1 - y;
                let ny = x;
                data[ny * h + nx] = self.get(x, y);
                if let Some(m) = mask.as_mut() {
                    m[ny * h + nx] = self.is_valid(x, y);
                }
            }
        }
        Image { width: h, height: w, data, mask }
    }

    /// Euclidean distance (pixels) from every valid pixel to the nearest
    /// invalid pixel or to the outside of the image; zero on invalid pixels.
    pub fn distance_to_invalid(&self) -> Vec<f32> {
        distance_to_invalid(self.width, self.height, |i| self.mask.as_ref().is_none_or(|m| m[i]))
    }
}

/// Pixel-wise equality; a missing mask equals an all-valid mask.
impl PartialEq for Image {
    fn eq(&self, other: &Self) -> bool {
        if self.width != other.width || self.height != other.height || self.data != other.data {
            return false;
        }
        (0..self.width * self.height).all(|i| {
            self.mask.as_ref().is_none_or(|m| m[i]) == other.mask.as_ref().is_none_or(|m| m[i])
        })
    }
}

/// Exact Euclidean distance transform (Felzenszwalb–Huttenlocher) of the
/// invalid set, with everything outside the lattice counted as invalid.
pub(crate) fn distance_to_invalid(
    width: usize,
    height: usize,
    valid: impl Fn(usize) -> bool,
) -> Vec<f32> {
    // One pixel of invalid padding on every side.
    let pw = width + 2;
    let ph = height + 2;
    let inf = 1e20f64;
    let mut grid = vec![0.0f64; pw * ph];
    for y in 0..height {
        for x in 0..width {
            if valid(y * width + x) {
                grid[(y + 1) * pw + x + 1] = inf;
            }
        }
    }
    let mut f = vec![0.0f64; pw.max(ph)];
    let mut d = vec![0.0f64; pw.max(ph)];
    let mut v = vec![0usize; pw.max(ph)];
    let mut z = vec![0.0f64; pw.max(ph) + 1];
    for x in 0..pw {
        for y in 0..ph {
            f[y] = grid[y * pw + x];
        }
        edt_1d(&f[..ph], &mut d[..ph], &mut v, &mut z);
        for y in 0..ph {
            grid[y * pw + x] = d[y];
        }
    }
    for y in 0..ph {
        f[..pw].copy_from_slice(&grid[y * pw..(y + 1) * pw]);
        edt_1d(&f[..pw], &mut d[..pw], &mut v, &mut z);
        grid[y * pw..(y + 1) * pw].copy_from_slice(&d[..pw]);
    }
    let mut out = vec![0.0f32; width * height];
    for y in 0..height {
        for x in 0..width {
            out[y * width + x] = grid[(y + 1) * pw + x + 1].sqrt() as f32;
        }
    }
    out
}

fn edt_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let inf = f64::INFINITY;
    let mut k = 0usize;
    v[0] = 0;
    z[0] = -inf;
    z[1] = inf;
    for q in 1..n {
        let mut s;
        loop {
            let p = v[k];
            s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            // z[0] is -inf, so this stops at k == 0 at the latest.
            if s <= z[k] {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = inf;
    }
    k = 0;
    for (q, dq) in d.iter_mut().enumerate().take(n) {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let diff = q as f64 - p as f64;
        *dq = diff * diff + f[p];
    }
}

/// Single-channel float image used by the scale-space code.
#[derive(Debug, Clone)]
pub(crate) struct FloatImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl FloatImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height] }
    }

    pub fn from_image(img: &Image) -> Self {
        Self {
            width: img.width(),
            height: img.height(),
            data: img.data().iter().map(|v| *v as f32).collect(),
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Keeps every second pixel in both directions.
    pub fn decimate(&self) -> Self {
        let w = (self.width / 2).max(1);
        let h = (self.height / 2).max(1);
        let mut out = Self::new(w, h);
        for y in 0..h {
            for x in 0..w {
                out.data[y * w + x] = self.at(2 * x, 2 * y);
            }
        }
        out
    }
}
