//! Two-level affine view simulation around the plain detector.
//!
//! Views are the identity plus nine rotations `φ = 0, 20, …, 160°` at tilt
//! `Δt = √R`. Each tilted view is the frame rotated by `φ` on an expanded
//! canvas, blurred along y with `σ = 0.8·√(t²−1)` and subsampled along y by
//! `t`. Keypoints are mapped back into the original frame.

use super::sift::{self, gaussian_blur_y, SiftParams};
use super::{AsiftConfig, Feature, FeatureError};
use crate::image::{FloatImage, Image};
use crate::prelude::*;

/// Tilt factor of a camera at latitude `theta`: `t = 1/cos θ`.
pub fn tilt_from_angle(theta: f64) -> f64 {
    1.0 / theta.cos()
}

/// Two-level schedule for stretch ratio `r` with the default detector thresholds.
pub fn asift_schedule(r: f64) -> AsiftConfig {
    AsiftConfig::new(r)
}

/// Output of [`detect_asift_with_stats`].
#[derive(Debug, Clone, PartialEq)]
pub struct AsiftDetection {
    pub features: Vec<Feature>,
    /// Valid pixels fed to the detector, summed over all views.
    pub processed_pixels: usize,
    /// Valid pixels of the input frame.
    pub base_pixels: usize,
}

impl AsiftDetection {
    pub fn area_factor(&self) -> f64 {
        self.processed_pixels as f64 / self.base_pixels.max(1) as f64
    }
}

pub fn detect_asift(img: &Image, cfg: &AsiftConfig) -> Result<Vec<Feature>, FeatureError> {
    detect_asift_with_stats(img, cfg).map(|d| d.features)
}

pub fn detect_asift_with_stats(img: &Image, cfg: &AsiftConfig) -> Result<AsiftDetection, FeatureError> {
    super::check_size(img)?;
    let params = SiftParams::new(cfg.peak_threshold as f32, cfg.edge_threshold as f32);
    let base = FloatImage::from_image(img);
    let mut features = Vec::new();
    let mut processed = 0usize;
    for view in cfg.views() {
        let sim = simulate_view(&base, img.mask(), view.tilt, view.phi_deg.to_radians());
        processed += sim.valid.as_ref().map_or(sim.image.width * sim.image.height, |m| m.iter().filter(|v| **v).count());
        let found = sift::detect(&sim.image, sim.valid.as_deref(), &params, view);
        features.extend(found.into_iter().filter_map(|f| sim.remap(f, img.width(), img.height())));
    }
    Ok(AsiftDetection { features, processed_pixels: processed, base_pixels: img.valid_count() })
}

/// One simulated affine view and the transform back to the source frame.
pub(crate) struct SimulatedView {
    pub image: FloatImage,
    pub valid: Option<Vec<bool>>,
    tilt: f64,
    cos: f64,
    sin: f64,
    canvas_centre: (f64, f64),
    source_centre: (f64, f64),
}

impl SimulatedView {
    /// View pixel to source pixel.
    pub fn to_source(&self, u: f64, v: f64) -> (f64, f64) {
        let a = u - self.canvas_centre.0;
        let b = v * self.tilt - self.canvas_centre.1;
        // Inverse rotation by φ.
        (
            self.cos * a + self.sin * b + self.source_centre.0,
            -self.sin * a + self.cos * b + self.source_centre.1,
        )
    }

    fn remap(&self, mut f: Feature, width: usize, height: usize) -> Option<Feature> {
        if self.tilt == 1.0 && self.sin == 0.0 && self.cos == 1.0 {
            return Some(f);
        }
        let (x, y) = self.to_source(f.x, f.y);
        if !(x >= 0.0 && y >= 0.0 && x <= (width - 1) as f64 && y <= (height - 1) as f64) {
            return None;
        }
        let (s, c) = f.orientation.sin_cos();
        let (dx, dy) = (c, s * self.tilt);
        let ox = self.cos * dx + self.sin * dy;
        let oy = -self.sin * dx + self.cos * dy;
        f.x = x;
        f.y = y;
        f.scale *= self.tilt.sqrt();
        f.orientation = num_traits::Euclid::rem_euclid(&oy.atan2(ox), &core::f64::consts::TAU);
        Some(f)
    }
}

/// Rotates by `phi` on an expanded canvas, then compresses y by `tilt`.
pub(crate) fn simulate_view(src: &FloatImage, mask: Option<&[bool]>, tilt: f64, phi: f64) -> SimulatedView {
    let (w, h) = (src.width, src.height);
    let source_centre = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    if tilt == 1.0 && phi == 0.0 {
        return SimulatedView {
            image: src.clone(),
            valid: mask.map(|m| m.to_vec()),
            tilt,
            cos: 1.0,
            sin: 0.0,
            canvas_centre: source_centre,
            source_centre,
        };
    }
    let (sin, cos) = phi.sin_cos();
    // Canvas spans the rotated valid region.
    let (mut minx, mut miny, mut maxx, mut maxy) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for y in 0..h {
        for x in 0..w {
            if mask.is_some_and(|m| !m[y * w + x]) {
                continue;
            }
            let (a, b) = (x as f64 - source_centre.0, y as f64 - source_centre.1);
            let (qx, qy) = (cos * a - sin * b, sin * a + cos * b);
            minx = minx.min(qx);
            miny = miny.min(qy);
            maxx = maxx.max(qx);
            maxy = maxy.max(qy);
        }
    }
    if minx > maxx {
        (minx, miny, maxx, maxy) = (0.0, 0.0, 0.0, 0.0);
    }
    let cw = (maxx - minx).ceil() as usize + 1;
    let ch = (maxy - miny).ceil() as usize + 1;
    let canvas_centre = (-minx, -miny);
    let mut rotated = FloatImage::new(cw, ch);
    let mut rvalid = vec![false; cw * ch];
    for y in 0..ch {
        for x in 0..cw {
            let a = x as f64 - canvas_centre.0;
            let b = y as f64 - canvas_centre.1;
            let sx = cos * a + sin * b + source_centre.0;
            let sy = -sin * a + cos * b + source_centre.1;
            if let Some(v) = sample_float(src, mask, sx, sy) {
                rotated.data[y * cw + x] = v;
                rvalid[y * cw + x] = true;
            }
        }
    }
    let blurred = if tilt > 1.0 {
        // Anti-alias in the direction that is about to be subsampled.
        let sigma = 0.8 * (tilt * tilt - 1.0).sqrt();
        let fill = mean_valid(&rotated, &rvalid);
        let mut filled = rotated.clone();
        filled.data.iter_mut().zip(&rvalid).filter(|(_, v)| !**v).for_each(|(p, _)| *p = fill);
        gaussian_blur_y(&filled, sigma as f32)
    } else {
        rotated
    };
    let vh = ((ch as f64 - 1.0) / tilt).floor() as usize + 1;
    let mut image = FloatImage::new(cw, vh);
    let mut valid = vec![false; cw * vh];
    for v in 0..vh {
        let sy = v as f64 * tilt;
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(ch - 1);
        let fy = (sy - y0 as f64) as f32;
        for u in 0..cw {
            let ok0 = rvalid[y0 * cw + u];
            let ok1 = fy == 0.0 || rvalid[y1 * cw + u];
            if ok0 && ok1 {
                image.data[v * cw + u] = blurred.data[y0 * cw + u] * (1.0 - fy) + blurred.data[y1 * cw + u] * fy;
                valid[v * cw + u] = true;
            }
        }
    }
    SimulatedView { image, valid: Some(valid), tilt, cos, sin, canvas_centre, source_centre }
}

fn mean_valid(img: &FloatImage, valid: &[bool]) -> f32 {
    let (s, n) = img
        .data
        .iter()
        .zip(valid)
        .filter(|(_, v)| **v)
        .fold((0.0f64, 0usize), |(s, n), (p, _)| (s + *p as f64, n + 1));
    if n == 0 {
        0.0
    } else {
        (s / n as f64) as f32
    }
}

fn sample_float(img: &FloatImage, mask: Option<&[bool]>, x: f64, y: f64) -> Option<f32> {
    const EPS: f64 = 1e-9;
    let maxx = (img.width - 1) as f64;
    let maxy = (img.height - 1) as f64;
    if !(x >= -EPS && y >= -EPS && x <= maxx + EPS && y <= maxy + EPS) {
        return None;
    }
    let x = x.clamp(0.0, maxx);
    let y = y.clamp(0.0, maxy);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(img.width - 1);
    let y1 = (y0 + 1).min(img.height - 1);
    let fx = (x - x0 as f64) as f32;
    let fy = (y - y0 as f64) as f32;
    let mut acc = 0.0f32;
    for (wgt, px, py) in [
        ((1.0 - fx) * (1.0 - fy), x0, y0),
        (fx * (1.0 - fy), x1, y0),
        ((1.0 - fx) * fy, x0, y1),
        (fx * fy, x1, y1),
    ] {
        if wgt > 0.0 {
            if mask.is_some_and(|m| !m[py * img.width + px]) {
                return None;
            }
            acc += wgt * img.at(px, py);
        }
    }
    Some(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tilt_examples() {
        assert_eq!(tilt_from_angle(0.0), 1.0);
        assert!((tilt_from_angle(28f64.to_radians()) - 1.132_570_050_689_039).abs() < 1e-9);
        assert!((tilt_from_angle(60f64.to_radians()) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn view_centre_is_fixed() {
        let src = FloatImage::new(64, 48);
        for phi in [0.0f64, 20.0, 80.0, 160.0] {
            let v = simulate_view(&src, None, 1.063, phi.to_radians());
            let cu = v.canvas_centre.0;
            let cv = v.canvas_centre.1 / v.tilt;
            let (x, y) = v.to_source(cu, cv);
            assert!((x - 31.5).abs() < 1e-9 && (y - 23.5).abs() < 1e-9);
        }
    }
}
