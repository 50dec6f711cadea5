//! Keypoint detection, the two-level affine wrapper, and descriptor matching.

mod asift;
mod compare;
mod matching;
pub(crate) mod sift;

pub use asift::{asift_schedule, detect_asift, detect_asift_with_stats, tilt_from_angle, AsiftDetection};
pub use compare::{compare_matchers, MatchComparison, MatcherStats};
pub use matching::{dedupe_matches, match_asift, match_features, match_features_with, Match, DEFAULT_RATIO};

use crate::image::{FloatImage, Image};
use crate::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("image {width}x{height} with {valid} valid pixels is below the 32x32 minimum")]
    TooSmall { width: usize, height: usize, valid: usize },
}

/// Simulated view a feature was detected in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewId {
    /// Position in [`AsiftConfig::views`].
    pub index: usize,
    pub tilt: f64,
    pub phi_deg: f64,
}

impl ViewId {
    pub const ORIGINAL: ViewId = ViewId { index: 0, tilt: 1.0, phi_deg: 0.0 };
}

/// Oriented keypoint with its descriptor, in source-image coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub x: f64,
    pub y: f64,
    /// Detection scale σ in source pixels.
    pub scale: f64,
    /// Radians in `[0, 2π)`, measured from +x towards +y.
    pub orientation: f64,
    /// Unit-norm gradient histogram.
    pub descriptor: [f32; 128],
    pub view: ViewId,
}

/// Affine view schedule plus detector thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct AsiftConfig {
    /// Stretch ratio R between loaded and unloaded images.
    pub stretch_ratio: f64,
    /// Tilt step Δt = √R.
    pub delta_t: f64,
    /// Latitude acos(1/Δt), radians.
    pub latitude: f64,
    pub tilt_levels: Vec<f64>,
    /// Rotations applied at the tilted level, degrees.
    pub rotations_deg: Vec<f64>,
    /// DoG peak threshold, grey levels.
    pub peak_threshold: f64,
    pub edge_threshold: f64,
}

impl AsiftConfig {
    /// Schedule for stretch ratio `r` (values below 1 are treated as 1).
    pub fn new(r: f64) -> Self {
        let r = if r.is_finite() { r.max(1.0) } else { 1.0 };
        let delta_t = r.sqrt();
        let (tilt_levels, rotations_deg) = if delta_t > 1.0 {
            (vec![1.0, delta_t], (0..9).map(|i| 20.0 * i as f64).collect())
        } else {
            (vec![1.0], Vec::new())
        };
        Self {
            stretch_ratio: r,
            delta_t,
            latitude: (1.0 / delta_t).acos(),
            tilt_levels,
            rotations_deg,
            peak_threshold: 1.0,
            edge_threshold: 10.0,
        }
    }

    /// Only the identity view: plain SIFT with the same thresholds.
    pub fn plain() -> Self {
        Self::new(1.0)
    }

    pub fn latitude_deg(&self) -> f64 {
        self.latitude.to_degrees()
    }

    /// Identity view first, then each rotation at every tilt above 1.
    pub fn views(&self) -> Vec<ViewId> {
        let mut out = vec![ViewId::ORIGINAL];
        for &t in self.tilt_levels.iter().filter(|t| **t > 1.0) {
            for &phi in &self.rotations_deg {
                out.push(ViewId { index: out.len(), tilt: t, phi_deg: phi });
            }
        }
        out
    }

    /// Detector work relative to one plain run: `1 + n·cos θ`.
    pub fn predicted_compute_factor(&self) -> f64 {
        let tilted = self.views().len() - 1;
        1.0 + tilted as f64 * self.latitude.cos()
    }
}

impl Default for AsiftConfig {
    fn default() -> Self {
        Self::new(1.13)
    }
}

fn check_size(img: &Image) -> Result<(), FeatureError> {
    let valid = img.valid_count();
    if img.width() < 32 || img.height() < 32 || valid < 32 * 32 {
        return Err(FeatureError::TooSmall { width: img.width(), height: img.height(), valid });
    }
    Ok(())
}

/// Plain detector on the identity view, using the thresholds of `cfg`.
pub fn detect_sift(img: &Image, cfg: &AsiftConfig) -> Result<Vec<Feature>, FeatureError> {
    check_size(img)?;
    let params = sift::SiftParams::new(cfg.peak_threshold as f32, cfg.edge_threshold as f32);
    Ok(sift::detect(&FloatImage::from_image(img), img.mask(), &params, ViewId::ORIGINAL))
}
