//! Material constants from calibration captures: Hooke's constant from
//! sensor forces at known tilts, Young's modulus from the radial stretch
//! of matched features under a known normal load.

use crate::features::{detect_sift, match_features, AsiftConfig};
use crate::force_rect::{tilt_angles, total_force, ForceRectError};
use crate::geometry::{CameraIntrinsics, ForceSample, MaterialParams};
use crate::image::Image;
use crate::pose::{ransac, RansacParams};
use crate::prelude::*;
use nalgebra::Vector2;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("no sample has a reference tilt above {min_deg} degrees")]
    InsufficientExcitation { min_deg: f64 },
    #[error("sensor separation must be positive, got {0}")]
    InvalidSeparation(f64),
    #[error("frame {frame_id} is tilted by {angle_deg:.3} degrees; at most {limit_deg} allowed")]
    TiltedCapture { frame_id: u32, angle_deg: f64, limit_deg: f64 },
    #[error("no pair carries a normal load")]
    ZeroLoad,
    #[error("only {0} consistent feature matches")]
    NoMatches(usize),
    #[error("fitted lateral strain {0:e} does not describe a compression")]
    NonPhysicalStrain(f64),
    #[error(transparent)]
    Force(#[from] ForceRectError),
}

/// Samples below this reference tilt carry no information about κ.
pub const MIN_EXCITATION_DEG: f64 = 1.0;
/// Loaded captures tilted more than this are rejected.
pub const MAX_CAPTURE_TILT_DEG: f64 = 2.0;
/// Fewest consistent matches accepted over all pairs.
const MIN_MATCHES: usize = 8;

/// Least-squares κ (N/mm) from `(sample, θx)` pairs: each sample gives
/// `F2 − F1 = κ·2·Sx·sin θx`.
pub fn calibrate_hooke(samples: &[(ForceSample, f64)], sx: f64) -> Result<f64, CalibrationError> {
    if !(sx > 0.0 && sx.is_finite()) {
        return Err(CalibrationError::InvalidSeparation(sx));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (fs, theta) in samples {
        if theta.abs() <= MIN_EXCITATION_DEG.to_radians() {
            continue;
        }
        let a = 2.0 * sx * theta.sin();
        num += (fs.f2 - fs.f1) * a;
        den += a * a;
    }
    if den == 0.0 {
        return Err(CalibrationError::InsufficientExcitation { min_deg: MIN_EXCITATION_DEG });
    }
    Ok(num / den)
}

/// Unloaded and loaded captures of the same surface patch.
#[derive(Debug, Clone, Copy)]
pub struct YoungsPair<'a> {
    pub unloaded: &'a Image,
    pub loaded: &'a Image,
    pub force: ForceSample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct YoungsFit {
    /// Pascals.
    pub youngs_modulus: f64,
    /// Lateral strain at unit `υ·F/A`, i.e. `−1/E`.
    pub strain_per_stress: f64,
    /// Matches used in the final fit.
    pub matches: usize,
    /// RMS of the final fit residuals, pixels.
    pub rms_px: f64,
}

/// Young's modulus from feature stretch. `mp` supplies υ, A and κ (for
/// the tilt check); its E is ignored.
pub fn calibrate_youngs(
    pairs: &[YoungsPair<'_>],
    mp: &MaterialParams,
    intrinsics: &CameraIntrinsics,
) -> Result<f64, CalibrationError> {
    calibrate_youngs_fit(pairs, mp, intrinsics, 0).map(|f| f.youngs_modulus)
}

/// Per-pair data after mismatch rejection: centred loaded positions and
/// centred displacements, plus the stress factor `υ·F/A`.
struct PairData {
    q: Vec<Vector2<f64>>,
    d: Vec<Vector2<f64>>,
    x: f64,
}

pub fn calibrate_youngs_fit(
    pairs: &[YoungsPair<'_>],
    mp: &MaterialParams,
    intrinsics: &CameraIntrinsics,
    seed: u64,
) -> Result<YoungsFit, CalibrationError> {
    let cfg = AsiftConfig::plain();
    let centre = intrinsics.principal_point();
    let mut data = Vec::new();
    let mut any_load = false;
    for (k, pair) in pairs.iter().enumerate() {
        let (tx, ty) = tilt_angles(&pair.force, mp)?;
        let tilt = tx.abs().max(ty.abs()).to_degrees();
        if tilt > MAX_CAPTURE_TILT_DEG {
            return Err(CalibrationError::TiltedCapture {
                frame_id: pair.force.frame_id,
                angle_deg: tilt,
                limit_deg: MAX_CAPTURE_TILT_DEG,
            });
        }
        let fz = total_force(&pair.force);
        if fz <= 0.0 {
            continue;
        }
        any_load = true;
        let (Ok(fa), Ok(fb)) = (detect_sift(pair.unloaded, &cfg), detect_sift(pair.loaded, &cfg)) else { continue };
        // (unloaded p, loaded q) relative to the principal point.
        let pts: Vec<(Vector2<f64>, Vector2<f64>)> = match_features(&fa, &fb)
            .iter()
            .map(|m| {
                let (a, b) = (&fa[m.query], &fb[m.train]);
                (Vector2::new(a.x, a.y) - centre, Vector2::new(b.x, b.y) - centre)
            })
            .collect();
        // Scale-and-shift model p = s·q + b rejects mismatches.
        let params = RansacParams { seed: seed.wrapping_add(k as u64), ..Default::default() };
        let Some(fit) = ransac(&pts, 2, &params, fit_scale_shift, |m, (p, q)| (p - (q * m.0 + m.1)).norm()) else {
            continue;
        };
        let inl: Vec<_> = fit.inliers.iter().map(|&i| pts[i]).collect();
        if inl.len() < 2 {
            continue;
        }
        let n = inl.len() as f64;
        let qm = inl.iter().fold(Vector2::zeros(), |a, (_, q)| a + q) / n;
        let dm = inl.iter().fold(Vector2::zeros(), |a, (p, q)| a + (p - q)) / n;
        data.push(PairData {
            q: inl.iter().map(|(_, q)| q - qm).collect(),
            d: inl.iter().map(|(p, q)| (p - q) - dm).collect(),
            x: mp.poisson_ratio * fz / mp.scanner_area,
        });
    }
    if !any_load {
        return Err(CalibrationError::ZeroLoad);
    }
    let total: usize = data.iter().map(|p| p.q.len()).sum();
    if total < MIN_MATCHES {
        return Err(CalibrationError::NoMatches(total));
    }
    // Joint least squares over every match: d = ε·q with ε = −k·x per pair.
    let solve = |keep: &dyn Fn(usize, usize) -> bool| {
        let (mut num, mut den) = (0.0, 0.0);
        for (i, p) in data.iter().enumerate() {
            for (j, (q, d)) in p.q.iter().zip(&p.d).enumerate() {
                if keep(i, j) {
                    num += p.x * q.dot(d);
                    den += p.x * p.x * q.norm_squared();
                }
            }
        }
        if den > 0.0 { -num / den } else { 0.0 }
    };
    let residual = |k: f64, i: usize, j: usize| (data[i].d[j] + data[i].q[j] * (k * data[i].x)).norm();
    let k0 = solve(&|_, _| true);
    let rms0 = rms(&data, |i, j| residual(k0, i, j), |_, _| true);
    // One refit without residuals beyond three standard deviations.
    let keep = |i: usize, j: usize| residual(k0, i, j) <= 3.0 * rms0;
    let k = solve(&keep);
    let used: usize = data.iter().enumerate().map(|(i, p)| (0..p.q.len()).filter(|&j| keep(i, j)).count()).sum();
    if used < MIN_MATCHES {
        return Err(CalibrationError::NoMatches(used));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(CalibrationError::NonPhysicalStrain(-k));
    }
    Ok(YoungsFit {
        youngs_modulus: 1.0 / k,
        strain_per_stress: -k,
        matches: used,
        rms_px: rms(&data, |i, j| residual(k, i, j), keep),
    })
}

fn rms(data: &[PairData], r: impl Fn(usize, usize) -> f64, keep: impl Fn(usize, usize) -> bool) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for (i, p) in data.iter().enumerate() {
        for j in 0..p.q.len() {
            if keep(i, j) {
                s += r(i, j).powi(2);
                n += 1;
            }
        }
    }
    if n == 0 { 0.0 } else { (s / n as f64).sqrt() }
}

/// Least-squares `p = s·q + b` over `(p, q)` pairs.
fn fit_scale_shift(pts: &[(Vector2<f64>, Vector2<f64>)]) -> Option<(f64, Vector2<f64>)> {
    let n = pts.len() as f64;
    let pm = pts.iter().fold(Vector2::zeros(), |a, (p, _)| a + p) / n;
    let qm = pts.iter().fold(Vector2::zeros(), |a, (_, q)| a + q) / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (p, q) in pts {
        num += (q - qm).dot(&(p - pm));
        den += (q - qm).norm_squared();
    }
    if den < 1e-9 {
        return None;
    }
    let s = num / den;
    Some((s, pm - qm * s))
}

/// Pairs for auto-calibration from the start of a scan: frame 1 is
/// unloaded and the next `k − 1` frames press straight down at the same
/// spot.
pub fn touchdown_pairs<'a>(frames: &'a [Image], forces: &[ForceSample], k: usize) -> Vec<YoungsPair<'a>> {
    let n = k.min(frames.len()).min(forces.len());
    (1..n).map(|i| YoungsPair { unloaded: &frames[0], loaded: &frames[i], force: forces[i] }).collect()
}
