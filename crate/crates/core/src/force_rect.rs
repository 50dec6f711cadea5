//! Force-based radial rectification.
//!
//! The four sensor forces give the total normal load and two tilt angles.
//! The tilt defines a contact plane through the principal point, whose depth
//! deviation turns into a per-pixel load. Each deformed pixel at radius `r′`
//! from the principal point belongs at `r = r′·(1 − υ/(E·A)·F(x, y))`.

use crate::geometry::{CameraIntrinsics, ForceSample, GeometryError, MaterialParams};
use crate::image::{Image, Interpolation};
use crate::prelude::*;
use crate::warp::warp_inverse;
use nalgebra::Vector3;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForceRectError {
    #[error("tilt arcsine argument {argument} on the {axis} axis is outside [-1, 1]")]
    TiltOutOfDomain { axis: char, argument: f64 },
    #[error("tilt normal z component {0} is below 0.1 (grazing contact)")]
    GrazingTilt(f64),
    #[error("image is {image:?} but load field is {field:?}")]
    DimensionMismatch { image: (usize, usize), field: (usize, usize) },
    #[error("load {max_load} N folds the radial correction over (limit {limit} N)")]
    FoldOver { max_load: f64, limit: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Total load and orientation of the scanner for one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltState {
    pub total_force: f64,
    pub theta_x: f64,
    pub theta_y: f64,
    /// Unit normal of the tilted contact plane.
    pub normal: Vector3<f64>,
}

impl TiltState {
    pub fn new(total_force: f64, theta_x: f64, theta_y: f64) -> Self {
        Self { total_force, theta_x, theta_y, normal: tilt_normal(theta_x, theta_y) }
    }

    pub fn from_sample(fs: &ForceSample, mp: &MaterialParams) -> Result<Self, ForceRectError> {
        fs.validate()?;
        let (tx, ty) = tilt_angles(fs, mp)?;
        Ok(Self::new(total_force(fs), tx, ty))
    }

    /// Per-pixel load over a `width`×`height` frame.
    pub fn load_field(
        &self,
        width: usize,
        height: usize,
        mp: &MaterialParams,
        intrinsics: &CameraIntrinsics,
    ) -> Result<LoadField, ForceRectError> {
        let depth = depth_deviation_field(&self.normal, width, height, intrinsics)?;
        Ok(load_field(self.total_force, &depth, width, height, mp.hooke_constant))
    }
}

pub fn total_force(fs: &ForceSample) -> f64 {
    fs.f1 + fs.f2 + fs.f3 + fs.f4
}

/// `θx = asin((F2−F1)/(2κSx))`, `θy = asin((F4−F3)/(2κSy))`.
pub fn tilt_angles(fs: &ForceSample, mp: &MaterialParams) -> Result<(f64, f64), ForceRectError> {
    let ax = (fs.f2 - fs.f1) / (2.0 * mp.hooke_constant * mp.sensor_sep_x);
    let ay = (fs.f4 - fs.f3) / (2.0 * mp.hooke_constant * mp.sensor_sep_y);
    for (axis, argument) in [('x', ax), ('y', ay)] {
        if !(-1.0..=1.0).contains(&argument) {
            return Err(ForceRectError::TiltOutOfDomain { axis, argument });
        }
    }
    Ok((ax.asin(), ay.asin()))
}

/// `Rx(θx)·Ry(θy)·e3`.
pub fn tilt_normal(theta_x: f64, theta_y: f64) -> Vector3<f64> {
    let (sx, cx) = theta_x.sin_cos();
    let (sy, cy) = theta_y.sin_cos();
    Vector3::new(sy, -sx * cy, cx * cy).normalize()
}

/// Depth of the tilted contact plane below each pixel, mm:
/// `𝒵 = −(ux·X + uy·Y)/uz` with `(X, Y)` in mm from the principal point.
pub fn depth_deviation_field(
    u: &Vector3<f64>,
    width: usize,
    height: usize,
    intrinsics: &CameraIntrinsics,
) -> Result<Vec<f64>, ForceRectError> {
    if u.z < 0.1 {
        return Err(ForceRectError::GrazingTilt(u.z));
    }
    let gx = -u.x / u.z * intrinsics.pixel_pitch;
    let gy = -u.y / u.z * intrinsics.pixel_pitch;
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        let row = gy * (y as f64 - intrinsics.cy);
        for x in 0..width {
            out.push(gx * (x as f64 - intrinsics.cx) + row);
        }
    }
    Ok(out)
}

/// Effective contact load per pixel, newtons.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadField {
    width: usize,
    height: usize,
    load: Vec<f64>,
}

impl LoadField {
    pub fn uniform(width: usize, height: usize, load: f64) -> Self {
        Self { width, height, load: vec![load.max(0.0); width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.load
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.load[y * self.width + x]
    }

    pub fn max(&self) -> f64 {
        self.load.iter().copied().fold(0.0, f64::max)
    }

    /// Bilinear lookup, clamped to the field's extent.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = self.at(x0, y0) * (1.0 - fx) + self.at(x1, y0) * fx;
        let bottom = self.at(x0, y1) * (1.0 - fx) + self.at(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

/// `F(x, y) = max(0, Fz + κ·𝒵(x, y))`.
pub fn load_field(fz: f64, depth_dev: &[f64], width: usize, height: usize, kappa: f64) -> LoadField {
    assert_eq!(depth_dev.len(), width * height, "depth field does not match dimensions");
    LoadField { width, height, load: depth_dev.iter().map(|z| (fz + kappa * z).max(0.0)).collect() }
}

/// `ε = −(υ/E)·σ_Z`.
pub fn lateral_strain(sigma_z: f64, mp: &MaterialParams) -> f64 {
    -mp.poisson_ratio / mp.youngs_modulus * sigma_z
}

/// Radial correction factor `1 − υ/(E·A)·load`.
#[inline]
pub fn radial_scale(load: f64, mp: &MaterialParams) -> f64 {
    1.0 - mp.stretch_coefficient() * load
}

/// The radial map between deformed and rectified pixel positions for one
/// load field. Both directions are exact inverses up to solver tolerance.
#[derive(Debug, Clone, Copy)]
pub struct RadialWarp<'a> {
    field: &'a LoadField,
    coeff: f64,
    cx: f64,
    cy: f64,
}

impl<'a> RadialWarp<'a> {
    pub fn new(field: &'a LoadField, mp: &MaterialParams, intrinsics: &CameraIntrinsics) -> Result<Self, ForceRectError> {
        let coeff = mp.stretch_coefficient();
        let max_load = field.max();
        if 1.0 - coeff * max_load <= 0.0 {
            return Err(ForceRectError::FoldOver { max_load, limit: 1.0 / coeff });
        }
        Ok(Self { field, coeff, cx: intrinsics.cx, cy: intrinsics.cy })
    }

    #[inline]
    pub fn scale_at(&self, x: f64, y: f64) -> f64 {
        1.0 - self.coeff * self.field.sample(x, y)
    }

    /// Where the deformed pixel `(x, y)` belongs in the unloaded image.
    #[inline]
    pub fn rectified_position(&self, x: f64, y: f64) -> (f64, f64) {
        let s = self.scale_at(x, y);
        (self.cx + (x - self.cx) * s, self.cy + (y - self.cy) * s)
    }

    /// Deformed pixel that lands on the unloaded position `(x, y)`: solves
    /// `ρ·s(c + ρ·d) = r` along the ray from the principal point.
    pub fn deformed_position(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        const TOL: f64 = 1e-9;
        let dx = x - self.cx;
        let dy = y - self.cy;
        let r = (dx * dx + dy * dy).sqrt();
        if r < 1e-12 {
            return Some((x, y));
        }
        let (ux, uy) = (dx / r, dy / r);
        let g = |rho: f64| rho * self.scale_at(self.cx + rho * ux, self.cy + rho * uy) - r;
        let mut rho = r / self.scale_at(x, y);
        let mut converged = false;
        for _ in 0..50 {
            let s = self.scale_at(self.cx + rho * ux, self.cy + rho * uy);
            if s <= 0.0 {
                break;
            }
            let next = r / s;
            if (next - rho).abs() < TOL {
                rho = next;
                converged = true;
                break;
            }
            rho = next;
        }
        if !converged {
            // g(0) = -r < 0; expand until the bracket closes, then bisect.
            let mut hi = r.max(1.0);
            let mut grow = 0;
            while g(hi) < 0.0 {
                hi *= 2.0;
                grow += 1;
                if grow > 60 {
                    return None;
                }
            }
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if g(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo < TOL {
                    break;
                }
            }
            rho = 0.5 * (lo + hi);
        }
        Some((self.cx + rho * ux, self.cy + rho * uy))
    }
}

/// Undoes the contact deformation of `img`. The mask follows the warp and
/// output pixels whose source falls outside the frame become invalid.
pub fn rectify_image(
    img: &Image,
    lf: &LoadField,
    mp: &MaterialParams,
    intrinsics: &CameraIntrinsics,
) -> Result<Image, ForceRectError> {
    rectify_image_with(img, lf, mp, intrinsics, Interpolation::Bilinear)
}

pub fn rectify_image_with(
    img: &Image,
    lf: &LoadField,
    mp: &MaterialParams,
    intrinsics: &CameraIntrinsics,
    interp: Interpolation,
) -> Result<Image, ForceRectError> {
    if (img.width(), img.height()) != (lf.width, lf.height) {
        return Err(ForceRectError::DimensionMismatch {
            image: (img.width(), img.height()),
            field: (lf.width, lf.height),
        });
    }
    let warp = RadialWarp::new(lf, mp, intrinsics)?;
    if lf.max() == 0.0 {
        return Ok(img.clone());
    }
    Ok(warp_inverse(img, img.width(), img.height(), interp, |x, y| warp.deformed_position(x, y)))
}

/// Force sample to rectified frame in one call.
pub fn rectify_frame(
    img: &Image,
    fs: &ForceSample,
    mp: &MaterialParams,
    intrinsics: &CameraIntrinsics,
) -> Result<Image, ForceRectError> {
    let state = TiltState::from_sample(fs, mp)?;
    let lf = state.load_field(img.width(), img.height(), mp, intrinsics)?;
    rectify_image(img, &lf, mp, intrinsics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 0.125).unwrap()
    }

    fn sample(f1: f64, f2: f64, f3: f64, f4: f64) -> ForceSample {
        ForceSample::new(0, f1, f2, f3, f4).unwrap()
    }

    #[test]
    fn total_force_sums() {
        assert_eq!(total_force(&sample(1.0, 2.0, 3.0, 4.0)), 10.0);
        assert_eq!(total_force(&sample(5.0, 5.0, 5.0, 5.0)), 20.0);
        assert_eq!(total_force(&sample(0.0, 0.0, 0.0, 0.0)), 0.0);
    }

    #[test]
    fn tilt_angle_closed_form() {
        let mp = MaterialParams::phantom();
        assert_eq!(tilt_angles(&sample(3.0, 3.0, 3.0, 3.0), &mp).unwrap(), (0.0, 0.0));
        let (tx, ty) = tilt_angles(&sample(0.0, 190.8, 0.0, 0.0), &mp).unwrap();
        // asin(0.1) in degrees, evaluated independently.
        assert!((tx.to_degrees() - 5.739_170_477_266_787).abs() < 1e-9);
        assert_eq!(ty, 0.0);
        assert!(matches!(
            tilt_angles(&sample(0.0, 2000.0, 0.0, 0.0), &mp),
            Err(ForceRectError::TiltOutOfDomain { axis: 'x', .. })
        ));
    }

    #[test]
    fn tilt_normal_examples() {
        assert_eq!(tilt_normal(0.0, 0.0), Vector3::new(0.0, 0.0, 1.0));
        let a = tilt_normal(30f64.to_radians(), 0.0);
        assert!((a - Vector3::new(0.0, -0.5, 0.75f64.sqrt())).norm() < 1e-12);
        let b = tilt_normal(0.0, 30f64.to_radians());
        assert!((b - Vector3::new(0.5, 0.0, 0.75f64.sqrt())).norm() < 1e-12);
    }

    #[test]
    fn depth_field_plane() {
        // Pitch 1 mm/px so pixel offsets are millimetres.
        let c = CameraIntrinsics::new(100.0, 100.0, 10.0, 10.0, 1.0).unwrap();
        let u = tilt_normal(30f64.to_radians(), 0.0);
        let z = depth_deviation_field(&u, 21, 21, &c).unwrap();
        assert!((z[20 * 21 + 10] - 5.773_502_691_896_258).abs() < 1e-12);
        for i in 0..z.len() {
            assert!((z[i] + z[z.len() - 1 - i]).abs() < 1e-12);
        }
        let flat = depth_deviation_field(&Vector3::z(), 21, 21, &c).unwrap();
        assert!(flat.iter().all(|v| *v == 0.0));
        assert!(matches!(
            depth_deviation_field(&tilt_normal(1.5, 0.0), 4, 4, &c),
            Err(ForceRectError::GrazingTilt(_))
        ));
    }

    #[test]
    fn load_field_examples() {
        let lf = load_field(10.0, &[0.0, 0.5, -1.0], 3, 1, 18.0);
        assert_eq!(lf.values(), &[10.0, 19.0, 0.0]);
    }

    #[test]
    fn radial_scale_examples() {
        let mp = MaterialParams::phantom();
        let r = 100.0 * radial_scale(10.0, &mp);
        assert!((r - 93.530_020_703_933_75).abs() < 1e-9);
        let eps = lateral_strain(10.0 / 0.0048, &mp);
        assert!((eps + 0.064_699_792_960_662_5).abs() < 1e-12);
        assert_eq!(lateral_strain(0.0, &mp), 0.0);
    }

    #[test]
    fn zero_load_is_identity() {
        let img = Image::from_fn(64, 48, |x, y| ((x * 13 + y * 29) % 256) as u8);
        let c = CameraIntrinsics::centered(64, 48, 50.0, 0.5);
        let lf = LoadField::uniform(64, 48, 0.0);
        for interp in [Interpolation::Nearest, Interpolation::Bilinear] {
            let out = rectify_image_with(&img, &lf, &MaterialParams::phantom(), &c, interp).unwrap();
            assert_eq!(out, img);
        }
    }

    #[test]
    fn severe_double_tilt_folds_over() {
        let mp = MaterialParams::phantom();
        let state = TiltState::new(15.0, 10f64.to_radians(), 10f64.to_radians());
        let lf = state.load_field(640, 480, &mp, &intr()).unwrap();
        let img = Image::filled(640, 480, 100);
        assert!(matches!(rectify_image(&img, &lf, &mp, &intr()), Err(ForceRectError::FoldOver { .. })));
        assert!(rectify_image(&Image::filled(10, 10, 0), &lf, &mp, &intr()).is_err());
    }

    #[test]
    fn uniform_scale_matches_strain() {
        let mp = MaterialParams::phantom();
        for f in [0.0, 2.0, 7.5, 15.0, 20.0] {
            let lf = LoadField::uniform(64, 48, f);
            let w = RadialWarp::new(&lf, &mp, &intr()).unwrap();
            let want = 1.0 + lateral_strain(f / mp.scanner_area, &mp);
            assert!((w.scale_at(10.0, 20.0) - want).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn swapping_sensors_negates_tilt(f1 in 0.0f64..20.0, f2 in 0.0f64..20.0, f3 in 0.0f64..20.0, f4 in 0.0f64..20.0) {
            let mp = MaterialParams::phantom();
            let (tx, ty) = tilt_angles(&sample(f1, f2, f3, f4), &mp).unwrap();
            let (sx, sy) = tilt_angles(&sample(f2, f1, f4, f3), &mp).unwrap();
            prop_assert_eq!(sx, -tx);
            prop_assert_eq!(sy, -ty);
        }

        #[test]
        fn tilt_normal_is_unit(tx in -1.5f64..1.5, ty in -1.5f64..1.5) {
            prop_assert!((tilt_normal(tx, ty).norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn radial_map_round_trips(
            fz in 0.0f64..20.0, tx in -0.004f64..0.004, ty in -0.004f64..0.004,
            x in 0.0f64..639.0, y in 0.0f64..479.0,
        ) {
            let mp = MaterialParams::phantom();
            let lf = TiltState::new(fz, tx, ty).load_field(640, 480, &mp, &intr()).unwrap();
            let w = RadialWarp::new(&lf, &mp, &intr()).unwrap();
            let (px, py) = w.rectified_position(x, y);
            let (qx, qy) = w.deformed_position(px, py).unwrap();
            prop_assert!((qx - x).abs() < 1e-6 && (qy - y).abs() < 1e-6);
        }

        #[test]
        fn uniform_radius_is_monotone(f in 0.0f64..100.0, r1 in 0.0f64..300.0, dr in 0.01f64..50.0) {
            let mp = MaterialParams::phantom();
            let lf = LoadField::uniform(640, 480, f);
            let w = RadialWarp::new(&lf, &mp, &intr()).unwrap();
            let a = w.rectified_position(320.0 + r1, 240.0).0 - 320.0;
            let b = w.rectified_position(320.0 + r1 + dr, 240.0).0 - 320.0;
            prop_assert!(b > a);
            prop_assert_eq!(w.rectified_position(320.0, 240.0), (320.0, 240.0));
        }
    }
}
