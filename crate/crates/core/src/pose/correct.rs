//! Pose correction and reprojection of a frame onto the reference plane.

use super::PoseError;
use crate::geometry::{CameraIntrinsics, Pose};
use crate::image::{Image, Interpolation};
#[allow(unused_imports)]
use crate::prelude::*;
use crate::warp::warp_homography;
use nalgebra::{Matrix3, Vector3};

/// Drops tilt, yaw and depth change: `R′ = I`, `T′ = (tx, ty, 0)`.
pub fn correct_pose(p: &Pose) -> Pose {
    let t = p.translation();
    Pose::from_translation(Vector3::new(t.x, t.y, 0.0))
}

/// Maps contact-plane coordinates `(X, Y, 1)` (mm, reference camera axes)
/// to frame-camera coordinates: `[r₁ | r₂ | D·r₃ + T]`.
pub fn plane_matrix(p: &Pose, plane_depth: f64) -> Matrix3<f64> {
    let r = p.rotation();
    let third = r.column(2) * plane_depth + p.translation();
    Matrix3::from_columns(&[r.column(0).into_owned(), r.column(1).into_owned(), third])
}

/// Forward homography from a frame seen at `p` to the same frame seen
/// at `p_corrected`: `C·M(p′)·M(p)⁻¹·C⁻¹`.
pub fn reprojection_homography(
    p: &Pose,
    p_corrected: &Pose,
    intrinsics: &CameraIntrinsics,
) -> Result<Matrix3<f64>, PoseError> {
    intrinsics.validate()?;
    let d = intrinsics.plane_depth();
    let m = plane_matrix(p, d);
    let m_inv = invert(&m)?;
    Ok(intrinsics.matrix() * plane_matrix(p_corrected, d) * m_inv * intrinsics.inverse_matrix())
}

fn invert(m: &Matrix3<f64>) -> Result<Matrix3<f64>, PoseError> {
    let scale = m.norm().powi(3);
    if !(m.determinant().abs() > 1e-12 * scale) {
        return Err(PoseError::SingularHomography);
    }
    m.try_inverse().ok_or(PoseError::SingularHomography)
}

/// Resamples `img`, seen at pose `p`, as it would appear at `p_corrected`.
/// Output keeps the input size; pixels without a valid source are masked.
pub fn reproject(img: &Image, p: &Pose, p_corrected: &Pose, intrinsics: &CameraIntrinsics) -> Result<Image, PoseError> {
    reproject_with(img, p, p_corrected, intrinsics, Interpolation::Bilinear)
}

pub fn reproject_with(
    img: &Image,
    p: &Pose,
    p_corrected: &Pose,
    intrinsics: &CameraIntrinsics,
    interp: Interpolation,
) -> Result<Image, PoseError> {
    let forward = reprojection_homography(p, p_corrected, intrinsics)?;
    if p == p_corrected {
        return Ok(img.clone());
    }
    let back = invert(&forward)?;
    Ok(warp_homography(img, &back, img.width(), img.height(), interp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::warp::apply_homography;

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::centered(640, 480, 500.0, 0.125)
    }

    fn texture(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |x, y| {
            let (x, y) = (x as f64, y as f64);
            (128.0 + 60.0 * (x / 9.0).sin() * (y / 13.0).cos() + 30.0 * ((x + y) / 21.0).sin()) as u8
        })
    }

    #[test]
    fn correction_examples() {
        let p = Pose::from_euler_xyz(0.1, -0.2, 0.3, Vector3::new(3.0, 4.0, 5.0));
        let c = correct_pose(&p);
        assert_eq!(*c.rotation(), Matrix3::identity());
        assert_eq!(*c.translation(), Vector3::new(3.0, 4.0, 0.0));
        assert_eq!(correct_pose(&c), c);
        assert_eq!(correct_pose(&Pose::identity()), Pose::identity());
    }

    #[test]
    fn equal_poses_reproject_to_identity() {
        let img = texture(64, 48);
        let p = Pose::from_euler_xyz(0.01, 0.0, 0.2, Vector3::new(1.0, 2.0, 0.5));
        let out = reproject_with(&img, &p, &p, &intr(), Interpolation::Nearest).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn depth_offset_is_isotropic_scaling() {
        let tz = 12.5;
        let p = Pose::from_translation(Vector3::new(0.0, 0.0, tz));
        let h = reprojection_homography(&p, &correct_pose(&p), &intr()).unwrap();
        let h = h / h[(2, 2)];
        let s = (intr().plane_depth() + tz) / intr().plane_depth();
        let want = Matrix3::new(s, 0.0, 320.0 * (1.0 - s), 0.0, s, 240.0 * (1.0 - s), 0.0, 0.0, 1.0);
        assert!((h - want).amax() < 1e-9, "{h}");
    }

    #[test]
    fn yaw_is_removed() {
        let phi = 0.2f64;
        let base = texture(640, 480);
        let p = Pose::from_euler_xyz(0.0, 0.0, phi, Vector3::zeros());
        // A camera yawed by φ sees the surface turned by -φ about the
        // principal point: frame pixel x₂ = C·Rz(φ)·C⁻¹·x₁.
        let to_frame = intr().matrix() * p.rotation() * intr().inverse_matrix();
        let frame = warp_homography(&base, &to_frame.try_inverse().unwrap(), 640, 480, Interpolation::Bilinear);
        let fixed = reproject(&frame, &p, &correct_pose(&p), &intr()).unwrap();
        let h = reprojection_homography(&p, &correct_pose(&p), &intr()).unwrap();
        let mut sq = 0.0;
        let mut n = 0;
        for y in (40..440).step_by(20) {
            for x in (80..560).step_by(20) {
                let (fx, fy) = apply_homography(&to_frame, x as f64, y as f64).unwrap();
                let (bx, by) = apply_homography(&h, fx, fy).unwrap();
                sq += (bx - x as f64).powi(2) + (by - y as f64).powi(2);
                n += 1;
            }
        }
        assert!((sq / n as f64).sqrt() < 0.5);
        let (mut diff, mut count) = (0.0, 0);
        for y in 150..330 {
            for x in 200..440 {
                if fixed.is_valid(x, y) {
                    diff += (fixed.get(x, y) as f64 - base.get(x, y) as f64).powi(2);
                    count += 1;
                }
            }
        }
        assert!(count > 40000);
        assert!((diff / count as f64).sqrt() < 4.0, "{}", (diff / count as f64).sqrt());
    }

    #[test]
    fn depth_change_is_undone() {
        // The same flat texture at two depths lands on the same pixels.
        let a = Pose::from_translation(Vector3::new(1.0, -2.0, 4.0));
        let b = Pose::from_translation(Vector3::new(1.0, -2.0, -6.0));
        let ha = reprojection_homography(&a, &correct_pose(&a), &intr()).unwrap();
        let hb = reprojection_homography(&b, &correct_pose(&b), &intr()).unwrap();
        let d = intr().plane_depth();
        for (u, v) in [(100.0, 100.0), (320.0, 240.0), (600.0, 400.0)] {
            let surface = Vector3::new((u - 320.0) / 500.0 * d, (v - 240.0) / 500.0 * d, 1.0);
            let xa = intr().matrix() * plane_matrix(&a, d) * surface;
            let xb = intr().matrix() * plane_matrix(&b, d) * surface;
            let pa = apply_homography(&ha, xa.x / xa.z, xa.y / xa.z).unwrap();
            let pb = apply_homography(&hb, xb.x / xb.z, xb.y / xb.z).unwrap();
            assert!((pa.0 - pb.0).hypot(pa.1 - pb.1) < 1e-9);
        }
    }

    #[test]
    fn singular_plane_matrix() {
        // Plane passes through the frame camera centre.
        let p = Pose::from_translation(Vector3::new(0.0, 0.0, -intr().plane_depth()));
        assert!(matches!(reprojection_homography(&p, &Pose::identity(), &intr()), Err(PoseError::SingularHomography)));
    }
}
