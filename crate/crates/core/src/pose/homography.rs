//! Plane homography between reference and frame, and its decomposition
//! into a relative pose for the known contact plane.

use super::fundamental::{apply, hartley};
use super::ransac::{ransac, RansacParams};
use super::{Correspondence, PoseError};
use crate::geometry::{nearest_rotation, CameraIntrinsics, Pose};
use crate::prelude::*;
use nalgebra::{DMatrix, Matrix3, Vector2};

/// Pixel homography with `x2 ∝ H·x1`, unit Frobenius norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(pub Matrix3<f64>);

impl Homography {
    pub fn transfer(&self, p: &Vector2<f64>) -> Option<Vector2<f64>> {
        let q = self.0 * p.push(1.0);
        (q.z.abs() > 1e-12).then(|| Vector2::new(q.x / q.z, q.y / q.z))
    }

    /// Distance in the frame between `x2` and the transferred `x1`.
    pub fn transfer_error(&self, c: &Correspondence) -> f64 {
        self.transfer(&c.x1).map_or(f64::INFINITY, |p| (p - c.x2).norm())
    }
}

/// Normalised DLT over four or more correspondences.
pub fn fit_homography(corrs: &[Correspondence]) -> Result<Homography, PoseError> {
    if corrs.len() < 4 {
        return Err(PoseError::TooFewCorrespondences { needed: 4, got: corrs.len() });
    }
    let p1: Vec<Vector2<f64>> = corrs.iter().map(|c| c.x1).collect();
    let p2: Vec<Vector2<f64>> = corrs.iter().map(|c| c.x2).collect();
    let t1 = hartley(&p1).ok_or(PoseError::Degenerate)?;
    let t2 = hartley(&p2).ok_or(PoseError::Degenerate)?;
    let rows = (2 * corrs.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (u, v)) in p1.iter().zip(&p2).enumerate() {
        let p = apply(&t1, u);
        let q = apply(&t2, v);
        let r0 = [-p.x, -p.y, -1.0, 0.0, 0.0, 0.0, q.x * p.x, q.x * p.y, q.x];
        let r1 = [0.0, 0.0, 0.0, -p.x, -p.y, -1.0, q.y * p.x, q.y * p.y, q.y];
        for j in 0..9 {
            a[(2 * i, j)] = r0[j];
            a[(2 * i + 1, j)] = r1[j];
        }
    }
    let svd = a.svd(false, true);
    let vt = svd.v_t.ok_or(PoseError::Degenerate)?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
    if sv[order[7]] < 1e-8 * sv[order[0]] {
        return Err(PoseError::Degenerate);
    }
    let h = vt.row(order[8]);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let t2_inv = t2.try_inverse().ok_or(PoseError::Degenerate)?;
    let full = t2_inv * hn * t1;
    let n = full.norm();
    if !(n > 0.0 && n.is_finite()) || (full / n).determinant().abs() < 1e-15 {
        return Err(PoseError::Degenerate);
    }
    Ok(Homography(full / n))
}

pub fn ransac_homography(
    corrs: &[Correspondence],
    params: &RansacParams,
) -> Result<super::RansacOutcome<Homography>, PoseError> {
    if corrs.len() < 4 {
        return Err(PoseError::TooFewCorrespondences { needed: 4, got: corrs.len() });
    }
    let out = ransac(corrs, 4, params, |s| fit_homography(s).ok(), |h, c| h.transfer_error(c))
        .ok_or(PoseError::InsufficientInliers { found: 0, needed: 4 })?;
    if out.inliers.len() < 4 {
        return Err(PoseError::InsufficientInliers { found: out.inliers.len(), needed: 4 });
    }
    Ok(out)
}

/// Pose whose plane-induced homography is `h`. In normalised coordinates
/// that homography is proportional to `R + T·e₃ᵀ/D`.
pub fn decompose_homography(h: &Homography, intrinsics: &CameraIntrinsics) -> Result<Pose, PoseError> {
    intrinsics.validate()?;
    let d = intrinsics.plane_depth();
    let hn = intrinsics.inverse_matrix() * h.0 * intrinsics.matrix();
    let (h1, h2, h3) = (hn.column(0).into_owned(), hn.column(1).into_owned(), hn.column(2).into_owned());
    let mut lambda = 0.5 * (h1.norm() + h2.norm());
    if !(lambda > 1e-12) {
        return Err(PoseError::SingularHomography);
    }
    // The plane must lie in front of the frame camera.
    if h3.z < 0.0 {
        lambda = -lambda;
    }
    let r1 = h1 / lambda;
    let r2 = h2 / lambda;
    let approx = Matrix3::from_columns(&[r1, r2, r1.cross(&r2)]);
    let r = nearest_rotation(&approx);
    let t = (h3 / lambda - r.column(2)) * d;
    Ok(Pose::new(r, t)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::testutil::plane_correspondences;
    use nalgebra::Vector3;

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::centered(640, 480, 500.0, 0.125)
    }

    #[test]
    fn exact_plane_fit_and_decomposition() {
        let pose = Pose::from_euler_xyz(0.004, -0.003, 0.3, Vector3::new(2.5, -1.5, 0.8));
        let corrs = plane_correspondences(&pose, &intr(), 40, 4);
        let h = fit_homography(&corrs).unwrap();
        assert!(corrs.iter().all(|c| h.transfer_error(c) < 1e-8));
        let est = decompose_homography(&h, &intr()).unwrap();
        assert!(est.rotation_angle_to(&pose) < 1e-9);
        assert!((est.translation() - pose.translation()).norm() < 1e-8);
    }

    #[test]
    fn decomposition_survives_negated_scale() {
        let pose = Pose::from_euler_xyz(0.0, 0.0, -0.5, Vector3::new(-3.0, 4.0, -1.0));
        let corrs = plane_correspondences(&pose, &intr(), 10, 5);
        let mut h = fit_homography(&corrs).unwrap();
        h.0 = -h.0;
        let est = decompose_homography(&h, &intr()).unwrap();
        assert!((est.translation() - pose.translation()).norm() < 1e-8);
    }

    #[test]
    fn three_collinear_of_four_is_degenerate() {
        let corrs = [
            Correspondence::new(0.0, 0.0, 1.0, 1.0),
            Correspondence::new(1.0, 1.0, 2.0, 2.0),
            Correspondence::new(2.0, 2.0, 3.0, 3.0),
            Correspondence::new(3.0, 3.0, 4.0, 4.0),
        ];
        assert!(matches!(fit_homography(&corrs), Err(PoseError::Degenerate)));
    }

    #[test]
    fn ransac_rejects_gross_outliers() {
        let pose = Pose::from_translation(Vector3::new(3.0, 2.0, 0.0));
        let mut corrs = plane_correspondences(&pose, &intr(), 50, 6);
        for c in corrs.iter_mut().step_by(4) {
            c.x2.x += 40.0;
        }
        let out = ransac_homography(&corrs, &RansacParams { seed: 1, ..Default::default() }).unwrap();
        assert_eq!(out.inliers.len(), 37);
        assert!(out.inliers.iter().all(|i| i % 4 != 0));
    }
}
