//! Relative pose with the planar fallback: the epipolar model cannot pin
//! down motion over a flat surface, so a homography that explains nearly
//! all epipolar inliers takes over.

use super::homography::{decompose_homography, ransac_homography};
use super::recover::recover_pose;
use super::{ransac_fundamental, Correspondence, PoseError, RansacParams};
use crate::geometry::{CameraIntrinsics, Pose};
use crate::prelude::*;

/// Share of epipolar inliers a homography must explain to be preferred.
const PLANAR_SHARE: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoseMethod {
    Homography,
    Essential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelativePose {
    pub pose: Pose,
    pub method: PoseMethod,
    /// Indices into the input correspondences.
    pub inliers: Vec<usize>,
}

pub fn estimate_relative_pose(
    corrs: &[Correspondence],
    intrinsics: &CameraIntrinsics,
    params: &RansacParams,
) -> Result<RelativePose, PoseError> {
    intrinsics.validate()?;
    let hom = ransac_homography(corrs, params);
    let fun = if corrs.len() >= 8 { ransac_fundamental(corrs, intrinsics, params).ok() } else { None };
    let from_h = |h: super::RansacOutcome<super::Homography>| -> Result<RelativePose, PoseError> {
        Ok(RelativePose { pose: decompose_homography(&h.model, intrinsics)?, method: PoseMethod::Homography, inliers: h.inliers })
    };
    match (hom, fun) {
        (Err(e), None) => Err(e),
        (Ok(h), None) => from_h(h),
        (hom, Some(f)) => {
            if let Ok(h) = &hom {
                let explained = f.inlier_indices.iter().filter(|&&i| h.model.transfer_error(&corrs[i]) <= params.threshold).count();
                if explained as f64 >= PLANAR_SHARE * f.inlier_indices.len() as f64 {
                    return from_h(hom.expect("checked"));
                }
            }
            let support: Vec<Correspondence> = f.inlier_indices.iter().map(|&i| corrs[i]).collect();
            let pose = recover_pose(&f.model, intrinsics, &support)?;
            Ok(RelativePose { pose, method: PoseMethod::Essential, inliers: f.inlier_indices })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::testutil::{plane_correspondences, scene_correspondences};
    use nalgebra::Vector3;

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::centered(640, 480, 500.0, 0.125)
    }

    #[test]
    fn planar_scene_uses_homography() {
        let truth = Pose::from_euler_xyz(0.002, -0.001, 0.15, Vector3::new(3.0, 1.0, 0.2));
        let corrs = plane_correspondences(&truth, &intr(), 120, 8);
        let est = estimate_relative_pose(&corrs, &intr(), &RansacParams::default()).unwrap();
        assert_eq!(est.method, PoseMethod::Homography);
        assert_eq!(est.inliers.len(), 120);
        assert!((est.pose.translation() - truth.translation()).norm() < 1e-6);
    }

    #[test]
    fn general_scene_uses_essential() {
        let truth = Pose::from_euler_xyz(0.05, -0.02, 0.1, Vector3::new(6.0, 2.0, 1.0));
        let corrs = scene_correspondences(&truth, &intr(), 100, 8);
        let est = estimate_relative_pose(&corrs, &intr(), &RansacParams::default()).unwrap();
        assert_eq!(est.method, PoseMethod::Essential);
        assert!(est.pose.rotation_angle_to(&truth).to_degrees() < 0.1);
    }

    #[test]
    fn few_points_use_homography_only() {
        let truth = Pose::from_translation(Vector3::new(1.0, 1.0, 0.0));
        let corrs = plane_correspondences(&truth, &intr(), 6, 2);
        let est = estimate_relative_pose(&corrs, &intr(), &RansacParams::default()).unwrap();
        assert_eq!(est.method, PoseMethod::Homography);
        assert!(matches!(
            estimate_relative_pose(&corrs[..3], &intr(), &RansacParams::default()),
            Err(PoseError::TooFewCorrespondences { needed: 4, got: 3 })
        ));
    }
}
