//! Relative pose between the reconstruction reference and a rectified
//! frame, followed by pose correction and planar reprojection.
//!
//! A relative pose maps reference-camera coordinates into frame-camera
//! coordinates, `X₂ = R·X₁ + T`, in millimetres. The contact surface is
//! the plane `Z = D` of the reference camera with `D` the intrinsics'
//! plane depth, so one reference pixel at the principal point covers one
//! `pixel_pitch` of surface. Correspondences pair a reference pixel `x1`
//! with a frame pixel `x2`.

mod correct;
mod estimate;
mod fundamental;
mod homography;
mod ransac;
mod recover;

pub use correct::{correct_pose, plane_matrix, reproject, reproject_with, reprojection_homography};
pub use estimate::{estimate_relative_pose, PoseMethod, RelativePose};
pub use fundamental::{eight_point, FundamentalMatrix};
pub use homography::{decompose_homography, fit_homography, ransac_homography, Homography};
pub use ransac::{adaptive_iterations, ransac, RansacOutcome, RansacParams};
pub use recover::{cheirality_count, essential_candidates, essential_from_fundamental, recover_pose, triangulate};

use crate::geometry::GeometryError;
use crate::prelude::*;
use nalgebra::Vector2;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoseError {
    #[error("need at least {needed} correspondences, got {got}")]
    TooFewCorrespondences { needed: usize, got: usize },
    #[error("degenerate point configuration")]
    Degenerate,
    #[error("best consensus has {found} inliers, need {needed}")]
    InsufficientInliers { found: usize, needed: usize },
    #[error("no pose candidate places more than half the points in front of both cameras ({best} of {total})")]
    CheiralityAmbiguity { best: usize, total: usize },
    #[error("plane homography is singular")]
    SingularHomography,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// A reference pixel and the frame pixel showing the same surface point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub x1: Vector2<f64>,
    pub x2: Vector2<f64>,
}

impl Correspondence {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self { x1: Vector2::new(x1, y1), x2: Vector2::new(x2, y2) }
    }

    #[inline]
    pub fn displacement(&self) -> f64 {
        (self.x2 - self.x1).norm()
    }
}

/// Consensus fundamental matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RansacResult {
    pub model: FundamentalMatrix,
    pub inlier_indices: Vec<usize>,
    pub iterations_used: usize,
}

/// Robust fundamental matrix. Residuals are Sampson distances in pixels.
pub fn ransac_fundamental(
    corrs: &[Correspondence],
    intrinsics: &crate::geometry::CameraIntrinsics,
    params: &RansacParams,
) -> Result<RansacResult, PoseError> {
    if corrs.len() < 8 {
        return Err(PoseError::TooFewCorrespondences { needed: 8, got: corrs.len() });
    }
    intrinsics.validate()?;
    let out = ransac(corrs, 8, params, |s| eight_point(s, intrinsics).ok(), |f, c| f.sampson(c))
        .ok_or(PoseError::InsufficientInliers { found: 0, needed: 8 })?;
    let (model, inliers) = polish(corrs, out.model, out.inliers, intrinsics, params.threshold);
    if inliers.len() < 8 {
        return Err(PoseError::InsufficientInliers { found: inliers.len(), needed: 8 });
    }
    Ok(RansacResult { model, inlier_indices: inliers, iterations_used: out.iterations })
}

/// Below this eigenvalue gap the consensus set does not determine one
/// epipolar geometry and is left as found.
const MIN_NULL_SPACE_GAP: f64 = 10.0;

/// Truncated quadratic cost of `f` over all correspondences.
fn msac_cost(corrs: &[Correspondence], f: &FundamentalMatrix, threshold: f64) -> f64 {
    corrs.iter().map(|c| f.sampson(c).min(threshold).powi(2)).sum()
}

/// Iteratively reweighted refit with Cauchy weights on the Sampson
/// residuals. A least-squares refit can absorb an outlier that a loose
/// minimal-sample model admitted; the reweighting pushes it back out,
/// and is kept only when it lowers the truncated quadratic cost. A
/// deletion check then drops members the rest cannot explain. Near-planar
/// consensus sets are returned untouched.
fn polish(
    corrs: &[Correspondence],
    model: FundamentalMatrix,
    inliers: Vec<usize>,
    intrinsics: &crate::geometry::CameraIntrinsics,
    threshold: f64,
) -> (FundamentalMatrix, Vec<usize>) {
    let support: Vec<Correspondence> = inliers.iter().map(|&i| corrs[i]).collect();
    if !fundamental::null_space_gap(&support, intrinsics).is_ok_and(|g| g >= MIN_NULL_SPACE_GAP) {
        return (model, inliers);
    }
    let in_band = |f: &FundamentalMatrix| -> Vec<usize> {
        (0..corrs.len()).filter(|&i| f.sampson(&corrs[i]) <= threshold).collect()
    };
    let mut f = model;
    for _ in 0..10 {
        let cand = in_band(&f);
        if cand.len() < 8 {
            break;
        }
        let mut res: Vec<f64> = cand.iter().map(|&i| f.sampson(&corrs[i])).collect();
        let mut sorted = res.clone();
        sorted.sort_by(f64::total_cmp);
        let sigma = (1.4826 * sorted[sorted.len() / 2]).max(1e-3 * threshold);
        for r in &mut res {
            *r = 1.0 / (1.0 + (*r / sigma).powi(2));
        }
        let subset: Vec<Correspondence> = cand.iter().map(|&i| corrs[i]).collect();
        let Ok(next) = fundamental::weighted_eight_point(&subset, Some(&res), intrinsics) else { break };
        let moved = (next.matrix() - f.matrix()).norm();
        f = next;
        if moved < 1e-12 {
            break;
        }
    }
    let (mut f, mut inliers) =
        if msac_cost(corrs, &f, threshold) < msac_cost(corrs, &model, threshold) { (f, in_band(&f)) } else { (model, inliers) };
    // Deletion check: a member the others cannot explain is an outlier
    // the fit bent towards.
    let mut rejected = vec![false; corrs.len()];
    for _ in 0..3 {
        let subset: Vec<Correspondence> = inliers.iter().map(|&i| corrs[i]).collect();
        let Ok(flags) = fundamental::deletion_outliers(&subset, intrinsics, threshold) else { break };
        if !flags.contains(&true) {
            break;
        }
        for (&i, _) in inliers.iter().zip(&flags).filter(|(_, &bad)| bad) {
            rejected[i] = true;
        }
        let keep: Vec<Correspondence> = inliers.iter().filter(|&&i| !rejected[i]).map(|&i| corrs[i]).collect();
        let Ok(refit) = eight_point(&keep, intrinsics) else { break };
        f = refit;
        inliers = in_band(&f).into_iter().filter(|&i| !rejected[i]).collect();
    }
    (f, inliers)
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::Correspondence;
    use crate::geometry::{project_homogeneous, CameraIntrinsics, Pose};
    use crate::prelude::*;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn unit_intrinsics() -> CameraIntrinsics {
        CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0, 1.0).unwrap()
    }

    /// Non-planar cloud in front of the reference camera, seen through
    /// `pose`. Points fill the central part of the reference view.
    pub fn scene_correspondences(pose: &Pose, intr: &CameraIntrinsics, n: usize, seed: u64) -> Vec<Correspondence> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let half_w = intr.cx.max(0.5 * intr.fx) / intr.fx * 0.8;
        let half_h = intr.cy.max(0.5 * intr.fy) / intr.fy * 0.8;
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let z = rng.random_range(40.0..90.0);
            let x = rng.random_range(-half_w..half_w) * z;
            let y = rng.random_range(-half_h..half_h) * z;
            let p = Vector3::new(x, y, z);
            let (Ok(a), Ok(b)) = (project_homogeneous(&p, &Pose::identity(), intr), project_homogeneous(&p, pose, intr))
            else {
                continue;
            };
            if pose.transform_point(&p).z <= 0.0 {
                continue;
            }
            out.push(Correspondence { x1: a, x2: b });
        }
        out
    }

    /// Points on the contact plane `Z = D` seen through `pose`.
    pub fn plane_correspondences(pose: &Pose, intr: &CameraIntrinsics, n: usize, seed: u64) -> Vec<Correspondence> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = intr.plane_depth();
        (0..n)
            .map(|_| {
                let u = rng.random_range(40.0..600.0);
                let v = rng.random_range(40.0..440.0);
                let p = Vector3::new((u - intr.cx) / intr.fx * d, (v - intr.cy) / intr.fy * d, d);
                let b = project_homogeneous(&p, pose, intr).unwrap();
                Correspondence::new(u, v, b.x, b.y)
            })
            .collect()
    }
}
