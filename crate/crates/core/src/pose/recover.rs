//! Pose from the fundamental matrix: essential matrix, four-way
//! decomposition, cheirality vote and plane-based scale.

use super::fundamental::{apply, FundamentalMatrix};
use super::{Correspondence, PoseError};
use crate::geometry::{CameraIntrinsics, Pose};
use crate::prelude::*;
use nalgebra::{Matrix3, Matrix4, Vector2, Vector3};

/// Displacements below this (pixels) count as no motion.
const STATIC_DISPLACEMENT: f64 = 1e-6;

pub fn essential_from_fundamental(f: &FundamentalMatrix, intrinsics: &CameraIntrinsics) -> Matrix3<f64> {
    let k = intrinsics.matrix();
    k.transpose() * f.matrix() * k
}

/// The four `(R, t)` factorisations of `E = [t]×·R`, `t` of unit length.
pub fn essential_candidates(e: &Matrix3<f64>) -> [(Matrix3<f64>, Vector3<f64>); 4] {
    let svd = e.svd(true, true);
    let mut u = svd.u.expect("requested U");
    let mut vt = svd.v_t.expect("requested Vᵀ");
    if u.determinant() < 0.0 {
        u.column_mut(2).neg_mut();
    }
    if vt.determinant() < 0.0 {
        vt.row_mut(2).neg_mut();
    }
    let w = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let r1 = u * w * vt;
    let r2 = u * w.transpose() * vt;
    let t = u.column(2).into_owned();
    [(r1, t), (r1, -t), (r2, t), (r2, -t)]
}

/// Linear triangulation from normalised image points of the cameras
/// `[I|0]` and `[R|t]`. Returns the point in the first camera's frame.
pub fn triangulate(n1: &Vector2<f64>, n2: &Vector2<f64>, r: &Matrix3<f64>, t: &Vector3<f64>) -> Option<Vector3<f64>> {
    let p2 = |row: usize| nalgebra::RowVector4::new(r[(row, 0)], r[(row, 1)], r[(row, 2)], t[row]);
    let a = Matrix4::from_rows(&[
        nalgebra::RowVector4::new(-1.0, 0.0, n1.x, 0.0),
        nalgebra::RowVector4::new(0.0, -1.0, n1.y, 0.0),
        p2(2) * n2.x - p2(0),
        p2(2) * n2.y - p2(1),
    ]);
    let svd = a.svd(false, true);
    let vt = svd.v_t?;
    let (imin, _) = svd.singular_values.argmin();
    let x = vt.row(imin);
    if x[3].abs() < 1e-12 {
        return None;
    }
    Some(Vector3::new(x[0] / x[3], x[1] / x[3], x[2] / x[3]))
}

/// Points that triangulate in front of both cameras.
pub fn cheirality_count(normalised: &[(Vector2<f64>, Vector2<f64>)], r: &Matrix3<f64>, t: &Vector3<f64>) -> usize {
    normalised
        .iter()
        .filter(|(a, b)| {
            triangulate(a, b, r, t).is_some_and(|x| x.z > 0.0 && (r * x + t).z > 0.0)
        })
        .count()
}

/// Relative pose from `F` and its supporting correspondences. The unit
/// translation is scaled so that the contact-plane homography it induces
/// best reproduces the observed frame pixels.
pub fn recover_pose(
    f: &FundamentalMatrix,
    intrinsics: &CameraIntrinsics,
    corrs: &[Correspondence],
) -> Result<Pose, PoseError> {
    intrinsics.validate()?;
    if corrs.is_empty() {
        return Err(PoseError::TooFewCorrespondences { needed: 1, got: 0 });
    }
    if median(corrs.iter().map(Correspondence::displacement).collect()) < STATIC_DISPLACEMENT {
        return Ok(Pose::identity());
    }
    let kinv = intrinsics.inverse_matrix();
    let normalised: Vec<(Vector2<f64>, Vector2<f64>)> =
        corrs.iter().map(|c| (apply(&kinv, &c.x1), apply(&kinv, &c.x2))).collect();
    let e = essential_from_fundamental(f, intrinsics);
    let cands = essential_candidates(&e);
    let counts: Vec<usize> = cands.iter().map(|(r, t)| cheirality_count(&normalised, r, t)).collect();
    let (best, &votes) = counts.iter().enumerate().max_by_key(|&(i, c)| (*c, usize::MAX - i)).expect("four candidates");
    if 2 * votes <= corrs.len() {
        return Err(PoseError::CheiralityAmbiguity { best: votes, total: corrs.len() });
    }
    let (r, t) = cands[best];
    let k = plane_scale(&r, &t, intrinsics, corrs);
    Ok(Pose::from_approx_rotation(r, t * k)?)
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) }
}

/// Length `k` of the translation `k·t` for which the plane homography
/// `R + k·t·e₃ᵀ/D` fits the correspondences in the least-squares sense.
/// Starts from the ratio of median displacements and refines by
/// Gauss-Newton.
fn plane_scale(r: &Matrix3<f64>, t: &Vector3<f64>, intr: &CameraIntrinsics, corrs: &[Correspondence]) -> f64 {
    let kinv = intr.inverse_matrix();
    let b = t / intr.plane_depth();
    let rays: Vec<Vector3<f64>> = corrs.iter().map(|c| r * (kinv * c.x1.push(1.0))).collect();
    let project = |p: &Vector3<f64>| Vector2::new(intr.fx * p.x / p.z + intr.cx, intr.fy * p.y / p.z + intr.cy);
    let ratios: Vec<f64> = corrs
        .iter()
        .zip(&rays)
        .filter_map(|(c, a)| {
            let base = project(a);
            let unit = (project(&(a + b)) - base).norm();
            (unit > 1e-12).then(|| (c.x2 - base).norm() / unit)
        })
        .collect();
    let k0 = median(ratios);
    let mut k = k0;
    for _ in 0..10 {
        let (mut jtj, mut jtr) = (0.0, 0.0);
        for (c, a) in corrs.iter().zip(&rays) {
            let p = a + b * k;
            if p.z.abs() < 1e-12 {
                continue;
            }
            let res = project(&p) - c.x2;
            let dz = p.z * p.z;
            let jx = intr.fx * (b.x * p.z - p.x * b.z) / dz;
            let jy = intr.fy * (b.y * p.z - p.y * b.z) / dz;
            jtj += jx * jx + jy * jy;
            jtr += jx * res.x + jy * res.y;
        }
        if jtj <= 0.0 {
            break;
        }
        let step = jtr / jtj;
        k -= step;
        if step.abs() < 1e-12 * k.abs().max(1.0) {
            break;
        }
    }
    // The cheirality vote fixed the direction; a negative length would flip it.
    if k.is_finite() && k >= 0.0 { k } else { k0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::eight_point;
    use crate::pose::testutil::scene_correspondences;

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::centered(640, 480, 500.0, 0.125)
    }

    #[test]
    fn identity_motion_gives_identity_pose() {
        let f = FundamentalMatrix::from_matrix(Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0)).unwrap();
        let corrs: Vec<Correspondence> =
            (0..20).map(|i| Correspondence::new(10.0 * i as f64, 5.0 * i as f64, 10.0 * i as f64, 5.0 * i as f64)).collect();
        assert_eq!(recover_pose(&f, &intr(), &corrs).unwrap(), Pose::identity());
    }

    #[test]
    fn pure_translation_direction() {
        let truth = Pose::from_translation(Vector3::new(5.0, 0.0, 0.0));
        let corrs = scene_correspondences(&truth, &intr(), 100, 3);
        let f = eight_point(&corrs, &intr()).unwrap();
        let est = recover_pose(&f, &intr(), &corrs).unwrap();
        let t = est.translation().normalize();
        assert!(t.x.clamp(-1.0, 1.0).acos().to_degrees() < 2.0, "{t}");
        assert!(est.rotation_angle_to(&truth).to_degrees() < 0.1);
    }

    #[test]
    fn exactly_one_candidate_passes_cheirality() {
        let truth = Pose::from_euler_xyz(0.03, -0.02, 0.4, Vector3::new(2.0, -3.0, 1.0));
        let corrs = scene_correspondences(&truth, &intr(), 80, 4);
        let f = eight_point(&corrs, &intr()).unwrap();
        let kinv = intr().inverse_matrix();
        let n: Vec<_> = corrs.iter().map(|c| (apply(&kinv, &c.x1), apply(&kinv, &c.x2))).collect();
        let cands = essential_candidates(&essential_from_fundamental(&f, &intr()));
        let passing: Vec<usize> = cands.iter().map(|(r, t)| cheirality_count(&n, r, t)).collect();
        assert_eq!(passing.iter().filter(|&&c| c == corrs.len()).count(), 1, "{passing:?}");
        assert_eq!(passing.iter().filter(|&&c| c > corrs.len() / 2).count(), 1, "{passing:?}");
        let est = recover_pose(&f, &intr(), &corrs).unwrap();
        assert!(est.rotation_angle_to(&truth).to_degrees() < 0.1);
        let dir = est.translation().normalize().dot(&truth.translation().normalize());
        assert!(dir > 2f64.to_radians().cos());
    }

    #[test]
    fn plane_scale_recovers_metric_translation() {
        let truth = Pose::from_translation(Vector3::new(4.0, -2.0, 0.0));
        let corrs = crate::pose::testutil::plane_correspondences(&truth, &intr(), 50, 2);
        let k = plane_scale(&Matrix3::identity(), &truth.translation().normalize(), &intr(), &corrs);
        assert!((k - truth.translation().norm()).abs() < 1e-9, "{k}");
    }
}
