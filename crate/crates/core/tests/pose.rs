use forcemosaic_core::geometry::{project_homogeneous, rotation_angle};
use forcemosaic_core::pose::{estimate_relative_pose, Correspondence, PoseMethod, RansacParams};
use forcemosaic_core::{CameraIntrinsics, Pose};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn intr() -> CameraIntrinsics {
    CameraIntrinsics::centered(640, 480, 500.0, 0.125)
}

fn observe(points: &[Vector3<f64>], pose: &Pose) -> Vec<Correspondence> {
    points
        .iter()
        .filter_map(|p| {
            let a = project_homogeneous(p, &Pose::identity(), &intr()).ok()?;
            let b = project_homogeneous(p, pose, &intr()).ok()?;
            Some(Correspondence { x1: a, x2: b })
        })
        .collect()
}

#[test]
fn flat_surface_uses_the_homography() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let d = intr().plane_depth();
    let pts: Vec<_> =
        (0..150).map(|_| Vector3::new(rng.random_range(-30.0..30.0), rng.random_range(-22.0..22.0), d)).collect();
    let pose = Pose::from_euler_xyz(0.0, 0.0, 0.2, Vector3::new(3.0, -2.0, 0.0));
    let r = estimate_relative_pose(&observe(&pts, &pose), &intr(), &RansacParams::default()).unwrap();
    assert_eq!(r.method, PoseMethod::Homography);
    assert!((r.pose.translation() - pose.translation()).norm() < 1e-6);
    assert!(rotation_angle(&(r.pose.rotation().transpose() * pose.rotation())) < 1e-8);
}

#[test]
fn relief_uses_the_essential_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pts: Vec<_> = (0..150)
        .map(|_| {
            let z = rng.random_range(40.0..90.0);
            Vector3::new(rng.random_range(-0.4..0.4) * z, rng.random_range(-0.3..0.3) * z, z)
        })
        .collect();
    let pose = Pose::from_euler_xyz(0.02, -0.01, 0.1, Vector3::new(5.0, 1.0, 0.5));
    let r = estimate_relative_pose(&observe(&pts, &pose), &intr(), &RansacParams::default()).unwrap();
    assert_eq!(r.method, PoseMethod::Essential);
    let cos = r.pose.translation().normalize().dot(&pose.translation().normalize());
    assert!(cos > 1.0 - 1e-9, "{cos}");
}
