//! Domain values shared by every stage: material constants, force samples,
//! pinhole intrinsics and rigid poses.
//!
//! Conventions: image origin top-left, x to the right, y down. A pose maps
//! world coordinates into camera coordinates as `Xc = R·X + T`, and a
//! camera point projects to `(fx·Xc/Zc + cx, fy·Yc/Zc + cy)`.

#[allow(unused_imports)]
use crate::prelude::*;
use nalgebra::{Matrix3, Vector2, Vector3};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid material parameter {name} = {value}")]
    InvalidMaterial { name: &'static str, value: f64 },
    #[error("sensor force {name} = {value} N is negative or not finite")]
    InvalidForce { name: &'static str, value: f64 },
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(&'static str),
    #[error("rotation is not orthonormal with det +1 (error {0:e})")]
    NotARotation(f64),
    #[error("projected depth {0:e} is degenerate")]
    DegenerateDepth(f64),
}

/// Elastic constants of the scanned surface plus scanner geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialParams {
    /// Young's modulus E, pascals.
    pub youngs_modulus: f64,
    /// Poisson ratio υ.
    pub poisson_ratio: f64,
    /// Hooke constant κ of the surface under the sensors, N/mm.
    pub hooke_constant: f64,
    /// Scanner contact area A, m².
    pub scanner_area: f64,
    /// Sensor separation along X, mm.
    pub sensor_sep_x: f64,
    /// Sensor separation along Y, mm.
    pub sensor_sep_y: f64,
}

impl MaterialParams {
    pub fn new(
        youngs_modulus: f64,
        poisson_ratio: f64,
        hooke_constant: f64,
        scanner_area: f64,
        sensor_sep_x: f64,
        sensor_sep_y: f64,
    ) -> Result<Self, GeometryError> {
        let mp = Self {
            youngs_modulus,
            poisson_ratio,
            hooke_constant,
            scanner_area,
            sensor_sep_x,
            sensor_sep_y,
        };
        mp.validate()?;
        Ok(mp)
    }

    /// Calibrated silicone phantom: E = 16.1 kPa, υ = 0.5, κ = 18 N/mm,
    /// A = 0.0048 m², sensor separation 53 mm on both axes.
    pub fn phantom() -> Self {
        Self {
            youngs_modulus: 16_100.0,
            poisson_ratio: 0.5,
            hooke_constant: 18.0,
            scanner_area: 0.0048,
            sensor_sep_x: 53.0,
            sensor_sep_y: 53.0,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let positive = [
            ("youngs_modulus", self.youngs_modulus),
            ("hooke_constant", self.hooke_constant),
            ("scanner_area", self.scanner_area),
            ("sensor_sep_x", self.sensor_sep_x),
            ("sensor_sep_y", self.sensor_sep_y),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(GeometryError::InvalidMaterial { name, value });
            }
        }
        if !(self.poisson_ratio > 0.0 && self.poisson_ratio <= 0.5) {
            return Err(GeometryError::InvalidMaterial {
                name: "poisson_ratio",
                value: self.poisson_ratio,
            });
        }
        Ok(())
    }

    /// υ/(E·A): fractional radial contraction per newton of local load.
    #[inline]
    pub fn stretch_coefficient(&self) -> f64 {
        self.poisson_ratio / (self.youngs_modulus * self.scanner_area)
    }
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self::phantom()
    }
}

/// The four contact-sensor readings of one frame, newtons.
/// F4→F3 spans the X axis, F2→F1 spans the Y axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceSample {
    pub frame_id: u32,
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    pub f4: f64,
}

impl ForceSample {
    pub fn new(frame_id: u32, f1: f64, f2: f64, f3: f64, f4: f64) -> Result<Self, GeometryError> {
        let fs = Self { frame_id, f1, f2, f3, f4 };
        fs.validate()?;
        Ok(fs)
    }

    pub fn zero(frame_id: u32) -> Self {
        Self { frame_id, f1: 0.0, f2: 0.0, f3: 0.0, f4: 0.0 }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        for (name, value) in [("f1", self.f1), ("f2", self.f2), ("f3", self.f3), ("f4", self.f4)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(GeometryError::InvalidForce { name, value });
            }
        }
        Ok(())
    }

    /// Same sample with `offset` newtons added to every sensor.
    pub fn offset(&self, offset: f64) -> Self {
        Self {
            frame_id: self.frame_id,
            f1: self.f1 + offset,
            f2: self.f2 + offset,
            f3: self.f3 + offset,
            f4: self.f4 + offset,
        }
    }
}

/// Zero-skew pinhole intrinsics plus the physical size of a pixel on the
/// contact plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Millimetres per pixel at the contact plane.
    pub pixel_pitch: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, pixel_pitch: f64) -> Result<Self, GeometryError> {
        let c = Self { fx, fy, cx, cy, pixel_pitch };
        c.validate()?;
        Ok(c)
    }

    /// Intrinsics centred on a `width`×`height` sensor.
    pub fn centered(width: usize, height: usize, focal: f64, pixel_pitch: f64) -> Self {
        Self { fx: focal, fy: focal, cx: width as f64 / 2.0, cy: height as f64 / 2.0, pixel_pitch }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(GeometryError::InvalidIntrinsics("focal lengths must be positive"));
        }
        if !(self.pixel_pitch > 0.0 && self.pixel_pitch.is_finite()) {
            return Err(GeometryError::InvalidIntrinsics("pixel pitch must be positive"));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(GeometryError::InvalidIntrinsics("principal point must be finite"));
        }
        Ok(())
    }

    pub fn validate_for(&self, width: usize, height: usize) -> Result<(), GeometryError> {
        self.validate()?;
        if !(self.cx >= 0.0 && self.cy >= 0.0 && self.cx < width as f64 && self.cy < height as f64) {
            return Err(GeometryError::InvalidIntrinsics("principal point outside the image"));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    /// Distance from the camera centre to the contact plane, mm. One pixel
    /// at the principal point covers `pixel_pitch` millimetres there.
    #[inline]
    pub fn plane_depth(&self) -> f64 {
        self.fx * self.pixel_pitch
    }

    #[inline]
    pub fn principal_point(&self) -> Vector2<f64> {
        Vector2::new(self.cx, self.cy)
    }

    /// Same camera with the principal point moved to `(cx, cy)`.
    pub fn with_principal_point(&self, cx: f64, cy: f64) -> Self {
        Self { cx, cy, ..*self }
    }
}

/// Rigid transform from world to camera coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

const ROTATION_TOL: f64 = 1e-9;

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let err = (rotation * rotation.transpose() - Matrix3::identity()).amax();
        let det_err = (rotation.determinant() - 1.0).abs();
        if !(err <= ROTATION_TOL && det_err <= ROTATION_TOL) || !translation.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NotARotation(err.max(det_err)));
        }
        Ok(Self { rotation, translation })
    }

    /// Projects `rotation` onto SO(3) before building the pose.
    pub fn from_approx_rotation(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        Self::new(nearest_rotation(&rotation), translation)
    }

    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self { rotation: Matrix3::identity(), translation: t }
    }

    /// Rotation `Rx(θx)·Ry(θy)·Rz(φ)` with translation `t`.
    pub fn from_euler_xyz(theta_x: f64, theta_y: f64, phi: f64, t: Vector3<f64>) -> Self {
        Self { rotation: rot_x(theta_x) * rot_y(theta_y) * rot_z(phi), translation: t }
    }

    #[inline]
    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    #[inline]
    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `self` applied after `first`: `X ↦ R_self·(R_first·X + T_first) + T_self`.
    pub fn compose(&self, first: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * first.rotation,
            translation: self.rotation * first.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose { rotation: rt, translation: -(rt * self.translation) }
    }

    /// Camera centre in world coordinates, `-Rᵀ·T`.
    pub fn camera_centre(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Euler angles `(θx, θy, φ)` of the factorisation `R = Rx·Ry·Rz`.
    pub fn euler_xyz(&self) -> (f64, f64, f64) {
        let r = &self.rotation;
        let theta_y = r[(0, 2)].clamp(-1.0, 1.0).asin();
        let theta_x = (-r[(1, 2)]).atan2(r[(2, 2)]);
        let phi = (-r[(0, 1)]).atan2(r[(0, 0)]);
        (theta_x, theta_y, phi)
    }

    /// Yaw φ, the Z angle of the XYZ factorisation.
    pub fn yaw(&self) -> f64 {
        self.euler_xyz().2
    }

    /// Angle of the relative rotation `R·Rᵀ_other`, radians.
    pub fn rotation_angle_to(&self, other: &Pose) -> f64 {
        rotation_angle(&(self.rotation * other.rotation.transpose()))
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

pub fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Rotation angle of a rotation matrix, radians.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
}

/// Closest rotation in the Frobenius sense (polar factor with det +1).
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested Vᵀ");
    let mut d = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    u * d * vt
}

/// Pinhole projection of a world point through `pose` and `intrinsics`.
pub fn project_homogeneous(
    point: &Vector3<f64>,
    pose: &Pose,
    intrinsics: &CameraIntrinsics,
) -> Result<Vector2<f64>, GeometryError> {
    let pc = pose.transform_point(point);
    if pc.z.abs() < 1e-12 {
        return Err(GeometryError::DegenerateDepth(pc.z));
    }
    Ok(Vector2::new(
        intrinsics.fx * pc.x / pc.z + intrinsics.cx,
        intrinsics.fy * pc.y / pc.z + intrinsics.cy,
    ))
}

/// Inverse of [`project_homogeneous`] for a known camera-frame depth.
pub fn back_project(
    pixel: &Vector2<f64>,
    depth: f64,
    pose: &Pose,
    intrinsics: &CameraIntrinsics,
) -> Vector3<f64> {
    let pc = Vector3::new(
        (pixel.x - intrinsics.cx) / intrinsics.fx * depth,
        (pixel.y - intrinsics.cy) / intrinsics.fy * depth,
        depth,
    );
    pose.rotation.transpose() * (pc - pose.translation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 0.125).unwrap()
    }

    #[test]
    fn origin_on_axis_maps_to_principal_point() {
        let p = project_homogeneous(&Vector3::new(0.0, 0.0, 50.0), &Pose::identity(), &intr()).unwrap();
        assert_eq!(p, Vector2::new(320.0, 240.0));
        // The world origin itself sits at zero depth under the identity pose.
        assert!(matches!(
            project_homogeneous(&Vector3::zeros(), &Pose::identity(), &intr()),
            Err(GeometryError::DegenerateDepth(_))
        ));
    }

    #[test]
    fn similar_triangles_offset() {
        let pose = Pose::from_translation(Vector3::new(0.0, 0.0, 100.0));
        let p = project_homogeneous(&Vector3::new(10.0, 0.0, 0.0), &pose, &intr()).unwrap();
        assert!((p.x - 370.0).abs() < 1e-12);
        assert!((p.y - 240.0).abs() < 1e-12);
    }

    #[test]
    fn translation_equals_point_shift() {
        let depth = Vector3::new(0.0, 0.0, 80.0);
        let shifted = Pose::from_translation(depth + Vector3::new(5.0, 0.0, 0.0));
        let base = Pose::from_translation(depth);
        for (x, y) in [(0.0, 0.0), (-12.0, 7.5), (30.0, -4.0)] {
            let a = project_homogeneous(&Vector3::new(x, y, 0.0), &shifted, &intr()).unwrap();
            let b = project_homogeneous(&Vector3::new(x + 5.0, y, 0.0), &base, &intr()).unwrap();
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn rejects_invalid_values() {
        assert!(MaterialParams::new(16100.0, 0.6, 18.0, 0.0048, 53.0, 53.0).is_err());
        assert!(MaterialParams::new(0.0, 0.5, 18.0, 0.0048, 53.0, 53.0).is_err());
        assert!(MaterialParams::phantom().validate().is_ok());
        assert!(ForceSample::new(0, 1.0, -0.1, 0.0, 0.0).is_err());
        assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(intr().validate_for(200, 200).is_err());
        let bad = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(Pose::new(bad, Vector3::zeros()).is_err());
        assert!(Pose::new(-Matrix3::identity(), Vector3::zeros()).is_err());
    }

    #[test]
    fn euler_round_trip() {
        let p = Pose::from_euler_xyz(0.1, -0.2, 0.3, Vector3::zeros());
        let (a, b, c) = p.euler_xyz();
        assert!((a - 0.1).abs() < 1e-12 && (b + 0.2).abs() < 1e-12 && (c - 0.3).abs() < 1e-12);
    }

    fn arb_pose() -> impl Strategy<Value = Pose> {
        (-1.0f64..1.0, -1.0f64..1.0, -3.0f64..3.0, -50.0f64..50.0, -50.0f64..50.0, -50.0f64..50.0)
            .prop_map(|(a, b, c, x, y, z)| Pose::from_euler_xyz(a, b, c, Vector3::new(x, y, z)))
    }

    proptest! {
        #[test]
        fn back_projection_recovers_plane_points(
            x in -40.0f64..40.0, y in -30.0f64..30.0,
            tx in -5.0f64..5.0, ty in -5.0f64..5.0, depth in 40.0f64..120.0,
            yaw in -0.5f64..0.5,
        ) {
            let pose = Pose::from_euler_xyz(0.0, 0.0, yaw, Vector3::new(tx, ty, depth));
            let world = Vector3::new(x, y, 0.0);
            let pix = project_homogeneous(&world, &pose, &intr()).unwrap();
            let z = pose.transform_point(&world).z;
            let back = back_project(&pix, z, &pose, &intr());
            prop_assert!((back - world).norm() <= 1e-9 * world.norm().max(1.0));
        }

        #[test]
        fn composition_is_associative(a in arb_pose(), b in arb_pose(), c in arb_pose()) {
            let left = a.compose(&b).compose(&c);
            let right = a.compose(&b.compose(&c));
            prop_assert!((left.rotation() - right.rotation()).amax() < 1e-9);
            prop_assert!((left.translation() - right.translation()).amax() < 1e-9);
            let id = a.compose(&a.inverse());
            prop_assert!((id.rotation() - Matrix3::identity()).amax() < 1e-9);
            prop_assert!(id.translation().amax() < 1e-9);
        }
    }
}
