//! Synthetic scans with exact ground truth.
//!
//! A frame is rendered by cropping the phantom at the scanner pose and
//! pushing it through the forward contact deformation: each deformed pixel
//! `q` shows the unloaded surface at `c + (q − c)·s(q)`, which is exactly the
//! map that rectification inverts.

mod phantom;
mod script;

pub use phantom::{generate_phantom, Phantom};
pub use script::{ForceCommand, ScanScript, ScriptError, ScriptOptions, Waypoint};

use crate::force_rect::{ForceRectError, RadialWarp, TiltState};
use crate::geometry::{CameraIntrinsics, ForceSample, MaterialParams};
use crate::image::Image;
use crate::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulatorError {
    #[error("frame footprint at ({x_mm}, {y_mm}) mm leaves the phantom")]
    OutOfBounds { x_mm: f64, y_mm: f64 },
    #[error("tilt ({theta_x}, {theta_y}) rad needs a negative sensor force at {fz} N")]
    InfeasibleTilt { fz: f64, theta_x: f64, theta_y: f64 },
    #[error(transparent)]
    Force(#[from] ForceRectError),
    #[error(transparent)]
    Script(#[from] ScriptError),
}

/// Scanner pose on the phantom: centre in mm from the phantom centre, yaw in
/// radians (camera axes rotated by `yaw` relative to the phantom axes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthPose {
    pub x_mm: f64,
    pub y_mm: f64,
    pub yaw: f64,
}

/// Camera geometry of the simulated scanner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorGeometry {
    pub width: usize,
    pub height: usize,
    pub intrinsics: CameraIntrinsics,
    /// Radius of the circular scanner window about the principal point.
    pub mask_radius_px: f64,
}

impl SensorGeometry {
    /// 640×480 at 0.125 mm/px, f = 500 px, 239 px window.
    pub fn standard() -> Self {
        Self {
            width: 640,
            height: 480,
            intrinsics: CameraIntrinsics::centered(640, 480, 500.0, 0.125),
            mask_radius_px: 239.0,
        }
    }
}

/// Sensor readings that reproduce `(fz, θx, θy)` with a symmetric split
/// about `fz/4`.
pub fn synthesize_sensors(
    frame_id: u32,
    fz: f64,
    theta_x: f64,
    theta_y: f64,
    mp: &MaterialParams,
) -> Result<ForceSample, SimulatorError> {
    let ax = mp.hooke_constant * mp.sensor_sep_x * theta_x.sin();
    let ay = mp.hooke_constant * mp.sensor_sep_y * theta_y.sin();
    let q = fz / 4.0;
    let fs = ForceSample { frame_id, f1: q - ax, f2: q + ax, f3: q - ay, f4: q + ay };
    if fs.validate().is_err() {
        return Err(SimulatorError::InfeasibleTilt { fz, theta_x, theta_y });
    }
    Ok(fs)
}

/// Adds zero-mean Gaussian noise with standard deviation `level·F_Z/4`
/// to every sensor reading, clamping at zero.
pub fn add_sensor_noise(forces: &mut [ForceSample], level: f64, seed: u64) {
    if !(level > 0.0) {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for fs in forces {
        let sd = level * crate::force_rect::total_force(fs).max(0.0) / 4.0;
        for f in [&mut fs.f1, &mut fs.f2, &mut fs.f3, &mut fs.f4] {
            let n: f64 = StandardNormal.sample(&mut rng);
            *f = (*f + sd * n).max(0.0);
        }
    }
}

/// Largest tilt the symmetric split supports at load `fz` on both axes.
pub fn feasible_tilt(fz: f64, mp: &MaterialParams) -> f64 {
    let s = mp.sensor_sep_x.max(mp.sensor_sep_y);
    (fz / (4.0 * mp.hooke_constant * s)).clamp(0.0, 1.0).asin()
}

/// Renders one deformed frame and its sensor readings.
pub fn render_frame(
    phantom: &Phantom,
    pose: TruthPose,
    force: ForceCommand,
    mp: &MaterialParams,
    sensor: &SensorGeometry,
    frame_id: u32,
) -> Result<(Image, ForceSample), SimulatorError> {
    let fs = synthesize_sensors(frame_id, force.fz, force.theta_x, force.theta_y, mp)?;
    let state = TiltState::from_sample(&fs, mp)?;
    let (w, h) = (sensor.width, sensor.height);
    let intr = &sensor.intrinsics;
    let field = state.load_field(w, h, mp, intr)?;
    let warp = RadialWarp::new(&field, mp, intr)?;
    let (sin, cos) = pose.yaw.sin_cos();
    let scale = intr.pixel_pitch * phantom.px_per_mm;
    let (ox, oy) = phantom.to_pixel(pose.x_mm, pose.y_mm);
    let r2 = sensor.mask_radius_px * sensor.mask_radius_px;
    let mut data = vec![0u8; w * h];
    let mut mask = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = (x as f64 - intr.cx, y as f64 - intr.cy);
            if dx * dx + dy * dy > r2 {
                continue;
            }
            let (px, py) = warp.rectified_position(x as f64, y as f64);
            let (ux, uy) = ((px - intr.cx) * scale, (py - intr.cy) * scale);
            let sx = ox + cos * ux - sin * uy;
            let sy = oy + sin * ux + cos * uy;
            let v = phantom
                .image
                .sample_bilinear(sx, sy)
                .ok_or(SimulatorError::OutOfBounds { x_mm: pose.x_mm, y_mm: pose.y_mm })?;
            data[y * w + x] = crate::warp::quantize(v);
            mask[y * w + x] = true;
        }
    }
    let img = Image::with_mask(w, h, data, mask).expect("sized from dimensions");
    Ok((img, fs))
}

/// Same-size view of `img` from a camera tilted by `theta` towards
/// direction `phi` (radians from +x): the image is compressed by `cos θ`
/// along that direction about its centre.
pub fn tilted_view(img: &Image, theta: f64, phi: f64) -> Image {
    let (cx, cy) = ((img.width() as f64 - 1.0) / 2.0, (img.height() as f64 - 1.0) / 2.0);
    let (uy, ux) = phi.sin_cos();
    let stretch = 1.0 / theta.cos() - 1.0;
    crate::warp::warp_inverse(img, img.width(), img.height(), crate::image::Interpolation::Bilinear, |x, y| {
        let (dx, dy) = (x - cx, y - cy);
        let along = stretch * (ux * dx + uy * dy);
        Some((x + along * ux, y + along * uy))
    })
}

/// In-memory result of [`simulate_scan`].
#[derive(Debug, Clone)]
pub struct SimulatedScan {
    pub frames: Vec<Image>,
    pub forces: Vec<ForceSample>,
    /// Scanner position and yaw relative to frame 1, in frame 1's axes.
    pub truth: Vec<(u32, f64, f64, f64)>,
}

/// Renders every frame of `script`. Frame ids start at 1.
pub fn simulate_scan(
    phantom: &Phantom,
    script: &ScanScript,
    mp: &MaterialParams,
    sensor: &SensorGeometry,
) -> Result<SimulatedScan, SimulatorError> {
    script.validate(mp)?;
    let mut frames = Vec::with_capacity(script.frame_count());
    let mut forces = Vec::with_capacity(script.frame_count());
    for (i, (wp, fc)) in script.trajectory.iter().zip(&script.force_profile).enumerate() {
        let pose = TruthPose { x_mm: wp.x_mm, y_mm: wp.y_mm, yaw: wp.yaw_deg.to_radians() };
        let (img, fs) = render_frame(phantom, pose, *fc, mp, sensor, i as u32 + 1)?;
        frames.push(img);
        forces.push(fs);
    }
    Ok(SimulatedScan { frames, forces, truth: script.ground_truth() })
}
