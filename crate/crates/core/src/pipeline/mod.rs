//! Sequential reconstruction: rectify each frame, locate it against the
//! mosaic built so far, correct its pose, stitch it in and extend the path.

mod metrics;
mod mosaic;

pub use metrics::{path_metrics, FrameMismatchKind, PathEstimate, PathMetrics, PathPoint};
pub use mosaic::{stitch, Mosaic, Placement};

use crate::features::{dedupe_matches, detect_asift, detect_sift, match_asift, AsiftConfig, Feature, FeatureError, DEFAULT_RATIO};
use crate::force_rect::{rectify_frame, total_force, ForceRectError};
use crate::geometry::{CameraIntrinsics, ForceSample, MaterialParams, Pose};
use crate::image::Image;
use crate::pose::{
    correct_pose, estimate_relative_pose, plane_matrix, reproject, Correspondence, PoseMethod, RansacParams,
};
use crate::prelude::*;
use nalgebra::Vector3;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("need at least 2 frames, got {0}")]
    TooFewFrames(usize),
    #[error("{frames} frames but {forces} force samples")]
    ForceCount { frames: usize, forces: usize },
    #[error("frame {frame_id} is {got:?}, expected {expected:?}")]
    FrameSize { frame_id: u32, got: (usize, usize), expected: (usize, usize) },
    #[error("frame {frame_id}: {source}")]
    Force { frame_id: u32, source: ForceRectError },
    #[error("frame mismatch: {detail}")]
    FrameMismatch { detail: FrameMismatchKind },
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub asift: AsiftConfig,
    /// Threshold, iteration cap and base seed for every frame's RANSAC.
    pub ransac: RansacParams,
    /// Fewer pose inliers than this counts as tracking loss.
    pub min_inliers: usize,
    /// Side of the mosaic window searched for a frame, in frame extents.
    pub crop_factor: f64,
    pub match_ratio: f32,
    /// Matches repeated across A-SIFT views within this radius count once.
    pub dedupe_radius: f64,
    /// Frame-1 load above which a warning is logged, N.
    pub reference_load_warning: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            asift: AsiftConfig::default(),
            ransac: RansacParams::default(),
            min_inliers: 15,
            crop_factor: 1.5,
            match_ratio: DEFAULT_RATIO,
            dedupe_radius: 3.0,
            reference_load_warning: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameReport {
    pub frame_id: u32,
    pub matches: usize,
    pub inliers: usize,
    pub method: Option<PoseMethod>,
    pub tracked: bool,
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub mosaic: Mosaic,
    pub path: PathEstimate,
    pub frames: Vec<FrameReport>,
    /// `(frame, earlier frame, inliers)`: pose inliers of a frame that fell
    /// on mosaic pixels dominated by the earlier frame. Revisited regions
    /// show up as links between frames far apart in the sequence.
    pub inlier_links: Vec<(u32, u32, usize)>,
}

/// Mosaic and path with the default configuration, except for the A-SIFT
/// schedule.
pub fn reconstruct(
    frames: &[Image],
    forces: &[ForceSample],
    mp: &MaterialParams,
    intrinsics: &CameraIntrinsics,
    cfg: &AsiftConfig,
) -> Result<(Mosaic, PathEstimate), PipelineError> {
    let pc = PipelineConfig { asift: cfg.clone(), ..Default::default() };
    reconstruct_with(frames, forces, mp, intrinsics, &pc).map(|r| (r.mosaic, r.path))
}

/// Outcome of locating one frame against the mosaic.
struct Located {
    pose: Pose,
    method: PoseMethod,
    matches: usize,
    /// Reference-window pixels of the pose inliers.
    inlier_pixels: Vec<(f64, f64)>,
}

pub fn reconstruct_with(
    frames: &[Image],
    forces: &[ForceSample],
    mp: &MaterialParams,
    intrinsics: &CameraIntrinsics,
    cfg: &PipelineConfig,
) -> Result<Reconstruction, PipelineError> {
    if frames.len() < 2 {
        return Err(PipelineError::TooFewFrames(frames.len()));
    }
    if forces.len() != frames.len() {
        return Err(PipelineError::ForceCount { frames: frames.len(), forces: forces.len() });
    }
    mp.validate()?;
    let (w, h) = (frames[0].width(), frames[0].height());
    intrinsics.validate_for(w, h)?;
    for (img, fs) in frames.iter().zip(forces) {
        if (img.width(), img.height()) != (w, h) {
            return Err(PipelineError::FrameSize { frame_id: fs.frame_id, got: (img.width(), img.height()), expected: (w, h) });
        }
    }
    let rectify = |k: usize| {
        rectify_frame(&frames[k], &forces[k], mp, intrinsics)
            .map_err(|source| PipelineError::Force { frame_id: forces[k].frame_id, source })
    };

    let first_id = forces[0].frame_id;
    let load = total_force(&forces[0]);
    if load > cfg.reference_load_warning {
        log::warn!("frame {first_id} carries {load:.3} N; rectifying it as the reference anyway");
    }
    let mut mosaic = Mosaic::new(1.0 / intrinsics.pixel_pitch, (intrinsics.cx, intrinsics.cy));
    mosaic.stitch(&rectify(0)?, first_id, (0.0, 0.0));
    let mut path = vec![PathPoint::new(first_id, 0.0, 0.0)];
    let mut reports = vec![FrameReport { frame_id: first_id, matches: 0, inliers: 0, method: None, tracked: true }];
    let mut links = Vec::new();

    let (cw, ch) = ((cfg.crop_factor * w as f64).round() as usize, (cfg.crop_factor * h as f64).round() as usize);
    for k in 1..frames.len() {
        let frame_id = forces[k].frame_id;
        let rect = rectify(k)?;
        let last = path[path.len() - 1];
        let centre = (last.x_mm, last.y_mm);
        let (gx, gy) = mosaic.to_global(centre.0, centre.1);
        let (x0, y0) = ((gx - cw as f64 / 2.0).round() as i64, (gy - ch as f64 / 2.0).round() as i64);
        let window = mosaic.window(x0, y0, cw, ch);
        // Window pixels in a virtual copy of the scanner camera centred on `centre`.
        let shift = (intrinsics.cx - (gx - x0 as f64), intrinsics.cy - (gy - y0 as f64));
        let params = RansacParams { seed: frame_seed(cfg.ransac.seed, frame_id), ..cfg.ransac };
        let located = locate(&window, &rect, shift, intrinsics, cfg, &params);

        match located {
            Some(loc) if loc.inlier_pixels.len() >= cfg.min_inliers => {
                let pose = loc.pose;
                let corrected = correct_pose(&pose);
                let t = pose.translation();
                let view = reproject(&rect, &pose, &corrected, intrinsics).ok();
                let pos = footprint_centre(&pose, intrinsics).map(|(x, y)| (centre.0 + x, centre.1 + y));
                if let (Some(view), Some(pos)) = (view, pos) {
                    links.extend(owner_links(&mosaic, frame_id, x0, y0, &loc.inlier_pixels));
                    mosaic.stitch(&view, frame_id, (centre.0 - t.x, centre.1 - t.y));
                    path.push(PathPoint { frame_id, x_mm: pos.0, y_mm: pos.1, yaw_deg: -pose.yaw().to_degrees(), tracked: true });
                    reports.push(FrameReport {
                        frame_id,
                        matches: loc.matches,
                        inliers: loc.inlier_pixels.len(),
                        method: Some(loc.method),
                        tracked: true,
                    });
                    continue;
                }
                lost(&mut path, &mut reports, frame_id, loc.matches, loc.inlier_pixels.len(), Some(loc.method));
            }
            Some(loc) => lost(&mut path, &mut reports, frame_id, loc.matches, loc.inlier_pixels.len(), Some(loc.method)),
            None => lost(&mut path, &mut reports, frame_id, 0, 0, None),
        }
    }
    Ok(Reconstruction { mosaic, path: PathEstimate::new(path), frames: reports, inlier_links: links })
}

fn locate(
    window: &Image,
    rect: &Image,
    shift: (f64, f64),
    intrinsics: &CameraIntrinsics,
    cfg: &PipelineConfig,
    params: &RansacParams,
) -> Option<Located> {
    let (reference, views) = detect_pair(window, rect, &cfg.asift);
    let (reference, views) = (reference.ok()?, views.ok()?);
    let matches = match_asift(&reference, &views, cfg.match_ratio);
    let matches = dedupe_matches(&matches, &reference, &views, cfg.dedupe_radius);
    let corrs: Vec<Correspondence> = matches
        .iter()
        .map(|m| {
            let (a, b) = (&reference[m.query], &views[m.train]);
            Correspondence::new(a.x + shift.0, a.y + shift.1, b.x, b.y)
        })
        .collect();
    let est = estimate_relative_pose(&corrs, intrinsics, params).ok()?;
    let inlier_pixels = est.inliers.iter().map(|&i| (corrs[i].x1.x - shift.0, corrs[i].x1.y - shift.1)).collect();
    Some(Located { pose: est.pose, method: est.method, matches: corrs.len(), inlier_pixels })
}

/// Plain SIFT on the mosaic window and A-SIFT on the frame, concurrently
/// when threads are available.
#[allow(clippy::type_complexity)]
fn detect_pair(
    window: &Image,
    rect: &Image,
    cfg: &AsiftConfig,
) -> (Result<Vec<Feature>, FeatureError>, Result<Vec<Feature>, FeatureError>) {
    #[cfg(feature = "std")]
    {
        std::thread::scope(|s| {
            let views = s.spawn(|| detect_asift(rect, cfg));
            let reference = detect_sift(window, cfg);
            (reference, views.join().expect("detector thread panicked"))
        })
    }
    #[cfg(not(feature = "std"))]
    {
        (detect_sift(window, cfg), detect_asift(rect, cfg))
    }
}

/// Surface point under the frame's principal point, mm in the reference
/// camera's plane coordinates.
fn footprint_centre(pose: &Pose, intrinsics: &CameraIntrinsics) -> Option<(f64, f64)> {
    let m = plane_matrix(pose, intrinsics.plane_depth()).try_inverse()?;
    let p = m * Vector3::new(0.0, 0.0, 1.0);
    (p.z.abs() > 1e-12).then(|| (p.x / p.z, p.y / p.z))
}

fn lost(
    path: &mut Vec<PathPoint>,
    reports: &mut Vec<FrameReport>,
    frame_id: u32,
    matches: usize,
    inliers: usize,
    method: Option<PoseMethod>,
) {
    log::warn!("frame {frame_id}: tracking lost ({inliers} inliers of {matches} matches)");
    let n = path.len();
    let last = path[n - 1];
    let (vx, vy) = if n >= 2 { (last.x_mm - path[n - 2].x_mm, last.y_mm - path[n - 2].y_mm) } else { (0.0, 0.0) };
    path.push(PathPoint { frame_id, x_mm: last.x_mm + vx, y_mm: last.y_mm + vy, yaw_deg: last.yaw_deg, tracked: false });
    reports.push(FrameReport { frame_id, matches, inliers, method, tracked: false });
}

fn owner_links(mosaic: &Mosaic, frame_id: u32, x0: i64, y0: i64, pixels: &[(f64, f64)]) -> Vec<(u32, u32, usize)> {
    let mut counts: Vec<(u32, usize)> = Vec::new();
    for &(u, v) in pixels {
        let Some(owner) = mosaic.owner_at(x0 + u.round() as i64, y0 + v.round() as i64) else { continue };
        match counts.iter_mut().find(|(o, _)| *o == owner) {
            Some((_, c)) => *c += 1,
            None => counts.push((owner, 1)),
        }
    }
    counts.sort_unstable();
    counts.into_iter().map(|(o, c)| (frame_id, o, c)).collect()
}

/// Independent RANSAC stream per frame.
fn frame_seed(base: u64, frame_id: u32) -> u64 {
    base ^ (frame_id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}
