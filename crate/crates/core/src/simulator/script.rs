//! Scan scripts: trajectory plus per-frame force commands.

use super::{feasible_tilt, synthesize_sensors};
use crate::geometry::MaterialParams;
use crate::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScriptError {
    #[error("script has no frames")]
    Empty,
    #[error("trajectory has {trajectory} entries but force profile has {forces}")]
    LengthMismatch { trajectory: usize, forces: usize },
    #[error("frame {frame}: force command cannot be produced by non-negative sensors")]
    Infeasible { frame: usize },
}

/// Scanner centre on the phantom (mm from its centre) and yaw in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Waypoint {
    pub x_mm: f64,
    pub y_mm: f64,
    pub yaw_deg: f64,
}

/// Normal load in newtons and tilt angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ForceCommand {
    pub fz: f64,
    pub theta_x: f64,
    pub theta_y: f64,
}

impl ForceCommand {
    pub fn from_degrees(fz: f64, theta_x_deg: f64, theta_y_deg: f64) -> Self {
        Self { fz, theta_x: theta_x_deg.to_radians(), theta_y: theta_y_deg.to_radians() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptOptions {
    pub frames: usize,
    /// Frames per raster row.
    pub row_length: usize,
    /// Distance between consecutive frames along a row, mm.
    pub step_mm: f64,
    pub row_spacing_mm: f64,
    /// Normal load range for every frame after the first, N.
    pub load_min: f64,
    pub load_max: f64,
    /// Upper bound on |θx|, |θy|; the feasible envelope may be smaller.
    pub max_tilt_deg: f64,
    /// Yaw drawn uniformly in ±this value per frame.
    pub yaw_jitter_deg: f64,
    /// Frames at the start position: frame 1 unloaded, the rest pressed
    /// straight down. Used for auto-calibration.
    pub touchdown_frames: usize,
    pub seed: u64,
}

impl Default for ScriptOptions {
    fn default() -> Self {
        Self {
            frames: 100,
            row_length: 10,
            step_mm: 4.0,
            row_spacing_mm: 6.0,
            load_min: 2.0,
            load_max: 15.0,
            max_tilt_deg: 10.0,
            yaw_jitter_deg: 3.0,
            touchdown_frames: 0,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanScript {
    pub trajectory: Vec<Waypoint>,
    pub force_profile: Vec<ForceCommand>,
    pub rng_seed: u64,
}

impl ScanScript {
    pub fn new(trajectory: Vec<Waypoint>, force_profile: Vec<ForceCommand>, rng_seed: u64) -> Self {
        Self { trajectory, force_profile, rng_seed }
    }

    /// Boustrophedon rows centred on the phantom centre.
    pub fn raster(opts: &ScriptOptions, mp: &MaterialParams) -> Self {
        let scan = opts.frames.saturating_sub(opts.touchdown_frames.saturating_sub(1));
        let row_len = opts.row_length.max(1);
        let rows = scan.div_ceil(row_len).max(1);
        let x0 = -((row_len.min(scan).max(1) - 1) as f64) * opts.step_mm / 2.0;
        let y0 = -((rows - 1) as f64) * opts.row_spacing_mm / 2.0;
        let centres: Vec<(f64, f64)> = (0..scan)
            .map(|i| {
                let (row, k) = (i / row_len, i % row_len);
                let col = if row % 2 == 0 { k } else { row_len - 1 - k };
                (x0 + col as f64 * opts.step_mm, y0 + row as f64 * opts.row_spacing_mm)
            })
            .collect();
        Self::build(&centres, opts, mp)
    }

    /// Closed circle traversed 1.25 times, so its start is scanned again.
    pub fn revisit_loop(opts: &ScriptOptions, mp: &MaterialParams) -> Self {
        let scan = opts.frames.saturating_sub(opts.touchdown_frames.saturating_sub(1));
        let turns = 1.25;
        let radius = scan as f64 * opts.step_mm / (core::f64::consts::TAU * turns);
        let centres: Vec<(f64, f64)> = (0..scan)
            .map(|i| {
                let a = core::f64::consts::TAU * turns * i as f64 / scan.max(1) as f64;
                (radius * a.cos() - radius, radius * a.sin())
            })
            .collect();
        Self::build(&centres, opts, mp)
    }

    fn build(centres: &[(f64, f64)], opts: &ScriptOptions, mp: &MaterialParams) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut trajectory = Vec::with_capacity(opts.frames);
        let mut force_profile = Vec::with_capacity(opts.frames);
        let jitter = |rng: &mut ChaCha8Rng| {
            if opts.yaw_jitter_deg > 0.0 {
                rng.random_range(-opts.yaw_jitter_deg..=opts.yaw_jitter_deg)
            } else {
                0.0
            }
        };
        let load = |rng: &mut ChaCha8Rng| {
            if opts.load_max > opts.load_min {
                rng.random_range(opts.load_min..=opts.load_max)
            } else {
                opts.load_min
            }
        };
        let Some(&(sx, sy)) = centres.first() else {
            return Self::new(trajectory, force_profile, opts.seed);
        };
        let start_yaw = jitter(&mut rng);
        // Frame 1 is the unloaded reference.
        trajectory.push(Waypoint { x_mm: sx, y_mm: sy, yaw_deg: start_yaw });
        force_profile.push(ForceCommand::default());
        for _ in 1..opts.touchdown_frames {
            trajectory.push(Waypoint { x_mm: sx, y_mm: sy, yaw_deg: start_yaw });
            force_profile.push(ForceCommand { fz: load(&mut rng), theta_x: 0.0, theta_y: 0.0 });
        }
        for &(x, y) in &centres[1..] {
            let yaw = jitter(&mut rng);
            let fz = load(&mut rng);
            let env = opts.max_tilt_deg.to_radians().min(0.95 * feasible_tilt(fz, mp));
            let tx = if env > 0.0 { rng.random_range(-env..=env) } else { 0.0 };
            let ty = if env > 0.0 { rng.random_range(-env..=env) } else { 0.0 };
            trajectory.push(Waypoint { x_mm: x, y_mm: y, yaw_deg: yaw });
            force_profile.push(ForceCommand { fz, theta_x: tx, theta_y: ty });
        }
        trajectory.truncate(opts.frames);
        force_profile.truncate(opts.frames);
        Self::new(trajectory, force_profile, opts.seed)
    }

    /// Given trajectory with the force profile of [`ScanScript::raster`]:
    /// frame 1 unloaded, then random loads and feasible tilts.
    pub fn along(trajectory: Vec<Waypoint>, opts: &ScriptOptions, mp: &MaterialParams) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let force_profile = (0..trajectory.len())
            .map(|i| {
                if i == 0 {
                    return ForceCommand::default();
                }
                let fz = if opts.load_max > opts.load_min { rng.random_range(opts.load_min..=opts.load_max) } else { opts.load_min };
                let env = opts.max_tilt_deg.to_radians().min(0.95 * feasible_tilt(fz, mp));
                let mut tilt = || if env > 0.0 { rng.random_range(-env..=env) } else { 0.0 };
                let (theta_x, theta_y) = (tilt(), tilt());
                ForceCommand { fz, theta_x, theta_y }
            })
            .collect();
        Self::new(trajectory, force_profile, opts.seed)
    }

    pub fn frame_count(&self) -> usize {
        self.trajectory.len()
    }

    pub fn validate(&self, mp: &MaterialParams) -> Result<(), ScriptError> {
        if self.trajectory.is_empty() {
            return Err(ScriptError::Empty);
        }
        if self.trajectory.len() != self.force_profile.len() {
            return Err(ScriptError::LengthMismatch {
                trajectory: self.trajectory.len(),
                forces: self.force_profile.len(),
            });
        }
        for (i, fc) in self.force_profile.iter().enumerate() {
            if !(fc.fz >= 0.0) || synthesize_sensors(0, fc.fz, fc.theta_x, fc.theta_y, mp).is_err() {
                return Err(ScriptError::Infeasible { frame: i + 1 });
            }
        }
        Ok(())
    }

    /// `(frame_id, x_mm, y_mm, yaw_deg)` relative to frame 1 in its axes.
    pub fn ground_truth(&self) -> Vec<(u32, f64, f64, f64)> {
        let Some(first) = self.trajectory.first() else { return Vec::new() };
        let (s, c) = (-first.yaw_deg.to_radians()).sin_cos();
        self.trajectory
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let (dx, dy) = (w.x_mm - first.x_mm, w.y_mm - first.y_mm);
                (i as u32 + 1, c * dx - s * dy, s * dx + c * dy, w.yaw_deg - first.yaw_deg)
            })
            .collect()
    }

    /// Sum of distances between consecutive waypoints, mm.
    pub fn arc_length(&self) -> f64 {
        self.trajectory
            .windows(2)
            .map(|p| (p[1].x_mm - p[0].x_mm).hypot(p[1].y_mm - p[0].y_mm))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raster_layout_and_forces() {
        let mp = MaterialParams::phantom();
        let s = ScanScript::raster(&ScriptOptions::default(), &mp);
        assert_eq!(s.frame_count(), 100);
        assert!(s.validate(&mp).is_ok());
        assert_eq!(s.force_profile[0], ForceCommand::default());
        assert!(s.force_profile[1..].iter().all(|f| (2.0..=15.0).contains(&f.fz)));
        let gt = s.ground_truth();
        assert_eq!((gt[0].1, gt[0].2), (0.0, 0.0));
        let truth_len: f64 = gt.windows(2).map(|p| (p[1].1 - p[0].1).hypot(p[1].2 - p[0].2)).sum();
        assert!((truth_len - s.arc_length()).abs() < 1e-9);
        // 10 rows of 9 steps plus 9 row changes.
        assert!((s.arc_length() - (90.0 * 4.0 + 9.0 * 6.0)).abs() < 1e-9);
    }

    #[test]
    fn touchdown_frames_share_the_start() {
        let mp = MaterialParams::phantom();
        let opts = ScriptOptions { touchdown_frames: 5, frames: 20, ..Default::default() };
        let s = ScanScript::raster(&opts, &mp);
        assert_eq!(s.frame_count(), 20);
        assert_eq!(s.force_profile[0].fz, 0.0);
        for k in 1..5 {
            assert_eq!((s.trajectory[k].x_mm, s.trajectory[k].y_mm), (s.trajectory[0].x_mm, s.trajectory[0].y_mm));
            assert!(s.force_profile[k].fz >= 2.0);
            assert_eq!(s.force_profile[k].theta_x, 0.0);
        }
        assert_ne!(s.trajectory[5].x_mm, s.trajectory[0].x_mm);
    }

    #[test]
    fn single_frame_script() {
        let mp = MaterialParams::phantom();
        let s = ScanScript::raster(&ScriptOptions { frames: 1, ..Default::default() }, &mp);
        assert_eq!(s.ground_truth(), vec![(1, 0.0, 0.0, 0.0)]);
    }

    #[test]
    fn loop_revisits_start() {
        let mp = MaterialParams::phantom();
        let s = ScanScript::revisit_loop(&ScriptOptions::default(), &mp);
        let last = s.trajectory.last().unwrap();
        let near_start = s.trajectory[..30].iter().any(|w| (w.x_mm - last.x_mm).hypot(w.y_mm - last.y_mm) < 20.0);
        assert!(near_start);
    }

    #[test]
    fn given_trajectory_gets_feasible_forces() {
        let mp = MaterialParams::phantom();
        let wps: Vec<_> = (0..6).map(|i| Waypoint { x_mm: i as f64, y_mm: 0.0, yaw_deg: 0.0 }).collect();
        let s = ScanScript::along(wps.clone(), &ScriptOptions::default(), &mp);
        assert_eq!(s.trajectory, wps);
        assert_eq!(s.force_profile[0], ForceCommand::default());
        assert!(s.validate(&mp).is_ok());
    }
}
