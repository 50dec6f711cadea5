//! Dataset directory layout.
//!
//! ```text
//! frames/000001.png   8-bit grayscale, one per force row
//! forces.csv          frame_id,f1_n,f2_n,f3_n,f4_n
//! groundtruth.csv     frame_id,x_mm,y_mm,yaw_deg       (optional)
//! hooke.csv           forces plus theta_x_deg          (optional)
//! config.txt          key = value
//! ```

use crate::config::DatasetConfig;
use crate::error::CliError;
use crate::io::{create_dir, read_gray, write_atomic, write_png};
use crate::tables::{forces_from_csv, forces_to_csv, hooke_to_csv, path_from_csv, read_text, truth_to_csv};
use forcemosaic_core::pipeline::PathEstimate;
use forcemosaic_core::simulator::{
    add_sensor_noise, generate_phantom, render_frame, synthesize_sensors, ScanScript, TruthPose,
};
use forcemosaic_core::{ForceSample, Image};
use std::path::{Path, PathBuf};

pub const CONFIG_FILE: &str = "config.txt";
pub const FORCES_FILE: &str = "forces.csv";
pub const TRUTH_FILE: &str = "groundtruth.csv";
pub const HOOKE_FILE: &str = "hooke.csv";

pub fn frame_path(dir: &Path, frame_id: u32) -> PathBuf {
    dir.join("frames").join(format!("{frame_id:06}.png"))
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub config: DatasetConfig,
    pub frames: Vec<Image>,
    pub forces: Vec<ForceSample>,
    pub truth: Option<PathEstimate>,
}

/// Loads a dataset and re-applies the scanner mask to every frame.
pub fn read_dataset(dir: &Path) -> Result<Dataset, CliError> {
    if !dir.is_dir() {
        return Err(CliError::MissingFile { path: dir.into() });
    }
    let config = DatasetConfig::load(&dir.join(CONFIG_FILE)).or_else(|e| match e {
        CliError::Io { ref source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
            Err(CliError::MissingFile { path: dir.join(CONFIG_FILE) })
        }
        e => Err(e),
    })?;
    let fpath = dir.join(FORCES_FILE);
    let forces = forces_from_csv(&read_text(&fpath)?, &fpath)?;
    let (s, c) = (&config.sensor, &config.sensor.intrinsics);
    let mut frames = Vec::with_capacity(forces.len());
    for f in &forces {
        let p = frame_path(dir, f.frame_id);
        let mut img = read_gray(&p)?;
        if (img.width(), img.height()) != (s.width, s.height) {
            return Err(CliError::format(
                &p,
                0,
                format!("frame is {}x{}, config says {}x{}", img.width(), img.height(), s.width, s.height),
            ));
        }
        img.apply_circular_mask(c.cx, c.cy, s.mask_radius_px);
        img.normalize_mask();
        frames.push(img);
    }
    let tpath = dir.join(TRUTH_FILE);
    let truth = if tpath.exists() { Some(path_from_csv(&read_text(&tpath)?, &tpath)?) } else { None };
    Ok(Dataset { config, frames, forces, truth })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateOptions {
    /// Relative sensor noise level; 0 disables it.
    pub noise: f64,
    pub seed: u64,
    /// Also write a tilt-excitation table for fitting κ.
    pub hooke_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateSummary {
    pub frames: usize,
    pub path_length_mm: f64,
}

/// Margin around the trajectory covering the frame diagonal and the
/// outward stretch under load, mm.
fn footprint_margin(cfg: &DatasetConfig) -> f64 {
    let s = &cfg.sensor;
    let half_diag = (s.width as f64).hypot(s.height as f64) / 2.0 * s.intrinsics.pixel_pitch;
    half_diag * 1.2 + 5.0
}

/// Renders `script` into `out_dir` in the dataset layout.
pub fn generate_dataset(
    script: &ScanScript,
    cfg: &DatasetConfig,
    out_dir: &Path,
    opts: &GenerateOptions,
) -> Result<GenerateSummary, CliError> {
    cfg.validate()?;
    let mp = &cfg.material;
    script.validate(mp).map_err(forcemosaic_core::simulator::SimulatorError::from)?;
    // Phantom centred on the origin, large enough for every footprint.
    let reach = script.trajectory.iter().map(|w| w.x_mm.abs().max(w.y_mm.abs())).fold(0.0, f64::max);
    let side = 2.0 * (reach + footprint_margin(cfg));
    let phantom = generate_phantom(side, side, 1.0 / cfg.sensor.intrinsics.pixel_pitch, opts.seed);
    create_dir(&out_dir.join("frames"))?;
    let mut forces = Vec::with_capacity(script.frame_count());
    for (i, (wp, fc)) in script.trajectory.iter().zip(&script.force_profile).enumerate() {
        let pose = TruthPose { x_mm: wp.x_mm, y_mm: wp.y_mm, yaw: wp.yaw_deg.to_radians() };
        let id = i as u32 + 1;
        let (img, fs) = render_frame(&phantom, pose, *fc, mp, &cfg.sensor, id)?;
        write_png(&frame_path(out_dir, id), &img)?;
        forces.push(fs);
    }
    add_sensor_noise(&mut forces, opts.noise, opts.seed ^ 0x5EED);
    write_atomic(&out_dir.join(FORCES_FILE), forces_to_csv(&forces).as_bytes())?;
    write_atomic(&out_dir.join(TRUTH_FILE), truth_to_csv(&script.ground_truth()).as_bytes())?;
    write_atomic(&out_dir.join(CONFIG_FILE), cfg.to_text().as_bytes())?;
    if opts.hooke_samples > 0 {
        let rows = hooke_samples(opts.hooke_samples, cfg, opts)?;
        write_atomic(&out_dir.join(HOOKE_FILE), hooke_to_csv(&rows).as_bytes())?;
    }
    Ok(GenerateSummary { frames: script.frame_count(), path_length_mm: script.arc_length() })
}

/// Rocking the probe about x under a firm press: tilts of 1.2° to 2°
/// alternating in sign, with reference angles as the inertial unit
/// would report them.
fn hooke_samples(n: usize, cfg: &DatasetConfig, opts: &GenerateOptions) -> Result<Vec<(ForceSample, f64)>, CliError> {
    let mp = &cfg.material;
    let fz = 4.0 * mp.hooke_constant * mp.sensor_sep_x * 2.2f64.to_radians().sin() / 0.95;
    let mut rows = Vec::with_capacity(n);
    for k in 0..n {
        let mag = 1.2 + 0.8 * k as f64 / (n.max(2) - 1) as f64;
        let theta = if k % 2 == 0 { mag } else { -mag }.to_radians();
        rows.push((synthesize_sensors(k as u32 + 1, fz, theta, 0.0, mp)?, theta));
    }
    let mut forces: Vec<ForceSample> = rows.iter().map(|r| r.0).collect();
    add_sensor_noise(&mut forces, opts.noise, opts.seed ^ 0x400C);
    Ok(forces.into_iter().zip(rows).map(|(f, (_, t))| (f, t)).collect())
}
