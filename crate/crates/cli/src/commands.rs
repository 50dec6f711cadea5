//! Subcommand definitions and their implementations.

use crate::config::{render, DatasetConfig};
use crate::dataset::{generate_dataset, read_dataset, GenerateOptions, HOOKE_FILE};
use crate::error::CliError;
use crate::io::{create_dir, read_gray, write_atomic, write_png, write_rgb_png};
use crate::tables::{force_profile_from_csv, hooke_from_csv, path_from_csv, path_to_csv, read_text, waypoints_from_csv};
use clap::{Args, Parser, Subcommand};
use forcemosaic_core::calibration::{calibrate_hooke, calibrate_youngs_fit, touchdown_pairs};
use forcemosaic_core::features::{compare_matchers, AsiftConfig, MatchComparison, DEFAULT_RATIO};
use forcemosaic_core::pipeline::{path_metrics, reconstruct_with, PathEstimate, PathPoint, PipelineConfig};
use forcemosaic_core::pose::RansacParams;
use forcemosaic_core::simulator::{ScanScript, ScriptOptions};
use forcemosaic_core::Image;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "forcemosaic", version, about = "Force-rectified mosaicing of contact-scanner image sequences")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic scan dataset with ground truth.
    Simulate(SimulateArgs),
    /// Rebuild the surface mosaic and scanning path of a dataset.
    Reconstruct(ReconstructArgs),
    /// Compare plain SIFT and A-SIFT inliers on an image pair.
    Match(MatchArgs),
    /// Fit Young's modulus and the Hooke constant from calibration captures.
    Calibrate(CalibrateArgs),
    /// Path error of an estimated path against ground truth.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub frames: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// `raster`, `loop`, or a CSV file with x_mm,y_mm[,yaw_deg].
    #[arg(long, default_value = "raster")]
    pub path: String,
    /// `random`, or a CSV file with fz_n,theta_x_deg,theta_y_deg per frame.
    #[arg(long, default_value = "random")]
    pub force_profile: String,
    /// Unloaded frame plus K−1 straight presses at the start, and a κ table.
    #[arg(long, default_value_t = 0)]
    pub touchdown: usize,
    /// Relative Gaussian sensor noise (0.01 = 1% of the mean sensor load).
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 2.0)]
    pub load_min: f64,
    #[arg(long, default_value_t = 15.0)]
    pub load_max: f64,
    #[arg(long, default_value_t = 10.0)]
    pub max_tilt_deg: f64,
    #[arg(long, default_value_t = 3.0)]
    pub yaw_jitter_deg: f64,
    /// Base configuration; defaults to the standard phantom and camera.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Base RANSAC seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Refit Young's modulus from the first K frames before reconstructing.
    #[arg(long, num_args = 0..=1, default_missing_value = "5", value_name = "K")]
    pub auto_calibrate: Option<usize>,
    /// Material record overriding the dataset's material keys.
    #[arg(long)]
    pub material: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    /// Image matched with plain SIFT.
    pub reference: PathBuf,
    /// Image matched with both plain SIFT and A-SIFT.
    pub query: PathBuf,
    /// Side-by-side PNG with the A-SIFT inliers drawn.
    #[arg(long)]
    pub viz: Option<PathBuf>,
    #[arg(long, default_value_t = 1.13)]
    pub stretch_ratio: f64,
    #[arg(long, default_value_t = 1.0)]
    pub threshold: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Leading frames used: one unloaded, then straight presses.
    #[arg(long, default_value_t = 5)]
    pub frames: usize,
    /// Readings with reference tilts; defaults to the dataset's hooke.csv.
    #[arg(long)]
    pub hooke: Option<PathBuf>,
    /// Where to write the material record; stdout if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    pub estimate: PathBuf,
    pub truth: PathBuf,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Reconstruct(a) => reconstruct(&a).map(|_| ()),
        Command::Match(a) => {
            let c = run_match(&a)?;
            print!("{}", match_report(&c));
            Ok(())
        }
        Command::Calibrate(a) => calibrate(&a),
        Command::Evaluate(a) => {
            let (rmse, ratio) = evaluate(&a.estimate, &a.truth)?;
            println!("rmse_mm {rmse}\nerror_ratio_percent {ratio}");
            Ok(())
        }
    }
}

pub fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let mut cfg = DatasetConfig::default();
    if let Some(p) = &a.config {
        cfg = DatasetConfig::load(p)?;
    }
    if a.frames == 0 {
        return Err(CliError::Usage("--frames must be at least 1".into()));
    }
    if !(a.noise >= 0.0) {
        return Err(CliError::Usage("--noise must be non-negative".into()));
    }
    let opts = ScriptOptions {
        frames: a.frames,
        load_min: a.load_min,
        load_max: a.load_max,
        max_tilt_deg: a.max_tilt_deg,
        yaw_jitter_deg: a.yaw_jitter_deg,
        touchdown_frames: a.touchdown,
        seed: a.seed,
        ..Default::default()
    };
    let mp = &cfg.material;
    let mut script = match a.path.as_str() {
        "raster" => ScanScript::raster(&opts, mp),
        "loop" => ScanScript::revisit_loop(&opts, mp),
        file => {
            let p = Path::new(file);
            ScanScript::along(waypoints_from_csv(&read_text(p)?, p)?, &opts, mp)
        }
    };
    if a.force_profile != "random" {
        let p = Path::new(&a.force_profile);
        let profile = force_profile_from_csv(&read_text(p)?, p)?;
        if profile.len() != script.frame_count() {
            return Err(CliError::Usage(format!(
                "force profile has {} rows but the path has {} frames",
                profile.len(),
                script.frame_count()
            )));
        }
        script.force_profile = profile;
    }
    let gen = GenerateOptions { noise: a.noise, seed: a.seed, hooke_samples: if a.touchdown > 0 { 12 } else { 0 } };
    let s = generate_dataset(&script, &cfg, &a.out, &gen)?;
    log::info!("wrote {} frames, path length {:.3} mm, to {}", s.frames, s.path_length_mm, a.out.display());
    Ok(())
}

/// What `reconstruct` wrote, with the metrics as serialized.
#[derive(Debug, Clone)]
pub struct ReconstructOutput {
    pub path: PathEstimate,
    pub metrics: serde_json::Value,
    pub youngs_modulus: f64,
}

pub fn reconstruct(a: &ReconstructArgs) -> Result<ReconstructOutput, CliError> {
    let mut ds = read_dataset(&a.dataset)?;
    if let Some(p) = &a.material {
        ds.config.apply(&read_text(p)?, p)?;
    }
    let intr = ds.config.sensor.intrinsics;
    if let Some(k) = a.auto_calibrate {
        if k < 2 {
            return Err(CliError::Usage("--auto-calibrate needs at least 2 frames".into()));
        }
        let pairs = touchdown_pairs(&ds.frames, &ds.forces, k);
        let fit = calibrate_youngs_fit(&pairs, &ds.config.material, &intr, a.seed)?;
        log::info!("auto-calibrated E = {:.1} Pa from {} matches", fit.youngs_modulus, fit.matches);
        ds.config.material.youngs_modulus = fit.youngs_modulus;
    }
    create_dir(&a.out)?;
    let (mosaic, path, inliers) = if ds.frames.len() == 1 {
        let id = ds.forces[0].frame_id;
        (ds.frames[0].clone(), PathEstimate::new(vec![PathPoint::new(id, 0.0, 0.0)]), vec![0])
    } else {
        let cfg = PipelineConfig {
            asift: ds.config.asift.clone(),
            ransac: RansacParams { seed: a.seed, ..Default::default() },
            ..Default::default()
        };
        let r = reconstruct_with(&ds.frames, &ds.forces, &ds.config.material, &intr, &cfg)?;
        (r.mosaic.canvas(), r.path, r.frames.iter().map(|f| f.inliers).collect())
    };
    if mosaic.width() > 0 && mosaic.height() > 0 {
        write_png(&a.out.join("mosaic.png"), &mosaic)?;
    }
    let text = path_to_csv(&path);
    write_atomic(&a.out.join("path.csv"), text.as_bytes())?;
    // Metrics from the values as written, so `evaluate` agrees exactly.
    let written = path_from_csv(&text, &a.out.join("path.csv"))?;
    let metrics = metrics_json(&written, ds.truth.as_ref(), &inliers)?;
    let body = serde_json::to_string_pretty(&metrics).expect("plain values") + "\n";
    write_atomic(&a.out.join("metrics.json"), body.as_bytes())?;
    Ok(ReconstructOutput { path: written, metrics, youngs_modulus: ds.config.material.youngs_modulus })
}

fn metrics_json(est: &PathEstimate, truth: Option<&PathEstimate>, inliers: &[usize]) -> Result<serde_json::Value, CliError> {
    let finite = |v: f64| if v.is_finite() { serde_json::json!(v) } else { serde_json::Value::Null };
    let (rmse, ratio) = match truth {
        Some(t) => {
            let m = path_metrics(est, t)?;
            (finite(m.rmse_mm), finite(m.error_ratio_percent))
        }
        None => (serde_json::Value::Null, serde_json::Value::Null),
    };
    Ok(serde_json::json!({
        "frames": est.len(),
        "skipped": est.skipped(),
        "rmse_mm": rmse,
        "error_ratio_percent": ratio,
        "path_length_mm": finite(est.arc_length()),
        "inlier_counts": inliers,
    }))
}

pub fn run_match(a: &MatchArgs) -> Result<MatchComparison, CliError> {
    let reference = read_gray(&a.reference)?;
    let query = read_gray(&a.query)?;
    let cfg = AsiftConfig::new(a.stretch_ratio);
    let params = RansacParams { threshold: a.threshold, seed: a.seed, ..Default::default() };
    let c = compare_matchers(&reference, &query, &cfg, DEFAULT_RATIO, PipelineConfig::default().dedupe_radius, &params)?;
    if let Some(p) = &a.viz {
        write_rgb_png(p, &draw_inliers(&reference, &query, &c))?;
    }
    Ok(c)
}

pub fn match_report(c: &MatchComparison) -> String {
    let ratio = c.gain().map_or_else(|| "n/a".to_string(), |g| format!("{g:.3}"));
    format!(
        "reference_features {}\nsift_features {}\nsift_matches {}\nsift_inliers {}\nasift_features {}\nasift_matches {}\nasift_inliers {}\nasift_unique_inliers {}\ninlier_ratio {}\n",
        c.reference_features,
        c.sift.features,
        c.sift.matches,
        c.sift.inliers.len(),
        c.asift.features,
        c.asift.matches,
        c.asift.inliers.len(),
        c.asift_unique_inliers,
        ratio
    )
}

/// Reference on the left, query on the right, inlier segments in red.
fn draw_inliers(a: &Image, b: &Image, c: &MatchComparison) -> image::RgbImage {
    let (w, h) = (a.width() + b.width(), a.height().max(b.height()));
    let mut out = image::RgbImage::new(w as u32, h as u32);
    for (img, ox) in [(a, 0), (b, a.width())] {
        for y in 0..img.height() {
            for x in 0..img.width() {
                let v = img.get(x, y);
                out.put_pixel((x + ox) as u32, y as u32, image::Rgb([v, v, v]));
            }
        }
    }
    for m in &c.asift.inliers {
        let (x0, y0) = (m.x1.x, m.x1.y);
        let (x1, y1) = (m.x2.x + a.width() as f64, m.x2.y);
        let n = (x1 - x0).abs().max((y1 - y0).abs()).ceil().max(1.0) as usize;
        for i in 0..=n {
            let t = i as f64 / n as f64;
            let (x, y) = ((x0 + t * (x1 - x0)).round(), (y0 + t * (y1 - y0)).round());
            if x >= 0.0 && y >= 0.0 && (x as usize) < w && (y as usize) < h {
                out.put_pixel(x as u32, y as u32, image::Rgb([255, 0, 0]));
            }
        }
    }
    out
}

pub fn calibrate(a: &CalibrateArgs) -> Result<(), CliError> {
    let ds = read_dataset(&a.dataset)?;
    let mut cfg = ds.config.clone();
    let intr = cfg.sensor.intrinsics;
    let fit = calibrate_youngs_fit(&touchdown_pairs(&ds.frames, &ds.forces, a.frames), &cfg.material, &intr, a.seed)?;
    cfg.material.youngs_modulus = fit.youngs_modulus;
    let hooke = a.hooke.clone().unwrap_or_else(|| a.dataset.join(HOOKE_FILE));
    if hooke.exists() {
        let rows = hooke_from_csv(&read_text(&hooke)?, &hooke)?;
        cfg.material.hooke_constant = calibrate_hooke(&rows, cfg.material.sensor_sep_x)?;
    } else if a.hooke.is_some() {
        return Err(CliError::MissingFile { path: hooke });
    } else {
        log::warn!("no {} in the dataset; keeping the configured Hooke constant", HOOKE_FILE);
    }
    let record = render(&cfg.material_entries());
    match &a.out {
        Some(p) => write_atomic(p, record.as_bytes()),
        None => {
            print!("{record}");
            Ok(())
        }
    }
}

/// RMSE and error ratio of `estimate` against `truth`, both path CSVs.
pub fn evaluate(estimate: &Path, truth: &Path) -> Result<(f64, f64), CliError> {
    let est = path_from_csv(&read_text(estimate)?, estimate)?;
    let gt = path_from_csv(&read_text(truth)?, truth)?;
    let m = path_metrics(&est, &gt)?;
    Ok((m.rmse_mm, m.error_ratio_percent))
}

