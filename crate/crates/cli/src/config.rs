//! Flat `key = value` dataset configuration.
//!
//! ```text
//! # comment
//! material.youngs_modulus_pa = 16100
//! scanner.mask_radius_px = 239
//! ```
//!
//! Missing keys keep their defaults; unknown keys are rejected.

use crate::error::CliError;
use crate::number::{fmt_g6, parse_f64};
use forcemosaic_core::features::AsiftConfig;
use forcemosaic_core::simulator::SensorGeometry;
use forcemosaic_core::{CameraIntrinsics, MaterialParams};
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub material: MaterialParams,
    pub sensor: SensorGeometry,
    pub asift: AsiftConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { material: MaterialParams::phantom(), sensor: SensorGeometry::standard(), asift: AsiftConfig::default() }
    }
}

const MATERIAL_KEYS: [&str; 6] = [
    "material.youngs_modulus_pa",
    "material.poisson_ratio",
    "material.hooke_constant_n_per_mm",
    "material.scanner_area_m2",
    "material.sensor_sep_x_mm",
    "material.sensor_sep_y_mm",
];

impl DatasetConfig {
    pub fn material_entries(&self) -> Vec<(&'static str, f64)> {
        let m = &self.material;
        MATERIAL_KEYS
            .into_iter()
            .zip([m.youngs_modulus, m.poisson_ratio, m.hooke_constant, m.scanner_area, m.sensor_sep_x, m.sensor_sep_y])
            .collect()
    }

    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        let (s, c, a) = (&self.sensor, &self.sensor.intrinsics, &self.asift);
        let mut out = self.material_entries();
        out.extend([
            ("scanner.width_px", s.width as f64),
            ("scanner.height_px", s.height as f64),
            ("scanner.mask_radius_px", s.mask_radius_px),
            ("camera.fx_px", c.fx),
            ("camera.fy_px", c.fy),
            ("camera.cx_px", c.cx),
            ("camera.cy_px", c.cy),
            ("camera.pixel_pitch_mm", c.pixel_pitch),
            ("asift.stretch_ratio", a.stretch_ratio),
            ("asift.peak_threshold", a.peak_threshold),
            ("asift.edge_threshold", a.edge_threshold),
        ]);
        out
    }

    pub fn to_text(&self) -> String {
        render(&self.entries())
    }

    /// Applies every `key = value` line of `text` on top of `self`.
    pub fn apply(&mut self, text: &str, path: &Path) -> Result<(), CliError> {
        let mut ratio = None;
        let (mut peak, mut edge) = (self.asift.peak_threshold, self.asift.edge_threshold);
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| CliError::format(path, n + 1, m);
            let (key, value) = line.split_once('=').ok_or_else(|| err("expected `key = value`".into()))?;
            let (key, value) = (key.trim(), value.trim());
            let v = parse_f64(value).ok_or_else(|| err(format!("`{value}` is not a number")))?;
            let count = || -> Result<usize, CliError> {
                if v >= 1.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(err(format!("{key} must be a positive integer")))
                }
            };
            let (m, s) = (&mut self.material, &mut self.sensor);
            match key {
                "material.youngs_modulus_pa" => m.youngs_modulus = v,
                "material.poisson_ratio" => m.poisson_ratio = v,
                "material.hooke_constant_n_per_mm" => m.hooke_constant = v,
                "material.scanner_area_m2" => m.scanner_area = v,
                "material.sensor_sep_x_mm" => m.sensor_sep_x = v,
                "material.sensor_sep_y_mm" => m.sensor_sep_y = v,
                "scanner.width_px" => s.width = count()?,
                "scanner.height_px" => s.height = count()?,
                "scanner.mask_radius_px" => s.mask_radius_px = v,
                "camera.fx_px" => s.intrinsics.fx = v,
                "camera.fy_px" => s.intrinsics.fy = v,
                "camera.cx_px" => s.intrinsics.cx = v,
                "camera.cy_px" => s.intrinsics.cy = v,
                "camera.pixel_pitch_mm" => s.intrinsics.pixel_pitch = v,
                "asift.stretch_ratio" => ratio = Some(v),
                "asift.peak_threshold" => peak = v,
                "asift.edge_threshold" => edge = v,
                _ => return Err(err(format!("unknown key `{key}`"))),
            }
        }
        if let Some(r) = ratio {
            self.asift = AsiftConfig::new(r);
        }
        self.asift.peak_threshold = peak;
        self.asift.edge_threshold = edge;
        self.validate().map_err(|e| CliError::format(path, 0, e.to_string()))
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        cfg.apply(text, path)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn validate(&self) -> Result<(), forcemosaic_core::GeometryError> {
        self.material.validate()?;
        let c: &CameraIntrinsics = &self.sensor.intrinsics;
        c.validate_for(self.sensor.width, self.sensor.height)
    }
}

/// `key = value` lines with 6-significant-digit values.
pub fn render(entries: &[(&str, f64)]) -> String {
    entries.iter().map(|(k, v)| format!("{k} = {}\n", fmt_g6(*v))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let cfg = DatasetConfig::default();
        let back = DatasetConfig::parse(&cfg.to_text(), Path::new("c")).unwrap();
        assert_eq!(back, cfg);
        assert!(cfg.to_text().contains("material.youngs_modulus_pa = 16100\n"));
    }

    #[test]
    fn overrides_and_errors() {
        let p = Path::new("c.txt");
        let cfg = DatasetConfig::parse("# calibrated\nmaterial.youngs_modulus_pa = 15000 # fit\n\nasift.stretch_ratio=1\n", p).unwrap();
        assert_eq!(cfg.material.youngs_modulus, 15000.0);
        assert_eq!(cfg.asift.views().len(), 1);
        assert_eq!(cfg.material.hooke_constant, 18.0);
        for bad in ["nonsense", "material.poisson_ratio = abc", "camera.zoom = 2", "scanner.width_px = 2.5", "material.scanner_area_m2 = -1"] {
            assert!(matches!(DatasetConfig::parse(bad, p), Err(CliError::Format { .. })), "{bad}");
        }
    }
}
