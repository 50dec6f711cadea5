//! CSV tables: force log, paths, calibration readings and scripts.
//!
//! Columns are located by header name, so extra columns are ignored.

use crate::error::CliError;
use crate::number::{fmt_g6, parse_f64};
use forcemosaic_core::pipeline::{PathEstimate, PathPoint};
use forcemosaic_core::simulator::{ForceCommand, Waypoint};
use forcemosaic_core::ForceSample;
use std::path::Path;

pub const FORCES_HEADER: [&str; 5] = ["frame_id", "f1_n", "f2_n", "f3_n", "f4_n"];
pub const PATH_HEADER: [&str; 4] = ["frame_id", "x_mm", "y_mm", "yaw_deg"];

/// Parsed table: rows of named columns.
pub struct Table<'a> {
    path: &'a Path,
    columns: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
}

impl<'a> Table<'a> {
    pub fn parse(text: &str, path: &'a Path) -> Result<Self, CliError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let columns = rdr
            .headers()
            .map_err(|e| CliError::format(path, 1, e.to_string()))?
            .iter()
            .map(str::to_owned)
            .collect();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| CliError::format(path, i + 2, e.to_string()))?;
            rows.push((i + 2, rec.iter().map(str::to_owned).collect()));
        }
        Ok(Self { path, columns, rows })
    }

    pub fn has(&self, name: &str) -> bool {
        self.columns.iter().any(|c| c == name)
    }

    fn column(&self, name: &str) -> Result<usize, CliError> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| CliError::format(self.path, 1, format!("missing column `{name}`")))
    }

    /// Numeric columns `names`, one vector per row.
    pub fn numbers(&self, names: &[&str]) -> Result<Vec<Vec<f64>>, CliError> {
        let idx = names.iter().map(|n| self.column(n)).collect::<Result<Vec<_>, _>>()?;
        self.rows
            .iter()
            .map(|(line, row)| {
                idx.iter()
                    .zip(names)
                    .map(|(&i, name)| {
                        let s = row.get(i).map(String::as_str).unwrap_or("");
                        parse_f64(s).ok_or_else(|| CliError::format(self.path, *line, format!("{name}: `{s}` is not a number")))
                    })
                    .collect()
            })
            .collect()
    }

    fn frame_ids(&self) -> Result<Vec<u32>, CliError> {
        let i = self.column("frame_id")?;
        self.rows
            .iter()
            .map(|(line, row)| {
                let s = row.get(i).map(String::as_str).unwrap_or("");
                s.parse().map_err(|_| CliError::format(self.path, *line, format!("frame_id: `{s}` is not a frame number")))
            })
            .collect()
    }
}

/// Reads a file, mapping a missing file to [`CliError::MissingFile`].
pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::MissingFile { path: path.into() },
        _ => CliError::io(path, e),
    })
}

pub fn write_rows(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii fields")
}

pub fn forces_to_csv(forces: &[ForceSample]) -> String {
    write_rows(
        &FORCES_HEADER,
        forces.iter().map(|f| {
            let mut r = vec![f.frame_id.to_string()];
            r.extend([f.f1, f.f2, f.f3, f.f4].map(fmt_g6));
            r
        }),
    )
}

pub fn forces_from_csv(text: &str, path: &Path) -> Result<Vec<ForceSample>, CliError> {
    let t = Table::parse(text, path)?;
    let ids = t.frame_ids()?;
    let vals = t.numbers(&FORCES_HEADER[1..])?;
    ids.into_iter()
        .zip(vals)
        .enumerate()
        .map(|(k, (id, v))| {
            ForceSample::new(id, v[0], v[1], v[2], v[3]).map_err(|e| CliError::format(path, k + 2, e.to_string()))
        })
        .collect()
}

/// Path with an optional `tracked` column (1/0).
pub fn path_to_csv(path: &PathEstimate) -> String {
    let mut header = PATH_HEADER.to_vec();
    header.push("tracked");
    write_rows(
        &header,
        path.points.iter().map(|p| {
            vec![
                p.frame_id.to_string(),
                fmt_g6(p.x_mm),
                fmt_g6(p.y_mm),
                fmt_g6(p.yaw_deg),
                u8::from(p.tracked).to_string(),
            ]
        }),
    )
}

/// Ground truth as written by the simulator.
pub fn truth_to_csv(truth: &[(u32, f64, f64, f64)]) -> String {
    write_rows(
        &PATH_HEADER,
        truth.iter().map(|&(id, x, y, yaw)| vec![id.to_string(), fmt_g6(x), fmt_g6(y), fmt_g6(yaw)]),
    )
}

/// Reads either a reconstructed path or a ground-truth table. A missing
/// `yaw_deg` reads as 0 and a missing `tracked` as tracked.
pub fn path_from_csv(text: &str, path: &Path) -> Result<PathEstimate, CliError> {
    let t = Table::parse(text, path)?;
    let ids = t.frame_ids()?;
    let xy = t.numbers(&["x_mm", "y_mm"])?;
    let yaw = if t.has("yaw_deg") { t.numbers(&["yaw_deg"])?.into_iter().map(|v| v[0]).collect() } else { vec![0.0; ids.len()] };
    let tracked = if t.has("tracked") {
        t.numbers(&["tracked"])?.into_iter().map(|v| v[0] != 0.0).collect()
    } else {
        vec![true; ids.len()]
    };
    let points = ids
        .into_iter()
        .zip(xy)
        .zip(yaw.into_iter().zip(tracked))
        .map(|((frame_id, v), (yaw_deg, tracked))| PathPoint { frame_id, x_mm: v[0], y_mm: v[1], yaw_deg, tracked })
        .collect();
    Ok(PathEstimate::new(points))
}

/// Sensor readings with the reference tilt about x used to fit κ.
pub fn hooke_to_csv(rows: &[(ForceSample, f64)]) -> String {
    let mut header = FORCES_HEADER.to_vec();
    header.push("theta_x_deg");
    write_rows(
        &header,
        rows.iter().map(|(f, th)| {
            let mut r = vec![f.frame_id.to_string()];
            r.extend([f.f1, f.f2, f.f3, f.f4, th.to_degrees()].map(fmt_g6));
            r
        }),
    )
}

pub fn hooke_from_csv(text: &str, path: &Path) -> Result<Vec<(ForceSample, f64)>, CliError> {
    let forces = forces_from_csv(text, path)?;
    let t = Table::parse(text, path)?;
    let th = t.numbers(&["theta_x_deg"])?;
    Ok(forces.into_iter().zip(th).map(|(f, v)| (f, v[0].to_radians())).collect())
}

/// Trajectory script: `x_mm,y_mm[,yaw_deg]`.
pub fn waypoints_from_csv(text: &str, path: &Path) -> Result<Vec<Waypoint>, CliError> {
    let t = Table::parse(text, path)?;
    let xy = t.numbers(&["x_mm", "y_mm"])?;
    let yaw = if t.has("yaw_deg") { t.numbers(&["yaw_deg"])?.into_iter().map(|v| v[0]).collect() } else { vec![0.0; xy.len()] };
    Ok(xy.into_iter().zip(yaw).map(|(v, yaw_deg)| Waypoint { x_mm: v[0], y_mm: v[1], yaw_deg }).collect())
}

/// Force script: `fz_n,theta_x_deg,theta_y_deg`.
pub fn force_profile_from_csv(text: &str, path: &Path) -> Result<Vec<ForceCommand>, CliError> {
    let t = Table::parse(text, path)?;
    Ok(t.numbers(&["fz_n", "theta_x_deg", "theta_y_deg"])?
        .into_iter()
        .map(|v| ForceCommand::from_degrees(v[0], v[1], v[2]))
        .collect())
}
