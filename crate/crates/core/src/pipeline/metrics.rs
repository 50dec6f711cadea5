//! Path estimates and their comparison against ground truth.

use super::PipelineError;
use crate::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPoint {
    pub frame_id: u32,
    pub x_mm: f64,
    pub y_mm: f64,
    /// Rotation of the frame relative to frame 1, degrees.
    pub yaw_deg: f64,
    /// `false` when the position was extrapolated after a tracking loss.
    pub tracked: bool,
}

impl PathPoint {
    pub fn new(frame_id: u32, x_mm: f64, y_mm: f64) -> Self {
        Self { frame_id, x_mm, y_mm, yaw_deg: 0.0, tracked: true }
    }
}

/// Scanner centre per frame relative to frame 1, in frame 1's axes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PathEstimate {
    pub points: Vec<PathPoint>,
}

impl PathEstimate {
    pub fn new(points: Vec<PathPoint>) -> Self {
        Self { points }
    }

    pub fn from_xy(xy: &[(u32, f64, f64)]) -> Self {
        Self { points: xy.iter().map(|&(id, x, y)| PathPoint::new(id, x, y)).collect() }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Sum of straight segments between consecutive points, mm.
    pub fn arc_length(&self) -> f64 {
        self.points.windows(2).map(|p| (p[1].x_mm - p[0].x_mm).hypot(p[1].y_mm - p[0].y_mm)).sum()
    }

    pub fn skipped(&self) -> usize {
        self.points.iter().filter(|p| !p.tracked).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathMetrics {
    pub rmse_mm: f64,
    /// Total position error over the distance travelled, percent.
    pub error_ratio_percent: f64,
    pub per_frame_errors: Vec<f64>,
}

/// Root-mean-square and accumulated-error ratio of `est` against `truth`.
/// The travelled distance is the arc length of `truth`.
pub fn path_metrics(est: &PathEstimate, truth: &PathEstimate) -> Result<PathMetrics, PipelineError> {
    if est.len() != truth.len() {
        return Err(PipelineError::FrameMismatch { detail: FrameMismatchKind::Length(est.len(), truth.len()) });
    }
    if let Some((a, b)) = est.points.iter().zip(&truth.points).find(|(a, b)| a.frame_id != b.frame_id) {
        return Err(PipelineError::FrameMismatch { detail: FrameMismatchKind::Id(a.frame_id, b.frame_id) });
    }
    let per_frame_errors: Vec<f64> =
        est.points.iter().zip(&truth.points).map(|(a, b)| (a.x_mm - b.x_mm).hypot(a.y_mm - b.y_mm)).collect();
    let n = per_frame_errors.len();
    let rmse_mm = if n == 0 { 0.0 } else { (per_frame_errors.iter().map(|e| e * e).sum::<f64>() / n as f64).sqrt() };
    let total: f64 = per_frame_errors.iter().sum();
    let distance = truth.arc_length();
    let error_ratio_percent = if total == 0.0 {
        0.0
    } else if distance > 0.0 {
        100.0 * total / distance
    } else {
        f64::INFINITY
    };
    Ok(PathMetrics { rmse_mm, error_ratio_percent, per_frame_errors })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameMismatchKind {
    /// Estimated and true lengths.
    Length(usize, usize),
    /// First differing estimated and true frame ids.
    Id(u32, u32),
}

impl core::fmt::Display for FrameMismatchKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Self::Length(a, b) => write!(f, "{a} estimated frames against {b} true frames"),
            Self::Id(a, b) => write!(f, "estimated frame {a} paired with true frame {b}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_paths() {
        let p = PathEstimate::from_xy(&[(1, 0.0, 0.0), (2, 3.0, 4.0), (3, 3.0, 8.0)]);
        let m = path_metrics(&p, &p).unwrap();
        assert_eq!((m.rmse_mm, m.error_ratio_percent), (0.0, 0.0));
        assert_eq!(m.per_frame_errors, vec![0.0; 3]);
    }

    #[test]
    fn constant_offset() {
        let truth = PathEstimate::from_xy(&[(1, 0.0, 0.0), (2, 637.0, 0.0), (3, 1274.0, 0.0)]);
        let est = PathEstimate::from_xy(&[(1, 0.0, 1.0), (2, 637.0, 1.0), (3, 1274.0, 1.0)]);
        let m = path_metrics(&est, &truth).unwrap();
        assert_eq!(m.rmse_mm, 1.0);
        assert!((m.error_ratio_percent - 300.0 / 1274.0).abs() < 1e-12);
    }

    #[test]
    fn mismatches() {
        let a = PathEstimate::from_xy(&[(1, 0.0, 0.0)]);
        let b = PathEstimate::from_xy(&[(2, 0.0, 0.0)]);
        assert!(path_metrics(&a, &b).is_err());
        assert!(path_metrics(&a, &PathEstimate::default()).is_err());
    }
}
