//! Normalised eight-point estimation of the fundamental matrix.

use super::{Correspondence, PoseError};
use crate::geometry::CameraIntrinsics;
use crate::prelude::*;
use nalgebra::{DMatrix, Matrix3, SMatrix, SVector, SymmetricEigen, Vector2, Vector3};

/// Rank-2 fundamental matrix with unit Frobenius norm. Reference pixels
/// `x1` and frame pixels `x2` satisfy `x2ᵀ·F·x1 = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalMatrix(Matrix3<f64>);

impl FundamentalMatrix {
    /// Scales to unit norm with a fixed sign (largest entry positive).
    pub fn from_matrix(m: Matrix3<f64>) -> Option<Self> {
        let n = m.norm();
        if !(n > 0.0 && n.is_finite()) {
            return None;
        }
        let mut f = m / n;
        let pivot = f.iter().copied().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
        if pivot < 0.0 {
            f = -f;
        }
        Some(Self(f))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Algebraic residual `x2ᵀ·F·x1`.
    pub fn residual(&self, c: &Correspondence) -> f64 {
        c.x2.push(1.0).dot(&(self.0 * c.x1.push(1.0)))
    }

    /// First-order geometric distance in pixels (square root of the
    /// Sampson error).
    pub fn sampson(&self, c: &Correspondence) -> f64 {
        let x1 = c.x1.push(1.0);
        let x2 = c.x2.push(1.0);
        let fx1 = self.0 * x1;
        let ftx2 = self.0.transpose() * x2;
        let e = x2.dot(&fx1);
        let den = fx1.x * fx1.x + fx1.y * fx1.y + ftx2.x * ftx2.x + ftx2.y * ftx2.y;
        if den <= 0.0 {
            return f64::INFINITY;
        }
        (e * e / den).sqrt()
    }
}

/// Similarity that moves the centroid to the origin and the mean distance
/// to √2.
pub(crate) fn hartley(points: &[Vector2<f64>]) -> Option<Matrix3<f64>> {
    let n = points.len() as f64;
    let c = points.iter().fold(Vector2::zeros(), |a, p| a + p) / n;
    let mean = points.iter().map(|p| (p - c).norm()).sum::<f64>() / n;
    if !(mean > 1e-300) {
        return None;
    }
    let s = core::f64::consts::SQRT_2 / mean;
    Some(Matrix3::new(s, 0.0, -s * c.x, 0.0, s, -s * c.y, 0.0, 0.0, 1.0))
}

#[inline]
pub(crate) fn apply(t: &Matrix3<f64>, p: &Vector2<f64>) -> Vector2<f64> {
    let q = t * Vector3::new(p.x, p.y, 1.0);
    Vector2::new(q.x / q.z, q.y / q.z)
}

/// Ratio of the eighth to the first singular value below which the design
/// matrix is treated as rank deficient.
const DEGENERACY_RATIO: f64 = 1e-6;

pub fn eight_point(corrs: &[Correspondence], intrinsics: &CameraIntrinsics) -> Result<FundamentalMatrix, PoseError> {
    weighted_eight_point(corrs, None, intrinsics)
}

/// Eight-point fit with each equation scaled by its weight.
pub(crate) fn weighted_eight_point(
    corrs: &[Correspondence],
    weights: Option<&[f64]>,
    intrinsics: &CameraIntrinsics,
) -> Result<FundamentalMatrix, PoseError> {
    if corrs.len() < 8 {
        return Err(PoseError::TooFewCorrespondences { needed: 8, got: corrs.len() });
    }
    let kinv = intrinsics.inverse_matrix();
    let n1: Vec<Vector2<f64>> = corrs.iter().map(|c| apply(&kinv, &c.x1)).collect();
    let n2: Vec<Vector2<f64>> = corrs.iter().map(|c| apply(&kinv, &c.x2)).collect();
    let t1 = hartley(&n1).ok_or(PoseError::Degenerate)?;
    let t2 = hartley(&n2).ok_or(PoseError::Degenerate)?;
    let rows = corrs.len().max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (p1, p2)) in n1.iter().zip(&n2).enumerate() {
        let p = apply(&t1, p1);
        let q = apply(&t2, p2);
        let row = [q.x * p.x, q.x * p.y, q.x, q.y * p.x, q.y * p.y, q.y, p.x, p.y, 1.0];
        let w = weights.map_or(1.0, |w| w[i]);
        for (j, v) in row.iter().enumerate() {
            a[(i, j)] = w * v;
        }
    }
    let svd = a.svd(false, true);
    let vt = svd.v_t.ok_or(PoseError::Degenerate)?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
    if sv[order[7]] < DEGENERACY_RATIO * sv[order[0]] {
        return Err(PoseError::Degenerate);
    }
    let null = vt.row(order[8]);
    let f = Matrix3::new(null[0], null[1], null[2], null[3], null[4], null[5], null[6], null[7], null[8]);
    let f = enforce_rank2(&f);
    // Undo the normalisations: pixel F = K⁻ᵀ·T2ᵀ·F̂·T1·K⁻¹.
    let full = kinv.transpose() * t2.transpose() * f * t1 * kinv;
    FundamentalMatrix::from_matrix(full).ok_or(PoseError::Degenerate)
}

/// Hartley-normalised design rows with the maps back to pixel F:
/// `F = L·F̂·R`.
fn design_rows(
    corrs: &[Correspondence],
    intrinsics: &CameraIntrinsics,
) -> Result<(Vec<SVector<f64, 9>>, Matrix3<f64>, Matrix3<f64>), PoseError> {
    let kinv = intrinsics.inverse_matrix();
    let n1: Vec<Vector2<f64>> = corrs.iter().map(|c| apply(&kinv, &c.x1)).collect();
    let n2: Vec<Vector2<f64>> = corrs.iter().map(|c| apply(&kinv, &c.x2)).collect();
    let t1 = hartley(&n1).ok_or(PoseError::Degenerate)?;
    let t2 = hartley(&n2).ok_or(PoseError::Degenerate)?;
    let rows = n1
        .iter()
        .zip(&n2)
        .map(|(p1, p2)| {
            let (p, q) = (apply(&t1, p1), apply(&t2, p2));
            SVector::<f64, 9>::from_column_slice(&[q.x * p.x, q.x * p.y, q.x, q.y * p.x, q.y * p.y, q.y, p.x, p.y, 1.0])
        })
        .collect();
    Ok((rows, kinv.transpose() * t2.transpose(), t1 * kinv))
}

fn normal_matrix(rows: &[SVector<f64, 9>]) -> SMatrix<f64, 9, 9> {
    rows.iter().map(|r| r * r.transpose()).sum()
}

/// Ratio of the two smallest eigenvalues of the normalised normal matrix.
/// Near 1 when the points cannot single out one epipolar geometry, as
/// for a planar scene.
pub(crate) fn null_space_gap(corrs: &[Correspondence], intrinsics: &CameraIntrinsics) -> Result<f64, PoseError> {
    let (rows, _, _) = design_rows(corrs, intrinsics)?;
    let mut ev: Vec<f64> = SymmetricEigen::new(normal_matrix(&rows)).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev[1] / ev[0].max(f64::MIN_POSITIVE))
}

/// Flags correspondences whose Sampson distance exceeds `threshold` under
/// the least-squares fit of all the others. Each deletion is a rank-one
/// downdate of the normal matrix.
pub(crate) fn deletion_outliers(
    corrs: &[Correspondence],
    intrinsics: &CameraIntrinsics,
    threshold: f64,
) -> Result<Vec<bool>, PoseError> {
    if corrs.len() < 10 {
        return Ok(vec![false; corrs.len()]);
    }
    let (rows, left, right) = design_rows(corrs, intrinsics)?;
    let normal = normal_matrix(&rows);
    Ok(rows
        .iter()
        .zip(corrs)
        .map(|(r, c)| {
            let eig = SymmetricEigen::new(normal - r * r.transpose());
            let (k, _) = eig.eigenvalues.argmin();
            let v = eig.eigenvectors.column(k);
            let f = Matrix3::new(v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]);
            FundamentalMatrix::from_matrix(left * enforce_rank2(&f) * right).is_some_and(|f| !(f.sampson(c) <= threshold))
        })
        .collect())
}

fn enforce_rank2(f: &Matrix3<f64>) -> Matrix3<f64> {
    let mut svd = f.svd(true, true);
    let (imin, _) = svd.singular_values.argmin();
    svd.singular_values[imin] = 0.0;
    svd.recompose().unwrap_or(*f)
}
