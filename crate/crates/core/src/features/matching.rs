//! Mutual nearest-neighbour matching with Lowe's ratio test.

use super::Feature;
use crate::prelude::*;

pub const DEFAULT_RATIO: f32 = 0.8;

/// Correspondence between `a[query]` and `b[train]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub query: usize,
    pub train: usize,
    /// Euclidean descriptor distance.
    pub distance: f32,
}

pub fn match_features(a: &[Feature], b: &[Feature]) -> Vec<Match> {
    match_features_with(a, b, DEFAULT_RATIO)
}

pub fn match_features_with(a: &[Feature], b: &[Feature], ratio: f32) -> Vec<Match> {
    let idx: Vec<usize> = (0..b.len()).collect();
    match_subset(a, b, &idx, ratio)
}

/// Matches `reference` against each simulated view of `views` separately
/// and concatenates the results in view order.
pub fn match_asift(reference: &[Feature], views: &[Feature], ratio: f32) -> Vec<Match> {
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for (i, f) in views.iter().enumerate() {
        match groups.iter_mut().find(|(v, _)| *v == f.view.index) {
            Some((_, g)) => g.push(i),
            None => groups.push((f.view.index, vec![i])),
        }
    }
    groups.sort_by_key(|(v, _)| *v);
    groups.iter().flat_map(|(_, idx)| match_subset(reference, views, idx, ratio)).collect()
}

/// Drops matches whose endpoints both lie within `radius` pixels of an
/// earlier kept match. Removes the same physical correspondence found in
/// several views.
pub fn dedupe_matches(matches: &[Match], a: &[Feature], b: &[Feature], radius: f64) -> Vec<Match> {
    let r2 = radius * radius;
    let mut kept: Vec<Match> = Vec::with_capacity(matches.len());
    for m in matches {
        let (qa, tb) = (&a[m.query], &b[m.train]);
        let dup = kept.iter().any(|k| {
            let (ka, kb) = (&a[k.query], &b[k.train]);
            let da = (ka.x - qa.x).powi(2) + (ka.y - qa.y).powi(2);
            let db = (kb.x - tb.x).powi(2) + (kb.y - tb.y).powi(2);
            da <= r2 && db <= r2
        });
        if !dup {
            kept.push(*m);
        }
    }
    kept
}

#[inline]
fn dot(a: &[f32; 128], b: &[f32; 128]) -> f32 {
    let mut acc = [0.0f32; 8];
    for (ca, cb) in a.chunks_exact(8).zip(b.chunks_exact(8)) {
        for i in 0..8 {
            acc[i] += ca[i] * cb[i];
        }
    }
    acc.iter().sum()
}

fn exact_distance(a: &[f32; 128], b: &[f32; 128]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f32>().sqrt()
}

fn match_subset(a: &[Feature], b: &[Feature], b_idx: &[usize], ratio: f32) -> Vec<Match> {
    if a.is_empty() || b_idx.is_empty() {
        return Vec::new();
    }
    let norm2 = |f: &Feature| dot(&f.descriptor, &f.descriptor);
    let na: Vec<f32> = a.iter().map(norm2).collect();
    let nb: Vec<f32> = b_idx.iter().map(|&j| norm2(&b[j])).collect();
    // Best (squared distance, index into a) for every b.
    let mut col_best = vec![(f32::INFINITY, usize::MAX); b_idx.len()];
    let mut row_best = Vec::with_capacity(a.len());
    for (i, fa) in a.iter().enumerate() {
        let (mut d1, mut d2, mut j1) = (f32::INFINITY, f32::INFINITY, usize::MAX);
        for (jj, &j) in b_idx.iter().enumerate() {
            let d = (na[i] + nb[jj] - 2.0 * dot(&fa.descriptor, &b[j].descriptor)).max(0.0);
            if d < d1 {
                d2 = d1;
                d1 = d;
                j1 = jj;
            } else if d < d2 {
                d2 = d;
            }
            if d < col_best[jj].0 {
                col_best[jj] = (d, i);
            }
        }
        row_best.push((d1, d2, j1));
    }
    let mut out = Vec::new();
    for (i, &(d1, d2, jj)) in row_best.iter().enumerate() {
        if jj == usize::MAX || col_best[jj].1 != i {
            continue;
        }
        if d1.sqrt() < ratio * d2.sqrt() {
            let j = b_idx[jj];
            out.push(Match { query: i, train: j, distance: exact_distance(&a[i].descriptor, &b[j].descriptor) });
        }
    }
    out
}
