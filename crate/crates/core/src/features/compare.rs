//! Side-by-side evaluation of plain SIFT and modified A-SIFT on one pair.

use super::{dedupe_matches, detect_asift, detect_sift, match_asift, match_features_with, AsiftConfig, Feature, FeatureError, Match};
use crate::image::Image;
use crate::pose::{ransac_homography, Correspondence, RansacParams};
use crate::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct MatcherStats {
    pub features: usize,
    pub matches: usize,
    /// Matches consistent with the consensus homography.
    pub inliers: Vec<Correspondence>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchComparison {
    pub reference_features: usize,
    pub sift: MatcherStats,
    /// Every per-view match counts, as in the per-view matching itself.
    pub asift: MatcherStats,
    /// A-SIFT inliers left after merging repeats across views.
    pub asift_unique_inliers: usize,
}

impl MatchComparison {
    /// A-SIFT over SIFT inlier counts; `None` when SIFT found none.
    pub fn gain(&self) -> Option<f64> {
        (!self.sift.inliers.is_empty()).then(|| self.asift.inliers.len() as f64 / self.sift.inliers.len() as f64)
    }
}

/// Plain SIFT on `reference`; plain SIFT and A-SIFT on `query`. Inliers
/// come from homography RANSAC with `params`.
pub fn compare_matchers(
    reference: &Image,
    query: &Image,
    cfg: &AsiftConfig,
    ratio: f32,
    dedupe_radius: f64,
    params: &RansacParams,
) -> Result<MatchComparison, FeatureError> {
    let r = detect_sift(reference, cfg)?;
    let q_plain = detect_sift(query, cfg)?;
    let q_views = detect_asift(query, cfg)?;
    let sift_m = match_features_with(&r, &q_plain, ratio);
    let asift_m = match_asift(&r, &q_views, ratio);
    let sift = stats(&r, &q_plain, &sift_m, params);
    let asift = stats(&r, &q_views, &asift_m, params);
    // Inliers of the merged set, re-using the same consensus test.
    let unique = dedupe_matches(&asift_m, &r, &q_views, dedupe_radius);
    let asift_unique_inliers = stats(&r, &q_views, &unique, params).inliers.len();
    Ok(MatchComparison { reference_features: r.len(), sift, asift, asift_unique_inliers })
}

fn stats(a: &[Feature], b: &[Feature], m: &[Match], params: &RansacParams) -> MatcherStats {
    let corrs: Vec<Correspondence> =
        m.iter().map(|m| Correspondence::new(a[m.query].x, a[m.query].y, b[m.train].x, b[m.train].y)).collect();
    let inliers = ransac_homography(&corrs, params)
        .map(|o| o.inliers.iter().map(|&i| corrs[i]).collect())
        .unwrap_or_default();
    MatcherStats { features: b.len(), matches: corrs.len(), inliers }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blank_pair_reports_nothing() {
        let img = Image::filled(64, 64, 90);
        let c = compare_matchers(&img, &img, &AsiftConfig::default(), 0.8, 3.0, &RansacParams::default()).unwrap();
        assert_eq!(c.reference_features, 0);
        assert!(c.sift.inliers.is_empty() && c.asift.inliers.is_empty());
        assert_eq!(c.gain(), None);
    }
}
