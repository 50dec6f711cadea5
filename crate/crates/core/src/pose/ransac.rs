//! Seeded RANSAC over an arbitrary model.

use crate::prelude::*;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    /// Inlier residual bound, in the residual's units.
    pub threshold: f64,
    pub max_iters: usize,
    /// Probability of having drawn one clean sample before stopping early.
    pub confidence: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self { threshold: 1.0, max_iters: 2000, confidence: 0.999, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacOutcome<M> {
    pub model: M,
    pub inliers: Vec<usize>,
    pub iterations: usize,
}

fn inliers_of<T, M>(data: &[T], model: &M, residual: &impl Fn(&M, &T) -> f64, threshold: f64) -> Vec<usize> {
    data.iter()
        .enumerate()
        .filter(|(_, d)| {
            let r = residual(model, d);
            r.is_finite() && r <= threshold
        })
        .map(|(i, _)| i)
        .collect()
}

/// Best-consensus model over random minimal samples of `sample_size`,
/// refit on its inliers. `fit` must accept any number of points at or
/// above `sample_size`. Ties keep the earliest hypothesis.
pub fn ransac<T: Clone, M>(
    data: &[T],
    sample_size: usize,
    params: &RansacParams,
    fit: impl Fn(&[T]) -> Option<M>,
    residual: impl Fn(&M, &T) -> f64,
) -> Option<RansacOutcome<M>> {
    if data.len() < sample_size || sample_size == 0 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(M, Vec<usize>)> = None;
    let mut needed = params.max_iters;
    let mut iterations = 0;
    let mut scratch = Vec::with_capacity(sample_size);
    while iterations < needed.min(params.max_iters) {
        iterations += 1;
        scratch.clear();
        scratch.extend(sample(&mut rng, data.len(), sample_size).into_iter().map(|i| data[i].clone()));
        let Some(model) = fit(&scratch) else { continue };
        let inl = inliers_of(data, &model, &residual, params.threshold);
        if inl.len() > best.as_ref().map_or(0, |b| b.1.len()) {
            let w = inl.len() as f64 / data.len() as f64;
            needed = adaptive_iterations(w, sample_size, params.confidence, params.max_iters);
            best = Some((model, inl));
        }
    }
    let (mut model, mut inliers) = best?;
    // Refit on the consensus set while that grows it.
    for _ in 0..3 {
        if inliers.len() < sample_size {
            break;
        }
        let subset: Vec<T> = inliers.iter().map(|&i| data[i].clone()).collect();
        let Some(refit) = fit(&subset) else { break };
        let inl = inliers_of(data, &refit, &residual, params.threshold);
        if inl.len() < inliers.len() {
            break;
        }
        let grew = inl.len() > inliers.len();
        model = refit;
        inliers = inl;
        if !grew {
            break;
        }
    }
    Some(RansacOutcome { model, inliers, iterations })
}

/// Iterations that draw one all-inlier sample with probability `confidence`.
pub fn adaptive_iterations(inlier_ratio: f64, sample_size: usize, confidence: f64, max_iters: usize) -> usize {
    let p_good = inlier_ratio.powi(sample_size as i32);
    if p_good >= 1.0 {
        return 1;
    }
    if p_good <= 0.0 {
        return max_iters;
    }
    let n = (1.0 - confidence).ln() / (1.0 - p_good).ln();
    if !n.is_finite() {
        return max_iters;
    }
    (n.ceil() as usize).clamp(1, max_iters)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_fit_rejects_outliers() {
        // y = 2x + 1 with every fifth point corrupted.
        let data: Vec<(f64, f64)> = (0..50)
            .map(|i| {
                let x = i as f64;
                if i % 5 == 0 { (x, 100.0 - x) } else { (x, 2.0 * x + 1.0) }
            })
            .collect();
        let fit = |s: &[(f64, f64)]| {
            let n = s.len() as f64;
            let mx = s.iter().map(|p| p.0).sum::<f64>() / n;
            let my = s.iter().map(|p| p.1).sum::<f64>() / n;
            let sxx: f64 = s.iter().map(|p| (p.0 - mx).powi(2)).sum();
            if sxx == 0.0 {
                return None;
            }
            let b = s.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx;
            Some((b, my - b * mx))
        };
        let res = |m: &(f64, f64), p: &(f64, f64)| (p.1 - m.0 * p.0 - m.1).abs();
        let params = RansacParams { threshold: 0.5, seed: 3, ..Default::default() };
        let a = ransac(&data, 2, &params, fit, res).unwrap();
        assert_eq!(a.inliers.len(), 40);
        assert!((a.model.0 - 2.0).abs() < 1e-9 && (a.model.1 - 1.0).abs() < 1e-9);
        let b = ransac(&data, 2, &params, fit, res).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn adaptive_count() {
        assert_eq!(adaptive_iterations(1.0, 8, 0.999, 2000), 1);
        assert_eq!(adaptive_iterations(0.0, 8, 0.999, 2000), 2000);
        // log(0.001)/log(1-0.5^2) = 24.01
        assert_eq!(adaptive_iterations(0.5, 2, 0.999, 2000), 25);
    }
}
