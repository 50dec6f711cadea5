//! Inverse-mapped resampling. Every output pixel asks a mapping for its
//! source position; the output mask records which pixels found valid data.

use crate::image::{Image, Interpolation};
use crate::prelude::*;
use nalgebra::{Matrix3, Vector3};

/// Resamples `src` onto a `width`×`height` grid. `map` returns the source
/// position of an output pixel, or `None` when it has no preimage.
/// Pixels without a valid source are zero and masked invalid.
pub fn warp_inverse<F>(src: &Image, width: usize, height: usize, interp: Interpolation, map: F) -> Image
where
    F: Fn(f64, f64) -> Option<(f64, f64)>,
{
    let mut data = vec![0u8; width * height];
    let mut mask = vec![false; width * height];
    for y in 0..height {
        for x in 0..width {
            let Some((sx, sy)) = map(x as f64, y as f64) else { continue };
            if let Some(v) = src.sample(sx, sy, interp) {
                let i = y * width + x;
                data[i] = quantize(v);
                mask[i] = true;
            }
        }
    }
    let mut out = Image::with_mask(width, height, data, mask).expect("buffers sized from dimensions");
    out.normalize_mask();
    out
}

/// Warps through a homography `h` that maps output pixels to source pixels.
pub fn warp_homography(src: &Image, h: &Matrix3<f64>, width: usize, height: usize, interp: Interpolation) -> Image {
    warp_inverse(src, width, height, interp, |x, y| apply_homography(h, x, y))
}

/// `h·(x, y, 1)` dehomogenised; `None` on or behind the line at infinity.
#[inline]
pub fn apply_homography(h: &Matrix3<f64>, x: f64, y: f64) -> Option<(f64, f64)> {
    let p = h * Vector3::new(x, y, 1.0);
    (p.z.abs() > 1e-12).then(|| (p.x / p.z, p.y / p.z))
}

#[inline]
pub(crate) fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> Image {
        Image::from_fn(20, 15, |x, y| (x * 7 + y * 3) as u8)
    }

    #[test]
    fn identity_map_is_bit_exact() {
        let img = ramp();
        for interp in [Interpolation::Nearest, Interpolation::Bilinear] {
            let out = warp_homography(&img, &Matrix3::identity(), 20, 15, interp);
            assert_eq!(out, img);
        }
    }

    #[test]
    fn translation_shifts_and_masks() {
        let img = ramp();
        let mut h = Matrix3::identity();
        h[(0, 2)] = 3.0;
        let out = warp_homography(&img, &h, 20, 15, Interpolation::Nearest);
        assert_eq!(out.get(0, 0), img.get(3, 0));
        assert!(!out.is_valid(17, 4));
        assert!(out.is_valid(16, 4));
    }
}
