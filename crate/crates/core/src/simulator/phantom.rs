//! Procedural vein phantom: bright value-noise background with a dark
//! branching network of smooth thick polylines.

use crate::image::{FloatImage, Image};
use crate::features::sift::gaussian_blur;
use crate::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Rendered phantom together with its physical resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub image: Image,
    pub px_per_mm: f64,
    /// Fraction of pixels covered by veins.
    pub vein_fraction: f64,
}

impl Phantom {
    pub fn width_mm(&self) -> f64 {
        self.image.width() as f64 / self.px_per_mm
    }

    pub fn height_mm(&self) -> f64 {
        self.image.height() as f64 / self.px_per_mm
    }

    /// Phantom pixel of a plane point given in mm from the phantom centre.
    #[inline]
    pub fn to_pixel(&self, x_mm: f64, y_mm: f64) -> (f64, f64) {
        (
            x_mm * self.px_per_mm + (self.image.width() as f64 - 1.0) / 2.0,
            y_mm * self.px_per_mm + (self.image.height() as f64 - 1.0) / 2.0,
        )
    }
}

/// Target share of the surface covered by veins.
const VEIN_COVERAGE: f64 = 0.13;

pub fn generate_phantom(width_mm: f64, height_mm: f64, px_per_mm: f64, seed: u64) -> Phantom {
    assert!(width_mm > 0.0 && height_mm > 0.0 && px_per_mm > 0.0, "phantom dimensions must be positive");
    let w = (width_mm * px_per_mm).round().max(1.0) as usize;
    let h = (height_mm * px_per_mm).round().max(1.0) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut field = FloatImage::new(w, h);
    for (cell_mm, amp) in [(6.0, 22.0f32), (2.0, 14.0), (0.8, 8.0)] {
        add_value_noise(&mut field, cell_mm * px_per_mm, amp, &mut rng);
    }
    field.data.iter_mut().for_each(|v| *v += 185.0);

    let mut dark = FloatImage::new(w, h);
    let budget = VEIN_COVERAGE * (w * h) as f64;
    let mut covered = 0.0;
    while covered < budget {
        let start = (rng.random::<f64>() * w as f64, rng.random::<f64>() * h as f64);
        let heading = rng.random::<f64>() * core::f64::consts::TAU;
        let width = px_per_mm * rng.random_range(0.9..1.8);
        let depth = rng.random_range(70.0..110.0);
        covered += grow_vein(&mut dark, start, heading, width, depth, px_per_mm, &mut rng, 0);
    }
    let dark = gaussian_blur(&dark, (0.25 * px_per_mm) as f32);
    let mut vein_px = 0usize;
    let data = field
        .data
        .iter()
        .zip(&dark.data)
        .map(|(b, d)| {
            if *d > 35.0 {
                vein_px += 1;
            }
            (b - d).round().clamp(0.0, 255.0) as u8
        })
        .collect();
    let image = Image::new(w, h, data).expect("sized from dimensions");
    let smooth = gaussian_blur(&FloatImage::from_image(&image), 0.8);
    let image = Image::new(w, h, smooth.data.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect())
        .expect("sized from dimensions");
    Phantom { image, px_per_mm, vein_fraction: vein_px as f64 / (w * h) as f64 }
}

fn add_value_noise(img: &mut FloatImage, cell: f64, amp: f32, rng: &mut ChaCha8Rng) {
    let gw = (img.width as f64 / cell).ceil() as usize + 2;
    let gh = (img.height as f64 / cell).ceil() as usize + 2;
    let lattice: Vec<f32> = (0..gw * gh).map(|_| rng.random::<f32>() * 2.0 - 1.0).collect();
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    for y in 0..img.height {
        let gy = y as f64 / cell;
        let y0 = gy.floor() as usize;
        let ty = smooth(gy - y0 as f64) as f32;
        for x in 0..img.width {
            let gx = x as f64 / cell;
            let x0 = gx.floor() as usize;
            let tx = smooth(gx - x0 as f64) as f32;
            let l = |i: usize, j: usize| lattice[j * gw + i];
            let top = l(x0, y0) * (1.0 - tx) + l(x0 + 1, y0) * tx;
            let bottom = l(x0, y0 + 1) * (1.0 - tx) + l(x0 + 1, y0 + 1) * tx;
            img.data[y * img.width + x] += amp * (top * (1.0 - ty) + bottom * ty);
        }
    }
}

/// Random-walk polyline with occasional side branches. Returns the area it
/// covers, in pixels.
#[allow(clippy::too_many_arguments)]
fn grow_vein(
    dark: &mut FloatImage,
    start: (f64, f64),
    mut heading: f64,
    width: f64,
    depth: f32,
    px_per_mm: f64,
    rng: &mut ChaCha8Rng,
    generation: u32,
) -> f64 {
    let step = 2.5 * px_per_mm;
    let turn = Normal::new(0.0, 0.22).expect("valid sigma");
    let steps = rng.random_range(12..40) >> generation;
    let (mut x, mut y) = start;
    let mut covered = 0.0;
    for _ in 0..steps.max(3) {
        heading += turn.sample(rng);
        let nx = x + step * heading.cos();
        let ny = y + step * heading.sin();
        draw_segment(dark, (x, y), (nx, ny), width / 2.0, depth);
        covered += step * width;
        x = nx;
        y = ny;
        if x < -step || y < -step || x > dark.width as f64 + step || y > dark.height as f64 + step {
            break;
        }
        if generation < 3 && rng.random::<f64>() < 0.12 {
            let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let branch = heading + side * rng.random_range(0.5..1.1);
            covered += grow_vein(dark, (x, y), branch, width * 0.75, depth * 0.9, px_per_mm, rng, generation + 1);
        }
    }
    covered
}

fn draw_segment(dark: &mut FloatImage, a: (f64, f64), b: (f64, f64), half: f64, depth: f32) {
    let pad = half + 2.0;
    let x0 = (a.0.min(b.0) - pad).floor().max(0.0) as usize;
    let y0 = (a.1.min(b.1) - pad).floor().max(0.0) as usize;
    let x1 = ((a.0.max(b.0) + pad).ceil().max(0.0) as usize).min(dark.width);
    let y1 = ((a.1.max(b.1) + pad).ceil().max(0.0) as usize).min(dark.height);
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = (dx * dx + dy * dy).max(1e-12);
    for y in y0..y1 {
        for x in x0..x1 {
            let (px, py) = (x as f64 - a.0, y as f64 - a.1);
            let t = ((px * dx + py * dy) / len2).clamp(0.0, 1.0);
            let ex = px - t * dx;
            let ey = py - t * dy;
            let d = (ex * ex + ey * ey).sqrt();
            // Rounded profile, darkest on the centre line.
            let u = (d / half).min(1.0);
            let v = depth * ((1.0 - u * u).max(0.0).sqrt() as f32);
            let p = &mut dark.data[y * dark.width + x];
            if v > *p {
                *p = v;
            }
        }
    }
}
