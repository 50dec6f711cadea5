//! Difference-of-Gaussians detector and 128-D gradient histogram descriptor.
//!
//! Follows the usual Lowe/VLFeat layout: no initial upsampling, three scales
//! per octave, quadratic refinement, Hessian edge rejection, 36-bin
//! orientation histogram and a 4×4×8 trilinear descriptor. Intensities are
//! on the 0..255 scale, so the peak threshold is in grey levels.

use super::{Feature, ViewId};
use crate::image::{distance_to_invalid, FloatImage};
use crate::prelude::*;
use core::f32::consts::PI;

const TAU: f32 = 2.0 * PI;
const ORI_BINS: usize = 36;
const NBP: usize = 4;
const NBO: usize = 8;
const MAGNIF: f32 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SiftParams {
    pub peak_threshold: f32,
    pub edge_threshold: f32,
    pub sigma0: f32,
    pub scales: usize,
    pub init_sigma: f32,
    /// Features closer than `mask_margin·σ` to an invalid pixel are dropped.
    pub mask_margin: f32,
}

impl SiftParams {
    pub fn new(peak_threshold: f32, edge_threshold: f32) -> Self {
        Self { peak_threshold, edge_threshold, sigma0: 1.6, scales: 3, init_sigma: 0.5, mask_margin: 4.0 }
    }
}

/// Gaussian kernel truncated at 4σ, normalised to unit sum.
fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    let radius = (4.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f32> = (-radius..=radius)
        .map(|i| {
            let x = i as f32 / sigma;
            (-0.5 * x * x).exp()
        })
        .collect();
    let sum: f32 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable blur with edge replication.
pub(crate) fn gaussian_blur(img: &FloatImage, sigma: f32) -> FloatImage {
    if sigma <= 0.0 {
        return img.clone();
    }
    let k = gaussian_kernel(sigma);
    let (w, h) = (img.width, img.height);
    let r = (k.len() / 2) as isize;
    let mut tmp = vec![0.0f32; w * h];
    let mut padded = vec![0.0f32; w + 2 * r as usize];
    for y in 0..h {
        let row = &img.data[y * w..(y + 1) * w];
        for (i, p) in padded.iter_mut().enumerate() {
            let sx = (i as isize - r).clamp(0, w as isize - 1) as usize;
            *p = row[sx];
        }
        let out = &mut tmp[y * w..(y + 1) * w];
        for (x, o) in out.iter_mut().enumerate() {
            let win = &padded[x..x + k.len()];
            *o = win.iter().zip(&k).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = FloatImage::new(w, h);
    for y in 0..h {
        let dst = &mut out.data[y * w..(y + 1) * w];
        for (j, kv) in k.iter().enumerate() {
            let sy = (y as isize + j as isize - r).clamp(0, h as isize - 1) as usize;
            let src = &tmp[sy * w..(sy + 1) * w];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += kv * s;
            }
        }
    }
    out
}

/// Blur along y only, used for the anti-aliased tilt simulation.
pub(crate) fn gaussian_blur_y(img: &FloatImage, sigma: f32) -> FloatImage {
    if sigma <= 0.0 {
        return img.clone();
    }
    let k = gaussian_kernel(sigma);
    let (w, h) = (img.width, img.height);
    let r = (k.len() / 2) as isize;
    let mut out = FloatImage::new(w, h);
    for y in 0..h {
        let dst = &mut out.data[y * w..(y + 1) * w];
        for (j, kv) in k.iter().enumerate() {
            let sy = (y as isize + j as isize - r).clamp(0, h as isize - 1) as usize;
            let src = &img.data[sy * w..(sy + 1) * w];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += kv * s;
            }
        }
    }
    out
}

/// Gradient magnitude and angle in `[0, 2π)` for every pixel.
struct Gradient {
    width: usize,
    mag: Vec<f32>,
    ang: Vec<f32>,
}

impl Gradient {
    fn new(img: &FloatImage) -> Self {
        let (w, h) = (img.width, img.height);
        let mut mag = vec![0.0f32; w * h];
        let mut ang = vec![0.0f32; w * h];
        for y in 0..h {
            let ym = y.saturating_sub(1);
            let yp = (y + 1).min(h - 1);
            let fy = if yp - ym == 2 { 0.5 } else { 1.0 };
            for x in 0..w {
                let xm = x.saturating_sub(1);
                let xp = (x + 1).min(w - 1);
                let fx = if xp - xm == 2 { 0.5 } else { 1.0 };
                let gx = fx * (img.at(xp, y) - img.at(xm, y));
                let gy = fy * (img.at(x, yp) - img.at(x, ym));
                let i = y * w + x;
                mag[i] = (gx * gx + gy * gy).sqrt();
                ang[i] = fast_angle(gy, gx);
            }
        }
        Self { width: w, mag, ang }
    }

    #[inline]
    fn at(&self, x: usize, y: usize) -> (f32, f32) {
        let i = y * self.width + x;
        (self.mag[i], self.ang[i])
    }
}

/// `atan2(y, x)` mapped to `[0, 2π)`, accurate to about 1e-5 rad.
#[inline]
fn fast_angle(y: f32, x: f32) -> f32 {
    let ax = x.abs();
    let ay = y.abs();
    if ax == 0.0 && ay == 0.0 {
        return 0.0;
    }
    let (num, den, swap) = if ay > ax { (ax, ay, true) } else { (ay, ax, false) };
    let t = num / den;
    let t2 = t * t;
    // Minimax polynomial for atan on [0, 1].
    let mut a = t
        * (0.999_866_0
            + t2 * (-0.330_299_5 + t2 * (0.180_141_0 + t2 * (-0.085_133_0 + t2 * 0.020_835_1))));
    if swap {
        a = core::f32::consts::FRAC_PI_2 - a;
    }
    if x < 0.0 {
        a = PI - a;
    }
    if y < 0.0 {
        a = TAU - a;
    }
    if a >= TAU {
        a -= TAU;
    }
    a
}

struct Octave {
    index: usize,
    width: usize,
    height: usize,
    gauss: Vec<FloatImage>,
    dog: Vec<FloatImage>,
    grads: Vec<Option<Gradient>>,
}

impl Octave {
    fn gradient(&mut self, level: usize) -> &Gradient {
        if self.grads[level].is_none() {
            self.grads[level] = Some(Gradient::new(&self.gauss[level]));
        }
        self.grads[level].as_ref().expect("just filled")
    }
}

pub(crate) fn octave_count(width: usize, height: usize) -> usize {
    let m = width.min(height).max(1);
    let log2 = (usize::BITS - 1 - m.leading_zeros()) as isize;
    (log2 - 3).max(1) as usize
}

/// Runs the detector on a float image. `valid` marks usable pixels; invalid
/// pixels are filled with the mean of the valid ones before filtering.
pub(crate) fn detect(img: &FloatImage, valid: Option<&[bool]>, params: &SiftParams, view: ViewId) -> Vec<Feature> {
    let (w, h) = (img.width, img.height);
    let mut base = img.clone();
    let dist = valid.map(|m| {
        let (sum, n) = m
            .iter()
            .zip(&img.data)
            .filter(|(v, _)| **v)
            .fold((0.0f64, 0usize), |(s, n), (_, p)| (s + *p as f64, n + 1));
        let fill = if n > 0 { (sum / n as f64) as f32 } else { 0.0 };
        for (p, v) in base.data.iter_mut().zip(m) {
            if !*v {
                *p = fill;
            }
        }
        distance_to_invalid(w, h, |i| m[i])
    });
    if valid.is_some_and(|m| !m.iter().any(|v| *v)) {
        return Vec::new();
    }

    let s = params.scales;
    let k = 2f32.powf(1.0 / s as f32);
    let pre = (params.sigma0 * params.sigma0 - params.init_sigma * params.init_sigma).max(0.0).sqrt();
    let mut seed = gaussian_blur(&base, pre);
    let mut out = Vec::new();
    for o in 0..octave_count(w, h) {
        if seed.width < 8 || seed.height < 8 {
            break;
        }
        let mut gauss = Vec::with_capacity(s + 3);
        gauss.push(seed);
        for i in 1..s + 3 {
            let prev = params.sigma0 * k.powi(i as i32 - 1);
            let inc = prev * (k * k - 1.0).sqrt();
            let next = gaussian_blur(&gauss[i - 1], inc);
            gauss.push(next);
        }
        let dog = (0..s + 2)
            .map(|i| {
                let mut d = gauss[i + 1].clone();
                d.data.iter_mut().zip(&gauss[i].data).for_each(|(a, b)| *a -= b);
                d
            })
            .collect();
        seed = gauss[s].decimate();
        let mut oct = Octave {
            index: o,
            width: gauss[0].width,
            height: gauss[0].height,
            gauss,
            dog,
            grads: (0..s + 3).map(|_| None).collect(),
        };
        detect_octave(&mut oct, params, dist.as_deref(), w, h, view, &mut out);
    }
    out
}

fn is_extremum(dog: &[FloatImage], s: usize, x: usize, y: usize, v: f32) -> bool {
    let w = dog[s].width;
    let greater = v > 0.0;
    for ds in [s - 1, s, s + 1] {
        let d = &dog[ds].data;
        for yy in y - 1..=y + 1 {
            let row = &d[yy * w + x - 1..yy * w + x + 2];
            for (j, n) in row.iter().enumerate() {
                if ds == s && yy == y && j == 1 {
                    continue;
                }
                if (greater && *n >= v) || (!greater && *n <= v) {
                    return false;
                }
            }
        }
    }
    true
}

#[allow(clippy::too_many_arguments)]
fn detect_octave(
    oct: &mut Octave,
    params: &SiftParams,
    dist: Option<&[f32]>,
    orig_w: usize,
    orig_h: usize,
    view: ViewId,
    out: &mut Vec<Feature>,
) {
    let (w, h) = (oct.width, oct.height);
    let ns = params.scales;
    let pre_thr = 0.8 * params.peak_threshold;
    let edge = (params.edge_threshold + 1.0) * (params.edge_threshold + 1.0) / params.edge_threshold;
    let step = (1usize << oct.index) as f32;
    let mut candidates = Vec::new();
    for s in 1..=ns {
        let d = &oct.dog[s].data;
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let v = d[y * w + x];
                if v.abs() >= pre_thr && is_extremum(&oct.dog, s, x, y, v) {
                    candidates.push((x, y, s));
                }
            }
        }
    }
    for (x0, y0, s) in candidates {
        let Some((x, y, sc)) = refine(&oct.dog, x0, y0, s, params.peak_threshold, edge) else { continue };
        let ox = x * step;
        let oy = y * step;
        if !(ox >= 0.0 && oy >= 0.0 && ox <= (orig_w - 1) as f32 && oy <= (orig_h - 1) as f32) {
            continue;
        }
        let sigma_oct = params.sigma0 * 2f32.powf(sc / ns as f32);
        let sigma = sigma_oct * step;
        if let Some(dist) = dist {
            let di = dist[(oy.round() as usize).min(orig_h - 1) * orig_w + (ox.round() as usize).min(orig_w - 1)];
            if di <= params.mask_margin * sigma {
                continue;
            }
        }
        let level = (sc.round() as usize).clamp(1, ns);
        let grad = oct.gradient(level);
        for angle in orientations(grad, w, h, x, y, sigma_oct) {
            let descriptor = describe(grad, w, h, x, y, sigma_oct, angle);
            out.push(Feature {
                x: ox as f64,
                y: oy as f64,
                scale: sigma as f64,
                orientation: angle as f64,
                descriptor,
                view,
            });
        }
    }
}

/// Quadratic refinement. Returns octave-pixel position and fractional scale.
fn refine(dog: &[FloatImage], x0: usize, y0: usize, s: usize, peak: f32, edge: f32) -> Option<(f32, f32, f32)> {
    let w = dog[s].width;
    let h = dog[s].height;
    let (mut x, mut y) = (x0, y0);
    let at = |ds: usize, xx: usize, yy: usize| dog[ds].data[yy * w + xx];
    let mut b = [0.0f32; 3];
    let mut g = [0.0f32; 3];
    let mut hxx = 0.0;
    let mut hyy = 0.0;
    let mut hxy = 0.0;
    for _ in 0..5 {
        let v = at(s, x, y);
        g = [
            0.5 * (at(s, x + 1, y) - at(s, x - 1, y)),
            0.5 * (at(s, x, y + 1) - at(s, x, y - 1)),
            0.5 * (at(s + 1, x, y) - at(s - 1, x, y)),
        ];
        hxx = at(s, x + 1, y) + at(s, x - 1, y) - 2.0 * v;
        hyy = at(s, x, y + 1) + at(s, x, y - 1) - 2.0 * v;
        let hss = at(s + 1, x, y) + at(s - 1, x, y) - 2.0 * v;
        hxy = 0.25 * (at(s, x + 1, y + 1) - at(s, x + 1, y - 1) - at(s, x - 1, y + 1) + at(s, x - 1, y - 1));
        let hxs = 0.25 * (at(s + 1, x + 1, y) - at(s + 1, x - 1, y) - at(s - 1, x + 1, y) + at(s - 1, x - 1, y));
        let hys = 0.25 * (at(s + 1, x, y + 1) - at(s + 1, x, y - 1) - at(s - 1, x, y + 1) + at(s - 1, x, y - 1));
        let hm = nalgebra::Matrix3::new(hxx, hxy, hxs, hxy, hyy, hys, hxs, hys, hss);
        let sol = hm.lu().solve(&nalgebra::Vector3::new(-g[0], -g[1], -g[2]))?;
        b = [sol[0], sol[1], sol[2]];
        if !b.iter().all(|v| v.is_finite()) {
            return None;
        }
        let dx = if b[0] > 0.6 && x < w - 2 {
            1isize
        } else if b[0] < -0.6 && x > 1 {
            -1
        } else {
            0
        };
        let dy = if b[1] > 0.6 && y < h - 2 {
            1isize
        } else if b[1] < -0.6 && y > 1 {
            -1
        } else {
            0
        };
        if dx == 0 && dy == 0 {
            break;
        }
        x = (x as isize + dx) as usize;
        y = (y as isize + dy) as usize;
    }
    if b.iter().any(|v| v.abs() >= 1.5) {
        return None;
    }
    let value = at(s, x, y) + 0.5 * (g[0] * b[0] + g[1] * b[1] + g[2] * b[2]);
    if value.abs() < peak {
        return None;
    }
    let det = hxx * hyy - hxy * hxy;
    let tr = hxx + hyy;
    if det <= 0.0 || tr * tr / det >= edge {
        return None;
    }
    let fs = s as f32 + b[2];
    if !(0.0..=(dog.len() - 1) as f32).contains(&fs) {
        return None;
    }
    Some((x as f32 + b[0], y as f32 + b[1], fs))
}

fn orientations(grad: &Gradient, w: usize, h: usize, x: f32, y: f32, sigma: f32) -> Vec<f32> {
    let sw = 1.5 * sigma;
    let radius = (3.0 * sw).floor() as isize;
    let xi = (x + 0.5).floor() as isize;
    let yi = (y + 0.5).floor() as isize;
    let mut hist = [0.0f32; ORI_BINS];
    for dy in -radius..=radius {
        let yy = yi + dy;
        if yy < 1 || yy >= h as isize - 1 {
            continue;
        }
        for dx in -radius..=radius {
            let xx = xi + dx;
            if xx < 1 || xx >= w as isize - 1 {
                continue;
            }
            let ddx = xx as f32 - x;
            let ddy = yy as f32 - y;
            let r2 = ddx * ddx + ddy * ddy;
            if r2 >= (radius * radius) as f32 + 0.6 {
                continue;
            }
            let (m, a) = grad.at(xx as usize, yy as usize);
            let wgt = (-r2 / (2.0 * sw * sw)).exp();
            let fbin = ORI_BINS as f32 * a / TAU;
            let bin = (fbin - 0.5).floor();
            let rbin = fbin - bin - 0.5;
            let b0 = (bin as isize).rem_euclid(ORI_BINS as isize) as usize;
            let b1 = (b0 + 1) % ORI_BINS;
            hist[b0] += (1.0 - rbin) * m * wgt;
            hist[b1] += rbin * m * wgt;
        }
    }
    for _ in 0..6 {
        let prev = hist;
        for i in 0..ORI_BINS {
            hist[i] = (prev[(i + ORI_BINS - 1) % ORI_BINS] + prev[i] + prev[(i + 1) % ORI_BINS]) / 3.0;
        }
    }
    let max = hist.iter().copied().fold(0.0f32, f32::max);
    let mut out = Vec::new();
    if max <= 0.0 {
        return out;
    }
    for i in 0..ORI_BINS {
        let hm = hist[(i + ORI_BINS - 1) % ORI_BINS];
        let hp = hist[(i + 1) % ORI_BINS];
        let h0 = hist[i];
        if h0 > 0.8 * max && h0 > hm && h0 > hp {
            let den = hp + hm - 2.0 * h0;
            let di = if den != 0.0 { -0.5 * (hp - hm) / den } else { 0.0 };
            let th = TAU * (i as f32 + di + 0.5) / ORI_BINS as f32;
            out.push(num_traits::Euclid::rem_euclid(&th, &TAU));
            if out.len() == 4 {
                break;
            }
        }
    }
    out
}

fn describe(grad: &Gradient, w: usize, h: usize, x: f32, y: f32, sigma: f32, angle0: f32) -> [f32; 128] {
    let sbp = MAGNIF * sigma;
    let wsz = (core::f32::consts::SQRT_2 * sbp * (NBP as f32 + 1.0) / 2.0 + 0.5).floor() as isize;
    let wsigma = NBP as f32 / 2.0;
    let (st0, ct0) = angle0.sin_cos();
    let xi = (x + 0.5).floor() as isize;
    let yi = (y + 0.5).floor() as isize;
    let mut hist = [0.0f32; NBP * NBP * NBO];
    let half = (NBP / 2) as isize;
    for dy in -wsz..=wsz {
        let yy = yi + dy;
        if yy < 1 || yy >= h as isize - 1 {
            continue;
        }
        for dx in -wsz..=wsz {
            let xx = xi + dx;
            if xx < 1 || xx >= w as isize - 1 {
                continue;
            }
            let ddx = xx as f32 - x;
            let ddy = yy as f32 - y;
            let nx = (ct0 * ddx + st0 * ddy) / sbp;
            let ny = (-st0 * ddx + ct0 * ddy) / sbp;
            // Samples beyond half a bin outside the grid carry no weight.
            if nx.abs() >= half as f32 + 0.5 || ny.abs() >= half as f32 + 0.5 {
                continue;
            }
            let (m, a) = grad.at(xx as usize, yy as usize);
            let theta = num_traits::Euclid::rem_euclid(&(a - angle0), &TAU);
            let nt = NBO as f32 * theta / TAU;
            let win = (-(nx * nx + ny * ny) / (2.0 * wsigma * wsigma)).exp();
            let binx = (nx - 0.5).floor();
            let biny = (ny - 0.5).floor();
            let bint = nt.floor();
            let rbinx = nx - (binx + 0.5);
            let rbiny = ny - (biny + 0.5);
            let rbint = nt - bint;
            for dbinx in 0..2isize {
                let bx = binx as isize + dbinx;
                if bx < -half || bx >= half {
                    continue;
                }
                let wx = (1.0 - dbinx as f32 - rbinx).abs();
                for dbiny in 0..2isize {
                    let by = biny as isize + dbiny;
                    if by < -half || by >= half {
                        continue;
                    }
                    let wy = (1.0 - dbiny as f32 - rbiny).abs();
                    for dbint in 0..2isize {
                        let bt = (bint as isize + dbint).rem_euclid(NBO as isize) as usize;
                        let wt = (1.0 - dbint as f32 - rbint).abs();
                        let idx = ((by + half) as usize * NBP + (bx + half) as usize) * NBO + bt;
                        hist[idx] += win * m * wx * wy * wt;
                    }
                }
            }
        }
    }
    normalize(&mut hist);
    for v in hist.iter_mut() {
        *v = v.min(0.2);
    }
    normalize(&mut hist);
    hist
}

fn normalize(v: &mut [f32; 128]) {
    let n = v.iter().map(|a| (*a as f64) * (*a as f64)).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|a| *a = (*a as f64 / n) as f32);
    }
}
