//! Growable mosaic with distance-feathered blending.

use crate::image::{distance_to_invalid, Image};
use crate::prelude::*;

/// Where a frame went into the mosaic. Offsets locate the frame's anchor
/// pixel in millimetres from the reference origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placement {
    pub frame_id: u32,
    pub offset_x_mm: f64,
    pub offset_y_mm: f64,
}

/// Half-open box in global pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Bounds {
    x0: i64,
    y0: i64,
    x1: i64,
    y1: i64,
}

impl Bounds {
    fn union(&self, o: &Bounds) -> Bounds {
        Bounds { x0: self.x0.min(o.x0), y0: self.y0.min(o.y0), x1: self.x1.max(o.x1), y1: self.y1.max(o.y1) }
    }

    fn contains(&self, o: &Bounds) -> bool {
        o.x0 >= self.x0 && o.y0 >= self.y0 && o.x1 <= self.x1 && o.y1 <= self.y1
    }

    fn width(&self) -> usize {
        (self.x1 - self.x0).max(0) as usize
    }

    fn height(&self) -> usize {
        (self.y1 - self.y0).max(0) as usize
    }
}

/// Extra pixels allocated around the content when the canvas grows.
const GROWTH_MARGIN: i64 = 128;

/// Reconstructed surface. Global pixel `(0, 0)` is the reference origin;
/// one pixel spans `1 / px_per_mm` millimetres. Every placed image is
/// positioned by its `anchor` pixel.
#[derive(Debug, Clone)]
pub struct Mosaic {
    px_per_mm: f64,
    anchor: (f64, f64),
    alloc: Bounds,
    content: Option<Bounds>,
    sum: Vec<f32>,
    weight: Vec<f32>,
    /// Frame with the largest blend weight per pixel, 0 where empty.
    owner: Vec<u32>,
    owner_weight: Vec<f32>,
    placements: Vec<Placement>,
}

impl Mosaic {
    pub fn new(px_per_mm: f64, anchor: (f64, f64)) -> Self {
        assert!(px_per_mm > 0.0 && px_per_mm.is_finite(), "resolution must be positive");
        Self {
            px_per_mm,
            anchor,
            alloc: Bounds { x0: 0, y0: 0, x1: 0, y1: 0 },
            content: None,
            sum: Vec::new(),
            weight: Vec::new(),
            owner: Vec::new(),
            owner_weight: Vec::new(),
            placements: Vec::new(),
        }
    }

    pub fn px_per_mm(&self) -> f64 {
        self.px_per_mm
    }

    pub fn anchor(&self) -> (f64, f64) {
        self.anchor
    }

    pub fn placements(&self) -> &[Placement] {
        &self.placements
    }

    pub fn is_empty(&self) -> bool {
        self.content.is_none()
    }

    /// Global pixel of the reference origin within [`Mosaic::canvas`].
    pub fn reference_origin(&self) -> (i64, i64) {
        self.content.map_or((0, 0), |c| (-c.x0, -c.y0))
    }

    /// Global position of the image's pixel (0, 0) for a placement offset.
    fn image_origin(&self, offset_mm: (f64, f64)) -> (f64, f64) {
        (offset_mm.0 * self.px_per_mm - self.anchor.0, offset_mm.1 * self.px_per_mm - self.anchor.1)
    }

    fn grow_to(&mut self, need: Bounds) {
        if self.alloc.contains(&need) {
            return;
        }
        let target = if self.alloc.width() == 0 { need } else { self.alloc.union(&need) };
        let next = Bounds {
            x0: target.x0 - GROWTH_MARGIN,
            y0: target.y0 - GROWTH_MARGIN,
            x1: target.x1 + GROWTH_MARGIN,
            y1: target.y1 + GROWTH_MARGIN,
        };
        let (w, h) = (next.width(), next.height());
        let mut sum = vec![0f32; w * h];
        let mut weight = vec![0f32; w * h];
        let mut owner = vec![0u32; w * h];
        let mut owner_weight = vec![0f32; w * h];
        let ow = self.alloc.width();
        for y in 0..self.alloc.height() {
            let dst = ((self.alloc.y0 + y as i64 - next.y0) as usize) * w + (self.alloc.x0 - next.x0) as usize;
            let src = y * ow;
            sum[dst..dst + ow].copy_from_slice(&self.sum[src..src + ow]);
            weight[dst..dst + ow].copy_from_slice(&self.weight[src..src + ow]);
            owner[dst..dst + ow].copy_from_slice(&self.owner[src..src + ow]);
            owner_weight[dst..dst + ow].copy_from_slice(&self.owner_weight[src..src + ow]);
        }
        self.alloc = next;
        self.sum = sum;
        self.weight = weight;
        self.owner = owner;
        self.owner_weight = owner_weight;
    }

    /// Blends `img` in with its anchor at `offset_mm`. Each valid pixel is
    /// weighted by its distance to the mask edge.
    pub fn stitch(&mut self, img: &Image, frame_id: u32, offset_mm: (f64, f64)) {
        self.placements.push(Placement { frame_id, offset_x_mm: offset_mm.0, offset_y_mm: offset_mm.1 });
        if img.valid_count() == 0 {
            return;
        }
        let (w, h) = (img.width(), img.height());
        let feather = distance_to_invalid(w, h, |i| img.is_valid(i % w, i / w));
        let (gx, gy) = self.image_origin(offset_mm);
        let (rx, ry) = (gx.round(), gy.round());
        let aligned = (gx - rx).abs() < 1e-6 && (gy - ry).abs() < 1e-6;
        let need = if aligned {
            Bounds { x0: rx as i64, y0: ry as i64, x1: rx as i64 + w as i64, y1: ry as i64 + h as i64 }
        } else {
            Bounds {
                x0: gx.floor() as i64,
                y0: gy.floor() as i64,
                x1: (gx + w as f64).ceil() as i64,
                y1: (gy + h as f64).ceil() as i64,
            }
        };
        self.grow_to(need);
        self.content = Some(self.content.map_or(need, |c| c.union(&need)));
        let aw = self.alloc.width();
        for y in need.y0..need.y1 {
            for x in need.x0..need.x1 {
                let sample = if aligned {
                    let (u, v) = ((x - need.x0) as usize, (y - need.y0) as usize);
                    img.is_valid(u, v).then(|| (img.get(u, v) as f32, feather[v * w + u]))
                } else {
                    let (u, v) = (x as f64 - gx, y as f64 - gy);
                    img.sample_bilinear(u, v).map(|val| (val as f32, bilinear(&feather, w, h, u, v)))
                };
                let Some((val, wt)) = sample else { continue };
                if wt <= 0.0 {
                    continue;
                }
                let i = (y - self.alloc.y0) as usize * aw + (x - self.alloc.x0) as usize;
                self.sum[i] += val * wt;
                self.weight[i] += wt;
                if wt > self.owner_weight[i] {
                    self.owner_weight[i] = wt;
                    self.owner[i] = frame_id;
                }
            }
        }
    }

    fn value_at(&self, gx: i64, gy: i64) -> Option<u8> {
        let a = &self.alloc;
        if gx < a.x0 || gy < a.y0 || gx >= a.x1 || gy >= a.y1 {
            return None;
        }
        let i = (gy - a.y0) as usize * a.width() + (gx - a.x0) as usize;
        (self.weight[i] > 0.0).then(|| (self.sum[i] / self.weight[i]).round().clamp(0.0, 255.0) as u8)
    }

    /// Frame that dominates the blend at a global pixel.
    pub fn owner_at(&self, gx: i64, gy: i64) -> Option<u32> {
        let a = &self.alloc;
        if gx < a.x0 || gy < a.y0 || gx >= a.x1 || gy >= a.y1 {
            return None;
        }
        let id = self.owner[(gy - a.y0) as usize * a.width() + (gx - a.x0) as usize];
        (id != 0).then_some(id)
    }

    /// Window of the canvas whose top-left is the global pixel `(x0, y0)`.
    pub fn window(&self, x0: i64, y0: i64, width: usize, height: usize) -> Image {
        let mut data = vec![0u8; width * height];
        let mut mask = vec![false; width * height];
        for y in 0..height {
            for x in 0..width {
                if let Some(v) = self.value_at(x0 + x as i64, y0 + y as i64) {
                    data[y * width + x] = v;
                    mask[y * width + x] = true;
                }
            }
        }
        let mut out = Image::with_mask(width, height, data, mask).expect("sized from dimensions");
        out.normalize_mask();
        out
    }

    /// The blended canvas over the bounding box of everything placed.
    pub fn canvas(&self) -> Image {
        match self.content {
            Some(c) => self.window(c.x0, c.y0, c.width(), c.height()),
            None => Image::with_mask(0, 0, Vec::new(), Vec::new()).expect("empty"),
        }
    }

    /// Global pixel of a millimetre position.
    pub fn to_global(&self, x_mm: f64, y_mm: f64) -> (f64, f64) {
        (x_mm * self.px_per_mm, y_mm * self.px_per_mm)
    }
}

fn bilinear(v: &[f32], w: usize, h: usize, x: f64, y: f64) -> f32 {
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = ((x - x0 as f64) as f32, (y - y0 as f64) as f32);
    let top = v[y0 * w + x0] * (1.0 - fx) + v[y0 * w + x1] * fx;
    let bottom = v[y1 * w + x0] * (1.0 - fx) + v[y1 * w + x1] * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Functional form of [`Mosaic::stitch`]; the frame id continues the
/// placement count.
pub fn stitch(mut mosaic: Mosaic, img: &Image, offset_mm: (f64, f64)) -> Mosaic {
    let id = mosaic.placements.len() as u32 + 1;
    mosaic.stitch(img, id, offset_mm);
    mosaic
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |x, y| ((x * 7 + y * 13) % 251) as u8)
    }

    #[test]
    fn first_image_is_the_canvas() {
        let mut img = textured(40, 30);
        img.apply_circular_mask(20.0, 15.0, 14.0);
        let m = stitch(Mosaic::new(8.0, (20.0, 15.0)), &img, (0.0, 0.0));
        assert_eq!(m.canvas(), img);
        assert_eq!(m.reference_origin(), (20, 15));
    }

    #[test]
    fn restitching_is_idempotent() {
        let img = textured(40, 30);
        let once = stitch(Mosaic::new(8.0, (0.0, 0.0)), &img, (0.0, 0.0));
        let twice = stitch(once.clone(), &img, (0.0, 0.0));
        assert_eq!(twice.canvas(), once.canvas());
        assert_eq!(twice.placements().len(), 2);
    }

    #[test]
    fn half_overlap_blends_to_midpoint() {
        let a = Image::filled(40, 20, 100);
        let b = Image::filled(40, 20, 200);
        // b starts 20 px to the right of a; ppm 1 so mm equal pixels.
        let m = stitch(stitch(Mosaic::new(1.0, (0.0, 0.0)), &a, (0.0, 0.0)), &b, (20.0, 0.0));
        let c = m.canvas();
        assert_eq!((c.width(), c.height()), (60, 20));
        // Overlap covers columns 20..40; its midline lies between 29 and 30.
        let mid = (c.get(29, 10) as f64 + c.get(30, 10) as f64) / 2.0;
        assert!((mid - 150.0).abs() <= 1.0, "{mid}");
        assert_eq!(c.get(5, 10), 100);
        assert_eq!(c.get(55, 10), 200);
    }

    #[test]
    fn canvas_grows_in_every_direction() {
        let img = textured(10, 10);
        let mut m = Mosaic::new(1.0, (5.0, 5.0));
        for (i, off) in [(0.0, 0.0), (-300.0, 0.0), (0.0, 250.0), (400.0, -200.0)].into_iter().enumerate() {
            m.stitch(&img, i as u32 + 1, off);
        }
        let c = m.canvas();
        assert_eq!((c.width(), c.height()), (710, 460));
        let (ox, oy) = m.reference_origin();
        assert_eq!(c.get((ox - 5) as usize, (oy - 5) as usize), img.get(0, 0));
        assert_eq!(m.owner_at(-300, 0), Some(2));
        assert_eq!(m.owner_at(150, 0), None);
    }

    #[test]
    fn subpixel_offset_shifts_content() {
        let img = Image::from_fn(20, 20, |x, _| (x * 10) as u8);
        let m = stitch(Mosaic::new(1.0, (0.0, 0.0)), &img, (0.5, 0.0));
        let w = m.window(5, 5, 1, 1);
        // Global x 5 is image x 4.5.
        assert_eq!(w.get(0, 0), 45);
    }
}
