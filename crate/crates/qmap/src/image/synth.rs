//! Procedural grayscale scenes.
//!
//! Deterministic piecewise-smooth images with the statistics that matter to
//! a patch prior: exactly flat regions (mass concentration), soft shading
//! and moderate-contrast edges (structure below a blind threshold), and
//! pixel-grid-aligned stripe/checker textures that recur across a corpus
//! the way surface textures recur in photographs. Everything is quantized
//! to 8-bit levels exactly like a PGM file.

use rand::Rng as _;

use super::GrayImage;
use crate::rng::{derive_seed, rng_from_seed, Rng};

struct Blob {
    cx: f64,
    cy: f64,
    r: f64,
    amp: f64,
}

/// Pixel-grid-aligned stripe texture; half-period 2 keeps the energy in the
/// coarser transform rows, where the quantizer spends more bits, and the
/// characteristic amplitude recurs across a corpus the way material weaves
/// recur in photographs.
#[derive(Clone, Copy)]
struct Texture {
    ax: f64,
    ay: f64,
    axy: f64,
}

impl Texture {
    const NONE: Texture = Texture { ax: 0.0, ay: 0.0, axy: 0.0 };

    fn at(&self, x: usize, y: usize) -> f64 {
        if self.ax == 0.0 && self.ay == 0.0 && self.axy == 0.0 {
            return 0.0;
        }
        let sign = |v: usize| if (v / 2) % 2 == 0 { 1.0 } else { -1.0 };
        let (sx, sy) = (sign(x), sign(y));
        self.ax * sx + self.ay * sy + self.axy * sx * sy
    }

    fn random(rng: &mut Rng) -> Texture {
        // one stripe direction per surface, like blinds, siding, or fabric
        let amp = 0.1 * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        if rng.gen_bool(0.5) {
            Texture { ax: amp, ay: 0.0, axy: 0.0 }
        } else {
            Texture { ax: 0.0, ay: amp, axy: 0.0 }
        }
    }
}

struct Fill {
    v: f64,
    gx: f64,
    gy: f64,
    texture: Texture,
}

impl Fill {
    fn at(&self, x: usize, y: usize, cx: f64, cy: f64) -> f64 {
        self.v + self.gx * (x as f64 - cx) + self.gy * (y as f64 - cy) + self.texture.at(x, y)
    }
}

enum Outline {
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64 },
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
}

struct Shape {
    outline: Outline,
    fill: Fill,
    feather: f64,
}

impl Shape {
    /// Coverage in [0, 1]: 1 inside, 0 outside, ramped over the feather.
    fn coverage(&self, x: f64, y: f64) -> f64 {
        let edge = match self.outline {
            Outline::Ellipse { cx, cy, rx, ry } => {
                let d = (((x - cx) / rx).powi(2) + ((y - cy) / ry).powi(2)).sqrt();
                (1.0 - d) * rx.min(ry)
            }
            Outline::Rect { x0, y0, x1, y1 } => (x - x0).min(x1 - x).min(y - y0).min(y1 - y),
        };
        ramp(edge, self.feather)
    }

    fn center(&self) -> (f64, f64) {
        match self.outline {
            Outline::Ellipse { cx, cy, .. } => (cx, cy),
            Outline::Rect { x0, y0, x1, y1 } => (0.5 * (x0 + x1), 0.5 * (y0 + y1)),
        }
    }
}

fn ramp(edge: f64, feather: f64) -> f64 {
    if feather <= 0.0 {
        return if edge >= 0.0 { 1.0 } else { 0.0 };
    }
    let t = (edge / feather + 0.5).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// One deterministic scene.
///
/// Every scene blends a woven-textured region with flat and gently shaded
/// regions, the way photographs mix fabric/foliage against walls and sky;
/// one coin decides whether the texture lives on the backdrop or on the
/// foreground shapes.
pub fn synth_scene(width: usize, height: usize, seed: u64) -> GrayImage {
    let mut rng = rng_from_seed(seed);
    let (w, h) = (width as f64, height as f64);

    let base = rng.gen_range(0.18..0.82);
    let textured_background = rng.gen_bool(0.85);
    let bg_texture = if textured_background { Texture::random(&mut rng) } else { Texture::NONE };
    // a fifth of the scenes shade the backdrop with a gentle ramp instead
    let (bg_gx, bg_gy) = if !textured_background && rng.gen_bool(0.35) {
        (rng.gen_range(-0.5..0.5) / w, rng.gen_range(-0.5..0.5) / h)
    } else {
        (0.0, 0.0)
    };

    let blobs: Vec<Blob> = (0..rng.gen_range(0..=2))
        .map(|_| Blob {
            cx: rng.gen_range(0.0..w),
            cy: rng.gen_range(0.0..h),
            r: rng.gen_range(0.12 * w.min(h)..0.3 * w.min(h)).max(4.0),
            amp: rng.gen_range(0.1..0.25) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
        })
        .collect();

    // foreground shapes take the opposite character from the backdrop, so
    // the textured and smooth areas stay comparable in size
    // foreground sizing keeps every scene near an even textured/smooth
    // split: small smooth shapes over woven backdrops, large woven shapes
    // over smooth backdrops
    let (n_shapes, lo_r, hi_r) = if textured_background {
        (rng.gen_range(2..=3), 0.13, 0.24)
    } else {
        (3, 0.24, 0.38)
    };
    let shapes: Vec<Shape> = (0..n_shapes)
        .map(|_| {
            let delta: f64 = rng.gen_range(0.1..0.3) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let v = (base + delta).clamp(0.08, 0.92);
            let texture = if textured_background {
                if rng.gen_bool(0.15) { Texture::random(&mut rng) } else { Texture::NONE }
            } else if rng.gen_bool(0.9) {
                Texture::random(&mut rng)
            } else {
                Texture::NONE
            };
            let fill = Fill { v, gx: 0.0, gy: 0.0, texture };
            let feather = if rng.gen_bool(0.4) { rng.gen_range(0.8..2.5) } else { 0.0 };
            let outline = if rng.gen_bool(0.5) {
                Outline::Ellipse {
                    cx: rng.gen_range(0.1 * w..0.9 * w),
                    cy: rng.gen_range(0.1 * h..0.9 * h),
                    rx: rng.gen_range(lo_r * w..hi_r * w).max(3.0),
                    ry: rng.gen_range(lo_r * h..hi_r * h).max(3.0),
                }
            } else {
                let x0 = rng.gen_range(-0.05 * w..0.75 * w);
                let y0 = rng.gen_range(-0.05 * h..0.75 * h);
                Outline::Rect {
                    x0,
                    y0,
                    x1: x0 + rng.gen_range(1.5 * lo_r * w..1.5 * hi_r * w),
                    y1: y0 + rng.gen_range(1.5 * lo_r * h..1.5 * hi_r * h),
                }
            };
            Shape { outline, fill, feather }
        })
        .collect();

    GrayImage::from_fn(width, height, |xi, yi| {
        let (x, y) = (xi as f64, yi as f64);
        let mut v = base + bg_gx * x + bg_gy * y + bg_texture.at(xi, yi);
        for b in &blobs {
            let d2 = ((x - b.cx) / b.r).powi(2) + ((y - b.cy) / b.r).powi(2);
            if d2 < 1.0 {
                let t = 1.0 - d2;
                v += b.amp * t * t;
            }
        }
        for s in &shapes {
            let a = s.coverage(x, y);
            if a > 0.0 {
                let (cx, cy) = s.center();
                v = v * (1.0 - a) + s.fill.at(xi, yi, cx, cy).clamp(0.0, 1.0) * a;
            }
        }
        // 8-bit levels, exactly like a PGM round trip
        (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
    })
}

/// A deterministic corpus of scenes.
pub fn synth_corpus(count: usize, width: usize, height: usize, seed: u64) -> Vec<GrayImage> {
    (0..count)
        .map(|i| synth_scene(width, height, derive_seed(seed, i as u64)))
        .collect()
}
