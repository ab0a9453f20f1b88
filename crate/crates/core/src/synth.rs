//! Synthetic scenes with analytic ground truth.
//!
//! Textures are multi-octave value noise defined on the whole plane, so a
//! translated render never needs wrap-around or padding.

use crate::denseflow::FlowField;
use crate::error::Result;
use crate::imaging::Frame;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Smooth value noise. Each octave is a random lattice with the given cell
/// spacing (pixels), interpolated with a smoothstep kernel.
#[derive(Debug, Clone)]
pub struct ValueNoise {
    seed: u64,
    spacings: Vec<f64>,
    weights: Vec<f64>,
}

impl ValueNoise {
    pub fn new(seed: u64, spacings: &[f64]) -> Self {
        let raw: Vec<f64> = (0..spacings.len()).map(|k| 0.75f64.powi(k as i32)).collect();
        let total: f64 = raw.iter().sum();
        Self {
            seed,
            spacings: spacings.to_vec(),
            weights: raw.into_iter().map(|w| w / total).collect(),
        }
    }

    fn lattice(&self, octave: usize, ix: i64, iy: i64) -> f64 {
        let h = splitmix64(
            self.seed
                ^ splitmix64(octave as u64 + 1)
                ^ splitmix64((ix as u64).wrapping_mul(0x1000_0000_01B3))
                ^ splitmix64((iy as u64).wrapping_add(0x5555_5555) << 1),
        );
        (h >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Texture value in `(0.1, 0.9)`, contrast-stretched with `tanh`.
    pub fn value(&self, x: f64, y: f64) -> f64 {
        let mut acc = 0.0;
        for (k, (&s, &w)) in self.spacings.iter().zip(&self.weights).enumerate() {
            let gx = x / s;
            let gy = y / s;
            let x0 = gx.floor();
            let y0 = gy.floor();
            let fx = smoothstep(gx - x0);
            let fy = smoothstep(gy - y0);
            let (ix, iy) = (x0 as i64, y0 as i64);
            let v00 = self.lattice(k, ix, iy);
            let v10 = self.lattice(k, ix + 1, iy);
            let v01 = self.lattice(k, ix, iy + 1);
            let v11 = self.lattice(k, ix + 1, iy + 1);
            let top = v00 + fx * (v10 - v00);
            let bottom = v01 + fx * (v11 - v01);
            acc += w * (top + fy * (bottom - top));
        }
        0.5 + 0.4 * (3.0 * (acc - 0.5)).tanh()
    }

    /// Renders the texture translated by `(tx, ty)`: `frame(x, y) = value(x - tx, y - ty)`.
    pub fn render(&self, width: usize, height: usize, tx: f32, ty: f32) -> Frame {
        let (tx, ty) = (tx as f64, ty as f64);
        Frame::from_fn(width, height, |x, y| {
            self.value(x as f64 - tx, y as f64 - ty) as f32
        })
        .expect("render dimensions are positive")
    }
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Motion of one frame pair: the camera pan applied to everything, and the
/// extra motion of the patch on top of it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairMotion {
    pub camera: (f32, f32),
    pub object: (f32, f32),
}

impl PairMotion {
    pub const STATIC: PairMotion = PairMotion {
        camera: (0.0, 0.0),
        object: (0.0, 0.0),
    };
}

/// A textured background panned by the camera with a textured square patch
/// that moves on top of it.
#[derive(Debug, Clone)]
pub struct Scene {
    pub width: usize,
    pub height: usize,
    pub patch_origin: (f32, f32),
    pub patch_size: usize,
    pub pairs: Vec<PairMotion>,
    pub seed: u64,
}

impl Scene {
    /// The bundled 12-frame demo: 256×256, pairs 0–3 static, pairs 4–10 a
    /// camera pan of +8 px per pair with a 48×48 patch moving 12 px against it
    /// (−4 px in the image). A relative motion under twice the RANSAC
    /// threshold would let one translation fit patch and background alike.
    pub fn demo() -> Self {
        let moving = PairMotion {
            camera: (8.0, 0.0),
            object: (-12.0, 0.0),
        };
        let mut pairs = vec![PairMotion::STATIC; 4];
        pairs.extend(std::iter::repeat_n(moving, 7));
        Self {
            width: 256,
            height: 256,
            patch_origin: (120.0, 104.0),
            patch_size: 48,
            pairs,
            seed: 2024,
        }
    }

    pub fn frame_count(&self) -> usize {
        self.pairs.len() + 1
    }

    fn offsets(&self, frame: usize) -> ((f32, f32), (f32, f32)) {
        let mut cam = (0.0f32, 0.0f32);
        let mut obj = (0.0f32, 0.0f32);
        for p in &self.pairs[..frame] {
            cam.0 += p.camera.0;
            cam.1 += p.camera.1;
            obj.0 += p.camera.0 + p.object.0;
            obj.1 += p.camera.1 + p.object.1;
        }
        (cam, obj)
    }

    /// Patch rectangle `(x0, y0, x1, y1)` (half-open) in frame `index`.
    pub fn patch_rect(&self, index: usize) -> (f32, f32, f32, f32) {
        let (_, obj) = self.offsets(index);
        let x0 = self.patch_origin.0 + obj.0;
        let y0 = self.patch_origin.1 + obj.1;
        let s = self.patch_size as f32;
        (x0, y0, x0 + s, y0 + s)
    }

    fn in_patch(&self, index: usize, x: usize, y: usize) -> bool {
        let (x0, y0, x1, y1) = self.patch_rect(index);
        let (xf, yf) = (x as f32, y as f32);
        xf >= x0 && xf < x1 && yf >= y0 && yf < y1
    }

    pub fn render(&self, index: usize) -> Frame {
        let background = ValueNoise::new(self.seed, &[64.0, 32.0, 16.0]);
        let patch = ValueNoise::new(self.seed ^ 0xA5A5_A5A5, &[32.0, 16.0]);
        let (cam, obj) = self.offsets(index);
        Frame::from_fn(self.width, self.height, |x, y| {
            let (xf, yf) = (x as f64, y as f64);
            if self.in_patch(index, x, y) {
                patch.value(xf - obj.0 as f64, yf - obj.1 as f64) as f32
            } else {
                background.value(xf - cam.0 as f64, yf - cam.1 as f64) as f32
            }
        })
        .expect("scene dimensions are positive")
    }

    pub fn frames(&self) -> Vec<Frame> {
        (0..self.frame_count()).map(|i| self.render(i)).collect()
    }

    /// Ground-truth raw flow of pair `index`, in frame `index` coordinates.
    pub fn true_flow(&self, index: usize) -> Result<FlowField> {
        let p = self.pairs[index];
        FlowField::from_fn(self.width, self.height, |x, y| {
            if self.in_patch(index, x, y) {
                (p.camera.0 + p.object.0, p.camera.1 + p.object.1)
            } else {
                p.camera
            }
        })
    }

    /// Indices of pairs with any motion.
    pub fn moving_pairs(&self) -> Vec<usize> {
        self.pairs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p != PairMotion::STATIC)
            .map(|(i, _)| i)
            .collect()
    }
}
