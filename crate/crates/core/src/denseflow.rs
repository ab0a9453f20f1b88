//! Dense pyramidal Lucas–Kanade.
//!
//! Each pyramid level runs a fixed number of Gauss–Newton iterations. For every
//! pixel the window around it is compared against `frame_b` warped by that
//! pixel's current displacement, and the 2×2 structure-tensor normal equations
//! are solved for an update. Pixels whose smaller tensor eigenvalue falls below
//! `min_eigenvalue` keep the flow propagated from the coarser level. Pyramid
//! levels are built with a binomial blur and 2× decimation; coarse flow is
//! upsampled bilinearly and scaled by the size ratio.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{central_differences, resize_plane, sample_clamped, Frame};

/// Per-pixel displacement `(u, v)` in pixels, x to the right and y down.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f32>,
    v: Vec<f32>,
    pair: Option<(usize, usize)>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, u: Vec<f32>, v: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidFlow(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        let n = width * height;
        if u.len() != n || v.len() != n {
            return Err(Error::InvalidFlow(format!(
                "expected {n} values per component, got u={} v={}",
                u.len(),
                v.len()
            )));
        }
        if let Some(i) = u.iter().zip(&v).position(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(Error::NonFinite {
                x: i % width,
                y: i / width,
            });
        }
        Ok(Self {
            width,
            height,
            u,
            v,
            pair: None,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![0.0; width * height], vec![0.0; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> (f32, f32),
    ) -> Result<Self> {
        let mut u = Vec::with_capacity(width * height);
        let mut v = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let (a, b) = f(x, y);
                u.push(a);
                v.push(b);
            }
        }
        Self::new(width, height, u, v)
    }

    /// Tags the field with the `(source, target)` frame indices it describes.
    pub fn with_pair(mut self, source: usize, target: usize) -> Self {
        self.pair = Some((source, target));
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn u(&self) -> &[f32] {
        &self.u
    }

    pub fn v(&self) -> &[f32] {
        &self.v
    }

    pub fn pair(&self) -> Option<(usize, usize)> {
        self.pair
    }

    pub fn at(&self, x: usize, y: usize) -> (f32, f32) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    pub fn magnitude_at(&self, x: usize, y: usize) -> f32 {
        let (u, v) = self.at(x, y);
        vector_norm(u, v)
    }

    /// Bilinear sample with the location clamped to the field's domain.
    pub fn sample(&self, x: f64, y: f64) -> (f64, f64) {
        let (x, y) = (x as f32, y as f32);
        (
            sample_clamped(&self.u, self.width, self.height, x, y) as f64,
            sample_clamped(&self.v, self.width, self.height, x, y) as f64,
        )
    }

    pub fn same_dimensions(&self, other: &FlowField) -> bool {
        self.width == other.width && self.height == other.height
    }
}

#[inline]
pub(crate) fn vector_norm(u: f32, v: f32) -> f32 {
    (u * u + v * v).sqrt()
}

/// Lucas–Kanade parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LkConfig {
    /// Half-width of the square integration window.
    pub window_radius: usize,
    pub pyramid_levels: usize,
    pub iterations_per_level: usize,
    /// Gate on the smaller eigenvalue of the window-averaged structure tensor.
    pub min_eigenvalue: f32,
}

impl LkConfig {
    /// 15×15 window, three levels; used at native resolution.
    pub const fn full_resolution() -> Self {
        Self {
            window_radius: 7,
            pyramid_levels: 3,
            iterations_per_level: 3,
            min_eigenvalue: 1e-4,
        }
    }

    /// 7×7 window, two levels; used on the 32×32 selection proxy.
    pub const fn proxy() -> Self {
        Self {
            window_radius: 3,
            pyramid_levels: 2,
            iterations_per_level: 3,
            min_eigenvalue: 1e-4,
        }
    }

    pub const MIN_COARSEST_SIDE: usize = 8;

    pub fn validate(&self) -> Result<()> {
        if self.window_radius < 1 {
            return Err(Error::Config("window_radius must be >= 1".into()));
        }
        if self.pyramid_levels < 1 {
            return Err(Error::Config("pyramid_levels must be >= 1".into()));
        }
        if self.iterations_per_level < 1 {
            return Err(Error::Config("iterations_per_level must be >= 1".into()));
        }
        if !(self.min_eigenvalue.is_finite() && self.min_eigenvalue >= 0.0) {
            return Err(Error::Config("min_eigenvalue must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Checks that every pyramid level of a `width`×`height` input keeps at
    /// least 8×8 pixels.
    pub fn validate_for(&self, width: usize, height: usize) -> Result<()> {
        self.validate()?;
        let (cw, ch) = level_dims(width, height, self.pyramid_levels - 1);
        if cw < Self::MIN_COARSEST_SIDE || ch < Self::MIN_COARSEST_SIDE {
            return Err(Error::Config(format!(
                "{} pyramid levels on {width}x{height} leave a {cw}x{ch} coarsest level (< 8x8)",
                self.pyramid_levels
            )));
        }
        Ok(())
    }
}

impl Default for LkConfig {
    fn default() -> Self {
        Self::full_resolution()
    }
}

fn level_dims(width: usize, height: usize, level: usize) -> (usize, usize) {
    (0..level).fold((width, height), |(w, h), _| ((w / 2).max(1), (h / 2).max(1)))
}

struct Level {
    width: usize,
    height: usize,
    a: Vec<f32>,
    b: Vec<f32>,
}

pub fn lucas_kanade_dense(frame_a: &Frame, frame_b: &Frame, cfg: &LkConfig) -> Result<FlowField> {
    frame_a.check_pair(frame_b)?;
    if frame_a.channels() != 1 || frame_b.channels() != 1 {
        return Err(Error::InvalidFrame(
            "Lucas-Kanade requires single-channel frames".into(),
        ));
    }
    let (width, height) = (frame_a.width(), frame_a.height());
    cfg.validate_for(width, height)?;

    let mut pyramid = vec![Level {
        width,
        height,
        a: frame_a.pixels().to_vec(),
        b: frame_b.pixels().to_vec(),
    }];
    for _ in 1..cfg.pyramid_levels {
        let prev = pyramid.last().unwrap();
        let (w, h) = ((prev.width / 2).max(1), (prev.height / 2).max(1));
        let a = pyr_down(&prev.a, prev.width, prev.height, w, h);
        let b = pyr_down(&prev.b, prev.width, prev.height, w, h);
        pyramid.push(Level { width: w, height: h, a, b });
    }

    let coarsest = pyramid.last().unwrap();
    let mut dims = (coarsest.width, coarsest.height);
    let mut u = vec![0.0f32; dims.0 * dims.1];
    let mut v = vec![0.0f32; dims.0 * dims.1];

    for level in pyramid.iter().rev() {
        if (level.width, level.height) != dims {
            let sx = level.width as f32 / dims.0 as f32;
            let sy = level.height as f32 / dims.1 as f32;
            u = resize_plane(&u, dims.0, dims.1, level.width, level.height);
            v = resize_plane(&v, dims.0, dims.1, level.width, level.height);
            u.iter_mut().for_each(|x| *x *= sx);
            v.iter_mut().for_each(|x| *x *= sy);
            dims = (level.width, level.height);
        }
        refine_level(level, &mut u, &mut v, cfg);
    }

    FlowField::new(width, height, u, v)
}

fn refine_level(level: &Level, u: &mut [f32], v: &mut [f32], cfg: &LkConfig) {
    let (w, h) = (level.width, level.height);
    let (ix, iy) = central_differences(&level.a, w, h);
    let r = cfg.window_radius as isize;
    let min_eig = cfg.min_eigenvalue as f64;

    for _ in 0..cfg.iterations_per_level {
        let current_u: &[f32] = u;
        let current_v: &[f32] = v;
        let updates: Vec<Option<(f32, f32)>> = (0..h)
            .into_par_iter()
            .flat_map_iter(|y| {
                let (ix, iy) = (&ix, &iy);
                (0..w).map(move |x| {
                    let i = y * w + x;
                    let d = (current_u[i], current_v[i]);
                    solve_window(level, ix, iy, x, y, r, d, min_eig)
                })
            })
            .collect();

        for (i, up) in updates.into_iter().enumerate() {
            if let Some((du, dv)) = up {
                u[i] += du;
                v[i] += dv;
            }
        }
    }
}

/// One Gauss–Newton step for the window centred on `(cx, cy)`, every window
/// sample warped by the centre pixel's displacement `d`. Samples whose warped
/// location leaves the image are skipped. Returns `None` when the
/// window-averaged structure tensor fails the eigenvalue gate.
#[allow(clippy::too_many_arguments)]
fn solve_window(
    level: &Level,
    ix: &[f32],
    iy: &[f32],
    cx: usize,
    cy: usize,
    r: isize,
    d: (f32, f32),
    min_eig: f64,
) -> Option<(f32, f32)> {
    let (w, h) = (level.width as isize, level.height as isize);
    let x0 = (cx as isize - r).max(0);
    let x1 = (cx as isize + r).min(w - 1);
    let y0 = (cy as isize - r).max(0);
    let y1 = (cy as isize + r).min(h - 1);
    let area = ((x1 - x0 + 1) * (y1 - y0 + 1)) as f64;

    // All window samples share the same sub-pixel fraction.
    let fxs = d.0.floor();
    let fys = d.1.floor();
    let (ox, oy) = (fxs as isize, fys as isize);
    let (fx, fy) = (d.0 - fxs, d.1 - fys);
    let (w00, w10, w01, w11) = ((1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy);
    let b = &level.b;

    let (mut gxx, mut gxy, mut gyy, mut ex, mut ey) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for y in y0..=y1 {
        let sy = y + oy;
        // Rows needed for interpolation: sy, and sy+1 unless fy == 0.
        if sy < 0 || sy > h - 1 || (fy > 0.0 && sy + 1 > h - 1) {
            continue;
        }
        let row0 = (sy * w) as usize;
        let row1 = if fy > 0.0 { ((sy + 1) * w) as usize } else { row0 };
        for x in x0..=x1 {
            let sx = x + ox;
            if sx < 0 || sx > w - 1 || (fx > 0.0 && sx + 1 > w - 1) {
                continue;
            }
            let c0 = sx as usize;
            let c1 = if fx > 0.0 { c0 + 1 } else { c0 };
            let warped = w00 * b[row0 + c0] + w10 * b[row0 + c1] + w01 * b[row1 + c0] + w11 * b[row1 + c1];
            let i = (y * w + x) as usize;
            let (gx, gy) = (ix[i] as f64, iy[i] as f64);
            let it = (warped - level.a[i]) as f64;
            gxx += gx * gx;
            gxy += gx * gy;
            gyy += gy * gy;
            ex += gx * it;
            ey += gy * it;
        }
    }

    let (axx, axy, ayy) = (gxx / area, gxy / area, gyy / area);
    let half_trace = 0.5 * (axx + ayy);
    let disc = (0.25 * (axx - ayy).powi(2) + axy * axy).sqrt();
    if half_trace - disc < min_eig {
        return None;
    }
    let det = gxx * gyy - gxy * gxy;
    let du = (-gyy * ex + gxy * ey) / det;
    let dv = (-gxx * ey + gxy * ex) / det;
    Some((du as f32, dv as f32))
}

/// Binomial 5-tap blur followed by center-aligned 2× decimation.
fn pyr_down(plane: &[f32], w: usize, h: usize, nw: usize, nh: usize) -> Vec<f32> {
    const K: [f32; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = (0..5)
                .map(|k| K[k] * plane[y * w + clamp(x as isize + k as isize - 2, w)])
                .sum();
        }
    }
    let mut blurred = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            blurred[y * w + x] = (0..5)
                .map(|k| K[k] * tmp[clamp(y as isize + k as isize - 2, h) * w + x])
                .sum();
        }
    }
    resize_plane(&blurred, w, h, nw, nh)
}

/// Per-pixel Euclidean norm of the flow vectors.
pub fn motion_magnitudes(flow: &FlowField) -> Vec<f32> {
    flow.u
        .iter()
        .zip(&flow.v)
        .map(|(&u, &v)| vector_norm(u, v))
        .collect()
}
