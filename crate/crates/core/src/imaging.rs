//! Frame storage and the pixel primitives shared by the flow estimators.
//!
//! Pixels are `f32` in `[0, 1]`, row-major and channel-interleaved. Eight-bit
//! quantization only happens in [`crate::storage`].

use crate::error::{Error, Result};

const LUMA_R: f32 = 0.299;
const LUMA_G: f32 = 0.587;
const LUMA_B: f32 = 0.114;

/// A single image.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<f32>,
}

impl Frame {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidFrame(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidFrame(format!(
                "channel count must be 1 or 3, got {channels}"
            )));
        }
        let expected = width * height * channels;
        if pixels.len() != expected {
            return Err(Error::InvalidFrame(format!(
                "expected {expected} pixel values, got {}",
                pixels.len()
            )));
        }
        if let Some(i) = pixels
            .iter()
            .position(|p| !p.is_finite() || !(0.0..=1.0).contains(p))
        {
            return Err(Error::InvalidFrame(format!(
                "pixel value {} at index {i} outside [0, 1]",
                pixels[i]
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels,
        })
    }

    /// Constant-valued frame; `value` is clamped into `[0, 1]`.
    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(
            width,
            height,
            channels,
            vec![value.clamp(0.0, 1.0); width * height * channels],
        )
    }

    /// Single-channel frame from a per-pixel function. Output is clamped to `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Self::new(width, height, 1, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f32> {
        self.pixels
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    pub fn same_dimensions(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn check_pair(&self, other: &Frame) -> Result<()> {
        if self.same_dimensions(other) {
            Ok(())
        } else {
            Err(Error::IncompatiblePair {
                a_width: self.width,
                a_height: self.height,
                b_width: other.width,
                b_height: other.height,
            })
        }
    }

    /// Builds a frame from trusted internal data without re-validating the range.
    pub(crate) fn from_raw(width: usize, height: usize, channels: usize, pixels: Vec<f32>) -> Self {
        debug_assert_eq!(pixels.len(), width * height * channels);
        Self {
            width,
            height,
            channels,
            pixels,
        }
    }
}

/// ITU-R BT.601 luminance. Single-channel frames are returned unchanged.
pub fn to_grayscale(frame: &Frame) -> Frame {
    if frame.channels == 1 {
        return frame.clone();
    }
    let pixels = frame
        .pixels
        .chunks_exact(3)
        .map(|rgb| (LUMA_R * rgb[0] + LUMA_G * rgb[1] + LUMA_B * rgb[2]).clamp(0.0, 1.0))
        .collect();
    Frame::from_raw(frame.width, frame.height, 1, pixels)
}

/// Bilinear resize with pixel-center alignment:
/// `src = (dst + 0.5) * (src_len / dst_len) - 0.5`, clamped to the image.
pub fn resize_bilinear(frame: &Frame, new_width: usize, new_height: usize) -> Result<Frame> {
    if new_width == 0 || new_height == 0 {
        return Err(Error::Config(format!(
            "resize target must be positive, got {new_width}x{new_height}"
        )));
    }
    let ch = frame.channels;
    let xs = axis_taps(frame.width, new_width);
    let ys = axis_taps(frame.height, new_height);
    let mut out = Vec::with_capacity(new_width * new_height * ch);
    for &(y0, y1, fy) in &ys {
        let row0 = &frame.pixels[y0 * frame.width * ch..(y0 + 1) * frame.width * ch];
        let row1 = &frame.pixels[y1 * frame.width * ch..(y1 + 1) * frame.width * ch];
        for &(x0, x1, fx) in &xs {
            for c in 0..ch {
                let top = lerp(row0[x0 * ch + c], row0[x1 * ch + c], fx);
                let bottom = lerp(row1[x0 * ch + c], row1[x1 * ch + c], fx);
                out.push(lerp(top, bottom, fy).clamp(0.0, 1.0));
            }
        }
    }
    Ok(Frame::from_raw(new_width, new_height, ch, out))
}

/// Resizes an unconstrained scalar plane (e.g. one flow component) with the
/// same sampling convention as [`resize_bilinear`].
pub(crate) fn resize_plane(
    plane: &[f32],
    width: usize,
    height: usize,
    new_width: usize,
    new_height: usize,
) -> Vec<f32> {
    let xs = axis_taps(width, new_width);
    let ys = axis_taps(height, new_height);
    let mut out = Vec::with_capacity(new_width * new_height);
    for &(y0, y1, fy) in &ys {
        let row0 = &plane[y0 * width..(y0 + 1) * width];
        let row1 = &plane[y1 * width..(y1 + 1) * width];
        for &(x0, x1, fx) in &xs {
            out.push(lerp(lerp(row0[x0], row0[x1], fx), lerp(row1[x0], row1[x1], fx), fy));
        }
    }
    out
}

fn axis_taps(src_len: usize, dst_len: usize) -> Vec<(usize, usize, f32)> {
    let scale = src_len as f64 / dst_len as f64;
    let max = (src_len - 1) as f64;
    (0..dst_len)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, max);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src_len - 1);
            (i0, i1, (s - i0 as f64) as f32)
        })
        .collect()
}

#[inline]
pub(crate) fn lerp(a: f32, b: f32, t: f32) -> f32 {
    // Clamped so rounding never leaves the [a, b] hull.
    (a + t * (b - a)).clamp(a.min(b), a.max(b))
}

/// Bilinear sample of a scalar plane with the location clamped to the domain.
#[inline]
pub(crate) fn sample_clamped(plane: &[f32], width: usize, height: usize, x: f32, y: f32) -> f32 {
    let x = x.clamp(0.0, (width - 1) as f32);
    let y = y.clamp(0.0, (height - 1) as f32);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = x - x0 as f32;
    let fy = y - y0 as f32;
    let top = lerp(plane[y0 * width + x0], plane[y0 * width + x1], fx);
    let bottom = lerp(plane[y1 * width + x0], plane[y1 * width + x1], fx);
    lerp(top, bottom, fy)
}

/// Central-difference spatial gradients with replicated borders.
pub(crate) fn central_differences(plane: &[f32], width: usize, height: usize) -> (Vec<f32>, Vec<f32>) {
    let mut ix = vec![0.0f32; width * height];
    let mut iy = vec![0.0f32; width * height];
    for y in 0..height {
        let ym = y.saturating_sub(1);
        let yp = (y + 1).min(height - 1);
        for x in 0..width {
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(width - 1);
            let i = y * width + x;
            ix[i] = 0.5 * (plane[y * width + xp] - plane[y * width + xm]);
            iy[i] = 0.5 * (plane[yp * width + x] - plane[ym * width + x]);
        }
    }
    (ix, iy)
}

/// Spatial and temporal derivatives of a single-channel pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub ix: Vec<f32>,
    pub iy: Vec<f32>,
    pub it: Vec<f32>,
}

/// `Ix`, `Iy` are central differences of `frame_a`; `It = frame_b - frame_a`.
pub fn gradients(frame_a: &Frame, frame_b: &Frame) -> Result<Gradients> {
    frame_a.check_pair(frame_b)?;
    if frame_a.channels != 1 || frame_b.channels != 1 {
        return Err(Error::InvalidFrame(
            "gradients require single-channel frames".into(),
        ));
    }
    let (ix, iy) = central_differences(&frame_a.pixels, frame_a.width, frame_a.height);
    let it = frame_b
        .pixels
        .iter()
        .zip(&frame_a.pixels)
        .map(|(b, a)| b - a)
        .collect();
    Ok(Gradients { ix, iy, it })
}
