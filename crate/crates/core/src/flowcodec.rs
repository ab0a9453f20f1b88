//! Reversible flow ↔ RGB encoding.
//!
//! Encoding per pixel:
//!
//! ```text
//! M = sqrt(u² + v²)          sat = clamp(M / eta, 0, 1)
//! phi = atan2(v, u)          theta = phi + π, wrapped into [0, 2π)
//! hue = theta / 2π           val = 1
//! ```
//!
//! followed by the six-sector HSV→RGB conversion below. With `val` fixed at 1
//! the largest RGB channel of every encoded pixel is exactly 1.
//!
//! | sector `⌊6·hue⌋` | R | G | B |
//! |---|---|---|---|
//! | 0 | v | t | p |
//! | 1 | q | v | p |
//! | 2 | p | v | t |
//! | 3 | p | q | v |
//! | 4 | t | p | v |
//! | 5 | v | p | q |
//!
//! with `f = 6·hue − sector`, `p = v(1 − s)`, `q = v(1 − s·f)`,
//! `t = v(1 − s(1 − f))`. Arithmetic is carried out in `f64` and rounded to
//! `f32` once.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::denseflow::FlowField;
use crate::error::{Error, Result};
use crate::imaging::Frame;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodecConfig {
    /// Flow magnitude (px) that maps to full saturation.
    pub eta: f64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self { eta: 64.0 }
    }
}

impl CodecConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eta > 0.0 && self.eta.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!("eta must be positive, got {}", self.eta)))
        }
    }
}

/// Saturation below one 8-bit step decodes to zero flow. The small relative
/// slack absorbs `f32` rounding of channels that encode exactly one step.
const ZERO_SATURATION: f64 = (1.0 / 255.0) * (1.0 - 1e-5);

pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let sector = (h6.floor() as usize).min(5);
    let f = h6 - sector as f64;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// Inverse of [`hsv_to_rgb`]; hue in `[0, 1)`, hue 0 when saturation is 0.
pub fn rgb_to_hsv(rgb: [f64; 3]) -> (f64, f64, f64) {
    let [r, g, b] = rgb;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    if delta <= 0.0 {
        return (0.0, s, max);
    }
    let h6 = if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    let h = h6 / 6.0;
    (if h >= 1.0 { h - 1.0 } else { h }, s, max)
}

/// Encodes one flow vector as RGB.
pub fn encode_vector(u: f32, v: f32, eta: f64) -> [f64; 3] {
    let (u, v) = (u as f64, v as f64);
    let sat = ((u * u + v * v).sqrt() / eta).clamp(0.0, 1.0);
    let mut theta = v.atan2(u) + PI;
    if theta >= TAU {
        theta -= TAU;
    }
    hsv_to_rgb(theta / TAU, sat, 1.0)
}

/// Decodes one RGB pixel to a flow vector.
pub fn decode_vector(rgb: [f64; 3], eta: f64) -> (f64, f64) {
    let (h, s, _) = rgb_to_hsv(rgb);
    if s < ZERO_SATURATION {
        return (0.0, 0.0);
    }
    let m = s * eta;
    let phi = h * TAU - PI;
    (m * phi.cos(), m * phi.sin())
}

pub fn encode_flow(flow: &FlowField, cfg: &CodecConfig) -> Result<Frame> {
    cfg.validate()?;
    let mut pixels = Vec::with_capacity(flow.width() * flow.height() * 3);
    for (i, (&u, &v)) in flow.u().iter().zip(flow.v()).enumerate() {
        if !u.is_finite() || !v.is_finite() {
            return Err(Error::NonFinite {
                x: i % flow.width(),
                y: i / flow.width(),
            });
        }
        pixels.extend(encode_vector(u, v, cfg.eta).map(|c| (c as f32).clamp(0.0, 1.0)));
    }
    Ok(Frame::from_raw(flow.width(), flow.height(), 3, pixels))
}

pub fn decode_flow(image: &Frame, cfg: &CodecConfig) -> Result<FlowField> {
    cfg.validate()?;
    if image.channels() != 3 {
        return Err(Error::InvalidFrame(format!(
            "flow decoding needs 3 channels, got {}",
            image.channels()
        )));
    }
    let (u, v): (Vec<f32>, Vec<f32>) = image
        .pixels()
        .chunks_exact(3)
        .map(|px| {
            let (u, v) = decode_vector([px[0] as f64, px[1] as f64, px[2] as f64], cfg.eta);
            (u as f32, v as f32)
        })
        .unzip();
    FlowField::new(image.width(), image.height(), u, v)
}
