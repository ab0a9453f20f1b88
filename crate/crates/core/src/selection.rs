//! Motion-aware frame selection.
//!
//! Each consecutive pair is reduced to a `proxy_size`² grayscale proxy, run
//! through Lucas–Kanade, and summarised by the nearest-rank top-k% flow
//! magnitude, rescaled to native pixels. Pairs whose proxy exceeds the
//! width-rescaled threshold are kept; runs of consecutive kept pairs become
//! frame segments.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denseflow::{lucas_kanade_dense, motion_magnitudes, LkConfig};
use crate::error::{Error, Result};
use crate::imaging::{resize_bilinear, to_grayscale, Frame};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Side of the square proxy the pair is downsampled to.
    pub proxy_size: usize,
    pub top_k_percent: f64,
    /// Motion threshold in pixels at `reference_width`.
    pub threshold_px: f64,
    pub reference_width: usize,
    pub lk: LkConfig,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            proxy_size: 32,
            top_k_percent: 10.0,
            threshold_px: 5.0,
            reference_width: 256,
            lk: LkConfig::proxy(),
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.proxy_size < 8 {
            return Err(Error::Config("proxy_size must be >= 8".into()));
        }
        if !(self.top_k_percent > 0.0 && self.top_k_percent <= 100.0) {
            return Err(Error::Config("top_k_percent must lie in (0, 100]".into()));
        }
        if !(self.threshold_px > 0.0 && self.threshold_px.is_finite()) {
            return Err(Error::Config("threshold_px must be > 0".into()));
        }
        if self.reference_width == 0 {
            return Err(Error::Config("reference_width must be >= 1".into()));
        }
        self.lk.validate_for(self.proxy_size, self.proxy_size)
    }

    /// Threshold expressed at a frame `width`.
    pub fn threshold_at(&self, width: usize) -> f64 {
        self.threshold_px * width as f64 / self.reference_width as f64
    }
}

/// Nearest-rank top-k% value: the ⌈k/100 · n⌉-th largest element.
/// Returns 0 for an empty slice.
pub fn top_k_percentile(values: &[f32], top_k_percent: f64) -> f32 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len();
    let rank = ((top_k_percent * n as f64) / 100.0).ceil().clamp(1.0, n as f64) as usize;
    let mut scratch = values.to_vec();
    let (_, nth, _) = scratch.select_nth_unstable_by(rank - 1, |a, b| b.total_cmp(a));
    *nth
}

/// Scalar motion of a frame pair, in native pixels.
pub fn motion_proxy(frame_a: &Frame, frame_b: &Frame, cfg: &SelectionConfig) -> Result<f64> {
    frame_a.check_pair(frame_b)?;
    cfg.validate()?;
    let s = cfg.proxy_size;
    let a = resize_bilinear(&to_grayscale(frame_a), s, s)?;
    let b = resize_bilinear(&to_grayscale(frame_b), s, s)?;
    let flow = lucas_kanade_dense(&a, &b, &cfg.lk)?;
    let tail = top_k_percentile(&motion_magnitudes(&flow), cfg.top_k_percent);
    Ok(tail as f64 * frame_a.width() as f64 / s as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairProxy {
    pub pair: usize,
    pub proxy: f64,
}

/// Half-open frame interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct Segment {
    pub start: usize,
    pub end: usize,
}

impl From<(usize, usize)> for Segment {
    fn from((start, end): (usize, usize)) -> Self {
        Self { start, end }
    }
}

impl From<Segment> for (usize, usize) {
    fn from(s: Segment) -> Self {
        (s.start, s.end)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MotionManifest {
    pub pair_proxies: Vec<PairProxy>,
    pub selected: Vec<usize>,
    pub segments: Vec<Segment>,
}

/// Maximal runs of consecutive selected pairs, as frame intervals.
pub fn segments_from_pairs(selected: &[usize]) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::new();
    let mut run: Option<(usize, usize)> = None;
    for &p in selected {
        run = match run {
            Some((start, last)) if p == last + 1 => Some((start, p)),
            Some((start, last)) => {
                out.push(Segment { start, end: last + 2 });
                Some((p, p))
            }
            None => Some((p, p)),
        };
    }
    if let Some((start, last)) = run {
        out.push(Segment { start, end: last + 2 });
    }
    out
}

/// Pair indices covered by `segments`.
pub fn pairs_from_segments(segments: &[Segment]) -> Vec<usize> {
    segments.iter().flat_map(|s| s.start..s.end - 1).collect()
}

/// Proxies for all consecutive pairs, computed in parallel.
pub fn pair_proxies(frames: &[Frame], cfg: &SelectionConfig) -> Result<Vec<PairProxy>> {
    if frames.len() < 2 {
        return Err(Error::EmptyInput(format!(
            "frame selection needs at least 2 frames, got {}",
            frames.len()
        )));
    }
    cfg.validate()?;
    for f in &frames[1..] {
        frames[0].check_pair(f)?;
    }
    let proxies: Vec<Result<f64>> = frames
        .par_windows(2)
        .map(|w| motion_proxy(&w[0], &w[1], cfg))
        .collect();
    proxies
        .into_iter()
        .enumerate()
        .map(|(pair, p)| p.map(|proxy| PairProxy { pair, proxy }))
        .collect()
}

/// Selection from already computed proxies; `width` is the native frame width.
pub fn select_from_proxies(proxies: &[PairProxy], width: usize, cfg: &SelectionConfig) -> MotionManifest {
    let threshold = cfg.threshold_at(width);
    let selected: Vec<usize> = proxies
        .iter()
        .filter(|p| p.proxy > threshold)
        .map(|p| p.pair)
        .collect();
    MotionManifest {
        pair_proxies: proxies.to_vec(),
        segments: segments_from_pairs(&selected),
        selected,
    }
}

pub fn select_pairs(frames: &[Frame], cfg: &SelectionConfig) -> Result<MotionManifest> {
    let proxies = pair_proxies(frames, cfg)?;
    Ok(select_from_proxies(&proxies, frames[0].width(), cfg))
}
