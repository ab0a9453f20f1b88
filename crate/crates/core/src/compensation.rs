//! Camera-motion compensation: raw flow in, object ("relative") flow out.
//!
//! Grid points sampled every `stride` pixels are pushed through the raw flow to
//! form correspondences, a homography is fit to them with RANSAC, the flow it
//! induces is subtracted everywhere, and residuals shorter than
//! `noise_threshold` are zeroed. When no valid homography exists the input is
//! passed through untouched.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denseflow::{vector_norm, FlowField};
use crate::error::{Error, Result};
use crate::geometry::{camera_flow, ransac_homography, Correspondences, Homography, RansacConfig, RansacOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompensationConfig {
    pub ransac: RansacConfig,
    /// Grid spacing of the sampled correspondences (px).
    pub stride: usize,
    /// Residual magnitude below which compensated flow is set to zero (px).
    pub noise_threshold: f32,
    pub thresholding_enabled: bool,
}

impl Default for CompensationConfig {
    fn default() -> Self {
        Self {
            ransac: RansacConfig::default(),
            stride: 8,
            noise_threshold: 0.5,
            thresholding_enabled: true,
        }
    }
}

impl CompensationConfig {
    pub fn validate_for(&self, width: usize, height: usize) -> Result<()> {
        self.ransac.validate()?;
        if self.stride < 1 || self.stride >= width.min(height) {
            return Err(Error::Config(format!(
                "stride {} must lie in [1, {})",
                self.stride,
                width.min(height)
            )));
        }
        if !(self.noise_threshold >= 0.0 && self.noise_threshold.is_finite()) {
            return Err(Error::Config("noise_threshold must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompensationReport {
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub homography: Option<Homography>,
    pub inlier_count: usize,
}

/// Row-major lattice `(x, y)` with both coordinates multiples of `stride`,
/// each paired with itself displaced by the flow stored there.
pub fn sample_correspondences(flow: &FlowField, stride: usize) -> Result<Correspondences> {
    if stride == 0 {
        return Err(Error::Config("stride must be >= 1".into()));
    }
    let mut p0 = Vec::new();
    let mut p1 = Vec::new();
    for y in (0..flow.height()).step_by(stride) {
        for x in (0..flow.width()).step_by(stride) {
            let (u, v) = flow.at(x, y);
            let (xf, yf) = (x as f64, y as f64);
            p0.push((xf, yf));
            p1.push((xf + u as f64, yf + v as f64));
        }
    }
    if p0.len() < 4 {
        return Err(Error::InsufficientSamples {
            needed: 4,
            got: p0.len(),
        });
    }
    Correspondences::new(p0, p1)
}

pub fn compensate_flow(flow: &FlowField, cfg: &CompensationConfig) -> Result<(FlowField, CompensationReport)> {
    cfg.validate_for(flow.width(), flow.height())?;
    let corr = sample_correspondences(flow, cfg.stride)?;
    let outcome = ransac_homography(&corr, &cfg.ransac)?;

    let fallback = |inlier_count| {
        (
            flow.clone(),
            CompensationReport {
                valid: false,
                homography: None,
                inlier_count,
            },
        )
    };

    let (homography, inlier_count) = match outcome {
        RansacOutcome::Model {
            homography,
            inlier_count,
            ..
        } => (homography, inlier_count),
        RansacOutcome::NoValidModel { best_inlier_count } => return Ok(fallback(best_inlier_count)),
    };
    // A model that sends part of the grid to infinity cannot describe the camera.
    let Ok(camera) = camera_flow(&homography, flow.width(), flow.height()) else {
        return Ok(fallback(inlier_count));
    };

    let threshold = cfg.noise_threshold;
    let (mut u, mut v): (Vec<f32>, Vec<f32>) = flow
        .u()
        .iter()
        .zip(flow.v())
        .zip(camera.u().iter().zip(camera.v()))
        .map(|((&fu, &fv), (&cu, &cv))| (fu - cu, fv - cv))
        .unzip();
    if cfg.thresholding_enabled {
        for (a, b) in u.iter_mut().zip(v.iter_mut()) {
            if vector_norm(*a, *b) < threshold {
                *a = 0.0;
                *b = 0.0;
            }
        }
    }
    let mut out = FlowField::new(flow.width(), flow.height(), u, v)?;
    if let Some((s, t)) = flow.pair() {
        out = out.with_pair(s, t);
    }
    Ok((
        out,
        CompensationReport {
            valid: true,
            homography: Some(homography),
            inlier_count,
        },
    ))
}

/// Per-item RANSAC seed: `splitmix64(seed ^ splitmix64(index))`.
pub fn derive_item_seed(seed: u64, index: usize) -> u64 {
    splitmix64(seed ^ splitmix64(index as u64))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The config item `index` of a batch runs with.
pub fn item_config(cfg: &CompensationConfig, index: usize) -> CompensationConfig {
    let mut item = *cfg;
    item.ransac.seed = derive_item_seed(cfg.ransac.seed, index);
    item
}

/// Compensates every field, in parallel, returning results in input order.
pub fn compensate_batch(
    flows: &[FlowField],
    cfg: &CompensationConfig,
) -> Result<Vec<(FlowField, CompensationReport)>> {
    if let Some(first) = flows.first() {
        if let Some(i) = flows.iter().position(|f| !f.same_dimensions(first)) {
            return Err(Error::BatchItem {
                index: i,
                source: Box::new(Error::InvalidFlow(format!(
                    "{}x{} differs from batch dimensions {}x{}",
                    flows[i].width(),
                    flows[i].height(),
                    first.width(),
                    first.height()
                ))),
            });
        }
    }
    let results: Vec<Result<_>> = flows
        .par_iter()
        .enumerate()
        .map(|(i, f)| compensate_flow(f, &item_config(cfg, i)))
        .collect();
    results
        .into_iter()
        .enumerate()
        .map(|(index, r)| {
            r.map_err(|e| Error::BatchItem {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}
