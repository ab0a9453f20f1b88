//! Homography estimation and dense perspective mapping.
//!
//! [`dlt_homography`] is the Hartley-normalized direct linear transform; the
//! null-space direction is the eigenvector of the smallest eigenvalue of the
//! 9×9 normal matrix `AᵀA`. [`ransac_homography`] wraps it in a fixed-iteration
//! RANSAC loop whose minimal samples are drawn from a ChaCha8 stream seeded
//! with [`RansacConfig::seed`] (`rand::seq::index::sample`, 4 distinct indices
//! per iteration).

use nalgebra::{Matrix3, SymmetricEigen, SMatrix, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::denseflow::FlowField;
use crate::error::{Error, Result};

pub type Point = (f64, f64);

const DET_EPS: f64 = 1e-12;
const W_EPS: f64 = 1e-12;
/// Minimal samples with any triangle below this area (px²) are skipped.
const MIN_TRIANGLE_AREA: f64 = 1e-6;

/// Row-major 3×3 projective transform with `m[8] == 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 9]", into = "[f64; 9]")]
pub struct Homography {
    m: [f64; 9],
}

impl Homography {
    /// Normalizes `m` so the bottom-right entry is 1 and checks invertibility.
    pub fn new(m: [f64; 9]) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("non-finite matrix entry".into()));
        }
        let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if m[8].abs() <= W_EPS * scale.max(1.0) {
            return Err(Error::Normalization(m[8]));
        }
        let h = Self {
            m: m.map(|v| v / m[8]),
        };
        if h.determinant().abs() <= DET_EPS {
            return Err(Error::Degenerate(format!(
                "singular homography (det = {:e})",
                h.determinant()
            )));
        }
        Ok(h)
    }

    pub const fn identity() -> Self {
        Self {
            m: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        }
    }

    pub const fn translation(tx: f64, ty: f64) -> Self {
        Self {
            m: [1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0],
        }
    }

    pub fn matrix(&self) -> &[f64; 9] {
        &self.m
    }

    pub fn determinant(&self) -> f64 {
        self.to_matrix3().determinant()
    }

    fn to_matrix3(self) -> Matrix3<f64> {
        Matrix3::from_row_slice(&self.m)
    }

    fn from_matrix3(m: &Matrix3<f64>) -> Result<Self> {
        let mut out = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                out[r * 3 + c] = m[(r, c)];
            }
        }
        Self::new(out)
    }

    /// Homogeneous multiply followed by the perspective divide.
    pub fn project(&self, p: Point) -> Result<Point> {
        let m = &self.m;
        let (x, y) = p;
        let w = m[6] * x + m[7] * y + m[8];
        if w.abs() < W_EPS {
            return Err(Error::PointAtInfinity { x, y });
        }
        Ok((
            (m[0] * x + m[1] * y + m[2]) / w,
            (m[3] * x + m[4] * y + m[5]) / w,
        ))
    }
}

impl TryFrom<[f64; 9]> for Homography {
    type Error = Error;

    fn try_from(m: [f64; 9]) -> Result<Self> {
        Self::new(m)
    }
}

impl From<Homography> for [f64; 9] {
    fn from(h: Homography) -> Self {
        h.m
    }
}

/// Free-function form of [`Homography::project`].
pub fn project(h: &Homography, p: Point) -> Result<Point> {
    h.project(p)
}

/// Paired source/target points.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Correspondences {
    pub p0: Vec<Point>,
    pub p1: Vec<Point>,
}

impl Correspondences {
    pub fn new(p0: Vec<Point>, p1: Vec<Point>) -> Result<Self> {
        if p0.len() != p1.len() {
            return Err(Error::InvalidFlow(format!(
                "correspondence lists differ in length: {} vs {}",
                p0.len(),
                p1.len()
            )));
        }
        Ok(Self { p0, p1 })
    }

    pub fn len(&self) -> usize {
        self.p0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p0.is_empty()
    }

    fn check(&self) -> Result<()> {
        if self.p0.len() != self.p1.len() {
            return Err(Error::InvalidFlow(format!(
                "correspondence lists differ in length: {} vs {}",
                self.p0.len(),
                self.p1.len()
            )));
        }
        if self.len() < 4 {
            return Err(Error::InsufficientSamples {
                needed: 4,
                got: self.len(),
            });
        }
        Ok(())
    }
}

/// Hartley normalization: centroid to the origin, mean distance √2.
fn normalizing_transform(points: &[Point]) -> Result<Matrix3<f64>> {
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (cx, cy) = (sx / n, sy / n);
    let mean_dist = points
        .iter()
        .map(|p| ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    if mean_dist.is_nan() || mean_dist <= 1e-12 {
        return Err(Error::Degenerate("all points coincide".into()));
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Ok(Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0))
}

fn apply(t: &Matrix3<f64>, p: Point) -> Point {
    let v = t * Vector3::new(p.0, p.1, 1.0);
    (v[0] / v[2], v[1] / v[2])
}

fn triangle_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b.0 - a.0) * (c.1 - a.1) - (c.0 - a.0) * (b.1 - a.1)).abs()
}

/// True when any triangle formed by three of the four points is (nearly) flat.
fn minimal_set_degenerate(pts: [Point; 4]) -> bool {
    const TRIPLES: [[usize; 3]; 4] = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];
    TRIPLES
        .iter()
        .any(|t| triangle_area(pts[t[0]], pts[t[1]], pts[t[2]]) < MIN_TRIANGLE_AREA)
}

/// Normalized DLT homography mapping `c.p0` onto `c.p1`.
pub fn dlt_homography(c: &Correspondences) -> Result<Homography> {
    c.check()?;
    if c.len() == 4 {
        let src = [c.p0[0], c.p0[1], c.p0[2], c.p0[3]];
        let dst = [c.p1[0], c.p1[1], c.p1[2], c.p1[3]];
        if minimal_set_degenerate(src) || minimal_set_degenerate(dst) {
            return Err(Error::Degenerate("collinear minimal sample".into()));
        }
    }
    let t0 = normalizing_transform(&c.p0)?;
    let t1 = normalizing_transform(&c.p1)?;

    // Accumulate AᵀA directly from the two design-matrix rows per point.
    let mut normal = SMatrix::<f64, 9, 9>::zeros();
    for (&a, &b) in c.p0.iter().zip(&c.p1) {
        let (x, y) = apply(&t0, a);
        let (u, v) = apply(&t1, b);
        let rows = [
            [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u],
            [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v],
        ];
        for row in &rows {
            for i in 0..9 {
                for j in i..9 {
                    normal[(i, j)] += row[i] * row[j];
                }
            }
        }
    }
    for i in 0..9 {
        for j in 0..i {
            normal[(i, j)] = normal[(j, i)];
        }
    }

    let eig = SymmetricEigen::new(normal);
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let largest = eig.eigenvalues[order[8]].abs();
    let second = eig.eigenvalues[order[1]].abs();
    if second <= 1e-12 * largest.max(f64::MIN_POSITIVE) {
        return Err(Error::Degenerate(
            "null space has more than one dimension".into(),
        ));
    }
    let h = eig.eigenvectors.column(order[0]);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let t1_inv = t1
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("normalization not invertible".into()))?;
    Homography::from_matrix3(&(t1_inv * hn * t0))
}

/// RANSAC parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RansacConfig {
    /// Forward reprojection error below which a correspondence is an inlier (px).
    pub reproj_threshold: f64,
    pub iterations: usize,
    pub seed: u64,
    pub min_inliers: usize,
    pub min_inlier_fraction: f64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            reproj_threshold: 5.0,
            iterations: 2000,
            seed: 0,
            min_inliers: 8,
            min_inlier_fraction: 0.3,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.reproj_threshold > 0.0 && self.reproj_threshold.is_finite()) {
            return Err(Error::Config("reproj_threshold must be > 0".into()));
        }
        if self.iterations < 1 {
            return Err(Error::Config("iterations must be >= 1".into()));
        }
        if self.min_inliers < 1 {
            return Err(Error::Config("min_inliers must be >= 1".into()));
        }
        if !(self.min_inlier_fraction > 0.0 && self.min_inlier_fraction <= 1.0) {
            return Err(Error::Config("min_inlier_fraction must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Result of a RANSAC run. `NoValidModel` is an ordinary outcome.
#[derive(Debug, Clone, PartialEq)]
pub enum RansacOutcome {
    Model {
        homography: Homography,
        /// Consensus set of the best minimal model; the final homography is
        /// refit on exactly these correspondences.
        inlier_mask: Vec<bool>,
        inlier_count: usize,
    },
    NoValidModel {
        best_inlier_count: usize,
    },
}

impl RansacOutcome {
    pub fn homography(&self) -> Option<&Homography> {
        match self {
            RansacOutcome::Model { homography, .. } => Some(homography),
            RansacOutcome::NoValidModel { .. } => None,
        }
    }

    pub fn inlier_count(&self) -> usize {
        match self {
            RansacOutcome::Model { inlier_count, .. } => *inlier_count,
            RansacOutcome::NoValidModel { best_inlier_count } => *best_inlier_count,
        }
    }

    pub fn is_valid(&self) -> bool {
        matches!(self, RansacOutcome::Model { .. })
    }
}

fn consensus(h: &Homography, c: &Correspondences, threshold: f64) -> Vec<bool> {
    c.p0.iter()
        .zip(&c.p1)
        .map(|(&a, &b)| match h.project(a) {
            Ok(p) => ((p.0 - b.0).powi(2) + (p.1 - b.1).powi(2)).sqrt() < threshold,
            Err(_) => false,
        })
        .collect()
}

pub fn ransac_homography(c: &Correspondences, cfg: &RansacConfig) -> Result<RansacOutcome> {
    c.check()?;
    cfg.validate()?;
    let n = c.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(usize, Homography, Vec<bool>)> = None;

    for _ in 0..cfg.iterations {
        let idx = rand::seq::index::sample(&mut rng, n, 4);
        let pick: [usize; 4] = [idx.index(0), idx.index(1), idx.index(2), idx.index(3)];
        if minimal_set_degenerate(pick.map(|i| c.p0[i])) {
            continue;
        }
        let sample = Correspondences {
            p0: pick.iter().map(|&i| c.p0[i]).collect(),
            p1: pick.iter().map(|&i| c.p1[i]).collect(),
        };
        let Ok(h) = dlt_homography(&sample) else {
            continue;
        };
        let mask = consensus(&h, c, cfg.reproj_threshold);
        let count = mask.iter().filter(|&&m| m).count();
        if best.as_ref().is_none_or(|(b, _, _)| count > *b) {
            best = Some((count, h, mask));
        }
    }

    let Some((count, minimal, mask)) = best else {
        return Ok(RansacOutcome::NoValidModel {
            best_inlier_count: 0,
        });
    };
    let enough = count >= cfg.min_inliers && count as f64 >= cfg.min_inlier_fraction * n as f64;
    if !enough {
        return Ok(RansacOutcome::NoValidModel {
            best_inlier_count: count,
        });
    }
    let inliers = Correspondences {
        p0: c.p0.iter().zip(&mask).filter(|(_, &m)| m).map(|(p, _)| *p).collect(),
        p1: c.p1.iter().zip(&mask).filter(|(_, &m)| m).map(|(p, _)| *p).collect(),
    };
    let homography = dlt_homography(&inliers).unwrap_or(minimal);
    Ok(RansacOutcome::Model {
        homography,
        inlier_mask: mask,
        inlier_count: count,
    })
}

/// Displacement induced by `h` at every integer pixel: `project(h, p) - p`.
pub fn camera_flow(h: &Homography, width: usize, height: usize) -> Result<FlowField> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidFlow(format!(
            "dimensions must be positive, got {width}x{height}"
        )));
    }
    let mut u = Vec::with_capacity(width * height);
    let mut v = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let (xf, yf) = (x as f64, y as f64);
            let (px, py) = h.project((xf, yf))?;
            u.push((px - xf) as f32);
            v.push((py - yf) as f32);
        }
    }
    FlowField::new(width, height, u, v)
}
