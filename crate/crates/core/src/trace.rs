//! Point trajectories by forward-Euler advection through a flow sequence.

use serde::{Deserialize, Serialize};

use crate::denseflow::FlowField;
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::imaging::Frame;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub seed_point: Point,
    /// `points[0] == seed_point`; one more entry than there are flow fields.
    pub points: Vec<Point>,
}

/// `p_{t+1} = p_t + flow_t(p_t)`. Sampling clamps to the field, positions do not.
pub fn trace_points(flows: &[FlowField], seeds: &[Point]) -> Result<Vec<Trajectory>> {
    let first = flows
        .first()
        .ok_or_else(|| Error::EmptyInput("tracing needs at least one flow field".into()))?;
    if let Some(i) = flows.iter().position(|f| !f.same_dimensions(first)) {
        return Err(Error::BatchItem {
            index: i,
            source: Box::new(Error::InvalidFlow("flow dimensions differ".into())),
        });
    }
    let (w, h) = (first.width() as f64, first.height() as f64);
    seeds
        .iter()
        .map(|&seed| {
            let (x, y) = seed;
            if !(x.is_finite() && y.is_finite() && (0.0..=w - 1.0).contains(&x) && (0.0..=h - 1.0).contains(&y)) {
                return Err(Error::OutOfBounds {
                    x,
                    y,
                    width: first.width(),
                    height: first.height(),
                });
            }
            let mut points = Vec::with_capacity(flows.len() + 1);
            points.push(seed);
            let mut p = seed;
            for f in flows {
                let (du, dv) = f.sample(p.0, p.1);
                p = (p.0 + du, p.1 + dv);
                points.push(p);
            }
            Ok(Trajectory { seed_point: seed, points })
        })
        .collect()
}

/// Row-major lattice of multiples of `stride`, starting at `(0, 0)`.
pub fn grid_seeds(width: usize, height: usize, stride: usize) -> Vec<Point> {
    let stride = stride.max(1);
    (0..height)
        .step_by(stride)
        .flat_map(|y| (0..width).step_by(stride).map(move |x| (x as f64, y as f64)))
        .collect()
}

/// Draws each trajectory as a polyline onto an RGB copy of `background`.
pub fn render_trajectories(background: &Frame, trajectories: &[Trajectory], color: [f32; 3]) -> Frame {
    let (w, h) = (background.width(), background.height());
    let mut px: Vec<f32> = if background.channels() == 3 {
        background.pixels().to_vec()
    } else {
        background.pixels().iter().flat_map(|&g| [g, g, g]).collect()
    };
    let mut plot = |x: i64, y: i64| {
        if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
            let i = (y as usize * w + x as usize) * 3;
            px[i..i + 3].copy_from_slice(&color);
        }
    };
    for t in trajectories {
        for seg in t.points.windows(2) {
            let (x0, y0) = (seg[0].0.round() as i64, seg[0].1.round() as i64);
            let (x1, y1) = (seg[1].0.round() as i64, seg[1].1.round() as i64);
            // Bresenham
            let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
            let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
            let (mut x, mut y, mut err) = (x0, y0, dx + dy);
            loop {
                plot(x, y);
                if x == x1 && y == y1 {
                    break;
                }
                let e2 = 2 * err;
                if e2 >= dy {
                    err += dy;
                    x += sx;
                }
                if e2 <= dx {
                    err += dx;
                    y += sy;
                }
            }
        }
        if t.points.len() == 1 {
            plot(t.points[0].0.round() as i64, t.points[0].1.round() as i64);
        }
    }
    Frame::from_raw(w, h, 3, px)
}
