use serde::{Deserialize, Serialize};

use super::corners::min_eigenvalue;
use super::frame::{Frame, Pyramid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackStatus {
    Ok,
    Lost,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackedPoint {
    pub origin: [f64; 2],
    pub destination: [f64; 2],
    /// Forward-backward error in pixels; 0 until [`fb_filter`](super::fb_filter) runs.
    pub fb_error: f64,
    pub status: TrackStatus,
}

impl TrackedPoint {
    pub fn flow(&self) -> [f64; 2] {
        [self.destination[0] - self.origin[0], self.destination[1] - self.origin[1]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LkParams {
    /// Integration window side in pixels (odd).
    pub window: usize,
    pub levels: usize,
    pub max_iter: usize,
    /// Stop iterating once the update is shorter than this (pixels).
    pub epsilon: f64,
    /// Minimum eigenvalue of the window-averaged structure tensor.
    pub min_eigen: f64,
}

impl Default for LkParams {
    fn default() -> Self {
        Self {
            window: 15,
            levels: 3,
            max_iter: 10,
            epsilon: 0.03,
            min_eigen: 1e-5,
        }
    }
}

/// Pyramidal Lucas–Kanade tracker over a fixed frame pair.
pub struct LkTracker {
    prev: Pyramid,
    next: Pyramid,
    params: LkParams,
}

impl LkTracker {
    pub fn new(frame_a: &Frame, frame_b: &Frame, params: LkParams) -> Result<Self> {
        if (frame_a.width, frame_a.height) != (frame_b.width, frame_b.height) {
            return Err(Error::param(format!(
                "frame sizes differ: {}x{} vs {}x{}",
                frame_a.width, frame_a.height, frame_b.width, frame_b.height
            )));
        }
        if params.levels == 0 {
            return Err(Error::param("LK needs at least one pyramid level"));
        }
        Ok(Self {
            prev: Pyramid::new(frame_a, params.levels),
            next: Pyramid::new(frame_b, params.levels),
            params,
        })
    }

    /// Same pyramids with the frame roles swapped.
    pub fn reversed(self) -> Self {
        Self { prev: self.next, next: self.prev, params: self.params }
    }

    pub fn track(&self, points: &[[f64; 2]]) -> Vec<TrackedPoint> {
        points.iter().map(|&p| self.track_point(p)).collect()
    }

    pub fn track_point(&self, origin: [f64; 2]) -> TrackedPoint {
        let half = (self.params.window / 2) as isize;
        let n_px = ((2 * half + 1) * (2 * half + 1)) as f64;
        let lost = TrackedPoint { origin, destination: origin, fb_error: 0.0, status: TrackStatus::Lost };
        let mut guess = [0.0f64; 2];
        let mut template = Vec::with_capacity(n_px as usize);

        for (l, (pa, pb)) in self.prev.levels.iter().zip(&self.next.levels).enumerate().rev() {
            let s = (1u64 << l) as f64;
            let p = [origin[0] / s, origin[1] / s];

            template.clear();
            let (mut gxx, mut gxy, mut gyy) = (0.0, 0.0, 0.0);
            for dy in -half..=half {
                for dx in -half..=half {
                    let (x, y) = (p[0] + dx as f64, p[1] + dy as f64);
                    let ix = pa.gx.sample(x, y);
                    let iy = pa.gy.sample(x, y);
                    template.push((pa.image.sample(x, y), ix, iy));
                    gxx += ix * ix;
                    gxy += ix * iy;
                    gyy += iy * iy;
                }
            }
            if min_eigenvalue(gxx, gxy, gyy) / n_px < self.params.min_eigen {
                return lost;
            }
            let det = gxx * gyy - gxy * gxy;

            let mut d = [0.0f64; 2];
            for _ in 0..self.params.max_iter {
                let q = [p[0] + guess[0] + d[0], p[1] + guess[1] + d[1]];
                let (mut bx, mut by) = (0.0, 0.0);
                let mut k = 0;
                for dy in -half..=half {
                    for dx in -half..=half {
                        let (a, ix, iy) = template[k];
                        k += 1;
                        let diff = a - pb.image.sample(q[0] + dx as f64, q[1] + dy as f64);
                        bx += diff * ix;
                        by += diff * iy;
                    }
                }
                let step = [(gyy * bx - gxy * by) / det, (gxx * by - gxy * bx) / det];
                d[0] += step[0];
                d[1] += step[1];
                if step[0].hypot(step[1]) < self.params.epsilon {
                    break;
                }
            }
            guess = [guess[0] + d[0], guess[1] + d[1]];
            if l > 0 {
                guess = [2.0 * guess[0], 2.0 * guess[1]];
            }
        }

        let dest = [origin[0] + guess[0], origin[1] + guess[1]];
        let (w, h) = (self.prev.levels[0].image.width as f64, self.prev.levels[0].image.height as f64);
        let hw = half as f64;
        let inside = dest[0] - hw >= 0.0
            && dest[1] - hw >= 0.0
            && dest[0] + hw <= w - 1.0
            && dest[1] + hw <= h - 1.0;
        if !inside || !dest[0].is_finite() || !dest[1].is_finite() {
            return lost;
        }
        TrackedPoint { origin, destination: dest, fb_error: 0.0, status: TrackStatus::Ok }
    }
}

/// Tracks `points` from `frame_a` into `frame_b`.
pub fn track_lk(frame_a: &Frame, frame_b: &Frame, points: &[[f64; 2]], params: LkParams) -> Result<Vec<TrackedPoint>> {
    Ok(LkTracker::new(frame_a, frame_b, params)?.track(points))
}
