use super::frame::Frame;

/// Smallest eigenvalue of the symmetric 2x2 matrix `[[a, b], [b, c]]`.
#[inline]
pub fn min_eigenvalue(a: f64, b: f64, c: f64) -> f64 {
    let half_trace = 0.5 * (a + c);
    let half_diff = 0.5 * (a - c);
    half_trace - (half_diff * half_diff + b * b).sqrt()
}

/// Shi–Tomasi score of every pixel: the smaller eigenvalue of the gradient
/// structure tensor summed over the 3x3 neighbourhood. Border pixels score 0.
pub fn corner_scores(frame: &Frame) -> Vec<f64> {
    let (w, h) = (frame.width, frame.height);
    let (gx, gy) = frame.gradients();
    let mut xx = vec![0.0f64; w * h];
    let mut xy = vec![0.0f64; w * h];
    let mut yy = vec![0.0f64; w * h];
    for i in 0..w * h {
        let (u, v) = (gx.pixels[i] as f64, gy.pixels[i] as f64);
        xx[i] = u * u;
        xy[i] = u * v;
        yy[i] = v * v;
    }
    let mut scores = vec![0.0; w * h];
    if w < 3 || h < 3 {
        return scores;
    }
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
            for yy_ in y - 1..=y + 1 {
                let row = yy_ * w;
                for xx_ in x - 1..=x + 1 {
                    a += xx[row + xx_];
                    b += xy[row + xx_];
                    c += yy[row + xx_];
                }
            }
            scores[y * w + x] = min_eigenvalue(a, b, c).max(0.0);
        }
    }
    scores
}

/// Strongest corners, at least `min_distance` apart, at most `max_corners`.
///
/// Candidates are 3x3 local maxima scoring at least `quality` times the best
/// score. They are taken greedily in order of decreasing score (ties by row,
/// then column).
pub fn detect_corners(frame: &Frame, max_corners: usize, quality: f64, min_distance: f64) -> Vec<[f64; 2]> {
    let (w, h) = (frame.width, frame.height);
    let scores = corner_scores(frame);
    let best = scores.iter().copied().fold(0.0, f64::max);
    // Rounding noise on flat images must not produce corners.
    if best <= 1e-12 || max_corners == 0 {
        return Vec::new();
    }
    let floor = (quality * best).max(1e-12);

    let mut candidates: Vec<(f64, usize)> = Vec::new();
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let s = scores[y * w + x];
            if s < floor {
                continue;
            }
            let is_max = (y - 1..=y + 1)
                .all(|ny| (x - 1..=x + 1).all(|nx| scores[ny * w + nx] <= s));
            if is_max {
                candidates.push((s, y * w + x));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    // Bucket accepted corners on a grid of cell size min_distance.
    let cell = min_distance.max(1.0);
    let gw = (w as f64 / cell).ceil() as usize + 1;
    let gh = (h as f64 / cell).ceil() as usize + 1;
    let mut grid: Vec<Vec<[f64; 2]>> = vec![Vec::new(); gw * gh];
    let mut out = Vec::new();
    let min_d2 = min_distance * min_distance;
    for (_, idx) in candidates {
        let p = [(idx % w) as f64, (idx / w) as f64];
        let (cx, cy) = ((p[0] / cell) as usize, (p[1] / cell) as usize);
        let clash = (cy.saturating_sub(1)..=(cy + 1).min(gh - 1)).any(|gy| {
            (cx.saturating_sub(1)..=(cx + 1).min(gw - 1)).any(|gx| {
                grid[gy * gw + gx]
                    .iter()
                    .any(|q| (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2) < min_d2)
            })
        });
        if clash {
            continue;
        }
        grid[cy * gw + cx].push(p);
        out.push(p);
        if out.len() == max_corners {
            break;
        }
    }
    out
}
