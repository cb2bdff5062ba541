use std::path::Path;

use crate::error::{Error, Result};

/// Grayscale frame with intensities in [0, 1], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f32>,
    pub index: usize,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::param(format!(
                "frame {width}x{height} needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels, index: 0 })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f32) -> Self {
        let pixels = (0..height).flat_map(|y| (0..width).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        Self { width, height, pixels, index: 0 }
    }

    /// Loads PNG/PGM/PPM; color is reduced with Rec. 601 luma weights.
    pub fn load(path: &Path, index: usize) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image { path: path.into(), source })?;
        let rgb = img.to_rgb32f();
        let (w, h) = rgb.dimensions();
        let pixels = rgb
            .pixels()
            .map(|p| (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]).clamp(0.0, 1.0))
            .collect();
        let mut frame = Frame::new(w as usize, h as usize, pixels)?;
        frame.index = index;
        Ok(frame)
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    fn clamped(&self, x: isize, y: isize) -> f32 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.at(x, y)
    }

    /// Bilinear sample with border replication.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let (fx, fy) = (x - x0, y - y0);
        let (xi, yi) = (x0 as isize, y0 as isize);
        let p00 = self.clamped(xi, yi) as f64;
        let p10 = self.clamped(xi + 1, yi) as f64;
        let p01 = self.clamped(xi, yi + 1) as f64;
        let p11 = self.clamped(xi + 1, yi + 1) as f64;
        (1.0 - fy) * ((1.0 - fx) * p00 + fx * p10) + fy * ((1.0 - fx) * p01 + fx * p11)
    }

    /// Central-difference gradients, one-sided at the border.
    pub fn gradients(&self) -> (Frame, Frame) {
        let (w, h) = (self.width as isize, self.height as isize);
        let gx = Frame::from_fn(self.width, self.height, |x, y| {
            let (x, y) = (x as isize, y as isize);
            let (l, r) = ((x - 1).max(0), (x + 1).min(w - 1));
            (self.clamped(r, y) - self.clamped(l, y)) / (r - l).max(1) as f32
        });
        let gy = Frame::from_fn(self.width, self.height, |x, y| {
            let (x, y) = (x as isize, y as isize);
            let (u, d) = ((y - 1).max(0), (y + 1).min(h - 1));
            (self.clamped(x, d) - self.clamped(x, u)) / (d - u).max(1) as f32
        });
        (gx, gy)
    }

    /// Blur with the 5-tap binomial kernel, then keep every second pixel.
    pub fn downsample(&self) -> Frame {
        const K: [f32; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
        let horiz = Frame::from_fn(self.width, self.height, |x, y| {
            K.iter()
                .enumerate()
                .map(|(k, w)| w * self.clamped(x as isize + k as isize - 2, y as isize))
                .sum()
        });
        let nw = self.width.div_ceil(2);
        let nh = self.height.div_ceil(2);
        Frame::from_fn(nw, nh, |x, y| {
            K.iter()
                .enumerate()
                .map(|(k, w)| w * horiz.clamped(2 * x as isize, 2 * y as isize + k as isize - 2))
                .sum()
        })
    }
}

/// Image pyramid with gradients per level; level 0 is full resolution.
pub struct Pyramid {
    pub levels: Vec<Level>,
}

pub struct Level {
    pub image: Frame,
    pub gx: Frame,
    pub gy: Frame,
}

impl Pyramid {
    pub fn new(frame: &Frame, n_levels: usize) -> Self {
        let mut levels = Vec::with_capacity(n_levels);
        let mut image = frame.clone();
        for l in 0..n_levels.max(1) {
            if l > 0 {
                image = image.downsample();
            }
            let (gx, gy) = image.gradients();
            levels.push(Level { image: image.clone(), gx, gy });
        }
        Self { levels }
    }
}
