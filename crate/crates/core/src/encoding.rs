//! Symbolic encoding of a 2-D motion signal.
//!
//! Each axis is median filtered, analysed with a single-scale continuous Haar
//! wavelet, and quantized to five levels. The pair of levels at each position
//! becomes one of 25 [`MotionSymbol`]s. The same chain encodes gaze position
//! and ego-motion flow.

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::gaze::GazeSample;

/// Number of distinct joint symbols.
pub const N_SYMBOLS: usize = 25;

/// Median of each centred `width` window; windows shrink at the edges.
pub fn median_filter(signal: &[f64], width: usize) -> Result<Vec<f64>> {
    if width == 0 || width % 2 == 0 {
        return Err(Error::param(format!("median width must be odd, got {width}")));
    }
    if width > signal.len() && !signal.is_empty() {
        return Err(Error::param(format!(
            "median width {width} exceeds signal length {}",
            signal.len()
        )));
    }
    let half = width / 2;
    let mut buf = Vec::with_capacity(width);
    Ok((0..signal.len())
        .map(|i| {
            buf.clear();
            buf.extend_from_slice(&signal[i.saturating_sub(half)..(i + half + 1).min(signal.len())]);
            median_in_place(&mut buf)
        })
        .collect())
}

/// Median of a non-empty slice; even lengths average the middle pair.
pub(crate) fn median_in_place(v: &mut [f64]) -> f64 {
    v.sort_unstable_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Haar mother wavelet: +1 on [0, 1/2), -1 on [1/2, 1), 0 elsewhere.
pub fn haar_psi(u: f64) -> f64 {
    if (0.0..0.5).contains(&u) {
        1.0
    } else if (0.5..1.0).contains(&u) {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveletCoefficients {
    pub values: Vec<f64>,
    pub scale: usize,
}

/// Single-scale continuous Haar transform.
///
/// `C[b] = (sum x[b..b+a/2] - sum x[b+a/2..b+a]) / sqrt(a)` for every position
/// `b` in the signal, treating samples past the end as zero.
pub fn haar_cwt(signal: &[f64], scale: usize) -> Result<WaveletCoefficients> {
    if scale < 2 || scale % 2 != 0 {
        return Err(Error::param(format!("wavelet scale must be even and >= 2, got {scale}")));
    }
    let half = scale / 2;
    let norm = (scale as f64).sqrt().recip();
    let at = |t: usize| signal.get(t).copied().unwrap_or(0.0);
    let values = (0..signal.len())
        .map(|b| {
            let lead: f64 = (b..b + half).map(at).sum();
            let trail: f64 = (b + half..b + scale).map(at).sum();
            (lead - trail) * norm
        })
        .collect();
    Ok(WaveletCoefficients { values, scale })
}

/// One of the five quantization levels, -2..=2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QuantLevel(i8);

impl QuantLevel {
    pub const ALL: [QuantLevel; 5] = [QuantLevel(-2), QuantLevel(-1), QuantLevel(0), QuantLevel(1), QuantLevel(2)];

    pub fn new(v: i8) -> Option<Self> {
        (-2..=2).contains(&v).then_some(QuantLevel(v))
    }

    pub fn get(self) -> i8 {
        self.0
    }
}

/// Quantization thresholds, `0 < small < large`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub small: f64,
    pub large: f64,
}

impl Thresholds {
    pub fn new(small: f64, large: f64) -> Result<Self> {
        if !(0.0 < small && small < large) {
            return Err(Error::param(format!(
                "thresholds must satisfy 0 < small < large, got {small} and {large}"
            )));
        }
        Ok(Self { small, large })
    }

    /// 50th and 90th percentiles of |C|, nudged apart when they coincide.
    pub fn from_coefficients<'a>(coeffs: impl IntoIterator<Item = &'a f64>) -> Result<Self> {
        let mut mags: Vec<f64> = coeffs.into_iter().map(|c| c.abs()).collect();
        if mags.is_empty() {
            return Err(Error::InsufficientData("no coefficients to estimate thresholds".into()));
        }
        mags.sort_unstable_by(f64::total_cmp);
        let small = percentile_sorted(&mags, 0.5).max(f64::MIN_POSITIVE);
        let large = percentile_sorted(&mags, 0.9);
        let large = if large > small { large } else { small * (1.0 + 1e-9) + f64::MIN_POSITIVE };
        Self::new(small, large)
    }

    pub fn level(&self, c: f64) -> QuantLevel {
        QuantLevel(if c >= self.large {
            2
        } else if c > self.small {
            1
        } else if c >= -self.small {
            0
        } else if c > -self.large {
            -1
        } else {
            -2
        })
    }
}

/// Linear-interpolation percentile of sorted data, `q` in [0, 1].
fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantize(coeffs: &WaveletCoefficients, tau_small: f64, tau_large: f64) -> Result<Vec<QuantLevel>> {
    let th = Thresholds::new(tau_small, tau_large)?;
    Ok(coeffs.values.iter().map(|&c| th.level(c)).collect())
}

/// Joint code of an (x, y) level pair, `(qx + 2) * 5 + (qy + 2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MotionSymbol(u8);

impl MotionSymbol {
    /// Symbol of a motionless position.
    pub const REST: MotionSymbol = MotionSymbol(12);

    pub fn new(code: u8) -> Option<Self> {
        ((code as usize) < N_SYMBOLS).then_some(MotionSymbol(code))
    }

    pub fn from_levels(qx: QuantLevel, qy: QuantLevel) -> Self {
        MotionSymbol(((qx.0 + 2) * 5 + (qy.0 + 2)) as u8)
    }

    pub fn levels(self) -> (QuantLevel, QuantLevel) {
        let c = self.0 as i8;
        (QuantLevel(c / 5 - 2), QuantLevel(c % 5 - 2))
    }

    pub fn code(self) -> u8 {
        self.0
    }
}

pub fn encode_joint(qx: &[QuantLevel], qy: &[QuantLevel]) -> Result<Vec<MotionSymbol>> {
    if qx.len() != qy.len() {
        return Err(Error::param(format!(
            "x and y level sequences differ in length ({} vs {})",
            qx.len(),
            qy.len()
        )));
    }
    Ok(qx.iter().zip(qy).map(|(&x, &y)| MotionSymbol::from_levels(x, y)).collect())
}

/// Median-filtered wavelet coefficients of both axes.
pub fn axis_coefficients(
    xs: &[f64],
    ys: &[f64],
    median_width: usize,
    scale: usize,
) -> Result<(WaveletCoefficients, WaveletCoefficients)> {
    if xs.is_empty() {
        let empty = WaveletCoefficients { values: Vec::new(), scale };
        return Ok((empty.clone(), empty));
    }
    // Short signals still get filtered, with the widest window that fits.
    let width = median_width.min(xs.len() - (1 - xs.len() % 2));
    let cx = haar_cwt(&median_filter(xs, width)?, scale)?;
    let cy = haar_cwt(&median_filter(ys, width)?, scale)?;
    Ok((cx, cy))
}

/// Full chain for one 2-D signal: filter, transform, quantize, joint encode.
pub fn encode_signal(
    xs: &[f64],
    ys: &[f64],
    median_width: usize,
    scale: usize,
    thresholds: Thresholds,
) -> Result<Vec<MotionSymbol>> {
    if xs.len() != ys.len() {
        return Err(Error::param("x and y signals differ in length"));
    }
    let (cx, cy) = axis_coefficients(xs, ys, median_width, scale)?;
    let qx = quantize(&cx, thresholds.small, thresholds.large)?;
    let qy = quantize(&cy, thresholds.small, thresholds.large)?;
    encode_joint(&qx, &qy)
}

/// Gaze thresholds from the configuration.
pub fn gaze_thresholds(config: &PipelineConfig) -> Result<Thresholds> {
    match (config.tau_small, config.tau_large) {
        (Some(s), Some(l)) => Thresholds::new(s, l),
        _ => Err(Error::param(
            "gaze thresholds not configured; set tau_small/tau_large or estimate them from training data",
        )),
    }
}

/// Encodes uniformly sampled gaze into one symbol per sample.
pub fn encode_gaze_channel(gaze: &[GazeSample], config: &PipelineConfig) -> Result<Vec<MotionSymbol>> {
    let th = gaze_thresholds(config)?;
    let xs: Vec<f64> = gaze.iter().map(|g| g.x).collect();
    let ys: Vec<f64> = gaze.iter().map(|g| g.y).collect();
    encode_signal(&xs, &ys, config.median_filter_width, config.wavelet_scale, th)
}
