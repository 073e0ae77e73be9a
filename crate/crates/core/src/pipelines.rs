//! Applications built on [`smooth`]: detail enhancement, multi-scale
//! decomposition, HDR tone mapping and stylization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::operator::reflect_index;
use crate::solver::{smooth, SolverConfig};

/// Offset inside `log10(x + LOG_OFFSET)` for log-domain enhancement.
pub const LOG_OFFSET: f64 = 1e-4;
/// Offset inside `log10(L + LUMA_OFFSET)` for tone mapping.
pub const LUMA_OFFSET: f64 = 1e-6;
/// Radiance values are floored here before taking color ratios.
pub const HDR_FLOOR: f64 = 1e-9;

pub const DEFAULT_TARGET_RANGE: f64 = 2.5;
pub const DEFAULT_SATURATION: f64 = 0.6;
pub const DEFAULT_DOG_SIGMA: f64 = 1.0;
pub const DEFAULT_DOG_K: f64 = 1.6;

fn to_log(x: f64) -> f64 {
    (x + LOG_OFFSET).log10()
}

fn from_log(v: f64) -> f64 {
    10f64.powf(v) - LOG_OFFSET
}

/// `(base, detail)` of `image`, both in the log domain when `log_domain` is set.
pub fn base_detail(image: &Field, config: &SolverConfig, log_domain: bool) -> Result<(Field, Field)> {
    let src = if log_domain {
        if let Some(i) = image.data().iter().position(|&v| v <= -LOG_OFFSET) {
            return Err(Error::OutOfRange {
                index: i,
                value: image.data()[i],
            });
        }
        image.map(to_log)
    } else {
        image.clone()
    };
    let (base, _) = smooth(&src, config)?;
    let detail = src.sub(&base)?;
    Ok((base, detail))
}

/// `base + boost * detail`, mapped back from the log domain but not clamped.
pub fn detail_enhance_unclamped(
    image: &Field,
    config: &SolverConfig,
    boost: f64,
    log_domain: bool,
) -> Result<Field> {
    if !boost.is_finite() {
        return Err(Error::config(format!("boost must be finite, got {boost}")));
    }
    let (base, detail) = base_detail(image, config, log_domain)?;
    let out = base.zip_map(&detail, |b, d| b + boost * d)?;
    let out = if log_domain { out.map(from_log) } else { out };
    out.check_finite()?;
    Ok(out)
}

pub fn detail_enhance(
    image: &Field,
    config: &SolverConfig,
    boost: f64,
    log_domain: bool,
) -> Result<Field> {
    Ok(detail_enhance_unclamped(image, config, boost, log_domain)?.clamp01())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelLabel {
    Small,
    Median,
    Coarse,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleLevel {
    #[serde(default = "custom_label")]
    pub label: LevelLabel,
    pub config: SolverConfig,
    #[serde(default = "unit_gain")]
    pub gain: f64,
}

fn custom_label() -> LevelLabel {
    LevelLabel::Custom
}

fn unit_gain() -> f64 {
    1.0
}

impl ScaleLevel {
    pub fn new(label: LevelLabel, alpha: f64, lambda: f64, gain: f64) -> Self {
        ScaleLevel {
            label,
            config: SolverConfig::new(lambda, alpha),
            gain,
        }
    }
}

/// Small, median and coarse levels with detail gain 2.
pub fn standard_levels() -> Vec<ScaleLevel> {
    vec![
        ScaleLevel::new(LevelLabel::Small, 0.01, 0.001, 2.0),
        ScaleLevel::new(LevelLabel::Median, 0.1, 0.005, 2.0),
        ScaleLevel::new(LevelLabel::Coarse, 1.0, 0.02, 2.0),
    ]
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    pub base: Field,
    /// Finest first.
    pub details: Vec<Field>,
}

impl Decomposition {
    pub fn recombine(&self, gains: &[f64]) -> Result<Field> {
        multiscale_recombine(&self.base, &self.details, gains)
    }
}

pub fn validate_levels(levels: &[ScaleLevel]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::Empty("no scale levels".into()));
    }
    for (i, l) in levels.iter().enumerate() {
        l.config.validate()?;
        if !l.gain.is_finite() {
            return Err(Error::config(format!("level {i} gain is not finite")));
        }
    }
    if levels.windows(2).any(|p| p[1].config.lambda < p[0].config.lambda) {
        return Err(Error::config(
            "levels must run from finest to coarsest (non-decreasing lambda)",
        ));
    }
    Ok(())
}

/// `u_0 = image`, `u_i = smooth(u_{i-1})`, `detail_i = u_{i-1} - u_i`.
pub fn multiscale_decompose(image: &Field, levels: &[ScaleLevel]) -> Result<Decomposition> {
    validate_levels(levels)?;
    let mut current = image.clone();
    let mut details = Vec::with_capacity(levels.len());
    for level in levels {
        let (next, _) = smooth(&current, &level.config)?;
        details.push(current.sub(&next)?);
        current = next;
    }
    Ok(Decomposition {
        base: current,
        details,
    })
}

pub fn multiscale_recombine_unclamped(base: &Field, details: &[Field], gains: &[f64]) -> Result<Field> {
    if gains.len() != details.len() {
        return Err(Error::config(format!(
            "{} gains for {} detail layers",
            gains.len(),
            details.len()
        )));
    }
    let mut out = base.clone();
    for (d, &g) in details.iter().zip(gains) {
        out = out.zip_map(d, |a, b| a + g * b)?;
    }
    Ok(out)
}

pub fn multiscale_recombine(base: &Field, details: &[Field], gains: &[f64]) -> Result<Field> {
    Ok(multiscale_recombine_unclamped(base, details, gains)?.clamp01())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HdrOptions {
    /// Output base contrast in log10 units.
    pub target_range: f64,
    pub saturation: f64,
}

impl Default for HdrOptions {
    fn default() -> Self {
        HdrOptions {
            target_range: DEFAULT_TARGET_RANGE,
            saturation: DEFAULT_SATURATION,
        }
    }
}

/// Tone-mapped image plus the log-luminance layers it was built from.
#[derive(Debug, Clone)]
pub struct HdrResult {
    pub output: Field,
    pub log_luminance: Field,
    pub base: Field,
    pub detail: Field,
    /// `scale * (base - max(base)) + detail`.
    pub compressed: Field,
    pub scale: f64,
}

/// Compresses the base layer of log-luminance linearly so that it spans at
/// most `target_range` decades and keeps the detail layer untouched. The
/// scale is capped at 1 so low-contrast inputs are never expanded. Colors
/// are rebuilt as `(c / L)^saturation * 10^compressed`.
pub fn hdr_compress(hdr: &Field, config: &SolverConfig, opts: &HdrOptions) -> Result<HdrResult> {
    if !(opts.target_range > 0.0 && opts.target_range.is_finite()) {
        return Err(Error::config(format!(
            "target range must be positive, got {}",
            opts.target_range
        )));
    }
    if !(opts.saturation > 0.0 && opts.saturation <= 1.0) {
        return Err(Error::config(format!(
            "saturation must be in (0, 1], got {}",
            opts.saturation
        )));
    }
    hdr.check_finite()?;
    if let Some(i) = hdr.data().iter().position(|&v| v < 0.0) {
        return Err(Error::OutOfRange {
            index: i,
            value: hdr.data()[i],
        });
    }
    let floored = hdr.map(|v| v.max(HDR_FLOOR));
    let lum = floored.luminance();
    let ell = lum.map(|l| (l + LUMA_OFFSET).log10());
    let (base, _) = smooth(&ell, config)?;
    let detail = ell.sub(&base)?;
    let (lo, hi) = (base.min_value(), base.max_value());
    let scale = if hi > lo {
        (opts.target_range / (hi - lo)).min(1.0)
    } else {
        1.0
    };
    let compressed = base.zip_map(&detail, |b, d| scale * (b - hi) + d)?;
    let (h, w) = (hdr.height(), hdr.width());
    let mut out = Field::zeros(h, w, hdr.channels());
    for c in 0..hdr.channels() {
        let src = floored.channel(c);
        let dst = out.channel_mut(c);
        for i in 0..h * w {
            let ratio = if hdr.channels() == 1 {
                1.0
            } else {
                src[i] / lum.data()[i]
            };
            dst[i] = (ratio.powf(opts.saturation) * 10f64.powf(compressed.data()[i])).clamp(0.0, 1.0);
        }
    }
    out.check_finite()?;
    Ok(HdrResult {
        output: out,
        log_luminance: ell,
        base,
        detail,
        compressed,
        scale,
    })
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian blur with reflective boundaries (edge sample not
/// repeated). Signals are blurred along rows only.
pub fn gaussian_blur(field: &Field, sigma: f64) -> Field {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (h, w) = (field.height(), field.width());
    let mut tmp = Field::zeros(h, w, field.channels());
    if w > 1 {
        for c in 0..field.channels() {
            let src = field.channel(c);
            let dst = tmp.channel_mut(c);
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0;
                    for (j, kv) in k.iter().enumerate() {
                        let sx = reflect_index(x as isize + j as isize - r, w);
                        acc += kv * src[y * w + sx];
                    }
                    dst[y * w + x] = acc;
                }
            }
        }
    } else {
        tmp = field.clone();
    }
    let mut out = Field::zeros(h, w, field.channels());
    for c in 0..field.channels() {
        let src = tmp.channel(c);
        let dst = out.channel_mut(c);
        for y in 0..h {
            for (j, kv) in k.iter().enumerate() {
                let sy = reflect_index(y as isize + j as isize - r, h);
                let row = &src[sy * w..(sy + 1) * w];
                for (o, v) in dst[y * w..(y + 1) * w].iter_mut().zip(row) {
                    *o += kv * v;
                }
            }
        }
    }
    out
}

/// `G_sigma * f - G_{k sigma} * f`.
pub fn difference_of_gaussians(field: &Field, sigma: f64, k: f64) -> Result<Field> {
    check_dog(sigma, k)?;
    gaussian_blur(field, sigma).sub(&gaussian_blur(field, k * sigma))
}

fn check_dog(sigma: f64, k: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::config(format!("DoG sigma must be positive, got {sigma}")));
    }
    if !(k > 1.0 && k.is_finite()) {
        return Err(Error::config(format!("DoG k must exceed 1, got {k}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StyleMode {
    /// Dark edges on a white page.
    Pen,
    /// The smoothed image darkened along edges.
    ColorPencil,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdgeThreshold {
    /// Edge where `-DoG > tau`.
    Hard,
    /// `tanh(phi * max(-DoG - tau, 0))`.
    Soft { phi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StylizeOptions {
    pub dog_sigma: f64,
    pub dog_k: f64,
    pub edge_tau: f64,
    pub mode: StyleMode,
    pub threshold: EdgeThreshold,
}

impl Default for StylizeOptions {
    fn default() -> Self {
        StylizeOptions {
            dog_sigma: DEFAULT_DOG_SIGMA,
            dog_k: DEFAULT_DOG_K,
            edge_tau: 0.01,
            mode: StyleMode::Pen,
            threshold: EdgeThreshold::Hard,
        }
    }
}

/// Edge mask in `[0, 1]` (1 = edge) from the luminance of `image`. Edges sit
/// on the dark side of intensity transitions, where the narrow blur is
/// darker than the wide one.
pub fn edge_mask(image: &Field, opts: &StylizeOptions) -> Result<Field> {
    check_dog(opts.dog_sigma, opts.dog_k)?;
    if !(opts.edge_tau >= 0.0 && opts.edge_tau.is_finite()) {
        return Err(Error::config(format!("edge tau must be >= 0, got {}", opts.edge_tau)));
    }
    let d = difference_of_gaussians(&image.luminance(), opts.dog_sigma, opts.dog_k)?;
    let tau = opts.edge_tau;
    Ok(match opts.threshold {
        EdgeThreshold::Hard => d.map(|v| if -v > tau { 1.0 } else { 0.0 }),
        EdgeThreshold::Soft { phi } => {
            if !(phi > 0.0 && phi.is_finite()) {
                return Err(Error::config(format!("soft threshold phi must be positive, got {phi}")));
            }
            d.map(|v| (phi * (-v - tau).max(0.0)).tanh())
        }
    })
}

pub fn stylize(image: &Field, config: &SolverConfig, opts: &StylizeOptions) -> Result<Field> {
    let (s, _) = smooth(image, config)?;
    let mask = edge_mask(&s, opts)?;
    let (h, w) = (image.height(), image.width());
    let mut out = Field::zeros(h, w, image.channels());
    for c in 0..image.channels() {
        let src = s.channel(c);
        let dst = out.channel_mut(c);
        for (i, (o, m)) in dst.iter_mut().zip(mask.data()).enumerate() {
            *o = match opts.mode {
                StyleMode::Pen => 1.0 - m,
                StyleMode::ColorPencil => (src[i] * (1.0 - m)).clamp(0.0, 1.0),
            };
        }
    }
    Ok(out)
}
