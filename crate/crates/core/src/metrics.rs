//! PSNR and MAE.

use crate::error::{Error, Result};
use crate::field::Field;

/// Value reported by [`psnr`] for identical inputs.
pub const PSNR_CAP: f64 = 99.0;

/// Boundary crop used for image PSNR.
pub const DEFAULT_CROP: usize = 12;

/// Default crop for a field: 12 pixels for images, none for signals.
pub fn default_crop(field: &Field) -> usize {
    if field.rank() == 1 {
        0
    } else {
        DEFAULT_CROP
    }
}

/// Samples of every channel inside a `crop`-wide border. Signals are cropped
/// along rows only.
fn interior_pairs<'a>(
    a: &'a Field,
    b: &'a Field,
    crop: usize,
) -> Result<impl Iterator<Item = (f64, f64)> + 'a> {
    a.ensure_same_shape(b)?;
    let (h, w) = (a.height(), a.width());
    let cx = if a.rank() == 1 { 0 } else { crop };
    if 2 * crop >= h || 2 * cx >= w {
        return Err(Error::CropTooLarge {
            crop,
            height: h,
            width: w,
        });
    }
    Ok((0..a.channels()).flat_map(move |c| {
        (crop..h - crop).flat_map(move |y| (cx..w - cx).map(move |x| (a.get(y, x, c), b.get(y, x, c))))
    }))
}

/// Peak signal-to-noise ratio in dB over the cropped interior, channels
/// pooled. Returns [`PSNR_CAP`] when the interiors are identical.
pub fn psnr(a: &Field, b: &Field, crop: usize, peak: f64) -> Result<f64> {
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::config(format!("peak must be positive, got {peak}")));
    }
    let (sum, n) = interior_pairs(a, b, crop)?
        .fold((0.0, 0usize), |(s, n), (x, y)| (s + (x - y) * (x - y), n + 1));
    let mse = sum / n as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP))
}

/// Mean absolute difference over all samples.
pub fn mae(a: &Field, b: &Field) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let total: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum();
    Ok(total / a.len() as f64)
}

/// Mean squared difference over the cropped interior.
pub fn mse(a: &Field, b: &Field, crop: usize) -> Result<f64> {
    let (sum, n) = interior_pairs(a, b, crop)?
        .fold((0.0, 0usize), |(s, n), (x, y)| (s + (x - y) * (x - y), n + 1));
    Ok(sum / n as f64)
}
