//! Multi-channel sample grids.
//!
//! A [`Field`] stores `height x width x channels` 64-bit samples in planar
//! order: all samples of channel 0 in row-major order, then channel 1, and so
//! on. One-dimensional signals are fields of width 1, so the signal runs down
//! the rows.

use crate::error::{Error, Result};

/// Spatial extent of a field, without the channel count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(height: usize, width: usize) -> Self {
        Shape { height, width }
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    /// 1 for signals (width 1), 2 for images.
    pub fn rank(&self) -> usize {
        if self.width == 1 {
            1
        } else {
            2
        }
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    shape: Shape,
    channels: usize,
    data: Vec<f64>,
}

impl Field {
    /// Wraps planar sample data. Fails on a length mismatch, a zero extent,
    /// or a non-finite sample.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Empty(format!(
                "field extent {height}x{width}x{channels}"
            )));
        }
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(Error::shape(
                format!("{expected} samples"),
                format!("{} samples", data.len()),
            ));
        }
        let field = Field {
            shape: Shape { height, width },
            channels,
            data,
        };
        field.check_finite()?;
        Ok(field)
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::constant(height, width, channels, 0.0)
    }

    pub fn constant(height: usize, width: usize, channels: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0 && channels > 0, "empty field");
        Field {
            shape: Shape { height, width },
            channels,
            data: vec![value; height * width * channels],
        }
    }

    /// Builds a field from `f(y, x, c)`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut field = Self::zeros(height, width, channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    field.set(y, x, c, f(y, x, c));
                }
            }
        }
        field
    }

    /// A single-channel 1D signal.
    pub fn signal(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(n, 1, 1, values)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn rank(&self) -> usize {
        self.shape.rank()
    }

    pub fn pixels(&self) -> usize {
        self.shape.pixels()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.pixels();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.pixels();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn channel_planes(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.pixels())
    }

    /// Extracts one channel as a single-channel field.
    pub fn extract_channel(&self, c: usize) -> Field {
        Field {
            shape: self.shape,
            channels: 1,
            data: self.channel(c).to_vec(),
        }
    }

    /// Stacks single-channel fields of equal shape into one field.
    pub fn from_channels(planes: &[Field]) -> Result<Field> {
        let first = planes
            .first()
            .ok_or_else(|| Error::Empty("no channels to stack".into()))?;
        let mut data = Vec::with_capacity(first.len() * planes.len());
        let mut channels = 0;
        for p in planes {
            if p.shape != first.shape {
                return Err(Error::shape(first.shape.to_string(), p.shape.to_string()));
            }
            data.extend_from_slice(&p.data);
            channels += p.channels;
        }
        Ok(Field {
            shape: first.shape,
            channels,
            data,
        })
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (c * self.shape.height + y) * self.shape.width + x
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.index(y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, value: f64) {
        let i = self.index(y, x, c);
        self.data[i] = value;
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonFinite { index }),
            None => Ok(()),
        }
    }

    pub fn same_shape(&self, other: &Field) -> bool {
        self.shape == other.shape && self.channels == other.channels
    }

    pub(crate) fn ensure_same_shape(&self, other: &Field) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(self.describe(), other.describe()))
        }
    }

    pub fn describe(&self) -> String {
        format!("{}x{}", self.shape, self.channels)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            shape: self.shape,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combination of two fields of identical shape.
    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        self.ensure_same_shape(other)?;
        Ok(Field {
            shape: self.shape,
            channels: self.channels,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, k: f64) -> Field {
        self.map(|v| v * k)
    }

    pub fn clamp01(&self) -> Field {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    pub fn dot(&self, other: &Field) -> Result<f64> {
        self.ensure_same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs_diff(&self, other: &Field) -> Result<f64> {
        self.ensure_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Luminance plane: Rec. 709 weights for three channels, the plain
    /// channel mean otherwise.
    pub fn luminance(&self) -> Field {
        let n = self.pixels();
        let mut out = vec![0.0; n];
        if self.channels == 3 {
            const W: [f64; 3] = [0.2126, 0.7152, 0.0722];
            for (c, plane) in self.channel_planes().enumerate() {
                for (o, v) in out.iter_mut().zip(plane) {
                    *o += W[c] * v;
                }
            }
        } else {
            let inv = 1.0 / self.channels as f64;
            for plane in self.channel_planes() {
                for (o, v) in out.iter_mut().zip(plane) {
                    *o += inv * v;
                }
            }
        }
        Field {
            shape: self.shape,
            channels: 1,
            data: out,
        }
    }

    /// Sub-rectangle `[top, top + height) x [left, left + width)` of every channel.
    pub fn window(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Field> {
        if height == 0
            || width == 0
            || top + height > self.shape.height
            || left + width > self.shape.width
        {
            return Err(Error::shape(
                self.shape.to_string(),
                format!("window {height}x{width} at ({top}, {left})"),
            ));
        }
        Ok(Field::from_fn(height, width, self.channels, |y, x, c| {
            self.get(top + y, left + x, c)
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planar_layout() {
        let f = Field::from_fn(2, 3, 2, |y, x, c| (100 * c + 10 * y + x) as f64);
        assert_eq!(f.data()[..6], [0.0, 1.0, 2.0, 10.0, 11.0, 12.0]);
        assert_eq!(f.channel(1)[0], 100.0);
        assert_eq!(f.get(1, 2, 1), 112.0);
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(matches!(
            Field::new(2, 2, 1, vec![0.0; 3]),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(matches!(
            Field::new(1, 2, 1, vec![0.0, f64::NAN]),
            Err(Error::NonFinite { index: 1 })
        ));
        assert!(Field::new(0, 2, 1, vec![]).is_err());
    }

    #[test]
    fn signals_are_rank_one() {
        let s = Field::signal(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.rank(), 1);
        assert_eq!((s.height(), s.width()), (3, 1));
        assert_eq!(Field::zeros(1, 4, 1).rank(), 2);
    }

    #[test]
    fn luminance_weights() {
        let f = Field::from_fn(1, 1, 3, |_, _, _| 1.0);
        assert!((f.luminance().data()[0] - 1.0).abs() < 1e-15);
        let g = Field::from_fn(1, 2, 2, |_, x, c| (x + 2 * c) as f64);
        assert_eq!(g.luminance().data(), &[1.0, 2.0]);
    }

    #[test]
    fn channel_round_trip() {
        let f = Field::from_fn(3, 2, 3, |y, x, c| (y * 7 + x * 3 + c) as f64);
        let planes: Vec<_> = (0..3).map(|c| f.extract_channel(c)).collect();
        assert_eq!(Field::from_channels(&planes).unwrap(), f);
    }
}
