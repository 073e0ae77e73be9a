//! Synthetic test data and brute-force reference solvers.
//!
//! # Noise
//!
//! Gaussian noise comes from `ChaCha8Rng::seed_from_u64(seed)` (the
//! `rand_chacha` 0.9 stream). Each pair of standard normals is drawn with the
//! Box–Muller transform from two 64-bit outputs `a`, `b`:
//!
//! ```text
//! u1 = ((a >> 11) + 1) * 2^-53        in (0, 1]
//! u2 = (b >> 11) * 2^-53              in [0, 1)
//! r  = sqrt(-2 ln u1)
//! z0 = r cos(2 pi u2),  z1 = r sin(2 pi u2)
//! ```
//!
//! Samples are consumed in planar field order (channel, row, column), `z0`
//! before `z1`. Nothing here depends on platform RNG state, so a seed pins
//! the output bit for bit.
//!
//! # Oracles
//!
//! [`dense_oracle_solve`] assembles the u-step system as an explicit matrix
//! from its own circulant difference matrices and factors it with Cholesky.
//! [`support_enum_oracle`] minimizes the split objective at a fixed `beta`
//! over every support of the auxiliary variable.

use nalgebra::{DMatrix, DVector};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Field, Shape};
use crate::operator::{Component, OperatorSpec, StackedField};
use crate::solver::SolverConfig;

/// Largest pixel count accepted by [`dense_oracle_solve`].
pub const DENSE_LIMIT: usize = 4096;
/// Longest signal accepted by [`support_enum_oracle`].
pub const ENUM_LIMIT: usize = 12;

/// Noise level that puts the default ramp/steps image near 27.3 dB PSNR.
pub const DEFAULT_RAMP_SIGMA: f64 = 0.0431;

/// Standard normal generator; see the module docs for the algorithm.
#[derive(Debug, Clone)]
pub struct GaussianNoise {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussianNoise {
    pub fn new(seed: u64) -> Self {
        GaussianNoise {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let a = self.rng.next_u64();
        let b = self.rng.next_u64();
        let u1 = ((a >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = (b >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        let r = (-2.0 * u1.ln()).sqrt();
        let t = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * t.sin());
        r * t.cos()
    }
}

/// `clean + sigma * N(0, 1)`, sample by sample.
pub fn add_noise(clean: &Field, sigma: f64, seed: u64) -> Result<Field> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::config(format!("noise sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(clean.clone());
    }
    let mut g = GaussianNoise::new(seed);
    let mut out = clean.clone();
    for v in out.data_mut() {
        *v += sigma * g.next_normal();
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Segment {
    Constant { length: usize, level: f64 },
    Ramp { length: usize, start: f64, slope: f64 },
    /// Flat at `level` with one sample at `level + amplitude` in the middle.
    Spike { length: usize, level: f64, amplitude: f64 },
}

impl Segment {
    pub fn length(&self) -> usize {
        match *self {
            Segment::Constant { length, .. }
            | Segment::Ramp { length, .. }
            | Segment::Spike { length, .. } => length,
        }
    }

    fn sample(&self, i: usize) -> f64 {
        match *self {
            Segment::Constant { level, .. } => level,
            Segment::Ramp { start, slope, .. } => start + slope * i as f64,
            Segment::Spike {
                length,
                level,
                amplitude,
            } => {
                if i == length / 2 {
                    level + amplitude
                } else {
                    level
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSpec {
    pub length: usize,
    pub segments: Vec<Segment>,
    pub sigma: f64,
    pub seed: u64,
}

impl SignalSpec {
    /// Steps, a sloped line and spikes, similar in spirit to a textbook
    /// piecewise-polynomial test signal. `length` is split in fixed
    /// proportions.
    pub fn mixed(length: usize, sigma: f64, seed: u64) -> Result<Self> {
        if length < 16 {
            return Err(Error::config("mixed signal needs at least 16 samples"));
        }
        let part = length / 8;
        let last = length - 7 * part;
        let ramp_len = 2 * part;
        let segments = vec![
            Segment::Constant {
                length: part,
                level: 0.2,
            },
            Segment::Spike {
                length: part,
                level: 0.2,
                amplitude: 0.5,
            },
            Segment::Constant {
                length: part,
                level: 0.7,
            },
            Segment::Ramp {
                length: ramp_len,
                start: 0.7,
                slope: -0.5 / ramp_len as f64,
            },
            Segment::Constant {
                length: part,
                level: 0.4,
            },
            Segment::Spike {
                length: part,
                level: 0.4,
                amplitude: -0.3,
            },
            Segment::Ramp {
                length: last,
                start: 0.4,
                slope: 0.4 / last as f64,
            },
        ];
        Ok(SignalSpec {
            length,
            segments,
            sigma,
            seed,
        })
    }

    /// Two plateaus of `length / 2` samples.
    pub fn step(length: usize, low: f64, high: f64, sigma: f64, seed: u64) -> Self {
        SignalSpec {
            length,
            segments: vec![
                Segment::Constant {
                    length: length / 2,
                    level: low,
                },
                Segment::Constant {
                    length: length - length / 2,
                    level: high,
                },
            ],
            sigma,
            seed,
        }
    }

    pub fn clean(&self) -> Result<Field> {
        let total: usize = self.segments.iter().map(Segment::length).sum();
        if total != self.length || self.length == 0 {
            return Err(Error::config(format!(
                "segments cover {total} samples but the signal has {}",
                self.length
            )));
        }
        let mut data = Vec::with_capacity(self.length);
        for seg in &self.segments {
            data.extend((0..seg.length()).map(|i| seg.sample(i)));
        }
        Field::signal(data)
    }
}

/// Returns `(noisy, clean)`.
pub fn gen_signal(spec: &SignalSpec) -> Result<(Field, Field)> {
    let clean = spec.clean()?;
    let noisy = add_noise(&clean, spec.sigma, spec.seed)?;
    Ok((noisy, clean))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Fill {
    Constant { level: f64 },
    /// `base + slope_x * dx + slope_y * dy` from the region's top-left corner.
    Plane { base: f64, slope_x: f64, slope_y: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
    pub fill: Fill,
}

impl Region {
    fn overlaps(&self, other: &Region) -> bool {
        self.top < other.top + other.height
            && other.top < self.top + self.height
            && self.left < other.left + other.width
            && other.left < self.left + self.width
    }

    pub fn contains(&self, y: usize, x: usize) -> bool {
        (self.top..self.top + self.height).contains(&y)
            && (self.left..self.left + self.width).contains(&x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layout {
    pub background: f64,
    pub regions: Vec<Region>,
}

fn dyadic_below(v: f64) -> f64 {
    2f64.powi(v.log2().floor() as i32)
}

impl Layout {
    /// Two constant patches and one planar ramp on a constant background,
    /// scaled to `shape`. Levels and slopes are dyadic, so the clean ramp's
    /// second differences are exactly zero.
    pub fn ramp_steps(shape: Shape) -> Layout {
        let (h, w) = (shape.height, shape.width);
        let at = |num: usize, den: usize, n: usize| n * num / den;
        let ramp_h = at(3, 4, h);
        let ramp_w = at(3, 8, w);
        Layout {
            background: 0.25,
            regions: vec![
                Region {
                    top: at(1, 8, h),
                    left: at(1, 8, w),
                    height: at(5, 16, h),
                    width: at(5, 16, w),
                    fill: Fill::Constant { level: 0.75 },
                },
                Region {
                    top: at(5, 8, h),
                    left: at(1, 8, w),
                    height: at(1, 4, h),
                    width: at(3, 8, w),
                    fill: Fill::Constant { level: 0.5 },
                },
                Region {
                    top: at(1, 8, h),
                    left: at(9, 16, w),
                    height: ramp_h,
                    width: ramp_w,
                    fill: Fill::Plane {
                        base: 0.125,
                        slope_x: dyadic_below(0.375 / ramp_w.max(1) as f64),
                        slope_y: dyadic_below(0.375 / ramp_h.max(1) as f64),
                    },
                },
            ],
        }
    }

    pub fn validate(&self, shape: Shape) -> Result<()> {
        for (i, r) in self.regions.iter().enumerate() {
            if r.height == 0
                || r.width == 0
                || r.top + r.height > shape.height
                || r.left + r.width > shape.width
            {
                return Err(Error::config(format!("region {i} does not fit the image")));
            }
            for (j, s) in self.regions.iter().enumerate().skip(i + 1) {
                if r.overlaps(s) {
                    return Err(Error::config(format!("regions {i} and {j} overlap")));
                }
            }
        }
        Ok(())
    }

    pub fn render(&self, shape: Shape, channels: usize) -> Result<Field> {
        self.validate(shape)?;
        let mut out = Field::constant(shape.height, shape.width, channels, self.background);
        for r in &self.regions {
            for y in r.top..r.top + r.height {
                for x in r.left..r.left + r.width {
                    let v = match r.fill {
                        Fill::Constant { level } => level,
                        Fill::Plane {
                            base,
                            slope_x,
                            slope_y,
                        } => base + slope_x * (x - r.left) as f64 + slope_y * (y - r.top) as f64,
                    };
                    for c in 0..channels {
                        out.set(y, x, c, v);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Returns `(noisy, clean)`.
pub fn gen_ramp_steps_image(
    shape: Shape,
    channels: usize,
    layout: &Layout,
    sigma: f64,
    seed: u64,
) -> Result<(Field, Field)> {
    let clean = layout.render(shape, channels)?;
    let noisy = add_noise(&clean, sigma, seed)?;
    Ok((noisy, clean))
}

// ---------------------------------------------------------------------------
// Dense reference solver

fn circulant_diff(n: usize, forward: bool) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        if forward {
            m[(i, i)] -= 1.0;
            m[(i, (i + 1) % n)] += 1.0;
        } else {
            m[(i, i)] += 1.0;
            m[(i, (i + n - 1) % n)] -= 1.0;
        }
    }
    m
}

/// `k` alternating forward/backward differences, starting forward.
fn axis_power(n: usize, k: usize) -> DMatrix<f64> {
    let mut m = DMatrix::identity(n, n);
    for j in 0..k {
        m = circulant_diff(n, j % 2 == 0) * m;
    }
    m
}

fn component_matrix(comp: &Component, shape: Shape) -> DMatrix<f64> {
    let (h, w) = (shape.height, shape.width);
    let n = h * w;
    let mut m = DMatrix::zeros(n, n);
    for t in &comp.terms {
        // Row-major index y*w + x: y acts on the outer factor.
        m += axis_power(h, t.y).kronecker(&axis_power(w, t.x)) * t.coeff;
    }
    m
}

fn gram(spec: &OperatorSpec, shape: Shape) -> DMatrix<f64> {
    let n = shape.pixels();
    let mut g = DMatrix::zeros(n, n);
    for comp in spec.components() {
        let c = component_matrix(comp, shape);
        g += c.transpose() * c;
    }
    g
}

fn check_dense(shape: Shape) -> Result<()> {
    if shape.pixels() > DENSE_LIMIT {
        return Err(Error::SizeLimit {
            size: shape.pixels(),
            limit: DENSE_LIMIT,
        });
    }
    Ok(())
}

/// `I + alpha sum_k D_k^T D_k + beta H^T H` for one channel plane.
pub fn dense_system_matrix(
    shape: Shape,
    alpha: f64,
    beta: f64,
    high: &OperatorSpec,
    lows: &[OperatorSpec],
) -> Result<DMatrix<f64>> {
    check_dense(shape)?;
    let n = shape.pixels();
    let mut a = DMatrix::identity(n, n);
    for spec in lows {
        a += gram(spec, shape) * alpha;
    }
    a += gram(high, shape) * beta;
    Ok(a)
}

/// Solves the u-step system directly:
/// `(I + aL + bH^T H) u = (I + aL) f + b H^T w` with `L = sum_k D_k^T D_k`.
pub fn dense_oracle_solve(
    f: &Field,
    w: &StackedField,
    alpha: f64,
    beta: f64,
    high: &OperatorSpec,
    lows: &[OperatorSpec],
) -> Result<Field> {
    let shape = f.shape();
    check_dense(shape)?;
    if w.shape() != shape || w.channels() != f.channels() {
        return Err(Error::ShapeMismatch {
            expected: f.describe(),
            actual: w.base().describe(),
        });
    }
    if w.layer_count() != high.component_count() {
        return Err(Error::LayerCount {
            expected: high.component_count(),
            actual: w.layer_count(),
        });
    }
    let n = shape.pixels();
    let mut low = DMatrix::identity(n, n);
    for spec in lows {
        low += gram(spec, shape) * alpha;
    }
    let comps: Vec<DMatrix<f64>> = high
        .components()
        .iter()
        .map(|c| component_matrix(c, shape))
        .collect();
    let mut a = low.clone();
    for c in &comps {
        a += c.transpose() * c * beta;
    }
    let chol = a
        .cholesky()
        .expect("u-step system is at least the identity and always positive definite");
    let mut out = Field::zeros(shape.height, shape.width, f.channels());
    for ch in 0..f.channels() {
        let fv = DVector::from_column_slice(f.channel(ch));
        let mut rhs = &low * fv;
        for (c, layer) in comps.iter().zip(w.layers()) {
            rhs += c.transpose() * DVector::from_column_slice(layer.channel(ch)) * beta;
        }
        let u = chol.solve(&rhs);
        out.channel_mut(ch).copy_from_slice(u.as_slice());
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Support enumeration

#[derive(Debug, Clone)]
pub struct EnumResult {
    pub u: Field,
    pub w: Field,
    pub energy: f64,
    /// Positions where `w` is free (kept).
    pub support: Vec<usize>,
}

/// Global minimizer of the split objective at fixed `beta` for a
/// single-channel signal of at most [`ENUM_LIMIT`] samples. Uses
/// `config.alpha`, `config.lambda` and `config.order`.
pub fn support_enum_oracle(f: &Field, config: &SolverConfig, beta: f64) -> Result<EnumResult> {
    // The beta schedule is irrelevant here, so only the model terms are checked.
    if !(config.lambda >= 0.0 && config.lambda.is_finite() && config.alpha >= 0.0 && config.alpha.is_finite()) {
        return Err(Error::config("lambda and alpha must be finite and non-negative"));
    }
    if f.rank() != 1 || f.channels() != 1 {
        return Err(Error::config("support enumeration needs a single-channel signal"));
    }
    let n = f.height();
    if n > ENUM_LIMIT {
        return Err(Error::SizeLimit {
            size: n,
            limit: ENUM_LIMIT,
        });
    }
    if !(beta > 0.0) {
        return Err(Error::config(format!("beta must be positive, got {beta}")));
    }
    let shape = f.shape();
    let (high, lows) = config.operators(1)?;
    let h = component_matrix(&high.components()[0], shape);
    let mut low = DMatrix::identity(n, n);
    for spec in &lows {
        low += gram(spec, shape) * config.alpha;
    }
    let fv = DVector::from_column_slice(f.data());
    let rhs = &low * &fv;

    let mut best: Option<(f64, u32, DVector<f64>)> = None;
    for mask in 0u32..(1 << n) {
        // Rows of H outside the support are penalized.
        let mut hc = h.clone();
        for i in 0..n {
            if mask & (1 << i) != 0 {
                hc.row_mut(i).fill(0.0);
            }
        }
        let a = &low + hc.transpose() * &hc * beta;
        let u = a
            .cholesky()
            .expect("system is at least the identity")
            .solve(&rhs);
        let r = &u - &fv;
        let e = r.dot(&(&low * &r))
            + config.lambda * mask.count_ones() as f64
            + beta * (&hc * &u).norm_squared();
        if best.as_ref().is_none_or(|(b, _, _)| e < *b) {
            best = Some((e, mask, u));
        }
    }
    let (energy, mask, u) = best.expect("at least the empty support is tried");
    let hu = &h * &u;
    let support: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
    let wdata = (0..n)
        .map(|i| if mask & (1 << i) != 0 { hu[i] } else { 0.0 })
        .collect();
    Ok(EnumResult {
        u: Field::signal(u.as_slice().to_vec())?,
        w: Field::signal(wdata)?,
        energy,
        support,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::psnr;
    use crate::operator::{apply_adjoint, apply_diff, StencilForm};
    use crate::priors::{sparsity_ratio, Normalization};
    use crate::solver::{energy, u_step, SpectralSystem};

    fn random_field(h: usize, w: usize, c: usize, seed: u64) -> Field {
        let mut g = GaussianNoise::new(seed);
        let data = (0..h * w * c).map(|_| g.next_normal()).collect();
        Field::new(h, w, c, data).unwrap()
    }

    #[test]
    fn noise_is_deterministic_and_standard() {
        let a: Vec<f64> = {
            let mut g = GaussianNoise::new(7);
            (0..20000).map(|_| g.next_normal()).collect()
        };
        let b: Vec<f64> = {
            let mut g = GaussianNoise::new(7);
            (0..20000).map(|_| g.next_normal()).collect()
        };
        assert_eq!(a, b);
        let mean = a.iter().sum::<f64>() / a.len() as f64;
        let var = a.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / a.len() as f64;
        assert!(mean.abs() < 0.03);
        assert!((var - 1.0).abs() < 0.04);
        let mut g = GaussianNoise::new(8);
        assert_ne!(a[0], g.next_normal());
    }

    #[test]
    fn signal_generation() {
        let spec = SignalSpec::mixed(4096, 0.05, 3).unwrap();
        let (noisy, clean) = gen_signal(&spec).unwrap();
        let d = noisy.sub(&clean).unwrap();
        let sd = (d.norm_sq() / d.len() as f64).sqrt();
        assert!((0.045..=0.055).contains(&sd), "{sd}");
        let (again, _) = gen_signal(&spec).unwrap();
        assert_eq!(noisy, again);

        let quiet = SignalSpec { sigma: 0.0, ..spec.clone() };
        let (n0, c0) = gen_signal(&quiet).unwrap();
        assert_eq!(n0, c0);

        let broken = SignalSpec { length: 4000, ..spec };
        assert!(gen_signal(&broken).is_err());
    }

    #[test]
    fn spike_segment_shape() {
        let spec = SignalSpec {
            length: 5,
            segments: vec![Segment::Spike {
                length: 5,
                level: 1.0,
                amplitude: 2.0,
            }],
            sigma: 0.0,
            seed: 0,
        };
        assert_eq!(spec.clean().unwrap().data(), &[1.0, 1.0, 3.0, 1.0, 1.0]);
    }

    #[test]
    fn ramp_steps_default_calibration() {
        let shape = Shape::new(256, 256);
        let layout = Layout::ramp_steps(shape);
        let (noisy, clean) = gen_ramp_steps_image(shape, 1, &layout, DEFAULT_RAMP_SIGMA, 1).unwrap();
        let p = psnr(&noisy, &clean, 12, 1.0).unwrap();
        assert!((p - 27.3).abs() <= 0.5, "{p}");
        let consts = layout
            .regions
            .iter()
            .filter(|r| matches!(r.fill, Fill::Constant { .. }))
            .count();
        assert!(consts >= 2);
    }

    #[test]
    fn ramp_region_is_exactly_planar() {
        let shape = Shape::new(256, 256);
        let layout = Layout::ramp_steps(shape);
        let clean = layout.render(shape, 1).unwrap();
        let r = layout
            .regions
            .iter()
            .find(|r| matches!(r.fill, Fill::Plane { .. }))
            .unwrap();
        let patch = clean.window(r.top, r.left, r.height, r.width).unwrap();
        assert_eq!(sparsity_ratio(&patch, 2, 1e-300, Normalization::Raw).unwrap(), 1.0);
    }

    #[test]
    fn clean_edges_only_on_borders() {
        let shape = Shape::new(64, 64);
        let layout = Layout::ramp_steps(shape);
        let clean = layout.render(shape, 1).unwrap();
        let d = apply_diff(&clean, &OperatorSpec::gradient(2, 1).unwrap()).unwrap();
        for y in 0..63 {
            for x in 0..63 {
                let nonzero = d.layers().iter().any(|l| l.get(y, x, 0) != 0.0);
                let here = layout.regions.iter().position(|r| r.contains(y, x));
                let right = layout.regions.iter().position(|r| r.contains(y, x + 1));
                let below = layout.regions.iter().position(|r| r.contains(y + 1, x));
                let in_plane = here.is_some_and(|i| matches!(layout.regions[i].fill, Fill::Plane { .. }));
                if nonzero && !in_plane {
                    assert!(here != right || here != below, "({y},{x})");
                }
            }
        }
    }

    #[test]
    fn overlapping_regions_rejected() {
        let mut layout = Layout::ramp_steps(Shape::new(64, 64));
        let mut dup = layout.regions[0].clone();
        dup.top += 1;
        layout.regions.push(dup);
        assert!(layout.render(Shape::new(64, 64), 1).is_err());
    }

    #[test]
    fn dense_matches_u_step() {
        for (i, &(h, w)) in [(16usize, 16usize), (64, 1), (7, 5)].iter().enumerate() {
            for form in [StencilForm::Pure, StencilForm::Full] {
                let rank = if w == 1 { 1 } else { 2 };
                let mut config = SolverConfig::new(0.01, 0.5).with_order(2);
                config.stencil = form;
                let (high, lows) = config.operators(rank).unwrap();
                let f = random_field(h, w, 2, 10 + i as u64);
                let layers = (0..high.component_count())
                    .map(|k| random_field(h, w, 2, 100 + k as u64))
                    .collect();
                let wst = StackedField::new(layers).unwrap();
                let system = SpectralSystem::new(Shape::new(h, w), high.clone(), lows.clone()).unwrap();
                let fast = u_step(&f, &wst, 0.5, 3.0, &system).unwrap();
                let slow = dense_oracle_solve(&f, &wst, 0.5, 3.0, &high, &lows).unwrap();
                let rel = fast.sub(&slow).unwrap().norm_sq().sqrt() / slow.norm_sq().sqrt();
                assert!(rel < 1e-10, "{h}x{w} {form:?}: {rel}");
            }
        }
    }

    #[test]
    fn dense_single_sample_is_identity() {
        let f = Field::constant(1, 1, 1, 0.3);
        let high = OperatorSpec::gradient(2, 2).unwrap();
        let w = StackedField::new(vec![Field::constant(1, 1, 1, 5.0); 2]).unwrap();
        let u = dense_oracle_solve(&f, &w, 1.0, 10.0, &high, &[]).unwrap();
        assert!((u.data()[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn dense_matrix_matches_operator_gram() {
        // H^T H from matrices equals the adjoint applied after the operator.
        let shape = Shape::new(4, 5);
        let spec = OperatorSpec::new(2, 3, StencilForm::Full).unwrap();
        let g = dense_system_matrix(shape, 0.0, 1.0, &spec, &[]).unwrap()
            - DMatrix::<f64>::identity(20, 20);
        let f = random_field(4, 5, 1, 2);
        let via_ops = apply_adjoint(&apply_diff(&f, &spec).unwrap(), &spec).unwrap();
        let via_mat = &g * DVector::from_column_slice(f.data());
        for (a, b) in via_ops.data().iter().zip(via_mat.iter()) {
            assert!((a - b).abs() < 1e-11);
        }
    }

    #[test]
    fn dense_matrix_is_spd() {
        let shape = Shape::new(8, 8);
        let (high, lows) = SolverConfig::new(0.02, 0.3).operators(2).unwrap();
        let a = dense_system_matrix(shape, 0.3, 2.0, &high, &lows).unwrap();
        assert!((&a - a.transpose()).amax() < 1e-12);
        let shifted = a - DMatrix::<f64>::identity(64, 64);
        let eig = shifted.symmetric_eigenvalues();
        assert!(eig.min() > -1e-10, "{}", eig.min());
    }

    #[test]
    fn dense_size_limit() {
        let f = Field::zeros(65, 64, 1);
        let high = OperatorSpec::gradient(2, 1).unwrap();
        let w = StackedField::zeros_like(&f, 2);
        assert!(matches!(
            dense_oracle_solve(&f, &w, 0.1, 1.0, &high, &[]),
            Err(Error::SizeLimit { .. })
        ));
    }

    #[test]
    fn enumeration_lambda_zero() {
        let (f, _) = gen_signal(&SignalSpec::step(8, 0.0, 1.0, 0.1, 4)).unwrap();
        let config = SolverConfig::new(0.0, 0.2).with_order(2);
        let r = support_enum_oracle(&f, &config, 5.0).unwrap();
        assert!(r.energy.abs() < 1e-20);
        assert!(r.u.max_abs_diff(&f).unwrap() < 1e-12);
    }

    #[test]
    fn enumeration_huge_lambda_is_quadratic() {
        let (f, _) = gen_signal(&SignalSpec::step(9, 0.0, 1.0, 0.1, 5)).unwrap();
        let config = SolverConfig::new(1e6, 0.2).with_order(2);
        let r = support_enum_oracle(&f, &config, 5.0).unwrap();
        assert!(r.support.is_empty());
        let (high, lows) = config.operators(1).unwrap();
        let w0 = StackedField::zeros_like(&f, 1);
        let q = dense_oracle_solve(&f, &w0, 0.2, 5.0, &high, &lows).unwrap();
        assert!(r.u.max_abs_diff(&q).unwrap() < 1e-12);
    }

    #[test]
    fn enumeration_energy_agrees_with_solver_energy() {
        let (f, _) = gen_signal(&SignalSpec::step(10, 0.1, 0.9, 0.05, 6)).unwrap();
        let config = SolverConfig::new(0.05, 0.1).with_order(1);
        let r = support_enum_oracle(&f, &config, 4.0).unwrap();
        let w = StackedField::new(vec![r.w.clone()]).unwrap();
        let e = energy(&f, &r.u, &w, &config, 4.0).unwrap();
        assert!((e - r.energy).abs() < 1e-12 * e.max(1.0));
        // A noisy step with a large jump keeps exactly that jump.
        assert!(r.support.contains(&4));
    }

    #[test]
    fn enumeration_limits() {
        let f = Field::signal(vec![0.0; 13]).unwrap();
        let config = SolverConfig::new(0.01, 0.1);
        assert!(matches!(
            support_enum_oracle(&f, &config, 1.0),
            Err(Error::SizeLimit { .. })
        ));
        assert!(support_enum_oracle(&Field::zeros(3, 3, 1), &config, 1.0).is_err());
    }
}
