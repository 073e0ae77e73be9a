//! Half-quadratic splitting for L0 regularization of the highest-order gradient.
//!
//! The smoothed field `u` minimizes
//!
//! ```text
//! |u - f|^2 + alpha * sum_{k<n} |D_k (u - f)|^2 + lambda * |D_n u|_0
//! ```
//!
//! An auxiliary stack `w` stands in for `D_n u`, coupled by `beta |D_n u - w|^2`.
//! Each iteration hard-thresholds `D_n u` into `w`, then solves the quadratic
//! problem in `u` exactly in the Fourier domain. `beta` grows geometrically
//! by `kappa` and `alpha` decays by `tau` until `beta` reaches `beta_max`.

use std::time::{Duration, Instant};

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Field, Shape};
use crate::operator::{
    apply_adjoint_into, apply_diff, apply_diff_visit, default_pad, mirror_extend, mirror_pad,
    transfer_magnitude, DiffBuffers, OperatorSpec, StackedField, StencilForm,
};
use crate::spectral::{fast_len, FftBuffers, RealFft2};

/// Lower bound applied to the decaying `alpha` schedule.
pub const ALPHA_FLOOR: f64 = 1e-8;

/// How samples of `D_n u` are grouped for the hard threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// One decision per pixel, across every component and channel.
    #[default]
    Pixel,
    /// One decision per sample of every component and channel.
    Component,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Weight of the L0 term.
    pub lambda: f64,
    /// Weight of the lower-order gradient fidelity terms.
    pub alpha: f64,
    /// Growth factor of `beta` per iteration.
    pub kappa: f64,
    /// Decay factor of `alpha` per iteration.
    pub tau: f64,
    /// Initial `beta`; `None` starts at `lambda` (or 1 when `lambda` is zero).
    pub beta0: Option<f64>,
    pub beta_max: f64,
    /// Order of the L0-regularized gradient (1 to 3).
    pub order: usize,
    pub stencil: StencilForm,
    pub grouping: Grouping,
    /// Mirror padding; `None` uses 16 for images and 8 for signals.
    pub pad: Option<usize>,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda: 0.02,
            alpha: 0.1,
            kappa: 1.2,
            tau: 0.95,
            beta0: None,
            beta_max: 1e5,
            order: 2,
            stencil: StencilForm::Pure,
            grouping: Grouping::Pixel,
            pad: None,
            max_iter: 100,
        }
    }
}

impl SolverConfig {
    pub fn new(lambda: f64, alpha: f64) -> Self {
        SolverConfig {
            lambda,
            alpha,
            ..Default::default()
        }
    }

    pub fn with_order(mut self, order: usize) -> Self {
        self.order = order;
        self
    }

    pub fn with_pad(mut self, pad: usize) -> Self {
        self.pad = Some(pad);
        self
    }

    pub fn with_grouping(mut self, grouping: Grouping) -> Self {
        self.grouping = grouping;
        self
    }

    pub fn beta_start(&self) -> f64 {
        match self.beta0 {
            Some(b) => b,
            None if self.lambda > 0.0 => self.lambda,
            None => 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !finite_nonneg(self.lambda) {
            return Err(Error::config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !finite_nonneg(self.alpha) {
            return Err(Error::config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.kappa.is_finite() && self.kappa > 1.0) {
            return Err(Error::config(format!("kappa must be > 1, got {}", self.kappa)));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::config(format!("tau must be in [0, 1], got {}", self.tau)));
        }
        let b0 = self.beta_start();
        if !(b0.is_finite() && b0 > 0.0) {
            return Err(Error::config(format!("beta0 must be > 0, got {b0}")));
        }
        if !self.beta_max.is_finite() || b0 > self.beta_max {
            return Err(Error::config(format!(
                "beta0 ({b0}) must not exceed a finite beta_max ({})",
                self.beta_max
            )));
        }
        if !(1..=3).contains(&self.order) {
            return Err(Error::config(format!("order must be 1, 2 or 3, got {}", self.order)));
        }
        if self.stencil == StencilForm::Laplacian && self.order != 2 {
            return Err(Error::config("the Laplacian stencil requires order 2"));
        }
        Ok(())
    }

    /// The L0-regularized operator and the lower-order fidelity operators.
    pub fn operators(&self, rank: usize) -> Result<(OperatorSpec, Vec<OperatorSpec>)> {
        let high = OperatorSpec::new(rank, self.order, self.stencil)?;
        let low_form = match self.stencil {
            StencilForm::Full => StencilForm::Full,
            _ => StencilForm::Pure,
        };
        let lows = (1..self.order)
            .map(|k| OperatorSpec::new(rank, k, low_form))
            .collect::<Result<Vec<_>>>()?;
        Ok((high, lows))
    }

    /// Padding actually applied to a field of this shape.
    pub fn effective_pad(&self, shape: Shape) -> usize {
        let want = self.pad.unwrap_or_else(|| default_pad(shape.rank()));
        let limit = if shape.rank() == 1 {
            shape.height
        } else {
            shape.height.min(shape.width)
        };
        want.min(limit.saturating_sub(1))
    }
}

/// Diagnostics of one iteration, taken after its u-step.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub beta: f64,
    pub alpha: f64,
    pub energy: f64,
    pub nonzeros: usize,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverTrace {
    pub records: Vec<IterationRecord>,
}

impl SolverTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }
}

/// Cached spectra of the normal equations for one grid shape.
#[derive(Debug, Clone)]
pub struct SpectralSystem {
    shape: Shape,
    high: OperatorSpec,
    lows: Vec<OperatorSpec>,
    low_transfer: Vec<f64>,
    high_transfer: Vec<f64>,
    /// Parseval weight of each stored frequency: 2 for bins standing in for
    /// their conjugate twin, 1 otherwise, over `h w`.
    parseval: Vec<f64>,
    fft: RealFft2,
}

impl SpectralSystem {
    pub fn new(shape: Shape, high: OperatorSpec, lows: Vec<OperatorSpec>) -> Result<Self> {
        let high_transfer = transfer_magnitude(&high, shape)?;
        let mut low_transfer = vec![0.0; shape.pixels()];
        for spec in &lows {
            for (acc, t) in low_transfer.iter_mut().zip(transfer_magnitude(spec, shape)?) {
                *acc += t;
            }
        }
        let fft = RealFft2::new(shape);
        let (h, w) = (shape.height, shape.width);
        let n = shape.pixels() as f64;
        let mut parseval = Vec::with_capacity(fft.half_len());
        for kx in 0..fft.half_width() {
            let twin = kx != 0 && 2 * kx != w;
            parseval.extend(std::iter::repeat_n(if twin { 2.0 / n } else { 1.0 / n }, h));
        }
        Ok(SpectralSystem {
            shape,
            high,
            lows,
            low_transfer: fft.half_of(&low_transfer),
            high_transfer: fft.half_of(&high_transfer),
            parseval,
            fft,
        })
    }

    pub fn for_config(shape: Shape, config: &SolverConfig) -> Result<Self> {
        let (high, lows) = config.operators(shape.rank())?;
        Self::new(shape, high, lows)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn high(&self) -> &OperatorSpec {
        &self.high
    }

    pub fn lows(&self) -> &[OperatorSpec] {
        &self.lows
    }

    /// Summed transfer magnitude of the lower-order operators, in the
    /// half-spectrum layout of [`RealFft2`].
    pub fn low_transfer(&self) -> &[f64] {
        &self.low_transfer
    }

    pub fn high_transfer(&self) -> &[f64] {
        &self.high_transfer
    }

    /// Per-channel spectra of `f`.
    pub fn spectra(&self, f: &Field) -> Result<Vec<Vec<Complex64>>> {
        self.check(f)?;
        Ok(f.channel_planes().map(|p| self.fft.forward(p)).collect())
    }

    fn check(&self, f: &Field) -> Result<()> {
        if f.shape() != self.shape {
            return Err(Error::shape(self.shape.to_string(), f.shape().to_string()));
        }
        Ok(())
    }

    /// Exact minimizer of `|u-f|^2 + alpha sum |D_k(u-f)|^2 + beta |D_n u - w|^2`
    /// given the spectra of `f`.
    pub fn solve(
        &self,
        f_hat: &[Vec<Complex64>],
        w: &StackedField,
        alpha: f64,
        beta: f64,
    ) -> Result<Field> {
        Ok(self.solve_with_fidelity(f_hat, w, alpha, beta)?.0)
    }

    /// Like [`solve`](Self::solve), also returning the fidelity part of the
    /// energy, `|u-f|^2 + alpha sum |D_k(u-f)|^2`, evaluated in the Fourier
    /// domain.
    pub fn solve_with_fidelity(
        &self,
        f_hat: &[Vec<Complex64>],
        w: &StackedField,
        alpha: f64,
        beta: f64,
    ) -> Result<(Field, f64)> {
        let mut u = Field::zeros(self.shape.height, self.shape.width, f_hat.len());
        let fidelity = self.solve_into(f_hat, w, alpha, beta, &mut u, &mut SolveBuffers::default())?;
        Ok((u, fidelity))
    }

    /// [`solve_with_fidelity`](Self::solve_with_fidelity) writing into `u`,
    /// which must already have the system's shape and one channel per spectrum.
    fn solve_into(
        &self,
        f_hat: &[Vec<Complex64>],
        w: &StackedField,
        alpha: f64,
        beta: f64,
        u: &mut Field,
        buf: &mut SolveBuffers,
    ) -> Result<f64> {
        if w.shape() != self.shape || w.channels() != f_hat.len() {
            return Err(Error::shape(
                format!("{}x{}", self.shape, f_hat.len()),
                format!("{}x{}", w.shape(), w.channels()),
            ));
        }
        debug_assert!(u.shape() == self.shape && u.channels() == f_hat.len());
        let rhs = buf
            .rhs
            .get_or_insert_with(|| Field::zeros(self.shape.height, self.shape.width, f_hat.len()));
        apply_adjoint_into(w, &self.high, rhs, &mut buf.diff)?;
        let mut fidelity = 0.0;
        for (c, fc) in f_hat.iter().enumerate() {
            self.fft.forward_into(rhs.channel(c), &mut buf.spec, &mut buf.fft);
            let n = buf.spec.len();
            let (spec, fc) = (&mut buf.spec[..n], &fc[..n]);
            let (tl, th, pw) = (&self.low_transfer[..n], &self.high_transfer[..n], &self.parseval[..n]);
            for i in 0..n {
                let fid = 1.0 + alpha * tl[i];
                let s = (fc[i] * fid + spec[i] * beta) * (fid + beta * th[i]).recip();
                fidelity += pw[i] * fid * (s - fc[i]).norm_sqr();
                spec[i] = s;
            }
            self.fft
                .inverse_into(&mut buf.spec, u.channel_mut(c), &mut buf.fft);
        }
        // A non-finite sample in `u` implies one in its spectrum, which
        // poisons the fidelity sum; only then is the scan worth doing.
        if !fidelity.is_finite() {
            u.check_finite()?;
            return Err(Error::NonFinite { index: 0 });
        }
        Ok(fidelity)
    }
}

/// Work buffers reused across u-steps.
#[derive(Debug, Clone, Default)]
struct SolveBuffers {
    rhs: Option<Field>,
    spec: Vec<Complex64>,
    fft: FftBuffers,
    diff: DiffBuffers,
}

/// One u-subproblem solve for arbitrary `f` and `w` on the system's grid.
pub fn u_step(
    f: &Field,
    w: &StackedField,
    alpha: f64,
    beta: f64,
    system: &SpectralSystem,
) -> Result<Field> {
    let f_hat = system.spectra(f)?;
    system.solve(&f_hat, w, alpha, beta)
}

/// The hard-threshold w-subproblem: a group is kept when its squared norm is
/// at least `lambda / beta`, zeroed otherwise.
pub fn w_step(du: &StackedField, lambda: f64, beta: f64, grouping: Grouping) -> StackedField {
    let mut energy = vec![0.0; du.shape().pixels()];
    if grouping == Grouping::Pixel {
        for layer in du.layers() {
            for plane in layer.channel_planes() {
                for (e, v) in energy.iter_mut().zip(plane) {
                    *e += v * v;
                }
            }
        }
    }
    let mut w = du.clone();
    hard_threshold_into(du, lambda, beta, grouping, &mut w, &energy);
    w
}

/// [`w_step`] into `w`, returning the number of nonzero groups. `w` must
/// have the layout of `du`. Pixel grouping reads the per-pixel squared norms
/// of `du` from `energy`.
fn hard_threshold_into(
    du: &StackedField,
    lambda: f64,
    beta: f64,
    grouping: Grouping,
    w: &mut StackedField,
    energy: &[f64],
) -> usize {
    debug_assert!(beta > 0.0, "beta must be positive");
    debug_assert_eq!(du.layer_count(), w.layer_count());
    let threshold = if lambda == 0.0 { 0.0 } else { lambda / beta };
    let pairs = du.layers().iter().zip(w.layers_mut());
    match grouping {
        Grouping::Component => {
            let mut nonzeros = 0;
            for (src, dst) in pairs {
                for (o, &v) in dst.data_mut().iter_mut().zip(src.data()) {
                    let e = v * v;
                    *o = if e < threshold { 0.0 } else { v };
                    nonzeros += (e >= threshold && e > 0.0) as usize;
                }
            }
            nonzeros
        }
        Grouping::Pixel => {
            let n = du.shape().pixels();
            debug_assert_eq!(energy.len(), n);
            for (src, dst) in pairs {
                let planes = src.data().chunks_exact(n).zip(dst.data_mut().chunks_exact_mut(n));
                for (sp, dp) in planes {
                    for ((o, &v), &e) in dp.iter_mut().zip(sp).zip(energy) {
                        *o = if e < threshold { 0.0 } else { v };
                    }
                }
            }
            energy.iter().filter(|&&e| e >= threshold && e > 0.0).count()
        }
    }
}

/// Number of groups of `w` holding at least one nonzero sample.
pub fn count_nonzero_groups(w: &StackedField, grouping: Grouping) -> usize {
    match grouping {
        Grouping::Component => w
            .layers()
            .iter()
            .map(|l| l.data().iter().filter(|&&v| v != 0.0).count())
            .sum(),
        Grouping::Pixel => {
            let mut kept = vec![false; w.shape().pixels()];
            for layer in w.layers() {
                for plane in layer.channel_planes() {
                    for (k, v) in kept.iter_mut().zip(plane) {
                        *k |= *v != 0.0;
                    }
                }
            }
            kept.into_iter().filter(|&k| k).count()
        }
    }
}

/// Split objective: `|u-f|^2 + alpha sum_k |D_k(u-f)|^2 + lambda nnz(w) + beta |D_n u - w|^2`,
/// with `alpha` taken from `config`.
pub fn energy(
    f: &Field,
    u: &Field,
    w: &StackedField,
    config: &SolverConfig,
    beta: f64,
) -> Result<f64> {
    let (high, lows) = config.operators(f.rank())?;
    energy_with(f, u, w, &high, &lows, config, beta)
}

fn energy_with(
    f: &Field,
    u: &Field,
    w: &StackedField,
    high: &OperatorSpec,
    lows: &[OperatorSpec],
    config: &SolverConfig,
    beta: f64,
) -> Result<f64> {
    let residual = u.sub(f)?;
    let mut total = residual.norm_sq();
    if config.alpha > 0.0 {
        for spec in lows {
            total += config.alpha * apply_diff(&residual, spec)?.norm_sq();
        }
    }
    total += config.lambda * count_nonzero_groups(w, config.grouping) as f64;
    let coupling = apply_diff(u, high)?.sub(w)?;
    total += beta * coupling.norm_sq();
    Ok(total)
}

/// Mirror padding by `pad`, then further reflection past the bottom and
/// right edges up to FFT-friendly lengths. Without padding the field is
/// left as is, so the problem stays exactly periodic.
fn padded_domain(f: &Field, pad: usize) -> Result<Field> {
    if pad == 0 {
        return Ok(f.clone());
    }
    let padded = mirror_pad(f, pad)?;
    let (h, w) = (padded.height(), padded.width());
    let (th, tw) = (fast_len(h), if w == 1 { 1 } else { fast_len(w) });
    if (th, tw) == (h, w) {
        return Ok(padded);
    }
    mirror_extend(&padded, th - h, tw - w)
}

/// Recomputes `du = D_n u` along with the per-pixel squared norms of `du`
/// and the coupling term `|du - w|^2`, which is returned.
fn refresh_diff(
    u: &Field,
    high: &OperatorSpec,
    w: &StackedField,
    du: &mut StackedField,
    energy: &mut Vec<f64>,
    buf: &mut DiffBuffers,
) -> Result<f64> {
    energy.clear();
    energy.resize(u.shape().pixels(), 0.0);
    // Four partial sums let the reduction vectorize.
    let mut coupling = [0.0; 4];
    apply_diff_visit(u, high, du, buf, |l, c, plane| {
        let wp = w.layers()[l].channel(c);
        let mut chunks = plane.chunks_exact(4).zip(wp.chunks_exact(4));
        for (pv, tv) in chunks.by_ref() {
            for k in 0..4 {
                coupling[k] += (pv[k] - tv[k]) * (pv[k] - tv[k]);
            }
        }
        let tail = plane.len() - plane.len() % 4;
        for (&v, &t) in plane[tail..].iter().zip(&wp[tail..]) {
            coupling[0] += (v - t) * (v - t);
        }
        for (e, &v) in energy.iter_mut().zip(plane) {
            *e += v * v;
        }
    })?;
    Ok(coupling.iter().sum())
}

/// Iteration state of the splitting loop on the padded domain.
#[derive(Debug)]
pub struct Solver {
    config: SolverConfig,
    pad: usize,
    /// Input shape, recovered by [`Solver::output`].
    shape: Shape,
    f: Field,
    f_hat: Vec<Vec<Complex64>>,
    system: SpectralSystem,
    u: Field,
    /// `D_n u` for the current `u`.
    du: StackedField,
    w: StackedField,
    alpha: f64,
    beta: f64,
    iteration: usize,
    started: Instant,
    buffers: SolveBuffers,
    energy: Vec<f64>,
}

impl Solver {
    pub fn new(f: &Field, config: &SolverConfig) -> Result<Self> {
        config.validate()?;
        f.check_finite()?;
        let pad = config.effective_pad(f.shape());
        let padded = padded_domain(f, pad)?;
        let system = SpectralSystem::for_config(padded.shape(), config)?;
        let f_hat = system.spectra(&padded)?;
        let w = StackedField::zeros_like(&padded, system.high().component_count());
        let mut du = StackedField::zeros_like(&padded, system.high().component_count());
        let mut energy = Vec::new();
        let mut buffers = SolveBuffers::default();
        refresh_diff(&padded, system.high(), &w, &mut du, &mut energy, &mut buffers.diff)?;
        Ok(Solver {
            config: config.clone(),
            pad,
            shape: f.shape(),
            du,
            u: padded.clone(),
            f: padded,
            f_hat,
            system,
            w,
            alpha: config.alpha,
            beta: config.beta_start(),
            iteration: 0,
            started: Instant::now(),
            buffers,
            energy,
        })
    }

    pub fn is_done(&self) -> bool {
        self.beta >= self.config.beta_max || self.iteration >= self.config.max_iter
    }

    /// Runs one (w-step, u-step) pair, then advances the schedules.
    pub fn step(&mut self) -> Result<IterationRecord> {
        let nonzeros = hard_threshold_into(
            &self.du,
            self.config.lambda,
            self.beta,
            self.config.grouping,
            &mut self.w,
            &self.energy,
        );
        let fidelity = self.system.solve_into(
            &self.f_hat,
            &self.w,
            self.alpha,
            self.beta,
            &mut self.u,
            &mut self.buffers,
        )?;
        let coupling = refresh_diff(
            &self.u,
            self.system.high(),
            &self.w,
            &mut self.du,
            &mut self.energy,
            &mut self.buffers.diff,
        )?;
        let record = IterationRecord {
            iteration: self.iteration,
            beta: self.beta,
            alpha: self.alpha,
            energy: fidelity + self.config.lambda * nonzeros as f64 + self.beta * coupling,
            nonzeros,
            elapsed: self.started.elapsed(),
        };
        self.alpha = if self.alpha > 0.0 {
            (self.config.tau * self.alpha).max(ALPHA_FLOOR)
        } else {
            0.0
        };
        self.beta *= self.config.kappa;
        self.iteration += 1;
        Ok(record)
    }

    pub fn run(mut self) -> Result<(Field, SolverTrace)> {
        let mut trace = SolverTrace::default();
        while !self.is_done() {
            trace.records.push(self.step()?);
        }
        Ok((self.output()?, trace))
    }

    /// Current `u`, cropped back to the input shape.
    pub fn output(&self) -> Result<Field> {
        let left = if self.shape.rank() == 1 { 0 } else { self.pad };
        self.u
            .window(self.pad, left, self.shape.height, self.shape.width)
    }

    /// Padded input.
    pub fn input(&self) -> &Field {
        &self.f
    }

    /// Current `u` on the padded domain.
    pub fn current(&self) -> &Field {
        &self.u
    }

    pub fn auxiliary(&self) -> &StackedField {
        &self.w
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn pad(&self) -> usize {
        self.pad
    }

    pub fn system(&self) -> &SpectralSystem {
        &self.system
    }
}

/// Smooths `f`, returning the result (same shape as `f`) and the iteration trace.
pub fn smooth(f: &Field, config: &SolverConfig) -> Result<(Field, SolverTrace)> {
    Solver::new(f, config)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::StackedField;

    fn lcg_field(h: usize, w: usize, c: usize, seed: u64) -> Field {
        let mut s = seed ^ 0x2545_f491_4f6c_dd1d;
        Field::from_fn(h, w, c, |_, _, _| {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        })
    }

    #[test]
    fn default_config_matches_documented_values() {
        let c = SolverConfig::default();
        assert_eq!((c.kappa, c.tau, c.beta_max, c.max_iter), (1.2, 0.95, 1e5, 100));
        assert_eq!(c.beta_start(), c.lambda);
        assert_eq!(c.grouping, Grouping::Pixel);
        c.validate().unwrap();
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = [
            SolverConfig { kappa: 1.0, ..Default::default() },
            SolverConfig { tau: 1.5, ..Default::default() },
            SolverConfig { lambda: -1.0, ..Default::default() },
            SolverConfig { order: 4, ..Default::default() },
            SolverConfig { beta0: Some(1e6), ..Default::default() },
            SolverConfig { alpha: f64::NAN, ..Default::default() },
            SolverConfig { stencil: StencilForm::Laplacian, order: 3, ..Default::default() },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))), "{c:?}");
        }
    }

    #[test]
    fn w_step_per_component_example() {
        let du = StackedField::new(vec![Field::signal(vec![0.05, 0.2, -0.15]).unwrap()]).unwrap();
        let w = w_step(&du, 0.02, 2.0, Grouping::Component);
        assert_eq!(w.layers()[0].data(), &[0.0, 0.2, -0.15]);
    }

    #[test]
    fn w_step_large_threshold_zeroes_everything() {
        let du = StackedField::new(vec![lcg_field(4, 4, 2, 1), lcg_field(4, 4, 2, 2)]).unwrap();
        for g in [Grouping::Pixel, Grouping::Component] {
            let w = w_step(&du, 100.0, 1.0, g);
            assert_eq!(w.norm_sq(), 0.0);
        }
    }

    #[test]
    fn w_step_tie_keeps_value() {
        let du = StackedField::new(vec![Field::signal(vec![0.5, -0.5, 0.25]).unwrap()]).unwrap();
        let w = w_step(&du, 0.25, 1.0, Grouping::Component);
        assert_eq!(w.layers()[0].data(), &[0.5, -0.5, 0.0]);
    }

    #[test]
    fn w_step_pixel_grouping_is_joint() {
        // Pixel 0 has small entries in each layer but a large joint norm.
        let a = Field::new(1, 2, 1, vec![0.3, 0.01]).unwrap();
        let b = Field::new(1, 2, 1, vec![0.3, 0.5]).unwrap();
        let du = StackedField::new(vec![a, b]).unwrap();
        let w = w_step(&du, 0.15, 1.0, Grouping::Pixel);
        assert_eq!(w.layers()[0].data(), &[0.3, 0.01]);
        let w = w_step(&du, 0.15, 1.0, Grouping::Component);
        assert_eq!(w.layers()[0].data(), &[0.0, 0.0]);
        assert_eq!(w.layers()[1].data(), &[0.0, 0.5]);
    }

    #[test]
    fn w_step_is_idempotent() {
        let du = StackedField::new(vec![lcg_field(5, 5, 3, 7), lcg_field(5, 5, 3, 8)]).unwrap();
        for g in [Grouping::Pixel, Grouping::Component] {
            let once = w_step(&du, 0.3, 1.0, g);
            assert_eq!(w_step(&once, 0.3, 1.0, g), once);
        }
    }

    #[test]
    fn u_step_fixed_point() {
        let f = lcg_field(12, 10, 2, 3);
        let config = SolverConfig::default();
        let system = SpectralSystem::for_config(f.shape(), &config).unwrap();
        let w = apply_diff(&f, system.high()).unwrap();
        let u = u_step(&f, &w, 0.5, 3.0, &system).unwrap();
        assert!(u.max_abs_diff(&f).unwrap() < 1e-10);

        let c = Field::constant(8, 8, 1, 0.7);
        let system = SpectralSystem::for_config(c.shape(), &config).unwrap();
        let z = StackedField::zeros_like(&c, 2);
        let u = u_step(&c, &z, 0.5, 3.0, &system).unwrap();
        assert!(u.max_abs_diff(&c).unwrap() < 1e-12);
    }

    #[test]
    fn spectral_denominator_at_least_one() {
        let config = SolverConfig::default().with_order(3);
        let system = SpectralSystem::for_config(Shape::new(9, 7), &config).unwrap();
        for (tl, th) in system.low_transfer().iter().zip(system.high_transfer()) {
            assert!(*tl >= 0.0 && *th >= 0.0);
            assert!(1.0 + 0.3 * tl + 2.0 * th >= 1.0);
        }
    }

    #[test]
    fn energy_examples() {
        let f = lcg_field(6, 6, 1, 4);
        let config = SolverConfig::new(0.05, 0.3).with_grouping(Grouping::Component);
        let (high, _) = config.operators(2).unwrap();
        let w = apply_diff(&f, &high).unwrap();
        let nnz = count_nonzero_groups(&w, Grouping::Component);
        let e = energy(&f, &f, &w, &config, 10.0).unwrap();
        assert!((e - 0.05 * nnz as f64).abs() < 1e-12);

        let c = Field::constant(5, 5, 1, 0.2);
        let z = StackedField::zeros_like(&c, 2);
        assert_eq!(energy(&c, &c, &z, &config, 10.0).unwrap(), 0.0);
    }

    #[test]
    fn lambda_zero_is_identity() {
        let f = lcg_field(20, 18, 3, 9);
        let (u, trace) = smooth(&f, &SolverConfig::new(0.0, 0.1)).unwrap();
        assert!(u.max_abs_diff(&f).unwrap() < 1e-10);
        assert!(trace.iterations() > 0);
    }

    #[test]
    fn trace_schedules_are_geometric() {
        let f = lcg_field(16, 16, 1, 2);
        let config = SolverConfig::new(0.02, 0.5);
        let (_, trace) = smooth(&f, &config).unwrap();
        // beta0 = 0.02, kappa = 1.2, beta_max = 1e5: ceil(ln(5e6) / ln(1.2)) iterations.
        let expected = ((1e5f64 / 0.02).ln() / 1.2f64.ln()).ceil() as usize;
        assert_eq!(trace.iterations(), expected);
        for (i, r) in trace.records.iter().enumerate() {
            let beta = 0.02 * 1.2f64.powi(i as i32);
            assert!((r.beta - beta).abs() <= 1e-12 * beta);
            let alpha = 0.5 * 0.95f64.powi(i as i32);
            assert!((r.alpha - alpha).abs() <= 1e-12 * alpha);
            assert!(r.beta < 1e5);
        }
    }

    #[test]
    fn trace_energy_matches_spatial_energy() {
        for (f, config) in [
            (lcg_field(12, 15, 2, 3), SolverConfig::new(0.03, 0.4)),
            (lcg_field(13, 1, 1, 4), SolverConfig::new(0.01, 0.2).with_order(3)),
            (
                lcg_field(10, 9, 3, 5),
                SolverConfig::new(0.02, 0.1).with_grouping(Grouping::Component).with_order(1),
            ),
        ] {
            let mut solver = Solver::new(&f, &config).unwrap();
            for _ in 0..12 {
                let r = solver.step().unwrap();
                let at = SolverConfig {
                    alpha: r.alpha,
                    ..config.clone()
                };
                let e = energy(solver.input(), solver.current(), solver.auxiliary(), &at, r.beta)
                    .unwrap();
                assert!((e - r.energy).abs() <= 1e-10 * e.max(1.0), "{e} vs {}", r.energy);
            }
        }
    }

    #[test]
    fn padded_domain_has_fast_lengths() {
        let f = lcg_field(400, 600, 1, 1);
        let solver = Solver::new(&f, &SolverConfig::default()).unwrap();
        assert_eq!(solver.input().shape(), Shape::new(432, 640));
        assert_eq!(solver.output().unwrap(), f);
        let exact = Solver::new(&f, &SolverConfig::default().with_pad(0)).unwrap();
        assert_eq!(exact.input().shape(), f.shape());
    }

    #[test]
    fn max_iter_caps_the_loop() {
        let f = lcg_field(8, 8, 1, 2);
        let config = SolverConfig {
            max_iter: 5,
            ..Default::default()
        };
        assert_eq!(smooth(&f, &config).unwrap().1.iterations(), 5);
    }

    #[test]
    fn rejects_non_finite_input() {
        let mut data = vec![0.0; 16];
        data[3] = f64::INFINITY;
        let f = Field::constant(4, 4, 1, 0.0);
        let mut bad = f.clone();
        bad.data_mut().copy_from_slice(&data);
        assert!(matches!(
            smooth(&bad, &SolverConfig::default()),
            Err(Error::NonFinite { index: 3 })
        ));
    }

    #[test]
    fn output_shape_matches_input() {
        let f = lcg_field(23, 31, 3, 5);
        let (u, _) = smooth(&f, &SolverConfig::default()).unwrap();
        assert!(u.same_shape(&f));
        let s = Field::signal((0..40).map(|i| (i as f64 * 0.3).sin()).collect()).unwrap();
        let (u, _) = smooth(&s, &SolverConfig::default()).unwrap();
        assert!(u.same_shape(&s));
    }

    #[test]
    fn tiny_fields_clamp_padding() {
        let f = lcg_field(3, 5, 1, 1);
        let config = SolverConfig::default();
        assert_eq!(config.effective_pad(f.shape()), 2);
        smooth(&f, &config).unwrap();
        let one = Field::signal(vec![0.4]).unwrap();
        let (u, _) = smooth(&one, &config).unwrap();
        assert!((u.data()[0] - 0.4).abs() < 1e-14);
    }
}
