//! Oracle checks shared by `semisparse verify` and the acceptance suite.
//!
//! Each check returns its raw measurements; pass/fail thresholds are applied
//! by the caller.

use std::time::{Duration, Instant};

use semisparse::operator::StencilForm;
use semisparse::synth::{
    dense_oracle_solve, gen_ramp_steps_image, gen_signal, support_enum_oracle, GaussianNoise,
    Layout, SignalSpec,
};
use semisparse::{
    energy, u_step, w_step, Field, Grouping, Result, Shape, Solver, SolverConfig, SpectralSystem,
    StackedField,
};

fn normal_field(h: usize, w: usize, c: usize, g: &mut GaussianNoise) -> Field {
    Field::from_fn(h, w, c, |_, _, _| g.next_normal())
}

/// `10^x` with `x` normal, clamped to `[lo, hi]`.
fn log_uniformish(g: &mut GaussianNoise, lo: f64, hi: f64) -> f64 {
    10f64.powf(g.next_normal().clamp(lo, hi))
}

#[derive(Debug, Clone)]
pub struct DenseSolveReport {
    pub instances: usize,
    /// Largest `max|u - u*| / max|u*|` seen.
    pub worst: f64,
    pub elapsed: Duration,
}

/// Compares [`u_step`] with a dense direct solve on random `(f, w, alpha,
/// beta)` at 16x16 and 64x1, `per_shape` instances each. Orders, stencils
/// and channel counts cycle across instances.
pub fn dense_solve(per_shape: usize, seed: u64) -> Result<DenseSolveReport> {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let shapes = [Shape::new(16, 16), Shape::new(64, 1)];
    for (s, &shape) in shapes.iter().enumerate() {
        for i in 0..per_shape {
            let mut g = GaussianNoise::new(seed ^ ((s as u64) << 32) ^ i as u64);
            let order = 1 + i % 3;
            let stencil = match (shape.rank(), i % 4) {
                (1, _) | (_, 0) | (_, 1) => StencilForm::Pure,
                (_, 3) if order == 2 => StencilForm::Laplacian,
                _ => StencilForm::Full,
            };
            let config = SolverConfig {
                order,
                stencil,
                ..SolverConfig::default()
            };
            let (high, lows) = config.operators(shape.rank())?;
            let channels = 1 + i % 2;
            let f = normal_field(shape.height, shape.width, channels, &mut g);
            let layers = (0..high.component_count())
                .map(|_| normal_field(shape.height, shape.width, channels, &mut g))
                .collect();
            let w = StackedField::new(layers)?;
            let alpha = log_uniformish(&mut g, -2.0, 1.0);
            let beta = log_uniformish(&mut g, -1.0, 4.0);
            let system = SpectralSystem::new(shape, high.clone(), lows.clone())?;
            let fast = u_step(&f, &w, alpha, beta, &system)?;
            let dense = dense_oracle_solve(&f, &w, alpha, beta, &high, &lows)?;
            let scale = dense.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            worst = worst.max(fast.max_abs_diff(&dense)? / scale.max(f64::MIN_POSITIVE));
        }
    }
    Ok(DenseSolveReport {
        instances: per_shape * shapes.len(),
        worst,
        elapsed: start.elapsed(),
    })
}

#[derive(Debug, Clone, Default)]
pub struct WStepReport {
    /// Groups compared.
    pub cases: usize,
    pub mismatches: usize,
    /// Cases where the group energy equals the threshold exactly.
    pub ties: usize,
}

impl WStepReport {
    fn merge(&mut self, other: WStepReport) {
        self.cases += other.cases;
        self.mismatches += other.mismatches;
        self.ties += other.ties;
    }
}

/// Compares the hard threshold against a plain per-group rule.
///
/// Component grouping runs over the scalars `k / 1000`, `|k| <= 1000`, with
/// thresholds set to the squares of grid points so that ties occur.
/// Pixel grouping runs over all pairs of `k / 64`, `|k| <= 64`, in two
/// layers; these are dyadic, so the group energies are exact and ties are
/// hit exactly as well.
pub fn w_step_grid() -> WStepReport {
    let betas = [0.5, 1.0, 2.0, 8.0];
    let mut report = WStepReport::default();

    let values: Vec<f64> = (-1000..=1000).map(|k| k as f64 * 1e-3).collect();
    let du = StackedField::new(vec![Field::new(1, values.len(), 1, values.clone()).unwrap()]).unwrap();
    for j in [0, 1, 7, 100, 333, 999, 1000] {
        let t = values[1000 + j] * values[1000 + j];
        for beta in betas {
            let lambda = t * beta;
            let thr = lambda / beta;
            let w = w_step(&du, lambda, beta, Grouping::Component);
            let mut r = WStepReport::default();
            for (v, got) in values.iter().zip(w.layers()[0].data()) {
                let want = if v * v >= thr { *v } else { 0.0 };
                r.cases += 1;
                r.ties += usize::from(v * v == thr);
                r.mismatches += usize::from(want.to_bits() != got.to_bits());
            }
            report.merge(r);
        }
    }

    let n = 129;
    let grid = |k: usize| (k as f64 - 64.0) / 64.0;
    let a = Field::from_fn(n, n, 1, |y, _, _| grid(y));
    let b = Field::from_fn(n, n, 1, |_, x, _| grid(x));
    let du = StackedField::new(vec![a.clone(), b.clone()]).unwrap();
    for (m, k) in [(0, 0), (1, 0), (3, 4), (10, 20), (32, 32), (64, 64)] {
        let t = (m * m + k * k) as f64 / 4096.0;
        for beta in betas {
            let lambda = t * beta;
            let thr = lambda / beta;
            let w = w_step(&du, lambda, beta, Grouping::Pixel);
            let mut r = WStepReport::default();
            for i in 0..n * n {
                let (va, vb) = (a.data()[i], b.data()[i]);
                let e = va * va + vb * vb;
                let keep = e >= thr;
                let want = if keep { (va, vb) } else { (0.0, 0.0) };
                let got = (w.layers()[0].data()[i], w.layers()[1].data()[i]);
                r.cases += 1;
                r.ties += usize::from(e == thr);
                r.mismatches += usize::from(
                    want.0.to_bits() != got.0.to_bits() || want.1.to_bits() != got.1.to_bits(),
                );
            }
            report.merge(r);
        }
    }
    report
}

#[derive(Debug, Clone)]
pub struct EnumReport {
    /// Solver energy over the oracle energy, per instance.
    pub ratios: Vec<f64>,
    pub worst: f64,
    pub elapsed: Duration,
}

impl EnumReport {
    pub fn failures(&self, bound: f64) -> usize {
        self.ratios.iter().filter(|&&r| r > bound).count()
    }
}

/// Runs the solver to completion on noisy 10-sample steps and compares its
/// final split energy with the enumerated global minimum at the same
/// `beta` and `alpha` (those of the last iteration).
pub fn support_enum(instances: usize, seed: u64, config: &SolverConfig) -> Result<EnumReport> {
    let start = Instant::now();
    let mut ratios = Vec::with_capacity(instances);
    for i in 0..instances {
        let spec = SignalSpec::step(10, 0.2, 0.8, 0.05, seed.wrapping_add(i as u64));
        let (f, _) = gen_signal(&spec)?;
        let mut solver = Solver::new(&f, config)?;
        let (mut beta, mut alpha) = (solver.beta(), solver.alpha());
        while !solver.is_done() {
            beta = solver.beta();
            alpha = solver.alpha();
            solver.step()?;
        }
        let at = SolverConfig {
            alpha,
            ..config.clone()
        };
        let ours = energy(solver.input(), solver.current(), solver.auxiliary(), &at, beta)?;
        let best = support_enum_oracle(solver.input(), &at, beta)?;
        ratios.push(ours / best.energy);
    }
    let worst = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(EnumReport {
        ratios,
        worst,
        elapsed: start.elapsed(),
    })
}

#[derive(Debug, Clone)]
pub struct DescentReport {
    pub runs: usize,
    pub pairs: usize,
    /// Largest `(after - before) / before` over all pairs; negative when
    /// every pair decreased the energy.
    pub worst_increase: f64,
}

/// Evaluates the split energy before and after every (w, u) pair at the
/// pair's own `alpha` and `beta`, on noisy 32x32 ramp-step images. Orders,
/// groupings and stencils vary across runs.
pub fn block_descent(runs: usize, seed: u64) -> Result<DescentReport> {
    let shape = Shape::new(32, 32);
    let layout = Layout::ramp_steps(shape);
    let mut worst = f64::NEG_INFINITY;
    let mut pairs = 0;
    for r in 0..runs {
        let (f, _) = gen_ramp_steps_image(shape, 1 + r % 3, &layout, 0.05, seed.wrapping_add(r as u64))?;
        let order = 1 + r % 3;
        let config = SolverConfig {
            order,
            grouping: if r % 2 == 0 {
                Grouping::Pixel
            } else {
                Grouping::Component
            },
            stencil: if r % 4 == 3 {
                StencilForm::Full
            } else {
                StencilForm::Pure
            },
            ..SolverConfig::default()
        };
        let mut solver = Solver::new(&f, &config)?;
        while !solver.is_done() {
            let at = SolverConfig {
                alpha: solver.alpha(),
                ..config.clone()
            };
            let beta = solver.beta();
            let before = energy(solver.input(), solver.current(), solver.auxiliary(), &at, beta)?;
            solver.step()?;
            let after = energy(solver.input(), solver.current(), solver.auxiliary(), &at, beta)?;
            worst = worst.max((after - before) / before.abs().max(f64::MIN_POSITIVE));
            pairs += 1;
        }
    }
    Ok(DescentReport {
        runs,
        pairs,
        worst_increase: worst,
    })
}
