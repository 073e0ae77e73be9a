//! Higher-order gradient statistics.
//!
//! For each order `k` the gradient stack `D_k f` (pure x^k, y^k components)
//! is reduced to a per-pixel magnitude: Euclidean norm over components,
//! then averaged over channels. Only the interior is counted, a border of
//! `k` samples is dropped on each side so periodic wrap-around never enters
//! the statistics.
//!
//! Raw periodic differences have gain up to `2^k` at the Nyquist frequency,
//! so the magnitude of a checkerboard grows with the order. With
//! [`Normalization::UnitGain`] the order-`k` magnitude is divided by `2^k`,
//! which puts every order on the same `[0, 1]`-per-component scale.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::imageio::{self, LoadOptions};
use crate::operator::{apply_diff, OperatorSpec, StencilForm, MAX_ORDER};

pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const DEFAULT_BINS: usize = 64;
pub const DEFAULT_RANGE: (f64, f64) = (0.0, 0.25);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    Raw,
    UnitGain,
}

impl Normalization {
    fn factor(self, order: usize) -> f64 {
        match self {
            Normalization::Raw => 1.0,
            Normalization::UnitGain => 1.0 / (1u64 << order) as f64,
        }
    }
}

/// Normalized histogram. Samples outside `[lo, hi)` land in the first or
/// last bin so the probabilities always sum to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub samples: usize,
}

impl Histogram {
    pub fn bin_centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect()
    }

    /// Probability mass in bins whose upper edge is at most `t`.
    pub fn mass_below(&self, t: f64) -> f64 {
        self.edges[1..]
            .iter()
            .zip(&self.probabilities)
            .filter(|(e, _)| **e <= t)
            .map(|(_, p)| p)
            .sum()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderStats {
    pub order: usize,
    /// Interior samples with magnitude at most epsilon.
    pub sparse: usize,
    pub total: usize,
    pub ratio: f64,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, Serialize)]
pub struct SparsityReport {
    pub epsilon: f64,
    pub normalization: Normalization,
    pub orders: Vec<OrderStats>,
    pub images: usize,
    pub skipped: usize,
}

impl SparsityReport {
    pub fn ratios(&self) -> Vec<f64> {
        self.orders.iter().map(|o| o.ratio).collect()
    }

    /// `ratio(k+1) - ratio(k)` for consecutive orders.
    pub fn gaps(&self) -> Vec<f64> {
        self.orders.windows(2).map(|w| w[1].ratio - w[0].ratio).collect()
    }

    /// CSV rows `order,ratio,gap`; the gap column is the step to the next
    /// order and empty on the last row.
    pub fn write_ratio_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "order,ratio,gap")?;
        let gaps = self.gaps();
        for (i, o) in self.orders.iter().enumerate() {
            match gaps.get(i) {
                Some(g) => writeln!(out, "{},{:.9},{:.9}", o.order, o.ratio, g)?,
                None => writeln!(out, "{},{:.9},", o.order, o.ratio)?,
            }
        }
        Ok(())
    }

    pub fn write_histogram_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "order,bin_center,probability")?;
        for o in &self.orders {
            for (c, p) in o.histogram.bin_centers().iter().zip(&o.histogram.probabilities) {
                writeln!(out, "{},{:.9e},{:.9e}", o.order, c, p)?;
            }
        }
        Ok(())
    }
}

fn check_order(order: usize) -> Result<()> {
    if !(1..=MAX_ORDER).contains(&order) {
        return Err(Error::config(format!("order must be in 1..={MAX_ORDER}, got {order}")));
    }
    Ok(())
}

/// Interior per-pixel magnitudes of the order-`order` gradient.
pub fn gradient_magnitudes(
    image: &Field,
    order: usize,
    normalization: Normalization,
) -> Result<Vec<f64>> {
    check_order(order)?;
    let spec = OperatorSpec::new(image.rank(), order, StencilForm::Pure)?;
    let stack = apply_diff(image, &spec)?;
    let (h, w, channels) = (image.height(), image.width(), image.channels());
    let bx = if image.rank() == 1 { 0 } else { order };
    if h <= 2 * order || w <= 2 * bx {
        return Err(Error::Empty(format!(
            "no interior left in a {h}x{w} image at order {order}"
        )));
    }
    let scale = normalization.factor(order);
    let mut out = Vec::with_capacity((h - 2 * order) * (w - 2 * bx));
    for y in order..h - order {
        for x in bx..w - bx {
            let mut acc = 0.0;
            for c in 0..channels {
                let sq: f64 = stack.layers().iter().map(|l| l.get(y, x, c).powi(2)).sum();
                acc += sq.sqrt();
            }
            out.push(scale * acc / channels as f64);
        }
    }
    Ok(out)
}

fn bin_counts(mags: &[f64], bins: usize, range: (f64, f64), counts: &mut [usize]) {
    let (lo, hi) = range;
    let width = (hi - lo) / bins as f64;
    for &m in mags {
        let b = ((m - lo) / width).floor();
        let b = if b < 0.0 { 0 } else { (b as usize).min(bins - 1) };
        counts[b] += 1;
    }
}

fn histogram_from_counts(counts: &[usize], range: (f64, f64)) -> Histogram {
    let bins = counts.len();
    let total: usize = counts.iter().sum();
    let width = (range.1 - range.0) / bins as f64;
    Histogram {
        edges: (0..=bins).map(|i| range.0 + width * i as f64).collect(),
        probabilities: counts.iter().map(|&c| c as f64 / total as f64).collect(),
        samples: total,
    }
}

fn check_hist_params(bins: usize, range: (f64, f64)) -> Result<()> {
    if bins < 2 {
        return Err(Error::config(format!("bins must be at least 2, got {bins}")));
    }
    if !(range.0.is_finite() && range.1.is_finite() && range.1 > range.0) {
        return Err(Error::config(format!("invalid histogram range {range:?}")));
    }
    Ok(())
}

pub fn gradient_histogram(
    image: &Field,
    order: usize,
    bins: usize,
    range: (f64, f64),
    normalization: Normalization,
) -> Result<Histogram> {
    check_hist_params(bins, range)?;
    let mags = gradient_magnitudes(image, order, normalization)?;
    let mut counts = vec![0; bins];
    bin_counts(&mags, bins, range, &mut counts);
    Ok(histogram_from_counts(&counts, range))
}

/// Fraction of interior magnitudes `<= epsilon`.
pub fn sparsity_ratio(
    image: &Field,
    order: usize,
    epsilon: f64,
    normalization: Normalization,
) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::config(format!("epsilon must be positive, got {epsilon}")));
    }
    let mags = gradient_magnitudes(image, order, normalization)?;
    Ok(mags.iter().filter(|&&m| m <= epsilon).count() as f64 / mags.len() as f64)
}

#[derive(Debug, Clone)]
pub struct ReportOptions {
    pub epsilon: f64,
    pub bins: usize,
    pub range: (f64, f64),
    pub normalization: Normalization,
    pub max_order: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            epsilon: DEFAULT_EPSILON,
            bins: DEFAULT_BINS,
            range: DEFAULT_RANGE,
            normalization: Normalization::Raw,
            max_order: MAX_ORDER,
        }
    }
}

struct Accumulator {
    sparse: Vec<usize>,
    total: Vec<usize>,
    counts: Vec<Vec<usize>>,
    images: usize,
}

impl Accumulator {
    fn new(opts: &ReportOptions) -> Self {
        Accumulator {
            sparse: vec![0; opts.max_order],
            total: vec![0; opts.max_order],
            counts: vec![vec![0; opts.bins]; opts.max_order],
            images: 0,
        }
    }

    fn add(&mut self, image: &Field, opts: &ReportOptions) -> Result<()> {
        for k in 1..=opts.max_order {
            let mags = gradient_magnitudes(image, k, opts.normalization)?;
            self.sparse[k - 1] += mags.iter().filter(|&&m| m <= opts.epsilon).count();
            self.total[k - 1] += mags.len();
            bin_counts(&mags, opts.bins, opts.range, &mut self.counts[k - 1]);
        }
        self.images += 1;
        Ok(())
    }

    fn finish(self, opts: &ReportOptions, skipped: usize) -> SparsityReport {
        let orders = (0..opts.max_order)
            .map(|i| OrderStats {
                order: i + 1,
                sparse: self.sparse[i],
                total: self.total[i],
                ratio: self.sparse[i] as f64 / self.total[i] as f64,
                histogram: histogram_from_counts(&self.counts[i], opts.range),
            })
            .collect();
        SparsityReport {
            epsilon: opts.epsilon,
            normalization: opts.normalization,
            orders,
            images: self.images,
            skipped,
        }
    }
}

fn check_report_opts(opts: &ReportOptions) -> Result<()> {
    check_order(opts.max_order)?;
    check_hist_params(opts.bins, opts.range)?;
    if !(opts.epsilon > 0.0) {
        return Err(Error::config(format!("epsilon must be positive, got {}", opts.epsilon)));
    }
    Ok(())
}

/// Pools samples over the corpus, so each ratio is the sample-weighted mean
/// of the per-image ratios.
pub fn semisparsity_report(corpus: &[Field], opts: &ReportOptions) -> Result<SparsityReport> {
    check_report_opts(opts)?;
    if corpus.is_empty() {
        return Err(Error::Empty("corpus has no images".into()));
    }
    let mut acc = Accumulator::new(opts);
    for image in corpus {
        acc.add(image, opts)?;
    }
    Ok(acc.finish(opts, 0))
}

/// Like [`semisparsity_report`] but loads images from disk. Entries that
/// fail to load or are too small are counted in `skipped`.
pub fn semisparsity_report_files<P: AsRef<Path>>(
    paths: &[P],
    opts: &ReportOptions,
    load: &LoadOptions,
) -> Result<SparsityReport> {
    check_report_opts(opts)?;
    let mut acc = Accumulator::new(opts);
    let mut skipped = 0;
    for p in paths {
        let image = match imageio::load(p, load) {
            Ok(f) => f,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        let mut trial = Accumulator::new(opts);
        match trial.add(&image, opts) {
            Ok(()) => acc.add(&image, opts)?,
            Err(_) => skipped += 1,
        }
    }
    if acc.images == 0 {
        return Err(Error::Empty(format!(
            "no readable images in the corpus ({skipped} skipped)"
        )));
    }
    Ok(acc.finish(opts, skipped))
}
