//! Periodic finite-difference operators of arbitrary order.
//!
//! Every operator is a stack of components. A component is a linear
//! combination of terms `coeff * D_y^a D_x^b`, where `D_y^a` means `a`
//! successive differences down the rows. Successive differences along one
//! axis alternate forward, backward, forward, ..., so the second difference is
//! the centered stencil `u[i+1] - 2u[i] + u[i-1]`. All differences wrap
//! around periodically, which makes every operator circulant and lets the
//! normal equations diagonalize under the 2D DFT.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Field, Shape};

/// Default mirror padding for images.
pub const DEFAULT_PAD_2D: usize = 16;
/// Default mirror padding for signals.
pub const DEFAULT_PAD_1D: usize = 8;

/// Largest difference order the operators support.
pub const MAX_ORDER: usize = 5;

pub fn default_pad(rank: usize) -> usize {
    if rank == 1 {
        DEFAULT_PAD_1D
    } else {
        DEFAULT_PAD_2D
    }
}

/// How the components of an order-`k` image operator are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StencilForm {
    /// Pure axis differences only: `{x^k, y^k}`.
    #[default]
    Pure,
    /// Every mixed partial `x^b y^a` (a + b = k), weighted so the squared
    /// norm carries the binomial multiplicity (`xx, yy, 2 xy` at order 2).
    Full,
    /// A single scalar 5-point Laplacian component `xx + yy` (order 2 only).
    Laplacian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    /// Number of differences down the rows.
    pub y: usize,
    /// Number of differences along the columns.
    pub x: usize,
    pub coeff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub label: String,
    pub terms: Vec<Term>,
}

impl Component {
    fn monomial(y: usize, x: usize, coeff: f64, rank: usize) -> Self {
        let label = if rank == 1 {
            "x".repeat(y)
        } else {
            format!("{}{}", "x".repeat(x), "y".repeat(y))
        };
        Component {
            label,
            terms: vec![Term { y, x, coeff }],
        }
    }
}

/// Boundary handling of the difference operators. Only periodic wrap is supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    #[default]
    Periodic,
}

/// A stack of periodic difference operators of a single order.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSpec {
    order: usize,
    rank: usize,
    components: Vec<Component>,
    boundary: Boundary,
}

impl OperatorSpec {
    pub fn new(rank: usize, order: usize, form: StencilForm) -> Result<Self> {
        if !(1..=2).contains(&rank) {
            return Err(Error::config(format!("rank must be 1 or 2, got {rank}")));
        }
        if !(1..=MAX_ORDER).contains(&order) {
            return Err(Error::config(format!(
                "order must be in 1..={MAX_ORDER}, got {order}"
            )));
        }
        let components = if rank == 1 {
            if form == StencilForm::Laplacian && order != 2 {
                return Err(Error::config("the Laplacian stencil is second order"));
            }
            vec![Component::monomial(order, 0, 1.0, 1)]
        } else {
            match form {
                StencilForm::Pure => vec![
                    Component::monomial(0, order, 1.0, 2),
                    Component::monomial(order, 0, 1.0, 2),
                ],
                StencilForm::Full => (0..=order)
                    .map(|a| Component::monomial(a, order - a, binomial(order, a).sqrt(), 2))
                    .collect(),
                StencilForm::Laplacian => {
                    if order != 2 {
                        return Err(Error::config("the Laplacian stencil is second order"));
                    }
                    vec![Component {
                        label: "lap".into(),
                        terms: vec![
                            Term {
                                y: 0,
                                x: 2,
                                coeff: 1.0,
                            },
                            Term {
                                y: 2,
                                x: 0,
                                coeff: 1.0,
                            },
                        ],
                    }]
                }
            }
        };
        Ok(OperatorSpec {
            order,
            rank,
            components,
            boundary: Boundary::Periodic,
        })
    }

    /// Pure-axis gradient stack of the given order.
    pub fn gradient(rank: usize, order: usize) -> Result<Self> {
        Self::new(rank, order, StencilForm::Pure)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn component_count(&self) -> usize {
        self.components.len()
    }

    fn check_field(&self, shape: Shape) -> Result<()> {
        if shape.rank() != self.rank {
            return Err(Error::RankMismatch {
                spec: self.rank,
                field: shape.rank(),
            });
        }
        Ok(())
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// One layer per operator component, each with the base field's shape.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedField {
    layers: Vec<Field>,
}

impl StackedField {
    pub fn new(layers: Vec<Field>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::Empty("stack without layers".into()))?;
        for l in &layers[1..] {
            first.ensure_same_shape(l)?;
        }
        Ok(StackedField { layers })
    }

    pub fn zeros_like(base: &Field, layers: usize) -> Self {
        StackedField {
            layers: (0..layers)
                .map(|_| Field::zeros(base.height(), base.width(), base.channels()))
                .collect(),
        }
    }

    pub fn layers(&self) -> &[Field] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Field] {
        &mut self.layers
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn base(&self) -> &Field {
        &self.layers[0]
    }

    pub fn shape(&self) -> Shape {
        self.layers[0].shape()
    }

    pub fn channels(&self) -> usize {
        self.layers[0].channels()
    }

    pub fn dot(&self, other: &StackedField) -> Result<f64> {
        if self.layer_count() != other.layer_count() {
            return Err(Error::LayerCount {
                expected: self.layer_count(),
                actual: other.layer_count(),
            });
        }
        self.layers
            .iter()
            .zip(&other.layers)
            .map(|(a, b)| a.dot(b))
            .sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.layers.iter().map(Field::norm_sq).sum()
    }

    /// `‖self - other‖²`. Layers are paired in order; shapes must match.
    pub fn distance_sq(&self, other: &StackedField) -> f64 {
        debug_assert_eq!(self.layer_count(), other.layer_count());
        self.layers
            .iter()
            .zip(&other.layers)
            .flat_map(|(a, b)| a.data().iter().zip(b.data()))
            .map(|(x, y)| (x - y) * (x - y))
            .sum()
    }

    pub fn sub(&self, other: &StackedField) -> Result<StackedField> {
        if self.layer_count() != other.layer_count() {
            return Err(Error::LayerCount {
                expected: self.layer_count(),
                actual: other.layer_count(),
            });
        }
        let layers = self
            .layers
            .iter()
            .zip(&other.layers)
            .map(|(a, b)| a.sub(b))
            .collect::<Result<Vec<_>>>()?;
        Ok(StackedField { layers })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dir {
    Forward,
    Backward,
}

impl Dir {
    fn nth(j: usize) -> Dir {
        if j % 2 == 0 {
            Dir::Forward
        } else {
            Dir::Backward
        }
    }

    fn flip(self) -> Dir {
        match self {
            Dir::Forward => Dir::Backward,
            Dir::Backward => Dir::Forward,
        }
    }
}

/// One periodic difference down the rows of an `h x w` plane, each result
/// handed to `emit` with its destination.
fn diff_rows(src: &[f64], dst: &mut [f64], h: usize, w: usize, dir: Dir, emit: impl Fn(&mut f64, f64)) {
    for (y, out) in dst.chunks_exact_mut(w).enumerate().take(h) {
        let other = match dir {
            Dir::Forward => (y + 1) % h,
            Dir::Backward => (y + h - 1) % h,
        };
        let row = &src[y * w..(y + 1) * w];
        let nb = &src[other * w..(other + 1) * w];
        match dir {
            Dir::Forward => {
                for ((o, a), b) in out.iter_mut().zip(row).zip(nb) {
                    emit(o, b - a);
                }
            }
            Dir::Backward => {
                for ((o, a), b) in out.iter_mut().zip(row).zip(nb) {
                    emit(o, a - b);
                }
            }
        }
    }
}

/// One periodic difference along the columns of an `h x w` plane.
fn diff_cols(src: &[f64], dst: &mut [f64], h: usize, w: usize, dir: Dir, emit: impl Fn(&mut f64, f64)) {
    for (row, out) in src.chunks_exact(w).zip(dst.chunks_exact_mut(w)).take(h) {
        match dir {
            Dir::Forward => {
                for ((o, a), b) in out.iter_mut().zip(row).zip(&row[1..]) {
                    emit(o, b - a);
                }
                emit(&mut out[w - 1], row[0] - row[w - 1]);
            }
            Dir::Backward => {
                emit(&mut out[0], row[0] - row[w - 1]);
                for ((o, a), b) in out[1..].iter_mut().zip(row).zip(&row[1..]) {
                    emit(o, b - a);
                }
            }
        }
    }
}

/// Writes `coeff * D_y^a D_x^b plane` (or its adjoint) into `out`, adding
/// to what is there when `accumulate` is set.
fn apply_term(
    plane: &[f64],
    out: &mut [f64],
    shape: Shape,
    term: &Term,
    adjoint: bool,
    accumulate: bool,
    scratch: &mut [Vec<f64>; 2],
) {
    let (h, w) = (shape.height, shape.width);
    // The adjoint of a forward difference is minus the backward difference.
    let sign = if adjoint && (term.x + term.y) % 2 == 1 {
        -1.0
    } else {
        1.0
    };
    let k = sign * term.coeff;
    let passes: Vec<(bool, Dir)> = (0..term.x)
        .map(|j| (true, j))
        .chain((0..term.y).map(|j| (false, j)))
        .map(|(cols, j)| (cols, if adjoint { Dir::nth(j).flip() } else { Dir::nth(j) }))
        .collect();
    let Some((&(last_cols, last_dir), inner)) = passes.split_last() else {
        for (o, v) in out.iter_mut().zip(plane) {
            *o = if accumulate { *o + k * v } else { k * v };
        }
        return;
    };
    let [cur, next] = scratch;
    if !inner.is_empty() {
        cur.resize(plane.len(), 0.0);
        next.resize(plane.len(), 0.0);
    }
    let store = |o: &mut f64, v: f64| *o = v;
    for (i, &(cols, dir)) in inner.iter().enumerate() {
        let src: &[f64] = if i == 0 { plane } else { cur };
        if cols {
            diff_cols(src, next, h, w, dir, store);
        } else {
            diff_rows(src, next, h, w, dir, store);
        }
        std::mem::swap(cur, next);
    }
    let src: &[f64] = if inner.is_empty() { plane } else { cur };
    match (last_cols, accumulate) {
        (true, false) => diff_cols(src, out, h, w, last_dir, |o, v| *o = k * v),
        (true, true) => diff_cols(src, out, h, w, last_dir, |o, v| *o += k * v),
        (false, false) => diff_rows(src, out, h, w, last_dir, |o, v| *o = k * v),
        (false, true) => diff_rows(src, out, h, w, last_dir, |o, v| *o += k * v),
    }
}

/// Writes `sum_terms coeff * term(plane)` into `out`, or adds it when
/// `accumulate` is set.
fn apply_component(
    plane: &[f64],
    out: &mut [f64],
    shape: Shape,
    terms: &[Term],
    adjoint: bool,
    accumulate: bool,
    scratch: &mut [Vec<f64>; 2],
) {
    if terms.is_empty() && !accumulate {
        out.fill(0.0);
    }
    for (i, term) in terms.iter().enumerate() {
        apply_term(plane, out, shape, term, adjoint, accumulate || i > 0, scratch);
    }
}

/// Reusable buffers for the in-place operator applications.
#[derive(Debug, Clone, Default)]
pub(crate) struct DiffBuffers {
    terms: [Vec<f64>; 2],
}

/// Applies every component of `spec` to every channel of `field`.
pub fn apply_diff(field: &Field, spec: &OperatorSpec) -> Result<StackedField> {
    let mut out = StackedField { layers: Vec::new() };
    apply_diff_into(field, spec, &mut out, &mut DiffBuffers::default())?;
    Ok(out)
}

/// [`apply_diff`] into `out`, reusing its storage when the layout matches.
pub(crate) fn apply_diff_into(
    field: &Field,
    spec: &OperatorSpec,
    out: &mut StackedField,
    buf: &mut DiffBuffers,
) -> Result<()> {
    apply_diff_visit(field, spec, out, buf, |_, _, _| {})
}

/// [`apply_diff_into`], handing each finished `(layer, channel)` plane to
/// `visit` while it is still warm in cache.
pub(crate) fn apply_diff_visit(
    field: &Field,
    spec: &OperatorSpec,
    out: &mut StackedField,
    buf: &mut DiffBuffers,
    mut visit: impl FnMut(usize, usize, &[f64]),
) -> Result<()> {
    spec.check_field(field.shape())?;
    let shape = field.shape();
    let fits = out.layers.len() == spec.component_count()
        && out.layers.iter().all(|l| l.same_shape(field));
    if !fits {
        out.layers = (0..spec.component_count())
            .map(|_| Field::zeros(shape.height, shape.width, field.channels()))
            .collect();
    }
    for (l, (comp, layer)) in spec.components.iter().zip(&mut out.layers).enumerate() {
        for c in 0..field.channels() {
            let dst = layer.channel_mut(c);
            apply_component(field.channel(c), dst, shape, &comp.terms, false, false, &mut buf.terms);
            visit(l, c, dst);
        }
    }
    Ok(())
}

/// Exact adjoint of [`apply_diff`]: sums the transposed components over the stack.
pub fn apply_adjoint(stack: &StackedField, spec: &OperatorSpec) -> Result<Field> {
    let base = stack.base();
    let mut out = Field::zeros(base.height(), base.width(), base.channels());
    apply_adjoint_into(stack, spec, &mut out, &mut DiffBuffers::default())?;
    Ok(out)
}

/// [`apply_adjoint`] into `out`, which takes the stack's shape.
pub(crate) fn apply_adjoint_into(
    stack: &StackedField,
    spec: &OperatorSpec,
    out: &mut Field,
    buf: &mut DiffBuffers,
) -> Result<()> {
    if stack.layer_count() != spec.component_count() {
        return Err(Error::LayerCount {
            expected: spec.component_count(),
            actual: stack.layer_count(),
        });
    }
    let base = stack.base();
    spec.check_field(base.shape())?;
    let shape = base.shape();
    if !out.same_shape(base) {
        *out = Field::zeros(shape.height, shape.width, base.channels());
    }
    for c in 0..base.channels() {
        let dst = out.channel_mut(c);
        for (i, (comp, layer)) in spec.components.iter().zip(&stack.layers).enumerate() {
            apply_component(layer.channel(c), dst, shape, &comp.terms, true, i > 0, &mut buf.terms);
        }
    }
    Ok(())
}

fn axis_response(n: usize, k: usize, dir: Dir) -> Complex64 {
    let theta = 2.0 * PI * k as f64 / n as f64;
    let e = Complex64::from_polar(1.0, theta);
    match dir {
        Dir::Forward => e - 1.0,
        Dir::Backward => Complex64::new(1.0, 0.0) - e.conj(),
    }
}

fn repeated_response(n: usize, k: usize, count: usize) -> Complex64 {
    (0..count).fold(Complex64::new(1.0, 0.0), |acc, j| {
        acc * axis_response(n, k, Dir::nth(j))
    })
}

/// Complex frequency response of one component at DFT bin `(ky, kx)`.
pub(crate) fn component_response(comp: &Component, shape: Shape, ky: usize, kx: usize) -> Complex64 {
    comp.terms
        .iter()
        .map(|t| {
            t.coeff
                * repeated_response(shape.height, ky, t.y)
                * repeated_response(shape.width, kx, t.x)
        })
        .sum()
}

/// Sum over components of the squared transfer modulus at every DFT bin,
/// row-major over `shape`. This is the spectrum of `A^T A` for the stack `A`.
pub fn transfer_magnitude(spec: &OperatorSpec, shape: Shape) -> Result<Vec<f64>> {
    if shape.height == 0 || shape.width == 0 {
        return Err(Error::Empty(format!("spectrum shape {shape}")));
    }
    spec.check_field(shape)?;
    let mut out = vec![0.0; shape.pixels()];
    for comp in &spec.components {
        for ky in 0..shape.height {
            for kx in 0..shape.width {
                out[ky * shape.width + kx] += component_response(comp, shape, ky, kx).norm_sqr();
            }
        }
    }
    out[0] = 0.0;
    Ok(out)
}

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
    reflect(i, n)
}

/// Reflective extension by `pad` samples on every spatial edge, without
/// repeating the edge sample. Signals (width 1) are padded along rows only.
pub fn mirror_pad(field: &Field, pad: usize) -> Result<Field> {
    if pad == 0 {
        return Ok(field.clone());
    }
    let (h, w) = (field.height(), field.width());
    let rank = field.rank();
    let limit = if rank == 1 { h } else { h.min(w) };
    if pad >= limit {
        return Err(Error::PadTooLarge {
            pad,
            height: h,
            width: w,
        });
    }
    let px = if rank == 1 { 0 } else { pad };
    let (ph, pw) = (h + 2 * pad, w + 2 * px);
    Ok(Field::from_fn(ph, pw, field.channels(), |y, x, c| {
        let sy = reflect(y as isize - pad as isize, h);
        let sx = reflect(x as isize - px as isize, w);
        field.get(sy, sx, c)
    }))
}

/// Reflects `bottom` more rows past the last row and `right` more columns
/// past the last column, without repeating the edge sample.
pub fn mirror_extend(field: &Field, bottom: usize, right: usize) -> Result<Field> {
    let (h, w) = (field.height(), field.width());
    if (bottom > 0 && h < 2) || (right > 0 && w < 2) {
        return Err(Error::PadTooLarge {
            pad: bottom.max(right),
            height: h,
            width: w,
        });
    }
    Ok(Field::from_fn(h + bottom, w + right, field.channels(), |y, x, c| {
        field.get(reflect(y as isize, h), reflect(x as isize, w), c)
    }))
}

/// Inverse of [`mirror_pad`].
pub fn crop(field: &Field, pad: usize) -> Result<Field> {
    if pad == 0 {
        return Ok(field.clone());
    }
    let (h, w) = (field.height(), field.width());
    let px = if field.rank() == 1 { 0 } else { pad };
    if 2 * pad >= h || 2 * px >= w {
        return Err(Error::CropTooLarge {
            crop: pad,
            height: h,
            width: w,
        });
    }
    field.window(pad, px, h - 2 * pad, w - 2 * px)
}
