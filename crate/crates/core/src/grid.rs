//! Uniform rectangular charts, sampled tensor fields and central finite
//! differences.
//!
//! A [`TensorField`] stores its components node-major: the values for node
//! `k` occupy `values[k * ncomp..(k + 1) * ncomp]`, and within a node the
//! index slots are flattened row-major. Every differentiation widens the
//! field's `margin`, the number of boundary layers on which derived values
//! are not meaningful. Nothing is evaluated with one-sided stencils.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest number of nodes per axis; an order-4 stencil needs five.
pub const MIN_POINTS: usize = 5;

/// A uniform tensor-product grid over a coordinate box.
#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    lo: Vec<f64>,
    hi: Vec<f64>,
    points: Vec<usize>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
}

impl Chart {
    pub fn new(ranges: &[(f64, f64)], points: &[usize]) -> Result<Self> {
        if ranges.is_empty() {
            return Err(Error::InvalidChart("chart needs at least one axis".into()));
        }
        if ranges.len() != points.len() {
            return Err(Error::InvalidChart(format!(
                "{} ranges but {} point counts",
                ranges.len(),
                points.len()
            )));
        }
        for (axis, (&(lo, hi), &p)) in ranges.iter().zip(points).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidChart(format!("axis {axis}: non-finite bound")));
            }
            if lo >= hi {
                return Err(Error::InvalidChart(format!(
                    "axis {axis}: degenerate range [{lo}, {hi}]"
                )));
            }
            if p < MIN_POINTS {
                return Err(Error::InvalidChart(format!(
                    "axis {axis}: {p} points, at least {MIN_POINTS} required"
                )));
            }
        }
        let lo: Vec<f64> = ranges.iter().map(|r| r.0).collect();
        let hi: Vec<f64> = ranges.iter().map(|r| r.1).collect();
        let spacing = ranges
            .iter()
            .zip(points)
            .map(|(&(lo, hi), &p)| (hi - lo) / (p - 1) as f64)
            .collect();
        let mut strides = vec![1; points.len()];
        for axis in (0..points.len().saturating_sub(1)).rev() {
            strides[axis] = strides[axis + 1] * points[axis + 1];
        }
        Ok(Self {
            lo,
            hi,
            points: points.to_vec(),
            spacing,
            strides,
        })
    }

    pub fn dim(&self) -> usize {
        self.points.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn ranges(&self) -> Vec<(f64, f64)> {
        self.lo.iter().copied().zip(self.hi.iter().copied()).collect()
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// Largest spacing over all axes.
    pub fn max_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(0.0, f64::max)
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    pub fn node_count(&self) -> usize {
        self.points.iter().product()
    }

    /// Grid index of `node` along `axis`.
    #[inline]
    pub fn axis_index(&self, node: usize, axis: usize) -> usize {
        (node / self.strides[axis]) % self.points[axis]
    }

    pub fn multi_index(&self, node: usize) -> Vec<usize> {
        (0..self.dim()).map(|a| self.axis_index(node, a)).collect()
    }

    pub fn node_of(&self, index: &[usize]) -> usize {
        index.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    /// Coordinate of grid line `i` along `axis`; endpoints are exact.
    #[inline]
    pub fn axis_coord(&self, axis: usize, i: usize) -> f64 {
        let (lo, hi) = (self.lo[axis], self.hi[axis]);
        lo + (hi - lo) * i as f64 / (self.points[axis] - 1) as f64
    }

    pub fn coords(&self, node: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.coords_into(node, &mut out);
        out
    }

    pub fn coords_into(&self, node: usize, out: &mut [f64]) {
        for (axis, c) in out.iter_mut().enumerate() {
            *c = self.axis_coord(axis, self.axis_index(node, axis));
        }
    }

    /// True when the node lies at least `margin` layers inside every face.
    #[inline]
    pub fn is_interior(&self, node: usize, margin: usize) -> bool {
        (0..self.dim()).all(|a| {
            let i = self.axis_index(node, a);
            i >= margin && i + margin < self.points[a]
        })
    }

    pub fn interior_nodes(&self, margin: usize) -> Vec<usize> {
        (0..self.node_count())
            .filter(|&k| self.is_interior(k, margin))
            .collect()
    }

    /// Same box with spacing halved on every axis.
    pub fn refined(&self) -> Self {
        let points: Vec<usize> = self.points.iter().map(|p| 2 * p - 1).collect();
        Self::new(&self.ranges(), &points).expect("refining a valid chart")
    }

    /// Node of `fine` coinciding with `node` of `self`, where `fine` is
    /// `self.refined()`.
    pub fn fine_node(&self, fine: &Chart, node: usize) -> usize {
        (0..self.dim())
            .map(|a| 2 * self.axis_index(node, a) * fine.strides[a])
            .sum()
    }
}

/// Index range of a tensor slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    /// Base direction, range `n` (the chart dimension).
    Base,
    /// Fiber direction, range `N`.
    Fiber,
    /// Direction of the assembled total space, range `N + n`, fibers first.
    Total,
}

/// Accuracy order of the central differences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FdOrder {
    #[serde(rename = "2")]
    Second,
    #[default]
    #[serde(rename = "4")]
    Fourth,
}

impl FdOrder {
    pub fn from_int(order: u32) -> Result<Self> {
        match order {
            2 => Ok(Self::Second),
            4 => Ok(Self::Fourth),
            other => Err(Error::InvalidParameter(format!(
                "fd_order must be 2 or 4, got {other}"
            ))),
        }
    }

    pub fn as_int(self) -> u32 {
        match self {
            Self::Second => 2,
            Self::Fourth => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FdConfig {
    pub order: FdOrder,
}

// (offset, weight) pairs of the antisymmetric central stencils; the weight
// multiplies f(+offset) - f(-offset) so constants differentiate to exactly 0.
const STENCIL_2: [(isize, f64); 1] = [(1, 0.5)];
const STENCIL_4: [(isize, f64); 2] = [(1, 8.0 / 12.0), (2, -1.0 / 12.0)];

impl FdConfig {
    pub fn new(order: FdOrder) -> Self {
        Self { order }
    }

    pub fn second() -> Self {
        Self::new(FdOrder::Second)
    }

    pub fn fourth() -> Self {
        Self::new(FdOrder::Fourth)
    }

    /// Nodes consumed on each side by one differentiation.
    pub fn half_width(&self) -> usize {
        match self.order {
            FdOrder::Second => 1,
            FdOrder::Fourth => 2,
        }
    }

    pub fn order_int(&self) -> u32 {
        self.order.as_int()
    }

    fn stencil(&self) -> &'static [(isize, f64)] {
        match self.order {
            FdOrder::Second => &STENCIL_2,
            FdOrder::Fourth => &STENCIL_4,
        }
    }
}

/// A multi-index array sampled over a chart.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    chart: Chart,
    fiber_dim: usize,
    slots: Vec<Slot>,
    values: Vec<f64>,
    margin: usize,
    symmetric: Option<(usize, usize)>,
}

impl TensorField {
    /// Wraps raw node-major values. Every value must be finite.
    pub fn new(
        chart: Chart,
        fiber_dim: usize,
        slots: Vec<Slot>,
        values: Vec<f64>,
        margin: usize,
    ) -> Result<Self> {
        let ncomp = component_count(&slots, chart.dim(), fiber_dim);
        let expected = chart.node_count() * ncomp;
        if values.len() != expected {
            return Err(Error::Shape(format!(
                "expected {expected} values for {} nodes x {ncomp} components, got {}",
                chart.node_count(),
                values.len()
            )));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite {
                node: i / ncomp.max(1),
                value: *v,
            });
        }
        Ok(Self {
            chart,
            fiber_dim,
            slots,
            values,
            margin,
            symmetric: None,
        })
    }

    pub fn zeros(chart: &Chart, fiber_dim: usize, slots: Vec<Slot>, margin: usize) -> Self {
        let ncomp = component_count(&slots, chart.dim(), fiber_dim);
        Self {
            chart: chart.clone(),
            fiber_dim,
            values: vec![0.0; chart.node_count() * ncomp],
            slots,
            margin,
            symmetric: None,
        }
    }

    /// Builds a field node by node (in parallel). `f` receives the node and
    /// the node's component buffer. Nodes outside the margin are passed too;
    /// callers that cannot evaluate them should leave the zeros in place.
    pub fn from_nodes<F>(
        chart: &Chart,
        fiber_dim: usize,
        slots: Vec<Slot>,
        margin: usize,
        f: F,
    ) -> Result<Self>
    where
        F: Fn(usize, &mut [f64]) + Sync,
    {
        let mut out = Self::zeros(chart, fiber_dim, slots, margin);
        let ncomp = out.ncomp();
        if ncomp > 0 {
            out.values
                .par_chunks_mut(ncomp)
                .enumerate()
                .for_each(|(node, buf)| f(node, buf));
        }
        out.check_finite()?;
        Ok(out)
    }

    /// Same as [`TensorField::from_nodes`] but only visits nodes inside
    /// `margin`.
    pub fn from_interior<F>(
        chart: &Chart,
        fiber_dim: usize,
        slots: Vec<Slot>,
        margin: usize,
        f: F,
    ) -> Result<Self>
    where
        F: Fn(usize, &mut [f64]) + Sync,
    {
        let c = chart.clone();
        Self::from_nodes(chart, fiber_dim, slots, margin, move |node, buf| {
            if c.is_interior(node, margin) {
                f(node, buf)
            }
        })
    }

    fn check_finite(&self) -> Result<()> {
        let ncomp = self.ncomp().max(1);
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::NonFinite {
                node: i / ncomp,
                value: self.values[i],
            }),
            None => Ok(()),
        }
    }

    /// Declares and verifies an exact symmetry between two slots.
    pub fn with_symmetric(mut self, pair: (usize, usize)) -> Result<Self> {
        let (p, q) = pair;
        if p >= self.slots.len() || q >= self.slots.len() || p == q {
            return Err(Error::Shape(format!("bad symmetric pair {pair:?}")));
        }
        if self.range(self.slots[p]) != self.range(self.slots[q]) {
            return Err(Error::Shape(format!(
                "slots {pair:?} have different ranges"
            )));
        }
        let ncomp = self.ncomp();
        let dims = self.slot_ranges();
        let mut idx = vec![0; dims.len()];
        for node in 0..self.chart.node_count() {
            let vals = self.at(node);
            for c in 0..ncomp {
                unflatten(c, &dims, &mut idx);
                idx.swap(p, q);
                let swapped = flatten(&idx, &dims);
                if vals[c] != vals[swapped] {
                    return Err(Error::NotSymmetric(pair, node));
                }
            }
        }
        self.symmetric = Some(pair);
        Ok(self)
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn fiber_dim(&self) -> usize {
        self.fiber_dim
    }

    pub fn base_dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn margin(&self) -> usize {
        self.margin
    }

    pub fn symmetric_pair(&self) -> Option<(usize, usize)> {
        self.symmetric
    }

    pub fn range(&self, slot: Slot) -> usize {
        slot_range(slot, self.chart.dim(), self.fiber_dim)
    }

    pub fn slot_ranges(&self) -> Vec<usize> {
        self.slots.iter().map(|&s| self.range(s)).collect()
    }

    /// Components per node.
    pub fn ncomp(&self) -> usize {
        component_count(&self.slots, self.chart.dim(), self.fiber_dim)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, node: usize) -> &[f64] {
        let n = self.ncomp();
        &self.values[node * n..(node + 1) * n]
    }

    /// Component of `node` addressed by one index per slot.
    pub fn get(&self, node: usize, index: &[usize]) -> f64 {
        self.at(node)[flatten(index, &self.slot_ranges())]
    }

    /// Relabels the margin, e.g. to mark a combination of fields valid only
    /// where all inputs are valid.
    pub fn with_margin(mut self, margin: usize) -> Self {
        self.margin = margin;
        self
    }

    /// Pointwise linear combination `self + scale * other`.
    pub fn add_scaled(&self, other: &TensorField, scale: f64) -> Result<Self> {
        self.check_compatible(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + scale * b)
            .collect();
        Ok(Self {
            chart: self.chart.clone(),
            fiber_dim: self.fiber_dim,
            slots: self.slots.clone(),
            values,
            margin: self.margin.max(other.margin),
            symmetric: None,
        })
    }

    pub fn sub(&self, other: &TensorField) -> Result<Self> {
        self.add_scaled(other, -1.0)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = self.values.iter().map(|&v| f(v)).collect();
        Self::new(
            self.chart.clone(),
            self.fiber_dim,
            self.slots.clone(),
            values,
            self.margin,
        )
    }

    fn check_compatible(&self, other: &TensorField) -> Result<()> {
        if self.chart != other.chart
            || self.slots != other.slots
            || self.slot_ranges() != other.slot_ranges()
        {
            return Err(Error::Shape("fields live on different charts or index sets".into()));
        }
        Ok(())
    }
}

fn slot_range(slot: Slot, n: usize, fiber_dim: usize) -> usize {
    match slot {
        Slot::Base => n,
        Slot::Fiber => fiber_dim,
        Slot::Total => n + fiber_dim,
    }
}

fn component_count(slots: &[Slot], n: usize, fiber_dim: usize) -> usize {
    slots.iter().map(|&s| slot_range(s, n, fiber_dim)).product()
}

/// Row-major flattening of a multi-index.
#[inline]
pub fn flatten(index: &[usize], dims: &[usize]) -> usize {
    index.iter().zip(dims).fold(0, |acc, (&i, &d)| acc * d + i)
}

#[inline]
pub fn unflatten(mut flat: usize, dims: &[usize], out: &mut [usize]) {
    for (slot, &d) in dims.iter().enumerate().rev() {
        out[slot] = flat % d;
        flat /= d;
    }
}

/// Evaluates a scalar coordinate function at every node.
pub fn sample(chart: &Chart, f: impl Fn(&[f64]) -> f64 + Sync) -> Result<TensorField> {
    TensorField::from_nodes(chart, 0, vec![], 0, |node, buf| {
        buf[0] = f(&chart.coords(node));
    })
}

/// Evaluates a tensor-valued coordinate function at every node; `f` fills
/// the component buffer in row-major slot order.
pub fn sample_tensor(
    chart: &Chart,
    fiber_dim: usize,
    slots: Vec<Slot>,
    f: impl Fn(&[f64], &mut [f64]) + Sync,
) -> Result<TensorField> {
    TensorField::from_nodes(chart, fiber_dim, slots, 0, |node, buf| {
        f(&chart.coords(node), buf);
    })
}

fn check_stencil_fits(chart: &Chart, margin: usize) -> Result<()> {
    for axis in 0..chart.dim() {
        let p = chart.points()[axis];
        if p < 2 * margin + 1 {
            return Err(Error::StencilTooWide {
                axis,
                points: p,
                margin,
            });
        }
    }
    Ok(())
}

/// Central difference of component `comp` along `axis` at one node. The
/// caller guarantees the stencil stays on the grid.
#[inline]
pub fn derivative_at(field: &TensorField, node: usize, axis: usize, comp: usize, cfg: &FdConfig) -> f64 {
    let chart = field.chart();
    let stride = chart.stride(axis) as isize;
    let ncomp = field.ncomp() as isize;
    let vals = field.values();
    let base = node as isize * ncomp + comp as isize;
    let mut acc = 0.0;
    for &(off, w) in cfg.stencil() {
        let step = off * stride * ncomp;
        acc += w * (vals[(base + step) as usize] - vals[(base - step) as usize]);
    }
    acc / chart.spacing()[axis]
}

/// Partial derivative of every component along one base axis. The index
/// structure is unchanged; the margin grows by half a stencil.
pub fn partial(field: &TensorField, axis: usize, cfg: &FdConfig) -> Result<TensorField> {
    let chart = field.chart();
    if axis >= chart.dim() {
        return Err(Error::InvalidParameter(format!(
            "axis {axis} out of range for a {}-dimensional chart",
            chart.dim()
        )));
    }
    let hw = cfg.half_width();
    let margin = field.margin() + hw;
    check_stencil_fits(chart, margin)?;
    let ncomp = field.ncomp();
    TensorField::from_nodes(chart, field.fiber_dim(), field.slots().to_vec(), margin, |node, buf| {
        let i = chart.axis_index(node, axis);
        if i < hw || i + hw >= chart.points()[axis] {
            return;
        }
        for (c, out) in buf.iter_mut().enumerate().take(ncomp) {
            *out = derivative_at(field, node, axis, c, cfg);
        }
    })
}

/// All first partials, appended as a trailing base slot: the result at
/// `[.., a]` is the derivative along axis `a`.
pub fn gradient(field: &TensorField, cfg: &FdConfig) -> Result<TensorField> {
    let chart = field.chart();
    let n = chart.dim();
    let hw = cfg.half_width();
    let margin = field.margin() + hw;
    check_stencil_fits(chart, margin)?;
    let ncomp = field.ncomp();
    let mut slots = field.slots().to_vec();
    slots.push(Slot::Base);
    TensorField::from_nodes(chart, field.fiber_dim(), slots, margin, |node, buf| {
        for a in 0..n {
            let i = chart.axis_index(node, a);
            if i < hw || i + hw >= chart.points()[a] {
                continue;
            }
            for c in 0..ncomp {
                buf[c * n + a] = derivative_at(field, node, a, c, cfg);
            }
        }
    })
}

/// Sup and root-mean-square norms of a field.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Norms {
    pub sup: f64,
    pub l2: f64,
}

/// Norms over the valid interior, summed sequentially in node order.
pub fn field_norms(field: &TensorField) -> Result<Norms> {
    let nodes = field.chart().interior_nodes(field.margin());
    norms_over(field, nodes.into_iter())
}

/// Norms over valid interior nodes lying inside the physical box
/// `[lo, hi]`. Refinement studies use it to compare levels on one region.
pub fn field_norms_on_region(field: &TensorField, lo: &[f64], hi: &[f64]) -> Result<Norms> {
    let chart = field.chart();
    let tol: Vec<f64> = chart.spacing().iter().map(|h| 1e-9 * h).collect();
    let mut coords = vec![0.0; chart.dim()];
    let nodes = chart.interior_nodes(field.margin()).into_iter().filter(|&k| {
        chart.coords_into(k, &mut coords);
        coords
            .iter()
            .enumerate()
            .all(|(a, &c)| c >= lo[a] - tol[a] && c <= hi[a] + tol[a])
    });
    norms_over(field, nodes.collect::<Vec<_>>().into_iter())
}

fn norms_over(field: &TensorField, nodes: impl Iterator<Item = usize>) -> Result<Norms> {
    let mut sup: f64 = 0.0;
    let mut sum_sq = 0.0;
    let mut count = 0usize;
    for node in nodes {
        for &v in field.at(node) {
            sup = sup.max(v.abs());
            sum_sq += v * v;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyInterior {
            margin: field.margin(),
        });
    }
    Ok(Norms {
        sup,
        l2: (sum_sq / count as f64).sqrt(),
    })
}

/// The box `[lo + f·w, hi − f·w]` per axis, `w` the axis width.
pub fn inset_box(chart: &Chart, fraction: f64) -> (Vec<f64>, Vec<f64>) {
    let w: Vec<f64> = chart.ranges().iter().map(|(a, b)| b - a).collect();
    let lo = chart.lo().iter().zip(&w).map(|(l, w)| l + fraction * w).collect();
    let hi = chart.hi().iter().zip(&w).map(|(h, w)| h - fraction * w).collect();
    (lo, hi)
}

/// Physical box covered by the valid interior of a field.
pub fn valid_box(field: &TensorField) -> (Vec<f64>, Vec<f64>) {
    let chart = field.chart();
    let m = field.margin();
    let lo = (0..chart.dim()).map(|a| chart.axis_coord(a, m)).collect();
    let hi = (0..chart.dim())
        .map(|a| chart.axis_coord(a, chart.points()[a] - 1 - m))
        .collect();
    (lo, hi)
}

/// Sup of `coarse - fine` over the coarse field's valid interior, comparing
/// coincident nodes. `fine` must live on `coarse.chart().refined()`.
pub fn refinement_difference(coarse: &TensorField, fine: &TensorField) -> Result<f64> {
    let (lo, hi) = valid_box(coarse);
    refinement_difference_on_region(coarse, fine, &lo, &hi)
}

/// [`refinement_difference`] restricted to coarse nodes inside `[lo, hi]`.
pub fn refinement_difference_on_region(
    coarse: &TensorField,
    fine: &TensorField,
    lo: &[f64],
    hi: &[f64],
) -> Result<f64> {
    let cc = coarse.chart();
    let fc = fine.chart();
    if *fc != cc.refined() || coarse.ncomp() != fine.ncomp() {
        return Err(Error::Shape("fine field is not on the refined chart".into()));
    }
    let tol: Vec<f64> = cc.spacing().iter().map(|h| 1e-9 * h).collect();
    let margin = coarse.margin().max(fine.margin().div_ceil(2));
    let nodes: Vec<usize> = cc
        .interior_nodes(margin)
        .into_iter()
        .filter(|&k| {
            let c = cc.coords(k);
            (0..c.len()).all(|a| c[a] >= lo[a] - tol[a] && c[a] <= hi[a] + tol[a])
        })
        .collect();
    if nodes.is_empty() {
        return Err(Error::EmptyInterior {
            margin: coarse.margin(),
        });
    }
    let mut sup: f64 = 0.0;
    for node in nodes {
        let f = cc.fine_node(fc, node);
        for (a, b) in coarse.at(node).iter().zip(fine.at(f)) {
            sup = sup.max((a - b).abs());
        }
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn chart_spacing_is_exact() {
        let c = Chart::new(&[(0.0, 1.0)], &[11]).unwrap();
        assert_eq!(c.spacing(), &[0.1]);
        let c = Chart::new(&[(1.0, 2.0), (0.0, 1.0)], &[21, 11]).unwrap();
        assert_eq!(c.spacing(), &[0.05, 0.1]);
    }

    #[test]
    fn chart_rejects_bad_input() {
        assert!(matches!(
            Chart::new(&[(0.0, 0.0)], &[11]),
            Err(Error::InvalidChart(_))
        ));
        assert!(matches!(
            Chart::new(&[(0.0, 1.0)], &[4]),
            Err(Error::InvalidChart(_))
        ));
        assert!(Chart::new(&[(1.0, 0.0)], &[11]).is_err());
    }

    #[test]
    fn sample_values() {
        let c = Chart::new(&[(0.0, 1.0)], &[11]).unwrap();
        let ones = sample(&c, |_| 1.0).unwrap();
        assert!(ones.values().iter().all(|&v| v == 1.0));
        let lin = sample(&c, |b| b[0]).unwrap();
        for (i, v) in lin.values().iter().enumerate() {
            assert_eq!(*v, i as f64 / 10.0);
        }
        let e = sample(&c, |b| b[0].exp()).unwrap();
        for (i, v) in e.values().iter().enumerate() {
            assert_eq!(*v, (i as f64 / 10.0).exp());
        }
        assert!(matches!(
            sample(&c, |b| 1.0 / (b[0] - 0.5)),
            Err(Error::NonFinite { node: 5, .. })
        ));
    }

    #[test]
    fn derivative_of_linear_and_constant() {
        let c = Chart::new(&[(0.0, 1.0), (-1.0, 2.0)], &[11, 13]).unwrap();
        for cfg in [FdConfig::second(), FdConfig::fourth()] {
            let lin = sample(&c, |b| 3.0 * b[0] - b[1]).unwrap();
            let d0 = partial(&lin, 0, &cfg).unwrap();
            let d1 = partial(&lin, 1, &cfg).unwrap();
            assert_eq!(d0.margin(), cfg.half_width());
            for k in c.interior_nodes(d0.margin()) {
                assert_relative_eq!(d0.at(k)[0], 3.0, epsilon = 1e-12);
                assert_relative_eq!(d1.at(k)[0], -1.0, epsilon = 1e-12);
            }
            let cst = sample(&c, |_| 2.5).unwrap();
            let d = partial(&cst, 1, &cfg).unwrap();
            assert_eq!(field_norms(&d).unwrap().sup, 0.0);
        }
    }

    #[test]
    fn sine_derivative_converges_at_order() {
        for (cfg, p) in [(FdConfig::second(), 2.0), (FdConfig::fourth(), 4.0)] {
            let err = |points: usize| {
                let c = Chart::new(&[(0.0, 2.0)], &[points]).unwrap();
                let f = sample(&c, |b| b[0].sin()).unwrap();
                let d = partial(&f, 0, &cfg).unwrap();
                let exact = sample(&c, |b| b[0].cos()).unwrap();
                let diff = d.sub(&exact).unwrap();
                let (lo, hi) = (vec![0.25], vec![1.75]);
                field_norms_on_region(&diff, &lo, &hi).unwrap().sup
            };
            let (e1, e2) = (err(33), err(65));
            let ratio = e1 / e2;
            assert!(ratio >= 2f64.powf(p) * 0.9, "ratio {ratio}");
            // C h^p with C from the refinement pair.
            let h: f64 = 2.0 / 32.0;
            let c = e1 / h.powf(p);
            assert!(c < 1.0, "constant {c}");
        }
    }

    #[test]
    fn stencil_too_wide() {
        let c = Chart::new(&[(0.0, 1.0)], &[5]).unwrap();
        let f = sample(&c, |b| b[0]).unwrap();
        let d = partial(&f, 0, &FdConfig::fourth()).unwrap();
        assert!(matches!(
            partial(&d, 0, &FdConfig::fourth()),
            Err(Error::StencilTooWide { .. })
        ));
    }

    #[test]
    fn norms() {
        let c = Chart::new(&[(0.0, 1.0), (0.0, 1.0)], &[5, 5]).unwrap();
        let z = sample(&c, |_| 0.0).unwrap();
        assert_eq!(field_norms(&z).unwrap(), Norms { sup: 0.0, l2: 0.0 });
        let o = sample(&c, |_| 1.0).unwrap();
        assert_eq!(field_norms(&o).unwrap(), Norms { sup: 1.0, l2: 1.0 });
        let spike = sample(&c, |b| if b[0] == 0.5 && b[1] == 0.5 { 2.0 } else { 0.0 })
            .unwrap()
            .with_margin(1);
        let n = field_norms(&spike).unwrap();
        assert_eq!(n.sup, 2.0);
        assert_relative_eq!(n.l2, 2.0 / 3.0, epsilon = 1e-15);
        let empty = o.with_margin(3);
        assert!(matches!(field_norms(&empty), Err(Error::EmptyInterior { .. })));
    }

    #[test]
    fn symmetric_declaration_is_checked() {
        let c = Chart::new(&[(0.0, 1.0)], &[5]).unwrap();
        let sym = sample_tensor(&c, 0, vec![Slot::Base, Slot::Base], |_, o| o[0] = 1.0).unwrap();
        assert!(sym.clone().with_symmetric((0, 1)).is_ok());
        let two = Chart::new(&[(0.0, 1.0), (0.0, 1.0)], &[5, 5]).unwrap();
        let asym = sample_tensor(&two, 0, vec![Slot::Base, Slot::Base], |b, o| {
            o.copy_from_slice(&[1.0, b[0], 0.0, 1.0])
        })
        .unwrap();
        assert!(matches!(
            asym.with_symmetric((0, 1)),
            Err(Error::NotSymmetric(..))
        ));
    }

    #[test]
    fn refinement_difference_uses_coincident_nodes() {
        let c = Chart::new(&[(0.0, 1.0)], &[9]).unwrap();
        let f = sample(&c, |b| b[0] * b[0]).unwrap();
        let g = sample(&c.refined(), |b| b[0] * b[0]).unwrap();
        assert_eq!(refinement_difference(&f, &g).unwrap(), 0.0);
    }
}
