//! Metrics of the form `G_IJ (dx^I + A^I)(dx^J + A^J) + g_ab db^a db^b`
//! and their Ricci curvature in block form.
//!
//! The block formulas return frame components with respect to the coframe
//! `{dx^I + A^I, db^a}`. They involve the connection only through its
//! field strength `F = dA`, so they are evaluated verbatim for arbitrary `A`
//! rather than after a pointwise gauge shift.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, invert_metric, BaseMetric};
use crate::grid::{
    field_norms, field_norms_on_region, gradient, valid_box, FdConfig, Norms, Slot, TensorField,
};
use crate::linalg;

/// Largest total dimension handled.
pub const MAX_TOTAL_DIM: usize = 6;

/// The triple `(G, A, g)` on one chart.
#[derive(Debug, Clone)]
pub struct BundleMetric {
    fiber: TensorField,
    fiber_inv: TensorField,
    connection: TensorField,
    base: BaseMetric,
}

impl BundleMetric {
    pub fn new(fiber: TensorField, connection: TensorField, base: BaseMetric) -> Result<Self> {
        let chart = base.field().chart();
        let n = chart.dim();
        let big_n = fiber.fiber_dim();
        if big_n == 0 {
            return Err(Error::InvalidParameter("fiber dimension must be at least 1".into()));
        }
        if big_n + n > MAX_TOTAL_DIM {
            return Err(Error::InvalidParameter(format!(
                "total dimension {} exceeds {MAX_TOTAL_DIM}",
                big_n + n
            )));
        }
        if fiber.chart() != chart || connection.chart() != chart {
            return Err(Error::Shape("G, A and g must share one chart".into()));
        }
        if fiber.slots() != [Slot::Fiber, Slot::Fiber] {
            return Err(Error::Shape("fiber metric needs two fiber slots".into()));
        }
        if connection.slots() != [Slot::Fiber, Slot::Base] || connection.fiber_dim() != big_n {
            return Err(Error::Shape(
                "connection needs one fiber and one base slot with the fiber metric's N".into(),
            ));
        }
        let fiber = fiber.with_symmetric((0, 1))?;
        let fiber_inv = invert_metric(&fiber)?;
        Ok(Self {
            fiber,
            fiber_inv,
            connection,
            base,
        })
    }

    pub fn fiber_metric(&self) -> &TensorField {
        &self.fiber
    }

    pub fn fiber_inverse(&self) -> &TensorField {
        &self.fiber_inv
    }

    pub fn connection(&self) -> &TensorField {
        &self.connection
    }

    pub fn base(&self) -> &BaseMetric {
        &self.base
    }

    pub fn chart(&self) -> &crate::grid::Chart {
        self.base.field().chart()
    }

    /// `N`
    pub fn fiber_dim(&self) -> usize {
        self.fiber.fiber_dim()
    }

    /// `n`
    pub fn base_dim(&self) -> usize {
        self.chart().dim()
    }

    pub fn margin(&self) -> usize {
        self.fiber
            .margin()
            .max(self.connection.margin())
            .max(self.base.margin())
    }

    /// `det G` at every node.
    pub fn det_fiber(&self) -> Result<TensorField> {
        let n = self.fiber_dim();
        TensorField::from_interior(self.chart(), 0, vec![], self.fiber.margin(), |node, buf| {
            buf[0] = linalg::determinant(self.fiber.at(node), n);
        })
    }

    /// Replaces the connection, keeping `G` and `g`.
    pub fn with_connection(&self, connection: TensorField) -> Result<Self> {
        Self::new(self.fiber.clone(), connection, self.base.clone())
    }
}

/// `F^I_{ab} = ∂_a A^I_b − ∂_b A^I_a`, slots `[Fiber, Base, Base]`.
#[derive(Debug, Clone)]
pub struct FieldStrength {
    pub f: TensorField,
}

pub fn field_strength(a: &TensorField, cfg: &FdConfig) -> Result<FieldStrength> {
    if a.slots() != [Slot::Fiber, Slot::Base] {
        return Err(Error::Shape("connection needs slots [fiber, base]".into()));
    }
    let n = a.chart().dim();
    let big_n = a.fiber_dim();
    // da[(I*n + b)*n + a] = ∂_a A^I_b
    let da = gradient(a, cfg)?;
    let f = TensorField::from_interior(
        a.chart(),
        big_n,
        vec![Slot::Fiber, Slot::Base, Slot::Base],
        da.margin(),
        |node, buf| {
            let d = da.at(node);
            for i in 0..big_n {
                for p in 0..n {
                    for q in 0..n {
                        buf[(i * n + p) * n + q] = d[(i * n + q) * n + p] - d[(i * n + p) * n + q];
                    }
                }
            }
        },
    )?;
    Ok(FieldStrength { f })
}

/// Derivative data shared by all blocks.
struct Jets {
    n: usize,
    big_n: usize,
    margin: usize,
    gamma: TensorField,
    ric_base: TensorField,
    scalar_base: TensorField,
    d_fiber: TensorField,
    hess_fiber: TensorField,
    f: TensorField,
    df: TensorField,
}

impl Jets {
    fn new(bm: &BundleMetric, cfg: &FdConfig) -> Result<Self> {
        let gamma = geometry::christoffel(bm.base(), cfg)?;
        let (ric_base, scalar_base) = geometry::ricci_and_scalar(bm.base(), cfg)?;
        let d_fiber = gradient(bm.fiber_metric(), cfg)?;
        let hess_fiber = geometry::covariant_hessian(bm.fiber_metric(), bm.base(), cfg)?;
        let f = field_strength(bm.connection(), cfg)?.f;
        let df = gradient(&f, cfg)?;
        let margin = [
            ric_base.margin(),
            hess_fiber.margin(),
            df.margin(),
            bm.margin() + 2 * cfg.half_width(),
        ]
        .into_iter()
        .max()
        .unwrap_or(0);
        Ok(Self {
            n: bm.base_dim(),
            big_n: bm.fiber_dim(),
            margin,
            gamma,
            ric_base,
            scalar_base,
            d_fiber,
            hess_fiber,
            f,
            df,
        })
    }

    fn node<'a>(&'a self, bm: &'a BundleMetric, node: usize) -> Local<'a> {
        Local {
            n: self.n,
            big_n: self.big_n,
            g: bm.base().field().at(node),
            gi: bm.base().inverse().at(node),
            fib: bm.fiber_metric().at(node),
            fib_i: bm.fiber_inverse().at(node),
            dfib: self.d_fiber.at(node),
            hfib: self.hess_fiber.at(node),
            gamma: self.gamma.at(node),
            ric: self.ric_base.at(node),
            scalar: self.scalar_base.at(node)[0],
            f: self.f.at(node),
            df: self.df.at(node),
        }
    }
}

/// Views of every local quantity at one node.
struct Local<'a> {
    n: usize,
    big_n: usize,
    g: &'a [f64],
    gi: &'a [f64],
    fib: &'a [f64],
    fib_i: &'a [f64],
    dfib: &'a [f64],
    hfib: &'a [f64],
    gamma: &'a [f64],
    ric: &'a [f64],
    scalar: f64,
    f: &'a [f64],
    df: &'a [f64],
}

impl Local<'_> {
    #[inline]
    fn gi(&self, a: usize, b: usize) -> f64 {
        self.gi[a * self.n + b]
    }
    #[inline]
    fn big(&self, i: usize, j: usize) -> f64 {
        self.fib[i * self.big_n + j]
    }
    #[inline]
    fn big_i(&self, i: usize, j: usize) -> f64 {
        self.fib_i[i * self.big_n + j]
    }
    /// `G_IJ,a`
    #[inline]
    fn dbig(&self, i: usize, j: usize, a: usize) -> f64 {
        self.dfib[(i * self.big_n + j) * self.n + a]
    }
    /// `G_IJ;ab`
    #[inline]
    fn hbig(&self, i: usize, j: usize, a: usize, b: usize) -> f64 {
        self.hfib[((i * self.big_n + j) * self.n + a) * self.n + b]
    }
    /// `F^I_ab`
    #[inline]
    fn fs(&self, i: usize, a: usize, b: usize) -> f64 {
        self.f[(i * self.n + a) * self.n + b]
    }
    #[inline]
    fn christoffel(&self, s: usize, a: usize, b: usize) -> f64 {
        self.gamma[(s * self.n + a) * self.n + b]
    }
    /// `F^I_{ab;d}`
    fn fs_cov(&self, i: usize, a: usize, b: usize, d: usize) -> f64 {
        let n = self.n;
        let mut v = self.df[((i * n + a) * n + b) * n + d];
        for s in 0..n {
            v -= self.christoffel(s, d, a) * self.fs(i, s, b);
            v -= self.christoffel(s, d, b) * self.fs(i, a, s);
        }
        v
    }
    /// `G^{KL} G_{KL,a}`
    fn trace_log(&self, a: usize) -> f64 {
        let mut t = 0.0;
        for k in 0..self.big_n {
            for l in 0..self.big_n {
                t += self.big_i(k, l) * self.dbig(k, l, a);
            }
        }
        t
    }
    /// `G^{IJ} G_{JK,a} G^{KL} G_{LI,b}`
    fn trace_quad(&self, a: usize, b: usize) -> f64 {
        let nn = self.big_n;
        let mut t = 0.0;
        for i in 0..nn {
            for j in 0..nn {
                let gij = self.big_i(i, j);
                if gij == 0.0 {
                    continue;
                }
                for k in 0..nn {
                    let x = gij * self.dbig(j, k, a);
                    for l in 0..nn {
                        t += x * self.big_i(k, l) * self.dbig(l, i, b);
                    }
                }
            }
        }
        t
    }
    /// `g^{ac} g^{bd} G_IJ F^I_ab F^J_cd`
    fn f_squared(&self) -> f64 {
        let (n, nn) = (self.n, self.big_n);
        let mut t = 0.0;
        for i in 0..nn {
            for j in 0..nn {
                let gij = self.big(i, j);
                for a in 0..n {
                    for b in 0..n {
                        let fab = self.fs(i, a, b);
                        if fab == 0.0 {
                            continue;
                        }
                        for c in 0..n {
                            for d in 0..n {
                                t += self.gi(a, c) * self.gi(b, d) * gij * fab * self.fs(j, c, d);
                            }
                        }
                    }
                }
            }
        }
        t
    }

    fn fiber_block(&self, out: &mut [f64]) {
        let (n, nn) = (self.n, self.big_n);
        let tl: Vec<f64> = (0..n).map(|a| self.trace_log(a)).collect();
        for i in 0..nn {
            for j in i..nn {
                let mut r = 0.0;
                for a in 0..n {
                    for b in 0..n {
                        let gab = self.gi(a, b);
                        r -= 0.5 * gab * self.hbig(i, j, a, b);
                        r -= 0.25 * gab * tl[a] * self.dbig(i, j, b);
                        let mut q = 0.0;
                        for k in 0..nn {
                            for l in 0..nn {
                                q += self.big_i(k, l) * self.dbig(i, k, a) * self.dbig(l, j, b);
                            }
                        }
                        r += 0.5 * gab * q;
                    }
                }
                let mut ff = 0.0;
                for k in 0..nn {
                    for l in 0..nn {
                        let gg = self.big(i, k) * self.big(j, l);
                        for a in 0..n {
                            for b in 0..n {
                                let fab = self.fs(k, a, b);
                                for c in 0..n {
                                    for d in 0..n {
                                        ff += self.gi(a, c) * self.gi(b, d) * gg * fab * self.fs(l, c, d);
                                    }
                                }
                            }
                        }
                    }
                }
                r += 0.25 * ff;
                out[i * nn + j] = r;
                out[j * nn + i] = r;
            }
        }
    }

    fn mixed_block(&self, out: &mut [f64]) {
        let (n, nn) = (self.n, self.big_n);
        let tl: Vec<f64> = (0..n).map(|a| self.trace_log(a)).collect();
        for i in 0..nn {
            for al in 0..n {
                let mut r = 0.0;
                for c in 0..n {
                    for d in 0..n {
                        let gcd = self.gi(c, d);
                        if gcd == 0.0 {
                            continue;
                        }
                        for k in 0..nn {
                            r += 0.5 * gcd * self.big(i, k) * self.fs_cov(k, al, c, d);
                            r += 0.5 * gcd * self.dbig(i, k, c) * self.fs(k, al, d);
                            r += 0.25 * gcd * self.big(i, k) * tl[c] * self.fs(k, al, d);
                        }
                    }
                }
                out[i * n + al] = r;
            }
        }
    }

    fn base_block(&self, lambda: f64, out: &mut [f64]) {
        let (n, nn) = (self.n, self.big_n);
        for a in 0..n {
            for b in a..n {
                let mut r = self.ric[a * n + b];
                for i in 0..nn {
                    for j in 0..nn {
                        r -= 0.5 * self.big_i(i, j) * self.hbig(i, j, a, b);
                    }
                }
                r += 0.25 * self.trace_quad(a, b);
                let mut ff = 0.0;
                for c in 0..n {
                    for d in 0..n {
                        let gcd = self.gi(c, d);
                        for i in 0..nn {
                            for j in 0..nn {
                                ff += gcd * self.big(i, j) * self.fs(i, a, c) * self.fs(j, b, d);
                            }
                        }
                    }
                }
                r -= 0.5 * ff;
                r -= lambda * self.g[a * n + b];
                out[a * n + b] = r;
                out[b * n + a] = r;
            }
        }
    }

    fn scalar(&self) -> f64 {
        let (n, nn) = (self.n, self.big_n);
        let mut r = self.scalar;
        for a in 0..n {
            for b in 0..n {
                let gab = self.gi(a, b);
                if gab == 0.0 {
                    continue;
                }
                let mut hess = 0.0;
                for i in 0..nn {
                    for j in 0..nn {
                        hess += self.big_i(i, j) * self.hbig(i, j, a, b);
                    }
                }
                r -= gab * hess;
                r += 0.75 * gab * self.trace_quad(a, b);
                r -= 0.25 * gab * self.trace_log(a) * self.trace_log(b);
            }
        }
        r - 0.25 * self.f_squared()
    }
}

/// Frame components of the Ricci tensor of the assembled metric, blockwise.
#[derive(Debug, Clone)]
pub struct RicciBlocks {
    /// `R̄_IJ`, slots `[Fiber, Fiber]`
    pub fiber: TensorField,
    /// `R̄_Iα`, slots `[Fiber, Base]`
    pub mixed: TensorField,
    /// `R̄_αβ`, slots `[Base, Base]`
    pub base: TensorField,
    /// `R̄`
    pub scalar: TensorField,
}

impl RicciBlocks {
    pub fn margin(&self) -> usize {
        self.fiber.margin()
    }
}

/// All four blocks from the closed-form expressions in `G`, `F` and `g`.
pub fn ricci_blocks(bm: &BundleMetric, cfg: &FdConfig) -> Result<RicciBlocks> {
    let jets = Jets::new(bm, cfg)?;
    let chart = bm.chart();
    let (n, nn, m) = (jets.n, jets.big_n, jets.margin);
    let fiber = TensorField::from_interior(chart, nn, vec![Slot::Fiber, Slot::Fiber], m, |k, buf| {
        jets.node(bm, k).fiber_block(buf)
    })?;
    let mixed = TensorField::from_interior(chart, nn, vec![Slot::Fiber, Slot::Base], m, |k, buf| {
        jets.node(bm, k).mixed_block(buf)
    })?;
    let base = TensorField::from_interior(chart, nn, vec![Slot::Base, Slot::Base], m, |k, buf| {
        jets.node(bm, k).base_block(0.0, buf)
    })?;
    let scalar = TensorField::from_interior(chart, nn, vec![], m, |k, buf| {
        buf[0] = jets.node(bm, k).scalar()
    })?;
    debug_assert_eq!(fiber.ncomp(), nn * nn);
    debug_assert_eq!(base.ncomp(), n * n);
    Ok(RicciBlocks {
        fiber,
        mixed,
        base,
        scalar,
    })
}

/// Fiber-fiber block `R̄_IJ`.
pub fn ricci_fiber(bm: &BundleMetric, cfg: &FdConfig) -> Result<TensorField> {
    let jets = Jets::new(bm, cfg)?;
    TensorField::from_interior(
        bm.chart(),
        jets.big_n,
        vec![Slot::Fiber, Slot::Fiber],
        jets.margin,
        |k, buf| jets.node(bm, k).fiber_block(buf),
    )
}

/// Mixed block `R̄_Iα`.
pub fn ricci_mixed(bm: &BundleMetric, cfg: &FdConfig) -> Result<TensorField> {
    let jets = Jets::new(bm, cfg)?;
    TensorField::from_interior(
        bm.chart(),
        jets.big_n,
        vec![Slot::Fiber, Slot::Base],
        jets.margin,
        |k, buf| jets.node(bm, k).mixed_block(buf),
    )
}

/// Base-base residual `R̄_αβ − λ g_αβ`.
pub fn ricci_basebase(bm: &BundleMetric, lambda: f64, cfg: &FdConfig) -> Result<TensorField> {
    let jets = Jets::new(bm, cfg)?;
    TensorField::from_interior(
        bm.chart(),
        jets.big_n,
        vec![Slot::Base, Slot::Base],
        jets.margin,
        |k, buf| jets.node(bm, k).base_block(lambda, buf),
    )
}

/// Scalar curvature `R̄` of the assembled metric.
pub fn scalar_total(bm: &BundleMetric, cfg: &FdConfig) -> Result<TensorField> {
    let jets = Jets::new(bm, cfg)?;
    TensorField::from_interior(bm.chart(), jets.big_n, vec![], jets.margin, |k, buf| {
        buf[0] = jets.node(bm, k).scalar()
    })
}

/// The `(N + n) x (N + n)` metric in coordinates `(x, b)`, fibers first:
/// `[[G, G A], [Aᵀ G, g + Aᵀ G A]]`.
pub fn assemble_full_metric(bm: &BundleMetric) -> Result<TensorField> {
    let (n, nn) = (bm.base_dim(), bm.fiber_dim());
    let m = n + nn;
    let margin = bm.margin();
    let full = TensorField::from_interior(bm.chart(), nn, vec![Slot::Total, Slot::Total], margin, |k, buf| {
        let gf = bm.fiber_metric().at(k);
        let a = bm.connection().at(k);
        let g = bm.base().field().at(k);
        // GA[I][al] = G_IJ A^J_al
        let mut ga = vec![0.0; nn * n];
        for i in 0..nn {
            for al in 0..n {
                ga[i * n + al] = (0..nn).map(|j| gf[i * nn + j] * a[j * n + al]).sum();
            }
        }
        for i in 0..nn {
            for j in 0..nn {
                buf[i * m + j] = gf[i * nn + j];
            }
            for al in 0..n {
                buf[i * m + nn + al] = ga[i * n + al];
                buf[(nn + al) * m + i] = ga[i * n + al];
            }
        }
        for al in 0..n {
            for be in al..n {
                let agb: f64 = (0..nn).map(|i| a[i * n + al] * ga[i * n + be]).sum();
                let v = g[al * n + be] + agb;
                buf[(nn + al) * m + nn + be] = v;
                buf[(nn + be) * m + nn + al] = v;
            }
        }
    })?;
    full.with_symmetric((0, 1))
}

/// Converts coordinate Ricci components of the assembled metric into the
/// frame `{∂_I, ∂_α − A^K_α ∂_K}` dual to `{dx^I + A^I, db^α}`, and traces
/// the coordinate tensor to get the scalar curvature.
pub fn frame_blocks(full_ricci: &TensorField, bm: &BundleMetric) -> Result<RicciBlocks> {
    let (n, nn) = (bm.base_dim(), bm.fiber_dim());
    let m = n + nn;
    if full_ricci.slots() != [Slot::Total, Slot::Total] || full_ricci.range(Slot::Total) != m {
        return Err(Error::Shape("expected an m x m Ricci field".into()));
    }
    let chart = bm.chart();
    let margin = full_ricci.margin().max(bm.margin());
    let conn = bm.connection();
    let r = |k: usize, p: usize, q: usize| full_ricci.at(k)[p * m + q];
    let fiber = TensorField::from_interior(chart, nn, vec![Slot::Fiber, Slot::Fiber], margin, |k, buf| {
        for i in 0..nn {
            for j in 0..nn {
                buf[i * nn + j] = r(k, i, j);
            }
        }
    })?;
    let mixed = TensorField::from_interior(chart, nn, vec![Slot::Fiber, Slot::Base], margin, |k, buf| {
        let a = conn.at(k);
        for i in 0..nn {
            for al in 0..n {
                let mut v = r(k, i, nn + al);
                for kk in 0..nn {
                    v -= a[kk * n + al] * r(k, i, kk);
                }
                buf[i * n + al] = v;
            }
        }
    })?;
    let base = TensorField::from_interior(chart, nn, vec![Slot::Base, Slot::Base], margin, |k, buf| {
        let a = conn.at(k);
        for al in 0..n {
            for be in 0..n {
                let mut v = r(k, nn + al, nn + be);
                for kk in 0..nn {
                    v -= a[kk * n + al] * r(k, kk, nn + be);
                    v -= a[kk * n + be] * r(k, nn + al, kk);
                    for ll in 0..nn {
                        v += a[kk * n + al] * a[ll * n + be] * r(k, kk, ll);
                    }
                }
                buf[al * n + be] = v;
            }
        }
    })?;
    let full = assemble_full_metric(bm)?;
    let scalar = geometry::full_scalar_generic(&full, full_ricci)?.with_margin(margin);
    Ok(RicciBlocks {
        fiber,
        mixed,
        base,
        scalar,
    })
}

/// Generic-oracle route: assemble, take the `m`-dimensional Ricci tensor,
/// convert to frame blocks.
pub fn oracle_blocks(bm: &BundleMetric, cfg: &FdConfig) -> Result<RicciBlocks> {
    let full = assemble_full_metric(bm)?;
    let ric = geometry::full_ricci_generic(&full, cfg)?;
    frame_blocks(&ric, bm)
}

/// Per-block norms of the Einstein residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub fiber: Norms,
    pub mixed: Norms,
    pub base: Norms,
    pub scalar: Norms,
    pub lambda: f64,
    pub points: Vec<usize>,
    pub spacing: Vec<f64>,
    pub fd_order: u32,
}

impl ResidualReport {
    /// Largest sup norm over the four blocks.
    pub fn max_sup(&self) -> f64 {
        self.fiber
            .sup
            .max(self.mixed.sup)
            .max(self.base.sup)
            .max(self.scalar.sup)
    }
}

/// Residual fields of `Ric(ḡ) − λ ḡ` in frame components, plus
/// `R̄ − (N + n) λ` for the scalar.
#[derive(Debug, Clone)]
pub struct ResidualFields {
    pub blocks: RicciBlocks,
    pub lambda: f64,
}

pub fn residual_fields(bm: &BundleMetric, lambda: f64, cfg: &FdConfig) -> Result<ResidualFields> {
    let mut blocks = ricci_blocks(bm, cfg)?;
    if lambda != 0.0 {
        let m = blocks.margin();
        blocks.fiber = blocks
            .fiber
            .add_scaled(&bm.fiber_metric().clone().with_margin(m), -lambda)?;
        blocks.base = blocks
            .base
            .add_scaled(&bm.base().field().clone().with_margin(m), -lambda)?;
        let dim = (bm.fiber_dim() + bm.base_dim()) as f64;
        blocks.scalar = blocks.scalar.map(|v| v - dim * lambda)?;
    }
    Ok(ResidualFields { blocks, lambda })
}

impl ResidualFields {
    pub fn report(&self, cfg: &FdConfig) -> Result<ResidualReport> {
        let b = &self.blocks;
        self.build(cfg, [
            field_norms(&b.fiber)?,
            field_norms(&b.mixed)?,
            field_norms(&b.base)?,
            field_norms(&b.scalar)?,
        ])
    }

    /// Report restricted to the physical box `[lo, hi]`.
    pub fn report_on_region(&self, cfg: &FdConfig, lo: &[f64], hi: &[f64]) -> Result<ResidualReport> {
        let b = &self.blocks;
        self.build(cfg, [
            field_norms_on_region(&b.fiber, lo, hi)?,
            field_norms_on_region(&b.mixed, lo, hi)?,
            field_norms_on_region(&b.base, lo, hi)?,
            field_norms_on_region(&b.scalar, lo, hi)?,
        ])
    }

    fn build(&self, cfg: &FdConfig, norms: [Norms; 4]) -> Result<ResidualReport> {
        let chart = self.blocks.fiber.chart();
        Ok(ResidualReport {
            fiber: norms[0],
            mixed: norms[1],
            base: norms[2],
            scalar: norms[3],
            lambda: self.lambda,
            points: chart.points().to_vec(),
            spacing: chart.spacing().to_vec(),
            fd_order: cfg.order_int(),
        })
    }
}

/// Norms of every block of `Ric(ḡ) − λ ḡ` over the valid interior.
pub fn einstein_residual(bm: &BundleMetric, lambda: f64, cfg: &FdConfig) -> Result<ResidualReport> {
    residual_fields(bm, lambda, cfg)?.report(cfg)
}

impl ResidualReport {
    /// Sup norms in the order fiber, mixed, base, scalar.
    pub fn block_sups(&self) -> [f64; 4] {
        [self.fiber.sup, self.mixed.sup, self.base.sup, self.scalar.sup]
    }
}

/// Einstein residual reports for successive refinements of one metric,
/// all measured on `region` (default: the valid box of the first level).
pub fn residual_study(
    levels: &[BundleMetric],
    lambda: f64,
    cfg: &FdConfig,
    region: Option<(Vec<f64>, Vec<f64>)>,
) -> Result<Vec<ResidualReport>> {
    let mut out = Vec::with_capacity(levels.len());
    let mut region = region;
    for bm in levels {
        let fields = residual_fields(bm, lambda, cfg)?;
        let (lo, hi) = region.get_or_insert_with(|| valid_box(&fields.blocks.fiber));
        out.push(fields.report_on_region(cfg, lo, hi)?);
    }
    Ok(out)
}
