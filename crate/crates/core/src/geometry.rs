//! Base-manifold tensor calculus: Christoffel symbols, Ricci and scalar
//! curvature, covariant Hessians, and a generic Ricci evaluator for metrics
//! in `m` dimensions whose components depend on the base coordinates only.

use crate::error::{Error, Result};
use crate::grid::{derivative_at, gradient, FdConfig, Slot, TensorField};
use crate::linalg;

/// Eigenvalue floor below which a metric counts as degenerate.
pub const PD_FLOOR: f64 = 1e-10;

/// A validated Riemannian metric `g_{ab}` on the base chart, with its
/// pointwise inverse.
#[derive(Debug, Clone)]
pub struct BaseMetric {
    g: TensorField,
    inv: TensorField,
}

impl BaseMetric {
    /// Checks exact symmetry, positive definiteness and invertibility on the
    /// valid interior of `g`.
    pub fn new(g: TensorField) -> Result<Self> {
        if g.slots() != [Slot::Base, Slot::Base] {
            return Err(Error::Shape(format!(
                "base metric needs two base slots, got {:?}",
                g.slots()
            )));
        }
        let g = g.with_symmetric((0, 1))?;
        let inv = invert_metric(&g)?;
        Ok(Self { g, inv })
    }

    pub fn field(&self) -> &TensorField {
        &self.g
    }

    pub fn inverse(&self) -> &TensorField {
        &self.inv
    }

    pub fn dim(&self) -> usize {
        self.g.chart().dim()
    }

    pub fn margin(&self) -> usize {
        self.g.margin()
    }
}

/// Pointwise inverse of a symmetric positive-definite matrix field with two
/// slots of equal range. Nodes outside the margin get zeros.
pub(crate) fn invert_metric(g: &TensorField) -> Result<TensorField> {
    let dim = g.range(g.slots()[0]);
    let chart = g.chart();
    let margin = g.margin();
    for node in chart.interior_nodes(margin) {
        let m = g.at(node);
        let min_eig = linalg::min_symmetric_eigenvalue(m, dim);
        if min_eig <= PD_FLOOR {
            return Err(Error::NotPositiveDefinite {
                node,
                min_eigenvalue: min_eig,
            });
        }
    }
    let inv = TensorField::from_interior(chart, g.fiber_dim(), g.slots().to_vec(), margin, |node, buf| {
        if let Some(inv) = linalg::inverse(g.at(node), dim) {
            buf.copy_from_slice(&inv);
        } else {
            buf.fill(f64::NAN);
        }
    })
    .map_err(|e| match e {
        Error::NonFinite { node, .. } => Error::Singular { node },
        other => other,
    })?;
    for node in chart.interior_nodes(margin) {
        let prod = linalg::matmul(g.at(node), inv.at(node), dim);
        let scale = linalg::max_abs(g.at(node)) * linalg::max_abs(inv.at(node));
        for i in 0..dim {
            for j in 0..dim {
                let target = if i == j { 1.0 } else { 0.0 };
                if (prod[i * dim + j] - target).abs() > 1e-12 * scale.max(1.0) {
                    return Err(Error::Singular { node });
                }
            }
        }
    }
    Ok(inv)
}

/// Christoffel symbols `Γ^c_{ab}` of a metric over `dirs` directions, of
/// which the first `fiber_dirs` carry no coordinate dependence. Stored with
/// index order `[c, a, b]`.
fn christoffel_generic(
    metric: &TensorField,
    inv: &TensorField,
    fiber_dirs: usize,
    cfg: &FdConfig,
) -> Result<TensorField> {
    let chart = metric.chart();
    let m = metric.range(metric.slots()[0]);
    let hw = cfg.half_width();
    let margin = metric.margin() + hw;
    check_fits(chart, margin)?;
    let slot = metric.slots()[0];
    TensorField::from_interior(
        chart,
        metric.fiber_dim(),
        vec![slot, slot, slot],
        margin,
        |node, buf| {
            // dg[d][a][b] = ∂_d g_ab
            let mut dg = vec![0.0; m * m * m];
            for d in fiber_dirs..m {
                let axis = d - fiber_dirs;
                for ab in 0..m * m {
                    dg[d * m * m + ab] = derivative_at(metric, node, axis, ab, cfg);
                }
            }
            let gi = inv.at(node);
            for c in 0..m {
                for a in 0..m {
                    for b in a..m {
                        let mut acc = 0.0;
                        for d in 0..m {
                            let lower = dg[a * m * m + d * m + b] + dg[b * m * m + d * m + a]
                                - dg[d * m * m + a * m + b];
                            acc += gi[c * m + d] * lower;
                        }
                        buf[c * m * m + a * m + b] = 0.5 * acc;
                        buf[c * m * m + b * m + a] = 0.5 * acc;
                    }
                }
            }
        },
    )
}

/// Ricci tensor `R_ab = ∂_c Γ^c_ab − ∂_a Γ^c_cb + Γ^c_cd Γ^d_ab − Γ^c_ad Γ^d_cb`.
/// The contraction `Γ^c_cb` is taken as `∂_b log √det g`, so the second
/// term is a plain mixed partial and the result is symmetric up to rounding.
fn ricci_from_christoffel(
    metric: &TensorField,
    gamma: &TensorField,
    fiber_dirs: usize,
    cfg: &FdConfig,
) -> Result<TensorField> {
    let chart = gamma.chart();
    let slot = gamma.slots()[0];
    let m = gamma.range(slot);
    let margin = gamma.margin() + cfg.half_width();
    check_fits(chart, margin)?;
    let half_log_det = TensorField::from_interior(chart, 0, vec![], metric.margin(), |node, buf| {
        buf[0] = 0.5 * linalg::determinant(metric.at(node), m).ln();
    })?;
    // dl[b] = ∂_b log √det g along base axis b
    let dl = gradient(&half_log_det, cfg)?;
    let n = chart.dim();
    let mm = m * m;
    TensorField::from_interior(chart, gamma.fiber_dim(), vec![slot, slot], margin, |node, buf| {
        let gam = gamma.at(node);
        let mut contracted = vec![0.0; m];
        for (b, c) in contracted.iter_mut().enumerate().skip(fiber_dirs) {
            *c = dl.at(node)[b - fiber_dirs];
        }
        for a in 0..m {
            for b in 0..m {
                let mut r = 0.0;
                for c in fiber_dirs..m {
                    r += derivative_at(gamma, node, c - fiber_dirs, c * mm + a * m + b, cfg);
                }
                if a >= fiber_dirs && b >= fiber_dirs {
                    r -= derivative_at(&dl, node, a - fiber_dirs, b - fiber_dirs, cfg);
                }
                for d in 0..m {
                    r += contracted[d] * gam[d * mm + a * m + b];
                    for c in 0..m {
                        r -= gam[c * mm + a * m + d] * gam[d * mm + c * m + b];
                    }
                }
                buf[a * m + b] = r;
            }
        }
        debug_assert!(n + fiber_dirs == m);
    })
}

fn check_fits(chart: &crate::grid::Chart, margin: usize) -> Result<()> {
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

/// `Γ^σ_{αβ}` of the base metric, index order `[σ, α, β]`.
pub fn christoffel(g: &BaseMetric, cfg: &FdConfig) -> Result<TensorField> {
    christoffel_generic(g.field(), g.inverse(), 0, cfg)
}

/// Ricci tensor `R_{αβ}` of the base metric.
pub fn ricci_base(g: &BaseMetric, cfg: &FdConfig) -> Result<TensorField> {
    let gamma = christoffel(g, cfg)?;
    ricci_from_christoffel(g.field(), &gamma, 0, cfg)
}

/// Scalar curvature `g^{αβ} R_{αβ}`.
pub fn scalar_base(g: &BaseMetric, cfg: &FdConfig) -> Result<TensorField> {
    let ric = ricci_base(g, cfg)?;
    contract_with_inverse(&ric, g.inverse())
}

/// Ricci tensor and scalar curvature in one pass.
pub fn ricci_and_scalar(g: &BaseMetric, cfg: &FdConfig) -> Result<(TensorField, TensorField)> {
    let ric = ricci_base(g, cfg)?;
    let scalar = contract_with_inverse(&ric, g.inverse())?;
    Ok((ric, scalar))
}

/// Full trace `inv^{ab} T_{ab}` of a two-slot field.
pub(crate) fn contract_with_inverse(t: &TensorField, inv: &TensorField) -> Result<TensorField> {
    let dim = t.range(t.slots()[0]);
    let margin = t.margin().max(inv.margin());
    TensorField::from_interior(t.chart(), t.fiber_dim(), vec![], margin, |node, buf| {
        let (a, b) = (t.at(node), inv.at(node));
        buf[0] = (0..dim * dim).map(|k| a[k] * b[k]).sum();
    })
}

/// Covariant Hessian `T_{;αβ} = ∂_α∂_β T − Γ^σ_{αβ} ∂_σ T` of a field whose
/// components are base scalars (fiber indices carry no connection). Two
/// base slots are appended; the result is symmetric in them exactly.
pub fn covariant_hessian(t: &TensorField, g: &BaseMetric, cfg: &FdConfig) -> Result<TensorField> {
    let gamma = christoffel(g, cfg)?;
    covariant_hessian_with(t, &gamma, cfg)
}

pub(crate) fn covariant_hessian_with(
    t: &TensorField,
    gamma: &TensorField,
    cfg: &FdConfig,
) -> Result<TensorField> {
    if t.slots().contains(&Slot::Base) || t.slots().contains(&Slot::Total) {
        return Err(Error::Shape(
            "covariant Hessian takes base-scalar or fiber-indexed fields".into(),
        ));
    }
    let n = t.chart().dim();
    let d1 = gradient(t, cfg)?;
    let d2 = gradient(&d1, cfg)?;
    let ncomp = t.ncomp();
    let margin = d2.margin().max(gamma.margin());
    let mut slots = t.slots().to_vec();
    slots.extend([Slot::Base, Slot::Base]);
    TensorField::from_interior(t.chart(), t.fiber_dim(), slots, margin, |node, buf| {
        let (first, second, gam) = (d1.at(node), d2.at(node), gamma.at(node));
        for c in 0..ncomp {
            for a in 0..n {
                for b in a..n {
                    // second[(c*n + b)*n + a] = ∂_a ∂_b T_c
                    let dd = 0.5 * (second[(c * n + b) * n + a] + second[(c * n + a) * n + b]);
                    let mut conn = 0.0;
                    for s in 0..n {
                        conn += gam[s * n * n + a * n + b] * first[c * n + s];
                    }
                    let v = dd - conn;
                    buf[c * n * n + a * n + b] = v;
                    buf[c * n * n + b * n + a] = v;
                }
            }
        }
    })
}

/// Laplace–Beltrami operator `g^{αβ} f_{;αβ}` on a scalar field.
pub fn laplacian(f: &TensorField, g: &BaseMetric, cfg: &FdConfig) -> Result<TensorField> {
    if !f.slots().is_empty() {
        return Err(Error::Shape("laplacian takes a scalar field".into()));
    }
    let hess = covariant_hessian(f, g, cfg)?;
    contract_with_inverse(&hess, g.inverse())
}

/// Ricci tensor of an `m`-dimensional metric `gm` (two `Total` slots,
/// fibers first) whose components depend on the base coordinates only; all
/// derivatives along the first `N` directions vanish.
pub fn full_ricci_generic(gm: &TensorField, cfg: &FdConfig) -> Result<TensorField> {
    if gm.slots() != [Slot::Total, Slot::Total] {
        return Err(Error::Shape("generic Ricci takes an m x m total-space metric".into()));
    }
    let gm = gm.clone().with_symmetric((0, 1))?;
    let inv = invert_metric(&gm)?;
    let gamma = christoffel_generic(&gm, &inv, gm.fiber_dim(), cfg)?;
    ricci_from_christoffel(&gm, &gamma, gm.fiber_dim(), cfg)
}

/// Scalar curvature of a total-space metric by tracing the generic Ricci.
pub fn full_scalar_generic(gm: &TensorField, ricci: &TensorField) -> Result<TensorField> {
    let inv = invert_metric(gm)?;
    contract_with_inverse(ricci, &inv)
}
