//! Differential identities satisfied by the fiber metric, and the checks
//! specific to two-dimensional and semiflat bases.
//!
//! Every check returns both sides as fields on the input chart; a report
//! compares them, with a tolerance taken from a two-level Richardson
//! estimate when the same check is available on the refined chart.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, Matrix2, Matrix4};
use num_complex::Complex64;
use serde::Serialize;

use crate::bundle::{field_strength, ricci_blocks, ricci_mixed, BundleMetric};
use crate::error::{Error, Result};
use crate::geometry::{self, BaseMetric};
use crate::grid::{
    field_norms, field_norms_on_region, gradient, refinement_difference, refinement_difference_on_region,
    sample, valid_box, Chart,
    FdConfig, Norms, Slot, TensorField,
};
use crate::linalg;
use crate::tau::{ComplexChartData, TauSpec};

/// Absolute floor of every identity tolerance.
pub const TOLERANCE_FLOOR: f64 = 1e-9;

/// Safety factor applied to the Richardson error estimate.
pub const TOLERANCE_FACTOR: f64 = 10.0;

/// Both sides of an identity on one chart.
#[derive(Debug, Clone)]
pub struct IdentityCheck {
    pub lhs: TensorField,
    pub rhs: TensorField,
    /// Auxiliary scalars (sign witnesses, partial defects).
    pub details: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub name: String,
    pub status: Status,
    pub residual: Norms,
    pub lhs_sup: f64,
    pub rhs_sup: f64,
    pub tolerance: f64,
    /// Richardson estimate of the discretization error of the residual.
    pub error_estimate: Option<f64>,
    /// `log₂` of the ratio of residual sups at `h` and `h/2`.
    pub order_estimate: Option<f64>,
    pub details: BTreeMap<String, f64>,
}

impl IdentityReport {
    pub fn not_applicable(name: &str) -> Self {
        Self {
            name: name.to_string(),
            status: Status::NotApplicable,
            residual: Norms::default(),
            lhs_sup: 0.0,
            rhs_sup: 0.0,
            tolerance: 0.0,
            error_estimate: None,
            order_estimate: None,
            details: BTreeMap::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.status != Status::Fail
    }
}

/// Richardson factor `2^p / (2^p − 1)` turning a refinement difference
/// into an error estimate for the coarse level.
pub fn richardson_factor(order: u32) -> f64 {
    let r = 2f64.powi(order as i32);
    r / (r - 1.0)
}

/// `max(floor, factor · E)`.
pub fn tolerance_from_estimate(estimate: f64) -> f64 {
    TOLERANCE_FLOOR.max(TOLERANCE_FACTOR * estimate)
}

impl IdentityCheck {
    fn new(lhs: TensorField, rhs: TensorField) -> Result<Self> {
        let margin = lhs.margin().max(rhs.margin());
        let lhs = lhs.with_margin(margin);
        let rhs = rhs.with_margin(margin);
        if lhs.slot_ranges() != rhs.slot_ranges() || lhs.chart() != rhs.chart() {
            return Err(Error::Shape("identity sides differ in shape".into()));
        }
        Ok(Self {
            lhs,
            rhs,
            details: BTreeMap::new(),
        })
    }

    fn against_zero(lhs: TensorField) -> Result<Self> {
        let rhs = TensorField::zeros(lhs.chart(), lhs.fiber_dim(), lhs.slots().to_vec(), lhs.margin());
        Self::new(lhs, rhs)
    }

    fn detail(mut self, key: &str, value: f64) -> Self {
        self.details.insert(key.to_string(), value);
        self
    }

    pub fn residual(&self) -> Result<TensorField> {
        self.lhs.sub(&self.rhs)
    }

    /// Report against a fixed tolerance.
    pub fn report(&self, name: &str, tolerance: f64) -> Result<IdentityReport> {
        let (lo, hi) = valid_box(&self.lhs);
        self.report_on_region(name, tolerance, &lo, &hi)
    }

    /// [`IdentityCheck::report`] restricted to the physical box `[lo, hi]`.
    pub fn report_on_region(&self, name: &str, tolerance: f64, lo: &[f64], hi: &[f64]) -> Result<IdentityReport> {
        let residual = field_norms_on_region(&self.residual()?, lo, hi)?;
        Ok(IdentityReport {
            name: name.to_string(),
            status: if residual.sup <= tolerance { Status::Pass } else { Status::Fail },
            residual,
            lhs_sup: field_norms_on_region(&self.lhs, lo, hi)?.sup,
            rhs_sup: field_norms_on_region(&self.rhs, lo, hi)?.sup,
            tolerance,
            error_estimate: None,
            order_estimate: None,
            details: self.details.clone(),
        })
    }

    /// Report for the coarse level, with the tolerance built from the
    /// refinement differences of both sides. `fine` must be the same check
    /// on `coarse.chart().refined()`.
    pub fn compare(&self, fine: &IdentityCheck, name: &str, cfg: &FdConfig) -> Result<IdentityReport> {
        let (lo, hi) = valid_box(&self.lhs);
        self.compare_on_region(fine, name, cfg, &lo, &hi)
    }

    /// [`IdentityCheck::compare`] with every norm and estimate restricted
    /// to the physical box `[lo, hi]`.
    pub fn compare_on_region(
        &self,
        fine: &IdentityCheck,
        name: &str,
        cfg: &FdConfig,
        lo: &[f64],
        hi: &[f64],
    ) -> Result<IdentityReport> {
        let k = richardson_factor(cfg.order_int());
        let estimate = k
            * (refinement_difference_on_region(&self.lhs, &fine.lhs, lo, hi)?
                + refinement_difference_on_region(&self.rhs, &fine.rhs, lo, hi)?);
        let residual = field_norms_on_region(&self.residual()?, lo, hi)?;
        let fine_sup = field_norms_on_region(&fine.residual()?, lo, hi)?.sup;
        let tolerance = tolerance_from_estimate(estimate);
        Ok(IdentityReport {
            name: name.to_string(),
            status: if residual.sup <= tolerance { Status::Pass } else { Status::Fail },
            residual,
            lhs_sup: field_norms_on_region(&self.lhs, lo, hi)?.sup,
            rhs_sup: field_norms_on_region(&self.rhs, lo, hi)?.sup,
            tolerance,
            error_estimate: Some(estimate),
            order_estimate: order_estimate(residual.sup, fine_sup),
            details: self.details.clone(),
        })
    }
}

/// `log₂(coarse / fine)`, or `None` when either side sits at the rounding
/// floor.
pub fn order_estimate(coarse: f64, fine: f64) -> Option<f64> {
    if coarse > ROUNDING_FLOOR && fine > 0.0 {
        Some((coarse / fine).log2())
    } else {
        None
    }
}

/// Residuals below this are treated as exact.
pub const ROUNDING_FLOOR: f64 = 1e-10;

fn sqrt_det_fiber(bm: &BundleMetric) -> Result<TensorField> {
    bm.det_fiber()?.map(f64::sqrt)
}

/// `√det G` scalar field.
pub fn sqrt_det_g(bm: &BundleMetric) -> Result<TensorField> {
    sqrt_det_fiber(bm)
}

/// `∇_α (det G)^{½}` against `½ (det G)^{½} G^{IJ} G_{IJ;α}`.
pub fn check_grad_sqrt_det_g(bm: &BundleMetric, cfg: &FdConfig) -> Result<IdentityCheck> {
    let (n, big_n) = (bm.base_dim(), bm.fiber_dim());
    let root = sqrt_det_fiber(bm)?;
    let lhs = gradient(&root, cfg)?;
    let dg = gradient(bm.fiber_metric(), cfg)?;
    let gi = bm.fiber_inverse();
    let rhs = TensorField::from_interior(bm.chart(), 0, vec![Slot::Base], dg.margin(), |k, buf| {
        let (d, inv) = (dg.at(k), gi.at(k));
        for a in 0..n {
            let t: f64 = (0..big_n * big_n).map(|c| inv[c] * d[c * n + a]).sum();
            buf[a] = 0.5 * root.at(k)[0] * t;
        }
    })?;
    IdentityCheck::new(lhs, rhs)
}

/// Per-node tensors shared by the second-order identities.
struct Second {
    dg: TensorField,
    hess: TensorField,
}

impl Second {
    fn new(bm: &BundleMetric, cfg: &FdConfig) -> Result<Self> {
        Ok(Self {
            dg: gradient(bm.fiber_metric(), cfg)?,
            hess: geometry::covariant_hessian(bm.fiber_metric(), bm.base(), cfg)?,
        })
    }

    fn margin(&self) -> usize {
        self.hess.margin()
    }

    /// `M_α = G⁻¹ ∂_α G` as matrices.
    fn log_derivatives(&self, bm: &BundleMetric, k: usize) -> Vec<DMatrix<f64>> {
        let (n, big_n) = (bm.base_dim(), bm.fiber_dim());
        let gi = DMatrix::from_row_slice(big_n, big_n, bm.fiber_inverse().at(k));
        let d = self.dg.at(k);
        (0..n)
            .map(|a| &gi * DMatrix::from_fn(big_n, big_n, |i, j| d[(i * big_n + j) * n + a]))
            .collect()
    }

    /// `g^{αβ} G_{IJ;αβ}` as a matrix.
    fn trace_hessian(&self, bm: &BundleMetric, k: usize) -> DMatrix<f64> {
        let (n, big_n) = (bm.base_dim(), bm.fiber_dim());
        let h = self.hess.at(k);
        let ginv = bm.base().inverse().at(k);
        DMatrix::from_fn(big_n, big_n, |i, j| {
            (0..n * n).map(|ab| ginv[ab] * h[(i * big_n + j) * n * n + ab]).sum()
        })
    }
}

/// `△(det G)^{½}` against the three-term expression in `G`.
pub fn check_laplacian_sqrt_det_g(bm: &BundleMetric, cfg: &FdConfig) -> Result<IdentityCheck> {
    let n = bm.base_dim();
    let root = sqrt_det_fiber(bm)?;
    let lhs = geometry::laplacian(&root, bm.base(), cfg)?;
    let sec = Second::new(bm, cfg)?;
    let rhs = TensorField::from_interior(bm.chart(), 0, vec![], sec.margin(), |k, buf| {
        let big_n = bm.fiber_dim();
        let gi = DMatrix::from_row_slice(big_n, big_n, bm.fiber_inverse().at(k));
        let m = sec.log_derivatives(bm, k);
        let ginv = bm.base().inverse().at(k);
        let mut v = 0.5 * (&gi * sec.trace_hessian(bm, k)).trace();
        for a in 0..n {
            for b in 0..n {
                let w = ginv[a * n + b];
                v -= 0.5 * w * (&m[a] * &m[b]).trace();
                v += 0.25 * w * m[a].trace() * m[b].trace();
            }
        }
        buf[0] = root.at(k)[0] * v;
    })?;
    IdentityCheck::new(lhs, rhs)
}

/// `|F|² = g^{αγ} g^{βδ} G_{IJ} F^I_{αβ} F^J_{γδ}`.
pub fn field_strength_squared(bm: &BundleMetric, cfg: &FdConfig) -> Result<TensorField> {
    let (n, big_n) = (bm.base_dim(), bm.fiber_dim());
    let f = field_strength(bm.connection(), cfg)?.f;
    TensorField::from_interior(bm.chart(), 0, vec![], f.margin(), |k, buf| {
        let (fk, gf, gi) = (f.at(k), bm.fiber_metric().at(k), bm.base().inverse().at(k));
        let mut v = 0.0;
        for i in 0..big_n {
            for j in 0..big_n {
                for a in 0..n {
                    for b in 0..n {
                        for c in 0..n {
                            for d in 0..n {
                                v += gi[a * n + c]
                                    * gi[b * n + d]
                                    * gf[i * big_n + j]
                                    * fk[(i * n + a) * n + b]
                                    * fk[(j * n + c) * n + d];
                            }
                        }
                    }
                }
            }
        }
        buf[0] = v;
    })
}

/// `△√det G` against `(¼|F|² − λN) √det G`. Details carry the extreme
/// values of the right side, whose sign decides subharmonicity.
pub fn check_subharmonicity(bm: &BundleMetric, lambda: f64, cfg: &FdConfig) -> Result<IdentityCheck> {
    let root = sqrt_det_fiber(bm)?;
    let lhs = geometry::laplacian(&root, bm.base(), cfg)?;
    let f2 = field_strength_squared(bm, cfg)?;
    let big_n = bm.fiber_dim() as f64;
    let rhs = TensorField::from_interior(bm.chart(), 0, vec![], f2.margin(), |k, buf| {
        buf[0] = (0.25 * f2.at(k)[0] - lambda * big_n) * root.at(k)[0];
    })?;
    let check = IdentityCheck::new(lhs, rhs)?;
    let nodes = bm.chart().interior_nodes(check.rhs.margin());
    let vals = nodes.iter().map(|&k| check.rhs.at(k)[0]);
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    Ok(check.detail("rhs_min", lo).detail("rhs_max", hi))
}

/// Relative spread of `det G` below which it counts as constant.
pub const CONSTANT_DET_TOL: f64 = 1e-8;

/// Whether `det G` is constant and `F = 0` on the valid interior, the
/// regime in which [`check_harmonic_map`] and [`check_conformality`] apply.
pub fn constant_det_regime(bm: &BundleMetric, cfg: &FdConfig) -> Result<bool> {
    let det = bm.det_fiber()?;
    let nodes = bm.chart().interior_nodes(det.margin());
    let (lo, hi) = nodes
        .iter()
        .map(|&k| det.at(k)[0])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let f = field_strength(bm.connection(), cfg)?.f;
    let f_sup = field_norms(&f)?.sup;
    Ok(hi - lo <= CONSTANT_DET_TOL * hi.abs() && f_sup <= ROUNDING_FLOOR)
}

/// `g^{αβ} G_{IJ;αβ}` against `g^{αβ} G^{KL} G_{IK,α} G_{LJ,β}`.
pub fn check_harmonic_map(bm: &BundleMetric, cfg: &FdConfig) -> Result<IdentityCheck> {
    let (n, big_n) = (bm.base_dim(), bm.fiber_dim());
    let sec = Second::new(bm, cfg)?;
    let slots = vec![Slot::Fiber, Slot::Fiber];
    let chart = bm.chart();
    let lhs = TensorField::from_interior(chart, big_n, slots.clone(), sec.margin(), |k, buf| {
        let t = sec.trace_hessian(bm, k);
        buf.copy_from_slice(t.transpose().as_slice());
    })?;
    let rhs = TensorField::from_interior(chart, big_n, slots, sec.margin(), |k, buf| {
        let gi = DMatrix::from_row_slice(big_n, big_n, bm.fiber_inverse().at(k));
        let d = sec.dg.at(k);
        let dmat = |a: usize| DMatrix::from_fn(big_n, big_n, |i, j| d[(i * big_n + j) * n + a]);
        let ginv = bm.base().inverse().at(k);
        let mut acc = DMatrix::zeros(big_n, big_n);
        for a in 0..n {
            for b in 0..n {
                acc += dmat(a) * &gi * dmat(b) * ginv[a * n + b];
            }
        }
        buf.copy_from_slice(acc.transpose().as_slice());
    })?;
    IdentityCheck::new(lhs, rhs)
}

fn require_surface(bm: &BundleMetric) -> Result<()> {
    if bm.base_dim() != 2 {
        return Err(Error::InvalidParameter(format!(
            "needs a 2-dimensional base, got {}",
            bm.base_dim()
        )));
    }
    Ok(())
}

/// Twist density `t_I = √det G · G_{IJ} F^J_{12} / √det g` (orientation
/// `db¹ ∧ db²`) and its derivative `∂_α t_I`.
#[derive(Debug, Clone)]
pub struct TwistDensity {
    /// slots `[Fiber]`
    pub t: TensorField,
    /// slots `[Fiber, Base]`
    pub dt: TensorField,
    pub dt_sup: f64,
}

pub fn twist_density(bm: &BundleMetric, cfg: &FdConfig) -> Result<TwistDensity> {
    require_surface(bm)?;
    let big_n = bm.fiber_dim();
    let f = field_strength(bm.connection(), cfg)?.f;
    let t = TensorField::from_interior(bm.chart(), big_n, vec![Slot::Fiber], f.margin(), |k, buf| {
        let (gf, fk) = (bm.fiber_metric().at(k), f.at(k));
        let scale = linalg::determinant(gf, big_n).sqrt() / linalg::determinant(bm.base().field().at(k), 2).sqrt();
        for i in 0..big_n {
            // F^J_{12} sits at (J*2 + 0)*2 + 1
            buf[i] = scale * (0..big_n).map(|j| gf[i * big_n + j] * fk[j * 4 + 1]).sum::<f64>();
        }
    })?;
    let dt = gradient(&t, cfg)?;
    let dt_sup = field_norms(&dt)?.sup;
    Ok(TwistDensity { t, dt, dt_sup })
}

/// `∂_α t_I` against zero.
pub fn check_twist_constancy(bm: &BundleMetric, cfg: &FdConfig) -> Result<IdentityCheck> {
    let tw = twist_density(bm, cfg)?;
    let t_sup = field_norms(&tw.t)?.sup;
    Ok(IdentityCheck::against_zero(tw.dt)?.detail("t_sup", t_sup))
}

/// `h_{αβ} = G^{IJ} G_{JK,α} G^{KL} G_{LI,β}` against `2 R g_{αβ}`. Details
/// report the conformality defects `sup |h₁₂|` and `sup |h₁₁ − h₂₂|`,
/// meaningful for a conformally flat `g`.
pub fn check_conformality(bm: &BundleMetric, cfg: &FdConfig) -> Result<IdentityCheck> {
    require_surface(bm)?;
    let sec = Second::new(bm, cfg)?;
    let slots = vec![Slot::Base, Slot::Base];
    let chart = bm.chart();
    let margin = sec.dg.margin();
    let h = TensorField::from_interior(chart, 0, slots.clone(), margin, |k, buf| {
        let m = sec.log_derivatives(bm, k);
        for a in 0..2 {
            for b in 0..2 {
                buf[a * 2 + b] = (&m[a] * &m[b]).trace();
            }
        }
    })?;
    let scalar = geometry::scalar_base(bm.base(), cfg)?;
    let rhs = TensorField::from_interior(chart, 0, slots, scalar.margin(), |k, buf| {
        let g = bm.base().field().at(k);
        for c in 0..4 {
            buf[c] = 2.0 * scalar.at(k)[0] * g[c];
        }
    })?;
    let check = IdentityCheck::new(h, rhs)?;
    let nodes = chart.interior_nodes(check.lhs.margin());
    let (mut off, mut gap) = (0.0f64, 0.0f64);
    for &k in &nodes {
        let v = check.lhs.at(k);
        off = off.max(v[1].abs());
        gap = gap.max((v[0] - v[3]).abs());
    }
    Ok(check.detail("h12_sup", off).detail("h11_minus_h22_sup", gap))
}

/// Coefficients of `i dz ∧ dz̄` in the Ricci form of a conformal surface
/// metric (`R √det g / 4`) and in `|τ′|² / (4 (Im τ)²)`.
pub fn check_ricci_form(tau: &ComplexChartData, base: &BaseMetric, cfg: &FdConfig) -> Result<IdentityCheck> {
    if base.field().chart() != tau.chart() {
        return Err(Error::Shape("tau and the base metric must share one chart".into()));
    }
    let scalar = geometry::scalar_base(base, cfg)?;
    let lhs = TensorField::from_interior(tau.chart(), 0, vec![], scalar.margin(), |k, buf| {
        let det = linalg::determinant(base.field().at(k), 2);
        buf[0] = 0.25 * scalar.at(k)[0] * det.sqrt();
    })?;
    let rhs = TensorField::from_interior(tau.chart(), 0, vec![], tau.derivative_margin(), |k, buf| {
        let im = tau.value(k).im;
        buf[0] = tau.derivative(k).norm_sqr() / (4.0 * im * im);
    })?;
    IdentityCheck::new(lhs, rhs)
}

/// Scalar curvature of the assembled metric against `G^{IJ} R̄_IJ + g^{αβ} R̄_αβ`
/// from the block expressions.
pub fn check_scalar_trace(bm: &BundleMetric, cfg: &FdConfig) -> Result<IdentityCheck> {
    let blocks = ricci_blocks(bm, cfg)?;
    let (n, big_n) = (bm.base_dim(), bm.fiber_dim());
    let rhs = TensorField::from_interior(bm.chart(), 0, vec![], blocks.margin(), |k, buf| {
        let (rf, rb) = (blocks.fiber.at(k), blocks.base.at(k));
        let (gfi, gbi) = (bm.fiber_inverse().at(k), bm.base().inverse().at(k));
        buf[0] = (0..big_n * big_n).map(|c| gfi[c] * rf[c]).sum::<f64>()
            + (0..n * n).map(|c| gbi[c] * rb[c]).sum::<f64>();
    })?;
    IdentityCheck::new(blocks.scalar, rhs)
}

/// Inputs of the semiflat Kähler check, sampled over `(b¹, b², x¹, x²)`.
pub struct KahlerInput<'a> {
    pub tau: &'a TauSpec,
    /// Base Kähler potential `φ_B(b)`.
    pub potential: &'a (dyn Fn(&[f64]) -> f64 + Sync),
    /// Base Kähler form as the density `ω_B = ρ db¹ ∧ db²`.
    pub base_form: &'a (dyn Fn(&[f64]) -> f64 + Sync),
    /// Coefficient of an extra `(b¹)³` added to the potential.
    pub perturbation: f64,
}

/// Result of the Kähler check: `i∂∂̄φ̄` against the closed-form `ω̄`, and
/// `dω̄` against zero.
#[derive(Debug, Clone)]
pub struct KahlerCheck {
    pub potential: IdentityCheck,
    pub closedness: IdentityCheck,
}

/// Complex structure in `(b¹, b², x¹, x²)` for the holomorphic coordinates
/// `z = b¹ + i b²` and `w = x¹ + τ x²`. Entry `(ν, μ)` is `(J ∂_μ)^ν`.
fn complex_structure(tau: Complex64, dtau: Complex64, x2: f64) -> Matrix4<f64> {
    // ∂τ/∂b² = i τ′ for holomorphic τ.
    let d2 = Complex64::new(0.0, 1.0) * dtau;
    #[rustfmt::skip]
    let jac = Matrix4::new(
        1.0, 0.0, 0.0, 0.0,
        0.0, 1.0, 0.0, 0.0,
        dtau.re * x2, d2.re * x2, 1.0, tau.re,
        dtau.im * x2, d2.im * x2, 0.0, tau.im,
    );
    #[rustfmt::skip]
    let j0 = Matrix4::new(
        0.0, -1.0, 0.0, 0.0,
        1.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, -1.0,
        0.0, 0.0, 1.0, 0.0,
    );
    let inv = jac.try_inverse().expect("Im tau > 0 keeps the chart map invertible");
    inv * j0 * jac
}

pub fn check_kahler_potential(input: &KahlerInput, chart: &Chart, cfg: &FdConfig) -> Result<KahlerCheck> {
    if chart.dim() != 4 {
        return Err(Error::Shape("the Kähler check runs on a 4-d chart (b1, b2, x1, x2)".into()));
    }
    let i = Complex64::new(0.0, 1.0);
    let eval = |y: &[f64]| input.tau.eval(Complex64::new(y[0], y[1]));
    for k in 0..chart.node_count() {
        let t = eval(&chart.coords(k)).0;
        if t.im <= 0.0 {
            return Err(Error::OutsideUpperHalfPlane { node: k, im: t.im });
        }
    }
    let potential = sample(chart, |y| {
        let t = eval(y).0;
        let w = y[2] + t * y[3];
        let ww = (w - w.conj()) * (w - w.conj());
        (input.potential)(&y[..2]) - (ww / (4.0 * t.im)).re + input.perturbation * y[0].powi(3)
    })?;
    let df = gradient(&potential, cfg)?;
    let beta = TensorField::from_interior(chart, 0, vec![Slot::Base], df.margin(), |k, buf| {
        let y = chart.coords(k);
        let (t, dt) = eval(&y);
        let j = complex_structure(t, dt, y[3]);
        let d = df.at(k);
        for mu in 0..4 {
            buf[mu] = -(0..4).map(|nu| j[(nu, mu)] * d[nu]).sum::<f64>();
        }
    })?;
    let dbeta = gradient(&beta, cfg)?;
    let slots = vec![Slot::Base, Slot::Base];
    let lhs = TensorField::from_interior(chart, 0, slots.clone(), dbeta.margin(), |k, buf| {
        let d = dbeta.at(k);
        // d[c*4 + a] = ∂_a β_c
        for mu in 0..4 {
            for nu in 0..4 {
                buf[mu * 4 + nu] = 0.5 * (d[nu * 4 + mu] - d[mu * 4 + nu]);
            }
        }
    })?;
    let rhs = TensorField::from_nodes(chart, 0, slots, 0, |k, buf| {
        let y = chart.coords(k);
        let (t, dt) = eval(&y);
        let w = y[2] + t * y[3];
        let s = (w - w.conj()) / (t - t.conj());
        // 1-forms dw and dτ in (db¹, db², dx¹, dx²).
        let dtau = [dt, i * dt, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)];
        let dw = [y[3] * dtau[0], y[3] * dtau[1], Complex64::new(1.0, 0.0), t];
        let alpha: Vec<Complex64> = (0..4).map(|m| dw[m] - s * dtau[m]).collect();
        let coef = i / (2.0 * t.im);
        let rho = (input.base_form)(&y[..2]);
        for mu in 0..4 {
            for nu in 0..4 {
                let wedge = alpha[mu] * alpha[nu].conj() - alpha[nu] * alpha[mu].conj();
                buf[mu * 4 + nu] = (coef * wedge).re;
            }
        }
        buf[1] += rho;
        buf[4] -= rho;
    })?;
    let d_omega = gradient(&rhs, cfg)?;
    let closed = TensorField::from_interior(
        chart,
        0,
        vec![Slot::Base, Slot::Base, Slot::Base],
        d_omega.margin(),
        |k, buf| {
            // d[(μ*4 + ν)*4 + λ] = ∂_λ ω_{μν}
            let d = d_omega.at(k);
            let at = |m: usize, n: usize, l: usize| d[(m * 4 + n) * 4 + l];
            for l in 0..4 {
                for m in 0..4 {
                    for n in 0..4 {
                        buf[(l * 4 + m) * 4 + n] = at(m, n, l) + at(n, l, m) + at(l, m, n);
                    }
                }
            }
        },
    )?;
    Ok(KahlerCheck {
        potential: IdentityCheck::new(lhs, rhs)?,
        closedness: IdentityCheck::against_zero(closed)?,
    })
}

/// Pointwise least-squares fit of `R̄_{Iα} = L_α^β ∂_β t_I` over a set of
/// bundle metrics sharing `G` and `g` (so one 2×2 map per node).
#[derive(Debug, Clone, Serialize)]
pub struct TwistFit {
    /// `‖R − L ∂t‖ / ‖R‖` over all nodes and samples.
    pub relative_residual: f64,
    /// Smallest `σ_min / σ_max` of the fitted maps.
    pub min_conditioning: f64,
    /// Mean projection of the fitted map on
    /// `(√det g / √det G) ε_{αγ} g^{γβ}`.
    pub constant: f64,
    /// Largest deviation of the per-node projection from `constant`.
    pub constant_spread: f64,
    /// Relative Richardson error estimate of the inputs, filled in by
    /// [`twist_fit_with_estimate`].
    pub input_error: Option<f64>,
    pub nodes: usize,
    pub samples: usize,
}

/// `∂_α t_I` and `R̄_{Iα}` restricted to common nodes, flattened per node.
struct TwistSample {
    dt: TensorField,
    mixed: TensorField,
}

fn twist_sample(bm: &BundleMetric, cfg: &FdConfig) -> Result<TwistSample> {
    let dt = twist_density(bm, cfg)?.dt;
    let mixed = ricci_mixed(bm, cfg)?;
    let m = dt.margin().max(mixed.margin());
    Ok(TwistSample {
        dt: dt.with_margin(m),
        mixed: mixed.with_margin(m),
    })
}

pub fn fit_twist_mixed(metrics: &[BundleMetric], cfg: &FdConfig) -> Result<TwistFit> {
    let samples = metrics
        .iter()
        .map(|bm| twist_sample(bm, cfg))
        .collect::<Result<Vec<_>>>()?;
    fit_samples(metrics, &samples)
}

fn fit_samples(metrics: &[BundleMetric], samples: &[TwistSample]) -> Result<TwistFit> {
    let first = metrics
        .first()
        .ok_or_else(|| Error::InvalidParameter("no metrics to fit".into()))?;
    require_surface(first)?;
    let chart = first.chart();
    let big_n = first.fiber_dim();
    let margin = samples[0].dt.margin();
    let nodes = chart.interior_nodes(margin);
    let (mut res2, mut tot2) = (0.0, 0.0);
    let mut min_cond = f64::INFINITY;
    let mut projections = Vec::with_capacity(nodes.len());
    for &k in &nodes {
        let mut xx = Matrix2::<f64>::zeros();
        let mut yx = Matrix2::<f64>::zeros();
        for s in samples {
            let (dt, r) = (s.dt.at(k), s.mixed.at(k));
            for i in 0..big_n {
                let x = nalgebra::Vector2::new(dt[i * 2], dt[i * 2 + 1]);
                let y = nalgebra::Vector2::new(r[i * 2], r[i * 2 + 1]);
                xx += x * x.transpose();
                yx += y * x.transpose();
            }
        }
        let l = yx * xx.try_inverse().ok_or(Error::Singular { node: k })?;
        for s in samples {
            let (dt, r) = (s.dt.at(k), s.mixed.at(k));
            for i in 0..big_n {
                let x = nalgebra::Vector2::new(dt[i * 2], dt[i * 2 + 1]);
                let y = nalgebra::Vector2::new(r[i * 2], r[i * 2 + 1]);
                res2 += (y - l * x).norm_squared();
                tot2 += y.norm_squared();
            }
        }
        let sv = l.singular_values();
        min_cond = min_cond.min(sv.min() / sv.max());
        let g = first.base().field().at(k);
        let gi = Matrix2::from_row_slice(first.base().inverse().at(k));
        let eps = Matrix2::new(0.0, 1.0, -1.0, 0.0);
        let scale = linalg::determinant(g, 2).sqrt() / linalg::determinant(first.fiber_metric().at(k), big_n).sqrt();
        let pred = eps * gi * scale;
        projections.push(l.dot(&pred) / pred.norm_squared());
    }
    let constant = projections.iter().sum::<f64>() / projections.len() as f64;
    let spread = projections.iter().map(|p| (p - constant).abs()).fold(0.0, f64::max);
    Ok(TwistFit {
        relative_residual: (res2 / tot2).sqrt(),
        min_conditioning: min_cond,
        constant,
        constant_spread: spread,
        input_error: None,
        nodes: nodes.len(),
        samples: samples.len(),
    })
}

/// Fit on `coarse`, with the relative Richardson error of `∂t` and `R̄_{Iα}`
/// measured against the same metrics on the refined chart.
pub fn twist_fit_with_estimate(
    coarse: &[BundleMetric],
    fine: &[BundleMetric],
    cfg: &FdConfig,
) -> Result<TwistFit> {
    if coarse.len() != fine.len() {
        return Err(Error::InvalidParameter("coarse and fine sample counts differ".into()));
    }
    let cs = coarse
        .iter()
        .map(|bm| twist_sample(bm, cfg))
        .collect::<Result<Vec<_>>>()?;
    let k = richardson_factor(cfg.order_int());
    let (mut err_r, mut err_t, mut sup_r, mut sup_t) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (c, bm) in cs.iter().zip(fine) {
        let f = twist_sample(bm, cfg)?;
        err_r = err_r.max(k * refinement_difference(&c.mixed, &f.mixed)?);
        err_t = err_t.max(k * refinement_difference(&c.dt, &f.dt)?);
        sup_r = sup_r.max(field_norms(&c.mixed)?.sup);
        sup_t = sup_t.max(field_norms(&c.dt)?.sup);
    }
    let mut fit = fit_samples(coarse, &cs)?;
    fit.input_error = Some(err_r / sup_r + err_t / sup_t);
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{flat_product, random_bundle, semiflat_fiber_metric, conformal_base, RandomParams};
    use crate::grid::sample_tensor;

    fn chart2(points: usize) -> Chart {
        Chart::new(&[(0.0, 1.0), (0.0, 1.0)], &[points, points]).unwrap()
    }

    #[test]
    fn constant_fiber_metric_trivial() {
        let c = chart2(17);
        let fiber = sample_tensor(&c, 2, vec![Slot::Fiber, Slot::Fiber], |_, b| {
            b.copy_from_slice(&[2.0, 0.3, 0.3, 1.0])
        })
        .unwrap();
        let bm = flat_product(2, &c).unwrap();
        let bm = BundleMetric::new(fiber, bm.connection().clone(), bm.base().clone()).unwrap();
        let cfg = FdConfig::fourth();
        for check in [
            check_grad_sqrt_det_g(&bm, &cfg).unwrap(),
            check_laplacian_sqrt_det_g(&bm, &cfg).unwrap(),
            check_harmonic_map(&bm, &cfg).unwrap(),
            check_conformality(&bm, &cfg).unwrap(),
            check_subharmonicity(&bm, 0.0, &cfg).unwrap(),
        ] {
            let r = check.report("x", 1e-12).unwrap();
            assert!(r.passed(), "{r:?}");
        }
    }

    #[test]
    fn universal_identities_converge() {
        let cfg = FdConfig::fourth();
        let run = |pts: usize| {
            let bm = random_bundle(5, 2, &chart2(pts), &RandomParams::default()).unwrap();
            (
                check_grad_sqrt_det_g(&bm, &cfg).unwrap(),
                check_laplacian_sqrt_det_g(&bm, &cfg).unwrap(),
            )
        };
        let (g1, l1) = run(17);
        let (g2, l2) = run(33);
        let rg = g1.compare(&g2, "grad", &cfg).unwrap();
        let rl = l1.compare(&l2, "lap", &cfg).unwrap();
        assert!(rg.passed() && rl.passed(), "{rg:?} {rl:?}");
        assert!(rg.order_estimate.unwrap() > 3.5, "{rg:?}");
        assert!(rl.order_estimate.unwrap() > 3.5, "{rl:?}");
    }

    #[test]
    fn random_fields_violate_harmonic_map() {
        let bm = random_bundle(7, 2, &chart2(33), &RandomParams::default()).unwrap();
        let r = check_harmonic_map(&bm, &FdConfig::fourth()).unwrap().report("h", 1e-6).unwrap();
        assert!(r.residual.sup >= 1e-3, "{r:?}");
    }

    #[test]
    fn twist_vanishes_without_connection() {
        let bm = random_bundle(2, 2, &chart2(17), &RandomParams {
            connection_amplitude: 0.0,
            ..RandomParams::default()
        })
        .unwrap();
        let tw = twist_density(&bm, &FdConfig::fourth()).unwrap();
        assert_eq!(field_norms(&tw.t).unwrap().sup, 0.0);
        assert_eq!(tw.dt_sup, 0.0);
    }

    #[test]
    fn twist_requires_surface() {
        let c = Chart::new(&[(0.0, 1.0)], &[17]).unwrap();
        let bm = flat_product(2, &c).unwrap();
        assert!(twist_density(&bm, &FdConfig::fourth()).is_err());
    }

    #[test]
    fn ricci_form_negative_control() {
        let c = Chart::new(&[(-1.0, 1.0), (1.0, 2.0)], &[17, 17]).unwrap();
        let tau = ComplexChartData::from_spec(&TauSpec::Identity, &c).unwrap();
        let phi = sample(&c, |_| 0.0).unwrap();
        let check = check_ricci_form(&tau, &conformal_base(&phi).unwrap(), &FdConfig::fourth()).unwrap();
        let res = check.residual().unwrap();
        for k in c.interior_nodes(res.margin()) {
            let b2 = c.coords(k)[1];
            assert!((res.at(k)[0] + 0.25 / (b2 * b2)).abs() < 1e-12);
        }
    }

    #[test]
    fn conformality_negative_control() {
        let c = Chart::new(&[(-1.0, 1.0), (1.0, 2.0)], &[17, 17]).unwrap();
        let cfg = FdConfig::fourth();
        let detail = |spec: TauSpec| {
            let tau = ComplexChartData::from_spec(&spec, &c).unwrap();
            let phi = sample(&c, |_| 0.0).unwrap();
            let bm = BundleMetric::new(
                semiflat_fiber_metric(&tau).unwrap(),
                TensorField::zeros(&c, 2, vec![Slot::Fiber, Slot::Base], 0),
                conformal_base(&phi).unwrap(),
            )
            .unwrap();
            let ch = check_conformality(&bm, &cfg).unwrap();
            ch.details["h12_sup"].max(ch.details["h11_minus_h22_sup"])
        };
        let v = detail(TauSpec::Identity);
    assert!(v < 1e-4, "{v}");
        assert!(detail(TauSpec::Deformed { epsilon: 0.3 }) > 1e-2);
    }

    #[test]
    fn kahler_flat_case() {
        let c = Chart::new(&[(0.0, 1.0), (0.0, 1.0), (0.0, 1.0), (0.0, 1.0)], &[9; 4]).unwrap();
        let input = KahlerInput {
            tau: &TauSpec::Constant { re: 0.0, im: 1.0 },
            potential: &|b: &[f64]| 0.5 * (b[0] * b[0] + b[1] * b[1]),
            base_form: &|_: &[f64]| 1.0,
            perturbation: 0.0,
        };
        let k = check_kahler_potential(&input, &c, &FdConfig::fourth()).unwrap();
        let r = k.potential.report("kahler", 1e-12).unwrap();
        assert!(r.passed(), "{r:?}");
        let rhs = &k.potential.rhs;
        for node in 0..c.node_count() {
            let v = rhs.at(node);
            assert!((v[1] - 1.0).abs() < 1e-14 && (v[2 * 4 + 3] - 1.0).abs() < 1e-14);
        }
        assert!(k.closedness.report("closed", 1e-12).unwrap().passed());
    }

    #[test]
    fn scalar_trace_matches() {
        let cfg = FdConfig::fourth();
        let bm = random_bundle(9, 2, &chart2(17), &RandomParams::default()).unwrap();
        let r = check_scalar_trace(&bm, &cfg).unwrap().report("trace", 1e-10).unwrap();
        assert!(r.passed(), "{r:?}");
    }
}
