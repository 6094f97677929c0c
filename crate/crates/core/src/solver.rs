//! Conformal-factor Poisson solve for semiflat bases and the one-dimensional
//! base ODE for `G(s)`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{field_norms, partial, Chart, FdConfig, FdOrder, Slot, TensorField};
use crate::linalg;
use crate::tau::{holomorphy_residual, ComplexChartData, HOLOMORPHY_TOL};

/// Stopping rule for the conjugate-gradient iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticOptions {
    /// Bound on `‖b − Ax‖ / ‖b‖`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Restart the search direction from the true residual every this many
    /// iterations.
    pub restart: Option<usize>,
}

impl Default for EllipticOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-12,
            max_iterations: 20_000,
            restart: None,
        }
    }
}

/// `Δφ = −ρ` on a rectangle with Dirichlet data. `boundary` supplies the
/// values on the outer ring of nodes (zero when absent).
#[derive(Debug, Clone)]
pub struct EllipticProblem {
    pub source: TensorField,
    pub boundary: Option<TensorField>,
    pub options: EllipticOptions,
}

#[derive(Debug, Clone)]
pub struct EllipticSolution {
    pub phi: TensorField,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Flat Laplacian stencil on a uniform rectangle. At fourth order it is the
/// nine-point compact scheme with the matching right-hand-side correction.
struct Stencil {
    px: usize,
    py: usize,
    sx: usize,
    sy: usize,
    ix2: f64,
    iy2: f64,
    hx2: f64,
    hy2: f64,
    compact: bool,
}

impl Stencil {
    fn new(chart: &Chart, order: FdOrder) -> Self {
        let h = chart.spacing();
        Self {
            px: chart.points()[0],
            py: chart.points()[1],
            sx: chart.stride(0),
            sy: chart.stride(1),
            ix2: 1.0 / (h[0] * h[0]),
            iy2: 1.0 / (h[1] * h[1]),
            hx2: h[0] * h[0],
            hy2: h[1] * h[1],
            compact: order == FdOrder::Fourth,
        }
    }

    fn is_interior(&self, i: usize, j: usize) -> bool {
        i > 0 && j > 0 && i + 1 < self.px && j + 1 < self.py
    }

    fn node(&self, i: usize, j: usize) -> usize {
        i * self.sx + j * self.sy
    }

    fn dxx(&self, u: &[f64], k: usize) -> f64 {
        (u[k + self.sx] - 2.0 * u[k] + u[k - self.sx]) * self.ix2
    }

    fn dyy(&self, u: &[f64], k: usize) -> f64 {
        (u[k + self.sy] - 2.0 * u[k] + u[k - self.sy]) * self.iy2
    }

    /// Discrete Laplacian at an interior node.
    fn apply(&self, u: &[f64], k: usize) -> f64 {
        let mut v = self.dxx(u, k) + self.dyy(u, k);
        if self.compact {
            let cross = (self.dyy(u, k + self.sx) - 2.0 * self.dyy(u, k) + self.dyy(u, k - self.sx))
                * self.ix2;
            v += (self.hx2 + self.hy2) / 12.0 * cross;
        }
        v
    }

    /// Right-hand side seen by the scheme for `Δu = f`.
    fn rhs(&self, f: &[f64], k: usize) -> f64 {
        if self.compact {
            f[k] + (self.hx2 * self.dxx(f, k) + self.hy2 * self.dyy(f, k)) / 12.0
        } else {
            f[k]
        }
    }

    /// `out = −L u` on interior nodes, zero on the boundary ring.
    fn neg_apply(&self, u: &[f64], out: &mut [f64]) {
        out.par_iter_mut().enumerate().for_each(|(k, o)| {
            let (i, j) = (k / self.sx % self.px, k / self.sy % self.py);
            *o = if self.is_interior(i, j) { -self.apply(u, k) } else { 0.0 };
        });
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves the Dirichlet problem by matrix-free conjugate gradients on the
/// symmetric positive-definite operator `−Δ_h`.
pub fn solve_poisson(problem: &EllipticProblem, cfg: &FdConfig) -> Result<EllipticSolution> {
    let chart = problem.source.chart();
    if chart.dim() != 2 || !problem.source.slots().is_empty() {
        return Err(Error::Shape("source must be a scalar on a 2-d chart".into()));
    }
    let opts = &problem.options;
    if !(opts.tolerance > 0.0) {
        return Err(Error::InvalidParameter("solver tolerance must be positive".into()));
    }
    if opts.restart == Some(0) {
        return Err(Error::InvalidParameter("restart period must be positive".into()));
    }
    let st = Stencil::new(chart, cfg.order);
    let n = chart.node_count();
    let f: Vec<f64> = problem.source.values().iter().map(|r| -r).collect();

    let mut g = vec![0.0; n];
    if let Some(bc) = &problem.boundary {
        if bc.chart() != chart || !bc.slots().is_empty() {
            return Err(Error::Shape("boundary data must be a scalar on the source chart".into()));
        }
        for i in 0..st.px {
            for j in 0..st.py {
                if !st.is_interior(i, j) {
                    let k = st.node(i, j);
                    g[k] = bc.values()[k];
                }
            }
        }
    }

    // A w = b with A = −L, u = w + g.
    let mut b = vec![0.0; n];
    let mut lg = vec![0.0; n];
    st.neg_apply(&g, &mut lg);
    b.par_iter_mut().enumerate().for_each(|(k, bk)| {
        let (i, j) = (k / st.sx % st.px, k / st.sy % st.py);
        if st.is_interior(i, j) {
            *bk = -lg[k] - st.rhs(&f, k);
        }
    });
    let b_norm = dot(&b, &b).sqrt();

    let mut w = vec![0.0; n];
    let mut iterations = 0;
    let mut relative_residual = 0.0;
    if b_norm > 0.0 {
        let mut r = b.clone();
        let mut p = r.clone();
        let mut ap = vec![0.0; n];
        let mut rr = dot(&r, &r);
        let mut since_restart = 0;
        loop {
            relative_residual = rr.sqrt() / b_norm;
            if relative_residual <= opts.tolerance {
                // The recursive residual drifts from the true one; confirm.
                st.neg_apply(&w, &mut ap);
                r.iter_mut().zip(&b).zip(&ap).for_each(|((ri, bi), ai)| *ri = bi - ai);
                rr = dot(&r, &r);
                relative_residual = rr.sqrt() / b_norm;
                if relative_residual <= opts.tolerance {
                    break;
                }
                p.copy_from_slice(&r);
                since_restart = 0;
            }
            if iterations >= opts.max_iterations {
                return Err(Error::NonConvergence {
                    iterations,
                    residual: relative_residual,
                });
            }
            if opts.restart.is_some_and(|m| since_restart == m) {
                st.neg_apply(&w, &mut ap);
                r.iter_mut().zip(&b).zip(&ap).for_each(|((ri, bi), ai)| *ri = bi - ai);
                rr = dot(&r, &r);
                p.copy_from_slice(&r);
                since_restart = 0;
            }
            st.neg_apply(&p, &mut ap);
            let alpha = rr / dot(&p, &ap);
            w.iter_mut().zip(&p).for_each(|(wi, pi)| *wi += alpha * pi);
            r.iter_mut().zip(&ap).for_each(|(ri, ai)| *ri -= alpha * ai);
            let rr_new = dot(&r, &r);
            let beta = rr_new / rr;
            rr = rr_new;
            p.iter_mut().zip(&r).for_each(|(pi, ri)| *pi = ri + beta * *pi);
            iterations += 1;
            since_restart += 1;
        }
    }
    let values = w.iter().zip(&g).map(|(a, b)| a + b).collect();
    Ok(EllipticSolution {
        phi: TensorField::new(chart.clone(), 0, vec![], values, 0)?,
        iterations,
        relative_residual,
    })
}

/// Source `ρ = |τ′|² / (2 (Im τ)²)` of the conformal-factor equation.
pub fn semiflat_source(tau: &ComplexChartData) -> Result<TensorField> {
    if tau.derivative_margin() != 0 {
        return Err(Error::InvalidParameter(
            "the conformal solve needs tau' at every node, including the boundary".into(),
        ));
    }
    TensorField::from_nodes(tau.chart(), 0, vec![], 0, |k, buf| {
        let im = tau.value(k).im;
        buf[0] = tau.derivative(k).norm_sqr() / (2.0 * im * im);
    })
}

/// Conformal exponent `φ` of `g = e^{2φ}|dz|²` whose Ricci form matches the
/// one prescribed by `τ`, with zero Dirichlet data.
pub fn solve_semiflat_conformal(
    tau: &ComplexChartData,
    options: &EllipticOptions,
    cfg: &FdConfig,
) -> Result<EllipticSolution> {
    let defect = field_norms(&holomorphy_residual(tau, cfg)?)?.sup;
    if !(defect <= HOLOMORPHY_TOL) {
        return Err(Error::NotHolomorphic {
            residual: defect,
            tolerance: HOLOMORPHY_TOL,
        });
    }
    solve_poisson(
        &EllipticProblem {
            source: semiflat_source(tau)?,
            boundary: None,
            options: *options,
        },
        cfg,
    )
}

/// Which reduction of the fiber equation to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OdeBranch {
    /// `G_ss + G_s/s − G_s G⁻¹ G_s = 0` (`det G ∝ s²`).
    QuadraticDet,
    /// `G_ss − G_s G⁻¹ G_s = 0` (`det G` constant).
    ConstantDet,
}

#[derive(Debug, Clone)]
pub struct OdeProblem {
    pub s0: f64,
    pub s1: f64,
    pub g0: DMatrix<f64>,
    pub gs0: DMatrix<f64>,
    pub step: f64,
    pub branch: OdeBranch,
}

#[derive(Debug, Clone)]
pub struct OdeSolution {
    pub s: Vec<f64>,
    pub g: Vec<DMatrix<f64>>,
    pub gs: Vec<DMatrix<f64>>,
    pub branch: OdeBranch,
    /// Largest entry of `C(s) − C(s₀)` for the branch's conserved matrix
    /// `C = s G⁻¹ G_s` or `C = G⁻¹ G_s`.
    pub conserved_drift: f64,
}

impl OdeSolution {
    pub fn chart(&self) -> Result<Chart> {
        Chart::new(&[(self.s[0], *self.s.last().unwrap())], &[self.s.len()])
    }

    /// The trajectory as a fiber-metric field on its 1-d chart.
    pub fn fiber_field(&self) -> Result<TensorField> {
        let chart = self.chart()?;
        let values = self.g.iter().flat_map(row_major).collect();
        let n = self.g[0].nrows();
        TensorField::new(chart, n, vec![Slot::Fiber, Slot::Fiber], values, 0)?.with_symmetric((0, 1))
    }

    pub fn max_slope(&self) -> f64 {
        self.gs.iter().map(|m| m.amax()).fold(0.0, f64::max)
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    linalg::min_symmetric_eigenvalue(&row_major(m), m.nrows())
}

fn inverse(m: &DMatrix<f64>, node: usize) -> Result<DMatrix<f64>> {
    m.clone().try_inverse().ok_or(Error::Singular { node })
}

fn conserved(branch: OdeBranch, s: f64, g: &DMatrix<f64>, gs: &DMatrix<f64>, node: usize) -> Result<DMatrix<f64>> {
    let c = inverse(g, node)? * gs;
    Ok(match branch {
        OdeBranch::QuadraticDet => c * s,
        OdeBranch::ConstantDet => c,
    })
}

/// Classical fourth-order Runge–Kutta on `(G, G_s)` with a uniform step
/// that divides the interval. Positive definiteness is checked after every
/// step.
pub fn integrate_base_ode(prob: &OdeProblem) -> Result<OdeSolution> {
    let n = prob.g0.nrows();
    if !(prob.s0 > 0.0 && prob.s1 > prob.s0 && prob.s1.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < s0 < s1, got [{}, {}]",
            prob.s0, prob.s1
        )));
    }
    if !prob.g0.is_square() || prob.gs0.shape() != (n, n) || n == 0 {
        return Err(Error::Shape("initial G and G_s must be square of one size".into()));
    }
    for (name, m) in [("G", &prob.g0), ("G_s", &prob.gs0)] {
        if m.iter().any(|v| !v.is_finite()) || (m - m.transpose()).amax() != 0.0 {
            return Err(Error::InvalidParameter(format!("initial {name} must be finite and symmetric")));
        }
    }
    let lam = min_eigenvalue(&prob.g0);
    if lam <= crate::geometry::PD_FLOOR {
        return Err(Error::NotPositiveDefinite {
            node: 0,
            min_eigenvalue: lam,
        });
    }
    let len = prob.s1 - prob.s0;
    if !(prob.step > 0.0) {
        return Err(Error::InvalidParameter("step must be positive".into()));
    }
    let steps = (len / prob.step).round().max(4.0);
    if steps > 1e8 || len / steps <= prob.s1 * f64::EPSILON * 16.0 {
        return Err(Error::StepUnderflow { s: prob.s0 });
    }
    let steps = steps as usize;
    let h = len / steps as f64;

    let branch = prob.branch;
    let rhs = |s: f64, g: &DMatrix<f64>, p: &DMatrix<f64>, node: usize| -> Result<DMatrix<f64>> {
        let q = p * inverse(g, node)? * p;
        Ok(symmetrize(match branch {
            OdeBranch::QuadraticDet => q - p / s,
            OdeBranch::ConstantDet => q,
        }))
    };

    let mut s_out = vec![prob.s0];
    let mut g_out = vec![prob.g0.clone()];
    let mut p_out = vec![prob.gs0.clone()];
    let c0 = conserved(branch, prob.s0, &prob.g0, &prob.gs0, 0)?;
    let mut drift: f64 = 0.0;
    for step in 0..steps {
        let s = prob.s0 + step as f64 * h;
        let (g, p) = (&g_out[step], &p_out[step]);
        let k1g = p.clone();
        let k1p = rhs(s, g, p, step)?;
        let g2 = g + &k1g * (h / 2.0);
        let p2 = p + &k1p * (h / 2.0);
        let k2g = p2.clone();
        let k2p = rhs(s + h / 2.0, &g2, &p2, step)?;
        let g3 = g + &k2g * (h / 2.0);
        let p3 = p + &k2p * (h / 2.0);
        let k3g = p3.clone();
        let k3p = rhs(s + h / 2.0, &g3, &p3, step)?;
        let g4 = g + &k3g * h;
        let p4 = p + &k3p * h;
        let k4g = p4.clone();
        let k4p = rhs(s + h, &g4, &p4, step)?;
        let g_next = symmetrize(g + (k1g + &k2g * 2.0 + &k3g * 2.0 + k4g) * (h / 6.0));
        let p_next = symmetrize(p + (k1p + &k2p * 2.0 + &k3p * 2.0 + k4p) * (h / 6.0));
        let s_next = if step + 1 == steps { prob.s1 } else { s + h };
        let lam = min_eigenvalue(&g_next);
        if !(lam > crate::geometry::PD_FLOOR) {
            return Err(Error::NotPositiveDefinite {
                node: step + 1,
                min_eigenvalue: lam,
            });
        }
        let c = conserved(branch, s_next, &g_next, &p_next, step + 1)?;
        drift = drift.max((c - &c0).amax());
        s_out.push(s_next);
        g_out.push(g_next);
        p_out.push(p_next);
    }
    Ok(OdeSolution {
        s: s_out,
        g: g_out,
        gs: p_out,
        branch,
        conserved_drift: drift,
    })
}

/// Projects an initial slope onto the set where `det G` stays constant and
/// the two trace identities of the constant-determinant branch hold at
/// `g`, by Gauss–Newton steps on
/// `r(V) = Tr(G⁻¹V G⁻¹V) / 2` after removing `Tr(G⁻¹V)`.
/// Returns the slope and the final value of `r`.
pub fn enforce_constant_det_identities(
    g: &DMatrix<f64>,
    v: &DMatrix<f64>,
    tolerance: f64,
) -> Result<(DMatrix<f64>, f64)> {
    let n = g.nrows() as f64;
    let gi = inverse(g, 0)?;
    let mut v = v - g * ((&gi * v).trace() / n);
    for _ in 0..200 {
        let m = &gi * &v;
        let r = 0.5 * (&m * &m).trace();
        if r <= tolerance {
            return Ok((v, r));
        }
        let grad = &m * &gi;
        let gg = grad.norm_squared();
        v -= grad * (r / gg.max(f64::MIN_POSITIVE));
        v = (&v + v.transpose()) * 0.5;
    }
    let m = &gi * &v;
    let r = 0.5 * (&m * &m).trace();
    if r <= tolerance {
        Ok((v, r))
    } else {
        Err(Error::NonConvergence {
            iterations: 200,
            residual: r,
        })
    }
}

/// Branch of a sampled trajectory, read off from `det G`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DetBranch {
    Constant,
    Quadratic,
    Inconclusive,
}

/// Relative spread allowed when classifying `det G` as constant or `∝ s²`.
pub const BRANCH_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct OdeStructureReport {
    pub branch: DetBranch,
    /// `Tr(G⁻¹G_ss) − Tr(G⁻¹G_s G⁻¹G_s)`, sup over the valid nodes.
    pub trace_identity_second: f64,
    /// `Tr(G⁻¹G_ss) − ½ Tr(G⁻¹G_s G⁻¹G_s)`, sup over the valid nodes.
    pub trace_identity_half: f64,
    /// Sup of the matrix equation of the detected branch.
    pub branch_equation: f64,
    pub max_slope: f64,
    /// Mean of `s G⁻¹ G_s` (quadratic branch only).
    pub recovered_a: Option<Vec<f64>>,
    pub trace_a: Option<f64>,
    pub trace_a2: Option<f64>,
    /// Largest deviation of `s G⁻¹ G_s` from its mean.
    pub recovered_a_spread: Option<f64>,
}

/// Evaluates the trace identities and the branch structure on a sampled
/// trajectory `G(s)` (1-d chart, slots `[Fiber, Fiber]`).
pub fn verify_ode_structure(g: &TensorField, cfg: &FdConfig) -> Result<OdeStructureReport> {
    let chart = g.chart();
    if chart.dim() != 1 || g.slots() != [Slot::Fiber, Slot::Fiber] {
        return Err(Error::Shape("expected a fiber metric on a 1-d chart".into()));
    }
    if chart.lo()[0] <= 0.0 {
        return Err(Error::InvalidChart("s range must stay in (0, inf)".into()));
    }
    let n = g.fiber_dim();
    let gs = partial(g, 0, cfg)?;
    let gss = partial(&gs, 0, cfg)?;
    let mat = |f: &TensorField, k: usize| DMatrix::from_row_slice(n, n, f.at(k));

    let dets: Vec<(f64, f64)> = chart
        .interior_nodes(g.margin())
        .into_iter()
        .map(|k| (chart.coords(k)[0], linalg::determinant(g.at(k), n)))
        .collect();
    let spread = |vals: Vec<f64>| {
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        vals.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max) / mean.abs()
    };
    let branch = if spread(dets.iter().map(|d| d.1).collect()) <= BRANCH_TOL {
        DetBranch::Constant
    } else if spread(dets.iter().map(|(s, d)| d / (s * s)).collect()) <= BRANCH_TOL {
        DetBranch::Quadratic
    } else {
        DetBranch::Inconclusive
    };

    let nodes = chart.interior_nodes(gss.margin());
    let mut second: f64 = 0.0;
    let mut half: f64 = 0.0;
    let mut eq: f64 = 0.0;
    let mut max_slope: f64 = 0.0;
    let mut a_values = Vec::new();
    for &k in &nodes {
        let s = chart.coords(k)[0];
        let gm = mat(g, k);
        let gi = inverse(&gm, k)?;
        let p = mat(&gs, k);
        let pp = mat(&gss, k);
        let m = &gi * &p;
        let t_ss = (&gi * &pp).trace();
        let t_sq = (&m * &m).trace();
        second = second.max((t_ss - t_sq).abs());
        half = half.max((t_ss - 0.5 * t_sq).abs());
        max_slope = max_slope.max(p.amax());
        let q = &p * &gi * &p;
        let residual = match branch {
            DetBranch::Quadratic => &pp + &p / s - q,
            _ => &pp - q,
        };
        eq = eq.max(residual.amax());
        a_values.push(m * s);
    }
    let (recovered_a, trace_a, trace_a2, recovered_a_spread) = if branch == DetBranch::Quadratic {
        let mean = a_values.iter().fold(DMatrix::zeros(n, n), |acc, a| acc + a) / a_values.len() as f64;
        let spread = a_values.iter().map(|a| (a - &mean).amax()).fold(0.0, f64::max);
        (
            Some(row_major(&mean)),
            Some(mean.trace()),
            Some((&mean * &mean).trace()),
            Some(spread),
        )
    } else {
        (None, None, None, None)
    };
    Ok(OdeStructureReport {
        branch,
        trace_identity_second: second,
        trace_identity_half: half,
        branch_equation: eq,
        max_slope,
        recovered_a,
        trace_a,
        trace_a2,
        recovered_a_spread,
    })
}
