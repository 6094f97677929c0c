//! Explicit solution families and seeded random bundle metrics.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bundle::BundleMetric;
use crate::error::{Error, Result};
use crate::geometry::BaseMetric;
use crate::grid::{sample_tensor, Chart, FdConfig, Slot, TensorField};
use crate::linalg;
use crate::solver::{solve_semiflat_conformal, EllipticOptions};
use crate::tau::{holomorphy_residual, ComplexChartData, TauSpec, HOLOMORPHY_TOL};

/// Fraction of each axis excluded at both ends when measuring residuals of
/// a solved conformal factor.
pub const SOLVED_INSET: f64 = 0.25;

/// Tolerance on `|Tr A − 2|` and `|Tr A² − 4|` for Kasner matrices.
pub const KASNER_TRACE_TOL: f64 = 1e-12;

/// Serializable description of a family and its parameters. The chart is
/// supplied separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    FlatProduct {
        base_dim: usize,
        fiber_dim: usize,
    },
    /// Exactly one of `exponents` (`p`, giving `A = 2 diag(p)`) or `matrix`
    /// (row-major rows of `A`).
    Kasner {
        #[serde(default)]
        exponents: Option<Vec<f64>>,
        #[serde(default)]
        matrix: Option<Vec<Vec<f64>>>,
    },
    Semiflat {
        tau: TauSpec,
        #[serde(default)]
        conformal: Conformal,
    },
    BoundaryModel,
    Random {
        seed: u64,
        base_dim: usize,
        fiber_dim: usize,
        #[serde(default)]
        params: RandomParams,
    },
}

/// Conformal exponent `φ` of the semiflat base metric `e^{2φ}|dz|²`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Conformal {
    #[default]
    Zero,
    Solve {
        #[serde(default = "default_solver_tolerance")]
        tolerance: f64,
        #[serde(default = "default_max_iterations")]
        max_iterations: usize,
    },
}

fn default_solver_tolerance() -> f64 {
    EllipticOptions::default().tolerance
}

fn default_max_iterations() -> usize {
    EllipticOptions::default().max_iterations
}

impl FamilySpec {
    pub fn build(&self, chart: &Chart, cfg: &FdConfig) -> Result<BundleMetric> {
        match self {
            Self::FlatProduct { base_dim, fiber_dim } => {
                if chart.dim() != *base_dim {
                    return Err(Error::Shape(format!(
                        "flat_product with base_dim {base_dim} on a {}-dimensional chart",
                        chart.dim()
                    )));
                }
                flat_product(*fiber_dim, chart)
            }
            Self::Kasner { exponents, matrix } => match (exponents, matrix) {
                (Some(p), None) => kasner_exponents(p, chart),
                (None, Some(rows)) => kasner(&matrix_from_rows(rows)?, chart),
                _ => Err(Error::InvalidParameter(
                    "kasner needs exactly one of `exponents` or `matrix`".into(),
                )),
            },
            Self::Semiflat { tau, conformal } => {
                let data = ComplexChartData::from_spec(tau, chart)?;
                let phi = match conformal {
                    Conformal::Zero => crate::grid::sample(chart, |_| 0.0)?,
                    Conformal::Solve {
                        tolerance,
                        max_iterations,
                    } => {
                        let opts = EllipticOptions {
                            tolerance: *tolerance,
                            max_iterations: *max_iterations,
                            ..EllipticOptions::default()
                        };
                        solve_semiflat_conformal(&data, &opts, cfg)?.phi
                    }
                };
                semiflat(&data, &phi, HOLOMORPHY_TOL, cfg)
            }
            Self::BoundaryModel => boundary_model(chart),
            Self::Random {
                seed,
                base_dim,
                fiber_dim,
                params,
            } => {
                if chart.dim() != *base_dim {
                    return Err(Error::Shape(format!(
                        "random with base_dim {base_dim} on a {}-dimensional chart",
                        chart.dim()
                    )));
                }
                random_bundle(*seed, *fiber_dim, chart, params)
            }
        }
    }

    /// Region on which residuals of this family are measured, when it is
    /// smaller than the valid interior. A solved conformal factor with zero
    /// boundary data has a corner singularity (the data cannot match the
    /// source at the corners), so those residuals use the central half.
    pub fn default_region(&self, chart: &Chart) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            Self::Semiflat {
                conformal: Conformal::Solve { .. },
                ..
            } => Some(crate::grid::inset_box(chart, SOLVED_INSET)),
            _ => None,
        }
    }

    /// Whether the family is a Ricci-flat solution, so that the
    /// Einstein-conditional identities apply.
    pub fn is_einstein(&self) -> bool {
        !matches!(self, Self::Random { .. })
    }
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Shape("matrix must be square and non-empty".into()));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn identity_fiber(chart: &Chart, big_n: usize) -> Result<TensorField> {
    sample_tensor(chart, big_n, vec![Slot::Fiber, Slot::Fiber], |_, buf| {
        for i in 0..big_n {
            buf[i * big_n + i] = 1.0;
        }
    })
}

fn euclidean_base(chart: &Chart) -> Result<BaseMetric> {
    let n = chart.dim();
    BaseMetric::new(sample_tensor(chart, 0, vec![Slot::Base, Slot::Base], |_, buf| {
        for a in 0..n {
            buf[a * n + a] = 1.0;
        }
    })?)
}

fn zero_connection(chart: &Chart, big_n: usize) -> TensorField {
    TensorField::zeros(chart, big_n, vec![Slot::Fiber, Slot::Base], 0)
}

/// `G = Id`, `A = 0`, `g = δ`.
pub fn flat_product(fiber_dim: usize, chart: &Chart) -> Result<BundleMetric> {
    BundleMetric::new(
        identity_fiber(chart, fiber_dim)?,
        zero_connection(chart, fiber_dim),
        euclidean_base(chart)?,
    )
}

fn check_s_chart(chart: &Chart) -> Result<()> {
    if chart.dim() != 1 {
        return Err(Error::Shape(format!(
            "kasner lives on a 1-dimensional chart, got {}",
            chart.dim()
        )));
    }
    if chart.lo()[0] <= 0.0 {
        return Err(Error::InvalidChart(format!(
            "s range must stay in (0, inf), got lower end {}",
            chart.lo()[0]
        )));
    }
    Ok(())
}

fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    if !a.is_square() {
        return Err(Error::Shape("matrix must be square".into()));
    }
    for i in 0..a.nrows() {
        for j in 0..i {
            if a[(i, j)] != a[(j, i)] {
                return Err(Error::InvalidParameter(format!(
                    "matrix not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// `G(s) = s^A`, `A = 0`, `g = ds²`, after checking `Tr A = 2` and
/// `Tr A² = 4`.
pub fn kasner(a: &DMatrix<f64>, chart: &Chart) -> Result<BundleMetric> {
    check_symmetric(a)?;
    let tr = a.trace();
    let tr2 = (a * a).trace();
    if (tr - 2.0).abs() > KASNER_TRACE_TOL || (tr2 - 4.0).abs() > KASNER_TRACE_TOL {
        return Err(Error::InvalidParameter(format!(
            "Kasner matrix needs Tr A = 2 and Tr A^2 = 4, got {tr} and {tr2}"
        )));
    }
    power_law(a, chart)
}

/// Kasner metric from exponents `p`, with `A = 2 diag(p)`.
pub fn kasner_exponents(p: &[f64], chart: &Chart) -> Result<BundleMetric> {
    if p.is_empty() {
        return Err(Error::InvalidParameter("empty exponent list".into()));
    }
    kasner(&DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        p.len(),
        p.iter().map(|x| 2.0 * x),
    )), chart)
}

/// `G(s) = s^A` for any symmetric `A`, without the trace conditions.
pub fn power_law(a: &DMatrix<f64>, chart: &Chart) -> Result<BundleMetric> {
    check_symmetric(a)?;
    check_s_chart(chart)?;
    let big_n = a.nrows();
    let diagonal = (0..big_n).all(|i| (0..big_n).all(|j| i == j || a[(i, j)] == 0.0));
    let eig = SymmetricEigen::new(a.clone());
    let fiber = sample_tensor(chart, big_n, vec![Slot::Fiber, Slot::Fiber], |b, buf| {
        let s = b[0];
        if diagonal {
            for i in 0..big_n {
                buf[i * big_n + i] = s.powf(a[(i, i)]);
            }
            return;
        }
        let q = &eig.eigenvectors;
        for i in 0..big_n {
            for j in i..big_n {
                let v: f64 = (0..big_n)
                    .map(|k| q[(i, k)] * s.powf(eig.eigenvalues[k]) * q[(j, k)])
                    .sum();
                buf[i * big_n + j] = v;
                buf[j * big_n + i] = v;
            }
        }
    })?;
    BundleMetric::new(fiber, zero_connection(chart, big_n), euclidean_base(chart)?)
}

/// `G = (1/Im τ) [[1, Re τ], [Re τ, |τ|²]]` without any holomorphy check.
pub fn semiflat_fiber_metric(tau: &ComplexChartData) -> Result<TensorField> {
    let chart = tau.chart();
    TensorField::from_nodes(chart, 2, vec![Slot::Fiber, Slot::Fiber], 0, |k, buf| {
        let t = tau.value(k);
        let inv = 1.0 / t.im;
        buf[0] = inv;
        buf[1] = t.re * inv;
        buf[2] = t.re * inv;
        buf[3] = t.norm_sqr() * inv;
    })
}

/// Conformal base metric `e^{2φ}((db¹)² + (db²)²)`.
pub fn conformal_base(phi: &TensorField) -> Result<BaseMetric> {
    if !phi.slots().is_empty() || phi.chart().dim() != 2 {
        return Err(Error::Shape("conformal exponent must be a scalar on a 2-d chart".into()));
    }
    let e = TensorField::from_nodes(phi.chart(), 0, vec![Slot::Base, Slot::Base], phi.margin(), |k, buf| {
        let w = (2.0 * phi.at(k)[0]).exp();
        buf[0] = w;
        buf[3] = w;
    })?;
    BaseMetric::new(e)
}

/// Semiflat metric: `G` from `τ`, `A = 0`, `g = e^{2φ}|dz|²`. `τ` must pass
/// the sampled Cauchy–Riemann test at `holomorphy_tol`.
pub fn semiflat(
    tau: &ComplexChartData,
    phi: &TensorField,
    holomorphy_tol: f64,
    cfg: &FdConfig,
) -> Result<BundleMetric> {
    if phi.chart() != tau.chart() {
        return Err(Error::Shape("tau and phi must share one chart".into()));
    }
    let defect = crate::grid::field_norms(&holomorphy_residual(tau, cfg)?)?.sup;
    if !(defect <= holomorphy_tol) {
        return Err(Error::NotHolomorphic {
            residual: defect,
            tolerance: holomorphy_tol,
        });
    }
    BundleMetric::new(
        semiflat_fiber_metric(tau)?,
        zero_connection(tau.chart(), 2),
        conformal_base(phi)?,
    )
}

/// Flat model near a collapsing circle: `G = diag(1, (b²)²)`, `A = 0`,
/// `g = δ`, on a chart with `b² > 0`.
pub fn boundary_model(chart: &Chart) -> Result<BundleMetric> {
    if chart.dim() != 2 {
        return Err(Error::Shape(format!(
            "boundary model lives on a 2-dimensional chart, got {}",
            chart.dim()
        )));
    }
    if chart.lo()[1] <= 0.0 {
        return Err(Error::InvalidChart(format!(
            "b2 range must stay positive, got lower end {}",
            chart.lo()[1]
        )));
    }
    let fiber = sample_tensor(chart, 2, vec![Slot::Fiber, Slot::Fiber], |b, buf| {
        buf[0] = 1.0;
        buf[3] = b[1] * b[1];
    })?;
    BundleMetric::new(fiber, zero_connection(chart, 2), euclidean_base(chart)?)
}

/// Amplitudes and bandwidth of the random Fourier fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomParams {
    pub fiber_amplitude: f64,
    pub connection_amplitude: f64,
    pub base_amplitude: f64,
    pub max_wavenumber: u32,
}

impl Default for RandomParams {
    fn default() -> Self {
        Self {
            fiber_amplitude: 0.3,
            connection_amplitude: 0.3,
            base_amplitude: 0.1,
            max_wavenumber: 2,
        }
    }
}

impl RandomParams {
    pub fn zero() -> Self {
        Self {
            fiber_amplitude: 0.0,
            connection_amplitude: 0.0,
            base_amplitude: 0.0,
            ..Self::default()
        }
    }
}

/// Truncated cosine series in coordinates normalized to `[0, 1]` per axis,
/// with coefficients normalized to unit `ℓ²` norm.
#[derive(Debug, Clone)]
pub struct FourierField {
    lo: Vec<f64>,
    width: Vec<f64>,
    terms: Vec<(Vec<f64>, f64, f64)>,
}

impl FourierField {
    pub fn draw(rng: &mut impl Rng, chart: &Chart, max_wavenumber: u32) -> Self {
        let n = chart.dim();
        let per_axis = max_wavenumber as usize + 1;
        let count = per_axis.pow(n as u32);
        let mut terms = Vec::with_capacity(count);
        let mut index = vec![0; n];
        for flat in 0..count {
            crate::grid::unflatten(flat, &vec![per_axis; n], &mut index);
            let norm: f64 = index.iter().map(|&k| (k * k) as f64).sum::<f64>().sqrt();
            let z: f64 = StandardNormal.sample(rng);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let wave = index
                .iter()
                .map(|&k| std::f64::consts::PI * k as f64)
                .collect();
            terms.push((wave, z / (1.0 + norm).powi(4), phase));
        }
        let scale = terms.iter().map(|t| t.1 * t.1).sum::<f64>().sqrt();
        if scale > 0.0 {
            for t in &mut terms {
                t.1 /= scale;
            }
        }
        Self {
            lo: chart.lo().to_vec(),
            width: chart.ranges().iter().map(|(a, b)| b - a).collect(),
            terms,
        }
    }

    pub fn eval(&self, b: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(wave, c, phase)| {
                let arg: f64 = wave
                    .iter()
                    .zip(b.iter().zip(&self.lo).zip(&self.width))
                    .map(|(k, ((x, lo), w))| k * (x - lo) / w)
                    .sum();
                c * (arg + phase).cos()
            })
            .sum()
    }
}

/// Seeded random bundle metric: `G = exp(S)`, `A` and `g − δ` random
/// Fourier fields. A base perturbation that loses positive definiteness is
/// reported as an error.
pub fn random_bundle(
    seed: u64,
    fiber_dim: usize,
    chart: &Chart,
    params: &RandomParams,
) -> Result<BundleMetric> {
    for (name, v) in [
        ("fiber_amplitude", params.fiber_amplitude),
        ("connection_amplitude", params.connection_amplitude),
        ("base_amplitude", params.base_amplitude),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::InvalidParameter(format!("{name} must be finite and >= 0")));
        }
    }
    let n = chart.dim();
    let big_n = fiber_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = params.max_wavenumber;
    let mut draw = |count: usize| -> Vec<FourierField> {
        (0..count).map(|_| FourierField::draw(&mut rng, chart, k)).collect()
    };
    let s_fields = draw(big_n * (big_n + 1) / 2);
    let a_fields = draw(big_n * n);
    let g_fields = draw(n * (n + 1) / 2);

    let fiber = if params.fiber_amplitude == 0.0 {
        identity_fiber(chart, big_n)?
    } else {
        sample_tensor(chart, big_n, vec![Slot::Fiber, Slot::Fiber], |b, buf| {
            let mut s = vec![0.0; big_n * big_n];
            let mut idx = 0;
            for i in 0..big_n {
                for j in i..big_n {
                    let v = params.fiber_amplitude * s_fields[idx].eval(b);
                    s[i * big_n + j] = v;
                    s[j * big_n + i] = v;
                    idx += 1;
                }
            }
            buf.copy_from_slice(&linalg::symmetric_function(&s, big_n, f64::exp));
        })?
    };
    let connection = sample_tensor(chart, big_n, vec![Slot::Fiber, Slot::Base], |b, buf| {
        for (slot, field) in buf.iter_mut().zip(&a_fields) {
            *slot = params.connection_amplitude * field.eval(b);
        }
    })?;
    let base = sample_tensor(chart, 0, vec![Slot::Base, Slot::Base], |b, buf| {
        let mut idx = 0;
        for p in 0..n {
            for q in p..n {
                let v = params.base_amplitude * g_fields[idx].eval(b);
                buf[p * n + q] += v;
                if p != q {
                    buf[q * n + p] += v;
                } else {
                    buf[p * n + p] += 1.0;
                }
                idx += 1;
            }
        }
    })?;
    BundleMetric::new(fiber, connection, BaseMetric::new(base)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::einstein_residual;

    fn chart2(points: usize) -> Chart {
        Chart::new(&[(0.0, 1.0), (0.0, 1.0)], &[points, points]).unwrap()
    }

    #[test]
    fn random_is_reproducible() {
        let c = chart2(9);
        let p = RandomParams::default();
        let a = random_bundle(3, 2, &c, &p).unwrap();
        let b = random_bundle(3, 2, &c, &p).unwrap();
        assert_eq!(a.fiber_metric(), b.fiber_metric());
        assert_eq!(a.connection(), b.connection());
        assert_eq!(a.base().field(), b.base().field());
        let other = random_bundle(4, 2, &c, &p).unwrap();
        assert_ne!(a.fiber_metric(), other.fiber_metric());
    }

    #[test]
    fn zero_amplitude_is_flat_product() {
        let c = chart2(9);
        let r = random_bundle(11, 2, &c, &RandomParams::zero()).unwrap();
        let f = flat_product(2, &c).unwrap();
        assert_eq!(r.fiber_metric(), f.fiber_metric());
        assert_eq!(r.connection().values(), f.connection().values());
        assert_eq!(r.base().field().values(), f.base().field().values());
    }

    #[test]
    fn oversized_base_perturbation_errors() {
        let c = chart2(9);
        let p = RandomParams {
            base_amplitude: 5.0,
            ..RandomParams::default()
        };
        let failures = (0..8)
            .filter(|&s| matches!(random_bundle(s, 1, &c, &p), Err(Error::NotPositiveDefinite { .. })))
            .count();
        assert!(failures > 0);
    }

    #[test]
    fn kasner_validation() {
        let c = Chart::new(&[(1.0, 2.0)], &[9]).unwrap();
        assert!(kasner_exponents(&[1.0, 0.0, 0.0], &c).is_ok());
        assert!(kasner_exponents(&[2.0 / 3.0, 2.0 / 3.0, -1.0 / 3.0], &c).is_ok());
        assert!(matches!(
            kasner_exponents(&[1.0, 1.0, 0.0], &c),
            Err(Error::InvalidParameter(_))
        ));
        let touching = Chart::new(&[(0.0, 2.0)], &[9]).unwrap();
        assert!(matches!(
            kasner_exponents(&[1.0, 0.0, 0.0], &touching),
            Err(Error::InvalidChart(_))
        ));
    }

    #[test]
    fn kasner_determinant_is_s_squared() {
        let c = Chart::new(&[(1.0, 2.0)], &[17]).unwrap();
        let r = nalgebra::Rotation3::from_euler_angles(0.3, -0.7, 1.1);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0 / 3.0, 4.0 / 3.0, -2.0 / 3.0]));
        let rm = DMatrix::from_iterator(3, 3, r.matrix().iter().copied());
        let mut a = &rm * d * rm.transpose();
        a = (&a + a.transpose()) * 0.5;
        let bm = kasner(&a, &c).unwrap();
        let det = bm.det_fiber().unwrap();
        for k in 0..c.node_count() {
            let s = c.coords(k)[0];
            assert!((det.at(k)[0] - s * s).abs() < 1e-10);
        }
    }

    #[test]
    fn kasner_diagonal_exact() {
        let c = Chart::new(&[(1.0, 2.0)], &[9]).unwrap();
        let bm = kasner_exponents(&[1.0, 0.0, 0.0], &c).unwrap();
        for k in 0..c.node_count() {
            let s = c.coords(k)[0];
            assert_eq!(bm.fiber_metric().at(k), &[s * s, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn semiflat_unit_determinant() {
        let c = Chart::new(&[(-1.0, 1.0), (1.0, 2.0)], &[17, 17]).unwrap();
        let tau = ComplexChartData::from_spec(&TauSpec::Exp, &c).unwrap();
        let g = semiflat_fiber_metric(&tau).unwrap();
        for k in 0..c.node_count() {
            assert!((linalg::determinant(g.at(k), 2) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn semiflat_rejects_non_holomorphic() {
        let c = Chart::new(&[(-1.0, 1.0), (1.0, 2.0)], &[17, 17]).unwrap();
        let tau = ComplexChartData::from_spec(&TauSpec::Deformed { epsilon: 0.1 }, &c).unwrap();
        let phi = crate::grid::sample(&c, |_| 0.0).unwrap();
        assert!(matches!(
            semiflat(&tau, &phi, HOLOMORPHY_TOL, &FdConfig::fourth()),
            Err(Error::NotHolomorphic { .. })
        ));
    }

    #[test]
    fn constant_tau_is_flat() {
        let c = Chart::new(&[(-1.0, 1.0), (1.0, 2.0)], &[9, 9]).unwrap();
        let spec = FamilySpec::Semiflat {
            tau: TauSpec::Constant { re: 0.0, im: 1.0 },
            conformal: Conformal::Zero,
        };
        let bm = spec.build(&c, &FdConfig::fourth()).unwrap();
        let f = flat_product(2, &c).unwrap();
        assert_eq!(bm.fiber_metric(), f.fiber_metric());
        let r = einstein_residual(&bm, 0.0, &FdConfig::fourth()).unwrap();
        assert!(r.max_sup() < 1e-12);
    }

    #[test]
    fn boundary_model_profile() {
        let c = Chart::new(&[(0.0, 1.0), (0.1, 1.0)], &[9, 9]).unwrap();
        let bm = boundary_model(&c).unwrap();
        let det = bm.det_fiber().unwrap();
        for k in 0..c.node_count() {
            let b2 = c.coords(k)[1];
            assert!((det.at(k)[0] - b2 * b2).abs() < 1e-12);
        }
        let bad = Chart::new(&[(0.0, 1.0), (0.0, 1.0)], &[9, 9]).unwrap();
        assert!(boundary_model(&bad).is_err());
    }

    #[test]
    fn family_spec_json() {
        let spec: FamilySpec =
            serde_json::from_str(r#"{"name":"kasner","exponents":[1.0,0.0,0.0]}"#).unwrap();
        assert!(matches!(spec, FamilySpec::Kasner { .. }));
        let both: FamilySpec = serde_json::from_str(
            r#"{"name":"kasner","exponents":[1.0,0.0,0.0],"matrix":[[2.0]]}"#,
        )
        .unwrap();
        let c = Chart::new(&[(1.0, 2.0)], &[9]).unwrap();
        assert!(both.build(&c, &FdConfig::fourth()).is_err());
    }
}
