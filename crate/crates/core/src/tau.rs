//! Complex-valued data `τ(z)`, `z = b¹ + i b²`, on a two-dimensional chart.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{partial, sample, Chart, FdConfig, TensorField};

/// Default bound on the sampled Cauchy–Riemann defect of `τ`.
pub const HOLOMORPHY_TOL: f64 = 1e-6;

/// Closed catalog of `τ` maps. The last two entries are deliberately not
/// holomorphic and exist as negative controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TauSpec {
    Constant { re: f64, im: f64 },
    /// `τ = z`
    Identity,
    /// `τ = exp(z)`
    Exp,
    /// `τ = Σ c_k z^k`, coefficients as `[re, im]` pairs, lowest degree first.
    Polynomial { coefficients: Vec<[f64; 2]> },
    /// `τ = z̄`
    Conjugate,
    /// `τ = z + ε (b¹)²`
    Deformed { epsilon: f64 },
}

impl TauSpec {
    /// Value and derivative along `b¹` at `z`.
    pub fn eval(&self, z: Complex64) -> (Complex64, Complex64) {
        match self {
            Self::Constant { re, im } => (Complex64::new(*re, *im), Complex64::new(0.0, 0.0)),
            Self::Identity => (z, Complex64::new(1.0, 0.0)),
            Self::Exp => (z.exp(), z.exp()),
            Self::Polynomial { coefficients } => {
                let mut value = Complex64::new(0.0, 0.0);
                let mut deriv = Complex64::new(0.0, 0.0);
                for c in coefficients.iter().rev() {
                    deriv = deriv * z + value;
                    value = value * z + Complex64::new(c[0], c[1]);
                }
                (value, deriv)
            }
            Self::Conjugate => (z.conj(), Complex64::new(1.0, 0.0)),
            Self::Deformed { epsilon } => (
                z + epsilon * z.re * z.re,
                Complex64::new(1.0 + 2.0 * epsilon * z.re, 0.0),
            ),
        }
    }
}

/// Sampled `τ` with its `b¹`-derivative (which is `τ'` when `τ` is
/// holomorphic).
#[derive(Debug, Clone)]
pub struct ComplexChartData {
    pub re: TensorField,
    pub im: TensorField,
    pub d_re: TensorField,
    pub d_im: TensorField,
}

impl ComplexChartData {
    /// Samples a catalog entry; the derivative is exact, margin 0.
    pub fn from_spec(spec: &TauSpec, chart: &Chart) -> Result<Self> {
        check_plane(chart)?;
        let at = |b: &[f64]| spec.eval(Complex64::new(b[0], b[1]));
        let data = Self {
            re: sample(chart, |b| at(b).0.re)?,
            im: sample(chart, |b| at(b).0.im)?,
            d_re: sample(chart, |b| at(b).1.re)?,
            d_im: sample(chart, |b| at(b).1.im)?,
        };
        data.check_upper_half_plane()?;
        Ok(data)
    }

    /// Wraps tabulated real and imaginary parts; the derivative comes from
    /// central differences and carries their margin.
    pub fn from_tabulated(re: TensorField, im: TensorField, cfg: &FdConfig) -> Result<Self> {
        check_plane(re.chart())?;
        if re.chart() != im.chart() || !re.slots().is_empty() || !im.slots().is_empty() {
            return Err(Error::Shape("Re and Im of tau must be scalars on one chart".into()));
        }
        let d_re = partial(&re, 0, cfg)?;
        let d_im = partial(&im, 0, cfg)?;
        let data = Self { re, im, d_re, d_im };
        data.check_upper_half_plane()?;
        Ok(data)
    }

    fn check_upper_half_plane(&self) -> Result<()> {
        let chart = self.im.chart();
        for node in chart.interior_nodes(self.im.margin()) {
            let im = self.im.at(node)[0];
            if im <= 0.0 {
                return Err(Error::OutsideUpperHalfPlane { node, im });
            }
        }
        Ok(())
    }

    pub fn chart(&self) -> &Chart {
        self.re.chart()
    }

    pub fn value(&self, node: usize) -> Complex64 {
        Complex64::new(self.re.at(node)[0], self.im.at(node)[0])
    }

    pub fn derivative(&self, node: usize) -> Complex64 {
        Complex64::new(self.d_re.at(node)[0], self.d_im.at(node)[0])
    }

    /// Margin on which the derivative is valid.
    pub fn derivative_margin(&self) -> usize {
        self.d_re.margin()
    }
}

fn check_plane(chart: &Chart) -> Result<()> {
    if chart.dim() != 2 {
        return Err(Error::Shape(format!(
            "tau lives on a 2-dimensional chart, got {}",
            chart.dim()
        )));
    }
    Ok(())
}

/// Pointwise Cauchy–Riemann defect
/// `|∂₁Re τ − ∂₂Im τ| + |∂₂Re τ + ∂₁Im τ|`.
pub fn holomorphy_residual(tau: &ComplexChartData, cfg: &FdConfig) -> Result<TensorField> {
    let r1 = partial(&tau.re, 0, cfg)?;
    let r2 = partial(&tau.re, 1, cfg)?;
    let i1 = partial(&tau.im, 0, cfg)?;
    let i2 = partial(&tau.im, 1, cfg)?;
    TensorField::from_interior(tau.chart(), 0, vec![], r1.margin(), |k, buf| {
        buf[0] = (r1.at(k)[0] - i2.at(k)[0]).abs() + (r2.at(k)[0] + i1.at(k)[0]).abs();
    })
}
