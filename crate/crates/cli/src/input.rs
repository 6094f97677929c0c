//! JSON run documents and tabulated fields.

use std::path::Path;

use serde::{Deserialize, Serialize};

use fibercurv::bundle::BundleMetric;
use fibercurv::families::FamilySpec;
use fibercurv::geometry::BaseMetric;
use fibercurv::grid::{Chart, Slot, TensorField};
use fibercurv::solver::OdeBranch;

use crate::CliError;

/// One run document. Exactly one of `family`, `tabulated` and `ode` is
/// given; `chart` is required with the first two.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunInput {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tabulated: Option<TabulatedBundle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ode: Option<OdeInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chart: Option<ChartSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fd_order: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<RegionSpec>,
    /// Declares the metric Ricci-flat (or Einstein), enabling the
    /// conditional identities. Defaults to the family's own status, and to
    /// `false` for tabulated data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub einstein: Option<bool>,
}

impl RunInput {
    pub fn from_str(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let input: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Invalid(format!("at `{path}`: {}", e.into_inner()))
        })?;
        let sources = [input.family.is_some(), input.tabulated.is_some(), input.ode.is_some()];
        match sources.iter().filter(|s| **s).count() {
            1 => {}
            0 => return Err(CliError::Invalid("input needs one of `family`, `tabulated` or `ode`".into())),
            _ => {
                return Err(CliError::Invalid(
                    "`family`, `tabulated` and `ode` are mutually exclusive".into(),
                ))
            }
        }
        if input.ode.is_none() && input.chart.is_none() {
            return Err(CliError::Invalid("missing key `chart`".into()));
        }
        Ok(input)
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::from_str(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartSpec {
    pub ranges: Vec<[f64; 2]>,
    pub points: Vec<usize>,
}

impl ChartSpec {
    pub fn to_chart(&self) -> Result<Chart, CliError> {
        let ranges: Vec<(f64, f64)> = self.ranges.iter().map(|r| (r[0], r[1])).collect();
        Ok(Chart::new(&ranges, &self.points)?)
    }

    pub fn from_chart(chart: &Chart) -> Self {
        Self {
            ranges: chart.ranges().iter().map(|&(a, b)| [a, b]).collect(),
            points: chart.points().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Row-major array: grid axes first, then component axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabulatedArray {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl TabulatedArray {
    pub fn from_field(field: &TensorField) -> Self {
        let mut shape = field.chart().points().to_vec();
        shape.extend(field.slot_ranges());
        Self {
            shape,
            data: field.values().to_vec(),
        }
    }

    /// Checks the shape against the chart and component ranges, then wraps
    /// the data unchanged.
    pub fn to_field(&self, name: &str, chart: &Chart, fiber_dim: usize, slots: Vec<Slot>) -> Result<TensorField, CliError> {
        let mut expected = chart.points().to_vec();
        expected.extend(slots.iter().map(|s| match s {
            Slot::Base => chart.dim(),
            Slot::Fiber => fiber_dim,
            Slot::Total => fiber_dim + chart.dim(),
        }));
        if self.shape != expected {
            return Err(CliError::Invalid(format!(
                "tabulated.{name}: shape {:?}, expected {expected:?}",
                self.shape
            )));
        }
        TensorField::new(chart.clone(), fiber_dim, slots, self.data.clone(), 0)
            .map_err(|e| CliError::Invalid(format!("tabulated.{name}: {e}")))
    }
}

/// Sampled bundle metric: `G_{IJ}`, `A^I_α` and `g_{αβ}` on the run chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabulatedBundle {
    pub fiber_metric: TabulatedArray,
    pub connection: TabulatedArray,
    pub base_metric: TabulatedArray,
}

impl TabulatedBundle {
    pub fn from_metric(bm: &BundleMetric) -> Self {
        Self {
            fiber_metric: TabulatedArray::from_field(bm.fiber_metric()),
            connection: TabulatedArray::from_field(bm.connection()),
            base_metric: TabulatedArray::from_field(bm.base().field()),
        }
    }

    pub fn to_metric(&self, chart: &Chart) -> Result<BundleMetric, CliError> {
        let n = chart.dim();
        let fiber_dim = match self.fiber_metric.shape.get(n) {
            Some(&d) if d > 0 => d,
            _ => {
                return Err(CliError::Invalid(format!(
                    "tabulated.fiber_metric: shape {:?} has no fiber axes",
                    self.fiber_metric.shape
                )))
            }
        };
        let g = self.fiber_metric.to_field("fiber_metric", chart, fiber_dim, vec![Slot::Fiber, Slot::Fiber])?;
        let a = self.connection.to_field("connection", chart, fiber_dim, vec![Slot::Fiber, Slot::Base])?;
        let b = self.base_metric.to_field("base_metric", chart, fiber_dim, vec![Slot::Base, Slot::Base])?;
        Ok(BundleMetric::new(g, a, BaseMetric::new(b)?)?)
    }
}

/// Initial value problem for the base ODE. Matrices are given as rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdeInput {
    pub s0: f64,
    pub s1: f64,
    pub g0: Vec<Vec<f64>>,
    pub gs0: Vec<Vec<f64>>,
    pub step: f64,
    pub branch: OdeBranch,
    /// Project `gs0` onto the trace identities before integrating
    /// (constant-det branch).
    #[serde(default)]
    pub enforce: bool,
}
