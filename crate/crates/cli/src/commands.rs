//! The five subcommands.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::Serialize;

use fibercurv::bundle::{residual_fields, BundleMetric, ResidualFields, ResidualReport};
use fibercurv::families::{Conformal, FamilySpec};
use fibercurv::grid::{refinement_difference_on_region, valid_box, Chart, FdConfig, TensorField};
use fibercurv::identities::{
    check_conformality, check_grad_sqrt_det_g, check_harmonic_map, check_laplacian_sqrt_det_g,
    check_ricci_form, check_subharmonicity, constant_det_regime, check_twist_constancy, order_estimate,
    richardson_factor, tolerance_from_estimate, IdentityCheck, IdentityReport, ROUNDING_FLOOR,
};
use fibercurv::solver::{
    enforce_constant_det_identities, integrate_base_ode, solve_semiflat_conformal,
    verify_ode_structure, DetBranch, EllipticOptions, OdeBranch, OdeProblem, OdeStructureReport,
};
use fibercurv::tau::ComplexChartData;

use crate::input::{ChartSpec, OdeInput, RegionSpec, RunInput, TabulatedArray, TabulatedBundle};
use crate::{CliError, CommandKind, RunOutput, RunSpec};

pub fn run(spec: &RunSpec) -> Result<RunOutput, CliError> {
    match spec.command {
        CommandKind::Check => check(spec),
        CommandKind::Family => family(spec),
        CommandKind::Solve => solve(spec),
        CommandKind::Convergence => convergence(spec),
        CommandKind::Identities => identities(spec),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    fn of(passed: bool) -> Self {
        if passed {
            Self::Pass
        } else {
            Self::Fail
        }
    }
}

/// Where the bundle metric of a run comes from.
enum Source {
    Family(FamilySpec, Chart),
    Tabulated(Box<BundleMetric>),
}

impl Source {
    fn new(input: &RunInput) -> Result<Self, CliError> {
        let chart = match &input.chart {
            Some(c) => c.to_chart()?,
            None => return Err(CliError::Invalid("this command needs `family` or `tabulated`".into())),
        };
        match (&input.family, &input.tabulated) {
            (Some(f), _) => Ok(Self::Family(f.clone(), chart)),
            (None, Some(t)) => Ok(Self::Tabulated(Box::new(t.to_metric(&chart)?))),
            (None, None) => Err(CliError::Invalid("this command needs `family` or `tabulated`".into())),
        }
    }

    fn chart(&self) -> &Chart {
        match self {
            Self::Family(_, c) => c,
            Self::Tabulated(bm) => bm.chart(),
        }
    }

    /// Metrics on the run chart and its successive refinements.
    fn levels(&self, count: u32, cfg: &FdConfig) -> Result<Vec<BundleMetric>, CliError> {
        match self {
            Self::Family(f, chart) => {
                let mut out = Vec::new();
                let mut c = chart.clone();
                for _ in 0..count {
                    out.push(f.build(&c, cfg)?);
                    c = c.refined();
                }
                Ok(out)
            }
            Self::Tabulated(bm) => Ok(vec![(**bm).clone()]),
        }
    }

    fn family(&self) -> Option<&FamilySpec> {
        match self {
            Self::Family(f, _) => Some(f),
            Self::Tabulated(_) => None,
        }
    }

    fn region(&self, input: &RunInput) -> Option<(Vec<f64>, Vec<f64>)> {
        if let Some(r) = &input.region {
            return Some((r.lo.clone(), r.hi.clone()));
        }
        self.family().and_then(|f| f.default_region(self.chart()))
    }

    fn is_einstein(&self, input: &RunInput) -> bool {
        input
            .einstein
            .unwrap_or_else(|| self.family().is_some_and(FamilySpec::is_einstein))
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Invalid(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn validate_region(region: &Option<(Vec<f64>, Vec<f64>)>, chart: &Chart) -> Result<(), CliError> {
    if let Some((lo, hi)) = region {
        let n = chart.dim();
        if lo.len() != n || hi.len() != n || lo.iter().zip(hi).any(|(a, b)| !(a <= b)) {
            return Err(CliError::Invalid(format!("region needs {n} ordered bounds per side")));
        }
    }
    Ok(())
}

fn blocks_of(f: &ResidualFields) -> [&TensorField; 4] {
    let b = &f.blocks;
    [&b.fiber, &b.mixed, &b.base, &b.scalar]
}

#[derive(Serialize)]
struct CheckOutput {
    command: &'static str,
    status: Verdict,
    fd_order: u32,
    lambda: f64,
    tolerance: f64,
    /// `explicit` or `richardson`.
    tolerance_source: &'static str,
    error_estimate: Option<f64>,
    region: RegionSpec,
    levels: Vec<ResidualReport>,
}

fn check(spec: &RunSpec) -> Result<RunOutput, CliError> {
    let source = Source::new(&spec.input)?;
    let region = source.region(&spec.input);
    validate_region(&region, source.chart())?;
    let metrics = source.levels(spec.levels, &spec.cfg)?;
    let fields = metrics
        .iter()
        .map(|bm| residual_fields(bm, spec.lambda, &spec.cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let (lo, hi) = region.unwrap_or_else(|| valid_box(&fields[0].blocks.fiber));
    let levels = fields
        .iter()
        .map(|f| f.report_on_region(&spec.cfg, &lo, &hi))
        .collect::<Result<Vec<_>, _>>()?;

    let error_estimate = if fields.len() >= 2 {
        let mut diff: f64 = 0.0;
        for (c, f) in blocks_of(&fields[0]).into_iter().zip(blocks_of(&fields[1])) {
            diff = diff.max(refinement_difference_on_region(c, f, &lo, &hi)?);
        }
        Some(richardson_factor(spec.cfg.order_int()) * diff)
    } else {
        None
    };
    let (tolerance, tolerance_source) = match (spec.tolerance, error_estimate) {
        (Some(t), _) => (t, "explicit"),
        (None, Some(e)) => (tolerance_from_estimate(e), "richardson"),
        (None, None) => unreachable!("resolved specs carry a tolerance or a second level"),
    };
    let passed = levels[0].max_sup() <= tolerance;
    let out = CheckOutput {
        command: "check",
        status: Verdict::of(passed),
        fd_order: spec.cfg.order_int(),
        lambda: spec.lambda,
        tolerance,
        tolerance_source,
        error_estimate,
        region: RegionSpec { lo, hi },
        levels,
    };
    Ok(RunOutput {
        body: to_json(&out)?,
        passed,
    })
}

fn family(spec: &RunSpec) -> Result<RunOutput, CliError> {
    let source = Source::new(&spec.input)?;
    let Some(fam) = source.family() else {
        return Err(CliError::Invalid("`family` command needs a `family` input".into()));
    };
    let bm = fam.build(source.chart(), &spec.cfg)?;
    let out = RunInput {
        tabulated: Some(TabulatedBundle::from_metric(&bm)),
        chart: Some(ChartSpec::from_chart(source.chart())),
        fd_order: Some(spec.cfg.order_int()),
        lambda: Some(spec.lambda),
        einstein: Some(fam.is_einstein()),
        region: source.region(&spec.input).map(|(lo, hi)| RegionSpec { lo, hi }),
        ..RunInput::default()
    };
    Ok(RunOutput {
        body: to_json(&out)?,
        passed: true,
    })
}

/// Observed order of one refinement pair: the smallest over blocks that
/// are above the rounding floor, `None` when every block is at the floor.
fn pair_order(coarse: &ResidualReport, fine: &ResidualReport) -> Option<f64> {
    coarse
        .block_sups()
        .into_iter()
        .zip(fine.block_sups())
        .filter(|(c, f)| *c > ROUNDING_FLOOR || *f > ROUNDING_FLOOR)
        .map(|(c, f)| order_estimate(c, f).unwrap_or(f64::NEG_INFINITY))
        .reduce(f64::min)
}

fn convergence(spec: &RunSpec) -> Result<RunOutput, CliError> {
    let source = Source::new(&spec.input)?;
    let region = source.region(&spec.input);
    validate_region(&region, source.chart())?;
    let metrics = source.levels(spec.levels, &spec.cfg)?;
    let reports = fibercurv::bundle::residual_study(&metrics, spec.lambda, &spec.cfg, region)?;

    let mut body = String::from("level,h,fiber_sup,mixed_sup,base_sup,scalar_sup,order_estimate\n");
    let mut last_order = None;
    for (i, r) in reports.iter().enumerate() {
        let h = r.spacing.iter().copied().fold(0.0, f64::max);
        let s = r.block_sups();
        let order = if i == 0 {
            String::new()
        } else {
            let o = pair_order(&reports[i - 1], r);
            last_order = Some(o);
            o.map_or("exact".to_string(), |v| format!("{v:.16e}"))
        };
        writeln!(
            body,
            "{},{h:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{order}",
            i + 1,
            s[0],
            s[1],
            s[2],
            s[3]
        )
        .expect("writing to a String");
    }
    let need = spec.cfg.order_int() as f64 - 0.5;
    let passed = match last_order {
        Some(None) => true,
        Some(Some(o)) => o >= need,
        None => false,
    };
    Ok(RunOutput { body, passed })
}

type CheckFn = fn(&BundleMetric, f64, &FdConfig) -> fibercurv::Result<IdentityCheck>;

#[derive(Serialize)]
struct DetProfile {
    b2: Vec<f64>,
    det_g: Vec<f64>,
    /// `max |det G − (b²)²|`.
    max_deviation: f64,
}

#[derive(Serialize)]
struct IdentitiesOutput {
    command: &'static str,
    status: Verdict,
    fd_order: u32,
    lambda: f64,
    einstein: bool,
    reports: Vec<IdentityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    det_g_profile: Option<DetProfile>,
}

struct Judge<'a> {
    spec: &'a RunSpec,
    region: Option<(Vec<f64>, Vec<f64>)>,
}

impl Judge<'_> {
    fn report(&self, name: &str, coarse: IdentityCheck, fine: Option<IdentityCheck>) -> Result<IdentityReport, CliError> {
        let (lo, hi) = self.region.clone().unwrap_or_else(|| valid_box(&coarse.lhs));
        let cfg = &self.spec.cfg;
        Ok(match (self.spec.tolerance, fine) {
            (Some(t), _) => coarse.report_on_region(name, t, &lo, &hi)?,
            (None, Some(f)) => coarse.compare_on_region(&f, name, cfg, &lo, &hi)?,
            (None, None) => unreachable!("resolved specs carry a tolerance or a second level"),
        })
    }

    fn run(&self, name: &str, metrics: &[BundleMetric], check: CheckFn) -> Result<IdentityReport, CliError> {
        let cfg = &self.spec.cfg;
        let coarse = check(&metrics[0], self.spec.lambda, cfg)?;
        let fine = metrics.get(1).map(|bm| check(bm, self.spec.lambda, cfg)).transpose()?;
        self.report(name, coarse, fine)
    }
}

fn identities(spec: &RunSpec) -> Result<RunOutput, CliError> {
    let source = Source::new(&spec.input)?;
    let region = source.region(&spec.input);
    validate_region(&region, source.chart())?;
    let metrics = source.levels(spec.levels.min(2), &spec.cfg)?;
    let einstein = source.is_einstein(&spec.input);
    let judge = Judge { spec, region };
    let planar = metrics[0].base_dim() == 2;
    let regime = constant_det_regime(&metrics[0], &spec.cfg)?;

    let mut reports = vec![
        judge.run("grad_sqrt_det_g", &metrics, |bm, _, c| check_grad_sqrt_det_g(bm, c))?,
        judge.run("laplacian_sqrt_det_g", &metrics, |bm, _, c| check_laplacian_sqrt_det_g(bm, c))?,
    ];
    let conditional: [(&str, CheckFn, bool); 4] = [
        ("subharmonicity", check_subharmonicity, true),
        ("harmonic_map", |bm, _, c| check_harmonic_map(bm, c), regime),
        ("twist_constancy", |bm, _, c| check_twist_constancy(bm, c), planar),
        ("conformality", |bm, _, c| check_conformality(bm, c), planar && regime),
    ];
    for (name, f, applies) in conditional {
        reports.push(if einstein && applies {
            judge.run(name, &metrics, f)?
        } else {
            IdentityReport::not_applicable(name)
        });
    }
    if let Some(FamilySpec::Semiflat { tau, .. }) = source.family() {
        let ricci_form = |bm: &BundleMetric| -> Result<IdentityCheck, CliError> {
            let data = ComplexChartData::from_spec(tau, bm.chart())?;
            Ok(check_ricci_form(&data, bm.base(), &spec.cfg)?)
        };
        let coarse = ricci_form(&metrics[0])?;
        let fine = metrics.get(1).map(ricci_form).transpose()?;
        reports.push(judge.report("ricci_form", coarse, fine)?);
    }
    let det_g_profile = match source.family() {
        Some(FamilySpec::BoundaryModel) => Some(det_profile(&metrics[0])?),
        _ => None,
    };
    let passed = reports.iter().all(IdentityReport::passed)
        && det_g_profile.as_ref().is_none_or(|p| p.max_deviation <= 1e-12);
    let out = IdentitiesOutput {
        command: "identities",
        status: Verdict::of(passed),
        fd_order: spec.cfg.order_int(),
        lambda: spec.lambda,
        einstein,
        reports,
        det_g_profile,
    };
    Ok(RunOutput {
        body: to_json(&out)?,
        passed,
    })
}

/// `det G` along the `b²` axis at the first `b¹` grid line.
fn det_profile(bm: &BundleMetric) -> Result<DetProfile, CliError> {
    let det = bm.det_fiber()?;
    let chart = bm.chart();
    let mut b2 = Vec::new();
    let mut det_g = Vec::new();
    let mut max_deviation: f64 = 0.0;
    for j in 0..chart.points()[1] {
        let node = chart.node_of(&[0, j]);
        let y = chart.axis_coord(1, j);
        let d = det.at(node)[0];
        max_deviation = max_deviation.max((d - y * y).abs());
        b2.push(y);
        det_g.push(d);
    }
    Ok(DetProfile {
        b2,
        det_g,
        max_deviation,
    })
}

#[derive(Serialize)]
struct ConformalOutput {
    command: &'static str,
    status: Verdict,
    fd_order: u32,
    chart: ChartSpec,
    iterations: usize,
    relative_residual: f64,
    phi: TabulatedArray,
    ricci_form: IdentityReport,
}

#[derive(Serialize)]
struct OdeOutput {
    command: &'static str,
    status: Verdict,
    branch: OdeBranch,
    gs0: Vec<Vec<f64>>,
    s: Vec<f64>,
    /// Row-major `G(s)` per sample.
    g: Vec<Vec<f64>>,
    conserved_drift: f64,
    max_slope: f64,
    structure: OdeStructureReport,
}

fn solve(spec: &RunSpec) -> Result<RunOutput, CliError> {
    if let Some(ode) = &spec.input.ode {
        return solve_ode(spec, ode);
    }
    let source = Source::new(&spec.input)?;
    let Some(FamilySpec::Semiflat {
        tau,
        conformal: Conformal::Solve {
            tolerance,
            max_iterations,
        },
    }) = source.family()
    else {
        return Err(CliError::Invalid(
            "solve needs `ode`, or a semiflat family with conformal kind `solve`".into(),
        ));
    };
    let opts = EllipticOptions {
        tolerance: *tolerance,
        max_iterations: *max_iterations,
        ..EllipticOptions::default()
    };
    let region = source.region(&spec.input);
    validate_region(&region, source.chart())?;
    let mut chart = source.chart().clone();
    let mut solutions = Vec::new();
    let mut checks = Vec::new();
    for _ in 0..spec.levels {
        let data = ComplexChartData::from_spec(tau, &chart)?;
        let sol = solve_semiflat_conformal(&data, &opts, &spec.cfg)?;
        let base = fibercurv::families::conformal_base(&sol.phi)?;
        checks.push(check_ricci_form(&data, &base, &spec.cfg)?);
        solutions.push(sol);
        chart = chart.refined();
    }
    let judge = Judge { spec, region };
    let mut checks = checks.into_iter();
    let coarse = checks.next().expect("at least one level");
    let ricci_form = judge.report("ricci_form", coarse, checks.next())?;
    let first = &solutions[0];
    let passed = ricci_form.passed();
    let out = ConformalOutput {
        command: "solve",
        status: Verdict::of(passed),
        fd_order: spec.cfg.order_int(),
        chart: ChartSpec::from_chart(source.chart()),
        iterations: first.iterations,
        relative_residual: first.relative_residual,
        phi: TabulatedArray::from_field(&first.phi),
        ricci_form,
    };
    Ok(RunOutput {
        body: to_json(&out)?,
        passed,
    })
}

fn matrix(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>, CliError> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::Invalid(format!("ode.{name} must be a non-empty square matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn solve_ode(spec: &RunSpec, ode: &OdeInput) -> Result<RunOutput, CliError> {
    let g0 = matrix(&ode.g0, "g0")?;
    let mut gs0 = matrix(&ode.gs0, "gs0")?;
    if ode.enforce {
        gs0 = enforce_constant_det_identities(&g0, &gs0, 1e-20)?.0;
    }
    let sol = integrate_base_ode(&OdeProblem {
        s0: ode.s0,
        s1: ode.s1,
        g0,
        gs0: gs0.clone(),
        step: ode.step,
        branch: ode.branch,
    })?;
    let structure = verify_ode_structure(&sol.fiber_field()?, &spec.cfg)?;
    let expected = match ode.branch {
        OdeBranch::QuadraticDet => DetBranch::Quadratic,
        OdeBranch::ConstantDet => DetBranch::Constant,
    };
    let passed = structure.branch == expected;
    let out = OdeOutput {
        command: "solve",
        status: Verdict::of(passed),
        branch: ode.branch,
        gs0: rows(&gs0),
        g: sol.g.iter().map(|m| rows(m).concat()).collect(),
        s: sol.s.clone(),
        conserved_drift: sol.conserved_drift,
        max_slope: sol.max_slope(),
        structure,
    };
    Ok(RunOutput {
        body: to_json(&out)?,
        passed,
    })
}
