//! Report, estimate and plot-data files.

use std::fmt::Write as _;
use std::path::Path;

use heatalloc_core::domain::Method;
use heatalloc_core::estimator::LCurvePoint;
use heatalloc_core::metrics::AllocationReport;
use heatalloc_core::pipeline::Calibration;
use heatalloc_core::sensitivity::{Axis, SensitivityRow};
use heatalloc_core::uncertainty::UncertaintyBudget;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io::{fmt_num, write_json, write_rows, SCHEMA_VERSION};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const COMPARISON_CSV: &str = "comparison.csv";
pub const COMPARISON_TXT: &str = "comparison.txt";
pub const ESTIMATE_JSON: &str = "estimate.json";
pub const LCURVE_CSV: &str = "lcurve.csv";
pub const SENSITIVITY_CSV: &str = "sensitivity.csv";
pub const SENSITIVITY_JSON: &str = "sensitivity.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub schema_version: u32,
    /// Where the reference consumption came from.
    pub reference: String,
    /// Label of the report every other one is compared against.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<String>,
    pub reports: Vec<AllocationReport>,
    pub budgets: Vec<UncertaintyBudget>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateFile {
    pub schema_version: u32,
    pub method: Method,
    pub radiator_ids: Vec<String>,
    /// W, or W per allocation unit and hour.
    pub theta_hat_w: Vec<f64>,
    pub prior_w: Vec<f64>,
    /// Diagonal of `(AᵀA + λI)⁻¹`.
    pub covariance_diagonal: Vec<f64>,
    pub relative_uncertainty: Vec<f64>,
    pub lambda: f64,
    pub lambda_fallback: bool,
    pub residual_norm: f64,
    pub prior_deviation_norm: f64,
    pub n_samplings: usize,
    /// Radiators whose estimate is negative.
    pub negative: Vec<String>,
}

impl EstimateFile {
    pub fn of(cal: &Calibration) -> Self {
        let e = &cal.estimate;
        let k = e.theta_hat.len();
        Self {
            schema_version: SCHEMA_VERSION,
            method: cal.method,
            radiator_ids: e.radiator_ids.clone(),
            theta_hat_w: e.theta_hat_watts(),
            prior_w: cal.prior.iter().map(|p| p * 1000.0).collect(),
            covariance_diagonal: (0..k).map(|i| e.covariance[(i, i)]).collect(),
            relative_uncertainty: e.relative_parameter_uncertainty(),
            lambda: e.lambda,
            lambda_fallback: cal.lambda_fallback,
            residual_norm: e.residual_norm,
            prior_deviation_norm: e.prior_deviation_norm,
            n_samplings: e.n_samplings,
            negative: e
                .negative_components()
                .into_iter()
                .map(|i| e.radiator_ids[i].clone())
                .collect(),
        }
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

pub fn write_report(dir: &Path, file: &ReportFile) -> Result<()> {
    write_json(&dir.join(REPORT_JSON), file)?;
    write_rows(
        &dir.join(REPORT_CSV),
        &["method", "subset_id", "fraction", "reference_fraction", "error", "u_error"],
        file.reports.iter().flat_map(|r| {
            r.rows
                .iter()
                .map(|row| {
                    vec![
                        r.method.clone(),
                        row.subset_id.clone(),
                        fmt_num(row.fraction),
                        fmt_num(row.reference_fraction),
                        fmt_num(row.error),
                        fmt_num(row.u_error),
                    ]
                })
                .chain(std::iter::once(vec![
                    r.method.clone(),
                    "global".into(),
                    fmt_num(r.rows.iter().map(|x| x.fraction).sum()),
                    fmt_num(r.rows.iter().map(|x| x.reference_fraction).sum()),
                    fmt_num(r.indicators.mape),
                    fmt_num(r.u_global),
                ]))
        }),
    )?;
    write_rows(
        &dir.join(COMPARISON_CSV),
        &[
            "method",
            "sigma",
            "max",
            "min",
            "mape",
            "delta_e_hca",
            "p_l",
            "mean_u_error",
            "u_global",
        ],
        file.reports.iter().map(|r| {
            let g = &r.indicators;
            vec![
                r.method.clone(),
                fmt_num(g.sigma),
                fmt_num(g.max),
                fmt_num(g.min),
                fmt_num(g.mape),
                opt(g.delta_e_hca),
                opt(g.p_l),
                fmt_num(r.mean_u_error),
                fmt_num(r.u_global),
            ]
        }),
    )?;
    crate::io::write_text(&dir.join(COMPARISON_TXT), &comparison_table(&file.reports))
}

type Cell = Box<dyn Fn(&AllocationReport) -> String>;

/// Indicators of each method as columns.
pub fn comparison_table(reports: &[AllocationReport]) -> String {
    let dash = || "-".to_string();
    let rows: [(&str, Cell); 8] = [
        ("sigma [pp]", Box::new(|r| format!("{:.2}", r.indicators.sigma))),
        ("max [pp]", Box::new(|r| format!("{:.2}", r.indicators.max))),
        ("min [pp]", Box::new(|r| format!("{:.2}", r.indicators.min))),
        ("MAPE [%]", Box::new(|r| format!("{:.2}", r.indicators.mape))),
        (
            "dE_HCA [pp]",
            Box::new(move |r| r.indicators.delta_e_hca.map_or_else(dash, |v| format!("{v:.2}"))),
        ),
        (
            "P_L [%]",
            Box::new(move |r| r.indicators.p_l.map_or_else(dash, |v| format!("{v:.1}"))),
        ),
        ("mean u(E) [pp]", Box::new(|r| format!("{:.2}", r.mean_u_error))),
        ("u_G [pp]", Box::new(|r| format!("{:.2}", r.u_global))),
    ];
    let width = reports.iter().map(|r| r.method.len()).max().unwrap_or(0).max(8);
    let mut s = format!("{:<16}", "");
    for r in reports {
        let _ = write!(s, " {:>width$}", r.method);
    }
    s.push('\n');
    for (name, f) in &rows {
        let _ = write!(s, "{name:<16}");
        for r in reports {
            let _ = write!(s, " {:>width$}", f(r));
        }
        s.push('\n');
    }
    s
}

pub fn write_estimate(dir: &Path, cal: &Calibration) -> Result<()> {
    write_json(&dir.join(ESTIMATE_JSON), &EstimateFile::of(cal))
}

pub fn write_lcurve(path: &Path, points: &[LCurvePoint]) -> Result<()> {
    write_rows(
        path,
        &["lambda", "residual_norm", "prior_deviation_norm", "curvature"],
        points.iter().map(|p| {
            vec![
                fmt_num(p.lambda),
                fmt_num(p.residual_norm),
                fmt_num(p.prior_deviation_norm),
                opt(p.curvature),
            ]
        }),
    )
}

fn axis_name(a: Axis) -> &'static str {
    match a {
        Axis::Frequency => "frequency",
        Axis::HeatLoss => "heat_loss",
        Axis::PriorOffset => "prior_offset",
        Axis::PriorScatter => "prior_scatter",
    }
}

pub fn write_sensitivity(dir: &Path, rows: &[SensitivityRow]) -> Result<()> {
    write_json(&dir.join(SENSITIVITY_JSON), &rows)?;
    write_rows(
        &dir.join(SENSITIVITY_CSV),
        &[
            "axis",
            "level",
            "lambda",
            "lambda_fallback",
            "n_samplings",
            "sigma",
            "max",
            "min",
            "mape",
            "delta_e_hca",
            "p_l",
            "baseline_mape",
            "theta_error",
            "prior_deviation",
        ],
        rows.iter().map(|r| {
            let g = &r.indicators;
            vec![
                axis_name(r.axis).into(),
                fmt_num(r.level),
                fmt_num(r.lambda),
                r.lambda_fallback.to_string(),
                r.n_samplings.to_string(),
                fmt_num(g.sigma),
                fmt_num(g.max),
                fmt_num(g.min),
                fmt_num(g.mape),
                opt(g.delta_e_hca),
                opt(g.p_l),
                fmt_num(r.baseline_mape),
                fmt_num(r.theta_error),
                fmt_num(r.prior_deviation),
            ]
        }),
    )
}
