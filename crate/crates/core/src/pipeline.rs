//! Calibration and evaluation built from the lower-level modules: priors,
//! regularization choice, per-radiator consumption for each accounting
//! method, subset reports and their uncertainty budgets.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::domain::{Dataset, DeviceKind, IntegrationPeriod, Method, Samples};
use crate::estimator::{self, EstimationResult, LCurvePoint, SamplingMatrix};
use crate::metering;
use crate::metrics::{AllocationReport, Subsets};
use crate::thermal::ALLOCATOR_BASE_K;
use crate::uncertainty::{self, UncertaintyBudget, UncertaintyConfig};
use crate::Error;

pub const HCA_NOMINAL: &str = "hca_nominal";
pub const HCA_IMPROVED: &str = "hca_improved";
pub const STV_IMPROVED: &str = "stv_improved";

/// How the regularization parameter is chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaPolicy {
    Fixed(f64),
    /// Corner of the L-curve over `grid`. With `fallback`, a curve without a
    /// corner uses that value instead of failing.
    LCurve { grid: Vec<f64>, fallback: Option<f64> },
}

impl LambdaPolicy {
    pub fn auto() -> Self {
        LambdaPolicy::LCurve {
            grid: estimator::default_grid(),
            fallback: None,
        }
    }
}

/// Priors of `method` in the estimator's native units, kW.
pub fn priors(dataset: &Dataset, method: Method) -> Vec<f64> {
    dataset.radiators.iter().map(|r| method.prior(r) / 1000.0).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub method: Method,
    /// kW
    pub prior: Vec<f64>,
    pub estimate: EstimationResult,
    pub lcurve: Option<Vec<LCurvePoint>>,
    /// The L-curve had no corner and the fallback value was used.
    pub lambda_fallback: bool,
    /// Column sums of the sampling matrix: allocation units or hours.
    pub column_totals: Vec<f64>,
}

impl Calibration {
    /// Energy per radiator over the calibration span, kWh.
    pub fn consumption(&self) -> Vec<f64> {
        self.estimate
            .theta_hat
            .iter()
            .zip(&self.column_totals)
            .map(|(t, a)| t * a)
            .collect()
    }
}

/// Solves with the chosen λ.
pub fn calibrate_matrix(
    sm: &SamplingMatrix,
    method: Method,
    prior: &[f64],
    policy: &LambdaPolicy,
) -> Result<Calibration, Error> {
    let (lambda, lcurve, lambda_fallback) = match policy {
        LambdaPolicy::Fixed(l) => (*l, None, false),
        LambdaPolicy::LCurve { grid, fallback } => match estimator::lcurve_select(sm, prior, grid) {
            Ok((l, pts)) => (l, Some(pts), false),
            Err(Error::DegenerateLCurve) if fallback.is_some() => {
                let pts = estimator::lcurve(sm, prior, grid)?;
                (fallback.unwrap_or_default(), Some(pts), true)
            }
            Err(e) => return Err(e),
        },
    };
    let estimate = estimator::solve_rls(sm, prior, lambda)?;
    Ok(Calibration {
        method,
        prior: prior.to_vec(),
        estimate,
        lcurve,
        lambda_fallback,
        column_totals: sm.column_totals(),
    })
}

pub fn calibrate(dataset: &Dataset, method: Method, policy: &LambdaPolicy) -> Result<Calibration, Error> {
    let sm = estimator::assemble(dataset, method)?;
    calibrate_matrix(&sm, method, &priors(dataset, method), policy)
}

fn whole_span(dataset: &Dataset) -> Result<IntegrationPeriod, Error> {
    match (dataset.periods.first(), dataset.periods.last()) {
        (Some(a), Some(b)) => Ok(IntegrationPeriod {
            index: 0,
            start: a.start,
            end: b.end,
        }),
        _ => Err(Error::InvalidArgument("dataset has no periods")),
    }
}

/// Per-radiator consumption of one method with its standard uncertainty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Consumption {
    pub label: String,
    pub radiator_ids: Vec<String>,
    /// kWh
    pub values: Vec<f64>,
    pub uncertainty: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Allocator readings weighted by the manufacturer ratings.
pub fn nominal_hca(dataset: &Dataset, cfg: &UncertaintyConfig) -> Result<Consumption, Error> {
    let span = whole_span(dataset)?;
    let hours = span.duration_h();
    let mut values = Vec::with_capacity(dataset.radiators.len());
    let mut u = Vec::with_capacity(dataset.radiators.len());
    let mut warnings = Vec::new();
    for r in &dataset.radiators {
        let units = crate::thermal::integral_column(dataset, Method::Hca, &r.id, &span)?.value;
        let x = Method::Hca.prior(r) / 1000.0 * units;
        let count = libm::round(units * dataset.settings.hca_count_scale) as u64;
        let surface = ALLOCATOR_BASE_K * libm::pow((units / hours).max(0.0), 1.0 / r.exponent_n);
        let (u_d, in_band) = cfg.display_uncertainty(surface);
        if !in_band {
            warnings.push(format!(
                "{}: mean surface excess {surface:.1} K outside the display band",
                r.id
            ));
        }
        let rel = if count == 0 {
            0.0
        } else {
            uncertainty::u_hca_units(count, u_d)? / count as f64
        };
        values.push(x);
        u.push(libm::fabs(x) * libm::sqrt(rel * rel + cfg.u_k * cfg.u_k));
    }
    Ok(Consumption {
        label: HCA_NOMINAL.into(),
        radiator_ids: dataset.radiators.iter().map(|r| r.id.clone()).collect(),
        values,
        uncertainty: u,
        warnings,
    })
}

/// Energy from calibrated parameters.
pub fn improved(cal: &Calibration, cfg: &UncertaintyConfig) -> Consumption {
    let values = cal.consumption();
    let u_p = cal.estimate.relative_parameter_uncertainty();
    let mut warnings = Vec::new();
    for (id, p) in cal.estimate.radiator_ids.iter().zip(&u_p) {
        if !cfg.u_p_in_range(*p) {
            warnings.push(format!("{id}: relative parameter uncertainty {p:.4} outside the expected range"));
        }
    }
    for j in cal.estimate.negative_components() {
        warnings.push(format!("{}: negative parameter estimate", cal.estimate.radiator_ids[j]));
    }
    let uncertainty = values
        .iter()
        .zip(&u_p)
        .map(|(x, p)| uncertainty::u_estimated_energy(*x, cfg.u_h, cfg.u_k, *p))
        .collect();
    Consumption {
        label: match cal.method {
            Method::Hca => HCA_IMPROVED,
            Method::Stv => STV_IMPROVED,
        }
        .into(),
        radiator_ids: cal.estimate.radiator_ids.clone(),
        values,
        uncertainty,
        warnings,
    }
}

/// Reference consumption from the radiator heat meters over the whole span.
pub fn metered_reference(dataset: &Dataset, cfg: &UncertaintyConfig) -> Result<Consumption, Error> {
    let span = whole_span(dataset)?;
    let water = &dataset.settings.water;
    let mut values = Vec::new();
    let mut u = Vec::new();
    for r in &dataset.radiators {
        let series = dataset.series_for(&r.id, DeviceKind::Dhm).ok_or_else(|| Error::MissingSeries {
            radiator: r.id.clone(),
            kind: DeviceKind::Dhm,
        })?;
        let Samples::Dhm(s) = &series.samples else {
            unreachable!("series_for filters by kind")
        };
        let e = metering::reference_energy(s, water, &span, dataset.settings.cutoff_l_per_h)?;
        let flowing: Vec<_> = s.iter().filter(|x| x.flow > 0.0).collect();
        let (mean_flow, mean_dt) = if flowing.is_empty() {
            (0.0, 0.0)
        } else {
            let n = flowing.len() as f64;
            (
                flowing.iter().map(|x| x.flow).sum::<f64>() / n,
                flowing.iter().map(|x| x.delta_t()).sum::<f64>() / n,
            )
        };
        let rel_dt = if mean_dt > 0.0 { cfg.u_delta_t / mean_dt } else { 0.0 };
        let q = e.energy_kwh.max(0.0);
        values.push(q);
        u.push(uncertainty::u_reference_energy(
            q,
            cfg.rel_flow(mean_flow),
            rel_dt,
            water.rel_u_density,
            water.rel_u_specific_heat,
            uncertainty::u_correction(e.correction_kwh),
        )?);
    }
    Ok(Consumption {
        label: String::from("reference"),
        radiator_ids: dataset.radiators.iter().map(|r| r.id.clone()).collect(),
        values,
        uncertainty: u,
        warnings: Vec::new(),
    })
}

/// Reference consumption known exactly.
pub fn exact_reference(radiator_ids: Vec<String>, values: Vec<f64>) -> Consumption {
    let n = values.len();
    Consumption {
        label: String::from("reference"),
        radiator_ids,
        values,
        uncertainty: vec![0.0; n],
        warnings: Vec::new(),
    }
}

/// Report and uncertainty budget of `method` against `reference`.
pub fn evaluate(
    method: &Consumption,
    reference: &Consumption,
    subsets: &Subsets,
    baseline_errors: Option<&[f64]>,
    cfg: &UncertaintyConfig,
) -> Result<(AllocationReport, UncertaintyBudget), Error> {
    if method.radiator_ids != reference.radiator_ids {
        return Err(Error::InvalidArgument("method and reference cover different radiators"));
    }
    let ids = &method.radiator_ids;
    subsets.check(ids)?;
    let x = subsets.aggregate(ids, &method.values)?;
    let r = subsets.aggregate(ids, &reference.values)?;
    let u_x = subsets.aggregate_uncertainty(ids, &method.uncertainty)?;
    let u_r = subsets.aggregate_uncertainty(ids, &reference.uncertainty)?;
    let xv: Vec<f64> = x.iter().map(|c| c.value).collect();
    let rv: Vec<f64> = r.iter().map(|c| c.value).collect();
    let u_f = uncertainty::u_fraction(&xv, &u_x)?;
    let u_fr = uncertainty::u_fraction(&rv, &u_r)?;
    let u_e: Vec<f64> = u_f
        .iter()
        .zip(&u_fr)
        .map(|(a, b)| uncertainty::u_allocation_error(*b, *a))
        .collect();
    let report = AllocationReport::build(&method.label, &x, &r, &u_e, baseline_errors)?;
    let budget = UncertaintyBudget {
        method: method.label.clone(),
        radiator_ids: ids.clone(),
        u_reference: reference.uncertainty.clone(),
        u_consumption: method.uncertainty.clone(),
        subset_ids: x.iter().map(|c| c.subset_id.clone()).collect(),
        u_subset_consumption: u_x,
        u_fraction: u_f,
        u_reference_fraction: u_fr,
        u_error: u_e,
        config: *cfg,
        warnings: method.warnings.clone(),
    };
    Ok((report, budget))
}

/// Reports of the nominal allocator baseline and every improved method the
/// dataset supports, the latter compared against the baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub reports: Vec<AllocationReport>,
    pub budgets: Vec<UncertaintyBudget>,
    pub calibrations: Vec<Calibration>,
}

pub fn compare(
    dataset: &Dataset,
    reference: &Consumption,
    subsets: &Subsets,
    policy: &LambdaPolicy,
    methods: &[Method],
    cfg: &UncertaintyConfig,
) -> Result<Comparison, Error> {
    let nominal = nominal_hca(dataset, cfg)?;
    let (base, base_budget) = evaluate(&nominal, reference, subsets, None, cfg)?;
    let base_errors = base.errors();
    let mut reports = vec![base];
    let mut budgets = vec![base_budget];
    let mut calibrations = Vec::new();
    for &m in methods {
        let cal = calibrate(dataset, m, policy)?;
        let (rep, bud) = evaluate(&improved(&cal, cfg), reference, subsets, Some(&base_errors), cfg)?;
        reports.push(rep);
        budgets.push(bud);
        calibrations.push(cal);
    }
    Ok(Comparison {
        reports,
        budgets,
        calibrations,
    })
}
