//! Sensitivity of the calibrated allocation to the sampling frequency,
//! distribution losses and the quality of the prior.

use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardUniform};
use serde::{Deserialize, Serialize};

use crate::domain::{partition_periods, Dataset, Method, Samples};
use crate::estimator::{self, SamplingMatrix};
use crate::metrics::{GlobalIndicators, Subsets};
use crate::pipeline::{self, exact_reference, LambdaPolicy};
use crate::quadrature;
use crate::simulator::{simulate_season, GroundTruth, ScenarioConfig};
use crate::uncertainty::UncertaintyConfig;
use crate::Error;

const STREAM_SCATTER: u64 = 7;
/// Ambient temperature around the distribution pipes, °C.
const PIPE_AMBIENT_C: f64 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Integration periods per hour.
    Frequency,
    /// Loss as a fraction of the season's radiator energy.
    HeatLoss,
    /// Relative offset applied to every prior.
    PriorOffset,
    /// Half-width of uniform relative errors on the priors.
    PriorScatter,
}

/// How injected losses are spread over the periods.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossProfile {
    /// Each period's total is scaled by the same factor.
    Proportional,
    /// Losses follow the supply temperature excess over the pipe ambient,
    /// independent of the radiator load.
    SupplyTemperature,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityOptions {
    pub method: Method,
    pub policy: LambdaPolicy,
    pub loss_profile: LossProfile,
    pub uncertainty: UncertaintyConfig,
}

impl Default for SensitivityOptions {
    fn default() -> Self {
        let grid = estimator::default_grid();
        Self {
            method: Method::Hca,
            policy: LambdaPolicy::LCurve {
                fallback: grid.first().copied(),
                grid,
            },
            loss_profile: LossProfile::SupplyTemperature,
            uncertainty: UncertaintyConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub axis: Axis,
    pub level: f64,
    pub lambda: f64,
    pub lambda_fallback: bool,
    pub n_samplings: usize,
    /// Indicators of the calibrated method, with the nominal allocator as
    /// baseline.
    pub indicators: GlobalIndicators,
    pub baseline_mape: f64,
    /// Largest relative parameter error against the ground truth.
    pub theta_error: f64,
    /// Mean relative deviation of the estimates from the priors.
    pub prior_deviation: f64,
}

/// Adds distribution losses of `fraction` of the season total to `sm`.
pub fn inject_loss(
    sm: &SamplingMatrix,
    dataset: &Dataset,
    fraction: f64,
    profile: LossProfile,
) -> Result<SamplingMatrix, Error> {
    if !(fraction >= 0.0) {
        return Err(Error::InvalidArgument("loss fraction must be non-negative"));
    }
    let q = match profile {
        LossProfile::Proportional => sm.q.iter().map(|q| q * (1.0 + fraction)).collect(),
        LossProfile::SupplyTemperature => {
            let weights = supply_excess(sm, dataset)?;
            let total_w: f64 = weights.iter().sum();
            let total_q: f64 = sm.q.iter().sum();
            if !(total_w > 0.0) {
                return Err(Error::InvalidArgument("supply temperature never exceeds the pipe ambient"));
            }
            sm.q
                .iter()
                .zip(&weights)
                .map(|(q, w)| q + fraction * total_q * w / total_w)
                .collect()
        }
    };
    Ok(SamplingMatrix { q, ..sm.clone() })
}

/// `∫ (T_supply − T_ambient)⁺ dt` per sampling, from the central meter.
fn supply_excess(sm: &SamplingMatrix, dataset: &Dataset) -> Result<Vec<f64>, Error> {
    let Some(Samples::Dhm(s)) = dataset.central_meter().map(|m| &m.samples) else {
        return Err(Error::MissingSeries {
            radiator: "<central>".into(),
            kind: crate::domain::DeviceKind::Dhm,
        });
    };
    sm.period_index
        .iter()
        .map(|&i| {
            let p = dataset
                .periods
                .iter()
                .find(|p| p.index == i)
                .ok_or(Error::UncoveredPeriod { period: i })?;
            quadrature::integrate(s, |x| x.t, |x| (x.inlet_temp - PIPE_AMBIENT_C).max(0.0), p.start, p.end)
                .ok_or(Error::UncoveredPeriod { period: i })
        })
        .collect()
}

fn subsets_of(dataset: &Dataset) -> Subsets {
    Subsets::from_assignments(dataset.radiators.iter().map(|r| (r.id.as_str(), r.subset_id.as_str())))
}

/// One row from a dataset, possibly modified sampling matrix and prior.
fn row(
    axis: Axis,
    level: f64,
    dataset: &Dataset,
    truth: &GroundTruth,
    sm: &SamplingMatrix,
    prior: &[f64],
    opts: &SensitivityOptions,
) -> Result<SensitivityRow, Error> {
    let cfg = &opts.uncertainty;
    let reference = exact_reference(truth.radiator_ids.clone(), truth.radiator_totals());
    let subsets = subsets_of(dataset);
    let nominal = pipeline::nominal_hca(dataset, cfg)?;
    let (base, _) = pipeline::evaluate(&nominal, &reference, &subsets, None, cfg)?;
    let cal = pipeline::calibrate_matrix(sm, opts.method, prior, &opts.policy)?;
    let (rep, _) = pipeline::evaluate(
        &pipeline::improved(&cal, cfg),
        &reference,
        &subsets,
        Some(&base.errors()),
        cfg,
    )?;
    let est = cal.estimate.theta_hat_watts();
    let theta_error = est
        .iter()
        .zip(truth.theta(opts.method))
        .map(|(e, t)| libm::fabs(e - t) / t)
        .fold(0.0, f64::max);
    let prior_deviation = cal
        .estimate
        .theta_hat
        .iter()
        .zip(prior)
        .map(|(e, p)| libm::fabs(e / p - 1.0))
        .sum::<f64>()
        / prior.len() as f64;
    Ok(SensitivityRow {
        axis,
        level,
        lambda: cal.estimate.lambda,
        lambda_fallback: cal.lambda_fallback,
        n_samplings: sm.n_samplings(),
        indicators: rep.indicators,
        baseline_mape: base.indicators.mape,
        theta_error,
        prior_deviation,
    })
}

/// Simulates `base` once and evaluates the calibrated allocation at every
/// level of `axis`, in level order.
pub fn sensitivity_suite(
    base: &ScenarioConfig,
    axis: Axis,
    levels: &[f64],
    opts: &SensitivityOptions,
) -> Result<Vec<SensitivityRow>, Error> {
    if levels.is_empty() {
        return Err(Error::InvalidArgument("no levels"));
    }
    let (dataset, truth) = simulate_season(base)?;
    sensitivity_on(&dataset, &truth, base.seed, axis, levels, opts)
}

/// Like [`sensitivity_suite`] on an existing dataset and its ground truth.
pub fn sensitivity_on(
    dataset: &Dataset,
    truth: &GroundTruth,
    seed: u64,
    axis: Axis,
    levels: &[f64],
    opts: &SensitivityOptions,
) -> Result<Vec<SensitivityRow>, Error> {
    if levels.is_empty() {
        return Err(Error::InvalidArgument("no levels"));
    }
    let prior = pipeline::priors(dataset, opts.method);
    let sm = match axis {
        Axis::Frequency => None,
        _ => Some(estimator::assemble(dataset, opts.method)?),
    };
    levels
        .iter()
        .map(|&level| match axis {
            Axis::Frequency => {
                let span = dataset.span().ok_or(Error::InvalidArgument("empty dataset"))?;
                let d = dataset.repartition(partition_periods(span, level)?)?;
                let sm = estimator::assemble(&d, opts.method)?;
                row(axis, level, &d, truth, &sm, &prior, opts)
            }
            Axis::HeatLoss => {
                let sm = sm.as_ref().expect("assembled above");
                let lossy = inject_loss(sm, dataset, level, opts.loss_profile)?;
                row(axis, level, dataset, truth, &lossy, &prior, opts)
            }
            Axis::PriorOffset => {
                let p: Vec<f64> = prior.iter().map(|p| p * (1.0 + level)).collect();
                row(axis, level, dataset, truth, sm.as_ref().expect("assembled above"), &p, opts)
            }
            Axis::PriorScatter => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(STREAM_SCATTER);
                let p: Vec<f64> = prior
                    .iter()
                    .map(|p| {
                        let u: f64 = StandardUniform.sample(&mut rng);
                        p * (1.0 + level * (2.0 * u - 1.0))
                    })
                    .collect();
                row(axis, level, dataset, truth, sm.as_ref().expect("assembled above"), &p, opts)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{HeaterMode, NoiseSpec};

    fn scenario() -> ScenarioConfig {
        let mut c = ScenarioConfig::exact(6, 4.0, 3);
        c.noise = NoiseSpec::MODERATE;
        c.hca_count_scale = 999.0;
        c.heater = HeaterMode::Climatic;
        c
    }

    #[test]
    fn prior_offset_zero_has_baseline_comparison() {
        let rows = sensitivity_suite(&scenario(), Axis::PriorOffset, &[0.0], &SensitivityOptions::default()).unwrap();
        let d = rows[0].indicators.delta_e_hca.unwrap();
        assert!(d.is_finite());
        assert!(rows[0].indicators.p_l.is_some());
    }

    #[test]
    fn losses_worsen_allocation() {
        let rows = sensitivity_suite(
            &scenario(),
            Axis::HeatLoss,
            &[0.0, 0.05, 0.1, 0.2],
            &SensitivityOptions::default(),
        )
        .unwrap();
        let mape: Vec<f64> = rows.iter().map(|r| r.indicators.mape).collect();
        assert!(mape.windows(2).all(|w| w[1] >= w[0]), "{mape:?}");
    }

    #[test]
    fn proportional_loss_scales_totals() {
        let (d, _) = simulate_season(&scenario()).unwrap();
        let sm = estimator::assemble(&d, Method::Hca).unwrap();
        let lossy = inject_loss(&sm, &d, 0.2, LossProfile::Proportional).unwrap();
        for (a, b) in sm.q.iter().zip(&lossy.q) {
            assert!((b - 1.2 * a).abs() <= 1e-12 * b);
        }
        let spread = inject_loss(&sm, &d, 0.2, LossProfile::SupplyTemperature).unwrap();
        let (s0, s1): (f64, f64) = (sm.q.iter().sum(), spread.q.iter().sum());
        assert!((s1 - 1.2 * s0).abs() < 1e-9 * s1);
    }

    #[test]
    fn frequency_levels_change_partition() {
        let rows = sensitivity_suite(&scenario(), Axis::Frequency, &[1.0 / 3.0, 1.0 / 6.0], &SensitivityOptions::default())
            .unwrap();
        assert_eq!(rows[0].n_samplings, 32);
        assert_eq!(rows[1].n_samplings, 16);
        let again = sensitivity_suite(&scenario(), Axis::Frequency, &[1.0 / 3.0], &SensitivityOptions::default()).unwrap();
        assert_eq!(again[0], rows[0]);
    }
}
