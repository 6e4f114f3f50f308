//! First-order propagation of standard uncertainties through the metering,
//! allocation and estimation models, and a Monte-Carlo check of each
//! propagation.
//!
//! Inputs stated as bounds (display deviation, model residual, cut-off
//! correction, counter resolution) are rectangular; the rest are Gaussian.

use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal, StandardUniform};
use serde::{Deserialize, Serialize};

use crate::Error;

const SQRT_3: f64 = 1.732_050_807_568_877_2;

/// Constants of the uncertainty budget.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyConfig {
    /// Relative uncertainty of the building heat meter.
    pub u_h: f64,
    /// Relative uncertainty of the prior parameters (±2 % rectangular).
    pub u_k: f64,
    /// Maximum display deviation of allocators inside the band, relative.
    pub display_dev_in_band: f64,
    /// Maximum display deviation outside the band. Placeholder value.
    pub display_dev_outside: f64,
    /// Surface excess-temperature band of `display_dev_in_band`, K.
    pub display_band_k: (f64, f64),
    /// Relative flow uncertainty above `flow_threshold`.
    pub rel_flow_high: f64,
    /// Relative flow uncertainty down to the cut-off.
    pub rel_flow_low: f64,
    /// L/h
    pub flow_threshold: f64,
    /// Standard uncertainty of an inlet/outlet temperature difference, K.
    pub u_delta_t: f64,
    /// Expected range of the relative parameter uncertainty.
    pub u_p_range: (f64, f64),
}

impl Default for UncertaintyConfig {
    fn default() -> Self {
        Self {
            u_h: 0.01,
            u_k: 0.02 / SQRT_3,
            display_dev_in_band: 0.05,
            display_dev_outside: 0.08,
            display_band_k: (15.0, 40.0),
            rel_flow_high: 0.0015,
            rel_flow_low: 0.01,
            flow_threshold: 40.0,
            u_delta_t: 0.04,
            u_p_range: (0.003, 0.03),
        }
    }
}

impl UncertaintyConfig {
    /// Relative display uncertainty `u_D` for a mean surface excess
    /// temperature, and whether the temperature is inside the specified band.
    pub fn display_uncertainty(&self, surface_excess_k: f64) -> (f64, bool) {
        let (lo, hi) = self.display_band_k;
        if (lo..=hi).contains(&surface_excess_k) {
            (self.display_dev_in_band / SQRT_3, true)
        } else {
            (self.display_dev_outside / SQRT_3, false)
        }
    }

    pub fn rel_flow(&self, mean_flow: f64) -> f64 {
        if mean_flow > self.flow_threshold {
            self.rel_flow_high
        } else {
            self.rel_flow_low
        }
    }

    pub fn u_p_in_range(&self, u_p: f64) -> bool {
        (self.u_p_range.0..=self.u_p_range.1).contains(&u_p)
    }
}

/// Standard uncertainty of a cut-off correction integral: rectangular
/// between zero and twice the correction.
pub fn u_correction(correction_kwh: f64) -> f64 {
    correction_kwh / SQRT_3
}

/// Standard uncertainty of a reference meter energy, kWh.
pub fn u_reference_energy(
    q_ref: f64,
    rel_flow: f64,
    rel_dt: f64,
    rel_rho: f64,
    rel_cp: f64,
    u_co: f64,
) -> Result<f64, Error> {
    check_nonneg(&[q_ref, rel_flow, rel_dt, rel_rho, rel_cp, u_co])?;
    if q_ref == 0.0 {
        if u_co != 0.0 {
            return Err(Error::ZeroConsumption(0));
        }
        return Ok(0.0);
    }
    let rel = rel_flow * rel_flow + rel_dt * rel_dt + rel_rho * rel_rho + rel_cp * rel_cp;
    let co = u_co / q_ref;
    Ok(q_ref * libm::sqrt(rel + co * co))
}

/// Standard uncertainty of an allocator count: two readings at unit
/// resolution plus the display deviation.
pub fn u_hca_units(count: u64, u_d: f64) -> Result<f64, Error> {
    check_nonneg(&[u_d])?;
    if count == 0 {
        return Err(Error::InvalidArgument("allocator count must be at least 1"));
    }
    let r = count as f64;
    let res = 1.0 / (r * 2.0 * SQRT_3);
    Ok(r * libm::sqrt(2.0 * res * res + u_d * u_d))
}

/// Standard uncertainty of an estimated radiator energy, kWh.
pub fn u_estimated_energy(q_rad: f64, u_h: f64, u_k: f64, u_p: f64) -> f64 {
    libm::fabs(q_rad) * libm::sqrt(u_h * u_h + u_k * u_k + u_p * u_p)
}

/// Standard uncertainty of each subset's fraction, percentage points, for
/// independent subset consumptions.
pub fn u_fraction(x: &[f64], u_x: &[f64]) -> Result<Vec<f64>, Error> {
    if x.len() != u_x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: u_x.len(),
        });
    }
    check_nonneg(u_x)?;
    let total: f64 = x.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroTotal);
    }
    let u_total = libm::sqrt(u_x.iter().map(|u| u * u).sum::<f64>());
    x.iter()
        .zip(u_x)
        .enumerate()
        .map(|(s, (&xs, &us))| {
            if xs == 0.0 {
                return if us == 0.0 {
                    Ok(0.0)
                } else {
                    Err(Error::ZeroConsumption(s))
                };
            }
            let f = 100.0 * xs / total;
            let rel_s = us / xs;
            let rel_t = u_total / total;
            let cov = us * us / (xs * total);
            let var = rel_s * rel_s + rel_t * rel_t - 2.0 * cov;
            Ok(libm::fabs(f) * libm::sqrt(var.max(0.0)))
        })
        .collect()
}

/// Standard uncertainty of a heat allocation error, pp.
pub fn u_allocation_error(u_f_ref: f64, u_f_x: f64) -> f64 {
    libm::sqrt(u_f_ref * u_f_ref + u_f_x * u_f_x)
}

fn check_nonneg(v: &[f64]) -> Result<(), Error> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    if v.iter().any(|x| *x < 0.0) {
        return Err(Error::DegenerateDistribution);
    }
    Ok(())
}

/// Per-radiator and per-subset uncertainties of one accounting method.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyBudget {
    pub method: alloc::string::String,
    pub radiator_ids: Vec<alloc::string::String>,
    /// Reference energy uncertainty per radiator, kWh.
    pub u_reference: Vec<f64>,
    /// Method consumption uncertainty per radiator, in the method's units.
    pub u_consumption: Vec<f64>,
    pub subset_ids: Vec<alloc::string::String>,
    pub u_subset_consumption: Vec<f64>,
    pub u_fraction: Vec<f64>,
    pub u_reference_fraction: Vec<f64>,
    pub u_error: Vec<f64>,
    pub config: UncertaintyConfig,
    /// Diagnostics, e.g. values outside expected ranges.
    pub warnings: Vec<alloc::string::String>,
}

impl UncertaintyBudget {
    /// Mean per-subset error uncertainty, treating the subsets' errors as
    /// fully correlated.
    pub fn mean_u_error(&self) -> f64 {
        if self.u_error.is_empty() {
            return 0.0;
        }
        self.u_error.iter().sum::<f64>() / self.u_error.len() as f64
    }
}

/// An uncertainty propagation to be checked by sampling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PropagationCase {
    ReferenceEnergy {
        q_ref: f64,
        rel_flow: f64,
        rel_dt: f64,
        rel_rho: f64,
        rel_cp: f64,
        correction_kwh: f64,
    },
    HcaUnits {
        count: u64,
        u_d: f64,
    },
    EstimatedEnergy {
        q_rad: f64,
        u_h: f64,
        u_k: f64,
        u_p: f64,
    },
    Fraction {
        x: Vec<f64>,
        u_x: Vec<f64>,
        subset: usize,
    },
    AllocationError {
        u_f_ref: f64,
        u_f_x: f64,
    },
}

impl PropagationCase {
    pub fn name(&self) -> &'static str {
        match self {
            Self::ReferenceEnergy { .. } => "reference_energy",
            Self::HcaUnits { .. } => "hca_units",
            Self::EstimatedEnergy { .. } => "estimated_energy",
            Self::Fraction { .. } => "fraction",
            Self::AllocationError { .. } => "allocation_error",
        }
    }

    fn stream(&self) -> u64 {
        match self {
            Self::ReferenceEnergy { .. } => 1,
            Self::HcaUnits { .. } => 2,
            Self::EstimatedEnergy { .. } => 3,
            Self::Fraction { .. } => 4,
            Self::AllocationError { .. } => 5,
        }
    }

    pub fn analytic(&self) -> Result<f64, Error> {
        match self {
            Self::ReferenceEnergy {
                q_ref,
                rel_flow,
                rel_dt,
                rel_rho,
                rel_cp,
                correction_kwh,
            } => u_reference_energy(*q_ref, *rel_flow, *rel_dt, *rel_rho, *rel_cp, u_correction(*correction_kwh)),
            Self::HcaUnits { count, u_d } => u_hca_units(*count, *u_d),
            Self::EstimatedEnergy { q_rad, u_h, u_k, u_p } => {
                check_nonneg(&[*u_h, *u_k, *u_p])?;
                Ok(u_estimated_energy(*q_rad, *u_h, *u_k, *u_p))
            }
            Self::Fraction { x, u_x, subset } => u_fraction(x, u_x)?
                .get(*subset)
                .copied()
                .ok_or(Error::InvalidArgument("subset index out of range")),
            Self::AllocationError { u_f_ref, u_f_x } => {
                check_nonneg(&[*u_f_ref, *u_f_x])?;
                Ok(u_allocation_error(*u_f_ref, *u_f_x))
            }
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng, scratch: &mut Vec<f64>) -> f64 {
        let mut gauss = |s: f64| -> f64 {
            let z: f64 = StandardNormal.sample(rng);
            s * z
        };
        match self {
            Self::ReferenceEnergy {
                q_ref,
                rel_flow,
                rel_dt,
                rel_rho,
                rel_cp,
                correction_kwh,
            } => {
                let m = (1.0 + gauss(*rel_flow))
                    * (1.0 + gauss(*rel_dt))
                    * (1.0 + gauss(*rel_rho))
                    * (1.0 + gauss(*rel_cp));
                q_ref * m + rect(rng, *correction_kwh)
            }
            Self::HcaUnits { count, u_d } => {
                let r = *count as f64;
                r * (1.0 + rect(rng, u_d * SQRT_3)) + rect(rng, 0.5) - rect(rng, 0.5)
            }
            Self::EstimatedEnergy { q_rad, u_h, u_k, u_p } => {
                let h = gauss(*u_h);
                let p = gauss(*u_p);
                q_rad * (1.0 + h) * (1.0 + rect(rng, u_k * SQRT_3)) * (1.0 + p)
            }
            Self::Fraction { x, u_x, subset } => {
                scratch.clear();
                for (xs, us) in x.iter().zip(u_x) {
                    scratch.push(xs + gauss(*us));
                }
                let total: f64 = scratch.iter().sum();
                100.0 * scratch[*subset] / total
            }
            Self::AllocationError { u_f_ref, u_f_x } => gauss(*u_f_x) - gauss(*u_f_ref),
        }
    }
}

/// Uniform on `[-half_width, half_width]`.
fn rect(rng: &mut ChaCha8Rng, half_width: f64) -> f64 {
    let u: f64 = StandardUniform.sample(rng);
    (2.0 * u - 1.0) * half_width
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloCheck {
    pub analytic: f64,
    pub empirical: f64,
    /// Standard error of the empirical standard deviation.
    pub standard_error: f64,
    /// `(analytic − empirical) / standard_error`
    pub z_score: f64,
    pub n_draws: usize,
}

impl MonteCarloCheck {
    pub fn agrees_within(&self, k: f64) -> bool {
        libm::fabs(self.analytic - self.empirical) <= k * self.standard_error
    }
}

pub const MIN_DRAWS: usize = 10_000;

/// Samples the case's inputs and compares the empirical standard deviation
/// of the output with the analytic propagation.
///
/// Each case draws from its own ChaCha stream of `seed`, so results do not
/// depend on the order cases are run in.
pub fn monte_carlo_check(case: &PropagationCase, n_draws: usize, seed: u64) -> Result<MonteCarloCheck, Error> {
    if n_draws < MIN_DRAWS {
        return Err(Error::InvalidArgument("at least 10^4 draws are required"));
    }
    let analytic = case.analytic()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(case.stream());
    let mut scratch = Vec::new();
    // Welford
    let (mut mean, mut m2) = (0.0f64, 0.0f64);
    for i in 0..n_draws {
        let v = case.draw(&mut rng, &mut scratch);
        let d = v - mean;
        mean += d / (i + 1) as f64;
        m2 += d * (v - mean);
    }
    let empirical = libm::sqrt(m2 / (n_draws - 1) as f64);
    let standard_error = empirical / libm::sqrt(2.0 * (n_draws - 1) as f64);
    let z_score = if analytic == empirical {
        0.0
    } else {
        (analytic - empirical) / standard_error
    };
    Ok(MonteCarloCheck {
        analytic,
        empirical,
        standard_error,
        z_score,
        n_draws,
    })
}
