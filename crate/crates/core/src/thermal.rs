//! Forward models of radiator output and of what the accounting devices
//! register.
//!
//! Energies are in kWh, powers in W, integrals of normalized excess
//! temperature in hours. Negative excess temperatures emit nothing and are
//! clamped to zero before the power law is applied.

use alloc::string::String;
use serde::{Deserialize, Serialize};

use crate::domain::{
    Dataset, DeviceKind, IntegrationPeriod, Method, Samples, StvSample, Timestamp,
    SECONDS_PER_HOUR,
};
use crate::quadrature;
use crate::Error;

/// Base excess temperature of the radiator output rating, K.
pub const RADIATOR_BASE_K: f64 = 50.0;
/// Base excess temperature of the allocator counting law, K.
pub const ALLOCATOR_BASE_K: f64 = 60.0;
/// Radiator exponent assumed when none is known.
pub const DEFAULT_EXPONENT: f64 = 1.3;

/// `(max(dt, 0) / base)^n`
#[inline]
pub fn normalized_power(delta_t: f64, base: f64, n: f64) -> f64 {
    if delta_t <= 0.0 {
        0.0
    } else {
        libm::pow(delta_t / base, n)
    }
}

/// Steady-state output of a radiator, W.
pub fn en442_power(q_n50: f64, n: f64, t_mean: f64, t_air: f64) -> f64 {
    q_n50 * normalized_power(t_mean - t_air, RADIATOR_BASE_K, n)
}

/// Output at 60 K excess temperature from the 50 K rating, W.
pub fn kq_from_en442(q_n50: f64, n: f64) -> f64 {
    q_n50 * libm::pow(ALLOCATOR_BASE_K / RADIATOR_BASE_K, n)
}

/// One reading of a hot-side and a cold-side temperature.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TempPair {
    pub t: Timestamp,
    pub hot: f64,
    pub cold: f64,
}

/// Allocator rating factors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rating {
    pub kq: f64,
    pub kc: f64,
    pub kt: f64,
}

impl Rating {
    pub const UNIT: Rating = Rating {
        kq: 1.0,
        kc: 1.0,
        kt: 1.0,
    };

    pub fn product(&self) -> f64 {
        self.kq * self.kc * self.kt
    }
}

/// Allocation units accumulated over a period from surface and air
/// temperatures, before quantization.
pub fn hca_allocation_units(
    temps: &[TempPair],
    n: f64,
    rating: Rating,
    period: &IntegrationPeriod,
) -> Result<f64, Error> {
    let hours = integrate_hours(
        temps,
        |s| s.t,
        |s| normalized_power(s.hot - s.cold, ALLOCATOR_BASE_K, n),
        period,
    )?;
    Ok(rating.product() * hours)
}

/// Energy attributed to a radiator from its unit-rated allocator reading.
pub fn hca_energy_term(units: f64, theta_w: f64) -> f64 {
    theta_w * units / 1000.0
}

/// Energy attributed to a radiator from valve inlet and room temperatures.
pub fn stv_energy_term(
    samples: &[StvSample],
    n: f64,
    theta_w: f64,
    period: &IntegrationPeriod,
) -> Result<f64, Error> {
    Ok(theta_w * stv_integral(samples, n, period)? / 1000.0)
}

/// `∫ ((T_in - T_av) / 50)^n dt` over the period, hours.
pub fn stv_integral(samples: &[StvSample], n: f64, period: &IntegrationPeriod) -> Result<f64, Error> {
    integrate_hours(
        samples,
        |s| s.t,
        |s| normalized_power(s.excess_temp(), RADIATOR_BASE_K, n),
        period,
    )
}

fn integrate_hours<S>(
    samples: &[S],
    time: impl Fn(&S) -> Timestamp,
    value: impl Fn(&S) -> f64,
    period: &IntegrationPeriod,
) -> Result<f64, Error> {
    quadrature::integrate(samples, time, value, period.start, period.end)
        .map(|s| s / SECONDS_PER_HOUR)
        .ok_or(Error::UncoveredPeriod {
            period: period.index,
        })
}

/// One entry of the sampling matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizedTempIntegral {
    pub radiator_id: String,
    pub period_index: usize,
    /// hours
    pub value: f64,
}

/// The sampling-matrix entry of `radiator_id` in `period`.
///
/// For allocators this is the unit-rated count increment over the period,
/// with counts interpolated linearly at the boundaries. For valves it is the
/// integral of the normalized inlet-to-room excess temperature.
pub fn integral_column(
    dataset: &Dataset,
    method: Method,
    radiator_id: &str,
    period: &IntegrationPeriod,
) -> Result<NormalizedTempIntegral, Error> {
    let spec = dataset
        .radiator(radiator_id)
        .ok_or_else(|| Error::UnknownRadiator(radiator_id.into()))?;
    let kind = method.device_kind();
    let series = dataset
        .series_for(radiator_id, kind)
        .ok_or_else(|| Error::MissingSeries {
            radiator: radiator_id.into(),
            kind,
        })?;
    let value = match &series.samples {
        Samples::Hca(s) => {
            let count = |t| {
                quadrature::interpolate(s, |x| x.t, |x| x.count as f64, t)
                    .ok_or(Error::UncoveredPeriod {
                        period: period.index,
                    })
            };
            let delta = count(period.end)? - count(period.start)?;
            delta / dataset.settings.hca_count_scale
        }
        Samples::Stv(s) => stv_integral(s, spec.exponent_n, period)?,
        Samples::Dhm(_) => {
            return Err(Error::MissingSeries {
                radiator: radiator_id.into(),
                kind: DeviceKind::Dhm,
            })
        }
    };
    Ok(NormalizedTempIntegral {
        radiator_id: radiator_id.into(),
        period_index: period.index,
        value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn period(hours: i64) -> IntegrationPeriod {
        IntegrationPeriod {
            index: 0,
            start: 0,
            end: hours * 3600,
        }
    }

    fn constant_pair(diff: f64, hours: i64) -> Vec<TempPair> {
        (0..=hours)
            .map(|h| TempPair {
                t: h * 3600,
                hot: 20.0 + diff,
                cold: 20.0,
            })
            .collect()
    }

    fn constant_stv(inlet: f64, room: f64, hours: i64) -> Vec<StvSample> {
        (0..=hours * 12)
            .map(|k| StvSample {
                t: k * 300,
                inlet_temp: inlet,
                room_temp: room,
                valve_position: 100.0,
            })
            .collect()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    // Reference values from mpmath at 30 digits:
    //   1200 * 0.5**1.3            = 487.351437813741313...
    //   1000 * 1.2**1.3            = 1267.46396212710980...
    //   500 * 1.2**1.3             = 633.731981063554902...
    //   10 * 0.5**1.3              = 4.06126198178117761...
    //   2000 * 0.5**1.3 * 2 / 1000 = 1.62450479271247104...
    #[test]
    fn radiator_output() {
        assert_eq!(en442_power(1200.0, 1.3, 70.0, 20.0), 1200.0);
        assert!(close(en442_power(1200.0, 1.3, 45.0, 20.0), 487.351_437_813_741, 1e-9));
        assert_eq!(en442_power(1200.0, 1.3, 20.0, 20.0), 0.0);
        assert_eq!(en442_power(1200.0, 1.3, 10.0, 20.0), 0.0);
    }

    #[test]
    fn rating_conversion() {
        assert!(close(kq_from_en442(1000.0, 1.3), 1_267.463_962_127_11, 1e-6));
        assert!(close(kq_from_en442(1000.0, 1.0), 1200.0, 1e-9));
        assert!(close(kq_from_en442(500.0, 1.3), 633.731_981_063_555, 1e-6));
    }

    #[test]
    fn allocation_units() {
        let p = period(10);
        let u = hca_allocation_units(&constant_pair(60.0, 10), 1.3, Rating::UNIT, &p).unwrap();
        assert!(close(u, 10.0, 1e-12));
        let u = hca_allocation_units(&constant_pair(30.0, 10), 1.3, Rating::UNIT, &p).unwrap();
        assert!(close(u, 4.061_261_981_781_18, 1e-9));
        let r = Rating {
            kq: 2.0,
            kc: 0.5,
            kt: 1.0,
        };
        let u = hca_allocation_units(&constant_pair(60.0, 10), 1.3, r, &p).unwrap();
        assert!(close(u, 10.0, 1e-12));
        // heater colder than air
        let u = hca_allocation_units(&constant_pair(-5.0, 10), 1.3, Rating::UNIT, &p).unwrap();
        assert_eq!(u, 0.0);
    }

    #[test]
    fn allocator_energy() {
        assert!(close(hca_energy_term(10.0, 1000.0), 10.0, 1e-12));
        assert!(close(hca_energy_term(4.0613, 1000.0), 4.0613, 1e-12));
        assert_eq!(hca_energy_term(0.0, 1234.0), 0.0);
    }

    #[test]
    fn valve_energy() {
        let p = period(2);
        let e = stv_energy_term(&constant_stv(70.0, 20.0, 2), 1.3, 2000.0, &p).unwrap();
        assert!(close(e, 4.0, 1e-12));
        let e = stv_energy_term(&constant_stv(45.0, 20.0, 2), 1.3, 2000.0, &p).unwrap();
        assert!(close(e, 1.624_504_792_712_47, 1e-9));
        let e = stv_energy_term(&constant_stv(21.0, 21.0, 2), 1.3, 2000.0, &p).unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn uncovered_period_is_an_error() {
        let p = period(5);
        assert_eq!(
            stv_integral(&constant_stv(70.0, 20.0, 2), 1.3, &p),
            Err(Error::UncoveredPeriod { period: 0 })
        );
    }

    #[test]
    fn first_power_of_linear_ramp_is_exact() {
        // dT rises from 0 to 50 K over 4 h in 5 min steps.
        let s: Vec<StvSample> = (0..=48)
            .map(|k| StvSample {
                t: k * 300,
                inlet_temp: 20.0 + 50.0 * k as f64 / 48.0,
                room_temp: 20.0,
                valve_position: 100.0,
            })
            .collect();
        let got = stv_integral(&s, 1.0, &period(4)).unwrap();
        assert!(close(got, 2.0, 1e-14));
    }

    #[test]
    fn monotone_in_excess_temperature() {
        let p = period(3);
        let mut prev = -1.0;
        for k in 0..40 {
            let v = stv_integral(&constant_stv(20.0 + k as f64 * 2.5, 20.0, 3), 1.3, &p).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }
}
