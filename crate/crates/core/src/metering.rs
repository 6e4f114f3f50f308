//! Reference thermal energy from direct heat meters, with the correction
//! for flows below the meter's low-flow cut-off.

use serde::{Deserialize, Serialize};

use crate::domain::{DhmSample, IntegrationPeriod, SECONDS_PER_HOUR};
use crate::quadrature;
use crate::Error;

pub const DEFAULT_CUTOFF_L_PER_H: f64 = 2.5;
/// A zero-flow episode must last longer than this before the correction applies.
pub const CUTOFF_DELAY_S: i64 = 3600;
/// Minimum inlet/outlet difference for the correction, K.
pub const CUTOFF_MIN_DELTA_T: f64 = 8.0;

const LITRES_PER_HOUR_TO_M3_PER_S: f64 = 1.0 / 3.6e6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaterProperties {
    /// kg/m³
    pub density: f64,
    /// J/(kg·K)
    pub specific_heat: f64,
    pub rel_u_density: f64,
    pub rel_u_specific_heat: f64,
}

impl Default for WaterProperties {
    fn default() -> Self {
        Self {
            density: 1000.0,
            specific_heat: 4186.0,
            rel_u_density: 0.0005,
            rel_u_specific_heat: 0.0075,
        }
    }
}

impl WaterProperties {
    pub fn is_valid(&self) -> bool {
        (900.0..=1010.0).contains(&self.density)
            && (4100.0..=4300.0).contains(&self.specific_heat)
            && self.rel_u_density >= 0.0
            && self.rel_u_specific_heat >= 0.0
    }

    /// Thermal power carried by `flow` L/h at a temperature drop `delta_t`, W.
    pub fn power(&self, flow_l_per_h: f64, delta_t: f64) -> f64 {
        self.density * flow_l_per_h * LITRES_PER_HOUR_TO_M3_PER_S * self.specific_heat * delta_t
    }

    /// Flow that carries `power_w` at `delta_t`, L/h.
    pub fn flow_for(&self, power_w: f64, delta_t: f64) -> f64 {
        power_w / (self.density * LITRES_PER_HOUR_TO_M3_PER_S * self.specific_heat * delta_t)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReferenceEnergy {
    /// Metered energy including the cut-off correction, kWh.
    pub energy_kwh: f64,
    /// The cut-off correction alone, kWh.
    pub correction_kwh: f64,
}

/// Instantaneous cut-off correction at every sample, W.
///
/// The zero-flow clock starts at the first sample of a run of exactly-zero
/// flow readings and resets on any nonzero reading; the correction is active
/// once the clock exceeds one hour and the temperature drop is at least 8 K.
pub fn cutoff_correction(
    samples: &[DhmSample],
    props: &WaterProperties,
    cutoff_l_per_h: f64,
) -> alloc::vec::Vec<f64> {
    let mut zero_since = None;
    samples
        .iter()
        .map(|s| {
            if s.flow != 0.0 {
                zero_since = None;
                return 0.0;
            }
            let since = *zero_since.get_or_insert(s.t);
            let dt = s.delta_t();
            if s.t - since > CUTOFF_DELAY_S && dt >= CUTOFF_MIN_DELTA_T {
                0.5 * props.power(cutoff_l_per_h, dt)
            } else {
                0.0
            }
        })
        .collect()
}

/// Thermal energy through a meter over `period`.
///
/// Signed: a negative temperature drop yields negative power.
pub fn reference_energy(
    samples: &[DhmSample],
    props: &WaterProperties,
    period: &IntegrationPeriod,
    cutoff_l_per_h: f64,
) -> Result<ReferenceEnergy, Error> {
    if !(cutoff_l_per_h > 0.0) {
        return Err(Error::InvalidArgument("cut-off flow must be positive"));
    }
    if let Some(s) = samples.iter().find(|s| s.flow < 0.0) {
        return Err(Error::NegativeFlow { t: s.t });
    }
    let correction = cutoff_correction(samples, props, cutoff_l_per_h);
    let points: alloc::vec::Vec<(i64, f64, f64)> = samples
        .iter()
        .zip(&correction)
        .map(|(s, &q)| (s.t, props.power(s.flow, s.delta_t()), q))
        .collect();
    let integrate = |f: fn(&(i64, f64, f64)) -> f64| {
        quadrature::integrate(&points, |p| p.0, f, period.start, period.end)
            .map(|ws| ws / SECONDS_PER_HOUR / 1000.0)
            .ok_or(Error::UncoveredPeriod {
                period: period.index,
            })
    };
    let correction_kwh = integrate(|p| p.2)?;
    let energy_kwh = integrate(|p| p.1 + p.2)?;
    Ok(ReferenceEnergy {
        energy_kwh,
        correction_kwh,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn series(hours: i64, flow: impl Fn(i64) -> f64, dt: impl Fn(i64) -> f64) -> Vec<DhmSample> {
        (0..=hours * 60)
            .map(|m| DhmSample {
                t: m * 60,
                flow: flow(m),
                inlet_temp: 50.0 + dt(m),
                outlet_temp: 50.0,
                energy_kwh: 0.0,
            })
            .collect()
    }

    fn period(hours: i64) -> IntegrationPeriod {
        IntegrationPeriod {
            index: 0,
            start: 0,
            end: hours * 3600,
        }
    }

    #[test]
    fn constant_flow() {
        let s = series(1, |_| 100.0, |_| 10.0);
        let r = reference_energy(&s, &WaterProperties::default(), &period(1), 2.5).unwrap();
        // 100/3.6e6 m3/s * 1000 * 4186 * 10 = 1162.777... W for one hour
        assert!((r.energy_kwh - 1.162_777_777_777_78).abs() < 1e-12);
        assert_eq!(r.correction_kwh, 0.0);
    }

    #[test]
    fn zero_flow_episode_with_large_drop() {
        let props = WaterProperties::default();
        let s = series(2, |_| 0.0, |_| 10.0);
        let q = cutoff_correction(&s, &props, 2.5);
        // 0.5 * 2.5/3.6e6 * 1000 * 4186 * 10
        let expect = 14.534_722_222_222_2;
        for (sample, q) in s.iter().zip(&q) {
            if sample.t <= 3600 {
                assert_eq!(*q, 0.0);
            } else {
                assert!((q - expect).abs() < 1e-9);
            }
        }
        let r = reference_energy(&s, &props, &period(2), 2.5).unwrap();
        assert!(r.correction_kwh > 0.0);
        assert_eq!(r.energy_kwh, r.correction_kwh);
        // bounded by the full-duration correction
        assert!(r.correction_kwh <= expect * 2.0 / 1000.0);
    }

    #[test]
    fn zero_flow_small_drop_gives_nothing() {
        let s = series(2, |_| 0.0, |_| 5.0);
        let r = reference_energy(&s, &WaterProperties::default(), &period(2), 2.5).unwrap();
        assert_eq!(r, ReferenceEnergy::default());
    }

    #[test]
    fn clock_resets_on_flow() {
        // zero flow except a single nonzero reading at minute 50
        let s = series(2, |m| if m == 50 { 10.0 } else { 0.0 }, |_| 10.0);
        let q = cutoff_correction(&s, &WaterProperties::default(), 2.5);
        for (sample, q) in s.iter().zip(&q) {
            if sample.t <= 51 * 60 + 3600 {
                assert_eq!(*q, 0.0, "at {}", sample.t);
            } else {
                assert!(*q > 0.0);
            }
        }
    }

    #[test]
    fn linear_in_water_properties() {
        let s = series(3, |m| 50.0 + (m % 7) as f64, |m| 5.0 + (m % 11) as f64);
        let a = WaterProperties::default();
        let b = WaterProperties {
            specific_heat: a.specific_heat * 1.02,
            density: a.density * 0.99,
            ..a
        };
        let ea = reference_energy(&s, &a, &period(3), 2.5).unwrap().energy_kwh;
        let eb = reference_energy(&s, &b, &period(3), 2.5).unwrap().energy_kwh;
        assert!((eb / ea - 1.02 * 0.99).abs() < 1e-12);
    }

    #[test]
    fn negative_flow_rejected() {
        let s = series(1, |m| if m == 3 { -1.0 } else { 1.0 }, |_| 1.0);
        assert_eq!(
            reference_energy(&s, &WaterProperties::default(), &period(1), 2.5),
            Err(Error::NegativeFlow { t: 180 })
        );
    }
}
