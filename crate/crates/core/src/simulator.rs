//! Seeded synthetic heating season.
//!
//! Each radiator heats its own room. The room air follows a first-order
//! balance against the outdoor temperature, a thermostatic valve throttles
//! the inlet temperature, and the radiator mean temperature lags the inlet
//! with a configurable time constant. Devices are emulated from the true
//! traces: valves sample inlet and room temperature with Gaussian noise,
//! allocators accumulate units from the surface temperature and are read as
//! floored integer counts, and the central heat meter measures the sum of
//! the radiator powers inflated by the pipework loss.
//!
//! Random draws use separate ChaCha streams for parameters, weather, valve
//! patterns and sensor noise, so changing a noise level leaves the true
//! traces untouched.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal, StandardUniform};
use serde::{Deserialize, Serialize};

use crate::domain::{
    partition_periods, Cadence, Dataset, DatasetSettings, DeviceTimeSeries, DhmSample, HcaSample, Method,
    RadiatorSpec, Samples, StvSample, Timestamp, SECONDS_PER_HOUR,
};
use crate::metering::WaterProperties;
use crate::quadrature;
use crate::thermal::{normalized_power, ALLOCATOR_BASE_K, RADIATOR_BASE_K};
use crate::Error;

const DAY_S: i64 = 86_400;
/// Occupant schedules are spread over this window so that rooms do not
/// switch in lockstep.
const SCHEDULE_SPREAD_S: i64 = 4 * 3600;
const STREAM_PARAMS: u64 = 0;
const STREAM_WEATHER: u64 = 1;
const STREAM_VALVES: u64 = 2;
const STREAM_NOISE: u64 = 3;

/// Supply temperature schedule of the heater.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum HeaterMode {
    Constant { supply_c: f64 },
    /// Outdoor-compensated curve, 70 °C at 0 °C down to 40 °C at 20 °C.
    Climatic,
}

impl Default for HeaterMode {
    fn default() -> Self {
        HeaterMode::Constant { supply_c: 55.0 }
    }
}

impl HeaterMode {
    pub fn supply_temp(&self, t_out: f64) -> f64 {
        match *self {
            HeaterMode::Constant { supply_c } => supply_c,
            HeaterMode::Climatic => climatic_supply_temp(t_out),
        }
    }
}

/// Heater supply temperature on the climatic curve, °C.
pub fn climatic_supply_temp(t_out: f64) -> f64 {
    (70.0 - 1.5 * t_out).clamp(40.0, 70.0)
}

/// Daily sinusoid with AR(1) noise, °C.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutdoorSpec {
    pub mean_c: f64,
    pub amplitude_c: f64,
    /// Hour of the daily maximum.
    pub peak_hour: f64,
    /// Stationary standard deviation of the noise.
    pub noise_c: f64,
    /// Correlation time of the noise, hours.
    pub noise_corr_h: f64,
}

impl Default for OutdoorSpec {
    fn default() -> Self {
        Self {
            mean_c: 5.0,
            amplitude_c: 5.0,
            peak_hour: 15.0,
            noise_c: 1.0,
            noise_corr_h: 3.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValveMode {
    /// Room temperature set-point.
    Rsp,
    /// Daily valve position pattern.
    Psp,
    /// RSP on even days, PSP on odd days.
    Mixed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValveControl {
    pub mode: ValveMode,
    /// 06:00 to 22:00, °C.
    pub day_setpoint_c: f64,
    pub night_setpoint_c: f64,
    /// Set-point increase per floor above ground, K.
    pub floor_step_k: f64,
    pub dead_band_k: f64,
    /// Error that moves the valve from half to fully open, K.
    pub proportional_band_k: f64,
    /// Equal slots per day of the position pattern.
    pub pattern_slots: usize,
    /// Time constant of the valve actuator, s.
    pub actuator_tau_s: f64,
}

impl Default for ValveControl {
    fn default() -> Self {
        Self {
            mode: ValveMode::Mixed,
            day_setpoint_c: 22.0,
            night_setpoint_c: 20.0,
            floor_step_k: 0.5,
            dead_band_k: 0.2,
            proportional_band_k: 2.0,
            pattern_slots: 4,
            actuator_tau_s: 900.0,
        }
    }
}

/// Building layout and ground-truth radiator population.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildingSpec {
    pub radiators: usize,
    pub floors: usize,
    /// Number of accounting subsets; radiators are split evenly in order.
    pub subsets: usize,
    pub q_n50_range_w: (f64, f64),
    pub exponent_n: f64,
    /// True surface coupling range of the allocators.
    pub coupling_range: (f64, f64),
    /// True over nominal thermal output, drawn uniformly.
    pub deviation_range: (f64, f64),
    /// Explicit deviation factors, overriding the range.
    pub deviation_factors: Option<Vec<f64>>,
}

impl Default for BuildingSpec {
    fn default() -> Self {
        Self {
            radiators: 20,
            floors: 4,
            subsets: 20,
            q_n50_range_w: (600.0, 2000.0),
            exponent_n: 1.3,
            coupling_range: (0.7, 1.0),
            deviation_range: (1.1, 1.4),
            deviation_factors: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThermalSpec {
    /// Time constant of the radiator mean temperature, s. Zero is
    /// instantaneous.
    pub radiator_tau_s: f64,
    /// Time constant of the inlet pipe, s.
    pub pipe_tau_s: f64,
    /// Time constant of the room air, s.
    pub room_tau_s: f64,
    /// Inlet excess scales with valve opening to this power.
    pub throttle_exponent: f64,
    /// Supply temperature drop per floor of riser, K.
    pub riser_drop_k: f64,
    /// Temperature drop across a radiator as a share of its inlet excess.
    pub radiator_drop_share: f64,
}

impl Default for ThermalSpec {
    fn default() -> Self {
        Self {
            radiator_tau_s: 1800.0,
            pipe_tau_s: 600.0,
            room_tau_s: 4.0 * SECONDS_PER_HOUR,
            throttle_exponent: 0.5,
            riser_drop_k: 0.5,
            radiator_drop_share: 0.3,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Temperature sensor standard deviation, K.
    pub temp_sigma_k: f64,
    /// Relative standard deviation of meter flow readings.
    pub flow_sigma_rel: f64,
    /// Allocator display deviation, relative bound of a per-device bias.
    pub hca_display_dev: f64,
}

impl NoiseSpec {
    pub const MODERATE: NoiseSpec = NoiseSpec {
        temp_sigma_k: 0.1,
        flow_sigma_rel: 0.005,
        hca_display_dev: 0.03,
    };
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Season start, Unix seconds.
    pub start: Timestamp,
    pub duration_days: f64,
    pub step_s: i64,
    /// Allocator reading interval, s.
    pub hca_read_s: i64,
    /// Integration periods per hour.
    pub sampling_frequency: f64,
    pub heater: HeaterMode,
    pub outdoor: OutdoorSpec,
    pub building: BuildingSpec,
    pub valves: ValveControl,
    pub thermal: ThermalSpec,
    /// Distribution loss as a fraction of the radiator energy.
    pub heat_loss: f64,
    pub noise: NoiseSpec,
    /// Allocator counts per unit-rated unit.
    pub hca_count_scale: f64,
    /// Also emit a heat meter on every radiator.
    pub radiator_meters: bool,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            // 2021-01-11T00:00:00Z
            start: 1_610_323_200,
            duration_days: 30.0,
            step_s: 300,
            hca_read_s: 10_800,
            sampling_frequency: 1.0 / 3.0,
            heater: HeaterMode::default(),
            outdoor: OutdoorSpec::default(),
            building: BuildingSpec::default(),
            valves: ValveControl::default(),
            thermal: ThermalSpec::default(),
            heat_loss: 0.0,
            noise: NoiseSpec::default(),
            hca_count_scale: 999.0,
            radiator_meters: false,
            seed: 0,
        }
    }
}

fn invalid(field: &str, reason: &str) -> Error {
    Error::InvalidConfig {
        field: field.into(),
        reason: reason.into(),
    }
}

impl ScenarioConfig {
    /// Noise-free, loss-free, lag-free season whose sampled data satisfy the
    /// linear models exactly.
    pub fn exact(radiators: usize, days: f64, seed: u64) -> Self {
        let mut c = Self {
            duration_days: days,
            hca_count_scale: 1e9,
            seed,
            ..Self::default()
        };
        c.building.radiators = radiators;
        c.building.subsets = radiators;
        c.thermal.radiator_tau_s = 0.0;
        c.outdoor.noise_c = 0.5;
        c
    }

    pub fn duration_s(&self) -> i64 {
        libm::round(self.duration_days * DAY_S as f64) as i64
    }

    pub fn validate(&self) -> Result<(), Error> {
        let b = &self.building;
        let t = &self.thermal;
        let finite_range = |r: (f64, f64)| r.0.is_finite() && r.1.is_finite() && r.0 <= r.1;
        if !(self.duration_days >= 1.0) || !self.duration_days.is_finite() {
            return Err(invalid("duration_days", "must be at least 1"));
        }
        if self.step_s <= 0 || self.step_s > 3600 {
            return Err(invalid("step_s", "must be in 1..=3600"));
        }
        if self.hca_read_s <= 0 || self.hca_read_s % self.step_s != 0 {
            return Err(invalid("hca_read_s", "must be a positive multiple of step_s"));
        }
        if !(self.sampling_frequency > 0.0) || !self.sampling_frequency.is_finite() {
            return Err(invalid("sampling_frequency", "must be positive"));
        }
        if !(0.0..=0.5).contains(&self.heat_loss) {
            return Err(invalid("heat_loss", "must be in [0, 0.5]"));
        }
        if b.radiators == 0 {
            return Err(invalid("building.radiators", "must be at least 1"));
        }
        if b.floors == 0 {
            return Err(invalid("building.floors", "must be at least 1"));
        }
        if b.subsets == 0 || b.subsets > b.radiators {
            return Err(invalid("building.subsets", "must be in 1..=radiators"));
        }
        if !finite_range(b.q_n50_range_w) || !(b.q_n50_range_w.0 > 0.0) {
            return Err(invalid("building.q_n50_range_w", "must be a positive range"));
        }
        if !(1.0..=2.0).contains(&b.exponent_n) {
            return Err(invalid("building.exponent_n", "must be in [1, 2]"));
        }
        if !finite_range(b.coupling_range) || !(b.coupling_range.0 > 0.0) || b.coupling_range.1 > 1.0 {
            return Err(invalid("building.coupling_range", "must be within (0, 1]"));
        }
        match &b.deviation_factors {
            Some(d) if d.len() != b.radiators => {
                return Err(invalid("building.deviation_factors", "needs one factor per radiator"));
            }
            Some(d) if d.iter().any(|x| !(*x > 0.0) || !x.is_finite()) => {
                return Err(invalid("building.deviation_factors", "must be positive"));
            }
            None if !finite_range(b.deviation_range) || !(b.deviation_range.0 > 0.0) => {
                return Err(invalid("building.deviation_range", "must be a positive range"));
            }
            _ => {}
        }
        if let HeaterMode::Constant { supply_c } = self.heater {
            if !(30.0..=90.0).contains(&supply_c) {
                return Err(invalid("heater.supply_c", "must be in [30, 90]"));
            }
        }
        if !(t.radiator_tau_s == 0.0 || t.radiator_tau_s >= 60.0) {
            return Err(invalid("thermal.radiator_tau_s", "must be 0 or at least 60"));
        }
        if !(t.pipe_tau_s >= 0.0) {
            return Err(invalid("thermal.pipe_tau_s", "must be non-negative"));
        }
        if !(t.room_tau_s >= 4.0 * self.step_s as f64) {
            return Err(invalid("thermal.room_tau_s", "must be at least four steps"));
        }
        if !(t.throttle_exponent > 0.0) {
            return Err(invalid("thermal.throttle_exponent", "must be positive"));
        }
        if !(t.riser_drop_k >= 0.0) || !(t.radiator_drop_share > 0.0 && t.radiator_drop_share <= 1.0) {
            return Err(invalid("thermal", "drops must be non-negative, share in (0, 1]"));
        }
        if !(self.valves.actuator_tau_s >= 0.0) {
            return Err(invalid("valves.actuator_tau_s", "must be non-negative"));
        }
        if self.valves.pattern_slots == 0 || !(self.valves.proportional_band_k > 0.0) || !(self.valves.dead_band_k >= 0.0)
        {
            return Err(invalid("valves", "pattern slots and bands must be positive"));
        }
        let n = &self.noise;
        if !(n.temp_sigma_k >= 0.0) || !(n.flow_sigma_rel >= 0.0) || !(0.0..0.5).contains(&n.hca_display_dev) {
            return Err(invalid("noise", "levels must be non-negative, display deviation below 0.5"));
        }
        if !(self.hca_count_scale >= 1.0) || self.hca_count_scale > 1e12 {
            return Err(invalid("hca_count_scale", "must be in [1, 1e12]"));
        }
        if !(self.outdoor.noise_c >= 0.0) || !(self.outdoor.noise_corr_h > 0.0) {
            return Err(invalid("outdoor", "noise must be non-negative with positive correlation time"));
        }
        Ok(())
    }
}

/// What the devices could not see.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub radiator_ids: Vec<String>,
    /// Fluid-side thermal parameter, W at a 50 K inlet excess.
    pub theta_true: Vec<f64>,
    /// Parameter of a unit-rated allocator reading, W per unit-hour.
    pub theta_hca_true: Vec<f64>,
    /// True over nominal output.
    pub deviation: Vec<f64>,
    /// Energy per period and radiator, kWh.
    pub radiator_energy: Vec<Vec<f64>>,
    /// Energy entering the distribution per period, kWh.
    pub total_energy: Vec<f64>,
    pub heat_loss: f64,
}

impl GroundTruth {
    /// True parameters in the frame of `method`, W.
    pub fn theta(&self, method: Method) -> &[f64] {
        match method {
            Method::Hca => &self.theta_hca_true,
            Method::Stv => &self.theta_true,
        }
    }

    /// Season energy per radiator, kWh.
    pub fn radiator_totals(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.radiator_ids.len()];
        for row in &self.radiator_energy {
            for (o, e) in out.iter_mut().zip(row) {
                *o += e;
            }
        }
        out
    }
}

/// Per-radiator draws.
struct Body {
    spec: RadiatorSpec,
    theta: f64,
    coupling: f64,
    display_bias: f64,
    floor: usize,
    /// Offset of the occupant's daily schedule, s.
    phase_s: i64,
    /// Room heat loss coefficient, W/K.
    ua: f64,
}

/// Uniform on `[lo, hi]`.
fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    let u: f64 = StandardUniform.sample(rng);
    lo + (hi - lo) * u
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn radiator_id(j: usize, k: usize) -> String {
    if k < 100 {
        format!("r{:02}", j + 1)
    } else {
        format!("r{:04}", j + 1)
    }
}

fn draw_bodies(cfg: &ScenarioConfig) -> Vec<Body> {
    let b = &cfg.building;
    let k = b.radiators;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(STREAM_PARAMS);
    let n = b.exponent_n;
    (0..k)
        .map(|j| {
            let q_n50 = libm::round(uniform(&mut rng, b.q_n50_range_w) / 10.0) * 10.0;
            let coupling = uniform(&mut rng, b.coupling_range);
            let drawn = uniform(&mut rng, b.deviation_range);
            let deviation = b.deviation_factors.as_ref().map_or(drawn, |d| d[j]);
            let bias = uniform(&mut rng, (-cfg.noise.hca_display_dev, cfg.noise.hca_display_dev));
            let room = uniform(&mut rng, (0.8, 1.2));
            let phase = uniform(&mut rng, (0.0, SCHEDULE_SPREAD_S as f64));
            let theta = deviation * q_n50;
            Body {
                spec: RadiatorSpec {
                    id: radiator_id(j, k),
                    q_n50,
                    exponent_n: n,
                    rating_kq: q_n50 * libm::pow(ALLOCATOR_BASE_K / RADIATOR_BASE_K, n),
                    rating_kc: libm::pow(coupling, -n),
                    rating_kt: 1.0,
                    theta_prior: q_n50,
                    subset_id: format!("s{:02}", j * b.subsets / k + 1),
                },
                theta,
                coupling,
                display_bias: bias,
                floor: j * b.floors / k,
                phase_s: libm::round(phase / cfg.step_s as f64) as i64 * cfg.step_s,
                // full opening at the mean outdoor temperature holds the
                // room some 22 K above it
                ua: room * theta * 0.47 / 22.0,
            }
        })
        .collect()
}

fn outdoor_trace(cfg: &ScenarioConfig, times: &[Timestamp]) -> Vec<f64> {
    let o = &cfg.outdoor;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(STREAM_WEATHER);
    let a = libm::exp(-(cfg.step_s as f64) / (o.noise_corr_h * SECONDS_PER_HOUR));
    let innov = o.noise_c * libm::sqrt(1.0 - a * a);
    let mut noise = o.noise_c * gauss(&mut rng);
    times
        .iter()
        .map(|&t| {
            let hour = (t.rem_euclid(DAY_S)) as f64 / SECONDS_PER_HOUR;
            let phase = 2.0 * core::f64::consts::PI * (hour - o.peak_hour) / 24.0;
            let v = o.mean_c + o.amplitude_c * libm::cos(phase) + noise;
            noise = a * noise + innov * gauss(&mut rng);
            v
        })
        .collect()
}

/// Valve position pattern per day and radiator.
fn valve_patterns(cfg: &ScenarioConfig, days: usize, k: usize) -> Vec<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(STREAM_VALVES);
    (0..days)
        .map(|_| {
            (0..k)
                .map(|_| {
                    (0..cfg.valves.pattern_slots)
                        .map(|_| {
                            let u: f64 = StandardUniform.sample(&mut rng);
                            libm::floor(u * 5.0).min(4.0) * 0.25
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Simulates a season and returns the emulated dataset with its ground truth.
pub fn simulate_season(cfg: &ScenarioConfig) -> Result<(Dataset, GroundTruth), Error> {
    cfg.validate()?;
    let bodies = draw_bodies(cfg);
    let k = bodies.len();
    let dur = cfg.duration_s();
    let step = cfg.step_s;
    let n_steps = (dur / step) as usize;
    let end = cfg.start + n_steps as i64 * step;
    let times: Vec<Timestamp> = (0..=n_steps).map(|i| cfg.start + i as i64 * step).collect();
    let t_out = outdoor_trace(cfg, &times);
    let days = ((n_steps as i64 * step + SCHEDULE_SPREAD_S) / DAY_S) as usize + 1;
    let patterns = valve_patterns(cfg, days, k);
    let water = WaterProperties::default();
    let th = &cfg.thermal;
    let vc = &cfg.valves;
    let dt = step as f64;

    // seconds since the season start on the occupant's clock
    let local = |b: &Body, t: Timestamp| t - cfg.start + b.phase_s;
    let setpoint = |b: &Body, t: Timestamp| {
        let hour = (t + b.phase_s).rem_euclid(DAY_S) / 3600;
        let base = if (6..22).contains(&hour) {
            vc.day_setpoint_c
        } else {
            vc.night_setpoint_c
        };
        base + vc.floor_step_k * b.floor as f64
    };
    let use_pattern = |b: &Body, t: Timestamp| match vc.mode {
        ValveMode::Rsp => false,
        ValveMode::Psp => true,
        ValveMode::Mixed => (local(b, t) / DAY_S) % 2 == 1,
    };
    let emit = |b: &Body, excess: f64| b.theta * normalized_power(excess, RADIATOR_BASE_K, b.spec.exponent_n);

    // state
    let mut t_air: Vec<f64> = bodies.iter().map(|b| setpoint(b, cfg.start)).collect();
    let mut valve = vec![0.5; k];
    let mut command = vec![0.5; k];
    let mut t_in = vec![0.0; k];
    let mut excess = vec![0.0; k];

    // true traces, [step][radiator]
    let mut tr_in = Vec::with_capacity(n_steps + 1);
    let mut tr_air: Vec<Vec<f64>> = Vec::with_capacity(n_steps + 1);
    let mut tr_valve = Vec::with_capacity(n_steps + 1);
    let mut tr_power = Vec::with_capacity(n_steps + 1);
    let mut tr_rate = Vec::with_capacity(n_steps + 1);
    let mut tr_supply = Vec::with_capacity(n_steps + 1);

    let pipe_decay = if th.pipe_tau_s > 0.0 {
        libm::exp(-dt / th.pipe_tau_s)
    } else {
        0.0
    };
    let valve_decay = if vc.actuator_tau_s > 0.0 {
        libm::exp(-dt / vc.actuator_tau_s)
    } else {
        0.0
    };
    let substeps = libm::ceil(dt / 60.0) as usize;
    let h = dt / substeps as f64;

    for (i, &t) in times.iter().enumerate() {
        let supply = cfg.heater.supply_temp(t_out[i]);
        if i > 0 {
            for (j, b) in bodies.iter().enumerate() {
                let n = b.spec.exponent_n;
                let emitted = emit(b, excess[j]);
                t_air[j] += dt / th.room_tau_s * (emitted / b.ua - (t_air[j] - t_out[i - 1]));
                if th.radiator_tau_s > 0.0 {
                    let drive = normalized_power(t_in[j] - tr_air[i - 1][j], RADIATOR_BASE_K, n);
                    for _ in 0..substeps {
                        let d = drive - normalized_power(excess[j], RADIATOR_BASE_K, n);
                        excess[j] = (excess[j] + h * RADIATOR_BASE_K / th.radiator_tau_s * d).max(0.0);
                    }
                }
            }
        }
        let mut row_in = vec![0.0; k];
        let mut row_power = vec![0.0; k];
        let mut row_rate = vec![0.0; k];
        for (j, b) in bodies.iter().enumerate() {
            if use_pattern(b, t) {
                let day = (local(b, t) / DAY_S) as usize;
                let slot = (local(b, t).rem_euclid(DAY_S) as usize * vc.pattern_slots) / DAY_S as usize;
                command[j] = patterns[day][j][slot];
            } else {
                let e = setpoint(b, t) - t_air[j];
                if libm::fabs(e) > vc.dead_band_k {
                    command[j] = (0.5 + e / vc.proportional_band_k).clamp(0.0, 1.0);
                }
            }
            valve[j] = if i == 0 {
                command[j]
            } else {
                command[j] + (valve[j] - command[j]) * valve_decay
            };
            let riser = supply - th.riser_drop_k * b.floor as f64;
            let open = libm::pow(valve[j], th.throttle_exponent);
            let target = t_air[j] + open * (riser - t_air[j]).max(0.0);
            t_in[j] = if i == 0 {
                target
            } else {
                target + (t_in[j] - target) * pipe_decay
            };
            if i == 0 || th.radiator_tau_s == 0.0 {
                excess[j] = (t_in[j] - t_air[j]).max(0.0);
            }
            row_in[j] = t_in[j];
            row_power[j] = emit(b, t_in[j] - t_air[j]);
            let surface = b.coupling * excess[j];
            row_rate[j] = (1.0 + b.display_bias) * normalized_power(surface, ALLOCATOR_BASE_K, b.spec.exponent_n);
        }
        tr_in.push(row_in);
        tr_air.push(t_air.clone());
        tr_valve.push(valve.clone());
        tr_power.push(row_power);
        tr_rate.push(row_rate);
        tr_supply.push(supply);
    }

    let mut noise = ChaCha8Rng::seed_from_u64(cfg.seed);
    noise.set_stream(STREAM_NOISE);
    let sigma_t = cfg.noise.temp_sigma_k;
    let mut series = Vec::with_capacity(2 * k + 1);

    for (j, b) in bodies.iter().enumerate() {
        let samples = times
            .iter()
            .enumerate()
            .map(|(i, &t)| StvSample {
                t,
                inlet_temp: tr_in[i][j] + sigma_t * gauss(&mut noise),
                room_temp: tr_air[i][j] + sigma_t * gauss(&mut noise),
                valve_position: 100.0 * tr_valve[i][j],
            })
            .collect();
        series.push(DeviceTimeSeries {
            device_id: format!("stv-{}", b.spec.id),
            radiator_id: Some(b.spec.id.clone()),
            samples: Samples::Stv(samples),
        });
    }

    let every = (cfg.hca_read_s / step) as usize;
    for (j, b) in bodies.iter().enumerate() {
        let mut units = 0.0;
        let mut samples = Vec::with_capacity(n_steps / every + 2);
        for (i, &t) in times.iter().enumerate() {
            if i > 0 {
                units += 0.5 * (tr_rate[i - 1][j] + tr_rate[i][j]) * dt / SECONDS_PER_HOUR;
            }
            if i % every == 0 || i == n_steps {
                samples.push(HcaSample {
                    t,
                    count: libm::floor(units * cfg.hca_count_scale) as u64,
                });
            }
        }
        series.push(DeviceTimeSeries {
            device_id: format!("hca-{}", b.spec.id),
            radiator_id: Some(b.spec.id.clone()),
            samples: Samples::Hca(samples),
        });
    }

    let sigma_f = cfg.noise.flow_sigma_rel;
    let central_drop = 10.0;
    let mut energy = 0.0;
    let mut prev: Option<(Timestamp, f64)> = None;
    let central: Vec<DhmSample> = times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let power = (1.0 + cfg.heat_loss) * tr_power[i].iter().sum::<f64>();
            let flow = if power > 0.0 {
                water.flow_for(power, central_drop) * (1.0 + sigma_f * gauss(&mut noise)).max(0.0)
            } else {
                0.0
            };
            let drop = if flow > 0.0 { central_drop } else { 0.0 };
            let measured = water.power(flow, drop);
            if let Some((t0, p0)) = prev {
                energy += 0.5 * (p0 + measured) * (t - t0) as f64 / SECONDS_PER_HOUR / 1000.0;
            }
            prev = Some((t, measured));
            DhmSample {
                t,
                flow,
                inlet_temp: tr_supply[i],
                outlet_temp: tr_supply[i] - drop,
                energy_kwh: energy,
            }
        })
        .collect();
    series.push(DeviceTimeSeries {
        device_id: String::from("dhm-central"),
        radiator_id: None,
        samples: Samples::Dhm(central),
    });

    if cfg.radiator_meters {
        let cutoff = DatasetSettings::default().cutoff_l_per_h;
        for (j, b) in bodies.iter().enumerate() {
            let mut energy = 0.0;
            let mut prev: Option<(Timestamp, f64)> = None;
            let samples = times
                .iter()
                .enumerate()
                .map(|(i, &t)| {
                    let drop = th.radiator_drop_share * (tr_in[i][j] - tr_air[i][j]).max(0.0);
                    let mut flow = if drop > 0.0 {
                        water.flow_for(tr_power[i][j], drop) * (1.0 + sigma_f * gauss(&mut noise)).max(0.0)
                    } else {
                        0.0
                    };
                    if flow < cutoff {
                        flow = 0.0;
                    }
                    let measured = water.power(flow, drop);
                    if let Some((t0, p0)) = prev {
                        energy += 0.5 * (p0 + measured) * (t - t0) as f64 / SECONDS_PER_HOUR / 1000.0;
                    }
                    prev = Some((t, measured));
                    DhmSample {
                        t,
                        flow,
                        inlet_temp: tr_in[i][j],
                        outlet_temp: tr_in[i][j] - drop,
                        energy_kwh: energy,
                    }
                })
                .collect();
            series.push(DeviceTimeSeries {
                device_id: format!("dhm-{}", b.spec.id),
                radiator_id: Some(b.spec.id.clone()),
                samples: Samples::Dhm(samples),
            });
        }
    }

    let periods = partition_periods((cfg.start, end), cfg.sampling_frequency)?;
    let settings = DatasetSettings {
        water,
        hca_count_scale: cfg.hca_count_scale,
        cadence: Cadence {
            hca_s: cfg.hca_read_s,
            stv_s: step,
            dhm_s: step,
            ..Cadence::default()
        },
        ..DatasetSettings::default()
    };
    let radiators: Vec<RadiatorSpec> = bodies.iter().map(|b| b.spec.clone()).collect();
    let dataset = Dataset::new(radiators, series, periods, settings)?;

    let radiator_energy: Vec<Vec<f64>> = dataset
        .periods
        .iter()
        .map(|p| {
            (0..k)
                .map(|j| {
                    quadrature::integrate(&times, |t| *t, |t| tr_power[((t - cfg.start) / step) as usize][j], p.start, p.end)
                        .map(|ws| ws / SECONDS_PER_HOUR / 1000.0)
                        .ok_or(Error::UncoveredPeriod { period: p.index })
                })
                .collect::<Result<Vec<f64>, Error>>()
        })
        .collect::<Result<_, _>>()?;
    let total_energy = radiator_energy
        .iter()
        .map(|row| (1.0 + cfg.heat_loss) * row.iter().sum::<f64>())
        .collect();
    let truth = GroundTruth {
        radiator_ids: bodies.iter().map(|b| b.spec.id.clone()).collect(),
        theta_true: bodies.iter().map(|b| b.theta).collect(),
        theta_hca_true: bodies
            .iter()
            .map(|b| {
                let n = b.spec.exponent_n;
                b.theta * libm::pow(ALLOCATOR_BASE_K / (RADIATOR_BASE_K * b.coupling), n) / (1.0 + b.display_bias)
            })
            .collect(),
        deviation: bodies.iter().map(|b| b.theta / b.spec.q_n50).collect(),
        radiator_energy,
        total_energy,
        heat_loss: cfg.heat_loss,
    };
    Ok((dataset, truth))
}
