//! Dataset types, validation and partitioning of a heating season into
//! integration periods.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::metering::{self, WaterProperties};
use crate::Error;

/// Seconds since the Unix epoch, UTC.
pub type Timestamp = i64;

pub const SECONDS_PER_HOUR: f64 = 3600.0;

/// Valid range of any temperature reading, °C.
pub const TEMPERATURE_RANGE: (f64, f64) = (-20.0, 120.0);

/// Static description of one heating body.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiatorSpec {
    pub id: String,
    /// Nominal thermal output at a 50 K excess temperature, W.
    pub q_n50: f64,
    pub exponent_n: f64,
    /// Rating for the radiator's thermal output, W at 60 K.
    pub rating_kq: f64,
    pub rating_kc: f64,
    pub rating_kt: f64,
    /// Prior for the thermal parameter when the temperature difference is
    /// measured on the fluid side, W. Usually the nominal output.
    pub theta_prior: f64,
    pub subset_id: String,
}

impl RadiatorSpec {
    /// Product of the three rating factors of the allocator.
    pub fn rating_product(&self) -> f64 {
        self.rating_kq * self.rating_kc * self.rating_kt
    }

    fn check(&self, out: &mut Vec<Violation>) {
        let mut bad = |field: &'static str, value: f64| {
            out.push(Violation::InvalidRadiator {
                radiator: self.id.clone(),
                field,
                value,
            })
        };
        if !(self.q_n50 > 0.0) {
            bad("q_n50", self.q_n50);
        }
        if !(1.0..=2.0).contains(&self.exponent_n) {
            bad("exponent_n", self.exponent_n);
        }
        if !(self.rating_kq > 0.0) {
            bad("rating_kq", self.rating_kq);
        }
        if !(self.rating_kc > 0.0) {
            bad("rating_kc", self.rating_kc);
        }
        if !(self.rating_kt > 0.0) {
            bad("rating_kt", self.rating_kt);
        }
        if !(self.theta_prior > 0.0) {
            bad("theta_prior", self.theta_prior);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceKind {
    /// Heat cost allocator.
    Hca,
    /// Smart thermostatic valve.
    Stv,
    /// Direct heat meter.
    Dhm,
}

impl DeviceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DeviceKind::Hca => "hca",
            DeviceKind::Stv => "stv",
            DeviceKind::Dhm => "dhm",
        }
    }
}

impl fmt::Display for DeviceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Cumulative allocator reading.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HcaSample {
    pub t: Timestamp,
    pub count: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StvSample {
    pub t: Timestamp,
    /// Fluid temperature at the valve inlet, °C.
    pub inlet_temp: f64,
    /// Room temperature near the valve, °C.
    pub room_temp: f64,
    /// Opening, percent.
    pub valve_position: f64,
}

impl StvSample {
    pub fn excess_temp(&self) -> f64 {
        self.inlet_temp - self.room_temp
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DhmSample {
    pub t: Timestamp,
    /// Volumetric flow, L/h.
    pub flow: f64,
    pub inlet_temp: f64,
    pub outlet_temp: f64,
    /// Cumulative energy register, kWh.
    pub energy_kwh: f64,
}

impl DhmSample {
    pub fn delta_t(&self) -> f64 {
        self.inlet_temp - self.outlet_temp
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "samples", rename_all = "lowercase")]
pub enum Samples {
    Hca(Vec<HcaSample>),
    Stv(Vec<StvSample>),
    Dhm(Vec<DhmSample>),
}

impl Samples {
    pub fn kind(&self) -> DeviceKind {
        match self {
            Samples::Hca(_) => DeviceKind::Hca,
            Samples::Stv(_) => DeviceKind::Stv,
            Samples::Dhm(_) => DeviceKind::Dhm,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Samples::Hca(s) => s.len(),
            Samples::Stv(s) => s.len(),
            Samples::Dhm(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn timestamps(&self) -> Vec<Timestamp> {
        match self {
            Samples::Hca(s) => s.iter().map(|x| x.t).collect(),
            Samples::Stv(s) => s.iter().map(|x| x.t).collect(),
            Samples::Dhm(s) => s.iter().map(|x| x.t).collect(),
        }
    }
}

/// Readings from one device.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceTimeSeries {
    pub device_id: String,
    /// `None` for the building's central heat meter.
    pub radiator_id: Option<String>,
    pub samples: Samples,
}

impl DeviceTimeSeries {
    pub fn kind(&self) -> DeviceKind {
        self.samples.kind()
    }

    pub fn is_central_meter(&self) -> bool {
        self.radiator_id.is_none() && self.kind() == DeviceKind::Dhm
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegrationPeriod {
    pub index: usize,
    pub start: Timestamp,
    pub end: Timestamp,
}

impl IntegrationPeriod {
    pub fn duration_s(&self) -> i64 {
        self.end - self.start
    }

    pub fn duration_h(&self) -> f64 {
        self.duration_s() as f64 / SECONDS_PER_HOUR
    }
}

/// Which device family feeds the sampling matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Hca,
    Stv,
}

impl Method {
    pub fn device_kind(self) -> DeviceKind {
        match self {
            Method::Hca => DeviceKind::Hca,
            Method::Stv => DeviceKind::Stv,
        }
    }

    /// Prior parameter of a radiator for this method, W.
    ///
    /// Allocators are read with unit ratings, so their prior is the rating
    /// product. Valves sense the fluid side, whose prior is the nominal output.
    pub fn prior(self, spec: &RadiatorSpec) -> f64 {
        match self {
            Method::Hca => spec.rating_product(),
            Method::Stv => spec.theta_prior,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Hca => "hca",
            Method::Stv => "stv",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Nominal reading cadence per device kind, seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cadence {
    pub hca_s: i64,
    pub stv_s: i64,
    pub dhm_s: i64,
    /// A gap longer than `gap_factor` cadences leaves a period uncovered.
    pub gap_factor: f64,
}

impl Default for Cadence {
    fn default() -> Self {
        Self {
            hca_s: 3 * 3600,
            stv_s: 300,
            dhm_s: 300,
            gap_factor: 3.0,
        }
    }
}

impl Cadence {
    pub fn max_gap_s(&self, kind: DeviceKind) -> f64 {
        let c = match kind {
            DeviceKind::Hca => self.hca_s,
            DeviceKind::Stv => self.stv_s,
            DeviceKind::Dhm => self.dhm_s,
        };
        c as f64 * self.gap_factor
    }
}

/// Dataset-wide constants needed to interpret the raw readings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSettings {
    pub water: WaterProperties,
    /// Low-flow cut-off of the heat meters, L/h.
    pub cutoff_l_per_h: f64,
    /// Allocator counts per unit-hour of normalized excess temperature.
    pub hca_count_scale: f64,
    pub cadence: Cadence,
}

impl Default for DatasetSettings {
    fn default() -> Self {
        Self {
            water: WaterProperties::default(),
            cutoff_l_per_h: metering::DEFAULT_CUTOFF_L_PER_H,
            hca_count_scale: 999.0,
            cadence: Cadence::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub radiators: Vec<RadiatorSpec>,
    pub series: Vec<DeviceTimeSeries>,
    pub periods: Vec<IntegrationPeriod>,
    /// Total energy delivered to the distribution per period, kWh.
    pub total_energy_per_period: Vec<f64>,
    pub settings: DatasetSettings,
}

impl Dataset {
    /// Builds a dataset, deriving the per-period totals from the central
    /// heat meter, or from the sum of the radiator meters when there is none.
    pub fn new(
        radiators: Vec<RadiatorSpec>,
        series: Vec<DeviceTimeSeries>,
        periods: Vec<IntegrationPeriod>,
        settings: DatasetSettings,
    ) -> Result<Self, Error> {
        let total_energy_per_period = period_totals(&series, &periods, &settings)?;
        Ok(Self {
            radiators,
            series,
            periods,
            total_energy_per_period,
            settings,
        })
    }

    /// Same readings, new partition. Totals are recomputed.
    pub fn repartition(&self, periods: Vec<IntegrationPeriod>) -> Result<Self, Error> {
        let total_energy_per_period = period_totals(&self.series, &periods, &self.settings)?;
        Ok(Self {
            radiators: self.radiators.clone(),
            series: self.series.clone(),
            periods,
            total_energy_per_period,
            settings: self.settings.clone(),
        })
    }

    pub fn radiator(&self, id: &str) -> Option<&RadiatorSpec> {
        self.radiators.iter().find(|r| r.id == id)
    }

    pub fn series_for(&self, radiator_id: &str, kind: DeviceKind) -> Option<&DeviceTimeSeries> {
        self.series
            .iter()
            .find(|s| s.kind() == kind && s.radiator_id.as_deref() == Some(radiator_id))
    }

    pub fn central_meter(&self) -> Option<&DeviceTimeSeries> {
        self.series.iter().find(|s| s.is_central_meter())
    }

    /// First and last timestamp over all series.
    pub fn span(&self) -> Option<(Timestamp, Timestamp)> {
        let mut span: Option<(Timestamp, Timestamp)> = None;
        for s in &self.series {
            let ts = s.samples.timestamps();
            if let (Some(&a), Some(&b)) = (ts.first(), ts.last()) {
                span = Some(match span {
                    None => (a, b),
                    Some((lo, hi)) => (lo.min(a), hi.max(b)),
                });
            }
        }
        span
    }
}

fn period_totals(
    series: &[DeviceTimeSeries],
    periods: &[IntegrationPeriod],
    settings: &DatasetSettings,
) -> Result<Vec<f64>, Error> {
    let meters: Vec<&[DhmSample]> = match series.iter().find(|s| s.is_central_meter()) {
        Some(DeviceTimeSeries {
            samples: Samples::Dhm(s),
            ..
        }) => alloc::vec![s.as_slice()],
        _ => series
            .iter()
            .filter_map(|s| match &s.samples {
                Samples::Dhm(d) if s.radiator_id.is_some() => Some(d.as_slice()),
                _ => None,
            })
            .collect(),
    };
    if meters.is_empty() {
        return Err(Error::MissingSeries {
            radiator: String::from("<central>"),
            kind: DeviceKind::Dhm,
        });
    }
    periods
        .iter()
        .map(|p| {
            meters.iter().try_fold(0.0, |acc, m| {
                metering::reference_energy(m, &settings.water, p, settings.cutoff_l_per_h)
                    .map(|r| acc + r.energy_kwh)
            })
        })
        .collect()
}

/// A broken dataset invariant.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    InvalidRadiator {
        radiator: String,
        field: &'static str,
        value: f64,
    },
    DuplicateRadiator {
        radiator: String,
    },
    EmptySeries {
        device: String,
    },
    NonIncreasingTimestamp {
        device: String,
        t: Timestamp,
    },
    DecreasingCumulative {
        device: String,
        t: Timestamp,
    },
    TemperatureOutOfRange {
        device: String,
        t: Timestamp,
        value: f64,
    },
    ValvePositionOutOfRange {
        device: String,
        t: Timestamp,
        value: f64,
    },
    NegativeFlow {
        device: String,
        t: Timestamp,
        value: f64,
    },
    NonFinite {
        device: String,
        t: Timestamp,
    },
    DanglingRadiator {
        device: String,
        radiator: String,
    },
    DuplicateSeries {
        radiator: String,
        kind: DeviceKind,
    },
    MissingSeries {
        radiator: String,
        kind: DeviceKind,
    },
    MissingCentralMeter,
    InvalidPeriod {
        index: usize,
    },
    PeriodsNotContiguous {
        index: usize,
    },
    TotalsLengthMismatch {
        periods: usize,
        totals: usize,
    },
    UncoveredPeriod {
        device: String,
        period: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            InvalidRadiator { radiator, field, value } => {
                write!(f, "radiator {radiator}: invalid {field} = {value}")
            }
            DuplicateRadiator { radiator } => write!(f, "radiator {radiator} declared twice"),
            EmptySeries { device } => write!(f, "device {device}: no samples"),
            NonIncreasingTimestamp { device, t } => {
                write!(f, "device {device}: timestamp {t} not strictly increasing")
            }
            DecreasingCumulative { device, t } => {
                write!(f, "device {device}: cumulative reading decreases at {t}")
            }
            TemperatureOutOfRange { device, t, value } => {
                write!(f, "device {device}: temperature {value} out of range at {t}")
            }
            ValvePositionOutOfRange { device, t, value } => {
                write!(f, "device {device}: valve position {value} out of range at {t}")
            }
            NegativeFlow { device, t, value } => {
                write!(f, "device {device}: negative flow {value} at {t}")
            }
            NonFinite { device, t } => write!(f, "device {device}: non-finite value at {t}"),
            DanglingRadiator { device, radiator } => {
                write!(f, "device {device}: references unknown radiator {radiator}")
            }
            DuplicateSeries { radiator, kind } => {
                write!(f, "radiator {radiator}: more than one {kind} series")
            }
            MissingSeries { radiator, kind } => write!(f, "radiator {radiator}: no {kind} series"),
            MissingCentralMeter => f.write_str("no heat meter available for period totals"),
            InvalidPeriod { index } => write!(f, "period {index}: end not after start"),
            PeriodsNotContiguous { index } => {
                write!(f, "period {index}: not contiguous with its predecessor")
            }
            TotalsLengthMismatch { periods, totals } => {
                write!(f, "{totals} period totals for {periods} periods")
            }
            UncoveredPeriod { device, period } => {
                write!(f, "device {device}: period {period} not covered by samples")
            }
        }
    }
}

/// Checks every dataset invariant. With a method, the series that method
/// needs are also required for every radiator and for every period.
pub fn validate_dataset(d: &Dataset, method: Option<Method>) -> Vec<Violation> {
    let mut out = Vec::new();

    let mut ids: BTreeMap<&str, ()> = BTreeMap::new();
    for r in &d.radiators {
        r.check(&mut out);
        if ids.insert(r.id.as_str(), ()).is_some() {
            out.push(Violation::DuplicateRadiator {
                radiator: r.id.clone(),
            });
        }
    }

    let mut seen: BTreeMap<(&str, DeviceKind), usize> = BTreeMap::new();
    for s in &d.series {
        check_series(s, &mut out);
        if let Some(rid) = s.radiator_id.as_deref() {
            if !ids.contains_key(rid) {
                out.push(Violation::DanglingRadiator {
                    device: s.device_id.clone(),
                    radiator: rid.into(),
                });
            }
            let n = seen.entry((rid, s.kind())).or_insert(0);
            *n += 1;
            if *n == 2 {
                out.push(Violation::DuplicateSeries {
                    radiator: rid.into(),
                    kind: s.kind(),
                });
            }
        }
    }

    for (i, p) in d.periods.iter().enumerate() {
        if p.end <= p.start {
            out.push(Violation::InvalidPeriod { index: p.index });
        }
        if i > 0 && d.periods[i - 1].end != p.start {
            out.push(Violation::PeriodsNotContiguous { index: p.index });
        }
    }
    if d.periods.len() != d.total_energy_per_period.len() {
        out.push(Violation::TotalsLengthMismatch {
            periods: d.periods.len(),
            totals: d.total_energy_per_period.len(),
        });
    }

    let has_meter = d.series.iter().any(|s| s.kind() == DeviceKind::Dhm);
    if !has_meter {
        out.push(Violation::MissingCentralMeter);
    }

    // Coverage: the series feeding the period totals, plus the method's series.
    let mut required: Vec<&DeviceTimeSeries> = Vec::new();
    match d.central_meter() {
        Some(c) => required.push(c),
        None => required.extend(d.series.iter().filter(|s| s.kind() == DeviceKind::Dhm)),
    }
    if let Some(m) = method {
        let kind = m.device_kind();
        for r in &d.radiators {
            match d.series_for(&r.id, kind) {
                Some(s) => required.push(s),
                None => out.push(Violation::MissingSeries {
                    radiator: r.id.clone(),
                    kind,
                }),
            }
        }
    }
    for s in required {
        let ts = s.samples.timestamps();
        let max_gap = d.settings.cadence.max_gap_s(s.kind());
        for p in &d.periods {
            if !covers(&ts, p, max_gap) {
                out.push(Violation::UncoveredPeriod {
                    device: s.device_id.clone(),
                    period: p.index,
                });
            }
        }
    }

    out
}

/// A period is covered when samples bracket it and no gap between the
/// bracketing samples exceeds `max_gap_s`.
pub fn covers(ts: &[Timestamp], p: &IntegrationPeriod, max_gap_s: f64) -> bool {
    let first = match ts.iter().rposition(|&t| t <= p.start) {
        Some(i) => i,
        None => return false,
    };
    let last = match ts.iter().position(|&t| t >= p.end) {
        Some(i) => i,
        None => return false,
    };
    ts[first..=last]
        .windows(2)
        .all(|w| (w[1] - w[0]) as f64 <= max_gap_s)
}

fn check_series(s: &DeviceTimeSeries, out: &mut Vec<Violation>) {
    let dev = || s.device_id.clone();
    if s.samples.is_empty() {
        out.push(Violation::EmptySeries { device: dev() });
        return;
    }
    let ts = s.samples.timestamps();
    for w in ts.windows(2) {
        if w[1] <= w[0] {
            out.push(Violation::NonIncreasingTimestamp {
                device: dev(),
                t: w[1],
            });
        }
    }
    let temp = |out: &mut Vec<Violation>, t, v: f64| {
        if !v.is_finite() {
            out.push(Violation::NonFinite { device: dev(), t });
        } else if v < TEMPERATURE_RANGE.0 || v > TEMPERATURE_RANGE.1 {
            out.push(Violation::TemperatureOutOfRange {
                device: dev(),
                t,
                value: v,
            });
        }
    };
    match &s.samples {
        Samples::Hca(v) => {
            for w in v.windows(2) {
                if w[1].count < w[0].count {
                    out.push(Violation::DecreasingCumulative {
                        device: dev(),
                        t: w[1].t,
                    });
                }
            }
        }
        Samples::Stv(v) => {
            for x in v {
                temp(out, x.t, x.inlet_temp);
                temp(out, x.t, x.room_temp);
                if !(0.0..=100.0).contains(&x.valve_position) {
                    out.push(Violation::ValvePositionOutOfRange {
                        device: dev(),
                        t: x.t,
                        value: x.valve_position,
                    });
                }
            }
        }
        Samples::Dhm(v) => {
            for x in v {
                temp(out, x.t, x.inlet_temp);
                temp(out, x.t, x.outlet_temp);
                if !x.flow.is_finite() || !x.energy_kwh.is_finite() {
                    out.push(Violation::NonFinite { device: dev(), t: x.t });
                } else if x.flow < 0.0 {
                    out.push(Violation::NegativeFlow {
                        device: dev(),
                        t: x.t,
                        value: x.flow,
                    });
                }
            }
            for w in v.windows(2) {
                if w[1].energy_kwh < w[0].energy_kwh {
                    out.push(Violation::DecreasingCumulative {
                        device: dev(),
                        t: w[1].t,
                    });
                }
            }
        }
    }
}

/// Splits `[start, end]` into contiguous periods of `1 / frequency` hours.
/// The last period is truncated at `end`.
pub fn partition_periods(
    span: (Timestamp, Timestamp),
    frequency_per_hour: f64,
) -> Result<Vec<IntegrationPeriod>, Error> {
    let (start, end) = span;
    if !(frequency_per_hour > 0.0) || !frequency_per_hour.is_finite() {
        return Err(Error::InvalidArgument("sampling frequency must be positive"));
    }
    if end <= start {
        return Err(Error::InvalidArgument("empty span"));
    }
    let span_h = (end - start) as f64 / SECONDS_PER_HOUR;
    // Guard against 69 * 0.33 = 22.770000000000003 style noise before ceil.
    let count = libm::ceil(span_h * frequency_per_hour - 1e-9) as usize;
    let count = count.max(1);
    let period_s = SECONDS_PER_HOUR / frequency_per_hour;
    let mut out = Vec::with_capacity(count);
    let mut prev = start;
    for i in 0..count {
        let boundary = if i + 1 == count {
            end
        } else {
            (start + libm::round((i + 1) as f64 * period_s) as i64).min(end)
        };
        if boundary <= prev {
            break;
        }
        out.push(IntegrationPeriod {
            index: out.len(),
            start: prev,
            end: boundary,
        });
        prev = boundary;
    }
    Ok(out)
}
