//! On-disk dataset layout.
//!
//! ```text
//! manifest.json      settings, span, device list
//! radiators.json     registry keyed by radiator id
//! periods.csv        index,start,end
//! devices/<id>.csv   one file per device
//! ```
//!
//! Timestamps are ISO-8601 UTC. Numbers are written with 12 significant
//! digits.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use heatalloc_core::domain::{
    Dataset, DatasetSettings, DeviceKind, DeviceTimeSeries, DhmSample, HcaSample, IntegrationPeriod, RadiatorSpec,
    Samples, StvSample, Timestamp,
};
use heatalloc_core::metrics::Subsets;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";
pub const REGISTRY: &str = "radiators.json";
pub const PERIODS: &str = "periods.csv";
pub const GROUND_TRUTH: &str = "ground_truth.json";
const DEVICE_DIR: &str = "devices";

pub const HCA_HEADER: [&str; 2] = ["timestamp", "count"];
pub const STV_HEADER: [&str; 4] = ["timestamp", "inlet_temp_c", "room_temp_c", "valve_position_pct"];
pub const DHM_HEADER: [&str; 5] = ["timestamp", "flow_l_per_h", "inlet_temp_c", "outlet_temp_c", "energy_kwh"];

/// `x` rounded to 12 significant digits, shortest form.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    rounded.to_string()
}

pub fn fmt_time(t: Timestamp) -> String {
    DateTime::<Utc>::from_timestamp(t, 0)
        .map(|d| d.to_rfc3339_opts(SecondsFormat::Secs, true))
        .unwrap_or_else(|| t.to_string())
}

pub fn parse_time(s: &str) -> std::result::Result<Timestamp, String> {
    DateTime::parse_from_rfc3339(s.trim())
        .map(|d| d.timestamp())
        .map_err(|e| format!("bad timestamp {s:?}: {e}"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceEntry {
    pub device_id: String,
    pub kind: DeviceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radiator_id: Option<String>,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub settings: DatasetSettings,
    pub span_start: String,
    pub span_end: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling_frequency: Option<f64>,
    pub radiators_file: String,
    pub periods_file: String,
    pub devices: Vec<DeviceEntry>,
}

/// A radiator's registry entry, without its id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiatorEntry {
    pub q_n50: f64,
    pub exponent_n: f64,
    pub rating_kq: f64,
    pub rating_kc: f64,
    pub rating_kt: f64,
    pub theta_prior: f64,
    pub subset_id: String,
}

impl RadiatorEntry {
    fn of(r: &RadiatorSpec) -> Self {
        Self {
            q_n50: r.q_n50,
            exponent_n: r.exponent_n,
            rating_kq: r.rating_kq,
            rating_kc: r.rating_kc,
            rating_kt: r.rating_kt,
            theta_prior: r.theta_prior,
            subset_id: r.subset_id.clone(),
        }
    }

    fn into_spec(self, id: String) -> RadiatorSpec {
        RadiatorSpec {
            id,
            q_n50: self.q_n50,
            exponent_n: self.exponent_n,
            rating_kq: self.rating_kq,
            rating_kc: self.rating_kc,
            rating_kt: self.rating_kt,
            theta_prior: self.theta_prior,
            subset_id: self.subset_id,
        }
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Read {
        path: path.into(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        create_dir(dir)?;
    }
    fs::write(path, text).map_err(|source| Error::Write {
        path: path.into(),
        source,
    })
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Write {
        path: dir.into(),
        source,
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::parse(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::parse(path, e))?;
    s.push('\n');
    write_text(path, &s)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent() {
        create_dir(dir)?;
    }
    csv::Writer::from_path(path).map_err(|e| Error::Write {
        path: path.into(),
        source: e.into(),
    })
}

pub(crate) fn write_rows(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv_writer(path)?;
    let werr = |e: csv::Error| Error::Write {
        path: path.into(),
        source: e.into(),
    };
    w.write_record(header).map_err(werr)?;
    for r in rows {
        w.write_record(&r).map_err(werr)?;
    }
    w.flush().map_err(|source| Error::Write {
        path: path.into(),
        source,
    })
}

/// Rows of a CSV file whose header must equal `header`.
pub(crate) fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::Read {
                path: path.into(),
                source: e.into(),
            },
            _ => Error::parse(path, e),
        })?;
    let found = r.headers().map_err(|e| Error::parse(path, e))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::parse(
            path,
            format!("expected header {}, found {}", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    r.records().map(|x| x.map_err(|e| Error::parse(path, e))).collect()
}

struct Fields<'a> {
    path: &'a Path,
    rec: &'a csv::StringRecord,
    line: usize,
}

impl Fields<'_> {
    fn get(&self, i: usize) -> Result<&str> {
        self.rec
            .get(i)
            .ok_or_else(|| Error::parse(self.path, format!("line {}: missing column {}", self.line, i + 1)))
    }

    fn time(&self, i: usize) -> Result<Timestamp> {
        parse_time(self.get(i)?).map_err(|e| Error::parse(self.path, format!("line {}: {e}", self.line)))
    }

    fn num(&self, i: usize) -> Result<f64> {
        let s = self.get(i)?;
        s.parse()
            .map_err(|_| Error::parse(self.path, format!("line {}: bad number {s:?}", self.line)))
    }

    fn count(&self, i: usize) -> Result<u64> {
        let s = self.get(i)?;
        s.parse()
            .map_err(|_| Error::parse(self.path, format!("line {}: bad count {s:?}", self.line)))
    }
}

fn each<T>(path: &Path, header: &[&str], f: impl Fn(&Fields) -> Result<T>) -> Result<Vec<T>> {
    read_rows(path, header)?
        .iter()
        .enumerate()
        .map(|(i, rec)| f(&Fields { path, rec, line: i + 2 }))
        .collect()
}

pub fn write_samples(path: &Path, samples: &Samples) -> Result<()> {
    match samples {
        Samples::Hca(s) => write_rows(
            path,
            &HCA_HEADER,
            s.iter().map(|x| vec![fmt_time(x.t), x.count.to_string()]),
        ),
        Samples::Stv(s) => write_rows(
            path,
            &STV_HEADER,
            s.iter().map(|x| {
                vec![
                    fmt_time(x.t),
                    fmt_num(x.inlet_temp),
                    fmt_num(x.room_temp),
                    fmt_num(x.valve_position),
                ]
            }),
        ),
        Samples::Dhm(s) => write_rows(
            path,
            &DHM_HEADER,
            s.iter().map(|x| {
                vec![
                    fmt_time(x.t),
                    fmt_num(x.flow),
                    fmt_num(x.inlet_temp),
                    fmt_num(x.outlet_temp),
                    fmt_num(x.energy_kwh),
                ]
            }),
        ),
    }
}

pub fn read_samples(path: &Path, kind: DeviceKind) -> Result<Samples> {
    Ok(match kind {
        DeviceKind::Hca => Samples::Hca(each(path, &HCA_HEADER, |f| {
            Ok(HcaSample {
                t: f.time(0)?,
                count: f.count(1)?,
            })
        })?),
        DeviceKind::Stv => Samples::Stv(each(path, &STV_HEADER, |f| {
            Ok(StvSample {
                t: f.time(0)?,
                inlet_temp: f.num(1)?,
                room_temp: f.num(2)?,
                valve_position: f.num(3)?,
            })
        })?),
        DeviceKind::Dhm => Samples::Dhm(each(path, &DHM_HEADER, |f| {
            Ok(DhmSample {
                t: f.time(0)?,
                flow: f.num(1)?,
                inlet_temp: f.num(2)?,
                outlet_temp: f.num(3)?,
                energy_kwh: f.num(4)?,
            })
        })?),
    })
}

pub fn write_periods(path: &Path, periods: &[IntegrationPeriod]) -> Result<()> {
    write_rows(
        path,
        &["index", "start", "end"],
        periods
            .iter()
            .map(|p| vec![p.index.to_string(), fmt_time(p.start), fmt_time(p.end)]),
    )
}

pub fn read_periods(path: &Path) -> Result<Vec<IntegrationPeriod>> {
    each(path, &["index", "start", "end"], |f| {
        let s = f.get(0)?;
        Ok(IntegrationPeriod {
            index: s
                .parse()
                .map_err(|_| Error::parse(f.path, format!("line {}: bad index {s:?}", f.line)))?,
            start: f.time(1)?,
            end: f.time(2)?,
        })
    })
}

pub fn write_registry(path: &Path, radiators: &[RadiatorSpec]) -> Result<()> {
    let map: BTreeMap<&str, RadiatorEntry> = radiators.iter().map(|r| (r.id.as_str(), RadiatorEntry::of(r))).collect();
    write_json(path, &map)
}

/// Radiators in id order.
pub fn read_registry(path: &Path) -> Result<Vec<RadiatorSpec>> {
    let map: BTreeMap<String, RadiatorEntry> = read_json(path)?;
    Ok(map.into_iter().map(|(id, e)| e.into_spec(id)).collect())
}

fn device_file(id: &str) -> String {
    let safe: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{DEVICE_DIR}/{safe}.csv")
}

/// Writes `dataset` under `dir`.
pub fn write_dataset(dir: &Path, dataset: &Dataset, sampling_frequency: Option<f64>) -> Result<()> {
    create_dir(dir)?;
    let (start, end) = dataset
        .span()
        .ok_or_else(|| Error::Usage("dataset has no samples".into()))?;
    let mut devices = Vec::with_capacity(dataset.series.len());
    for s in &dataset.series {
        let file = device_file(&s.device_id);
        write_samples(&dir.join(&file), &s.samples)?;
        devices.push(DeviceEntry {
            device_id: s.device_id.clone(),
            kind: s.kind(),
            radiator_id: s.radiator_id.clone(),
            file,
        });
    }
    write_registry(&dir.join(REGISTRY), &dataset.radiators)?;
    write_periods(&dir.join(PERIODS), &dataset.periods)?;
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        settings: dataset.settings.clone(),
        span_start: fmt_time(start),
        span_end: fmt_time(end),
        sampling_frequency,
        radiators_file: REGISTRY.into(),
        periods_file: PERIODS.into(),
        devices,
    };
    write_json(&dir.join(MANIFEST), &manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let m: Manifest = read_json(&path)?;
    if m.schema_version != SCHEMA_VERSION {
        return Err(Error::parse(path, format!("unsupported schema version {}", m.schema_version)));
    }
    Ok(m)
}

/// Reads a dataset written by [`write_dataset`]. Period totals are
/// recomputed from the meters.
pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let m = read_manifest(dir)?;
    let radiators = read_registry(&dir.join(&m.radiators_file))?;
    let periods = read_periods(&dir.join(&m.periods_file))?;
    let series = m
        .devices
        .iter()
        .map(|d| {
            Ok(DeviceTimeSeries {
                device_id: d.device_id.clone(),
                radiator_id: d.radiator_id.clone(),
                samples: read_samples(&dir.join(&d.file), d.kind)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::new(radiators, series, periods, m.settings)?)
}

/// `radiator_id,subset_id` assignments.
pub fn read_subsets(path: &Path) -> Result<Subsets> {
    let pairs = each(path, &["radiator_id", "subset_id"], |f| {
        Ok((f.get(0)?.to_string(), f.get(1)?.to_string()))
    })?;
    Ok(Subsets::from_assignments(pairs.iter().map(|(r, s)| (r.as_str(), s.as_str()))))
}

pub fn write_subsets(path: &Path, subsets: &Subsets) -> Result<()> {
    write_rows(
        path,
        &["radiator_id", "subset_id"],
        subsets
            .groups
            .iter()
            .flat_map(|(s, members)| members.iter().map(move |r| vec![r.clone(), s.clone()])),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_num(55.0), "55");
        assert_eq!(fmt_num(0.1 + 0.2), "0.3");
        assert_eq!(fmt_num(44.71234567890123), "44.7123456789");
        assert_eq!(fmt_num(-1.0e-20), "-0.00000000000000000001");
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(123456789012345.0), "123456789012000");
    }

    #[test]
    fn timestamps_round_trip() {
        assert_eq!(fmt_time(1_610_323_200), "2021-01-11T00:00:00Z");
        assert_eq!(parse_time("2021-01-11T00:00:00Z").unwrap(), 1_610_323_200);
        assert_eq!(parse_time("2021-01-11T01:00:00+01:00").unwrap(), 1_610_323_200);
        assert!(parse_time("yesterday").is_err());
    }
}
