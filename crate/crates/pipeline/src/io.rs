//! File formats: JSON building models, CSV weather and measured data, CSV plot tables.
//!
//! Time-series CSVs share one layout: a `timestamp` column (local standard
//! time, `YYYY-MM-DDTHH:MM:SS`) followed by one column per series, hourly.
//! Measured-data columns are `q_hc`, `t_in:<zone>`, `lep:<zone>`,
//! `energy:<name>`; any other column is kept as a raw channel (for example
//! `fan_flow:<ahu>`, `t_mixed:<ahu>`, `t_return:<ahu>`).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::NaiveDateTime;
use epe_core::engine::BuildingModel;
use epe_core::timeseries::fill_gaps;
use epe_core::{MeasuredDataset, TimeSeries, Unit, WeatherSeries};

use crate::error::{PipelineError, Result};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";
/// Longest run of missing hours that is interpolated at ingestion.
pub const MAX_FILLED_GAP: usize = 2;
pub const WEATHER_COLUMNS: [&str; 6] = ["t_out", "ghi", "dni", "dhi", "wind_speed", "humidity_ratio"];

const STEP: i64 = 3600;

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

pub fn format_timestamp(t: NaiveDateTime) -> String {
    t.format(TIMESTAMP_FORMAT).to_string()
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::format(path, e.to_string()))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| PipelineError::io(path, e))
}

pub fn load_building(path: &Path) -> Result<BuildingModel> {
    let model: BuildingModel = read_json(path)?;
    model.validate().map_err(|e| PipelineError::format(path, e.to_string()))?;
    Ok(model)
}

pub fn save_building(path: &Path, model: &BuildingModel) -> Result<()> {
    write_json(path, model)
}

/// Hourly columns read from a CSV, missing hours as NaN.
struct Table {
    start: NaiveDateTime,
    columns: Vec<(String, Vec<f64>)>,
}

fn read_table(path: &Path) -> Result<Table> {
    let err = |m: String| PipelineError::format(path, m);
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| err(e.to_string()))?;
    let headers = reader.headers().map_err(|e| err(e.to_string()))?.clone();
    if headers.get(0) != Some("timestamp") {
        return Err(err("first column must be \"timestamp\"".into()));
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    let mut start = None;
    let mut prev: Option<NaiveDateTime> = None;
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| err(format!("row {row}: {e}")))?;
        let raw = record.get(0).unwrap_or_default();
        let t = parse_timestamp(raw).ok_or_else(|| err(format!("row {row}: bad timestamp {raw:?}")))?;
        if let Some(p) = prev {
            if t == p {
                return Err(err(format!("row {row}: duplicated timestamp {raw}")));
            }
            if t < p {
                return Err(err(format!("row {row}: timestamp {raw} is earlier than the previous row")));
            }
            let gap = (t - p).num_seconds();
            if gap % STEP != 0 {
                return Err(err(format!("row {row}: timestamp {raw} is off the hourly grid")));
            }
            for c in columns.iter_mut() {
                c.extend(std::iter::repeat_n(f64::NAN, (gap / STEP - 1) as usize));
            }
        } else {
            start = Some(t);
        }
        prev = Some(t);
        for (k, c) in columns.iter_mut().enumerate() {
            let cell = record.get(k + 1).unwrap_or_default();
            let v = if cell.is_empty() {
                f64::NAN
            } else {
                cell.parse::<f64>().map_err(|_| err(format!("row {row}: column {}: bad number {cell:?}", names[k])))?
            };
            c.push(v);
        }
    }
    let start = start.ok_or_else(|| err("no data rows".into()))?;
    Ok(Table { start, columns: names.into_iter().zip(columns).collect() })
}

impl Table {
    fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    /// Gap-filled series; a gap too long to fill is an error.
    fn series(&self, path: &Path, name: &str, raw: &[f64], unit: Unit) -> Result<TimeSeries> {
        let segments = fill_gaps(self.start, STEP, raw, unit, MAX_FILLED_GAP).map_err(|e| PipelineError::format(path, e.to_string()))?;
        match segments.as_slice() {
            [one] if one.len() == raw.len() => Ok(one.clone()),
            [] => Err(PipelineError::format(path, format!("column {name} has no values"))),
            [first, ..] => {
                let at = if first.start() > self.start { self.start } else { first.end() };
                Err(PipelineError::format(
                    path,
                    format!("column {name}: gap longer than {MAX_FILLED_GAP} h at {}", format_timestamp(at)),
                ))
            }
        }
    }
}

pub fn load_weather(path: &Path) -> Result<WeatherSeries> {
    let table = read_table(path)?;
    let mut cols = Vec::with_capacity(6);
    for (name, unit) in WEATHER_COLUMNS.iter().zip([
        Unit::Celsius,
        Unit::WattPerSquareMeter,
        Unit::WattPerSquareMeter,
        Unit::WattPerSquareMeter,
        Unit::MeterPerSecond,
        Unit::Dimensionless,
    ]) {
        let raw = table.column(name).ok_or_else(|| PipelineError::format(path, format!("missing column {name}")))?;
        cols.push(table.series(path, name, raw, unit)?);
    }
    let mut it = cols.into_iter();
    let mut next = || it.next().expect("six columns");
    WeatherSeries::new(next(), next(), next(), next(), next(), next()).map_err(|e| PipelineError::format(path, e.to_string()))
}

pub fn save_weather(path: &Path, w: &WeatherSeries) -> Result<()> {
    let cols: Vec<(&str, &TimeSeries)> =
        WEATHER_COLUMNS.iter().copied().zip([&w.t_out, &w.ghi, &w.dni, &w.dhi, &w.wind_speed, &w.humidity_ratio]).collect();
    write_table(path, &cols)
}

fn channel_unit(name: &str) -> Unit {
    if name.starts_with("t_") { Unit::Celsius } else { Unit::Dimensionless }
}

/// Measured data aligned with `weather`, which must cover the measured span.
pub fn load_measured(path: &Path, weather: &WeatherSeries) -> Result<MeasuredDataset> {
    let table = read_table(path)?;
    let mut data = MeasuredDataset {
        t_in: BTreeMap::new(),
        lep: BTreeMap::new(),
        q_hc_measured: None,
        energy: BTreeMap::new(),
        weather: weather.clone(),
        channels: BTreeMap::new(),
    };
    for (name, raw) in &table.columns {
        if let Some(zone) = name.strip_prefix("t_in:") {
            data.t_in.insert(zone.to_string(), table.series(path, name, raw, Unit::Celsius)?);
        } else if let Some(zone) = name.strip_prefix("lep:") {
            data.lep.insert(zone.to_string(), table.series(path, name, raw, Unit::Watt)?);
        } else if let Some(e) = name.strip_prefix("energy:") {
            data.energy.insert(e.to_string(), table.series(path, name, raw, Unit::Watt)?);
        } else if name == "q_hc" {
            data.q_hc_measured = Some(table.series(path, name, raw, Unit::Watt)?);
        } else {
            data.channels.insert(name.clone(), table.series(path, name, raw, channel_unit(name))?);
        }
    }
    if data.t_in.is_empty() {
        return Err(PipelineError::format(path, "no t_in:<zone> columns"));
    }
    let span = data.t_in.values().next().expect("non-empty").interval();
    data.weather = weather.slice(&span).map_err(|e| PipelineError::format(path, format!("weather does not cover the measured data: {e}")))?;
    Ok(data)
}

pub fn save_measured(path: &Path, data: &MeasuredDataset) -> Result<()> {
    let mut names: Vec<String> = Vec::new();
    let mut cols: Vec<&TimeSeries> = Vec::new();
    if let Some(q) = &data.q_hc_measured {
        names.push("q_hc".into());
        cols.push(q);
    }
    for (prefix, map) in [("t_in:", &data.t_in), ("lep:", &data.lep), ("energy:", &data.energy), ("", &data.channels)] {
        for (k, s) in map {
            names.push(format!("{prefix}{k}"));
            cols.push(s);
        }
    }
    let pairs: Vec<(&str, &TimeSeries)> = names.iter().map(String::as_str).zip(cols).collect();
    write_table(path, &pairs)
}

/// Writes aligned series as a CSV with a shared timestamp column.
pub fn write_table(path: &Path, columns: &[(&str, &TimeSeries)]) -> Result<()> {
    let err = |m: String| PipelineError::format(path, m);
    let first = columns.first().ok_or_else(|| err("no columns to write".into()))?.1;
    for (name, s) in columns {
        first.ensure_aligned(s).map_err(|e| err(format!("column {name}: {e}")))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| err(e.to_string()))?;
    let header: Vec<&str> = std::iter::once("timestamp").chain(columns.iter().map(|(n, _)| *n)).collect();
    w.write_record(&header).map_err(|e| err(e.to_string()))?;
    for (i, t) in first.timestamps().enumerate() {
        let mut row = vec![format_timestamp(t)];
        row.extend(columns.iter().map(|(_, s)| s.values()[i].to_string()));
        w.write_record(&row).map_err(|e| err(e.to_string()))?;
    }
    w.flush().map_err(|e| PipelineError::io(path, e))
}

/// Writes plain rows under `header`.
pub fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<usize> {
    let err = |e: csv::Error| PipelineError::format(path, e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(header).map_err(err)?;
    let mut n = 0;
    for r in rows {
        w.write_record(r.iter().map(f64::to_string)).map_err(err)?;
        n += 1;
    }
    w.flush().map_err(|e| PipelineError::io(path, e))?;
    Ok(n)
}
