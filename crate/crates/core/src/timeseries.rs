//! Uniformly sampled time series and the calendar helpers shared by the
//! rest of the crate.
//!
//! Timestamps are naive local standard time. A sample at index `i` stands for
//! the interval `[start + i·step, start + (i+1)·step)`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Celsius,
    Watt,
    WattHour,
    MegaJoule,
    WattPerSquareMeter,
    MeterPerSecond,
    Dimensionless,
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Unit::Celsius => "°C",
            Unit::Watt => "W",
            Unit::WattHour => "Wh",
            Unit::MegaJoule => "MJ",
            Unit::WattPerSquareMeter => "W/m²",
            Unit::MeterPerSecond => "m/s",
            Unit::Dimensionless => "-",
        };
        f.write_str(s)
    }
}

/// Half-open time interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
}

impl Interval {
    pub fn new(start: NaiveDateTime, end: NaiveDateTime) -> Result<Self> {
        if end <= start {
            return Err(Error::Window(format!("end {end} is not after start {start}")));
        }
        Ok(Self { start, end })
    }

    pub fn duration_seconds(&self) -> i64 {
        (self.end - self.start).num_seconds()
    }

    pub fn contains(&self, t: NaiveDateTime) -> bool {
        t >= self.start && t < self.end
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let start = self.start.max(other.start);
        let end = self.end.min(other.end);
        (end > start).then_some(Interval { start, end })
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.intersect(other).is_some()
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggMethod {
    /// Average of the samples in each bin (temperatures, mean powers).
    Mean,
    /// Sum of the samples in each bin (energies per step).
    Sum,
}

/// Immutable, uniformly sampled series of reals with a physical unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    start: NaiveDateTime,
    step_seconds: i64,
    unit: Unit,
    values: Arc<[f64]>,
}

impl TimeSeries {
    pub fn new(start: NaiveDateTime, step_seconds: i64, values: Vec<f64>, unit: Unit) -> Result<Self> {
        if step_seconds <= 0 {
            return Err(Error::InvalidArgument(format!("step must be positive, got {step_seconds} s")));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite value at index {i}")));
        }
        Ok(Self { start, step_seconds, unit, values: values.into() })
    }

    pub fn constant(start: NaiveDateTime, step_seconds: i64, len: usize, value: f64, unit: Unit) -> Result<Self> {
        Self::new(start, step_seconds, vec![value; len], unit)
    }

    /// Series with the same time axis as `self` and new values.
    pub fn with_values(&self, values: Vec<f64>, unit: Unit) -> Result<Self> {
        if values.len() != self.len() {
            return Err(Error::Misaligned(format!("expected {} values, got {}", self.len(), values.len())));
        }
        Self::new(self.start, self.step_seconds, values, unit)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            start: self.start,
            step_seconds: self.step_seconds,
            unit: self.unit,
            values: vec![0.0; self.len()].into(),
        }
    }

    pub fn start(&self) -> NaiveDateTime {
        self.start
    }

    pub fn step_seconds(&self) -> i64 {
        self.step_seconds
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn end(&self) -> NaiveDateTime {
        self.timestamp(self.len())
    }

    pub fn interval(&self) -> Interval {
        Interval { start: self.start, end: self.end() }
    }

    pub fn timestamp(&self, index: usize) -> NaiveDateTime {
        self.start + Duration::seconds(self.step_seconds * index as i64)
    }

    pub fn timestamps(&self) -> impl Iterator<Item = NaiveDateTime> + '_ {
        (0..self.len()).map(|i| self.timestamp(i))
    }

    pub fn is_aligned_with(&self, other: &TimeSeries) -> bool {
        self.start == other.start && self.step_seconds == other.step_seconds && self.len() == other.len()
    }

    pub fn ensure_aligned(&self, other: &TimeSeries) -> Result<()> {
        if self.is_aligned_with(other) {
            Ok(())
        } else {
            Err(Error::Misaligned(format!(
                "{} step {} s len {} vs {} step {} s len {}",
                self.start,
                self.step_seconds,
                self.len(),
                other.start,
                other.step_seconds,
                other.len()
            )))
        }
    }

    fn zip_with(&self, other: &TimeSeries, f: impl Fn(f64, f64) -> f64) -> Result<TimeSeries> {
        self.ensure_aligned(other)?;
        if self.unit != other.unit {
            return Err(Error::UnitMismatch(self.unit, other.unit));
        }
        let values: Vec<f64> = self.values.iter().zip(other.values.iter()).map(|(a, b)| f(*a, *b)).collect();
        Ok(Self { start: self.start, step_seconds: self.step_seconds, unit: self.unit, values: values.into() })
    }

    pub fn try_add(&self, other: &TimeSeries) -> Result<TimeSeries> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn try_sub(&self, other: &TimeSeries) -> Result<TimeSeries> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, factor: f64) -> TimeSeries {
        self.map(|v| v * factor)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> TimeSeries {
        Self {
            start: self.start,
            step_seconds: self.step_seconds,
            unit: self.unit,
            values: self.values.iter().map(|v| f(*v)).collect::<Vec<_>>().into(),
        }
    }

    /// Sum of aligned series with a common unit.
    pub fn sum_all<'a>(series: impl IntoIterator<Item = &'a TimeSeries>) -> Result<TimeSeries> {
        let mut iter = series.into_iter();
        let first = iter.next().ok_or_else(|| Error::InvalidArgument("sum of no series".into()))?;
        iter.try_fold(first.clone(), |acc, s| acc.try_add(s))
    }

    pub fn mean(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Sub-series covering `window`, which must lie on this series' grid.
    pub fn slice(&self, window: &Interval) -> Result<TimeSeries> {
        if window.start < self.start || window.end > self.end() {
            return Err(Error::Window(format!("{window} not covered by series {}", self.interval())));
        }
        let off = (window.start - self.start).num_seconds();
        let span = window.duration_seconds();
        if off % self.step_seconds != 0 || span % self.step_seconds != 0 {
            return Err(Error::Window(format!("{window} is not on the {} s grid of the series", self.step_seconds)));
        }
        let i0 = (off / self.step_seconds) as usize;
        let n = (span / self.step_seconds) as usize;
        Ok(Self {
            start: window.start,
            step_seconds: self.step_seconds,
            unit: self.unit,
            values: self.values[i0..i0 + n].to_vec().into(),
        })
    }

    /// Sub-series by index range.
    pub fn slice_index(&self, from: usize, to: usize) -> TimeSeries {
        Self {
            start: self.timestamp(from),
            step_seconds: self.step_seconds,
            unit: self.unit,
            values: self.values[from..to].to_vec().into(),
        }
    }

    /// Converts an energy-per-step series (Wh or MJ) to mean power in W.
    pub fn energy_to_power(&self) -> Result<TimeSeries> {
        let joules_per_unit = match self.unit {
            Unit::WattHour => 3600.0,
            Unit::MegaJoule => 1.0e6,
            u => return Err(Error::UnitMismatch(u, Unit::WattHour)),
        };
        let k = joules_per_unit / self.step_seconds as f64;
        let mut out = self.scale(k);
        out.unit = Unit::Watt;
        Ok(out)
    }

    /// Integrates a power series in W to energy per step in MJ.
    pub fn power_to_megajoules(&self) -> Result<TimeSeries> {
        if self.unit != Unit::Watt {
            return Err(Error::UnitMismatch(self.unit, Unit::Watt));
        }
        let mut out = self.scale(self.step_seconds as f64 / 1.0e6);
        out.unit = Unit::MegaJoule;
        Ok(out)
    }
}

/// Common interval covered by every series, if any.
pub fn intersection(series: &[TimeSeries]) -> Option<Interval> {
    let mut iter = series.iter();
    let first = iter.next()?.interval();
    iter.try_fold(first, |acc, s| acc.intersect(&s.interval()))
}

/// Restricts every series to `window`. All series must share one step.
pub fn align(series: &[TimeSeries], window: &Interval) -> Result<Vec<TimeSeries>> {
    let Some(first) = series.first() else {
        return Ok(Vec::new());
    };
    for s in series {
        if s.step_seconds != first.step_seconds {
            let (a, b) = (s.step_seconds.max(first.step_seconds), s.step_seconds.min(first.step_seconds));
            let hint = if a % b == 0 { "; aggregate to a common step first" } else { "" };
            return Err(Error::Misaligned(format!(
                "steps {} s and {} s differ{hint}",
                first.step_seconds, s.step_seconds
            )));
        }
        if !s.interval().overlaps(window) {
            return Err(Error::Window(format!("{window} does not overlap series {}", s.interval())));
        }
    }
    series.iter().map(|s| s.slice(window)).collect()
}

/// Down-samples to `target_step_seconds`, dropping a trailing partial bin.
pub fn aggregate(series: &TimeSeries, target_step_seconds: i64, method: AggMethod) -> Result<TimeSeries> {
    if target_step_seconds <= 0 || target_step_seconds % series.step_seconds != 0 {
        return Err(Error::InvalidArgument(format!(
            "target step {target_step_seconds} s is not an integer multiple of {} s",
            series.step_seconds
        )));
    }
    let ratio = (target_step_seconds / series.step_seconds) as usize;
    let values = series
        .values
        .chunks_exact(ratio)
        .map(|bin| {
            let sum: f64 = bin.iter().sum();
            match method {
                AggMethod::Mean => sum / ratio as f64,
                AggMethod::Sum => sum,
            }
        })
        .collect::<Vec<_>>();
    TimeSeries::new(series.start, target_step_seconds, values, series.unit)
}

/// Ingestion-time gap handling.
///
/// Runs of missing (NaN) samples no longer than `max_gap` that are bracketed
/// by valid samples are linearly interpolated; longer runs, and leading or
/// trailing gaps, split the record. Returns the contiguous valid segments.
pub fn fill_gaps(
    start: NaiveDateTime,
    step_seconds: i64,
    raw: &[f64],
    unit: Unit,
    max_gap: usize,
) -> Result<Vec<TimeSeries>> {
    let mut filled = raw.to_vec();
    let mut keep = vec![true; raw.len()];
    let mut i = 0;
    while i < raw.len() {
        if raw[i].is_finite() {
            i += 1;
            continue;
        }
        let gap_start = i;
        while i < raw.len() && !raw[i].is_finite() {
            i += 1;
        }
        let gap_len = i - gap_start;
        let bracketed = gap_start > 0 && i < raw.len();
        if bracketed && gap_len <= max_gap {
            let (a, b) = (raw[gap_start - 1], raw[i]);
            for (k, v) in filled[gap_start..i].iter_mut().enumerate() {
                let w = (k + 1) as f64 / (gap_len + 1) as f64;
                *v = a + w * (b - a);
            }
        } else {
            keep[gap_start..i].iter_mut().for_each(|k| *k = false);
        }
    }

    let mut segments = Vec::new();
    let mut seg_start = None;
    for idx in 0..=raw.len() {
        let valid = idx < raw.len() && keep[idx];
        match (valid, seg_start) {
            (true, None) => seg_start = Some(idx),
            (false, Some(s)) => {
                let t0 = start + Duration::seconds(step_seconds * s as i64);
                segments.push(TimeSeries::new(t0, step_seconds, filled[s..idx].to_vec(), unit)?);
                seg_start = None;
            }
            _ => {}
        }
    }
    Ok(segments)
}

/// Outdoor conditions on a common hourly grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherSeries {
    pub t_out: TimeSeries,
    pub ghi: TimeSeries,
    pub dni: TimeSeries,
    pub dhi: TimeSeries,
    pub wind_speed: TimeSeries,
    pub humidity_ratio: TimeSeries,
}

impl WeatherSeries {
    pub fn new(
        t_out: TimeSeries,
        ghi: TimeSeries,
        dni: TimeSeries,
        dhi: TimeSeries,
        wind_speed: TimeSeries,
        humidity_ratio: TimeSeries,
    ) -> Result<Self> {
        let w = Self { t_out, ghi, dni, dhi, wind_speed, humidity_ratio };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for s in self.members() {
            self.t_out.ensure_aligned(s)?;
        }
        for (name, s) in [("ghi", &self.ghi), ("dni", &self.dni), ("dhi", &self.dhi)] {
            if let Some(i) = s.values().iter().position(|v| *v < 0.0) {
                return Err(Error::InvalidArgument(format!("{name} is negative at {}", s.timestamp(i))));
            }
        }
        Ok(())
    }

    fn members(&self) -> [&TimeSeries; 6] {
        [&self.t_out, &self.ghi, &self.dni, &self.dhi, &self.wind_speed, &self.humidity_ratio]
    }

    pub fn len(&self) -> usize {
        self.t_out.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_out.is_empty()
    }

    pub fn interval(&self) -> Interval {
        self.t_out.interval()
    }

    pub fn step_seconds(&self) -> i64 {
        self.t_out.step_seconds()
    }

    pub fn slice(&self, window: &Interval) -> Result<WeatherSeries> {
        Ok(Self {
            t_out: self.t_out.slice(window)?,
            ghi: self.ghi.slice(window)?,
            dni: self.dni.slice(window)?,
            dhi: self.dhi.slice(window)?,
            wind_speed: self.wind_speed.slice(window)?,
            humidity_ratio: self.humidity_ratio.slice(window)?,
        })
    }

    pub fn slice_index(&self, from: usize, to: usize) -> WeatherSeries {
        Self {
            t_out: self.t_out.slice_index(from, to),
            ghi: self.ghi.slice_index(from, to),
            dni: self.dni.slice_index(from, to),
            dhi: self.dhi.slice_index(from, to),
            wind_speed: self.wind_speed.slice_index(from, to),
            humidity_ratio: self.humidity_ratio.slice_index(from, to),
        }
    }
}

/// Metered building data for one analysis period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuredDataset {
    /// Indoor air temperature per zone name (°C).
    pub t_in: BTreeMap<String, TimeSeries>,
    /// Lights, equipment and people heat input per zone name (W).
    pub lep: BTreeMap<String, TimeSeries>,
    /// Delivered heating/cooling summed over zones (W, gain to air).
    pub q_hc_measured: Option<TimeSeries>,
    /// Fuel name to mean power over the step (W).
    pub energy: BTreeMap<String, TimeSeries>,
    pub weather: WeatherSeries,
    /// Optional real-building channels (fan flows, mixed/return temperatures, ...).
    #[serde(default)]
    pub channels: BTreeMap<String, TimeSeries>,
}

impl MeasuredDataset {
    pub fn interval(&self) -> Interval {
        self.weather.interval()
    }

    /// Restricts every member to `window`. `q_hc_measured` is kept only if it covers the window.
    pub fn slice(&self, window: &Interval) -> Result<MeasuredDataset> {
        let slice_map = |m: &BTreeMap<String, TimeSeries>| -> Result<BTreeMap<String, TimeSeries>> {
            m.iter().map(|(k, s)| Ok((k.clone(), s.slice(window)?))).collect()
        };
        let q_hc_measured = match &self.q_hc_measured {
            Some(q) if q.start() <= window.start && q.end() >= window.end => Some(q.slice(window)?),
            _ => None,
        };
        Ok(Self {
            t_in: slice_map(&self.t_in)?,
            lep: slice_map(&self.lep)?,
            q_hc_measured,
            energy: slice_map(&self.energy)?,
            weather: self.weather.slice(window)?,
            channels: slice_map(&self.channels)?,
        })
    }
}
