//! Synthetic climates and "measured" data from a software model of the real building.

use std::collections::BTreeMap;

use chrono::{Datelike, Duration, NaiveDateTime, Timelike, Weekday};
use epe_core::engine::solar::sun_vector;
use epe_core::engine::{discretize, simulate, BuildingModel, RunSpec, Site};
use epe_core::hvac::{plant_energy, HvacPlant, ProcessLoadBox};
use epe_core::{MeasuredDataset, Result, TimeSeries, Unit, WeatherSeries};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Climate {
    /// Mid-latitude east-coast analog.
    Temperate,
    /// Desert south-west analog: hot, dry, mostly clear.
    HotDry,
}

struct ClimateProfile {
    annual_mean: f64,
    annual_swing: f64,
    daily_swing: f64,
    /// Range of the daily clear-sky fraction.
    clearness: (f64, f64),
    humidity: (f64, f64),
}

impl Climate {
    pub fn site(&self) -> Site {
        match self {
            Climate::Temperate => Site::default(),
            Climate::HotDry => Site { latitude: 33.45, longitude: -112.07, utc_offset_hours: -7.0, ground_reflectance: 0.25 },
        }
    }

    fn profile(&self) -> ClimateProfile {
        match self {
            Climate::Temperate => ClimateProfile {
                annual_mean: 12.5,
                annual_swing: 11.5,
                daily_swing: 5.0,
                clearness: (0.25, 1.0),
                humidity: (0.003, 0.013),
            },
            Climate::HotDry => ClimateProfile {
                annual_mean: 23.5,
                annual_swing: 11.0,
                daily_swing: 8.0,
                clearness: (0.7, 1.0),
                humidity: (0.003, 0.008),
            },
        }
    }
}

/// Hourly weather with clear-sky irradiance from the sun position at `site`,
/// daily cloudiness and a seasonal temperature cycle with day-to-day drift.
pub fn synthetic_weather(climate: Climate, start: NaiveDateTime, hours: usize, seed: u64) -> Result<WeatherSeries> {
    let p = climate.profile();
    let site = climate.site();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let days = hours / 24 + 2;
    let mut drift = 0.0;
    let daily: Vec<(f64, f64, f64, f64)> = (0..days)
        .map(|_| {
            drift = 0.7 * drift + rng.random_range(-2.5..2.5);
            let clear = rng.random_range(p.clearness.0..p.clearness.1);
            let wind = rng.random_range(1.0..6.0);
            let hum = rng.random_range(0.0..1.0);
            (drift, clear, wind, hum)
        })
        .collect();
    let day0 = start.date();
    let mut cols: [Vec<f64>; 6] = Default::default();
    for h in 0..hours {
        let t = start + Duration::hours(h as i64);
        let (drift, clear, wind, hum) = daily[(t.date() - day0).num_days() as usize];
        let season = -((t.ordinal() as f64 - 20.0) / 365.0 * std::f64::consts::TAU).cos();
        // warmest mid-afternoon
        let diurnal = ((t.hour() as f64 - 9.0) / 24.0 * std::f64::consts::TAU).sin();
        let t_out = p.annual_mean + p.annual_swing * season + p.daily_swing * diurnal + drift;

        let up = sun_vector(&site, t + Duration::minutes(30)).up;
        let (ghi, dni, dhi) = if up > 0.0 {
            let clear_ghi = 1050.0 * up.powf(1.15);
            let ghi = clear_ghi * (0.25 + 0.75 * clear);
            let diffuse_share = 0.15 + 0.65 * (1.0 - clear);
            let dhi = ghi * diffuse_share;
            (ghi, (ghi - dhi) / up.max(0.05), dhi)
        } else {
            (0.0, 0.0, 0.0)
        };
        let w = p.humidity.0 + (p.humidity.1 - p.humidity.0) * (0.5 + 0.5 * season) * (0.7 + 0.3 * hum);
        for (c, v) in cols.iter_mut().zip([t_out, ghi, dni, dhi, wind, w]) {
            c.push(v);
        }
    }
    let [t, g, b, d, ws, hr] = cols;
    let s = |v, u| TimeSeries::new(start, 3600, v, u);
    WeatherSeries::new(
        s(t, Unit::Celsius)?,
        s(g, Unit::WattPerSquareMeter)?,
        s(b, Unit::WattPerSquareMeter)?,
        s(d, Unit::WattPerSquareMeter)?,
        s(ws, Unit::MeterPerSecond)?,
        s(hr, Unit::Dimensionless)?,
    )
}

/// Occupancy-driven setpoints and lights/equipment/people gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub occupied_setpoint: f64,
    pub unoccupied_setpoint: f64,
    /// `[first, last)` occupied hour of the day.
    pub occupied_hours: (u32, u32),
    #[serde(default = "weekdays")]
    pub weekdays_only: bool,
    /// Building total (W), split between zones by volume.
    pub lep_occupied: f64,
    pub lep_unoccupied: f64,
}

fn weekdays() -> bool {
    true
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            occupied_setpoint: 22.0,
            unoccupied_setpoint: 26.0,
            occupied_hours: (7, 19),
            weekdays_only: true,
            lep_occupied: 60_000.0,
            lep_unoccupied: 10_000.0,
        }
    }
}

impl Schedule {
    pub fn occupied(&self, t: NaiveDateTime) -> bool {
        let weekend = matches!(t.weekday(), Weekday::Sat | Weekday::Sun);
        (self.occupied_hours.0..self.occupied_hours.1).contains(&t.hour()) && !(self.weekdays_only && weekend)
    }

    /// Setpoint and LEP series per zone over the weather span.
    pub fn zone_series(&self, model: &BuildingModel, weather: &WeatherSeries) -> Result<(BTreeMap<String, TimeSeries>, BTreeMap<String, TimeSeries>)> {
        let axis = &weather.t_out;
        let occ: Vec<bool> = axis.timestamps().map(|t| self.occupied(t)).collect();
        let sp: Vec<f64> = occ.iter().map(|o| if *o { self.occupied_setpoint } else { self.unoccupied_setpoint }).collect();
        let total_volume: f64 = model.zones.iter().map(|z| z.volume).sum();
        let mut t_in = BTreeMap::new();
        let mut lep = BTreeMap::new();
        for z in &model.zones {
            let share = z.volume / total_volume;
            let gains = occ.iter().map(|o| share * if *o { self.lep_occupied } else { self.lep_unoccupied }).collect();
            t_in.insert(z.name.clone(), axis.with_values(sp.clone(), Unit::Celsius)?);
            lep.insert(z.name.clone(), axis.with_values(gains, Unit::Watt)?);
        }
        Ok((t_in, lep))
    }
}

/// Metered plant channel of a synthetic building.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPlant<'a> {
    pub channel: &'a str,
    pub plant: &'a HvacPlant,
}

/// Track-mode simulation of `real` under `schedule`: the indoor temperatures
/// are the setpoints and the delivered load is the measured `q_hc`. With a
/// plant, its energy input is metered on `plant.channel`. Both carry seeded
/// multiplicative Gaussian noise of relative σ `noise`.
pub fn synthesize_measurements(
    real: &BuildingModel,
    weather: &WeatherSeries,
    schedule: &Schedule,
    noise: f64,
    plant: Option<SyntheticPlant<'_>>,
    seed: u64,
) -> Result<MeasuredDataset> {
    let (t_in, lep) = schedule.zone_series(real, weather)?;
    let names: Vec<&str> = real.zone_names();
    let spec = RunSpec::track(
        weather.clone(),
        names.iter().map(|n| lep[*n].clone()).collect(),
        names.iter().map(|n| t_in[*n].clone()).collect(),
        weather.interval(),
    );
    let run = simulate(&discretize(real)?, &spec)?;
    let q_hc = TimeSeries::sum_all(&run.ideal_load)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut noisy = |s: &TimeSeries| -> Result<TimeSeries> {
        if noise == 0.0 {
            return Ok(s.clone());
        }
        let v = s.values().iter().map(|x| x * (1.0 + noise * normal.sample(&mut rng))).collect();
        s.with_values(v, s.unit())
    };

    let mut energy = BTreeMap::new();
    if let Some(p) = plant {
        let e = plant_energy(&ProcessLoadBox { load: q_hc.clone(), plant: p.plant.clone() }, weather)?;
        energy.insert(p.channel.to_string(), noisy(&e.energy)?);
    }
    Ok(MeasuredDataset {
        t_in,
        lep,
        q_hc_measured: Some(noisy(&q_hc)?),
        energy,
        weather: weather.clone(),
        channels: BTreeMap::new(),
    })
}
