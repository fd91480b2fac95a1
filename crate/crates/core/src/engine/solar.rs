//! Sun position and isotropic-sky transposition of weather-file irradiance.

use chrono::{Datelike, Duration, NaiveDateTime, Timelike};

use super::model::{BuildingModel, Orientation, Site};
use crate::error::Result;
use crate::timeseries::{TimeSeries, Unit, WeatherSeries};

/// Unit vector towards the sun in (east, north, up) coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SunVector {
    pub east: f64,
    pub north: f64,
    pub up: f64,
}

pub fn sun_vector(site: &Site, local_time: NaiveDateTime) -> SunVector {
    let day = local_time.ordinal() as f64;
    let b = (day - 1.0) * 2.0 * std::f64::consts::PI / 365.0;
    // Spencer's series for declination and equation of time
    let decl = 0.006918 - 0.399912 * b.cos() + 0.070257 * b.sin() - 0.006758 * (2.0 * b).cos()
        + 0.000907 * (2.0 * b).sin()
        - 0.002697 * (3.0 * b).cos()
        + 0.00148 * (3.0 * b).sin();
    let eot_minutes = 229.18
        * (0.000075 + 0.001868 * b.cos() - 0.032077 * b.sin() - 0.014615 * (2.0 * b).cos() - 0.04089 * (2.0 * b).sin());
    let clock_hours = local_time.hour() as f64 + local_time.minute() as f64 / 60.0 + local_time.second() as f64 / 3600.0;
    let meridian = 15.0 * site.utc_offset_hours;
    let solar_hours = clock_hours + (4.0 * (site.longitude - meridian) + eot_minutes) / 60.0;
    let hour_angle = (15.0 * (solar_hours - 12.0)).to_radians();
    let lat = site.latitude.to_radians();

    SunVector {
        east: -decl.cos() * hour_angle.sin(),
        north: lat.cos() * decl.sin() - lat.sin() * decl.cos() * hour_angle.cos(),
        up: lat.sin() * decl.sin() + lat.cos() * decl.cos() * hour_angle.cos(),
    }
}

/// Irradiance incident on a plane (W/m²) from global, direct-normal and diffuse components.
pub fn incident_irradiance(orientation: &Orientation, sun: &SunVector, ghi: f64, dni: f64, dhi: f64, ground_reflectance: f64) -> f64 {
    let tilt = orientation.tilt.to_radians();
    let az = orientation.azimuth.to_radians();
    let cos_tilt = tilt.cos();
    let beam = if sun.up > 0.0 {
        let cos_incidence = tilt.sin() * az.sin() * sun.east + tilt.sin() * az.cos() * sun.north + cos_tilt * sun.up;
        dni * cos_incidence.max(0.0)
    } else {
        0.0
    };
    let sky = dhi * (1.0 + cos_tilt) / 2.0;
    let ground = ghi * ground_reflectance * (1.0 - cos_tilt) / 2.0;
    beam + sky + ground
}

/// Per-step incident irradiance on `orientation`, evaluated at mid-step.
pub fn plane_irradiance(site: &Site, orientation: &Orientation, weather: &WeatherSeries) -> Vec<f64> {
    let half = Duration::seconds(weather.step_seconds() / 2);
    (0..weather.len())
        .map(|i| {
            let (ghi, dni, dhi) = (weather.ghi.values()[i], weather.dni.values()[i], weather.dhi.values()[i]);
            if ghi <= 0.0 && dni <= 0.0 && dhi <= 0.0 {
                return 0.0;
            }
            let sun = sun_vector(site, weather.t_out.timestamp(i) + half);
            incident_irradiance(orientation, &sun, ghi, dni, dhi, site.ground_reflectance)
        })
        .collect()
}

/// Solar transmitted through the windows of each zone (W).
pub fn solar_gains(model: &BuildingModel, weather: &WeatherSeries) -> Result<Vec<TimeSeries>> {
    model
        .zones
        .iter()
        .map(|zone| {
            let mut total = vec![0.0; weather.len()];
            for w in &zone.windows {
                let irr = plane_irradiance(&model.site, &w.orientation, weather);
                for (t, i) in total.iter_mut().zip(irr) {
                    *t += w.shgc * w.area * i;
                }
            }
            weather.t_out.with_values(total, Unit::Watt)
        })
        .collect()
}
