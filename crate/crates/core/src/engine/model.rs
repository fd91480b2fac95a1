use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BUILDING_SCHEMA_VERSION: u32 = 1;

/// Dry air density used for air-node and infiltration terms (kg/m³).
pub const AIR_DENSITY: f64 = 1.2;
/// Specific heat of air (J/kg·K).
pub const AIR_SPECIFIC_HEAT: f64 = 1006.0;

fn default_schema() -> u32 {
    BUILDING_SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingModel {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub site: Site,
    pub zones: Vec<Zone>,
}

/// Location used for solar geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Site {
    /// Degrees, north positive.
    pub latitude: f64,
    /// Degrees, east positive.
    pub longitude: f64,
    /// Offset of local standard time from UTC in hours (e.g. -5).
    pub utc_offset_hours: f64,
    #[serde(default = "default_ground_reflectance")]
    pub ground_reflectance: f64,
}

fn default_ground_reflectance() -> f64 {
    0.2
}

impl Default for Site {
    fn default() -> Self {
        Self { latitude: 39.95, longitude: -75.17, utc_offset_hours: -5.0, ground_reflectance: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub name: String,
    /// Air node heat capacity (J/K), furniture included.
    pub air_capacitance: f64,
    /// Air volume (m³).
    pub volume: f64,
    /// Nominal infiltration (air changes per hour).
    #[serde(default)]
    pub infiltration_ach: f64,
    /// Share of transmitted solar released directly to the air node.
    pub solar_to_air_fraction: f64,
    /// Share of lights/equipment/people heat released radiatively to surfaces.
    pub lep_radiative_fraction: f64,
    #[serde(default)]
    pub surfaces: Vec<Surface>,
    #[serde(default)]
    pub windows: Vec<Window>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    pub name: String,
    pub area: f64,
    /// Layers from the outside face inwards.
    pub layers: Vec<Layer>,
    /// Exterior surfaces face the outdoors; others are internal mass with an adiabatic back face.
    pub exterior: bool,
    #[serde(default)]
    pub solar_absorptance: f64,
    pub exterior_film: f64,
    pub interior_film: f64,
    /// Share of the zone's transmitted solar absorbed on the inside face.
    #[serde(default)]
    pub solar_gain_share: f64,
    /// Required for absorbed solar on exterior surfaces; ignored otherwise.
    #[serde(default)]
    pub orientation: Option<Orientation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub thickness: f64,
    pub conductivity: f64,
    pub density: f64,
    pub specific_heat: f64,
}

impl Layer {
    /// Conduction resistance of `area` m² of this layer (K/W).
    pub fn resistance(&self, area: f64) -> f64 {
        self.thickness / (self.conductivity * area)
    }

    /// Heat capacity of `area` m² of this layer (J/K).
    pub fn capacitance(&self, area: f64) -> f64 {
        self.density * self.specific_heat * self.thickness * area
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub name: String,
    pub area: f64,
    pub u_value: f64,
    pub shgc: f64,
    pub orientation: Orientation,
}

/// Plane orientation: azimuth clockwise from north, tilt from horizontal (degrees).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Orientation {
    pub azimuth: f64,
    pub tilt: f64,
}

impl Orientation {
    pub const HORIZONTAL: Orientation = Orientation { azimuth: 180.0, tilt: 0.0 };

    pub fn vertical(azimuth: f64) -> Self {
        Self { azimuth, tilt: 90.0 }
    }
}

fn unit_interval(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}

fn invalid(path: &str, msg: impl std::fmt::Display) -> Error {
    Error::InvalidModel(format!("{path}: {msg}"))
}

impl BuildingModel {
    pub fn zone_names(&self) -> Vec<&str> {
        self.zones.iter().map(|z| z.name.as_str()).collect()
    }

    /// Checks every physical invariant, naming the offending element.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != BUILDING_SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("unsupported version {} (expected {BUILDING_SCHEMA_VERSION})", self.schema_version),
            ));
        }
        if self.zones.is_empty() {
            return Err(invalid("zones", "at least one zone is required"));
        }
        if !(-90.0..=90.0).contains(&self.site.latitude) {
            return Err(invalid("site.latitude", "must be within [-90, 90]"));
        }
        if !unit_interval(self.site.ground_reflectance) {
            return Err(invalid("site.ground_reflectance", "must be within [0, 1]"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for zone in &self.zones {
            if !seen.insert(zone.name.as_str()) {
                return Err(invalid(&format!("zones[{}]", zone.name), "duplicate zone name"));
            }
            zone.validate()?;
        }
        Ok(())
    }

    /// Multiplies every layer conductivity of exterior surfaces by `factor`.
    pub fn scale_envelope_conductivities(&mut self, factor: f64) {
        for s in self.zones.iter_mut().flat_map(|z| z.surfaces.iter_mut()).filter(|s| s.exterior) {
            for l in &mut s.layers {
                l.conductivity *= factor;
            }
        }
    }

    pub fn scale_shgc(&mut self, factor: f64) {
        for w in self.zones.iter_mut().flat_map(|z| z.windows.iter_mut()) {
            w.shgc = (w.shgc * factor).min(1.0);
        }
    }
}

impl Zone {
    fn validate(&self) -> Result<()> {
        let zp = format!("zones[{}]", self.name);
        if !(self.air_capacitance > 0.0) {
            return Err(invalid(&zp, "air_capacitance must be > 0"));
        }
        if !(self.volume > 0.0) {
            return Err(invalid(&zp, "volume must be > 0"));
        }
        if !(self.infiltration_ach >= 0.0) {
            return Err(invalid(&zp, "infiltration_ach must be >= 0"));
        }
        if !unit_interval(self.solar_to_air_fraction) {
            return Err(invalid(&zp, "solar_to_air_fraction must be within [0, 1]"));
        }
        if !unit_interval(self.lep_radiative_fraction) {
            return Err(invalid(&zp, "lep_radiative_fraction must be within [0, 1]"));
        }
        let mut names = std::collections::BTreeSet::new();
        for s in &self.surfaces {
            if !names.insert(s.name.as_str()) {
                return Err(invalid(&format!("{zp}.surfaces[{}]", s.name), "duplicate surface name"));
            }
            s.validate(&format!("{zp}.surfaces[{}]", s.name))?;
        }
        for w in &self.windows {
            let wp = format!("{zp}.windows[{}]", w.name);
            if !(w.area > 0.0) {
                return Err(invalid(&wp, "area must be > 0"));
            }
            if !(w.u_value > 0.0) {
                return Err(invalid(&wp, "u_value must be > 0"));
            }
            if !unit_interval(w.shgc) {
                return Err(invalid(&wp, "shgc must be within [0, 1]"));
            }
            check_orientation(&wp, &w.orientation)?;
        }
        let share: f64 = self.surfaces.iter().map(|s| s.solar_gain_share).sum();
        let expected = 1.0 - self.solar_to_air_fraction;
        if (share - expected).abs() > 1e-6 {
            return Err(invalid(
                &zp,
                format!("surface solar_gain_share sums to {share:.6}, expected 1 - solar_to_air_fraction = {expected:.6}"),
            ));
        }
        if self.lep_radiative_fraction > 0.0 && self.surfaces.is_empty() {
            return Err(invalid(&zp, "lep_radiative_fraction > 0 needs at least one surface"));
        }
        Ok(())
    }
}

impl Surface {
    fn validate(&self, sp: &str) -> Result<()> {
        if !(self.area > 0.0) {
            return Err(invalid(sp, "area must be > 0"));
        }
        if self.layers.is_empty() {
            return Err(invalid(sp, "at least one layer is required"));
        }
        if !(self.interior_film > 0.0) {
            return Err(invalid(sp, "interior_film must be > 0"));
        }
        if self.exterior && !(self.exterior_film > 0.0) {
            return Err(invalid(sp, "exterior_film must be > 0"));
        }
        if !unit_interval(self.solar_absorptance) {
            return Err(invalid(sp, "solar_absorptance must be within [0, 1]"));
        }
        if !unit_interval(self.solar_gain_share) {
            return Err(invalid(sp, "solar_gain_share must be within [0, 1]"));
        }
        if let Some(o) = &self.orientation {
            check_orientation(sp, o)?;
        }
        for (i, l) in self.layers.iter().enumerate() {
            let lp = format!("{sp}.layers[{i}]");
            if !(l.thickness > 0.0) {
                return Err(invalid(&lp, "thickness must be > 0"));
            }
            if !(l.conductivity > 0.0) {
                return Err(invalid(&lp, "conductivity must be > 0"));
            }
            // zero density or specific heat gives a massless layer
            if !(l.density >= 0.0) {
                return Err(invalid(&lp, "density must be >= 0"));
            }
            if !(l.specific_heat >= 0.0) {
                return Err(invalid(&lp, "specific_heat must be >= 0"));
            }
        }
        Ok(())
    }

    /// Film-to-film thermal resistance per unit area (m²K/W).
    pub fn r_value(&self) -> f64 {
        let films = 1.0 / self.interior_film + if self.exterior { 1.0 / self.exterior_film } else { 0.0 };
        films + self.layers.iter().map(|l| l.thickness / l.conductivity).sum::<f64>()
    }
}

fn check_orientation(path: &str, o: &Orientation) -> Result<()> {
    if !(0.0..=180.0).contains(&o.tilt) || !o.azimuth.is_finite() {
        return Err(invalid(path, "orientation tilt must be within [0, 180] degrees"));
    }
    Ok(())
}
