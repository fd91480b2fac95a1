//! Plant models driven by the reconciled load, and HVAC parameter scans.
//!
//! Loads use the delivered-heat sign: positive is heating, negative is
//! cooling. A DX plant serves cooling, a boiler serves heating; loads within
//! the deadband, or of the other sign, cost nothing.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomposition::{Flow, HeatFlowSet};
use crate::error::{Error, Result};
use crate::estimation::ShellParameters;
use crate::residual_net::{standard_inputs, ResidualNet};
use crate::timeseries::{Interval, TimeSeries, Unit, WeatherSeries};

/// Loads smaller than this (W) are treated as zero.
pub const LOAD_DEADBAND: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantKind {
    DxCooling,
    Boiler,
}

/// `c0 + c1·x + c2·x² + c3·y + c4·y² + c5·x·y`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquadratic(pub [f64; 6]);

impl Biquadratic {
    pub const ONE: Biquadratic = Biquadratic([1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);

    /// DX efficiency modifier on outdoor temperature (°C) and humidity ratio,
    /// equal to one at 35 °C and 0.010:
    /// `1 − 0.012·(T − 35) − 0.0001·(T − 35)² − 10·(w − 0.010)`.
    pub const DX_DEFAULT: Biquadratic = Biquadratic([1.3975, -0.005, -0.0001, -10.0, 0.0, 0.0]);

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let c = &self.0;
        c[0] + c[1] * x + c[2] * x * x + c[3] * y + c[4] * y * y + c[5] * x * y
    }
}

/// Part-load efficiency adjustment as a function of part-load ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "form")]
pub enum PartLoadCurve {
    /// `plr / (c + (1 − c)·plr)`
    Rational { c: f64 },
    /// `Σ a_i·plr^i`
    Polynomial { coefficients: Vec<f64> },
}

impl PartLoadCurve {
    pub fn dx_default() -> Self {
        PartLoadCurve::Rational { c: 0.15 }
    }

    pub fn constant() -> Self {
        PartLoadCurve::Polynomial { coefficients: vec![1.0] }
    }

    pub fn eval(&self, plr: f64) -> f64 {
        match self {
            PartLoadCurve::Rational { c } => plr / (c + (1.0 - c) * plr),
            PartLoadCurve::Polynomial { coefficients } => coefficients.iter().rev().fold(0.0, |acc, a| acc * plr + a),
        }
    }

    /// `served / adjust(served / capacity)`, finite as the load goes to zero.
    fn input_per_output(&self, served: f64, capacity: f64) -> f64 {
        let plr = served / capacity;
        match self {
            PartLoadCurve::Rational { c } => capacity * (c + (1.0 - c) * plr),
            _ => served / self.eval(plr),
        }
    }
}

fn default_clip_fraction() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HvacPlant {
    pub kind: PlantKind,
    /// Rated COP (DX) or rated efficiency (boiler).
    pub rated: f64,
    /// W.
    pub capacity: f64,
    /// On outdoor temperature (°C) and humidity ratio.
    pub temp_curve: Biquadratic,
    pub plf_curve: PartLoadCurve,
    /// Largest share of served hours allowed to hit capacity.
    #[serde(default = "default_clip_fraction")]
    pub max_clipped_fraction: f64,
}

impl HvacPlant {
    pub fn dx(rated_cop: f64, capacity: f64) -> Self {
        Self {
            kind: PlantKind::DxCooling,
            rated: rated_cop,
            capacity,
            temp_curve: Biquadratic::DX_DEFAULT,
            plf_curve: PartLoadCurve::dx_default(),
            max_clipped_fraction: default_clip_fraction(),
        }
    }

    pub fn boiler(rated_efficiency: f64, capacity: f64) -> Self {
        Self {
            kind: PlantKind::Boiler,
            rated: rated_efficiency,
            capacity,
            temp_curve: Biquadratic::ONE,
            plf_curve: PartLoadCurve::constant(),
            max_clipped_fraction: default_clip_fraction(),
        }
    }

    pub fn with_flat_curves(mut self) -> Self {
        self.temp_curve = Biquadratic::ONE;
        self.plf_curve = PartLoadCurve::constant();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rated > 0.0) {
            return Err(Error::InvalidArgument("rated COP/efficiency must be > 0".into()));
        }
        if self.kind == PlantKind::Boiler && self.rated > 1.0 {
            return Err(Error::InvalidArgument("boiler efficiency must be in (0, 1]".into()));
        }
        if !(self.capacity > 0.0) {
            return Err(Error::InvalidArgument("capacity must be > 0".into()));
        }
        if (self.plf_curve.eval(1.0) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument("part-load curve must equal 1 at full load".into()));
        }
        Ok(())
    }

    /// Load this plant serves at a delivered-heat value (W, ≥ 0).
    pub fn service_load(&self, delivered: f64) -> f64 {
        let q = match self.kind {
            PlantKind::DxCooling => -delivered,
            PlantKind::Boiler => delivered,
        };
        if q > LOAD_DEADBAND { q } else { 0.0 }
    }
}

/// The shell replaced by a given load on a plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessLoadBox {
    /// Delivered heat the plant side must supply (W, heating positive).
    pub load: TimeSeries,
    pub plant: HvacPlant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantEnergy {
    /// Electricity (DX) or fuel (boiler) input, hourly mean (W).
    pub energy: TimeSeries,
    /// Service load above capacity (W).
    pub unmet: TimeSeries,
    pub clipped_hours: usize,
    pub served_hours: usize,
}

/// Energy input of the plant serving `bx.load`.
pub fn plant_energy(bx: &ProcessLoadBox, weather: &WeatherSeries) -> Result<PlantEnergy> {
    let plant = &bx.plant;
    plant.validate()?;
    bx.load.ensure_aligned(&weather.t_out)?;
    let n = bx.load.len();
    let mut energy = vec![0.0; n];
    let mut unmet = vec![0.0; n];
    let (mut clipped, mut served_hours) = (0, 0);
    for t in 0..n {
        let q = plant.service_load(bx.load.values()[t]);
        if q == 0.0 {
            continue;
        }
        served_hours += 1;
        let served = q.min(plant.capacity);
        if q > plant.capacity {
            clipped += 1;
            unmet[t] = q - plant.capacity;
        }
        let modifier = plant.temp_curve.eval(weather.t_out.values()[t], weather.humidity_ratio.values()[t]);
        if !(modifier > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "temperature curve is {modifier} at T_out = {} °C, w = {}",
                weather.t_out.values()[t],
                weather.humidity_ratio.values()[t]
            )));
        }
        energy[t] = plant.plf_curve.input_per_output(served, plant.capacity) / (plant.rated * modifier);
    }
    if served_hours > 0 && clipped as f64 > plant.max_clipped_fraction * served_hours as f64 {
        return Err(Error::CapacityExceeded { hours: clipped, total: served_hours, limit: 100.0 * plant.max_clipped_fraction });
    }
    Ok(PlantEnergy {
        energy: bx.load.with_values(energy, Unit::Watt)?,
        unmet: bx.load.with_values(unmet, Unit::Watt)?,
        clipped_hours: clipped,
        served_hours,
    })
}

/// Best estimate of the delivered load: fitted shell model plus, when
/// given, the residual network's correction.
pub fn reconciled_load(flows: &HeatFlowSet, params: &ShellParameters, net: Option<&ResidualNet>) -> Result<TimeSeries> {
    let base = params.predict(flows)?;
    match net {
        None => Ok(base),
        Some(net) => base.try_add(&net.predict(&standard_inputs(flows, params)?)?),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub min: f64,
    pub max: f64,
    pub step: f64,
    /// Golden-section refinement between the neighbours of the best point.
    pub refine: bool,
}

impl Grid {
    pub fn cop_default() -> Self {
        Self { min: 2.0, max: 6.0, step: 0.025, refine: true }
    }

    pub fn points(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0) || !(self.max >= self.min) {
            return Err(Error::InvalidArgument(format!("bad grid {}..{} step {}", self.min, self.max, self.step)));
        }
        let n = ((self.max - self.min) / self.step + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| self.min + i as f64 * self.step).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub best: f64,
    pub best_rmse: f64,
    /// `(value, rmse)` per grid point.
    pub rmse_curve: Vec<(f64, f64)>,
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

/// RMSE of simulated against measured plant energy over a one-parameter
/// family of plants.
pub fn scan_parameter(
    load: &TimeSeries,
    weather: &WeatherSeries,
    e_measured: &TimeSeries,
    grid: &Grid,
    plant_at: impl Fn(f64) -> HvacPlant + Sync,
) -> Result<ScanResult> {
    load.ensure_aligned(e_measured)?;
    let objective = |x: f64| -> Result<f64> {
        let bx = ProcessLoadBox { load: load.clone(), plant: plant_at(x) };
        Ok(rmse(plant_energy(&bx, weather)?.energy.values(), e_measured.values()))
    };
    let points = grid.points()?;
    let curve: Vec<(f64, f64)> = points.par_iter().map(|x| Ok((*x, objective(*x)?))).collect::<Result<_>>()?;
    let (lo, hi) = curve.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), (_, r)| (lo.min(*r), hi.max(*r)));
    if hi == 0.0 || (hi - lo) / hi < 1e-6 {
        return Err(Error::Unidentifiable(format!(
            "RMSE varies by less than 1e-6 relative over {}..{}",
            grid.min, grid.max
        )));
    }
    let i = curve.iter().enumerate().min_by(|a, b| a.1 .1.total_cmp(&b.1 .1)).map(|(i, _)| i).unwrap();
    let (mut best, mut best_rmse) = curve[i];
    if grid.refine && curve.len() > 2 {
        let (mut a, mut b) = (curve[i.saturating_sub(1)].0, curve[(i + 1).min(curve.len() - 1)].0);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
        let (mut fc, mut fd) = (objective(c)?, objective(d)?);
        for _ in 0..60 {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - g * (b - a);
                fc = objective(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + g * (b - a);
                fd = objective(d)?;
            }
        }
        let (x, f) = if fc < fd { (c, fc) } else { (d, fd) };
        if f < best_rmse {
            (best, best_rmse) = (x, f);
        }
    }
    Ok(ScanResult { best, best_rmse, rmse_curve: curve })
}

/// Rated COP minimizing plant-energy RMSE, other plant settings held.
pub fn estimate_cop(bx: &ProcessLoadBox, weather: &WeatherSeries, e_measured: &TimeSeries, grid: &Grid) -> Result<ScanResult> {
    if bx.plant.kind != PlantKind::DxCooling {
        return Err(Error::InvalidArgument("COP estimation needs a DX cooling plant".into()));
    }
    scan_parameter(&bx.load, weather, e_measured, grid, |cop| HvacPlant { rated: cop, ..bx.plant.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoilerPoint {
    pub p_blc: f64,
    pub p_boiler_eff: f64,
    pub sigma: f64,
}

/// Boiler efficiency implied by each `p_blc`, from
/// `p_blc·Q_BLC + eff·gas + Q_in + Q_sun + Q_LEP + q_vent + q_inf ≈ 0`
/// over the hours inside `windows`.
pub fn boiler_blc_relation(flows: &HeatFlowSet, gas: &TimeSeries, windows: &[Interval], p_blc_grid: &[f64]) -> Result<Vec<BoilerPoint>> {
    flows.building.q1.ensure_aligned(gas)?;
    let air = flows.building.air_exchange();
    let rows: Vec<usize> = (0..gas.len()).filter(|t| windows.iter().any(|w| w.contains(gas.timestamp(*t)))).collect();
    if rows.len() < 2 {
        return Err(Error::InsufficientData(format!("{} hours inside the selected windows", rows.len())));
    }
    let g: Vec<f64> = rows.iter().map(|t| gas.values()[*t]).collect();
    let gg: f64 = g.iter().map(|v| v * v).sum();
    if gg == 0.0 {
        return Err(Error::Unidentifiable("gas use is zero in every selected hour".into()));
    }
    let blc: Vec<f64> = rows.iter().map(|t| flows.get(Flow::Blc).values()[*t]).collect();
    let secondary: Vec<f64> = rows
        .iter()
        .map(|t| [Flow::In, Flow::Sun, Flow::Lep].iter().map(|f| flows.get(*f).values()[*t]).sum::<f64>() + air.values()[*t])
        .collect();
    let dof = (rows.len() - 1) as f64;
    Ok(p_blc_grid
        .iter()
        .map(|p| {
            let rest: Vec<f64> = blc.iter().zip(&secondary).map(|(b, s)| p * b + s).collect();
            let eff = -g.iter().zip(&rest).map(|(a, b)| a * b).sum::<f64>() / gg;
            let ssr: f64 = g.iter().zip(&rest).map(|(a, b)| (eff * a + b).powi(2)).sum();
            BoilerPoint { p_blc: *p, p_boiler_eff: eff, sigma: (ssr / dof / gg).sqrt() }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_curves_are_normalized() {
        assert!((Biquadratic::DX_DEFAULT.eval(35.0, 0.010) - 1.0).abs() < 1e-12);
        let expanded = |t: f64, w: f64| 1.0 - 0.012 * (t - 35.0) - 0.0001 * (t - 35.0).powi(2) - 10.0 * (w - 0.010);
        for (t, w) in [(20.0, 0.008), (40.0, 0.015), (28.0, 0.012)] {
            assert!((Biquadratic::DX_DEFAULT.eval(t, w) - expanded(t, w)).abs() < 1e-12);
        }
        assert_eq!(PartLoadCurve::dx_default().eval(1.0), 1.0);
        assert_eq!(PartLoadCurve::constant().eval(0.3), 1.0);
    }

    #[test]
    fn rational_curve_input_matches_direct_formula() {
        let c = PartLoadCurve::dx_default();
        let cap = 1000.0;
        for q in [10.0, 300.0, 1000.0] {
            let direct = q / c.eval(q / cap);
            assert!((c.input_per_output(q, cap) - direct).abs() < 1e-9);
        }
    }

    #[test]
    fn deadband_and_direction() {
        let dx = HvacPlant::dx(3.5, 1e5);
        assert_eq!(dx.service_load(-40.0), 0.0);
        assert_eq!(dx.service_load(-400.0), 400.0);
        assert_eq!(dx.service_load(400.0), 0.0);
        let boiler = HvacPlant::boiler(0.85, 1e5);
        assert_eq!(boiler.service_load(400.0), 400.0);
        assert_eq!(boiler.service_load(-400.0), 0.0);
    }
}
