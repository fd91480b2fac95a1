//! Macro heat flows from five specialized simulations of the audit model.
//!
//! Every flow is a heat gain to the air node. The five runs are ideal-load
//! runs and satisfy, by construction,
//! `q_blc + q_in + q_sun + q_lep + q1 = 0` at every step.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::model::{BuildingModel, AIR_DENSITY, AIR_SPECIFIC_HEAT};
use crate::engine::{discretize, initial_state, simulate, RunSpec, Warmup};
use crate::error::{Error, Result};
use crate::timeseries::{Interval, MeasuredDataset, TimeSeries, Unit};

/// The four macro flows that carry estimable parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flow {
    Blc,
    In,
    Sun,
    Lep,
}

impl Flow {
    pub const ALL: [Flow; 4] = [Flow::Blc, Flow::In, Flow::Sun, Flow::Lep];

    pub fn name(&self) -> &'static str {
        match self {
            Flow::Blc => "blc",
            Flow::In => "in",
            Flow::Sun => "sun",
            Flow::Lep => "lep",
        }
    }
}

impl fmt::Display for Flow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "q_{}", self.name())
    }
}

impl FromStr for Flow {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim_start_matches("q_") {
            "blc" => Ok(Flow::Blc),
            "in" => Ok(Flow::In),
            "sun" => Ok(Flow::Sun),
            "lep" => Ok(Flow::Lep),
            other => Err(Error::InvalidArgument(format!("unknown flow {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarmupPolicy {
    /// Each run warms up on its own first-day inputs.
    #[default]
    PerRun,
    /// All runs start from the warm-up state of run 1.
    Shared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionConfig {
    pub t_fixed1: f64,
    pub t_fixed2: f64,
    pub window: Interval,
    #[serde(default)]
    pub warmup: WarmupPolicy,
}

impl DecompositionConfig {
    pub fn new(window: Interval) -> Self {
        Self { t_fixed1: 20.0, t_fixed2: 25.0, window, warmup: WarmupPolicy::PerRun }
    }

    pub fn validate(&self) -> Result<()> {
        if (self.t_fixed1 - self.t_fixed2).abs() < 1e-9 {
            return Err(Error::InvalidArgument("t_fixed1 and t_fixed2 must differ".into()));
        }
        if self.window.duration_seconds() < 86_400 {
            return Err(Error::Window(format!("{} is shorter than 24 h", self.window)));
        }
        Ok(())
    }
}

/// Delivered loads of the five runs, indexed `[run][zone]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiveRuns {
    pub zones: Vec<String>,
    pub q: [Vec<TimeSeries>; 5],
}

/// Macro flows for one zone or the whole building.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flows {
    pub q_blc: TimeSeries,
    pub q_in: TimeSeries,
    pub q_sun: TimeSeries,
    pub q_lep: TimeSeries,
    #[serde(default)]
    pub q_vent: Option<TimeSeries>,
    #[serde(default)]
    pub q_inf: Option<TimeSeries>,
    /// Run-1 delivered load.
    pub q1: TimeSeries,
}

impl Flows {
    pub fn get(&self, flow: Flow) -> &TimeSeries {
        match flow {
            Flow::Blc => &self.q_blc,
            Flow::In => &self.q_in,
            Flow::Sun => &self.q_sun,
            Flow::Lep => &self.q_lep,
        }
    }

    pub fn len(&self) -> usize {
        self.q1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q1.is_empty()
    }

    /// Ventilation and infiltration flows present, summed (zero if neither).
    pub fn air_exchange(&self) -> TimeSeries {
        let mut total = self.q1.zeros_like();
        for s in [&self.q_vent, &self.q_inf].into_iter().flatten() {
            total = total.try_add(s).expect("flows are aligned");
        }
        total
    }

    /// Largest relative violation of `q_blc + q_in + q_sun + q_lep + q1 = 0`.
    pub fn identity_error(&self) -> f64 {
        let scale = self.q1.max_abs().max(f64::MIN_POSITIVE);
        (0..self.len())
            .map(|t| {
                let s: f64 = Flow::ALL.iter().map(|f| self.get(*f).values()[t]).sum::<f64>() + self.q1.values()[t];
                s.abs()
            })
            .fold(0.0, f64::max)
            / scale
    }

    fn sum(parts: &[&Flows]) -> Result<Flows> {
        let pick = |f: &dyn Fn(&Flows) -> &TimeSeries| TimeSeries::sum_all(parts.iter().map(|p| f(p)));
        let pick_opt = |f: &dyn Fn(&Flows) -> &Option<TimeSeries>| -> Result<Option<TimeSeries>> {
            if parts.iter().all(|p| f(p).is_some()) {
                TimeSeries::sum_all(parts.iter().map(|p| f(p).as_ref().unwrap())).map(Some)
            } else {
                Ok(None)
            }
        };
        Ok(Flows {
            q_blc: pick(&|p| &p.q_blc)?,
            q_in: pick(&|p| &p.q_in)?,
            q_sun: pick(&|p| &p.q_sun)?,
            q_lep: pick(&|p| &p.q_lep)?,
            q_vent: pick_opt(&|p| &p.q_vent)?,
            q_inf: pick_opt(&|p| &p.q_inf)?,
            q1: pick(&|p| &p.q1)?,
        })
    }
}

/// Building-summed flows plus the per-zone breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatFlowSet {
    pub building: Flows,
    pub per_zone: BTreeMap<String, Flows>,
}

impl HeatFlowSet {
    pub fn get(&self, flow: Flow) -> &TimeSeries {
        self.building.get(flow)
    }

    pub fn len(&self) -> usize {
        self.building.len()
    }

    pub fn is_empty(&self) -> bool {
        self.building.is_empty()
    }

    /// Building-level flows over `window`; the per-zone breakdown is sliced too.
    pub fn slice(&self, window: &Interval) -> Result<HeatFlowSet> {
        let slice = |f: &Flows| -> Result<Flows> {
            Ok(Flows {
                q_blc: f.q_blc.slice(window)?,
                q_in: f.q_in.slice(window)?,
                q_sun: f.q_sun.slice(window)?,
                q_lep: f.q_lep.slice(window)?,
                q_vent: f.q_vent.as_ref().map(|s| s.slice(window)).transpose()?,
                q_inf: f.q_inf.as_ref().map(|s| s.slice(window)).transpose()?,
                q1: f.q1.slice(window)?,
            })
        };
        Ok(HeatFlowSet {
            building: slice(&self.building)?,
            per_zone: self.per_zone.iter().map(|(k, f)| Ok((k.clone(), slice(f)?))).collect::<Result<_>>()?,
        })
    }

    /// Attaches ventilation/infiltration channels (building level).
    pub fn with_air_exchange(mut self, extra: VentInfilFlows) -> Self {
        self.building.q_vent = extra.q_vent;
        self.building.q_inf = extra.q_inf;
        self
    }
}

fn zone_inputs(model: &BuildingModel, data: &MeasuredDataset) -> Result<(Vec<TimeSeries>, Vec<TimeSeries>)> {
    let mut t_in = Vec::new();
    let mut lep = Vec::new();
    for z in &model.zones {
        t_in.push(
            data.t_in
                .get(&z.name)
                .cloned()
                .ok_or_else(|| Error::MissingInput(format!("measured indoor temperature for zone {}", z.name)))?,
        );
        lep.push(
            data.lep
                .get(&z.name)
                .cloned()
                .ok_or_else(|| Error::MissingInput(format!("lights/equipment/people series for zone {}", z.name)))?,
        );
    }
    Ok((t_in, lep))
}

/// Runs the five specialized ideal-load simulations of the audit model.
pub fn run_five(model: &BuildingModel, data: &MeasuredDataset, cfg: &DecompositionConfig) -> Result<FiveRuns> {
    cfg.validate()?;
    let system = discretize(model)?;
    let (t_in, lep) = zone_inputs(model, data)?;
    let nz = model.zones.len();
    let w = cfg.window;
    let weather = data.weather.clone();

    let measured = RunSpec::track(weather, lep, t_in, w);
    let mut specs = [
        measured.clone(),
        measured.clone().without_solar(),
        measured.clone().without_solar().with_fixed_temperatures(vec![cfg.t_fixed1; nz]),
        measured.clone().without_solar().with_fixed_temperatures(vec![cfg.t_fixed2; nz]),
        measured.clone().without_solar().without_lep().with_fixed_temperatures(vec![cfg.t_fixed1; nz]),
    ];
    if cfg.warmup == WarmupPolicy::Shared {
        let x0 = initial_state(&system, &specs[0])?;
        for s in &mut specs {
            s.warmup = Warmup::State(x0.clone());
        }
    }

    let results: Vec<Vec<TimeSeries>> =
        specs.par_iter().map(|s| simulate(&system, s).map(|r| r.ideal_load)).collect::<Result<_>>()?;
    let q: [Vec<TimeSeries>; 5] = results.try_into().expect("five runs");
    Ok(FiveRuns { zones: model.zones.iter().map(|z| z.name.clone()).collect(), q })
}

/// Forms the macro flows from the five runs and the measured indoor temperatures.
pub fn heat_flows(runs: &FiveRuns, data: &MeasuredDataset, cfg: &DecompositionConfig) -> Result<HeatFlowSet> {
    cfg.validate()?;
    let (t1, t2) = (cfg.t_fixed1, cfg.t_fixed2);
    let mut per_zone = BTreeMap::new();
    for (z, name) in runs.zones.iter().enumerate() {
        let [q1, q2, q3, q4, q5] = [0, 1, 2, 3, 4].map(|r| &runs.q[r][z]);
        for q in [q2, q3, q4, q5] {
            q1.ensure_aligned(q)?;
        }
        let t_in = data
            .t_in
            .get(name)
            .ok_or_else(|| Error::MissingInput(format!("measured indoor temperature for zone {name}")))?
            .slice(&q1.interval())?;

        let n = q1.len();
        let (v1, v2, v3, v4, v5) = (q1.values(), q2.values(), q3.values(), q4.values(), q5.values());
        let mut sun = Vec::with_capacity(n);
        let mut inside = Vec::with_capacity(n);
        let mut blc = Vec::with_capacity(n);
        let mut lep = Vec::with_capacity(n);
        for t in 0..n {
            let tm = t_in.values()[t];
            let w3 = (tm - t2) / (t1 - t2);
            let w4 = (t1 - tm) / (t1 - t2);
            let q_in = -v2[t] + v3[t] * w3 + v4[t] * w4;
            sun.push(v2[t] - v1[t]);
            inside.push(q_in);
            blc.push(-v2[t] + v3[t] - v5[t] - q_in);
            lep.push(-v3[t] + v5[t]);
        }
        let mk = |v| q1.with_values(v, Unit::Watt);
        per_zone.insert(
            name.clone(),
            Flows { q_blc: mk(blc)?, q_in: mk(inside)?, q_sun: mk(sun)?, q_lep: mk(lep)?, q_vent: None, q_inf: None, q1: q1.clone() },
        );
    }
    let parts: Vec<&Flows> = runs.zones.iter().map(|z| &per_zone[z]).collect();
    let building = Flows::sum(&parts)?;
    Ok(HeatFlowSet { building, per_zone })
}

/// Convenience: both steps in one call.
pub fn decompose(model: &BuildingModel, data: &MeasuredDataset, cfg: &DecompositionConfig) -> Result<HeatFlowSet> {
    let runs = run_five(model, data, cfg)?;
    heat_flows(&runs, data, cfg)
}

/// Infiltration air-change model `ach = base_ach + wind_ach_per_mps · wind_speed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfiltrationModel {
    pub base_ach: f64,
    pub wind_ach_per_mps: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct VentInfilFlows {
    pub q_vent: Option<TimeSeries>,
    pub q_inf: Option<TimeSeries>,
}

/// Channel-name prefixes of the real-building air-handler data.
pub const FAN_FLOW_PREFIX: &str = "fan_flow:";
pub const MIXED_AIR_PREFIX: &str = "t_mixed:";
pub const RETURN_AIR_PREFIX: &str = "t_return:";

/// Ventilation and infiltration heat gains to the air (W).
///
/// Ventilation sums `ṁ·c_p·(T_mixed − T_return)` over every fan that has a
/// `fan_flow:<name>` channel (kg/s) and matching `t_mixed:<name>` and
/// `t_return:<name>` channels. A flow whose inputs are missing is reported
/// as absent, not zero.
pub fn vent_infil_flows(model: &BuildingModel, data: &MeasuredDataset, infiltration: Option<&InfiltrationModel>) -> Result<VentInfilFlows> {
    let mut q_vent: Option<Vec<f64>> = None;
    let fans: Vec<&str> = data.channels.keys().filter_map(|k| k.strip_prefix(FAN_FLOW_PREFIX)).collect();
    let mut complete = !fans.is_empty();
    for fan in &fans {
        let flow = &data.channels[&format!("{FAN_FLOW_PREFIX}{fan}")];
        let (Some(mixed), Some(ret)) = (
            data.channels.get(&format!("{MIXED_AIR_PREFIX}{fan}")),
            data.channels.get(&format!("{RETURN_AIR_PREFIX}{fan}")),
        ) else {
            complete = false;
            break;
        };
        flow.ensure_aligned(mixed)?;
        flow.ensure_aligned(ret)?;
        let acc = q_vent.get_or_insert_with(|| vec![0.0; flow.len()]);
        for (t, a) in acc.iter_mut().enumerate() {
            *a += flow.values()[t] * AIR_SPECIFIC_HEAT * (mixed.values()[t] - ret.values()[t]);
        }
    }
    let time_axis = &data.weather.t_out;
    let q_vent = match (complete, q_vent) {
        (true, Some(v)) => Some(time_axis.with_values(v, Unit::Watt)?),
        _ => None,
    };

    let q_inf = match infiltration {
        None => None,
        Some(m) => {
            let mut total = vec![0.0; time_axis.len()];
            for z in &model.zones {
                let Some(t_in) = data.t_in.get(&z.name) else {
                    return Ok(VentInfilFlows { q_vent, q_inf: None });
                };
                t_in.ensure_aligned(time_axis)?;
                for (t, acc) in total.iter_mut().enumerate() {
                    let ach = (m.base_ach + m.wind_ach_per_mps * data.weather.wind_speed.values()[t]).max(0.0);
                    let g = AIR_DENSITY * AIR_SPECIFIC_HEAT * ach * z.volume / 3600.0;
                    *acc += g * (time_axis.values()[t] - t_in.values()[t]);
                }
            }
            Some(time_axis.with_values(total, Unit::Watt)?)
        }
    };
    Ok(VentInfilFlows { q_vent, q_inf })
}
