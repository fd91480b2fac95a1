use nalgebra::{DMatrix, DVector, Dyn, LU};
use serde::{Deserialize, Serialize};

use super::network::StateSpaceSystem;
use super::solar::plane_irradiance;
use crate::error::{Error, Result};
use crate::timeseries::{Interval, TimeSeries, Unit, WeatherSeries};

pub const DEFAULT_SUBSTEPS: usize = 4;
pub const DEFAULT_WARMUP_DAYS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// Ideal loads hold every air node exactly at its setpoint.
    TrackSetpoints,
    /// No HVAC; air temperatures float.
    FreeFloat,
}

/// How the state at the start of the window is obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum Warmup {
    /// Steady state for the first day's mean inputs, then the first day repeated.
    Days(usize),
    /// Start from a given node-temperature vector.
    State(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct RunSpec {
    pub mode: RunMode,
    /// Per-zone setpoints, in model zone order.
    pub setpoints: Option<Vec<TimeSeries>>,
    /// Per-zone constant setpoints; overrides `setpoints`.
    pub fixed_temp_override: Option<Vec<f64>>,
    pub zero_solar: bool,
    pub zero_lep: bool,
    /// Per-zone heat injected at the air node (W).
    pub process_load: Option<Vec<TimeSeries>>,
    pub weather: WeatherSeries,
    /// Per-zone lights, equipment and people heat (W).
    pub lep: Vec<TimeSeries>,
    pub window: Interval,
    pub warmup: Warmup,
    pub substeps: usize,
}

impl RunSpec {
    pub fn track(weather: WeatherSeries, lep: Vec<TimeSeries>, setpoints: Vec<TimeSeries>, window: Interval) -> Self {
        Self {
            mode: RunMode::TrackSetpoints,
            setpoints: Some(setpoints),
            fixed_temp_override: None,
            zero_solar: false,
            zero_lep: false,
            process_load: None,
            weather,
            lep,
            window,
            warmup: Warmup::Days(DEFAULT_WARMUP_DAYS),
            substeps: DEFAULT_SUBSTEPS,
        }
    }

    pub fn free_float(weather: WeatherSeries, lep: Vec<TimeSeries>, window: Interval) -> Self {
        Self { mode: RunMode::FreeFloat, setpoints: None, ..Self::track(weather, lep, Vec::new(), window) }
    }

    pub fn without_solar(mut self) -> Self {
        self.zero_solar = true;
        self
    }

    pub fn without_lep(mut self) -> Self {
        self.zero_lep = true;
        self
    }

    pub fn with_fixed_temperatures(mut self, temps: Vec<f64>) -> Self {
        self.fixed_temp_override = Some(temps);
        self
    }

    pub fn with_process_load(mut self, load: Vec<TimeSeries>) -> Self {
        self.process_load = Some(load);
        self
    }

    pub fn with_warmup(mut self, warmup: Warmup) -> Self {
        self.warmup = warmup;
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunDiagnostics {
    /// Implicit substeps taken for each reported step (one direct solve each).
    pub substeps_per_step: Vec<u32>,
    pub warmup_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    /// Heat delivered to each air node (W, positive = heating).
    pub ideal_load: Vec<TimeSeries>,
    pub air_temp: Vec<TimeSeries>,
    pub diagnostics: RunDiagnostics,
    pub final_state: Vec<f64>,
}

/// Hourly (per step) driving inputs over the run window.
struct Drivers {
    t_out: Vec<f64>,
    /// Node injections per step, process loads included.
    injections: Vec<DVector<f64>>,
    /// Per step, per zone setpoint (track mode only).
    setpoints: Vec<Vec<f64>>,
    /// Per step, per zone process load.
    process: Vec<Vec<f64>>,
}

impl Drivers {
    fn len(&self) -> usize {
        self.t_out.len()
    }

    fn build(system: &StateSpaceSystem, spec: &RunSpec) -> Result<Drivers> {
        let nz = system.zones.len();
        let weather = spec.weather.slice(&spec.window)?;
        let steps = weather.len();
        let per_zone = |what: &str, s: &Option<Vec<TimeSeries>>| -> Result<Option<Vec<TimeSeries>>> {
            match s {
                None => Ok(None),
                Some(v) if v.len() != nz => {
                    Err(Error::MissingInput(format!("{what}: {} series for {nz} zones", v.len())))
                }
                Some(v) => v.iter().map(|s| s.slice(&spec.window)).collect::<Result<Vec<_>>>().map(Some),
            }
        };
        if spec.lep.len() != nz {
            return Err(Error::MissingInput(format!("lep: {} series for {nz} zones", spec.lep.len())));
        }
        let lep = per_zone("lep", &Some(spec.lep.clone()))?.unwrap_or_default();
        let process = per_zone("process_load", &spec.process_load)?;

        let setpoints: Vec<Vec<f64>> = match (spec.mode, &spec.fixed_temp_override, &spec.setpoints) {
            (RunMode::FreeFloat, ..) => vec![Vec::new(); steps],
            (RunMode::TrackSetpoints, Some(fixed), _) => {
                if fixed.len() != nz {
                    return Err(Error::MissingInput(format!("fixed temperatures: {} values for {nz} zones", fixed.len())));
                }
                vec![fixed.clone(); steps]
            }
            (RunMode::TrackSetpoints, None, Some(_)) => {
                let sp = per_zone("setpoints", &spec.setpoints)?.unwrap_or_default();
                (0..steps).map(|t| sp.iter().map(|s| s.values()[t]).collect()).collect()
            }
            (RunMode::TrackSetpoints, None, None) => {
                return Err(Error::MissingInput("track mode needs setpoints or fixed temperatures".into()));
            }
        };

        let n = system.len();
        let mut injections = vec![DVector::zeros(n); steps];
        if !spec.zero_solar {
            for zone in &system.zones {
                let mut transmitted = vec![0.0; steps];
                for w in &zone.windows {
                    for (t, irr) in plane_irradiance(&system.site, &w.orientation, &weather).into_iter().enumerate() {
                        transmitted[t] += w.shgc * w.area * irr;
                    }
                }
                for (t, q) in transmitted.iter().enumerate() {
                    for &(node, frac) in &zone.solar_split {
                        injections[t][node] += frac * q;
                    }
                }
                for o in &zone.opaque {
                    for (t, irr) in plane_irradiance(&system.site, &o.orientation, &weather).into_iter().enumerate() {
                        injections[t][o.node] += o.absorptance * o.area * irr;
                    }
                }
            }
        }
        if !spec.zero_lep {
            for (zone, series) in system.zones.iter().zip(&lep) {
                for (t, q) in series.values().iter().enumerate() {
                    for &(node, frac) in &zone.lep_split {
                        injections[t][node] += frac * q;
                    }
                }
            }
        }
        let mut process_steps = vec![vec![0.0; nz]; steps];
        if let Some(process) = &process {
            for (z, (zone, series)) in system.zones.iter().zip(process).enumerate() {
                for (t, q) in series.values().iter().enumerate() {
                    injections[t][zone.air_node] += q;
                    process_steps[t][z] = *q;
                }
            }
        }

        Ok(Drivers { t_out: weather.t_out.values().to_vec(), injections, setpoints, process: process_steps })
    }

    /// First-day inputs repeated, for warm-up.
    fn first_day(&self, steps_per_day: usize) -> std::ops::Range<usize> {
        0..steps_per_day.min(self.len())
    }
}

/// Implicit-Euler stepper with a pre-factored system matrix.
struct Stepper<'a> {
    system: &'a StateSpaceSystem,
    mode: RunMode,
    dt: f64,
    unknown: Vec<usize>,
    air: Vec<usize>,
    lu: LU<f64, Dyn, Dyn>,
    /// Conductance block unknown × air (track mode).
    g_ua: DMatrix<f64>,
}

impl<'a> Stepper<'a> {
    fn new(system: &'a StateSpaceSystem, mode: RunMode, dt: f64) -> Result<Self> {
        let air = system.air_nodes();
        let unknown: Vec<usize> = match mode {
            RunMode::TrackSetpoints => (0..system.len()).filter(|i| !air.contains(i)).collect(),
            RunMode::FreeFloat => (0..system.len()).collect(),
        };
        let mut a = system.conductance.select_rows(&unknown).select_columns(&unknown);
        for (k, &i) in unknown.iter().enumerate() {
            a[(k, k)] += system.capacitance[i] / dt;
        }
        let lu = a.lu();
        if !unknown.is_empty() && !lu.is_invertible() {
            return Err(Error::SingularNetwork("implicit step matrix is singular".into()));
        }
        let g_ua = match mode {
            RunMode::TrackSetpoints => system.conductance.select_rows(&unknown).select_columns(&air),
            RunMode::FreeFloat => DMatrix::zeros(0, 0),
        };
        Ok(Self { system, mode, dt, unknown, air, lu, g_ua })
    }

    /// Advances `x` by one substep; returns the heat delivered to each air node.
    fn substep(&self, x: &mut DVector<f64>, t_out: f64, inj: &DVector<f64>, setpoints: &[f64], process: &[f64]) -> Vec<f64> {
        let sys = self.system;
        let mut rhs = DVector::from_iterator(
            self.unknown.len(),
            self.unknown.iter().map(|&i| sys.capacitance[i] / self.dt * x[i] + sys.outdoor_coupling[i] * t_out + inj[i]),
        );
        match self.mode {
            RunMode::FreeFloat => {
                if !self.unknown.is_empty() {
                    self.lu.solve_mut(&mut rhs);
                }
                for (k, &i) in self.unknown.iter().enumerate() {
                    x[i] = rhs[k];
                }
                process.to_vec()
            }
            RunMode::TrackSetpoints => {
                let old_air: Vec<f64> = self.air.iter().map(|&a| x[a]).collect();
                let t_air = DVector::from_column_slice(setpoints);
                if !self.unknown.is_empty() {
                    rhs -= &self.g_ua * &t_air;
                    self.lu.solve_mut(&mut rhs);
                }
                for (k, &i) in self.unknown.iter().enumerate() {
                    x[i] = rhs[k];
                }
                for (k, &a) in self.air.iter().enumerate() {
                    x[a] = setpoints[k];
                }
                self.air
                    .iter()
                    .zip(old_air)
                    .map(|(&a, old)| {
                        let storage = sys.capacitance[a] / self.dt * (x[a] - old);
                        let conduction = (sys.conductance.row(a) * &*x)[0];
                        storage + conduction - sys.outdoor_coupling[a] * t_out - inj[a]
                    })
                    .collect()
            }
        }
    }
}

fn steady_state(system: &StateSpaceSystem, mode: RunMode, t_out: f64, inj: &DVector<f64>, setpoints: &[f64]) -> DVector<f64> {
    let n = system.len();
    let air = system.air_nodes();
    let unknown: Vec<usize> = match mode {
        RunMode::TrackSetpoints => (0..n).filter(|i| !air.contains(i)).collect(),
        RunMode::FreeFloat => (0..n).collect(),
    };
    let mut x = DVector::from_element(n, t_out);
    if mode == RunMode::TrackSetpoints {
        for (k, &a) in air.iter().enumerate() {
            x[a] = setpoints[k];
        }
    }
    let g_uu = system.conductance.select_rows(&unknown).select_columns(&unknown);
    let mut rhs = DVector::from_iterator(unknown.len(), unknown.iter().map(|&i| system.outdoor_coupling[i] * t_out + inj[i]));
    if mode == RunMode::TrackSetpoints {
        let t_air = DVector::from_iterator(air.len(), air.iter().map(|&a| x[a]));
        rhs -= system.conductance.select_rows(&unknown).select_columns(&air) * t_air;
    }
    // a floating network with no path to outdoors has no steady state; keep the uniform guess
    if let Some(xu) = g_uu.lu().solve(&rhs) {
        for (k, &i) in unknown.iter().enumerate() {
            x[i] = xu[k];
        }
    }
    x
}

fn mean_of<T>(range: std::ops::Range<usize>, f: impl Fn(usize) -> T) -> T
where
    T: std::ops::Add<Output = T> + std::ops::Div<f64, Output = T>,
{
    let n = range.len() as f64;
    let mut iter = range.map(f);
    let first = iter.next().expect("non-empty range");
    iter.fold(first, |acc, v| acc + v) / n
}

fn check_finite(x: &DVector<f64>) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical("non-finite node temperature during integration".into()))
    }
}

/// Node temperatures at the start of the window after warm-up.
pub fn initial_state(system: &StateSpaceSystem, spec: &RunSpec) -> Result<Vec<f64>> {
    let drivers = Drivers::build(system, spec)?;
    warm_up(system, spec, &drivers).map(|x| x.as_slice().to_vec())
}

fn warm_up(system: &StateSpaceSystem, spec: &RunSpec, drivers: &Drivers) -> Result<DVector<f64>> {
    match &spec.warmup {
        Warmup::State(x) => {
            if x.len() != system.len() {
                return Err(Error::InvalidArgument(format!("initial state has {} nodes, system has {}", x.len(), system.len())));
            }
            Ok(DVector::from_column_slice(x))
        }
        Warmup::Days(days) => {
            if drivers.len() == 0 {
                return Err(Error::Window("empty run window".into()));
            }
            let step = spec.weather.step_seconds();
            let day = drivers.first_day((86_400 / step).max(1) as usize);
            let t_mean = mean_of(day.clone(), |t| drivers.t_out[t]);
            let inj_mean = mean_of(day.clone(), |t| drivers.injections[t].clone());
            let sp_mean: Vec<f64> = match spec.mode {
                RunMode::TrackSetpoints => (0..system.zones.len())
                    .map(|z| mean_of(day.clone(), |t| drivers.setpoints[t][z]))
                    .collect(),
                RunMode::FreeFloat => Vec::new(),
            };
            let mut x = steady_state(system, spec.mode, t_mean, &inj_mean, &sp_mean);
            let stepper = Stepper::new(system, spec.mode, step as f64 / spec.substeps as f64)?;
            for _ in 0..*days {
                for t in day.clone() {
                    for _ in 0..spec.substeps {
                        stepper.substep(&mut x, drivers.t_out[t], &drivers.injections[t], &drivers.setpoints[t], &drivers.process[t]);
                    }
                }
            }
            check_finite(&x)?;
            Ok(x)
        }
    }
}

/// Integrates `system` over `spec.window` with implicit Euler substeps.
///
/// Inputs are held constant over each step. In track mode the reported load is
/// the mean over the substeps of the heat that keeps each air node exactly at
/// its setpoint.
pub fn simulate(system: &StateSpaceSystem, spec: &RunSpec) -> Result<RunResult> {
    if spec.substeps == 0 {
        return Err(Error::InvalidArgument("substeps must be >= 1".into()));
    }
    let drivers = Drivers::build(system, spec)?;
    let mut x = warm_up(system, spec, &drivers)?;
    let step = spec.weather.step_seconds();
    let stepper = Stepper::new(system, spec.mode, step as f64 / spec.substeps as f64)?;
    let nz = system.zones.len();
    let mut loads = vec![Vec::with_capacity(drivers.len()); nz];
    let mut temps = vec![Vec::with_capacity(drivers.len()); nz];
    let air = system.air_nodes();

    for t in 0..drivers.len() {
        let mut acc = vec![0.0; nz];
        for _ in 0..spec.substeps {
            let q = stepper.substep(&mut x, drivers.t_out[t], &drivers.injections[t], &drivers.setpoints[t], &drivers.process[t]);
            acc.iter_mut().zip(q).for_each(|(a, q)| *a += q);
        }
        check_finite(&x)?;
        for z in 0..nz {
            loads[z].push(acc[z] / spec.substeps as f64);
            temps[z].push(x[air[z]]);
        }
    }

    let start = spec.window.start;
    let mk = |values: Vec<f64>, unit| TimeSeries::new(start, step, values, unit);
    let warmup_steps = match spec.warmup {
        Warmup::Days(d) => d * drivers.first_day((86_400 / step).max(1) as usize).len(),
        Warmup::State(_) => 0,
    };
    Ok(RunResult {
        ideal_load: loads.into_iter().map(|v| mk(v, Unit::Watt)).collect::<Result<_>>()?,
        air_temp: temps.into_iter().map(|v| mk(v, Unit::Celsius)).collect::<Result<_>>()?,
        diagnostics: RunDiagnostics { substeps_per_step: vec![spec.substeps as u32; drivers.len()], warmup_steps },
        final_state: x.as_slice().to_vec(),
    })
}

/// Steps a system by hand, for energy-balance checks and custom drivers.
pub struct Integrator<'a> {
    stepper: Stepper<'a>,
}

impl<'a> Integrator<'a> {
    pub fn free_float(system: &'a StateSpaceSystem, dt: f64) -> Result<Self> {
        Ok(Self { stepper: Stepper::new(system, RunMode::FreeFloat, dt)? })
    }

    /// One implicit step with outdoor temperature `t_out` and node injections `inj`.
    pub fn step(&self, x: &mut DVector<f64>, t_out: f64, inj: &DVector<f64>) {
        let nz = self.stepper.system.zones.len();
        self.stepper.substep(x, t_out, inj, &[], &vec![0.0; nz]);
    }
}
