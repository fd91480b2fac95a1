//! Stage functions and the end-to-end run.
//!
//! Every stage works on in-memory values; `Artifacts` writes what a stage
//! produced as soon as it is done, so a failing later stage leaves the
//! earlier files behind.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use epe_core::decomposition::{decompose, vent_infil_flows, Flow, Flows, HeatFlowSet};
use epe_core::engine::{discretize, simulate, BuildingModel, RunSpec};
use epe_core::estimation::{corrective_flow, fit_linear, fit_nonlinear, select_window, FitReport, ShellParameters};
use epe_core::hvac::{boiler_blc_relation, estimate_cop, plant_energy, reconciled_load, ProcessLoadBox, ScanResult};
use epe_core::residual_net::{standard_inputs, train, ResidualNet, TrainMetrics};
use epe_core::{Error, Interval, MeasuredDataset, TimeSeries, Unit, WeatherSeries};
use log::info;

use crate::config::{MeasuredSource, ProjectConfig, Stage2Method};
use crate::error::{PipelineError, Result, StageContext};
use crate::io::{self, load_building, load_measured, load_weather};
use crate::report::{FitSummary, HvacResult, ManifestEntry, NetSummary, PipelineReport, Statistics, REPORT_SCHEMA_VERSION};
use crate::synth::{synthesize_measurements, SyntheticPlant};

pub const HEAT_FLOWS: &str = "heat_flows.csv";
pub const HEAT_FLOWS_STAGE2: &str = "heat_flows_stage2.csv";
pub const PARAMETERS: &str = "parameters.json";
pub const RESIDUAL_NET: &str = "residual_net.json";
pub const REPORT: &str = "report.json";
pub const MANIFEST: &str = "manifest.json";

/// Models, weather and measured data named by a config.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub audit: BuildingModel,
    pub real: Option<BuildingModel>,
    pub weather: WeatherSeries,
    pub data: MeasuredDataset,
}

pub fn load_inputs(cfg: &ProjectConfig) -> Result<Inputs> {
    cfg.validate()?;
    let with_site = |mut m: BuildingModel| {
        if let Some(site) = cfg.site {
            m.site = site;
        }
        m
    };
    let audit = with_site(load_building(&cfg.building_file)?);
    let real = cfg.real_building_file.as_deref().map(load_building).transpose()?.map(with_site);
    let weather = load_weather(&cfg.weather_file)?;
    let data = match &cfg.measured_data {
        MeasuredSource::File(p) => load_measured(p, &weather)?,
        MeasuredSource::Synthesize => synthesize(cfg, real.as_ref().expect("validated"), &weather)?,
    };
    Ok(Inputs { audit, real, weather, data })
}

pub fn synthesize(cfg: &ProjectConfig, real: &BuildingModel, weather: &WeatherSeries) -> Result<MeasuredDataset> {
    let s = &cfg.synthesis;
    let plant = match (&s.plant, &cfg.hvac) {
        (Some(plant), Some(h)) => Some(SyntheticPlant { channel: &h.energy_channel, plant }),
        (Some(_), None) => return Err(PipelineError::Config("synthesis.plant needs hvac.energy_channel".into())),
        _ => None,
    };
    synthesize_measurements(real, weather, &s.schedule, s.noise, plant, cfg.seed).stage("synthesize")
}

/// Track-mode delivered load of `model` on the measured temperatures and gains.
pub fn simulate_track(model: &BuildingModel, data: &MeasuredDataset, window: Interval) -> Result<Vec<(String, TimeSeries)>> {
    let names: Vec<&str> = model.zone_names();
    let pick = |map: &std::collections::BTreeMap<String, TimeSeries>, what: &str| -> Result<Vec<TimeSeries>> {
        names
            .iter()
            .map(|n| map.get(*n).cloned().ok_or_else(|| Error::MissingInput(format!("{what} for zone {n}"))))
            .collect::<epe_core::Result<_>>()
            .stage("simulate")
    };
    let spec = RunSpec::track(data.weather.clone(), pick(&data.lep, "lep")?, pick(&data.t_in, "t_in")?, window);
    let run = simulate(&discretize(model).stage("simulate")?, &spec).stage("simulate")?;
    let total = TimeSeries::sum_all(&run.ideal_load).stage("simulate")?;
    let mut out: Vec<(String, TimeSeries)> = names.iter().map(|n| format!("q_hc:{n}")).zip(run.ideal_load).collect();
    out.push(("q_hc".into(), total));
    Ok(out)
}

pub fn stage_decompose(cfg: &ProjectConfig, inputs: &Inputs, window: Interval) -> Result<HeatFlowSet> {
    let data = inputs.data.slice(&window).stage("decompose")?;
    let flows = decompose(&inputs.audit, &data, &cfg.decomposition.for_window(window)).stage("decompose")?;
    let extra = vent_infil_flows(&inputs.audit, &data, cfg.infiltration.as_ref()).stage("decompose")?;
    info!("decomposed {} hours over {window}", flows.len());
    Ok(flows.with_air_exchange(extra))
}

pub fn measured_load(inputs: &Inputs, window: &Interval) -> Result<TimeSeries> {
    inputs
        .data
        .q_hc_measured
        .as_ref()
        .ok_or_else(|| Error::MissingInput("measured delivered load q_hc".into()))
        .and_then(|q| q.slice(window))
        .stage("fit")
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub params: ShellParameters,
    pub report: FitReport,
}

/// Linear fit of the free scales, then the transfer-function fit started from it.
pub fn stage_fit(cfg: &ProjectConfig, flows: &HeatFlowSet, q_hc: &TimeSeries) -> Result<Option<FitOutcome>> {
    if cfg.free_params.is_empty() {
        return Ok(None);
    }
    let free: BTreeSet<Flow> = cfg.free_params.iter().copied().collect();
    let (lin, lin_report) = fit_linear(flows, q_hc, &free, &cfg.fit).stage("fit_linear")?;
    info!("linear fit rmse {:.1} W (before {:.1} W)", lin_report.rmse, lin_report.before_rmse);
    let tfs: BTreeSet<Flow> = cfg.active_tfs.iter().copied().collect();
    let (params, report) = fit_nonlinear(flows, q_hc, &tfs, &lin, &cfg.fit).stage("fit_nonlinear")?;
    info!("nonlinear fit rmse {:.1} W after {} iterations", report.rmse, report.iterations);
    Ok(Some(FitOutcome { params, report }))
}

#[derive(Debug, Clone)]
pub struct NetOutcome {
    pub net: ResidualNet,
    pub metrics: TrainMetrics,
    /// Network estimate of the fit residuals.
    pub correction: TimeSeries,
}

pub fn stage_train(cfg: &ProjectConfig, flows: &HeatFlowSet, fit: &FitOutcome) -> Result<Option<NetOutcome>> {
    let Some(base) = cfg.residual_net else {
        return Ok(None);
    };
    let tc = epe_core::residual_net::TrainConfig { skip: fit.report.skip, seed: cfg.seed, ..base };
    let inputs = standard_inputs(flows, &fit.params).stage("train_residuals")?;
    let (net, metrics) = train(&inputs, &fit.report.residuals, &tc).stage("train_residuals")?;
    let correction = net.predict(&inputs).stage("train_residuals")?;
    info!("residual net: {} epochs, validation rmse {:.1} W", metrics.epochs, metrics.validation_rmse);
    Ok(Some(NetOutcome { net, metrics, correction }))
}

/// Statistics over the rows after the excluded leading span.
pub fn statistics(measured: &TimeSeries, predicted: &TimeSeries, skip: usize) -> Statistics {
    Statistics::of(&measured.values()[skip..], &predicted.values()[skip..])
}

pub fn skip_rows(cfg: &ProjectConfig, step_seconds: i64) -> usize {
    (cfg.fit.skip_seconds.max(0) as usize).div_ceil(step_seconds as usize)
}

#[derive(Debug, Clone)]
pub struct Stage2Outcome {
    pub result: HvacResult,
    pub load: TimeSeries,
    pub measured: TimeSeries,
    pub simulated: Option<TimeSeries>,
    pub curve: Option<ScanResult>,
}

pub fn stage2(
    cfg: &ProjectConfig,
    inputs: &Inputs,
    flows: &HeatFlowSet,
    params: &ShellParameters,
    net: Option<&ResidualNet>,
) -> Result<Option<Stage2Outcome>> {
    let (Some(h), Some(window)) = (&cfg.hvac, cfg.stage2_window) else {
        return Ok(None);
    };
    let net = if h.use_residual_net { net } else { None };
    let load = reconciled_load(flows, params, net).stage("reconciled_load")?;
    let measured = inputs
        .data
        .energy
        .get(&h.energy_channel)
        .ok_or_else(|| Error::MissingInput(format!("energy channel {:?}", h.energy_channel)))
        .and_then(|e| e.slice(&window))
        .stage("stage2")?;
    match &h.method {
        Stage2Method::Cop { grid } => {
            let weather = inputs.data.weather.slice(&window).stage("stage2")?;
            let bx = ProcessLoadBox { load: load.clone(), plant: h.plant.clone() };
            let scan = estimate_cop(&bx, &weather, &measured, grid).stage("estimate_cop")?;
            let mut best = bx.clone();
            best.plant.rated = scan.best;
            let simulated = plant_energy(&best, &weather).stage("estimate_cop")?.energy;
            info!("stage 2: rated COP {:.3}", scan.best);
            Ok(Some(Stage2Outcome {
                result: HvacResult::Cop { rated_cop: scan.best, rmse: scan.best_rmse, grid_points: scan.rmse_curve.len() },
                load,
                measured,
                simulated: Some(simulated),
                curve: Some(scan),
            }))
        }
        Stage2Method::BoilerRelation { p_blc_grid, thresholds, min_hours } => {
            let windows = match thresholds {
                Some(th) => select_window(flows, Flow::Blc, th, min_hours * 3600).stage("boiler_relation")?,
                None => vec![window],
            };
            let points = boiler_blc_relation(flows, &measured, &windows, p_blc_grid).stage("boiler_relation")?;
            Ok(Some(Stage2Outcome {
                result: HvacResult::BoilerRelation { points, windows },
                load,
                measured,
                simulated: None,
                curve: None,
            }))
        }
    }
}

/// Writes files into an optional output directory and keeps the manifest.
#[derive(Debug, Default)]
pub struct Artifacts {
    dir: Option<PathBuf>,
    pub entries: Vec<ManifestEntry>,
}

impl Artifacts {
    pub fn new(dir: Option<&Path>) -> Result<Self> {
        if let Some(d) = dir {
            fs::create_dir_all(d).map_err(|e| PipelineError::io(d, e))?;
        }
        Ok(Self { dir: dir.map(Path::to_path_buf), entries: Vec::new() })
    }

    pub fn path(&self, name: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(name))
    }

    fn record(&mut self, name: &str, kind: &str, rows: usize, columns: Vec<String>) {
        self.entries.push(ManifestEntry { file: name.into(), kind: kind.into(), rows, columns });
    }

    pub fn table(&mut self, name: &str, columns: &[(&str, &TimeSeries)]) -> Result<()> {
        let Some(path) = self.path(name) else { return Ok(()) };
        io::write_table(&path, columns)?;
        let names = std::iter::once("timestamp").chain(columns.iter().map(|(n, _)| *n)).map(String::from).collect();
        self.record(name, "time_series", columns[0].1.len(), names);
        Ok(())
    }

    pub fn curve(&mut self, name: &str, header: &[&str], rows: Vec<Vec<f64>>) -> Result<()> {
        let Some(path) = self.path(name) else { return Ok(()) };
        let n = io::write_rows(&path, header, rows)?;
        self.record(name, "curve", n, header.iter().map(|s| s.to_string()).collect());
        Ok(())
    }

    pub fn json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let Some(path) = self.path(name) else { return Ok(()) };
        io::write_json(&path, value)?;
        self.record(name, "json", 1, Vec::new());
        Ok(())
    }
}

pub fn write_heat_flows(art: &mut Artifacts, name: &str, flows: &HeatFlowSet) -> Result<()> {
    let b = &flows.building;
    let mut cols: Vec<(&str, &TimeSeries)> = vec![("q_blc", &b.q_blc), ("q_in", &b.q_in), ("q_sun", &b.q_sun), ("q_lep", &b.q_lep)];
    if let Some(v) = &b.q_vent {
        cols.push(("q_vent", v));
    }
    if let Some(v) = &b.q_inf {
        cols.push(("q_inf", v));
    }
    cols.push(("q1", &b.q1));
    art.table(name, &cols)
}

/// Building-level flows from a heat-flow table.
pub fn load_heat_flows(path: &Path) -> Result<HeatFlowSet> {
    let err = |m: String| PipelineError::format(path, m);
    let mut reader = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
    let headers: Vec<String> = reader.headers().map_err(|e| err(e.to_string()))?.iter().map(String::from).collect();
    let mut times = Vec::new();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); headers.len() - 1];
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        times.push(io::parse_timestamp(&rec[0]).ok_or_else(|| err(format!("row {}: bad timestamp", i + 2)))?);
        for (c, v) in cols.iter_mut().zip(rec.iter().skip(1)) {
            c.push(v.parse().map_err(|_| err(format!("row {}: bad number {v:?}", i + 2)))?);
        }
    }
    let start = *times.first().ok_or_else(|| err("no rows".into()))?;
    let get = |name: &str| -> Option<TimeSeries> {
        let k = headers.iter().skip(1).position(|h| h == name)?;
        TimeSeries::new(start, 3600, cols[k].clone(), Unit::Watt).ok()
    };
    let need = |name: &str| get(name).ok_or_else(|| err(format!("missing column {name}")));
    let building = Flows {
        q_blc: need("q_blc")?,
        q_in: need("q_in")?,
        q_sun: need("q_sun")?,
        q_lep: need("q_lep")?,
        q_vent: get("q_vent"),
        q_inf: get("q_inf"),
        q1: need("q1")?,
    };
    Ok(HeatFlowSet { building, per_zone: Default::default() })
}

/// Before/after, scatter and corrective-flow tables of a fit.
pub fn write_fit_tables(
    art: &mut Artifacts,
    flows: &HeatFlowSet,
    q_hc: &TimeSeries,
    fit: &FitOutcome,
    net: Option<&NetOutcome>,
) -> Result<()> {
    let correction = corrective_flow(flows, &fit.params).stage("corrective_flow")?;
    let after_net = net.map(|n| fit.report.predicted.try_add(&n.correction)).transpose().stage("corrective_flow")?;
    let mut cols = vec![("measured", q_hc), ("before", &flows.building.q1), ("after_fit", &fit.report.predicted)];
    if let Some(a) = &after_net {
        cols.push(("after_net", a));
    }
    art.table("before_after.csv", &cols)?;

    let best = after_net.as_ref().unwrap_or(&fit.report.predicted);
    let residual = q_hc.try_sub(best).stage("corrective_flow")?;
    art.table("scatter.csv", &[("measured", q_hc), ("predicted", best), ("residual", &residual)])?;

    let with_net = net.map(|n| correction.try_sub(&n.correction)).transpose().stage("corrective_flow")?;
    let mut cols = vec![("q_correction", &correction)];
    if let Some(c) = &with_net {
        cols.push(("q_correction_net", c));
    }
    art.table("corrective_flow.csv", &cols)
}

pub fn write_stage2_tables(art: &mut Artifacts, s2: &Stage2Outcome) -> Result<()> {
    let mut cols = vec![("reconciled_load", &s2.load), ("measured_energy", &s2.measured)];
    if let Some(s) = &s2.simulated {
        cols.push(("simulated_energy", s));
    }
    art.table("stage2.csv", &cols)?;
    if let Some(scan) = &s2.curve {
        art.curve("cop_curve.csv", &["cop", "rmse"], scan.rmse_curve.iter().map(|(c, r)| vec![*c, *r]).collect())?;
    }
    if let HvacResult::BoilerRelation { points, .. } = &s2.result {
        art.curve(
            "boiler_relation.csv",
            &["p_blc", "p_boiler_eff", "sigma"],
            points.iter().map(|p| vec![p.p_blc, p.p_boiler_eff, p.sigma]).collect(),
        )?;
    }
    Ok(())
}

/// Decomposition, parameter fit, residual network, corrective flow and
/// Stage 2, writing plot data into `out` when given.
pub fn run_pipeline(cfg: &ProjectConfig, out: Option<&Path>) -> Result<PipelineReport> {
    let inputs = load_inputs(cfg)?;
    run_with_inputs(cfg, &inputs, out)
}

pub fn run_with_inputs(cfg: &ProjectConfig, inputs: &Inputs, out: Option<&Path>) -> Result<PipelineReport> {
    cfg.validate()?;
    let mut art = Artifacts::new(out)?;
    let w1 = cfg.stage1_window;
    let flows = stage_decompose(cfg, inputs, w1)?;
    write_heat_flows(&mut art, HEAT_FLOWS, &flows)?;

    let q_hc = measured_load(inputs, &w1)?;
    let skip = skip_rows(cfg, q_hc.step_seconds());
    if skip >= q_hc.len() {
        return Err(Error::InsufficientData("window is no longer than the excluded leading span".into())).stage("fit");
    }
    let before = statistics(&q_hc, &flows.building.q1, skip);

    let fit = stage_fit(cfg, &flows, &q_hc)?;
    let net = match &fit {
        Some(f) => stage_train(cfg, &flows, f)?,
        None => None,
    };
    if let Some(f) = &fit {
        art.json(PARAMETERS, &f.params)?;
        if let Some(n) = &net {
            art.json(RESIDUAL_NET, &n.net)?;
        }
        write_fit_tables(&mut art, &flows, &q_hc, f, net.as_ref())?;
    } else {
        art.table("before_after.csv", &[("measured", &q_hc), ("before", &flows.building.q1)])?;
    }

    let params = fit.as_ref().map(|f| f.params.clone()).unwrap_or_else(ShellParameters::unity);
    let s2 = match cfg.stage2_window {
        Some(w2) if cfg.hvac.is_some() => {
            let flows2 = if w2 == w1 { flows.clone() } else { stage_decompose(cfg, inputs, w2)? };
            if w2 != w1 {
                write_heat_flows(&mut art, HEAT_FLOWS_STAGE2, &flows2)?;
            }
            let s2 = stage2(cfg, inputs, &flows2, &params, net.as_ref().map(|n| &n.net))?;
            if let Some(s) = &s2 {
                write_stage2_tables(&mut art, s)?;
            }
            s2
        }
        _ => None,
    };

    let fit_summary = fit.as_ref().map(|f| FitSummary {
        stats: statistics(&q_hc, &f.report.predicted, skip),
        n_params: f.report.n_params,
        iterations: f.report.iterations,
    });
    let net_summary = match (&fit, &net) {
        (Some(f), Some(n)) => {
            let predicted = f.report.predicted.try_add(&n.correction).stage("train_residuals")?;
            Some(NetSummary { metrics: n.metrics.clone(), stats: statistics(&q_hc, &predicted, skip) })
        }
        _ => None,
    };
    let report = PipelineReport {
        schema_version: REPORT_SCHEMA_VERSION,
        building: inputs.audit.name.clone(),
        measured_data: cfg.measured_data.to_string(),
        stage1_window: w1,
        stage2_window: cfg.stage2_window,
        before,
        physical_interpretation: fit.as_ref().map(|f| crate::report::interpret(&f.params)).unwrap_or_default(),
        parameters: fit.map(|f| f.params),
        fit: fit_summary,
        net: net_summary,
        hvac: s2.map(|s| s.result),
        files: art.entries.clone(),
    };
    if let Some(dir) = out {
        io::write_json(&dir.join(REPORT), &report)?;
        io::write_json(&dir.join(MANIFEST), &serde_json::json!({ "schema_version": REPORT_SCHEMA_VERSION, "files": art.entries }))?;
    }
    Ok(report)
}
