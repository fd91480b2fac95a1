use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Parser, Subcommand};
use epe_core::residual_net::ResidualNet;
use epe_core::estimation::ShellParameters;
use epe_pipeline::config::ProjectConfig;
use epe_pipeline::error::{PipelineError, Result};
use epe_pipeline::io;
use epe_pipeline::pipeline::{self as pl, Artifacts};
use epe_pipeline::report::Statistics;
use epe_pipeline::synth::{synthetic_weather, Climate};

#[derive(Parser)]
#[command(name = "epe", version, about = "Calibrate a building energy model against measured loads")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Project configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Ideal-load simulation of the audit model on the measured setpoints.
    Simulate,
    /// Five-run decomposition into macro heat flows.
    Decompose,
    /// Parameter fit on the decomposed flows.
    Fit,
    /// Residual network on the fit residuals.
    TrainResiduals,
    /// Plant calibration on the reconciled load.
    Stage2,
    /// All stages plus report and manifest.
    Pipeline,
    /// Synthetic measured data from the real building, or a synthetic weather file.
    Synthesize {
        /// Write a synthetic weather file instead of measured data.
        #[arg(long, value_enum)]
        climate: Option<Climate>,
        #[arg(long, default_value = "2021-06-01")]
        start: NaiveDate,
        #[arg(long, default_value_t = 61)]
        days: usize,
    },
}

fn config(cli: &Cli) -> Result<ProjectConfig> {
    let path = cli.config.as_deref().ok_or_else(|| PipelineError::Config("--config is required".into()))?;
    let mut cfg = ProjectConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn flows_file(out: &Path, name: &str) -> Result<epe_core::decomposition::HeatFlowSet> {
    let p = out.join(name);
    if !p.exists() {
        return Err(PipelineError::Config(format!("{} not found; run `epe decompose` first", p.display())));
    }
    pl::load_heat_flows(&p)
}

fn run(cli: &Cli) -> Result<()> {
    let out = cli.out.as_path();
    if let Command::Synthesize { climate: Some(c), start, days } = &cli.command {
        let mut art = Artifacts::new(Some(out))?;
        let t0 = start.and_hms_opt(0, 0, 0).expect("midnight");
        let w = synthetic_weather(*c, t0, days * 24, cli.seed.unwrap_or(0)).map_err(|e| PipelineError::Stage { stage: "synthesize", source: e })?;
        io::save_weather(&out.join("weather.csv"), &w)?;
        art.json("site.json", &c.site())?;
        return Ok(());
    }
    let cfg = config(cli)?;
    match &cli.command {
        Command::Synthesize { .. } => {
            let real = cfg
                .real_building_file
                .as_deref()
                .ok_or_else(|| PipelineError::Config("synthesize needs real_building_file".into()))?;
            let mut real = io::load_building(real)?;
            if let Some(site) = cfg.site {
                real.site = site;
            }
            let weather = io::load_weather(&cfg.weather_file)?;
            let data = pl::synthesize(&cfg, &real, &weather)?;
            Artifacts::new(Some(out))?;
            io::save_measured(&out.join("measured.csv"), &data)
        }
        Command::Simulate => {
            let inputs = pl::load_inputs(&cfg)?;
            let series = pl::simulate_track(&inputs.audit, &inputs.data, cfg.stage1_window)?;
            let cols: Vec<(&str, &epe_core::TimeSeries)> = series.iter().map(|(n, s)| (n.as_str(), s)).collect();
            Artifacts::new(Some(out))?.table("simulated.csv", &cols)
        }
        Command::Decompose => {
            let inputs = pl::load_inputs(&cfg)?;
            let mut art = Artifacts::new(Some(out))?;
            let flows = pl::stage_decompose(&cfg, &inputs, cfg.stage1_window)?;
            pl::write_heat_flows(&mut art, pl::HEAT_FLOWS, &flows)?;
            if let Some(w2) = cfg.stage2_window.filter(|w| *w != cfg.stage1_window) {
                let flows2 = pl::stage_decompose(&cfg, &inputs, w2)?;
                pl::write_heat_flows(&mut art, pl::HEAT_FLOWS_STAGE2, &flows2)?;
            }
            Ok(())
        }
        Command::Fit => {
            let inputs = pl::load_inputs(&cfg)?;
            let flows = flows_file(out, pl::HEAT_FLOWS)?;
            let q_hc = pl::measured_load(&inputs, &cfg.stage1_window)?;
            let mut art = Artifacts::new(Some(out))?;
            let Some(fit) = pl::stage_fit(&cfg, &flows, &q_hc)? else {
                let skip = pl::skip_rows(&cfg, q_hc.step_seconds());
                let before = pl::statistics(&q_hc, &flows.building.q1, skip);
                return art.json("fit_summary.json", &serde_json::json!({ "before": before }));
            };
            art.json(pl::PARAMETERS, &fit.params)?;
            pl::write_fit_tables(&mut art, &flows, &q_hc, &fit, None)?;
            let skip = fit.report.skip;
            let summary = serde_json::json!({
                "before": pl::statistics(&q_hc, &flows.building.q1, skip),
                "after_fit": pl::statistics(&q_hc, &fit.report.predicted, skip),
                "iterations": fit.report.iterations,
                "interpretation": epe_pipeline::interpret(&fit.params),
            });
            art.json("fit_summary.json", &summary)?;
            for line in epe_pipeline::interpret(&fit.params) {
                println!("{line}");
            }
            Ok(())
        }
        Command::TrainResiduals => {
            let inputs = pl::load_inputs(&cfg)?;
            let flows = flows_file(out, pl::HEAT_FLOWS)?;
            let params: ShellParameters = io::read_json(&out.join(pl::PARAMETERS))?;
            let q_hc = pl::measured_load(&inputs, &cfg.stage1_window)?;
            let predicted = params.predict(&flows).map_err(|e| PipelineError::Stage { stage: "train_residuals", source: e })?;
            let residuals = q_hc.try_sub(&predicted).map_err(|e| PipelineError::Stage { stage: "train_residuals", source: e })?;
            let skip = pl::skip_rows(&cfg, q_hc.step_seconds());
            let report = epe_core::estimation::FitReport {
                residuals,
                predicted: predicted.clone(),
                mbe: 0.0,
                rmse: 0.0,
                n_obs: q_hc.len() - skip,
                n_params: 0,
                before_mbe: 0.0,
                before_rmse: 0.0,
                skip,
                iterations: 0,
            };
            let fit = pl::FitOutcome { params, report };
            let cfg_net = ProjectConfig { residual_net: Some(cfg.residual_net.unwrap_or_default()), ..cfg.clone() };
            let net = pl::stage_train(&cfg_net, &flows, &fit)?.expect("enabled");
            let mut art = Artifacts::new(Some(out))?;
            art.json(pl::RESIDUAL_NET, &net.net)?;
            let after = predicted.try_add(&net.correction).map_err(|e| PipelineError::Stage { stage: "train_residuals", source: e })?;
            let stats: Statistics = pl::statistics(&q_hc, &after, skip);
            art.json("net_metrics.json", &serde_json::json!({ "metrics": net.metrics, "after_net": stats }))
        }
        Command::Stage2 => {
            let inputs = pl::load_inputs(&cfg)?;
            let name = if cfg.stage2_window.is_some_and(|w| w != cfg.stage1_window) { pl::HEAT_FLOWS_STAGE2 } else { pl::HEAT_FLOWS };
            let flows = flows_file(out, name)?;
            let params_path = out.join(pl::PARAMETERS);
            let params: ShellParameters = if params_path.exists() { io::read_json(&params_path)? } else { ShellParameters::unity() };
            let net_path = out.join(pl::RESIDUAL_NET);
            let net: Option<ResidualNet> = if net_path.exists() { Some(io::read_json(&net_path)?) } else { None };
            let s2 = pl::stage2(&cfg, &inputs, &flows, &params, net.as_ref())?
                .ok_or_else(|| PipelineError::Config("stage2 needs hvac settings and a stage2_window".into()))?;
            let mut art = Artifacts::new(Some(out))?;
            pl::write_stage2_tables(&mut art, &s2)?;
            art.json("hvac.json", &s2.result)
        }
        Command::Pipeline => {
            let report = pl::run_pipeline(&cfg, Some(out))?;
            for line in &report.physical_interpretation {
                println!("{line}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Ok(n) = std::env::var("EPE_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("EPE_THREADS ignored: {e}");
                }
            }
            _ => {
                eprintln!("error: EPE_THREADS must be a positive integer, got {n:?}");
                return ExitCode::from(2);
            }
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
