use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use epe_core::decomposition::Flow;
use epe_core::engine::samples;
use epe_core::estimation::{Param, ShellParameters};
use epe_core::{Error, Interval, Unit};
use epe_pipeline::config::{MeasuredSource, ProjectConfig, Stage2Method};
use epe_pipeline::io::{load_building, load_measured, load_weather, save_measured, save_weather};
use epe_pipeline::report::HvacResult;
use epe_pipeline::synth::{synthesize_measurements, synthetic_weather, Climate, Schedule};
use epe_pipeline::{interpret, run_pipeline, PipelineError};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn at(m: u32, d: u32) -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2021, m, d).unwrap().and_hms_opt(0, 0, 0).unwrap()
}

fn window(start: NaiveDateTime, days: i64) -> Interval {
    Interval::new(start, start + Duration::days(days)).unwrap()
}

fn temperate_config() -> ProjectConfig {
    ProjectConfig::load(&fixtures().join("synthetic_temperate.json")).unwrap()
}

/// A shorter run of the fixture config: 35 days for Stage 1, 10 for Stage 2.
fn short_config() -> ProjectConfig {
    let mut cfg = temperate_config();
    cfg.stage1_window = window(at(6, 1), 35);
    cfg.stage2_window = Some(window(at(7, 6), 10));
    cfg
}

#[test]
fn fixture_configs_round_trip() {
    let mut texts: Vec<String> = ["synthetic_temperate.json", "synthetic_hot_dry.json"]
        .iter()
        .map(|n| fs::read_to_string(fixtures().join(n)).unwrap())
        .collect();
    let mut boiler = ProjectConfig::from_json(&texts[0]).unwrap();
    let hvac = boiler.hvac.as_mut().unwrap();
    hvac.method = Stage2Method::BoilerRelation {
        p_blc_grid: vec![0.8, 1.0, 1.2],
        thresholds: Some(BTreeMap::from([(Flow::Sun, 500.0)])),
        min_hours: 6,
    };
    texts.push(boiler.to_json());
    for text in texts {
        let a = ProjectConfig::from_json(&text).unwrap();
        let b = ProjectConfig::from_json(&a.to_json()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json(), b.to_json());
    }
}

#[test]
fn config_invariants() {
    let mut cfg = temperate_config();
    cfg.real_building_file = None;
    let err = cfg.validate().unwrap_err();
    assert!(err.to_string().contains("real_building_file"));
    assert_eq!(err.exit_code(), 2);

    let mut cfg = temperate_config();
    cfg.stage2_window = Some(window(at(7, 1), 20));
    assert!(cfg.validate().unwrap_err().to_string().contains("overlap"));
    cfg.shared_windows = true;
    cfg.validate().unwrap();

    let mut cfg = temperate_config();
    cfg.free_params.clear();
    assert!(cfg.validate().is_err(), "transfer functions without a fit");
    cfg.active_tfs.clear();
    cfg.validate().unwrap();

    assert_eq!(String::from(MeasuredSource::Synthesize), "synthesize");
    assert_eq!(MeasuredSource::from("data/m.csv".to_string()), MeasuredSource::File("data/m.csv".into()));
}

#[test]
fn building_fixtures_load() {
    let office = load_building(&fixtures().join("medium_office.json")).unwrap();
    assert_eq!(office, samples::medium_office());
    let b = load_building(&fixtures().join("massless_box.json")).unwrap();
    assert_eq!(b.zones.len(), 1);
    load_building(&fixtures().join("medium_office_real.json")).unwrap();
}

#[test]
fn negative_conductivity_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = samples::massless_box(1.0);
    m.zones[0].surfaces[0].layers[0].conductivity = -0.05;
    let path = dir.path().join("bad.json");
    fs::write(&path, serde_json::to_string(&m).unwrap()).unwrap();
    let msg = load_building(&path).unwrap_err().to_string();
    assert!(msg.contains("box") && msg.contains("wall") && msg.contains("layer"), "{msg}");
}

fn weather_csv(rows: &[(String, f64)]) -> String {
    let mut s = String::from("timestamp,t_out,ghi,dni,dhi,wind_speed,humidity_ratio\n");
    for (t, v) in rows {
        s.push_str(&format!("{t},{v},0,0,0,3,0.008\n"));
    }
    s
}

fn hours(n: usize) -> Vec<(String, f64)> {
    (0..n)
        .map(|h| {
            let t = at(3, 1) + Duration::hours(h as i64);
            (t.format("%Y-%m-%d %H:%M").to_string(), 10.0 + 5.0 * (h as f64 / 24.0 * std::f64::consts::TAU).sin())
        })
        .collect()
}

#[test]
fn weather_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.csv");
    fs::write(&path, weather_csv(&hours(48))).unwrap();
    let w = load_weather(&path).unwrap();
    assert_eq!(w.len(), 48);
    assert_eq!(w.t_out.start(), at(3, 1));

    let mut dup = hours(48);
    dup[10].0 = dup[9].0.clone();
    fs::write(&path, weather_csv(&dup)).unwrap();
    let msg = load_weather(&path).unwrap_err().to_string();
    assert!(msg.contains("row 12") && msg.contains("duplicated"), "{msg}");

    let mut back = hours(48);
    back.swap(20, 21);
    fs::write(&path, weather_csv(&back)).unwrap();
    let msg = load_weather(&path).unwrap_err().to_string();
    assert!(msg.contains("row 23"), "{msg}");

    fs::write(&path, "timestamp,t_out,ghi,dni,dhi,humidity_ratio\n2021-03-01 00:00,1,0,0,0,0.01\n").unwrap();
    assert!(load_weather(&path).unwrap_err().to_string().contains("missing column wind_speed"));

    // two missing hours are interpolated, three split the record
    let mut short_gap = hours(48);
    short_gap.drain(10..12);
    fs::write(&path, weather_csv(&short_gap)).unwrap();
    let w = load_weather(&path).unwrap();
    assert_eq!(w.len(), 48);
    let (a, b) = (w.t_out.values()[9], w.t_out.values()[12]);
    assert!((w.t_out.values()[10] - (a + (b - a) / 3.0)).abs() < 1e-12);

    let mut long_gap = hours(48);
    long_gap.drain(10..13);
    fs::write(&path, weather_csv(&long_gap)).unwrap();
    let err = load_weather(&path).unwrap_err();
    assert!(err.to_string().contains("gap"), "{err}");
    assert_eq!(err.exit_code(), 3);

    let synthetic = synthetic_weather(Climate::HotDry, at(7, 1), 72, 3).unwrap();
    save_weather(&path, &synthetic).unwrap();
    assert_eq!(load_weather(&path).unwrap(), synthetic);
}

#[test]
fn measured_data_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let office = samples::medium_office();
    let weather = synthetic_weather(Climate::Temperate, at(5, 1), 72, 1).unwrap();
    let mut data = synthesize_measurements(&office, &weather, &Schedule::default(), 0.02, None, 4).unwrap();
    let axis = &weather.t_out;
    data.channels.insert("fan_flow:ahu1".into(), axis.with_values(vec![2.0; 72], Unit::Dimensionless).unwrap());
    data.channels.insert("t_mixed:ahu1".into(), axis.with_values(vec![18.0; 72], Unit::Celsius).unwrap());
    let path = dir.path().join("m.csv");
    save_measured(&path, &data).unwrap();
    assert_eq!(load_measured(&path, &weather).unwrap(), data);
}

#[test]
fn synthesis_is_seeded_and_noise_free_when_asked() {
    let office = samples::medium_office();
    let weather = synthetic_weather(Climate::Temperate, at(5, 1), 72, 1).unwrap();
    let a = synthesize_measurements(&office, &weather, &Schedule::default(), 0.05, None, 9).unwrap();
    let b = synthesize_measurements(&office, &weather, &Schedule::default(), 0.05, None, 9).unwrap();
    let clean = synthesize_measurements(&office, &weather, &Schedule::default(), 0.0, None, 9).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.q_hc_measured, clean.q_hc_measured);
    // occupied weekday hours hold the occupied setpoint
    let t_in = &clean.t_in["office"];
    let s = Schedule::default();
    for (i, t) in t_in.timestamps().enumerate() {
        let want = if s.occupied(t) { s.occupied_setpoint } else { s.unoccupied_setpoint };
        assert_eq!(t_in.values()[i], want);
    }
}

#[test]
fn audit_equal_to_real_gives_unit_parameters() {
    let mut cfg = short_config();
    cfg.real_building_file = Some(cfg.building_file.clone());
    cfg.synthesis.noise = 0.0;
    cfg.active_tfs.clear();
    cfg.residual_net = None;
    cfg.hvac = None;
    cfg.synthesis.plant = None;
    let report = run_pipeline(&cfg, None).unwrap();
    let p = report.parameters.unwrap();
    for f in Flow::ALL {
        assert!((p.scale(f) - 1.0).abs() < 1e-6, "{f}: {}", p.scale(f));
    }
    assert!(report.fit.unwrap().stats.rmse < 1e-3 * report.before.mean_abs_measured);
}

#[test]
fn empty_free_params_reports_before_statistics_only() {
    let mut cfg = short_config();
    cfg.free_params.clear();
    cfg.active_tfs.clear();
    cfg.hvac = None;
    cfg.synthesis.plant = None;
    let dir = tempfile::tempdir().unwrap();
    let report = run_pipeline(&cfg, Some(dir.path())).unwrap();
    assert!(report.parameters.is_none() && report.fit.is_none() && report.net.is_none());
    assert!(report.physical_interpretation.is_empty());
    assert!(report.before.rmse > 0.0);
    assert!(!dir.path().join("parameters.json").exists());
    assert!(dir.path().join("before_after.csv").exists());
}

/// Rows and timestamps of a time-series table.
fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn full_run_is_deterministic_and_emits_aligned_tables() {
    let cfg = short_config();
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let report = run_pipeline(&cfg, Some(d1.path())).unwrap();
    run_pipeline(&cfg, Some(d2.path())).unwrap();
    let r1 = fs::read(d1.path().join("report.json")).unwrap();
    assert_eq!(r1, fs::read(d2.path().join("report.json")).unwrap());

    let p = report.parameters.as_ref().unwrap();
    for param in Param::SCALES {
        assert!(p.fixed.contains(&param) || report.physical_interpretation.iter().any(|l| l.starts_with(&param.to_string())));
    }
    assert!(report.physical_interpretation.iter().any(|l| l.starts_with("alpha_sun")));
    match report.hvac.as_ref().unwrap() {
        HvacResult::Cop { rated_cop, .. } => assert!((rated_cop - 3.5).abs() < 0.15, "{rated_cop}"),
        other => panic!("{other:?}"),
    }

    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(d1.path().join("manifest.json")).unwrap()).unwrap();
    let files = manifest["files"].as_array().unwrap();
    assert_eq!(files.len(), report.files.len());
    let mut stamps: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for e in &report.files {
        let path = d1.path().join(&e.file);
        assert!(path.exists(), "{}", e.file);
        if e.kind != "time_series" {
            continue;
        }
        let (header, rows) = read_csv(&path);
        assert_eq!(header[0], "timestamp");
        assert_eq!(header, e.columns);
        assert_eq!(rows.len(), e.rows);
        let ts: Vec<String> = rows.iter().map(|r| r[0].clone()).collect();
        // tables of the same window share the timestamp column
        if let Some(prev) = stamps.get(&rows.len()) {
            assert_eq!(prev, &ts, "{}", e.file);
        }
        stamps.insert(rows.len(), ts);
    }
    assert_eq!(stamps.len(), 2, "one group per stage window");
    assert!(stamps.contains_key(&(35 * 24)) && stamps.contains_key(&(10 * 24)));
}

#[test]
fn stage_errors_carry_the_stage_name() {
    let mut cfg = short_config();
    cfg.hvac.as_mut().unwrap().energy_channel = "gas".into();
    cfg.synthesis.plant = None;
    let dir = tempfile::tempdir().unwrap();
    let err = run_pipeline(&cfg, Some(dir.path())).unwrap_err();
    assert!(err.to_string().starts_with("stage stage2"), "{err}");
    assert_eq!(err.exit_code(), 3);
    // earlier artifacts are left for debugging
    assert!(dir.path().join("parameters.json").exists());
    assert!(!dir.path().join("report.json").exists());

    let numerical = PipelineError::Stage { stage: "fit_nonlinear", source: Error::NoConvergence(200) };
    assert_eq!(numerical.exit_code(), 4);
}

#[test]
fn interpretation_lines() {
    let mut p = ShellParameters::unity();
    p.p_blc = 1.48;
    p.sigma.insert(Param::Scale(Flow::Blc), 0.02);
    p.p_in = 0.63;
    p.sigma.insert(Param::Scale(Flow::In), 0.05);
    p.p_sun = 1.29;
    p.fixed.insert(Param::Scale(Flow::Lep));
    let lines = interpret(&p);
    assert_eq!(lines.len(), 4);
    assert!(lines[0].contains("load coefficient ≈ 48% higher than audit"), "{}", lines[0]);
    assert!(lines[1].contains("less effective thermal mass than audit"), "{}", lines[1]);
    assert!(lines[2].contains("solar gains ≈ 29% higher than audit"), "{}", lines[2]);
    assert!(lines[3].contains("held at the audit value"));

    let unity = interpret(&ShellParameters::unity());
    assert!(unity.iter().all(|l| l.contains("consistent with audit")));

    p.p_blc = 1.01;
    assert!(interpret(&p)[0].contains("not significant"));
}

fn epe(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_epe")).args(args).env("EPE_THREADS", "2").output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

#[test]
fn cli_verbs_reproduce_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("project.json");
    let mut cfg = short_config();
    cfg.residual_net = None;
    fs::write(&cfg_path, cfg.to_json()).unwrap();
    let staged = dir.path().join("staged");
    let whole = dir.path().join("whole");
    let s = |p: &Path| p.to_str().unwrap().to_string();
    for verb in ["decompose", "fit", "stage2"] {
        let (code, err) = epe(&[verb, "--config", &s(&cfg_path), "--out", &s(&staged)]);
        assert_eq!(code, 0, "{verb}: {err}");
    }
    let (code, err) = epe(&["pipeline", "--config", &s(&cfg_path), "--out", &s(&whole)]);
    assert_eq!(code, 0, "{err}");
    for f in ["heat_flows.csv", "parameters.json", "before_after.csv", "stage2.csv", "cop_curve.csv"] {
        assert_eq!(fs::read(staged.join(f)).unwrap(), fs::read(whole.join(f)).unwrap(), "{f}");
    }

    let (code, err) = epe(&["train-residuals", "--config", &s(&cfg_path), "--out", &s(&staged)]);
    assert_eq!(code, 0, "{err}");
    assert!(staged.join("residual_net.json").exists());
    let (code, _) = epe(&["simulate", "--config", &s(&cfg_path), "--out", &s(&staged)]);
    assert_eq!(code, 0);
    let (header, rows) = read_csv(&staged.join("simulated.csv"));
    assert_eq!(header, ["timestamp", "q_hc:office", "q_hc"]);
    assert_eq!(rows.len(), 35 * 24);

    let (code, _) = epe(&["synthesize", "--config", &s(&cfg_path), "--out", &s(&staged)]);
    assert_eq!(code, 0);
    let weather = load_weather(&cfg.weather_file).unwrap();
    let measured = load_measured(&staged.join("measured.csv"), &weather).unwrap();
    assert!(measured.energy.contains_key("electricity") && measured.q_hc_measured.is_some());
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let out = s(dir.path());
    assert_eq!(epe(&["pipeline", "--out", &out]).0, 2);
    assert_eq!(epe(&["no-such-verb"]).0, 2);

    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{ \"building_file\": 3 }").unwrap();
    assert_eq!(epe(&["pipeline", "--config", &s(&bad), "--out", &out]).0, 2);

    // a config pointing at a broken weather file is a data error
    let mut cfg = short_config();
    let weather = dir.path().join("w.csv");
    fs::write(&weather, "timestamp,t_out\n2021-06-01T00:00:00,20\n").unwrap();
    cfg.weather_file = weather;
    let cfg_path = dir.path().join("project.json");
    fs::write(&cfg_path, cfg.to_json()).unwrap();
    let (code, err) = epe(&["pipeline", "--config", &s(&cfg_path), "--out", &out]);
    assert_eq!(code, 3, "{err}");
    assert!(err.contains("missing column ghi"));

    let (code, _) = epe(&["synthesize", "--climate", "hot-dry", "--days", "2", "--out", &out]);
    assert_eq!(code, 0);
    assert_eq!(load_weather(&dir.path().join("weather.csv")).unwrap().len(), 48);
}

#[test]
fn seed_changes_synthetic_noise_only() {
    let mut a = short_config();
    a.residual_net = None;
    a.hvac = None;
    a.synthesis.plant = None;
    let mut b = a.clone();
    b.seed = 99;
    let (ra, rb) = (run_pipeline(&a, None).unwrap(), run_pipeline(&b, None).unwrap());
    assert_ne!(ra.parameters, rb.parameters);
    let (pa, pb) = (ra.parameters.unwrap(), rb.parameters.unwrap());
    assert!((pa.p_blc - pb.p_blc).abs() < 5.0 * pa.sigma(Param::Scale(Flow::Blc)).unwrap());
}

#[test]
fn measured_file_mode() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config();
    let inputs = epe_pipeline::pipeline::load_inputs(&cfg).unwrap();
    let path = dir.path().join("measured.csv");
    save_measured(&path, &inputs.data).unwrap();
    let mut file_cfg = cfg.clone();
    file_cfg.measured_data = MeasuredSource::File(path);
    file_cfg.real_building_file = None;
    file_cfg.residual_net = None;
    let mut synth_cfg = cfg;
    synth_cfg.residual_net = None;
    let a = run_pipeline(&file_cfg, None).unwrap();
    let b = run_pipeline(&synth_cfg, None).unwrap();
    assert_eq!(a.parameters, b.parameters);
    assert_eq!(a.hvac, b.hvac);
}
