use std::collections::{BTreeMap, BTreeSet};

use chrono::{Duration, NaiveDate, NaiveDateTime, Timelike};
use epe_core::decomposition::{decompose, DecompositionConfig, Flow, Flows, HeatFlowSet};
use epe_core::engine::{discretize, samples, simulate, BuildingModel, RunSpec};
use epe_core::estimation::*;
use epe_core::{Error, Interval, MeasuredDataset, TimeSeries, Unit, WeatherSeries};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn t0() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2021, 5, 3).unwrap().and_hms_opt(0, 0, 0).unwrap()
}

fn ts(v: Vec<f64>) -> TimeSeries {
    TimeSeries::new(t0(), 3600, v, Unit::Watt).unwrap()
}

/// Independent-looking synthetic macro flows over `days`.
fn synthetic_flows(days: usize, seed: u64) -> HeatFlowSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = days * 24;
    let mut t_out = Vec::with_capacity(n);
    let mut level = 12.0;
    for h in 0..n {
        if h % 24 == 0 {
            level += rng.random_range(-3.0..3.0);
        }
        t_out.push(level + 6.0 * ((h % 24) as f64 / 24.0 * std::f64::consts::TAU - 2.0).sin());
    }
    let blc: Vec<f64> = t_out.iter().map(|t| -4000.0 * (21.0 - t)).collect();
    let mut sun = vec![0.0; n];
    for d in 0..days {
        let cloud = rng.random_range(0.2..1.0);
        for h in 6..19 {
            sun[d * 24 + h] = 30_000.0 * cloud * ((h - 6) as f64 / 12.0 * std::f64::consts::PI).sin();
        }
    }
    let lep: Vec<f64> = (0..n)
        .map(|h| {
            let weekday = (h / 24) % 7 < 5;
            let hod = h % 24;
            if weekday && (8..18).contains(&hod) { 40_000.0 } else { 8_000.0 }
        })
        .collect();
    // a lagged, smoothed mix: stands in for the indoor-history flow
    let mut inside = vec![0.0; n];
    for h in 1..n {
        inside[h] = 0.8 * inside[h - 1] - 0.1 * (sun[h - 1] + lep[h - 1]) + 0.05 * blc[h - 1];
    }
    let q1: Vec<f64> = (0..n).map(|h| -(blc[h] + inside[h] + sun[h] + lep[h])).collect();
    let building = Flows {
        q_blc: ts(blc),
        q_in: ts(inside),
        q_sun: ts(sun),
        q_lep: ts(lep),
        q_vent: None,
        q_inf: None,
        q1: ts(q1),
    };
    HeatFlowSet { per_zone: BTreeMap::from([("z".to_string(), building.clone())]), building }
}

/// `q_hc = −(Σ p_k Q_k + TF terms) + noise`
fn measured(flows: &HeatFlowSet, truth: &ShellParameters, noise_sd: f64, seed: u64) -> TimeSeries {
    let pred = truth.predict(flows).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise_sd.max(1e-300)).unwrap();
    let v = pred.values().iter().map(|v| v + if noise_sd > 0.0 { normal.sample(&mut rng) } else { 0.0 }).collect();
    pred.with_values(v, Unit::Watt).unwrap()
}

fn all_free() -> BTreeSet<Flow> {
    Flow::ALL.into_iter().collect()
}

fn no_vif() -> FitOptions {
    FitOptions { lep_vif_limit: None, ..FitOptions::default() }
}

#[test]
fn unity_data_gives_unity_estimates() {
    let flows = synthetic_flows(30, 1);
    let q = measured(&flows, &ShellParameters::unity(), 0.0, 0);
    let (p, report) = fit_linear(&flows, &q, &all_free(), &no_vif()).unwrap();
    for f in Flow::ALL {
        assert!((p.scale(f) - 1.0).abs() < 1e-9, "{f}: {}", p.scale(f));
    }
    assert!(report.rmse < 1e-6);
    assert!(report.before_rmse < 1e-6);
}

#[test]
fn doubled_blc_gives_two() {
    let flows = synthetic_flows(30, 2);
    // oracle: q_hc = −(2 Q_BLC + Q_in + Q_sun + Q_LEP)
    let q: Vec<f64> = (0..flows.len())
        .map(|t| {
            -(2.0 * flows.building.q_blc.values()[t]
                + flows.building.q_in.values()[t]
                + flows.building.q_sun.values()[t]
                + flows.building.q_lep.values()[t])
        })
        .collect();
    let (p, report) = fit_linear(&flows, &ts(q), &all_free(), &no_vif()).unwrap();
    assert!((p.p_blc - 2.0).abs() < 1e-9);
    for f in [Flow::In, Flow::Sun, Flow::Lep] {
        assert!((p.scale(f) - 1.0).abs() < 1e-9);
    }
    assert!(report.rmse < 1e-6 && report.before_rmse > 1000.0);
}

#[test]
fn fixed_parameters_stay_at_one_without_sigma() {
    let flows = synthetic_flows(30, 3);
    let mut truth = ShellParameters::unity();
    truth.p_blc = 1.3;
    let q = measured(&flows, &truth, 500.0, 1);
    let free: BTreeSet<Flow> = [Flow::Blc, Flow::Sun].into();
    let (p, report) = fit_linear(&flows, &q, &free, &no_vif()).unwrap();
    assert_eq!(p.p_in, 1.0);
    assert_eq!(p.p_lep, 1.0);
    assert!(p.fixed.contains(&Param::Scale(Flow::In)));
    assert!(p.sigma(Param::Scale(Flow::In)).is_none());
    assert!(p.sigma(Param::Scale(Flow::Blc)).unwrap() > 0.0);
    assert_eq!(report.n_params, 2);
    assert_eq!(report.n_obs, flows.len() - 24);
    p.validate().unwrap();
}

#[test]
fn collinear_flows_name_the_pair() {
    let mut flows = synthetic_flows(20, 4);
    flows.building.q_lep = flows.building.q_sun.scale(0.5);
    let q = measured(&flows, &ShellParameters::unity(), 10.0, 2);
    match fit_linear(&flows, &q, &all_free(), &no_vif()) {
        Err(Error::Collinearity { first, second, condition }) => {
            assert_eq!((first.as_str(), second.as_str()), ("p_sun", "p_lep"));
            assert!(condition > 1e8);
        }
        other => panic!("expected collinearity, got {other:?}"),
    }
}

#[test]
fn high_vif_pins_lep() {
    let mut flows = synthetic_flows(20, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let near: Vec<f64> = flows.building.q_sun.values().iter().map(|v| 0.5 * v + rng.random_range(-300.0..300.0)).collect();
    flows.building.q_lep = ts(near);
    let q = measured(&flows, &ShellParameters::unity(), 10.0, 2);
    let (p, _) = fit_linear(&flows, &q, &all_free(), &FitOptions::default()).unwrap();
    assert!(p.fixed.contains(&Param::Scale(Flow::Lep)));
    assert_eq!(p.p_lep, 1.0);
}

#[test]
fn nonlinear_with_no_tf_nests_linear() {
    let flows = synthetic_flows(30, 6);
    let mut truth = ShellParameters::unity();
    truth.p_blc = 1.2;
    truth.p_sun = 0.8;
    let q = measured(&flows, &truth, 800.0, 3);
    let (lin, lin_report) = fit_linear(&flows, &q, &all_free(), &no_vif()).unwrap();
    let (nl, nl_report) = fit_nonlinear(&flows, &q, &BTreeSet::new(), &lin, &no_vif()).unwrap();
    for f in Flow::ALL {
        assert!((nl.scale(f) - lin.scale(f)).abs() < 1e-10);
        let (a, b) = (nl.sigma(Param::Scale(f)).unwrap(), lin.sigma(Param::Scale(f)).unwrap());
        assert!((a - b).abs() < 1e-10 * b.max(1.0));
    }
    assert!((nl_report.rmse - lin_report.rmse).abs() < 1e-9 * lin_report.rmse);
}

#[test]
fn tf_parameters_recovered_within_three_sigma() {
    let flows = synthetic_flows(45, 7);
    let mut truth = ShellParameters::unity();
    truth.tf.insert(Flow::Sun, TfParams { alpha: 0.9, beta: 0.3 });
    let q = measured(&flows, &truth, 200.0, 4);
    let opts = no_vif();
    let (lin, _) = fit_linear(&flows, &q, &all_free(), &opts).unwrap();
    let (p, report) = fit_nonlinear(&flows, &q, &[Flow::Sun].into(), &lin, &opts).unwrap();
    let tf = p.tf[&Flow::Sun];
    let sa = p.sigma(Param::Alpha(Flow::Sun)).unwrap();
    let sb = p.sigma(Param::Beta(Flow::Sun)).unwrap();
    assert!((tf.alpha - 0.9).abs() < 3.0 * sa, "alpha {} ± {sa}", tf.alpha);
    assert!((tf.beta - 0.3).abs() < 3.0 * sb, "beta {} ± {sb}", tf.beta);
    for f in Flow::ALL {
        let s = p.sigma(Param::Scale(f)).unwrap();
        assert!((p.scale(f) - 1.0).abs() < 3.0 * s + 1e-12, "{f}");
    }
    assert!(report.iterations < 200);
    assert!(report.rmse < report.before_rmse);
    assert!(report.mbe.abs() < 0.05 * report.rmse + 1.0);
}

#[test]
fn jacobian_matches_central_differences() {
    let flows = synthetic_flows(10, 8);
    let q = measured(&flows, &ShellParameters::unity(), 100.0, 5);
    let problem =
        NonlinearProblem::new(&flows, &q, &[Flow::In, Flow::Sun].into(), &ShellParameters::unity(), &FitOptions::default())
            .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let theta: Vec<f64> = problem
            .params()
            .iter()
            .map(|p| match p {
                Param::Alpha(_) => rng.random_range(-0.95..0.95),
                Param::Beta(_) => rng.random_range(-2.0..2.0),
                Param::Scale(_) => rng.random_range(0.5..1.5),
            })
            .collect();
        let j = problem.jacobian(&theta);
        for c in 0..theta.len() {
            let h = 1e-6;
            let (mut up, mut dn) = (theta.clone(), theta.clone());
            up[c] += h;
            dn[c] -= h;
            let (ru, rd) = (problem.residuals(&up), problem.residuals(&dn));
            let scale = j.column(c).amax().max(1.0);
            for r in 0..ru.len() {
                let fd = (ru[r] - rd[r]) / (2.0 * h);
                assert!((fd - j[(r, c)]).abs() <= 1e-5 * scale, "col {c} row {r}: {fd} vs {}", j[(r, c)]);
            }
        }
    }
}

#[test]
fn estimates_are_scale_equivariant() {
    let flows = synthetic_flows(30, 9);
    let mut truth = ShellParameters::unity();
    truth.p_blc = 1.1;
    truth.tf.insert(Flow::Sun, TfParams { alpha: 0.8, beta: 0.2 });
    let q = measured(&flows, &truth, 300.0, 6);
    let c = 3.7;
    let scaled = {
        let f = &flows.building;
        let b = Flows {
            q_blc: f.q_blc.scale(c),
            q_in: f.q_in.scale(c),
            q_sun: f.q_sun.scale(c),
            q_lep: f.q_lep.scale(c),
            q_vent: None,
            q_inf: None,
            q1: f.q1.scale(c),
        };
        HeatFlowSet { per_zone: BTreeMap::new(), building: b }
    };
    let opts = no_vif();
    let fit = |fl: &HeatFlowSet, q: &TimeSeries| {
        let (lin, _) = fit_linear(fl, q, &all_free(), &opts).unwrap();
        fit_nonlinear(fl, q, &[Flow::Sun].into(), &lin, &opts).unwrap()
    };
    let (a, ra) = fit(&flows, &q);
    let (b, rb) = fit(&scaled, &q.scale(c));
    for f in Flow::ALL {
        assert!((a.scale(f) - b.scale(f)).abs() < 1e-6);
    }
    assert!((a.tf[&Flow::Sun].alpha - b.tf[&Flow::Sun].alpha).abs() < 1e-6);
    assert!((a.tf[&Flow::Sun].beta - b.tf[&Flow::Sun].beta).abs() < 1e-6);
    assert!((rb.rmse - c * ra.rmse).abs() < 1e-6 * rb.rmse);
}

#[test]
fn bootstrap_agrees_with_covariance() {
    let flows = synthetic_flows(60, 10);
    let q = measured(&flows, &ShellParameters::unity(), 2000.0, 7);
    let opts = no_vif();
    let (p, _) = fit_linear(&flows, &q, &all_free(), &opts).unwrap();
    let boot = bootstrap_sigma(&flows, &q, &all_free(), &opts, 86_400, 50, 3).unwrap();
    let cov = p.sigma(Param::Scale(Flow::Blc)).unwrap();
    let bs = boot[&Param::Scale(Flow::Blc)];
    assert!(bs / cov < 2.0 && cov / bs < 2.0, "bootstrap {bs} vs covariance {cov}");
}

#[test]
fn corrective_flow_examples() {
    let flows = synthetic_flows(5, 11);
    let zero = corrective_flow(&flows, &ShellParameters::unity()).unwrap();
    assert!(zero.values().iter().all(|v| *v == 0.0));

    let mut p = ShellParameters::unity();
    p.p_blc = 1.5;
    let c = corrective_flow(&flows, &p).unwrap();
    for (a, b) in c.values().iter().zip(flows.building.q_blc.values()) {
        assert!((a - 0.5 * b).abs() < 1e-9);
    }

    // audit run-1 load minus the correction is the fitted prediction
    p.tf.insert(Flow::In, TfParams { alpha: 0.6, beta: -0.4 });
    let c = corrective_flow(&flows, &p).unwrap();
    let pred = p.predict(&flows).unwrap();
    for t in 0..flows.len() {
        let replay = flows.building.q1.values()[t] - c.values()[t];
        assert!((replay - pred.values()[t]).abs() < 1e-6);
    }
}

#[test]
fn select_window_examples() {
    let flows = synthetic_flows(3, 12);
    let everything: BTreeMap<Flow, f64> =
        [(Flow::Blc, 0.0), (Flow::In, 1e12), (Flow::Sun, 1e12), (Flow::Lep, 1e12)].into();
    let all = select_window(&flows, Flow::Blc, &everything, 4 * 3600).unwrap();
    assert_eq!(all, vec![flows.building.q1.interval()]);

    let night: BTreeMap<Flow, f64> = [(Flow::Blc, 0.0), (Flow::Sun, 0.0)].into();
    let runs = select_window(&flows, Flow::Blc, &night, 4 * 3600).unwrap();
    assert!(!runs.is_empty());
    for w in &runs {
        let mut t = w.start;
        while t < w.end {
            assert!(!(7..18).contains(&t.hour()), "{t} is a daylight hour");
            let i = ((t - t0()).num_hours()) as usize;
            assert_eq!(flows.building.q_sun.values()[i], 0.0);
            t += Duration::hours(1);
        }
    }

    let none: BTreeMap<Flow, f64> = [(Flow::Blc, 1e12)].into();
    assert!(select_window(&flows, Flow::Blc, &none, 4 * 3600).unwrap().is_empty());
}

#[test]
fn select_window_finds_six_quiet_hours() {
    // midnight to 6 am is the only stretch with high conduction and low everything else
    let mut flows = synthetic_flows(2, 13);
    let n = flows.len();
    let blc: Vec<f64> = (0..n).map(|h| if h % 24 < 6 { -60_000.0 } else { -20_000.0 }).collect();
    flows.building.q_blc = ts(blc);
    flows.building.q_in = ts(vec![100.0; n]);
    let lep: Vec<f64> = (0..n).map(|h| if h % 24 < 6 { 0.0 } else { 10_000.0 }).collect();
    flows.building.q_lep = ts(lep);
    let th: BTreeMap<Flow, f64> = [(Flow::Blc, 50_000.0), (Flow::In, 1000.0), (Flow::Sun, 0.0), (Flow::Lep, 1000.0)].into();
    let runs = select_window(&flows, Flow::Blc, &th, 4 * 3600).unwrap();
    assert_eq!(runs.len(), 2);
    assert_eq!(runs[1].start, t0() + Duration::hours(24));
    assert_eq!(runs[1].duration_seconds(), 6 * 3600);
}

fn box_data(model: &BuildingModel, factor: f64) -> MeasuredDataset {
    let n = 72;
    let t_out: Vec<f64> = (0..n).map(|h| 5.0 + 10.0 * (h as f64 / 9.0).sin()).collect();
    let t_in: Vec<f64> = (0..n).map(|h| 20.0 + (h % 4) as f64).collect();
    let blc: f64 = overparam_demo_blc(model);
    let q: Vec<f64> = t_in.iter().zip(&t_out).map(|(i, o)| factor * blc * (i - o)).collect();
    let w = |v: Vec<f64>, u| TimeSeries::new(t0(), 3600, v, u).unwrap();
    MeasuredDataset {
        t_in: [(model.zones[0].name.clone(), w(t_in, Unit::Celsius))].into(),
        lep: BTreeMap::new(),
        q_hc_measured: Some(w(q, Unit::Watt)),
        energy: BTreeMap::new(),
        weather: WeatherSeries::new(
            w(t_out, Unit::Celsius),
            w(vec![0.0; n], Unit::WattPerSquareMeter),
            w(vec![0.0; n], Unit::WattPerSquareMeter),
            w(vec![0.0; n], Unit::WattPerSquareMeter),
            w(vec![0.0; n], Unit::MeterPerSecond),
            w(vec![0.01; n], Unit::Dimensionless),
        )
        .unwrap(),
        channels: BTreeMap::new(),
    }
}

/// Hand sum of U·A: film-to-film series resistance per wall, windows, infiltration.
fn overparam_demo_blc(model: &BuildingModel) -> f64 {
    let z = &model.zones[0];
    let walls: f64 = z
        .surfaces
        .iter()
        .filter(|s| s.exterior)
        .map(|s| {
            let r = 1.0 / s.exterior_film + 1.0 / s.interior_film + s.layers.iter().map(|l| l.thickness / l.conductivity).sum::<f64>();
            s.area / r
        })
        .sum();
    let windows: f64 = z.windows.iter().map(|w| w.u_value * w.area).sum();
    walls + windows + 1.2 * 1006.0 * z.infiltration_ach * z.volume / 3600.0
}

#[test]
fn component_conductances_are_not_separable() {
    let mut m = samples::massless_box(1.0);
    let mut second = m.zones[0].surfaces[0].clone();
    second.name = "wall2".into();
    second.area = 20.0;
    m.zones[0].surfaces.push(second);
    m.zones[0].windows.push(samples::window("glass", 6.0, 0.5, epe_core::engine::Orientation::vertical(180.0)));
    let data = box_data(&m, 1.25);
    let report = overparam_demo(&m, &data).unwrap();
    assert_eq!(report.components.len(), 3);
    assert_eq!(report.component_rank, 1);
    assert!(report.component_condition > 1e12);
    assert!((report.p_blc - 1.25).abs() < 1e-10);
    let oracle = overparam_demo_blc(&m);
    assert!((report.blc - oracle).abs() < 1e-9 * oracle);
    // the network agrees with the hand sum
    let net = discretize(&m).unwrap().steady_state_blc(0).unwrap();
    assert!((net - oracle).abs() < 1e-9 * oracle);
}

/// Measured load of `real` under the same drivers the audit model sees.
fn real_vs_audit(real: &BuildingModel, audit: &BuildingModel, days: i64) -> (HeatFlowSet, TimeSeries) {
    let n = (days * 24) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let w = |v: Vec<f64>, u| TimeSeries::new(t0(), 3600, v, u).unwrap();
    let clouds: Vec<f64> = (0..days).map(|_| rng.random_range(0.2..1.0)).collect();
    let ghi: Vec<f64> = (0..n)
        .map(|h| {
            let hod = h % 24;
            if (6..19).contains(&hod) { 800.0 * clouds[h / 24] * ((hod - 6) as f64 / 12.0 * std::f64::consts::PI).sin() } else { 0.0 }
        })
        .collect();
    let weather = WeatherSeries::new(
        w((0..n).map(|h| 14.0 + 7.0 * ((h % 24) as f64 / 24.0 * std::f64::consts::TAU - 2.0).sin() + (h / 24) as f64 * 0.3).collect(), Unit::Celsius),
        w(ghi.clone(), Unit::WattPerSquareMeter),
        w(ghi.iter().map(|g| 0.7 * g).collect(), Unit::WattPerSquareMeter),
        w(ghi.iter().map(|g| 0.25 * g).collect(), Unit::WattPerSquareMeter),
        w(vec![3.0; n], Unit::MeterPerSecond),
        w(vec![0.009; n], Unit::Dimensionless),
    )
    .unwrap();
    let t_in: Vec<f64> = (0..n).map(|h| if (h / 24) % 7 < 5 && (7..19).contains(&(h % 24)) { 22.0 } else { 26.0 }).collect();
    let lep: Vec<f64> = (0..n).map(|h| if (8..18).contains(&(h % 24)) { 60_000.0 } else { 10_000.0 }).collect();
    let name = audit.zones[0].name.clone();
    let window = Interval::new(t0(), t0() + Duration::hours(days * 24)).unwrap();
    let spec = RunSpec::track(weather.clone(), vec![w(lep.clone(), Unit::Watt)], vec![w(t_in.clone(), Unit::Celsius)], window);
    let q_hc = simulate(&discretize(real).unwrap(), &spec).unwrap().ideal_load.remove(0);
    let data = MeasuredDataset {
        t_in: [(name.clone(), w(t_in, Unit::Celsius))].into(),
        lep: [(name, w(lep, Unit::Watt))].into(),
        q_hc_measured: Some(q_hc.clone()),
        energy: BTreeMap::new(),
        weather,
        channels: BTreeMap::new(),
    };
    let flows = decompose(audit, &data, &DecompositionConfig::new(window)).unwrap();
    (flows, q_hc)
}

#[test]
fn leakier_real_building_gives_larger_blc_scale() {
    let audit = samples::medium_office();
    let mut real = audit.clone();
    real.scale_envelope_conductivities(1.4);
    let (flows, q) = real_vs_audit(&real, &audit, 14);
    let (p, report) = fit_linear(&flows, &q, &all_free(), &FitOptions::default()).unwrap();
    assert!(p.p_blc > 1.0, "{}", p.p_blc);
    assert!(report.rmse < report.before_rmse);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn fitting_never_worsens_agreement(cond in 0.7f64..1.5, shgc in 0.7f64..1.4, mass in proptest::bool::ANY) {
        let audit = samples::medium_office();
        let mut real = if mass { audit.clone() } else { samples::with_added_wall_mass(audit.clone()) };
        real.scale_envelope_conductivities(cond);
        real.scale_shgc(shgc);
        let (flows, q) = real_vs_audit(&real, &audit, 10);
        let (p, report) = fit_linear(&flows, &q, &all_free(), &FitOptions::default()).unwrap();
        prop_assert!(report.rmse < report.before_rmse || report.before_rmse < 1e-9);
        for s in p.sigma.values() {
            prop_assert!(*s > 0.0);
        }
    }
}
