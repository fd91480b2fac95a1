use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use epe_core::decomposition::{decompose, DecompositionConfig, Flow};
use epe_core::engine::{discretize, samples, simulate, BuildingModel, Integrator, RunSpec};
use epe_core::estimation::{corrective_flow, fit_linear, fit_nonlinear, FitOptions};
use epe_core::{Interval, MeasuredDataset, TimeSeries, Unit, WeatherSeries};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn t0() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2021, 5, 3).unwrap().and_hms_opt(0, 0, 0).unwrap()
}

fn s(v: Vec<f64>, unit: Unit) -> TimeSeries {
    TimeSeries::new(t0(), 3600, v, unit).unwrap()
}

fn weather(n: usize, seed: u64) -> WeatherSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clouds: Vec<f64> = (0..n / 24 + 1).map(|_| rng.random_range(0.2..1.0)).collect();
    let ghi: Vec<f64> = (0..n)
        .map(|h| {
            let hod = h % 24;
            if (6..19).contains(&hod) { 850.0 * clouds[h / 24] * ((hod - 6) as f64 / 12.0 * std::f64::consts::PI).sin() } else { 0.0 }
        })
        .collect();
    WeatherSeries::new(
        s((0..n).map(|h| 12.0 + 8.0 * ((h % 24) as f64 / 24.0 * std::f64::consts::TAU - 2.0).sin() + rng.random_range(-1.0..1.0)).collect(), Unit::Celsius),
        s(ghi.clone(), Unit::WattPerSquareMeter),
        s(ghi.iter().map(|g| 0.75 * g).collect(), Unit::WattPerSquareMeter),
        s(ghi.iter().map(|g| 0.2 * g).collect(), Unit::WattPerSquareMeter),
        s(vec![3.0; n], Unit::MeterPerSecond),
        s(vec![0.009; n], Unit::Dimensionless),
    )
    .unwrap()
}

fn dataset(model: &BuildingModel, n: usize, seed: u64) -> MeasuredDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let zones = model.zone_names();
    let t_in: Vec<f64> = (0..n).map(|h| if (7..19).contains(&(h % 24)) { 22.0 } else { 25.0 + rng.random_range(-0.5..0.5) }).collect();
    let lep: Vec<f64> = (0..n).map(|h| if (8..18).contains(&(h % 24)) { 3000.0 } else { 600.0 }).collect();
    MeasuredDataset {
        t_in: zones.iter().map(|z| (z.to_string(), s(t_in.clone(), Unit::Celsius))).collect(),
        lep: zones.iter().map(|z| (z.to_string(), s(lep.clone(), Unit::Watt))).collect(),
        q_hc_measured: None,
        energy: BTreeMap::new(),
        weather: weather(n, seed),
        channels: BTreeMap::new(),
    }
}

fn window(hours: usize) -> Interval {
    Interval::new(t0(), t0() + Duration::hours(hours as i64)).unwrap()
}

#[test]
fn implicit_step_conserves_energy() {
    for seed in 0..10 {
        let model = samples::random_model(seed);
        let sys = discretize(&model).unwrap();
        let dt = 900.0;
        let integ = Integrator::free_float(&sys, dt).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = DVector::from_fn(sys.len(), |_, _| rng.random_range(10.0..30.0));
        for _ in 0..20 {
            let t_out = rng.random_range(-5.0..35.0);
            let inj = DVector::from_fn(sys.len(), |_, _| rng.random_range(0.0..500.0));
            let before = x.clone();
            integ.step(&mut x, t_out, &inj);
            // stored heat change = injections + heat from outdoors at the new state
            let stored: f64 = sys.capacitance.iter().zip(x.iter().zip(before.iter())).map(|(c, (a, b))| c * (a - b)).sum();
            let from_outside: f64 = sys.outdoor_coupling.iter().zip(x.iter()).map(|(g, xi)| g * (t_out - xi)).sum();
            let balance = inj.sum() + from_outside;
            assert!((stored / dt - balance).abs() < 1e-6 * (1.0 + balance.abs()), "seed {seed}: {} vs {balance}", stored / dt);
        }
    }
}

#[test]
fn delivered_load_is_affine_in_internal_gains() {
    let model = samples::medium_office();
    let sys = discretize(&model).unwrap();
    let n = 72;
    let data = dataset(&model, n, 1);
    let lep = data.lep["office"].clone();
    let t_in = data.t_in["office"].clone();
    let run = |gain: &TimeSeries| {
        let spec = RunSpec::track(data.weather.clone(), vec![gain.clone()], vec![t_in.clone()], window(n));
        simulate(&sys, &spec).unwrap().ideal_load.remove(0)
    };
    let zero = run(&lep.scale(0.0));
    let one = run(&lep);
    let three = run(&lep.scale(3.0));
    for t in 0..n {
        let lin = zero.values()[t] + 3.0 * (one.values()[t] - zero.values()[t]);
        assert!((three.values()[t] - lin).abs() < 1e-6 * (1.0 + lin.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn macro_flows_close_the_balance(seed in 0u64..10_000) {
        let model = samples::random_model(seed);
        let data = dataset(&model, 48, seed);
        let flows = decompose(&model, &data, &DecompositionConfig::new(window(48))).unwrap();
        prop_assert!(flows.building.identity_error() < 1e-9);
        for z in flows.per_zone.values() {
            prop_assert!(z.identity_error() < 1e-9);
        }
    }
}

/// Simulating the audit model with the corrective flow as a process load
/// reproduces the fitted prediction.
#[test]
fn corrective_flow_replays_the_fit() {
    let audit = samples::medium_office();
    let mut real = audit.clone();
    real.scale_envelope_conductivities(1.3);
    real.scale_shgc(1.2);
    let n = 24 * 14;
    let mut data = dataset(&audit, n, 5);
    for v in data.lep.values_mut() {
        *v = v.scale(20.0);
    }
    let spec = RunSpec::track(data.weather.clone(), vec![data.lep["office"].clone()], vec![data.t_in["office"].clone()], window(n));
    let q_hc = simulate(&discretize(&real).unwrap(), &spec).unwrap().ideal_load.remove(0);
    let flows = decompose(&audit, &data, &DecompositionConfig::new(window(n))).unwrap();
    let opts = FitOptions::default();
    let (lin, _) = fit_linear(&flows, &q_hc, &Flow::ALL.into_iter().collect(), &opts).unwrap();
    let (params, report) = fit_nonlinear(&flows, &q_hc, &[Flow::Sun].into(), &lin, &opts).unwrap();
    let correction = corrective_flow(&flows, &params).unwrap();

    let replay = simulate(&discretize(&audit).unwrap(), &spec.clone().with_process_load(vec![correction])).unwrap().ideal_load.remove(0);
    let skip = report.skip;
    let mut se = 0.0;
    for t in skip..n {
        assert!((replay.values()[t] - report.predicted.values()[t]).abs() < 1e-6 * (1.0 + q_hc.max_abs()));
        se += (replay.values()[t] - q_hc.values()[t]).powi(2);
    }
    let rmse = (se / (n - skip) as f64).sqrt();
    assert!((rmse - report.rmse).abs() < 1e-6 * report.rmse.max(1.0));
}
