use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use epe_core::decomposition::{Flow, Flows, HeatFlowSet};
use epe_core::estimation::ShellParameters;
use epe_core::hvac::*;
use epe_core::{Error, Interval, TimeSeries, Unit, WeatherSeries};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn t0() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2021, 7, 1).unwrap().and_hms_opt(0, 0, 0).unwrap()
}

fn ts(v: Vec<f64>, unit: Unit) -> TimeSeries {
    TimeSeries::new(t0(), 3600, v, unit).unwrap()
}

fn summer(n: usize) -> WeatherSeries {
    let t: Vec<f64> = (0..n).map(|h| 27.0 + 7.0 * ((h % 24) as f64 / 24.0 * std::f64::consts::TAU - 2.0).sin()).collect();
    let w: Vec<f64> = (0..n).map(|h| 0.010 + 0.003 * ((h / 24) as f64 * 0.7).sin()).collect();
    WeatherSeries::new(
        ts(t, Unit::Celsius),
        ts(vec![0.0; n], Unit::WattPerSquareMeter),
        ts(vec![0.0; n], Unit::WattPerSquareMeter),
        ts(vec![0.0; n], Unit::WattPerSquareMeter),
        ts(vec![2.0; n], Unit::MeterPerSecond),
        ts(w, Unit::Dimensionless),
    )
    .unwrap()
}

fn cooling_load(n: usize, seed: u64) -> TimeSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ts(
        (0..n)
            .map(|h| {
                let hod = h % 24;
                if (7..20).contains(&hod) { -rng.random_range(50_000.0..180_000.0) } else { -rng.random_range(0.0..20_000.0) }
            })
            .collect(),
        Unit::Watt,
    )
}

#[test]
fn full_load_with_flat_curves() {
    let cap = 100_000.0;
    let plant = HvacPlant::dx(3.5, cap).with_flat_curves();
    let bx = ProcessLoadBox { load: ts(vec![-cap; 24], Unit::Watt), plant };
    let e = plant_energy(&bx, &summer(24)).unwrap();
    for v in e.energy.values() {
        assert!((v - cap / 3.5).abs() < 1e-9);
    }
    let zero = ProcessLoadBox { load: ts(vec![0.0; 24], Unit::Watt), ..bx.clone() };
    assert_eq!(plant_energy(&zero, &summer(24)).unwrap().energy.max_abs(), 0.0);
}

#[test]
fn halving_cop_doubles_energy() {
    let load = cooling_load(48, 1);
    let w = summer(48);
    let a = plant_energy(&ProcessLoadBox { load: load.clone(), plant: HvacPlant::dx(3.5, 2e5).with_flat_curves() }, &w).unwrap();
    let b = plant_energy(&ProcessLoadBox { load, plant: HvacPlant::dx(1.75, 2e5).with_flat_curves() }, &w).unwrap();
    for (x, y) in a.energy.values().iter().zip(b.energy.values()) {
        assert!((2.0 * x - y).abs() < 1e-9 * y.max(1.0));
    }
}

#[test]
fn capacity_and_curve_errors() {
    let w = summer(48);
    let load = cooling_load(48, 2);
    let bx = ProcessLoadBox { load: load.clone(), plant: HvacPlant::dx(3.5, 60_000.0) };
    assert!(matches!(plant_energy(&bx, &w), Err(Error::CapacityExceeded { .. })));
    let mut loose = bx.clone();
    loose.plant.max_clipped_fraction = 1.0;
    let e = plant_energy(&loose, &w).unwrap();
    assert!(e.clipped_hours > 0 && e.unmet.max_abs() > 0.0);

    let mut bad = ProcessLoadBox { load, plant: HvacPlant::dx(3.5, 2e5) };
    bad.plant.temp_curve = Biquadratic([-1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    assert!(plant_energy(&bad, &w).is_err());
}

proptest! {
    #[test]
    fn energy_is_non_negative(values in prop::collection::vec(-2e5f64..2e5, 24), cop in 1.0f64..6.0) {
        let bx = ProcessLoadBox { load: ts(values.clone(), Unit::Watt), plant: HvacPlant { max_clipped_fraction: 1.0, ..HvacPlant::dx(cop, 1.5e5) } };
        let e = plant_energy(&bx, &summer(24)).unwrap();
        for (v, q) in e.energy.values().iter().zip(&values) {
            prop_assert!(*v >= 0.0);
            prop_assert_eq!(*v == 0.0, -q <= LOAD_DEADBAND);
        }
    }
}

fn recover(noise: f64, seed: u64) -> ScanResult {
    let n = 24 * 31;
    let load = cooling_load(n, seed);
    let w = summer(n);
    let bx = ProcessLoadBox { load, plant: HvacPlant::dx(3.5, 2e5) };
    let truth = plant_energy(&bx, &w).unwrap().energy;
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    let measured = truth
        .with_values(truth.values().iter().map(|v| v * (1.0 + noise * rng.random_range(-1.732..1.732))).collect(), Unit::Watt)
        .unwrap();
    let start = ProcessLoadBox { plant: HvacPlant::dx(1.0, 2e5), ..bx };
    estimate_cop(&start, &w, &measured, &Grid::cop_default()).unwrap()
}

#[test]
fn cop_recovered_noise_free() {
    let r = recover(0.0, 3);
    assert!((r.best - 3.5).abs() <= 0.025, "{}", r.best);
    // unimodal: decreasing then increasing
    let i = r.rmse_curve.iter().enumerate().min_by(|a, b| a.1 .1.total_cmp(&b.1 .1)).unwrap().0;
    assert!(r.rmse_curve[..=i].windows(2).all(|p| p[1].1 <= p[0].1));
    assert!(r.rmse_curve[i..].windows(2).all(|p| p[1].1 >= p[0].1));
}

#[test]
fn cop_recovered_with_noise() {
    let r = recover(0.01, 4);
    assert!((r.best - 3.5).abs() <= 0.075, "{}", r.best);
}

#[test]
fn collinear_parameters_are_unidentifiable() {
    let n = 24 * 10;
    let load = cooling_load(n, 5);
    let w = summer(n);
    let truth = plant_energy(&ProcessLoadBox { load: load.clone(), plant: HvacPlant::dx(3.5, 2e5) }, &w).unwrap().energy;
    // COP and a constant curve multiplier whose product is held fixed
    let product = |cop: f64| {
        let mut p = HvacPlant::dx(cop, 2e5);
        p.temp_curve.0.iter_mut().for_each(|c| *c *= 3.0 / cop);
        p
    };
    let r = scan_parameter(&load, &w, &truth, &Grid::cop_default(), product);
    assert!(matches!(r, Err(Error::Unidentifiable(_))), "{r:?}");
}

fn flows_for_boiler(n: usize) -> HeatFlowSet {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let blc: Vec<f64> = (0..n).map(|_| -rng.random_range(40_000.0..90_000.0)).collect();
    let small = |rng: &mut ChaCha8Rng| (0..n).map(|_| rng.random_range(-2000.0..2000.0)).collect::<Vec<f64>>();
    let (qi, qs, ql) = (small(&mut rng), small(&mut rng), small(&mut rng));
    let q1: Vec<f64> = (0..n).map(|t| -(blc[t] + qi[t] + qs[t] + ql[t])).collect();
    let b = Flows {
        q_blc: ts(blc, Unit::Watt),
        q_in: ts(qi, Unit::Watt),
        q_sun: ts(qs, Unit::Watt),
        q_lep: ts(ql, Unit::Watt),
        q_vent: None,
        q_inf: None,
        q1: ts(q1, Unit::Watt),
    };
    HeatFlowSet { per_zone: BTreeMap::new(), building: b }
}

#[test]
fn boiler_relation_passes_through_construction_point() {
    let n = 48;
    let flows = flows_for_boiler(n);
    // gas = −(1.25·Q_BLC + secondaries) / 0.85
    let gas: Vec<f64> = (0..n)
        .map(|t| {
            let s: f64 = [Flow::In, Flow::Sun, Flow::Lep].iter().map(|f| flows.get(*f).values()[t]).sum();
            -(1.25 * flows.get(Flow::Blc).values()[t] + s) / 0.85
        })
        .collect();
    let windows = [Interval::new(t0(), t0() + Duration::hours(6)).unwrap(), Interval::new(t0() + Duration::hours(24), t0() + Duration::hours(30)).unwrap()];
    let grid: Vec<f64> = (0..=10).map(|i| 1.0 + 0.05 * i as f64).collect();
    let curve = boiler_blc_relation(&flows, &ts(gas, Unit::Watt), &windows, &grid).unwrap();
    let at = curve.iter().find(|p| (p.p_blc - 1.25).abs() < 1e-12).unwrap();
    assert!((at.p_boiler_eff - 0.85).abs() < 1e-9);
    assert!(at.sigma < 1e-9);
    assert!(curve.windows(2).all(|w| w[1].p_boiler_eff > w[0].p_boiler_eff));

    let zero = boiler_blc_relation(&flows, &ts(vec![0.0; n], Unit::Watt), &windows, &grid);
    assert!(matches!(zero, Err(Error::Unidentifiable(_))));
}

#[test]
fn unity_reconciled_load_is_run_one() {
    let flows = flows_for_boiler(24);
    let r = reconciled_load(&flows, &ShellParameters::unity(), None).unwrap();
    for (a, b) in r.values().iter().zip(flows.building.q1.values()) {
        assert!((a - b).abs() < 1e-9);
    }
}
