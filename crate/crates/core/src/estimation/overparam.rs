use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::linear::{condition_number, normalized_gram};
use crate::engine::model::{BuildingModel, AIR_DENSITY, AIR_SPECIFIC_HEAT};
use crate::error::{Error, Result};
use crate::timeseries::MeasuredDataset;

/// Why component conductances cannot be separated from delivered-load data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverparamReport {
    /// `(name, U·A in W/K)` per envelope component.
    pub components: Vec<(String, f64)>,
    /// Sum of the component conductances (W/K).
    pub blc: f64,
    /// Numerical rank of the component design matrix.
    pub component_rank: usize,
    /// Normalized condition number of its Gram matrix.
    pub component_condition: f64,
    /// Single-parameter estimate of `Q_mea ≈ p_blc · BLC · (T_in − T_out)`.
    pub p_blc: f64,
}

/// Regresses measured load on per-component conductance terms and on the
/// single lumped term of a massless one-zone box.
pub fn overparam_demo(model: &BuildingModel, data: &MeasuredDataset) -> Result<OverparamReport> {
    model.validate()?;
    let [zone] = model.zones.as_slice() else {
        return Err(Error::InvalidArgument("the demonstration needs a single-zone model".into()));
    };
    let q = data
        .q_hc_measured
        .as_ref()
        .ok_or_else(|| Error::MissingInput("measured heating/cooling load".into()))?;
    let t_in = data.t_in.get(&zone.name).ok_or_else(|| Error::MissingInput(format!("indoor temperature of {}", zone.name)))?;
    let t_out = &data.weather.t_out;
    q.ensure_aligned(t_in)?;
    q.ensure_aligned(t_out)?;

    let mut components: Vec<(String, f64)> = zone
        .surfaces
        .iter()
        .filter(|s| s.exterior)
        .map(|s| (s.name.clone(), s.area / s.r_value()))
        .collect();
    components.extend(zone.windows.iter().map(|w| (w.name.clone(), w.u_value * w.area)));
    if zone.infiltration_ach > 0.0 {
        components.push(("infiltration".into(), AIR_DENSITY * AIR_SPECIFIC_HEAT * zone.infiltration_ach * zone.volume / 3600.0));
    }
    let blc: f64 = components.iter().map(|(_, ua)| ua).sum();

    let dt: Vec<f64> = t_in.values().iter().zip(t_out.values()).map(|(i, o)| i - o).collect();
    let x = DMatrix::from_fn(dt.len(), components.len(), |r, c| components[c].1 * dt[r]);
    let sv = x.clone().svd(false, false).singular_values;
    let tol = sv.max() * 1e-10;
    let component_rank = sv.iter().filter(|s| **s > tol).count();
    let (gram, _) = normalized_gram(&x);
    let component_condition = condition_number(&gram);

    let nominal: Vec<f64> = dt.iter().map(|d| blc * d).collect();
    let den: f64 = nominal.iter().map(|v| v * v).sum();
    if den == 0.0 {
        return Err(Error::Unidentifiable("indoor and outdoor temperatures never differ".into()));
    }
    let p_blc = nominal.iter().zip(q.values()).map(|(a, b)| a * b).sum::<f64>() / den;
    Ok(OverparamReport { components, blc, component_rank, component_condition, p_blc })
}
