use std::collections::BTreeMap;

use crate::decomposition::{Flow, HeatFlowSet};
use crate::error::{Error, Result};
use crate::timeseries::Interval;

/// Maximal contiguous runs where `|dominant| ≥ thresholds[dominant]` and
/// every other listed flow has `|flow| ≤ thresholds[flow]`.
///
/// Runs shorter than `min_seconds` are dropped. An empty result is not an
/// error.
pub fn select_window(
    flows: &HeatFlowSet,
    dominant: Flow,
    thresholds: &BTreeMap<Flow, f64>,
    min_seconds: i64,
) -> Result<Vec<Interval>> {
    let dom_threshold = *thresholds
        .get(&dominant)
        .ok_or_else(|| Error::InvalidArgument(format!("no threshold given for the dominant flow {dominant}")))?;
    let q1 = &flows.building.q1;
    let step = q1.step_seconds();
    let min_steps = (min_seconds.max(step) as usize).div_ceil(step as usize);
    let keep = |t: usize| {
        flows.get(dominant).values()[t].abs() >= dom_threshold
            && thresholds.iter().filter(|(f, _)| **f != dominant).all(|(f, thr)| flows.get(*f).values()[t].abs() <= *thr)
    };

    let mut out = Vec::new();
    let mut run_start = None;
    for t in 0..=q1.len() {
        let ok = t < q1.len() && keep(t);
        match (ok, run_start) {
            (true, None) => run_start = Some(t),
            (false, Some(s)) => {
                if t - s >= min_steps {
                    out.push(Interval::new(q1.timestamp(s), q1.timestamp(t))?);
                }
                run_start = None;
            }
            _ => {}
        }
    }
    Ok(out)
}
