use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{fit_linear, FitOptions, Param};
use crate::decomposition::{Flow, HeatFlowSet};
use crate::error::{Error, Result};
use crate::timeseries::TimeSeries;

/// Moving-block bootstrap of the linear fit.
///
/// Residual blocks of `block_seconds` are resampled with replacement, added
/// to the fitted prediction and refitted. Returns the standard deviation of
/// each free scale across `replicates` refits.
pub fn bootstrap_sigma(
    flows: &HeatFlowSet,
    q_hc: &TimeSeries,
    free: &BTreeSet<Flow>,
    opts: &FitOptions,
    block_seconds: i64,
    replicates: usize,
    seed: u64,
) -> Result<BTreeMap<Param, f64>> {
    if replicates < 2 {
        return Err(Error::InvalidArgument("at least two bootstrap replicates are needed".into()));
    }
    let (params, report) = fit_linear(flows, q_hc, free, opts)?;
    let skip = report.skip;
    let block = (block_seconds / q_hc.step_seconds()).max(1) as usize;
    let res = &report.residuals.values()[skip..];
    let n = res.len();
    if n < 2 * block {
        return Err(Error::InsufficientData(format!("{n} rows are too few for {block}-step blocks")));
    }
    let n_blocks = n / block;
    let free_params: Vec<Param> = params.sigma.keys().copied().collect();

    let fits: Vec<Vec<f64>> = (0..replicates)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let mut values = report.predicted.values().to_vec();
            for v in values.iter_mut().take(skip) {
                *v = 0.0;
            }
            let mut t = skip;
            while t < values.len() {
                let b = rng.random_range(0..n_blocks) * block;
                for k in 0..block.min(values.len() - t) {
                    values[t + k] += res[b + k];
                }
                t += block;
            }
            let y = q_hc.with_values(values, q_hc.unit())?;
            let (p, _) = fit_linear(flows, &y, free, opts)?;
            Ok(free_params.iter().map(|fp| p.value(*fp).unwrap_or(1.0)).collect())
        })
        .collect::<Result<_>>()?;

    let m = replicates as f64;
    Ok(free_params
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mean = fits.iter().map(|f| f[i]).sum::<f64>() / m;
            let var = fits.iter().map(|f| (f[i] - mean).powi(2)).sum::<f64>() / (m - 1.0);
            (*p, var.sqrt())
        })
        .collect())
}
