use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::TimeSeries;

/// Goodness of fit over the objective rows.
///
/// `residuals` is `measured − predicted` over the whole window; the
/// statistics use only the rows after the excluded leading span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub residuals: TimeSeries,
    pub predicted: TimeSeries,
    /// Mean of `predicted − measured` (W).
    pub mbe: f64,
    pub rmse: f64,
    pub n_obs: usize,
    pub n_params: usize,
    /// Statistics of the unfitted audit model (all scales one, no TF).
    pub before_mbe: f64,
    pub before_rmse: f64,
    /// Index of the first objective row.
    pub skip: usize,
    #[serde(default)]
    pub iterations: usize,
}

pub(crate) fn mbe_rmse(residuals: &[f64]) -> (f64, f64) {
    let n = residuals.len() as f64;
    let mbe = -residuals.iter().sum::<f64>() / n;
    let rmse = (residuals.iter().map(|r| r * r).sum::<f64>() / n).sqrt();
    (mbe, rmse)
}

impl FitReport {
    pub(crate) fn build(
        measured: &TimeSeries,
        predicted: TimeSeries,
        before: &TimeSeries,
        skip: usize,
        n_params: usize,
        iterations: usize,
    ) -> Result<Self> {
        let n_obs = measured.len().saturating_sub(skip);
        if n_obs <= n_params {
            return Err(Error::InsufficientData(format!("{n_obs} observations for {n_params} parameters")));
        }
        let residuals = measured.try_sub(&predicted)?;
        let (mbe, rmse) = mbe_rmse(&residuals.values()[skip..]);
        let before_res = measured.try_sub(before)?;
        let (before_mbe, before_rmse) = mbe_rmse(&before_res.values()[skip..]);
        Ok(Self { residuals, predicted, mbe, rmse, n_obs, n_params, before_mbe, before_rmse, skip, iterations })
    }
}
