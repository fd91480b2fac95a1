use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{Covariance, FitOptions, FitReport, Param, ShellParameters};
use crate::decomposition::{Flow, HeatFlowSet};
use crate::error::{Error, Result};
use crate::timeseries::TimeSeries;

/// Unit-diagonal Gram matrix of the columns and their norms.
pub(crate) fn normalized_gram(x: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let norms = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.norm()));
    let mut g = x.transpose() * x;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            g[(i, j)] /= norms[i] * norms[j];
        }
    }
    (g, norms)
}

pub(crate) fn condition_number(gram: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(gram.clone()).eigenvalues;
    let max = eig.max();
    let min = eig.min();
    if min <= 0.0 { f64::INFINITY } else { max / min }
}

/// Errors if the normalized Gram matrix is too ill-conditioned, naming the
/// most correlated pair of columns.
pub(crate) fn screen_collinearity(gram: &DMatrix<f64>, names: &[Param], limit: f64) -> Result<()> {
    if gram.nrows() < 2 {
        return Ok(());
    }
    let condition = condition_number(gram);
    if condition <= limit {
        return Ok(());
    }
    let mut worst = (0, 1, -1.0);
    for i in 0..gram.nrows() {
        for j in i + 1..gram.ncols() {
            if gram[(i, j)].abs() > worst.2 {
                worst = (i, j, gram[(i, j)].abs());
            }
        }
    }
    Err(Error::Collinearity { first: names[worst.0].to_string(), second: names[worst.1].to_string(), condition })
}

fn vif(gram: &DMatrix<f64>, index: usize) -> f64 {
    match gram.clone().try_inverse() {
        Some(inv) if inv[(index, index)] > 0.0 => inv[(index, index)],
        _ => f64::INFINITY,
    }
}

fn design(flows: &HeatFlowSet, free: &[Flow], skip: usize) -> DMatrix<f64> {
    let n = flows.len() - skip;
    DMatrix::from_fn(n, free.len(), |r, c| flows.get(free[c]).values()[skip + r])
}

/// Ordinary least squares (no intercept) for the scale factors in `free`.
///
/// Minimizes `Σ_t (Σ_k p_k Q_k(t) + q_vent + q_inf + q_hc(t))²` over the
/// rows after `opts.skip_seconds`; scales not in `free` stay at one. A free
/// flow that is identically zero, or a free `p_lep` whose VIF exceeds
/// `opts.lep_vif_limit`, is pinned to one with a warning.
pub fn fit_linear(
    flows: &HeatFlowSet,
    q_hc: &TimeSeries,
    free: &BTreeSet<Flow>,
    opts: &FitOptions,
) -> Result<(ShellParameters, FitReport)> {
    flows.building.q1.ensure_aligned(q_hc)?;
    let skip = opts.skip_steps(q_hc.step_seconds());
    if q_hc.len() <= skip + free.len() {
        return Err(Error::InsufficientData(format!(
            "{} steps leave too few rows after excluding the first {skip}",
            q_hc.len()
        )));
    }

    let mut active: Vec<Flow> = Flow::ALL.iter().copied().filter(|f| free.contains(f)).collect();
    active.retain(|f| {
        let zero = flows.get(*f).values()[skip..].iter().all(|v| *v == 0.0);
        if zero {
            log::warn!("{f} is identically zero over the fit window; pinning p_{} = 1", f.name());
        }
        !zero
    });

    if let (Some(limit), Some(li)) = (opts.lep_vif_limit, active.iter().position(|f| *f == Flow::Lep)) {
        if active.len() > 1 {
            let (gram, _) = normalized_gram(&design(flows, &active, skip));
            let v = vif(&gram, li);
            if v > limit {
                log::warn!("p_lep variance-inflation factor {v:.1} exceeds {limit}; pinning p_lep = 1");
                active.remove(li);
            }
        }
    }

    let names: Vec<Param> = active.iter().map(|f| Param::Scale(*f)).collect();
    let mut params = ShellParameters::unity();
    params.fixed = Param::SCALES.iter().copied().filter(|p| !names.contains(p)).collect();

    if !active.is_empty() {
        let x = design(flows, &active, skip);
        let offset = flows.building.air_exchange();
        let fixed_sum: Vec<f64> = (skip..flows.len())
            .map(|t| {
                Flow::ALL.iter().filter(|f| !active.contains(f)).map(|f| flows.get(*f).values()[t]).sum::<f64>()
                    + offset.values()[t]
            })
            .collect();
        let y = DVector::from_iterator(x.nrows(), (0..x.nrows()).map(|r| -(q_hc.values()[skip + r] + fixed_sum[r])));

        let (gram, norms) = normalized_gram(&x);
        screen_collinearity(&gram, &names, opts.condition_limit)?;
        let gram_inv = gram
            .clone()
            .cholesky()
            .ok_or_else(|| Error::RankDeficient("normal equations are not positive definite".into()))?
            .inverse();
        let xty = x.transpose() * &y;
        let scaled = DVector::from_iterator(active.len(), (0..active.len()).map(|i| xty[i] / norms[i]));
        let z = &gram_inv * scaled;
        let theta = DVector::from_iterator(active.len(), (0..active.len()).map(|i| z[i] / norms[i]));

        let ssr = (&y - &x * &theta).norm_squared();
        let dof = (x.nrows() - active.len()) as f64;
        let s2 = ssr / dof;
        let k = active.len();
        let cov = DMatrix::from_fn(k, k, |i, j| s2 * gram_inv[(i, j)] / (norms[i] * norms[j]));

        for (i, f) in active.iter().enumerate() {
            *params.scale_mut(*f) = theta[i];
            params.sigma.insert(Param::Scale(*f), cov[(i, i)].max(0.0).sqrt());
        }
        params.covariance =
            Covariance { params: names.clone(), matrix: (0..k).map(|i| (0..k).map(|j| cov[(i, j)]).collect()).collect() };
    }

    let report = FitReport::build(
        q_hc,
        params.predict(flows)?,
        &ShellParameters::unity().predict(flows)?,
        skip,
        names.len(),
        0,
    )?;
    Ok((params, report))
}
