use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use super::tf::{alpha_sensitivity_values, tf_values};
use super::{Covariance, FitOptions, FitReport, Param, ShellParameters, TfParams, ALPHA_BOUND};
use crate::decomposition::{Flow, HeatFlowSet};
use crate::error::{Error, Result};
use crate::timeseries::TimeSeries;

/// Residual and Jacobian evaluation for the transfer-function fit.
///
/// `r(t) = Σ p_k Q_k(t) + Σ_active tf(Q_k; α_k, β_k)(t) + q_vent + q_inf + q_hc(t)`
/// for rows after the excluded leading span.
pub struct NonlinearProblem<'a> {
    flows: &'a HeatFlowSet,
    base: ShellParameters,
    params: Vec<Param>,
    /// Known part of the residual: fixed scales, air exchange and q_hc.
    offset: Vec<f64>,
    skip: usize,
}

impl<'a> NonlinearProblem<'a> {
    pub fn new(
        flows: &'a HeatFlowSet,
        q_hc: &TimeSeries,
        tfs: &BTreeSet<Flow>,
        init: &ShellParameters,
        opts: &FitOptions,
    ) -> Result<Self> {
        flows.building.q1.ensure_aligned(q_hc)?;
        let mut base = init.clone();
        base.tf = tfs.iter().map(|f| (*f, init.tf.get(f).copied().unwrap_or_default())).collect();
        let mut params: Vec<Param> = Param::SCALES.iter().copied().filter(|p| init.is_free(*p)).collect();
        for f in tfs {
            for p in [Param::Alpha(*f), Param::Beta(*f)] {
                if init.is_free(p) {
                    params.push(p);
                }
            }
        }
        let air = flows.building.air_exchange();
        let mut offset: Vec<f64> = q_hc.values().iter().zip(air.values()).map(|(q, a)| q + a).collect();
        for f in Flow::ALL {
            if !params.contains(&Param::Scale(f)) {
                let p = base.scale(f);
                for (o, q) in offset.iter_mut().zip(flows.get(f).values()) {
                    *o += p * q;
                }
            }
        }
        let skip = opts.skip_steps(q_hc.step_seconds());
        if q_hc.len() <= skip + params.len() {
            return Err(Error::InsufficientData(format!("{} steps for {} parameters", q_hc.len(), params.len())));
        }
        Ok(Self { flows, base, params, offset, skip })
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn n_rows(&self) -> usize {
        self.offset.len() - self.skip
    }

    pub fn initial(&self) -> Vec<f64> {
        self.params.iter().map(|p| self.base.value(*p).expect("parameter present")).collect()
    }

    /// Parameters with `theta` written into the free slots.
    pub fn assemble(&self, theta: &[f64]) -> ShellParameters {
        let mut out = self.base.clone();
        for (p, v) in self.params.iter().zip(theta) {
            match p {
                Param::Scale(f) => *out.scale_mut(*f) = *v,
                Param::Alpha(f) => out.tf.entry(*f).or_default().alpha = *v,
                Param::Beta(f) => out.tf.entry(*f).or_default().beta = *v,
            }
        }
        out
    }

    fn tf_of(&self, p: &ShellParameters, f: Flow) -> TfParams {
        p.tf[&f]
    }

    pub fn residuals(&self, theta: &[f64]) -> Vec<f64> {
        let p = self.assemble(theta);
        let mut r = self.offset.clone();
        for f in Flow::ALL {
            if self.params.contains(&Param::Scale(f)) {
                let s = p.scale(f);
                for (acc, q) in r.iter_mut().zip(self.flows.get(f).values()) {
                    *acc += s * q;
                }
            }
        }
        for f in p.tf.keys() {
            let t = self.tf_of(&p, *f);
            for (acc, q) in r.iter_mut().zip(tf_values(self.flows.get(*f).values(), t.alpha, t.beta)) {
                *acc += q;
            }
        }
        r.split_off(self.skip)
    }

    /// Analytic Jacobian `∂r/∂θ` (rows after the skip).
    pub fn jacobian(&self, theta: &[f64]) -> DMatrix<f64> {
        let p = self.assemble(theta);
        let n = self.n_rows();
        let mut j = DMatrix::zeros(n, self.params.len());
        for (c, param) in self.params.iter().enumerate() {
            let col: Vec<f64> = match param {
                Param::Scale(f) => self.flows.get(*f).values().to_vec(),
                Param::Beta(f) => tf_values(self.flows.get(*f).values(), self.tf_of(&p, *f).alpha, 1.0),
                Param::Alpha(f) => {
                    let t = self.tf_of(&p, *f);
                    alpha_sensitivity_values(&tf_values(self.flows.get(*f).values(), t.alpha, t.beta), t.alpha)
                }
            };
            for r in 0..n {
                j[(r, c)] = col[self.skip + r];
            }
        }
        j
    }

    fn clamp(&self, theta: &mut [f64]) -> bool {
        let mut clamped = false;
        for (p, v) in self.params.iter().zip(theta.iter_mut()) {
            if matches!(p, Param::Alpha(_)) && v.abs() > ALPHA_BOUND {
                *v = v.signum() * ALPHA_BOUND;
                clamped = true;
            }
        }
        clamped
    }
}

fn half_sq(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

/// Covariance `s²·(JᵀJ)⁻¹`, computed on column-normalized J.
fn covariance(j: &DMatrix<f64>, s2: f64) -> Result<DMatrix<f64>> {
    let k = j.ncols();
    let norms: Vec<f64> = j.column_iter().map(|c| c.norm()).collect();
    if let Some(i) = norms.iter().position(|n| *n == 0.0) {
        return Err(Error::RankDeficient(format!("Jacobian column {i} is zero")));
    }
    let mut g = j.transpose() * j;
    for a in 0..k {
        for b in 0..k {
            g[(a, b)] /= norms[a] * norms[b];
        }
    }
    let inv = g.cholesky().ok_or_else(|| Error::RankDeficient("JᵀJ is singular at the optimum".into()))?.inverse();
    Ok(DMatrix::from_fn(k, k, |a, b| s2 * inv[(a, b)] / (norms[a] * norms[b])))
}

/// Levenberg-Marquardt fit of the scale factors and the transfer functions
/// of `tfs`, starting from `init`.
///
/// Parameters listed in `init.fixed` are held at their `init` values. TF
/// starting values come from `init.tf`, else `α = 0.5, β = 0.1`.
pub fn fit_nonlinear(
    flows: &HeatFlowSet,
    q_hc: &TimeSeries,
    tfs: &BTreeSet<Flow>,
    init: &ShellParameters,
    opts: &FitOptions,
) -> Result<(ShellParameters, FitReport)> {
    let problem = NonlinearProblem::new(flows, q_hc, tfs, init, opts)?;
    let mut theta = problem.initial();
    if problem.clamp(&mut theta) {
        log::warn!("initial transfer-function pole clamped to |alpha| = {ALPHA_BOUND}");
    }
    let k = theta.len();
    let mut r = problem.residuals(&theta);
    let mut cost = half_sq(&r);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = k == 0;
    let mut warned = false;

    while !converged {
        if iterations >= opts.max_iterations {
            return Err(Error::NoConvergence(iterations));
        }
        iterations += 1;
        let j = problem.jacobian(&theta);
        let rv = DVector::from_column_slice(&r);
        let g = j.transpose() * &rv;
        let rnorm = rv.norm();
        let scaled_grad = j
            .column_iter()
            .zip(g.iter())
            .map(|(c, gi)| {
                let d = c.norm() * rnorm;
                if d > 0.0 { gi.abs() / d } else { 0.0 }
            })
            .fold(0.0, f64::max);
        if cost == 0.0 || scaled_grad < opts.gradient_tolerance {
            break;
        }
        let a = j.transpose() * &j;
        let dmax = a.diagonal().max();
        loop {
            let mut damped = a.clone();
            for i in 0..k {
                damped[(i, i)] += lambda * a[(i, i)].max(1e-12 * dmax);
            }
            let step = damped.cholesky().map(|c| c.solve(&(-&g)));
            let Some(step) = step else {
                lambda *= 10.0;
                continue;
            };
            let mut trial: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + s).collect();
            if problem.clamp(&mut trial) && !warned {
                log::warn!("transfer-function pole reached the bound |alpha| = {ALPHA_BOUND} and was clamped");
                warned = true;
            }
            let r_trial = problem.residuals(&trial);
            let c_trial = half_sq(&r_trial);
            if c_trial < cost {
                let rel = (cost - c_trial) / cost;
                theta = trial;
                r = r_trial;
                cost = c_trial;
                lambda = (lambda / 10.0).max(1e-12);
                converged = rel < opts.cost_tolerance;
                break;
            }
            lambda *= 10.0;
            if lambda > 1e16 {
                // no descent direction left at working precision
                converged = true;
                break;
            }
        }
    }

    let mut params = problem.assemble(&theta);
    params.sigma.clear();
    params.covariance = Covariance::default();
    if k > 0 {
        let j = problem.jacobian(&theta);
        let s2 = 2.0 * cost / (problem.n_rows() - k) as f64;
        let cov = covariance(&j, s2)?;
        for (i, p) in problem.params().iter().enumerate() {
            params.sigma.insert(*p, cov[(i, i)].max(0.0).sqrt());
        }
        params.covariance = Covariance {
            params: problem.params().to_vec(),
            matrix: (0..k).map(|a| (0..k).map(|b| cov[(a, b)]).collect()).collect(),
        };
    }
    let report = FitReport::build(
        q_hc,
        params.predict(flows)?,
        &ShellParameters::unity().predict(flows)?,
        problem.skip,
        k,
        iterations,
    )?;
    Ok((params, report))
}
