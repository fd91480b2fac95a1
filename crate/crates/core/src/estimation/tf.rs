use crate::error::{Error, Result};
use crate::timeseries::TimeSeries;

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha.abs() < 1.0) {
        return Err(Error::InvalidArgument(format!("transfer-function pole {alpha} must satisfy |alpha| < 1")));
    }
    Ok(())
}

pub(crate) fn tf_values(q: &[f64], alpha: f64, beta: f64) -> Vec<f64> {
    let mut out = vec![0.0; q.len()];
    for t in 1..q.len() {
        out[t] = alpha * out[t - 1] + beta * (q[t] - q[t - 1]);
    }
    out
}

/// `d out / d alpha`, given the recursion output `out`.
pub(crate) fn alpha_sensitivity_values(out: &[f64], alpha: f64) -> Vec<f64> {
    let mut s = vec![0.0; out.len()];
    for t in 1..out.len() {
        s[t] = out[t - 1] + alpha * s[t - 1];
    }
    s
}

/// `out(t) = α·out(t−1) + β·(q(t) − q(t−1))`, starting from zero.
pub fn tf_flow(flow: &TimeSeries, alpha: f64, beta: f64) -> Result<TimeSeries> {
    check_alpha(alpha)?;
    flow.with_values(tf_values(flow.values(), alpha, beta), flow.unit())
}

/// Derivative of [`tf_flow`] with respect to `alpha`.
pub fn tf_alpha_sensitivity(flow: &TimeSeries, alpha: f64, beta: f64) -> Result<TimeSeries> {
    check_alpha(alpha)?;
    let out = tf_values(flow.values(), alpha, beta);
    flow.with_values(alpha_sensitivity_values(&out, alpha), flow.unit())
}
