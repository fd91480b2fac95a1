//! Shell parameter estimation: scale factors, transfer-function shape
//! parameters, their uncertainties and the corrective process load.

mod bootstrap;
mod linear;
mod lm;
mod overparam;
mod stats;
mod tf;
mod window;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::decomposition::{Flow, HeatFlowSet};
use crate::error::{Error, Result};
use crate::timeseries::TimeSeries;

pub use bootstrap::bootstrap_sigma;
pub use linear::fit_linear;
pub use lm::{fit_nonlinear, NonlinearProblem};
pub use overparam::{overparam_demo, OverparamReport};
pub use stats::FitReport;
pub use tf::{tf_alpha_sensitivity, tf_flow};
pub use window::select_window;

/// Largest admissible |α|; the LM step is clamped to it.
pub const ALPHA_BOUND: f64 = 0.999;

/// An estimable parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Param {
    Scale(Flow),
    Alpha(Flow),
    Beta(Flow),
}

impl Param {
    pub const SCALES: [Param; 4] =
        [Param::Scale(Flow::Blc), Param::Scale(Flow::In), Param::Scale(Flow::Sun), Param::Scale(Flow::Lep)];

    /// Alternative label used in published parameter tables, if any.
    pub fn alias(&self) -> Option<&'static str> {
        match self {
            Param::Beta(Flow::In) => Some("p_in,phase"),
            Param::Alpha(Flow::In) => Some("p_TF,in"),
            Param::Beta(Flow::Sun) => Some("p_sun,phase"),
            Param::Alpha(Flow::Sun) => Some("p_TF,sun"),
            _ => None,
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Param::Scale(k) => write!(f, "p_{}", k.name()),
            Param::Alpha(k) => write!(f, "alpha_{}", k.name()),
            Param::Beta(k) => write!(f, "beta_{}", k.name()),
        }
    }
}

impl FromStr for Param {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unknown parameter {s:?}"));
        let (head, flow) = s.split_once('_').ok_or_else(bad)?;
        let flow: Flow = flow.parse().map_err(|_| bad())?;
        match head {
            "p" => Ok(Param::Scale(flow)),
            "alpha" => Ok(Param::Alpha(flow)),
            "beta" => Ok(Param::Beta(flow)),
            _ => Err(bad()),
        }
    }
}

impl From<Param> for String {
    fn from(p: Param) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for Param {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Pole and gain of one transfer-function term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TfParams {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for TfParams {
    fn default() -> Self {
        Self { alpha: 0.5, beta: 0.1 }
    }
}

/// Parameter covariance in the order of `params`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Covariance {
    pub params: Vec<Param>,
    pub matrix: Vec<Vec<f64>>,
}

impl Covariance {
    pub fn get(&self, a: Param, b: Param) -> Option<f64> {
        let i = self.params.iter().position(|p| *p == a)?;
        let j = self.params.iter().position(|p| *p == b)?;
        Some(self.matrix[i][j])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellParameters {
    pub p_blc: f64,
    pub p_in: f64,
    pub p_sun: f64,
    pub p_lep: f64,
    #[serde(default)]
    pub tf: BTreeMap<Flow, TfParams>,
    #[serde(default)]
    pub fixed: BTreeSet<Param>,
    #[serde(default)]
    pub sigma: BTreeMap<Param, f64>,
    #[serde(default)]
    pub covariance: Covariance,
}

impl Default for ShellParameters {
    fn default() -> Self {
        Self::unity()
    }
}

impl ShellParameters {
    /// All scales at one, no transfer functions, nothing fixed.
    pub fn unity() -> Self {
        Self {
            p_blc: 1.0,
            p_in: 1.0,
            p_sun: 1.0,
            p_lep: 1.0,
            tf: BTreeMap::new(),
            fixed: BTreeSet::new(),
            sigma: BTreeMap::new(),
            covariance: Covariance::default(),
        }
    }

    pub fn scale(&self, flow: Flow) -> f64 {
        match flow {
            Flow::Blc => self.p_blc,
            Flow::In => self.p_in,
            Flow::Sun => self.p_sun,
            Flow::Lep => self.p_lep,
        }
    }

    pub fn scale_mut(&mut self, flow: Flow) -> &mut f64 {
        match flow {
            Flow::Blc => &mut self.p_blc,
            Flow::In => &mut self.p_in,
            Flow::Sun => &mut self.p_sun,
            Flow::Lep => &mut self.p_lep,
        }
    }

    pub fn value(&self, p: Param) -> Option<f64> {
        match p {
            Param::Scale(f) => Some(self.scale(f)),
            Param::Alpha(f) => self.tf.get(&f).map(|t| t.alpha),
            Param::Beta(f) => self.tf.get(&f).map(|t| t.beta),
        }
    }

    pub fn sigma(&self, p: Param) -> Option<f64> {
        self.sigma.get(&p).copied()
    }

    pub fn is_free(&self, p: Param) -> bool {
        !self.fixed.contains(&p)
    }

    /// Checks the stability and bookkeeping invariants.
    pub fn validate(&self) -> Result<()> {
        for (flow, t) in &self.tf {
            if !(t.alpha.abs() < 1.0) {
                return Err(Error::InvalidArgument(format!("alpha_{} = {} is not in (-1, 1)", flow.name(), t.alpha)));
            }
        }
        for (p, s) in &self.sigma {
            if !(*s >= 0.0) {
                return Err(Error::InvalidArgument(format!("sigma of {p} is negative")));
            }
            if self.fixed.contains(p) {
                return Err(Error::InvalidArgument(format!("fixed parameter {p} carries a sigma")));
            }
        }
        Ok(())
    }

    /// Transfer-function output per active flow.
    pub fn tf_terms(&self, flows: &HeatFlowSet) -> Result<BTreeMap<Flow, TimeSeries>> {
        self.tf.iter().map(|(f, t)| Ok((*f, tf_flow(flows.get(*f), t.alpha, t.beta)?))).collect()
    }

    /// Predicted delivered load `−Σ p_k Q_k − Σ TF − q_vent − q_inf`.
    pub fn predict(&self, flows: &HeatFlowSet) -> Result<TimeSeries> {
        let base = flows.building.q1.zeros_like();
        let mut total: Vec<f64> = base.values().to_vec();
        for f in Flow::ALL {
            let p = self.scale(f);
            for (acc, q) in total.iter_mut().zip(flows.get(f).values()) {
                *acc -= p * q;
            }
        }
        for term in self.tf_terms(flows)?.values() {
            for (acc, q) in total.iter_mut().zip(term.values()) {
                *acc -= q;
            }
        }
        for (acc, q) in total.iter_mut().zip(flows.building.air_exchange().values()) {
            *acc -= q;
        }
        base.with_values(total, flows.building.q1.unit())
    }
}

/// Settings shared by the linear and nonlinear fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Leading span excluded from the objective (seconds).
    pub skip_seconds: i64,
    /// Normalized condition number above which the fit is refused.
    pub condition_limit: f64,
    /// VIF above which a free p_lep is pinned to one; `None` disables.
    pub lep_vif_limit: Option<f64>,
    pub max_iterations: usize,
    pub cost_tolerance: f64,
    pub gradient_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            skip_seconds: 86_400,
            condition_limit: 1e8,
            lep_vif_limit: Some(10.0),
            max_iterations: 200,
            cost_tolerance: 1e-10,
            gradient_tolerance: 1e-8,
        }
    }
}

impl FitOptions {
    pub(crate) fn skip_steps(&self, step_seconds: i64) -> usize {
        (self.skip_seconds.max(0) as usize).div_ceil(step_seconds as usize)
    }
}

/// `Σ_k (p_k − 1)·Q_k + Σ TF`, the process load that moves the audit model
/// onto the fitted one.
pub fn corrective_flow(flows: &HeatFlowSet, params: &ShellParameters) -> Result<TimeSeries> {
    let q1 = &flows.building.q1;
    let mut out = vec![0.0; q1.len()];
    for f in Flow::ALL {
        let d = params.scale(f) - 1.0;
        if d != 0.0 {
            for (acc, q) in out.iter_mut().zip(flows.get(f).values()) {
                *acc += d * q;
            }
        }
    }
    for term in params.tf_terms(flows)?.values() {
        for (acc, q) in out.iter_mut().zip(term.values()) {
            *acc += q;
        }
    }
    q1.with_values(out, q1.unit())
}
