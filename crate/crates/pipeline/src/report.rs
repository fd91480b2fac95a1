use epe_core::decomposition::Flow;
use epe_core::estimation::{Param, ShellParameters};
use epe_core::hvac::BoilerPoint;
use epe_core::residual_net::TrainMetrics;
use epe_core::Interval;
use serde::{Deserialize, Serialize};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Agreement between a prediction and the measured load over the objective rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Statistics {
    /// Mean of `predicted − measured` (W).
    pub mbe: f64,
    pub rmse: f64,
    pub n_obs: usize,
    pub mean_abs_measured: f64,
}

impl Statistics {
    pub fn of(measured: &[f64], predicted: &[f64]) -> Self {
        let n = measured.len();
        let nf = n as f64;
        Self {
            mbe: predicted.iter().zip(measured).map(|(p, m)| p - m).sum::<f64>() / nf,
            rmse: (predicted.iter().zip(measured).map(|(p, m)| (p - m).powi(2)).sum::<f64>() / nf).sqrt(),
            n_obs: n,
            mean_abs_measured: measured.iter().map(|m| m.abs()).sum::<f64>() / nf,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub stats: Statistics,
    pub n_params: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSummary {
    pub metrics: TrainMetrics,
    /// Fit prediction plus the network's residual estimate.
    pub stats: Statistics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum HvacResult {
    Cop { rated_cop: f64, rmse: f64, grid_points: usize },
    BoilerRelation { points: Vec<BoilerPoint>, windows: Vec<Interval> },
}

/// One emitted plot-data or model file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    /// `time_series` tables share a timestamp column; `curve` tables do not.
    pub kind: String,
    pub rows: usize,
    pub columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub schema_version: u32,
    pub building: String,
    pub measured_data: String,
    pub stage1_window: Interval,
    #[serde(default)]
    pub stage2_window: Option<Interval>,
    /// Unfitted audit model (run-1 load).
    pub before: Statistics,
    pub parameters: Option<ShellParameters>,
    pub fit: Option<FitSummary>,
    pub net: Option<NetSummary>,
    pub hvac: Option<HvacResult>,
    pub physical_interpretation: Vec<String>,
    pub files: Vec<ManifestEntry>,
}

impl PipelineReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn describe(flow: Flow) -> &'static str {
    match flow {
        Flow::Blc => "load coefficient",
        Flow::In => "effective thermal mass",
        Flow::Sun => "solar gains",
        Flow::Lep => "lights/equipment/people gains",
    }
}

fn qualifier(delta: f64, sigma: Option<f64>) -> String {
    match sigma {
        Some(s) if s > 0.0 && delta.abs() < 2.0 * s => format!(" (within 2σ = {:.2}, not significant)", 2.0 * s),
        Some(s) if s > 0.0 => format!(" ({:.0}σ)", delta.abs() / s),
        _ => String::new(),
    }
}

fn with_sigma(p: f64, sigma: Option<f64>) -> String {
    match sigma {
        Some(s) => format!("{p:.2} ± {s:.2}"),
        None => format!("{p:.2}"),
    }
}

/// Plain-language reading of each parameter against the audit model.
pub fn interpret(params: &ShellParameters) -> Vec<String> {
    let mut lines = Vec::new();
    for flow in Flow::ALL {
        let param = Param::Scale(flow);
        let p = params.scale(flow);
        let sigma = params.sigma(param);
        let head = format!("{param} = {}", with_sigma(p, sigma));
        let what = describe(flow);
        let pct = ((p - 1.0) * 100.0).abs().round();
        let line = if params.fixed.contains(&param) {
            format!("{head}: {what} held at the audit value")
        } else if pct == 0.0 {
            format!("{head}: {what} consistent with audit")
        } else if flow == Flow::In {
            let more = if p > 1.0 { "more" } else { "less" };
            format!("{head}: {more} effective thermal mass than audit (≈ {pct:.0}%){}", qualifier(p - 1.0, sigma))
        } else {
            let dir = if p > 1.0 { "higher" } else { "lower" };
            format!("{head}: {what} ≈ {pct:.0}% {dir} than audit{}", qualifier(p - 1.0, sigma))
        };
        lines.push(line);
    }
    for (flow, tf) in &params.tf {
        let a = Param::Alpha(*flow);
        let b = Param::Beta(*flow);
        lines.push(format!(
            "{a} = {}: {} reshaped with a one-step pole; larger values mean a longer lag",
            with_sigma(tf.alpha, params.sigma(a)),
            flow
        ));
        let sign = if tf.beta >= 0.0 { "adds to" } else { "subtracts from" };
        lines.push(format!(
            "{b} = {}: the lagged part of {} {sign} the scaled flow{}",
            with_sigma(tf.beta, params.sigma(b)),
            flow,
            qualifier(tf.beta, params.sigma(b))
        ));
    }
    lines
}
