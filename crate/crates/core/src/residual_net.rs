//! One-hidden-layer perceptron fitted to the post-estimation residuals.
//!
//! Each row (hour) is an independent sample: the inputs are the macro flows
//! and transfer-function terms at that hour, the target is the residual.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decomposition::{Flow, HeatFlowSet};
use crate::error::{Error, Result};
use crate::estimation::ShellParameters;
use crate::timeseries::{TimeSeries, Unit};

pub const INPUT_NAMES: [&str; 6] = ["q_blc", "q_in", "q_sun", "q_lep", "q_tf_in", "q_tf_sun"];

/// The six standard inputs; a transfer function that is not active gives a
/// zero series.
pub fn standard_inputs(flows: &HeatFlowSet, params: &ShellParameters) -> Result<Vec<(String, TimeSeries)>> {
    let tf = params.tf_terms(flows)?;
    let zero = flows.building.q1.zeros_like();
    let mut out: Vec<(String, TimeSeries)> = Flow::ALL.iter().map(|f| (f.to_string(), flows.get(*f).clone())).collect();
    out.push(("q_tf_in".into(), tf.get(&Flow::In).cloned().unwrap_or_else(|| zero.clone())));
    out.push(("q_tf_sun".into(), tf.get(&Flow::Sun).cloned().unwrap_or(zero)));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: usize,
    pub max_epochs: usize,
    pub learn_rate: f64,
    pub momentum: f64,
    /// Trailing share of the rows held out for early stopping.
    pub validation_fraction: f64,
    pub patience: usize,
    /// Leading rows ignored (recursion transient of the fit).
    pub skip: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: 9,
            max_epochs: 20_000,
            learn_rate: 0.05,
            momentum: 0.9,
            validation_fraction: 0.2,
            patience: 50,
            skip: 0,
            seed: 42,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::InvalidArgument("hidden layer needs at least one node".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 0.5) {
            return Err(Error::InvalidArgument("validation_fraction must be in (0, 0.5)".into()));
        }
        if !(self.learn_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument("learn_rate must be > 0 and momentum in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMetrics {
    /// W, on the training rows.
    pub train_rmse: f64,
    /// W, on the held-out rows.
    pub validation_rmse: f64,
    pub epochs: usize,
    pub best_epoch: usize,
    pub n_train: usize,
    pub n_validation: usize,
}

/// Weights and normalization of a trained network.
///
/// `w1` is inputs × hidden, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualNet {
    pub input_names: Vec<String>,
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub target_mean: f64,
    pub target_scale: f64,
    pub hidden: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

fn mean_scale(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    (mean, if sd > 0.0 { sd } else { 1.0 })
}

impl ResidualNet {
    /// A network with random weights and identity normalization.
    pub fn random(n_inputs: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a1 = (6.0 / (n_inputs + hidden) as f64).sqrt();
        let a2 = (6.0 / (hidden + 1) as f64).sqrt();
        Self {
            input_names: (0..n_inputs).map(|i| format!("x{i}")).collect(),
            input_mean: vec![0.0; n_inputs],
            input_scale: vec![1.0; n_inputs],
            target_mean: 0.0,
            target_scale: 1.0,
            hidden,
            w1: (0..n_inputs * hidden).map(|_| rng.random_range(-a1..a1)).collect(),
            b1: vec![0.0; hidden],
            w2: (0..hidden).map(|_| rng.random_range(-a2..a2)).collect(),
            b2: 0.0,
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.input_names.len()
    }

    pub fn n_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    /// Flattened weights in the order w1, b1, w2, b2.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        p.extend(&self.w1);
        p.extend(&self.b1);
        p.extend(&self.w2);
        p.push(self.b2);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.n_params());
        let (a, rest) = p.split_at(self.w1.len());
        let (b, rest) = rest.split_at(self.hidden);
        let (c, d) = rest.split_at(self.hidden);
        self.w1.copy_from_slice(a);
        self.b1.copy_from_slice(b);
        self.w2.copy_from_slice(c);
        self.b2 = d[0];
    }

    /// Output for one normalized input row (normalized target units).
    pub fn forward_normalized(&self, x: &[f64]) -> f64 {
        let h = self.hidden;
        let mut out = self.b2;
        for j in 0..h {
            let mut z = self.b1[j];
            for (i, xi) in x.iter().enumerate() {
                z += xi * self.w1[i * h + j];
            }
            out += self.w2[j] * z.tanh();
        }
        out
    }

    /// Half mean squared error over normalized rows and its gradient with
    /// respect to [`params`](Self::params).
    pub fn loss_gradient(&self, x: &[Vec<f64>], y: &[f64]) -> (f64, Vec<f64>) {
        let h = self.hidden;
        let d = self.n_inputs();
        let n = x.len() as f64;
        let mut g = vec![0.0; self.n_params()];
        let (gw1, rest) = g.split_at_mut(d * h);
        let (gb1, rest) = rest.split_at_mut(h);
        let (gw2, gb2) = rest.split_at_mut(h);
        let mut loss = 0.0;
        let mut act = vec![0.0; h];
        for (row, target) in x.iter().zip(y) {
            let mut out = self.b2;
            for j in 0..h {
                let mut z = self.b1[j];
                for i in 0..d {
                    z += row[i] * self.w1[i * h + j];
                }
                act[j] = z.tanh();
                out += self.w2[j] * act[j];
            }
            let e = out - target;
            loss += 0.5 * e * e;
            gb2[0] += e;
            for j in 0..h {
                gw2[j] += e * act[j];
                let dz = e * self.w2[j] * (1.0 - act[j] * act[j]);
                gb1[j] += dz;
                for i in 0..d {
                    gw1[i * h + j] += dz * row[i];
                }
            }
        }
        g.iter_mut().for_each(|v| *v /= n);
        (loss / n, g)
    }

    fn normalize_rows(&self, columns: &[&[f64]], rows: std::ops::Range<usize>) -> Vec<Vec<f64>> {
        rows.map(|t| {
            columns.iter().enumerate().map(|(i, c)| (c[t] - self.input_mean[i]) / self.input_scale[i]).collect()
        })
        .collect()
    }

    fn resolve<'a>(&self, inputs: &'a [(String, TimeSeries)]) -> Result<Vec<&'a TimeSeries>> {
        let out: Vec<&TimeSeries> = self
            .input_names
            .iter()
            .map(|name| {
                inputs
                    .iter()
                    .find(|(n, _)| n == name)
                    .map(|(_, s)| s)
                    .ok_or_else(|| Error::MissingInput(format!("network input {name}")))
            })
            .collect::<Result<_>>()?;
        for s in &out[1..] {
            out[0].ensure_aligned(s)?;
        }
        Ok(out)
    }

    /// Pointwise prediction of the residual (W).
    pub fn predict(&self, inputs: &[(String, TimeSeries)]) -> Result<TimeSeries> {
        let series = self.resolve(inputs)?;
        let columns: Vec<&[f64]> = series.iter().map(|s| s.values()).collect();
        let rows = self.normalize_rows(&columns, 0..series[0].len());
        let values = rows.iter().map(|r| self.forward_normalized(r) * self.target_scale + self.target_mean).collect();
        series[0].with_values(values, Unit::Watt)
    }
}

fn rmse(net: &ResidualNet, x: &[Vec<f64>], y: &[f64]) -> f64 {
    let s: f64 = x.iter().zip(y).map(|(r, t)| (net.forward_normalized(r) - t).powi(2)).sum();
    (s / x.len() as f64).sqrt()
}

/// Trains on `residuals` with chronological train/validation split and
/// early stopping on validation RMSE.
pub fn train(inputs: &[(String, TimeSeries)], residuals: &TimeSeries, cfg: &TrainConfig) -> Result<(ResidualNet, TrainMetrics)> {
    cfg.validate()?;
    if inputs.is_empty() {
        return Err(Error::InvalidArgument("no network inputs".into()));
    }
    let mut net = ResidualNet::random(inputs.len(), cfg.hidden, cfg.seed);
    net.input_names = inputs.iter().map(|(n, _)| n.clone()).collect();
    let series = net.resolve(inputs)?;
    series[0].ensure_aligned(residuals)?;

    let n_total = residuals.len().saturating_sub(cfg.skip);
    let needed = 10 * net.n_params();
    if n_total < needed {
        return Err(Error::InsufficientData(format!(
            "{n_total} rows for a network with {} weights (need at least {needed})",
            net.n_params()
        )));
    }
    let rows = cfg.skip..residuals.len();
    let columns: Vec<&[f64]> = series.iter().map(|s| &s.values()[rows.clone()]).collect();
    for (i, c) in columns.iter().enumerate() {
        (net.input_mean[i], net.input_scale[i]) = mean_scale(c);
    }
    let target = &residuals.values()[rows];
    let (tm, ts) = mean_scale(target);
    net.target_mean = tm;
    net.target_scale = ts;

    let x = net.normalize_rows(&columns, 0..n_total);
    let y: Vec<f64> = target.iter().map(|v| (v - tm) / ts).collect();
    let n_val = ((n_total as f64) * cfg.validation_fraction).round().max(1.0) as usize;
    let n_train = n_total - n_val;
    let (x_train, x_val) = x.split_at(n_train);
    let (y_train, y_val) = y.split_at(n_train);

    let constant_target = target.iter().all(|v| *v == target[0]);
    let mut epochs = 0;
    let mut best_epoch = 0;
    if constant_target {
        // nothing to learn beyond the mean
        net.w2.iter_mut().for_each(|w| *w = 0.0);
        net.b2 = 0.0;
    } else {
        let mut theta = net.params();
        let mut velocity = vec![0.0; theta.len()];
        let mut best = (rmse(&net, x_val, y_val), theta.clone());
        let mut since_best = 0;
        while epochs < cfg.max_epochs && since_best < cfg.patience {
            epochs += 1;
            let (_, g) = net.loss_gradient(x_train, y_train);
            for ((t, v), gi) in theta.iter_mut().zip(velocity.iter_mut()).zip(&g) {
                *v = cfg.momentum * *v - cfg.learn_rate * gi;
                *t += *v;
            }
            net.set_params(&theta);
            let val = rmse(&net, x_val, y_val);
            if val < best.0 {
                best = (val, theta.clone());
                best_epoch = epochs;
                since_best = 0;
            } else {
                since_best += 1;
            }
        }
        net.set_params(&best.1);
    }
    let metrics = TrainMetrics {
        train_rmse: rmse(&net, x_train, y_train) * ts,
        validation_rmse: rmse(&net, x_val, y_val) * ts,
        epochs,
        best_epoch,
        n_train,
        n_validation: n_val,
    };
    Ok((net, metrics))
}
