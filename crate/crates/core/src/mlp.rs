//! Single-hidden-layer perceptron baseline: sigmoid hidden units, identity
//! output, full-batch training by Rprop or momentum backprop.

use std::fmt::Write as _;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::seed::{self, stream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MlpError {
    #[error("invalid MLP config: {0}")]
    InvalidConfig(String),
    #[error("expected {expected} inputs, found {found}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("training data is empty")]
    EmptyData,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trainer {
    #[default]
    Rprop,
    Backprop,
}

impl std::str::FromStr for Trainer {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rprop" => Ok(Trainer::Rprop),
            "backprop" => Ok(Trainer::Backprop),
            _ => Err(format!("unknown trainer `{s}` (rprop|backprop)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RpropParams {
    pub eta_plus: f64,
    pub eta_minus: f64,
    pub delta_init: f64,
    pub delta_max: f64,
}

impl Default for RpropParams {
    fn default() -> Self {
        Self {
            eta_plus: 1.2,
            eta_minus: 0.5,
            delta_init: 0.1,
            delta_max: 50.0,
        }
    }
}

/// Smallest Rprop step size.
pub const DELTA_MIN: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden_nodes: usize,
    pub max_iterations: usize,
    pub trainer: Trainer,
    /// Backprop only.
    pub learning_rate: f64,
    /// Backprop only.
    pub momentum: f64,
    pub rprop: RpropParams,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden_nodes: 32,
            max_iterations: 500,
            trainer: Trainer::Rprop,
            learning_rate: 0.3,
            momentum: 0.2,
            rprop: RpropParams::default(),
            seed: 0,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<(), MlpError> {
        let bad = |m: String| Err(MlpError::InvalidConfig(m));
        if self.hidden_nodes == 0 {
            return bad("hidden_nodes must be at least 1".into());
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1".into());
        }
        for (name, v) in [("learning_rate", self.learning_rate), ("momentum", self.momentum)] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(format!("{name} {v} outside (0, 1]"));
            }
        }
        let r = &self.rprop;
        if !(r.eta_plus > 1.0) || !(r.eta_minus > 0.0 && r.eta_minus < 1.0) {
            return bad("rprop needs eta_plus > 1 and 0 < eta_minus < 1".into());
        }
        if !(r.delta_init >= DELTA_MIN && r.delta_init <= r.delta_max && r.delta_max.is_finite()) {
            return bad(format!("rprop needs {DELTA_MIN} <= delta_init <= delta_max"));
        }
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Weights are stored flat: per hidden unit its bias then its input
/// weights, followed by the output bias and the hidden-to-output weights.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    inputs: usize,
    hidden: usize,
    params: Vec<f64>,
}

impl MlpModel {
    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        Self {
            inputs,
            hidden,
            params: vec![0.0; Self::param_len(inputs, hidden)],
        }
    }

    fn param_len(inputs: usize, hidden: usize) -> usize {
        hidden * (inputs + 1) + 1 + hidden
    }

    /// Uniform in [-0.5, 0.5] scaled by 1/sqrt(fan-in).
    pub fn random(inputs: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = seed::rng(seed, &[stream::MLP_INIT]);
        let mut m = Self::zeros(inputs, hidden);
        let hs = 1.0 / (inputs as f64).sqrt();
        let os = 1.0 / (hidden as f64).sqrt();
        let split = hidden * (inputs + 1);
        for (k, p) in m.params.iter_mut().enumerate() {
            let scale = if k < split { hs } else { os };
            *p = rng.random_range(-0.5..=0.5) * scale;
        }
        m
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<(), MlpError> {
        if params.len() != self.params.len() {
            return Err(MlpError::ArityMismatch {
                expected: self.params.len(),
                found: params.len(),
            });
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    /// Computational node count: hidden units plus the output unit.
    pub fn node_count(&self) -> usize {
        self.hidden + 1
    }

    fn forward(&self, x: &[f64], hidden_out: &mut [f64]) -> f64 {
        let stride = self.inputs + 1;
        let out = &self.params[self.hidden * stride..];
        let mut y = out[0];
        for (j, h) in hidden_out.iter_mut().enumerate() {
            let w = &self.params[j * stride..(j + 1) * stride];
            let z = w[0] + w[1..].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            *h = sigmoid(z);
            y += out[1 + j] * *h;
        }
        y
    }

    pub fn predict(&self, features: &[f64]) -> Result<f64, MlpError> {
        if features.len() != self.inputs {
            return Err(MlpError::ArityMismatch {
                expected: self.inputs,
                found: features.len(),
            });
        }
        let mut h = vec![0.0; self.hidden];
        Ok(self.forward(features, &mut h))
    }

    /// Mean squared error over `data` and its gradient.
    pub fn loss_and_gradient(&self, data: &Dataset) -> Result<(f64, Vec<f64>), MlpError> {
        self.check_data(data)?;
        let stride = self.inputs + 1;
        let split = self.hidden * stride;
        let mut grad = vec![0.0; self.params.len()];
        let mut h = vec![0.0; self.hidden];
        let mut loss = 0.0;
        let n = data.len() as f64;
        for row in data.rows() {
            let y = self.forward(&row.features, &mut h);
            let e = y - row.target;
            loss += e * e;
            let dy = 2.0 * e / n;
            grad[split] += dy;
            for j in 0..self.hidden {
                let v = self.params[split + 1 + j];
                grad[split + 1 + j] += dy * h[j];
                let dz = dy * v * h[j] * (1.0 - h[j]);
                let g = &mut grad[j * stride..(j + 1) * stride];
                g[0] += dz;
                for (gk, xk) in g[1..].iter_mut().zip(&row.features) {
                    *gk += dz * xk;
                }
            }
        }
        Ok((loss / n, grad))
    }

    pub fn loss(&self, data: &Dataset) -> Result<f64, MlpError> {
        self.check_data(data)?;
        let mut h = vec![0.0; self.hidden];
        let sse: f64 = data
            .rows()
            .iter()
            .map(|r| {
                let e = self.forward(&r.features, &mut h) - r.target;
                e * e
            })
            .sum();
        Ok(sse / data.len() as f64)
    }

    fn check_data(&self, data: &Dataset) -> Result<(), MlpError> {
        if data.n_features() != self.inputs {
            return Err(MlpError::ArityMismatch {
                expected: self.inputs,
                found: data.n_features(),
            });
        }
        if data.is_empty() {
            return Err(MlpError::EmptyData);
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let stride = self.inputs + 1;
        let mut s = String::new();
        writeln!(s, "mlp-model 1\ninputs {}\nhidden {}", self.inputs, self.hidden).unwrap();
        for j in 0..self.hidden {
            s.push_str("unit");
            for v in &self.params[j * stride..(j + 1) * stride] {
                write!(s, " {v}").unwrap();
            }
            s.push('\n');
        }
        s.push_str("output");
        for v in &self.params[self.hidden * stride..] {
            write!(s, " {v}").unwrap();
        }
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<MlpModel, MlpError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let mut field = |key: &str| -> Result<(usize, Vec<&str>), MlpError> {
            let (line, l) = lines.next().ok_or(MlpError::Parse {
                line: 0,
                msg: format!("missing `{key}` line"),
            })?;
            let mut words: Vec<&str> = l.split_whitespace().collect();
            if words[0] != key {
                return Err(MlpError::Parse {
                    line,
                    msg: format!("expected `{key}`, found `{}`", words[0]),
                });
            }
            words.remove(0);
            Ok((line, words))
        };
        let count = |line: usize, w: &[&str]| -> Result<usize, MlpError> {
            match w {
                [v] => v.parse().map_err(|_| MlpError::Parse {
                    line,
                    msg: format!("invalid count `{v}`"),
                }),
                _ => Err(MlpError::Parse {
                    line,
                    msg: "expected one value".into(),
                }),
            }
        };
        let floats = |line: usize, w: &[&str], n: usize| -> Result<Vec<f64>, MlpError> {
            if w.len() != n {
                return Err(MlpError::Parse {
                    line,
                    msg: format!("expected {n} values, found {}", w.len()),
                });
            }
            w.iter()
                .map(|v| match v.parse::<f64>() {
                    Ok(x) if x.is_finite() => Ok(x),
                    _ => Err(MlpError::Parse {
                        line,
                        msg: format!("invalid weight `{v}`"),
                    }),
                })
                .collect()
        };
        let (line, w) = field("mlp-model")?;
        if w != ["1"] {
            return Err(MlpError::Parse {
                line,
                msg: "unsupported version".into(),
            });
        }
        let (line, w) = field("inputs")?;
        let inputs = count(line, &w)?;
        let (line, w) = field("hidden")?;
        let hidden = count(line, &w)?;
        if inputs == 0 || hidden == 0 {
            return Err(MlpError::Parse {
                line,
                msg: "inputs and hidden must be positive".into(),
            });
        }
        let mut params = Vec::with_capacity(Self::param_len(inputs, hidden));
        for _ in 0..hidden {
            let (line, w) = field("unit")?;
            params.extend(floats(line, &w, inputs + 1)?);
        }
        let (line, w) = field("output")?;
        params.extend(floats(line, &w, hidden + 1)?);
        if let Some((line, _)) = lines.next() {
            return Err(MlpError::Parse {
                line,
                msg: "trailing input after model".into(),
            });
        }
        Ok(MlpModel {
            inputs,
            hidden,
            params,
        })
    }
}

/// Per-weight step-size adaptation (the iRprop- variant): a sign change
/// shrinks the step and skips that update.
#[derive(Clone, Debug)]
pub struct Rprop {
    params: RpropParams,
    delta: Vec<f64>,
    prev: Vec<f64>,
}

impl Rprop {
    pub fn new(params: RpropParams, n: usize) -> Self {
        Self {
            params,
            delta: vec![params.delta_init; n],
            prev: vec![0.0; n],
        }
    }

    pub fn step(&mut self, weights: &mut [f64], grad: &[f64]) {
        let r = &self.params;
        for k in 0..weights.len() {
            let mut g = grad[k];
            let s = g * self.prev[k];
            if s > 0.0 {
                self.delta[k] = (self.delta[k] * r.eta_plus).min(r.delta_max);
            } else if s < 0.0 {
                self.delta[k] = (self.delta[k] * r.eta_minus).max(DELTA_MIN);
                g = 0.0;
            }
            if g > 0.0 {
                weights[k] -= self.delta[k];
            } else if g < 0.0 {
                weights[k] += self.delta[k];
            }
            self.prev[k] = g;
        }
    }

    pub fn deltas(&self) -> &[f64] {
        &self.delta
    }
}


#[derive(Clone, Debug, PartialEq)]
pub struct MlpFit {
    pub model: MlpModel,
    pub initial_rmse: f64,
    pub final_rmse: f64,
}

/// Trains on `data` (inputs already scaled). Returns the best weights seen.
pub fn train_mlp(data: &Dataset, config: &MlpConfig) -> Result<MlpFit, MlpError> {
    config.validate()?;
    if data.is_empty() {
        return Err(MlpError::EmptyData);
    }
    let mut model = MlpModel::random(data.n_features(), config.hidden_nodes, config.seed);
    let n = model.params.len();
    let (mut loss, mut grad) = model.loss_and_gradient(data)?;
    let initial = loss;
    let mut best = (loss, model.params.clone());

    let mut rprop = Rprop::new(config.rprop, n);
    let mut velocity = vec![0.0; n];

    for _ in 0..config.max_iterations {
        match config.trainer {
            Trainer::Rprop => rprop.step(&mut model.params, &grad),
            Trainer::Backprop => {
                for k in 0..n {
                    velocity[k] = config.momentum * velocity[k] - config.learning_rate * grad[k];
                    model.params[k] += velocity[k];
                }
            }
        }
        (loss, grad) = model.loss_and_gradient(data)?;
        if loss < best.0 {
            best = (loss, model.params.clone());
        }
    }
    debug_assert!(loss.is_nan() || best.0 <= loss);
    model.params = best.1;
    Ok(MlpFit {
        model,
        initial_rmse: initial.sqrt(),
        final_rmse: best.0.sqrt(),
    })
}

pub fn predict_mlp(model: &MlpModel, features: &[f64]) -> Result<f64, MlpError> {
    model.predict(features)
}

/// Worst relative disagreement between the analytic gradient and central
/// finite differences with step `h`. Components where both are below
/// `floor` in magnitude are compared against `floor` instead.
pub fn gradient_check(model: &MlpModel, data: &Dataset, h: f64, floor: f64) -> Result<f64, MlpError> {
    let (_, grad) = model.loss_and_gradient(data)?;
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for k in 0..grad.len() {
        let orig = model.params[k];
        probe.params[k] = orig + h;
        let up = probe.loss(data)?;
        probe.params[k] = orig - h;
        let down = probe.loss(data)?;
        probe.params[k] = orig;
        let fd = (up - down) / (2.0 * h);
        let denom = grad[k].abs().max(fd.abs()).max(floor);
        worst = worst.max((grad[k] - fd).abs() / denom);
    }
    Ok(worst)
}
